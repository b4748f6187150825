//! One-hidden-layer parameter network and its ACCRUE training loop.
//!
//! The network maps standardized inputs to the log of the distribution
//! parameters: `theta = exp(clamp(leaky(W2 relu(W1 x + b1) + b2)))`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Dataset, Partition, SplitDataset};
use crate::distributions::{DistributionFamily, DistributionParams};
use crate::error::{Error, Result};
use crate::scoring::{
    cdf_with_grad, crps_with_grad, rs_uniform_slope, rs_uniform_unchecked, sort_pit, BetaWeight,
    ScorePair,
};
use crate::seed::seeded_rng;

pub const HIDDEN_UNITS: usize = 10;
/// Bound on the pre-exponent output, so parameters stay in `[e^-20, e^20]`.
pub const OUTPUT_CLAMP: f64 = 20.0;
const STD_FLOOR: f64 = 1e-8;
const IMPROVEMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    d_in: usize,
    hidden: usize,
    n_out: usize,
    /// `hidden x d_in`, row-major
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `n_out x hidden`, row-major
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl NetworkWeights {
    pub fn zeros(d_in: usize, hidden: usize, n_out: usize) -> Self {
        NetworkWeights {
            d_in,
            hidden,
            n_out,
            w1: vec![0.0; hidden * d_in],
            b1: vec![0.0; hidden],
            w2: vec![0.0; n_out * hidden],
            b2: vec![0.0; n_out],
        }
    }

    /// Fan-scaled uniform initialization with zero biases.
    pub fn init<R: Rng + ?Sized>(d_in: usize, n_out: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(d_in, HIDDEN_UNITS, n_out);
        let a1 = (6.0 / (d_in + HIDDEN_UNITS) as f64).sqrt();
        for v in &mut w.w1 {
            *v = rng.random_range(-a1..a1);
        }
        let a2 = (6.0 / (HIDDEN_UNITS + n_out) as f64).sqrt();
        for v in &mut w.w2 {
            *v = rng.random_range(-a2..a2);
        }
        w
    }

    pub fn from_parts(
        d_in: usize,
        hidden: usize,
        n_out: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        let expect = [
            (w1.len(), hidden * d_in),
            (b1.len(), hidden),
            (w2.len(), n_out * hidden),
            (b2.len(), n_out),
        ];
        for (got, expected) in expect {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        if !(1..=2).contains(&n_out) || d_in == 0 || hidden == 0 {
            return Err(Error::InvalidParameter(format!(
                "bad layer sizes {d_in}x{hidden}x{n_out}"
            )));
        }
        let w = NetworkWeights {
            d_in,
            hidden,
            n_out,
            w1,
            b1,
            w2,
            b2,
        };
        if !w.is_finite() {
            return Err(Error::NonFinite("network weight".into()));
        }
        Ok(w)
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.d_in, self.hidden, self.n_out)
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.slices().into_iter().flatten().copied()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.slices_mut().into_iter().flatten()
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    fn check_family(&self, family: DistributionFamily) -> Result<()> {
        if !family.is_learnable() {
            return Err(Error::InvalidParameter(format!("{family} is not learnable")));
        }
        if family.arity() != self.n_out {
            return Err(Error::DimensionMismatch {
                expected: family.arity(),
                got: self.n_out,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub leaky_slope: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.005,
            batch_size: 100,
            max_epochs: 1000,
            patience: 10,
            leaky_slope: 0.3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning_rate must be > 0".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidParameter("batch_size must be >= 2".into()));
        }
        if self.patience < 1 {
            return Err(Error::InvalidParameter("patience must be >= 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::InvalidParameter("max_epochs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainingConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Per-feature affine standardization fitted on training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::LengthMismatch {
                left: mean.len(),
                right: std.len(),
            });
        }
        if std.iter().any(|&s| !(s >= STD_FLOOR && s.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "standardizer std must be >= {STD_FLOOR}"
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("standardizer mean".into()));
        }
        Ok(Standardizer { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("standardizer data"));
        }
        let d = data.dim();
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        for r in data.records() {
            for (m, x) in mean.iter_mut().zip(&r.x) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in data.records() {
            for ((v, x), m) in var.iter_mut().zip(&r.x).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect())
    }
}

/// Standardized inputs and errors ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    dim: usize,
    inputs: Vec<f64>,
    errors: Vec<f64>,
}

impl Batch {
    pub fn new(dim: usize, inputs: Vec<f64>, errors: Vec<f64>) -> Result<Self> {
        if dim == 0 || inputs.len() != dim * errors.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * errors.len(),
                got: inputs.len(),
            });
        }
        Ok(Batch {
            dim,
            inputs,
            errors,
        })
    }

    pub fn from_dataset(data: &Dataset, standardizer: &Standardizer) -> Result<Self> {
        let mut inputs = Vec::with_capacity(data.len() * data.dim());
        for r in data.records() {
            inputs.extend(standardizer.apply(&r.x)?);
        }
        Batch::new(data.dim(), inputs, data.errors())
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.dim..(k + 1) * self.dim]
    }

    /// Copies the rows `idx` into `out`, reusing its buffers.
    pub fn gather_into(&self, idx: &[usize], out: &mut Batch) {
        out.dim = self.dim;
        out.inputs.clear();
        out.errors.clear();
        for &k in idx {
            out.inputs.extend_from_slice(self.input(k));
            out.errors.push(self.errors[k]);
        }
    }
}

#[inline]
fn leaky(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        slope * z
    }
}

/// Parameters for one standardized input, written into `hidden`, plus the
/// derivative of each parameter with respect to its output pre-activation.
#[inline]
fn forward_into(
    w: &NetworkWeights,
    x: &[f64],
    slope: f64,
    hidden: &mut [f64],
) -> ([f64; 2], [f64; 2]) {
    let d = w.d_in;
    for (j, h) in hidden.iter_mut().enumerate() {
        let row = &w.w1[j * d..(j + 1) * d];
        let pre = w.b1[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        *h = pre.max(0.0);
    }
    let mut theta = [1.0; 2];
    let mut dtheta_dz = [0.0; 2];
    for o in 0..w.n_out {
        let row = &w.w2[o * w.hidden..(o + 1) * w.hidden];
        let z = w.b2[o] + row.iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>();
        let a = leaky(z, slope);
        let clamped = a.clamp(-OUTPUT_CLAMP, OUTPUT_CLAMP);
        theta[o] = clamped.exp();
        let active = a > -OUTPUT_CLAMP && a < OUTPUT_CLAMP;
        dtheta_dz[o] = if active {
            theta[o] * if z > 0.0 { 1.0 } else { slope }
        } else {
            0.0
        };
    }
    (theta, dtheta_dz)
}

/// Distribution parameters predicted for one standardized input.
pub fn forward(
    w: &NetworkWeights,
    family: DistributionFamily,
    x_std: &[f64],
    leaky_slope: f64,
) -> Result<DistributionParams> {
    w.check_family(family)?;
    if x_std.len() != w.d_in {
        return Err(Error::DimensionMismatch {
            expected: w.d_in,
            got: x_std.len(),
        });
    }
    let mut hidden = vec![0.0; w.hidden];
    let (theta, _) = forward_into(w, x_std, leaky_slope, &mut hidden);
    DistributionParams::new(family, &theta[..family.arity()])
}

/// Scratch buffers for loss and gradient evaluation.
#[derive(Debug, Default)]
struct Workspace {
    hidden: Vec<f64>,
    theta: Vec<[f64; 2]>,
    dtheta_dz: Vec<[f64; 2]>,
    crps_grad: Vec<[f64; 2]>,
    cdf_grad: Vec<[f64; 2]>,
    pit: Vec<f64>,
}

struct Evaluation {
    scores: ScorePair,
    loss: f64,
}

fn check_batch(w: &NetworkWeights, batch: &Batch, family: DistributionFamily) -> Result<()> {
    w.check_family(family)?;
    if batch.dim() != w.d_in {
        return Err(Error::DimensionMismatch {
            expected: w.d_in,
            got: batch.dim(),
        });
    }
    if batch.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "batch of {} rows is too small for a reliability score",
            batch.len()
        )));
    }
    Ok(())
}

// Forward pass over the batch; fills the workspace and returns the scores.
fn evaluate(
    w: &NetworkWeights,
    batch: &Batch,
    family: DistributionFamily,
    beta: BetaWeight,
    slope: f64,
    want_grad: bool,
    ws: &mut Workspace,
) -> Evaluation {
    let n = batch.len();
    ws.hidden.resize(w.hidden * n, 0.0);
    ws.theta.clear();
    ws.dtheta_dz.clear();
    ws.crps_grad.clear();
    ws.cdf_grad.clear();
    ws.pit.clear();
    let mut crps_sum = 0.0;
    for k in 0..n {
        let hidden = &mut ws.hidden[k * w.hidden..(k + 1) * w.hidden];
        let (theta, dtheta) = forward_into(w, batch.input(k), slope, hidden);
        let eps = batch.errors[k];
        if want_grad {
            let (c, dc) = crps_with_grad(family, eps, theta);
            let (u, du) = cdf_with_grad(family, eps, theta);
            crps_sum += c;
            ws.pit.push(u);
            ws.crps_grad.push(dc);
            ws.cdf_grad.push(du);
        } else {
            crps_sum += crate::scoring::crps_generic(family, eps, theta);
            ws.pit.push(crate::distributions::cdf_generic(family, eps, theta));
        }
        ws.theta.push(theta);
        ws.dtheta_dz.push(dtheta);
    }
    let crps_mean = crps_sum / n as f64;
    let pit = sort_pit(std::mem::take(&mut ws.pit));
    let rs = rs_uniform_unchecked(&pit.values);
    // keep the sorted values and ordering around for the backward pass
    ws.pit = pit.values;
    if want_grad {
        // reuse cdf_grad slots to hold d(loss)/d(theta) after the backward pass
        let b = beta.value();
        let mut rs_slope = vec![0.0; n];
        for (rank, &k) in pit.order.iter().enumerate() {
            rs_slope[k] = rs_uniform_slope(ws.pit[rank], rank, n);
        }
        for k in 0..n {
            let dc = ws.crps_grad[k];
            let du = ws.cdf_grad[k];
            let s = rs_slope[k];
            ws.cdf_grad[k] = [
                b / n as f64 * dc[0] + (1.0 - b) * s * du[0],
                b / n as f64 * dc[1] + (1.0 - b) * s * du[1],
            ];
        }
    }
    let scores = ScorePair {
        crps_mean,
        rs,
    };
    let loss = beta.value() * crps_mean + (1.0 - beta.value()) * rs;
    Evaluation { scores, loss }
}

fn backward(
    w: &NetworkWeights,
    batch: &Batch,
    ws: &Workspace,
    grad: &mut NetworkWeights,
) {
    let (d, hsz) = (w.d_in, w.hidden);
    grad.values_mut().for_each(|g| *g = 0.0);
    let mut dh = vec![0.0; hsz];
    for k in 0..batch.len() {
        let hidden = &ws.hidden[k * hsz..(k + 1) * hsz];
        let dtheta = ws.cdf_grad[k];
        dh.iter_mut().for_each(|v| *v = 0.0);
        for o in 0..w.n_out {
            let dz = dtheta[o] * ws.dtheta_dz[k][o];
            if dz == 0.0 {
                continue;
            }
            grad.b2[o] += dz;
            let row = o * hsz;
            for j in 0..hsz {
                grad.w2[row + j] += dz * hidden[j];
                dh[j] += w.w2[row + j] * dz;
            }
        }
        let x = batch.input(k);
        for j in 0..hsz {
            // relu output > 0 iff its pre-activation > 0
            if hidden[j] > 0.0 {
                let dpre = dh[j];
                grad.b1[j] += dpre;
                for i in 0..d {
                    grad.w1[j * d + i] += dpre * x[i];
                }
            }
        }
    }
}

/// Mean CRPS and reliability score of the network's predictions on `batch`.
pub fn score_batch(
    w: &NetworkWeights,
    batch: &Batch,
    family: DistributionFamily,
    leaky_slope: f64,
) -> Result<ScorePair> {
    check_batch(w, batch, family)?;
    let half = BetaWeight::new(0.5).expect("0.5 is a valid weight");
    let mut ws = Workspace::default();
    Ok(evaluate(w, batch, family, half, leaky_slope, false, &mut ws).scores)
}

/// ACCRUE loss of the network on `batch`.
pub fn accrue_batch_loss(
    w: &NetworkWeights,
    batch: &Batch,
    family: DistributionFamily,
    beta: BetaWeight,
    leaky_slope: f64,
) -> Result<f64> {
    check_batch(w, batch, family)?;
    let mut ws = Workspace::default();
    Ok(evaluate(w, batch, family, beta, leaky_slope, false, &mut ws).loss)
}

/// Exact gradient of [`accrue_batch_loss`] with the PIT ordering held fixed.
pub fn accrue_gradient(
    w: &NetworkWeights,
    batch: &Batch,
    family: DistributionFamily,
    beta: BetaWeight,
    leaky_slope: f64,
) -> Result<(f64, NetworkWeights)> {
    check_batch(w, batch, family)?;
    let mut ws = Workspace::default();
    let mut grad = w.zeros_like();
    let eval = evaluate(w, batch, family, beta, leaky_slope, true, &mut ws);
    backward(w, batch, &ws, &mut grad);
    Ok((eval.loss, grad))
}

struct Adam {
    m: NetworkWeights,
    v: NetworkWeights,
    step: i32,
}

impl Adam {
    fn new(w: &NetworkWeights) -> Self {
        Adam {
            m: w.zeros_like(),
            v: w.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, w: &mut NetworkWeights, grad: &NetworkWeights, cfg: &TrainingConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.adam_beta1.powi(self.step);
        let c2 = 1.0 - cfg.adam_beta2.powi(self.step);
        let params = w.values_mut();
        let moments = self.m.values_mut().zip(self.v.values_mut());
        for ((p, g), (m, v)) in params.zip(grad.values()).zip(moments) {
            *m = cfg.adam_beta1 * *m + (1.0 - cfg.adam_beta1) * g;
            *v = cfg.adam_beta2 * *v + (1.0 - cfg.adam_beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct TrainedNetwork {
    pub weights: NetworkWeights,
    pub standardizer: Standardizer,
    /// Validation ACCRUE loss after each epoch.
    pub history: Vec<f64>,
    pub best_epoch: usize,
}

impl TrainedNetwork {
    pub fn best_loss(&self) -> f64 {
        self.history[self.best_epoch]
    }
}

/// Trains a fresh network on the training partition with early stopping on
/// the validation partition. Inputs are standardized with training statistics.
pub fn train(
    split: &SplitDataset,
    family: DistributionFamily,
    beta: BetaWeight,
    cfg: &TrainingConfig,
) -> Result<TrainedNetwork> {
    let train_part = split.partition(Partition::Train);
    let val_part = split.partition(Partition::Validation);
    if train_part.is_empty() || val_part.is_empty() {
        return Err(Error::Empty("training or validation partition"));
    }
    let standardizer = Standardizer::fit(&train_part)?;
    let train_batch = Batch::from_dataset(&train_part, &standardizer)?;
    let val_batch = Batch::from_dataset(&val_part, &standardizer)?;
    let (weights, history, best_epoch) =
        train_batches(&train_batch, &val_batch, family, beta, cfg)?;
    Ok(TrainedNetwork {
        weights,
        standardizer,
        history,
        best_epoch,
    })
}

/// Training loop on already standardized data.
pub fn train_batches(
    train: &Batch,
    validation: &Batch,
    family: DistributionFamily,
    beta: BetaWeight,
    cfg: &TrainingConfig,
) -> Result<(NetworkWeights, Vec<f64>, usize)> {
    cfg.validate()?;
    if !family.is_learnable() {
        return Err(Error::InvalidParameter(format!("{family} is not learnable")));
    }
    if train.dim() != validation.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            got: validation.dim(),
        });
    }
    if train.len() < 2 || validation.len() < 2 {
        return Err(Error::InvalidParameter(
            "training and validation need at least two rows each".into(),
        ));
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut w = NetworkWeights::init(train.dim(), family.arity(), &mut rng);
    let mut grad = w.zeros_like();
    let mut adam = Adam::new(&w);
    let mut ws = Workspace::default();
    let mut mini = Batch::new(train.dim(), Vec::new(), Vec::new())?;
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut history = Vec::new();
    let mut best = (f64::INFINITY, w.clone(), 0usize);
    let mut stale = 0;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            train.gather_into(chunk, &mut mini);
            let eval = evaluate(&w, &mini, family, beta, cfg.leaky_slope, true, &mut ws);
            if !eval.loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite mini-batch loss in epoch {epoch}"
                )));
            }
            backward(&w, &mini, &ws, &mut grad);
            adam.update(&mut w, &grad, cfg);
            if !w.is_finite() {
                return Err(Error::Training(format!(
                    "weights diverged in epoch {epoch}"
                )));
            }
        }
        let val_loss =
            evaluate(&w, validation, family, beta, cfg.leaky_slope, false, &mut ws).loss;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite validation loss in epoch {epoch}"
            )));
        }
        history.push(val_loss);
        if val_loss < best.0 - IMPROVEMENT_TOL {
            best = (val_loss, w.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.1, history, best.2))
}
