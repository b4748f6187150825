//! End-to-end calibration protocol: grid search for the accuracy weight,
//! ensemble training, median-member selection, family selection, and
//! interval prediction / verification for the selected member.

use rayon::prelude::*;

use crate::data::{split, Dataset, Partition};
use crate::distributions::{DistributionFamily, DistributionParams};
use crate::error::{Error, Result};
use crate::neural::{self, NetworkWeights, Standardizer, TrainingConfig};
use crate::scoring::{self, accrue_loss, BetaWeight, ScorePair};
use crate::seed::{derive_seed, Stream};
use crate::synthetic::{generate, Scenario};

/// Candidate accuracy weights searched by [`beta_search`].
pub fn beta_grid() -> [BetaWeight; 9] {
    std::array::from_fn(|i| BetaWeight::new((i + 1) as f64 / 10.0).expect("grid inside (0, 1)"))
}

/// Fractions for the grid-search split (train, validation).
pub const BETA_SPLIT: [f64; 2] = [0.8, 0.2];
/// Fractions for each ensemble member (train, validation, test).
pub const MEMBER_SPLIT: [f64; 3] = [0.64, 0.16, 0.20];

/// A trained ensemble member.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationModel {
    pub family: DistributionFamily,
    pub beta_star: BetaWeight,
    pub weights: NetworkWeights,
    pub standardizer: Standardizer,
    pub leaky_slope: f64,
    pub seed: u64,
    pub test_loss: f64,
}

/// Median and central 50% / 95% intervals for one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalPrediction {
    pub x: Vec<f64>,
    pub m: f64,
    pub median: f64,
    pub lo50: f64,
    pub hi50: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl IntervalPrediction {
    pub fn is_ordered(&self) -> bool {
        self.lo95 <= self.lo50
            && self.lo50 <= self.median
            && self.median <= self.hi50
            && self.hi50 <= self.hi95
    }
}

/// Verification metrics of a model on one dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub n: usize,
    pub beta: f64,
    pub crps: f64,
    pub rs: f64,
    pub accrue: f64,
    pub mae: f64,
    pub coverage50: f64,
    pub coverage95: f64,
}

impl MetricsReport {
    /// Builds a report whose ACCRUE field is `beta * crps + (1 - beta) * rs`.
    pub fn from_scores(
        n: usize,
        beta: BetaWeight,
        scores: ScorePair,
        mae: f64,
        coverage50: f64,
        coverage95: f64,
    ) -> Self {
        MetricsReport {
            n,
            beta: beta.value(),
            crps: scores.crps_mean,
            rs: scores.rs,
            accrue: accrue_loss(scores, beta),
            mae,
            coverage50,
            coverage95,
        }
    }
}

impl CalibrationModel {
    pub fn input_dim(&self) -> usize {
        self.weights.d_in()
    }

    /// Error distribution predicted at raw input `x`.
    pub fn params_at(&self, x: &[f64]) -> Result<DistributionParams> {
        let x_std = self.standardizer.apply(x)?;
        neural::forward(&self.weights, self.family, &x_std, self.leaky_slope)
    }

    pub fn predict_intervals(&self, x: &[f64], m: f64) -> Result<IntervalPrediction> {
        let d = self.params_at(x)?;
        let q = |p: f64| d.quantile(p).map(|e| m + e);
        let pred = IntervalPrediction {
            x: x.to_vec(),
            m,
            median: q(0.5)?,
            lo50: q(0.25)?,
            hi50: q(0.75)?,
            lo95: q(0.025)?,
            hi95: q(0.975)?,
        };
        debug_assert!(pred.is_ordered());
        Ok(pred)
    }

    /// Metrics on `data`. RS is taken over the whole set and coverage counts
    /// closed intervals.
    pub fn evaluate(&self, data: &Dataset) -> Result<MetricsReport> {
        if data.is_empty() {
            return Err(Error::Empty("evaluation data"));
        }
        if data.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: data.dim(),
            });
        }
        let n = data.len();
        let mut crps_sum = 0.0;
        let mut abs_sum = 0.0;
        let mut pit = Vec::with_capacity(n);
        let (mut in50, mut in95) = (0usize, 0usize);
        for r in data.records() {
            let d = self.params_at(&r.x)?;
            crps_sum += scoring::crps(&d, r.eps)?;
            pit.push(d.cdf(r.eps)?);
            abs_sum += (r.y - r.m).abs();
            let iv = self.predict_intervals(&r.x, r.m)?;
            if iv.lo50 <= r.y && r.y <= iv.hi50 {
                in50 += 1;
            }
            if iv.lo95 <= r.y && r.y <= iv.hi95 {
                in95 += 1;
            }
        }
        pit.sort_by(f64::total_cmp);
        let nf = n as f64;
        let scores = ScorePair::new(crps_sum / nf, scoring::reliability_score_uniform(&pit)?)?;
        Ok(MetricsReport::from_scores(
            n,
            self.beta_star,
            scores,
            abs_sum / nf,
            in50 as f64 / nf,
            in95 as f64 / nf,
        ))
    }

    /// ACCRUE loss at this model's weight on `data`.
    pub fn loss_on(&self, data: &Dataset) -> Result<f64> {
        Ok(self.evaluate(data)?.accrue)
    }
}

/// One cell of the accuracy-weight grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaCell {
    pub beta: BetaWeight,
    /// Scores on the held-out 20% partition; these drive the selection.
    pub validation: ScorePair,
    /// In-sample scores on the 80% training partition.
    pub training: ScorePair,
}

impl BetaCell {
    pub fn distance(&self) -> f64 {
        self.validation.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaSearchResult {
    pub beta: BetaWeight,
    pub cells: Vec<BetaCell>,
}

/// Returns the weight whose cell is closest to the origin in (CRPS, RS);
/// ties go to the smaller weight.
pub fn select_beta(cells: &[BetaCell]) -> Result<BetaWeight> {
    let mut best: Option<(f64, BetaWeight)> = None;
    for c in cells {
        let dist = c.distance();
        if best.is_none_or(|(d, _)| dist < d) {
            best = Some((dist, c.beta));
        }
    }
    best.map(|(_, b)| b).ok_or(Error::Empty("beta grid"))
}

/// Grid search over [`beta_grid`]: every cell trains one network on the same
/// 80/20 split and is scored on the validation part.
pub fn beta_search(
    data: &Dataset,
    family: DistributionFamily,
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<BetaSearchResult> {
    let parts = split(data, &BETA_SPLIT, derive_seed(seed, Stream::BetaSplit, 0))?;
    let train_cfg = cfg.with_seed(derive_seed(seed, Stream::BetaInit, 0));
    let cells = beta_grid()
        .par_iter()
        .map(|&beta| {
            let net = neural::train(&parts, family, beta, &train_cfg).map_err(|e| {
                Error::Training(format!("beta {:.1}: {e}", beta.value()))
            })?;
            let score = |which| {
                let batch = neural::Batch::from_dataset(&parts.partition(which), &net.standardizer)?;
                neural::score_batch(&net.weights, &batch, family, cfg.leaky_slope)
            };
            Ok(BetaCell {
                beta,
                validation: score(Partition::Validation)?,
                training: score(Partition::Train)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BetaSearchResult {
        beta: select_beta(&cells)?,
        cells,
    })
}

/// Where ensemble members get their data.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Every member draws a fresh synthetic dataset of `n` pairs.
    Synthetic { scenario: Scenario, n: usize },
    /// Fixed data: members resample train/validation from `pool`; `test` is
    /// the shared held-out partition.
    Fixed { pool: Dataset, test: Dataset },
}

impl DataSource {
    /// Holds out 20% of `data` as the shared test partition.
    pub fn fixed(data: &Dataset, seed: u64) -> Result<Self> {
        let parts = split(data, &[0.8, 0.2], derive_seed(seed, Stream::HoldOut, 0))?;
        Ok(DataSource::Fixed {
            pool: parts.partition(Partition::Train),
            test: parts.partition(Partition::Validation),
        })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            DataSource::Synthetic { .. } => 1,
            DataSource::Fixed { pool, .. } => pool.dim(),
        }
    }
}

fn train_member(
    source: &DataSource,
    family: DistributionFamily,
    beta: BetaWeight,
    cfg: &TrainingConfig,
    base_seed: u64,
    index: u64,
) -> Result<CalibrationModel> {
    let init_seed = derive_seed(base_seed, Stream::MemberInit, index);
    let split_seed = derive_seed(base_seed, Stream::MemberSplit, index);
    let (parts, test) = match source {
        DataSource::Synthetic { scenario, n } => {
            let data = generate(*scenario, *n, derive_seed(base_seed, Stream::MemberData, index))?;
            let parts = split(&data, &MEMBER_SPLIT, split_seed)?;
            let test = parts.partition(Partition::Test);
            (parts, test)
        }
        DataSource::Fixed { pool, test } => {
            // 80/20 of the pool is 64/16 of the whole set
            (split(pool, &[0.8, 0.2], split_seed)?, test.clone())
        }
    };
    let net = neural::train(&parts, family, beta, &cfg.with_seed(init_seed))?;
    let mut model = CalibrationModel {
        family,
        beta_star: beta,
        weights: net.weights,
        standardizer: net.standardizer,
        leaky_slope: cfg.leaky_slope,
        seed: init_seed,
        test_loss: f64::NAN,
    };
    model.test_loss = model.loss_on(&test)?;
    Ok(model)
}

/// Trains `n_members` independent members; results are in member order.
pub fn train_ensemble(
    source: &DataSource,
    family: DistributionFamily,
    beta: BetaWeight,
    n_members: usize,
    cfg: &TrainingConfig,
    base_seed: u64,
) -> Result<Vec<CalibrationModel>> {
    if n_members == 0 {
        return Err(Error::InvalidParameter("ensemble needs at least one member".into()));
    }
    (0..n_members as u64)
        .into_par_iter()
        .map(|i| {
            train_member(source, family, beta, cfg, base_seed, i)
                .map_err(|e| Error::Training(format!("member {i}: {e}")))
        })
        .collect()
}

/// Member with the lower-median test loss (index `ceil(n/2) - 1` after a
/// stable sort).
pub fn select_median_member(models: &[CalibrationModel]) -> Result<&CalibrationModel> {
    if models.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&a, &b| models[a].test_loss.total_cmp(&models[b].test_loss));
    Ok(&models[order[models.len().div_ceil(2) - 1]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySelection {
    pub chosen: CalibrationModel,
    pub losses: Vec<(DistributionFamily, f64)>,
    /// Losses were equal and the heavier-tailed family won by rule.
    pub tie: bool,
}

/// Picks the model with the smaller test loss; exact ties go to the
/// asymmetric Laplace model.
pub fn select_family(a: &CalibrationModel, b: &CalibrationModel) -> FamilySelection {
    let losses = vec![(a.family, a.test_loss), (b.family, b.test_loss)];
    let tie = a.test_loss == b.test_loss;
    let chosen = if tie {
        if b.family == DistributionFamily::AsymmetricLaplace {
            b
        } else {
            a
        }
    } else if b.test_loss < a.test_loss {
        b
    } else {
        a
    };
    FamilySelection {
        chosen: chosen.clone(),
        losses,
        tie,
    }
}

/// Settings for a full protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub members: usize,
    /// Size of the shared synthetic test set used for median selection.
    pub test_n: usize,
    pub training: TrainingConfig,
    pub seed: u64,
    /// Skip the grid search and use this weight.
    pub beta_override: Option<BetaWeight>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            members: 100,
            test_n: 2000,
            training: TrainingConfig::default(),
            seed: 0,
            beta_override: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub family: DistributionFamily,
    pub beta_search: Option<BetaSearchResult>,
    pub beta: BetaWeight,
    /// Members with test losses on the shared test set.
    pub members: Vec<CalibrationModel>,
    pub median: CalibrationModel,
    pub test_set: Dataset,
    pub metrics: MetricsReport,
}

/// Grid search, ensemble, median selection and test metrics for one family.
pub fn run_protocol(
    source: &DataSource,
    family: DistributionFamily,
    cfg: &ProtocolConfig,
) -> Result<ProtocolOutcome> {
    if !family.is_learnable() {
        return Err(Error::InvalidParameter(format!("{family} is not learnable")));
    }
    let (beta, beta_search) = match cfg.beta_override {
        Some(b) => (b, None),
        None => {
            let data = match source {
                DataSource::Synthetic { scenario, n } => {
                    generate(*scenario, *n, derive_seed(cfg.seed, Stream::BetaData, 0))?
                }
                DataSource::Fixed { pool, .. } => pool.clone(),
            };
            let result = beta_search(&data, family, &cfg.training, cfg.seed)?;
            (result.beta, Some(result))
        }
    };
    let mut members = train_ensemble(source, family, beta, cfg.members, &cfg.training, cfg.seed)?;
    let test_set = match source {
        DataSource::Synthetic { scenario, .. } => {
            generate(*scenario, cfg.test_n, derive_seed(cfg.seed, Stream::SharedTest, 0))?
        }
        DataSource::Fixed { test, .. } => test.clone(),
    };
    if let DataSource::Synthetic { .. } = source {
        let losses = members
            .par_iter()
            .map(|m| m.loss_on(&test_set))
            .collect::<Result<Vec<_>>>()?;
        for (m, loss) in members.iter_mut().zip(losses) {
            m.test_loss = loss;
        }
    }
    let median = select_median_member(&members)?.clone();
    let metrics = median.evaluate(&test_set)?;
    Ok(ProtocolOutcome {
        family,
        beta_search,
        beta,
        members,
        median,
        test_set,
        metrics,
    })
}

#[derive(Debug, Clone)]
pub struct AutoOutcome {
    pub tpg: ProtocolOutcome,
    pub al: ProtocolOutcome,
    pub selection: FamilySelection,
}

/// Runs the protocol for both skewed families and keeps the one with the
/// smaller median test loss.
pub fn run_auto(source: &DataSource, cfg: &ProtocolConfig) -> Result<AutoOutcome> {
    let tpg = run_protocol(source, DistributionFamily::TwoPieceGaussian, cfg)?;
    let al = run_protocol(source, DistributionFamily::AsymmetricLaplace, cfg)?;
    let selection = select_family(&tpg.median, &al.median);
    Ok(AutoOutcome { tpg, al, selection })
}
