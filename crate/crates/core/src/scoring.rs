//! Proper scoring of the error distributions: closed-form CRPS for each
//! family, the reliability score of PIT values, and their ACCRUE blend.

use std::f64::consts::{PI, SQRT_2};

use crate::distributions::{cdf_generic, DistributionFamily, DistributionParams, EXP_CLAMP};
use crate::dual::{Dual, Real};
use crate::error::{ensure_finite, Error, Result};
use crate::special::{erfc, erfinv, FRAC_1_SQRT_2PI, FRAC_1_SQRT_PI};

/// Mean CRPS and reliability score of one set of predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePair {
    pub crps_mean: f64,
    pub rs: f64,
}

impl ScorePair {
    pub fn new(crps_mean: f64, rs: f64) -> Result<Self> {
        for (v, name) in [(crps_mean, "crps_mean"), (rs, "rs")] {
            ensure_finite(v, name)?;
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} = {v} is negative")));
            }
        }
        Ok(ScorePair { crps_mean, rs })
    }

    /// Euclidean distance to the origin in (CRPS, RS) space.
    pub fn norm(&self) -> f64 {
        self.crps_mean.hypot(self.rs)
    }
}

/// Accuracy weight, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BetaWeight(f64);

impl BetaWeight {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(BetaWeight(value))
        } else {
            Err(Error::Domain {
                value,
                domain: "(0, 1)",
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `beta * crps + (1 - beta) * rs`.
pub fn accrue_loss(s: ScorePair, beta: BetaWeight) -> f64 {
    let b = beta.value();
    b * s.crps_mean + (1.0 - b) * s.rs
}

fn check_scale(v: f64, name: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be positive")))
    }
}

/// Closed-form CRPS of a zero-mean Gaussian at error `eps`.
pub fn gaussian_crps(eps: f64, sigma: f64) -> Result<f64> {
    ensure_finite(eps, "eps")?;
    check_scale(sigma, "sigma")?;
    Ok(gaussian_crps_generic(eps, sigma))
}

/// Closed-form CRPS of the two-piece Gaussian with left scale `sigma1` and
/// right scale `sigma2`.
pub fn tpg_crps(eps: f64, sigma1: f64, sigma2: f64) -> Result<f64> {
    ensure_finite(eps, "eps")?;
    check_scale(sigma1, "sigma1")?;
    check_scale(sigma2, "sigma2")?;
    Ok(tpg_crps_generic(eps, sigma1, sigma2))
}

/// Closed-form CRPS of the asymmetric Laplace with rate `lambda` and
/// asymmetry `kappa`.
pub fn al_crps(eps: f64, lambda: f64, kappa: f64) -> Result<f64> {
    ensure_finite(eps, "eps")?;
    check_scale(lambda, "lambda")?;
    check_scale(kappa, "kappa")?;
    Ok(al_crps_generic(eps, lambda, kappa))
}

/// CRPS dispatched on the distribution family.
pub fn crps(d: &DistributionParams, eps: f64) -> Result<f64> {
    ensure_finite(eps, "eps")?;
    if !d.family().is_learnable() {
        return Err(Error::InvalidParameter(format!(
            "no closed-form CRPS for {}",
            d.family()
        )));
    }
    let [a, b] = d.raw();
    Ok(crps_generic(d.family(), eps, [a, b]))
}

pub(crate) fn crps_generic<T: Real>(family: DistributionFamily, eps: f64, p: [T; 2]) -> T {
    match family {
        DistributionFamily::Gaussian => gaussian_crps_generic(eps, p[0]),
        DistributionFamily::TwoPieceGaussian => tpg_crps_generic(eps, p[0], p[1]),
        DistributionFamily::AsymmetricLaplace => al_crps_generic(eps, p[0], p[1]),
        DistributionFamily::Gamma => unreachable!("gamma is not a learnable family"),
    }
}

/// CRPS and its gradient with respect to the family parameters.
pub(crate) fn crps_with_grad(family: DistributionFamily, eps: f64, p: [f64; 2]) -> (f64, [f64; 2]) {
    let r = crps_generic(family, eps, [Dual::var(p[0], 0), Dual::var(p[1], 1)]);
    (r.v, r.d)
}

/// CDF and its gradient with respect to the family parameters.
pub(crate) fn cdf_with_grad(family: DistributionFamily, eps: f64, p: [f64; 2]) -> (f64, [f64; 2]) {
    let r = cdf_generic(family, eps, [Dual::var(p[0], 0), Dual::var(p[1], 1)]);
    (r.v, r.d)
}

// z * Phi(z) + phi(z) for the standard normal.
fn normal_partial_moment<T: Real>(z: T) -> T {
    let cdf = (z * (-1.0 / SQRT_2)).erfc() * 0.5;
    let pdf = (z * z * -0.5).exp() * FRAC_1_SQRT_2PI;
    z * cdf + pdf
}

fn gaussian_crps_generic<T: Real>(eps: f64, sigma: T) -> T {
    let z = sigma.recip() * eps;
    // sigma * [z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)]
    sigma * ((normal_partial_moment(z) * 2.0 - z) - FRAC_1_SQRT_PI)
}

fn tpg_crps_generic<T: Real>(eps: f64, s1: T, s2: T) -> T {
    let total = s1 + s2;
    let total_sq = total * total;
    let cubes = s1 * s1 * s1 + s2 * s2 * s2;
    let two_over_sqrt_pi = 2.0 * FRAC_1_SQRT_PI;
    if eps <= 0.0 {
        let z = s1.recip() * eps;
        s1 * s1 * 4.0 / total * normal_partial_moment(z) - eps
            + (s2 * (s2 * s2 - s1 * s1) * SQRT_2 - cubes) / total_sq * two_over_sqrt_pi
    } else {
        let z = s2.recip() * eps;
        let diff = s1 - s2;
        s2 * s2 * 4.0 / total * normal_partial_moment(z)
            + (diff * diff - s2 * s2 * 4.0) / total_sq * eps
            + (s1 * (s1 * s1 - s2 * s2) * SQRT_2 - cubes) / total_sq * two_over_sqrt_pi
    }
}

fn al_crps_generic<T: Real>(eps: f64, lambda: T, kappa: T) -> T {
    let k2 = kappa * kappa;
    let one_k2 = k2 + 1.0;
    let tail = (kappa * k2 * k2) / (lambda * one_k2 * one_k2 * 2.0)
        + (lambda * kappa * one_k2 * one_k2 * 2.0).recip();
    if eps <= 0.0 {
        let arg = (lambda / kappa * eps).clamp_value(-EXP_CLAMP, EXP_CLAMP);
        (kappa * k2 * 2.0) / (lambda * one_k2) * (arg.exp() - 1.0) + tail + eps.abs()
    } else {
        let arg = (-(lambda * kappa) * eps).clamp_value(-EXP_CLAMP, EXP_CLAMP);
        (lambda * kappa * one_k2).recip() * 2.0 * (arg.exp() - 1.0) + tail + eps.abs()
    }
}

/// Arithmetic mean of per-pair CRPS values.
pub fn mean_crps(errors: &[f64], params: &[DistributionParams]) -> Result<f64> {
    if errors.len() != params.len() {
        return Err(Error::LengthMismatch {
            left: errors.len(),
            right: params.len(),
        });
    }
    if errors.is_empty() {
        return Err(Error::Empty("errors"));
    }
    let mut sum = 0.0;
    for (&e, d) in errors.iter().zip(params) {
        sum += crps(d, e)?;
    }
    Ok(sum / errors.len() as f64)
}

/// Reliability score of sorted PIT values against the standard uniform:
/// `integral_0^1 (u - C(u))^2 du` with `C` the empirical step CDF.
pub fn reliability_score_uniform(u_sorted: &[f64]) -> Result<f64> {
    if u_sorted.is_empty() {
        return Err(Error::Empty("u_sorted"));
    }
    for (i, &u) in u_sorted.iter().enumerate() {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain {
                value: u,
                domain: "[0, 1]",
            });
        }
        if i > 0 && u < u_sorted[i - 1] {
            return Err(Error::Unsorted(i));
        }
    }
    Ok(rs_uniform_unchecked(u_sorted))
}

pub(crate) fn rs_uniform_unchecked(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    let squares: f64 = u.iter().map(|v| v * v).sum();
    let steps: f64 = u
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let k = (i + 1) as f64;
            k * k * (w[1] - w[0])
        })
        .sum();
    let rs = 1.0 / 3.0 - u[u.len() - 1] + squares / n + steps / (n * n);
    rs.max(0.0)
}

/// Derivative of the uniform reliability score with respect to the `j`-th
/// smallest PIT value (0-based `rank`).
#[inline]
pub(crate) fn rs_uniform_slope(u: f64, rank: usize, n: usize) -> f64 {
    let n = n as f64;
    2.0 * u / n - (2.0 * rank as f64 + 1.0) / (n * n)
}

/// Reliability score of sorted standardized errors `eta = eps / (sqrt(2) sigma)`
/// against the Gaussian CDF `(1 + erf(eta)) / 2`.
pub fn gaussian_rs(eta_sorted: &[f64]) -> Result<f64> {
    if eta_sorted.is_empty() {
        return Err(Error::Empty("eta_sorted"));
    }
    for (i, &e) in eta_sorted.iter().enumerate() {
        ensure_finite(e, "eta")?;
        if i > 0 && e < eta_sorted[i - 1] {
            return Err(Error::Unsorted(i));
        }
    }
    let n = eta_sorted.len() as f64;
    let sum: f64 = eta_sorted
        .iter()
        .enumerate()
        .map(|(i, &eta)| {
            let rank = (2 * i + 1) as f64;
            eta / n * erfc(-eta) - eta * rank / (n * n) + (-eta * eta).exp() * FRAC_1_SQRT_PI / n
        })
        .sum();
    Ok(sum - 0.5 * (2.0 / PI).sqrt())
}

/// Sorted PIT values with the permutation that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Pit {
    /// PIT values in ascending order.
    pub values: Vec<f64>,
    /// `order[j]` is the input index of the `j`-th smallest value.
    pub order: Vec<usize>,
}

/// Map each error through its predictive CDF and sort ascending (stable).
pub fn pit_transform(errors: &[f64], params: &[DistributionParams]) -> Result<Pit> {
    if errors.len() != params.len() {
        return Err(Error::LengthMismatch {
            left: errors.len(),
            right: params.len(),
        });
    }
    let raw = errors
        .iter()
        .zip(params)
        .map(|(&e, d)| d.cdf(e))
        .collect::<Result<Vec<f64>>>()?;
    Ok(sort_pit(raw))
}

pub(crate) fn sort_pit(raw: Vec<f64>) -> Pit {
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let values = order.iter().map(|&i| raw[i]).collect();
    Pit { values, order }
}

/// Smallest attainable Gaussian reliability score for `n` errors.
pub fn gaussian_rs_min(n: usize) -> f64 {
    let nf = n as f64;
    let sum: f64 = (1..=n)
        .map(|i| {
            let eta = erfinv((2 * i - 1) as f64 / nf - 1.0);
            (-eta * eta).exp()
        })
        .sum();
    sum * FRAC_1_SQRT_PI / nf - 0.5 * (2.0 / PI).sqrt()
}

/// `sqrt(ln 4) / (2N) * sum(eps)`, summing the signed errors.
pub fn gaussian_crps_min(errors: &[f64]) -> f64 {
    let n = errors.len() as f64;
    4f64.ln().sqrt() / (2.0 * n) * errors.iter().sum::<f64>()
}

const HEURISTIC_CLIP: (f64, f64) = (0.01, 0.99);

/// `rs_min / (crps_min + rs_min)`, with a nonpositive `crps_min` lifted to
/// machine epsilon and the ratio clipped to `[0.01, 0.99]`.
pub fn beta_from_minima(crps_min: f64, rs_min: f64) -> BetaWeight {
    let crps_min = if crps_min > 0.0 { crps_min } else { f64::EPSILON };
    let rs_min = rs_min.max(0.0);
    let ratio = rs_min / (crps_min + rs_min);
    BetaWeight(ratio.clamp(HEURISTIC_CLIP.0, HEURISTIC_CLIP.1))
}

/// Closed-form weight for Gaussian calibration.
pub fn gaussian_beta_heuristic(errors: &[f64]) -> Result<BetaWeight> {
    if errors.is_empty() {
        return Err(Error::Empty("errors"));
    }
    if errors.len() < 2 {
        return Err(Error::InvalidParameter(
            "beta heuristic needs at least two errors".into(),
        ));
    }
    for &e in errors {
        ensure_finite(e, "error")?;
    }
    Ok(beta_from_minima(
        gaussian_crps_min(errors),
        gaussian_rs_min(errors.len()),
    ))
}
