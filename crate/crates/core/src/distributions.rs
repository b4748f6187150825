//! Error-distribution families centred on the point prediction.
//!
//! All densities are for the error `eps = y - m`, so the mode of every
//! learnable family sits at zero.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::dual::Real;
use crate::error::{ensure_finite, Error, Result};
use crate::special::{erfinv, gamma_p, ln_gamma, std_normal_quantile, FRAC_1_SQRT_2PI};

/// Smallest admissible distribution parameter.
pub const PARAM_FLOOR: f64 = 1e-12;

/// Exponent clamp used by the asymmetric Laplace closed forms.
pub(crate) const EXP_CLAMP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistributionFamily {
    Gaussian,
    TwoPieceGaussian,
    AsymmetricLaplace,
    /// Only used to generate misspecified data.
    Gamma,
}

impl DistributionFamily {
    pub const LEARNABLE: [DistributionFamily; 3] = [
        DistributionFamily::Gaussian,
        DistributionFamily::TwoPieceGaussian,
        DistributionFamily::AsymmetricLaplace,
    ];

    pub fn arity(self) -> usize {
        match self {
            DistributionFamily::Gaussian => 1,
            _ => 2,
        }
    }

    pub fn is_learnable(self) -> bool {
        self != DistributionFamily::Gamma
    }

    /// Short lowercase tag used in files and on the command line.
    pub fn tag(self) -> &'static str {
        match self {
            DistributionFamily::Gaussian => "gaussian",
            DistributionFamily::TwoPieceGaussian => "tpg",
            DistributionFamily::AsymmetricLaplace => "al",
            DistributionFamily::Gamma => "gamma",
        }
    }
}

impl fmt::Display for DistributionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DistributionFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(DistributionFamily::Gaussian),
            "tpg" | "two-piece-gaussian" => Ok(DistributionFamily::TwoPieceGaussian),
            "al" | "asymmetric-laplace" => Ok(DistributionFamily::AsymmetricLaplace),
            "gamma" => Ok(DistributionFamily::Gamma),
            other => Err(Error::InvalidParameter(format!("unknown family '{other}'"))),
        }
    }
}

/// A family together with its parameter vector.
///
/// Layout: Gaussian `[sigma]`, two-piece Gaussian `[sigma1, sigma2]`,
/// asymmetric Laplace `[lambda, kappa]`, gamma `[shape, rate]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionParams {
    family: DistributionFamily,
    values: [f64; 2],
}

impl DistributionParams {
    pub fn new(family: DistributionFamily, params: &[f64]) -> Result<Self> {
        if params.len() != family.arity() {
            return Err(Error::InvalidParameter(format!(
                "{family} expects {} parameter(s), got {}",
                family.arity(),
                params.len()
            )));
        }
        let mut values = [0.0; 2];
        for (slot, &p) in values.iter_mut().zip(params) {
            if !p.is_finite() || p < PARAM_FLOOR {
                return Err(Error::InvalidParameter(format!(
                    "{family} parameter {p} must be finite and >= {PARAM_FLOOR}"
                )));
            }
            *slot = p;
        }
        Ok(DistributionParams { family, values })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(DistributionFamily::Gaussian, &[sigma])
    }

    pub fn two_piece_gaussian(sigma1: f64, sigma2: f64) -> Result<Self> {
        Self::new(DistributionFamily::TwoPieceGaussian, &[sigma1, sigma2])
    }

    pub fn asymmetric_laplace(lambda: f64, kappa: f64) -> Result<Self> {
        Self::new(DistributionFamily::AsymmetricLaplace, &[lambda, kappa])
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::new(DistributionFamily::Gamma, &[shape, rate])
    }

    pub fn family(&self) -> DistributionFamily {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.values[..self.family.arity()]
    }

    pub(crate) fn raw(&self) -> [f64; 2] {
        self.values
    }

    /// Probability density of the error at `eps`.
    pub fn pdf(&self, eps: f64) -> Result<f64> {
        ensure_finite(eps, "eps")?;
        let [a, b] = self.values;
        let density = match self.family {
            DistributionFamily::Gaussian => FRAC_1_SQRT_2PI / a * (-0.5 * (eps / a).powi(2)).exp(),
            DistributionFamily::TwoPieceGaussian => {
                let side = if eps <= 0.0 { a } else { b };
                SQRT_2 / (PI.sqrt() * (a + b)) * (-eps * eps / (2.0 * side * side)).exp()
            }
            DistributionFamily::AsymmetricLaplace => {
                let (lambda, kappa) = (a, b);
                let norm = lambda / (kappa + 1.0 / kappa);
                let arg = if eps <= 0.0 {
                    lambda / kappa * eps
                } else {
                    -lambda * kappa * eps
                };
                norm * arg.max(-EXP_CLAMP).exp()
            }
            DistributionFamily::Gamma => gamma_pdf(a, b, eps),
        };
        Ok(density)
    }

    /// Cumulative distribution of the error at `eps`.
    pub fn cdf(&self, eps: f64) -> Result<f64> {
        ensure_finite(eps, "eps")?;
        Ok(match self.family {
            DistributionFamily::Gamma => gamma_p(self.values[0], self.values[1] * eps),
            family => cdf_generic(family, eps, self.values),
        })
    }

    /// Inverse CDF for `p` in the open unit interval.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain {
                value: p,
                domain: "(0, 1)",
            });
        }
        let [a, b] = self.values;
        Ok(match self.family {
            DistributionFamily::Gaussian => SQRT_2 * a * erfinv(2.0 * p - 1.0),
            DistributionFamily::TwoPieceGaussian => {
                let (s1, s2) = (a, b);
                let total = s1 + s2;
                if p <= s1 / total {
                    SQRT_2 * s1 * erfinv(p * total / s1 - 1.0)
                } else {
                    SQRT_2 * s2 * erfinv((p * total - s1) / s2)
                }
            }
            DistributionFamily::AsymmetricLaplace => {
                let (lambda, kappa) = (a, b);
                let k2 = kappa * kappa;
                if p <= k2 / (1.0 + k2) {
                    kappa / lambda * (p * (1.0 + k2) / k2).ln()
                } else {
                    -((1.0 - p) * (1.0 + k2)).ln() / (lambda * kappa)
                }
            }
            DistributionFamily::Gamma => gamma_quantile(a, b, p),
        })
    }

    /// Median of the error distribution.
    pub fn median(&self) -> f64 {
        self.quantile(0.5).expect("0.5 lies in (0, 1)")
    }

    /// Draw one error by inverse-CDF sampling (gamma uses rejection sampling).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            DistributionFamily::Gamma => sample_gamma_unchecked(self.values[0], self.values[1], rng),
            _ => self
                .quantile(open_unit(rng))
                .expect("open_unit yields p in (0, 1)"),
        }
    }
}

/// CDF shared by the learnable families, generic so it can be differentiated.
pub(crate) fn cdf_generic<T: Real>(family: DistributionFamily, eps: f64, p: [T; 2]) -> T {
    match family {
        DistributionFamily::Gaussian => {
            let sigma = p[0];
            (sigma.recip() * (-eps / SQRT_2)).erfc() * 0.5
        }
        DistributionFamily::TwoPieceGaussian => {
            let (s1, s2) = (p[0], p[1]);
            let total = s1 + s2;
            if eps <= 0.0 {
                s1 / total * (s1.recip() * (-eps / SQRT_2)).erfc()
            } else {
                -(s2 / total * (s2.recip() * (eps / SQRT_2)).erfc()) + 1.0
            }
        }
        DistributionFamily::AsymmetricLaplace => {
            let (lambda, kappa) = (p[0], p[1]);
            let k2 = kappa * kappa;
            if eps <= 0.0 {
                let arg = (lambda / kappa * eps).clamp_value(-EXP_CLAMP, EXP_CLAMP);
                k2 / (k2 + 1.0) * arg.exp()
            } else {
                let arg = (-(lambda * kappa) * eps).clamp_value(-EXP_CLAMP, EXP_CLAMP);
                -((k2 + 1.0).recip() * arg.exp()) + 1.0
            }
        }
        DistributionFamily::Gamma => unreachable!("gamma has no generic closed-form CDF"),
    }
}

fn gamma_pdf(shape: f64, rate: f64, eps: f64) -> f64 {
    if eps < 0.0 {
        return 0.0;
    }
    if eps == 0.0 {
        return match shape.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => rate,
            _ => 0.0,
        };
    }
    (shape * rate.ln() + (shape - 1.0) * eps.ln() - rate * eps - ln_gamma(shape)).exp()
}

fn gamma_quantile(shape: f64, rate: f64, p: f64) -> f64 {
    let mut hi = (shape / rate).max(1.0 / rate);
    while gamma_p(shape, rate * hi) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma_p(shape, rate * mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Gamma(shape, rate) draw via Marsaglia and Tsang, with the shape boost for
/// `shape < 1`.
pub fn gamma_sample<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape.is_finite() && shape > 0.0 && rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma shape {shape} and rate {rate} must be positive"
        )));
    }
    Ok(sample_gamma_unchecked(shape, rate, rng))
}

fn sample_gamma_unchecked<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let boosted = sample_gamma_unchecked(shape + 1.0, 1.0, rng);
        return boosted * open_unit(rng).powf(1.0 / shape) / rate;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = std_normal_quantile(open_unit(rng));
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = open_unit(rng);
        if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
            return d * v / rate;
        }
    }
}
