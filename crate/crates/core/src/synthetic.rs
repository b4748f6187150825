//! Seeded synthetic calibration data with known input-dependent errors.
//!
//! Inputs are uniform on `[0, 1]`, predictions are zero, and the error is
//! drawn from a family whose parameters are fixed functions of the input.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::data::{Dataset, PairRecord};
use crate::distributions::{gamma_sample, DistributionFamily, DistributionParams};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, seeded_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamFunction {
    Lin1,
    Lin2,
    Trig1,
    Trig2,
}

impl ParamFunction {
    /// Closed interval of values taken on `[0, 1]`.
    pub fn range(self) -> (f64, f64) {
        match self {
            ParamFunction::Lin1 => (0.5, 1.0),
            ParamFunction::Lin2 => (0.5, 2.5),
            ParamFunction::Trig1 => ((-1f64).exp() / 3.0, 1f64.exp() / 3.0),
            ParamFunction::Trig2 => (1.0, 3.0),
        }
    }

    fn eval(self, x: f64) -> f64 {
        match self {
            ParamFunction::Lin1 => 0.5 * x + 0.5,
            ParamFunction::Lin2 => -2.0 * x + 2.5,
            ParamFunction::Trig1 => (2.0 * PI * x).sin().exp() / 3.0,
            ParamFunction::Trig2 => (2.0 * PI * x).cos() + 2.0,
        }
    }
}

pub fn param_function(kind: ParamFunction, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain {
            value: x,
            domain: "[0, 1]",
        });
    }
    Ok(kind.eval(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    A,
    B,
    C,
    D,
    E,
    F,
    GammaMisspec,
}

impl Scenario {
    pub const CALIBRATION: [Scenario; 6] = [
        Scenario::A,
        Scenario::B,
        Scenario::C,
        Scenario::D,
        Scenario::E,
        Scenario::F,
    ];

    pub fn family(self) -> DistributionFamily {
        match self {
            Scenario::A | Scenario::B | Scenario::C => DistributionFamily::TwoPieceGaussian,
            Scenario::D | Scenario::E | Scenario::F => DistributionFamily::AsymmetricLaplace,
            Scenario::GammaMisspec => DistributionFamily::Gamma,
        }
    }

    pub fn functions(self) -> (ParamFunction, ParamFunction) {
        use ParamFunction::*;
        match self {
            Scenario::A | Scenario::D => (Lin1, Lin2),
            Scenario::B | Scenario::E | Scenario::GammaMisspec => (Trig1, Trig2),
            Scenario::C | Scenario::F => (Lin1, Trig2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::A => "A",
            Scenario::B => "B",
            Scenario::C => "C",
            Scenario::D => "D",
            Scenario::E => "E",
            Scenario::F => "F",
            Scenario::GammaMisspec => "GammaMisspec",
        }
    }

    /// Parameter functions evaluated at `x`, before any family mapping.
    pub fn theta(self, x: f64) -> Result<(f64, f64)> {
        let (f1, f2) = self.functions();
        Ok((param_function(f1, x)?, param_function(f2, x)?))
    }

    /// Generating distribution at `x`. For asymmetric Laplace the second
    /// function is the scale `1/lambda`; for gamma the pair is (shape, rate)
    /// of the negated error.
    pub fn true_params(self, x: f64) -> Result<DistributionParams> {
        let (t1, t2) = self.theta(x)?;
        match self.family() {
            DistributionFamily::TwoPieceGaussian => DistributionParams::two_piece_gaussian(t1, t2),
            DistributionFamily::AsymmetricLaplace => {
                DistributionParams::asymmetric_laplace(1.0 / t2, t1)
            }
            DistributionFamily::Gamma => DistributionParams::gamma(t1, t2),
            DistributionFamily::Gaussian => unreachable!("no Gaussian scenario"),
        }
    }

    /// Quantile of the true error `y - m` at input `x`.
    pub fn true_error_quantile(self, x: f64, p: f64) -> Result<f64> {
        let d = self.true_params(x)?;
        match self {
            // error = -Gamma, so its p-quantile is minus the (1 - p)-quantile
            Scenario::GammaMisspec => Ok(-d.quantile(1.0 - p)?),
            _ => d.quantile(p),
        }
    }

    fn draw_error<R: Rng + ?Sized>(self, x: f64, rng: &mut R) -> Result<f64> {
        let d = self.true_params(x)?;
        match self {
            Scenario::GammaMisspec => {
                let [shape, rate] = [d.params()[0], d.params()[1]];
                Ok(0.0 - gamma_sample(shape, rate, rng)?)
            }
            _ => Ok(d.sample(rng)),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Scenario::A),
            "b" => Ok(Scenario::B),
            "c" => Ok(Scenario::C),
            "d" => Ok(Scenario::D),
            "e" => Ok(Scenario::E),
            "f" => Ok(Scenario::F),
            "gammamisspec" | "gamma" | "g" => Ok(Scenario::GammaMisspec),
            other => Err(Error::InvalidParameter(format!("unknown scenario '{other}'"))),
        }
    }
}

/// `n` pairs with `x ~ U[0, 1]`, `m = 0` and `y = m + error(x)`. The seed is
/// mixed with the scenario, so scenarios never share draws.
pub fn generate(scenario: Scenario, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Empty("synthetic sample size"));
    }
    let mut rng = seeded_rng(derive_seed(seed, Stream::Scenario, scenario as u64));
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random();
        let m = 0.0;
        let y = m + scenario.draw_error(x, &mut rng)?;
        records.push(PairRecord::new(vec![x], m, y)?);
    }
    Dataset::new(1, records)
}
