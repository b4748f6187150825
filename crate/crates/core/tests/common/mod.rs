//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use accrue_core::special::erfc;

fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Error-distribution CDFs written from the piecewise definitions.
#[derive(Debug, Clone, Copy)]
pub enum OracleDist {
    Gaussian(f64),
    Tpg(f64, f64),
    /// (lambda, kappa)
    Al(f64, f64),
}

impl OracleDist {
    pub fn cdf(self, t: f64) -> f64 {
        match self {
            OracleDist::Gaussian(s) => phi(t / s),
            OracleDist::Tpg(s1, s2) => {
                if t < 0.0 {
                    2.0 * s1 / (s1 + s2) * phi(t / s1)
                } else {
                    (s1 + s2 * (2.0 * phi(t / s2) - 1.0)) / (s1 + s2)
                }
            }
            OracleDist::Al(l, k) => {
                let k2 = k * k;
                if t < 0.0 {
                    k2 / (1.0 + k2) * (l * t / k).exp()
                } else {
                    1.0 - (-l * k * t).exp() / (1.0 + k2)
                }
            }
        }
    }

    pub fn pdf(self, t: f64) -> f64 {
        match self {
            OracleDist::Gaussian(s) => (-0.5 * (t / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()),
            OracleDist::Tpg(s1, s2) => {
                let s = if t < 0.0 { s1 } else { s2 };
                2.0 / ((s1 + s2) * (2.0 * std::f64::consts::PI).sqrt()) * (-0.5 * (t / s).powi(2)).exp()
            }
            OracleDist::Al(l, k) => {
                let c = l / (k + 1.0 / k);
                if t < 0.0 {
                    c * (l * t / k).exp()
                } else {
                    c * (-l * k * t).exp()
                }
            }
        }
    }

    /// Width beyond which both tails are negligible in double precision.
    pub fn reach(self) -> (f64, f64) {
        match self {
            OracleDist::Gaussian(s) => (-40.0 * s, 40.0 * s),
            OracleDist::Tpg(s1, s2) => (-40.0 * s1, 40.0 * s2),
            OracleDist::Al(l, k) => (-40.0 * k / l, 40.0 / (l * k)),
        }
    }
}

/// Adaptive Simpson quadrature.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// Integrates `f` over consecutive intervals between sorted `points`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, points: &[f64], tol: f64) -> f64 {
    points
        .windows(2)
        .map(|w| integrate(f, w[0], w[1], tol / points.len() as f64))
        .sum()
}

/// CRPS as the integral of the squared difference between the CDF and the
/// step at `eps`, split at the kinks.
pub fn crps_quadrature(d: OracleDist, eps: f64) -> f64 {
    let (lo, hi) = d.reach();
    let mut pts = vec![lo.min(eps - 1.0), 0.0, eps, hi.max(eps + 1.0)];
    pts.sort_by(f64::total_cmp);
    let f = |t: f64| {
        let step = if t >= eps { 1.0 } else { 0.0 };
        (d.cdf(t) - step).powi(2)
    };
    integrate_pieces(&f, &pts, 1e-11)
}

/// Integral over [0,1] of (u - C(u))^2, where C is the empirical CDF of
/// the sorted sample, by Simpson's rule on each constant piece.
pub fn rs_brute(u_sorted: &[f64]) -> f64 {
    let n = u_sorted.len() as f64;
    let mut knots = vec![0.0];
    knots.extend_from_slice(u_sorted);
    knots.push(1.0);
    let mut total = 0.0;
    for (i, w) in knots.windows(2).enumerate() {
        let c = i as f64 / n;
        let (a, b) = (w[0], w[1]);
        let g = |u: f64| (u - c) * (u - c);
        total += (b - a) / 6.0 * (g(a) + 4.0 * g(0.5 * (a + b)) + g(b));
    }
    total
}

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Two-sided Kolmogorov-Smirnov statistic against U(0,1).
pub fn ks_uniform(mut u: Vec<f64>) -> f64 {
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).max((i + 1) as f64 / n - v))
        .fold(0.0, f64::max)
}

/// Empirical p-quantile (type 7).
pub fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One random gradient-check instance: batch of 8, random family, input
/// dimension and weight. Returns the largest relative discrepancy between
/// the analytic gradient and central differences (h = 1e-5), skipping
/// coordinates where both are below 1e-10.
pub fn gradient_case(seed: u64) -> f64 {
    use accrue_core::neural::{accrue_batch_loss, accrue_gradient, Batch, NetworkWeights};
    use accrue_core::{BetaWeight, DistributionFamily};
    use rand::Rng;

    let mut rng = accrue_core::seed::seeded_rng(seed);
    let family = DistributionFamily::LEARNABLE[rng.random_range(0..DistributionFamily::LEARNABLE.len())];
    let d_in = rng.random_range(1..=3);
    let n = 8;
    let inputs = (0..n * d_in).map(|_| rng.random_range(-2.0..2.0)).collect();
    let errors = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let batch = Batch::new(d_in, inputs, errors).unwrap();
    let mut w = NetworkWeights::init(d_in, family.arity(), &mut rng);
    for v in w.values_mut() {
        *v += rng.random_range(-0.3..0.3);
    }
    let beta = BetaWeight::new(rng.random_range(1..=9) as f64 / 10.0).unwrap();
    let slope = 0.3;
    let (_, grad) = accrue_gradient(&w, &batch, family, beta, slope).unwrap();
    let analytic: Vec<f64> = grad.values().collect();
    let x0: Vec<f64> = w.values().collect();
    let mut loss = |x: &[f64]| {
        let mut wx = w.clone();
        wx.values_mut().zip(x).for_each(|(v, &xi)| *v = xi);
        accrue_batch_loss(&wx, &batch, family, beta, slope).unwrap()
    };
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let fd = central_diff(&mut loss, &x0, i, 1e-5);
        if a.abs() < 1e-10 && fd.abs() < 1e-10 {
            continue;
        }
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()));
    }
    worst
}
