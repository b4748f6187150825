mod common;

use accrue_core::scoring::{gaussian_rs, gaussian_rs_min, pit_transform, reliability_score_uniform};
use accrue_core::seed::seeded_rng;
use accrue_core::special::erfinv;
use accrue_core::DistributionParams;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn closed_form_matches_integration(mut u in prop::collection::vec(0.0f64..=1.0, 1..200)) {
        u.sort_by(f64::total_cmp);
        let got = reliability_score_uniform(&u).unwrap();
        prop_assert!((got - common::rs_brute(&u)).abs() < 1e-8);
    }
}

#[test]
fn midpoints_attain_the_minimum() {
    for n in [1usize, 10, 100] {
        let nf = n as f64;
        let u: Vec<f64> = (1..=n).map(|i| (2 * i - 1) as f64 / (2.0 * nf)).collect();
        let rs = reliability_score_uniform(&u).unwrap();
        assert!((rs - 1.0 / (12.0 * nf * nf)).abs() < 1e-12, "n={n}: {rs}");
    }
}

#[test]
fn gaussian_score_at_ideal_errors() {
    for n in [1usize, 2, 7, 50, 400] {
        let nf = n as f64;
        let eta: Vec<f64> = (1..=n).map(|i| erfinv((2 * i - 1) as f64 / nf - 1.0)).collect();
        assert!((gaussian_rs(&eta).unwrap() - gaussian_rs_min(n)).abs() < 1e-10);
    }
    assert!((gaussian_rs_min(1) - (2.0 - 2f64.sqrt()) / (2.0 * std::f64::consts::PI.sqrt())).abs() < 1e-12);
    assert!(gaussian_rs_min(20_000) < 1e-4);
}

#[test]
fn pit_of_own_samples_is_uniform() {
    // critical KS value at the 0.1% level is about 1.95 / sqrt(n)
    let n = 20_000;
    let mut rng = seeded_rng(123);
    for d in [
        DistributionParams::two_piece_gaussian(0.5, 2.5).unwrap(),
        DistributionParams::asymmetric_laplace(0.4, 0.6).unwrap(),
        DistributionParams::gaussian(3.0).unwrap(),
    ] {
        let errs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
        let pit = pit_transform(&errs, &vec![d.clone(); n]).unwrap();
        let ks = common::ks_uniform(pit.values.clone());
        assert!(ks < 1.95 / (n as f64).sqrt(), "{d:?}: ks={ks}");
        assert!(reliability_score_uniform(&pit.values).unwrap() < 1e-3);
    }
}

#[test]
fn miscalibrated_scale_is_penalized() {
    let mut rng = seeded_rng(5);
    let truth = DistributionParams::gaussian(1.0).unwrap();
    let errs: Vec<f64> = (0..5000).map(|_| truth.sample(&mut rng)).collect();
    let rs_for = |s: f64| {
        let d = DistributionParams::gaussian(s).unwrap();
        let pit = pit_transform(&errs, &vec![d; errs.len()]).unwrap();
        reliability_score_uniform(&pit.values).unwrap()
    };
    assert!(rs_for(1.0) < rs_for(0.5));
    assert!(rs_for(1.0) < rs_for(2.0));
}

#[test]
fn rejects_bad_input() {
    assert!(reliability_score_uniform(&[]).is_err());
    assert!(reliability_score_uniform(&[0.5, 0.2]).is_err());
    assert!(reliability_score_uniform(&[1.5]).is_err());
}
