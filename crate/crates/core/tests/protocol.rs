use accrue_core::neural::{NetworkWeights, Standardizer, TrainingConfig};
use accrue_core::pipeline::{
    beta_grid, beta_search, run_protocol, select_median_member, train_ensemble, CalibrationModel,
    DataSource, ProtocolConfig, MEMBER_SPLIT,
};
use accrue_core::seed::{derive_seed, seeded_rng, Stream};
use accrue_core::synthetic::{generate, Scenario};
use accrue_core::{split, BetaWeight, Dataset, DistributionFamily, PairRecord, Partition};
use rand::Rng;

const TPG: DistributionFamily = DistributionFamily::TwoPieceGaussian;
const AL: DistributionFamily = DistributionFamily::AsymmetricLaplace;

fn quick() -> TrainingConfig {
    TrainingConfig { max_epochs: 60, ..TrainingConfig::default() }
}

#[test]
fn beta_search_contract() {
    let data = generate(Scenario::A, 2000, 11).unwrap();
    let a = beta_search(&data, TPG, &quick(), 4).unwrap();
    let grid: Vec<f64> = beta_grid().iter().map(|b| b.value()).collect();
    assert!(grid.contains(&a.beta.value()));
    assert_eq!(a.cells.len(), 9);
    let best = a.cells.iter().map(|c| c.distance()).fold(f64::INFINITY, f64::min);
    let chosen = a.cells.iter().find(|c| c.beta == a.beta).unwrap();
    assert_eq!(chosen.distance(), best);
    let b = beta_search(&data, TPG, &quick(), 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_member_loss_matches_evaluate() {
    let src = DataSource::Synthetic { scenario: Scenario::D, n: 1500 };
    let beta = BetaWeight::new(0.6).unwrap();
    let models = train_ensemble(&src, AL, beta, 1, &quick(), 21).unwrap();
    assert_eq!(models.len(), 1);
    let data = generate(Scenario::D, 1500, derive_seed(21, Stream::MemberData, 0)).unwrap();
    let test = split(&data, &MEMBER_SPLIT, derive_seed(21, Stream::MemberSplit, 0))
        .unwrap()
        .partition(Partition::Test);
    assert_eq!(models[0].test_loss, models[0].evaluate(&test).unwrap().accrue);
    assert_eq!(select_median_member(&models).unwrap(), &models[0]);
}

#[test]
fn members_differ() {
    let src = DataSource::Synthetic { scenario: Scenario::A, n: 1500 };
    let beta = BetaWeight::new(0.5).unwrap();
    let models = train_ensemble(&src, TPG, beta, 8, &quick(), 3).unwrap();
    assert_ne!(models[0].seed, models[1].seed);
    assert_ne!(models[0].weights, models[1].weights);
    let mut losses: Vec<f64> = models.iter().map(|m| m.test_loss).collect();
    losses.sort_by(f64::total_cmp);
    assert!(losses[5] > losses[2], "interquartile range is zero: {losses:?}");
}

#[test]
fn protocol_is_deterministic_and_median_is_bracketed() {
    let src = DataSource::Synthetic { scenario: Scenario::A, n: 1500 };
    let cfg = ProtocolConfig { members: 5, test_n: 500, training: quick(), seed: 8, beta_override: None };
    let a = run_protocol(&src, TPG, &cfg).unwrap();
    let b = run_protocol(&src, TPG, &cfg).unwrap();
    assert_eq!(a.beta, b.beta);
    assert_eq!(a.median, b.median);
    assert_eq!(a.metrics, b.metrics);
    let losses: Vec<f64> = a.members.iter().map(|m| m.test_loss).collect();
    let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(lo <= a.median.test_loss && a.median.test_loss <= hi);
    assert_eq!(a.metrics.accrue, a.median.test_loss);
    assert!(a.beta_search.is_some());
}

#[test]
fn fixed_data_uses_one_holdout() {
    let data = generate(Scenario::C, 1000, 2).unwrap();
    let src = DataSource::fixed(&data, 6).unwrap();
    let DataSource::Fixed { pool, test } = &src else { unreachable!() };
    assert_eq!((pool.len(), test.len()), (800, 200));
    let cfg = ProtocolConfig {
        members: 3,
        test_n: 0,
        training: quick(),
        seed: 6,
        beta_override: Some(BetaWeight::new(0.4).unwrap()),
    };
    let out = run_protocol(&src, TPG, &cfg).unwrap();
    assert!(out.beta_search.is_none());
    assert_eq!(out.test_set, *test);
    for m in &out.members {
        assert_eq!(m.test_loss, m.loss_on(test).unwrap());
    }
}

#[test]
fn own_samples_are_covered_at_nominal_rates() {
    let mut rng = seeded_rng(30);
    for family in [TPG, AL, DistributionFamily::Gaussian] {
        let model = CalibrationModel {
            family,
            beta_star: BetaWeight::new(0.5).unwrap(),
            weights: NetworkWeights::init(2, family.arity(), &mut rng),
            standardizer: Standardizer::identity(2),
            leaky_slope: 0.3,
            seed: 0,
            test_loss: 0.0,
        };
        let recs = (0..2000)
            .map(|_| {
                let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let m = rng.random_range(-5.0..5.0);
                let e = model.params_at(&x).unwrap().sample(&mut rng);
                PairRecord::new(x, m, m + e).unwrap()
            })
            .collect();
        let r = model.evaluate(&Dataset::new(2, recs).unwrap()).unwrap();
        assert!((0.93..=0.97).contains(&r.coverage95), "{family}: {r:?}");
        assert!((0.46..=0.54).contains(&r.coverage50), "{family}: {r:?}");
        assert_eq!(r.accrue, r.beta * r.crps + (1.0 - r.beta) * r.rs);
    }
}

#[test]
fn dimension_mismatch_is_reported() {
    let model = CalibrationModel {
        family: TPG,
        beta_star: BetaWeight::new(0.5).unwrap(),
        weights: NetworkWeights::zeros(1, 10, 2),
        standardizer: Standardizer::identity(1),
        leaky_slope: 0.3,
        seed: 0,
        test_loss: 0.0,
    };
    let recs = vec![PairRecord::new(vec![0.0, 1.0, 2.0], 0.0, 1.0).unwrap()];
    assert!(model.evaluate(&Dataset::new(3, recs).unwrap()).is_err());
    assert!(model.predict_intervals(&[0.0, 1.0, 2.0], 0.0).is_err());
}
