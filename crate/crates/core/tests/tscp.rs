mod common;

use common::{line, load, machine};
use cscopf_core::dynamics::{EventKind, FaultEvent, FaultSequence, SimeConfig, TdsOptions};
use cscopf_core::grid::{Bus, Network};
use cscopf_core::tscp::{
    build_dataset, evaluate, fit_linear, rescale_dispatch, sample_loads, LoadSampleSet, RowStatus, SamplingSpec, TscpModel,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn linear_data(n: usize, theta: &[f64], theta0: f64, noise: f64, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = theta.len();
    let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(50.0..150.0));
    let normal = Normal::new(0.0, 1.0).unwrap();
    let y = (0..n)
        .map(|r| theta0 + (0..p).map(|c| theta[c] * x[(r, c)]).sum::<f64>() + noise * normal.sample(&mut rng))
        .collect();
    (x, y)
}

#[test]
fn exact_linear_data_is_recovered() {
    let theta = [0.4, -0.25, 1.3, 0.05];
    let (x, y) = linear_data(200, &theta, 12.0, 0.0, 1);
    let m = fit_linear(&x, &y).unwrap();
    for (a, b) in m.theta.iter().zip(&theta) {
        assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
    }
    assert!((m.theta0 - 12.0).abs() <= 1e-8 * 12.0);
}

#[test]
fn noisy_fit_residual_matches_noise_level() {
    let sigma = 3.0;
    let (x, y) = linear_data(10_000, &[0.5, 0.2, -0.3], 80.0, sigma, 2);
    let m = fit_linear(&x, &y).unwrap();
    let met = evaluate(&m, &x, &y, 0.0, 0).unwrap();
    assert!((met.rmse - sigma).abs() <= 0.1 * sigma, "rmse {}", met.rmse);
}

#[test]
fn robustness_is_nonnegative_on_average() {
    let (x, y) = linear_data(500, &[0.5, 0.2, -0.3], 80.0, 1.0, 3);
    let m = fit_linear(&x, &y).unwrap();
    let drops: Vec<f64> = (0..20).map(|s| evaluate(&m, &x, &y, 0.05, s).unwrap().r2_robustness).collect();
    let mean = drops.iter().sum::<f64>() / drops.len() as f64;
    let sd = (drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (drops.len() - 1) as f64).sqrt();
    assert!(mean >= -2.0 * sd / (drops.len() as f64).sqrt(), "mean {mean}");
}

#[test]
fn shifted_prediction_has_unit_negative_bias() {
    let (x, y) = linear_data(100, &[1.0, 2.0], 30.0, 0.0, 4);
    let mut m = fit_linear(&x, &y).unwrap();
    m.theta0 += 1.0;
    let met = evaluate(&m, &x, &y, 0.0, 0).unwrap();
    assert!((met.mbd + 1.0).abs() < 1e-9);
}

#[test]
fn model_json_round_trip_is_exact() {
    let (x, y) = linear_data(50, &[0.1, 0.7, -0.9], 3.0, 0.5, 5);
    let m = fit_linear(&x, &y).unwrap();
    let back = TscpModel::from_json(&m.to_json()).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.theta.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), m.theta.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn prediction_is_affine_and_never_negative(
        theta in prop::collection::vec(-2.0f64..2.0, 3),
        theta0 in -50.0f64..50.0,
        a in prop::collection::vec(0.0f64..200.0, 3),
        b in prop::collection::vec(0.0f64..200.0, 3),
        t in 0.0f64..1.0,
    ) {
        let (x, y) = linear_data(10, &[0.0; 3], 0.0, 0.0, 0);
        let mut m = fit_linear(&x, &y).unwrap();
        m.theta = theta;
        m.theta0 = theta0;
        let mix: Vec<f64> = a.iter().zip(&b).map(|(u, v)| t * u + (1.0 - t) * v).collect();
        let raw = |p: &[f64]| m.predict_raw(p).unwrap();
        prop_assert!((raw(&mix) - (t * raw(&a) + (1.0 - t) * raw(&b))).abs() < 1e-9);
        prop_assert!(m.predict(&a).unwrap() >= 0.0);
        prop_assert_eq!(m.predict(&a).unwrap(), raw(&a).max(0.0));
    }

    #[test]
    fn samples_respect_bounds_and_seed(seed in any::<u64>()) {
        let net = common::nine_bus();
        let s1 = sample_loads(&net, &SamplingSpec::default(), 20, seed).unwrap();
        let s2 = sample_loads(&net, &SamplingSpec::default(), 20, seed).unwrap();
        prop_assert_eq!(&s1.samples, &s2.samples);
        for k in 0..s1.len() {
            for (v, l) in s1.row(k).iter().zip(&net.loads) {
                prop_assert!(*v >= l.l_min_mw && *v <= l.l_max_mw);
            }
        }
    }
}

/// Machine 1 feeding a load at the strong bus over a single line.
fn loaded_smib(load_mw: f64) -> Network {
    Network::new(
        vec![Bus { id: 1, is_reference: false }, Bus { id: 2, is_reference: true }],
        vec![line(1, 1, 2, 0.2, 500.0)],
        vec![machine(1, 1, load_mw, 5.0, 0.3), machine(2, 2, 0.0, 1000.0, 0.001)],
        vec![load(2, 2, load_mw)],
        100.0,
    )
    .unwrap()
}

fn bus_fault() -> FaultSequence {
    FaultSequence {
        events: vec![
            FaultEvent { t: 0.1, kind: EventKind::ApplyFault, branch: 1, pos: 0.0 },
            FaultEvent { t: 0.45, kind: EventKind::ClearFault, branch: 1, pos: 0.0 },
        ],
    }
}

#[test]
fn correction_grows_with_smib_loading() {
    let net = loaded_smib(80.0);
    let levels: Vec<f64> = (0..10).map(|k| 80.0 + 4.0 * k as f64).collect();
    let samples = LoadSampleSet {
        samples: DMatrix::from_column_slice(levels.len(), 1, &levels),
        base: vec![80.0],
        load_ids: vec![2],
        spec: SamplingSpec::default(),
        seed: 0,
    };
    let tds = TdsOptions { t_end: 3.0, ..TdsOptions::default() };
    let ds = build_dataset(&net, &samples, &bus_fault(), &tds, &SimeConfig::default());
    assert!(ds.status.iter().all(|s| !matches!(s, RowStatus::Failed(_))));
    for w in ds.y.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "{:?}", ds.y);
    }
    assert!(ds.y[9] > 0.0);
}

#[test]
fn dataset_rows_follow_sample_permutation() {
    let net = cscopf_core::fixtures::wildfire9();
    let c = cscopf_core::fixtures::wildfire9_contingency();
    let tds = TdsOptions::default();
    let sime = SimeConfig::default();
    let s = sample_loads(&net, &SamplingSpec::default(), 6, 9).unwrap();
    let perm = [3usize, 0, 5, 1, 4, 2];
    let mut p = s.clone();
    p.samples = DMatrix::from_fn(6, s.samples.ncols(), |r, c| s.samples[(perm[r], c)]);
    let a = build_dataset(&net, &s, &c.sequence, &tds, &sime);
    let b = build_dataset(&net, &p, &c.sequence, &tds, &sime);
    for r in 0..6 {
        assert_eq!(b.y[r].to_bits(), a.y[perm[r]].to_bits());
        assert_eq!(b.status[r], a.status[perm[r]]);
    }
    let again = build_dataset(&net, &s, &c.sequence, &tds, &sime);
    assert_eq!(again.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), a.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn rescaled_dispatch_stays_balanced() {
    let net = common::nine_bus();
    let loads = [140.0, 90.0, 100.0];
    let moved = rescale_dispatch(&net, &loads);
    let gen: f64 = moved.generators.iter().map(|g| g.p0_mw).sum();
    assert!((gen - loads.iter().sum::<f64>()).abs() < 1e-9);
    let ratio = moved.generators[0].p0_mw / net.generators[0].p0_mw;
    for (a, b) in moved.generators.iter().zip(&net.generators) {
        assert!((a.p0_mw / b.p0_mw - ratio).abs() < 1e-12);
    }
}

#[test]
fn dataset_csv_round_trip() {
    let net = cscopf_core::fixtures::wildfire9();
    let c = cscopf_core::fixtures::wildfire9_contingency();
    let s = sample_loads(&net, &SamplingSpec::default(), 4, 1).unwrap();
    let ds = build_dataset(&net, &s, &c.sequence, &TdsOptions::default(), &SimeConfig::default());
    let back = cscopf_core::tscp::Dataset::from_csv(&ds.to_csv().unwrap()).unwrap();
    assert_eq!(back.y, ds.y);
    assert_eq!(back.x, ds.x);
}
