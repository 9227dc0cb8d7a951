use markov_pca::linalg::sin2;
use markov_pca::markov::{analyze_spectrum, make_rho_chain, sample_path};
use markov_pca::nalgebra::{DMatrix, DVector};
use markov_pca::offline::OfflineConsumer;
use markov_pca::statedist::{make_decaying_states, total_covariance, EnsembleCovariance, NoiseSpec, StateDistributionSet};
use markov_pca::streaming::{
    drive_stream, initial_estimator, run_downsampled_oja, run_oja, sample_seed, theorem_beta, Algorithm, OjaConsumer,
    OjaEstimator, SampleStream, ScheduleMode, StepSchedule, StreamConsumer, StreamingError,
};
use proptest::prelude::*;

struct Fixture {
    path: Vec<usize>,
    dist: StateDistributionSet,
    truth: EnsembleCovariance,
    schedule: StepSchedule,
}

fn fixture(len: usize, dim: usize, seed: u64) -> Fixture {
    let chain = make_rho_chain(5, 0.3).unwrap();
    let spec = analyze_spectrum(&chain).unwrap();
    let path = sample_path(&chain, &spec, len, seed).unwrap();
    let dist = make_decaying_states(5, dim, 1.0, NoiseSpec::Uniform, 0).unwrap();
    let truth = total_covariance(&dist, &spec.stationary).unwrap();
    let schedule = StepSchedule::practical(truth.gap, spec.lambda2_abs).unwrap();
    Fixture { path, dist, truth, schedule }
}

/// Reference values from a direct double-precision evaluation of the burn-in
/// formula, one in each branch of the max.
#[test]
fn theorem_beta_frozen_values() {
    let mixing = theorem_beta(3.0, 1.0, 0.5, 6.0, 0.3, 4.0, 3.0, 2.0, 0.5).unwrap();
    assert!((mixing / 650957657.7841909 - 1.0).abs() < 1e-12, "{mixing}");
    let variance = theorem_beta(3.0, 2.0, 0.1, 0.0, 0.2, 50.0, 3.0, 2.0, 0.9).unwrap();
    assert!((variance / 22685669.527620587 - 1.0).abs() < 1e-12, "{variance}");
}

#[test]
fn theorem_beta_shape() {
    let at = |tau: f64, v: f64| theorem_beta(3.0, 1.0, 0.5, tau, 0.3, v, 3.0, 2.0, 0.5).unwrap();
    // Linear in τ_mix while the mixing term dominates.
    assert!((at(12.0, 4.0) / at(6.0, 4.0) - 2.0).abs() < 1e-12);
    // Non-decreasing in 𝒱, strictly once the variance term dominates.
    let mut prev = 0.0;
    for v in [0.0, 1.0, 10.0, 1e4, 1e6, 1e8] {
        let b = at(6.0, v);
        assert!(b >= prev);
        prev = b;
    }
    assert!(at(6.0, 1e8) > at(6.0, 1e6));
}

#[test]
fn theorem_schedule_respects_step_cap() {
    let s = StepSchedule::theorem_faithful(5.0, 0.1, 18.79, 6.0, 400.0, 300.0, 25.0, 7.0 / 9.0).unwrap();
    assert_eq!(s.mode, ScheduleMode::TheoremFaithful);
    assert!(s.eta0() <= (-1f64).exp());
    let fixed = theorem_beta(5.0, 18.79, 0.1, 6.0, s.eta0(), 400.0, 300.0, 25.0, 7.0 / 9.0).unwrap();
    assert!((fixed / s.beta - 1.0).abs() < 1e-9);
}

#[test]
fn skip_one_is_full_oja() {
    let f = fixture(2_000, 6, 3);
    let cps = [10, 100, 2_000];
    let full = run_oja(&f.path, &f.dist, &f.schedule, &cps, &f.truth, 17).unwrap();
    let k1 = run_downsampled_oja(&f.path, &f.dist, &f.schedule, 1, &cps, &f.truth, 17).unwrap();
    assert_eq!(full.errors, k1.errors);
    assert_eq!(full.updates, 2_000);
    assert_eq!(full.algorithm, Algorithm::Oja);
}

#[test]
fn downsampling_counts_updates() {
    let f = fixture(100_000, 3, 4);
    let ds = f.schedule.with_beta_divided(10).unwrap();
    let trace = run_downsampled_oja(&f.path, &f.dist, &ds, 10, &[100_000], &f.truth, 5).unwrap();
    assert_eq!(trace.updates, 10_000);
    assert_eq!(trace.algorithm, Algorithm::OjaDownsampled);
    let short = run_downsampled_oja(&f.path[..25], &f.dist, &ds, 10, &[25], &f.truth, 5).unwrap();
    assert_eq!(short.updates, 2);
}

#[test]
fn downsampling_matches_manual_thinning() {
    let f = fixture(1_000, 4, 8);
    let k = 10;
    let ds = f.schedule.with_beta_divided(k).unwrap();
    let cps = [50, 500, 1_000];
    let trace = run_downsampled_oja(&f.path, &f.dist, &ds, k, &cps, &f.truth, 99).unwrap();

    let mut stream = SampleStream::new(&f.path, &f.dist, sample_seed(99));
    let mut est = initial_estimator(4, 99);
    let mut errors = Vec::new();
    let mut t = 0;
    while let Some((pos, x)) = stream.next_sample() {
        if pos % k == 0 {
            t += 1;
            est.step(x, ds.eta(t)).unwrap();
        }
        if cps.contains(&pos) {
            errors.push(est.sin2(&f.truth.v1));
        }
    }
    assert_eq!(trace.errors, errors);
    assert_eq!(trace.stream_checksum, stream.checksum());
}

#[test]
fn too_large_skip_is_rejected() {
    let f = fixture(20, 3, 1);
    assert!(matches!(
        run_downsampled_oja(&f.path, &f.dist, &f.schedule, 21, &[20], &f.truth, 0),
        Err(StreamingError::EmptyTrace { k: 21, len: 20 })
    ));
    assert!(matches!(
        run_oja(&f.path, &f.dist, &f.schedule, &[21], &f.truth, 0),
        Err(StreamingError::CheckpointOutOfRange { .. })
    ));
}

#[test]
fn consumers_share_one_stream() {
    let f = fixture(3_000, 5, 6);
    let seed = 1234;
    let cps = [100, 3_000];
    let mut oja = OjaConsumer::new(initial_estimator(5, seed), f.schedule, 1).unwrap();
    let mut ds = OjaConsumer::new(initial_estimator(5, seed), f.schedule.with_beta_divided(10).unwrap(), 10).unwrap();
    let mut off = OfflineConsumer::new(5);
    let mut stream = SampleStream::new(&f.path, &f.dist, sample_seed(seed));
    let traces = drive_stream(
        &mut stream,
        &mut [&mut oja as &mut dyn StreamConsumer, &mut ds, &mut off],
        &cps,
        &f.truth,
        seed,
    )
    .unwrap();
    assert!(traces.iter().all(|t| t.stream_checksum == traces[0].stream_checksum));
    let alone = run_oja(&f.path, &f.dist, &f.schedule, &cps, &f.truth, seed).unwrap();
    assert_eq!(alone.errors, traces[0].errors);
    assert_eq!(alone.stream_checksum, traces[0].stream_checksum);
    assert_eq!(traces.iter().map(|t| t.updates).collect::<Vec<_>>(), vec![3_000, 300, 3_000]);
}

#[test]
fn rank_one_data_converges_quickly() {
    let v = DVector::from_vec(vec![1.0, 2.0, -2.0]) / 3.0;
    let mut est = OjaEstimator::new(DVector::from_vec(vec![1.0, 1.0, 1.0])).unwrap();
    let mut prev = est.sin2(&v);
    for _ in 0..10 {
        est.step(&(&v * 2.0), 1.0).unwrap();
        let e = est.sin2(&v);
        assert!(e < prev);
        prev = e;
    }
    assert!(prev < 1e-12, "{prev}");
}

#[test]
fn error_decreases_on_desk_like_data() {
    let f = fixture(50_000, 10, 2);
    let trace = run_oja(&f.path, &f.dist, &f.schedule, &[500, 50_000], &f.truth, 3).unwrap();
    assert!(trace.errors[1] < trace.errors[0]);
    assert!(trace.errors[1] < 1e-2, "{:?}", trace.errors);
}

#[test]
fn collapse_is_reported() {
    let e0 = DVector::from_vec(vec![1.0, 0.0]);
    let mut est = OjaEstimator::new(e0.clone()).unwrap();
    assert!(matches!(est.step(&e0, -1.0), Err(StreamingError::NumericalCollapse { .. })));
}

fn arb_samples(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn iterate_stays_unit(w0 in prop::collection::vec(-1.0f64..1.0, 4), xs in arb_samples(4), eta in 1e-4f64..0.5) {
        prop_assume!(w0.iter().map(|x| x * x).sum::<f64>() > 1e-6);
        let mut est = OjaEstimator::new(DVector::from_vec(w0)).unwrap();
        for x in xs {
            est.step(&DVector::from_vec(x), eta).unwrap();
            prop_assert!((est.w().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_of_sample_is_irrelevant(w0 in prop::collection::vec(-1.0f64..1.0, 3), x in prop::collection::vec(-3.0f64..3.0, 3), eta in 0.0f64..1.0) {
        prop_assume!(w0.iter().map(|x| x * x).sum::<f64>() > 1e-6);
        let x = DVector::from_vec(x);
        let mut a = OjaEstimator::new(DVector::from_vec(w0.clone())).unwrap();
        let mut b = OjaEstimator::new(DVector::from_vec(w0)).unwrap();
        a.step(&x, eta).unwrap();
        b.step(&(-&x), eta).unwrap();
        prop_assert!((a.w() - b.w()).amax() < 1e-14);
    }

    #[test]
    fn rank_one_update_equals_materialised(w0 in prop::collection::vec(-1.0f64..1.0, 5), x in prop::collection::vec(-3.0f64..3.0, 5), eta in 0.0f64..1.0) {
        prop_assume!(w0.iter().map(|x| x * x).sum::<f64>() > 1e-6);
        let x = DVector::from_vec(x);
        let mut est = OjaEstimator::new(DVector::from_vec(w0)).unwrap();
        let before = est.w().clone();
        est.step(&x, eta).unwrap();
        let mut m = DMatrix::<f64>::identity(5, 5);
        m.ger(eta, &x, &x, 1.0);
        prop_assert!((est.w() - (m * before).normalize()).amax() < 1e-13);
    }

    #[test]
    fn iterate_is_normalised_product(w0 in prop::collection::vec(-1.0f64..1.0, 3), xs in arb_samples(3)) {
        prop_assume!(w0.iter().map(|x| x * x).sum::<f64>() > 1e-6);
        let w0 = DVector::from_vec(w0);
        let schedule = StepSchedule::practical(1.0, 0.5).unwrap();
        let mut est = OjaEstimator::new(w0.clone()).unwrap();
        let mut product = DMatrix::<f64>::identity(3, 3);
        for (i, x) in xs.into_iter().enumerate() {
            let x = DVector::from_vec(x);
            let eta = schedule.eta(i + 1);
            est.step(&x, eta).unwrap();
            let mut factor = DMatrix::<f64>::identity(3, 3);
            factor.ger(eta, &x, &x, 1.0);
            product = factor * product;
            product /= product.amax();
        }
        let direct = (product * w0).normalize();
        prop_assert!(sin2(&direct, est.w()) < 1e-10);
    }

    #[test]
    fn sin2_is_bounded_and_sign_blind(w in prop::collection::vec(-1.0f64..1.0, 4), v in prop::collection::vec(-1.0f64..1.0, 4)) {
        let (w, v) = (DVector::from_vec(w), DVector::from_vec(v));
        prop_assume!(w.norm() > 1e-3 && v.norm() > 1e-3);
        let (w, v) = (w.normalize(), v.normalize());
        let s = sin2(&w, &v);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s - sin2(&(-&w), &v)).abs() < 1e-15);
        prop_assert!(sin2(&v, &v) < 1e-15);
    }
}
