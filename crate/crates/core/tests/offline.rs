use markov_pca::linalg::{spectral_norm, sym_eigen_desc};
use markov_pca::markov::{analyze_spectrum, make_rho_chain, sample_path};
use markov_pca::nalgebra::{DMatrix, DVector};
use markov_pca::offline::{leading_eigenvector, EmpiricalCovariance, OfflineConsumer, OfflineError};
use markov_pca::oracle::random_psd;
use markov_pca::seed::rng_from_seed;
use markov_pca::statedist::{make_decaying_states, total_covariance, NoiseSpec};
use markov_pca::streaming::{
    drive_stream, initial_estimator, sample_seed, OjaConsumer, SampleStream, StepSchedule, StreamConsumer,
};
use proptest::prelude::*;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

#[test]
fn two_sample_covariance() {
    let samples = [v(&[2.0, 0.0]), v(&[0.0, 1.0])];
    let acc = EmpiricalCovariance::accumulate(&samples).unwrap();
    assert_eq!(acc.n(), 2);
    assert_eq!(acc.sigma_hat().unwrap(), DMatrix::from_diagonal(&v(&[2.0, 0.5])));
    let reversed = EmpiricalCovariance::accumulate(samples.iter().rev()).unwrap();
    assert_eq!(reversed.sigma_hat().unwrap(), acc.sigma_hat().unwrap());
}

#[test]
fn order_and_merge_do_not_matter() {
    let mut rng = rng_from_seed(5);
    let samples: Vec<DVector<f64>> =
        (0..200).map(|_| DVector::from_fn(4, |_, _| rand::Rng::random_range(&mut rng, -2.0..2.0))).collect();
    let forward = EmpiricalCovariance::accumulate(&samples).unwrap().sigma_hat().unwrap();
    let backward = EmpiricalCovariance::accumulate(samples.iter().rev()).unwrap().sigma_hat().unwrap();
    assert!((&forward - &backward).amax() < 1e-13);
    let mut left = EmpiricalCovariance::accumulate(&samples[..70]).unwrap();
    left.merge(&EmpiricalCovariance::accumulate(&samples[70..]).unwrap()).unwrap();
    assert_eq!(left.n(), 200);
    assert!((left.sigma_hat().unwrap() - &forward).amax() < 1e-13);
    assert!(matches!(left.merge(&EmpiricalCovariance::new(3)), Err(OfflineError::DimensionMismatch { .. })));
}

#[test]
fn diagonal_leading_eigenvector() {
    let lead = leading_eigenvector(&DMatrix::from_diagonal(&v(&[2.0, 0.5]))).unwrap();
    assert!(lead.converged);
    assert!((lead.eigenvalue - 2.0).abs() < 1e-12);
    assert!((lead.vector[0].abs() - 1.0).abs() < 1e-12);
    assert!(lead.vector[1].abs() < 1e-6);
}

#[test]
fn tied_top_eigenvalue_is_flagged() {
    let lead = leading_eigenvector(&DMatrix::identity(3, 3)).unwrap();
    assert!(!lead.converged);
    assert!((lead.eigenvalue - 1.0).abs() < 1e-12);
    assert_eq!(leading_eigenvector(&DMatrix::zeros(2, 2)), Err(OfflineError::ZeroCovariance));
}

#[test]
fn rank_deficient_input() {
    // Σ̂ = u uᵀ: every start outside u's complement converges in one step.
    let u = v(&[0.6, 0.0, 0.8]);
    let lead = leading_eigenvector(&(&u * u.transpose())).unwrap();
    assert!(lead.converged);
    assert!((lead.vector.dot(&u).abs() - 1.0).abs() < 1e-12);
}

#[test]
fn residual_small_on_random_psd() {
    let mut rng = rng_from_seed(11);
    for d in [2usize, 5, 10, 30] {
        for _ in 0..5 {
            let a = random_psd(d, &mut rng);
            let lead = leading_eigenvector(&a).unwrap();
            let eig = sym_eigen_desc(&a);
            if eig.values[0] - eig.values[1] < 1e-3 * eig.values[0] {
                continue;
            }
            assert!(lead.converged);
            let residual = (&a * &lead.vector - &lead.vector * lead.eigenvalue).norm();
            assert!(residual <= 1e-8 * lead.eigenvalue, "d={d}: {residual:e}");
            assert!((lead.eigenvalue - eig.values[0]).abs() <= 1e-10 * eig.values[0]);
        }
    }
}

struct MarkovData {
    path: Vec<usize>,
    dist: markov_pca::StateDistributionSet,
    truth: markov_pca::EnsembleCovariance,
    schedule: StepSchedule,
}

fn markov_data(len: usize, seed: u64) -> MarkovData {
    let chain = make_rho_chain(10, 0.2).unwrap();
    let spec = analyze_spectrum(&chain).unwrap();
    let dist = make_decaying_states(10, 10, 1.0, NoiseSpec::Uniform, 0).unwrap();
    let truth = total_covariance(&dist, &spec.stationary).unwrap();
    let schedule = StepSchedule::practical(truth.gap, spec.lambda2_abs).unwrap();
    MarkovData { path: sample_path(&chain, &spec, len, seed).unwrap(), dist, truth, schedule }
}

#[test]
fn covariance_error_shrinks_with_n() {
    let sizes = [1_000usize, 10_000, 100_000];
    let mut per_size = vec![Vec::new(); sizes.len()];
    for seed in 0..5 {
        let data = markov_data(100_000, seed);
        let mut stream = SampleStream::new(&data.path, &data.dist, sample_seed(seed));
        let mut acc = EmpiricalCovariance::new(10);
        while let Some((pos, x)) = stream.next_sample() {
            acc.push(x).unwrap();
            if let Some(i) = sizes.iter().position(|&n| n == pos) {
                per_size[i].push(spectral_norm(&(acc.sigma_hat().unwrap() - &data.truth.sigma)));
            }
        }
    }
    let medians: Vec<f64> = per_size.into_iter().map(median).collect();
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
}

#[test]
fn offline_not_worse_than_oja() {
    let n = 20_000;
    let (mut off_err, mut oja_err) = (Vec::new(), Vec::new());
    for seed in 0..7 {
        let data = markov_data(n, 100 + seed);
        let mut oja = OjaConsumer::new(initial_estimator(10, seed), data.schedule, 1).unwrap();
        let mut off = OfflineConsumer::new(10);
        let mut stream = SampleStream::new(&data.path, &data.dist, sample_seed(seed));
        let traces =
            drive_stream(&mut stream, &mut [&mut oja as &mut dyn StreamConsumer, &mut off], &[n], &data.truth, seed)
                .unwrap();
        oja_err.push(traces[0].errors[0]);
        off_err.push(traces[1].errors[0]);
    }
    let (off, oja) = (median(off_err), median(oja_err));
    assert!(off <= 5.0 * oja, "offline {off:e} vs oja {oja:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sigma_hat_is_symmetric_psd(xs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..30)) {
        let samples: Vec<DVector<f64>> = xs.into_iter().map(DVector::from_vec).collect();
        let s = EmpiricalCovariance::accumulate(&samples).unwrap().sigma_hat().unwrap();
        prop_assert_eq!(&s, &s.transpose());
        let scale = s.amax().max(1e-300);
        prop_assert!(sym_eigen_desc(&s).values.min() >= -1e-12 * scale);
    }

    #[test]
    fn leading_vector_is_unit_and_maximal(seed in any::<u64>(), d in 2usize..8) {
        let a = random_psd(d, &mut rng_from_seed(seed));
        let lead = leading_eigenvector(&a).unwrap();
        prop_assert!((lead.vector.norm() - 1.0).abs() < 1e-12);
        let top = sym_eigen_desc(&a).values[0];
        prop_assert!(lead.eigenvalue <= top * (1.0 + 1e-12));
        if lead.converged {
            prop_assert!(lead.eigenvalue >= top * (1.0 - 1e-8));
        }
    }
}
