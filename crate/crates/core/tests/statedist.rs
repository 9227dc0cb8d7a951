use markov_pca::linalg::sym_eigen_desc;
use markov_pca::markov::{analyze_spectrum, make_rho_chain, sample_path};
use markov_pca::nalgebra::{DMatrix, DVector};
use markov_pca::oracle::random_psd;
use markov_pca::seed::rng_from_seed;
use markov_pca::statedist::{
    estimate_assumption_bounds, make_decaying_states, mixture_covariance, state_decay_rate, decaying_state_covariance,
    probe_assumption_constants, total_covariance, BaseNoise, NoiseSpec, StateDistError, StateDistributionSet,
};
use proptest::prelude::*;
use rand::Rng;

fn uniform_pi(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0 / n as f64)
}

#[test]
fn decay_rate_endpoints() {
    assert_eq!(state_decay_rate(1, 10), 1.0);
    assert_eq!(state_decay_rate(10, 10), 10.0);
}

#[test]
fn covariance_entries() {
    let c = decaying_state_covariance(0, 10, 4, 1.0);
    // σ = (5, 5/2, 5/3, 5/4), c₁ = 1.
    assert!((c[(0, 0)] - 25.0).abs() < 1e-12);
    assert!((c[(0, 1)] - (-1f64).exp() * 12.5).abs() < 1e-12);
    assert!((c[(1, 3)] - (-2f64).exp() * 2.5 * 1.25).abs() < 1e-12);
}

/// Reference eigendata of the averaged 50×50 covariance (uniform π over 10
/// states), frozen from a dense double-precision eigensolver.
#[test]
fn desk_scale_eigendata() {
    for (sigma_beta, l1, l2, v_head) in [
        (1.0, 25.029115291823484, 6.238796650959895, [0.9992262804973854, 0.03879201750826015, 0.00628868583970153, 0.0015091508721762187]),
        (0.6, 25.068236580451725, 10.87610446955231, [0.9975971588223443, 0.06797882489412953, 0.012888511896889736, 0.003394053746890353]),
    ] {
        let dist = make_decaying_states(10, 50, sigma_beta, NoiseSpec::Uniform, 0).unwrap();
        let truth = total_covariance(&dist, &uniform_pi(10)).unwrap();
        assert!((truth.lambda1 - l1).abs() < 1e-8);
        assert!((truth.lambda2 - l2).abs() < 1e-8);
        let sign = truth.v1[0].signum();
        for (i, v) in v_head.iter().enumerate() {
            assert!((sign * truth.v1[i] - v).abs() < 1e-8);
        }
    }
}

#[test]
fn thousand_dim_gap_near_twenty() {
    let dist = make_decaying_states(10, 1000, 1.0, NoiseSpec::Uniform, 0).unwrap();
    let truth = total_covariance(&dist, &uniform_pi(10)).unwrap();
    // Dense-eigensolver reference 18.79031864086359; nominal value 20.
    assert!((truth.gap - 18.79031864086359).abs() < 1e-6);
    assert!((truth.gap - 20.0).abs() < 2.5);
}

#[test]
fn degenerate_gap_rejected() {
    let covs = vec![DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])), DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]))];
    let dist = StateDistributionSet::from_covariances(covs, BaseNoise::UniformSym).unwrap();
    let sigma = mixture_covariance(&dist, &uniform_pi(2)).unwrap();
    assert!((sigma - DMatrix::identity(2, 2) * 0.5).amax() < 1e-15);
    assert!(matches!(total_covariance(&dist, &uniform_pi(2)), Err(StateDistError::DegenerateGap { .. })));
}

#[test]
fn single_state_truth_is_its_covariance() {
    let c = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
    let dist = StateDistributionSet::from_covariances(vec![c.clone()], BaseNoise::UniformSym).unwrap();
    let truth = total_covariance(&dist, &uniform_pi(1)).unwrap();
    let eig = sym_eigen_desc(&c);
    assert!((truth.lambda1 - eig.values[0]).abs() < 1e-12);
    assert!(1.0 - truth.v1.dot(&eig.vectors.column(0)).powi(2) < 1e-12);
}

#[test]
fn invalid_inputs() {
    assert!(BaseNoise::bernoulli(0.0).is_err());
    assert!(BaseNoise::bernoulli(1.0).is_err());
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(matches!(
        StateDistributionSet::from_covariances(vec![asym], BaseNoise::UniformSym),
        Err(StateDistError::NotPsd { .. })
    ));
    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(StateDistributionSet::from_covariances(vec![indefinite], BaseNoise::UniformSym).is_err());
    assert!(make_decaying_states(1, 5, 1.0, NoiseSpec::Uniform, 0).is_err());
    assert!(make_decaying_states(3, 5, 0.0, NoiseSpec::Uniform, 0).is_err());
    let dist = make_decaying_states(3, 2, 1.0, NoiseSpec::Uniform, 0).unwrap();
    assert!(matches!(mixture_covariance(&dist, &uniform_pi(2)), Err(StateDistError::LengthMismatch { .. })));
}

#[test]
fn bernoulli_p_drawn_once_from_seed() {
    let a = NoiseSpec::Bernoulli { p: None }.resolve(5).unwrap();
    let b = NoiseSpec::Bernoulli { p: None }.resolve(5).unwrap();
    assert_eq!(a, b);
    let BaseNoise::BernoulliNormalized { p } = a else { panic!("expected Bernoulli") };
    assert!(p > 0.0 && p < 0.05);
    assert_eq!(NoiseSpec::Bernoulli { p: Some(0.3) }.resolve(5).unwrap(), BaseNoise::BernoulliNormalized { p: 0.3 });
}

#[test]
fn zero_covariance_gives_zero_samples() {
    let dist = StateDistributionSet::from_covariances(vec![DMatrix::zeros(3, 3)], BaseNoise::bernoulli(0.3).unwrap()).unwrap();
    let mut rng = rng_from_seed(1);
    for _ in 0..100 {
        assert_eq!(dist.draw_sample(0, &mut rng), DVector::zeros(3));
    }
}

#[test]
fn zero_stream_has_zero_constants() {
    for noise in [BaseNoise::UniformSym, BaseNoise::bernoulli(0.2).unwrap()] {
        let dist = StateDistributionSet::from_covariances(vec![DMatrix::zeros(2, 2); 2], noise).unwrap();
        let (v, m) = probe_assumption_constants(&dist, &uniform_pi(2), 1000, 0).unwrap();
        assert_eq!((v, m), (0.0, 0.0));
    }
}

#[test]
fn one_dimensional_uniform_bounds() {
    let dist = StateDistributionSet::from_covariances(vec![DMatrix::identity(1, 1)], BaseNoise::UniformSym).unwrap();
    let (v, m) = probe_assumption_constants(&dist, &uniform_pi(1), 20_000, 3).unwrap();
    // X² − 1 ∈ [−1, 2]; E[(X²−1)²] = 9/5 − 1.
    assert!(m <= 2.0 && m > 1.9);
    assert!((v - 0.8).abs() < 0.05);
    let bounds = estimate_assumption_bounds(&dist, &uniform_pi(1), 20_000, 3).unwrap();
    assert!(bounds.m_bound <= 2.4);
}

#[test]
fn noise_moments() {
    let mut rng = rng_from_seed(8);
    for noise in [BaseNoise::UniformSym, BaseNoise::bernoulli(0.1).unwrap()] {
        let n = 400_000;
        let draws: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|z| z * z).sum::<f64>() / n as f64;
        let m4 = draws.iter().map(|z| z.powi(4)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "{mean}");
        assert!((var - 1.0).abs() < 0.01, "{var}");
        assert!((m4 / noise.fourth_moment() - 1.0).abs() < 0.03, "{m4}");
    }
    let p = 0.2;
    let expected = (0.8f64.powi(3) + 0.2f64.powi(3)) / (p * (1.0 - p));
    assert!((BaseNoise::bernoulli(p).unwrap().fourth_moment() - expected).abs() < 1e-14);
}

#[test]
fn sample_mean_and_covariance() {
    let mut rng = rng_from_seed(21);
    for noise in [BaseNoise::UniformSym, BaseNoise::bernoulli(0.3).unwrap()] {
        let dist = make_decaying_states(3, 5, 1.0, NoiseSpec::Uniform, 0).unwrap();
        let dist = StateDistributionSet::from_covariances(dist.covariances().to_vec(), noise).unwrap();
        let n = 1_000_000;
        let mut mean = DVector::zeros(5);
        let mut cov = DMatrix::zeros(5, 5);
        let mut x = DVector::zeros(5);
        for _ in 0..n {
            dist.draw_sample_into(1, &mut rng, &mut x);
            mean += &x;
            cov.ger(1.0, &x, &x, 1.0);
        }
        mean /= n as f64;
        cov /= n as f64;
        let target = dist.covariance(1);
        for i in 0..5 {
            let sd = target[(i, i)].sqrt();
            assert!(mean[i].abs() < 4.0 * sd / 1e3, "mean[{i}] = {}", mean[i]);
            for j in 0..5 {
                // 1% relative, or five Monte-Carlo standard errors for
                // entries too small to resolve at this sample size.
                let se = sd * target[(j, j)].sqrt() * 2f64.sqrt() / (n as f64).sqrt();
                let tol = (0.01 * target[(i, j)].abs()).max(5.0 * se);
                assert!((cov[(i, j)] - target[(i, j)]).abs() < tol, "({i},{j}): {} vs {}", cov[(i, j)], target[(i, j)]);
            }
        }
    }
}

#[test]
fn stationary_stream_mean_shrinks() {
    let chain = make_rho_chain(10, 0.2).unwrap();
    let spec = analyze_spectrum(&chain).unwrap();
    let dist = make_decaying_states(10, 3, 1.0, NoiseSpec::Uniform, 0).unwrap();
    let path = sample_path(&chain, &spec, 1_000_000, 4).unwrap();
    let mut rng = rng_from_seed(5);
    let mut sum = DVector::zeros(3);
    let mut at = Vec::new();
    for (i, &s) in path.iter().enumerate() {
        sum += dist.draw_sample(s, &mut rng);
        if [10_000, 100_000, 1_000_000].contains(&(i + 1)) {
            at.push((i + 1, sum.clone() / (i + 1) as f64));
        }
    }
    let sigma = total_covariance(&dist, &spec.stationary).unwrap().sigma;
    for (n, mean) in at {
        for k in 0..3 {
            // Samples are uncorrelated across time (zero conditional mean), so
            // the plain i.i.d. standard error applies.
            let se = (sigma[(k, k)] / n as f64).sqrt();
            assert!(mean[k].abs() < 3.0 * se, "n = {n}, coord {k}: {} vs 3σ = {}", mean[k], 3.0 * se);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn factors_reconstruct_covariances(n in 2usize..12, d in 2usize..30, sigma_beta in 0.3f64..2.0) {
        let dist = make_decaying_states(n, d, sigma_beta, NoiseSpec::Uniform, 0).unwrap();
        for s in 0..n {
            let l = dist.factor(s);
            let err = (l * l.transpose() - dist.covariance(s)).norm() / dist.covariance(s).norm();
            prop_assert!(err <= 1e-8, "state {s}: {err}");
        }
    }

    #[test]
    fn mixture_matches_brute_force(seed in any::<u64>(), n in 1usize..6, d in 1usize..6) {
        let mut rng = rng_from_seed(seed);
        let covs: Vec<_> = (0..n).map(|_| random_psd(d, &mut rng)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let pi = DVector::from_iterator(n, raw.iter().map(|w| w / total));
        let dist = StateDistributionSet::from_covariances(covs.clone(), BaseNoise::UniformSym).unwrap();
        let sigma = mixture_covariance(&dist, &pi).unwrap();
        for i in 0..d {
            for j in 0..d {
                let brute: f64 = (0..n).map(|s| pi[s] * covs[s][(i, j)]).sum();
                prop_assert!((sigma[(i, j)] - brute).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn variance_bound_below_norm_bound_squared(seed in any::<u64>(), p in 0.01f64..0.5, uniform in any::<bool>()) {
        let mut rng = rng_from_seed(seed);
        let covs: Vec<_> = (0..3).map(|_| random_psd(3, &mut rng)).collect();
        let noise = if uniform { BaseNoise::UniformSym } else { BaseNoise::bernoulli(p).unwrap() };
        let dist = StateDistributionSet::from_covariances(covs, noise).unwrap();
        let b = estimate_assumption_bounds(&dist, &uniform_pi(3), 1000, seed).unwrap();
        prop_assert!(b.v_bound <= b.m_bound * b.m_bound * (1.0 + 1e-12));
    }
}
