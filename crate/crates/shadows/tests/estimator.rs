use kst_core::{
    build_o, collective_spin_z, ghz_state, krylov_bound_exact, moments_exact, pseudo_pure, random_density_matrix,
    random_observable, t_k_polynomial, CMatrix, Error, MomentSequence, Observable, Pauli,
};
use kst_shadows::ensemble::{Ensemble, Mat2};
use kst_shadows::estimator::{shadow_factors, MomentKernel};
use kst_shadows::{
    estimate_kry_bound, generate_batch, hankel_solve_estimated, median_of_means, snapshot_to_matrix,
    u_statistic_dense, u_statistic_tk, EstimatorConfig,
};
use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dense_snapshots(n: usize, m: usize, seed: u64, ensemble: Ensemble) -> (Vec<kst_shadows::Snapshot>, Vec<CMatrix<f64>>) {
    let rho = random_density_matrix::<f64>(n, 1 << n, seed).unwrap();
    let batch = generate_batch(&rho, m, ensemble, seed).unwrap();
    let snaps: Vec<_> = batch.iter().collect();
    let mats = snaps.iter().map(|s| snapshot_to_matrix(s, ensemble).into_data()).collect();
    (snaps, mats)
}

#[test]
fn median_examples() {
    assert_eq!(median_of_means(&[1.0, 2.0, 100.0]).unwrap(), 2.0);
    assert_eq!(median_of_means(&[7.5]).unwrap(), 7.5);
    assert_eq!(median_of_means(&[1.0, 2.0, 3.0, 100.0]).unwrap(), 2.0);
    assert_eq!(median_of_means(&[100.0, 3.0, 1.0, 2.0]).unwrap(), 2.0);
    assert!(matches!(median_of_means(&[]), Err(Error::InsufficientData(_))));
}

#[test]
fn smallest_u_statistic_is_symmetrized_pair() {
    let (snaps, mats) = dense_snapshots(2, 2, 1, Ensemble::Clifford);
    let h = collective_spin_z::<f64>(2).unwrap();
    let hd = h.data();
    let h2 = hd * hd;
    let term = |a: &CMatrix<f64>, b: &CMatrix<f64>| {
        // 2 tr(H² A B) − 2 tr(H A H B)
        2.0 * (&h2 * a * b).trace().re - 2.0 * (hd * a * hd * b).trace().re
    };
    let expected = 0.5 * (term(&mats[0], &mats[1]) + term(&mats[1], &mats[0]));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let got = u_statistic_tk(&snaps, Ensemble::Clifford, &h, 0, 100, &mut rng).unwrap();
    assert!((got.value - expected).abs() < 1e-12);
    assert_eq!(got.tuples, 2);
    assert!(!got.subsampled);
    let dense = u_statistic_dense(&mats, &h, 0).unwrap();
    assert!((dense - expected).abs() < 1e-12);
}

#[test]
fn structured_kernel_matches_multicopy_operator() {
    for ensemble in [Ensemble::Clifford, Ensemble::Haar] {
        for n in 1..=2 {
            let h = random_observable::<f64>(n, 30 + n as u64).unwrap();
            let kernel = MomentKernel::new(&h).unwrap();
            for k in 0..=2 {
                let t = k + 2;
                let (snaps, mats) = dense_snapshots(n, t, 7 * k as u64 + n as u64, ensemble);
                let factors = shadow_factors(&snaps, ensemble);
                let o = build_o(&h, k).unwrap();
                let refs: Vec<&CMatrix<f64>> = mats.iter().collect();
                let via_o = o.expectation_product(&refs).unwrap().re;
                let tuple: Vec<&[Mat2]> = factors.iter().map(|f| f.as_slice()).collect();
                let structured = kernel.tuple_value(&tuple, k);
                let scale = via_o.abs().max(1.0);
                assert!((structured - via_o).abs() <= 1e-9 * scale, "n={n} k={k}: {structured} vs {via_o}");
            }
        }
    }
}

/// 0.7·𝟙 + Σ_k (a_k X_k + b_k Y_k + c_k Z_k): one-local but neither diagonal nor traceless.
fn tilted_field(n: usize) -> Observable<f64> {
    let mut m = CMatrix::<f64>::identity(1 << n, 1 << n) * Complex64::new(0.7, 0.0);
    for k in 0..n {
        for (j, p) in [Pauli::X, Pauli::Y, Pauli::Z].into_iter().enumerate() {
            let mut labels = vec![Pauli::I; n];
            labels[k] = p;
            let coef = 0.3 + 0.2 * j as f64 - 0.1 * k as f64;
            m += Observable::pauli_string(&labels, coef).unwrap().data();
        }
    }
    Observable::new(m).unwrap()
}

#[test]
fn fast_low_orders_match_enumeration_and_dense() {
    for ensemble in [Ensemble::Clifford, Ensemble::Haar] {
        for n in 1..=4 {
            let h = match n {
                3 => collective_spin_z::<f64>(n).unwrap(),
                4 => tilted_field(3),
                _ => random_observable::<f64>(n, 5).unwrap(),
            };
            let n = h.n_qubits();
            let (snaps, mats) = dense_snapshots(n, 7, 40 + n as u64, ensemble);
            let kernel = MomentKernel::new(&h).unwrap();
            let factors = shadow_factors(&snaps, ensemble);
            let (t0, t1) = kernel.low_order(&factors).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let e0 = kernel.u_statistic_enumerated(&factors, 0, u64::MAX, &mut rng).unwrap();
            let e1 = kernel.u_statistic_enumerated(&factors, 1, u64::MAX, &mut rng).unwrap();
            let d0 = u_statistic_dense(&mats, &h, 0).unwrap();
            let d1 = u_statistic_dense(&mats, &h, 1).unwrap();
            for (a, b, c) in [(t0.value, e0.value, d0), (t1.value, e1.value, d1)] {
                let scale = c.abs().max(1.0);
                assert!((a - b).abs() < 1e-9 * scale, "n={n}: fast {a} vs enumerated {b}");
                assert!((b - c).abs() < 1e-9 * scale, "n={n}: enumerated {b} vs dense {c}");
            }
            assert_eq!(t0.tuples, 42);
            assert_eq!(t1.tuples, 210);
        }
    }
}

#[test]
fn exact_copies_collapse_to_polynomial() {
    // A U-statistic of identical exact copies of ρ is the polynomial T_k.
    for n in 1..=2 {
        let rho = random_density_matrix::<f64>(n, 1 << n, 3).unwrap();
        let h = random_observable::<f64>(n, 4).unwrap();
        for k in 0..=3 {
            let mats = vec![rho.data().clone(); k + 2];
            let dense = u_statistic_dense(&mats, &h, k).unwrap();
            let exact = t_k_polynomial(&rho, &h, k).unwrap();
            assert!((dense - exact).abs() < 1e-10, "n={n} k={k}");
        }
    }
}

#[test]
fn exact_single_qubit_factors_collapse_to_polynomial() {
    // Product states can be fed to the structured kernel as per-qubit factors.
    let a = Matrix2::new(
        Complex64::new(0.8, 0.0),
        Complex64::new(0.1, 0.2),
        Complex64::new(0.1, -0.2),
        Complex64::new(0.2, 0.0),
    );
    let b = Matrix2::new(
        Complex64::new(0.35, 0.0),
        Complex64::new(-0.3, 0.1),
        Complex64::new(-0.3, -0.1),
        Complex64::new(0.65, 0.0),
    );
    let ab = a.kronecker(&b);
    let rho = kst_core::DensityMatrix::new(CMatrix::<f64>::from_fn(4, 4, |i, j| ab[(i, j)])).unwrap();
    let h = collective_spin_z::<f64>(2).unwrap();
    let kernel = MomentKernel::new(&h).unwrap();
    let shadows = vec![vec![a, b]; 6];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for k in 0..=3 {
        let got = kernel.u_statistic(&shadows, k, u64::MAX, &mut rng).unwrap().value;
        let exact = t_k_polynomial(&rho, &h, k).unwrap();
        assert!((got - exact).abs() < 1e-10, "k={k}: {got} vs {exact}");
    }
}

#[test]
fn too_few_shadows_is_an_error() {
    let (snaps, _) = dense_snapshots(2, 3, 1, Ensemble::Clifford);
    let h = collective_spin_z::<f64>(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(
        u_statistic_tk(&snaps, Ensemble::Clifford, &h, 2, 100, &mut rng),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn tuple_sampling_kicks_in_beyond_budget() {
    let (snaps, _) = dense_snapshots(2, 12, 2, Ensemble::Clifford);
    let h = collective_spin_z::<f64>(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let exact = u_statistic_tk(&snaps, Ensemble::Clifford, &h, 2, u64::MAX, &mut rng).unwrap();
    assert!(!exact.subsampled);
    assert_eq!(exact.tuples, 12 * 11 * 10 * 9);
    let sampled = u_statistic_tk(&snaps, Ensemble::Clifford, &h, 2, 5000, &mut rng).unwrap();
    assert!(sampled.subsampled);
    assert_eq!(sampled.tuples, 5000);
    assert!(sampled.value.is_finite());
}

#[test]
fn sampled_u_statistic_is_unbiased_around_exact_one() {
    let (snaps, _) = dense_snapshots(1, 9, 2, Ensemble::Clifford);
    let h = collective_spin_z::<f64>(1).unwrap();
    let kernel = MomentKernel::new(&h).unwrap();
    let factors = shadow_factors(&snaps, Ensemble::Clifford);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let exact = kernel.u_statistic_enumerated(&factors, 2, u64::MAX, &mut rng).unwrap().value;
    let reps = 200;
    let draws: Vec<f64> =
        (0..reps).map(|_| kernel.u_statistic_enumerated(&factors, 2, 200, &mut rng).unwrap().value).collect();
    let mean = draws.iter().sum::<f64>() / reps as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    assert!((mean - exact).abs() < 4.0 * (var / reps as f64).sqrt());
}

#[test]
fn u_statistics_are_unbiased() {
    let n = 2;
    let rho = pseudo_pure(&ghz_state::<f64>(n).unwrap(), 0.25).unwrap();
    let h = collective_spin_z::<f64>(n).unwrap();
    let exact = moments_exact(&rho, &h, 3).unwrap();
    let subsamples = 500;
    let l = 12;
    let batch = generate_batch(&rho, subsamples * l, Ensemble::Clifford, 31).unwrap();
    let kernel = MomentKernel::new(&h).unwrap();
    let snaps: Vec<_> = batch.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for k in 0..=2 {
        let values: Vec<f64> = snaps
            .chunks(l)
            .map(|chunk| kernel.u_statistic(&shadow_factors(chunk, Ensemble::Clifford), k, u64::MAX, &mut rng).unwrap().value)
            .collect();
        let mean = values.iter().sum::<f64>() / subsamples as f64;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (subsamples - 1) as f64;
        let se = (var / subsamples as f64).sqrt();
        assert!((mean - exact.values[k]).abs() <= 4.0 * se, "k={k}: {mean} vs {} (se {se})", exact.values[k]);
    }
}

#[test]
fn exact_moments_reproduce_exact_bound() {
    for seed in 0..10 {
        let rho = random_density_matrix::<f64>(2, 4, seed).unwrap();
        let h = collective_spin_z::<f64>(2).unwrap();
        let t = moments_exact(&rho, &h, 4).unwrap();
        for n in 1..=2 {
            let (b, diag) = hankel_solve_estimated(&MomentSequence::estimated(t.values.clone()), n, 1e-12).unwrap();
            let exact = krylov_bound_exact(&rho, &h, n).unwrap().value;
            assert!((b - exact).abs() <= 1e-10 * exact.max(1.0), "seed {seed} n={n}: {b} vs {exact}");
            assert!(!diag.clipped);
        }
    }
}

#[test]
fn first_order_solve_is_a_ratio() {
    let t = MomentSequence::estimated(vec![3.0, 1.5]);
    let (b, diag) = hankel_solve_estimated(&t, 1, 1e-12).unwrap();
    assert!((b - 6.0).abs() < 1e-14);
    assert!(!diag.clipped);
    let neg = MomentSequence::estimated(vec![3.0, -1.5]);
    let (b, diag) = hankel_solve_estimated(&neg, 1, 1e-12).unwrap();
    assert!(diag.clipped);
    assert!((b - 9.0 / (1e-12 * 1.5)).abs() / b < 1e-12);
}

#[test]
fn indefinite_estimates_are_clipped() {
    let rho = random_density_matrix::<f64>(2, 4, 8).unwrap();
    let h = collective_spin_z::<f64>(2).unwrap();
    let mut t = moments_exact(&rho, &h, 4).unwrap().values;
    // Push T_3 up until A = [[T1, T2], [T2, T3]] is indefinite.
    t[3] = 0.5 * t[2] * t[2] / t[1];
    let (b, diag) = hankel_solve_estimated(&MomentSequence::estimated(t), 2, 1e-12).unwrap();
    assert!(diag.clipped);
    assert!(diag.min_eigenvalue < 0.0);
    assert!(b.is_finite());
    assert!(diag.condition_number.is_infinite());
}

#[test]
fn all_zero_moments_are_degenerate() {
    let t = MomentSequence::estimated(vec![0.0; 4]);
    assert!(matches!(hankel_solve_estimated(&t, 2, 1e-12), Err(Error::DegenerateInput(_))));
    let short = MomentSequence::estimated(vec![1.0]);
    assert!(matches!(hankel_solve_estimated(&short, 1, 1e-12), Err(Error::InsufficientData(_))));
}

fn ghz_setup(n: usize, p: f64) -> (kst_core::DensityMatrix<f64>, Observable<f64>) {
    (pseudo_pure(&ghz_state::<f64>(n).unwrap(), p).unwrap(), collective_spin_z::<f64>(n).unwrap())
}

#[test]
fn pipeline_is_deterministic_and_consistent() {
    let (rho, h) = ghz_setup(2, 0.25);
    let config = EstimatorConfig::new(2, 5, 12).with_seed(3);
    let batch = generate_batch(&rho, 60, Ensemble::Clifford, 1).unwrap();
    let a = estimate_kry_bound(&batch, &h, &config).unwrap();
    let b = estimate_kry_bound(&batch, &h, &config).unwrap();
    assert!(a.same_estimate(&b));
    assert_eq!(a.per_subsample.len(), 5);
    for k in 0..4 {
        let column: Vec<f64> = a.per_subsample.iter().map(|r| r[k]).collect();
        assert_eq!(a.t_hat.values[k], median_of_means(&column).unwrap());
    }
    // Subsamples are contiguous index blocks.
    let kernel = MomentKernel::new(&h).unwrap();
    let snaps: Vec<_> = batch.iter().collect();
    let second = shadow_factors(&snaps[12..24], Ensemble::Clifford);
    let (t0, _) = kernel.low_order(&second).unwrap();
    assert_eq!(a.per_subsample[1][0], t0.value);
    let json = a.to_json();
    assert!(json.contains("\"b_hat\""));
    assert!(json.contains("\"clipped\""));
}

#[test]
fn pipeline_rejects_short_batches() {
    let (rho, h) = ghz_setup(2, 0.25);
    let batch = generate_batch(&rho, 50, Ensemble::Clifford, 1).unwrap();
    let config = EstimatorConfig::new(1, 5, 11);
    assert!(matches!(estimate_kry_bound(&batch, &h, &config), Err(Error::InsufficientData(_))));
    let small_l = EstimatorConfig::new(2, 2, 4);
    assert!(matches!(estimate_kry_bound(&batch, &h, &small_l), Err(Error::InsufficientData(_))));
}

#[test]
fn ghz_regression_at_two_qubits() {
    let (rho, h) = ghz_setup(2, 0.25);
    let f_q = kst_core::qfi_exact(&rho, &h).unwrap();
    let config = EstimatorConfig::planned(&rho, &h, 1, 0.1 * moments_exact(&rho, &h, 1).unwrap().values[0], 0.1)
        .unwrap()
        .with_seed(7);
    let m = 100_000.max(config.required_snapshots());
    let config = EstimatorConfig { subsample_size: m / config.repetitions, ..config };
    let batch = generate_batch(&rho, m, Ensemble::Clifford, 2025).unwrap();
    let report = estimate_kry_bound(&batch, &h, &config).unwrap();
    let rel = (report.b_hat - f_q).abs() / f_q;
    assert!(rel <= 0.1, "relative error {rel}");
}
