use kst_core::{ghz_state, pseudo_pure, random_density_matrix, DensityMatrix, StateDescription};
use kst_shadows::ensemble::{pauli2, Ensemble, CLIFFORD_SIZE};
use kst_shadows::snapshot::{factor_from_bloch, kron_factors, snapshot_factors};
use kst_shadows::{
    generate_batch, generate_batch_with_workers, load_batch, outcome_distribution, read_batch, sample_snapshot,
    save_batch, shadow_mean, snapshot_to_matrix, write_batch, BornSampler, Snapshot,
};
use nalgebra::{Matrix2, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[test]
fn identity_measurement_of_all_zero_state() {
    let mut rho = DensityMatrix::<f64>::maximally_mixed(3).unwrap().into_data();
    rho.fill(c(0.0));
    rho[(0, 0)] = c(1.0);
    let rho = DensityMatrix::new(rho).unwrap();
    let p = outcome_distribution(&rho, &[0, 0, 0], Ensemble::Clifford).unwrap();
    assert!((p[0] - 1.0).abs() < 1e-14);
    assert!(p[1..].iter().all(|q| q.abs() < 1e-14));
}

#[test]
fn single_qubit_identity_snapshot() {
    let snap = Snapshot::new(vec![0], 0, Ensemble::Clifford).unwrap();
    let m = snapshot_to_matrix(&snap, Ensemble::Clifford);
    let expected = Matrix2::new(c(2.0), c(0.0), c(0.0), c(-1.0));
    assert!((m.data() - expected).norm() < 1e-15);
}

#[test]
fn distributions_are_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for ensemble in [Ensemble::Clifford, Ensemble::Haar] {
        for n in 1..=4 {
            let rho = random_density_matrix::<f64>(n, 1 << n, 10 + n as u64).unwrap();
            for _ in 0..20 {
                let ids: Vec<u32> = (0..n).map(|_| ensemble.draw(&mut rng)).collect();
                let p = outcome_distribution(&rho, &ids, ensemble).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(p.iter().all(|&q| q > -1e-12));
            }
        }
    }
}

#[test]
fn born_rule_matches_rotated_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for ensemble in [Ensemble::Clifford, Ensemble::Haar] {
        let rho = random_density_matrix::<f64>(3, 8, 77).unwrap();
        for _ in 0..10 {
            let ids: Vec<u32> = (0..3).map(|_| ensemble.draw(&mut rng)).collect();
            let us: Vec<_> = ids.iter().map(|&id| ensemble.unitary(id)).collect();
            let u = kron_factors(&us);
            let rotated = &u * rho.data() * u.adjoint();
            let p = outcome_distribution(&rho, &ids, ensemble).unwrap();
            for (s, q) in p.iter().enumerate() {
                assert!((q - rotated[(s, s)].re).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn snapshot_traces_and_spectra() {
    let rho = random_density_matrix::<f64>(2, 4, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for ensemble in [Ensemble::Clifford, Ensemble::Haar] {
        for _ in 0..50 {
            let snap = sample_snapshot(&rho, ensemble, &mut rng).unwrap();
            let m = snapshot_to_matrix(&snap, ensemble);
            assert!((m.data().trace().re - 1.0).abs() < 1e-13);
            let eig = SymmetricEigen::new(m.data().clone());
            assert!(eig.eigenvalues.min() < 0.0);
            let dense = kron_factors(&snapshot_factors(&snap.unitary_ids, snap.outcomes, ensemble));
            assert!((m.data() - dense).norm() < 1e-14);
        }
    }
}

#[test]
fn snapshot_equals_kronecker_of_definition() {
    // 3u†|s⟩⟨s|u − 𝟙 built from the unitary directly.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for ensemble in [Ensemble::Clifford, Ensemble::Haar] {
        for _ in 0..30 {
            let ids: Vec<u32> = (0..3).map(|_| ensemble.draw(&mut rng)).collect();
            let bits: u16 = rng.random_range(0..8);
            let snap = Snapshot::new(ids.clone(), bits, ensemble).unwrap();
            let factors: Vec<_> = ids
                .iter()
                .enumerate()
                .map(|(j, &id)| {
                    let u = ensemble.unitary(id);
                    let s = snap.outcome(j) as usize;
                    let mut proj = Matrix2::<Complex64>::zeros();
                    proj[(s, s)] = c(1.0);
                    u.adjoint() * proj * u * c(3.0) - Matrix2::identity()
                })
                .collect();
            assert!((snapshot_to_matrix(&snap, ensemble).data() - kron_factors(&factors)).norm() < 1e-13);
        }
    }
}

#[test]
fn clifford_ids_are_distinct_unitaries() {
    for a in 0..CLIFFORD_SIZE {
        for b in (a + 1)..CLIFFORD_SIZE {
            let ov = (Ensemble::Clifford.unitary(a).adjoint() * Ensemble::Clifford.unitary(b)).trace().norm();
            assert!((ov - 2.0).abs() > 1e-9, "ids {a} and {b} agree up to phase");
        }
    }
    assert!(Snapshot::new(vec![CLIFFORD_SIZE], 0, Ensemble::Clifford).is_err());
}

#[test]
fn clifford_channel_inverts_exactly() {
    // Average over the 24 elements and both outcomes of p(s|u)·(3u†|s⟩⟨s|u − 𝟙).
    let states = [
        Matrix2::new(c(0.7), Complex64::new(0.1, -0.3), Complex64::new(0.1, 0.3), c(0.3)),
        Matrix2::new(c(0.5), c(0.5), c(0.5), c(0.5)),
        Matrix2::new(c(0.2), Complex64::new(0.0, 0.4), Complex64::new(0.0, -0.4), c(0.8)),
    ];
    for rho in states {
        let mut avg = Matrix2::<Complex64>::zeros();
        for id in 0..CLIFFORD_SIZE {
            let u = Ensemble::Clifford.unitary(id);
            let rotated = u * rho * u.adjoint();
            for s in 0..2u8 {
                let p = rotated[(s as usize, s as usize)].re;
                avg += snapshot_factors(&[id], s as u16, Ensemble::Clifford)[0] * c(p);
            }
        }
        avg /= c(CLIFFORD_SIZE as f64);
        assert!((avg - rho).norm() < 1e-14);
    }
}

#[test]
fn haar_channel_reproduces_state_in_monte_carlo() {
    let rho = Matrix2::new(c(0.7), Complex64::new(0.1, -0.3), Complex64::new(0.1, 0.3), c(0.3));
    let dm = DensityMatrix::new(kst_core::CMatrix::<f64>::from_fn(2, 2, |i, j| rho[(i, j)])).unwrap();
    let sampler = BornSampler::new(&dm, Ensemble::Haar).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let m = 40_000;
    let mut avg = Matrix2::<Complex64>::zeros();
    for _ in 0..m {
        let snap = sampler.sample(&mut rng);
        avg += snapshot_factors(&snap.unitary_ids, snap.outcomes, Ensemble::Haar)[0];
    }
    avg /= c(m as f64);
    // Each entry has standard deviation at most ~ 3/√M.
    assert!((avg - rho).norm() < 5.0 * 3.0 / (m as f64).sqrt());
}

#[test]
fn factors_from_bloch_vectors() {
    let f = factor_from_bloch([0.0, 0.0, 1.0]);
    assert!((f - Matrix2::new(c(2.0), c(0.0), c(0.0), c(-1.0))).norm() < 1e-15);
    let g = factor_from_bloch([1.0, 0.0, 0.0]);
    assert!((g - (Matrix2::identity() * c(0.5) + pauli2(1) * c(1.5))).norm() < 1e-15);
}

#[test]
fn batches_are_deterministic_and_worker_independent() {
    let rho = random_density_matrix::<f64>(3, 8, 4).unwrap();
    for ensemble in [Ensemble::Clifford, Ensemble::Haar] {
        let a = generate_batch(&rho, 2000, ensemble, 42).unwrap();
        let b = generate_batch(&rho, 2000, ensemble, 42).unwrap();
        let one = generate_batch_with_workers(&rho, 2000, ensemble, 42, 1).unwrap();
        let four = generate_batch_with_workers(&rho, 2000, ensemble, 42, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(one, four);
        assert_eq!(a, one);
        let other = generate_batch(&rho, 2000, ensemble, 43).unwrap();
        assert_ne!(a, other);
    }
}

#[test]
fn batch_prefixes_agree() {
    let rho = random_density_matrix::<f64>(2, 4, 4).unwrap();
    let short = generate_batch(&rho, 100, Ensemble::Clifford, 8).unwrap();
    let long = generate_batch(&rho, 300, Ensemble::Clifford, 8).unwrap();
    for i in 0..100 {
        assert_eq!(short.snapshot(i), long.snapshot(i));
    }
}

#[test]
fn maximally_mixed_outcomes_are_uniform() {
    let n = 3;
    let rho = DensityMatrix::<f64>::maximally_mixed(n).unwrap();
    let m = 100_000;
    let batch = generate_batch(&rho, m, Ensemble::Clifford, 2024).unwrap();
    let chi2 = ChiSquared::new(1.0).unwrap();
    for q in 0..n {
        let ones = batch.iter().filter(|s| s.outcome(q) == 1).count() as f64;
        let expected = m as f64 / 2.0;
        let stat = 2.0 * (ones - expected).powi(2) / expected;
        assert!(chi2.cdf(stat) < 0.99, "qubit {q}: χ² = {stat}");
    }
    // Joint outcome histogram too, 2^N − 1 degrees of freedom.
    let mut counts = vec![0.0; 1 << n];
    for s in batch.iter() {
        counts[s.outcomes as usize] += 1.0;
    }
    let expected = m as f64 / (1 << n) as f64;
    let stat: f64 = counts.iter().map(|o| (o - expected).powi(2) / expected).sum();
    let joint = ChiSquared::new(((1 << n) - 1) as f64).unwrap();
    assert!(joint.cdf(stat) < 0.99, "joint χ² = {stat}");
}

#[test]
fn shadow_mean_is_unbiased() {
    for (ensemble, seed) in [(Ensemble::Clifford, 11u64), (Ensemble::Haar, 12)] {
        let rho = pseudo_pure(&ghz_state::<f64>(2).unwrap(), 0.25).unwrap();
        let batch = generate_batch(&rho, 100_000, ensemble, seed).unwrap();
        let mean = shadow_mean(&batch).unwrap();
        let err = (&mean.mean - rho.data()).norm();
        assert!(err <= 5.0 * mean.standard_error, "{ensemble:?}: {err} vs σ = {}", mean.standard_error);
    }
}

#[test]
fn shadow_mean_matches_dense_average() {
    let rho = random_density_matrix::<f64>(2, 4, 3).unwrap();
    let batch = generate_batch(&rho, 500, Ensemble::Haar, 1).unwrap();
    let mut dense = kst_core::CMatrix::<f64>::zeros(4, 4);
    for s in batch.iter() {
        dense += snapshot_to_matrix(&s, Ensemble::Haar).data();
    }
    dense /= c(500.0);
    assert!((shadow_mean(&batch).unwrap().mean - dense).norm() < 1e-12);
}

#[test]
fn binary_round_trip() {
    let rho = random_density_matrix::<f64>(3, 8, 6).unwrap();
    for ensemble in [Ensemble::Clifford, Ensemble::Haar] {
        let batch = generate_batch(&rho, 257, ensemble, 99).unwrap();
        let mut buf = Vec::new();
        write_batch(&mut buf, &batch).unwrap();
        assert_eq!(&buf[..4], b"KSTB");
        assert_eq!(buf.len(), 24 + 257 * (4 * 3 + 2));
        assert_eq!(read_batch(buf.as_slice()).unwrap(), batch);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_batch(bad.as_slice()).is_err());
        assert!(read_batch(&buf[..buf.len() - 1]).is_err());
    }
}

#[test]
fn file_round_trip_with_sidecar() {
    let dir = std::env::temp_dir().join(format!("kst-shadows-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("batch.kstb");
    let desc = StateDescription::PseudoPure { n_qubits: 2, p: 0.25 };
    let rho = desc.build::<f64>().unwrap();
    let batch = generate_batch(&rho, 64, Ensemble::Clifford, 5).unwrap();
    save_batch(&path, &batch, Some(desc.clone())).unwrap();
    let (back, meta) = load_batch(&path).unwrap();
    assert_eq!(back, batch);
    let meta = meta.unwrap();
    assert_eq!(meta.snapshots, 64);
    assert_eq!(meta.state, Some(desc));
    std::fs::remove_dir_all(&dir).unwrap();
}
