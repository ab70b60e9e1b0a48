use kst_core::linalg::max_abs;
use kst_core::*;
use nalgebra::DMatrix;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pair(n: usize, seed: u64) -> (DensityMatrix64, Observable64) {
    let rho = random_density_matrix(n, 1 << n, seed).unwrap();
    let h = random_observable(n, seed ^ 0x9e37_79b9).unwrap();
    (rho, h)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Brute-force QFI straight from the double sum over eigenpairs.
fn qfi_oracle(rho: &DensityMatrix64, h: &Observable64) -> f64 {
    let sp = spectrum(rho, 1e-10).unwrap();
    let v = &sp.eigenvectors;
    let ht = v.adjoint() * h.data() * v;
    let p = &sp.eigenvalues;
    let mut f = 0.0;
    for k in 0..p.len() {
        for l in 0..p.len() {
            let s = p[k] + p[l];
            if s > 0.0 {
                f += 2.0 * (p[k] - p[l]).powi(2) / s * ht[(k, l)].norm_sqr();
            }
        }
    }
    f
}

/// Numerical rank of the generator list R^k(C), k < count, via SVD of the
/// column-normalized real vectorization.
fn svd_rank(rho: &DensityMatrix64, h: &Observable64, count: usize) -> usize {
    let data = KrylovData::build(rho, h, 1e-8, Some(count)).unwrap();
    let d2 = rho.dim() * rho.dim();
    let mut m = DMatrix::<f64>::zeros(2 * d2, count);
    for (j, g) in data.generators.iter().enumerate() {
        let norm = g.frobenius_norm();
        for (i, z) in g.data().iter().enumerate() {
            m[(i, j)] = z.re / norm;
            m[(d2 + i, j)] = z.im / norm;
        }
    }
    let sv = m.svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|&&s| s > 1e-9 * top).count()
}

#[test]
fn qfi_matches_brute_force_and_sld_norm() {
    for seed in 0..30 {
        let n = 1 + (seed as usize % 3);
        let (rho, h) = random_pair(n, seed);
        let f = qfi_exact(&rho, &h).unwrap();
        assert!(rel(f, qfi_oracle(&rho, &h)) < 1e-10);
        let l = sld_l(&rho, &h).unwrap();
        assert!(rel(weighted_inner(&rho, &l, &l).unwrap(), f) < 1e-9);
    }
}

#[test]
fn pure_state_qfi_is_four_times_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in 1..=3 {
        let psi = haar_pure_state::<f64, _>(n, &mut rng).unwrap();
        let rho = DensityMatrix::from_pure(&psi);
        let h = random_observable(n, 70 + n as u64).unwrap();
        let v = psi.amplitudes();
        let hv = h.data() * v;
        let mean = v.dotc(&hv).re;
        let sq = hv.dotc(&hv).re;
        let f = qfi_exact(&rho, &h).unwrap();
        assert!(rel(f, 4.0 * (sq - mean * mean)) < 1e-10);
        assert!(rel(sub_qfi_bound(&rho, &h).unwrap().value, f) < 1e-10);
    }
}

#[test]
fn r_inverse_undoes_r_on_the_support() {
    for seed in 0..20 {
        let n = 1 + (seed as usize % 3);
        let rank = if seed % 2 == 0 { 1 << n } else { 1 };
        let rho = random_density_matrix::<f64>(n, rank, seed).unwrap();
        let x = HermitianOperator::from(random_observable::<f64>(n, seed + 100).unwrap());
        let rx = apply_r(&rho, &x).unwrap();
        let back = apply_r_inverse(&rho, &rx).unwrap();
        // R kills the doubly-null block, so compare after applying R again.
        let again = apply_r(&rho, &back).unwrap();
        assert!(max_abs(&(again.data() - rx.data())) <= 1e-10);
        if rank == 1 << n {
            assert!(max_abs(&(back.data() - x.data())) <= 1e-10);
        }
    }
}

#[test]
fn weighted_inner_is_hilbert_schmidt_of_r() {
    for seed in 0..20 {
        let (rho, _) = random_pair(2, seed);
        let x = HermitianOperator::from(random_observable::<f64>(2, seed + 7).unwrap());
        let y = HermitianOperator::from(random_observable::<f64>(2, seed + 8).unwrap());
        let lhs = weighted_inner(&rho, &x, &y).unwrap();
        let rx = apply_r(&rho, &x).unwrap();
        let rhs = kst_core::linalg::trace_of_product(rx.data(), y.data()).re;
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        assert!((lhs - weighted_inner(&rho, &y, &x).unwrap()).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}

#[test]
fn n_star_matches_svd_rank() {
    for seed in 0..25 {
        let (rho, h) = random_pair(2, seed);
        let ns = n_star(&rho, &h, 1e-8).unwrap();
        assert_eq!(ns, svd_rank(&rho, &h, 10), "seed {seed}");
    }
    // Degenerate spectra shrink the subspace.
    let rho = pseudo_pure(&ghz_state::<f64>(2).unwrap(), 0.3).unwrap();
    let h = random_observable(2, 3).unwrap();
    assert_eq!(n_star(&rho, &h, 1e-8).unwrap(), 1);
    assert_eq!(svd_rank(&rho, &h, 6), 1);
}

#[test]
fn generator_gram_matrix_is_the_hankel_matrix() {
    let (rho, h) = random_pair(2, 11);
    let data = KrylovData::build(&rho, &h, 1e-8, Some(3)).unwrap();
    let g = data.gram_matrix(&rho);
    let t = moments_exact(&rho, &h, 6).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!(rel(g[(i, j)], t.values[i + j + 1]) < 1e-9);
        }
    }
}

#[test]
fn pythagorean_identity_and_orthogonality() {
    for seed in 0..20 {
        let n = 2 + (seed as usize % 2);
        let (rho, h) = random_pair(n, seed);
        let f = qfi_exact(&rho, &h).unwrap();
        let l = sld_l(&rho, &h).unwrap();
        let ns = n_star(&rho, &h, 1e-8).unwrap();
        let gens = KrylovData::build(&rho, &h, 1e-8, Some(4)).unwrap().generators;
        for order in 1..=ns.min(4) {
            let bound = krylov_bound_exact(&rho, &h, order).unwrap().value;
            let proj = krylov_projection(&rho, &h, order).unwrap();
            assert!(rel(proj.value, bound) < 1e-9, "seed {seed} order {order}");
            let resid = HermitianOperator::new(l.data() - &proj.l_n).unwrap();
            let gap = weighted_inner(&rho, &resid, &resid).unwrap();
            assert!((f - bound - gap).abs() <= 1e-9 * f);
            for g in &gens[..order] {
                let scale = weighted_inner(&rho, g, g).unwrap().sqrt() * f.sqrt();
                assert!(weighted_inner(&rho, g, &resid).unwrap().abs() <= 1e-9 * scale);
            }
        }
    }
}

#[test]
fn three_route_moments() {
    for seed in 0..100u64 {
        let n = 1 + (seed as usize % 4);
        let (rho, h) = random_pair(n, seed);
        let spectral = moments_exact(&rho, &h, 7).unwrap();
        let superop = moments_superoperator(&rho, &h, 7).unwrap();
        let poly = moments_polynomial(&rho, &h, 7).unwrap();
        for k in 0..7 {
            let s = spectral.values[k];
            assert!(rel(superop.values[k], s) < 1e-9, "seed {seed} k {k}");
            assert!(rel(poly.values[k], s) < 1e-9, "seed {seed} k {k}");
        }
        let t = &spectral.values;
        let t0 = 2.0 * (linalg_tr(&(rho.data() * rho.data() * h.data() * h.data()))
            - linalg_tr(&(rho.data() * h.data() * rho.data() * h.data())));
        let r3 = rho.data() * rho.data() * rho.data();
        let t1 = linalg_tr(&(&r3 * h.data() * h.data()))
            - linalg_tr(&(rho.data() * rho.data() * h.data() * rho.data() * h.data()));
        assert!(rel(t0, t[0]) < 1e-9 && rel(t1, t[1]) < 1e-9);
    }
}

fn linalg_tr(m: &CMatrix<f64>) -> f64 {
    kst_core::linalg::trace(m).re
}

#[test]
fn lower_bound_property() {
    for seed in 0..500u64 {
        let n = 1 + (seed as usize % 4);
        let rank = 1 + (seed as usize / 4) % (1 << n);
        let rho = random_density_matrix::<f64>(n, rank, seed).unwrap();
        let h = random_observable(n, seed + 1_000).unwrap();
        let f = qfi_exact(&rho, &h).unwrap();
        assert!(sub_qfi_bound(&rho, &h).unwrap().value <= f + 1e-8);
        for b in taylor_spectral(&rho, &h, &[0, 1, 2, 5, 10]).unwrap() {
            assert!(b <= f + 1e-8);
        }
        let ns = n_star(&rho, &h, 1e-8).unwrap();
        for order in 1..=ns.min(3) {
            assert!(krylov_bound_exact(&rho, &h, order).unwrap().value <= f + 1e-8, "seed {seed}");
        }
    }
}

#[test]
fn taylor_monotone_and_geometric() {
    let orders: Vec<usize> = (0..=50).collect();
    for seed in 0..10 {
        let (rho, h) = random_pair(2, seed);
        let f = qfi_exact(&rho, &h).unwrap();
        let b = taylor_spectral(&rho, &h, &orders).unwrap();
        for w in b.windows(2) {
            assert!(w[1] >= w[0] - 1e-10);
        }
        let sp = spectrum(&rho, 1e-10).unwrap();
        let p = &sp.eigenvalues;
        let ht = sp.eigenvectors.adjoint() * h.data() * &sp.eigenvectors;
        let mut r: f64 = 0.0;
        for k in 0..p.len() {
            for l in 0..p.len() {
                if k != l && (p[k] - p[l]).abs() > 0.0 && ht[(k, l)].norm() > 1e-12 {
                    r = r.max((1.0 - p[k] - p[l]).abs());
                }
            }
        }
        // |F − B_n| ≤ r^{n+1} F, and the tail ratio tends to r.
        for (n, &bn) in b.iter().enumerate() {
            assert!(f - bn <= r.powi(n as i32 + 1) * f * (1.0 + 1e-9) + 1e-13);
        }
        let (e30, e40) = (f - b[30], f - b[40]);
        if e40 > 1e-13 * f {
            let ratio = (e40 / e30).powf(0.1);
            assert!((ratio - r).abs() < 0.05 * r, "seed {seed}: {ratio} vs {r}");
        }
    }
}

#[test]
fn proportionality_iff_single_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..20u64 {
        let n = 2 + (i as usize % 2);
        let psi = haar_pure_state::<f64, _>(n, &mut rng).unwrap();
        let p: f64 = rng.random_range(0.0..0.95);
        let rho = pseudo_pure(&psi, p).unwrap();
        let h = random_observable(n, i).unwrap();
        let check = proportionality_check(&rho, &h, 1e-8).unwrap();
        assert!(check.parallel);
        assert_eq!(n_star(&rho, &h, 1e-8).unwrap(), 1);
        let expected = 1.0 - p + p / 2f64.powi(n as i32 - 1);
        assert!(rel(check.coefficient, expected) < 1e-9);

        let (rho, h) = random_pair(n, 500 + i);
        assert!(!proportionality_check(&rho, &h, 1e-8).unwrap().parallel);
        assert!(n_star(&rho, &h, 1e-8).unwrap() > 1);
    }
    for (n, k) in [(2, 1), (4, 1), (4, 2), (6, 3)] {
        let rho = bound_entangled::<f64>(n, k).unwrap();
        let h = collective_spin_z(n).unwrap();
        let check = proportionality_check(&rho, &h, 1e-8).unwrap();
        assert!(check.parallel);
        assert_eq!(n_star(&rho, &h, 1e-8).unwrap(), 1);
    }
}

#[test]
fn bound_entangled_support_dimension() {
    for n in [2usize, 3, 4, 5, 6] {
        for k in 1..=n / 2 {
            let rho = bound_entangled::<f64>(n, k).unwrap();
            let rank = spectrum(&rho, 1e-10).unwrap().rank();
            let dim = 1usize << n;
            let below = (0..dim).filter(|i| (i.count_ones() as usize) < k).count();
            // φ_i^± and φ_ī^± span the same pair of states.
            let at_k = (0..dim).filter(|i| i.count_ones() as usize == k).count();
            let complement_pairs = if 2 * k == n { at_k / 2 } else { at_k };
            let distinct = 2 * complement_pairs;
            assert_eq!(rank, below + distinct, "N={n} k={k}");
            let lambda = 1.0 / (0..=k).map(|i| binom(n, i)).sum::<f64>();
            assert!(rel(spectrum(&rho, 1e-10).unwrap().eigenvalues[0], lambda) < 1e-10);
        }
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[test]
fn multicopy_routes_agree() {
    for n in 1..=2usize {
        for k in 0..=4usize {
            if n * (k + 2) > 10 {
                continue;
            }
            let h = random_observable::<f64>(n, 40 + k as u64).unwrap();
            let o = build_o(&h, k).unwrap();
            let os = symmetrize_o(&o).unwrap();
            assert!(o.hermitian_defect() <= 1e-10 && os.hermitian_defect() <= 1e-10);
            for seed in 0..5 {
                let rho = random_density_matrix::<f64>(n, 1 << n, seed).unwrap();
                let exact = moments_exact(&rho, &h, k + 1).unwrap().values[k];
                let poly = t_k_polynomial(&rho, &h, k).unwrap();
                let via_o = o.expectation(&rho).unwrap();
                let via_os = os.expectation(&rho).unwrap();
                assert!(rel(poly, exact) < 1e-9);
                assert!(rel(via_o.re, exact) < 1e-9 && via_o.im.abs() < 1e-12);
                assert!(rel(via_os.re, exact) < 1e-9 && via_os.im.abs() < 1e-12);
            }
        }
    }
}

#[test]
fn symmetrized_operator_commutes_with_swaps() {
    let h = random_observable::<f64>(1, 2).unwrap();
    let os = symmetrize_o(&build_o(&h, 1).unwrap()).unwrap();
    let d = 2usize;
    let dim = d.pow(3);
    // Transposition of copies 1 and 2 as a permutation matrix.
    let swap = CMatrix::<f64>::from_fn(dim, dim, |r, c| {
        let (a, b, e) = (c / 4, (c / 2) % 2, c % 2);
        if r == b * 4 + a * 2 + e {
            Complex::new(1.0, 0.0)
        } else {
            Complex::new(0.0, 0.0)
        }
    });
    let comm = os.data() * &swap - &swap * os.data();
    assert!(max_abs(&comm) <= 1e-10);
}

#[test]
fn planner_respects_variance_target() {
    for seed in 0..3 {
        let (rho, h) = random_pair(2, seed);
        let t0 = moments_exact(&rho, &h, 1).unwrap().values[0];
        let eps = 0.1 * t0;
        let l_size = plan_subsample_size(&rho, &h, 1, eps).unwrap();
        for k in 0..2 {
            assert!(variance_bound(&rho, &h, k, l_size).unwrap() <= eps * eps / 4.0 * (1.0 + 1e-9));
        }
    }
}

#[test]
fn single_precision_pipeline() {
    let rho = pseudo_pure(&ghz_state::<f32>(3).unwrap(), 0.25f32).unwrap();
    let h = collective_spin_z::<f32>(3).unwrap();
    let f = qfi_exact(&rho, &h).unwrap();
    let b = krylov_bound_exact(&rho, &h, 1).unwrap().value;
    assert!(((b - f) / f).abs() < 1e-4);
    let rho64 = pseudo_pure(&ghz_state::<f64>(3).unwrap(), 0.25).unwrap();
    let f64_ref = qfi_exact(&rho64, &collective_spin_z(3).unwrap()).unwrap();
    assert!(((f as f64 - f64_ref) / f64_ref).abs() < 1e-5);
}

mod prop {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn legendre_is_bounded(f in 0.0f64..=1.0, n in 1usize..20) {
            let v = legendre_bound(f, n).unwrap().value;
            prop_assert!(v >= 0.0 && v <= (n * n) as f64);
        }

        #[test]
        fn pseudo_pure_fidelity(p in 0.0f64..=1.0, n in 1usize..5) {
            let psi = ghz_state::<f64>(n).unwrap();
            let rho = pseudo_pure(&psi, p).unwrap();
            let expected = (1.0 - p) + p / (1u64 << n) as f64;
            prop_assert!((fidelity(&rho, &psi).unwrap() - expected).abs() < 1e-12);
        }

        #[test]
        fn pseudo_pure_krylov_is_exact(p in 0.0f64..0.95, seed in 0u64..1_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 2 + (seed as usize % 3);
            let psi = haar_pure_state::<f64, _>(n, &mut rng).unwrap();
            let rho = pseudo_pure(&psi, p).unwrap();
            let labels: Vec<Pauli> = (0..n).map(|_| Pauli::ALL[rng.random_range(1..4)]).collect();
            let h = Observable::pauli_string(&labels, 0.5).unwrap();
            let f = qfi_exact(&rho, &h).unwrap();
            prop_assume!(f > 1e-8);
            let b = krylov_bound_exact(&rho, &h, 1).unwrap();
            prop_assert_eq!(b.n_star, 1);
            prop_assert!(rel(b.value, f) <= 1e-9);
        }

        #[test]
        fn mu_second_difference(k in 0usize..=30) {
            let mu = mu_coefficients(k);
            prop_assert_eq!(mu.integers.iter().sum::<i128>(), 0);
            for l in 0..=k + 2 {
                prop_assert_eq!(mu.integers[l], mu.integers[k + 2 - l]);
            }
        }

        #[test]
        fn relative_error_is_nonnegative(b in -10.0f64..10.0, f in 0.01f64..10.0) {
            let e = relative_error(b, f).unwrap();
            prop_assert!(e >= 0.0);
            prop_assert!((e * f - (b - f).abs()).abs() < 1e-12);
        }
    }
}
