//! The generic sub-Riemannian builder against the closed-form Hamiltonians,
//! and the structural invariants of the cometric.

use heisenflow::field::gradient_check;
use heisenflow::heisenberg::{FrameField, MetricSpec, Side};
use heisenflow::sr::{build_sr_hamiltonian, cometric_matrix, GramSpec, SubRiemannianStructure};
use heisenflow::systems::{SystemId, SystemKind};
use heisenflow::VectorField;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / f64::max(1.0, b.abs())
}

#[test]
fn ll_closed_form_matches_builder() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for n in 1..=3 {
        let mut sigma: Vec<f64> = (0..n).map(|k| (n - k) as f64 + 0.5).collect();
        sigma[n - 1] = 1.0;
        let spec = MetricSpec::new(sigma, 1.7).unwrap();
        let sys = SystemId::new(SystemKind::LlFull, spec.clone(), None).unwrap();
        let h_closed = sys.hamiltonian();
        let s = SubRiemannianStructure::invariant(spec, Side::Left);
        let h_built = build_sr_hamiltonian(&s).unwrap();
        for _ in 0..1000 {
            let state = random_state(&mut rng, 4 * n + 2);
            let err = rel_err(h_built.eval(&state), h_closed.eval(&state));
            assert!(err < 1e-12, "n={n}: relative error {err}");
        }
    }
}

#[test]
fn lr_closed_form_matches_builder() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for n in 1..=3 {
        for tau in [1.0, 0.6, 2.5] {
            let spec = MetricSpec::round_with_tau(n, tau).unwrap();
            let sys = SystemId::new(SystemKind::LrFull, spec.clone(), None).unwrap();
            let h_closed = sys.hamiltonian();
            let s = SubRiemannianStructure::invariant(spec, Side::Right);
            let h_built = build_sr_hamiltonian(&s).unwrap();
            for _ in 0..1000 {
                let state = random_state(&mut rng, 4 * n + 2);
                let err = rel_err(h_built.eval(&state), h_closed.eval(&state));
                assert!(err < 1e-12, "n={n}, tau={tau}: relative error {err}");
            }
        }
    }
}

#[test]
fn hamiltonian_is_half_squared_horizontal_speed() {
    // H(q, λ) = ½ ⟨β_q λ, β_q λ⟩_sR, with the inner product taken through
    // the ambient metric on the horizontal lift.
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for side in [Side::Left, Side::Right] {
        for n in 1..=3 {
            let spec = MetricSpec::round_with_tau(n, 1.3).unwrap();
            let s = SubRiemannianStructure::invariant(spec.clone(), side);
            let h = build_sr_hamiltonian(&s).unwrap();
            for _ in 0..50 {
                let state = random_state(&mut rng, 4 * n + 2);
                let (q, lam) = state.split_at(2 * n + 1);
                let lam_v = DVector::from_column_slice(lam);
                let velocity = cometric_matrix(&s, q) * &lam_v;
                let g = heisenflow::riemannian_metric_matrix(
                    &spec,
                    &heisenflow::GroupElement::from_coords(q).unwrap(),
                );
                let speed2 = (velocity.transpose() * g * &velocity)[(0, 0)];
                let err = rel_err(0.5 * speed2, h.eval(&state));
                assert!(err < 1e-12, "side={side}, n={n}: error {err}");
            }
        }
    }
}

#[test]
fn builder_invariant_under_frame_reorthonormalization() {
    // replace legs by gram^{-1/2}·legs and gram by the identity: same field
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let n = 2;
    let spec = MetricSpec::new(vec![2.0, 1.0], 1.0).unwrap();
    let s = SubRiemannianStructure::invariant(spec.clone(), Side::Left);
    let h = build_sr_hamiltonian(&s).unwrap();

    // constant gram for the left structure
    let gram = s.gram_matrix(&[0.0; 5]);
    let chol = gram.clone().cholesky().unwrap();
    let inv_sqrt = chol.l().try_inverse().unwrap();
    // note: gram = L Lᵀ, so (L⁻¹)ᵀ... any square root works; use L⁻ᵀ legs
    let legs = s.legs().to_vec();
    let new_legs: Vec<VectorField> = (0..2 * n)
        .map(|a| {
            let coeffs: Vec<f64> = (0..2 * n).map(|b| inv_sqrt[(a, b)]).collect();
            VectorField::linear_combination(format!("leg{a}"), coeffs, legs.clone())
        })
        .collect();
    let s2 = SubRiemannianStructure::new(
        new_legs,
        GramSpec::Constant(DMatrix::identity(2 * n, 2 * n)),
    )
    .unwrap();
    let h2 = build_sr_hamiltonian(&s2).unwrap();
    for _ in 0..200 {
        let state = random_state(&mut rng, 4 * n + 2);
        let err = rel_err(h2.eval(&state), h.eval(&state));
        assert!(err < 1e-12, "error {err}");
    }
}

#[test]
fn cometric_symmetry_and_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for n in 1..=3 {
        let spec = MetricSpec::standard(n);
        for side in [Side::Left, Side::Right] {
            let s = SubRiemannianStructure::invariant(spec.clone(), side);
            for _ in 0..30 {
                let q = random_state(&mut rng, 2 * n + 1);
                let beta = cometric_matrix(&s, &q);
                assert_eq!(beta, beta.transpose());
                // kernel is the annihilator of the distribution: the frame
                // legs pair to the full-rank part, so rank is exactly 2n
                let eigs = beta.symmetric_eigenvalues();
                let rank = eigs.iter().filter(|&&e| e.abs() > 1e-10).count();
                assert_eq!(rank, 2 * n);
                assert!(eigs.iter().all(|&e| e > -1e-12));
            }
        }
        // at the identity the kernel covector is dz
        let s = SubRiemannianStructure::invariant(spec, Side::Left);
        let beta = cometric_matrix(&s, &vec![0.0; 2 * n + 1]);
        let mut dz = DVector::zeros(2 * n + 1);
        dz[2 * n] = 1.0;
        assert!((beta * dz).norm() < 1e-14);
    }
}

#[test]
fn bracket_generating_frames() {
    // frame legs plus their commutators span all 2n+1 directions
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for n in 1..=3 {
        for side in [Side::Left, Side::Right] {
            let frame = FrameField::new(side, n);
            let legs = frame.legs();
            for _ in 0..20 {
                let q = random_state(&mut rng, 2 * n + 1);
                let mut spanning: Vec<DVector<f64>> =
                    legs.iter().map(|l| l.eval(&q)).collect();
                for a in 0..legs.len() {
                    for b in a + 1..legs.len() {
                        spanning.push(heisenflow::field::commutator_at(&legs[a], &legs[b], &q));
                    }
                }
                let mut m = DMatrix::zeros(2 * n + 1, spanning.len());
                for (col, v) in spanning.iter().enumerate() {
                    m.set_column(col, v);
                }
                let svd = m.svd(false, false);
                let smax = svd.singular_values.max();
                let rank = svd
                    .singular_values
                    .iter()
                    .filter(|&&s| s > 1e-10 * smax)
                    .count();
                assert_eq!(rank, 2 * n + 1, "side={side}, n={n}");
            }
        }
    }
}

#[test]
fn left_frame_is_left_invariant() {
    // pushing the identity frame forward by dL_g reproduces the frame at g
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for n in 1..=3 {
        let frame = FrameField::new(Side::Left, n);
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = heisenflow::GroupElement::from_slices(&x, &y, rng.random_range(-2.0..2.0))
                .unwrap();
            // dL_g at e: identity except ∂(z∘L_g)/∂y_k = x_k
            let mut dlg = DMatrix::identity(2 * n + 1, 2 * n + 1);
            for k in 0..n {
                dlg[(2 * n, n + k)] = x[k];
            }
            let at_e = frame.matrix_at(&heisenflow::GroupElement::identity(n));
            let at_g = frame.matrix_at(&g);
            assert_eq!(dlg * at_e, at_g);
        }
    }
}

#[test]
fn builder_field_gradients_survive_fd_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    for side in [Side::Left, Side::Right] {
        let spec = MetricSpec::round_with_tau(2, 0.8).unwrap();
        let s = SubRiemannianStructure::invariant(spec, side);
        let h = build_sr_hamiltonian(&s).unwrap();
        for _ in 0..100 {
            let state = random_state(&mut rng, 10);
            assert!(gradient_check(&h, &state, 1e-5) < 1e-6);
        }
    }
}
