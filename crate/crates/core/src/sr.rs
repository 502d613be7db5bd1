//! Generic sub-Riemannian machinery: momentum functions, the cometric, and
//! the Hamiltonian builder `H = ½ Σ g^{ab}(q) P_a P_b`.
//!
//! The builder evaluates frame legs and the Gram matrix at each point and
//! solves the Gram system there; no closed-form inversion is assumed. It is
//! the independent oracle against which the explicit Hamiltonians of the
//! invariant flows are checked.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::autodiff::{Dual, Scalar};
use crate::field::{DiffScalar, FieldExpr, ScalarField, VectorField};
use crate::heisenberg::{metric_matrix_generic, FrameField, MetricSpec, Side};

#[derive(Debug, Error, PartialEq)]
pub enum SrError {
    #[error("gram matrix is singular or not positive definite")]
    SingularGram,
    #[error("gram matrix must be {expected}×{expected}, got {rows}×{cols}")]
    GramShape {
        expected: usize,
        rows: usize,
        cols: usize,
    },
}

/// How the inner products of the frame legs are obtained.
#[derive(Clone, Debug)]
pub enum GramSpec {
    /// A fixed matrix, independent of the base point.
    Constant(DMatrix<f64>),
    /// Leg inner products `X_aᵀ G(q) X_b` in the coordinate metric of a
    /// left-invariant metric spec.
    AmbientMetric(MetricSpec),
}

/// A rank-2n distribution with an inner product on it: spanning legs plus a
/// Gram matrix function of the base point.
#[derive(Clone, Debug)]
pub struct SubRiemannianStructure {
    legs: Vec<VectorField>,
    gram: GramSpec,
    base_dim: usize,
}

impl SubRiemannianStructure {
    pub fn new(legs: Vec<VectorField>, gram: GramSpec) -> Result<Self, SrError> {
        assert!(!legs.is_empty());
        let base_dim = legs[0].dim();
        assert!(legs.iter().all(|l| l.dim() == base_dim));
        if let GramSpec::Constant(m) = &gram {
            if m.nrows() != legs.len() || m.ncols() != legs.len() {
                return Err(SrError::GramShape {
                    expected: legs.len(),
                    rows: m.nrows(),
                    cols: m.ncols(),
                });
            }
        }
        Ok(SubRiemannianStructure {
            legs,
            gram,
            base_dim,
        })
    }

    /// The invariant structures of the Heisenberg flows: frame legs on the
    /// chosen side, Gram matrix induced by the left-invariant metric.
    pub fn invariant(spec: MetricSpec, side: Side) -> Self {
        let frame = FrameField::new(side, spec.n());
        SubRiemannianStructure {
            legs: frame.legs(),
            gram: GramSpec::AmbientMetric(spec),
            base_dim: frame.base_dim(),
        }
    }

    pub fn rank(&self) -> usize {
        self.legs.len()
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn legs(&self) -> &[VectorField] {
        &self.legs
    }

    /// Gram matrix entries at a base point.
    pub fn gram_at<S: DiffScalar>(&self, q: &[S]) -> Vec<Vec<S>>
    where
        Dual<S>: DiffScalar,
    {
        let m = self.rank();
        match &self.gram {
            GramSpec::Constant(g) => {
                let mut out = vec![vec![S::zero(); m]; m];
                for a in 0..m {
                    for b in 0..m {
                        out[a][b] = S::from_f64(g[(a, b)]);
                    }
                }
                out
            }
            GramSpec::AmbientMetric(spec) => {
                let metric = metric_matrix_generic(spec, q);
                let legs: Vec<Vec<S>> = self
                    .legs
                    .iter()
                    .map(|leg| crate::field::eval_vector_generic(leg, q))
                    .collect();
                let dim = self.base_dim;
                let mut out = vec![vec![S::zero(); m]; m];
                for a in 0..m {
                    for b in a..m {
                        let mut acc = S::zero();
                        for i in 0..dim {
                            let mut gi = S::zero();
                            for j in 0..dim {
                                gi += metric[i][j] * legs[b][j];
                            }
                            acc += legs[a][i] * gi;
                        }
                        out[a][b] = acc;
                        out[b][a] = acc;
                    }
                }
                out
            }
        }
    }

    pub fn gram_matrix(&self, q: &[f64]) -> DMatrix<f64> {
        let vals = self.gram_at::<f64>(q);
        let m = self.rank();
        DMatrix::from_fn(m, m, |a, b| vals[a][b])
    }
}

/// Momentum function `P_X(q, λ) = λ(X(q))`, a fiber-linear scalar field on
/// the cotangent chart (base coordinates first, then λ).
pub fn momentum_function(x_field: &VectorField) -> ScalarField {
    let base_dim = x_field.dim();
    ScalarField::new(
        format!("P[{}]", x_field.name()),
        2 * base_dim,
        MomentumExpr {
            x_field: x_field.clone(),
            base_dim,
        },
    )
}

struct MomentumExpr {
    x_field: VectorField,
    base_dim: usize,
}

impl FieldExpr for MomentumExpr {
    fn eval<S: DiffScalar>(&self, x: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let (q, lambda) = x.split_at(self.base_dim);
        let components = crate::field::eval_vector_generic(&self.x_field, q);
        let mut acc = S::zero();
        for (xi, li) in components.iter().zip(lambda) {
            acc += *xi * *li;
        }
        acc
    }
}

/// Build `H(q, λ) = ½ Σ g^{ab}(q) P_a P_b` by solving the Gram system at
/// each evaluation point (Cholesky; the Gram matrix is positive definite).
///
/// Fails upfront if the Gram matrix is not positive definite at the chart
/// origin.
pub fn build_sr_hamiltonian(s: &SubRiemannianStructure) -> Result<ScalarField, SrError> {
    let origin = vec![0.0; s.base_dim()];
    let gram = s.gram_at::<f64>(&origin);
    if cholesky_in_place::<f64>(&mut gram.clone()).is_none() {
        return Err(SrError::SingularGram);
    }
    Ok(ScalarField::new(
        "H[sr]",
        2 * s.base_dim(),
        SrHamiltonianExpr {
            structure: s.clone(),
        },
    ))
}

struct SrHamiltonianExpr {
    structure: SubRiemannianStructure,
}

impl FieldExpr for SrHamiltonianExpr {
    fn eval<S: DiffScalar>(&self, x: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let s = &self.structure;
        let (q, lambda) = x.split_at(s.base_dim());
        let m = s.rank();
        let mut momenta = vec![S::zero(); m];
        for (a, leg) in s.legs().iter().enumerate() {
            let components = crate::field::eval_vector_generic(leg, q);
            let mut acc = S::zero();
            for (xi, li) in components.iter().zip(lambda) {
                acc += *xi * *li;
            }
            momenta[a] = acc;
        }
        let mut gram = s.gram_at(q);
        let chol = cholesky_in_place(&mut gram)
            .expect("gram matrix not positive definite at evaluation point");
        let solved = cholesky_solve(&chol, &momenta);
        let mut h = S::zero();
        for (p, c) in momenta.iter().zip(&solved) {
            h += *p * *c;
        }
        h * S::from_f64(0.5)
    }
}

/// In-place Cholesky factorization `A = L Lᵀ`; returns `None` when a pivot
/// has non-positive real part. Generic over the scalar so dual numbers pass
/// through the factorization.
fn cholesky_in_place<S: Scalar>(a: &mut Vec<Vec<S>>) -> Option<Vec<Vec<S>>> {
    let m = a.len();
    let mut l = vec![vec![S::zero(); m]; m];
    for i in 0..m {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum.re() <= 0.0 {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve<S: Scalar>(l: &[Vec<S>], b: &[S]) -> Vec<S> {
    let m = b.len();
    let mut y = vec![S::zero(); m];
    for i in 0..m {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![S::zero(); m];
    for i in (0..m).rev() {
        let mut sum = y[i];
        for k in i + 1..m {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    x
}

/// Cometric `β = X g⁻¹ Xᵀ` at a base point: symmetric, rank 2n, kernel the
/// annihilator of the distribution.
pub fn cometric_matrix(s: &SubRiemannianStructure, q: &[f64]) -> DMatrix<f64> {
    let dim = s.base_dim();
    let m = s.rank();
    let mut x_mat = DMatrix::zeros(dim, m);
    for (a, leg) in s.legs().iter().enumerate() {
        x_mat.set_column(a, &leg.eval(q));
    }
    let gram = s.gram_matrix(q);
    let gram_inv = gram
        .try_inverse()
        .expect("gram matrix not invertible at evaluation point");
    // symmetrize to make β = βᵀ exact despite rounding
    let beta = &x_mat * gram_inv * x_mat.transpose();
    0.5 * (&beta + beta.transpose())
}

/// `β_q(λ)` as a tangent vector: the horizontal lift direction.
pub fn cometric_apply(s: &SubRiemannianStructure, q: &[f64], lambda: &DVector<f64>) -> DVector<f64> {
    cometric_matrix(s, q) * lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gradient_check;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()
    }

    #[test]
    fn coordinate_momentum_is_a_fiber_coordinate() {
        let frame = FrameField::new(Side::Left, 1);
        let p = momentum_function(&frame.leg(0));
        // state (x, y, z, λ1, λ2, λ3)
        assert_eq!(p.eval(&[0.3, 0.5, 0.1, 2.0, 3.0, 4.0]), 2.0);
    }

    #[test]
    fn left_y_leg_momentum() {
        let frame = FrameField::new(Side::Left, 1);
        let p = momentum_function(&frame.leg(1));
        // P = λ2 + x λ3
        let x = 0.7;
        assert_relative_eq!(
            p.eval(&[x, 0.5, 0.1, 2.0, 3.0, 4.0]),
            3.0 + x * 4.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn right_x_leg_momentum() {
        let frame = FrameField::new(Side::Right, 1);
        let p = momentum_function(&frame.leg(0));
        // P = λ1 + y λ3
        let y = -1.2;
        assert_relative_eq!(
            p.eval(&[0.7, y, 0.1, 2.0, 3.0, 4.0]),
            2.0 + y * 4.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn momentum_is_linear_in_lambda() {
        let frame = FrameField::new(Side::Right, 2);
        let p = momentum_function(&frame.leg(3));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let q = random_point(&mut rng, 5);
            let l1 = random_point(&mut rng, 5);
            let l2 = random_point(&mut rng, 5);
            let mut s1 = q.clone();
            s1.extend(&l1);
            let mut s2 = q.clone();
            s2.extend(&l2);
            let mut s12 = q.clone();
            s12.extend(l1.iter().zip(&l2).map(|(a, b)| a + b));
            assert_relative_eq!(p.eval(&s12), p.eval(&s1) + p.eval(&s2), epsilon = 1e-12);
        }
    }

    #[test]
    fn hamiltonian_vanishes_at_zero_momentum() {
        let s = SubRiemannianStructure::invariant(MetricSpec::standard(2), Side::Right);
        let h = build_sr_hamiltonian(&s).unwrap();
        let state = [0.4, -0.2, 1.0, 0.3, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(h.eval(&state), 0.0);
    }

    #[test]
    fn hamiltonian_is_nonnegative_and_quadratic_rank_2n() {
        let spec = MetricSpec::new(vec![3.0, 1.0], 2.0).unwrap();
        let s = SubRiemannianStructure::invariant(spec, Side::Left);
        let h = build_sr_hamiltonian(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let state = random_point(&mut rng, 10);
            assert!(h.eval(&state) >= 0.0);
        }
        // λ-Hessian rank = 2n: compute Hessian in fiber directions at a point
        let q = random_point(&mut rng, 5);
        let dim = 5;
        let mut hess = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                // H is quadratic in λ, so second differences are exact
                let h_at = |li: f64, lj: f64| {
                    let mut s = q.clone();
                    s.extend(vec![0.0; dim]);
                    s[dim + i] += li;
                    s[dim + j] += lj;
                    h.eval(&s)
                };
                hess[(i, j)] = h_at(1.0, 1.0) - h_at(1.0, 0.0) - h_at(0.0, 1.0) + h_at(0.0, 0.0);
                if i == j {
                    hess[(i, j)] = 2.0 * h_at(1.0, 0.0);
                }
            }
        }
        let svd = hess.svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-10 * smax)
            .count();
        assert_eq!(rank, 4);
    }

    #[test]
    fn builder_gradients_are_exact() {
        let spec = MetricSpec::new(vec![2.0, 1.0], 0.5).unwrap();
        for side in [Side::Left, Side::Right] {
            let s = SubRiemannianStructure::invariant(spec.clone(), side);
            let h = build_sr_hamiltonian(&s).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..10 {
                let state = random_point(&mut rng, 10);
                assert!(gradient_check(&h, &state, 1e-5) < 1e-6);
            }
        }
    }

    #[test]
    fn cometric_rank_and_kernel() {
        let s = SubRiemannianStructure::invariant(MetricSpec::standard(1), Side::Left);
        let beta = cometric_matrix(&s, &[0.0, 0.0, 0.0]);
        // block-diagonal (identity 2, 0) at the identity
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        );
        assert_relative_eq!((beta - expected).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn cometric_is_psd_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for n in 1..=3 {
            let s = SubRiemannianStructure::invariant(MetricSpec::standard(n), Side::Right);
            for _ in 0..20 {
                let q = random_point(&mut rng, 2 * n + 1);
                let beta = cometric_matrix(&s, &q);
                let eigs = beta.symmetric_eigenvalues();
                assert!(eigs.iter().all(|&e| e >= -1e-12));
                let rank = eigs.iter().filter(|&&e| e > 1e-10).count();
                assert_eq!(rank, 2 * n);
            }
        }
    }

    #[test]
    fn singular_gram_rejected() {
        let frame = FrameField::new(Side::Left, 1);
        let gram = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = SubRiemannianStructure::new(frame.legs(), GramSpec::Constant(gram)).unwrap();
        assert!(matches!(build_sr_hamiltonian(&s), Err(SrError::SingularGram)));
    }
}
