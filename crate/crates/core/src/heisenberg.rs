//! Heisenberg group and algebra arithmetic, invariant frames, and metric
//! normal forms.
//!
//! The normative chart is the matrix ("polarized") model: a point
//! `(x, y, z)` with `x, y ∈ ℝⁿ` stands for the upper-triangular matrix with
//! first row `(1, xᵀ, z)`, middle block `(I, y)`, so that multiplication
//! composes the center as `z_g + z_h + ⟨x_g, y_h⟩`.
//!
//! Sign convention: the symplectic pairing is fixed by `ω(e_i, f_i) = +1`,
//! which is forced by the commutators `[e_i, f_i] = ξ`. Written as a matrix
//! this is `ω(u, v) = uᵀ J v` with `J = [[0, E], [-E, 0]]`; the opposite
//! block layout `[[0, -E], [E, 0]]` would give `ω(e_i, f_i) = -1` and is not
//! used anywhere in this crate.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::autodiff::{Dual, Scalar};
use crate::field::{DiffScalar, VectorField, VectorFieldExpr};

#[derive(Debug, Error, PartialEq)]
pub enum HeisenbergError {
    #[error("dimension mismatch: n = {left} vs n = {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("entries must be finite")]
    NonFinite,
    #[error("n must be at least 1")]
    ZeroDimension,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("sigma must be non-increasing")]
    NotSorted,
    #[error("the last sigma entry must equal 1")]
    LastSigmaNotOne,
    #[error("tau must be positive")]
    NonPositiveTau,
    #[error("sigma must have at least one entry")]
    EmptySigma,
}

/// A point of the (2n+1)-dimensional Heisenberg group in the matrix chart.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    x: DVector<f64>,
    y: DVector<f64>,
    z: f64,
}

impl GroupElement {
    pub fn new(x: DVector<f64>, y: DVector<f64>, z: f64) -> Result<Self, HeisenbergError> {
        if x.is_empty() {
            return Err(HeisenbergError::ZeroDimension);
        }
        if x.len() != y.len() {
            return Err(HeisenbergError::DimensionMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        if !x.iter().chain(y.iter()).all(|v| v.is_finite()) || !z.is_finite() {
            return Err(HeisenbergError::NonFinite);
        }
        Ok(GroupElement { x, y, z })
    }

    pub fn from_slices(x: &[f64], y: &[f64], z: f64) -> Result<Self, HeisenbergError> {
        GroupElement::new(DVector::from_row_slice(x), DVector::from_row_slice(y), z)
    }

    pub fn identity(n: usize) -> Self {
        GroupElement {
            x: DVector::zeros(n),
            y: DVector::zeros(n),
            z: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// Group product; the center picks up `⟨x_g, y_h⟩`.
    pub fn mul(&self, other: &GroupElement) -> Result<GroupElement, HeisenbergError> {
        if self.n() != other.n() {
            return Err(HeisenbergError::DimensionMismatch {
                left: self.n(),
                right: other.n(),
            });
        }
        Ok(GroupElement {
            x: &self.x + &other.x,
            y: &self.y + &other.y,
            z: self.z + other.z + self.x.dot(&other.y),
        })
    }

    /// `g⁻¹ = (-x, -y, -z + ⟨x, y⟩)`.
    pub fn inverse(&self) -> GroupElement {
        GroupElement {
            x: -&self.x,
            y: -&self.y,
            z: -self.z + self.x.dot(&self.y),
        }
    }

    /// Coordinates `(x, y, z)` flattened to a length 2n+1 vector.
    pub fn coords(&self) -> DVector<f64> {
        let n = self.n();
        let mut v = DVector::zeros(2 * n + 1);
        v.rows_mut(0, n).copy_from(&self.x);
        v.rows_mut(n, n).copy_from(&self.y);
        v[2 * n] = self.z;
        v
    }

    pub fn from_coords(coords: &[f64]) -> Result<Self, HeisenbergError> {
        if coords.len() < 3 || coords.len() % 2 == 0 {
            return Err(HeisenbergError::ZeroDimension);
        }
        let n = (coords.len() - 1) / 2;
        GroupElement::from_slices(&coords[..n], &coords[n..2 * n], coords[2 * n])
    }
}

/// An element `(a, α)` of the Heisenberg algebra, `a ∈ ℝ²ⁿ`, `α` central.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraVector {
    pub a: DVector<f64>,
    pub alpha: f64,
}

impl AlgebraVector {
    pub fn new(a: DVector<f64>, alpha: f64) -> Result<Self, HeisenbergError> {
        if a.is_empty() || a.len() % 2 != 0 {
            return Err(HeisenbergError::ZeroDimension);
        }
        if !a.iter().all(|v| v.is_finite()) || !alpha.is_finite() {
            return Err(HeisenbergError::NonFinite);
        }
        Ok(AlgebraVector { a, alpha })
    }

    pub fn n(&self) -> usize {
        self.a.len() / 2
    }

    /// Basis vector `e_i`, `i = 0..n`.
    pub fn e(n: usize, i: usize) -> Self {
        let mut a = DVector::zeros(2 * n);
        a[i] = 1.0;
        AlgebraVector { a, alpha: 0.0 }
    }

    /// Basis vector `f_i`, `i = 0..n`.
    pub fn f(n: usize, i: usize) -> Self {
        let mut a = DVector::zeros(2 * n);
        a[n + i] = 1.0;
        AlgebraVector { a, alpha: 0.0 }
    }

    /// Central generator `ξ`.
    pub fn xi(n: usize) -> Self {
        AlgebraVector {
            a: DVector::zeros(2 * n),
            alpha: 1.0,
        }
    }
}

/// `[(a, α), (b, β)] = (0, ω(a, b))`: two-step nilpotency puts the bracket
/// in the center.
pub fn lie_bracket(
    v: &AlgebraVector,
    w: &AlgebraVector,
) -> Result<AlgebraVector, HeisenbergError> {
    if v.n() != w.n() {
        return Err(HeisenbergError::DimensionMismatch {
            left: v.n(),
            right: w.n(),
        });
    }
    let form = SymplecticForm::new(v.n());
    Ok(AlgebraVector {
        a: DVector::zeros(2 * v.n()),
        alpha: form.omega(&v.a, &w.a),
    })
}

/// The standard symplectic form on ℝ²ⁿ with `ω(e_i, f_i) = +1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymplecticForm {
    n: usize,
}

impl SymplecticForm {
    /// Pairing sign of `(e_i, f_i)`, fixed once for the whole crate.
    pub const PAIRING_SIGN: f64 = 1.0;

    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        SymplecticForm { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `ω(u, v) = Σ_i (u_i v_{n+i} - u_{n+i} v_i)`.
    pub fn omega(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let n = self.n;
        (0..n).map(|i| u[i] * v[n + i] - u[n + i] * v[i]).sum()
    }

    /// Matrix `J` with `ω(u, v) = uᵀ J v`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            j[(i, n + i)] = Self::PAIRING_SIGN;
            j[(n + i, i)] = -Self::PAIRING_SIGN;
        }
        j
    }

    /// Product in the symplectic (ω-twisted) model of the group:
    /// `(u, ζ)·(v, χ) = (u + v, ζ + χ + ω(u, v))`.
    pub fn heisenberg_product(
        &self,
        u: &DVector<f64>,
        zeta: f64,
        v: &DVector<f64>,
        chi: f64,
    ) -> (DVector<f64>, f64) {
        (u + v, zeta + chi + self.omega(u, v))
    }
}

/// Isomorphism from the ω-twisted model onto the matrix chart.
///
/// The chart change is `Φ(u, ζ) = (u_x, 2 u_y, ζ + ⟨u_x, u_y⟩)` for
/// `u = (u_x, u_y)`. The doubling of the second leg is forced: the matrix
/// chart twists the center by `⟨x_g, y_h⟩`, whose antisymmetric part is
/// `ω/2`, so a linear map `A` with `ω(Au, Av) = 2 ω(u, v)` is required, and
/// `A = diag(E, 2E)` keeps the center and the `e`-directions pointwise
/// fixed. The quadratic offset `⟨u_x, u_y⟩` then matches the symmetric
/// parts; `Φ(g)·Φ(h) = Φ(g ·_ω h)` holds exactly.
pub fn symplectic_to_matrix_chart(u: &DVector<f64>, zeta: f64) -> GroupElement {
    assert!(u.len() >= 2 && u.len() % 2 == 0, "u must have length 2n");
    let n = u.len() / 2;
    let ux = u.rows(0, n).into_owned();
    let uy = u.rows(n, n).into_owned();
    let offset = ux.dot(&uy);
    GroupElement {
        x: ux,
        y: 2.0 * uy,
        z: zeta + offset,
    }
}

/// Which translations generate the invariant frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Left => write!(f, "left"),
            Side::Right => write!(f, "right"),
        }
    }
}

/// The 2n spanning legs of the invariant distribution, as vector fields on
/// the (2n+1)-dimensional chart.
///
/// Left frame: `∂/∂x_k` and `∂/∂y_k + x_k ∂/∂z`.
/// Right frame: `∂/∂x_k + y_k ∂/∂z` and `∂/∂y_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameField {
    pub side: Side,
    pub n: usize,
}

impl FrameField {
    pub fn new(side: Side, n: usize) -> Self {
        assert!(n >= 1);
        FrameField { side, n }
    }

    pub fn rank(&self) -> usize {
        2 * self.n
    }

    pub fn base_dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn leg(&self, index: usize) -> VectorField {
        assert!(index < 2 * self.n);
        let name = if index < self.n {
            format!("{}X{}", self.side, index + 1)
        } else {
            format!("{}Y{}", self.side, index - self.n + 1)
        };
        VectorField::new(
            name,
            self.base_dim(),
            FrameLeg {
                side: self.side,
                n: self.n,
                index,
            },
        )
    }

    pub fn legs(&self) -> Vec<VectorField> {
        (0..2 * self.n).map(|i| self.leg(i)).collect()
    }

    /// Leg components stacked as columns of a (2n+1)×2n matrix.
    pub fn matrix_at(&self, g: &GroupElement) -> DMatrix<f64> {
        assert_eq!(g.n(), self.n);
        let coords = g.coords();
        let mut m = DMatrix::zeros(self.base_dim(), self.rank());
        for (a, leg) in self.legs().iter().enumerate() {
            m.set_column(a, &leg.eval(coords.as_slice()));
        }
        m
    }
}

struct FrameLeg {
    side: Side,
    n: usize,
    index: usize,
}

impl VectorFieldExpr for FrameLeg {
    fn eval<S: DiffScalar>(&self, q: &[S]) -> Vec<S>
    where
        Dual<S>: DiffScalar,
    {
        let n = self.n;
        debug_assert_eq!(q.len(), 2 * n + 1);
        let mut out = vec![S::zero(); 2 * n + 1];
        out[self.index] = S::one();
        match self.side {
            Side::Left => {
                // y-legs pick up x_k ∂/∂z
                if self.index >= n {
                    out[2 * n] = q[self.index - n];
                }
            }
            Side::Right => {
                // x-legs pick up y_k ∂/∂z
                if self.index < n {
                    out[2 * n] = q[n + self.index];
                }
            }
        }
        out
    }
}

/// Normal form `(σ_1 ≥ … ≥ σ_n = 1, τ > 0)` of a left-invariant metric.
///
/// Construction validates strictly; specs outside the normal form are
/// rejected, never normalized.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricSpec {
    sigma: Vec<f64>,
    tau: f64,
}

impl MetricSpec {
    pub fn new(sigma: Vec<f64>, tau: f64) -> Result<Self, MetricError> {
        if sigma.is_empty() {
            return Err(MetricError::EmptySigma);
        }
        if sigma.windows(2).any(|w| w[0] < w[1]) {
            return Err(MetricError::NotSorted);
        }
        if *sigma.last().unwrap() != 1.0 {
            return Err(MetricError::LastSigmaNotOne);
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(MetricError::NonPositiveTau);
        }
        Ok(MetricSpec { sigma, tau })
    }

    /// σ = (1, …, 1), τ = 1.
    pub fn standard(n: usize) -> Self {
        MetricSpec {
            sigma: vec![1.0; n],
            tau: 1.0,
        }
    }

    /// σ = (1, …, 1) with a free τ > 0.
    pub fn round_with_tau(n: usize, tau: f64) -> Result<Self, MetricError> {
        MetricSpec::new(vec![1.0; n], tau)
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn is_round(&self) -> bool {
        self.sigma.iter().all(|&s| s == 1.0)
    }
}

/// Coordinate matrix of the left-invariant metric at a point, in blocks
/// `[[D(σ), 0, 0], [0, τ x xᵀ + D(σ), -τ x], [0, -τ xᵀ, τ]]`.
pub fn riemannian_metric_matrix(spec: &MetricSpec, g: &GroupElement) -> DMatrix<f64> {
    assert_eq!(g.n(), spec.n());
    let coords = g.coords();
    let vals = metric_matrix_generic::<f64>(spec, coords.as_slice());
    let dim = 2 * spec.n() + 1;
    DMatrix::from_fn(dim, dim, |i, j| vals[i][j])
}

/// Metric matrix entries at a chart point, generic over the scalar so the
/// sub-Riemannian builder can differentiate through them.
pub fn metric_matrix_generic<S: Scalar>(spec: &MetricSpec, q: &[S]) -> Vec<Vec<S>> {
    let n = spec.n();
    debug_assert!(q.len() >= 2 * n + 1);
    let dim = 2 * n + 1;
    let tau = S::from_f64(spec.tau());
    let mut m = vec![vec![S::zero(); dim]; dim];
    for k in 0..n {
        let s = S::from_f64(spec.sigma()[k]);
        m[k][k] = s;
        m[n + k][n + k] = s;
    }
    for j in 0..n {
        for k in 0..n {
            m[n + j][n + k] += tau * q[j] * q[k];
        }
        m[n + j][2 * n] = -(tau * q[j]);
        m[2 * n][n + j] = -(tau * q[j]);
    }
    m[2 * n][2 * n] = tau;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn g(x: &[f64], y: &[f64], z: f64) -> GroupElement {
        GroupElement::from_slices(x, y, z).unwrap()
    }

    #[test]
    fn product_twists_center_by_x_dot_y() {
        let a = g(&[1.0], &[0.0], 0.0);
        let b = g(&[0.0], &[1.0], 0.0);
        assert_eq!(a.mul(&b).unwrap(), g(&[1.0], &[1.0], 1.0));
        // the other order leaves the center alone
        assert_eq!(b.mul(&a).unwrap(), g(&[1.0], &[1.0], 0.0));
    }

    #[test]
    fn identity_and_inverse() {
        let a = g(&[1.5, -0.25], &[0.75, 2.0], -3.0);
        let e = GroupElement::identity(2);
        assert_eq!(a.mul(&e).unwrap(), a);
        assert_eq!(e.mul(&a).unwrap(), a);
        let inv = a.inverse();
        let prod = a.mul(&inv).unwrap();
        assert_relative_eq!(prod.coords().norm(), 0.0, epsilon = 1e-15);
        assert_eq!(inv.z(), 3.0 + a.x().dot(a.y()));
    }

    #[test]
    fn associativity_on_integer_points() {
        let a = g(&[1.0, 2.0], &[3.0, -1.0], 2.0);
        let b = g(&[-2.0, 0.0], &[1.0, 4.0], -1.0);
        let c = g(&[5.0, -3.0], &[2.0, 2.0], 7.0);
        let lhs = a.mul(&b).unwrap().mul(&c).unwrap();
        let rhs = a.mul(&b.mul(&c).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = g(&[1.0], &[0.0], 0.0);
        let b = g(&[1.0, 2.0], &[0.0, 0.0], 0.0);
        assert!(matches!(
            a.mul(&b),
            Err(HeisenbergError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bracket_of_basis_vectors() {
        let n = 2;
        let ef = lie_bracket(&AlgebraVector::e(n, 0), &AlgebraVector::f(n, 0)).unwrap();
        assert_eq!(ef, AlgebraVector::xi(n));
        let xi_v = lie_bracket(&AlgebraVector::xi(n), &AlgebraVector::e(n, 1)).unwrap();
        assert_eq!(xi_v.alpha, 0.0);
        assert_eq!(xi_v.a.norm(), 0.0);
        let ee = lie_bracket(&AlgebraVector::e(n, 0), &AlgebraVector::e(n, 1)).unwrap();
        assert_eq!(ee.alpha, 0.0);
    }

    #[test]
    fn bracket_is_bilinear_and_antisymmetric() {
        let v = AlgebraVector::new(dvector![1.0, -2.0, 0.5, 3.0], 1.0).unwrap();
        let w = AlgebraVector::new(dvector![0.0, 1.0, -1.0, 2.0], -4.0).unwrap();
        let vw = lie_bracket(&v, &w).unwrap();
        let wv = lie_bracket(&w, &v).unwrap();
        assert_eq!(vw.alpha, -wv.alpha);
        // bracket lands in the center
        assert_eq!(vw.a.norm(), 0.0);
    }

    #[test]
    fn jacobi_identity_is_trivial() {
        // every double bracket vanishes because brackets are central
        let n = 3;
        let v = AlgebraVector::e(n, 0);
        let w = AlgebraVector::f(n, 0);
        let u = AlgebraVector::e(n, 2);
        let a = lie_bracket(&lie_bracket(&v, &w).unwrap(), &u).unwrap();
        let b = lie_bracket(&lie_bracket(&w, &u).unwrap(), &v).unwrap();
        let c = lie_bracket(&lie_bracket(&u, &v).unwrap(), &w).unwrap();
        assert_eq!(a.alpha + b.alpha + c.alpha, 0.0);
    }

    #[test]
    fn omega_sign_convention() {
        let form = SymplecticForm::new(2);
        let e1 = dvector![1.0, 0.0, 0.0, 0.0];
        let f1 = dvector![0.0, 0.0, 1.0, 0.0];
        assert_eq!(form.omega(&e1, &f1), 1.0);
        assert_eq!(form.omega(&f1, &e1), -1.0);
        // matrix route agrees
        assert_eq!((e1.transpose() * form.matrix() * &f1)[(0, 0)], 1.0);
    }

    #[test]
    fn chart_isomorphism_fixes_center_and_intertwines() {
        let u = dvector![0.0, 0.0];
        let mapped = symplectic_to_matrix_chart(&u, 3.5);
        assert_eq!(mapped, g(&[0.0], &[0.0], 3.5));

        let p = symplectic_to_matrix_chart(&dvector![1.0, 0.0], 0.0);
        assert_eq!(p, g(&[1.0], &[0.0], 0.0));
    }

    #[test]
    fn chart_isomorphism_intertwines_products() {
        let form = SymplecticForm::new(2);
        let u = dvector![0.3, -1.2, 0.8, 2.0];
        let v = dvector![1.1, 0.4, -0.6, 0.1];
        let (zeta, chi) = (0.7, -2.2);
        let (uv, zc) = form.heisenberg_product(&u, zeta, &v, chi);
        let lhs = symplectic_to_matrix_chart(&u, zeta)
            .mul(&symplectic_to_matrix_chart(&v, chi))
            .unwrap();
        let rhs = symplectic_to_matrix_chart(&uv, zc);
        assert_relative_eq!((lhs.coords() - rhs.coords()).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn frames_at_identity_are_coordinate_frames() {
        for side in [Side::Left, Side::Right] {
            let frame = FrameField::new(side, 2);
            let m = frame.matrix_at(&GroupElement::identity(2));
            for a in 0..4 {
                for i in 0..5 {
                    let expect = if i == a { 1.0 } else { 0.0 };
                    assert_eq!(m[(i, a)], expect);
                }
            }
        }
    }

    #[test]
    fn frame_z_coefficients() {
        let left = FrameField::new(Side::Left, 1);
        let at = g(&[2.0], &[0.0], 0.0);
        let m = left.matrix_at(&at);
        // y-leg carries x ∂/∂z
        assert_eq!(m[(2, 1)], 2.0);
        assert_eq!(m[(2, 0)], 0.0);

        let right = FrameField::new(Side::Right, 1);
        let at = g(&[0.0], &[3.0], 0.0);
        let m = right.matrix_at(&at);
        // x-leg carries y ∂/∂z
        assert_eq!(m[(2, 0)], 3.0);
        assert_eq!(m[(2, 1)], 0.0);
    }

    #[test]
    fn metric_validation() {
        assert!(MetricSpec::new(vec![2.0, 1.0], 1.0).is_ok());
        assert_eq!(
            MetricSpec::new(vec![1.0, 2.0], 1.0),
            Err(MetricError::NotSorted)
        );
        assert_eq!(
            MetricSpec::new(vec![1.0], 0.0),
            Err(MetricError::NonPositiveTau)
        );
        assert_eq!(
            MetricSpec::new(vec![2.0, 1.5], 1.0),
            Err(MetricError::LastSigmaNotOne)
        );
        assert_eq!(MetricSpec::new(vec![], 1.0), Err(MetricError::EmptySigma));
    }

    #[test]
    fn metric_matrix_at_identity_is_block_diagonal() {
        let spec = MetricSpec::new(vec![1.0], 1.0).unwrap();
        let m = riemannian_metric_matrix(&spec, &GroupElement::identity(1));
        assert_eq!(m, DMatrix::identity(3, 3));
    }

    #[test]
    fn metric_matrix_block_layout() {
        let spec = MetricSpec::new(vec![1.0], 1.0).unwrap();
        let m = riemannian_metric_matrix(&spec, &g(&[1.0], &[0.0], 0.0));
        assert_eq!(m[(1, 1)], 2.0); // 1 + x²
        assert_eq!(m[(1, 2)], -1.0); // -τ x
        assert_eq!(m[(2, 1)], -1.0);
        assert_eq!(m[(2, 2)], 1.0);
        assert_eq!(m[(0, 0)], 1.0);
    }
}
