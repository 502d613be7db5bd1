//! Scalar and vector fields with exact derivatives.
//!
//! A [`ScalarField`] packages one generic evaluation routine behind a trait
//! object that can be called at `f64` and at three nested dual levels, so
//! gradients (and the second derivatives needed by bracket-generated
//! integrals) come out of the same code path that computes values.
//! Finite differences appear only in [`fd_gradient`], the test oracle.

use std::sync::Arc;

use nalgebra::DVector;

use crate::autodiff::{Dual, Scalar, D1, D2, D3, D4};

/// Object-safe view of a field: one entry point per derivative level.
pub trait AnyField: Send + Sync {
    fn eval0(&self, x: &[f64]) -> f64;
    fn eval1(&self, x: &[D1]) -> D1;
    fn eval2(&self, x: &[D2]) -> D2;
    fn eval3(&self, x: &[D3]) -> D3;
}

/// Object-safe view of a vector field on a base chart.
pub trait AnyVectorField: Send + Sync {
    fn eval0(&self, q: &[f64]) -> Vec<f64>;
    fn eval1(&self, q: &[D1]) -> Vec<D1>;
    fn eval2(&self, q: &[D2]) -> Vec<D2>;
    fn eval3(&self, q: &[D3]) -> Vec<D3>;
}

/// Scalars at which dynamically-typed fields can be evaluated.
pub trait DiffScalar: Scalar {
    fn eval_dyn(f: &dyn AnyField, x: &[Self]) -> Self;
    fn eval_vec(f: &dyn AnyVectorField, q: &[Self]) -> Vec<Self>;
}

impl DiffScalar for f64 {
    fn eval_dyn(f: &dyn AnyField, x: &[Self]) -> Self {
        f.eval0(x)
    }

    fn eval_vec(f: &dyn AnyVectorField, q: &[Self]) -> Vec<Self> {
        f.eval0(q)
    }
}

impl DiffScalar for D1 {
    fn eval_dyn(f: &dyn AnyField, x: &[Self]) -> Self {
        f.eval1(x)
    }

    fn eval_vec(f: &dyn AnyVectorField, q: &[Self]) -> Vec<Self> {
        f.eval1(q)
    }
}

impl DiffScalar for D2 {
    fn eval_dyn(f: &dyn AnyField, x: &[Self]) -> Self {
        f.eval2(x)
    }

    fn eval_vec(f: &dyn AnyVectorField, q: &[Self]) -> Vec<Self> {
        f.eval2(q)
    }
}

impl DiffScalar for D3 {
    fn eval_dyn(f: &dyn AnyField, x: &[Self]) -> Self {
        f.eval3(x)
    }

    fn eval_vec(f: &dyn AnyVectorField, q: &[Self]) -> Vec<Self> {
        f.eval3(q)
    }
}

impl DiffScalar for D4 {
    fn eval_dyn(_f: &dyn AnyField, _x: &[Self]) -> Self {
        panic!("automatic differentiation depth exceeded (three nested levels supported)")
    }

    fn eval_vec(_f: &dyn AnyVectorField, _q: &[Self]) -> Vec<Self> {
        panic!("automatic differentiation depth exceeded (three nested levels supported)")
    }
}

/// A field definition: one evaluation routine, generic over the scalar.
///
/// The `Dual<S>: DiffScalar` bound lets implementations take gradients of
/// other fields at `S`-valued points, which is how bracket-generated
/// integrals obtain exact derivatives of their own.
pub trait FieldExpr: Send + Sync + 'static {
    fn eval<S: DiffScalar>(&self, x: &[S]) -> S
    where
        Dual<S>: DiffScalar;
}

struct ExprField<T>(T);

impl<T: FieldExpr> AnyField for ExprField<T> {
    fn eval0(&self, x: &[f64]) -> f64 {
        self.0.eval(x)
    }

    fn eval1(&self, x: &[D1]) -> D1 {
        self.0.eval(x)
    }

    fn eval2(&self, x: &[D2]) -> D2 {
        self.0.eval(x)
    }

    fn eval3(&self, x: &[D3]) -> D3 {
        self.0.eval(x)
    }
}

/// A named differentiable function on a chart of known dimension.
#[derive(Clone)]
pub struct ScalarField {
    name: Arc<str>,
    dim: usize,
    inner: Arc<dyn AnyField>,
}

impl ScalarField {
    pub fn new(name: impl Into<String>, dim: usize, expr: impl FieldExpr) -> Self {
        ScalarField {
            name: name.into().into(),
            dim,
            inner: Arc::new(ExprField(expr)),
        }
    }

    /// Wrap a hand-written [`AnyField`] (used by bracket-generated fields).
    pub fn from_any(name: impl Into<String>, dim: usize, inner: Arc<dyn AnyField>) -> Self {
        ScalarField {
            name: name.into().into(),
            dim,
            inner,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into().into();
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.inner.eval0(x)
    }

    pub fn eval_at<S: DiffScalar>(&self, x: &[S]) -> S {
        S::eval_dyn(self.inner.as_ref(), x)
    }

    /// Exact gradient via one dual sweep per coordinate.
    pub fn grad(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_vec(self.grad_at(x))
    }

    pub fn grad_at<S>(&self, x: &[S]) -> Vec<S>
    where
        S: DiffScalar,
        Dual<S>: DiffScalar,
    {
        let mut seed: Vec<Dual<S>> = x.iter().map(|&v| Dual::constant(v)).collect();
        (0..x.len())
            .map(|i| {
                seed[i].eps = S::one();
                let d = self.eval_at::<Dual<S>>(&seed).eps;
                seed[i].eps = S::zero();
                d
            })
            .collect()
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        ScalarField::new(format!("const({value})"), dim, Constant(value))
    }

    pub fn coordinate(dim: usize, index: usize, name: impl Into<String>) -> Self {
        assert!(index < dim);
        ScalarField::new(name, dim, Coordinate(index))
    }

    pub fn product(f: &ScalarField, g: &ScalarField) -> Self {
        assert_eq!(f.dim, g.dim);
        ScalarField::new(
            format!("{}*{}", f.name, g.name),
            f.dim,
            Product(f.clone(), g.clone()),
        )
    }

    pub fn sum(f: &ScalarField, g: &ScalarField) -> Self {
        assert_eq!(f.dim, g.dim);
        ScalarField::new(
            format!("{}+{}", f.name, g.name),
            f.dim,
            Sum(f.clone(), g.clone()),
        )
    }
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarField({}, dim={})", self.name, self.dim)
    }
}

struct Constant(f64);

impl FieldExpr for Constant {
    fn eval<S: DiffScalar>(&self, _x: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        S::from_f64(self.0)
    }
}

struct Coordinate(usize);

impl FieldExpr for Coordinate {
    fn eval<S: DiffScalar>(&self, x: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        x[self.0]
    }
}

struct Product(ScalarField, ScalarField);

impl FieldExpr for Product {
    fn eval<S: DiffScalar>(&self, x: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        self.0.eval_at(x) * self.1.eval_at(x)
    }
}

struct Sum(ScalarField, ScalarField);

impl FieldExpr for Sum {
    fn eval<S: DiffScalar>(&self, x: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        self.0.eval_at(x) + self.1.eval_at(x)
    }
}

/// A vector field definition generic over the scalar.
pub trait VectorFieldExpr: Send + Sync + 'static {
    fn eval<S: DiffScalar>(&self, q: &[S]) -> Vec<S>
    where
        Dual<S>: DiffScalar;
}

struct ExprVectorField<T>(T);

impl<T: VectorFieldExpr> AnyVectorField for ExprVectorField<T> {
    fn eval0(&self, q: &[f64]) -> Vec<f64> {
        self.0.eval(q)
    }

    fn eval1(&self, q: &[D1]) -> Vec<D1> {
        self.0.eval(q)
    }

    fn eval2(&self, q: &[D2]) -> Vec<D2> {
        self.0.eval(q)
    }

    fn eval3(&self, q: &[D3]) -> Vec<D3> {
        self.0.eval(q)
    }
}

/// A named vector field on a chart; components carry exact derivatives.
#[derive(Clone)]
pub struct VectorField {
    name: Arc<str>,
    dim: usize,
    inner: Arc<dyn AnyVectorField>,
}

impl VectorField {
    pub fn new(name: impl Into<String>, dim: usize, expr: impl VectorFieldExpr) -> Self {
        VectorField {
            name: name.into().into(),
            dim,
            inner: Arc::new(ExprVectorField(expr)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, q: &[f64]) -> DVector<f64> {
        DVector::from_vec(self.eval_at(q))
    }

    pub fn eval_at<S: DiffScalar>(&self, q: &[S]) -> Vec<S> {
        S::eval_vec(self.inner.as_ref(), q)
    }

    /// Jacobian matrix ∂X^i/∂q^j via dual sweeps.
    pub fn jacobian(&self, q: &[f64]) -> nalgebra::DMatrix<f64> {
        let mut seed: Vec<D1> = q.iter().map(|&v| Dual::constant(v)).collect();
        let mut jac = nalgebra::DMatrix::zeros(self.dim, q.len());
        for j in 0..q.len() {
            seed[j].eps = 1.0;
            let col = self.eval_at::<D1>(&seed);
            for (i, c) in col.iter().enumerate() {
                jac[(i, j)] = c.eps;
            }
            seed[j].eps = 0.0;
        }
        jac
    }

    /// Pointwise linear combination Σ coeffs[b]·legs[b].
    pub fn linear_combination(
        name: impl Into<String>,
        coeffs: Vec<f64>,
        legs: Vec<VectorField>,
    ) -> Self {
        assert_eq!(coeffs.len(), legs.len());
        assert!(!legs.is_empty());
        let dim = legs[0].dim;
        assert!(legs.iter().all(|l| l.dim == dim));
        VectorField::new(name, dim, LinearCombination { coeffs, legs })
    }
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "VectorField({}, dim={})", self.name, self.dim)
    }
}

struct LinearCombination {
    coeffs: Vec<f64>,
    legs: Vec<VectorField>,
}

impl VectorFieldExpr for LinearCombination {
    fn eval<S: DiffScalar>(&self, q: &[S]) -> Vec<S>
    where
        Dual<S>: DiffScalar,
    {
        let mut out = vec![S::zero(); q.len()];
        for (c, leg) in self.coeffs.iter().zip(&self.legs) {
            let cs = S::from_f64(*c);
            let vals = leg.eval_at(q);
            for (o, v) in out.iter_mut().zip(vals) {
                *o += cs * v;
            }
        }
        out
    }
}

/// Evaluate a vector field at any differentiation level.
pub fn eval_vector_generic<S: DiffScalar>(leg: &VectorField, q: &[S]) -> Vec<S> {
    leg.eval_at(q)
}

/// Commutator [X, Y] = DY·X − DX·Y evaluated at a point.
pub fn commutator_at(x_field: &VectorField, y_field: &VectorField, q: &[f64]) -> DVector<f64> {
    let xq = x_field.eval(q);
    let yq = y_field.eval(q);
    let dx = x_field.jacobian(q);
    let dy = y_field.jacobian(q);
    dy * xq - dx * yq
}

/// Central finite-difference gradient, the independent derivative oracle.
pub fn fd_gradient(f: &ScalarField, x: &[f64], h: f64) -> DVector<f64> {
    let mut xp = x.to_vec();
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f.eval(&xp);
        xp[i] = orig - h;
        let fm = f.eval(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Worst relative mismatch between the exact gradient and central
/// differences with step `h`, normalized by `max(1, |component|)`.
pub fn gradient_check(f: &ScalarField, x: &[f64], h: f64) -> f64 {
    let exact = f.grad(x);
    let fd = fd_gradient(f, x, h);
    exact
        .iter()
        .zip(fd.iter())
        .map(|(a, b)| (a - b).abs() / f64::max(1.0, a.abs()))
        .fold(0.0, f64::max)
}
