//! Poisson tensors per chart, numerical brackets, bracket-generated
//! integrals, and the completeness audit.
//!
//! Tensors are stored as their strictly-upper entries, so skew-symmetry is
//! exact by construction. Entries may depend on the state (the
//! hyperspherical chart does); they are [`ScalarField`]s and therefore
//! evaluable at dual points, which keeps bracket-generated integrals inside
//! the exact-derivative contract.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

use crate::autodiff::{Dual, D1, D2, D3};
use crate::field::{AnyField, DiffScalar, FieldExpr, ScalarField};
use crate::heisenberg::Side;
use crate::hyperspherical::psi_values;
use crate::systems::SystemId;

#[derive(Debug, Error, PartialEq)]
pub enum AuditError {
    #[error("audit needs at least {min} sample points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("family members live on a chart of dimension {family}, system chart has {chart}")]
    ChartMismatch { family: usize, chart: usize },
}

#[derive(Clone)]
enum TensorEntry {
    Const(f64),
    Field(ScalarField),
}

impl TensorEntry {
    fn value_at<S: DiffScalar>(&self, x: &[S]) -> S {
        match self {
            TensorEntry::Const(c) => S::from_f64(*c),
            TensorEntry::Field(f) => f.eval_at(x),
        }
    }
}

/// A state-dependent skew matrix field defining brackets on a chart.
#[derive(Clone)]
pub struct PoissonTensor {
    dim: usize,
    entries: Vec<(usize, usize, TensorEntry)>,
}

impl PoissonTensor {
    /// Canonical structure on a cotangent chart split as (q, p).
    pub fn canonical(dim: usize) -> Self {
        assert!(dim % 2 == 0, "canonical chart needs an even split");
        let m = dim / 2;
        let entries = (0..m)
            .map(|i| (i, m + i, TensorEntry::Const(1.0)))
            .collect();
        PoissonTensor { dim, entries }
    }

    /// Magnetic structure on the reduced chart `(x, y, p)`:
    /// `{x_k, p_k} = {y_k, p_{k+n}} = 1` and `{p_k, p_{k+n}} = ±C`
    /// (`+C` for the LR reduction, `-C` for the LL reduction).
    pub fn magnetic(n: usize, c: f64, side: Side) -> Self {
        let dim = 4 * n;
        let coupling = match side {
            Side::Right => c,
            Side::Left => -c,
        };
        let mut entries = Vec::with_capacity(3 * n);
        for k in 0..n {
            entries.push((k, 2 * n + k, TensorEntry::Const(1.0)));
            entries.push((n + k, 3 * n + k, TensorEntry::Const(1.0)));
            if coupling != 0.0 {
                entries.push((2 * n + k, 3 * n + k, TensorEntry::Const(coupling)));
            }
        }
        PoissonTensor { dim, entries }
    }

    /// Pushforward of the magnetic structure to the hyperspherical chart.
    ///
    /// The canonical block survives; the momentum block is the pullback of
    /// the magnetic two-form `C Σ dx_k ∧ dy_k = C Σ R_k dR_k ∧ dφ_k`:
    ///
    /// ```text
    /// {p_r, p_{φ_k}}     =  C r ψ_k,
    /// {p_{θ_j}, p_{φ_k}} =  (C r²/2) ∂ψ_k/∂θ_j,
    /// ```
    ///
    /// and all other momentum brackets vanish. The test suite confirms the
    /// entries against the Jacobian congruence `Λ' = J Λ Jᵀ`.
    pub fn hyperspherical(n: usize, c: f64) -> Self {
        let dim = 4 * n;
        let mut entries = Vec::new();
        for i in 0..2 * n {
            entries.push((i, 2 * n + i, TensorEntry::Const(1.0)));
        }
        if c != 0.0 {
            for k in 1..=n {
                entries.push((
                    2 * n,
                    3 * n - 1 + k,
                    TensorEntry::Field(ScalarField::new(
                        format!("{{pr,pphi{k}}}"),
                        dim,
                        HsTensorEntry {
                            n,
                            c,
                            kind: HsEntryKind::RadialPhi { k },
                        },
                    )),
                ));
                for j in 1..n {
                    if j <= n - k || j == n - k + 1 {
                        entries.push((
                            2 * n + j,
                            3 * n - 1 + k,
                            TensorEntry::Field(ScalarField::new(
                                format!("{{pth{j},pphi{k}}}"),
                                dim,
                                HsTensorEntry {
                                    n,
                                    c,
                                    kind: HsEntryKind::ThetaPhi { j, k },
                                },
                            )),
                        ));
                    }
                }
            }
        }
        PoissonTensor { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dense skew matrix at a state; `Λ + Λᵀ = 0` holds exactly.
    pub fn matrix_at(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, e) in &self.entries {
            let v = e.value_at(x);
            m[(*i, *j)] = v;
            m[(*j, *i)] = -v;
        }
        m
    }

    /// `{f, g}(x) = ∇fᵀ Λ ∇g`.
    pub fn bracket(&self, f: &ScalarField, g: &ScalarField, x: &[f64]) -> f64 {
        self.bracket_at::<f64>(f, g, x)
    }

    pub fn bracket_at<S>(&self, f: &ScalarField, g: &ScalarField, x: &[S]) -> S
    where
        S: DiffScalar,
        Dual<S>: DiffScalar,
    {
        let gf = f.grad_at(x);
        let gg = g.grad_at(x);
        let mut acc = S::zero();
        for (i, j, e) in &self.entries {
            let lam = e.value_at(x);
            acc += lam * (gf[*i] * gg[*j] - gf[*j] * gg[*i]);
        }
        acc
    }

    /// The coordinate bracket `{x_i, x_j}` as a field.
    pub fn entry_field(&self, i: usize, j: usize) -> ScalarField {
        let name = format!("{{x{i},x{j}}}");
        for (a, b, e) in &self.entries {
            let val = match e {
                TensorEntry::Const(c) => ScalarField::constant(self.dim, *c),
                TensorEntry::Field(f) => f.clone(),
            };
            if (*a, *b) == (i, j) {
                return val.renamed(name);
            }
            if (*a, *b) == (j, i) {
                return negate_field(&val).renamed(name);
            }
        }
        ScalarField::constant(self.dim, 0.0).renamed(name)
    }

    /// Cyclic Jacobi sum `{{x_i,x_j},x_k} + {{x_j,x_k},x_i} + {{x_k,x_i},x_j}`.
    pub fn jacobi_residual(&self, x: &[f64], i: usize, j: usize, k: usize) -> f64 {
        let coord = |c: usize| ScalarField::coordinate(self.dim, c, format!("x{c}"));
        let mut acc = 0.0;
        for (a, b, c) in [(i, j, k), (j, k, i), (k, i, j)] {
            acc += self.bracket(&self.entry_field(a, b), &coord(c), x);
        }
        acc
    }

    /// The Hamiltonian vector field `Λ ∇H` at a state.
    pub fn hamiltonian_flow(&self, h: &ScalarField, x: &[f64]) -> DVector<f64> {
        let grad = h.grad(x);
        let mut out = DVector::zeros(self.dim);
        for (i, j, e) in &self.entries {
            let lam = e.value_at(x);
            out[*i] += lam * grad[*j];
            out[*j] -= lam * grad[*i];
        }
        out
    }
}

fn negate_field(f: &ScalarField) -> ScalarField {
    struct Neg(ScalarField);
    impl FieldExpr for Neg {
        fn eval<S: DiffScalar>(&self, x: &[S]) -> S
        where
            Dual<S>: DiffScalar,
        {
            -self.0.eval_at(x)
        }
    }
    ScalarField::new(format!("-({})", f.name()), f.dim(), Neg(f.clone()))
}

enum HsEntryKind {
    /// `{p_r, p_{φ_k}} = C r ψ_k`
    RadialPhi { k: usize },
    /// `{p_{θ_j}, p_{φ_k}} = (C r²/2) ∂ψ_k/∂θ_j`
    ThetaPhi { j: usize, k: usize },
}

struct HsTensorEntry {
    n: usize,
    c: f64,
    kind: HsEntryKind,
}

impl FieldExpr for HsTensorEntry {
    fn eval<S: DiffScalar>(&self, x: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let n = self.n;
        let c = S::from_f64(self.c);
        let r = x[0];
        let psi = psi_values(n, x);
        match self.kind {
            HsEntryKind::RadialPhi { k } => c * r * psi[k - 1],
            HsEntryKind::ThetaPhi { j, k } => {
                // ∂ψ_k/∂θ_j = ψ_k · (-2 tanθ_j) for j ≤ n-k,
                //            = ψ_k · (+2 cotθ_j) for j = n-k+1
                let theta = x[j];
                let half_c_r2 = S::from_f64(0.5 * self.c) * r * r;
                if j <= n - k {
                    let factor = -(S::from_f64(2.0) * theta.tan());
                    half_c_r2 * psi[k - 1] * factor
                } else {
                    let factor = S::from_f64(2.0) / theta.tan();
                    half_c_r2 * psi[k - 1] * factor
                }
            }
        }
    }

    // keep `c` out of the match so the zero tensor short-circuits above
}

/// Bracket-generated first integral `{f, g}` with exact derivatives of its
/// own, obtained by running the bracket at one dual level deeper.
pub fn derived_integral(
    tensor: &PoissonTensor,
    f: &ScalarField,
    g: &ScalarField,
    name: impl Into<String>,
) -> ScalarField {
    assert_eq!(f.dim(), tensor.dim());
    assert_eq!(g.dim(), tensor.dim());
    let inner = DerivedBracket {
        tensor: tensor.clone(),
        f: f.clone(),
        g: g.clone(),
    };
    ScalarField::from_any(name, tensor.dim(), Arc::new(inner))
}

struct DerivedBracket {
    tensor: PoissonTensor,
    f: ScalarField,
    g: ScalarField,
}

impl AnyField for DerivedBracket {
    fn eval0(&self, x: &[f64]) -> f64 {
        self.tensor.bracket_at::<f64>(&self.f, &self.g, x)
    }

    fn eval1(&self, x: &[D1]) -> D1 {
        self.tensor.bracket_at::<D1>(&self.f, &self.g, x)
    }

    fn eval2(&self, x: &[D2]) -> D2 {
        self.tensor.bracket_at::<D2>(&self.f, &self.g, x)
    }

    fn eval3(&self, x: &[D3]) -> D3 {
        self.tensor.bracket_at::<D3>(&self.f, &self.g, x)
    }
}

/// An ordered family of first integrals on a chart, with the expected
/// independence counts when the theory pins them down.
#[derive(Clone, Debug)]
pub struct IntegralFamily {
    pub chart: SystemId,
    pub members: Vec<ScalarField>,
    pub claimed_ddim: Option<usize>,
    pub claimed_dind: Option<usize>,
}

impl IntegralFamily {
    pub fn names(&self) -> Vec<String> {
        self.members.iter().map(|m| m.name().to_string()).collect()
    }

    pub fn member(&self, name: &str) -> Option<&ScalarField> {
        self.members.iter().find(|m| m.name() == name)
    }
}

/// Numerical ddim/dind estimates for a family of integrals.
#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub system: String,
    pub members: Vec<String>,
    pub chart_dim: usize,
    pub samples: usize,
    pub seed: u64,
    /// Max over samples of the rank of the members' Jacobian.
    pub ddim: usize,
    /// Max over samples of the rank of the bracket Gram matrix `{f_i, f_j}`.
    pub gram_rank: usize,
    /// `ddim - gram_rank`.
    pub dind: usize,
    /// `ddim + dind == chart_dim`.
    pub complete: bool,
    /// Largest `|{f_i, f_j}|` seen across all samples.
    pub gram_max_abs: f64,
    /// Singular values of the Jacobian, one row per sample.
    pub jacobian_svals: Vec<Vec<f64>>,
    /// Singular values of the bracket Gram matrix, one row per sample.
    pub gram_svals: Vec<Vec<f64>>,
}

const RANK_THRESHOLD: f64 = 1e-8;
/// Bracket values below the involutivity resolution count as zero, so a
/// commutative family's pure-rounding Gram matrix reports rank 0.
const GRAM_FLOOR: f64 = 1e-9;

fn rank_from_svals(svals: &[f64], floor: f64) -> usize {
    let smax = svals.iter().cloned().fold(0.0, f64::max);
    if smax <= floor {
        return 0;
    }
    svals
        .iter()
        .filter(|&&s| s > f64::max(RANK_THRESHOLD * smax, floor))
        .count()
}

/// Estimate ddim and dind of a family by sampling: the Jacobian rank gives
/// ddim, the skew Gram matrix of pairwise brackets gives the non-commuting
/// directions, and `dind = ddim - rank(Gram)`. Ranks drop on thin sets, so
/// the estimator takes the max over samples. Deterministic for a fixed seed.
pub fn audit(family: &IntegralFamily, points: usize, seed: u64) -> Result<AuditReport, AuditError> {
    if points < 30 {
        return Err(AuditError::TooFewPoints {
            min: 30,
            got: points,
        });
    }
    let chart_dim = family.chart.chart_dim();
    for m in &family.members {
        if m.dim() != chart_dim {
            return Err(AuditError::ChartMismatch {
                family: m.dim(),
                chart: chart_dim,
            });
        }
    }
    let tensor = family.chart.poisson_tensor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<DVector<f64>> = (0..points)
        .map(|_| family.chart.sample_state(&mut rng))
        .collect();

    let n_members = family.members.len();
    let per_point: Vec<(Vec<f64>, Vec<f64>, f64)> = states
        .par_iter()
        .map(|state| {
            let x = state.as_slice();
            let mut jac = DMatrix::zeros(n_members, chart_dim);
            for (row, f) in family.members.iter().enumerate() {
                jac.row_mut(row).copy_from_slice(f.grad(x).as_slice());
            }
            let jac_svals: Vec<f64> = jac.svd(false, false).singular_values.iter().cloned().collect();

            let mut gram = DMatrix::zeros(n_members, n_members);
            let mut max_abs: f64 = 0.0;
            for a in 0..n_members {
                for b in a + 1..n_members {
                    let v = tensor.bracket(&family.members[a], &family.members[b], x);
                    gram[(a, b)] = v;
                    gram[(b, a)] = -v;
                    max_abs = max_abs.max(v.abs());
                }
            }
            let gram_svals: Vec<f64> =
                gram.svd(false, false).singular_values.iter().cloned().collect();
            (jac_svals, gram_svals, max_abs)
        })
        .collect();

    let ddim = per_point
        .iter()
        .map(|(j, _, _)| rank_from_svals(j, 0.0))
        .max()
        .unwrap_or(0);
    let gram_rank = per_point
        .iter()
        .map(|(_, g, _)| rank_from_svals(g, GRAM_FLOOR))
        .max()
        .unwrap_or(0);
    assert!(
        gram_rank % 2 == 0,
        "bracket Gram matrix is skew; its rank must be even (got {gram_rank})"
    );
    let gram_max_abs = per_point.iter().map(|(_, _, m)| *m).fold(0.0, f64::max);
    let dind = ddim - gram_rank;

    Ok(AuditReport {
        system: family.chart.to_string(),
        members: family.names(),
        chart_dim,
        samples: points,
        seed,
        ddim,
        gram_rank,
        dind,
        complete: ddim + dind == chart_dim,
        gram_max_abs,
        jacobian_svals: per_point.iter().map(|(j, _, _)| j.clone()).collect(),
        gram_svals: per_point.iter().map(|(_, g, _)| g.clone()).collect(),
    })
}
