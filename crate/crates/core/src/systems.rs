//! The concrete Hamiltonian systems: LL and LR flows on the full cotangent
//! chart, their magnetic reductions to ℝ²ⁿ, and the hyperspherical chart of
//! the reduced LR system.
//!
//! Chart layouts (0-based indices):
//! - full:            `[x_1..x_n, y_1..y_n, z, λ_1..λ_{2n+1}]`, dim 4n+2
//! - reduced:         `[x_1..x_n, y_1..y_n, p_1..p_{2n}]`, dim 4n
//! - hyperspherical:  `[r, θ_1..θ_{2n-1}, p_r, p_{θ_1}..p_{θ_{2n-1}}]`, dim 4n
//!
//! Every Hamiltonian here is a closed form; `sr::build_sr_hamiltonian`
//! produces the same functions through an independent path and the test
//! suites hold the two against each other. Likewise each vector field is
//! hand-written and checked against Λ·∇H.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Dual;
use crate::field::{DiffScalar, FieldExpr, ScalarField};
use crate::heisenberg::MetricSpec;
use crate::hyperspherical::{self, ChartError};
use crate::poisson::PoissonTensor;

#[derive(Debug, Error, PartialEq)]
pub enum SystemError {
    #[error("LR systems require sigma = (1, …, 1); tau is free")]
    LrRequiresRoundSigma,
    #[error("reduced systems require the level constant C")]
    MissingLevel,
    #[error("full systems do not carry a level constant")]
    UnexpectedLevel,
    #[error("reduce expects a full system")]
    NotAFullSystem,
    #[error("state has length {got}, chart needs {expected}")]
    StateLength { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    LlFull,
    LlReduced,
    LrFull,
    LrReduced,
    LrHyperspherical,
}

impl SystemKind {
    pub fn is_full(self) -> bool {
        matches!(self, SystemKind::LlFull | SystemKind::LrFull)
    }

    pub fn is_left_distribution(self) -> bool {
        matches!(self, SystemKind::LlFull | SystemKind::LlReduced)
    }

    /// Charts on which the Poisson structure is the canonical one.
    pub fn is_canonical_chart(self) -> bool {
        self.is_full()
    }
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SystemKind::LlFull => "ll-full",
            SystemKind::LlReduced => "ll-reduced",
            SystemKind::LrFull => "lr-full",
            SystemKind::LrReduced => "lr-reduced",
            SystemKind::LrHyperspherical => "lr-hyperspherical",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for SystemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ll-full" => Ok(SystemKind::LlFull),
            "ll-reduced" => Ok(SystemKind::LlReduced),
            "lr-full" => Ok(SystemKind::LrFull),
            "lr-reduced" => Ok(SystemKind::LrReduced),
            "lr-hyperspherical" => Ok(SystemKind::LrHyperspherical),
            other => Err(format!(
                "unknown system '{other}' (expected ll-full, ll-reduced, lr-full, lr-reduced, lr-hyperspherical)"
            )),
        }
    }
}

/// A fully specified flow: kind, dimension parameter, metric normal form,
/// and (for reduced kinds) the level `C` of the central momentum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemId {
    kind: SystemKind,
    spec: MetricSpec,
    c: Option<f64>,
}

impl SystemId {
    pub fn new(kind: SystemKind, spec: MetricSpec, c: Option<f64>) -> Result<Self, SystemError> {
        let lr = matches!(
            kind,
            SystemKind::LrFull | SystemKind::LrReduced | SystemKind::LrHyperspherical
        );
        if lr && !spec.is_round() {
            return Err(SystemError::LrRequiresRoundSigma);
        }
        if kind.is_full() && c.is_some() {
            return Err(SystemError::UnexpectedLevel);
        }
        if !kind.is_full() && c.is_none() {
            return Err(SystemError::MissingLevel);
        }
        Ok(SystemId { kind, spec, c })
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn spec(&self) -> &MetricSpec {
        &self.spec
    }

    pub fn tau(&self) -> f64 {
        self.spec.tau()
    }

    /// Level constant of a reduced system.
    pub fn level(&self) -> Option<f64> {
        self.c
    }

    pub fn chart_dim(&self) -> usize {
        match self.kind {
            SystemKind::LlFull | SystemKind::LrFull => 4 * self.n() + 2,
            _ => 4 * self.n(),
        }
    }

    pub fn state_names(&self) -> Vec<String> {
        let n = self.n();
        let mut names = Vec::with_capacity(self.chart_dim());
        match self.kind {
            SystemKind::LlFull | SystemKind::LrFull => {
                names.extend((1..=n).map(|k| format!("x{k}")));
                names.extend((1..=n).map(|k| format!("y{k}")));
                names.push("z".into());
                names.extend((1..=2 * n + 1).map(|i| format!("lam{i}")));
            }
            SystemKind::LlReduced | SystemKind::LrReduced => {
                names.extend((1..=n).map(|k| format!("x{k}")));
                names.extend((1..=n).map(|k| format!("y{k}")));
                names.extend((1..=2 * n).map(|k| format!("p{k}")));
            }
            SystemKind::LrHyperspherical => {
                names.push("r".into());
                names.extend((1..=2 * n - 1).map(|j| format!("th{j}")));
                names.push("pr".into());
                names.extend((1..=2 * n - 1).map(|j| format!("pth{j}")));
            }
        }
        names
    }

    pub fn check_state(&self, state: &[f64]) -> Result<(), SystemError> {
        if state.len() != self.chart_dim() {
            return Err(SystemError::StateLength {
                expected: self.chart_dim(),
                got: state.len(),
            });
        }
        Ok(())
    }

    /// The closed-form Hamiltonian of the flow as a differentiable field.
    pub fn hamiltonian(&self) -> ScalarField {
        let n = self.n();
        match self.kind {
            SystemKind::LlFull => ScalarField::new(
                "H",
                self.chart_dim(),
                LlFullHamiltonian {
                    n,
                    sigma: self.spec.sigma().to_vec(),
                },
            ),
            SystemKind::LlReduced => ScalarField::new(
                "H",
                self.chart_dim(),
                LlReducedHamiltonian {
                    n,
                    sigma: self.spec.sigma().to_vec(),
                },
            ),
            SystemKind::LrFull => ScalarField::new(
                "H",
                self.chart_dim(),
                LrFullHamiltonian {
                    n,
                    tau: self.tau(),
                },
            ),
            SystemKind::LrReduced => ScalarField::new(
                "H",
                self.chart_dim(),
                LrReducedHamiltonian {
                    n,
                    tau: self.tau(),
                },
            ),
            SystemKind::LrHyperspherical => ScalarField::new(
                "H",
                self.chart_dim(),
                HsHamiltonian {
                    n,
                    tau: self.tau(),
                },
            ),
        }
    }

    /// Hand-written Hamilton equations; checked against Λ·∇H in the tests.
    pub fn vector_field(&self) -> SystemVectorField {
        SystemVectorField { sys: self.clone() }
    }

    /// The Poisson tensor of the chart the flow lives on.
    pub fn poisson_tensor(&self) -> PoissonTensor {
        let n = self.n();
        match self.kind {
            SystemKind::LlFull | SystemKind::LrFull => PoissonTensor::canonical(self.chart_dim()),
            SystemKind::LlReduced => PoissonTensor::magnetic(n, self.c.unwrap(), crate::heisenberg::Side::Left),
            SystemKind::LrReduced => PoissonTensor::magnetic(n, self.c.unwrap(), crate::heisenberg::Side::Right),
            SystemKind::LrHyperspherical => PoissonTensor::hyperspherical(n, self.c.unwrap()),
        }
    }

    /// The hyperspherical sibling of a reduced LR system.
    pub fn hyperspherical_counterpart(&self) -> Option<SystemId> {
        match self.kind {
            SystemKind::LrReduced => Some(SystemId {
                kind: SystemKind::LrHyperspherical,
                spec: self.spec.clone(),
                c: self.c,
            }),
            SystemKind::LrHyperspherical => Some(self.clone()),
            _ => None,
        }
    }

    /// Draw a random chart point away from singular loci.
    pub fn sample_state<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let dim = self.chart_dim();
        let n = self.n();
        match self.kind {
            SystemKind::LrHyperspherical => {
                let mut s = vec![0.0; dim];
                s[0] = rng.random_range(0.6..1.4);
                for j in 1..n {
                    s[j] = rng.random_range(0.25..std::f64::consts::FRAC_PI_2 - 0.25);
                }
                for k in 0..n {
                    s[n - 1 + k + 1] = rng.random_range(-3.0..3.0);
                }
                for i in 2 * n..4 * n {
                    s[i] = rng.random_range(-1.2..1.2);
                }
                DVector::from_vec(s)
            }
            _ => DVector::from_fn(dim, |_, _| rng.random_range(-1.2..1.2)),
        }
    }

    /// Singular-locus guard; only the hyperspherical chart has one.
    pub fn guard_state(&self, state: &[f64]) -> Result<(), ChartError> {
        if self.kind == SystemKind::LrHyperspherical {
            hyperspherical::guard_hyperspherical(self.n(), state)?;
        }
        Ok(())
    }
}

impl std::fmt::Display for SystemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} n={}", self.kind, self.n())?;
        if let Some(c) = self.c {
            write!(f, " C={c}")?;
        }
        Ok(())
    }
}

// --- Hamiltonians -----------------------------------------------------------

struct LlFullHamiltonian {
    n: usize,
    sigma: Vec<f64>,
}

impl FieldExpr for LlFullHamiltonian {
    fn eval<S: DiffScalar>(&self, s: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let n = self.n;
        let lam = &s[2 * n + 1..];
        let lam_z = lam[2 * n];
        let mut h = S::zero();
        for k in 0..n {
            let a = lam[k];
            let b = lam[n + k] + s[k] * lam_z;
            h += (a * a + b * b) / S::from_f64(self.sigma[k]);
        }
        h * S::from_f64(0.5)
    }
}

struct LlReducedHamiltonian {
    n: usize,
    sigma: Vec<f64>,
}

impl FieldExpr for LlReducedHamiltonian {
    fn eval<S: DiffScalar>(&self, s: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let n = self.n;
        let p = &s[2 * n..];
        let mut h = S::zero();
        for k in 0..n {
            h += (p[k] * p[k] + p[n + k] * p[n + k]) / S::from_f64(self.sigma[k]);
        }
        h * S::from_f64(0.5)
    }
}

struct LrFullHamiltonian {
    n: usize,
    tau: f64,
}

impl FieldExpr for LrFullHamiltonian {
    fn eval<S: DiffScalar>(&self, s: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let n = self.n;
        let tau = S::from_f64(self.tau);
        let q = &s[..2 * n];
        let lam = &s[2 * n + 1..4 * n + 1];
        let lam_z = s[4 * n + 1];

        // u = (y, 0), v = Jq = (y, -x)
        let mut qq = S::zero();
        for &qi in q {
            qq += qi * qi;
        }
        let denom = S::one() + tau * qq;

        let mut uu = S::zero();
        let mut lam_u = S::zero();
        let mut lam_v = S::zero();
        let mut lam_lam = S::zero();
        for k in 0..n {
            let y = q[n + k];
            uu += y * y;
            lam_u += lam[k] * y;
            lam_v += lam[k] * y - lam[n + k] * q[k];
        }
        for &l in lam {
            lam_lam += l * l;
        }

        let term1 = lam_lam - tau * lam_v * lam_v / denom;
        let term2 = S::from_f64(2.0) * lam_z * (lam_u - tau * uu * lam_v / denom);
        let term3 = lam_z * lam_z * (uu - tau * uu * uu / denom);
        (term1 + term2 + term3) * S::from_f64(0.5)
    }
}

struct LrReducedHamiltonian {
    n: usize,
    tau: f64,
}

impl FieldExpr for LrReducedHamiltonian {
    fn eval<S: DiffScalar>(&self, s: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let n = self.n;
        let tau = S::from_f64(self.tau);
        let p = &s[2 * n..];
        let mut pp = S::zero();
        for &pi in p {
            pp += pi * pi;
        }
        let mut qq = S::zero();
        for &qi in &s[..2 * n] {
            qq += qi * qi;
        }
        // ω(q, p) = Σ x_k p_{n+k} - y_k p_k
        let mut omega = S::zero();
        for k in 0..n {
            omega += s[k] * p[n + k] - s[n + k] * p[k];
        }
        (pp - tau * omega * omega / (S::one() + tau * qq)) * S::from_f64(0.5)
    }
}

struct HsHamiltonian {
    n: usize,
    tau: f64,
}

impl FieldExpr for HsHamiltonian {
    fn eval<S: DiffScalar>(&self, s: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let n = self.n;
        let tau = S::from_f64(self.tau);
        let r = s[0];
        let p_r = s[2 * n];
        let r2 = r * r;

        // Σ_{j=1}^{n-1} p_{θ_j}² / Π_{l<j} cos²θ_l
        let mut radial = S::zero();
        let mut cprod = S::one();
        for j in 1..n {
            let p = s[2 * n + j];
            radial += p * p / cprod;
            let c = s[j].cos();
            cprod = cprod * (c * c);
        }

        // ρ recursion: ρ_0 = p_{θ_n}², ρ_k = ρ_{k-1}/cos²θ_{n-k} + p_{θ_{n+k}}²/sin²θ_{n-k}
        let p_phi1 = s[3 * n];
        let mut rho = p_phi1 * p_phi1;
        for k in 1..n {
            let theta = s[n - k];
            let c = theta.cos();
            let si = theta.sin();
            let p = s[3 * n + k];
            rho = rho / (c * c) + p * p / (si * si);
        }

        let mut total_phi = S::zero();
        for k in 0..n {
            total_phi += s[3 * n + k];
        }

        let half = S::from_f64(0.5);
        (p_r * p_r + (radial + rho) / r2
            - tau * total_phi * total_phi / (S::one() + tau * r2))
            * half
    }
}

// --- Closed-form vector fields ---------------------------------------------

/// Hand-written right-hand side of a flow.
#[derive(Clone, Debug)]
pub struct SystemVectorField {
    sys: SystemId,
}

impl SystemVectorField {
    pub fn system(&self) -> &SystemId {
        &self.sys
    }

    pub fn eval(&self, s: &[f64]) -> Result<DVector<f64>, ChartError> {
        debug_assert_eq!(s.len(), self.sys.chart_dim());
        self.sys.guard_state(s)?;
        let n = self.sys.n();
        Ok(match self.sys.kind {
            SystemKind::LlFull => ll_full_rhs(n, self.sys.spec.sigma(), s),
            SystemKind::LlReduced => {
                ll_reduced_rhs(n, self.sys.spec.sigma(), self.sys.c.unwrap(), s)
            }
            SystemKind::LrFull => lr_full_rhs(n, self.sys.tau(), s),
            SystemKind::LrReduced => lr_reduced_rhs(n, self.sys.tau(), self.sys.c.unwrap(), s),
            SystemKind::LrHyperspherical => hs_rhs(n, self.sys.tau(), self.sys.c.unwrap(), s),
        })
    }
}

fn ll_full_rhs(n: usize, sigma: &[f64], s: &[f64]) -> DVector<f64> {
    let lam = &s[2 * n + 1..];
    let lam_z = lam[2 * n];
    let mut out = DVector::zeros(4 * n + 2);
    let mut z_dot = 0.0;
    for k in 0..n {
        let x_dot = lam[k] / sigma[k];
        let y_dot = (lam[n + k] + s[k] * lam_z) / sigma[k];
        out[k] = x_dot;
        out[n + k] = y_dot;
        z_dot += s[k] * y_dot;
        out[2 * n + 1 + k] = -y_dot * lam_z; // λ̇_k
                                             // λ̇_{n+k} = 0, λ̇_{2n+1} = 0
    }
    out[2 * n] = z_dot;
    out
}

fn ll_reduced_rhs(n: usize, sigma: &[f64], c: f64, s: &[f64]) -> DVector<f64> {
    let p = &s[2 * n..];
    let mut out = DVector::zeros(4 * n);
    for k in 0..n {
        out[k] = p[k] / sigma[k];
        out[n + k] = p[n + k] / sigma[k];
        out[2 * n + k] = -c * p[n + k] / sigma[k];
        out[3 * n + k] = c * p[k] / sigma[k];
    }
    out
}

fn lr_full_rhs(n: usize, tau: f64, s: &[f64]) -> DVector<f64> {
    let q = &s[..2 * n];
    let lam = &s[2 * n + 1..4 * n + 1];
    let lam_z = s[4 * n + 1];

    let qq: f64 = q.iter().map(|v| v * v).sum();
    let denom = 1.0 + tau * qq;

    // u = (y, 0), v = Jq = (y, -x), P = λ̄ + λ_z u
    let mut p_vec = vec![0.0; 2 * n];
    let mut v_vec = vec![0.0; 2 * n];
    let mut uu = 0.0;
    for k in 0..n {
        let y = q[n + k];
        p_vec[k] = lam[k] + lam_z * y;
        p_vec[n + k] = lam[n + k];
        v_vec[k] = y;
        v_vec[n + k] = -q[k];
        uu += y * y;
    }
    let s_dot_vp: f64 = v_vec.iter().zip(&p_vec).map(|(a, b)| a * b).sum();
    let w = s_dot_vp / denom;

    let mut out = DVector::zeros(4 * n + 2);
    let mut z_dot = 0.0;
    for i in 0..2 * n {
        out[i] = p_vec[i] - tau * w * v_vec[i];
    }
    for k in 0..n {
        z_dot += p_vec[k] * q[n + k]; // ⟨P, u⟩
    }
    z_dot -= tau * w * uu;
    out[2 * n] = z_dot;
    for k in 0..n {
        // λ̇_k = -τ W P_{n+k} - τ² W² x_k
        out[2 * n + 1 + k] = -tau * w * p_vec[n + k] - tau * tau * w * w * q[k];
        // λ̇_{n+k} = -λ_z P_k + τ W (P_k + λ_z y_k) - τ² W² y_k
        out[3 * n + 1 + k] = -lam_z * p_vec[k] + tau * w * (p_vec[k] + lam_z * q[n + k])
            - tau * tau * w * w * q[n + k];
    }
    // λ̇_{2n+1} = 0
    out
}

fn lr_reduced_rhs(n: usize, tau: f64, c: f64, s: &[f64]) -> DVector<f64> {
    let p = &s[2 * n..];
    let qq: f64 = s[..2 * n].iter().map(|v| v * v).sum();
    let mut omega = 0.0;
    for k in 0..n {
        omega += s[k] * p[n + k] - s[n + k] * p[k];
    }
    let w = tau * omega / (1.0 + tau * qq);

    let mut out = DVector::zeros(4 * n);
    for k in 0..n {
        let x_dot = p[k] + w * s[n + k];
        let y_dot = p[n + k] - w * s[k];
        out[k] = x_dot;
        out[n + k] = y_dot;
        out[2 * n + k] = (c + w) * y_dot;
        out[3 * n + k] = -(c + w) * x_dot;
    }
    out
}

fn hs_rhs(n: usize, tau: f64, c: f64, s: &[f64]) -> DVector<f64> {
    let r = s[0];
    let p_r = s[2 * n];
    let r2 = r * r;

    // cumulative cos² products c_j = Π_{l<j} cos²θ_l for radial angles
    let mut cprod = vec![1.0; n];
    for j in 2..n {
        let cth = s[j - 1].cos();
        cprod[j] = cprod[j - 1] * cth * cth;
    }
    let psi = hyperspherical::psi_values(n, s);

    let p_theta = |j: usize| s[2 * n + j]; // 1-based θ index
    let p_phi = |k: usize| s[3 * n - 1 + k]; // 1-based plane index

    let total_phi: f64 = (1..=n).map(p_phi).sum();
    let tau_w = tau / (1.0 + tau * r2);

    // angular kinetic sum A
    let mut a_sum = 0.0;
    for j in 1..n {
        a_sum += p_theta(j) * p_theta(j) / cprod[j];
    }
    for k in 1..=n {
        a_sum += p_phi(k) * p_phi(k) / psi[k - 1];
    }

    let mut out = DVector::zeros(4 * n);
    out[0] = p_r;
    for j in 1..n {
        out[j] = p_theta(j) / (r2 * cprod[j]);
    }
    for k in 1..=n {
        out[n - 1 + k] = p_phi(k) / (r2 * psi[k - 1]) - tau_w * total_phi;
    }

    out[2 * n] = a_sum / (r2 * r)
        + c * total_phi / r
        - c * r * total_phi * tau_w
        - tau * tau * r * total_phi * total_phi / ((1.0 + tau * r2) * (1.0 + tau * r2));

    // d_{jk} = ∂_{θ_j} ψ_k / ψ_k
    let log_dpsi = |j: usize, k: usize| -> f64 {
        if j <= n - k {
            -2.0 * s[j].tan()
        } else if j == n - k + 1 {
            2.0 / s[j].tan()
        } else {
            0.0
        }
    };

    for j in 1..n {
        // -(1/2r²) ∂_{θ_j} A + (C/2) Σ_k d_{jk} p_{φ_k}
        let tan_j = s[j].tan();
        let mut da = 0.0;
        for m in j + 1..n {
            da += p_theta(m) * p_theta(m) * 2.0 * tan_j / cprod[m];
        }
        for k in 1..=n {
            da -= p_phi(k) * p_phi(k) * log_dpsi(j, k) / psi[k - 1];
        }
        let mut magnetic = 0.0;
        for k in 1..=n {
            magnetic += log_dpsi(j, k) * p_phi(k);
        }
        out[2 * n + j] = -da / (2.0 * r2) + 0.5 * c * magnetic;
    }

    for k in 1..=n {
        let mut coupling = 0.0;
        for j in 1..n {
            coupling += log_dpsi(j, k) * psi[k - 1] * p_theta(j) / cprod[j];
        }
        out[3 * n - 1 + k] = -c * r * psi[k - 1] * p_r - 0.5 * c * coupling;
    }
    out
}

// --- Reductions --------------------------------------------------------------

/// A full flow together with its restriction to `λ_{2n+1} = C` projected to
/// ℝ²ⁿ, and the momentum substitution between the two charts.
#[derive(Clone, Debug)]
pub struct Reduction {
    full: SystemId,
    reduced: SystemId,
}

/// Restrict a full flow to the level `λ_{2n+1} = C` and project out `z`.
///
/// LL momenta: `p_k = λ_k`, `p_{k+n} = λ_{k+n} + C x_k`.
/// LR momenta: `p_k = λ_k + C y_k`, `p_{k+n} = λ_{k+n}`.
pub fn reduce(sys: &SystemId, c: f64) -> Result<Reduction, SystemError> {
    let reduced_kind = match sys.kind {
        SystemKind::LlFull => SystemKind::LlReduced,
        SystemKind::LrFull => SystemKind::LrReduced,
        _ => return Err(SystemError::NotAFullSystem),
    };
    let reduced = SystemId::new(reduced_kind, sys.spec.clone(), Some(c))?;
    Ok(Reduction {
        full: sys.clone(),
        reduced,
    })
}

impl Reduction {
    pub fn full(&self) -> &SystemId {
        &self.full
    }

    pub fn reduced(&self) -> &SystemId {
        &self.reduced
    }

    pub fn level(&self) -> f64 {
        self.reduced.c.unwrap()
    }

    pub fn reduce_state(&self, full_state: &[f64]) -> DVector<f64> {
        let n = self.full.n();
        let c = self.level();
        let lam = &full_state[2 * n + 1..];
        let mut out = DVector::zeros(4 * n);
        for i in 0..2 * n {
            out[i] = full_state[i];
        }
        match self.full.kind {
            SystemKind::LlFull => {
                for k in 0..n {
                    out[2 * n + k] = lam[k];
                    out[3 * n + k] = lam[n + k] + c * full_state[k];
                }
            }
            SystemKind::LrFull => {
                for k in 0..n {
                    out[2 * n + k] = lam[k] + c * full_state[n + k];
                    out[3 * n + k] = lam[n + k];
                }
            }
            _ => unreachable!(),
        }
        out
    }

    /// Inverse of [`Reduction::reduce_state`]; `z` is free on the fiber.
    pub fn lift_state(&self, reduced_state: &[f64], z: f64) -> DVector<f64> {
        let n = self.full.n();
        let c = self.level();
        let p = &reduced_state[2 * n..];
        let mut out = DVector::zeros(4 * n + 2);
        for i in 0..2 * n {
            out[i] = reduced_state[i];
        }
        out[2 * n] = z;
        match self.full.kind {
            SystemKind::LlFull => {
                for k in 0..n {
                    out[2 * n + 1 + k] = p[k];
                    out[3 * n + 1 + k] = p[n + k] - c * reduced_state[k];
                }
            }
            SystemKind::LrFull => {
                for k in 0..n {
                    out[2 * n + 1 + k] = p[k] - c * reduced_state[n + k];
                    out[3 * n + 1 + k] = p[n + k];
                }
            }
            _ => unreachable!(),
        }
        out[4 * n + 1] = c;
        out
    }

    /// Strength of the magnetic two-form per (x_i, y_i) plane: `-C/σ_i` for
    /// the LL reduction, `C` for the LR reduction.
    pub fn magnetic_coefficients(&self) -> Vec<f64> {
        let c = self.level();
        match self.full.kind {
            SystemKind::LlFull => self
                .full
                .spec
                .sigma()
                .iter()
                .map(|&s| -c / s)
                .collect(),
            SystemKind::LrFull => vec![c; self.full.n()],
            _ => unreachable!(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ll(n: usize, sigma: Vec<f64>) -> SystemId {
        SystemId::new(
            SystemKind::LlFull,
            MetricSpec::new(sigma, 1.0).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn ll_hamiltonian_value() {
        // n=1, σ=1: (x,y,z)=(2,0,0), λ=(0,1,3) → ½(0 + (1+2·3)²) = 24.5
        let sys = ll(1, vec![1.0]);
        let h = sys.hamiltonian();
        assert_relative_eq!(
            h.eval(&[2.0, 0.0, 0.0, 0.0, 1.0, 3.0]),
            24.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn ll_hamiltonian_at_x_zero() {
        let sys = ll(2, vec![2.0, 1.0]);
        let h = sys.hamiltonian();
        // at x = 0: ½ Σ (λ_k² + λ_{k+n}²)/σ_k regardless of λ_z
        let state = [0.0, 0.0, 0.7, -0.3, 1.0, 0.4, -0.8, 0.6, 0.2, 5.0];
        let expect = 0.5 * ((0.4f64.powi(2) + 0.6f64.powi(2)) / 2.0 + 0.8f64.powi(2) + 0.2f64.powi(2));
        assert_relative_eq!(h.eval(&state), expect, epsilon = 1e-15);
    }

    #[test]
    fn lr_hamiltonian_at_origin() {
        // n=2, τ=1: q=0, λ=(1,2,3,4,5) → ½(1+4+9+16) = 15
        let sys = SystemId::new(SystemKind::LrFull, MetricSpec::standard(2), None).unwrap();
        let h = sys.hamiltonian();
        let state = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_relative_eq!(h.eval(&state), 15.0, epsilon = 1e-15);
    }

    #[test]
    fn lr_reduced_hamiltonian_value() {
        // n=1: q=(1,0), p=(0,1) → ½(1 − 1/2) = 0.25
        let sys = SystemId::new(
            SystemKind::LrReduced,
            MetricSpec::standard(1),
            Some(3.0),
        )
        .unwrap();
        let h = sys.hamiltonian();
        assert_relative_eq!(h.eval(&[1.0, 0.0, 0.0, 1.0]), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn ll_momentum_legs_are_static() {
        let sys = ll(2, vec![3.0, 1.0]);
        let f = sys.vector_field();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s = sys.sample_state(&mut rng);
            let v = f.eval(s.as_slice()).unwrap();
            // λ̇_{k+n} = 0 and λ̇_{2n+1} = 0 exactly
            assert_eq!(v[7], 0.0);
            assert_eq!(v[8], 0.0);
            assert_eq!(v[9], 0.0);
        }
    }

    #[test]
    fn lr_center_momentum_is_static() {
        let sys = SystemId::new(SystemKind::LrFull, MetricSpec::standard(2), None).unwrap();
        let f = sys.vector_field();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let s = sys.sample_state(&mut rng);
            let v = f.eval(s.as_slice()).unwrap();
            assert_eq!(v[9], 0.0);
        }
    }

    #[test]
    fn ll_rhs_is_z_independent() {
        let sys = ll(2, vec![2.0, 1.0]);
        let f = sys.vector_field();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let mut s = sys.sample_state(&mut rng);
            let a = f.eval(s.as_slice()).unwrap();
            s[4] += 17.0; // shift z
            let b = f.eval(s.as_slice()).unwrap();
            assert_relative_eq!((a - b).norm(), 0.0, epsilon = 0.0);
        }
    }

    #[test]
    fn reduction_round_trips() {
        let sys = SystemId::new(SystemKind::LrFull, MetricSpec::standard(2), None).unwrap();
        let red = reduce(&sys, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut full = sys.sample_state(&mut rng);
        full[9] = 1.5; // put the state on the level set
        let projected = red.reduce_state(full.as_slice());
        let lifted = red.lift_state(projected.as_slice(), full[4]);
        assert_relative_eq!((&lifted - &full).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn magnetic_coefficients_follow_the_metric() {
        let sys = ll(2, vec![2.0, 1.0]);
        let red = reduce(&sys, 1.0).unwrap();
        assert_eq!(red.magnetic_coefficients(), vec![-0.5, -1.0]);

        let lr = SystemId::new(SystemKind::LrFull, MetricSpec::standard(2), None).unwrap();
        let red = reduce(&lr, 2.0).unwrap();
        assert_eq!(red.magnetic_coefficients(), vec![2.0, 2.0]);
    }

    #[test]
    fn lr_rejects_anisotropic_sigma() {
        let err = SystemId::new(
            SystemKind::LrFull,
            MetricSpec::new(vec![2.0, 1.0], 1.0).unwrap(),
            None,
        );
        assert_eq!(err.unwrap_err(), SystemError::LrRequiresRoundSigma);
    }

    #[test]
    fn level_constants_are_validated() {
        assert_eq!(
            SystemId::new(SystemKind::LlFull, MetricSpec::standard(1), Some(1.0)).unwrap_err(),
            SystemError::UnexpectedLevel
        );
        assert_eq!(
            SystemId::new(SystemKind::LlReduced, MetricSpec::standard(1), None).unwrap_err(),
            SystemError::MissingLevel
        );
    }

    #[test]
    fn hyperspherical_guard_rejects_small_radius() {
        let sys = SystemId::new(
            SystemKind::LrHyperspherical,
            MetricSpec::standard(2),
            Some(1.0),
        )
        .unwrap();
        let f = sys.vector_field();
        let mut state = vec![1e-9, 0.7, 0.3, 0.4, 0.1, 0.2, 0.3, 0.4];
        assert!(f.eval(&state).is_err());
        state[0] = 1.0;
        assert!(f.eval(&state).is_ok());
    }
}
