//! First-integral families of the four flows.
//!
//! Naming: full-chart families are `I0, I1, …`; the hyperspherical family
//! of the reduced LR flow is `It0, It1, …` with bracket-generated members
//! `Jt2, …`; the reduced LL flow carries its guiding-center momenta
//! `K1, …, K2n` and per-plane energies `Q1, …, Qn`.

use crate::autodiff::Dual;
use crate::field::{DiffScalar, FieldExpr, ScalarField};
use crate::hyperspherical::psi_values;
use crate::poisson::{derived_integral, IntegralFamily, PoissonTensor};
use crate::systems::{SystemId, SystemKind};

/// The first integrals attached to a system.
///
/// For a cartesian reduced LR system the family lives on the hyperspherical
/// chart (where the integrals have closed forms); the returned family's
/// `chart` reflects that.
pub fn family_for(sys: &SystemId) -> IntegralFamily {
    match sys.kind() {
        SystemKind::LlFull => ll_full_family(sys),
        SystemKind::LrFull => lr_full_family(sys),
        SystemKind::LrReduced | SystemKind::LrHyperspherical => {
            lr_reduced_family(&sys.hyperspherical_counterpart().unwrap())
        }
        SystemKind::LlReduced => ll_reduced_family(sys),
    }
}

// --- LL full: I_0 = λ_{2n+1}, I_k = λ_{k+n}, I_{k+n} = λ_k + y_k λ_{2n+1},
//     I_{2n+k} = λ_k² + (λ_{n+k} + λ_{2n+1} x_k)² --------------------------

enum LlMember {
    CenterMomentum,
    FiberMomentum(usize),
    GaugedMomentum(usize),
    PlaneEnergy(usize),
}

struct LlIntegral {
    n: usize,
    member: LlMember,
}

impl FieldExpr for LlIntegral {
    fn eval<S: DiffScalar>(&self, s: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let n = self.n;
        let lam = &s[2 * n + 1..];
        let lam_z = lam[2 * n];
        match self.member {
            LlMember::CenterMomentum => lam_z,
            LlMember::FiberMomentum(k) => lam[n + k],
            LlMember::GaugedMomentum(k) => lam[k] + s[n + k] * lam_z,
            LlMember::PlaneEnergy(k) => {
                let b = lam[n + k] + lam_z * s[k];
                lam[k] * lam[k] + b * b
            }
        }
    }
}

fn ll_full_family(sys: &SystemId) -> IntegralFamily {
    let n = sys.n();
    let dim = sys.chart_dim();
    let mut members = Vec::with_capacity(3 * n + 1);
    let field = |name: String, member: LlMember| ScalarField::new(name, dim, LlIntegral { n, member });
    members.push(field("I0".into(), LlMember::CenterMomentum));
    for k in 0..n {
        members.push(field(format!("I{}", k + 1), LlMember::FiberMomentum(k)));
    }
    for k in 0..n {
        members.push(field(format!("I{}", n + k + 1), LlMember::GaugedMomentum(k)));
    }
    for k in 0..n {
        members.push(field(format!("I{}", 2 * n + k + 1), LlMember::PlaneEnergy(k)));
    }
    IntegralFamily {
        chart: sys.clone(),
        members,
        claimed_ddim: Some(3 * n + 1),
        claimed_dind: Some(n + 1),
    }
}

// --- LR full: I_0 = H, I_j = x_j λ_{n+j} - y_j λ_j + ½(x_j² - y_j²) λ_{2n+1},
//     I_{n+k} = A_k² + B_k² coupling planes 1 and k+1, I_{2n} = λ_{2n+1},
//     I_{2n+l} = {I_{n+1}, I_{n+l+1}} -----------------------------------------

struct LrRotationIntegral {
    n: usize,
    j: usize, // 0-based plane
}

impl FieldExpr for LrRotationIntegral {
    fn eval<S: DiffScalar>(&self, s: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let n = self.n;
        let j = self.j;
        let lam = &s[2 * n + 1..];
        let lam_z = lam[2 * n];
        let x = s[j];
        let y = s[n + j];
        x * lam[n + j] - y * lam[j] + S::from_f64(0.5) * (x * x - y * y) * lam_z
    }
}

/// Quadratic integral coupling planes 1 and m = k+1 (0-based `m`):
/// `A² + B²` with
/// `A = y_m λ_1 - x_1 λ_{n+m} + x_m λ_{n+1} - y_1 λ_m`,
/// `B = x_1 λ_m - x_m λ_1 - y_1 λ_{n+m} + y_m λ_{n+1} + (x_1 y_m - x_m y_1) λ_{2n+1}`.
struct LrPairIntegral {
    n: usize,
    m: usize, // 0-based second plane (≥ 1)
}

impl FieldExpr for LrPairIntegral {
    fn eval<S: DiffScalar>(&self, s: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let n = self.n;
        let m = self.m;
        let lam = &s[2 * n + 1..];
        let lam_z = lam[2 * n];
        let (x1, y1) = (s[0], s[n]);
        let (xm, ym) = (s[m], s[n + m]);
        let a = ym * lam[0] - x1 * lam[n + m] + xm * lam[n] - y1 * lam[m];
        let b = x1 * lam[m] - xm * lam[0] - y1 * lam[n + m] + ym * lam[n]
            + (x1 * ym - xm * y1) * lam_z;
        a * a + b * b
    }
}

struct CenterMomentum {
    n: usize,
}

impl FieldExpr for CenterMomentum {
    fn eval<S: DiffScalar>(&self, s: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        s[4 * self.n + 1]
    }
}

fn lr_full_family(sys: &SystemId) -> IntegralFamily {
    let n = sys.n();
    let dim = sys.chart_dim();
    let mut members = Vec::new();
    members.push(sys.hamiltonian().renamed("I0"));
    for j in 0..n {
        members.push(ScalarField::new(
            format!("I{}", j + 1),
            dim,
            LrRotationIntegral { n, j },
        ));
    }
    for k in 1..n {
        members.push(ScalarField::new(
            format!("I{}", n + k),
            dim,
            LrPairIntegral { n, m: k },
        ));
    }
    members.push(ScalarField::new(
        format!("I{}", 2 * n),
        dim,
        CenterMomentum { n },
    ));
    let tensor = PoissonTensor::canonical(dim);
    for l in 1..n.saturating_sub(1) {
        // {I_{n+1}, I_{n+l+1}}
        let f = members[n + 1].clone();
        let g = members[n + l + 1].clone();
        members.push(derived_integral(
            &tensor,
            &f,
            &g,
            format!("I{}", 2 * n + l),
        ));
    }
    let count = members.len();
    let (claimed_ddim, claimed_dind) = if n <= 2 {
        (Some(count), Some(count)) // commutative: ddim = dind = 2n+1
    } else {
        (Some(count), None)
    };
    IntegralFamily {
        chart: sys.clone(),
        members,
        claimed_ddim,
        claimed_dind,
    }
}

// --- Reduced LR in the hyperspherical chart ---------------------------------

/// Gauged azimuthal momentum `Ĩ_k = p_{φ_k} + ½ C r² ψ_k`.
struct HsGaugedMomentum {
    n: usize,
    c: f64,
    k: usize, // 1-based plane
}

impl FieldExpr for HsGaugedMomentum {
    fn eval<S: DiffScalar>(&self, s: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let n = self.n;
        let psi = psi_values(n, s);
        let r = s[0];
        s[3 * n - 1 + self.k] + S::from_f64(0.5 * self.c) * r * r * psi[self.k - 1]
    }
}

/// Quadratic integral coupling plane 1 with plane i+1 through the radial
/// angle `θ_{n-i}`:
///
/// ```text
/// Ĩ_{n+i} = (p_{φ_1} tanθ_{n-i}/P - p_{φ_{i+1}} P cotθ_{n-i})²
///         + (p_{θ_{n-i}} P + ϱ_{i-1} tanθ_{n-i})²,
/// P = Π_{k=1}^{i-1} cosθ_{n-k},
/// ϱ_m = p_{θ_{n-m}} sinθ_{n-m} Π_{k=1}^{m-1} cosθ_{n-k} + ϱ_{m-1}/cosθ_{n-m},
/// ϱ_0 = 0.
/// ```
///
/// This is the plane-pair invariant `|ζ_1 w_{i+1} - ζ_{i+1} w_1|²` of the
/// reduced flow written in chart variables; at `i = 1` it expands to
/// `p_{θ_{n-1}}² + p_{φ_1}²/cos²θ_{n-1} + p_{φ_2}²/sin²θ_{n-1} - (p_{φ_1}+p_{φ_2})²`.
struct HsPairIntegral {
    n: usize,
    i: usize, // 1-based, 1 ≤ i ≤ n-1
}

impl FieldExpr for HsPairIntegral {
    fn eval<S: DiffScalar>(&self, s: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let n = self.n;
        let i = self.i;
        let p_theta = |j: usize| s[2 * n + j]; // 1-based radial angle momentum
        let p_phi = |k: usize| s[3 * n - 1 + k]; // 1-based azimuth momentum

        let mut big_p = S::one();
        for k in 1..i {
            big_p = big_p * s[n - k].cos();
        }
        let t = s[n - i].tan();

        let first = p_phi(1) * t / big_p - p_phi(i + 1) * big_p / t;

        let mut rho = S::zero();
        let mut prefix = S::one(); // Π_{k=1}^{m-1} cosθ_{n-k}
        for m in 1..i {
            let theta = s[n - m];
            rho = p_theta(n - m) * theta.sin() * prefix + rho / theta.cos();
            prefix = prefix * theta.cos();
        }
        let second = p_theta(n - i) * big_p + rho * t;

        first * first + second * second
    }
}

fn lr_reduced_family(hs: &SystemId) -> IntegralFamily {
    debug_assert_eq!(hs.kind(), SystemKind::LrHyperspherical);
    let n = hs.n();
    let dim = hs.chart_dim();
    let c = hs.level().unwrap();
    let mut members = Vec::new();
    members.push(hs.hamiltonian().renamed("It0"));
    for k in 1..=n {
        members.push(ScalarField::new(
            format!("It{k}"),
            dim,
            HsGaugedMomentum { n, c, k },
        ));
    }
    for i in 1..n {
        members.push(ScalarField::new(
            format!("It{}", n + i),
            dim,
            HsPairIntegral { n, i },
        ));
    }
    let tensor = hs.poisson_tensor();
    for k in 2..n {
        // J̃_k = {Ĩ_{n+1}, Ĩ_{n+k}}
        let f = members[n + 1].clone();
        let g = members[n + k].clone();
        members.push(derived_integral(&tensor, &f, &g, format!("Jt{k}")));
    }
    let (claimed_ddim, claimed_dind) = if n <= 2 {
        (Some(2 * n), Some(2 * n))
    } else {
        (Some(3 * n - 2), Some(n + 2))
    };
    IntegralFamily {
        chart: hs.clone(),
        members,
        claimed_ddim,
        claimed_dind,
    }
}

// --- Reduced LL: guiding-center momenta and per-plane energies ---------------

enum LlRedMember {
    /// `K_k = p_{k+n} - C x_k`
    CenterX(usize),
    /// `K_{n+k} = p_k + C y_k`
    CenterY(usize),
    /// `Q_k = p_k² + p_{k+n}²`
    PlaneEnergy(usize),
}

struct LlRedIntegral {
    n: usize,
    c: f64,
    member: LlRedMember,
}

impl FieldExpr for LlRedIntegral {
    fn eval<S: DiffScalar>(&self, s: &[S]) -> S
    where
        Dual<S>: DiffScalar,
    {
        let n = self.n;
        let c = S::from_f64(self.c);
        let p = &s[2 * n..];
        match self.member {
            LlRedMember::CenterX(k) => p[n + k] - c * s[k],
            LlRedMember::CenterY(k) => p[k] + c * s[n + k],
            LlRedMember::PlaneEnergy(k) => p[k] * p[k] + p[n + k] * p[n + k],
        }
    }
}

fn ll_reduced_family(sys: &SystemId) -> IntegralFamily {
    let n = sys.n();
    let dim = sys.chart_dim();
    let c = sys.level().unwrap();
    let mut members = Vec::new();
    members.push(sys.hamiltonian().renamed("H"));
    for k in 0..n {
        members.push(ScalarField::new(
            format!("K{}", k + 1),
            dim,
            LlRedIntegral {
                n,
                c,
                member: LlRedMember::CenterX(k),
            },
        ));
    }
    for k in 0..n {
        members.push(ScalarField::new(
            format!("K{}", n + k + 1),
            dim,
            LlRedIntegral {
                n,
                c,
                member: LlRedMember::CenterY(k),
            },
        ));
    }
    for k in 0..n {
        members.push(ScalarField::new(
            format!("Q{}", k + 1),
            dim,
            LlRedIntegral {
                n,
                c,
                member: LlRedMember::PlaneEnergy(k),
            },
        ));
    }
    IntegralFamily {
        chart: sys.clone(),
        members,
        claimed_ddim: None,
        claimed_dind: None,
    }
}
