//! Trajectory integration, conservation monitoring, closed-form helices,
//! and orbit-closure classification for the magnetic reductions.
//!
//! Default integrator: adaptive Dormand–Prince 5(4) with rel tol 1e-10 and
//! abs tol 1e-12. Fixed-step RK4 and an implicit midpoint rule (fixed-point
//! iteration, stop 1e-13, at most 50 sweeps) are available; the midpoint
//! rule is restricted to canonical charts, where it is symplectic. Dense
//! output between accepted nodes is cubic Hermite.

use nalgebra::DVector;
use thiserror::Error;

use crate::field::ScalarField;
use crate::heisenberg::MetricSpec;
use crate::hyperspherical::{to_hyperspherical, ChartError};
use crate::poisson::IntegralFamily;
use crate::systems::{SystemId, SystemKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Rk4 { step: f64 },
    Dopri { rel_tol: f64, abs_tol: f64 },
    ImplicitMidpoint { step: f64 },
}

impl Method {
    pub fn default_adaptive() -> Self {
        Method::Dopri {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
        }
    }
}

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("state left the chart: {0}")]
    Chart(#[from] ChartError),
    #[error("non-finite state detected at t = {t}")]
    NonFinite { t: f64, last_good: DVector<f64> },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64, last_good: DVector<f64> },
    #[error("implicit midpoint iteration did not converge at t = {t}")]
    MidpointStalled { t: f64 },
    #[error("implicit midpoint requires a canonical chart; {system} is not one")]
    NonCanonicalChart { system: String },
    #[error("step limit exceeded at t = {t}")]
    StepLimit { t: f64 },
    #[error("initial state: {0}")]
    BadState(#[from] crate::systems::SystemError),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("family chart (dim {family}) does not match trajectory chart (dim {chart})")]
    ChartMismatch { family: usize, chart: usize },
    #[error("trajectory crossed a singular locus of the integral chart: {0}")]
    Chart(#[from] ChartError),
}

/// An integrated orbit: accepted nodes with their derivatives, for cubic
/// Hermite sampling at arbitrary times.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub system: SystemId,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub derivs: Vec<DVector<f64>>,
    pub method: Method,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.states[0]
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    /// Cubic Hermite interpolation between the bracketing nodes.
    pub fn sample(&self, t: f64) -> DVector<f64> {
        let times = &self.times;
        if t <= times[0] {
            return self.states[0].clone();
        }
        if t >= *times.last().unwrap() {
            return self.states.last().unwrap().clone();
        }
        let idx = match times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.states[i].clone(),
            Err(i) => i - 1,
        };
        let (t0, t1) = (times[idx], times[idx + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (y0, y1) = (&self.states[idx], &self.states[idx + 1]);
        let (f0, f1) = (&self.derivs[idx], &self.derivs[idx + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        y0 * h00 + f0 * (h10 * h) + y1 * h01 + f1 * (h11 * h)
    }

    /// Max relative deviation of a scalar field from its initial value over
    /// the stored nodes.
    pub fn drift_of(&self, f: &ScalarField) -> f64 {
        let first = f.eval(self.states[0].as_slice());
        let scale = f64::max(1.0, first.abs());
        self.states
            .iter()
            .map(|s| (f.eval(s.as_slice()) - first).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// Relative energy drift along the orbit.
    pub fn energy_drift(&self) -> f64 {
        self.drift_of(&self.system.hamiltonian())
    }
}

/// Right-hand side used by the integrators.
pub type Rhs<'a> = &'a dyn Fn(&[f64]) -> Result<DVector<f64>, ChartError>;

const MAX_STEPS: usize = 50_000_000;

/// Integrate a flow from `x0` over `[0, t_end]`.
pub fn integrate(
    sys: &SystemId,
    x0: &[f64],
    t_end: f64,
    method: Method,
) -> Result<Trajectory, IntegrateError> {
    sys.check_state(x0)?;
    if matches!(method, Method::ImplicitMidpoint { .. }) && !sys.kind().is_canonical_chart() {
        return Err(IntegrateError::NonCanonicalChart {
            system: sys.to_string(),
        });
    }
    let field = sys.vector_field();
    let rhs = move |s: &[f64]| field.eval(s);
    let (times, states, derivs) = integrate_rhs(&rhs, x0, t_end, method)?;
    Ok(Trajectory {
        system: sys.clone(),
        times,
        states,
        derivs,
        method,
    })
}

/// Integrate an arbitrary right-hand side (used for time-reversal checks
/// and lift/project comparisons).
pub fn integrate_rhs(
    rhs: Rhs,
    x0: &[f64],
    t_end: f64,
    method: Method,
) -> Result<(Vec<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>), IntegrateError> {
    match method {
        Method::Rk4 { step } => fixed_step(rhs, x0, t_end, step, rk4_step),
        Method::ImplicitMidpoint { step } => fixed_step(rhs, x0, t_end, step, midpoint_step),
        Method::Dopri { rel_tol, abs_tol } => dopri(rhs, x0, t_end, rel_tol, abs_tol),
    }
}

fn check_finite(y: &DVector<f64>, t: f64, last: &DVector<f64>) -> Result<(), IntegrateError> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(IntegrateError::NonFinite {
            t,
            last_good: last.clone(),
        })
    }
}

type StepFn = fn(Rhs, &DVector<f64>, f64, &DVector<f64>) -> Result<DVector<f64>, StepFailure>;

enum StepFailure {
    Chart(ChartError),
    Stalled,
}

impl From<ChartError> for StepFailure {
    fn from(e: ChartError) -> Self {
        StepFailure::Chart(e)
    }
}

fn fixed_step(
    rhs: Rhs,
    x0: &[f64],
    t_end: f64,
    step: f64,
    stepper: StepFn,
) -> Result<(Vec<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>), IntegrateError> {
    assert!(step > 0.0 && t_end >= 0.0);
    let n_steps = (t_end / step).ceil().max(1.0) as usize;
    let h = t_end / n_steps as f64;
    let mut y = DVector::from_column_slice(x0);
    let mut f = rhs(y.as_slice()).map_err(IntegrateError::Chart)?;
    check_finite(&f, 0.0, &y)?;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut derivs = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    states.push(y.clone());
    derivs.push(f.clone());
    for i in 0..n_steps {
        let t = i as f64 * h;
        let y_new = stepper(rhs, &y, h, &f).map_err(|e| match e {
            StepFailure::Chart(c) => IntegrateError::Chart(c),
            StepFailure::Stalled => IntegrateError::MidpointStalled { t },
        })?;
        check_finite(&y_new, t + h, &y)?;
        y = y_new;
        f = rhs(y.as_slice()).map_err(IntegrateError::Chart)?;
        times.push((i + 1) as f64 * h);
        states.push(y.clone());
        derivs.push(f.clone());
    }
    Ok((times, states, derivs))
}

fn rk4_step(
    rhs: Rhs,
    y: &DVector<f64>,
    h: f64,
    f0: &DVector<f64>,
) -> Result<DVector<f64>, StepFailure> {
    let k1 = f0;
    let k2 = rhs((y + k1 * (h / 2.0)).as_slice())?;
    let k3 = rhs((y + &k2 * (h / 2.0)).as_slice())?;
    let k4 = rhs((y + &k3 * h).as_slice())?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

const MIDPOINT_STOP: f64 = 1e-13;
const MIDPOINT_MAX_SWEEPS: usize = 50;

fn midpoint_step(
    rhs: Rhs,
    y: &DVector<f64>,
    h: f64,
    f0: &DVector<f64>,
) -> Result<DVector<f64>, StepFailure> {
    let mut z = y + f0 * h;
    for _ in 0..MIDPOINT_MAX_SWEEPS {
        let mid = (y + &z) * 0.5;
        let z_next = y + rhs(mid.as_slice())? * h;
        let delta = (&z_next - &z).amax();
        z = z_next;
        if delta < MIDPOINT_STOP {
            return Ok(z);
        }
    }
    Err(StepFailure::Stalled)
}

// Dormand–Prince 5(4) tableau (autonomous form; the C nodes are implicit in A).
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn dopri(
    rhs: Rhs,
    x0: &[f64],
    t_end: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<(Vec<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>), IntegrateError> {
    let dim = x0.len();
    let mut y = DVector::from_column_slice(x0);
    let mut f = rhs(y.as_slice()).map_err(IntegrateError::Chart)?;
    let mut t = 0.0;

    let mut times = vec![0.0];
    let mut states = vec![y.clone()];
    let mut derivs = vec![f.clone()];
    if t_end == 0.0 {
        return Ok((times, states, derivs));
    }

    // Hairer-style initial step estimate
    let sk = |yv: &DVector<f64>, i: usize| abs_tol + rel_tol * yv[i].abs();
    let d0 = (0..dim)
        .map(|i| (y[i] / sk(&y, i)).powi(2))
        .sum::<f64>()
        .sqrt()
        / (dim as f64).sqrt();
    let d1 = (0..dim)
        .map(|i| (f[i] / sk(&y, i)).powi(2))
        .sum::<f64>()
        .sqrt()
        / (dim as f64).sqrt();
    let mut h = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h = h.min(t_end);

    let mut k = vec![DVector::zeros(dim); 7];
    let mut steps = 0usize;
    while t < t_end {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(IntegrateError::StepLimit { t });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(IntegrateError::StepUnderflow {
                t,
                last_good: y.clone(),
            });
        }
        h = h.min(t_end - t);

        k[0] = f.clone();
        let mut failed = false;
        for stage in 1..7 {
            let mut yi = y.clone();
            for (j, kj) in k.iter().enumerate().take(stage) {
                let a = DP_A[stage][j];
                if a != 0.0 {
                    yi += kj * (a * h);
                }
            }
            match rhs(yi.as_slice()) {
                Ok(v) => k[stage] = v,
                Err(_) if t > 0.0 => {
                    // singular locus grazed mid-stage: retry with a smaller step
                    failed = true;
                    break;
                }
                Err(e) => return Err(IntegrateError::Chart(e)),
            }
        }
        if failed || k.iter().any(|ki| !ki.iter().all(|v| v.is_finite())) {
            h *= 0.5;
            continue;
        }

        // 5th-order solution is the stage-7 argument (A row 6 = B weights)
        let mut y_new = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            let a = DP_A[6][j];
            if a != 0.0 {
                y_new += kj * (a * h);
            }
        }

        let mut err = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += DP_E[j] * kj[i];
            }
            let scale = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
            err += (h * e / scale).powi(2);
        }
        err = (err / dim as f64).sqrt();

        if err <= 1.0 {
            check_finite(&y_new, t + h, &y)?;
            t += h;
            f = k[6].clone(); // FSAL
            y = y_new;
            times.push(t);
            states.push(y.clone());
            derivs.push(f.clone());
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Ok((times, states, derivs))
}

// --- Closed-form LL helices ---------------------------------------------------

#[derive(Debug, Error, PartialEq)]
pub enum HelixError {
    #[error("helix frequencies require λ_{{2n+1}} ≠ 0")]
    ZeroFrequency,
    #[error("coefficient vectors must all have length n")]
    LengthMismatch,
}

/// Coefficients of a closed-form LL geodesic: per-plane `(a_k, b_k, c_k,
/// d_k)`, a z-offset `c_0`, and frequencies `τ_k = λ_{2n+1}/σ_k`:
///
/// ```text
/// x_k(t) = a_k cos(τ_k t) + b_k sin(τ_k t) + c_k,
/// y_k(t) = -b_k cos(τ_k t) + a_k sin(τ_k t) + d_k,
/// z(t)   = c_0 + Σ_k [ ½ τ_k t (a_k²+b_k²) + ¼ (a_k²-b_k²) sin(2τ_k t)
///                      - ½ a_k b_k cos(2τ_k t) + a_k c_k sin(τ_k t) - b_k c_k cos(τ_k t) ].
/// ```
#[derive(Clone, Debug)]
pub struct HelixParams {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    c0: f64,
    freqs: Vec<f64>,
    lambda_z: f64,
}

impl HelixParams {
    pub fn new(
        spec: &MetricSpec,
        lambda_z: f64,
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        d: Vec<f64>,
        c0: f64,
    ) -> Result<Self, HelixError> {
        if lambda_z == 0.0 || !lambda_z.is_finite() {
            return Err(HelixError::ZeroFrequency);
        }
        let n = spec.n();
        if a.len() != n || b.len() != n || c.len() != n || d.len() != n {
            return Err(HelixError::LengthMismatch);
        }
        let freqs = spec.sigma().iter().map(|s| lambda_z / s).collect();
        Ok(HelixParams {
            a,
            b,
            c,
            d,
            c0,
            freqs,
            lambda_z,
        })
    }

    /// Invert the coefficient map at `t = 0`: given a full LL state with
    /// `λ_{2n+1} ≠ 0`,
    ///
    /// ```text
    /// b_k = λ_k/λ_{2n+1},  c_k = -λ_{k+n}/λ_{2n+1},  a_k = x_k - c_k,
    /// d_k = y_k + b_k,     c_0 = z + Σ_k (½ a_k b_k + b_k c_k).
    /// ```
    pub fn from_initial_state(spec: &MetricSpec, state: &[f64]) -> Result<Self, HelixError> {
        let n = spec.n();
        assert_eq!(state.len(), 4 * n + 2);
        let lam_z = state[4 * n + 1];
        if lam_z == 0.0 || !lam_z.is_finite() {
            return Err(HelixError::ZeroFrequency);
        }
        let lam = &state[2 * n + 1..];
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut c0 = state[2 * n];
        for k in 0..n {
            b[k] = lam[k] / lam_z;
            c[k] = -lam[n + k] / lam_z;
            a[k] = state[k] - c[k];
            d[k] = state[n + k] + b[k];
            c0 += 0.5 * a[k] * b[k] + b[k] * c[k];
        }
        HelixParams::new(spec, lam_z, a, b, c, d, c0)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    /// Radii of the projected circles, `√(a_k² + b_k²)`.
    pub fn radii(&self) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .collect()
    }

    /// Base point `(x(t), y(t), z(t))`.
    pub fn position(&self, t: f64) -> DVector<f64> {
        let n = self.n();
        let mut out = DVector::zeros(2 * n + 1);
        let mut z = self.c0;
        for k in 0..n {
            let (a, b, c, d) = (self.a[k], self.b[k], self.c[k], self.d[k]);
            let w = self.freqs[k];
            let (s, co) = (w * t).sin_cos();
            let (s2, co2) = (2.0 * w * t).sin_cos();
            out[k] = a * co + b * s + c;
            out[n + k] = -b * co + a * s + d;
            z += 0.5 * w * t * (a * a + b * b) + 0.25 * (a * a - b * b) * s2
                - 0.5 * a * b * co2
                + a * c * s
                - b * c * co;
        }
        out[2 * n] = z;
        out
    }

    /// Time derivative `(ẋ(t), ẏ(t), ż(t))` of the closed form.
    pub fn velocity(&self, t: f64) -> DVector<f64> {
        let n = self.n();
        let mut out = DVector::zeros(2 * n + 1);
        let mut z_dot = 0.0;
        for k in 0..n {
            let (a, b, c) = (self.a[k], self.b[k], self.c[k]);
            let w = self.freqs[k];
            let (s, co) = (w * t).sin_cos();
            let (s2, co2) = (2.0 * w * t).sin_cos();
            out[k] = w * (-a * s + b * co);
            out[n + k] = w * (b * s + a * co);
            z_dot += 0.5 * w * (a * a + b * b) + 0.5 * w * (a * a - b * b) * co2
                + w * a * b * s2
                + w * a * c * co
                + w * b * c * s;
        }
        out[2 * n] = z_dot;
        out
    }

    /// Full cotangent state along the helix; the covector legs are
    /// `λ_k(t) = λ_{2n+1}(b_k cos(τ_k t) - a_k sin(τ_k t))` and
    /// `λ_{k+n} = -c_k λ_{2n+1}`.
    pub fn full_state(&self, t: f64) -> DVector<f64> {
        let n = self.n();
        let base = self.position(t);
        let mut out = DVector::zeros(4 * n + 2);
        for i in 0..2 * n + 1 {
            out[i] = base[i];
        }
        for k in 0..n {
            let w = self.freqs[k];
            let (s, co) = (w * t).sin_cos();
            out[2 * n + 1 + k] = self.lambda_z * (self.b[k] * co - self.a[k] * s);
            out[3 * n + 1 + k] = -self.c[k] * self.lambda_z;
        }
        out[4 * n + 1] = self.lambda_z;
        out
    }
}

/// Base point of the helix at time `t`.
pub fn helix_solution(params: &HelixParams, t: f64) -> DVector<f64> {
    params.position(t)
}

// --- Conservation reports ----------------------------------------------------

/// Per-member max relative drift of a family along a trajectory:
/// `max_t |f(x(t)) - f(x(0))| / max(1, |f(x(0))|)`.
///
/// When the trajectory lives on the cartesian reduced LR chart and the
/// family on the hyperspherical one, states are mapped through the chart
/// first (the map is Poisson, so drifts are preserved).
pub fn conservation_report(
    traj: &Trajectory,
    family: &IntegralFamily,
) -> Result<Vec<(String, f64)>, ReportError> {
    let values = member_values_along(traj, family)?;
    let mut out = Vec::with_capacity(family.members.len());
    for (i, f) in family.members.iter().enumerate() {
        let first = values[0][i];
        let scale = f64::max(1.0, first.abs());
        let drift = values
            .iter()
            .map(|row| (row[i] - first).abs() / scale)
            .fold(0.0, f64::max);
        out.push((f.name().to_string(), drift));
    }
    Ok(out)
}

/// Family member values at every stored node.
pub fn member_values_along(
    traj: &Trajectory,
    family: &IntegralFamily,
) -> Result<Vec<Vec<f64>>, ReportError> {
    let composed = traj.system.kind() == SystemKind::LrReduced
        && family.chart.kind() == SystemKind::LrHyperspherical;
    if !composed && family.chart.chart_dim() != traj.system.chart_dim() {
        return Err(ReportError::ChartMismatch {
            family: family.chart.chart_dim(),
            chart: traj.system.chart_dim(),
        });
    }
    let n = traj.system.n();
    traj.states
        .iter()
        .map(|s| {
            let point = if composed {
                to_hyperspherical(n, s.as_slice())?
            } else {
                s.clone()
            };
            Ok(family
                .members
                .iter()
                .map(|f| f.eval(point.as_slice()))
                .collect())
        })
        .collect()
}

/// Trajectory CSV: header `t,<state components>,<integral values>`, values
/// with 17 significant digits.
pub fn trajectory_csv(
    traj: &Trajectory,
    family: Option<&IntegralFamily>,
) -> Result<String, ReportError> {
    let mut header: Vec<String> = vec!["t".into()];
    header.extend(traj.system.state_names());
    let values = match family {
        Some(fam) => {
            header.extend(fam.names());
            Some(member_values_along(traj, fam)?)
        }
        None => None,
    };
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for (idx, (t, state)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.push(format!("{t:.16e}"));
        row.extend(state.iter().map(|v| format!("{v:.16e}")));
        if let Some(vals) = &values {
            row.extend(vals[idx].iter().map(|v| format!("{v:.16e}")));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

// --- Orbit classification ------------------------------------------------------

#[derive(Debug, Error, PartialEq)]
pub enum OrbitError {
    #[error("orbit classification applies to the reduced LL system")]
    WrongSystem,
    #[error("orbit classification requires C ≠ 0")]
    ZeroLevel,
    #[error("integration failed: {0}")]
    Integration(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum OrbitClass {
    /// All frequency ratios rational with small denominators; the detected
    /// period is confirmed by a return-distance minimum below `1e-6`.
    Closed {
        period: f64,
        return_distance: f64,
    },
    /// No rational resonance within denominator 64, or no return within the
    /// horizon; reports the best approach seen.
    NonClosed {
        horizon: f64,
        min_return_distance: f64,
    },
}

const RETURN_TOL: f64 = 1e-6;
const MAX_DENOMINATOR: u64 = 64;

/// Best rational approximation p/q with q ≤ max_q (continued fractions).
fn rational_approx(x: f64, max_q: u64) -> (i64, u64, f64) {
    let mut best = (x.round() as i64, 1u64, (x - x.round()).abs());
    let (mut h0, mut h1) = (1i64, x.floor() as i64);
    let (mut k0, mut k1) = (0i64, 1i64);
    let mut frac = x - x.floor();
    for _ in 0..32 {
        if frac.abs() < 1e-15 {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        frac = inv - a;
        let h2 = a as i64 * h1 + h0;
        let k2 = a as i64 * k1 + k0;
        if k2 <= 0 || k2 as u64 > max_q {
            break;
        }
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        let err = (x - h1 as f64 / k1 as f64).abs();
        if err < best.2 {
            best = (h1, k1 as u64, err);
        }
    }
    best
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Decide whether a reduced LL orbit closes up, and detect its period.
///
/// The mode frequencies are `τ_k = C/σ_k`; the orbit is periodic exactly
/// when all ratios `τ_k/τ_1 = σ_1/σ_k` are rational. Rationality is probed
/// by continued fractions with denominators ≤ 64 — evidence, not proof —
/// and the candidate period is then confirmed (and refined) by minimizing
/// the return distance of the integrated orbit.
pub fn orbit_classify(
    sys: &SystemId,
    x0: &[f64],
    horizon: f64,
) -> Result<OrbitClass, OrbitError> {
    if sys.kind() != SystemKind::LlReduced {
        return Err(OrbitError::WrongSystem);
    }
    let c = sys.level().unwrap();
    if c == 0.0 {
        return Err(OrbitError::ZeroLevel);
    }
    let freqs: Vec<f64> = sys.spec().sigma().iter().map(|s| c / s).collect();

    let mut lcm_q = 1u64;
    let mut rational = true;
    for f in &freqs {
        let ratio = f / freqs[0];
        let (_, q, err) = rational_approx(ratio, MAX_DENOMINATOR);
        if err > 1e-9 {
            rational = false;
            break;
        }
        lcm_q = lcm_q / gcd(lcm_q, q) * q;
    }

    let dist = |a: &DVector<f64>, b: &DVector<f64>| (a - b).norm();

    if rational {
        let candidate = 2.0 * std::f64::consts::PI * lcm_q as f64 / freqs[0].abs();
        let pad = 1.01 * candidate;
        let traj = integrate(sys, x0, pad, Method::default_adaptive())
            .map_err(|e| OrbitError::Integration(e.to_string()))?;
        let x0v = DVector::from_column_slice(x0);
        // golden-section refinement of the return-distance minimum
        let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (0.99 * candidate, (1.01 * candidate).min(traj.t_end()));
        for _ in 0..80 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if dist(&traj.sample(m1), &x0v) < dist(&traj.sample(m2), &x0v) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let period = 0.5 * (lo + hi);
        let return_distance = dist(&traj.sample(period), &x0v);
        if return_distance < RETURN_TOL {
            return Ok(OrbitClass::Closed {
                period,
                return_distance,
            });
        }
        // resonance candidate did not verify; fall through to the scan
    }

    let traj = integrate(sys, x0, horizon, Method::default_adaptive())
        .map_err(|e| OrbitError::Integration(e.to_string()))?;
    let x0v = DVector::from_column_slice(x0);
    let t_min = 0.1 * 2.0 * std::f64::consts::PI / freqs.iter().cloned().fold(0.0, f64::max).abs();
    let mut min_return = f64::INFINITY;
    let samples = 20_000;
    for i in 0..samples {
        let t = t_min + (horizon - t_min) * i as f64 / samples as f64;
        min_return = min_return.min(dist(&traj.sample(t), &x0v));
    }
    Ok(OrbitClass::NonClosed {
        horizon,
        min_return_distance: min_return,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn helix_unit_circle_case() {
        // n = 1, σ = 1, λ_3 = 1, (a,b,c,d,c0) = (1,0,0,0,0):
        // x = cos t, y = sin t, z = t/2 + sin(2t)/4
        let spec = MetricSpec::standard(1);
        let h = HelixParams::new(&spec, 1.0, vec![1.0], vec![0.0], vec![0.0], vec![0.0], 0.0)
            .unwrap();
        for &t in &[0.0, 0.4, 1.3, 6.0] {
            let p = h.position(t);
            assert_relative_eq!(p[0], t.cos(), epsilon = 1e-15);
            assert_relative_eq!(p[1], t.sin(), epsilon = 1e-15);
            assert_relative_eq!(p[2], t / 2.0 + (2.0 * t).sin() / 4.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn helix_value_at_zero() {
        let spec = MetricSpec::new(vec![2.0, 1.0], 1.0).unwrap();
        let (a, b, c, d) = (
            vec![0.3, -1.0],
            vec![0.5, 0.25],
            vec![-0.75, 2.0],
            vec![1.5, 0.0],
        );
        let c0 = 0.7;
        let h = HelixParams::new(&spec, 2.0, a.clone(), b.clone(), c.clone(), d.clone(), c0)
            .unwrap();
        let p = h.position(0.0);
        for k in 0..2 {
            assert_relative_eq!(p[k], a[k] + c[k], epsilon = 1e-15);
            assert_relative_eq!(p[2 + k], -b[k] + d[k], epsilon = 1e-15);
        }
        let z_expect = c0
            - (0..2)
                .map(|k| a[k] * b[k] / 2.0 + b[k] * c[k])
                .sum::<f64>();
        assert_relative_eq!(p[4], z_expect, epsilon = 1e-14);
    }

    #[test]
    fn zero_radius_helix_is_stationary() {
        let spec = MetricSpec::standard(1);
        let h = HelixParams::new(&spec, 1.0, vec![0.0], vec![0.0], vec![0.4], vec![-0.2], 3.0)
            .unwrap();
        for &t in &[0.0, 1.0, 5.0] {
            let p = h.position(t);
            assert_relative_eq!(p[0], 0.4, epsilon = 1e-15);
            assert_relative_eq!(p[1], -0.2, epsilon = 1e-15);
            assert_relative_eq!(p[2], 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn helix_horizontality() {
        // ż = Σ x_k ẏ_k along the closed form, by central differences
        let spec = MetricSpec::new(vec![3.0, 1.0], 1.0).unwrap();
        let h = HelixParams::new(
            &spec,
            1.5,
            vec![1.0, 0.2],
            vec![-0.3, 0.8],
            vec![0.1, -0.5],
            vec![0.0, 0.4],
            0.0,
        )
        .unwrap();
        let dt = 1e-6;
        for &t in &[0.3, 1.7, 4.1] {
            let plus = h.position(t + dt);
            let minus = h.position(t - dt);
            let here = h.position(t);
            let z_dot = (plus[4] - minus[4]) / (2.0 * dt);
            let mut xy_dot = 0.0;
            for k in 0..2 {
                xy_dot += here[k] * (plus[2 + k] - minus[2 + k]) / (2.0 * dt);
            }
            assert_relative_eq!(z_dot, xy_dot, epsilon = 1e-8);
        }
    }

    #[test]
    fn helix_round_trips_through_initial_state() {
        let spec = MetricSpec::new(vec![2.0, 1.0], 1.0).unwrap();
        let h = HelixParams::new(
            &spec,
            -1.2,
            vec![0.4, 1.1],
            vec![0.9, -0.3],
            vec![0.2, 0.0],
            vec![-0.6, 0.5],
            1.1,
        )
        .unwrap();
        let state0 = h.full_state(0.0);
        let h2 = HelixParams::from_initial_state(&spec, state0.as_slice()).unwrap();
        for &t in &[0.0, 0.9, 2.7] {
            assert_relative_eq!(
                (h.position(t) - h2.position(t)).norm(),
                0.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn stationary_point_at_zero_momentum() {
        let sys = SystemId::new(SystemKind::LlFull, MetricSpec::standard(1), None).unwrap();
        let x0 = [0.7, -0.4, 2.0, 0.0, 0.0, 0.0];
        let traj = integrate(&sys, &x0, 5.0, Method::default_adaptive()).unwrap();
        assert_relative_eq!(
            (traj.final_state() - traj.initial_state()).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn midpoint_rejects_non_canonical_charts() {
        let sys = SystemId::new(SystemKind::LlReduced, MetricSpec::standard(1), Some(1.0)).unwrap();
        let err = integrate(
            &sys,
            &[0.0, 0.0, 1.0, 0.0],
            1.0,
            Method::ImplicitMidpoint { step: 0.01 },
        );
        assert!(matches!(err, Err(IntegrateError::NonCanonicalChart { .. })));
    }

    #[test]
    fn single_mode_orbit_period() {
        // n = 1, σ = 1, C = 1: period 2π
        let sys = SystemId::new(SystemKind::LlReduced, MetricSpec::standard(1), Some(1.0)).unwrap();
        let x0 = [1.0, 0.0, 0.3, 0.8];
        match orbit_classify(&sys, &x0, 100.0).unwrap() {
            OrbitClass::Closed {
                period,
                return_distance,
            } => {
                assert_relative_eq!(
                    period,
                    2.0 * std::f64::consts::PI,
                    epsilon = 1e-6
                );
                assert!(return_distance < 1e-6);
            }
            other => panic!("expected closed orbit, got {other:?}"),
        }
    }

    #[test]
    fn rational_approx_recovers_small_fractions() {
        let (p, q, err) = rational_approx(0.5, 64);
        assert_eq!((p, q), (1, 2));
        assert!(err < 1e-15);
        let (p, q, _) = rational_approx(2.0, 64);
        assert_eq!((p, q), (2, 1));
        let (_, _, err) = rational_approx(std::f64::consts::SQRT_2, 64);
        assert!(err > 1e-5);
    }

    #[test]
    fn csv_header_and_precision() {
        let sys = SystemId::new(SystemKind::LlFull, MetricSpec::standard(1), None).unwrap();
        let traj = integrate(&sys, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0], 0.5, Method::Rk4 { step: 0.1 })
            .unwrap();
        let fam = crate::families::family_for(&sys);
        let csv = trajectory_csv(&traj, Some(&fam)).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,y1,z,lam1,lam2,lam3,I0,I1,I2,I3");
        let first = lines.next().unwrap();
        // 17 significant digits = 16 digits after the point in sci notation
        assert!(first.split(',').all(|f| f.contains("e") && f.split('e').next().unwrap().len() >= 17));
    }
}
