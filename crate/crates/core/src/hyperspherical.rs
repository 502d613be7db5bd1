//! Radial/angular chart on the reduced phase space ℝ²ⁿ × ℝ²ⁿ.
//!
//! Base coordinates `(r, θ_1..θ_{2n-1})`: each plane `(x_k, y_k)` has radius
//! `R_k` and azimuth `φ_k = θ_{n-1+k}`, and `(R_1, …, R_n)` is parametrized
//! spherically by `(r, θ_1..θ_{n-1})`:
//!
//! ```text
//! R_1 = r cosθ_1 ⋯ cosθ_{n-1},   R_k = r cosθ_1 ⋯ cosθ_{n-k} · sinθ_{n-k+1}.
//! ```
//!
//! Momenta are the cotangent lift, i.e. the Jacobian-transpose pullback
//! `p_new = (∂q/∂y)ᵀ p`, which gives
//!
//! ```text
//! p_r     = ⟨q, p⟩ / r,
//! p_{φ_k} = x_k p_{n+k} - y_k p_k,
//! p_{θ_j} = cotθ_j · β_{n+1-j} - tanθ_j · Σ_{k ≤ n-j} β_k,   β_m = x_m p_m + y_m p_{n+m}.
//! ```
//!
//! The canonical pairing Σ p_i dq_i is preserved by construction; the test
//! suite checks it against ten random tangent directions per point.
//!
//! The chart degenerates where `r = 0` or any radial angle hits `0` or
//! `π/2` (a plane radius vanishing). Operations reject states within
//! [`SINGULAR_EPS`] of those loci rather than regularizing.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::autodiff::{Dual, Scalar, D1};

/// Guard distance from the chart's singular loci.
pub const SINGULAR_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ChartError {
    #[error("singular chart point: {what} (guard {epsilon:.0e})")]
    SingularChartPoint { what: &'static str, epsilon: f64 },
    #[error("state has length {got}, chart needs {expected}")]
    WrongLength { expected: usize, got: usize },
}

fn singular(what: &'static str) -> ChartError {
    ChartError::SingularChartPoint {
        what,
        epsilon: SINGULAR_EPS,
    }
}

/// ψ_k = R_k²/r² as functions of the radial angles; `s` is any slice whose
/// entries `s[1..n]` are `θ_1..θ_{n-1}`. Σ_k ψ_k = 1.
pub fn psi_values<S: Scalar>(n: usize, s: &[S]) -> Vec<S> {
    // prefix products C_m = Π_{l ≤ m} cos²θ_l
    let mut cumulative = vec![S::one(); n];
    for m in 1..n {
        let c = s[m].cos();
        cumulative[m] = cumulative[m - 1] * c * c;
    }
    let mut psi = vec![S::zero(); n];
    psi[0] = cumulative[n - 1];
    for k in 2..=n {
        let si = s[n - k + 1].sin();
        psi[k - 1] = cumulative[n - k] * si * si;
    }
    psi
}

/// Reject hyperspherical states too close to a singular locus.
pub fn guard_hyperspherical(n: usize, state: &[f64]) -> Result<(), ChartError> {
    if state.len() < 2 * n {
        return Err(ChartError::WrongLength {
            expected: 4 * n,
            got: state.len(),
        });
    }
    if state[0].abs() <= SINGULAR_EPS {
        return Err(singular("r near 0"));
    }
    for j in 1..n {
        if state[j].sin().abs() <= SINGULAR_EPS {
            return Err(singular("sin of a radial angle near 0"));
        }
        if state[j].cos().abs() <= SINGULAR_EPS {
            return Err(singular("cos of a radial angle near 0"));
        }
    }
    Ok(())
}

/// Cartesian base point `(x, y)` from hyperspherical base `(r, θ)`.
pub fn base_from_angles<S: Scalar>(n: usize, y: &[S]) -> Vec<S> {
    let r = y[0];
    // plane radii
    let mut radii = vec![S::zero(); n];
    let mut cum = r;
    for k in (2..=n).rev() {
        // index: plane k uses sinθ_{n-k+1} after cosθ_1..θ_{n-k}
        let theta = y[n - k + 1];
        radii[k - 1] = cum * theta.sin();
        cum = cum * theta.cos();
    }
    radii[0] = cum;
    let mut out = vec![S::zero(); 2 * n];
    for k in 0..n {
        let phi = y[n + k];
        out[k] = radii[k] * phi.cos();
        out[n + k] = radii[k] * phi.sin();
    }
    out
}

/// Full chart map `(q, p) → (r, θ, p_r, p_θ)`, generic so its Jacobian can
/// be taken with dual numbers.
pub fn forward_generic<S: Scalar>(n: usize, state: &[S]) -> Vec<S> {
    let q = &state[..2 * n];
    let p = &state[2 * n..];

    // plane radii and their squares
    let mut s_plane = vec![S::zero(); n];
    for k in 0..n {
        s_plane[k] = (q[k] * q[k] + q[n + k] * q[n + k]).sqrt();
    }
    // w_j² = Σ_{k ≤ n-j} s_k², the radius of the first n-j planes together
    let mut out = vec![S::zero(); 4 * n];
    let mut total = S::zero();
    for v in &s_plane {
        total += *v * *v;
    }
    let r = total.sqrt();
    out[0] = r;

    let mut tan_theta = vec![S::zero(); n]; // tanθ_j for j = 1..n-1 (1-based)
    for j in 1..n {
        let mut w2 = S::zero();
        for k in 0..n - j {
            w2 += s_plane[k] * s_plane[k];
        }
        let w = w2.sqrt();
        let s_top = s_plane[n - j]; // s_{n+1-j} with 1-based plane labels
        out[j] = s_top.atan2(w);
        tan_theta[j] = s_top / w;
    }
    for k in 0..n {
        out[n + k] = q[n + k].atan2(q[k]);
    }

    // p_r
    let mut qp = S::zero();
    for (qi, pi) in q.iter().zip(p) {
        qp += *qi * *pi;
    }
    out[2 * n] = qp / r;

    // β_m = x_m p_m + y_m p_{n+m}, p_{φ_k} = x_k p_{n+k} - y_k p_k
    let mut beta = vec![S::zero(); n];
    for m in 0..n {
        beta[m] = q[m] * p[m] + q[n + m] * p[n + m];
    }
    for j in 1..n {
        let mut tail = S::zero();
        for k in 0..n - j {
            tail += beta[k];
        }
        out[2 * n + j] = beta[n - j] / tan_theta[j] - tan_theta[j] * tail;
    }
    for k in 0..n {
        out[3 * n + k] = q[k] * p[n + k] - q[n + k] * p[k];
    }
    out
}

/// `(q, p) → (r, θ, p_r, p_θ)` with singular-locus checks.
pub fn to_hyperspherical(n: usize, state: &[f64]) -> Result<DVector<f64>, ChartError> {
    if state.len() != 4 * n {
        return Err(ChartError::WrongLength {
            expected: 4 * n,
            got: state.len(),
        });
    }
    let out = forward_generic(n, state);
    guard_hyperspherical(n, &out)?;
    if !out.iter().all(|v| v.is_finite()) {
        return Err(singular("chart map not finite"));
    }
    Ok(DVector::from_vec(out))
}

/// `(r, θ, p_r, p_θ) → (q, p)`: closed-form base, momenta by solving the
/// Jacobian-transpose system.
pub fn from_hyperspherical(n: usize, state: &[f64]) -> Result<DVector<f64>, ChartError> {
    if state.len() != 4 * n {
        return Err(ChartError::WrongLength {
            expected: 4 * n,
            got: state.len(),
        });
    }
    guard_hyperspherical(n, state)?;
    let base = base_from_angles(n, &state[..2 * n]);
    let jac = base_jacobian(n, &state[..2 * n]);
    let p_hs = DVector::from_column_slice(&state[2 * n..]);
    let p_cart = jac
        .transpose()
        .lu()
        .solve(&p_hs)
        .ok_or_else(|| singular("chart Jacobian not invertible"))?;
    let mut out = DVector::zeros(4 * n);
    for i in 0..2 * n {
        out[i] = base[i];
        out[2 * n + i] = p_cart[i];
    }
    Ok(out)
}

/// Jacobian ∂(x, y)/∂(r, θ) of the base chart map.
pub fn base_jacobian(n: usize, y: &[f64]) -> DMatrix<f64> {
    let mut seed: Vec<D1> = y[..2 * n].iter().map(|&v| Dual::constant(v)).collect();
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..2 * n {
        seed[j].eps = 1.0;
        let col = base_from_angles(n, &seed);
        for (i, c) in col.iter().enumerate() {
            jac[(i, j)] = c.eps;
        }
        seed[j].eps = 0.0;
    }
    jac
}

/// Configuration metric of the reduced flow, `E + (Jq)(Jq)ᵀ` pulled back to
/// the `(r, θ)` chart:
///
/// ```text
/// dr² + r² Σ_{j<n} Π_{l<j}cos²θ_l dθ_j² + r² Σ_k ψ_k dφ_k² + r⁴ (Σ_k ψ_k dφ_k)².
/// ```
pub fn hyperspherical_metric(n: usize, r: f64, theta: &[f64]) -> Result<DMatrix<f64>, ChartError> {
    let mut probe = vec![r];
    probe.extend_from_slice(theta);
    guard_hyperspherical(n, &probe)?;
    let psi = psi_values(n, &probe);
    let dim = 2 * n;
    let mut g = DMatrix::zeros(dim, dim);
    g[(0, 0)] = 1.0;
    let r2 = r * r;
    let mut cprod = 1.0;
    for j in 1..n {
        g[(j, j)] = r2 * cprod;
        let c = theta[j - 1].cos();
        cprod *= c * c;
    }
    for k in 0..n {
        for l in 0..n {
            let idx_k = n + k;
            let idx_l = n + l;
            let mut entry = r2 * r2 * psi[k] * psi[l];
            if k == l {
                entry += r2 * psi[k];
            }
            g[(idx_k, idx_l)] = entry;
        }
    }
    Ok(g)
}
