//! One-step optimal-control inverse dynamics.
//!
//! Both closed-form controllers solve
//! `min ½‖z_T − z_{t+1}‖² + β/2 aᵀW⁻¹a` subject to
//! `z_{t+1} = z_t + (A z_t + B a + c) Δt`, whose solution is
//! `a = W Bᵀ (B W Bᵀ + β/Δt² I)⁻¹ r` with `r = (z_T − z_t)/Δt − A z_t − c`
//! and `W` a positive diagonal action metric (`W = I` gives the plain
//! Euclidean penalty).

use nalgebra::{Cholesky, Matrix3, Matrix3x6, Vector3, Vector6, U3};

use super::model::{DynKind, DynamicsModel, IdKind, LinearParams};
use crate::error::{Error, Result};

/// Solution of the one-step problem with its multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqSolution {
    pub action: Vector6<f64>,
    pub lambda: Vector3<f64>,
    /// `(B W Bᵀ + γ I)⁻¹ r`
    pub y: Vector3<f64>,
}

fn check_dt_beta(dt: f64, beta: f64) -> Result<()> {
    if !(dt > 0.0) || !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "controller needs dt > 0 and beta > 0 (dt {dt}, beta {beta})"
        )));
    }
    Ok(())
}

fn factor(bw: &Matrix3x6<f64>, b: &Matrix3x6<f64>, gamma: f64) -> Result<Cholesky<f64, U3>> {
    let m = bw * b.transpose() + Matrix3::identity() * gamma;
    Cholesky::new(m).ok_or_else(|| Error::InvalidArgument("B W Bᵀ + γI is not positive definite".into()))
}

fn weighted(b: &Matrix3x6<f64>, w: &Vector6<f64>) -> Matrix3x6<f64> {
    Matrix3x6::from_fn(|i, j| b[(i, j)] * w[j])
}

/// `a = W Bᵀ (B W Bᵀ + γ I)⁻¹ r` with `γ = β/Δt²`, and `λ = (β/Δt) y`.
pub fn lq_solve(b: &Matrix3x6<f64>, r: &Vector3<f64>, dt: f64, beta: f64, w: &Vector6<f64>) -> Result<LqSolution> {
    check_dt_beta(dt, beta)?;
    if !w.iter().all(|&v| v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidArgument(format!("action metric must be positive, got {w:?}")));
    }
    let bw = weighted(b, w);
    let y = factor(&bw, b, beta / (dt * dt))?.solve(r);
    Ok(LqSolution {
        action: bw.transpose() * y,
        lambda: y * (beta / dt),
        y,
    })
}

/// Gradients of a scalar loss through [`lq_solve`] given `∂L/∂a`:
/// returns `(∂L/∂B, ∂L/∂r)`.
pub fn lq_backward(
    b: &Matrix3x6<f64>,
    sol: &LqSolution,
    g_a: &Vector6<f64>,
    dt: f64,
    beta: f64,
    w: &Vector6<f64>,
) -> Result<(Matrix3x6<f64>, Vector3<f64>)> {
    let bw = weighted(b, w);
    let chol = factor(&bw, b, beta / (dt * dt))?;
    let v = chol.solve(&(bw * g_a));
    let y = sol.y;
    let g_b = y * g_a.component_mul(w).transpose() - (v * y.transpose() + y * v.transpose()) * bw;
    Ok((g_b, v))
}

/// Right-hand side `(z_T − z_t)/Δt − A z_t − c`.
pub fn lq_rhs(sys: &LinearParams, z_t: &Vector3<f64>, z_target: &Vector3<f64>, dt: f64) -> Vector3<f64> {
    (z_target - z_t) / dt - sys.a * z_t - sys.c
}

/// Closed-form controller for an explicit linear system.
pub fn solve_linear(
    sys: &LinearParams,
    z_t: &Vector3<f64>,
    z_target: &Vector3<f64>,
    dt: f64,
    beta: f64,
    w: &Vector6<f64>,
) -> Result<LqSolution> {
    lq_solve(&sys.b, &lq_rhs(sys, z_t, z_target, dt), dt, beta, w)
}

/// Value of the one-step objective at action `a`.
pub fn lq_objective(
    sys: &LinearParams,
    z_t: &Vector3<f64>,
    z_target: &Vector3<f64>,
    a: &Vector6<f64>,
    dt: f64,
    beta: f64,
    w: &Vector6<f64>,
) -> f64 {
    let next = z_t + sys.zdot(z_t, a) * dt;
    0.5 * (z_target - next).norm_squared() + 0.5 * beta * a.component_div(w).dot(a)
}

/// Residuals of the stationarity conditions of the Lagrangian
/// `½‖z_T − z'‖² + β/2 aᵀW⁻¹a + λᵀ(z' − z_t − (A z_t + B a + c)Δt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `∂/∂λ`: dynamics constraint with `z' = z_T − λ`.
    pub constraint: f64,
    /// `∂/∂a`: `β W⁻¹a − Δt Bᵀ λ`.
    pub action: f64,
    /// `∂/∂z'`: `λ − (z_T − z')` with `z'` from the constraint.
    pub state: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.constraint.max(self.action).max(self.state)
    }
}

pub fn kkt_residuals(
    sys: &LinearParams,
    z_t: &Vector3<f64>,
    z_target: &Vector3<f64>,
    dt: f64,
    beta: f64,
    w: &Vector6<f64>,
    sol: &LqSolution,
) -> KktResiduals {
    let a = &sol.action;
    let lam = &sol.lambda;
    let from_lambda = z_target - lam;
    let from_dynamics = z_t + sys.zdot(z_t, a) * dt;
    KktResiduals {
        constraint: (from_lambda - from_dynamics).amax(),
        action: (a.component_div(w) * beta - sys.b.transpose() * lam * dt).amax(),
        state: (lam - (z_target - from_dynamics)).amax(),
    }
}

/// Linearization of the non-linear model around the previous step:
/// `Ā = I/Δt + J_z`, `B̄ = J_a`, `c̄ = −Ā z_{t−1} − B̄ a_{t−1}`.
pub fn nj_system(
    jz: &Matrix3<f64>,
    ja: &Matrix3x6<f64>,
    z_prev: &Vector3<f64>,
    a_prev: &Vector6<f64>,
    dt: f64,
) -> LinearParams {
    let a = Matrix3::identity() / dt + jz;
    let c = -(a * z_prev) - ja * a_prev;
    LinearParams { a, b: *ja, c }
}

/// Previous state and action for the Jacobian controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrevStep {
    pub z: Vector3<f64>,
    pub a: Vector6<f64>,
}

/// Inverse dynamics of a locally linear model.
pub fn id_ll(
    model: &DynamicsModel,
    z_target: &Vector3<f64>,
    z_t: &Vector3<f64>,
    dt: f64,
    beta: f64,
) -> Result<Vector6<f64>> {
    let sys = model.ll_params(z_t)?;
    let (w, k) = model.control_metric();
    Ok(solve_linear(&sys, z_t, z_target, dt, beta * k, &w)?.action)
}

/// `−W ∂d/∂a` at `a = 0` for `d = ‖z_t + ż(z_t, a)Δt − z_T‖²`: steepest
/// descent under the model's action metric.
pub fn ng_gradient(model: &DynamicsModel, z_target: &Vector3<f64>, z_t: &Vector3<f64>, dt: f64) -> Result<Vector6<f64>> {
    let zero = Vector6::zeros();
    let (_, ja) = model.nl_jacobians(z_t, &zero)?;
    let err = model.integrate(z_t, &zero, dt)? - z_target;
    let (w, _) = model.control_metric();
    Ok(-(ja.transpose() * err).component_mul(&w) * (2.0 * dt))
}

/// Negative-gradient controller: `α` times the descent direction, shortened
/// to `a_max` when longer.
pub fn id_ng(
    model: &DynamicsModel,
    z_target: &Vector3<f64>,
    z_t: &Vector3<f64>,
    dt: f64,
    alpha: f64,
    a_max: f64,
) -> Result<Vector6<f64>> {
    if !(alpha > 0.0) || !(a_max > 0.0) {
        return Err(Error::InvalidArgument("alpha and a_max must be positive".into()));
    }
    let a = ng_gradient(model, z_target, z_t, dt)? * alpha;
    let n = a.norm();
    Ok(if n > a_max { a * (a_max / n) } else { a })
}

/// Jacobian controller; without a previous step the linearization point is
/// `(z_t, 0)`.
pub fn id_nj(
    model: &DynamicsModel,
    z_target: &Vector3<f64>,
    z_t: &Vector3<f64>,
    prev: Option<PrevStep>,
    dt: f64,
    beta: f64,
) -> Result<Vector6<f64>> {
    let prev = prev.unwrap_or(PrevStep {
        z: *z_t,
        a: Vector6::zeros(),
    });
    let (jz, ja) = model.nl_jacobians(&prev.z, &prev.a)?;
    let sys = nj_system(&jz, &ja, &prev.z, &prev.a, dt);
    let (w, k) = model.control_metric();
    Ok(solve_linear(&sys, z_t, z_target, dt, beta * k, &w)?.action)
}

/// Dispatches to the model's own controller.
pub fn inverse(
    model: &DynamicsModel,
    z_target: &Vector3<f64>,
    z_t: &Vector3<f64>,
    prev: Option<PrevStep>,
    dt: f64,
    a_max: f64,
) -> Result<Vector6<f64>> {
    match (model.kind, model.id) {
        (DynKind::LocallyLinear, IdKind::Ll) => id_ll(model, z_target, z_t, dt, model.beta),
        (DynKind::NonLinear, IdKind::Ng) => id_ng(model, z_target, z_t, dt, model.ng_alpha, a_max),
        (DynKind::NonLinear, IdKind::Nj) => id_nj(model, z_target, z_t, prev, dt, model.beta),
        (k, i) => Err(Error::Config(format!("inverse dynamics `{i}` does not apply to `{k}`"))),
    }
}
