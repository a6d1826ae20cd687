//! Pure-scatter t_nu functional `A_nu(Q)`.
//!
//! The functional minimizes
//!
//! ```text
//! Qh(A) = 1/2 log det A + ∫ rho(y'A^{-1}y) - rho(y'y) dQ(y),
//! rho(s) = (nu + d)/2 * log((nu + s)/nu),
//! ```
//!
//! and its unique critical point solves `A = ∫ u(y'A^{-1}y) y y' dQ(y)`
//! with `u(s) = (nu + d)/(nu + s)`. The solver iterates that map directly;
//! each step is a majorize-minimize step, so the objective never increases.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::{check_scatter_domain_auto, DomainReport};
use crate::error::{Error, Result};
use crate::sample::EmpiricalSample;
use crate::symspace::{SpdMatrix, SymMatrix};

/// Relative slack allowed on the per-step objective decrease.
pub const OBJECTIVE_SLACK: f64 = 1e-12;

/// `u_{nu,d}(s) = (nu + d)/(nu + s)`.
pub fn weight_u(s: f64, nu: f64, d: usize) -> f64 {
    (nu + d as f64) / (nu + s)
}

/// `rho_{nu,d}(s) = (nu + d)/2 * log(1 + s/nu)`.
pub fn rho(s: f64, nu: f64, d: usize) -> f64 {
    0.5 * (nu + d as f64) * (s / nu).ln_1p()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatterInit {
    Identity,
    #[default]
    SecondMoment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterConfig {
    pub nu: f64,
    pub tol_grad: f64,
    pub tol_step: f64,
    pub max_iter: usize,
    pub init: ScatterInit,
}

impl ScatterConfig {
    pub fn new(nu: f64) -> Self {
        Self { nu, tol_grad: 1e-10, tol_step: 1e-12, max_iter: 500, init: ScatterInit::default() }
    }

    pub fn with_tol_grad(mut self, tol: f64) -> Self {
        self.tol_grad = tol;
        self
    }

    pub fn with_tol_step(mut self, tol: f64) -> Self {
        self.tol_step = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_init(mut self, init: ScatterInit) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(Error::InvalidParameter(format!("nu must be positive and finite, got {}", self.nu)));
        }
        if !(self.tol_grad > 0.0) || !(self.tol_step > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Gradient,
    Step,
    MaxIter,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScatterResult {
    pub a: SpdMatrix,
    pub nu: f64,
    pub iterations: usize,
    /// `Qh(A)` at the returned iterate.
    pub objective: f64,
    /// Frobenius norm of the gradient in `A` at the returned iterate.
    pub grad_norm: f64,
    pub converged: bool,
    pub stop: StopReason,
    pub objective_trace: Vec<f64>,
    /// Domain report behind the solve, when the solver ran the check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainReport>,
}

/// `Qh(A)`; zero at `A = I`.
pub fn objective(q: &EmpiricalSample, a: &SpdMatrix, nu: f64) -> f64 {
    let d = q.dim();
    let mut buf = vec![0.0; d];
    let c = 0.5 * (nu + d as f64);
    let mut integral = 0.0;
    for (y, w) in q.iter() {
        let s1 = a.inv_quad_buf(y, &mut buf);
        let s0: f64 = y.iter().map(|x| x * x).sum();
        integral += w * c * ((s1 / nu).ln_1p() - (s0 / nu).ln_1p());
    }
    0.5 * a.log_det() + integral
}

/// `∫ u(y'B^{-1}y) y y' dQ(y)`.
pub fn fixed_point_map(q: &EmpiricalSample, b: &SpdMatrix, nu: f64) -> DMatrix<f64> {
    let d = q.dim();
    let mut buf = vec![0.0; d];
    let mut m = DMatrix::zeros(d, d);
    for (y, w) in q.iter() {
        let s = b.inv_quad_buf(y, &mut buf);
        let c = w * weight_u(s, nu, d);
        for i in 0..d {
            let ci = c * y[i];
            for j in 0..=i {
                m[(i, j)] += ci * y[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            m[(j, i)] = m[(i, j)];
        }
    }
    m
}

fn gradient_from_map(b: &SpdMatrix, mapped: &DMatrix<f64>) -> SymMatrix {
    // 1/2 (B^{-1} - B^{-1} T(B) B^{-1}) = 1/2 B^{-1} (B - T(B)) B^{-1}
    let binv = b.inverse_matrix();
    let inner = b.as_matrix() - mapped;
    SymMatrix::symmetrized(binv.as_matrix() * inner * binv.as_matrix() * 0.5)
}

/// Gradient of `Qh` with respect to `A`:
/// `1/2 (A^{-1} - ∫ u(y'A^{-1}y) A^{-1} y y' A^{-1} dQ)`.
pub fn gradient(q: &EmpiricalSample, a: &SpdMatrix, nu: f64) -> SymMatrix {
    gradient_from_map(a, &fixed_point_map(q, a, nu))
}

fn initial(q: &EmpiricalSample, init: ScatterInit) -> SpdMatrix {
    let d = q.dim();
    match init {
        ScatterInit::Identity => SpdMatrix::identity(d),
        ScatterInit::SecondMoment => {
            let m = q.second_moment();
            let eps = 1e-8 * m.trace();
            let m = m + DMatrix::identity(d, d) * eps;
            SpdMatrix::new(SymMatrix::symmetrized(m)).unwrap_or_else(|_| SpdMatrix::identity(d))
        }
    }
}

/// Solves for `A_nu(Q)` after confirming `Q` lies in `U_{d, nu+d}`.
pub fn solve_scatter(q: &EmpiricalSample, cfg: &ScatterConfig) -> Result<ScatterResult> {
    cfg.validate()?;
    let report = check_scatter_domain_auto(q, cfg.nu + q.dim() as f64)?;
    if !report.member {
        return Err(Error::DomainViolation(Box::new(report)));
    }
    let (merged, _) = q.merged();
    let start = initial(&merged, cfg.init);
    let mut res = iterate(&merged, cfg, start)?;
    res.domain = Some(report);
    Ok(res)
}

/// Runs the fixed-point iteration from `start` without a domain check.
///
/// Outside the domain the iterates drift towards the boundary of P_d and the
/// call ends in `MaxIterExceeded` or `NumericalBreakdown`.
pub fn solve_scatter_from(q: &EmpiricalSample, cfg: &ScatterConfig, start: SpdMatrix) -> Result<ScatterResult> {
    cfg.validate()?;
    if start.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: q.dim(), found: start.dim() });
    }
    let (merged, _) = q.merged();
    iterate(&merged, cfg, start)
}

pub(crate) fn solve_scatter_unchecked(q: &EmpiricalSample, cfg: &ScatterConfig) -> Result<ScatterResult> {
    cfg.validate()?;
    let (merged, _) = q.merged();
    let start = initial(&merged, cfg.init);
    iterate(&merged, cfg, start)
}

fn iterate(q: &EmpiricalSample, cfg: &ScatterConfig, start: SpdMatrix) -> Result<ScatterResult> {
    let nu = cfg.nu;
    let mut b = start;
    let mut obj = objective(q, &b, nu);
    let mut trace = vec![obj];
    let mut mapped = fixed_point_map(q, &b, nu);
    let mut grad_norm = gradient_from_map(&b, &mapped).frobenius_norm();

    let finish = |a: SpdMatrix, iterations, objective, grad_norm: f64, stop, trace| ScatterResult {
        a,
        nu,
        iterations,
        objective,
        grad_norm,
        converged: grad_norm <= cfg.tol_grad,
        stop,
        objective_trace: trace,
        domain: None,
    };

    for k in 0..cfg.max_iter {
        if grad_norm <= cfg.tol_grad {
            return Ok(finish(b, k, obj, grad_norm, StopReason::Gradient, trace));
        }
        let next = SpdMatrix::new(SymMatrix::symmetrized(mapped.clone()))
            .map_err(|_| Error::NumericalBreakdown(format!("iterate {} left the positive-definite cone", k + 1)))?;
        let step = (next.as_matrix() - b.as_matrix()).norm() / b.as_matrix().norm();
        let next_obj = objective(q, &next, nu);
        if !next_obj.is_finite() {
            return Err(Error::NumericalBreakdown(format!("objective is not finite at iterate {}", k + 1)));
        }
        if next_obj > obj + OBJECTIVE_SLACK * obj.abs().max(1.0) {
            return Err(Error::ObjectiveIncrease { iteration: k + 1, before: obj, after: next_obj });
        }
        b = next;
        obj = next_obj;
        trace.push(obj);
        mapped = fixed_point_map(q, &b, nu);
        grad_norm = gradient_from_map(&b, &mapped).frobenius_norm();
        if grad_norm <= cfg.tol_grad {
            return Ok(finish(b, k + 1, obj, grad_norm, StopReason::Gradient, trace));
        }
        if step <= cfg.tol_step {
            return Ok(finish(b, k + 1, obj, grad_norm, StopReason::Step, trace));
        }
    }
    let best = finish(b, cfg.max_iter, obj, grad_norm, StopReason::MaxIter, trace);
    Err(Error::MaxIterExceeded(Box::new(best)))
}

/// `‖A - ∫ u(y'A^{-1}y) y y' dQ‖_F`.
pub fn fixed_point_residual(q: &EmpiricalSample, a: &SpdMatrix, nu: f64) -> f64 {
    (a.as_matrix() - fixed_point_map(q, a, nu)).norm()
}
