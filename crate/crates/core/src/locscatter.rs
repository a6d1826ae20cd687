//! Location-scatter t_nu functional `(mu_nu, Sigma_nu)` for `nu > 1`.
//!
//! Each point `y` is lifted to `z = (y, 1)` and the pure-scatter problem is
//! solved in dimension `d + 1` with `nu' = nu - 1`. The solution has the form
//! `gamma * [[Sigma + mu mu', mu], [mu', 1]]` with `gamma = 1`, and
//! `z'A^{-1}z = 1 + (y - mu)'Sigma^{-1}(y - mu)`, so the lifted weights are
//! exactly the location-scatter weights `u_{nu,d}`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::domain::{check_locscat_domain_auto, lift};
use crate::error::{Error, Result};
use crate::sample::EmpiricalSample;
use crate::scatter::{rho, solve_scatter_unchecked, weight_u, ScatterConfig, ScatterResult};
use crate::symspace::{extract, SpdMatrix, SymMatrix};

/// Allowed deviation of `gamma` and of `∫u dP` from one.
pub const EMBEDDING_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct LocScatEstimate {
    pub mu: Vec<f64>,
    pub sigma: SpdMatrix,
    pub nu: f64,
    /// Corner entry of the lifted solution.
    pub gamma_check: f64,
    /// `∫ u_{nu,d}((y - mu)'Sigma^{-1}(y - mu)) dP`.
    pub weight_check: f64,
    /// Size of one direct EM step taken from the returned estimate.
    pub em_residual: f64,
    /// Lifted solve converged and both embedding checks are within tolerance.
    pub converged: bool,
    pub scatter_diag: ScatterResult,
}

/// Solves for `(mu_nu, Sigma_nu)` with `nu = cfg.nu`; the remaining fields of
/// `cfg` drive the lifted solve.
pub fn solve_locscatter(p: &EmpiricalSample, cfg: &ScatterConfig) -> Result<LocScatEstimate> {
    let nu = cfg.nu;
    if !(nu > 1.0) || !nu.is_finite() {
        return Err(Error::NuOutOfRange { nu });
    }
    cfg.validate()?;
    let d = p.dim();
    let report = check_locscat_domain_auto(p, nu + d as f64)?;
    if !report.member {
        return Err(Error::DomainViolation(Box::new(report)));
    }
    let (merged, _) = p.merged();
    let lifted_cfg = ScatterConfig { nu: nu - 1.0, ..cfg.clone() };
    let mut diag = solve_scatter_unchecked(&lift(&merged), &lifted_cfg)?;
    diag.domain = Some(report);
    let parts = extract(diag.a.sym())?;
    let weight_check = mean_weight(&merged, &parts.mu, &parts.sigma, nu);
    let (mu1, sigma1) = direct_em_step(&merged, &parts.mu, &parts.sigma, nu)?;
    let em_residual = em_distance(&parts.mu, &parts.sigma, &mu1, &sigma1);
    let converged = diag.converged
        && (parts.gamma - 1.0).abs() <= EMBEDDING_TOL
        && (weight_check - 1.0).abs() <= EMBEDDING_TOL;
    Ok(LocScatEstimate {
        mu: parts.mu,
        sigma: parts.sigma,
        nu,
        gamma_check: parts.gamma,
        weight_check,
        em_residual,
        converged,
        scatter_diag: diag,
    })
}

fn mean_weight(p: &EmpiricalSample, mu: &[f64], sigma: &SpdMatrix, nu: f64) -> f64 {
    let d = p.dim();
    let mut diff = vec![0.0; d];
    let mut buf = vec![0.0; d];
    p.iter()
        .map(|(y, w)| {
            diff.iter_mut().zip(y.iter().zip(mu)).for_each(|(t, (a, b))| *t = a - b);
            w * weight_u(sigma.inv_quad_buf(&diff, &mut buf), nu, d)
        })
        .sum()
}

fn em_distance(mu0: &[f64], s0: &SpdMatrix, mu1: &[f64], s1: &SpdMatrix) -> f64 {
    let dm: f64 = mu0.iter().zip(mu1).map(|(a, b)| (a - b).powi(2)).sum();
    (dm + (s0.as_matrix() - s1.as_matrix()).norm_squared()).sqrt()
}

/// One step of the classical EM iteration for the multivariate t location
/// and scatter.
pub fn direct_em_step(p: &EmpiricalSample, mu: &[f64], sigma: &SpdMatrix, nu: f64) -> Result<(Vec<f64>, SpdMatrix)> {
    let d = p.dim();
    if mu.len() != d || sigma.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: mu.len().max(sigma.dim()) });
    }
    let mut diff = vec![0.0; d];
    let mut buf = vec![0.0; d];
    let weights: Vec<f64> = p
        .iter()
        .map(|(y, w)| {
            diff.iter_mut().zip(y.iter().zip(mu)).for_each(|(t, (a, b))| *t = a - b);
            w * weight_u(sigma.inv_quad_buf(&diff, &mut buf), nu, d)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut mu1 = vec![0.0; d];
    for ((y, _), w) in p.iter().zip(&weights) {
        mu1.iter_mut().zip(y).for_each(|(m, x)| *m += w * x);
    }
    mu1.iter_mut().for_each(|m| *m /= total);
    let mut s = DMatrix::zeros(d, d);
    for ((y, _), w) in p.iter().zip(&weights) {
        for i in 0..d {
            for j in 0..d {
                s[(i, j)] += w * (y[i] - mu1[i]) * (y[j] - mu1[j]);
            }
        }
    }
    let sigma1 = SpdMatrix::new(SymMatrix::symmetrized(s))
        .map_err(|_| Error::Degenerate("EM scatter update is singular".into()))?;
    Ok((mu1, sigma1))
}

/// Iterates [`direct_em_step`] from the weighted mean and covariance until
/// the step size falls below `tol`. Returns the limit and the step count.
pub fn direct_em_solve(p: &EmpiricalSample, nu: f64, tol: f64, max_iter: usize) -> Result<(Vec<f64>, SpdMatrix, usize)> {
    let d = p.dim();
    let mut mu = p.mean();
    let m2 = p.second_moment();
    let cov = DMatrix::from_fn(d, d, |i, j| m2[(i, j)] - mu[i] * mu[j]);
    let mut sigma = SpdMatrix::new(SymMatrix::symmetrized(cov))
        .map_err(|_| Error::Degenerate("sample covariance is singular".into()))?;
    for k in 1..=max_iter {
        let (mu1, sigma1) = direct_em_step(p, &mu, &sigma, nu)?;
        let step = em_distance(&mu, &sigma, &mu1, &sigma1);
        mu = mu1;
        sigma = sigma1;
        if step <= tol {
            return Ok((mu, sigma, k));
        }
    }
    Err(Error::NumericalBreakdown(format!("direct EM did not settle in {max_iter} steps")))
}

/// `1/2 log det Sigma + ∫ rho((y - mu)'Sigma^{-1}(y - mu)) - rho(y'y) dP`
/// with `rho = rho_{nu,d}`; zero at `(0, I)`.
pub fn objective_locscat(p: &EmpiricalSample, mu: &[f64], sigma: &SpdMatrix, nu: f64) -> f64 {
    let d = p.dim();
    let mut diff = vec![0.0; d];
    let mut buf = vec![0.0; d];
    let mut integral = 0.0;
    for (y, w) in p.iter() {
        diff.iter_mut().zip(y.iter().zip(mu)).for_each(|(t, (a, b))| *t = a - b);
        let s = sigma.inv_quad_buf(&diff, &mut buf);
        let s0: f64 = y.iter().map(|x| x * x).sum();
        integral += w * (rho(s, nu, d) - rho(s0, nu, d));
    }
    0.5 * sigma.log_det() + integral
}
