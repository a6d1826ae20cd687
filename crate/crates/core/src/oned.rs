//! One-dimensional location-scale t_nu functional, extended to laws with a
//! big atom.
//!
//! For fixed `mu` the scale `sigma(mu)` solves
//! `F(mu, sigma) = ∫ (x - mu)^2 / (nu sigma^2 + (x - mu)^2) dQ = 1/(nu + 1)`,
//! and the location minimizes the profile `mu -> Qh(mu, sigma(mu))`. When a
//! single atom carries mass at least `nu/(nu + 1)` the functional is the
//! atom itself with zero scale.

use serde::Serialize;

use crate::domain::max_atom;
use crate::error::{Error, Result};
use crate::sample::EmpiricalSample;
use crate::scatter::rho;

/// Slack on the big-atom comparison `mass >= nu/(nu + 1)`.
pub const ATOM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OneDEstimate {
    pub mu: f64,
    pub sigma: f64,
    /// True when a big atom forces `sigma = 0`.
    pub boundary: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atom: Option<Atom>,
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 1.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::NuOutOfRange { nu })
    }
}

fn require_1d(q: &EmpiricalSample) -> Result<()> {
    if q.dim() == 1 {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: 1, found: q.dim() })
    }
}

fn big_atom_threshold(nu: f64) -> f64 {
    nu / (nu + 1.0)
}

/// `F(mu, sigma)`.
pub fn scale_equation(q: &EmpiricalSample, mu: f64, sigma: f64, nu: f64) -> f64 {
    let v = nu * sigma * sigma;
    q.iter()
        .map(|(x, w)| {
            let r2 = (x[0] - mu).powi(2);
            if r2 == 0.0 {
                0.0
            } else {
                w * r2 / (v + r2)
            }
        })
        .sum()
}

/// Unique `sigma > 0` with `F(mu, sigma) = 1/(nu + 1)`.
pub fn sigma_of_mu(q: &EmpiricalSample, mu: f64, nu: f64) -> Result<f64> {
    require_1d(q)?;
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
    }
    let target = 1.0 / (nu + 1.0);
    let at_mu: f64 = q.iter().filter(|(x, _)| x[0] == mu).map(|(_, w)| w).sum();
    if at_mu >= big_atom_threshold(nu) - ATOM_TOL {
        return Err(Error::NoPositiveSolution { mu, mass: at_mu });
    }
    let spread = q.iter().map(|(x, _)| (x[0] - mu).abs()).fold(0.0, f64::max);
    let mut hi = spread.max(f64::MIN_POSITIVE);
    while scale_equation(q, mu, hi, nu) > target {
        hi *= 2.0;
    }
    let mut lo = hi;
    while scale_equation(q, mu, lo, nu) < target {
        lo *= 0.5;
        if lo == 0.0 {
            return Err(Error::NumericalBreakdown(format!("scale at mu = {mu} underflows")));
        }
    }
    // F is strictly decreasing in sigma: lo gives F >= target, hi gives F <= target
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if scale_equation(q, mu, mid, nu) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (scale_equation(q, mu, lo, nu) - target, scale_equation(q, mu, hi, nu) - target);
    Ok(if flo.abs() <= fhi.abs() { lo } else { hi })
}

/// `Qh(mu, sigma(mu)) = log sigma(mu) + ∫ rho((x - mu)^2/sigma^2) - rho(x^2) dQ`.
pub fn profile_objective(q: &EmpiricalSample, mu: f64, nu: f64) -> Result<f64> {
    let sigma = sigma_of_mu(q, mu, nu)?;
    let integral: f64 =
        q.iter().map(|(x, w)| w * (rho(((x[0] - mu) / sigma).powi(2), nu, 1) - rho(x[0] * x[0], nu, 1))).sum();
    Ok(sigma.ln() + integral)
}

/// Derivative of the profile,
/// `(nu + 1) ∫ (mu - x) / ((x - mu)^2 + nu sigma(mu)^2) dQ`.
pub fn profile_derivative(q: &EmpiricalSample, mu: f64, nu: f64) -> Result<f64> {
    let sigma = sigma_of_mu(q, mu, nu)?;
    Ok((nu + 1.0) * profile_sum(q, mu, sigma, nu))
}

fn profile_sum(q: &EmpiricalSample, mu: f64, sigma: f64, nu: f64) -> f64 {
    let v = nu * sigma * sigma;
    q.iter().map(|(x, w)| w * (mu - x[0]) / ((x[0] - mu).powi(2) + v)).sum()
}

/// The extended functional `(mu_nu(Q), sigma_nu(Q))` for `nu > 1`.
pub fn solve_oned(q: &EmpiricalSample, nu: f64) -> Result<OneDEstimate> {
    check_nu(nu)?;
    require_1d(q)?;
    let (q, _) = q.merged();
    let (loc, mass) = max_atom(&q);
    let atom = Atom { location: loc[0], mass };
    if mass >= big_atom_threshold(nu) - ATOM_TOL {
        return Ok(OneDEstimate { mu: atom.location, sigma: 0.0, boundary: true, atom: Some(atom) });
    }
    let (mut lo, mut hi) = q
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, _)| (a.min(x[0]), b.max(x[0])));
    // the profile slope is negative below the data and positive above it,
    // with a single sign change in between
    let slope = |mu: f64| sigma_of_mu(&q, mu, nu).map(|s| profile_sum(&q, mu, s, nu));
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = if slope(lo)?.abs() <= slope(hi)?.abs() { lo } else { hi };
    let sigma = sigma_of_mu(&q, mu, nu)?;
    Ok(OneDEstimate { mu, sigma, boundary: false, atom: None })
}

/// Closed form for `(1 - p) delta_a + p delta_b`.
pub fn two_point_closed_form(a: f64, b: f64, p: f64, nu: f64) -> Result<OneDEstimate> {
    check_nu(nu)?;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParameter(format!("need finite a < b, got a = {a}, b = {b}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p = {p} not in [0, 1]")));
    }
    let q = 1.0 - p;
    let thr = big_atom_threshold(nu);
    if p >= thr - ATOM_TOL {
        return Ok(OneDEstimate { mu: b, sigma: 0.0, boundary: true, atom: Some(Atom { location: b, mass: p }) });
    }
    if q >= thr - ATOM_TOL {
        return Ok(OneDEstimate { mu: a, sigma: 0.0, boundary: true, atom: Some(Atom { location: a, mass: q }) });
    }
    let mu_p = (nu * p - q) / (nu - 1.0);
    let sigma2_p = (nu * nu * p * q - nu * (p * p + q * q) + p * q) / ((nu - 1.0) * (nu - 1.0));
    Ok(OneDEstimate {
        mu: a + (b - a) * mu_p,
        sigma: (b - a) * sigma2_p.max(0.0).sqrt(),
        boundary: false,
        atom: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatePoint {
    pub eps: f64,
    pub sigma: f64,
    /// `sigma / sqrt(eps/(nu - 1))`; absent for `eps <= 0`.
    pub ratio: Option<f64>,
}

/// `sigma_nu(Q_eps)` for `Q_eps = (1 - p_eps) delta_0 + p_eps delta_1` with
/// `p_eps = (nu - eps)/(nu + 1)`. Nonpositive `eps` lands on the big-atom side.
pub fn boundary_rate_probe(nu: f64, eps_list: &[f64]) -> Result<Vec<RatePoint>> {
    check_nu(nu)?;
    eps_list
        .iter()
        .map(|&eps| {
            let p = (nu - eps) / (nu + 1.0);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("eps = {eps} gives mass {p} outside [0, 1]")));
            }
            let q = EmpiricalSample::from_values(&[0.0, 1.0], Some(vec![1.0 - p, p]))?;
            let sigma = solve_oned(&q, nu)?.sigma;
            let ratio = (eps > 0.0).then(|| sigma / (eps / (nu - 1.0)).sqrt());
            Ok(RatePoint { eps, sigma, ratio })
        })
        .collect()
}
