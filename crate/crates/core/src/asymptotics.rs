//! Hessian, influence function and asymptotic covariance of the scatter and
//! location-scatter functionals.
//!
//! Derivatives are taken in `C = A^{-1}`. The score of a point is
//! `G(y, A) = -A/2 + (nu + d) y y' / (2 (nu + y'Cy))` and the mean score
//! vanishes at `A = A_nu(Q)`. On half-vectorized coordinates the Hessian
//! matrix `M` realizes
//!
//! ```text
//! v(D)' M v(D) = ‖A^{1/2} D A^{1/2}‖_F^2 - (nu + d) ∫ (y'Dy)^2 / (nu + y'Cy)^2 dQ,
//! ```
//!
//! the bracket whose half is the second-order term of the objective. The
//! derivative of the mean score in `C` is `M / 2`, hence
//! `IF_C(y) = -2 M^{-1} v(G(y))` and `IF_A(y) = -A IF_C(y) A`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::lift;
use crate::error::{Error, Result};
use crate::locscatter::solve_locscatter;
use crate::sample::EmpiricalSample;
use crate::scatter::{solve_scatter, ScatterConfig};
use crate::symspace::{
    extract, numerical_rank_scaled, sym_basis, sym_index_pairs, sym_to_vec, sym_vec_len, vec_to_sym, SpdMatrix, SymMatrix,
    SymVec,
};

/// Relative singular-value cutoff for numerical rank.
pub const RANK_TOL: f64 = 1e-8;

/// `-A/2 + (nu + d) y y' / (2 (nu + y'A^{-1}y))`.
pub fn score(y: &[f64], a: &SpdMatrix, nu: f64) -> SymMatrix {
    let d = a.dim();
    let s = a.inv_quad(y);
    let c = (nu + d as f64) / (2.0 * (nu + s));
    let m = DMatrix::from_fn(d, d, |i, j| c * y[i] * y[j] - 0.5 * a.get(i, j));
    SymMatrix::symmetrized(m)
}

/// `∫ G(y, A) dQ(y)`.
pub fn mean_score(q: &EmpiricalSample, a: &SpdMatrix, nu: f64) -> SymMatrix {
    let d = q.dim();
    let mut m = DMatrix::zeros(d, d);
    for (y, w) in q.iter() {
        m += score(y, a, nu).as_matrix() * w;
    }
    SymMatrix::symmetrized(m)
}

#[derive(Clone, Debug, Serialize)]
pub struct HessianMap {
    pub d: usize,
    pub matrix: SymMatrix,
    pub min_eigenvalue: f64,
}

impl HessianMap {
    /// `M v(D)` mapped back to a symmetric matrix.
    pub fn apply(&self, delta: &SymMatrix) -> SymMatrix {
        let v = sym_to_vec(delta).as_dvector();
        let out = self.matrix.as_matrix() * v;
        vec_to_sym(&SymVec::new(self.d, out.as_slice().to_vec()).expect("length")).expect("length")
    }

    /// `v(D)' M v(D) / 2`.
    pub fn quadratic_form(&self, delta: &SymMatrix) -> f64 {
        let v = sym_to_vec(delta).as_dvector();
        0.5 * v.dot(&(self.matrix.as_matrix() * &v))
    }

    /// Solves `M x = rhs` through a Cholesky factorization, falling back to LU.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.matrix.as_matrix().clone();
        if let Some(ch) = m.clone().cholesky() {
            return Ok(ch.solve(rhs));
        }
        m.lu()
            .solve(rhs)
            .ok_or_else(|| Error::NumericalBreakdown("Hessian is singular".into()))
    }
}

/// Hessian matrix of the scatter objective in `C = A^{-1}` at `A`.
pub fn hessian(q: &EmpiricalSample, a: &SpdMatrix, nu: f64) -> HessianMap {
    let d = a.dim();
    let basis = sym_basis(d);
    let k = basis.len();
    let am = a.as_matrix();
    let ae: Vec<DMatrix<f64>> = basis.iter().map(|e| am * e.as_matrix()).collect();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            m[(i, j)] = (&ae[i] * &ae[j]).trace();
        }
    }
    let c = nu + d as f64;
    let mut quad = vec![0.0; k];
    for (y, w) in q.iter() {
        let s = a.inv_quad(y);
        let f = c * w / ((nu + s) * (nu + s));
        for (qa, e) in quad.iter_mut().zip(&basis) {
            *qa = e.quad(y);
        }
        for i in 0..k {
            for j in 0..=i {
                m[(i, j)] -= f * quad[i] * quad[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            m[(j, i)] = m[(i, j)];
        }
    }
    let matrix = SymMatrix::symmetrized(m);
    let min_eigenvalue = matrix.eigenvalues().first().copied().unwrap_or(f64::NAN);
    HessianMap { d, matrix, min_eigenvalue }
}

/// Matrix of `D -> M D M'` on half-vectorized coordinates.
pub fn congruence_jacobian(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    let basis = sym_basis(d);
    let k = basis.len();
    let mut j = DMatrix::zeros(k, k);
    for (b, e) in basis.iter().enumerate() {
        let img = sym_to_vec(&e.congruence(m));
        j.set_column(b, &img.as_dvector());
    }
    j
}

/// Influence function of `A_nu` at a fixed `Q`.
#[derive(Clone, Debug)]
pub struct Influence {
    pub a: SpdMatrix,
    pub hessian: HessianMap,
    pub nu: f64,
}

impl Influence {
    /// Solves `A_nu(Q)` (with the domain check) and prepares the Hessian.
    pub fn new(q: &EmpiricalSample, cfg: &ScatterConfig) -> Result<Self> {
        let a = solve_scatter(q, cfg)?.a;
        Ok(Self::at(q, a, cfg.nu))
    }

    /// Uses a known `A_nu(Q)`.
    pub fn at(q: &EmpiricalSample, a: SpdMatrix, nu: f64) -> Self {
        let hessian = hessian(q, &a, nu);
        Self { a, hessian, nu }
    }

    /// `IF_C(y) = -2 M^{-1} v(G(y))` in half-vectorized coordinates.
    pub fn of_inverse(&self, y: &[f64]) -> Result<DVector<f64>> {
        let g = sym_to_vec(&score(y, &self.a, self.nu)).as_dvector();
        Ok(self.hessian.solve(&g)? * -2.0)
    }

    /// `IF_A(y) = -A IF_C(y) A`.
    pub fn eval(&self, y: &[f64]) -> Result<SymMatrix> {
        let ic = self.of_inverse(y)?;
        let ic = vec_to_sym(&SymVec::new(self.hessian.d, ic.as_slice().to_vec())?)?;
        Ok(ic.congruence(self.a.as_matrix()).scale(-1.0))
    }
}

/// `IF_A(y)` for `A_nu(Q)`, solving the functional first.
pub fn influence(y: &[f64], q: &EmpiricalSample, cfg: &ScatterConfig) -> Result<SymMatrix> {
    Influence::new(q, cfg)?.eval(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    /// Half-vectorized `A`: diagonal first, off-diagonals scaled by `sqrt(2)`.
    ScatterA,
    /// `(mu_1, ..., mu_d)` followed by half-vectorized `Sigma`.
    LocscatterMuSigma,
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticCov {
    /// Covariance of the normal limit of `sqrt(n) (estimate - functional)`.
    pub s: SymMatrix,
    pub rank: usize,
    pub parametrization: Parametrization,
    pub labels: Vec<String>,
    pub min_eigenvalue: f64,
    /// Rank of the location block (location-scatter only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_rank: Option<usize>,
}

fn sym_labels(name: &str, d: usize) -> Vec<String> {
    sym_index_pairs(d).into_iter().map(|(i, j)| format!("{name}[{i},{j}]")).collect()
}

fn weighted_outer_sum(rows: impl Iterator<Item = (DVector<f64>, f64)>, k: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(k, k);
    for (v, w) in rows {
        s.ger(w, &v, &v, 1.0);
    }
    s
}

fn scatter_cov_from(inf: &Influence, q: &EmpiricalSample) -> Result<DMatrix<f64>> {
    let k = sym_vec_len(q.dim());
    let rows = q
        .iter()
        .map(|(y, w)| inf.eval(y).map(|m| (sym_to_vec(&m).as_dvector(), w)))
        .collect::<Result<Vec<_>>>()?;
    Ok(weighted_outer_sum(rows.into_iter(), k))
}

// `reference` is `‖A‖_F^2`; covariances negligible against it have rank zero.
fn finish(
    s: DMatrix<f64>,
    reference: f64,
    parametrization: Parametrization,
    labels: Vec<String>,
    mu_rank: Option<usize>,
) -> AsymptoticCov {
    let rank = numerical_rank_scaled(&s, RANK_TOL, reference);
    let s = SymMatrix::symmetrized(s);
    let min_eigenvalue = s.eigenvalues().first().copied().unwrap_or(f64::NAN);
    AsymptoticCov { s, rank, parametrization, labels, min_eigenvalue, mu_rank }
}

/// `S = Cov_Q[v(IF_A(y))]` at `A = A_nu(Q)`.
pub fn asymptotic_cov_scatter(q: &EmpiricalSample, cfg: &ScatterConfig) -> Result<AsymptoticCov> {
    let (merged, _) = q.merged();
    let inf = Influence::new(&merged, cfg)?;
    let s = scatter_cov_from(&inf, &merged)?;
    let reference = inf.a.as_matrix().norm_squared();
    Ok(finish(s, reference, Parametrization::ScatterA, sym_labels("A", q.dim()), None))
}

/// Jacobian of `A -> (mu, v(Sigma))` for `A = gamma [[Sigma + mu mu', mu], [mu', 1]]`
/// with respect to half-vectorized `A`.
pub fn extract_jacobian(a: &SymMatrix) -> Result<DMatrix<f64>> {
    let parts = extract(a)?;
    let n = a.dim();
    let d = n - 1;
    let (g, mu) = (parts.gamma, &parts.mu);
    let basis = sym_basis(n);
    let mut j = DMatrix::zeros(d + sym_vec_len(d), basis.len());
    for (b, e) in basis.iter().enumerate() {
        let dg = e.get(d, d);
        let dmu: Vec<f64> = (0..d).map(|i| (e.get(i, d) - mu[i] * dg) / g).collect();
        let dsigma = DMatrix::from_fn(d, d, |i, k| {
            e.get(i, k) / g - a.get(i, k) * dg / (g * g) - dmu[i] * mu[k] - mu[i] * dmu[k]
        });
        let col: Vec<f64> = dmu
            .iter()
            .copied()
            .chain(sym_to_vec(&SymMatrix::symmetrized(dsigma)).coords)
            .collect();
        j.set_column(b, &DVector::from_vec(col));
    }
    Ok(j)
}

/// Asymptotic covariance of `(mu_nu, Sigma_nu)`, pushed through the
/// extraction map from the lifted scatter problem.
pub fn asymptotic_cov_locscatter(p: &EmpiricalSample, cfg: &ScatterConfig) -> Result<AsymptoticCov> {
    let (merged, _) = p.merged();
    let d = p.dim();
    let est = solve_locscatter(&merged, cfg)?;
    let lifted = lift(&merged);
    let inf = Influence::at(&lifted, est.scatter_diag.a.clone(), cfg.nu - 1.0);
    let s_a = scatter_cov_from(&inf, &lifted)?;
    let j = extract_jacobian(inf.a.sym())?;
    let s = &j * s_a * j.transpose();
    let reference = est.sigma.as_matrix().norm_squared();
    let mu_rank = numerical_rank_scaled(&s.view((0, 0), (d, d)).into_owned(), RANK_TOL, reference);
    let labels = (0..d).map(|i| format!("mu[{i}]")).chain(sym_labels("Sigma", d)).collect();
    Ok(finish(s, reference, Parametrization::LocscatterMuSigma, labels, Some(mu_rank)))
}
