//! Symmetric and positive-definite matrices, half-vectorization, and the
//! block correspondence between `A` in P_{d+1} and location-scatter triples
//! `(Sigma, mu, gamma)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest entrywise asymmetry accepted (and then averaged away) on input.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative pivot floor for the positive-definiteness test.
pub const SPD_PIVOT_TOL: f64 = 1e-12;

/// A real symmetric `d x d` matrix, stored with exactly equal mirrored entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(1.0);
        let asymmetry = (&m - m.transpose()).amax();
        if asymmetry > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(Self::symmetrized(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: r.len() });
            }
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    /// `(m + m') / 2` without any tolerance check.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        Self { m: (m + t) * 0.5 }
    }

    pub fn identity(d: usize) -> Self {
        Self { m: DMatrix::identity(d, d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { m: DMatrix::zeros(d, d) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self { m: DMatrix::from_diagonal(&DVector::from_column_slice(diag)) }
    }

    /// `y y'`.
    pub fn outer(y: &[f64]) -> Self {
        let v = DVector::from_column_slice(y);
        Self { m: &v * v.transpose() }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.m[(i, j)]).collect())
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    /// Spectral norm (largest absolute eigenvalue).
    pub fn operator_norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0_f64, |acc, l| acc.max(l.abs()))
    }

    /// Frobenius inner product `trace(A'B)`.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.m.dot(&other.m)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.m.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        Self { m: &self.m * c }
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        Self { m: &self.m + &other.m }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        Self { m: &self.m - &other.m }
    }

    /// `M S M'` for a (not necessarily square) matrix `M`.
    pub fn congruence(&self, m: &DMatrix<f64>) -> SymMatrix {
        Self::symmetrized(m * &self.m * m.transpose())
    }

    /// `x' S x`.
    pub fn quad(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.m[(i, j)] * x[j];
            }
            s += x[i] * row;
        }
        s
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// A symmetric positive-definite matrix together with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    sym: SymMatrix,
    // lower-triangular factor, row-major, dense d*d
    chol: Vec<f64>,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.sym == other.sym
    }
}

impl SpdMatrix {
    /// Fails if any Cholesky pivot falls below `1e-12 * trace`.
    pub fn new(sym: SymMatrix) -> Result<Self> {
        let d = sym.dim();
        let tr = sym.trace();
        if !(tr > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let floor = SPD_PIVOT_TOL * tr;
        let a = sym.as_matrix();
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if !(diag > floor) {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(Self { sym, chol: l })
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::new(m)?)
    }

    pub fn identity(d: usize) -> Self {
        Self::new(SymMatrix::identity(d)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.sym.dim()
    }

    pub fn sym(&self) -> &SymMatrix {
        &self.sym
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.sym.as_matrix()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sym.get(i, j)
    }

    /// Lower Cholesky factor `L` with `A = L L'`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| if j <= i { self.chol[i * d + j] } else { 0.0 })
    }

    /// Writes `L^{-1} y` into `out`.
    fn forward(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut s = y[i];
            let row = &self.chol[i * d..i * d + i];
            for (k, lk) in row.iter().enumerate() {
                s -= lk * out[k];
            }
            out[i] = s / self.chol[i * d + i];
        }
    }

    /// `y' A^{-1} y`, computed through the Cholesky factor.
    pub fn inv_quad(&self, y: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.dim()];
        self.inv_quad_buf(y, &mut buf)
    }

    /// As [`inv_quad`](Self::inv_quad) with caller-provided scratch of length `d`.
    pub fn inv_quad_buf(&self, y: &[f64], buf: &mut [f64]) -> f64 {
        self.forward(y, buf);
        buf.iter().map(|z| z * z).sum()
    }

    /// `A^{-1} y`.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut z = vec![0.0; d];
        let mut x = vec![0.0; d];
        self.solve_into(y, &mut z, &mut x);
        x
    }

    /// `A^{-1} y` into `x`, using `z` (length `d`) as scratch.
    pub fn solve_into(&self, y: &[f64], z: &mut [f64], x: &mut [f64]) {
        let d = self.dim();
        self.forward(y, z);
        for i in (0..d).rev() {
            let mut s = z[i];
            for k in (i + 1)..d {
                s -= self.chol[k * d + i] * x[k];
            }
            x[i] = s / self.chol[i * d + i];
        }
    }

    pub fn inverse_matrix(&self) -> SymMatrix {
        let d = self.dim();
        let mut inv = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..d {
                inv[(i, j)] = col[i];
            }
        }
        SymMatrix::symmetrized(inv)
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        SpdMatrix::new(self.inverse_matrix())
    }

    pub fn log_det(&self) -> f64 {
        let d = self.dim();
        (0..d).map(|i| self.chol[i * d + i].ln()).sum::<f64>() * 2.0
    }

    pub fn det(&self) -> f64 {
        self.log_det().exp()
    }

    /// Symmetric square root `A^{1/2}`.
    pub fn sqrt(&self) -> SymMatrix {
        self.spectral_map(f64::sqrt)
    }

    /// `A^{-1/2}`.
    pub fn inv_sqrt(&self) -> SymMatrix {
        self.spectral_map(|l| 1.0 / l.sqrt())
    }

    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let eig = SymmetricEigen::new(self.as_matrix().clone());
        let d = self.dim();
        let mut diag = DMatrix::zeros(d, d);
        for i in 0..d {
            diag[(i, i)] = f(eig.eigenvalues[i]);
        }
        let v = &eig.eigenvectors;
        SymMatrix::symmetrized(v * diag * v.transpose())
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.sym.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let sym = SymMatrix::deserialize(d)?;
        SpdMatrix::new(sym).map_err(serde::de::Error::custom)
    }
}

/// `A = gamma * [[Sigma + mu mu', mu], [mu', 1]]` and its parts.
#[derive(Clone, Debug, Serialize)]
pub struct EmbeddedScatter {
    pub a: SpdMatrix,
    pub sigma: SpdMatrix,
    pub mu: Vec<f64>,
    pub gamma: f64,
}

pub fn embed(sigma: &SpdMatrix, mu: &[f64], gamma: f64) -> Result<EmbeddedScatter> {
    let d = sigma.dim();
    if mu.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: mu.len() });
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let mut a = DMatrix::zeros(d + 1, d + 1);
    for i in 0..d {
        for j in 0..d {
            a[(i, j)] = gamma * (sigma.get(i, j) + mu[i] * mu[j]);
        }
        a[(i, d)] = gamma * mu[i];
        a[(d, i)] = gamma * mu[i];
    }
    a[(d, d)] = gamma;
    let a = SpdMatrix::new(SymMatrix::symmetrized(a))?;
    Ok(EmbeddedScatter { a, sigma: sigma.clone(), mu: mu.to_vec(), gamma })
}

/// Inverse of [`embed`]: `gamma = A[d][d]`, `mu = A[..d][d] / gamma`,
/// `Sigma = A[..d][..d] / gamma - mu mu'`.
pub fn extract(a: &SymMatrix) -> Result<EmbeddedScatter> {
    let n = a.dim();
    if n < 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: n });
    }
    let d = n - 1;
    let gamma = a.get(d, d);
    if !(gamma > 0.0) {
        return Err(Error::Degenerate(format!("corner entry {gamma} is not positive")));
    }
    let mu: Vec<f64> = (0..d).map(|i| a.get(i, d) / gamma).collect();
    let sigma = DMatrix::from_fn(d, d, |i, j| a.get(i, j) / gamma - mu[i] * mu[j]);
    let sigma = SpdMatrix::new(SymMatrix::symmetrized(sigma))
        .map_err(|_| Error::Degenerate("extracted scatter block is not positive definite".into()))?;
    let a = SpdMatrix::new(a.clone())
        .map_err(|_| Error::Degenerate("embedding matrix is not positive definite".into()))?;
    Ok(EmbeddedScatter { a, sigma, mu, gamma })
}

/// Coordinate pairs `(i, j)` in half-vectorization order: the diagonal
/// first, then the strict upper triangle row by row.
pub fn sym_index_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..d).map(|i| (i, i)).collect();
    for i in 0..d {
        for j in (i + 1)..d {
            pairs.push((i, j));
        }
    }
    pairs
}

pub fn sym_vec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Half-vectorization of a symmetric matrix with off-diagonal entries scaled
/// by `sqrt(2)`, so the Euclidean inner product matches `trace(A'B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymVec {
    pub d: usize,
    pub coords: Vec<f64>,
}

impl SymVec {
    pub fn new(d: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != sym_vec_len(d) {
            return Err(Error::DimensionMismatch { expected: sym_vec_len(d), found: coords.len() });
        }
        Ok(Self { d, coords })
    }

    pub fn dot(&self, other: &SymVec) -> f64 {
        self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum()
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coords)
    }
}

pub fn sym_to_vec(m: &SymMatrix) -> SymVec {
    let d = m.dim();
    let coords = sym_index_pairs(d)
        .into_iter()
        .map(|(i, j)| if i == j { m.get(i, i) } else { std::f64::consts::SQRT_2 * m.get(i, j) })
        .collect();
    SymVec { d, coords }
}

pub fn vec_to_sym(v: &SymVec) -> Result<SymMatrix> {
    let d = v.d;
    if v.coords.len() != sym_vec_len(d) {
        return Err(Error::DimensionMismatch { expected: sym_vec_len(d), found: v.coords.len() });
    }
    let mut m = DMatrix::zeros(d, d);
    for ((i, j), c) in sym_index_pairs(d).into_iter().zip(&v.coords) {
        if i == j {
            m[(i, i)] = *c;
        } else {
            let x = c / std::f64::consts::SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    Ok(SymMatrix { m })
}

/// Orthonormal basis of S_d matching the half-vectorization coordinates.
pub fn sym_basis(d: usize) -> Vec<SymMatrix> {
    let k = sym_vec_len(d);
    (0..k)
        .map(|a| {
            let mut coords = vec![0.0; k];
            coords[a] = 1.0;
            vec_to_sym(&SymVec { d, coords }).expect("basis length")
        })
        .collect()
}

/// Number of singular values above `rel_tol * largest`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    numerical_rank_scaled(m, rel_tol, 0.0)
}

/// Number of singular values above `rel_tol * max(largest, reference)`.
/// A matrix that is negligible against `reference` has rank zero.
pub fn numerical_rank_scaled(m: &DMatrix<f64>, rel_tol: f64, reference: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().fold(reference.abs(), |a, &b| a.max(b));
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}
