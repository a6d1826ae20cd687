//! Weighted empirical laws on R^d.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// `n` weighted points in R^d, weights nonnegative and summing to one.
///
/// Points are stored row-major in a flat buffer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalSample {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalSample {
    /// Builds a sample from flat row-major coordinates. Weights default to
    /// `1/n` and are otherwise normalized to sum to one.
    pub fn new(dim: usize, points: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSample("dimension must be positive".into()));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidSample(format!(
                "{} coordinates do not form points of dimension {dim}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidSample(format!("non-finite coordinate in point {}", i / dim)));
        }
        let n = points.len() / dim;
        let weights = match weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: w.len() });
                }
                if let Some(i) = w.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::InvalidSample(format!("invalid weight {} at point {i}", w[i])));
                }
                let total: f64 = w.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::InvalidSample("weights sum to zero".into()));
                }
                w.into_iter().map(|x| x / total).collect()
            }
        };
        Ok(Self { dim, points, weights })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        Self::from_weighted(points, None)
    }

    pub fn from_weighted(points: &[Vec<f64>], weights: Option<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
        }
        Self::new(dim, points.concat(), weights)
    }

    /// One-dimensional sample from values and optional weights.
    pub fn from_values(values: &[f64], weights: Option<Vec<f64>>) -> Result<Self> {
        Self::new(1, values.to_vec(), weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// Largest Euclidean norm over the points.
    pub fn scale(&self) -> f64 {
        self.points
            .chunks_exact(self.dim)
            .map(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Merges coincident points (exact coordinate equality, with `-0.0`
    /// identified with `0.0`) and drops zero weights. The returned index map
    /// gives, for each merged point, the first original index carrying it.
    pub fn merged(&self) -> (EmpiricalSample, Vec<usize>) {
        let mut groups: BTreeMap<Vec<u64>, (usize, f64)> = BTreeMap::new();
        for (i, (p, w)) in self.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let key: Vec<u64> = p.iter().map(|x| (x + 0.0).to_bits()).collect();
            groups
                .entry(key)
                .and_modify(|e| e.1 += w)
                .or_insert((i, w));
        }
        let mut by_first: Vec<(usize, f64)> = groups.into_values().collect();
        by_first.sort_by_key(|e| e.0);
        let mut points = Vec::with_capacity(by_first.len() * self.dim);
        let mut weights = Vec::with_capacity(by_first.len());
        let mut index = Vec::with_capacity(by_first.len());
        for (i, w) in by_first {
            points.extend(self.point(i).iter().map(|x| x + 0.0));
            weights.push(w);
            index.push(i);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        (EmpiricalSample { dim: self.dim, points, weights }, index)
    }

    /// Image under `y -> M y + v`.
    pub fn map_affine(&self, m: &DMatrix<f64>, v: &[f64]) -> Result<EmpiricalSample> {
        if m.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: m.ncols() });
        }
        if v.len() != m.nrows() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: v.len() });
        }
        let out_dim = m.nrows();
        let mut points = Vec::with_capacity(self.len() * out_dim);
        for p in self.points.chunks_exact(self.dim) {
            for i in 0..out_dim {
                let mut s = v[i];
                for (j, x) in p.iter().enumerate() {
                    s += m[(i, j)] * x;
                }
                points.push(s);
            }
        }
        EmpiricalSample::new(out_dim, points, Some(self.weights.clone()))
    }

    pub fn map_linear(&self, m: &DMatrix<f64>) -> Result<EmpiricalSample> {
        self.map_affine(m, &vec![0.0; m.nrows()])
    }

    /// `(1 - eps) * self + eps * delta_y`.
    pub fn contaminate(&self, eps: f64, y: &[f64]) -> Result<EmpiricalSample> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidParameter(format!("contamination eps {eps} not in [0,1]")));
        }
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: y.len() });
        }
        let mut points = self.points.clone();
        points.extend_from_slice(y);
        let mut weights: Vec<f64> = self.weights.iter().map(|w| w * (1.0 - eps)).collect();
        weights.push(eps);
        EmpiricalSample::new(self.dim, points, Some(weights))
    }

    /// Weighted mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.iter() {
            for (mi, x) in m.iter_mut().zip(p) {
                *mi += w * x;
            }
        }
        m
    }

    /// Weighted second moment `sum w y y'` (uncentered).
    pub fn second_moment(&self) -> DMatrix<f64> {
        let d = self.dim;
        let mut m = DMatrix::zeros(d, d);
        for (p, w) in self.iter() {
            for i in 0..d {
                for j in 0..=i {
                    m[(i, j)] += w * p[i] * p[j];
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
}
