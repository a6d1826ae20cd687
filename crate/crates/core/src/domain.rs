//! Existence domains for the t_nu functionals.
//!
//! A law `Q` on R^d is in `U_{d,a0}` when every linear subspace `H` of
//! dimension `q < d` has `Q(H) < 1 - (d - q)/a0`. A law `P` is in
//! `V_{d,a0}` when the same bound holds for every affine subspace of
//! dimension `q < d`. For empirical laws a violating subspace can always be
//! shrunk to the span of the sample points it contains, so it suffices to
//! enumerate spans of point subsets.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::EmpiricalSample;

/// Relative tolerance for deciding that a point lies in a span.
pub const RANK_TOL: f64 = 1e-9;

/// Masses within this of the threshold count as violations.
pub const THRESHOLD_TOL: f64 = 1e-12;

/// Upper bound on point-in-span tests for the exact enumeration.
pub const EXACT_WORK_LIMIT: f64 = 5e7;

/// Largest ambient dimension handled by the exact enumeration.
pub const EXACT_MAX_DIM: usize = 5;

const RANDOMIZED_SEED: u64 = 0x5eed_d00a;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// `U_{d,a0}`: linear subspaces.
    Scatter,
    /// `V_{d,a0}`: affine subspaces.
    LocationScatter,
}

/// Verdict of a domain check together with the tightest subspace found.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub kind: DomainKind,
    pub member: bool,
    /// False when produced by the randomized search, which can miss violations.
    pub exact: bool,
    pub a0: f64,
    /// Dimension of the subspace with the largest `mass - threshold`.
    /// `None` only for the empty affine set in the location-scatter case.
    pub worst_subspace_dim: Option<usize>,
    pub worst_mass: f64,
    pub threshold: f64,
    /// Indices (into the caller's sample) of points spanning that subspace.
    pub witness_points: Vec<usize>,
}

impl DomainReport {
    pub fn margin(&self) -> f64 {
        self.threshold - self.worst_mass
    }
}

/// `1 - (d - q)/a0`.
pub fn threshold(d: usize, q: usize, a0: f64) -> f64 {
    1.0 - (d - q) as f64 / a0
}

fn is_violation(mass: f64, thr: f64) -> bool {
    mass >= thr - THRESHOLD_TOL
}

/// Embeds each point `y` as `(y, 1)` in R^{d+1}.
pub fn lift(p: &EmpiricalSample) -> EmpiricalSample {
    let d = p.dim();
    let mut coords = Vec::with_capacity(p.len() * (d + 1));
    for (y, _) in p.iter() {
        coords.extend_from_slice(y);
        coords.push(1.0);
    }
    EmpiricalSample::new(d + 1, coords, Some(p.weights().to_vec())).expect("lift preserves validity")
}

/// Heaviest atom after merging coincident points; ties go to the
/// lexicographically smallest location.
pub fn max_atom(p: &EmpiricalSample) -> (Vec<f64>, f64) {
    let (m, _) = p.merged();
    let mut best: Option<(usize, f64)> = None;
    for i in 0..m.len() {
        let w = m.weight(i);
        best = match best {
            None => Some((i, w)),
            Some((j, bw)) => {
                if w > bw || (w == bw && lex_less(m.point(i), m.point(j))) {
                    Some((i, w))
                } else {
                    Some((j, bw))
                }
            }
        };
    }
    let (i, w) = best.expect("samples are nonempty");
    (m.point(i).to_vec(), w)
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// Orthonormal basis accumulated by modified Gram-Schmidt.
struct Span {
    dim: usize,
    basis: Vec<Vec<f64>>,
    tol: f64,
    scratch: Vec<f64>,
}

impl Span {
    fn new(dim: usize, tol: f64) -> Self {
        Self { dim, basis: Vec::with_capacity(dim), tol, scratch: vec![0.0; dim] }
    }

    /// Leaves the component of `x` orthogonal to the span in `scratch`; returns its norm.
    fn residual(&mut self, x: &[f64]) -> f64 {
        let r = &mut self.scratch;
        r.copy_from_slice(x);
        for b in &self.basis {
            let c: f64 = r.iter().zip(b).map(|(u, v)| u * v).sum();
            r.iter_mut().zip(b).for_each(|(u, v)| *u -= c * v);
        }
        r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Adds `x`; returns false (leaving the span unchanged) if `x` is dependent.
    fn push(&mut self, x: &[f64]) -> bool {
        let n = self.residual(x);
        if n <= self.tol {
            return false;
        }
        self.basis.push(self.scratch.iter().map(|v| v / n).collect());
        true
    }

    fn contains(&mut self, x: &[f64]) -> bool {
        self.residual(x) <= self.tol
    }

    /// Unit normal when the span is a hyperplane. Then `|n'x|` equals the
    /// residual norm of `x`.
    fn normal(&mut self) -> Option<Vec<f64>> {
        if self.basis.len() + 1 != self.dim {
            return None;
        }
        let mut e = vec![0.0; self.dim];
        let mut best: Option<(f64, Vec<f64>)> = None;
        for j in 0..self.dim {
            e.fill(0.0);
            e[j] = 1.0;
            let n = self.residual(&e);
            if best.as_ref().is_none_or(|(b, _)| n > *b) {
                best = Some((n, self.scratch.iter().map(|v| v / n).collect()));
            }
        }
        best.map(|(_, v)| v)
    }

    fn rank(&self) -> usize {
        debug_assert!(self.basis.len() <= self.dim);
        self.basis.len()
    }
}

/// Best (largest margin) candidate seen during a scan.
struct Worst {
    q: usize,
    mass: f64,
    thr: f64,
    witness: Vec<usize>,
}

impl Worst {
    fn offer(&mut self, q: usize, mass: f64, thr: f64, witness: &[usize]) {
        if mass - thr > self.mass - self.thr {
            self.q = q;
            self.mass = mass;
            self.thr = thr;
            self.witness = witness.to_vec();
        }
    }
}

/// Linear-subspace scan over merged points.
struct LinearScan<'a> {
    sample: &'a EmpiricalSample,
    index: &'a [usize],
    a0: f64,
    origin_mass: f64,
    origin: Option<usize>,
    nonzero: Vec<usize>,
    tol: f64,
}

impl<'a> LinearScan<'a> {
    fn new(sample: &'a EmpiricalSample, index: &'a [usize], a0: f64) -> Self {
        let tol = RANK_TOL * sample.scale().max(f64::MIN_POSITIVE);
        let mut origin_mass = 0.0;
        let mut origin = None;
        let mut nonzero = Vec::new();
        for (i, (p, w)) in sample.iter().enumerate() {
            let n = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n <= tol {
                origin_mass += w;
                origin.get_or_insert(i);
            } else {
                nonzero.push(i);
            }
        }
        Self { sample, index, a0, origin_mass, origin, nonzero, tol }
    }

    fn dim(&self) -> usize {
        self.sample.dim()
    }

    fn start(&self) -> Worst {
        let d = self.dim();
        let thr = threshold(d, 0, self.a0);
        Worst {
            q: 0,
            mass: self.origin_mass,
            thr,
            witness: self.origin.map(|i| vec![self.index[i]]).unwrap_or_default(),
        }
    }

    /// Mass of the span of `subset` (indices into `nonzero`), or None if dependent.
    fn span_mass(&self, subset: &[usize]) -> Option<f64> {
        let mut span = Span::new(self.dim(), self.tol);
        for &s in subset {
            if !span.push(self.sample.point(self.nonzero[s])) {
                return None;
            }
        }
        let mut mass = self.origin_mass;
        if let Some(n) = span.normal() {
            for &i in &self.nonzero {
                let x = self.sample.point(i);
                if x.iter().zip(&n).map(|(a, b)| a * b).sum::<f64>().abs() <= self.tol {
                    mass += self.sample.weight(i);
                }
            }
        } else {
            for &i in &self.nonzero {
                if span.contains(self.sample.point(i)) {
                    mass += self.sample.weight(i);
                }
            }
        }
        debug_assert_eq!(span.rank(), subset.len());
        Some(mass)
    }

    fn offer(&self, worst: &mut Worst, subset: &[usize]) {
        if let Some(mass) = self.span_mass(subset) {
            let q = subset.len();
            let witness: Vec<usize> = subset.iter().map(|&s| self.index[self.nonzero[s]]).collect();
            worst.offer(q, mass, threshold(self.dim(), q, self.a0), &witness);
        }
    }

    fn exact(&self) -> Worst {
        let mut worst = self.start();
        let m = self.nonzero.len();
        for k in 1..self.dim() {
            for_each_combination(m, k, |c| self.offer(&mut worst, c));
        }
        worst
    }

    fn randomized(&self, trials: usize, seed: u64) -> Worst {
        let mut worst = self.start();
        let m = self.nonzero.len();
        let d = self.dim();
        if m == 0 || d < 2 {
            return worst;
        }
        let w: Vec<f64> = self.nonzero.iter().map(|&i| self.sample.weight(i)).collect();
        let pick = WeightedIndex::new(&w).expect("positive weights");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut subset = Vec::with_capacity(d);
        for t in 0..trials {
            let k = 1 + t % (d - 1);
            subset.clear();
            for _ in 0..(k * 8) {
                if subset.len() == k {
                    break;
                }
                let s = pick.sample(&mut rng);
                if !subset.contains(&s) {
                    subset.push(s);
                }
            }
            if subset.len() == k {
                self.offer(&mut worst, &subset);
            }
        }
        worst
    }
}

fn for_each_combination(m: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 || k > m {
        return;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        f(&c);
        let Some(i) = (0..k).rev().find(|&i| c[i] < m - k + i) else {
            return;
        };
        c[i] += 1;
        for j in (i + 1)..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

fn binomial(m: usize, k: usize) -> f64 {
    if k > m {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (m - i) as f64 / (i + 1) as f64)
}

/// Estimated point-in-span tests for an exact scan of `m` distinct points in R^dim.
pub fn exact_work(m: usize, dim: usize) -> f64 {
    (1..dim).map(|k| binomial(m, k) * m as f64).sum()
}

fn exact_feasible(m: usize, dim: usize) -> bool {
    dim <= EXACT_MAX_DIM && exact_work(m, dim) <= EXACT_WORK_LIMIT
}

fn randomized_trials(m: usize, dim: usize) -> usize {
    ((EXACT_WORK_LIMIT / (m.max(1) * dim) as f64) as usize).clamp(64, 4096)
}

fn report(kind: DomainKind, a0: f64, exact: bool, w: Worst) -> DomainReport {
    DomainReport {
        kind,
        member: !is_violation(w.mass, w.thr),
        exact,
        a0,
        worst_subspace_dim: Some(w.q),
        worst_mass: w.mass,
        threshold: w.thr,
        witness_points: w.witness,
    }
}

fn check_scatter_a0(d: usize, a0: f64) -> Result<()> {
    if !(a0 > d as f64) || !a0.is_finite() {
        return Err(Error::InvalidParameter(format!("a0 = {a0} must exceed d = {d}")));
    }
    Ok(())
}

fn check_locscat_a0(d: usize, a0: f64) -> Result<()> {
    if !(a0 > (d + 1) as f64) || !a0.is_finite() {
        return Err(Error::InvalidParameter(format!("a0 = {a0} must exceed d + 1 = {}", d + 1)));
    }
    Ok(())
}

/// Exact membership test for `U_{d,a0}`.
pub fn check_scatter_domain(q: &EmpiricalSample, a0: f64) -> Result<DomainReport> {
    check_scatter_a0(q.dim(), a0)?;
    let (m, index) = q.merged();
    let scan = LinearScan::new(&m, &index, a0);
    if !exact_feasible(scan.nonzero.len(), m.dim()) {
        return Err(Error::DomainCheckTooLarge { dim: m.dim(), work: exact_work(scan.nonzero.len(), m.dim()) });
    }
    Ok(report(DomainKind::Scatter, a0, true, scan.exact()))
}

/// Randomized search for violating subspaces of `U_{d,a0}`: spans of point
/// subsets drawn with probability proportional to mass. A reported
/// violation is genuine; membership is not certified (`exact == false`).
pub fn check_scatter_domain_randomized(q: &EmpiricalSample, a0: f64, trials: usize, seed: u64) -> Result<DomainReport> {
    check_scatter_a0(q.dim(), a0)?;
    let (m, index) = q.merged();
    let scan = LinearScan::new(&m, &index, a0);
    Ok(report(DomainKind::Scatter, a0, false, scan.randomized(trials, seed)))
}

/// Exact check when affordable, randomized otherwise.
pub fn check_scatter_domain_auto(q: &EmpiricalSample, a0: f64) -> Result<DomainReport> {
    check_scatter_a0(q.dim(), a0)?;
    let (m, index) = q.merged();
    let scan = LinearScan::new(&m, &index, a0);
    let n = scan.nonzero.len();
    if exact_feasible(n, m.dim()) {
        Ok(report(DomainKind::Scatter, a0, true, scan.exact()))
    } else {
        let w = scan.randomized(randomized_trials(n, m.dim()), RANDOMIZED_SEED);
        Ok(report(DomainKind::Scatter, a0, false, w))
    }
}

fn to_affine(mut r: DomainReport) -> DomainReport {
    r.kind = DomainKind::LocationScatter;
    r.worst_subspace_dim = r.worst_subspace_dim.and_then(|q| q.checked_sub(1));
    r
}

/// Exact membership test for `V_{d,a0}`, through the lift to R^{d+1}.
pub fn check_locscat_domain(p: &EmpiricalSample, a0: f64) -> Result<DomainReport> {
    check_locscat_a0(p.dim(), a0)?;
    check_scatter_domain(&lift(p), a0).map(to_affine)
}

pub fn check_locscat_domain_randomized(p: &EmpiricalSample, a0: f64, trials: usize, seed: u64) -> Result<DomainReport> {
    check_locscat_a0(p.dim(), a0)?;
    check_scatter_domain_randomized(&lift(p), a0, trials, seed).map(to_affine)
}

pub fn check_locscat_domain_auto(p: &EmpiricalSample, a0: f64) -> Result<DomainReport> {
    check_locscat_a0(p.dim(), a0)?;
    check_scatter_domain_auto(&lift(p), a0).map(to_affine)
}

/// Direct enumeration of affine subspaces spanned by point subsets, without
/// the lift. Used to cross-check [`check_locscat_domain`].
pub fn check_locscat_domain_affine(p: &EmpiricalSample, a0: f64) -> Result<DomainReport> {
    check_locscat_a0(p.dim(), a0)?;
    let d = p.dim();
    let (m, index) = p.merged();
    let n = m.len();
    if !exact_feasible(n, d + 1) {
        return Err(Error::DomainCheckTooLarge { dim: d, work: exact_work(n, d + 1) });
    }
    let tol = RANK_TOL * m.scale().max(f64::MIN_POSITIVE).max(1.0);
    let mut worst: Option<Worst> = None;
    let mut diff = vec![0.0; d];
    // affine dimension k is spanned by k + 1 affinely independent points
    for k in 0..d {
        for_each_combination(n, k + 1, |c| {
            let base = m.point(c[0]);
            let mut span = Span::new(d, tol);
            for &i in &c[1..] {
                diff.iter_mut().zip(m.point(i).iter().zip(base)).for_each(|(o, (x, b))| *o = x - b);
                if !span.push(&diff) {
                    return;
                }
            }
            let mut mass = 0.0;
            for j in 0..n {
                diff.iter_mut().zip(m.point(j).iter().zip(base)).for_each(|(o, (x, b))| *o = x - b);
                if span.contains(&diff) {
                    mass += m.weight(j);
                }
            }
            let thr = threshold(d, k, a0);
            let witness: Vec<usize> = c.iter().map(|&i| index[i]).collect();
            match worst.as_mut() {
                None => worst = Some(Worst { q: k, mass, thr, witness }),
                Some(w) => w.offer(k, mass, thr, &witness),
            }
        });
    }
    let w = worst.expect("at least one atom");
    Ok(DomainReport {
        kind: DomainKind::LocationScatter,
        member: !is_violation(w.mass, w.thr),
        exact: true,
        a0,
        worst_subspace_dim: Some(w.q),
        worst_mass: w.mass,
        threshold: w.thr,
        witness_points: w.witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn four_point() -> EmpiricalSample {
        let c = 2f64.sqrt();
        EmpiricalSample::from_points(&[vec![c, 0.0], vec![-c, 0.0], vec![0.0, c], vec![0.0, -c]]).unwrap()
    }

    #[test]
    fn big_atom_at_origin_d1() {
        let q = EmpiricalSample::from_values(&[0.0, 1.0], Some(vec![0.7, 0.3])).unwrap();
        let r = check_scatter_domain(&q, 3.0).unwrap();
        assert!(!r.member);
        assert_eq!(r.worst_subspace_dim, Some(0));
        assert!((r.worst_mass - 0.7).abs() < 1e-15);
        assert!((r.threshold - 2.0 / 3.0).abs() < 1e-15);
        assert!(r.worst_mass >= r.threshold);
        assert_eq!(r.witness_points, vec![0]);
    }

    #[test]
    fn generic_points_are_members() {
        let r = check_scatter_domain(&four_point(), 4.0).unwrap();
        assert!(r.member);
        // each axis carries 1/2 < 3/4
        assert_eq!(r.worst_subspace_dim, Some(1));
        assert!((r.worst_mass - 0.5).abs() < 1e-15);

        let q = EmpiricalSample::from_points(&[vec![1.0, 0.2], vec![-0.3, 1.0], vec![0.7, -0.9], vec![-1.1, -0.4]])
            .unwrap();
        assert!(check_scatter_domain(&q, 4.0).unwrap().member);
    }

    #[test]
    fn point_mass_at_origin_is_never_a_member() {
        for d in 1..4 {
            let q = EmpiricalSample::new(d, vec![0.0; d], None).unwrap();
            for a0 in [d as f64 + 0.5, d as f64 + 3.0] {
                assert!(!check_scatter_domain(&q, a0).unwrap().member);
            }
        }
    }

    #[test]
    fn parameter_errors() {
        let q = four_point();
        assert!(matches!(check_scatter_domain(&q, 2.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(check_locscat_domain(&q, 3.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn mass_on_a_line_violates_locscat() {
        // 0.9 on the line y = x + 1, rest spread
        let mut pts = Vec::new();
        let mut w = Vec::new();
        for i in 0..9 {
            let t = i as f64;
            pts.push(vec![t, t + 1.0]);
            w.push(0.1);
        }
        pts.push(vec![3.0, -2.0]);
        w.push(0.1);
        let p = EmpiricalSample::from_weighted(&pts, Some(w)).unwrap();
        let r = check_locscat_domain(&p, 4.0).unwrap();
        assert!(!r.member);
        assert_eq!(r.worst_subspace_dim, Some(1));
        assert!((r.threshold - 0.75).abs() < 1e-15);
        assert!((r.worst_mass - 0.9).abs() < 1e-12);
        let direct = check_locscat_domain_affine(&p, 4.0).unwrap();
        assert!(!direct.member);
        assert!((direct.worst_mass - 0.9).abs() < 1e-12);
    }

    #[test]
    fn two_point_half_half_is_member_d1() {
        let p = EmpiricalSample::from_values(&[0.0, 1.0], None).unwrap();
        let r = check_locscat_domain(&p, 3.0).unwrap();
        assert!(r.member);
        assert_eq!(r.worst_subspace_dim, Some(0));
        assert!((r.worst_mass - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_point_is_not_a_member() {
        for d in 1..4 {
            let p = EmpiricalSample::new(d, vec![1.5; d], None).unwrap();
            assert!(!check_locscat_domain(&p, d as f64 + 2.0).unwrap().member);
        }
    }

    #[test]
    fn lift_appends_one() {
        let p = EmpiricalSample::from_values(&[0.0], None).unwrap();
        let l = lift(&p);
        assert_eq!(l.dim(), 2);
        assert_eq!(l.point(0), &[0.0, 1.0]);
        assert_eq!(l.weight(0), 1.0);
        let p = EmpiricalSample::from_values(&[-2.0, 3.0], Some(vec![1.0, 3.0])).unwrap();
        let l = lift(&p);
        assert_eq!(l.point(1), &[3.0, 1.0]);
        assert_eq!(l.weights(), p.weights());
    }

    #[test]
    fn lift_maps_affine_dependence_to_linear_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let d = rng.random_range(1..4);
            let k = rng.random_range(1..=d + 1);
            let mut pts: Vec<Vec<f64>> =
                (0..k).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            if rng.random_bool(0.5) && k >= 2 {
                // force an affine combination
                let t: f64 = rng.random_range(-1.0..2.0);
                let new: Vec<f64> = pts[0].iter().zip(&pts[1]).map(|(a, b)| (1.0 - t) * a + t * b).collect();
                pts.push(new);
            }
            let affine_rank = {
                let mut s = Span::new(d, 1e-9);
                let base = pts[0].clone();
                pts[1..]
                    .iter()
                    .filter(|p| s.push(&p.iter().zip(&base).map(|(a, b)| a - b).collect::<Vec<_>>()))
                    .count()
            };
            let lifted: Vec<Vec<f64>> = pts.iter().map(|p| [p.clone(), vec![1.0]].concat()).collect();
            let linear_rank = {
                let mut s = Span::new(d + 1, 1e-9);
                lifted.iter().filter(|p| s.push(p)).count()
            };
            assert_eq!(affine_rank + 1, linear_rank);
        }
    }

    #[test]
    fn max_atom_examples() {
        let q = EmpiricalSample::from_values(&[0.0, 1.0], Some(vec![0.7, 0.3])).unwrap();
        assert_eq!(max_atom(&q), (vec![0.0], 0.7));
        let vals: Vec<f64> = (0..10).map(|i| (10 - i) as f64).collect();
        let (loc, mass) = max_atom(&EmpiricalSample::from_values(&vals, None).unwrap());
        assert_eq!(loc, vec![1.0]);
        assert!((mass - 0.1).abs() < 1e-15);
        let q = EmpiricalSample::from_values(&[2.0, 0.0, 2.0], Some(vec![0.4, 0.25, 0.35])).unwrap();
        let (loc, mass) = max_atom(&q);
        assert_eq!(loc, vec![2.0]);
        assert!((mass - 0.75).abs() < 1e-15);
    }

    #[test]
    fn exact_threshold_counts_as_violation() {
        // two rows at 0 and one at 1 under nu = 2: atom 2/3 equals the threshold
        let q = EmpiricalSample::from_values(&[0.0, 0.0, 1.0], None).unwrap();
        assert!(!check_locscat_domain(&q, 3.0).unwrap().member);
        assert!(!check_scatter_domain(&q, 3.0).unwrap().member);
    }

    fn random_sample(rng: &mut ChaCha8Rng, d: usize) -> EmpiricalSample {
        let n = rng.random_range(1..12);
        let mut pts: Vec<Vec<f64>> = Vec::new();
        for _ in 0..n {
            let r: f64 = rng.random();
            if r < 0.25 && !pts.is_empty() {
                let j = rng.random_range(0..pts.len());
                pts.push(pts[j].clone());
            } else if r < 0.45 && pts.len() >= 2 {
                let t = rng.random_range(-2i32..3) as f64;
                let new: Vec<f64> = pts[0].iter().zip(&pts[1]).map(|(a, b)| (1.0 - t) * a + t * b).collect();
                pts.push(new);
            } else {
                pts.push((0..d).map(|_| rng.random_range(-3i32..4) as f64).collect());
            }
        }
        let w: Vec<f64> = (0..pts.len()).map(|_| rng.random_range(0.1..1.0)).collect();
        EmpiricalSample::from_weighted(&pts, Some(w)).unwrap()
    }

    #[test]
    fn lifted_check_matches_direct_affine_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let d = rng.random_range(1..3);
            let p = random_sample(&mut rng, d);
            let a0 = rng.random_range((d + 1) as f64 + 0.01..(d + 4) as f64);
            let lifted = check_scatter_domain(&lift(&p), a0).unwrap();
            let via = check_locscat_domain(&p, a0).unwrap();
            let direct = check_locscat_domain_affine(&p, a0).unwrap();
            assert_eq!(via.member, lifted.member);
            assert_eq!(via.member, direct.member, "{p:?} a0={a0}");
            // the lift also scans the empty affine set (the origin of R^{d+1})
            let (excess_via, excess_direct) = (-via.margin(), -direct.margin());
            if via.worst_subspace_dim.is_some() {
                assert!((excess_via - excess_direct).abs() < 1e-12);
            } else {
                assert_eq!(via.worst_mass, 0.0);
                assert!(excess_via >= excess_direct - 1e-12);
            }
        }
    }

    #[test]
    fn membership_is_monotone_in_a0() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let d = rng.random_range(1..4);
            let q = random_sample(&mut rng, d);
            let a0 = rng.random_range(d as f64 + 0.01..d as f64 + 4.0);
            if check_scatter_domain(&q, a0).unwrap().member {
                for bump in [0.1, 1.0, 10.0] {
                    assert!(check_scatter_domain(&q, a0 + bump).unwrap().member);
                }
            }
        }
    }

    #[test]
    fn membership_is_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let d = rng.random_range(1..4);
            let p = random_sample(&mut rng, d);
            let m = loop {
                let m: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0));
                if m.determinant().abs() > 0.2 {
                    break m;
                }
            };
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let a0 = rng.random_range((d + 1) as f64 + 0.01..(d + 4) as f64);
            let before = check_locscat_domain(&p, a0).unwrap();
            let after = check_locscat_domain(&p.map_affine(&m, &v).unwrap(), a0).unwrap();
            assert_eq!(before.member, after.member);
            let s_before = check_scatter_domain(&p, a0).unwrap();
            let s_after = check_scatter_domain(&p.map_linear(&m).unwrap(), a0).unwrap();
            assert_eq!(s_before.member, s_after.member);
        }
    }

    #[test]
    fn randomized_finds_heavy_violations() {
        let mut pts = vec![vec![0.0, 0.0, 1.0]; 1];
        let mut w = vec![0.05];
        for i in 0..600 {
            let t = i as f64 * 0.01;
            pts.push(vec![t, 2.0 * t, 0.0]);
            w.push(0.9 / 600.0);
        }
        pts.push(vec![1.0, 0.0, 0.0]);
        w.push(0.05);
        let q = EmpiricalSample::from_weighted(&pts, Some(w)).unwrap();
        assert!(matches!(check_scatter_domain(&q, 4.0), Err(Error::DomainCheckTooLarge { .. })));
        let r = check_scatter_domain_randomized(&q, 4.0, 200, 1).unwrap();
        assert!(!r.exact);
        assert!(!r.member);
        let auto = check_scatter_domain_auto(&q, 4.0).unwrap();
        assert!(!auto.member);
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut seen = Vec::new();
        for_each_combination(5, 3, |c| seen.push(c.to_vec()));
        assert_eq!(seen.len(), 10);
        assert_eq!(seen[0], vec![0, 1, 2]);
        assert_eq!(seen[9], vec![2, 3, 4]);
        let mut count = 0;
        for_each_combination(3, 3, |_| count += 1);
        assert_eq!(count, 1);
        for_each_combination(2, 3, |_| count += 1);
        assert_eq!(count, 1);
    }
}
