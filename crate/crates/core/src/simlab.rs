//! Monte Carlo checks of the central limit behavior of the estimators.
//!
//! Replicate `r` of a run with seed `s` draws from the ChaCha8 stream
//! `(s, r)`, so results do not depend on the number of worker threads.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::asymptotics::{asymptotic_cov_locscatter, asymptotic_cov_scatter, AsymptoticCov};
use crate::error::{Error, Result};
use crate::locscatter::solve_locscatter;
use crate::sample::EmpiricalSample;
use crate::scatter::{solve_scatter, ScatterConfig};
use crate::symspace::{sym_to_vec, SpdMatrix, SymMatrix};

/// Replicate fraction with an existing estimate below which a run is flagged.
pub const EXISTENCE_FLAG: f64 = 0.99;

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerKind {
    MultivariateT { nu0: f64, mu0: Vec<f64>, sigma0: SpdMatrix },
    Gaussian { mu0: Vec<f64>, sigma0: SpdMatrix },
    Discrete { law: EmpiricalSample },
    Contaminated { base: Box<SamplerKind>, eps: f64, point: Vec<f64> },
}

impl SamplerKind {
    fn dim(&self) -> usize {
        match self {
            SamplerKind::MultivariateT { mu0, .. } | SamplerKind::Gaussian { mu0, .. } => mu0.len(),
            SamplerKind::Discrete { law } => law.dim(),
            SamplerKind::Contaminated { base, .. } => base.dim(),
        }
    }

    fn law(&self) -> Option<EmpiricalSample> {
        match self {
            SamplerKind::Discrete { law } => Some(law.clone()),
            SamplerKind::Contaminated { base, eps, point } => base.law()?.contaminate(*eps, point).ok(),
            _ => None,
        }
    }

    fn draw_point(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        match self {
            SamplerKind::Gaussian { mu0, sigma0 } => gaussian_point(rng, mu0, sigma0, 1.0, out),
            SamplerKind::MultivariateT { nu0, mu0, sigma0 } => {
                let w: f64 = ChiSquared::new(*nu0).expect("validated").sample(rng);
                gaussian_point(rng, mu0, sigma0, (nu0 / w).sqrt(), out)
            }
            SamplerKind::Discrete { law } => {
                let i = WeightedIndex::new(law.weights()).expect("validated").sample(rng);
                out.extend_from_slice(law.point(i));
            }
            SamplerKind::Contaminated { base, eps, point } => {
                if rng.random_bool(*eps) {
                    out.extend_from_slice(point);
                } else {
                    base.draw_point(rng, out);
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SamplerKind::MultivariateT { nu0, mu0, sigma0 } => {
                if !(*nu0 > 0.0) {
                    return Err(Error::InvalidParameter(format!("t degrees of freedom must be positive, got {nu0}")));
                }
                check_dims(mu0, sigma0)
            }
            SamplerKind::Gaussian { mu0, sigma0 } => check_dims(mu0, sigma0),
            SamplerKind::Discrete { .. } => Ok(()),
            SamplerKind::Contaminated { base, eps, point } => {
                if !(0.0..=1.0).contains(eps) {
                    return Err(Error::InvalidParameter(format!("contamination eps {eps} not in [0,1]")));
                }
                if point.len() != base.dim() {
                    return Err(Error::DimensionMismatch { expected: base.dim(), found: point.len() });
                }
                base.validate()
            }
        }
    }
}

fn check_dims(mu0: &[f64], sigma0: &SpdMatrix) -> Result<()> {
    if mu0.len() != sigma0.dim() {
        return Err(Error::DimensionMismatch { expected: sigma0.dim(), found: mu0.len() });
    }
    Ok(())
}

fn gaussian_point(rng: &mut ChaCha8Rng, mu0: &[f64], sigma0: &SpdMatrix, scale: f64, out: &mut Vec<f64>) {
    let d = mu0.len();
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = sigma0.cholesky_factor() * z;
    out.extend(mu0.iter().zip(x.iter()).map(|(m, v)| m + scale * v));
}

/// A law to sample from plus the seed of its random streams.
#[derive(Clone, Debug, Serialize)]
pub struct Sampler {
    pub kind: SamplerKind,
    pub seed: u64,
}

impl Sampler {
    pub fn new(kind: SamplerKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        Ok(Self { kind, seed })
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// The sampled law itself when it is discrete.
    pub fn target_law(&self) -> Option<EmpiricalSample> {
        self.kind.law()
    }

    pub fn stream(&self, replicate: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate);
        rng
    }

    /// `n` draws from stream `replicate`. Draws from a discrete law come back
    /// merged, with counts as weights.
    pub fn draw(&self, n: usize, replicate: u64) -> Result<EmpiricalSample> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample size must be positive".into()));
        }
        let mut rng = self.stream(replicate);
        let mut coords = Vec::with_capacity(n * self.dim());
        for _ in 0..n {
            self.kind.draw_point(&mut rng, &mut coords);
        }
        let s = EmpiricalSample::new(self.dim(), coords, None)?;
        Ok(if self.target_law().is_some() { s.merged().0 } else { s })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// Pure scatter `A_nu`.
    Scatter,
    /// Location and scatter `(mu_nu, Sigma_nu)`.
    LocScatter,
}

#[derive(Clone, Debug, Serialize)]
pub struct McConfig {
    pub estimand: Estimand,
    /// Solver settings; `solver.nu` is the `nu` of the functional.
    pub solver: ScatterConfig,
    /// Size of the single large draw standing in for a continuous law.
    pub surrogate_n: usize,
    /// Entries of the target covariance below this size are left out of
    /// `max_rel_err`.
    pub entry_floor: f64,
    pub keep_estimates: bool,
}

impl McConfig {
    pub fn new(estimand: Estimand, nu: f64) -> Self {
        Self {
            estimand,
            solver: ScatterConfig::new(nu),
            surrogate_n: 1_000_000,
            entry_floor: 0.05,
            keep_estimates: false,
        }
    }
}

fn vectorize(q: &EmpiricalSample, cfg: &McConfig) -> Result<Vec<f64>> {
    match cfg.estimand {
        Estimand::Scatter => Ok(sym_to_vec(solve_scatter(q, &cfg.solver)?.a.sym()).coords),
        Estimand::LocScatter => {
            let e = solve_locscatter(q, &cfg.solver)?;
            Ok(e.mu.iter().copied().chain(sym_to_vec(e.sigma.sym()).coords).collect())
        }
    }
}

/// The functional at the target law, or at one large draw (`surrogate`).
struct Truth {
    law: EmpiricalSample,
    value: Vec<f64>,
    surrogate: bool,
}

fn truth(sampler: &Sampler, cfg: &McConfig) -> Result<Truth> {
    let (law, surrogate) = match sampler.target_law() {
        Some(law) => (law, false),
        None => (sampler.draw(cfg.surrogate_n, u64::MAX)?, true),
    };
    let value = vectorize(&law, cfg)?;
    Ok(Truth { law, value, surrogate })
}

enum Outcome {
    Estimate(Vec<f64>),
    Outside,
    Failed,
}

fn replicate(sampler: &Sampler, cfg: &McConfig, n: usize, r: u64) -> Result<Outcome> {
    let q = sampler.draw(n, r)?;
    Ok(match vectorize(&q, cfg) {
        Ok(v) => Outcome::Estimate(v),
        Err(Error::DomainViolation(_)) => Outcome::Outside,
        Err(_) => Outcome::Failed,
    })
}

fn run_replicates(sampler: &Sampler, cfg: &McConfig, n: usize, reps: usize) -> Result<Vec<Outcome>> {
    (0..reps as u64).into_par_iter().map(|r| replicate(sampler, cfg, n, r)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub n: usize,
    pub reps: usize,
    pub estimand: Estimand,
    pub labels: Vec<String>,
    pub truth: Vec<f64>,
    /// The truth comes from one large draw rather than the law itself.
    pub surrogate_truth: bool,
    /// Covariance of `sqrt(n) (estimate - truth)` over replicates.
    pub empirical_cov: SymMatrix,
    pub target_cov: AsymptoticCov,
    /// Largest relative entry error over entries with `|S_ij| > entry_floor`.
    pub max_rel_err: f64,
    pub entry_floor: f64,
    /// Kolmogorov distance of each standardized coordinate from N(0, 1);
    /// absent for coordinates without spread.
    pub normality_stat: Vec<Option<f64>>,
    pub existence_rate: f64,
    pub solver_failures: usize,
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Vec<Vec<f64>>>,
}

/// Compares the replicate covariance of `sqrt(n) (estimate - truth)` with
/// the asymptotic covariance at the target law.
pub fn run_clt_experiment(sampler: &Sampler, cfg: &McConfig, n: usize, reps: usize) -> Result<McReport> {
    if reps < 2 {
        return Err(Error::InvalidParameter("reps must be at least 2".into()));
    }
    let truth = truth(sampler, cfg)?;
    let target_cov = match cfg.estimand {
        Estimand::Scatter => asymptotic_cov_scatter(&truth.law, &cfg.solver)?,
        Estimand::LocScatter => asymptotic_cov_locscatter(&truth.law, &cfg.solver)?,
    };
    let outcomes = run_replicates(sampler, cfg, n, reps)?;
    let k = truth.value.len();
    let root_n = (n as f64).sqrt();
    let mut errors: Vec<DVector<f64>> = Vec::with_capacity(reps);
    let (mut outside, mut failed) = (0usize, 0usize);
    let mut estimates = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Estimate(v) => {
                errors.push(DVector::from_fn(k, |i, _| root_n * (v[i] - truth.value[i])));
                if cfg.keep_estimates {
                    estimates.push(v);
                }
            }
            Outcome::Outside => outside += 1,
            Outcome::Failed => failed += 1,
        }
    }
    let existence_rate = 1.0 - outside as f64 / reps as f64;
    if errors.len() < 2 {
        return Err(Error::NumericalBreakdown(format!("only {} replicates produced an estimate", errors.len())));
    }
    let empirical_cov = covariance(&errors);
    let s = target_cov.s.as_matrix();
    let mut max_rel_err: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            if s[(i, j)].abs() > cfg.entry_floor {
                max_rel_err = max_rel_err.max((empirical_cov[(i, j)] - s[(i, j)]).abs() / s[(i, j)].abs());
            }
        }
    }
    let normality_stat = (0..k).map(|i| ks_normal(&errors.iter().map(|e| e[i]).collect::<Vec<_>>())).collect();
    let mut flags = Vec::new();
    if existence_rate < EXISTENCE_FLAG {
        flags.push(format!("existence rate {existence_rate} below {EXISTENCE_FLAG}: law is near the domain boundary"));
    }
    if truth.surrogate {
        flags.push(format!("truth estimated from one draw of size {}", cfg.surrogate_n));
    }
    if failed > 0 {
        flags.push(format!("{failed} replicates failed to solve"));
    }
    Ok(McReport {
        n,
        reps,
        estimand: cfg.estimand,
        labels: target_cov.labels.clone(),
        truth: truth.value,
        surrogate_truth: truth.surrogate,
        empirical_cov: SymMatrix::symmetrized(empirical_cov),
        target_cov,
        max_rel_err,
        entry_floor: cfg.entry_floor,
        normality_stat,
        existence_rate,
        solver_failures: failed,
        flags,
        estimates: cfg.keep_estimates.then_some(estimates),
    })
}

fn covariance(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let k = rows[0].len();
    let m = rows.len() as f64;
    let mean = rows.iter().fold(DVector::zeros(k), |acc, r| acc + r) / m;
    let mut c = DMatrix::zeros(k, k);
    for r in rows {
        let dv = r - &mean;
        c.ger(1.0, &dv, &dv, 1.0);
    }
    c / (m - 1.0)
}

fn ks_normal(xs: &[f64]) -> Option<f64> {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let scale = xs.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if !(sd > 1e-9 * scale.max(f64::MIN_POSITIVE)) {
        return None;
    }
    let mut z: Vec<f64> = xs.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let stat = z
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal.cdf(v);
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max);
    Some(stat)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub n: usize,
    pub mean_error: f64,
    pub existence_rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `log mean_error` against `log n`.
    pub slope: f64,
    pub surrogate_truth: bool,
}

/// Mean Euclidean estimation error over replicates for each `n`.
pub fn run_consistency_sweep(sampler: &Sampler, cfg: &McConfig, n_list: &[usize], reps: usize) -> Result<SweepReport> {
    if n_list.len() < 2 {
        return Err(Error::InvalidParameter("consistency sweep needs at least two sample sizes".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be positive".into()));
    }
    let truth = truth(sampler, cfg)?;
    let mut points = Vec::with_capacity(n_list.len());
    for (idx, &n) in n_list.iter().enumerate() {
        // separate streams for each sample size
        let shifted = Sampler { kind: sampler.kind.clone(), seed: sampler.seed.wrapping_add(idx as u64 + 1) };
        let outcomes = run_replicates(&shifted, cfg, n, reps)?;
        let mut total = 0.0;
        let mut count = 0usize;
        for o in &outcomes {
            if let Outcome::Estimate(v) = o {
                total += v.iter().zip(&truth.value).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::NumericalBreakdown(format!("no replicate produced an estimate at n = {n}")));
        }
        points.push(SweepPoint { n, mean_error: total / count as f64, existence_rate: count as f64 / reps as f64 });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_error.ln()).collect();
    Ok(SweepReport { slope: ls_slope(&xs, &ys), points, surrogate_truth: truth.surrogate })
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassCheck {
    pub holds: bool,
    /// `P(|y| > M)`.
    pub tail_mass: f64,
    /// `(1 - delta)/(nu + d)`.
    pub tail_bound: f64,
    /// `max(‖A‖, ‖A^{-1}‖)` at the fitted scatter, when it exists.
    pub w_norm: Option<f64>,
    /// `M^2 (nu + d - delta)/(delta nu)`.
    pub norm_bound: f64,
}

/// Tail-mass condition `P(|y| > M) <= (1 - delta)/(nu + d)` together with
/// `max(‖A_nu‖, ‖A_nu^{-1}‖) < 1/delta`.
pub fn check_class_constraint(p: &EmpiricalSample, m: f64, delta: f64, nu: f64) -> Result<ClassCheck> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("M must be positive, got {m}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    let d = p.dim() as f64;
    let tail_mass: f64 =
        p.iter().filter(|(y, _)| y.iter().map(|x| x * x).sum::<f64>().sqrt() > m).map(|(_, w)| w).sum();
    let tail_bound = (1.0 - delta) / (nu + d);
    let norm_bound = m * m * (nu + d - delta) / (delta * nu);
    let w_norm = match solve_scatter(p, &ScatterConfig::new(nu)) {
        Ok(r) => {
            let a = r.a.sym().operator_norm();
            let ainv = r.a.inverse_matrix().operator_norm();
            Some(a.max(ainv))
        }
        Err(Error::DomainViolation(_)) => None,
        Err(e) => return Err(e),
    };
    let holds = tail_mass <= tail_bound && w_norm.is_some_and(|w| w < 1.0 / delta);
    Ok(ClassCheck { holds, tail_mass, tail_bound, w_norm, norm_bound })
}
