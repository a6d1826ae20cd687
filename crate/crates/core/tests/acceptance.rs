//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tnu::asymptotics::{asymptotic_cov_scatter, hessian, influence, mean_score};
use tnu::domain::{check_locscat_domain, check_scatter_domain};
use tnu::locscatter::solve_locscatter;
use tnu::oned::{boundary_rate_probe, solve_oned, two_point_closed_form};
use tnu::scatter::{gradient, objective, solve_scatter, ScatterConfig};
use tnu::simlab::{check_class_constraint, run_clt_experiment, Estimand, McConfig, Sampler, SamplerKind};
use tnu::symspace::{SpdMatrix, SymMatrix};
use tnu::EmpiricalSample;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn tight(nu: f64) -> ScatterConfig {
    ScatterConfig::new(nu).with_tol_grad(1e-11).with_tol_step(1e-14).with_max_iter(200_000)
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sym(m: DMatrix<f64>) -> SymMatrix {
    SymMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

fn cross(d: usize) -> EmpiricalSample {
    let c = (d as f64).sqrt();
    let mut pts = Vec::new();
    for j in 0..d {
        for s in [-1.0, 1.0] {
            let mut p = vec![0.0; d];
            p[j] = s * c;
            pts.push(p);
        }
    }
    EmpiricalSample::from_points(&pts).unwrap()
}

fn gaussian_cloud(rng: &mut ChaCha8Rng, d: usize, n: usize, scale: f64) -> EmpiricalSample {
    let pts: Vec<Vec<f64>> =
        (0..n).map(|_| (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    EmpiricalSample::from_points(&pts).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0));
        let sv = m.singular_values();
        if sv.min() > 0.2 {
            return m;
        }
    }
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> SpdMatrix {
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    SpdMatrix::new(sym(&b * b.transpose() + DMatrix::identity(d, d) * 0.5)).unwrap()
}

fn closed_form_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let nu = rng.random_range(1.5..8.0);
        let (lo, hi) = (1.0 / (nu + 1.0), nu / (nu + 1.0));
        let p = lo + (hi - lo) * rng.random_range(0.02..0.98);
        let a = rng.random_range(-5.0..5.0);
        let b = a + rng.random_range(0.1..5.0);
        let oracle = two_point_closed_form(a, b, p, nu).map_err(|e| e.to_string())?;
        let q = EmpiricalSample::from_values(&[a, b], Some(vec![1.0 - p, p])).unwrap();
        let one = solve_oned(&q, nu).map_err(|e| e.to_string())?;
        let ls = solve_locscatter(&q, &tight(nu)).map_err(|e| e.to_string())?;
        let ls_sigma = ls.sigma.get(0, 0).sqrt();
        for err in [
            (one.mu - oracle.mu).abs(),
            (one.sigma - oracle.sigma).abs(),
            (ls.mu[0] - oracle.mu).abs(),
            (ls_sigma - oracle.sigma).abs(),
        ] {
            worst = worst.max(err);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-7 && secs < 5.0, format!("max abs err {worst:.2e}, {secs:.2} s"))
}

fn fixed_point_exactness() -> Outcome {
    let q = cross(2);
    let r = solve_scatter(&q, &tight(2.0)).map_err(|e| e.to_string())?;
    let dist = (r.a.as_matrix() - DMatrix::<f64>::identity(2, 2)).norm();
    let lam = hessian(&q, &r.a, 2.0).min_eigenvalue;
    ensure(dist <= 1e-8 && (lam - 0.5).abs() <= 1e-6, format!("‖A-I‖_F {dist:.2e}, min eigenvalue {lam:.9}"))
}

fn rank_reproduction() -> Outcome {
    let cfg = tight(2.0);
    let rank = |q: &EmpiricalSample| asymptotic_cov_scatter(q, &cfg).map(|s| s.rank).map_err(|e| e.to_string());
    let one = rank(&EmpiricalSample::from_values(&[1.0, 3.0], None).unwrap())?;
    let d2 = rank(&cross(2))?;
    let d3 = rank(&cross(3))?;
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let gauss = rank(&gaussian_cloud(&mut rng, 2, 1000, 1.0))?;
    ensure(
        one == 1 && d2 == 1 && d3 == 2 && gauss == 3,
        format!("two-point d=1: {one}, cross d=2: {d2}, cross d=3: {d3}, gaussian d=2: {gauss}"),
    )
}

fn embedding_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (mut gamma_err, mut weight_err): (f64, f64) = (0.0, 0.0);
    let mut count = 0;
    while count < 100 {
        let d = rng.random_range(1..=3);
        let nu = [1.5, 2.0, 4.0][rng.random_range(0..3)];
        let n = rng.random_range(8..60);
        let scale = rng.random_range(0.5..3.0);
        let q = gaussian_cloud(&mut rng, d, n, scale);
        if !check_locscat_domain(&q, nu + d as f64).map_err(|e| e.to_string())?.member {
            continue;
        }
        let e = solve_locscatter(&q, &tight(nu)).map_err(|e| e.to_string())?;
        gamma_err = gamma_err.max((e.gamma_check - 1.0).abs());
        weight_err = weight_err.max((e.weight_check - 1.0).abs());
        count += 1;
    }
    ensure(
        gamma_err <= 1e-6 && weight_err <= 1e-6,
        format!("max |gamma-1| {gamma_err:.2e}, max |∫u dP - 1| {weight_err:.2e} over {count} samples"),
    )
}

fn derivative_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let (mut grad_err, mut hess_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..30 {
        let d = rng.random_range(1..=3);
        let nu = rng.random_range(0.5..6.0);
        let q = gaussian_cloud(&mut rng, d, 20, 1.5);
        let a = random_spd(&mut rng, d);
        let delta = sym(DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0)));
        let h = 1e-5;
        let shifted = |t: f64| SpdMatrix::from_matrix(a.as_matrix() + delta.as_matrix() * t).unwrap();
        let fd = (objective(&q, &shifted(h), nu) - objective(&q, &shifted(-h), nu)) / (2.0 * h);
        grad_err = grad_err.max((gradient(&q, &a, nu).inner(&delta) - fd).abs());

        let c = a.inverse_matrix();
        let in_c = |t: f64| SpdMatrix::from_matrix(c.as_matrix() + delta.as_matrix() * t).unwrap().inverse().unwrap();
        let fd = (mean_score(&q, &in_c(h), nu).as_matrix() - mean_score(&q, &in_c(-h), nu).as_matrix()) / h;
        hess_err = hess_err.max((hessian(&q, &a, nu).apply(&delta).as_matrix() - fd).norm());
    }

    // third-order remainder of log det(A + tD) around A
    let a = random_spd(&mut rng, 3);
    let delta = sym(DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0)));
    let k = a.inverse_matrix().as_matrix() * delta.as_matrix();
    let remainder = |t: f64| {
        let at = SpdMatrix::from_matrix(a.as_matrix() + delta.as_matrix() * t).unwrap();
        at.log_det() - a.log_det() - t * k.trace() + t * t / 2.0 * (&k * &k).trace()
    };
    let cubic = (&k * &k * &k).trace() / 3.0;
    let steps = [0.04, 0.02, 0.01];
    let scaled: Vec<f64> = steps.iter().map(|&t| remainder(t) / t.powi(3)).collect();
    let remainder_ok = scaled.iter().all(|s| (s - cubic).abs() <= 0.1 * cubic.abs().max(1e-3))
        && (scaled[2] - cubic).abs() < (scaled[0] - cubic).abs();
    ensure(
        grad_err <= 1e-6 && hess_err <= 1e-5 && remainder_ok,
        format!(
            "gradient fd err {grad_err:.2e}, hessian fd err {hess_err:.2e}, remainder/t^3 {:?} vs {cubic:.6}",
            scaled.iter().map(|s| format!("{s:.6}")).collect::<Vec<_>>()
        ),
    )
}

fn influence_contamination() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let q = gaussian_cloud(&mut rng, 2, 15, 1.0);
    let cfg = ScatterConfig::new(3.0).with_tol_grad(1e-13).with_tol_step(1e-16).with_max_iter(100_000);
    let base = solve_scatter(&q, &cfg).map_err(|e| e.to_string())?.a;
    let y = [1.5, -0.7];
    let inf = influence(&y, &q, &cfg).map_err(|e| e.to_string())?;
    let eps = [1e-3, 5e-4, 2.5e-4, 1e-4];
    let mut errs = Vec::new();
    for &e in &eps {
        let a = solve_scatter(&q.contaminate(e, &y).unwrap(), &cfg).map_err(|e| e.to_string())?.a;
        errs.push(((a.as_matrix() - base.as_matrix()) / e - inf.as_matrix()).norm());
    }
    let c_fit = eps.iter().zip(&errs).map(|(e, r)| r / e).fold(0.0, f64::max);
    let bounded = eps.iter().zip(&errs).all(|(e, r)| *r <= c_fit * e);
    let ratio = errs[0] / errs[3];
    ensure(ratio >= 5.0 && bounded, format!("err(1e-3)/err(1e-4) = {ratio:.2}, fitted C {c_fit:.4}"))
}

fn monte_carlo_clt() -> Outcome {
    let start = Instant::now();
    let sampler = Sampler::new(SamplerKind::Discrete { law: cross(2) }, 20_240_601).map_err(|e| e.to_string())?;
    let cfg = McConfig::new(Estimand::Scatter, 2.0);
    let report = run_clt_experiment(&sampler, &cfg, 2000, 2000).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(
        report.max_rel_err <= 0.15 && report.existence_rate >= 0.999 && secs < 120.0,
        format!(
            "max rel err {:.4}, existence rate {}, {secs:.1} s on {} threads",
            report.max_rel_err,
            report.existence_rate,
            rayon::current_num_threads()
        ),
    )
}

fn boundary_rate() -> Outcome {
    let nu = 2.0;
    let at = boundary_rate_probe(nu, &[1e-4]).map_err(|e| e.to_string())?;
    let ratio = at[0].ratio.unwrap();
    let h = [1e-4, 1e-5, 1e-6];
    let right = boundary_rate_probe(nu, &h).map_err(|e| e.to_string())?;
    let left = boundary_rate_probe(nu, &h.map(|x| -x)).map_err(|e| e.to_string())?;
    let sigma0 = boundary_rate_probe(nu, &[0.0]).map_err(|e| e.to_string())?[0].sigma;
    let rq: Vec<f64> = right.iter().map(|r| (r.sigma.powi(2) - sigma0.powi(2)) / r.eps).collect();
    let lq: Vec<f64> = left.iter().map(|r| (sigma0.powi(2) - r.sigma.powi(2)) / -r.eps).collect();
    let target = 1.0 / (nu - 1.0);
    let right_ok = (rq[2] - target).abs() <= 0.02 * target;
    let left_ok = lq.iter().all(|x| x.abs() <= 1e-12);
    let lq = lq.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    ensure(
        (0.99..=1.01).contains(&ratio) && right_ok && left_ok,
        format!("ratio at 1e-4 {ratio:.5}, right quotients {rq:.5?}, max |left quotient| {lq:.1e}"),
    )
}

fn breakdown_bound() -> Outcome {
    let (m, delta) = (3.0, 0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let (mut tested, mut violations, mut drawn) = (0, 0, 0);
    let mut tightest: f64 = 0.0;
    while tested < 100 {
        drawn += 1;
        if drawn > 10_000 {
            return Err(format!("only {tested} admissible samples in {drawn} draws"));
        }
        let d = rng.random_range(1..=3);
        let nu = rng.random_range(1.0..6.0);
        let n = rng.random_range(10..80);
        let scale = rng.random_range(0.6..1.6);
        let mut q = gaussian_cloud(&mut rng, d, n, scale);
        if rng.random_bool(0.5) {
            let far: Vec<f64> = (0..d).map(|_| rng.random_range(-8.0..8.0)).collect();
            q = q.contaminate(rng.random_range(0.0..0.1), &far).unwrap();
        }
        let check = check_class_constraint(&q, m, delta, nu).map_err(|e| e.to_string())?;
        if !check.holds {
            continue;
        }
        let a = solve_scatter(&q, &ScatterConfig::new(nu)).map_err(|e| e.to_string())?.a;
        let norm = a.sym().operator_norm();
        tightest = tightest.max(norm / check.norm_bound);
        if norm > check.norm_bound {
            violations += 1;
        }
        tested += 1;
    }
    ensure(
        violations == 0,
        format!("{violations} violations over {tested} samples, max ‖A‖/bound {tightest:.4}"),
    )
}

fn equivariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let (mut scat_err, mut loc_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let d = rng.random_range(1..=3);
        let nu = rng.random_range(1.5..5.0);
        let q = gaussian_cloud(&mut rng, d, 25, 1.0);
        let m = random_matrix(&mut rng, d);
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();

        let a = solve_scatter(&q, &tight(nu)).map_err(|e| e.to_string())?.a;
        let am = solve_scatter(&q.map_linear(&m).unwrap(), &tight(nu)).map_err(|e| e.to_string())?.a;
        let expect = &m * a.as_matrix() * m.transpose();
        scat_err = scat_err.max((am.as_matrix() - &expect).norm() / expect.norm());

        let e = solve_locscatter(&q, &tight(nu)).map_err(|e| e.to_string())?;
        let em = solve_locscatter(&q.map_affine(&m, &v).unwrap(), &tight(nu)).map_err(|e| e.to_string())?;
        let mu = &m * nalgebra::DVector::from_column_slice(&e.mu) + nalgebra::DVector::from_column_slice(&v);
        let sigma = &m * e.sigma.as_matrix() * m.transpose();
        let mu_err = (nalgebra::DVector::from_column_slice(&em.mu) - &mu).norm() / (1.0 + mu.norm());
        let sigma_err = (em.sigma.as_matrix() - &sigma).norm() / sigma.norm();
        loc_err = loc_err.max(mu_err).max(sigma_err);
    }

    let mut center_err: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(1..=3);
        let nu = rng.random_range(1.5..5.0);
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut pts = Vec::new();
        for _ in 0..15 {
            let z: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            pts.push(c.iter().zip(&z).map(|(a, b)| a + b).collect::<Vec<_>>());
            pts.push(c.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>());
        }
        let q = EmpiricalSample::from_points(&pts).unwrap();
        let e = solve_locscatter(&q, &tight(nu)).map_err(|e| e.to_string())?;
        center_err = center_err.max(e.mu.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    ensure(
        scat_err <= 1e-7 && loc_err <= 1e-7 && center_err <= 1e-8,
        format!("scatter rel err {scat_err:.2e}, location-scatter rel err {loc_err:.2e}, center err {center_err:.2e}"),
    )
}

fn run_cli(args: &[&str], csv: &str) -> (i32, serde_json::Value) {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(csv.as_bytes()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tnu"))
        .args(args)
        .arg(f.path())
        .output()
        .unwrap();
    (out.status.code().unwrap_or(-1), serde_json::from_slice(&out.stdout).unwrap())
}

fn domain_gate() -> Outcome {
    let big_atom = "x,weight\n0,2\n1,1\n";
    let point_mass = "x\n0\n";
    let line = "x,y,weight\n-1,0,1\n1,0,1\n2,0,1\n0,1,1\n";
    let mut notes = Vec::new();
    let mut ok = true;

    let atom_q = EmpiricalSample::from_values(&[0.0, 1.0], Some(vec![2.0 / 3.0, 1.0 / 3.0])).unwrap();
    let zero_q = EmpiricalSample::from_values(&[0.0], None).unwrap();
    let line_q = EmpiricalSample::from_points(&[vec![-1.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let rejected = [
        ("atom", !check_locscat_domain(&atom_q, 3.0).map_err(|e| e.to_string())?.member),
        ("point mass", !check_locscat_domain(&zero_q, 3.0).map_err(|e| e.to_string())?.member),
        ("point mass scatter", !check_scatter_domain(&zero_q, 3.0).map_err(|e| e.to_string())?.member),
        ("line", !check_locscat_domain(&line_q, 4.0).map_err(|e| e.to_string())?.member),
        ("line scatter", !check_scatter_domain(&line_q, 4.0).map_err(|e| e.to_string())?.member),
    ];
    for (name, r) in rejected {
        ok &= r;
        if !r {
            notes.push(format!("{name} accepted by checker"));
        }
    }

    for (name, csv) in [("atom", big_atom), ("point mass", point_mass), ("line", line)] {
        let (code, v) = run_cli(&["check-domain", "--nu", "2"], csv);
        ok &= code == 0 && v["payload"]["member"] == false;
        let (code, v) = run_cli(&["estimate", "--nu", "2"], csv);
        ok &= code == 2 && v["error"]["kind"] == "domain_violation";
        notes.push(format!("{name}: estimate exit {code}"));
    }
    for (name, csv, mu) in [("atom", big_atom, 0.0), ("point mass", point_mass, 0.0)] {
        let (code, v) = run_cli(&["oned", "--nu", "2"], csv);
        let extended = v["payload"]["boundary"] == true && v["payload"]["mu"] == mu && v["payload"]["sigma"] == 0.0;
        ok &= code == 0 && extended;
        notes.push(format!("{name}: oned exit {code} ({}, {})", v["payload"]["mu"], v["payload"]["sigma"]));
    }
    ensure(ok, notes.join("; "))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("closed-form two-point oracle", closed_form_oracle),
        ("fixed-point exactness", fixed_point_exactness),
        ("rank reproduction", rank_reproduction),
        ("embedding identities", embedding_identities),
        ("derivative correctness", derivative_correctness),
        ("influence vs contamination", influence_contamination),
        ("Monte Carlo CLT", monte_carlo_clt),
        ("boundary rate", boundary_rate),
        ("breakdown bound", breakdown_bound),
        ("equivariance", equivariance),
        ("domain gate", domain_gate),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
