//! Acceptance criteria, one PASS/FAIL line each. Oracles are computed here,
//! independently of the library.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use serde_json::Value;

use fundgap::moduli::{
    calibrate_pair_tolerance, check_log_concavity, check_modulus_of_continuity, grad_log, sharp_log_modulus,
    PairOptions,
};
use fundgap::modulus::Endpoint;
use fundgap::parabolic::{evolve_psi, PsiOptions};
use fundgap::schrod_nd::{discretize, fundamental_gap, smallest_eigenpairs};
use fundgap::sturm1d::{
    barrier_supersolution, gap1d, log_derivative, observed_order, prufer_shoot, riccati_stationary,
    solve_eigen_shooting, Method, RiccatiSide, ShootMode,
};
use fundgap::{ConvexDomain, Grid, ModulusFn, PairSample, PotentialSpec};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, Duration) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed())
}

fn cli(args: &[&str]) -> (i32, Value) {
    let mut argv = vec!["fundgap"];
    argv.extend_from_slice(args);
    let out = fundgap_cli::run(argv);
    let report = serde_json::from_str(&out.stdout).unwrap_or(Value::Null);
    (out.code, report)
}

fn all_passed(report: &Value) -> bool {
    report["evidence"]
        .as_array()
        .is_some_and(|e| !e.is_empty() && e.iter().all(|x| x["passed"] == true))
}

/// `Σ (-1)^m (x/2)^(2m+n) / (m! (m+n)!)`.
fn bessel_j(n: u32, x: f64) -> f64 {
    let mut term = (x / 2.0).powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
    let mut sum = term;
    for m in 1..200 {
        term *= -(x * x / 4.0) / (m as f64 * (m + n as i64) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    assert!(fa * f(b) < 0.0, "no sign change");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn c1_zero_potential() -> Check {
    let v = PotentialSpec::zero(1);
    let exact = 3.0 * PI * PI;
    let (shoot, t_shoot) = timed(|| gap1d(&v, 1.0, Method::Shooting { samples: 400 }, None));
    let shoot = shoot.map_err(|e| e.to_string())?;
    ensure((shoot.gap - exact).abs() < 1e-6, || format!("shooting gap {} vs {exact}", shoot.gap))?;

    let (fd, t_fd) = timed(|| {
        [256, 512, 1024]
            .map(|n| gap1d(&v, 1.0, Method::FiniteDifference { n_grid: n }, None).map(|g| g.gap))
    });
    let fd: Vec<f64> = fd.into_iter().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    // three-point matrix spectrum: (2/h)² sin²(jπh/2)
    let h: f64 = 1.0 / 1024.0;
    let discrete = (2.0 / h).powi(2) * ((PI * h).sin().powi(2) - (PI * h / 2.0).sin().powi(2));
    ensure((fd[2] - exact).abs() < 5e-3, || format!("FD gap {} vs {exact}", fd[2]))?;
    ensure((fd[2] - discrete).abs() < 1e-7, || format!("FD gap {} vs matrix spectrum {discrete}", fd[2]))?;
    let order = observed_order(fd[0], fd[1], fd[2]);
    ensure(order >= 1.9, || format!("observed order {order}"))?;

    let (code, report) = cli(&["gap1d", "--potential", "0", "--diameter", "1"]);
    let reported = report["results"]["gap"].as_f64().unwrap_or(f64::NAN);
    ensure(code == 0 && (reported - exact).abs() < 1e-6, || format!("cli exit {code}, gap {reported}"))?;

    let elapsed = t_shoot + t_fd;
    ensure(elapsed < Duration::from_secs(1), || format!("runtime {elapsed:?}"))?;
    Ok(format!(
        "shoot |Δ| = {:.1e}, FD(1/1024) |Δ| = {:.1e}, order {order:.3}, {elapsed:.2?}",
        (shoot.gap - exact).abs(),
        (fd[2] - exact).abs()
    ))
}

fn c2_harmonic() -> Check {
    let v = fundgap::potential::parse_potential::<f64>("z^2", 1).map_err(|e| e.to_string())?;
    // √(2K) with K = 2
    let oracle = 2.0f64;
    let (gaps, elapsed) = timed(|| {
        [5.0, 10.0, 20.0].map(|d| gap1d(&v, d, Method::Shooting { samples: 400 }, None).map(|g| g.gap))
    });
    let gaps: Vec<f64> = gaps.into_iter().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    ensure((gaps[2] - oracle).abs() < 1e-6, || format!("D = 20 gap {}", gaps[2]))?;
    let errs: Vec<f64> = gaps.iter().map(|g| (g - oracle).abs()).collect();
    ensure(errs[0] > errs[1] && errs[1] >= errs[2], || format!("sweep not monotone: {gaps:?}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("runtime {elapsed:?}"))?;
    Ok(format!("D = 5, 10, 20 → {:.8}, {:.8}, {:.10}, {elapsed:.2?}", gaps[0], gaps[1], gaps[2]))
}

fn c3_square() -> Check {
    let exact = 3.0 * PI * PI;
    let (r, elapsed) = timed(|| fundamental_gap(&ConvexDomain::square(1.0).unwrap(), &PotentialSpec::zero(2), 1.0 / 128.0));
    let r = r.map_err(|e| e.to_string())?;
    let rel = (r.richardson - exact).abs() / exact;
    ensure(rel < 5e-3, || format!("Richardson gap {} ({rel:.2e} relative)", r.richardson))?;
    ensure(r.richardson >= exact / 2.0, || format!("gap {} below 3π²/2", r.richardson))?;
    ensure(elapsed < Duration::from_secs(60), || format!("runtime {elapsed:?}"))?;
    Ok(format!("gap {:.6} (rel {rel:.1e}) ≥ {:.4}, {elapsed:.2?}", r.richardson, exact / 2.0))
}

fn c4_disc() -> Check {
    let j01 = bisect(|x| bessel_j(0, x), 2.0, 3.0);
    let j11 = bisect(|x| bessel_j(1, x), 3.0, 4.5);
    let oracle = j11 * j11 - j01 * j01;
    ensure((oracle - 8.89878).abs() < 1e-4, || format!("Bessel oracle {oracle}"))?;
    let (out, elapsed) = timed(|| cli(&["gapnd", "--domain", "disc:1", "--h", "1/64"]));
    let (code, report) = out;
    let gap = report["results"]["richardson"]["gap"].as_f64().unwrap_or(f64::NAN);
    let rel = (gap - oracle).abs() / oracle;
    ensure(code == 0, || format!("cli exit {code}"))?;
    ensure(rel < 5e-3, || format!("gap {gap} vs {oracle} ({rel:.2e} relative)"))?;
    ensure(gap >= 3.0 * PI * PI / 4.0, || format!("gap {gap} below 3π²/4"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("runtime {elapsed:?}"))?;
    Ok(format!("gap {gap:.6} vs j²₁₁ - j²₀₁ = {oracle:.6} (rel {rel:.1e}), {elapsed:.2?}"))
}

fn c5_log_concavity() -> Check {
    let square = ConvexDomain::square(1.0).unwrap();
    let psi = sharp_log_modulus(2f64.sqrt(), 4000).map_err(|e| e.to_string())?;
    // closed form -(π/√2) tan(πz/√2) at a few points
    for z in [0.1, 0.3, 0.6] {
        let k = PI / 2f64.sqrt();
        let diff = (psi.eval(z).unwrap() + k * (k * z).tan()).abs();
        ensure(diff < 1e-3 * (1.0 + (k * z).tan().abs()), || format!("ψ({z}) off by {diff}"))?;
    }

    let h = 1.0 / 64.0;
    let op = discretize(&square, &PotentialSpec::zero(2), h).map_err(|e| e.to_string())?;
    let phi = smallest_eigenpairs(&op, 1, 1e-10).map_err(|e| e.to_string())?.vectors[0].clone();
    let cal = calibrate_pair_tolerance(h, 2.0).map_err(|e| e.to_string())?;
    let opts = PairOptions {
        boundary_margin: 2.0 * h,
        ..PairOptions::default()
    };
    let sample = PairSample::stratified(op.grid(), &opts).map_err(|e| e.to_string())?;
    let r = check_log_concavity(op.grid(), &phi, &psi, &sample, cal.tolerance(h)).map_err(|e| e.to_string())?;
    ensure(r.passed, || format!("sampled check failed: worst {} > tol {}", r.worst, r.tolerance))?;

    // 16×16 interior grid, every pair, plain loop
    let hc = 1.0 / 17.0;
    let op = discretize(&square, &PotentialSpec::zero(2), hc).map_err(|e| e.to_string())?;
    let grid = op.grid();
    ensure(grid.len() == 256, || format!("{} nodes", grid.len()))?;
    let phi = smallest_eigenpairs(&op, 1, 1e-10).map_err(|e| e.to_string())?.vectors[0].clone();
    let g = grad_log(grid, &phi).map_err(|e| e.to_string())?;
    let tol = calibrate_pair_tolerance(hc, 2.0).map_err(|e| e.to_string())?.tolerance(hc);
    let margin = 2.0 * hc;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            if grid.boundary_distance(i) < margin || grid.boundary_distance(j) < margin {
                continue;
            }
            let (x, y) = (grid.point(i), grid.point(j));
            let d = ((y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2)).sqrt();
            let e = [(y[0] - x[0]) / d, (y[1] - x[1]) / d];
            let lhs = (g[2 * j] - g[2 * i]) * e[0] + (g[2 * j + 1] - g[2 * i + 1]) * e[1];
            worst = worst.max(lhs - 2.0 * psi.eval(d / 2.0).map_err(|e| e.to_string())?);
        }
    }
    let brute_pass = worst <= tol;
    let sampled = PairSample::stratified(
        grid,
        &PairOptions {
            boundary_margin: margin,
            ..PairOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let s = check_log_concavity(grid, &phi, &psi, &sampled, tol).map_err(|e| e.to_string())?;
    ensure(s.passed == brute_pass, || format!("verdicts differ: sampled {}, brute force {brute_pass}", s.passed))?;
    ensure(s.worst <= worst + 1e-14, || format!("sampled worst {} exceeds brute force {worst}", s.worst))?;
    Ok(format!(
        "h = 1/64 worst {:.3e} ≤ tol {:.3e} over {} pairs; 16×16 brute force {worst:.3e}, verdicts agree ({brute_pass})",
        r.worst, r.tolerance, r.checked
    ))
}

fn c6_psi_evolution() -> Check {
    let v = PotentialSpec::zero(1);
    let k = 10.0;
    // Robin ground state cos(βz) with β tan(β/2) = k, so ψ = -β tan(βz)
    let beta = bisect(|b| b * (b / 2.0).tan() - k, 1e-6, PI - 1e-9);
    let barrier = barrier_supersolution(&v, k, 10.0, 1.0, 4000).map_err(|e| e.to_string())?;
    let (ev, elapsed) = timed(|| {
        evolve_psi(
            &v,
            1.0,
            &barrier.psi,
            k,
            0.6,
            1e-3,
            &PsiOptions {
                cells: 2000,
                snapshots: 20,
            },
        )
    });
    let ev = ev.map_err(|e| e.to_string())?;
    let last = &ev.last().psi;
    let err = (0..last.len())
        .filter(|&i| ev.z(i) <= 0.45)
        .map(|i| (last[i] + beta * (beta * ev.z(i)).tan()).abs())
        .fold(0.0f64, f64::max);
    ensure(err < 1e-3, || format!("sup distance {err}"))?;
    ensure(ev.monotone(1e-9), || format!("ψ rose by {} at {:?}", ev.max_increase, ev.max_increase_at))?;
    ensure(ev.stationarity_residual < 1e-6, || format!("Riccati residual {}", ev.stationarity_residual))?;
    ensure((ev.mu - beta * beta).abs() < 1e-6, || format!("fitted μ {} vs β² {}", ev.mu, beta * beta))?;
    Ok(format!(
        "sup error {err:.1e}, max rise {:.1e}, residual {:.1e}, μ {:.8}, {elapsed:.2?}",
        ev.max_increase, ev.stationarity_residual, ev.mu
    ))
}

fn c7_gap_decay() -> Check {
    let (code, report) = cli(&["gap-decay", "--domain", "square:1", "--h", "1/64"]);
    ensure(code == 0 && all_passed(&report), || format!("cli exit {code}"))?;
    let res = &report["results"];
    let rate = res["fit"]["rate"].as_f64().unwrap_or(f64::NAN);
    let gap = res["gap_nd"].as_f64().unwrap_or(f64::NAN);
    let rel = (rate - gap).abs() / gap;
    ensure(rel < 1e-2, || format!("rate {rate} vs λ1 - λ0 = {gap}"))?;
    let bound = 3.0 * PI * PI / 2.0;
    ensure(rate > bound, || format!("rate {rate} ≤ 3π²/2"))?;
    Ok(format!("rate {rate:.5} vs λ1 - λ0 = {gap:.5} (rel {rel:.1e}) > {bound:.4}"))
}

fn c8_double_well() -> Check {
    let (code, report) = cli(&[
        "verify",
        "--domain",
        "disc:1",
        "--potential",
        "-r^2+r^4+5*x2^2",
        "--profile",
        "-z^2+z^4",
    ]);
    ensure(code == 0, || format!("cli exit {code}"))?;
    let ev = report["evidence"].as_array().cloned().unwrap_or_default();
    for stage in ["convexity", "gapnd", "gap1d", "comparison"] {
        ensure(ev.iter().any(|e| e["stage"] == stage && e["passed"] == true), || format!("stage {stage} missing or failed"))?;
    }
    let cross = ev
        .iter()
        .find(|e| e["stage"] == "gap1d")
        .and_then(|e| e["value"].as_f64())
        .unwrap_or(f64::NAN);
    ensure(cross <= 1e-4, || format!("FD vs shooting {cross}"))?;
    let res = &report["results"];
    Ok(format!(
        "λ1 - λ0 = {:.5} ≥ μ1 - μ0 = {:.5}, |FD - shoot| = {cross:.1e}",
        res["gapnd"]["richardson"].as_f64().unwrap_or(f64::NAN),
        res["gap1d"]["shoot"]["gap"].as_f64().unwrap_or(f64::NAN)
    ))
}

fn c9_properties() -> Check {
    let dw = PotentialSpec::double_well(1.0, 1.0, 1);
    let err = |e: fundgap::sturm1d::Sturm1dError| e.to_string();

    let mut prev = f64::INFINITY;
    for i in 0..40 {
        let q = prufer_shoot(&dw, -5.0 + 1.5 * i as f64, 0.0, 2.0, 10).map_err(err)?.terminal();
        ensure(q < prev, || format!("Prüfer angle not decreasing at step {i}"))?;
        prev = q;
    }

    for (eps, eps_t) in [(0.05, 0.1), (0.02, 0.5)] {
        let g = log_derivative(&solve_eigen_shooting(&dw, 2.0, ShootMode::RobinGround(eps), 400).map_err(err)?).map_err(err)?;
        let e = log_derivative(&solve_eigen_shooting(&dw, 2.0, ShootMode::RobinExcited(eps_t), 400).map_err(err)?)
            .map_err(err)?;
        ensure(e.samples().iter().zip(g.samples()).all(|(a, b)| a > b), || format!("Robin ordering fails for ({eps}, {eps_t})"))?;
    }

    let r = riccati_stationary(&dw, 1.0, RiccatiSide::Left, 2.0, 400).map_err(err)?;
    ensure(r.residual < 1e-8, || format!("Riccati residual {}", r.residual))?;
    let r = riccati_stationary(&dw, 3.0, RiccatiSide::Right { k: 10.0 }, 2.0, 400).map_err(err)?;
    ensure(r.residual < 1e-8, || format!("Riccati residual {}", r.residual))?;

    let grid = Grid::new(ConvexDomain::disc([0.0, 0.0], 1.0).unwrap(), 1.0 / 9.0).map_err(|e| e.to_string())?;
    let f: Vec<f64> = grid.points().map(|p| (2.0 * p[0]).sin() * p[1]).collect();
    let eta = ModulusFn::from_fn(1.0, 401, Endpoint::Finite, |z| 1.5 * z).map_err(|e| e.to_string())?;
    let all = PairSample::all_pairs(&grid, 0.0, 16);
    let rep = check_modulus_of_continuity(&grid, &f, &eta, &all, 0.0).map_err(|e| e.to_string())?;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            let (x, y) = (grid.point(i), grid.point(j));
            let d = ((y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2)).sqrt();
            worst = worst.max((f[j] - f[i]).abs() - 3.0 * (d / 2.0));
        }
    }
    ensure((rep.worst - worst).abs() < 1e-9, || format!("pair check {} vs brute force {worst}", rep.worst))?;

    let args = ["moduli", "logconc", "--domain", "square:1", "--h", "1/32", "--per-bin", "64"];
    let a = fundgap_cli::run(std::iter::once("fundgap").chain(args));
    let b = fundgap_cli::run(std::iter::once("fundgap").chain(args));
    ensure(a.code == 0 && !a.stdout.is_empty() && a.stdout == b.stdout, || "reports differ between runs".into())?;
    Ok("Prüfer monotonicity, Robin ordering, Riccati residuals, brute-force equivalence, determinism".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("1D zero potential", c1_zero_potential),
        ("harmonic oscillator", c2_harmonic),
        ("unit square", c3_square),
        ("disc", c4_disc),
        ("log-concavity", c5_log_concavity),
        ("ψ-evolution", c6_psi_evolution),
        ("gap from decay", c7_gap_decay),
        ("double-well comparison", c8_double_well),
        ("property suite", c9_properties),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
