use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};

use fundgap::expr::{self, Expr, ParseError};
use fundgap::geometry::DomainKind;
use fundgap::moduli::{
    calibrate_pair_tolerance, check_contraction_modulus, check_convexity_modulus, check_log_concavity,
    check_modulus_of_continuity, grad_log, optimal_convexity_modulus, sharp_log_modulus, PairOptions,
};
use fundgap::modulus::Endpoint;
use fundgap::parabolic::{
    auto_window, comparison_modulus, evolve_psi, riccati_expression, gap_from_decay, heat_drift_neumann,
    neumann_grid, osc_decay_rate, oscillation, DecayConfig, Drift, PsiEvolution, PsiOptions,
};
use fundgap::potential::{parse_potential, PotentialError};
use fundgap::schrod_nd::{discretize, fundamental_gap_with, smallest_eigenpairs, EigenOptions};
use fundgap::sturm1d::{
    barrier_supersolution, gap1d, log_derivative, observed_order, prufer_shoot, solve_eigen_shooting, Method,
    ShootMode,
};
use fundgap::{Barrier, ConvexDomain, Gap1d, Grid, ModulusFn, PairReport, PairSample, PotentialSpec};

use crate::args::*;
use crate::report::{Evidence, Report};

/// Where CSV artifacts go; nothing is written without a directory.
pub struct Artifacts {
    dir: Option<PathBuf>,
    pub written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir, written: Vec::new() }
    }

    fn open(&mut self, name: &str) -> Result<Option<fs::File>> {
        let Some(dir) = &self.dir else {
            return Ok(None);
        };
        fs::create_dir_all(dir).with_context(|| format!("csv-dir: cannot create {}", dir.display()))?;
        let path = dir.join(name);
        let file = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(Some(file))
    }

    fn table(&mut self, name: &str, header: &str, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
        let Some(mut f) = self.open(name)? else {
            return Ok(());
        };
        writeln!(f, "{header}")?;
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", cells.join(","))?;
        }
        Ok(())
    }

    fn grid(&mut self, name: &str, grid: &Grid, values: &[f64]) -> Result<()> {
        if let Some(f) = self.open(name)? {
            grid.write_csv(values, std::io::BufWriter::new(f))?;
        }
        Ok(())
    }
}

fn diagnose(field: &str, text: &str, err: &ParseError) -> anyhow::Error {
    let at = err.offset().min(text.len());
    let pad = " ".repeat(text[..at].chars().count());
    anyhow!("{field}: {err}\n    {text}\n    {pad}^")
}

fn potential(field: &str, text: &str, dim: usize) -> Result<PotentialSpec> {
    parse_potential(text, dim).map_err(|e| match &e {
        PotentialError::Parse(p) => diagnose(field, text, p),
        other => anyhow!("{field}: {other}"),
    })
}

fn expression(field: &str, text: &str, dim: usize) -> Result<Expr<f64>> {
    expr::parse(text, dim).map_err(|e| diagnose(field, text, &e))
}

fn domain(field: &str, text: &str) -> Result<ConvexDomain> {
    text.parse().map_err(|e| anyhow!("{field}: {e}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        bail!("{field}: must be positive, got {v}")
    }
}

fn at_least(field: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        bail!("{field}: must be at least {min}, got {v}")
    }
}

fn stage<E: std::fmt::Display>(name: &'static str) -> impl Fn(E) -> anyhow::Error {
    move |e| anyhow!("stage `{name}`: {e}")
}

/// Modulus from `sharp` or an expression in `z` on `[0, half]`.
fn modulus_expr(field: &str, text: &str, half: f64) -> Result<ModulusFn> {
    if text == "sharp" {
        return Ok(sharp_log_modulus(2.0 * half, 4000)?);
    }
    let e = expression(field, text, 1)?;
    Ok(ModulusFn::from_fn(half, 2001, Endpoint::Finite, |z| e.eval(&[z]))?)
}

fn pair_json(r: &PairReport) -> Value {
    json!({
        "worst": r.worst,
        "arg": r.arg.as_ref().map(|(x, y)| json!({ "x": x, "y": y })),
        "checked": r.checked,
        "skipped": r.skipped,
        "excluded": r.excluded,
        "tolerance": r.tolerance,
        "passed": r.passed,
        "seed": r.seed,
        "bins": r.bins,
    })
}

fn pair_evidence(stage: &str, check: &str, r: &PairReport) -> Evidence {
    Evidence::new(stage, check, r.passed)
        .value(r.worst)
        .bound(0.0)
        .tolerance(r.tolerance)
        .detail(json!({
            "checked": r.checked,
            "skipped": r.skipped,
            "excluded": r.excluded,
            "seed": r.seed,
            "bins": r.bins,
        }))
}

fn validate_pairs(cmd: &str, p: &PairArgs) -> Result<()> {
    positive(&format!("{cmd}.h"), p.h)?;
    at_least(&format!("{cmd}.bins"), p.bins, 1)?;
    at_least(&format!("{cmd}.per-bin"), p.per_bin, 1)?;
    if let Some(t) = p.tol {
        if !(t >= 0.0) {
            bail!("{cmd}.tol: must be non-negative, got {t}");
        }
    }
    Ok(())
}

fn sample(grid: &Grid, p: &PairArgs, margin: f64) -> Result<PairSample> {
    if p.all_pairs {
        return Ok(PairSample::all_pairs(grid, margin, p.bins));
    }
    let opts = PairOptions {
        bins: p.bins,
        per_bin: p.per_bin,
        seed: p.seed,
        boundary_margin: margin,
        ..PairOptions::default()
    };
    Ok(PairSample::stratified(grid, &opts)?)
}

fn ground_state(domain: &ConvexDomain, v: &PotentialSpec, h: f64) -> Result<(Grid, Vec<f64>)> {
    let op = discretize(domain, v, h).map_err(stage("discretize"))?;
    let pairs = smallest_eigenpairs(&op, 1, 1e-10).map_err(stage("eigen"))?;
    Ok((op.grid().clone(), pairs.vectors[0].clone()))
}

fn gap1d_json(g: &Gap1d) -> Value {
    let method = match g.method {
        Method::FiniteDifference { n_grid } => json!({ "fd": { "grid": n_grid } }),
        Method::Shooting { samples } => json!({ "shoot": { "samples": samples } }),
    };
    json!({
        "mu0": g.mu0,
        "mu1": g.mu1,
        "gap": g.gap,
        "method": method,
        "residuals": { "mu0": g.ground.mu_residual, "mu1": g.excited.mu_residual },
    })
}

pub fn gap1d_cmd(a: &Gap1dArgs, art: &mut Artifacts, report: &mut Report) -> Result<()> {
    positive("gap1d.diameter", a.diameter)?;
    positive("gap1d.cross-tol", a.cross_tol)?;
    at_least("gap1d.samples", a.samples, 4)?;
    if a.method != MethodArg::Shoot || a.order {
        let min = if a.order { 256 } else { 64 };
        at_least("gap1d.grid", a.grid, min)?;
    }
    if let Some(e) = a.robin_eps {
        positive("gap1d.robin-eps", e)?;
        if a.method == MethodArg::Fd {
            bail!("gap1d.robin-eps: Robin problems need --method shoot");
        }
    }
    let v = potential("gap1d.potential", &a.potential, 1)?;
    let d = a.diameter;
    let shoot = Method::Shooting { samples: a.samples };
    let fd = Method::FiniteDifference { n_grid: a.grid };
    let main = match a.method {
        MethodArg::Fd => gap1d(&v, d, fd, None)?,
        _ => gap1d(&v, d, shoot, a.robin_eps)?,
    };
    let mut results = gap1d_json(&main);
    report.push(
        Evidence::new("eigen", "eigenvalue bracket", true)
            .residual(main.ground.mu_residual.max(main.excited.mu_residual)),
    );

    if a.method == MethodArg::Both {
        if a.robin_eps.is_some() {
            report.caveat("finite differences cover Dirichlet ends only; cross-check skipped");
        } else {
            let f = gap1d(&v, d, fd, None)?;
            let diff = (f.gap - main.gap).abs();
            report.push(
                Evidence::new("cross-check", "|gap_fd - gap_shoot|", diff <= a.cross_tol)
                    .value(diff)
                    .tolerance(a.cross_tol)
                    .detail(json!({ "fd": f.gap, "shoot": main.gap })),
            );
            results["fd"] = gap1d_json(&f);
        }
    }
    if a.order {
        let gaps: Vec<f64> = [a.grid / 4, a.grid / 2, a.grid]
            .iter()
            .map(|&n| gap1d(&v, d, Method::FiniteDifference { n_grid: n }, None).map(|g| g.gap))
            .collect::<Result<_, _>>()?;
        let order = observed_order(gaps[0], gaps[1], gaps[2]);
        results["fd_order"] = json!({ "grids": [a.grid / 4, a.grid / 2, a.grid], "gaps": gaps, "order": order });
    }
    results["diameter"] = json!(d);
    report.results = results;

    let (g, e) = (&main.ground, &main.excited);
    art.table(
        "gap1d_eigenfunctions.csv",
        "z,phi0,phi1",
        (0..g.values().len()).map(|j| vec![g.z(j), g.values()[j], e.value_at(g.z(j))]),
    )?;
    Ok(())
}

pub fn gapnd_cmd(a: &GapndArgs, art: &mut Artifacts, report: &mut Report) -> Result<()> {
    positive("gapnd.h", a.h)?;
    positive("gapnd.tol", a.tol)?;
    at_least("gapnd.k", a.k, 2)?;
    let dom = domain("gapnd.domain", &a.domain)?;
    let v = potential("gapnd.potential", &a.potential, dom.dimension())?;
    let profile = a
        .profile
        .as_deref()
        .map(|p| potential("gapnd.profile", p, 1))
        .transpose()?;
    let opts = EigenOptions {
        tol: a.tol,
        ..EigenOptions::default()
    };
    let r = fundamental_gap_with(&dom, &v, a.h, &opts)?;
    let d = dom.diameter();
    let max_res = |res: &[f64]| res.iter().take(2).fold(0.0f64, |m, &x| m.max(x));

    let mut results = json!({
        "lambda0": r.lambda0,
        "lambda1": r.lambda1,
        "gap": r.gap,
        "richardson": {
            "gap": r.richardson,
            "lambda0": r.richardson_lambda0,
            "lambda1": r.richardson_lambda1,
        },
        "error_indicator": r.error_indicator,
        "diameter": d,
        "levels": ([&r.coarse, &r.fine].iter().map(|l| json!({
            "h": l.h,
            "nodes": l.nodes,
            "lambda0": l.lambda0,
            "lambda1": l.lambda1,
            "gap": l.gap,
            "multiplicity1": l.multiplicity1,
            "residual": max_res(&l.residuals),
            "iterations": l.iterations,
        })).collect::<Vec<_>>()),
    });
    if a.k > 2 {
        let op = discretize(&dom, &v, r.h)?;
        let pairs = fundgap::schrod_nd::smallest_eigenpairs_with(&op, a.k, &opts, None)?;
        results["spectrum"] = json!(pairs.values);
    }
    report.push(
        Evidence::new("eigen", "relative eigen residual", max_res(&r.fine.residuals) <= a.tol)
            .residual(max_res(&r.fine.residuals))
            .tolerance(a.tol),
    );
    let (bound, label) = match &profile {
        Some(p) => (gap1d(p, d, Method::Shooting { samples: 400 }, None)?.gap, "gap1d of the profile"),
        None => {
            report.caveat("bound 3π²/D² assumes V is convex");
            (3.0 * PI * PI / (d * d), "3π²/D²")
        }
    };
    results["bound"] = json!({ "value": bound, "source": label });
    report.push(
        Evidence::new("comparison", "λ1 - λ0 ≥ bound", r.richardson >= bound)
            .value(r.richardson)
            .bound(bound)
            .tolerance(r.error_indicator),
    );
    if r.fine.multiplicity1 > 1 {
        report.caveat(format!("λ1 has multiplicity {} on the fine grid", r.fine.multiplicity1));
    }
    report.results = results;
    art.grid("phi0.csv", &r.grid, &r.phi0)?;
    art.grid("phi1.csv", &r.grid, &r.phi1)?;
    Ok(())
}

fn shoot_mode(mode: ModeArg, robin: Option<f64>) -> ShootMode<f64> {
    match (mode, robin) {
        (ModeArg::Ground, None) => ShootMode::DirichletGround,
        (ModeArg::Excited, None) => ShootMode::DirichletExcited,
        (ModeArg::Ground, Some(e)) => ShootMode::RobinGround(e),
        (ModeArg::Excited, Some(e)) => ShootMode::RobinExcited(e),
    }
}

pub fn prufer_cmd(a: &PruferArgs, art: &mut Artifacts, report: &mut Report) -> Result<()> {
    positive("prufer.diameter", a.diameter)?;
    at_least("prufer.samples", a.samples, 2)?;
    if let Some(e) = a.robin_eps {
        positive("prufer.robin-eps", e)?;
    }
    if !a.mu.is_finite() {
        bail!("prufer.mu: must be finite");
    }
    let v = potential("prufer.potential", &a.potential, 1)?;
    let mode = shoot_mode(a.mode, a.robin_eps);
    let path = prufer_shoot(&v, a.mu, mode.initial_angle(), a.diameter, a.samples)?;
    let target = mode.target_angle();
    report.results = json!({
        "mu": a.mu,
        "initial_angle": path.q0,
        "terminal_angle": path.terminal(),
        "target_angle": target,
        "terminal_minus_target": path.terminal() - target,
        "ode_residual": path.ode_residual,
    });
    report.push(Evidence::new("ode", "Prüfer equation residual", true).residual(path.ode_residual));
    art.table(
        "prufer.csv",
        "z,q",
        path.samples().iter().enumerate().map(|(i, &q)| vec![path.z(i), q]),
    )?;
    Ok(())
}

pub fn convexity_cmd(a: &ConvexityArgs, art: &mut Artifacts, report: &mut Report) -> Result<()> {
    let cmd = "moduli.convexity";
    validate_pairs(cmd, &a.pairs)?;
    let dom = domain(&format!("{cmd}.domain"), &a.pairs.domain)?;
    let v = potential(&format!("{cmd}.potential"), &a.potential, dom.dimension())?;
    let vt = potential(&format!("{cmd}.profile"), &a.profile, 1)?;
    let grid = Grid::new(dom.clone(), a.pairs.h)?;
    let s = sample(&grid, &a.pairs, 0.0)?;
    let modulus = comparison_modulus(&vt, dom.diameter(), 2001)?;
    let tol = a.pairs.tol.unwrap_or(1e-8);
    let r = check_convexity_modulus(&v, &modulus, &s, tol)?;
    report.push(pair_evidence("convexity", "2Ṽ'(|y-x|/2) - (∇V(y) - ∇V(x))·e ≤ 0", &r));
    let mut results = json!({ "report": pair_json(&r), "pairs": s.len(), "nodes": grid.len() });
    if let Some(bins) = a.optimal {
        at_least(&format!("{cmd}.optimal"), bins, 1)?;
        let opt = optimal_convexity_modulus(&v, bins, &s)?;
        let table: Vec<Value> = opt.iter().map(|(z, w)| json!([z, w])).collect();
        results["optimal"] = json!(table);
        art.table("optimal_modulus.csv", "z,modulus", opt.iter().map(|(z, w)| vec![z, w]))?;
    }
    report.results = results;
    Ok(())
}

pub fn logconc_cmd(a: &LogconcArgs, _art: &mut Artifacts, report: &mut Report) -> Result<()> {
    let cmd = "moduli.logconc";
    validate_pairs(cmd, &a.pairs)?;
    if !(a.margin >= 0.0) {
        bail!("{cmd}.margin: must be non-negative, got {}", a.margin);
    }
    let dom = domain(&format!("{cmd}.domain"), &a.pairs.domain)?;
    let d = dom.diameter();
    let v = potential(&format!("{cmd}.potential"), &a.potential, dom.dimension())?;
    let psi = match a.psi.as_str() {
        "ground" => {
            let vt = potential(&format!("{cmd}.profile"), &a.profile, 1)?;
            log_derivative(&solve_eigen_shooting(&vt, d, ShootMode::DirichletGround, 2000)?)?
        }
        other => modulus_expr(&format!("{cmd}.psi"), other, d / 2.0)?,
    };
    let h = a.pairs.h;
    let (grid, phi) = ground_state(&dom, &v, h)?;
    let tol = match a.pairs.tol {
        Some(t) => t,
        None => {
            let cal = calibrate_pair_tolerance(h, 2.0)?;
            report.push(
                Evidence::new("calibration", "worst symmetric-pair violation, V = 0 on (-1/2, 1/2)", true)
                    .value(cal.worst_1d)
                    .detail(json!({ "safety": cal.safety, "c_tol": cal.c_tol, "h": cal.h })),
            );
            cal.tolerance(h)
        }
    };
    let s = sample(&grid, &a.pairs, a.margin * h)?;
    let r = check_log_concavity(&grid, &phi, &psi, &s, tol)?;
    report.push(pair_evidence("log-concavity", "(∇log φ0(y) - ∇log φ0(x))·e - 2ψ(|y-x|/2) ≤ 0", &r));
    report.results = json!({
        "report": pair_json(&r),
        "pairs": s.len(),
        "nodes": grid.len(),
        "margin": a.margin * h,
        "psi": a.psi,
    });
    Ok(())
}

pub fn continuity_cmd(a: &ContinuityArgs, _art: &mut Artifacts, report: &mut Report) -> Result<()> {
    let cmd = "moduli.continuity";
    validate_pairs(cmd, &a.pairs)?;
    let dom = domain(&format!("{cmd}.domain"), &a.pairs.domain)?;
    let f = expression(&format!("{cmd}.function"), &a.function, dom.dimension())?;
    let eta = modulus_expr(&format!("{cmd}.eta"), &a.eta, dom.diameter() / 2.0)?;
    let grid = Grid::new(dom, a.pairs.h)?;
    let values: Vec<f64> = grid.points().map(|p| f.eval(p)).collect();
    let s = sample(&grid, &a.pairs, 0.0)?;
    let r = check_modulus_of_continuity(&grid, &values, &eta, &s, a.pairs.tol.unwrap_or(0.0))?;
    report.push(pair_evidence("continuity", "|f(y) - f(x)| - 2η(|y-x|/2) ≤ 0", &r));
    report.results = json!({ "report": pair_json(&r), "pairs": s.len(), "nodes": grid.len() });
    Ok(())
}

pub fn contraction_cmd(a: &ContractionArgs, _art: &mut Artifacts, report: &mut Report) -> Result<()> {
    let cmd = "moduli.contraction";
    validate_pairs(cmd, &a.pairs)?;
    if !(a.margin >= 0.0) {
        bail!("{cmd}.margin: must be non-negative, got {}", a.margin);
    }
    let dom = domain(&format!("{cmd}.domain"), &a.pairs.domain)?;
    let dim = dom.dimension();
    let h = a.pairs.h;
    let omega = modulus_expr(&format!("{cmd}.omega"), &a.omega, dom.diameter() / 2.0)?;
    let (grid, field) = if a.field == "log-ground" {
        let v = potential(&format!("{cmd}.potential"), &a.potential, dim)?;
        let (grid, phi) = ground_state(&dom, &v, h)?;
        let g = grad_log(&grid, &phi)?;
        (grid, g)
    } else {
        let parts: Vec<&str> = a.field.split(';').collect();
        if parts.len() != dim {
            bail!("{cmd}.field: expected {dim} components separated by `;`, got {}", parts.len());
        }
        let comps = parts
            .iter()
            .map(|p| expression(&format!("{cmd}.field"), p.trim(), dim))
            .collect::<Result<Vec<_>>>()?;
        let grid = Grid::new(dom, h)?;
        let field = grid.points().flat_map(|p| comps.iter().map(|c| c.eval(p)).collect::<Vec<_>>()).collect();
        (grid, field)
    };
    let s = sample(&grid, &a.pairs, a.margin * h)?;
    let r = check_contraction_modulus(&grid, &field, &omega, &s, a.pairs.tol.unwrap_or(0.0))?;
    report.push(pair_evidence("contraction", "(X(y) - X(x))·e - 2ω(|y-x|/2) ≤ 0", &r));
    report.results = json!({ "report": pair_json(&r), "pairs": s.len(), "nodes": grid.len(), "margin": a.margin * h });
    Ok(())
}

/// Non-increase tolerance for ψ between steps.
pub const PSI_MONOTONE_TOL: f64 = 1e-9;
/// Riccati stationarity target at the end state.
pub const PSI_STATIONARY_TOL: f64 = 1e-6;

struct PsiRun {
    k: f64,
    barrier: Barrier,
    evolution: PsiEvolution<f64>,
    target: ModulusFn,
    error: f64,
    residual: f64,
}

/// `sup |ψ(T) - target|` over nodes with `z ≤ upto`.
pub fn sup_distance(ev: &PsiEvolution<f64>, target: &ModulusFn, upto: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, p) in ev.last().psi.iter().enumerate() {
        let z = ev.z(i);
        if z > upto {
            break;
        }
        worst = worst.max((p - target.eval(z)?).abs());
    }
    Ok(worst)
}

/// Stationarity residual of the final state on `z ≤ upto`: deviation of
/// `ψ' + ψ² - Ṽ` from its mean there.
pub fn window_residual(v: &PotentialSpec, ev: &PsiEvolution<f64>, upto: f64) -> f64 {
    let flux = riccati_expression(v, &ev.last().psi, ev.spacing);
    let inside: Vec<f64> = flux.iter().enumerate().filter(|(i, _)| ev.z(*i) <= upto).map(|(_, g)| *g).collect();
    let mean = inside.iter().sum::<f64>() / inside.len() as f64;
    inside.iter().fold(0.0, |m, g| m.max((g - mean).abs()))
}

fn psi_run(a: &EvolvePsiArgs, v: &PotentialSpec, k: f64) -> Result<PsiRun> {
    let d = a.diameter;
    let barrier = barrier_supersolution(v, k, a.s, d, 2 * a.cells)?;
    let opts = PsiOptions {
        cells: a.cells,
        snapshots: 10,
    };
    let evolution = evolve_psi(v, d, &barrier.psi, k, a.t_end, a.dt, &opts)?;
    let target = log_derivative(&solve_eigen_shooting(v, d, ShootMode::RobinGround(1.0 / k), 2000)?)?;
    let error = sup_distance(&evolution, &target, a.fraction * d / 2.0)?;
    let residual = window_residual(v, &evolution, a.fraction * d / 2.0);
    Ok(PsiRun {
        k,
        barrier,
        evolution,
        target,
        error,
        residual,
    })
}

pub fn evolve_psi_cmd(a: &EvolvePsiArgs, art: &mut Artifacts, report: &mut Report) -> Result<()> {
    positive("evolve-psi.diameter", a.diameter)?;
    positive("evolve-psi.t-end", a.t_end)?;
    positive("evolve-psi.dt", a.dt)?;
    positive("evolve-psi.conv-tol", a.conv_tol)?;
    if !(a.s >= 0.0) {
        bail!("evolve-psi.s: must be non-negative, got {}", a.s);
    }
    if !(a.fraction > 0.0 && a.fraction <= 1.0) {
        bail!("evolve-psi.fraction: must lie in (0, 1], got {}", a.fraction);
    }
    at_least("evolve-psi.cells", a.cells, 8)?;
    if a.k.is_empty() {
        bail!("evolve-psi.k: need at least one value");
    }
    for &k in &a.k {
        positive("evolve-psi.k", k)?;
    }
    let v = potential("evolve-psi.profile", &a.profile, 1)?;

    // independent trajectories, one thread each
    let runs: Vec<Result<PsiRun>> = std::thread::scope(|s| {
        let handles: Vec<_> = a.k.iter().map(|&k| {
            let v = &v;
            s.spawn(move || psi_run(a, v, k))
        }).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("ψ evolution thread panicked"))))
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut per_k = Vec::new();
    for r in &runs {
        let ev = &r.evolution;
        let tag = format!("k = {}", r.k);
        report.push(
            Evidence::new("monotone", &format!("ψ non-increasing in t ({tag})"), ev.monotone(PSI_MONOTONE_TOL))
                .value(ev.max_increase)
                .bound(0.0)
                .tolerance(PSI_MONOTONE_TOL)
                .detail(json!({ "t": ev.max_increase_at.0, "z": ev.max_increase_at.1 })),
        );
        report.push(
            Evidence::new("convergence", &format!("sup |ψ(T) - (log φ̃0,1/k)'| ({tag})"), r.error < a.conv_tol)
                .value(r.error)
                .tolerance(a.conv_tol),
        );
        report.push(
            Evidence::new(
                "stationarity",
                &format!("|ψ' + ψ² - Ṽ + μ| at T on the window ({tag})"),
                r.residual < PSI_STATIONARY_TOL,
            )
            .residual(r.residual)
            .tolerance(PSI_STATIONARY_TOL),
        );
        if let Some(lb) = &r.barrier.lower_bound {
            report.push(
                Evidence::new("barrier", &format!("explicit lower bound ({tag})"), lb.passed())
                    .value(lb.worst)
                    .bound(0.0)
                    .tolerance(lb.tolerance),
            );
        }
        if ev.dt_reduced {
            report.caveat(format!("{tag}: dt reduced from {} to {} by the transport CFL rule", ev.dt_requested, ev.dt));
        }
        per_k.push(json!({
            "k": r.k,
            "mu_robin": r.barrier.mu_robin,
            "mu_fit": ev.mu,
            "dt": ev.dt,
            "dt_reduced": ev.dt_reduced,
            "steps": ev.steps,
            "spacing": ev.spacing,
            "max_increase": ev.max_increase,
            "error": r.error,
            "stationarity_residual": r.residual,
            "stationarity_residual_full": ev.stationarity_residual,
            "final_drift": ev.final_drift,
        }));
        let last = &ev.last().psi;
        art.table(
            &format!("psi_k{}.csv", r.k),
            "z,psi0,psi,target",
            (0..last.len()).map(|i| {
                let z = ev.z(i);
                vec![
                    z,
                    ev.states[0].psi[i],
                    last[i],
                    r.target.eval(z).unwrap_or(f64::NAN),
                ]
            }),
        )?;
    }

    let mut sorted: Vec<&PsiRun> = runs.iter().collect();
    sorted.sort_by(|x, y| x.k.total_cmp(&y.k));
    if sorted.len() > 1 {
        let worst = sorted
            .windows(2)
            .flat_map(|w| {
                let (lo, hi) = (&w[0].evolution.last().psi, &w[1].evolution.last().psi);
                hi.iter().zip(lo).map(|(b, a)| b - a).collect::<Vec<_>>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        report.push(
            Evidence::new("monotone", "ψ non-increasing in k at T", worst <= PSI_MONOTONE_TOL)
                .value(worst)
                .bound(0.0)
                .tolerance(PSI_MONOTONE_TOL),
        );
    }
    report.results = json!({
        "diameter": a.diameter,
        "t_end": a.t_end,
        "cells": a.cells,
        "window": [0.0, a.fraction * a.diameter / 2.0],
        "runs": per_k,
    });
    Ok(())
}

/// `2∇log φ0` of the Dirichlet Laplacian on a box, at the nodes.
fn log_ground_drift(dom: &ConvexDomain, grid: &Grid) -> Result<Vec<f64>> {
    let (centres, widths): (Vec<f64>, Vec<f64>) = match dom.kind() {
        DomainKind::Interval { a, b } => (vec![(a + b) / 2.0], vec![b - a]),
        DomainKind::Rectangle { widths } => (vec![0.0; widths.len()], widths.clone()),
        _ => bail!("heat-drift.drift: `log-ground` needs an interval or rectangle"),
    };
    Ok(grid
        .points()
        .flat_map(|p| {
            p.iter()
                .zip(centres.iter().zip(&widths))
                .map(|(x, (c, w))| -2.0 * (PI / w) * (PI * (x - c) / w).tan())
                .collect::<Vec<_>>()
        })
        .collect())
}

pub fn heat_drift_cmd(a: &HeatDriftArgs, art: &mut Artifacts, report: &mut Report) -> Result<()> {
    positive("heat-drift.h", a.h)?;
    positive("heat-drift.t-end", a.t_end)?;
    positive("heat-drift.dt", a.dt)?;
    positive("heat-drift.rate-tol", a.rate_tol)?;
    let dom = domain("heat-drift.domain", &a.domain)?;
    let dim = dom.dimension();
    let grid = neumann_grid(&dom, a.h).map_err(|e| anyhow!("heat-drift.domain: {e}"))?;
    let init = expression("heat-drift.initial", &a.initial, dim)?;
    let v0: Vec<f64> = grid.points().map(|p| init.eval(p)).collect();
    let field = match a.drift.as_deref() {
        None => None,
        Some("log-ground") => Some(log_ground_drift(&dom, &grid)?),
        Some(text) => {
            let parts: Vec<&str> = text.split(';').collect();
            if parts.len() != dim {
                bail!("heat-drift.drift: expected {dim} components separated by `;`, got {}", parts.len());
            }
            let comps = parts
                .iter()
                .map(|p| expression("heat-drift.drift", p.trim(), dim))
                .collect::<Result<Vec<_>>>()?;
            Some(grid.points().flat_map(|p| comps.iter().map(|c| c.eval(p)).collect::<Vec<_>>()).collect())
        }
    };
    let drift = match &field {
        Some(x) => Drift::Static(x),
        None => Drift::None,
    };
    let steps = (a.t_end / a.dt).ceil() as usize;
    let store_every = (steps / 400).max(1);
    let tr = heat_drift_neumann(&grid, drift, &v0, a.t_end, a.dt, store_every)?;
    let osc: Vec<f64> = tr.snapshots.iter().map(|s| oscillation(s, None)).collect();
    let window = auto_window(&tr.times, &osc).map_err(stage("fit"))?;
    let fit = osc_decay_rate(&tr.times, &osc, window).map_err(stage("fit"))?;
    let rise = osc.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    if let Some(expect) = a.expect {
        let err = (fit.rate - expect).abs();
        report.push(
            Evidence::new("fit", "|rate - expected| ≤ rate_tol·|expected|", err <= a.rate_tol * expect.abs())
                .value(fit.rate)
                .bound(expect)
                .tolerance(a.rate_tol * expect.abs())
                .residual(fit.rms),
        );
    } else {
        report.push(Evidence::new("fit", "log-linear fit", true).value(fit.rate).residual(fit.rms));
    }
    report.results = json!({
        "nodes": grid.len(),
        "h": a.h,
        "dt": tr.dt,
        "steps": tr.steps,
        "store_every": store_every,
        "fit": { "rate": fit.rate, "intercept": fit.intercept, "window": [fit.window.0, fit.window.1], "points": fit.points, "rms": fit.rms },
        "osc_initial": osc[0],
        "osc_final": osc[osc.len() - 1],
        "osc_max_rise": rise,
    });
    art.table("osc.csv", "t,osc", tr.times.iter().zip(&osc).map(|(&t, &o)| vec![t, o]))?;
    Ok(())
}

pub fn gap_decay_cmd(a: &GapDecayArgs, art: &mut Artifacts, report: &mut Report) -> Result<()> {
    positive("gap-decay.h", a.h)?;
    positive("gap-decay.dt", a.dt)?;
    if let Some(t) = a.t_end {
        positive("gap-decay.t-end", t)?;
    }
    at_least("gap-decay.per-bin", a.per_bin, 1)?;
    let dom = domain("gap-decay.domain", &a.domain)?;
    let v = potential("gap-decay.potential", &a.potential, dom.dimension())?;
    let vt = potential("gap-decay.profile", &a.profile, 1)?;
    let cfg = DecayConfig {
        h: a.h,
        dt: a.dt,
        t_end: a.t_end,
        pairs: PairOptions {
            seed: a.seed,
            per_bin: a.per_bin,
            ..PairOptions::default()
        },
        ..DecayConfig::default()
    };
    if !convexity_stage(&dom, &v, &vt, a.h, &cfg.pairs, cfg.convexity_tol, report)? {
        report.caveat("premise failed; later stages not run");
        return Ok(());
    }
    let r = gap_from_decay(&dom, &v, &vt, &cfg)?;
    let rel = (r.fit.rate - r.gap_nd).abs() / r.gap_nd;
    report.push(
        Evidence::new("fit", "decay rate vs λ1 - λ0 (relative)", true)
            .value(r.fit.rate)
            .bound(r.gap_nd)
            .residual(rel)
            .detail(json!({ "max_drift_residual": r.max_drift_residual })),
    );
    report.push(
        Evidence::new("comparison", "rate ≥ μ1 - μ0", r.passed)
            .value(r.fit.rate)
            .bound(r.gap_1d)
            .tolerance(cfg.rate_tol * r.gap_1d),
    );
    report.results = json!({
        "lambda0": r.lambda0,
        "lambda1": r.lambda1,
        "gap_nd": r.gap_nd,
        "gap_1d": r.gap_1d,
        "fit": { "rate": r.fit.rate, "intercept": r.fit.intercept, "window": [r.fit.window.0, r.fit.window.1], "points": r.fit.points, "rms": r.fit.rms },
        "relative_error": rel,
        "max_drift_residual": r.max_drift_residual,
        "t_end": r.t_end,
        "dt": r.dt,
        "seed": a.seed,
    });
    let _ = art;
    Ok(())
}

/// Stage 1 of the chain. Returns whether the premise holds.
fn convexity_stage(
    dom: &ConvexDomain,
    v: &PotentialSpec,
    vt: &PotentialSpec,
    h: f64,
    pairs: &PairOptions<f64>,
    tol: f64,
    report: &mut Report,
) -> Result<bool> {
    vt.ensure_even(dom.diameter()).map_err(stage("convexity"))?;
    let grid = Grid::new(dom.clone(), h).map_err(stage("convexity"))?;
    let s = PairSample::stratified(&grid, pairs).map_err(stage("convexity"))?;
    let modulus = comparison_modulus(vt, dom.diameter(), 2001).map_err(stage("convexity"))?;
    let r = check_convexity_modulus(v, &modulus, &s, tol).map_err(stage("convexity"))?;
    report.push(pair_evidence("convexity", "Ṽ' is a modulus of convexity for V", &r));
    Ok(r.passed)
}

pub fn verify_cmd(a: &VerifyArgs, art: &mut Artifacts, report: &mut Report) -> Result<()> {
    positive("verify.h", a.h)?;
    positive("verify.cross-tol", a.cross_tol)?;
    if !(a.convexity_tol >= 0.0) {
        bail!("verify.convexity-tol: must be non-negative, got {}", a.convexity_tol);
    }
    at_least("verify.per-bin", a.per_bin, 1)?;
    at_least("verify.fd-cells", a.fd_cells, 64)?;
    let dom = domain("verify.domain", &a.domain)?;
    let d = dom.diameter();
    let v = potential("verify.potential", &a.potential, dom.dimension())?;
    let vt = potential("verify.profile", &a.profile, 1)?;
    let pairs = PairOptions {
        seed: a.seed,
        per_bin: a.per_bin,
        ..PairOptions::default()
    };
    if !convexity_stage(&dom, &v, &vt, a.h, &pairs, a.convexity_tol, report)? {
        report.caveat("premise failed; later stages not run");
        report.results = json!({ "stage_reached": "convexity" });
        return Ok(());
    }

    let nd = fundamental_gap_with(&dom, &v, a.h, &EigenOptions::default()).map_err(stage("gapnd"))?;
    report.push(
        Evidence::new("gapnd", "Richardson error indicator", true)
            .value(nd.richardson)
            .residual(nd.error_indicator),
    );

    let shoot = gap1d(&vt, d, Method::Shooting { samples: 400 }, None).map_err(stage("gap1d"))?;
    let fd = gap1d(&vt, d, Method::FiniteDifference { n_grid: a.fd_cells }, None).map_err(stage("gap1d"))?;
    let diff = (fd.gap - shoot.gap).abs();
    report.push(
        Evidence::new("gap1d", "|gap_fd - gap_shoot|", diff <= a.cross_tol)
            .value(diff)
            .tolerance(a.cross_tol)
            .detail(json!({ "fd": fd.gap, "shoot": shoot.gap, "fd_cells": a.fd_cells })),
    );

    report.push(
        Evidence::new("comparison", "λ1 - λ0 ≥ μ1 - μ0", nd.richardson >= shoot.gap)
            .value(nd.richardson)
            .bound(shoot.gap)
            .tolerance(nd.error_indicator),
    );
    report.results = json!({
        "stage_reached": "comparison",
        "diameter": d,
        "gapnd": {
            "lambda0": nd.lambda0,
            "lambda1": nd.lambda1,
            "gap": nd.gap,
            "richardson": nd.richardson,
            "error_indicator": nd.error_indicator,
            "h": [nd.coarse.h, nd.fine.h],
            "multiplicity1": nd.fine.multiplicity1,
        },
        "gap1d": { "shoot": gap1d_json(&shoot), "fd": gap1d_json(&fd) },
        "margin": nd.richardson - shoot.gap,
    });
    art.grid("phi0.csv", &nd.grid, &nd.phi0)?;
    Ok(())
}
