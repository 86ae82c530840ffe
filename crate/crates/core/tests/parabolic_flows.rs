use std::f64::consts::PI;

use fundgap::moduli::{PairOptions, PairSample};
use fundgap::modulus::Endpoint;
use fundgap::parabolic::*;
use fundgap::schrod_nd::{discretize, smallest_eigenpairs};
use fundgap::sturm1d::{barrier_supersolution, log_derivative, solve_eigen_shooting, ShootMode};
use fundgap::{ConvexDomain, ModulusFn, PotentialSpec};

fn sup_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn ground_state_flow_is_exponential() {
    let op = discretize(&ConvexDomain::square(1.0).unwrap(), &PotentialSpec::zero(2), 1.0 / 32.0).unwrap();
    let pairs = smallest_eigenpairs(&op, 1, 1e-12).unwrap();
    let (lambda, phi) = (pairs.values[0], &pairs.vectors[0]);
    let t_end = 1.0 / lambda;
    let deviation = |steps: usize| {
        let tr = heat_dirichlet(&op, phi, t_end, t_end / steps as f64, steps).unwrap();
        let exact: Vec<f64> = phi.iter().map(|p| p * (-lambda * t_end).exp()).collect();
        assert!(tr.min_value > 0.0);
        sup_rel(tr.last(), &exact)
    };
    let (coarse, fine) = (deviation(50), deviation(100));
    assert!(fine < 1e-4, "{fine}");
    assert!(coarse / fine > 3.5, "{coarse} {fine}");
}

#[test]
fn ratio_of_identical_flows_is_one() {
    let op = discretize(&ConvexDomain::disc([0.0, 0.0], 1.0).unwrap(), &PotentialSpec::zero(2), 1.0 / 16.0).unwrap();
    let u0: Vec<f64> = op.grid().points().map(|p| 1.0 - p[0] * p[0] - p[1] * p[1]).collect();
    let tr = heat_dirichlet(&op, &u0, 0.05, 0.01, 1).unwrap();
    let r = drift_ratio(&tr, &tr).unwrap();
    assert!(r.trajectory.snapshots.iter().flatten().all(|&v| v == 1.0));
    assert_eq!(r.max_residual, 0.0);
    assert!(r.flagged.iter().any(|&f| f));
}

fn eigen_ratio(h: f64, dt: f64) -> (RatioTrajectory<f64>, f64) {
    let op = discretize(&ConvexDomain::interval(-0.5, 0.5).unwrap(), &PotentialSpec::zero(1), h).unwrap();
    let pairs = smallest_eigenpairs(&op, 2, 1e-10).unwrap();
    let u0 = heat_dirichlet(&op, &pairs.vectors[0], 0.2, dt, 1).unwrap();
    let u1 = heat_dirichlet(&op, &pairs.vectors[1], 0.2, dt, 1).unwrap();
    (drift_ratio(&u1, &u0).unwrap(), pairs.values[1] - pairs.values[0])
}

#[test]
fn eigenflow_ratio_decays_at_the_gap() {
    let (ratio, gap) = eigen_ratio(1.0 / 256.0, 1e-4);
    let osc = ratio.oscillation();
    let fit = osc_decay_rate(&ratio.trajectory.times, &osc, (0.0, 0.2)).unwrap();
    assert!((fit.rate - gap).abs() < 1e-3, "{} vs {gap}", fit.rate);
    assert!((gap - 3.0 * PI * PI).abs() < 1e-2);
}

#[test]
fn drift_equation_residual_shrinks_under_refinement() {
    let residuals: Vec<f64> = [(1.0 / 64.0, 2e-3), (1.0 / 128.0, 1e-3), (1.0 / 256.0, 5e-4)]
        .iter()
        .map(|&(h, dt)| eigen_ratio(h, dt).0.max_residual)
        .collect();
    // max norm over nodes 2h inside: the drift term's O(h²/dist) error caps
    // the order near the boundary
    assert!(residuals[0] / residuals[1] > 1.8, "{residuals:?}");
    assert!(residuals[1] / residuals[2] > 1.8, "{residuals:?}");
}

#[test]
fn neumann_first_mode_decays_at_pi_squared() {
    let grid = neumann_grid(&ConvexDomain::interval(-0.5, 0.5).unwrap(), 1.0 / 256.0).unwrap();
    let v0: Vec<f64> = grid.points().map(|p| (PI * p[0]).sin()).collect();
    let tr = heat_drift_neumann(&grid, Drift::None, &v0, 0.5, 1e-4, 10).unwrap();
    let osc: Vec<f64> = tr.snapshots.iter().map(|s| oscillation(s, None)).collect();
    let fit = osc_decay_rate(&tr.times, &osc, (0.0, 0.5)).unwrap();
    assert!((fit.rate - PI * PI).abs() < 1e-3 * PI * PI, "{}", fit.rate);
}

fn drifted_trajectory() -> Trajectory<f64> {
    let grid = neumann_grid(&ConvexDomain::interval(-0.5, 0.5).unwrap(), 1.0 / 512.0).unwrap();
    let drift: Vec<f64> = grid.points().map(|p| -2.0 * PI * (PI * p[0]).tan()).collect();
    let v0: Vec<f64> = grid.points().map(|p| 2.0 * (PI * p[0]).sin()).collect();
    heat_drift_neumann(&grid, Drift::Static(&drift), &v0, 0.2, 5e-5, 40).unwrap()
}

#[test]
fn drift_by_log_ground_state_gives_the_1d_gap() {
    let tr = drifted_trajectory();
    let osc: Vec<f64> = tr.snapshots.iter().map(|s| oscillation(s, None)).collect();
    let fit = osc_decay_rate(&tr.times, &osc, (0.0, 0.2)).unwrap();
    let exact = 3.0 * PI * PI;
    assert!((fit.rate - exact).abs() < 1e-3 * exact, "{}", fit.rate);

    let dynamic = |_t: f64, x: &[f64], out: &mut [f64]| out[0] = -2.0 * PI * (PI * x[0]).tan();
    let grid = tr.grid.clone();
    let v0 = tr.snapshots[0].clone();
    let tr2 = heat_drift_neumann(&grid, Drift::Dynamic(&dynamic), &v0, 0.01, 5e-5, 1).unwrap();
    let tr1 = heat_drift_neumann(
        &grid,
        Drift::Static(&grid.points().map(|p| -2.0 * PI * (PI * p[0]).tan()).collect::<Vec<_>>()),
        &v0,
        0.01,
        5e-5,
        1,
    )
    .unwrap();
    assert!(sup_rel(tr2.last(), tr1.last()) < 1e-12);
}

#[test]
fn modulus_is_preserved_along_the_drift_flow() {
    let tr = drifted_trajectory();
    let sample = PairSample::all_pairs(&tr.grid, 0.0, 16);
    let family = |c: f64| {
        move |t: f64| -> Result<ModulusFn, ParabolicError> {
            let a = c * (-3.0 * PI * PI * t).exp();
            Ok(ModulusFn::from_fn(0.5, 2001, Endpoint::Finite, |z| a * 2.0 * (PI * z).sin())?)
        }
    };
    let report = modulus_preservation_test(&tr, family(1.0), &sample, 1e-4).unwrap();
    assert!(report.passed, "{:?}", report.first_failure);
    let report = modulus_preservation_test(&tr, family(0.5), &sample, 1e-4).unwrap();
    assert_eq!(report.first_failure, Some(0.0));

    let mut flat = tr.clone();
    flat.snapshots.iter_mut().for_each(|s| s.iter_mut().for_each(|v| *v = 4.0));
    let zero = |_t: f64| Ok(ModulusFn::new(0.5, vec![0.0, 0.0])?);
    assert!(modulus_preservation_test(&flat, zero, &sample, 0.0).unwrap().passed);
}

#[test]
fn robin_log_derivative_is_stationary() {
    let v = PotentialSpec::zero(1);
    let k = 10.0;
    let psi0 = log_derivative(&solve_eigen_shooting(&v, 1.0, ShootMode::RobinGround(1.0 / k), 2000).unwrap()).unwrap();
    let ev = evolve_psi(&v, 1.0, &psi0, k, 1.0, 1e-3, &PsiOptions { cells: 1000, snapshots: 4 }).unwrap();
    let drift = sup_rel(&ev.last().psi, &ev.states[0].psi) * k;
    assert!(drift < 1e-8, "{drift}");
    for s in &ev.states {
        assert_eq!(s.psi[0], 0.0);
        assert_eq!(*s.psi.last().unwrap(), -k);
    }
    assert!(ev.dt_reduced && ev.dt <= 0.25 * ev.spacing / k);
}

#[test]
fn barrier_flows_down_to_the_robin_profile() {
    let v = PotentialSpec::zero(1);
    let k = 1.0;
    let target = log_derivative(&solve_eigen_shooting(&v, 1.0, ShootMode::RobinGround(1.0 / k), 2000).unwrap()).unwrap();
    let barrier = barrier_supersolution(&v, k, 3.0, 1.0, 1001).unwrap();
    let ev = evolve_psi(&v, 1.0, &barrier.psi, k, 1.0, 1e-3, &PsiOptions { cells: 500, snapshots: 10 }).unwrap();
    let err = ev
        .last()
        .psi
        .iter()
        .enumerate()
        .filter(|(i, _)| ev.z(*i) <= 0.45)
        .fold(0.0f64, |m, (i, p)| m.max((p - target.eval(ev.z(i)).unwrap()).abs()));
    assert!(err < 1e-6, "{err}");
    assert!(ev.monotone(1e-9), "{} at {:?}", ev.max_increase, ev.max_increase_at);
    assert!(ev.stationarity_residual < 1e-6, "{}", ev.stationarity_residual);
    assert!((ev.mu - target_mu(k)).abs() < 1e-6);
}

fn target_mu(k: f64) -> f64 {
    solve_eigen_shooting(&PotentialSpec::zero(1), 1.0, ShootMode::RobinGround(1.0 / k), 200)
        .unwrap()
        .mu
}

#[test]
fn decay_pipeline_square_and_harmonic() {
    let cfg = DecayConfig {
        h: 1.0 / 32.0,
        ..DecayConfig::default()
    };
    let r = gap_from_decay(&ConvexDomain::square(1.0).unwrap(), &PotentialSpec::zero(2), &PotentialSpec::zero(1), &cfg).unwrap();
    assert!(r.passed && r.convexity.passed);
    assert!((r.fit.rate - r.gap_nd).abs() < 1e-2 * r.gap_nd, "{} vs {}", r.fit.rate, r.gap_nd);
    assert!(r.fit.rate >= 1.5 * PI * PI);

    let harmonic = PotentialSpec::quadratic(2.0, 1);
    let cfg = DecayConfig {
        h: 1.0 / 32.0,
        pairs: PairOptions {
            per_bin: 32,
            ..PairOptions::default()
        },
        ..DecayConfig::default()
    };
    let r = gap_from_decay(&ConvexDomain::interval(-10.0, 10.0).unwrap(), &harmonic, &harmonic, &cfg).unwrap();
    assert!(r.passed, "{r:?}");
    assert!((r.fit.rate - 2.0).abs() < 1e-2, "{}", r.fit.rate);
}

#[test]
fn false_premise_fails_stage_one() {
    let vt = fundgap::potential::parse_potential::<f64>("0.5*x1^2", 1).unwrap();
    let err = gap_from_decay(
        &ConvexDomain::square(1.0).unwrap(),
        &PotentialSpec::zero(2),
        &vt,
        &DecayConfig {
            h: 1.0 / 32.0,
            ..DecayConfig::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, ParabolicError::Stage { stage: "convexity", .. }), "{err}");
}
