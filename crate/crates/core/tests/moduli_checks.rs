use std::f64::consts::PI;

use fundgap::moduli::*;
use fundgap::modulus::Endpoint;
use fundgap::schrod_nd::{discretize, smallest_eigenpairs};
use fundgap::sturm1d::{log_derivative, solve_eigen_shooting, ShootMode};
use fundgap::{ConvexDomain, Grid, ModulusFn, PotentialSpec};
use proptest::prelude::*;

fn ground_state(domain: &ConvexDomain, v: &PotentialSpec, h: f64) -> (Grid, Vec<f64>) {
    let op = discretize(domain, v, h).unwrap();
    let pairs = smallest_eigenpairs(&op, 1, 1e-10).unwrap();
    (op.grid().clone(), pairs.vectors[0].clone())
}

fn unit(x: &[f64], y: &[f64]) -> (Vec<f64>, f64) {
    let d = x.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
    (x.iter().zip(y).map(|(a, b)| (b - a) / d).collect(), d)
}

/// Plain double loop over all interior pairs, independent of the sampler.
fn brute_worst(grid: &Grid, margin: f64, value: impl Fn(usize, usize) -> Option<f64>) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            if grid.boundary_distance(i) < margin || grid.boundary_distance(j) < margin {
                continue;
            }
            if let Some(v) = value(i, j) {
                worst = worst.max(v);
            }
        }
    }
    worst
}

#[test]
fn square_log_concavity_with_sharp_modulus() {
    let h = 1.0 / 64.0;
    let d = ConvexDomain::square(1.0).unwrap();
    let (grid, phi) = ground_state(&d, &PotentialSpec::zero(2), h);
    let cal = calibrate_pair_tolerance(h, 2.0).unwrap();
    let opts = PairOptions {
        boundary_margin: 2.0 * h,
        ..PairOptions::default()
    };
    let sample = PairSample::stratified(&grid, &opts).unwrap();
    let psi = sharp_log_modulus(2f64.sqrt(), 4000).unwrap();
    let r = check_log_concavity(&grid, &phi, &psi, &sample, cal.tolerance(h)).unwrap();
    assert!(r.passed, "{r:?}");
    assert!(r.excluded > 0 && r.checked > 10_000);

    let flat = ModulusFn::new(2f64.sqrt() / 2.0, vec![0.0, 0.0]).unwrap();
    let r = check_log_concavity(&grid, &phi, &flat, &sample, cal.tolerance(h)).unwrap();
    assert!(r.passed && r.worst < 0.0);

    let field = grad_log(&grid, &phi).unwrap();
    let r = check_contraction_modulus(&grid, &field, &psi, &sample, cal.tolerance(h)).unwrap();
    assert!(r.passed);
}

#[test]
fn brute_force_agrees_on_coarse_grid() {
    let h = 1.0 / 17.0;
    let d = ConvexDomain::square(1.0).unwrap();
    let (grid, phi) = ground_state(&d, &PotentialSpec::zero(2), h);
    let margin = 2.0 * h;
    let psi = sharp_log_modulus(2f64.sqrt(), 4000).unwrap();
    let all = PairSample::all_pairs(&grid, margin, 32);
    let g = grad_log(&grid, &phi).unwrap();
    let lhs = |i: usize, j: usize| {
        let (e, dist) = unit(grid.point(i), grid.point(j));
        let s: f64 = (0..2).map(|k| (g[2 * j + k] - g[2 * i + k]) * e[k]).sum();
        (s, dist)
    };

    let report = check_log_concavity(&grid, &phi, &psi, &all, 0.05).unwrap();
    let expected = brute_worst(&grid, margin, |i, j| {
        let (s, dist) = lhs(i, j);
        Some(s - 2.0 * psi.eval(dist / 2.0).ok()?)
    });
    assert!((report.worst - expected).abs() <= 1e-12, "{} vs {expected}", report.worst);

    let report = check_contraction_modulus(&grid, &g, &psi, &all, 0.05).unwrap();
    assert!((report.worst - expected).abs() <= 1e-12);

    let sampled = PairSample::stratified(
        &grid,
        &PairOptions {
            boundary_margin: margin,
            ..PairOptions::default()
        },
    )
    .unwrap();
    let verdict = check_log_concavity(&grid, &phi, &psi, &sampled, 0.05).unwrap();
    assert_eq!(verdict.passed, report.passed);

    let v = PotentialSpec::double_well(1.0, 1.0, 2);
    let vt = ModulusFn::from_fn(0.75, 301, Endpoint::Finite, |z| -2.0 * z + 4.0 * z.powi(3)).unwrap();
    let all = PairSample::all_pairs(&grid, 0.0, 32);
    let report = check_convexity_modulus(&v, &vt, &all, 0.0).unwrap();
    let expected = brute_worst(&grid, 0.0, |i, j| {
        let (e, dist) = unit(grid.point(i), grid.point(j));
        let (gx, gy) = (v.grad(grid.point(i)).unwrap(), v.grad(grid.point(j)).unwrap());
        let s: f64 = (0..2).map(|k| (gy[k] - gx[k]) * e[k]).sum();
        Some(2.0 * vt.eval(dist / 2.0).unwrap() - s)
    });
    assert!((report.worst - expected).abs() <= 1e-12);

    let f: Vec<f64> = grid.points().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
    let eta = ModulusFn::from_fn(0.75, 301, Endpoint::Finite, |z| 2.0 * z).unwrap();
    let report = check_modulus_of_continuity(&grid, &f, &eta, &all, 0.0).unwrap();
    let expected = brute_worst(&grid, 0.0, |i, j| {
        let (_, dist) = unit(grid.point(i), grid.point(j));
        Some((f[j] - f[i]).abs() - 2.0 * eta.eval(dist / 2.0).unwrap())
    });
    assert!((report.worst - expected).abs() <= 1e-12);
}

#[test]
fn optimal_modulus_feeds_back() {
    let d = ConvexDomain::disc([0.0, 0.0], 1.0).unwrap();
    let grid = Grid::new(d, 1.0 / 24.0).unwrap();
    let tail = PotentialSpec::double_well(1.0, 1.0, 1);
    let v = PotentialSpec::radial_plus_transverse(tail, 5.0, 2).unwrap();
    let sample = PairSample::stratified(&grid, &PairOptions { per_bin: 128, ..PairOptions::default() }).unwrap();
    let opt = optimal_convexity_modulus(&v, 32, &sample).unwrap();
    let r = check_convexity_modulus(&v, &opt, &sample, 1e-12).unwrap();
    assert!(r.passed && r.worst <= 1e-12, "{}", r.worst);

    // the profile's own derivative is a modulus, so each bin's infimum sits
    // above the smallest Ṽ' on that bin
    let spacing = opt.spacing();
    for (b, (z, value)) in opt.iter().take(32).enumerate() {
        if value.is_nan() {
            continue;
        }
        let lo = (0..=20)
            .map(|t| {
                let s = z + spacing * t as f64 / 20.0;
                -2.0 * s + 4.0 * s.powi(3)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(value >= lo - 1e-9, "bin {b}: {value} < {lo}");
    }
    let vt = ModulusFn::from_fn(1.0, 401, Endpoint::Finite, |z| -2.0 * z + 4.0 * z.powi(3)).unwrap();
    assert!(check_convexity_modulus(&v, &vt, &sample, 1e-12).unwrap().passed);
}

#[test]
fn quartic_self_comparison_in_1d() {
    let h = 1.0 / 256.0;
    let d = ConvexDomain::interval(-0.5, 0.5).unwrap();
    let v = fundgap::potential::parse_potential::<f64>("x1^4", 1).unwrap();
    let (grid, phi) = ground_state(&d, &v, h);
    let psi = log_derivative(&solve_eigen_shooting(&v, 1.0, ShootMode::DirichletGround, 2000).unwrap()).unwrap();
    let cal = calibrate_pair_tolerance(h, 2.0).unwrap();
    let sample = PairSample::all_pairs(&grid, 2.0 * h, 8);
    let r = check_log_concavity(&grid, &phi, &psi, &sample, cal.tolerance(h)).unwrap();
    assert!(r.passed, "{r:?} tol {}", cal.tolerance(h));
}

#[test]
fn one_dimensional_equality_is_tight() {
    let h = 1.0 / 128.0;
    let cal = calibrate_pair_tolerance(h, 1.0).unwrap();
    // discrete cos is exact at the nodes, so the gap is sin(πh)/h vs π times tan
    assert!(cal.worst_1d > 0.0 && cal.worst_1d < PI * PI * h);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn sampled_worst_never_exceeds_brute_force(seed in any::<u64>(), per_bin in 4usize..64) {
        let grid = Grid::new(ConvexDomain::square(1.0).unwrap(), 1.0 / 18.0).unwrap();
        let f: Vec<f64> = grid.points().map(|p| (5.0 * p[0] * p[1]).cos()).collect();
        let eta = ModulusFn::from_fn(0.75, 101, Endpoint::Finite, |z| z).unwrap();
        let all = PairSample::all_pairs(&grid, 0.0, 16);
        let sample = PairSample::stratified(&grid, &PairOptions { seed, per_bin, ..PairOptions::default() }).unwrap();
        let a = check_modulus_of_continuity(&grid, &f, &eta, &sample, 0.0).unwrap();
        let b = check_modulus_of_continuity(&grid, &f, &eta, &all, 0.0).unwrap();
        prop_assert!(a.worst <= b.worst + 1e-15);
        let again = check_modulus_of_continuity(&grid, &f, &eta, &sample, 0.0).unwrap();
        prop_assert_eq!(a, again);
    }
}
