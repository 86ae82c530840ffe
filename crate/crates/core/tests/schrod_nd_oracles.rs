use std::f64::consts::PI;
use std::time::Instant;

use fundgap::schrod_nd::*;
use fundgap::sturm1d::{solve_eigen_shooting, ShootMode};
use fundgap::{ConvexDomain, PotentialSpec};

/// Power series for J_n, adequate for |x| < 10.
fn bessel_j(n: u32, x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = half.powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
    let mut sum = term;
    for m in 1..60 {
        term *= -half * half / (m as f64 * (m + n) as f64);
        sum += term;
    }
    sum
}

fn first_zero(n: u32, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    assert!(bessel_j(n, a) * bessel_j(n, b) < 0.0);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if bessel_j(n, a) * bessel_j(n, m) <= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn bessel_oracle_values() {
    let j01 = first_zero(0, 2.0, 3.0);
    let j11 = first_zero(1, 3.0, 4.5);
    assert!((j01 - 2.404825557695773).abs() < 1e-12);
    assert!((j11 - 3.831705970207512).abs() < 1e-12);
}

#[test]
fn unit_square_gap() {
    let t = Instant::now();
    let d = ConvexDomain::square(1.0).unwrap();
    let r = fundamental_gap(&d, &PotentialSpec::zero(2), 1.0 / 64.0).unwrap();
    let exact = 3.0 * PI * PI;
    assert!((r.richardson - exact).abs() < 1e-3 * exact, "{}", r.richardson);
    assert!(r.richardson >= 1.5 * PI * PI);
    assert_eq!(r.fine.multiplicity1, 2);
    assert!(r.phi0.iter().all(|&x| x > 0.0));
    let n0: f64 = r.phi0.iter().map(|x| x * x).sum();
    assert!((n0 - 1.0).abs() < 1e-12);
    assert!(r.phi0.iter().zip(&r.phi1).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-8);
    eprintln!("square h=1/64: {:?}", t.elapsed());
}

#[test]
fn unit_disc_gap() {
    let t = Instant::now();
    let j01 = first_zero(0, 2.0, 3.0);
    let j11 = first_zero(1, 3.0, 4.5);
    let exact = j11 * j11 - j01 * j01;
    let d = ConvexDomain::disc([0.0, 0.0], 1.0).unwrap();
    let r = fundamental_gap(&d, &PotentialSpec::zero(2), 1.0 / 32.0).unwrap();
    assert!((r.richardson - exact).abs() < 5e-3 * exact, "{} vs {exact}", r.richardson);
    assert!(r.richardson >= 3.0 * PI * PI / 4.0);
    eprintln!("disc h=1/32: {:?} gap {} rich {}", t.elapsed(), r.gap, r.richardson);
}

#[test]
fn convergence_order_of_ground_state() {
    let cases = [
        (ConvexDomain::square(1.0).unwrap(), 2.0 * PI * PI),
        (ConvexDomain::disc([0.0, 0.0], 1.0).unwrap(), first_zero(0, 2.0, 3.0).powi(2)),
    ];
    for (d, exact) in cases {
        let errs: Vec<f64> = [32.0, 64.0, 128.0]
            .iter()
            .map(|&n| {
                let op = discretize(&d, &PotentialSpec::zero(2), 1.0 / n).unwrap();
                (smallest_eigenpairs(&op, 1, 1e-10).unwrap().values[0] - exact).abs()
            })
            .collect();
        let order = (errs[0] / errs[1]).log2().min((errs[1] / errs[2]).log2());
        assert!(order >= 1.8, "{:?}: order {order}, errors {errs:?}", d.kind());
    }
}

#[test]
fn separable_rectangle_matches_1d() {
    // V = x1^2 + x2^2 separates; each axis is a 1D harmonic problem
    let d = ConvexDomain::rectangle(vec![2.0, 1.0]).unwrap();
    let v = fundgap::potential::parse_potential::<f64>("x1^2 + x2^2", 2).unwrap();
    let v1 = fundgap::potential::parse_potential::<f64>("x1^2", 1).unwrap();
    let r = fundamental_gap(&d, &v, 1.0 / 64.0).unwrap();
    let a0 = solve_eigen_shooting(&v1, 2.0, ShootMode::DirichletGround, 100).unwrap().mu;
    let a1 = solve_eigen_shooting(&v1, 2.0, ShootMode::DirichletExcited, 100).unwrap().mu;
    let b0 = solve_eigen_shooting(&v1, 1.0, ShootMode::DirichletGround, 100).unwrap().mu;
    assert!((r.richardson_lambda0 - (a0 + b0)).abs() < 1e-4 * (a0 + b0));
    assert!((r.richardson_lambda1 - (a1 + b0)).abs() < 1e-4 * (a1 + b0));
}

#[test]
fn thin_rectangle_near_equality() {
    let d = ConvexDomain::rectangle(vec![1.0, 0.1]).unwrap();
    let r = fundamental_gap(&d, &PotentialSpec::zero(2), 1.0 / 256.0).unwrap();
    let exact = 3.0 * PI * PI;
    let bound = 3.0 * PI * PI / d.diameter().powi(2);
    assert!((r.richardson - exact).abs() < 1e-3 * exact, "{}", r.richardson);
    assert!(r.richardson >= bound);
}
