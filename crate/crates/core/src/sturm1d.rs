//! One-dimensional comparison problems for `-d²/dz² + Ṽ` on `[-D/2, D/2]`.
//!
//! Eigenpairs come either from the three-point finite-difference matrix or
//! from shooting on the Prüfer angle `q = arctan(φ'/φ)`, which satisfies
//!
//! ```text
//! q' = (Ṽ - μ) cos²q - sin²q
//! ```
//!
//! and is strictly decreasing in `μ` for `z > 0`. Since `Ṽ` is even, all
//! shooting happens on `[0, D/2]`: ground-type modes start at `q(0) = 0`,
//! excited-type modes at `q(0) = π/2`.
//!
//! Eigenfunctions follow the normalisation `φ'(D/2) = -1`.

use thiserror::Error;

use crate::linalg::{SolveError, Tridiagonal};
use crate::modulus::{ModulusError, ModulusFn};
use crate::ode::{integrate, solve, OdeError, OdeOptions, Solution};
use crate::potential::{PotentialError, PotentialSpec};
use crate::scalar::{count, lit, Real};

/// Half-interval cells used when a caller does not ask for a resolution.
pub const DEFAULT_SAMPLES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Sturm1dError {
    #[error("comparison potential must be one-dimensional (got dimension {0})")]
    Dimension(usize),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Modulus(#[from] ModulusError),
    #[error("grid of {n_grid} cells is too coarse (need at least 64)")]
    GridTooCoarse { n_grid: usize },
    #[error("requested {k} eigenpairs but the grid has only {available} interior nodes")]
    TooManyEigenpairs { k: usize, available: usize },
    #[error("no sign change of the terminal-angle residual while scanning mu over [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },
    #[error("eigenfunction sample {index} (z = {z}) is not positive")]
    NonPositive { index: usize, z: f64 },
    #[error("eigenfunction grid has no node at z = 0")]
    NoCentreNode,
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("left Riccati branch blows up at z = {z}; the barrier does not cover [0, D/2]")]
    BarrierGap { z: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary<T> {
    Dirichlet,
    /// `φ(D/2) = ε`, `φ'(D/2) = -1`.
    Robin(T),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    /// Ground type, `q(0) = 0`.
    Even,
    /// Excited type, `q(0) = π/2`.
    Odd,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShootMode<T> {
    DirichletGround,
    DirichletExcited,
    RobinGround(T),
    RobinExcited(T),
}

impl<T: Real> ShootMode<T> {
    pub fn boundary(&self) -> Boundary<T> {
        match *self {
            ShootMode::DirichletGround | ShootMode::DirichletExcited => Boundary::Dirichlet,
            ShootMode::RobinGround(e) | ShootMode::RobinExcited(e) => Boundary::Robin(e),
        }
    }

    pub fn parity(&self) -> Parity {
        match self {
            ShootMode::DirichletGround | ShootMode::RobinGround(_) => Parity::Even,
            _ => Parity::Odd,
        }
    }

    pub fn initial_angle(&self) -> T {
        match self.parity() {
            Parity::Even => T::zero(),
            Parity::Odd => T::FRAC_PI_2(),
        }
    }

    /// Angle the solution must reach at `D/2`.
    pub fn target_angle(&self) -> T {
        match self.boundary() {
            Boundary::Dirichlet => -T::FRAC_PI_2(),
            Boundary::Robin(e) => e.atan() - T::FRAC_PI_2(),
        }
    }
}

/// An eigenvalue with its eigenfunction sampled on a uniform grid over
/// `[-D/2, D/2]` (endpoints included).
#[derive(Clone, Debug)]
pub struct Eigen1D<T> {
    pub mu: T,
    pub boundary: Boundary<T>,
    pub parity: Parity,
    /// Width of the final bisection bracket (shooting) or zero (FD, where the
    /// eigenvalue is exact for the matrix up to rounding).
    pub mu_residual: T,
    half_diameter: T,
    values: Vec<T>,
    angle: Option<Vec<T>>,
}

impl<T: Real> Eigen1D<T> {
    pub fn diameter(&self) -> T {
        self.half_diameter * lit(2.0)
    }

    pub fn spacing(&self) -> T {
        self.diameter() / count(self.values.len() - 1)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn z(&self, j: usize) -> T {
        -self.half_diameter + self.spacing() * count(j)
    }

    /// Prüfer angle on `[0, D/2]` at the grid nodes, when the pair was
    /// computed by shooting.
    pub fn angle(&self) -> Option<&[T]> {
        self.angle.as_deref()
    }

    /// Linear interpolation of the eigenfunction.
    pub fn value_at(&self, z: T) -> T {
        let h = self.spacing();
        let s = ((z + self.half_diameter) / h).max(T::zero());
        let j = s.floor().to_usize().unwrap_or(0).min(self.values.len() - 2);
        let t = s - count(j);
        self.values[j] + (self.values[j + 1] - self.values[j]) * t
    }

    fn centre(&self) -> Option<usize> {
        (self.values.len() % 2 == 1).then(|| (self.values.len() - 1) / 2)
    }
}

/// Prüfer angle along `[0, D/2]` for a fixed `μ`.
#[derive(Clone, Debug)]
pub struct PruferPath<T> {
    pub mu: T,
    pub q0: T,
    half_diameter: T,
    samples: Vec<T>,
    /// Largest `|q' - (Ṽ-μ)cos²q + sin²q|` over interior samples, with `q'`
    /// taken from the derivative of the dense output.
    pub ode_residual: T,
    solution: Solution<T, 1>,
}

impl<T: Real> PruferPath<T> {
    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn z(&self, i: usize) -> T {
        self.half_diameter * count(i) / count(self.samples.len() - 1)
    }

    pub fn terminal(&self) -> T {
        self.solution.y_stop[0]
    }

    /// Dense-output angle at any `z` in `[0, D/2]`.
    pub fn eval(&self, z: T) -> T {
        self.solution.eval(z)[0]
    }
}

fn check_potential<T: Real>(v: &PotentialSpec<T>, d: T) -> Result<(), Sturm1dError> {
    if v.dimension() != 1 {
        return Err(Sturm1dError::Dimension(v.dimension()));
    }
    if !(d > T::zero()) || !d.is_finite() {
        return Err(Sturm1dError::Invalid(format!("diameter must be positive, got {d}")));
    }
    v.ensure_even(d)?;
    Ok(())
}

fn prufer_rhs<T: Real>(v: &PotentialSpec<T>, mu: T, z: T, q: T) -> T {
    let (s, c) = q.sin_cos();
    (v.value_1d(z) - mu) * c * c - s * s
}

fn ode_opts<T: Real>() -> OdeOptions<T> {
    OdeOptions {
        atol: lit(1e-13),
        rtol: lit(1e-13),
        ..OdeOptions::default()
    }
}

/// Integrates the Prüfer equation from `q(0) = q0` to `D/2`, sampling at
/// `n_samples + 1` equally spaced points.
pub fn prufer_shoot<T: Real>(
    v: &PotentialSpec<T>,
    mu: T,
    q0: T,
    d: T,
    n_samples: usize,
) -> Result<PruferPath<T>, Sturm1dError> {
    check_potential(v, d)?;
    let half = d / lit(2.0);
    let n = n_samples.max(2);
    let solution = solve(|z, y: &[T; 1]| [prufer_rhs(v, mu, z, y[0])], T::zero(), [q0], half, &ode_opts())?;
    let mut samples = Vec::with_capacity(n + 1);
    let mut residual = T::zero();
    for i in 0..=n {
        let z = half * count(i) / count(n);
        let q = if i == n { solution.y_stop[0] } else { solution.eval(z)[0] };
        if i > 0 && i < n {
            if let Some(dq) = solution.derivative(z) {
                residual = residual.max((dq[0] - prufer_rhs(v, mu, z, q)).abs());
            }
        }
        samples.push(q);
    }
    Ok(PruferPath {
        mu,
        q0,
        half_diameter: half,
        samples,
        ode_residual: residual,
        solution,
    })
}

fn terminal_angle<T: Real>(v: &PotentialSpec<T>, mu: T, q0: T, half: T) -> Result<T, Sturm1dError> {
    let sol = solve(|z, y: &[T; 1]| [prufer_rhs(v, mu, z, y[0])], T::zero(), [q0], half, &ode_opts())?;
    Ok(sol.y_stop[0])
}

/// Finds the smallest `μ` with `q(D/2, q0, μ) = target`. Returns the root
/// and the final bracket width.
fn shoot_eigenvalue<T: Real>(v: &PotentialSpec<T>, d: T, q0: T, target: T) -> Result<(T, T), Sturm1dError> {
    let half = d / lit(2.0);
    let (inf_v, _) = v.bounds_1d(d);
    let step = (T::PI() / d).powi(2);
    let f = |mu: T| terminal_angle(v, mu, q0, half).map(|q| q - target);
    let scan_lo = inf_v - step;
    let mut lo = scan_lo;
    let mut f_lo = f(lo)?;
    let bracket_err = |hi: T| Sturm1dError::Bracket {
        lo: scan_lo.to_f64().unwrap_or(f64::NAN),
        hi: hi.to_f64().unwrap_or(f64::NAN),
    };
    if !(f_lo > T::zero()) {
        return Err(bracket_err(lo));
    }
    let mut hi = lo + step;
    let mut f_hi = f(hi)?;
    let mut scans = 1;
    while f_hi > T::zero() {
        scans += 1;
        if scans > 100_000 {
            return Err(bracket_err(hi));
        }
        lo = hi;
        f_lo = f_hi;
        hi = hi + step;
        f_hi = f(hi)?;
    }
    if f_hi == T::zero() {
        return Ok((hi, T::zero()));
    }
    // Illinois variant of regula falsi
    let tol = lit::<T>(1e-12) * T::one().max(hi.abs());
    let mut side = 0i8;
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mut m = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(m > lo && m < hi) {
            m = (lo + hi) / lit(2.0);
        }
        let fm = f(m)?;
        if fm == T::zero() {
            return Ok((m, T::zero()));
        }
        if fm > T::zero() {
            lo = m;
            f_lo = fm;
            if side == 1 {
                f_hi = f_hi / lit(2.0);
            }
            side = 1;
        } else {
            hi = m;
            f_hi = fm;
            if side == -1 {
                f_lo = f_lo / lit(2.0);
            }
            side = -1;
        }
        // fall back to plain bisection when regula falsi stalls on a steep step
        if hi - lo > tol {
            let mid = (lo + hi) / lit(2.0);
            let fmid = f(mid)?;
            if fmid > T::zero() {
                lo = mid;
                f_lo = fmid;
            } else {
                hi = mid;
                f_hi = fmid;
            }
        }
    }
    Ok(((lo + hi) / lit(2.0), hi - lo))
}

/// Augmented Prüfer system: angle and `log R` with `φ = R cos q`,
/// `φ' = R sin q`.
fn amplitude_rhs<T: Real>(v: &PotentialSpec<T>, mu: T, z: T, y: &[T; 2]) -> [T; 2] {
    let (s, c) = y[0].sin_cos();
    let w = v.value_1d(z) - mu;
    [w * c * c - s * s, s * c * (T::one() + w)]
}

/// Rebuilds `φ` and `q` on `n + 1` nodes of `[0, D/2]`, integrating forward
/// from `z = 0` and backward from `D/2` and joining at the first turning
/// point (or `D/4` if `Ṽ < μ` throughout).
fn reconstruct<T: Real>(
    v: &PotentialSpec<T>,
    mu: T,
    half: T,
    mode: ShootMode<T>,
    n: usize,
) -> Result<(Vec<T>, Vec<T>), Sturm1dError> {
    let h = half / count(n);
    let z_turn = (1..n).map(|i| h * count(i)).find(|&z| v.value_1d(z) > mu);
    let z_m = z_turn.unwrap_or(half / lit(2.0));
    let q_end = mode.target_angle();
    let r_end = match mode.boundary() {
        Boundary::Dirichlet => T::one(),
        Boundary::Robin(e) => (T::one() + e * e).sqrt(),
    };
    let rhs = |z: T, y: &[T; 2]| amplitude_rhs(v, mu, z, y);
    let opts = ode_opts();
    let fwd = solve(rhs, T::zero(), [mode.initial_angle(), T::zero()], z_m, &opts)?;
    let bwd = solve(rhs, half, [q_end, r_end.ln()], z_m, &opts)?;
    let shift = bwd.y_stop[1] - fwd.y_stop[1];
    let mut phi = Vec::with_capacity(n + 1);
    let mut angle = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let z = if i == n { half } else { h * count(i) };
        let (q, l) = if i == 0 {
            (mode.initial_angle(), shift)
        } else if i == n {
            (q_end, r_end.ln())
        } else if z <= z_m {
            let y = fwd.eval(z);
            (y[0], y[1] + shift)
        } else {
            let y = bwd.eval(z);
            (y[0], y[1])
        };
        let mut value = l.exp() * q.cos();
        let vanishes = (i == 0 && mode.parity() == Parity::Odd) || (i == n && mode.boundary() == Boundary::Dirichlet);
        if vanishes {
            value = T::zero();
        }
        phi.push(value);
        angle.push(q);
    }
    Ok((phi, angle))
}

fn mirror<T: Real>(half_values: &[T], parity: Parity) -> Vec<T> {
    let n = half_values.len() - 1;
    let mut full = Vec::with_capacity(2 * n + 1);
    for i in (1..=n).rev() {
        full.push(match parity {
            Parity::Even => half_values[i],
            Parity::Odd => -half_values[i],
        });
    }
    full.extend_from_slice(half_values);
    full
}

/// Eigenpair by Prüfer shooting; `n_samples` cells on `[0, D/2]`.
pub fn solve_eigen_shooting<T: Real>(
    v: &PotentialSpec<T>,
    d: T,
    mode: ShootMode<T>,
    n_samples: usize,
) -> Result<Eigen1D<T>, Sturm1dError> {
    check_potential(v, d)?;
    if let Boundary::Robin(e) = mode.boundary() {
        if !(e > T::zero()) || !e.is_finite() {
            return Err(Sturm1dError::Invalid(format!("Robin parameter must be positive, got {e}")));
        }
    }
    let n = n_samples.max(4);
    let (mu, width) = shoot_eigenvalue(v, d, mode.initial_angle(), mode.target_angle())?;
    let half = d / lit(2.0);
    let (phi, angle) = reconstruct(v, mu, half, mode, n)?;
    Ok(Eigen1D {
        mu,
        boundary: mode.boundary(),
        parity: mode.parity(),
        mu_residual: width,
        half_diameter: half,
        values: mirror(&phi, mode.parity()),
        angle: Some(angle),
    })
}

/// First `k` Dirichlet eigenpairs of the three-point finite-difference
/// matrix with `n_grid` cells.
pub fn solve_dirichlet_fd<T: Real>(
    v: &PotentialSpec<T>,
    d: T,
    n_grid: usize,
    k: usize,
) -> Result<Vec<Eigen1D<T>>, Sturm1dError> {
    if v.dimension() != 1 {
        return Err(Sturm1dError::Dimension(v.dimension()));
    }
    if n_grid < 64 {
        return Err(Sturm1dError::GridTooCoarse { n_grid });
    }
    let m = n_grid - 1;
    if k > m {
        return Err(Sturm1dError::TooManyEigenpairs { k, available: m });
    }
    let half = d / lit(2.0);
    let h = d / count(n_grid);
    let inv_h2 = T::one() / (h * h);
    let diag = (1..=m)
        .map(|i| {
            let z = -half + h * count(i);
            v.eval(&[z]).map(|vz| inv_h2 * lit(2.0) + vz)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let matrix = Tridiagonal::symmetric(diag, vec![-inv_h2; m - 1]);
    let pairs = matrix.smallest_eigenpairs(k)?;
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(idx, (mu, vec))| {
            let mut values = Vec::with_capacity(n_grid + 1);
            values.push(T::zero());
            values.extend(vec);
            values.push(T::zero());
            let slope = (lit::<T>(3.0) * values[n_grid] - lit::<T>(4.0) * values[n_grid - 1] + values[n_grid - 2])
                / (lit::<T>(2.0) * h);
            let scale = -T::one() / slope;
            values.iter_mut().for_each(|x| *x *= scale);
            Eigen1D {
                mu,
                boundary: Boundary::Dirichlet,
                parity: if idx % 2 == 0 { Parity::Even } else { Parity::Odd },
                mu_residual: T::zero(),
                half_diameter: half,
                values,
                angle: None,
            }
        })
        .collect())
}

/// `(log φ)'` on `[0, D/2]`. Dirichlet modes carry a pole at `D/2`, so the
/// result stops one node short of it; Robin modes end at `-1/ε`.
pub fn log_derivative<T: Real>(e: &Eigen1D<T>) -> Result<ModulusFn<T>, Sturm1dError> {
    let c = e.centre().ok_or(Sturm1dError::NoCentreNode)?;
    let m = e.values.len() - 1 - c;
    let h = e.spacing();
    let first = if e.parity == Parity::Even { 0 } else { 1 };
    for i in first..m {
        if !(e.values[c + i] > T::zero()) {
            return Err(Sturm1dError::NonPositive {
                index: c + i,
                z: (h * count(i)).to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let mut samples: Vec<T> = match &e.angle {
        Some(q) => q.iter().map(|q| q.tan()).collect(),
        None => (0..=m)
            .map(|i| {
                if i == m {
                    T::neg_infinity()
                } else {
                    let (l, r) = (e.values[c + i - 1], e.values[c + i + 1]);
                    (r - l) / (lit::<T>(2.0) * h * e.values[c + i])
                }
            })
            .collect(),
    };
    match e.parity {
        Parity::Even => samples[0] = T::zero(),
        Parity::Odd => samples[0] = T::infinity(),
    }
    let half = e.half_diameter;
    match e.boundary {
        Boundary::Dirichlet => {
            samples.pop();
            Ok(ModulusFn::with_pole(half, samples)?)
        }
        Boundary::Robin(eps) => {
            samples[m] = -T::one() / eps;
            Ok(ModulusFn::new(half, samples)?)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    FiniteDifference { n_grid: usize },
    Shooting { samples: usize },
}

#[derive(Clone, Debug)]
pub struct Gap1d<T> {
    pub mu0: T,
    pub mu1: T,
    pub gap: T,
    pub method: Method,
    pub ground: Eigen1D<T>,
    pub excited: Eigen1D<T>,
}

/// `μ1 - μ0` for an even potential, Dirichlet unless `robin` is given
/// (Robin requires shooting).
pub fn gap1d<T: Real>(v: &PotentialSpec<T>, d: T, method: Method, robin: Option<T>) -> Result<Gap1d<T>, Sturm1dError> {
    check_potential(v, d)?;
    let (ground, excited) = match (method, robin) {
        (Method::FiniteDifference { n_grid }, None) => {
            let mut pairs = solve_dirichlet_fd(v, d, n_grid, 2)?;
            let excited = pairs.pop().expect("two pairs");
            (pairs.pop().expect("two pairs"), excited)
        }
        (Method::FiniteDifference { .. }, Some(_)) => {
            return Err(Sturm1dError::Invalid("Robin problems are solved by shooting only".into()))
        }
        (Method::Shooting { samples }, None) => (
            solve_eigen_shooting(v, d, ShootMode::DirichletGround, samples)?,
            solve_eigen_shooting(v, d, ShootMode::DirichletExcited, samples)?,
        ),
        (Method::Shooting { samples }, Some(e)) => (
            solve_eigen_shooting(v, d, ShootMode::RobinGround(e), samples)?,
            solve_eigen_shooting(v, d, ShootMode::RobinExcited(e), samples)?,
        ),
    };
    Ok(Gap1d {
        mu0: ground.mu,
        mu1: excited.mu,
        gap: excited.mu - ground.mu,
        method,
        ground,
        excited,
    })
}

/// Observed order of convergence from three successively halved runs.
pub fn observed_order<T: Real>(coarse: T, medium: T, fine: T) -> T {
    ((coarse - medium).abs() / (medium - fine).abs()).log2()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RiccatiSide<T> {
    /// `ψ(0) = 0`, integrated forward.
    Left,
    /// `ψ(D/2) = -k`, integrated backward.
    Right { k: T },
}

/// A solution of `ψ' + ψ² = Ṽ - μ` sampled on `[0, D/2]`. Samples past a
/// blow-up hold `-∞` (left branch) or `+∞` (right branch).
#[derive(Clone, Debug)]
pub struct RiccatiBranch<T> {
    pub psi: ModulusFn<T>,
    pub mu: T,
    pub blow_up: Option<T>,
    /// Largest `|ψ' + ψ² - Ṽ + μ| / (1 + ψ²)` over finite samples.
    pub residual: T,
}

/// Solves the Riccati equation through the angle `ψ = tan q`, so blow-up is
/// the angle crossing `∓π/2` and is located to `1e-10`.
pub fn riccati_stationary<T: Real>(
    v: &PotentialSpec<T>,
    mu: T,
    side: RiccatiSide<T>,
    d: T,
    n_samples: usize,
) -> Result<RiccatiBranch<T>, Sturm1dError> {
    check_potential(v, d)?;
    let half = d / lit(2.0);
    let n = n_samples.max(2);
    let rhs = |z: T, y: &[T; 1]| [prufer_rhs(v, mu, z, y[0])];
    let tol = lit::<T>(1e-10);
    let (sol, pole_sign) = match side {
        RiccatiSide::Left => {
            let ev = |_: T, y: &[T; 1]| y[0] + T::FRAC_PI_2();
            (integrate(rhs, T::zero(), [T::zero()], half, &ode_opts(), Some((ev, tol)))?, -T::one())
        }
        RiccatiSide::Right { k } => {
            if !(k > T::zero()) {
                return Err(Sturm1dError::Invalid(format!("k must be positive, got {k}")));
            }
            let ev = |_: T, y: &[T; 1]| y[0] - T::FRAC_PI_2();
            (integrate(rhs, half, [-k.atan()], T::zero(), &ode_opts(), Some((ev, tol)))?, T::one())
        }
    };
    let blow_up = sol.event;
    let mut samples = Vec::with_capacity(n + 1);
    let mut residual = T::zero();
    for i in 0..=n {
        let z = if i == n { half } else { half * count(i) / count(n) };
        let beyond = match (blow_up, side) {
            (Some(b), RiccatiSide::Left) => z >= b,
            (Some(b), RiccatiSide::Right { .. }) => z <= b,
            _ => false,
        };
        if beyond {
            samples.push(pole_sign * T::infinity());
            continue;
        }
        let q = match (i, side) {
            (0, RiccatiSide::Left) => T::zero(),
            (i, RiccatiSide::Right { k }) if i == n => -k.atan(),
            _ => sol.eval(z)[0],
        };
        if let Some(dq) = sol.derivative(z) {
            residual = residual.max((dq[0] - prufer_rhs(v, mu, z, q)).abs());
        }
        samples.push(match (i, side) {
            (i, RiccatiSide::Right { k }) if i == n => -k,
            _ => q.tan(),
        });
    }
    Ok(RiccatiBranch {
        psi: ModulusFn::new(half, samples)?,
        mu,
        blow_up,
        residual,
    })
}

/// Outcome of comparing a barrier against its explicit lower bound.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerBoundCheck<T> {
    pub lambda_plus: T,
    pub lambda_minus: T,
    pub z0: T,
    /// `max(bound - ψ⁺)` over samples; `≤ 0` means the bound holds.
    pub worst: T,
    pub violations: usize,
    pub tolerance: T,
}

impl<T: Real> LowerBoundCheck<T> {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Debug)]
pub struct Barrier<T> {
    pub psi: ModulusFn<T>,
    pub k: T,
    pub s: T,
    /// `μ_{0,1/k}`.
    pub mu_robin: T,
    pub right_blow_up: Option<T>,
    /// Present when `s` exceeds `max(μ - inf Ṽ, sup Ṽ - μ)`.
    pub lower_bound: Option<LowerBoundCheck<T>>,
}

/// `ψ⁺_{k,s} = min(ψ^L_{μ-s}, ψ^R_{k,μ+s})` with `μ = μ_{0,1/k}`.
pub fn barrier_supersolution<T: Real>(
    v: &PotentialSpec<T>,
    k: T,
    s: T,
    d: T,
    n_samples: usize,
) -> Result<Barrier<T>, Sturm1dError> {
    check_potential(v, d)?;
    if !(k > T::zero()) || !(s >= T::zero()) {
        return Err(Sturm1dError::Invalid(format!("need k > 0 and s >= 0, got k = {k}, s = {s}")));
    }
    let mu = shoot_eigenvalue(v, d, T::zero(), (T::one() / k).atan() - T::FRAC_PI_2())?.0;
    barrier_with_mu(v, k, s, d, mu, n_samples)
}

/// As [`barrier_supersolution`] with a known Robin eigenvalue `μ_{0,1/k}`.
pub fn barrier_with_mu<T: Real>(
    v: &PotentialSpec<T>,
    k: T,
    s: T,
    d: T,
    mu: T,
    n_samples: usize,
) -> Result<Barrier<T>, Sturm1dError> {
    let left = riccati_stationary(v, mu - s, RiccatiSide::Left, d, n_samples)?;
    if let Some(z) = left.blow_up {
        return Err(Sturm1dError::BarrierGap {
            z: z.to_f64().unwrap_or(f64::NAN),
        });
    }
    let right = riccati_stationary(v, mu + s, RiccatiSide::Right { k }, d, n_samples)?;
    let mut samples: Vec<T> = left
        .psi
        .samples()
        .iter()
        .zip(right.psi.samples())
        .map(|(&a, &b)| a.min(b))
        .collect();
    // ψ^R(0) ≥ 0 analytically; keep the anchor exact
    samples[0] = T::zero();
    let half = d / lit(2.0);
    let psi = ModulusFn::new(half, samples)?;
    let (inf_v, sup_v) = v.bounds_1d(d);
    let threshold = (mu - inf_v).max(sup_v - mu);
    let lower_bound = (s > threshold).then(|| lower_bound_check(&psi, k, s, mu, inf_v, sup_v, half));
    Ok(Barrier {
        psi,
        k,
        s,
        mu_robin: mu,
        right_blow_up: right.blow_up,
        lower_bound,
    })
}

fn lower_bound_check<T: Real>(psi: &ModulusFn<T>, k: T, s: T, mu: T, inf_v: T, sup_v: T, half: T) -> LowerBoundCheck<T> {
    let lp = (s + inf_v - mu).sqrt();
    let lm = (s + mu - sup_v).sqrt();
    let tanh_branch = |z: T| lp * (lp * z).tanh();
    let tan_branch = |z: T| {
        let (sn, cs) = (lm * (half - z)).sin_cos();
        lm * (lm * sn - k * cs) / (lm * cs + k * sn)
    };
    let pole = half - (T::FRAC_PI_2() + (k / lm).atan()) / lm;
    let diff = |z: T| tanh_branch(z) - tan_branch(z);
    let mut lo = pole.max(T::zero());
    let z0 = if lo == T::zero() && diff(lo) >= T::zero() {
        T::zero()
    } else {
        if lo > T::zero() {
            lo = lo + (half - lo) * lit(1e-12);
        }
        let mut hi = half;
        for _ in 0..200 {
            let mid = (lo + hi) / lit(2.0);
            if diff(mid) < T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let mut worst = T::neg_infinity();
    let mut violations = 0;
    let tol = lit::<T>(1e-8);
    for (z, value) in psi.iter() {
        let bound = if z <= z0 { tanh_branch(z) } else { tan_branch(z) };
        let excess = bound - value;
        worst = worst.max(excess);
        if excess > tol * T::one().max(bound.abs()) {
            violations += 1;
        }
    }
    LowerBoundCheck {
        lambda_plus: lp,
        lambda_minus: lm,
        z0,
        worst,
        violations,
        tolerance: tol,
    }
}
