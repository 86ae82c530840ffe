//! Time-dependent problems: the Dirichlet flow `u_t = Δu - Vu`, the ratio
//! `v = u1/u0` and its drift equation, the Neumann heat equation with drift,
//! the truncated ψ-evolution on `[0, D/2]`, and decay-rate extraction.

use thiserror::Error;

use crate::geometry::{ConvexDomain, DomainKind, Grid, GridError};
use crate::linalg::{bicgstab, fit_line, KrylovOptions, LinearOperator, SolveError, Tridiagonal};
use crate::moduli::{check_convexity_modulus, check_modulus_of_continuity, ModuliError, PairOptions, PairReport, PairSample};
use crate::modulus::{Endpoint, ModulusError, ModulusFn};
use crate::potential::{PotentialError, PotentialSpec};
use crate::scalar::{count, lit, to_f64, Real};
use crate::schrod_nd::{discretize, gap_eigenpairs, DiscreteOperator, EigenOptions, SchrodError, ShiftedSolver};
use crate::sturm1d::{gap1d, Method, Sturm1dError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParabolicError {
    #[error(transparent)]
    Schrod(#[from] SchrodError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Modulus(#[from] ModulusError),
    #[error(transparent)]
    Moduli(#[from] ModuliError),
    #[error(transparent)]
    Sturm(#[from] Sturm1dError),
    #[error("time step must be positive and no larger than the horizon (dt = {dt}, T = {t_end})")]
    BadStep { dt: f64, t_end: f64 },
    #[error("grid function has {got} values, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("trajectories do not share grid and time levels")]
    Mismatch,
    #[error("denominator is not positive at node {node}, t = {t} (value {value:e})")]
    Division { node: usize, t: f64, value: f64 },
    #[error("Neumann solver needs an interval or rectangle whose widths are multiples of h")]
    NotBox,
    #[error("initial ψ violates the pinned ends: ψ(0) = {at_zero}, ψ(D/2) = {at_end}, k = {k}")]
    PinnedEnds { at_zero: f64, at_end: f64, k: f64 },
    #[error("oscillation {osc:e} at t = {t} is below the underflow floor")]
    Underflow { t: f64, osc: f64 },
    #[error("fit window: {0}")]
    Window(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: &'static str, message: String },
}

/// Snapshots of a grid function at increasing times.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub grid: Grid<T>,
    pub times: Vec<T>,
    pub snapshots: Vec<Vec<T>>,
    pub dt: T,
    /// θ of the θ-scheme (1/2 for Crank–Nicolson).
    pub theta: T,
    pub steps: usize,
    /// Smallest value over all steps and nodes.
    pub min_value: T,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> &[T] {
        self.snapshots.last().expect("trajectory has a snapshot at t = 0")
    }

    pub fn same_levels(&self, other: &Trajectory<T>) -> bool {
        self.grid.same_as(&other.grid) && self.times == other.times
    }
}

fn step_count<T: Real>(t_end: T, dt: T) -> Result<(usize, T), ParabolicError> {
    if !(dt > T::zero()) || !(t_end > T::zero()) || dt > t_end * lit(1.0 + 1e-12) {
        return Err(ParabolicError::BadStep {
            dt: to_f64(dt),
            t_end: to_f64(t_end),
        });
    }
    let n = (t_end / dt - lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1);
    Ok((n, t_end / count(n)))
}

struct Recorder<T> {
    times: Vec<T>,
    snapshots: Vec<Vec<T>>,
    every: usize,
    min_value: T,
}

impl<T: Real> Recorder<T> {
    fn new(u0: &[T], every: usize) -> Self {
        Self {
            times: vec![T::zero()],
            snapshots: vec![u0.to_vec()],
            every: every.max(1),
            min_value: u0.iter().copied().fold(T::infinity(), T::min),
        }
    }

    fn record(&mut self, step: usize, last: usize, dt: T, u: &[T]) {
        self.min_value = u.iter().copied().fold(self.min_value, T::min);
        if step % self.every == 0 || step == last {
            self.times.push(dt * count(step));
            self.snapshots.push(u.to_vec());
        }
    }
}

/// Crank–Nicolson for `u_t = Δu - Vu` with `u = 0` on the boundary, using the
/// Shortley–Weller operator. Keeps every `store_every`-th step and the last.
pub fn heat_dirichlet<T: Real>(
    op: &DiscreteOperator<T>,
    u0: &[T],
    t_end: T,
    dt: T,
    store_every: usize,
) -> Result<Trajectory<T>, ParabolicError> {
    if u0.len() != op.len() {
        return Err(ParabolicError::Length {
            expected: op.len(),
            got: u0.len(),
        });
    }
    let (steps, dt) = step_count(t_end, dt)?;
    let shift = lit::<T>(2.0) / dt;
    let solver = ShiftedSolver::new(op, shift, lit(1e-13))?;
    let mut rec = Recorder::new(u0, store_every);
    let mut u = u0.to_vec();
    let mut au = vec![T::zero(); u.len()];
    let mut rhs = vec![T::zero(); u.len()];
    for step in 1..=steps {
        op.apply_shifted(T::zero(), &u, &mut au);
        for ((r, &ui), &ai) in rhs.iter_mut().zip(&u).zip(&au) {
            *r = shift * ui - ai;
        }
        solver.solve(&rhs, &mut u)?;
        rec.record(step, steps, dt, &u);
    }
    Ok(Trajectory {
        grid: op.grid().clone(),
        times: rec.times,
        snapshots: rec.snapshots,
        dt,
        theta: lit(0.5),
        steps,
        min_value: rec.min_value,
    })
}

/// `v = u1/u0` with the drift-equation residual.
#[derive(Clone, Debug)]
pub struct RatioTrajectory<T> {
    pub trajectory: Trajectory<T>,
    /// Nodes within `2h` of the boundary; their values are copied from the
    /// nearest unflagged node.
    pub flagged: Vec<bool>,
    /// Max-norm residual of `v_t - Δv - 2∇log u0·∇v` on each interval
    /// between snapshots, at nodes at least `2h` inside.
    pub residuals: Vec<T>,
    pub max_residual: T,
}

impl<T: Real> RatioTrajectory<T> {
    /// `max v - min v` over unflagged nodes at every snapshot.
    pub fn oscillation(&self) -> Vec<T> {
        self.trajectory
            .snapshots
            .iter()
            .map(|v| oscillation(v, Some(&self.flagged)))
            .collect()
    }
}

pub fn oscillation<T: Real>(values: &[T], skip: Option<&[bool]>) -> T {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for (i, &v) in values.iter().enumerate() {
        if skip.is_some_and(|s| s[i]) {
            continue;
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

pub fn drift_ratio<T: Real>(u1: &Trajectory<T>, u0: &Trajectory<T>) -> Result<RatioTrajectory<T>, ParabolicError> {
    if !u1.same_levels(u0) {
        return Err(ParabolicError::Mismatch);
    }
    let grid = &u0.grid;
    let h = grid.spacing();
    let dim = grid.dim();
    let margin = h * lit(2.0);
    let flagged: Vec<bool> = (0..grid.len()).map(|i| grid.boundary_distance(i) < margin).collect();
    let source = nearest_unflagged(grid, &flagged);

    let raw: Vec<Vec<T>> = u1
        .snapshots
        .iter()
        .zip(&u0.snapshots)
        .zip(&u0.times)
        .map(|((a, b), &t)| {
            a.iter()
                .zip(b)
                .enumerate()
                .map(|(i, (&x, &y))| {
                    if !(y > T::zero()) && !flagged[i] {
                        return Err(ParabolicError::Division {
                            node: i,
                            t: to_f64(t),
                            value: to_f64(y),
                        });
                    }
                    Ok(x / y)
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    // residual of the drift equation on regular interior nodes
    let inner: Vec<usize> = (0..grid.len()).filter(|&i| !flagged[i]).collect();
    let two_h = h * lit(2.0);
    let drift_op = |v: &[T], u: &[T], i: usize| -> T {
        let mut lap = T::zero();
        let mut adv = T::zero();
        for a in 0..dim {
            let m = grid.neighbor(i, a, 0).expect("regular node");
            let p = grid.neighbor(i, a, 1).expect("regular node");
            lap += (v[p] - lit::<T>(2.0) * v[i] + v[m]) / (h * h);
            adv += (u[p] - u[m]) / two_h / u[i] * (v[p] - v[m]) / two_h;
        }
        lap + lit::<T>(2.0) * adv
    };
    let mut residuals = Vec::with_capacity(raw.len().saturating_sub(1));
    for n in 0..raw.len().saturating_sub(1) {
        let tau = u0.times[n + 1] - u0.times[n];
        let (va, vb) = (&raw[n], &raw[n + 1]);
        let (ua, ub) = (&u0.snapshots[n], &u0.snapshots[n + 1]);
        let worst = inner
            .iter()
            .map(|&i| {
                let lhs = (vb[i] - va[i]) / tau;
                let rhs = (drift_op(va, ua, i) + drift_op(vb, ub, i)) / lit(2.0);
                (lhs - rhs).abs()
            })
            .fold(T::zero(), T::max);
        residuals.push(worst);
    }
    let max_residual = residuals.iter().copied().fold(T::zero(), T::max);

    let snapshots = raw
        .into_iter()
        .map(|mut v| {
            for (i, src) in source.iter().enumerate() {
                if let Some(j) = *src {
                    v[i] = v[j];
                }
            }
            v
        })
        .collect();
    Ok(RatioTrajectory {
        trajectory: Trajectory {
            grid: grid.clone(),
            times: u0.times.clone(),
            snapshots,
            dt: u0.dt,
            theta: u0.theta,
            steps: u0.steps,
            min_value: T::nan(),
        },
        flagged,
        residuals,
        max_residual,
    })
}

fn nearest_unflagged<T: Real>(grid: &Grid<T>, flagged: &[bool]) -> Vec<Option<usize>> {
    let keep: Vec<usize> = (0..grid.len()).filter(|&i| !flagged[i]).collect();
    (0..grid.len())
        .map(|i| {
            if !flagged[i] {
                return None;
            }
            let p = grid.point(i);
            keep.iter()
                .copied()
                .min_by(|&a, &b| {
                    let da: T = grid.point(a).iter().zip(p).map(|(x, y)| (*x - *y) * (*x - *y)).sum();
                    let db: T = grid.point(b).iter().zip(p).map(|(x, y)| (*x - *y) * (*x - *y)).sum();
                    da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
                })
        })
        .collect()
}

/// Cell-centred grid for the Neumann problem on an interval or rectangle:
/// the nodes are the centres of the `h`-cells tiling the box.
pub fn neumann_grid<T: Real>(domain: &ConvexDomain<T>, h: T) -> Result<Grid<T>, ParabolicError> {
    let half = h / lit(2.0);
    let widths: Vec<T> = match domain.kind() {
        DomainKind::Interval { a, b } => vec![*b - *a],
        DomainKind::Rectangle { widths } => widths.clone(),
        _ => return Err(ParabolicError::NotBox),
    };
    for &w in &widths {
        let cells = w / h;
        if (cells - cells.round()).abs() > lit::<T>(1e-9) * cells {
            return Err(ParabolicError::NotBox);
        }
    }
    let enlarged = match domain.kind() {
        DomainKind::Interval { a, b } => ConvexDomain::interval(*a - half, *b + half),
        _ => ConvexDomain::rectangle(widths.iter().map(|&w| w + h).collect()),
    }
    .map_err(|_| ParabolicError::NotBox)?;
    Ok(Grid::new(enlarged, h)?)
}

/// Drift field `X` for [`heat_drift_neumann`], flattened `[node][axis]`.
pub enum Drift<'a, T> {
    None,
    Static(&'a [T]),
    /// `(t, x, out)` writes `X(x, t)` into `out`.
    Dynamic(&'a (dyn Fn(T, &[T], &mut [T]) + Sync)),
}

/// `v - alpha (Δv + X·∇v)` with ghost reflection at the box faces.
struct NeumannOp<'a, T> {
    grid: &'a Grid<T>,
    drift: &'a [T],
    alpha: T,
}

impl<T: Real> NeumannOp<'_, T> {
    fn generator(&self, v: &[T], i: usize) -> T {
        let h = self.grid.spacing();
        let dim = self.grid.dim();
        let mut acc = T::zero();
        for a in 0..dim {
            let m = self.grid.neighbor(i, a, 0).map_or(v[i], |j| v[j]);
            let p = self.grid.neighbor(i, a, 1).map_or(v[i], |j| v[j]);
            acc += (p - lit::<T>(2.0) * v[i] + m) / (h * h);
            if !self.drift.is_empty() {
                acc += self.drift[i * dim + a] * (p - m) / (h * lit(2.0));
            }
        }
        acc
    }

    fn tridiagonal(&self) -> Tridiagonal<T> {
        let n = self.grid.len();
        let h = self.grid.spacing();
        let mut t = Tridiagonal {
            lower: vec![T::zero(); n - 1],
            diag: vec![T::one(); n],
            upper: vec![T::zero(); n - 1],
        };
        let d2 = T::one() / (h * h);
        for i in 0..n {
            let x = if self.drift.is_empty() { T::zero() } else { self.drift[i] / (h * lit(2.0)) };
            let (cm, cp) = (d2 - x, d2 + x);
            // a missing neighbour reflects onto the node itself
            if i > 0 {
                t.lower[i - 1] = -self.alpha * cm;
            } else {
                t.diag[i] -= self.alpha * cm;
            }
            if i + 1 < n {
                t.upper[i] = -self.alpha * cp;
            } else {
                t.diag[i] -= self.alpha * cp;
            }
            t.diag[i] += self.alpha * lit(2.0) * d2;
        }
        t
    }
}

impl<T: Real> LinearOperator<T> for NeumannOp<'_, T> {
    fn size(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = x[i] - self.alpha * self.generator(x, i);
        }
    }
}

/// Crank–Nicolson for `v_t = Δv + X·∇v`, `∂v/∂ν = 0`, on the cell-centred
/// grid of [`neumann_grid`]. The drift is frozen at mid-step.
pub fn heat_drift_neumann<T: Real>(
    grid: &Grid<T>,
    drift: Drift<'_, T>,
    v0: &[T],
    t_end: T,
    dt: T,
    store_every: usize,
) -> Result<Trajectory<T>, ParabolicError> {
    let n = grid.len();
    let dim = grid.dim();
    if v0.len() != n {
        return Err(ParabolicError::Length { expected: n, got: v0.len() });
    }
    if let Drift::Static(x) = &drift {
        if x.len() != n * dim {
            return Err(ParabolicError::Length {
                expected: n * dim,
                got: x.len(),
            });
        }
    }
    let (steps, dt) = step_count(t_end, dt)?;
    let half = dt / lit(2.0);
    let mut field = match &drift {
        Drift::None => Vec::new(),
        Drift::Static(x) => x.to_vec(),
        Drift::Dynamic(_) => vec![T::zero(); n * dim],
    };
    let fill = |field: &mut [T], t: T| {
        if let Drift::Dynamic(f) = &drift {
            for i in 0..n {
                f(t, grid.point(i), &mut field[i * dim..(i + 1) * dim]);
            }
        }
    };
    let opts = KrylovOptions {
        rel_tol: lit(1e-13),
        max_iter: 20 * n.max(100),
    };
    let mut rec = Recorder::new(v0, store_every);
    let mut v = v0.to_vec();
    let mut rhs = vec![T::zero(); n];
    let mut lu = None;
    for step in 1..=steps {
        let dynamic = matches!(drift, Drift::Dynamic(_));
        if dynamic {
            fill(&mut field, dt * count(step - 1) + half);
        }
        let explicit = NeumannOp {
            grid,
            drift: &field,
            alpha: -half,
        };
        explicit.apply(&v, &mut rhs);
        let implicit = NeumannOp {
            grid,
            drift: &field,
            alpha: half,
        };
        if dim == 1 {
            if dynamic || lu.is_none() {
                lu = Some(implicit.tridiagonal().factor()?);
            }
            v.copy_from_slice(&rhs);
            lu.as_ref().expect("factored").solve_in_place(&mut v);
        } else {
            bicgstab(&implicit, &rhs, &mut v, &opts)?;
        }
        rec.record(step, steps, dt, &v);
    }
    Ok(Trajectory {
        grid: grid.clone(),
        times: rec.times,
        snapshots: rec.snapshots,
        dt,
        theta: lit(0.5),
        steps,
        min_value: rec.min_value,
    })
}

/// Continuity checks of every snapshot against a time-indexed modulus.
#[derive(Clone, Debug)]
pub struct PreservationReport<T> {
    pub reports: Vec<(T, PairReport<T>)>,
    pub first_failure: Option<T>,
    pub passed: bool,
}

pub fn modulus_preservation_test<T: Real>(
    trajectory: &Trajectory<T>,
    family: impl Fn(T) -> Result<ModulusFn<T>, ParabolicError>,
    sample: &PairSample<T>,
    tolerance: T,
) -> Result<PreservationReport<T>, ParabolicError> {
    let mut reports = Vec::with_capacity(trajectory.times.len());
    let mut first_failure = None;
    for (&t, v) in trajectory.times.iter().zip(&trajectory.snapshots) {
        let eta = family(t)?;
        let r = check_modulus_of_continuity(&trajectory.grid, v, &eta, sample, tolerance)?;
        if !r.passed && first_failure.is_none() {
            first_failure = Some(t);
        }
        reports.push((t, r));
    }
    Ok(PreservationReport {
        passed: first_failure.is_none(),
        reports,
        first_failure,
    })
}

/// ψ on the uniform grid `z_i = i·D/(2N)`, `i = 0..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiState<T> {
    pub t: T,
    pub psi: Vec<T>,
    pub k: T,
}

#[derive(Clone, Copy, Debug)]
pub struct PsiOptions {
    /// Cells on `[0, D/2]`.
    pub cells: usize,
    /// Evenly spaced snapshots kept besides `t = 0` and the final state.
    pub snapshots: usize,
}

impl Default for PsiOptions {
    fn default() -> Self {
        Self {
            cells: 2000,
            snapshots: 50,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PsiEvolution<T> {
    pub states: Vec<PsiState<T>>,
    pub spacing: T,
    pub dt_requested: T,
    pub dt: T,
    /// `dt` was cut to respect `dt ≤ h/(4 max|ψ|)`.
    pub dt_reduced: bool,
    pub steps: usize,
    /// Largest single-step increase of ψ at any interior node, and the
    /// `(t, z)` where it happened.
    pub max_increase: T,
    pub max_increase_at: (T, T),
    /// Fitted `μ` and the max deviation of `ψ' + ψ² - Ṽ` from `-μ` at the
    /// final state.
    pub mu: T,
    pub stationarity_residual: T,
    /// `sup |ψ(T) - ψ(T - Δ)|` over the last snapshot interval.
    pub final_drift: T,
}

impl<T: Real> PsiEvolution<T> {
    pub fn last(&self) -> &PsiState<T> {
        self.states.last().expect("at least the initial state")
    }

    pub fn z(&self, i: usize) -> T {
        self.spacing * count(i)
    }

    /// ψ is non-increasing in t up to `tol`.
    pub fn monotone(&self, tol: T) -> bool {
        !(self.max_increase > tol)
    }

    pub fn to_modulus(&self) -> Result<ModulusFn<T>, ParabolicError> {
        let psi = &self.last().psi;
        Ok(ModulusFn::new(self.spacing * count(psi.len() - 1), psi.clone())?)
    }
}

/// Fourth-order stencils on `z_i = i·h`, `i = 0..=N`. The left end uses the
/// oddness of ψ (`ψ(-z) = -ψ(z)`), the right end one-sided formulas.
struct Stencil<T> {
    h: T,
}

impl<T: Real> Stencil<T> {
    /// ψ at index `i >= -2` with odd reflection through 0.
    fn odd(psi: &[T], i: isize) -> T {
        if i < 0 {
            -psi[(-i) as usize]
        } else {
            psi[i as usize]
        }
    }

    fn second(&self, psi: &[T], i: usize) -> T {
        let n = psi.len() - 1;
        let h2 = self.h * self.h * lit(12.0);
        if i + 1 < n {
            let j = i as isize;
            let f = |k: isize| Self::odd(psi, j + k);
            (-f(2) + lit::<T>(16.0) * f(1) - lit::<T>(30.0) * f(0) + lit::<T>(16.0) * f(-1) - f(-2)) / h2
        } else {
            let f = |k: usize| psi[n - k];
            (lit::<T>(10.0) * f(0) - lit::<T>(15.0) * f(1) - lit::<T>(4.0) * f(2) + lit::<T>(14.0) * f(3)
                - lit::<T>(6.0) * f(4)
                + f(5))
                / h2
        }
    }

    /// Derivative of an even grid function (such as ψ²).
    fn first_even(&self, g: &[T], i: usize) -> T {
        let n = g.len() - 1;
        let h12 = self.h * lit(12.0);
        if i + 1 < n {
            let j = i as isize;
            let f = |k: isize| g[(j + k).unsigned_abs()];
            (-f(2) + lit::<T>(8.0) * f(1) - lit::<T>(8.0) * f(-1) + f(-2)) / h12
        } else {
            let f = |k: usize| g[n - k];
            (lit::<T>(3.0) * f(0) + lit::<T>(10.0) * f(1) - lit::<T>(18.0) * f(2) + lit::<T>(6.0) * f(3) - f(4)) / h12
        }
    }

    /// Derivative of ψ itself (odd), for the Riccati residual.
    fn first_odd(&self, psi: &[T], i: usize) -> T {
        let n = psi.len() - 1;
        let h12 = self.h * lit(12.0);
        if i + 1 < n {
            let j = i as isize;
            let f = |k: isize| Self::odd(psi, j + k);
            (-f(2) + lit::<T>(8.0) * f(1) - lit::<T>(8.0) * f(-1) + f(-2)) / h12
        } else {
            let f = |k: usize| psi[n - k];
            let back = if i == n {
                lit::<T>(25.0) * f(0) - lit::<T>(48.0) * f(1) + lit::<T>(36.0) * f(2) - lit::<T>(16.0) * f(3)
                    + lit::<T>(3.0) * f(4)
            } else {
                lit::<T>(3.0) * f(0) + lit::<T>(10.0) * f(1) - lit::<T>(18.0) * f(2) + lit::<T>(6.0) * f(3) - f(4)
            };
            back / h12
        }
    }
}

/// Pointwise Riccati expression `ψ' + ψ² - Ṽ` at every node (fourth-order
/// `ψ'`); constant exactly when ψ is a stationary Riccati solution.
pub fn riccati_expression<T: Real>(v: &PotentialSpec<T>, psi: &[T], h: T) -> Vec<T> {
    let s = Stencil { h };
    (0..psi.len())
        .map(|i| s.first_odd(psi, i) + psi[i] * psi[i] - v.value_1d(h * count(i)))
        .collect()
}

/// Semi-implicit scheme for `ψ_t = ψ'' + (ψ²)' - Ṽ'` on `[0, D/2]` with
/// `ψ(0) = 0` and `ψ(D/2) = -k` pinned. Space is fourth order; the
/// second-order part of `ψ''` is implicit, the rest of `ψ''` and the
/// transport term are explicit.
pub fn evolve_psi<T: Real>(
    v: &PotentialSpec<T>,
    d: T,
    psi0: &ModulusFn<T>,
    k: T,
    t_end: T,
    dt: T,
    opts: &PsiOptions,
) -> Result<PsiEvolution<T>, ParabolicError> {
    v.ensure_even(d)?;
    let n = opts.cells.max(8);
    let half = d / lit(2.0);
    let h = half / count(n);
    let mut psi: Vec<T> = (0..=n)
        .map(|i| {
            let z = if i == n { half } else { h * count(i) };
            psi0.eval(z)
        })
        .collect::<Result<_, _>>()?;
    let pin_tol = lit::<T>(1e-8) * (T::one() + k.abs());
    if psi[0].abs() > pin_tol || (psi[n] + k).abs() > pin_tol {
        return Err(ParabolicError::PinnedEnds {
            at_zero: to_f64(psi[0]),
            at_end: to_f64(psi[n]),
            k: to_f64(k),
        });
    }
    psi[0] = T::zero();
    psi[n] = -k;
    if !(dt > T::zero()) || !(t_end > T::zero()) {
        return Err(ParabolicError::BadStep {
            dt: to_f64(dt),
            t_end: to_f64(t_end),
        });
    }
    let force: Vec<T> = (0..=n).map(|i| v.derivative_1d(h * count(i))).collect();
    let stencil = Stencil { h };
    let cfl = |psi: &[T]| lit::<T>(0.25) * h / psi.iter().fold(T::zero(), |m, x| m.max(x.abs())).max(T::one());
    let mut step_dt = dt.min(cfl(&psi)).min(t_end);
    let mut dt_reduced = step_dt < dt;
    let factor = |tau: T| -> Result<_, ParabolicError> {
        let m = n - 1;
        let r = tau / (h * h);
        Ok(Tridiagonal::symmetric(vec![T::one() + lit::<T>(2.0) * r; m], vec![-r; m - 1]).factor()?)
    };
    let mut lu = factor(step_dt)?;
    let snap_every = t_end / count(opts.snapshots.max(1));
    let mut next_snap = snap_every;
    let mut states = vec![PsiState {
        t: T::zero(),
        psi: psi.clone(),
        k,
    }];
    let mut t = T::zero();
    let mut steps = 0;
    let mut max_increase = T::neg_infinity();
    let mut max_increase_at = (T::zero(), T::zero());
    let mut rhs = vec![T::zero(); n - 1];
    let mut sq = vec![T::zero(); n + 1];
    let mut prev_snapshot = psi.clone();
    let end = t_end * (T::one() - lit(1e-14));
    while t < end {
        let limit = cfl(&psi);
        let mut tau = step_dt.min(t_end - t);
        if tau > limit {
            dt_reduced = true;
            step_dt = limit;
            tau = limit;
            lu = factor(step_dt)?;
        }
        if tau < step_dt {
            lu = factor(tau)?;
        }
        let r = tau / (h * h);
        for (s, &p) in sq.iter_mut().zip(&psi) {
            *s = p * p;
        }
        for i in 1..n {
            let lap2 = (psi[i + 1] - lit::<T>(2.0) * psi[i] + psi[i - 1]) / (h * h);
            let correction = stencil.second(&psi, i) - lap2;
            rhs[i - 1] = psi[i] + tau * (correction + stencil.first_even(&sq, i) - force[i]);
        }
        rhs[0] += r * psi[0];
        rhs[n - 2] += r * psi[n];
        lu.solve_in_place(&mut rhs);
        for i in 1..n {
            let rise = rhs[i - 1] - psi[i];
            if rise > max_increase {
                max_increase = rise;
                max_increase_at = (t + tau, h * count(i));
            }
            psi[i] = rhs[i - 1];
        }
        t += tau;
        steps += 1;
        let last = !(t < end);
        if t >= next_snap * (T::one() - lit(1e-12)) || last {
            if last {
                prev_snapshot = states.last().expect("initial state").psi.clone();
            }
            states.push(PsiState { t, psi: psi.clone(), k });
            next_snap += snap_every;
        }
    }
    let flux = riccati_expression(v, &psi, h);
    let mu = -flux.iter().copied().sum::<T>() / count(flux.len());
    let stationarity_residual = flux.iter().fold(T::zero(), |m, &g| m.max((g + mu).abs()));
    let final_drift = psi
        .iter()
        .zip(&prev_snapshot)
        .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
    Ok(PsiEvolution {
        states,
        spacing: h,
        dt_requested: dt,
        dt: step_dt,
        dt_reduced,
        steps,
        max_increase,
        max_increase_at,
        mu,
        stationarity_residual,
        final_drift,
    })
}

/// Least-squares slope of `log osc` over a time window.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit<T> {
    /// Decay exponent (minus the slope).
    pub rate: T,
    pub intercept: T,
    pub window: (T, T),
    pub points: usize,
    /// RMS deviation of `log osc` from the fitted line.
    pub rms: T,
}

/// Oscillations below this are treated as underflow.
pub const OSC_FLOOR: f64 = 1e-13;

pub fn osc_decay_rate<T: Real>(times: &[T], osc: &[T], window: (T, T)) -> Result<DecayFit<T>, ParabolicError> {
    if times.len() != osc.len() {
        return Err(ParabolicError::Length {
            expected: times.len(),
            got: osc.len(),
        });
    }
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(ParabolicError::Window(format!("empty window [{}, {}]", to_f64(t0), to_f64(t1))));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (&t, &o) in times.iter().zip(osc) {
        if t < t0 || t > t1 {
            continue;
        }
        if !(o > lit(OSC_FLOOR)) {
            return Err(ParabolicError::Underflow {
                t: to_f64(t),
                osc: to_f64(o),
            });
        }
        x.push(t);
        y.push(o.ln());
    }
    if x.len() < 3 {
        return Err(ParabolicError::Window(format!("only {} samples inside the window", x.len())));
    }
    let (intercept, slope) = fit_line(&x, &y);
    let rms = (x
        .iter()
        .zip(&y)
        .map(|(&t, &l)| {
            let e = l - intercept - slope * t;
            e * e
        })
        .sum::<T>()
        / count(x.len()))
    .sqrt();
    Ok(DecayFit {
        rate: -slope,
        intercept,
        window,
        points: x.len(),
        rms,
    })
}

/// From the first time `osc` has dropped 10× below its initial value to the
/// last time it is still above `1e-10`.
pub fn auto_window<T: Real>(times: &[T], osc: &[T]) -> Result<(T, T), ParabolicError> {
    let first = *osc.first().ok_or_else(|| ParabolicError::Window("no samples".into()))?;
    if !(first > lit(OSC_FLOOR)) {
        return Err(ParabolicError::Underflow {
            t: to_f64(times[0]),
            osc: to_f64(first),
        });
    }
    let start = osc
        .iter()
        .position(|&o| o <= first / lit(10.0))
        .ok_or_else(|| ParabolicError::Window("oscillation never dropped by 10x".into()))?;
    let end = osc
        .iter()
        .rposition(|&o| o > lit(1e-10))
        .ok_or_else(|| ParabolicError::Window("oscillation below 1e-10 throughout".into()))?;
    if end <= start + 1 {
        return Err(ParabolicError::Window("window shorter than three samples".into()));
    }
    Ok((times[start], times[end]))
}

#[derive(Clone, Debug)]
pub struct DecayConfig<T> {
    pub h: T,
    pub dt: T,
    /// Defaults to `25/(λ1-λ0)`.
    pub t_end: Option<T>,
    pub store_every: usize,
    /// Tolerance of the stage-1 convexity check.
    pub convexity_tol: T,
    pub pairs: PairOptions<T>,
    /// Relative slack in `rate ≥ gap1d`.
    pub rate_tol: T,
    pub eigen: EigenOptions<T>,
}

impl<T: Real> Default for DecayConfig<T> {
    fn default() -> Self {
        Self {
            h: lit(1.0 / 64.0),
            dt: lit(1e-3),
            t_end: None,
            store_every: 1,
            convexity_tol: lit(1e-8),
            pairs: PairOptions {
                per_bin: 128,
                ..PairOptions::default()
            },
            rate_tol: lit(1e-3),
            eigen: EigenOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GapDecayReport<T> {
    pub convexity: PairReport<T>,
    pub lambda0: T,
    pub lambda1: T,
    pub gap_nd: T,
    pub gap_1d: T,
    pub fit: DecayFit<T>,
    pub max_drift_residual: T,
    pub t_end: T,
    pub dt: T,
    pub passed: bool,
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> ParabolicError {
    move |e| ParabolicError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// `Ṽ'` sampled on `[0, D/2]`.
pub fn comparison_modulus<T: Real>(vt: &PotentialSpec<T>, d: T, n: usize) -> Result<ModulusFn<T>, ParabolicError> {
    Ok(ModulusFn::from_fn(d / lit(2.0), n, Endpoint::Finite, |z| vt.derivative_1d(z))?)
}

/// Decay of `osc(u1/u0)` for the flows started at `φ0 + 0.1 φ1` and `φ0`,
/// compared with the one-dimensional gap of `Ṽ`.
pub fn gap_from_decay<T: Real>(
    domain: &ConvexDomain<T>,
    v: &PotentialSpec<T>,
    vt: &PotentialSpec<T>,
    cfg: &DecayConfig<T>,
) -> Result<GapDecayReport<T>, ParabolicError> {
    let d = domain.diameter();
    let op = discretize(domain, v, cfg.h).map_err(stage("discretize"))?;
    let modulus = comparison_modulus(vt, d, 2001).map_err(stage("convexity"))?;
    let sample = PairSample::stratified(op.grid(), &cfg.pairs).map_err(stage("convexity"))?;
    let convexity = check_convexity_modulus(v, &modulus, &sample, cfg.convexity_tol).map_err(stage("convexity"))?;
    if !convexity.passed {
        return Err(ParabolicError::Stage {
            stage: "convexity",
            message: format!("Ṽ' is not a modulus of convexity for V (worst {:e})", to_f64(convexity.worst)),
        });
    }
    let pairs = gap_eigenpairs(&op, &cfg.eigen, None).map_err(stage("eigen"))?;
    let (lambda0, lambda1) = (pairs.values[0], pairs.values[1]);
    let gap_nd = lambda1 - lambda0;
    let t_end = cfg.t_end.unwrap_or(lit::<T>(25.0) / gap_nd);
    let phi0 = &pairs.vectors[0];
    let seed: Vec<T> = phi0
        .iter()
        .zip(&pairs.vectors[1])
        .map(|(&a, &b)| a + lit::<T>(0.1) * b)
        .collect();
    let u0 = heat_dirichlet(&op, phi0, t_end, cfg.dt, cfg.store_every).map_err(stage("flow"))?;
    let u1 = heat_dirichlet(&op, &seed, t_end, cfg.dt, cfg.store_every).map_err(stage("flow"))?;
    let ratio = drift_ratio(&u1, &u0).map_err(stage("ratio"))?;
    let osc = ratio.oscillation();
    let window = auto_window(&ratio.trajectory.times, &osc).map_err(stage("fit"))?;
    let fit = osc_decay_rate(&ratio.trajectory.times, &osc, window).map_err(stage("fit"))?;
    let gap_1d = gap1d(vt, d, Method::Shooting { samples: 400 }, None)
        .map_err(stage("gap1d"))?
        .gap;
    let passed = fit.rate >= gap_1d * (T::one() - cfg.rate_tol);
    Ok(GapDecayReport {
        convexity,
        lambda0,
        lambda1,
        gap_nd,
        gap_1d,
        fit,
        max_drift_residual: ratio.max_residual,
        t_end,
        dt: u0.dt,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn synthetic_two_mode_decay() {
        let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        let osc: Vec<f64> = times.iter().map(|&t| (-t).exp() + (-5.0 * t).exp()).collect();
        let fit = osc_decay_rate(&times, &osc, (8.0, 20.0)).unwrap();
        assert!((fit.rate - 1.0).abs() < 1e-3, "{}", fit.rate);
        let flat = vec![0.0; times.len()];
        assert!(matches!(osc_decay_rate(&times, &flat, (0.0, 1.0)), Err(ParabolicError::Underflow { .. })));
    }

    #[test]
    fn neumann_grid_is_cell_centred() {
        let g: Grid<f64> = neumann_grid(&ConvexDomain::interval(-0.5, 0.5).unwrap(), 1.0 / 20.0).unwrap();
        assert_eq!(g.len(), 20);
        assert!((g.point(0)[0] + 0.475).abs() < 1e-12);
        assert!((g.point(19)[0] - 0.475).abs() < 1e-12);
        assert!(neumann_grid(&ConvexDomain::interval(0.0, 1.0).unwrap(), 0.03).is_err());
        assert!(neumann_grid(&ConvexDomain::disc([0.0, 0.0], 1.0).unwrap(), 0.05).is_err());
    }

    #[test]
    fn neumann_constant_stays_constant() {
        let g = neumann_grid(&ConvexDomain::square(1.0).unwrap(), 1.0 / 20.0).unwrap();
        let x: Vec<f64> = g.points().flat_map(|p| [p[1], -p[0]]).collect();
        let v0 = vec![2.5; g.len()];
        let tr = heat_drift_neumann(&g, Drift::Static(&x), &v0, 0.1, 0.01, 1).unwrap();
        assert!(tr.last().iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn dirichlet_cosine_decays_at_pi_squared() {
        let d = ConvexDomain::interval(-0.5, 0.5).unwrap();
        let op = discretize(&d, &PotentialSpec::zero(1), 1.0 / 256.0).unwrap();
        let u0: Vec<f64> = op.grid().points().map(|p| (PI * p[0]).cos()).collect();
        let tr = heat_dirichlet(&op, &u0, 0.5, 1e-4, 10).unwrap();
        let amp: Vec<f64> = tr.snapshots.iter().map(|s| s[op.len() / 2]).collect();
        let fit = osc_decay_rate(&tr.times, &amp, (0.0, 0.5)).unwrap();
        assert!((fit.rate - PI * PI).abs() < 1e-3, "{}", fit.rate);
    }
}
