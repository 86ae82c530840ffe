//! Pairwise inequalities over sampled point pairs: moduli of convexity of
//! `V`, of concavity of `log φ0`, of continuity of a function, and of
//! contraction of a vector field.
//!
//! Every check reports the worst value of `lhs - rhs` over the sample, so a
//! check passes when that value is at most the tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{ConvexDomain, Grid, GridError};
use crate::modulus::{Endpoint, Interp, ModulusError, ModulusFn};
use crate::potential::{PotentialError, PotentialSpec};
use crate::scalar::{count, lit, to_f64, Real};
use crate::schrod_nd::{discretize, smallest_eigenpairs, SchrodError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModuliError {
    #[error(transparent)]
    Modulus(#[from] ModulusError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Schrod(#[from] SchrodError),
    #[error("grid function has {got} values, grid has {expected} nodes")]
    Length { expected: usize, got: usize },
    #[error("pair sample was drawn on a different grid")]
    ForeignSample,
    #[error("ground state is not positive at node {node} (value {value:e})")]
    NonPositive { node: usize, value: f64 },
    #[error("modulus cutoff {cutoff} lies inside the needed range (|y-x|/2 up to {needed})")]
    PoleInRange { cutoff: f64, needed: f64 },
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug)]
pub struct PairOptions<T> {
    pub bins: usize,
    pub per_bin: usize,
    pub seed: u64,
    /// Pairs with an endpoint closer than this to the boundary are rejected
    /// (and counted).
    pub boundary_margin: T,
    /// Draws allowed per requested pair before a bin is given up.
    pub attempts_per_pair: usize,
}

impl<T: Real> Default for PairOptions<T> {
    fn default() -> Self {
        Self {
            bins: 32,
            per_bin: 512,
            seed: 20_240_601,
            boundary_margin: T::zero(),
            attempts_per_pair: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bin<T> {
    pub lo: T,
    pub hi: T,
    pub count: usize,
}

/// Pairs of grid nodes, stratified by distance.
#[derive(Clone, Debug)]
pub struct PairSample<T> {
    grid: Grid<T>,
    pairs: Vec<[usize; 2]>,
    pub seed: Option<u64>,
    pub bins: Vec<Bin<T>>,
    /// Candidate pairs rejected for touching the boundary margin.
    pub excluded: usize,
    pub boundary_margin: T,
}

fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (y - x) * (y - x)).sum::<T>().sqrt()
}

fn make_bins<T: Real>(d: T, n: usize) -> Vec<Bin<T>> {
    (0..n)
        .map(|b| Bin {
            lo: d * count(b) / count(n),
            hi: d * count(b + 1) / count(n),
            count: 0,
        })
        .collect()
}

impl<T: Real> PairSample<T> {
    /// Stratified random pairs: for each distance bin, pick a node, a
    /// direction and a distance in the bin, and snap the far end to the
    /// nearest node.
    pub fn stratified(grid: &Grid<T>, opts: &PairOptions<T>) -> Result<Self, ModuliError> {
        if opts.bins == 0 || opts.per_bin == 0 {
            return Err(ModuliError::Invalid("need at least one bin and one pair per bin".into()));
        }
        let d = grid.domain().diameter();
        let dim = grid.dim();
        let h = grid.spacing();
        let origin = grid.origin().to_vec();
        let near: Vec<bool> = (0..grid.len())
            .map(|i| opts.boundary_margin > T::zero() && grid.boundary_distance(i) < opts.boundary_margin)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut bins = make_bins(d, opts.bins);
        let mut pairs = Vec::with_capacity(opts.bins * opts.per_bin);
        let mut excluded = 0;
        let mut y = vec![T::zero(); dim];
        let mut e = vec![T::zero(); dim];
        let mut idx = vec![0usize; dim];
        for bin in bins.iter_mut() {
            let mut attempts = 0;
            while bin.count < opts.per_bin && attempts < opts.per_bin * opts.attempts_per_pair {
                attempts += 1;
                let i = rng.gen_range(0..grid.len());
                random_direction(&mut rng, &mut e);
                let r = bin.lo + (bin.hi - bin.lo) * lit(rng.gen::<f64>());
                let x = grid.point(i);
                let mut inside = true;
                for k in 0..dim {
                    y[k] = x[k] + r * e[k];
                    let s = ((y[k] - origin[k]) / h).round();
                    match s.to_usize() {
                        Some(v) if s >= T::zero() => idx[k] = v,
                        _ => inside = false,
                    }
                }
                let j = match inside.then(|| grid.node_at(&idx)).flatten() {
                    Some(j) if j != i => j,
                    _ => continue,
                };
                let dist = distance(grid.point(i), grid.point(j));
                if dist < bin.lo || dist >= bin.hi {
                    continue;
                }
                if near[i] || near[j] {
                    excluded += 1;
                    continue;
                }
                bin.count += 1;
                pairs.push([i, j]);
            }
        }
        Ok(Self {
            grid: grid.clone(),
            pairs,
            seed: Some(opts.seed),
            bins,
            excluded,
            boundary_margin: opts.boundary_margin,
        })
    }

    /// Every unordered pair of distinct nodes (brute force, small grids).
    pub fn all_pairs(grid: &Grid<T>, boundary_margin: T, bins: usize) -> Self {
        let n = grid.len();
        let near: Vec<bool> = (0..n)
            .map(|i| boundary_margin > T::zero() && grid.boundary_distance(i) < boundary_margin)
            .collect();
        let d = grid.domain().diameter();
        let mut table = make_bins(d, bins.max(1));
        let mut pairs = Vec::new();
        let mut excluded = 0;
        for i in 0..n {
            for j in i + 1..n {
                if near[i] || near[j] {
                    excluded += 1;
                    continue;
                }
                let dist = distance(grid.point(i), grid.point(j));
                let b = (dist / d * count(table.len())).floor().to_usize().unwrap_or(0).min(table.len() - 1);
                table[b].count += 1;
                pairs.push([i, j]);
            }
        }
        Self {
            grid: grid.clone(),
            pairs,
            seed: None,
            bins: table,
            excluded,
            boundary_margin,
        }
    }

    /// Explicit node pairs.
    pub fn from_pairs(grid: &Grid<T>, pairs: Vec<[usize; 2]>) -> Self {
        Self {
            grid: grid.clone(),
            pairs,
            seed: None,
            bins: Vec::new(),
            excluded: 0,
            boundary_margin: T::zero(),
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn pairs(&self) -> &[[usize; 2]] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Largest `|y - x|` in the sample.
    pub fn max_distance(&self) -> T {
        self.pairs
            .iter()
            .map(|&[i, j]| distance(self.grid.point(i), self.grid.point(j)))
            .fold(T::zero(), T::max)
    }

    fn ensure_grid(&self, grid: &Grid<T>, len: usize) -> Result<(), ModuliError> {
        if !self.grid.same_as(grid) {
            return Err(ModuliError::ForeignSample);
        }
        if len != grid.len() {
            return Err(ModuliError::Length {
                expected: grid.len(),
                got: len,
            });
        }
        Ok(())
    }
}

fn random_direction<T: Real>(rng: &mut ChaCha8Rng, e: &mut [T]) {
    match e.len() {
        1 => e[0] = if rng.gen::<bool>() { T::one() } else { -T::one() },
        2 => {
            let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            e[0] = lit(t.cos());
            e[1] = lit(t.sin());
        }
        _ => loop {
            let v: Vec<f64> = (0..e.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-3 && n <= 1.0 {
                for (ek, vk) in e.iter_mut().zip(v) {
                    *ek = lit(vk / n);
                }
                break;
            }
        },
    }
}

/// Worst case of a pairwise inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct PairReport<T> {
    /// Largest `lhs - rhs`; `-∞` if nothing was checked.
    pub worst: T,
    /// Endpoints `(x, y)` of the worst pair.
    pub arg: Option<(Vec<T>, Vec<T>)>,
    pub checked: usize,
    /// Pairs whose half-distance lies beyond the modulus cutoff.
    pub skipped: usize,
    /// Pairs rejected for the boundary margin (at sampling or check time).
    pub excluded: usize,
    pub tolerance: T,
    pub passed: bool,
    pub seed: Option<u64>,
    pub bins: usize,
}

enum PairValue<T> {
    Value(T),
    Skip,
    Exclude,
}

fn run_check<T: Real>(
    sample: &PairSample<T>,
    tolerance: T,
    f: impl Fn(usize, usize, T) -> Result<PairValue<T>, ModuliError> + Sync,
) -> Result<PairReport<T>, ModuliError> {
    let grid = &sample.grid;
    // (worst, index, checked, skipped, excluded), merged by max with the
    // lower index winning ties so the result does not depend on scheduling
    type Acc<T> = (T, usize, usize, usize, usize);
    let identity = || -> Acc<T> { (T::neg_infinity(), usize::MAX, 0, 0, 0) };
    let merge = |a: Acc<T>, b: Acc<T>| -> Acc<T> {
        let pick_b = b.0 > a.0 || (b.0 == a.0 && b.1 < a.1);
        let (w, i) = if pick_b { (b.0, b.1) } else { (a.0, a.1) };
        (w, i, a.2 + b.2, a.3 + b.3, a.4 + b.4)
    };
    let acc = sample
        .pairs
        .par_iter()
        .enumerate()
        .map(|(k, &[i, j])| -> Result<Acc<T>, ModuliError> {
            let z = distance(grid.point(i), grid.point(j)) / lit(2.0);
            Ok(match f(i, j, z)? {
                PairValue::Value(v) => (v, k, 1, 0, 0),
                PairValue::Skip => (T::neg_infinity(), usize::MAX, 0, 1, 0),
                PairValue::Exclude => (T::neg_infinity(), usize::MAX, 0, 0, 1),
            })
        })
        .try_reduce(identity, |a, b| Ok(merge(a, b)))?;
    let arg = (acc.1 != usize::MAX).then(|| {
        let [i, j] = sample.pairs[acc.1];
        (grid.point(i).to_vec(), grid.point(j).to_vec())
    });
    Ok(PairReport {
        worst: acc.0,
        arg,
        checked: acc.2,
        skipped: acc.3,
        excluded: acc.4 + sample.excluded,
        tolerance,
        passed: !(acc.0 > tolerance),
        seed: sample.seed,
        bins: sample.bins.len(),
    })
}

fn chord<T: Real>(grid: &Grid<T>, i: usize, j: usize) -> Vec<T> {
    let (x, y) = (grid.point(i), grid.point(j));
    let d = distance(x, y);
    x.iter().zip(y).map(|(&a, &b)| (b - a) / d).collect()
}

fn directional_difference<T: Real>(field: &[T], dim: usize, i: usize, j: usize, e: &[T]) -> T {
    (0..dim).map(|k| (field[j * dim + k] - field[i * dim + k]) * e[k]).sum()
}

fn ensure_range<T: Real>(m: &ModulusFn<T>, sample: &PairSample<T>) -> Result<(), ModuliError> {
    let needed = sample.max_distance() / lit(2.0);
    if m.endpoint() == Endpoint::PoleAtRight && needed > m.cutoff() {
        return Err(ModuliError::PoleInRange {
            cutoff: to_f64(m.cutoff()),
            needed: to_f64(needed),
        });
    }
    Ok(())
}

fn potential_gradients<T: Real>(v: &PotentialSpec<T>, grid: &Grid<T>) -> Result<Vec<T>, ModuliError> {
    let mut out = Vec::with_capacity(grid.len() * grid.dim());
    for p in grid.points() {
        out.extend(v.grad(p)?);
    }
    Ok(out)
}

/// Worst `2Ṽ'(|y-x|/2) - (∇V(y) - ∇V(x))·(y-x)/|y-x|`.
pub fn check_convexity_modulus<T: Real>(
    v: &PotentialSpec<T>,
    modulus: &ModulusFn<T>,
    sample: &PairSample<T>,
    tolerance: T,
) -> Result<PairReport<T>, ModuliError> {
    ensure_range(modulus, sample)?;
    let grid = &sample.grid;
    let g = potential_gradients(v, grid)?;
    let dim = grid.dim();
    run_check(sample, tolerance, |i, j, z| {
        let e = chord(grid, i, j);
        let lhs = directional_difference(&g, dim, i, j, &e);
        Ok(PairValue::Value(lit::<T>(2.0) * modulus.eval(z)? - lhs))
    })
}

/// Per-bin infimum of `(∇V(x+2ze) - ∇V(x))·e / 2` over the sample, as a step
/// function on `z_bins` equal cells of `[0, D/2]`. Empty bins hold NaN and
/// evaluate to [`ModulusError::Missing`].
pub fn optimal_convexity_modulus<T: Real>(
    v: &PotentialSpec<T>,
    z_bins: usize,
    sample: &PairSample<T>,
) -> Result<ModulusFn<T>, ModuliError> {
    if z_bins == 0 {
        return Err(ModuliError::Invalid("need at least one z bin".into()));
    }
    let grid = &sample.grid;
    let half = grid.domain().diameter() / lit(2.0);
    let g = potential_gradients(v, grid)?;
    let dim = grid.dim();
    let mut samples = vec![T::nan(); z_bins + 1];
    // same cell arithmetic as ModulusFn::eval with Step interpolation
    let spacing = half / count(z_bins);
    for &[i, j] in &sample.pairs {
        let z = distance(grid.point(i), grid.point(j)) / lit(2.0);
        let e = chord(grid, i, j);
        let value = directional_difference(&g, dim, i, j, &e) / lit(2.0);
        let b = (z / spacing).floor().to_usize().unwrap_or(0).min(z_bins);
        if samples[b].is_nan() || value < samples[b] {
            samples[b] = value;
        }
    }
    // the node at D/2 shares the last cell's value unless a pair hit it exactly
    if samples[z_bins].is_nan() {
        samples[z_bins] = samples[z_bins - 1];
    }
    Ok(ModulusFn::new(half, samples)?.with_interp(Interp::Step))
}

/// `∇ log φ` at every node (flattened `[node][axis]`), from three-point
/// differences that use the Shortley–Weller arm and `φ = 0` on the boundary.
pub fn grad_log<T: Real>(grid: &Grid<T>, phi: &[T]) -> Result<Vec<T>, ModuliError> {
    if phi.len() != grid.len() {
        return Err(ModuliError::Length {
            expected: grid.len(),
            got: phi.len(),
        });
    }
    if let Some((node, &value)) = phi.iter().enumerate().find(|(_, &p)| !(p > T::zero())) {
        return Err(ModuliError::NonPositive {
            node,
            value: to_f64(value),
        });
    }
    let dim = grid.dim();
    let mut out = vec![T::zero(); grid.len() * dim];
    for i in 0..grid.len() {
        for a in 0..dim {
            let hm = grid.arm(i, a, 0);
            let hp = grid.arm(i, a, 1);
            let fm = grid.neighbor(i, a, 0).map_or(T::zero(), |j| phi[j]);
            let fp = grid.neighbor(i, a, 1).map_or(T::zero(), |j| phi[j]);
            let f0 = phi[i];
            let deriv = (hm * hm * fp - hp * hp * fm + (hp * hp - hm * hm) * f0) / (hm * hp * (hm + hp));
            out[i * dim + a] = deriv / f0;
        }
    }
    Ok(out)
}

/// Worst `(∇log φ0(y) - ∇log φ0(x))·(y-x)/|y-x| - 2ψ(|y-x|/2)`. Pairs past
/// the cutoff of `ψ` are skipped; pairs with an endpoint within the sample's
/// boundary margin are excluded.
pub fn check_log_concavity<T: Real>(
    grid: &Grid<T>,
    phi0: &[T],
    psi: &ModulusFn<T>,
    sample: &PairSample<T>,
    tolerance: T,
) -> Result<PairReport<T>, ModuliError> {
    sample.ensure_grid(grid, phi0.len())?;
    let g = grad_log(grid, phi0)?;
    let dim = grid.dim();
    let margin = sample.boundary_margin;
    let cutoff = psi.cutoff();
    run_check(sample, tolerance, |i, j, z| {
        if margin > T::zero() && (grid.boundary_distance(i) < margin || grid.boundary_distance(j) < margin) {
            return Ok(PairValue::Exclude);
        }
        if psi.endpoint() == Endpoint::PoleAtRight && z > cutoff {
            return Ok(PairValue::Skip);
        }
        let e = chord(grid, i, j);
        let lhs = directional_difference(&g, dim, i, j, &e);
        Ok(PairValue::Value(lhs - lit::<T>(2.0) * psi.eval(z)?))
    })
}

/// Worst `|v(y) - v(x)| - 2η(|y-x|/2)`.
pub fn check_modulus_of_continuity<T: Real>(
    grid: &Grid<T>,
    values: &[T],
    eta: &ModulusFn<T>,
    sample: &PairSample<T>,
    tolerance: T,
) -> Result<PairReport<T>, ModuliError> {
    sample.ensure_grid(grid, values.len())?;
    ensure_range(eta, sample)?;
    run_check(sample, tolerance, |i, j, z| {
        Ok(PairValue::Value((values[j] - values[i]).abs() - lit::<T>(2.0) * eta.eval(z)?))
    })
}

/// Worst `(X(y) - X(x))·(y-x)/|y-x| - 2ω(|y-x|/2)`; `field` is flattened
/// `[node][axis]`.
pub fn check_contraction_modulus<T: Real>(
    grid: &Grid<T>,
    field: &[T],
    omega: &ModulusFn<T>,
    sample: &PairSample<T>,
    tolerance: T,
) -> Result<PairReport<T>, ModuliError> {
    let dim = grid.dim();
    if field.len() != grid.len() * dim {
        return Err(ModuliError::Length {
            expected: grid.len() * dim,
            got: field.len(),
        });
    }
    sample.ensure_grid(grid, grid.len())?;
    let margin = sample.boundary_margin;
    let cutoff = omega.cutoff();
    run_check(sample, tolerance, |i, j, z| {
        if margin > T::zero() && (grid.boundary_distance(i) < margin || grid.boundary_distance(j) < margin) {
            return Ok(PairValue::Exclude);
        }
        if omega.endpoint() == Endpoint::PoleAtRight && z > cutoff {
            return Ok(PairValue::Skip);
        }
        let e = chord(grid, i, j);
        Ok(PairValue::Value(
            directional_difference(field, dim, i, j, &e) - lit::<T>(2.0) * omega.eval(z)?,
        ))
    })
}

/// `-(π/D) tan(πz/D)` on `n` samples stopping one step short of `D/2`.
pub fn sharp_log_modulus<T: Real>(d: T, n: usize) -> Result<ModulusFn<T>, ModuliError> {
    let k = T::PI() / d;
    Ok(ModulusFn::from_fn(d / lit(2.0), n, Endpoint::PoleAtRight, |z| -k * (k * z).tan())?)
}

/// Calibration of the pair tolerance on the 1D equality case.
#[derive(Clone, Debug, PartialEq)]
pub struct TolCalibration<T> {
    pub h: T,
    /// Worst violation of the log-concavity inequality for `V = 0` on
    /// `(-1/2, 1/2)` over symmetric pairs outside the boundary margin.
    pub worst_1d: T,
    pub safety: T,
    /// `safety · worst_1d / h`.
    pub c_tol: T,
}

impl<T: Real> TolCalibration<T> {
    pub fn tolerance(&self, h: T) -> T {
        self.c_tol * h
    }
}

/// Runs the 1D equality case (`V = 0`, `D = 1`, where the discrete ground
/// state is exactly `cos(πz)` at the nodes) at spacing `h` and scales its
/// worst violation into `C_tol`.
pub fn calibrate_pair_tolerance<T: Real>(h: T, safety: T) -> Result<TolCalibration<T>, ModuliError> {
    let domain = ConvexDomain::interval(lit(-0.5), lit(0.5)).map_err(|e| ModuliError::Invalid(e.to_string()))?;
    let op = discretize(&domain, &PotentialSpec::zero(1), h)?;
    let pairs = smallest_eigenpairs(&op, 1, lit(1e-11))?;
    let grid = op.grid();
    let n = grid.len();
    let symmetric: Vec<[usize; 2]> = (0..n / 2).map(|i| [i, n - 1 - i]).collect();
    let mut sample = PairSample::from_pairs(grid, symmetric);
    sample.boundary_margin = h * lit(2.0);
    let psi = sharp_log_modulus(T::one(), 100_000)?;
    let report = check_log_concavity(grid, &pairs.vectors[0], &psi, &sample, T::infinity())?;
    let worst = report.worst.max(T::zero());
    Ok(TolCalibration {
        h,
        worst_1d: worst,
        safety,
        c_tol: safety * worst / h,
    })
}
