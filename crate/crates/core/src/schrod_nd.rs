//! Dirichlet eigenproblem for `-Δ + V` on a convex domain.
//!
//! The Laplacian is the per-axis three-point stencil with Shortley–Weller
//! arms at nodes next to the boundary, written in the symmetric form
//!
//! ```text
//! (-Δu)_i ≈ Σ_axes (1/h) [ (u_i - u_-)/h_- + (u_i - u_+)/h_+ ]
//! ```
//!
//! where `h_±` is the distance to the neighbour or to the boundary (where
//! `u = 0`). Interior neighbours always sit at distance `h`, so every
//! off-diagonal entry is `-1/h²` and the matrix is symmetric.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{ConvexDomain, Grid, GridError};
use crate::linalg::{
    orthonormalize_against, preconditioned_cg, symmetric_eigen, BandedCholesky, KrylovOptions, LinearOperator,
    SolveError, Tridiagonal, TridiagonalLu,
};
use crate::potential::{PotentialError, PotentialSpec};
use crate::scalar::{count, dot, lit, norm2, Real};

const NONE: usize = usize::MAX;
const PAR_THRESHOLD: usize = 1 << 14;
/// Largest `n·b²` for which a banded Cholesky factorisation is used.
const BAND_WORK_LIMIT: f64 = 1.5e10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchrodError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("potential has dimension {potential}, domain has dimension {domain}")]
    Dimension { potential: usize, domain: usize },
    #[error("asked for {k} eigenpairs of an operator of size {n}")]
    TooManyEigenpairs { k: usize, n: usize },
    #[error("eigensolver did not converge in {iterations} iterations (worst relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// Sparse symmetric matrix of `-Δ + V` on the interior nodes of a grid.
#[derive(Clone, Debug)]
pub struct DiscreteOperator<T> {
    grid: Grid<T>,
    diag: Vec<T>,
    potential: Vec<T>,
    /// `[node][axis][side]` interior neighbour or `NONE`.
    neighbors: Vec<usize>,
    off: T,
}

pub fn discretize<T: Real>(
    domain: &ConvexDomain<T>,
    v: &PotentialSpec<T>,
    h: T,
) -> Result<DiscreteOperator<T>, SchrodError> {
    if v.dimension() != domain.dimension() {
        return Err(SchrodError::Dimension {
            potential: v.dimension(),
            domain: domain.dimension(),
        });
    }
    let grid = Grid::new(domain.clone(), h)?;
    let potential = (0..grid.len())
        .map(|i| v.eval_on(&grid, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DiscreteOperator::from_grid(grid, potential))
}

impl<T: Real> DiscreteOperator<T> {
    /// Operator for given potential values at the grid nodes.
    pub fn from_grid(grid: Grid<T>, potential: Vec<T>) -> Self {
        let dim = grid.dim();
        let h = grid.spacing();
        let n = grid.len();
        let mut diag = vec![T::zero(); n];
        let mut neighbors = vec![NONE; n * dim * 2];
        for i in 0..n {
            let mut d = potential[i];
            for axis in 0..dim {
                for side in 0..2 {
                    d += T::one() / (h * grid.arm(i, axis, side));
                    if let Some(j) = grid.neighbor(i, axis, side) {
                        neighbors[(i * dim + axis) * 2 + side] = j;
                    }
                }
            }
            diag[i] = d;
        }
        Self {
            off: -T::one() / (h * h),
            grid,
            diag,
            potential,
            neighbors,
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[T] {
        &self.diag
    }

    pub fn potential(&self) -> &[T] {
        &self.potential
    }

    /// Off-diagonal entry shared by all neighbour couplings.
    pub fn off_diagonal(&self) -> T {
        self.off
    }

    /// Interior neighbours of node `i`.
    pub fn neighbors_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let w = self.grid.dim() * 2;
        self.neighbors[i * w..(i + 1) * w].iter().copied().filter(|&j| j != NONE)
    }

    fn row(&self, i: usize, x: &[T]) -> T {
        let w = self.grid.dim() * 2;
        let mut nb = T::zero();
        for &j in &self.neighbors[i * w..(i + 1) * w] {
            if j != NONE {
                nb += x[j];
            }
        }
        self.diag[i] * x[i] + self.off * nb
    }

    /// `y = (A + shift I) x`.
    pub fn apply_shifted(&self, shift: T, x: &[T], y: &mut [T]) {
        if y.len() >= PAR_THRESHOLD {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = self.row(i, x) + shift * x[i]);
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.row(i, x) + shift * x[i];
            }
        }
    }

    /// Gershgorin bound on the spectral radius.
    pub fn norm_bound(&self) -> T {
        (0..self.len())
            .map(|i| self.diag[i].abs() + self.off.abs() * count(self.neighbors_of(i).count()))
            .fold(T::zero(), T::max)
    }

    pub fn min_potential(&self) -> T {
        self.potential.iter().copied().fold(T::infinity(), T::min)
    }

    /// The matrix as a tridiagonal (one-dimensional grids only).
    pub fn to_tridiagonal(&self) -> Option<Tridiagonal<T>> {
        (self.grid.dim() == 1).then(|| {
            let n = self.len();
            Tridiagonal::symmetric(self.diag.clone(), vec![self.off; n.saturating_sub(1)])
        })
    }

    /// Largest index distance between coupled nodes.
    pub fn bandwidth(&self) -> usize {
        (0..self.len())
            .flat_map(|i| self.neighbors_of(i).map(move |j| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    /// Banded Cholesky factor of `A + shift I`.
    pub fn factor_shifted(&self, shift: T) -> Result<BandedCholesky<T>, SolveError> {
        let w = self.grid.dim() * 2;
        BandedCholesky::factor(self.len(), self.bandwidth(), |i, j| {
            if i == j {
                self.diag[i] + shift
            } else if self.neighbors[i * w..(i + 1) * w].contains(&j) {
                self.off
            } else {
                T::zero()
            }
        })
    }

    /// Euclidean residual `‖Aφ - λφ‖`.
    pub fn residual(&self, lambda: T, phi: &[T]) -> T {
        let mut y = vec![T::zero(); phi.len()];
        self.apply_shifted(-lambda, phi, &mut y);
        norm2(&y)
    }
}

impl<T: Real> LinearOperator<T> for DiscreteOperator<T> {
    fn size(&self) -> usize {
        self.len()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        self.apply_shifted(T::zero(), x, y);
    }
}

pub struct Shifted<'a, T> {
    op: &'a DiscreteOperator<T>,
    shift: T,
}

impl<T: Real> LinearOperator<T> for Shifted<'_, T> {
    fn size(&self) -> usize {
        self.op.len()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        self.op.apply_shifted(self.shift, x, y);
    }
}

/// Solver for `(A + shift I) x = b`: Thomas in 1D, banded Cholesky when the
/// band is narrow enough, Jacobi-preconditioned CG otherwise.
pub enum ShiftedSolver<'a, T> {
    Tridiagonal(TridiagonalLu<T>),
    Banded(BandedCholesky<T>),
    Cg {
        op: Shifted<'a, T>,
        inv_diag: Vec<T>,
        opts: KrylovOptions<T>,
    },
}

impl<'a, T: Real> ShiftedSolver<'a, T> {
    /// `rel_tol` applies to the iterative fallback only.
    pub fn new(op: &'a DiscreteOperator<T>, shift: T, rel_tol: T) -> Result<Self, SchrodError> {
        if let Some(mut tri) = op.to_tridiagonal() {
            tri.diag.iter_mut().for_each(|d| *d += shift);
            return Ok(Self::Tridiagonal(tri.factor()?));
        }
        let b = op.bandwidth() as f64;
        if op.len() as f64 * b * b <= BAND_WORK_LIMIT {
            return Ok(Self::Banded(op.factor_shifted(shift)?));
        }
        let inv_diag = op.diag.iter().map(|&d| T::one() / (d + shift)).collect();
        Ok(Self::Cg {
            op: Shifted { op, shift },
            inv_diag,
            opts: KrylovOptions {
                rel_tol,
                max_iter: 50 * op.len().max(100),
            },
        })
    }

    pub fn is_direct(&self) -> bool {
        !matches!(self, Self::Cg { .. })
    }

    /// Solves in place; `x` holds the initial guess on entry. Returns the
    /// number of iterations (1 for direct solves).
    pub fn solve(&self, b: &[T], x: &mut [T]) -> Result<usize, SchrodError> {
        match self {
            Self::Tridiagonal(lu) => {
                x.copy_from_slice(b);
                lu.solve_in_place(x);
                Ok(1)
            }
            Self::Banded(ch) => {
                x.copy_from_slice(b);
                ch.solve_in_place(x);
                Ok(1)
            }
            Self::Cg { op, inv_diag, opts } => Ok(preconditioned_cg(op, Some(inv_diag), b, x, opts)?),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions<T> {
    /// Target `‖Aφ - λφ‖ ≤ tol·|λ|` (with `φ` of unit norm).
    pub tol: T,
    /// Extra block vectors beyond the `k` requested.
    pub guard: usize,
    pub max_iter: usize,
    /// Relative spread below which consecutive eigenvalues count as one
    /// cluster.
    pub cluster_tol: T,
    pub seed: u64,
}

impl<T: Real> Default for EigenOptions<T> {
    fn default() -> Self {
        Self {
            tol: lit(1e-9),
            guard: 3,
            max_iter: 500,
            cluster_tol: lit(1e-6),
            seed: 0x5eed,
        }
    }
}

/// Consecutive eigenvalues closer than the cluster tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster<T> {
    pub first: usize,
    pub multiplicity: usize,
    pub spread: T,
    /// Distance to the next eigenvalue outside the cluster, if computed.
    pub gap_after: Option<T>,
}

#[derive(Clone, Debug)]
pub struct Eigenpairs<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
    /// Relative residuals `‖Aφ - λφ‖/|λ|`.
    pub residuals: Vec<T>,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub clusters: Vec<Cluster<T>>,
}

impl<T: Real> Eigenpairs<T> {
    /// Multiplicity of the eigenvalue with index `j`.
    pub fn multiplicity(&self, j: usize) -> usize {
        self.clusters
            .iter()
            .find(|c| j >= c.first && j < c.first + c.multiplicity)
            .map_or(1, |c| c.multiplicity)
    }
}

/// The `k` smallest eigenpairs, ascending, with unit-norm vectors and the
/// ground state made positive.
pub fn smallest_eigenpairs<T: Real>(op: &DiscreteOperator<T>, k: usize, tol: T) -> Result<Eigenpairs<T>, SchrodError> {
    let opts = EigenOptions {
        tol,
        ..EigenOptions::default()
    };
    smallest_eigenpairs_with(op, k, &opts, None)
}

/// Block inverse iteration with Rayleigh–Ritz, optionally started from
/// given vectors (e.g. eigenvectors prolonged from a coarser grid).
pub fn smallest_eigenpairs_with<T: Real>(
    op: &DiscreteOperator<T>,
    k: usize,
    opts: &EigenOptions<T>,
    start: Option<&[Vec<T>]>,
) -> Result<Eigenpairs<T>, SchrodError> {
    let n = op.len();
    if k == 0 || k > n {
        return Err(SchrodError::TooManyEigenpairs { k, n });
    }
    if !(opts.tol > T::zero()) {
        return Err(SchrodError::Invalid("eigen tolerance must be positive".into()));
    }
    let p = (k + opts.guard).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut block: Vec<Vec<T>> = Vec::with_capacity(p);
    if let Some(start) = start {
        block.extend(start.iter().take(p).cloned());
    }
    while block.len() < p {
        block.push((0..n).map(|_| lit(rng.gen_range(-1.0..1.0))).collect());
    }
    // shift below the spectrum: -Δ is positive definite
    let sigma = op.min_potential() - T::one();
    let inner_tol = (opts.tol * lit(0.01)).min(lit(1e-10)).max(lit(1e-14));
    let solver = ShiftedSolver::new(op, -sigma, inner_tol)?;
    let mut ax = vec![vec![T::zero(); n]; p];
    let mut theta = vec![T::zero(); p];
    let mut inner = 0;
    let mut worst = T::infinity();
    for it in 0..opts.max_iter {
        orthonormalize_block(&mut block, &mut rng);
        for j in 0..p {
            op.apply(&block[j], &mut ax[j]);
        }
        let mut hmat = vec![T::zero(); p * p];
        for a in 0..p {
            for b in a..p {
                let v = dot(&block[a], &ax[b]);
                hmat[a * p + b] = v;
                hmat[b * p + a] = v;
            }
        }
        let (vals, w) = symmetric_eigen(&hmat, p);
        block = rotate(&block, &w, p);
        ax = rotate(&ax, &w, p);
        theta.copy_from_slice(&vals);
        let residuals: Vec<T> = (0..p)
            .map(|j| {
                let r: T = ax[j]
                    .iter()
                    .zip(&block[j])
                    .map(|(&a, &x)| (a - theta[j] * x) * (a - theta[j] * x))
                    .sum::<T>()
                    .sqrt();
                r / theta[j].abs().max(T::epsilon())
            })
            .collect();
        worst = residuals[..k].iter().copied().fold(T::zero(), T::max);
        if worst <= opts.tol {
            let mut vectors: Vec<Vec<T>> = block.into_iter().collect();
            if vectors[0].iter().copied().sum::<T>() < T::zero() {
                vectors[0].iter_mut().for_each(|x| *x = -*x);
            }
            let clusters = find_clusters(&theta, &residuals, k, opts);
            vectors.truncate(k);
            return Ok(Eigenpairs {
                values: theta[..k].to_vec(),
                vectors,
                residuals: residuals[..k].to_vec(),
                iterations: it + 1,
                inner_iterations: inner,
                clusters,
            });
        }
        for j in 0..p {
            let mut y: Vec<T> = block[j].iter().map(|&x| x / (theta[j] - sigma)).collect();
            inner += solver.solve(&block[j], &mut y)?;
            block[j] = y;
        }
    }
    Err(SchrodError::NotConverged {
        iterations: opts.max_iter,
        residual: worst.to_f64().unwrap_or(f64::NAN),
    })
}

fn orthonormalize_block<T: Real>(block: &mut [Vec<T>], rng: &mut ChaCha8Rng) {
    for j in 0..block.len() {
        let (done, rest) = block.split_at_mut(j);
        let v = &mut rest[0];
        let scale = norm2(v);
        let nrm = orthonormalize_against(v, done);
        if !(nrm > scale * lit(1e-10)) {
            v.iter_mut().for_each(|x| *x = lit(rng.gen_range(-1.0..1.0)));
            orthonormalize_against(v, done);
        }
    }
}

/// Columns of `block · w` where `w` is `p × p` row-major.
fn rotate<T: Real>(block: &[Vec<T>], w: &[T], p: usize) -> Vec<Vec<T>> {
    let n = block[0].len();
    (0..p)
        .map(|c| {
            let mut out = vec![T::zero(); n];
            for r in 0..p {
                let coef = w[r * p + c];
                if coef != T::zero() {
                    for (o, &x) in out.iter_mut().zip(&block[r]) {
                        *o += coef * x;
                    }
                }
            }
            out
        })
        .collect()
}

fn find_clusters<T: Real>(theta: &[T], residuals: &[T], k: usize, opts: &EigenOptions<T>) -> Vec<Cluster<T>> {
    let mut clusters = Vec::new();
    let mut j = 0;
    while j < k {
        let mut m = 1;
        // guard vectors count towards a cluster only once converged
        while j + m < theta.len()
            && (theta[j + m] - theta[j]).abs() <= opts.cluster_tol * theta[j].abs().max(T::one())
            && (j + m < k || residuals[j + m] <= opts.tol)
        {
            m += 1;
        }
        if m > 1 {
            let gap_after = theta.get(j + m).map(|&t| t - theta[j + m - 1]);
            clusters.push(Cluster {
                first: j,
                multiplicity: m,
                spread: theta[j + m - 1] - theta[j],
                gap_after,
            });
        }
        j += m;
    }
    clusters
}

/// Multilinear interpolation of a coarse grid function onto the nodes of a
/// finer grid over the same domain; exterior corners count as zero.
pub fn prolong<T: Real>(coarse: &Grid<T>, values: &[T], fine: &Grid<T>) -> Vec<T> {
    let dim = coarse.dim();
    let h = coarse.spacing();
    let lo = coarse.origin();
    let shape = coarse.shape();
    let mut base = vec![0usize; dim];
    let mut frac = vec![T::zero(); dim];
    let mut idx = vec![0usize; dim];
    fine.points()
        .map(|p| {
            for k in 0..dim {
                let s = ((p[k] - lo[k]) / h).max(T::zero());
                let b = s.floor().to_usize().unwrap_or(0).min(shape[k].saturating_sub(2));
                base[k] = b;
                frac[k] = s - count(b);
            }
            let mut acc = T::zero();
            for corner in 0..(1usize << dim) {
                let mut w = T::one();
                for k in 0..dim {
                    let up = (corner >> k) & 1 == 1;
                    idx[k] = base[k] + usize::from(up);
                    w *= if up { frac[k] } else { T::one() - frac[k] };
                }
                if w != T::zero() {
                    if let Some(j) = coarse.node_at(&idx) {
                        acc += w * values[j];
                    }
                }
            }
            acc
        })
        .collect()
}

/// Eigen data at one spacing.
#[derive(Clone, Debug)]
pub struct GapLevel<T> {
    pub h: T,
    pub nodes: usize,
    pub lambda0: T,
    pub lambda1: T,
    pub gap: T,
    pub multiplicity1: usize,
    pub residuals: Vec<T>,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct GapResult<T> {
    pub lambda0: T,
    pub lambda1: T,
    pub gap: T,
    /// Ground state and first excited state on the fine grid, unit norm.
    pub phi0: Vec<T>,
    pub phi1: Vec<T>,
    /// Fine spacing `h/2`.
    pub h: T,
    pub grid: Grid<T>,
    pub coarse: GapLevel<T>,
    pub fine: GapLevel<T>,
    /// `(4 gap(h/2) - gap(h)) / 3`.
    pub richardson: T,
    /// `|gap(h) - gap(h/2)| / 3`.
    pub error_indicator: T,
    pub richardson_lambda0: T,
    pub richardson_lambda1: T,
}

fn level<T: Real>(op: &DiscreteOperator<T>, pairs: &Eigenpairs<T>) -> GapLevel<T> {
    GapLevel {
        h: op.grid().spacing(),
        nodes: op.len(),
        lambda0: pairs.values[0],
        lambda1: pairs.values[1],
        gap: pairs.values[1] - pairs.values[0],
        multiplicity1: pairs.multiplicity(1),
        residuals: pairs.residuals.clone(),
        iterations: pairs.iterations,
    }
}

/// Eigenpairs needed for the gap: three, so that a double `λ1` is seen.
pub fn gap_eigenpairs<T: Real>(
    op: &DiscreteOperator<T>,
    opts: &EigenOptions<T>,
    start: Option<&[Vec<T>]>,
) -> Result<Eigenpairs<T>, SchrodError> {
    smallest_eigenpairs_with(op, 3.min(op.len()), opts, start)
}

/// `λ1 - λ0` at spacings `h` and `h/2`, with Richardson extrapolation.
pub fn fundamental_gap<T: Real>(
    domain: &ConvexDomain<T>,
    v: &PotentialSpec<T>,
    h: T,
) -> Result<GapResult<T>, SchrodError> {
    fundamental_gap_with(domain, v, h, &EigenOptions::default())
}

pub fn fundamental_gap_with<T: Real>(
    domain: &ConvexDomain<T>,
    v: &PotentialSpec<T>,
    h: T,
    opts: &EigenOptions<T>,
) -> Result<GapResult<T>, SchrodError> {
    let coarse_op = discretize(domain, v, h)?;
    let coarse = gap_eigenpairs(&coarse_op, opts, None)?;
    let fine_op = discretize(domain, v, h / lit(2.0))?;
    let start: Vec<Vec<T>> = coarse
        .vectors
        .iter()
        .map(|c| prolong(coarse_op.grid(), c, fine_op.grid()))
        .collect();
    let fine = gap_eigenpairs(&fine_op, opts, Some(&start))?;
    let (cl, fl) = (level(&coarse_op, &coarse), level(&fine_op, &fine));
    let rich = |c: T, f: T| (lit::<T>(4.0) * f - c) / lit(3.0);
    let mut vectors = fine.vectors;
    vectors.truncate(2);
    let phi1 = vectors.pop().expect("two vectors");
    let phi0 = vectors.pop().expect("two vectors");
    Ok(GapResult {
        lambda0: fl.lambda0,
        lambda1: fl.lambda1,
        gap: fl.gap,
        phi0,
        phi1,
        h: fl.h,
        grid: fine_op.grid().clone(),
        richardson: rich(cl.gap, fl.gap),
        error_indicator: (cl.gap - fl.gap).abs() / lit(3.0),
        richardson_lambda0: rich(cl.lambda0, fl.lambda0),
        richardson_lambda1: rich(cl.lambda1, fl.lambda1),
        coarse: cl,
        fine: fl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn zero(n: usize) -> PotentialSpec<f64> {
        PotentialSpec::zero(n)
    }

    #[test]
    fn interval_operator_is_standard_tridiagonal() {
        let d = ConvexDomain::interval(-0.5, 0.5).unwrap();
        let op = discretize(&d, &zero(1), 1.0 / 256.0).unwrap();
        assert_eq!(op.len(), 255);
        assert_eq!(op.off_diagonal(), -65536.0);
        assert!(op.diag().iter().all(|&x| (x - 2.0 * 65536.0).abs() < 1e-6));
    }

    #[test]
    fn operator_is_symmetric_on_disc() {
        let d = ConvexDomain::disc([0.0, 0.0], 1.0).unwrap();
        let op = discretize(&d, &PotentialSpec::quadratic(1.0, 2), 1.0 / 16.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (mut au, mut aw) = (vec![0.0; op.len()], vec![0.0; op.len()]);
        op.apply(&u, &mut au);
        op.apply(&w, &mut aw);
        let lhs = (dot(&au, &w) - dot(&u, &aw)).abs();
        assert!(lhs <= 1e-12 * op.norm_bound() * norm2(&u) * norm2(&w));
        assert!(op.grid().points().all(|p| p[0] * p[0] + p[1] * p[1] < 1.0));
    }

    #[test]
    fn interval_ground_state() {
        let d = ConvexDomain::interval(-0.5, 0.5).unwrap();
        let op = discretize(&d, &zero(1), 1.0 / 512.0).unwrap();
        let pairs = smallest_eigenpairs(&op, 2, 1e-10).unwrap();
        assert!((pairs.values[0] - PI * PI).abs() < 5e-4);
        assert!(pairs.vectors[0].iter().all(|&x| x > 0.0));
        assert!(dot(&pairs.vectors[0], &pairs.vectors[1]).abs() < 1e-8);
    }

    #[test]
    fn square_eigenvector_residual_is_second_order() {
        let d = ConvexDomain::<f64>::square(1.0).unwrap();
        let mut prev: Option<f64> = None;
        for n in [32usize, 64] {
            let h = 1.0 / n as f64;
            let op = discretize(&d, &zero(2), h).unwrap();
            let phi = op.grid().sample(|p| (PI * (p[0] + 0.5)).sin() * (PI * (p[1] + 0.5)).sin());
            let mut ap = vec![0.0; op.len()];
            op.apply(&phi, &mut ap);
            let err = ap
                .iter()
                .zip(&phi)
                .map(|(a, f)| (a - 2.0 * PI * PI * f).abs())
                .fold(0.0, f64::max);
            if let Some(e) = prev {
                let order = (e / err).log2();
                assert!(order > 1.9, "order {order}");
            }
            prev = Some(err);
        }
    }

    #[test]
    fn square_degenerate_excited_pair() {
        let d = ConvexDomain::<f64>::square(1.0).unwrap();
        let op = discretize(&d, &zero(2), 1.0 / 32.0).unwrap();
        let pairs = smallest_eigenpairs(&op, 3, 1e-9).unwrap();
        assert_eq!(pairs.multiplicity(1), 2);
        assert!(dot(&pairs.vectors[1], &pairs.vectors[2]).abs() < 1e-8);
        let exact = |m: f64| 4.0 * 1024.0 * (m * PI / 64.0).sin().powi(2);
        assert!((pairs.values[0] - 2.0 * exact(1.0)).abs() < 1e-7 * pairs.values[0]);
        assert!((pairs.values[1] - exact(1.0) - exact(2.0)).abs() < 1e-7 * pairs.values[1]);
        assert!(pairs.vectors[0].iter().all(|&x| x > 0.0));
    }

    #[test]
    fn prolongation_is_exact_for_linear_functions() {
        let d = ConvexDomain::<f64>::square(1.0).unwrap();
        let c = Grid::new(d.clone(), 1.0 / 32.0).unwrap();
        let f = Grid::new(d, 1.0 / 64.0).unwrap();
        let vals = c.sample(|p| 1.0 + p[0] - 2.0 * p[1]);
        let fine = prolong(&c, &vals, &f);
        for (p, v) in f.points().zip(&fine) {
            // cells touching the boundary see a zero corner
            if p.iter().all(|x| x.abs() < 0.5 - 1.0 / 32.0) {
                assert!((v - (1.0 + p[0] - 2.0 * p[1])).abs() < 1e-12);
            }
        }
    }
}
