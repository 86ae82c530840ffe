//! Small linear-algebra kernels: tridiagonal systems and spectra, Krylov
//! solvers for sparse operators, and a Jacobi eigensolver for the tiny dense
//! Rayleigh–Ritz problems.

use thiserror::Error;

use crate::scalar::{axpy, count, dot, lit, norm2, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("conjugate gradients stagnated after {iterations} iterations (relative residual {residual:e})")]
    CgStagnation { iterations: usize, residual: f64 },
    #[error("BiCGSTAB broke down after {iterations} iterations (relative residual {residual:e})")]
    BicgstabBreakdown { iterations: usize, residual: f64 },
    #[error("singular tridiagonal system")]
    Singular,
}

/// Symmetric or general tridiagonal matrix stored by diagonals.
#[derive(Clone, Debug)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    pub fn symmetric(diag: Vec<T>, off: Vec<T>) -> Self {
        Self {
            lower: off.clone(),
            diag,
            upper: off,
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[T], y: &mut [T]) {
        let n = self.len();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// LU factorisation without pivoting (fine for the diagonally dominant
    /// systems met here).
    pub fn factor(&self) -> Result<TridiagonalLu<T>, SolveError> {
        let n = self.len();
        let mut c = vec![T::zero(); n.saturating_sub(1)];
        let mut d = vec![T::zero(); n];
        d[0] = self.diag[0];
        if d[0] == T::zero() {
            return Err(SolveError::Singular);
        }
        for i in 1..n {
            c[i - 1] = self.upper[i - 1] / d[i - 1];
            d[i] = self.diag[i] - self.lower[i - 1] * c[i - 1];
            if d[i] == T::zero() || !d[i].is_finite() {
                return Err(SolveError::Singular);
            }
        }
        Ok(TridiagonalLu {
            lower: self.lower.clone(),
            c,
            d,
        })
    }

    /// Eigenvalues of a symmetric tridiagonal matrix below which exactly `k`
    /// eigenvalues lie (Sturm count).
    pub fn count_below(&self, x: T) -> usize {
        let mut q = T::one();
        let mut n = 0;
        for i in 0..self.len() {
            let off2 = if i > 0 { self.lower[i - 1] * self.lower[i - 1] } else { T::zero() };
            q = self.diag[i] - x - if i > 0 { off2 / q } else { T::zero() };
            if q == T::zero() {
                q = T::epsilon() * (self.diag[i].abs() + T::one());
            }
            if q < T::zero() {
                n += 1;
            }
        }
        n
    }

    /// The `k` smallest eigenpairs of a symmetric tridiagonal matrix:
    /// eigenvalues by Sturm bisection, vectors by inverse iteration.
    pub fn smallest_eigenpairs(&self, k: usize) -> Result<Vec<(T, Vec<T>)>, SolveError> {
        let n = self.len();
        let mut radius = T::zero();
        for i in 0..n {
            let mut r = T::zero();
            if i > 0 {
                r += self.lower[i - 1].abs();
            }
            if i + 1 < n {
                r += self.upper[i].abs();
            }
            radius = radius.max(self.diag[i].abs() + r);
        }
        let mut out = Vec::with_capacity(k);
        for j in 0..k.min(n) {
            let (mut lo, mut hi) = (-radius - T::one(), radius + T::one());
            for _ in 0..200 {
                let mid = (lo + hi) / lit(2.0);
                if mid <= lo || mid >= hi {
                    break;
                }
                if self.count_below(mid) > j {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let lambda = (lo + hi) / lit(2.0);
            let vec = self.inverse_iteration(lambda, &out)?;
            out.push((lambda, vec));
        }
        Ok(out)
    }

    fn inverse_iteration(&self, lambda: T, previous: &[(T, Vec<T>)]) -> Result<Vec<T>, SolveError> {
        let n = self.len();
        let scale = self.diag.iter().fold(T::one(), |m, d| m.max(d.abs()));
        let shift = lambda - scale * lit(1e-13);
        let mut shifted = self.clone();
        shifted.diag.iter_mut().for_each(|d| *d -= shift);
        let lu = shifted.factor()?;
        let mut v: Vec<T> = (0..n).map(|i| T::one() + lit::<T>(0.01) * count::<T>(i % 7)).collect();
        for _ in 0..4 {
            for (_, u) in previous {
                let c = dot(&v, u);
                axpy(-c, u, &mut v);
            }
            let nv = norm2(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            v = lu.solve(&v);
        }
        for (_, u) in previous {
            let c = dot(&v, u);
            axpy(-c, u, &mut v);
        }
        let nv = norm2(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        Ok(v)
    }
}

#[derive(Clone, Debug)]
pub struct TridiagonalLu<T> {
    lower: Vec<T>,
    c: Vec<T>,
    d: Vec<T>,
}

impl<T: Real> TridiagonalLu<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = self.d.len();
        x[0] /= self.d[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i - 1] * x[i - 1]) / self.d[i];
        }
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= self.c[i] * next;
        }
    }
}

/// Cholesky factor of a symmetric positive definite band matrix, stored by
/// rows: entry `(i, j)` for `i - b <= j <= i` lives at `i * (b + 1) + j + b - i`.
#[derive(Clone, Debug)]
pub struct BandedCholesky<T> {
    n: usize,
    b: usize,
    l: Vec<T>,
}

impl<T: Real> BandedCholesky<T> {
    /// Factors the matrix whose lower band is given by `entry(i, j)` for
    /// `i - b <= j <= i`.
    pub fn factor(n: usize, b: usize, entry: impl Fn(usize, usize) -> T) -> Result<Self, SolveError> {
        let w = b + 1;
        let mut l = vec![T::zero(); n * w];
        for i in 0..n {
            let lo = i.saturating_sub(b);
            for j in lo..=i {
                let kl = lo.max(j.saturating_sub(b));
                let ri = &l[i * w + kl + b - i..i * w + j + b - i];
                let rj = &l[j * w + kl + b - j..j * w + b];
                let mut s = entry(i, j);
                for (&x, &y) in ri.iter().zip(rj) {
                    s -= x * y;
                }
                if i == j {
                    if !(s > T::zero()) {
                        return Err(SolveError::Singular);
                    }
                    l[i * w + b] = s.sqrt();
                } else {
                    l[i * w + j + b - i] = s / l[j * w + b];
                }
            }
        }
        Ok(Self { n, b, l })
    }

    pub fn bandwidth(&self) -> usize {
        self.b
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let row = &self.l[i * w + lo + b - i..i * w + b];
            let mut s = x[i];
            for (&a, &y) in row.iter().zip(&x[lo..i]) {
                s -= a * y;
            }
            x[i] = s / self.l[i * w + b];
        }
        for i in (0..n).rev() {
            x[i] /= self.l[i * w + b];
            let xi = x[i];
            let lo = i.saturating_sub(b);
            for j in lo..i {
                x[j] -= self.l[i * w + j + b - i] * xi;
            }
        }
    }
}

/// Matrix-free linear operator.
pub trait LinearOperator<T> {
    fn size(&self) -> usize;
    fn apply(&self, x: &[T], y: &mut [T]);
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions<T> {
    pub rel_tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for KrylovOptions<T> {
    fn default() -> Self {
        Self {
            rel_tol: lit(1e-12),
            max_iter: 20_000,
        }
    }
}

/// Conjugate gradients for a symmetric positive definite operator, starting
/// from the contents of `x`. Returns the iteration count.
pub fn conjugate_gradient<T: Real, A: LinearOperator<T> + ?Sized>(
    a: &A,
    b: &[T],
    x: &mut [T],
    opts: &KrylovOptions<T>,
) -> Result<usize, SolveError> {
    preconditioned_cg(a, None, b, x, opts)
}

/// Conjugate gradients with an optional Jacobi preconditioner given as the
/// inverse diagonal.
pub fn preconditioned_cg<T: Real, A: LinearOperator<T> + ?Sized>(
    a: &A,
    inv_diag: Option<&[T]>,
    b: &[T],
    x: &mut [T],
    opts: &KrylovOptions<T>,
) -> Result<usize, SolveError> {
    let n = a.size();
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(0);
    }
    let mut r = vec![T::zero(); n];
    a.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let precondition = |r: &[T], z: &mut [T]| match inv_diag {
        Some(d) => z.iter_mut().zip(r.iter().zip(d)).for_each(|(z, (&r, &d))| *z = r * d),
        None => z.copy_from_slice(r),
    };
    let mut z = vec![T::zero(); n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let target = opts.rel_tol * bnorm;
    let mut rnorm = norm2(&r);
    for it in 0..opts.max_iter {
        if rnorm <= target {
            return Ok(it);
        }
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        rnorm = norm2(&r);
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
    }
    if rnorm <= target {
        return Ok(opts.max_iter);
    }
    Err(SolveError::CgStagnation {
        iterations: opts.max_iter,
        residual: (rnorm / bnorm).to_f64().unwrap_or(f64::NAN),
    })
}

/// BiCGSTAB for general (nonsymmetric) operators.
pub fn bicgstab<T: Real, A: LinearOperator<T> + ?Sized>(
    a: &A,
    b: &[T],
    x: &mut [T],
    opts: &KrylovOptions<T>,
) -> Result<usize, SolveError> {
    let n = a.size();
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(0);
    }
    let target = opts.rel_tol * bnorm;
    let mut r = vec![T::zero(); n];
    a.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    let fail = |it: usize, r: &[T]| SolveError::BicgstabBreakdown {
        iterations: it,
        residual: (norm2(r) / bnorm).to_f64().unwrap_or(f64::NAN),
    };
    for it in 0..opts.max_iter {
        if norm2(&r) <= target {
            return Ok(it);
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == T::zero() || omega == T::zero() {
            return Err(fail(it, &r));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        a.apply(&p, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == T::zero() {
            return Err(fail(it, &r));
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= target {
            axpy(alpha, &p, x);
            return Ok(it + 1);
        }
        a.apply(&s, &mut t);
        let tt = dot(&t, &t);
        omega = if tt == T::zero() { T::zero() } else { dot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
    }
    Err(fail(opts.max_iter, &r))
}

/// Eigen-decomposition of a small dense symmetric matrix (row-major) by
/// cyclic Jacobi rotations. Returns eigenvalues ascending and the matching
/// eigenvectors as columns of a row-major matrix.
pub fn symmetric_eigen<T: Real>(a: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    let mut m = a.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off <= T::min_positive_value() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (lit::<T>(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].partial_cmp(&m[j * n + j]).unwrap_or(std::cmp::Ordering::Equal));
    let vals = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vecs = vec![T::zero(); n * n];
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vecs[k * n + col] = v[k * n + src];
        }
    }
    (vals, vecs)
}

/// Least-squares line `y = a + b x`; returns `(a, b)`.
pub fn fit_line<T: Real>(x: &[T], y: &[T]) -> (T, T) {
    let n = count::<T>(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Modified Gram–Schmidt: orthonormalises `v` against `basis` (assumed
/// orthonormal) and returns its norm before normalisation.
pub fn orthonormalize_against<T: Real>(v: &mut [T], basis: &[Vec<T>]) -> T {
    for _ in 0..2 {
        for u in basis {
            let c = dot(v, u);
            axpy(-c, u, v);
        }
    }
    let n = norm2(v);
    if n > T::zero() {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    struct Dense(Vec<f64>, usize);
    impl LinearOperator<f64> for Dense {
        fn size(&self) -> usize {
            self.1
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..self.1 {
                y[i] = (0..self.1).map(|j| self.0[i * self.1 + j] * x[j]).sum();
            }
        }
    }

    #[test]
    fn tridiagonal_spectrum_of_laplacian() {
        let n = 99;
        let h = 1.0 / 100.0;
        let t = Tridiagonal::symmetric(vec![2.0 / (h * h); n], vec![-1.0 / (h * h); n - 1]);
        let pairs = t.smallest_eigenpairs(3).unwrap();
        for (k, (lam, v)) in pairs.iter().enumerate() {
            let m = (k + 1) as f64;
            let exact = 4.0 / (h * h) * (m * PI * h / 2.0).sin().powi(2);
            assert!((lam - exact).abs() < 1e-9 * exact);
            let mut av = vec![0.0; n];
            t.apply(v, &mut av);
            let res: f64 = av.iter().zip(v).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
            assert!(res < 1e-8 * lam, "residual {res}");
        }
    }

    #[test]
    fn banded_cholesky_matches_dense() {
        // 2D 4x4 Laplacian, bandwidth 4
        let m = 4;
        let n = m * m;
        let entry = |i: usize, j: usize| -> f64 {
            if i == j {
                4.5
            } else if (i - j == 1 && i % m != 0) || i - j == m {
                -1.0
            } else {
                0.0
            }
        };
        let chol = BandedCholesky::factor(n, m, entry).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        chol.solve_in_place(&mut x);
        for i in 0..n {
            let mut y = 0.0;
            for j in 0..n {
                let (a, c) = if i >= j { (i, j) } else { (j, i) };
                if a - c <= m {
                    y += entry(a, c) * x[j];
                }
            }
            assert!((y - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn thomas_solve() {
        let t = Tridiagonal {
            lower: vec![1.0f64, 1.0],
            diag: vec![4.0, 4.0, 4.0],
            upper: vec![2.0, 2.0],
        };
        let x = t.factor().unwrap().solve(&[6.0, 7.0, 5.0]);
        let mut y = vec![0.0; 3];
        t.apply(&x, &mut y);
        for (a, b) in y.iter().zip([6.0, 7.0, 5.0]) {
            assert!((a - b as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn krylov_solvers() {
        let a = Dense(vec![4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0], 3);
        let b = [1.0, 2.0, 3.0];
        let mut x = vec![0.0; 3];
        conjugate_gradient(&a, &b, &mut x, &KrylovOptions::default()).unwrap();
        let mut y = vec![0.0; 3];
        a.apply(&x, &mut y);
        assert!(y.iter().zip(b).all(|(p, q)| (p - q).abs() < 1e-10));
        let ns = Dense(vec![4.0, 2.0, 0.0, -1.0, 3.0, 1.0, 0.5, 0.0, 2.0], 3);
        let mut x = vec![0.0; 3];
        bicgstab(&ns, &b, &mut x, &KrylovOptions::default()).unwrap();
        ns.apply(&x, &mut y);
        assert!(y.iter().zip(b).all(|(p, q)| (p - q).abs() < 1e-10));
    }

    #[test]
    fn jacobi_eigen() {
        let a: [f64; 9] = [2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0];
        let (vals, vecs) = symmetric_eigen(&a, 3);
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14 && (vals[2] - 5.0).abs() < 1e-14);
        assert!((vecs[0].abs() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn line_fit() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|t| 2.0 - 3.0 * t).collect();
        let (a, b) = fit_line(&x, &y);
        assert!((a - 2.0).abs() < 1e-14 && (b + 3.0).abs() < 1e-14);
    }
}
