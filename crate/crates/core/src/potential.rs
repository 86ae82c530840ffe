//! Scalar potentials: parsed expressions, closed-form builtins and values
//! sampled on a grid, with gradient access.

use thiserror::Error;

use crate::expr::{self, Expr, ParseError};
use crate::geometry::{ConvexDomain, Grid};
use crate::scalar::{lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("point lies outside the grid the potential was sampled on")]
    OutsideGrid,
    #[error("sampled potential used on a grid other than the one it was sampled on")]
    ForeignGrid,
    #[error("point has dimension {got}, potential expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("comparison potential is not even: |V(z) - V(-z)| = {defect:e} at z = {z}")]
    NotEven { z: f64, defect: f64 },
    #[error("radial profile must be one-dimensional")]
    ProfileDimension,
}

/// Closed-form potentials.
#[derive(Clone, Debug)]
pub enum Builtin<T> {
    Zero,
    /// `(K/2) |x|^2`.
    Quadratic { k: T },
    /// `-a r^2 + b r^4`.
    DoubleWell { a: T, b: T },
    /// `profile(|x|) + c * (x2^2 + ... + xn^2)`.
    RadialPlusTransverse { profile: Box<PotentialSpec<T>>, c: T },
}

#[derive(Clone, Debug)]
pub enum PotentialForm<T> {
    Expression(Expr<T>),
    Builtin(Builtin<T>),
    Sampled { grid: Box<Grid<T>>, values: Vec<T> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradientMode<T> {
    Analytic,
    /// Fourth-order central differences with the given step.
    CentralDifference(T),
}

#[derive(Clone, Debug)]
pub struct PotentialSpec<T> {
    form: PotentialForm<T>,
    dimension: usize,
    gradient: GradientMode<T>,
}

/// Parses a potential in `dimension` variables.
pub fn parse_potential<T: Real>(text: &str, dimension: usize) -> Result<PotentialSpec<T>, PotentialError> {
    let e = expr::parse(text, dimension)?;
    Ok(PotentialSpec {
        form: PotentialForm::Expression(e),
        dimension,
        gradient: GradientMode::Analytic,
    })
}

impl<T: Real> PotentialSpec<T> {
    pub fn builtin(b: Builtin<T>, dimension: usize) -> Result<Self, PotentialError> {
        if let Builtin::RadialPlusTransverse { profile, .. } = &b {
            if profile.dimension != 1 {
                return Err(PotentialError::ProfileDimension);
            }
        }
        Ok(Self {
            form: PotentialForm::Builtin(b),
            dimension,
            gradient: GradientMode::Analytic,
        })
    }

    pub fn zero(dimension: usize) -> Self {
        Self::builtin(Builtin::Zero, dimension).expect("zero potential")
    }

    pub fn quadratic(k: T, dimension: usize) -> Self {
        Self::builtin(Builtin::Quadratic { k }, dimension).expect("quadratic potential")
    }

    pub fn double_well(a: T, b: T, dimension: usize) -> Self {
        Self::builtin(Builtin::DoubleWell { a, b }, dimension).expect("double well potential")
    }

    pub fn radial_plus_transverse(profile: PotentialSpec<T>, c: T, dimension: usize) -> Result<Self, PotentialError> {
        Self::builtin(
            Builtin::RadialPlusTransverse {
                profile: Box::new(profile),
                c,
            },
            dimension,
        )
    }

    /// Samples `source` at the nodes of `grid`.
    pub fn sampled(source: &PotentialSpec<T>, grid: &Grid<T>) -> Result<Self, PotentialError> {
        let values = grid
            .points()
            .map(|p| source.eval(p))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_samples(grid, values)
    }

    pub fn from_samples(grid: &Grid<T>, values: Vec<T>) -> Result<Self, PotentialError> {
        assert_eq!(values.len(), grid.len(), "one value per interior node");
        Ok(Self {
            form: PotentialForm::Sampled {
                grid: Box::new(grid.clone()),
                values,
            },
            dimension: grid.dim(),
            gradient: GradientMode::CentralDifference(grid.spacing()),
        })
    }

    /// Switches to central-difference gradients with step `1e-4 * D`.
    pub fn with_fd_gradient_for(mut self, domain: &ConvexDomain<T>) -> Self {
        self.gradient = GradientMode::CentralDifference(domain.diameter() * lit(1e-4));
        self
    }

    pub fn with_gradient(mut self, mode: GradientMode<T>) -> Self {
        self.gradient = mode;
        self
    }

    pub fn form(&self) -> &PotentialForm<T> {
        &self.form
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn gradient_mode(&self) -> GradientMode<T> {
        self.gradient
    }

    /// Canonical expression tree; `None` for sampled potentials.
    pub fn to_expr(&self) -> Option<Expr<T>> {
        let b = Box::new;
        match &self.form {
            PotentialForm::Expression(e) => Some(e.clone()),
            PotentialForm::Sampled { .. } => None,
            PotentialForm::Builtin(builtin) => {
                let var = || if self.dimension == 1 { Expr::Var(0) } else { Expr::Radius };
                let sq = |e: Expr<T>| Expr::Pow(b(e), b(Expr::Num(lit(2.0))));
                Some(match builtin {
                    Builtin::Zero => Expr::Num(T::zero()),
                    Builtin::Quadratic { k } => Expr::Mul(b(Expr::Num(*k / lit(2.0))), b(sq(var()))),
                    Builtin::DoubleWell { a, b: quartic } => Expr::Add(
                        b(Expr::Mul(b(Expr::Num(-*a)), b(sq(var())))),
                        b(Expr::Mul(
                            b(Expr::Num(*quartic)),
                            b(Expr::Pow(b(var()), b(Expr::Num(lit(4.0))))),
                        )),
                    ),
                    Builtin::RadialPlusTransverse { profile, c } => {
                        let radial = profile.to_expr()?.radialize();
                        if self.dimension < 2 {
                            radial
                        } else {
                            let mut transverse = sq(Expr::Var(1));
                            for i in 2..self.dimension {
                                transverse = Expr::Add(b(transverse), b(sq(Expr::Var(i))));
                            }
                            Expr::Add(b(radial), b(Expr::Mul(b(Expr::Num(*c)), b(transverse))))
                        }
                    }
                })
            }
        }
    }

    /// Structural equality of the canonical expression trees.
    pub fn same_structure(&self, other: &PotentialSpec<T>) -> bool {
        self.dimension == other.dimension
            && matches!((self.to_expr(), other.to_expr()), (Some(a), Some(b)) if a == b)
    }

    fn check_dim(&self, x: &[T]) -> Result<(), PotentialError> {
        if x.len() != self.dimension {
            return Err(PotentialError::Dimension {
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[T]) -> Result<T, PotentialError> {
        self.check_dim(x)?;
        match &self.form {
            PotentialForm::Expression(e) => Ok(e.eval(x)),
            PotentialForm::Builtin(b) => Ok(eval_builtin(b, x)),
            PotentialForm::Sampled { grid, values } => interpolate(grid, values, x),
        }
    }

    /// Value at a node of `grid`; sampled potentials require their own grid.
    pub fn eval_on(&self, grid: &Grid<T>, node: usize) -> Result<T, PotentialError> {
        match &self.form {
            PotentialForm::Sampled { grid: own, values } => {
                if !own.same_as(grid) {
                    return Err(PotentialError::ForeignGrid);
                }
                Ok(values[node])
            }
            _ => self.eval(grid.point(node)),
        }
    }

    pub fn grad(&self, x: &[T]) -> Result<Vec<T>, PotentialError> {
        self.check_dim(x)?;
        match (self.gradient, &self.form) {
            (GradientMode::Analytic, PotentialForm::Expression(e)) => Ok(expr_grad(e, x)),
            (GradientMode::Analytic, PotentialForm::Builtin(b)) => Ok(grad_builtin(b, x)),
            (GradientMode::CentralDifference(step), _) => self.fd_grad(x, step),
            (GradientMode::Analytic, PotentialForm::Sampled { grid, .. }) => self.fd_grad(x, grid.spacing()),
        }
    }

    fn fd_grad(&self, x: &[T], step: T) -> Result<Vec<T>, PotentialError> {
        let mut g = vec![T::zero(); x.len()];
        let mut y = x.to_vec();
        for k in 0..x.len() {
            let mut at = |s: T| -> Result<T, PotentialError> {
                y[k] = x[k] + s * step;
                let v = self.eval(&y);
                y[k] = x[k];
                v
            };
            let (p1, m1, p2, m2) = (at(T::one())?, at(-T::one())?, at(lit(2.0))?, at(lit(-2.0))?);
            g[k] = (lit::<T>(8.0) * (p1 - m1) - (p2 - m2)) / (lit::<T>(12.0) * step);
        }
        Ok(g)
    }

    /// One-dimensional value; panics on sampled potentials outside their grid.
    pub fn value_1d(&self, z: T) -> T {
        self.eval(&[z]).expect("1-D potential evaluable")
    }

    pub fn derivative_1d(&self, z: T) -> T {
        self.grad(&[z]).expect("1-D potential differentiable")[0]
    }

    /// `(inf, sup)` over `[-D/2, D/2]` from dense sampling.
    pub fn bounds_1d(&self, diameter: T) -> (T, T) {
        let n = 4000;
        let half = diameter / lit(2.0);
        (0..=n)
            .map(|i| self.value_1d(-half + diameter * lit::<T>(i as f64 / n as f64)))
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    /// Rejects 1-D potentials with an odd part larger than `1e-12` (relative
    /// to the value scale) on `[-D/2, D/2]`.
    pub fn ensure_even(&self, diameter: T) -> Result<(), PotentialError> {
        let n = 500;
        let half = diameter / lit(2.0);
        for i in 1..=n {
            let z = half * lit::<T>(i as f64 / n as f64);
            let (a, b) = (self.value_1d(z), self.value_1d(-z));
            let scale = T::one().max(a.abs()).max(b.abs());
            if (a - b).abs() > lit::<T>(1e-12) * scale {
                return Err(PotentialError::NotEven {
                    z: z.to_f64().unwrap_or(f64::NAN),
                    defect: (a - b).abs().to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }
}

fn expr_grad<T: Real>(e: &Expr<T>, x: &[T]) -> Vec<T> {
    let mut dir = vec![T::zero(); x.len()];
    (0..x.len())
        .map(|k| {
            dir[k] = T::one();
            let d = e.eval_dual(x, &dir).1;
            dir[k] = T::zero();
            d
        })
        .collect()
}

fn radius<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

fn eval_builtin<T: Real>(b: &Builtin<T>, x: &[T]) -> T {
    match b {
        Builtin::Zero => T::zero(),
        Builtin::Quadratic { k } => *k / lit(2.0) * x.iter().map(|&v| v * v).sum(),
        Builtin::DoubleWell { a, b } => {
            let r2: T = x.iter().map(|&v| v * v).sum();
            -*a * r2 + *b * r2 * r2
        }
        Builtin::RadialPlusTransverse { profile, c } => {
            let radial = profile.value_1d(radius(x));
            radial + *c * x.iter().skip(1).map(|&v| v * v).sum()
        }
    }
}

fn grad_builtin<T: Real>(b: &Builtin<T>, x: &[T]) -> Vec<T> {
    match b {
        Builtin::Zero => vec![T::zero(); x.len()],
        Builtin::Quadratic { k } => x.iter().map(|&v| *k * v).collect(),
        Builtin::DoubleWell { a, b } => {
            let r2: T = x.iter().map(|&v| v * v).sum();
            let f = lit::<T>(-2.0) * *a + lit::<T>(4.0) * *b * r2;
            x.iter().map(|&v| f * v).collect()
        }
        Builtin::RadialPlusTransverse { profile, c } => {
            let r = radius(x);
            // profile'(r)/r, with the even-profile limit profile''(0) at the origin
            let ratio = if r > lit(1e-7) {
                profile.derivative_1d(r) / r
            } else {
                let d = lit::<T>(1e-4);
                (profile.derivative_1d(d) - profile.derivative_1d(-d)) / (d + d)
            };
            x.iter()
                .enumerate()
                .map(|(i, &v)| ratio * v + if i > 0 { lit::<T>(2.0) * *c * v } else { T::zero() })
                .collect()
        }
    }
}

/// Node lookup or multilinear interpolation inside a cell whose corners are
/// all interior nodes.
fn interpolate<T: Real>(grid: &Grid<T>, values: &[T], x: &[T]) -> Result<T, PotentialError> {
    let dim = grid.dim();
    let h = grid.spacing();
    let mut base = vec![0usize; dim];
    let mut frac = vec![T::zero(); dim];
    for k in 0..dim {
        let s = (x[k] - grid.origin()[k]) / h;
        if !(s >= T::zero()) {
            return Err(PotentialError::OutsideGrid);
        }
        let mut i = s.floor().to_usize().ok_or(PotentialError::OutsideGrid)?;
        let mut t = s - s.floor();
        if t > T::one() - lit(1e-9) {
            i += 1;
            t = T::zero();
        }
        base[k] = i;
        frac[k] = if t < lit(1e-9) { T::zero() } else { t };
    }
    let mut acc = T::zero();
    let mut corner = vec![0usize; dim];
    for mask in 0..(1usize << dim) {
        let mut w = T::one();
        for k in 0..dim {
            let up = (mask >> k) & 1 == 1;
            corner[k] = base[k] + up as usize;
            w *= if up { frac[k] } else { T::one() - frac[k] };
        }
        if w == T::zero() {
            continue;
        }
        let node = grid.node_at(&corner).ok_or(PotentialError::OutsideGrid)?;
        acc += w * values[node];
    }
    Ok(acc)
}
