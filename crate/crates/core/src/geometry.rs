//! Convex domains and the Cartesian grids laid over them.
//!
//! Grids carry, for every interior node, the distance to the next node or to
//! the boundary along each axis ("arms"). Regular nodes have arms equal to
//! `h`; nodes next to a curved or misaligned boundary get shorter arms, which
//! is the data the boundary-corrected stencils need.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::scalar::{count, lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("interval needs b > a (got a={a}, b={b})")]
    EmptyInterval { a: f64, b: f64 },
    #[error("rectangle widths must be positive (axis {axis} has {width})")]
    BadWidth { axis: usize, width: f64 },
    #[error("disc radius must be positive (got {0})")]
    BadRadius(f64),
    #[error("polygon needs at least 3 vertices (got {0})")]
    TooFewVertices(usize),
    #[error("polygon is not strictly convex and counterclockwise at vertex {0}")]
    NotConvex(usize),
    #[error("rectangle must have between 1 and 3 axes (got {0})")]
    BadDimension(usize),
    #[error("cannot parse domain `{text}`: {reason}")]
    Parse { text: String, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid spacing must be positive")]
    BadSpacing,
    #[error("degenerate grid: axis {axis} spans only {nodes} nodes (need at least 16)")]
    Degenerate { axis: usize, nodes: usize },
}

/// Shape of a convex domain. Rectangles are centred at the origin.
#[derive(Clone, Debug, PartialEq)]
pub enum DomainKind<T> {
    Interval { a: T, b: T },
    Rectangle { widths: Vec<T> },
    Disc { center: [T; 2], radius: T },
    Polygon { vertices: Vec<[T; 2]> },
}

/// A bounded convex region of R^n, validated on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexDomain<T> {
    kind: DomainKind<T>,
}

impl<T: Real> ConvexDomain<T> {
    pub fn interval(a: T, b: T) -> Result<Self, GeometryError> {
        if !(b > a) {
            return Err(GeometryError::EmptyInterval {
                a: a.to_f64().unwrap_or(f64::NAN),
                b: b.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            kind: DomainKind::Interval { a, b },
        })
    }

    /// Symmetric interval `(-d/2, d/2)`.
    pub fn centered_interval(d: T) -> Result<Self, GeometryError> {
        let half = d / lit(2.0);
        Self::interval(-half, half)
    }

    pub fn rectangle(widths: Vec<T>) -> Result<Self, GeometryError> {
        if widths.is_empty() || widths.len() > 3 {
            return Err(GeometryError::BadDimension(widths.len()));
        }
        for (axis, &w) in widths.iter().enumerate() {
            if !(w > T::zero()) {
                return Err(GeometryError::BadWidth {
                    axis,
                    width: w.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self {
            kind: DomainKind::Rectangle { widths },
        })
    }

    pub fn square(side: T) -> Result<Self, GeometryError> {
        Self::rectangle(vec![side, side])
    }

    pub fn disc(center: [T; 2], radius: T) -> Result<Self, GeometryError> {
        if !(radius > T::zero()) {
            return Err(GeometryError::BadRadius(radius.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self {
            kind: DomainKind::Disc { center, radius },
        })
    }

    /// Convex polygon; vertices must be listed counterclockwise with every
    /// consecutive triple turning strictly left.
    pub fn polygon(vertices: Vec<[T; 2]>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        for i in 0..n {
            let p = vertices[i];
            let q = vertices[(i + 1) % n];
            let r = vertices[(i + 2) % n];
            let cross = (q[0] - p[0]) * (r[1] - q[1]) - (q[1] - p[1]) * (r[0] - q[0]);
            if !(cross > T::zero()) {
                return Err(GeometryError::NotConvex((i + 1) % n));
            }
        }
        Ok(Self {
            kind: DomainKind::Polygon { vertices },
        })
    }

    pub fn kind(&self) -> &DomainKind<T> {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        match &self.kind {
            DomainKind::Interval { .. } => 1,
            DomainKind::Rectangle { widths } => widths.len(),
            DomainKind::Disc { .. } | DomainKind::Polygon { .. } => 2,
        }
    }

    pub fn diameter(&self) -> T {
        match &self.kind {
            DomainKind::Interval { a, b } => *b - *a,
            DomainKind::Rectangle { widths } => widths.iter().map(|&w| w * w).sum::<T>().sqrt(),
            DomainKind::Disc { radius, .. } => *radius * lit(2.0),
            DomainKind::Polygon { vertices } => {
                let mut best = T::zero();
                for (i, p) in vertices.iter().enumerate() {
                    for q in &vertices[i + 1..] {
                        best = best.max((q[0] - p[0]).hypot(q[1] - p[1]));
                    }
                }
                best
            }
        }
    }

    /// Level-set function: negative inside, zero on the boundary, positive
    /// outside. Inside the domain it equals minus the distance to the boundary.
    pub fn level(&self, x: &[T]) -> T {
        match &self.kind {
            DomainKind::Interval { a, b } => (*a - x[0]).max(x[0] - *b),
            DomainKind::Rectangle { widths } => widths
                .iter()
                .zip(x)
                .map(|(&w, &xi)| xi.abs() - w / lit(2.0))
                .fold(T::neg_infinity(), T::max),
            DomainKind::Disc { center, radius } => {
                (x[0] - center[0]).hypot(x[1] - center[1]) - *radius
            }
            DomainKind::Polygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|i| {
                        let p = vertices[i];
                        let q = vertices[(i + 1) % n];
                        let (ex, ey) = (q[0] - p[0], q[1] - p[1]);
                        let len = ex.hypot(ey);
                        // outward normal of a counterclockwise edge is (ey, -ex)
                        ((x[0] - p[0]) * ey - (x[1] - p[1]) * ex) / len
                    })
                    .fold(T::neg_infinity(), T::max)
            }
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        self.level(x) < T::zero()
    }

    /// Euclidean distance from an interior point to the boundary.
    pub fn boundary_distance(&self, x: &[T]) -> T {
        (-self.level(x)).max(T::zero())
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        match &self.kind {
            DomainKind::Interval { a, b } => (vec![*a], vec![*b]),
            DomainKind::Rectangle { widths } => {
                let half: Vec<T> = widths.iter().map(|&w| w / lit(2.0)).collect();
                (half.iter().map(|&w| -w).collect(), half)
            }
            DomainKind::Disc { center, radius } => (
                vec![center[0] - *radius, center[1] - *radius],
                vec![center[0] + *radius, center[1] + *radius],
            ),
            DomainKind::Polygon { vertices } => {
                let mut lo = vec![T::infinity(); 2];
                let mut hi = vec![T::neg_infinity(); 2];
                for v in vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// True for domains whose boundary is not smooth (rectangles, polygons).
    pub fn has_corners(&self) -> bool {
        matches!(
            self.kind,
            DomainKind::Rectangle { .. } | DomainKind::Polygon { .. }
        ) && self.dimension() > 1
    }
}

impl<T: Real> fmt::Display for ConvexDomain<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DomainKind::Interval { a, b } => write!(f, "interval:{a},{b}"),
            DomainKind::Rectangle { widths } => {
                let w: Vec<String> = widths.iter().map(|w| w.to_string()).collect();
                write!(f, "rect:{}", w.join(","))
            }
            DomainKind::Disc { center, radius } => {
                write!(f, "disc:{radius}@{},{}", center[0], center[1])
            }
            DomainKind::Polygon { vertices } => {
                let v: Vec<String> = vertices.iter().map(|p| format!("{},{}", p[0], p[1])).collect();
                write!(f, "polygon:{}", v.join(";"))
            }
        }
    }
}

/// Parses `interval:a,b`, `square:s`, `rect:w1,w2[,w3]`, `disc:r[@cx,cy]`
/// and `polygon:x,y;x,y;...`.
impl<T: Real> FromStr for ConvexDomain<T> {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| GeometryError::Parse {
            text: s.to_string(),
            reason: reason.to_string(),
        };
        let (kind, args) = s.split_once(':').ok_or_else(|| err("expected `kind:args`"))?;
        let nums = |t: &str| -> Result<Vec<T>, GeometryError> {
            t.split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map(lit)
                        .map_err(|_| err(&format!("bad number `{}`", p.trim())))
                })
                .collect()
        };
        match kind.trim() {
            "interval" => {
                let v = nums(args)?;
                match v.as_slice() {
                    [d] => Self::centered_interval(*d),
                    [a, b] => Self::interval(*a, *b),
                    _ => Err(err("interval takes `d` or `a,b`")),
                }
            }
            "square" => {
                let v = nums(args)?;
                match v.as_slice() {
                    [side] => Self::square(*side),
                    _ => Err(err("square takes one side length")),
                }
            }
            "rect" | "rectangle" => Self::rectangle(nums(args)?),
            "cube" => {
                let v = nums(args)?;
                match v.as_slice() {
                    [side] => Self::rectangle(vec![*side; 3]),
                    _ => Err(err("cube takes one side length")),
                }
            }
            "disc" => {
                let (r, c) = match args.split_once('@') {
                    Some((r, c)) => (r, Some(c)),
                    None => (args, None),
                };
                let r = nums(r)?;
                let center = match c {
                    Some(c) => {
                        let c = nums(c)?;
                        if c.len() != 2 {
                            return Err(err("disc centre needs two coordinates"));
                        }
                        [c[0], c[1]]
                    }
                    None => [T::zero(), T::zero()],
                };
                match r.as_slice() {
                    [r] => Self::disc(center, *r),
                    _ => Err(err("disc takes one radius")),
                }
            }
            "polygon" => {
                let verts = args
                    .split(';')
                    .map(|v| {
                        let c = nums(v)?;
                        if c.len() != 2 {
                            return Err(err("polygon vertices need two coordinates"));
                        }
                        Ok([c[0], c[1]])
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Self::polygon(verts)
            }
            other => Err(err(&format!("unknown domain kind `{other}`"))),
        }
    }
}

const NONE: usize = usize::MAX;

/// Cartesian grid of spacing `h` restricted to the interior of a domain.
#[derive(Clone, Debug)]
pub struct Grid<T> {
    domain: ConvexDomain<T>,
    h: T,
    lo: Vec<T>,
    shape: Vec<usize>,
    /// Lattice index of every interior node.
    lattice: Vec<usize>,
    /// Interior index for every lattice point, `NONE` if not interior.
    lookup: Vec<usize>,
    coords: Vec<T>,
    /// `[node][axis][side]` distance to the neighbour or boundary.
    arms: Vec<T>,
}

impl<T: Real> Grid<T> {
    pub fn new(domain: ConvexDomain<T>, h: T) -> Result<Self, GridError> {
        if !(h > T::zero()) {
            return Err(GridError::BadSpacing);
        }
        let dim = domain.dimension();
        let (lo, hi) = domain.bounding_box();
        let mut shape = Vec::with_capacity(dim);
        for k in 0..dim {
            let cells = ((hi[k] - lo[k]) / h - lit(1e-9)).ceil();
            let n = cells.to_usize().unwrap_or(0) + 1;
            if n < 18 {
                return Err(GridError::Degenerate {
                    axis: k,
                    nodes: n.saturating_sub(2),
                });
            }
            shape.push(n);
        }
        let total: usize = shape.iter().product();
        let margin = h * lit(1e-10);
        let mut lookup = vec![NONE; total];
        let mut lattice = Vec::new();
        let mut coords = Vec::new();
        let mut point = vec![T::zero(); dim];
        for lin in 0..total {
            lattice_point(lin, &shape, &lo, h, &mut point);
            if domain.level(&point) < -margin {
                lookup[lin] = lattice.len();
                lattice.push(lin);
                coords.extend_from_slice(&point);
            }
        }
        let mut grid = Self {
            domain,
            h,
            lo,
            shape,
            lattice,
            lookup,
            coords,
            arms: Vec::new(),
        };
        grid.arms = grid.compute_arms();
        Ok(grid)
    }

    fn compute_arms(&self) -> Vec<T> {
        let dim = self.dim();
        let n = self.len();
        let mut arms = vec![self.h; n * dim * 2];
        let mut q = vec![T::zero(); dim];
        for i in 0..n {
            for axis in 0..dim {
                for side in 0..2 {
                    if self.neighbor(i, axis, side).is_some() {
                        continue;
                    }
                    let sign = if side == 0 { -T::one() } else { T::one() };
                    let p = self.point(i);
                    let mut t_in = T::zero();
                    let mut t_out = self.h;
                    q.copy_from_slice(p);
                    q[axis] = p[axis] + sign * t_out;
                    if self.domain.level(&q) > T::zero() {
                        let tol = self.h * lit(1e-12);
                        while t_out - t_in > tol {
                            let mid = (t_in + t_out) / lit(2.0);
                            q[axis] = p[axis] + sign * mid;
                            if self.domain.level(&q) < T::zero() {
                                t_in = mid;
                            } else {
                                t_out = mid;
                            }
                        }
                    }
                    arms[(i * dim + axis) * 2 + side] = t_out;
                }
            }
        }
        arms
    }

    pub fn domain(&self) -> &ConvexDomain<T> {
        &self.domain
    }

    pub fn spacing(&self) -> T {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn point(&self, i: usize) -> &[T] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[T]> {
        self.coords.chunks(self.dim())
    }

    /// Interior neighbour of node `i` along `axis`; `side` 0 is the negative
    /// direction, 1 the positive one.
    pub fn neighbor(&self, i: usize, axis: usize, side: usize) -> Option<usize> {
        let lin = self.lattice[i];
        let stride: usize = self.shape[axis + 1..].iter().product();
        let pos = (lin / stride) % self.shape[axis];
        let j = match side {
            0 if pos > 0 => lin - stride,
            1 if pos + 1 < self.shape[axis] => lin + stride,
            _ => return None,
        };
        match self.lookup[j] {
            NONE => None,
            k => Some(k),
        }
    }

    /// Distance from node `i` to its neighbour or to the boundary, at most `h`.
    pub fn arm(&self, i: usize, axis: usize, side: usize) -> T {
        self.arms[(i * self.dim() + axis) * 2 + side]
    }

    /// True if some arm of node `i` ends on the boundary.
    pub fn is_near_boundary(&self, i: usize) -> bool {
        (0..self.dim()).any(|a| self.neighbor(i, a, 0).is_none() || self.neighbor(i, a, 1).is_none())
    }

    pub fn boundary_distance(&self, i: usize) -> T {
        self.domain.boundary_distance(self.point(i))
    }

    /// Interior node at integer lattice position, if any.
    pub fn node_at(&self, index: &[usize]) -> Option<usize> {
        let mut lin = 0;
        for (k, &ix) in index.iter().enumerate() {
            if ix >= self.shape[k] {
                return None;
            }
            lin = lin * self.shape[k] + ix;
        }
        match self.lookup[lin] {
            NONE => None,
            k => Some(k),
        }
    }

    /// Nodes per axis of the bounding lattice.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn origin(&self) -> &[T] {
        &self.lo
    }

    /// Same domain and spacing.
    pub fn same_as(&self, other: &Grid<T>) -> bool {
        self.h == other.h && self.domain == other.domain
    }

    /// Samples `f` at every interior node.
    pub fn sample(&self, f: impl Fn(&[T]) -> T) -> Vec<T> {
        self.points().map(f).collect()
    }

    /// Writes a grid function as CSV: header row, then one node per line with
    /// its coordinates and value.
    pub fn write_csv<W: std::io::Write>(&self, values: &[T], mut out: W) -> std::io::Result<()> {
        let mut header: Vec<String> = (1..=self.dim()).map(|k| format!("x{k}")).collect();
        header.push("value".into());
        writeln!(out, "{}", header.join(","))?;
        for (p, v) in self.points().zip(values) {
            let mut row: Vec<String> = p.iter().map(|c| format!("{c}")).collect();
            row.push(format!("{v}"));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn lattice_point<T: Real>(mut lin: usize, shape: &[usize], lo: &[T], h: T, out: &mut [T]) {
    for k in (0..shape.len()).rev() {
        let ix = lin % shape[k];
        lin /= shape[k];
        out[k] = lo[k] + h * count(ix);
    }
}
