//! Numerical machinery for comparing the fundamental gap of Schrödinger
//! operators `-Δ + V` on convex domains with one-dimensional models.
//!
//! Every solver is generic over the scalar type (see [`Real`]); the aliases
//! at the crate root fix it to `f64`, which is what the tolerances quoted in
//! the docs assume.

pub mod expr;
pub mod geometry;
pub mod linalg;
pub mod moduli;
pub mod modulus;
pub mod ode;
pub mod parabolic;
pub mod potential;
pub mod scalar;
pub mod schrod_nd;
pub mod sturm1d;

pub use scalar::Real;

/// `f64` instantiations of the generic types.
pub type ConvexDomain = geometry::ConvexDomain<f64>;
pub type Grid = geometry::Grid<f64>;
pub type PotentialSpec = potential::PotentialSpec<f64>;
pub type ModulusFn = modulus::ModulusFn<f64>;
pub type Eigen1D = sturm1d::Eigen1D<f64>;
pub type PruferPath = sturm1d::PruferPath<f64>;
pub type RiccatiBranch = sturm1d::RiccatiBranch<f64>;
pub type Barrier = sturm1d::Barrier<f64>;
pub type Gap1d = sturm1d::Gap1d<f64>;
pub type DiscreteOperator = schrod_nd::DiscreteOperator<f64>;
pub type Eigenpairs = schrod_nd::Eigenpairs<f64>;
pub type GapResult = schrod_nd::GapResult<f64>;
pub type PairSample = moduli::PairSample<f64>;
pub type PairReport = moduli::PairReport<f64>;
pub type Trajectory = parabolic::Trajectory<f64>;
pub type PsiState = parabolic::PsiState<f64>;
