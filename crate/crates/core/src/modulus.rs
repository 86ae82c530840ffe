//! Scalar functions on `[0, D/2]` sampled on a uniform grid: moduli of
//! convexity, concavity and continuity, log-derivatives and the like.

use thiserror::Error;

use crate::scalar::{count, lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModulusError {
    #[error("modulus needs at least two samples")]
    TooFewSamples,
    #[error("z = {z} lies beyond the cutoff {cutoff} of a modulus with a pole at D/2")]
    BeyondCutoff { z: f64, cutoff: f64 },
    #[error("z = {z} lies outside [0, {end}]")]
    OutOfRange { z: f64, end: f64 },
    #[error("modulus has no value near z = {z} (empty sampling bin)")]
    Missing { z: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Finite,
    /// Samples stop at `z_cut < D/2`; the function blows up at `D/2`.
    PoleAtRight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interp {
    /// Four-point Lagrange interpolation.
    Cubic,
    /// Value of the left sample on each cell.
    Step,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModulusFn<T> {
    half_diameter: T,
    spacing: T,
    samples: Vec<T>,
    endpoint: Endpoint,
    interp: Interp,
}

impl<T: Real> ModulusFn<T> {
    /// Samples covering `[0, D/2]` uniformly.
    pub fn new(half_diameter: T, samples: Vec<T>) -> Result<Self, ModulusError> {
        if samples.len() < 2 {
            return Err(ModulusError::TooFewSamples);
        }
        let spacing = half_diameter / count(samples.len() - 1);
        Ok(Self {
            half_diameter,
            spacing,
            samples,
            endpoint: Endpoint::Finite,
            interp: Interp::Cubic,
        })
    }

    /// Samples at `z_i = i * (D/2) / n` for `i < n`, i.e. stopping one step
    /// short of the pole at `D/2`.
    pub fn with_pole(half_diameter: T, samples: Vec<T>) -> Result<Self, ModulusError> {
        if samples.len() < 2 {
            return Err(ModulusError::TooFewSamples);
        }
        let spacing = half_diameter / count(samples.len());
        Ok(Self {
            half_diameter,
            spacing,
            samples,
            endpoint: Endpoint::PoleAtRight,
            interp: Interp::Cubic,
        })
    }

    /// Samples `f` on `n` points, with a pole if requested.
    pub fn from_fn(half_diameter: T, n: usize, endpoint: Endpoint, f: impl Fn(T) -> T) -> Result<Self, ModulusError> {
        let cells = match endpoint {
            Endpoint::Finite => n.saturating_sub(1).max(1),
            Endpoint::PoleAtRight => n,
        };
        let h = half_diameter / count(cells);
        let samples = (0..n).map(|i| f(h * count(i))).collect();
        match endpoint {
            Endpoint::Finite => Self::new(half_diameter, samples),
            Endpoint::PoleAtRight => Self::with_pole(half_diameter, samples),
        }
    }

    pub fn with_interp(mut self, interp: Interp) -> Self {
        self.interp = interp;
        self
    }

    /// `c * self`.
    pub fn scaled(&self, c: T) -> Self {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn half_diameter(&self) -> T {
        self.half_diameter
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn endpoint(&self) -> Endpoint {
        self.endpoint
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    /// Largest `z` at which the function may be evaluated.
    pub fn cutoff(&self) -> T {
        match self.endpoint {
            Endpoint::Finite => self.half_diameter,
            Endpoint::PoleAtRight => self.spacing * count(self.samples.len() - 1),
        }
    }

    pub fn z(&self, i: usize) -> T {
        if self.endpoint == Endpoint::Finite && i + 1 == self.samples.len() {
            self.half_diameter
        } else {
            self.spacing * count(i)
        }
    }

    /// Sample points paired with values.
    pub fn iter(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.samples.iter().enumerate().map(|(i, &v)| (self.z(i), v))
    }

    /// Index of the cell containing `z` (cell `i` is `[z_i, z_{i+1})`).
    pub fn cell_index(&self, z: T) -> usize {
        let s = (z / self.spacing).floor().to_usize().unwrap_or(0);
        s.min(self.samples.len() - 2)
    }

    pub fn eval(&self, z: T) -> Result<T, ModulusError> {
        let f = |x: T| x.to_f64().unwrap_or(f64::NAN);
        let cutoff = self.cutoff();
        let slack = self.spacing * lit(1e-9);
        if self.endpoint == Endpoint::PoleAtRight && z > cutoff + slack {
            return Err(ModulusError::BeyondCutoff {
                z: f(z),
                cutoff: f(cutoff),
            });
        }
        if z < -slack || z > self.half_diameter + slack {
            return Err(ModulusError::OutOfRange {
                z: f(z),
                end: f(self.half_diameter),
            });
        }
        let z = z.max(T::zero()).min(cutoff);
        let n = self.samples.len();
        let i = self.cell_index(z);
        let value = match self.interp {
            Interp::Step => {
                // cell index computed from z/spacing, same as the binning code
                self.samples[(z / self.spacing).floor().to_usize().unwrap_or(0).min(n - 1)]
            }
            Interp::Cubic => {
                let t = (z - self.z(i)) / (self.z(i + 1) - self.z(i));
                let (a, b) = (self.samples[i], self.samples[i + 1]);
                if !a.is_finite() || !b.is_finite() {
                    if t == T::zero() { a } else if t == T::one() { b } else { a.min(b) }
                } else if n < 4 {
                    a + (b - a) * t
                } else {
                    let s = i.saturating_sub(1).min(n - 4);
                    let xs = [self.z(s), self.z(s + 1), self.z(s + 2), self.z(s + 3)];
                    let ys = &self.samples[s..s + 4];
                    if ys.iter().all(|y| y.is_finite()) {
                        lagrange4(&xs, ys, z)
                    } else {
                        a + (b - a) * t
                    }
                }
            }
        };
        if value.is_nan() {
            return Err(ModulusError::Missing { z: f(z) });
        }
        Ok(value)
    }

    /// Value by nearest sample index, no interpolation.
    pub fn sample_at(&self, i: usize) -> T {
        self.samples[i]
    }
}

fn lagrange4<T: Real>(xs: &[T; 4], ys: &[T], x: T) -> T {
    let mut acc = T::zero();
    for j in 0..4 {
        let mut w = T::one();
        for m in 0..4 {
            if m != j {
                w *= (x - xs[m]) / (xs[j] - xs[m]);
            }
        }
        acc += w * ys[j];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn cubic_interpolation_is_accurate() {
        let m = ModulusFn::from_fn(0.5, 201, Endpoint::Finite, |z: f64| z.sin()).unwrap();
        for i in 0..97 {
            let z = 0.005 * i as f64 + 0.0013;
            assert!((m.eval(z).unwrap() - z.sin()).abs() < 1e-10);
        }
        assert_eq!(m.eval(0.5).unwrap(), 0.5f64.sin());
    }

    #[test]
    fn pole_modulus_refuses_evaluation_past_cutoff() {
        let n = 1000;
        let m = ModulusFn::from_fn(0.5, n, Endpoint::PoleAtRight, |z: f64| -PI * (PI * z).tan()).unwrap();
        assert!((m.cutoff() - (0.5 - 0.5 / n as f64)).abs() < 1e-15);
        assert!(m.eval(0.45).is_ok());
        assert!(matches!(m.eval(0.4999), Err(ModulusError::BeyondCutoff { .. })));
        assert!(matches!(m.eval(-0.1), Err(ModulusError::OutOfRange { .. })));
    }

    #[test]
    fn step_modulus_and_missing_bins() {
        let m = ModulusFn::new(1.0, vec![1.0, f64::NAN, 3.0, 3.0]).unwrap().with_interp(Interp::Step);
        assert_eq!(m.eval(0.1).unwrap(), 1.0);
        assert!(matches!(m.eval(0.5), Err(ModulusError::Missing { .. })));
        assert_eq!(m.eval(0.7).unwrap(), 3.0);
        assert_eq!(m.eval(1.0).unwrap(), 3.0);
    }

    #[test]
    fn rejects_single_sample() {
        assert_eq!(ModulusFn::new(1.0, vec![0.0]), Err(ModulusError::TooFewSamples));
    }
}
