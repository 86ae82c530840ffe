//! Dormand–Prince 5(4) integrator with dense output and event location.

use thiserror::Error;

use crate::scalar::{lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions<T> {
    pub atol: T,
    pub rtol: T,
    pub max_steps: usize,
}

impl<T: Real> Default for OdeOptions<T> {
    fn default() -> Self {
        Self {
            atol: lit(1e-10),
            rtol: lit(1e-10),
            max_steps: 2_000_000,
        }
    }
}

/// One accepted step together with its continuous extension.
#[derive(Clone, Debug)]
pub struct Step<T, const N: usize> {
    pub t0: T,
    pub h: T,
    rcont: [[T; N]; 5],
}

impl<T: Real, const N: usize> Step<T, N> {
    pub fn t1(&self) -> T {
        self.t0 + self.h
    }

    /// Dense-output value at `t` inside the step.
    pub fn eval(&self, t: T) -> [T; N] {
        let th = (t - self.t0) / self.h;
        let th1 = T::one() - th;
        let mut y = [T::zero(); N];
        for k in 0..N {
            let r = &self.rcont;
            y[k] = r[0][k] + th * (r[1][k] + th1 * (r[2][k] + th * (r[3][k] + th1 * r[4][k])));
        }
        y
    }

    /// Time derivative of the dense-output polynomial at `t`.
    pub fn derivative(&self, t: T) -> [T; N] {
        let th = (t - self.t0) / self.h;
        let th1 = T::one() - th;
        let mut d = [T::zero(); N];
        for k in 0..N {
            let r = &self.rcont;
            // y = r0 + th*(r1 + th1*(r2 + th*(r3 + th1*r4)))
            let inner3 = r[3][k] + th1 * r[4][k];
            let inner2 = r[2][k] + th * inner3;
            let inner1 = r[1][k] + th1 * inner2;
            let d_inner3 = -r[4][k];
            let d_inner2 = inner3 + th * d_inner3;
            let d_inner1 = -inner2 + th1 * d_inner2;
            d[k] = (inner1 + th * d_inner1) / self.h;
        }
        d
    }
}

/// Accepted steps of an integration, usable as a continuous solution.
#[derive(Clone, Debug)]
pub struct Solution<T, const N: usize> {
    pub steps: Vec<Step<T, N>>,
    pub t_start: T,
    pub y_start: [T; N],
    /// Where integration stopped: `t_end`, or the located event time.
    pub t_stop: T,
    pub y_stop: [T; N],
    pub event: Option<T>,
    pub rhs_evals: usize,
}

impl<T: Real, const N: usize> Solution<T, N> {
    fn locate(&self, t: T) -> Option<&Step<T, N>> {
        if self.steps.is_empty() {
            return None;
        }
        let forward = self.steps[0].h > T::zero();
        // steps are ordered in the direction of integration
        let idx = self.steps.partition_point(|s| if forward { s.t1() < t } else { s.t1() > t });
        Some(&self.steps[idx.min(self.steps.len() - 1)])
    }

    /// True if `t` is within the integrated range.
    pub fn covers(&self, t: T) -> bool {
        let (a, b) = if self.t_stop >= self.t_start {
            (self.t_start, self.t_stop)
        } else {
            (self.t_stop, self.t_start)
        };
        t >= a && t <= b
    }

    pub fn eval(&self, t: T) -> [T; N] {
        match self.locate(t) {
            Some(step) => step.eval(t),
            None => self.y_start,
        }
    }

    pub fn derivative(&self, t: T) -> Option<[T; N]> {
        self.locate(t).map(|s| s.derivative(t))
    }
}

// Dormand–Prince coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn comb<T: Real, const N: usize>(y: &[T; N], h: T, terms: &[(f64, &[T; N])]) -> [T; N] {
    let mut out = *y;
    for (c, k) in terms {
        let c: T = lit(*c);
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
///
/// `event`, if given, is a scalar function of the state; integration stops at
/// the first time it changes sign, located by bisection on the dense output
/// to `event_tol`.
pub fn integrate<T, const N: usize, F, G>(
    f: F,
    t0: T,
    y0: [T; N],
    t1: T,
    opts: &OdeOptions<T>,
    event: Option<(G, T)>,
) -> Result<Solution<T, N>, OdeError>
where
    T: Real,
    F: Fn(T, &[T; N]) -> [T; N],
    G: Fn(T, &[T; N]) -> T,
{
    let span = t1 - t0;
    let dir = span.signum();
    let mut sol = Solution {
        steps: Vec::new(),
        t_start: t0,
        y_start: y0,
        t_stop: t0,
        y_stop: y0,
        event: None,
        rhs_evals: 0,
    };
    if span == T::zero() {
        return Ok(sol);
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    sol.rhs_evals += 1;
    let mut h = dir * span.abs().min(lit::<T>(1e-3) * span.abs().max(T::one()));
    let mut g_prev = event.as_ref().map(|(g, _)| g(t, &y));
    let safety: T = lit(0.9);
    let h_min = span.abs() * T::epsilon() * lit(16.0);

    for _ in 0..opts.max_steps {
        if (t1 - t) * dir <= T::zero() {
            sol.t_stop = t;
            sol.y_stop = y;
            return Ok(sol);
        }
        if (t + h - t1) * dir > T::zero() {
            h = t1 - t;
        }
        let k2 = f(t + h * lit(C2), &comb(&y, h, &[(A21, &k1)]));
        let k3 = f(t + h * lit(C3), &comb(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + h * lit(C4), &comb(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(
            t + h * lit(C5),
            &comb(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &comb(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = comb(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y_new);
        sol.rhs_evals += 6;

        let mut err = T::zero();
        for i in 0..N {
            let e = h
                * (lit::<T>(E1) * k1[i]
                    + lit::<T>(E3) * k3[i]
                    + lit::<T>(E4) * k4[i]
                    + lit::<T>(E5) * k5[i]
                    + lit::<T>(E6) * k6[i]
                    + lit::<T>(E7) * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            // treat as a rejected step and retry smaller
            h = h * lit(0.25);
            if h.abs() < h_min {
                return Err(OdeError::NonFinite {
                    t: t.to_f64().unwrap_or(f64::NAN),
                });
            }
            continue;
        }
        if err <= T::one() {
            let mut rcont = [[T::zero(); N]; 5];
            for i in 0..N {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                rcont[0][i] = y[i];
                rcont[1][i] = ydiff;
                rcont[2][i] = bspl;
                rcont[3][i] = ydiff - h * k7[i] - bspl;
                rcont[4][i] = h
                    * (lit::<T>(D1) * k1[i]
                        + lit::<T>(D3) * k3[i]
                        + lit::<T>(D4) * k4[i]
                        + lit::<T>(D5) * k5[i]
                        + lit::<T>(D6) * k6[i]
                        + lit::<T>(D7) * k7[i]);
            }
            let step = Step { t0: t, h, rcont };
            if let (Some((g, tol)), Some(gp)) = (event.as_ref(), g_prev) {
                let g_new = g(t + h, &y_new);
                if gp != T::zero() && (g_new == T::zero() || g_new.signum() != gp.signum()) {
                    let (mut a, mut b) = (t, t + h);
                    while (b - a).abs() > *tol {
                        let m = (a + b) / lit(2.0);
                        let gm = g(m, &step.eval(m));
                        if gm == T::zero() || gm.signum() != gp.signum() {
                            b = m;
                        } else {
                            a = m;
                        }
                    }
                    sol.event = Some(b);
                    sol.t_stop = a;
                    sol.y_stop = step.eval(a);
                    sol.steps.push(step);
                    return Ok(sol);
                }
                g_prev = Some(g_new);
            }
            sol.steps.push(step);
            t = t + h;
            y = y_new;
            k1 = k7;
        }
        let fac = if err == T::zero() {
            lit(5.0)
        } else {
            (safety * err.powf(lit(-0.2))).max(lit(0.2)).min(lit(5.0))
        };
        h = h * fac;
        if h.abs() < h_min {
            return Err(OdeError::StepUnderflow {
                t: t.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    Err(OdeError::TooManySteps(opts.max_steps))
}

/// Plain integration without events.
pub fn solve<T, const N: usize, F>(f: F, t0: T, y0: [T; N], t1: T, opts: &OdeOptions<T>) -> Result<Solution<T, N>, OdeError>
where
    T: Real,
    F: Fn(T, &[T; N]) -> [T; N],
{
    integrate::<T, N, F, fn(T, &[T; N]) -> T>(f, t0, y0, t1, opts, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_and_dense_output() {
        let opts = OdeOptions::default();
        let sol = solve(|_, y: &[f64; 1]| [y[0]], 0.0, [1.0], 2.0, &opts).unwrap();
        assert!((sol.y_stop[0] - 2f64.exp()).abs() < 1e-8 * 2f64.exp());
        for i in 0..=40 {
            let t = 0.05 * i as f64;
            assert!((sol.eval(t)[0] - t.exp()).abs() < 1e-8 * t.exp(), "t={t}");
            let d = sol.derivative(t).unwrap()[0];
            assert!((d - t.exp()).abs() < 1e-6 * t.exp(), "t={t} d={d}");
        }
    }

    #[test]
    fn backward_harmonic() {
        let opts = OdeOptions::default();
        let sol = solve(|_, y: &[f64; 2]| [y[1], -y[0]], 1.0, [1f64.sin(), 1f64.cos()], -2.0, &opts).unwrap();
        assert!((sol.y_stop[0] - (-2f64).sin()).abs() < 1e-8);
        assert!((sol.eval(0.0)[0]).abs() < 1e-8);
    }

    #[test]
    fn locates_blow_up_event() {
        // y' = 1 + y^2, y(0) = 0 -> tan t, pole at pi/2
        let opts = OdeOptions::default();
        let sol = integrate(
            |_, y: &[f64; 1]| [1.0 + y[0] * y[0]],
            0.0,
            [0.0],
            3.0,
            &opts,
            Some((|_, y: &[f64; 1]| 1e8 - y[0].abs(), 1e-12)),
        )
        .unwrap();
        let ev = sol.event.expect("event");
        assert!((ev - (std::f64::consts::FRAC_PI_2 - 1e-8)).abs() < 1e-9, "{ev}");
    }
}
