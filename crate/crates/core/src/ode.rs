//! Adaptive Dormand-Prince 5(4) integrator over real or complex vectors.
//!
//! The state is a flat `Vec<T>`; the right-hand side writes dy/dt into a
//! caller-provided buffer. Step size control is the usual embedded-error PI
//! controller with a mixed absolute/relative RMS norm.

use std::ops::{Add, Mul};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalar types the integrator can carry.
pub trait Component: Copy + Add<Output = Self> + Mul<f64, Output = Self> + Send + Sync {
    fn zero() -> Self;
    fn magnitude(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Component for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Component for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

// Dormand-Prince tableau.
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
// Error coefficients: 5th order weights minus embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug)]
pub struct Dopri5<T: Component> {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on |h|; `None` means unbounded.
    pub h_max: Option<f64>,
    h: Option<f64>,
    stats: StepStats,
    err_old: f64,
    k: [Vec<T>; 7],
    tmp: Vec<T>,
    y_new: Vec<T>,
}

impl<T: Component> Dopri5<T> {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Dopri5 {
            rtol,
            atol,
            max_steps: 50_000_000,
            h_max: None,
            h: None,
            stats: StepStats::default(),
            err_old: 1e-4,
            k: Default::default(),
            tmp: Vec::new(),
            y_new: Vec::new(),
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = Some(h_max);
        self
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    /// Last accepted (or proposed) step size.
    pub fn step_size(&self) -> Option<f64> {
        self.h
    }

    fn ensure_buffers(&mut self, n: usize) {
        if self.tmp.len() != n {
            for k in self.k.iter_mut() {
                *k = vec![T::zero(); n];
            }
            self.tmp = vec![T::zero(); n];
            self.y_new = vec![T::zero(); n];
        }
    }

    fn error_norm(&self, y: &[T], h: f64) -> f64 {
        let n = y.len().max(1) as f64;
        let mut acc = 0.0;
        for i in 0..y.len() {
            let e = (self.k[0][i] * E1
                + self.k[2][i] * E3
                + self.k[3][i] * E4
                + self.k[4][i] * E5
                + self.k[5][i] * E6
                + self.k[6][i] * E7)
                .magnitude()
                * h.abs();
            let scale = self.atol + self.rtol * y[i].magnitude().max(self.y_new[i].magnitude());
            let r = e / scale;
            acc += r * r;
        }
        (acc / n).sqrt()
    }

    fn initial_step<F>(&mut self, f: &mut F, t0: f64, y: &[T], span: f64) -> f64
    where
        F: FnMut(f64, &[T], &mut [T]),
    {
        // Hairer-Norsett-Wanner starting step heuristic.
        let (atol, rtol) = (self.atol, self.rtol);
        let scale = |yi: &T| atol + rtol * yi.magnitude();
        f(t0, y, &mut self.k[0]);
        self.stats.evaluations += 1;
        let n = y.len().max(1) as f64;
        let (mut d0, mut d1) = (0.0, 0.0);
        for i in 0..y.len() {
            let s = scale(&y[i]);
            d0 += (y[i].magnitude() / s).powi(2);
            d1 += (self.k[0][i].magnitude() / s).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(span.abs());
        for i in 0..y.len() {
            self.tmp[i] = y[i] + self.k[0][i] * h0;
        }
        f(t0 + h0, &self.tmp, &mut self.k[1]);
        self.stats.evaluations += 1;
        let mut d2 = 0.0;
        for i in 0..y.len() {
            let s = scale(&y[i]);
            d2 += (((self.k[1][i] + self.k[0][i] * -1.0).magnitude()) / s).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span.abs())
    }

    /// Integrate `y` in place from `t0` to `t1` (either direction).
    pub fn integrate<F>(&mut self, f: &mut F, t0: f64, t1: f64, y: &mut [T]) -> Result<()>
    where
        F: FnMut(f64, &[T], &mut [T]),
    {
        let n = y.len();
        self.ensure_buffers(n);
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(());
        }
        let dir = span.signum();
        let mut h = match self.h {
            Some(h) => h.abs(),
            None => self.initial_step(f, t0, y, span),
        };
        if let Some(hm) = self.h_max {
            h = h.min(hm);
        }
        let mut t = t0;
        f(t, y, &mut self.k[0]);
        self.stats.evaluations += 1;
        let mut steps = 0usize;
        let mut reject_streak = false;

        loop {
            let remaining = (t1 - t) * dir;
            if remaining <= 0.0 {
                break;
            }
            let last = h >= remaining;
            let h_step = if last { remaining } else { h };
            let hs = h_step * dir;

            if last && remaining <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
                // Rounding residue of the time grid, not a real step.
                break;
            }
            if h_step < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t, h: h_step });
            }
            steps += 1;
            if steps > self.max_steps {
                return Err(Error::StepBudgetExhausted {
                    t,
                    target: t1,
                    max_steps: self.max_steps,
                });
            }

            self.stage(f, t, y, hs);
            let err = self.error_norm(y, hs);

            if !err.is_finite() {
                // Treat as a hard rejection; shrink aggressively.
                h = h_step * 0.1;
                reject_streak = true;
                self.stats.rejected += 1;
                continue;
            }

            if err <= 1.0 {
                // PI controller (Gustafsson), exponents as in DOPRI5.
                let beta = 0.04;
                let expo = 0.2 - beta * 0.75;
                let mut fac = 0.9 * err.max(1e-10).powf(-expo) * self.err_old.powf(beta);
                fac = fac.clamp(0.2, 10.0);
                if reject_streak {
                    fac = fac.min(1.0);
                }
                self.err_old = err.max(1e-4);
                t = if last { t1 } else { t + hs };
                y.copy_from_slice(&self.y_new);
                // FSAL: the seventh stage is f(t + h, y_new).
                self.k.swap(0, 6);
                self.stats.accepted += 1;
                reject_streak = false;
                if !last || fac < 1.0 {
                    h = h_step * fac;
                }
                if let Some(hm) = self.h_max {
                    h = h.min(hm);
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { t });
                }
            } else {
                let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                h = h_step * fac;
                reject_streak = true;
                self.stats.rejected += 1;
            }
        }
        self.h = Some(h);
        Ok(())
    }

    fn stage<F>(&mut self, f: &mut F, t: f64, y: &[T], h: f64)
    where
        F: FnMut(f64, &[T], &mut [T]),
    {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + k1[i] * (h * A21);
        }
        f(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        f(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        f(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        f(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = y[i]
                + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        f(t + h, tmp, k6);
        let y_new = &mut self.y_new;
        for i in 0..n {
            y_new[i] = y[i]
                + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
        }
        f(t + h, y_new, k7);
        self.stats.evaluations += 6;
    }
}

/// Dormand-Prince 5(4) for small real systems held in fixed-size arrays.
///
/// Same controller as [`Dopri5`], without heap buffers or per-component
/// dispatch; used for the many short Bloch trajectories of an ensemble.
#[derive(Clone, Debug)]
pub struct FixedDopri5<const D: usize> {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    h: Option<f64>,
    err_old: f64,
    stats: StepStats,
}

impl<const D: usize> FixedDopri5<D> {
    pub fn new(rtol: f64, atol: f64) -> Self {
        FixedDopri5 { rtol, atol, max_steps: 50_000_000, h: None, err_old: 1e-4, stats: StepStats::default() }
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    pub fn integrate<F>(&mut self, f: &mut F, t0: f64, t1: f64, y: &mut [f64; D]) -> Result<()>
    where
        F: FnMut(f64, &[f64; D]) -> [f64; D],
    {
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(());
        }
        let dir = span.signum();
        let lin = |y: &[f64; D], terms: &[(f64, &[f64; D])]| {
            let mut out = *y;
            for (c, k) in terms {
                for i in 0..D {
                    out[i] += c * k[i];
                }
            }
            out
        };
        let mut k1 = f(t0, y);
        self.stats.evaluations += 1;
        let mut h = match self.h {
            Some(h) => h.abs(),
            None => {
                let n = D.max(1) as f64;
                let (mut d0, mut d1) = (0.0, 0.0);
                for i in 0..D {
                    let s = self.atol + self.rtol * y[i].abs();
                    d0 += (y[i] / s).powi(2);
                    d1 += (k1[i] / s).powi(2);
                }
                let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
                let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
                h0.min(span.abs())
            }
        };
        let mut t = t0;
        let mut steps = 0usize;
        let mut reject_streak = false;
        loop {
            let remaining = (t1 - t) * dir;
            if remaining <= 0.0 {
                break;
            }
            let last = h >= remaining;
            let h_step = if last { remaining } else { h };
            let hs = h_step * dir;
            if last && remaining <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
                break;
            }
            if h_step < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t, h: h_step });
            }
            steps += 1;
            if steps > self.max_steps {
                return Err(Error::StepBudgetExhausted { t, target: t1, max_steps: self.max_steps });
            }
            let k2 = f(t + C2 * hs, &lin(y, &[(hs * A21, &k1)]));
            let k3 = f(t + C3 * hs, &lin(y, &[(hs * A31, &k1), (hs * A32, &k2)]));
            let k4 = f(t + C4 * hs, &lin(y, &[(hs * A41, &k1), (hs * A42, &k2), (hs * A43, &k3)]));
            let k5 = f(
                t + C5 * hs,
                &lin(y, &[(hs * A51, &k1), (hs * A52, &k2), (hs * A53, &k3), (hs * A54, &k4)]),
            );
            let k6 = f(
                t + hs,
                &lin(y, &[(hs * A61, &k1), (hs * A62, &k2), (hs * A63, &k3), (hs * A64, &k4), (hs * A65, &k5)]),
            );
            let y_new = lin(y, &[(hs * A71, &k1), (hs * A73, &k3), (hs * A74, &k4), (hs * A75, &k5), (hs * A76, &k6)]);
            let k7 = f(t + hs, &y_new);
            self.stats.evaluations += 6;
            let mut acc = 0.0;
            for i in 0..D {
                let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let r = e / (self.atol + self.rtol * y[i].abs().max(y_new[i].abs()));
                acc += r * r;
            }
            let err = (acc / D.max(1) as f64).sqrt();
            if !err.is_finite() {
                h = h_step * 0.1;
                reject_streak = true;
                self.stats.rejected += 1;
                continue;
            }
            if err <= 1.0 {
                let beta = 0.04;
                let expo = 0.2 - beta * 0.75;
                let mut fac = (0.9 * err.max(1e-10).powf(-expo) * self.err_old.powf(beta)).clamp(0.2, 10.0);
                if reject_streak {
                    fac = fac.min(1.0);
                }
                self.err_old = err.max(1e-4);
                t = if last { t1 } else { t + hs };
                *y = y_new;
                k1 = k7;
                self.stats.accepted += 1;
                reject_streak = false;
                if !last || fac < 1.0 {
                    h = h_step * fac;
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { t });
                }
            } else {
                h = h_step * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                reject_streak = true;
                self.stats.rejected += 1;
            }
        }
        self.h = Some(h);
        Ok(())
    }
}
