//! Adaptive Dormand-Prince 5(4) integrator over flat `f64` state vectors.
//!
//! Complex states are stored as interleaved (re, im) pairs by the callers.
//! The observer sees every accepted step together with the derivative at the
//! new point (first-same-as-last), which is what the steady-state detectors
//! in this crate key on.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

/// Returned by the observer after each accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; `0` picks one from the derivative scale.
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-12, h_init: 0.0, h_max: f64::INFINITY, max_steps: 50_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    /// Time reached (either `t_end` or where the observer stopped).
    pub t: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub stopped: bool,
}

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

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl Dopri5 {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Default::default() }
    }

    /// Integrates `dy/dt = f(t, y)` from `t0` to `t_end`, updating `y` in place.
    pub fn integrate<F, O>(
        &self,
        mut f: F,
        t0: f64,
        y: &mut [f64],
        t_end: f64,
        mut observe: O,
    ) -> Result<Outcome, OdeError>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        O: FnMut(f64, &[f64], &[f64]) -> Control,
    {
        let n = y.len();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut k5 = vec![0.0; n];
        let mut k6 = vec![0.0; n];
        let mut k7 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut y_new = vec![0.0; n];

        let mut t = t0;
        f(t, y, &mut k1);
        if observe(t, y, &k1) == Control::Stop {
            return Ok(Outcome { t, accepted: 0, rejected: 0, stopped: true });
        }

        let span = t_end - t0;
        let mut h = if self.h_init > 0.0 { self.h_init } else { self.initial_step(y, &k1, span) };
        h = h.min(self.h_max).min(span);

        let mut accepted = 0;
        let mut rejected = 0;
        let mut err_prev: f64 = 1e-4;

        while t < t_end {
            if accepted + rejected >= self.max_steps {
                return Err(OdeError::TooManySteps { t, max_steps: self.max_steps });
            }
            let last = t + h >= t_end;
            if last {
                h = t_end - t;
            }
            if h <= f64::EPSILON * t.abs().max(1.0) {
                return Err(OdeError::StepUnderflow { t });
            }

            for i in 0..n {
                tmp[i] = y[i] + h * A21 * k1[i];
            }
            f(t + C2 * h, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * h, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * h, &tmp, &mut k4);
            for i in 0..n {
                tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * h, &tmp, &mut k5);
            for i in 0..n {
                tmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(t + h, &tmp, &mut k6);
            for i in 0..n {
                y_new[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(t + h, &y_new, &mut k7);

            let mut err_sq = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err_sq += (e / sc) * (e / sc);
            }
            let err = (err_sq / n.max(1) as f64).sqrt();

            if !err.is_finite() {
                if y_new.iter().any(|v| !v.is_finite()) && h < 1e-300 {
                    return Err(OdeError::NonFinite { t });
                }
                rejected += 1;
                h *= 0.1;
                continue;
            }

            if err <= 1.0 {
                t = if last { t_end } else { t + h };
                y.copy_from_slice(&y_new);
                std::mem::swap(&mut k1, &mut k7);
                accepted += 1;
                if observe(t, y, &k1) == Control::Stop {
                    return Ok(Outcome { t, accepted, rejected, stopped: true });
                }
                // PI step-size control
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0)).clamp(0.2, 5.0)
                };
                err_prev = err.max(1e-4);
                h = (h * fac).min(self.h_max);
            } else {
                rejected += 1;
                h *= (0.9 * err.powf(-0.2)).max(0.2);
            }
        }
        Ok(Outcome { t, accepted, rejected, stopped: false })
    }

    fn initial_step(&self, y: &[f64], dy: &[f64], span: f64) -> f64 {
        let n = y.len().max(1) as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for (yi, di) in y.iter().zip(dy) {
            let sc = self.atol + self.rtol * yi.abs();
            d0 += (yi / sc).powi(2);
            d1 += (di / sc).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(span.abs()).max(1e-12)
    }
}
