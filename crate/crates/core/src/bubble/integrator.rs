//! Dormand-Prince 5(4) with embedded error control, on complex state vectors.
//!
//! Steps are clipped so that every requested output time is hit exactly;
//! no dense-output interpolation is involved.

use num_complex::Complex64;

use crate::error::{Error, Result};

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

// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Dopri5 {
            rtol,
            atol,
            max_steps: 10_000_000,
        }
    }

    fn error_norm(&self, y: &[Complex64], y_new: &[Complex64], err: &[Complex64]) -> f64 {
        let sum: f64 = y
            .iter()
            .zip(y_new)
            .zip(err)
            .map(|((a, b), e)| {
                let scale = self.atol + self.rtol * a.norm().max(b.norm());
                (e.norm() / scale).powi(2)
            })
            .sum();
        (sum / y.len() as f64).sqrt()
    }

    /// Integrates from `t0` through every time in `targets` (ascending, all
    /// `>= t0`), calling `on_sample` at each one. `post_step` may project the
    /// state after every accepted step.
    pub fn integrate<F, P, S>(
        &self,
        mut f: F,
        t0: f64,
        y: &mut [Complex64],
        targets: &[f64],
        mut post_step: P,
        mut on_sample: S,
    ) -> Result<IntegrationStats>
    where
        F: FnMut(f64, &[Complex64], &mut [Complex64]),
        P: FnMut(f64, &mut [Complex64]) -> Result<()>,
        S: FnMut(f64, &[Complex64]) -> Result<()>,
    {
        let n = y.len();
        let mut stats = IntegrationStats::default();
        let zero = Complex64::new(0.0, 0.0);
        let mut k: [Vec<Complex64>; 7] = std::array::from_fn(|_| vec![zero; n]);
        let mut stage = vec![zero; n];
        let mut y_new = vec![zero; n];
        let mut err = vec![zero; n];

        let mut t = t0;
        let mut remaining = targets.iter().copied().peekable();
        while let Some(&target) = remaining.peek() {
            if target > t0 {
                break;
            }
            on_sample(target, y)?;
            remaining.next();
        }
        let Some(&t_last) = targets.last() else {
            return Ok(stats);
        };
        if remaining.peek().is_none() {
            return Ok(stats);
        }

        f(t, y, &mut k[0]);
        stats.evaluations += 1;

        // Initial step from the scale of the derivative (Hairer-Norsett-Wanner).
        let scaled = |v: &[Complex64]| {
            (v.iter()
                .zip(y.iter())
                .map(|(d, s)| (d.norm() / (self.atol + self.rtol * s.norm())).powi(2))
                .sum::<f64>()
                / n as f64)
                .sqrt()
        };
        let d0 = scaled(y);
        let d1 = scaled(&k[0]);
        let mut h = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h = h.min(t_last - t0).max(1e-12);

        let mut last_rejected = false;
        let mut err_old: f64 = 1e-4;
        while let Some(&target) = remaining.peek() {
            if stats.accepted + stats.rejected > self.max_steps {
                return Err(Error::Integrator {
                    t,
                    reason: "step budget exhausted".into(),
                });
            }
            let h_min = 1e-14 * t.abs().max(1.0);
            if h < h_min {
                return Err(Error::Integrator {
                    t,
                    reason: format!("step size underflow (h = {h:.3e})"),
                });
            }
            let hits_target = t + h >= target;
            let step = if hits_target { target - t } else { h };

            macro_rules! combine {
                ($($coef:expr => $idx:expr),+) => {
                    for i in 0..n {
                        stage[i] = y[i] $(+ k[$idx][i] * ($coef * step))+;
                    }
                };
            }
            combine!(A21 => 0);
            f(t + C2 * step, &stage, &mut k[1]);
            combine!(A31 => 0, A32 => 1);
            f(t + C3 * step, &stage, &mut k[2]);
            combine!(A41 => 0, A42 => 1, A43 => 2);
            f(t + C4 * step, &stage, &mut k[3]);
            combine!(A51 => 0, A52 => 1, A53 => 2, A54 => 3);
            f(t + C5 * step, &stage, &mut k[4]);
            combine!(A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
            f(t + step, &stage, &mut k[5]);
            for i in 0..n {
                y_new[i] = y[i]
                    + (k[0][i] * A71
                        + k[2][i] * A73
                        + k[3][i] * A74
                        + k[4][i] * A75
                        + k[5][i] * A76)
                        * step;
            }
            f(t + step, &y_new, &mut k[6]);
            stats.evaluations += 6;
            for i in 0..n {
                err[i] = (k[0][i] * E1
                    + k[2][i] * E3
                    + k[3][i] * E4
                    + k[4][i] * E5
                    + k[5][i] * E6
                    + k[6][i] * E7)
                    * step;
            }
            let e = self.error_norm(y, &y_new, &err);
            if !e.is_finite() {
                stats.rejected += 1;
                h = 0.25 * step;
                last_rejected = true;
                continue;
            }
            if e <= 1.0 {
                stats.accepted += 1;
                t = if hits_target { target } else { t + step };
                y.copy_from_slice(&y_new);
                post_step(t, y)?;
                k.swap(0, 6);
                if hits_target {
                    on_sample(t, y)?;
                    remaining.next();
                }
                // PI control damps the accept/reject cycling of stability-limited steps
                let grow = if e == 0.0 {
                    5.0
                } else {
                    (0.9 * e.powf(-PI_ALPHA) * err_old.powf(PI_BETA)).clamp(0.2, 5.0)
                };
                err_old = e.max(1e-4);
                let grow = if last_rejected { grow.min(1.0) } else { grow };
                // a clipped step says nothing about the admissible size
                h = if hits_target {
                    h.max(step * grow)
                } else {
                    step * grow
                };
                last_rejected = false;
            } else {
                stats.rejected += 1;
                h = step * (0.9 * e.powf(-0.2)).clamp(0.2, 1.0);
                last_rejected = true;
            }
        }
        Ok(stats)
    }
}
