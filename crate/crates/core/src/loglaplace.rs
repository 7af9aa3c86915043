//! Deterministic solver for the log-Laplace equation
//! `u_t = G_t f - int_0^t G_{t-s} psi(u_s) ds`, giving `E_x exp(-<f, X_t>) = exp(-u(x, t))`.
//!
//! Time is split into steps of length `k`. On each step the mild form is
//! restarted from the previous value and the time integral is replaced by
//! Simpson's rule on `{0, k/2, k}` (the midpoint by the trapezoid rule); the
//! resulting implicit system is solved by Picard sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mechanism::BranchingMechanism;

pub const PICARD_TOL: f64 = 1e-10;
pub const PICARD_MAX_SWEEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub x_lo: f64,
    pub x_hi: f64,
    pub h: f64,
    pub dt: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            x_lo: -20.0,
            x_hi: 20.0,
            h: 0.01,
            dt: 0.01,
        }
    }
}

impl GridParams {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.x_hi - self.x_lo) / self.h).round() as usize;
        (0..=n).map(|j| self.x_lo + j as f64 * self.h).collect()
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.points().into_iter().map(f).collect()
    }

    /// Same domain with half the space and time steps.
    pub fn refined(&self) -> Self {
        Self {
            h: 0.5 * self.h,
            dt: 0.5 * self.dt,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.dt > 0.0 && self.x_hi > self.x_lo) {
            return Err(domain("grid needs h > 0, dt > 0 and x_hi > x_lo"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLaplaceSolution {
    pub grid: GridParams,
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    /// `values[k][j] = u(x_j, times[k])`.
    pub values: Vec<Vec<f64>>,
    pub iteration_count: usize,
    pub residual: f64,
}

impl LogLaplaceSolution {
    pub fn final_values(&self) -> &[f64] {
        self.values.last().map_or(&[], |v| v.as_slice())
    }

    /// Linear interpolation of `u(., T)` at `x`, constant outside the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        interpolate(&self.x, self.final_values(), x)
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let h = xs[1] - xs[0];
    let f = (x - xs[0]) / h;
    let j = (f.floor() as usize).min(n - 2);
    let w = f - j as f64;
    (1.0 - w) * ys[j] + w * ys[j + 1]
}

/// Discrete heat kernel of variance `s` on a grid of step `h`, truncated at
/// `8 sqrt(s)` and normalised; edges use constant extrapolation.
struct Heat {
    taps: Vec<f64>,
}

impl Heat {
    fn new(s: f64, h: f64) -> Self {
        let half = (8.0 * s.sqrt() / h).ceil() as i64;
        let mut taps: Vec<f64> = (-half..=half)
            .map(|k| {
                let z = k as f64 * h;
                (-z * z / (2.0 * s)).exp()
            })
            .collect();
        let total: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|w| *w /= total);
        Self { taps }
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = v.len() as i64;
        let half = (self.taps.len() / 2) as i64;
        for (j, o) in out.iter_mut().enumerate() {
            let j = j as i64;
            let mut acc = 0.0;
            if j >= half && j + half < n {
                let base = (j - half) as usize;
                for (w, x) in self.taps.iter().zip(&v[base..base + self.taps.len()]) {
                    acc += w * x;
                }
            } else {
                for (k, w) in self.taps.iter().enumerate() {
                    let idx = (j + k as i64 - half).clamp(0, n - 1) as usize;
                    acc += w * v[idx];
                }
            }
            *o = acc;
        }
    }
}

pub fn solve_log_laplace(mech: &BranchingMechanism, f: &[f64], t: f64, grid: &GridParams) -> Result<LogLaplaceSolution> {
    grid.validate()?;
    let x = grid.points();
    if f.len() != x.len() {
        return Err(domain(format!("f has {} values but the grid has {} points", f.len(), x.len())));
    }
    if f.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(domain("f must be finite and non-negative on the grid"));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(domain(format!("horizon {t} must be positive")));
    }
    let steps = (t / grid.dt - 1e-9).ceil().max(1.0) as usize;
    let k = t / steps as f64;
    let full = Heat::new(k, grid.h);
    let half = Heat::new(0.5 * k, grid.h);
    let psi = |v: f64| mech.psi(v.max(0.0)).0;

    let n = x.len();
    let mut values = vec![f.to_vec()];
    let mut times = vec![0.0];
    let mut sweeps_total = 0;
    let mut residual: f64 = 0.0;

    let mut g_full_u = vec![0.0; n];
    let mut g_half_u = vec![0.0; n];
    let mut g_full_p = vec![0.0; n];
    let mut g_half_p = vec![0.0; n];
    let mut g_half_ph = vec![0.0; n];
    let mut psi_buf = vec![0.0; n];

    for step in 1..=steps {
        let u0 = values.last().expect("initial values present");
        full.apply(u0, &mut g_full_u);
        half.apply(u0, &mut g_half_u);
        for (p, &v) in psi_buf.iter_mut().zip(u0) {
            *p = psi(v);
        }
        full.apply(&psi_buf, &mut g_full_p);
        half.apply(&psi_buf, &mut g_half_p);

        let mut uh = g_half_u.clone();
        let mut u1 = g_full_u.clone();
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            for (p, &v) in psi_buf.iter_mut().zip(&uh) {
                *p = psi(v);
            }
            half.apply(&psi_buf, &mut g_half_ph);
            let mut change: f64 = 0.0;
            for j in 0..n {
                let ph = psi_buf[j];
                let new_h = (g_half_u[j] - 0.25 * k * (g_half_p[j] + ph)).max(0.0);
                let new_1 = (g_full_u[j] - k / 6.0 * (g_full_p[j] + 4.0 * g_half_ph[j] + psi(u1[j]))).max(0.0);
                change = change.max((new_h - uh[j]).abs()).max((new_1 - u1[j]).abs());
                uh[j] = new_h;
                u1[j] = new_1;
            }
            if !change.is_finite() {
                return Err(Error::Iteration {
                    sweeps: sweeps_total + sweeps,
                    residual: change,
                });
            }
            if change < PICARD_TOL {
                residual = residual.max(change);
                break;
            }
            if sweeps >= PICARD_MAX_SWEEPS {
                return Err(Error::Iteration {
                    sweeps: sweeps_total + sweeps,
                    residual: change,
                });
            }
        }
        sweeps_total += sweeps;
        values.push(u1);
        times.push(step as f64 * k);
    }
    Ok(LogLaplaceSolution {
        grid: *grid,
        x,
        times,
        values,
        iteration_count: sweeps_total,
        residual,
    })
}

/// Closed-form solution of `v' = -psi(v)` for the quadratic mechanism.
pub fn logistic_closed_form(alpha: f64, beta: f64, theta: f64, t: f64) -> f64 {
    let e = (alpha * t).exp();
    alpha * theta * e / (alpha + beta * theta * (e - 1.0))
}
