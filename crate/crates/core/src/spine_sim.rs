//! Spine representation of the superprocess size-biased by the exit martingale
//! `V^{-y}`: a Bessel-3 spine shedding independent copies of the process.
//!
//! At finite `N` the spine is one mass-`1/N` particle of the particle system.
//! Under the size-biased law it moves as `eta - y` with `eta` a Bessel-3 process
//! in the drifted frame, branches at size-biased rates, and every non-spine
//! offspring starts an independent unconditioned system. The remaining `N - 1`
//! initial particles form the independent copy.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::kernels::Bessel3Path;
use crate::martingales::exit_wv;
use crate::mechanism::{BranchingMechanism, DerivedConstants};
use crate::particle_engine::{
    discretize_offspring, Barrier, BarrierMode, ExitEnsemble, FarFieldConfig, Population, DEFAULT_PARTICLE_CAP,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineOptions {
    pub n_scale: usize,
    pub far_field: Option<FarFieldConfig>,
    pub particle_cap: usize,
    /// Keep every exit ensemble in the returned path.
    pub keep_exits: bool,
}

impl SpineOptions {
    pub fn new(n_scale: usize) -> Self {
        Self {
            n_scale,
            far_field: None,
            particle_cap: DEFAULT_PARTICLE_CAP,
            keep_exits: false,
        }
    }
}

/// One shedding event on the spine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpineImmigration {
    pub time: f64,
    /// Drifted-frame spine position.
    pub position: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinePath {
    pub y: f64,
    pub times: Vec<f64>,
    /// Drifted-frame spine positions `xi_t` at `times`; `xi_t + y > 0`.
    pub spine: Vec<f64>,
    pub immigration: Vec<SpineImmigration>,
    /// `(W~, V~)` at `times`.
    pub wv: Vec<(f64, f64)>,
    pub exits: Vec<ExitEnsemble>,
}

impl SpinePath {
    pub fn ratio(&self, k: usize) -> f64 {
        let (w, v) = self.wv[k];
        w / v
    }
}

pub fn simulate_spine_system<R: Rng + ?Sized>(
    mech: &BranchingMechanism,
    derived: &DerivedConstants,
    y: f64,
    times: &[f64],
    opts: &SpineOptions,
    rng: &mut R,
) -> Result<SpinePath> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(domain(format!("barrier depth y = {y} must be positive")));
    }
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) || times[0] < 0.0 {
        return Err(domain("observation times must be non-negative and strictly increasing"));
    }
    let rates = discretize_offspring(mech, opts.n_scale)?;
    let l0 = derived.lambda0;
    let mass = rates.mass();
    let channels: Vec<(f64, u32)> = std::iter::once((rates.spine_binary_rate(), 1))
        .chain(rates.spine_jump_rates())
        .filter(|c| c.0 > 0.0)
        .collect();
    let spine_rate: f64 = channels.iter().map(|c| c.0).sum();

    let mut pop = Population::new(rates)
        .with_cap(opts.particle_cap)
        .with_barrier(Barrier {
            y,
            lambda0: l0,
            mode: BarrierMode::Absorb,
        })?;
    if let Some(cfg) = opts.far_field {
        pop = pop.with_far_field(cfg, l0)?;
    }
    pop.add_particles(0.0, opts.n_scale - 1, rng)?;

    let mut eta = Bessel3Path::new(y);
    let mut clock = 0.0;
    let mut next_event = draw_next(0.0, spine_rate, rng);
    let mut out = SpinePath {
        y,
        times: times.to_vec(),
        spine: Vec::with_capacity(times.len()),
        immigration: Vec::new(),
        wv: Vec::with_capacity(times.len()),
        exits: Vec::new(),
    };
    for &t in times {
        while next_event <= t {
            let s = next_event;
            let xi = eta.step(s - clock, rng) - y;
            clock = s;
            let mut u = rng.random::<f64>() * spine_rate;
            let mut extra = channels.last().map_or(0, |c| c.1);
            for &(r, k) in &channels {
                if u < r {
                    extra = k;
                    break;
                }
                u -= r;
            }
            pop.schedule_particles(xi - l0 * s, s, extra as usize)?;
            out.immigration.push(SpineImmigration {
                time: s,
                position: xi,
                mass: extra as f64 * mass,
            });
            next_event = draw_next(s, spine_rate, rng);
        }
        let xi = eta.step(t - clock, rng) - y;
        clock = t;
        let mut exit = pop.exit_ensemble(t, rng)?;
        exit.top_atoms.push((xi, mass));
        out.spine.push(xi);
        out.wv.push(exit_wv(&exit, derived));
        if opts.keep_exits {
            out.exits.push(exit);
        }
    }
    Ok(out)
}

fn draw_next<R: Rng + ?Sized>(from: f64, rate: f64, rng: &mut R) -> f64 {
    if rate > 0.0 {
        let e: f64 = Exp1.sample(rng);
        from + e / rate
    } else {
        f64::INFINITY
    }
}

/// Ensemble comparison of `W~/V~` with the spine observable `1/(xi + y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpineCheck {
    pub t: f64,
    pub mean_ratio: f64,
    pub se_ratio: f64,
    pub mean_spine: f64,
    pub se_spine: f64,
    pub difference: f64,
    /// Standard error of the per-replicate difference.
    pub se_difference: f64,
}

/// Compares `mean(W~/V~)` with `mean(1/(xi_t + y))` over replicate paths at
/// observation index `k`.
pub fn spine_conditional_check(paths: &[SpinePath], k: usize) -> Result<SpineCheck> {
    if paths.len() < 2 {
        return Err(crate::error::Error::InsufficientData {
            needed: 2,
            got: paths.len(),
        });
    }
    let ratio: Vec<f64> = paths.iter().map(|p| p.ratio(k)).collect();
    let spine: Vec<f64> = paths.iter().map(|p| 1.0 / (p.spine[k] + p.y)).collect();
    let diff: Vec<f64> = ratio.iter().zip(&spine).map(|(a, b)| a - b).collect();
    let (mr, sr) = mean_se(&ratio);
    let (ms, ss) = mean_se(&spine);
    let (md, sd) = mean_se(&diff);
    Ok(SpineCheck {
        t: paths[0].times[k],
        mean_ratio: mr,
        se_ratio: sr,
        mean_spine: ms,
        se_spine: ss,
        difference: md,
        se_difference: sd,
    })
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
