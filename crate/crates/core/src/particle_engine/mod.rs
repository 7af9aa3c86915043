//! Branching particle systems: the mass-`1/N` approximation of a superprocess,
//! with an optional absorbing barrier, and exact branching Brownian motion trees.

mod ensemble;
mod population;
mod rates;
mod tree;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use ensemble::{ExitEnsemble, ParticleEnsemble};
pub use population::{
    stochastic_round, Barrier, BarrierMode, FarFieldConfig, Population, DEFAULT_PARTICLE_CAP,
};
pub use rates::{discretize_offspring, discretize_offspring_unchecked, JumpChannel, ParticleRates};
pub use tree::{minimum_position, simulate_bbm, SkeletonTree, TreeNode};

use crate::error::{domain, Result};
use crate::mechanism::BranchingMechanism;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmOptions {
    pub n_scale: usize,
    /// Barrier depth `y`; the run then also reports exit ensembles.
    pub barrier: Option<f64>,
    pub far_field: Option<FarFieldConfig>,
    pub particle_cap: usize,
}

impl SbmOptions {
    pub fn new(n_scale: usize) -> Self {
        Self {
            n_scale,
            barrier: None,
            far_field: None,
            particle_cap: DEFAULT_PARTICLE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SbmRun {
    pub path: Vec<ParticleEnsemble>,
    /// Exit ensembles at the same times as `path` when a barrier was given.
    pub exits: Vec<ExitEnsemble>,
}

/// Builds a population for `mech` from an initial ensemble, with the barrier and
/// closure requested in `opts`. With both a barrier and the closure, the barrier
/// absorbs; otherwise it marks, so the free process stays observable.
pub fn build_population<R: Rng + ?Sized>(
    mech: &BranchingMechanism,
    init: &ParticleEnsemble,
    opts: &SbmOptions,
    rng: &mut R,
) -> Result<Population> {
    let rates = discretize_offspring(mech, opts.n_scale)?;
    let lambda0 = (2.0 * mech.alpha()).sqrt();
    let mut pop = Population::new(rates).with_cap(opts.particle_cap);
    if let Some(y) = opts.barrier {
        if !(mech.alpha() > 0.0) {
            return Err(domain("a barrier needs a supercritical mechanism to fix the frame speed"));
        }
        let mode = if opts.far_field.is_some() {
            BarrierMode::Absorb
        } else {
            BarrierMode::Mark
        };
        pop = pop.with_barrier(Barrier { y, lambda0, mode })?;
    }
    if let Some(cfg) = opts.far_field {
        if !(mech.alpha() > 0.0) {
            return Err(domain("the far-field closure needs a supercritical mechanism"));
        }
        pop = pop.with_far_field(cfg, lambda0)?;
    }
    for &(x, m) in &init.atoms {
        pop.add_mass(x, m, rng)?;
    }
    Ok(pop)
}

/// Superprocess approximation observed at the increasing `times`.
pub fn simulate_sbm<R: Rng + ?Sized>(
    mech: &BranchingMechanism,
    init: &ParticleEnsemble,
    times: &[f64],
    opts: &SbmOptions,
    rng: &mut R,
) -> Result<SbmRun> {
    if init.is_empty() {
        return Err(domain("initial ensemble is empty"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(domain("observation times must be non-negative and strictly increasing"));
    }
    let mut pop = build_population(mech, init, opts, rng)?;
    let mut run = SbmRun::default();
    for &t in times {
        run.path.push(pop.ensemble(t, rng)?);
        if opts.barrier.is_some() {
            run.exits.push(pop.exit_ensemble(t, rng)?);
        }
    }
    Ok(run)
}
