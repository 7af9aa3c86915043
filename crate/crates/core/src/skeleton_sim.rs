//! Skeleton decomposition: a branching Brownian motion of prolific lineages
//! dressed with immigration of extinction-conditioned mass.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::mechanism::{
    conditioned_mechanism, sample_branch_mass, skeleton_offspring, BranchingMechanism, DerivedConstants,
    DEFAULT_K_MAX,
};
use crate::particle_engine::{
    discretize_offspring, simulate_bbm, stochastic_round, ParticleEnsemble, Population, SkeletonTree,
    DEFAULT_PARTICLE_CAP,
};

/// Law of the mass issued at skeleton branch points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BranchPointLaw {
    /// The unconditioned process.
    #[default]
    Plain,
    /// The process conditioned on extinction.
    Conditioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImmigrationKind {
    Continuous,
    Discrete,
    BranchPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Immigration {
    pub kind: ImmigrationKind,
    pub time: f64,
    pub position: f64,
    pub mass: f64,
    /// Skeleton node hosting the event.
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonOptions {
    pub n_scale: usize,
    /// When positive, continuous-immigration times are snapped to the start of
    /// windows of this length.
    pub delta_imm: f64,
    pub branch_point_law: BranchPointLaw,
    pub particle_cap: usize,
}

impl SkeletonOptions {
    pub fn new(n_scale: usize) -> Self {
        Self {
            n_scale,
            delta_imm: 0.0,
            branch_point_law: BranchPointLaw::Plain,
            particle_cap: DEFAULT_PARTICLE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaPath {
    pub k0: usize,
    pub skeleton: SkeletonTree,
    pub immigration: Vec<Immigration>,
    pub path: Vec<ParticleEnsemble>,
}

/// Samples `Lambda` from `delta_0` and observes it at the increasing `times`.
pub fn simulate_skeleton_decomposition<R: Rng + ?Sized>(
    mech: &BranchingMechanism,
    derived: &DerivedConstants,
    times: &[f64],
    opts: &SkeletonOptions,
    rng: &mut R,
) -> Result<LambdaPath> {
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) || times[0] < 0.0 {
        return Err(domain("observation times must be non-negative and strictly increasing"));
    }
    let horizon = *times.last().expect("non-empty");
    let n = opts.n_scale;
    let nf = n as f64;
    let star = conditioned_mechanism(mech, derived);
    let mut conditioned = Population::new(discretize_offspring(&star, n)?).with_cap(opts.particle_cap);
    let mut plain = Population::new(discretize_offspring(mech, n)?).with_cap(opts.particle_cap);

    let k0 = Poisson::new(derived.lambda_star)
        .map_err(|e| domain(format!("Poisson({}): {e}", derived.lambda_star)))?
        .sample(rng) as usize;
    let law = skeleton_offspring(mech, derived, DEFAULT_K_MAX)?;
    let skeleton = simulate_bbm(
        derived.skeleton_rate(),
        &law,
        0.0,
        &vec![0.0; k0],
        horizon,
        opts.particle_cap,
        rng,
    )?;

    conditioned.add_particles(0.0, n, rng)?;

    let ls = derived.lambda_star;
    let discrete: Vec<(f64, f64)> = mech
        .nu()
        .atoms()
        .iter()
        .map(|&(x, w)| (x, w * x * (-ls * x).exp()))
        .collect();
    let discrete_rate: f64 = discrete.iter().map(|a| a.1).sum();
    let continuous_rate = 2.0 * mech.beta() * nf;

    let mut log = Vec::new();
    let mut event_times = Vec::new();
    let mut kinds: Vec<(ImmigrationKind, f64)> = Vec::new();
    for u in 0..skeleton.len() {
        let node = &skeleton.nodes[u];
        event_times.clear();
        kinds.clear();
        let (b, d) = (node.birth, node.death);
        for (rate, kind) in [
            (continuous_rate, ImmigrationKind::Continuous),
            (discrete_rate, ImmigrationKind::Discrete),
        ] {
            if rate <= 0.0 {
                continue;
            }
            let mut s = b;
            loop {
                let e: f64 = Exp1.sample(rng);
                s += e / rate;
                if s > d {
                    break;
                }
                let (time, mass) = match kind {
                    ImmigrationKind::Continuous => {
                        let snapped = if opts.delta_imm > 0.0 {
                            ((s / opts.delta_imm).floor() * opts.delta_imm).max(b)
                        } else {
                            s
                        };
                        (snapped, 1.0 / nf)
                    }
                    _ => {
                        let mut v = rng.random::<f64>() * discrete_rate;
                        let mut x = discrete.last().map_or(0.0, |a| a.0);
                        for &(xi, wi) in &discrete {
                            if v < wi {
                                x = xi;
                                break;
                            }
                            v -= wi;
                        }
                        (s, x)
                    }
                };
                kinds.push((kind, mass));
                event_times.push(time);
            }
        }
        if !node.censored {
            let y = sample_branch_mass(mech, derived, node.offspring, rng)?;
            if y > 0.0 {
                kinds.push((ImmigrationKind::BranchPoint, y));
                event_times.push(d);
            }
        }
        if kinds.is_empty() {
            continue;
        }
        let mut order: Vec<usize> = (0..kinds.len()).collect();
        order.sort_by(|&i, &j| event_times[i].total_cmp(&event_times[j]));
        let sorted: Vec<f64> = order.iter().map(|&i| event_times[i]).collect();
        let xs = skeleton.positions_at(u, &sorted)?;
        for (&i, (&time, &x)) in order.iter().zip(sorted.iter().zip(&xs)) {
            let (kind, mass) = kinds[i];
            let target = match (kind, opts.branch_point_law) {
                (ImmigrationKind::BranchPoint, BranchPointLaw::Plain) => &mut plain,
                _ => &mut conditioned,
            };
            let count = stochastic_round(mass * nf, rng);
            target.schedule_particles(x, time, count)?;
            log.push(Immigration {
                kind,
                time,
                position: x,
                mass,
                node: u,
            });
        }
    }
    log.sort_by(|a, b| a.time.total_cmp(&b.time));

    let mut path = Vec::with_capacity(times.len());
    for &t in times {
        let mut ens = conditioned.ensemble(t, rng)?;
        ens.atoms.extend(plain.ensemble(t, rng)?.atoms);
        path.push(ens);
    }
    Ok(LambdaPath {
        k0,
        skeleton,
        immigration: log,
        path,
    })
}
