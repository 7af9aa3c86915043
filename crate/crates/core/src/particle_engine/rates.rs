use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mechanism::BranchingMechanism;

/// One Lévy atom realised as a per-particle event that adds `offspring - 1`
/// copies of the particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpChannel {
    pub jump_size: f64,
    pub rate: f64,
    pub offspring: u32,
}

/// Event rates of the mass-`1/N` branching particle system approximating a
/// superprocess with a given mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleRates {
    pub n_scale: usize,
    pub binary_rate: f64,
    pub q0: f64,
    pub q2: f64,
    pub jumps: Vec<JumpChannel>,
}

impl ParticleRates {
    /// Branching switched off; particles only diffuse.
    pub fn pure_diffusion(n_scale: usize) -> Self {
        Self {
            n_scale,
            binary_rate: 0.0,
            q0: 0.5,
            q2: 0.5,
            jumps: Vec::new(),
        }
    }

    pub fn mass(&self) -> f64 {
        1.0 / self.n_scale as f64
    }

    pub fn total_rate(&self) -> f64 {
        self.binary_rate + self.jumps.iter().map(|j| j.rate).sum::<f64>()
    }

    /// Mean growth rate of the particle count; equals `alpha` of the mechanism.
    pub fn drift(&self) -> f64 {
        self.binary_rate * (self.q2 - self.q0)
            + self
                .jumps
                .iter()
                .map(|j| j.rate * (j.offspring - 1) as f64)
                .sum::<f64>()
    }

    /// Rate at which a size-biased (spine) particle sheds single independent
    /// particles through the binary channel.
    pub fn spine_binary_rate(&self) -> f64 {
        2.0 * self.binary_rate * self.q2
    }

    /// Per-channel rates of the size-biased jump events; each sheds
    /// `offspring - 1` particles.
    pub fn spine_jump_rates(&self) -> impl Iterator<Item = (f64, u32)> + '_ {
        self.jumps
            .iter()
            .map(|j| (j.rate * j.offspring as f64, j.offspring - 1))
    }
}

/// Moment-matched particle rates. Jump channels carry the Lévy atoms with
/// `round(x N)` extra particles; the binary channel carries the leftover drift
/// and, when `beta > 0`, the Gaussian variance `2 beta`.
pub fn discretize_offspring(mech: &BranchingMechanism, n_scale: usize) -> Result<ParticleRates> {
    if n_scale < 10 {
        return Err(domain(format!("N = {n_scale} is below the minimum of 10")));
    }
    discretize_offspring_unchecked(mech, n_scale)
}

/// Same as [`discretize_offspring`] without the `N >= 10` floor; coarse systems
/// are useful for long-horizon runs where only the front matters.
pub fn discretize_offspring_unchecked(mech: &BranchingMechanism, n_scale: usize) -> Result<ParticleRates> {
    if n_scale == 0 {
        return Err(domain("N must be positive"));
    }
    let nf = n_scale as f64;
    let mut jumps = Vec::new();
    let mut jump_drift = 0.0;
    for &(x, w) in mech.nu().atoms() {
        let extra = (x * nf).round();
        if extra < 1.0 {
            // below resolution: the atom's drift is carried by the binary channel
            continue;
        }
        let rate = w / nf;
        jump_drift += rate * extra;
        jumps.push(JumpChannel {
            jump_size: x,
            rate,
            offspring: 1 + extra as u32,
        });
    }
    let alpha_b = mech.alpha() - jump_drift;
    let (binary_rate, q0, q2) = if mech.beta() > 0.0 {
        let r = 2.0 * mech.beta() * nf;
        let q2 = 0.5 * (1.0 + alpha_b / r);
        let q0 = 1.0 - q2;
        if !(0.0..=1.0).contains(&q2) || !(0.0..=1.0).contains(&q0) {
            return Err(Error::Resolution { n_scale, q0, q2 });
        }
        (r, q0, q2)
    } else if alpha_b > 0.0 {
        (alpha_b, 0.0, 1.0)
    } else if alpha_b < 0.0 {
        (-alpha_b, 1.0, 0.0)
    } else {
        (0.0, 0.5, 0.5)
    };
    Ok(ParticleRates {
        n_scale,
        binary_rate,
        q0,
        q2,
        jumps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{conditioned_mechanism, derive_constants, LevyMeasure};

    #[test]
    fn quadratic_rates() {
        let m = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
        let r = discretize_offspring(&m, 100).unwrap();
        assert_eq!(r.binary_rate, 200.0);
        assert!((r.q2 - 0.5025).abs() < 1e-15);
        assert!((r.q0 - 0.4975).abs() < 1e-15);
        assert!(r.jumps.is_empty());
        assert!((r.drift() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jump_rates() {
        let m = BranchingMechanism::new(1.0, 0.0, LevyMeasure::new(vec![(1.0, 2.0)]).unwrap()).unwrap();
        let r = discretize_offspring(&m, 100).unwrap();
        assert_eq!(r.jumps.len(), 1);
        assert!((r.jumps[0].rate - 0.02).abs() < 1e-15);
        assert_eq!(r.jumps[0].offspring, 101);
        assert_eq!((r.binary_rate, r.q0, r.q2), (1.0, 1.0, 0.0));
        assert!((r.drift() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn drift_identity_with_rounding() {
        let m = BranchingMechanism::new(
            1.3,
            0.6,
            LevyMeasure::new(vec![(0.237, 0.9), (1.71, 0.2)]).unwrap(),
        )
        .unwrap();
        for n in [10, 37, 100, 1000] {
            let r = discretize_offspring(&m, n).unwrap();
            assert!((r.drift() - m.alpha()).abs() < 1e-12);
            assert!((r.q0 + r.q2 - 1.0).abs() < 1e-15);
        }
        let d = derive_constants(&m).unwrap();
        let c = conditioned_mechanism(&m, &d);
        let r = discretize_offspring(&c, 50).unwrap();
        assert!((r.drift() - c.alpha()).abs() < 1e-12);
        assert!(r.q0 > r.q2);
    }

    #[test]
    fn resolution_error() {
        let m = BranchingMechanism::quadratic(50.0, 1.0).unwrap();
        assert!(matches!(discretize_offspring(&m, 10), Err(Error::Resolution { .. })));
        assert!(discretize_offspring(&m, 100).is_ok());
        assert!(discretize_offspring(&m, 5).is_err());
    }

    #[test]
    fn spine_rates_are_size_biased() {
        let m = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
        let r = discretize_offspring(&m, 100).unwrap();
        assert!((r.spine_binary_rate() - 201.0).abs() < 1e-12);
    }
}
