use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Snapshot of a measure on the line as weighted atoms, in the un-drifted frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub t: f64,
    pub atoms: Vec<(f64, f64)>,
}

impl ParticleEnsemble {
    pub fn new(t: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(x, m) in &atoms {
            if !x.is_finite() || !(m > 0.0 && m.is_finite()) {
                return Err(domain(format!("invalid atom ({x}, {m})")));
            }
        }
        Ok(Self { t, atoms })
    }

    pub fn delta(x: f64, mass: f64) -> Result<Self> {
        Self::new(0.0, vec![(x, mass)])
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn min_position(&self) -> Option<f64> {
        self.atoms.iter().map(|a| a.0).reduce(f64::min)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            t: self.t,
            atoms: self.atoms.iter().map(|&(x, m)| (x, c * m)).collect(),
        }
    }
}

/// Exit measure from the space-time domain `{x > -y} x [0, t]`, in the drifted frame.
///
/// `side_atoms` are `(hit time, mass)` pairs on the barrier; `top_atoms` are
/// `(position, mass)` pairs still above `-y` at time `t`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExitEnsemble {
    pub y: f64,
    pub t: f64,
    pub side_atoms: Vec<(f64, f64)>,
    pub top_atoms: Vec<(f64, f64)>,
}

impl ExitEnsemble {
    pub fn side_mass(&self) -> f64 {
        self.side_atoms.iter().map(|a| a.1).sum()
    }

    pub fn top_mass(&self) -> f64 {
        self.top_atoms.iter().map(|a| a.1).sum()
    }

    /// Appends another exit ensemble with the same barrier and horizon.
    pub fn absorb(&mut self, other: ExitEnsemble) {
        self.side_atoms.extend(other.side_atoms);
        self.top_atoms.extend(other.top_atoms);
    }
}
