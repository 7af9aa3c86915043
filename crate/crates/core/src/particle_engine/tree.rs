use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{domain, Error, Result};
use crate::mechanism::OffspringLaw;
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub parent: Option<usize>,
    /// Position among its siblings (or among the roots).
    pub rank: u32,
    pub birth: f64,
    /// Death time, or the horizon for nodes alive at the end.
    pub death: f64,
    pub censored: bool,
    pub x_birth: f64,
    pub x_death: f64,
    pub offspring: u32,
    pub first_child: usize,
    seed: u64,
}

/// Branching Brownian motion sampled at branch events only; positions at
/// intermediate times come from Brownian bridges seeded per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTree {
    pub nodes: Vec<TreeNode>,
    pub horizon: f64,
    pub drift: f64,
    pub roots: usize,
}

impl SkeletonTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Ulam-Harris label: root rank followed by child ranks.
    pub fn label(&self, mut i: usize) -> Vec<u32> {
        let mut out = Vec::new();
        loop {
            let n = &self.nodes[i];
            out.push(n.rank);
            match n.parent {
                Some(p) => i = p,
                None => break,
            }
        }
        out.reverse();
        out
    }

    pub fn children(&self, i: usize) -> std::ops::Range<usize> {
        let n = &self.nodes[i];
        n.first_child..n.first_child + n.offspring as usize
    }

    pub fn is_alive(&self, i: usize, t: f64) -> bool {
        let n = &self.nodes[i];
        n.birth <= t && (t < n.death || (n.censored && t <= n.death))
    }

    pub fn alive_at(&self, t: f64) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.is_alive(i, t)).collect()
    }

    /// Positions of node `i` at the given non-decreasing times inside its
    /// lifetime. Repeated calls with the same times give the same values.
    pub fn positions_at(&self, i: usize, times: &[f64]) -> Result<Vec<f64>> {
        let n = &self.nodes[i];
        let mut rng = StreamRng::seed_from_u64(n.seed);
        let (mut s, mut x) = (n.birth, n.x_birth);
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            if t < s || t > n.death {
                return Err(domain(format!("time {t} outside the lifetime [{}, {}] of node {i}", n.birth, n.death)));
            }
            if t == n.death {
                x = n.x_death;
            } else if t > s {
                let span = n.death - s;
                let w = (t - s) / span;
                let mean = x + w * (n.x_death - x);
                let sd = ((t - s) * (n.death - t) / span).sqrt();
                let g: f64 = StandardNormal.sample(&mut rng);
                x = mean + sd * g;
            }
            s = t;
            out.push(x);
        }
        Ok(out)
    }

    pub fn position_at(&self, i: usize, t: f64) -> Result<f64> {
        Ok(self.positions_at(i, &[t])?[0])
    }
}

/// Exact branching Brownian motion up to `horizon`.
pub fn simulate_bbm<R: Rng + ?Sized>(
    rate: f64,
    offspring: &OffspringLaw,
    drift: f64,
    init: &[f64],
    horizon: f64,
    cap: usize,
    rng: &mut R,
) -> Result<SkeletonTree> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(domain(format!("branching rate {rate} must be positive")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(domain(format!("horizon {horizon} must be finite and non-negative")));
    }
    let growth = rate * (offspring.mean() - 1.0) * horizon;
    let expected = init.len() as f64 * growth.exp();
    if expected > cap as f64 {
        return Err(Error::Explosion {
            detail: format!("expected population {expected:.3e} at t = {horizon} exceeds the cap of {cap}"),
        });
    }
    let mut nodes: Vec<TreeNode> = init
        .iter()
        .enumerate()
        .map(|(k, &x)| TreeNode {
            parent: None,
            rank: k as u32,
            birth: 0.0,
            death: 0.0,
            censored: false,
            x_birth: x,
            x_death: x,
            offspring: 0,
            first_child: 0,
            seed: 0,
        })
        .collect();
    let node_cap = cap.saturating_mul(4).max(1024);
    let mut i = 0;
    while i < nodes.len() {
        let life: f64 = Exp1.sample(rng);
        let life = life / rate;
        let birth = nodes[i].birth;
        let end = (birth + life).min(horizon);
        let g: f64 = StandardNormal.sample(rng);
        let span = end - birth;
        let x_end = nodes[i].x_birth + drift * span + span.sqrt() * g;
        let seed = rng.random();
        let censored = birth + life >= horizon;
        let count = if censored { 0 } else { offspring.sample(rng) };
        let first_child = nodes.len();
        {
            let n = &mut nodes[i];
            n.death = end;
            n.censored = censored;
            n.x_death = x_end;
            n.offspring = count;
            n.first_child = first_child;
            n.seed = seed;
        }
        for k in 0..count {
            nodes.push(TreeNode {
                parent: Some(i),
                rank: k,
                birth: end,
                death: end,
                censored: false,
                x_birth: x_end,
                x_death: x_end,
                offspring: 0,
                first_child: 0,
                seed: 0,
            });
        }
        if nodes.len() > node_cap {
            return Err(Error::Explosion {
                detail: format!("more than {node_cap} tree nodes before t = {horizon}"),
            });
        }
        i += 1;
    }
    Ok(SkeletonTree {
        nodes,
        horizon,
        drift,
        roots: init.len(),
    })
}

/// Leftmost position of the alive population at time `t`.
pub fn minimum_position(tree: &SkeletonTree, t: f64) -> Result<f64> {
    if t > tree.horizon {
        return Err(domain(format!("t = {t} beyond the tree horizon {}", tree.horizon)));
    }
    let mut best: Option<f64> = None;
    for i in tree.alive_at(t) {
        let x = tree.position_at(i, t)?;
        best = Some(best.map_or(x, |b| b.min(x)));
    }
    best.ok_or(Error::Extinct(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn yule_mean() {
        let law = OffspringLaw::fixed(2);
        let reps = 4000;
        let (mut s, mut s2) = (0.0, 0.0);
        for r in 0..reps {
            let mut rng = stream(21, r);
            let tree = simulate_bbm(1.0, &law, 0.0, &[0.0], 3.0, 1_000_000, &mut rng).unwrap();
            let n = tree.alive_at(3.0).len() as f64;
            s += n;
            s2 += n * n;
        }
        let mean = s / reps as f64;
        let se = ((s2 / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!((mean - 3f64.exp()).abs() < 4.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn structure_invariants() {
        let mut rng = stream(22, 0);
        let law = OffspringLaw::fixed(3);
        let tree = simulate_bbm(1.5, &law, 0.3, &[0.0, 1.0], 2.0, 1_000_000, &mut rng).unwrap();
        assert_eq!(tree.roots, 2);
        for (i, n) in tree.nodes.iter().enumerate() {
            assert!(n.birth <= n.death);
            if !n.censored {
                assert_eq!(n.offspring, 3);
            }
            for c in tree.children(i) {
                let child = &tree.nodes[c];
                assert_eq!(child.parent, Some(i));
                assert_eq!(child.birth, n.death);
                assert_eq!(child.x_birth, n.x_death);
                assert_eq!(tree.label(c).len(), tree.label(i).len() + 1);
            }
        }
        let a = tree.positions_at(0, &[tree.nodes[0].death * 0.5]).unwrap();
        let b = tree.positions_at(0, &[tree.nodes[0].death * 0.5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lineage_marginal_has_drift() {
        // rate small enough that most lineages do not branch before t = 1
        let law = OffspringLaw::fixed(2);
        let reps = 20_000;
        let (mut s, mut s2, mut n) = (0.0, 0.0, 0);
        for r in 0..reps {
            let mut rng = stream(23, r);
            let tree = simulate_bbm(1e-3, &law, 0.5, &[0.0], 1.0, 1000, &mut rng).unwrap();
            if tree.len() == 1 {
                let x = tree.position_at(0, 1.0).unwrap();
                s += x;
                s2 += x * x;
                n += 1;
            }
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn bridge_interpolation_variance() {
        let law = OffspringLaw::fixed(2);
        let reps = 20_000;
        let mut s2 = 0.0;
        let mut n = 0;
        for r in 0..reps {
            let mut rng = stream(24, r);
            let tree = simulate_bbm(1e-3, &law, 0.0, &[0.0], 1.0, 1000, &mut rng).unwrap();
            if tree.len() == 1 {
                let x = tree.position_at(0, 0.25).unwrap();
                s2 += x * x;
                n += 1;
            }
        }
        assert!((s2 / n as f64 - 0.25).abs() < 0.02);
    }

    #[test]
    fn minimum_is_below_every_lineage() {
        let mut rng = stream(25, 0);
        let tree = simulate_bbm(1.0, &OffspringLaw::fixed(2), 0.0, &[0.0], 4.0, 1_000_000, &mut rng).unwrap();
        let m = minimum_position(&tree, 4.0).unwrap();
        for i in tree.alive_at(4.0) {
            assert!(tree.position_at(i, 4.0).unwrap() >= m);
        }
        assert!(minimum_position(&tree, 5.0).is_err());
        let empty = simulate_bbm(1.0, &OffspringLaw::fixed(2), 0.0, &[], 1.0, 10, &mut rng).unwrap();
        assert!(matches!(minimum_position(&empty, 0.5), Err(Error::Extinct(_))));
    }

    #[test]
    fn explosion_guard() {
        let mut rng = stream(26, 0);
        let r = simulate_bbm(1.0, &OffspringLaw::fixed(2), 0.0, &[0.0], 30.0, 1000, &mut rng);
        assert!(matches!(r, Err(Error::Explosion { .. })));
    }
}
