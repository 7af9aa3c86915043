//! Martingale functionals of ensembles, exit ensembles and skeleton trees.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mechanism::DerivedConstants;
use crate::particle_engine::{ExitEnsemble, ParticleEnsemble, SkeletonTree};

/// `W_t(lambda) = e^{-lambda c_lambda t} sum m e^{-lambda x}` with `c_lambda = alpha/lambda + lambda/2`.
pub fn additive_w(ens: &ParticleEnsemble, derived: &DerivedConstants, lambda: f64, t: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(domain(format!("additive martingale needs lambda > 0, got {lambda}")));
    }
    let alpha = 0.5 * derived.lambda0 * derived.lambda0;
    let speed = alpha / lambda + 0.5 * lambda;
    Ok(ens
        .atoms
        .iter()
        .map(|&(x, m)| m * (-lambda * (x + speed * t)).exp())
        .sum())
}

/// `dW_t = sum m (lambda0 t + x) e^{-lambda0 (lambda0 t + x)}`.
pub fn derivative_w(ens: &ParticleEnsemble, derived: &DerivedConstants, t: f64) -> f64 {
    let l0 = derived.lambda0;
    ens.atoms
        .iter()
        .map(|&(x, m)| {
            let z = l0 * t + x;
            m * z * (-l0 * z).exp()
        })
        .sum()
}

/// Exit functionals `(W^{-y}, V^{-y})` of a drifted-frame exit ensemble. Side
/// atoms contribute nothing to either.
pub fn exit_wv(exit: &ExitEnsemble, derived: &DerivedConstants) -> (f64, f64) {
    let l0 = derived.lambda0;
    let y = exit.y;
    exit.top_atoms
        .iter()
        .filter(|a| a.0 > -y)
        .fold((0.0, 0.0), |(w, v), &(x, m)| {
            let e = m * (-l0 * x).exp();
            (w + e, v + (y + x) * e)
        })
}

/// Branching-random-walk functionals read off a skeleton at an exponential time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrwRecord {
    pub n: usize,
    pub time: f64,
    pub w: f64,
    pub d: f64,
    pub d2: f64,
    pub d_plus: f64,
}

/// Draws `T_n` as partial sums of Exponential(`kappa`) and evaluates the
/// functionals for `n = 0..=n_max`.
pub fn brw_functionals<R: Rng + ?Sized>(
    tree: &SkeletonTree,
    derived: &DerivedConstants,
    kappa: f64,
    n_max: usize,
    rng: &mut R,
) -> Result<Vec<BrwRecord>> {
    if !(kappa > 0.0) {
        return Err(domain(format!("kappa = {kappa} must be positive")));
    }
    let mut times = vec![0.0];
    for _ in 0..n_max {
        let e: f64 = Exp1.sample(rng);
        times.push(times.last().copied().unwrap_or(0.0) + e / kappa);
    }
    brw_functionals_at(tree, derived, &times)
}

/// Functionals at prescribed increasing times.
pub fn brw_functionals_at(tree: &SkeletonTree, derived: &DerivedConstants, times: &[f64]) -> Result<Vec<BrwRecord>> {
    let needed = times.last().copied().unwrap_or(0.0);
    if needed > tree.horizon {
        return Err(Error::HorizonShortfall {
            horizon: tree.horizon,
            needed,
        });
    }
    let l0 = derived.lambda0;
    let mut out: Vec<BrwRecord> = times
        .iter()
        .enumerate()
        .map(|(n, &time)| BrwRecord {
            n,
            time,
            w: 0.0,
            d: 0.0,
            d2: 0.0,
            d_plus: 0.0,
        })
        .collect();
    let mut own = Vec::new();
    let mut idx = Vec::new();
    for i in 0..tree.len() {
        own.clear();
        idx.clear();
        for (k, &t) in times.iter().enumerate() {
            if tree.is_alive(i, t) {
                own.push(t);
                idx.push(k);
            }
        }
        if own.is_empty() {
            continue;
        }
        let xs = tree.positions_at(i, &own)?;
        for (&k, x) in idx.iter().zip(xs) {
            let s = l0 * (x + l0 * times[k]);
            let e = (-s).exp();
            let r = &mut out[k];
            r.w += e;
            r.d += s * e;
            r.d2 += s * s * e;
            r.d_plus += s.max(0.0) * e;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{derive_constants, skeleton_offspring, BranchingMechanism, DEFAULT_K_MAX};
    use crate::particle_engine::simulate_bbm;
    use crate::rng::stream;

    fn quad() -> DerivedConstants {
        derive_constants(&BranchingMechanism::quadratic(1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn additive_examples() {
        let d = quad();
        let one = ParticleEnsemble::new(0.0, vec![(0.0, 1.0)]).unwrap();
        for l in [0.3, 1.0, 2.0] {
            assert!((additive_w(&one, &d, l, 0.0).unwrap() - 1.0).abs() < 1e-15);
        }
        let two = ParticleEnsemble::new(1.0, vec![(0.0, 1.0), (1.0, 1.0)]).unwrap();
        let l0 = 2f64.sqrt();
        let expect = (-2.0f64).exp() * (1.0 + (-l0).exp());
        let w = additive_w(&two, &d, l0, 1.0).unwrap();
        assert!((w - expect).abs() < 1e-15);
        assert!((w - 0.168213).abs() < 1e-4);
        assert_eq!(additive_w(&ParticleEnsemble::default(), &d, 1.0, 3.0).unwrap(), 0.0);
        assert!(additive_w(&one, &d, 0.0, 1.0).is_err());
        assert!(additive_w(&one, &d, -1.0, 1.0).is_err());
    }

    #[test]
    fn derivative_examples() {
        let d = quad();
        let one = ParticleEnsemble::new(0.0, vec![(0.0, 1.0)]).unwrap();
        assert_eq!(derivative_w(&one, &d, 0.0), 0.0);
        let two = ParticleEnsemble::new(0.0, vec![(1.0, 2.0)]).unwrap();
        let v = derivative_w(&two, &d, 0.0);
        assert!((v - 2.0 * (-(2f64.sqrt())).exp()).abs() < 1e-15);
        assert!((v - 0.486633).abs() < 1e-3);
        let at_front = ParticleEnsemble::new(2.0, vec![(-2.0 * 2f64.sqrt(), 1.0)]).unwrap();
        assert!(derivative_w(&at_front, &d, 2.0).abs() < 1e-15);
    }

    #[test]
    fn exit_examples() {
        let d = quad();
        let none = ExitEnsemble {
            y: 1.0,
            t: 1.0,
            side_atoms: vec![(0.5, 1.0)],
            top_atoms: vec![],
        };
        assert_eq!(exit_wv(&none, &d), (0.0, 0.0));
        let one = ExitEnsemble {
            y: 1.0,
            t: 1.0,
            side_atoms: vec![],
            top_atoms: vec![(0.0, 1.0)],
        };
        assert_eq!(exit_wv(&one, &d), (1.0, 1.0));
    }

    #[test]
    fn brw_at_time_zero() {
        let d = quad();
        let law = skeleton_offspring(&BranchingMechanism::quadratic(1.0, 1.0).unwrap(), &d, DEFAULT_K_MAX).unwrap();
        let mut rng = stream(31, 0);
        let tree = simulate_bbm(d.skeleton_rate(), &law, 0.0, &[0.0], 2.0, 100_000, &mut rng).unwrap();
        let r = brw_functionals_at(&tree, &d, &[0.0]).unwrap();
        assert_eq!(r[0].w, 1.0);
        assert_eq!(r[0].d, 0.0);
        assert!(matches!(
            brw_functionals_at(&tree, &d, &[0.0, 3.0]),
            Err(Error::HorizonShortfall { .. })
        ));
    }
}
