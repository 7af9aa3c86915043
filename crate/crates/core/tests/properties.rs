use proptest::prelude::*;

use sbm_lab::martingales::{additive_w, derivative_w};
use sbm_lab::mechanism::{
    conditioned_mechanism, derive_constants, skeleton_offspring, BranchingMechanism, LevyMeasure,
};
use sbm_lab::particle_engine::ParticleEnsemble;

fn mechanism() -> impl Strategy<Value = BranchingMechanism> {
    (
        0.1f64..3.0,
        0.05f64..2.0,
        prop::collection::vec((0.05f64..2.0, 0.05f64..2.0), 0..4),
    )
        .prop_map(|(alpha, beta, atoms)| {
            BranchingMechanism::new(alpha, beta, LevyMeasure::new(atoms).unwrap()).unwrap()
        })
}

fn ensemble() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-5.0f64..5.0, 0.01f64..2.0), 1..20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda0_identity(mech in mechanism()) {
        let d = derive_constants(&mech).unwrap();
        let m = skeleton_offspring(&mech, &d, 1024).unwrap().mean();
        let lhs = d.lambda0 * d.lambda0;
        prop_assert!((lhs - 2.0 * d.psi_prime_star * (m - 1.0)).abs() < 1e-9 * lhs);
        prop_assert!(mech.psi(d.lambda_star).0.abs() < 1e-9 * (1.0 + d.lambda_star));
    }

    #[test]
    fn psi_is_convex(mech in mechanism(), a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let mid = mech.psi(0.5 * (a + b)).0;
        let chord = 0.5 * (mech.psi(a).0 + mech.psi(b).0);
        prop_assert!(mid <= chord + 1e-12 * (1.0 + chord.abs()));
    }

    #[test]
    fn conditioned_mechanism_is_a_shift(mech in mechanism(), l in 0.0f64..10.0) {
        let d = derive_constants(&mech).unwrap();
        let star = conditioned_mechanism(&mech, &d);
        let (v, dv) = star.psi(l);
        let (w, dw) = mech.psi(l + d.lambda_star);
        prop_assert!((v - w).abs() < 1e-9 * (1.0 + w.abs()));
        prop_assert!((dv - dw).abs() < 1e-9 * (1.0 + dw.abs()));
    }

    #[test]
    fn functionals_are_linear(a in ensemble(), b in ensemble(), c in 0.1f64..5.0, t in 0.0f64..5.0) {
        let d = derive_constants(&BranchingMechanism::quadratic(1.0, 1.0).unwrap()).unwrap();
        let ea = ParticleEnsemble::new(t, a.clone()).unwrap();
        let eb = ParticleEnsemble::new(t, b.clone()).unwrap();
        let joined = ParticleEnsemble::new(t, a.into_iter().chain(b).collect()).unwrap();
        for lambda in [0.5 * d.lambda0, d.lambda0] {
            let sum = additive_w(&ea, &d, lambda, t).unwrap() + additive_w(&eb, &d, lambda, t).unwrap();
            let both = additive_w(&joined, &d, lambda, t).unwrap();
            prop_assert!((sum - both).abs() <= 1e-12 * both.abs().max(1e-300));
            let scaled = additive_w(&ea.scaled(c), &d, lambda, t).unwrap();
            prop_assert!((scaled - c * additive_w(&ea, &d, lambda, t).unwrap()).abs() <= 1e-12 * scaled.abs());
        }
        let sum = derivative_w(&ea, &d, t) + derivative_w(&eb, &d, t);
        let both = derivative_w(&joined, &d, t);
        prop_assert!((sum - both).abs() <= 1e-10 * (1.0 + both.abs()));
    }

    #[test]
    fn drifted_frame_identity(a in ensemble(), t in 0.0f64..5.0, lambda in 0.2f64..3.0) {
        let d = derive_constants(&BranchingMechanism::quadratic(1.0, 1.0).unwrap()).unwrap();
        let speed = 1.0 / lambda + 0.5 * lambda;
        let ens = ParticleEnsemble::new(t, a.clone()).unwrap();
        let shifted = ParticleEnsemble::new(0.0, a.iter().map(|&(x, m)| (x + speed * t, m)).collect()).unwrap();
        let w = additive_w(&ens, &d, lambda, t).unwrap();
        let w0 = additive_w(&shifted, &d, lambda, 0.0).unwrap();
        prop_assert!((w - w0).abs() <= 1e-9 * w.abs().max(1e-300));
        let l0 = d.lambda0;
        let front = ParticleEnsemble::new(0.0, a.iter().map(|&(x, m)| (x + l0 * t, m)).collect()).unwrap();
        prop_assert!((derivative_w(&ens, &d, t) - derivative_w(&front, &d, 0.0)).abs() < 1e-9);
    }
}
