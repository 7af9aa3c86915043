//! Branching mechanisms with finite atomic Lévy measure and every constant the
//! decompositions derive from them.
//!
//! The mechanism is
//! `psi(l) = -alpha*l + beta*l^2 + sum_i w_i (exp(-l x_i) - 1 + l x_i)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Upper limit of the geometric bracket search for the largest root.
pub const ROOT_BRACKET_CAP: f64 = 1_152_921_504_606_846_976.0; // 2^60
pub const ROOT_REL_TOL: f64 = 1e-12;
pub const DEFAULT_K_MAX: u32 = 64;
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// `nu = sum_i w_i delta_{x_i}` with strictly increasing jump sizes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LevyMeasure {
    atoms: Vec<(f64, f64)>,
}

impl LevyMeasure {
    pub fn empty() -> Self {
        Self { atoms: Vec::new() }
    }

    /// Atoms may be given in any order; equal jump sizes are merged.
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(x, w) in &atoms {
            if !(x.is_finite() && x > 0.0) {
                return Err(domain(format!("Lévy atom position {x} must be positive and finite")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(domain(format!("Lévy atom weight {w} must be positive and finite")));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        let m = Self { atoms: merged };
        debug_assert!(m.small_jump_integral().is_finite());
        Ok(m)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `int (x ∧ x^2) nu(dx)`.
    pub fn small_jump_integral(&self) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * x.min(x * x)).sum()
    }

    /// `int x nu(dx)`.
    pub fn first_moment(&self) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * x).sum()
    }

    /// The tilted measure `exp(-theta x) nu(dx)`.
    pub fn tilted(&self, theta: f64) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|&(x, w)| (x, w * (-theta * x).exp()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Supercritical,
    /// Produced only by [`conditioned_mechanism`]; accepted by the immigration
    /// simulators but not by [`derive_constants`].
    Subcritical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingMechanism {
    alpha: f64,
    beta: f64,
    nu: LevyMeasure,
    regime: Regime,
}

impl BranchingMechanism {
    pub fn new(alpha: f64, beta: f64, nu: LevyMeasure) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(domain(format!("alpha = {alpha} must be positive (supercritical)")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(domain(format!("beta = {beta} must be nonnegative")));
        }
        if beta == 0.0 && nu.is_empty() {
            return Err(domain("beta = 0 with empty Lévy measure gives a linear psi"));
        }
        Ok(Self {
            alpha,
            beta,
            nu,
            regime: Regime::Supercritical,
        })
    }

    pub fn quadratic(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, LevyMeasure::empty())
    }

    /// Signed `-psi'(0+)`; negative only for conditioned mechanisms.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn nu(&self) -> &LevyMeasure {
        &self.nu
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// `(psi(l), psi'(l))` without input validation.
    pub fn psi(&self, lambda: f64) -> (f64, f64) {
        let mut value = -self.alpha * lambda + self.beta * lambda * lambda;
        let mut deriv = -self.alpha + 2.0 * self.beta * lambda;
        for &(x, w) in self.nu.atoms() {
            let z = lambda * x;
            // exp(-z) - 1 + z, accurate for small z
            value += w * ((-z).exp_m1() + z);
            deriv += w * x * (-(-z).exp_m1());
        }
        (value, deriv)
    }

    /// `int_0^xi psi(u) du` in closed form.
    pub fn psi_integral(&self, xi: f64) -> f64 {
        let mut v = -0.5 * self.alpha * xi * xi + self.beta * xi * xi * xi / 3.0;
        for &(x, w) in self.nu.atoms() {
            let z = xi * x;
            // (1 - e^{-z})/x - xi + x xi^2 / 2
            v += w * ((-(-z).exp_m1()) / x - xi + 0.5 * x * xi * xi);
        }
        v
    }
}

pub fn eval_psi(mech: &BranchingMechanism, lambda: f64) -> Result<(f64, f64)> {
    if !lambda.is_finite() {
        return Err(domain(format!("psi evaluated at non-finite lambda {lambda}")));
    }
    if lambda < 0.0 {
        return Err(domain(format!("psi evaluated at negative lambda {lambda}")));
    }
    Ok(mech.psi(lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub lambda_star: f64,
    pub lambda0: f64,
    pub psi_prime_star: f64,
    pub m_mean: f64,
    pub extinction_prob: f64,
}

impl DerivedConstants {
    /// Skeleton branching rate `psi'(lambda*)`.
    pub fn skeleton_rate(&self) -> f64 {
        self.psi_prime_star
    }
}

pub fn derive_constants(mech: &BranchingMechanism) -> Result<DerivedConstants> {
    if mech.regime != Regime::Supercritical {
        return Err(domain("constants are only defined for supercritical mechanisms"));
    }
    let mut hi = 1.0_f64;
    while mech.psi(hi).0 <= 0.0 {
        hi *= 2.0;
        if hi > ROOT_BRACKET_CAP {
            return Err(Error::NoFiniteRoot {
                bound: ROOT_BRACKET_CAP,
            });
        }
    }
    // psi is convex with psi(0) = 0 and psi'(0) < 0: nonpositive on [0, lambda*].
    let mut lo = 0.0_f64;
    while hi - lo > ROOT_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if mech.psi(mid).0 > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda_star = 0.5 * (lo + hi);
    let psi_prime_star = mech.psi(lambda_star).1;
    if psi_prime_star <= 0.0 {
        return Err(domain("psi'(lambda*) is not positive"));
    }
    Ok(DerivedConstants {
        lambda_star,
        lambda0: (2.0 * mech.alpha).sqrt(),
        psi_prime_star,
        m_mean: 1.0 + mech.alpha / psi_prime_star,
        extinction_prob: (-lambda_star).exp(),
    })
}

/// Truncated skeleton offspring law; `p_0 = p_1 = 0` are implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringLaw {
    pub pmf: Vec<(u32, f64)>,
    pub truncation_index: u32,
    pub tail_mass: f64,
    /// Set when the tail exceeded the tolerance and truncation was allowed anyway.
    pub truncated_warning: bool,
}

impl OffspringLaw {
    /// Degenerate law putting all mass on `n`.
    pub fn fixed(n: u32) -> Self {
        assert!(n >= 2, "skeleton offspring counts are at least 2");
        Self {
            pmf: vec![(n, 1.0)],
            truncation_index: n,
            tail_mass: 0.0,
            truncated_warning: false,
        }
    }

    pub fn prob(&self, n: u32) -> f64 {
        self.pmf
            .iter()
            .find(|&&(k, _)| k == n)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn mean(&self) -> f64 {
        let s: f64 = self.pmf.iter().map(|&(_, p)| p).sum();
        self.pmf.iter().map(|&(n, p)| n as f64 * p).sum::<f64>() / s
    }

    /// `sum_n p_n s^n` over the retained support.
    pub fn series(&self, s: f64) -> f64 {
        self.pmf.iter().map(|&(n, p)| p * s.powi(n as i32)).sum()
    }

    /// Samples from the retained support, renormalised over the truncation.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let total: f64 = self.pmf.iter().map(|&(_, p)| p).sum();
        let mut u = rng.random::<f64>() * total;
        for &(n, p) in &self.pmf {
            if u < p {
                return n;
            }
            u -= p;
        }
        self.pmf.last().map_or(2, |&(n, _)| n)
    }
}

/// Generating function of the skeleton offspring law, straight from `psi`.
pub fn offspring_generating_fn(mech: &BranchingMechanism, derived: &DerivedConstants, s: f64) -> f64 {
    let ls = derived.lambda_star;
    mech.psi(ls * (1.0 - s)).0 / (ls * derived.psi_prime_star) + s
}

fn ln_factorial(n: u32) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

/// Unnormalised branch-point weights: index 0 is the beta-atom at mass zero (only
/// for `n = 2`), index `i + 1` belongs to Lévy atom `i`.
fn branch_weights(mech: &BranchingMechanism, derived: &DerivedConstants, n: u32) -> Vec<f64> {
    let ls = derived.lambda_star;
    let mut weights = Vec::with_capacity(mech.nu.atoms().len() + 1);
    weights.push(if n == 2 { mech.beta * ls * ls } else { 0.0 });
    for &(x, w) in mech.nu.atoms() {
        let log_term = n as f64 * (ls * x).ln() - ls * x - ln_factorial(n);
        weights.push(w * log_term.exp());
    }
    weights
}

pub fn skeleton_offspring(
    mech: &BranchingMechanism,
    derived: &DerivedConstants,
    k_max: u32,
) -> Result<OffspringLaw> {
    skeleton_offspring_with(mech, derived, k_max, DEFAULT_TAIL_TOL, false)
}

pub fn skeleton_offspring_with(
    mech: &BranchingMechanism,
    derived: &DerivedConstants,
    k_max: u32,
    tail_tolerance: f64,
    allow_truncation: bool,
) -> Result<OffspringLaw> {
    if k_max < 2 {
        return Err(domain("offspring truncation index must be at least 2"));
    }
    let norm = derived.lambda_star * derived.psi_prime_star;
    let mut pmf = Vec::new();
    for n in 2..=k_max {
        let p: f64 = branch_weights(mech, derived, n).iter().sum::<f64>() / norm;
        if p > 0.0 {
            pmf.push((n, p));
        }
    }
    let tail_mass = (1.0 - pmf.iter().map(|&(_, p)| p).sum::<f64>()).max(0.0);
    let over = tail_mass > tail_tolerance;
    if over && !allow_truncation {
        return Err(Error::Truncation {
            k_max,
            tail_mass,
            tolerance: tail_tolerance,
        });
    }
    Ok(OffspringLaw {
        pmf,
        truncation_index: k_max,
        tail_mass,
        truncated_warning: over,
    })
}

/// Draws the initial mass `Y ~ pi_n` of the branch-point immigrant for a skeleton
/// node with `n` children.
pub fn sample_branch_mass<R: Rng + ?Sized>(
    mech: &BranchingMechanism,
    derived: &DerivedConstants,
    n: u32,
    rng: &mut R,
) -> Result<f64> {
    if n < 2 {
        return Err(domain(format!("branch mass law undefined for n = {n}")));
    }
    let weights = branch_weights(mech, derived, n);
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(domain(format!("p_{n} = 0; no branch mass law")));
    }
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return Ok(if i == 0 { 0.0 } else { mech.nu.atoms()[i - 1].0 });
        }
        u -= w;
    }
    let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    Ok(if last == 0 { 0.0 } else { mech.nu.atoms()[last - 1].0 })
}

/// Probability that `sample_branch_mass(n)` returns zero.
pub fn branch_mass_zero_prob(mech: &BranchingMechanism, derived: &DerivedConstants, n: u32) -> f64 {
    let w = branch_weights(mech, derived, n);
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w[0] / total
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailGrowth {
    /// `psi` grows quadratically (beta > 0): integrand decays like `xi^{-3/2}`.
    Quadratic,
    /// `psi` grows linearly (beta = 0, atomic nu): integrand decays like `1/xi`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition1: bool,
    /// Quadrature of `1/sqrt(int_{lambda*}^xi psi)` over `[lambda* + eps, 10 lambda*]`.
    pub condition1_partial_integral: f64,
    pub condition1_tail: TailGrowth,
    /// Analytic bound on the tail beyond `10 lambda*` (infinite when divergent).
    pub condition1_tail_bound: f64,
    pub condition2: bool,
    /// `sum_{x_i >= 1} w_i x_i (log x_i)^2`.
    pub condition2_sum: f64,
}

pub fn check_conditions(mech: &BranchingMechanism, derived: &DerivedConstants) -> ConditionReport {
    let ls = derived.lambda_star;
    let base = mech.psi_integral(ls);
    let integrand = |xi: f64| {
        let inner = mech.psi_integral(xi) - base;
        if inner > 0.0 {
            inner.sqrt().recip()
        } else {
            0.0
        }
    };
    let upper = 10.0 * ls;
    let lower = ls * 1.01;
    let partial = adaptive_simpson(&integrand, lower, upper, 1e-10, 40);

    let (tail, tail_bound) = if mech.beta() > 0.0 {
        // int_{lambda*}^xi psi >= beta/3 (xi^3 - c) eventually; bound by comparing
        // with the pure cubic beyond the split point.
        let xi0 = upper;
        let inner0 = mech.psi_integral(xi0) - base;
        let c = (inner0 / (xi0 * xi0 * xi0)).min(mech.beta() / 3.0);
        (TailGrowth::Quadratic, 2.0 / (c.sqrt() * xi0.sqrt()))
    } else {
        (TailGrowth::Linear, f64::INFINITY)
    };
    let condition2_sum = mech
        .nu()
        .atoms()
        .iter()
        .filter(|&&(x, _)| x >= 1.0)
        .map(|&(x, w)| w * x * x.ln().powi(2))
        .sum::<f64>();
    ConditionReport {
        condition1: tail == TailGrowth::Quadratic,
        condition1_partial_integral: partial,
        condition1_tail: tail,
        condition1_tail_bound: tail_bound,
        condition2: condition2_sum.is_finite(),
        condition2_sum,
    }
}

pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// The mechanism `psi*(l) = psi(l + lambda*)` of the process conditioned on
/// extinction. Its `alpha` is `-psi'(lambda*) < 0`.
pub fn conditioned_mechanism(mech: &BranchingMechanism, derived: &DerivedConstants) -> BranchingMechanism {
    BranchingMechanism {
        alpha: -derived.psi_prime_star,
        beta: mech.beta,
        nu: mech.nu.tilted(derived.lambda_star),
        regime: Regime::Subcritical,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn jump_mech() -> BranchingMechanism {
        BranchingMechanism::new(1.0, 0.0, LevyMeasure::new(vec![(1.0, 2.0)]).unwrap()).unwrap()
    }

    /// Plain bisection on `l - 2 + 2 e^{-l}`, independent of `derive_constants`.
    fn jump_root_oracle() -> f64 {
        let g = |l: f64| l - 2.0 + 2.0 * (-l).exp();
        let (mut lo, mut hi) = (1.0, 2.0);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if g(m) > 0.0 {
                hi = m
            } else {
                lo = m
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn psi_examples() {
        let q = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
        let (v, d) = eval_psi(&q, 1.0).unwrap();
        assert!(v.abs() < 1e-15 && (d - 1.0).abs() < 1e-15);

        let j = jump_mech();
        let (v, d) = eval_psi(&j, 0.0).unwrap();
        assert_eq!((v, d), (0.0, -1.0));
        let (v, d) = eval_psi(&j, 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert!((v - (1.0 - 2.0 + 2.0 * e)).abs() < 1e-14);
        assert!((d - (1.0 - 2.0 * e)).abs() < 1e-14);
        assert!((v + 0.264241).abs() < 1e-6 && (d - 0.264241).abs() < 1e-6);

        assert!(eval_psi(&q, f64::NAN).is_err());
        assert!(eval_psi(&q, f64::INFINITY).is_err());
    }

    #[test]
    fn constants_quadratic_and_jump() {
        let q = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
        let d = derive_constants(&q).unwrap();
        assert!((d.lambda_star - 1.0).abs() < 1e-11);
        assert!((d.lambda0 - 2f64.sqrt()).abs() < 1e-15);
        assert!((d.psi_prime_star - 1.0).abs() < 1e-11);
        assert!((d.m_mean - 2.0).abs() < 1e-11);
        assert!((d.extinction_prob - 0.367879).abs() < 1e-6);

        for &(a, b) in &[(0.3, 2.0), (5.0, 0.25), (1.0, 7.0)] {
            let d = derive_constants(&BranchingMechanism::quadratic(a, b).unwrap()).unwrap();
            assert!((d.lambda_star - a / b).abs() < 1e-11 * (a / b));
        }

        let j = jump_mech();
        let d = derive_constants(&j).unwrap();
        let root = jump_root_oracle();
        assert!((d.lambda_star - root).abs() < 1e-11);
        assert!((d.lambda_star - 1.5936).abs() < 1e-4);
        assert!((d.psi_prime_star - (1.0 - 2.0 * (-root).exp())).abs() < 1e-10);
        assert!((d.psi_prime_star - 0.59365).abs() < 1e-4);
        assert!((d.m_mean - 2.6845).abs() < 1e-4);
    }

    #[test]
    fn constants_reject_linear_and_subcritical() {
        assert!(BranchingMechanism::new(1.0, 0.0, LevyMeasure::empty()).is_err());
        assert!(BranchingMechanism::new(-1.0, 1.0, LevyMeasure::empty()).is_err());
        // psi'(inf) = -alpha + sum w x <= 0: no positive root.
        let flat = BranchingMechanism::new(3.0, 0.0, LevyMeasure::new(vec![(1.0, 1.0)]).unwrap()).unwrap();
        assert!(matches!(derive_constants(&flat), Err(Error::NoFiniteRoot { .. })));
        let q = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
        let c = conditioned_mechanism(&q, &derive_constants(&q).unwrap());
        assert!(derive_constants(&c).is_err());
    }

    #[test]
    fn offspring_quadratic_is_binary() {
        let q = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
        let d = derive_constants(&q).unwrap();
        let law = skeleton_offspring(&q, &d, DEFAULT_K_MAX).unwrap();
        assert_eq!(law.pmf.len(), 1);
        assert_eq!(law.pmf[0].0, 2);
        assert!((law.pmf[0].1 - 1.0).abs() < 1e-11);
        for s in [0.0, 0.3, 0.9, 1.0] {
            assert!((offspring_generating_fn(&q, &d, s) - s * s).abs() < 1e-10);
        }
    }

    #[test]
    fn offspring_jump_mechanism() {
        let j = jump_mech();
        let d = derive_constants(&j).unwrap();
        let law = skeleton_offspring(&j, &d, DEFAULT_K_MAX).unwrap();
        let ls = d.lambda_star;
        // p_2 = ls^2 * 2 e^{-ls} / 2 / (ls psi'(ls))
        let p2 = ls * ls * (-ls).exp() / (ls * d.psi_prime_star);
        assert!((law.prob(2) - p2).abs() < 1e-12);
        assert!((law.prob(2) - 0.54544).abs() < 1e-4);
        let closed = 2.0 * (1.0 - (-ls).exp() - ls * (-ls).exp()) / (ls * d.psi_prime_star);
        let total: f64 = law.pmf.iter().map(|&(_, p)| p).sum();
        assert!((total - closed).abs() < 1e-12);
        assert!((total - 1.0).abs() < 1e-9);
        assert!(law.tail_mass < 1e-12);
        assert!((law.mean() - d.m_mean).abs() < 1e-9);
    }

    #[test]
    fn offspring_truncation_error() {
        let big = BranchingMechanism::new(1.0, 0.0, LevyMeasure::new(vec![(1.0, 1.05)]).unwrap()).unwrap();
        let d = derive_constants(&big).unwrap();
        assert!(matches!(skeleton_offspring(&big, &d, 8), Err(Error::Truncation { .. })));
        let law = skeleton_offspring_with(&big, &d, 8, 1e-12, true).unwrap();
        assert!(law.truncated_warning);
        assert!(skeleton_offspring(&big, &d, 1).is_err());
    }

    #[test]
    fn generating_fn_matches_series() {
        let mech = BranchingMechanism::new(
            0.7,
            0.4,
            LevyMeasure::new(vec![(0.5, 1.0), (2.0, 0.3)]).unwrap(),
        )
        .unwrap();
        let d = derive_constants(&mech).unwrap();
        let law = skeleton_offspring(&mech, &d, DEFAULT_K_MAX).unwrap();
        assert!(offspring_generating_fn(&mech, &d, 0.0).abs() < 1e-10);
        assert!((offspring_generating_fn(&mech, &d, 1.0) - 1.0).abs() < 1e-10);
        for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let f = offspring_generating_fn(&mech, &d, s);
            assert!((f - law.series(s)).abs() <= law.tail_mass + 1e-9, "s = {s}");
        }
    }

    #[test]
    fn offspring_sample_mean() {
        let mech = BranchingMechanism::new(1.0, 0.5, LevyMeasure::new(vec![(1.5, 1.0)]).unwrap()).unwrap();
        let d = derive_constants(&mech).unwrap();
        let law = skeleton_offspring(&mech, &d, DEFAULT_K_MAX).unwrap();
        let mut rng = stream(11, 0);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let k = law.sample(&mut rng) as f64;
            s += k;
            s2 += k * k;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - d.m_mean).abs() < 4.0 * se, "{mean} vs {}", d.m_mean);
    }

    #[test]
    fn branch_mass_examples() {
        let q = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
        let dq = derive_constants(&q).unwrap();
        let mut rng = stream(3, 0);
        for _ in 0..100 {
            assert_eq!(sample_branch_mass(&q, &dq, 2, &mut rng).unwrap(), 0.0);
        }
        assert!(sample_branch_mass(&q, &dq, 3, &mut rng).is_err());

        let j = jump_mech();
        let dj = derive_constants(&j).unwrap();
        for n in [2, 3, 7] {
            assert_eq!(sample_branch_mass(&j, &dj, n, &mut rng).unwrap(), 1.0);
        }

        let mixed = BranchingMechanism::new(1.0, 1.0, LevyMeasure::new(vec![(1.0, 2.0)]).unwrap()).unwrap();
        let dm = derive_constants(&mixed).unwrap();
        let ls = dm.lambda_star;
        // beta ls^2 against ls^2 * w x^2 e^{-ls x} / 2!
        let zero_w = ls * ls;
        let atom_w = ls * ls * 2.0 * (-ls).exp() / 2.0;
        let p0 = zero_w / (zero_w + atom_w);
        assert!((branch_mass_zero_prob(&mixed, &dm, 2) - p0).abs() < 1e-12);
        let n = 200_000;
        let zeros = (0..n)
            .filter(|_| sample_branch_mass(&mixed, &dm, 2, &mut rng).unwrap() == 0.0)
            .count() as f64;
        let se = (p0 * (1.0 - p0) / n as f64).sqrt();
        assert!((zeros / n as f64 - p0).abs() < 4.0 * se);
    }

    #[test]
    fn conditions() {
        let q = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
        let r = check_conditions(&q, &derive_constants(&q).unwrap());
        assert!(r.condition1);
        assert!(r.condition1_partial_integral.is_finite() && r.condition1_tail_bound.is_finite());
        assert!(r.condition2 && r.condition2_sum == 0.0);

        let j = jump_mech();
        let r = check_conditions(&j, &derive_constants(&j).unwrap());
        assert!(!r.condition1);
        assert_eq!(r.condition1_tail, TailGrowth::Linear);
        assert!(r.condition2);

        let heavy = BranchingMechanism::new(1.0, 0.1, LevyMeasure::new(vec![(5.0, 0.2)]).unwrap()).unwrap();
        let r = check_conditions(&heavy, &derive_constants(&heavy).unwrap());
        assert!((r.condition2_sum - 0.2 * 5.0 * 5f64.ln().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn condition1_linear_growth_diverges_numerically() {
        // Quadrature oracle: the partial integral keeps growing like log(Xi).
        let j = jump_mech();
        let d = derive_constants(&j).unwrap();
        let base = j.psi_integral(d.lambda_star);
        let f = |xi: f64| (j.psi_integral(xi) - base).sqrt().recip();
        let a = adaptive_simpson(&f, 2.0 * d.lambda_star, 100.0, 1e-9, 40);
        let b = adaptive_simpson(&f, 2.0 * d.lambda_star, 10_000.0, 1e-9, 40);
        assert!(b - a > 2.0, "{a} {b}");
    }

    #[test]
    fn conditioned_examples() {
        let q = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
        let dq = derive_constants(&q).unwrap();
        let c = conditioned_mechanism(&q, &dq);
        assert_eq!(c.regime(), Regime::Subcritical);
        assert!((c.alpha() + 1.0).abs() < 1e-11);
        assert_eq!(c.beta(), 1.0);
        assert_eq!(c.psi(0.0).0, 0.0);

        let j = jump_mech();
        let dj = derive_constants(&j).unwrap();
        let c = conditioned_mechanism(&j, &dj);
        assert!((c.nu().atoms()[0].1 - 2.0 * (-dj.lambda_star).exp()).abs() < 1e-14);
        assert!((c.nu().atoms()[0].1 - 0.40636).abs() < 1e-4);
    }

    #[test]
    fn levy_measure_merges_and_orders() {
        let m = LevyMeasure::new(vec![(2.0, 1.0), (1.0, 0.5), (2.0, 0.25)]).unwrap();
        assert_eq!(m.atoms(), &[(1.0, 0.5), (2.0, 1.25)]);
        assert!(LevyMeasure::new(vec![(0.0, 1.0)]).is_err());
        assert!(LevyMeasure::new(vec![(1.0, -1.0)]).is_err());
    }
}
