//! The acceptance suite. Each criterion runs from a fixed seed and returns a
//! report whose enforced items decide pass or fail.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind, MechanismConfig};
use super::runner::run_ensemble;
use super::stats::{ks_test, ks_two_sample, mean_se, Summary};
use super::theorem::{theorem1_statistic, theorem2_monitor, SQRT_2_OVER_PI};
use crate::error::Result;
use crate::kernels::{bessel3_cdf, first_passage_prob, sample_bessel3};
use crate::loglaplace::{logistic_closed_form, solve_log_laplace, GridParams};
use crate::martingales::{additive_w, brw_functionals_at, derivative_w, exit_wv};
use crate::mechanism::{
    derive_constants, skeleton_offspring, BranchingMechanism, DerivedConstants, LevyMeasure, DEFAULT_K_MAX,
};
use crate::particle_engine::{
    build_population, simulate_bbm, simulate_sbm, FarFieldConfig, ParticleEnsemble, SbmOptions, SkeletonTree,
};
use crate::rng::substream;
use crate::skeleton_sim::{simulate_skeleton_decomposition, SkeletonOptions};
use crate::spine_sim::{simulate_spine_system, spine_conditional_check, SpineOptions};

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Two-sided normal quantile at 99%.
const Z99: f64 = 2.575_829_303_549_08;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub label: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Unenforced items are reported but do not decide the verdict.
    pub enforced: bool,
}

impl Item {
    fn near(label: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            label: label.into(),
            value,
            target,
            tolerance,
            pass: (value - target).abs() < tolerance,
            enforced: true,
        }
    }

    fn flag(label: impl Into<String>, value: f64, target: f64, pass: bool) -> Self {
        Self {
            label: label.into(),
            value,
            target,
            tolerance: f64::NAN,
            pass,
            enforced: true,
        }
    }

    fn unenforced(mut self) -> Self {
        self.enforced = false;
        self
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match (self.pass, self.enforced) {
            (true, _) => "ok",
            (false, true) => "FAIL",
            (false, false) => "FAIL (not enforced)",
        };
        write!(f, "{}: {:.6} vs {:.6}", self.label, self.value, self.target)?;
        if self.tolerance.is_finite() {
            write!(f, " (tol {:.3e})", self.tolerance)?;
        }
        write!(f, " [{status}]")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u32,
    pub title: String,
    pub items: Vec<Item>,
    pub notes: Vec<String>,
    pub report_only: bool,
}

impl CriterionReport {
    fn new(id: u32, title: &str) -> Self {
        Self {
            id,
            title: title.into(),
            items: Vec::new(),
            notes: Vec::new(),
            report_only: false,
        }
    }

    /// All enforced items pass.
    pub fn enforced_pass(&self) -> bool {
        self.items.iter().filter(|i| i.enforced).all(|i| i.pass)
    }

    /// All items pass, enforced or not.
    pub fn full_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn status(&self) -> &'static str {
        if self.report_only {
            "REPORT"
        } else if self.full_pass() {
            "PASS"
        } else {
            "FAIL"
        }
    }

    /// One line verdict.
    pub fn headline(&self) -> String {
        let mut s = format!("criterion {:>2}: {} {}", self.id, self.status(), self.title);
        if !self.full_pass() && self.enforced_pass() {
            s.push_str(" (only unenforced items fail)");
        }
        s
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.headline())?;
        for i in &self.items {
            writeln!(f, "    {i}")?;
        }
        for n in &self.notes {
            writeln!(f, "    note: {n}")?;
        }
        Ok(())
    }
}

fn quadratic() -> (BranchingMechanism, DerivedConstants) {
    let mech = BranchingMechanism::quadratic(1.0, 1.0).expect("valid");
    let d = derive_constants(&mech).expect("supercritical");
    (mech, d)
}

fn par_map<T: Send, F: Fn(u64) -> Result<T> + Sync + Send>(n: usize, f: F) -> Result<Vec<T>> {
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Proportion with its binomial standard error.
fn proportion(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

pub fn criterion_1(seed: u64) -> Result<CriterionReport> {
    let mut rep = CriterionReport::new(1, "derived constants");
    let mut rng = substream(seed, 0, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let beta = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.05..2.0) };
        let k = rng.random_range(if beta == 0.0 { 1..4 } else { 0..4 });
        let atoms: Vec<(f64, f64)> = (0..k)
            .map(|_| (rng.random_range(0.05..2.0), rng.random_range(0.05..2.0)))
            .collect();
        // Without a Gaussian part psi has a finite root only if alpha < sum w x.
        let alpha = if beta == 0.0 {
            rng.random_range(0.1..0.9) * atoms.iter().map(|a| a.0 * a.1).sum::<f64>()
        } else {
            rng.random_range(0.1..3.0)
        };
        let mech = BranchingMechanism::new(alpha, beta, LevyMeasure::new(atoms)?)?;
        let d = derive_constants(&mech)?;
        let m = skeleton_offspring(&mech, &d, 1024)?.mean();
        let rel = (d.lambda0 * d.lambda0 - 2.0 * d.psi_prime_star * (m - 1.0)).abs() / (d.lambda0 * d.lambda0);
        worst = worst.max(rel);
    }
    rep.items.push(Item::flag("max relative error of lambda0^2 = 2 psi'(lambda*)(m-1)", worst, 0.0, worst < 1e-9));
    let (mech, d) = quadratic();
    let law = skeleton_offspring(&mech, &d, DEFAULT_K_MAX)?;
    rep.items.push(Item::near("quadratic lambda*", d.lambda_star, 1.0, 1e-9));
    rep.items.push(Item::near("quadratic p2", law.prob(2), 1.0, 1e-9));
    rep.items.push(Item::near("quadratic m", law.mean(), 2.0, 1e-9));
    Ok(rep)
}

pub fn criterion_2(seed: u64) -> Result<CriterionReport> {
    const REPS: usize = 10_000;
    const HORIZON: f64 = 40.0;
    const SURVIVAL_MASS: f64 = 30.0;
    let mut rep = CriterionReport::new(2, "extinction probability");
    let (mech, _) = quadratic();
    let opts = SbmOptions::new(20);
    let init = ParticleEnsemble::delta(0.0, 1.0)?;
    let extinct = par_map(REPS, |r| {
        let mut rng = substream(seed, r, 2);
        let mut pop = build_population(&mech, &init, &opts, &mut rng)?;
        let mut t = 0.0;
        while t < HORIZON {
            t = (t + 0.25).min(HORIZON);
            pop.run_until(t, &mut rng)?;
            if pop.is_extinct() {
                return Ok(true);
            }
            if pop.total_mass() >= SURVIVAL_MASS {
                return Ok(false);
            }
        }
        Ok(false)
    })?;
    let (p, se) = proportion(extinct.iter().filter(|e| **e).count(), REPS);
    rep.items.push(Item::near("extinct fraction by t=40, N=20", p, (-1.0f64).exp(), 4.0 * se));
    rep.notes.push(format!("replicates reaching mass {SURVIVAL_MASS} are classified as survivors"));
    Ok(rep)
}

pub fn criterion_3(seed: u64) -> Result<CriterionReport> {
    const REPS: usize = 400;
    let mut rep = CriterionReport::new(3, "mean formula");
    let (mech, _) = quadratic();
    let opts = SbmOptions::new(1000);
    let init = ParticleEnsemble::delta(0.0, 1.0)?;
    let mass = par_map(REPS, |r| {
        let mut rng = substream(seed, r, 3);
        Ok(simulate_sbm(&mech, &init, &[1.0], &opts, &mut rng)?.path[0].total_mass())
    })?;
    let (m, se) = mean_se(&mass);
    rep.items.push(Item::near("E|X_1|, N=1000", m, 1f64.exp(), 4.0 * se));
    Ok(rep)
}

/// Barrier run at `y = 1`, `t = 1` shared by criteria 4 and 8.
struct BarrierSample {
    w_half: Vec<f64>,
    dw: Vec<f64>,
    v: Vec<f64>,
}

fn barrier_sample(seed: u64) -> Result<BarrierSample> {
    const REPS: usize = 2000;
    let (mech, d) = quadratic();
    let mut opts = SbmOptions::new(100);
    opts.barrier = Some(1.0);
    let init = ParticleEnsemble::delta(0.0, 1.0)?;
    let rows = par_map(REPS, |r| {
        let mut rng = substream(seed, r, 4);
        let run = simulate_sbm(&mech, &init, &[1.0], &opts, &mut rng)?;
        let ens = &run.path[0];
        let (_, v) = exit_wv(&run.exits[0], &d);
        Ok((additive_w(ens, &d, 0.5 * d.lambda0, 1.0)?, derivative_w(ens, &d, 1.0), v))
    })?;
    Ok(BarrierSample {
        w_half: rows.iter().map(|r| r.0).collect(),
        dw: rows.iter().map(|r| r.1).collect(),
        v: rows.iter().map(|r| r.2).collect(),
    })
}

fn criterion_4_from(s: &BarrierSample) -> CriterionReport {
    let mut rep = CriterionReport::new(4, "martingale means");
    let (m, se) = mean_se(&s.w_half);
    rep.items.push(Item::near("E W_1(lambda0/2)", m, 1.0, 4.0 * se));
    let (m, se) = mean_se(&s.dw);
    rep.items.push(Item::near("E dW_1", m, 0.0, 4.0 * se));
    let (m, se) = mean_se(&s.v);
    rep.items.push(Item::near("E V_1^{-1}", m, 1.0, 4.0 * se));
    rep.notes.push(format!("N=100, {} replicates, barrier y=1 in mark mode", s.v.len()));
    rep
}

pub fn criterion_4(seed: u64) -> Result<CriterionReport> {
    Ok(criterion_4_from(&barrier_sample(seed)?))
}

pub fn criterion_5(seed: u64) -> Result<CriterionReport> {
    const KS_SAMPLES: usize = 100_000;
    const ETA_SAMPLES: usize = 100_000;
    let mut rep = CriterionReport::new(5, "closed forms");
    let erf_oracle = libm::erf(1.0 / 2f64.sqrt());
    rep.items.push(Item::near("first_passage_prob(0,1,1)", first_passage_prob(0.0, 1.0, 1.0)?, erf_oracle, 1e-9));
    let mut rng = substream(seed, 0, 5);
    let s: Vec<f64> = (0..KS_SAMPLES).map(|_| sample_bessel3(1.0, 1.0, &mut rng)).collect();
    let ks = ks_test(&s, |r| bessel3_cdf(1.0, 1.0, r))?;
    rep.items.push(Item::flag("Bessel-3 sampler KS p-value (y=1,t=1)", ks.p_value, 0.01, ks.p_value > 0.01));
    for (k, t) in [0.5, 1.0, 4.0, 16.0].into_iter().enumerate() {
        let mut rng = substream(seed, 1 + k as u64, 5);
        let v: Vec<f64> = (0..ETA_SAMPLES)
            .map(|_| {
                let eta = sample_bessel3(1.0, t, &mut rng);
                1.0 / (eta * eta)
            })
            .collect();
        let (m, se) = mean_se(&v);
        let bound = 2.0 / t * (1.0 + 5.0 * se);
        rep.items.push(Item::flag(format!("mean eta_t^-2 <= 2/t (1+5se), t={t}"), m, bound, m <= bound));
    }
    Ok(rep)
}

pub fn criterion_6(seed: u64) -> Result<CriterionReport> {
    const REPS: usize = 4000;
    const N: usize = 200;
    let mut rep = CriterionReport::new(6, "log-Laplace oracle");
    let (mech, _) = quadratic();
    let bump = |x: f64| 0.5 * (-0.5 * x * x).exp();
    let grid = GridParams {
        x_lo: -12.0,
        x_hi: 12.0,
        ..GridParams::default()
    };
    let u = solve_log_laplace(&mech, &grid.sample(bump), 1.0, &grid)?.value_at(0.0);
    let fine = grid.refined();
    let u_fine = solve_log_laplace(&mech, &fine.sample(bump), 1.0, &fine)?.value_at(0.0);
    let grid_err = ((-u).exp() - (-u_fine).exp()).abs();
    let init = ParticleEnsemble::delta(0.0, 1.0)?;
    let opts = SbmOptions::new(N);
    let v = par_map(REPS, |r| {
        let mut rng = substream(seed, r, 6);
        let ens = &simulate_sbm(&mech, &init, &[1.0], &opts, &mut rng)?.path[0];
        let pairing: f64 = ens.atoms.iter().map(|&(x, m)| m * bump(x)).sum();
        Ok((-pairing).exp())
    })?;
    let (m, se) = mean_se(&v);
    rep.items.push(Item::near(
        "E exp(-<f,X_1>) vs exp(-u_f(0,1)), f = 0.5 exp(-x^2/2)",
        m,
        (-u).exp(),
        4.0 * se + 5.0 * grid_err,
    ));
    let flat_grid = GridParams {
        x_lo: -6.0,
        x_hi: 6.0,
        h: 0.02,
        dt: 0.01,
    };
    let flat = solve_log_laplace(&mech, &flat_grid.sample(|_| 2.0), 1.0, &flat_grid)?.value_at(0.0);
    rep.items.push(Item::near("flat f=2 solver vs logistic closed form", flat, logistic_closed_form(1.0, 1.0, 2.0, 1.0), 1e-6));
    rep.items.push(Item::near("flat f=2 solver vs 1.22540", flat, 1.22540, 1e-6).unenforced());
    rep.items.push(Item::near("flat f=2 solver vs 1.22540 at printed precision", flat, 1.22540, 5e-6));
    rep.notes.push(format!("N={N}, {REPS} replicates, grid error {grid_err:.2e}"));
    Ok(rep)
}

pub fn criterion_7(seed: u64) -> Result<CriterionReport> {
    const REPS: usize = 500;
    const N: usize = 100;
    let mut rep = CriterionReport::new(7, "skeleton equivalence");
    let (mech, d) = quadratic();
    let init = ParticleEnsemble::delta(0.0, 1.0)?;
    let opts = SbmOptions::new(N);
    let direct = par_map(REPS, |r| {
        let mut rng = substream(seed, r, 7);
        Ok(simulate_sbm(&mech, &init, &[1.0], &opts, &mut rng)?.path[0].total_mass())
    })?;
    let sk_opts = SkeletonOptions::new(N);
    let skeleton = par_map(REPS, |r| {
        let mut rng = substream(seed, r, 70);
        let lp = simulate_skeleton_decomposition(&mech, &d, &[1.0], &sk_opts, &mut rng)?;
        Ok((lp.path[0].total_mass(), lp.k0))
    })?;
    let lambda: Vec<f64> = skeleton.iter().map(|s| s.0).collect();
    let ks = ks_two_sample(&lambda, &direct)?;
    rep.items.push(Item::flag("two-sample KS p-value |Lambda_1| vs |X_1|", ks.p_value, 0.01, ks.p_value > 0.01));
    let (p, se) = proportion(skeleton.iter().filter(|s| s.1 == 0).count(), REPS);
    rep.items.push(Item::near("P(K0 = 0)", p, (-d.lambda_star).exp(), Z99 * se));
    rep.notes.push(format!("N={N}; CI is the 99% normal interval"));
    Ok(rep)
}

fn criterion_8_from(seed: u64, barrier: &BarrierSample) -> Result<CriterionReport> {
    const REPS: usize = 4000;
    const N: usize = 100;
    let mut rep = CriterionReport::new(8, "spine identities");
    let (mech, d) = quadratic();
    let y = 1.0;
    let opts = SpineOptions::new(N);
    let paths = par_map(REPS, |r| {
        let mut rng = substream(seed, r, 8);
        simulate_spine_system(&mech, &d, y, &[1.0], &opts, &mut rng)
    })?;
    let inv_v: Vec<f64> = paths.iter().map(|p| 1.0 / p.wv[0].1).collect();
    let (m, se) = mean_se(&inv_v);
    rep.items.push(Item::near("8a mean 1/V~_1 vs 1/y", m, 1.0 / y, 4.0 * se).unenforced());
    let alive = barrier.v.iter().filter(|v| **v > 0.0).count();
    let (p, se_p) = proportion(alive, barrier.v.len());
    rep.items.push(Item::near(
        "8a' mean 1/V~_1 vs P(V_1 > 0)/y",
        m,
        p / y,
        4.0 * (se * se + se_p * se_p / (y * y)).sqrt(),
    ));
    let check = spine_conditional_check(&paths, 0)?;
    let combined = (check.se_ratio.powi(2) + check.se_spine.powi(2)).sqrt();
    rep.items.push(Item::near("8b mean W~/V~ vs mean 1/(xi+y)", check.mean_ratio, check.mean_spine, 4.0 * combined));
    let target = first_passage_prob(0.0, y, 1.0)?;
    rep.items.push(Item::near("8c mean W~/V~ at y=1, t=1", check.mean_ratio, target, Z99 * check.se_ratio));
    rep.notes.push(
        "8a is stated as Q[1/V_t] = 1/y, but Q[1/V_t] = P(V_t > 0)/y < 1/y; 8a' is the corrected identity".into(),
    );
    rep.notes.push(format!("N={N}, {REPS} spine replicates; P(V_1 > 0) from {} barrier runs", barrier.v.len()));
    Ok(rep)
}

pub fn criterion_8(seed: u64) -> Result<CriterionReport> {
    criterion_8_from(seed, &barrier_sample(seed)?)
}

/// Particle scale and exact-zone size for the long-horizon closure runs.
const LONG_N: usize = 10;
const LONG_TARGET: usize = 1000;

pub fn criterion_9(seed: u64) -> Result<CriterionReport> {
    const REPS: usize = 500;
    let mut rep = CriterionReport::new(9, "spine ratio limit");
    let (mech, d) = quadratic();
    let mut opts = SpineOptions::new(LONG_N);
    opts.far_field = Some(FarFieldConfig {
        target_particles: LONG_TARGET,
        ..Default::default()
    });
    let times = [25.0, 100.0];
    let paths = par_map(REPS, |r| {
        let mut rng = substream(seed, r, 9);
        simulate_spine_system(&mech, &d, 1.0, &times, &opts, &mut rng)
    })?;
    let scaled: Vec<Summary> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let v: Vec<f64> = paths
                .iter()
                .map(|p| {
                    let (w, v) = p.wv[k];
                    t.sqrt() * w / (w + v)
                })
                .collect();
            Summary::of(&v)
        })
        .collect();
    let gap25 = (scaled[0].mean - SQRT_2_OVER_PI).abs();
    let gap100 = (scaled[1].mean - SQRT_2_OVER_PI).abs();
    rep.items.push(Item::flag(
        "closer to sqrt(2/pi) at t=100 than at t=25",
        scaled[1].mean,
        SQRT_2_OVER_PI,
        gap100 < gap25,
    ));
    rep.items.push(Item::near("t=100 within 15%", scaled[1].mean, SQRT_2_OVER_PI, 0.15 * SQRT_2_OVER_PI));
    rep.notes.push(format!(
        "sqrt(t) mean W~/(W~+V~): {:.4} (se {:.4}) at t=25, {:.4} (se {:.4}) at t=100",
        scaled[0].mean, scaled[0].se, scaled[1].mean, scaled[1].se
    ));
    rep.notes.push(format!(
        "N={LONG_N} with far-field closure ({LONG_TARGET} exact particles), {REPS} replicates"
    ));
    Ok(rep)
}

fn long_sbm_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        mechanism: MechanismConfig::default(),
        ..ExperimentConfig::default()
    };
    let e = &mut cfg.experiment;
    e.kind = ExperimentKind::Sbm;
    e.t_grid = vec![0.78125, 1.5625, 3.125, 6.25, 12.5, 25.0, 50.0, 100.0];
    e.n_scale = LONG_N;
    e.replicates = 500;
    e.seed = seed ^ 10;
    e.far_field_target = LONG_TARGET;
    cfg
}

fn criteria_10_12_from(cfg: &ExperimentConfig) -> Result<(CriterionReport, CriterionReport)> {
    let out = run_ensemble(cfg, None)?;
    let d = out.summary.derived_constants;
    let rows: Vec<_> = out.rows.iter().filter(|r| r.t >= 12.5).cloned().collect();
    let mut rep = CriterionReport::new(10, "Seneta-Heyde ratio on survivors");
    let t1 = theorem1_statistic(&rows)?;
    for r in &t1.per_t {
        rep.notes.push(format!(
            "t={}: n={} median {:.4} IQR [{:.4}, {:.4}] within 0.1: {:.3} within 0.2: {:.3}",
            r.t, r.n, r.median, r.q25, r.q75, r.frac_within_01, r.frac_within_02
        ));
    }
    let last = t1.per_t.last().expect("four times");
    rep.items.push(Item::flag("fraction within 0.2 non-decreasing in t", last.frac_within_02, f64::NAN, t1.monotone));
    rep.items.push(Item::flag("fraction within 0.2 at t=100 exceeds 0.5", last.frac_within_02, 0.5, last.frac_within_02 > 0.5));
    rep.notes.push(t1.note.clone());

    let mut mon = CriterionReport::new(12, "running maximum monitor");
    mon.report_only = true;
    let t2 = theorem2_monitor(&out.rows, d.lambda0);
    mon.notes.push(format!("{} surviving replicates", t2.survivors));
    if let Some(f) = t2.frac_increasing {
        mon.notes.push(format!("fraction whose running max of sqrt(t) W_t at t=100 exceeds its value at t=25: {f:.3}"));
    }
    if let Some(s) = t2.summary_last_max {
        mon.notes.push(format!("running max at t=100: median {:.4}, IQR [{:.4}, {:.4}]", s.median, s.q25, s.q75));
    }
    let fronts: Vec<f64> = t2.running_min_front.iter().filter_map(|m| m.last().copied()).collect();
    if !fronts.is_empty() {
        let s = Summary::of(&fronts);
        mon.notes.push(format!(
            "running min of lambda0 (L_t + lambda0 t) - log(t)/2 at t=100: median {:.4}, IQR [{:.4}, {:.4}]",
            s.median, s.q25, s.q75
        ));
    }
    mon.notes.push(t2.note);
    Ok((rep, mon))
}

pub fn criterion_10(seed: u64) -> Result<CriterionReport> {
    Ok(criteria_10_12_from(&long_sbm_config(seed))?.0)
}

pub fn criterion_11(seed: u64) -> Result<CriterionReport> {
    const REPS: usize = 20_000;
    const KAPPA: f64 = 2.0;
    let mut rep = CriterionReport::new(11, "branching random walk embedding");
    let (mech, d) = quadratic();
    let law = skeleton_offspring(&mech, &d, DEFAULT_K_MAX)?;
    let rec = par_map(REPS, |r| {
        let mut rng = substream(seed, r, 11);
        let t1 = rand_distr::Distribution::sample(&rand_distr::Exp::new(KAPPA).expect("positive"), &mut rng);
        let tree = simulate_bbm(d.skeleton_rate(), &law, 0.0, &[0.0], t1, 10_000_000, &mut rng)?;
        brw_functionals_at_one(&tree, &d, t1)
    })?;
    let w: Vec<f64> = rec.iter().map(|r| r.0).collect();
    let dd: Vec<f64> = rec.iter().map(|r| r.1).collect();
    let d2: Vec<f64> = rec.iter().map(|r| r.2).collect();
    let (m, se) = mean_se(&w);
    rep.items.push(Item::near("E W_1", m, 1.0, 4.0 * se));
    let (m, se) = mean_se(&dd);
    rep.items.push(Item::near("E D_1", m, 0.0, 4.0 * se));
    let (m, se) = mean_se(&d2);
    rep.items.push(Item::near("E D_1^(2)", m, d.lambda0 * d.lambda0 / KAPPA, 4.0 * se));
    rep.notes.push(format!("kappa={KAPPA}, {REPS} replicates"));
    Ok(rep)
}

fn brw_functionals_at_one(
    tree: &SkeletonTree,
    d: &DerivedConstants,
    t: f64,
) -> Result<(f64, f64, f64)> {
    let r = brw_functionals_at(tree, d, &[t])?;
    Ok((r[0].w, r[0].d, r[0].d2))
}

/// Criteria 4 and 8 from one shared barrier run.
pub fn criteria_4_8(seed: u64) -> Result<(CriterionReport, CriterionReport)> {
    let barrier = barrier_sample(seed)?;
    Ok((criterion_4_from(&barrier), criterion_8_from(seed, &barrier)?))
}

/// Criteria 10 and 12 from one shared long run.
pub fn criteria_10_12(seed: u64) -> Result<(CriterionReport, CriterionReport)> {
    criteria_10_12_from(&long_sbm_config(seed))
}

pub fn criterion_12(seed: u64) -> Result<CriterionReport> {
    Ok(criteria_10_12_from(&long_sbm_config(seed))?.1)
}

/// Runs every criterion, sharing the runs that several criteria read.
pub fn run_all(seed: u64, mut progress: impl FnMut(&CriterionReport)) -> Result<Vec<CriterionReport>> {
    let mut out = Vec::new();
    let mut push = |r: CriterionReport, out: &mut Vec<CriterionReport>| {
        progress(&r);
        out.push(r);
    };
    push(criterion_1(seed)?, &mut out);
    push(criterion_2(seed)?, &mut out);
    push(criterion_3(seed)?, &mut out);
    let barrier = barrier_sample(seed)?;
    push(criterion_4_from(&barrier), &mut out);
    push(criterion_5(seed)?, &mut out);
    push(criterion_6(seed)?, &mut out);
    push(criterion_7(seed)?, &mut out);
    push(criterion_8_from(seed, &barrier)?, &mut out);
    push(criterion_9(seed)?, &mut out);
    let (c10, c12) = criteria_10_12_from(&long_sbm_config(seed))?;
    push(c10, &mut out);
    push(criterion_11(seed)?, &mut out);
    push(c12, &mut out);
    Ok(out)
}
