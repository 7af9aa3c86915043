use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind, OutputFormat};
use super::stats::Summary;
use super::theorem::{theorem1_statistic, theorem2_monitor, Theorem1Report, Theorem2Report};
use crate::error::{domain, Error, Result};
use crate::kernels::first_passage_prob;
use crate::martingales::{additive_w, derivative_w, exit_wv};
use crate::mechanism::{derive_constants, skeleton_offspring, BranchingMechanism, DerivedConstants, DEFAULT_K_MAX};
use crate::particle_engine::{minimum_position, simulate_bbm, simulate_sbm, ParticleEnsemble, SbmOptions};
use crate::rng::stream;
use crate::skeleton_sim::{simulate_skeleton_decomposition, Immigration, SkeletonOptions};
use crate::spine_sim::{simulate_spine_system, SpineOptions};

pub const CSV_HEADER: &str =
    "replicate,t,n_atoms,total_mass,W_half,W_09,W_lambda0,dW,V_minus_y,W_minus_y,L_min,survived";

pub const COLUMNS: [&str; 9] = [
    "n_atoms",
    "total_mass",
    "W_half",
    "W_09",
    "W_lambda0",
    "dW",
    "V_minus_y",
    "W_minus_y",
    "L_min",
];

/// One replicate observed at one time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Row {
    pub replicate: usize,
    pub t: f64,
    pub n_atoms: Option<usize>,
    pub total_mass: Option<f64>,
    pub w_half: Option<f64>,
    pub w_09: Option<f64>,
    pub w_lambda0: Option<f64>,
    pub dw: Option<f64>,
    pub v_minus_y: Option<f64>,
    pub w_minus_y: Option<f64>,
    pub l_min: Option<f64>,
    pub survived: bool,
}

impl Row {
    pub fn column(&self, name: &str) -> Option<f64> {
        match name {
            "n_atoms" => self.n_atoms.map(|n| n as f64),
            "total_mass" => self.total_mass,
            "W_half" => self.w_half,
            "W_09" => self.w_09,
            "W_lambda0" => self.w_lambda0,
            "dW" => self.dw,
            "V_minus_y" => self.v_minus_y,
            "W_minus_y" => self.w_minus_y,
            "L_min" => self.l_min,
            _ => None,
        }
    }

    pub fn to_csv(&self) -> String {
        fn f(v: Option<f64>) -> String {
            v.map_or_else(String::new, |x| format!("{x:e}"))
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.replicate,
            self.t,
            self.n_atoms.map_or_else(String::new, |n| n.to_string()),
            f(self.total_mass),
            f(self.w_half),
            f(self.w_09),
            f(self.w_lambda0),
            f(self.dw),
            f(self.v_minus_y),
            f(self.w_minus_y),
            f(self.l_min),
            u8::from(self.survived)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// `|value - target| < tolerance`.
    pub fn new(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            tolerance,
            pass: (value - target).abs() < tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerT {
    pub t: f64,
    pub survivors: usize,
    pub columns: BTreeMap<String, Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub package: String,
    pub version: String,
    pub seed: u64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub derived_constants: DerivedConstants,
    pub provenance: Provenance,
    pub per_t: Vec<PerT>,
    pub checks: Vec<Check>,
    pub theorem1: Option<Theorem1Report>,
    pub theorem2: Option<Theorem2Report>,
    /// Survival is classified at each grid time; replicates alive at the last
    /// time may still die later.
    pub censoring_note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<Row>,
    pub summary: RunSummary,
    pub trace: Vec<(usize, Immigration)>,
}

struct Replicate {
    rows: Vec<Row>,
    trace: Vec<Immigration>,
}

fn ensemble_row(
    replicate: usize,
    ens: &ParticleEnsemble,
    derived: &DerivedConstants,
    t: f64,
    with_half: bool,
) -> Result<Row> {
    let l0 = derived.lambda0;
    Ok(Row {
        replicate,
        t,
        n_atoms: Some(ens.len()),
        total_mass: Some(ens.total_mass()),
        w_half: if with_half { Some(additive_w(ens, derived, 0.5 * l0, t)?) } else { None },
        w_09: if with_half { Some(additive_w(ens, derived, 0.9 * l0, t)?) } else { None },
        w_lambda0: Some(additive_w(ens, derived, l0, t)?),
        dw: Some(derivative_w(ens, derived, t)),
        v_minus_y: None,
        w_minus_y: None,
        l_min: ens.min_position(),
        survived: !ens.is_empty(),
    })
}

fn run_replicate(
    cfg: &ExperimentConfig,
    mech: &BranchingMechanism,
    derived: &DerivedConstants,
    replicate: usize,
) -> Result<Replicate> {
    let e = &cfg.experiment;
    let mut rng = stream(e.seed, replicate as u64);
    let times = &e.t_grid;
    let mut rows = Vec::with_capacity(times.len());
    let mut trace = Vec::new();
    match e.kind {
        ExperimentKind::Sbm => {
            let opts = SbmOptions {
                n_scale: e.n_scale,
                barrier: e.y,
                far_field: e.far_field(),
                particle_cap: e.particle_cap,
            };
            let run = simulate_sbm(mech, &ParticleEnsemble::delta(0.0, 1.0)?, times, &opts, &mut rng)?;
            for (k, (&t, ens)) in times.iter().zip(&run.path).enumerate() {
                let mut row = ensemble_row(replicate, ens, derived, t, true)?;
                if let Some(exit) = run.exits.get(k) {
                    let (w, v) = exit_wv(exit, derived);
                    row.w_minus_y = Some(w);
                    row.v_minus_y = Some(v);
                }
                rows.push(row);
            }
        }
        ExperimentKind::Skeleton => {
            let opts = SkeletonOptions {
                n_scale: e.n_scale,
                delta_imm: e.delta_imm,
                branch_point_law: e.branch_point_law,
                particle_cap: e.particle_cap,
            };
            let lp = simulate_skeleton_decomposition(mech, derived, times, &opts, &mut rng)?;
            for (&t, ens) in times.iter().zip(&lp.path) {
                rows.push(ensemble_row(replicate, ens, derived, t, true)?);
            }
            trace = lp.immigration;
        }
        ExperimentKind::Bbm => {
            let law = skeleton_offspring(mech, derived, DEFAULT_K_MAX)?;
            let horizon = *times.last().expect("validated non-empty");
            let tree = simulate_bbm(derived.skeleton_rate(), &law, 0.0, &[0.0], horizon, e.particle_cap, &mut rng)?;
            for &t in times {
                let alive = tree.alive_at(t);
                let mut atoms = Vec::with_capacity(alive.len());
                for &i in &alive {
                    atoms.push((tree.position_at(i, t)?, 1.0));
                }
                let ens = ParticleEnsemble { t, atoms };
                let mut row = ensemble_row(replicate, &ens, derived, t, false)?;
                row.total_mass = None;
                row.l_min = Some(minimum_position(&tree, t)?);
                rows.push(row);
            }
        }
        ExperimentKind::Spine => {
            let opts = SpineOptions {
                n_scale: e.n_scale,
                far_field: e.far_field(),
                particle_cap: e.particle_cap,
                keep_exits: false,
            };
            let y = e.y.unwrap_or(1.0);
            let path = simulate_spine_system(mech, derived, y, times, &opts, &mut rng)?;
            for (&t, &(w, v)) in times.iter().zip(&path.wv) {
                rows.push(Row {
                    replicate,
                    t,
                    v_minus_y: Some(v),
                    w_minus_y: Some(w),
                    survived: true,
                    ..Row::default()
                });
            }
        }
        ExperimentKind::Derive | ExperimentKind::Laplace | ExperimentKind::Verify => {
            return Err(domain(format!("{:?} is not an ensemble experiment", e.kind)));
        }
    }
    Ok(Replicate { rows, trace })
}

/// Runs all replicates. Results are collected in replicate order and reduced
/// sequentially, so they do not depend on the thread count.
pub fn run_ensemble(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput> {
    cfg.validate()?;
    let mech = cfg.mechanism.build()?;
    let derived = derive_constants(&mech)?;
    let e = &cfg.experiment;
    if e.kind == ExperimentKind::Sbm && e.y.is_some() && e.far_field_target > 0 {
        return Err(Error::Config {
            path: "experiment.far_field_target".into(),
            msg: "the far-field closure cannot be combined with a barrier in sbm runs".into(),
        });
    }
    let work = || -> Vec<Result<Replicate>> {
        (0..e.replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, &mech, &derived, r))
            .collect()
    };
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|err| domain(format!("thread pool: {err}")))?
            .install(work),
        None => work(),
    };
    let mut rows = Vec::new();
    let mut trace = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        let rep = res?;
        rows.extend(rep.rows);
        trace.extend(rep.trace.into_iter().map(|i| (r, i)));
    }
    let summary = summarize(cfg, &mech, &derived, &rows)?;
    Ok(RunOutput { rows, summary, trace })
}

fn summarize(
    cfg: &ExperimentConfig,
    mech: &BranchingMechanism,
    derived: &DerivedConstants,
    rows: &[Row],
) -> Result<RunSummary> {
    let e = &cfg.experiment;
    let mut per_t = Vec::new();
    let mut checks = Vec::new();
    for &t in &e.t_grid {
        let at: Vec<&Row> = rows.iter().filter(|r| r.t == t).collect();
        let mut columns = BTreeMap::new();
        for name in COLUMNS {
            let v: Vec<f64> = at.iter().filter_map(|r| r.column(name)).collect();
            if !v.is_empty() {
                columns.insert(name.to_string(), Summary::of(&v));
            }
        }
        let survivors = at.iter().filter(|r| r.survived).count();
        let mut check = |name: &str, target: f64| {
            if let Some(s) = columns.get(name) {
                checks.push(Check::new(format!("{name} mean at t={t}"), s.mean, target, 4.0 * s.se));
            }
        };
        match e.kind {
            ExperimentKind::Sbm | ExperimentKind::Skeleton => {
                check("total_mass", (mech.alpha() * t).exp());
                check("W_half", 1.0);
                check("W_09", 1.0);
                check("W_lambda0", 1.0);
                check("dW", 0.0);
                if let Some(y) = e.y {
                    check("V_minus_y", y);
                    check("W_minus_y", first_passage_prob(0.0, y, t)?);
                }
            }
            ExperimentKind::Bbm => {
                check("W_lambda0", 1.0);
                check("dW", 0.0);
                check("n_atoms", (derived.skeleton_rate() * (derived.m_mean - 1.0) * t).exp());
            }
            ExperimentKind::Spine => {
                let y = e.y.unwrap_or(1.0);
                let ratio: Vec<f64> = at
                    .iter()
                    .filter_map(|r| Some(r.w_minus_y? / r.v_minus_y?))
                    .collect();
                if ratio.len() >= 2 {
                    let s = Summary::of(&ratio);
                    let target = first_passage_prob(0.0, y, t)? / y;
                    checks.push(Check::new(format!("W/V mean at t={t}"), s.mean, target, 4.0 * s.se));
                }
            }
            _ => {}
        }
        per_t.push(PerT { t, survivors, columns });
    }
    let barrier_free = matches!(e.kind, ExperimentKind::Sbm | ExperimentKind::Skeleton);
    let theorem1 = if barrier_free { theorem1_statistic(rows).ok() } else { None };
    let theorem2 = barrier_free.then(|| theorem2_monitor(rows, derived.lambda0));
    Ok(RunSummary {
        config: cfg.clone(),
        derived_constants: *derived,
        provenance: Provenance {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: e.seed,
            replicates: e.replicates,
        },
        per_t,
        checks,
        theorem1,
        theorem2,
        censoring_note: "survived = non-empty at t; replicates alive at the horizon are right-censored".into(),
    })
}

pub fn rows_to_csv(rows: &[Row]) -> String {
    let mut out = String::with_capacity(rows.len() * 120);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

pub fn trace_to_csv(trace: &[(usize, Immigration)]) -> String {
    let mut out = String::from("replicate,kind,time,position,mass\n");
    for (r, i) in trace {
        let kind = serde_json::to_value(i.kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        let _ = writeln!(out, "{r},{kind},{:e},{:e},{:e}", i.time, i.position, i.mass);
    }
    out
}

/// Writes the run's outputs into `dir` and returns the paths written.
pub fn write_outputs(output: &RunOutput, dir: &Path, format: OutputFormat, trace: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        OutputFormat::Csv => {
            let p = dir.join("replicates.csv");
            std::fs::write(&p, rows_to_csv(&output.rows))?;
            written.push(p);
        }
        OutputFormat::Json => {
            let p = dir.join("summary.json");
            std::fs::write(&p, serde_json::to_string_pretty(&output.summary)?)?;
            written.push(p);
        }
    }
    if trace && !output.trace.is_empty() {
        let p = dir.join("immigration.csv");
        std::fs::write(&p, trace_to_csv(&output.trace))?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ExperimentKind, reps: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.experiment.kind = kind;
        c.experiment.replicates = reps;
        c.experiment.n_scale = 20;
        c.experiment.t_grid = vec![0.5, 1.0];
        c
    }

    #[test]
    fn single_replicate_rows_are_reproducible() {
        let c = cfg(ExperimentKind::Sbm, 1);
        let a = run_ensemble(&c, Some(1)).unwrap();
        let b = run_ensemble(&c, Some(1)).unwrap();
        assert_eq!(rows_to_csv(&a.rows), rows_to_csv(&b.rows));
        assert_eq!(a.rows.len(), 2);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let c = cfg(ExperimentKind::Sbm, 16);
        let a = run_ensemble(&c, Some(1)).unwrap();
        let b = run_ensemble(&c, Some(3)).unwrap();
        assert_eq!(rows_to_csv(&a.rows), rows_to_csv(&b.rows));
        assert_eq!(
            serde_json::to_string(&a.summary).unwrap(),
            serde_json::to_string(&b.summary).unwrap()
        );
    }

    #[test]
    fn csv_header_and_empty_fields() {
        let mut c = cfg(ExperimentKind::Spine, 2);
        c.experiment.y = Some(1.0);
        let out = run_ensemble(&c, Some(1)).unwrap();
        let csv = rows_to_csv(&out.rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 12);
        assert_eq!(first[2], "");
        assert!(!first[8].is_empty());
    }

    #[test]
    fn all_ensemble_kinds_run() {
        for kind in [ExperimentKind::Sbm, ExperimentKind::Bbm, ExperimentKind::Skeleton, ExperimentKind::Spine] {
            let out = run_ensemble(&cfg(kind, 3), Some(1)).unwrap();
            assert_eq!(out.rows.len(), 6);
            assert_eq!(out.summary.per_t.len(), 2);
        }
        assert!(run_ensemble(&cfg(ExperimentKind::Derive, 1), None).is_err());
    }

    #[test]
    fn summary_mass_check_at_t1() {
        let mut c = cfg(ExperimentKind::Sbm, 200);
        c.experiment.t_grid = vec![1.0];
        let out = run_ensemble(&c, Some(1)).unwrap();
        let check = out.summary.checks.iter().find(|c| c.name.starts_with("total_mass")).unwrap();
        assert!(check.pass, "{check:?}");
    }
}
