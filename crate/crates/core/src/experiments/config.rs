use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loglaplace::GridParams;
use crate::mechanism::{BranchingMechanism, LevyMeasure};
use crate::particle_engine::FarFieldConfig;
use crate::skeleton_sim::BranchPointLaw;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Derive,
    #[default]
    Sbm,
    Bbm,
    Skeleton,
    Spine,
    Laplace,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismConfig {
    pub alpha: f64,
    pub beta: f64,
    /// `[position, weight]` pairs.
    #[serde(default)]
    pub nu_atoms: Vec<[f64; 2]>,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            nu_atoms: Vec::new(),
        }
    }
}

impl MechanismConfig {
    pub fn build(&self) -> Result<BranchingMechanism> {
        let atoms = self.nu_atoms.iter().map(|a| (a[0], a[1])).collect();
        let nu = LevyMeasure::new(atoms).map_err(|e| config_err("mechanism.nu_atoms", e))?;
        BranchingMechanism::new(self.alpha, self.beta, nu).map_err(|e| config_err("mechanism", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    pub t_grid: Vec<f64>,
    pub n_scale: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Barrier depth for sbm runs and spine runs.
    pub y: Option<f64>,
    pub kappa: f64,
    pub delta_imm: f64,
    pub branch_point_law: BranchPointLaw,
    /// Particles kept exact under the far-field closure; 0 disables it.
    pub far_field_target: usize,
    pub particle_cap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Sbm,
            t_grid: vec![1.0],
            n_scale: 100,
            replicates: 100,
            seed: 1,
            y: None,
            kappa: 2.0,
            delta_imm: 0.0,
            branch_point_law: BranchPointLaw::Plain,
            far_field_target: 0,
            particle_cap: crate::particle_engine::DEFAULT_PARTICLE_CAP,
        }
    }
}

impl RunConfig {
    pub fn far_field(&self) -> Option<FarFieldConfig> {
        (self.far_field_target > 0).then(|| FarFieldConfig {
            target_particles: self.far_field_target,
            ..FarFieldConfig::default()
        })
    }
}

/// Test function for the log-Laplace solver: `offset + amplitude exp(-(x - center)^2 / (2 width^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaplaceConfig {
    pub t: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub h: f64,
    pub dt: f64,
    pub offset: f64,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        let g = GridParams::default();
        Self {
            t: 1.0,
            x_lo: g.x_lo,
            x_hi: g.x_hi,
            h: g.h,
            dt: g.dt,
            offset: 0.0,
            amplitude: 1.0,
            center: 0.0,
            width: 1.0,
        }
    }
}

impl LaplaceConfig {
    pub fn grid(&self) -> GridParams {
        GridParams {
            x_lo: self.x_lo,
            x_hi: self.x_hi,
            h: self.h,
            dt: self.dt,
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        self.offset + self.amplitude * (-0.5 * z * z).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
    pub trace: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: OutputFormat::Csv,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mechanism: MechanismConfig,
    pub experiment: RunConfig,
    pub laplace: LaplaceConfig,
    pub output: OutputConfig,
}

fn config_err(path: &str, msg: impl ToString) -> Error {
    Error::Config {
        path: path.to_string(),
        msg: msg.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let path = e.span().map_or_else(|| "<root>".to_string(), |s| locate(text, s.start));
            config_err(&path, e.message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.mechanism.build()?;
        let e = &self.experiment;
        if e.replicates < 1 {
            return Err(config_err("experiment.replicates", "must be at least 1"));
        }
        if e.t_grid.is_empty() || e.t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(config_err("experiment.t_grid", "must be a non-empty list of positive times"));
        }
        if e.t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config_err("experiment.t_grid", "must be strictly increasing"));
        }
        if e.n_scale < 10 {
            return Err(config_err("experiment.n_scale", "must be at least 10"));
        }
        if e.y.is_some_and(|y| !(y > 0.0)) {
            return Err(config_err("experiment.y", "must be positive"));
        }
        if !(e.kappa > 0.0) {
            return Err(config_err("experiment.kappa", "must be positive"));
        }
        if !(e.delta_imm >= 0.0) {
            return Err(config_err("experiment.delta_imm", "must be non-negative"));
        }
        let l = &self.laplace;
        if !(l.t > 0.0 && l.h > 0.0 && l.dt > 0.0 && l.x_hi > l.x_lo && l.width > 0.0) {
            return Err(config_err("laplace", "needs t, h, dt, width > 0 and x_hi > x_lo"));
        }
        if l.offset < 0.0 || l.amplitude < 0.0 {
            return Err(config_err("laplace", "test function must be non-negative"));
        }
        Ok(())
    }
}

/// Dotted key path of the table entry enclosing byte offset `pos`.
fn locate(text: &str, pos: usize) -> String {
    let mut section = String::new();
    let mut key = String::new();
    let mut offset = 0;
    for line in text.lines() {
        if offset > pos {
            break;
        }
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            section = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = trimmed.split_once('=') {
            key = k.trim().to_string();
        }
        offset += line.len() + 1;
    }
    match (section.is_empty(), key.is_empty()) {
        (true, true) => "<root>".to_string(),
        (true, false) => key,
        (false, true) => section,
        (false, false) => format!("{section}.{key}"),
    }
}
