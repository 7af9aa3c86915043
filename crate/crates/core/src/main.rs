use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use sbm_lab::experiments::acceptance::{run_all, DEFAULT_SEED};
use sbm_lab::experiments::runner::{run_ensemble, write_outputs};
use sbm_lab::experiments::{ExperimentConfig, ExperimentKind, OutputFormat};
use sbm_lab::loglaplace::solve_log_laplace;
use sbm_lab::mechanism::{check_conditions, derive_constants, skeleton_offspring, DEFAULT_K_MAX};

#[derive(Parser)]
#[command(name = "sbmlab", version, about = "Monte Carlo lab for supercritical super-Brownian motion")]
struct Cli {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Also write the immigration log of skeleton runs.
    #[arg(long, global = true)]
    trace: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKind {
    Bbm,
    Sbm,
    Skeleton,
    Spine,
}

#[derive(Subcommand)]
enum Command {
    /// Print the derived constants, skeleton offspring law and integrability checks.
    Derive,
    /// Run an ensemble and write per-replicate rows or a summary.
    Simulate {
        #[arg(value_enum)]
        kind: SimKind,
        /// Barrier depth.
        #[arg(long)]
        y: Option<f64>,
        /// Comma-separated observation times.
        #[arg(long, value_delimiter = ',')]
        t_grid: Option<Vec<f64>>,
        #[arg(long)]
        n_scale: Option<usize>,
    },
    /// Solve the log-Laplace equation for the configured test function and write u(., t).
    Laplace,
    /// Run the acceptance suite.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> sbm_lab::Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.experiment.seed = s;
    }
    if let Some(r) = cli.replicates {
        cfg.experiment.replicates = r;
    }
    if let Some(d) = &cli.out_dir {
        cfg.output.dir = d.clone();
    }
    if let Some(f) = cli.format {
        cfg.output.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    cfg.output.trace |= cli.trace;

    match cli.command {
        Command::Derive => {
            let mech = cfg.mechanism.build()?;
            let d = derive_constants(&mech)?;
            let law = skeleton_offspring(&mech, &d, DEFAULT_K_MAX)?;
            let out = json!({
                "mechanism": cfg.mechanism,
                "derived_constants": d,
                "skeleton_offspring": law.pmf,
                "conditions": check_conditions(&mech, &d),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Simulate { kind, y, t_grid, n_scale } => {
            let e = &mut cfg.experiment;
            e.kind = match kind {
                SimKind::Bbm => ExperimentKind::Bbm,
                SimKind::Sbm => ExperimentKind::Sbm,
                SimKind::Skeleton => ExperimentKind::Skeleton,
                SimKind::Spine => ExperimentKind::Spine,
            };
            if y.is_some() {
                e.y = y;
            }
            if let Some(t) = t_grid {
                e.t_grid = t;
            }
            if let Some(n) = n_scale {
                e.n_scale = n;
            }
            let output = run_ensemble(&cfg, cli.threads)?;
            for path in write_outputs(&output, &cfg.output.dir, cfg.output.format, cfg.output.trace)? {
                eprintln!("wrote {}", path.display());
            }
            for c in &output.summary.checks {
                eprintln!(
                    "{:<28} {:>12.6} target {:>10.6} tol {:.3e} {}",
                    c.name,
                    c.value,
                    c.target,
                    c.tolerance,
                    if c.pass { "ok" } else { "OFF" }
                );
            }
        }
        Command::Laplace => {
            cfg.validate()?;
            let mech = cfg.mechanism.build()?;
            let l = &cfg.laplace;
            let grid = l.grid();
            let sol = solve_log_laplace(&mech, &grid.sample(|x| l.f(x)), l.t, &grid)?;
            std::fs::create_dir_all(&cfg.output.dir)?;
            let path = match cfg.output.format {
                OutputFormat::Csv => {
                    let mut s = String::from("x,f,u\n");
                    for (&x, &u) in sol.x.iter().zip(sol.final_values()) {
                        let _ = writeln!(s, "{x},{:e},{u:e}", l.f(x));
                    }
                    let p = cfg.output.dir.join("laplace.csv");
                    std::fs::write(&p, s)?;
                    p
                }
                OutputFormat::Json => {
                    let out = json!({
                        "config": cfg,
                        "t": l.t,
                        "x": sol.x,
                        "u": sol.final_values(),
                        "iterations": sol.iteration_count,
                        "residual": sol.residual,
                    });
                    let p = cfg.output.dir.join("laplace.json");
                    std::fs::write(&p, serde_json::to_string_pretty(&out)?)?;
                    p
                }
            };
            eprintln!("wrote {} (residual {:.2e})", path.display(), sol.residual);
        }
        Command::Verify => {
            let seed = cli.seed.unwrap_or(DEFAULT_SEED);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cli.threads.unwrap_or(0))
                .build()
                .map_err(|e| sbm_lab::Error::Domain(format!("thread pool: {e}")))?;
            let reports = pool.install(|| run_all(seed, |r| print!("{r}")))?;
            println!();
            for r in &reports {
                println!("{}", r.headline());
            }
            if reports.iter().all(|r| r.enforced_pass()) {
                return Ok(ExitCode::SUCCESS);
            }
            return Ok(ExitCode::FAILURE);
        }
    }
    Ok(ExitCode::SUCCESS)
}
