use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use clap::{Args, Parser, Subcommand};

use ufmlab::checks::{self, CheckReport};
use ufmlab::config::{Experiment, Sweep, SweepVariable};
use ufmlab::presets::figure_presets;
use ufmlab::runner::output_root;
use ufmlab::{preset, run, ExperimentConfig, GeometryCheck, HarnessError, RunOptions, RunReport};

/// Deep unconstrained features model experiments.
///
/// Artifacts go below $UFMLAB_OUT (default ./ufmlab-out). Exit status: 0 when
/// everything passed, 2 when a run diverged, 3 when a check failed, 1 on
/// other errors.
#[derive(Parser)]
#[command(name = "ufmlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Exec {
    /// Multiply both training phases by this factor.
    #[arg(long, default_value_t = 1.0)]
    scale_epochs: f64,
    /// Concurrent runs (defaults to the number of CPUs).
    #[arg(long)]
    workers: Option<usize>,
}

impl Exec {
    fn options(&self) -> RunOptions {
        let mut opts = RunOptions {
            scale_epochs: self.scale_epochs,
            ..RunOptions::default()
        };
        if let Some(w) = self.workers {
            opts.workers = w;
        }
        opts
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the full model as described by a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        exec: Exec,
    },
    /// Integrate the reduced singular-value dynamics from a JSON config.
    Spectral {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Closed-form geometry checks.
    Geometry {
        #[arg(long, value_enum)]
        check: GeometryCheck,
    },
    /// Initial-velocity alignment with the simplex across widths.
    Concentration {
        #[arg(long, value_delimiter = ',', default_values_t = [64, 256, 1024])]
        widths: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
    },
    /// Run a built-in preset, or print it with --dump.
    Preset {
        name: String,
        #[arg(long)]
        dump: bool,
        #[command(flatten)]
        exec: Exec,
    },
    /// Print a preset as an editable JSON config.
    DumpPreset { name: String },
    /// Run the presets behind a figure, then render it if `plots/render` exists.
    Figure {
        name: String,
        #[command(flatten)]
        exec: Exec,
    },
    /// Run the numerical acceptance checks whose name contains FILTER.
    Check {
        filter: Option<String>,
        /// Also run the long depth sweep and the planar-code recovery.
        #[arg(long)]
        all: bool,
    },
}

fn summarize(report: &RunReport) -> u8 {
    let ok = report.records.iter().filter(|r| r.status == ufmlab::runner::RunStatus::Ok).count();
    println!(
        "{}: {ok}/{} runs ok, artifacts in {}",
        report.manifest.name,
        report.records.len(),
        report.directory.display()
    );
    for i in &report.manifest.incidents {
        println!("  incident at value {:?} repetition {} (seed {}): {:?}", i.value, i.repetition, i.seed, i.status);
    }
    for c in &report.manifest.checks {
        println!("{}", c.line());
    }
    report.exit_code() as u8
}

fn run_kind(config: &ExperimentConfig, opts: &RunOptions, spectral: bool) -> Result<u8, HarnessError> {
    let is_spectral = matches!(config.experiment, Experiment::Spectral { .. });
    if is_spectral != spectral {
        let want = if spectral { "spectral" } else { "train" };
        return Err(HarnessError::Config(format!(
            "{} is not a {want} config; use the matching subcommand",
            config.name
        )));
    }
    Ok(summarize(&run(config, opts)?))
}

fn render(figure: &str, dirs: &[PathBuf]) -> Result<(), HarnessError> {
    let renderer = Path::new("plots/render");
    if !renderer.exists() {
        println!("plots/render not found; skipping rendering of {figure}");
        return Ok(());
    }
    let out = output_root().join("figures");
    for dir in dirs {
        let status = Command::new(renderer)
            .arg(figure)
            .arg("--in")
            .arg(dir)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| HarnessError::Io {
                path: renderer.to_path_buf(),
                source: e,
            })?;
        if !status.success() {
            return Err(HarnessError::Config(format!("renderer failed on {}", dir.display())));
        }
    }
    Ok(())
}

type Named = (&'static str, Box<dyn Fn() -> CheckReport>);

fn all_checks(filter: Option<&str>, long: bool) -> Vec<CheckReport> {
    let workers = RunOptions::default().workers;
    let root = output_root().join("checks");
    let fast: Vec<Named> = vec![
        ("gradient", Box::new(checks::gradient)),
        ("oracle", Box::new(checks::oracle)),
        ("thm1", Box::new(checks::construction_grid)),
        ("kgon", Box::new(checks::kgon_minimizer)),
        ("rank", Box::new(checks::minimal_hadamard_rank)),
        ("rich", Box::new(checks::rich_get_richer)),
        ("stability", Box::new(checks::stability)),
        ("kl", Box::new(checks::kl_trajectory)),
        ("concentration", Box::new(checks::concentration)),
        ("softmax", Box::new(checks::softmax_hadamard)),
    ];
    let root2 = root.clone();
    let slow: Vec<Named> = vec![
        ("depth", Box::new(move || checks::depth_sweep(&root, workers))),
        ("recovery", Box::new(move || checks::kgon_recovery(&root2, workers))),
    ];
    let chosen = fast.into_iter().chain(if long { slow } else { Vec::new() });
    chosen
        .filter(|(key, _)| filter.is_none_or(|f| key.contains(f)))
        .map(|(_, f)| {
            let r = f();
            println!("{}", r.line());
            r
        })
        .collect()
}

fn dispatch(cmd: Cmd) -> Result<u8, HarnessError> {
    match cmd {
        Cmd::Train { config, exec } => run_kind(&ExperimentConfig::load(&config)?, &exec.options(), false),
        Cmd::Spectral { config, workers } => {
            let exec = Exec {
                scale_epochs: 1.0,
                workers,
            };
            run_kind(&ExperimentConfig::load(&config)?, &exec.options(), true)
        }
        Cmd::Geometry { check } => {
            let name = match check {
                GeometryCheck::Thm1 => "thm1-grid",
                GeometryCheck::Thm2 => "thm2-kgon",
                GeometryCheck::Rank => "prop-rank",
            };
            Ok(summarize(&run(&preset(name)?, &RunOptions::default())?))
        }
        Cmd::Concentration { widths, seeds, eps } => {
            let mut config = preset("concentration")?;
            config.experiment = Experiment::Concentration { eps };
            config.repetitions = seeds;
            config.sweep = Some(Sweep {
                variable: SweepVariable::Width,
                values: widths.iter().map(|&w| w as f64).collect(),
            });
            config.validate()?;
            let report = run(&config, &RunOptions::default())?;
            println!("d,mean,std");
            for row in &report.summary {
                println!(
                    "{},{},{}",
                    row.value.unwrap_or(f64::NAN),
                    row.get("metric_mean").unwrap_or(f64::NAN),
                    row.get("metric_std").unwrap_or(f64::NAN)
                );
            }
            Ok(report.exit_code() as u8)
        }
        Cmd::Preset { name, dump, exec } => {
            let config = preset(&name)?;
            if dump {
                println!("{}", config.to_json()?);
                return Ok(0);
            }
            Ok(summarize(&run(&config, &exec.options())?))
        }
        Cmd::DumpPreset { name } => {
            println!("{}", preset(&name)?.to_json()?);
            Ok(0)
        }
        Cmd::Figure { name, exec } => {
            let names = figure_presets(&name)
                .ok_or_else(|| HarnessError::Config(format!("unknown figure {name:?}")))?;
            let mut code = 0;
            let mut dirs = Vec::new();
            for p in names {
                let report = run(&preset(p)?, &exec.options())?;
                code = code.max(summarize(&report));
                dirs.push(report.directory);
            }
            render(&name, &dirs)?;
            Ok(code)
        }
        Cmd::Check { filter, all } => {
            let reports = all_checks(filter.as_deref(), all);
            Ok(if reports.iter().any(|r| r.gating && !r.passed) { 3 } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
