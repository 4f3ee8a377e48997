//! Executes experiment configs and writes their artifacts.
//!
//! Layout below `<output root>/<output_dir>`:
//! `runs/*.csv` (one log or trajectory per run), `runs.csv` (final metrics of
//! every run), `summary.csv` (aggregates per sweep value) and
//! `manifest.json` (config, seeds, content hashes, divergences, checks).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ufmlab_core::geometry::gram_factor_angles;
use ufmlab_core::linalg::{effective_rank, singular_values, DenseMatrix};
use ufmlab_core::model::{
    class_mean_logits, hadamard_init, random_init, train, ProblemSpec, TrainSchedule,
};
use ufmlab_core::spectral::{integrate, mixed_init, SpectralState, StepController};
use ufmlab_core::UfmError;

use crate::checks::{self, CheckReport};
use crate::concentration::concentration_metric;
use crate::config::{Experiment, ExperimentConfig, GeometryCheck, SpectralInit, TrainInit};
use crate::error::{io_at, HarnessError, Result};
use crate::geometry_report;

/// Environment variable overriding the output root.
pub const OUTPUT_ENV: &str = "UFMLAB_OUT";

pub const DEFAULT_OUTPUT_ROOT: &str = "ufmlab-out";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub output_root: PathBuf,
    pub workers: usize,
    pub scale_epochs: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            output_root: output_root(),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            scale_epochs: 1.0,
        }
    }
}

/// `$UFMLAB_OUT`, or `ufmlab-out` in the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Diverged { epoch: u64, reason: String },
    Failed { reason: String },
}

/// Final metrics of one run, aligned with [`metric_names`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub value: Option<f64>,
    pub repetition: usize,
    pub seed: u64,
    pub status: RunStatus,
    /// Relative to the experiment directory.
    pub file: Option<PathBuf>,
    pub metrics: Vec<f64>,
}

impl RunRecord {
    pub fn metric(&self, kind: &Experiment, name: &str) -> Option<f64> {
        let i = metric_names(kind).iter().position(|m| *m == name)?;
        self.metrics.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Aggregate {
    MeanStd,
    Min,
    Max,
    Sum,
}

const TRAIN_METRICS: [&str; 15] = [
    "final_epoch",
    "loss",
    "eff_rank",
    "mean_eff_rank",
    "kl",
    "raw_margin",
    "norm_margin",
    "balance_res",
    "dist_to_etf",
    "rank",
    "rank2",
    "min_gap",
    "max_gap",
    "halvings",
    "final_step",
];

const SPECTRAL_METRICS: [&str; 6] = [
    "t_final",
    "l1_norm",
    "eff_rank",
    "kl_initial",
    "kl_final",
    "dead_modes",
];

const CONCENTRATION_METRICS: [&str; 1] = ["metric"];

pub fn metric_names(kind: &Experiment) -> &'static [&'static str] {
    match kind {
        Experiment::Train { .. } => &TRAIN_METRICS,
        Experiment::Spectral { .. } => &SPECTRAL_METRICS,
        Experiment::Concentration { .. } => &CONCENTRATION_METRICS,
        Experiment::Geometry { .. } => &[],
    }
}

fn aggregates(kind: &Experiment) -> Vec<(&'static str, Aggregate)> {
    use Aggregate::*;
    match kind {
        Experiment::Train { .. } => vec![
            ("loss", MeanStd),
            ("eff_rank", MeanStd),
            ("mean_eff_rank", MeanStd),
            ("kl", MeanStd),
            ("norm_margin", MeanStd),
            ("dist_to_etf", MeanStd),
            ("rank2", Sum),
            ("min_gap", Min),
            ("max_gap", Max),
        ],
        Experiment::Spectral { .. } => SPECTRAL_METRICS.iter().map(|m| (*m, MeanStd)).collect(),
        Experiment::Concentration { .. } => vec![("metric", MeanStd)],
        Experiment::Geometry { .. } => vec![],
    }
}

/// Aggregates of the successful runs at one sweep value. Columns follow
/// [`summary_header`].
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub value: Option<f64>,
    pub runs: usize,
    pub ok: usize,
    pub columns: Vec<(String, f64)>,
}

impl SummaryRow {
    pub fn get(&self, column: &str) -> Option<f64> {
        self.columns.iter().find(|(c, _)| c == column).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub value: Option<f64>,
    pub repetition: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub value: Option<f64>,
    pub repetition: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub scale_epochs: f64,
    /// Content hash of the canonical config JSON.
    pub input_hash: String,
    pub seeds: Vec<SeedEntry>,
    pub files: Vec<FileEntry>,
    pub incidents: Vec<Incident>,
    pub checks: Vec<CheckReport>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub directory: PathBuf,
    pub manifest: Manifest,
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

impl RunReport {
    pub fn diverged(&self) -> bool {
        !self.manifest.incidents.is_empty()
    }

    pub fn checks_failed(&self) -> bool {
        self.manifest.checks.iter().any(|c| c.gating && !c.passed)
    }

    /// 0 when everything passed, 3 on a failed check, 2 when a run diverged
    /// or failed.
    pub fn exit_code(&self) -> i32 {
        if self.checks_failed() {
            3
        } else if self.diverged() {
            2
        } else {
            0
        }
    }
}

/// Git-style content hash: SHA-256 over `"blob <len>\0"` followed by the bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub(crate) fn fmt_value(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x}")
    }
}

fn value_tag(value: Option<f64>) -> String {
    value.map_or(String::new(), |v| format!("v{}_", fmt_value(v)))
}

/// Classified rank of the logits: `round(effective rank)` when the next
/// singular value is below `gap * sigma_1`, otherwise `None` (unclassified).
pub fn classify_rank(z: &DenseMatrix, zero_tol_rel: f64, gap: f64) -> Option<usize> {
    let sv = singular_values(z);
    let s = sv.values();
    if s.is_empty() || s[0] <= 0.0 {
        return None;
    }
    let r = effective_rank(&sv, zero_tol_rel * s[0]).ok()?.round() as usize;
    let next = s.get(r).copied().unwrap_or(0.0);
    (r >= 1 && next <= gap * s[0]).then_some(r)
}

/// Uniform `[0, 1)` entries rescaled to `l1_norm`, drawn from a ChaCha8
/// stream seeded with `seed`.
pub fn uniform_random_state(k: usize, depth: usize, l1_norm: f64, seed: u64) -> ufmlab_core::Result<SpectralState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (1..k).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    SpectralState::new(raw.iter().map(|x| x * l1_norm / total).collect(), k, depth)
}

struct Job {
    index: usize,
    value: Option<f64>,
    spec: ProblemSpec,
    experiment: Experiment,
    repetition: usize,
    seed: u64,
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_at(path))?))
}

fn status_of(err: UfmError) -> RunStatus {
    match err {
        UfmError::Divergence { epoch, reason } => RunStatus::Diverged { epoch, reason },
        other => RunStatus::Failed {
            reason: other.to_string(),
        },
    }
}

fn run_train(
    job: &Job,
    schedule: &TrainSchedule,
    init: &TrainInit,
    tol: &crate::config::Tolerances,
    dir: &Path,
) -> Result<(RunStatus, Option<PathBuf>, Vec<f64>)> {
    let nan = vec![f64::NAN; TRAIN_METRICS.len()];
    let params = match init {
        TrainInit::Random { eps } => random_init(&job.spec, *eps, job.seed),
        TrainInit::Hadamard { alpha } => hadamard_init(&job.spec, alpha, job.seed),
    };
    let outcome = match params.and_then(|p| train(p, &job.spec, schedule)) {
        Ok(o) => o,
        Err(e) => return Ok((status_of(e), None, nan)),
    };
    let rel = PathBuf::from("runs").join(format!(
        "{}rep{}_seed{}.csv",
        value_tag(job.value),
        job.repetition,
        job.seed
    ));
    let mut w = create_file(&dir.join(&rel))?;
    outcome.log.write_csv(job.spec.depth, &mut w)?;
    w.flush().map_err(io_at(dir.join(&rel)))?;

    let last = outcome.log.last().expect("at least one row");
    let z = outcome.params.logits();
    let mean_sv = singular_values(&class_mean_logits(&z, job.spec.n));
    let mean_eff_rank =
        effective_rank(&mean_sv, tol.zero_tol_rel * mean_sv.largest()).unwrap_or(f64::NAN);
    let rank = classify_rank(&z, tol.zero_tol_rel, tol.rank_gap);
    let (min_gap, max_gap) = match rank {
        Some(2) => match gram_factor_angles(&z, job.spec.n) {
            Ok(g) => (g[0], g[g.len() - 1]),
            Err(_) => (f64::NAN, f64::NAN),
        },
        _ => (f64::NAN, f64::NAN),
    };
    let metrics = vec![
        last.epoch as f64,
        last.loss,
        last.eff_rank,
        mean_eff_rank,
        last.kl,
        last.raw_margin,
        last.norm_margin,
        last.balance_res,
        last.dist_to_etf,
        rank.map_or(f64::NAN, |r| r as f64),
        if rank == Some(2) { 1.0 } else { 0.0 },
        min_gap,
        max_gap,
        outcome.halvings as f64,
        outcome.final_step_size,
    ];
    Ok((RunStatus::Ok, Some(rel), metrics))
}

fn run_spectral(
    job: &Job,
    t_end: f64,
    init: &SpectralInit,
    controller: &StepController,
    tol: &crate::config::Tolerances,
    dir: &Path,
) -> Result<(RunStatus, Option<PathBuf>, Vec<f64>)> {
    let nan = vec![f64::NAN; SPECTRAL_METRICS.len()];
    let (k, depth) = (job.spec.k, job.spec.depth);
    let state = match init {
        SpectralInit::UniformRandom { l1_norm } => uniform_random_state(k, depth, *l1_norm, job.seed),
        SpectralInit::Mixed { gamma, delta } => mixed_init(k, depth, *gamma, *delta),
        SpectralInit::Explicit { a } => SpectralState::new(a.clone(), k, depth),
    };
    let traj = match state.and_then(|s| integrate(&s, t_end, controller)) {
        Ok(t) => t,
        Err(e) => return Ok((status_of(e), None, nan)),
    };
    let rel = PathBuf::from("runs").join(format!(
        "{}rep{}_seed{}.csv",
        value_tag(job.value),
        job.repetition,
        job.seed
    ));
    let mut w = create_file(&dir.join(&rel))?;
    traj.write_csv(&mut w)?;
    w.flush().map_err(io_at(dir.join(&rel)))?;
    let (first, last) = (traj.first(), traj.last());
    let dead = last.a_hat.iter().filter(|&&x| x < tol.dead_mode).count();
    let metrics = vec![
        last.t,
        last.l1_norm,
        last.eff_rank,
        first.kl,
        last.kl,
        dead as f64,
    ];
    Ok((RunStatus::Ok, Some(rel), metrics))
}

fn execute(job: &Job, config: &ExperimentConfig, dir: &Path) -> Result<RunRecord> {
    let (status, file, metrics) = match &job.experiment {
        Experiment::Train { schedule, init } => {
            run_train(job, schedule, init, &config.tolerances, dir)?
        }
        Experiment::Spectral {
            t_end,
            init,
            controller,
        } => run_spectral(job, *t_end, init, controller, &config.tolerances, dir)?,
        Experiment::Concentration { eps } => {
            match concentration_metric(&job.spec, *eps, job.seed) {
                Ok(m) => (RunStatus::Ok, None, vec![m]),
                Err(e) => (status_of(e), None, vec![f64::NAN]),
            }
        }
        Experiment::Geometry { .. } => unreachable!("geometry configs have no runs"),
    };
    Ok(RunRecord {
        value: job.value,
        repetition: job.repetition,
        seed: job.seed,
        status,
        file,
        metrics,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per sweep value: mean and sample standard deviation (or min / max / sum)
/// over the finite metric values of successful runs.
pub fn summarize(kind: &Experiment, values: &[Option<f64>], records: &[RunRecord]) -> Vec<SummaryRow> {
    let names = metric_names(kind);
    values
        .iter()
        .map(|&value| {
            let group: Vec<&RunRecord> = records.iter().filter(|r| r.value == value).collect();
            let ok: Vec<&&RunRecord> = group.iter().filter(|r| r.status == RunStatus::Ok).collect();
            let mut columns = Vec::new();
            for (metric, agg) in aggregates(kind) {
                let i = names.iter().position(|m| *m == metric).expect("known metric");
                let xs: Vec<f64> = ok.iter().map(|r| r.metrics[i]).filter(|x| x.is_finite()).collect();
                match agg {
                    Aggregate::MeanStd => {
                        let (m, s) = mean_std(&xs);
                        columns.push((format!("{metric}_mean"), m));
                        columns.push((format!("{metric}_std"), s));
                    }
                    Aggregate::Min => columns.push((
                        format!("{metric}_min"),
                        xs.iter().copied().reduce(f64::min).unwrap_or(f64::NAN),
                    )),
                    Aggregate::Max => columns.push((
                        format!("{metric}_max"),
                        xs.iter().copied().reduce(f64::max).unwrap_or(f64::NAN),
                    )),
                    Aggregate::Sum => columns.push((format!("{metric}_sum"), xs.iter().sum())),
                }
            }
            SummaryRow {
                value,
                runs: group.len(),
                ok: ok.len(),
                columns,
            }
        })
        .collect()
}

fn write_runs_csv(path: &Path, kind: &Experiment, variable: &str, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![variable.to_string(), "repetition".into(), "seed".into(), "status".into(), "file".into()];
    header.extend(metric_names(kind).iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    for r in records {
        let status = match &r.status {
            RunStatus::Ok => "ok",
            RunStatus::Diverged { .. } => "diverged",
            RunStatus::Failed { .. } => "failed",
        };
        let mut row = vec![
            r.value.map_or(String::new(), fmt_value),
            r.repetition.to_string(),
            r.seed.to_string(),
            status.to_string(),
            r.file.as_ref().map_or(String::new(), |f| f.display().to_string()),
        ];
        row.extend(r.metrics.iter().map(|&m| fmt_value(m)));
        w.write_record(&row)?;
    }
    w.flush().map_err(io_at(path))?;
    Ok(())
}

fn write_summary_csv(path: &Path, variable: &str, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![variable.to_string(), "runs".into(), "ok".into()];
    if let Some(first) = rows.first() {
        header.extend(first.columns.iter().map(|(c, _)| c.clone()));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![
            r.value.map_or(String::new(), fmt_value),
            r.runs.to_string(),
            r.ok.to_string(),
        ];
        row.extend(r.columns.iter().map(|(_, v)| fmt_value(*v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(io_at(path))?;
    Ok(())
}

pub(crate) fn file_entry(dir: &Path, rel: &Path) -> Result<FileEntry> {
    let bytes = fs::read(dir.join(rel)).map_err(io_at(dir.join(rel)))?;
    Ok(FileEntry {
        path: rel.to_path_buf(),
        bytes: bytes.len() as u64,
        sha256: content_hash(&bytes),
    })
}

/// Runs every `(sweep value, repetition)` of `config` and writes the
/// artifacts. Divergent runs are recorded and the remaining runs continue.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    let config = config.with_scaled_epochs(opts.scale_epochs)?;
    config.validate()?;
    let dir = opts.output_root.join(&config.output_dir);
    fs::create_dir_all(dir.join("runs")).map_err(io_at(&dir))?;
    let input_hash = content_hash(&serde_json::to_vec(&(&config, opts.scale_epochs))?);
    let variable = config.sweep.as_ref().map_or("value", |s| s.variable.label());

    let mut files = Vec::new();
    let mut checks_run = Vec::new();
    let mut records = Vec::new();
    let mut summary = Vec::new();
    let mut seeds = Vec::new();

    if let Experiment::Geometry { check } = config.experiment {
        let (report, written) = geometry_report::write(check, &config.spec, &dir)?;
        checks_run.push(report);
        files.extend(written);
    } else {
        let points = config.points()?;
        let jobs: Vec<Job> = points
            .iter()
            .flat_map(|p| (0..config.repetitions).map(move |rep| (p, rep)))
            .enumerate()
            .map(|(index, (p, rep))| Job {
                index,
                value: p.value,
                spec: p.spec,
                experiment: p.experiment.clone(),
                repetition: rep,
                seed: config.master_seed.wrapping_add(index as u64),
            })
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers.max(1))
            .build()
            .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
        let results: Vec<Result<RunRecord>> =
            pool.install(|| jobs.par_iter().map(|j| execute(j, &config, &dir)).collect());
        for (job, r) in jobs.iter().zip(results) {
            debug_assert_eq!(job.index, records.len());
            records.push(r?);
        }
        seeds = records
            .iter()
            .map(|r| SeedEntry {
                value: r.value,
                repetition: r.repetition,
                seed: r.seed,
            })
            .collect();
        let values: Vec<Option<f64>> = points.iter().map(|p| p.value).collect();
        summary = summarize(&config.experiment, &values, &records);
        write_runs_csv(&dir.join("runs.csv"), &config.experiment, variable, &records)?;
        write_summary_csv(&dir.join("summary.csv"), variable, &summary)?;
        for r in &records {
            if let Some(f) = &r.file {
                files.push(file_entry(&dir, f)?);
            }
        }
        files.push(file_entry(&dir, Path::new("runs.csv"))?);
        files.push(file_entry(&dir, Path::new("summary.csv"))?);
    }

    let incidents = records
        .iter()
        .filter(|r| r.status != RunStatus::Ok)
        .map(|r| Incident {
            value: r.value,
            repetition: r.repetition,
            seed: r.seed,
            status: r.status.clone(),
        })
        .collect();
    let manifest = Manifest {
        name: config.name.clone(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        scale_epochs: opts.scale_epochs,
        input_hash,
        seeds,
        files,
        incidents,
        checks: checks_run,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io_at(&path))?;
    Ok(RunReport {
        directory: dir,
        manifest,
        records,
        summary,
    })
}

/// Runs the geometry check without writing anything.
pub fn geometry_check(check: GeometryCheck) -> CheckReport {
    match check {
        GeometryCheck::Thm1 => checks::construction_grid(),
        GeometryCheck::Thm2 => checks::kgon_minimizer(),
        GeometryCheck::Rank => checks::minimal_hadamard_rank(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ufmlab_core::geometry::kgon_code;
    use ufmlab_core::linalg::simplex_etf;

    #[test]
    fn hash_matches_git_blob_layout() {
        // sha256 of "blob 0\0"
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn rank_classification() {
        let spec = ProblemSpec::new(8, 2, 8, 2).unwrap();
        let kgon = kgon_code(&spec, 1.5, 0.0).unwrap();
        assert_eq!(classify_rank(&kgon.logits, 1e-12, 1e-3), Some(2));
        let etf = simplex_etf(8).unwrap().kron_ones(2);
        assert_eq!(classify_rank(&etf, 1e-12, 1e-3), Some(7));
        let mixed = DenseMatrix::diag(&[1.0, 0.5, 0.01, 0.0]);
        assert_eq!(classify_rank(&mixed, 1e-12, 1e-3), None);
    }

    #[test]
    fn summary_statistics() {
        let kind = Experiment::Concentration { eps: 0.01 };
        let rec = |value, m, status| RunRecord {
            value: Some(value),
            repetition: 0,
            seed: 0,
            status,
            file: None,
            metrics: vec![m],
        };
        let records = vec![
            rec(1.0, 1.0, RunStatus::Ok),
            rec(1.0, 3.0, RunStatus::Ok),
            rec(1.0, 100.0, RunStatus::Failed { reason: "x".into() }),
            rec(2.0, 5.0, RunStatus::Ok),
        ];
        let rows = summarize(&kind, &[Some(1.0), Some(2.0)], &records);
        assert_eq!((rows[0].runs, rows[0].ok), (3, 2));
        assert_eq!(rows[0].get("metric_mean"), Some(2.0));
        assert!((rows[0].get("metric_std").unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rows[1].get("metric_std"), Some(0.0));
    }
}
