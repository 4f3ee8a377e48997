//! Artifacts of the closed-form geometry checks.

use std::fs;
use std::path::Path;

use serde::Serialize;
use ufmlab_core::geometry::{cross_polytope_construction, cross_polytope_minimal_scale, dnc_construction, dnc_minimal_scale};
use ufmlab_core::linalg::DenseMatrix;
use ufmlab_core::model::ProblemSpec;

use crate::checks::{self, CheckReport};
use crate::config::GeometryCheck;
use crate::error::{io_at, Result};
use crate::runner::{file_entry, fmt_value, FileEntry};

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<FileEntry> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)?).map_err(io_at(&path))?;
    file_entry(dir, Path::new(name))
}

fn write_matrix(dir: &Path, name: &str, z: &DenseMatrix) -> Result<FileEntry> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    for i in 0..z.rows() {
        w.write_record(z.row(i).iter().map(|&x| fmt_value(x)))?;
    }
    w.flush().map_err(io_at(&path))?;
    file_entry(dir, Path::new(name))
}

/// Runs `check` and writes its tables into `dir`:
/// thm1 → `objectives.csv`, `constructions.json` and the two logit matrices of
/// the base spec; thm2 → `kgon.csv`; rank → `min_rank.json`.
pub fn write(check: GeometryCheck, spec: &ProblemSpec, dir: &Path) -> Result<(CheckReport, Vec<FileEntry>)> {
    let mut files = Vec::new();
    let report = match check {
        GeometryCheck::Thm1 => {
            let (rows, summaries) = checks::comparison_rows(&checks::comparison_grid(), spec.n, spec.d)?;
            let path = dir.join("objectives.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record([
                "depth",
                "k",
                "n",
                "dnc_objective",
                "cross_polytope_objective",
                "cross_polytope_wins",
                "dnc_feasible",
                "cross_polytope_feasible",
            ])?;
            for r in &rows {
                w.write_record([
                    r.depth.to_string(),
                    r.k.to_string(),
                    r.n.to_string(),
                    fmt_value(r.dnc_objective),
                    fmt_value(r.cross_polytope_objective),
                    r.cross_polytope_wins().to_string(),
                    r.dnc_feasible.to_string(),
                    r.cross_polytope_feasible.to_string(),
                ])?;
            }
            w.flush().map_err(io_at(&path))?;
            files.push(file_entry(dir, Path::new("objectives.csv"))?);
            files.push(write_json(dir, "constructions.json", &summaries)?);
            let dnc = dnc_construction(spec, dnc_minimal_scale(spec))?;
            let cp = cross_polytope_construction(spec, cross_polytope_minimal_scale(spec))?;
            files.push(write_matrix(dir, "logits_dnc.csv", &dnc.logits)?);
            files.push(write_matrix(dir, "logits_cross_polytope.csv", &cp.logits)?);
            checks::construction_grid()
        }
        GeometryCheck::Thm2 => {
            let rows = checks::kgon_argmins(3..=12, 1e-4)?;
            let path = dir.join("kgon.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["k", "argmin", "regular_gap", "min_objective"])?;
            for r in &rows {
                w.write_record([
                    r.k.to_string(),
                    fmt_value(r.argmin),
                    fmt_value(r.regular_gap),
                    fmt_value(r.min_objective),
                ])?;
            }
            w.flush().map_err(io_at(&path))?;
            files.push(file_entry(dir, Path::new("kgon.csv"))?);
            checks::kgon_minimizer()
        }
        GeometryCheck::Rank => {
            let results = checks::min_rank_results()?;
            files.push(write_json(dir, "min_rank.json", &results)?);
            checks::minimal_hadamard_rank()
        }
    };
    Ok((report, files))
}
