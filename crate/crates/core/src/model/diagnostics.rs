use std::io::Write;

use serde::{Deserialize, Serialize};

use super::params::{ModelParams, ProblemSpec};
use crate::error::{Result, UfmError};
use crate::linalg::{
    direction_distance, effective_rank, kl_to_uniform, simplex_etf, singular_values, DenseMatrix,
};

/// `max_l || W^_l^T W^_l - W^_{l-1} W^_{l-1}^T ||_F` over Frobenius-normalized
/// factors.
pub fn balancedness_residual(params: &ModelParams) -> Result<f64> {
    let normed: Vec<DenseMatrix> = params
        .layers()
        .iter()
        .map(DenseMatrix::normalized)
        .collect::<Result<_>>()?;
    Ok(normed
        .windows(2)
        .map(|w| w[1].gram().sub(&w[0].outer_gram()).frobenius_norm())
        .fold(0.0, f64::max))
}

/// Smallest correct-minus-other logit gap, raw and after dividing `Z` by its
/// Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub min_raw: f64,
    pub min_normalized: f64,
}

pub fn margins(z: &DenseMatrix, spec: &ProblemSpec) -> Margins {
    let (k, cols) = z.shape();
    let mut min_raw = f64::INFINITY;
    for j in 0..cols {
        let c = spec.class_of(j);
        let other = (0..k)
            .filter(|&i| i != c)
            .map(|i| z[(i, j)])
            .fold(f64::NEG_INFINITY, f64::max);
        min_raw = min_raw.min(z[(c, j)] - other);
    }
    let norm = z.frobenius_norm();
    let min_normalized = if norm > 0.0 { min_raw / norm } else { 0.0 };
    Margins {
        min_raw,
        min_normalized,
    }
}

/// `K x K` matrix of per-class mean logit columns.
pub fn class_mean_logits(z: &DenseMatrix, n: usize) -> DenseMatrix {
    let k = z.rows();
    DenseMatrix::from_fn(k, z.cols() / n, |i, c| {
        (0..n).map(|s| z[(i, c * n + s)]).sum::<f64>() / n as f64
    })
}

/// Singular values of `Z` restricted to the leading `K - 1` modes and
/// normalized to sum one.
pub fn normalized_modes(z: &DenseMatrix) -> Result<Vec<f64>> {
    let sv = singular_values(z);
    let keep = z.rows().saturating_sub(1).max(1).min(sv.len());
    let head = &sv.values()[..keep];
    let total: f64 = head.iter().sum();
    if total <= 0.0 {
        return Err(UfmError::ZeroSpectrum);
    }
    Ok(head.iter().map(|s| s / total).collect())
}

/// One logged row of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub epoch: u64,
    pub loss: f64,
    pub layer_norms: Vec<f64>,
    pub logit_norm: f64,
    pub eff_rank: f64,
    pub kl: f64,
    pub raw_margin: f64,
    pub norm_margin: f64,
    pub balance_res: f64,
    pub dist_to_etf: f64,
}

impl RunRow {
    /// Evaluates every logged diagnostic at the current parameters.
    pub fn measure(params: &ModelParams, spec: &ProblemSpec, epoch: u64, loss: f64) -> Self {
        let z = params.logits();
        let sv = singular_values(&z);
        let eff_rank = effective_rank(&sv, sv.default_zero_tol()).unwrap_or(f64::NAN);
        let kl = normalized_modes(&z)
            .and_then(|m| kl_to_uniform(&m))
            .unwrap_or(f64::NAN);
        let m = margins(&z, spec);
        let target = simplex_etf(spec.k).expect("K >= 2").kron_ones(spec.n);
        Self {
            epoch,
            loss,
            layer_norms: params.frobenius_norms(),
            logit_norm: z.frobenius_norm(),
            eff_rank,
            kl,
            raw_margin: m.min_raw,
            norm_margin: m.min_normalized,
            balance_res: balancedness_residual(params).unwrap_or(f64::NAN),
            dist_to_etf: direction_distance(&z, &target).unwrap_or(f64::NAN),
        }
    }
}

/// Diagnostics logged during training, one row per logging window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub rows: Vec<RunRow>,
}

pub(crate) fn fmt_float(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

impl RunLog {
    pub fn header(depth: usize) -> Vec<String> {
        let mut h = vec!["epoch".to_string(), "loss".to_string()];
        h.extend((0..=depth).map(|l| format!("fro_W{l}")));
        h.extend(
            [
                "fro_Z",
                "eff_rank",
                "kl",
                "raw_margin",
                "norm_margin",
                "balance_res",
                "dist_to_ETF",
            ]
            .map(String::from),
        );
        h
    }

    pub fn last(&self) -> Option<&RunRow> {
        self.rows.last()
    }

    /// Writes the log as CSV. Infinite KL values are written as `inf`.
    pub fn write_csv<W: Write>(&self, depth: usize, out: W) -> Result<()> {
        let io = |e: csv::Error| UfmError::InvalidArgument(format!("csv output: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(depth)).map_err(io)?;
        for r in &self.rows {
            let mut rec = vec![r.epoch.to_string(), fmt_float(r.loss)];
            rec.extend(r.layer_norms.iter().map(|&x| fmt_float(x)));
            rec.extend(
                [
                    r.logit_norm,
                    r.eff_rank,
                    r.kl,
                    r.raw_margin,
                    r.norm_margin,
                    r.balance_res,
                    r.dist_to_etf,
                ]
                .map(fmt_float),
            );
            w.write_record(rec).map_err(io)?;
        }
        w.flush()
            .map_err(|e| UfmError::InvalidArgument(format!("csv output: {e}")))?;
        Ok(())
    }
}
