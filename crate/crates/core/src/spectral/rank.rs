use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UfmError};
use crate::linalg::log2_exact;

/// Largest class count accepted by [`min_feasible_rank`].
pub const MAX_SEARCH_CLASSES: usize = 64;

/// Optimal gap below which a support counts as infeasible.
const GAP_TOL: f64 = 1e-9;

/// Smallest support in the Hadamard basis that admits a margin-separating
/// logit matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinRank {
    pub rank: usize,
    /// Mode indices (1-based) of the first feasible support found.
    pub support: Vec<usize>,
    /// Optimal weights on `support` from the linear program.
    pub weights: Vec<f64>,
    /// Optimal minimum gap achieved by `weights`.
    pub gap: f64,
    pub supports_checked: usize,
    /// Supports on which the two feasibility criteria disagreed.
    pub disagreements: Vec<Vec<usize>>,
}

/// Rank of a set of vectors over GF(2), given as bit masks.
pub fn gf2_rank(vectors: &[usize]) -> usize {
    let mut basis: Vec<usize> = Vec::new();
    for &v in vectors {
        let mut x = v;
        for &b in &basis {
            x = x.min(x ^ b);
        }
        if x != 0 {
            basis.push(x);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

/// Algebraic criterion: the support spans all of `F_2^m`.
pub fn spans_full_space(support: &[usize], m: u32) -> bool {
    gf2_rank(support) == m as usize
}

/// Linear-program criterion: maximize `t` subject to
/// `sum_u a_u (1 - Phi_{k u}) >= t` for every `k != 0`, with `a` on the unit
/// simplex over `support`. Returns the optimal `t` and weights.
pub fn support_gap(support: &[usize], k: usize) -> Result<(f64, Vec<f64>)> {
    let s = support.len();
    // variables: a_1..a_s, t
    let mut rows = Vec::with_capacity(k);
    let mut rhs = Vec::with_capacity(k);
    for class in 1..k {
        let mut row = vec![0.0; s + 1];
        for (col, &u) in support.iter().enumerate() {
            if (class & u).count_ones() % 2 == 1 {
                row[col] = -2.0;
            }
        }
        row[s] = 1.0;
        rows.push(row);
        rhs.push(0.0);
    }
    let mut total = vec![1.0; s + 1];
    total[s] = 0.0;
    rows.push(total);
    rhs.push(1.0);
    let mut objective = vec![0.0; s + 1];
    objective[s] = 1.0;
    let (value, x) = maximize(&objective, &rows, &rhs)?;
    Ok((value, x[..s].to_vec()))
}

/// Dense tableau simplex for `max c^T x` s.t. `A x <= b`, `x >= 0`, `b >= 0`,
/// using Bland's rule.
fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (m, n) = (a.len(), c.len());
    let width = n + m + 1;
    let mut tab = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        tab[i][..n].copy_from_slice(&a[i]);
        tab[i][n + i] = 1.0;
        tab[i][width - 1] = b[i];
    }
    for j in 0..n {
        tab[m][j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    const EPS: f64 = 1e-12;
    for _ in 0..10_000 {
        let Some(enter) = (0..width - 1).find(|&j| tab[m][j] < -EPS) else {
            let mut x = vec![0.0; n];
            for (i, &var) in basis.iter().enumerate() {
                if var < n {
                    x[var] = tab[i][width - 1];
                }
            }
            return Ok((tab[m][width - 1], x));
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if tab[i][enter] > EPS {
                let ratio = tab[i][width - 1] / tab[i][enter];
                let better = match leave {
                    None => true,
                    Some((r, best)) => {
                        ratio < best - EPS || (ratio <= best + EPS && basis[i] < basis[r])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, _)) = leave else {
            return Err(UfmError::InvalidArgument("linear program is unbounded".into()));
        };
        let pivot = tab[r][enter];
        tab[r].iter_mut().for_each(|v| *v /= pivot);
        let pivot_row = tab[r].clone();
        for (i, row) in tab.iter_mut().enumerate() {
            if i != r {
                let f = row[enter];
                if f != 0.0 {
                    row.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
                }
            }
        }
        basis[r] = enter;
    }
    Err(UfmError::InvalidArgument("simplex iteration limit reached".into()))
}

/// Searches supports of increasing size for the smallest one on which a
/// nonnegative combination of Hadamard modes separates every class, deciding
/// each support by both the linear program and the GF(2) span criterion.
pub fn min_feasible_rank(k: usize) -> Result<MinRank> {
    let m = log2_exact(k)?;
    if m == 0 {
        return Err(UfmError::InvalidArgument("need K >= 2".into()));
    }
    if k > MAX_SEARCH_CLASSES {
        return Err(UfmError::SearchTooLarge(format!(
            "K = {k} exceeds the exhaustive-search limit {MAX_SEARCH_CLASSES}"
        )));
    }
    let mut checked = 0usize;
    let mut disagreements = Vec::new();
    for size in 1..k {
        let mut found: Option<(Vec<usize>, f64, Vec<f64>)> = None;
        for support in (1..k).combinations(size) {
            checked += 1;
            let (gap, weights) = support_gap(&support, k)?;
            let lp = gap > GAP_TOL;
            if lp != spans_full_space(&support, m) {
                disagreements.push(support.clone());
            }
            if lp && found.is_none() {
                found = Some((support, gap, weights));
            }
        }
        if let Some((support, gap, weights)) = found {
            return Ok(MinRank {
                rank: size,
                support,
                weights,
                gap,
                supports_checked: checked,
                disagreements,
            });
        }
    }
    Err(UfmError::InvalidArgument(format!(
        "no feasible support for K = {k}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gf2_examples() {
        assert_eq!(gf2_rank(&[1, 2, 3]), 2);
        assert_eq!(gf2_rank(&[1, 2, 4]), 3);
        assert_eq!(gf2_rank(&[5, 6, 3]), 2);
        assert_eq!(gf2_rank(&[0]), 0);
    }

    #[test]
    fn lp_matches_hand_solution() {
        // K = 4, support {1, 2}: classes 1, 2, 3 see gaps 2a_1, 2a_2, 2(a_1 + a_2)
        let (gap, w) = support_gap(&[1, 2], 4).unwrap();
        assert!((gap - 1.0).abs() < 1e-12);
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
        let (gap, _) = support_gap(&[3], 4).unwrap();
        assert!(gap.abs() < 1e-12);
    }

    #[test]
    fn small_orders() {
        let r = min_feasible_rank(4).unwrap();
        assert_eq!(r.rank, 2);
        assert!(r.disagreements.is_empty());
        let r = min_feasible_rank(8).unwrap();
        assert_eq!((r.rank, r.support.as_slice()), (3, &[1usize, 2, 4][..]));
        assert!(min_feasible_rank(12).is_err());
        assert!(matches!(
            min_feasible_rank(128),
            Err(UfmError::SearchTooLarge(_))
        ));
    }
}
