//! Choosing which grid rows of the design matrix to keep.
//!
//! The deterministic route runs QR with column pivoting on `A^T` using
//! modified Gram-Schmidt, downdated column norms and a reorthogonalization
//! sweep. Subset selection applies the same pivoting to the leading singular
//! vectors, and the randomized baseline draws rows uniformly without
//! replacement.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indexset::IndexSet;
use crate::tensorgrid::{DesignMatrix, TensorGrid};

/// Columns whose norms are within this relative distance of the maximum are tied.
pub const TIE_TOLERANCE: f64 = 1e-14;

/// Below this value of `1 - (projection / norm)^2` a downdated norm is recomputed.
pub const DOWNDATE_GUARD: f64 = 1e-12;

/// A pivot norm below this fraction of the largest initial norm aborts.
pub const RANK_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMethod {
    QrPivot,
    SubsetSelection,
    Randomized,
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qr-pivot" | "effective" => Ok(SelectionMethod::QrPivot),
            "subset-selection" => Ok(SelectionMethod::SubsetSelection),
            "randomized" => Ok(SelectionMethod::Randomized),
            other => Err(Error::InvalidArgument(format!("unknown selection method `{other}`"))),
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMethod::QrPivot => "qr-pivot",
            SelectionMethod::SubsetSelection => "subset-selection",
            SelectionMethod::Randomized => "randomized",
        })
    }
}

/// A permutation of grid rows whose first `selected` entries are the chosen rows.
///
/// Row numbers are 0-based grid indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotSelection {
    pub pivots: Vec<usize>,
    pub selected: usize,
    pub method: SelectionMethod,
    pub seed: Option<u64>,
    /// Pivot steps at which more than one column attained the maximum norm,
    /// with the number of tied candidates.
    pub ties: Vec<(usize, usize)>,
}

impl PivotSelection {
    pub fn selected_rows(&self) -> &[usize] {
        &self.pivots[..self.selected]
    }
}

/// Result of a norm downdate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormUpdate {
    Updated(f64),
    /// Cancellation is too severe; recompute from the column entries.
    Recompute,
}

/// `norm * sqrt(1 - (projection / norm)^2)`, or [`NormUpdate::Recompute`]
/// when the factor under the root drops below [`DOWNDATE_GUARD`].
pub fn downdate_norm(norm: f64, projection: f64) -> NormUpdate {
    if norm <= 0.0 {
        return NormUpdate::Recompute;
    }
    let r = projection / norm;
    let factor = 1.0 - r * r;
    if factor < DOWNDATE_GUARD {
        NormUpdate::Recompute
    } else {
        NormUpdate::Updated(norm * factor.sqrt())
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Position of the largest entry. Near-ties go to the entry with the lowest
/// label (the original column number), so the choice does not depend on
/// earlier swaps. Also returns how many entries were tied.
fn argmax_lowest(values: &[f64], labels: &[usize]) -> (usize, usize) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = max * (1.0 - TIE_TOLERANCE);
    let mut best: Option<usize> = None;
    let mut count = 0;
    for (i, &v) in values.iter().enumerate() {
        if v >= threshold {
            count += 1;
            if best.is_none_or(|b| labels[i] < labels[b]) {
                best = Some(i);
            }
        }
    }
    (best.unwrap_or(0), count)
}

/// QR column pivoting on an `n x m` matrix (`m >= n`), returning the column
/// permutation. Only the first `n` pivots are computed; the rest of the
/// permutation is whatever order the swaps left behind.
pub fn qr_column_pivot(at: &DMatrix<f64>) -> Result<PivotSelection> {
    qr_column_pivot_owned(at.clone())
}

/// As [`qr_column_pivot`], overwriting the input in place.
pub fn qr_column_pivot_owned(mut at: DMatrix<f64>) -> Result<PivotSelection> {
    let (n, m) = at.shape();
    if n == 0 || m < n {
        return Err(Error::InvalidArgument(format!(
            "column pivoting needs a wide matrix, got {n} x {m}"
        )));
    }
    let data = at.as_mut_slice();
    let mut colnorms: Vec<f64> = data.par_chunks(n).map(norm2).collect();
    let initial_max = colnorms.iter().copied().fold(0.0, f64::max);
    let mut pivots: Vec<usize> = (0..m).collect();
    let mut ties = Vec::new();
    let mut g = vec![0.0; n];

    for k in 0..n {
        let (offset, tied) = argmax_lowest(&colnorms[k..], &pivots[k..]);
        let jmax = k + offset;
        if tied > 1 {
            ties.push((k, tied));
        }
        if !(colnorms[jmax] > RANK_TOLERANCE * initial_max) {
            return Err(Error::PivotRankDeficient {
                iteration: k,
                norm: colnorms[jmax],
            });
        }

        if jmax != k {
            for r in 0..n {
                data.swap(k * n + r, jmax * n + r);
            }
            colnorms.swap(k, jmax);
            pivots.swap(k, jmax);
        }

        if k != n - 1 {
            let ck = &data[k * n..(k + 1) * n];
            let len = norm2(ck);
            for (gi, ci) in g.iter_mut().zip(ck) {
                *gi = ci / len;
            }
            let g = &g;
            data[(k + 1) * n..]
                .par_chunks_mut(n)
                .zip(colnorms[k + 1..].par_iter_mut())
                .for_each(|(c, cn)| {
                    let proj = dot(g, c);
                    for (ci, gi) in c.iter_mut().zip(g) {
                        *ci -= proj * gi;
                    }
                    *cn = match downdate_norm(*cn, proj) {
                        NormUpdate::Updated(v) => v,
                        NormUpdate::Recompute => norm2(c),
                    };
                });
        }

        if k != 0 {
            let (done, rest) = data.split_at_mut(k * n);
            let ck = &mut rest[..n];
            for i in 0..k {
                let ci = &done[i * n..(i + 1) * n];
                let len = norm2(ci);
                let proj = dot(ci, ck) / len;
                for (x, h) in ck.iter_mut().zip(ci) {
                    *x -= proj * (h / len);
                }
            }
        }
    }

    Ok(PivotSelection {
        pivots,
        selected: n,
        method: SelectionMethod::QrPivot,
        seed: None,
        ties,
    })
}

/// Effective subsampling: pivot on `A^T`.
pub fn effective_select(design: &DesignMatrix) -> Result<PivotSelection> {
    qr_column_pivot_owned(design.matrix.transpose())
}

/// Subset selection: pivot on the transpose of the leading `n` right singular
/// vectors of `A^T` (the left singular vectors of `A`).
pub fn subset_selection(a: &DMatrix<f64>) -> Result<PivotSelection> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::InvalidArgument(format!(
            "subset selection needs a tall matrix, got {m} x {n}"
        )));
    }
    let svd = a
        .clone()
        .try_svd(true, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Svd("did not converge".into()))?;
    let u = svd.u.ok_or_else(|| Error::Svd("left singular vectors missing".into()))?;
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOLERANCE * smax) {
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > RANK_TOLERANCE * smax)
            .count();
        return Err(Error::RankDeficient { rank, cols: n });
    }
    let mut sel = qr_column_pivot_owned(u.transpose())?;
    sel.method = SelectionMethod::SubsetSelection;
    Ok(sel)
}

/// `n` distinct rows out of `m`, uniformly without replacement.
pub fn randomized_select(m: usize, n: usize, seed: u64) -> Result<PivotSelection> {
    if n > m {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {n} distinct rows out of {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pivots = rand::seq::index::sample(&mut rng, m, n).into_vec();
    let mut chosen = vec![false; m];
    for &p in &pivots {
        chosen[p] = true;
    }
    pivots.extend((0..m).filter(|&i| !chosen[i]));
    Ok(PivotSelection {
        pivots,
        selected: n,
        method: SelectionMethod::Randomized,
        seed: Some(seed),
        ties: Vec::new(),
    })
}

/// The square system on the selected rows, with the subsampled quadrature.
#[derive(Debug, Clone)]
pub struct SubsampledSystem {
    pub matrix: DMatrix<f64>,
    /// Grid index of every row, in pivot order.
    pub rows: Vec<usize>,
    /// Selected points in the standard domain.
    pub points: Vec<Vec<f64>>,
    /// Square-root weights `omega` of the selected points.
    pub weights: Vec<f64>,
    pub index_set: IndexSet,
}

pub fn subsample(
    design: &DesignMatrix,
    selection: &PivotSelection,
    grid: &TensorGrid,
) -> Result<SubsampledSystem> {
    let rows = selection.selected_rows().to_vec();
    if let Some(&bad) = rows.iter().find(|&&r| r >= design.nrows()) {
        return Err(Error::InvalidArgument(format!(
            "selected row {bad} out of range for {} rows",
            design.nrows()
        )));
    }
    let matrix = design.matrix.select_rows(rows.iter());
    let grid_rows: Vec<usize> = rows.iter().map(|&r| design.rows[r]).collect();
    Ok(SubsampledSystem {
        matrix,
        points: grid_rows.iter().map(|&r| grid.point(r).to_vec()).collect(),
        weights: grid_rows.iter().map(|&r| grid.weight(r).sqrt()).collect(),
        rows: grid_rows,
        index_set: design.index_set.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexset::IndexKind;
    use crate::lstsq::singular_values;
    use crate::orthopoly::{Family, Recurrence};
    use crate::tensorgrid::{assemble_design, Exactness};
    use proptest::prelude::*;
    use rand::Rng;

    /// Same pivoting loop, but every trailing norm recomputed from the entries.
    fn reference_pivots(at: &DMatrix<f64>) -> Vec<usize> {
        let (n, m) = at.shape();
        let mut cols: Vec<Vec<f64>> = (0..m).map(|j| at.column(j).iter().copied().collect()).collect();
        let mut perm: Vec<usize> = (0..m).collect();
        for k in 0..n {
            let norms: Vec<f64> = cols[k..].iter().map(|c| norm2(c)).collect();
            let jmax = k + argmax_lowest(&norms, &perm[k..]).0;
            cols.swap(k, jmax);
            perm.swap(k, jmax);
            let len = norm2(&cols[k]);
            let g: Vec<f64> = cols[k].iter().map(|x| x / len).collect();
            for c in cols[k + 1..].iter_mut() {
                let p = dot(&g, c);
                for (x, gi) in c.iter_mut().zip(&g) {
                    *x -= p * gi;
                }
            }
        }
        perm[..n].to_vec()
    }

    #[test]
    fn hand_worked_pivots() {
        let at = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 3.0, 0.0, 2.0, 0.0]);
        let sel = qr_column_pivot(&at).unwrap();
        assert_eq!(sel.pivots, vec![2, 1, 0]);
        assert_eq!(sel.selected_rows(), &[2, 1]);
    }

    #[test]
    fn orthogonal_columns_sorted_by_norm() {
        let at = DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0],
        );
        assert_eq!(qr_column_pivot(&at).unwrap().selected_rows(), &[1, 2, 0]);
    }

    #[test]
    fn identity_with_zero_padding() {
        let mut at = DMatrix::zeros(3, 6);
        for i in 0..3 {
            at[(i, i)] = 1.0;
        }
        let sel = qr_column_pivot(&at).unwrap();
        assert_eq!(sel.selected_rows(), &[0, 1, 2]);
        assert_eq!(sel.ties[0], (0, 3));
    }

    #[test]
    fn ties_go_to_the_lowest_original_column() {
        // the first swap puts column 1 ahead of column 0; both then tie
        let at = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let sel = qr_column_pivot(&at).unwrap();
        assert_eq!(sel.selected_rows(), &[2, 0, 1]);
        assert_eq!(sel.ties, vec![(1, 2)]);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let at = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        match qr_column_pivot(&at) {
            Err(Error::PivotRankDeficient { iteration, .. }) => assert_eq!(iteration, 1),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn downdate_examples() {
        assert_eq!(downdate_norm(2.0, 0.0), NormUpdate::Updated(2.0));
        assert_eq!(downdate_norm(5.0, 3.0), NormUpdate::Updated(4.0));
        assert_eq!(downdate_norm(1.0, 1.0 - 1e-16), NormUpdate::Recompute);
    }

    #[test]
    fn subset_selection_examples() {
        let q = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0]);
        let sel = subset_selection(&q).unwrap();
        let mut rows = sel.selected_rows().to_vec();
        rows.sort();
        assert_eq!(rows, vec![0, 1, 2]);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let sel = subset_selection(&a).unwrap();
        let square = a.select_rows(sel.selected_rows().iter());
        let s = singular_values(&square);
        assert!(s[2] > 1e-8 * s[0]);
        assert_eq!(subset_selection(&a).unwrap(), sel);
    }

    #[test]
    fn randomized_examples() {
        let sel = randomized_select(5, 5, 3).unwrap();
        let mut rows = sel.selected_rows().to_vec();
        rows.sort();
        assert_eq!(rows, vec![0, 1, 2, 3, 4]);
        assert_eq!(randomized_select(100, 10, 7).unwrap(), randomized_select(100, 10, 7).unwrap());
        assert_ne!(
            randomized_select(100, 10, 7).unwrap().selected_rows(),
            randomized_select(100, 10, 8).unwrap().selected_rows()
        );
        assert!(randomized_select(3, 4, 0).is_err());
    }

    #[test]
    fn subsample_picks_rows_in_pivot_order() {
        let grid = TensorGrid::new(vec![Recurrence::new(Family::LegendreUniform, 4); 1], &[4]).unwrap();
        let set = IndexSet::new(IndexKind::TotalOrder, 1, 1).unwrap();
        let design = assemble_design(&grid, &set, Exactness::Enforce).unwrap();
        let sel = PivotSelection {
            pivots: vec![2, 0, 1, 3],
            selected: 2,
            method: SelectionMethod::QrPivot,
            seed: None,
            ties: vec![],
        };
        let sys = subsample(&design, &sel, &grid).unwrap();
        assert_eq!(sys.rows, vec![2, 0]);
        assert_eq!(sys.matrix.row(0), design.matrix.row(2));
        assert_eq!(sys.matrix.row(1), design.matrix.row(0));
        assert_eq!(sys.points[0], grid.point(2));

        let ident = PivotSelection { pivots: vec![0, 1, 2, 3], selected: 4, ..sel.clone() };
        assert_eq!(subsample(&design, &ident, &grid).unwrap().matrix, design.matrix);
        let bad = PivotSelection { pivots: vec![7, 0, 1, 2], ..sel };
        assert!(subsample(&design, &bad, &grid).is_err());
    }

    #[test]
    fn analytic_configuration_is_well_conditioned() {
        let grid = TensorGrid::new(vec![Recurrence::new(Family::LegendreUniform, 21); 2], &[21, 21]).unwrap();
        let set = IndexSet::new(IndexKind::TotalOrder, 2, 4).unwrap();
        let design = assemble_design(&grid, &set, Exactness::Enforce).unwrap();
        let sel = effective_select(&design).unwrap();
        let sys = subsample(&design, &sel, &grid).unwrap();
        assert_eq!(sys.rows.len(), 15);
        let s = singular_values(&sys.matrix);
        assert!(s[0] / s[14] <= 10.0, "kappa = {}", s[0] / s[14]);
        assert_eq!(effective_select(&design).unwrap(), sel);
    }

    proptest! {
        #[test]
        fn downdating_never_changes_pivots(seed in any::<u64>(), n in 1usize..8, extra in 0usize..5) {
            let m = n + extra;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let at = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let sel = qr_column_pivot(&at).unwrap();
            prop_assert_eq!(sel.selected_rows(), &reference_pivots(&at)[..]);
            // first pivot has globally maximal norm
            let norms: Vec<f64> = (0..m).map(|j| at.column(j).norm()).collect();
            let best = norms.iter().copied().fold(0.0, f64::max);
            prop_assert!(norms[sel.pivots[0]] >= best * (1.0 - TIE_TOLERANCE));
            // permutation prefix validity
            let mut seen = sel.pivots.clone();
            seen.sort();
            prop_assert_eq!(seen, (0..m).collect::<Vec<_>>());
        }

        #[test]
        fn submatrix_singular_values_interlace(seed in any::<u64>(), n in 1usize..8, extra in 0usize..12) {
            let m = n + extra;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let sel = qr_column_pivot(&a.transpose()).unwrap();
            let boxed = a.select_rows(sel.selected_rows().iter());
            let sa = singular_values(&a);
            let sb = singular_values(&boxed);
            prop_assert!(sb[0] <= sa[0] * (1.0 + 1e-12));
            prop_assert!(sb[n - 1] <= sa[n - 1] * (1.0 + 1e-12));
        }
    }
}
