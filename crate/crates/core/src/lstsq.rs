//! Column pruning, unit-column-norm preconditioning and the QR least-squares solve.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::indexset::IndexSet;
use crate::pivotselect::SubsampledSystem;

/// `sigma_min < SOLVE_RANK_TOLERANCE * sigma_1` counts as rank deficient.
pub const SOLVE_RANK_TOLERANCE: f64 = 1e-12;

/// All singular values, largest first.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `sigma_1 / sigma_min`; infinite for a singular (or wide) matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    if m.nrows() < m.ncols() {
        return f64::INFINITY;
    }
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// The subsampled system restricted to a pruned basis.
#[derive(Debug, Clone)]
pub struct PrunedSystem {
    /// `A_dagger`, `n x l`.
    pub matrix: DMatrix<f64>,
    pub index_set: IndexSet,
    /// Positions of the retained columns in the parent basis.
    pub columns: Vec<usize>,
    /// Grid index of every row.
    pub rows: Vec<usize>,
    /// Column norms of `matrix`, once preconditioned.
    pub scaling: Option<Vec<f64>>,
    /// Condition number of the unpruned square matrix.
    pub kappa_box: f64,
}

/// Keep `l` columns, dropping the highest total degrees first.
pub fn prune_columns(sys: &SubsampledSystem, l: usize) -> Result<PrunedSystem> {
    let columns = sys.index_set.pruned_positions(l)?;
    let index_set = sys.index_set.prune_by_total_order(l)?;
    Ok(PrunedSystem {
        matrix: sys.matrix.select_columns(columns.iter()),
        index_set,
        columns,
        rows: sys.rows.clone(),
        scaling: None,
        kappa_box: condition_number(&sys.matrix),
    })
}

/// Store the diagonal preconditioner `S = diag(||a_j||_2)`.
pub fn precondition(mut sys: PrunedSystem) -> Result<PrunedSystem> {
    let norms: Vec<f64> = sys.matrix.column_iter().map(|c| c.norm()).collect();
    if let Some(j) = norms.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::SingularPreconditioner(j));
    }
    sys.scaling = Some(norms);
    Ok(sys)
}

impl PrunedSystem {
    /// `A_dagger S^-1`.
    pub fn scaled_matrix(&self) -> Option<DMatrix<f64>> {
        let s = self.scaling.as_ref()?;
        let mut m = self.matrix.clone();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col /= s[j];
        }
        Some(m)
    }
}

/// Coefficients and diagnostics of one least-squares solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub index_set: IndexSet,
    pub coefficients: Vec<f64>,
    pub kappa_box: f64,
    pub kappa_dagger: f64,
    pub kappa_preconditioned: f64,
    pub residual_norm: f64,
    pub epsilon: Option<f64>,
    /// Set when a [`RankPolicy::MinimumNorm`] solve had to truncate.
    pub rank_deficient: bool,
}

/// What to do when the pruned system is numerically rank deficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankPolicy {
    /// Fail with [`Error::RankDeficient`].
    #[default]
    Strict,
    /// Fall back to the minimum-norm solution of the truncated SVD.
    MinimumNorm,
}

/// Householder QR solve of `min || Q R z - b ||`; never forms normal equations.
fn qr_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let cols = m.ncols();
    let s = singular_values(m);
    let rank = s.iter().filter(|&&v| v >= SOLVE_RANK_TOLERANCE * s[0]).count();
    if m.nrows() < cols || rank < cols {
        return Err(Error::RankDeficient { rank, cols });
    }
    let qr = m.clone().qr();
    let qtb = qr.q().tr_mul(rhs);
    qr.r()
        .solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient { rank, cols })
}

/// Minimum-norm solution with singular values below the rank tolerance dropped.
fn min_norm_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let s = singular_values(m);
    let cutoff = SOLVE_RANK_TOLERANCE * s.first().copied().unwrap_or(0.0);
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Svd("did not converge".into()))?;
    svd.solve(rhs, cutoff).map_err(|e| Error::Svd(e.to_string()))
}

/// Solve `min || A_dagger x - b ||` through the preconditioned problem
/// `min || A_dagger S^-1 z - b ||`, `S x = z`.
pub fn solve(sys: &PrunedSystem, rhs: &DVector<f64>) -> Result<SolveReport> {
    solve_with(sys, rhs, RankPolicy::Strict)
}

pub fn solve_with(sys: &PrunedSystem, rhs: &DVector<f64>, policy: RankPolicy) -> Result<SolveReport> {
    if rhs.len() != sys.matrix.nrows() {
        return Err(Error::DimensionMismatch {
            expected: sys.matrix.nrows(),
            actual: rhs.len(),
        });
    }
    let owned;
    let sys = if sys.scaling.is_some() {
        sys
    } else {
        owned = precondition(sys.clone())?;
        &owned
    };
    let scaled = sys.scaled_matrix().expect("preconditioned above");
    let (z, rank_deficient) = match (qr_solve(&scaled, rhs), policy) {
        (Ok(z), _) => (z, false),
        (Err(Error::RankDeficient { .. }), RankPolicy::MinimumNorm) => (min_norm_solve(&scaled, rhs)?, true),
        (Err(e), _) => return Err(e),
    };
    let scaling = sys.scaling.as_ref().expect("preconditioned above");
    let x = DVector::from_iterator(z.len(), z.iter().zip(scaling).map(|(z, s)| z / s));
    let residual = &sys.matrix * &x - rhs;
    Ok(SolveReport {
        index_set: sys.index_set.clone(),
        coefficients: x.iter().copied().collect(),
        kappa_box: sys.kappa_box,
        kappa_dagger: condition_number(&sys.matrix),
        kappa_preconditioned: condition_number(&scaled),
        residual_norm: residual.norm(),
        epsilon: None,
        rank_deficient,
    })
}

/// Unpreconditioned QR solve, for comparison.
pub fn solve_unscaled(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    qr_solve(matrix, rhs)
}

/// `|| x_ref restricted to test_set - x_test ||_2`, aligned by multi-index.
pub fn coefficient_error(
    ref_set: &IndexSet,
    reference: &[f64],
    test_set: &IndexSet,
    test: &[f64],
) -> Result<f64> {
    if reference.len() != ref_set.len() || test.len() != test_set.len() {
        return Err(Error::InvalidArgument(
            "coefficient vectors must match their index sets".into(),
        ));
    }
    let mut sum = 0.0;
    for (m, &x) in test_set.iter().zip(test) {
        let pos = ref_set.position(m).ok_or_else(|| {
            Error::InvalidArgument(format!("multi-index ({m}) missing from the reference set"))
        })?;
        let d = reference[pos] - x;
        sum += d * d;
    }
    Ok(sum.sqrt())
}
