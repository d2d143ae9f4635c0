//! Tensor-product Gauss grids and the weighted design matrix
//! `A(i, j) = omega_i psi_j(zeta_i)`.
//!
//! Grid points are enumerated in odometer order with the last dimension
//! varying fastest. Row `i` of every design matrix refers to grid point `i`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::indexset::{IndexSet, MultiIndex};
use crate::models::Model;
use crate::orthopoly::{GaussRule1D, Recurrence};

/// Default upper bound on the number of grid points.
pub const DEFAULT_GRID_CAP: usize = 10_000_000;

/// What to do when a grid is too coarse to integrate the basis exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exactness {
    #[default]
    Enforce,
    Warn,
}

#[derive(Debug, Clone)]
pub struct TensorGrid {
    recurrences: Vec<Recurrence>,
    rules: Vec<GaussRule1D>,
    /// Per-point node number in each dimension, `m x d` row-major.
    digits: Vec<u32>,
    /// `m x d` row-major.
    points: Vec<f64>,
    /// Squared weights `omega_i^2`, summing to one.
    weights: Vec<f64>,
}

impl TensorGrid {
    pub fn new(recurrences: Vec<Recurrence>, points_per_dim: &[usize]) -> Result<Self> {
        Self::with_cap(recurrences, points_per_dim, DEFAULT_GRID_CAP)
    }

    pub fn with_cap(
        recurrences: Vec<Recurrence>,
        points_per_dim: &[usize],
        cap: usize,
    ) -> Result<Self> {
        let dim = recurrences.len();
        if dim == 0 || points_per_dim.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: points_per_dim.len(),
            });
        }
        let m = points_per_dim
            .iter()
            .try_fold(1u128, |acc, &p| acc.checked_mul(p as u128))
            .unwrap_or(u128::MAX);
        if m > cap as u128 {
            return Err(Error::CardinalityCap { requested: m, cap });
        }
        let m = m as usize;

        let rules = recurrences
            .iter()
            .zip(points_per_dim)
            .map(|(rec, &p)| rec.gauss_rule(p))
            .collect::<Result<Vec<_>>>()?;

        let mut digits = vec![0u32; m * dim];
        let mut points = vec![0.0; m * dim];
        let mut weights = vec![0.0; m];
        let mut odometer = vec![0usize; dim];
        for i in 0..m {
            let mut w = 1.0;
            for k in 0..dim {
                let node = odometer[k];
                digits[i * dim + k] = node as u32;
                points[i * dim + k] = rules[k].points[node];
                w *= rules[k].weights[node];
            }
            weights[i] = w;
            for k in (0..dim).rev() {
                odometer[k] += 1;
                if odometer[k] < points_per_dim[k] {
                    break;
                }
                odometer[k] = 0;
            }
        }

        Ok(TensorGrid {
            recurrences,
            rules,
            digits,
            points,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rules.len()
    }

    pub fn recurrences(&self) -> &[Recurrence] {
        &self.recurrences
    }

    pub fn rules(&self) -> &[GaussRule1D] {
        &self.rules
    }

    pub fn points_per_dim(&self) -> Vec<usize> {
        self.rules.iter().map(|r| r.len()).collect()
    }

    /// Point `i` in the standard domain.
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    /// Squared quadrature weight `omega_i^2`.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Check that the rule integrates products of basis functions in `set` exactly.
    pub fn check_exactness(&self, set: &IndexSet) -> Result<()> {
        if set.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: set.dim(),
            });
        }
        for (dim, rule) in self.rules.iter().enumerate() {
            let needed = set.max_entry(dim) + 1;
            if rule.len() < needed {
                return Err(Error::Exactness {
                    dim,
                    needed,
                    available: rule.len(),
                });
            }
        }
        Ok(())
    }

    fn check(&self, set: &IndexSet, policy: Exactness) -> Result<()> {
        match (self.check_exactness(set), policy) {
            (Ok(()), _) => Ok(()),
            (Err(e @ Error::Exactness { .. }), Exactness::Warn) => {
                log::warn!("{e}; the design matrix will not be orthonormal");
                Ok(())
            }
            (Err(e), _) => Err(e),
        }
    }

    /// Tabulated `psi_deg(node)` per dimension, indexed `[dim][node * (deg_max + 1) + deg]`.
    fn basis_tables(&self, set: &IndexSet) -> Result<Vec<(usize, Vec<f64>)>> {
        let mut scratch = Vec::new();
        (0..self.dim())
            .map(|k| {
                let max_deg = set.max_entry(k);
                let rec = &self.recurrences[k];
                let rec = if max_deg > rec.max_order() {
                    match rec.family() {
                        Some(family) => std::borrow::Cow::Owned(Recurrence::new(family, max_deg)),
                        None => {
                            return Err(Error::InvalidArgument(format!(
                                "degree {max_deg} exceeds the custom recurrence in dimension {k}"
                            )))
                        }
                    }
                } else {
                    std::borrow::Cow::Borrowed(rec)
                };
                let stride = max_deg + 1;
                let mut table = Vec::with_capacity(self.rules[k].len() * stride);
                for &s in &self.rules[k].points {
                    rec.eval_all(max_deg, s, &mut scratch);
                    table.extend_from_slice(&scratch);
                }
                Ok((stride, table))
            })
            .collect()
    }

    /// Writes `omega_i psi_index(zeta_i)` for all grid rows into `out`.
    fn fill_column(&self, tables: &[(usize, Vec<f64>)], index: &MultiIndex, out: &mut [f64]) {
        let d = self.dim();
        let j = index.entries();
        for (i, slot) in out.iter_mut().enumerate() {
            let digits = &self.digits[i * d..(i + 1) * d];
            let mut v = self.weights[i].sqrt();
            for k in 0..d {
                let (stride, table) = &tables[k];
                v *= table[digits[k] as usize * stride + j[k]];
            }
            *slot = v;
        }
    }
}

/// The dense `m x n` weighted design matrix with its row and column maps.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub matrix: DMatrix<f64>,
    /// Grid index of every row.
    pub rows: Vec<usize>,
    /// Multi-index of every column.
    pub index_set: IndexSet,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Assemble `A(i, j) = omega_i psi_j(zeta_i)` over the whole grid.
pub fn assemble_design(grid: &TensorGrid, set: &IndexSet, policy: Exactness) -> Result<DesignMatrix> {
    grid.check(set, policy)?;
    let tables = grid.basis_tables(set)?;
    let m = grid.len();
    let n = set.len();
    let mut data = vec![0.0; m * n];
    // column-major storage: each column is a disjoint slot
    data.par_chunks_mut(m)
        .zip(set.indices().par_iter())
        .for_each(|(col, index)| grid.fill_column(&tables, index, col));
    Ok(DesignMatrix {
        matrix: DMatrix::from_vec(m, n, data),
        rows: (0..m).collect(),
        index_set: set.clone(),
    })
}

/// Raw model outputs keyed by grid index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evaluations(pub BTreeMap<usize, f64>);

impl Evaluations {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.0.get(&index).copied()
    }
}

/// Evaluate `model` at the requested grid rows only.
pub fn evaluate_rows(grid: &TensorGrid, model: &dyn Model, rows: &[usize]) -> Result<Evaluations> {
    if let Some(&bad) = rows.iter().find(|&&r| r >= grid.len()) {
        return Err(Error::InvalidArgument(format!(
            "grid row {bad} out of range (grid has {} points)",
            grid.len()
        )));
    }
    if model.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            actual: model.dim(),
        });
    }
    let points: Vec<&[f64]> = rows.iter().map(|&r| grid.point(r)).collect();
    let values = model.evaluate(rows, &points)?;
    if values.len() != rows.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            actual: values.len(),
        });
    }
    Ok(Evaluations(rows.iter().copied().zip(values).collect()))
}

/// `b(i) = omega_i f(zeta_i)` for `rows` taken from already available evaluations.
pub fn weighted_from_evaluations(
    grid: &TensorGrid,
    evaluations: &Evaluations,
    rows: &[usize],
) -> Result<DVector<f64>> {
    let mut missing = Vec::new();
    let mut b = DVector::zeros(rows.len());
    for (slot, &r) in rows.iter().enumerate() {
        match evaluations.get(r) {
            Some(v) => b[slot] = grid.weight(r).sqrt() * v,
            None => missing.push((r, grid.point(r).to_vec())),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingEvaluations { missing });
    }
    Ok(b)
}

/// `b(i) = omega_i f(zeta_i)` for the requested rows (all rows when `None`).
/// The model is evaluated at those points only.
pub fn weighted_rhs(
    grid: &TensorGrid,
    model: &dyn Model,
    rows: Option<&[usize]>,
) -> Result<(DVector<f64>, Evaluations)> {
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..grid.len()).collect();
            &all
        }
    };
    let evaluations = evaluate_rows(grid, model, rows)?;
    let b = weighted_from_evaluations(grid, &evaluations, rows)?;
    Ok((b, evaluations))
}

/// Full-tensor projection `x(j) = sum_i omega_i^2 psi_j(zeta_i) f(zeta_i)`,
/// i.e. `A^T b`, from evaluations at every grid point.
pub fn pseudospectral_from_evaluations(
    grid: &TensorGrid,
    set: &IndexSet,
    evaluations: &Evaluations,
) -> Result<Vec<f64>> {
    grid.check(set, Exactness::Enforce)?;
    let all: Vec<usize> = (0..grid.len()).collect();
    let b = weighted_from_evaluations(grid, evaluations, &all)?;
    let tables = grid.basis_tables(set)?;
    let m = grid.len();
    Ok(set
        .indices()
        .par_iter()
        .map_init(
            || vec![0.0; m],
            |column, index| {
                grid.fill_column(&tables, index, column);
                // fixed summation order, independent of scheduling
                column.iter().zip(b.iter()).map(|(a, b)| a * b).sum()
            },
        )
        .collect())
}

/// Evaluate the model over the whole grid and project onto `set`.
pub fn tensor_pseudospectral(grid: &TensorGrid, set: &IndexSet, model: &dyn Model) -> Result<Vec<f64>> {
    grid.check_exactness(set)?;
    let all: Vec<usize> = (0..grid.len()).collect();
    let evaluations = evaluate_rows(grid, model, &all)?;
    pseudospectral_from_evaluations(grid, set, &evaluations)
}
