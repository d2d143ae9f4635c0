//! Polynomial chaos expansions: evaluation, moments and Sobol' indices.
//!
//! Partial variances partition the basis by exact support: a multi-index
//! contributes to the variable subset `s` holding precisely its non-zero
//! entries, so the first-order variance of variable `i` only sees indices
//! that depend on `i` alone.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::indexset::{IndexSet, MultiIndex};
use crate::orthopoly::Recurrence;

#[derive(Debug, Clone)]
pub struct PcExpansion {
    index_set: IndexSet,
    coefficients: Vec<f64>,
    recurrences: Vec<Recurrence>,
}

impl PcExpansion {
    pub fn new(index_set: IndexSet, coefficients: Vec<f64>, recurrences: Vec<Recurrence>) -> Result<Self> {
        if coefficients.len() != index_set.len() {
            return Err(Error::DimensionMismatch {
                expected: index_set.len(),
                actual: coefficients.len(),
            });
        }
        if recurrences.len() != index_set.dim() {
            return Err(Error::DimensionMismatch {
                expected: index_set.dim(),
                actual: recurrences.len(),
            });
        }
        let recurrences = recurrences
            .into_iter()
            .enumerate()
            .map(|(k, rec)| {
                let need = index_set.max_entry(k);
                if need <= rec.max_order() {
                    Ok(rec)
                } else {
                    rec.family().map(|f| Recurrence::new(f, need)).ok_or_else(|| {
                        Error::InvalidArgument(format!("recurrence {k} too short for degree {need}"))
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PcExpansion {
            index_set,
            coefficients,
            recurrences,
        })
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn dim(&self) -> usize {
        self.index_set.dim()
    }

    /// `g(zeta) = sum_j x_j psi_j(zeta)`.
    pub fn evaluate(&self, zeta: &[f64]) -> Result<f64> {
        if zeta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: zeta.len(),
            });
        }
        let mut tables = Vec::with_capacity(self.dim());
        for (k, rec) in self.recurrences.iter().enumerate() {
            let mut t = Vec::new();
            rec.eval_all(self.index_set.max_entry(k), zeta[k], &mut t);
            tables.push(t);
        }
        Ok(self
            .index_set
            .iter()
            .zip(&self.coefficients)
            .map(|(m, &x)| {
                x * m
                    .entries()
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| tables[k][j])
                    .product::<f64>()
            })
            .sum())
    }

    /// Mean and variance from the coefficients.
    pub fn moments(&self) -> Result<(f64, f64)> {
        let zero = MultiIndex::zero(self.dim());
        let pos = self
            .index_set
            .position(&zero)
            .ok_or_else(|| Error::InvalidArgument("expansion has no constant term".into()))?;
        let variance = self
            .coefficients
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != pos)
            .map(|(_, x)| x * x)
            .sum();
        Ok((self.coefficients[pos], variance))
    }

    /// Partial variance of every non-empty exact support present in the set.
    pub fn partial_variances(&self) -> BTreeMap<Vec<usize>, f64> {
        let mut out: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (m, &x) in self.index_set.iter().zip(&self.coefficients) {
            let support = m.support();
            if !support.is_empty() {
                *out.entry(support).or_insert(0.0) += x * x;
            }
        }
        out
    }

    /// Sobol' indices up to interaction order `max_order`; higher orders are
    /// lumped into [`SobolReport::remainder`].
    pub fn sobol_indices(&self, max_order: usize) -> Result<SobolReport> {
        let (mean, variance) = self.moments()?;
        let partial = self.partial_variances();
        let d = self.dim();
        let defined = variance > 0.0;
        let normalize = |v: f64| if defined { Some(v / variance) } else { None };

        let mut first_order = vec![0.0; d];
        let mut total_touching = vec![0.0; d];
        let mut subsets = Vec::new();
        let mut remainder = 0.0;
        let mut ordered: Vec<(&Vec<usize>, &f64)> = partial.iter().collect();
        ordered.sort_by_key(|(s, _)| s.len());
        for (support, &v) in ordered {
            for &i in support {
                total_touching[i] += v;
            }
            if support.len() == 1 {
                first_order[support[0]] = v;
            }
            if support.len() <= max_order {
                subsets.push(SubsetVariance {
                    subset: support.clone(),
                    partial_variance: v,
                    index: normalize(v),
                });
            } else {
                remainder += v;
            }
        }

        Ok(SobolReport {
            mean,
            variance,
            first_order: first_order.iter().map(|&v| normalize(v)).collect(),
            total_effect: total_touching.iter().map(|&v| normalize(v)).collect(),
            subsets,
            remainder,
            max_order,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetVariance {
    /// 0-based variable numbers.
    pub subset: Vec<usize>,
    pub partial_variance: f64,
    /// `None` when the total variance is zero.
    pub index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobolReport {
    pub mean: f64,
    pub variance: f64,
    /// `S_i`, from indices supported exactly on `{i}`.
    pub first_order: Vec<Option<f64>>,
    /// Fraction of variance from every index with `j_i > 0` (total-effect reading).
    pub total_effect: Vec<Option<f64>>,
    /// Subsets up to `max_order`, by interaction order, then lexicographically.
    pub subsets: Vec<SubsetVariance>,
    /// Summed partial variance of the subsets beyond `max_order`.
    pub remainder: f64,
    pub max_order: usize,
}

impl SobolReport {
    pub fn is_defined(&self) -> bool {
        self.variance > 0.0
    }

    /// Sum of all normalized indices including the remainder (1 when defined).
    pub fn index_sum(&self) -> Option<f64> {
        if !self.is_defined() {
            return None;
        }
        let s: f64 = self.subsets.iter().map(|s| s.partial_variance).sum();
        Some((s + self.remainder) / self.variance)
    }
}
