//! Univariate orthonormal polynomials, their Gauss rules, and tensor products.
//!
//! Polynomials are evaluated with the orthonormal three-term recurrence
//!
//! ```text
//! sqrt(b[k+1]) psi_{k+1}(s) = (s - a[k]) psi_k(s) - sqrt(b[k]) psi_{k-1}(s)
//! ```
//!
//! with `psi_0 = 1 / sqrt(b[0])`. Gauss rules come from the eigen-decomposition
//! of the symmetric tridiagonal Jacobi matrix (Golub-Welsch).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Legendre polynomials, orthonormal under the uniform density 1/2 on [-1, 1].
    LegendreUniform,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "legendre-uniform" | "legendre" | "uniform" => Ok(Family::LegendreUniform),
            other => Err(Error::UnsupportedFamily(other.to_string())),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::LegendreUniform => f.write_str("legendre-uniform"),
        }
    }
}

/// Three-term recurrence coefficients of a family of orthonormal polynomials.
///
/// `alpha.len() == beta.len() == max_order + 1`. `beta[0]` is the total mass
/// of the measure (1 for a probability density) and `beta[i] > 0` for `i >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recurrence {
    family: Option<Family>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl Recurrence {
    /// Coefficients able to evaluate `psi_0..=psi_order` and to build Gauss
    /// rules with up to `order + 1` points.
    pub fn new(family: Family, order: usize) -> Self {
        let len = order + 1;
        let (alpha, beta) = match family {
            Family::LegendreUniform => {
                let alpha = vec![0.0; len];
                let beta = (0..len)
                    .map(|k| {
                        if k == 0 {
                            1.0
                        } else {
                            let k = k as f64;
                            k * k / (4.0 * k * k - 1.0)
                        }
                    })
                    .collect();
                (alpha, beta)
            }
        };
        Recurrence {
            family: Some(family),
            alpha,
            beta,
        }
    }

    /// Build from raw coefficients of some other measure.
    pub fn from_coefficients(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || alpha.len() != beta.len() {
            return Err(Error::InvalidArgument(
                "recurrence needs equally long, non-empty alpha and beta".into(),
            ));
        }
        if let Some(i) = beta.iter().position(|&b| !(b > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "recurrence beta[{i}] must be positive"
            )));
        }
        Ok(Recurrence {
            family: None,
            alpha,
            beta,
        })
    }

    pub fn family(&self) -> Option<Family> {
        self.family
    }

    pub fn max_order(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// `psi_degree(s)`.
    ///
    /// # Panics
    /// If `degree > self.max_order()`.
    pub fn eval(&self, degree: usize, s: f64) -> f64 {
        assert!(
            degree <= self.max_order(),
            "degree {degree} beyond recurrence order {}",
            self.max_order()
        );
        let mut prev = 0.0;
        let mut cur = 1.0 / self.beta[0].sqrt();
        for k in 0..degree {
            // prev is zero at k == 0, so beta[0] never enters the recurrence
            let next =
                ((s - self.alpha[k]) * cur - self.beta[k].sqrt() * prev) / self.beta[k + 1].sqrt();
            prev = cur;
            cur = next;
        }
        cur
    }

    /// `psi_0(s)..=psi_max_degree(s)` written into `out`.
    pub fn eval_all(&self, max_degree: usize, s: f64, out: &mut Vec<f64>) {
        assert!(max_degree <= self.max_order());
        out.clear();
        out.push(1.0 / self.beta[0].sqrt());
        for k in 0..max_degree {
            let prev = if k == 0 { 0.0 } else { out[k - 1] };
            let next = ((s - self.alpha[k]) * out[k] - self.beta[k].sqrt() * prev)
                / self.beta[k + 1].sqrt();
            out.push(next);
        }
    }

    /// Gauss rule with `points` nodes, weights normalized to sum to one.
    pub fn gauss_rule(&self, points: usize) -> Result<GaussRule1D> {
        if points == 0 {
            return Err(Error::InvalidArgument("a Gauss rule needs at least one point".into()));
        }
        if points > self.alpha.len() {
            return Err(Error::InvalidArgument(format!(
                "{points}-point rule needs {points} recurrence terms, only {} available",
                self.alpha.len()
            )));
        }
        let jacobi = DMatrix::from_fn(points, points, |i, j| {
            if i == j {
                self.alpha[i]
            } else if i + 1 == j {
                self.beta[j].sqrt()
            } else if j + 1 == i {
                self.beta[i].sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let mut nodes: Vec<(f64, f64)> = (0..points)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], self.beta[0] * v0 * v0)
            })
            .collect();
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));

        // Symmetric measures have symmetric rules; enforce it exactly so that
        // mirrored grid points produce exactly tied pivot norms.
        if self.alpha[..points].iter().all(|&a| a == 0.0) {
            for i in 0..points / 2 {
                let j = points - 1 - i;
                let s = 0.5 * (nodes[j].0 - nodes[i].0);
                let w = 0.5 * (nodes[i].1 + nodes[j].1);
                nodes[i] = (-s, w);
                nodes[j] = (s, w);
            }
            if points % 2 == 1 {
                nodes[points / 2].0 = 0.0;
            }
        }

        let total: f64 = nodes.iter().map(|n| n.1).sum();
        Ok(GaussRule1D {
            points: nodes.iter().map(|n| n.0).collect(),
            weights: nodes.iter().map(|n| n.1 / total).collect(),
        })
    }
}

/// A univariate Gauss rule with probability-normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule1D {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule1D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Quadrature of `f` against the (normalized) measure.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * f(s))
            .sum()
    }
}

/// Product `prod_k psi^(k)_{j_k}(zeta_k)`.
pub fn eval_multivariate(recs: &[Recurrence], index: &[usize], zeta: &[f64]) -> Result<f64> {
    if index.len() != zeta.len() {
        return Err(Error::DimensionMismatch {
            expected: index.len(),
            actual: zeta.len(),
        });
    }
    if recs.len() != index.len() {
        return Err(Error::DimensionMismatch {
            expected: index.len(),
            actual: recs.len(),
        });
    }
    Ok(recs
        .iter()
        .zip(index)
        .zip(zeta)
        .map(|((rec, &j), &z)| rec.eval(j, z))
        .product())
}
