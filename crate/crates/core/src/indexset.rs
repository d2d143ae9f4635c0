//! Multi-index sets: tensor, total order, hyperbolic cross and hyperbolic-q.
//!
//! Every set is stored in graded-lexicographic order: ascending total degree,
//! ties broken by ascending lexicographic order of the entries.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on the number of multi-indices a set may hold.
pub const DEFAULT_CARDINALITY_CAP: usize = 1_000_000;

/// Relative slack on the hyperbolic-q membership test.
const HYPERBOLIC_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        MultiIndex(entries)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn total_degree(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&j| j == 0)
    }

    /// Variables (0-based) with a non-zero entry.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &j)| j != 0)
            .map(|(i, _)| i)
            .collect()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{j}")?;
        }
        Ok(())
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidArgument(format!("bad multi-index `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(MultiIndex)
    }
}

/// Which defining inequality a set satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IndexKind {
    /// `max_i j_i <= k`
    Tensor,
    /// `sum_i j_i <= k`
    TotalOrder,
    /// `prod_i (j_i + 1) <= k + 1`
    HyperbolicCross,
    /// `(sum_i j_i^q)^(1/q) <= k`, `q` in `[0.2, 1]`
    Hyperbolic { q: f64 },
}

impl IndexKind {
    /// Parse a kind name, attaching `q` where it belongs.
    pub fn from_parts(name: &str, q: Option<f64>) -> Result<Self> {
        let kind = match (name, q) {
            ("tensor", None) => IndexKind::Tensor,
            ("total-order", None) => IndexKind::TotalOrder,
            ("hyperbolic-cross", None) => IndexKind::HyperbolicCross,
            ("hyperbolic" | "hyperbolic-q", Some(q)) => IndexKind::Hyperbolic { q },
            ("hyperbolic" | "hyperbolic-q", None) => {
                return Err(Error::InvalidArgument("hyperbolic sets need q".into()))
            }
            ("tensor" | "total-order" | "hyperbolic-cross", Some(_)) => {
                return Err(Error::InvalidArgument(format!(
                    "q is only meaningful for hyperbolic sets, not `{name}`"
                )))
            }
            (other, _) => {
                return Err(Error::InvalidArgument(format!("unknown index set kind `{other}`")))
            }
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn name(&self) -> &'static str {
        match self {
            IndexKind::Tensor => "tensor",
            IndexKind::TotalOrder => "total-order",
            IndexKind::HyperbolicCross => "hyperbolic-cross",
            IndexKind::Hyperbolic { .. } => "hyperbolic",
        }
    }

    pub fn q(&self) -> Option<f64> {
        match self {
            IndexKind::Hyperbolic { q } => Some(*q),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if let IndexKind::Hyperbolic { q } = self {
            if !(0.2..=1.0).contains(q) {
                return Err(Error::InvalidArgument(format!(
                    "hyperbolic q must lie in [0.2, 1.0], got {q}"
                )));
            }
        }
        Ok(())
    }

    /// Largest total degree any member can have.
    fn max_total_degree(&self, dim: usize, k: usize) -> usize {
        match self {
            IndexKind::Tensor => dim * k,
            _ => k,
        }
    }

    fn contains(&self, entries: &[usize], k: usize) -> bool {
        match *self {
            IndexKind::Tensor => entries.iter().all(|&j| j <= k),
            IndexKind::TotalOrder => entries.iter().sum::<usize>() <= k,
            IndexKind::HyperbolicCross => {
                let mut prod: u128 = 1;
                for &j in entries {
                    prod = prod.saturating_mul(j as u128 + 1);
                    if prod > k as u128 + 1 {
                        return false;
                    }
                }
                true
            }
            IndexKind::Hyperbolic { q } => {
                if entries.iter().any(|&j| j > k) {
                    return false;
                }
                let norm = entries
                    .iter()
                    .filter(|&&j| j > 0)
                    .map(|&j| (j as f64).powf(q))
                    .sum::<f64>()
                    .powf(1.0 / q);
                norm <= k as f64 * (1.0 + HYPERBOLIC_SLACK)
            }
        }
    }
}

/// An ordered, duplicate-free set of multi-indices.
#[derive(Debug, Clone)]
pub struct IndexSet {
    kind: IndexKind,
    dim: usize,
    max_degree: usize,
    pruned: bool,
    indices: Vec<MultiIndex>,
    positions: HashMap<MultiIndex, usize>,
}

impl PartialEq for IndexSet {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.dim == other.dim
            && self.max_degree == other.max_degree
            && self.indices == other.indices
    }
}

impl IndexSet {
    pub fn new(kind: IndexKind, dim: usize, max_degree: usize) -> Result<Self> {
        Self::with_cap(kind, dim, max_degree, DEFAULT_CARDINALITY_CAP)
    }

    pub fn with_cap(kind: IndexKind, dim: usize, max_degree: usize, cap: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("index sets need d >= 1".into()));
        }
        kind.validate()?;
        if let IndexKind::Tensor = kind {
            let card = (max_degree as u128 + 1).checked_pow(dim as u32).unwrap_or(u128::MAX);
            if card > cap as u128 {
                return Err(Error::CardinalityCap {
                    requested: card,
                    cap,
                });
            }
        }

        let mut indices = Vec::new();
        let mut current = vec![0usize; dim];
        for degree in 0..=kind.max_total_degree(dim, max_degree) {
            compositions(degree, 0, max_degree, &mut current, &mut |entries| {
                if kind.contains(entries, max_degree) {
                    indices.push(MultiIndex(entries.to_vec()));
                }
                indices.len() <= cap
            });
            if indices.len() > cap {
                return Err(Error::CardinalityCap {
                    requested: indices.len() as u128,
                    cap,
                });
            }
        }
        Ok(Self::from_ordered(kind, dim, max_degree, false, indices))
    }

    fn from_ordered(
        kind: IndexKind,
        dim: usize,
        max_degree: usize,
        pruned: bool,
        indices: Vec<MultiIndex>,
    ) -> Self {
        let positions = indices
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        IndexSet {
            kind,
            dim,
            max_degree,
            pruned,
            indices,
            positions,
        }
    }

    /// A set holding exactly `indices` in the given order (e.g. read from a file).
    pub fn from_indices(kind: IndexKind, indices: Vec<MultiIndex>) -> Result<Self> {
        let dim = indices.first().map(|m| m.dim()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidArgument("empty index set".into()));
        }
        if let Some(bad) = indices.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        let max_degree = indices
            .iter()
            .flat_map(|m| m.entries().iter().copied())
            .max()
            .unwrap_or(0);
        let set = Self::from_ordered(kind, dim, max_degree, true, indices);
        if set.positions.len() != set.indices.len() {
            return Err(Error::InvalidArgument("duplicate multi-index".into()));
        }
        Ok(set)
    }

    pub fn kind(&self) -> IndexKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The `k` the set was generated with.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn is_pruned(&self) -> bool {
        self.pruned
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.indices.iter()
    }

    pub fn position(&self, index: &MultiIndex) -> Option<usize> {
        self.positions.get(index).copied()
    }

    pub fn contains(&self, index: &MultiIndex) -> bool {
        self.positions.contains_key(index)
    }

    pub fn is_subset_of(&self, other: &IndexSet) -> bool {
        self.indices.iter().all(|m| other.contains(m))
    }

    /// Largest entry in dimension `dim` over the whole set.
    pub fn max_entry(&self, dim: usize) -> usize {
        self.indices.iter().map(|m| m.0[dim]).max().unwrap_or(0)
    }

    /// Positions (into this set) that survive pruning to `l` elements.
    ///
    /// Elements are removed highest total degree first; among equal degrees the
    /// last one in the stored order goes first.
    pub fn pruned_positions(&self, l: usize) -> Result<Vec<usize>> {
        if l == 0 || l > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot prune a set of {} elements to {l}",
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.indices[b]
                .total_degree()
                .cmp(&self.indices[a].total_degree())
                .then(b.cmp(&a))
        });
        let mut keep = vec![true; self.len()];
        for &pos in &order[..self.len() - l] {
            keep[pos] = false;
        }
        Ok((0..self.len()).filter(|&i| keep[i]).collect())
    }

    /// Subset of `l` elements with the highest total degrees removed.
    pub fn prune_by_total_order(&self, l: usize) -> Result<IndexSet> {
        let keep = self.pruned_positions(l)?;
        if keep.len() == self.len() {
            return Ok(self.clone());
        }
        let indices = keep.iter().map(|&i| self.indices[i].clone()).collect();
        Ok(Self::from_ordered(
            self.kind,
            self.dim,
            self.max_degree,
            true,
            indices,
        ))
    }
}

impl<'a> IntoIterator for &'a IndexSet {
    type Item = &'a MultiIndex;
    type IntoIter = std::slice::Iter<'a, MultiIndex>;

    fn into_iter(self) -> Self::IntoIter {
        self.indices.iter()
    }
}

/// Visit all compositions of `remaining` into `current[pos..]` with parts at
/// most `bound`, in ascending lexicographic order. The visitor returns
/// `false` to stop early.
fn compositions(
    remaining: usize,
    pos: usize,
    bound: usize,
    current: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]) -> bool,
) -> bool {
    let dim = current.len();
    if pos == dim - 1 {
        if remaining > bound {
            return true;
        }
        current[pos] = remaining;
        let go_on = visit(current);
        current[pos] = 0;
        return go_on;
    }
    // the trailing dims can absorb at most `bound` each
    let tail_capacity = bound.saturating_mul(dim - pos - 1);
    let lo = remaining.saturating_sub(tail_capacity);
    let hi = remaining.min(bound);
    for j in lo..=hi {
        current[pos] = j;
        if !compositions(remaining - j, pos + 1, bound, current, visit) {
            current[pos] = 0;
            return false;
        }
    }
    current[pos] = 0;
    true
}

/// `round(n / ratio)` (half away from zero), clamped to `[1, n]`.
pub fn cardinality_for_ratio(n: usize, ratio: f64) -> usize {
    let l = (n as f64 / ratio).round();
    (l.max(1.0) as usize).min(n.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binomial(n: u64, k: u64) -> u64 {
        (1..=k).fold(1u64, |acc, i| acc * (n - k + i) / i)
    }

    fn set_of(set: &IndexSet) -> Vec<Vec<usize>> {
        let mut v: Vec<Vec<usize>> = set.iter().map(|m| m.entries().to_vec()).collect();
        v.sort();
        v
    }

    #[test]
    fn paper_cardinalities() {
        assert_eq!(IndexSet::new(IndexKind::TotalOrder, 7, 2).unwrap().len(), 36);
        assert_eq!(IndexSet::new(IndexKind::TotalOrder, 7, 3).unwrap().len(), 120);
        assert_eq!(IndexSet::new(IndexKind::TotalOrder, 7, 4).unwrap().len(), 330);
        assert_eq!(IndexSet::new(IndexKind::Tensor, 2, 4).unwrap().len(), 25);
    }

    #[test]
    fn hyperbolic_cross_matches_brute_force() {
        let set = IndexSet::new(IndexKind::HyperbolicCross, 2, 2).unwrap();
        let mut brute = Vec::new();
        for a in 0..=2usize {
            for b in 0..=2usize {
                if (a + 1) * (b + 1) <= 3 {
                    brute.push(vec![a, b]);
                }
            }
        }
        brute.sort();
        assert_eq!(set_of(&set), brute);
        assert_eq!(set.len(), 5);
    }

    #[test]
    fn ordering_is_graded_lexicographic() {
        let set = IndexSet::new(IndexKind::TotalOrder, 2, 2).unwrap();
        let got: Vec<String> = set.iter().map(|m| m.to_string()).collect();
        assert_eq!(got, ["0,0", "0,1", "1,0", "0,2", "1,1", "2,0"]);
    }

    #[test]
    fn total_order_cardinality_exhaustive() {
        for d in 1..=8usize {
            for k in 0..=10usize {
                let set = IndexSet::new(IndexKind::TotalOrder, d, k).unwrap();
                assert_eq!(set.len() as u64, binomial((k + d) as u64, k as u64), "d={d} k={k}");
            }
        }
    }

    #[test]
    fn hyperbolic_q_one_equals_total_order() {
        for d in 1..=4 {
            for k in 0..=8 {
                let hyp = IndexSet::new(IndexKind::Hyperbolic { q: 1.0 }, d, k).unwrap();
                let tot = IndexSet::new(IndexKind::TotalOrder, d, k).unwrap();
                assert_eq!(set_of(&hyp), set_of(&tot));
            }
        }
    }

    #[test]
    fn hyperbolic_small_q_drops_interactions() {
        // (1^0.3 + 1^0.3)^(1/0.3) = 2^(10/3) > 9, so no interaction terms survive
        let set = IndexSet::new(IndexKind::Hyperbolic { q: 0.3 }, 2, 9).unwrap();
        assert_eq!(set.len(), 19);
        assert!(set.iter().all(|m| m.support().len() <= 1));
    }

    #[test]
    fn q_rules() {
        assert!(IndexKind::from_parts("total-order", Some(0.5)).is_err());
        assert!(IndexKind::from_parts("hyperbolic", Some(0.1)).is_err());
        assert!(IndexKind::from_parts("hyperbolic", None).is_err());
        assert_eq!(
            IndexKind::from_parts("hyperbolic", Some(0.5)).unwrap(),
            IndexKind::Hyperbolic { q: 0.5 }
        );
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            IndexSet::with_cap(IndexKind::Tensor, 10, 9, 1000),
            Err(Error::CardinalityCap { .. })
        ));
        assert!(matches!(
            IndexSet::with_cap(IndexKind::TotalOrder, 10, 9, 1000),
            Err(Error::CardinalityCap { .. })
        ));
    }

    #[test]
    fn pruning_examples() {
        let set = IndexSet::new(IndexKind::TotalOrder, 2, 2).unwrap();
        assert_eq!(set.prune_by_total_order(6).unwrap(), set);

        let pruned = set.prune_by_total_order(4).unwrap();
        let got: Vec<String> = pruned.iter().map(|m| m.to_string()).collect();
        // (2,0) then (1,1) are the last-ordered degree-2 elements
        assert_eq!(got, ["0,0", "0,1", "1,0", "0,2"]);

        let big = IndexSet::new(IndexKind::TotalOrder, 7, 3).unwrap();
        assert_eq!(big.prune_by_total_order(104).unwrap().len(), 104);
        assert!(set.prune_by_total_order(0).is_err());
        assert!(set.prune_by_total_order(7).is_err());
    }

    #[test]
    fn ratio_rounding() {
        assert_eq!(cardinality_for_ratio(36, 1.15), 31);
        assert_eq!(cardinality_for_ratio(36, 1.25), 29);
        assert_eq!(cardinality_for_ratio(120, 1.15), 104);
        assert_eq!(cardinality_for_ratio(120, 1.25), 96);
        assert_eq!(cardinality_for_ratio(330, 1.15), 287);
        assert_eq!(cardinality_for_ratio(330, 1.25), 264);
        assert_eq!(cardinality_for_ratio(15, 1.5), 10);
        assert_eq!(cardinality_for_ratio(17, 1.0), 17);
        assert_eq!(cardinality_for_ratio(1, 3.0), 1);
    }

    #[test]
    fn multi_index_round_trips_through_strings() {
        let m = MultiIndex::new(vec![3, 0, 12]);
        assert_eq!(m.to_string().parse::<MultiIndex>().unwrap(), m);
        assert_eq!(m.support(), vec![0, 2]);
    }

    fn kinds() -> impl Strategy<Value = IndexKind> {
        prop_oneof![
            Just(IndexKind::Tensor),
            Just(IndexKind::TotalOrder),
            Just(IndexKind::HyperbolicCross),
            (0.2f64..=1.0).prop_map(|q| IndexKind::Hyperbolic { q }),
        ]
    }

    proptest! {
        #[test]
        fn membership_ordering_and_zero(kind in kinds(), d in 1usize..5, k in 0usize..7) {
            let set = IndexSet::new(kind, d, k).unwrap();
            prop_assert!(set.contains(&MultiIndex::zero(d)));
            for m in &set {
                prop_assert!(kind.contains(m.entries(), k));
            }
            for w in set.indices().windows(2) {
                let key = |m: &MultiIndex| (m.total_degree(), m.entries().to_vec());
                prop_assert!(key(&w[0]) < key(&w[1]));
            }
            // completeness against the tensor box
            let mut count = 0;
            let total = (k + 1).pow(d as u32);
            for code in 0..total {
                let mut c = code;
                let entries: Vec<usize> = (0..d).map(|_| { let e = c % (k + 1); c /= k + 1; e }).collect();
                if kind.contains(&entries, k) { count += 1; }
            }
            prop_assert_eq!(count, set.len());
        }

        #[test]
        fn pruning_is_monotone(d in 1usize..4, k in 0usize..6, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let set = IndexSet::new(IndexKind::TotalOrder, d, k).unwrap();
            let n = set.len();
            let l1 = 1 + ((n - 1) as f64 * a.min(b)) as usize;
            let l2 = 1 + ((n - 1) as f64 * a.max(b)) as usize;
            let small = set.prune_by_total_order(l1).unwrap();
            let large = set.prune_by_total_order(l2).unwrap();
            prop_assert!(small.is_subset_of(&large));
            let kept_max = small.iter().map(|m| m.total_degree()).max().unwrap();
            for m in set.iter().filter(|m| !small.contains(m)) {
                prop_assert!(m.total_degree() >= kept_max);
            }
        }
    }
}
