//! Per-node gap tables and the jump indices used by the final estimate.
//!
//! For a node `u` and `j ≥ 2`, `δ_j(u) = pdist(u, j) − pdist(u, j−2)`,
//! `Δ_j(u)` is the maximum of `δ_i(u)` over even `2 ≤ i ≤ j` (`Δ_0 = Δ_1 = 0`),
//! and `I(j, u)` is the smallest even index attaining that maximum.

use crate::graph::NodeId;
use crate::scalar::Weight;
use crate::tz::PivotTable;

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTables<W = f64> {
    k: usize,
    delta: Vec<W>,
    max_delta: Vec<W>,
    argmax: Vec<u8>,
}

impl<W: Weight> DeltaTables<W> {
    pub fn compute(pivots: &PivotTable<W>) -> Self {
        let k = pivots.k();
        let n = pivots.node_count();
        let mut delta = vec![W::zero(); n * k];
        let mut max_delta = vec![W::zero(); n * k];
        let mut argmax = vec![0u8; n * k];
        for u in 0..n {
            let row = u * k;
            let mut best = W::zero();
            let mut best_at = 2u8;
            let mut seen = false;
            for j in 2..k {
                if j % 2 == 0 {
                    let d = gap(pivots.pdist(u, j), pivots.pdist(u, j - 2));
                    delta[row + j] = d;
                    if !seen || d > best {
                        best = d;
                        best_at = j as u8;
                        seen = true;
                    }
                }
                max_delta[row + j] = best;
                argmax[row + j] = best_at;
            }
        }
        DeltaTables { k, delta, max_delta, argmax }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `δ_j(u)` for even `j ≥ 2`.
    #[inline]
    pub fn delta(&self, u: NodeId, j: usize) -> W {
        debug_assert!(j >= 2 && j % 2 == 0 && j < self.k);
        self.delta[u * self.k + j]
    }

    /// `Δ_j(u)` for `0 ≤ j ≤ k−1`.
    #[inline]
    pub fn max_delta(&self, u: NodeId, j: usize) -> W {
        self.max_delta[u * self.k + j]
    }

    /// `I(j, u)` for `2 ≤ j ≤ k−1`.
    #[inline]
    pub fn argmax(&self, u: NodeId, j: usize) -> usize {
        debug_assert!(j >= 2 && j < self.k);
        self.argmax[u * self.k + j] as usize
    }
}

/// Difference of two pivot distances; equal values (including two
/// infinities) give zero.
pub(crate) fn gap<W: Weight>(hi: W, lo: W) -> W {
    if hi == lo {
        W::zero()
    } else {
        hi - lo
    }
}

/// Even indices `2, 4, …` below `k`.
pub fn even_indices(k: usize) -> impl Iterator<Item = usize> + Clone {
    (2..k).step_by(2)
}

/// Largest even index below `k` (`k−1` or `k−2`).
pub fn max_even(k: usize) -> usize {
    if (k - 1) % 2 == 0 {
        k - 1
    } else {
        k - 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct XEntry {
    pub x1: u8,
    pub x2: u8,
    pub x3: u8,
    /// No even index satisfied the `x3` inequality; `x3` is the largest even index.
    pub x3_saturated: bool,
}

/// `x1(i, v)`, `x2(i, v)`, `x3(i, v)` for every node and even `i ∈ [2, k−1]`.
///
/// Rows for nodes with an unreachable pivot level are left unavailable; the
/// query layer never consults them.
#[derive(Debug, Clone, PartialEq)]
pub struct XIndexTable {
    k: usize,
    width: usize,
    entries: Vec<XEntry>,
    available: Vec<bool>,
}

impl XIndexTable {
    /// Exhaustive search over even indices per `(i, v)`. `None` when `k < 4`.
    pub fn compute<W: Weight>(delta: &DeltaTables<W>, pivots: &PivotTable<W>) -> Option<Self> {
        let k = delta.k();
        if k < 4 {
            return None;
        }
        let n = pivots.node_count();
        let width = even_indices(k).count();
        let mut entries = vec![XEntry::default(); n * width];
        let mut available = vec![false; n];
        for v in 0..n {
            if !pivots.is_complete(v) {
                continue;
            }
            available[v] = true;
            let big = |j: usize| delta.max_delta(v, j);
            for (slot, i) in even_indices(k).enumerate() {
                entries[v * width + slot] = x_entry(k, i, big);
            }
        }
        Some(XIndexTable { k, width, entries, available })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_available(&self, v: NodeId) -> bool {
        self.available[v]
    }

    /// Entry for even `i`, or `None` if the node's row is unavailable.
    #[inline]
    pub fn get(&self, v: NodeId, i: usize) -> Option<XEntry> {
        if !self.available[v] || i < 2 || i % 2 == 1 || i >= self.k {
            return None;
        }
        Some(self.entries[v * self.width + i / 2 - 1])
    }
}

fn x_entry<W: Weight>(k: usize, i: usize, big: impl Fn(usize) -> W) -> XEntry {
    let top = max_even(k);
    let w = |x: isize| W::from_f64_lossy(x as f64);
    let first = |from: usize, holds: &dyn Fn(usize) -> bool| {
        (from..=top).step_by(2).find(|&x| holds(x))
    };
    let slack = |x: usize| w(k as isize - x as isize - 2);

    let x1 = first(i, &|x| w((x - i) as isize) * (big(x) - big(i)) >= slack(x) * big(i))
        .unwrap_or(top);
    let x2 = first(x1, &|x| w((x - x1) as isize) * (big(x) - big(x1)) >= slack(x) * big(x1))
        .unwrap_or(top);
    let rhs = w(x1 as isize) * (big(x2) - big(x1));
    let x3 = first(x2, &|x| w((x - x2) as isize) * (big(x) - big(x2)) >= rhs);
    XEntry {
        x1: x1 as u8,
        x2: x2 as u8,
        x3: x3.unwrap_or(top) as u8,
        x3_saturated: x3.is_none(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tz::tests::{fixture_levels, p5, A, D};

    #[test]
    fn fixture_delta_tables() {
        let pv = PivotTable::compute(&p5(), &fixture_levels());
        let dt = DeltaTables::compute(&pv);
        assert_eq!(dt.delta(A, 2), 1.0);
        assert_eq!(dt.max_delta(A, 1), 0.0);
        assert_eq!(dt.max_delta(A, 2), 1.0);
        assert_eq!(dt.max_delta(A, 3), 1.0);
        assert_eq!(dt.argmax(A, 3), 2);
        for j in 2..4 {
            assert_eq!(dt.max_delta(D, j), 0.0);
            assert_eq!(dt.argmax(D, j), 2);
        }
    }

    #[test]
    fn fixture_x_indices() {
        let pv = PivotTable::compute(&p5(), &fixture_levels());
        let dt = DeltaTables::compute(&pv);
        let xt = XIndexTable::compute(&dt, &pv).unwrap();
        let e = xt.get(A, 2).unwrap();
        assert_eq!((e.x1, e.x2, e.x3, e.x3_saturated), (2, 2, 2, false));
        assert!(xt.get(A, 3).is_none());
    }

    #[test]
    fn zero_gaps_give_identity_jumps() {
        for k in 4..10 {
            for i in even_indices(k) {
                let e = x_entry::<f64>(k, i, |_| 0.0);
                assert_eq!((e.x1 as usize, e.x2 as usize, e.x3 as usize), (i, i, i));
            }
        }
    }

    #[test]
    fn small_k_has_no_x_table() {
        let lv = crate::tz::LevelAssignment::from_sets(5, 3, &[vec![1, 3], vec![3]]).unwrap();
        let pv = PivotTable::compute(&p5(), &lv);
        let dt = DeltaTables::compute(&pv);
        assert!(XIndexTable::compute(&dt, &pv).is_none());
    }

    #[test]
    fn max_even_picks_top_even() {
        assert_eq!(max_even(4), 2);
        assert_eq!(max_even(5), 4);
        assert_eq!(even_indices(7).collect::<Vec<_>>(), vec![2, 4, 6]);
    }

    proptest::proptest! {
        #[test]
        fn x_entries_are_minimal(k in 4usize..12, gaps in proptest::collection::vec(0u32..100, 12)) {
            // Δ from arbitrary nonnegative δ values
            let mut big = vec![0.0f64; k];
            let mut run = 0.0f64;
            for j in 2..k {
                if j % 2 == 0 { run = run.max(gaps[j] as f64); }
                big[j] = run;
            }
            let b = |j: usize| big[j];
            for i in even_indices(k) {
                let e = x_entry::<f64>(k, i, b);
                let (x1, x2, x3) = (e.x1 as usize, e.x2 as usize, e.x3 as usize);
                proptest::prop_assert!(i <= x1 && x1 <= x2 && x2 <= x3 && x3 < k);
                proptest::prop_assert!(x1 % 2 == 0 && x2 % 2 == 0 && x3 % 2 == 0);
                let ineq1 = |x: usize| (x - i) as f64 * (b(x) - b(i)) >= (k as f64 - x as f64 - 2.0) * b(i);
                let ineq2 = |x: usize| (x - x1) as f64 * (b(x) - b(x1)) >= (k as f64 - x as f64 - 2.0) * b(x1);
                let ineq3 = |x: usize| (x - x2) as f64 * (b(x) - b(x2)) >= x1 as f64 * (b(x2) - b(x1));
                proptest::prop_assert!(ineq1(x1));
                proptest::prop_assert!((i..x1).step_by(2).all(|x| !ineq1(x)));
                proptest::prop_assert!(ineq2(x2));
                proptest::prop_assert!((x1..x2).step_by(2).all(|x| !ineq2(x)));
                if e.x3_saturated {
                    proptest::prop_assert!((x2..k).step_by(2).all(|x| !ineq3(x)));
                    proptest::prop_assert_eq!(x3, max_even(k));
                } else {
                    proptest::prop_assert!(ineq3(x3));
                    proptest::prop_assert!((x2..x3).step_by(2).all(|x| !ineq3(x)));
                }
            }
        }
    }
}
