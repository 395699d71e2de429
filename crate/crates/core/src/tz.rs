//! Level sampling, pivots, bunches and the baseline pivot-walk query.
//!
//! Levels are nested samples `V = A_0 ⊇ A_1 ⊇ … ⊇ A_{k-1}`, with `A_k = ∅`.
//! A node's level is the largest `i` with `v ∈ A_i`. The pivot `p_i(v)` is the
//! node of `A_i` nearest to `v` (smallest id on ties), and the bunch `B(v)`
//! holds every `u ∈ A_i \ A_{i+1}` strictly closer to `v` than `p_{i+1}(v)`,
//! together with its exact distance.

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;

use ordered_float::OrderedFloat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::OracleError;
use crate::graph::{Graph, NodeId};
use crate::scalar::Weight;

/// Attempts made before giving up on a nonempty top level.
pub const MAX_SAMPLING_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelAssignment {
    k: usize,
    levels: Vec<u8>,
    seed: u64,
}

impl LevelAssignment {
    /// Samples levels: each member of `A_{i-1}` is promoted to `A_i` with
    /// probability `n^{-1/k}`. If `A_{k-1}` comes out empty the whole
    /// assignment is redrawn with `seed + 1`, `seed + 2`, …
    pub fn sample(n: usize, k: usize, seed: u64) -> Result<Self, OracleError> {
        if k < 2 {
            return Err(OracleError::InvalidK(k));
        }
        if k > u8::MAX as usize {
            return Err(OracleError::InvalidK(k));
        }
        let p = if n == 0 { 1.0 } else { (n as f64).powf(-1.0 / k as f64) };
        for attempt in 0..MAX_SAMPLING_ATTEMPTS {
            let s = seed.wrapping_add(attempt as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut levels = vec![0u8; n];
            for lvl in levels.iter_mut() {
                while (*lvl as usize) < k - 1 && rng.gen_bool(p) {
                    *lvl += 1;
                }
            }
            if levels.iter().any(|&l| l as usize == k - 1) {
                return Ok(LevelAssignment { k, levels, seed: s });
            }
        }
        Err(OracleError::ResamplingExhausted(MAX_SAMPLING_ATTEMPTS))
    }

    /// Uses explicit sets `A_1, …, A_{k-1}` instead of sampling.
    pub fn from_sets(n: usize, k: usize, sets: &[Vec<NodeId>]) -> Result<Self, OracleError> {
        if k < 2 || k > u8::MAX as usize {
            return Err(OracleError::InvalidK(k));
        }
        if sets.len() != k - 1 {
            return Err(OracleError::InvalidOverride(format!(
                "expected {} sets A_1..A_{}, got {}",
                k - 1,
                k - 1,
                sets.len()
            )));
        }
        let mut member = vec![vec![false; n]; k];
        member[0] = vec![true; n];
        for (i, set) in sets.iter().enumerate() {
            for &v in set {
                if v >= n {
                    return Err(OracleError::InvalidOverride(format!("node {v} out of range")));
                }
                member[i + 1][v] = true;
            }
        }
        for i in 1..k {
            for v in 0..n {
                if member[i][v] && !member[i - 1][v] {
                    return Err(OracleError::InvalidOverride(format!(
                        "node {v} is in A_{i} but not in A_{}",
                        i - 1
                    )));
                }
            }
        }
        if !member[k - 1].iter().any(|&b| b) {
            return Err(OracleError::InvalidOverride("A_{k-1} is empty".into()));
        }
        let levels = (0..n)
            .map(|v| (0..k).rev().find(|&i| member[i][v]).unwrap_or(0) as u8)
            .collect();
        Ok(LevelAssignment { k, levels, seed: 0 })
    }

    pub(crate) fn from_raw(k: usize, levels: Vec<u8>, seed: u64) -> Result<Self, OracleError> {
        if k < 2 || k > u8::MAX as usize {
            return Err(OracleError::InvalidK(k));
        }
        if levels.iter().any(|&l| l as usize >= k) {
            return Err(OracleError::InvalidOverride("level out of range".into()));
        }
        if !levels.is_empty() && !levels.iter().any(|&l| l as usize == k - 1) {
            return Err(OracleError::InvalidOverride("A_{k-1} is empty".into()));
        }
        Ok(LevelAssignment { k, levels, seed })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Seed of the accepted draw (after any resampling).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn node_count(&self) -> usize {
        self.levels.len()
    }

    /// Largest `i` with `v ∈ A_i`.
    pub fn level(&self, v: NodeId) -> usize {
        self.levels[v] as usize
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn contains(&self, i: usize, v: NodeId) -> bool {
        i < self.k && self.level(v) >= i
    }

    /// Members of `A_i`, ascending.
    pub fn members(&self, i: usize) -> Vec<NodeId> {
        (0..self.levels.len()).filter(|&v| self.contains(i, v)).collect()
    }
}

/// `p_i(v)` and `dist(v, p_i(v))` for every node and level `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotTable<W = f64> {
    k: usize,
    pivot: Vec<Option<NodeId>>,
    pdist: Vec<W>,
}

impl<W: Weight> PivotTable<W> {
    /// One multi-source shortest-path run per level.
    pub fn compute(g: &Graph<W>, levels: &LevelAssignment) -> Self {
        let n = g.node_count();
        let k = levels.k();
        let per_level: Vec<Vec<(W, Option<NodeId>)>> = (0..k)
            .into_par_iter()
            .map(|i| g.nearest_source(&levels.members(i)))
            .collect();
        let mut pivot = vec![None; n * k];
        let mut pdist = vec![W::infinity(); n * k];
        for (i, row) in per_level.into_iter().enumerate() {
            for (v, (d, p)) in row.into_iter().enumerate() {
                pivot[v * k + i] = p;
                pdist[v * k + i] = d;
            }
        }
        PivotTable { k, pivot, pdist }
    }

    pub(crate) fn from_raw(k: usize, pivot: Vec<Option<NodeId>>, pdist: Vec<W>) -> Self {
        PivotTable { k, pivot, pdist }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn node_count(&self) -> usize {
        self.pivot.len() / self.k.max(1)
    }

    #[inline]
    pub fn pivot(&self, v: NodeId, i: usize) -> Option<NodeId> {
        if i >= self.k {
            None
        } else {
            self.pivot[v * self.k + i]
        }
    }

    /// `dist(v, p_i(v))`, with `pdist(v, k) = ∞`.
    #[inline]
    pub fn pdist(&self, v: NodeId, i: usize) -> W {
        if i >= self.k {
            W::infinity()
        } else {
            self.pdist[v * self.k + i]
        }
    }

    /// True when every level has a reachable pivot from `v`.
    pub fn is_complete(&self, v: NodeId) -> bool {
        (0..self.k).all(|i| self.pivot(v, i).is_some())
    }
}

/// Per-node bunches with their exact distances.
#[derive(Debug, Clone, PartialEq)]
pub struct BunchSet<W = f64> {
    maps: Vec<HashMap<NodeId, W>>,
}

impl<W: Weight> BunchSet<W> {
    /// Grows the cluster `C(w) = {v : dist(w, v) < pdist(v, i+1)}` of every
    /// `w ∈ A_i \ A_{i+1}` with a pruned Dijkstra, then inverts clusters into
    /// bunches.
    pub fn compute(g: &Graph<W>, levels: &LevelAssignment, pivots: &PivotTable<W>) -> Self {
        let n = g.node_count();
        let centers: Vec<NodeId> = (0..n).collect();
        let clusters: Vec<Vec<(NodeId, W)>> = centers
            .par_iter()
            .map(|&w| grow_cluster(g, pivots, w, levels.level(w) + 1))
            .collect();
        let mut maps: Vec<HashMap<NodeId, W>> = vec![HashMap::new(); n];
        for (w, cluster) in clusters.into_iter().enumerate() {
            for (v, d) in cluster {
                maps[v].insert(w, d);
            }
        }
        BunchSet { maps }
    }

    pub(crate) fn from_maps(maps: Vec<HashMap<NodeId, W>>) -> Self {
        BunchSet { maps }
    }

    pub fn node_count(&self) -> usize {
        self.maps.len()
    }

    /// `dist(v, u)` if `u ∈ B(v)`.
    #[inline]
    pub fn get(&self, v: NodeId, u: NodeId) -> Option<W> {
        self.maps[v].get(&u).copied()
    }

    #[inline]
    pub fn contains(&self, v: NodeId, u: NodeId) -> bool {
        self.maps[v].contains_key(&u)
    }

    pub fn bunch(&self, v: NodeId) -> &HashMap<NodeId, W> {
        &self.maps[v]
    }

    /// Mutable access to one bunch. Meant for fault-injection in audits.
    pub fn bunch_mut(&mut self, v: NodeId) -> &mut HashMap<NodeId, W> {
        &mut self.maps[v]
    }

    /// Entries of `B(v)` sorted by node id.
    pub fn sorted(&self, v: NodeId) -> Vec<(NodeId, W)> {
        let mut e: Vec<(NodeId, W)> = self.maps[v].iter().map(|(&u, &d)| (u, d)).collect();
        e.sort_unstable_by_key(|&(u, _)| u);
        e
    }

    pub fn total_entries(&self) -> usize {
        self.maps.iter().map(HashMap::len).sum()
    }
}

fn grow_cluster<W: Weight>(
    g: &Graph<W>,
    pivots: &PivotTable<W>,
    center: NodeId,
    next_level: usize,
) -> Vec<(NodeId, W)> {
    let mut best: HashMap<NodeId, W> = HashMap::new();
    let mut out = Vec::new();
    if W::zero() >= pivots.pdist(center, next_level) {
        return out;
    }
    let mut heap = BinaryHeap::new();
    best.insert(center, W::zero());
    heap.push(Reverse((OrderedFloat(W::zero()), center)));
    while let Some(Reverse((OrderedFloat(d), v))) = heap.pop() {
        if best.get(&v).map_or(false, |&b| d > b) {
            continue;
        }
        out.push((v, d));
        for &(x, w) in g.neighbors(v) {
            let nd = d + w;
            if nd < pivots.pdist(x, next_level) && best.get(&x).map_or(true, |&b| nd < b) {
                best.insert(x, nd);
                heap.push(Reverse((OrderedFloat(nd), x)));
            }
        }
    }
    out
}

/// The pivot/bunch skeleton: levels, pivots, bunches and component labels.
#[derive(Debug, Clone)]
pub struct TzOracle<W = f64> {
    pub(crate) levels: LevelAssignment,
    pub(crate) pivots: PivotTable<W>,
    pub(crate) bunches: BunchSet<W>,
    pub(crate) components: Vec<u32>,
}

impl<W: Weight> TzOracle<W> {
    pub fn build(g: &Graph<W>, levels: LevelAssignment) -> Self {
        let pivots = PivotTable::compute(g, &levels);
        let bunches = BunchSet::compute(g, &levels, &pivots);
        TzOracle { levels, pivots, bunches, components: g.components() }
    }

    pub fn from_parts(
        g: &Graph<W>,
        levels: LevelAssignment,
        pivots: PivotTable<W>,
        bunches: BunchSet<W>,
    ) -> Self {
        TzOracle { levels, pivots, bunches, components: g.components() }
    }

    pub fn k(&self) -> usize {
        self.levels.k()
    }

    pub fn levels(&self) -> &LevelAssignment {
        &self.levels
    }

    pub fn pivots(&self) -> &PivotTable<W> {
        &self.pivots
    }

    pub fn bunches(&self) -> &BunchSet<W> {
        &self.bunches
    }

    pub fn connected(&self, s: NodeId, t: NodeId) -> bool {
        self.components[s] == self.components[t]
    }

    /// Baseline query. Returns the estimate and the number of pivot steps.
    pub fn query(&self, s: NodeId, t: NodeId) -> (W, usize) {
        if !self.connected(s, t) {
            return (W::infinity(), 0);
        }
        let (mut s, mut t) = (s, t);
        let mut w = s;
        let mut j = 0;
        while !self.bunches.contains(t, w) {
            j += 1;
            std::mem::swap(&mut s, &mut t);
            match self.pivots.pivot(s, j) {
                Some(p) => w = p,
                None => return (W::infinity(), j),
            }
        }
        let to_t = self.bunches.get(t, w).unwrap_or_else(W::infinity);
        (self.pivots.pdist(s, j) + to_t, j)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::graph::ExactOracle;

    pub(crate) const A: NodeId = 0;
    pub(crate) const B: NodeId = 1;
    pub(crate) const C: NodeId = 2;
    pub(crate) const D: NodeId = 3;
    pub(crate) const E: NodeId = 4;

    pub(crate) fn p5() -> Graph<f64> {
        Graph::from_edge_list("5\n0 1 1\n1 2 1\n2 3 1\n3 4 1\n").unwrap()
    }

    /// A_1 = {b, d}, A_2 = {b, d}, A_3 = {d} on P5 with k = 4.
    pub(crate) fn fixture_levels() -> LevelAssignment {
        LevelAssignment::from_sets(5, 4, &[vec![B, D], vec![B, D], vec![D]]).unwrap()
    }

    #[test]
    fn override_is_taken_verbatim() {
        let lv = fixture_levels();
        assert_eq!(lv.levels(), &[0, 2, 0, 3, 0]);
        assert_eq!(lv.members(1), vec![B, D]);
        assert_eq!(lv.members(3), vec![D]);
    }

    #[test]
    fn override_must_nest() {
        let err = LevelAssignment::from_sets(5, 4, &[vec![B], vec![B, D], vec![D]]);
        assert!(matches!(err, Err(OracleError::InvalidOverride(_))));
        let err = LevelAssignment::from_sets(5, 4, &[vec![B], vec![B], vec![]]);
        assert!(matches!(err, Err(OracleError::InvalidOverride(_))));
        let err = LevelAssignment::from_sets(5, 4, &[vec![B], vec![B]]);
        assert!(matches!(err, Err(OracleError::InvalidOverride(_))));
    }

    #[test]
    fn sampling_single_node_forces_top_level() {
        let lv = LevelAssignment::sample(1, 2, 9).unwrap();
        assert_eq!(lv.members(1), vec![0]);
    }

    #[test]
    fn sampling_is_deterministic_and_nested() {
        let a = LevelAssignment::sample(300, 5, 42).unwrap();
        let b = LevelAssignment::sample(300, 5, 42).unwrap();
        assert_eq!(a, b);
        assert!(!a.members(4).is_empty());
        for i in 1..5 {
            assert!(a.members(i).iter().all(|&v| a.contains(i - 1, v)));
        }
        assert!(LevelAssignment::sample(10, 1, 0).is_err());
    }

    #[test]
    fn fixture_pivots() {
        let pv = PivotTable::compute(&p5(), &fixture_levels());
        assert_eq!(pv.pivot(C, 1), Some(B));
        assert_eq!(pv.pdist(C, 1), 1.0);
        assert_eq!(pv.pivot(A, 3), Some(D));
        assert_eq!(pv.pdist(A, 3), 3.0);
        for v in 0..5 {
            assert_eq!(pv.pivot(v, 0), Some(v));
            assert_eq!(pv.pdist(v, 0), 0.0);
            assert!(pv.pdist(v, 4).is_infinite());
        }
    }

    #[test]
    fn fixture_bunches() {
        let g = p5();
        let lv = fixture_levels();
        let pv = PivotTable::compute(&g, &lv);
        let bs = BunchSet::compute(&g, &lv, &pv);
        assert_eq!(bs.sorted(A), vec![(A, 0.0), (B, 1.0), (D, 3.0)]);
        assert_eq!(bs.sorted(E), vec![(D, 1.0), (E, 0.0)]);
        for v in 0..5 {
            assert_eq!(bs.get(v, v), Some(0.0));
        }
    }

    #[test]
    fn fixture_tz_query() {
        let tz = TzOracle::build(&p5(), fixture_levels());
        assert_eq!(tz.query(A, E), (4.0, 1));
        assert_eq!(tz.query(C, C).0, 0.0);
        // b ∈ B(a): the walk stops before its first step
        assert_eq!(tz.query(B, A), (1.0, 0));
        assert_eq!(tz.query(A, B), (1.0, 1));
    }

    #[test]
    fn disconnected_pairs_are_infinite() {
        let g = Graph::new(4, [(0, 1, 1.0f64), (2, 3, 2.0)]).unwrap();
        let lv = LevelAssignment::from_sets(4, 2, &[vec![0]]).unwrap();
        let tz = TzOracle::build(&g, lv);
        assert!(tz.query(0, 3).0.is_infinite());
        // component {2, 3} has no A_1 node, yet queries inside it still resolve
        assert_eq!(tz.query(2, 3).0, 2.0);
        let ex = ExactOracle::new(&g);
        assert_eq!(tz.query(1, 0).0, ex.dist(1, 0));
    }

    #[test]
    fn bunches_match_definition_on_random_graphs() {
        use crate::generate::{generate, Family, WeightSpec};
        for seed in 0..5 {
            let g: Graph = generate(
                &Family::Gnp { n: 80, p: 0.06 },
                &WeightSpec::Uniform { lo: 1, hi: 50 },
                seed,
            )
            .unwrap();
            let lv = LevelAssignment::sample(80, 3, seed).unwrap();
            let tz = TzOracle::build(&g, lv.clone());
            let ex = ExactOracle::new(&g);
            for v in 0..80 {
                let mut expect: Vec<(NodeId, f64)> = (0..80)
                    .filter(|&u| {
                        let i = lv.level(u);
                        ex.dist(v, u) < tz.pivots.pdist(v, i + 1)
                    })
                    .map(|u| (u, ex.dist(v, u)))
                    .collect();
                expect.sort_by_key(|e| e.0);
                assert_eq!(tz.bunches.sorted(v), expect, "node {v} seed {seed}");
                for u in 0..80 {
                    let (est, _) = tz.query(v, u);
                    let d = ex.dist(v, u);
                    if d.is_finite() {
                        assert!(d <= est && est <= 5.0 * d);
                    } else {
                        assert!(est.is_infinite());
                    }
                }
            }
        }
    }
}
