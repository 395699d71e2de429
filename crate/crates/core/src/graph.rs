//! Undirected weighted graphs, shortest-path primitives and the exact
//! all-pairs oracle used as ground truth by the audits.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;

use ordered_float::OrderedFloat;
use rayon::prelude::*;

use crate::error::GraphError;
use crate::scalar::Weight;

pub type NodeId = usize;

/// Undirected edge with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<W> {
    pub u: NodeId,
    pub v: NodeId,
    pub w: W,
}

/// Undirected graph with non-negative weights stored as adjacency lists.
///
/// Parallel edges collapse to their minimum weight; self-loops are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<W = f64> {
    n: usize,
    edges: Vec<Edge<W>>,
    adjacency: Vec<Vec<(NodeId, W)>>,
}

impl<W: Weight> Graph<W> {
    pub fn new<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, NodeId, W)>,
    {
        let mut unique: BTreeMap<(NodeId, NodeId), W> = BTreeMap::new();
        for (u, v, w) in edges {
            check_edge(n, u, v, w)?;
            let k = (u.min(v), u.max(v));
            unique
                .entry(k)
                .and_modify(|cur| {
                    if w < *cur {
                        *cur = w
                    }
                })
                .or_insert(w);
        }
        let edges: Vec<Edge<W>> = unique
            .into_iter()
            .map(|((u, v), w)| Edge { u, v, w })
            .collect();
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            adjacency[e.u].push((e.v, e.w));
            adjacency[e.v].push((e.u, e.w));
        }
        Ok(Graph { n, edges, adjacency })
    }

    /// Parses the edge-list text format: a header line holding `n`, then one
    /// `u v w` record per line. Blank lines and `#` comments are ignored.
    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut n: Option<usize> = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            let parse_err = |message: String| GraphError::Parse { line, message };
            match n {
                None => {
                    if fields.len() != 1 {
                        return Err(parse_err(format!(
                            "expected node count header, found {content:?}"
                        )));
                    }
                    n = Some(
                        fields[0]
                            .parse()
                            .map_err(|_| parse_err(format!("bad node count {:?}", fields[0])))?,
                    );
                }
                Some(n) => {
                    if fields.len() != 3 {
                        return Err(parse_err(format!("expected \"u v w\", found {content:?}")));
                    }
                    let u: NodeId = fields[0]
                        .parse()
                        .map_err(|_| parse_err(format!("bad node id {:?}", fields[0])))?;
                    let v: NodeId = fields[1]
                        .parse()
                        .map_err(|_| parse_err(format!("bad node id {:?}", fields[1])))?;
                    let w: f64 = fields[2]
                        .parse()
                        .map_err(|_| parse_err(format!("bad weight {:?}", fields[2])))?;
                    check_edge(n, u, v, W::from_f64_lossy(w))
                        .map_err(|e| parse_err(e.to_string()))?;
                    edges.push((u, v, W::from_f64_lossy(w)));
                }
            }
        }
        let n = n.ok_or(GraphError::Parse {
            line: 0,
            message: "missing node count header".into(),
        })?;
        Graph::new(n, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.n);
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {}", e.u, e.v, e.w);
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge<W>] {
        &self.edges
    }

    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, W)] {
        &self.adjacency[v]
    }

    /// Single-source shortest-path distances; unreachable nodes get infinity.
    pub fn dijkstra(&self, source: NodeId) -> Vec<W> {
        assert!(source < self.n, "source {source} out of range");
        let mut dist = vec![W::infinity(); self.n];
        let mut heap = BinaryHeap::new();
        dist[source] = W::zero();
        heap.push(Reverse((OrderedFloat(W::zero()), source)));
        while let Some(Reverse((OrderedFloat(d), v))) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(x, w) in &self.adjacency[v] {
                let nd = d + w;
                if nd < dist[x] {
                    dist[x] = nd;
                    heap.push(Reverse((OrderedFloat(nd), x)));
                }
            }
        }
        dist
    }

    /// Distance from every node to the nearest member of `sources`, together
    /// with that member. Ties go to the smallest source id.
    pub fn nearest_source(&self, sources: &[NodeId]) -> Vec<(W, Option<NodeId>)> {
        let mut label: Vec<(W, Option<NodeId>)> = vec![(W::infinity(), None); self.n];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            if label[s].1.map_or(true, |cur| s < cur) {
                label[s] = (W::zero(), Some(s));
                heap.push(Reverse((OrderedFloat(W::zero()), s, s)));
            }
        }
        while let Some(Reverse((OrderedFloat(d), src, v))) = heap.pop() {
            if (OrderedFloat(d), src) > (OrderedFloat(label[v].0), label[v].1.unwrap_or(usize::MAX)) {
                continue;
            }
            for &(x, w) in &self.adjacency[v] {
                let cand = (OrderedFloat(d + w), src);
                let cur = (OrderedFloat(label[x].0), label[x].1.unwrap_or(usize::MAX));
                if cand < cur {
                    label[x] = (d + w, Some(src));
                    heap.push(Reverse((cand.0, src, x)));
                }
            }
        }
        label
    }

    /// Connected-component label per node, numbered in order of first node.
    pub fn components(&self) -> Vec<u32> {
        let mut comp = vec![u32::MAX; self.n];
        let mut next = 0u32;
        let mut stack = Vec::new();
        for start in 0..self.n {
            if comp[start] != u32::MAX {
                continue;
            }
            comp[start] = next;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &(x, _) in &self.adjacency[v] {
                    if comp[x] == u32::MAX {
                        comp[x] = next;
                        stack.push(x);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

fn check_edge<W: Weight>(n: usize, u: NodeId, v: NodeId, w: W) -> Result<(), GraphError> {
    for id in [u, v] {
        if id >= n {
            return Err(GraphError::NodeOutOfRange { id, n });
        }
    }
    if u == v {
        return Err(GraphError::SelfLoop(u));
    }
    if w.is_nan() || w.is_infinite() {
        return Err(GraphError::NonFiniteWeight { u, v });
    }
    if w < W::zero() {
        return Err(GraphError::NegativeWeight { u, v, w: w.to_f64_lossless() });
    }
    Ok(())
}

/// Dense matrix of exact shortest-path distances.
#[derive(Debug, Clone)]
pub struct ExactOracle<W = f64> {
    n: usize,
    dist: Vec<W>,
}

impl<W: Weight> ExactOracle<W> {
    /// One Dijkstra run per source, fanned out across threads.
    pub fn new(g: &Graph<W>) -> Self {
        let n = g.node_count();
        let rows: Vec<Vec<W>> = (0..n).into_par_iter().map(|s| g.dijkstra(s)).collect();
        let mut dist = Vec::with_capacity(n * n);
        for row in rows {
            dist.extend(row);
        }
        ExactOracle { n, dist }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dist(&self, u: NodeId, v: NodeId) -> W {
        self.dist[u * self.n + v]
    }

    pub fn row(&self, u: NodeId) -> &[W] {
        &self.dist[u * self.n..(u + 1) * self.n]
    }

    /// Largest finite distance.
    pub fn diameter(&self) -> W {
        self.dist
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .fold(W::zero(), W::max)
    }

    /// Smallest strictly positive distance, if any.
    pub fn min_positive(&self) -> Option<W> {
        self.dist
            .iter()
            .copied()
            .filter(|d| d.is_finite() && *d > W::zero())
            .fold(None, |acc: Option<W>, d| Some(acc.map_or(d, |a| a.min(d))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p5() -> Graph<f64> {
        Graph::from_edge_list("5\n0 1 1\n1 2 1\n2 3 1\n3 4 1\n").unwrap()
    }

    fn bellman_ford(g: &Graph<f64>, s: NodeId) -> Vec<f64> {
        let mut d = vec![f64::INFINITY; g.node_count()];
        d[s] = 0.0;
        for _ in 0..g.node_count() {
            for e in g.edges() {
                if d[e.u] + e.w < d[e.v] {
                    d[e.v] = d[e.u] + e.w;
                }
                if d[e.v] + e.w < d[e.u] {
                    d[e.u] = d[e.v] + e.w;
                }
            }
        }
        d
    }

    #[test]
    fn parses_path() {
        let g = p5();
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.dijkstra(0), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn parses_isolated_nodes_and_comments() {
        let g: Graph = Graph::from_edge_list("# header\n3  # nodes\n\n").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn rejects_bad_records() {
        let err = Graph::<f64>::from_edge_list("5\n0 1 1\n0 1 -2\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 3, .. }), "{err}");
        let err = Graph::<f64>::from_edge_list("2\n0 5 1\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 2, .. }));
        let err = Graph::<f64>::from_edge_list("2\n0 1\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 2, .. }));
        let err = Graph::<f64>::from_edge_list("2\n1 1 3\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 2, .. }));
        assert!(Graph::<f64>::from_edge_list("").is_err());
    }

    #[test]
    fn parallel_edges_keep_minimum() {
        let g = Graph::new(2, [(0, 1, 5.0), (1, 0, 2.0), (0, 1, 3.0)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges()[0].w, 2.0);
        assert_eq!(g.neighbors(1), &[(0, 2.0)]);
    }

    #[test]
    fn dijkstra_edge_cases() {
        let g = Graph::<f64>::new(1, []).unwrap();
        assert_eq!(g.dijkstra(0), vec![0.0]);
        let g = Graph::new(3, [(0, 1, 1.0f64)]).unwrap();
        let d = g.dijkstra(0);
        assert_eq!(d[1], 1.0);
        assert!(d[2].is_infinite());
        assert_eq!(g.components(), vec![0, 0, 1]);
    }

    #[test]
    fn exact_oracle_small_graphs() {
        let ex = ExactOracle::new(&p5());
        assert_eq!(ex.dist(0, 4), 4.0);
        assert_eq!(ex.diameter(), 4.0);
        let k3 = Graph::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let ex = ExactOracle::new(&k3);
        for u in 0..3 {
            for v in 0..3 {
                assert_eq!(ex.dist(u, v), if u == v { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn nearest_source_breaks_ties_by_id() {
        let g = p5();
        let near = g.nearest_source(&[3, 1]);
        assert_eq!(near[2], (1.0, Some(1)));
        assert_eq!(near[0], (1.0, Some(1)));
        assert_eq!(near[4], (1.0, Some(3)));
        assert_eq!(near[3], (0.0, Some(3)));
    }

    fn small_graph() -> impl Strategy<Value = Graph<f64>> {
        (2usize..12).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n, 0u32..20), 0..30).prop_map(move |es| {
                let es = es
                    .into_iter()
                    .filter(|(u, v, _)| u != v)
                    .map(|(u, v, w)| (u, v, w as f64));
                Graph::new(n, es).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn dijkstra_matches_bellman_ford(g in small_graph()) {
            for s in 0..g.node_count() {
                prop_assert_eq!(g.dijkstra(s), bellman_ford(&g, s));
            }
        }

        #[test]
        fn exact_oracle_is_a_metric(g in small_graph()) {
            let ex = ExactOracle::new(&g);
            let n = g.node_count();
            for u in 0..n {
                prop_assert_eq!(ex.dist(u, u), 0.0);
                for v in 0..n {
                    prop_assert_eq!(ex.dist(u, v), ex.dist(v, u));
                    for w in 0..n {
                        prop_assert!(ex.dist(u, w) <= ex.dist(u, v) + ex.dist(v, w));
                    }
                }
            }
        }

        #[test]
        fn nearest_source_is_exact(g in small_graph(), mask in proptest::collection::vec(any::<bool>(), 12)) {
            let n = g.node_count();
            let sources: Vec<NodeId> = (0..n).filter(|&v| mask[v]).collect();
            let near = g.nearest_source(&sources);
            let ex = ExactOracle::new(&g);
            for v in 0..n {
                let best = sources
                    .iter()
                    .map(|&s| (OrderedFloat(ex.dist(v, s)), s))
                    .filter(|(d, _)| d.0.is_finite())
                    .min();
                match best {
                    Some((d, s)) => prop_assert_eq!(near[v], (d.0, Some(s))),
                    None => prop_assert!(near[v].1.is_none()),
                }
            }
        }
    }
}
