//! Invariant audit of a built oracle against exact distances.
//!
//! Every table invariant and every query-time contract is a named check.
//! A check counts how often it was evaluated and how often it failed; the
//! first failures are kept with a human-readable detail line. The report is
//! a pure function of the oracle and the options, so two runs agree.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::OracleError;
use crate::estimator::EstimatorConfig;
use crate::graph::NodeId;
use crate::oracle::{bunch_size_scale, DistanceOracle};
use crate::query::{Branch, Check, FallbackReason, LevelPair, QueryStats, CHECK_CAP};
use crate::scalar::{approx_eq, approx_le, Weight};
use crate::tables::{even_indices, max_even};

/// Largest graph audited over every ordered pair.
pub const ALL_PAIRS_LIMIT: usize = 2000;
/// Largest graph whose triangle inequality is checked over all triples.
pub const TRIANGLE_LIMIT: usize = 200;
/// Largest graph whose shortest paths are recomputed by Bellman–Ford.
pub const REFERENCE_LIMIT: usize = 100;
/// Offsets `-OFFSET_SPAN..=OFFSET_SPAN` are compared against a linear scan.
pub const OFFSET_SPAN: isize = 12;
/// Slack over the expected total bunch size.
pub const BUNCH_SLACK: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairSelection {
    /// Every ordered pair `(s, t)` with `s ≠ t`.
    AllPairs,
    /// `count` ordered pairs with `s ≠ t`, drawn uniformly with `seed`.
    Sample { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditOptions {
    pub pairs: PairSelection,
    /// Failures kept verbatim in the report; the total is always counted.
    pub max_recorded: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions { pairs: PairSelection::AllPairs, max_recorded: 100 }
    }
}

macro_rules! checks {
    ($($id:ident => $name:literal, $desc:literal;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        enum CheckId { $($id),* }

        impl CheckId {
            const ALL: &'static [CheckId] = &[$(CheckId::$id),*];

            fn name(self) -> &'static str {
                match self { $(CheckId::$id => $name),* }
            }

            fn description(self) -> &'static str {
                match self { $(CheckId::$id => $desc),* }
            }
        }
    };
}

checks! {
    ExactSymmetric => "graph.exact_symmetric", "dist(u,v) = dist(v,u), dist(u,u) = 0";
    ExactTriangle => "graph.exact_triangle", "dist(u,w) <= dist(u,v) + dist(v,w) over all triples";
    ExactReference => "graph.exact_reference", "Dijkstra rows equal a Bellman-Ford recomputation";
    LevelsNested => "tz.levels_nested", "A_0 = V, A_{i+1} within A_i, A_{k-1} non-empty";
    PivotsExact => "tz.pivots_exact", "p_i(v) is in A_i and pdist(v,i) is the exact distance to A_i";
    BunchMembership => "tz.bunch_membership", "w in B(v) iff dist(v,w) < pdist(v, level(w)+1)";
    BunchDistances => "tz.bunch_distances", "stored bunch distances are exact";
    BunchSize => "tz.bunch_size", "total bunch entries <= 4 k n^(1+1/k)";
    TzStretch => "tz.query_stretch", "dist <= tz_query <= (2k-1) dist";
    DeltaDefinition => "tables.delta_definition", "delta, running max and argmax equal a literal recomputation";
    DeltaMonotone => "tables.delta_monotone", "running max gap is non-decreasing in j";
    ArgmaxAttains => "tables.argmax_attains", "I(j,u) is even, <= j, attains the running max and is idempotent";
    XIndexDefinition => "tables.x_index_definition", "x1, x2 exist and x1, x2, x3 equal an exhaustive search; x3 saturates only when nothing qualifies";
    XIndexMinimal => "tables.x_index_minimal", "the even index below each x (when >= its start) fails the inequality";
    ScaleCandidates => "scale.candidates", "D is sorted, deduplicated and holds every pivot distance and estimator value";
    ScaleUpBound => "scale.up_bound", "for d in D, up(d) is the least element of the filtered scale >= d and d <= up(d) <= 2d";
    ScaleSpacing => "scale.spacing", "consecutive filtered values differ by at least a factor of two";
    ScaleMembership => "scale.node_membership", "L_u is the sorted distinct set of up(pdist(u,i)) and lies in the filtered scale";
    ScaleOffsets => "scale.offset_navigation", "constant-time offsets in the filtered scale and in L_u match a linear scan";
    EvenMaps => "scale.even_maps", "even-index extremes of each L_u entry match a brute-force scan";
    EstimatorContract => "estimator.contract", "dist <= estimate <= S dist and estimate is symmetric";
    EstimatorValueSet => "estimator.value_set", "every estimate lies in the declared ascending value set";
    QueryStretch => "query.stretch", "dist <= query <= (2k-1) dist";
    BunchHitExact => "query.bunch_hit_exact", "s in B(t) or t in B(s) gives the exact distance";
    CheckLemma => "query.check_contract", "index check: NONE only below k-2 with dist >= max_gap/2, else dist <= value <= max((2k-1) dist, 2 pdist(s,i-2) + 3 dist)";
    GapClaim => "query.gap_claim", "dist >= gap_i(s)/2 or p_{i-2}(s) in B(t) or p_{i-1}(t) in B(s)";
    LegitimatePair => "query.legitimate_pair", "every emitted level pair satisfies the four pair conditions";
    PairEstimate => "query.pair_estimate", "the final estimate from a legitimate pair succeeds within (2k-1) dist";
    CounterCaps => "query.counter_caps", "non-fallback queries stay within the probe, descent, ascent and check caps";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub description: String,
    pub evaluated: u64,
    pub violations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDescriptor {
    pub nodes: usize,
    pub edges: usize,
    pub components: usize,
    pub min_weight: Option<f64>,
    pub max_weight: Option<f64>,
}

/// Stretch bucket `(lower, upper]`; the first bucket holds exact answers and
/// the last one (no upper bound) anything above `2k−1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: Option<f64>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstPair {
    pub s: NodeId,
    pub t: NodeId,
    pub dist: f64,
    pub answer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub probe_iters: usize,
    pub descent_iters: usize,
    pub ascent_iters: usize,
    pub checks: usize,
    pub work: usize,
}

impl Counters {
    fn of(stats: &QueryStats) -> Self {
        Counters {
            probe_iters: stats.probe_iters,
            descent_iters: stats.descent_iters,
            ascent_iters: stats.ascent_iters,
            checks: stats.checks,
            work: stats.work(),
        }
    }

    fn max(self, o: Self) -> Self {
        Counters {
            probe_iters: self.probe_iters.max(o.probe_iters),
            descent_iters: self.descent_iters.max(o.descent_iters),
            ascent_iters: self.ascent_iters.max(o.ascent_iters),
            checks: self.checks.max(o.checks),
            work: self.work.max(o.work),
        }
    }

    fn within(&self, caps: &Counters) -> bool {
        self.probe_iters <= caps.probe_iters
            && self.descent_iters <= caps.descent_iters
            && self.ascent_iters <= caps.ascent_iters
            && self.checks <= caps.checks
            && self.work <= caps.work
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BunchTotals {
    pub entries: usize,
    /// `k · n^{1+1/k}`.
    pub scale: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub graph: GraphDescriptor,
    pub k: usize,
    pub oracle_seed: u64,
    pub sampling_seed: u64,
    pub estimator: EstimatorConfig,
    pub estimator_stretch: f64,
    pub tz_only: bool,
    pub selection: PairSelection,
    pub pairs_audited: u64,
    pub connected_pairs: u64,
    pub stretch_limit: f64,
    pub worst_stretch: f64,
    pub worst_pair: Option<WorstPair>,
    pub worst_tz_stretch: f64,
    pub stretch_histogram: Vec<HistogramBin>,
    pub fallback_count: u64,
    pub fallback_rate: f64,
    pub fallback_reasons: BTreeMap<FallbackReason, u64>,
    pub branches: BTreeMap<Branch, u64>,
    pub counter_caps: Counters,
    /// Maxima over queries that did not fall back.
    pub counter_maxima: Counters,
    pub tz_steps_max: usize,
    pub tz_steps_mean: f64,
    pub level_pairs_emitted: u64,
    pub bunch: BunchTotals,
    pub checks: Vec<CheckOutcome>,
    pub violation_count: u64,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tally {
    evaluated: Vec<u64>,
    failed: Vec<u64>,
    recorded: Vec<Violation>,
    cap: usize,
}

impl Tally {
    fn new(cap: usize) -> Self {
        let n = CheckId::ALL.len();
        Tally { evaluated: vec![0; n], failed: vec![0; n], recorded: Vec::new(), cap }
    }

    fn record(&mut self, id: CheckId, ok: bool, detail: impl FnOnce() -> String) {
        self.evaluated[id as usize] += 1;
        if !ok {
            self.failed[id as usize] += 1;
            if self.recorded.len() < self.cap {
                self.recorded.push(Violation { check: id.name().to_string(), detail: detail() });
            }
        }
    }

    fn merge(&mut self, o: Tally) {
        for (a, b) in self.evaluated.iter_mut().zip(o.evaluated) {
            *a += b;
        }
        for (a, b) in self.failed.iter_mut().zip(o.failed) {
            *a += b;
        }
        let room = self.cap.saturating_sub(self.recorded.len());
        self.recorded.extend(o.recorded.into_iter().take(room));
    }
}

/// Per-pair accumulator; one per worker chunk, merged in input order.
struct PairAcc {
    tally: Tally,
    hist: Vec<u64>,
    pairs: u64,
    connected: u64,
    worst: f64,
    worst_pair: Option<WorstPair>,
    worst_tz: f64,
    fallbacks: u64,
    reasons: BTreeMap<FallbackReason, u64>,
    branches: BTreeMap<Branch, u64>,
    maxima: Counters,
    tz_steps_max: usize,
    tz_steps_sum: u64,
    emitted: u64,
}

impl PairAcc {
    fn new(cap: usize, bins: usize) -> Self {
        PairAcc {
            tally: Tally::new(cap),
            hist: vec![0; bins],
            pairs: 0,
            connected: 0,
            worst: 0.0,
            worst_pair: None,
            worst_tz: 0.0,
            fallbacks: 0,
            reasons: BTreeMap::new(),
            branches: BTreeMap::new(),
            maxima: Counters::default(),
            tz_steps_max: 0,
            tz_steps_sum: 0,
            emitted: 0,
        }
    }

    fn merge(&mut self, o: PairAcc) {
        self.tally.merge(o.tally);
        for (a, b) in self.hist.iter_mut().zip(o.hist) {
            *a += b;
        }
        self.pairs += o.pairs;
        self.connected += o.connected;
        if o.worst > self.worst {
            self.worst = o.worst;
            self.worst_pair = o.worst_pair;
        }
        self.worst_tz = self.worst_tz.max(o.worst_tz);
        self.fallbacks += o.fallbacks;
        for (r, c) in o.reasons {
            *self.reasons.entry(r).or_default() += c;
        }
        for (b, c) in o.branches {
            *self.branches.entry(b).or_default() += c;
        }
        self.maxima = self.maxima.max(o.maxima);
        self.tz_steps_max = self.tz_steps_max.max(o.tz_steps_max);
        self.tz_steps_sum += o.tz_steps_sum;
        self.emitted += o.emitted;
    }
}

/// Upper edges of the stretch histogram: exact, 1.5, 2, 3, …, 2k−1.
fn histogram_edges(k: usize) -> Vec<f64> {
    let mut edges = vec![1.0, 1.5];
    edges.extend((2..=2 * k - 1).map(|x| x as f64));
    edges
}

fn bin_of(edges: &[f64], ratio: f64) -> usize {
    edges.iter().position(|&e| approx_le(ratio, e)).unwrap_or(edges.len())
}

/// Audits every invariant of `oracle`.
pub fn audit<W: Weight>(
    oracle: &DistanceOracle<W>,
    options: &AuditOptions,
) -> Result<AuditReport, OracleError> {
    let n = oracle.graph().node_count();
    let pairs = match options.pairs {
        PairSelection::AllPairs if n > ALL_PAIRS_LIMIT => {
            return Err(OracleError::Audit(format!(
                "all-pairs mode supports at most {ALL_PAIRS_LIMIT} nodes, graph has {n}; use sampling"
            )))
        }
        PairSelection::AllPairs => None,
        PairSelection::Sample { count, seed } => Some(sample_pairs(n, count, seed)),
    };
    let cap = options.max_recorded;
    let mut tally = Tally::new(cap);
    graph_checks(oracle, &mut tally);
    tz_checks(oracle, &mut tally);
    table_checks(oracle, &mut tally);
    scale_checks(oracle, &mut tally);
    estimator_table_checks(oracle, &mut tally);

    let k = oracle.k();
    let edges = histogram_edges(k);
    let bins = edges.len() + 1;
    let chunks: Vec<PairAcc> = match &pairs {
        None => (0..n)
            .into_par_iter()
            .map(|s| {
                let mut acc = PairAcc::new(cap, bins);
                for t in (0..n).filter(|&t| t != s) {
                    audit_pair(oracle, s, t, &edges, &mut acc);
                }
                acc
            })
            .collect(),
        Some(list) => list
            .par_chunks(256)
            .map(|chunk| {
                let mut acc = PairAcc::new(cap, bins);
                for &(s, t) in chunk {
                    audit_pair(oracle, s, t, &edges, &mut acc);
                }
                acc
            })
            .collect(),
    };
    let mut acc = PairAcc::new(cap, bins);
    for c in chunks {
        acc.merge(c);
    }
    tally.merge(acc.tally);

    let mut lower = 0.0;
    let mut stretch_histogram: Vec<HistogramBin> = edges
        .iter()
        .zip(&acc.hist)
        .map(|(&e, &count)| {
            let bin = HistogramBin { lower, upper: Some(e), count };
            lower = e;
            bin
        })
        .collect();
    stretch_histogram.push(HistogramBin { lower, upper: None, count: acc.hist[edges.len()] });

    let checks: Vec<CheckOutcome> = CheckId::ALL
        .iter()
        .map(|&id| CheckOutcome {
            name: id.name().to_string(),
            description: id.description().to_string(),
            evaluated: tally.evaluated[id as usize],
            violations: tally.failed[id as usize],
        })
        .collect();
    let violation_count = tally.failed.iter().sum();

    let entries = oracle.bunches().total_entries();
    let scale = bunch_size_scale(n, k);
    let params = oracle.params();
    let weights = oracle.graph().edges().iter().map(|e| e.w.to_f64_lossless());
    let config = oracle.config();
    Ok(AuditReport {
        graph: GraphDescriptor {
            nodes: n,
            edges: oracle.graph().edge_count(),
            components: count_components(oracle),
            min_weight: weights.clone().reduce(f64::min),
            max_weight: weights.reduce(f64::max),
        },
        k,
        oracle_seed: config.seed,
        sampling_seed: oracle.levels().seed(),
        estimator: config.estimator,
        estimator_stretch: oracle.estimator().stretch_bound(),
        tz_only: oracle.tz_only(),
        selection: options.pairs,
        pairs_audited: acc.pairs,
        connected_pairs: acc.connected,
        stretch_limit: (2 * k - 1) as f64,
        worst_stretch: acc.worst.max(1.0),
        worst_pair: acc.worst_pair,
        worst_tz_stretch: acc.worst_tz.max(1.0),
        stretch_histogram,
        fallback_count: acc.fallbacks,
        fallback_rate: if acc.connected == 0 { 0.0 } else { acc.fallbacks as f64 / acc.connected as f64 },
        fallback_reasons: acc.reasons,
        branches: acc.branches,
        counter_caps: Counters {
            probe_iters: params.probe_cap(),
            descent_iters: params.descent_cap(),
            ascent_iters: params.ascent_cap(),
            checks: CHECK_CAP,
            work: params.work_bound(),
        },
        counter_maxima: acc.maxima,
        tz_steps_max: acc.tz_steps_max,
        tz_steps_mean: if acc.connected == 0 { 0.0 } else { acc.tz_steps_sum as f64 / acc.connected as f64 },
        level_pairs_emitted: acc.emitted,
        bunch: BunchTotals {
            entries,
            scale,
            bound: BUNCH_SLACK * scale,
            ratio: if scale > 0.0 { entries as f64 / scale } else { 0.0 },
        },
        checks,
        violation_count,
        violations: tally.recorded,
    })
}

pub(crate) fn sample_pairs(n: usize, count: usize, seed: u64) -> Vec<(NodeId, NodeId)> {
    if n < 2 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let s = rng.gen_range(0..n);
            let t = (s + rng.gen_range(1..n)) % n;
            (s, t)
        })
        .collect()
}

fn count_components<W: Weight>(oracle: &DistanceOracle<W>) -> usize {
    let mut labels = oracle.tz().components.clone();
    labels.sort_unstable();
    labels.dedup();
    labels.len()
}

fn f<W: Weight>(w: W) -> f64 {
    w.to_f64_lossless()
}

fn graph_checks<W: Weight>(oracle: &DistanceOracle<W>, tally: &mut Tally) {
    let g = oracle.graph();
    let ex = oracle.exact();
    let n = g.node_count();
    for u in 0..n {
        tally.record(CheckId::ExactSymmetric, ex.dist(u, u) == W::zero(), || {
            format!("dist({u},{u}) = {}", ex.dist(u, u))
        });
        for v in u + 1..n {
            let (a, b) = (f(ex.dist(u, v)), f(ex.dist(v, u)));
            tally.record(CheckId::ExactSymmetric, approx_eq(a, b), || {
                format!("dist({u},{v}) = {a} but dist({v},{u}) = {b}")
            });
        }
    }
    if n <= TRIANGLE_LIMIT {
        let cap = tally.cap;
        let rows: Vec<Tally> = (0..n)
            .into_par_iter()
            .map(|u| {
                let mut t = Tally::new(cap);
                for v in 0..n {
                    let uv = f(ex.dist(u, v));
                    for w in 0..n {
                        let uw = f(ex.dist(u, w));
                        t.record(CheckId::ExactTriangle, approx_le(uw, uv + f(ex.dist(v, w))), || {
                            format!("dist({u},{w}) = {uw} exceeds the route through {v}")
                        });
                    }
                }
                t
            })
            .collect();
        for t in rows {
            tally.merge(t);
        }
    }
    if n <= REFERENCE_LIMIT {
        for s in 0..n {
            let mut d = vec![f64::INFINITY; n];
            d[s] = 0.0;
            for _ in 0..n {
                let mut changed = false;
                for e in g.edges() {
                    let w = f(e.w);
                    for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                        if d[a] + w < d[b] {
                            d[b] = d[a] + w;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            for (t, &want) in d.iter().enumerate() {
                let got = f(ex.dist(s, t));
                tally.record(CheckId::ExactReference, approx_eq(got, want), || {
                    format!("dist({s},{t}) = {got}, Bellman-Ford gives {want}")
                });
            }
        }
    }
}

fn tz_checks<W: Weight>(oracle: &DistanceOracle<W>, tally: &mut Tally) {
    let n = oracle.graph().node_count();
    let k = oracle.k();
    let ex = oracle.exact();
    let levels = oracle.levels();
    let pivots = oracle.pivots();
    let bunches = oracle.bunches();

    for v in 0..n {
        let nested = levels.contains(0, v) && (1..k).all(|i| !levels.contains(i, v) || levels.contains(i - 1, v));
        tally.record(CheckId::LevelsNested, nested, || format!("node {v} breaks level nesting"));
    }
    tally.record(CheckId::LevelsNested, !levels.members(k - 1).is_empty(), || {
        format!("top level A_{} is empty", k - 1)
    });

    let members: Vec<Vec<NodeId>> = (0..k).map(|i| levels.members(i)).collect();
    let cap = tally.cap;
    let node_tallies: Vec<Tally> = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut t = Tally::new(cap);
            for (i, set) in members.iter().enumerate() {
                let best = set.iter().map(|&w| f(ex.dist(v, w))).fold(f64::INFINITY, f64::min);
                let pd = f(pivots.pdist(v, i));
                let ok = match pivots.pivot(v, i) {
                    Some(p) => {
                        levels.contains(i, p) && approx_eq(pd, best) && approx_eq(f(ex.dist(v, p)), best)
                    }
                    None => best.is_infinite() && pd.is_infinite(),
                };
                t.record(CheckId::PivotsExact, ok, || {
                    format!("node {v} level {i}: pivot {:?} at {pd}, nearest member at {best}", pivots.pivot(v, i))
                });
            }
            for w in 0..n {
                let d = f(ex.dist(v, w));
                let limit = f(pivots.pdist(v, levels.level(w) + 1));
                let expect = d.is_finite() && d < limit;
                let stored = bunches.get(v, w);
                t.record(CheckId::BunchMembership, expect == stored.is_some(), || {
                    format!(
                        "node {w} {} B({v}) but dist {d} vs next pivot distance {limit}",
                        if stored.is_some() { "in" } else { "missing from" }
                    )
                });
                if let Some(b) = stored {
                    t.record(CheckId::BunchDistances, approx_eq(f(b), d), || {
                        format!("B({v}) stores {w} at {}, exact {d}", f(b))
                    });
                }
            }
            t
        })
        .collect();
    for t in node_tallies {
        tally.merge(t);
    }
    let entries = bunches.total_entries() as f64;
    let bound = BUNCH_SLACK * bunch_size_scale(n, k);
    tally.record(CheckId::BunchSize, entries <= bound, || {
        format!("{entries} bunch entries exceed {bound}")
    });
}

fn table_checks<W: Weight>(oracle: &DistanceOracle<W>, tally: &mut Tally) {
    let n = oracle.graph().node_count();
    let k = oracle.k();
    let pivots = oracle.pivots();
    let deltas = oracle.deltas();
    let top = max_even(k);
    for u in (0..n).filter(|&u| pivots.is_complete(u)) {
        // Literal recomputation, independent of the incremental build.
        let gap = |j: usize| f(pivots.pdist(u, j)) - f(pivots.pdist(u, j - 2));
        for j in 0..k {
            let evens: Vec<usize> = even_indices(k).filter(|&i| i <= j).collect();
            let max = evens.iter().map(|&i| gap(i)).fold(0.0, f64::max);
            let ok_delta = j < 2 || j % 2 == 1 || approx_eq(f(deltas.delta(u, j)), gap(j));
            let ok_max = approx_eq(f(deltas.max_delta(u, j)), max);
            tally.record(CheckId::DeltaDefinition, ok_delta && ok_max, || {
                format!("node {u} j={j}: stored max gap {}, literal {max}", f(deltas.max_delta(u, j)))
            });
            if j + 1 < k {
                tally.record(CheckId::DeltaMonotone, deltas.max_delta(u, j) <= deltas.max_delta(u, j + 1), || {
                    format!("node {u}: max gap drops from j={j} to j={}", j + 1)
                });
            }
            if j >= 2 {
                let arg = deltas.argmax(u, j);
                let literal = evens.iter().copied().find(|&i| approx_eq(gap(i), max));
                tally.record(CheckId::DeltaDefinition, literal == Some(arg), || {
                    format!("node {u} j={j}: argmax {arg}, literal {literal:?}")
                });
                let ok = arg % 2 == 0
                    && (2..=j).contains(&arg)
                    && approx_eq(f(deltas.delta(u, arg)), f(deltas.max_delta(u, j)))
                    && deltas.argmax(u, arg) == arg;
                tally.record(CheckId::ArgmaxAttains, ok, || format!("node {u} j={j}: argmax {arg}"));
            }
        }

        let Some(x) = oracle.x_indices() else { continue };
        let big = |j: usize| f(deltas.max_delta(u, j));
        let holds_from = |base: usize, rhs: f64, x: usize| (x - base) as f64 * (big(x) - big(base)) >= rhs;
        let slack = |base: usize, x: usize| (k as f64 - x as f64 - 2.0) * big(base);
        for i in even_indices(k) {
            let e = x.get(u, i).expect("complete node has a row");
            let (x1, x2, x3) = (e.x1 as usize, e.x2 as usize, e.x3 as usize);
            let first = |from: usize, pred: &dyn Fn(usize) -> bool| (from..=top).step_by(2).find(|&c| pred(c));
            let b1 = first(i, &|c| holds_from(i, slack(i, c), c));
            let b2 = b1.and_then(|b1| first(b1, &|c| holds_from(b1, slack(b1, c), c)));
            let b3 = match (b1, b2) {
                (Some(b1), Some(b2)) => first(b2, &|c| holds_from(b2, b1 as f64 * (big(b2) - big(b1)), c)),
                _ => None,
            };
            let ok = b1 == Some(x1)
                && b2 == Some(x2)
                && match b3 {
                    Some(b3) => b3 == x3 && !e.x3_saturated,
                    None => e.x3_saturated && x3 == top,
                };
            tally.record(CheckId::XIndexDefinition, ok, || {
                format!("node {u} i={i}: stored {:?}, exhaustive ({b1:?}, {b2:?}, {b3:?})", e)
            });
            let below_fails = |x: usize, base: usize, rhs: &dyn Fn(usize) -> f64| {
                x < base + 2 || !holds_from(base, rhs(x - 2), x - 2)
            };
            let ok = below_fails(x1, i, &|c| slack(i, c))
                && below_fails(x2, x1, &|c| slack(x1, c))
                && (e.x3_saturated || below_fails(x3, x2, &|_| x1 as f64 * (big(x2) - big(x1))));
            tally.record(CheckId::XIndexMinimal, ok, || format!("node {u} i={i}: {:?} not minimal", e));
        }
    }
}

fn scale_checks<W: Weight>(oracle: &DistanceOracle<W>, tally: &mut Tally) {
    let n = oracle.graph().node_count();
    let k = oracle.k();
    let scale = oracle.scale();
    let pivots = oracle.pivots();
    let ns = oracle.node_scales();
    let values = scale.values();
    let filtered = scale.filtered();

    let sorted = values.windows(2).all(|w| w[0] < w[1]);
    tally.record(CheckId::ScaleCandidates, sorted, || "candidate set not strictly ascending".into());
    let in_d = |d: W| values.binary_search_by(|x| x.partial_cmp(&d).expect("finite")).is_ok();
    for u in 0..n {
        for i in 0..k {
            let d = pivots.pdist(u, i);
            if d.is_finite() {
                tally.record(CheckId::ScaleCandidates, in_d(d), || {
                    format!("pdist({u},{i}) = {} missing from candidate set", f(d))
                });
            }
        }
    }
    for &d in oracle.estimator().value_set() {
        tally.record(CheckId::ScaleCandidates, in_d(d), || {
            format!("estimator value {} missing from candidate set", f(d))
        });
    }

    for &d in values {
        let up = scale.up(d);
        let least = filtered.iter().copied().find(|&x| x >= d);
        let ok = match up {
            Some(u) => Some(u) == least && d <= u && approx_le(f(u), 2.0 * f(d)),
            None => false,
        };
        tally.record(CheckId::ScaleUpBound, ok, || {
            format!("up({}) = {:?}, least filtered value above is {:?}", f(d), up.map(f), least.map(f))
        });
    }
    for w in filtered.windows(2) {
        tally.record(CheckId::ScaleSpacing, 2.0 * f(w[0]) <= f(w[1]), || {
            format!("filtered values {} and {} closer than a factor of two", f(w[0]), f(w[1]))
        });
    }

    let naive = |len: usize, p: usize, off: isize| -> usize {
        let mut q = p;
        for _ in 0..off.unsigned_abs() {
            if off > 0 && q + 1 < len {
                q += 1;
            } else if off < 0 && q > 0 {
                q -= 1;
            }
        }
        q
    };
    for j in 0..filtered.len() {
        tally.record(CheckId::ScaleMembership, scale.index_of(filtered[j]) == Some(j), || {
            format!("filtered value {} not indexed at {j}", f(filtered[j]))
        });
        for off in -OFFSET_SPAN..=OFFSET_SPAN {
            let got = scale.offset(filtered[j], off).ok();
            let want = filtered[naive(filtered.len(), j, off)];
            tally.record(CheckId::ScaleOffsets, got == Some(want), || {
                format!("offset({}, {off}) = {:?}, linear scan gives {}", f(filtered[j]), got.map(f), f(want))
            });
        }
    }

    for u in 0..n {
        let mut want: Vec<W> = (1..k)
            .map(|i| pivots.pdist(u, i))
            .filter(|d| d.is_finite())
            .filter_map(|d| filtered.iter().copied().find(|&x| x >= d))
            .collect();
        want.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        want.dedup();
        let got = ns.values(u, scale);
        let positions_ok = got.iter().enumerate().all(|(p, &d)| {
            scale.index_of(d).and_then(|j| ns.position(u, j)) == Some(p)
        });
        tally.record(CheckId::ScaleMembership, got == want && positions_ok, || {
            format!("L_{u} = {:?}, expected {:?}", got.iter().map(|&d| f(d)).collect::<Vec<_>>(), want.iter().map(|&d| f(d)).collect::<Vec<_>>())
        });
        for (p, &d) in got.iter().enumerate() {
            for off in -OFFSET_SPAN..=OFFSET_SPAN {
                let stored = ns.lu_offset(scale, u, d, off).ok().map(|(v, _)| v);
                let expect = got[naive(got.len(), p, off)];
                tally.record(CheckId::ScaleOffsets, stored == Some(expect), || {
                    format!("L_{u}[{}, {off}] = {:?}, linear scan gives {}", f(d), stored.map(f), f(expect))
                });
            }
            let evens: Vec<usize> = even_indices(k)
                .filter(|&i| {
                    let pd = pivots.pdist(u, i);
                    pd.is_finite() && filtered.iter().copied().find(|&x| x >= pd) == Some(d)
                })
                .collect();
            let want = evens.first().map(|&lo| (*evens.last().expect("non-empty"), lo));
            let stored = ns.even_maps(scale, u, d).ok().flatten();
            tally.record(CheckId::EvenMaps, stored == want, || {
                format!("node {u} entry {}: even extremes {stored:?}, brute force {want:?}", f(d))
            });
        }
    }
}

fn estimator_table_checks<W: Weight>(oracle: &DistanceOracle<W>, tally: &mut Tally) {
    let vs = oracle.estimator().value_set();
    tally.record(CheckId::EstimatorValueSet, vs.windows(2).all(|w| w[0] < w[1]), || {
        "estimator value set not strictly ascending".into()
    });
}

fn audit_pair<W: Weight>(
    oracle: &DistanceOracle<W>,
    s: NodeId,
    t: NodeId,
    edges: &[f64],
    acc: &mut PairAcc,
) {
    let k = oracle.k();
    let limit = (2 * k - 1) as f64;
    let ex = oracle.exact();
    let tz = oracle.tz();
    let pivots = oracle.pivots();
    let bunches = oracle.bunches();
    let deltas = oracle.deltas();
    let tally = &mut acc.tally;
    acc.pairs += 1;

    let d = f(ex.dist(s, t));
    let trace = oracle.query_traced(s, t);
    let q = f(trace.distance);
    let (tq, steps) = tz.query(s, t);
    let tq = f(tq);
    *acc.branches.entry(trace.stats.branch).or_default() += 1;

    let within = |x: f64| approx_le(d, x) && approx_le(x, limit * d);
    if d.is_infinite() {
        tally.record(CheckId::QueryStretch, q.is_infinite(), || format!("({s},{t}) disconnected but query gave {q}"));
        tally.record(CheckId::TzStretch, tq.is_infinite(), || format!("({s},{t}) disconnected but tz gave {tq}"));
        return;
    }
    acc.connected += 1;
    acc.tz_steps_max = acc.tz_steps_max.max(steps);
    acc.tz_steps_sum += steps as u64;

    tally.record(CheckId::QueryStretch, within(q), || format!("({s},{t}): query {q}, dist {d}, stats {:?}", trace.stats));
    tally.record(CheckId::TzStretch, within(tq), || format!("({s},{t}): tz {tq}, dist {d}"));
    let ratio = |x: f64| if d > 0.0 { x / d } else if x == 0.0 { 1.0 } else { f64::INFINITY };
    let r = ratio(q);
    acc.hist[bin_of(edges, r)] += 1;
    if r > acc.worst {
        acc.worst = r;
        acc.worst_pair = Some(WorstPair { s, t, dist: d, answer: q });
    }
    acc.worst_tz = acc.worst_tz.max(ratio(tq));

    let est = oracle.estimator().estimate(s, t);
    let (e, back) = (f(est), f(oracle.estimator().estimate(t, s)));
    let stretch = oracle.estimator().stretch_bound();
    tally.record(CheckId::EstimatorContract, approx_le(d, e) && approx_le(e, stretch * d) && e == back, || {
        format!("({s},{t}): estimate {e} (reverse {back}), dist {d}, bound {stretch}")
    });
    let vs = oracle.estimator().value_set();
    tally.record(CheckId::EstimatorValueSet, vs.iter().any(|&v| v == est), || {
        format!("({s},{t}): estimate {e} outside the value set")
    });

    if bunches.contains(s, t) || bunches.contains(t, s) {
        tally.record(CheckId::BunchHitExact, approx_eq(q, d), || format!("({s},{t}): bunch hit returned {q}, dist {d}"));
    }

    match trace.stats.fallback {
        Some(reason) => {
            acc.fallbacks += 1;
            *acc.reasons.entry(reason).or_default() += 1;
        }
        None => {
            let used = Counters::of(&trace.stats);
            let params = oracle.params();
            let caps = Counters {
                probe_iters: params.probe_cap(),
                descent_iters: params.descent_cap(),
                ascent_iters: params.ascent_cap(),
                checks: CHECK_CAP,
                work: params.work_bound(),
            };
            tally.record(CheckId::CounterCaps, used.within(&caps), || format!("({s},{t}): counters {used:?}"));
            acc.maxima = acc.maxima.max(used);
        }
    }

    if !(pivots.is_complete(s) && pivots.is_complete(t)) {
        return;
    }
    for i in even_indices(k) {
        let c = oracle.check(s, t, i);
        let (ok, what) = match c {
            Check::None => (i + 2 < k && approx_le(f(deltas.max_delta(s, i)) / 2.0, d), "none".to_string()),
            Check::Bunch(v) | Check::TopLevel(v) => {
                let v = f(v);
                let cap = (limit * d).max(2.0 * f(pivots.pdist(s, i - 2)) + 3.0 * d);
                (approx_le(d, v) && approx_le(v, cap), v.to_string())
            }
        };
        tally.record(CheckId::CheckLemma, ok, || format!("check({s},{t},{i}) = {what}, dist {d}"));

        let near = approx_le(f(deltas.delta(s, i)) / 2.0, d);
        let via_s = pivots.pivot(s, i - 2).is_some_and(|p| bunches.contains(t, p));
        let via_t = pivots.pivot(t, i - 1).is_some_and(|p| bunches.contains(s, p));
        tally.record(CheckId::GapClaim, near || via_s || via_t, || {
            format!("({s},{t}) i={i}: gap {} vs dist {d}, no pivot in the other bunch", f(deltas.delta(s, i)))
        });
    }

    if let Some(pair) = trace.pair {
        acc.emitted += 1;
        let legit = legitimate(oracle, pair, d);
        tally.record(CheckId::LegitimatePair, legit.is_ok(), || {
            format!("({s},{t}) emitted {pair:?}: {}", legit.clone().err().unwrap_or_default())
        });
        if legit.is_ok() {
            let mut scratch = QueryStats::default();
            let out = oracle.finish(pair.s, pair.t, pair.i1, pair.i2, &mut scratch);
            let ok = matches!(out, Ok((v, _)) if within(f(v)));
            tally.record(CheckId::PairEstimate, ok, || {
                format!("({s},{t}) pair {pair:?}: estimate {:?}, dist {d}", out.map(|(v, b)| (f(v), b)))
            });
        }
    }
}

/// The four pair conditions, in the pair's own orientation.
fn legitimate<W: Weight>(oracle: &DistanceOracle<W>, pair: LevelPair, d: f64) -> Result<(), String> {
    let LevelPair { s, t, i1, i2 } = pair;
    let pivots = oracle.pivots();
    let bunches = oracle.bunches();
    let deltas = oracle.deltas();
    if i1 % 2 == 1 || i2 % 2 == 1 || i1 < 2 || i2 < 2 || i2 >= oracle.k() {
        return Err("indices not even levels".into());
    }
    let gap = f(deltas.max_delta(s, i1));
    if !approx_le(gap / 2.0, d) {
        return Err(format!("max gap at i1 is {gap}, more than twice dist {d}"));
    }
    let j = deltas.argmax(s, i2);
    let via_s = pivots.pivot(s, j - 2).is_some_and(|p| bunches.contains(t, p));
    let via_t = pivots.pivot(t, j - 1).is_some_and(|p| bunches.contains(s, p));
    if !(via_s || via_t) {
        return Err(format!("no pivot at argmax level {j} lands in the other bunch"));
    }
    let (hi, lo) = (f(pivots.pdist(s, i2)), f(pivots.pdist(s, i1)));
    if !approx_le(hi, 2.0 * lo) {
        return Err(format!("pdist at i2 is {hi}, more than twice {lo} at i1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::tests::fixture_config;
    use crate::oracle::OracleConfig;
    use crate::tz::tests::p5;

    fn fixture() -> DistanceOracle<f64> {
        DistanceOracle::build(p5(), fixture_config()).unwrap().0
    }

    #[test]
    fn fixture_audit_is_clean_and_exact() {
        let r = audit(&fixture(), &AuditOptions::default()).unwrap();
        assert!(r.passed(), "{:?}", r.violations);
        assert_eq!(r.worst_stretch, 1.0);
        assert_eq!(r.pairs_audited, 20);
        assert_eq!(r.checks.len(), CheckId::ALL.len());
        for name in ["query.check_contract", "query.gap_claim", "tz.bunch_membership", "scale.offset_navigation"] {
            assert!(r.check(name).unwrap().evaluated > 0, "{name}");
        }
    }

    #[test]
    fn corrupted_bunch_is_reported() {
        let (g, levels, pivots, mut bunches, config) = fixture().parts();
        *bunches.bunch_mut(0).get_mut(&3).unwrap() += 0.5;
        let o = DistanceOracle::from_parts(g, levels, pivots, bunches, config).unwrap();
        let r = audit(&o, &AuditOptions::default()).unwrap();
        assert!(!r.passed());
        assert!(r.check("tz.bunch_distances").unwrap().violations > 0);
    }

    #[test]
    fn sampled_audit_is_deterministic() {
        let o = fixture();
        let opts = AuditOptions { pairs: PairSelection::Sample { count: 40, seed: 5 }, max_recorded: 10 };
        let a = audit(&o, &opts).unwrap();
        assert_eq!(a, audit(&o, &opts).unwrap());
        assert_eq!(a.pairs_audited, 40);
    }

    #[test]
    fn all_pairs_limit_enforced() {
        let family = crate::generate::Family::Path { n: ALL_PAIRS_LIMIT + 1 };
        let g = crate::generate::generate::<f64>(&family, &crate::generate::WeightSpec::Unit, 0).unwrap();
        let o = DistanceOracle::build(g, OracleConfig::new(2, 0)).unwrap().0;
        assert!(audit(&o, &AuditOptions::default()).is_err());
    }

    #[test]
    fn histogram_edges_cover_the_stretch_range() {
        let e = histogram_edges(4);
        assert_eq!(e, vec![1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(bin_of(&e, 1.0), 0);
        assert_eq!(bin_of(&e, 1.2), 1);
        assert_eq!(bin_of(&e, 7.0), 7);
        assert_eq!(bin_of(&e, 7.5), 8);
    }
}
