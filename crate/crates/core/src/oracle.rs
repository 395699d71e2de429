//! Oracle assembly: the preprocessing pipeline and the immutable result.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::OracleError;
use crate::estimator::{CoarseEstimator, EstimatorConfig};
use crate::graph::{ExactOracle, Graph, NodeId};
use crate::query::QueryParams;
use crate::scale::{GlobalScale, NodeScales};
use crate::scalar::Weight;
use crate::tables::{DeltaTables, XIndexTable};
use crate::tz::{BunchSet, LevelAssignment, PivotTable, TzOracle};

/// Build configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub k: usize,
    pub seed: u64,
    pub estimator: EstimatorConfig,
    /// Explicit `A_1, …, A_{k-1}` instead of random sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_override: Option<Vec<Vec<NodeId>>>,
}

impl OracleConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        OracleConfig { k, seed, estimator: EstimatorConfig::Snap, level_override: None }
    }

    pub fn with_estimator(mut self, estimator: EstimatorConfig) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn with_levels(mut self, sets: Vec<Vec<NodeId>>) -> Self {
        self.level_override = Some(sets);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub millis: f64,
}

/// Table sizes and wall time of one build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub sampling_seed: u64,
    pub level_sizes: Vec<usize>,
    pub bunch_entries: usize,
    pub bunch_bound: f64,
    pub estimator_values: usize,
    pub candidate_distances: usize,
    pub filtered_scale: usize,
    pub node_scale_entries: usize,
    pub x_index_rows: usize,
    pub tz_only: bool,
    pub stages: Vec<StageTime>,
    pub total_millis: f64,
}

/// `k · n^{1+1/k}`, the expected order of the total bunch size.
pub fn bunch_size_scale(n: usize, k: usize) -> f64 {
    k as f64 * (n as f64).powf(1.0 + 1.0 / k as f64)
}

/// The complete constant-query-time oracle.
#[derive(Debug)]
pub struct DistanceOracle<W: Weight = f64> {
    pub(crate) graph: Arc<Graph<W>>,
    pub(crate) exact: Arc<ExactOracle<W>>,
    pub(crate) tz: TzOracle<W>,
    pub(crate) deltas: DeltaTables<W>,
    pub(crate) xindex: Option<XIndexTable>,
    pub(crate) estimator: Box<dyn CoarseEstimator<W>>,
    pub(crate) scale: GlobalScale<W>,
    pub(crate) node_scales: NodeScales,
    pub(crate) params: QueryParams,
    pub(crate) config: OracleConfig,
}

struct Stopwatch {
    start: Instant,
    last: Instant,
    stages: Vec<StageTime>,
}

impl Stopwatch {
    fn new() -> Self {
        let now = Instant::now();
        Stopwatch { start: now, last: now, stages: Vec::new() }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages.push(StageTime {
            stage: stage.to_string(),
            millis: (now - self.last).as_secs_f64() * 1e3,
        });
        self.last = now;
    }
}

impl<W: Weight> DistanceOracle<W> {
    /// Runs the whole pipeline: levels, pivots, bunches, gap tables, jump
    /// indices, estimator, global scale, node scales.
    pub fn build(graph: Graph<W>, config: OracleConfig) -> Result<(Self, BuildSummary), OracleError> {
        let mut clock = Stopwatch::new();
        let n = graph.node_count();
        let levels = match &config.level_override {
            Some(sets) => LevelAssignment::from_sets(n, config.k, sets)?,
            None => LevelAssignment::sample(n, config.k, config.seed)?,
        };
        clock.lap("levels");
        let pivots = PivotTable::compute(&graph, &levels);
        clock.lap("pivots");
        let bunches = BunchSet::compute(&graph, &levels, &pivots);
        clock.lap("bunches");
        let oracle = Self::assemble(graph, levels, pivots, bunches, config, Some(&mut clock))?;
        let summary = oracle.summary(clock);
        Ok((oracle, summary))
    }

    /// Assembles an oracle around an existing skeleton, recomputing every
    /// derived table. The skeleton is taken as given, which lets audits
    /// check deliberately corrupted inputs.
    pub fn from_parts(
        graph: Graph<W>,
        levels: LevelAssignment,
        pivots: PivotTable<W>,
        bunches: BunchSet<W>,
        config: OracleConfig,
    ) -> Result<Self, OracleError> {
        Self::assemble(graph, levels, pivots, bunches, config, None)
    }

    fn assemble(
        graph: Graph<W>,
        levels: LevelAssignment,
        pivots: PivotTable<W>,
        bunches: BunchSet<W>,
        config: OracleConfig,
        mut clock: Option<&mut Stopwatch>,
    ) -> Result<Self, OracleError> {
        let mut lap = |name: &str| {
            if let Some(c) = clock.as_deref_mut() {
                c.lap(name)
            }
        };
        let k = levels.k();
        let tz = TzOracle::from_parts(&graph, levels, pivots, bunches);
        let deltas = DeltaTables::compute(tz.pivots());
        lap("delta_tables");
        let xindex = XIndexTable::compute(&deltas, tz.pivots());
        lap("x_indices");
        let exact = Arc::new(ExactOracle::new(&graph));
        let estimator = config.estimator.build(exact.clone(), k)?;
        lap("estimator");
        let scale = GlobalScale::build(candidate_distances(&tz, estimator.value_set()));
        lap("global_scale");
        let node_scales = NodeScales::build(tz.pivots(), &scale);
        lap("node_scales");
        let params = QueryParams::for_stretch(estimator.stretch_bound(), k);
        Ok(DistanceOracle {
            graph: Arc::new(graph),
            exact,
            tz,
            deltas,
            xindex,
            estimator,
            scale,
            node_scales,
            params,
            config,
        })
    }

    fn summary(&self, clock: Stopwatch) -> BuildSummary {
        let n = self.graph.node_count();
        let k = self.k();
        BuildSummary {
            n,
            m: self.graph.edge_count(),
            k,
            sampling_seed: self.tz.levels().seed(),
            level_sizes: (0..k).map(|i| self.tz.levels().members(i).len()).collect(),
            bunch_entries: self.tz.bunches().total_entries(),
            bunch_bound: bunch_size_scale(n, k),
            estimator_values: self.estimator.value_set().len(),
            candidate_distances: self.scale.values().len(),
            filtered_scale: self.scale.filtered().len(),
            node_scale_entries: (0..n).map(|u| self.node_scales.len(u)).sum(),
            x_index_rows: self
                .xindex
                .as_ref()
                .map_or(0, |x| (0..n).filter(|&v| x.is_available(v)).count()),
            tz_only: self.xindex.is_none(),
            total_millis: (clock.last - clock.start).as_secs_f64() * 1e3,
            stages: clock.stages,
        }
    }

    pub fn k(&self) -> usize {
        self.tz.k()
    }

    /// Copies of the inputs [`from_parts`](Self::from_parts) takes.
    pub fn parts(&self) -> (Graph<W>, LevelAssignment, PivotTable<W>, BunchSet<W>, OracleConfig) {
        (
            (*self.graph).clone(),
            self.tz.levels().clone(),
            self.tz.pivots().clone(),
            self.tz.bunches().clone(),
            self.config.clone(),
        )
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn graph(&self) -> &Graph<W> {
        &self.graph
    }

    pub fn exact(&self) -> &ExactOracle<W> {
        &self.exact
    }

    pub fn tz(&self) -> &TzOracle<W> {
        &self.tz
    }

    pub fn levels(&self) -> &LevelAssignment {
        self.tz.levels()
    }

    pub fn pivots(&self) -> &PivotTable<W> {
        self.tz.pivots()
    }

    pub fn bunches(&self) -> &BunchSet<W> {
        self.tz.bunches()
    }

    pub fn deltas(&self) -> &DeltaTables<W> {
        &self.deltas
    }

    /// `None` in pivot-walk-only mode (`k < 4`).
    pub fn x_indices(&self) -> Option<&XIndexTable> {
        self.xindex.as_ref()
    }

    pub fn estimator(&self) -> &dyn CoarseEstimator<W> {
        self.estimator.as_ref()
    }

    pub fn scale(&self) -> &GlobalScale<W> {
        &self.scale
    }

    pub fn node_scales(&self) -> &NodeScales {
        &self.node_scales
    }

    pub fn params(&self) -> &QueryParams {
        &self.params
    }

    /// True when the constant-time path is disabled.
    pub fn tz_only(&self) -> bool {
        self.xindex.is_none()
    }
}

/// `D = D_TZ ∪ D_MN`: bunch distances, pivot distances for levels `1..k`,
/// and the estimator's value set.
pub fn candidate_distances<W: Weight>(tz: &TzOracle<W>, estimator_values: &[W]) -> Vec<W> {
    let n = tz.levels().node_count();
    let k = tz.k();
    let mut out: Vec<W> = Vec::new();
    for v in 0..n {
        out.extend(tz.bunches().bunch(v).values().copied());
        out.extend((1..k).map(|i| tz.pivots().pdist(v, i)));
    }
    out.extend_from_slice(estimator_values);
    out
}
