//! Query benchmark: per-query counters and latency of the constant-time
//! query against the pivot walk on the same sampled pairs.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::audit::{sample_pairs, Counters};
use crate::estimator::EstimatorConfig;
use crate::graph::NodeId;
use crate::oracle::DistanceOracle;
use crate::query::{Branch, FallbackReason, CHECK_CAP};
use crate::scalar::Weight;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub queries: usize,
    pub seed: u64,
}

/// Summary of a sample; nearest-rank percentiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl Distribution {
    /// `None` for an empty sample.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let rank = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Some(Distribution {
            count: v.len(),
            min: v[0],
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p50: rank(0.5),
            p90: rank(0.9),
            p99: rank(0.99),
            max: v[v.len() - 1],
        })
    }
}

/// One benchmarked pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub s: NodeId,
    pub t: NodeId,
    pub const_ns: f64,
    pub tz_ns: f64,
    pub probe_iters: usize,
    pub descent_iters: usize,
    pub ascent_iters: usize,
    pub checks: usize,
    pub work: usize,
    pub branch: Branch,
    pub fallback: Option<FallbackReason>,
    pub tz_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterSummary {
    pub probe_iters: Option<Distribution>,
    pub descent_iters: Option<Distribution>,
    pub ascent_iters: Option<Distribution>,
    pub checks: Option<Distribution>,
    pub work: Option<Distribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub k: usize,
    pub estimator: EstimatorConfig,
    pub queries: usize,
    pub seed: u64,
    pub const_latency_ns: Option<Distribution>,
    pub tz_latency_ns: Option<Distribution>,
    pub fallback_count: usize,
    pub fallback_rate: f64,
    /// Over queries that did not fall back.
    pub counters: CounterSummary,
    pub counter_caps: Counters,
    pub max_non_fallback_work: usize,
    pub tz_steps: Option<Distribution>,
    pub records: Vec<QueryRecord>,
}

pub fn bench<W: Weight>(oracle: &DistanceOracle<W>, options: &BenchOptions) -> BenchReport {
    let n = oracle.graph().node_count();
    let pairs = sample_pairs(n, options.queries, options.seed);
    let records: Vec<QueryRecord> = pairs
        .iter()
        .map(|&(s, t)| {
            let start = Instant::now();
            let (d, stats) = oracle.query_with_stats(black_box(s), black_box(t));
            let const_ns = start.elapsed().as_nanos() as f64;
            black_box(d);
            let start = Instant::now();
            let (d, tz_steps) = oracle.tz().query(black_box(s), black_box(t));
            let tz_ns = start.elapsed().as_nanos() as f64;
            black_box(d);
            QueryRecord {
                s,
                t,
                const_ns,
                tz_ns,
                probe_iters: stats.probe_iters,
                descent_iters: stats.descent_iters,
                ascent_iters: stats.ascent_iters,
                checks: stats.checks,
                work: stats.work(),
                branch: stats.branch,
                fallback: stats.fallback,
                tz_steps,
            }
        })
        .collect();

    let direct: Vec<&QueryRecord> = records.iter().filter(|r| r.fallback.is_none()).collect();
    let dist = |f: fn(&QueryRecord) -> usize| Distribution::of(direct.iter().map(|r| f(r) as f64));
    let fallback_count = records.len() - direct.len();
    let params = oracle.params();
    BenchReport {
        n,
        k: oracle.k(),
        estimator: oracle.config().estimator,
        queries: records.len(),
        seed: options.seed,
        const_latency_ns: Distribution::of(records.iter().map(|r| r.const_ns)),
        tz_latency_ns: Distribution::of(records.iter().map(|r| r.tz_ns)),
        fallback_count,
        fallback_rate: if records.is_empty() { 0.0 } else { fallback_count as f64 / records.len() as f64 },
        counters: CounterSummary {
            probe_iters: dist(|r| r.probe_iters),
            descent_iters: dist(|r| r.descent_iters),
            ascent_iters: dist(|r| r.ascent_iters),
            checks: dist(|r| r.checks),
            work: dist(|r| r.work),
        },
        counter_caps: Counters {
            probe_iters: params.probe_cap(),
            descent_iters: params.descent_cap(),
            ascent_iters: params.ascent_cap(),
            checks: CHECK_CAP,
            work: params.work_bound(),
        },
        max_non_fallback_work: direct.iter().map(|r| r.work).max().unwrap_or(0),
        tz_steps: Distribution::of(records.iter().map(|r| r.tz_steps as f64)),
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::tests::fixture_config;
    use crate::tz::tests::p5;

    #[test]
    fn nearest_rank_percentiles() {
        let d = Distribution::of((1..=100).map(f64::from)).unwrap();
        assert_eq!((d.min, d.p50, d.p90, d.p99, d.max), (1.0, 50.0, 90.0, 99.0, 100.0));
        assert_eq!(d.mean, 50.5);
        assert!(Distribution::of(std::iter::empty()).is_none());
    }

    #[test]
    fn zero_queries_gives_empty_report() {
        let o = DistanceOracle::build(p5(), fixture_config()).unwrap().0;
        let r = bench(&o, &BenchOptions { queries: 0, seed: 1 });
        assert_eq!(r.queries, 0);
        assert!(r.records.is_empty() && r.const_latency_ns.is_none());
        assert_eq!(r.fallback_rate, 0.0);
    }

    #[test]
    fn records_follow_the_seed() {
        let o = DistanceOracle::build(p5(), fixture_config()).unwrap().0;
        let a = bench(&o, &BenchOptions { queries: 50, seed: 9 });
        let b = bench(&o, &BenchOptions { queries: 50, seed: 9 });
        let key = |r: &BenchReport| r.records.iter().map(|q| (q.s, q.t, q.work, q.branch)).collect::<Vec<_>>();
        assert_eq!(key(&a), key(&b));
        assert!(a.records.iter().all(|q| q.s != q.t));
    }
}
