//! End-to-end acceptance suite. Runs without the libtest harness so that
//! every criterion prints exactly one PASS/FAIL line; the process exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::Instant;

use distance_oracle::audit::{audit, AuditOptions, AuditReport, PairSelection};
use distance_oracle::bench::{bench, BenchOptions};
use distance_oracle::oracle::bunch_size_scale;
use distance_oracle::tz::TzOracle;
use distance_oracle::{
    DistanceOracle, EstimatorConfig, Family, GeneratorConfig, Graph, OracleConfig, WeightSpec,
};
use rayon::prelude::*;

const MILLION: WeightSpec = WeightSpec::Uniform { lo: 1, hi: 1_000_000 };

struct Outcome {
    pass: bool,
    detail: String,
}

/// Violation and evaluation totals per named check across many audits.
#[derive(Default)]
struct Totals {
    audits: usize,
    pairs: u64,
    evaluated: BTreeMap<String, u64>,
    violations: BTreeMap<String, u64>,
    first: BTreeMap<String, String>,
    worst_ratio_to_limit: f64,
    worst_stretch: f64,
    emitted: u64,
    fallbacks: u64,
    connected: u64,
}

impl Totals {
    fn add(&mut self, label: &str, r: &AuditReport) {
        self.audits += 1;
        self.pairs += r.pairs_audited;
        self.emitted += r.level_pairs_emitted;
        self.fallbacks += r.fallback_count;
        self.connected += r.connected_pairs;
        self.worst_stretch = self.worst_stretch.max(r.worst_stretch);
        self.worst_ratio_to_limit = self.worst_ratio_to_limit.max(r.worst_stretch / r.stretch_limit);
        for c in &r.checks {
            *self.evaluated.entry(c.name.clone()).or_default() += c.evaluated;
            *self.violations.entry(c.name.clone()).or_default() += c.violations;
        }
        for v in &r.violations {
            self.first.entry(v.check.clone()).or_insert_with(|| format!("{label}: {}", v.detail));
        }
    }

    fn evaluated(&self, name: &str) -> u64 {
        self.evaluated.get(name).copied().unwrap_or(0)
    }

    fn violations(&self, name: &str) -> u64 {
        self.violations.get(name).copied().unwrap_or(0)
    }

    /// Passes when every named check ran at least once and never failed.
    fn verdict(&self, names: &[&str]) -> Outcome {
        let mut parts = Vec::new();
        let mut pass = true;
        for &name in names {
            let (e, v) = (self.evaluated(name), self.violations(name));
            pass &= e > 0 && v == 0;
            parts.push(format!("{name} {v}/{e}"));
            if v > 0 {
                parts.push(format!("first: {}", self.first.get(name).cloned().unwrap_or_default()));
            }
        }
        Outcome { pass, detail: parts.join("; ") }
    }
}

fn graph(family: Family, weights: WeightSpec, seed: u64) -> Graph {
    GeneratorConfig::new(family, weights, seed).generate().expect("valid generator parameters")
}

fn build(g: Graph, k: usize, seed: u64, estimator: EstimatorConfig) -> DistanceOracle {
    DistanceOracle::build(g, OracleConfig::new(k, seed).with_estimator(estimator))
        .expect("build succeeds")
        .0
}

fn radius_for(n: usize) -> f64 {
    (10.0 / (std::f64::consts::PI * n as f64)).sqrt()
}

/// Thirty-two graphs over the four families with 50 ≤ n ≤ 400.
fn stretch_corpus() -> Vec<(String, Graph)> {
    let sizes = [50usize, 100, 150, 200, 250, 300, 350, 400];
    let mut out = Vec::new();
    for (i, &n) in sizes.iter().enumerate() {
        let seed = 100 + i as u64;
        let side = (n as f64).sqrt().round() as usize;
        let families = [
            ("path", Family::Path { n }),
            ("grid", Family::Grid { rows: side, cols: n / side }),
            ("gnp", Family::Gnp { n, p: 8.0 / n as f64 }),
            ("geometric", Family::Geometric { n, radius: radius_for(n) }),
        ];
        for (name, family) in families {
            out.push((format!("{name}(n={n},seed={seed})"), graph(family, MILLION, seed)));
        }
    }
    out
}

/// Twenty graphs with n ≤ 100 for the exhaustive per-index audits.
fn small_corpus() -> Vec<(String, Graph, usize)> {
    (0..20u64)
        .map(|i| {
            let n = 60 + 2 * i as usize;
            let family = match i % 4 {
                0 => Family::Gnp { n, p: 6.0 / n as f64 },
                1 => Family::Geometric { n, radius: radius_for(n) },
                2 => Family::Grid { rows: 8, cols: n / 8 },
                _ => Family::Path { n },
            };
            let k = 4 + (i as usize % 5);
            (format!("{family:?} k={k} seed={i}"), graph(family, MILLION, i), k)
        })
        .collect()
}

fn run_audits(jobs: Vec<(String, DistanceOracle, AuditOptions)>) -> Totals {
    let reports: Vec<(String, AuditReport)> = jobs
        .into_iter()
        .map(|(label, o, opts)| {
            let r = audit(&o, &opts).expect("audit runs");
            (label, r)
        })
        .collect();
    let mut totals = Totals::default();
    for (label, r) in &reports {
        totals.add(label, r);
    }
    totals
}

struct Suites {
    stretch: Totals,
    small: Totals,
    wide: Totals,
    wide_rates: Vec<String>,
    path_direct: usize,
    path_pairs: u64,
}

fn run_suites() -> Suites {
    let all = AuditOptions::default();
    let mut jobs = Vec::new();
    for (label, g) in stretch_corpus() {
        for k in [4usize, 5, 6, 8] {
            jobs.push((format!("{label} k={k}"), build(g.clone(), k, 7, EstimatorConfig::Snap), all));
        }
    }
    let stretch = run_audits(jobs);

    let jobs = small_corpus()
        .into_iter()
        .map(|(label, g, k)| (label, build(g, k, 11, EstimatorConfig::Snap), all))
        .collect();
    let small = run_audits(jobs);

    // Injector at the top of its budget on graphs spanning many scales.
    let mut jobs = Vec::new();
    let mut wide_rates = Vec::new();
    let wide_weights = WeightSpec::Uniform { lo: 1, hi: 1 << 40 };
    for (i, k) in [4usize, 5, 6, 8].into_iter().enumerate() {
        let alpha = 64.0 * k as f64;
        let inject = EstimatorConfig::Inject { alpha, seed: 31 + i as u64 };
        let n = 300;
        let graphs = [
            ("geometric", graph(Family::Geometric { n, radius: radius_for(n) }, wide_weights, i as u64)),
            ("gnp", graph(Family::Gnp { n, p: 8.0 / n as f64 }, wide_weights, i as u64)),
            ("path-powers", graph(Family::Path { n: 40 }, WeightSpec::Powers { base: 4 }, i as u64)),
        ];
        for (name, g) in graphs {
            jobs.push((format!("{name} k={k} alpha={alpha}"), build(g, k, 13, inject), all));
        }
    }
    let reports: Vec<(String, AuditReport)> = jobs
        .into_iter()
        .map(|(label, o, opts)| (label, audit(&o, &opts).expect("audit runs")))
        .collect();
    let mut wide = Totals::default();
    for (label, r) in &reports {
        wide.add(label, r);
        wide_rates.push(format!("{label}: fallback {:.1}%", 100.0 * r.fallback_rate));
    }

    // Wide-range path, k = 6, alpha = 32, a thousand sampled pairs.
    let g = graph(Family::Path { n: 40 }, WeightSpec::Powers { base: 4 }, 0);
    let o = build(g, 6, 0, EstimatorConfig::Inject { alpha: 32.0, seed: 1 });
    let opts = AuditOptions { pairs: PairSelection::Sample { count: 1000, seed: 2 }, max_recorded: 20 };
    let r = audit(&o, &opts).expect("audit runs");
    let path_direct = r
        .branches
        .iter()
        .filter(|(b, _)| !matches!(b, distance_oracle::Branch::Fallback | distance_oracle::Branch::BunchHit))
        .map(|(_, &c)| c as usize)
        .sum();
    let path_pairs = r.pairs_audited;
    wide.add("path n=40 k=6 alpha=32", &r);
    wide_rates.push(format!("path n=40 k=6 alpha=32: fallback {:.1}%", 100.0 * r.fallback_rate));

    Suites { stretch, small, wide, wide_rates, path_direct, path_pairs }
}

fn stretch_soundness(s: &Suites) -> Outcome {
    let mut o = s.stretch.verdict(&["query.stretch", "tz.query_stretch"]);
    o.pass &= s.stretch.audits >= 30 * 4;
    o.detail = format!(
        "{} audits, {} pairs, worst stretch {:.3} ({:.2} of 2k-1); {}",
        s.stretch.audits, s.stretch.pairs, s.stretch.worst_stretch, s.stretch.worst_ratio_to_limit, o.detail
    );
    o
}

fn bunch_hit_exactness(s: &Suites) -> Outcome {
    let mut t = s.stretch.verdict(&["query.bunch_hit_exact"]);
    let small = s.small.verdict(&["query.bunch_hit_exact"]);
    t.pass &= small.pass;
    t.detail = format!("large corpus {}; small corpus {}", t.detail, small.detail);
    t
}

fn constant_work() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    let mut bounds = Vec::new();
    let mut walk_by_k = BTreeMap::new();
    let ks: Vec<usize> = (4..=16).collect();
    for n in [200usize, 1000, 2000] {
        let g = graph(Family::Gnp { n, p: 10.0 / n as f64 }, MILLION, n as u64);
        let runs: Vec<(usize, &str, distance_oracle::bench::BenchReport)> = ks
            .par_iter()
            .flat_map_iter(|&k| {
                let estimators = [
                    ("snap", EstimatorConfig::Snap),
                    ("inject", EstimatorConfig::Inject { alpha: 32.0 * k as f64, seed: k as u64 }),
                ];
                let g = g.clone();
                estimators.into_iter().map(move |(name, est)| {
                    let o = build(g.clone(), k, 3, est);
                    (k, name, bench(&o, &BenchOptions { queries: 2000, seed: 17 }))
                })
            })
            .collect();
        let mut maxima = Vec::new();
        for (k, name, r) in &runs {
            let caps = r.counter_caps;
            bounds.push(caps.work);
            let over = r.records.iter().filter(|q| q.fallback.is_none()).any(|q| {
                q.probe_iters > 11 || q.descent_iters > 12 || q.ascent_iters > 10 || q.checks > 6
            });
            pass &= !over && r.max_non_fallback_work <= caps.work;
            maxima.push(format!("k{k}/{name}:{}", r.max_non_fallback_work));
            if n == 2000 && *name == "snap" {
                walk_by_k.insert(*k, r.tz_steps.as_ref().map_or(0.0, |d| d.mean));
            }
        }
        lines.push(format!("n={n} max work [{}]", maxima.join(" ")));
    }
    bounds.dedup();
    pass &= bounds.len() == 1;
    let walk_first = walk_by_k[&4];
    let walk_last = walk_by_k[&16];
    pass &= walk_last > walk_first;
    Outcome {
        pass,
        detail: format!(
            "work bound {:?} for every k; tz mean walk at n=2000: k=4 {:.2}, k=8 {:.2}, k=12 {:.2}, k=16 {:.2}; {}",
            bounds,
            walk_first,
            walk_by_k[&8],
            walk_by_k[&12],
            walk_last,
            lines.join("; ")
        ),
    }
}

fn geometric_filter(s: &Suites) -> Outcome {
    let names = ["scale.up_bound", "scale.spacing", "scale.node_membership", "scale.offset_navigation", "scale.even_maps"];
    let mut o = s.stretch.verdict(&names);
    for t in [&s.small, &s.wide] {
        o.pass &= t.verdict(&names).pass;
    }
    o
}

fn check_contract(s: &Suites) -> Outcome {
    let mut o = s.small.verdict(&["query.check_contract"]);
    o.pass &= s.small.audits >= 20;
    o.detail = format!("{} graphs with n <= 100, all pairs and even indices; {}", s.small.audits, o.detail);
    o
}

fn gap_claim(s: &Suites) -> Outcome {
    let mut o = s.small.verdict(&["query.gap_claim"]);
    o.pass &= s.small.audits >= 20;
    o
}

fn legitimate_pairs(s: &Suites) -> Outcome {
    let emitted = s.stretch.emitted + s.small.emitted + s.wide.emitted;
    let mut pass = emitted > 0;
    let mut parts = vec![format!("{emitted} level pairs emitted")];
    for (name, t) in [("large", &s.stretch), ("small", &s.small), ("wide", &s.wide)] {
        let v = t.verdict(&["query.legitimate_pair", "query.pair_estimate"]);
        let clean = ["query.legitimate_pair", "query.pair_estimate"].iter().all(|c| t.violations(c) == 0);
        pass &= clean;
        parts.push(format!("{name}: {}", v.detail));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn x_index(s: &Suites) -> Outcome {
    let names = ["tables.x_index_definition", "tables.x_index_minimal", "tables.delta_definition", "tables.argmax_attains"];
    let mut o = s.stretch.verdict(&names);
    for t in [&s.small, &s.wide] {
        o.pass &= t.verdict(&names).pass;
    }
    o
}

fn bunch_size() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [100usize, 400, 1000] {
        for k in [2usize, 3, 4, 6, 8] {
            let totals: Vec<f64> = (0..10u64)
                .into_par_iter()
                .map(|seed| {
                    let g = graph(Family::Gnp { n, p: 8.0 / n as f64 }, MILLION, seed);
                    let levels = distance_oracle::tz::LevelAssignment::sample(n, k, seed).expect("sampling");
                    TzOracle::build(&g, levels).bunches().total_entries() as f64
                })
                .collect();
            let mean = totals.iter().sum::<f64>() / totals.len() as f64;
            let bound = 4.0 * bunch_size_scale(n, k);
            pass &= mean <= bound;
            parts.push(format!("n={n} k={k}: {:.2}", mean / bunch_size_scale(n, k)));
        }
    }
    Outcome { pass, detail: format!("mean entries / k n^(1+1/k) (limit 4): {}", parts.join(", ")) }
}

fn fallback_correctness(s: &Suites) -> Outcome {
    let mut o = s.wide.verdict(&["query.stretch", "estimator.contract"]);
    o.pass &= s.path_direct > 0;
    o.detail = format!(
        "{}; path n=40: {} of {} sampled pairs answered by the constant-time path; {}",
        o.detail,
        s.path_direct,
        s.path_pairs,
        s.wide_rates.join(", ")
    );
    o
}

fn main() {
    let start = Instant::now();
    let suites = run_suites();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("stretch soundness", Box::new(|| stretch_soundness(&suites))),
        ("exactness on bunch hits", Box::new(|| bunch_hit_exactness(&suites))),
        ("constant work bound", Box::new(constant_work)),
        ("geometric filter", Box::new(|| geometric_filter(&suites))),
        ("index check contract", Box::new(|| check_contract(&suites))),
        ("gap claim", Box::new(|| gap_claim(&suites))),
        ("legitimate pairs", Box::new(|| legitimate_pairs(&suites))),
        ("jump index well-definedness", Box::new(|| x_index(&suites))),
        ("bunch size", Box::new(bunch_size)),
        ("fallback keeps correctness", Box::new(|| fallback_correctness(&suites))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("[{}] {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of {} passed in {:.1}s", criteria.len() - failed, criteria.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
