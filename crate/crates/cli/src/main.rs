use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use distance_oracle::audit::{audit, AuditOptions, PairSelection};
use distance_oracle::bench::{bench, BenchOptions};
use distance_oracle::{
    DistanceOracle, EstimatorConfig, Family, GeneratorConfig, Graph, NodeId, OracleConfig,
    WeightSpec,
};

/// Constant-query-time approximate distance oracle: generate graphs, build
/// and snapshot oracles, query them, audit them against exact distances and
/// benchmark them.
#[derive(Parser)]
#[command(name = "distance-oracle", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random weighted graph in edge-list format.
    Generate(GenerateArgs),
    /// Build an oracle from an edge list and write a snapshot.
    Build(BuildArgs),
    /// Answer distance queries from a snapshot.
    Query(QueryArgs),
    /// Check every invariant of a snapshot against exact distances.
    Audit(AuditArgs),
    /// Time and count the work of queries on sampled pairs.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyKind {
    Path,
    Grid,
    Gnp,
    Geometric,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightKind {
    Unit,
    Uniform,
    Powers,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    family: FamilyKind,
    /// Node count (path, gnp, geometric).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Edge probability (gnp).
    #[arg(long)]
    p: Option<f64>,
    /// Connection radius in the unit square (geometric).
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, value_enum, default_value = "uniform")]
    weights: WeightKind,
    #[arg(long, default_value_t = 1)]
    lo: u64,
    #[arg(long, default_value_t = 1_000_000)]
    hi: u64,
    /// Base of the power weights.
    #[arg(long, default_value_t = 4)]
    base: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorKind {
    Snap,
    Inject,
}

#[derive(Args)]
struct BuildArgs {
    /// Edge-list file.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "snap")]
    estimator: EstimatorKind,
    /// Inflation bound of the injecting estimator.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Seed of the injecting estimator's per-pair factors.
    #[arg(long, default_value_t = 0)]
    estimator_seed: u64,
    /// Explicit level sets A_1..A_{k-1}: sets separated by ';', members by ','.
    #[arg(long)]
    override_levels: Option<String>,
    /// Snapshot path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the build summary as JSON here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    snapshot: PathBuf,
    /// Source nodes; paired positionally with --t.
    #[arg(long, required = true, num_args = 1..)]
    s: Vec<NodeId>,
    #[arg(long, required = true, num_args = 1..)]
    t: Vec<NodeId>,
    /// Also report the exact distance.
    #[arg(long)]
    exact: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AuditMode {
    AllPairs,
    Sample,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    snapshot: PathBuf,
    /// Edge list the snapshot must have been built from.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all-pairs")]
    mode: AuditMode,
    /// Number of pairs in sample mode.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Failures listed verbatim in the report.
    #[arg(long, default_value_t = 100)]
    max_recorded: usize,
    /// JSON report; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of the named checks.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// CSV of the stretch histogram.
    #[arg(long)]
    histogram_csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    queries: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV with one row per query.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Build(a) => build(a),
        Command::Query(a) => query(a),
        Command::Audit(a) => run_audit(a),
        Command::Bench(a) => run_bench(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn need<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.with_context(|| format!("--{flag} is required for this family"))
}

fn generate(a: GenerateArgs) -> Result<ExitCode> {
    let family = match a.family {
        FamilyKind::Path => Family::Path { n: need(a.n, "n")? },
        FamilyKind::Grid => Family::Grid { rows: need(a.rows, "rows")?, cols: need(a.cols, "cols")? },
        FamilyKind::Gnp => Family::Gnp { n: need(a.n, "n")?, p: need(a.p, "p")? },
        FamilyKind::Geometric => Family::Geometric { n: need(a.n, "n")?, radius: need(a.radius, "radius")? },
    };
    let weights = match a.weights {
        WeightKind::Unit => WeightSpec::Unit,
        WeightKind::Uniform => WeightSpec::Uniform { lo: a.lo, hi: a.hi },
        WeightKind::Powers => WeightSpec::Powers { base: a.base },
    };
    let g: Graph = GeneratorConfig::new(family, weights, a.seed).generate()?;
    write_text(a.out.as_deref(), &g.to_edge_list())?;
    Ok(ExitCode::SUCCESS)
}

fn parse_levels(text: &str) -> Result<Vec<Vec<NodeId>>> {
    text.split(';')
        .map(|set| {
            set.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|v| v.parse().with_context(|| format!("bad node id {v:?} in level override")))
                .collect()
        })
        .collect()
}

fn read_graph(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Graph::from_edge_list(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load(path: &Path) -> Result<DistanceOracle> {
    DistanceOracle::load(path).with_context(|| format!("loading snapshot {}", path.display()))
}

fn build(a: BuildArgs) -> Result<ExitCode> {
    let g = read_graph(&a.graph)?;
    let estimator = match a.estimator {
        EstimatorKind::Snap => EstimatorConfig::Snap,
        EstimatorKind::Inject => EstimatorConfig::Inject { alpha: a.alpha, seed: a.estimator_seed },
    };
    let mut config = OracleConfig::new(a.k, a.seed).with_estimator(estimator);
    if let Some(text) = &a.override_levels {
        config = config.with_levels(parse_levels(text)?);
    }
    let (oracle, summary) = DistanceOracle::build(g, config)?;
    oracle.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let json = serde_json::to_string_pretty(&summary)?;
    if let Some(path) = &a.summary {
        write_text(Some(path), &json)?;
    }
    println!("{json}");
    Ok(ExitCode::SUCCESS)
}

fn query(a: QueryArgs) -> Result<ExitCode> {
    if a.s.len() != a.t.len() {
        bail!("--s and --t need the same number of nodes");
    }
    let oracle = load(&a.snapshot)?;
    let n = oracle.graph().node_count();
    let mut out = std::io::stdout().lock();
    for (&s, &t) in a.s.iter().zip(&a.t) {
        if s >= n || t >= n {
            bail!("node out of range for graph with {n} nodes");
        }
        let (distance, stats) = oracle.query_with_stats(s, t);
        let mut row = serde_json::json!({ "s": s, "t": t, "distance": distance, "stats": stats });
        if a.exact {
            row["exact"] = serde_json::json!(oracle.exact().dist(s, t));
        }
        writeln!(out, "{row}")?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_audit(a: AuditArgs) -> Result<ExitCode> {
    let oracle = load(&a.snapshot)?;
    if let Some(path) = &a.graph {
        if read_graph(path)?.to_edge_list() != oracle.graph().to_edge_list() {
            bail!("{} is not the graph stored in the snapshot", path.display());
        }
    }
    let pairs = match a.mode {
        AuditMode::AllPairs => PairSelection::AllPairs,
        AuditMode::Sample => PairSelection::Sample { count: a.samples, seed: a.seed },
    };
    let report = audit(&oracle, &AuditOptions { pairs, max_recorded: a.max_recorded })?;
    write_text(a.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    if let Some(path) = &a.csv {
        write_csv(path, &report.checks)?;
    }
    if let Some(path) = &a.histogram_csv {
        write_csv(path, &report.stretch_histogram)?;
    }
    eprintln!(
        "audited {} pairs: worst stretch {:.4} (limit {}), fallback rate {:.4}, {} violations",
        report.pairs_audited,
        report.worst_stretch,
        report.stretch_limit,
        report.fallback_rate,
        report.violation_count
    );
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run_bench(a: BenchArgs) -> Result<ExitCode> {
    let oracle = load(&a.snapshot)?;
    let report = bench(&oracle, &BenchOptions { queries: a.queries, seed: a.seed });
    if let Some(path) = &a.csv {
        write_csv(path, &report.records)?;
    }
    write_text(a.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    Ok(ExitCode::SUCCESS)
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn write_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
