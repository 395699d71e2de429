//! Seeded graph generators. All weights are integers so that distances stay
//! exact in floating point as long as they fit in the mantissa.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::graph::{Graph, NodeId};
use crate::scalar::Weight;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightSpec {
    /// Every edge weighs 1.
    Unit,
    /// Integer weights drawn uniformly from `[lo, hi]`.
    Uniform { lo: u64, hi: u64 },
    /// The `i`-th generated edge weighs `base^i`.
    Powers { base: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Path { n: usize },
    Grid { rows: usize, cols: usize },
    Gnp { n: usize, p: f64 },
    /// Random points in the unit square joined when closer than `radius`.
    /// Weights grow geometrically with Euclidean length, from the low end of
    /// the weight range on the shortest edge to the high end on the longest.
    Geometric { n: usize, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    #[serde(flatten)]
    pub family: Family,
    pub weights: WeightSpec,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(family: Family, weights: WeightSpec, seed: u64) -> Self {
        GeneratorConfig { family, weights, seed }
    }

    pub fn generate<W: Weight>(&self) -> Result<Graph<W>, GraphError> {
        generate(&self.family, &self.weights, self.seed)
    }
}

pub fn generate<W: Weight>(
    family: &Family,
    weights: &WeightSpec,
    seed: u64,
) -> Result<Graph<W>, GraphError> {
    validate(family, weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, pairs) = match *family {
        Family::Path { n } => (n, (1..n).map(|v| (v - 1, v, 0.0)).collect::<Vec<_>>()),
        Family::Grid { rows, cols } => {
            let id = |r: usize, c: usize| r * cols + c;
            let mut pairs = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        pairs.push((id(r, c), id(r, c + 1), 0.0));
                    }
                    if r + 1 < rows {
                        pairs.push((id(r, c), id(r + 1, c), 0.0));
                    }
                }
            }
            (rows * cols, pairs)
        }
        Family::Gnp { n, p } => {
            let mut pairs = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(p) {
                        pairs.push((u, v, 0.0));
                    }
                }
            }
            (n, pairs)
        }
        Family::Geometric { n, radius } => {
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
            let mut pairs = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    let len = (pts[u].0 - pts[v].0).hypot(pts[u].1 - pts[v].1);
                    if len <= radius {
                        pairs.push((u, v, len));
                    }
                }
            }
            (n, pairs)
        }
    };

    let edges: Vec<(NodeId, NodeId, W)> = if let Family::Geometric { .. } = family {
        let (lo, hi) = match *weights {
            WeightSpec::Unit => (1, 1),
            WeightSpec::Uniform { lo, hi } => (lo, hi),
            WeightSpec::Powers { .. } => unreachable!("rejected by validate"),
        };
        let (min_len, max_len) = pairs
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(p.2), b.max(p.2)));
        let ratio = hi as f64 / lo as f64;
        pairs
            .iter()
            .map(|&(u, v, len)| {
                let t = if max_len > min_len {
                    (len - min_len) / (max_len - min_len)
                } else {
                    0.0
                };
                let w = (lo as f64 * ratio.powf(t)).round().clamp(lo as f64, hi as f64);
                (u, v, W::from_f64_lossy(w))
            })
            .collect()
    } else {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(u, v, _))| {
                let w = match *weights {
                    WeightSpec::Unit => 1.0,
                    WeightSpec::Uniform { lo, hi } => rng.gen_range(lo..=hi) as f64,
                    WeightSpec::Powers { base } => (base as f64).powi(i as i32),
                };
                (u, v, W::from_f64_lossy(w))
            })
            .collect()
    };
    Graph::new(n, edges)
}

fn validate(family: &Family, weights: &WeightSpec) -> Result<(), GraphError> {
    let bad = |m: &str| Err(GraphError::InvalidParams(m.to_string()));
    match *family {
        Family::Path { n } | Family::Gnp { n, .. } | Family::Geometric { n, .. } if n == 0 => {
            return bad("n must be positive")
        }
        Family::Grid { rows, cols } if rows == 0 || cols == 0 => {
            return bad("grid dimensions must be positive")
        }
        Family::Gnp { p, .. } if !(p > 0.0 && p <= 1.0) => return bad("p must lie in (0, 1]"),
        Family::Geometric { radius, .. } if !(radius > 0.0 && radius.is_finite()) => {
            return bad("radius must be positive")
        }
        _ => {}
    }
    match *weights {
        WeightSpec::Uniform { lo, hi } if lo > hi => bad("weight range is empty"),
        WeightSpec::Uniform { lo, .. } if lo == 0 && matches!(family, Family::Geometric { .. }) => {
            bad("geometric weights need a positive lower bound")
        }
        WeightSpec::Powers { base } if base == 0 => bad("power base must be positive"),
        WeightSpec::Powers { .. } if matches!(family, Family::Geometric { .. }) => {
            bad("geometric family takes a weight range, not powers")
        }
        _ => Ok(()),
    }
}
