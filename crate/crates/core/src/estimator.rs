//! Coarse distance estimators that seed the scale search.
//!
//! Any estimator works as long as it answers in constant time, never
//! underestimates, overestimates by at most its declared stretch bound, and
//! only ever returns values from a finite set declared up front.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::OracleError;
use crate::graph::{ExactOracle, NodeId};
use crate::scalar::Weight;

/// Largest stretch bound the query constants are tuned for, per unit of `k`.
pub const STRETCH_BUDGET_PER_K: f64 = 128.0;

pub trait CoarseEstimator<W>: Debug + Send + Sync {
    /// Symmetric, deterministic estimate; infinity for disconnected pairs.
    fn estimate(&self, s: NodeId, t: NodeId) -> W;

    /// `S` such that `dist ≤ estimate ≤ S·dist`.
    fn stretch_bound(&self) -> f64;

    /// Every value `estimate` can return (except infinity), ascending.
    fn value_set(&self) -> &[W];

    fn config(&self) -> EstimatorConfig;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EstimatorConfig {
    /// Exact distance rounded up to a power of two.
    Snap,
    /// Snap estimates inflated by a per-pair factor in `[1, alpha]`.
    Inject { alpha: f64, seed: u64 },
}

impl EstimatorConfig {
    pub fn build<W: Weight>(
        &self,
        exact: Arc<ExactOracle<W>>,
        k: usize,
    ) -> Result<Box<dyn CoarseEstimator<W>>, OracleError> {
        let snap = SnapEstimator::new(exact);
        match *self {
            EstimatorConfig::Snap => Ok(Box::new(snap)),
            EstimatorConfig::Inject { alpha, seed } => {
                Ok(Box::new(StretchInjector::new(Box::new(snap), alpha, seed, k)?))
            }
        }
    }
}

/// Smallest power of two `≥ d`; zero and infinity map to themselves.
pub fn snap_up<W: Weight>(d: W) -> W {
    if d == W::zero() || !d.is_finite() {
        return d;
    }
    let two = W::one() + W::one();
    let e = d.to_f64_lossless().log2().ceil() as i32;
    let mut p = two.powi(e);
    while p < d {
        p = p * two;
    }
    while p / two >= d {
        p = p / two;
    }
    p
}

/// Powers of two from `snap_up(lo)` through `snap_up(hi)`, preceded by zero.
fn power_ladder<W: Weight>(lo: Option<W>, hi: W) -> Vec<W> {
    let mut values = vec![W::zero()];
    if let Some(lo) = lo {
        let two = W::one() + W::one();
        let top = snap_up(hi);
        let mut p = snap_up(lo);
        while p <= top {
            values.push(p);
            p = p * two;
        }
    }
    values
}

/// Desk-scale stand-in backed by the exact distance matrix. Stretch 2.
#[derive(Debug, Clone)]
pub struct SnapEstimator<W = f64> {
    exact: Arc<ExactOracle<W>>,
    values: Vec<W>,
}

impl<W: Weight> SnapEstimator<W> {
    pub fn new(exact: Arc<ExactOracle<W>>) -> Self {
        let values = power_ladder(exact.min_positive(), exact.diameter());
        SnapEstimator { exact, values }
    }
}

impl<W: Weight> CoarseEstimator<W> for SnapEstimator<W> {
    fn estimate(&self, s: NodeId, t: NodeId) -> W {
        snap_up(self.exact.dist(s, t))
    }

    fn stretch_bound(&self) -> f64 {
        2.0
    }

    fn value_set(&self) -> &[W] {
        &self.values
    }

    fn config(&self) -> EstimatorConfig {
        EstimatorConfig::Snap
    }
}

/// Inflates a base estimator by a deterministic per-pair factor in
/// `[1, alpha]`, then rounds up onto its own power-of-two value set.
/// Stretch bound is `2 · alpha · S_base`.
#[derive(Debug)]
pub struct StretchInjector<W = f64> {
    base: Box<dyn CoarseEstimator<W>>,
    alpha: f64,
    seed: u64,
    values: Vec<W>,
}

impl<W: Weight> StretchInjector<W> {
    pub fn new(
        base: Box<dyn CoarseEstimator<W>>,
        alpha: f64,
        seed: u64,
        k: usize,
    ) -> Result<Self, OracleError> {
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(OracleError::EstimatorContract(format!("alpha {alpha} must be ≥ 1")));
        }
        let budget = STRETCH_BUDGET_PER_K * k as f64;
        if alpha * base.stretch_bound() > budget {
            return Err(OracleError::EstimatorContract(format!(
                "alpha {alpha} times base stretch {} exceeds {budget}",
                base.stretch_bound()
            )));
        }
        let base_values = base.value_set();
        let lo = base_values.iter().copied().find(|&v| v > W::zero());
        let hi = base_values.last().copied().unwrap_or_else(W::zero);
        let values = power_ladder(lo, hi * W::from_f64_lossy(alpha));
        Ok(StretchInjector { base, alpha, seed, values })
    }

    /// Per-pair factor in `[1, alpha]`, symmetric in `(s, t)`.
    pub fn factor(&self, s: NodeId, t: NodeId) -> f64 {
        let (a, b) = (s.min(t) as u64, s.max(t) as u64);
        let h = mix(mix(self.seed ^ 0x9e37_79b9_7f4a_7c15) ^ a.rotate_left(32) ^ b);
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        1.0 + unit * (self.alpha - 1.0)
    }
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl<W: Weight> CoarseEstimator<W> for StretchInjector<W> {
    fn estimate(&self, s: NodeId, t: NodeId) -> W {
        let b = self.base.estimate(s, t);
        if b == W::zero() || !b.is_finite() {
            return b;
        }
        let inflated = b * W::from_f64_lossy(self.factor(s, t));
        let at = self.values.partition_point(|&v| v < inflated);
        self.values.get(at).copied().unwrap_or(inflated)
    }

    fn stretch_bound(&self) -> f64 {
        2.0 * self.alpha * self.base.stretch_bound()
    }

    fn value_set(&self) -> &[W] {
        &self.values
    }

    fn config(&self) -> EstimatorConfig {
        EstimatorConfig::Inject { alpha: self.alpha, seed: self.seed }
    }
}
