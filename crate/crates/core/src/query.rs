//! Constant-time query: locate a pair of even levels that brackets the
//! distance scale of `(s, t)`, then finish with at most four index checks.
//!
//! Every step the construction leaves undefined on a given input (a scale
//! walk that runs off a list, a scale entry with no even level, an exhausted
//! iteration budget) reroutes the query to the pivot walk, so the stretch
//! guarantee holds unconditionally. [`QueryStats`] records which path ran.

use serde::{Deserialize, Serialize};

use crate::error::OracleError;
use crate::estimator::STRETCH_BUDGET_PER_K;
use crate::graph::NodeId;
use crate::oracle::DistanceOracle;
use crate::scalar::Weight;
use crate::tables::XEntry;

/// Most index checks one query can make outside the upward scale walk.
pub const CHECK_CAP: usize = 6;

/// Iteration budgets of the three scale walks.
///
/// They depend only on how far the coarse estimate may overshoot relative to
/// `k`; for any estimator with stretch at most `128k` they are the fixed
/// defaults (divisor 256, floor −9, caps 11 / 12 / 10).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryParams {
    pub scale_exp: u32,
}

impl Default for QueryParams {
    fn default() -> Self {
        QueryParams { scale_exp: 7 }
    }
}

impl QueryParams {
    pub fn for_stretch(stretch: f64, k: usize) -> Self {
        let per_k = (stretch / k as f64).max(1.0);
        let e = per_k.log2().ceil().max(STRETCH_BUDGET_PER_K.log2()) as u32;
        QueryParams { scale_exp: e }
    }

    /// The lowest scale entry must lie at or below `estimate / divisor`.
    pub fn threshold_divisor(&self) -> f64 {
        2f64.powi(self.scale_exp as i32 + 1)
    }

    /// Exclusive lower bound of the `D̃` offset in the initial scale probe.
    pub fn probe_floor(&self) -> isize {
        -(self.scale_exp as isize + 2)
    }

    pub fn probe_cap(&self) -> usize {
        self.scale_exp as usize + 4
    }

    pub fn descent_cap(&self) -> usize {
        self.scale_exp as usize + 5
    }

    pub fn ascent_cap(&self) -> usize {
        self.scale_exp as usize + 3
    }

    /// Upper bound on the counter total of any query that avoids the fallback.
    pub fn work_bound(&self) -> usize {
        self.probe_cap() + self.descent_cap() + self.ascent_cap() + CHECK_CAP
    }
}

/// Result of a single index check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Check<W> {
    /// No pivot of the examined levels sits in the other node's bunch.
    None,
    /// `p_{j-2}(s) ∈ B(t)` or `p_{j-1}(t) ∈ B(s)` with `j = I(i, s)`.
    Bunch(W),
    /// Resolved by the top two levels.
    TopLevel(W),
}

impl<W: Copy> Check<W> {
    pub fn value(&self) -> Option<W> {
        match *self {
            Check::None => None,
            Check::Bunch(v) | Check::TopLevel(v) => Some(v),
        }
    }
}

/// Which step produced the answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    SameNode,
    Disconnected,
    /// One node is in the other's bunch; the stored distance is exact.
    BunchHit,
    /// Check at the lowest scale entry succeeded.
    LowestScale,
    /// Upward walk stopped at a top-level check.
    AscentTopLevel,
    /// Upward walk passed the estimate without a hit; the estimate is returned.
    AscentExhausted,
    /// Check at the lower even index of the bracketing entry succeeded.
    LowerIndex,
    PairX1,
    PairX2,
    PairX3,
    PairUpper,
    /// Answer came from the pivot walk.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackReason {
    /// `k < 4`: the constant-time path is disabled.
    TzOnly,
    /// Some pivot level is unreachable from `s` or `t`.
    IncompletePivots,
    /// The estimate is not in the candidate set.
    NotInScale,
    /// Neither node has a scale entry in the probe window.
    ProbeMiss,
    /// Downward walk hit the bottom of `L_s` above the threshold.
    DescentUnderrun,
    DescentCap,
    /// Upward walk ran past the top of `L_s`.
    AscentOverrun,
    AscentCap,
    /// A scale entry has no even level mapped to it.
    MissingEvenLevel,
    /// All four final checks came back empty.
    PairExhausted,
}

/// Per-query instrumentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryStats {
    pub probe_iters: usize,
    pub descent_iters: usize,
    pub ascent_iters: usize,
    /// Index checks outside the upward walk (that walk does one per iteration).
    pub checks: usize,
    pub branch: Branch,
    pub fallback: Option<FallbackReason>,
    /// `s` and `t` were exchanged after the probe.
    pub swapped: bool,
    /// Pivot-walk steps when the fallback ran.
    pub tz_steps: usize,
}

impl Default for QueryStats {
    fn default() -> Self {
        QueryStats {
            probe_iters: 0,
            descent_iters: 0,
            ascent_iters: 0,
            checks: 0,
            branch: Branch::Fallback,
            fallback: None,
            swapped: false,
            tz_steps: 0,
        }
    }
}

impl QueryStats {
    pub fn fallback_used(&self) -> bool {
        self.fallback.is_some()
    }

    pub fn work(&self) -> usize {
        self.probe_iters + self.descent_iters + self.ascent_iters + self.checks
    }
}

/// Bracketing pair of even levels, oriented as the search left `s` and `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelPair {
    pub s: NodeId,
    pub t: NodeId,
    pub i1: usize,
    pub i2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryTrace<W> {
    pub distance: W,
    pub stats: QueryStats,
    pub pair: Option<LevelPair>,
}

/// Outcome of the bracketing search, in the (possibly swapped) orientation
/// given by `s` and `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bracket<W> {
    Distance(W, Branch),
    Pair { s: NodeId, t: NodeId, i1: usize, i2: usize },
}

impl<W: Weight> DistanceOracle<W> {
    /// Approximate distance with stretch at most `2k−1`.
    pub fn query(&self, s: NodeId, t: NodeId) -> W {
        self.query_with_stats(s, t).0
    }

    pub fn query_with_stats(&self, s: NodeId, t: NodeId) -> (W, QueryStats) {
        let trace = self.query_traced(s, t);
        (trace.distance, trace.stats)
    }

    /// Like [`query_with_stats`](Self::query_with_stats), also reporting the
    /// bracketing pair when one was produced.
    pub fn query_traced(&self, s: NodeId, t: NodeId) -> QueryTrace<W> {
        let mut stats = QueryStats::default();
        let mut pair = None;
        if s == t {
            stats.branch = Branch::SameNode;
            return QueryTrace { distance: W::zero(), stats, pair };
        }
        if !self.tz.connected(s, t) {
            stats.branch = Branch::Disconnected;
            return QueryTrace { distance: W::infinity(), stats, pair };
        }
        let outcome = self.bracket(s, t, &mut stats).and_then(|b| match b {
            Bracket::Distance(d, branch) => Ok((d, branch)),
            Bracket::Pair { s, t, i1, i2 } => {
                pair = Some(LevelPair { s, t, i1, i2 });
                self.finish(s, t, i1, i2, &mut stats)
            }
        });
        let distance = match outcome {
            Ok((d, branch)) => {
                stats.branch = branch;
                d
            }
            Err(reason) => {
                let (d, steps) = self.tz.query(s, t);
                stats.branch = Branch::Fallback;
                stats.fallback = Some(reason);
                stats.tz_steps = steps;
                d
            }
        };
        QueryTrace { distance, stats, pair }
    }

    /// Index check for even `2 ≤ i ≤ k−1`.
    pub fn check_index(&self, s: NodeId, t: NodeId, i: usize) -> Result<Check<W>, OracleError> {
        let k = self.k();
        if i < 2 || i >= k || i % 2 == 1 {
            return Err(OracleError::BadIndex { i, max: k - 1 });
        }
        Ok(self.check(s, t, i))
    }

    pub(crate) fn check(&self, s: NodeId, t: NodeId, i: usize) -> Check<W> {
        let k = self.k();
        let pv = self.tz.pivots();
        let bunches = self.tz.bunches();
        let via = |from: NodeId, level: usize, other: NodeId| -> Option<W> {
            let w = pv.pivot(from, level)?;
            bunches.get(other, w).map(|d| pv.pdist(from, level) + d)
        };
        let j = self.deltas.argmax(s, i);
        if let Some(d) = via(s, j - 2, t) {
            return Check::Bunch(d);
        }
        if let Some(d) = via(t, j - 1, s) {
            return Check::Bunch(d);
        }
        if i == k - 2 {
            if let Some(d) = via(s, i, t) {
                return Check::TopLevel(d);
            }
            return Check::TopLevel(via(t, k - 1, s).unwrap_or_else(W::infinity));
        }
        if i == k - 1 {
            return Check::TopLevel(via(s, k - 1, t).unwrap_or_else(W::infinity));
        }
        Check::None
    }

    fn counted_check(&self, s: NodeId, t: NodeId, i: usize, stats: &mut QueryStats) -> Check<W> {
        stats.checks += 1;
        self.check(s, t, i)
    }

    /// The bracketing search for `s ≠ t` in one component. Either answers
    /// directly or returns a pair of even levels `(i1, i2)` for the final
    /// estimate.
    pub fn bracket(
        &self,
        s: NodeId,
        t: NodeId,
        stats: &mut QueryStats,
    ) -> Result<Bracket<W>, FallbackReason> {
        let estimate = self.estimator.estimate(s, t);
        if let Some(d) = self.tz.bunches().get(t, s).or_else(|| self.tz.bunches().get(s, t)) {
            return Ok(Bracket::Distance(d, Branch::BunchHit));
        }
        let x = self.xindex.as_ref().ok_or(FallbackReason::TzOnly)?;
        if !(x.is_available(s) && x.is_available(t)) {
            return Err(FallbackReason::IncompletePivots);
        }
        let target = self.scale.up_index(estimate).ok_or(FallbackReason::NotInScale)?;
        let ns = &self.node_scales;
        let params = &self.params;

        // Probe D̃ downward from two places above the estimate's image until
        // either node has a scale entry there.
        let mut offset = 2isize;
        let mut current = target;
        let mut found = false;
        while offset > params.probe_floor() && !found {
            stats.probe_iters += 1;
            current = self.scale.offset_index(target, offset);
            if ns.position(s, current).is_some() || ns.position(t, current).is_some() {
                found = true;
            } else {
                offset -= 1;
            }
        }
        if !found {
            // Twice the last probed value can undershoot the distance.
            return Err(FallbackReason::ProbeMiss);
        }
        let (s, t) = if ns.position(s, current).is_none() {
            stats.swapped = true;
            (t, s)
        } else {
            (s, t)
        };

        // Walk L_s down to the first entry at or below the threshold.
        let threshold = estimate / W::from_f64_lossy(params.threshold_divisor());
        let start = ns.position(s, current).expect("probe hit");
        let mut step = 0isize;
        let lowest = loop {
            let (p, j, clamped) = ns.offset_at(s, start, step);
            if self.scale.value_at(j) <= threshold {
                break p;
            }
            if clamped || p == 0 {
                return Err(FallbackReason::DescentUnderrun);
            }
            stats.descent_iters += 1;
            if stats.descent_iters > params.descent_cap() {
                return Err(FallbackReason::DescentCap);
            }
            step -= 1;
        };

        let (lowest_even, _) = ns.even_at(s, lowest).ok_or(FallbackReason::MissingEvenLevel)?;
        if let Some(d) = self.counted_check(s, t, lowest_even, stats).value() {
            return Ok(Bracket::Distance(d, Branch::LowestScale));
        }

        // Walk back up until a check succeeds or the walk is two entries past
        // the estimate's image.
        let target_value = self.scale.value_at(target);
        let mut up = 0isize;
        let hit = loop {
            let (_, below, _) = ns.offset_at(s, lowest, up - 2);
            if self.scale.value_at(below) >= target_value {
                break None;
            }
            stats.ascent_iters += 1;
            if stats.ascent_iters > params.ascent_cap() {
                return Err(FallbackReason::AscentCap);
            }
            let (p, _, clamped) = ns.offset_at(s, lowest, up);
            if clamped {
                return Err(FallbackReason::AscentOverrun);
            }
            let (hi, _) = ns.even_at(s, p).ok_or(FallbackReason::MissingEvenLevel)?;
            match self.check(s, t, hi) {
                Check::None => up += 1,
                Check::Bunch(_) => break Some(p),
                Check::TopLevel(d) => return Ok(Bracket::Distance(d, Branch::AscentTopLevel)),
            }
        };
        let Some(p) = hit else {
            return Ok(Bracket::Distance(estimate, Branch::AscentExhausted));
        };
        let (hi, lo) = ns.even_at(s, p).ok_or(FallbackReason::MissingEvenLevel)?;
        let i2 = self.deltas.argmax(s, hi);
        let i1 = lo;
        if let Some(d) = self.counted_check(s, t, i1, stats).value() {
            return Ok(Bracket::Distance(d, Branch::LowerIndex));
        }
        Ok(Bracket::Pair { s, t, i1, i2 })
    }

    /// Final estimate from a bracketing pair: the first successful check
    /// among `x1(i1, s)`, `x2(i1, s)`, `x3(i1, s)` and `i2`.
    pub fn finish(
        &self,
        s: NodeId,
        t: NodeId,
        i1: usize,
        i2: usize,
        stats: &mut QueryStats,
    ) -> Result<(W, Branch), FallbackReason> {
        let x = self.xindex.as_ref().ok_or(FallbackReason::TzOnly)?;
        let XEntry { x1, x2, x3, .. } = x.get(s, i1).ok_or(FallbackReason::IncompletePivots)?;
        let order = [
            (x1 as usize, Branch::PairX1),
            (x2 as usize, Branch::PairX2),
            (x3 as usize, Branch::PairX3),
            (i2, Branch::PairUpper),
        ];
        for (i, branch) in order {
            if let Some(d) = self.counted_check(s, t, i, stats).value() {
                return Ok((d, branch));
            }
        }
        Err(FallbackReason::PairExhausted)
    }
}
