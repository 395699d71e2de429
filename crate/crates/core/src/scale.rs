//! Geometrically filtered distance scale and the per-node scale lists.

use std::collections::HashMap;

use crate::error::OracleError;
use crate::graph::NodeId;
use crate::scalar::{key, Key, Weight};
use crate::tz::PivotTable;

/// The candidate set `D`, its filtered subsequence `D̃` and the maps between
/// them.
///
/// `D̃` keeps an element `x` of `D` (scanned in decreasing order) when the
/// previously kept element exceeds `2x`. Every `d ∈ D` then has a rounded-up
/// image `up(d)` in `D̃` with `d ≤ up(d) ≤ 2d`, and consecutive elements of
/// `D̃` differ by more than a factor of two.
#[derive(Debug, Clone)]
pub struct GlobalScale<W = f64> {
    values: Vec<W>,
    filtered: Vec<W>,
    index: HashMap<Key<W>, usize>,
    up: HashMap<Key<W>, usize>,
}

impl<W: Weight> GlobalScale<W> {
    /// Builds the scale from any collection of candidate distances.
    /// Non-finite candidates are dropped and duplicates collapse.
    pub fn build<I: IntoIterator<Item = W>>(candidates: I) -> Self {
        let mut values: Vec<W> = candidates
            .into_iter()
            .filter(|d| d.is_finite())
            .map(|d| if d == W::zero() { W::zero() } else { d })
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        values.dedup();

        let two = W::one() + W::one();
        let mut kept: Vec<W> = Vec::new();
        for &x in values.iter().rev() {
            match kept.last() {
                Some(&prev) if prev <= two * x => {}
                _ => kept.push(x),
            }
        }
        kept.reverse();
        let filtered = kept;
        let index = filtered.iter().enumerate().map(|(j, &d)| (key(d), j)).collect();

        // Walk both ascending lists in parallel.
        let mut up = HashMap::with_capacity(values.len());
        let mut i = 0;
        for &d in &values {
            while filtered[i] < d {
                i += 1;
            }
            up.insert(key(d), i);
        }
        GlobalScale { values, filtered, index, up }
    }

    pub fn is_empty(&self) -> bool {
        self.filtered.is_empty()
    }

    /// Sorted, deduplicated candidate set `D`.
    pub fn values(&self) -> &[W] {
        &self.values
    }

    /// `D̃`, ascending.
    pub fn filtered(&self) -> &[W] {
        &self.filtered
    }

    /// Position of `d̃` in `D̃`.
    #[inline]
    pub fn index_of(&self, d: W) -> Option<usize> {
        self.index.get(&key(d)).copied()
    }

    /// Position in `D̃` of `up(d)`; defined only for `d ∈ D`.
    #[inline]
    pub fn up_index(&self, d: W) -> Option<usize> {
        self.up.get(&key(d)).copied()
    }

    /// Smallest element of `D̃` that is `≥ d`; defined only for `d ∈ D`.
    pub fn up(&self, d: W) -> Option<W> {
        self.up_index(d).map(|j| self.filtered[j])
    }

    #[inline]
    pub fn value_at(&self, j: usize) -> W {
        self.filtered[j]
    }

    /// Index `j + offset`, clamped to the array bounds.
    #[inline]
    pub fn offset_index(&self, j: usize, offset: isize) -> usize {
        clamp_offset(j, offset, self.filtered.len()).0
    }

    /// The element `offset` places after `d̃` in `D̃`, clamped at both ends.
    pub fn offset(&self, d: W, offset: isize) -> Result<W, OracleError> {
        let j = self
            .index_of(d)
            .ok_or_else(|| OracleError::NotInScale(d.to_f64_lossless()))?;
        Ok(self.filtered[self.offset_index(j, offset)])
    }
}

// The maps are functions of the two arrays.
impl<W: Weight> PartialEq for GlobalScale<W> {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values && self.filtered == other.filtered
    }
}

#[inline]
fn clamp_offset(j: usize, offset: isize, len: usize) -> (usize, bool) {
    let target = j as isize + offset;
    if target < 0 {
        (0, true)
    } else if target as usize >= len {
        (len - 1, true)
    } else {
        (target as usize, false)
    }
}

/// Scale list of one node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeScaleRow {
    /// Positions in `D̃` of the distinct values `up(pdist(u, i))`, `1 ≤ i ≤ k−1`, ascending.
    entries: Vec<usize>,
    /// `D̃` position → position in `entries`.
    lookup: HashMap<usize, usize>,
    /// Level `i` → position in `entries` (`None` when the pivot is unreachable).
    level_pos: Vec<Option<u8>>,
    even_hi: Vec<Option<u8>>,
    even_lo: Vec<Option<u8>>,
}

/// `L_u`, `H_u` and the even-index extremes for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeScales {
    k: usize,
    rows: Vec<NodeScaleRow>,
}

impl NodeScales {
    pub fn build<W: Weight>(pivots: &PivotTable<W>, scale: &GlobalScale<W>) -> Self {
        let k = pivots.k();
        let rows = (0..pivots.node_count())
            .map(|u| {
                let images: Vec<Option<usize>> = (1..k)
                    .map(|i| scale.up_index(pivots.pdist(u, i)))
                    .collect();
                let mut entries: Vec<usize> = images.iter().flatten().copied().collect();
                entries.sort_unstable();
                entries.dedup();
                let lookup: HashMap<usize, usize> =
                    entries.iter().enumerate().map(|(p, &j)| (j, p)).collect();
                let mut level_pos = vec![None; k];
                let mut even_hi = vec![None; entries.len()];
                let mut even_lo: Vec<Option<u8>> = vec![None; entries.len()];
                for (i, img) in (1..k).zip(&images) {
                    if let Some(j) = img {
                        let p = lookup[j];
                        level_pos[i] = Some(p as u8);
                        if i % 2 == 0 {
                            even_hi[p] = Some(i as u8);
                            if even_lo[p].is_none() {
                                even_lo[p] = Some(i as u8);
                            }
                        }
                    }
                }
                NodeScaleRow { entries, lookup, level_pos, even_hi, even_lo }
            })
            .collect();
        NodeScales { k, rows }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, u: NodeId) -> &NodeScaleRow {
        &self.rows[u]
    }

    /// `L_u` as values.
    pub fn values<W: Weight>(&self, u: NodeId, scale: &GlobalScale<W>) -> Vec<W> {
        self.rows[u].entries.iter().map(|&j| scale.value_at(j)).collect()
    }

    /// Position in `L_u` of the value stored at `D̃` position `j` (the hash `H_u`).
    #[inline]
    pub fn position(&self, u: NodeId, j: usize) -> Option<usize> {
        self.rows[u].lookup.get(&j).copied()
    }

    /// Position in `L_u` of `up(pdist(u, i))`.
    pub fn level_position(&self, u: NodeId, i: usize) -> Option<usize> {
        self.rows[u].level_pos.get(i).copied().flatten().map(usize::from)
    }

    pub fn len(&self, u: NodeId) -> usize {
        self.rows[u].entries.len()
    }

    /// `D̃` position of the entry `offset` places after position `p` in `L_u`,
    /// and whether the offset had to be clamped.
    #[inline]
    pub fn offset_at(&self, u: NodeId, p: usize, offset: isize) -> (usize, usize, bool) {
        let row = &self.rows[u];
        let (q, clamped) = clamp_offset(p, offset, row.entries.len());
        (q, row.entries[q], clamped)
    }

    /// Even-index extremes at position `p` of `L_u`.
    #[inline]
    pub fn even_at(&self, u: NodeId, p: usize) -> Option<(usize, usize)> {
        let row = &self.rows[u];
        match (row.even_hi[p], row.even_lo[p]) {
            (Some(hi), Some(lo)) => Some((hi as usize, lo as usize)),
            _ => None,
        }
    }

    /// The element `offset` places after `d̃` in `L_u`, clamped at both ends.
    /// The flag reports whether clamping happened.
    pub fn lu_offset<W: Weight>(
        &self,
        scale: &GlobalScale<W>,
        u: NodeId,
        d: W,
        offset: isize,
    ) -> Result<(W, bool), OracleError> {
        let p = self.lu_position(scale, u, d)?;
        let (_, j, clamped) = self.offset_at(u, p, offset);
        Ok((scale.value_at(j), clamped))
    }

    /// `(even_hi, even_lo)` for the entry `d̃` of `L_u`, or `None` when no even
    /// level of `u` rounds up to `d̃`.
    pub fn even_maps<W: Weight>(
        &self,
        scale: &GlobalScale<W>,
        u: NodeId,
        d: W,
    ) -> Result<Option<(usize, usize)>, OracleError> {
        let p = self.lu_position(scale, u, d)?;
        Ok(self.even_at(u, p))
    }

    fn lu_position<W: Weight>(
        &self,
        scale: &GlobalScale<W>,
        u: NodeId,
        d: W,
    ) -> Result<usize, OracleError> {
        scale
            .index_of(d)
            .and_then(|j| self.position(u, j))
            .ok_or_else(|| OracleError::NotInScale(d.to_f64_lossless()))
    }
}
