//! Binary snapshot of a built oracle.
//!
//! Layout (little-endian): magic, format version, weight width in bytes,
//! build configuration, graph edges, level assignment, pivot table, bunches
//! (sorted by node id), then every derived table. Loading reads the primary
//! tables, rebuilds the derived ones and requires them to match the stored
//! copies byte for byte. The encoding is canonical, so the same build always
//! produces the same bytes.

use std::collections::HashMap;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::OracleError;
use crate::estimator::EstimatorConfig;
use crate::graph::{Graph, NodeId};
use crate::oracle::{DistanceOracle, OracleConfig};
use crate::scalar::Weight;
use crate::tables::even_indices;
use crate::tz::{BunchSet, LevelAssignment, PivotTable};

pub const MAGIC: &[u8; 8] = b"DORACLE\0";
pub const VERSION: u8 = 1;

const NO_PIVOT: u32 = u32::MAX;

fn bad(msg: impl Into<String>) -> OracleError {
    OracleError::Snapshot(msg.into())
}

fn eof(_: std::io::Error) -> OracleError {
    bad("truncated snapshot")
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, x: u8) {
        self.buf.push(x);
    }

    fn u32(&mut self, x: usize) {
        self.buf.write_u32::<LE>(x as u32).expect("vec write");
    }

    fn u64(&mut self, x: u64) {
        self.buf.write_u64::<LE>(x).expect("vec write");
    }

    fn f64(&mut self, x: f64) {
        self.buf.write_f64::<LE>(x).expect("vec write");
    }

    fn w<W: Weight>(&mut self, x: W) {
        if W::BYTES == 4 {
            let v = x.to_f32().unwrap_or(f32::NAN);
            self.buf.write_f32::<LE>(v).expect("vec write");
        } else {
            self.f64(x.to_f64_lossless());
        }
    }
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl Reader<'_> {
    fn u8(&mut self) -> Result<u8, OracleError> {
        self.cur.read_u8().map_err(eof)
    }

    fn u32(&mut self) -> Result<usize, OracleError> {
        self.cur.read_u32::<LE>().map(|x| x as usize).map_err(eof)
    }

    fn u64(&mut self) -> Result<u64, OracleError> {
        self.cur.read_u64::<LE>().map_err(eof)
    }

    fn f64(&mut self) -> Result<f64, OracleError> {
        self.cur.read_f64::<LE>().map_err(eof)
    }

    fn w<W: Weight>(&mut self) -> Result<W, OracleError> {
        if W::BYTES == 4 {
            let v = self.cur.read_f32::<LE>().map_err(eof)?;
            W::from_f32(v).ok_or_else(|| bad("weight conversion"))
        } else {
            Ok(W::from_f64_lossy(self.f64()?))
        }
    }

    fn node(&mut self, n: usize) -> Result<NodeId, OracleError> {
        let v = self.u32()?;
        if v >= n {
            return Err(bad(format!("node id {v} out of range for {n} nodes")));
        }
        Ok(v)
    }

    /// Length prefix, refusing counts the remaining bytes cannot hold.
    fn len(&mut self, item_bytes: usize) -> Result<usize, OracleError> {
        let len = self.u64()? as usize;
        let left = self.cur.get_ref().len() - self.cur.position() as usize;
        if len.saturating_mul(item_bytes.max(1)) > left {
            return Err(bad("length prefix exceeds snapshot size"));
        }
        Ok(len)
    }
}

impl<W: Weight> DistanceOracle<W> {
    /// Canonical binary encoding of the oracle.
    pub fn to_snapshot(&self) -> Vec<u8> {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(MAGIC);
        w.u8(VERSION);
        w.u8(W::BYTES);
        encode_primary(self, &mut w);
        encode_derived(self, &mut w);
        w.buf
    }

    /// Decodes and validates a snapshot written by [`to_snapshot`](Self::to_snapshot).
    pub fn from_snapshot(bytes: &[u8]) -> Result<Self, OracleError> {
        let mut r = Reader { cur: Cursor::new(bytes) };
        let mut magic = [0u8; 8];
        r.cur.read_exact(&mut magic).map_err(eof)?;
        if &magic != MAGIC {
            return Err(bad("not an oracle snapshot"));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let width = r.u8()?;
        if width != W::BYTES {
            return Err(bad(format!("snapshot stores {width}-byte weights, expected {}", W::BYTES)));
        }
        let (graph, levels, pivots, bunches, config) = decode_primary::<W>(&mut r)?;
        let derived_at = r.cur.position() as usize;
        let oracle = DistanceOracle::from_parts(graph, levels, pivots, bunches, config)?;

        let mut expect = Writer { buf: Vec::new() };
        encode_derived(&oracle, &mut expect);
        if bytes[derived_at..] != expect.buf[..] {
            return Err(bad("stored derived tables disagree with the primary tables"));
        }
        Ok(oracle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), OracleError> {
        std::fs::write(path, self.to_snapshot())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        Self::from_snapshot(&std::fs::read(path)?)
    }
}

fn encode_primary<W: Weight>(o: &DistanceOracle<W>, w: &mut Writer) {
    let config = o.config();
    let k = o.k();
    let n = o.graph().node_count();
    w.u32(k);
    w.u64(config.seed);
    w.u64(o.levels().seed());
    match config.estimator {
        EstimatorConfig::Snap => w.u8(0),
        EstimatorConfig::Inject { alpha, seed } => {
            w.u8(1);
            w.f64(alpha);
            w.u64(seed);
        }
    }
    match &config.level_override {
        None => w.u8(0),
        Some(sets) => {
            w.u8(1);
            w.u32(sets.len());
            for set in sets {
                w.u64(set.len() as u64);
                for &v in set {
                    w.u32(v);
                }
            }
        }
    }

    let g = o.graph();
    w.u32(n);
    w.u64(g.edge_count() as u64);
    for e in g.edges() {
        w.u32(e.u);
        w.u32(e.v);
        w.w(e.w);
    }
    w.buf.extend_from_slice(o.levels().levels());

    let pv = o.pivots();
    for v in 0..n {
        for i in 0..k {
            w.u32(pv.pivot(v, i).map_or(NO_PIVOT as usize, |p| p));
            w.w(pv.pdist(v, i));
        }
    }
    for v in 0..n {
        let bunch = o.bunches().sorted(v);
        w.u64(bunch.len() as u64);
        for (u, d) in bunch {
            w.u32(u);
            w.w(d);
        }
    }
}

type Primary<W> = (Graph<W>, LevelAssignment, PivotTable<W>, BunchSet<W>, OracleConfig);

fn decode_primary<W: Weight>(r: &mut Reader) -> Result<Primary<W>, OracleError> {
    let k = r.u32()?;
    if !(2..=u8::MAX as usize).contains(&k) {
        return Err(OracleError::InvalidK(k));
    }
    let seed = r.u64()?;
    let sampling_seed = r.u64()?;
    let estimator = match r.u8()? {
        0 => EstimatorConfig::Snap,
        1 => EstimatorConfig::Inject { alpha: r.f64()?, seed: r.u64()? },
        tag => return Err(bad(format!("unknown estimator tag {tag}"))),
    };
    let overrides = match r.u8()? {
        0 => None,
        1 => {
            let count = r.u32()?;
            let mut sets = Vec::with_capacity(count.min(u8::MAX as usize));
            for _ in 0..count {
                let len = r.len(4)?;
                sets.push((0..len).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?);
            }
            Some(sets)
        }
        tag => return Err(bad(format!("unknown override tag {tag}"))),
    };
    let config = OracleConfig { k, seed, estimator, level_override: overrides };

    let n = r.u32()?;
    let m = r.len(8 + W::BYTES as usize)?;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        edges.push((r.node(n)?, r.node(n)?, r.w::<W>()?));
    }
    let graph = Graph::new(n, edges)?;
    if graph.edge_count() != m {
        return Err(bad("duplicate edges in snapshot"));
    }

    let mut raw = vec![0u8; n];
    r.cur.read_exact(&mut raw).map_err(eof)?;
    let levels = LevelAssignment::from_raw(k, raw, sampling_seed)?;

    let mut pivot = Vec::with_capacity(n * k);
    let mut pdist = Vec::with_capacity(n * k);
    for v in 0..n {
        for i in 0..k {
            let p = r.u32()?;
            let d: W = r.w()?;
            let p = if p == NO_PIVOT as usize { None } else { Some(p) };
            match p {
                Some(p) if p >= n || !levels.contains(i, p) => {
                    return Err(bad(format!("pivot {p} of node {v} is not in level {i}")));
                }
                Some(_) if !(d >= W::zero() && d.is_finite()) => {
                    return Err(bad(format!("pivot distance of node {v} level {i} is invalid")));
                }
                None if d.is_finite() => {
                    return Err(bad(format!("node {v} level {i} has a distance but no pivot")));
                }
                _ => {}
            }
            pivot.push(p);
            pdist.push(d);
        }
        if pivot[v * k] != Some(v) || pdist[v * k] != W::zero() {
            return Err(bad(format!("node {v} is not its own level-0 pivot")));
        }
    }
    let pivots = PivotTable::from_raw(k, pivot, pdist);

    let mut maps = Vec::with_capacity(n);
    for v in 0..n {
        let len = r.len(4 + W::BYTES as usize)?;
        let mut map = HashMap::with_capacity(len);
        for _ in 0..len {
            let u = r.node(n)?;
            let d: W = r.w()?;
            if !(d >= W::zero() && d.is_finite()) || map.insert(u, d).is_some() {
                return Err(bad(format!("bad bunch entry {u} of node {v}")));
            }
        }
        maps.push(map);
    }
    Ok((graph, levels, pivots, BunchSet::from_maps(maps), config))
}

fn encode_derived<W: Weight>(o: &DistanceOracle<W>, w: &mut Writer) {
    let n = o.graph().node_count();
    let k = o.k();
    let dt = o.deltas();
    for v in 0..n {
        for j in even_indices(k) {
            w.w(dt.delta(v, j));
        }
        for j in 0..k {
            w.w(dt.max_delta(v, j));
        }
        for j in 2..k {
            w.u8(dt.argmax(v, j) as u8);
        }
    }
    match o.x_indices() {
        None => w.u8(0),
        Some(x) => {
            w.u8(1);
            for v in 0..n {
                w.u8(x.is_available(v) as u8);
                for i in even_indices(k) {
                    let e = x.get(v, i).unwrap_or_default();
                    w.buf.extend_from_slice(&[e.x1, e.x2, e.x3, e.x3_saturated as u8]);
                }
            }
        }
    }
    let scale = o.scale();
    for list in [scale.values(), scale.filtered()] {
        w.u64(list.len() as u64);
        for &d in list {
            w.w(d);
        }
    }
    for u in 0..n {
        let values = o.node_scales().values(u, scale);
        w.u64(values.len() as u64);
        for d in values {
            w.u32(scale.index_of(d).expect("L_u lies in the filtered scale"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::tests::fixture_config;
    use crate::tz::tests::p5;

    fn fixture() -> DistanceOracle<f64> {
        DistanceOracle::build(p5(), fixture_config()).unwrap().0
    }

    #[test]
    fn round_trip_is_identity() {
        let o = fixture();
        let bytes = o.to_snapshot();
        let back = DistanceOracle::<f64>::from_snapshot(&bytes).unwrap();
        assert_eq!(back.to_snapshot(), bytes);
        assert_eq!(back.config(), o.config());
        assert_eq!(back.query(0, 4), 4.0);
    }

    #[test]
    fn rejects_foreign_and_truncated_input() {
        let bytes = fixture().to_snapshot();
        assert!(DistanceOracle::<f64>::from_snapshot(b"nonsense").is_err());
        assert!(DistanceOracle::<f64>::from_snapshot(&bytes[..bytes.len() - 1]).is_err());
        assert!(DistanceOracle::<f32>::from_snapshot(&bytes).is_err());
    }

    #[test]
    fn rejects_inconsistent_derived_tables() {
        let mut bytes = fixture().to_snapshot();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        let err = DistanceOracle::<f64>::from_snapshot(&bytes).unwrap_err();
        assert!(err.to_string().contains("derived"), "{err}");
    }

    #[test]
    fn f32_round_trip() {
        let g: Graph<f32> = Graph::from_edge_list("5\n0 1 1\n1 2 1\n2 3 1\n3 4 1\n").unwrap();
        let o = DistanceOracle::build(g, fixture_config()).unwrap().0;
        let bytes = o.to_snapshot();
        assert_eq!(bytes[9], 4);
        let back = DistanceOracle::<f32>::from_snapshot(&bytes).unwrap();
        assert_eq!(back.to_snapshot(), bytes);
    }
}
