//! Binary snapshot format (`.sgs`) with exact per-node density attribution.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! header (24 bytes): magic "SGS1" | version u16 | d u16 | precision u8
//!                    | flags u8 | node_count u64 | config digest 6 bytes
//! per node:          id u64 | last_touched u64
//!                    | embedding payload d*p bytes (+ scale f32, zero f32 for I8)
//!                    | edge_count u16 | edges: (target u64, weight f32, velocity f32)
//!                    | metadata_len u32 | metadata bytes
//! ```
//!
//! Attribution: embedding payloads count as embedding mass, 16-byte edge
//! records as linkage mass L, everything else (header amortized, fixed
//! per-node fields, metadata, I8 affine side channel) as metadata mass H.

use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Edge, GraphConfig, NodeId, NodeRecord, SemanticGraph};
use crate::quant::{PrecisionRegime, QuantizedEmbedding, I8_SIDE_BYTES};

pub const MAGIC: [u8; 4] = *b"SGS1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 24;
/// Serialized size of one edge record (target u64 + weight f32 + velocity f32).
pub const EDGE_RECORD_BYTES: u64 = 16;
/// Fixed per-node bytes outside embedding and edges: id, last_touched,
/// edge_count, metadata_len.
pub const NODE_FIXED_BYTES: u64 = 8 + 8 + 2 + 4;

/// Exact byte decomposition of a serialized graph.
#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    pub node_count: u64,
    pub total_bytes: u64,
    pub per_node_mean: f64,
    /// Exact d*p.
    pub embedding_bytes_per_node: u64,
    /// Mean linkage mass L.
    pub linkage_bytes_per_node: f64,
    /// Mean metadata+encoding mass H (header amortized in).
    pub metadata_bytes_per_node: f64,
    pub embedding_fraction: f64,
    /// Set when node_count is 0 and per-node figures are undefined.
    pub degenerate: bool,
}

impl DensityReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("node_count {}\n", self.node_count));
        s.push_str(&format!("total_bytes {}\n", self.total_bytes));
        s.push_str(&format!("per_node_mean {:.3}\n", self.per_node_mean));
        s.push_str(&format!(
            "embedding_bytes_per_node {}\n",
            self.embedding_bytes_per_node
        ));
        s.push_str(&format!(
            "linkage_bytes_per_node {:.3}\n",
            self.linkage_bytes_per_node
        ));
        s.push_str(&format!(
            "metadata_bytes_per_node {:.3}\n",
            self.metadata_bytes_per_node
        ));
        s.push_str(&format!("embedding_fraction {:.4}\n", self.embedding_fraction));
        if self.degenerate {
            s.push_str("degenerate true\n");
        }
        s
    }
}

fn fnv1a(data: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in data {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// 6-byte digest of the generation config, stored in the header.
pub fn config_digest(config: &GraphConfig) -> [u8; 6] {
    let mut buf = Vec::with_capacity(32);
    buf.extend_from_slice(&config.d.to_le_bytes());
    buf.push(config.precision.code());
    buf.extend_from_slice(&config.target_mean_degree.to_le_bytes());
    buf.extend_from_slice(&config.d_max.to_le_bytes());
    buf.extend_from_slice(&config.k.to_le_bytes());
    buf.extend_from_slice(&config.seed.to_le_bytes());
    let h = fnv1a(&buf).to_le_bytes();
    [h[0], h[1], h[2], h[3], h[4], h[5]]
}

struct DensityTally {
    node_count: u64,
    embedding: u64,
    linkage: u64,
    other: u64,
    d: u64,
    p: u64,
}

impl DensityTally {
    fn new(d: u64, p: u64) -> Self {
        DensityTally {
            node_count: 0,
            embedding: 0,
            linkage: 0,
            other: HEADER_LEN,
            d,
            p,
        }
    }

    fn add_node(&mut self, degree: u64, metadata_len: u64, i8_side: bool) {
        self.node_count += 1;
        self.embedding += self.d * self.p;
        self.linkage += degree * EDGE_RECORD_BYTES;
        self.other += NODE_FIXED_BYTES + metadata_len;
        if i8_side {
            self.other += I8_SIDE_BYTES;
        }
    }

    fn report(&self) -> DensityReport {
        let total = self.embedding + self.linkage + self.other;
        if self.node_count == 0 {
            return DensityReport {
                node_count: 0,
                total_bytes: total,
                per_node_mean: 0.0,
                embedding_bytes_per_node: self.d * self.p,
                linkage_bytes_per_node: 0.0,
                metadata_bytes_per_node: 0.0,
                embedding_fraction: 0.0,
                degenerate: true,
            };
        }
        let n = self.node_count as f64;
        let per_node_mean = total as f64 / n;
        DensityReport {
            node_count: self.node_count,
            total_bytes: total,
            per_node_mean,
            embedding_bytes_per_node: self.d * self.p,
            linkage_bytes_per_node: self.linkage as f64 / n,
            metadata_bytes_per_node: self.other as f64 / n,
            embedding_fraction: (self.d * self.p) as f64 / per_node_mean,
            degenerate: false,
        }
    }
}

/// Density report computed arithmetically, without materializing bytes.
/// Matches the report `serialize` returns for the same graph.
pub fn measure_density(graph: &SemanticGraph) -> DensityReport {
    let d = graph.dim() as u64;
    let p = graph.precision().bytes_per_component() as u64;
    let i8_side = graph.precision() == PrecisionRegime::I8;
    let mut tally = DensityTally::new(d, p);
    for record in graph.nodes() {
        tally.add_node(record.degree() as u64, record.metadata.len() as u64, i8_side);
    }
    tally.report()
}

fn encode_header(graph: &SemanticGraph, out: &mut Vec<u8>) {
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(graph.dim() as u16).to_le_bytes());
    out.push(graph.precision().code());
    out.push(0u8); // flags, reserved
    out.extend_from_slice(&(graph.len() as u64).to_le_bytes());
    let digest = graph
        .stored_digest
        .unwrap_or_else(|| config_digest(graph.config()));
    out.extend_from_slice(&digest);
}

/// Serialize a graph to the snapshot format, returning the bytes together
/// with the exact density report.
pub fn serialize(graph: &SemanticGraph) -> Result<(Vec<u8>, DensityReport)> {
    let report = measure_density(graph);
    let mut out = Vec::with_capacity(report.total_bytes as usize);
    encode_header(graph, &mut out);
    let i8_side = graph.precision() == PrecisionRegime::I8;
    for record in graph.nodes() {
        out.extend_from_slice(&record.id.0.to_le_bytes());
        out.extend_from_slice(&record.last_touched.to_le_bytes());
        out.extend_from_slice(&record.embedding.payload);
        if i8_side {
            out.extend_from_slice(&record.embedding.scale.to_le_bytes());
            out.extend_from_slice(&record.embedding.zero_point.to_le_bytes());
        }
        out.extend_from_slice(&(record.edges.len() as u16).to_le_bytes());
        for edge in &record.edges {
            out.extend_from_slice(&edge.target.0.to_le_bytes());
            out.extend_from_slice(&edge.weight.to_le_bytes());
            out.extend_from_slice(&edge.velocity.to_le_bytes());
        }
        out.extend_from_slice(&(record.metadata.len() as u32).to_le_bytes());
        out.extend_from_slice(&record.metadata);
    }
    debug_assert_eq!(out.len() as u64, report.total_bytes);
    Ok((out, report))
}

pub fn write_snapshot(graph: &SemanticGraph, path: &Path) -> Result<DensityReport> {
    let (bytes, report) = serialize(graph)?;
    std::fs::write(path, bytes)?;
    Ok(report)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    node_index: u64,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.data.len() {
            return Err(Error::Truncated {
                node_index: self.node_index,
            });
        }
        let out = &self.data[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parse a snapshot back into a graph. `serialize(deserialize(bytes))` is
/// byte-identical to the input.
pub fn deserialize(bytes: &[u8]) -> Result<SemanticGraph> {
    let mut cur = Cursor {
        data: bytes,
        pos: 0,
        node_index: 0,
    };
    let magic = cur.take(4)?;
    if magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = cur.u16()?;
    if version != VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let d = cur.u16()?;
    let precision_byte = cur.take(1)?[0];
    let precision = PrecisionRegime::from_code(precision_byte).ok_or(Error::CorruptRecord {
        offset: (cur.pos - 1) as u64,
        reason: format!("unknown precision code {precision_byte}"),
    })?;
    let _flags = cur.take(1)?[0];
    let node_count = cur.u64()?;
    let digest: [u8; 6] = cur.take(6)?.try_into().unwrap();
    if d == 0 {
        return Err(Error::CorruptRecord {
            offset: 6,
            reason: "zero dimension".into(),
        });
    }

    let p = precision.bytes_per_component();
    let i8_side = precision == PrecisionRegime::I8;
    let mut records: Vec<NodeRecord> = Vec::with_capacity(node_count.min(1 << 24) as usize);
    let mut max_degree: usize = 0;
    for node_index in 0..node_count {
        cur.node_index = node_index;
        let record_offset = cur.pos as u64;
        let id = cur.u64()?;
        if id != node_index {
            return Err(Error::CorruptRecord {
                offset: record_offset,
                reason: format!("expected node id {node_index}, found {id}"),
            });
        }
        let last_touched = cur.u64()?;
        let payload = cur.take(d as usize * p)?.to_vec();
        let (mut scale, mut zero_point) = (0.0f32, 0.0f32);
        if i8_side {
            scale = cur.f32()?;
            zero_point = cur.f32()?;
        }
        let edge_count = cur.u16()? as usize;
        let mut edges = Vec::with_capacity(edge_count);
        let mut prev: Option<u64> = None;
        for _ in 0..edge_count {
            let edge_offset = cur.pos as u64;
            let target = cur.u64()?;
            let weight = cur.f32()?;
            let velocity = cur.f32()?;
            if target == id {
                return Err(Error::CorruptRecord {
                    offset: edge_offset,
                    reason: "self-loop".into(),
                });
            }
            if target >= node_count {
                return Err(Error::CorruptRecord {
                    offset: edge_offset,
                    reason: format!("edge target {target} out of range"),
                });
            }
            if let Some(prev) = prev {
                if target <= prev {
                    return Err(Error::CorruptRecord {
                        offset: edge_offset,
                        reason: "edge targets not strictly ascending".into(),
                    });
                }
            }
            if !weight.is_finite() || !velocity.is_finite() {
                return Err(Error::CorruptRecord {
                    offset: edge_offset,
                    reason: "non-finite edge field".into(),
                });
            }
            prev = Some(target);
            edges.push(Edge {
                target: NodeId(target),
                weight,
                velocity,
            });
        }
        max_degree = max_degree.max(edges.len());
        let metadata_len = cur.u32()? as usize;
        let metadata = cur.take(metadata_len)?.to_vec();
        records.push(NodeRecord {
            id: NodeId(id),
            embedding: QuantizedEmbedding {
                precision,
                payload,
                scale,
                zero_point,
            },
            edges,
            metadata,
            last_touched,
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::CorruptRecord {
            offset: cur.pos as u64,
            reason: "trailing bytes after final node".into(),
        });
    }

    // The snapshot does not carry the full generation config; rebuild a
    // compatible one and keep the stored digest for byte-identical re-writes.
    let total_edges: u64 = records.iter().map(|r| r.edges.len() as u64).sum();
    let d_max = max_degree.max(64).min(u16::MAX as usize) as u16;
    let mean = if records.is_empty() {
        1.0
    } else {
        (total_edges as f64 / records.len() as f64).max(1.0)
    };
    let config = GraphConfig {
        d,
        precision,
        target_mean_degree: mean.min(d_max as f64),
        d_max,
        k: 2,
        seed: 0,
    };
    let mut graph = SemanticGraph::new(config)?;
    for record in records {
        graph.push_record(record);
    }
    graph.stored_digest = Some(digest);
    Ok(graph)
}

pub fn read_snapshot(path: &Path) -> Result<SemanticGraph> {
    let bytes = std::fs::read(path)?;
    deserialize(&bytes)
}

/// Recompute a density report by streaming a snapshot file, without
/// building the graph in memory.
pub fn density_report_from_file(path: &Path) -> Result<DensityReport> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN as usize];
    reader
        .read_exact(&mut header)
        .map_err(|_| Error::Truncated { node_index: 0 })?;
    if header[0..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u16::from_le_bytes(header[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let d = u16::from_le_bytes(header[6..8].try_into().unwrap()) as u64;
    let precision = PrecisionRegime::from_code(header[8]).ok_or(Error::CorruptRecord {
        offset: 8,
        reason: "unknown precision code".into(),
    })?;
    let node_count = u64::from_le_bytes(header[10..18].try_into().unwrap());
    let p = precision.bytes_per_component() as u64;
    let i8_side = precision == PrecisionRegime::I8;

    let mut tally = DensityTally::new(d, p);
    let mut small = [0u8; 8];
    for node_index in 0..node_count {
        let fail = |_| Error::Truncated { node_index };
        // id + last_touched, then skip embedding payload (+ I8 side channel)
        reader.read_exact(&mut small).map_err(fail)?;
        reader.read_exact(&mut small).map_err(fail)?;
        let skip = d * p + if i8_side { I8_SIDE_BYTES } else { 0 };
        reader.seek_relative(skip as i64).map_err(fail)?;
        let mut two = [0u8; 2];
        reader.read_exact(&mut two).map_err(fail)?;
        let degree = u16::from_le_bytes(two) as u64;
        reader
            .seek_relative((degree * EDGE_RECORD_BYTES) as i64)
            .map_err(fail)?;
        let mut four = [0u8; 4];
        reader.read_exact(&mut four).map_err(fail)?;
        let metadata_len = u32::from_le_bytes(four) as u64;
        reader.seek_relative(metadata_len as i64).map_err(fail)?;
        tally.add_node(degree, metadata_len, i8_side);
    }
    // Seeks past EOF do not fail; confirm the stream ends exactly here.
    let here = reader.stream_position()?;
    let end = reader.seek(SeekFrom::End(0))?;
    if here != end {
        return Err(Error::CorruptRecord {
            offset: here.min(end),
            reason: "file length inconsistent with declared counts".into(),
        });
    }
    Ok(tally.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, GraphConfig};

    fn small_graph(precision: PrecisionRegime) -> SemanticGraph {
        generate_synthetic(
            GraphConfig {
                d: 16,
                precision,
                seed: 7,
                ..GraphConfig::default()
            },
            50,
        )
        .unwrap()
    }

    #[test]
    fn empty_graph_snapshot_is_header_only() {
        let g = SemanticGraph::new(GraphConfig::default()).unwrap();
        let (bytes, report) = serialize(&g).unwrap();
        assert_eq!(bytes.len(), 24);
        assert!(report.degenerate);
        assert_eq!(report.per_node_mean, 0.0);
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        for precision in PrecisionRegime::ALL {
            let g = small_graph(precision);
            let (bytes, _) = serialize(&g).unwrap();
            let back = deserialize(&bytes).unwrap();
            let (again, _) = serialize(&back).unwrap();
            assert_eq!(bytes, again, "roundtrip mismatch under {precision:?}");
        }
    }

    #[test]
    fn accounting_identity_holds() {
        for precision in PrecisionRegime::ALL {
            let g = small_graph(precision);
            let (bytes, report) = serialize(&g).unwrap();
            assert_eq!(bytes.len() as u64, report.total_bytes);
            let n = report.node_count as f64;
            let parts = report.embedding_bytes_per_node as f64
                + report.linkage_bytes_per_node
                + report.metadata_bytes_per_node;
            assert!((parts - report.total_bytes as f64 / n).abs() < 1e-9);
        }
    }

    #[test]
    fn precision_change_shifts_density_by_exact_embedding_diff() {
        let f64g = small_graph(PrecisionRegime::F64);
        let f32g = small_graph(PrecisionRegime::F32);
        let a = measure_density(&f64g);
        let b = measure_density(&f32g);
        assert_eq!(a.per_node_mean - b.per_node_mean, (16 * 4) as f64);
        assert_eq!(a.linkage_bytes_per_node, b.linkage_bytes_per_node);
    }

    #[test]
    fn bad_magic_detected() {
        let g = small_graph(PrecisionRegime::F32);
        let (mut bytes, _) = serialize(&g).unwrap();
        bytes[0] ^= 0xff;
        assert!(matches!(deserialize(&bytes), Err(Error::BadMagic)));
    }

    #[test]
    fn truncation_names_failing_node() {
        let g = small_graph(PrecisionRegime::F32);
        let (bytes, _) = serialize(&g).unwrap();
        let cut = &bytes[..bytes.len() - 10];
        match deserialize(cut) {
            Err(Error::Truncated { node_index }) => assert_eq!(node_index, 49),
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_detected() {
        let g = small_graph(PrecisionRegime::F32);
        let (mut bytes, _) = serialize(&g).unwrap();
        bytes[4] = 9;
        assert!(matches!(deserialize(&bytes), Err(Error::VersionMismatch(9))));
    }

    #[test]
    fn file_report_matches_serialize_report() {
        let dir = tempfile::tempdir().unwrap();
        for precision in PrecisionRegime::ALL {
            let g = small_graph(precision);
            let path = dir.path().join(format!("g-{}.sgs", precision.name()));
            let written = write_snapshot(&g, &path).unwrap();
            let streamed = density_report_from_file(&path).unwrap();
            assert_eq!(written.total_bytes, streamed.total_bytes);
            assert_eq!(written.node_count, streamed.node_count);
            assert_eq!(written.per_node_mean, streamed.per_node_mean);
            assert_eq!(written.linkage_bytes_per_node, streamed.linkage_bytes_per_node);
        }
    }

    #[test]
    fn file_report_flags_empty_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let g = SemanticGraph::new(GraphConfig::default()).unwrap();
        let path = dir.path().join("empty.sgs");
        write_snapshot(&g, &path).unwrap();
        let report = density_report_from_file(&path).unwrap();
        assert!(report.degenerate);
        assert_eq!(report.node_count, 0);
    }
}
