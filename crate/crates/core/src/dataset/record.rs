//! Binary record container.
//!
//! ```text
//! magic "SGRECORD" | version u32 | len + header JSON {id, subtype, digest}
//! | node count | edge count | edges (u32 src, u32 dst).. | AST index per node
//! | span per node (u32 start, u32 length, i32 file) | feature width
//! | features (row-major f32) | node labels (u8 each) | line count | line labels (u8 each)
//! | sha256 of everything above
//! ```

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{canonical_hash, DatasetError, DatasetRecord, Subtype};
use crate::ast::SourceSpan;
use crate::binio::{put_text, put_u32, seal, unseal, BinError, Reader};
use crate::graph::CodeGraph;
use crate::labels::{LineLabels, NodeLabels};

const MAGIC: &[u8; 8] = b"SGRECORD";
pub const RECORD_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    id: String,
    subtype: Subtype,
    digest: String,
}

fn malformed(message: impl std::fmt::Display) -> DatasetError {
    DatasetError::malformed("record", message)
}

impl From<BinError> for DatasetError {
    fn from(e: BinError) -> Self {
        match e {
            BinError::Truncated => malformed("truncated"),
            BinError::Malformed(m) => malformed(m),
        }
    }
}

fn flags(r: &mut Reader, n: usize) -> Result<Vec<bool>, DatasetError> {
    r.take(n)?
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(malformed("label byte is not 0 or 1")),
        })
        .collect()
}

impl DatasetRecord {
    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.graph;
        let n = g.node_count();
        let mut out = Vec::with_capacity(64 + n * (4 * self.features.ncols() + 32) + g.edge_count() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&RECORD_VERSION.to_le_bytes());
        let header = Header { id: self.id.clone(), subtype: self.subtype, digest: self.digest.clone() };
        put_text(&mut out, &serde_json::to_string(&header).expect("serializable"));
        put_u32(&mut out, n);
        put_u32(&mut out, g.edge_count());
        for &(s, d) in g.edges() {
            put_u32(&mut out, s);
            put_u32(&mut out, d);
        }
        g.ast_nodes().iter().for_each(|&a| put_u32(&mut out, a));
        for span in g.spans() {
            put_u32(&mut out, span.start);
            put_u32(&mut out, span.length);
            out.extend_from_slice(&i32::try_from(span.file_index).expect("file index fits in i32").to_le_bytes());
        }
        put_u32(&mut out, self.features.ncols());
        self.features.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        out.extend(self.labels.0.iter().map(|&b| b as u8));
        put_u32(&mut out, self.line_labels.len());
        out.extend(self.line_labels.bits().iter().map(|&b| b as u8));
        seal(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(malformed("bad magic"));
        }
        let body = unseal(bytes).ok_or_else(|| malformed("digest mismatch"))?;
        let mut r = Reader::new(body, MAGIC.len());
        let version = r.u32()?;
        if version != RECORD_VERSION {
            return Err(malformed(format!("unsupported version {version}")));
        }
        let header: Header = serde_json::from_str(r.text()?).map_err(|e| malformed(format!("header: {e}")))?;
        let n = r.count(1)?;
        let edge_count = r.count(8)?;
        let mut edges = Vec::with_capacity(edge_count);
        for _ in 0..edge_count {
            let (s, d) = (r.usize()?, r.usize()?);
            if s >= n || d >= n {
                return Err(malformed("edge endpoint out of range"));
            }
            edges.push((s, d));
        }
        let ast_nodes = (0..n).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
        let mut spans = Vec::with_capacity(n);
        for _ in 0..n {
            let (start, length, file) = (r.usize()?, r.usize()?, r.i32()?);
            spans.push(SourceSpan::new(start, length, file as i64));
        }
        let width = r.usize()?;
        let values = r.floats(n.checked_mul(width).ok_or_else(|| malformed("feature size overflows"))?)?;
        let features = Array2::from_shape_vec((n, width), values).expect("length checked");
        let labels = NodeLabels(flags(&mut r, n)?);
        let line_count = r.count(1)?;
        let line_labels = LineLabels::from_bits(flags(&mut r, line_count)?);
        if !r.at_end() {
            return Err(malformed("trailing bytes"));
        }
        let graph = CodeGraph::from_parts(ast_nodes, spans, edges);
        if graph.edge_count() != edge_count {
            return Err(malformed("duplicate edges"));
        }
        if canonical_hash(&graph) != header.digest {
            return Err(malformed("stored digest does not match the graph"));
        }
        Ok(Self {
            id: header.id,
            subtype: header.subtype,
            graph,
            features,
            labels,
            line_labels,
            digest: header.digest,
        })
    }
}
