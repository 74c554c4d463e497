//! Code-graph construction.
//!
//! Every AST node becomes a graph node (comment-only nodes excepted) and
//! six edge families are layered on top of the tree:
//!
//! * hierarchy edges, parent to child and back;
//! * control-flow edges between consecutive statements of a block, and
//!   ordering edges between sibling attributes whose order matters;
//! * reference edges between an identifier and its declaration, both ways;
//! * branching edges (condition to true/false body);
//! * loop edges;
//! * break / continue / return edges.
//!
//! Families are tracked while building and dropped by [`GraphBuilder::finalize`],
//! which yields a directed homogeneous [`CodeGraph`].

mod builder;
#[cfg(test)]
mod tests;

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{AstDocument, SourceSpan};

pub use builder::GraphBuilder;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("node {node} references declaration {referenced}, which has no graph node")]
    MissingReference { node: usize, referenced: i64 },
    #[error("{kind} at AST node {node} has no enclosing {expected}")]
    OrphanJump { node: usize, kind: String, expected: &'static str },
    #[error("malformed graph serialization: {0}")]
    MalformedSerialization(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeFamily {
    AstHierarchy,
    ControlFlow,
    Ordering,
    Reference,
    TrueBody,
    FalseBody,
}

/// Directed edge tagged with the family that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaggedEdge {
    pub src: usize,
    pub dst: usize,
    pub family: EdgeFamily,
}

/// Directed homogeneous code graph. Nodes are numbered densely in AST
/// preorder; each keeps a back-reference to its AST node and source span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeGraph {
    ast_nodes: Vec<usize>,
    spans: Vec<SourceSpan>,
    edges: Vec<(usize, usize)>,
}

impl CodeGraph {
    /// Assembles a graph from parts; duplicate edges are collapsed.
    pub fn from_parts(
        ast_nodes: Vec<usize>,
        spans: Vec<SourceSpan>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        assert_eq!(ast_nodes.len(), spans.len());
        let n = spans.len();
        let mut seen = HashSet::new();
        let edges = edges
            .into_iter()
            .inspect(|&(s, d)| assert!(s < n && d < n, "edge ({s},{d}) out of range for {n} nodes"))
            .filter(|e| seen.insert(*e))
            .collect();
        Self { ast_nodes, spans, edges }
    }

    pub fn node_count(&self) -> usize {
        self.spans.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn spans(&self) -> &[SourceSpan] {
        &self.spans
    }

    /// AST preorder index of each graph node.
    pub fn ast_nodes(&self) -> &[usize] {
        &self.ast_nodes
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.edges.contains(&(src, dst))
    }

    /// Edges sorted by `(src, dst)`.
    pub fn sorted_edges(&self) -> Vec<(usize, usize)> {
        let mut edges = self.edges.clone();
        edges.sort_unstable();
        edges
    }

    /// Canonical text form: `n <count>` followed by one `e <src> <dst>` line
    /// per edge in `(src, dst)` order. Names, literal values, comments and
    /// whitespace never reach this form.
    pub fn canonical_serialization(&self) -> String {
        let mut out = String::with_capacity(16 + self.edges.len() * 12);
        writeln!(out, "n {}", self.node_count()).unwrap();
        for (s, d) in self.sorted_edges() {
            writeln!(out, "e {s} {d}").unwrap();
        }
        out
    }

    /// Parses the canonical form back into node count and sorted edges.
    pub fn parse_canonical(text: &str) -> Result<(usize, Vec<(usize, usize)>), GraphError> {
        let bad = |m: &str| GraphError::MalformedSerialization(m.to_string());
        let mut lines = text.lines();
        let count = lines
            .next()
            .and_then(|l| l.strip_prefix("n "))
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| bad("missing node count"))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut parts = line.strip_prefix("e ").ok_or_else(|| bad(line))?.split(' ');
            let (Some(s), Some(d), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad(line));
            };
            let s: usize = s.parse().map_err(|_| bad(line))?;
            let d: usize = d.parse().map_err(|_| bad(line))?;
            if s >= count || d >= count {
                return Err(bad("edge endpoint out of range"));
            }
            edges.push((s, d));
        }
        Ok((count, edges))
    }

    /// Disjoint union; returns the graph and the node offset of each member.
    pub fn disjoint_union<'a>(graphs: impl IntoIterator<Item = &'a CodeGraph>) -> (CodeGraph, Vec<usize>) {
        let mut ast_nodes = Vec::new();
        let mut spans = Vec::new();
        let mut edges = Vec::new();
        let mut offsets = Vec::new();
        for g in graphs {
            let base = spans.len();
            offsets.push(base);
            ast_nodes.extend_from_slice(&g.ast_nodes);
            spans.extend_from_slice(&g.spans);
            edges.extend(g.edges.iter().map(|&(s, d)| (s + base, d + base)));
        }
        (CodeGraph { ast_nodes, spans, edges }, offsets)
    }
}

/// Runs every construction step and finalizes the graph.
pub fn build_code_graph(ast: &AstDocument) -> Result<CodeGraph, GraphError> {
    let mut builder = GraphBuilder::build_base_graph(ast);
    builder.add_control_flow_edges();
    builder.add_ordering_edges();
    builder.add_reference_edges()?;
    builder.add_branch_edges();
    builder.add_loop_edges();
    builder.add_jump_edges()?;
    Ok(builder.finalize())
}
