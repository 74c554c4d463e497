//! Code-graph construction and graph-convolutional node classification for
//! locating reentrancy vulnerabilities in Solidity contracts at line level.
//!
//! The pipeline runs compact AST JSON ([`ast`]) through graph construction
//! ([`graph`]) and node feature encoding ([`features`]) into a GCN
//! ([`gcn`]) whose per-node verdicts are mapped back to source lines
//! ([`labels`]).

pub mod ast;
mod binio;
pub mod dataset;
pub mod eval;
pub mod features;
pub mod gcn;
pub mod graph;
pub mod labels;
pub mod scan;
pub mod train;

#[cfg(test)]
mod testutil;
