//! Single-contract scanning: AST → graph → features → GCN → line verdicts,
//! with a per-phase timing breakdown.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::ast::{parse_ast, AstDocument, AstError};
use crate::dataset::{subtype_hits, Subtype};
use crate::features::{FeatureError, FEATURE_DIM};
use crate::gcn::{model_forward, Checkpoint, CheckpointError, GcnError, NormalizedAdjacency};
use crate::graph::{build_code_graph, GraphError};
use crate::labels::{project_node_predictions, LabelError, NodeLabels, Projection};

/// Environment variable naming the compiler binary used for `.sol` input.
pub const SOLC_ENV: &str = "GSCAN_SOLC";

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("compiler {compiler:?} could not be started: {source}")]
    CompilerUnavailable { compiler: String, source: std::io::Error },
    #[error("compiler failed on {path}: {message}")]
    Compiler { path: PathBuf, message: String },
    #[error("ast_ingest: {0}")]
    Ast(#[from] AstError),
    #[error("graph_builder: {0}")]
    Graph(#[from] GraphError),
    #[error("node_features: {0}")]
    Feature(#[from] FeatureError),
    #[error("gcn_core: {0}")]
    Model(#[from] GcnError),
    #[error("label_mapper: {0}")]
    Label(#[from] LabelError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint uses feature schema v{found} with {input} inputs; this build reads v{expected} with {FEATURE_DIM}")]
    SchemaMismatch { found: u32, expected: u32, input: usize },
}

/// What to scan.
#[derive(Debug, Clone)]
pub enum ScanInput {
    /// A pre-generated AST bundle.
    Ast(PathBuf),
    /// Solidity source, compiled with the given binary.
    Sol { path: PathBuf, compiler: String },
}

impl ScanInput {
    pub fn path(&self) -> &Path {
        match self {
            ScanInput::Ast(p) | ScanInput::Sol { path: p, .. } => p,
        }
    }

    /// Source input compiled with `$GSCAN_SOLC`, falling back to `solc`.
    pub fn sol(path: impl Into<PathBuf>) -> Self {
        let compiler = std::env::var(SOLC_ENV).unwrap_or_else(|_| "solc".into());
        ScanInput::Sol { path: path.into(), compiler }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineVerdict {
    pub line: usize,
    pub vulnerable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtypeHit {
    pub subtype: Subtype,
    pub line: usize,
}

/// Wall-clock milliseconds per phase. `graph_ms` covers graph generation and
/// feature encoding; `predict_ms` covers the forward pass and line mapping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub ast_ms: f64,
    pub graph_ms: f64,
    pub predict_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub path: String,
    pub lines: Vec<LineVerdict>,
    pub vulnerable: bool,
    pub subtype_hits: Vec<SubtypeHit>,
    pub nodes: usize,
    pub edges: usize,
    pub timing: Timing,
    /// Source text of flagged lines, for display only.
    #[serde(skip)]
    pub excerpts: Vec<(usize, String)>,
}

impl ScanReport {
    pub fn flagged_lines(&self) -> Vec<usize> {
        self.lines.iter().filter(|v| v.vulnerable).map(|v| v.line).collect()
    }

    pub fn exit_code(&self) -> i32 {
        if self.vulnerable {
            2
        } else {
            0
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("serializable")
    }
}

impl fmt::Display for ScanReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.vulnerable { "VULNERABLE" } else { "clean" };
        writeln!(f, "{}: {verdict} ({} nodes, {} edges)", self.path, self.nodes, self.edges)?;
        for (line, text) in &self.excerpts {
            writeln!(f, "  {line:>6} | {}", text.trim_end())?;
        }
        if !self.subtype_hits.is_empty() {
            let hits: Vec<String> = self.subtype_hits.iter().map(|h| format!("{}@{}", h.subtype, h.line)).collect();
            writeln!(f, "  transfers: {}", hits.join(", "))?;
        }
        let t = &self.timing;
        write!(
            f,
            "  timing ms: ast {:.2}  graph {:.2}  predict {:.2}  total {:.2}",
            t.ast_ms, t.graph_ms, t.predict_ms, t.total_ms
        )
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn read(path: &Path) -> Result<Vec<u8>, ScanError> {
    std::fs::read(path).map_err(|source| ScanError::Io { path: path.to_path_buf(), source })
}

/// Runs `<compiler> --combined-json ast <path>` and wraps the result as a
/// document.
pub fn compile(path: &Path, compiler: &str) -> Result<AstDocument, ScanError> {
    let source = read(path)?;
    let output = Command::new(compiler)
        .arg("--combined-json")
        .arg("ast")
        .arg(path)
        .output()
        .map_err(|source| ScanError::CompilerUnavailable { compiler: compiler.to_string(), source })?;
    let failed = |message: String| ScanError::Compiler { path: path.to_path_buf(), message };
    if !output.status.success() {
        return Err(failed(String::from_utf8_lossy(&output.stderr).trim().to_string()));
    }
    let combined: Value =
        serde_json::from_slice(&output.stdout).map_err(|e| failed(format!("unreadable output: {e}")))?;
    let version = combined.get("version").and_then(Value::as_str);
    let sources = combined.get("sources").and_then(Value::as_object).ok_or_else(|| failed("no sources".into()))?;
    let name = path.to_string_lossy();
    let entry = sources
        .get(name.as_ref())
        .or_else(|| (sources.len() == 1).then(|| sources.values().next()).flatten())
        .ok_or_else(|| failed(format!("no AST for {name}")))?;
    let ast = entry.get("AST").or_else(|| entry.get("ast")).ok_or_else(|| failed("no AST in output".into()))?;
    Ok(AstDocument::from_compact(ast, source, version)?)
}

/// Rejects checkpoints whose inputs this build cannot produce.
pub fn check_checkpoint(checkpoint: &Checkpoint) -> Result<(), ScanError> {
    let expected = crate::features::FeatureSchema::v1().version();
    let found = checkpoint.schema.version();
    let input = checkpoint.params.architecture().input;
    if found != expected || input != FEATURE_DIM {
        return Err(ScanError::SchemaMismatch { found, expected, input });
    }
    Ok(())
}

/// Scans one contract.
pub fn scan(input: &ScanInput, checkpoint: &Checkpoint) -> Result<ScanReport, ScanError> {
    check_checkpoint(checkpoint)?;
    let start = Instant::now();

    let doc = match input {
        ScanInput::Ast(path) => parse_ast(&read(path)?)?,
        ScanInput::Sol { path, compiler } => compile(path, compiler)?,
    };
    let ast_ms = ms(start);

    let t = Instant::now();
    let graph = build_code_graph(&doc)?;
    let features = checkpoint.schema.encode_graph(&graph, &doc)?;
    let graph_ms = ms(t);

    let t = Instant::now();
    let adjacency = NormalizedAdjacency::from_graph(&graph);
    let prediction = model_forward(features.view(), &adjacency, &checkpoint.params)?;
    let node_labels = NodeLabels(prediction.labels());
    let line_labels = project_node_predictions(graph.spans(), &node_labels, doc.line_index(), Projection::Union)?;
    let predict_ms = ms(t);

    let lines: Vec<LineVerdict> =
        (1..=line_labels.len()).map(|line| LineVerdict { line, vulnerable: line_labels.get(line) }).collect();
    let hits = subtype_hits(&doc)?.into_iter().map(|(subtype, line)| SubtypeHit { subtype, line }).collect();
    let text = String::from_utf8_lossy(doc.source());
    let source_lines: Vec<&str> = text.lines().collect();
    let excerpts = line_labels
        .vulnerable_lines()
        .into_iter()
        .map(|l| (l, source_lines.get(l - 1).copied().unwrap_or_default().to_string()))
        .collect();
    let total_ms = ms(start);

    Ok(ScanReport {
        path: input.path().display().to_string(),
        vulnerable: lines.iter().any(|v| v.vulnerable),
        lines,
        subtype_hits: hits,
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        timing: Timing { ast_ms, graph_ms, predict_ms, total_ms },
        excerpts,
    })
}
