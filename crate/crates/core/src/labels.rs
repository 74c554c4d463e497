//! Line annotations to node labels and node predictions back to lines.
//!
//! Lines are numbered by counting the lines of the decoded source prefix
//! before an offset, so a span starting at byte 0 touches "line 0". That
//! slot never corresponds to a real line: it reads as clean and writes to it
//! are dropped.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ast::{AstError, LineIndex, SourceSpan};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error(transparent)]
    Span(#[from] AstError),
    #[error("line labels cover {got} lines but the source has {expected}")]
    LineCountMismatch { expected: usize, got: usize },
    #[error("{nodes} node labels for {spans} spans")]
    NodeCountMismatch { spans: usize, nodes: usize },
    #[error("bad line label file: {0}")]
    Parse(String),
}

/// Per-line vulnerability flags for lines `1..=len`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LineLabels {
    bits: Vec<bool>,
}

impl LineLabels {
    pub fn clean(line_count: usize) -> Self {
        Self { bits: vec![false; line_count] }
    }

    /// Flags the given 1-based lines; out-of-range lines are an error.
    pub fn from_lines(line_count: usize, lines: impl IntoIterator<Item = usize>) -> Result<Self, LabelError> {
        let mut labels = Self::clean(line_count);
        for line in lines {
            if line == 0 || line > line_count {
                return Err(LabelError::Parse(format!("line {line} outside 1..={line_count}")));
            }
            labels.bits[line - 1] = true;
        }
        Ok(labels)
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Label of 1-based `line`; line 0 and lines past the end read as clean.
    pub fn get(&self, line: usize) -> bool {
        line.checked_sub(1).and_then(|i| self.bits.get(i)).copied().unwrap_or(false)
    }

    fn set(&mut self, line: usize, value: bool) {
        if let Some(bit) = line.checked_sub(1).and_then(|i| self.bits.get_mut(i)) {
            *bit = value;
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    /// Flagged lines, 1-based and ascending.
    pub fn vulnerable_lines(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i + 1).collect()
    }
}

/// Text form: `lines <count>` then one flagged line number per line.
impl fmt::Display for LineLabels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lines {}", self.len())?;
        for line in self.vulnerable_lines() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl FromStr for LineLabels {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut rows = s.lines().map(str::trim).filter(|l| !l.is_empty());
        let count = rows
            .next()
            .and_then(|l| l.strip_prefix("lines "))
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| LabelError::Parse("missing `lines <count>` header".into()))?;
        let lines = rows
            .map(|r| r.parse::<usize>().map_err(|_| LabelError::Parse(format!("bad line number {r:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_lines(count, lines)
    }
}

/// Per-node flags, aligned with graph node order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeLabels(pub Vec<bool>);

impl NodeLabels {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn any(&self) -> bool {
        self.0.iter().any(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

/// How overlapping node verdicts combine on a line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Projection {
    /// A line is flagged if any node covering it is flagged.
    #[default]
    Union,
    /// Nodes are applied in index order and each overwrites its lines with
    /// its own verdict, so a later clean node can clear a line.
    Strict,
}

/// Node `i` is vulnerable iff any line its span touches is flagged.
pub fn annotate_node_labels(
    spans: &[SourceSpan],
    line_labels: &LineLabels,
    index: &LineIndex,
) -> Result<NodeLabels, LabelError> {
    check_lines(line_labels.len(), index)?;
    if !line_labels.any() {
        // Spans are still validated on clean files.
        for &span in spans {
            index.span_to_lines(span)?;
        }
        return Ok(NodeLabels(vec![false; spans.len()]));
    }
    spans
        .iter()
        .map(|&span| Ok(index.span_to_lines(span)?.lines().any(|l| line_labels.get(l))))
        .collect::<Result<Vec<_>, LabelError>>()
        .map(NodeLabels)
}

/// Maps node verdicts back to the lines their spans touch.
pub fn project_node_predictions(
    spans: &[SourceSpan],
    node_labels: &NodeLabels,
    index: &LineIndex,
    mode: Projection,
) -> Result<LineLabels, LabelError> {
    if spans.len() != node_labels.len() {
        return Err(LabelError::NodeCountMismatch { spans: spans.len(), nodes: node_labels.len() });
    }
    let mut out = LineLabels::clean(index.line_count());
    let ranges = spans.iter().map(|&s| index.span_to_lines(s)).collect::<Result<Vec<_>, _>>()?;
    if !node_labels.any() {
        return Ok(out);
    }
    for (range, &flag) in ranges.iter().zip(&node_labels.0) {
        match mode {
            Projection::Union if !flag => {}
            _ => range.lines().for_each(|l| out.set(l, flag)),
        }
    }
    Ok(out)
}

fn check_lines(got: usize, index: &LineIndex) -> Result<(), LabelError> {
    if got != index.line_count() {
        return Err(LabelError::LineCountMismatch { expected: index.line_count(), got });
    }
    Ok(())
}
