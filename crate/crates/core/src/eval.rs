//! Confusion matrices, metrics and the per-subtype report.

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("prediction and truth lengths differ ({pred} vs {truth})")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("nothing to evaluate")]
    EmptyEvaluation,
}

/// Counts with class 1 meaning vulnerable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn record(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

impl Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion { tp: self.tp + o.tp, tn: self.tn + o.tn, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

impl AddAssign for Confusion {
    fn add_assign(&mut self, o: Confusion) {
        *self = *self + o;
    }
}

pub fn confusion(pred: &[bool], truth: &[bool]) -> Result<Confusion, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    let mut c = Confusion::default();
    pred.iter().zip(truth).for_each(|(&p, &t)| c.record(p, t));
    Ok(c)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

pub fn metrics(c: Confusion) -> Result<Metrics, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    let ratio = |num: u64, den: u64| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
    let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
    let (f1, f1_undefined) = if precision + recall == 0.0 {
        (0.0, true)
    } else {
        (2.0 * precision * recall / (precision + recall), false)
    };
    Ok(Metrics {
        accuracy: (c.tp + c.tn) as f64 / total as f64,
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
        f1_undefined,
    })
}

/// A graph is vulnerable when any of its nodes is.
pub fn graph_level_labels<'a>(node_preds: impl IntoIterator<Item = &'a [bool]>) -> Vec<bool> {
    node_preds.into_iter().map(|g| g.iter().any(|&b| b)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Node,
    Graph,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Node => "node",
            Level::Graph => "graph",
        })
    }
}

/// One evaluated contract: node predictions and truth, plus its subtype.
#[derive(Debug, Clone)]
pub struct GraphOutcome {
    pub subtype: String,
    pub predicted: Vec<bool>,
    pub truth: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub subtype: String,
    pub split: String,
    pub level: Level,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

/// Subtype label used for the aggregate rows.
pub const ALL_SUBTYPES: &str = "all";

impl EvalReport {
    /// Node and graph rows for each subtype present (sorted), then the
    /// aggregate over all of them.
    pub fn build(split: &str, outcomes: &[GraphOutcome]) -> Result<Self, EvalError> {
        if outcomes.is_empty() {
            return Err(EvalError::EmptyEvaluation);
        }
        let mut subtypes: Vec<&str> = outcomes.iter().map(|o| o.subtype.as_str()).collect();
        subtypes.sort_unstable();
        subtypes.dedup();
        let mut rows = Vec::new();
        let groups = subtypes.iter().map(|&s| (s, Some(s))).chain([(ALL_SUBTYPES, None)]);
        for (name, filter) in groups {
            let mut node = Confusion::default();
            let mut graph = Confusion::default();
            for o in outcomes.iter().filter(|o| filter.is_none_or(|s| o.subtype == s)) {
                node += confusion(&o.predicted, &o.truth)?;
                let g = graph_level_labels([o.predicted.as_slice(), o.truth.as_slice()]);
                graph.record(g[0], g[1]);
            }
            for (level, c) in [(Level::Node, node), (Level::Graph, graph)] {
                let m = metrics(c)?;
                rows.push(ReportRow {
                    subtype: name.to_string(),
                    split: split.to_string(),
                    level,
                    accuracy: m.accuracy,
                    precision: m.precision,
                    recall: m.recall,
                    f1: m.f1,
                    confusion: c,
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn row(&self, subtype: &str, level: Level) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.subtype == subtype && r.level == level)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:<11} {:<6} {:>9} {:>10} {:>7} {:>7}",
            "subtype", "split", "level", "accuracy", "precision", "recall", "f1"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:<11} {:<6} {:>9.4} {:>10.4} {:>7.4} {:>7.4}",
                r.subtype, r.split, r.level, r.accuracy, r.precision, r.recall, r.f1
            )?;
        }
        Ok(())
    }
}
