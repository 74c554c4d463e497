//! Node feature encoding.
//!
//! Every graph node becomes a 29-dimensional vector of small integer codes.
//! Dims 0-14 identify the node type by group, dims 15-28 carry attribute
//! codes. The mapping is table-driven and versioned: [`FeatureSchema::v1`]
//! is parsed from a text manifest that is also stored in model checkpoints.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde_json::Value;
use thiserror::Error;

use crate::ast::{AstDocument, AstNode};
use crate::graph::CodeGraph;

pub const FEATURE_DIM: usize = 29;

const V1_MANIFEST: &str = include_str!("v1.schema");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("no feature encoding for node type {0}")]
    UnknownKind(String),
    #[error("feature schema line {line}: {message}")]
    BadSchema { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f32; FEATURE_DIM]);

impl FeatureVector {
    pub fn get(&self, dim: usize) -> f32 {
        self.0[dim]
    }
}

/// Attribute rule: on nodes of the listed types (all types if `kinds` is
/// `None`), the value of `attribute` selects the code for `dim`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct AttrRule {
    dim: usize,
    kinds: Option<Vec<String>>,
    attribute: String,
    codes: Vec<(String, i32)>,
    /// Code for values not listed; unlisted values map to 0 when absent.
    unlisted: Option<i32>,
}

impl AttrRule {
    fn applies_to(&self, kind: &str) -> bool {
        self.kinds.as_ref().is_none_or(|ks| ks.iter().any(|k| k == kind))
    }

    fn code_for(&self, value: &str) -> Option<i32> {
        self.codes.iter().find(|(v, _)| v == value).map(|&(_, c)| c)
    }

    /// Code for an attribute value. Lists use their first listed element.
    fn encode(&self, value: &Value) -> i32 {
        let fallback = self.unlisted.unwrap_or(0);
        match value {
            Value::Null => 0,
            Value::Array(items) if items.is_empty() => 0,
            Value::Array(items) => {
                items.iter().find_map(|v| scalar_text(v).and_then(|t| self.code_for(&t))).unwrap_or(fallback)
            }
            v => scalar_text(v).and_then(|t| self.code_for(&t)).unwrap_or(fallback),
        }
    }
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Versioned mapping from node type and attribute values to feature codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    version: u32,
    kinds: BTreeMap<String, (usize, i32)>,
    rules: Vec<AttrRule>,
}

impl FeatureSchema {
    pub fn v1() -> Self {
        V1_MANIFEST.parse().expect("built-in schema is valid")
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Node types with a kind entry.
    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.kinds.keys().map(String::as_str)
    }

    /// Text manifest; parsing it yields an equal schema.
    pub fn manifest(&self) -> String {
        self.to_string()
    }

    pub fn encode_node(&self, node: &AstNode) -> Result<FeatureVector, FeatureError> {
        let &(dim, code) = self.kinds.get(&node.kind).ok_or_else(|| FeatureError::UnknownKind(node.kind.clone()))?;
        let mut v = [0f32; FEATURE_DIM];
        v[dim] = code as f32;
        let mut filled = [false; FEATURE_DIM];
        for rule in &self.rules {
            if filled[rule.dim] || !rule.applies_to(&node.kind) {
                continue;
            }
            if let Some(value) = node.attr(&rule.attribute) {
                v[rule.dim] = rule.encode(value) as f32;
                filled[rule.dim] = true;
            }
        }
        Ok(FeatureVector(v))
    }

    /// One row per graph node, in graph node order.
    pub fn encode_graph(&self, graph: &CodeGraph, ast: &AstDocument) -> Result<Array2<f32>, FeatureError> {
        let mut m = Array2::zeros((graph.node_count(), FEATURE_DIM));
        for (row, &ast_index) in graph.ast_nodes().iter().enumerate() {
            let v = self.encode_node(ast.node(ast_index))?;
            m.row_mut(row).assign(&ndarray::ArrayView1::from(&v.0));
        }
        Ok(m)
    }

    /// Each dimension maps distinct labels to distinct non-zero codes.
    fn check_injective(&self) -> Result<(), String> {
        let mut by_dim: HashMap<usize, Vec<(String, i32)>> = HashMap::new();
        for (kind, &(dim, code)) in &self.kinds {
            by_dim.entry(dim).or_default().push((kind.clone(), code));
        }
        for rule in &self.rules {
            let entry = by_dim.entry(rule.dim).or_default();
            entry.extend(rule.codes.iter().cloned());
            if let Some(c) = rule.unlisted {
                entry.push(("?".into(), c));
            }
        }
        for (dim, pairs) in by_dim {
            let mut code_of: HashMap<&str, i32> = HashMap::new();
            let mut label_of: HashMap<i32, &str> = HashMap::new();
            for (label, code) in &pairs {
                if *code == 0 {
                    return Err(format!("dim {dim}: code 0 is reserved ({label})"));
                }
                if *code_of.entry(label).or_insert(*code) != *code {
                    return Err(format!("dim {dim}: {label} has two codes"));
                }
                if *label_of.entry(*code).or_insert(label) != label.as_str() {
                    return Err(format!("dim {dim}: code {code} is shared"));
                }
            }
        }
        Ok(())
    }
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self::v1()
    }
}

impl fmt::Display for FeatureSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "schema {}", self.version)?;
        writeln!(f, "dims {FEATURE_DIM}")?;
        let mut kinds: Vec<_> = self.kinds.iter().collect();
        kinds.sort_by_key(|(k, &(d, c))| (d, c, k.as_str()));
        for (kind, (dim, code)) in kinds {
            writeln!(f, "kind {kind} {dim} {code}")?;
        }
        for r in &self.rules {
            let kinds = r.kinds.as_ref().map_or("*".to_string(), |k| k.join(","));
            write!(f, "attr {} {} {}", r.dim, kinds, r.attribute)?;
            for (v, c) in &r.codes {
                write!(f, " {v}={c}")?;
            }
            if let Some(c) = r.unlisted {
                write!(f, " ?={c}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for FeatureSchema {
    type Err = FeatureError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut version = None;
        let mut kinds = BTreeMap::new();
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let bad = |message: String| FeatureError::BadSchema { line, message };
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let words: Vec<&str> = raw.split_whitespace().collect();
            let dim_of = |w: &str| match w.parse::<usize>() {
                Ok(d) if d < FEATURE_DIM => Ok(d),
                _ => Err(bad(format!("bad dimension {w:?}"))),
            };
            let code_of = |w: &str| w.parse::<i32>().map_err(|_| bad(format!("bad code {w:?}")));
            match words[0] {
                "schema" if words.len() == 2 => {
                    version = Some(words[1].parse().map_err(|_| bad("bad version".into()))?);
                }
                "dims" if words.len() == 2 => {
                    if words[1] != FEATURE_DIM.to_string() {
                        return Err(bad(format!("expected {FEATURE_DIM} dims")));
                    }
                }
                "kind" if words.len() == 4 => {
                    let entry = (dim_of(words[2])?, code_of(words[3])?);
                    if kinds.insert(words[1].to_string(), entry).is_some() {
                        return Err(bad(format!("{} listed twice", words[1])));
                    }
                }
                "attr" if words.len() >= 5 => {
                    let mut rule = AttrRule {
                        dim: dim_of(words[1])?,
                        kinds: (words[2] != "*").then(|| words[2].split(',').map(str::to_string).collect()),
                        attribute: words[3].to_string(),
                        codes: Vec::new(),
                        unlisted: None,
                    };
                    for pair in &words[4..] {
                        // Values may themselves contain '=' (operators).
                        let (value, code) = pair.rsplit_once('=').ok_or_else(|| bad(format!("bad pair {pair:?}")))?;
                        let code = code_of(code)?;
                        if value == "?" {
                            rule.unlisted = Some(code);
                        } else {
                            rule.codes.push((value.to_string(), code));
                        }
                    }
                    rules.push(rule);
                }
                _ => return Err(bad(format!("unrecognized line {raw:?}"))),
            }
        }
        let version = version.ok_or(FeatureError::BadSchema { line: 0, message: "missing schema version".into() })?;
        let schema = FeatureSchema { version, kinds, rules };
        schema.check_injective().map_err(|message| FeatureError::BadSchema { line: 0, message })?;
        Ok(schema)
    }
}

pub fn encode_node(node: &AstNode, schema: &FeatureSchema) -> Result<FeatureVector, FeatureError> {
    schema.encode_node(node)
}

pub fn encode_graph(graph: &CodeGraph, ast: &AstDocument, schema: &FeatureSchema) -> Result<Array2<f32>, FeatureError> {
    schema.encode_graph(graph, ast)
}
