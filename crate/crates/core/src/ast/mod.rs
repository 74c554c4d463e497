//! Typed view over the compiler's compact AST JSON.
//!
//! Input files are *AST bundles*: a JSON object carrying the compact AST
//! together with the exact source text it was produced from and the
//! compiler version:
//!
//! ```json
//! { "compiler_version": "0.8.19", "source_name": "Bank.sol",
//!   "source": "pragma solidity ...", "ast": { "nodeType": "SourceUnit", ... } }
//! ```
//!
//! Nodes are numbered in preorder, visiting child attributes in the order
//! the compiler emitted them.

pub mod kinds;
mod span;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use span::{build_line_index, parse_src, span_to_lines, LineIndex, LineRange, SourceSpan};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AstError {
    #[error("malformed AST: {0}")]
    MalformedAst(String),
    #[error("compiler version {0} is older than 0.4.12 and not supported")]
    UnsupportedVersion(CompilerVersion),
    #[error("node {node} references declaration {referenced}, which is not in the document")]
    MissingReference { node: usize, referenced: i64 },
    #[error("malformed src span {0:?}")]
    MalformedSpan(String),
    #[error("source is not valid UTF-8 at byte {offset}")]
    InvalidEncoding { offset: usize },
    #[error("span ends at byte {end} but the source has {len} bytes")]
    SpanOutOfBounds { end: usize, len: usize },
}

fn malformed(msg: impl Into<String>) -> AstError {
    AstError::MalformedAst(msg.into())
}

/// `major.minor.patch` of the compiler that produced an AST.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CompilerVersion {
    pub major: u32,
    pub minor: u32,
    pub patch: u32,
}

impl CompilerVersion {
    /// Oldest compiler whose AST layout the ingest understands.
    pub const MINIMUM: CompilerVersion = CompilerVersion { major: 0, minor: 4, patch: 12 };

    pub fn new(major: u32, minor: u32, patch: u32) -> Self {
        Self { major, minor, patch }
    }
}

impl fmt::Display for CompilerVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

impl FromStr for CompilerVersion {
    type Err = AstError;

    /// Accepts `0.8.19`, `v0.8.19` and `0.8.19+commit.7dd6d404...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || malformed(format!("bad compiler version {s:?}"));
        let core = s.trim().trim_start_matches('v');
        let core = core.split(['+', '-']).next().unwrap_or_default();
        let mut parts = core.split('.').map(|p| p.parse::<u32>().map_err(|_| bad()));
        let version = CompilerVersion {
            major: parts.next().ok_or_else(bad)??,
            minor: parts.next().ok_or_else(bad)??,
            patch: parts.next().ok_or_else(bad)??,
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(version)
    }
}

/// One AST node. `index` is the node's preorder position in its document.
#[derive(Debug, Clone, PartialEq)]
pub struct AstNode {
    pub index: usize,
    /// Compiler-assigned id; Yul nodes carry none.
    pub id: Option<i64>,
    pub kind: String,
    /// Every non-child field of the JSON object, in emitted order.
    pub attributes: Map<String, Value>,
    pub src: SourceSpan,
    /// Child indices grouped by the attribute that holds them.
    pub children: Vec<(String, Vec<usize>)>,
    pub parent: Option<usize>,
}

impl AstNode {
    pub fn attr(&self, name: &str) -> Option<&Value> {
        self.attributes.get(name)
    }

    pub fn attr_str(&self, name: &str) -> Option<&str> {
        self.attributes.get(name).and_then(Value::as_str)
    }

    /// Children held by attribute `field`; empty if the attribute is absent.
    pub fn children_of(&self, field: &str) -> &[usize] {
        self.children
            .iter()
            .find(|(name, _)| name == field)
            .map(|(_, ids)| ids.as_slice())
            .unwrap_or(&[])
    }

    /// The single child under `field`, if present.
    pub fn child(&self, field: &str) -> Option<usize> {
        self.children_of(field).first().copied()
    }

    pub fn all_children(&self) -> impl Iterator<Item = usize> + '_ {
        self.children.iter().flat_map(|(_, ids)| ids.iter().copied())
    }

    /// Declaration id this node refers to, if it is a user-level reference.
    /// Built-in symbols (`msg`, `require`, ...) carry negative ids, which
    /// newer compilers print as large unsigned 32-bit values.
    pub fn referenced_declaration(&self) -> Option<i64> {
        if !kinds::REFERENCING.contains(&self.kind.as_str()) {
            return None;
        }
        let id = self.attr("referencedDeclaration")?.as_i64()?;
        (0..=i64::from(i32::MAX)).contains(&id).then_some(id)
    }
}

/// A validated AST plus the source bytes it indexes into.
#[derive(Debug, Clone)]
pub struct AstDocument {
    nodes: Vec<AstNode>,
    source: Vec<u8>,
    compiler_version: CompilerVersion,
    by_id: HashMap<i64, usize>,
    line_index: LineIndex,
}

/// On-disk AST bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AstBundle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compiler_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_name: Option<String>,
    pub source: String,
    pub ast: Value,
}

/// Parses an AST bundle.
pub fn parse_ast(json_text: &[u8]) -> Result<AstDocument, AstError> {
    let bundle: AstBundle =
        serde_json::from_slice(json_text).map_err(|e| malformed(format!("bundle: {e}")))?;
    AstDocument::from_compact(&bundle.ast, bundle.source.into_bytes(), bundle.compiler_version.as_deref())
}

impl AstDocument {
    /// Builds a document from a compact AST value and its source. Without an
    /// explicit version the lowest version named by the `pragma solidity`
    /// directive is used.
    pub fn from_compact(
        ast: &Value,
        source: Vec<u8>,
        compiler_version: Option<&str>,
    ) -> Result<Self, AstError> {
        let version = match compiler_version {
            Some(v) => v.parse()?,
            None => pragma_version(ast)?,
        };
        if version < CompilerVersion::MINIMUM {
            return Err(AstError::UnsupportedVersion(version));
        }
        let line_index = LineIndex::new(&source)?;

        let root = ast.as_object().ok_or_else(|| malformed("root is not an object"))?;
        if root.get("nodeType").and_then(Value::as_str) != Some("SourceUnit") {
            return Err(malformed("root node is not a SourceUnit"));
        }

        let mut nodes = Vec::new();
        flatten(root, None, source.len(), &mut nodes)?;

        let mut by_id = HashMap::with_capacity(nodes.len());
        for node in &nodes {
            if let Some(id) = node.id {
                if by_id.insert(id, node.index).is_some() {
                    return Err(malformed(format!("duplicate node id {id}")));
                }
            }
        }
        for node in &nodes {
            if let Some(referenced) = node.referenced_declaration() {
                if !by_id.contains_key(&referenced) {
                    return Err(AstError::MissingReference { node: node.index, referenced });
                }
            }
        }

        Ok(Self { nodes, source, compiler_version: version, by_id, line_index })
    }

    pub fn nodes(&self) -> &[AstNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &AstNode {
        &self.nodes[index]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Preorder index of the root `SourceUnit`.
    pub fn root(&self) -> usize {
        0
    }

    pub fn source(&self) -> &[u8] {
        &self.source
    }

    pub fn compiler_version(&self) -> CompilerVersion {
        self.compiler_version
    }

    pub fn line_index(&self) -> &LineIndex {
        &self.line_index
    }

    /// Preorder index of the node with compiler id `id`.
    pub fn by_id(&self, id: i64) -> Option<usize> {
        self.by_id.get(&id).copied()
    }

    /// Ancestors of `index`, innermost first.
    pub fn ancestors(&self, index: usize) -> impl Iterator<Item = &AstNode> {
        std::iter::successors(self.nodes[index].parent, move |&p| self.nodes[p].parent)
            .map(move |i| &self.nodes[i])
    }

    pub fn span_to_lines(&self, span: SourceSpan) -> Result<LineRange, AstError> {
        self.line_index.span_to_lines(span)
    }
}

fn is_node(value: &Value) -> bool {
    value.as_object().is_some_and(|o| o.contains_key("nodeType"))
}

fn flatten(
    obj: &Map<String, Value>,
    parent: Option<usize>,
    source_len: usize,
    out: &mut Vec<AstNode>,
) -> Result<usize, AstError> {
    let kind = obj
        .get("nodeType")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("node without nodeType"))?;
    let child_fields =
        kinds::child_fields(kind).ok_or_else(|| malformed(format!("unknown node type {kind}")))?;
    let src = obj
        .get("src")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed(format!("{kind} node without src")))?;
    let src = parse_src(src)?;
    if src.end() > source_len {
        return Err(AstError::SpanOutOfBounds { end: src.end(), len: source_len });
    }
    let id = match obj.get("id") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_i64().ok_or_else(|| malformed(format!("{kind} has non-integer id")))?),
    };

    let index = out.len();
    out.push(AstNode {
        index,
        id,
        kind: kind.to_string(),
        attributes: Map::new(),
        src,
        children: Vec::new(),
        parent,
    });

    let mut attributes = Map::new();
    let mut children = Vec::new();
    for (key, value) in obj {
        let is_child_field = child_fields.contains(&key.as_str());
        match value {
            Value::Object(child) if is_node(value) => {
                if !is_child_field {
                    return Err(malformed(format!("{kind} has unexpected child attribute {key}")));
                }
                let c = flatten(child, Some(index), source_len, out)?;
                children.push((key.clone(), vec![c]));
            }
            Value::Array(items) if is_child_field && items.iter().all(|v| v.is_null() || is_node(v)) => {
                let mut ids = Vec::with_capacity(items.len());
                for item in items.iter().filter_map(Value::as_object) {
                    ids.push(flatten(item, Some(index), source_len, out)?);
                }
                children.push((key.clone(), ids));
            }
            Value::Array(items) if items.iter().any(is_node) => {
                return Err(malformed(format!("{kind} has unexpected child attribute {key}")));
            }
            _ => {
                if key != "nodeType" && key != "src" && key != "id" {
                    attributes.insert(key.clone(), value.clone());
                }
            }
        }
    }
    out[index].attributes = attributes;
    out[index].children = children;
    Ok(index)
}

/// Lowest version mentioned by the first `pragma solidity` directive.
fn pragma_version(ast: &Value) -> Result<CompilerVersion, AstError> {
    let missing = || malformed("no compiler version given and no `pragma solidity` directive");
    let pragma = ast
        .get("nodes")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .filter(|n| n.get("nodeType").and_then(Value::as_str) == Some("PragmaDirective"))
        .filter_map(|n| n.get("literals").and_then(Value::as_array))
        .find(|lits| lits.first().and_then(Value::as_str) == Some("solidity"))
        .ok_or_else(missing)?;
    let text: String = pragma[1..].iter().filter_map(Value::as_str).collect();
    // e.g. "^0.8.19", ">=0.4.22<0.6.0"
    let start = text.find(|c: char| c.is_ascii_digit()).ok_or_else(missing)?;
    let version: String = text[start..]
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '.')
        .collect();
    let mut parts: Vec<&str> = version.split('.').filter(|p| !p.is_empty()).collect();
    while parts.len() < 3 {
        parts.push("0");
    }
    parts[..3].join(".").parse()
}
