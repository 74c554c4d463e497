//! Hand-built compact ASTs for unit tests.

use std::cell::Cell;

use serde_json::{json, Map, Value};

use crate::ast::{AstDocument, AstNode};

thread_local! {
    static NEXT_ID: Cell<i64> = const { Cell::new(1000) };
}

/// A node of type `kind` with an automatic id, an empty span and the given
/// extra fields.
pub fn n(kind: &str, fields: Value) -> Value {
    let id = NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    });
    with_id(kind, id, fields)
}

/// Like [`n`] but with an explicit compiler id.
pub fn with_id(kind: &str, id: i64, fields: Value) -> Value {
    let mut obj = match fields {
        Value::Object(m) => m,
        Value::Null => Map::new(),
        other => panic!("fields must be an object, got {other}"),
    };
    obj.insert("id".into(), json!(id));
    obj.insert("nodeType".into(), json!(kind));
    obj.entry("src").or_insert(json!("0:0:0"));
    Value::Object(obj)
}

/// Yul nodes carry no id.
pub fn yul(kind: &str, fields: Value) -> Value {
    let mut v = n(kind, fields);
    v.as_object_mut().unwrap().remove("id");
    v
}

/// Wraps top-level nodes in a `SourceUnit`.
pub fn unit(nodes: Vec<Value>) -> Value {
    n("SourceUnit", json!({ "nodes": nodes }))
}

pub fn doc(root: Value) -> AstDocument {
    AstDocument::from_compact(&root, Vec::new(), Some("0.8.19")).expect("valid test AST")
}

/// `SourceUnit > ContractDefinition > FunctionDefinition { body }`.
pub fn in_function(statements: Vec<Value>) -> AstDocument {
    doc(unit(vec![n(
        "ContractDefinition",
        json!({ "nodes": [n("FunctionDefinition", json!({
            "body": n("Block", json!({ "statements": statements })),
            "kind": "function",
        }))] }),
    )]))
}

pub fn find<'a>(doc: &'a AstDocument, kind: &str) -> &'a AstNode {
    doc.nodes().iter().find(|n| n.kind == kind).unwrap_or_else(|| panic!("no {kind} node"))
}

pub fn find_all<'a>(doc: &'a AstDocument, kind: &str) -> Vec<&'a AstNode> {
    doc.nodes().iter().filter(|n| n.kind == kind).collect()
}

pub fn ident(name: &str, referenced: i64) -> Value {
    n("Identifier", json!({ "name": name, "referencedDeclaration": referenced }))
}

pub fn expr_stmt(expr: Value) -> Value {
    n("ExpressionStatement", json!({ "expression": expr }))
}

pub fn lit(value: &str) -> Value {
    n("Literal", json!({ "kind": "number", "value": value }))
}

/// Path graph of `nodes` nodes whose features carry the class in dim 28;
/// a vulnerable record has every node labeled.
pub fn record_from_graph(id: &str, nodes: usize, vulnerable: bool) -> crate::dataset::DatasetRecord {
    use crate::ast::SourceSpan;
    use crate::graph::CodeGraph;
    use crate::labels::{LineLabels, NodeLabels};

    let spans = (0..nodes).map(|i| SourceSpan::new(i, 1, 0)).collect();
    let edges = (1..nodes).flat_map(|i| [(i - 1, i), (i, i - 1)]);
    let graph = CodeGraph::from_parts((0..nodes).collect(), spans, edges);
    let mut features = ndarray::Array2::zeros((nodes, crate::features::FEATURE_DIM));
    for i in 0..nodes {
        features[[i, i % 14]] = 1.0;
        features[[i, 28]] = if vulnerable { 1.0 } else { -1.0 };
    }
    let digest = crate::dataset::canonical_hash(&graph);
    crate::dataset::DatasetRecord {
        id: id.to_string(),
        subtype: crate::dataset::Subtype::Call,
        graph,
        features,
        labels: NodeLabels(vec![vulnerable; nodes]),
        line_labels: LineLabels::from_bits(vec![vulnerable]),
        digest,
    }
}
