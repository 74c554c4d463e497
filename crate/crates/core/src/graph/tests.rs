use serde_json::json;

use super::*;
use crate::testutil::*;

fn edges_of(b: &GraphBuilder, family: EdgeFamily) -> Vec<(usize, usize)> {
    b.tagged_edges().iter().filter(|e| e.family == family).map(|e| (e.src, e.dst)).collect()
}

fn g(b: &GraphBuilder, doc: &crate::ast::AstDocument, kind: &str) -> usize {
    b.graph_node(find(doc, kind).index).unwrap()
}

#[test]
fn base_graph_single_node() {
    let d = doc(unit(vec![]));
    let b = GraphBuilder::build_base_graph(&d);
    assert!(b.tagged_edges().is_empty());
    let graph = b.finalize();
    assert_eq!(graph.node_count(), 1);
    assert_eq!(graph.edge_count(), 0);
}

#[test]
fn base_graph_chain_has_two_edges_per_link() {
    let d = doc(unit(vec![n("ContractDefinition", json!({ "nodes": [] }))]));
    let b = GraphBuilder::build_base_graph(&d);
    assert_eq!(edges_of(&b, EdgeFamily::AstHierarchy), vec![(0, 1), (1, 0)]);

    let d = in_function(vec![]);
    // SourceUnit > Contract > Function > Block
    let b = GraphBuilder::build_base_graph(&d);
    assert_eq!(b.count(EdgeFamily::AstHierarchy), 6);
}

#[test]
fn block_statements_get_hierarchy_and_control_flow() {
    let stmts: Vec<_> = (0..3).map(|i| expr_stmt(lit(&i.to_string()))).collect();
    let d = in_function(stmts);
    let mut b = GraphBuilder::build_base_graph(&d);
    let block = g(&b, &d, "Block");
    let stmt_nodes: Vec<usize> =
        find_all(&d, "ExpressionStatement").iter().map(|s| b.graph_node(s.index).unwrap()).collect();
    let hier = edges_of(&b, EdgeFamily::AstHierarchy);
    let block_links = hier
        .iter()
        .filter(|&&(s, t)| (s == block && stmt_nodes.contains(&t)) || (t == block && stmt_nodes.contains(&s)))
        .count();
    assert_eq!(block_links, 6);

    b.add_control_flow_edges();
    assert_eq!(
        edges_of(&b, EdgeFamily::ControlFlow),
        vec![(stmt_nodes[0], stmt_nodes[1]), (stmt_nodes[1], stmt_nodes[2])]
    );
}

#[test]
fn single_statement_block_has_no_control_flow() {
    let d = in_function(vec![expr_stmt(lit("1"))]);
    let mut b = GraphBuilder::build_base_graph(&d);
    b.add_control_flow_edges();
    assert_eq!(b.count(EdgeFamily::ControlFlow), 0);
}

#[test]
fn nested_blocks_contribute_independently() {
    let inner = n("Block", json!({ "statements": [expr_stmt(lit("1")), expr_stmt(lit("2"))] }));
    let unchecked = n("UncheckedBlock", json!({ "statements": [expr_stmt(lit("3")), expr_stmt(lit("4")), expr_stmt(lit("5"))] }));
    let d = in_function(vec![inner, expr_stmt(lit("0")), unchecked]);
    let mut b = GraphBuilder::build_base_graph(&d);
    b.add_control_flow_edges();
    // outer block: 3 statements -> 2, inner: 1, unchecked: 2
    assert_eq!(b.count(EdgeFamily::ControlFlow), 5);
}

#[test]
fn ordering_edges_follow_table() {
    let assign = n("Assignment", json!({ "leftHandSide": ident("a", 1), "operator": "=", "rightHandSide": lit("1") }));
    let range = n("IndexRangeAccess", json!({
        "baseExpression": ident("b", 1), "endExpression": lit("3"), "startExpression": lit("1"),
    }));
    let call0 = n("FunctionCall", json!({ "arguments": [], "expression": ident("f", 2) }));
    let call2 = n("FunctionCall", json!({ "arguments": [lit("1"), lit("2")], "expression": ident("f", 2) }));
    let decls = vec![
        with_id("VariableDeclaration", 1, json!({ "name": "a" })),
        with_id("FunctionDefinition", 2, json!({ "name": "f" })),
    ];
    let mut nodes = decls;
    nodes.extend([expr_stmt(assign), expr_stmt(range), expr_stmt(call0), expr_stmt(call2)]);
    let d = doc(unit(nodes));
    let mut b = GraphBuilder::build_base_graph(&d);
    b.add_ordering_edges();
    let ord = edges_of(&b, EdgeFamily::Ordering);

    let a = find(&d, "Assignment");
    let expect_assign = (
        b.graph_node(a.child("leftHandSide").unwrap()).unwrap(),
        b.graph_node(a.child("rightHandSide").unwrap()).unwrap(),
    );
    assert!(ord.contains(&expect_assign));

    let r = find(&d, "IndexRangeAccess");
    let [base, start, end] = ["baseExpression", "startExpression", "endExpression"]
        .map(|f| b.graph_node(r.child(f).unwrap()).unwrap());
    assert!(ord.contains(&(base, start)));
    assert!(ord.contains(&(start, end)));

    let calls = find_all(&d, "FunctionCall");
    let from_call = |c: &crate::ast::AstNode| {
        let e = b.graph_node(c.child("expression").unwrap()).unwrap();
        ord.iter().filter(|&&(_, t)| t == e).count()
    };
    assert_eq!(from_call(calls[0]), 0);
    assert_eq!(from_call(calls[1]), 2);
    assert_eq!(ord.len(), 1 + 2 + 2);
}

#[test]
fn mapping_orders_key_to_value() {
    let mapping = n("Mapping", json!({
        "keyType": n("ElementaryTypeName", json!({"name": "address"})),
        "valueType": n("ElementaryTypeName", json!({"name": "uint256"})),
    }));
    let d = doc(unit(vec![n("VariableDeclaration", json!({ "typeName": mapping }))]));
    let mut b = GraphBuilder::build_base_graph(&d);
    b.add_ordering_edges();
    let m = find(&d, "Mapping");
    let key = b.graph_node(m.child("keyType").unwrap()).unwrap();
    let value = b.graph_node(m.child("valueType").unwrap()).unwrap();
    assert_eq!(edges_of(&b, EdgeFamily::Ordering), vec![(key, value)]);
}

#[test]
fn reference_edges_both_ways() {
    let decl = with_id("VariableDeclaration", 7, json!({ "name": "x", "stateVariable": true }));
    let func = with_id("FunctionDefinition", 8, json!({ "name": "f", "body": n("Block", json!({ "statements": [
        expr_stmt(ident("x", 7)),
        expr_stmt(ident("x", 7)),
        expr_stmt(n("FunctionCall", json!({ "arguments": [], "expression": ident("f", 8) }))),
        expr_stmt(ident("msg", 4294967281)),
    ]})) }));
    let d = doc(unit(vec![n("ContractDefinition", json!({ "nodes": [decl, func] }))]));
    let mut b = GraphBuilder::build_base_graph(&d);
    b.add_reference_edges().unwrap();
    let refs = edges_of(&b, EdgeFamily::Reference);
    assert_eq!(refs.len(), 6);
    let var = b.graph_node(d.by_id(7).unwrap()).unwrap();
    let fun = b.graph_node(d.by_id(8).unwrap()).unwrap();
    assert_eq!(refs.iter().filter(|&&(s, t)| s == var || t == var).count(), 4);
    assert_eq!(refs.iter().filter(|&&(s, t)| s == fun || t == fun).count(), 2);
    for &(s, t) in &refs {
        assert!(refs.contains(&(t, s)));
    }

    let plain = in_function(vec![expr_stmt(lit("1"))]);
    let mut b = GraphBuilder::build_base_graph(&plain);
    b.add_reference_edges().unwrap();
    assert_eq!(b.count(EdgeFamily::Reference), 0);
}

#[test]
fn if_statement_edges() {
    let with_else = n("IfStatement", json!({
        "condition": ident("c", 4294967281), "falseBody": n("Block", json!({"statements": []})),
        "trueBody": n("Block", json!({"statements": []})),
    }));
    let d = in_function(vec![with_else]);
    let mut b = GraphBuilder::build_base_graph(&d);
    let before = b.tagged_edges().len();
    b.add_branch_edges();
    assert_eq!(b.tagged_edges().len() - before, 3);
    let i = find(&d, "IfStatement");
    let [stmt, cond, t, f] = [Some(i.index), i.child("condition"), i.child("trueBody"), i.child("falseBody")]
        .map(|x| b.graph_node(x.unwrap()).unwrap());
    assert_eq!(edges_of(&b, EdgeFamily::ControlFlow), vec![(stmt, cond)]);
    assert_eq!(edges_of(&b, EdgeFamily::TrueBody), vec![(cond, t)]);
    assert_eq!(edges_of(&b, EdgeFamily::FalseBody), vec![(cond, f)]);

    let without_else = n("IfStatement", json!({
        "condition": ident("c", 4294967281), "trueBody": expr_stmt(lit("1")),
    }));
    let d = in_function(vec![without_else]);
    let mut b = GraphBuilder::build_base_graph(&d);
    let before = b.tagged_edges().len();
    b.add_branch_edges();
    assert_eq!(b.tagged_edges().len() - before, 2);
    assert_eq!(b.count(EdgeFamily::FalseBody), 0);
}

#[test]
fn conditional_expression_edges() {
    let cond = n("Conditional", json!({
        "condition": ident("s", 4294967281), "falseExpression": lit("2"), "trueExpression": lit("1"),
    }));
    let d = in_function(vec![expr_stmt(cond)]);
    let mut b = GraphBuilder::build_base_graph(&d);
    b.add_branch_edges();
    assert_eq!(b.count(EdgeFamily::ControlFlow), 1);
    assert_eq!(b.count(EdgeFamily::TrueBody), 1);
    assert_eq!(b.count(EdgeFamily::FalseBody), 1);
}

fn assembly(statements: Vec<serde_json::Value>) -> serde_json::Value {
    n("InlineAssembly", json!({ "AST": yul("YulBlock", json!({ "statements": statements })) }))
}

#[test]
fn yul_branches() {
    let yul_if = yul("YulIf", json!({
        "body": yul("YulBlock", json!({"statements": []})),
        "condition": yul("YulIdentifier", json!({"name": "x"})),
    }));
    let switch = yul("YulSwitch", json!({
        "cases": [
            yul("YulCase", json!({ "body": yul("YulBlock", json!({"statements": []})), "value": yul("YulLiteral", json!({"kind": "number", "value": "1"})) })),
            yul("YulCase", json!({ "body": yul("YulBlock", json!({"statements": []})), "value": "default" })),
        ],
        "expression": yul("YulIdentifier", json!({"name": "x"})),
    }));
    let d = in_function(vec![assembly(vec![yul_if, switch])]);
    let mut b = GraphBuilder::build_base_graph(&d);
    b.add_branch_edges();
    // YulIf: control flow + true body; first case: true body; default case: nothing.
    assert_eq!(b.count(EdgeFamily::ControlFlow), 1);
    assert_eq!(b.count(EdgeFamily::TrueBody), 2);
    assert_eq!(b.count(EdgeFamily::FalseBody), 0);
    let case = find_all(&d, "YulCase")[0];
    let value = b.graph_node(case.child("value").unwrap()).unwrap();
    let body = b.graph_node(case.child("body").unwrap()).unwrap();
    assert!(edges_of(&b, EdgeFamily::TrueBody).contains(&(value, body)));
    // Switch to case links are plain hierarchy edges.
    let sw = b.graph_node(find(&d, "YulSwitch").index).unwrap();
    let case_g = b.graph_node(case.index).unwrap();
    assert!(edges_of(&b, EdgeFamily::AstHierarchy).contains(&(sw, case_g)));
}

#[test]
fn while_loop_adds_four_edges() {
    let w = n("WhileStatement", json!({
        "body": n("Block", json!({"statements": []})),
        "condition": ident("c", 4294967281),
    }));
    let d = in_function(vec![w]);
    let mut b = GraphBuilder::build_base_graph(&d);
    let before = b.tagged_edges().len();
    b.add_loop_edges();
    assert_eq!(b.tagged_edges().len() - before, 4);
    let wn = find(&d, "WhileStatement");
    let [stmt, cond, body] = [Some(wn.index), wn.child("condition"), wn.child("body")].map(|x| b.graph_node(x.unwrap()).unwrap());
    let added: Vec<_> = b.tagged_edges()[before..].to_vec();
    let expect = [
        TaggedEdge { src: stmt, dst: cond, family: EdgeFamily::ControlFlow },
        TaggedEdge { src: cond, dst: body, family: EdgeFamily::TrueBody },
        TaggedEdge { src: cond, dst: stmt, family: EdgeFamily::FalseBody },
        TaggedEdge { src: body, dst: cond, family: EdgeFamily::ControlFlow },
    ];
    for e in expect {
        assert!(added.contains(&e), "{e:?}");
    }

    let dw = n("DoWhileStatement", json!({
        "body": n("Block", json!({"statements": []})),
        "condition": ident("c", 4294967281),
    }));
    let d = in_function(vec![dw]);
    let mut b = GraphBuilder::build_base_graph(&d);
    let before = b.tagged_edges().len();
    b.add_loop_edges();
    assert_eq!(b.tagged_edges().len() - before, 4);
}

#[test]
fn for_loop_full_and_partial() {
    let full = n("ForStatement", json!({
        "body": n("Block", json!({"statements": []})),
        "condition": ident("c", 4294967281),
        "initializationExpression": expr_stmt(lit("0")),
        "loopExpression": expr_stmt(lit("1")),
    }));
    let d = in_function(vec![full]);
    let mut b = GraphBuilder::build_base_graph(&d);
    let before = b.tagged_edges().len();
    b.add_loop_edges();
    let f = find(&d, "ForStatement");
    let [stmt, pre, cond, body, upd] = [
        Some(f.index),
        f.child("initializationExpression"),
        f.child("condition"),
        f.child("body"),
        f.child("loopExpression"),
    ]
    .map(|x| b.graph_node(x.unwrap()).unwrap());
    let added: Vec<_> = b.tagged_edges()[before..].iter().map(|e| (e.src, e.dst, e.family)).collect();
    assert_eq!(
        added,
        vec![
            (stmt, pre, EdgeFamily::ControlFlow),
            (pre, cond, EdgeFamily::ControlFlow),
            (cond, body, EdgeFamily::TrueBody),
            (cond, stmt, EdgeFamily::FalseBody),
            (body, upd, EdgeFamily::ControlFlow),
            (upd, cond, EdgeFamily::ControlFlow),
        ]
    );

    let bare = n("ForStatement", json!({
        "body": n("Block", json!({"statements": []})),
        "condition": ident("c", 4294967281),
    }));
    let d = in_function(vec![bare]);
    let mut b = GraphBuilder::build_base_graph(&d);
    b.add_loop_edges();
    assert_eq!(b.count(EdgeFamily::ControlFlow), 0);
    assert_eq!(b.count(EdgeFamily::TrueBody), 1);
    assert_eq!(b.count(EdgeFamily::FalseBody), 1);
}

#[test]
fn jump_targets() {
    let for_loop = n("ForStatement", json!({
        "body": n("Block", json!({"statements": [n("Break", json!({})), n("Continue", json!({}))]})),
        "condition": ident("c", 4294967281),
        "loopExpression": expr_stmt(lit("1")),
    }));
    let while_loop = n("WhileStatement", json!({
        "body": n("Block", json!({"statements": [n("Continue", json!({}))]})),
        "condition": ident("c", 4294967281),
    }));
    let d = in_function(vec![for_loop, while_loop, n("Return", json!({}))]);
    let mut b = GraphBuilder::build_base_graph(&d);
    b.add_jump_edges().unwrap();
    let cf = edges_of(&b, EdgeFamily::ControlFlow);
    let gn = |i: usize| b.graph_node(i).unwrap();
    let f = find(&d, "ForStatement");
    let w = find(&d, "WhileStatement");
    let brk = find(&d, "Break");
    let conts = find_all(&d, "Continue");
    let ret = find(&d, "Return");
    let func = find(&d, "FunctionDefinition");
    assert!(cf.contains(&(gn(brk.index), gn(f.index))));
    assert!(cf.contains(&(gn(conts[0].index), gn(f.child("loopExpression").unwrap()))));
    assert!(cf.contains(&(gn(conts[1].index), gn(w.child("condition").unwrap()))));
    assert!(cf.contains(&(gn(ret.index), gn(func.index))));
    assert_eq!(cf.len(), 4);
}

#[test]
fn yul_jumps() {
    let lp = yul("YulForLoop", json!({
        "body": yul("YulBlock", json!({"statements": [yul("YulBreak", json!({})), yul("YulContinue", json!({}))]})),
        "condition": yul("YulLiteral", json!({"kind": "number", "value": "1"})),
        "post": yul("YulBlock", json!({"statements": []})),
        "pre": yul("YulBlock", json!({"statements": []})),
    }));
    let func = yul("YulFunctionDefinition", json!({
        "body": yul("YulBlock", json!({"statements": [yul("YulLeave", json!({}))]})),
        "name": "g", "parameters": [], "returnVariables": [],
    }));
    let d = in_function(vec![assembly(vec![lp, func])]);
    let mut b = GraphBuilder::build_base_graph(&d);
    b.add_jump_edges().unwrap();
    let cf = edges_of(&b, EdgeFamily::ControlFlow);
    let gn = |i: usize| b.graph_node(i).unwrap();
    let lp = find(&d, "YulForLoop");
    assert!(cf.contains(&(gn(find(&d, "YulBreak").index), gn(lp.index))));
    assert!(cf.contains(&(gn(find(&d, "YulContinue").index), gn(lp.child("post").unwrap()))));
    assert!(cf.contains(&(gn(find(&d, "YulLeave").index), gn(find(&d, "YulFunctionDefinition").index))));
}

#[test]
fn orphan_jumps_are_errors() {
    let d = in_function(vec![n("Break", json!({}))]);
    let mut b = GraphBuilder::build_base_graph(&d);
    assert!(matches!(b.add_jump_edges(), Err(GraphError::OrphanJump { .. })));

    let d = in_function(vec![n("Continue", json!({}))]);
    assert!(matches!(build_code_graph(&d), Err(GraphError::OrphanJump { .. })));

    let d = doc(unit(vec![n("Return", json!({}))]));
    assert!(matches!(build_code_graph(&d), Err(GraphError::OrphanJump { .. })));
}

#[test]
fn finalize_collapses_duplicates() {
    let w = n("WhileStatement", json!({
        "body": n("Block", json!({"statements": []})),
        "condition": ident("c", 4294967281),
    }));
    let d = in_function(vec![w]);
    let mut b = GraphBuilder::build_base_graph(&d);
    b.add_loop_edges();
    let before = b.tagged_edges().len();
    let graph = b.finalize();
    // while -> condition and condition -> while duplicate hierarchy edges.
    assert_eq!(graph.edge_count(), before - 2);
    let mut sorted = graph.sorted_edges();
    sorted.dedup();
    assert_eq!(sorted.len(), graph.edge_count());
}

#[test]
fn documentation_nodes_are_left_out() {
    let func = n("FunctionDefinition", json!({
        "body": n("Block", json!({"statements": []})),
        "documentation": n("StructuredDocumentation", json!({"text": "hello"})),
    }));
    let d = doc(unit(vec![func]));
    let graph = build_code_graph(&d).unwrap();
    assert_eq!(d.len(), 4);
    assert_eq!(graph.node_count(), 3);
    assert_eq!(graph.edge_count(), 4);
}

#[test]
fn canonical_serialization_round_trip() {
    let d = in_function(vec![expr_stmt(lit("1")), expr_stmt(lit("2"))]);
    let graph = build_code_graph(&d).unwrap();
    let text = graph.canonical_serialization();
    assert!(text.starts_with(&format!("n {}\n", graph.node_count())));
    let (count, edges) = CodeGraph::parse_canonical(&text).unwrap();
    assert_eq!(count, graph.node_count());
    assert_eq!(edges, graph.sorted_edges());
    assert!(CodeGraph::parse_canonical("n 2\ne 0 5\n").is_err());
    assert!(CodeGraph::parse_canonical("e 0 1\n").is_err());
}

#[test]
fn disjoint_union_offsets() {
    let a = build_code_graph(&in_function(vec![])).unwrap();
    let b = build_code_graph(&in_function(vec![expr_stmt(lit("1"))])).unwrap();
    let (u, offsets) = CodeGraph::disjoint_union([&a, &b]);
    assert_eq!(offsets, vec![0, a.node_count()]);
    assert_eq!(u.node_count(), a.node_count() + b.node_count());
    assert_eq!(u.edge_count(), a.edge_count() + b.edge_count());
    for &(s, d) in u.edges() {
        assert_eq!(s < a.node_count(), d < a.node_count(), "cross edge {s}->{d}");
    }
}

#[test]
fn yul_for_loop_fixture_golden_edges() {
    let bytes = include_bytes!("../../tests/fixtures/solc/example_yul.ast.json");
    let d = crate::ast::parse_ast(bytes).unwrap();
    let graph = build_code_graph(&d).unwrap();
    assert_eq!(graph.node_count(), 30);
    let tree = [
        (0, 1), (0, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (7, 9), (9, 10),
        (9, 11), (9, 12), (7, 13), (13, 14), (14, 15), (15, 16), (15, 17), (15, 18), (14, 19), (7, 20),
        (20, 21), (21, 22), (21, 23), (3, 24), (24, 25), (25, 26), (24, 27), (27, 28), (3, 29),
    ];
    let mut expected: Vec<(usize, usize)> = tree.iter().flat_map(|&(p, c)| [(p, c), (c, p)]).collect();
    expected.extend([(24, 29), (20, 9), (9, 8), (8, 13), (13, 9)]);
    expected.sort_unstable();
    assert_eq!(graph.sorted_edges(), expected);
    assert_eq!(graph.edge_count(), 63);
}
