use crate::ast::{kinds, AstDocument, AstNode};

use super::{CodeGraph, EdgeFamily, GraphError, TaggedEdge};

use EdgeFamily::*;

/// Node types whose `statements` execute in order.
const BLOCK_KINDS: &[&str] = &["Block", "UncheckedBlock", "YulBlock"];

/// `(node type, start attribute, end attribute)`: one ordering edge from
/// every start child to every end child. `BinaryOperation` operands are
/// named `leftExpression`/`rightExpression` by the compiler.
const ORDERING: &[(&str, &str, &str)] = &[
    ("IndexAccess", "baseExpression", "indexExpression"),
    ("IndexRangeAccess", "baseExpression", "startExpression"),
    ("IndexRangeAccess", "startExpression", "endExpression"),
    ("FunctionCall", "arguments", "expression"),
    ("FunctionTypeName", "parameterTypes", "returnParameterTypes"),
    ("Assignment", "leftHandSide", "rightHandSide"),
    ("BinaryOperation", "leftExpression", "rightExpression"),
    ("FunctionDefinition", "parameters", "returnParameters"),
    ("YulFunctionDefinition", "parameters", "returnVariables"),
    ("Mapping", "keyType", "valueType"),
];

const SOLIDITY_LOOPS: &[&str] = &["ForStatement", "WhileStatement", "DoWhileStatement"];

/// Incrementally adds the edge families to a code graph under construction.
pub struct GraphBuilder<'a> {
    ast: &'a AstDocument,
    /// AST index -> graph node.
    graph_node: Vec<Option<usize>>,
    ast_nodes: Vec<usize>,
    edges: Vec<TaggedEdge>,
}

impl<'a> GraphBuilder<'a> {
    /// One graph node per AST node and a pair of hierarchy edges for every
    /// parent-child link.
    pub fn build_base_graph(ast: &'a AstDocument) -> Self {
        let mut graph_node = vec![None; ast.len()];
        let mut ast_nodes = Vec::with_capacity(ast.len());
        for node in ast.nodes() {
            if !kinds::IGNORED.contains(&node.kind.as_str()) {
                graph_node[node.index] = Some(ast_nodes.len());
                ast_nodes.push(node.index);
            }
        }
        let mut builder = Self { ast, graph_node, ast_nodes, edges: Vec::new() };
        for node in ast.nodes() {
            for child in node.all_children() {
                builder.push(node.index, child, AstHierarchy);
                builder.push(child, node.index, AstHierarchy);
            }
        }
        builder
    }

    /// Edges added so far, with their families.
    pub fn tagged_edges(&self) -> &[TaggedEdge] {
        &self.edges
    }

    pub fn count(&self, family: EdgeFamily) -> usize {
        self.edges.iter().filter(|e| e.family == family).count()
    }

    /// Graph node of an AST node, if it has one.
    pub fn graph_node(&self, ast_index: usize) -> Option<usize> {
        self.graph_node[ast_index]
    }

    /// Adds an edge between two AST nodes. Returns false if either endpoint
    /// has no graph node.
    fn push(&mut self, src: usize, dst: usize, family: EdgeFamily) -> bool {
        match (self.graph_node[src], self.graph_node[dst]) {
            (Some(src), Some(dst)) => {
                self.edges.push(TaggedEdge { src, dst, family });
                true
            }
            _ => false,
        }
    }

    fn push_opt(&mut self, src: Option<usize>, dst: Option<usize>, family: EdgeFamily) {
        if let (Some(s), Some(d)) = (src, dst) {
            self.push(s, d, family);
        }
    }

    fn nodes_of_kind(&self, kinds: &'a [&'a str]) -> impl Iterator<Item = &'a AstNode> + 'a {
        self.ast.nodes().iter().filter(move |n| kinds.contains(&n.kind.as_str()))
    }

    /// `s_i -> s_{i+1}` for the statements of every block.
    pub fn add_control_flow_edges(&mut self) {
        for block in self.nodes_of_kind(BLOCK_KINDS) {
            for pair in block.children_of("statements").windows(2) {
                self.push(pair[0], pair[1], ControlFlow);
            }
        }
    }

    pub fn add_ordering_edges(&mut self) {
        for &(kind, start, end) in ORDERING {
            for node in self.nodes_of_kind(std::slice::from_ref(&kind)) {
                for &s in node.children_of(start) {
                    for &e in node.children_of(end) {
                        self.push(s, e, Ordering);
                    }
                }
            }
        }
    }

    /// Identifier <-> declaration, in both directions.
    pub fn add_reference_edges(&mut self) -> Result<(), GraphError> {
        for node in self.ast.nodes() {
            let Some(referenced) = node.referenced_declaration() else { continue };
            let decl = self
                .ast
                .by_id(referenced)
                .filter(|&d| self.graph_node[d].is_some())
                .ok_or(GraphError::MissingReference { node: node.index, referenced })?;
            self.push(node.index, decl, Reference);
            self.push(decl, node.index, Reference);
        }
        Ok(())
    }

    pub fn add_branch_edges(&mut self) {
        for node in self.ast.nodes() {
            let (cond, when_true, when_false) = match node.kind.as_str() {
                "IfStatement" => ("condition", "trueBody", Some("falseBody")),
                "Conditional" => ("condition", "trueExpression", Some("falseExpression")),
                // Yul `if` has no else branch.
                "YulIf" => ("condition", "body", None),
                "YulCase" => {
                    // `default` cases carry a string instead of a value node.
                    self.push_opt(node.child("value"), node.child("body"), TrueBody);
                    continue;
                }
                _ => continue,
            };
            let condition = node.child(cond);
            self.push_opt(Some(node.index), condition, ControlFlow);
            self.push_opt(condition, node.child(when_true), TrueBody);
            if let Some(f) = when_false {
                self.push_opt(condition, node.child(f), FalseBody);
            }
        }
    }

    pub fn add_loop_edges(&mut self) {
        for node in self.ast.nodes() {
            let (pre, update) = match node.kind.as_str() {
                "ForStatement" => (node.child("initializationExpression"), node.child("loopExpression")),
                "YulForLoop" => (node.child("pre"), node.child("post")),
                "WhileStatement" | "DoWhileStatement" => {
                    let condition = node.child("condition");
                    let body = node.child("body");
                    self.push_opt(Some(node.index), condition, ControlFlow);
                    self.push_opt(condition, body, TrueBody);
                    self.push_opt(condition, Some(node.index), FalseBody);
                    self.push_opt(body, condition, ControlFlow);
                    continue;
                }
                _ => continue,
            };
            let condition = node.child("condition");
            let body = node.child("body");
            self.push_opt(Some(node.index), pre, ControlFlow);
            self.push_opt(pre, condition, ControlFlow);
            self.push_opt(condition, body, TrueBody);
            self.push_opt(condition, Some(node.index), FalseBody);
            self.push_opt(body, update, ControlFlow);
            self.push_opt(update, condition, ControlFlow);
        }
    }

    /// Innermost ancestor of `index` whose kind is in `targets`, without
    /// crossing a node whose kind is in `barriers`.
    fn enclosing(&self, index: usize, targets: &[&str], barriers: &[&str]) -> Option<&'a AstNode> {
        for ancestor in self.ast.ancestors(index) {
            if targets.contains(&ancestor.kind.as_str()) {
                return Some(ancestor);
            }
            if barriers.contains(&ancestor.kind.as_str()) {
                return None;
            }
        }
        None
    }

    /// Break to its loop, continue to the loop update, return/leave to the
    /// enclosing function.
    pub fn add_jump_edges(&mut self) -> Result<(), GraphError> {
        const SOLIDITY_FN: &[&str] = &["FunctionDefinition", "ModifierDefinition"];
        const YUL_BARRIERS: &[&str] = &["YulFunctionDefinition", "InlineAssembly"];
        for node in self.ast.nodes() {
            let orphan = |expected| GraphError::OrphanJump { node: node.index, kind: node.kind.clone(), expected };
            let target = match node.kind.as_str() {
                "Break" => self.enclosing(node.index, SOLIDITY_LOOPS, SOLIDITY_FN).ok_or_else(|| orphan("loop"))?.index,
                "YulBreak" => self.enclosing(node.index, &["YulForLoop"], YUL_BARRIERS).ok_or_else(|| orphan("loop"))?.index,
                "Continue" => {
                    let lp = self.enclosing(node.index, SOLIDITY_LOOPS, SOLIDITY_FN).ok_or_else(|| orphan("loop"))?;
                    // While loops have no update node; the condition runs next.
                    let update = match lp.kind.as_str() {
                        "ForStatement" => lp.child("loopExpression").or_else(|| lp.child("condition")),
                        _ => lp.child("condition"),
                    };
                    update.unwrap_or(lp.index)
                }
                "YulContinue" => {
                    let lp = self.enclosing(node.index, &["YulForLoop"], YUL_BARRIERS).ok_or_else(|| orphan("loop"))?;
                    lp.child("post").unwrap_or(lp.index)
                }
                "Return" => self.enclosing(node.index, SOLIDITY_FN, &[]).ok_or_else(|| orphan("function"))?.index,
                "YulLeave" => self
                    .enclosing(node.index, &["YulFunctionDefinition"], &["InlineAssembly"])
                    .ok_or_else(|| orphan("function"))?
                    .index,
                _ => continue,
            };
            self.push(node.index, target, ControlFlow);
        }
        Ok(())
    }

    /// Drops family tags and collapses duplicate directed pairs.
    pub fn finalize(self) -> CodeGraph {
        let spans = self.ast_nodes.iter().map(|&i| self.ast.node(i).src).collect();
        CodeGraph::from_parts(self.ast_nodes, spans, self.edges.into_iter().map(|e| (e.src, e.dst)))
    }
}
