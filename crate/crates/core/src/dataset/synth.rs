//! Synthetic labeled corpus.
//!
//! Contracts are drawn from a small template family around a withdraw
//! function that pays out with `call{value: ..}`, `send` or `transfer`.
//! Vulnerable variants update state after the payout and carry no lock;
//! clean variants update state first or hold a lock (modifier or inline
//! flag). The payout line and every state write after it are annotated.
//!
//! Source text and compact AST are emitted together, so no compiler is
//! needed. The AST mirrors what solc 0.8 produces for the same text: key
//! order, spans, declaration references and the attributes the feature
//! schema reads.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use super::{canonical_hash, DatasetError, DatasetRecord, Subtype};
use crate::ast::{AstDocument, SourceSpan};
use crate::features::FeatureSchema;
use crate::graph::build_code_graph;
use crate::labels::LineLabels;

/// Compiler version recorded in emitted bundles.
pub const EMITTED_COMPILER_VERSION: &str = "0.8.19";

const MSG_ID: i64 = 4294967281;
const REQUIRE_ID: i64 = 4294967278;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Guard {
    /// No protection: payout, then state writes.
    None,
    /// Checks-effects-interactions: state writes, then payout.
    EffectsFirst,
    /// A `nonReentrant`-style modifier on the withdraw function.
    Modifier,
    /// `require(!flag); flag = true; ... flag = false;` inside the function.
    InlineLock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Payout {
    /// `(bool ok, ) = msg.sender.call{value: x}("");` with an optional
    /// `require(ok);`.
    Call { checked: bool },
    /// `require(payable(msg.sender).send(x));`
    SendRequired,
    /// `bool ok = payable(msg.sender).send(x);` then `require(ok);`
    SendChecked,
    /// `payable(msg.sender).transfer(x);`
    Transfer,
}

impl Payout {
    pub fn subtype(self) -> Subtype {
        match self {
            Payout::Call { .. } => Subtype::Call,
            Payout::SendRequired | Payout::SendChecked => Subtype::Send,
            Payout::Transfer => Subtype::Transfer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Counter {
    Absent,
    BeforePayout,
    AfterPayout,
}

/// Structural choices of one contract. Names and layout live in [`Names`]
/// and [`Style`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Template {
    pub payout: Payout,
    pub guard: Guard,
    /// Withdraw takes an amount parameter (else it withdraws the whole
    /// balance into a local).
    pub amount_param: bool,
    /// `require(amount > 0);`
    pub positive_check: bool,
    /// Balance update is `-= amount` (else `= 0`).
    pub subtract: bool,
    pub total: bool,
    pub counter: Counter,
    pub event: bool,
    pub deposit: bool,
    pub view: bool,
    /// An unused boolean state variable.
    pub spare_flag: bool,
    pub external: bool,
}

impl Template {
    pub fn vulnerable(&self) -> bool {
        self.guard == Guard::None
    }

    pub fn subtype(&self) -> Subtype {
        self.payout.subtype()
    }

    /// Draws a template of the given subtype and class.
    pub fn random(rng: &mut impl Rng, subtype: Subtype, vulnerable: bool) -> Self {
        let payout = match subtype {
            Subtype::Call => Payout::Call { checked: rng.random_bool(0.6) },
            Subtype::Send if rng.random_bool(0.5) => Payout::SendRequired,
            Subtype::Send => Payout::SendChecked,
            Subtype::Transfer => Payout::Transfer,
        };
        let guard = if vulnerable {
            Guard::None
        } else {
            *[Guard::EffectsFirst, Guard::Modifier, Guard::InlineLock].choose(rng).unwrap()
        };
        let counter = match rng.random_range(0..10) {
            0..=5 => Counter::Absent,
            6 | 7 => Counter::BeforePayout,
            _ => Counter::AfterPayout,
        };
        Template {
            payout,
            guard,
            amount_param: rng.random_bool(0.6),
            positive_check: rng.random_bool(0.3),
            subtract: rng.random_bool(0.5),
            total: rng.random_bool(0.35),
            counter,
            event: rng.random_bool(0.3),
            deposit: rng.random_bool(0.35),
            view: rng.random_bool(0.2),
            spare_flag: rng.random_bool(0.2),
            external: rng.random_bool(0.5),
        }
    }

    fn lock_var(&self) -> bool {
        matches!(self.guard, Guard::Modifier | Guard::InlineLock) || self.spare_flag
    }
}

/// Identifiers of one contract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Names {
    pub contract: String,
    pub balances: String,
    pub amount: String,
    pub withdraw: String,
    pub deposit: String,
    pub view: String,
    pub who: String,
    pub ok: String,
    pub total: String,
    pub counter: String,
    pub lock: String,
    pub modifier: String,
    pub event: String,
}

const CONTRACTS: &[&str] = &["Vault", "Bank", "Wallet", "Escrow", "Pool", "Fund", "Treasury", "Reserve", "Savings", "Piggy"];
const BALANCES: &[&str] = &["balances", "deposits", "credit", "funds", "shares", "ledger", "stakes"];
const AMOUNTS: &[&str] = &["amount", "wad", "sum", "qty", "payout"];
const WITHDRAWS: &[&str] = &["withdraw", "claim", "redeem", "cashOut", "release", "pull"];
const DEPOSITS: &[&str] = &["deposit", "fund", "topUp", "store", "put"];
const VIEWS: &[&str] = &["balanceOf", "creditOf", "fundsOf", "shareOf", "owed"];
const WHOS: &[&str] = &["who", "account", "user", "holder"];
const OKS: &[&str] = &["ok", "success", "sent", "done"];
const TOTALS: &[&str] = &["total", "totalSupply", "pooled", "reserve"];
const COUNTERS: &[&str] = &["withdrawals", "nonce", "payouts", "count"];
const LOCKS: &[&str] = &["locked", "entered", "busy", "mutex"];
const MODIFIERS: &[&str] = &["nonReentrant", "noReentry", "guarded", "lockFunds"];
const EVENTS: &[&str] = &["Withdrawn", "Paid", "Released", "Claimed"];

impl Names {
    pub fn random(rng: &mut impl Rng) -> Self {
        let suffix = rng.random_range(1..100);
        let mut pick = |pool: &[&str]| pool.choose(rng).unwrap().to_string();
        Names {
            contract: format!("{}{suffix}", pick(CONTRACTS)),
            balances: pick(BALANCES),
            amount: pick(AMOUNTS),
            withdraw: pick(WITHDRAWS),
            deposit: pick(DEPOSITS),
            view: pick(VIEWS),
            who: pick(WHOS),
            ok: pick(OKS),
            total: pick(TOTALS),
            counter: pick(COUNTERS),
            lock: pick(LOCKS),
            modifier: pick(MODIFIERS),
            event: pick(EVENTS),
        }
    }
}

/// Layout choices that never reach the code graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Style {
    pub indent: usize,
    /// Blank line between contract members.
    pub spacious: bool,
    /// Line comments above members and some statements.
    pub comments: bool,
}

impl Default for Style {
    fn default() -> Self {
        Style { indent: 4, spacious: true, comments: false }
    }
}

impl Style {
    pub fn random(rng: &mut impl Rng) -> Self {
        Style { indent: *[2, 4, 4, 8].choose(rng).unwrap(), spacious: rng.random_bool(0.7), comments: rng.random_bool(0.4) }
    }
}

/// A generated contract: source, compact AST bundle and line annotations.
#[derive(Debug, Clone)]
pub struct SyntheticContract {
    pub id: String,
    pub subtype: Subtype,
    pub template: Template,
    pub source: String,
    /// Compact AST of the source unit.
    pub ast: Value,
    pub line_labels: LineLabels,
}

impl SyntheticContract {
    pub fn vulnerable(&self) -> bool {
        self.line_labels.any()
    }

    pub fn document(&self) -> AstDocument {
        AstDocument::from_compact(&self.ast, self.source.clone().into_bytes(), Some(EMITTED_COMPILER_VERSION))
            .expect("emitted ASTs are well formed")
    }

    /// Bundle JSON in the format `parse_ast` reads.
    pub fn bundle(&self) -> String {
        json!({
            "compiler_version": EMITTED_COMPILER_VERSION,
            "source_name": format!("{}.sol", self.id),
            "source": self.source,
            "ast": self.ast,
        })
        .to_string()
    }

    pub fn record(&self, schema: &FeatureSchema) -> Result<DatasetRecord, DatasetError> {
        DatasetRecord::build(&self.id, self.subtype, &self.document(), &self.line_labels, schema)
    }
}

enum Expr {
    Id(String),
    Member(Box<Expr>, &'static str),
    Index(Box<Expr>, Box<Expr>),
    Call(Box<Expr>, Vec<Expr>),
    /// `payable(x)`
    Payable(Box<Expr>),
    /// `target{value: v}`
    WithValue(Box<Expr>, Box<Expr>),
    Binary(&'static str, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Assign(&'static str, Box<Expr>, Box<Expr>),
    Number(&'static str),
    Bool(bool),
    Str(&'static str),
}

fn id(name: &str) -> Expr {
    Expr::Id(name.to_string())
}

fn msg_sender() -> Expr {
    Expr::Member(Box::new(id("msg")), "sender")
}

fn index(base: &str, key: Expr) -> Expr {
    Expr::Index(Box::new(id(base)), Box::new(key))
}

fn call(callee: Expr, args: Vec<Expr>) -> Expr {
    Expr::Call(Box::new(callee), args)
}

fn require(cond: Expr) -> Stmt {
    Stmt::Expr(call(id("require"), vec![cond]))
}

fn assign(op: &'static str, lhs: Expr, rhs: Expr) -> Stmt {
    Stmt::Expr(Expr::Assign(op, Box::new(lhs), Box::new(rhs)))
}

enum Stmt {
    Expr(Expr),
    /// `<ty> <name> = <value>`
    Local(&'static str, String, Expr),
    /// `(bool <name>, ) = <value>`
    TupleBool(String, Expr),
    Emit(String, Vec<Expr>),
    Return(Expr),
    Placeholder,
}

/// A statement plus whether its line is annotated vulnerable.
struct Line {
    stmt: Stmt,
    vulnerable: bool,
    comment: Option<&'static str>,
}

fn plain(stmt: Stmt) -> Line {
    Line { stmt, vulnerable: false, comment: None }
}

struct Emitter<'a> {
    out: String,
    next_id: i64,
    scopes: Vec<Vec<(String, i64)>>,
    style: &'a Style,
    depth: usize,
    vulnerable_offsets: Vec<usize>,
    /// Parameter list id of the function being emitted.
    return_params: Option<i64>,
}

fn sorted_object(fields: Vec<(&str, Value)>) -> Value {
    let mut fields = fields;
    fields.sort_by(|a, b| a.0.cmp(b.0));
    let mut map = Map::new();
    for (k, v) in fields {
        map.insert(k.to_string(), v);
    }
    Value::Object(map)
}

impl<'a> Emitter<'a> {
    fn new(style: &'a Style) -> Self {
        Self { out: String::new(), next_id: 1, scopes: vec![Vec::new()], style, depth: 0, vulnerable_offsets: Vec::new(), return_params: None }
    }

    fn pos(&self) -> usize {
        self.out.len()
    }

    fn push(&mut self, s: &str) {
        self.out.push_str(s);
    }

    fn newline(&mut self) {
        self.out.push('\n');
        let width = self.depth * self.style.indent;
        self.out.extend(std::iter::repeat_n(' ', width));
    }

    fn blank_line(&mut self) {
        self.out.push('\n');
    }

    fn fresh_id(&mut self) -> i64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Node spanning `start..` the current position.
    fn node(&mut self, kind: &str, start: usize, fields: Vec<(&str, Value)>) -> Value {
        let len = self.pos() - start;
        self.node_at(kind, start, len, fields)
    }

    fn node_at(&mut self, kind: &str, start: usize, len: usize, fields: Vec<(&str, Value)>) -> Value {
        let id = self.fresh_id();
        self.node_with_id(kind, id, start, len, fields)
    }

    fn node_with_id(&mut self, kind: &str, id: i64, start: usize, len: usize, mut fields: Vec<(&str, Value)>) -> Value {
        fields.push(("id", json!(id)));
        fields.push(("nodeType", json!(kind)));
        fields.push(("src", json!(format!("{start}:{len}:0"))));
        sorted_object(fields)
    }

    fn declare(&mut self, name: &str, id: i64) {
        self.scopes.last_mut().unwrap().push((name.to_string(), id));
    }

    fn lookup(&self, name: &str) -> i64 {
        match name {
            "msg" => MSG_ID,
            "require" => REQUIRE_ID,
            _ => self
                .scopes
                .iter()
                .rev()
                .flat_map(|s| s.iter().rev())
                .find(|(n, _)| n == name)
                .map(|(_, id)| *id)
                .unwrap_or_else(|| panic!("undeclared identifier {name}")),
        }
    }

    fn comment(&mut self, text: &str) {
        if self.style.comments {
            self.push("// ");
            self.push(text);
            self.newline();
        }
    }

    fn elementary(&mut self, name: &str, address_mutability: Option<&str>) -> Value {
        let start = self.pos();
        self.push(name);
        let mut fields = vec![("name", json!(name))];
        if let Some(m) = address_mutability {
            fields.push(("stateMutability", json!(m)));
        }
        self.node("ElementaryTypeName", start, fields)
    }

    fn type_name(&mut self, ty: &str) -> Value {
        match ty {
            "address" => self.elementary("address", Some("nonpayable")),
            "mapping" => {
                let start = self.pos();
                self.push("mapping(");
                let key = self.elementary("address", None);
                self.push(" => ");
                let value = self.elementary("uint256", None);
                self.push(")");
                self.node("Mapping", start, vec![("keyType", key), ("valueType", value)])
            }
            other => self.elementary(other, None),
        }
    }

    /// `<ty> [qualifiers] <name>` as a VariableDeclaration.
    fn declaration(&mut self, ty: &str, qualifier: Option<&str>, name: &str, state: bool, visibility: &str, indexed: Option<bool>) -> Value {
        let start = self.pos();
        let type_name = self.type_name(ty);
        if let Some(q) = qualifier {
            self.push(" ");
            self.push(q);
        }
        if !name.is_empty() {
            self.push(" ");
            self.push(name);
        }
        let id = self.fresh_id();
        let mut fields = vec![
            ("constant", json!(false)),
            ("mutability", json!("mutable")),
            ("name", json!(name)),
            ("stateVariable", json!(state)),
            ("storageLocation", json!("default")),
            ("typeName", type_name),
            ("visibility", json!(visibility)),
        ];
        if let Some(ix) = indexed {
            fields.push(("indexed", json!(ix)));
        }
        let len = self.pos() - start;
        let node = self.node_with_id("VariableDeclaration", id, start, len, fields);
        if !name.is_empty() {
            self.declare(name, id);
        }
        node
    }

    /// `(<ty> <name>, ...)`
    fn parameter_list(&mut self, params: &[(&str, Option<&str>, &str)], indexed: bool) -> Value {
        let start = self.pos();
        self.push("(");
        let mut nodes = Vec::new();
        for (i, (ty, qualifier, name)) in params.iter().enumerate() {
            if i > 0 {
                self.push(", ");
            }
            let ix = indexed.then_some(qualifier.is_some());
            nodes.push(self.declaration(ty, *qualifier, name, false, "internal", ix));
        }
        self.push(")");
        self.node("ParameterList", start, vec![("parameters", json!(nodes))])
    }

    fn expr(&mut self, e: &Expr) -> Value {
        let start = self.pos();
        match e {
            Expr::Id(name) => {
                self.push(name);
                let referenced = self.lookup(name);
                self.node(
                    "Identifier",
                    start,
                    vec![("name", json!(name)), ("overloadedDeclarations", json!([])), ("referencedDeclaration", json!(referenced))],
                )
            }
            Expr::Member(base, member) => {
                let base = self.expr(base);
                self.push(".");
                self.push(member);
                self.node("MemberAccess", start, vec![("expression", base), ("memberName", json!(member))])
            }
            Expr::Index(base, key) => {
                let base = self.expr(base);
                self.push("[");
                let key = self.expr(key);
                self.push("]");
                self.node("IndexAccess", start, vec![("baseExpression", base), ("indexExpression", key)])
            }
            Expr::Call(callee, args) => {
                let callee = self.expr(callee);
                let args = self.arguments(args);
                self.function_call(start, callee, args, "functionCall")
            }
            Expr::Payable(inner) => {
                self.push("payable(");
                let inner_type = self.node_at(
                    "ElementaryTypeName",
                    start,
                    8,
                    vec![("name", json!("address")), ("stateMutability", json!("payable"))],
                );
                let callee = self.node_at("ElementaryTypeNameExpression", start, 8, vec![("typeName", inner_type)]);
                let arg = self.expr(inner);
                self.push(")");
                self.function_call(start, callee, vec![arg], "typeConversion")
            }
            Expr::WithValue(target, value) => {
                let target = self.expr(target);
                self.push("{value: ");
                let value = self.expr(value);
                self.push("}");
                self.node(
                    "FunctionCallOptions",
                    start,
                    vec![("expression", target), ("names", json!(["value"])), ("options", json!([value]))],
                )
            }
            Expr::Binary(op, l, r) => {
                let l = self.expr(l);
                self.push(&format!(" {op} "));
                let r = self.expr(r);
                self.node(
                    "BinaryOperation",
                    start,
                    vec![("leftExpression", l), ("operator", json!(op)), ("rightExpression", r)],
                )
            }
            Expr::Not(inner) => {
                self.push("!");
                let sub = self.expr(inner);
                self.node(
                    "UnaryOperation",
                    start,
                    vec![("operator", json!("!")), ("prefix", json!(true)), ("subExpression", sub)],
                )
            }
            Expr::Assign(op, l, r) => {
                let l = self.expr(l);
                self.push(&format!(" {op} "));
                let r = self.expr(r);
                self.node("Assignment", start, vec![("leftHandSide", l), ("operator", json!(op)), ("rightHandSide", r)])
            }
            Expr::Number(v) => {
                self.push(v);
                self.node("Literal", start, vec![("kind", json!("number")), ("value", json!(v))])
            }
            Expr::Bool(b) => {
                let text = if *b { "true" } else { "false" };
                self.push(text);
                self.node("Literal", start, vec![("kind", json!("bool")), ("value", json!(text))])
            }
            Expr::Str(s) => {
                self.push(&format!("\"{s}\""));
                self.node("Literal", start, vec![("kind", json!("string")), ("value", json!(s))])
            }
        }
    }

    fn arguments(&mut self, args: &[Expr]) -> Vec<Value> {
        self.push("(");
        let mut out = Vec::new();
        for (i, a) in args.iter().enumerate() {
            if i > 0 {
                self.push(", ");
            }
            out.push(self.expr(a));
        }
        self.push(")");
        out
    }

    fn function_call(&mut self, start: usize, callee: Value, args: Vec<Value>, kind: &str) -> Value {
        self.node(
            "FunctionCall",
            start,
            vec![
                ("arguments", json!(args)),
                ("expression", callee),
                ("kind", json!(kind)),
                ("names", json!([])),
                ("tryCall", json!(false)),
            ],
        )
    }

    /// Statement without its trailing `;`.
    fn stmt(&mut self, s: &Stmt) -> Value {
        let start = self.pos();
        match s {
            Stmt::Expr(e) => {
                let e = self.expr(e);
                self.node("ExpressionStatement", start, vec![("expression", e)])
            }
            Stmt::Local(ty, name, value) => {
                let decl = self.declaration(ty, None, name, false, "internal", None);
                let decl_id = decl["id"].clone();
                self.push(" = ");
                let value = self.expr(value);
                self.node(
                    "VariableDeclarationStatement",
                    start,
                    vec![("assignments", json!([decl_id])), ("declarations", json!([decl])), ("initialValue", value)],
                )
            }
            Stmt::TupleBool(name, value) => {
                self.push("(");
                let decl = self.declaration("bool", None, name, false, "internal", None);
                let decl_id = decl["id"].clone();
                self.push(", ) = ");
                let value = self.expr(value);
                self.node(
                    "VariableDeclarationStatement",
                    start,
                    vec![
                        ("assignments", json!([decl_id, null])),
                        ("declarations", json!([decl, null])),
                        ("initialValue", value),
                    ],
                )
            }
            Stmt::Emit(event, args) => {
                self.push("emit ");
                let call_start = self.pos();
                let callee = self.expr(&id(event));
                let args = self.arguments(args);
                let call = self.function_call(call_start, callee, args, "functionCall");
                self.node("EmitStatement", start, vec![("eventCall", call)])
            }
            Stmt::Return(e) => {
                self.push("return ");
                let e = self.expr(e);
                let params = self.return_params.expect("return inside a function");
                self.node("Return", start, vec![("expression", e), ("functionReturnParameters", json!(params))])
            }
            Stmt::Placeholder => {
                self.push("_");
                self.node("PlaceholderStatement", start, vec![])
            }
        }
    }

    /// `{ ...lines }` at the current depth.
    fn block(&mut self, lines: &[Line]) -> Value {
        let start = self.pos();
        self.push("{");
        self.depth += 1;
        self.scopes.push(Vec::new());
        let mut statements = Vec::new();
        for line in lines {
            self.newline();
            if let Some(c) = line.comment {
                self.comment(c);
            }
            if line.vulnerable {
                self.vulnerable_offsets.push(self.pos());
            }
            statements.push(self.stmt(&line.stmt));
            self.push(";");
        }
        self.scopes.pop();
        self.depth -= 1;
        self.newline();
        self.push("}");
        self.node("Block", start, vec![("statements", json!(statements))])
    }
}

/// Member layout of a contract.
struct Function<'n> {
    name: &'n str,
    params: Vec<(&'static str, Option<&'static str>, &'n str)>,
    visibility: &'static str,
    mutability: &'static str,
    modifier: Option<&'n str>,
    returns: Option<&'static str>,
    body: Vec<Line>,
}

impl Emitter<'_> {
    fn function(&mut self, f: &Function) -> Value {
        let start = self.pos();
        self.push("function ");
        self.push(f.name);
        self.scopes.push(Vec::new());
        let params = self.parameter_list(&f.params, false);
        self.push(" ");
        self.push(f.visibility);
        if f.mutability != "nonpayable" {
            self.push(" ");
            self.push(f.mutability);
        }
        let mut modifiers = Vec::new();
        if let Some(m) = f.modifier {
            self.push(" ");
            let m_start = self.pos();
            self.push(m);
            let referenced = self.lookup(m);
            let path = self.node("IdentifierPath", m_start, vec![("name", json!(m)), ("referencedDeclaration", json!(referenced))]);
            modifiers.push(self.node("ModifierInvocation", m_start, vec![("kind", json!("modifierInvocation")), ("modifierName", path)]));
        }
        let returns = match f.returns {
            Some(ty) => {
                self.push(" returns ");
                let list = self.parameter_list(&[(ty, None, "")], false);
                self.push(" ");
                list
            }
            None => {
                // The empty list sits where the body's `{` begins.
                self.push(" ");
                let at = self.pos();
                self.node_at("ParameterList", at, 0, vec![("parameters", json!([]))])
            }
        };
        self.return_params = returns["id"].as_i64();
        let body = self.block(&f.body);
        self.scopes.pop();
        self.return_params = None;
        self.node(
            "FunctionDefinition",
            start,
            vec![
                ("body", body),
                ("implemented", json!(true)),
                ("kind", json!("function")),
                ("modifiers", json!(modifiers)),
                ("name", json!(f.name)),
                ("parameters", params),
                ("returnParameters", returns),
                ("stateMutability", json!(f.mutability)),
                ("virtual", json!(false)),
                ("visibility", json!(f.visibility)),
            ],
        )
    }

    fn modifier(&mut self, name: &str, body: &[Line]) -> Value {
        let start = self.pos();
        self.push("modifier ");
        self.push(name);
        let params = self.parameter_list(&[], false);
        self.push(" ");
        let body = self.block(body);
        let node = self.node(
            "ModifierDefinition",
            start,
            vec![
                ("body", body),
                ("name", json!(name)),
                ("parameters", params),
                ("virtual", json!(false)),
                ("visibility", json!("internal")),
            ],
        );
        let id = node["id"].as_i64().unwrap();
        self.declare(name, id);
        node
    }
}

/// Emits the contract described by `t`.
pub fn emit_contract(contract_id: &str, t: &Template, n: &Names, style: &Style) -> SyntheticContract {
    emit_file(contract_id, &[(t, n)], style)
}

/// Emits one source file holding a contract per part, in order. Subtype and
/// template are those of the first part; line labels cover every part.
pub fn emit_file(file_id: &str, parts: &[(&Template, &Names)], style: &Style) -> SyntheticContract {
    assert!(!parts.is_empty(), "a file needs at least one contract");
    let mut e = Emitter::new(style);
    let start = e.pos();
    e.push("pragma solidity ^0.8.0;");
    let mut nodes = vec![e.node("PragmaDirective", start, vec![("literals", json!(["solidity", "^", "0.8", ".0"]))])];
    for (t, n) in parts {
        e.blank_line();
        e.newline();
        e.scopes.push(Vec::new());
        nodes.push(emit_contract_definition(&mut e, t, n));
        e.scopes.pop();
    }
    e.push("\n");
    let total = e.pos();
    let unit = e.node_at("SourceUnit", 0, total, vec![("nodes", json!(nodes))]);

    let source = e.out;
    let index = crate::ast::LineIndex::new(source.as_bytes()).expect("ASCII source");
    let lines = e
        .vulnerable_offsets
        .iter()
        .map(|&at| index.span_to_lines(SourceSpan::new(at, 0, 0)).expect("in range").first);
    let line_labels = LineLabels::from_lines(index.line_count(), lines).expect("lines in range");
    let t = parts[0].0;
    SyntheticContract { id: file_id.to_string(), subtype: t.subtype(), template: t.clone(), source, ast: unit, line_labels }
}

fn emit_contract_definition(e: &mut Emitter, t: &Template, n: &Names) -> Value {
    let style = e.style;
    let amount = n.amount.as_str();
    let bal_of_sender = || index(&n.balances, msg_sender());

    let contract_start = e.pos();
    e.push(&format!("contract {} {{", n.contract));
    e.depth = 1;
    let mut members = Vec::new();

    e.newline();
    e.comment("account balances");
    let visibility = if t.external { "public" } else { "internal" };
    members.push(e.declaration("mapping", Some(visibility), &n.balances, true, visibility, None));
    e.push(";");
    if t.total {
        e.newline();
        members.push(e.declaration("uint256", Some("public"), &n.total, true, "public", None));
        e.push(";");
    }
    if t.counter != Counter::Absent {
        e.newline();
        members.push(e.declaration("uint256", Some("private"), &n.counter, true, "private", None));
        e.push(";");
    }
    if t.lock_var() {
        e.newline();
        members.push(e.declaration("bool", Some("private"), &n.lock, true, "private", None));
        e.push(";");
    }
    if t.event {
        if style.spacious {
            e.blank_line();
        }
        e.newline();
        let start = e.pos();
        e.push("event ");
        e.push(&n.event);
        let params = e.parameter_list(&[("address", Some("indexed"), &n.who), ("uint256", None, amount)], true);
        e.push(";");
        // Event parameters are not visible outside the declaration.
        e.scopes.last_mut().unwrap().retain(|(name, _)| name != &n.who && name != amount);
        let node = e.node("EventDefinition", start, vec![("anonymous", json!(false)), ("name", json!(n.event)), ("parameters", params)]);
        e.declare(&n.event, node["id"].as_i64().unwrap());
        members.push(node);
    }

    let member_gap = |e: &mut Emitter| {
        if e.style.spacious {
            e.blank_line();
        }
        e.newline();
    };

    if t.guard == Guard::Modifier {
        member_gap(e);
        e.comment("blocks re-entry");
        let body = vec![
            plain(require(Expr::Not(Box::new(id(&n.lock))))),
            plain(assign("=", id(&n.lock), Expr::Bool(true))),
            plain(Stmt::Placeholder),
            plain(assign("=", id(&n.lock), Expr::Bool(false))),
        ];
        members.push(e.modifier(&n.modifier, &body));
    }

    if t.deposit {
        member_gap(e);
        e.comment("credit the sender");
        let mut body = vec![plain(assign("+=", bal_of_sender(), Expr::Member(Box::new(id("msg")), "value")))];
        if t.total {
            body.push(plain(assign("+=", id(&n.total), Expr::Member(Box::new(id("msg")), "value"))));
        }
        let f = Function {
            name: &n.deposit,
            params: vec![],
            visibility: "external",
            mutability: "payable",
            modifier: None,
            returns: None,
            body,
        };
        members.push(e.function(&f));
    }

    // Withdraw body.
    let mut body = Vec::new();
    if t.guard == Guard::InlineLock {
        body.push(plain(require(Expr::Not(Box::new(id(&n.lock))))));
        body.push(plain(assign("=", id(&n.lock), Expr::Bool(true))));
    }
    if t.amount_param {
        body.push(plain(require(Expr::Binary(">=", Box::new(bal_of_sender()), Box::new(id(amount))))));
    } else {
        body.push(plain(Stmt::Local("uint256", amount.to_string(), bal_of_sender())));
    }
    if t.positive_check {
        body.push(plain(require(Expr::Binary(">", Box::new(id(amount)), Box::new(Expr::Number("0"))))));
    }
    if t.counter == Counter::BeforePayout {
        body.push(plain(assign("+=", id(&n.counter), Expr::Number("1"))));
    }

    let mut writes = vec![if t.subtract {
        assign("-=", bal_of_sender(), id(amount))
    } else {
        assign("=", bal_of_sender(), Expr::Number("0"))
    }];
    if t.total {
        writes.push(assign("-=", id(&n.total), id(amount)));
    }
    if t.counter == Counter::AfterPayout {
        writes.push(assign("+=", id(&n.counter), Expr::Number("1")));
    }

    let vulnerable = t.vulnerable();
    let payable_sender = || Expr::Payable(Box::new(msg_sender()));
    let mut payout = match t.payout {
        Payout::Call { checked } => {
            let target = Expr::Member(Box::new(msg_sender()), "call");
            let value = Expr::WithValue(Box::new(target), Box::new(id(amount)));
            let mut lines = vec![Line {
                stmt: Stmt::TupleBool(n.ok.clone(), call(value, vec![Expr::Str("")])),
                vulnerable,
                comment: Some("send the funds"),
            }];
            if checked {
                lines.push(plain(require(id(&n.ok))));
            }
            lines
        }
        Payout::SendRequired => vec![Line {
            stmt: require(call(Expr::Member(Box::new(payable_sender()), "send"), vec![id(amount)])),
            vulnerable,
            comment: Some("send the funds"),
        }],
        Payout::SendChecked => vec![
            Line {
                stmt: Stmt::Local("bool", n.ok.clone(), call(Expr::Member(Box::new(payable_sender()), "send"), vec![id(amount)])),
                vulnerable,
                comment: Some("send the funds"),
            },
            plain(require(id(&n.ok))),
        ],
        Payout::Transfer => vec![Line {
            stmt: Stmt::Expr(call(Expr::Member(Box::new(payable_sender()), "transfer"), vec![id(amount)])),
            vulnerable,
            comment: Some("send the funds"),
        }],
    };
    let mut writes: Vec<Line> = writes.into_iter().map(|stmt| Line { stmt, vulnerable, comment: None }).collect();
    writes[0].comment = Some("update the books");
    if t.guard == Guard::EffectsFirst {
        body.append(&mut writes);
        body.append(&mut payout);
    } else {
        body.append(&mut payout);
        body.append(&mut writes);
    }
    if t.event {
        body.push(plain(Stmt::Emit(n.event.clone(), vec![msg_sender(), id(amount)])));
    }
    if t.guard == Guard::InlineLock {
        body.push(plain(assign("=", id(&n.lock), Expr::Bool(false))));
    }

    member_gap(e);
    e.comment("pay out the caller");
    let withdraw = Function {
        name: &n.withdraw,
        params: if t.amount_param { vec![("uint256", None, amount)] } else { vec![] },
        visibility: if t.external { "external" } else { "public" },
        mutability: "nonpayable",
        modifier: (t.guard == Guard::Modifier).then_some(n.modifier.as_str()),
        returns: None,
        body,
    };
    members.push(e.function(&withdraw));

    if t.view {
        member_gap(e);
        let f = Function {
            name: &n.view,
            params: vec![("address", None, &n.who)],
            visibility: "external",
            mutability: "view",
            modifier: None,
            returns: Some("uint256"),
            body: vec![plain(Stmt::Return(index(&n.balances, id(&n.who))))],
        };
        members.push(e.function(&f));
    }

    e.depth = 0;
    e.newline();
    e.push("}");
    let contract = e.node(
        "ContractDefinition",
        contract_start,
        vec![
            ("abstract", json!(false)),
            ("baseContracts", json!([])),
            ("contractKind", json!("contract")),
            ("name", json!(n.contract)),
            ("nodes", json!(members)),
        ],
    );
    contract
}

/// One source file with `contracts` random contracts, alternating
/// vulnerable and clean, with distinct contract names.
pub fn generate_file(file_id: &str, contracts: usize, seed: u64) -> SyntheticContract {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let style = Style::random(&mut rng);
    let parts: Vec<(Template, Names)> = (0..contracts)
        .map(|k| {
            let template = Template::random(&mut rng, Subtype::ALL[k % 3], k % 2 == 0);
            let mut names = Names::random(&mut rng);
            names.contract = format!("{}_{k}", names.contract);
            (template, names)
        })
        .collect();
    let refs: Vec<(&Template, &Names)> = parts.iter().map(|(t, n)| (t, n)).collect();
    emit_file(file_id, &refs, &style)
}

/// Generates `n_clean` clean and `n_vulnerable` vulnerable contracts with
/// pairwise distinct code-graph digests, subtypes rotating call, send,
/// transfer within each class.
pub fn generate_synthetic_corpus(n_clean: usize, n_vulnerable: usize, seed: u64) -> Result<Vec<SyntheticContract>, DatasetError> {
    if n_clean == 0 || n_vulnerable == 0 {
        return Err(DatasetError::EmptyRequest);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n_clean + n_vulnerable);
    for (class, count, vulnerable) in [("vulnerable", n_vulnerable, true), ("clean", n_clean, false)] {
        let budget = 200 * count + 1000;
        let mut attempts = 0;
        for k in 0..count {
            let subtype = Subtype::ALL[k % 3];
            loop {
                if attempts == budget {
                    return Err(DatasetError::CorpusExhausted { class, got: k, attempts });
                }
                attempts += 1;
                let template = Template::random(&mut rng, subtype, vulnerable);
                let names = Names::random(&mut rng);
                let style = Style::random(&mut rng);
                let id = format!("syn-{}-{subtype}-{k:04}", if vulnerable { "v" } else { "c" });
                let contract = emit_contract(&id, &template, &names, &style);
                let graph = build_code_graph(&contract.document()).expect("emitted ASTs build");
                if seen.insert(canonical_hash(&graph)) {
                    out.push(contract);
                    break;
                }
            }
        }
    }
    Ok(out)
}
