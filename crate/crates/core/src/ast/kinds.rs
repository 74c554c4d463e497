//! Node types of the compiler's compact AST and the attribute names under
//! which each type nests its children.

/// `(node type, child attribute names)` for every node type the ingest
/// accepts, covering compact ASTs from 0.4.12 through the 0.8 series.
const KINDS: &[(&str, &[&str])] = &[
    ("SourceUnit", &["nodes"]),
    ("PragmaDirective", &[]),
    ("ImportDirective", &[]),
    ("ContractDefinition", &["baseContracts", "documentation", "nodes"]),
    ("InheritanceSpecifier", &["arguments", "baseName"]),
    ("UsingForDirective", &["libraryName", "typeName"]),
    ("StructDefinition", &["documentation", "members"]),
    ("EnumDefinition", &["documentation", "members"]),
    ("EnumValue", &["documentation"]),
    ("UserDefinedValueTypeDefinition", &["underlyingType"]),
    ("ParameterList", &["parameters"]),
    ("OverrideSpecifier", &["overrides"]),
    (
        "FunctionDefinition",
        &["body", "documentation", "modifiers", "overrides", "parameters", "returnParameters"],
    ),
    ("VariableDeclaration", &["documentation", "overrides", "typeName", "value"]),
    ("ModifierDefinition", &["body", "documentation", "overrides", "parameters"]),
    ("ModifierInvocation", &["arguments", "modifierName"]),
    ("EventDefinition", &["documentation", "parameters"]),
    ("ErrorDefinition", &["documentation", "parameters"]),
    ("ElementaryTypeName", &[]),
    ("UserDefinedTypeName", &["pathNode"]),
    ("FunctionTypeName", &["parameterTypes", "returnParameterTypes"]),
    ("Mapping", &["keyType", "valueType"]),
    ("ArrayTypeName", &["baseType", "length"]),
    ("InlineAssembly", &["AST"]),
    ("Block", &["statements"]),
    ("UncheckedBlock", &["statements"]),
    ("PlaceholderStatement", &[]),
    ("IfStatement", &["condition", "falseBody", "trueBody"]),
    ("TryCatchClause", &["block", "parameters"]),
    ("TryStatement", &["clauses", "externalCall"]),
    ("WhileStatement", &["body", "condition"]),
    ("DoWhileStatement", &["body", "condition"]),
    (
        "ForStatement",
        &["body", "condition", "initializationExpression", "loopExpression"],
    ),
    ("Continue", &[]),
    ("Break", &[]),
    ("Return", &["expression"]),
    ("Throw", &[]),
    ("EmitStatement", &["eventCall"]),
    ("RevertStatement", &["errorCall"]),
    ("VariableDeclarationStatement", &["declarations", "initialValue"]),
    ("ExpressionStatement", &["expression"]),
    ("Conditional", &["condition", "falseExpression", "trueExpression"]),
    ("Assignment", &["leftHandSide", "rightHandSide"]),
    ("TupleExpression", &["components"]),
    ("UnaryOperation", &["subExpression"]),
    ("BinaryOperation", &["leftExpression", "rightExpression"]),
    ("FunctionCall", &["arguments", "expression"]),
    ("FunctionCallOptions", &["expression", "options"]),
    ("NewExpression", &["typeName"]),
    ("MemberAccess", &["expression"]),
    ("IndexAccess", &["baseExpression", "indexExpression"]),
    ("IndexRangeAccess", &["baseExpression", "endExpression", "startExpression"]),
    ("Identifier", &[]),
    ("IdentifierPath", &[]),
    ("ElementaryTypeNameExpression", &["typeName"]),
    ("Literal", &[]),
    ("StructuredDocumentation", &[]),
    ("YulBlock", &["statements"]),
    ("YulLiteral", &[]),
    ("YulIdentifier", &[]),
    ("YulTypedName", &[]),
    ("YulAssignment", &["value", "variableNames"]),
    ("YulFunctionCall", &["arguments", "functionName"]),
    ("YulExpressionStatement", &["expression"]),
    ("YulVariableDeclaration", &["value", "variables"]),
    ("YulFunctionDefinition", &["body", "parameters", "returnVariables"]),
    ("YulIf", &["body", "condition"]),
    ("YulSwitch", &["cases", "expression"]),
    ("YulCase", &["body", "value"]),
    ("YulForLoop", &["body", "condition", "post", "pre"]),
    ("YulBreak", &[]),
    ("YulContinue", &[]),
    ("YulLeave", &[]),
];

/// Child attribute names for `kind`, or `None` if the node type is unknown.
pub fn child_fields(kind: &str) -> Option<&'static [&'static str]> {
    KINDS.iter().find(|(name, _)| *name == kind).map(|(_, fields)| *fields)
}

pub fn is_known(kind: &str) -> bool {
    child_fields(kind).is_some()
}

/// Every node type the ingest accepts, in table order.
pub fn all() -> impl Iterator<Item = &'static str> {
    KINDS.iter().map(|(name, _)| *name)
}

/// Node types that reference a declaration through `referencedDeclaration`.
pub const REFERENCING: &[&str] = &["Identifier", "IdentifierPath", "UserDefinedTypeName", "MemberAccess"];

/// Node types that exist only to carry comments and never enter the code graph.
pub const IGNORED: &[&str] = &["StructuredDocumentation"];
