use std::fmt;
use std::str::FromStr;

macro_rules! node_kinds {
    ($($variant:ident),+ $(,)?) => {
        /// Node-kind labels. Parser-produced kinds follow ESTree naming;
        /// `Project` and `SemanticName` are synthetic and only ever created by
        /// graph construction.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum NodeKind {
            $($variant),+
        }

        impl NodeKind {
            /// Every kind, in declaration order. This order is the kind vocabulary.
            pub const ALL: &'static [NodeKind] = &[$(NodeKind::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(NodeKind::$variant => stringify!($variant)),+
                }
            }
        }

        impl FromStr for NodeKind {
            type Err = UnknownKind;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $(stringify!($variant) => Ok(NodeKind::$variant),)+
                    _ => Err(UnknownKind(s.to_string())),
                }
            }
        }
    };
}

node_kinds! {
    Project,
    SemanticName,
    Program,
    // statements
    ExpressionStatement,
    BlockStatement,
    EmptyStatement,
    DebuggerStatement,
    WithStatement,
    ReturnStatement,
    LabeledStatement,
    BreakStatement,
    ContinueStatement,
    IfStatement,
    SwitchStatement,
    SwitchCase,
    ThrowStatement,
    TryStatement,
    CatchClause,
    WhileStatement,
    DoWhileStatement,
    ForStatement,
    ForInStatement,
    ForOfStatement,
    // declarations
    FunctionDeclaration,
    VariableDeclaration,
    VariableDeclarator,
    ClassDeclaration,
    ClassBody,
    MethodDefinition,
    PropertyDefinition,
    StaticBlock,
    ImportDeclaration,
    ImportSpecifier,
    ImportDefaultSpecifier,
    ImportNamespaceSpecifier,
    ExportNamedDeclaration,
    ExportSpecifier,
    ExportDefaultDeclaration,
    ExportAllDeclaration,
    // expressions
    Identifier,
    PrivateIdentifier,
    Literal,
    TemplateLiteral,
    TemplateElement,
    TaggedTemplateExpression,
    ThisExpression,
    Super,
    ArrayExpression,
    ObjectExpression,
    Property,
    SpreadElement,
    FunctionExpression,
    ArrowFunctionExpression,
    ClassExpression,
    UnaryExpression,
    UpdateExpression,
    BinaryExpression,
    LogicalExpression,
    AssignmentExpression,
    ConditionalExpression,
    CallExpression,
    NewExpression,
    MemberExpression,
    ChainExpression,
    SequenceExpression,
    YieldExpression,
    AwaitExpression,
    ImportExpression,
    MetaProperty,
    ParenthesizedExpression,
    // patterns
    ObjectPattern,
    ArrayPattern,
    RestElement,
    AssignmentPattern,
}

impl NodeKind {
    /// Function-definition kinds: the possible callees of a call edge.
    pub fn is_function(self) -> bool {
        matches!(
            self,
            NodeKind::FunctionDeclaration
                | NodeKind::FunctionExpression
                | NodeKind::ArrowFunctionExpression
        )
    }

    /// Call-site kinds.
    pub fn is_call_site(self) -> bool {
        matches!(self, NodeKind::CallExpression | NodeKind::NewExpression)
    }

    pub fn is_synthetic(self) -> bool {
        matches!(self, NodeKind::Project | NodeKind::SemanticName)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown node kind `{0}`")]
pub struct UnknownKind(pub String);
