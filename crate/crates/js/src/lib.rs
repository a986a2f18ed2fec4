//! A JavaScript parser that produces an ESTree-shaped syntax tree stored as a
//! flat, preorder-numbered arena.
//!
//! Every node records its ESTree kind, byte span, the ESTree property name it
//! occupies in its parent (`field`), and for identifiers their text. Child
//! order always follows source order, so preorder indices increase left to
//! right. Function nodes carry their formal-parameter count and call nodes
//! their argument count, both computed before any later tree rewriting.
//!
//! Deviations from ESTree, all chosen so that each identifier token maps to
//! exactly one `Identifier` node:
//! - shorthand properties (`{a}`) have only a `key` child;
//! - a computed member index uses the field `index` instead of `property`, and
//!   a computed key uses `computed_key`;
//! - `MetaProperty` (`new.target`, `import.meta`) is a leaf;
//! - template elements span their delimiters, so no node has an empty span
//!   except the `Program` of an empty source.
//!
//! TypeScript and JSX are not supported.

mod kind;
mod lexer;
mod parser;

pub use kind::{NodeKind, UnknownKind};

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(offset: usize, message: impl Into<String>) -> Self {
        ParseError {
            offset,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    pub start: usize,
    pub end: usize,
    /// Identifier text, for `Identifier` and `PrivateIdentifier` nodes.
    pub name: Option<String>,
    /// ESTree property of the parent holding this node (`""` for the root).
    pub field: &'static str,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Formal-parameter count, for function kinds.
    pub params: Option<u32>,
    /// Argument count, for call and `new` expressions.
    pub args: Option<u32>,
}

/// Parsed file. `nodes[0]` is the `Program`; indices are preorder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    pub nodes: Vec<Node>,
}

impl Ast {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    /// First child of `id` stored under `field`.
    pub fn child(&self, id: usize, field: &str) -> Option<usize> {
        self.nodes[id]
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].field == field)
    }

    pub fn children_in<'a>(
        &'a self,
        id: usize,
        field: &'a str,
    ) -> impl Iterator<Item = usize> + 'a {
        self.nodes[id]
            .children
            .iter()
            .copied()
            .filter(move |&c| self.nodes[c].field == field)
    }
}

/// Parses a script or module. `import`/`export` are accepted at top level.
pub fn parse(source: &str) -> Result<Ast, ParseError> {
    parser::Parser::new(source)?.parse_program()
}

/// 1-based line and column (in UTF-16 code units, as JavaScript engines
/// report them) of a byte offset.
pub fn line_col(source: &str, offset: usize) -> (u32, u32) {
    let mut line = 1;
    let mut col = 1;
    for (i, c) in source.char_indices() {
        if i >= offset {
            break;
        }
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += c.len_utf16() as u32;
        }
    }
    (line, col)
}

/// Byte offset of a 1-based line and UTF-16 column; `None` when out of range.
pub fn offset_of(source: &str, line: u32, col: u32) -> Option<usize> {
    let mut cur_line = 1;
    let mut cur_col = 1;
    for (i, c) in source.char_indices() {
        if cur_line == line && cur_col == col {
            return Some(i);
        }
        if c == '\n' {
            if cur_line == line {
                return None;
            }
            cur_line += 1;
            cur_col = 1;
        } else {
            cur_col += c.len_utf16() as u32;
        }
    }
    (cur_line == line && cur_col == col).then_some(source.len())
}
