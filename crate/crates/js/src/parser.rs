use std::collections::HashSet;

use crate::lexer::{Lexer, Tok, Token};
use crate::{Ast, Node, NodeKind, ParseError};

type PResult<T> = Result<T, ParseError>;

/// Nesting limit for statements and expressions. Keeps recursion within the
/// default 2 MiB thread stack even for adversarial input.
const MAX_DEPTH: usize = 128;

const RESERVED: &[&str] = &[
    "break",
    "case",
    "catch",
    "class",
    "const",
    "continue",
    "debugger",
    "default",
    "delete",
    "do",
    "else",
    "enum",
    "export",
    "extends",
    "false",
    "finally",
    "for",
    "function",
    "if",
    "import",
    "in",
    "instanceof",
    "new",
    "null",
    "return",
    "super",
    "switch",
    "this",
    "throw",
    "true",
    "try",
    "typeof",
    "var",
    "void",
    "while",
    "with",
];

const ASSIGN_OPS: &[&str] = &[
    "=", "+=", "-=", "*=", "/=", "%=", "**=", "<<=", ">>=", ">>>=", "&=", "|=", "^=", "&&=", "||=",
    "??=",
];

struct Raw {
    kind: NodeKind,
    start: usize,
    end: usize,
    name: Option<String>,
    children: Vec<(&'static str, usize)>,
}

#[derive(Clone, Copy)]
struct FnContext {
    in_function: bool,
    in_async: bool,
    in_generator: bool,
}

struct Snapshot {
    lexer_pos: usize,
    tok: Token,
    prev_end: usize,
    nodes: usize,
}

pub(crate) struct Parser<'a> {
    src: &'a str,
    lexer: Lexer<'a>,
    tok: Token,
    prev_end: usize,
    nodes: Vec<Raw>,
    ctx: FnContext,
    no_in: bool,
    depth: usize,
    failed_arrows: HashSet<(usize, bool)>,
}

impl<'a> Parser<'a> {
    pub fn new(src: &'a str) -> PResult<Self> {
        let mut lexer = Lexer::new(src);
        let tok = lexer.next_token()?;
        Ok(Parser {
            src,
            lexer,
            tok,
            prev_end: 0,
            nodes: Vec::new(),
            ctx: FnContext {
                in_function: false,
                in_async: false,
                in_generator: false,
            },
            no_in: false,
            depth: 0,
            failed_arrows: HashSet::new(),
        })
    }

    pub fn parse_program(mut self) -> PResult<Ast> {
        let mut body = Vec::new();
        while self.tok.kind != Tok::Eof {
            body.push(("body", self.parse_statement()?));
        }
        let root = self.nodes.len();
        self.nodes.push(Raw {
            kind: NodeKind::Program,
            start: 0,
            end: self.src.len(),
            name: None,
            children: body,
        });
        Ok(self.into_ast(root))
    }

    fn into_ast(self, root: usize) -> Ast {
        let mut raws: Vec<Option<Raw>> = self.nodes.into_iter().map(Some).collect();
        let mut nodes: Vec<Node> = Vec::new();
        // (arena index, parent output index, field)
        let mut stack: Vec<(usize, Option<usize>, &'static str)> = vec![(root, None, "")];
        while let Some((idx, parent, field)) = stack.pop() {
            let raw = raws[idx].take().expect("arena node visited twice");
            let out = nodes.len();
            if let Some(p) = parent {
                nodes[p].children.push(out);
            }
            let count = |f: &str| raw.children.iter().filter(|(cf, _)| *cf == f).count() as u32;
            let params = raw.kind.is_function().then(|| count("params"));
            let args = raw.kind.is_call_site().then(|| count("arguments"));
            nodes.push(Node {
                kind: raw.kind,
                start: raw.start,
                end: raw.end,
                name: raw.name,
                field,
                parent,
                children: Vec::with_capacity(raw.children.len()),
                params,
                args,
            });
            for (f, child) in raw.children.into_iter().rev() {
                stack.push((child, Some(out), f));
            }
        }
        Ast { nodes }
    }

    // ----- token helpers -------------------------------------------------

    fn bump(&mut self) -> PResult<()> {
        self.prev_end = self.tok.end;
        self.tok = self.lexer.next_token()?;
        Ok(())
    }

    fn peek(&mut self) -> PResult<Token> {
        let pos = self.lexer.pos();
        let next = self.lexer.next_token();
        self.lexer.reset(pos);
        next
    }

    fn eat(&mut self, punct: &str) -> PResult<bool> {
        if self.tok.is(punct) {
            self.bump()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn expect(&mut self, punct: &str) -> PResult<()> {
        if self.eat(punct)? {
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected `{punct}`")))
        }
    }

    fn eat_word(&mut self, word: &str) -> PResult<bool> {
        if self.tok.is_word(word) {
            self.bump()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn expect_word(&mut self, word: &str) -> PResult<()> {
        if self.eat_word(word)? {
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected `{word}`")))
        }
    }

    fn unexpected(&self, what: &str) -> ParseError {
        let found = match self.tok.kind {
            Tok::Eof => "end of input".to_string(),
            _ => format!("`{}`", &self.src[self.tok.start..self.tok.end]),
        };
        ParseError::new(self.tok.start, format!("{what}, found {found}"))
    }

    fn consume_semicolon(&mut self) -> PResult<()> {
        if self.eat(";")? {
            return Ok(());
        }
        if self.tok.is("}") || self.tok.kind == Tok::Eof || self.tok.nl_before {
            return Ok(());
        }
        Err(self.unexpected("expected `;`"))
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            lexer_pos: self.lexer.pos(),
            tok: self.tok.clone(),
            prev_end: self.prev_end,
            nodes: self.nodes.len(),
        }
    }

    fn restore(&mut self, snap: Snapshot) {
        self.lexer.reset(snap.lexer_pos);
        self.tok = snap.tok;
        self.prev_end = snap.prev_end;
        self.nodes.truncate(snap.nodes);
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError::new(self.tok.start, "nesting too deep"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    // ----- node helpers --------------------------------------------------

    fn finish(
        &mut self,
        kind: NodeKind,
        start: usize,
        children: Vec<(&'static str, usize)>,
    ) -> usize {
        self.nodes.push(Raw {
            kind,
            start,
            end: self.prev_end,
            name: None,
            children,
        });
        self.nodes.len() - 1
    }

    fn leaf(&mut self, kind: NodeKind) -> PResult<usize> {
        let start = self.tok.start;
        self.bump()?;
        Ok(self.finish(kind, start, Vec::new()))
    }

    /// Consumes the current token as an Identifier (any word is accepted).
    fn ident_name(&mut self) -> PResult<usize> {
        if self.tok.kind != Tok::Ident {
            return Err(self.unexpected("expected identifier"));
        }
        let name = self.tok.text.clone();
        let id = self.leaf(NodeKind::Identifier)?;
        self.nodes[id].name = Some(name);
        Ok(id)
    }

    fn private_name(&mut self) -> PResult<usize> {
        let name = self.tok.text.clone();
        let id = self.leaf(NodeKind::PrivateIdentifier)?;
        self.nodes[id].name = Some(name);
        Ok(id)
    }

    fn is_reserved(&self) -> bool {
        self.tok.kind == Tok::Ident
            && !self.tok.escaped
            && RESERVED.contains(&self.tok.text.as_str())
    }

    fn is_binding_ident(&self) -> bool {
        self.tok.kind == Tok::Ident
            && !self.is_reserved()
            && !(self.ctx.in_generator && self.tok.is_word("yield"))
            && !(self.ctx.in_async && self.tok.is_word("await"))
    }

    /// Consumes a binding/reference identifier, rejecting reserved words.
    fn binding_ident(&mut self) -> PResult<usize> {
        if !self.is_binding_ident() {
            return Err(self.unexpected("expected identifier"));
        }
        self.ident_name()
    }

    fn with_in<T>(&mut self, f: impl FnOnce(&mut Self) -> PResult<T>) -> PResult<T> {
        let saved = std::mem::replace(&mut self.no_in, false);
        let out = f(self);
        self.no_in = saved;
        out
    }

    fn with_fn_context<T>(
        &mut self,
        is_async: bool,
        is_generator: bool,
        f: impl FnOnce(&mut Self) -> PResult<T>,
    ) -> PResult<T> {
        let saved_ctx = self.ctx;
        let saved_in = std::mem::replace(&mut self.no_in, false);
        self.ctx = FnContext {
            in_function: true,
            in_async: is_async,
            in_generator: is_generator,
        };
        let out = f(self);
        self.ctx = saved_ctx;
        self.no_in = saved_in;
        out
    }

    // ----- statements ----------------------------------------------------

    fn parse_statement(&mut self) -> PResult<usize> {
        self.enter()?;
        let out = self.parse_statement_inner();
        self.leave();
        out
    }

    fn parse_statement_inner(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        if self.tok.kind == Tok::Punct {
            if self.tok.is("{") {
                return self.parse_block();
            }
            if self.tok.is(";") {
                return self.leaf(NodeKind::EmptyStatement);
            }
            return self.parse_expression_statement();
        }
        if self.tok.kind != Tok::Ident || self.tok.escaped {
            return self.parse_expression_statement();
        }
        match self.tok.text.as_str() {
            "var" | "const" => {
                let decl = self.parse_var_declaration()?;
                self.consume_semicolon()?;
                self.nodes[decl].end = self.prev_end;
                Ok(decl)
            }
            "let" => {
                let next = self.peek()?;
                if next.kind == Tok::Ident || next.is("[") || next.is("{") {
                    let decl = self.parse_var_declaration()?;
                    self.consume_semicolon()?;
                    self.nodes[decl].end = self.prev_end;
                    Ok(decl)
                } else {
                    self.parse_expression_statement()
                }
            }
            "function" => self.parse_function(start, false, true, false),
            "async" => {
                let next = self.peek()?;
                if next.is_word("function") && !next.nl_before {
                    self.bump()?;
                    self.parse_function(start, true, true, false)
                } else {
                    self.parse_expression_statement()
                }
            }
            "class" => self.parse_class(true, false),
            "if" => {
                self.bump()?;
                let test = self.parse_paren_expression()?;
                let consequent = self.parse_statement()?;
                let mut children = vec![("test", test), ("consequent", consequent)];
                if self.eat_word("else")? {
                    children.push(("alternate", self.parse_statement()?));
                }
                Ok(self.finish(NodeKind::IfStatement, start, children))
            }
            "for" => self.parse_for(),
            "while" => {
                self.bump()?;
                let test = self.parse_paren_expression()?;
                let body = self.parse_statement()?;
                Ok(self.finish(
                    NodeKind::WhileStatement,
                    start,
                    vec![("test", test), ("body", body)],
                ))
            }
            "do" => {
                self.bump()?;
                let body = self.parse_statement()?;
                self.expect_word("while")?;
                let test = self.parse_paren_expression()?;
                self.eat(";")?;
                Ok(self.finish(
                    NodeKind::DoWhileStatement,
                    start,
                    vec![("body", body), ("test", test)],
                ))
            }
            "return" => {
                self.bump()?;
                let mut children = Vec::new();
                if !self.tok.is(";")
                    && !self.tok.is("}")
                    && self.tok.kind != Tok::Eof
                    && !self.tok.nl_before
                {
                    children.push(("argument", self.parse_expression()?));
                }
                self.consume_semicolon()?;
                Ok(self.finish(NodeKind::ReturnStatement, start, children))
            }
            "break" | "continue" => {
                let kind = if self.tok.text == "break" {
                    NodeKind::BreakStatement
                } else {
                    NodeKind::ContinueStatement
                };
                self.bump()?;
                let mut children = Vec::new();
                if self.tok.kind == Tok::Ident && !self.tok.nl_before && !self.is_reserved() {
                    children.push(("label", self.ident_name()?));
                }
                self.consume_semicolon()?;
                Ok(self.finish(kind, start, children))
            }
            "throw" => {
                self.bump()?;
                if self.tok.nl_before {
                    return Err(self.unexpected("newline after throw"));
                }
                let argument = self.parse_expression()?;
                self.consume_semicolon()?;
                Ok(self.finish(
                    NodeKind::ThrowStatement,
                    start,
                    vec![("argument", argument)],
                ))
            }
            "try" => self.parse_try(),
            "switch" => self.parse_switch(),
            "with" => {
                self.bump()?;
                let object = self.parse_paren_expression()?;
                let body = self.parse_statement()?;
                Ok(self.finish(
                    NodeKind::WithStatement,
                    start,
                    vec![("object", object), ("body", body)],
                ))
            }
            "debugger" => {
                self.bump()?;
                self.consume_semicolon()?;
                Ok(self.finish(NodeKind::DebuggerStatement, start, Vec::new()))
            }
            "import" => {
                let next = self.peek()?;
                if next.is("(") || next.is(".") {
                    self.parse_expression_statement()
                } else {
                    self.parse_import()
                }
            }
            "export" => self.parse_export(),
            _ => {
                if !self.is_reserved() && self.peek()?.is(":") {
                    let label = self.ident_name()?;
                    self.expect(":")?;
                    let body = self.parse_statement()?;
                    return Ok(self.finish(
                        NodeKind::LabeledStatement,
                        start,
                        vec![("label", label), ("body", body)],
                    ));
                }
                self.parse_expression_statement()
            }
        }
    }

    fn parse_expression_statement(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        let expr = self.parse_expression()?;
        self.consume_semicolon()?;
        Ok(self.finish(
            NodeKind::ExpressionStatement,
            start,
            vec![("expression", expr)],
        ))
    }

    fn parse_paren_expression(&mut self) -> PResult<usize> {
        self.expect("(")?;
        let expr = self.with_in(|p| p.parse_expression())?;
        self.expect(")")?;
        Ok(expr)
    }

    fn parse_block(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        self.expect("{")?;
        let mut body = Vec::new();
        while !self.tok.is("}") {
            if self.tok.kind == Tok::Eof {
                return Err(self.unexpected("expected `}`"));
            }
            body.push(("body", self.parse_statement()?));
        }
        self.bump()?;
        Ok(self.finish(NodeKind::BlockStatement, start, body))
    }

    /// `var`/`let`/`const` declarators, without the trailing semicolon.
    fn parse_var_declaration(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        self.bump()?;
        let mut declarators = Vec::new();
        loop {
            let dstart = self.tok.start;
            let id = self.parse_binding_target()?;
            let mut children = vec![("id", id)];
            if self.eat("=")? {
                children.push(("init", self.parse_assign()?));
            } else if self.nodes[id].kind != NodeKind::Identifier
                && !(self.no_in && (self.tok.is_word("of") || self.tok.is_word("in")))
            {
                return Err(self.unexpected("destructuring declaration needs an initializer"));
            }
            declarators.push((
                "declarations",
                self.finish(NodeKind::VariableDeclarator, dstart, children),
            ));
            if !self.eat(",")? {
                break;
            }
        }
        Ok(self.finish(NodeKind::VariableDeclaration, start, declarators))
    }

    fn parse_for(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        self.bump()?;
        let is_await = self.eat_word("await")?;
        self.expect("(")?;
        let mut init = None;
        if !self.tok.is(";") {
            let is_decl = self.tok.is_word("var")
                || self.tok.is_word("const")
                || (self.tok.is_word("let") && {
                    let next = self.peek()?;
                    next.kind == Tok::Ident || next.is("[") || next.is("{")
                });
            self.no_in = true;
            let parsed = if is_decl {
                self.parse_var_declaration()
            } else {
                self.parse_expression()
            };
            self.no_in = false;
            let parsed = parsed?;
            if self.tok.is_word("of") || self.tok.is_word("in") {
                let kind = if self.tok.is_word("of") {
                    NodeKind::ForOfStatement
                } else {
                    NodeKind::ForInStatement
                };
                if !is_decl {
                    self.to_pattern(parsed)?;
                }
                self.bump()?;
                let right = if kind == NodeKind::ForOfStatement {
                    self.with_in(|p| p.parse_assign())?
                } else {
                    self.with_in(|p| p.parse_expression())?
                };
                self.expect(")")?;
                let body = self.parse_statement()?;
                return Ok(self.finish(
                    kind,
                    start,
                    vec![("left", parsed), ("right", right), ("body", body)],
                ));
            }
            init = Some(parsed);
        }
        if is_await {
            return Err(self.unexpected("expected `of` in for-await"));
        }
        self.expect(";")?;
        let mut children = Vec::new();
        if let Some(init) = init {
            children.push(("init", init));
        }
        if !self.tok.is(";") {
            children.push(("test", self.with_in(|p| p.parse_expression())?));
        }
        self.expect(";")?;
        if !self.tok.is(")") {
            children.push(("update", self.with_in(|p| p.parse_expression())?));
        }
        self.expect(")")?;
        children.push(("body", self.parse_statement()?));
        Ok(self.finish(NodeKind::ForStatement, start, children))
    }

    fn parse_try(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        self.bump()?;
        let mut children = vec![("block", self.parse_block()?)];
        if self.tok.is_word("catch") {
            let cstart = self.tok.start;
            self.bump()?;
            let mut cchildren = Vec::new();
            if self.eat("(")? {
                cchildren.push(("param", self.parse_binding_target()?));
                self.expect(")")?;
            }
            cchildren.push(("body", self.parse_block()?));
            children.push((
                "handler",
                self.finish(NodeKind::CatchClause, cstart, cchildren),
            ));
        }
        if self.eat_word("finally")? {
            children.push(("finalizer", self.parse_block()?));
        }
        if children.len() == 1 {
            return Err(self.unexpected("expected `catch` or `finally`"));
        }
        Ok(self.finish(NodeKind::TryStatement, start, children))
    }

    fn parse_switch(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        self.bump()?;
        let discriminant = self.parse_paren_expression()?;
        let mut children = vec![("discriminant", discriminant)];
        self.expect("{")?;
        while !self.eat("}")? {
            let cstart = self.tok.start;
            let mut cchildren = Vec::new();
            if self.eat_word("case")? {
                cchildren.push(("test", self.with_in(|p| p.parse_expression())?));
            } else if !self.eat_word("default")? {
                return Err(self.unexpected("expected `case` or `default`"));
            }
            self.expect(":")?;
            while !self.tok.is("}") && !self.tok.is_word("case") && !self.tok.is_word("default") {
                if self.tok.kind == Tok::Eof {
                    return Err(self.unexpected("expected `}`"));
                }
                cchildren.push(("consequent", self.parse_statement()?));
            }
            children.push((
                "cases",
                self.finish(NodeKind::SwitchCase, cstart, cchildren),
            ));
        }
        Ok(self.finish(NodeKind::SwitchStatement, start, children))
    }

    fn parse_string_literal(&mut self) -> PResult<usize> {
        if self.tok.kind != Tok::Str {
            return Err(self.unexpected("expected string"));
        }
        self.leaf(NodeKind::Literal)
    }

    /// Identifier or string used as an import/export name.
    fn parse_module_export_name(&mut self) -> PResult<usize> {
        if self.tok.kind == Tok::Str {
            self.leaf(NodeKind::Literal)
        } else {
            self.ident_name()
        }
    }

    fn parse_import_attributes(
        &mut self,
        children: &mut Vec<(&'static str, usize)>,
    ) -> PResult<()> {
        if (self.tok.is_word("with") || self.tok.is_word("assert")) && !self.tok.nl_before {
            self.bump()?;
            children.push(("attributes", self.parse_object_literal()?));
        }
        Ok(())
    }

    fn parse_import(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        self.bump()?;
        let mut children = Vec::new();
        if self.tok.kind != Tok::Str {
            if self.tok.kind == Tok::Ident && !self.tok.is_word("from")
                || self.tok.is_word("from") && self.peek()?.is_word("from")
            {
                let sstart = self.tok.start;
                let local = self.binding_ident()?;
                children.push((
                    "specifiers",
                    self.finish(
                        NodeKind::ImportDefaultSpecifier,
                        sstart,
                        vec![("local", local)],
                    ),
                ));
                if !self.eat(",")? {
                    return self.finish_import(start, children);
                }
            }
            if self.tok.is("*") {
                let sstart = self.tok.start;
                self.bump()?;
                self.expect_word("as")?;
                let local = self.binding_ident()?;
                children.push((
                    "specifiers",
                    self.finish(
                        NodeKind::ImportNamespaceSpecifier,
                        sstart,
                        vec![("local", local)],
                    ),
                ));
            } else if self.eat("{")? {
                while !self.eat("}")? {
                    let sstart = self.tok.start;
                    let imported = self.parse_module_export_name()?;
                    let mut schildren = vec![("imported", imported)];
                    if self.eat_word("as")? {
                        schildren.push(("local", self.binding_ident()?));
                    }
                    children.push((
                        "specifiers",
                        self.finish(NodeKind::ImportSpecifier, sstart, schildren),
                    ));
                    if !self.eat(",")? {
                        self.expect("}")?;
                        break;
                    }
                }
            }
        }
        self.finish_import(start, children)
    }

    fn finish_import(
        &mut self,
        start: usize,
        mut children: Vec<(&'static str, usize)>,
    ) -> PResult<usize> {
        if !children.is_empty() {
            self.expect_word("from")?;
        }
        children.push(("source", self.parse_string_literal()?));
        self.parse_import_attributes(&mut children)?;
        self.consume_semicolon()?;
        Ok(self.finish(NodeKind::ImportDeclaration, start, children))
    }

    fn parse_export(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        self.bump()?;
        if self.eat("*")? {
            let mut children = Vec::new();
            if self.eat_word("as")? {
                children.push(("exported", self.parse_module_export_name()?));
            }
            self.expect_word("from")?;
            children.push(("source", self.parse_string_literal()?));
            self.parse_import_attributes(&mut children)?;
            self.consume_semicolon()?;
            return Ok(self.finish(NodeKind::ExportAllDeclaration, start, children));
        }
        if self.eat_word("default")? {
            let dstart = self.tok.start;
            let declaration = if self.tok.is_word("function") {
                self.parse_function(dstart, false, true, true)?
            } else if self.tok.is_word("async") && {
                let next = self.peek()?;
                next.is_word("function") && !next.nl_before
            } {
                self.bump()?;
                self.parse_function(dstart, true, true, true)?
            } else if self.tok.is_word("class") {
                self.parse_class(true, true)?
            } else {
                let expr = self.parse_assign()?;
                self.consume_semicolon()?;
                expr
            };
            return Ok(self.finish(
                NodeKind::ExportDefaultDeclaration,
                start,
                vec![("declaration", declaration)],
            ));
        }
        if self.eat("{")? {
            let mut children = Vec::new();
            while !self.eat("}")? {
                let sstart = self.tok.start;
                let local = self.parse_module_export_name()?;
                let mut schildren = vec![("local", local)];
                if self.eat_word("as")? {
                    schildren.push(("exported", self.parse_module_export_name()?));
                }
                children.push((
                    "specifiers",
                    self.finish(NodeKind::ExportSpecifier, sstart, schildren),
                ));
                if !self.eat(",")? {
                    self.expect("}")?;
                    break;
                }
            }
            if self.eat_word("from")? {
                children.push(("source", self.parse_string_literal()?));
                self.parse_import_attributes(&mut children)?;
            }
            self.consume_semicolon()?;
            return Ok(self.finish(NodeKind::ExportNamedDeclaration, start, children));
        }
        let declaration = self.parse_statement()?;
        match self.nodes[declaration].kind {
            NodeKind::VariableDeclaration
            | NodeKind::FunctionDeclaration
            | NodeKind::ClassDeclaration => {}
            _ => {
                return Err(ParseError::new(
                    start,
                    "expected declaration after `export`",
                ))
            }
        }
        Ok(self.finish(
            NodeKind::ExportNamedDeclaration,
            start,
            vec![("declaration", declaration)],
        ))
    }

    // ----- functions and classes ------------------------------------------

    /// Parses from the `function` keyword. `start` may precede it (`async`).
    fn parse_function(
        &mut self,
        start: usize,
        is_async: bool,
        is_statement: bool,
        anonymous_ok: bool,
    ) -> PResult<usize> {
        self.expect_word("function")?;
        let is_generator = self.eat("*")?;
        let mut children = Vec::new();
        if self.tok.kind == Tok::Ident && !self.tok.is("(") {
            // the name is bound in the enclosing scope for declarations
            let id = if is_statement {
                self.binding_ident()?
            } else {
                self.with_fn_context(is_async, is_generator, |p| p.binding_ident())?
            };
            children.push(("id", id));
        } else if is_statement && !anonymous_ok {
            return Err(self.unexpected("expected function name"));
        }
        self.with_fn_context(is_async, is_generator, |p| {
            p.parse_params(&mut children)?;
            children.push(("body", p.parse_function_body()?));
            Ok(())
        })?;
        let kind = if is_statement {
            NodeKind::FunctionDeclaration
        } else {
            NodeKind::FunctionExpression
        };
        Ok(self.finish(kind, start, children))
    }

    fn parse_function_body(&mut self) -> PResult<usize> {
        self.parse_block()
    }

    fn parse_params(&mut self, children: &mut Vec<(&'static str, usize)>) -> PResult<()> {
        self.expect("(")?;
        while !self.eat(")")? {
            let start = self.tok.start;
            if self.eat("...")? {
                let argument = self.parse_binding_target()?;
                children.push((
                    "params",
                    self.finish(NodeKind::RestElement, start, vec![("argument", argument)]),
                ));
                self.eat(",")?;
                self.expect(")")?;
                break;
            }
            children.push(("params", self.parse_binding_element()?));
            if !self.eat(",")? {
                self.expect(")")?;
                break;
            }
        }
        Ok(())
    }

    /// Method value: a FunctionExpression spanning from the parameter list.
    fn parse_method_value(&mut self, is_async: bool, is_generator: bool) -> PResult<usize> {
        let start = self.tok.start;
        let mut children = Vec::new();
        self.with_fn_context(is_async, is_generator, |p| {
            p.parse_params(&mut children)?;
            children.push(("body", p.parse_function_body()?));
            Ok(())
        })?;
        Ok(self.finish(NodeKind::FunctionExpression, start, children))
    }

    fn parse_class(&mut self, is_statement: bool, anonymous_ok: bool) -> PResult<usize> {
        let start = self.tok.start;
        self.expect_word("class")?;
        let mut children = Vec::new();
        if self.tok.kind == Tok::Ident && !self.tok.is_word("extends") {
            children.push(("id", self.binding_ident()?));
        } else if is_statement && !anonymous_ok {
            return Err(self.unexpected("expected class name"));
        }
        if self.eat_word("extends")? {
            let sstart = self.tok.start;
            let base = self.parse_lhs_expression_with_calls(sstart)?;
            children.push(("superClass", base));
        }
        let bstart = self.tok.start;
        self.expect("{")?;
        let mut members = Vec::new();
        while !self.eat("}")? {
            if self.eat(";")? {
                continue;
            }
            if self.tok.kind == Tok::Eof {
                return Err(self.unexpected("expected `}`"));
            }
            members.push(("body", self.parse_class_member()?));
        }
        children.push(("body", self.finish(NodeKind::ClassBody, bstart, members)));
        let kind = if is_statement {
            NodeKind::ClassDeclaration
        } else {
            NodeKind::ClassExpression
        };
        Ok(self.finish(kind, start, children))
    }

    /// True when the current word is a modifier rather than a member/property name.
    fn word_is_modifier(&mut self) -> PResult<bool> {
        let next = self.peek()?;
        if next.is("(")
            || next.is("=")
            || next.is(";")
            || next.is("}")
            || next.is(",")
            || next.is(":")
            || next.kind == Tok::Eof
        {
            return Ok(false);
        }
        if self.tok.is_word("async") && next.nl_before {
            return Ok(false);
        }
        Ok(true)
    }

    fn parse_class_member(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        if self.tok.is_word("static") {
            let next = self.peek()?;
            if next.is("{") {
                self.bump()?;
                let mut body = Vec::new();
                self.with_fn_context(false, false, |p| {
                    p.expect("{")?;
                    while !p.eat("}")? {
                        if p.tok.kind == Tok::Eof {
                            return Err(p.unexpected("expected `}`"));
                        }
                        body.push(("body", p.parse_statement()?));
                    }
                    Ok(())
                })?;
                return Ok(self.finish(NodeKind::StaticBlock, start, body));
            }
            if self.word_is_modifier()? {
                self.bump()?;
            }
        }
        let (mut is_async, mut is_generator, mut accessor) = (false, false, false);
        if self.tok.is_word("async") && self.word_is_modifier()? {
            self.bump()?;
            is_async = true;
        }
        if self.eat("*")? {
            is_generator = true;
        }
        if !is_async
            && !is_generator
            && (self.tok.is_word("get") || self.tok.is_word("set"))
            && self.word_is_modifier()?
        {
            self.bump()?;
            accessor = true;
        }
        let (key_field, key) = self.parse_property_key(true)?;
        if self.tok.is("(") {
            let value = self.parse_method_value(is_async, is_generator)?;
            return Ok(self.finish(
                NodeKind::MethodDefinition,
                start,
                vec![(key_field, key), ("value", value)],
            ));
        }
        if is_async || is_generator || accessor {
            return Err(self.unexpected("expected `(`"));
        }
        let mut children = vec![(key_field, key)];
        if self.eat("=")? {
            let value = self.with_fn_context(false, false, |p| p.parse_assign())?;
            children.push(("value", value));
        }
        self.consume_semicolon()?;
        Ok(self.finish(NodeKind::PropertyDefinition, start, children))
    }

    /// Returns the field label (`key` or `computed_key`) and the key node.
    fn parse_property_key(&mut self, allow_private: bool) -> PResult<(&'static str, usize)> {
        match self.tok.kind {
            Tok::Ident => Ok(("key", self.ident_name()?)),
            Tok::Str | Tok::Num => Ok(("key", self.leaf(NodeKind::Literal)?)),
            Tok::PrivateName if allow_private => Ok(("key", self.private_name()?)),
            Tok::Punct if self.tok.is("[") => {
                self.bump()?;
                let key = self.with_in(|p| p.parse_assign())?;
                self.expect("]")?;
                Ok(("computed_key", key))
            }
            _ => Err(self.unexpected("expected property name")),
        }
    }

    // ----- patterns --------------------------------------------------------

    fn parse_binding_element(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        let target = self.parse_binding_target()?;
        if self.eat("=")? {
            let right = self.with_in(|p| p.parse_assign())?;
            return Ok(self.finish(
                NodeKind::AssignmentPattern,
                start,
                vec![("left", target), ("right", right)],
            ));
        }
        Ok(target)
    }

    fn parse_binding_target(&mut self) -> PResult<usize> {
        self.enter()?;
        let out = self.parse_binding_target_inner();
        self.leave();
        out
    }

    fn parse_binding_target_inner(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        if self.eat("[")? {
            let mut elements = Vec::new();
            while !self.eat("]")? {
                if self.eat(",")? {
                    continue;
                }
                let estart = self.tok.start;
                if self.eat("...")? {
                    let argument = self.parse_binding_target()?;
                    elements.push((
                        "elements",
                        self.finish(NodeKind::RestElement, estart, vec![("argument", argument)]),
                    ));
                } else {
                    elements.push(("elements", self.parse_binding_element()?));
                }
                if !self.tok.is("]") {
                    self.expect(",")?;
                }
            }
            return Ok(self.finish(NodeKind::ArrayPattern, start, elements));
        }
        if self.eat("{")? {
            let mut properties = Vec::new();
            while !self.eat("}")? {
                let pstart = self.tok.start;
                if self.eat("...")? {
                    let argument = self.parse_binding_target()?;
                    properties.push((
                        "properties",
                        self.finish(NodeKind::RestElement, pstart, vec![("argument", argument)]),
                    ));
                } else {
                    let shorthand_ok = self.is_binding_ident();
                    let (key_field, key) = self.parse_property_key(false)?;
                    let mut children = vec![(key_field, key)];
                    if self.eat(":")? {
                        children.push(("value", self.parse_binding_element()?));
                    } else if !shorthand_ok || key_field != "key" {
                        return Err(self.unexpected("expected `:`"));
                    } else if self.tok.is("=") {
                        let dstart = self.tok.start;
                        self.bump()?;
                        let right = self.with_in(|p| p.parse_assign())?;
                        children.push((
                            "value",
                            self.finish(
                                NodeKind::AssignmentPattern,
                                dstart,
                                vec![("right", right)],
                            ),
                        ));
                    }
                    properties.push((
                        "properties",
                        self.finish(NodeKind::Property, pstart, children),
                    ));
                }
                if !self.tok.is("}") {
                    self.expect(",")?;
                }
            }
            return Ok(self.finish(NodeKind::ObjectPattern, start, properties));
        }
        self.binding_ident()
    }

    /// Reinterprets an expression parsed under the cover grammar as an
    /// assignment target.
    fn to_pattern(&mut self, id: usize) -> PResult<()> {
        let kind = self.nodes[id].kind;
        let new_kind = match kind {
            NodeKind::Identifier
            | NodeKind::MemberExpression
            | NodeKind::ObjectPattern
            | NodeKind::ArrayPattern
            | NodeKind::AssignmentPattern
            | NodeKind::RestElement => return Ok(()),
            NodeKind::ParenthesizedExpression => {
                let inner = self.nodes[id].children[0].1;
                return match self.nodes[inner].kind {
                    NodeKind::Identifier
                    | NodeKind::MemberExpression
                    | NodeKind::ParenthesizedExpression => self.to_pattern(inner),
                    _ => Err(ParseError::new(
                        self.nodes[id].start,
                        "invalid parenthesized assignment target",
                    )),
                };
            }
            NodeKind::ArrayExpression => NodeKind::ArrayPattern,
            NodeKind::ObjectExpression => NodeKind::ObjectPattern,
            NodeKind::AssignmentExpression => NodeKind::AssignmentPattern,
            NodeKind::SpreadElement => NodeKind::RestElement,
            _ => {
                return Err(ParseError::new(
                    self.nodes[id].start,
                    "invalid assignment target",
                ))
            }
        };
        self.nodes[id].kind = new_kind;
        let children = self.nodes[id].children.clone();
        for (field, child) in children {
            match (new_kind, field) {
                (NodeKind::AssignmentPattern, "right") => {}
                (NodeKind::ObjectPattern, "properties") => {
                    if self.nodes[child].kind == NodeKind::Property {
                        let inner = self.nodes[child].children.clone();
                        for (pf, value) in inner {
                            if pf == "value" {
                                self.to_pattern(value)?;
                            }
                        }
                    } else {
                        self.to_pattern(child)?;
                    }
                }
                _ => self.to_pattern(child)?,
            }
        }
        Ok(())
    }

    // ----- expressions -----------------------------------------------------

    fn parse_expression(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        let first = self.parse_assign()?;
        if !self.tok.is(",") {
            return Ok(first);
        }
        let mut children = vec![("expressions", first)];
        while self.eat(",")? {
            children.push(("expressions", self.parse_assign()?));
        }
        Ok(self.finish(NodeKind::SequenceExpression, start, children))
    }

    fn parse_assign(&mut self) -> PResult<usize> {
        self.enter()?;
        let out = self.parse_assign_inner();
        self.leave();
        out
    }

    fn parse_assign_inner(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        if self.ctx.in_generator && self.tok.is_word("yield") {
            return self.parse_yield();
        }
        if let Some(arrow) = self.try_arrow()? {
            return Ok(arrow);
        }
        let left = self.parse_conditional()?;
        if self.tok.kind == Tok::Punct && ASSIGN_OPS.contains(&self.tok.text.as_str()) {
            if self.tok.is("=") {
                self.to_pattern(left)?;
            } else if !matches!(
                self.nodes[left].kind,
                NodeKind::Identifier
                    | NodeKind::MemberExpression
                    | NodeKind::ParenthesizedExpression
            ) {
                return Err(self.unexpected("invalid compound assignment target"));
            }
            self.bump()?;
            let right = self.parse_assign()?;
            return Ok(self.finish(
                NodeKind::AssignmentExpression,
                start,
                vec![("left", left), ("right", right)],
            ));
        }
        Ok(left)
    }

    fn parse_yield(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        self.bump()?;
        let mut children = Vec::new();
        let delegate = !self.tok.nl_before && self.eat("*")?;
        let ends = self.tok.nl_before
            || self.tok.kind == Tok::Eof
            || [")", "]", "}", ",", ";", ":"]
                .iter()
                .any(|p| self.tok.is(p))
            || (self.tok.is_word("in") && self.no_in);
        if delegate || !ends {
            children.push(("argument", self.parse_assign()?));
        }
        Ok(self.finish(NodeKind::YieldExpression, start, children))
    }

    /// Attempts an arrow function at the current position; restores state and
    /// returns `None` when the tokens do not form one.
    fn try_arrow(&mut self) -> PResult<Option<usize>> {
        let start = self.tok.start;
        if self.tok.kind != Tok::Ident && !self.tok.is("(") {
            return Ok(None);
        }
        let is_async = self.tok.is_word("async");
        if self.tok.kind == Tok::Ident {
            let next = self.peek()?;
            if next.is("=>") && !next.nl_before && self.is_binding_ident() {
                let param = self.binding_ident()?;
                self.bump()?;
                return self
                    .parse_arrow_body(start, vec![("params", param)], false)
                    .map(Some);
            }
            if !is_async || next.nl_before {
                return Ok(None);
            }
            if next.kind == Tok::Ident {
                // async x => ...
                let snap = self.snapshot();
                self.bump()?;
                if self.is_binding_ident() {
                    let param = self.binding_ident()?;
                    if self.tok.is("=>") && !self.tok.nl_before {
                        self.bump()?;
                        return self
                            .parse_arrow_body(start, vec![("params", param)], true)
                            .map(Some);
                    }
                }
                self.restore(snap);
                return Ok(None);
            }
            if !next.is("(") {
                return Ok(None);
            }
        }
        let key = (self.tok.start, is_async);
        if self.failed_arrows.contains(&key) {
            return Ok(None);
        }
        let snap = self.snapshot();
        let saved_depth = self.depth;
        let attempt = (|| -> PResult<Option<Vec<(&'static str, usize)>>> {
            if is_async {
                self.bump()?;
            }
            let mut params = Vec::new();
            self.with_fn_context(is_async, false, |p| p.parse_params(&mut params))?;
            if self.tok.is("=>") && !self.tok.nl_before {
                self.bump()?;
                Ok(Some(params))
            } else {
                Ok(None)
            }
        })();
        match attempt {
            Ok(Some(params)) => self.parse_arrow_body(start, params, is_async).map(Some),
            _ => {
                self.depth = saved_depth;
                self.failed_arrows.insert(key);
                self.restore(snap);
                Ok(None)
            }
        }
    }

    fn parse_arrow_body(
        &mut self,
        start: usize,
        mut children: Vec<(&'static str, usize)>,
        is_async: bool,
    ) -> PResult<usize> {
        let no_in = self.no_in;
        let body = self.with_fn_context(is_async, false, |p| {
            if p.tok.is("{") {
                p.parse_function_body()
            } else {
                p.no_in = no_in;
                p.parse_assign()
            }
        })?;
        children.push(("body", body));
        Ok(self.finish(NodeKind::ArrowFunctionExpression, start, children))
    }

    fn parse_conditional(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        let test = self.parse_binary(1)?;
        if !self.eat("?")? {
            return Ok(test);
        }
        let consequent = self.with_in(|p| p.parse_assign())?;
        self.expect(":")?;
        let alternate = self.parse_assign()?;
        Ok(self.finish(
            NodeKind::ConditionalExpression,
            start,
            vec![
                ("test", test),
                ("consequent", consequent),
                ("alternate", alternate),
            ],
        ))
    }

    fn binary_op(&self) -> Option<(u8, NodeKind, bool)> {
        let tok = &self.tok;
        let text = tok.text.as_str();
        let (prec, kind) = match tok.kind {
            Tok::Punct => match text {
                "??" => (1, NodeKind::LogicalExpression),
                "||" => (2, NodeKind::LogicalExpression),
                "&&" => (3, NodeKind::LogicalExpression),
                "|" => (4, NodeKind::BinaryExpression),
                "^" => (5, NodeKind::BinaryExpression),
                "&" => (6, NodeKind::BinaryExpression),
                "==" | "!=" | "===" | "!==" => (7, NodeKind::BinaryExpression),
                "<" | ">" | "<=" | ">=" => (8, NodeKind::BinaryExpression),
                "<<" | ">>" | ">>>" => (9, NodeKind::BinaryExpression),
                "+" | "-" => (10, NodeKind::BinaryExpression),
                "*" | "/" | "%" => (11, NodeKind::BinaryExpression),
                "**" => (12, NodeKind::BinaryExpression),
                _ => return None,
            },
            Tok::Ident if !tok.escaped && text == "instanceof" => (8, NodeKind::BinaryExpression),
            Tok::Ident if !tok.escaped && text == "in" && !self.no_in => {
                (8, NodeKind::BinaryExpression)
            }
            _ => return None,
        };
        Some((prec, kind, text == "**"))
    }

    /// Precedence climbing; recursion depth is bounded by the number of
    /// precedence levels.
    fn parse_binary(&mut self, min_prec: u8) -> PResult<usize> {
        let start = self.tok.start;
        let mut left = if self.tok.kind == Tok::PrivateName {
            // `#x in obj`
            self.private_name()?
        } else {
            self.parse_unary()?
        };
        while let Some((prec, kind, right_assoc)) = self.binary_op() {
            if prec < min_prec {
                break;
            }
            self.bump()?;
            let next_min = if right_assoc { prec } else { prec + 1 };
            let right = self.parse_binary(next_min)?;
            left = self.finish(kind, start, vec![("left", left), ("right", right)]);
        }
        Ok(left)
    }

    fn parse_unary(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        let tok = &self.tok;
        let unary = match tok.kind {
            Tok::Punct => matches!(tok.text.as_str(), "!" | "~" | "+" | "-"),
            Tok::Ident => !tok.escaped && matches!(tok.text.as_str(), "typeof" | "void" | "delete"),
            _ => false,
        };
        if unary {
            self.bump()?;
            let argument = self.parse_unary_operand()?;
            return Ok(self.finish(
                NodeKind::UnaryExpression,
                start,
                vec![("argument", argument)],
            ));
        }
        if self.tok.is("++") || self.tok.is("--") {
            self.bump()?;
            let argument = self.parse_unary_operand()?;
            return Ok(self.finish(
                NodeKind::UpdateExpression,
                start,
                vec![("argument", argument)],
            ));
        }
        if self.tok.is_word("await")
            && (self.ctx.in_async || (!self.ctx.in_function && self.await_starts_expression()?))
        {
            self.bump()?;
            let argument = self.parse_unary_operand()?;
            return Ok(self.finish(
                NodeKind::AwaitExpression,
                start,
                vec![("argument", argument)],
            ));
        }
        let expr = self.parse_lhs_expression_with_calls(start)?;
        if (self.tok.is("++") || self.tok.is("--")) && !self.tok.nl_before {
            self.bump()?;
            return Ok(self.finish(NodeKind::UpdateExpression, start, vec![("argument", expr)]));
        }
        Ok(expr)
    }

    fn parse_unary_operand(&mut self) -> PResult<usize> {
        self.enter()?;
        let out = self.parse_unary();
        self.leave();
        out
    }

    /// Top-level `await` is only treated as an operator when an operand follows
    /// on the same line.
    fn await_starts_expression(&mut self) -> PResult<bool> {
        let next = self.peek()?;
        if next.nl_before {
            return Ok(false);
        }
        Ok(match next.kind {
            Tok::Ident => !matches!(next.text.as_str(), "in" | "instanceof" | "of"),
            Tok::Num | Tok::Str | Tok::Template { .. } => true,
            Tok::Punct => matches!(next.text.as_str(), "(" | "[" | "{" | "!" | "~"),
            _ => false,
        })
    }

    fn parse_lhs_expression_with_calls(&mut self, start: usize) -> PResult<usize> {
        let base = if self.tok.is_word("new") {
            self.parse_new()?
        } else if self.tok.is_word("super") {
            self.leaf(NodeKind::Super)?
        } else {
            self.parse_primary()?
        };
        self.parse_suffixes(base, start, true)
    }

    fn parse_new(&mut self) -> PResult<usize> {
        self.enter()?;
        let out = self.parse_new_inner();
        self.leave();
        out
    }

    fn parse_new_inner(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        self.bump()?;
        if self.eat(".")? {
            if !self.tok.is_word("target") {
                return Err(self.unexpected("expected `target`"));
            }
            self.bump()?;
            return Ok(self.finish(NodeKind::MetaProperty, start, Vec::new()));
        }
        let cstart = self.tok.start;
        let callee = if self.tok.is_word("new") {
            self.parse_new()?
        } else {
            self.parse_primary()?
        };
        let callee = self.parse_suffixes(callee, cstart, false)?;
        let mut children = vec![("callee", callee)];
        if self.tok.is("(") {
            self.parse_arguments(&mut children)?;
        }
        Ok(self.finish(NodeKind::NewExpression, start, children))
    }

    fn parse_arguments(&mut self, children: &mut Vec<(&'static str, usize)>) -> PResult<()> {
        self.expect("(")?;
        self.with_in(|p| {
            while !p.eat(")")? {
                let start = p.tok.start;
                if p.eat("...")? {
                    let argument = p.parse_assign()?;
                    children.push((
                        "arguments",
                        p.finish(NodeKind::SpreadElement, start, vec![("argument", argument)]),
                    ));
                } else {
                    children.push(("arguments", p.parse_assign()?));
                }
                if !p.eat(",")? {
                    p.expect(")")?;
                    break;
                }
            }
            Ok(())
        })
    }

    fn parse_suffixes(
        &mut self,
        mut expr: usize,
        start: usize,
        allow_call: bool,
    ) -> PResult<usize> {
        let mut optional_chain = false;
        loop {
            if self.eat(".")? {
                let property = if self.tok.kind == Tok::PrivateName {
                    self.private_name()?
                } else {
                    self.ident_name()?
                };
                expr = self.finish(
                    NodeKind::MemberExpression,
                    start,
                    vec![("object", expr), ("property", property)],
                );
            } else if self.tok.is("?.") {
                if !allow_call {
                    return Err(self.unexpected("optional chain not allowed here"));
                }
                optional_chain = true;
                self.bump()?;
                if self.tok.is("(") {
                    let mut children = vec![("callee", expr)];
                    self.parse_arguments(&mut children)?;
                    expr = self.finish(NodeKind::CallExpression, start, children);
                } else if self.eat("[")? {
                    let index = self.with_in(|p| p.parse_expression())?;
                    self.expect("]")?;
                    expr = self.finish(
                        NodeKind::MemberExpression,
                        start,
                        vec![("object", expr), ("index", index)],
                    );
                } else {
                    let property = if self.tok.kind == Tok::PrivateName {
                        self.private_name()?
                    } else {
                        self.ident_name()?
                    };
                    expr = self.finish(
                        NodeKind::MemberExpression,
                        start,
                        vec![("object", expr), ("property", property)],
                    );
                }
            } else if self.eat("[")? {
                let index = self.with_in(|p| p.parse_expression())?;
                self.expect("]")?;
                expr = self.finish(
                    NodeKind::MemberExpression,
                    start,
                    vec![("object", expr), ("index", index)],
                );
            } else if allow_call && self.tok.is("(") {
                let mut children = vec![("callee", expr)];
                self.parse_arguments(&mut children)?;
                expr = self.finish(NodeKind::CallExpression, start, children);
            } else if matches!(self.tok.kind, Tok::Template { .. }) {
                if optional_chain {
                    return Err(self.unexpected("tagged template in optional chain"));
                }
                let quasi = self.parse_template()?;
                expr = self.finish(
                    NodeKind::TaggedTemplateExpression,
                    start,
                    vec![("tag", expr), ("quasi", quasi)],
                );
            } else {
                break;
            }
        }
        if optional_chain {
            expr = self.finish(NodeKind::ChainExpression, start, vec![("expression", expr)]);
        }
        Ok(expr)
    }

    fn parse_template(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        let mut children = Vec::new();
        loop {
            let Tok::Template { tail } = self.tok.kind else {
                return Err(self.unexpected("expected template continuation"));
            };
            children.push(("quasis", self.leaf_no_bump(NodeKind::TemplateElement)));
            if tail {
                self.bump()?;
                break;
            }
            self.bump()?;
            children.push(("expressions", self.with_in(|p| p.parse_expression())?));
            if !self.tok.is("}") {
                return Err(self.unexpected("expected `}` in template"));
            }
            self.tok = self
                .lexer
                .template_continuation(self.tok.start, self.tok.nl_before)?;
        }
        Ok(self.finish(NodeKind::TemplateLiteral, start, children))
    }

    fn leaf_no_bump(&mut self, kind: NodeKind) -> usize {
        self.nodes.push(Raw {
            kind,
            start: self.tok.start,
            end: self.tok.end,
            name: None,
            children: Vec::new(),
        });
        self.nodes.len() - 1
    }

    fn parse_primary(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        match self.tok.kind {
            Tok::Num | Tok::Str => self.leaf(NodeKind::Literal),
            Tok::Template { .. } => self.parse_template(),
            Tok::PrivateName => self.private_name(),
            Tok::Regex => self.leaf(NodeKind::Literal),
            Tok::Eof => Err(self.unexpected("expected expression")),
            Tok::Punct => match self.tok.text.as_str() {
                "/" | "/=" => {
                    self.tok = self.lexer.regex(self.tok.start, self.tok.nl_before)?;
                    self.leaf(NodeKind::Literal)
                }
                "(" => {
                    self.bump()?;
                    let inner = self.with_in(|p| p.parse_expression())?;
                    self.expect(")")?;
                    Ok(self.finish(
                        NodeKind::ParenthesizedExpression,
                        start,
                        vec![("expression", inner)],
                    ))
                }
                "[" => self.parse_array_literal(),
                "{" => self.parse_object_literal(),
                _ => Err(self.unexpected("expected expression")),
            },
            Tok::Ident => {
                if self.tok.escaped {
                    return self.binding_ident();
                }
                match self.tok.text.as_str() {
                    "this" => self.leaf(NodeKind::ThisExpression),
                    "null" | "true" | "false" => self.leaf(NodeKind::Literal),
                    "function" => self.parse_function(start, false, false, true),
                    "class" => self.parse_class(false, true),
                    "super" => self.leaf(NodeKind::Super),
                    "new" => self.parse_new(),
                    "import" => {
                        self.bump()?;
                        if self.eat(".")? {
                            if !self.tok.is_word("meta") {
                                return Err(self.unexpected("expected `meta`"));
                            }
                            self.bump()?;
                            return Ok(self.finish(NodeKind::MetaProperty, start, Vec::new()));
                        }
                        self.expect("(")?;
                        let mut children = Vec::new();
                        self.with_in(|p| {
                            children.push(("source", p.parse_assign()?));
                            if p.eat(",")? && !p.tok.is(")") {
                                children.push(("options", p.parse_assign()?));
                                p.eat(",")?;
                            }
                            Ok(())
                        })?;
                        self.expect(")")?;
                        Ok(self.finish(NodeKind::ImportExpression, start, children))
                    }
                    "async" => {
                        let next = self.peek()?;
                        if next.is_word("function") && !next.nl_before {
                            self.bump()?;
                            self.parse_function(start, true, false, true)
                        } else {
                            self.ident_name()
                        }
                    }
                    _ => self.binding_ident(),
                }
            }
        }
    }

    fn parse_array_literal(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        self.expect("[")?;
        let mut elements = Vec::new();
        self.with_in(|p| {
            while !p.eat("]")? {
                if p.eat(",")? {
                    continue;
                }
                let estart = p.tok.start;
                if p.eat("...")? {
                    let argument = p.parse_assign()?;
                    elements.push((
                        "elements",
                        p.finish(
                            NodeKind::SpreadElement,
                            estart,
                            vec![("argument", argument)],
                        ),
                    ));
                } else {
                    elements.push(("elements", p.parse_assign()?));
                }
                if !p.tok.is("]") {
                    p.expect(",")?;
                }
            }
            Ok(())
        })?;
        Ok(self.finish(NodeKind::ArrayExpression, start, elements))
    }

    fn parse_object_literal(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        self.expect("{")?;
        let mut properties = Vec::new();
        self.with_in(|p| {
            while !p.eat("}")? {
                properties.push(("properties", p.parse_object_member()?));
                if !p.tok.is("}") {
                    p.expect(",")?;
                }
            }
            Ok(())
        })?;
        Ok(self.finish(NodeKind::ObjectExpression, start, properties))
    }

    fn parse_object_member(&mut self) -> PResult<usize> {
        let start = self.tok.start;
        if self.eat("...")? {
            let argument = self.parse_assign()?;
            return Ok(self.finish(NodeKind::SpreadElement, start, vec![("argument", argument)]));
        }
        let (mut is_async, mut is_generator, mut accessor) = (false, false, false);
        if self.tok.is_word("async") && self.word_is_modifier()? {
            self.bump()?;
            is_async = true;
        }
        if self.eat("*")? {
            is_generator = true;
        }
        if !is_async
            && !is_generator
            && (self.tok.is_word("get") || self.tok.is_word("set"))
            && self.word_is_modifier()?
        {
            self.bump()?;
            accessor = true;
        }
        let shorthand_ok = self.tok.kind == Tok::Ident;
        let (key_field, key) = self.parse_property_key(false)?;
        if self.tok.is("(") {
            let value = self.parse_method_value(is_async, is_generator)?;
            return Ok(self.finish(
                NodeKind::Property,
                start,
                vec![(key_field, key), ("value", value)],
            ));
        }
        if is_async || is_generator || accessor {
            return Err(self.unexpected("expected `(`"));
        }
        if self.eat(":")? {
            let value = self.parse_assign()?;
            return Ok(self.finish(
                NodeKind::Property,
                start,
                vec![(key_field, key), ("value", value)],
            ));
        }
        if !shorthand_ok || key_field != "key" {
            return Err(self.unexpected("expected `:`"));
        }
        let mut children = vec![(key_field, key)];
        if self.tok.is("=") {
            // cover-grammar default; only valid once converted to a pattern
            let dstart = self.tok.start;
            self.bump()?;
            let right = self.parse_assign()?;
            children.push((
                "value",
                self.finish(NodeKind::AssignmentPattern, dstart, vec![("right", right)]),
            ));
        }
        Ok(self.finish(NodeKind::Property, start, children))
    }
}
