use callsight_js::{line_col, offset_of, parse, Ast, NodeKind};
use proptest::prelude::*;

/// Compact S-expression of kinds (and identifier names) for shape assertions.
fn sexpr(ast: &Ast, id: usize) -> String {
    let node = &ast.nodes[id];
    let mut out = String::from(node.kind.as_str());
    if let Some(name) = &node.name {
        out.push(':');
        out.push_str(name);
    }
    if !node.children.is_empty() {
        out.push('(');
        let parts: Vec<_> = node.children.iter().map(|&c| sexpr(ast, c)).collect();
        out.push_str(&parts.join(" "));
        out.push(')');
    }
    out
}

fn shape(src: &str) -> String {
    let ast = parse(src).unwrap_or_else(|e| panic!("{src:?}: {e}"));
    let program = &ast.nodes[0];
    program
        .children
        .iter()
        .map(|&c| sexpr(&ast, c))
        .collect::<Vec<_>>()
        .join(" ; ")
}

fn check_structure(ast: &Ast, src_len: usize) {
    for (i, node) in ast.nodes.iter().enumerate() {
        assert!(node.start <= node.end && node.end <= src_len, "span of {i}");
        let mut prev = i;
        for &c in &node.children {
            assert!(c > prev, "children must be preorder-increasing");
            assert_eq!(ast.nodes[c].parent, Some(i));
            assert!(
                ast.nodes[c].start >= node.start && ast.nodes[c].end <= node.end,
                "child span inside parent"
            );
            prev = c;
        }
    }
}

const CALLER: &str = r#"var lexer = Object.create(this.lexer);
if (lexer.showPosition) {
    errStr = 'Parse error on line ' + (yylineno+1)
        + ":\n" + lexer.showPosition() + "\nExpecting "
        + expected.join(', ') + ", got '"
        + (this.terminals_[symbol] || symbol) + "'";
}
"#;

const CALLEE: &str = r#"var lexer = (function (){
  var lexer = ({
    showPosition: function () {
      var pre = this.pastInput();
      var c = new Array(pre.length + 1).join("-");
      return pre + this.upcomingInput() + "\n" + c + "^";
    }
  });
  return lexer;
})();
parser.lexer = lexer;
"#;

#[test]
fn motivating_snippets_parse() {
    for src in [CALLER, CALLEE] {
        let ast = parse(src).unwrap();
        check_structure(&ast, src.len());
    }
    let ast = parse(CALLER).unwrap();
    let call = ast
        .nodes
        .iter()
        .position(|n| {
            n.kind == NodeKind::CallExpression && &CALLER[n.start..n.end] == "lexer.showPosition()"
        })
        .expect("showPosition call");
    assert_eq!(ast.nodes[call].args, Some(0));

    let ast = parse(CALLEE).unwrap();
    let prop = ast
        .nodes
        .iter()
        .position(|n| n.kind == NodeKind::Property)
        .unwrap();
    let key = ast.child(prop, "key").unwrap();
    let value = ast.child(prop, "value").unwrap();
    assert_eq!(ast.nodes[key].name.as_deref(), Some("showPosition"));
    assert_eq!(ast.nodes[value].kind, NodeKind::FunctionExpression);
    assert_eq!(ast.nodes[value].params, Some(0));
    assert!(CALLEE[ast.nodes[value].start..].starts_with("function ()"));
}

#[test]
fn empty_source() {
    let ast = parse("").unwrap();
    assert_eq!(ast.nodes.len(), 1);
    assert_eq!(ast.root().kind, NodeKind::Program);
    assert_eq!((ast.root().start, ast.root().end), (0, 0));
}

#[test]
fn declarations_and_counts() {
    let src = "function f(a, b, c) {} g(x); new K(1, ...r);";
    let ast = parse(src).unwrap();
    let f = &ast.nodes[ast
        .nodes
        .iter()
        .position(|n| n.kind == NodeKind::FunctionDeclaration)
        .unwrap()];
    assert_eq!(f.params, Some(3));
    assert_eq!(f.args, None);
    let calls: Vec<_> = ast
        .nodes
        .iter()
        .filter(|n| n.kind.is_call_site())
        .map(|n| n.args.unwrap())
        .collect();
    assert_eq!(calls, [1, 2]);
    assert_eq!(
        shape("function f(a, b = 1, ...rest) { return a }"),
        "FunctionDeclaration(Identifier:f Identifier:a AssignmentPattern(Identifier:b Literal) RestElement(Identifier:rest) BlockStatement(ReturnStatement(Identifier:a)))"
    );
}

#[test]
fn member_and_call_fields() {
    let ast = parse("o.m(1); o[k]();").unwrap();
    let members: Vec<_> = ast
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.kind == NodeKind::MemberExpression)
        .map(|(i, _)| i)
        .collect();
    assert!(ast.child(members[0], "property").is_some());
    assert!(ast.child(members[1], "index").is_some());
    assert!(ast.child(members[1], "property").is_none());
}

#[test]
fn arrows_and_parens() {
    assert_eq!(shape("x => x + 1"), "ExpressionStatement(ArrowFunctionExpression(Identifier:x BinaryExpression(Identifier:x Literal)))");
    assert_eq!(
        shape("(a, b) => { }"),
        "ExpressionStatement(ArrowFunctionExpression(Identifier:a Identifier:b BlockStatement))"
    );
    assert_eq!(shape("(a, b)"), "ExpressionStatement(ParenthesizedExpression(SequenceExpression(Identifier:a Identifier:b)))");
    assert_eq!(
        shape("async (x) => await x"),
        "ExpressionStatement(ArrowFunctionExpression(Identifier:x AwaitExpression(Identifier:x)))"
    );
    assert_eq!(
        shape("async(x)"),
        "ExpressionStatement(CallExpression(Identifier:async Identifier:x))"
    );
    assert_eq!(shape("({a, b: [c]} = {}) => c"), "ExpressionStatement(ArrowFunctionExpression(AssignmentPattern(ObjectPattern(Property(Identifier:a) Property(Identifier:b ArrayPattern(Identifier:c))) ObjectExpression) Identifier:c))");
    assert_eq!(
        shape("() => ({})"),
        "ExpressionStatement(ArrowFunctionExpression(ParenthesizedExpression(ObjectExpression)))"
    );
    let ast = parse("(a, b) => a").unwrap();
    let arrow = ast
        .nodes
        .iter()
        .find(|n| n.kind == NodeKind::ArrowFunctionExpression)
        .unwrap();
    assert_eq!(arrow.params, Some(2));
}

#[test]
fn destructuring_assignment_uses_patterns() {
    assert_eq!(
        shape("[a, b] = [b, a]"),
        "ExpressionStatement(AssignmentExpression(ArrayPattern(Identifier:a Identifier:b) ArrayExpression(Identifier:b Identifier:a)))"
    );
    assert_eq!(
        shape("({x, y = 2, ...z} = o)"),
        "ExpressionStatement(ParenthesizedExpression(AssignmentExpression(ObjectPattern(Property(Identifier:x) Property(Identifier:y AssignmentPattern(Literal)) RestElement(Identifier:z)) Identifier:o)))"
    );
    assert_eq!(
        shape("for (const [k, v] of m) {}"),
        "ForOfStatement(VariableDeclaration(VariableDeclarator(ArrayPattern(Identifier:k Identifier:v))) Identifier:m BlockStatement)"
    );
    assert_eq!(
        shape("for ([a] of m);"),
        "ForOfStatement(ArrayPattern(Identifier:a) Identifier:m EmptyStatement)"
    );
    assert_eq!(
        shape("for (var i = 0, n = a.length; i < n; i++) {}"),
        "ForStatement(VariableDeclaration(VariableDeclarator(Identifier:i Literal) VariableDeclarator(Identifier:n MemberExpression(Identifier:a Identifier:length))) BinaryExpression(Identifier:i Identifier:n) UpdateExpression(Identifier:i) BlockStatement)"
    );
    assert_eq!(shape("for (k in o) f(k)"), "ForInStatement(Identifier:k Identifier:o ExpressionStatement(CallExpression(Identifier:f Identifier:k)))");
    assert!(parse("1 = 2").is_err());
    assert!(parse("a + b = c").is_err());
}

#[test]
fn regex_versus_division() {
    assert_eq!(shape("a / b / c"), "ExpressionStatement(BinaryExpression(BinaryExpression(Identifier:a Identifier:b) Identifier:c))");
    assert_eq!(shape("x = /ab+c/gi.test(s)"), "ExpressionStatement(AssignmentExpression(Identifier:x CallExpression(MemberExpression(Literal Identifier:test) Identifier:s)))");
    assert_eq!(shape("if (x) /re/.exec(y)"), "IfStatement(Identifier:x ExpressionStatement(CallExpression(MemberExpression(Literal Identifier:exec) Identifier:y)))");
    assert_eq!(
        shape("f(/[/]/)"),
        "ExpressionStatement(CallExpression(Identifier:f Literal))"
    );
}

#[test]
fn templates() {
    assert_eq!(
        shape("`a${b}c${`d${e}`}`"),
        "ExpressionStatement(TemplateLiteral(TemplateElement Identifier:b TemplateElement TemplateLiteral(TemplateElement Identifier:e TemplateElement) TemplateElement))"
    );
    assert_eq!(shape("tag`x`"), "ExpressionStatement(TaggedTemplateExpression(Identifier:tag TemplateLiteral(TemplateElement)))");
    let ast = parse("`${a}`").unwrap();
    assert!(ast
        .nodes
        .iter()
        .all(|n| n.kind != NodeKind::TemplateElement || n.start < n.end));
}

#[test]
fn objects_and_classes() {
    assert_eq!(
        shape("o = { a, b: 1, c() {}, get d() {}, [e]: 2, 'f': 3, ...g, async *h() {} }"),
        "ExpressionStatement(AssignmentExpression(Identifier:o ObjectExpression(Property(Identifier:a) Property(Identifier:b Literal) Property(Identifier:c FunctionExpression(BlockStatement)) Property(Identifier:d FunctionExpression(BlockStatement)) Property(Identifier:e Literal) Property(Literal Literal) SpreadElement(Identifier:g) Property(Identifier:h FunctionExpression(BlockStatement)))))"
    );
    assert_eq!(
        shape("class A extends mix(B) { constructor(x) { super(x) } static s = 1; #p; get v() { return this.#p } static { init() } }"),
        "ClassDeclaration(Identifier:A CallExpression(Identifier:mix Identifier:B) ClassBody(MethodDefinition(Identifier:constructor FunctionExpression(Identifier:x BlockStatement(ExpressionStatement(CallExpression(Super Identifier:x))))) PropertyDefinition(Identifier:s Literal) PropertyDefinition(PrivateIdentifier:p) MethodDefinition(Identifier:v FunctionExpression(BlockStatement(ReturnStatement(MemberExpression(ThisExpression PrivateIdentifier:p))))) StaticBlock(ExpressionStatement(CallExpression(Identifier:init)))))"
    );
    // contextual words used as plain names
    assert_eq!(
        shape("o = { get: 1, set() {}, async: 2, static: 3 }")
            .matches("Property")
            .count(),
        4
    );
    assert!(parse("class C { static async *gen() {} get() {} set = 1 }").is_ok());
}

#[test]
fn statements_and_asi() {
    let src = "label: for (;;) { break label }\nlet x = 1\nconst y = 2\nx\n++y\nreturn\ndo x(); while (y)\nthrow e";
    let ast = parse(src).unwrap();
    check_structure(&ast, src.len());
    assert_eq!(
        shape("a\n(b)"),
        "ExpressionStatement(CallExpression(Identifier:a Identifier:b))"
    );
    assert_eq!(
        shape("return\nx"),
        "ReturnStatement ; ExpressionStatement(Identifier:x)"
    );
    assert_eq!(
        shape("switch (x) { case 1: a(); break; default: b() }"),
        "SwitchStatement(Identifier:x SwitchCase(Literal ExpressionStatement(CallExpression(Identifier:a)) BreakStatement) SwitchCase(ExpressionStatement(CallExpression(Identifier:b))))"
    );
    assert_eq!(
        shape("try { a() } catch { } finally { b() }"),
        "TryStatement(BlockStatement(ExpressionStatement(CallExpression(Identifier:a))) CatchClause(BlockStatement) BlockStatement(ExpressionStatement(CallExpression(Identifier:b))))"
    );
    assert!(parse("a b").is_err());
}

#[test]
fn modules() {
    let src = "import d, {a as b, c} from 'm'; import * as ns from \"n\"; export default function () {}\nexport const k = 1; export {k as kk}; export * from 'z'; import('q').then(f); import.meta.url";
    let ast = parse(src).unwrap();
    check_structure(&ast, src.len());
    let kinds: Vec<_> = ast
        .root()
        .children
        .iter()
        .map(|&c| ast.nodes[c].kind)
        .collect();
    assert_eq!(
        kinds,
        [
            NodeKind::ImportDeclaration,
            NodeKind::ImportDeclaration,
            NodeKind::ExportDefaultDeclaration,
            NodeKind::ExportNamedDeclaration,
            NodeKind::ExportNamedDeclaration,
            NodeKind::ExportAllDeclaration,
            NodeKind::ExpressionStatement,
            NodeKind::ExpressionStatement,
        ]
    );
}

#[test]
fn optional_chaining_and_operators() {
    assert_eq!(
        shape("a?.b?.(c)?.[d] ?? e"),
        "ExpressionStatement(LogicalExpression(ChainExpression(MemberExpression(CallExpression(MemberExpression(Identifier:a Identifier:b) Identifier:c) Identifier:d)) Identifier:e))"
    );
    assert_eq!(shape("a ** b ** c"), "ExpressionStatement(BinaryExpression(Identifier:a BinaryExpression(Identifier:b Identifier:c)))");
    assert_eq!(shape("a || b && c"), "ExpressionStatement(LogicalExpression(Identifier:a LogicalExpression(Identifier:b Identifier:c)))");
    assert_eq!(shape("x ||= y, z"), "ExpressionStatement(SequenceExpression(AssignmentExpression(Identifier:x Identifier:y) Identifier:z))");
    assert_eq!(
        shape("a ? b : c ? d : e")
            .matches("ConditionalExpression")
            .count(),
        2
    );
    assert_eq!(shape("typeof a === 'x' && !b"), "ExpressionStatement(LogicalExpression(BinaryExpression(UnaryExpression(Identifier:a) Literal) UnaryExpression(Identifier:b)))");
}

#[test]
fn generators_and_async() {
    assert_eq!(
        shape("function* g() { yield 1; yield* h(); const x = yield; }"),
        "FunctionDeclaration(Identifier:g BlockStatement(ExpressionStatement(YieldExpression(Literal)) ExpressionStatement(YieldExpression(CallExpression(Identifier:h))) VariableDeclaration(VariableDeclarator(Identifier:x YieldExpression))))"
    );
    assert_eq!(
        shape("var await = 1"),
        "VariableDeclaration(VariableDeclarator(Identifier:await Literal))"
    );
    assert_eq!(
        shape("async function f() { for await (const x of y) await x }")
            .matches("AwaitExpression")
            .count(),
        1
    );
}

#[test]
fn syntax_errors_report_offsets() {
    let err = parse("var x = ;").unwrap_err();
    assert_eq!(err.offset, 8);
    for bad in [
        "function (",
        "if (",
        "{",
        "a.",
        "`${`",
        "var 1a",
        "x = {a b}",
        "class { }",
        "let [a] ;",
    ] {
        assert!(parse(bad).is_err(), "{bad:?} should fail");
    }
}

#[test]
fn deep_nesting_is_rejected_not_overflowing() {
    let handle = std::thread::Builder::new()
        .stack_size(2 * 1024 * 1024)
        .spawn(|| {
            let depth = 2000;
            let src = format!("{}x{}", "(".repeat(depth), ")".repeat(depth));
            let err = parse(&src).unwrap_err();
            assert!(err.message.contains("nesting"));
            let ok = format!("{}x{}", "[".repeat(100), "]".repeat(100));
            parse(&ok).unwrap();
            let unary = format!("{}x", "!".repeat(5000));
            assert!(parse(&unary).is_err());
            let calls = format!("f{}", "(function(){ g(".repeat(30) + &")})".repeat(30));
            parse(&calls).unwrap();
        })
        .unwrap();
    handle.join().unwrap();
}

#[test]
fn line_col_round_trip() {
    let src = "a\nbé c\n  d";
    for (offset, _) in src.char_indices() {
        let (line, col) = line_col(src, offset);
        assert_eq!(offset_of(src, line, col), Some(offset));
    }
    assert_eq!(line_col(src, 0), (1, 1));
    assert_eq!(offset_of(src, 9, 1), None);
}

const FRAGMENTS: &[&str] = &[
    "a", "b", "(", ")", "{", "}", "[", "]", ",", ";", "=", "=>", "+", "/", "function", "f", "x",
    ".", "?.", "`", "${", "'s'", "1", "var", "let", "class", "new", "return", "if", "else", "\n",
    " ", "async", "await", "yield", "*", ":", "?", "...", "#p", "/*c*/", "//c\n", "in", "of",
    "for",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn never_panics_on_token_soup(parts in prop::collection::vec(prop::sample::select(FRAGMENTS), 0..40)) {
        let src = parts.concat();
        if let Ok(ast) = parse(&src) {
            check_structure(&ast, src.len());
        }
    }

    #[test]
    fn never_panics_on_arbitrary_text(src in "\\PC{0,64}") {
        let _ = parse(&src);
    }
}
