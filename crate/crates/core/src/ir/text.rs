//! Parenthesized prefix text format for guest programs.
//!
//! ```text
//! (program (init setup)
//!   (fn zero 0 0 (return (const 0))))
//! ```
//!
//! Site ids are not written; they are reassigned in preorder on parse.

use std::fmt::Write as _;

use thiserror::Error;

use super::{BinOp, Expr, FuncId, Function, Program, SiteId, SwitchArm};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown function `{name}` at line {line}, column {col}")]
    UnknownFunction { name: String, line: usize, col: usize },
    #[error("arity mismatch at line {line}, column {col}: `{name}` takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: u32,
        found: usize,
        line: usize,
        col: usize,
    },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::Syntax { line, .. }
            | ParseError::UnknownFunction { line, .. }
            | ParseError::Arity { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    col: usize,
}

#[derive(Debug)]
enum Sx {
    Atom(String, Pos),
    Str(String, Pos),
    List(Vec<Sx>, Pos),
}

impl Sx {
    fn pos(&self) -> Pos {
        match self {
            Sx::Atom(_, p) | Sx::Str(_, p) | Sx::List(_, p) => *p,
        }
    }
}

fn syntax(pos: Pos, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    }
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    /// Reads all top-level forms.
    fn read_all(&mut self) -> Result<Vec<Sx>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            match self.chars.peek() {
                None => return Ok(out),
                Some(')') => return Err(syntax(self.pos(), "unexpected `)`")),
                Some(_) => out.push(self.read()?),
            }
        }
    }

    fn read(&mut self) -> Result<Sx, ParseError> {
        self.skip_ws();
        let start = self.pos();
        match self.chars.peek().copied() {
            None => Err(syntax(start, "unexpected end of input")),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.chars.peek() {
                        None => {
                            return Err(syntax(
                                start,
                                "unbalanced parenthesis: list is never closed",
                            ))
                        }
                        Some(')') => {
                            self.bump();
                            return Ok(Sx::List(items, start));
                        }
                        Some(_) => items.push(self.read()?),
                    }
                }
            }
            Some('"') => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(syntax(start, "unterminated string")),
                        Some('"') => return Ok(Sx::Str(s, start)),
                        Some('\\') => match self.bump() {
                            Some(c) => s.push(c),
                            None => return Err(syntax(start, "unterminated string")),
                        },
                        Some(c) => s.push(c),
                    }
                }
            }
            Some(_) => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == '"' || c == ';' {
                        break;
                    }
                    s.push(c);
                    self.bump();
                }
                Ok(Sx::Atom(s, start))
            }
        }
    }
}

struct Header<'s> {
    name: String,
    params: u32,
    locals: u32,
    body: &'s Sx,
    pos: Pos,
}

fn is_id_token(s: &str) -> Option<u32> {
    s.strip_prefix("id").and_then(|d| {
        if !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()) {
            d.parse().ok()
        } else {
            None
        }
    })
}

fn count_of(sx: &Sx, what: &str) -> Result<u32, ParseError> {
    match sx {
        Sx::Atom(a, p) => a
            .parse::<u32>()
            .map_err(|_| syntax(*p, format!("expected {what}, found `{a}`"))),
        other => Err(syntax(other.pos(), format!("expected {what}"))),
    }
}

fn name_of(sx: &Sx) -> Result<String, ParseError> {
    match sx {
        Sx::Atom(a, p) => {
            if a.parse::<i64>().is_ok() {
                Err(syntax(*p, format!("expected a name, found number `{a}`")))
            } else {
                Ok(a.clone())
            }
        }
        Sx::Str(s, _) => Ok(s.clone()),
        Sx::List(_, p) => Err(syntax(*p, "expected a name")),
    }
}

fn head(items: &[Sx]) -> Option<&str> {
    match items.first() {
        Some(Sx::Atom(a, _)) => Some(a.as_str()),
        _ => None,
    }
}

fn parse_header<'s>(sx: &'s Sx, index: usize) -> Result<Header<'s>, ParseError> {
    let Sx::List(items, pos) = sx else {
        return Err(syntax(sx.pos(), "expected `(fn ...)`"));
    };
    if head(items) != Some("fn") {
        return Err(syntax(*pos, "expected `(fn ...)`"));
    }
    let mut rest = &items[1..];
    // Optional explicit `idN` token, recognised only when followed by a name.
    if rest.len() == 5 {
        if let Sx::Atom(a, p) = &rest[0] {
            if let Some(n) = is_id_token(a) {
                if n as usize != index {
                    return Err(syntax(
                        *p,
                        format!("function id {a} does not match its position {index}"),
                    ));
                }
                rest = &rest[1..];
            }
        }
    }
    if rest.len() != 4 {
        return Err(syntax(
            *pos,
            "expected `(fn <name> <paramCount> <localCount> <expr>)`",
        ));
    }
    Ok(Header {
        name: name_of(&rest[0])?,
        params: count_of(&rest[1], "parameter count")?,
        locals: count_of(&rest[2], "local count")?,
        body: &rest[3],
        pos: *pos,
    })
}

struct Ctx<'h> {
    names: Vec<(&'h str, u32)>,
}

impl Ctx<'_> {
    fn resolve(&self, sx: &Sx) -> Result<(FuncId, u32), ParseError> {
        let name = name_of(sx)?;
        let p = sx.pos();
        self.names
            .iter()
            .position(|(n, _)| *n == name)
            .map(|i| (FuncId(i as u32), self.names[i].1))
            .ok_or(ParseError::UnknownFunction {
                name,
                line: p.line,
                col: p.col,
            })
    }

    fn int(&self, sx: &Sx) -> Result<i64, ParseError> {
        match sx {
            Sx::Atom(a, p) => a
                .parse::<i64>()
                .map_err(|_| syntax(*p, format!("expected integer, found `{a}`"))),
            other => Err(syntax(other.pos(), "expected integer")),
        }
    }

    fn expr(&self, sx: &Sx) -> Result<Expr, ParseError> {
        let (items, pos) = match sx {
            Sx::List(items, pos) => (items, *pos),
            other => return Err(syntax(other.pos(), "expected an expression list")),
        };
        let Some(op) = head(items) else {
            return Err(syntax(pos, "expected an operator"));
        };
        let args = &items[1..];
        let arity = |n: usize| -> Result<(), ParseError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(syntax(
                    pos,
                    format!("`{op}` expects {n} operand(s), got {}", args.len()),
                ))
            }
        };
        let sub = |i: usize| -> Result<Box<Expr>, ParseError> { Ok(Box::new(self.expr(&args[i])?)) };
        let e = match op {
            "const" => {
                arity(1)?;
                Expr::ConstInt(self.int(&args[0])?)
            }
            "get" => {
                arity(1)?;
                Expr::LocalGet(count_of(&args[0], "slot")?)
            }
            "set" => {
                arity(2)?;
                Expr::LocalSet(count_of(&args[0], "slot")?, sub(1)?)
            }
            "len" => {
                arity(1)?;
                Expr::ArrayLen(sub(0)?)
            }
            "aget" => {
                arity(2)?;
                Expr::ArrayGet(sub(0)?, sub(1)?)
            }
            "aset" => {
                arity(3)?;
                Expr::ArraySet(sub(0)?, sub(1)?, sub(2)?)
            }
            "newarr" => {
                arity(1)?;
                Expr::ArrayNew(sub(0)?)
            }
            "fref" => {
                arity(1)?;
                Expr::FuncRef(self.resolve(&args[0])?.0)
            }
            "seq" => Expr::Seq(args.iter().map(|a| self.expr(a)).collect::<Result<_, _>>()?),
            "if" => {
                arity(3)?;
                Expr::If {
                    site: SiteId(0),
                    cond: sub(0)?,
                    then_branch: sub(1)?,
                    else_branch: sub(2)?,
                }
            }
            "loop" => {
                arity(2)?;
                Expr::Loop {
                    site: SiteId(0),
                    cond: sub(0)?,
                    body: sub(1)?,
                }
            }
            "return" => {
                arity(1)?;
                Expr::Return(sub(0)?)
            }
            "call" => {
                if args.is_empty() {
                    return Err(syntax(pos, "`call` expects a function name"));
                }
                let (callee, params) = self.resolve(&args[0])?;
                let actual = &args[1..];
                if actual.len() != params as usize {
                    return Err(ParseError::Arity {
                        name: name_of(&args[0])?,
                        expected: params,
                        found: actual.len(),
                        line: pos.line,
                        col: pos.col,
                    });
                }
                Expr::CallDirect {
                    site: SiteId(0),
                    callee,
                    args: actual.iter().map(|a| self.expr(a)).collect::<Result<_, _>>()?,
                }
            }
            "calli" => {
                if args.is_empty() {
                    return Err(syntax(pos, "`calli` expects a callee expression"));
                }
                Expr::CallIndirect {
                    site: SiteId(0),
                    callee: sub(0)?,
                    args: args[1..].iter().map(|a| self.expr(a)).collect::<Result<_, _>>()?,
                }
            }
            "switch" => self.switch(args, pos)?,
            other => match BinOp::from_mnemonic(other) {
                Some(b) => {
                    arity(2)?;
                    Expr::BinOp(b, sub(0)?, sub(1)?)
                }
                None => return Err(syntax(pos, format!("unknown operator `{other}`"))),
            },
        };
        Ok(e)
    }

    fn switch(&self, args: &[Sx], pos: Pos) -> Result<Expr, ParseError> {
        if args.is_empty() {
            return Err(syntax(pos, "`switch` expects a scrutinee"));
        }
        let scrutinee = Box::new(self.expr(&args[0])?);
        let mut arms = Vec::new();
        let mut default = None;
        let mut fallthrough = false;
        for a in &args[1..] {
            match a {
                Sx::Atom(s, _) if s == ":fallthrough" => fallthrough = true,
                Sx::List(items, p) if head(items) == Some("case") => {
                    if default.is_some() {
                        return Err(syntax(*p, "`case` after `default`"));
                    }
                    if items.len() != 3 {
                        return Err(syntax(*p, "expected `(case N <expr>)`"));
                    }
                    arms.push(SwitchArm {
                        value: self.int(&items[1])?,
                        body: self.expr(&items[2])?,
                    });
                }
                Sx::List(items, p) if head(items) == Some("default") => {
                    if items.len() != 2 {
                        return Err(syntax(*p, "expected `(default <expr>)`"));
                    }
                    if default.is_some() {
                        return Err(syntax(*p, "duplicate `default`"));
                    }
                    default = Some(Box::new(self.expr(&items[1])?));
                }
                other => return Err(syntax(other.pos(), "expected `(case ...)`, `(default ...)` or `:fallthrough`")),
            }
        }
        let default = default.ok_or_else(|| syntax(pos, "`switch` requires a `(default <expr>)` arm"))?;
        Ok(Expr::Switch {
            site: SiteId(0),
            scrutinee,
            arms,
            fallthrough,
            default,
        })
    }
}

/// Parses a program. Accepts either a single `(program ...)` form or a bare
/// sequence of `(fn ...)` forms.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let forms = Reader::new(text).read_all()?;
    let (init_sx, fn_forms): (Option<&Sx>, Vec<&Sx>) = match forms.as_slice() {
        [Sx::List(items, _)] if head(items) == Some("program") => {
            let mut init = None;
            let mut fns = Vec::new();
            for (i, it) in items[1..].iter().enumerate() {
                match it {
                    Sx::List(sub, p) if head(sub) == Some("init") => {
                        if i != 0 {
                            return Err(syntax(*p, "`(init ...)` must come first"));
                        }
                        if sub.len() > 2 {
                            return Err(syntax(*p, "expected `(init <name>?)`"));
                        }
                        init = sub.get(1);
                    }
                    other => fns.push(other),
                }
            }
            (init, fns)
        }
        _ => (None, forms.iter().collect()),
    };

    let headers = fn_forms
        .iter()
        .enumerate()
        .map(|(i, sx)| parse_header(sx, i))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, h) in headers.iter().enumerate() {
        if headers[..i].iter().any(|o| o.name == h.name) {
            return Err(syntax(h.pos, format!("duplicate function name `{}`", h.name)));
        }
    }
    let ctx = Ctx {
        names: headers.iter().map(|h| (h.name.as_str(), h.params)).collect(),
    };
    let init_function = init_sx.map(|s| ctx.resolve(s).map(|(id, _)| id)).transpose()?;
    let functions = headers
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let body = ctx.expr(h.body)?;
            Ok(Function::new(FuncId(i as u32), h.name.clone(), h.params, h.locals, body))
        })
        .collect::<Result<Vec<_>, ParseError>>()?;
    Ok(Program::new(functions, init_function))
}

fn print_name(name: &str) -> String {
    let bare = !name.is_empty()
        && name.parse::<i64>().is_err()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "_-.!?*<>=+/".contains(c));
    if bare {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

const WIDTH: usize = 96;

/// Renders one expression. Lists that do not fit on a line are broken with
/// one child per line.
pub fn print_expr(e: &Expr, program: Option<&Program>) -> String {
    let mut out = String::new();
    render(e, program, 0, &mut out);
    out
}

enum Piece {
    Text(String),
    Node(Vec<Piece>),
}

fn pieces(e: &Expr, p: Option<&Program>) -> Piece {
    let fname = |id: FuncId| -> String {
        match p.and_then(|p| p.function(id)) {
            Some(f) => print_name(&f.name),
            None => format!("{id}"),
        }
    };
    let t = |s: &str| Piece::Text(s.to_string());
    let node = |mut v: Vec<Piece>, kids: Vec<&Expr>| {
        v.extend(kids.into_iter().map(|k| pieces(k, p)));
        Piece::Node(v)
    };
    match e {
        Expr::ConstInt(v) => Piece::Node(vec![t("const"), Piece::Text(v.to_string())]),
        Expr::LocalGet(s) => Piece::Node(vec![t("get"), Piece::Text(s.to_string())]),
        Expr::LocalSet(s, v) => node(vec![t("set"), Piece::Text(s.to_string())], vec![v]),
        Expr::ArrayLen(a) => node(vec![t("len")], vec![a]),
        Expr::ArrayGet(a, i) => node(vec![t("aget")], vec![a, i]),
        Expr::ArraySet(a, i, v) => node(vec![t("aset")], vec![a, i, v]),
        Expr::ArrayNew(n) => node(vec![t("newarr")], vec![n]),
        Expr::FuncRef(id) => Piece::Node(vec![t("fref"), Piece::Text(fname(*id))]),
        Expr::BinOp(op, a, b) => node(vec![t(op.mnemonic())], vec![a, b]),
        Expr::Seq(es) => node(vec![t("seq")], es.iter().collect()),
        Expr::If {
            cond,
            then_branch,
            else_branch,
            ..
        } => node(vec![t("if")], vec![cond, then_branch, else_branch]),
        Expr::Loop { cond, body, .. } => node(vec![t("loop")], vec![cond, body]),
        Expr::Return(v) => node(vec![t("return")], vec![v]),
        Expr::CallDirect { callee, args, .. } => {
            node(vec![t("call"), Piece::Text(fname(*callee))], args.iter().collect())
        }
        Expr::CallIndirect { callee, args, .. } => {
            let mut kids = vec![&**callee];
            kids.extend(args.iter());
            node(vec![t("calli")], kids)
        }
        Expr::Switch {
            scrutinee,
            arms,
            fallthrough,
            default,
            ..
        } => {
            let mut v = vec![t("switch"), pieces(scrutinee, p)];
            for a in arms {
                v.push(Piece::Node(vec![
                    t("case"),
                    Piece::Text(a.value.to_string()),
                    pieces(&a.body, p),
                ]));
            }
            v.push(Piece::Node(vec![t("default"), pieces(default, p)]));
            if *fallthrough {
                v.push(t(":fallthrough"));
            }
            Piece::Node(v)
        }
    }
}

fn flat(p: &Piece, out: &mut String) {
    match p {
        Piece::Text(s) => out.push_str(s),
        Piece::Node(items) => {
            out.push('(');
            for (i, it) in items.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                flat(it, out);
            }
            out.push(')');
        }
    }
}

fn layout(p: &Piece, indent: usize, out: &mut String) {
    let mut one = String::new();
    flat(p, &mut one);
    let Piece::Node(items) = p else {
        out.push_str(&one);
        return;
    };
    if indent + one.len() <= WIDTH {
        out.push_str(&one);
        return;
    }
    out.push('(');
    // Keep leading atoms (operator and immediate operands) on the first line.
    let lead = items.iter().take_while(|i| matches!(i, Piece::Text(_))).count().max(1);
    for (i, it) in items[..lead].iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        flat(it, out);
    }
    for it in &items[lead..] {
        out.push('\n');
        out.push_str(&" ".repeat(indent + 2));
        layout(it, indent + 2, out);
    }
    out.push(')');
}

fn render(e: &Expr, p: Option<&Program>, indent: usize, out: &mut String) {
    layout(&pieces(e, p), indent, out);
}

/// Renders a function as a `(fn ...)` form.
pub fn print_function(f: &Function, program: Option<&Program>) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "(fn {} {} {}\n  ",
        print_name(&f.name),
        f.param_count,
        f.local_count
    );
    render(&f.body, program, 2, &mut out);
    out.push(')');
    out
}

pub fn print_program(program: &Program) -> String {
    let mut out = String::from("(program ");
    match program.init_function {
        Some(id) => {
            let _ = write!(out, "(init {})", print_name(program.name_of(id)));
        }
        None => out.push_str("(init)"),
    }
    for f in &program.functions {
        out.push('\n');
        for line in print_function(f, Some(program)).lines() {
            out.push_str("  ");
            out.push_str(line);
            out.push('\n');
        }
        out.pop();
    }
    out.push_str(")\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{build_hash_baseline, build_hash_ft32};

    #[test]
    fn minimal_program() {
        let p = parse_program("(fn id0 \"zero\" 0 0 (return (const 0)))").unwrap();
        assert_eq!(p.functions.len(), 1);
        let f = &p.functions[0];
        assert_eq!(f.name, "zero");
        assert_eq!(f.body, Expr::Return(Box::new(Expr::ConstInt(0))));
        assert_eq!(f.size, 2);
    }

    #[test]
    fn unbalanced_paren_reports_line() {
        let src = "(program (init)\n  (fn f 0 0\n    (return (const 0))\n";
        let err = parse_program(src).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }), "{err}");
        assert_eq!(err.line(), 2, "{err}");
        let src = "(fn f 0 0 (return (const 0))))";
        let err = parse_program(src).unwrap_err();
        assert_eq!(err.line(), 1);
        let src = "(fn f 0 0\n (return (add (const 0) (const 1)))))";
        assert_eq!(parse_program(src).unwrap_err().line(), 2);
    }

    #[test]
    fn unknown_function_and_arity() {
        let err = parse_program("(fn f 0 0 (call g))").unwrap_err();
        assert!(matches!(err, ParseError::UnknownFunction { ref name, .. } if name == "g"));
        let err = parse_program("(fn g 1 1 (get 0)) (fn f 0 0 (call g))").unwrap_err();
        assert!(matches!(err, ParseError::Arity { expected: 1, found: 0, .. }), "{err}");
    }

    #[test]
    fn hash_functions_round_trip() {
        for f in [build_hash_baseline(), build_hash_ft32()] {
            let program = Program::new(vec![f.clone()], None);
            let text = print_program(&program);
            let back = parse_program(&text).unwrap();
            assert_eq!(back.functions[0], f);
            assert_eq!(print_program(&back), text);
        }
    }

    #[test]
    fn forward_references_and_init() {
        let src = "(program (init main)
            (fn main 0 1 (seq (set 0 (fref helper)) (calli (get 0) (const 2))))
            (fn helper 1 1 (return (mul (get 0) (get 0)))))";
        let p = parse_program(src).unwrap();
        assert_eq!(p.init_function, Some(FuncId(0)));
        assert_eq!(p.functions[0].body.children()[0], &Expr::LocalSet(0, Box::new(Expr::FuncRef(FuncId(1)))));
    }

    #[test]
    fn switch_syntax() {
        let src = "(fn f 1 1 (switch (get 0) (case 1 (const 10)) (case 2 (const 20)) (default (const 0)) :fallthrough))";
        let p = parse_program(src).unwrap();
        match &p.functions[0].body {
            Expr::Switch { arms, fallthrough, .. } => {
                assert_eq!(arms.len(), 2);
                assert!(*fallthrough);
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_program("(fn f 1 1 (switch (get 0) (case 1 (const 10))))").is_err());
    }
}
