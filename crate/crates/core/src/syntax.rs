//! The model DSL: lexer, precedence-climbing parser and printer.
//!
//! ```text
//! model  := "vars" ident+ decl* "init" nat
//! decl   := "node" nat ("score" expr)? | "nil" nat | trans
//! trans  := "trans" nat "->" nat "when" expr "do" "{" stmt* "}"
//! stmt   := ident "~" dist ";" | ident ":=" expr ";"
//! dist   := "bernoulli" "(" expr ")" | "normal" "(" expr "," expr ")"
//!         | "uniform" "(" expr "," expr ")" | "choice" "(" expr ("," expr)* ")"
//! ```
//!
//! Expressions, loosest binding first: `||`, `&&`, comparisons, `+ -`,
//! `* /`, prefix `- !`, then literals, variables, `inf`, `abs(e)`,
//! `min(e, e)`, `max(e, e)` and parentheses. `#` starts a line comment.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::dist::{DistSpec, Statement};
use crate::expr::{BinOp, Expr, UnOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{pos}: syntax error: expected {expected}, found {found}")]
    Syntax { pos: Pos, expected: String, found: String },
    #[error("{pos}: undeclared variable `{name}`")]
    UndeclaredVariable { pos: Pos, name: String },
    #[error("{pos}: duplicate variable `{name}`")]
    DuplicateVariable { pos: Pos, name: String },
    #[error("{pos}: checkpoint {id} declared twice")]
    DuplicateCheckpoint { pos: Pos, id: u32 },
    #[error("{pos}: undeclared checkpoint {id}")]
    UndeclaredCheckpoint { pos: Pos, id: u32 },
    #[error("{pos}: no nil checkpoint declared")]
    MissingNil { pos: Pos },
    #[error("{pos}: nil declared twice (already checkpoint {first})")]
    MultipleNil { pos: Pos, first: u32 },
    #[error("{pos}: unknown distribution `{name}` (expected bernoulli, normal, uniform or choice)")]
    UnknownDistribution { pos: Pos, name: String },
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::UndeclaredVariable { pos, .. }
            | ParseError::DuplicateVariable { pos, .. }
            | ParseError::DuplicateCheckpoint { pos, .. }
            | ParseError::UndeclaredCheckpoint { pos, .. }
            | ParseError::MissingNil { pos }
            | ParseError::MultipleNil { pos, .. }
            | ParseError::UnknownDistribution { pos, .. } => *pos,
        }
    }
}

pub const KEYWORDS: &[&str] = &[
    "vars", "node", "score", "nil", "trans", "when", "do", "init", "bernoulli", "normal", "uniform",
    "choice", "abs", "min", "max", "inf",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Keyword(&'static str),
    Number { text: String, value: f64 },
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Keyword(k) => write!(f, "`{k}`"),
            Tok::Number { text, .. } => write!(f, "number `{text}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

const SYMBOLS: &[&str] = &[
    "->", ":=", "==", "!=", "<=", ">=", "&&", "||", "<", ">", "+", "-", "*", "/", "!", "(", ")", "{",
    "}", ",", ";", "~",
];

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let tok = match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => Tok::Keyword(k),
                None => Tok::Ident(word),
            };
            col += i - start;
            out.push((tok, pos));
            continue;
        }
        if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                pos,
                expected: "a number".into(),
                found: format!("`{text}`"),
            })?;
            col += i - start;
            out.push((Tok::Number { text, value }, pos));
            continue;
        }
        let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len();
                out.push((Tok::Sym(s), pos));
            }
            None => {
                return Err(ParseError::Syntax {
                    pos,
                    expected: "a token".into(),
                    found: format!("character `{c}`"),
                })
            }
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointDecl {
    pub id: u32,
    pub score: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDecl {
    pub source: u32,
    pub guard: Expr,
    pub body: Vec<Statement>,
    pub target: u32,
}

/// Syntactic form of a model, before semantic validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelAst {
    pub vars: Vec<String>,
    /// Every declared checkpoint, including nil, in declaration order.
    pub checkpoints: Vec<CheckpointDecl>,
    pub nil: u32,
    pub transitions: Vec<TransitionDecl>,
    pub init: u32,
}

impl ModelAst {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }
}

impl fmt::Display for ModelAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vars = &self.vars;
        writeln!(f, "vars {}", vars.join(" "))?;
        for cp in &self.checkpoints {
            if cp.id == self.nil {
                writeln!(f, "nil {}", cp.id)?;
                if let Some(score) = &cp.score {
                    // not expressible in the grammar; keep the information visible
                    writeln!(f, "# nil score: {}", score.display(vars))?;
                }
                continue;
            }
            match &cp.score {
                Some(score) => writeln!(f, "node {} score {}", cp.id, score.display(vars))?,
                None => writeln!(f, "node {}", cp.id)?,
            }
        }
        for tr in &self.transitions {
            write!(f, "trans {} -> {} when {} do {{", tr.source, tr.target, tr.guard.display(vars))?;
            for stmt in &tr.body {
                write!(f, " {}", stmt.display(vars))?;
            }
            writeln!(f, " }}")?;
        }
        writeln!(f, "init {}", self.init)
    }
}

struct Parser<'v> {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    vars: &'v [String],
}

impl<'v> Parser<'v> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            pos: self.pos(),
            expected: expected.into(),
            found: self.peek().to_string(),
        })
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(x) if *x == s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(format!("`{s}`"))
        }
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        if matches!(self.peek(), Tok::Keyword(x) if *x == k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<(), ParseError> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            self.error(format!("`{k}`"))
        }
    }

    fn nat(&mut self) -> Result<(u32, Pos), ParseError> {
        let pos = self.pos();
        if let Tok::Number { text, .. } = self.peek() {
            if let Ok(n) = text.parse::<u32>() {
                self.bump();
                return Ok((n, pos));
            }
        }
        self.error("a checkpoint number")
    }

    fn variable(&mut self) -> Result<usize, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(name) => match self.vars.iter().position(|v| *v == name) {
                Some(i) => {
                    self.bump();
                    Ok(i)
                }
                None => Err(ParseError::UndeclaredVariable { pos, name }),
            },
            _ => self.error("a variable name"),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(0)
    }

    fn binary_op(&self, level: usize) -> Option<BinOp> {
        let Tok::Sym(s) = self.peek() else { return None };
        let op = match *s {
            "||" => BinOp::Or,
            "&&" => BinOp::And,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            _ => return None,
        };
        (precedence(op) == level).then_some(op)
    }

    fn binary(&mut self, level: usize) -> Result<Expr, ParseError> {
        if level > MAX_LEVEL {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(op) = self.binary_op(level) {
            self.bump();
            let rhs = self.binary(level + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_sym("-") {
            return Ok(Expr::unary(UnOp::Neg, self.unary()?));
        }
        if self.eat_sym("!") {
            return Ok(Expr::unary(UnOp::Not, self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Number { value, .. } => {
                self.bump();
                Ok(Expr::lit(value))
            }
            Tok::Ident(_) => Ok(Expr::var(self.variable()?)),
            Tok::Keyword("inf") => {
                self.bump();
                Ok(Expr::lit(f64::INFINITY))
            }
            Tok::Keyword("abs") => {
                self.bump();
                let args = self.call_args()?;
                self.arity(&args, 1, "abs")?;
                Ok(Expr::unary(UnOp::Abs, args.into_iter().next().unwrap()))
            }
            Tok::Keyword(k @ ("min" | "max")) => {
                self.bump();
                let args = self.call_args()?;
                self.arity(&args, 2, k)?;
                let mut it = args.into_iter();
                let op = if k == "min" { BinOp::Min } else { BinOp::Max };
                Ok(Expr::binary(op, it.next().unwrap(), it.next().unwrap()))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            _ => self.error("an expression"),
        }
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect_sym("(")?;
        let mut args = vec![self.expr()?];
        while self.eat_sym(",") {
            args.push(self.expr()?);
        }
        self.expect_sym(")")?;
        Ok(args)
    }

    fn arity(&self, args: &[Expr], n: usize, name: &str) -> Result<(), ParseError> {
        if args.len() == n {
            Ok(())
        } else {
            let prev = self.toks[self.at.saturating_sub(1)].1;
            Err(ParseError::Syntax {
                pos: prev,
                expected: format!("{n} argument(s) to {name}"),
                found: format!("{} argument(s)", args.len()),
            })
        }
    }

    fn dist(&mut self) -> Result<DistSpec, ParseError> {
        let pos = self.pos();
        let name = match self.peek().clone() {
            Tok::Keyword(k @ ("bernoulli" | "normal" | "uniform" | "choice")) => k,
            Tok::Ident(name) => return Err(ParseError::UnknownDistribution { pos, name }),
            _ => return self.error("a distribution"),
        };
        self.bump();
        let args = self.call_args()?;
        let mut it = args.clone().into_iter();
        Ok(match name {
            "bernoulli" => {
                self.arity(&args, 1, name)?;
                DistSpec::Bernoulli(it.next().unwrap())
            }
            "normal" => {
                self.arity(&args, 2, name)?;
                DistSpec::Normal { mean: it.next().unwrap(), sd: it.next().unwrap() }
            }
            "uniform" => {
                self.arity(&args, 2, name)?;
                DistSpec::Uniform { lo: it.next().unwrap(), hi: it.next().unwrap() }
            }
            _ => DistSpec::Choice(args),
        })
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        let var = self.variable()?;
        if self.eat_sym("~") {
            let dist = self.dist()?;
            self.expect_sym(";")?;
            Ok(Statement::Sample { var, dist })
        } else if self.eat_sym(":=") {
            let expr = self.expr()?;
            self.expect_sym(";")?;
            Ok(Statement::Assign { var, expr })
        } else {
            self.error("`~` or `:=`")
        }
    }
}

const MAX_LEVEL: usize = 4;

fn precedence(op: BinOp) -> usize {
    match op {
        BinOp::Or => 0,
        BinOp::And => 1,
        BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 2,
        BinOp::Add | BinOp::Sub => 3,
        BinOp::Mul | BinOp::Div => 4,
        BinOp::Min | BinOp::Max => usize::MAX,
    }
}

/// Parses a standalone expression over the given variable names.
pub fn parse_expr(text: &str, vars: &[String]) -> Result<Expr, ParseError> {
    let mut p = Parser { toks: lex(text)?, at: 0, vars };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.error("end of expression");
    }
    Ok(e)
}

/// Parses a model source file.
pub fn parse_model(text: &str) -> Result<ModelAst, ParseError> {
    let toks = lex(text)?;
    // Variable names come first and the expression parser needs them.
    let mut vars: Vec<String> = Vec::new();
    let mut p = Parser { toks, at: 0, vars: &[] };
    p.expect_kw("vars")?;
    let mut seen = HashSet::new();
    while let Tok::Ident(name) = p.peek().clone() {
        if !seen.insert(name.clone()) {
            return Err(ParseError::DuplicateVariable { pos: p.pos(), name });
        }
        vars.push(name);
        p.bump();
    }
    if vars.is_empty() {
        return p.error("at least one variable name");
    }
    let Parser { toks, at, .. } = p;
    let mut p = Parser { toks, at, vars: &vars };

    let mut checkpoints: Vec<CheckpointDecl> = Vec::new();
    let mut ids: HashSet<u32> = HashSet::new();
    let mut nil: Option<u32> = None;
    let mut transitions = Vec::new();
    let mut refs: Vec<(u32, Pos)> = Vec::new();
    let init;
    loop {
        if p.eat_kw("node") {
            let (id, pos) = p.nat()?;
            if !ids.insert(id) {
                return Err(ParseError::DuplicateCheckpoint { pos, id });
            }
            let score = if p.eat_kw("score") { Some(p.expr()?) } else { None };
            checkpoints.push(CheckpointDecl { id, score });
        } else if p.eat_kw("nil") {
            let (id, pos) = p.nat()?;
            if let Some(first) = nil {
                return Err(ParseError::MultipleNil { pos, first });
            }
            if !ids.insert(id) {
                return Err(ParseError::DuplicateCheckpoint { pos, id });
            }
            nil = Some(id);
            checkpoints.push(CheckpointDecl { id, score: None });
        } else if p.eat_kw("trans") {
            let (source, spos) = p.nat()?;
            p.expect_sym("->")?;
            let (target, tpos) = p.nat()?;
            p.expect_kw("when")?;
            let guard = p.expr()?;
            p.expect_kw("do")?;
            p.expect_sym("{")?;
            let mut body = Vec::new();
            while !p.eat_sym("}") {
                body.push(p.statement()?);
            }
            refs.push((source, spos));
            refs.push((target, tpos));
            transitions.push(TransitionDecl { source, guard, body, target });
        } else if p.eat_kw("init") {
            let (id, pos) = p.nat()?;
            refs.push((id, pos));
            init = id;
            break;
        } else {
            return p.error("`node`, `nil`, `trans` or `init`");
        }
    }
    if *p.peek() != Tok::Eof {
        return p.error("end of input after `init`");
    }
    let Some(nil) = nil else {
        return Err(ParseError::MissingNil { pos: p.pos() });
    };
    if let Some(&(id, pos)) = refs.iter().find(|(id, _)| !ids.contains(id)) {
        return Err(ParseError::UndeclaredCheckpoint { pos, id });
    }
    Ok(ModelAst { vars, checkpoints, nil, transitions, init })
}
