//! Textual machine descriptions (`.daf` files): lexer, parser, per-line
//! syntactic validation and a canonical pretty-printer.
//!
//! The format is line-oriented. A file is one constructor line, any number
//! of transition lines and a trailing `accept` declaration:
//!
//! ```text
//! _ o:O > starts c(int _price) {price := _price} q0
//! q0 {_offer > 0} b:B > c.makeOffer(int _offer) {offer := _offer} q1
//! accept q2
//! ```
//!
//! Guards in `{...}` before the caller default to `true` when omitted;
//! assignment blocks after the parameter list may be omitted when empty.
//! Callers are written `p:R` (fresh), `@p:R` (existing) or `p` (bound).
//! Comments run from `//` to end of line. The identifiers `accept`,
//! `starts`, `int`, `bool`, `true` and `false` are reserved.

use crate::expr::{precedence, BinOp, DataType, Expr, UnOp, VarRef};
use crate::model::{
    validate_structure, Assignment, ConstructorLabel, Dafsm, Declaration, DeclSort,
    QualifiedParticipant, Site, StateId, Transition, TransitionLabel,
};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

const RESERVED: [&str; 6] = ["accept", "starts", "int", "bool", "true", "false"];

/// Location of a token or error: 1-based line, half-open character columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpan {
    pub line: usize,
    pub cols: Range<usize>,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, cols {}-{}", self.line, self.cols.start, self.cols.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Lexical,
    Grammar,
    DuplicateConstructor,
    MissingConstructor,
    /// A structural invariant violated by an otherwise well-formed parse;
    /// carries the span of the offending line.
    Structural,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub message: String,
    pub span: SourceSpan,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

impl std::error::Error for ParseError {}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Underscore,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    Colon,
    ColonEq,
    At,
    Dot,
    Plus,
    Minus,
    Star,
    Bang,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    AndAnd,
    OrOr,
    Implies,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Underscore => "`_`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Colon => "`:`".into(),
            Tok::ColonEq => "`:=`".into(),
            Tok::At => "`@`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::AndAnd => "`&&`".into(),
            Tok::OrOr => "`||`".into(),
            Tok::Implies => "`=>`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    cols: Range<usize>,
}

fn lex_line(line: &str, line_no: usize) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            ' ' | '\t' | '\r' => {
                i += 1;
            }
            '/' if chars.get(i + 1) == Some(&'/') => break,
            '{' => {
                out.push(Spanned { tok: Tok::LBrace, cols: start..i + 1 });
                i += 1;
            }
            '}' => {
                out.push(Spanned { tok: Tok::RBrace, cols: start..i + 1 });
                i += 1;
            }
            '(' => {
                out.push(Spanned { tok: Tok::LParen, cols: start..i + 1 });
                i += 1;
            }
            ')' => {
                out.push(Spanned { tok: Tok::RParen, cols: start..i + 1 });
                i += 1;
            }
            ',' => {
                out.push(Spanned { tok: Tok::Comma, cols: start..i + 1 });
                i += 1;
            }
            ';' => {
                out.push(Spanned { tok: Tok::Semi, cols: start..i + 1 });
                i += 1;
            }
            '@' => {
                out.push(Spanned { tok: Tok::At, cols: start..i + 1 });
                i += 1;
            }
            '.' => {
                out.push(Spanned { tok: Tok::Dot, cols: start..i + 1 });
                i += 1;
            }
            '+' => {
                out.push(Spanned { tok: Tok::Plus, cols: start..i + 1 });
                i += 1;
            }
            '-' => {
                out.push(Spanned { tok: Tok::Minus, cols: start..i + 1 });
                i += 1;
            }
            '*' => {
                out.push(Spanned { tok: Tok::Star, cols: start..i + 1 });
                i += 1;
            }
            ':' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Spanned { tok: Tok::ColonEq, cols: start..i + 2 });
                    i += 2;
                } else {
                    out.push(Spanned { tok: Tok::Colon, cols: start..i + 1 });
                    i += 1;
                }
            }
            '!' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Spanned { tok: Tok::Ne, cols: start..i + 2 });
                    i += 2;
                } else {
                    out.push(Spanned { tok: Tok::Bang, cols: start..i + 1 });
                    i += 1;
                }
            }
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Spanned { tok: Tok::Le, cols: start..i + 2 });
                    i += 2;
                } else {
                    out.push(Spanned { tok: Tok::Lt, cols: start..i + 1 });
                    i += 1;
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Spanned { tok: Tok::Ge, cols: start..i + 2 });
                    i += 2;
                } else {
                    out.push(Spanned { tok: Tok::Gt, cols: start..i + 1 });
                    i += 1;
                }
            }
            '=' => {
                if chars.get(i + 1) == Some(&'>') {
                    out.push(Spanned { tok: Tok::Implies, cols: start..i + 2 });
                    i += 2;
                } else {
                    out.push(Spanned { tok: Tok::Eq, cols: start..i + 1 });
                    i += 1;
                }
            }
            '&' => {
                if chars.get(i + 1) == Some(&'&') {
                    out.push(Spanned { tok: Tok::AndAnd, cols: start..i + 2 });
                    i += 2;
                } else {
                    return Err(ParseError {
                        kind: ParseErrorKind::Lexical,
                        message: "expected `&&`".into(),
                        span: SourceSpan { line: line_no, cols: start..i + 1 },
                    });
                }
            }
            '|' => {
                if chars.get(i + 1) == Some(&'|') {
                    out.push(Spanned { tok: Tok::OrOr, cols: start..i + 2 });
                    i += 2;
                } else {
                    return Err(ParseError {
                        kind: ParseErrorKind::Lexical,
                        message: "expected `||`".into(),
                        span: SourceSpan { line: line_no, cols: start..i + 1 },
                    });
                }
            }
            '0'..='9' => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let text: String = chars[i..j].iter().collect();
                let value: i64 = text.parse().map_err(|_| ParseError {
                    kind: ParseErrorKind::Lexical,
                    message: format!("integer literal `{text}` out of range"),
                    span: SourceSpan { line: line_no, cols: start..j },
                })?;
                out.push(Spanned { tok: Tok::Int(value), cols: start..j });
                i = j;
            }
            '_' | 'a'..='z' | 'A'..='Z' => {
                let mut j = i + 1;
                while j < chars.len()
                    && (chars[j].is_ascii_alphanumeric() || chars[j] == '_')
                {
                    j += 1;
                }
                if j == i + 1 && c == '_' {
                    out.push(Spanned { tok: Tok::Underscore, cols: start..j });
                } else {
                    let text: String = chars[i..j].iter().collect();
                    out.push(Spanned { tok: Tok::Ident(text), cols: start..j });
                }
                i = j;
            }
            other => {
                return Err(ParseError {
                    kind: ParseErrorKind::Lexical,
                    message: format!("unexpected character `{other}`"),
                    span: SourceSpan { line: line_no, cols: start..i + 1 },
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Raw (uninterned) per-line parse results
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RawConstructor {
    pub coordinator: String,
    pub label: ConstructorLabel,
    pub initial: String,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct RawTransition {
    pub source: String,
    pub label: TransitionLabel,
    pub target: String,
    pub line: usize,
}

/// Syntactic representation of one `.daf` file, before interning and
/// structural validation.
#[derive(Debug, Clone)]
pub struct ParsedFile {
    pub constructor: RawConstructor,
    pub transitions: Vec<RawTransition>,
    pub accepting: Vec<(String, SourceSpan)>,
}

struct LineParser {
    toks: Vec<Spanned>,
    pos: usize,
    line: usize,
    line_len: usize,
}

impl LineParser {
    fn new(toks: Vec<Spanned>, line: usize, line_len: usize) -> Self {
        LineParser { toks, pos: 0, line, line_len }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn span_here(&self) -> SourceSpan {
        match self.toks.get(self.pos) {
            Some(s) => SourceSpan { line: self.line, cols: s.cols.clone() },
            None => SourceSpan { line: self.line, cols: self.line_len..self.line_len + 1 },
        }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            kind: ParseErrorKind::Grammar,
            message: message.into(),
            span: self.span_here(),
        }
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.error(format!("expected {}, found {}", want.describe(), t.describe()))),
            None => Err(self.error(format!("expected {}, found end of line", want.describe()))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Ident(name)) => {
                if RESERVED.contains(&name.as_str()) {
                    return Err(self.error(format!("`{name}` is reserved and cannot be used as {what}")));
                }
                self.pos += 1;
                Ok(name)
            }
            Some(t) => Err(self.error(format!("expected {what}, found {}", t.describe()))),
            None => Err(self.error(format!("expected {what}, found end of line"))),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error("unexpected trailing input"))
        }
    }

    // decl := ("int"|"bool") USCORE_IDENT | IDENT ":" IDENT
    fn decl(&mut self) -> Result<Declaration, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Ident(kw)) if kw == "int" || kw == "bool" => {
                self.pos += 1;
                let ty = if kw == "int" { DataType::Int } else { DataType::Bool };
                match self.peek().cloned() {
                    Some(Tok::Ident(name)) if name.starts_with('_') => {
                        self.pos += 1;
                        Ok(Declaration { name, sort: DeclSort::Data(ty) })
                    }
                    _ => Err(self.error("expected a `_`-prefixed data parameter name")),
                }
            }
            Some(Tok::Ident(_)) => {
                let name = self.ident("a participant parameter name")?;
                self.expect(Tok::Colon)?;
                let role = self.ident("a role name")?;
                Ok(Declaration { name, sort: DeclSort::Role(role) })
            }
            _ => Err(self.error("expected a parameter declaration")),
        }
    }

    fn decls(&mut self) -> Result<Vec<Declaration>, ParseError> {
        self.expect(Tok::LParen)?;
        let mut out = Vec::new();
        if self.peek() == Some(&Tok::RParen) {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.decl()?);
            match self.peek() {
                Some(Tok::Comma) => {
                    self.pos += 1;
                }
                Some(Tok::RParen) => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return Err(self.error("expected `,` or `)` in parameter list")),
            }
        }
    }

    // assigns := "{" assign (";" assign)* "}"
    fn assigns(&mut self) -> Result<Vec<Assignment>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut out = Vec::new();
        loop {
            let lhs = self.ident("an assignment target")?;
            self.expect(Tok::ColonEq)?;
            let rhs = self.expr(0)?;
            out.push(Assignment { lhs, rhs });
            match self.peek() {
                Some(Tok::Semi) => {
                    self.pos += 1;
                }
                Some(Tok::RBrace) => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return Err(self.error("expected `;` or `}` in assignment block")),
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Int(n)) => {
                self.pos += 1;
                Ok(Expr::Int(n))
            }
            Some(Tok::Ident(name)) if name == "true" => {
                self.pos += 1;
                Ok(Expr::Bool(true))
            }
            Some(Tok::Ident(name)) if name == "false" => {
                self.pos += 1;
                Ok(Expr::Bool(false))
            }
            Some(Tok::Ident(name)) => {
                if RESERVED.contains(&name.as_str()) {
                    return Err(self.error(format!("`{name}` is reserved")));
                }
                self.pos += 1;
                Ok(Expr::var(&name))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr(0)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Bang) => {
                self.pos += 1;
                let e = self.primary()?;
                Ok(Expr::Unary(UnOp::Not, Box::new(e)))
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                let e = self.primary()?;
                // Fold negated literals so `-3` round-trips as a literal.
                match e {
                    Expr::Int(n) => Ok(Expr::Int(-n)),
                    other => Ok(Expr::Unary(UnOp::Neg, Box::new(other))),
                }
            }
            Some(t) => Err(self.error(format!("expected an expression, found {}", t.describe()))),
            None => Err(self.error("expected an expression, found end of line")),
        }
    }

    fn binop_here(&self) -> Option<BinOp> {
        match self.peek()? {
            Tok::Plus => Some(BinOp::Add),
            Tok::Minus => Some(BinOp::Sub),
            Tok::Star => Some(BinOp::Mul),
            Tok::Lt => Some(BinOp::Lt),
            Tok::Le => Some(BinOp::Le),
            Tok::Gt => Some(BinOp::Gt),
            Tok::Ge => Some(BinOp::Ge),
            Tok::Eq => Some(BinOp::Eq),
            Tok::Ne => Some(BinOp::Ne),
            Tok::AndAnd => Some(BinOp::And),
            Tok::OrOr => Some(BinOp::Or),
            Tok::Implies => Some(BinOp::Implies),
            _ => None,
        }
    }

    /// Precedence-climbing expression parser; implication is
    /// right-associative, everything else associates left.
    fn expr(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.primary()?;
        while let Some(op) = self.binop_here() {
            let prec = precedence(op);
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let next_min = if op == BinOp::Implies { prec } else { prec + 1 };
            let rhs = self.expr(next_min)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn guard_opt(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::LBrace) {
            self.pos += 1;
            let e = self.expr(0)?;
            self.expect(Tok::RBrace)?;
            Ok(e)
        } else {
            Ok(Expr::Bool(true))
        }
    }

    fn assigns_opt(&mut self) -> Result<Vec<Assignment>, ParseError> {
        if self.peek() == Some(&Tok::LBrace) {
            self.assigns()
        } else {
            Ok(Vec::new())
        }
    }

    // qparty := "@" IDENT ":" IDENT | IDENT ":" IDENT | IDENT
    fn qparty(&mut self) -> Result<QualifiedParticipant, ParseError> {
        if self.peek() == Some(&Tok::At) {
            self.pos += 1;
            let var = self.ident("a participant variable")?;
            self.expect(Tok::Colon)?;
            let role = self.ident("a role name")?;
            return Ok(QualifiedParticipant::Existing { var, role });
        }
        let var = self.ident("a participant variable")?;
        if self.peek() == Some(&Tok::Colon) {
            self.pos += 1;
            let role = self.ident("a role name")?;
            Ok(QualifiedParticipant::Fresh { var, role })
        } else {
            Ok(QualifiedParticipant::Bound { var })
        }
    }

    // constructor := "_" IDENT ":" IDENT ">" "starts" IDENT "(" decls? ")" assigns? STATE
    fn constructor(&mut self) -> Result<RawConstructor, ParseError> {
        self.expect(Tok::Underscore)?;
        let creator = self.ident("the creator variable")?;
        self.expect(Tok::Colon)?;
        let creator_role = self.ident("the creator's role")?;
        self.expect(Tok::Gt)?;
        match self.next() {
            Some(Spanned { tok: Tok::Ident(kw), .. }) if kw == "starts" => {}
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return Err(self.error("expected `starts`"));
            }
        }
        let coordinator = self.ident("the coordinator name")?;
        let params = self.decls()?;
        let init_assignments = self.assigns_opt()?;
        let initial = self.ident("the initial state")?;
        self.expect_end()?;
        Ok(RawConstructor {
            coordinator,
            label: ConstructorLabel { creator, creator_role, params, init_assignments },
            initial,
            line: self.line,
        })
    }

    // line := STATE guard? qparty ">" IDENT "." IDENT "(" decls? ")" assigns? STATE
    fn transition(&mut self) -> Result<(RawTransition, String, SourceSpan), ParseError> {
        let source = self.ident("a source state")?;
        let guard = self.guard_opt()?;
        let participant = self.qparty()?;
        self.expect(Tok::Gt)?;
        let coord_span = self.span_here();
        let coordinator = self.ident("the coordinator name")?;
        self.expect(Tok::Dot)?;
        let function = self.ident("a function name")?;
        let decls = self.decls()?;
        let assignments = self.assigns_opt()?;
        let target = self.ident("a target state")?;
        self.expect_end()?;
        let label = TransitionLabel { guard, participant, function, decls, assignments };
        Ok((
            RawTransition { source, label, target, line: self.line },
            coordinator,
            coord_span,
        ))
    }
}

// ---------------------------------------------------------------------------
// File-level parsing
// ---------------------------------------------------------------------------

/// Parse a `.daf` file into its raw syntactic form. Collects as many errors
/// as possible; never panics on any input.
pub fn parse_file(text: &str) -> Result<ParsedFile, Vec<ParseError>> {
    let mut errors: Vec<ParseError> = Vec::new();
    let mut constructor: Option<RawConstructor> = None;
    let mut ctor_attempted = false;
    let mut coordinator_spans: Vec<(String, SourceSpan)> = Vec::new();
    let mut transitions: Vec<RawTransition> = Vec::new();
    let mut accepting: Vec<(String, SourceSpan)> = Vec::new();
    let mut saw_accept = false;
    let mut last_line = 0usize;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let toks = match lex_line(raw_line, line_no) {
            Ok(t) => t,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        if toks.is_empty() {
            continue;
        }
        let line_len = raw_line.chars().count();
        let mut p = LineParser::new(toks, line_no, line_len);

        match p.peek() {
            Some(Tok::Underscore) => {
                ctor_attempted = true;
                match p.constructor() {
                Ok(ctor) => {
                    if constructor.is_some() {
                        errors.push(ParseError {
                            kind: ParseErrorKind::DuplicateConstructor,
                            message: "more than one constructor line".into(),
                            span: SourceSpan { line: line_no, cols: 0..1 },
                        });
                    } else if saw_accept {
                        errors.push(ParseError {
                            kind: ParseErrorKind::Grammar,
                            message: "constructor after `accept` declaration".into(),
                            span: SourceSpan { line: line_no, cols: 0..1 },
                        });
                    } else {
                        constructor = Some(ctor);
                    }
                }
                Err(e) => errors.push(e),
            }
            }
            Some(Tok::Ident(kw)) if kw == "accept" => {
                p.pos += 1;
                if saw_accept {
                    errors.push(p.error("more than one `accept` declaration"));
                    continue;
                }
                saw_accept = true;
                let mut any = false;
                while !p.at_end() {
                    let span = p.span_here();
                    match p.ident("an accepting state") {
                        Ok(name) => {
                            accepting.push((name, span));
                            any = true;
                        }
                        Err(e) => {
                            errors.push(e);
                            break;
                        }
                    }
                }
                if !any {
                    errors.push(ParseError {
                        kind: ParseErrorKind::Grammar,
                        message: "`accept` needs at least one state".into(),
                        span: SourceSpan { line: line_no, cols: 0..line_len.max(1) },
                    });
                }
            }
            _ => {
                if saw_accept {
                    errors.push(p.error("content after `accept` declaration"));
                    continue;
                }
                match p.transition() {
                    Ok((t, coordinator, coord_span)) => {
                        coordinator_spans.push((coordinator, coord_span));
                        transitions.push(t);
                    }
                    Err(e) => errors.push(e),
                }
            }
        }
    }

    let constructor = match constructor {
        Some(c) => c,
        None => {
            if !ctor_attempted {
                errors.push(ParseError {
                    kind: ParseErrorKind::MissingConstructor,
                    message: "no constructor line (`_ p:R > starts c(...) S0`)".into(),
                    span: SourceSpan { line: 1, cols: 0..1 },
                });
            }
            return Err(errors);
        }
    };

    for (name, span) in &coordinator_spans {
        if name != &constructor.coordinator {
            errors.push(ParseError {
                kind: ParseErrorKind::Grammar,
                message: format!(
                    "coordinator `{name}` does not match `{}` from the constructor",
                    constructor.coordinator
                ),
                span: span.clone(),
            });
        }
    }

    if !saw_accept {
        errors.push(ParseError {
            kind: ParseErrorKind::Grammar,
            message: "missing `accept` declaration".into(),
            span: SourceSpan { line: last_line.max(1), cols: 0..1 },
        });
    }

    if errors.is_empty() {
        Ok(ParsedFile { constructor, transitions, accepting })
    } else {
        Err(errors)
    }
}

/// Parse and lower a `.daf` file into a machine that passes
/// [`validate_structure`]. State, variable and role names are interned in
/// first-appearance order; transition order follows the file.
pub fn parse(text: &str) -> Result<Dafsm, Vec<ParseError>> {
    let file = parse_file(text)?;
    lower(&file)
}

/// Lower a parsed file: intern states, infer state-variable types, run the
/// structural validator and map its findings back onto line spans.
pub fn lower(file: &ParsedFile) -> Result<Dafsm, Vec<ParseError>> {
    let mut errors = Vec::new();
    let mut states: Vec<String> = Vec::new();
    let intern = |name: &str, states: &mut Vec<String>| -> StateId {
        match states.iter().position(|s| s == name) {
            Some(i) => StateId(i),
            None => {
                states.push(name.to_string());
                StateId(states.len() - 1)
            }
        }
    };

    let initial = intern(&file.constructor.initial, &mut states);
    let mut transitions = Vec::new();
    for t in &file.transitions {
        let source = intern(&t.source, &mut states);
        let target = intern(&t.target, &mut states);
        transitions.push(Transition { source, label: t.label.clone(), target });
    }

    let mut accepting = BTreeSet::new();
    for (name, span) in &file.accepting {
        match states.iter().position(|s| s == name) {
            Some(i) => {
                accepting.insert(StateId(i));
            }
            None => errors.push(ParseError {
                kind: ParseErrorKind::Structural,
                message: format!("accepting state `{name}` does not occur in any transition"),
                span: span.clone(),
            }),
        }
    }

    let state_vars = infer_state_vars(&file.constructor.label, &transitions);

    let machine = Dafsm {
        states,
        initial,
        accepting,
        coordinator: file.constructor.coordinator.clone(),
        constructor: file.constructor.label.clone(),
        transitions,
        state_vars,
    };

    for err in validate_structure(&machine) {
        let line = match err.site() {
            Site::Machine | Site::Constructor => file.constructor.line,
            Site::Transition(i) => file.transitions[i].line,
        };
        errors.push(ParseError {
            kind: ParseErrorKind::Structural,
            message: err.to_string(),
            span: SourceSpan { line, cols: 0..1 },
        });
    }

    if errors.is_empty() {
        Ok(machine)
    } else {
        Err(errors)
    }
}

// ---------------------------------------------------------------------------
// State-variable type inference
// ---------------------------------------------------------------------------

/// There is no declaration section for coordinator variables, so their types
/// are inferred from use: assignments, literals, parameter sorts and the
/// operators applied to them. Only `int` and `bool` exist, which keeps this
/// to plain constraint propagation. Conflicting uses resolve first-wins here
/// and are reported precisely by the structural validator afterwards.
fn infer_state_vars(
    ctor: &ConstructorLabel,
    transitions: &[Transition],
) -> BTreeMap<String, DataType> {
    #[derive(Clone, Copy, PartialEq)]
    enum Ty {
        Known(DataType),
        Var,
    }

    enum Constraint {
        VarIs(String, DataType),
        VarsEqual(String, String),
    }

    fn walk(
        e: &Expr,
        params: &BTreeMap<String, DataType>,
        constraints: &mut Vec<Constraint>,
    ) -> (Ty, Option<String>) {
        match e {
            Expr::Int(_) => (Ty::Known(DataType::Int), None),
            Expr::Bool(_) => (Ty::Known(DataType::Bool), None),
            Expr::Var(VarRef::Param(n)) => match params.get(n) {
                Some(ty) => (Ty::Known(*ty), None),
                None => (Ty::Var, None),
            },
            Expr::Var(VarRef::State(n)) | Expr::Var(VarRef::Old(n)) => (Ty::Var, Some(n.clone())),
            Expr::Unary(op, inner) => {
                let want = match op {
                    UnOp::Neg => DataType::Int,
                    UnOp::Not => DataType::Bool,
                };
                let (_, var) = walk(inner, params, constraints);
                if let Some(v) = var {
                    constraints.push(Constraint::VarIs(v, want));
                }
                (Ty::Known(want), None)
            }
            Expr::Binary(op, a, b) => {
                let (ta, va) = walk(a, params, constraints);
                let (tb, vb) = walk(b, params, constraints);
                if op.is_arith() || op.is_comparison() {
                    for v in [va, vb].into_iter().flatten() {
                        constraints.push(Constraint::VarIs(v, DataType::Int));
                    }
                    let out = if op.is_arith() { DataType::Int } else { DataType::Bool };
                    (Ty::Known(out), None)
                } else if op.is_equality() {
                    match (ta, tb, va.clone(), vb.clone()) {
                        (Ty::Known(t), _, _, Some(v)) | (_, Ty::Known(t), Some(v), _) => {
                            constraints.push(Constraint::VarIs(v, t));
                        }
                        (Ty::Var, Ty::Var, Some(x), Some(y)) => {
                            constraints.push(Constraint::VarsEqual(x, y));
                        }
                        _ => {}
                    }
                    (Ty::Known(DataType::Bool), None)
                } else {
                    for v in [va, vb].into_iter().flatten() {
                        constraints.push(Constraint::VarIs(v, DataType::Bool));
                    }
                    (Ty::Known(DataType::Bool), None)
                }
            }
            Expr::Exists(_, body) => {
                walk(body, params, constraints);
                (Ty::Known(DataType::Bool), None)
            }
        }
    }

    let mut constraints = Vec::new();

    let scopes: Vec<(BTreeMap<String, DataType>, Option<&Expr>, &[Assignment])> = {
        let mut out = Vec::new();
        let ctor_params: BTreeMap<String, DataType> =
            ctor.data_params().map(|(n, t)| (n.to_string(), t)).collect();
        out.push((ctor_params, None, ctor.init_assignments.as_slice()));
        for t in transitions {
            let params: BTreeMap<String, DataType> = t
                .label
                .data_params()
                .map(|(n, ty)| (n.to_string(), ty))
                .collect();
            out.push((params, Some(&t.label.guard), t.label.assignments.as_slice()));
        }
        out
    };

    for (params, guard, assignments) in &scopes {
        // Guards are boolean.
        if let Some(guard) = guard {
            let (_, gv) = walk(guard, params, &mut constraints);
            if let Some(v) = gv {
                constraints.push(Constraint::VarIs(v, DataType::Bool));
            }
        }
        for a in *assignments {
            let (ty, var) = walk(&a.rhs, params, &mut constraints);
            match (ty, var) {
                (Ty::Known(t), _) => constraints.push(Constraint::VarIs(a.lhs.clone(), t)),
                (Ty::Var, Some(v)) => {
                    constraints.push(Constraint::VarsEqual(a.lhs.clone(), v));
                }
                (Ty::Var, None) => {}
            }
        }
    }

    // Fixpoint propagation; first constraint wins on conflicts.
    let mut known: BTreeMap<String, DataType> = BTreeMap::new();
    loop {
        let mut changed = false;
        for c in &constraints {
            match c {
                Constraint::VarIs(v, t) => {
                    if !known.contains_key(v) {
                        known.insert(v.clone(), *t);
                        changed = true;
                    }
                }
                Constraint::VarsEqual(a, b) => {
                    match (known.get(a).copied(), known.get(b).copied()) {
                        (Some(t), None) => {
                            known.insert(b.clone(), t);
                            changed = true;
                        }
                        (None, Some(t)) => {
                            known.insert(a.clone(), t);
                            changed = true;
                        }
                        _ => {}
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    known
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

fn print_decls(decls: &[Declaration]) -> String {
    decls.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
}

fn print_assigns(assigns: &[Assignment]) -> String {
    assigns.iter().map(|a| a.to_string()).collect::<Vec<_>>().join("; ")
}

/// Render a machine in canonical `.daf` form. `parse(print(m))` is
/// structurally equal to `m`; guards that are literally `true` and empty
/// assignment blocks are omitted.
pub fn print(machine: &Dafsm) -> String {
    let mut out = String::new();
    let ctor = &machine.constructor;
    out.push_str(&format!(
        "_ {}:{} > starts {}({})",
        ctor.creator,
        ctor.creator_role,
        machine.coordinator,
        print_decls(&ctor.params)
    ));
    if !ctor.init_assignments.is_empty() {
        out.push_str(&format!(" {{{}}}", print_assigns(&ctor.init_assignments)));
    }
    out.push_str(&format!(" {}\n", machine.state_name(machine.initial)));

    for t in &machine.transitions {
        out.push_str(machine.state_name(t.source));
        if t.label.guard != Expr::Bool(true) {
            out.push_str(&format!(" {{{}}}", t.label.guard));
        }
        out.push_str(&format!(
            " {} > {}.{}({})",
            t.label.participant,
            machine.coordinator,
            t.label.function,
            print_decls(&t.label.decls)
        ));
        if !t.label.assignments.is_empty() {
            out.push_str(&format!(" {{{}}}", print_assigns(&t.label.assignments)));
        }
        out.push_str(&format!(" {}\n", machine.state_name(t.target)));
    }

    // Sorted by name so the canonical form is independent of interning.
    let mut accept_names: Vec<&str> = machine
        .accepting
        .iter()
        .map(|&s| machine.state_name(s))
        .collect();
    accept_names.sort_unstable();
    out.push_str(&format!("accept {}\n", accept_names.join(" ")));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_machines;

    #[test]
    fn sample_transition_line() {
        let m =
            parse("_ o:O > starts c(int _price) {price := _price} S0\nS0 {_offer > 0} b:B > c.makeOffer(int _offer) {offer := _offer} S1\naccept S1\n")
                .expect("parses");
        assert_eq!(m.transitions.len(), 1);
        let t = &m.transitions[0];
        assert_eq!(m.state_name(t.source), "S0");
        assert_eq!(m.state_name(t.target), "S1");
        assert_eq!(t.label.function, "makeOffer");
        assert_eq!(
            t.label.participant,
            QualifiedParticipant::Fresh { var: "b".into(), role: "B".into() }
        );
        assert_eq!(
            t.label.guard,
            Expr::binary(BinOp::Gt, Expr::var("_offer"), Expr::Int(0))
        );
        assert_eq!(t.label.decls.len(), 1);
        assert_eq!(
            t.label.assignments,
            vec![Assignment { lhs: "offer".into(), rhs: Expr::var("_offer") }]
        );
        assert_eq!(m.state_vars.get("offer"), Some(&DataType::Int));
        assert_eq!(m.state_vars.get("price"), Some(&DataType::Int));
    }

    #[test]
    fn omitted_guard_is_true_and_omitted_assigns_are_empty() {
        let m = parse(test_machines::SMP).unwrap();
        let accept = m
            .transitions
            .iter()
            .find(|t| t.label.function == "acceptOffer")
            .unwrap();
        assert_eq!(accept.label.guard, Expr::Bool(true));
        assert_eq!(
            accept.label.participant,
            QualifiedParticipant::Bound { var: "o".into() }
        );
        assert!(accept.label.decls.is_empty());
        assert!(accept.label.assignments.is_empty());
    }

    #[test]
    fn malformed_expression_reports_span_at_brace() {
        let err = parse("_ o:O > starts c() s0\ns0 {x > } o > c.f() s1\naccept s1\n").unwrap_err();
        let e = err
            .iter()
            .find(|e| e.kind == ParseErrorKind::Grammar)
            .expect("grammar error");
        assert_eq!(e.span.line, 2);
        // The error points at the closing brace.
        assert_eq!(e.span.cols.start, 8);
    }

    #[test]
    fn all_examples_round_trip() {
        for text in [
            test_machines::SMP,
            test_machines::D1,
            test_machines::D2,
            test_machines::D3,
            test_machines::D4,
        ] {
            let m = parse(text).expect("example parses");
            let printed = print(&m);
            let again = parse(&printed).expect("printed form parses");
            assert!(again.structurally_eq(&m), "round trip failed:\n{printed}");
        }
    }

    #[test]
    fn true_guard_is_not_printed() {
        let m = parse(test_machines::D4).unwrap();
        let printed = print(&m);
        assert!(printed.contains("s0 o > c.f1() {x := x + 1} s1"));
        assert!(!printed.contains("{true}"));
    }

    #[test]
    fn duplicate_constructor_is_reported() {
        let text = "_ o:O > starts c() s0\n_ p:P > starts c() s0\ns0 o > c.f() s1\naccept s1\n";
        let errs = parse(text).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| e.kind == ParseErrorKind::DuplicateConstructor && e.span.line == 2));
    }

    #[test]
    fn coordinator_mismatch_is_reported() {
        let text = "_ o:O > starts c() s0\ns0 o > d.f() s1\naccept s1\n";
        let errs = parse(text).unwrap_err();
        assert!(errs.iter().any(|e| e.span.line == 2 && e.message.contains("coordinator")));
    }

    #[test]
    fn parse_never_panics_on_junk() {
        for junk in [
            "",
            "\n\n\n",
            "_",
            "_ o",
            "_ o:O > starts",
            "accept",
            "}{)(",
            "_ o:O > starts c() s0\ns0 {1 +} o > c.f() s1\naccept s1",
            "\u{1F600} emoji",
        ] {
            let _ = parse(junk);
        }
    }

    #[test]
    fn bool_state_vars_are_inferred() {
        let text = "_ o:O > starts c() {open := true} s0\ns0 {open} o > c.f() {open := false} s1\naccept s1\n";
        let m = parse(text).unwrap();
        assert_eq!(m.state_vars.get("open"), Some(&DataType::Bool));
    }
}
