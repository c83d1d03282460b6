//! Line-oriented spec file parser.
//!
//! ```text
//! # comment
//! obs_dim 6
//! param h0 = 1.4
//! pred hover := min(0.2*h0 - abs(o[1] - 0.8*h0), 0.1 - abs(o[3]))
//! formula := [H^100 hover]^[0,150] . [H^150 align]^[100,300]
//! ```
//!
//! Formula grammar, loosest to tightest:
//!
//! ```text
//! formula   := concatseq ("|" concatseq)*
//! concatseq := primary ("." primary)*
//! primary   := "H^" INT (IDENT | "T") | "[" formula "]^[" INT "," INT "]" | "(" formula ")"
//! ```
//!
//! The formula directive must come last; it may continue over the following lines.

use std::fmt;

use super::formula::{Formula, Target};
use super::predicate::PredicateExpr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(" or "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    HoldKw,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Caret,
    Comma,
    Dot,
    Pipe,
    Plus,
    Minus,
    Star,
    Assign,
    Eq,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Num(s) => format!("number `{s}`"),
            Tok::HoldKw => "`H^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Caret => "`^`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Assign => "`:=`".into(),
            Tok::Eq => "`=`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex_line(text: &str, line: usize, col_offset: usize, floats: bool, out: &mut Vec<Spanned>) -> Result<(), ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = col_offset + i + 1;
        let push = |out: &mut Vec<Spanned>, tok| out.push(Spanned { tok, line, column });
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == 'H' && chars.get(i + 1) == Some(&'^') {
            push(out, Tok::HoldKw);
            i += 2;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            push(out, Tok::Ident(chars[start..i].iter().collect()));
            continue;
        }
        if c.is_ascii_digit() || (floats && c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if floats {
                if i < chars.len() && chars[i] == '.' {
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
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
            }
            push(out, Tok::Num(chars[start..i].iter().collect()));
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '^' => Tok::Caret,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            '|' => Tok::Pipe,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '=' => Tok::Eq,
            ':' if chars.get(i + 1) == Some(&'=') => {
                push(out, Tok::Assign);
                i += 2;
                continue;
            }
            other => {
                return Err(ParseError {
                    line,
                    column,
                    message: format!("unexpected character `{other}`"),
                    expected: vec![],
                })
            }
        };
        push(out, tok);
        i += 1;
    }
    Ok(())
}

struct Cursor {
    toks: Vec<Spanned>,
    pos: usize,
    // position reported when input runs out
    end: (usize, usize),
}

impl Cursor {
    fn new(toks: Vec<Spanned>, end: (usize, usize)) -> Self {
        Cursor { toks, pos: 0, end }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map(|s| (s.line, s.column)).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        self.pos += 1;
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let (line, column) = self.here();
        let message = match self.peek() {
            Some(t) => format!("unexpected {}", t.describe()),
            None => "unexpected end of input".to_string(),
        };
        ParseError { line, column, message, expected: expected.iter().map(|s| s.to_string()).collect() }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&[what]))
        }
    }

    fn expect_int(&mut self) -> Result<usize, ParseError> {
        match self.peek() {
            Some(Tok::Num(s)) => {
                let (line, column) = self.here();
                let v = s.parse::<usize>().map_err(|_| ParseError {
                    line,
                    column,
                    message: format!("`{s}` is not a non-negative integer"),
                    expected: vec![],
                })?;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.error(&["integer"])),
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        if self.pos < self.toks.len() {
            Err(self.error(&["end of input"]))
        } else {
            Ok(())
        }
    }
}

fn parse_formula(c: &mut Cursor) -> Result<Formula, ParseError> {
    let mut left = parse_concat(c)?;
    while c.peek() == Some(&Tok::Pipe) {
        c.bump();
        let right = parse_concat(c)?;
        left = Formula::disj(left, right);
    }
    Ok(left)
}

fn parse_concat(c: &mut Cursor) -> Result<Formula, ParseError> {
    let mut left = parse_primary(c)?;
    while c.peek() == Some(&Tok::Dot) {
        c.bump();
        let right = parse_primary(c)?;
        left = Formula::concat(left, right);
    }
    Ok(left)
}

fn parse_primary(c: &mut Cursor) -> Result<Formula, ParseError> {
    match c.peek() {
        Some(Tok::HoldKw) => {
            c.bump();
            let duration = c.expect_int()?;
            let target = match c.peek() {
                Some(Tok::Ident(name)) if name == "T" => Target::True,
                Some(Tok::Ident(name)) => Target::Atom(name.clone()),
                _ => return Err(c.error(&["proposition name", "`T`"])),
            };
            c.bump();
            Ok(Formula::hold(duration, target))
        }
        Some(Tok::LBracket) => {
            c.bump();
            let inner = parse_formula(c)?;
            c.expect(Tok::RBracket, "`]`")?;
            c.expect(Tok::Caret, "`^`")?;
            c.expect(Tok::LBracket, "`[`")?;
            let (line, column) = c.here();
            let start = c.expect_int()?;
            c.expect(Tok::Comma, "`,`")?;
            let end = c.expect_int()?;
            c.expect(Tok::RBracket, "`]`")?;
            if start > end {
                return Err(ParseError {
                    line,
                    column,
                    message: format!("within window [{start},{end}] has start after end"),
                    expected: vec![],
                });
            }
            Ok(Formula::within(inner, start, end))
        }
        Some(Tok::LParen) => {
            c.bump();
            let f = parse_formula(c)?;
            c.expect(Tok::RParen, "`)`")?;
            Ok(f)
        }
        _ => Err(c.error(&["`H^`", "`[`", "`(`"])),
    }
}

const FUNCTIONS: [&str; 5] = ["abs", "sqrt", "min", "max", "ind"];

/// Names that cannot be used for params or predicates.
pub(crate) fn is_reserved(name: &str) -> bool {
    name == "o" || name == "T" || name == "H" || FUNCTIONS.contains(&name)
}

fn parse_expr(c: &mut Cursor) -> Result<PredicateExpr, ParseError> {
    let mut left = parse_term(c)?;
    loop {
        match c.peek() {
            Some(Tok::Plus) => {
                c.bump();
                left = PredicateExpr::Add(Box::new(left), Box::new(parse_term(c)?));
            }
            Some(Tok::Minus) => {
                c.bump();
                left = PredicateExpr::Sub(Box::new(left), Box::new(parse_term(c)?));
            }
            _ => return Ok(left),
        }
    }
}

fn parse_term(c: &mut Cursor) -> Result<PredicateExpr, ParseError> {
    let mut left = parse_unary(c)?;
    while c.peek() == Some(&Tok::Star) {
        c.bump();
        left = PredicateExpr::Mul(Box::new(left), Box::new(parse_unary(c)?));
    }
    Ok(left)
}

fn parse_unary(c: &mut Cursor) -> Result<PredicateExpr, ParseError> {
    if c.peek() == Some(&Tok::Minus) {
        c.bump();
        return Ok(PredicateExpr::Neg(Box::new(parse_unary(c)?)));
    }
    parse_atom(c)
}

fn parse_atom(c: &mut Cursor) -> Result<PredicateExpr, ParseError> {
    let (line, column) = c.here();
    match c.peek().cloned() {
        Some(Tok::Num(s)) => {
            c.bump();
            let v = s.parse::<f64>().map_err(|_| ParseError {
                line,
                column,
                message: format!("malformed number `{s}`"),
                expected: vec![],
            })?;
            Ok(PredicateExpr::Const(v))
        }
        Some(Tok::LParen) => {
            c.bump();
            let e = parse_expr(c)?;
            c.expect(Tok::RParen, "`)`")?;
            Ok(e)
        }
        Some(Tok::Ident(name)) if name == "o" => {
            c.bump();
            c.expect(Tok::LBracket, "`[`")?;
            let i = c.expect_int()?;
            c.expect(Tok::RBracket, "`]`")?;
            Ok(PredicateExpr::Obs(i))
        }
        Some(Tok::Ident(name)) if FUNCTIONS.contains(&name.as_str()) => {
            c.bump();
            c.expect(Tok::LParen, "`(`")?;
            let mut args = vec![parse_expr(c)?];
            while c.peek() == Some(&Tok::Comma) {
                c.bump();
                args.push(parse_expr(c)?);
            }
            c.expect(Tok::RParen, "`)` or `,`")?;
            let one = |mut args: Vec<PredicateExpr>| -> Result<Box<PredicateExpr>, ParseError> {
                if args.len() != 1 {
                    return Err(ParseError {
                        line,
                        column,
                        message: format!("`{name}` takes exactly one argument, got {}", args.len()),
                        expected: vec![],
                    });
                }
                Ok(Box::new(args.pop().unwrap()))
            };
            Ok(match name.as_str() {
                "abs" => PredicateExpr::Abs(one(args)?),
                "sqrt" => PredicateExpr::Sqrt(one(args)?),
                "ind" => PredicateExpr::Ind(one(args)?),
                "min" => PredicateExpr::Min(args),
                _ => PredicateExpr::Max(args),
            })
        }
        Some(Tok::Ident(name)) => {
            c.bump();
            Ok(PredicateExpr::Param(name))
        }
        _ => Err(c.error(&["number", "`o[`", "parameter", "function", "`(`", "`-`"])),
    }
}

/// One directive of a spec file, before any semantic validation.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Directive {
    ObsDim { value: usize, line: usize },
    Param { name: String, value: f64, line: usize },
    Pred { name: String, expr: PredicateExpr, line: usize },
    Formula { formula: Formula, line: usize },
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_ident(c: &mut Cursor, what: &str) -> Result<String, ParseError> {
    match c.peek().cloned() {
        Some(Tok::Ident(name)) => {
            if is_reserved(&name) {
                let (line, column) = c.here();
                return Err(ParseError { line, column, message: format!("`{name}` is a reserved name"), expected: vec![] });
            }
            c.bump();
            Ok(name)
        }
        _ => Err(c.error(&[what])),
    }
}

pub(crate) fn parse_directives(text: &str) -> Result<Vec<Directive>, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    let mut idx = 0;
    while idx < lines.len() {
        let lineno = idx + 1;
        let raw = strip_comment(lines[idx]);
        idx += 1;
        let trimmed = raw.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        let indent = raw.len() - trimmed.len();
        let keyword_len = trimmed.find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_')).unwrap_or(trimmed.len());
        let keyword = &trimmed[..keyword_len];
        let rest_col = indent + keyword_len;
        let rest = &trimmed[keyword_len..];
        let end_of_line = (lineno, raw.chars().count() + 1);
        match keyword {
            "obs_dim" => {
                let mut toks = Vec::new();
                lex_line(rest, lineno, rest_col, false, &mut toks)?;
                let mut c = Cursor::new(toks, end_of_line);
                let value = c.expect_int()?;
                c.finish()?;
                out.push(Directive::ObsDim { value, line: lineno });
            }
            "param" => {
                let mut toks = Vec::new();
                lex_line(rest, lineno, rest_col, true, &mut toks)?;
                let mut c = Cursor::new(toks, end_of_line);
                let name = parse_ident(&mut c, "parameter name")?;
                c.expect(Tok::Eq, "`=`")?;
                let negative = if c.peek() == Some(&Tok::Minus) {
                    c.bump();
                    true
                } else {
                    false
                };
                let (line, column) = c.here();
                let value = match c.bump() {
                    Some(Tok::Num(s)) => s.parse::<f64>().map_err(|_| ParseError {
                        line,
                        column,
                        message: format!("malformed number `{s}`"),
                        expected: vec![],
                    })?,
                    _ => {
                        c.pos -= 1;
                        return Err(c.error(&["number"]));
                    }
                };
                c.finish()?;
                out.push(Directive::Param { name, value: if negative { -value } else { value }, line: lineno });
            }
            "pred" => {
                let mut toks = Vec::new();
                lex_line(rest, lineno, rest_col, true, &mut toks)?;
                let mut c = Cursor::new(toks, end_of_line);
                let name = parse_ident(&mut c, "predicate name")?;
                c.expect(Tok::Assign, "`:=`")?;
                let expr = parse_expr(&mut c)?;
                c.finish()?;
                out.push(Directive::Pred { name, expr, line: lineno });
            }
            "formula" => {
                let mut toks = Vec::new();
                lex_line(rest, lineno, rest_col, false, &mut toks)?;
                let mut end = end_of_line;
                while idx < lines.len() {
                    let cont = strip_comment(lines[idx]);
                    lex_line(cont, idx + 1, 0, false, &mut toks)?;
                    if !cont.trim().is_empty() {
                        end = (idx + 1, cont.chars().count() + 1);
                    }
                    idx += 1;
                }
                let mut c = Cursor::new(toks, end);
                c.expect(Tok::Assign, "`:=`")?;
                let formula = parse_formula(&mut c)?;
                c.finish()?;
                out.push(Directive::Formula { formula, line: lineno });
            }
            _ => {
                return Err(ParseError {
                    line: lineno,
                    column: indent + 1,
                    message: if keyword.is_empty() {
                        format!("unexpected `{}`", trimmed.chars().next().unwrap_or(' '))
                    } else {
                        format!("unknown directive `{keyword}`")
                    },
                    expected: vec!["`obs_dim`".into(), "`param`".into(), "`pred`".into(), "`formula`".into()],
                })
            }
        }
    }
    Ok(out)
}

/// Parse a bare formula (no spec file around it).
pub fn parse_formula_str(text: &str) -> Result<Formula, ParseError> {
    let mut toks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        lex_line(line, i + 1, 0, false, &mut toks)?;
    }
    let end = (text.lines().count().max(1), text.lines().last().map_or(0, |l| l.chars().count()) + 1);
    let mut c = Cursor::new(toks, end);
    let f = parse_formula(&mut c)?;
    c.finish()?;
    Ok(f)
}

/// Parse a bare predicate expression.
pub fn parse_predicate_str(text: &str) -> Result<PredicateExpr, ParseError> {
    let mut toks = Vec::new();
    lex_line(text, 1, 0, true, &mut toks)?;
    let mut c = Cursor::new(toks, (1, text.chars().count() + 1));
    let e = parse_expr(&mut c)?;
    c.finish()?;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hold_and_within_concat() {
        assert_eq!(parse_formula_str("H^2 A").unwrap(), Formula::atom(2, "A"));
        let f = parse_formula_str("[H^2 A]^[0,5] . H^1 B").unwrap();
        assert_eq!(f, Formula::concat(Formula::within(Formula::atom(2, "A"), 0, 5), Formula::atom(1, "B")));
    }

    #[test]
    fn precedence_and_associativity() {
        let f = parse_formula_str("H^1 A . H^2 B | H^0 T . H^3 C . H^4 D").unwrap();
        let left = Formula::concat(Formula::atom(1, "A"), Formula::atom(2, "B"));
        let right = Formula::concat(
            Formula::concat(Formula::hold(0, Target::True), Formula::atom(3, "C")),
            Formula::atom(4, "D"),
        );
        assert_eq!(f, Formula::disj(left, right));
        let g = parse_formula_str("H^1 A | H^2 B | H^3 C").unwrap();
        assert!(matches!(g, Formula::Disj(ref l, _) if matches!(**l, Formula::Disj(..))));
    }

    #[test]
    fn dense_spacing() {
        let f = parse_formula_str("[H^2 A]^[0,5].(H^1 B|H^0 T)").unwrap();
        assert_eq!(f.time_horizon(), 5 + 1 + 1);
    }

    #[test]
    fn syntax_errors_carry_position() {
        let e = parse_formula_str("[H^2 A]^[0 5]").unwrap_err();
        assert_eq!((e.line, e.column), (1, 12));
        assert_eq!(e.expected, vec!["`,`".to_string()]);
        let e = parse_formula_str("H^2").unwrap_err();
        assert!(e.message.contains("end of input"));
        let e = parse_formula_str("[H^1 A]^[4,2]").unwrap_err();
        assert!(e.message.contains("start after end"));
        let e = parse_formula_str("H^1 A . ").unwrap_err();
        assert_eq!(e.expected.len(), 3);
    }

    #[test]
    fn expressions() {
        let e = parse_predicate_str("min(0.1 - abs(o[3]), -2.5e-1 * k)").unwrap();
        assert_eq!(e.to_string(), "min(0.1 - abs(o[3]), -0.25 * k)");
        let e = parse_predicate_str("1 - 2 - 3").unwrap();
        assert_eq!(e.eval(&[], &Default::default()).unwrap(), -4.0);
        let e = parse_predicate_str("-o[0] * 2 + 1").unwrap();
        assert_eq!(e.eval(&[3.0], &Default::default()).unwrap(), -5.0);
        assert!(parse_predicate_str("abs(o[0], o[1])").is_err());
        assert!(parse_predicate_str("o[0] +").is_err());
        assert!(parse_predicate_str("o[0] $ 1").is_err());
    }

    #[test]
    fn formula_continues_over_lines() {
        let text = "obs_dim 1\npred a := o[0]\nformula := H^1 a .\n   # note\n  H^2 a\n";
        let ds = parse_directives(text).unwrap();
        assert!(matches!(&ds[2], Directive::Formula { formula, .. } if formula.time_horizon() == 4));
    }

    #[test]
    fn reserved_names_are_rejected() {
        let e = parse_directives("obs_dim 1\npred min := o[0]\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("reserved"));
    }
}
