//! Surface syntax: a small ASCII language for terms, formulas, hybrid
//! programs and sectioned model files.
//!
//! Formula precedence, tightest first: `!`, `&`, `|`, `->` (right
//! associative), `<->` (left associative). `forall`, `exists`, `[a]` and
//! `<a>` extend as far right as possible. Programs: postfix `*` binds
//! tightest, then `;` (right associative, a trailing `;` is allowed), then
//! `++` (right associative).

mod lexer;
mod model_file;
mod printer;

use std::collections::BTreeSet;
use std::fmt;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

use crate::ast::{desugar_if, CmpOp, DlFormula, FolFormula, HybridProgram, OdeSystem, Term};
use crate::real::parse_decimal;
use lexer::{tokenize, Tok, Token};

pub use model_file::{needs_box, parse_fragment, parse_model, parse_model_with_fragments, Fragment, DEFAULT_BOUND};
pub use printer::{print_dl, print_fol, print_model, print_program, print_term};

/// Location of a piece of source text. Lines and columns are 1-based;
/// columns count characters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub col: usize,
}

impl SourceSpan {
    pub fn locate(doc: &str, start: usize, end: usize) -> SourceSpan {
        let start = start.min(doc.len());
        let end = end.clamp(start, doc.len());
        let before = &doc[..start];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        let col = doc[line_start..start].chars().count() + 1;
        SourceSpan { start, end, line, col }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{line}:{col}: {message}", line = span.line, col = span.col)]
pub struct ParseError {
    pub message: String,
    pub span: SourceSpan,
}

impl ParseError {
    pub fn new(message: impl Into<String>, span: SourceSpan) -> Self {
        ParseError { message: message.into(), span }
    }
}

type PResult<T> = Result<T, ParseError>;

const KEYWORDS: &[&str] = &["true", "false", "forall", "exists", "if"];

pub(crate) struct Parser<'a> {
    doc: &'a str,
    toks: Vec<Token>,
    pos: usize,
}

impl<'a> Parser<'a> {
    /// Parser over `doc[base..base + text.len()]` where `text` is that slice.
    pub(crate) fn new(doc: &'a str, base: usize, text: &str) -> PResult<Self> {
        Ok(Parser { doc, toks: tokenize(text, base, doc)?, pos: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn span_here(&self) -> SourceSpan {
        let t = &self.toks[self.pos];
        SourceSpan::locate(self.doc, t.start, t.end)
    }

    pub(crate) fn span_from(&self, start_tok: usize) -> SourceSpan {
        let start = self.toks[start_tok].start;
        let end = if self.pos > start_tok { self.toks[self.pos - 1].end } else { self.toks[start_tok].end };
        SourceSpan::locate(self.doc, start, end)
    }

    pub(crate) fn error_expected(&self, expected: &str) -> ParseError {
        self.error_here(expected)
    }

    fn error_here(&self, expected: &str) -> ParseError {
        ParseError::new(format!("expected {expected}, found {}", self.peek().describe()), self.span_here())
    }

    fn expect(&mut self, tok: Tok) -> PResult<Token> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            Err(self.error_here(&format!("`{}`", tok_text(&tok))))
        }
    }

    pub(crate) fn expect_eof(&self) -> PResult<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            Err(ParseError::new(format!("unexpected {}", self.peek().describe()), self.span_here()))
        }
    }

    pub(crate) fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    pub(crate) fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                self.bump();
                Ok(name)
            }
            _ => Err(self.error_here("an identifier")),
        }
    }

    pub(crate) fn peek_ident(&self) -> Option<&str> {
        match self.peek() {
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => Some(name),
            _ => None,
        }
    }

    pub(crate) fn eat_tok(&mut self, tok: Tok) -> bool {
        self.eat(&tok)
    }

    pub(crate) fn expect_tok(&mut self, tok: Tok) -> PResult<()> {
        self.expect(tok).map(|_| ())
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    // ----- terms -------------------------------------------------------

    pub(crate) fn term(&mut self) -> PResult<Term> {
        let mut lhs = self.product()?;
        loop {
            if self.eat(&Tok::Plus) {
                lhs = lhs.add(self.product()?);
            } else if self.eat(&Tok::Minus) {
                lhs = lhs.sub(self.product()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> PResult<Term> {
        let mut lhs = self.unary_term()?;
        loop {
            if self.eat(&Tok::Star) {
                lhs = lhs.mul(self.unary_term()?);
            } else if self.eat(&Tok::Slash) {
                lhs = lhs.div(self.unary_term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary_term(&mut self) -> PResult<Term> {
        if self.eat(&Tok::Minus) {
            if let Tok::Number(text) = self.peek().clone() {
                if *self.peek_at(1) != Tok::Caret {
                    let span = self.span_here();
                    self.bump();
                    let value = number_value(&text, span)?;
                    return Ok(Term::Const(-value));
                }
            }
            return Ok(self.unary_term()?.neg());
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Term> {
        let base = self.primary_term()?;
        if self.eat(&Tok::Caret) {
            let span = self.span_here();
            let exponent = match self.bump().tok {
                Tok::Number(text) if text.chars().all(|c| c.is_ascii_digit()) => {
                    text.parse::<u32>().map_err(|_| ParseError::new("exponent too large", span))?
                }
                _ => return Err(ParseError::new("expected a natural-number exponent", span)),
            };
            if *self.peek() == Tok::Caret {
                return Err(ParseError::new("chained powers need parentheses", self.span_here()));
            }
            return Ok(base.pow(exponent));
        }
        Ok(base)
    }

    fn primary_term(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Number(text) => {
                let span = self.span_here();
                self.bump();
                Ok(Term::Const(number_value(&text, span)?))
            }
            Tok::Ident(_) => Ok(Term::Var(self.ident().map_err(|_| self.error_here("a term"))?)),
            Tok::LParen => {
                self.bump();
                let t = self.term()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            _ => Err(self.error_here("a term")),
        }
    }

    // ----- formulas ----------------------------------------------------

    pub(crate) fn formula(&mut self) -> PResult<DlFormula> {
        let mut lhs = self.implication()?;
        while self.eat(&Tok::Iff) {
            let rhs = self.implication()?;
            lhs = dl_iff(lhs, rhs);
        }
        Ok(lhs)
    }

    fn implication(&mut self) -> PResult<DlFormula> {
        let lhs = self.disjunction()?;
        if self.eat(&Tok::Arrow) {
            let rhs = self.implication()?;
            return Ok(lhs.implies(rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> PResult<DlFormula> {
        let mut lhs = self.conjunction()?;
        while self.eat(&Tok::Bar) {
            lhs = lhs.or(self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> PResult<DlFormula> {
        let mut lhs = self.unary_formula()?;
        while self.eat(&Tok::Amp) {
            lhs = lhs.and(self.unary_formula()?);
        }
        Ok(lhs)
    }

    fn unary_formula(&mut self) -> PResult<DlFormula> {
        match self.peek().clone() {
            Tok::Bang => {
                self.bump();
                Ok(self.unary_formula()?.not())
            }
            Tok::Ident(kw) if kw == "forall" || kw == "exists" => {
                self.bump();
                let var = self.ident()?;
                let body = self.formula()?;
                Ok(if kw == "forall" { DlFormula::forall(var, body) } else { DlFormula::exists(var, body) })
            }
            Tok::LBracket => {
                self.bump();
                let program = self.program()?;
                self.expect(Tok::RBracket)?;
                let post = self.formula()?;
                Ok(DlFormula::boxed(program, post))
            }
            Tok::Lt => {
                self.bump();
                let program = self.program()?;
                self.expect(Tok::Gt)?;
                let post = self.formula()?;
                Ok(DlFormula::diamond(program, post))
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> PResult<DlFormula> {
        match self.peek() {
            Tok::Ident(kw) if kw == "true" => {
                self.bump();
                return Ok(DlFormula::Lifted(FolFormula::True));
            }
            Tok::Ident(kw) if kw == "false" => {
                self.bump();
                return Ok(DlFormula::Lifted(FolFormula::False));
            }
            _ => {}
        }
        let start = self.pos;
        let first = match self.comparison() {
            Ok(f) => return Ok(DlFormula::Lifted(f)),
            Err(e) => e,
        };
        let after_first = self.pos;
        self.pos = start;
        if *self.peek() == Tok::LParen {
            self.bump();
            let second = self.formula().and_then(|f| self.expect(Tok::RParen).map(|_| f));
            match second {
                Ok(f) => return Ok(f),
                Err(e) => return Err(furthest(first, e)),
            }
        }
        self.pos = after_first;
        Err(first)
    }

    fn comparison(&mut self) -> PResult<FolFormula> {
        let lhs = self.term()?;
        let op = match self.peek() {
            Tok::Ge => CmpOp::Ge,
            Tok::Gt => CmpOp::Gt,
            Tok::Le => CmpOp::Le,
            Tok::Lt => CmpOp::Lt,
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            _ => return Err(self.error_here("a comparison operator")),
        };
        self.bump();
        let rhs = self.term()?;
        Ok(FolFormula::Cmp(op, lhs, rhs))
    }

    /// Modality-free formula (used for tests, domains and model sections).
    pub(crate) fn fol(&mut self) -> PResult<FolFormula> {
        let start = self.pos;
        let f = self.formula()?;
        self.into_fol(f, start)
    }

    fn into_fol(&self, f: DlFormula, start: usize) -> PResult<FolFormula> {
        match f.normalize() {
            DlFormula::Lifted(f) => Ok(f),
            _ => Err(ParseError::new("modalities are not allowed in a first-order formula", self.span_from(start))),
        }
    }

    // ----- programs ----------------------------------------------------

    pub(crate) fn program(&mut self) -> PResult<HybridProgram> {
        let lhs = self.sequence()?;
        if self.eat(&Tok::PlusPlus) {
            let rhs = self.program()?;
            return Ok(lhs.choice(rhs));
        }
        Ok(lhs)
    }

    fn sequence(&mut self) -> PResult<HybridProgram> {
        let first = self.repetition()?;
        if self.eat(&Tok::Semi) && self.starts_program() {
            let rest = self.sequence()?;
            return Ok(first.seq(rest));
        }
        Ok(first)
    }

    fn starts_program(&self) -> bool {
        match self.peek() {
            Tok::Question | Tok::LBrace => true,
            Tok::Ident(name) => name == "if" || !KEYWORDS.contains(&name.as_str()),
            _ => false,
        }
    }

    fn repetition(&mut self) -> PResult<HybridProgram> {
        let mut p = self.program_atom()?;
        while self.eat(&Tok::Star) {
            p = p.repeat();
        }
        Ok(p)
    }

    fn program_atom(&mut self) -> PResult<HybridProgram> {
        match self.peek().clone() {
            Tok::Question => {
                self.bump();
                let start = self.pos;
                let f = self.unary_formula()?;
                Ok(HybridProgram::Test(self.into_fol(f, start)?))
            }
            Tok::LBrace => {
                self.bump();
                let is_ode = matches!(self.peek(), Tok::Ident(n) if n.ends_with('\'')) && *self.peek_at(1) == Tok::Eq;
                let p = if is_ode { self.ode()? } else { self.program()? };
                self.expect(Tok::RBrace)?;
                Ok(p)
            }
            Tok::Ident(kw) if kw == "if" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let cond = self.fol()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::LBrace)?;
                let body = self.program()?;
                self.expect(Tok::RBrace)?;
                Ok(desugar_if(cond, body))
            }
            Tok::Ident(_) => {
                let var = self.ident()?;
                self.expect(Tok::Assign)?;
                if self.eat(&Tok::Star) {
                    Ok(HybridProgram::RandomAssign(var))
                } else {
                    Ok(HybridProgram::Assign(var, self.term()?))
                }
            }
            _ => Err(self.error_here("a program")),
        }
    }

    fn ode(&mut self) -> PResult<HybridProgram> {
        let mut equations: Vec<(String, Term)> = Vec::new();
        let mut seen = BTreeSet::new();
        loop {
            let span = self.span_here();
            let lhs = match self.bump().tok {
                Tok::Ident(name) if name.ends_with('\'') => name[..name.len() - 1].to_string(),
                _ => return Err(ParseError::new("expected a derivative `x'`", span)),
            };
            if !seen.insert(lhs.clone()) {
                return Err(ParseError::new(format!("duplicate differential equation for `{lhs}`"), span));
            }
            self.expect(Tok::Eq)?;
            equations.push((lhs, self.term()?));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        let domain = if self.eat(&Tok::Amp) { self.fol()? } else { FolFormula::True };
        Ok(HybridProgram::Ode(OdeSystem { equations, domain }))
    }
}

fn tok_text(tok: &Tok) -> String {
    match tok.describe().strip_prefix('`').and_then(|s| s.strip_suffix('`')) {
        Some(s) => s.to_string(),
        None => tok.describe(),
    }
}

fn furthest(a: ParseError, b: ParseError) -> ParseError {
    if b.span.start >= a.span.start {
        b
    } else {
        a
    }
}

fn number_value(text: &str, span: SourceSpan) -> PResult<BigRational> {
    parse_decimal(text).ok_or_else(|| ParseError::new(format!("malformed number `{text}`"), span))
}

/// `a <-> b`; first-order when both sides are, otherwise two implications.
pub fn dl_iff(a: DlFormula, b: DlFormula) -> DlFormula {
    match (a, b) {
        (DlFormula::Lifted(a), DlFormula::Lifted(b)) => DlFormula::Lifted(a.iff(b)),
        (a, b) => a.clone().implies(b.clone()).and(b.implies(a)),
    }
}

fn whole<T>(text: &str, f: impl FnOnce(&mut Parser) -> PResult<T>) -> PResult<T> {
    let mut p = Parser::new(text, 0, text)?;
    let v = f(&mut p)?;
    p.expect_eof()?;
    Ok(v)
}

/// Parse a standalone dL formula. The result is in canonical form (maximal
/// first-order subtrees lifted).
pub fn parse_formula(text: &str) -> Result<DlFormula, ParseError> {
    whole(text, |p| p.formula()).map(DlFormula::normalize)
}

pub fn parse_fol(text: &str) -> Result<FolFormula, ParseError> {
    whole(text, |p| p.fol())
}

pub fn parse_program(text: &str) -> Result<HybridProgram, ParseError> {
    whole(text, |p| p.program())
}

pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    whole(text, |p| p.term())
}

/// Evaluate a closed constant term exactly (used for constant values).
pub(crate) fn constant_value(term: &Term) -> Option<BigRational> {
    use num_traits::Zero;
    Some(match term {
        Term::Const(c) => c.clone(),
        Term::Var(_) => return None,
        Term::Add(a, b) => constant_value(a)? + constant_value(b)?,
        Term::Sub(a, b) => constant_value(a)? - constant_value(b)?,
        Term::Mul(a, b) => constant_value(a)? * constant_value(b)?,
        Term::Neg(a) => -constant_value(a)?,
        Term::Div(a, b) => {
            let d = constant_value(b)?;
            if d.is_zero() {
                return None;
            }
            constant_value(a)? / d
        }
        Term::Pow(a, n) => num_traits::pow(constant_value(a)?, n.to_usize()?),
    })
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_term(self))
    }
}

impl fmt::Display for FolFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_fol(self))
    }
}

impl fmt::Display for HybridProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_program(self))
    }
}

impl fmt::Display for DlFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_dl(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(name: &str) -> Term {
        Term::var(name)
    }

    #[test]
    fn guarantee_formula() {
        assert_eq!(parse_formula("x <= xc").unwrap(), DlFormula::Lifted(v("x").le(v("xc"))));
    }

    #[test]
    fn box_of_sequence() {
        let f = parse_formula("[a := *; ?true] true").unwrap();
        let expected = DlFormula::boxed(
            HybridProgram::random("a").seq(HybridProgram::test(FolFormula::True)),
            DlFormula::Lifted(FolFormula::True),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn implication_is_right_associative() {
        let f = parse_fol("p > 0 -> q > 0 -> r > 0").unwrap();
        let p = v("p").gt(Term::int(0));
        let q = v("q").gt(Term::int(0));
        let r = v("r").gt(Term::int(0));
        assert_eq!(f, p.implies(q.implies(r)));
    }

    #[test]
    fn precedence_ladder() {
        let f = parse_fol("!a = 0 & b = 0 | c = 0 -> d = 0 <-> e = 0").unwrap();
        let at = |n: &str| v(n).eq(Term::int(0));
        let expected = at("a").not().and(at("b")).or(at("c")).implies(at("d")).iff(at("e"));
        assert_eq!(f, expected);
    }

    #[test]
    fn quantifier_extends_right() {
        let f = parse_fol("forall x x >= y & y >= 0").unwrap();
        assert_eq!(f, FolFormula::forall("x", v("x").ge(v("y")).and(v("y").ge(Term::int(0)))));
    }

    #[test]
    fn parenthesised_terms_and_formulas() {
        assert_eq!(parse_fol("(x - 1) >= 0").unwrap(), v("x").sub(Term::int(1)).ge(Term::int(0)));
        assert_eq!(parse_fol("(x >= 0)").unwrap(), v("x").ge(Term::int(0)));
        assert_eq!(parse_fol("((x) >= (0))").unwrap(), v("x").ge(Term::int(0)));
    }

    #[test]
    fn negative_literals_fold() {
        assert_eq!(parse_term("-3").unwrap(), Term::int(-3));
        assert_eq!(parse_term("-3^2").unwrap(), Term::int(3).pow(2).neg());
        assert_eq!(parse_term("-(3)").unwrap(), Term::int(3).neg());
        assert_eq!(parse_term("x - -1").unwrap(), v("x").sub(Term::int(-1)));
        assert_eq!(parse_term("v^2/(2*anmin)").unwrap(), v("v").pow(2).div(Term::int(2).mul(v("anmin"))));
    }

    #[test]
    fn programs() {
        let p = parse_program("x := 1; y := *; ?(x > 0)").unwrap();
        let expected = HybridProgram::assign("x", Term::int(1))
            .seq(HybridProgram::random("y").seq(HybridProgram::test(v("x").gt(Term::int(0)))));
        assert_eq!(p, expected);
        assert_eq!(parse_program("x := 1;").unwrap(), HybridProgram::assign("x", Term::int(1)));
        let ode = parse_program("{x' = v, v' = a & v >= 0}").unwrap();
        match ode {
            HybridProgram::Ode(sys) => {
                assert_eq!(sys.equations[0].0, "x");
                assert_eq!(sys.domain, v("v").ge(Term::int(0)));
            }
            other => panic!("not an ODE: {other:?}"),
        }
        let cond = v("x").gt(Term::int(0));
        assert_eq!(
            parse_program("if (x > 0) { y := 1 }").unwrap(),
            desugar_if(cond, HybridProgram::assign("y", Term::int(1)))
        );
        assert_eq!(parse_program("{x := 1}*").unwrap(), HybridProgram::assign("x", Term::int(1)).repeat());
        assert_eq!(
            parse_program("a ++ b := 1 ++ c := 2").unwrap_err().message,
            "expected `:=`, found `++`"
        );
    }

    #[test]
    fn diamond_with_comparison_in_test() {
        let f = parse_formula("<?x > 0> x > 0").unwrap();
        let gt = v("x").gt(Term::int(0));
        assert_eq!(f, DlFormula::diamond(HybridProgram::test(gt.clone()), DlFormula::Lifted(gt)));
    }

    #[test]
    fn duplicate_ode_variable_rejected() {
        let err = parse_program("{x' = 1, x' = 2}").unwrap_err();
        assert!(err.message.contains("duplicate"));
    }

    #[test]
    fn errors_carry_spans_inside_input() {
        for text in ["x >=", "(x >= 0", "[x := 1 true", "x := ", "forall", "x + * 2 > 0", "?(x>0"] {
            let err = parse_formula(text).unwrap_err();
            assert!(err.span.start <= text.len() && err.span.end <= text.len(), "{text}: {err:?}");
        }
        let err = parse_fol("(x >= 0").unwrap_err();
        assert_eq!(err.message, "expected `)`, found end of input");
    }

    #[test]
    fn modal_iff_expands() {
        let f = parse_formula("([x := 1] x > 0) <-> true").unwrap();
        assert!(matches!(f, DlFormula::And(..)));
    }

    mod round_trip {
        use proptest::prelude::*;

        use crate::arbitrary::{self, MAX_DEPTH};
        use crate::parser::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn terms(t in arbitrary::term(MAX_DEPTH)) {
                prop_assert!(arbitrary::term_depth(&t) <= MAX_DEPTH);
                prop_assert_eq!(parse_term(&print_term(&t)).unwrap(), t);
            }

            #[test]
            fn fol_formulas(f in arbitrary::fol(MAX_DEPTH)) {
                prop_assert!(arbitrary::fol_depth(&f) <= MAX_DEPTH);
                prop_assert_eq!(parse_fol(&print_fol(&f)).unwrap(), f);
            }

            #[test]
            fn programs(p in arbitrary::program(MAX_DEPTH)) {
                prop_assert!(arbitrary::program_depth(&p) <= MAX_DEPTH);
                prop_assert_eq!(parse_program(&print_program(&p)).unwrap(), p);
            }

            #[test]
            fn dl_formulas(f in arbitrary::dl(MAX_DEPTH)) {
                prop_assert!(arbitrary::dl_depth(&f) <= MAX_DEPTH);
                let text = print_dl(&f);
                prop_assert_eq!(parse_formula(&text).unwrap(), f);
                prop_assert_eq!(print_dl(&parse_formula(&text).unwrap()), text);
            }
        }
    }
}
