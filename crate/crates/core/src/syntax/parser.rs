//! Recursive-descent parser for expressions and programs.

use std::collections::BTreeMap;

use super::ast::{Expr, Formula, Term, Var};
use super::lexer::{is_keyword, tokenize, Tok, Token};
use crate::error::ParseError;
use crate::structure::SymbolKind;
use crate::weight::{parse_rational, Weight};

pub(crate) type PResult<T> = Result<T, ParseError>;

const CMP_OPS: &[&str] = &["<=", "<", ">=", ">", "=", "!="];
const ARITH_OPS: &[&str] = &["+", "-", "*", "/"];

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Symbol kinds known to the caller; unknown names are classified by
    /// position.
    kinds: BTreeMap<String, SymbolKind>,
    /// Functions bound by enclosing ifp operators.
    bound: Vec<String>,
    best: Option<(usize, ParseError)>,
}

impl Parser {
    pub fn new(toks: Vec<Token>, kinds: BTreeMap<String, SymbolKind>) -> Self {
        Parser { toks, pos: 0, kinds, bound: Vec::new(), best: None }
    }

    pub fn from_text(text: &str, kinds: BTreeMap<String, SymbolKind>) -> PResult<Self> {
        Ok(Parser::new(tokenize(text)?, kinds))
    }

    // -- token helpers --------------------------------------------------

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == kw)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn fail<T>(&mut self, expected: &[&str]) -> PResult<T> {
        let t = &self.toks[self.pos];
        let err = ParseError {
            line: t.line,
            col: t.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.tok.describe(),
        };
        let better = match &self.best {
            Some((p, _)) => self.pos >= *p,
            None => true,
        };
        if better {
            self.best = Some((self.pos, err.clone()));
        }
        Err(err)
    }

    /// The error that got furthest, which is the most useful after
    /// backtracking.
    pub(crate) fn best_error(&self, fallback: ParseError) -> ParseError {
        match &self.best {
            Some((_, e)) => e.clone(),
            None => fallback,
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.fail(&[&format!("`{s}`")])
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.fail(&[&format!("`{kw}`")])
        }
    }

    pub(crate) fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub(crate) fn expect_eof(&mut self) -> PResult<()> {
        if self.at_eof() {
            Ok(())
        } else {
            self.fail(&["end of input"])
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(s)
            }
            _ => self.fail(&["identifier"]),
        }
    }

    fn peek_ident(&self) -> Option<&str> {
        match self.peek() {
            Tok::Ident(s) if !is_keyword(s) => Some(s),
            _ => None,
        }
    }

    /// `( x, y, ... )`, possibly empty.
    fn var_list(&mut self) -> PResult<Vec<Var>> {
        self.expect_sym("(")?;
        let mut vs = Vec::new();
        if self.eat_sym(")") {
            return Ok(vs);
        }
        loop {
            vs.push(self.ident()?);
            if self.eat_sym(")") {
                return Ok(vs);
            }
            if !self.is_sym(",") {
                return self.fail(&["`,`", "`)`"]);
            }
            self.bump();
        }
    }

    fn kind_of(&self, name: &str) -> Option<SymbolKind> {
        if self.bound.iter().any(|b| b == name) {
            return Some(SymbolKind::Function);
        }
        self.kinds.get(name).copied()
    }

    fn next_is_operator(&self) -> bool {
        matches!(self.peek(), Tok::Sym(s) if CMP_OPS.contains(s) || ARITH_OPS.contains(s))
    }

    // -- formulas ---------------------------------------------------------

    /// Implication level (lowest precedence, right associative).
    pub(crate) fn formula(&mut self) -> PResult<Formula> {
        let lhs = self.disjunction()?;
        if self.eat_sym("->") {
            let rhs = self.formula()?;
            Ok(lhs.implies(rhs))
        } else if self.eat_sym("<->") {
            let rhs = self.formula()?;
            Ok(lhs.iff(rhs))
        } else {
            Ok(lhs)
        }
    }

    fn disjunction(&mut self) -> PResult<Formula> {
        let mut f = self.conjunction()?;
        while self.eat_sym("|") {
            f = f.or(self.conjunction()?);
        }
        Ok(f)
    }

    fn conjunction(&mut self) -> PResult<Formula> {
        let mut f = self.unary_formula()?;
        while self.eat_sym("&") {
            f = f.and(self.unary_formula()?);
        }
        Ok(f)
    }

    fn unary_formula(&mut self) -> PResult<Formula> {
        if self.eat_sym("!") {
            return Ok(self.unary_formula()?.not());
        }
        let exists = self.is_kw("exists");
        if exists || self.is_kw("forall") {
            self.bump();
            let mut vs = vec![self.ident()?];
            while self.eat_sym(",") {
                vs.push(self.ident()?);
            }
            let body = self.formula()?;
            return Ok(if exists { Formula::exists_vars(vs, body) } else { Formula::forall_vars(vs, body) });
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Formula> {
        if self.eat_kw("true") {
            return Ok(Formula::Bool(true));
        }
        if self.eat_kw("false") {
            return Ok(Formula::Bool(false));
        }
        if self.is_sym("(") {
            let save = self.pos;
            self.bump();
            if let Ok(f) = self.formula() {
                if self.eat_sym(")") && !self.next_is_operator() {
                    return Ok(f);
                }
            }
            self.pos = save;
            return self.comparison();
        }
        if let Some(name) = self.peek_ident().map(str::to_string) {
            let kind = self.kind_of(&name);
            if kind == Some(SymbolKind::Function) {
                return self.comparison();
            }
            if matches!(self.peek_at(1), Tok::Sym("=") | Tok::Sym("!=")) && kind.is_none() {
                self.bump();
                let negated = matches!(self.bump(), Tok::Sym("!="));
                let rhs = self.ident()?;
                let f = Formula::VarEq(name, rhs);
                return Ok(if negated { f.not() } else { f });
            }
            let save = self.pos;
            self.bump();
            let args = if self.is_sym("(") { self.var_list()? } else { Vec::new() };
            if kind.is_none() && self.next_is_operator() {
                self.pos = save;
                return self.comparison();
            }
            return Ok(Formula::Rel(name, args));
        }
        self.comparison()
    }

    /// Aggregate guard. A parenthesized formula ends the guard even when
    /// the body starts with `-`.
    fn guard(&mut self) -> PResult<Formula> {
        if self.is_sym("(") {
            let save = self.pos;
            self.bump();
            if let Ok(f) = self.formula() {
                if self.eat_sym(")") {
                    return Ok(f);
                }
            }
            self.pos = save;
        }
        self.unary_formula()
    }

    fn comparison(&mut self) -> PResult<Formula> {
        let lhs = self.term()?;
        let op = match self.peek() {
            Tok::Sym(s) if CMP_OPS.contains(s) => *s,
            _ => return self.fail(&["comparison operator"]),
        };
        self.bump();
        let rhs = self.term()?;
        Ok(match op {
            "<=" => Formula::leq(lhs, rhs),
            "<" => Formula::lt(lhs, rhs),
            ">=" => Formula::geq(lhs, rhs),
            ">" => Formula::gt(lhs, rhs),
            "=" => Formula::term_eq(lhs, rhs),
            _ => Formula::term_neq(lhs, rhs),
        })
    }

    // -- terms ------------------------------------------------------------

    pub(crate) fn term(&mut self) -> PResult<Term> {
        let mut t = self.product()?;
        loop {
            if self.eat_sym("+") {
                t = t.add(self.product()?);
            } else if self.eat_sym("-") {
                t = t.sub(self.product()?);
            } else {
                return Ok(t);
            }
        }
    }

    fn product(&mut self) -> PResult<Term> {
        let mut t = self.unary_term()?;
        loop {
            if self.eat_sym("*") {
                t = t.mul(self.unary_term()?);
            } else if self.eat_sym("/") {
                t = t.div(self.unary_term()?);
            } else {
                return Ok(t);
            }
        }
    }

    fn unary_term(&mut self) -> PResult<Term> {
        if self.eat_sym("-") {
            if let Tok::Num(n) = self.peek().clone() {
                self.bump();
                let r = self.number(&n)?;
                return Ok(Term::Const(Weight::Val(-r)));
            }
            let t = self.unary_term()?;
            return Ok(Term::int(0).sub(t));
        }
        self.primary()
    }

    fn number(&mut self, n: &str) -> PResult<num_rational::BigRational> {
        match parse_rational(n) {
            Ok(r) => Ok(r),
            Err(_) => {
                self.pos -= 1;
                self.fail(&["number with nonzero denominator"])
            }
        }
    }

    fn primary(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Term::Const(Weight::Val(self.number(&n)?)))
            }
            Tok::Sym("(") => {
                self.bump();
                let t = self.term()?;
                self.expect_sym(")")?;
                Ok(t)
            }
            Tok::Ident(kw) if is_keyword(&kw) => self.keyword_term(&kw),
            Tok::Ident(name) => {
                self.bump();
                if self.is_sym("(") {
                    let args = self.var_list()?;
                    return Ok(Term::App(name, args));
                }
                if self.kind_of(&name) == Some(SymbolKind::Function) {
                    return Ok(Term::App(name, Vec::new()));
                }
                self.pos -= 1;
                self.fail(&["`(` after function symbol"])
            }
            _ => self.fail(&["term"]),
        }
    }

    fn keyword_term(&mut self, kw: &str) -> PResult<Term> {
        match kw {
            "bot" => {
                self.bump();
                Ok(Term::bot())
            }
            "if" => {
                self.bump();
                let c = self.formula()?;
                self.expect_kw("then")?;
                let a = self.term()?;
                self.expect_kw("else")?;
                let b = self.term()?;
                Ok(Term::ite(c, a, b))
            }
            "sum" | "avg" => {
                self.bump();
                let vs = self.var_list()?;
                self.expect_sym(":")?;
                let g = self.guard()?;
                let body = self.term()?;
                Ok(if kw == "sum" { Term::sum_vars(vs, g, body) } else { Term::avg_vars(vs, g, body) })
            }
            "uniq" => {
                self.bump();
                self.expect_sym("(")?;
                let v = self.ident()?;
                self.expect_sym(")")?;
                self.expect_sym(":")?;
                let g = self.guard()?;
                let body = self.term()?;
                Ok(Term::Uniq(v, Box::new(g), Box::new(body)))
            }
            "ifp" => {
                self.bump();
                let func = self.ident()?;
                let params = self.var_list()?;
                self.expect_sym("<-")?;
                self.bound.push(func.clone());
                let body = self.term();
                self.bound.pop();
                let body = body?;
                self.expect_kw("at")?;
                let args = self.var_list()?;
                Ok(Term::ifp_vars(&func, params, body, args))
            }
            "relu" => {
                self.bump();
                self.expect_sym("(")?;
                let t = self.term()?;
                self.expect_sym(")")?;
                Ok(Term::relu(t))
            }
            _ => self.fail(&["term"]),
        }
    }

    /// A whole input that is a formula or a term; formulas are preferred.
    pub(crate) fn expression(&mut self) -> PResult<Expr> {
        let save = self.pos;
        if let Ok(f) = self.formula() {
            if self.at_eof() {
                return Ok(Expr::Formula(f));
            }
        }
        self.pos = save;
        let t = self.term()?;
        Ok(Expr::Term(t))
    }

    // -- program items ------------------------------------------------------

    pub(crate) fn peek_tok(&self) -> &Tok {
        self.peek()
    }

    pub(crate) fn bump_tok(&mut self) -> Tok {
        self.bump()
    }

    pub(crate) fn eat_symbol(&mut self, s: &str) -> bool {
        self.eat_sym(s)
    }

    pub(crate) fn eat_keyword(&mut self, kw: &str) -> bool {
        self.eat_kw(kw)
    }

    pub(crate) fn expect_symbol(&mut self, s: &str) -> PResult<()> {
        self.expect_sym(s)
    }

    pub(crate) fn identifier(&mut self) -> PResult<String> {
        self.ident()
    }

    pub(crate) fn variables(&mut self) -> PResult<Vec<Var>> {
        self.var_list()
    }

    pub(crate) fn tokens(&self) -> &[Token] {
        &self.toks
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn natural(&mut self) -> PResult<usize> {
        if let Tok::Num(n) = self.peek().clone() {
            if let Ok(k) = n.parse::<usize>() {
                self.bump();
                return Ok(k);
            }
        }
        self.fail(&["natural number"])
    }
}

/// Parses a standalone formula or term.
pub fn parse_expr_text(text: &str, kinds: BTreeMap<String, SymbolKind>) -> PResult<Expr> {
    let mut p = Parser::from_text(text, kinds)?;
    match p.expression().and_then(|e| p.expect_eof().map(|_| e)) {
        Ok(e) => Ok(e),
        Err(e) => Err(p.best_error(e)),
    }
}

pub fn parse_formula_text(text: &str, kinds: BTreeMap<String, SymbolKind>) -> PResult<Formula> {
    let mut p = Parser::from_text(text, kinds)?;
    match p.formula().and_then(|f| p.expect_eof().map(|_| f)) {
        Ok(f) => Ok(f),
        Err(e) => Err(p.best_error(e)),
    }
}

pub fn parse_term_text(text: &str, kinds: BTreeMap<String, SymbolKind>) -> PResult<Term> {
    let mut p = Parser::from_text(text, kinds)?;
    match p.term().and_then(|t| p.expect_eof().map(|_| t)) {
        Ok(t) => Ok(t),
        Err(e) => Err(p.best_error(e)),
    }
}
