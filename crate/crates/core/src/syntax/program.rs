//! Rules, strata and programs, with parse-time validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::ast::{Expr, Formula, Term, Var};
use super::lexer::{tokenize, Tok, Token};
use super::parser::{parse_expr_text, Parser, PResult};
use crate::error::{SyntaxError, ValidationError};
use crate::structure::{SymbolKind, Vocabulary};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub head: String,
    pub vars: Vec<Var>,
    /// A formula for relation heads, a term for weight-function heads.
    pub body: Expr,
}

impl Rule {
    pub fn relation(head: &str, vars: &[&str], body: Formula) -> Self {
        Rule { head: head.to_string(), vars: vars.iter().map(|v| v.to_string()).collect(), body: Expr::Formula(body) }
    }

    pub fn function(head: &str, vars: &[&str], body: Term) -> Self {
        Rule { head: head.to_string(), vars: vars.iter().map(|v| v.to_string()).collect(), body: Expr::Term(body) }
    }

    pub fn kind(&self) -> SymbolKind {
        match self.body {
            Expr::Formula(_) => SymbolKind::Relation,
            Expr::Term(_) => SymbolKind::Function,
        }
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.vars.is_empty() && self.kind() == SymbolKind::Relation {
            write!(f, "{} <- {};", self.head, self.body)
        } else {
            write!(f, "{}({}) <- {};", self.head, self.vars.join(","), self.body)
        }
    }
}

/// One rule per intensional symbol; rule bodies are ifp-free.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stratum {
    pub extensional: Vocabulary,
    pub intensional: Vocabulary,
    pub rules: Vec<Rule>,
}

impl Stratum {
    pub fn new(extensional: Vocabulary, rules: Vec<Rule>) -> Result<Self, ValidationError> {
        let mut intensional = Vocabulary::new();
        for r in &rules {
            if extensional.contains(&r.head) {
                return Err(ValidationError::IntensionalExtensionalClash(r.head.clone()));
            }
            if intensional.contains(&r.head) {
                return Err(ValidationError::DuplicateRule(r.head.clone()));
            }
            intensional.insert(&r.head, r.kind(), r.arity())?;
        }
        let st = Stratum { extensional, intensional, rules };
        st.validate()?;
        Ok(st)
    }

    pub fn rule(&self, head: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.head == head)
    }

    /// Extensional and intensional symbols together.
    pub fn vocabulary(&self) -> Vocabulary {
        self.extensional.union(&self.intensional).expect("disjoint by construction")
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !self.extensional.is_disjoint(&self.intensional) {
            let name = self.intensional.names().find(|n| self.extensional.contains(n)).unwrap_or_default();
            return Err(ValidationError::IntensionalExtensionalClash(name.to_string()));
        }
        for name in self.intensional.names() {
            if self.rule(name).is_none() {
                return Err(ValidationError::MissingRule(name.to_string()));
            }
        }
        let vocab = self.vocabulary();
        for r in &self.rules {
            validate_rule(r, &vocab)?;
        }
        Ok(())
    }
}

fn validate_rule(r: &Rule, vocab: &Vocabulary) -> Result<(), ValidationError> {
    let distinct: BTreeSet<&Var> = r.vars.iter().collect();
    if distinct.len() != r.vars.len() {
        return Err(ValidationError::RepeatedHeadVariable(r.head.clone()));
    }
    match vocab.get(&r.head) {
        Some(info) if info.kind != r.kind() => return Err(ValidationError::BodyKindMismatch(r.head.clone())),
        Some(info) if info.arity != r.arity() => {
            return Err(ValidationError::ArityMismatch { name: r.head.clone(), expected: info.arity, found: r.arity() })
        }
        Some(_) => {}
        None => return Err(ValidationError::UnknownSymbol(r.head.clone())),
    }
    let has_ifp = match &r.body {
        Expr::Formula(f) => f.contains_ifp(),
        Expr::Term(t) => t.contains_ifp(),
    };
    if has_ifp {
        return Err(ValidationError::IfpInStratum(r.head.clone()));
    }
    check_symbols(&r.body, vocab)?;
    if let Some(v) = r.body.free_vars().into_iter().find(|v| !r.vars.contains(v)) {
        return Err(ValidationError::EscapingVariable { head: r.head.clone(), var: v });
    }
    Ok(())
}

/// Checks every symbol occurrence against `vocab` (plus ifp-bound
/// functions) for existence, kind and arity.
pub fn check_symbols(e: &Expr, vocab: &Vocabulary) -> Result<(), ValidationError> {
    let mut scope: Vec<(String, usize)> = Vec::new();
    match e {
        Expr::Formula(f) => check_formula(f, vocab, &mut scope),
        Expr::Term(t) => check_term(t, vocab, &mut scope),
    }
}

fn check_use(
    name: &str,
    kind: SymbolKind,
    arity: usize,
    vocab: &Vocabulary,
    scope: &[(String, usize)],
) -> Result<(), ValidationError> {
    let (found_kind, expected) = match scope.iter().rev().find(|(n, _)| n == name) {
        Some((_, a)) => (SymbolKind::Function, *a),
        None => match vocab.get(name) {
            Some(info) => (info.kind, info.arity),
            None => return Err(ValidationError::UnknownSymbol(name.to_string())),
        },
    };
    if found_kind != kind {
        return Err(match kind {
            SymbolKind::Function => ValidationError::NotAFunction(name.to_string()),
            SymbolKind::Relation => ValidationError::NotARelation(name.to_string()),
        });
    }
    if expected != arity {
        return Err(ValidationError::ArityMismatch { name: name.to_string(), expected, found: arity });
    }
    Ok(())
}

fn check_formula(f: &Formula, vocab: &Vocabulary, scope: &mut Vec<(String, usize)>) -> Result<(), ValidationError> {
    match f {
        Formula::Bool(_) | Formula::VarEq(..) => Ok(()),
        Formula::Rel(n, a) => check_use(n, SymbolKind::Relation, a.len(), vocab, scope),
        Formula::Leq(a, b) => {
            check_term(a, vocab, scope)?;
            check_term(b, vocab, scope)
        }
        Formula::Not(g) | Formula::Quant(_, _, g) => check_formula(g, vocab, scope),
        Formula::Bin(_, a, b) => {
            check_formula(a, vocab, scope)?;
            check_formula(b, vocab, scope)
        }
    }
}

fn check_term(t: &Term, vocab: &Vocabulary, scope: &mut Vec<(String, usize)>) -> Result<(), ValidationError> {
    match t {
        Term::Const(_) => Ok(()),
        Term::App(n, a) => check_use(n, SymbolKind::Function, a.len(), vocab, scope),
        Term::Arith(_, a, b) => {
            check_term(a, vocab, scope)?;
            check_term(b, vocab, scope)
        }
        Term::Ite(c, a, b) => {
            check_formula(c, vocab, scope)?;
            check_term(a, vocab, scope)?;
            check_term(b, vocab, scope)
        }
        Term::Sum(_, g, b) | Term::Avg(_, g, b) | Term::Uniq(_, g, b) => {
            check_formula(g, vocab, scope)?;
            check_term(b, vocab, scope)
        }
        Term::Ifp(i) => {
            if i.params.len() != i.args.len() {
                return Err(ValidationError::ArityMismatch {
                    name: i.func.clone(),
                    expected: i.params.len(),
                    found: i.args.len(),
                });
            }
            let distinct: BTreeSet<&Var> = i.params.iter().collect();
            if distinct.len() != i.params.len() {
                return Err(ValidationError::RepeatedHeadVariable(i.func.clone()));
            }
            scope.push((i.func.clone(), i.params.len()));
            let r = check_term(&i.body, vocab, scope);
            scope.pop();
            r
        }
    }
}

/// Extensional and intensional symbols of an expression. A symbol is
/// intensional when some ifp operator binds it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SymbolPartition {
    pub extensional: BTreeSet<String>,
    pub intensional: BTreeSet<String>,
}

pub fn symbol_partition(e: &Expr) -> Result<SymbolPartition, ValidationError> {
    fn walk_f(f: &Formula, bound: &mut Vec<String>, p: &mut SymbolPartition) -> Result<(), ValidationError> {
        match f {
            Formula::Bool(_) | Formula::VarEq(..) => Ok(()),
            Formula::Rel(n, _) => {
                p.extensional.insert(n.clone());
                Ok(())
            }
            Formula::Leq(a, b) => {
                walk_t(a, bound, p)?;
                walk_t(b, bound, p)
            }
            Formula::Not(g) | Formula::Quant(_, _, g) => walk_f(g, bound, p),
            Formula::Bin(_, a, b) => {
                walk_f(a, bound, p)?;
                walk_f(b, bound, p)
            }
        }
    }
    fn walk_t(t: &Term, bound: &mut Vec<String>, p: &mut SymbolPartition) -> Result<(), ValidationError> {
        match t {
            Term::Const(_) => Ok(()),
            Term::App(n, _) => {
                if !bound.contains(n) {
                    p.extensional.insert(n.clone());
                }
                Ok(())
            }
            Term::Arith(_, a, b) => {
                walk_t(a, bound, p)?;
                walk_t(b, bound, p)
            }
            Term::Ite(c, a, b) => {
                walk_f(c, bound, p)?;
                walk_t(a, bound, p)?;
                walk_t(b, bound, p)
            }
            Term::Sum(_, g, b) | Term::Avg(_, g, b) | Term::Uniq(_, g, b) => {
                walk_f(g, bound, p)?;
                walk_t(b, bound, p)
            }
            Term::Ifp(i) => {
                if !p.intensional.insert(i.func.clone()) {
                    return Err(ValidationError::DoubleBinding(i.func.clone()));
                }
                bound.push(i.func.clone());
                let r = walk_t(&i.body, bound, p);
                bound.pop();
                r
            }
        }
    }
    let mut p = SymbolPartition::default();
    let mut bound = Vec::new();
    match e {
        Expr::Formula(f) => walk_f(f, &mut bound, &mut p)?,
        Expr::Term(t) => walk_t(t, &mut bound, &mut p)?,
    }
    if let Some(n) = p.intensional.intersection(&p.extensional).next() {
        return Err(ValidationError::IntensionalExtensionalClash(n.clone()));
    }
    Ok(p)
}

/// A sequence of strata with a designated answer symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub input: Vocabulary,
    pub strata: Vec<Stratum>,
    pub answer: String,
}

impl Program {
    /// Builds and validates a program; the answer defaults to the head of
    /// the last rule.
    pub fn new(input: Vocabulary, strata: Vec<Vec<Rule>>, answer: Option<&str>) -> Result<Self, ValidationError> {
        if strata.is_empty() || strata.iter().all(|s| s.is_empty()) {
            return Err(ValidationError::EmptyProgram);
        }
        let mut ext = input.clone();
        let mut built = Vec::new();
        for rules in strata {
            let st = Stratum::new(ext.clone(), rules)?;
            ext = ext.union(&st.intensional)?;
            built.push(st);
        }
        let answer = match answer {
            Some(a) => a.to_string(),
            None => built.last().and_then(|s| s.rules.last()).map(|r| r.head.clone()).ok_or(ValidationError::EmptyProgram)?,
        };
        if !built.iter().any(|s| s.intensional.contains(&answer)) {
            return Err(ValidationError::BadAnswerSymbol(answer));
        }
        Ok(Program { input, strata: built, answer })
    }

    pub fn single(stratum: Stratum, answer: &str) -> Result<Self, ValidationError> {
        let rules = stratum.rules.clone();
        Program::new(stratum.extensional, vec![rules], Some(answer))
    }

    /// Every symbol the program reads or defines.
    pub fn vocabulary(&self) -> Vocabulary {
        let mut v = self.input.clone();
        for s in &self.strata {
            v = v.union(&s.intensional).expect("validated");
        }
        v
    }

    pub fn answer_info(&self) -> (SymbolKind, usize) {
        let info = self.vocabulary().get(&self.answer).expect("validated answer");
        (info.kind, info.arity)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let decl = |f: &mut fmt::Formatter<'_>, v: &Vocabulary| -> fmt::Result {
            for (name, info) in v.iter() {
                writeln!(f, "{} {}/{};", info.kind, name, info.arity)?;
            }
            Ok(())
        };
        decl(f, &self.input)?;
        for s in &self.strata {
            decl(f, &s.intensional)?;
        }
        writeln!(f, "answer {};", self.answer)?;
        for (i, s) in self.strata.iter().enumerate() {
            if i > 0 {
                writeln!(f, "---")?;
            }
            for r in &s.rules {
                writeln!(f, "{r}")?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Program text

struct RawRule {
    head: String,
    vars: Vec<Var>,
    body: Vec<Token>,
}

fn kinds_of(v: &Vocabulary) -> BTreeMap<String, SymbolKind> {
    v.iter().map(|(n, i)| (n.to_string(), i.kind)).collect()
}

fn parse_body(toks: &[Token], kinds: &BTreeMap<String, SymbolKind>, kind: Option<SymbolKind>) -> PResult<Expr> {
    let mut p = Parser::new(toks.to_vec(), kinds.clone());
    let result = match kind {
        Some(SymbolKind::Relation) => p.formula().map(Expr::Formula),
        Some(SymbolKind::Function) => p.term().map(Expr::Term),
        None => p.expression(),
    };
    match result.and_then(|e| p.expect_eof().map(|_| e)) {
        Ok(e) => Ok(e),
        Err(e) => Err(p.best_error(e)),
    }
}

/// Parses program text. Declared symbols that no rule defines are added
/// to `input`; heads without a declaration get the kind of their body.
pub fn parse_program(text: &str, input: &Vocabulary) -> Result<Program, SyntaxError> {
    let toks = tokenize(text)?;
    let mut p = Parser::new(toks, BTreeMap::new());
    let mut declared = Vocabulary::new();
    let mut answer: Option<String> = None;
    let mut strata: Vec<Vec<RawRule>> = vec![Vec::new()];
    let mut duplicate: Option<String> = None;
    let items: PResult<()> = (|| {
        while !p.at_eof() {
            let kind = if p.eat_keyword("rel") {
                Some(SymbolKind::Relation)
            } else if p.eat_keyword("fun") {
                Some(SymbolKind::Function)
            } else {
                None
            };
            if let Some(kind) = kind {
                let name = p.identifier()?;
                p.expect_symbol("/")?;
                let arity = p.natural()?;
                p.expect_symbol(";")?;
                if declared.insert(&name, kind, arity).is_err() {
                    duplicate = Some(name);
                }
                continue;
            }
            if p.eat_keyword("answer") {
                answer = Some(p.identifier()?);
                p.expect_symbol(";")?;
                continue;
            }
            if p.eat_symbol("---") {
                strata.push(Vec::new());
                continue;
            }
            let head = p.identifier()?;
            let vars = if matches!(p.peek_tok(), Tok::Sym("(")) { p.variables()? } else { Vec::new() };
            p.expect_symbol("<-")?;
            let start = p.position();
            loop {
                match p.peek_tok() {
                    Tok::Sym(";") => break,
                    Tok::Eof => return p.fail(&["`;`"]),
                    _ => {}
                }
                p.bump_tok();
            }
            let end = p.position();
            let mut body = p.tokens()[start..end].to_vec();
            let semi = &p.tokens()[end];
            body.push(Token { tok: Tok::Eof, line: semi.line, col: semi.col });
            p.bump_tok();
            strata.last_mut().expect("nonempty").push(RawRule { head, vars, body });
        }
        Ok(())
    })();
    if let Err(e) = items {
        return Err(p.best_error(e).into());
    }
    if let Some(name) = duplicate {
        return Err(ValidationError::DuplicateSymbol(name).into());
    }
    strata.retain(|s| !s.is_empty());

    // Kinds: input, declarations, then heads inferred from their bodies.
    let mut kinds = kinds_of(input);
    kinds.extend(kinds_of(&declared));
    for raw in strata.iter().flatten() {
        if kinds.contains_key(&raw.head) {
            continue;
        }
        let e = parse_body(&raw.body, &kinds, None)?;
        let k = if e.is_formula() { SymbolKind::Relation } else { SymbolKind::Function };
        kinds.insert(raw.head.clone(), k);
    }
    let mut rules: Vec<Vec<Rule>> = Vec::new();
    for stratum in &strata {
        let mut out = Vec::new();
        for raw in stratum {
            let body = parse_body(&raw.body, &kinds, kinds.get(&raw.head).copied())?;
            out.push(Rule { head: raw.head.clone(), vars: raw.vars.clone(), body });
        }
        rules.push(out);
    }

    // Declarations must agree with the rules that define them.
    let heads: BTreeSet<&str> = strata.iter().flatten().map(|r| r.head.as_str()).collect();
    for r in rules.iter().flatten() {
        if let Some(info) = declared.get(&r.head) {
            if info.arity != r.arity() {
                return Err(ValidationError::ArityMismatch { name: r.head.clone(), expected: info.arity, found: r.arity() }
                    .into());
            }
        }
    }
    let mut input_vocab = input.clone();
    for (name, info) in declared.iter() {
        if heads.contains(name) {
            continue;
        }
        match input_vocab.get(name) {
            Some(existing) if existing == info => {}
            Some(_) => return Err(ValidationError::DuplicateSymbol(name.to_string()).into()),
            None => input_vocab.insert(name, info.kind, info.arity)?,
        }
    }
    Ok(Program::new(input_vocab, rules, answer.as_deref())?)
}

/// Parses an expression file: optional `rel`/`fun` declarations, then one
/// formula or term, optionally ending in `;`. Returns the declared symbols
/// together with `vocab`, and the validated expression.
pub fn parse_expression_unit(text: &str, vocab: &Vocabulary) -> Result<(Vocabulary, Expr), SyntaxError> {
    let toks = tokenize(text)?;
    let mut p = Parser::new(toks, BTreeMap::new());
    let mut declared = vocab.clone();
    let decls: PResult<()> = (|| {
        loop {
            let kind = if p.eat_keyword("rel") {
                SymbolKind::Relation
            } else if p.eat_keyword("fun") {
                SymbolKind::Function
            } else {
                return Ok(());
            };
            let name = p.identifier()?;
            p.expect_symbol("/")?;
            let arity = p.natural()?;
            p.expect_symbol(";")?;
            if declared.get(&name).is_some_and(|i| i.kind != kind || i.arity != arity) {
                return p.fail(&["a consistent declaration"]);
            }
            declared.insert(&name, kind, arity).ok();
        }
    })();
    if let Err(e) = decls {
        return Err(p.best_error(e).into());
    }
    let mut body = p.tokens()[p.position()..].to_vec();
    if body.len() >= 2 && matches!(body[body.len() - 2].tok, Tok::Sym(";")) {
        body.remove(body.len() - 2);
    }
    let e = parse_body(&body, &kinds_of(&declared), None)?;
    check_symbols(&e, &declared)?;
    symbol_partition(&e)?;
    Ok((declared, e))
}

/// Parses and validates a standalone formula or term over `vocab`.
pub fn parse_expression(text: &str, vocab: &Vocabulary) -> Result<Expr, SyntaxError> {
    let e = parse_expr_text(text, kinds_of(vocab))?;
    check_symbols(&e, vocab)?;
    symbol_partition(&e)?;
    Ok(e)
}
