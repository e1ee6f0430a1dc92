//! Evaluation of formulas and terms, immediate-consequence operators and
//! fixpoint iteration.
//!
//! Expressions are compiled to a slot-addressed form: each variable binder
//! owns one slot of the environment and each symbol is resolved to a table
//! index once. Quantifier, aggregate and ifp nodes are memoized on the values
//! of their free slots while the tables they read are unchanged.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::rc::Rc;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde_json::{json, Value};

use crate::error::EvalError;
use crate::structure::{
    all_tuples, table_size, tuple_at, Assignment, Elem, Relation, SymbolKind, Vocabulary, WeightTable,
    WeightedStructure,
};
use crate::syntax::{ArithOp, BoolOp, Expr, Formula, Program, Quantifier, Stratum, Term, Var};
use crate::weight::Weight;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Weight entries are set only where still undefined.
    Functional,
    /// Weight entries are overwritten each round; stop when relations settle.
    Loose,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Functional => "functional",
            Mode::Loose => "loose",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "functional" => Ok(Mode::Functional),
            "loose" => Ok(Mode::Loose),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalResult {
    Bool(bool),
    Weight(Weight),
}

impl fmt::Display for EvalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalResult::Bool(b) => write!(f, "{b}"),
            EvalResult::Weight(w) => write!(f, "{w}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Compiled form

#[derive(Clone, Debug)]
struct Memo {
    id: usize,
    key: Vec<usize>,
}

#[derive(Clone, Debug)]
enum CF {
    Const(bool),
    Eq(usize, usize),
    Rel(usize, Vec<usize>),
    Leq(Box<CT>, Box<CT>),
    Not(Box<CF>),
    And(Box<CF>, Box<CF>),
    Or(Box<CF>, Box<CF>),
    Implies(Box<CF>, Box<CF>),
    Quant { exists: bool, slot: usize, body: Box<CF>, memo: Option<Memo> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Agg {
    Sum,
    Avg,
}

#[derive(Clone, Debug)]
enum CT {
    Const(Weight),
    Ext(usize, Vec<usize>),
    Local(usize, Vec<usize>),
    Arith(ArithOp, Box<CT>, Box<CT>),
    Ite(Box<CF>, Box<CT>, Box<CT>),
    Agg { kind: Agg, slots: Vec<usize>, guard: Box<CF>, body: Box<CT>, memo: Option<Memo> },
    Uniq { slot: usize, guard: Box<CF>, body: Box<CT>, memo: Option<Memo> },
    Ifp(Box<CIfp>),
}

#[derive(Clone, Debug)]
struct CIfp {
    local: usize,
    arity: usize,
    params: Vec<usize>,
    body: CT,
    args: Vec<usize>,
    /// Keyed on the free slots of the body other than the parameters.
    memo: Memo,
    /// Memo ids of nodes inside the body; stale whenever the local table
    /// changes.
    body_memos: Range<usize>,
}

struct Compiler<'a> {
    rels: &'a HashMap<String, (usize, usize)>,
    funs: &'a HashMap<String, (usize, usize)>,
    scope: Vec<(Var, usize)>,
    locals: Vec<(String, usize, usize)>,
    n_slots: usize,
    n_memos: usize,
    n_locals: usize,
}

impl Compiler<'_> {
    fn slot(&self, v: &str) -> Result<usize, EvalError> {
        self.scope
            .iter()
            .rev()
            .find(|(n, _)| n == v)
            .map(|(_, s)| *s)
            .ok_or_else(|| EvalError::UnboundVariable(v.to_string()))
    }

    fn slots(&self, vs: &[Var]) -> Result<Vec<usize>, EvalError> {
        vs.iter().map(|v| self.slot(v)).collect()
    }

    fn bind(&mut self, v: &str) -> usize {
        let s = self.n_slots;
        self.n_slots += 1;
        self.scope.push((v.to_string(), s));
        s
    }

    fn in_scope(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.scope.iter().map(|(_, s)| *s).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// A memo slot is worth having only if the node can recur with the same
    /// key, i.e. when its key misses some slot in scope.
    fn memo(&mut self, key: Vec<usize>, in_scope: &[usize]) -> Option<Memo> {
        if key.len() < in_scope.len() {
            let id = self.n_memos;
            self.n_memos += 1;
            Some(Memo { id, key })
        } else {
            None
        }
    }

    fn formula(&mut self, f: &Formula) -> Result<(CF, Vec<usize>), EvalError> {
        Ok(match f {
            Formula::Bool(b) => (CF::Const(*b), vec![]),
            Formula::VarEq(x, y) => {
                let (a, b) = (self.slot(x)?, self.slot(y)?);
                (CF::Eq(a, b), merge(vec![a], vec![b]))
            }
            Formula::Rel(n, args) => {
                let (idx, ar) = *self.rels.get(n).ok_or_else(|| EvalError::UnknownSymbol(n.clone()))?;
                if ar != args.len() {
                    return Err(EvalError::StructureMismatch(format!("`{n}` has arity {ar}")));
                }
                let s = self.slots(args)?;
                let free = sorted(s.clone());
                (CF::Rel(idx, s), free)
            }
            Formula::Leq(a, b) => {
                let (a, fa) = self.term(a)?;
                let (b, fb) = self.term(b)?;
                (CF::Leq(Box::new(a), Box::new(b)), merge(fa, fb))
            }
            Formula::Not(g) => {
                let (g, fg) = self.formula(g)?;
                (CF::Not(Box::new(g)), fg)
            }
            Formula::Bin(op, a, b) => {
                let (a, fa) = self.formula(a)?;
                let (b, fb) = self.formula(b)?;
                let (a, b) = (Box::new(a), Box::new(b));
                let node = match op {
                    BoolOp::And => CF::And(a, b),
                    BoolOp::Or => CF::Or(a, b),
                    BoolOp::Implies => CF::Implies(a, b),
                };
                (node, merge(fa, fb))
            }
            Formula::Quant(q, v, body) => {
                let outer = self.in_scope();
                let slot = self.bind(v);
                let (body, fb) = self.formula(body)?;
                self.scope.pop();
                let free: Vec<usize> = fb.into_iter().filter(|s| *s != slot).collect();
                let memo = self.memo(free.clone(), &outer);
                (CF::Quant { exists: *q == Quantifier::Exists, slot, body: Box::new(body), memo }, free)
            }
        })
    }

    fn term(&mut self, t: &Term) -> Result<(CT, Vec<usize>), EvalError> {
        Ok(match t {
            Term::Const(w) => (CT::Const(w.clone()), vec![]),
            Term::App(n, args) => {
                let s = self.slots(args)?;
                let free = sorted(s.clone());
                if let Some((_, local, ar)) = self.locals.iter().rev().find(|(name, _, _)| name == n) {
                    if *ar != args.len() {
                        return Err(EvalError::StructureMismatch(format!("`{n}` has arity {ar}")));
                    }
                    return Ok((CT::Local(*local, s), free));
                }
                let (idx, ar) = *self.funs.get(n).ok_or_else(|| EvalError::UnknownSymbol(n.clone()))?;
                if ar != args.len() {
                    return Err(EvalError::StructureMismatch(format!("`{n}` has arity {ar}")));
                }
                (CT::Ext(idx, s), free)
            }
            Term::Arith(op, a, b) => {
                let (a, fa) = self.term(a)?;
                let (b, fb) = self.term(b)?;
                (CT::Arith(*op, Box::new(a), Box::new(b)), merge(fa, fb))
            }
            Term::Ite(c, a, b) => {
                let (c, fc) = self.formula(c)?;
                let (a, fa) = self.term(a)?;
                let (b, fb) = self.term(b)?;
                (CT::Ite(Box::new(c), Box::new(a), Box::new(b)), merge(fc, merge(fa, fb)))
            }
            Term::Sum(vs, g, body) | Term::Avg(vs, g, body) => {
                let outer = self.in_scope();
                let slots: Vec<usize> = vs.iter().map(|v| self.bind(v)).collect();
                let (g, fg) = self.formula(g)?;
                let (body, fb) = self.term(body)?;
                self.scope.truncate(self.scope.len() - vs.len());
                let free: Vec<usize> = merge(fg, fb).into_iter().filter(|s| !slots.contains(s)).collect();
                let memo = self.memo(free.clone(), &outer);
                let kind = if matches!(t, Term::Sum(..)) { Agg::Sum } else { Agg::Avg };
                (CT::Agg { kind, slots, guard: Box::new(g), body: Box::new(body), memo }, free)
            }
            Term::Uniq(v, g, body) => {
                let outer = self.in_scope();
                let slot = self.bind(v);
                let (g, fg) = self.formula(g)?;
                let (body, fb) = self.term(body)?;
                self.scope.pop();
                let free: Vec<usize> = merge(fg, fb).into_iter().filter(|s| *s != slot).collect();
                let memo = self.memo(free.clone(), &outer);
                (CT::Uniq { slot, guard: Box::new(g), body: Box::new(body), memo }, free)
            }
            Term::Ifp(i) => {
                let local = self.n_locals;
                self.n_locals += 1;
                let args = self.slots(&i.args)?;
                let params: Vec<usize> = i.params.iter().map(|v| self.bind(v)).collect();
                self.locals.push((i.func.clone(), local, params.len()));
                let start = self.n_memos;
                let (body, fb) = self.term(&i.body)?;
                let end = self.n_memos;
                self.locals.pop();
                self.scope.truncate(self.scope.len() - params.len());
                let outer_free: Vec<usize> = fb.into_iter().filter(|s| !params.contains(s)).collect();
                let memo = Memo { id: self.n_memos, key: outer_free.clone() };
                self.n_memos += 1;
                let free = merge(outer_free, sorted(args.clone()));
                let arity = params.len();
                (CT::Ifp(Box::new(CIfp { local, arity, params, body, args, memo, body_memos: start..end })), free)
            }
        })
    }
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

fn merge(mut a: Vec<usize>, b: Vec<usize>) -> Vec<usize> {
    a.extend(b);
    sorted(a)
}

/// Symbol tables of a structure in a fixed order.
struct SymbolTables {
    rels: HashMap<String, (usize, usize)>,
    funs: HashMap<String, (usize, usize)>,
    rel_names: Vec<String>,
    fun_names: Vec<String>,
}

impl SymbolTables {
    fn of(vocab: &Vocabulary) -> Self {
        let mut t = SymbolTables { rels: HashMap::new(), funs: HashMap::new(), rel_names: vec![], fun_names: vec![] };
        for (name, info) in vocab.iter() {
            match info.kind {
                SymbolKind::Relation => {
                    t.rels.insert(name.to_string(), (t.rel_names.len(), info.arity));
                    t.rel_names.push(name.to_string());
                }
                SymbolKind::Function => {
                    t.funs.insert(name.to_string(), (t.fun_names.len(), info.arity));
                    t.fun_names.push(name.to_string());
                }
            }
        }
        t
    }

    fn compiler(&self) -> Compiler<'_> {
        Compiler {
            rels: &self.rels,
            funs: &self.funs,
            scope: vec![],
            locals: vec![],
            n_slots: 0,
            n_memos: 0,
            n_locals: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Clone, Debug)]
enum MemoVal {
    B(bool),
    W(Weight),
    T(Rc<WeightTable>),
}

struct Ctx<'a> {
    n: usize,
    rels: Vec<&'a Relation>,
    funs: Vec<&'a WeightTable>,
    locals: Vec<WeightTable>,
    memos: Vec<HashMap<Vec<Elem>, MemoVal>>,
    env: Vec<Elem>,
    ifp_steps: usize,
}

impl<'a> Ctx<'a> {
    fn new(s: &'a WeightedStructure, tables: &SymbolTables, n_slots: usize, n_memos: usize, n_locals: usize) -> Self {
        Ctx {
            n: s.size(),
            rels: tables.rel_names.iter().map(|r| s.relation(r).expect("symbol table built from structure")).collect(),
            funs: tables.fun_names.iter().map(|f| s.function(f).expect("symbol table built from structure")).collect(),
            locals: (0..n_locals).map(|_| WeightTable::undefined(0, 0)).collect(),
            memos: (0..n_memos).map(|_| HashMap::new()).collect(),
            env: vec![0; n_slots],
            ifp_steps: 0,
        }
    }

    fn index(&self, slots: &[usize]) -> usize {
        slots.iter().fold(0usize, |acc, s| acc * self.n + self.env[*s] as usize)
    }

    fn key(&self, slots: &[usize]) -> Vec<Elem> {
        slots.iter().map(|s| self.env[*s]).collect()
    }

    fn formula(&mut self, f: &CF) -> bool {
        match f {
            CF::Const(b) => *b,
            CF::Eq(a, b) => self.env[*a] == self.env[*b],
            CF::Rel(r, args) => {
                let i = self.index(args);
                self.rels[*r].contains_index(i)
            }
            CF::Leq(a, b) => {
                let a = self.term(a);
                let b = self.term(b);
                a.leq(&b)
            }
            CF::Not(g) => !self.formula(g),
            CF::And(a, b) => self.formula(a) && self.formula(b),
            CF::Or(a, b) => self.formula(a) || self.formula(b),
            CF::Implies(a, b) => !self.formula(a) || self.formula(b),
            CF::Quant { exists, slot, body, memo } => {
                if let Some(m) = memo {
                    let key = self.key(&m.key);
                    if let Some(MemoVal::B(b)) = self.memos[m.id].get(&key) {
                        return *b;
                    }
                    let v = self.quant(*exists, *slot, body);
                    self.memos[m.id].insert(key, MemoVal::B(v));
                    v
                } else {
                    self.quant(*exists, *slot, body)
                }
            }
        }
    }

    fn quant(&mut self, exists: bool, slot: usize, body: &CF) -> bool {
        for e in 0..self.n {
            self.env[slot] = e as Elem;
            if self.formula(body) == exists {
                return exists;
            }
        }
        !exists
    }

    fn term(&mut self, t: &CT) -> Weight {
        match t {
            CT::Const(w) => w.clone(),
            CT::Ext(f, args) => {
                let i = self.index(args);
                self.funs[*f].get_index(i).clone()
            }
            CT::Local(l, args) => {
                let i = self.index(args);
                self.locals[*l].get_index(i).clone()
            }
            CT::Arith(op, a, b) => {
                let a = self.term(a);
                if a.is_bot() {
                    return Weight::Bot;
                }
                let b = self.term(b);
                op.apply(&a, &b)
            }
            CT::Ite(c, a, b) => {
                if self.formula(c) {
                    self.term(a)
                } else {
                    self.term(b)
                }
            }
            CT::Agg { kind, slots, guard, body, memo } => {
                self.memoized(memo, |cx| cx.aggregate(*kind, slots, guard, body))
            }
            CT::Uniq { slot, guard, body, memo } => self.memoized(memo, |cx| cx.uniq(*slot, guard, body)),
            CT::Ifp(i) => self.ifp(i),
        }
    }

    fn memoized(&mut self, memo: &Option<Memo>, k: impl FnOnce(&mut Self) -> Weight) -> Weight {
        match memo {
            Some(m) => {
                let key = self.key(&m.key);
                if let Some(MemoVal::W(w)) = self.memos[m.id].get(&key) {
                    return w.clone();
                }
                let v = k(self);
                self.memos[m.id].insert(key, MemoVal::W(v.clone()));
                v
            }
            None => k(self),
        }
    }

    /// Visits every assignment of `slots` in lexicographic order; stops
    /// early when `visit` returns false.
    fn for_each_tuple(&mut self, slots: &[usize], visit: &mut dyn FnMut(&mut Self) -> bool) {
        let k = slots.len();
        if k > 0 && self.n == 0 {
            return;
        }
        let mut digits = vec![0usize; k];
        loop {
            for (s, d) in slots.iter().zip(&digits) {
                self.env[*s] = *d as Elem;
            }
            if !visit(self) {
                return;
            }
            let mut pos = k;
            loop {
                if pos == 0 {
                    return;
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < self.n {
                    break;
                }
                digits[pos] = 0;
            }
        }
    }

    fn aggregate(&mut self, kind: Agg, slots: &[usize], guard: &CF, body: &CT) -> Weight {
        let mut total = Weight::zero();
        let mut count: i64 = 0;
        self.for_each_tuple(slots, &mut |cx| {
            if cx.formula(guard) {
                count += 1;
                total = total.add(&cx.term(body));
                !total.is_bot()
            } else {
                true
            }
        });
        match kind {
            Agg::Sum => total,
            Agg::Avg => total.div(&Weight::int(count)),
        }
    }

    /// The common value of the body over the guard, or `⊥` when the guard is
    /// empty or the values differ.
    fn uniq(&mut self, slot: usize, guard: &CF, body: &CT) -> Weight {
        let mut seen: Option<Weight> = None;
        let mut agree = true;
        self.for_each_tuple(&[slot], &mut |cx| {
            if cx.formula(guard) {
                let v = cx.term(body);
                match &seen {
                    None => seen = Some(v),
                    Some(w) if *w == v => {}
                    Some(_) => {
                        agree = false;
                        return false;
                    }
                }
            }
            true
        });
        match seen {
            Some(v) if agree => v,
            _ => Weight::Bot,
        }
    }

    fn ifp(&mut self, i: &CIfp) -> Weight {
        let key = self.key(&i.memo.key);
        let table = match self.memos[i.memo.id].get(&key) {
            Some(MemoVal::T(t)) => Rc::clone(t),
            _ => {
                let t = Rc::new(self.ifp_fixpoint(i));
                self.memos[i.memo.id].insert(key, MemoVal::T(Rc::clone(&t)));
                t
            }
        };
        let idx = self.index(&i.args);
        table.get_index(idx).clone()
    }

    fn clear(&mut self, r: &Range<usize>) {
        for m in &mut self.memos[r.clone()] {
            m.clear();
        }
    }

    /// `F^(0) = ⊥`; each step defines the still-undefined entries from the
    /// previous stage until nothing changes.
    fn ifp_fixpoint(&mut self, i: &CIfp) -> WeightTable {
        let size = table_size(self.n, i.arity).expect("table size checked before evaluation");
        let saved = std::mem::replace(&mut self.locals[i.local], WeightTable::undefined(self.n, i.arity));
        let bound = size + 1;
        let mut steps = 0usize;
        loop {
            self.clear(&i.body_memos);
            let mut updates = Vec::new();
            for idx in 0..size {
                if !self.locals[i.local].get_index(idx).is_bot() {
                    continue;
                }
                for (s, e) in i.params.iter().zip(tuple_at(self.n, i.arity, idx)) {
                    self.env[*s] = e;
                }
                let v = self.term(&i.body);
                if !v.is_bot() {
                    updates.push((idx, v));
                }
            }
            if updates.is_empty() {
                break;
            }
            steps += 1;
            self.ifp_steps += 1;
            assert!(steps <= bound, "ifp iteration exceeded its bound of {bound} steps");
            for (idx, v) in updates {
                self.locals[i.local].set_index(idx, v);
            }
        }
        self.clear(&i.body_memos);
        std::mem::replace(&mut self.locals[i.local], saved)
    }
}

fn check_tables(s: &WeightedStructure) -> Result<(), EvalError> {
    for (name, info) in s.vocabulary().iter() {
        if table_size(s.size(), info.arity).is_none() {
            return Err(EvalError::StructureMismatch(format!("table for `{name}` is too large")));
        }
    }
    Ok(())
}

/// A compiled expression with a fixed order of its free variables, for
/// evaluating it at many tuples against one structure.
pub struct ExprEvaluator<'s> {
    structure: &'s WeightedStructure,
    tables: SymbolTables,
    formula: Option<CF>,
    term: Option<CT>,
    free: Vec<usize>,
    n_slots: usize,
    n_memos: usize,
    n_locals: usize,
    ctx_memos: Option<Vec<HashMap<Vec<Elem>, MemoVal>>>,
}

impl<'s> ExprEvaluator<'s> {
    pub fn new(e: &Expr, s: &'s WeightedStructure, vars: &[Var]) -> Result<Self, EvalError> {
        check_tables(s)?;
        let tables = SymbolTables::of(s.vocabulary());
        let (formula, term, free, n_slots, n_memos, n_locals) = {
            let mut c = tables.compiler();
            let free: Vec<usize> = vars.iter().map(|v| c.bind(v)).collect();
            let (formula, term) = match e {
                Expr::Formula(f) => (Some(c.formula(f)?.0), None),
                Expr::Term(t) => (None, Some(c.term(t)?.0)),
            };
            (formula, term, free, c.n_slots, c.n_memos, c.n_locals)
        };
        Ok(ExprEvaluator { structure: s, tables, formula, term, free, n_slots, n_memos, n_locals, ctx_memos: None })
    }

    /// Value at the given elements for the free variables, in order.
    pub fn eval(&mut self, tuple: &[Elem]) -> EvalResult {
        let mut ctx = Ctx::new(self.structure, &self.tables, self.n_slots, self.n_memos, self.n_locals);
        if let Some(m) = self.ctx_memos.take() {
            ctx.memos = m;
        }
        for (s, e) in self.free.iter().zip(tuple) {
            ctx.env[*s] = *e;
        }
        let r = match (&self.formula, &self.term) {
            (Some(f), _) => EvalResult::Bool(ctx.formula(f)),
            (_, Some(t)) => EvalResult::Weight(ctx.term(t)),
            _ => unreachable!("one of formula and term is set"),
        };
        self.ctx_memos = Some(ctx.memos);
        r
    }
}

/// Evaluates `e` on `s` under the assignment `a`.
pub fn eval_expression(e: &Expr, s: &WeightedStructure, a: &Assignment) -> Result<EvalResult, EvalError> {
    let vars: Vec<Var> = e.free_vars().into_iter().collect();
    let mut tuple = Vec::with_capacity(vars.len());
    for v in &vars {
        match a.get(v) {
            Some(x) if (x as usize) < s.size() => tuple.push(x),
            Some(x) => return Err(EvalError::StructureMismatch(format!("element {x} is outside the universe"))),
            None => return Err(EvalError::UnboundVariable(v.clone())),
        }
    }
    let mut ev = ExprEvaluator::new(e, s, &vars)?;
    Ok(ev.eval(&tuple))
}

pub fn eval_formula(f: &Formula, s: &WeightedStructure, a: &Assignment) -> Result<bool, EvalError> {
    match eval_expression(&Expr::Formula(f.clone()), s, a)? {
        EvalResult::Bool(b) => Ok(b),
        EvalResult::Weight(_) => unreachable!("formulas evaluate to booleans"),
    }
}

pub fn eval_term(t: &Term, s: &WeightedStructure, a: &Assignment) -> Result<Weight, EvalError> {
    match eval_expression(&Expr::Term(t.clone()), s, a)? {
        EvalResult::Weight(w) => Ok(w),
        EvalResult::Bool(_) => unreachable!("terms evaluate to weights"),
    }
}

// ---------------------------------------------------------------------------
// Strata

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoundDelta {
    pub tuples_added: usize,
    pub entries_defined: usize,
    pub entries_overwritten: usize,
    /// Largest bit size of any intensional weight entry after the round.
    pub max_bit_size: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    FunctionalFixpoint,
    LooseIndex,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixpointTrace {
    /// Number of rounds applied to reach the returned structure.
    pub rounds: usize,
    pub deltas: Vec<RoundDelta>,
    pub termination: Termination,
}

impl FixpointTrace {
    pub fn max_bit_size(&self) -> u64 {
        self.deltas.iter().map(|d| d.max_bit_size).max().unwrap_or(0)
    }
}

impl fmt::Display for FixpointTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.deltas.iter().enumerate() {
            writeln!(
                f,
                "round {}: +{} tuples, {} defined, {} overwritten, max bits {}",
                i + 1,
                d.tuples_added,
                d.entries_defined,
                d.entries_overwritten,
                d.max_bit_size
            )?;
        }
        let kind = match self.termination {
            Termination::FunctionalFixpoint => "functional fixpoint",
            Termination::LooseIndex => "loose termination index",
        };
        write!(f, "{kind} after {} rounds", self.rounds)
    }
}

struct CompiledRule {
    head: String,
    arity: usize,
    relation: bool,
    head_slots: Vec<usize>,
    formula: Option<CF>,
    term: Option<CT>,
}

struct CompiledStratum {
    tables: SymbolTables,
    rules: Vec<CompiledRule>,
    n_slots: usize,
    n_memos: usize,
    n_locals: usize,
}

fn compile_stratum(st: &Stratum) -> Result<CompiledStratum, EvalError> {
    let tables = SymbolTables::of(&st.vocabulary());
    let mut rules = Vec::new();
    let (mut n_slots, mut n_memos, mut n_locals) = (0, 0, 0);
    for r in &st.rules {
        let mut c = tables.compiler();
        c.n_slots = n_slots;
        c.n_memos = n_memos;
        c.n_locals = n_locals;
        let head_slots: Vec<usize> = r.vars.iter().map(|v| c.bind(v)).collect();
        let (formula, term) = match &r.body {
            Expr::Formula(f) => (Some(c.formula(f)?.0), None),
            Expr::Term(t) => (None, Some(c.term(t)?.0)),
        };
        n_slots = c.n_slots;
        n_memos = c.n_memos;
        n_locals = c.n_locals;
        rules.push(CompiledRule {
            head: r.head.clone(),
            arity: r.arity(),
            relation: formula.is_some(),
            head_slots,
            formula,
            term,
        });
    }
    Ok(CompiledStratum { tables, rules, n_slots, n_memos, n_locals })
}

enum Update {
    Rel(Vec<usize>),
    Fun(Vec<(usize, Weight)>),
}

/// Checks that `s` interprets every symbol of `vocab` with matching kind
/// and arity.
fn check_interprets(s: &WeightedStructure, vocab: &Vocabulary) -> Result<(), EvalError> {
    for (name, info) in vocab.iter() {
        match s.vocabulary().get(name) {
            Some(have) if have == info => {}
            Some(have) => {
                return Err(EvalError::StructureMismatch(format!(
                    "`{name}` is {} of arity {}, expected {} of arity {}",
                    have.kind, have.arity, info.kind, info.arity
                )))
            }
            None => return Err(EvalError::StructureMismatch(format!("structure lacks `{name}`"))),
        }
    }
    Ok(())
}

/// Resets the intensional symbols of `st` to empty relations and undefined
/// functions, adding them when absent.
fn initialize(st: &Stratum, s: &WeightedStructure) -> Result<WeightedStructure, EvalError> {
    check_interprets(s, &st.extensional)?;
    let mut out = s.clone();
    let n = s.size();
    for (name, info) in st.intensional.iter() {
        if table_size(n, info.arity).is_none() {
            return Err(EvalError::StructureMismatch(format!("table for `{name}` is too large")));
        }
        if let Some(have) = out.vocabulary().get(name) {
            if have != info {
                return Err(EvalError::StructureMismatch(format!("`{name}` clashes with an input symbol")));
            }
        }
        match info.kind {
            SymbolKind::Relation => {
                if out.relation(name).is_none() {
                    out.add_relation(name, info.arity).map_err(|e| EvalError::StructureMismatch(e.to_string()))?;
                }
                out.set_relation(name, Relation::empty(n, info.arity));
            }
            SymbolKind::Function => {
                if out.function(name).is_none() {
                    out.add_function(name, info.arity).map_err(|e| EvalError::StructureMismatch(e.to_string()))?;
                }
                out.set_function(name, WeightTable::undefined(n, info.arity));
            }
        }
    }
    Ok(out)
}

/// Evaluates every rule of `cs` against the fixed structure `s`. Relation
/// rules only report new tuples; in functional mode function rules only
/// report entries that are still undefined.
fn consequences(cs: &CompiledStratum, s: &WeightedStructure, mode: Mode, relations_only: bool) -> Vec<Update> {
    let mut ctx = Ctx::new(s, &cs.tables, cs.n_slots, cs.n_memos, cs.n_locals);
    let n = s.size();
    let mut out = Vec::with_capacity(cs.rules.len());
    for r in &cs.rules {
        let size = table_size(n, r.arity).expect("checked by initialize");
        if r.relation {
            let rel = s.relation(&r.head).expect("initialized");
            let f = r.formula.as_ref().expect("relation rule");
            let mut added = Vec::new();
            for idx in 0..size {
                if rel.contains_index(idx) {
                    continue;
                }
                for (slot, e) in r.head_slots.iter().zip(tuple_at(n, r.arity, idx)) {
                    ctx.env[*slot] = e;
                }
                if ctx.formula(f) {
                    added.push(idx);
                }
            }
            out.push(Update::Rel(added));
        } else if relations_only {
            out.push(Update::Fun(Vec::new()));
        } else {
            let table = s.function(&r.head).expect("initialized");
            let t = r.term.as_ref().expect("function rule");
            let mut values = Vec::new();
            for idx in 0..size {
                if mode == Mode::Functional && !table.get_index(idx).is_bot() {
                    continue;
                }
                for (slot, e) in r.head_slots.iter().zip(tuple_at(n, r.arity, idx)) {
                    ctx.env[*slot] = e;
                }
                values.push((idx, ctx.term(t)));
            }
            out.push(Update::Fun(values));
        }
    }
    out
}

fn apply(cs: &CompiledStratum, s: &mut WeightedStructure, updates: Vec<Update>, mode: Mode) -> RoundDelta {
    let mut d = RoundDelta::default();
    for (r, u) in cs.rules.iter().zip(updates) {
        match u {
            Update::Rel(added) => {
                let rel = s.relation_mut(&r.head).expect("initialized");
                for idx in added {
                    if rel.insert_index(idx) {
                        d.tuples_added += 1;
                    }
                }
            }
            Update::Fun(values) => {
                let table = s.function_mut(&r.head).expect("initialized");
                for (idx, v) in values {
                    let old = table.get_index(idx);
                    if old.is_bot() {
                        if !v.is_bot() {
                            d.entries_defined += 1;
                            table.set_index(idx, v);
                        }
                    } else if *old != v {
                        debug_assert!(mode == Mode::Loose, "functional mode never overwrites");
                        d.entries_overwritten += 1;
                        table.set_index(idx, v);
                    }
                }
            }
        }
    }
    d.max_bit_size = cs
        .rules
        .iter()
        .filter(|r| !r.relation)
        .map(|r| s.function(&r.head).expect("initialized").max_bit_size())
        .max()
        .unwrap_or(0);
    d
}

/// One application of the immediate-consequence operator: every rule body
/// is evaluated against `s` and the results merged afterwards.
pub fn immediate_consequence(st: &Stratum, s: &WeightedStructure, mode: Mode) -> Result<WeightedStructure, EvalError> {
    check_interprets(s, &st.vocabulary())?;
    check_tables(s)?;
    let cs = compile_stratum(st)?;
    let updates = consequences(&cs, s, mode, false);
    let mut out = s.clone();
    apply(&cs, &mut out, updates, mode);
    Ok(out)
}

/// Round bound: `1 + Σ |A|^ar(S)` over intensional symbols (functional) or
/// over intensional relations (loose).
pub fn round_bound(st: &Stratum, universe: usize, mode: Mode) -> usize {
    let mut total = 1usize;
    for (_, info) in st.intensional.iter() {
        if mode == Mode::Loose && info.kind != SymbolKind::Relation {
            continue;
        }
        total = total.saturating_add(table_size(universe, info.arity).unwrap_or(usize::MAX));
    }
    total
}

/// Runs a stratum from empty intensional symbols to its fixpoint (functional)
/// or to its loose termination index (loose).
pub fn run_stratum(
    st: &Stratum,
    s: &WeightedStructure,
    mode: Mode,
) -> Result<(WeightedStructure, FixpointTrace), EvalError> {
    let mut cur = initialize(st, s)?;
    check_tables(&cur)?;
    let cs = compile_stratum(st)?;
    let bound = round_bound(st, cur.size(), mode);
    let mut deltas = Vec::new();
    loop {
        match mode {
            Mode::Functional => {
                let updates = consequences(&cs, &cur, mode, false);
                let mut next = cur.clone();
                let d = apply(&cs, &mut next, updates, mode);
                if d.tuples_added == 0 && d.entries_defined == 0 {
                    break;
                }
                debug_assert_eq!(d.entries_overwritten, 0);
                deltas.push(d);
                cur = next;
            }
            Mode::Loose => {
                // Relations of L(B) decide termination; weights are only
                // needed when the round is kept.
                let rel_updates = consequences(&cs, &cur, mode, true);
                let grows = rel_updates.iter().any(|u| matches!(u, Update::Rel(a) if !a.is_empty()));
                if !grows {
                    break;
                }
                let updates = consequences(&cs, &cur, mode, false);
                let mut next = cur.clone();
                let d = apply(&cs, &mut next, updates, mode);
                deltas.push(d);
                cur = next;
            }
        }
        tracing::debug!(round = deltas.len(), "stratum round");
        if deltas.len() > bound {
            return Err(EvalError::IterationBoundExceeded(bound));
        }
    }
    let termination = match mode {
        Mode::Functional => Termination::FunctionalFixpoint,
        Mode::Loose => Termination::LooseIndex,
    };
    Ok((cur, FixpointTrace { rounds: deltas.len(), deltas, termination }))
}

/// The interpretation of the answer symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AnswerView {
    Bool(bool),
    Relation { name: String, arity: usize, tuples: Vec<Vec<String>> },
    Function { name: String, arity: usize, entries: Vec<(Vec<String>, Weight)> },
}

impl AnswerView {
    pub fn of(s: &WeightedStructure, name: &str) -> Option<AnswerView> {
        let info = s.vocabulary().get(name)?;
        Some(match info.kind {
            SymbolKind::Relation if info.arity == 0 => AnswerView::Bool(s.contains(name, &[])),
            SymbolKind::Relation => AnswerView::Relation {
                name: name.to_string(),
                arity: info.arity,
                tuples: s.tuples(name).iter().map(|t| s.named_tuple(t)).collect(),
            },
            SymbolKind::Function => AnswerView::Function {
                name: name.to_string(),
                arity: info.arity,
                entries: all_tuples(s.size(), info.arity).map(|t| (s.named_tuple(&t), s.weight(name, &t))).collect(),
            },
        })
    }

    pub fn to_json(&self) -> Value {
        match self {
            AnswerView::Bool(b) => json!(b),
            AnswerView::Relation { name, arity, tuples } => json!({ "relation": name, "arity": arity, "tuples": tuples }),
            AnswerView::Function { name, arity, entries } => json!({
                "function": name,
                "arity": arity,
                "entries": entries.iter().map(|(t, w)| json!({ "tuple": t, "value": w.to_string() })).collect::<Vec<_>>(),
            }),
        }
    }
}

/// Runs the strata in order; each sees the symbols defined before it.
pub fn run_program(
    p: &Program,
    s: &WeightedStructure,
    mode: Mode,
) -> Result<(WeightedStructure, AnswerView, Vec<FixpointTrace>), EvalError> {
    check_interprets(s, &p.input)?;
    let mut cur = s.clone();
    let mut traces = Vec::new();
    for st in &p.strata {
        let (next, trace) = run_stratum(st, &cur, mode)?;
        cur = next;
        traces.push(trace);
    }
    let view = AnswerView::of(&cur, &p.answer).expect("answer symbol is defined by a stratum");
    Ok((cur, view, traces))
}

/// Largest bit size of any weight in the structure, as a rational size
/// measure; also used for growth checks.
pub fn structure_bit_size(s: &WeightedStructure) -> u64 {
    s.max_bit_size()
}

#[doc(hidden)]
pub fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{builtins, parse_expression, parse_program, Rule};

    fn path(n: usize) -> WeightedStructure {
        let mut s = WeightedStructure::from_elements((0..=n).map(|i| format!("v{i}"))).unwrap();
        s.add_relation("E", 2).unwrap();
        for i in 0..n {
            s.insert("E", &[i as Elem, i as Elem + 1]).unwrap();
        }
        s
    }

    #[allow(clippy::needless_range_loop)]
    fn matrix(w: &[&[i64]]) -> WeightedStructure {
        let n = w.len();
        let mut s = WeightedStructure::from_elements((0..n).map(|i| format!("n{i}"))).unwrap();
        s.add_relation("ord", 2).unwrap();
        s.add_function("W", 2).unwrap();
        for i in 0..n {
            for j in 0..n {
                if i < j {
                    s.insert("ord", &[i as Elem, j as Elem]).unwrap();
                }
                s.set_weight("W", &[i as Elem, j as Elem], Weight::int(w[i][j])).unwrap();
            }
        }
        s
    }

    #[test]
    fn squaring_on_paths() {
        let t = Expr::Term(builtins::squaring());
        for (n, want) in [(0usize, 2i64), (1, 4), (2, 16), (3, 256), (4, 65536)] {
            let s = path(n);
            let a = Assignment::new().bind("x", n as Elem);
            assert_eq!(eval_expression(&t, &s, &a).unwrap(), EvalResult::Weight(Weight::int(want)), "n = {n}");
        }
    }

    #[test]
    fn constants_and_aggregates() {
        let s = path(2);
        let v = Vocabulary::new().rel("E", 2);
        let ev = |text: &str| eval_expression(&parse_expression(text, &v).unwrap(), &s, &Assignment::new()).unwrap();
        assert_eq!(ev("bot"), EvalResult::Weight(Weight::Bot));
        assert_eq!(ev("sum (x,y): E(x,y) 1"), EvalResult::Weight(Weight::int(2)));
        assert_eq!(ev("sum (x): false 1"), EvalResult::Weight(Weight::int(0)));
        assert_eq!(ev("avg (x): false 1"), EvalResult::Weight(Weight::Bot));
        assert_eq!(ev("avg (x): true 3"), EvalResult::Weight(Weight::int(3)));
        assert_eq!(ev("uniq (x): true 3"), EvalResult::Weight(Weight::int(3)));
        assert_eq!(ev("uniq (x): true sum (y): E(x,y) 1"), EvalResult::Weight(Weight::Bot));
        assert_eq!(ev("uniq (x): exists y E(y,x) sum (y): E(y,x) 1"), EvalResult::Weight(Weight::int(1)));
        assert_eq!(ev("sum (x): true (if exists y E(x,y) then 1 else bot)"), EvalResult::Weight(Weight::Bot));
        assert_eq!(ev("exists x forall y !E(y,x)"), EvalResult::Bool(true));
        assert_eq!(ev("bot <= 0 & !(0 <= bot) & 1 / 0 = bot"), EvalResult::Bool(true));
    }

    #[test]
    fn unbound_variable_is_reported() {
        let s = path(1);
        let e = parse_expression("E(x,y)", &Vocabulary::new().rel("E", 2)).unwrap();
        let a = Assignment::new().bind("x", 0);
        assert_eq!(eval_expression(&e, &s, &a), Err(EvalError::UnboundVariable("y".into())));
    }

    #[test]
    fn fw_first_loose_round() {
        let s = matrix(&[&[0, 1, 5], &[1, 0, 1], &[5, 1, 0]]);
        let p = builtins::floyd_warshall();
        let st = &p.strata[0];
        let init = initialize(st, &s).unwrap();
        let r1 = immediate_consequence(st, &init, Mode::Loose).unwrap();
        // Round 1 relaxes through the first node n0 only.
        assert_eq!(r1.tuples("chosen"), vec![vec![0]]);
        assert_eq!(r1.weight("D", &[0, 2]), Weight::int(5));
        assert_eq!(r1.weight("D", &[1, 2]), Weight::int(1));
        let (out, trace) = run_stratum(st, &s, Mode::Loose).unwrap();
        assert_eq!(out.weight("D", &[0, 2]), Weight::int(2));
        assert_eq!(out.weight("D", &[2, 0]), Weight::int(2));
        assert_eq!(trace.termination, Termination::LooseIndex);
        assert_eq!(trace.rounds, 3);
    }

    #[test]
    fn fw_functional_freezes_after_first_round() {
        let s = matrix(&[&[0, 5, 1], &[5, 0, 1], &[1, 1, 0]]);
        let p = builtins::floyd_warshall();
        let (out, trace) = run_stratum(&p.strata[0], &s, Mode::Functional).unwrap();
        assert_eq!(out.weight("D", &[0, 1]), Weight::int(5));
        assert!(trace.deltas.iter().all(|d| d.entries_overwritten == 0));
        let (loose, _) = run_stratum(&p.strata[0], &s, Mode::Loose).unwrap();
        assert_eq!(loose.weight("D", &[0, 1]), Weight::int(2));
    }

    #[test]
    fn functional_mode_keeps_defined_entries() {
        let v = Vocabulary::new();
        let st = Stratum::new(v, vec![Rule::function("F", &["x"], Term::int(1))]).unwrap();
        let mut s = WeightedStructure::from_elements(["a", "b"]).unwrap();
        s.add_function("F", 1).unwrap();
        s.set_weight("F", &[0], Weight::int(2)).unwrap();
        let out = immediate_consequence(&st, &s, Mode::Functional).unwrap();
        assert_eq!(out.weight("F", &[0]), Weight::int(2));
        assert_eq!(out.weight("F", &[1]), Weight::int(1));
        let out = immediate_consequence(&st, &s, Mode::Loose).unwrap();
        assert_eq!(out.weight("F", &[0]), Weight::int(1));
    }

    #[test]
    fn loose_index_zero_without_relations() {
        let st = Stratum::new(Vocabulary::new(), vec![Rule::function("F", &["x"], Term::int(1))]).unwrap();
        let s = WeightedStructure::from_elements(["a"]).unwrap();
        let (out, trace) = run_stratum(&st, &s, Mode::Loose).unwrap();
        assert_eq!(trace.rounds, 0);
        assert_eq!(out.weight("F", &[0]), Weight::Bot);
        let (out, trace) = run_stratum(&st, &s, Mode::Functional).unwrap();
        assert_eq!(trace.rounds, 1);
        assert_eq!(out.weight("F", &[0]), Weight::int(1));
    }

    #[test]
    fn acyclicity_answers() {
        let p = builtins::acyclicity();
        let mut s = WeightedStructure::from_elements(["a", "b", "c"]).unwrap();
        s.add_relation("E", 2).unwrap();
        s.add_relation("S", 1).unwrap();
        s.insert("S", &[0]).unwrap();
        s.insert("E", &[0, 1]).unwrap();
        s.insert("E", &[1, 2]).unwrap();
        let (_, view, _) = run_program(&p, &s, Mode::Functional).unwrap();
        assert_eq!(view, AnswerView::Bool(true));
        s.insert("E", &[2, 1]).unwrap();
        let (_, view, _) = run_program(&p, &s, Mode::Loose).unwrap();
        assert_eq!(view, AnswerView::Bool(false));
    }

    #[test]
    fn ifp_agrees_with_stratum() {
        let v = Vocabulary::new().rel("E", 2);
        let body = "if !exists y E(y,x) then 1 else sum (y): E(y,x) F(y) + 1";
        let p = parse_program(&format!("rel E/2; fun F/1; F(x) <- {body};"), &v).unwrap();
        let e = parse_expression(&format!("ifp F(x) <- {body} at (z)"), &v).unwrap();
        let s = path(3);
        let (out, _, _) = run_program(&p, &s, Mode::Functional).unwrap();
        let mut ev = ExprEvaluator::new(&e, &s, &["z".to_string()]).unwrap();
        for z in 0..4 {
            assert_eq!(ev.eval(&[z]), EvalResult::Weight(out.weight("F", &[z])));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let s = matrix(&[&[0, 3, 1, 7], &[2, 0, 9, 1], &[1, 1, 0, 4], &[6, 2, 2, 0]]);
        let p = builtins::floyd_warshall();
        let a = run_program(&p, &s, Mode::Loose).unwrap();
        let b = run_program(&p, &s, Mode::Loose).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
        assert_eq!(a.0.to_json(), b.0.to_json());
    }

    #[test]
    fn input_vocabulary_mismatch() {
        let p = builtins::floyd_warshall();
        let s = path(2);
        assert!(matches!(run_program(&p, &s, Mode::Loose), Err(EvalError::StructureMismatch(_))));
    }
}
