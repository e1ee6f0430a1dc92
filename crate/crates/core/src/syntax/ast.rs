//! Abstract syntax of FO(SUM)/IFP(SUM) formulas and weight terms.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::weight::Weight;

pub type Var = String;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoolOp {
    And,
    Or,
    Implies,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quantifier {
    Exists,
    Forall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    pub fn apply(self, a: &Weight, b: &Weight) -> Weight {
        match self {
            ArithOp::Add => a.add(b),
            ArithOp::Sub => a.sub(b),
            ArithOp::Mul => a.mul(b),
            ArithOp::Div => a.div(b),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    /// Truth constant; used by generated rules such as `__dummyR(x) <- false`.
    Bool(bool),
    VarEq(Var, Var),
    Rel(String, Vec<Var>),
    Leq(Box<Term>, Box<Term>),
    Not(Box<Formula>),
    Bin(BoolOp, Box<Formula>, Box<Formula>),
    Quant(Quantifier, Var, Box<Formula>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Const(Weight),
    App(String, Vec<Var>),
    Arith(ArithOp, Box<Term>, Box<Term>),
    Ite(Box<Formula>, Box<Term>, Box<Term>),
    Sum(Vec<Var>, Box<Formula>, Box<Term>),
    Avg(Vec<Var>, Box<Formula>, Box<Term>),
    Uniq(Var, Box<Formula>, Box<Term>),
    Ifp(Box<Ifp>),
}

/// `ifp F(params) <- body at (args)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ifp {
    pub func: String,
    pub params: Vec<Var>,
    pub body: Term,
    pub args: Vec<Var>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Formula(Formula),
    Term(Term),
}

impl From<Formula> for Expr {
    fn from(f: Formula) -> Self {
        Expr::Formula(f)
    }
}

impl From<Term> for Expr {
    fn from(t: Term) -> Self {
        Expr::Term(t)
    }
}

fn vars(vs: &[&str]) -> Vec<Var> {
    vs.iter().map(|v| v.to_string()).collect()
}

// Constructors. Comparison helpers desugar into `<=` exactly as the surface
// syntax does.
impl Formula {
    pub fn tt() -> Self {
        Formula::Bool(true)
    }

    pub fn ff() -> Self {
        Formula::Bool(false)
    }

    pub fn rel(name: &str, args: &[&str]) -> Self {
        Formula::Rel(name.to_string(), vars(args))
    }

    pub fn rel_vars(name: &str, args: Vec<Var>) -> Self {
        Formula::Rel(name.to_string(), args)
    }

    pub fn var_eq(x: &str, y: &str) -> Self {
        Formula::VarEq(x.to_string(), y.to_string())
    }

    pub fn var_neq(x: &str, y: &str) -> Self {
        Formula::var_eq(x, y).not()
    }

    pub fn leq(a: Term, b: Term) -> Self {
        Formula::Leq(Box::new(a), Box::new(b))
    }

    /// `a < b` as `!(b <= a)`.
    pub fn lt(a: Term, b: Term) -> Self {
        Formula::leq(b, a).not()
    }

    /// `a > b` as `!(a <= b)`.
    pub fn gt(a: Term, b: Term) -> Self {
        Formula::leq(a, b).not()
    }

    /// `a >= b` as `b <= a`.
    pub fn geq(a: Term, b: Term) -> Self {
        Formula::leq(b, a)
    }

    /// `a = b` as `a <= b & b <= a`.
    pub fn term_eq(a: Term, b: Term) -> Self {
        Formula::leq(a.clone(), b.clone()).and(Formula::leq(b, a))
    }

    pub fn term_neq(a: Term, b: Term) -> Self {
        Formula::term_eq(a, b).not()
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        Formula::Not(Box::new(self))
    }

    pub fn and(self, other: Formula) -> Self {
        Formula::Bin(BoolOp::And, Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Formula) -> Self {
        Formula::Bin(BoolOp::Or, Box::new(self), Box::new(other))
    }

    pub fn implies(self, other: Formula) -> Self {
        Formula::Bin(BoolOp::Implies, Box::new(self), Box::new(other))
    }

    pub fn iff(self, other: Formula) -> Self {
        self.clone().implies(other.clone()).and(other.implies(self))
    }

    /// Conjunction of all parts; `true` when empty.
    pub fn all(parts: impl IntoIterator<Item = Formula>) -> Self {
        parts.into_iter().reduce(Formula::and).unwrap_or(Formula::Bool(true))
    }

    /// Disjunction of all parts; `false` when empty.
    pub fn any(parts: impl IntoIterator<Item = Formula>) -> Self {
        parts.into_iter().reduce(Formula::or).unwrap_or(Formula::Bool(false))
    }

    pub fn exists(vs: &[&str], body: Formula) -> Self {
        Formula::exists_vars(vars(vs), body)
    }

    pub fn exists_vars(vs: Vec<Var>, body: Formula) -> Self {
        vs.into_iter().rev().fold(body, |acc, v| Formula::Quant(Quantifier::Exists, v, Box::new(acc)))
    }

    pub fn forall(vs: &[&str], body: Formula) -> Self {
        Formula::forall_vars(vars(vs), body)
    }

    pub fn forall_vars(vs: Vec<Var>, body: Formula) -> Self {
        vs.into_iter().rev().fold(body, |acc, v| Formula::Quant(Quantifier::Forall, v, Box::new(acc)))
    }
}

impl Term {
    pub fn constant(w: Weight) -> Self {
        Term::Const(w)
    }

    pub fn int(n: i64) -> Self {
        Term::Const(Weight::int(n))
    }

    pub fn bot() -> Self {
        Term::Const(Weight::Bot)
    }

    pub fn app(name: &str, args: &[&str]) -> Self {
        Term::App(name.to_string(), vars(args))
    }

    pub fn app_vars(name: &str, args: Vec<Var>) -> Self {
        Term::App(name.to_string(), args)
    }

    pub fn arith(op: ArithOp, a: Term, b: Term) -> Self {
        Term::Arith(op, Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, b: Term) -> Self {
        Term::arith(ArithOp::Add, self, b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, b: Term) -> Self {
        Term::arith(ArithOp::Sub, self, b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, b: Term) -> Self {
        Term::arith(ArithOp::Mul, self, b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(self, b: Term) -> Self {
        Term::arith(ArithOp::Div, self, b)
    }

    pub fn ite(cond: Formula, then: Term, otherwise: Term) -> Self {
        Term::Ite(Box::new(cond), Box::new(then), Box::new(otherwise))
    }

    pub fn sum(vs: &[&str], guard: Formula, body: Term) -> Self {
        Term::Sum(vars(vs), Box::new(guard), Box::new(body))
    }

    pub fn sum_vars(vs: Vec<Var>, guard: Formula, body: Term) -> Self {
        Term::Sum(vs, Box::new(guard), Box::new(body))
    }

    pub fn avg(vs: &[&str], guard: Formula, body: Term) -> Self {
        Term::Avg(vars(vs), Box::new(guard), Box::new(body))
    }

    pub fn avg_vars(vs: Vec<Var>, guard: Formula, body: Term) -> Self {
        Term::Avg(vs, Box::new(guard), Box::new(body))
    }

    pub fn uniq(v: &str, guard: Formula, body: Term) -> Self {
        Term::Uniq(v.to_string(), Box::new(guard), Box::new(body))
    }

    pub fn ifp(func: &str, params: &[&str], body: Term, args: &[&str]) -> Self {
        Term::ifp_vars(func, vars(params), body, vars(args))
    }

    pub fn ifp_vars(func: &str, params: Vec<Var>, body: Term, args: Vec<Var>) -> Self {
        Term::Ifp(Box::new(Ifp { func: func.to_string(), params, body, args }))
    }

    /// `relu(t)` as `if 0 <= t then t else 0`.
    pub fn relu(t: Term) -> Self {
        Term::ite(Formula::leq(Term::int(0), t.clone()), t, Term::int(0))
    }
}

// ---------------------------------------------------------------------------
// Variables and symbols

impl Formula {
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
        let mut note = |v: &Var, bound: &Vec<Var>| {
            if !bound.contains(v) {
                out.insert(v.clone());
            }
        };
        match self {
            Formula::Bool(_) => {}
            Formula::VarEq(x, y) => {
                note(x, bound);
                note(y, bound);
            }
            Formula::Rel(_, args) => args.iter().for_each(|v| note(v, bound)),
            Formula::Leq(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Not(f) => f.collect_free(bound, out),
            Formula::Bin(_, a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Quant(_, v, body) => {
                bound.push(v.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }
}

impl Term {
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
        match self {
            Term::Const(_) => {}
            Term::App(_, args) => {
                out.extend(args.iter().filter(|v| !bound.contains(v)).cloned());
            }
            Term::Arith(_, a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Term::Ite(c, a, b) => {
                c.collect_free(bound, out);
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Term::Sum(vs, g, body) | Term::Avg(vs, g, body) => {
                let depth = bound.len();
                bound.extend(vs.iter().cloned());
                g.collect_free(bound, out);
                body.collect_free(bound, out);
                bound.truncate(depth);
            }
            Term::Uniq(v, g, body) => {
                bound.push(v.clone());
                g.collect_free(bound, out);
                body.collect_free(bound, out);
                bound.pop();
            }
            Term::Ifp(ifp) => {
                let depth = bound.len();
                bound.extend(ifp.params.iter().cloned());
                ifp.body.collect_free(bound, out);
                bound.truncate(depth);
                out.extend(ifp.args.iter().filter(|v| !bound.contains(v)).cloned());
            }
        }
    }
}

impl Expr {
    pub fn free_vars(&self) -> BTreeSet<Var> {
        match self {
            Expr::Formula(f) => f.free_vars(),
            Expr::Term(t) => t.free_vars(),
        }
    }

    pub fn is_formula(&self) -> bool {
        matches!(self, Expr::Formula(_))
    }
}

/// Every variable name occurring anywhere (free or bound).
pub fn all_var_names(e: &Expr, out: &mut BTreeSet<Var>) {
    fn f_names(f: &Formula, out: &mut BTreeSet<Var>) {
        match f {
            Formula::Bool(_) => {}
            Formula::VarEq(x, y) => {
                out.insert(x.clone());
                out.insert(y.clone());
            }
            Formula::Rel(_, a) => out.extend(a.iter().cloned()),
            Formula::Leq(a, b) => {
                t_names(a, out);
                t_names(b, out);
            }
            Formula::Not(g) => f_names(g, out),
            Formula::Bin(_, a, b) => {
                f_names(a, out);
                f_names(b, out);
            }
            Formula::Quant(_, v, b) => {
                out.insert(v.clone());
                f_names(b, out);
            }
        }
    }
    fn t_names(t: &Term, out: &mut BTreeSet<Var>) {
        match t {
            Term::Const(_) => {}
            Term::App(_, a) => out.extend(a.iter().cloned()),
            Term::Arith(_, a, b) => {
                t_names(a, out);
                t_names(b, out);
            }
            Term::Ite(c, a, b) => {
                f_names(c, out);
                t_names(a, out);
                t_names(b, out);
            }
            Term::Sum(vs, g, b) | Term::Avg(vs, g, b) => {
                out.extend(vs.iter().cloned());
                f_names(g, out);
                t_names(b, out);
            }
            Term::Uniq(v, g, b) => {
                out.insert(v.clone());
                f_names(g, out);
                t_names(b, out);
            }
            Term::Ifp(i) => {
                out.extend(i.params.iter().cloned());
                out.extend(i.args.iter().cloned());
                t_names(&i.body, out);
            }
        }
    }
    match e {
        Expr::Formula(f) => f_names(f, out),
        Expr::Term(t) => t_names(t, out),
    }
}

/// Generator of variable names that clash with nothing seen so far.
#[derive(Clone, Debug, Default)]
pub struct Fresh {
    used: BTreeSet<Var>,
    counter: usize,
}

impl Fresh {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn avoiding(names: impl IntoIterator<Item = Var>) -> Self {
        Fresh { used: names.into_iter().collect(), counter: 0 }
    }

    pub fn reserve(&mut self, name: &str) {
        self.used.insert(name.to_string());
    }

    pub fn reserve_expr(&mut self, e: &Expr) {
        all_var_names(e, &mut self.used);
    }

    pub fn var(&mut self, base: &str) -> Var {
        loop {
            self.counter += 1;
            let candidate = format!("{base}_{}", self.counter);
            if self.used.insert(candidate.clone()) {
                return candidate;
            }
        }
    }

    pub fn vars(&mut self, base: &str, n: usize) -> Vec<Var> {
        (0..n).map(|_| self.var(base)).collect()
    }
}

// ---------------------------------------------------------------------------
// Capture-avoiding renaming of free variables

fn rename_var(v: &Var, map: &HashMap<Var, Var>) -> Var {
    map.get(v).cloned().unwrap_or_else(|| v.clone())
}

/// If binding `v` would capture one of the substituted names, rename the
/// binder. Returns the binder to use and the updated map for the scope.
fn enter_binder(v: &Var, map: &HashMap<Var, Var>, fresh: &mut Fresh) -> (Var, HashMap<Var, Var>) {
    let mut inner = map.clone();
    inner.remove(v);
    let captures = inner.values().any(|target| target == v);
    if captures {
        let nv = fresh.var(v);
        inner.insert(v.clone(), nv.clone());
        (nv, inner)
    } else {
        (v.clone(), inner)
    }
}

impl Formula {
    /// Simultaneously renames free variables according to `map`.
    pub fn rename_free(&self, map: &HashMap<Var, Var>, fresh: &mut Fresh) -> Formula {
        if map.is_empty() {
            return self.clone();
        }
        match self {
            Formula::Bool(b) => Formula::Bool(*b),
            Formula::VarEq(x, y) => Formula::VarEq(rename_var(x, map), rename_var(y, map)),
            Formula::Rel(n, args) => Formula::Rel(n.clone(), args.iter().map(|v| rename_var(v, map)).collect()),
            Formula::Leq(a, b) => Formula::Leq(Box::new(a.rename_free(map, fresh)), Box::new(b.rename_free(map, fresh))),
            Formula::Not(f) => Formula::Not(Box::new(f.rename_free(map, fresh))),
            Formula::Bin(op, a, b) => {
                Formula::Bin(*op, Box::new(a.rename_free(map, fresh)), Box::new(b.rename_free(map, fresh)))
            }
            Formula::Quant(q, v, body) => {
                let (nv, inner) = enter_binder(v, map, fresh);
                Formula::Quant(*q, nv, Box::new(body.rename_free(&inner, fresh)))
            }
        }
    }
}

impl Term {
    pub fn rename_free(&self, map: &HashMap<Var, Var>, fresh: &mut Fresh) -> Term {
        if map.is_empty() {
            return self.clone();
        }
        match self {
            Term::Const(w) => Term::Const(w.clone()),
            Term::App(n, args) => Term::App(n.clone(), args.iter().map(|v| rename_var(v, map)).collect()),
            Term::Arith(op, a, b) => Term::Arith(*op, Box::new(a.rename_free(map, fresh)), Box::new(b.rename_free(map, fresh))),
            Term::Ite(c, a, b) => Term::Ite(
                Box::new(c.rename_free(map, fresh)),
                Box::new(a.rename_free(map, fresh)),
                Box::new(b.rename_free(map, fresh)),
            ),
            Term::Sum(vs, g, body) | Term::Avg(vs, g, body) => {
                let mut inner = map.clone();
                let mut nvs = Vec::with_capacity(vs.len());
                for v in vs {
                    let (nv, next) = enter_binder(v, &inner, fresh);
                    inner = next;
                    nvs.push(nv);
                }
                let g = Box::new(g.rename_free(&inner, fresh));
                let body = Box::new(body.rename_free(&inner, fresh));
                if matches!(self, Term::Sum(..)) {
                    Term::Sum(nvs, g, body)
                } else {
                    Term::Avg(nvs, g, body)
                }
            }
            Term::Uniq(v, g, body) => {
                let (nv, inner) = enter_binder(v, map, fresh);
                Term::Uniq(nv, Box::new(g.rename_free(&inner, fresh)), Box::new(body.rename_free(&inner, fresh)))
            }
            Term::Ifp(ifp) => {
                let mut inner = map.clone();
                let mut params = Vec::with_capacity(ifp.params.len());
                for v in &ifp.params {
                    let (nv, next) = enter_binder(v, &inner, fresh);
                    inner = next;
                    params.push(nv);
                }
                Term::Ifp(Box::new(Ifp {
                    func: ifp.func.clone(),
                    params,
                    body: ifp.body.rename_free(&inner, fresh),
                    args: ifp.args.iter().map(|v| rename_var(v, map)).collect(),
                }))
            }
        }
    }
}

/// Builds the renaming `from[i] -> to[i]`.
pub fn renaming(from: &[Var], to: &[Var]) -> HashMap<Var, Var> {
    from.iter().cloned().zip(to.iter().cloned()).filter(|(a, b)| a != b).collect()
}

// ---------------------------------------------------------------------------
// Symbol replacement

/// Callbacks for replacing atoms `R(ȳ)` and applications `F(ȳ)`; returning
/// `None` keeps the occurrence.
pub trait Replacer {
    fn relation(&mut self, _name: &str, _args: &[Var]) -> Option<Formula> {
        None
    }
    fn function(&mut self, _name: &str, _args: &[Var]) -> Option<Term> {
        None
    }
}

impl Formula {
    /// Replaces symbol occurrences bottom-up. The replacement must only use
    /// the given argument variables freely and fresh names for its binders.
    pub fn replace(&self, r: &mut dyn Replacer) -> Formula {
        match self {
            Formula::Bool(b) => Formula::Bool(*b),
            Formula::VarEq(x, y) => Formula::VarEq(x.clone(), y.clone()),
            Formula::Rel(n, args) => r.relation(n, args).unwrap_or_else(|| self.clone()),
            Formula::Leq(a, b) => Formula::Leq(Box::new(a.replace(r)), Box::new(b.replace(r))),
            Formula::Not(f) => Formula::Not(Box::new(f.replace(r))),
            Formula::Bin(op, a, b) => Formula::Bin(*op, Box::new(a.replace(r)), Box::new(b.replace(r))),
            Formula::Quant(q, v, b) => Formula::Quant(*q, v.clone(), Box::new(b.replace(r))),
        }
    }
}

impl Term {
    pub fn replace(&self, r: &mut dyn Replacer) -> Term {
        match self {
            Term::Const(w) => Term::Const(w.clone()),
            Term::App(n, args) => r.function(n, args).unwrap_or_else(|| self.clone()),
            Term::Arith(op, a, b) => Term::Arith(*op, Box::new(a.replace(r)), Box::new(b.replace(r))),
            Term::Ite(c, a, b) => Term::Ite(Box::new(c.replace(r)), Box::new(a.replace(r)), Box::new(b.replace(r))),
            Term::Sum(vs, g, b) => Term::Sum(vs.clone(), Box::new(g.replace(r)), Box::new(b.replace(r))),
            Term::Avg(vs, g, b) => Term::Avg(vs.clone(), Box::new(g.replace(r)), Box::new(b.replace(r))),
            Term::Uniq(v, g, b) => Term::Uniq(v.clone(), Box::new(g.replace(r)), Box::new(b.replace(r))),
            Term::Ifp(i) => Term::Ifp(Box::new(Ifp {
                func: i.func.clone(),
                params: i.params.clone(),
                body: i.body.replace(r),
                args: i.args.clone(),
            })),
        }
    }
}

// ---------------------------------------------------------------------------
// Structural queries

impl Formula {
    pub fn contains_ifp(&self) -> bool {
        match self {
            Formula::Bool(_) | Formula::VarEq(..) | Formula::Rel(..) => false,
            Formula::Leq(a, b) => a.contains_ifp() || b.contains_ifp(),
            Formula::Not(f) | Formula::Quant(_, _, f) => f.contains_ifp(),
            Formula::Bin(_, a, b) => a.contains_ifp() || b.contains_ifp(),
        }
    }

    /// Relation and function symbols occurring anywhere, with their arities.
    pub fn symbols(&self, out: &mut Vec<(String, bool, usize)>) {
        match self {
            Formula::Bool(_) | Formula::VarEq(..) => {}
            Formula::Rel(n, a) => out.push((n.clone(), true, a.len())),
            Formula::Leq(a, b) => {
                a.symbols(out);
                b.symbols(out);
            }
            Formula::Not(f) | Formula::Quant(_, _, f) => f.symbols(out),
            Formula::Bin(_, a, b) => {
                a.symbols(out);
                b.symbols(out);
            }
        }
    }
}

impl Term {
    pub fn contains_ifp(&self) -> bool {
        match self {
            Term::Const(_) | Term::App(..) => false,
            Term::Arith(_, a, b) => a.contains_ifp() || b.contains_ifp(),
            Term::Ite(c, a, b) => c.contains_ifp() || a.contains_ifp() || b.contains_ifp(),
            Term::Sum(_, g, b) | Term::Avg(_, g, b) | Term::Uniq(_, g, b) => g.contains_ifp() || b.contains_ifp(),
            Term::Ifp(_) => true,
        }
    }

    /// Symbol occurrences as `(name, is_relation, arity)`; ifp binders are
    /// reported as function occurrences too.
    pub fn symbols(&self, out: &mut Vec<(String, bool, usize)>) {
        match self {
            Term::Const(_) => {}
            Term::App(n, a) => out.push((n.clone(), false, a.len())),
            Term::Arith(_, a, b) => {
                a.symbols(out);
                b.symbols(out);
            }
            Term::Ite(c, a, b) => {
                c.symbols(out);
                a.symbols(out);
                b.symbols(out);
            }
            Term::Sum(_, g, b) | Term::Avg(_, g, b) | Term::Uniq(_, g, b) => {
                g.symbols(out);
                b.symbols(out);
            }
            Term::Ifp(i) => {
                out.push((i.func.clone(), false, i.params.len()));
                i.body.symbols(out);
            }
        }
    }

    /// Number of AST nodes, counting formulas inside the term.
    pub fn size(&self) -> usize {
        match self {
            Term::Const(_) | Term::App(..) => 1,
            Term::Arith(_, a, b) => 1 + a.size() + b.size(),
            Term::Ite(c, a, b) => 1 + c.size() + a.size() + b.size(),
            Term::Sum(_, g, b) | Term::Avg(_, g, b) | Term::Uniq(_, g, b) => 1 + g.size() + b.size(),
            Term::Ifp(i) => 1 + i.body.size(),
        }
    }
}

impl Formula {
    pub fn size(&self) -> usize {
        match self {
            Formula::Bool(_) | Formula::VarEq(..) | Formula::Rel(..) => 1,
            Formula::Leq(a, b) => 1 + a.size() + b.size(),
            Formula::Not(f) | Formula::Quant(_, _, f) => 1 + f.size(),
            Formula::Bin(_, a, b) => 1 + a.size() + b.size(),
        }
    }
}

// ---------------------------------------------------------------------------
// Pretty printing in the concrete syntax accepted by the parser.

fn join(vs: &[Var]) -> String {
    vs.join(",")
}

pub(crate) fn write_app(f: &mut fmt::Formatter<'_>, name: &str, args: &[Var]) -> fmt::Result {
    write!(f, "{name}({})", join(args))
}

struct FormulaAt<'a>(&'a Formula, u8);
struct TermAt<'a>(&'a Term, u8);

// Formula levels: 0/1 implication (quantifiers allowed bare), 2 or,
// 3 and, 4 unary, 5 atom.
impl fmt::Display for FormulaAt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let FormulaAt(phi, level) = *self;
        let paren = match phi {
            Formula::Bin(BoolOp::Implies, ..) | Formula::Quant(..) => level > 1,
            Formula::Bin(BoolOp::Or, ..) => level > 2,
            Formula::Bin(BoolOp::And, ..) => level > 3,
            Formula::Not(g) if !matches!(**g, Formula::VarEq(..)) => level > 4,
            _ => false,
        };
        if paren {
            write!(f, "(")?;
        }
        match phi {
            Formula::Bool(true) => write!(f, "true")?,
            Formula::Bool(false) => write!(f, "false")?,
            Formula::VarEq(x, y) => write!(f, "{x} = {y}")?,
            Formula::Rel(n, a) => write_app(f, n, a)?,
            Formula::Leq(a, b) => write!(f, "{} <= {}", TermAt(a, 1), TermAt(b, 1))?,
            Formula::Not(g) => match &**g {
                Formula::VarEq(x, y) => write!(f, "{x} != {y}")?,
                g => write!(f, "!{}", FormulaAt(g, 4))?,
            },
            Formula::Bin(BoolOp::Implies, a, b) => write!(f, "{} -> {}", FormulaAt(a, 2), FormulaAt(b, 1))?,
            Formula::Bin(BoolOp::Or, a, b) => write!(f, "{} | {}", FormulaAt(a, 2), FormulaAt(b, 3))?,
            Formula::Bin(BoolOp::And, a, b) => write!(f, "{} & {}", FormulaAt(a, 3), FormulaAt(b, 4))?,
            Formula::Quant(q, v, b) => {
                let kw = match q {
                    Quantifier::Exists => "exists",
                    Quantifier::Forall => "forall",
                };
                write!(f, "{kw} {v} {}", FormulaAt(b, 0))?
            }
        }
        if paren {
            write!(f, ")")?;
        }
        Ok(())
    }
}

// Term levels: 0 open (if/sum/avg/uniq may extend right), 1 additive,
// 2 multiplicative, 3 primary.
impl fmt::Display for TermAt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let TermAt(t, level) = *self;
        let paren = match t {
            Term::Arith(ArithOp::Add | ArithOp::Sub, ..) => level > 1,
            Term::Arith(ArithOp::Mul | ArithOp::Div, ..) => level > 2,
            Term::Ite(..) | Term::Sum(..) | Term::Avg(..) | Term::Uniq(..) => level > 0,
            _ => false,
        };
        if paren {
            write!(f, "(")?;
        }
        match t {
            Term::Const(w) => write!(f, "{w}")?,
            Term::App(n, a) => write_app(f, n, a)?,
            Term::Arith(op @ (ArithOp::Add | ArithOp::Sub), a, b) => {
                write!(f, "{} {} {}", TermAt(a, 1), op.symbol(), TermAt(b, 2))?
            }
            Term::Arith(op, a, b) => write!(f, "{} {} {}", TermAt(a, 2), op.symbol(), TermAt(b, 3))?,
            Term::Ite(c, a, b) => write!(f, "if {} then {} else {}", FormulaAt(c, 0), TermAt(a, 0), TermAt(b, 0))?,
            Term::Sum(vs, g, b) => write!(f, "sum ({}): ({}) {}", join(vs), FormulaAt(g, 0), TermAt(b, 0))?,
            Term::Avg(vs, g, b) => write!(f, "avg ({}): ({}) {}", join(vs), FormulaAt(g, 0), TermAt(b, 0))?,
            Term::Uniq(v, g, b) => write!(f, "uniq ({v}): ({}) {}", FormulaAt(g, 0), TermAt(b, 0))?,
            Term::Ifp(i) => write!(f, "ifp {}({}) <- {} at ({})", i.func, join(&i.params), TermAt(&i.body, 0), join(&i.args))?,
        }
        if paren {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        FormulaAt(self, 0).fmt(f)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        TermAt(self, 0).fmt(f)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Formula(phi) => phi.fmt(f),
            Expr::Term(t) => t.fmt(f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_vars_of_sum() {
        let t = Term::sum(&["x"], Formula::rel("E", &["y", "x"]), Term::app("F", &["x"]));
        assert_eq!(t.free_vars(), BTreeSet::from(["y".to_string()]));
    }

    #[test]
    fn free_vars_of_ifp() {
        let t = Term::ifp("F", &["x"], Term::app("G", &["x"]).add(Term::app("F", &["x"])), &["x2"]);
        assert_eq!(t.free_vars(), BTreeSet::from(["x2".to_string()]));
    }

    #[test]
    fn closed_sentence_has_no_free_vars() {
        let f = Formula::exists(&["x"], Formula::rel("R", &["x", "x"])).not();
        assert!(f.free_vars().is_empty());
    }

    #[test]
    fn renaming_avoids_capture() {
        // exists y E(x,y)  with x := y  must not become exists y E(y,y)
        let f = Formula::exists(&["y"], Formula::rel("E", &["x", "y"]));
        let mut fresh = Fresh::avoiding(["x".to_string(), "y".to_string()]);
        let g = f.rename_free(&renaming(&["x".into()], &["y".into()]), &mut fresh);
        assert_eq!(g.free_vars(), BTreeSet::from(["y".to_string()]));
        match g {
            Formula::Quant(_, v, body) => {
                assert_ne!(v, "y");
                assert_eq!(*body, Formula::Rel("E".into(), vec!["y".into(), v.clone()]));
            }
            _ => panic!("shape changed"),
        }
    }

    #[test]
    fn printing_parenthesizes_open_terms() {
        let s = Term::sum(&["x"], Formula::rel("R", &["x"]), Term::app("F", &["x"]));
        let t = s.clone().add(Term::int(1));
        assert_eq!(t.to_string(), "(sum (x): (R(x)) F(x)) + 1");
        let f = Formula::rel("A", &[]).and(Formula::exists(&["x"], Formula::rel("R", &["x"])));
        assert_eq!(f.to_string(), "A() & (exists x R(x))");
    }
}
