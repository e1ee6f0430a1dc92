//! Program transformations between the two fixpoint semantics, and the
//! collapse of a stratum into a single ifp-term.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::error::TransformError;
use crate::structure::{SymbolKind, Vocabulary};
use crate::syntax::{renaming, Expr, Formula, Fresh, Program, Replacer, Rule, Stratum, Term, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainPrecondition {
    None,
    AtLeastTwo,
}

impl fmt::Display for DomainPrecondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainPrecondition::None => "none",
            DomainPrecondition::AtLeastTwo => "at-least-2",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformResult<T> {
    pub output: T,
    /// Symbols whose interpretation agrees with the input's.
    pub preserved_symbols: BTreeSet<String>,
    pub precondition: DomainPrecondition,
}

pub const DEFAULT_ARITY_CAP: usize = 12;

fn taken_symbols(v: &Vocabulary) -> BTreeSet<String> {
    v.names().map(str::to_string).collect()
}

fn fresh_symbol(base: &str, taken: &mut BTreeSet<String>) -> String {
    if taken.insert(base.to_string()) {
        return base.to_string();
    }
    (1..).map(|i| format!("{base}{i}")).find(|c| taken.insert(c.clone())).expect("unbounded")
}

fn fresh_for(st: &Stratum) -> Fresh {
    let mut fresh = Fresh::new();
    for r in &st.rules {
        fresh.reserve_expr(&r.body);
        for v in &r.vars {
            fresh.reserve(v);
        }
    }
    fresh
}

fn refs(vs: &[Var]) -> Vec<&str> {
    vs.iter().map(String::as_str).collect()
}

/// The rule body with its head variables renamed to `to`.
fn body_at(r: &Rule, to: &[Var], fresh: &mut Fresh) -> Expr {
    let map = renaming(&r.vars, to);
    match &r.body {
        Expr::Formula(f) => Expr::Formula(f.rename_free(&map, fresh)),
        Expr::Term(t) => Expr::Term(t.rename_free(&map, fresh)),
    }
}

fn formula_of(e: Expr) -> Formula {
    match e {
        Expr::Formula(f) => f,
        Expr::Term(_) => unreachable!("relation rules have formula bodies"),
    }
}

fn term_of(e: Expr) -> Term {
    match e {
        Expr::Term(t) => t,
        Expr::Formula(_) => unreachable!("function rules have term bodies"),
    }
}

// ---------------------------------------------------------------------------
// Functional to loose

/// Each weight rule `F(x̄) ← θ` becomes `F(x̄) ← if F(x̄) = ⊥ then θ else F(x̄)`
/// and a relation `R_F(x̄) ← θ ≠ ⊥` tracks the defined entries, so the loose
/// run stops exactly when the functional run reaches its fixpoint.
pub fn functional_to_loose(st: &Stratum) -> TransformResult<Stratum> {
    let mut taken = taken_symbols(&st.vocabulary());
    let mut rules = Vec::new();
    let mut trackers = Vec::new();
    for r in &st.rules {
        match &r.body {
            Expr::Formula(_) => rules.push(r.clone()),
            Expr::Term(theta) => {
                let vars = refs(&r.vars);
                let current = Term::app(&r.head, &vars);
                let body = Term::ite(Formula::term_eq(current.clone(), Term::bot()), theta.clone(), current);
                rules.push(Rule::function(&r.head, &vars, body));
                let name = fresh_symbol(&format!("R_{}", r.head), &mut taken);
                trackers.push(Rule::relation(&name, &vars, Formula::term_neq(theta.clone(), Term::bot())));
            }
        }
    }
    rules.extend(trackers);
    let output = Stratum::new(st.extensional.clone(), rules).expect("well-formed by construction");
    TransformResult {
        output,
        preserved_symbols: taken_symbols(&st.intensional),
        precondition: DomainPrecondition::None,
    }
}

// ---------------------------------------------------------------------------
// Loose to functional

/// Replaces relation atoms and function applications by formulas and terms
/// over the rule's head variables.
struct Substitution<'a> {
    relations: &'a HashMap<String, (Vec<Var>, Formula)>,
    functions: &'a HashMap<String, (Vec<Var>, Term)>,
    fresh: &'a mut Fresh,
}

impl Replacer for Substitution<'_> {
    fn relation(&mut self, name: &str, args: &[Var]) -> Option<Formula> {
        let (vars, body) = self.relations.get(name)?;
        Some(body.rename_free(&renaming(vars, args), self.fresh))
    }

    fn function(&mut self, name: &str, args: &[Var]) -> Option<Term> {
        let (vars, body) = self.functions.get(name)?;
        Some(body.rename_free(&renaming(vars, args), self.fresh))
    }
}

/// Replaces `w(z̄)` by the average of `w'(p̄, z̄)` over timestamps `p̄`
/// selected by `stamp`.
struct StampedWeights<'a> {
    primed: &'a HashMap<String, String>,
    width: usize,
    stamp: &'a dyn Fn(&[Var]) -> Formula,
    fresh: &'a mut Fresh,
}

impl Replacer for StampedWeights<'_> {
    fn function(&mut self, name: &str, args: &[Var]) -> Option<Term> {
        let primed = self.primed.get(name)?;
        let p = self.fresh.vars("p", self.width);
        let mut all = p.clone();
        all.extend(args.iter().cloned());
        Some(Term::avg_vars(p.clone(), (self.stamp)(&p), Term::app_vars(primed, all)))
    }
}

struct Timestamps {
    relations: Vec<(String, usize)>,
}

impl Timestamps {
    /// A timestamp is one block per intensional relation: a prefix pair,
    /// equal for "no tuple", distinct for the tuple that follows.
    fn phi_all(&self, x: &[Var]) -> Formula {
        let mut parts = Vec::new();
        let mut off = 0;
        for (name, arity) in &self.relations {
            let (a, b) = (&x[off], &x[off + 1]);
            let tuple = x[off + 2..off + 2 + arity].to_vec();
            parts.push(Formula::var_eq(a, b).or(Formula::var_neq(a, b).and(Formula::rel_vars(name, tuple))));
            off += arity + 2;
        }
        Formula::all(parts)
    }
}

/// Unrolled stages of the loose run: formulas and terms over extensional
/// symbols only, exact on structures where the loose termination index is
/// at most the number of intensional relations.
fn small_domain(st: &Stratum, fresh: &mut Fresh) -> (HashMap<String, Formula>, HashMap<String, Term>) {
    let bound = st.intensional.relations().count();
    let mut rel_stage: Vec<HashMap<String, (Vec<Var>, Formula)>> = Vec::new();
    let mut fun_stage: Vec<HashMap<String, (Vec<Var>, Term)>> = Vec::new();
    rel_stage.push(st.rules.iter().filter(|r| r.kind() == SymbolKind::Relation).map(|r| (r.head.clone(), (r.vars.clone(), Formula::ff()))).collect());
    fun_stage.push(st.rules.iter().filter(|r| r.kind() == SymbolKind::Function).map(|r| (r.head.clone(), (r.vars.clone(), Term::bot()))).collect());
    for k in 1..=bound + 1 {
        let mut rels = HashMap::new();
        let mut funs = HashMap::new();
        for r in &st.rules {
            let mut sub = Substitution { relations: &rel_stage[k - 1], functions: &fun_stage[k - 1], fresh };
            match &r.body {
                Expr::Formula(f) => {
                    rels.insert(r.head.clone(), (r.vars.clone(), f.replace(&mut sub)));
                }
                Expr::Term(t) => {
                    funs.insert(r.head.clone(), (r.vars.clone(), t.replace(&mut sub)));
                }
            }
        }
        rel_stage.push(rels);
        fun_stage.push(funs);
    }
    // stable(k): no relation gains a tuple from stage k to stage k + 1.
    let stable: Vec<Formula> = (0..=bound)
        .map(|k| {
            Formula::all(st.rules.iter().filter(|r| r.kind() == SymbolKind::Relation).map(|r| {
                let (vars, next) = &rel_stage[k + 1][&r.head];
                let (_, cur) = &rel_stage[k][&r.head];
                Formula::exists_vars(vars.clone(), next.clone().and(cur.clone().not())).not()
            }))
        })
        .collect();
    // index(k): k is the loose termination index.
    let index: Vec<Formula> =
        (0..=bound).map(|k| Formula::all(stable[..k].iter().map(|s| s.clone().not()).chain([stable[k].clone()]))).collect();
    let mut rels = HashMap::new();
    let mut funs = HashMap::new();
    for r in &st.rules {
        match r.kind() {
            SymbolKind::Relation => {
                let f = Formula::any((0..=bound).map(|k| index[k].clone().and(rel_stage[k][&r.head].1.clone())));
                rels.insert(r.head.clone(), f);
            }
            SymbolKind::Function => {
                let mut t = Term::bot();
                for k in (0..=bound).rev() {
                    t = Term::ite(index[k].clone(), fun_stage[k][&r.head].1.clone(), t);
                }
                funs.insert(r.head.clone(), t);
            }
        }
    }
    (rels, funs)
}

/// Timestamped simulation of the loose run by a functional run, combined
/// with an unrolled evaluation for universes of at most one element.
///
/// One functional round simulates one loose round. `R_all` accumulates the
/// timestamps of every relation state seen so far and `R_all_old`,
/// `R_all_oo` lag one and two rounds behind, so `R_all ∧ ¬R_all_old` holds
/// exactly the timestamps of the previous state. `w'(p̄, ȳ)` stores the
/// weights computed in the round where `p̄` was new.
pub fn loose_to_functional(st: &Stratum, arity_cap: usize) -> Result<TransformResult<Stratum>, TransformError> {
    let relations: Vec<(String, usize)> =
        st.rules.iter().filter(|r| r.kind() == SymbolKind::Relation).map(|r| (r.head.clone(), r.arity())).collect();
    let functions: Vec<&Rule> = st.rules.iter().filter(|r| r.kind() == SymbolKind::Function).collect();
    let width: usize = relations.iter().map(|(_, a)| a + 2).sum();
    let arity = width + functions.iter().map(|r| r.arity()).max().unwrap_or(0);
    if arity > arity_cap {
        tracing::warn!(arity, cap = arity_cap, "timestamped arity exceeds the cap");
        return Err(TransformError::ArityCapExceeded { arity, cap: arity_cap });
    }
    tracing::info!(arity, "timestamped arity");
    let ts = Timestamps { relations };
    let mut taken = taken_symbols(&st.vocabulary());
    let mut fresh = fresh_for(st);
    let r_all = fresh_symbol("R_all", &mut taken);
    let r_old = fresh_symbol("R_all_old", &mut taken);
    let r_oo = fresh_symbol("R_all_oo", &mut taken);
    let primed: HashMap<String, String> =
        functions.iter().map(|r| (r.head.clone(), fresh_symbol(&format!("{}'", r.head), &mut taken))).collect();

    let new = |x: &[Var]| ts.phi_all(x).and(Formula::rel_vars(&r_all, x.to_vec()).not());
    let old_new = |x: &[Var]| Formula::rel_vars(&r_all, x.to_vec()).and(Formula::rel_vars(&r_old, x.to_vec()).not());
    let old_old_new = |x: &[Var]| Formula::rel_vars(&r_old, x.to_vec()).and(Formula::rel_vars(&r_oo, x.to_vec()).not());

    let p = fresh.vars("p", width);
    let stop = Formula::exists_vars(p.clone(), new(&p)).not();
    let p = fresh.vars("p", width);
    let just_stopped = stop.clone().and(Formula::exists_vars(p.clone(), old_new(&p)));
    let y = fresh.vars("y", 2);
    let big = Formula::exists_vars(y.clone(), Formula::var_neq(&y[0], &y[1]));

    let (small_rels, small_funs) = small_domain(st, &mut fresh);

    let x = fresh.vars("x", width);
    let xs = refs(&x);
    let mut rules = vec![
        Rule::relation(&r_all, &xs, ts.phi_all(&x)),
        Rule::relation(&r_old, &xs, Formula::rel_vars(&r_all, x.clone())),
        Rule::relation(&r_oo, &xs, Formula::rel_vars(&r_old, x.clone())),
    ];
    for r in &st.rules {
        let vars = refs(&r.vars);
        let mut stamped = StampedWeights { primed: &primed, width, stamp: &old_new, fresh: &mut fresh };
        match &r.body {
            Expr::Formula(phi) => {
                let step = big.clone().and(stop.clone().not()).and(phi.replace(&mut stamped));
                let small = big.clone().not().and(small_rels[&r.head].clone());
                rules.push(Rule::relation(&r.head, &vars, step.or(small)));
            }
            Expr::Term(theta) => {
                let theta = theta.replace(&mut stamped);
                let mut head: Vec<&str> = xs.clone();
                head.extend(vars.iter().copied());
                rules.push(Rule::function(&primed[&r.head], &head, Term::ite(new(&x), theta, Term::bot())));
                let p = fresh.vars("p", width);
                let mut at = p.clone();
                at.extend(r.vars.iter().cloned());
                let last = Term::avg_vars(p.clone(), old_old_new(&p), Term::app_vars(&primed[&r.head], at));
                let big_value = Term::ite(just_stopped.clone(), last, Term::bot());
                rules.push(Rule::function(&r.head, &vars, Term::ite(big.clone(), big_value, small_funs[&r.head].clone())));
            }
        }
    }
    let output = Stratum::new(st.extensional.clone(), rules).expect("well-formed by construction");
    Ok(TransformResult {
        output,
        preserved_symbols: taken_symbols(&st.intensional),
        precondition: DomainPrecondition::None,
    })
}

// ---------------------------------------------------------------------------
// Simultaneous induction

/// `χ_i(z̄)`: position `i` differs from position `i'` and every other
/// position equals `i'`, where `i' = 1` unless `i = 1`, then `i' = 2`.
/// Indices are 1-based.
pub fn chi(i: usize, z: &[Var]) -> Formula {
    let ip = if i != 1 { 1 } else { 2 };
    let zi = &z[i - 1];
    let zp = &z[ip - 1];
    let mut parts = vec![Formula::var_neq(zi, zp)];
    for (j, zj) in z.iter().enumerate() {
        if j + 1 != i && j + 1 != ip {
            parts.push(Formula::var_eq(zj, zp));
        }
    }
    Formula::all(parts)
}

/// Replaces the stratum's symbols by reads of the unified function.
struct Unified<'a> {
    func: &'a str,
    rel_index: &'a HashMap<String, usize>,
    fun_index: &'a HashMap<String, usize>,
    r: usize,
    width: usize,
    fresh: &'a mut Fresh,
}

impl Unified<'_> {
    fn padded(&mut self, args: &[Var]) -> (Vec<Var>, Vec<Var>, Vec<Var>) {
        let extra = self.fresh.vars("x", self.r - args.len());
        let z = self.fresh.vars("z", self.width);
        let mut all = args.to_vec();
        all.extend(extra.iter().cloned());
        all.extend(z.iter().cloned());
        (extra, z, all)
    }
}

impl Replacer for Unified<'_> {
    fn relation(&mut self, name: &str, args: &[Var]) -> Option<Formula> {
        let i = *self.rel_index.get(name)?;
        let (extra, z, all) = self.padded(args);
        let mut bound = extra;
        bound.extend(z.iter().cloned());
        let body = chi(i, &z).and(Formula::term_eq(Term::app_vars(self.func, all), Term::int(1)));
        Some(Formula::exists_vars(bound, body))
    }

    fn function(&mut self, name: &str, args: &[Var]) -> Option<Term> {
        let i = *self.fun_index.get(name)?;
        let (extra, z, all) = self.padded(args);
        let mut bound = extra;
        bound.extend(z.iter().cloned());
        Some(Term::avg_vars(bound, chi(i, &z), Term::app_vars(self.func, all)))
    }
}

/// The answer of a stratum as one closed-form expression with a single ifp
/// subterm. Free variables of the output are `free_vars`, in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InductionOutput {
    pub expr: Expr,
    pub free_vars: Vec<Var>,
}

/// Collapses the stratum into `∃ȳ(χ_i(z̄) ∧ ifp(...) = 1)` for a relation
/// answer or `avg_{ȳ: χ_{k+j}(z̄)} ifp(...)` for a weight answer. Correct on
/// universes of at least two elements.
pub fn simultaneous_induction(st: &Stratum, answer: &str) -> Result<TransformResult<InductionOutput>, TransformError> {
    if st.rules.is_empty() {
        return Err(TransformError::PreconditionUnsatisfiable("the stratum defines no symbols".into()));
    }
    if !st.intensional.contains(answer) {
        return Err(TransformError::UnknownAnswer(answer.to_string()));
    }
    let mut taken = taken_symbols(&st.vocabulary());
    let mut rel_rules: Vec<Rule> = st.rules.iter().filter(|r| r.kind() == SymbolKind::Relation).cloned().collect();
    let mut fun_rules: Vec<Rule> = st.rules.iter().filter(|r| r.kind() == SymbolKind::Function).cloned().collect();
    // Three index positions are needed: with two, χ_1 and χ_2 coincide.
    let mut dummy_r = rel_rules.is_empty();
    let mut dummy_f = fun_rules.is_empty();
    if !dummy_r && !dummy_f && rel_rules.len() + fun_rules.len() < 3 {
        dummy_r = true;
    }
    if dummy_r && !dummy_f && rel_rules.len() + fun_rules.len() + 1 < 3 {
        dummy_f = true;
    }
    if dummy_f && !dummy_r && rel_rules.len() + fun_rules.len() + 1 < 3 {
        dummy_r = true;
    }
    if dummy_r {
        let name = fresh_symbol("__dummyR", &mut taken);
        rel_rules.push(Rule::relation(&name, &["x"], Formula::ff()));
    }
    if dummy_f {
        let name = fresh_symbol("__dummyF", &mut taken);
        fun_rules.push(Rule::function(&name, &["x"], Term::bot()));
    }
    debug_assert!(rel_rules.len() + fun_rules.len() >= 3);
    let k = rel_rules.len();
    let l = fun_rules.len();
    let width = k + l;
    let r = rel_rules.iter().chain(&fun_rules).map(Rule::arity).max().unwrap_or(0);
    let func = fresh_symbol("G", &mut taken);
    let mut fresh = Fresh::new();
    for rule in rel_rules.iter().chain(&fun_rules) {
        fresh.reserve_expr(&rule.body);
        for v in &rule.vars {
            fresh.reserve(v);
        }
    }
    let x = fresh.vars("x", r);
    let z = fresh.vars("z", width);
    let rel_index: HashMap<String, usize> = rel_rules.iter().enumerate().map(|(i, ru)| (ru.head.clone(), i + 1)).collect();
    let fun_index: HashMap<String, usize> =
        fun_rules.iter().enumerate().map(|(j, ru)| (ru.head.clone(), k + j + 1)).collect();

    let mut theta = Term::bot();
    for (j, rule) in fun_rules.iter().enumerate().rev() {
        let body = term_of(body_at(rule, &x[..rule.arity()], &mut fresh));
        let mut u = Unified { func: &func, rel_index: &rel_index, fun_index: &fun_index, r, width, fresh: &mut fresh };
        let eta = body.replace(&mut u);
        theta = Term::ite(chi(k + j + 1, &z), eta, theta);
    }
    for (i, rule) in rel_rules.iter().enumerate().rev() {
        let body = formula_of(body_at(rule, &x[..rule.arity()], &mut fresh));
        let mut u = Unified { func: &func, rel_index: &rel_index, fun_index: &fun_index, r, width, fresh: &mut fresh };
        let psi = body.replace(&mut u);
        theta = Term::ite(chi(i + 1, &z).and(psi), Term::int(1), theta);
    }
    let mut params = x.clone();
    params.extend(z.iter().cloned());
    let zeta = Term::ifp_vars(&func, params.clone(), theta, params);

    let info = st.intensional.get(answer).expect("checked above");
    let free_vars = x[..info.arity].to_vec();
    let mut bound = x[info.arity..].to_vec();
    bound.extend(z.iter().cloned());
    let expr = match info.kind {
        SymbolKind::Relation => {
            let i = rel_index[answer];
            // At relation indices G is 1 or ⊥, so `1 <= ζ` is `ζ = 1` with a
            // single copy of the ifp term.
            Expr::Formula(Formula::exists_vars(bound, chi(i, &z).and(Formula::leq(Term::int(1), zeta))))
        }
        SymbolKind::Function => Expr::Term(Term::avg_vars(bound, chi(fun_index[answer], &z), zeta)),
    };
    Ok(TransformResult {
        output: InductionOutput { expr, free_vars },
        preserved_symbols: BTreeSet::from([answer.to_string()]),
        precondition: DomainPrecondition::AtLeastTwo,
    })
}

// ---------------------------------------------------------------------------
// Program level

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformKind {
    FunctionalToLoose,
    LooseToFunctional,
    SimultaneousInduction,
}

impl std::str::FromStr for TransformKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "func2loose" => Ok(TransformKind::FunctionalToLoose),
            "loose2func" => Ok(TransformKind::LooseToFunctional),
            "simind" => Ok(TransformKind::SimultaneousInduction),
            other => Err(format!("unknown transformation `{other}`")),
        }
    }
}

/// Applies a semantics translation to every stratum; auxiliary symbols are
/// fresh for the whole program.
pub fn translate_program(
    p: &Program,
    kind: TransformKind,
    arity_cap: usize,
) -> Result<TransformResult<Program>, TransformError> {
    let mut strata = Vec::new();
    let mut preserved = BTreeSet::new();
    let mut ext = p.input.clone();
    for st in &p.strata {
        // Earlier auxiliary symbols are extensional here, so fresh names
        // avoid them.
        let st = Stratum { extensional: ext.clone(), ..st.clone() };
        let res = match kind {
            TransformKind::FunctionalToLoose => functional_to_loose(&st),
            TransformKind::LooseToFunctional => loose_to_functional(&st, arity_cap)?,
            TransformKind::SimultaneousInduction => {
                return Err(TransformError::PreconditionUnsatisfiable("simultaneous induction applies to one stratum".into()))
            }
        };
        ext = ext.union(&res.output.intensional).expect("fresh auxiliary symbols");
        preserved.extend(res.preserved_symbols);
        strata.push(res.output.rules);
    }
    let output = Program::new(p.input.clone(), strata, Some(&p.answer)).expect("well-formed by construction");
    Ok(TransformResult { output, preserved_symbols: preserved, precondition: DomainPrecondition::None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{run_stratum, Mode};
    use crate::structure::{Elem, WeightedStructure};
    use crate::syntax::{builtins, parse_program};
    use crate::weight::Weight;

    fn stratum(text: &str, ext: &Vocabulary) -> Stratum {
        parse_program(text, ext).unwrap().strata.remove(0)
    }

    fn graph(n: usize, edges: &[(Elem, Elem)], sources: &[Elem]) -> WeightedStructure {
        let mut s = WeightedStructure::from_elements((0..n).map(|i| format!("g{i}"))).unwrap();
        s.add_relation("E", 2).unwrap();
        s.add_relation("S", 1).unwrap();
        for (a, b) in edges {
            s.insert("E", &[*a, *b]).unwrap();
        }
        for a in sources {
            s.insert("S", &[*a]).unwrap();
        }
        s
    }

    fn agree(a: &WeightedStructure, b: &WeightedStructure, syms: &BTreeSet<String>) {
        assert_eq!(a.restrict(&restricted(a, syms)).to_json(), b.restrict(&restricted(b, syms)).to_json());
    }

    fn restricted(s: &WeightedStructure, syms: &BTreeSet<String>) -> Vocabulary {
        let mut v = Vocabulary::new();
        for name in syms {
            let info = s.vocabulary().get(name).unwrap();
            v.insert(name, info.kind, info.arity).unwrap();
        }
        v
    }

    #[test]
    fn chi_encodes_distinct_indices() {
        let z: Vec<Var> = vec!["a".into(), "b".into(), "c".into()];
        assert_eq!(chi(1, &z).to_string(), "a != b & c = b");
        assert_eq!(chi(2, &z).to_string(), "b != a & c = a");
        assert_eq!(chi(3, &z).to_string(), "c != a & b = a");
    }

    #[test]
    fn func_to_loose_constant_rule() {
        let st = stratum("fun F/1; F(x) <- 1;", &Vocabulary::new());
        let out = functional_to_loose(&st).output;
        assert!(out.intensional.contains("R_F"));
        let s = WeightedStructure::from_elements(["a", "b"]).unwrap();
        let (res, _) = run_stratum(&out, &s, Mode::Loose).unwrap();
        assert_eq!(res.weight("F", &[0]), Weight::int(1));
        assert_eq!(res.weight("F", &[1]), Weight::int(1));
    }

    #[test]
    fn func_to_loose_keeps_relational_strata() {
        let st = stratum(
            "rel E/2; rel S/1; rel Reach/1; Reach(x) <- S(x) | exists y (Reach(y) & E(y,x));",
            &Vocabulary::new(),
        );
        assert_eq!(functional_to_loose(&st).output.rules, st.rules);
    }

    #[test]
    fn loose_to_func_counterexample_and_fw() {
        // Loose index 0: the relation stays empty although later weights
        // would make it grow.
        let st = stratum("fun w/0; rel R/1; w() <- 1; R(x) <- w() = 1;", &Vocabulary::new());
        let out = loose_to_functional(&st, DEFAULT_ARITY_CAP).unwrap();
        for n in 0..4 {
            let s = WeightedStructure::from_elements((0..n).map(|i| format!("e{i}"))).unwrap();
            let (want, _) = run_stratum(&st, &s, Mode::Loose).unwrap();
            let (got, _) = run_stratum(&out.output, &s, Mode::Functional).unwrap();
            agree(&want, &got, &out.preserved_symbols);
            assert_eq!(got.weight("w", &[]), Weight::Bot);
        }
        let fw = builtins::floyd_warshall();
        let out = loose_to_functional(&fw.strata[0], DEFAULT_ARITY_CAP).unwrap();
        let mut s = WeightedStructure::from_elements(["a", "b", "c"]).unwrap();
        s.add_relation("ord", 2).unwrap();
        s.add_function("W", 2).unwrap();
        let w = [[0, 7, 1], [2, 0, 9], [8, 1, 0]];
        for i in 0..3u32 {
            for j in 0..3u32 {
                if i < j {
                    s.insert("ord", &[i, j]).unwrap();
                }
                s.set_weight("W", &[i, j], Weight::int(w[i as usize][j as usize])).unwrap();
            }
        }
        let (want, _) = run_stratum(&fw.strata[0], &s, Mode::Loose).unwrap();
        let (got, _) = run_stratum(&out.output, &s, Mode::Functional).unwrap();
        agree(&want, &got, &out.preserved_symbols);
        assert_eq!(got.weight("D", &[0, 1]), Weight::int(2));
    }

    #[test]
    fn arity_cap_is_enforced() {
        let st = stratum("rel A/3; rel B/3; fun F/3; A(x,y,z) <- true; B(x,y,z) <- true; F(x,y,z) <- 1;", &Vocabulary::new());
        let err = loose_to_functional(&st, DEFAULT_ARITY_CAP).unwrap_err();
        assert_eq!(err, TransformError::ArityCapExceeded { arity: 13, cap: 12 });
        assert!(loose_to_functional(&st, 13).is_ok());
    }

    #[test]
    fn simind_reachability() {
        let ext = Vocabulary::new().rel("E", 2).rel("S", 1);
        let st = stratum("rel Reach/1; fun Fd/1; Reach(x) <- S(x) | exists y (Reach(y) & E(y,x)); Fd(x) <- bot;", &ext);
        let res = simultaneous_induction(&st, "Reach").unwrap();
        assert_eq!(res.precondition, DomainPrecondition::AtLeastTwo);
        let s = graph(4, &[(0, 1), (1, 2), (3, 3)], &[0]);
        let (want, _) = run_stratum(&st, &s, Mode::Functional).unwrap();
        let mut ev = crate::eval::ExprEvaluator::new(&res.output.expr, &s, &res.output.free_vars).unwrap();
        for a in 0..4 {
            assert_eq!(ev.eval(&[a]), crate::eval::EvalResult::Bool(want.contains("Reach", &[a])), "element {a}");
        }
    }
}
