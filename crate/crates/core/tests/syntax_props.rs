mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::{random_expression, random_ext, rng};
use wsumq_core::analysis::{check_scalar_expression, check_scalar_program, ViolationReason};
use wsumq_core::syntax::builtins::{self, fnn_vocabulary};
use wsumq_core::syntax::{
    parse_expression, parse_program, symbol_partition, ArithOp, Expr, Formula, Quantifier, Term, Var,
};
use wsumq_core::{Vocabulary, Weight};

fn vocab() -> Vocabulary {
    random_ext()
}

// Free variables, written independently of the library's traversal.
fn fv_f(f: &Formula) -> BTreeSet<Var> {
    match f {
        Formula::Bool(_) => BTreeSet::new(),
        Formula::VarEq(x, y) => [x.clone(), y.clone()].into(),
        Formula::Rel(_, xs) => xs.iter().cloned().collect(),
        Formula::Leq(a, b) => &fv_t(a) | &fv_t(b),
        Formula::Not(g) => fv_f(g),
        Formula::Bin(_, a, b) => &fv_f(a) | &fv_f(b),
        Formula::Quant(_, x, g) => {
            let mut s = fv_f(g);
            s.remove(x);
            s
        }
    }
}

fn fv_t(t: &Term) -> BTreeSet<Var> {
    let minus = |s: BTreeSet<Var>, vs: &[Var]| s.into_iter().filter(|v| !vs.contains(v)).collect::<BTreeSet<_>>();
    match t {
        Term::Const(_) => BTreeSet::new(),
        Term::App(_, xs) => xs.iter().cloned().collect(),
        Term::Arith(_, a, b) => &fv_t(a) | &fv_t(b),
        Term::Ite(c, a, b) => &(&fv_f(c) | &fv_t(a)) | &fv_t(b),
        Term::Sum(vs, g, b) | Term::Avg(vs, g, b) => minus(&fv_f(g) | &fv_t(b), vs),
        Term::Uniq(v, g, b) => minus(&fv_f(g) | &fv_t(b), std::slice::from_ref(v)),
        Term::Ifp(i) => &minus(fv_t(&i.body), &i.params) | &i.args.iter().cloned().collect(),
    }
}

fn fv(e: &Expr) -> BTreeSet<Var> {
    match e {
        Expr::Formula(f) => fv_f(f),
        Expr::Term(t) => fv_t(t),
    }
}

/// Function symbols with an occurrence not bound by an ifp inside `t`.
fn ext_t(t: &Term) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    walk_t(t, &mut |s: &Term, bound: &[String]| {
        if let Term::App(n, _) = s {
            if !bound.contains(n) {
                out.insert(n.clone());
            }
        }
    }, &mut Vec::new());
    out
}

fn walk_t(t: &Term, visit: &mut dyn FnMut(&Term, &[String]), bound: &mut Vec<String>) {
    visit(t, bound);
    match t {
        Term::Const(_) | Term::App(..) => {}
        Term::Arith(_, a, b) => {
            walk_t(a, visit, bound);
            walk_t(b, visit, bound);
        }
        Term::Ite(c, a, b) => {
            walk_f(c, visit, bound);
            walk_t(a, visit, bound);
            walk_t(b, visit, bound);
        }
        Term::Sum(_, g, b) | Term::Avg(_, g, b) | Term::Uniq(_, g, b) => {
            walk_f(g, visit, bound);
            walk_t(b, visit, bound);
        }
        Term::Ifp(i) => {
            bound.push(i.func.clone());
            walk_t(&i.body, visit, bound);
            bound.pop();
        }
    }
}

fn walk_f(f: &Formula, visit: &mut dyn FnMut(&Term, &[String]), bound: &mut Vec<String>) {
    match f {
        Formula::Bool(_) | Formula::VarEq(..) | Formula::Rel(..) => {}
        Formula::Leq(a, b) => {
            walk_t(a, visit, bound);
            walk_t(b, visit, bound);
        }
        Formula::Not(g) | Formula::Quant(_, _, g) => walk_f(g, visit, bound),
        Formula::Bin(_, a, b) => {
            walk_f(a, visit, bound);
            walk_f(b, visit, bound);
        }
    }
}

fn ints(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut visit = |t: &Term, _: &[String]| {
        if let Term::Ifp(i) = t {
            out.insert(i.func.clone());
        }
    };
    match e {
        Expr::Formula(f) => walk_f(f, &mut visit, &mut Vec::new()),
        Expr::Term(t) => walk_t(t, &mut visit, &mut Vec::new()),
    }
    out
}

fn disjoint(a: &BTreeSet<String>, f: &BTreeSet<String>) -> bool {
    a.is_disjoint(f)
}

/// The inductive F-scalar predicate, read literally.
fn fscalar_t(t: &Term, f: &BTreeSet<String>) -> bool {
    match t {
        Term::Const(_) | Term::App(..) => true,
        Term::Arith(ArithOp::Add | ArithOp::Sub, a, b) => fscalar_t(a, f) && fscalar_t(b, f),
        Term::Arith(ArithOp::Mul, a, b) => {
            (fscalar_t(a, f) && disjoint(&ext_t(b), f)) || (fscalar_t(b, f) && disjoint(&ext_t(a), f))
        }
        Term::Arith(ArithOp::Div, a, b) => fscalar_t(a, f) && disjoint(&ext_t(b), f),
        Term::Ite(c, a, b) => fscalar_f(c, f) && fscalar_t(a, f) && fscalar_t(b, f),
        Term::Sum(_, g, b) | Term::Avg(_, g, b) | Term::Uniq(_, g, b) => fscalar_f(g, f) && fscalar_t(b, f),
        Term::Ifp(i) => {
            let mut smaller = f.clone();
            smaller.remove(&i.func);
            fscalar_t(&i.body, &smaller)
        }
    }
}

fn fscalar_f(g: &Formula, f: &BTreeSet<String>) -> bool {
    match g {
        Formula::Bool(_) | Formula::VarEq(..) | Formula::Rel(..) => true,
        Formula::Leq(a, b) => fscalar_t(a, f) && fscalar_t(b, f),
        Formula::Not(h) | Formula::Quant(_, _, h) => fscalar_f(h, f),
        Formula::Bin(_, a, b) => fscalar_f(a, f) && fscalar_f(b, f),
    }
}

/// Scalar iff every subterm is `ints(e)`-scalar. Formulas are covered
/// through the terms they contain.
fn oracle_scalar(e: &Expr) -> bool {
    let f = ints(e);
    let mut ok = true;
    let mut visit = |t: &Term, _: &[String]| ok &= fscalar_t(t, &f);
    match e {
        Expr::Formula(g) => walk_f(g, &mut visit, &mut Vec::new()),
        Expr::Term(t) => walk_t(t, &mut visit, &mut Vec::new()),
    }
    ok
}

/// Replaces every occurrence of an ifp-bound symbol by the constant 1.
fn erase_t(t: &Term, ints: &BTreeSet<String>) -> Term {
    let b = |t: &Term| Box::new(erase_t(t, ints));
    match t {
        Term::App(n, _) if ints.contains(n) => Term::int(1),
        Term::Const(_) | Term::App(..) => t.clone(),
        Term::Arith(op, x, y) => Term::Arith(*op, b(x), b(y)),
        Term::Ite(c, x, y) => Term::Ite(Box::new(erase_f(c, ints)), b(x), b(y)),
        Term::Sum(vs, g, x) => Term::Sum(vs.clone(), Box::new(erase_f(g, ints)), b(x)),
        Term::Avg(vs, g, x) => Term::Avg(vs.clone(), Box::new(erase_f(g, ints)), b(x)),
        Term::Uniq(v, g, x) => Term::Uniq(v.clone(), Box::new(erase_f(g, ints)), b(x)),
        Term::Ifp(i) => {
            let mut i = (**i).clone();
            i.body = erase_t(&i.body, ints);
            Term::Ifp(Box::new(i))
        }
    }
}

fn erase_f(f: &Formula, ints: &BTreeSet<String>) -> Formula {
    match f {
        Formula::Bool(_) | Formula::VarEq(..) | Formula::Rel(..) => f.clone(),
        Formula::Leq(a, b) => Formula::Leq(Box::new(erase_t(a, ints)), Box::new(erase_t(b, ints))),
        Formula::Not(g) => Formula::Not(Box::new(erase_f(g, ints))),
        Formula::Bin(op, a, b) => Formula::Bin(*op, Box::new(erase_f(a, ints)), Box::new(erase_f(b, ints))),
        Formula::Quant(q, v, g) => Formula::Quant(*q, v.clone(), Box::new(erase_f(g, ints))),
    }
}

fn erase(e: &Expr) -> Expr {
    let i = ints(e);
    match e {
        Expr::Formula(f) => Expr::Formula(erase_f(f, &i)),
        Expr::Term(t) => Expr::Term(erase_t(t, &i)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn print_parse_roundtrip(seed in any::<u64>(), depth in 1usize..5) {
        let e = random_expression(&mut rng(seed), depth);
        let text = e.to_string();
        let back = parse_expression(&text, &vocab());
        prop_assert!(back.is_ok(), "{text}: {:?}", back.err());
        prop_assert_eq!(back.unwrap(), e, "{}", text);
    }

    #[test]
    fn free_vars_match_oracle(seed in any::<u64>(), depth in 1usize..5) {
        let e = random_expression(&mut rng(seed), depth);
        prop_assert_eq!(e.free_vars(), fv(&e));
    }

    #[test]
    fn generated_expressions_partition_cleanly(seed in any::<u64>(), depth in 1usize..5) {
        let e = random_expression(&mut rng(seed), depth);
        let p = symbol_partition(&e).unwrap();
        prop_assert_eq!(p.intensional, ints(&e));
    }

    #[test]
    fn scalar_checker_matches_inductive_definition(seed in any::<u64>(), depth in 1usize..5) {
        let e = random_expression(&mut rng(seed), depth);
        let report = check_scalar_expression(&e);
        prop_assert_eq!(report.is_scalar(), oracle_scalar(&e), "{}", e);
        prop_assert_eq!(report.is_scalar(), report.violations.is_empty());
    }

    #[test]
    fn erasing_intensional_symbols_gives_scalar(seed in any::<u64>(), depth in 1usize..5) {
        let e = random_expression(&mut rng(seed), depth);
        prop_assert!(check_scalar_expression(&erase(&e)).is_scalar());
    }

    #[test]
    fn scalar_expressions_have_scalar_subterms(seed in any::<u64>(), depth in 1usize..5) {
        let e = random_expression(&mut rng(seed), depth);
        if check_scalar_expression(&e).is_scalar() {
            let f = ints(&e);
            let mut all = true;
            let mut visit = |t: &Term, _: &[String]| all &= fscalar_t(t, &f);
            match &e {
                Expr::Formula(g) => walk_f(g, &mut visit, &mut Vec::new()),
                Expr::Term(t) => walk_t(t, &mut visit, &mut Vec::new()),
            }
            prop_assert!(all);
        }
    }
}

#[test]
fn recursive_eval_program_shape() {
    let p = parse_program(builtins::EVAL_RECURSIVE, &Vocabulary::new()).unwrap();
    assert_eq!(p.strata.len(), 1);
    assert_eq!(p.strata[0].intensional.iter().map(|(n, i)| (n.to_string(), i.arity)).collect::<Vec<_>>(), [("eval".into(), 1)]);
    assert_eq!(p.input, fnn_vocabulary());
}

#[test]
fn acyclicity_has_two_strata() {
    let p = parse_program(builtins::ACYCLICITY, &Vocabulary::new()).unwrap();
    assert_eq!(p.strata.len(), 2);
    assert_eq!(p.answer, "Ans");
}

#[test]
fn escaping_body_variable_is_rejected() {
    let err = parse_program("rel E/2; R(x) <- E(x,y);", &Vocabulary::new()).unwrap_err();
    assert!(err.to_string().contains("does not occur in the head"), "{err}");
}

#[test]
fn expression_examples() {
    let sq = Expr::Term(builtins::squaring());
    let p = symbol_partition(&sq).unwrap();
    assert_eq!(p.intensional, BTreeSet::from(["F".to_string()]));
    assert_eq!(p.extensional, BTreeSet::from(["E".to_string()]));

    let e = parse_expression("1/2 + bot", &Vocabulary::new()).unwrap();
    assert_eq!(e, Expr::Term(Term::Const(Weight::ratio(1, 2)).add(Term::bot())));

    let v = Vocabulary::new().rel("R", 1).fun("F", 2);
    assert!(parse_expression("sum (x): R(x) F(x,x,x)", &v).is_err());

    let ev = Vocabulary::new().rel("E", 2).fun("F", 1);
    let t = parse_expression("sum (x): E(y,x) F(x)", &ev).unwrap();
    assert_eq!(t.free_vars(), BTreeSet::from(["y".to_string()]));

    let double = "ifp F(x) <- 1 at (x) + ifp F(y) <- 2 at (y)";
    assert!(parse_expression(double, &Vocabulary::new()).is_err());

    let l0 = Expr::Term(builtins::eval_depth_bounded(0));
    assert_eq!(l0.to_string(), "if In(u,u) then val(u) else bot");
}

#[test]
fn sentences_are_closed() {
    let e = parse_expression("forall x exists y E(x,y)", &Vocabulary::new().rel("E", 2)).unwrap();
    assert!(e.free_vars().is_empty());
    assert!(matches!(e, Expr::Formula(Formula::Quant(Quantifier::Forall, ..))));
}

#[test]
fn scalar_ground_truth() {
    let r = check_scalar_expression(&Expr::Term(builtins::squaring()));
    assert_eq!(r.violations.len(), 1);
    assert_eq!(r.violations[0].reason, ViolationReason::MulOfTwoIntensional);
    assert!(check_scalar_program(&builtins::eval_recursive()).is_scalar());
    assert!(check_scalar_program(&builtins::floyd_warshall()).is_scalar());
    assert!(check_scalar_program(&builtins::floyd_warshall_functional()).is_scalar());
    for l in 0..4 {
        assert!(check_scalar_expression(&Expr::Term(builtins::eval_depth_bounded(l))).is_scalar());
    }
    let sq = parse_program("fun c/1; G(x) <- c(x) + G(x) * G(x);", &Vocabulary::new()).unwrap();
    assert!(!check_scalar_program(&sq).is_scalar());
    let inv = parse_program("fun c/1; G(x) <- 1 / G(x);", &Vocabulary::new()).unwrap();
    assert_eq!(check_scalar_program(&inv).violations[0].reason, ViolationReason::DivByIntensional);
}
