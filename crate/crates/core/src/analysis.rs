//! Membership in the scalar fragment.
//!
//! With `F` the intensional function symbols, a product is scalar only if
//! one factor has no free occurrence of a symbol in `F`, and a divisor must
//! have none. Every subexpression is checked against the same `F`.

use std::collections::BTreeSet;
use std::fmt;

use crate::syntax::{ArithOp, Expr, Formula, Program, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ViolationReason {
    MulOfTwoIntensional,
    DivByIntensional,
}

impl fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationReason::MulOfTwoIntensional => "mul-of-two-intensional",
            ViolationReason::DivByIntensional => "div-by-intensional",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// Slash-separated steps from the root to the offending node.
    pub path: String,
    pub reason: ViolationReason,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScalarReport {
    pub violations: Vec<Violation>,
}

impl ScalarReport {
    pub fn is_scalar(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Function symbols with an occurrence not bound by an ifp inside `t`.
pub fn ext_functions(t: &Term) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    ext_t(t, &mut Vec::new(), &mut out);
    out
}

fn ext_f(f: &Formula, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match f {
        Formula::Bool(_) | Formula::VarEq(..) | Formula::Rel(..) => {}
        Formula::Leq(a, b) => {
            ext_t(a, bound, out);
            ext_t(b, bound, out);
        }
        Formula::Not(g) | Formula::Quant(_, _, g) => ext_f(g, bound, out),
        Formula::Bin(_, a, b) => {
            ext_f(a, bound, out);
            ext_f(b, bound, out);
        }
    }
}

fn ext_t(t: &Term, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match t {
        Term::Const(_) => {}
        Term::App(n, _) => {
            if !bound.contains(n) {
                out.insert(n.clone());
            }
        }
        Term::Arith(_, a, b) => {
            ext_t(a, bound, out);
            ext_t(b, bound, out);
        }
        Term::Ite(c, a, b) => {
            ext_f(c, bound, out);
            ext_t(a, bound, out);
            ext_t(b, bound, out);
        }
        Term::Sum(_, g, b) | Term::Avg(_, g, b) | Term::Uniq(_, g, b) => {
            ext_f(g, bound, out);
            ext_t(b, bound, out);
        }
        Term::Ifp(i) => {
            bound.push(i.func.clone());
            ext_t(&i.body, bound, out);
            bound.pop();
        }
    }
}

struct Checker<'a> {
    intensional: &'a BTreeSet<String>,
    path: Vec<String>,
    out: Vec<Violation>,
}

impl Checker<'_> {
    fn touches(&self, t: &Term) -> bool {
        ext_functions(t).iter().any(|s| self.intensional.contains(s))
    }

    fn scoped<R>(&mut self, step: impl Into<String>, k: impl FnOnce(&mut Self) -> R) -> R {
        self.path.push(step.into());
        let r = k(self);
        self.path.pop();
        r
    }

    fn report(&mut self, reason: ViolationReason) {
        let path = if self.path.is_empty() { ".".to_string() } else { self.path.join("/") };
        self.out.push(Violation { path, reason });
    }

    fn formula(&mut self, f: &Formula) {
        match f {
            Formula::Bool(_) | Formula::VarEq(..) | Formula::Rel(..) => {}
            Formula::Leq(a, b) => {
                self.scoped("leq.lhs", |c| c.term(a));
                self.scoped("leq.rhs", |c| c.term(b));
            }
            Formula::Not(g) => self.scoped("not", |c| c.formula(g)),
            Formula::Quant(_, v, g) => self.scoped(format!("quant {v}"), |c| c.formula(g)),
            Formula::Bin(_, a, b) => {
                self.scoped("lhs", |c| c.formula(a));
                self.scoped("rhs", |c| c.formula(b));
            }
        }
    }

    fn term(&mut self, t: &Term) {
        match t {
            Term::Const(_) | Term::App(..) => {}
            Term::Arith(op, a, b) => {
                let name = match op {
                    ArithOp::Add => "add",
                    ArithOp::Sub => "sub",
                    ArithOp::Mul => "mul",
                    ArithOp::Div => "div",
                };
                let before = self.out.len();
                self.scoped(format!("{name}.lhs"), |c| c.term(a));
                self.scoped(format!("{name}.rhs"), |c| c.term(b));
                // Only the innermost offending node is reported.
                if self.out.len() > before {
                    return;
                }
                match op {
                    ArithOp::Mul if self.touches(a) && self.touches(b) => {
                        self.scoped("mul", |c| c.report(ViolationReason::MulOfTwoIntensional))
                    }
                    ArithOp::Div if self.touches(b) => self.scoped("div", |c| c.report(ViolationReason::DivByIntensional)),
                    _ => {}
                }
            }
            Term::Ite(c, a, b) => {
                self.scoped("if.cond", |k| k.formula(c));
                self.scoped("if.then", |k| k.term(a));
                self.scoped("if.else", |k| k.term(b));
            }
            Term::Sum(_, g, b) | Term::Avg(_, g, b) | Term::Uniq(_, g, b) => {
                let name = match t {
                    Term::Sum(..) => "sum",
                    Term::Avg(..) => "avg",
                    _ => "uniq",
                };
                self.scoped(format!("{name}.guard"), |k| k.formula(g));
                self.scoped(format!("{name}.body"), |k| k.term(b));
            }
            Term::Ifp(i) => self.scoped(format!("ifp {}", i.func), |k| k.term(&i.body)),
        }
    }
}

/// Intensional function symbols of an expression: those bound by an ifp.
fn ifp_bound(e: &Expr) -> BTreeSet<String> {
    let mut bound = BTreeSet::new();
    collect_binders(e, &mut bound);
    bound
}

fn collect_binders(e: &Expr, out: &mut BTreeSet<String>) {
    fn f_b(f: &Formula, out: &mut BTreeSet<String>) {
        match f {
            Formula::Bool(_) | Formula::VarEq(..) | Formula::Rel(..) => {}
            Formula::Leq(a, b) => {
                t_b(a, out);
                t_b(b, out);
            }
            Formula::Not(g) | Formula::Quant(_, _, g) => f_b(g, out),
            Formula::Bin(_, a, b) => {
                f_b(a, out);
                f_b(b, out);
            }
        }
    }
    fn t_b(t: &Term, out: &mut BTreeSet<String>) {
        match t {
            Term::Const(_) | Term::App(..) => {}
            Term::Arith(_, a, b) => {
                t_b(a, out);
                t_b(b, out);
            }
            Term::Ite(c, a, b) => {
                f_b(c, out);
                t_b(a, out);
                t_b(b, out);
            }
            Term::Sum(_, g, b) | Term::Avg(_, g, b) | Term::Uniq(_, g, b) => {
                f_b(g, out);
                t_b(b, out);
            }
            Term::Ifp(i) => {
                out.insert(i.func.clone());
                t_b(&i.body, out);
            }
        }
    }
    match e {
        Expr::Formula(f) => f_b(f, out),
        Expr::Term(t) => t_b(t, out),
    }
}

fn check_with(e: &Expr, intensional: &BTreeSet<String>, prefix: Vec<String>) -> Vec<Violation> {
    let mut c = Checker { intensional, path: prefix, out: Vec::new() };
    match e {
        Expr::Formula(f) => c.formula(f),
        Expr::Term(t) => c.term(t),
    }
    c.out
}

pub fn check_scalar_expression(e: &Expr) -> ScalarReport {
    let ints = ifp_bound(e);
    ScalarReport { violations: check_with(e, &ints, Vec::new()) }
}

/// Checks each stratum against its own intensional weight functions.
pub fn check_scalar_program(p: &Program) -> ScalarReport {
    let mut violations = Vec::new();
    for (i, st) in p.strata.iter().enumerate() {
        let ints: BTreeSet<String> = st.intensional.functions().map(|(n, _)| n.to_string()).collect();
        for r in &st.rules {
            let prefix = if p.strata.len() > 1 {
                vec![format!("stratum {}", i + 1), format!("rule {}", r.head)]
            } else {
                vec![format!("rule {}", r.head)]
            };
            violations.extend(check_with(&r.body, &ints, prefix));
        }
    }
    ScalarReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::Vocabulary;
    use crate::syntax::builtins;
    use crate::syntax::parse_program;

    #[test]
    fn squaring_has_one_mul_violation() {
        let r = check_scalar_expression(&Expr::Term(builtins::squaring()));
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].reason, ViolationReason::MulOfTwoIntensional);
        assert_eq!(r.violations[0].path, "ifp F/if.then/mul");
    }

    #[test]
    fn builtin_programs_are_scalar() {
        assert!(check_scalar_program(&builtins::eval_recursive()).is_scalar());
        assert!(check_scalar_program(&builtins::floyd_warshall()).is_scalar());
        assert!(check_scalar_program(&builtins::floyd_warshall_functional()).is_scalar());
    }

    #[test]
    fn constant_product_is_scalar() {
        let t = Term::int(2).mul(Term::int(3));
        assert!(check_scalar_expression(&Expr::Term(t)).is_scalar());
    }

    #[test]
    fn self_product_and_reciprocal_are_not_scalar() {
        let v = Vocabulary::new();
        let p = parse_program("fun G/1; G(x) <- G(x) * G(x);", &v).unwrap();
        let r = check_scalar_program(&p);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].reason, ViolationReason::MulOfTwoIntensional);
        let p = parse_program("fun G/1; G(x) <- 1 / G(x);", &v).unwrap();
        let r = check_scalar_program(&p);
        assert_eq!(r.violations[0].reason, ViolationReason::DivByIntensional);
        assert_eq!(r.violations[0].to_string(), "rule G/div: div-by-intensional");
    }

    #[test]
    fn innermost_violation_only() {
        let v = Vocabulary::new();
        let p = parse_program("fun G/1; G(x) <- (G(x) * G(x)) * G(x);", &v).unwrap();
        let r = check_scalar_program(&p);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].path, "rule G/mul.lhs/mul");
    }
}
