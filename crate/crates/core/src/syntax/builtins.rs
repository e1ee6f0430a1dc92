//! Catalog of ready-made programs and terms.

use std::collections::HashMap;

use super::ast::{renaming, Expr, Formula, Fresh, Term};
use super::program::{parse_expression, parse_program, Program};
use crate::error::{SyntaxError, ValidationError};
use crate::structure::Vocabulary;

pub const BUILTIN_NAMES: &[&str] = &[
    "eval_recursive",
    "eval_depth_bounded",
    "floyd_warshall",
    "floyd_warshall_functional",
    "squaring",
    "acyclicity",
];

/// Network encoding vocabulary: edges, input/output orders, biases,
/// edge weights and input values.
pub fn fnn_vocabulary() -> Vocabulary {
    Vocabulary::new().rel("E", 2).rel("In", 2).rel("Out", 2).fun("b", 1).fun("w", 2).fun("val", 1)
}

/// Distance-matrix vocabulary: a strict total order and the weights.
pub fn fw_vocabulary() -> Vocabulary {
    Vocabulary::new().rel("ord", 2).fun("W", 2)
}

pub fn graph_vocabulary() -> Vocabulary {
    Vocabulary::new().rel("E", 2).rel("S", 1)
}

// The ReLU branch is guarded by an undefinedness test: relu(bot) is 0, and
// under functional semantics a 0 computed before the predecessors are known
// would never be corrected.
pub const EVAL_RECURSIVE: &str = "\
rel E/2; rel In/2; rel Out/2; fun b/1; fun w/2; fun val/1;
fun eval/1;
eval(u) <- if In(u,u) then val(u)
  else if Out(u,u) then b(u) + sum (v): E(v,u) w(v,u) * eval(v)
  else if b(u) + sum (v): E(v,u) w(v,u) * eval(v) = bot then bot
  else relu(b(u) + sum (v): E(v,u) w(v,u) * eval(v));
";

pub const FLOYD_WARSHALL: &str = "\
rel ord/2; fun W/2;
rel chosen/1; fun D/2;
answer D;
chosen(k) <- forall x (ord(x,k) <-> chosen(x));
D(i,j) <- if !(exists x chosen(x)) then
    (if exists k ((forall x (ord(x,k) <-> chosen(x))) & W(i,j) > W(i,k) + W(k,j))
     then sum (k): (forall x (ord(x,k) <-> chosen(x))) W(i,k) + W(k,j)
     else W(i,j))
  else if exists k ((forall x (ord(x,k) <-> chosen(x))) & D(i,j) > D(i,k) + D(k,j))
    then sum (k): (forall x (ord(x,k) <-> chosen(x))) D(i,k) + D(k,j)
  else D(i,j);
";

// last(k) := chosen(k) & forall x ((chosen(x) & x != k) -> ord(x,k)).
pub const FLOYD_WARSHALL_FUNCTIONAL: &str = "\
rel ord/2; fun W/2;
rel chosen/1; fun D'/3; fun D/2;
answer D;
chosen(k2) <- forall x (ord(x,k2) <-> chosen(x));
D'(k2,i,j) <- if !(forall x (ord(x,k2) <-> chosen(x))) then bot
  else if !(exists x chosen(x)) then
    (if W(i,j) > W(i,k2) + W(k2,j) then W(i,k2) + W(k2,j) else W(i,j))
  else if exists k ((chosen(k) & forall x ((chosen(x) & x != k) -> ord(x,k)))
                    & D'(k,i,j) > D'(k,i,k2) + D'(k,k2,j))
    then sum (k): (chosen(k) & forall x ((chosen(x) & x != k) -> ord(x,k))) D'(k,i,k2) + D'(k,k2,j)
  else sum (k): (chosen(k) & forall x ((chosen(x) & x != k) -> ord(x,k))) D'(k,i,j);
---
D(i,j) <- sum (k): (chosen(k) & forall x ((chosen(x) & x != k) -> ord(x,k))) D'(k,i,j);
";

pub const SQUARING: &str =
    "ifp F(x) <- if exists y E(y,x) then (sum (y): E(y,x) F(y)) * (sum (y): E(y,x) F(y)) else 2 at (x)";

/// Reach(x,y): a nonempty path from x to y whose start is reachable from S.
pub const ACYCLICITY: &str = "\
rel E/2; rel S/1;
rel Reach/2; rel Ans/0;
Reach(x,y) <- E(x,y) & (S(x) | exists z Reach(z,x)) | exists z (Reach(x,z) & E(z,y));
---
Ans <- !exists x Reach(x,x);
";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Builtin {
    Program(Program),
    Expr(Expr),
}

impl Builtin {
    pub fn program(self) -> Option<Program> {
        match self {
            Builtin::Program(p) => Some(p),
            Builtin::Expr(_) => None,
        }
    }

    pub fn term(self) -> Option<Term> {
        match self {
            Builtin::Expr(Expr::Term(t)) => Some(t),
            _ => None,
        }
    }
}

fn program(text: &str) -> Program {
    parse_program(text, &Vocabulary::new()).expect("builtin program text is valid")
}

pub fn eval_recursive() -> Program {
    program(EVAL_RECURSIVE)
}

pub fn floyd_warshall() -> Program {
    program(FLOYD_WARSHALL)
}

pub fn floyd_warshall_functional() -> Program {
    program(FLOYD_WARSHALL_FUNCTIONAL)
}

pub fn acyclicity() -> Program {
    program(ACYCLICITY)
}

pub fn squaring() -> Term {
    match parse_expression(SQUARING, &Vocabulary::new().rel("E", 2)) {
        Ok(Expr::Term(t)) => t,
        other => panic!("builtin squaring term does not parse: {other:?}"),
    }
}

/// `depth<=l(u)`: every path into `u` from an input has length at most `l`.
pub fn depth_at_most(level: usize, u: &str, fresh: &mut Fresh) -> Formula {
    if level == 0 {
        return Formula::rel("In", &[u, u]);
    }
    let v = fresh.var("v");
    let inner = depth_at_most(level - 1, &v, fresh);
    Formula::forall_vars(vec![v.clone()], Formula::rel("E", &[&v, u]).implies(inner))
}

/// The unrolled term `eval<=l(u)` with free variable `u`.
pub fn eval_depth_bounded(level: usize) -> Term {
    let mut fresh = Fresh::avoiding(["u".to_string()]);
    eval_bounded_at(level, "u", &mut fresh)
}

fn eval_bounded_at(level: usize, u: &str, fresh: &mut Fresh) -> Term {
    if level == 0 {
        return Term::ite(Formula::rel("In", &[u, u]), Term::app("val", &[u]), Term::bot());
    }
    let prev = eval_bounded_at(level - 1, u, fresh);
    let v = fresh.var("v");
    let prev_at_v = prev.rename_free(&renaming(&[u.to_string()], std::slice::from_ref(&v)), fresh);
    let pre = Term::app("b", &[u]).add(Term::sum_vars(
        vec![v.clone()],
        Formula::rel("E", &[&v, u]),
        Term::app("w", &[&v, u]).mul(prev_at_v),
    ));
    let node = Term::ite(Formula::rel("Out", &[u, u]), pre.clone(), Term::relu(pre));
    Term::ite(
        depth_at_most(level - 1, u, fresh),
        prev,
        Term::ite(depth_at_most(level, u, fresh), node, Term::bot()),
    )
}

/// Looks up a builtin; `eval_depth_bounded` needs the parameter `l`.
pub fn builtin(name: &str, params: &HashMap<String, usize>) -> Result<Builtin, SyntaxError> {
    Ok(match name {
        "eval_recursive" => Builtin::Program(eval_recursive()),
        "eval_depth_bounded" => {
            let l = *params.get("l").ok_or_else(|| ValidationError::MissingParameter("l".to_string()))?;
            Builtin::Expr(Expr::Term(eval_depth_bounded(l)))
        }
        "floyd_warshall" => Builtin::Program(floyd_warshall()),
        "floyd_warshall_functional" => Builtin::Program(floyd_warshall_functional()),
        "squaring" => Builtin::Expr(Expr::Term(squaring())),
        "acyclicity" => Builtin::Program(acyclicity()),
        other => return Err(ValidationError::UnknownBuiltin(other.to_string()).into()),
    })
}
