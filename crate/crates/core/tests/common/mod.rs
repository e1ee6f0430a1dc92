//! Seeded generators shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use num_rational::BigRational;
use wsumq_core::fnn::{Builder, Fnn};
use wsumq_core::structure::Elem;
use wsumq_core::syntax::{Expr, Formula, Rule, Stratum, Term, Var};
use wsumq_core::{SymbolKind, Vocabulary, Weight, WeightedStructure};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub const POOL: &[(i64, i64)] = &[(0, 1), (1, 1), (-1, 1), (1, 2), (2, 1), (-3, 2)];

pub fn pool_weight(rng: &mut ChaCha8Rng) -> Weight {
    let (n, d) = *POOL.choose(rng).unwrap();
    Weight::ratio(n, d)
}

/// Extensional vocabulary of the random strata.
pub fn random_ext() -> Vocabulary {
    Vocabulary::new().rel("E", 2).rel("P", 1).fun("c", 1).fun("W", 2)
}

pub fn random_structure(rng: &mut ChaCha8Rng, n: usize) -> WeightedStructure {
    let mut s = WeightedStructure::from_elements((0..n).map(|i| format!("a{i}"))).unwrap();
    s.add_relation("E", 2).unwrap();
    s.add_relation("P", 1).unwrap();
    s.add_function("c", 1).unwrap();
    s.add_function("W", 2).unwrap();
    for i in 0..n as Elem {
        if rng.gen_bool(0.5) {
            s.insert("P", &[i]).unwrap();
        }
        if rng.gen_bool(0.85) {
            s.set_weight("c", &[i], pool_weight(rng)).unwrap();
        }
        for j in 0..n as Elem {
            if rng.gen_bool(0.4) {
                s.insert("E", &[i, j]).unwrap();
            }
            if rng.gen_bool(0.85) {
                s.set_weight("W", &[i, j], pool_weight(rng)).unwrap();
            }
        }
    }
    s
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    intensional: Vec<(String, SymbolKind, usize)>,
    counter: usize,
    /// Also emit ifp, uniq, implication and division by arbitrary terms.
    rich: bool,
}

impl Gen<'_> {
    fn pick(&mut self, scope: &[Var], k: usize) -> Vec<Var> {
        (0..k).map(|_| scope.choose(self.rng).unwrap().clone()).collect()
    }

    fn bind(&mut self) -> Var {
        self.counter += 1;
        format!("y{}", self.counter)
    }

    fn symbols(&self, kind: SymbolKind, scope: &[Var]) -> Vec<(String, usize)> {
        self.intensional
            .iter()
            .filter(|(_, k, a)| *k == kind && (*a == 0 || !scope.is_empty()))
            .map(|(n, _, a)| (n.clone(), *a))
            .collect()
    }

    fn formula(&mut self, depth: usize, scope: &[Var]) -> Formula {
        let leaf = depth == 0 || self.rng.gen_bool(0.3);
        if leaf {
            let rels = self.symbols(SymbolKind::Relation, scope);
            let choice = self.rng.gen_range(0..6);
            return match choice {
                0 | 1 if !rels.is_empty() => {
                    let (n, a) = rels.choose(self.rng).unwrap().clone();
                    Formula::rel_vars(&n, self.pick(scope, a))
                }
                2 if !scope.is_empty() => Formula::rel_vars("E", self.pick(scope, 2)),
                3 if !scope.is_empty() => Formula::rel_vars("P", self.pick(scope, 1)),
                4 if !scope.is_empty() => {
                    let v = self.pick(scope, 2);
                    Formula::var_eq(&v[0], &v[1])
                }
                5 => Formula::leq(self.term(0, scope), self.term(0, scope)),
                _ => Formula::Bool(self.rng.gen_bool(0.5)),
            };
        }
        if self.rich && self.rng.gen_bool(0.15) {
            return self.formula(depth - 1, scope).implies(self.formula(depth - 1, scope));
        }
        match self.rng.gen_range(0..6) {
            0 => self.formula(depth - 1, scope).not(),
            1 => self.formula(depth - 1, scope).and(self.formula(depth - 1, scope)),
            2 => self.formula(depth - 1, scope).or(self.formula(depth - 1, scope)),
            3 => Formula::leq(self.term(depth - 1, scope), self.term(depth - 1, scope)),
            _ => {
                let v = self.bind();
                let mut inner = scope.to_vec();
                inner.push(v.clone());
                let body = self.formula(depth - 1, &inner);
                if self.rng.gen_bool(0.6) {
                    Formula::exists_vars(vec![v], body)
                } else {
                    Formula::forall_vars(vec![v], body)
                }
            }
        }
    }

    fn term(&mut self, depth: usize, scope: &[Var]) -> Term {
        let leaf = depth == 0 || self.rng.gen_bool(if self.rich { 0.15 } else { 0.3 });
        if leaf {
            let funs = self.symbols(SymbolKind::Function, scope);
            if self.rich && !funs.is_empty() && self.rng.gen_bool(0.5) {
                let (n, a) = funs.choose(self.rng).unwrap().clone();
                return Term::app_vars(&n, self.pick(scope, a));
            }
            return match self.rng.gen_range(0..7) {
                0 | 1 if !funs.is_empty() => {
                    let (n, a) = funs.choose(self.rng).unwrap().clone();
                    Term::app_vars(&n, self.pick(scope, a))
                }
                2 if !scope.is_empty() => Term::app_vars("c", self.pick(scope, 1)),
                3 if !scope.is_empty() => Term::app_vars("W", self.pick(scope, 2)),
                4 if self.rng.gen_bool(0.2) => Term::bot(),
                _ => Term::Const(pool_weight(self.rng)),
            };
        }
        if self.rich {
            match self.rng.gen_range(0..10) {
                0 | 1 => return self.ifp(depth - 1, scope),
                2 => return self.term(depth - 1, scope).div(self.term(depth - 1, scope)),
                3 => {
                    let v = self.bind();
                    let mut inner = scope.to_vec();
                    inner.push(v.clone());
                    let guard = self.formula(depth - 1, &inner);
                    return Term::uniq(&v, guard, self.term(depth - 1, &inner));
                }
                _ => {}
            }
        }
        match self.rng.gen_range(0..8) {
            0 => self.term(depth - 1, scope).add(self.term(depth - 1, scope)),
            1 => self.term(depth - 1, scope).sub(self.term(depth - 1, scope)),
            2 => self.term(depth - 1, scope).mul(self.term(depth - 1, scope)),
            3 => self.term(depth - 1, scope).div(Term::Const(pool_weight(self.rng))),
            4 | 5 => Term::ite(self.formula(depth - 1, scope), self.term(depth - 1, scope), self.term(depth - 1, scope)),
            _ => {
                let v = self.bind();
                let mut inner = scope.to_vec();
                inner.push(v.clone());
                let guard = self.formula(depth - 1, &inner);
                let body = self.term(depth - 1, &inner);
                if self.rng.gen_bool(0.7) {
                    Term::sum_vars(vec![v], guard, body)
                } else {
                    Term::avg_vars(vec![v], guard, body)
                }
            }
        }
    }
}

impl Gen<'_> {
    /// `ifp G(params) <- body at (args)` with a fresh `G`; the body may use
    /// `G`, enclosing ifp symbols and the enclosing scope.
    fn ifp(&mut self, depth: usize, scope: &[Var]) -> Term {
        self.counter += 1;
        let name = format!("G{}", self.counter);
        let arity = if scope.is_empty() { 0 } else { self.rng.gen_range(0..=2) };
        let params: Vec<Var> = (0..arity).map(|_| self.bind()).collect();
        let args = self.pick(scope, arity);
        let mut inner = scope.to_vec();
        inner.extend(params.iter().cloned());
        self.intensional.push((name.clone(), SymbolKind::Function, arity));
        let body = self.term(depth, &inner);
        self.intensional.pop();
        Term::ifp_vars(&name, params, body, args)
    }
}

/// A random formula or term over [`random_ext`] with free variables among
/// `u`, `v`, including nested ifp terms.
pub fn random_expression(rng: &mut ChaCha8Rng, depth: usize) -> Expr {
    let scope = vec!["u".to_string(), "v".to_string()];
    let formula = rng.gen_bool(0.5);
    let mut g = Gen { rng, intensional: Vec::new(), counter: 0, rich: true };
    if formula {
        Expr::Formula(g.formula(depth, &scope))
    } else if g.rng.gen_bool(0.5) {
        Expr::Term(g.ifp(depth, &scope))
    } else {
        Expr::Term(g.term(depth, &scope))
    }
}

/// A stratum with one or two intensional symbols of arity at most two over
/// [`random_ext`].
pub fn random_stratum(rng: &mut ChaCha8Rng) -> Stratum {
    let count = rng.gen_range(1..=2);
    let mut intensional = Vec::new();
    for i in 0..count {
        let kind = if rng.gen_bool(0.5) { SymbolKind::Relation } else { SymbolKind::Function };
        let arity = rng.gen_range(0..=2);
        let name = match kind {
            SymbolKind::Relation => format!("R{i}"),
            SymbolKind::Function => format!("F{i}"),
        };
        intensional.push((name, kind, arity));
    }
    let mut g = Gen { rng, intensional: intensional.clone(), counter: 0, rich: false };
    let mut rules = Vec::new();
    for (name, kind, arity) in intensional.clone() {
        let vars: Vec<Var> = (0..arity).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        let depth = g.rng.gen_range(1..=3);
        rules.push(match kind {
            SymbolKind::Relation => Rule::relation(&name, &refs, g.formula(depth, &vars)),
            SymbolKind::Function => Rule::function(&name, &refs, g.term(depth, &vars)),
        });
    }
    Stratum::new(random_ext(), rules).expect("generated stratum is well-formed")
}

/// Symbols of `syms` in `s`, as JSON, for equality checks.
pub fn project(s: &WeightedStructure, syms: impl IntoIterator<Item = String>) -> String {
    let mut v = Vocabulary::new();
    for name in syms {
        let info = s.vocabulary().get(&name).unwrap();
        v.insert(&name, info.kind, info.arity).unwrap();
    }
    s.restrict(&v).to_json()
}

pub const FNN_POOL: &[(i64, i64)] = &[(-2, 1), (-1, 1), (-1, 2), (0, 1), (1, 2), (1, 1), (2, 1)];

pub fn fnn_weight(rng: &mut ChaCha8Rng) -> BigRational {
    let (n, d) = *FNN_POOL.choose(rng).unwrap();
    BigRational::new(n.into(), d.into())
}

/// Small rationals with denominators up to 4, in `[-3, 3]`.
pub fn random_input(rng: &mut ChaCha8Rng) -> BigRational {
    let d = rng.gen_range(1..=4i64);
    BigRational::new(rng.gen_range(-3 * d..=3 * d).into(), d.into())
}

/// A layered network with at most 12 nodes and depth at most 4. Some
/// hidden nodes copy the bias and in-edges of a sibling so that reduction
/// has work to do.
pub fn random_fnn(rng: &mut ChaCha8Rng) -> Fnn {
    let mut bias: Vec<(String, BigRational)> = Vec::new();
    let mut edges: Vec<(String, String, BigRational)> = Vec::new();
    let inputs: Vec<String> = (0..rng.gen_range(1..=2)).map(|i| format!("i{i}")).collect();
    let mut layers = vec![inputs.clone()];
    let mut total = inputs.len();
    for l in 1..=rng.gen_range(1..=3) {
        let mut layer: Vec<String> = Vec::new();
        for k in 0..rng.gen_range(1..=3) {
            if total >= 9 {
                break;
            }
            total += 1;
            let name = format!("h{l}_{k}");
            if !layer.is_empty() && rng.gen_bool(0.3) {
                let src = layer.choose(rng).unwrap().clone();
                let b = bias.iter().find(|(n, _)| *n == src).unwrap().1.clone();
                bias.push((name.clone(), b));
                let copies: Vec<_> = edges.iter().filter(|e| e.1 == src).map(|e| (e.0.clone(), name.clone(), e.2.clone())).collect();
                edges.extend(copies);
            } else {
                bias.push((name.clone(), fnn_weight(rng)));
                let prev = layers[l - 1].choose(rng).unwrap().clone();
                edges.push((prev.clone(), name.clone(), fnn_weight(rng)));
                for earlier in layers.iter().flatten() {
                    if *earlier != prev && rng.gen_bool(0.3) {
                        edges.push((earlier.clone(), name.clone(), fnn_weight(rng)));
                    }
                }
            }
            layer.push(name);
        }
        if layer.is_empty() {
            break;
        }
        layers.push(layer);
    }
    let outputs: Vec<String> = (0..rng.gen_range(1..=2)).map(|i| format!("o{i}")).collect();
    let last = layers.len() - 1;
    for o in &outputs {
        bias.push((o.clone(), fnn_weight(rng)));
        let prev = layers[last].choose(rng).unwrap().clone();
        edges.push((prev, o.clone(), fnn_weight(rng)));
        for earlier in layers[..last].iter().flatten() {
            if rng.gen_bool(0.2) {
                edges.push((earlier.clone(), o.clone(), fnn_weight(rng)));
            }
        }
    }
    for n in layers.iter().flatten() {
        if !edges.iter().any(|e| e.0 == *n) {
            let o = outputs.choose(rng).unwrap().clone();
            edges.push((n.clone(), o, fnn_weight(rng)));
        }
    }
    let mut b = Builder::new();
    for i in &inputs {
        b.node(i, None);
    }
    for (n, w) in bias {
        if outputs.contains(&n) {
            b.output(&n, w);
        } else {
            b.node(&n, Some(w));
        }
    }
    for (f, t, w) in edges {
        b.edge(&f, &t, w);
    }
    b.build().unwrap()
}
