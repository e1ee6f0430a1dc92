mod common;

use std::time::Instant;

use common::*;
use wsumq_core::eval::{run_stratum, ExprEvaluator, EvalResult, Mode};
use wsumq_core::structure::{all_tuples, Elem};
use wsumq_core::transform::{functional_to_loose, loose_to_functional, simultaneous_induction, DEFAULT_ARITY_CAP};
use wsumq_core::syntax::{parse_expression, parse_program, Program};
use wsumq_core::{SymbolKind, Vocabulary};

#[test]
fn random_strata_transformations() {
    let start = Instant::now();
    let seed: u64 = std::env::var("SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(7);
    let mut r = rng(seed);
    for case in 0..60 {
        let st = random_stratum(&mut r);
        let f2l = functional_to_loose(&st);
        let l2f = loose_to_functional(&st, DEFAULT_ARITY_CAP).unwrap();
        for out in [&f2l.output, &l2f.output] {
            let answer = out.rules[0].head.clone();
            let text = Program::single(out.clone(), &answer).unwrap().to_string();
            assert_eq!(parse_program(&text, &Vocabulary::new()).unwrap().strata[0].rules, out.rules, "program text {text}");
        }
        for n in 0..=4 {
            let s = random_structure(&mut r, n);
            let syms: Vec<String> = st.intensional.names().map(str::to_string).collect();
            let (func, _) = run_stratum(&st, &s, Mode::Functional).unwrap();
            let (loose, _) = run_stratum(&st, &s, Mode::Loose).unwrap();
            let (a, _) = run_stratum(&f2l.output, &s, Mode::Loose).unwrap();
            assert_eq!(project(&a, syms.clone()), project(&func, syms.clone()), "func2loose case {case} n {n}\n{st:?}");
            let (b, _) = run_stratum(&l2f.output, &s, Mode::Functional).unwrap();
            assert_eq!(project(&b, syms.clone()), project(&loose, syms.clone()), "loose2func case {case} n {n}\n{st:?}");
            if n >= 2 {
                for name in &syms {
                    let res = simultaneous_induction(&st, name).unwrap();
                    let text = res.output.expr.to_string();
                    assert_eq!(parse_expression(&text, &st.extensional).unwrap(), res.output.expr, "simind text {text}");
                    let mut ev = ExprEvaluator::new(&res.output.expr, &s, &res.output.free_vars).unwrap();
                    let info = st.intensional.get(name).unwrap();
                    for t in all_tuples(n, info.arity) {
                        let want = match info.kind {
                            SymbolKind::Relation => EvalResult::Bool(func.contains(name, &t)),
                            SymbolKind::Function => EvalResult::Weight(func.weight(name, &t)),
                        };
                        assert_eq!(ev.eval(&t as &[Elem]), want, "simind case {case} n {n} {name}{t:?}");
                    }
                }
            }
        }
    }
    eprintln!("elapsed {:?}", start.elapsed());
}
