//! Surface syntax: AST, parser, programs and the builtin catalog.

pub mod ast;
pub mod builtins;
mod lexer;
mod parser;
pub mod program;

pub use ast::{renaming, ArithOp, BoolOp, Expr, Formula, Fresh, Ifp, Quantifier, Replacer, Term, Var};
pub use builtins::{builtin, Builtin};
pub use lexer::KEYWORDS;
pub use parser::{parse_formula_text, parse_term_text};
pub use program::{check_symbols, parse_expression, parse_expression_unit, parse_program, symbol_partition, Program, Rule, Stratum, SymbolPartition};
