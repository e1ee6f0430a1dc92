//! Exact evaluation of first-order logic with weight aggregates and
//! inflationary/functional fixpoints over weighted structures, plus a
//! toolkit for feedforward ReLU networks.

pub mod analysis;
pub mod error;
pub mod eval;
pub mod fnn;
pub mod structure;
pub mod syntax;
pub mod transform;
pub mod weight;

pub use error::Error;
pub use structure::{Assignment, Elem, SymbolKind, Universe, Vocabulary, WeightedStructure};
pub use weight::Weight;
