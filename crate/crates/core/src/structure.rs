//! Vocabularies and weighted structures.
//!
//! Elements are interned as `u32` indices into the universe, in the order in
//! which the universe was listed. Relations and weight functions are stored
//! densely over `A^arity` (tuples enumerated lexicographically by element
//! index), so weight functions are total by construction.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FormatError, ValidationError};
use crate::weight::Weight;

pub type Elem = u32;

/// Largest dense table we are willing to allocate for one symbol.
pub const MAX_TABLE_SIZE: usize = 1 << 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolKind {
    Relation,
    Function,
}

impl fmt::Display for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolKind::Relation => write!(f, "rel"),
            SymbolKind::Function => write!(f, "fun"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SymbolInfo {
    pub kind: SymbolKind,
    pub arity: usize,
}

/// A finite set of relation and weight-function symbols with arities.
/// Names are unique across both kinds.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: BTreeMap<String, SymbolInfo>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, kind: SymbolKind, arity: usize) -> Result<(), ValidationError> {
        if self.symbols.contains_key(name) {
            return Err(ValidationError::DuplicateSymbol(name.to_string()));
        }
        self.symbols.insert(name.to_string(), SymbolInfo { kind, arity });
        Ok(())
    }

    pub fn with(mut self, name: &str, kind: SymbolKind, arity: usize) -> Self {
        self.insert(name, kind, arity).expect("duplicate symbol in vocabulary literal");
        self
    }

    pub fn rel(self, name: &str, arity: usize) -> Self {
        self.with(name, SymbolKind::Relation, arity)
    }

    pub fn fun(self, name: &str, arity: usize) -> Self {
        self.with(name, SymbolKind::Function, arity)
    }

    pub fn get(&self, name: &str) -> Option<SymbolInfo> {
        self.symbols.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.symbols.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<SymbolInfo> {
        self.symbols.remove(name)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, SymbolInfo)> {
        self.symbols.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.symbols.keys().map(String::as_str)
    }

    pub fn relations(&self) -> impl Iterator<Item = (&str, usize)> {
        self.iter().filter(|(_, i)| i.kind == SymbolKind::Relation).map(|(n, i)| (n, i.arity))
    }

    pub fn functions(&self) -> impl Iterator<Item = (&str, usize)> {
        self.iter().filter(|(_, i)| i.kind == SymbolKind::Function).map(|(n, i)| (n, i.arity))
    }

    /// Union of two vocabularies; a name present in both must agree.
    pub fn union(&self, other: &Vocabulary) -> Result<Vocabulary, ValidationError> {
        let mut out = self.clone();
        for (name, info) in other.iter() {
            match out.get(name) {
                Some(existing) if existing == info => {}
                Some(_) => return Err(ValidationError::DuplicateSymbol(name.to_string())),
                None => {
                    out.symbols.insert(name.to_string(), info);
                }
            }
        }
        Ok(out)
    }

    pub fn is_disjoint(&self, other: &Vocabulary) -> bool {
        self.names().all(|n| !other.contains(n))
    }
}

/// The ordered universe of a structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Universe {
    names: Vec<String>,
    index: HashMap<String, Elem>,
}

impl Universe {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, FormatError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i as Elem).is_some() {
                return Err(FormatError::DuplicateElement(n.clone()));
            }
        }
        Ok(Universe { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, e: Elem) -> &str {
        &self.names[e as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lookup(&self, name: &str) -> Option<Elem> {
        self.index.get(name).copied()
    }

    pub fn resolve(&self, tuple: &[impl AsRef<str>]) -> Result<Vec<Elem>, FormatError> {
        tuple
            .iter()
            .map(|n| self.lookup(n.as_ref()).ok_or_else(|| FormatError::UnknownElement(n.as_ref().to_string())))
            .collect()
    }
}

/// Number of tuples in `A^arity`, or `None` if it would exceed [`MAX_TABLE_SIZE`].
pub fn table_size(universe: usize, arity: usize) -> Option<usize> {
    let mut size: usize = 1;
    for _ in 0..arity {
        size = size.checked_mul(universe)?;
        if size > MAX_TABLE_SIZE {
            return None;
        }
    }
    Some(size)
}

/// Position of a tuple in the lexicographic enumeration of `A^k`.
#[inline]
pub fn tuple_index(universe: usize, tuple: &[Elem]) -> usize {
    tuple.iter().fold(0usize, |acc, &e| acc * universe + e as usize)
}

/// Inverse of [`tuple_index`].
pub fn tuple_at(universe: usize, arity: usize, mut index: usize) -> Vec<Elem> {
    let mut out = vec![0; arity];
    for slot in out.iter_mut().rev() {
        *slot = (index % universe) as Elem;
        index /= universe;
    }
    out
}

/// Iterates over all tuples of `A^arity` in lexicographic order.
pub fn all_tuples(universe: usize, arity: usize) -> impl Iterator<Item = Vec<Elem>> {
    let size = if arity == 0 { 1 } else { universe.pow(arity as u32) };
    (0..size).map(move |i| tuple_at(universe, arity, i))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    arity: usize,
    members: Vec<bool>,
    count: usize,
}

impl Relation {
    pub fn empty(universe: usize, arity: usize) -> Self {
        let size = table_size(universe, arity).expect("relation table too large");
        Relation { arity, members: vec![false; size], count: 0 }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub fn contains_index(&self, index: usize) -> bool {
        self.members[index]
    }

    /// Returns true if the tuple was not present before.
    pub fn insert_index(&mut self, index: usize) -> bool {
        let fresh = !self.members[index];
        if fresh {
            self.members[index] = true;
            self.count += 1;
        }
        fresh
    }

    pub fn table_len(&self) -> usize {
        self.members.len()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn is_subset(&self, other: &Relation) -> bool {
        self.members.iter().zip(&other.members).all(|(a, b)| !a || *b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightTable {
    arity: usize,
    values: Vec<Weight>,
}

impl WeightTable {
    pub fn undefined(universe: usize, arity: usize) -> Self {
        let size = table_size(universe, arity).expect("weight table too large");
        WeightTable { arity, values: vec![Weight::Bot; size] }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    #[inline]
    pub fn get_index(&self, index: usize) -> &Weight {
        &self.values[index]
    }

    pub fn set_index(&mut self, index: usize, value: Weight) {
        self.values[index] = value;
    }

    pub fn values(&self) -> &[Weight] {
        &self.values
    }

    pub fn defined_count(&self) -> usize {
        self.values.iter().filter(|w| !w.is_bot()).count()
    }

    pub fn max_bit_size(&self) -> u64 {
        self.values.iter().map(Weight::bit_size).max().unwrap_or(0)
    }
}

/// A finite universe with relations and total weight functions into `ℚ ∪ {⊥}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightedStructure {
    universe: Arc<Universe>,
    vocabulary: Vocabulary,
    relations: BTreeMap<String, Relation>,
    functions: BTreeMap<String, WeightTable>,
}

impl WeightedStructure {
    pub fn new(universe: Universe) -> Self {
        WeightedStructure {
            universe: Arc::new(universe),
            vocabulary: Vocabulary::new(),
            relations: BTreeMap::new(),
            functions: BTreeMap::new(),
        }
    }

    pub fn from_elements<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, FormatError> {
        Ok(Self::new(Universe::new(names)?))
    }

    /// A structure over the same universe with no symbols.
    pub fn empty_like(&self) -> Self {
        WeightedStructure {
            universe: Arc::clone(&self.universe),
            vocabulary: Vocabulary::new(),
            relations: BTreeMap::new(),
            functions: BTreeMap::new(),
        }
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn size(&self) -> usize {
        self.universe.len()
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    fn check_size(&self, name: &str, arity: usize) -> Result<(), FormatError> {
        if table_size(self.size(), arity).is_none() {
            return Err(FormatError::Other(format!(
                "symbol `{name}` of arity {arity} is too large for a universe of {} elements",
                self.size()
            )));
        }
        Ok(())
    }

    /// Adds an empty relation.
    pub fn add_relation(&mut self, name: &str, arity: usize) -> Result<(), FormatError> {
        self.check_size(name, arity)?;
        self.vocabulary
            .insert(name, SymbolKind::Relation, arity)
            .map_err(|_| FormatError::DuplicateSymbol(name.to_string()))?;
        self.relations.insert(name.to_string(), Relation::empty(self.size(), arity));
        Ok(())
    }

    /// Adds a weight function that is `⊥` everywhere.
    pub fn add_function(&mut self, name: &str, arity: usize) -> Result<(), FormatError> {
        self.check_size(name, arity)?;
        self.vocabulary
            .insert(name, SymbolKind::Function, arity)
            .map_err(|_| FormatError::DuplicateSymbol(name.to_string()))?;
        self.functions.insert(name.to_string(), WeightTable::undefined(self.size(), arity));
        Ok(())
    }

    /// Adds every symbol of `vocab` that is not yet present, empty or `⊥`.
    pub fn expand(&mut self, vocab: &Vocabulary) -> Result<(), FormatError> {
        for (name, info) in vocab.iter() {
            match self.vocabulary.get(name) {
                Some(existing) if existing == info => {}
                Some(_) => return Err(FormatError::DuplicateSymbol(name.to_string())),
                None => match info.kind {
                    SymbolKind::Relation => self.add_relation(name, info.arity)?,
                    SymbolKind::Function => self.add_function(name, info.arity)?,
                },
            }
        }
        Ok(())
    }

    /// Keeps only the symbols of `vocab`.
    pub fn restrict(&self, vocab: &Vocabulary) -> WeightedStructure {
        let mut out = self.empty_like();
        for (name, info) in vocab.iter() {
            match info.kind {
                SymbolKind::Relation => {
                    if let Some(r) = self.relations.get(name) {
                        out.vocabulary.insert(name, info.kind, info.arity).ok();
                        out.relations.insert(name.to_string(), r.clone());
                    }
                }
                SymbolKind::Function => {
                    if let Some(f) = self.functions.get(name) {
                        out.vocabulary.insert(name, info.kind, info.arity).ok();
                        out.functions.insert(name.to_string(), f.clone());
                    }
                }
            }
        }
        out
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    pub fn relation_mut(&mut self, name: &str) -> Option<&mut Relation> {
        self.relations.get_mut(name)
    }

    pub fn function(&self, name: &str) -> Option<&WeightTable> {
        self.functions.get(name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut WeightTable> {
        self.functions.get_mut(name)
    }

    pub fn set_relation(&mut self, name: &str, relation: Relation) {
        self.relations.insert(name.to_string(), relation);
    }

    pub fn set_function(&mut self, name: &str, table: WeightTable) {
        self.functions.insert(name.to_string(), table);
    }

    fn checked_tuple(&self, name: &str, expected: usize, tuple: &[Elem]) -> Result<usize, FormatError> {
        if tuple.len() != expected {
            return Err(FormatError::TupleArity { name: name.to_string(), expected, found: tuple.len() });
        }
        if let Some(&e) = tuple.iter().find(|&&e| e as usize >= self.size()) {
            return Err(FormatError::UnknownElement(format!("#{e}")));
        }
        Ok(tuple_index(self.size(), tuple))
    }

    pub fn insert(&mut self, name: &str, tuple: &[Elem]) -> Result<bool, FormatError> {
        let arity = self.relation(name).ok_or_else(|| FormatError::Other(format!("no relation `{name}`")))?.arity();
        let idx = self.checked_tuple(name, arity, tuple)?;
        Ok(self.relations.get_mut(name).expect("checked above").insert_index(idx))
    }

    pub fn insert_named(&mut self, name: &str, tuple: &[&str]) -> Result<bool, FormatError> {
        let t = self.universe.resolve(tuple)?;
        self.insert(name, &t)
    }

    pub fn contains(&self, name: &str, tuple: &[Elem]) -> bool {
        match self.relation(name) {
            Some(r) if r.arity() == tuple.len() && tuple.iter().all(|&e| (e as usize) < self.size()) => {
                r.contains_index(tuple_index(self.size(), tuple))
            }
            _ => false,
        }
    }

    pub fn set_weight(&mut self, name: &str, tuple: &[Elem], value: Weight) -> Result<(), FormatError> {
        let arity = self.function(name).ok_or_else(|| FormatError::Other(format!("no weight function `{name}`")))?.arity();
        let idx = self.checked_tuple(name, arity, tuple)?;
        self.functions.get_mut(name).expect("checked above").set_index(idx, value);
        Ok(())
    }

    pub fn set_weight_named(&mut self, name: &str, tuple: &[&str], value: Weight) -> Result<(), FormatError> {
        let t = self.universe.resolve(tuple)?;
        self.set_weight(name, &t, value)
    }

    /// Total lookup: any well-formed tuple has a value, possibly `⊥`.
    pub fn weight(&self, name: &str, tuple: &[Elem]) -> Weight {
        match self.function(name) {
            Some(f) if f.arity() == tuple.len() && tuple.iter().all(|&e| (e as usize) < self.size()) => {
                f.get_index(tuple_index(self.size(), tuple)).clone()
            }
            _ => Weight::Bot,
        }
    }

    pub fn weight_named(&self, name: &str, tuple: &[&str]) -> Weight {
        match self.universe.resolve(tuple) {
            Ok(t) => self.weight(name, &t),
            Err(_) => Weight::Bot,
        }
    }

    pub fn tuples(&self, name: &str) -> Vec<Vec<Elem>> {
        match self.relation(name) {
            Some(r) => r.indices().map(|i| tuple_at(self.size(), r.arity(), i)).collect(),
            None => Vec::new(),
        }
    }

    pub fn named_tuple(&self, tuple: &[Elem]) -> Vec<String> {
        tuple.iter().map(|&e| self.universe.name(e).to_string()).collect()
    }

    /// Largest bit size of any weight entry in any weight function.
    pub fn max_bit_size(&self) -> u64 {
        self.functions.values().map(WeightTable::max_bit_size).max().unwrap_or(0)
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let doc: StructureDoc = serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))?;
        doc.into_structure()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&StructureDoc::from_structure(self)).expect("structure serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StructureDoc {
    universe: Vec<String>,
    #[serde(default)]
    relations: BTreeMap<String, RelationDoc>,
    #[serde(default)]
    weights: BTreeMap<String, WeightDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RelationDoc {
    arity: usize,
    #[serde(default)]
    tuples: Vec<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightDoc {
    arity: usize,
    #[serde(default)]
    entries: Vec<EntryDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryDoc {
    tuple: Vec<String>,
    value: String,
}

impl StructureDoc {
    fn into_structure(self) -> Result<WeightedStructure, FormatError> {
        let mut s = WeightedStructure::from_elements(self.universe)?;
        for (name, rel) in self.relations {
            if s.vocabulary.contains(&name) {
                return Err(FormatError::DuplicateSymbol(name));
            }
            s.add_relation(&name, rel.arity)?;
            for t in rel.tuples {
                let t = s.universe.resolve(&t)?;
                s.insert(&name, &t)?;
            }
        }
        for (name, w) in self.weights {
            if s.vocabulary.contains(&name) {
                return Err(FormatError::DuplicateSymbol(name));
            }
            s.add_function(&name, w.arity)?;
            for e in w.entries {
                let t = s.universe.resolve(&e.tuple)?;
                let v: Weight = e.value.parse()?;
                s.set_weight(&name, &t, v)?;
            }
        }
        Ok(s)
    }

    fn from_structure(s: &WeightedStructure) -> Self {
        let n = s.size();
        let relations = s
            .relations
            .iter()
            .map(|(name, r)| {
                let tuples = r.indices().map(|i| s.named_tuple(&tuple_at(n, r.arity(), i))).collect();
                (name.clone(), RelationDoc { arity: r.arity(), tuples })
            })
            .collect();
        let weights = s
            .functions
            .iter()
            .map(|(name, f)| {
                let entries = f
                    .values()
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| !v.is_bot())
                    .map(|(i, v)| EntryDoc { tuple: s.named_tuple(&tuple_at(n, f.arity(), i)), value: v.to_string() })
                    .collect();
                (name.clone(), WeightDoc { arity: f.arity(), entries })
            })
            .collect();
        StructureDoc { universe: s.universe.names().to_vec(), relations, weights }
    }
}

/// Variable bindings to universe elements.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    bindings: BTreeMap<String, Elem>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, var: &str, elem: Elem) -> Self {
        self.bindings.insert(var.to_string(), elem);
        self
    }

    pub fn set(&mut self, var: &str, elem: Elem) {
        self.bindings.insert(var.to_string(), elem);
    }

    pub fn get(&self, var: &str) -> Option<Elem> {
        self.bindings.get(var).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Elem)> {
        self.bindings.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Parses `x=a,y=b` against a universe.
    pub fn parse(text: &str, universe: &Universe) -> Result<Self, FormatError> {
        let mut out = Assignment::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (var, elem) = part
                .split_once('=')
                .ok_or_else(|| FormatError::Other(format!("binding `{part}` is not of the form var=element")))?;
            let e = universe.lookup(elem.trim()).ok_or_else(|| FormatError::UnknownElement(elem.trim().to_string()))?;
            out.set(var.trim(), e);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightedStructure {
        let mut s = WeightedStructure::from_elements(["a", "b", "c"]).unwrap();
        s.add_relation("E", 2).unwrap();
        s.add_function("w", 2).unwrap();
        s.add_relation("Flag", 0).unwrap();
        s.insert_named("E", &["a", "b"]).unwrap();
        s.set_weight_named("w", &["a", "b"], "3/4".parse().unwrap()).unwrap();
        s
    }

    #[test]
    fn lookups_are_total() {
        let s = sample();
        for t in all_tuples(3, 2) {
            let _ = s.weight("w", &t);
        }
        assert_eq!(s.weight_named("w", &["b", "a"]), Weight::Bot);
        assert_eq!(s.weight_named("w", &["a", "b"]), Weight::ratio(3, 4));
        assert!(s.contains("E", &[0, 1]));
        assert!(!s.contains("Flag", &[]));
    }

    #[test]
    fn json_roundtrip() {
        let s = sample();
        let back = WeightedStructure::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn json_missing_entries_default_to_bot() {
        let text = r#"{ "universe": ["x", "y"],
            "weights": { "f": { "arity": 1, "entries": [ { "tuple": ["x"], "value": "-2/6" } ] } } }"#;
        let s = WeightedStructure::from_json(text).unwrap();
        assert_eq!(s.weight_named("f", &["x"]), Weight::ratio(-1, 3));
        assert_eq!(s.weight_named("f", &["y"]), Weight::Bot);
    }

    #[test]
    fn json_rejects_bad_tuples() {
        let text = r#"{ "universe": ["x"], "relations": { "R": { "arity": 2, "tuples": [["x"]] } } }"#;
        assert!(matches!(WeightedStructure::from_json(text), Err(FormatError::TupleArity { .. })));
        let text = r#"{ "universe": ["x"], "relations": { "R": { "arity": 1, "tuples": [["z"]] } } }"#;
        assert!(matches!(WeightedStructure::from_json(text), Err(FormatError::UnknownElement(_))));
        let text = r#"{ "universe": ["x", "x"] }"#;
        assert!(matches!(WeightedStructure::from_json(text), Err(FormatError::DuplicateElement(_))));
    }

    #[test]
    fn tuple_enumeration_is_lexicographic() {
        let ts: Vec<_> = all_tuples(2, 2).collect();
        assert_eq!(ts, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(all_tuples(0, 0).count(), 1);
        assert_eq!(all_tuples(0, 2).count(), 0);
        for (i, t) in all_tuples(3, 3).enumerate() {
            assert_eq!(tuple_index(3, &t), i);
        }
    }

    #[test]
    fn vocabulary_names_are_unique_across_kinds() {
        let mut v = Vocabulary::new().rel("R", 1);
        assert!(v.insert("R", SymbolKind::Function, 1).is_err());
        let other = Vocabulary::new().fun("R", 1);
        assert!(v.union(&other).is_err());
    }
}
