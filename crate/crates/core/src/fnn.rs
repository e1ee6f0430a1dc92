//! Feedforward ReLU networks with linear outputs: exact evaluation,
//! encoding as a weighted structure, reduction, canonical ordering,
//! weight bounds, edge splitting and the hardness gadgets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::FnnError;
use crate::structure::{Elem, WeightedStructure};
use crate::syntax::builtins::fnn_vocabulary;
use crate::weight::{abs_numer, parse_rational, rational_to_string, Weight};

type Q = BigRational;

fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

fn pow2(k: usize) -> Q {
    Q::from_integer(BigInt::one() << k)
}

fn relu(x: Q) -> Q {
    if x.is_negative() {
        Q::zero()
    } else {
        x
    }
}

/// Depth, bias and nonzero weight sums from earlier classes.
type ClassKey = (usize, Q, Vec<(usize, Q)>);

/// A validated network. Node indices follow the order of `nodes`.
///
/// Invariants: acyclic; the sources are exactly the inputs and the sinks
/// exactly the outputs; inputs and outputs are disjoint and nonempty;
/// biases are present exactly on non-input nodes; at most one edge per pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fnn {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    bias: Vec<Option<Q>>,
    edges: BTreeMap<(usize, usize), Q>,
    incoming: Vec<Vec<(usize, Q)>>,
    topo: Vec<usize>,
}

impl Fnn {
    pub fn new(
        nodes: Vec<String>,
        inputs: Vec<String>,
        outputs: Vec<String>,
        biases: BTreeMap<String, Q>,
        edges: Vec<(String, String, Q)>,
    ) -> Result<Fnn, FnnError> {
        let bad = |m: String| FnnError::Invalid(m);
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(bad(format!("duplicate node `{n}`")));
            }
        }
        let look = |n: &str| index.get(n).copied().ok_or_else(|| bad(format!("unknown node `{n}`")));
        let ins = inputs.iter().map(|n| look(n)).collect::<Result<Vec<_>, _>>()?;
        let outs = outputs.iter().map(|n| look(n)).collect::<Result<Vec<_>, _>>()?;
        if ins.is_empty() || outs.is_empty() {
            return Err(bad("a network needs at least one input and one output".into()));
        }
        let in_set: BTreeSet<usize> = ins.iter().copied().collect();
        let out_set: BTreeSet<usize> = outs.iter().copied().collect();
        if in_set.len() != ins.len() || out_set.len() != outs.len() {
            return Err(bad("repeated node in the input or output order".into()));
        }
        if let Some(&v) = in_set.intersection(&out_set).next() {
            return Err(bad(format!("node `{}` is both input and output", nodes[v])));
        }
        let mut emap = BTreeMap::new();
        for (from, to, w) in edges {
            let (f, t) = (look(&from)?, look(&to)?);
            if f == t {
                return Err(bad(format!("self-loop on `{from}`")));
            }
            if emap.insert((f, t), w).is_some() {
                return Err(bad(format!("duplicate edge {from} -> {to}")));
            }
        }
        let mut bias = vec![None; nodes.len()];
        for (n, b) in biases {
            let i = look(&n)?;
            if in_set.contains(&i) {
                return Err(bad(format!("input node `{n}` has a bias")));
            }
            bias[i] = Some(b);
        }
        let mut incoming = vec![Vec::new(); nodes.len()];
        let mut outdeg = vec![0usize; nodes.len()];
        for ((f, t), w) in &emap {
            incoming[*t].push((*f, w.clone()));
            outdeg[*f] += 1;
        }
        for i in 0..nodes.len() {
            let source = incoming[i].is_empty();
            if source != in_set.contains(&i) {
                return Err(bad(if source {
                    format!("node `{}` has no incoming edge but is not an input", nodes[i])
                } else {
                    format!("input node `{}` has an incoming edge", nodes[i])
                }));
            }
            let sink = outdeg[i] == 0;
            if sink != out_set.contains(&i) {
                return Err(bad(if sink {
                    format!("node `{}` has no outgoing edge but is not an output", nodes[i])
                } else {
                    format!("output node `{}` has an outgoing edge", nodes[i])
                }));
            }
            if !in_set.contains(&i) && bias[i].is_none() {
                return Err(bad(format!("node `{}` has no bias", nodes[i])));
            }
        }
        let topo = topological(nodes.len(), &emap).ok_or_else(|| bad("the graph has a cycle".into()))?;
        Ok(Fnn { nodes, index, inputs: ins, outputs: outs, bias, edges: emap, incoming, topo })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input_names(&self) -> Vec<&str> {
        self.inputs.iter().map(|&i| self.nodes[i].as_str()).collect()
    }

    pub fn output_names(&self) -> Vec<&str> {
        self.outputs.iter().map(|&i| self.nodes[i].as_str()).collect()
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn bias(&self, node: &str) -> Option<&Q> {
        self.bias[*self.index.get(node)?].as_ref()
    }

    pub fn weight(&self, from: &str, to: &str) -> Option<&Q> {
        self.edges.get(&(*self.index.get(from)?, *self.index.get(to)?))
    }

    /// Edges as `(from, to, weight)` in node-index order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, &Q)> {
        self.edges.iter().map(|((f, t), w)| (self.nodes[*f].as_str(), self.nodes[*t].as_str(), w))
    }

    fn is_output(&self, i: usize) -> bool {
        self.outputs.contains(&i)
    }

    /// Exact network function: hidden nodes apply ReLU, outputs do not.
    pub fn forward(&self, x: &[Q]) -> Result<Vec<Q>, FnnError> {
        if x.len() != self.inputs.len() {
            return Err(FnnError::DimensionMismatch { expected: self.inputs.len(), found: x.len() });
        }
        let mut val: Vec<Q> = vec![Q::zero(); self.nodes.len()];
        for (k, &i) in self.inputs.iter().enumerate() {
            val[i] = x[k].clone();
        }
        for &v in &self.topo {
            let Some(b) = &self.bias[v] else { continue };
            let mut pre = b.clone();
            for (u, w) in &self.incoming[v] {
                pre += w * &val[*u];
            }
            val[v] = if self.is_output(v) { pre } else { relu(pre) };
        }
        Ok(self.outputs.iter().map(|&o| val[o].clone()).collect())
    }

    fn depths(&self) -> Vec<usize> {
        let mut d = vec![0usize; self.nodes.len()];
        for &v in &self.topo {
            d[v] = self.incoming[v].iter().map(|(u, _)| d[*u] + 1).max().unwrap_or(0);
        }
        d
    }

    /// Longest path length from an input; inputs have depth 0.
    pub fn node_depth(&self) -> BTreeMap<String, usize> {
        self.depths().into_iter().enumerate().map(|(i, d)| (self.nodes[i].clone(), d)).collect()
    }

    pub fn depth(&self) -> usize {
        self.depths().into_iter().max().unwrap_or(0)
    }

    /// Encoding over the vocabulary `E, In, Out, b, w, val`. `In` and `Out`
    /// are the reflexive linear orders given by the input and output order.
    /// `val` holds the given input values and is `⊥` elsewhere.
    pub fn to_weighted_structure(&self, val: Option<&[Q]>) -> Result<WeightedStructure, FnnError> {
        if let Some(v) = val {
            if v.len() != self.inputs.len() {
                return Err(FnnError::DimensionMismatch { expected: self.inputs.len(), found: v.len() });
            }
        }
        let invalid = |e: crate::error::FormatError| FnnError::Invalid(e.to_string());
        let mut s = WeightedStructure::from_elements(self.nodes.iter().cloned()).map_err(invalid)?;
        s.expand(&fnn_vocabulary()).map_err(invalid)?;
        let e = |i: usize| i as Elem;
        for &(f, t) in self.edges.keys() {
            s.insert("E", &[e(f), e(t)]).map_err(invalid)?;
        }
        for (rel, order) in [("In", &self.inputs), ("Out", &self.outputs)] {
            for (a, &u) in order.iter().enumerate() {
                for &v in &order[a..] {
                    s.insert(rel, &[e(u), e(v)]).map_err(invalid)?;
                }
            }
        }
        for (i, b) in self.bias.iter().enumerate() {
            if let Some(b) = b {
                s.set_weight("b", &[e(i)], Weight::Val(b.clone())).map_err(invalid)?;
            }
        }
        for ((f, t), w) in &self.edges {
            s.set_weight("w", &[e(*f), e(*t)], Weight::Val(w.clone())).map_err(invalid)?;
        }
        if let Some(v) = val {
            for (k, &i) in self.inputs.iter().enumerate() {
                s.set_weight("val", &[e(i)], Weight::Val(v[k].clone())).map_err(invalid)?;
            }
        }
        Ok(s)
    }

    /// `∼` as class indices, computed by induction on depth. Inputs and
    /// outputs are only equivalent to themselves; hidden nodes are
    /// equivalent iff they have equal depth, equal bias and equal summed
    /// weight from every earlier class.
    fn classes(&self) -> (Vec<usize>, usize) {
        let depth = self.depths();
        let mut class = vec![usize::MAX; self.nodes.len()];
        let mut next = 0;
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by_key(|&v| (depth[v], v));
        let mut seen: BTreeMap<ClassKey, usize> = BTreeMap::new();
        for v in order {
            if self.bias[v].is_none() || self.is_output(v) {
                class[v] = next;
                next += 1;
                continue;
            }
            let key = (depth[v], self.bias[v].clone().unwrap(), self.class_weights(v, &class));
            class[v] = *seen.entry(key).or_insert_with(|| {
                next += 1;
                next - 1
            });
        }
        (class, next)
    }

    /// `wt(C, v)` for every class `C` with a nonzero sum, sorted by class.
    fn class_weights(&self, v: usize, class: &[usize]) -> Vec<(usize, Q)> {
        let mut sums: BTreeMap<usize, Q> = BTreeMap::new();
        for (u, w) in &self.incoming[v] {
            *sums.entry(class[*u]).or_insert_with(Q::zero) += w;
        }
        sums.into_iter().filter(|(_, w)| !w.is_zero()).collect()
    }

    /// The quotient by `∼`. Each class is named after its first member in
    /// node order; the map sends every node to its class name.
    pub fn reduce(&self) -> Reduction {
        let (class, count) = self.classes();
        let mut rep = vec![usize::MAX; count];
        for v in 0..self.nodes.len() {
            if rep[class[v]] == usize::MAX {
                rep[class[v]] = v;
            }
        }
        let name = |c: usize| self.nodes[rep[c]].clone();
        let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &(f, t) in self.edges.keys() {
            pairs.insert((class[f], class[t]));
        }
        let edges = pairs
            .into_iter()
            .map(|(cf, ct)| {
                let r = rep[ct];
                let w = self.incoming[r].iter().filter(|(u, _)| class[*u] == cf).map(|(_, w)| w.clone()).sum::<Q>();
                (name(cf), name(ct), w)
            })
            .collect();
        let biases = (0..count).filter_map(|c| self.bias[rep[c]].clone().map(|b| (name(c), b))).collect();
        let net = Fnn::new(
            (0..count).map(name).collect(),
            self.inputs.iter().map(|&i| self.nodes[i].clone()).collect(),
            self.outputs.iter().map(|&i| self.nodes[i].clone()).collect(),
            biases,
            edges,
        )
        .expect("the quotient of a valid network is valid");
        let class_of = (0..self.nodes.len()).map(|v| (self.nodes[v].clone(), name(class[v]))).collect();
        Reduction { net, class_of }
    }

    /// The canonical quasi-order as a list of `∼`-classes: inputs in input
    /// order, hidden classes by depth, then bias, then the weight vector
    /// into all earlier classes, then outputs in output order.
    pub fn canonical_order(&self) -> Vec<Vec<String>> {
        let (class, count) = self.classes();
        let depth = self.depths();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
        for v in 0..self.nodes.len() {
            members[class[v]].push(v);
        }
        let mut placed: Vec<usize> = self.inputs.iter().map(|&i| class[i]).collect();
        let mut hidden: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (c, m) in members.iter().enumerate() {
            let v = m[0];
            if self.bias[v].is_some() && !self.is_output(v) {
                hidden.entry(depth[v]).or_default().push(c);
            }
        }
        for (_, layer) in hidden {
            let mut keyed: Vec<(Q, Vec<Q>, usize)> = layer
                .into_iter()
                .map(|c| {
                    let v = members[c][0];
                    let sums: BTreeMap<usize, Q> = self.class_weights(v, &class).into_iter().collect();
                    let vector = placed.iter().map(|p| sums.get(p).cloned().unwrap_or_else(Q::zero)).collect();
                    (self.bias[v].clone().unwrap(), vector, c)
                })
                .collect();
            keyed.sort();
            placed.extend(keyed.into_iter().map(|(_, _, c)| c));
        }
        placed.extend(self.outputs.iter().map(|&o| class[o]));
        placed.into_iter().map(|c| members[c].iter().map(|&v| self.nodes[v].clone()).collect()).collect()
    }

    /// Whether every bias and weight `r/q` (reduced form) satisfies
    /// `|r|, q ≤ P(n)` with `n` the node count, on this network or on its
    /// reduction. `coeffs` lists the coefficients of `P` from the highest
    /// degree down.
    pub fn check_p_bounded(&self, coeffs: &[u64], reduced: bool) -> PBound {
        let net = if reduced { self.reduce().net } else { self.clone() };
        let n = BigInt::from(net.len());
        let bound = coeffs.iter().fold(BigInt::zero(), |acc, &c| acc * &n + BigInt::from(c));
        let exceeds = |r: &Q| abs_numer(r) > bound || *r.denom() > bound;
        let mut witness = None;
        for (i, b) in net.bias.iter().enumerate() {
            if let Some(b) = b.as_ref().filter(|b| exceeds(b)) {
                witness = Some(BoundWitness::Bias { node: net.nodes[i].clone(), value: b.clone() });
                break;
            }
        }
        if witness.is_none() {
            witness = net.edges.iter().find(|(_, w)| exceeds(w)).map(|((f, t), w)| BoundWitness::Edge {
                from: net.nodes[*f].clone(),
                to: net.nodes[*t].clone(),
                value: w.clone(),
            });
        }
        PBound { ok: witness.is_none(), size: net.len(), bound, witness }
    }

    /// Replaces every edge of weight `a` by `a` parallel zero-bias nodes with
    /// unit weights. Preserves the function wherever the value entering
    /// each split edge is nonnegative.
    pub fn split_edges(&self) -> Result<Fnn, FnnError> {
        let mut b = Builder::from_net(self);
        b.edges.clear();
        for ((f, t), w) in &self.edges {
            let (from, to) = (&self.nodes[*f], &self.nodes[*t]);
            let unsupported = || FnnError::UnsupportedWeight {
                from: from.clone(),
                to: to.clone(),
                weight: rational_to_string(w),
            };
            if !w.is_integer() || !w.is_positive() {
                return Err(unsupported());
            }
            let a: usize = w.to_integer().try_into().map_err(|_| unsupported())?;
            for k in 1..=a {
                let mid = b.fresh(&format!("{from}>{to}#{k}"));
                b.node(&mid, Some(Q::zero()));
                b.edge(from, &mid, Q::one());
                b.edge(&mid, to, Q::one());
            }
        }
        b.build()
    }

    pub fn from_json(text: &str) -> Result<Fnn, FnnError> {
        let doc: FnnDoc = serde_json::from_str(text).map_err(|e| FnnError::Invalid(e.to_string()))?;
        let num = |s: &NumDoc| -> Result<Q, FnnError> {
            match s {
                NumDoc::Int(i) => Ok(q(*i)),
                NumDoc::Text(t) => parse_rational(t).map_err(|e| FnnError::Invalid(e.to_string())),
            }
        };
        let biases = doc.biases.iter().map(|(k, v)| Ok((k.clone(), num(v)?))).collect::<Result<_, FnnError>>()?;
        let edges = doc
            .edges
            .iter()
            .map(|e| Ok((e.from.clone(), e.to.clone(), num(&e.weight)?)))
            .collect::<Result<_, FnnError>>()?;
        Fnn::new(doc.nodes, doc.input_order, doc.output_order, biases, edges)
    }

    pub fn to_json(&self) -> String {
        let doc = FnnDoc {
            nodes: self.nodes.clone(),
            input_order: self.input_names().into_iter().map(String::from).collect(),
            output_order: self.output_names().into_iter().map(String::from).collect(),
            biases: self
                .bias
                .iter()
                .enumerate()
                .filter_map(|(i, b)| b.as_ref().map(|b| (self.nodes[i].clone(), NumDoc::Text(rational_to_string(b)))))
                .collect(),
            edges: self
                .edges()
                .map(|(f, t, w)| EdgeDoc { from: f.into(), to: t.into(), weight: NumDoc::Text(rational_to_string(w)) })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("network serializes")
    }
}

fn topological(n: usize, edges: &BTreeMap<(usize, usize), Q>) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    let mut out = vec![Vec::new(); n];
    for &(f, t) in edges.keys() {
        indeg[t] += 1;
        out[f].push(t);
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &t in &out[v] {
            indeg[t] -= 1;
            if indeg[t] == 0 {
                ready.insert(t);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// A reduced network and the map from original nodes to class nodes.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub net: Fnn,
    pub class_of: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoundWitness {
    Bias { node: String, value: Q },
    Edge { from: String, to: String, value: Q },
}

impl fmt::Display for BoundWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundWitness::Bias { node, value } => write!(f, "bias of {node} = {}", rational_to_string(value)),
            BoundWitness::Edge { from, to, value } => write!(f, "weight {from} -> {to} = {}", rational_to_string(value)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PBound {
    pub ok: bool,
    /// Node count the polynomial was evaluated at.
    pub size: usize,
    pub bound: BigInt,
    pub witness: Option<BoundWitness>,
}

#[derive(Serialize, Deserialize)]
struct FnnDoc {
    nodes: Vec<String>,
    #[serde(rename = "inputOrder", alias = "inputs")]
    input_order: Vec<String>,
    #[serde(rename = "outputOrder", alias = "outputs")]
    output_order: Vec<String>,
    #[serde(default)]
    biases: BTreeMap<String, NumDoc>,
    #[serde(default)]
    edges: Vec<EdgeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NumDoc {
    Int(i64),
    Text(String),
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    from: String,
    to: String,
    weight: NumDoc,
}

/// Incremental construction; repeated edges accumulate their weights.
#[derive(Clone, Debug, Default)]
pub struct Builder {
    nodes: Vec<String>,
    names: BTreeSet<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    biases: BTreeMap<String, Q>,
    edges: BTreeMap<(String, String), Q>,
    edge_order: Vec<(String, String)>,
}

impl Builder {
    pub fn new() -> Self {
        Self::default()
    }

    fn from_net(net: &Fnn) -> Self {
        let mut b = Builder::new();
        for (i, n) in net.nodes.iter().enumerate() {
            b.node(n, net.bias[i].clone());
        }
        b.inputs = net.input_names().into_iter().map(String::from).collect();
        b.outputs = net.output_names().into_iter().map(String::from).collect();
        b
    }

    fn fresh(&self, base: &str) -> String {
        let mut name = base.to_string();
        let mut k = 1;
        while self.names.contains(&name) {
            name = format!("{base}'{k}");
            k += 1;
        }
        name
    }

    /// Adds a node; `None` bias marks an input.
    pub fn node(&mut self, name: &str, bias: Option<Q>) -> &mut Self {
        if self.names.insert(name.to_string()) {
            self.nodes.push(name.to_string());
        }
        match bias {
            Some(b) => {
                self.biases.insert(name.to_string(), b);
            }
            None => self.inputs.push(name.to_string()),
        }
        self
    }

    pub fn output(&mut self, name: &str, bias: Q) -> &mut Self {
        self.node(name, Some(bias));
        self.outputs.push(name.to_string());
        self
    }

    pub fn edge(&mut self, from: &str, to: &str, w: Q) -> &mut Self {
        let key = (from.to_string(), to.to_string());
        match self.edges.get_mut(&key) {
            Some(acc) => *acc += w,
            None => {
                self.edge_order.push(key.clone());
                self.edges.insert(key, w);
            }
        }
        self
    }

    /// Drops non-output, non-input nodes without outgoing edges until none
    /// remain.
    fn prune(&mut self) {
        loop {
            let has_out: BTreeSet<&String> = self.edges.keys().map(|(f, _)| f).collect();
            let dead: BTreeSet<String> = self
                .nodes
                .iter()
                .filter(|n| !has_out.contains(n) && !self.outputs.contains(n) && !self.inputs.contains(n))
                .cloned()
                .collect();
            if dead.is_empty() {
                return;
            }
            self.nodes.retain(|n| !dead.contains(n));
            self.edges.retain(|(_, t), _| !dead.contains(t));
            self.edge_order.retain(|(_, t)| !dead.contains(t));
            for d in &dead {
                self.biases.remove(d);
            }
        }
    }

    pub fn build(&self) -> Result<Fnn, FnnError> {
        let edges = self.edge_order.iter().map(|k| (k.0.clone(), k.1.clone(), self.edges[k].clone())).collect();
        Fnn::new(self.nodes.clone(), self.inputs.clone(), self.outputs.clone(), self.biases.clone(), edges)
    }
}

/// Appends the hidden part of the bit extractor: for each `i ∈ 1..=n` the
/// nodes `h{i}a = ReLU(z_i)` and `h{i}b = ReLU(z_i − 1)` with
/// `z_i = 2^n·x − 2^{n−i} + 1 − Σ_{j<i} 2^{n−j}·(h{j}a − h{j}b)`, so that
/// `h{i}a − h{i}b = lsig(z_i)` is the i-th bit.
fn split_layers(b: &mut Builder, x: &str, n: usize) -> Vec<(String, String)> {
    let mut bits: Vec<(String, String)> = Vec::new();
    for i in 1..=n {
        let (ha, hb) = (format!("h{i}a"), format!("h{i}b"));
        b.node(&ha, Some(Q::one() - pow2(n - i)));
        b.node(&hb, Some(-pow2(n - i)));
        for h in [&ha, &hb] {
            b.edge(x, h, pow2(n));
            for (j, (pa, pb)) in bits.iter().enumerate() {
                b.edge(pa, h, -pow2(n - j - 1));
                b.edge(pb, h, pow2(n - j - 1));
            }
        }
        bits.push((ha, hb));
    }
    bits
}

/// The bit extractor in `K(1, n)`: on `x = (0.a_1…a_n)_2` output `i` is
/// `a_i`, and every output lies in `[0, 1]` for every `x`.
pub fn gen_split_network(n: usize) -> Result<Fnn, FnnError> {
    if n == 0 {
        return Err(FnnError::Invalid("the bit extractor needs n ≥ 1".into()));
    }
    let mut b = Builder::new();
    b.node("x", None);
    let bits = split_layers(&mut b, "x", n);
    for (i, (ha, hb)) in bits.iter().enumerate() {
        let out = format!("out{}", i + 1);
        b.output(&out, Q::zero());
        b.edge(ha, &out, Q::one());
        b.edge(hb, &out, -Q::one());
    }
    b.build()
}

/// A CNF with clauses of exactly three literals over variables `1..=n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnfFormula {
    num_vars: usize,
    clauses: Vec<[i64; 3]>,
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<[i64; 3]>) -> Result<Self, FnnError> {
        if clauses.is_empty() {
            return Err(FnnError::BadCnf("no clauses".into()));
        }
        for c in &clauses {
            for &l in c {
                if l == 0 || l.unsigned_abs() as usize > num_vars {
                    return Err(FnnError::BadCnf(format!("literal {l} outside 1..={num_vars}")));
                }
            }
        }
        Ok(CnfFormula { num_vars, clauses })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn clauses(&self) -> &[[i64; 3]] {
        &self.clauses
    }

    /// `assignment[k-1]` is the value of variable `k`.
    pub fn satisfied_by(&self, assignment: &[bool]) -> bool {
        self.clauses
            .iter()
            .all(|c| c.iter().any(|&l| assignment[l.unsigned_abs() as usize - 1] == (l > 0)))
    }

    pub fn is_satisfiable(&self) -> bool {
        (0..1u64 << self.num_vars).any(|m| self.satisfied_by(&bits_of(m, self.num_vars)))
    }

    /// DIMACS with a `p cnf` header. Shorter clauses are padded by
    /// repeating their last literal; longer ones are rejected.
    pub fn from_dimacs(text: &str) -> Result<Self, FnnError> {
        let bad = |m: String| FnnError::BadCnf(m);
        let mut header: Option<(usize, usize)> = None;
        let mut clauses = Vec::new();
        let mut cur: Vec<i64> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
                continue;
            }
            if line.starts_with('p') {
                let parts: Vec<&str> = line.split_whitespace().collect();
                match parts.as_slice() {
                    ["p", "cnf", v, c] => {
                        let v = v.parse().map_err(|_| bad(format!("bad header `{line}`")))?;
                        let c = c.parse().map_err(|_| bad(format!("bad header `{line}`")))?;
                        header = Some((v, c));
                    }
                    _ => return Err(bad(format!("bad header `{line}`"))),
                }
                continue;
            }
            if header.is_none() {
                return Err(bad("clause before the `p cnf` header".into()));
            }
            for tok in line.split_whitespace() {
                let l: i64 = tok.parse().map_err(|_| bad(format!("bad literal `{tok}`")))?;
                if l != 0 {
                    cur.push(l);
                    continue;
                }
                let clause = std::mem::take(&mut cur);
                clauses.push(pad_clause(&clause)?);
            }
        }
        if !cur.is_empty() {
            clauses.push(pad_clause(&cur)?);
        }
        let (vars, count) = header.ok_or_else(|| bad("missing `p cnf` header".into()))?;
        if count != clauses.len() {
            return Err(bad(format!("header announces {count} clauses, found {}", clauses.len())));
        }
        CnfFormula::new(vars, clauses)
    }

    pub fn to_dimacs(&self) -> String {
        let mut s = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            s.push_str(&format!("{} {} {} 0\n", c[0], c[1], c[2]));
        }
        s
    }
}

fn pad_clause(c: &[i64]) -> Result<[i64; 3], FnnError> {
    match *c {
        [] => Err(FnnError::BadCnf("empty clause".into())),
        [a] => Ok([a, a, a]),
        [a, b] => Ok([a, b, b]),
        [a, b, c] => Ok([a, b, c]),
        _ => Err(FnnError::BadCnf(format!("clause of width {} exceeds 3", c.len()))),
    }
}

fn bits_of(mask: u64, n: usize) -> Vec<bool> {
    (0..n).map(|k| mask >> k & 1 == 1).collect()
}

/// `Σ_k a_k·2^{−k}`: the input that encodes an assignment.
pub fn encode_assignment(assignment: &[bool]) -> Q {
    assignment
        .iter()
        .enumerate()
        .filter(|(_, &a)| a)
        .map(|(k, _)| Q::new(BigInt::one(), BigInt::one() << (k + 1)))
        .sum()
}

/// The hardness gadget in `K(1, 1)`: bit extractor, then
/// `f_φ = min over clauses of max over literals`, then
/// `ReLU(−1 + 2·f_φ)` into a unit-weight linear output. The network
/// function is identically 0 iff `φ` is unsatisfiable.
pub fn gen_3sat_network(phi: &CnfFormula) -> Result<Fnn, FnnError> {
    let mut b = Builder::new();
    b.node("x", None);
    let bits = split_layers(&mut b, "x", phi.num_vars);
    let mut literal: BTreeMap<i64, String> = BTreeMap::new();
    let mut lit = |b: &mut Builder, l: i64| -> String {
        if let Some(n) = literal.get(&l) {
            return n.clone();
        }
        let (ha, hb) = &bits[l.unsigned_abs() as usize - 1];
        let name = if l > 0 { format!("x{l}") } else { format!("not_x{}", -l) };
        // ReLU(bit) or ReLU(1 − bit); the argument lies in [0, 1].
        let (bias, sign) = if l > 0 { (Q::zero(), Q::one()) } else { (Q::one(), -Q::one()) };
        b.node(&name, Some(bias));
        b.edge(ha, &name, sign.clone());
        b.edge(hb, &name, -sign);
        literal.insert(l, name.clone());
        name
    };
    let mut counter = 0;
    let mut next = |tag: &str| {
        counter += 1;
        format!("{tag}{counter}")
    };
    // max(a, c) = ReLU(a + ReLU(c − a)), exact for a, c ≥ 0.
    let max = |b: &mut Builder, a: &str, c: &str, next: &mut dyn FnMut(&str) -> String| -> String {
        let r = next("dmax");
        b.node(&r, Some(Q::zero()));
        b.edge(c, &r, Q::one());
        b.edge(a, &r, -Q::one());
        let m = next("max");
        b.node(&m, Some(Q::zero()));
        b.edge(a, &m, Q::one());
        b.edge(&r, &m, Q::one());
        m
    };
    // min(a, c) = ReLU(a − ReLU(a − c)), exact for a, c ≥ 0.
    let min = |b: &mut Builder, a: &str, c: &str, next: &mut dyn FnMut(&str) -> String| -> String {
        let s = next("dmin");
        b.node(&s, Some(Q::zero()));
        b.edge(a, &s, Q::one());
        b.edge(c, &s, -Q::one());
        let m = next("min");
        b.node(&m, Some(Q::zero()));
        b.edge(a, &m, Q::one());
        b.edge(&s, &m, -Q::one());
        m
    };
    let mut acc: Option<String> = None;
    for clause in phi.clauses() {
        let ls: Vec<String> = clause.iter().map(|&l| lit(&mut b, l)).collect();
        let m12 = max(&mut b, &ls[0], &ls[1], &mut next);
        let c = max(&mut b, &m12, &ls[2], &mut next);
        acc = Some(match acc {
            None => c,
            Some(a) => min(&mut b, &a, &c, &mut next),
        });
    }
    let f = acc.expect("a CNF has at least one clause");
    b.node("gate", Some(-Q::one()));
    b.edge(&f, "gate", q(2));
    b.output("y", Q::zero());
    b.edge("gate", "y", Q::one());
    b.prune();
    b.build()
}

/// One edge of weight `a` from the input to the output.
pub fn single_edge(a: u64) -> Fnn {
    let mut b = Builder::new();
    b.node("in", None).output("out", Q::zero()).edge("in", "out", Q::from_integer(BigInt::from(a)));
    b.build().expect("single edge network")
}

/// The edge split into `a` parallel zero-bias hidden nodes with unit weights.
pub fn split_edge(a: u64) -> Fnn {
    single_edge(a).split_edges().expect("positive natural weight")
}
