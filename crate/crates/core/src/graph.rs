//! Labeled graphs of graph-manifolds.
//!
//! A labeled graph carries a rational charge `k_v` per vertex and a positive
//! intersection index `b_w` per edge pair. Oriented edges come in pairs
//! `(w, -w)` exchanged by a fixed-point-free involution; `∂₋w` is the tail,
//! `∂₊w` the head, and `∂v = { w : ∂₋w = v }` is the flag set of `v`. Loops
//! are allowed and contribute both orientations to the flag set of their
//! vertex.
//!
//! Charges and indices are exact: charge arithmetic stays in `Rational64`
//! and floating point only enters downstream modules.

use num_rational::Rational64;
use std::fmt;
use thiserror::Error;

/// One orientation of an edge pair. `pair` indexes the pair, `reversed`
/// selects the orientation opposite to the stored (tail → head) one.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct OrientedEdge {
    pub pair: usize,
    pub reversed: bool,
}

impl OrientedEdge {
    pub fn forward(pair: usize) -> Self {
        OrientedEdge {
            pair,
            reversed: false,
        }
    }

    /// The involution `w ↦ -w`.
    pub fn opposite(self) -> Self {
        OrientedEdge {
            pair: self.pair,
            reversed: !self.reversed,
        }
    }

    /// Dense index in `0..2m`, usable for per-flag storage.
    pub fn index(self) -> usize {
        2 * self.pair + usize::from(self.reversed)
    }

    pub fn from_index(idx: usize) -> Self {
        OrientedEdge {
            pair: idx / 2,
            reversed: idx % 2 == 1,
        }
    }
}

impl fmt::Display for OrientedEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.reversed {
            write!(f, "-#{}", self.pair)
        } else {
            write!(f, "#{}", self.pair)
        }
    }
}

/// Gluing matrix `[[a, b], [c, d]]` of a flag, with `det = ad − bc = −1`
/// and `b ≠ 0`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct GluingMatrix {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("gluing matrix [[{a},{b}],[{c},{d}]] has determinant {det}, expected -1")]
    BadDeterminant {
        a: i64,
        b: i64,
        c: i64,
        d: i64,
        det: i64,
    },
    #[error("gluing matrix has b = 0")]
    ZeroIntersection,
    #[error("edge {edge} has no gluing matrix")]
    MissingGluing { edge: String },
    #[error("invalid gluing on flag {flag}: {source}")]
    InvalidFlag {
        flag: String,
        source: Box<GraphError>,
    },
    #[error("unknown vertex id {0:?}")]
    UnknownVertex(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
}

impl GluingMatrix {
    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Result<Self, GraphError> {
        let det = a * d - b * c;
        if det != -1 {
            return Err(GraphError::BadDeterminant { a, b, c, d, det });
        }
        if b == 0 {
            return Err(GraphError::ZeroIntersection);
        }
        Ok(GluingMatrix { a, b, c, d })
    }

    /// Matrix of the reversed flag, `g_{-w} = g_w^{-1}`. For `det = −1` the
    /// inverse is `[[-d, b], [c, -a]]`.
    pub fn inverse(self) -> Self {
        GluingMatrix {
            a: -self.d,
            b: self.b,
            c: self.c,
            d: -self.a,
        }
    }

    /// Charge contribution `d/b` of this flag at its tail vertex.
    pub fn charge_term(self) -> Rational64 {
        Rational64::new(self.d, self.b)
    }
}

/// Charges `k0 = d/b`, `k1 = −a/b` of the dipole with a single gluing map.
pub fn dipole_charges(m: GluingMatrix) -> Result<(Rational64, Rational64), GraphError> {
    // Re-validate: callers may have constructed the matrix literally.
    let m = GluingMatrix::new(m.a, m.b, m.c, m.d)?;
    Ok((Rational64::new(m.d, m.b), Rational64::new(-m.a, m.b)))
}

/// Charge of a toral sum along a conjoined vertex: `k_v = k_{v'} + k_{v''}`.
pub fn toral_sum_charge(k_left: Rational64, k_right: Rational64) -> Rational64 {
    k_left + k_right
}

/// A labeled graph: vertices with exact rational charges, edge pairs with
/// positive intersection indices, and optional gluing matrices.
///
/// The structural invariants (fixed-point-free involution, `∂₋(−w) = ∂₊(w)`,
/// flag partition) hold by construction; the numeric ones (`b_w = b_{−w} > 0`)
/// are checked by [`LabeledGraph::validate`].
#[derive(Clone, Debug)]
pub struct LabeledGraph {
    vertex_ids: Vec<String>,
    edge_ids: Vec<String>,
    tails: Vec<usize>,
    heads: Vec<usize>,
    /// Indices per oriented edge; `index[2e]` belongs to the stored
    /// orientation of pair `e`, `index[2e+1]` to the reversed one.
    index: Vec<i64>,
    charge: Vec<Rational64>,
    gluing: Vec<Option<GluingMatrix>>,
    /// Flags (outgoing oriented edges) per vertex.
    flags: Vec<Vec<OrientedEdge>>,
}

/// One invariant violation found by [`LabeledGraph::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// `b_w ≤ 0`: the index must be a positive integer.
    NonPositiveIndex { edge: String, value: i64 },
    /// `b_{−w} ≠ b_w`.
    MismatchedPairIndex {
        edge: String,
        forward: i64,
        backward: i64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveIndex { edge, value } => {
                write!(f, "edge {edge}: index must be positive, got {value}")
            }
            Violation::MismatchedPairIndex {
                edge,
                forward,
                backward,
            } => {
                write!(
                    f,
                    "edge {edge}: b_(-w)={backward} differs from b_w={forward}"
                )
            }
        }
    }
}

/// Outcome of validating a labeled graph; empty iff the graph is valid.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Incremental construction of a [`LabeledGraph`].
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    vertex_ids: Vec<String>,
    charges: Vec<Rational64>,
    edge_ids: Vec<String>,
    tails: Vec<usize>,
    heads: Vec<usize>,
    index: Vec<i64>,
    gluing: Vec<Option<GluingMatrix>>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex(&mut self, id: impl Into<String>, charge: Rational64) -> usize {
        self.vertex_ids.push(id.into());
        self.charges.push(charge);
        self.vertex_ids.len() - 1
    }

    /// Adds an edge pair with equal indices on both orientations.
    pub fn edge(&mut self, id: impl Into<String>, tail: usize, head: usize, b: i64) -> usize {
        self.edge_with_pair_indices(id, tail, head, b, b)
    }

    /// Adds an edge pair with explicit per-orientation indices. Only useful
    /// for exercising the validator; well-formed graphs have them equal.
    pub fn edge_with_pair_indices(
        &mut self,
        id: impl Into<String>,
        tail: usize,
        head: usize,
        b_forward: i64,
        b_backward: i64,
    ) -> usize {
        self.edge_ids.push(id.into());
        self.tails.push(tail);
        self.heads.push(head);
        self.index.push(b_forward);
        self.index.push(b_backward);
        self.gluing.push(None);
        self.edge_ids.len() - 1
    }

    pub fn gluing(&mut self, pair: usize, m: GluingMatrix) -> &mut Self {
        self.gluing[pair] = Some(m);
        self
    }

    pub fn build(self) -> LabeledGraph {
        let mut flags = vec![Vec::new(); self.vertex_ids.len()];
        for e in 0..self.edge_ids.len() {
            flags[self.tails[e]].push(OrientedEdge::forward(e));
            flags[self.heads[e]].push(OrientedEdge::forward(e).opposite());
        }
        LabeledGraph {
            vertex_ids: self.vertex_ids,
            edge_ids: self.edge_ids,
            tails: self.tails,
            heads: self.heads,
            index: self.index,
            charge: self.charges,
            gluing: self.gluing,
            flags,
        }
    }
}

impl LabeledGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::new()
    }

    /// Two vertices joined by one edge pair.
    pub fn dipole(k0: Rational64, k1: Rational64, b: i64) -> Self {
        let mut g = GraphBuilder::new();
        let v0 = g.vertex("v0", k0);
        let v1 = g.vertex("v1", k1);
        g.edge("e0", v0, v1, b);
        g.build()
    }

    /// A single vertex with a loop.
    pub fn monopole(k: Rational64, b: i64) -> Self {
        let mut g = GraphBuilder::new();
        let v = g.vertex("v0", k);
        g.edge("e0", v, v, b);
        g.build()
    }

    /// Path `v0 — v1 — v2` with two edge pairs, the paper's smallest
    /// non-elementary graph.
    pub fn triplet(k: [Rational64; 3], b: [i64; 2]) -> Self {
        let mut g = GraphBuilder::new();
        let v0 = g.vertex("v0", k[0]);
        let v1 = g.vertex("v1", k[1]);
        let v2 = g.vertex("v2", k[2]);
        g.edge("e0", v0, v1, b[0]);
        g.edge("e1", v1, v2, b[1]);
        g.build()
    }

    /// Circle with `charges.len()` vertices, edge `e_i` joining `v_i` to
    /// `v_{i+1 mod n}`.
    pub fn circle(charges: &[Rational64], b: i64) -> Self {
        let mut g = GraphBuilder::new();
        let vs: Vec<usize> = charges
            .iter()
            .enumerate()
            .map(|(i, &k)| g.vertex(format!("v{i}"), k))
            .collect();
        let n = vs.len();
        for i in 0..n {
            g.edge(format!("e{i}"), vs[i], vs[(i + 1) % n], b);
        }
        g.build()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn pair_count(&self) -> usize {
        self.edge_ids.len()
    }

    /// Number of oriented edges, `|W| = 2 · pair_count`.
    pub fn oriented_count(&self) -> usize {
        2 * self.edge_ids.len()
    }

    pub fn vertex_id(&self, v: usize) -> &str {
        &self.vertex_ids[v]
    }

    pub fn edge_id(&self, pair: usize) -> &str {
        &self.edge_ids[pair]
    }

    pub fn vertex_by_id(&self, id: &str) -> Option<usize> {
        self.vertex_ids.iter().position(|s| s == id)
    }

    pub fn pair_by_id(&self, id: &str) -> Option<usize> {
        self.edge_ids.iter().position(|s| s == id)
    }

    /// Tail vertex `∂₋w`.
    pub fn tail(&self, w: OrientedEdge) -> usize {
        if w.reversed {
            self.heads[w.pair]
        } else {
            self.tails[w.pair]
        }
    }

    /// Head vertex `∂₊w`.
    pub fn head(&self, w: OrientedEdge) -> usize {
        self.tail(w.opposite())
    }

    /// Flag set `∂v` of outgoing oriented edges; a loop appears twice.
    pub fn flags(&self, v: usize) -> &[OrientedEdge] {
        &self.flags[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.flags[v].len()
    }

    pub fn charge(&self, v: usize) -> Rational64 {
        self.charge[v]
    }

    pub fn charges(&self) -> &[Rational64] {
        &self.charge
    }

    pub fn set_charge(&mut self, v: usize, k: Rational64) {
        self.charge[v] = k;
    }

    /// Intersection index `b_w` of an oriented edge.
    pub fn index_of(&self, w: OrientedEdge) -> i64 {
        self.index[w.index()]
    }

    /// Intersection index of a pair (both orientations agree on valid graphs).
    pub fn index_of_pair(&self, pair: usize) -> i64 {
        self.index[2 * pair]
    }

    pub fn gluing_of(&self, pair: usize) -> Option<GluingMatrix> {
        self.gluing[pair]
    }

    pub fn set_gluing(&mut self, pair: usize, m: GluingMatrix) {
        self.gluing[pair] = Some(m);
    }

    pub fn oriented_edges(&self) -> impl Iterator<Item = OrientedEdge> + '_ {
        (0..self.oriented_count()).map(OrientedEdge::from_index)
    }

    pub fn pairs(&self) -> impl Iterator<Item = usize> {
        0..self.edge_ids.len()
    }

    /// Human-readable name of an oriented edge, `e0` or `-e0`.
    pub fn oriented_id(&self, w: OrientedEdge) -> String {
        if w.reversed {
            format!("-{}", self.edge_ids[w.pair])
        } else {
            self.edge_ids[w.pair].clone()
        }
    }

    /// Checks the numeric invariants: `b_w > 0` and `b_{−w} = b_w`.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for e in 0..self.edge_ids.len() {
            let (fwd, bwd) = (self.index[2 * e], self.index[2 * e + 1]);
            for value in [fwd, bwd] {
                if value <= 0 {
                    violations.push(Violation::NonPositiveIndex {
                        edge: self.edge_ids[e].clone(),
                        value,
                    });
                }
            }
            if fwd != bwd {
                violations.push(Violation::MismatchedPairIndex {
                    edge: self.edge_ids[e].clone(),
                    forward: fwd,
                    backward: bwd,
                });
            }
        }
        ValidationReport { violations }
    }

    /// Derives charges and indices from per-flag gluing matrices:
    /// `k_v = Σ_{w∈∂v} d_w / b_w` exactly, `b_w = |b-entry|`. The stored
    /// matrix belongs to the forward orientation; the reversed flag uses its
    /// inverse. Overwrites the charge and index labels in place.
    pub fn charges_from_gluings(&mut self) -> Result<(), GraphError> {
        let mut new_charge = vec![Rational64::new(0, 1); self.vertex_count()];
        let mut new_index = self.index.clone();
        for e in 0..self.edge_ids.len() {
            let m = self.gluing[e].ok_or_else(|| GraphError::MissingGluing {
                edge: self.edge_ids[e].clone(),
            })?;
            let m = GluingMatrix::new(m.a, m.b, m.c, m.d).map_err(|source| {
                GraphError::InvalidFlag {
                    flag: self.edge_ids[e].clone(),
                    source: Box::new(source),
                }
            })?;
            let rev = m.inverse();
            new_charge[self.tails[e]] += m.charge_term();
            new_charge[self.heads[e]] += rev.charge_term();
            new_index[2 * e] = m.b.abs();
            new_index[2 * e + 1] = rev.b.abs();
        }
        self.charge = new_charge;
        self.index = new_index;
        Ok(())
    }

    /// Connected components over edge pairs; returns a component id per
    /// vertex.
    pub fn components(&self) -> Vec<usize> {
        self.components_over(|_| true)
    }

    /// Components of the subgraph keeping only pairs accepted by `keep`.
    pub fn components_over(&self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        let n = self.vertex_count();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &w in self.flags(v) {
                    if !keep(w.pair) {
                        continue;
                    }
                    let u = self.head(w);
                    if comp[u] == usize::MAX {
                        comp[u] = next;
                        stack.push(u);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// A fundamental system of circuits spanning the cycle space: one
    /// oriented head-to-tail circuit per non-tree edge of a spanning forest.
    /// Trees yield an empty list; a loop yields a length-1 circuit.
    pub fn cycle_basis(&self) -> Vec<Vec<OrientedEdge>> {
        let n = self.vertex_count();
        // parent[v] = oriented edge of the forest pointing from parent(v) to v
        let mut parent: Vec<Option<OrientedEdge>> = vec![None; n];
        let mut depth = vec![0usize; n];
        let mut visited = vec![false; n];
        let mut tree_pair = vec![false; self.pair_count()];
        let mut circuits = Vec::new();

        for root in 0..n {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            let mut queue = std::collections::VecDeque::from([root]);
            while let Some(v) = queue.pop_front() {
                for &w in self.flags(v) {
                    let u = self.head(w);
                    if !visited[u] {
                        visited[u] = true;
                        parent[u] = Some(w);
                        depth[u] = depth[v] + 1;
                        tree_pair[w.pair] = true;
                        queue.push_back(u);
                    }
                }
            }
        }

        for e in 0..self.pair_count() {
            if tree_pair[e] {
                continue;
            }
            let w = OrientedEdge::forward(e);
            let (tail, head) = (self.tail(w), self.head(w));
            // Circuit: w followed by the tree path head -> tail.
            let mut circuit = vec![w];
            let (mut a, mut b) = (head, tail);
            let mut up_from_head = Vec::new(); // edges walking head -> lca
            let mut down_to_tail = Vec::new(); // edges walking lca -> tail, reversed later
            while depth[a] > depth[b] {
                let p = parent[a].expect("non-root has a parent");
                up_from_head.push(p.opposite());
                a = self.tail(p);
            }
            while depth[b] > depth[a] {
                let p = parent[b].expect("non-root has a parent");
                down_to_tail.push(p);
                b = self.tail(p);
            }
            while a != b {
                let pa = parent[a].expect("same component");
                let pb = parent[b].expect("same component");
                up_from_head.push(pa.opposite());
                down_to_tail.push(pb);
                a = self.tail(pa);
                b = self.tail(pb);
            }
            circuit.extend(up_from_head);
            down_to_tail.reverse();
            circuit.extend(down_to_tail);
            circuits.push(circuit);
        }
        circuits
    }
}
