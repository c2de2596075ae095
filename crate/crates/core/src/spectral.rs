//! Finite spectral triple over a labeled graph.
//!
//! The Hilbert space is ℂ^W with one two-dimensional block per edge pair,
//! ordered (w, −w). On a block with length parameter Δs the unit length
//! operator and the Dirac operator are
//!
//!   ds = [[0, −iΔs], [iΔs, 0]],     D = ds⁻¹ = [[0, −i/Δs], [i/Δs, 0]],
//!
//! the algebra of flag functions acts diagonally, and the spectral
//! differential is `da = i[D, π(a)]`. Since `ds² = Δs²·1` per block, `ds²`
//! commutes with the algebra, which is the standing hypothesis used by the
//! form calculus. All operators stay blockwise; nothing materializes a
//! `|W|×|W|` matrix.

use crate::graph::{LabeledGraph, OrientedEdge};
use num_complex::Complex64;
use thiserror::Error;

pub type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// A 2×2 complex block, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block(pub [[C; 2]; 2]);

impl Block {
    pub fn zero() -> Self {
        Block([[C::ZERO; 2]; 2])
    }

    pub fn identity() -> Self {
        Block([[C::ONE, C::ZERO], [C::ZERO, C::ONE]])
    }

    pub fn diag(a: C, b: C) -> Self {
        Block([[a, C::ZERO], [C::ZERO, b]])
    }

    pub fn off_diag(upper: C, lower: C) -> Self {
        Block([[C::ZERO, upper], [lower, C::ZERO]])
    }

    pub fn mul(&self, rhs: &Block) -> Block {
        let mut out = Block::zero();
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] = self.0[i][0] * rhs.0[0][j] + self.0[i][1] * rhs.0[1][j];
            }
        }
        out
    }

    pub fn add(&self, rhs: &Block) -> Block {
        let mut out = *self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] += rhs.0[i][j];
            }
        }
        out
    }

    pub fn sub(&self, rhs: &Block) -> Block {
        let mut out = *self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] -= rhs.0[i][j];
            }
        }
        out
    }

    pub fn scale(&self, s: C) -> Block {
        let mut out = *self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] *= s;
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Block {
        Block([
            [self.0[0][0].conj(), self.0[1][0].conj()],
            [self.0[0][1].conj(), self.0[1][1].conj()],
        ])
    }

    pub fn commutator(&self, rhs: &Block) -> Block {
        self.mul(rhs).sub(&rhs.mul(self))
    }

    pub fn anticommutator(&self, rhs: &Block) -> Block {
        self.mul(rhs).add(&rhs.mul(self))
    }

    pub fn trace(&self) -> C {
        self.0[0][0] + self.0[1][1]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    /// Operator (spectral) norm: largest singular value.
    pub fn op_norm(&self) -> f64 {
        let ata = self.adjoint().mul(self);
        // Hermitian 2×2: eigenvalues from trace and determinant.
        let tr = ata.trace().re;
        let det = (ata.0[0][0] * ata.0[1][1] - ata.0[0][1] * ata.0[1][0]).re;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        (tr / 2.0 + disc).max(0.0).sqrt()
    }

    pub fn max_entry(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Odd nonvanishing edge length function `Δs`. Stored per pair on the
/// forward orientation; `Δs(−w) = −Δs(w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DsFunction {
    values: Vec<f64>,
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SpectralError {
    #[error("Δs vanishes on pair {pair}")]
    ZeroDs { pair: usize },
    #[error("Δs is not odd on pair {pair}: Δs(w)={forward}, Δs(-w)={backward}")]
    NotOdd {
        pair: usize,
        forward: f64,
        backward: f64,
    },
    #[error("expected one Δs value per edge pair ({expected}), got {got}")]
    WrongDsCount { expected: usize, got: usize },
    #[error("form degree {0} not supported here")]
    UnsupportedDegree(usize),
    #[error("form degrees differ: {0} vs {1}")]
    DegreeMismatch(usize, usize),
}

impl DsFunction {
    pub fn from_pairs(values: Vec<f64>) -> Result<Self, SpectralError> {
        for (pair, &v) in values.iter().enumerate() {
            if v == 0.0 {
                return Err(SpectralError::ZeroDs { pair });
            }
        }
        Ok(DsFunction { values })
    }

    pub fn constant(g: &LabeledGraph, value: f64) -> Result<Self, SpectralError> {
        Self::from_pairs(vec![value; g.pair_count()])
    }

    /// Builds from explicit per-oriented-edge values, checking oddness.
    pub fn from_oriented(values: &[f64]) -> Result<Self, SpectralError> {
        if values.len() % 2 != 0 {
            return Err(SpectralError::WrongDsCount {
                expected: values.len() + 1,
                got: values.len(),
            });
        }
        let pairs = values.len() / 2;
        let mut out = Vec::with_capacity(pairs);
        for e in 0..pairs {
            let (fwd, bwd) = (values[2 * e], values[2 * e + 1]);
            if bwd != -fwd {
                return Err(SpectralError::NotOdd {
                    pair: e,
                    forward: fwd,
                    backward: bwd,
                });
            }
            if fwd == 0.0 {
                return Err(SpectralError::ZeroDs { pair: e });
            }
            out.push(fwd);
        }
        Ok(DsFunction { values: out })
    }

    pub fn value(&self, w: OrientedEdge) -> f64 {
        if w.reversed {
            -self.values[w.pair]
        } else {
            self.values[w.pair]
        }
    }

    pub fn pair_value(&self, pair: usize) -> f64 {
        self.values[pair]
    }

    pub fn pair_values(&self) -> &[f64] {
        &self.values
    }
}

/// Function on flags, `v ↦ {∂v → ℂ}`; acts diagonally per block.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    /// Indexed by [`OrientedEdge::index`].
    pub values: Vec<C>,
}

impl AlgebraElement {
    pub fn zeros(g: &LabeledGraph) -> Self {
        AlgebraElement {
            values: vec![C::ZERO; g.oriented_count()],
        }
    }

    /// Lifts a vertex function to the flag algebra (constant on each flag
    /// set), the embedding used for distances and Laplacian comparisons.
    pub fn from_vertex_fn(g: &LabeledGraph, f: &[f64]) -> Self {
        let mut values = vec![C::ZERO; g.oriented_count()];
        for w in g.oriented_edges() {
            values[w.index()] = c(f[g.tail(w)], 0.0);
        }
        AlgebraElement { values }
    }

    pub fn value(&self, w: OrientedEdge) -> C {
        self.values[w.index()]
    }

    pub fn conj(&self) -> Self {
        AlgebraElement {
            values: self.values.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Pointwise product (the algebra is commutative entrywise on flags).
    pub fn mul(&self, rhs: &Self) -> Self {
        AlgebraElement {
            values: self
                .values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    /// Representation block `diag(a(w), a(−w))` on pair `e`.
    pub fn block(&self, e: usize) -> Block {
        Block::diag(self.values[2 * e], self.values[2 * e + 1])
    }
}

/// Graded form: one 2×2 block per edge pair. Blocks generated by the calculus
/// are off-diagonal in odd degree and diagonal in even degree.
#[derive(Clone, Debug, PartialEq)]
pub struct Form {
    pub degree: usize,
    pub blocks: Vec<Block>,
}

impl Form {
    pub fn zero(g: &LabeledGraph, degree: usize) -> Self {
        Form {
            degree,
            blocks: vec![Block::zero(); g.pair_count()],
        }
    }

    pub fn adjoint(&self) -> Self {
        Form {
            degree: self.degree,
            blocks: self.blocks.iter().map(Block::adjoint).collect(),
        }
    }

    pub fn add(&self, rhs: &Form) -> Form {
        Form {
            degree: self.degree,
            blocks: self
                .blocks
                .iter()
                .zip(&rhs.blocks)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, rhs: &Form) -> Form {
        Form {
            degree: self.degree,
            blocks: self
                .blocks
                .iter()
                .zip(&rhs.blocks)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    pub fn scale(&self, s: C) -> Form {
        Form {
            degree: self.degree,
            blocks: self.blocks.iter().map(|b| b.scale(s)).collect(),
        }
    }

    /// Frobenius norm over all blocks.
    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(Block::frobenius_sq)
            .sum::<f64>()
            .sqrt()
    }

    /// Operator norm: the blocks act block-diagonally, so it is the max of
    /// the per-block spectral norms.
    pub fn op_norm(&self) -> f64 {
        self.blocks.iter().map(Block::op_norm).fold(0.0, f64::max)
    }

    pub fn max_entry(&self) -> f64 {
        self.blocks.iter().map(Block::max_entry).fold(0.0, f64::max)
    }
}

/// The spectral triple `{A, H, ds}` on a graph: block structure plus the
/// length function.
#[derive(Clone, Debug)]
pub struct SpectralTriple {
    graph: LabeledGraph,
    ds: DsFunction,
}

impl SpectralTriple {
    pub fn graph(&self) -> &LabeledGraph {
        &self.graph
    }

    pub fn ds(&self) -> &DsFunction {
        &self.ds
    }

    pub fn delta(&self, pair: usize) -> f64 {
        self.ds.pair_value(pair)
    }

    pub fn pair_count(&self) -> usize {
        self.graph.pair_count()
    }

    /// `ds` block on a pair.
    pub fn ds_block(&self, pair: usize) -> Block {
        let d = self.delta(pair);
        Block::off_diag(c(0.0, -d), c(0.0, d))
    }

    /// Dirac block `D = ds⁻¹`.
    pub fn dirac_block(&self, pair: usize) -> Block {
        let d = self.delta(pair);
        Block::off_diag(c(0.0, -1.0 / d), c(0.0, 1.0 / d))
    }

    /// Spectral differential `da = i[D, π(a)]`; on each pair the block is
    /// off-diagonal with both entries `(a(−w) − a(w)) / Δs`.
    pub fn differential(&self, a: &AlgebraElement) -> Form {
        let blocks = (0..self.pair_count())
            .map(|e| {
                let diff = (a.values[2 * e + 1] - a.values[2 * e]) / self.delta(e);
                Block::off_diag(diff, diff)
            })
            .collect();
        Form { degree: 1, blocks }
    }

    /// Multiplies a form by an algebra element from the left, `π(a)·ω`.
    pub fn left_mul(&self, a: &AlgebraElement, omega: &Form) -> Form {
        Form {
            degree: omega.degree,
            blocks: (0..self.pair_count())
                .map(|e| a.block(e).mul(&omega.blocks[e]))
                .collect(),
        }
    }

    /// Multiplies a form by an algebra element from the right, `ω·π(a)`.
    pub fn right_mul(&self, omega: &Form, a: &AlgebraElement) -> Form {
        Form {
            degree: omega.degree,
            blocks: (0..self.pair_count())
                .map(|e| omega.blocks[e].mul(&a.block(e)))
                .collect(),
        }
    }

    /// Blockwise product of forms; degrees add.
    pub fn form_mul(&self, sigma: &Form, omega: &Form) -> Form {
        Form {
            degree: sigma.degree + omega.degree,
            blocks: sigma
                .blocks
                .iter()
                .zip(&omega.blocks)
                .map(|(a, b)| a.mul(b))
                .collect(),
        }
    }

    /// Exterior differential on forms: `dω = i(Dω − (−1)^k ωD)` — a
    /// commutator in even degree, an anticommutator in odd degree. Degrees
    /// up to 3 are exercised by the curvature/Bianchi calculus.
    pub fn form_d(&self, omega: &Form) -> Form {
        let blocks = (0..self.pair_count())
            .map(|e| {
                let d = self.dirac_block(e);
                let b = &omega.blocks[e];
                if omega.degree % 2 == 0 {
                    d.commutator(b).scale(c(0.0, 1.0))
                } else {
                    d.anticommutator(b).scale(c(0.0, 1.0))
                }
            })
            .collect();
        Form {
            degree: omega.degree + 1,
            blocks,
        }
    }

    /// Adjoint differential: `d*ω = −i[D, ω]` on 1-forms and
    /// `d*σ = −i(Dσ + σD)` on 2-forms.
    pub fn form_dstar(&self, omega: &Form) -> Result<Form, SpectralError> {
        if omega.degree != 1 && omega.degree != 2 {
            return Err(SpectralError::UnsupportedDegree(omega.degree));
        }
        let blocks = (0..self.pair_count())
            .map(|e| {
                let d = self.dirac_block(e);
                let b = &omega.blocks[e];
                if omega.degree == 1 {
                    d.commutator(b).scale(c(0.0, -1.0))
                } else {
                    d.anticommutator(b).scale(c(0.0, -1.0))
                }
            })
            .collect();
        Ok(Form {
            degree: omega.degree - 1,
            blocks,
        })
    }

    /// Trace pairing `⟨ω, ω'⟩ = Tr(ω'* ω)` summed over blocks.
    pub fn form_inner(&self, omega: &Form, other: &Form) -> Result<C, SpectralError> {
        if omega.degree != other.degree {
            return Err(SpectralError::DegreeMismatch(omega.degree, other.degree));
        }
        Ok(omega
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| b.adjoint().mul(a).trace())
            .sum())
    }
}

/// Builds the triple, checking that `Δs` covers the graph, vanishes nowhere,
/// and satisfies the block identities (`ds` selfadjoint, `D·ds = 1`).
pub fn build_triple(g: &LabeledGraph, ds: DsFunction) -> Result<SpectralTriple, SpectralError> {
    if ds.pair_values().len() != g.pair_count() {
        return Err(SpectralError::WrongDsCount {
            expected: g.pair_count(),
            got: ds.pair_values().len(),
        });
    }
    let t = SpectralTriple {
        graph: g.clone(),
        ds,
    };
    for e in 0..t.pair_count() {
        let dsb = t.ds_block(e);
        debug_assert!(dsb.sub(&dsb.adjoint()).max_entry() == 0.0);
        let prod = t.dirac_block(e).mul(&dsb);
        debug_assert!(prod.sub(&Block::identity()).max_entry() < 1e-14);
    }
    Ok(t)
}

/// Result of a Connes distance query.
#[derive(Clone, Debug, PartialEq)]
pub enum Distance {
    Finite {
        value: f64,
        /// A vertex function attaining the supremum, with `‖da‖ ≤ 1`.
        maximizer: Vec<f64>,
    },
    Infinite,
}

impl Distance {
    pub fn value(&self) -> Option<f64> {
        match self {
            Distance::Finite { value, .. } => Some(*value),
            Distance::Infinite => None,
        }
    }
}

/// Connes distance `sup { |a(v0) − a(v1)| : ‖da‖ ≤ 1 }`.
///
/// `da` is block-diagonal, so the norm constraint decouples into
/// `|a(head) − a(tail)| ≤ |Δs|` per edge; the supremum over vertex functions
/// is the shortest-path distance in the weights `|Δs|`, attained by
/// `a(v) = min(dist(v0, v), dist(v0, v1))`. On a single edge it equals
/// `|Δs|` exactly.
pub fn connes_distance(t: &SpectralTriple, v0: usize, v1: usize) -> Distance {
    let g = t.graph();
    let n = g.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    dist[v0] = 0.0;
    // Dijkstra by scan; graphs here are tiny.
    let mut done = vec![false; n];
    for _ in 0..n {
        let mut best = None;
        for v in 0..n {
            if !done[v] && dist[v].is_finite() && best.is_none_or(|b: usize| dist[v] < dist[b]) {
                best = Some(v);
            }
        }
        let Some(v) = best else { break };
        done[v] = true;
        for &w in g.flags(v) {
            let u = g.head(w);
            let cand = dist[v] + t.delta(w.pair).abs();
            if cand < dist[u] {
                dist[u] = cand;
            }
        }
    }
    if !dist[v1].is_finite() {
        return Distance::Infinite;
    }
    let value = dist[v1];
    let maximizer: Vec<f64> = dist
        .iter()
        .map(|&d| if d.is_finite() { d.min(value) } else { value })
        .collect();
    Distance::Finite { value, maximizer }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rat(p: i64) -> Rational64 {
        Rational64::new(p, 1)
    }

    fn dipole_triple(ds: f64) -> SpectralTriple {
        let g = LabeledGraph::dipole(rat(0), rat(0), 1);
        build_triple(&g, DsFunction::constant(&g, ds).unwrap()).unwrap()
    }

    fn random_algebra(g: &LabeledGraph, rng: &mut StdRng) -> AlgebraElement {
        AlgebraElement {
            values: (0..g.oriented_count())
                .map(|_| {
                    c(
                        rng.random::<f64>() * 2.0 - 1.0,
                        rng.random::<f64>() * 2.0 - 1.0,
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn dipole_blocks_match_display() {
        let t = dipole_triple(2.0);
        assert_eq!(t.ds_block(0), Block::off_diag(c(0.0, -2.0), c(0.0, 2.0)));
        assert_eq!(t.dirac_block(0), Block::off_diag(c(0.0, -0.5), c(0.0, 0.5)));
        let prod = t.dirac_block(0).mul(&t.ds_block(0));
        assert!(prod.sub(&Block::identity()).max_entry() < 1e-15);
    }

    #[test]
    fn non_odd_ds_rejected() {
        assert!(matches!(
            DsFunction::from_oriented(&[1.0, -2.0]),
            Err(SpectralError::NotOdd { .. })
        ));
        assert!(matches!(
            DsFunction::from_pairs(vec![0.0]),
            Err(SpectralError::ZeroDs { .. })
        ));
        assert!(DsFunction::from_oriented(&[1.5, -1.5]).is_ok());
    }

    #[test]
    fn blocks_are_independent_per_pair() {
        let mut b = crate::graph::GraphBuilder::new();
        let v0 = b.vertex("v0", rat(0));
        let v1 = b.vertex("v1", rat(0));
        b.edge("e0", v0, v1, 1);
        b.edge("e1", v0, v1, 1);
        b.edge("e2", v0, v1, 1);
        let g3 = b.build();
        let t = build_triple(&g3, DsFunction::from_pairs(vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        for (e, d) in [(0usize, 1.0), (1, 2.0), (2, 3.0)] {
            assert_eq!(t.ds_block(e), Block::off_diag(c(0.0, -d), c(0.0, d)));
        }
    }

    #[test]
    fn ds_squared_is_central() {
        let mut rng = StdRng::seed_from_u64(11);
        let t = dipole_triple(1.7);
        let a = random_algebra(t.graph(), &mut rng);
        let ds2 = t.ds_block(0).mul(&t.ds_block(0));
        let comm = ds2.commutator(&a.block(0));
        assert!(comm.max_entry() < 1e-15);
    }

    #[test]
    fn differential_of_constant_vanishes() {
        let t = dipole_triple(1.3);
        let a = AlgebraElement {
            values: vec![c(2.5, -1.0); 2],
        };
        assert!(t.differential(&a).norm() < 1e-15);
    }

    #[test]
    fn dipole_differential_display() {
        let t = dipole_triple(1.0);
        let a = AlgebraElement {
            values: vec![c(0.0, 0.0), c(1.0, 0.0)],
        };
        let da = t.differential(&a);
        assert_eq!(da.blocks[0], Block::off_diag(C::ONE, C::ONE));
    }

    #[test]
    fn differential_matches_commutator() {
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..50 {
            let t = dipole_triple(rng.random::<f64>() + 0.5);
            let a = random_algebra(t.graph(), &mut rng);
            let da = t.differential(&a);
            let brute = t.dirac_block(0).commutator(&a.block(0)).scale(c(0.0, 1.0));
            assert!(da.blocks[0].sub(&brute).max_entry() < 1e-14);
        }
    }

    #[test]
    fn differential_leibniz_rule() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..50 {
            let t = dipole_triple(rng.random::<f64>() * 2.0 + 0.3);
            let a = random_algebra(t.graph(), &mut rng);
            let b = random_algebra(t.graph(), &mut rng);
            let lhs = t.differential(&a.mul(&b));
            let rhs = t
                .right_mul(&t.differential(&a), &b)
                .add(&t.left_mul(&a, &t.differential(&b)));
            assert!(lhs.sub(&rhs).max_entry() < 1e-13);
        }
    }

    #[test]
    fn star_commutes_with_d() {
        let mut rng = StdRng::seed_from_u64(41);
        let t = dipole_triple(0.8);
        let a = random_algebra(t.graph(), &mut rng);
        let lhs = t.differential(&a).adjoint();
        let rhs = t.differential(&a.conj());
        assert!(lhs.sub(&rhs).max_entry() < 1e-14);
    }

    #[test]
    fn connes_distance_on_dipole_is_abs_ds() {
        for ds in [2.0, 0.5, -1.25] {
            let t = dipole_triple(ds);
            match connes_distance(&t, 0, 1) {
                Distance::Finite { value, maximizer } => {
                    assert_eq!(value, ds.abs());
                    // Maximizer attains the sup and satisfies the norm bound.
                    assert!((maximizer[1] - maximizer[0]).abs() - ds.abs() < 1e-15);
                    let a = AlgebraElement::from_vertex_fn(t.graph(), &maximizer);
                    assert!(t.differential(&a).op_norm() <= 1.0 + 1e-12);
                }
                Distance::Infinite => panic!("dipole is connected"),
            }
        }
    }

    #[test]
    fn connes_distance_composes_along_paths() {
        let g = LabeledGraph::triplet([rat(0), rat(0), rat(0)], [1, 1]);
        let t = build_triple(&g, DsFunction::from_pairs(vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(connes_distance(&t, 0, 2).value(), Some(2.0));
    }

    #[test]
    fn disconnected_vertices_are_infinitely_far() {
        let mut b = crate::graph::GraphBuilder::new();
        b.vertex("v0", rat(0));
        b.vertex("v1", rat(0));
        let g = b.build();
        let t = build_triple(&g, DsFunction::from_pairs(vec![]).unwrap()).unwrap();
        assert_eq!(connes_distance(&t, 0, 1), Distance::Infinite);
    }

    #[test]
    fn projector_differential_squares_to_scalar() {
        // (dp)² = Δs⁻²·1 for the dipole projector p = (1, 0).
        for ds in [1.0, 2.0, 0.4] {
            let t = dipole_triple(ds);
            let p = AlgebraElement {
                values: vec![C::ONE, C::ZERO],
            };
            let dp = t.differential(&p);
            let sq = t.form_mul(&dp, &dp);
            assert_eq!(sq.degree, 2);
            let expected = Block::identity().scale(c(1.0 / (ds * ds), 0.0));
            assert!(sq.blocks[0].sub(&expected).max_entry() < 1e-14);
        }
    }

    #[test]
    fn form_mul_identity_and_associativity() {
        let mut rng = StdRng::seed_from_u64(55);
        let t = dipole_triple(1.1);
        let one = AlgebraElement {
            values: vec![C::ONE; 2],
        };
        let a = random_algebra(t.graph(), &mut rng);
        let da = t.differential(&a);
        let same = t.right_mul(&da, &one);
        assert!(da.sub(&same).max_entry() < 1e-15);

        for _ in 0..20 {
            let x = t.differential(&random_algebra(t.graph(), &mut rng));
            let y = t.differential(&random_algebra(t.graph(), &mut rng));
            let z = t.differential(&random_algebra(t.graph(), &mut rng));
            let lhs = t.form_mul(&t.form_mul(&x, &y), &z);
            let rhs = t.form_mul(&x, &t.form_mul(&y, &z));
            assert!(lhs.sub(&rhs).max_entry() < 1e-13);
        }
    }

    #[test]
    fn d_squared_vanishes() {
        let mut rng = StdRng::seed_from_u64(61);
        for _ in 0..30 {
            let t = dipole_triple(rng.random::<f64>() + 0.2);
            let a = random_algebra(t.graph(), &mut rng);
            let dda = t.form_d(&t.differential(&a));
            assert_eq!(dda.degree, 2);
            assert!(dda.max_entry() < 1e-13, "d² a = {dda:?}");
        }
    }

    #[test]
    fn d_of_a_db_is_da_db() {
        let mut rng = StdRng::seed_from_u64(71);
        let t = dipole_triple(0.9);
        for _ in 0..20 {
            let a = random_algebra(t.graph(), &mut rng);
            let b = random_algebra(t.graph(), &mut rng);
            let omega = t.left_mul(&a, &t.differential(&b));
            let lhs = t.form_d(&omega);
            let rhs = t.form_mul(&t.differential(&a), &t.differential(&b));
            assert!(lhs.sub(&rhs).max_entry() < 1e-13);
        }
    }

    #[test]
    fn d_leibniz_on_forms() {
        // d(σω) = dσ·ω + (−1)^l σ·dω for σ = a db (degree 1), ω = x dy.
        let mut rng = StdRng::seed_from_u64(81);
        let t = dipole_triple(1.4);
        for _ in 0..20 {
            let a = random_algebra(t.graph(), &mut rng);
            let b = random_algebra(t.graph(), &mut rng);
            let x = random_algebra(t.graph(), &mut rng);
            let y = random_algebra(t.graph(), &mut rng);
            let sigma = t.left_mul(&a, &t.differential(&b));
            let omega = t.left_mul(&x, &t.differential(&y));
            let lhs = t.form_d(&t.form_mul(&sigma, &omega));
            let rhs = t
                .form_mul(&t.form_d(&sigma), &omega)
                .sub(&t.form_mul(&sigma, &t.form_d(&omega)));
            assert!(lhs.sub(&rhs).max_entry() < 1e-12);
        }
    }

    #[test]
    fn dstar_adjoint_to_d() {
        let mut rng = StdRng::seed_from_u64(91);
        let t = dipole_triple(1.6);
        for _ in 0..30 {
            // σ ∈ Ω², ω ∈ Ω¹: ⟨d*σ, ω⟩ = ⟨σ, dω⟩.
            let a = random_algebra(t.graph(), &mut rng);
            let b = random_algebra(t.graph(), &mut rng);
            let x = random_algebra(t.graph(), &mut rng);
            let sigma = t.form_mul(&t.differential(&a), &t.differential(&b));
            let omega = t.differential(&x);
            let lhs = t
                .form_inner(&t.form_dstar(&sigma).unwrap(), &omega)
                .unwrap();
            let rhs = t.form_inner(&sigma, &t.form_d(&omega)).unwrap();
            assert!((lhs - rhs).norm() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn dstar_star_compatibility_and_corollary() {
        let mut rng = StdRng::seed_from_u64(101);
        let t = dipole_triple(0.7);
        for _ in 0..20 {
            let x = random_algebra(t.graph(), &mut rng);
            let omega = t.differential(&x);
            // (d*ω)* = d*(ω*) on 1-forms.
            let lhs = t.form_dstar(&omega).unwrap().adjoint();
            let rhs = t.form_dstar(&omega.adjoint()).unwrap();
            assert!(lhs.sub(&rhs).max_entry() < 1e-13);

            // d*(aσ) = −da·σ + a·d*σ on 2-forms.
            let a = random_algebra(t.graph(), &mut rng);
            let b1 = random_algebra(t.graph(), &mut rng);
            let b2 = random_algebra(t.graph(), &mut rng);
            let sigma = t.form_mul(&t.differential(&b1), &t.differential(&b2));
            let lhs = t.form_dstar(&t.left_mul(&a, &sigma)).unwrap();
            let rhs = t
                .left_mul(&a, &t.form_dstar(&sigma).unwrap())
                .sub(&t.form_mul(&t.differential(&a), &sigma));
            assert!(lhs.sub(&rhs).max_entry() < 1e-12);
        }
    }

    #[test]
    fn dstar_rejects_unsupported_degree() {
        let t = dipole_triple(1.0);
        let bad = Form::zero(t.graph(), 3);
        assert!(matches!(
            t.form_dstar(&bad),
            Err(SpectralError::UnsupportedDegree(3))
        ));
    }

    #[test]
    fn inner_product_examples() {
        let t = dipole_triple(1.0);
        let a = AlgebraElement {
            values: vec![C::ZERO, C::ONE],
        };
        let da = t.differential(&a);
        let ip = t.form_inner(&da, &da).unwrap();
        assert!((ip - c(2.0, 0.0)).norm() < 1e-14);

        let zero = Form::zero(t.graph(), 1);
        assert_eq!(t.form_inner(&zero, &zero).unwrap(), C::ZERO);

        let mismatch = t.form_inner(&da, &Form::zero(t.graph(), 2));
        assert!(matches!(mismatch, Err(SpectralError::DegreeMismatch(1, 2))));
    }

    #[test]
    fn inner_product_conjugate_symmetry_and_positivity() {
        let mut rng = StdRng::seed_from_u64(111);
        let t = dipole_triple(1.9);
        for _ in 0..30 {
            let x = t.differential(&random_algebra(t.graph(), &mut rng));
            let y = t.differential(&random_algebra(t.graph(), &mut rng));
            let xy = t.form_inner(&x, &y).unwrap();
            let yx = t.form_inner(&y, &x).unwrap();
            assert!((xy - yx.conj()).norm() < 1e-14);
            let xx = t.form_inner(&x, &x).unwrap();
            assert!(xx.im.abs() < 1e-14 && xx.re >= 0.0);

            // ⟨aω, ω'⟩ = ⟨ω, a*ω'⟩.
            let a = random_algebra(t.graph(), &mut rng);
            let lhs = t.form_inner(&t.left_mul(&a, &x), &y).unwrap();
            let rhs = t.form_inner(&x, &t.left_mul(&a.conj(), &y)).unwrap();
            assert!((lhs - rhs).norm() < 1e-13);
        }
    }

    #[test]
    fn degree_parity_matches_block_shape() {
        let mut rng = StdRng::seed_from_u64(121);
        let t = dipole_triple(1.2);
        let a = random_algebra(t.graph(), &mut rng);
        let b = random_algebra(t.graph(), &mut rng);
        let da = t.differential(&a);
        for block in &da.blocks {
            assert_eq!(block.0[0][0], C::ZERO);
            assert_eq!(block.0[1][1], C::ZERO);
        }
        let dadb = t.form_mul(&da, &t.differential(&b));
        for block in &dadb.blocks {
            assert_eq!(block.0[0][1], C::ZERO);
            assert_eq!(block.0[1][0], C::ZERO);
        }
    }

    #[test]
    fn any_length_assignment_is_spectral() {
        // Any positive intrinsic edge length is realized by Δs = ±length.
        let g = LabeledGraph::triplet([rat(0), rat(0), rat(0)], [1, 1]);
        let lengths = [0.75, 2.5];
        let t = build_triple(&g, DsFunction::from_pairs(lengths.to_vec()).unwrap()).unwrap();
        for (e, &l) in lengths.iter().enumerate() {
            let w = OrientedEdge::forward(e);
            let d = connes_distance(&t, t.graph().tail(w), t.graph().head(w));
            assert_eq!(d.value(), Some(l));
        }
    }
}
