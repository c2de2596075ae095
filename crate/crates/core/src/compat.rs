//! The compatibility equation and its isometric states.
//!
//! For a labeled graph the equation reads, per vertex,
//!
//!   k_v l_v − Σ_{w∈∂v} (cos ω_w / b_w) l_{∂₊w} = 0,
//!
//! with lengths l_v > 0 and angles ω_w = ω_{−w} ∈ (0, π). This module
//! solves the elementary cases (dipole, monopole) in closed form, decides
//! geometrizability for positive charge vectors via the form H_M, decomposes
//! states into dipole pieces and reassembles them, and runs a seeded
//! feasibility search over charge splittings for general graphs.

use crate::graph::{LabeledGraph, OrientedEdge};
use crate::numeric::{self, LsqOptions};
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// Residual tolerance accepted from the feasibility solver.
pub const SOLVER_TOL: f64 = 1e-8;
/// Residual tolerance expected of closed-form solutions.
pub const CLOSED_FORM_TOL: f64 = 1e-12;
/// A symmetric form counts as non-PSD when its minimum eigenvalue is below
/// this threshold.
pub const PSD_TOL: f64 = -1e-10;
/// Tolerance for the circuit balance products.
pub const BALANCE_TOL: f64 = 1e-10;

/// Fiber lengths per vertex and angles per edge pair; a solution candidate
/// for the compatibility equation. The angle map is constant on pairs by
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct IsometricState {
    lengths: Vec<f64>,
    angles: Vec<f64>,
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum StateError {
    #[error("expected {expected} lengths, got {got}")]
    WrongLengthCount { expected: usize, got: usize },
    #[error("expected {expected} angles, got {got}")]
    WrongAngleCount { expected: usize, got: usize },
    #[error("length at vertex {vertex} must be positive, got {value}")]
    NonPositiveLength { vertex: String, value: f64 },
    #[error("angle at edge {edge} must lie in (0, pi), got {value}")]
    AngleOutOfRange { edge: String, value: f64 },
}

impl IsometricState {
    pub fn new(g: &LabeledGraph, lengths: Vec<f64>, angles: Vec<f64>) -> Result<Self, StateError> {
        if lengths.len() != g.vertex_count() {
            return Err(StateError::WrongLengthCount {
                expected: g.vertex_count(),
                got: lengths.len(),
            });
        }
        if angles.len() != g.pair_count() {
            return Err(StateError::WrongAngleCount {
                expected: g.pair_count(),
                got: angles.len(),
            });
        }
        for (v, &l) in lengths.iter().enumerate() {
            if !(l > 0.0) {
                return Err(StateError::NonPositiveLength {
                    vertex: g.vertex_id(v).to_string(),
                    value: l,
                });
            }
        }
        for (e, &w) in angles.iter().enumerate() {
            if !(w > 0.0 && w < PI) {
                return Err(StateError::AngleOutOfRange {
                    edge: g.edge_id(e).to_string(),
                    value: w,
                });
            }
        }
        Ok(IsometricState { lengths, angles })
    }

    pub fn length(&self, v: usize) -> f64 {
        self.lengths[v]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// Angle of the pair containing `w` (`ω_w = ω_{−w}`).
    pub fn angle(&self, pair: usize) -> f64 {
        self.angles[pair]
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
}

/// Residual of the compatibility equation, one component per vertex.
pub fn compat_residual(g: &LabeledGraph, s: &IsometricState) -> Vec<f64> {
    (0..g.vertex_count())
        .map(|v| {
            let mut sum = 0.0;
            for &w in g.flags(v) {
                let cos = s.angle(w.pair).cos();
                sum += cos / g.index_of(w) as f64 * s.length(g.head(w));
            }
            charge_f64(g, v) * s.length(v) - sum
        })
        .collect()
}

pub fn residual_sup(residual: &[f64]) -> f64 {
    residual.iter().fold(0.0, |m, r| m.max(r.abs()))
}

fn charge_f64(g: &LabeledGraph, v: usize) -> f64 {
    let k = g.charge(v);
    *k.numer() as f64 / *k.denom() as f64
}

// ---------------------------------------------------------------------------
// Graph Laplacian with the weighted inner products.
// ---------------------------------------------------------------------------

/// `df(w) = f(∂₊w) − f(∂₋w)`, returned on the stored orientations (the value
/// on `−w` is the negative).
pub fn graph_d(g: &LabeledGraph, f: &[f64]) -> Vec<f64> {
    g.pairs()
        .map(|e| {
            let w = OrientedEdge::forward(e);
            f[g.head(w)] - f[g.tail(w)]
        })
        .collect()
}

/// Adjoint of [`graph_d`] under `⟨f,f'⟩ = Σ_v |∂v| f f'` and
/// `⟨φ,ψ⟩ = ½ Σ_w φψ`: `d*φ(v) = −(1/|∂v|) Σ_{w∈∂v} φ(w)`.
pub fn graph_dstar(g: &LabeledGraph, phi: &[f64]) -> Vec<f64> {
    (0..g.vertex_count())
        .map(|v| {
            let deg = g.degree(v);
            if deg == 0 {
                return 0.0;
            }
            let mut sum = 0.0;
            for &w in g.flags(v) {
                let value = if w.reversed {
                    -phi[w.pair]
                } else {
                    phi[w.pair]
                };
                sum += value;
            }
            -sum / deg as f64
        })
        .collect()
}

/// `Δf(v) = f(v) − (1/|∂v|) Σ_{w∈∂v} f(∂₊w)`; equals `d*d f`.
pub fn graph_laplacian(g: &LabeledGraph, f: &[f64]) -> Vec<f64> {
    (0..g.vertex_count())
        .map(|v| {
            let deg = g.degree(v);
            if deg == 0 {
                return 0.0;
            }
            let mut sum = 0.0;
            for &w in g.flags(v) {
                sum += f[g.head(w)];
            }
            f[v] - sum / deg as f64
        })
        .collect()
}

/// `⟨f, f'⟩ = Σ_v |∂v| f(v) f'(v)`.
pub fn vertex_inner(g: &LabeledGraph, f: &[f64], f2: &[f64]) -> f64 {
    (0..g.vertex_count())
        .map(|v| g.degree(v) as f64 * f[v] * f2[v])
        .sum()
}

/// `⟨φ, ψ⟩ = ½ Σ_w φ(w) ψ(w)` for odd edge functions given on the stored
/// orientations.
pub fn edge_inner(_g: &LabeledGraph, phi: &[f64], psi: &[f64]) -> f64 {
    phi.iter().zip(psi).map(|(a, b)| a * b).sum()
}

// ---------------------------------------------------------------------------
// Closed-form elementary solutions.
// ---------------------------------------------------------------------------

/// Closed-form dipole solution cases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DipoleSolution {
    /// `k0 = k1 = 0`: ω = π/2, the length ratio is free (canonically 1:1).
    FreeRatio { omega: f64 },
    /// `0 < k0 k1 b² < 1`: angle and length ratio are pinned, `l1 = 1`.
    Fixed { omega: f64, l0: f64, l1: f64 },
    /// No isometric state exists.
    NoState,
}

impl DipoleSolution {
    pub fn exists(&self) -> bool {
        !matches!(self, DipoleSolution::NoState)
    }

    /// Canonical `(l0, l1, ω)` triple when a state exists.
    pub fn canonical(&self) -> Option<(f64, f64, f64)> {
        match *self {
            DipoleSolution::FreeRatio { omega } => Some((1.0, 1.0, omega)),
            DipoleSolution::Fixed { omega, l0, l1 } => Some((l0, l1, omega)),
            DipoleSolution::NoState => None,
        }
    }
}

/// Solves the dipole system `k0 l0 = (cos ω / b) l1`, `k1 l1 = (cos ω / b) l0`.
pub fn solve_dipole(k0: f64, k1: f64, b: i64) -> DipoleSolution {
    if k0 == 0.0 && k1 == 0.0 {
        return DipoleSolution::FreeRatio { omega: FRAC_PI_2 };
    }
    let t = k0 * k1 * (b * b) as f64;
    if t > 0.0 && t < 1.0 {
        let cos = k0.signum() * t.sqrt();
        DipoleSolution::Fixed {
            omega: cos.acos(),
            l0: (k1 / k0).sqrt(),
            l1: 1.0,
        }
    } else {
        DipoleSolution::NoState
    }
}

/// Closed-form monopole solution: a state exists iff `|k| b < 2`, with
/// `cos ω = k b / 2` and a free length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MonopoleSolution {
    Free { omega: f64 },
    NoState,
}

impl MonopoleSolution {
    pub fn exists(&self) -> bool {
        !matches!(self, MonopoleSolution::NoState)
    }
}

pub fn solve_monopole(k: f64, b: i64) -> MonopoleSolution {
    let kb = k * b as f64;
    if kb.abs() < 2.0 {
        MonopoleSolution::Free {
            omega: (kb / 2.0).acos(),
        }
    } else {
        MonopoleSolution::NoState
    }
}

// ---------------------------------------------------------------------------
// Geometrizability criterion.
// ---------------------------------------------------------------------------

/// Dense symmetric form `H_M = diag K − J_B` with
/// `(J_B L, L) = Σ_{w∈W} (1/b_w) l_{∂₋w} l_{∂₊w}` (each pair contributes both
/// orientations).
#[derive(Clone, Debug)]
pub struct GeomForm {
    pub matrix: DMatrix<f64>,
}

pub fn h_form(g: &LabeledGraph) -> GeomForm {
    let n = g.vertex_count();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for v in 0..n {
        m[(v, v)] = charge_f64(g, v);
    }
    for e in g.pairs() {
        let w = OrientedEdge::forward(e);
        let (t, h) = (g.tail(w), g.head(w));
        let inv_b = 1.0 / g.index_of_pair(e) as f64;
        if t == h {
            // A loop contributes l_v^2 / b from both orientations.
            m[(t, t)] -= 2.0 * inv_b;
        } else {
            m[(t, h)] -= inv_b;
            m[(h, t)] -= inv_b;
        }
    }
    GeomForm { matrix: m }
}

/// Outcome of the geometrizability criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Geometrizability {
    /// `H_M` has a strictly negative eigenvalue: an isometric state exists.
    Geometrizable,
    /// `H_M` is positive semidefinite: no geometrization.
    NotGeometrizable,
    /// The charge vector is not strictly positive; the criterion does not
    /// apply (the general mixed-sign criterion is out of scope).
    NotApplicable,
}

pub fn is_geometrizable(g: &LabeledGraph) -> Geometrizability {
    if !g.charges().iter().all(|k| *k.numer() > 0) {
        return Geometrizability::NotApplicable;
    }
    let form = h_form(g);
    if numeric::min_eigenvalue(&form.matrix) < PSD_TOL {
        Geometrizability::Geometrizable
    } else {
        Geometrizability::NotGeometrizable
    }
}

// ---------------------------------------------------------------------------
// Decomposition principle.
// ---------------------------------------------------------------------------

/// Per-oriented-edge charges `k_w` with `Σ_{w∈∂v} k_w = k_v` at every vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct ChargeSplitting {
    /// Indexed by [`OrientedEdge::index`].
    pub k: Vec<f64>,
}

impl ChargeSplitting {
    pub fn value(&self, w: OrientedEdge) -> f64 {
        self.k[w.index()]
    }

    /// Max deviation of the per-vertex sums from the graph charges.
    pub fn vertex_sum_error(&self, g: &LabeledGraph) -> f64 {
        (0..g.vertex_count())
            .map(|v| {
                let sum: f64 = g.flags(v).iter().map(|&w| self.value(w)).sum();
                (sum - charge_f64(g, v)).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DecomposeError {
    #[error("state is not isometric: residual sup-norm {residual} exceeds {tol}")]
    StateNotIsometric { residual: f64, tol: f64 },
}

/// Canonical decomposition of an isometric state:
/// `k_w = (cos ω_w / b_w) · (l_{∂₊w} / l_{∂₋w})`.
pub fn decompose_state(
    g: &LabeledGraph,
    s: &IsometricState,
    tol: f64,
) -> Result<ChargeSplitting, DecomposeError> {
    let residual = residual_sup(&compat_residual(g, s));
    if residual > tol {
        return Err(DecomposeError::StateNotIsometric { residual, tol });
    }
    let mut k = vec![0.0; g.oriented_count()];
    for w in g.oriented_edges() {
        let cos = s.angle(w.pair).cos();
        k[w.index()] = cos / g.index_of(w) as f64 * s.length(g.head(w)) / s.length(g.tail(w));
    }
    Ok(ChargeSplitting { k })
}

/// The restriction of a state to one edge pair, together with the split
/// charges carried by its two flags.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DipolePiece {
    pub pair: usize,
    pub l_tail: f64,
    pub l_head: f64,
    pub omega: f64,
    pub k_tail: f64,
    pub k_head: f64,
}

/// Cuts a state along a splitting into per-pair dipole pieces.
pub fn dipole_pieces(
    g: &LabeledGraph,
    s: &IsometricState,
    split: &ChargeSplitting,
) -> Vec<DipolePiece> {
    g.pairs()
        .map(|e| {
            let w = OrientedEdge::forward(e);
            DipolePiece {
                pair: e,
                l_tail: s.length(g.tail(w)),
                l_head: s.length(g.head(w)),
                omega: s.angle(e),
                k_tail: split.value(w),
                k_head: split.value(w.opposite()),
            }
        })
        .collect()
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ComposeError {
    #[error("piece set must cover every edge pair exactly once (pair {pair})")]
    BadCover { pair: usize },
    #[error("lengths disagree at shared vertex {vertex}: {a} vs {b}")]
    LengthMismatch { vertex: String, a: f64, b: f64 },
    #[error("split charges at vertex {vertex} sum to {sum}, expected {expected}")]
    ChargeMismatch {
        vertex: String,
        sum: f64,
        expected: f64,
    },
    #[error(transparent)]
    State(#[from] StateError),
}

/// Reassembles dipole pieces into a state on `g`. Lengths at shared vertices
/// must agree within `tol`, and the split charges must sum back to the graph
/// charges.
pub fn compose_states(
    g: &LabeledGraph,
    pieces: &[DipolePiece],
    tol: f64,
) -> Result<IsometricState, ComposeError> {
    let mut by_pair: Vec<Option<&DipolePiece>> = vec![None; g.pair_count()];
    for p in pieces {
        if p.pair >= g.pair_count() || by_pair[p.pair].is_some() {
            return Err(ComposeError::BadCover { pair: p.pair });
        }
        by_pair[p.pair] = Some(p);
    }

    let mut lengths: Vec<Option<f64>> = vec![None; g.vertex_count()];
    let mut angles = vec![0.0; g.pair_count()];
    let mut k_sums = vec![0.0; g.vertex_count()];
    for e in g.pairs() {
        let piece = by_pair[e].ok_or(ComposeError::BadCover { pair: e })?;
        let w = OrientedEdge::forward(e);
        angles[e] = piece.omega;
        for (v, l, k) in [
            (g.tail(w), piece.l_tail, piece.k_tail),
            (g.head(w), piece.l_head, piece.k_head),
        ] {
            k_sums[v] += k;
            match lengths[v] {
                None => lengths[v] = Some(l),
                Some(existing) => {
                    if (existing - l).abs() > tol {
                        return Err(ComposeError::LengthMismatch {
                            vertex: g.vertex_id(v).to_string(),
                            a: existing,
                            b: l,
                        });
                    }
                }
            }
        }
    }
    for v in 0..g.vertex_count() {
        let expected = charge_f64(g, v);
        if (k_sums[v] - expected).abs() > tol.max(1e-9) {
            return Err(ComposeError::ChargeMismatch {
                vertex: g.vertex_id(v).to_string(),
                sum: k_sums[v],
                expected,
            });
        }
    }
    let lengths: Vec<f64> = lengths.into_iter().map(|l| l.unwrap_or(1.0)).collect();
    Ok(IsometricState::new(g, lengths, angles)?)
}

// ---------------------------------------------------------------------------
// Circuit balance.
// ---------------------------------------------------------------------------

/// Balance status of one circuit.
#[derive(Clone, Debug, PartialEq)]
pub enum CircuitBalance {
    /// `Π k_w / k_{−w}` within tolerance of 1.
    Balanced {
        product: f64,
    },
    Unbalanced {
        product: f64,
    },
    /// A zero split charge sits on the circuit; such edges split the graph
    /// and the product condition is vacuous.
    NotApplicable,
}

#[derive(Clone, Debug, Default)]
pub struct BalanceReport {
    pub circuits: Vec<CircuitBalance>,
}

impl BalanceReport {
    /// True iff no circuit is explicitly unbalanced (vacuously true on
    /// trees and for not-applicable circuits).
    pub fn holds(&self) -> bool {
        !self
            .circuits
            .iter()
            .any(|c| matches!(c, CircuitBalance::Unbalanced { .. }))
    }
}

/// Checks `Π_{w∈Z} k_w / k_{−w} = 1` on every given circuit.
pub fn balance_check(
    split: &ChargeSplitting,
    circuits: &[Vec<OrientedEdge>],
    zero_tol: f64,
) -> BalanceReport {
    let circuits = circuits
        .iter()
        .map(|circuit| {
            if circuit.iter().any(|w| {
                split.value(*w).abs() <= zero_tol || split.value(w.opposite()).abs() <= zero_tol
            }) {
                return CircuitBalance::NotApplicable;
            }
            let product: f64 = circuit
                .iter()
                .map(|w| split.value(*w) / split.value(w.opposite()))
                .product();
            if (product - 1.0).abs() <= BALANCE_TOL {
                CircuitBalance::Balanced { product }
            } else {
                CircuitBalance::Unbalanced { product }
            }
        })
        .collect();
    BalanceReport { circuits }
}

// ---------------------------------------------------------------------------
// Feasibility search for general graphs.
// ---------------------------------------------------------------------------

/// Options for [`solve_state`]. The search is deterministic for a fixed seed.
#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub seed: u64,
    pub restarts: usize,
    pub max_iters: usize,
    /// Acceptance threshold on the compatibility residual of the final state.
    pub residual_tol: f64,
    /// Split charges with |k| below this are treated as exact zeros.
    pub zero_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            seed: 0x5eed,
            restarts: 40,
            max_iters: 400,
            residual_tol: SOLVER_TOL,
            zero_tol: 1e-9,
        }
    }
}

/// Outcome of the feasibility search: the state, the splitting that produced
/// it, and the residual that was achieved.
#[derive(Clone, Debug)]
pub struct SolvedState {
    pub state: IsometricState,
    pub splitting: ChargeSplitting,
    pub residual: f64,
}

/// Searches for an isometric state.
///
/// Strategy: parametrize charge splittings exactly on the affine subspace
/// `Σ_{w∈∂v} k_w = k_v` (one pinned flag per vertex), then minimize squared
/// infeasibilities — per-pair `0 ≤ k_w k_{−w} b_w² < 1` hinges and per-circuit
/// products `Π k_w − Π k_{−w}` — by seeded least squares with restarts.
/// A feasible splitting determines angles via `cos²ω_w = k_w k_{−w} b_w²`
/// and lengths via ratio propagation `l_{∂₊w}² / l_{∂₋w}² = k_w / k_{−w}`
/// over a spanning forest of the nonzero pairs; each ratio-connected piece
/// is normalized so its smallest-index vertex has length 1.
///
/// `None` is not a proof of nonexistence unless [`is_geometrizable`]
/// applies and answers negatively.
pub fn solve_state(g: &LabeledGraph, opts: &SolveOptions) -> Option<SolvedState> {
    // Isolated vertices force k_v = 0.
    for v in 0..g.vertex_count() {
        if g.degree(v) == 0 && charge_f64(g, v) != 0.0 {
            return None;
        }
    }

    let circuits = g.cycle_basis();
    // Free variables: all flags of each vertex except the first.
    let mut free_flags: Vec<OrientedEdge> = Vec::new();
    for v in 0..g.vertex_count() {
        for &w in g.flags(v).iter().skip(1) {
            free_flags.push(w);
        }
    }

    let expand = |free: &[f64]| -> ChargeSplitting {
        let mut k = vec![0.0; g.oriented_count()];
        for (i, &w) in free_flags.iter().enumerate() {
            k[w.index()] = free[i];
        }
        for v in 0..g.vertex_count() {
            if let Some((&first, rest)) = g.flags(v).split_first() {
                let rest_sum: f64 = rest.iter().map(|w| k[w.index()]).sum();
                k[first.index()] = charge_f64(g, v) - rest_sum;
            }
        }
        ChargeSplitting { k }
    };

    let t_max = 1.0 - 1e-9;
    let infeasibility = |free: &[f64], r: &mut Vec<f64>| {
        let split = expand(free);
        r.clear();
        for e in g.pairs() {
            let w = OrientedEdge::forward(e);
            let t = split.value(w)
                * split.value(w.opposite())
                * (g.index_of_pair(e) * g.index_of_pair(e)) as f64;
            r.push((-t).max(0.0));
            r.push((t - t_max).max(0.0));
        }
        for circuit in &circuits {
            let fwd: f64 = circuit.iter().map(|w| split.value(*w)).product();
            let bwd: f64 = circuit.iter().map(|w| split.value(w.opposite())).product();
            r.push(fwd - bwd);
        }
    };

    let mut rng = StdRng::seed_from_u64(opts.seed);
    let lsq_opts = LsqOptions {
        max_iters: opts.max_iters,
        ..LsqOptions::default()
    };
    let equal_split: Vec<f64> = free_flags
        .iter()
        .map(|w| charge_f64(g, g.tail(*w)) / g.degree(g.tail(*w)) as f64)
        .collect();
    let scale = g
        .charges()
        .iter()
        .map(|k| (*k.numer() as f64 / *k.denom() as f64).abs())
        .fold(0.5, f64::max);

    for attempt in 0..opts.restarts.max(1) {
        let start: Vec<f64> = if attempt == 0 {
            equal_split.clone()
        } else {
            let spread = scale * (0.2 + attempt as f64 / opts.restarts as f64);
            equal_split
                .iter()
                .map(|x| x + spread * (rng.random::<f64>() * 2.0 - 1.0))
                .collect()
        };
        let result = numeric::least_squares(&infeasibility, &start, &lsq_opts);
        if result.residual_sup() > 1e-11 {
            continue;
        }
        let split = expand(&result.x);
        if let Some(state) = state_from_splitting(g, &split, opts.zero_tol) {
            let residual = residual_sup(&compat_residual(g, &state));
            if residual <= opts.residual_tol {
                return Some(SolvedState {
                    state,
                    splitting: split,
                    residual,
                });
            }
        }
    }
    None
}

/// Builds a state from a feasible splitting: angles from
/// `cos ω = sgn(k_w)·√(k_w k_{−w} b²)`, lengths by ratio propagation over a
/// spanning forest of nonzero pairs, pieces normalized at their
/// smallest-index vertex.
pub fn state_from_splitting(
    g: &LabeledGraph,
    split: &ChargeSplitting,
    zero_tol: f64,
) -> Option<IsometricState> {
    let mut angles = vec![FRAC_PI_2; g.pair_count()];
    let mut zero_pair = vec![true; g.pair_count()];
    for e in g.pairs() {
        let w = OrientedEdge::forward(e);
        let (kf, kb) = (split.value(w), split.value(w.opposite()));
        if kf.abs() <= zero_tol && kb.abs() <= zero_tol {
            continue; // ω = π/2, no length coupling
        }
        let t = kf * kb * (g.index_of_pair(e) * g.index_of_pair(e)) as f64;
        if t <= 0.0 || t >= 1.0 {
            return None;
        }
        zero_pair[e] = false;
        angles[e] = (kf.signum() * t.sqrt()).acos();
    }

    // Ratio propagation over nonzero pairs.
    let mut lengths = vec![f64::NAN; g.vertex_count()];
    let comp = g.components_over(|e| !zero_pair[e]);
    for root in 0..g.vertex_count() {
        if !lengths[root].is_nan() {
            continue;
        }
        lengths[root] = 1.0;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &w in g.flags(v) {
                if zero_pair[w.pair] {
                    continue;
                }
                let u = g.head(w);
                let ratio = (split.value(w) / split.value(w.opposite())).sqrt();
                if lengths[u].is_nan() {
                    lengths[u] = lengths[v] * ratio;
                    stack.push(u);
                }
            }
        }
    }
    // Normalize each ratio-connected piece at its smallest-index vertex.
    let piece_count = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut piece_scale = vec![f64::NAN; piece_count];
    for v in 0..g.vertex_count() {
        if piece_scale[comp[v]].is_nan() {
            piece_scale[comp[v]] = lengths[v];
        }
    }
    for v in 0..g.vertex_count() {
        lengths[v] /= piece_scale[comp[v]];
    }

    IsometricState::new(g, lengths, angles).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use num_rational::Rational64;
    use std::f64::consts::FRAC_PI_3;

    fn rat(p: i64, q: i64) -> Rational64 {
        Rational64::new(p, q)
    }

    fn state(g: &LabeledGraph, lengths: &[f64], angles: &[f64]) -> IsometricState {
        IsometricState::new(g, lengths.to_vec(), angles.to_vec()).unwrap()
    }

    #[test]
    fn dipole_residual_vanishes_on_solution() {
        let g = LabeledGraph::dipole(rat(1, 4), rat(1, 1), 1);
        let s = state(&g, &[2.0, 1.0], &[FRAC_PI_3]);
        let r = compat_residual(&g, &s);
        assert!(residual_sup(&r) < 1e-15, "residual {r:?}");
    }

    #[test]
    fn monopole_residual_vanishes_for_any_length() {
        let g = LabeledGraph::monopole(rat(1, 1), 1);
        for l in [0.3, 1.0, 7.5] {
            let s = state(&g, &[l], &[FRAC_PI_3]);
            assert!(residual_sup(&compat_residual(&g, &s)) < CLOSED_FORM_TOL);
        }
    }

    #[test]
    fn zero_charge_dipole_right_angle() {
        let g = LabeledGraph::dipole(rat(0, 1), rat(0, 1), 1);
        let s = state(&g, &[3.0, 0.4], &[FRAC_PI_2]);
        assert!(residual_sup(&compat_residual(&g, &s)) < 1e-15);
    }

    #[test]
    fn laplacian_kills_constants() {
        let g = LabeledGraph::circle(&[rat(0, 1); 5], 1);
        let f = vec![2.5; 5];
        assert!(graph_laplacian(&g, &f).iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn laplacian_on_dipole() {
        let g = LabeledGraph::dipole(rat(0, 1), rat(0, 1), 1);
        let f = [0.0, 1.0];
        assert_eq!(graph_laplacian(&g, &f), vec![-1.0, 1.0]);
    }

    #[test]
    fn laplacian_is_dstar_d_and_energy_identity_holds() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let g = LabeledGraph::circle(&[rat(0, 1); 4], 1);
            let f: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let df = graph_d(&g, &f);
            let lap = graph_laplacian(&g, &f);
            let dstar_d = graph_dstar(&g, &df);
            for (a, b) in lap.iter().zip(&dstar_d) {
                assert!((a - b).abs() < 1e-13);
            }
            let lhs = vertex_inner(&g, &lap, &f);
            let rhs = edge_inner(&g, &df, &df);
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn energy_identity_on_random_graphs() {
        let mut rng = StdRng::seed_from_u64(99);
        for trial in 0..30 {
            let n = 3 + (trial % 6);
            let mut b = GraphBuilder::new();
            let vs: Vec<usize> = (0..n)
                .map(|i| b.vertex(format!("v{i}"), rat(0, 1)))
                .collect();
            for i in 0..n {
                b.edge(format!("p{i}"), vs[i], vs[(i + 1) % n], 1);
            }
            // A couple of chords and possibly a loop.
            b.edge("c0", vs[0], vs[n / 2], 2);
            if trial % 2 == 0 {
                b.edge("loop", vs[1], vs[1], 3);
            }
            let g = b.build();
            let f: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let df = graph_d(&g, &f);
            let lap = graph_laplacian(&g, &f);
            let lhs = vertex_inner(&g, &lap, &f);
            let rhs = edge_inner(&g, &df, &df);
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn dipole_cases() {
        match solve_dipole(0.0, 0.0, 1) {
            DipoleSolution::FreeRatio { omega } => assert!((omega - FRAC_PI_2).abs() < 1e-15),
            other => panic!("expected free ratio, got {other:?}"),
        }
        match solve_dipole(0.25, 1.0, 1) {
            DipoleSolution::Fixed { omega, l0, l1 } => {
                assert!((omega - FRAC_PI_3).abs() < 1e-12);
                assert!((l0 / l1 - 2.0).abs() < 1e-12);
            }
            other => panic!("expected fixed, got {other:?}"),
        }
        assert_eq!(solve_dipole(1.0, 1.0, 1), DipoleSolution::NoState);
        // Opposite signs give k0 k1 b² < 0: no state.
        assert_eq!(solve_dipole(0.5, -0.5, 1), DipoleSolution::NoState);
    }

    #[test]
    fn dipole_closed_form_satisfies_equation() {
        let mut rng = StdRng::seed_from_u64(123);
        let mut checked = 0;
        while checked < 200 {
            let k0 = rng.random::<f64>() * 2.0 - 1.0;
            let k1 = rng.random::<f64>() * 2.0 - 1.0;
            let b = 1 + (rng.random::<u32>() % 3) as i64;
            let DipoleSolution::Fixed { omega, l0, l1 } = solve_dipole(k0, k1, b) else {
                continue;
            };
            checked += 1;
            let g = LabeledGraph::dipole(
                Rational64::approximate_float(k0).unwrap(),
                Rational64::approximate_float(k1).unwrap(),
                b,
            );
            // Rational64 round-trips f64 exactly only for dyadic values, so
            // check the residual with the raw floats instead.
            let r0 = k0 * l0 - omega.cos() / b as f64 * l1;
            let r1 = k1 * l1 - omega.cos() / b as f64 * l0;
            assert!(r0.abs() < 1e-12 && r1.abs() < 1e-12, "{r0} {r1}");
            drop(g);
        }
    }

    #[test]
    fn monopole_closed_form_satisfies_equation() {
        let mut rng = StdRng::seed_from_u64(321);
        let mut checked = 0;
        while checked < 100 {
            let k = rng.random::<f64>() * 4.0 - 2.0;
            let b = 1 + (rng.random::<u32>() % 3) as i64;
            let MonopoleSolution::Free { omega } = solve_monopole(k, b) else {
                continue;
            };
            checked += 1;
            let l = 0.1 + rng.random::<f64>() * 3.0;
            let residual = (k - 2.0 / b as f64 * omega.cos()) * l;
            assert!(residual.abs() < CLOSED_FORM_TOL, "k={k}, b={b}: {residual}");
        }
    }

    #[test]
    fn monopole_cases() {
        match solve_monopole(0.0, 1) {
            MonopoleSolution::Free { omega } => assert!((omega - FRAC_PI_2).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        match solve_monopole(1.0, 1) {
            MonopoleSolution::Free { omega } => assert!((omega - FRAC_PI_3).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert_eq!(solve_monopole(2.0, 1), MonopoleSolution::NoState);
    }

    #[test]
    fn h_form_matrices() {
        let g = LabeledGraph::dipole(rat(1, 1), rat(1, 1), 1);
        let m = h_form(&g).matrix;
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));

        let g = LabeledGraph::dipole(rat(1, 2), rat(1, 2), 1);
        let m = h_form(&g).matrix;
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.5, -1.0, -1.0, 0.5]));

        let g = LabeledGraph::monopole(rat(1, 1), 2);
        let m = h_form(&g).matrix;
        assert_eq!(m, DMatrix::from_row_slice(1, 1, &[0.0]));
    }

    #[test]
    fn h_form_matches_quadratic_expansion() {
        let mut rng = StdRng::seed_from_u64(5);
        let g = LabeledGraph::triplet([rat(1, 2), rat(1, 1), rat(1, 3)], [1, 2]);
        let m = h_form(&g).matrix;
        for _ in 0..10 {
            let l: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.1).collect();
            let lv = nalgebra::DVector::from_column_slice(&l);
            let quad = (lv.transpose() * &m * &lv)[(0, 0)];
            let mut direct = 0.0;
            for (v, &len) in l.iter().enumerate() {
                direct += charge_f64(&g, v) * len * len;
            }
            for w in g.oriented_edges() {
                direct -= 1.0 / g.index_of(w) as f64 * l[g.tail(w)] * l[g.head(w)];
            }
            assert!((quad - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn geometrizability_matches_examples() {
        assert_eq!(
            is_geometrizable(&LabeledGraph::dipole(rat(1, 1), rat(1, 1), 1)),
            Geometrizability::NotGeometrizable
        );
        assert_eq!(
            is_geometrizable(&LabeledGraph::dipole(rat(1, 2), rat(1, 2), 1)),
            Geometrizability::Geometrizable
        );
        assert_eq!(
            is_geometrizable(&LabeledGraph::monopole(rat(1, 1), 1)),
            Geometrizability::Geometrizable
        );
        assert_eq!(
            is_geometrizable(&LabeledGraph::dipole(rat(-1, 1), rat(1, 1), 1)),
            Geometrizability::NotApplicable
        );
        assert_eq!(
            is_geometrizable(&LabeledGraph::dipole(rat(0, 1), rat(1, 1), 1)),
            Geometrizability::NotApplicable
        );
    }

    #[test]
    fn monopole_criterion_agrees_with_closed_form() {
        for (num, den, b) in [
            (1i64, 1i64, 1i64),
            (1, 2, 1),
            (3, 2, 1),
            (2, 1, 1),
            (1, 1, 2),
            (3, 1, 1),
        ] {
            let g = LabeledGraph::monopole(rat(num, den), b);
            let geo = is_geometrizable(&g) == Geometrizability::Geometrizable;
            let solved = solve_monopole(num as f64 / den as f64, b).exists();
            assert_eq!(geo, solved, "k={num}/{den}, b={b}");
        }
    }

    #[test]
    fn decompose_dipole_returns_its_charges() {
        let g = LabeledGraph::dipole(rat(1, 4), rat(1, 1), 1);
        let s = state(&g, &[2.0, 1.0], &[FRAC_PI_3]);
        let split = decompose_state(&g, &s, SOLVER_TOL).unwrap();
        assert!((split.value(OrientedEdge::forward(0)) - 0.25).abs() < 1e-14);
        assert!((split.value(OrientedEdge::forward(0).opposite()) - 1.0).abs() < 1e-14);
        assert!(split.vertex_sum_error(&g) < 1e-14);
    }

    #[test]
    fn decompose_triplet_splits_middle_charge() {
        // k = (1/2, 1, 1/2), b = (1, 1); state l = (1,1,1), ω = (π/3, π/3).
        let g = LabeledGraph::triplet([rat(1, 2), rat(1, 1), rat(1, 2)], [1, 1]);
        let s = state(&g, &[1.0, 1.0, 1.0], &[FRAC_PI_3, FRAC_PI_3]);
        let split = decompose_state(&g, &s, SOLVER_TOL).unwrap();
        let k1_plus = split.value(OrientedEdge::forward(0).opposite());
        let k1_minus = split.value(OrientedEdge::forward(1));
        assert!((k1_plus + k1_minus - 1.0).abs() < 1e-14);
        assert!(split.vertex_sum_error(&g) < 1e-14);
    }

    #[test]
    fn right_angles_decompose_to_zero() {
        let g = LabeledGraph::circle(&[rat(0, 1); 4], 1);
        let s = state(&g, &[1.0, 2.0, 1.5, 0.7], &[FRAC_PI_2; 4]);
        let split = decompose_state(&g, &s, SOLVER_TOL).unwrap();
        // cos(π/2) is ~6e-17 in f64, scaled by bounded length ratios.
        assert!(split.k.iter().all(|k| k.abs() < 1e-14));
    }

    #[test]
    fn decompose_rejects_non_isometric_state() {
        let g = LabeledGraph::dipole(rat(1, 4), rat(1, 1), 1);
        let s = state(&g, &[1.0, 1.0], &[FRAC_PI_3]);
        assert!(matches!(
            decompose_state(&g, &s, SOLVER_TOL),
            Err(DecomposeError::StateNotIsometric { .. })
        ));
    }

    #[test]
    fn compose_two_dipoles_into_triplet() {
        let g = LabeledGraph::triplet([rat(1, 2), rat(1, 1), rat(1, 2)], [1, 1]);
        let pieces = [
            DipolePiece {
                pair: 0,
                l_tail: 1.0,
                l_head: 1.0,
                omega: FRAC_PI_3,
                k_tail: 0.5,
                k_head: 0.5,
            },
            DipolePiece {
                pair: 1,
                l_tail: 1.0,
                l_head: 1.0,
                omega: FRAC_PI_3,
                k_tail: 0.5,
                k_head: 0.5,
            },
        ];
        let s = compose_states(&g, &pieces, 1e-10).unwrap();
        assert!(residual_sup(&compat_residual(&g, &s)) < 1e-10);
    }

    #[test]
    fn compose_rejects_length_mismatch() {
        let g = LabeledGraph::triplet([rat(1, 2), rat(1, 1), rat(1, 2)], [1, 1]);
        let pieces = [
            DipolePiece {
                pair: 0,
                l_tail: 1.0,
                l_head: 1.0,
                omega: FRAC_PI_3,
                k_tail: 0.5,
                k_head: 0.5,
            },
            DipolePiece {
                pair: 1,
                l_tail: 2.0,
                l_head: 2.0,
                omega: FRAC_PI_3,
                k_tail: 0.5,
                k_head: 0.5,
            },
        ];
        match compose_states(&g, &pieces, 1e-10) {
            Err(ComposeError::LengthMismatch { vertex, .. }) => assert_eq!(vertex, "v1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn compose_single_dipole_is_identity() {
        let g = LabeledGraph::dipole(rat(1, 4), rat(1, 1), 1);
        let s = state(&g, &[2.0, 1.0], &[FRAC_PI_3]);
        let split = decompose_state(&g, &s, SOLVER_TOL).unwrap();
        let pieces = dipole_pieces(&g, &s, &split);
        let back = compose_states(&g, &pieces, 1e-12).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn balance_on_tree_is_vacuous() {
        let g = LabeledGraph::triplet([rat(1, 2), rat(1, 1), rat(1, 2)], [1, 1]);
        let split = ChargeSplitting {
            k: vec![0.5, 0.5, 0.5, 0.5],
        };
        let report = balance_check(&split, &g.cycle_basis(), 1e-12);
        assert!(report.holds());
        assert!(report.circuits.is_empty());
    }

    #[test]
    fn balance_from_state_holds_and_perturbation_breaks_it() {
        let g = LabeledGraph::circle(&[rat(1, 1); 3], 1);
        let s = state(&g, &[1.0, 1.0, 1.0], &[FRAC_PI_3; 3]);
        let split = decompose_state(&g, &s, SOLVER_TOL).unwrap();
        let circuits = g.cycle_basis();
        assert!(balance_check(&split, &circuits, 1e-12).holds());

        let mut bad = split.clone();
        bad.k[0] *= 1.5;
        let report = balance_check(&bad, &circuits, 1e-12);
        assert!(!report.holds());
        assert!(report
            .circuits
            .iter()
            .any(|c| matches!(c, CircuitBalance::Unbalanced { .. })));
    }

    #[test]
    fn solver_reproduces_dipole_closed_form() {
        let g = LabeledGraph::dipole(rat(1, 4), rat(1, 1), 1);
        let solved = solve_state(&g, &SolveOptions::default()).expect("state exists");
        assert!(solved.residual < SOLVER_TOL);
        // Closed form: ω = π/3, l0/l1 = 2.
        assert!((solved.state.angle(0) - FRAC_PI_3).abs() < 1e-9);
        let ratio = solved.state.length(0) / solved.state.length(1);
        assert!((ratio - 2.0).abs() < 1e-9, "ratio {ratio}");
    }

    #[test]
    fn solver_finds_right_angles_on_even_zero_circle() {
        let g = LabeledGraph::circle(&[rat(0, 1); 4], 1);
        let solved = solve_state(&g, &SolveOptions::default()).expect("state exists");
        for e in g.pairs() {
            assert!((solved.state.angle(e) - FRAC_PI_2).abs() < 1e-12);
        }
    }

    #[test]
    fn solver_gives_up_on_non_geometrizable_dipole() {
        let g = LabeledGraph::dipole(rat(1, 1), rat(1, 1), 1);
        let opts = SolveOptions {
            restarts: 10,
            ..SolveOptions::default()
        };
        assert!(solve_state(&g, &opts).is_none());
        assert_eq!(is_geometrizable(&g), Geometrizability::NotGeometrizable);
    }

    #[test]
    fn solver_handles_asymmetric_circle() {
        // Charges (1, 1, 3/2): H_M is indefinite ((1,1,1) gives −2.5), so a
        // state exists; finding it needs a genuinely nonuniform splitting.
        let g = LabeledGraph::circle(&[rat(1, 1), rat(1, 1), rat(3, 2)], 1);
        assert_eq!(is_geometrizable(&g), Geometrizability::Geometrizable);
        let solved = solve_state(&g, &SolveOptions::default()).expect("state exists");
        assert!(solved.residual < SOLVER_TOL, "residual {}", solved.residual);
        assert!(balance_check(&solved.splitting, &g.cycle_basis(), 1e-9).holds());
    }

    #[test]
    fn solver_handles_triplet_and_balanced_circle() {
        let g = LabeledGraph::triplet([rat(1, 2), rat(1, 1), rat(1, 2)], [1, 1]);
        let solved = solve_state(&g, &SolveOptions::default()).expect("triplet state");
        assert!(solved.residual < SOLVER_TOL);

        let g = LabeledGraph::circle(&[rat(1, 1); 3], 1);
        let solved = solve_state(&g, &SolveOptions::default()).expect("circle state");
        assert!(solved.residual < SOLVER_TOL);
        assert!(balance_check(&solved.splitting, &g.cycle_basis(), 1e-9).holds());
    }
}
