//! Critical configurations of the action and the dictionary between
//! isometric states and spectral data.
//!
//! With ρ = mΔs per pair, nondegenerate critical configurations exist
//! exactly for ρ = 0 (massless, flat + parallel) and 1 < |ρ| < 2 (massive,
//! with pinned field magnitudes); |ρ| ∈ {1, 2} admits only degenerate
//! configurations and every other ρ none. The massive dictionary
//!
//!   λ_w|ξ_w|² = |k_w| l_w²,   λ_w(|ρ_w|−1) = |k_w|,   ψ_w = cos ω_w / b_w,
//!   arg ξ_w-head − arg ξ_w-tail + γ_w = (2n+1)π,
//!
//! turns an isometric state plus a charge splitting into a critical
//! configuration once Δs is chosen so the per-vertex length constraint
//!
//!   λ_w|ξ_w|² = (λ_w² + λ_{−w}²)(|ρ_w|−1)(2−|ρ_w|)/Δs²(w)
//!
//! is consistent; that fixes Δs along a spanning tree from one seed value
//! δ0 = δ(ρ_seed) of the decreasing bijection δ(ρ) = (2−ρ)/((ρ−1)ρ²), with
//! circuit closure equivalent to the splitting balance condition. Zero
//! pairs take the degenerate branch ρ = ±1, ψ = 0, ξ = 0 and cut the graph
//! into independently seeded pieces. Negative-charge pieces run the
//! sign-mirrored branch ρ ∈ (−2,−1) with sgn Δs(w) = sgn k_w.

use crate::action::{self, ActionValue, ElResidual};
use crate::compat::{
    balance_check, compat_residual, decompose_state, residual_sup, solve_dipole, ChargeSplitting,
    CircuitBalance, DecomposeError, DipoleSolution, IsometricState,
};
use crate::gauge::{
    gauge_transform, Connection, GaugeConfiguration, GaugeElement, HermitianStructure, Section,
};
use crate::graph::{LabeledGraph, OrientedEdge};
use crate::numeric::{self, LsqOptions};
use crate::spectral::{build_triple, DsFunction, SpectralTriple, C};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;
use thiserror::Error;

fn c(re: f64, im: f64) -> C {
    Complex64::new(re, im)
}

/// Default acceptance threshold for realized configurations.
pub const CRITICAL_TOL: f64 = 1e-9;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SolutionsError {
    #[error("ρ = {rho} is in the {class:?} band; no nondegenerate massive solution")]
    PhaseError { rho: f64, class: PhaseClass },
    #[error("ρ and Δs must have the same sign (m = ρ/Δs > 0): ρ = {rho}, Δs = {ds}")]
    SignMismatch { rho: f64, ds: f64 },
    #[error("ρ = {0} outside the domain (1, 2)")]
    RhoDomain(f64),
    #[error("δ = {0} must be positive")]
    DeltaDomain(f64),
    #[error("charge in a coupling denominator is zero")]
    ZeroCharge,
    #[error("|k|b = {kb} ≥ 2: no geometric counterpart for the monopole")]
    NoGeometricCounterpart { kb: f64 },
    #[error("splitting does not reproduce the vertex charges (gap {gap})")]
    SplittingInconsistent { gap: f64 },
    #[error("pair {edge}: split charges have opposite signs")]
    OrientationError { edge: String },
    #[error("pair {edge}: one side of the splitting vanishes but the other does not")]
    MixedZeroPair { edge: String },
    #[error("pair {edge}: cos²ω disagrees with k_w k_(-w) b² (gap {gap})")]
    AngleMismatch { edge: String, gap: f64 },
    #[error("pair {edge}: nondegeneracy 0 < k_w k_(-w) b² < 1 fails (t = {t})")]
    NondegeneracyViolated { edge: String, t: f64 },
    #[error("Δs not well defined: balance fails on circuit [{circuit}] (product {product})")]
    BalanceViolated { circuit: String, product: f64 },
    #[error("mass and δ0 must be positive: m = {mass}, δ0 = {delta0}")]
    BadParams { mass: f64, delta0: f64 },
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Action(#[from] action::ActionError),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
}

// ---------------------------------------------------------------------------
// The ρ-band classifier.
// ---------------------------------------------------------------------------

/// Bands of ρ = mΔs according to the existence of critical configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseClass {
    /// ρ = 0: flat connection, parallel field, free scale.
    NondegenerateMassless,
    /// 1 < |ρ| < 2: nondegenerate solutions with pinned magnitudes.
    NondegenerateMassive,
    /// |ρ| ∈ {1, 2}: only degenerate solutions (|ξ₀||ξ₁| = 0).
    Degenerate,
    /// 0 < |ρ| < 1 or |ρ| > 2: no critical configuration.
    Empty,
}

impl PhaseClass {
    pub fn nondegenerate(self) -> bool {
        matches!(
            self,
            PhaseClass::NondegenerateMassless | PhaseClass::NondegenerateMassive
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            PhaseClass::NondegenerateMassless => "nondegenerate-massless",
            PhaseClass::NondegenerateMassive => "nondegenerate-massive",
            PhaseClass::Degenerate => "degenerate",
            PhaseClass::Empty => "none",
        }
    }
}

pub fn massgap_classify(rho: f64) -> PhaseClass {
    let r = rho.abs();
    if r == 0.0 {
        PhaseClass::NondegenerateMassless
    } else if r == 1.0 || r == 2.0 {
        PhaseClass::Degenerate
    } else if r > 1.0 && r < 2.0 {
        PhaseClass::NondegenerateMassive
    } else {
        PhaseClass::Empty
    }
}

// ---------------------------------------------------------------------------
// Closed-form dipole configurations.
// ---------------------------------------------------------------------------

/// A gauge configuration on the standard one-edge graph, bundled with its
/// spectral triple.
#[derive(Clone, Debug)]
pub struct DipoleConfig {
    pub triple: SpectralTriple,
    pub config: GaugeConfiguration,
}

impl DipoleConfig {
    pub fn el_residual(&self) -> Result<ElResidual, action::ActionError> {
        action::el_residual(
            &self.config.connection,
            &self.config.section,
            &self.config.lambda,
            self.config.mass,
            &self.triple,
        )
    }

    pub fn action(&self) -> ActionValue {
        action::action_s(
            &self.config.connection,
            &self.config.section,
            &self.config.lambda,
            self.config.mass,
            &self.triple,
        )
    }
}

fn dipole_triple_with_ds(ds: f64) -> SpectralTriple {
    let g = LabeledGraph::dipole(
        num_rational::Rational64::new(0, 1),
        num_rational::Rational64::new(0, 1),
        1,
    );
    build_triple(&g, DsFunction::constant(&g, ds).unwrap()).unwrap()
}

fn loop_triple_with_ds(ds: f64) -> SpectralTriple {
    let g = LabeledGraph::monopole(num_rational::Rational64::new(0, 1), 1);
    build_triple(&g, DsFunction::constant(&g, ds).unwrap()).unwrap()
}

/// Massless critical configuration on the dipole: flat (`ψ₀₁ψ₁₀ = 1`),
/// parallel (`∇ξ = 0`), `S = 0`. Canonically `|ξ₁| = 1`, `Δs = 1`.
pub fn solve_massless_dipole(lambda0: f64, lambda1: f64, gamma: f64) -> DipoleConfig {
    solve_massless_dipole_with_ds(lambda0, lambda1, gamma, 1.0)
}

pub fn solve_massless_dipole_with_ds(
    lambda0: f64,
    lambda1: f64,
    gamma: f64,
    ds: f64,
) -> DipoleConfig {
    let triple = dipole_triple_with_ds(ds);
    let lambda = HermitianStructure {
        lambda: vec![lambda0, lambda1],
    };
    let p = (lambda0 * lambda1).sqrt();
    let connection = Connection::lambda_hermitian(triple.graph(), &lambda, &[p], &[gamma]);
    // α₁ − α₀ + γ = 0: even multiple of π.
    let xi0 = C::from_polar((lambda1 / lambda0).sqrt(), gamma);
    let section = Section {
        xi: vec![xi0, C::ONE],
    };
    DipoleConfig {
        triple,
        config: GaugeConfiguration {
            lambda,
            connection,
            section,
            mass: 0.0,
        },
    }
}

/// Massive critical configuration on the dipole for 1 ≤ |ρ| ≤ 2 with
/// `m = ρ/Δs > 0`. Interior ρ gives the nondegenerate solution with
///
///   ψ = √(λ₀λ₁)(|ρ|−1),   λ₀|ξ₀|² = λ₁|ξ₁|² = (λ₀²+λ₁²)(|ρ|−1)(2−|ρ|)/Δs²,
///
/// and odd phase parity; |ρ| = 1 returns the ψ = 0, ξ = 0 degeneration and
/// |ρ| = 2 the ξ = 0, ψ = √(λ₀λ₁) one.
pub fn solve_massive_dipole(
    lambda0: f64,
    lambda1: f64,
    rho: f64,
    ds: f64,
    gamma: f64,
) -> Result<DipoleConfig, SolutionsError> {
    if ds == 0.0 || rho * ds <= 0.0 {
        return Err(SolutionsError::SignMismatch { rho, ds });
    }
    let r = rho.abs();
    if !(1.0..=2.0).contains(&r) {
        return Err(SolutionsError::PhaseError {
            rho,
            class: massgap_classify(rho),
        });
    }
    let triple = dipole_triple_with_ds(ds);
    let lambda = HermitianStructure {
        lambda: vec![lambda0, lambda1],
    };
    let p = (lambda0 * lambda1).sqrt() * (r - 1.0);
    let connection = Connection::lambda_hermitian(triple.graph(), &lambda, &[p], &[gamma]);
    let e_len = (lambda0 * lambda0 + lambda1 * lambda1) * (r - 1.0) * (2.0 - r) / (ds * ds);
    // α₁ − α₀ + γ = π: odd parity.
    let xi0 = C::from_polar((e_len / lambda0).sqrt(), gamma - PI);
    let xi1 = c((e_len / lambda1).sqrt(), 0.0);
    let section = Section { xi: vec![xi0, xi1] };
    let mass = r / ds.abs();
    Ok(DipoleConfig {
        triple,
        config: GaugeConfiguration {
            lambda,
            connection,
            section,
            mass,
        },
    })
}

/// Massless dictionary for a geometric dipole: `λ_j = |k_j|`,
/// `ψ_w = cos ω / b`, `|ξ_j| = l_j`, phases tied by `α₁ − α₀ + γ = 2nπ`,
/// `m = 0`. Requires `0 < k₀k₁b² < 1`.
pub fn massless_dipole_dictionary(
    k0: f64,
    k1: f64,
    b: i64,
    gamma: f64,
) -> Result<DipoleConfig, SolutionsError> {
    let DipoleSolution::Fixed { omega, l0, l1 } = solve_dipole(k0, k1, b) else {
        return Err(SolutionsError::NondegeneracyViolated {
            edge: "e0".into(),
            t: k0 * k1 * (b * b) as f64,
        });
    };
    let triple = dipole_triple_with_ds(1.0);
    let lambda = HermitianStructure {
        lambda: vec![k0.abs(), k1.abs()],
    };
    let p = omega.cos() / b as f64;
    let connection = Connection::lambda_hermitian(triple.graph(), &lambda, &[p], &[gamma]);
    // Total connection phase includes π when the signed ψ is negative.
    let gamma_total = connection.gamma(0);
    let section = Section {
        xi: vec![C::from_polar(l0, gamma_total), c(l1, 0.0)],
    };
    Ok(DipoleConfig {
        triple,
        config: GaugeConfiguration {
            lambda,
            connection,
            section,
            mass: 0.0,
        },
    })
}

/// Monopole (loop) spectral model: the dipole block with the
/// orientation-symmetric identification `ψ₀₁ = ψ₁₀`, `λ₀ = λ₁`, `ξ₀ = ξ₁`,
/// dictionary `λ(|ρ|−1) = |k|/2`, `ψ = cos ω / b = k/2`.
pub fn solve_monopole_spectral(k: f64, b: i64, rho: f64) -> Result<MonopoleConfig, SolutionsError> {
    let kb = k * b as f64;
    if kb.abs() >= 2.0 {
        return Err(SolutionsError::NoGeometricCounterpart { kb });
    }
    let omega = (kb / 2.0).acos();
    if k == 0.0 {
        // Degenerate branch: ρ = ±1, ψ = 0, free λ (defaulted to 1), ξ = 0.
        let ds = if rho < 0.0 { -1.0 } else { 1.0 };
        let triple = loop_triple_with_ds(ds);
        let lambda = HermitianStructure::uniform(triple.graph(), 1.0);
        let connection = Connection::lambda_hermitian(triple.graph(), &lambda, &[0.0], &[0.0]);
        let section = Section::zeros(triple.graph());
        return Ok(MonopoleConfig {
            omega,
            dipole: DipoleConfig {
                triple,
                config: GaugeConfiguration {
                    lambda,
                    connection,
                    section,
                    mass: 1.0,
                },
            },
        });
    }
    if k * rho <= 0.0 {
        return Err(SolutionsError::SignMismatch {
            rho,
            ds: k.signum(),
        });
    }
    let r = rho.abs();
    if !(r > 1.0 && r < 2.0) {
        return Err(SolutionsError::PhaseError {
            rho,
            class: massgap_classify(rho),
        });
    }
    let ds = rho.signum();
    let triple = loop_triple_with_ds(ds);
    let lam = k.abs() / (2.0 * (r - 1.0));
    let lambda = HermitianStructure::uniform(triple.graph(), lam);
    // ψ_w = cos ω / b = k/2 (signed); γ = π makes ψ₀₁ = ψ₁₀ and gives the
    // odd phase parity with equal section phases at the single vertex.
    let p = omega.cos() / b as f64;
    let connection = Connection::lambda_hermitian(triple.graph(), &lambda, &[p], &[PI]);
    let e_len = 2.0 * lam * lam * (r - 1.0) * (2.0 - r) / (ds * ds);
    let magnitude = (e_len / lam).sqrt();
    let section = Section {
        xi: vec![c(magnitude, 0.0); 2],
    };
    let mass = r / ds.abs();
    Ok(MonopoleConfig {
        omega,
        dipole: DipoleConfig {
            triple,
            config: GaugeConfiguration {
                lambda,
                connection,
                section,
                mass,
            },
        },
    })
}

/// Monopole configuration: the underlying loop-block data plus the
/// geometric angle it models.
#[derive(Clone, Debug)]
pub struct MonopoleConfig {
    pub omega: f64,
    pub dipole: DipoleConfig,
}

/// Which exponent ties the monopole field magnitude to the fiber length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MonopoleLengthRule {
    /// `λ|ξ|² = (k/2) l²`, consistent with the dipole dictionary (default).
    Squared,
    /// `λ|ξ| = k l`, the linear variant as printed for the monopole.
    Linear,
}

/// Fiber length implied by the monopole dictionary under either rule.
pub fn monopole_length(cfg: &MonopoleConfig, k: f64, rule: MonopoleLengthRule) -> f64 {
    let lam = cfg.dipole.config.lambda.lambda[0];
    let xi = cfg.dipole.config.section.xi[0].norm();
    match rule {
        MonopoleLengthRule::Squared => (lam * xi * xi / (k.abs() / 2.0)).sqrt(),
        MonopoleLengthRule::Linear => lam * xi / k.abs(),
    }
}

// ---------------------------------------------------------------------------
// The δ(ρ) bijection and the coupling constants.
// ---------------------------------------------------------------------------

/// `δ(ρ) = (2−ρ)/((ρ−1)ρ²)`, strictly decreasing from +∞ to 0 on (1, 2).
pub fn delta_of_rho(rho: f64) -> Result<f64, SolutionsError> {
    if !(rho > 1.0 && rho < 2.0) {
        return Err(SolutionsError::RhoDomain(rho));
    }
    Ok((2.0 - rho) / ((rho - 1.0) * rho * rho))
}

/// Inverse of [`delta_of_rho`] by bisection, resolved to machine precision.
pub fn rho_of_delta(delta: f64) -> Result<f64, SolutionsError> {
    if !(delta > 0.0) {
        return Err(SolutionsError::DeltaDomain(delta));
    }
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let d = (2.0 - mid) / ((mid - 1.0) * mid * mid);
        if d > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Coupling `K_{w,w'} = ((k_w² + k_{−w}²)/(k_{w'}² + k_{−w'}²))·(k_{w'}/k_w)`
/// between two flags sharing a vertex.
pub fn coupling_k(k_w: f64, k_mw: f64, k_wp: f64, k_mwp: f64) -> Result<f64, SolutionsError> {
    if k_w == 0.0 || k_wp == 0.0 || (k_wp * k_wp + k_mwp * k_mwp) == 0.0 {
        return Err(SolutionsError::ZeroCharge);
    }
    Ok((k_w * k_w + k_mw * k_mw) / (k_wp * k_wp + k_mwp * k_mwp) * (k_wp / k_w))
}

// ---------------------------------------------------------------------------
// Geometric → spectral realization.
// ---------------------------------------------------------------------------

/// A spectral realization of an isometric state: the full gauge
/// configuration, the triple carrying Δs, the sign-carrying orientations
/// W_s, realized per-vertex lengths, and the source data.
#[derive(Clone, Debug)]
pub struct SpectralRealization {
    pub triple: SpectralTriple,
    pub config: GaugeConfiguration,
    /// Orientations with `sgn Δs(w) = sgn k_w` (one per nonzero pair).
    pub w_s: Vec<OrientedEdge>,
    /// Length implied by `λ_w|ξ_w|² = |k_w| l²` per vertex; `None` where all
    /// incident pairs are degenerate.
    pub realized_lengths: Vec<Option<f64>>,
    pub state: IsometricState,
    pub splitting: ChargeSplitting,
}

/// Builds the critical configuration realizing a state and splitting.
///
/// `mass` and `delta0` are free positive parameters: `delta0` seeds the
/// Δs propagation on the piece containing `seed_edge` (other pieces seed
/// their lowest-index pair) and fixes the overall geometric scale of each
/// piece; the input lengths contribute their ratios.
pub fn geometric_to_spectral(
    g: &LabeledGraph,
    state: &IsometricState,
    splitting: &ChargeSplitting,
    mass: f64,
    delta0: f64,
    seed_edge: Option<usize>,
) -> Result<SpectralRealization, SolutionsError> {
    if !(mass > 0.0) || !(delta0 > 0.0) {
        return Err(SolutionsError::BadParams { mass, delta0 });
    }
    let gap = splitting.vertex_sum_error(g);
    if gap > 1e-7 {
        return Err(SolutionsError::SplittingInconsistent { gap });
    }
    let zero_tol = 1e-9;
    let m = g.pair_count();

    // Classify pairs and validate the splitting against the state.
    let mut zero_pair = vec![false; m];
    for e in 0..m {
        let w = OrientedEdge::forward(e);
        let (kf, kb) = (splitting.value(w), splitting.value(w.opposite()));
        let (zf, zb) = (kf.abs() <= zero_tol, kb.abs() <= zero_tol);
        if zf != zb {
            return Err(SolutionsError::MixedZeroPair {
                edge: g.edge_id(e).to_string(),
            });
        }
        if zf {
            zero_pair[e] = true;
            continue;
        }
        if kf * kb < 0.0 {
            return Err(SolutionsError::OrientationError {
                edge: g.edge_id(e).to_string(),
            });
        }
        let b2 = (g.index_of_pair(e) * g.index_of_pair(e)) as f64;
        let t = kf * kb * b2;
        if t <= 0.0 || t >= 1.0 {
            return Err(SolutionsError::NondegeneracyViolated {
                edge: g.edge_id(e).to_string(),
                t,
            });
        }
        let cos = state.angle(e).cos();
        let angle_gap = (cos * cos - t).abs();
        if angle_gap > 1e-7 {
            return Err(SolutionsError::AngleMismatch {
                edge: g.edge_id(e).to_string(),
                gap: angle_gap,
            });
        }
        if cos.signum() != kf.signum() {
            return Err(SolutionsError::OrientationError {
                edge: g.edge_id(e).to_string(),
            });
        }
    }

    // Circuit balance must hold where Δs has to close up.
    let circuits = g.cycle_basis();
    let report = balance_check(splitting, &circuits, zero_tol);
    for (circuit, status) in circuits.iter().zip(&report.circuits) {
        if let CircuitBalance::Unbalanced { product } = status {
            let ids: Vec<String> = circuit.iter().map(|w| g.oriented_id(*w)).collect();
            return Err(SolutionsError::BalanceViolated {
                circuit: ids.join(", "),
                product: *product,
            });
        }
    }

    // Propagate δ over each piece of the graph cut along zero pairs.
    let mut delta = vec![f64::NAN; m];
    let coupling = |w: OrientedEdge, wp: OrientedEdge| -> f64 {
        let (kw, kmw) = (splitting.value(w), splitting.value(w.opposite()));
        let (kwp, kmwp) = (splitting.value(wp), splitting.value(wp.opposite()));
        ((kw * kw + kmw * kmw) / (kwp * kwp + kmwp * kmwp) * (kwp / kw)).abs()
    };
    for start in 0..m {
        if zero_pair[start] || !delta[start].is_nan() {
            continue;
        }
        // Choose the seed for the piece that contains `seed_edge`.
        let piece_seed = match seed_edge {
            Some(se) if !zero_pair[se] && same_piece(g, &zero_pair, start, se) => se,
            _ => start,
        };
        delta[piece_seed] = delta0;
        let mut queue = std::collections::VecDeque::from([piece_seed]);
        while let Some(e) = queue.pop_front() {
            for w in [
                OrientedEdge::forward(e),
                OrientedEdge::forward(e).opposite(),
            ] {
                let v = g.tail(w);
                for &wp in g.flags(v) {
                    if wp == w || zero_pair[wp.pair] || !delta[wp.pair].is_nan() {
                        continue;
                    }
                    delta[wp.pair] = coupling(w, wp) * delta[e];
                    queue.push_back(wp.pair);
                }
            }
        }
    }

    // Dictionary: per nonzero pair set ρ, Δs, λ, ψ, |ξ|.
    let mut ds_values = vec![0.0; m];
    let mut lambda = vec![1.0; g.oriented_count()];
    let mut p_signed = vec![0.0; m];
    let mut xi_abs = vec![0.0; g.oriented_count()];
    let mut w_s = Vec::new();
    for e in 0..m {
        if zero_pair[e] {
            // Degenerate branch: ρ = ±1, ψ = 0, ξ = 0, free λ = 1.
            ds_values[e] = 1.0 / mass;
            continue;
        }
        let w = OrientedEdge::forward(e);
        let (kf, kb) = (splitting.value(w), splitting.value(w.opposite()));
        let r = rho_of_delta(delta[e])?;
        let sign = kf.signum();
        ds_values[e] = sign * r / mass;
        w_s.push(w);
        lambda[w.index()] = kf.abs() / (r - 1.0);
        lambda[w.opposite().index()] = kb.abs() / (r - 1.0);
        p_signed[e] = state.angle(e).cos() / g.index_of_pair(e) as f64;
        let e_len = (lambda[w.index()] * lambda[w.index()]
            + lambda[w.opposite().index()] * lambda[w.opposite().index()])
            * (r - 1.0)
            * (2.0 - r)
            / (ds_values[e] * ds_values[e]);
        xi_abs[w.index()] = (e_len / lambda[w.index()]).sqrt();
        xi_abs[w.opposite().index()] = (e_len / lambda[w.opposite().index()]).sqrt();
    }

    // Phases: one angle per vertex (U₀ compatible), with γ on non-tree
    // pairs absorbing circuit holonomy. The condition per nonzero pair is
    // arg ξ(head) − arg ξ(tail) + arg ψ₀₁ = (2n+1)π.
    let mut alpha = vec![f64::NAN; g.vertex_count()];
    let mut gamma_set = vec![0.0; m];
    let mut seen_pair = vec![false; m];
    for root in 0..g.vertex_count() {
        if !alpha[root].is_nan() {
            continue;
        }
        alpha[root] = 0.0;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &w in g.flags(v) {
                let e = w.pair;
                if zero_pair[e] || seen_pair[e] {
                    continue;
                }
                let u = g.head(w);
                if alpha[u].is_nan() {
                    seen_pair[e] = true;
                    // Tree pair with γ_set = 0: α(head) = α(tail) + π − phase(p).
                    let p_phase = if p_signed[e] >= 0.0 { 0.0 } else { PI };
                    let (t_e, h_e) = (
                        g.tail(OrientedEdge::forward(e)),
                        g.head(OrientedEdge::forward(e)),
                    );
                    if v == t_e && u == h_e {
                        alpha[u] = alpha[v] + PI - p_phase;
                    } else {
                        alpha[u] = alpha[v] - PI + p_phase;
                    }
                    stack.push(u);
                }
            }
        }
    }
    for e in 0..m {
        if zero_pair[e] || seen_pair[e] {
            continue;
        }
        // Non-tree (or loop) pair: choose γ to satisfy the phase condition.
        let w = OrientedEdge::forward(e);
        let p_phase = if p_signed[e] >= 0.0 { 0.0 } else { PI };
        gamma_set[e] = PI - p_phase - (alpha[g.head(w)] - alpha[g.tail(w)]);
    }
    for a in alpha.iter_mut() {
        if a.is_nan() {
            *a = 0.0;
        }
    }

    // Assemble the configuration.
    let triple = build_triple(g, DsFunction::from_pairs(ds_values)?)
        .expect("ds covers the graph by construction");
    let hermitian = HermitianStructure { lambda };
    let connection = Connection::lambda_hermitian(g, &hermitian, &p_signed, &gamma_set);
    let mut xi = vec![C::ZERO; g.oriented_count()];
    for w in g.oriented_edges() {
        if !zero_pair[w.pair] {
            xi[w.index()] = C::from_polar(xi_abs[w.index()], alpha[g.tail(w)]);
        }
    }
    let section = Section { xi };

    let mut realized_lengths = vec![None; g.vertex_count()];
    for v in 0..g.vertex_count() {
        for &w in g.flags(v) {
            if zero_pair[w.pair] {
                continue;
            }
            let k = splitting.value(w).abs();
            let l2 = hermitian.value(w) * section.value(w).norm_sqr() / k;
            realized_lengths[v] = Some(l2.sqrt());
            break;
        }
    }

    Ok(SpectralRealization {
        triple,
        config: GaugeConfiguration {
            lambda: hermitian,
            connection,
            section,
            mass,
        },
        w_s,
        realized_lengths,
        state: state.clone(),
        splitting: splitting.clone(),
    })
}

fn same_piece(g: &LabeledGraph, zero_pair: &[bool], e1: usize, e2: usize) -> bool {
    let comp = g.components_over(|e| !zero_pair[e]);
    comp[g.tail(OrientedEdge::forward(e1))] == comp[g.tail(OrientedEdge::forward(e2))]
}

/// Spectral error data extracted from the splitting compatible with a
/// spectral error. Aggregated pass/fail verdict of a realization.
#[derive(Clone, Debug)]
pub struct CriticalityReport {
    pub action: ActionValue,
    pub maxwell_residual: f64,
    pub wave_residual: f64,
    pub hermitian_residual: f64,
    /// Max violation of the per-pair length law and the per-vertex agreement
    /// of implied lengths.
    pub length_consistency: f64,
    /// |S − S'| under a fixed deterministic gauge transformation.
    pub gauge_invariance: f64,
    pub phase_n: Vec<i64>,
    pub tol: f64,
    pub passed: bool,
}

/// Verifies a realization: EL residuals, Λ-hermitian gap, the length law
/// per pair and per vertex, and a gauge-invariance spot check.
pub fn verify_critical(
    r: &SpectralRealization,
    tol: f64,
) -> Result<CriticalityReport, SolutionsError> {
    let g = r.triple.graph();
    let cfg = &r.config;
    let el = action::el_residual(
        &cfg.connection,
        &cfg.section,
        &cfg.lambda,
        cfg.mass,
        &r.triple,
    )?;

    let maxwell_residual = el.maxwell.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let wave_residual = el.wave.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let hermitian_residual = cfg.connection.hermitian_gap(&cfg.lambda);

    // Length law per pair and consistency per vertex.
    let mut length_consistency: f64 = 0.0;
    let zero_tol = 1e-9;
    for e in 0..g.pair_count() {
        let w = OrientedEdge::forward(e);
        let (k0, k1) = (r.splitting.value(w), r.splitting.value(w.opposite()));
        if k0.abs() <= zero_tol && k1.abs() <= zero_tol {
            continue;
        }
        let (l0, l1) = cfg.lambda.pair(e);
        let ds = r.triple.delta(e);
        let rho = (cfg.mass * ds).abs();
        let e_len = (l0 * l0 + l1 * l1) * (rho - 1.0) * (2.0 - rho) / (ds * ds);
        let a = l0 * cfg.section.xi[2 * e].norm_sqr();
        let b = l1 * cfg.section.xi[2 * e + 1].norm_sqr();
        let scale = e_len.abs().max(1e-6);
        length_consistency = length_consistency.max((a - e_len).abs() / scale);
        length_consistency = length_consistency.max((b - e_len).abs() / scale);
    }
    for v in 0..g.vertex_count() {
        let mut implied: Vec<f64> = Vec::new();
        for &w in g.flags(v) {
            let k = r.splitting.value(w);
            if k.abs() <= zero_tol {
                continue;
            }
            implied.push(cfg.lambda.value(w) * cfg.section.value(w).norm_sqr() / k.abs());
        }
        if implied.len() > 1 {
            let max = implied.iter().fold(f64::MIN, |m, &x| m.max(x));
            let min = implied.iter().fold(f64::MAX, |m, &x| m.min(x));
            length_consistency = length_consistency.max((max - min) / max.abs().max(1e-6));
        }
    }

    // Gauge-invariance spot check with a fixed, deterministic element.
    let phases: Vec<f64> = (0..g.vertex_count())
        .map(|v| 0.7 * (v as f64 + 1.0))
        .collect();
    let u = GaugeElement::per_vertex(g, &phases);
    let transformed = gauge_transform(&u, cfg);
    let s0 = action::action_s(
        &cfg.connection,
        &cfg.section,
        &cfg.lambda,
        cfg.mass,
        &r.triple,
    );
    let s1 = action::action_s(
        &transformed.connection,
        &transformed.section,
        &transformed.lambda,
        transformed.mass,
        &r.triple,
    );
    let gauge_invariance = (s0.total - s1.total).abs() / s0.total.abs().max(1.0);

    let passed = maxwell_residual < tol
        && wave_residual < tol
        && hermitian_residual < tol
        && length_consistency < tol
        && gauge_invariance < tol;
    Ok(CriticalityReport {
        action: s0,
        maxwell_residual,
        wave_residual,
        hermitian_residual,
        length_consistency,
        gauge_invariance,
        phase_n: el.phase_n,
        tol,
        passed,
    })
}

/// Decompose → realize → verify, the pipeline behind `realize` commands.
/// A caller-supplied splitting replaces the canonical decomposition.
pub fn realize_pipeline(
    g: &LabeledGraph,
    state: &IsometricState,
    splitting: Option<&ChargeSplitting>,
    mass: f64,
    delta0: f64,
    seed_edge: Option<usize>,
    tol: f64,
) -> Result<(SpectralRealization, CriticalityReport), SolutionsError> {
    let splitting = match splitting {
        Some(s) => s.clone(),
        None => {
            let residual = residual_sup(&compat_residual(g, state));
            decompose_state(g, state, (residual * 10.0).max(crate::compat::SOLVER_TOL))?
        }
    };
    let realization = geometric_to_spectral(g, state, &splitting, mass, delta0, seed_edge)?;
    let report = verify_critical(&realization, tol)?;
    Ok((realization, report))
}

// ---------------------------------------------------------------------------
// Numeric search companion for the ρ-band theorem.
// ---------------------------------------------------------------------------

/// A nondegenerate numeric solution of the real EL system at fixed ρ.
#[derive(Clone, Copy, Debug)]
pub struct NondegSolution {
    pub psi: f64,
    pub xi0: f64,
    pub xi1: f64,
    /// Parity sign (−1)ⁿ used in the real equations.
    pub parity: f64,
    pub residual: f64,
}

/// Attempts to solve the real-reduced EL system with Δs = 1 at the given ρ
/// by seeded least squares from random starts, for both phase parities.
/// Returns a solution with `|ξ₀ξ₁|` bounded away from zero if one exists.
pub fn search_nondegenerate(
    rho: f64,
    lambda0: f64,
    lambda1: f64,
    seed: u64,
    restarts: usize,
) -> Option<NondegSolution> {
    let rho2 = rho * rho;
    let system = |s: f64| {
        move |x: &[f64], r: &mut Vec<f64>| {
            let (psi, x0, x1) = (x[0], x[1], x[2]);
            r.clear();
            r.push(
                (psi * psi / (lambda0 * lambda1) - 1.0)
                    * (lambda0 / lambda1 + lambda1 / lambda0)
                    * psi
                    - s * x0 * x1
                    + 0.5 * (x0 * x0 / lambda1 + x1 * x1 / lambda0) * psi,
            );
            r.push(0.5 * (psi * psi / lambda1 + lambda0 * (1.0 - rho2)) * x0 - s * psi * x1);
            r.push(-s * psi * x0 + 0.5 * (psi * psi / lambda0 + lambda1 * (1.0 - rho2)) * x1);
        }
    };
    let mut rng = StdRng::seed_from_u64(seed ^ rho.to_bits());
    let scale = (lambda0 * lambda1).sqrt();
    let opts = LsqOptions {
        max_iters: 120,
        ..LsqOptions::default()
    };
    let mut best: Option<NondegSolution> = None;
    for s in [1.0, -1.0] {
        let f = system(s);
        for _ in 0..restarts {
            let start = [
                scale * (rng.random::<f64>() * 4.0 - 2.0),
                0.1 + 1.4 * rng.random::<f64>(),
                0.1 + 1.4 * rng.random::<f64>(),
            ];
            let res = numeric::least_squares(&f, &start, &opts);
            let nondeg = (res.x[1] * res.x[2]).abs() > 1e-3;
            if res.residual_sup() < 1e-9 && nondeg {
                let sol = NondegSolution {
                    psi: res.x[0],
                    xi0: res.x[1],
                    xi1: res.x[2],
                    parity: s,
                    residual: res.residual_sup(),
                };
                if best.is_none_or(|b| sol.residual < b.residual) {
                    best = Some(sol);
                }
            }
        }
        if best.is_some() {
            break;
        }
    }
    best
}

/// One row of a ρ scan: the classifier verdict versus the numeric search.
#[derive(Clone, Debug)]
pub struct MassgapRow {
    pub rho: f64,
    pub class: PhaseClass,
    pub found_numeric: bool,
    pub residual: f64,
}

/// Grid scan comparing [`massgap_classify`] with [`search_nondegenerate`].
/// The grid formula hits band boundaries exactly for symmetric ranges.
/// Grid points are scanned in parallel; each point seeds its own search,
/// so the result is deterministic for a fixed seed.
pub fn massgap_scan(
    rho_min: f64,
    rho_max: f64,
    steps: usize,
    lambda0: f64,
    lambda1: f64,
    seed: u64,
) -> Vec<MassgapRow> {
    let n = steps.max(2);
    let grid: Vec<f64> = (0..n)
        .map(|i| (rho_min * (n - 1 - i) as f64 + rho_max * i as f64) / (n - 1) as f64)
        .collect();
    let scan_point = |rho: f64| {
        let class = massgap_classify(rho);
        let found = search_nondegenerate(rho, lambda0, lambda1, seed, 16);
        MassgapRow {
            rho,
            class,
            found_numeric: found.is_some(),
            residual: found.map_or(f64::NAN, |s| s.residual),
        }
    };
    let workers = std::thread::available_parallelism()
        .map_or(1, |p| p.get())
        .min(n);
    if workers <= 1 {
        return grid.into_iter().map(scan_point).collect();
    }
    let mut rows: Vec<Option<MassgapRow>> = vec![None; n];
    let chunk = n.div_ceil(workers);
    std::thread::scope(|scope| {
        for (slot, rhos) in rows.chunks_mut(chunk).zip(grid.chunks(chunk)) {
            let scan_point = &scan_point;
            scope.spawn(move || {
                for (out, &rho) in slot.iter_mut().zip(rhos) {
                    *out = Some(scan_point(rho));
                }
            });
        }
    });
    rows.into_iter()
        .map(|r| r.expect("every grid point scanned"))
        .collect()
}

/// Counts rows where the classifier and the numeric search disagree,
/// skipping the stated neighborhoods of the band boundaries {0, ±1, ±2}.
pub fn massgap_mismatches(rows: &[MassgapRow], boundary_margin: f64) -> usize {
    rows.iter()
        .filter(|row| {
            let r = row.rho.abs();
            let near_boundary = [0.0, 1.0, 2.0]
                .iter()
                .any(|b| (r - b).abs() < boundary_margin);
            !near_boundary && (row.class.nondegenerate() != row.found_numeric)
        })
        .count()
}
