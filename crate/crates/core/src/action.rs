//! The interaction action `S(∇,ξ) = YM(∇) + E_∇(ξ) − m²‖ξ‖²` and its
//! Euler–Lagrange residuals.
//!
//! Residuals are computed along two independent routes and compared:
//!
//! * the *operator* route — per pair, `ω = d*(θλ) + θλΦ* − Φθλ` and
//!   `R = (ω − ω*) + (σa* − aσ*)` for the second-pair equation,
//!   `X = d*(λσ) + Φ*λσ` against `m²λa` for the wave equation;
//! * the *ψ-coordinate* route — the equations as written in the
//!   ψ-variables,
//!
//!     (1/Δs²)(ψ₀₁ψ₁₀ − 1)(λ₀ψ₁₀ + λ₁ψ̄₀₁) = ξ̄₀ξ₁ − ½(ψ₁₀|ξ₀|² + ψ̄₀₁|ξ₁|²)
//!     ½(λ₀(ψ̄₀₁ψ̄₁₀ + 1) − λ₀ρ²)ξ₀ − λ₀ψ₀₁ξ₁ = 0
//!     −λ₁ψ₁₀ξ₀ + ½(λ₁(ψ₀₁ψ₁₀ + 1) − λ₁ρ²)ξ₁ = 0,     ρ = mΔs.
//!
//! On Λ-hermitian configurations the two routes agree after the fixed
//! normalization `maxwell_op = (Δs/2)·conj R₀₁`, `wave_op = (Δs²/2)(X − m²λa)`
//! per entry; the derivation of the coordinate equations assumes the
//! Λ-hermitian condition, so non-hermitian inputs are rejected.

use crate::gauge::{covariant_diff, curvature_scalar, Connection, HermitianStructure, Section};
use crate::spectral::{Block, SpectralTriple, C};
use thiserror::Error;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// Λ-hermitian gap above which EL residuals are refused.
pub const HERMITIAN_TOL: f64 = 1e-9;
/// Central finite-difference step for variation checks.
pub const FD_STEP: f64 = 1e-5;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ActionError {
    #[error("connection is not Λ-hermitian: gap {gap} exceeds {tol}")]
    NotHermitian { gap: f64, tol: f64 },
    #[error("variation direction is not tangent to the Λ-hermitian manifold (gap {gap})")]
    NotTangent { gap: f64 },
}

/// Value of the action split into its parts; `total = ym + energy − mass_term`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionValue {
    pub ym: f64,
    pub energy: f64,
    pub mass_term: f64,
    pub total: f64,
}

/// `⟨ξ, η⟩ = Σ_w λ_w ξ_w η̄_w`.
pub fn section_inner(xi: &Section, eta: &Section, lambda: &HermitianStructure) -> C {
    xi.xi
        .iter()
        .zip(&eta.xi)
        .zip(&lambda.lambda)
        .map(|((x, y), l)| x * y.conj() * l)
        .sum()
}

/// Field energy `E_∇(ξ) = ⟨∇ξ, ∇ξ⟩ = Σ_pairs λ₀|σ₀₁|² + λ₁|σ₁₀|²`.
pub fn energy(
    conn: &Connection,
    xi: &Section,
    lambda: &HermitianStructure,
    t: &SpectralTriple,
) -> f64 {
    let sigma = covariant_diff(conn, xi, t);
    (0..t.pair_count())
        .map(|e| {
            let (l0, l1) = lambda.pair(e);
            let b = &sigma.blocks[e];
            l0 * b.0[0][1].norm_sqr() + l1 * b.0[1][0].norm_sqr()
        })
        .sum()
}

/// Yang–Mills action `YM(∇) = ⟨∇², ∇²⟩ = Σ_pairs (λ₀² + λ₁²)|θ|²`;
/// vanishes exactly when `ψ₀₁ψ₁₀ = 1` on every pair.
pub fn yang_mills(conn: &Connection, lambda: &HermitianStructure, t: &SpectralTriple) -> f64 {
    (0..t.pair_count())
        .map(|e| {
            let (l0, l1) = lambda.pair(e);
            (l0 * l0 + l1 * l1) * curvature_scalar(conn, t, e).norm_sqr()
        })
        .sum()
}

/// Total action `S = YM + E − m²‖ξ‖²`.
pub fn action_s(
    conn: &Connection,
    xi: &Section,
    lambda: &HermitianStructure,
    mass: f64,
    t: &SpectralTriple,
) -> ActionValue {
    let ym = yang_mills(conn, lambda, t);
    let energy = energy(conn, xi, lambda, t);
    let mass_term = mass * mass * section_inner(xi, xi, lambda).re;
    ActionValue {
        ym,
        energy,
        mass_term,
        total: ym + energy - mass_term,
    }
}

/// Current coordinates `J = (da + Φa)a* − a(da + Φa)*` per pair
/// (anti-selfadjoint, off-diagonal).
pub fn current(conn: &Connection, xi: &Section, t: &SpectralTriple) -> Vec<Block> {
    let sigma = covariant_diff(conn, xi, t);
    (0..t.pair_count())
        .map(|e| {
            let a = Block::diag(xi.xi[2 * e], xi.xi[2 * e + 1]);
            let s = &sigma.blocks[e];
            s.mul(&a.adjoint()).sub(&a.mul(&s.adjoint()))
        })
        .collect()
}

/// `λ·∇*∇ξ` per flag, computed blockwise as `X = d*(λσ) + Φ*λσ` with
/// `σ = da + Φa`; divide by λ to get the generalized Laplacian itself.
fn laplacian_times_lambda(
    conn: &Connection,
    xi: &Section,
    lambda: &HermitianStructure,
    t: &SpectralTriple,
) -> Vec<C> {
    let sigma = covariant_diff(conn, xi, t);
    let phi = conn.potential_form(t);
    let mut out = vec![C::ZERO; t.graph().oriented_count()];
    for e in 0..t.pair_count() {
        let (l0, l1) = lambda.pair(e);
        let lam_sigma = Block::diag(c(l0, 0.0), c(l1, 0.0)).mul(&sigma.blocks[e]);
        let d = t.dirac_block(e);
        // d* on a 1-form block is −i[D, ·].
        let dstar = d.commutator(&lam_sigma).scale(c(0.0, -1.0));
        let x = dstar.add(&phi.blocks[e].adjoint().mul(&lam_sigma));
        out[2 * e] = x.0[0][0];
        out[2 * e + 1] = x.0[1][1];
    }
    out
}

/// Generalized Laplacian `∇*∇ξ = λ⁻¹(d*(λ(da+Φa)) + Φ*λ(da+Φa))`.
pub fn gen_laplacian(
    conn: &Connection,
    lambda: &HermitianStructure,
    xi: &Section,
    t: &SpectralTriple,
) -> Section {
    let x = laplacian_times_lambda(conn, xi, lambda, t);
    Section {
        xi: x.iter().zip(&lambda.lambda).map(|(v, l)| v / l).collect(),
    }
}

/// Conjugate-sector Laplacian against `m²∧ξ`, per flag:
/// `X̂ − m²λξ̄` with `X̂ = d*(σ̂λ) + σ̂λΦ`, `σ̂ = da* + a*Φ*`.
fn conjugate_wave_residual(
    conn: &Connection,
    xi: &Section,
    lambda: &HermitianStructure,
    mass: f64,
    t: &SpectralTriple,
) -> Vec<C> {
    let xi_conj = Section {
        xi: xi.xi.iter().map(|z| z.conj()).collect(),
    };
    let da_star = t.differential(&xi_conj.as_algebra());
    let phi = conn.potential_form(t);
    let mut out = vec![C::ZERO; t.graph().oriented_count()];
    for e in 0..t.pair_count() {
        let (l0, l1) = lambda.pair(e);
        let a_star = Block::diag(xi.xi[2 * e].conj(), xi.xi[2 * e + 1].conj());
        let sigma_hat = da_star.blocks[e].add(&a_star.mul(&phi.blocks[e].adjoint()));
        let sl = sigma_hat.mul(&Block::diag(c(l0, 0.0), c(l1, 0.0)));
        let d = t.dirac_block(e);
        let x_hat = d
            .commutator(&sl)
            .scale(c(0.0, -1.0))
            .add(&sl.mul(&phi.blocks[e]));
        let m2 = mass * mass;
        out[2 * e] = x_hat.0[0][0] - xi.xi[2 * e].conj() * (m2 * l0);
        out[2 * e + 1] = x_hat.0[1][1] - xi.xi[2 * e + 1].conj() * (m2 * l1);
    }
    out
}

/// Second-pair operator residual blocks `R = (ω − ω*) + (σa* − aσ*)` with
/// `ω = d*(θλ) + θλΦ* − Φθλ`.
fn maxwell_operator_blocks(
    conn: &Connection,
    xi: &Section,
    lambda: &HermitianStructure,
    t: &SpectralTriple,
) -> Vec<Block> {
    let sigma = covariant_diff(conn, xi, t);
    let phi = conn.potential_form(t);
    (0..t.pair_count())
        .map(|e| {
            let (l0, l1) = lambda.pair(e);
            let theta = curvature_scalar(conn, t, e);
            let theta_lambda = Block::diag(theta * l0, theta * l1);
            let d = t.dirac_block(e);
            // d* on a 2-form block is −i(D· + ·D).
            let dstar = d.anticommutator(&theta_lambda).scale(c(0.0, -1.0));
            let omega = dstar
                .add(&theta_lambda.mul(&phi.blocks[e].adjoint()))
                .sub(&phi.blocks[e].mul(&theta_lambda));
            let a = Block::diag(xi.xi[2 * e], xi.xi[2 * e + 1]);
            let s = &sigma.blocks[e];
            let j = s.mul(&a.adjoint()).sub(&a.mul(&s.adjoint()));
            omega.sub(&omega.adjoint()).add(&j)
        })
        .collect()
}

/// Euler–Lagrange residuals of a configuration: the ψ-coordinate equations,
/// the operator-route equivalents, the implied conjugate-sector residual,
/// the phase data `α₁ − α₀ + γ = nπ`, and the real-reduced forms.
#[derive(Clone, Debug)]
pub struct ElResidual {
    /// ψ-form second-pair residual, one complex value per pair.
    pub maxwell: Vec<C>,
    /// ψ-form wave residual per flag (two per pair).
    pub wave: Vec<C>,
    /// Operator-route residuals, normalized to the ψ scale.
    pub operator_maxwell: Vec<C>,
    pub operator_wave: Vec<C>,
    /// Conjugate-sector wave residual per flag.
    pub conjugate_wave: Vec<C>,
    /// Nearest integer n in `α₁ − α₀ + γ = nπ` per pair (0 when ξ vanishes).
    pub phase_n: Vec<i64>,
    /// Deviation `α₁ − α₀ + γ − nπ` per pair.
    pub phase_residual: Vec<f64>,
    /// Real-reduced second-pair residual per pair.
    pub real_maxwell: Vec<f64>,
    /// Real-reduced wave residuals per flag.
    pub real_wave: Vec<f64>,
}

fn norm_sup_c(v: &[C]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl ElResidual {
    pub fn maxwell_norm(&self) -> f64 {
        self.maxwell
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn wave_norm(&self) -> f64 {
        self.wave.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn conjugate_norm(&self) -> f64 {
        self.conjugate_wave
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest disagreement between the ψ-form and operator-form routes.
    pub fn route_gap(&self) -> f64 {
        let m = self
            .maxwell
            .iter()
            .zip(&self.operator_maxwell)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let w = self
            .wave
            .iter()
            .zip(&self.operator_wave)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        m.max(w)
    }

    pub fn sup(&self) -> f64 {
        norm_sup_c(&self.maxwell).max(norm_sup_c(&self.wave))
    }
}

/// Computes the EL residuals. Errors if the connection is not Λ-hermitian
/// within [`HERMITIAN_TOL`]; the coordinate equations are derived under that
/// condition.
pub fn el_residual(
    conn: &Connection,
    xi: &Section,
    lambda: &HermitianStructure,
    mass: f64,
    t: &SpectralTriple,
) -> Result<ElResidual, ActionError> {
    let gap = conn.hermitian_gap(lambda);
    if gap > HERMITIAN_TOL {
        return Err(ActionError::NotHermitian {
            gap,
            tol: HERMITIAN_TOL,
        });
    }

    let pairs = t.pair_count();
    let mut maxwell = Vec::with_capacity(pairs);
    let mut wave = Vec::with_capacity(2 * pairs);
    let mut phase_n = Vec::with_capacity(pairs);
    let mut phase_residual = Vec::with_capacity(pairs);
    let mut real_maxwell = Vec::with_capacity(pairs);
    let mut real_wave = Vec::with_capacity(2 * pairs);

    for e in 0..pairs {
        let ds = t.delta(e);
        let ds2 = ds * ds;
        let rho2 = mass * mass * ds2;
        let (l0, l1) = lambda.pair(e);
        let (p01, p10) = (conn.psi01[e], conn.psi10[e]);
        let (x0, x1) = (xi.xi[2 * e], xi.xi[2 * e + 1]);

        let lhs = (p01 * p10 - C::ONE) * (p10 * l0 + p01.conj() * l1) / ds2;
        let rhs = x0.conj() * x1 - (p10 * x0.norm_sqr() + p01.conj() * x1.norm_sqr()) * 0.5;
        maxwell.push(lhs - rhs);

        let q = p01 * p10;
        wave.push(x0 * 0.5 * (l0 * (q.conj() + C::ONE) - c(l0 * rho2, 0.0)) - p01 * x1 * l0);
        wave.push(-p10 * x0 * l1 + x1 * 0.5 * (l1 * (q + C::ONE) - c(l1 * rho2, 0.0)));

        // Phase condition α₁ − α₀ + γ = nπ, reported when ξ is nonzero.
        let gamma = p01.arg();
        if x0.norm() > 1e-14 && x1.norm() > 1e-14 {
            let angle = x1.arg() - x0.arg() + gamma;
            let n = (angle / std::f64::consts::PI).round();
            phase_n.push(n as i64);
            phase_residual.push(angle - n * std::f64::consts::PI);
        } else {
            phase_n.push(0);
            phase_residual.push(0.0);
        }

        // Real-reduced forms, using ψ = λ₀|ψ₀₁| and the parity of n.
        let psi = l0 * p01.norm();
        let s = if phase_n[e] % 2 == 0 { 1.0 } else { -1.0 };
        let (m0, m1) = (x0.norm(), x1.norm());
        real_maxwell.push(
            (psi * psi / (l0 * l1) - 1.0) * (l0 / l1 + l1 / l0) * psi / ds2 - s * m0 * m1
                + 0.5 * (m0 * m0 / l1 + m1 * m1 / l0) * psi,
        );
        real_wave.push(0.5 * (psi * psi / l1 + l0 * (1.0 - rho2)) * m0 - s * psi * m1);
        real_wave.push(-s * psi * m0 + 0.5 * (psi * psi / l0 + l1 * (1.0 - rho2)) * m1);
    }

    // Operator route, normalized onto the ψ scale.
    let r_blocks = maxwell_operator_blocks(conn, xi, lambda, t);
    let operator_maxwell: Vec<C> = (0..pairs)
        .map(|e| r_blocks[e].0[0][1].conj() * (t.delta(e) / 2.0))
        .collect();
    let x = laplacian_times_lambda(conn, xi, lambda, t);
    let mut operator_wave = vec![C::ZERO; 2 * pairs];
    for e in 0..pairs {
        let ds2 = t.delta(e) * t.delta(e);
        let (l0, l1) = lambda.pair(e);
        let m2 = mass * mass;
        operator_wave[2 * e] = (x[2 * e] - xi.xi[2 * e] * (m2 * l0)) * (ds2 / 2.0);
        operator_wave[2 * e + 1] = (x[2 * e + 1] - xi.xi[2 * e + 1] * (m2 * l1)) * (ds2 / 2.0);
    }
    let mut conjugate_wave = conjugate_wave_residual(conn, xi, lambda, mass, t);
    for (e, z) in conjugate_wave.iter_mut().enumerate() {
        let ds2 = t.delta(e / 2) * t.delta(e / 2);
        *z *= ds2 / 2.0;
    }

    Ok(ElResidual {
        maxwell,
        wave,
        operator_maxwell,
        operator_wave,
        conjugate_wave,
        phase_n,
        phase_residual,
        real_maxwell,
        real_wave,
    })
}

/// A variation direction: `δΦ` per pair (in φ-coordinates) and `δξ` per flag.
#[derive(Clone, Debug)]
pub struct Variation {
    pub dphi01: Vec<C>,
    pub dphi10: Vec<C>,
    pub dxi: Vec<C>,
}

impl Variation {
    pub fn zero(t: &SpectralTriple) -> Self {
        Variation {
            dphi01: vec![C::ZERO; t.pair_count()],
            dphi10: vec![C::ZERO; t.pair_count()],
            dxi: vec![C::ZERO; t.graph().oriented_count()],
        }
    }

    /// Completes `δφ₀₁` to a Λ-hermitian tangent direction:
    /// `δφ₁₀ = (λ₀/λ₁)·conj(δφ₀₁)` satisfies `λδΦ + (δΦ)*λ = 0`.
    pub fn tangent_from_dphi01(
        t: &SpectralTriple,
        lambda: &HermitianStructure,
        dphi01: Vec<C>,
        dxi: Vec<C>,
    ) -> Self {
        let dphi10 = (0..t.pair_count())
            .map(|e| {
                let (l0, l1) = lambda.pair(e);
                dphi01[e].conj() * (l0 / l1)
            })
            .collect();
        Variation {
            dphi01,
            dphi10,
            dxi,
        }
    }

    /// Max violation of the tangency condition `λ₀δφ₀₁ − λ₁·conj(δφ₁₀) = 0`.
    pub fn tangency_gap(&self, lambda: &HermitianStructure) -> f64 {
        (0..self.dphi01.len())
            .map(|e| {
                let (l0, l1) = lambda.pair(e);
                (self.dphi01[e] * l0 - self.dphi10[e].conj() * l1).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// First variation of the action in a given direction: the analytic value
/// from the EL residual pairing versus a central finite difference.
#[derive(Clone, Copy, Debug)]
pub struct VariationCheck {
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

pub fn variation_check(
    conn: &Connection,
    xi: &Section,
    lambda: &HermitianStructure,
    mass: f64,
    dir: &Variation,
    t: &SpectralTriple,
) -> Result<VariationCheck, ActionError> {
    let gap = dir.tangency_gap(lambda);
    if gap > 1e-9 {
        return Err(ActionError::NotTangent { gap });
    }
    let herm_gap = conn.hermitian_gap(lambda);
    if herm_gap > HERMITIAN_TOL {
        return Err(ActionError::NotHermitian {
            gap: herm_gap,
            tol: HERMITIAN_TOL,
        });
    }

    // Analytic: ⟨d*∇∇² + J, δ∇⟩ + 2 Re ⟨∇*∇ξ − m²ξ, δξ⟩.
    let r_blocks = maxwell_operator_blocks(conn, xi, lambda, t);
    let mut analytic = 0.0;
    for e in 0..t.pair_count() {
        let ds = t.delta(e);
        let (l0, l1) = lambda.pair(e);
        let d_phi = Block::off_diag(c(0.0, ds) * dir.dphi01[e], c(0.0, ds) * dir.dphi10[e]);
        let lam_dphi = Block::diag(c(l0, 0.0), c(l1, 0.0)).mul(&d_phi);
        analytic += lam_dphi.adjoint().mul(&r_blocks[e]).trace().re;
    }
    let x = laplacian_times_lambda(conn, xi, lambda, t);
    for (i, dx) in dir.dxi.iter().enumerate() {
        let residual = x[i] - xi.xi[i] * (mass * mass * lambda.lambda[i]);
        analytic += 2.0 * (residual * dx.conj()).re;
    }

    // Numeric: central difference along the (exactly Λ-hermitian) line.
    let eval = |eps: f64| -> f64 {
        let mut conn2 = conn.clone();
        for e in 0..t.pair_count() {
            let ds2 = t.delta(e) * t.delta(e);
            conn2.psi01[e] += c(0.0, eps * ds2) * dir.dphi01[e];
            conn2.psi10[e] -= c(0.0, eps * ds2) * dir.dphi10[e];
        }
        let mut xi2 = xi.clone();
        for (z, dz) in xi2.xi.iter_mut().zip(&dir.dxi) {
            *z += dz * eps;
        }
        action_s(&conn2, &xi2, lambda, mass, t).total
    };
    let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
    let rel_err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
    Ok(VariationCheck {
        analytic,
        numeric,
        rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::{gauge_transform, GaugeConfiguration, GaugeElement};
    use crate::graph::LabeledGraph;
    use crate::spectral::{build_triple, DsFunction};
    use num_rational::Rational64;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn rat(p: i64) -> Rational64 {
        Rational64::new(p, 1)
    }

    fn dipole_triple(ds: f64) -> SpectralTriple {
        let g = LabeledGraph::dipole(rat(0), rat(0), 1);
        build_triple(&g, DsFunction::constant(&g, ds).unwrap()).unwrap()
    }

    /// Random exactly-Λ-hermitian dipole configuration.
    fn random_hermitian(t: &SpectralTriple, rng: &mut StdRng) -> GaugeConfiguration {
        let g = t.graph();
        let lambda = HermitianStructure {
            lambda: (0..g.oriented_count())
                .map(|_| 0.3 + 2.7 * rng.random::<f64>())
                .collect(),
        };
        let p: Vec<f64> = (0..t.pair_count())
            .map(|_| 2.0 * (rng.random::<f64>() - 0.5) * 1.8)
            .collect();
        let gamma: Vec<f64> = (0..t.pair_count())
            .map(|_| rng.random::<f64>() * 2.0 * PI)
            .collect();
        let connection = Connection::lambda_hermitian(g, &lambda, &p, &gamma);
        let section = Section {
            xi: (0..g.oriented_count())
                .map(|_| {
                    c(
                        rng.random::<f64>() * 2.0 - 1.0,
                        rng.random::<f64>() * 2.0 - 1.0,
                    )
                })
                .collect(),
        };
        GaugeConfiguration {
            lambda,
            connection,
            section,
            mass: rng.random::<f64>() * 1.5,
        }
    }

    #[test]
    fn energy_examples() {
        let t = dipole_triple(1.0);
        let conn = Connection::trivial(t.graph());
        let lambda = HermitianStructure::uniform(t.graph(), 1.0);
        let xi = Section {
            xi: vec![C::ZERO, C::ONE],
        };
        assert!((energy(&conn, &xi, &lambda, &t) - 2.0).abs() < 1e-14);

        // Parallel field: constant section under the trivial connection.
        let xi = Section {
            xi: vec![c(0.4, 0.9); 2],
        };
        assert!(energy(&conn, &xi, &lambda, &t) < 1e-28);
    }

    #[test]
    fn energy_scales_quadratically() {
        let mut rng = StdRng::seed_from_u64(3);
        let t = dipole_triple(1.4);
        let cfg = random_hermitian(&t, &mut rng);
        let e1 = energy(&cfg.connection, &cfg.section, &cfg.lambda, &t);
        let scaled = Section {
            xi: cfg.section.xi.iter().map(|z| z * c(1.5, -2.0)).collect(),
        };
        let e2 = energy(&cfg.connection, &scaled, &cfg.lambda, &t);
        let factor = c(1.5, -2.0).norm_sqr();
        assert!((e2 - factor * e1).abs() < 1e-10 * e1.max(1.0));
    }

    #[test]
    fn yang_mills_examples() {
        let t = dipole_triple(1.0);
        let lambda = HermitianStructure::uniform(t.graph(), 1.0);
        assert_eq!(
            yang_mills(&Connection::trivial(t.graph()), &lambda, &t),
            0.0
        );

        let conn = Connection::from_phi(&t, &[C::ONE], &[C::ZERO]);
        assert!((yang_mills(&conn, &lambda, &t) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn yang_mills_vanishes_iff_psi_product_is_one() {
        let mut rng = StdRng::seed_from_u64(13);
        let t = dipole_triple(0.9);
        let lambda = HermitianStructure::uniform(t.graph(), 1.0);
        for _ in 0..40 {
            let z = c(rng.random::<f64>() + 0.2, rng.random::<f64>() - 0.5);
            let flat = Connection::from_psi(vec![z], vec![z.inv()]);
            assert!(yang_mills(&flat, &lambda, &t) < 1e-24);
            let bent = Connection::from_psi(vec![z], vec![z.inv() * 1.1]);
            assert!(yang_mills(&bent, &lambda, &t) > 1e-8);
        }
    }

    #[test]
    fn action_zero_for_vacuum() {
        let t = dipole_triple(1.7);
        let lambda = HermitianStructure::uniform(t.graph(), 1.0);
        let s = action_s(
            &Connection::trivial(t.graph()),
            &Section::zeros(t.graph()),
            &lambda,
            0.4,
            &t,
        );
        assert_eq!(s.total, 0.0);
    }

    #[test]
    fn action_parts_are_consistent_and_gauge_invariant() {
        let mut rng = StdRng::seed_from_u64(19);
        let t = dipole_triple(1.1);
        for _ in 0..30 {
            let cfg = random_hermitian(&t, &mut rng);
            let s = action_s(&cfg.connection, &cfg.section, &cfg.lambda, cfg.mass, &t);
            assert!((s.total - (s.ym + s.energy - s.mass_term)).abs() < 1e-13);

            let u = GaugeElement {
                u: vec![
                    C::from_polar(1.0, rng.random::<f64>() * 2.0 * PI),
                    C::from_polar(1.0, rng.random::<f64>() * 2.0 * PI),
                ],
            };
            let out = gauge_transform(&u, &cfg);
            let s2 = action_s(&out.connection, &out.section, &out.lambda, out.mass, &t);
            assert!((s.total - s2.total).abs() < 1e-12 * s.total.abs().max(1.0));
        }
    }

    #[test]
    fn current_vanishes_for_zero_and_parallel_fields() {
        let t = dipole_triple(1.0);
        let conn = Connection::trivial(t.graph());
        let j = current(&conn, &Section::zeros(t.graph()), &t);
        assert!(j.iter().all(|b| b.max_entry() == 0.0));

        let xi = Section {
            xi: vec![c(0.3, 0.8); 2],
        };
        let j = current(&conn, &xi, &t);
        assert!(j.iter().all(|b| b.max_entry() < 1e-15));
    }

    #[test]
    fn current_is_anti_selfadjoint() {
        let mut rng = StdRng::seed_from_u64(23);
        let t = dipole_triple(1.3);
        for _ in 0..30 {
            let cfg = random_hermitian(&t, &mut rng);
            for b in current(&cfg.connection, &cfg.section, &t) {
                assert!(b.add(&b.adjoint()).max_entry() < 1e-13);
            }
        }
    }

    #[test]
    fn gen_laplacian_reduces_to_dstar_d() {
        let mut rng = StdRng::seed_from_u64(29);
        let t = dipole_triple(1.2);
        let conn = Connection::trivial(t.graph());
        let lambda = HermitianStructure::uniform(t.graph(), 1.0);
        for _ in 0..20 {
            let xi = Section {
                xi: (0..2)
                    .map(|_| c(rng.random::<f64>(), rng.random::<f64>()))
                    .collect(),
            };
            let lap = gen_laplacian(&conn, &lambda, &xi, &t);
            let da = t.differential(&xi.as_algebra());
            let dstar_da = t.form_dstar(&da).unwrap();
            for e in 0..t.pair_count() {
                assert!((lap.xi[2 * e] - dstar_da.blocks[e].0[0][0]).norm() < 1e-13);
                assert!((lap.xi[2 * e + 1] - dstar_da.blocks[e].0[1][1]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn gen_laplacian_kills_parallel_sections() {
        let t = dipole_triple(0.8);
        let conn = Connection::trivial(t.graph());
        let lambda = HermitianStructure {
            lambda: vec![1.0, 3.0],
        };
        let xi = Section {
            xi: vec![c(1.1, -0.3); 2],
        };
        let lap = gen_laplacian(&conn, &lambda, &xi, &t);
        assert!(lap.xi.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn gen_laplacian_is_adjoint_pairing() {
        // ⟨∇*(e⊗ω), η⟩ = ⟨e⊗ω, ∇η⟩ specialized to ω = ∇ξ:
        // ⟨∇*∇ξ, η⟩ = ⟨∇ξ, ∇η⟩.
        let mut rng = StdRng::seed_from_u64(31);
        let t = dipole_triple(1.5);
        for _ in 0..25 {
            let cfg = random_hermitian(&t, &mut rng);
            let eta = Section {
                xi: (0..2)
                    .map(|_| c(rng.random::<f64>(), rng.random::<f64>()))
                    .collect(),
            };
            let lap = gen_laplacian(&cfg.connection, &cfg.lambda, &cfg.section, &t);
            let lhs = section_inner(&lap, &eta, &cfg.lambda);
            let s_xi = covariant_diff(&cfg.connection, &cfg.section, &t);
            let s_eta = covariant_diff(&cfg.connection, &eta, &t);
            let mut rhs = C::ZERO;
            for e in 0..t.pair_count() {
                let (l0, l1) = cfg.lambda.pair(e);
                rhs += s_xi.blocks[e].0[0][1] * s_eta.blocks[e].0[0][1].conj() * l0;
                rhs += s_xi.blocks[e].0[1][0] * s_eta.blocks[e].0[1][0].conj() * l1;
            }
            assert!((lhs - rhs).norm() < 1e-11, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn el_routes_agree_on_hermitian_configurations() {
        let mut rng = StdRng::seed_from_u64(37);
        for _ in 0..100 {
            let t = dipole_triple(0.4 + rng.random::<f64>() * 1.8);
            let cfg = random_hermitian(&t, &mut rng);
            let el = el_residual(&cfg.connection, &cfg.section, &cfg.lambda, cfg.mass, &t).unwrap();
            assert!(el.route_gap() < 1e-10, "route gap {}", el.route_gap());
        }
    }

    #[test]
    fn el_rejects_non_hermitian_input() {
        let t = dipole_triple(1.0);
        let lambda = HermitianStructure {
            lambda: vec![1.0, 2.0],
        };
        let conn = Connection::from_psi(vec![c(1.0, 0.5)], vec![c(1.0, 0.5)]);
        let xi = Section::zeros(t.graph());
        assert!(matches!(
            el_residual(&conn, &xi, &lambda, 0.0, &t),
            Err(ActionError::NotHermitian { .. })
        ));
    }

    #[test]
    fn theta_is_selfadjoint_on_hermitian_configurations() {
        let mut rng = StdRng::seed_from_u64(41);
        let t = dipole_triple(1.0);
        for _ in 0..30 {
            let cfg = random_hermitian(&t, &mut rng);
            let theta = curvature_scalar(&cfg.connection, &t, 0);
            assert!(theta.im.abs() < 1e-13, "θ = {theta}");
        }
    }

    #[test]
    fn conjugate_wave_mirrors_wave() {
        let mut rng = StdRng::seed_from_u64(43);
        let t = dipole_triple(1.1);
        for _ in 0..30 {
            let cfg = random_hermitian(&t, &mut rng);
            let el = el_residual(&cfg.connection, &cfg.section, &cfg.lambda, cfg.mass, &t).unwrap();
            assert!(el.conjugate_norm() <= 10.0 * el.wave_norm() + 1e-12);
            // In fact X̂ = X*: the conjugate residual is the conjugate of the
            // operator wave residual.
            for (a, b) in el.conjugate_wave.iter().zip(&el.operator_wave) {
                assert!((a - b.conj()).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn residual_grows_linearly_under_perturbation() {
        let mut rng = StdRng::seed_from_u64(47);
        let t = dipole_triple(1.0);
        // Start from a critical massless configuration: flat + parallel.
        let lambda = HermitianStructure {
            lambda: vec![1.0, 4.0],
        };
        let conn = Connection::lambda_hermitian(t.graph(), &lambda, &[2.0], &[0.0]);
        let xi = Section {
            xi: vec![c(2.0, 0.0), c(1.0, 0.0)],
        };
        let base = el_residual(&conn, &xi, &lambda, 0.0, &t).unwrap();
        assert!(base.sup() < 1e-12);

        let dir: Vec<C> = (0..2)
            .map(|_| c(rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let mut norms = Vec::new();
        for eps in [1e-4, 2e-4, 4e-4] {
            let xi2 = Section {
                xi: xi.xi.iter().zip(&dir).map(|(z, d)| z + d * eps).collect(),
            };
            let el = el_residual(&conn, &xi2, &lambda, 0.0, &t).unwrap();
            norms.push(el.sup());
        }
        let r1 = norms[1] / norms[0];
        let r2 = norms[2] / norms[1];
        assert!((r1 - 2.0).abs() < 0.05, "ratio {r1}");
        assert!((r2 - 2.0).abs() < 0.05, "ratio {r2}");
    }

    #[test]
    fn variation_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(53);
        let t = dipole_triple(1.3);
        for trial in 0..30 {
            let cfg = random_hermitian(&t, &mut rng);
            let dphi01: Vec<C> = (0..1)
                .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let dxi: Vec<C> = (0..2)
                .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let dir = match trial % 3 {
                // δξ only.
                0 => Variation {
                    dxi: dxi.clone(),
                    ..Variation::zero(&t)
                },
                // δ∇ only.
                1 => Variation::tangent_from_dphi01(
                    &t,
                    &cfg.lambda,
                    dphi01.clone(),
                    vec![C::ZERO; 2],
                ),
                // Both.
                _ => Variation::tangent_from_dphi01(&t, &cfg.lambda, dphi01.clone(), dxi.clone()),
            };
            let check = variation_check(
                &cfg.connection,
                &cfg.section,
                &cfg.lambda,
                cfg.mass,
                &dir,
                &t,
            )
            .unwrap();
            assert!(
                check.rel_err < 1e-6,
                "trial {trial}: analytic {} vs numeric {}",
                check.analytic,
                check.numeric
            );
        }
    }

    #[test]
    fn el_norms_are_gauge_invariant() {
        let mut rng = StdRng::seed_from_u64(59);
        let t = dipole_triple(1.2);
        for _ in 0..30 {
            let cfg = random_hermitian(&t, &mut rng);
            let el = el_residual(&cfg.connection, &cfg.section, &cfg.lambda, cfg.mass, &t).unwrap();
            let u = GaugeElement {
                u: vec![
                    C::from_polar(1.0, rng.random::<f64>() * 2.0 * PI),
                    C::from_polar(1.0, rng.random::<f64>() * 2.0 * PI),
                ],
            };
            let moved = gauge_transform(&u, &cfg);
            let el2 = el_residual(
                &moved.connection,
                &moved.section,
                &moved.lambda,
                moved.mass,
                &t,
            )
            .unwrap();
            assert!((el.maxwell_norm() - el2.maxwell_norm()).abs() < 1e-12);
            assert!((el.wave_norm() - el2.wave_norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn variation_vanishes_at_critical_configuration() {
        // Flat Λ-hermitian connection with a parallel massless field.
        let mut rng = StdRng::seed_from_u64(61);
        let t = dipole_triple(1.0);
        let lambda = HermitianStructure {
            lambda: vec![1.0, 4.0],
        };
        let conn = Connection::lambda_hermitian(t.graph(), &lambda, &[2.0], &[0.0]);
        let xi = Section {
            xi: vec![c(2.0, 0.0), c(1.0, 0.0)],
        };
        for _ in 0..10 {
            let dphi01 = vec![c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)];
            let dxi: Vec<C> = (0..2)
                .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let dir = Variation::tangent_from_dphi01(&t, &lambda, dphi01, dxi);
            let check = variation_check(&conn, &xi, &lambda, 0.0, &dir, &t).unwrap();
            assert!(
                check.analytic.abs() < 1e-12,
                "analytic δS = {}",
                check.analytic
            );
            assert!(check.numeric.abs() < 1e-8, "numeric δS = {}", check.numeric);
        }
    }

    #[test]
    fn variation_rejects_non_tangent_directions() {
        let t = dipole_triple(1.0);
        let lambda = HermitianStructure {
            lambda: vec![1.0, 2.0],
        };
        let conn = Connection::lambda_hermitian(t.graph(), &lambda, &[1.0], &[0.0]);
        let xi = Section::zeros(t.graph());
        let dir = Variation {
            dphi01: vec![C::ONE],
            dphi10: vec![C::ONE],
            dxi: vec![C::ZERO; 2],
        };
        assert!(matches!(
            variation_check(&conn, &xi, &lambda, 0.0, &dir, &t),
            Err(ActionError::NotTangent { .. })
        ));
    }
}
