//! U(1) gauge data on the trivial line bundle over a graph.
//!
//! Per edge pair with length Δs, a connection is stored in the
//! ψ-parametrization
//!
//!   ψ₀₁ = 1 + iφ₀₁Δs²,     ψ₁₀ = 1 − iφ₁₀Δs²,
//!
//! in which the Euler–Lagrange equations are written; φ-accessors convert
//! back. Slot 0 of a pair is the tail flag `w`, slot 1 the head flag `−w`.
//! A connection is Λ-hermitian for a structure λ when `λ₀ψ₀₁ = λ₁ψ̄₁₀`
//! holds per pair; the residual form `dλ − λΦ − Φ*λ` measures the failure.

use crate::graph::{LabeledGraph, OrientedEdge};
use crate::spectral::{AlgebraElement, Block, Form, SpectralTriple, C};
use thiserror::Error;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GaugeError {
    #[error("expected {expected} values, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("hermitian structure must be positive, got {value} on flag {flag}")]
    NonPositiveLambda { flag: String, value: f64 },
    #[error("gauge element must be unimodular, |u| = {modulus} on flag {flag}")]
    NotUnimodular { flag: String, modulus: f64 },
    #[error("Δs = 0 has no curvature locus")]
    ZeroDs,
    #[error("section phases differ at vertex {vertex} (U0 reduction violated)")]
    PhaseMismatch { vertex: String },
}

/// Section coordinates `ξ_w` per flag with respect to a fixed basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    /// Indexed by [`OrientedEdge::index`].
    pub xi: Vec<C>,
}

impl Section {
    pub fn zeros(g: &LabeledGraph) -> Self {
        Section {
            xi: vec![C::ZERO; g.oriented_count()],
        }
    }

    pub fn new(g: &LabeledGraph, xi: Vec<C>) -> Result<Self, GaugeError> {
        if xi.len() != g.oriented_count() {
            return Err(GaugeError::WrongCount {
                expected: g.oriented_count(),
                got: xi.len(),
            });
        }
        Ok(Section { xi })
    }

    pub fn value(&self, w: OrientedEdge) -> C {
        self.xi[w.index()]
    }

    pub fn as_algebra(&self) -> AlgebraElement {
        AlgebraElement {
            values: self.xi.clone(),
        }
    }

    /// Checks the reduced-gauge-group constraint: all nonzero coordinates at
    /// one vertex share a phase (mod 2π) within `tol`.
    pub fn check_u0(&self, g: &LabeledGraph, tol: f64) -> Result<(), GaugeError> {
        for v in 0..g.vertex_count() {
            let mut reference: Option<f64> = None;
            for &w in g.flags(v) {
                let z = self.value(w);
                if z.norm() < 1e-14 {
                    continue;
                }
                let arg = z.arg();
                match reference {
                    None => reference = Some(arg),
                    Some(r) => {
                        let mut diff = (arg - r).rem_euclid(2.0 * std::f64::consts::PI);
                        if diff > std::f64::consts::PI {
                            diff = 2.0 * std::f64::consts::PI - diff;
                        }
                        if diff > tol {
                            return Err(GaugeError::PhaseMismatch {
                                vertex: g.vertex_id(v).to_string(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fiberwise hermitian metric: positive `λ_w` per flag.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianStructure {
    /// Indexed by [`OrientedEdge::index`].
    pub lambda: Vec<f64>,
}

impl HermitianStructure {
    pub fn uniform(g: &LabeledGraph, value: f64) -> Self {
        HermitianStructure {
            lambda: vec![value; g.oriented_count()],
        }
    }

    pub fn new(g: &LabeledGraph, lambda: Vec<f64>) -> Result<Self, GaugeError> {
        if lambda.len() != g.oriented_count() {
            return Err(GaugeError::WrongCount {
                expected: g.oriented_count(),
                got: lambda.len(),
            });
        }
        for w in g.oriented_edges() {
            let value = lambda[w.index()];
            if !(value > 0.0) {
                return Err(GaugeError::NonPositiveLambda {
                    flag: g.oriented_id(w),
                    value,
                });
            }
        }
        Ok(HermitianStructure { lambda })
    }

    pub fn value(&self, w: OrientedEdge) -> f64 {
        self.lambda[w.index()]
    }

    /// Pair values `(λ₀, λ₁)` in slot order.
    pub fn pair(&self, e: usize) -> (f64, f64) {
        (self.lambda[2 * e], self.lambda[2 * e + 1])
    }

    pub fn as_algebra(&self) -> AlgebraElement {
        AlgebraElement {
            values: self.lambda.iter().map(|&l| c(l, 0.0)).collect(),
        }
    }
}

/// Connection potential per pair, stored as `(ψ₀₁, ψ₁₀)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Connection {
    pub psi01: Vec<C>,
    pub psi10: Vec<C>,
}

impl Connection {
    /// The trivial connection `Φ = 0`, i.e. `ψ₀₁ = ψ₁₀ = 1`.
    pub fn trivial(g: &LabeledGraph) -> Self {
        Connection {
            psi01: vec![C::ONE; g.pair_count()],
            psi10: vec![C::ONE; g.pair_count()],
        }
    }

    pub fn from_psi(psi01: Vec<C>, psi10: Vec<C>) -> Self {
        Connection { psi01, psi10 }
    }

    /// Converts vector-potential coordinates `(φ₀₁, φ₁₀)` per pair.
    pub fn from_phi(t: &SpectralTriple, phi01: &[C], phi10: &[C]) -> Self {
        let mut conn = Connection::trivial(t.graph());
        for e in 0..t.pair_count() {
            let ds2 = t.delta(e) * t.delta(e);
            conn.psi01[e] = C::ONE + c(0.0, ds2) * phi01[e];
            conn.psi10[e] = C::ONE - c(0.0, ds2) * phi10[e];
        }
        conn
    }

    /// Connection exactly compatible with `lambda`: per pair,
    /// `ψ₀₁ = (p/λ₀)e^{iγ}` and `ψ₁₀ = (p/λ₁)e^{−iγ}` so that
    /// `λ₀ψ₀₁ = λ₁ψ̄₁₀ = p·e^{iγ}`. The magnitude `p` may carry a sign.
    pub fn lambda_hermitian(
        g: &LabeledGraph,
        lambda: &HermitianStructure,
        p: &[f64],
        gamma: &[f64],
    ) -> Self {
        let mut conn = Connection::trivial(g);
        for e in g.pairs() {
            let (l0, l1) = lambda.pair(e);
            let phase = C::from_polar(1.0, gamma[e]);
            conn.psi01[e] = phase * (p[e] / l0);
            conn.psi10[e] = phase.conj() * (p[e] / l1);
        }
        conn
    }

    pub fn phi01(&self, t: &SpectralTriple, e: usize) -> C {
        let ds2 = t.delta(e) * t.delta(e);
        (self.psi01[e] - C::ONE) * c(0.0, -1.0 / ds2)
    }

    pub fn phi10(&self, t: &SpectralTriple, e: usize) -> C {
        let ds2 = t.delta(e) * t.delta(e);
        (self.psi10[e] - C::ONE) * c(0.0, 1.0 / ds2)
    }

    /// Connection phase `γ_w = arg ψ₀₁`.
    pub fn gamma(&self, e: usize) -> f64 {
        self.psi01[e].arg()
    }

    /// The vector potential as a 1-form: block
    /// `[[0, iφ₀₁Δs], [iφ₁₀Δs, 0]] = [[0, (ψ₀₁−1)/Δs], [(1−ψ₁₀)/Δs, 0]]`.
    pub fn potential_form(&self, t: &SpectralTriple) -> Form {
        let blocks = (0..t.pair_count())
            .map(|e| {
                let ds = t.delta(e);
                Block::off_diag((self.psi01[e] - C::ONE) / ds, (C::ONE - self.psi10[e]) / ds)
            })
            .collect();
        Form { degree: 1, blocks }
    }

    /// Max deviation from the Λ-hermitian condition `λ₀ψ₀₁ = λ₁ψ̄₁₀`.
    pub fn hermitian_gap(&self, lambda: &HermitianStructure) -> f64 {
        (0..self.psi01.len())
            .map(|e| {
                let (l0, l1) = lambda.pair(e);
                (self.psi01[e] * l0 - self.psi10[e].conj() * l1).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Unit-modulus gauge transformation per flag.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeElement {
    pub u: Vec<C>,
}

impl GaugeElement {
    pub fn identity(g: &LabeledGraph) -> Self {
        GaugeElement {
            u: vec![C::ONE; g.oriented_count()],
        }
    }

    pub fn new(g: &LabeledGraph, u: Vec<C>) -> Result<Self, GaugeError> {
        if u.len() != g.oriented_count() {
            return Err(GaugeError::WrongCount {
                expected: g.oriented_count(),
                got: u.len(),
            });
        }
        for w in g.oriented_edges() {
            let modulus = u[w.index()].norm();
            if (modulus - 1.0).abs() > 1e-12 {
                return Err(GaugeError::NotUnimodular {
                    flag: g.oriented_id(w),
                    modulus,
                });
            }
        }
        Ok(GaugeElement { u })
    }

    /// Element of the reduced group `U₀`: one phase per vertex.
    pub fn per_vertex(g: &LabeledGraph, alpha: &[f64]) -> Self {
        let mut u = vec![C::ONE; g.oriented_count()];
        for w in g.oriented_edges() {
            u[w.index()] = C::from_polar(1.0, alpha[g.tail(w)]);
        }
        GaugeElement { u }
    }

    pub fn value(&self, w: OrientedEdge) -> C {
        self.u[w.index()]
    }
}

/// A full field configuration `(Λ, ∇, ξ, m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeConfiguration {
    pub lambda: HermitianStructure,
    pub connection: Connection,
    pub section: Section,
    pub mass: f64,
}

/// Covariant differential `∇ξ = e ⊗ (da + Φa)`: per pair the 1-form block
/// has entries `σ₀₁ = (ψ₀₁ξ₁ − ξ₀)/Δs` and `σ₁₀ = (ξ₁ − ψ₁₀ξ₀)/Δs`.
pub fn covariant_diff(conn: &Connection, xi: &Section, t: &SpectralTriple) -> Form {
    let blocks = (0..t.pair_count())
        .map(|e| {
            let ds = t.delta(e);
            let (x0, x1) = (xi.xi[2 * e], xi.xi[2 * e + 1]);
            Block::off_diag(
                (conn.psi01[e] * x1 - x0) / ds,
                (x1 - conn.psi10[e] * x0) / ds,
            )
        })
        .collect();
    Form { degree: 1, blocks }
}

/// Curvature scalar per pair: `θ = (1 − ψ₀₁ψ₁₀)/Δs²` times the identity
/// block, equal to `i(φ₁₀ − φ₀₁ + iφ₀₁φ₁₀Δs²)`.
pub fn curvature_scalar(conn: &Connection, t: &SpectralTriple, e: usize) -> C {
    (C::ONE - conn.psi01[e] * conn.psi10[e]) / (t.delta(e) * t.delta(e))
}

/// Curvature operator `θ = dΦ + Φ²` as a degree-2 form (diagonal blocks).
pub fn curvature_op(conn: &Connection, t: &SpectralTriple) -> Form {
    let blocks = (0..t.pair_count())
        .map(|e| {
            let theta = curvature_scalar(conn, t, e);
            Block::diag(theta, theta)
        })
        .collect();
    Form { degree: 2, blocks }
}

/// The same curvature computed the long way, `dΦ + Φ·Φ`, through the form
/// calculus; kept as an independent code path for cross-checks.
pub fn curvature_via_forms(conn: &Connection, t: &SpectralTriple) -> Form {
    let phi = conn.potential_form(t);
    t.form_d(&phi).add(&t.form_mul(&phi, &phi))
}

/// Bianchi residual `dθ − [θ, Φ]`, a degree-3 form; identically zero for
/// dipole-block connections since θ is scalar per block.
pub fn bianchi_residual(conn: &Connection, t: &SpectralTriple) -> Form {
    let theta = curvature_op(conn, t);
    let phi = conn.potential_form(t);
    let bracket = t.form_mul(&theta, &phi).sub(&t.form_mul(&phi, &theta));
    t.form_d(&theta).sub(&bracket)
}

/// Compatibility residual `dλ − λΦ − Φ*λ`; zero iff `λ₀ψ₀₁ = λ₁ψ̄₁₀`
/// on every pair.
pub fn hermitian_compat_residual(
    conn: &Connection,
    lambda: &HermitianStructure,
    t: &SpectralTriple,
) -> Form {
    let lam = lambda.as_algebra();
    let d_lambda = t.differential(&lam);
    let phi = conn.potential_form(t);
    let lam_phi = t.left_mul(&lam, &phi);
    let phi_star_lam = t.right_mul(&phi.adjoint(), &lam);
    d_lambda.sub(&lam_phi).sub(&phi_star_lam)
}

/// Applies a gauge transformation to a configuration:
/// `ξ' = uξ`, `λ' = uλu* = λ`, `ψ₀₁' = u₀ū₁ψ₀₁`, `ψ₁₀' = ū₀u₁ψ₁₀`
/// (the ψ-coordinate form of `Φ' = u du* + uΦu*`).
pub fn gauge_transform(u: &GaugeElement, cfg: &GaugeConfiguration) -> GaugeConfiguration {
    let pairs = cfg.connection.psi01.len();
    let mut out = cfg.clone();
    for i in 0..cfg.section.xi.len() {
        out.section.xi[i] = u.u[i] * cfg.section.xi[i];
        out.lambda.lambda[i] = (u.u[i] * cfg.lambda.lambda[i] * u.u[i].conj()).re;
    }
    for e in 0..pairs {
        let (u0, u1) = (u.u[2 * e], u.u[2 * e + 1]);
        out.connection.psi01[e] = u0 * u1.conj() * cfg.connection.psi01[e];
        out.connection.psi10[e] = u0.conj() * u1 * cfg.connection.psi10[e];
    }
    out
}

/// Coordinates of the conjugate section `ξ̂`: `â = ξ̄ λ⁻¹` per flag.
pub fn conjugate_section(xi: &Section, lambda: &HermitianStructure) -> Vec<C> {
    xi.xi
        .iter()
        .zip(&lambda.lambda)
        .map(|(x, l)| x.conj() / l)
        .collect()
}

/// Circle in the φ₀₁-plane along which the curvature norm of a unitary
/// connection attains its minimum: center i/Δs², radius 1/Δs².
pub struct CurvatureLocus {
    pub center: C,
    pub radius: f64,
}

pub fn curvature_min_locus(ds: f64) -> Result<CurvatureLocus, GaugeError> {
    if ds == 0.0 {
        return Err(GaugeError::ZeroDs);
    }
    let inv = 1.0 / (ds * ds);
    Ok(CurvatureLocus {
        center: c(0.0, inv),
        radius: inv,
    })
}
