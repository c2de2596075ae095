//! JSON schemas for graphs, states, splittings, Δs functions, gauge
//! configurations, realizations, and criticality reports.
//!
//! Graphs: `{"vertices":[{"id","charge":"p/q"}],
//! "edges":[{"id","from","to","b","gluing":[[a,b],[c,d]]?}]}` — each JSON
//! edge denotes the oriented pair `(w, −w)`. Oriented edges elsewhere are
//! keyed by the edge id, with a `-` prefix for the reversed orientation.
//! Maps use sorted keys so serialization is deterministic.

use crate::compat::{ChargeSplitting, IsometricState, StateError};
use crate::gauge::{Connection, GaugeConfiguration, GaugeError, HermitianStructure, Section};
use crate::graph::{GluingMatrix, GraphBuilder, GraphError, LabeledGraph, OrientedEdge};
use crate::solutions::{CriticalityReport, SpectralRealization};
use crate::spectral::{build_triple, DsFunction, SpectralError, C};
use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum IoError {
    #[error("invalid charge {0:?}: expected \"p\" or \"p/q\"")]
    BadCharge(String),
    #[error("unknown vertex id {0:?}")]
    UnknownVertex(String),
    #[error("unknown edge id {0:?}")]
    UnknownEdge(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("missing entry for {0}")]
    Missing(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Graph schema.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct VertexJson {
    pub id: String,
    pub charge: String,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct EdgeJson {
    pub id: String,
    pub from: String,
    pub to: String,
    pub b: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gluing: Option<[[i64; 2]; 2]>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct GraphJson {
    pub vertices: Vec<VertexJson>,
    pub edges: Vec<EdgeJson>,
}

fn parse_charge(s: &str) -> Result<Rational64, IoError> {
    let parse = |t: &str| {
        t.trim()
            .parse::<i64>()
            .map_err(|_| IoError::BadCharge(s.to_string()))
    };
    match s.split_once('/') {
        Some((p, q)) => {
            let denom = parse(q)?;
            if denom == 0 {
                return Err(IoError::BadCharge(s.to_string()));
            }
            Ok(Rational64::new(parse(p)?, denom))
        }
        None => Ok(Rational64::new(parse(s)?, 1)),
    }
}

fn charge_string(k: Rational64) -> String {
    if *k.denom() == 1 {
        k.numer().to_string()
    } else {
        format!("{}/{}", k.numer(), k.denom())
    }
}

pub fn graph_from_json(json: &GraphJson) -> Result<LabeledGraph, IoError> {
    let mut builder = GraphBuilder::new();
    let mut seen = std::collections::BTreeSet::new();
    for v in &json.vertices {
        if !seen.insert(v.id.clone()) {
            return Err(IoError::DuplicateId(v.id.clone()));
        }
        builder.vertex(v.id.clone(), parse_charge(&v.charge)?);
    }
    let vertex_index = |id: &str| {
        json.vertices
            .iter()
            .position(|v| v.id == id)
            .ok_or_else(|| IoError::UnknownVertex(id.to_string()))
    };
    let mut seen_edges = std::collections::BTreeSet::new();
    for e in &json.edges {
        if !seen_edges.insert(e.id.clone()) {
            return Err(IoError::DuplicateId(e.id.clone()));
        }
        let pair = builder.edge(
            e.id.clone(),
            vertex_index(&e.from)?,
            vertex_index(&e.to)?,
            e.b,
        );
        if let Some([[a, b], [c, d]]) = e.gluing {
            builder.gluing(pair, GluingMatrix::new(a, b, c, d)?);
        }
    }
    Ok(builder.build())
}

pub fn graph_to_json(g: &LabeledGraph) -> GraphJson {
    GraphJson {
        vertices: (0..g.vertex_count())
            .map(|v| VertexJson {
                id: g.vertex_id(v).to_string(),
                charge: charge_string(g.charge(v)),
            })
            .collect(),
        edges: g
            .pairs()
            .map(|e| {
                let w = OrientedEdge::forward(e);
                EdgeJson {
                    id: g.edge_id(e).to_string(),
                    from: g.vertex_id(g.tail(w)).to_string(),
                    to: g.vertex_id(g.head(w)).to_string(),
                    b: g.index_of_pair(e),
                    gluing: g.gluing_of(e).map(|m| [[m.a, m.b], [m.c, m.d]]),
                }
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Oriented-edge keys: `id` for the forward orientation, `-id` reversed.
// ---------------------------------------------------------------------------

pub fn oriented_key(g: &LabeledGraph, w: OrientedEdge) -> String {
    g.oriented_id(w)
}

pub fn parse_oriented(g: &LabeledGraph, key: &str) -> Result<OrientedEdge, IoError> {
    let (reversed, id) = match key.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, key),
    };
    let pair = g
        .pair_by_id(id)
        .ok_or_else(|| IoError::UnknownEdge(key.to_string()))?;
    Ok(OrientedEdge { pair, reversed })
}

// ---------------------------------------------------------------------------
// State / splitting / Δs schemas.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct StateJson {
    pub lengths: BTreeMap<String, f64>,
    pub angles: BTreeMap<String, f64>,
}

pub fn state_to_json(g: &LabeledGraph, s: &IsometricState) -> StateJson {
    StateJson {
        lengths: (0..g.vertex_count())
            .map(|v| (g.vertex_id(v).to_string(), s.length(v)))
            .collect(),
        angles: g
            .pairs()
            .map(|e| (g.edge_id(e).to_string(), s.angle(e)))
            .collect(),
    }
}

pub fn state_from_json(g: &LabeledGraph, json: &StateJson) -> Result<IsometricState, IoError> {
    let mut lengths = vec![0.0; g.vertex_count()];
    for v in 0..g.vertex_count() {
        lengths[v] = *json
            .lengths
            .get(g.vertex_id(v))
            .ok_or_else(|| IoError::Missing(format!("length of {}", g.vertex_id(v))))?;
    }
    let mut angles = vec![0.0; g.pair_count()];
    for e in g.pairs() {
        angles[e] = *json
            .angles
            .get(g.edge_id(e))
            .ok_or_else(|| IoError::Missing(format!("angle of {}", g.edge_id(e))))?;
    }
    Ok(IsometricState::new(g, lengths, angles)?)
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct SplittingJson {
    pub k: BTreeMap<String, f64>,
}

pub fn splitting_to_json(g: &LabeledGraph, split: &ChargeSplitting) -> SplittingJson {
    SplittingJson {
        k: g.oriented_edges()
            .map(|w| (oriented_key(g, w), split.value(w)))
            .collect(),
    }
}

pub fn splitting_from_json(
    g: &LabeledGraph,
    json: &SplittingJson,
) -> Result<ChargeSplitting, IoError> {
    let mut k = vec![0.0; g.oriented_count()];
    for w in g.oriented_edges() {
        let key = oriented_key(g, w);
        k[w.index()] = *json
            .k
            .get(&key)
            .ok_or_else(|| IoError::Missing(format!("split charge {key}")))?;
    }
    Ok(ChargeSplitting { k })
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct DsJson {
    pub delta_s: BTreeMap<String, f64>,
}

pub fn ds_to_json(g: &LabeledGraph, ds: &DsFunction) -> DsJson {
    DsJson {
        delta_s: g
            .pairs()
            .map(|e| (g.edge_id(e).to_string(), ds.pair_value(e)))
            .collect(),
    }
}

pub fn ds_from_json(g: &LabeledGraph, json: &DsJson) -> Result<DsFunction, IoError> {
    let mut values = vec![0.0; g.pair_count()];
    for e in g.pairs() {
        values[e] = *json
            .delta_s
            .get(g.edge_id(e))
            .ok_or_else(|| IoError::Missing(format!("delta_s of {}", g.edge_id(e))))?;
    }
    Ok(DsFunction::from_pairs(values)?)
}

// ---------------------------------------------------------------------------
// Configuration / realization / report schemas.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct PsiJson {
    pub psi01: [f64; 2],
    pub psi10: [f64; 2],
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ConfigJson {
    pub lambda: BTreeMap<String, f64>,
    pub psi: BTreeMap<String, PsiJson>,
    pub xi: BTreeMap<String, [f64; 2]>,
    pub mass: f64,
}

pub fn config_to_json(g: &LabeledGraph, cfg: &GaugeConfiguration) -> ConfigJson {
    ConfigJson {
        lambda: g
            .oriented_edges()
            .map(|w| (oriented_key(g, w), cfg.lambda.value(w)))
            .collect(),
        psi: g
            .pairs()
            .map(|e| {
                (
                    g.edge_id(e).to_string(),
                    PsiJson {
                        psi01: [cfg.connection.psi01[e].re, cfg.connection.psi01[e].im],
                        psi10: [cfg.connection.psi10[e].re, cfg.connection.psi10[e].im],
                    },
                )
            })
            .collect(),
        xi: g
            .oriented_edges()
            .map(|w| {
                (
                    oriented_key(g, w),
                    [cfg.section.value(w).re, cfg.section.value(w).im],
                )
            })
            .collect(),
        mass: cfg.mass,
    }
}

pub fn config_from_json(
    g: &LabeledGraph,
    json: &ConfigJson,
) -> Result<GaugeConfiguration, IoError> {
    let mut lambda = vec![0.0; g.oriented_count()];
    let mut xi = vec![C::ZERO; g.oriented_count()];
    for w in g.oriented_edges() {
        let key = oriented_key(g, w);
        lambda[w.index()] = *json
            .lambda
            .get(&key)
            .ok_or_else(|| IoError::Missing(format!("lambda {key}")))?;
        let [re, im] = *json
            .xi
            .get(&key)
            .ok_or_else(|| IoError::Missing(format!("xi {key}")))?;
        xi[w.index()] = C::new(re, im);
    }
    let mut psi01 = vec![C::ZERO; g.pair_count()];
    let mut psi10 = vec![C::ZERO; g.pair_count()];
    for e in g.pairs() {
        let entry = json
            .psi
            .get(g.edge_id(e))
            .ok_or_else(|| IoError::Missing(format!("psi of {}", g.edge_id(e))))?;
        psi01[e] = C::new(entry.psi01[0], entry.psi01[1]);
        psi10[e] = C::new(entry.psi10[0], entry.psi10[1]);
    }
    Ok(GaugeConfiguration {
        lambda: HermitianStructure::new(g, lambda)?,
        connection: Connection::from_psi(psi01, psi10),
        section: Section::new(g, xi)?,
        mass: json.mass,
    })
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct RealizationJson {
    #[serde(flatten)]
    pub config: ConfigJson,
    pub delta_s: BTreeMap<String, f64>,
    #[serde(rename = "W_s")]
    pub w_s: Vec<String>,
    pub provenance: ProvenanceJson,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ProvenanceJson {
    pub state: StateJson,
    pub splitting: SplittingJson,
}

pub fn realization_to_json(r: &SpectralRealization) -> RealizationJson {
    let g = r.triple.graph();
    RealizationJson {
        config: config_to_json(g, &r.config),
        delta_s: ds_to_json(g, r.triple.ds()).delta_s,
        w_s: r.w_s.iter().map(|&w| oriented_key(g, w)).collect(),
        provenance: ProvenanceJson {
            state: state_to_json(g, &r.state),
            splitting: splitting_to_json(g, &r.splitting),
        },
    }
}

pub fn realization_from_json(
    g: &LabeledGraph,
    json: &RealizationJson,
) -> Result<SpectralRealization, IoError> {
    let config = config_from_json(g, &json.config)?;
    let ds = ds_from_json(
        g,
        &DsJson {
            delta_s: json.delta_s.clone(),
        },
    )?;
    let triple = build_triple(g, ds)?;
    let w_s = json
        .w_s
        .iter()
        .map(|key| parse_oriented(g, key))
        .collect::<Result<Vec<_>, _>>()?;
    let state = state_from_json(g, &json.provenance.state)?;
    let splitting = splitting_from_json(g, &json.provenance.splitting)?;
    let mut realized_lengths = vec![None; g.vertex_count()];
    for v in 0..g.vertex_count() {
        for &w in g.flags(v) {
            let k = splitting.value(w);
            if k.abs() > 1e-9 {
                let l2 = config.lambda.value(w) * config.section.value(w).norm_sqr() / k.abs();
                realized_lengths[v] = Some(l2.sqrt());
                break;
            }
        }
    }
    Ok(SpectralRealization {
        triple,
        config,
        w_s,
        realized_lengths,
        state,
        splitting,
    })
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct CriticalityJson {
    #[serde(rename = "S")]
    pub s: ActionJson,
    pub residuals: ResidualsJson,
    pub phase_n: BTreeMap<String, i64>,
    pub passed: bool,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ActionJson {
    pub ym: f64,
    pub energy: f64,
    pub mass: f64,
    pub total: f64,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ResidualsJson {
    pub maxwell: f64,
    pub wave: f64,
    pub hermitian: f64,
}

pub fn criticality_to_json(g: &LabeledGraph, report: &CriticalityReport) -> CriticalityJson {
    CriticalityJson {
        s: ActionJson {
            ym: report.action.ym,
            energy: report.action.energy,
            mass: report.action.mass_term,
            total: report.action.total,
        },
        residuals: ResidualsJson {
            maxwell: report.maxwell_residual,
            wave: report.wave_residual,
            hermitian: report.hermitian_residual,
        },
        phase_n: g
            .pairs()
            .map(|e| (g.edge_id(e).to_string(), report.phase_n[e]))
            .collect(),
        passed: report.passed,
    }
}
