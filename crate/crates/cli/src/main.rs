//! Command-line front end: graph ingestion, state solving, spectral
//! realization, verification, ρ-band scans, and Connes distances.
//!
//! Exit codes: 0 success, 2 validation/parse failure, 3 no solution found,
//! 4 balance or criticality failure. Every JSON report embeds a manifest
//! (command, input digests, parameters, library version) so reruns with
//! identical manifests produce identical bytes.

use clap::{Args, Parser, Subcommand};
use graphem::compat::{
    self, decompose_state, h_form, is_geometrizable, Geometrizability, SolveOptions,
};
use graphem::graph::LabeledGraph;
use graphem::io::{
    criticality_to_json, ds_from_json, graph_from_json, realization_from_json, realization_to_json,
    splitting_to_json, state_from_json, state_to_json, DsJson, GraphJson, RealizationJson,
    StateJson,
};
use graphem::numeric::symmetric_eigenvalues;
use graphem::solutions::{massgap_mismatches, massgap_scan, realize_pipeline, verify_critical};
use graphem::spectral::{build_triple, connes_distance, Distance};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NO_SOLUTION: u8 = 3;
const EXIT_CRITICALITY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "graphem",
    version,
    about = "Isometric states on labeled graphs and their electromagnetic realizations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Residual tolerance for solving and verification.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Seed for the deterministic searches.
    #[arg(long, global = true, default_value_t = 0x5eed)]
    seed: u64,
    /// Emit machine-readable JSON on stdout instead of a text summary.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Decide geometrizability from the form H_M = diag K − J_B.
    CheckGeom(GraphArg),
    /// Search for an isometric state of the compatibility equation.
    Solve {
        #[command(flatten)]
        graph: GraphArg,
        /// Write the state JSON here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Decompose a state into per-edge charges.
    Decompose {
        #[command(flatten)]
        graph: GraphArg,
        state: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Realize a state as a critical configuration of the action.
    Realize {
        #[command(flatten)]
        graph: GraphArg,
        state: PathBuf,
        /// Field mass m > 0.
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        /// Seed value δ0 for the Δs propagation.
        #[arg(long, default_value_t = 4.0 / 9.0)]
        delta0: f64,
        /// Edge id that receives δ0.
        #[arg(long)]
        seed_edge: Option<String>,
        /// Charge splitting JSON replacing the canonical decomposition.
        #[arg(long)]
        splitting: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Verify a realization file against the criticality conditions.
    Verify {
        #[command(flatten)]
        graph: GraphArg,
        realization: PathBuf,
    },
    /// Scan ρ and compare the band classifier with numeric root finding.
    MassgapScan {
        #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
        rho_min: f64,
        #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
        rho_max: f64,
        #[arg(long, default_value_t = 121)]
        steps: usize,
        /// Write the CSV here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Connes distance between two vertices for a given Δs.
    Distance {
        #[command(flatten)]
        graph: GraphArg,
        ds: PathBuf,
        v0: String,
        v1: String,
    },
    /// Apply the graph Laplacian to a vertex function.
    Laplacian {
        #[command(flatten)]
        graph: GraphArg,
        /// JSON file mapping vertex ids to values.
        function: PathBuf,
    },
}

#[derive(Args)]
struct GraphArg {
    /// Labeled graph JSON.
    graph: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn digest(content: &str) -> String {
    let hash = Sha256::digest(content.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, content: &str) -> Result<T, Failure> {
    serde_json::from_str(content).map_err(|e| {
        Failure::validation(format!(
            "{}: line {} column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

fn load_graph(path: &Path, inputs: &mut BTreeMap<String, String>) -> Result<LabeledGraph, Failure> {
    let content = read_file(path)?;
    inputs.insert(path.display().to_string(), digest(&content));
    let json: GraphJson = parse_json(path, &content)?;
    let g = graph_from_json(&json).map_err(|e| Failure::validation(e.to_string()))?;
    let report = g.validate();
    if !report.is_valid() {
        let list: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(Failure::validation(format!(
            "invalid graph: {}",
            list.join("; ")
        )));
    }
    Ok(g)
}

fn manifest(
    command: &str,
    inputs: &BTreeMap<String, String>,
    params: &BTreeMap<String, String>,
) -> Value {
    json!({
        "command": command,
        "inputs": inputs,
        "params": params,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn write_or_print(output: &Option<PathBuf>, content: &str) -> Result<(), Failure> {
    match output {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| Failure::validation(format!("{}: {e}", path.display()))),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut inputs = BTreeMap::new();
    let mut params = BTreeMap::new();
    params.insert("tol".to_string(), format!("{:e}", cli.tol));
    params.insert("seed".to_string(), cli.seed.to_string());

    match &cli.command {
        Command::CheckGeom(arg) => {
            let g = load_graph(&arg.graph, &mut inputs)?;
            let form = h_form(&g);
            let eigenvalues = symmetric_eigenvalues(&form.matrix);
            let verdict = is_geometrizable(&g);
            let verdict_str = match verdict {
                Geometrizability::Geometrizable => "geometrizable",
                Geometrizability::NotGeometrizable => "not geometrizable",
                Geometrizability::NotApplicable => "criterion not applicable",
            };
            let rows: Vec<Vec<f64>> = (0..form.matrix.nrows())
                .map(|i| {
                    (0..form.matrix.ncols())
                        .map(|j| form.matrix[(i, j)])
                        .collect()
                })
                .collect();
            let report = json!({
                "manifest": manifest("check-geom", &inputs, &params),
                "H_M": rows,
                "eigenvalues": eigenvalues,
                "min_eigenvalue": eigenvalues.first().copied(),
                "verdict": verdict_str,
            });
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&report).unwrap());
            } else {
                println!("H_M = {rows:?}");
                println!(
                    "min eigenvalue = {:.6e}",
                    eigenvalues.first().copied().unwrap_or(0.0)
                );
                println!("verdict: {verdict_str}");
            }
            Ok(())
        }

        Command::Solve { graph, output } => {
            let g = load_graph(&graph.graph, &mut inputs)?;
            let opts = SolveOptions {
                seed: cli.seed,
                ..SolveOptions::default()
            };
            match compat::solve_state(&g, &opts) {
                Some(solved) => {
                    let state_json = state_to_json(&g, &solved.state);
                    if let Some(path) = output {
                        std::fs::write(path, serde_json::to_string_pretty(&state_json).unwrap())
                            .map_err(|e| Failure::validation(e.to_string()))?;
                    }
                    if cli.json {
                        let report = json!({
                            "manifest": manifest("solve", &inputs, &params),
                            "residual": solved.residual,
                            "state": state_json,
                        });
                        println!("{}", serde_json::to_string_pretty(&report).unwrap());
                    } else {
                        println!("state found, residual {:.3e}", solved.residual);
                        if output.is_none() {
                            println!("{}", serde_json::to_string_pretty(&state_json).unwrap());
                        }
                    }
                    Ok(())
                }
                None => {
                    let hint = match is_geometrizable(&g) {
                        Geometrizability::NotGeometrizable => "; criterion says not geometrizable",
                        Geometrizability::Geometrizable => {
                            "; criterion says a state exists (search budget exhausted)"
                        }
                        Geometrizability::NotApplicable => "",
                    };
                    Err(Failure {
                        code: EXIT_NO_SOLUTION,
                        message: format!("no state found{hint}"),
                    })
                }
            }
        }

        Command::Decompose {
            graph,
            state,
            output,
        } => {
            let g = load_graph(&graph.graph, &mut inputs)?;
            let content = read_file(state)?;
            inputs.insert(state.display().to_string(), digest(&content));
            let sj: StateJson = parse_json(state, &content)?;
            let s = state_from_json(&g, &sj).map_err(|e| Failure::validation(e.to_string()))?;
            let split = decompose_state(&g, &s, cli.tol.max(compat::SOLVER_TOL))
                .map_err(|e| Failure::validation(e.to_string()))?;
            let split_json = splitting_to_json(&g, &split);
            if let Some(path) = output {
                std::fs::write(path, serde_json::to_string_pretty(&split_json).unwrap())
                    .map_err(|e| Failure::validation(e.to_string()))?;
            }
            if cli.json || output.is_none() {
                let body = json!({
                    "manifest": manifest("decompose", &inputs, &params),
                    "splitting": split_json,
                });
                println!("{}", serde_json::to_string_pretty(&body).unwrap());
            }
            Ok(())
        }

        Command::Realize {
            graph,
            state,
            mass,
            delta0,
            seed_edge,
            splitting,
            output,
        } => {
            let g = load_graph(&graph.graph, &mut inputs)?;
            let content = read_file(state)?;
            inputs.insert(state.display().to_string(), digest(&content));
            params.insert("mass".to_string(), format!("{mass}"));
            params.insert("delta0".to_string(), format!("{delta0}"));
            let sj: StateJson = parse_json(state, &content)?;
            let s = state_from_json(&g, &sj).map_err(|e| Failure::validation(e.to_string()))?;
            let seed_pair = match seed_edge {
                Some(id) => Some(
                    g.pair_by_id(id)
                        .ok_or_else(|| Failure::validation(format!("unknown edge id {id:?}")))?,
                ),
                None => None,
            };
            let split = match splitting {
                Some(path) => {
                    let split_content = read_file(path)?;
                    inputs.insert(path.display().to_string(), digest(&split_content));
                    let sj: graphem::io::SplittingJson = parse_json(path, &split_content)?;
                    Some(
                        graphem::io::splitting_from_json(&g, &sj)
                            .map_err(|e| Failure::validation(e.to_string()))?,
                    )
                }
                None => None,
            };
            let (realization, report) =
                realize_pipeline(&g, &s, split.as_ref(), *mass, *delta0, seed_pair, cli.tol)
                    .map_err(|e| Failure {
                        code: EXIT_CRITICALITY,
                        message: e.to_string(),
                    })?;
            if let Some(path) = output {
                std::fs::write(
                    path,
                    serde_json::to_string_pretty(&realization_to_json(&realization)).unwrap(),
                )
                .map_err(|e| Failure::validation(e.to_string()))?;
            }
            if cli.json {
                let report_json = json!({
                    "manifest": manifest("realize", &inputs, &params),
                    "criticality": criticality_to_json(&g, &report),
                });
                println!("{}", serde_json::to_string_pretty(&report_json).unwrap());
            } else {
                println!(
                    "realized: maxwell {:.3e}, wave {:.3e}, hermitian {:.3e}, S = {:.6}",
                    report.maxwell_residual,
                    report.wave_residual,
                    report.hermitian_residual,
                    report.action.total
                );
            }
            if report.passed {
                Ok(())
            } else {
                Err(Failure {
                    code: EXIT_CRITICALITY,
                    message: format!(
                        "criticality verification failed (maxwell {:.3e}, wave {:.3e})",
                        report.maxwell_residual, report.wave_residual
                    ),
                })
            }
        }

        Command::Verify { graph, realization } => {
            let g = load_graph(&graph.graph, &mut inputs)?;
            let content = read_file(realization)?;
            inputs.insert(realization.display().to_string(), digest(&content));
            let rj: RealizationJson = parse_json(realization, &content)?;
            let r =
                realization_from_json(&g, &rj).map_err(|e| Failure::validation(e.to_string()))?;
            let report = verify_critical(&r, cli.tol).map_err(|e| Failure {
                code: EXIT_CRITICALITY,
                message: e.to_string(),
            })?;
            if cli.json {
                let out = json!({
                    "manifest": manifest("verify", &inputs, &params),
                    "criticality": criticality_to_json(&g, &report),
                });
                println!("{}", serde_json::to_string_pretty(&out).unwrap());
            } else {
                println!(
                    "maxwell {:.3e}, wave {:.3e}, hermitian {:.3e}, lengths {:.3e}, gauge {:.3e}: {}",
                    report.maxwell_residual,
                    report.wave_residual,
                    report.hermitian_residual,
                    report.length_consistency,
                    report.gauge_invariance,
                    if report.passed { "pass" } else { "FAIL" }
                );
            }
            if report.passed {
                Ok(())
            } else {
                Err(Failure {
                    code: EXIT_CRITICALITY,
                    message: "criticality checks failed".into(),
                })
            }
        }

        Command::MassgapScan {
            rho_min,
            rho_max,
            steps,
            output,
        } => {
            params.insert("rho_min".to_string(), format!("{rho_min}"));
            params.insert("rho_max".to_string(), format!("{rho_max}"));
            params.insert("steps".to_string(), steps.to_string());
            let rows = massgap_scan(*rho_min, *rho_max, *steps, 1.0, 1.3, cli.seed);
            let mismatches = massgap_mismatches(&rows, 0.01);
            let mut csv = String::from("rho,phase,found_numeric,residual\n");
            for row in &rows {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    row.rho,
                    row.class.label(),
                    row.found_numeric,
                    if row.residual.is_nan() {
                        String::new()
                    } else {
                        format!("{:e}", row.residual)
                    }
                ));
            }
            write_or_print(output, csv.trim_end())?;
            if cli.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "manifest": manifest("massgap-scan", &inputs, &params),
                        "mismatches": mismatches,
                        "rows": rows.len(),
                    }))
                    .unwrap()
                );
            } else {
                println!("mismatches (outside boundary margins): {mismatches}");
            }
            Ok(())
        }

        Command::Distance { graph, ds, v0, v1 } => {
            let g = load_graph(&graph.graph, &mut inputs)?;
            let content = read_file(ds)?;
            inputs.insert(ds.display().to_string(), digest(&content));
            let dj: DsJson = parse_json(ds, &content)?;
            let ds_fn = ds_from_json(&g, &dj).map_err(|e| Failure::validation(e.to_string()))?;
            let triple = build_triple(&g, ds_fn).map_err(|e| Failure::validation(e.to_string()))?;
            let a = g
                .vertex_by_id(v0)
                .ok_or_else(|| Failure::validation(format!("unknown vertex {v0:?}")))?;
            let b = g
                .vertex_by_id(v1)
                .ok_or_else(|| Failure::validation(format!("unknown vertex {v1:?}")))?;
            match connes_distance(&triple, a, b) {
                Distance::Finite { value, maximizer } => {
                    if cli.json {
                        println!(
                            "{}",
                            serde_json::to_string_pretty(&json!({
                                "manifest": manifest("distance", &inputs, &params),
                                "distance": value,
                                "maximizer": (0..g.vertex_count())
                                    .map(|v| (g.vertex_id(v).to_string(), maximizer[v]))
                                    .collect::<BTreeMap<_, _>>(),
                            }))
                            .unwrap()
                        );
                    } else {
                        println!("{value}");
                    }
                }
                Distance::Infinite => {
                    if cli.json {
                        println!(
                            "{}",
                            serde_json::to_string_pretty(&json!({
                                "manifest": manifest("distance", &inputs, &params),
                                "distance": "infinite",
                            }))
                            .unwrap()
                        );
                    } else {
                        println!("infinite");
                    }
                }
            }
            Ok(())
        }

        Command::Laplacian { graph, function } => {
            let g = load_graph(&graph.graph, &mut inputs)?;
            let content = read_file(function)?;
            inputs.insert(function.display().to_string(), digest(&content));
            let fj: BTreeMap<String, f64> = parse_json(function, &content)?;
            let mut f = vec![0.0; g.vertex_count()];
            for v in 0..g.vertex_count() {
                f[v] = *fj
                    .get(g.vertex_id(v))
                    .ok_or_else(|| Failure::validation(format!("missing f({})", g.vertex_id(v))))?;
            }
            let lap = compat::graph_laplacian(&g, &f);
            let df = compat::graph_d(&g, &f);
            let dirichlet = compat::edge_inner(&g, &df, &df);
            let pairing = compat::vertex_inner(&g, &lap, &f);
            let out = json!({
                "manifest": manifest("laplacian", &inputs, &params),
                "laplacian": (0..g.vertex_count())
                    .map(|v| (g.vertex_id(v).to_string(), lap[v]))
                    .collect::<BTreeMap<_, _>>(),
                "dirichlet_energy": dirichlet,
                "pairing": pairing,
            });
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&out).unwrap());
            } else {
                for v in 0..g.vertex_count() {
                    println!("{}: {}", g.vertex_id(v), lap[v]);
                }
                println!("energy identity: <Δf,f> = {pairing}, ||df||^2 = {dirichlet}");
            }
            Ok(())
        }
    }
}
