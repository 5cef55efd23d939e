//! Subcommands. Each returns a [`Report`] with a machine (JSON) and a human
//! (text) rendering and the process exit code.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use decouple_core::algebra::{format_rat, Poly};
use decouple_core::canonical::tree_transform;
use decouple_core::compensation::{build_ede, decompose_blocks};
use decouple_core::flowgraph::{build_sfg, enumerate_frameworks, is_tree};
use decouple_core::poles::{independence_test, is_diagonal, m_matrix, place_decoupled, PlacementOutcome, PolePlacementSpec};
use decouple_core::synthesis::{law_equations, synthesize, BranchOutcome, Decision, Limits, SparePoles};
use decouple_core::system::{
    closed_loop_tf, decoupling_pair, diagonality_check, diagonality_check_relaxed, falb_wolovich, relative_orders,
    Diagonality,
};
use serde_json::{json, Value};

use crate::document::{matrix_entries, parse_law, parse_placement_spec, parse_spare_poles, parse_system, LawDocument, SCHEMA};
use crate::CliError;

pub const EXIT_POSITIVE: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

#[derive(Clone, Debug)]
pub struct Report {
    pub command: Value,
    pub exit_code: i32,
    pub body: Value,
    pub text: String,
    pub elapsed_ms: u128,
}

impl Report {
    /// Everything except timing; identical inputs give identical values.
    pub fn deterministic(&self) -> Value {
        json!({
            "schema": SCHEMA,
            "command": self.command,
            "exit_code": self.exit_code,
            "report": self.body,
        })
    }

    pub fn machine(&self) -> Value {
        let mut v = self.deterministic();
        v["timing"] = json!({ "elapsed_ms": self.elapsed_ms as u64 });
        v
    }

    pub fn verdict(&self) -> &str {
        self.body["verdict"].as_str().unwrap_or("")
    }
}

fn finish(command: Value, exit_code: i32, body: Value, text: String, start: Instant) -> Report {
    Report { command, exit_code, body, text, elapsed_ms: start.elapsed().as_millis() }
}

fn names(prefix: &str, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|i| format!("{prefix}{}", i + 1)).collect()
}

fn poly_strings(ps: &[Poly]) -> Vec<String> {
    ps.iter().map(ToString::to_string).collect()
}

/// Relative orders, decoupling pair, frameworks and their decoupling matrices.
pub fn cmd_analyze(path: &Path, max_frameworks: Option<usize>) -> Result<Report, CliError> {
    let start = Instant::now();
    let command = json!({ "name": "analyze", "system": path.display().to_string(), "max_frameworks": max_frameworks });
    let (sys, name) = parse_system(path)?;
    let d = relative_orders(&sys);
    let pair = decoupling_pair(&sys, &d);
    let fw_test = falb_wolovich(&sys);
    let sfg = build_sfg(&sys);
    let frameworks = enumerate_frameworks(&sfg, max_frameworks);
    let mut fw_json = Vec::new();
    let mut text = String::new();
    let _ = writeln!(text, "system {} (n={}, m={}, p={})", name.as_deref().unwrap_or("-"), sys.n(), sys.m(), sys.p());
    let _ = writeln!(text, "relative orders d = {:?}", d.d);
    let _ = writeln!(
        text,
        "Falb-Wolovich: rank B* = {} ({})",
        fw_test.rank,
        if fw_test.passes { "passes" } else { "fails" }
    );
    for (k, fw) in frameworks.items.iter().enumerate() {
        let ede = build_ede(&sys, fw);
        let blocks = decompose_blocks(&ede.e);
        let paths: Vec<String> = fw.paths.iter().map(ToString::to_string).collect();
        let _ = writeln!(text, "framework {}: {} orders {:?}", k + 1, paths.join(", "), fw.orders());
        for (i, row) in ede.to_display_rows().iter().enumerate() {
            let _ = writeln!(text, "  E_de {}: [{}]", ede.labels[i], row.join(", "));
        }
        fw_json.push(json!({
            "paths": paths,
            "orders": fw.orders(),
            "assignment": names("u", &fw.assignment()),
            "ede": { "rows": ede.label_strings(), "entries": ede.to_display_rows() },
            "blocks": blocks.iter().map(|b| json!({
                "rows": b.rows.iter().map(|&r| ede.labels[r].to_string()).collect::<Vec<_>>(),
                "inputs": names("u", &b.cols),
            })).collect::<Vec<_>>(),
        }));
    }
    let verdict = if frameworks.items.is_empty() {
        let _ = writeln!(text, "no decoupling framework");
        "no decoupling framework"
    } else {
        "frameworks found"
    };
    let body = json!({
        "verdict": verdict,
        "system": { "name": name, "n": sys.n(), "m": sys.m(), "p": sys.p() },
        "relative_orders": d.d,
        "rows_without_input_path": names("y", &d.fallback),
        "bstar": matrix_entries(&pair.bstar),
        "astar": matrix_entries(&pair.astar),
        "falb_wolovich": fw_test,
        "flow_graph": { "nodes": sfg.node_count(), "edges": sfg.edges().len(), "is_tree": is_tree(&sfg) },
        "frameworks": fw_json,
        "frameworks_truncated": frameworks.truncated,
    });
    Ok(finish(command, EXIT_POSITIVE, body, text, start))
}

#[derive(Clone, Debug, Default)]
pub struct DecoupleOptions {
    pub limits: Limits,
    pub poles: Option<PathBuf>,
    pub trace: bool,
}

/// Full synthesis; exit 0 decoupled, 1 not decouplable, 2 inconclusive.
pub fn cmd_decouple(path: &Path, opts: &DecoupleOptions) -> Result<Report, CliError> {
    let start = Instant::now();
    let command = json!({
        "name": "decouple",
        "system": path.display().to_string(),
        "max_frameworks": opts.limits.max_frameworks,
        "max_strings": opts.limits.max_strings,
        "max_masters": opts.limits.max_masters,
        "poles": opts.poles.as_ref().map(|p| p.display().to_string()),
        "trace": opts.trace,
    });
    let (sys, name) = parse_system(path)?;
    let spare = match &opts.poles {
        Some(p) => parse_spare_poles(p)?,
        None => SparePoles::default(),
    };
    let rep = synthesize(&sys, &opts.limits, &spare)?;
    let (verdict, exit_code) = match rep.decision {
        Decision::Decoupled => ("decoupled", EXIT_POSITIVE),
        Decision::NotDecouplable => ("not decouplable", EXIT_NEGATIVE),
        Decision::Inconclusive => ("inconclusive", EXIT_INCONCLUSIVE),
    };
    let mut text = String::new();
    let _ = writeln!(text, "system {}: {verdict}", name.as_deref().unwrap_or("-"));
    let mut law_json = Value::Null;
    if let (Some(law), Some(orders)) = (&rep.law, &rep.orders) {
        let _ = writeln!(text, "verified orders {orders:?}");
        if let Some(k) = rep.framework {
            let _ = writeln!(text, "framework: {}", rep.frameworks[k].join(", "));
        }
        for c in &rep.compensations {
            let _ = writeln!(text, "compensation: {c}");
        }
        let eqs = law_equations(law);
        for e in &eqs {
            let _ = writeln!(text, "  {e}");
        }
        law_json = json!({ "document": LawDocument::from_law(law), "equations": eqs });
    }
    let witnesses: Vec<String> = rep.witnesses().iter().map(ToString::to_string).collect();
    if rep.decision != Decision::Decoupled {
        for (k, b) in rep.branches.iter().enumerate() {
            if let BranchOutcome::Refused { refusal } = &b.outcome {
                let strings = if b.strings.is_empty() { "-".to_string() } else { b.strings.join(", ") };
                let _ = writeln!(text, "branch {}: strings {strings}: {refusal}", k + 1);
            }
        }
    }
    let branches: Vec<Value> = rep
        .branches
        .iter()
        .map(|b| {
            let mut v = json!({
                "framework": b.framework,
                "masters": b.masters.iter().map(|m| names("u", m)).collect::<Vec<_>>(),
                "strings": b.strings,
                "terminals": names("x", &b.terminals),
                "outcome": b.outcome,
            });
            if opts.trace {
                v["type2"] = json!(b.type2);
                v["iterations"] = json!(b.iterations);
            }
            v
        })
        .collect();
    let body = json!({
        "verdict": verdict,
        "route": rep.route,
        "orders": rep.orders,
        "law": law_json,
        "framework": rep.framework.map(|k| rep.frameworks[k].clone()),
        "frameworks": rep.frameworks,
        "compensations": rep.compensations,
        "self_compensation_poles": rep.self_compensation_poles.iter().map(format_rat).collect::<Vec<_>>(),
        "stats": rep.stats,
        "witnesses": witnesses,
        "branches": branches,
    });
    Ok(finish(command, exit_code, body, text, start))
}

/// Exact closed-loop diagonality of a supplied law.
pub fn cmd_verify(path: &Path, law_path: &Path, relaxed: bool) -> Result<Report, CliError> {
    let start = Instant::now();
    let command = json!({
        "name": "verify",
        "system": path.display().to_string(),
        "law": law_path.display().to_string(),
        "relaxed_diagonal": relaxed,
    });
    let (sys, _) = parse_system(path)?;
    let law = parse_law(law_path, &sys)?;
    let tf = closed_loop_tf(&sys, &law)?;
    let check = if relaxed { diagonality_check_relaxed(&tf)? } else { diagonality_check(&tf)? };
    let mut text = String::new();
    let (body, code) = match &check {
        Diagonality::IntegratorDiagonal { orders } => {
            let _ = writeln!(text, "integrator diagonal, orders {orders:?}");
            (json!({ "verdict": "integrator diagonal", "orders": orders }), EXIT_POSITIVE)
        }
        Diagonality::Diagonal { denominators } => {
            let _ = writeln!(text, "diagonal, denominators [{}]", poly_strings(denominators).join(", "));
            (json!({ "verdict": "diagonal", "denominators": poly_strings(denominators) }), EXIT_POSITIVE)
        }
        Diagonality::Witness { row, col } => {
            let entry = tf.get(*row, *col).to_string();
            let _ = writeln!(text, "not diagonal: entry (y{}, v{}) = {entry}", row + 1, col + 1);
            (
                json!({ "verdict": "not diagonal", "witness": { "output": row + 1, "input": col + 1, "entry": entry } }),
                EXIT_NEGATIVE,
            )
        }
    };
    let mut body = body;
    body["transfer"] = json!(tf.to_display_rows());
    body["rank_g"] = json!(law.g.rank());
    Ok(finish(command, code, body, text, start))
}

/// Pole placement on a decoupled loop, or the state that prevents it.
pub fn cmd_poles(path: &Path, law_path: &Path, spec_path: Option<&Path>) -> Result<Report, CliError> {
    let start = Instant::now();
    let command = json!({
        "name": "poles",
        "system": path.display().to_string(),
        "law": law_path.display().to_string(),
        "spec": spec_path.map(|p| p.display().to_string()),
    });
    let (sys, _) = parse_system(path)?;
    let law = parse_law(law_path, &sys)?;
    let orders = match diagonality_check(&closed_loop_tf(&sys, &law)?)? {
        Diagonality::IntegratorDiagonal { orders } => orders,
        _ => return Err(CliError::Precondition("the law does not decouple the system into integrators".into())),
    };
    let spec = match spec_path {
        Some(p) => parse_placement_spec(p)?,
        None => PolePlacementSpec::Uniform(-decouple_core::algebra::rat(1)),
    };
    let tree = tree_transform(&sys.closed_loop(&law)?, &orders)?;
    let partition = independence_test(&tree);
    let subsystems: Vec<Value> = partition
        .subsystems
        .iter()
        .enumerate()
        .map(|(i, states)| json!({ "input": format!("v{}", i + 1), "size": states.len() }))
        .collect();
    let (m_open, _) = m_matrix(&sys, &law)?;
    let mut text = String::new();
    let _ = writeln!(text, "decoupled orders {orders:?}, controllable-observable part {} of {}", tree.n_co, sys.n());
    let (body, code) = match place_decoupled(&sys, &law, &tree, &spec)? {
        PlacementOutcome::Placed { law: placed, denominators, .. } => {
            let (m_closed, delta) = m_matrix(&sys, &placed)?;
            let eqs = law_equations(&placed);
            let _ = writeln!(text, "independent: every subsystem assignable");
            let _ = writeln!(text, "denominators [{}]", poly_strings(&denominators).join(", "));
            for e in &eqs {
                let _ = writeln!(text, "  {e}");
            }
            (
                json!({
                    "verdict": "assignable",
                    "orders": orders,
                    "subsystems": subsystems,
                    "law": { "document": LawDocument::from_law(&placed), "equations": eqs },
                    "denominators": poly_strings(&denominators),
                    "characteristic_polynomial": delta.to_string(),
                    "m_diagonal": is_diagonal(&m_closed),
                }),
                EXIT_POSITIVE,
            )
        }
        PlacementOutcome::Impossible { witness, .. } => {
            let inputs = names("v", &witness.inputs);
            let _ = writeln!(text, "impossible: {} is shared by {{{}}}", witness.state, inputs.join(", "));
            (
                json!({
                    "verdict": "impossible",
                    "orders": orders,
                    "subsystems": subsystems,
                    "witness": { "state": witness.state, "inputs": inputs },
                    "shared": partition.shared.iter().map(|w| json!({
                        "state": w.state, "inputs": names("v", &w.inputs),
                    })).collect::<Vec<_>>(),
                    "m_diagonal_open": is_diagonal(&m_open),
                }),
                EXIT_NEGATIVE,
            )
        }
    };
    Ok(finish(command, code, body, text, start))
}

