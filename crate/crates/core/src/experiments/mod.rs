//! Experiment configs, runners and artifact output.
//!
//! A config is a JSON object with a mandatory `experiment` kind and `seed`
//! (integer or decimal string), an optional `output_dir`, and the fields of
//! that experiment. Unknown keys are rejected before anything is computed.

mod output;
mod runners;
pub mod spec;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use output::{write_run, Assertion, Manifest, RunOutput, Table};
pub use runners::*;

/// Environment variable that overrides every config's output directory.
pub const OUTPUT_DIR_ENV: &str = "MULTITIME_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Echo,
    Sdy,
    Tmi,
    Loe,
    Scaling,
    Bff,
    RandomButterfly,
    Typicality,
    Pesin,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::Echo,
        ExperimentKind::Sdy,
        ExperimentKind::Tmi,
        ExperimentKind::Loe,
        ExperimentKind::Scaling,
        ExperimentKind::Bff,
        ExperimentKind::RandomButterfly,
        ExperimentKind::Typicality,
        ExperimentKind::Pesin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Echo => "echo",
            ExperimentKind::Sdy => "sdy",
            ExperimentKind::Tmi => "tmi",
            ExperimentKind::Loe => "loe",
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::Bff => "bff",
            ExperimentKind::RandomButterfly => "random_butterfly",
            ExperimentKind::Typicality => "typicality",
            ExperimentKind::Pesin => "pesin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentSpec {
    Echo(EchoConfig),
    Sdy(SdyConfig),
    Tmi(TmiConfig),
    Loe(LoeConfig),
    Scaling(ScalingConfig),
    Bff(BffConfig),
    RandomButterfly(RandomButterflyConfig),
    Typicality(TypicalityConfig),
    Pesin(PesinConfig),
}

impl ExperimentSpec {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            ExperimentSpec::Echo(_) => ExperimentKind::Echo,
            ExperimentSpec::Sdy(_) => ExperimentKind::Sdy,
            ExperimentSpec::Tmi(_) => ExperimentKind::Tmi,
            ExperimentSpec::Loe(_) => ExperimentKind::Loe,
            ExperimentSpec::Scaling(_) => ExperimentKind::Scaling,
            ExperimentSpec::Bff(_) => ExperimentKind::Bff,
            ExperimentSpec::RandomButterfly(_) => ExperimentKind::RandomButterfly,
            ExperimentSpec::Typicality(_) => ExperimentKind::Typicality,
            ExperimentSpec::Pesin(_) => ExperimentKind::Pesin,
        }
    }
}

/// A validated config.
#[derive(Clone, Debug)]
pub struct Config {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub spec: ExperimentSpec,
    /// Canonical form: the input with `seed` as a decimal string and
    /// `output_dir` removed; keys sorted.
    pub canonical: Value,
}

fn config_err(field: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        msg: msg.into(),
    }
}

/// Pulls the first backticked name out of a serde message.
fn field_of(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

fn parse_seed(v: &Value) -> Result<u64> {
    match v {
        Value::Number(n) => n.as_u64().ok_or_else(|| config_err("seed", "must be a nonnegative integer")),
        Value::String(s) if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) => {
            s.parse().map_err(|_| config_err("seed", "out of range for u64"))
        }
        _ => Err(config_err("seed", "must be an integer or a decimal string")),
    }
}

/// Parses and validates a config without computing anything.
pub fn parse_config(text: &str) -> Result<Config> {
    let value: Value = serde_json::from_str(text).map_err(|e| config_err("<json>", e.to_string()))?;
    parse_config_value(value)
}

pub fn parse_config_value(value: Value) -> Result<Config> {
    let Value::Object(mut map) = value else {
        return Err(config_err("<root>", "config must be a JSON object"));
    };
    let seed = parse_seed(map.get("seed").ok_or_else(|| config_err("seed", "missing (seed is mandatory)"))?)?;
    let output_dir = match map.remove("output_dir") {
        None => None,
        Some(Value::String(s)) if !s.is_empty() => Some(PathBuf::from(s)),
        Some(_) => return Err(config_err("output_dir", "must be a nonempty string")),
    };
    match map.get("experiment") {
        Some(Value::String(s)) if ExperimentKind::parse(s).is_some() => {}
        Some(_) => {
            let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.as_str()).collect();
            return Err(config_err("experiment", format!("must be one of {}", names.join(", "))));
        }
        None => return Err(config_err("experiment", "missing")),
    }
    map.insert("seed".into(), Value::String(seed.to_string()));
    let canonical = Value::Object(map.clone());
    map.remove("seed");
    let spec: ExperimentSpec = serde_json::from_value(Value::Object(map)).map_err(|e| {
        let msg = e.to_string();
        config_err(&field_of(&msg).unwrap_or_else(|| "experiment".into()), msg)
    })?;
    Ok(Config {
        seed,
        output_dir,
        spec,
        canonical,
    })
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err("<file>", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

impl Config {
    pub fn kind(&self) -> ExperimentKind {
        self.spec.kind()
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.canonical).expect("values serialize");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The environment override, else the config's `output_dir`, else
    /// `out/<experiment>`.
    pub fn resolve_output_dir(&self) -> PathBuf {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            return PathBuf::from(dir);
        }
        self.output_dir
            .clone()
            .unwrap_or_else(|| Path::new("out").join(self.kind().as_str()))
    }
}

/// Runs the configured experiment; nothing is written.
pub fn run(config: &Config) -> Result<RunOutput> {
    let seed = config.seed;
    match &config.spec {
        ExperimentSpec::Echo(c) => run_echo(c, seed),
        ExperimentSpec::Sdy(c) => run_sdy(c, seed),
        ExperimentSpec::Tmi(c) => run_tmi(c, seed),
        ExperimentSpec::Loe(c) => run_loe(c, seed),
        ExperimentSpec::Scaling(c) => run_scaling(c, seed),
        ExperimentSpec::Bff(c) => run_bff(c, seed),
        ExperimentSpec::RandomButterfly(c) => run_random_butterfly(c, seed),
        ExperimentSpec::Typicality(c) => run_typicality(c, seed),
        ExperimentSpec::Pesin(c) => run_pesin(c, seed),
    }
}

/// Process exit code for an error: 2 config, 3 cap, 4 io/internal.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 2,
        Error::CapExceeded { .. } => 3,
        _ => 4,
    }
}

/// Outcome of a full CLI run.
#[derive(Debug)]
pub struct Execution {
    pub code: i32,
    pub message: String,
    pub manifest: Option<Manifest>,
}

/// Loads, runs and writes one experiment. Exit code 0 iff every embedded
/// assertion passed; 1 on an assertion failure.
pub fn execute(path: &Path) -> Execution {
    let fail = |e: Error| Execution {
        code: exit_code(&e),
        message: e.to_string(),
        manifest: None,
    };
    let started = output::now_ms();
    let config = match load_config(path) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let out = match run(&config) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let dir = config.resolve_output_dir();
    match write_run(&config, &out, &dir, started) {
        Ok(m) => {
            let failed: Vec<&str> = m.assertions.iter().filter(|a| !a.pass).map(|a| a.name.as_str()).collect();
            let code = if failed.is_empty() { 0 } else { 1 };
            let message = if failed.is_empty() {
                format!("{}: {} assertions passed; outputs in {}", m.experiment, m.assertions.len(), dir.display())
            } else {
                format!("{}: failed assertions: {}", m.experiment, failed.join(", "))
            };
            Execution {
                code,
                message,
                manifest: Some(m),
            }
        }
        Err(e) => fail(e),
    }
}

/// One row of `list-experiments`.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentInfo {
    pub experiment: ExperimentKind,
    /// Topic anchor of the quantity being measured.
    pub anchor: &'static str,
    pub description: &'static str,
    pub required: Vec<&'static str>,
    pub optional: Vec<&'static str>,
    pub outputs: Vec<&'static str>,
    /// A config that validates as-is.
    pub example: Value,
}

pub fn catalog() -> Vec<ExperimentInfo> {
    let lb = json!({ "id": "lindblad_bernoulli", "n": 4, "states": "random" });
    let haar = json!({ "id": "haar", "d_s": 2, "d_e": 8 });
    vec![
        ExperimentInfo {
            experiment: ExperimentKind::Echo,
            anchor: "legacy diagnostics / Trotterized Loschmidt echo",
            description: "fidelity of outputs under W_eps^k vs identity flutters, k = 0..k_max",
            required: vec!["model", "epsilon", "k_max"],
            optional: vec!["w_seed", "realizations", "exp_band"],
            outputs: vec!["echo.csv", "summary.json"],
            example: json!({ "experiment": "echo", "seed": 1, "model": { "id": "lindblad_bernoulli", "n": 4, "states": "echo_typical" }, "epsilon": 0.1, "k_max": 3 }),
        },
        ExperimentInfo {
            experiment: ExperimentKind::Sdy,
            anchor: "legacy diagnostics / k-step dynamical entropy",
            description: "S(Upsilon_B)/k for each requested k",
            required: vec!["model", "k_values"],
            optional: vec!["expect", "tol"],
            outputs: vec!["sdy.csv", "summary.json"],
            example: json!({ "experiment": "sdy", "seed": 1, "model": lb, "k_values": [1, 2], "expect": 2f64.ln() }),
        },
        ExperimentInfo {
            experiment: ExperimentKind::Tmi,
            anchor: "legacy diagnostics / tripartite mutual information",
            description: "I3(B:R1:R2) of a single-step process",
            required: vec!["model"],
            optional: vec!["r1", "expect", "tol"],
            outputs: vec!["tmi.csv", "summary.json"],
            example: json!({ "experiment": "tmi", "seed": 1, "model": { "id": "haar", "d_s": 2, "d_e": 8, "init": "referenced" } }),
        },
        ExperimentInfo {
            experiment: ExperimentKind::Loe,
            anchor: "legacy diagnostics / local-operator entanglement",
            description: "operator entanglement of U_t^dag X U_t across a spatial cut",
            required: vec!["model", "operator", "t_max"],
            optional: vec!["site", "part_a", "expect", "tol"],
            outputs: vec!["loe.csv", "summary.json"],
            example: json!({ "experiment": "loe", "seed": 1, "model": { "id": "swap_chain", "n": 6 }, "operator": { "kind": "pauli", "a": 1, "b": 0 }, "site": "r2", "t_max": 5, "expect": "constant" }),
        },
        ExperimentInfo {
            experiment: ExperimentKind::Scaling,
            anchor: "C2 / spatiotemporal entanglement scaling",
            description: "entropy vs ln(dim) over a cut family, fitted slope and area/volume class",
            required: vec!["model"],
            optional: vec!["k", "cuts", "entropy", "expect"],
            outputs: vec!["scaling.csv", "summary.json"],
            example: json!({ "experiment": "scaling", "seed": 1, "model": { "id": "lindblad_bernoulli", "n": 8 }, "expect": "area" }),
        },
        ExperimentInfo {
            experiment: ExperimentKind::Bff,
            anchor: "C3 / butterfly flutter fidelity",
            description: "optimized zeta per correction family, with the ancilla-protocol cross-check",
            required: vec!["model", "x", "y"],
            optional: vec!["k", "families", "budget", "restarts", "allow_weak", "zeta_min", "zeta_max", "ancilla_check", "dump_params"],
            outputs: vec!["bff.csv", "summary.json"],
            example: json!({ "experiment": "bff", "seed": 1, "model": lb, "x": [{ "kind": "measure_prepare", "measure": 0, "prepare": 0 }], "y": [{ "kind": "measure_prepare", "measure": 0, "prepare": 1 }], "families": [{ "kind": "identity" }, { "kind": "local" }], "zeta_min": 0.99999999 }),
        },
        ExperimentInfo {
            experiment: ExperimentKind::RandomButterfly,
            anchor: "C1 / random butterflies detect chaos",
            description: "exceedance of Haar-random orthogonal flutter pairs vs the Markov-type bound",
            required: vec!["model", "trials", "deltas"],
            optional: vec!["k", "r1"],
            outputs: vec!["random_butterfly.csv", "random_butterfly_samples.csv", "summary.json"],
            example: json!({ "experiment": "random_butterfly", "seed": 1, "model": haar, "trials": 200, "deltas": [0.05, 0.1, 0.2] }),
        },
        ExperimentInfo {
            experiment: ExperimentKind::Typicality,
            anchor: "typicality / random processes are volume-law",
            description: "purities of Upsilon_BR1 over sampled processes vs the closed form and tail bounds",
            required: vec!["d_s", "d_e", "k", "r1_dim", "samples", "deltas", "regime"],
            optional: vec!["repeated", "design", "deficit_check"],
            outputs: vec!["typicality.csv", "typicality_bounds.csv", "summary.json"],
            example: json!({ "experiment": "typicality", "seed": 1, "d_s": 2, "d_e": 4, "k": 1, "r1_dim": 2, "samples": 100, "deltas": [0.05, 0.1], "regime": { "kind": "haar" } }),
        },
        ExperimentInfo {
            experiment: ExperimentKind::Pesin,
            anchor: "quantum Pesin relation",
            description: "Renyi-2 entropy of Upsilon_B vs the unitary-butterfly basis sum",
            required: vec!["model"],
            optional: vec!["k"],
            outputs: vec!["pesin.csv", "summary.json"],
            example: json!({ "experiment": "pesin", "seed": 1, "model": { "id": "haar", "d_s": 2, "d_e": 32 } }),
        },
    ]
}

/// Fixed-width text table for `list-experiments`.
pub fn catalog_table() -> String {
    let rows = catalog();
    let mut out = format!("{:<17} {:<50} {}\n", "EXPERIMENT", "ANCHOR", "REQUIRED FIELDS");
    for r in rows {
        out.push_str(&format!(
            "{:<17} {:<50} {}\n",
            r.experiment.as_str(),
            r.anchor,
            r.required.join(", ")
        ));
    }
    out
}
