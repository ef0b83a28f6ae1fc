//! The nine experiment runners. Each returns its tables, a JSON summary and
//! the embedded assertions; none of them touches the filesystem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::output::{Assertion, RunOutput, Table};
use super::spec::{BuildContext, LbStates, ModelSpec, StepSpec};
use crate::bff::{bff_ancilla, optimize_nested, AnsatzFamily, OptimizeOptions};
use crate::diagnostics::{
    dynamical_entropy_guidance_ok, dynamical_entropy_k, echo_typical_state, lb_echo_closed_form, local_operator_entanglement,
    loschmidt_echo_with, pesin_relation_check, random_butterfly_experiment,
};
use crate::entanglement::{far_first_cuts, scaling_profile, tripartite_mi, Cut, EntropyKind, ScalingClass, ScalingProfile};
use crate::error::{Error, Result};
use crate::instruments::{flutter_choi, weak_unitary};
use crate::models::DynamicsModel;
use crate::qcore::{CMat, TOL_PIPELINE};
use crate::randomness::{typicality_experiment, DesignParams, Regime, TypicalitySetup};

/// Re-labels a failure while building from config values as a config error
/// on `field`; resource and io errors pass through.
fn at<T>(field: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::CapExceeded { .. } | Error::Io(_) | Error::Config { .. } => e,
        other => Error::Config {
            field: field.to_string(),
            msg: other.to_string(),
        },
    })
}

fn bad(field: &str, msg: &str) -> Error {
    Error::Config {
        field: field.to_string(),
        msg: msg.to_string(),
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for an experiment-internal random source, independent of the model
/// streams.
fn derived_seed(seed: u64, tag: u64) -> u64 {
    rng_stream(seed, u64::MAX - tag).random()
}

fn build(spec: &ModelSpec, ctx: &BuildContext, seed: u64, realization: u64) -> Result<DynamicsModel> {
    at("model", spec.build(ctx, &mut rng_stream(seed, realization)))
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn tol_pipeline() -> f64 {
    TOL_PIPELINE
}

fn model_summary(model: &DynamicsModel) -> Value {
    json!({ "id": model.id, "preset": model.preset, "expected_class": model.expected_class })
}

// ---------------------------------------------------------------- echo

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EchoConfig {
    pub model: ModelSpec,
    pub epsilon: f64,
    pub k_max: usize,
    /// Seed of W_ε; the config seed when absent.
    #[serde(default)]
    pub w_seed: Option<u64>,
    /// Independent model draws to average over (random models only).
    #[serde(default = "one")]
    pub realizations: usize,
    /// Asserts |mean F(k_max) − e^{−2 k_max ε}| ≤ exp_band.
    #[serde(default)]
    pub exp_band: Option<f64>,
}

pub fn run_echo(c: &EchoConfig, seed: u64) -> Result<RunOutput> {
    if !(c.epsilon > 0.0 && c.epsilon < 1.0) {
        return Err(bad("epsilon", "must lie in (0, 1)"));
    }
    if c.k_max == 0 {
        return Err(bad("k_max", "must be at least 1"));
    }
    if c.realizations == 0 || (c.realizations > 1 && !c.model.is_random()) {
        return Err(bad("realizations", "must be 1 for deterministic models and at least 1 otherwise"));
    }
    let mut ctx = BuildContext {
        steps: c.k_max,
        echo_w: None,
    };
    let local_u = at("model", c.model.local_u())?;
    let d_s = match &local_u {
        Some(l) => l.nrows(),
        None => build(&c.model, &ctx, seed, 0)?.d_s(),
    };
    let w = at("epsilon", weak_unitary(c.epsilon, d_s, c.w_seed.unwrap_or(seed)))?;
    ctx.echo_w = Some(w.clone());
    let curves: Vec<Vec<f64>> = (0..c.realizations as u64)
        .into_par_iter()
        .map(|r| {
            let model = build(&c.model, &ctx, seed, r)?;
            let curve = loschmidt_echo_with(&model, &w, c.epsilon, c.k_max)?;
            Ok(curve.points.into_iter().map(|p| p.1).collect())
        })
        .collect::<Result<_>>()?;
    let n = curves.len() as f64;
    let mut table = Table::new("echo.csv", "k,mean_fidelity,std_err,exp_reference,power_reference");
    let mut means = Vec::new();
    for k in 0..=c.k_max {
        let vals: Vec<f64> = curves.iter().map(|cv| cv[k]).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let se = if vals.len() > 1 {
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        let exp_ref = (-2.0 * k as f64 * c.epsilon).exp();
        let pow_ref = (1.0 - c.epsilon).powi(2 * k as i32);
        table.rows.push(format!("{k},{mean},{se},{exp_ref},{pow_ref}"));
        means.push(mean);
    }
    let all: Vec<f64> = curves.iter().flatten().copied().collect();
    let mut asserts = vec![
        Assertion::new(
            "fidelity_in_unit_interval",
            all.iter().all(|&f| (0.0..=1.0).contains(&f)),
            "every fidelity lies in [0, 1]",
        ),
        Assertion::new(
            "k0_equals_one",
            curves.iter().all(|cv| cv[0] == 1.0),
            "the k = 0 point is exactly 1",
        ),
    ];
    if let (ModelSpec::LindbladBernoulli { states, .. }, Some(l)) = (&c.model, &local_u) {
        let phis = if *states == LbStates::EchoTypical {
            Some(vec![echo_typical_state(l, &w); c.k_max])
        } else {
            None
        };
        if let Some(phis) = phis {
            let mut worst_bound = f64::NEG_INFINITY;
            let mut worst_closed = 0.0f64;
            for (k, &mean) in means.iter().enumerate().skip(1) {
                let bound = (1.0 - c.epsilon).powi(2 * k as i32);
                worst_bound = worst_bound.max(mean - bound);
                let closed = lb_echo_closed_form(l, &phis, &w, k)?;
                worst_closed = worst_closed.max((mean - closed).abs());
            }
            asserts.push(Assertion::new(
                "lb_echo_below_power_bound",
                worst_bound <= TOL_PIPELINE,
                format!("max_k F(k) − (1−ε)^(2k) = {worst_bound:e}"),
            ));
            asserts.push(Assertion::new(
                "lb_echo_matches_closed_form",
                worst_closed <= TOL_PIPELINE,
                format!("max deviation from the product formula {worst_closed:e}"),
            ));
        }
    }
    if let Some(band) = c.exp_band {
        let target = (-2.0 * c.k_max as f64 * c.epsilon).exp();
        let dev = (means[c.k_max] - target).abs();
        asserts.push(Assertion::new(
            "exp_decay_band",
            dev <= band,
            format!("|F({}) − e^(−2kε)| = {dev} (band {band})", c.k_max),
        ));
    }
    let model = build(&c.model, &ctx, seed, 0)?;
    Ok(RunOutput {
        tables: vec![table],
        summary: json!({
            "experiment": "echo",
            "model": model_summary(&model),
            "epsilon": c.epsilon,
            "k_max": c.k_max,
            "realizations": c.realizations,
            "abs_trace_w_over_d": w.trace().norm() / d_s as f64,
            "final_mean_fidelity": means[c.k_max],
            "final_exp_reference": (-2.0 * c.k_max as f64 * c.epsilon).exp(),
        }),
        assertions: asserts,
    })
}

// ---------------------------------------------------------------- sdy

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdyConfig {
    pub model: ModelSpec,
    pub k_values: Vec<usize>,
    /// Expected S_dy in nats, asserted at every k to `tol`.
    #[serde(default)]
    pub expect: Option<f64>,
    #[serde(default = "tol_pipeline")]
    pub tol: f64,
}

pub fn run_sdy(c: &SdyConfig, seed: u64) -> Result<RunOutput> {
    let k_top = *c.k_values.iter().max().ok_or_else(|| bad("k_values", "must be nonempty"))?;
    if c.k_values.contains(&0) {
        return Err(bad("k_values", "entries must be at least 1"));
    }
    let ctx = BuildContext {
        steps: k_top,
        echo_w: None,
    };
    let model = build(&c.model, &ctx, seed, 0)?;
    let upper = 2.0 * (model.d_s() as f64).ln();
    let mut table = Table::new("sdy.csv", "k,s_dy_nats,upper_bound_nats,guidance_ok");
    let mut asserts = Vec::new();
    let mut values = Vec::new();
    for &k in &c.k_values {
        let proc = model.process(k)?;
        let s = dynamical_entropy_k(&proc)?;
        let ok = dynamical_entropy_guidance_ok(&proc);
        table.rows.push(format!("{k},{s},{upper},{ok}"));
        asserts.push(Assertion::new(
            format!("sdy_in_range_k{k}"),
            s >= -1e-12 && s <= upper + 1e-10,
            format!("0 <= {s} <= 2 ln d_S"),
        ));
        if let Some(e) = c.expect {
            asserts.push(Assertion::new(
                format!("sdy_matches_expected_k{k}"),
                (s - e).abs() <= c.tol,
                format!("|{s} − {e}| <= {}", c.tol),
            ));
        }
        values.push(json!({ "k": k, "s_dy": s, "guidance_ok": ok }));
    }
    Ok(RunOutput {
        tables: vec![table],
        summary: json!({ "experiment": "sdy", "model": model_summary(&model), "values": values }),
        assertions: asserts,
    })
}

// ---------------------------------------------------------------- tmi

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmiConfig {
    pub model: ModelSpec,
    /// Final sites in R₁; the first half of them when absent.
    #[serde(default)]
    pub r1: Option<Vec<String>>,
    #[serde(default)]
    pub expect: Option<f64>,
    #[serde(default = "tol_pipeline")]
    pub tol: f64,
}

pub fn run_tmi(c: &TmiConfig, seed: u64) -> Result<RunOutput> {
    let ctx = BuildContext {
        steps: 1,
        echo_w: None,
    };
    let model = build(&c.model, &ctx, seed, 0)?;
    let proc = model.process(1)?;
    let r = proc.r_labels();
    let r1 = c.r1.clone().unwrap_or_else(|| r[..r.len() / 2].to_vec());
    let i3 = at("r1", tripartite_mi(&proc, &r1))?;
    let floor = -2.0 * (proc.d_b() as f64).ln();
    let mut table = Table::new("tmi.csv", "r1,i3_nats,minus_two_ln_d_b");
    table.rows.push(format!("{},{i3},{floor}", r1.join(";")));
    let mut asserts = vec![Assertion::new(
        "i3_above_minus_two_ln_d_b",
        i3 >= floor - 1e-9,
        format!("{i3} >= {floor}"),
    )];
    if let Some(e) = c.expect {
        asserts.push(Assertion::new(
            "i3_matches_expected",
            (i3 - e).abs() <= c.tol,
            format!("|{i3} − {e}| <= {}", c.tol),
        ));
    }
    Ok(RunOutput {
        tables: vec![table],
        summary: json!({ "experiment": "tmi", "model": model_summary(&model), "r1": r1, "i3": i3, "minus_two_ln_d_b": floor }),
        assertions: asserts,
    })
}

// ---------------------------------------------------------------- loe

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoeExpect {
    /// Every point within `tol` of the t = 0 value.
    Constant,
    /// Nondecreasing within `tol` over t ≥ 1, with net growth.
    Increasing,
}

fn loe_tol() -> f64 {
    0.05
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoeConfig {
    pub model: ModelSpec,
    pub operator: StepSpec,
    /// Site of the operator; the system site when absent.
    #[serde(default)]
    pub site: Option<String>,
    /// One side of the spatial cut; the first half of the chain when absent.
    #[serde(default)]
    pub part_a: Option<Vec<String>>,
    pub t_max: usize,
    #[serde(default)]
    pub expect: Option<LoeExpect>,
    #[serde(default = "loe_tol")]
    pub tol: f64,
}

pub fn run_loe(c: &LoeConfig, seed: u64) -> Result<RunOutput> {
    let ctx = BuildContext {
        steps: c.t_max.max(1),
        echo_w: None,
    };
    let model = build(&c.model, &ctx, seed, 0)?;
    let sites = model.site_labels();
    let site = c.site.clone().unwrap_or_else(|| model.s_label());
    let part_a = c.part_a.clone().unwrap_or_else(|| sites[..sites.len() / 2].to_vec());
    let reg = model.register.select(&sites)?;
    let d_site = at("site", reg.dim_of(&[site.as_str()]))?;
    let op = at("operator", c.operator.matrix(d_site))?;
    let part_b = at("part_a", reg.complement(&part_a))?;
    let curve = at("part_a", local_operator_entanglement(&model, &op, &site, &part_a, c.t_max))?;
    let d_min = reg.dim_of(&part_a)?.min(reg.dim_of(&part_b)?);
    let cap = 2.0 * (d_min as f64).ln();
    let mut table = Table::new("loe.csv", "t,entropy_nats");
    for (t, s) in &curve.points {
        table.rows.push(format!("{t},{s}"));
    }
    let e: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
    let mut asserts = vec![Assertion::new(
        "loe_within_operator_bound",
        e.iter().all(|&s| s >= 0.0 && s <= cap + 1e-9),
        format!("0 <= S <= 2 ln(min side dim) = {cap}"),
    )];
    match c.expect {
        Some(LoeExpect::Constant) => {
            let dev = e.iter().map(|s| (s - e[0]).abs()).fold(0.0, f64::max);
            asserts.push(Assertion::new("loe_constant", dev <= c.tol, format!("max deviation {dev}")));
        }
        Some(LoeExpect::Increasing) => {
            let tail = &e[1.min(e.len() - 1)..];
            let worst = tail.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
            let grows = tail.len() >= 2 && tail[tail.len() - 1] > tail[0] + c.tol;
            asserts.push(Assertion::new(
                "loe_increasing",
                grows && worst <= c.tol,
                format!("largest drop {worst}, net growth {}", tail[tail.len() - 1] - tail[0]),
            ));
        }
        None => {}
    }
    Ok(RunOutput {
        tables: vec![table],
        summary: json!({
            "experiment": "loe",
            "model": model_summary(&model),
            "operator_id": curve.operator_id,
            "part_a": curve.part_a,
            "part_b": curve.part_b,
            "entropies": e,
        }),
        assertions: asserts,
    })
}

// ---------------------------------------------------------------- scaling

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub model: ModelSpec,
    #[serde(default = "one")]
    pub k: usize,
    /// Cut family; all butterfly legs plus final sites taken farthest from
    /// the system first, when absent.
    #[serde(default)]
    pub cuts: Option<Vec<Cut>>,
    #[serde(default)]
    pub entropy: EntropyKind,
    #[serde(default)]
    pub expect: Option<ScalingClass>,
}

pub fn run_scaling(c: &ScalingConfig, seed: u64) -> Result<RunOutput> {
    if c.k == 0 {
        return Err(bad("k", "must be at least 1"));
    }
    let ctx = BuildContext {
        steps: c.k,
        echo_w: None,
    };
    let model = build(&c.model, &ctx, seed, 0)?;
    let proc = model.process(c.k)?;
    let cuts = c.cuts.clone().unwrap_or_else(|| far_first_cuts(&proc));
    let prof = at("cuts", scaling_profile(&proc, &cuts, c.entropy))?;
    let mut table = Table::new("scaling.csv", ScalingProfile::CSV_HEADER);
    table.rows = prof.csv_rows();
    let mut asserts = Vec::new();
    if let Some(want) = c.expect {
        asserts.push(Assertion::new(
            "scaling_class",
            prof.classification == want,
            format!("slope {} classified {:?}, expected {want:?}", prof.fit_slope, prof.classification),
        ));
    }
    Ok(RunOutput {
        tables: vec![table],
        summary: json!({
            "experiment": "scaling",
            "model": model_summary(&model),
            "k": c.k,
            "cuts": cuts,
            "fit_slope": prof.fit_slope,
            "classification": prof.classification,
            "kind": prof.kind,
        }),
        assertions: asserts,
    })
}

// ---------------------------------------------------------------- bff

fn default_families() -> Vec<AnsatzFamily> {
    vec![AnsatzFamily::Identity, AnsatzFamily::Local]
}

fn default_budget() -> usize {
    OptimizeOptions::default().budget
}

fn default_restarts() -> usize {
    OptimizeOptions::default().restarts
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BffConfig {
    pub model: ModelSpec,
    #[serde(default = "one")]
    pub k: usize,
    /// Flutter steps, first time first.
    pub x: Vec<StepSpec>,
    pub y: Vec<StepSpec>,
    #[serde(default = "default_families")]
    pub families: Vec<AnsatzFamily>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub allow_weak: bool,
    /// Bounds on ζ of the last family.
    #[serde(default)]
    pub zeta_min: Option<f64>,
    #[serde(default)]
    pub zeta_max: Option<f64>,
    /// Re-evaluate each optimum with the ancilla protocol (unitary flutters).
    #[serde(default = "yes")]
    pub ancilla_check: bool,
    /// Include the optimized gates in summary.json.
    #[serde(default)]
    pub dump_params: bool,
}

pub fn run_bff(c: &BffConfig, seed: u64) -> Result<RunOutput> {
    if c.k == 0 || c.x.len() != c.k || c.y.len() != c.k {
        return Err(bad("x", "x and y need exactly k steps each"));
    }
    if c.families.is_empty() {
        return Err(bad("families", "must be nonempty"));
    }
    let ctx = BuildContext {
        steps: c.k,
        echo_w: None,
    };
    let model = build(&c.model, &ctx, seed, 0)?;
    let d_s = model.d_s();
    let xi = at("x", c.x.iter().map(|s| s.instrument(d_s)).collect::<Result<Vec<_>>>())?;
    let yi = at("y", c.y.iter().map(|s| s.instrument(d_s)).collect::<Result<Vec<_>>>())?;
    let xm: Vec<CMat> = xi.iter().map(|a| a.kraus.clone()).collect();
    let ym: Vec<CMat> = yi.iter().map(|a| a.kraus.clone()).collect();
    let xf = at("x", flutter_choi(xi))?;
    let yf = at("y", flutter_choi(yi))?;
    let proc = model.process(c.k)?;
    let unitary = xf.is_unitary() && yf.is_unitary();
    let opt_seed = derived_seed(seed, 1);
    let mut table = Table::new(
        "bff.csv",
        "family,depth,zeta,identity_fidelity,sweeps,converged,flutter_overlap,zeta_ancilla",
    );
    let mut asserts = Vec::new();
    let mut results = Vec::new();
    let opts = OptimizeOptions {
        budget: c.budget,
        restarts: c.restarts,
        seed: opt_seed,
        warm_start: None,
        allow_weak: c.allow_weak,
    };
    let all = at("families", optimize_nested(&proc, &xf, &yf, &c.families, &opts))?;
    let mut last_zeta = f64::NAN;
    for (i, (fam, res)) in c.families.iter().zip(all).enumerate() {
        if i > 0 && c.families[i - 1].included_in(fam) {
            asserts.push(Assertion::new(
                format!("zeta_monotone_{}_{}", c.families[i - 1].id(), fam.id()),
                res.zeta >= last_zeta - 1e-9,
                format!("{} >= {last_zeta}", res.zeta),
            ));
        }
        let anc = if c.ancilla_check && unitary {
            Some(bff_ancilla(&model, &xm, &ym, &res.best_params)?)
        } else {
            None
        };
        let id = fam.id();
        table.rows.push(format!(
            "{id},{},{},{},{},{},{},{}",
            res.depth,
            res.zeta,
            res.identity_fidelity,
            res.iterations,
            res.converged,
            res.flutter_overlap,
            anc.map(|z| z.to_string()).unwrap_or_default()
        ));
        asserts.push(Assertion::new(
            format!("zeta_at_least_identity_{id}"),
            res.zeta >= res.identity_fidelity - 1e-10,
            format!("{} >= {}", res.zeta, res.identity_fidelity),
        ));
        asserts.push(Assertion::new(
            format!("zeta_at_most_one_{id}"),
            res.zeta <= 1.0 + TOL_PIPELINE,
            format!("{}", res.zeta),
        ));
        if let Some(z) = anc {
            asserts.push(Assertion::new(
                format!("ancilla_matches_direct_{id}"),
                (z - res.zeta).abs() < 1e-10,
                format!("|{z} − {}| < 1e-10", res.zeta),
            ));
        }
        let mut entry = json!({
            "family": id,
            "depth": res.depth,
            "zeta": res.zeta,
            "identity_fidelity": res.identity_fidelity,
            "sweeps": res.iterations,
            "converged": res.converged,
            "zeta_ancilla": anc,
        });
        if c.dump_params {
            entry["params"] = serde_json::to_value(&res.best_params).expect("ansatz serializes");
        }
        results.push(entry);
        last_zeta = res.zeta;
    }
    if let Some(m) = c.zeta_min {
        asserts.push(Assertion::new("zeta_min", last_zeta >= m, format!("{last_zeta} >= {m}")));
    }
    if let Some(m) = c.zeta_max {
        asserts.push(Assertion::new("zeta_max", last_zeta <= m, format!("{last_zeta} <= {m}")));
    }
    Ok(RunOutput {
        tables: vec![table],
        summary: json!({
            "experiment": "bff",
            "model": model_summary(&model),
            "k": c.k,
            "flutter_pair": [xf.id(), yf.id()],
            "optimizer_seed": opt_seed,
            "results": results,
        }),
        assertions: asserts,
    })
}

// ---------------------------------------------------------------- random butterflies

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomButterflyConfig {
    pub model: ModelSpec,
    #[serde(default = "one")]
    pub k: usize,
    #[serde(default)]
    pub r1: Vec<String>,
    pub trials: usize,
    pub deltas: Vec<f64>,
}

pub fn run_random_butterfly(c: &RandomButterflyConfig, seed: u64) -> Result<RunOutput> {
    if c.k == 0 {
        return Err(bad("k", "must be at least 1"));
    }
    if c.trials < 100 {
        return Err(bad("trials", "must be at least 100"));
    }
    if c.deltas.is_empty() || c.deltas.iter().any(|&d| d <= 0.0) {
        return Err(bad("deltas", "must be a nonempty list of positive numbers"));
    }
    let ctx = BuildContext {
        steps: c.k,
        echo_w: None,
    };
    let model = build(&c.model, &ctx, seed, 0)?;
    let proc = model.process(c.k)?;
    let rep = at("r1", random_butterfly_experiment(&proc, &c.r1, c.trials, &c.deltas, derived_seed(seed, 2)))?;
    let mut table = Table::new("random_butterfly.csv", "delta,exceedance,std_err,bound,markov_bound");
    let mut asserts = Vec::new();
    for row in &rep.rows {
        table.rows.push(format!(
            "{},{},{},{},{}",
            row.delta, row.exceedance, row.std_err, row.bound, row.markov_bound
        ));
        asserts.push(Assertion::new(
            format!("exceedance_within_bound_delta{}", row.delta),
            row.exceedance <= row.bound + 3.0 * row.std_err,
            format!("{} <= {} + 3·{}", row.exceedance, row.bound, row.std_err),
        ));
    }
    let dev = (rep.empirical_mean - rep.exact_mean).abs();
    asserts.push(Assertion::new(
        "mean_matches_weingarten",
        dev <= 3.0 * rep.std_err + 1e-12,
        format!("|{} − {}| <= 3·{}", rep.empirical_mean, rep.exact_mean, rep.std_err),
    ));
    let mut samples = Table::new("random_butterfly_samples.csv", "trial,q,normalized_fidelity");
    for (i, (q, f)) in rep.samples.iter().enumerate() {
        samples.rows.push(format!("{i},{q},{f}"));
    }
    Ok(RunOutput {
        tables: vec![table, samples],
        summary: json!({ "experiment": "random_butterfly", "model": model_summary(&model), "k": c.k, "r1": c.r1, "report": rep }),
        assertions: asserts,
    })
}

// ---------------------------------------------------------------- typicality

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeficitCheck {
    /// Deficit threshold ln d_{BR₁} − S⁽²⁾, nats.
    pub max_nats: f64,
    /// Fraction of samples that must stay below it.
    pub min_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypicalityConfig {
    pub d_s: usize,
    pub d_e: usize,
    pub k: usize,
    pub r1_dim: usize,
    pub samples: usize,
    pub deltas: Vec<f64>,
    pub regime: Regime,
    #[serde(default)]
    pub repeated: bool,
    #[serde(default)]
    pub design: Option<DesignParams>,
    #[serde(default)]
    pub deficit_check: Option<DeficitCheck>,
}

pub fn run_typicality(c: &TypicalityConfig, seed: u64) -> Result<RunOutput> {
    let setup = TypicalitySetup {
        d_s: c.d_s,
        d_e: c.d_e,
        k: c.k,
        r1_dim: c.r1_dim,
        samples: c.samples,
        deltas: c.deltas.clone(),
        regime: c.regime,
        repeated: c.repeated,
        design: c.design,
    };
    let rep = at("d_e", typicality_experiment(&setup, &mut rng_stream(seed, 0)))?;
    let mut table = Table::new("typicality.csv", "sample,purity,excess,deficit_nats");
    let inv_d = 1.0 / rep.d_br1 as f64;
    for (i, &p) in rep.purities.iter().enumerate() {
        table.rows.push(format!("{i},{p},{},{}", p - inv_d, rep.deficit(p)));
    }
    let mut bounds = Table::new("typicality_bounds.csv", "delta,j_nats,g,empirical_exceedance,std_err");
    let mut asserts = Vec::new();
    for b in &rep.bound_values {
        bounds.rows.push(format!(
            "{},{},{},{},{}",
            b.delta, b.j, b.g, b.empirical_exceedance, b.exceedance_std_err
        ));
        asserts.push(Assertion::new(
            format!("tail_within_bound_delta{}", b.delta),
            b.empirical_exceedance <= b.g + 3.0 * b.exceedance_std_err,
            format!("{} <= {} + 3·{}", b.empirical_exceedance, b.g, b.exceedance_std_err),
        ));
    }
    if let Some(bv) = rep.closed_form_b {
        let dev = (rep.empirical_mean_excess - bv).abs();
        asserts.push(Assertion::new(
            "mean_excess_matches_closed_form",
            dev <= 3.0 * rep.purity_std_err,
            format!("|{} − {bv}| <= 3·{}", rep.empirical_mean_excess, rep.purity_std_err),
        ));
    }
    if let Some(dc) = c.deficit_check {
        let below = rep.purities.iter().filter(|&&p| rep.deficit(p) < dc.max_nats).count();
        let frac = below as f64 / rep.purities.len() as f64;
        asserts.push(Assertion::new(
            "deficit_fraction",
            frac >= dc.min_fraction,
            format!("{frac} of samples below {} nats (need {})", dc.max_nats, dc.min_fraction),
        ));
    }
    Ok(RunOutput {
        tables: vec![table, bounds],
        summary: json!({ "experiment": "typicality", "report": rep }),
        assertions: asserts,
    })
}

// ---------------------------------------------------------------- pesin

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PesinConfig {
    pub model: ModelSpec,
    #[serde(default = "one")]
    pub k: usize,
}

pub fn run_pesin(c: &PesinConfig, seed: u64) -> Result<RunOutput> {
    if c.k == 0 {
        return Err(bad("k", "must be at least 1"));
    }
    let ctx = BuildContext {
        steps: c.k,
        echo_w: None,
    };
    let model = build(&c.model, &ctx, seed, 0)?;
    let proc = model.process(c.k)?;
    let chk = pesin_relation_check(&proc)?;
    let diff = (chk.lhs - chk.rhs).abs();
    let mut table = Table::new("pesin.csv", "lhs_nats,rhs_nats,abs_diff,d_b,offdiag_sum,diag_sum");
    table.rows.push(format!(
        "{},{},{diff},{},{},{}",
        chk.lhs, chk.rhs, chk.d_b, chk.offdiag_sum, chk.diag_sum
    ));
    Ok(RunOutput {
        tables: vec![table],
        summary: json!({ "experiment": "pesin", "model": model_summary(&model), "k": c.k, "check": chk }),
        assertions: vec![Assertion::new(
            "pesin_lhs_equals_rhs",
            diff < TOL_PIPELINE,
            format!("|{} − {}| = {diff:e}", chk.lhs, chk.rhs),
        )],
    })
}
