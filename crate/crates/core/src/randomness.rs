//! Haar sampling, brickwork design circuits and the typicality experiment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::build_process;
use crate::qcore::linalg::ginibre;
use crate::qcore::{check_cap, embed_operator, partial_trace, CMat, PureState, Register, Role, Subsystem, C64};

/// Haar-random unitary: QR of a Ginibre matrix with the phases of R's
/// diagonal moved into Q.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let g = ginibre(d, d, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        let ph = if n > 0.0 { rjj / n } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Gate supports of a nearest-neighbour brickwork on `n` sites: layer `l`
/// pairs (j, j+1) with j ≡ l (mod 2).
pub fn brickwork_supports(n: usize, depth: usize) -> Vec<Vec<[usize; 2]>> {
    (0..depth)
        .map(|l| (l % 2..n.saturating_sub(1)).step_by(2).map(|j| [j, j + 1]).collect())
        .collect()
}

/// Dense unitary of a brickwork of independent Haar two-site gates on `n`
/// sites of dimension `d`.
pub fn brickwork_unitary<R: Rng + ?Sized>(n: usize, d: usize, depth: usize, rng: &mut R) -> Result<CMat> {
    let reg = Register::uniform("x", n, d, Role::E)?;
    let dim = reg.total_dim();
    check_cap(dim * dim)?;
    let mut u = CMat::identity(dim, dim);
    for layer in brickwork_supports(n, depth) {
        for [a, b] in layer {
            let g = haar_unitary(d * d, rng);
            u = embed_operator(&g, &[format!("x{a}"), format!("x{b}")], &reg)? * u;
        }
    }
    Ok(u)
}

/// Qubit brickwork design circuit.
pub fn design_circuit<R: Rng + ?Sized>(sites: usize, depth: usize, rng: &mut R) -> Result<CMat> {
    if sites < 2 {
        return Err(Error::arg("design circuit needs at least two sites"));
    }
    brickwork_unitary(sites, 2, depth, rng)
}

/// U-statistic estimate of the frame potential mean |tr U_i†U_j|^{2t} over
/// all distinct pairs. The Haar value for t=1 is 1 and for t=2 is 2 (d ≥ 2).
pub fn frame_potential(samples: &[CMat], t: u32) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::arg("frame potential needs at least two samples"));
    }
    // per-row sums collected first so the reduction order is fixed
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ui = &samples[i];
            (i + 1..n)
                .map(|j| {
                    let tr: C64 = ui.iter().zip(samples[j].iter()).map(|(a, b)| a.conj() * b).sum();
                    tr.norm_sqr().powi(t as i32)
                })
                .sum::<f64>()
        })
        .collect();
    let total: f64 = rows.iter().sum();
    Ok(total / (n * (n - 1) / 2) as f64)
}

fn check_dims(d_s: usize, d_e: usize, k: usize) -> Result<()> {
    if d_s < 2 || d_e < 2 {
        return Err(Error::arg("need d_S, d_E >= 2"));
    }
    if k < 1 {
        return Err(Error::arg("closed forms hold for k >= 1"));
    }
    Ok(())
}

/// Haar average of tr[Υ²_{BS}] − 1/d_{BS} for independent Haar steps.
pub fn closed_form_b(d_s: usize, d_e: usize, k: usize) -> Result<f64> {
    check_dims(d_s, d_e, k)?;
    let (ds, de) = (d_s as f64, d_e as f64);
    let dse = ds * de;
    Ok((de * de - 1.0) / (de * (dse + 1.0)) * ((de * de - 1.0) / (dse * dse - 1.0)).powi(k as i32) + 1.0 / de
        - 1.0 / ds.powi(2 * k as i32 + 1))
}

/// Concentration constant of the Haar tail bound exp(−C δ²).
pub fn concentration_c(d_s: usize, d_e: usize, k: usize) -> Result<f64> {
    check_dims(d_s, d_e, k)?;
    let (ds, de) = (d_s as f64, d_e as f64);
    let geo = ds.powi(k as i32 + 1) - 1.0;
    Ok((k as f64 + 1.0) * de * ds * (ds - 1.0).powi(2) / (8.0 * geo * geo))
}

/// Caller-supplied ε-approximate t-design parameters and moment order m.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignParams {
    pub epsilon: f64,
    pub t: u32,
    pub m: u32,
}

/// Moment constant F of the design tail bound F/δ^m.
pub fn design_f(d_s: usize, d_e: usize, k: usize, p: &DesignParams) -> Result<f64> {
    let b = closed_form_b(d_s, d_e, k)?;
    let (ds, de) = (d_s as f64, d_e as f64);
    let dse = ds * de;
    let m = p.m as i32;
    let geo = (ds.powi(k as i32 + 1) - 1.0) / (ds - 1.0);
    let first = (16.0 * p.m as f64 / ((k as f64 + 1.0) * dse) * geo * geo).powi(m);
    let last = p.epsilon / (16f64.powi(m) * dse.powi(p.t as i32))
        * (de.powi(4) * ds.powi(2 * (k as i32 + 2)) + 1.0 / ds.powi(2 * k as i32 + 1));
    Ok(first + b.powi(m) + last)
}

/// Haar deficit threshold ln(d(B+δ)+1).
pub fn j_haar(d: usize, b: f64, delta: f64) -> f64 {
    (d as f64 * (b + delta) + 1.0).ln()
}

pub fn g_haar(c: f64, delta: f64) -> f64 {
    (-c * delta * delta).exp()
}

/// Design deficit threshold ln(dδ+1).
pub fn j_design(d: usize, delta: f64) -> f64 {
    (d as f64 * delta + 1.0).ln()
}

pub fn g_design(f: f64, m: u32, delta: f64) -> f64 {
    f / delta.powi(m as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Regime {
    Haar,
    Design { depth: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    pub delta: f64,
    pub j: f64,
    pub g: f64,
    pub empirical_exceedance: f64,
    pub exceedance_std_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TypicalityReport {
    pub samples: usize,
    pub d_s: usize,
    pub d_e: usize,
    pub k: usize,
    pub r1_dim: usize,
    pub d_br1: usize,
    pub regime: Regime,
    pub repeated: bool,
    pub empirical_mean_purity: f64,
    pub purity_std_err: f64,
    /// Mean of tr Υ² − 1/d_{BR₁}, the quantity B predicts.
    pub empirical_mean_excess: f64,
    /// Present when R₁ is the final system alone.
    pub closed_form_b: Option<f64>,
    /// (quantile, deficit) pairs.
    pub empirical_entropy_deficit_quantiles: Vec<(f64, f64)>,
    pub bound_values: Vec<BoundRow>,
    #[serde(skip)]
    pub purities: Vec<f64>,
}

impl TypicalityReport {
    pub fn deficit(&self, purity: f64) -> f64 {
        (self.d_br1 as f64 * purity).ln()
    }
}

/// Setup of one typicality run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypicalitySetup {
    pub d_s: usize,
    pub d_e: usize,
    pub k: usize,
    pub r1_dim: usize,
    pub samples: usize,
    pub deltas: Vec<f64>,
    pub regime: Regime,
    /// Same unitary at every step; bounds are not evaluated in this mode.
    #[serde(default)]
    pub repeated: bool,
    #[serde(default)]
    pub design: Option<DesignParams>,
}

fn qudit_count(d_s: usize, d_e: usize) -> Option<usize> {
    let mut n = 0;
    let mut p = 1;
    while p < d_e {
        p *= d_s;
        n += 1;
    }
    (p == d_e).then_some(n)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Purity of Υ_{BR₁} for one sampled process.
fn sample_purity(setup: &TypicalitySetup, n_env: usize, r1_sites: usize, seed: u64, stream: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let d = setup.d_s * setup.d_e;
    let mut subs = vec![Subsystem::new("r0", setup.d_s, Role::S)];
    for i in 0..n_env {
        subs.push(Subsystem::new(format!("r{}", i + 1), setup.d_s, Role::E));
    }
    let reg = Register::new(subs)?;
    let n_sites = n_env + 1;
    let draw = |rng: &mut ChaCha8Rng| -> Result<CMat> {
        match setup.regime {
            Regime::Haar => Ok(haar_unitary(d, rng)),
            Regime::Design { depth } => design_circuit(n_sites, depth, rng),
        }
    };
    let init_u = draw(&mut rng)?;
    let initial = PureState::new(reg, init_u.column(0).into_owned())?;
    let us: Vec<CMat> = if setup.repeated {
        vec![draw(&mut rng)?; setup.k]
    } else {
        (0..setup.k).map(|_| draw(&mut rng)).collect::<Result<_>>()?
    };
    let proc = build_process(&initial, &us, "typicality")?;
    let mut keep = proc.b_labels();
    keep.extend(proc.r_labels().into_iter().take(r1_sites));
    let comp = proc.register().complement(&keep)?;
    let d_keep = proc.register().dim_of(&keep)?;
    let d_comp = proc.register().total_dim() / d_keep;
    let rho = if d_keep <= d_comp {
        partial_trace(proc.choi(), &keep)?
    } else {
        partial_trace(proc.choi(), &comp)?
    };
    Ok(rho.purity())
}

/// Samples independent processes and compares purities of Υ_{BR₁} with the
/// closed form and the tail bounds. R₁ is the final system plus the nearest
/// environment qudits, so `r1_dim` must be a power of d_S.
pub fn typicality_experiment<R: Rng + ?Sized>(setup: &TypicalitySetup, rng: &mut R) -> Result<TypicalityReport> {
    let (d_s, d_e, k) = (setup.d_s, setup.d_e, setup.k);
    check_dims(d_s, d_e, k)?;
    if setup.samples < 50 {
        return Err(Error::arg("typicality needs at least 50 samples"));
    }
    let n_env = qudit_count(d_s, d_e).ok_or_else(|| Error::arg("d_E must be a power of d_S"))?;
    if matches!(setup.regime, Regime::Design { .. }) && d_s != 2 {
        return Err(Error::arg("design regime uses qubit brickworks (d_S = 2)"));
    }
    let r1_sites = qudit_count(d_s, setup.r1_dim)
        .filter(|&n| n >= 1 && n <= n_env + 1)
        .ok_or_else(|| Error::arg("r1_dim must be d_S^j with 1 <= j <= number of sites"))?;
    if setup.deltas.iter().any(|&x| x <= 0.0) {
        return Err(Error::arg("deltas must be positive"));
    }
    let d_br1 = d_s.pow(2 * k as u32) * setup.r1_dim;
    let total = (d_s as u128).pow(2 * k as u32) * (d_s * d_e) as u128;
    if total > crate::qcore::amplitude_cap() as u128 {
        return Err(Error::CapExceeded {
            needed: usize::try_from(total).unwrap_or(usize::MAX),
            cap: crate::qcore::amplitude_cap(),
        });
    }
    let seed: u64 = rng.random();
    let purities: Vec<f64> = (0..setup.samples as u64)
        .into_par_iter()
        .map(|i| sample_purity(setup, n_env, r1_sites, seed, i))
        .collect::<Result<_>>()?;
    let n = purities.len() as f64;
    let mean = purities.iter().sum::<f64>() / n;
    let var = purities.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let excess = mean - 1.0 / d_br1 as f64;
    let closed = if setup.r1_dim == d_s {
        Some(closed_form_b(d_s, d_e, k)?)
    } else {
        None
    };
    let mut deficits: Vec<f64> = purities.iter().map(|p| (d_br1 as f64 * p).ln()).collect();
    deficits.sort_by(f64::total_cmp);
    let quantiles = [0.1, 0.25, 0.5, 0.75, 0.9]
        .iter()
        .map(|&q| (q, quantile(&deficits, q)))
        .collect();

    let mut bounds = Vec::new();
    if let (Some(b), false) = (closed, setup.repeated) {
        let thresholds: Vec<(f64, f64, f64)> = match setup.regime {
            Regime::Haar => {
                let c = concentration_c(d_s, d_e, k)?;
                setup
                    .deltas
                    .iter()
                    .map(|&dl| (dl, j_haar(d_br1, b, dl), g_haar(c, dl)))
                    .collect()
            }
            Regime::Design { .. } => match &setup.design {
                Some(p) => {
                    let f = design_f(d_s, d_e, k, p)?;
                    setup
                        .deltas
                        .iter()
                        .map(|&dl| (dl, j_design(d_br1, dl), g_design(f, p.m, dl)))
                        .collect()
                }
                None => Vec::new(),
            },
        };
        for (delta, j, g) in thresholds {
            let hits = deficits.iter().filter(|&&x| x >= j).count() as f64;
            let freq = hits / n;
            bounds.push(BoundRow {
                delta,
                j,
                g,
                empirical_exceedance: freq,
                exceedance_std_err: (freq * (1.0 - freq) / n).sqrt(),
            });
        }
    }
    Ok(TypicalityReport {
        samples: setup.samples,
        d_s,
        d_e,
        k,
        r1_dim: setup.r1_dim,
        d_br1,
        regime: setup.regime,
        repeated: setup.repeated,
        empirical_mean_purity: mean,
        purity_std_err: (var / n).sqrt(),
        empirical_mean_excess: excess,
        closed_form_b: closed,
        empirical_entropy_deficit_quantiles: quantiles,
        bound_values: bounds,
        purities,
    })
}
