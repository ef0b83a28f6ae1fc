//! Schmidt spectra, entropies, mutual informations and scaling profiles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::PureProcess;
use crate::qcore::{DensityOperator, PureState, EIG_FLOOR};

#[derive(Clone, Debug, Serialize)]
pub struct SchmidtSpectrum {
    /// Descending, nonnegative.
    pub coefficients: Vec<f64>,
    pub part_a: Vec<String>,
    pub part_b: Vec<String>,
    /// Number of coefficients above 1e-10.
    pub rank_eps: usize,
}

impl SchmidtSpectrum {
    /// Squared coefficients, normalized to sum 1.
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.coefficients.iter().map(|l| l * l).sum();
        self.coefficients.iter().map(|l| l * l / total).collect()
    }
}

fn check_bipartition<S: AsRef<str>>(state: &PureState, part_a: &[S]) -> Result<Vec<String>> {
    let reg = state.register();
    reg.positions(part_a)?;
    if part_a.is_empty() || part_a.len() == reg.len() {
        return Err(Error::arg("Schmidt decomposition needs a proper nonempty subset"));
    }
    reg.complement(part_a)
}

pub fn schmidt<S: AsRef<str>>(state: &PureState, part_a: &[S]) -> Result<SchmidtSpectrum> {
    let part_b = check_bipartition(state, part_a)?;
    let m = state.matricize(part_a)?;
    let mut coefficients: Vec<f64> = m.singular_values().iter().copied().collect();
    coefficients.sort_by(|a, b| b.total_cmp(a));
    let rank_eps = coefficients.iter().filter(|&&l| l > 1e-10).count();
    Ok(SchmidtSpectrum {
        coefficients,
        part_a: part_a.iter().map(|s| s.as_ref().to_string()).collect(),
        part_b,
        rank_eps,
    })
}

/// Schmidt spectrum with the basis vectors: columns of `u` live on A, columns
/// of `v` on B, and the state equals Σ λ_i u_i ⊗ conj-free v_i.
pub fn schmidt_vectors<S: AsRef<str>>(
    state: &PureState,
    part_a: &[S],
) -> Result<(SchmidtSpectrum, crate::qcore::CMat, crate::qcore::CMat)> {
    let part_b = check_bipartition(state, part_a)?;
    let m = state.matricize(part_a)?;
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested");
    let v = svd.v_t.expect("requested").transpose();
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let coefficients: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let u = crate::qcore::CMat::from_fn(u.nrows(), idx.len(), |r, c| u[(r, idx[c])]);
    let v = crate::qcore::CMat::from_fn(v.nrows(), idx.len(), |r, c| v[(r, idx[c])]);
    let rank_eps = coefficients.iter().filter(|&&l| l > 1e-10).count();
    Ok((
        SchmidtSpectrum {
            coefficients,
            part_a: part_a.iter().map(|s| s.as_ref().to_string()).collect(),
            part_b,
            rank_eps,
        },
        u,
        v,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EntropyKind {
    #[default]
    VonNeumann,
    Renyi2,
}

impl EntropyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntropyKind::VonNeumann => "von_neumann",
            EntropyKind::Renyi2 => "renyi2",
        }
    }
}

/// Entropy of a probability vector, in nats. Entries below the eigenvalue
/// floor are dropped.
pub fn entropy_of_probs(p: &[f64], kind: EntropyKind) -> Result<f64> {
    if let Some(&bad) = p.iter().find(|&&x| x < -1e-9) {
        return Err(Error::InvalidDensity(format!("negative eigenvalue {bad:e}")));
    }
    let kept = p.iter().copied().filter(|&x| x > EIG_FLOOR);
    Ok(match kind {
        EntropyKind::VonNeumann => kept.map(|x| -x * x.ln()).sum::<f64>().max(0.0),
        EntropyKind::Renyi2 => (-kept.map(|x| x * x).sum::<f64>().ln()).max(0.0),
    })
}

pub fn entropy_spectrum(spec: &SchmidtSpectrum, kind: EntropyKind) -> Result<f64> {
    entropy_of_probs(&spec.probabilities(), kind)
}

pub fn entropy_density(rho: &DensityOperator, kind: EntropyKind) -> Result<f64> {
    match kind {
        EntropyKind::Renyi2 => {
            let p = rho.purity();
            if p <= 0.0 {
                return Err(Error::InvalidDensity("zero operator".into()));
            }
            Ok((-p.ln()).max(0.0))
        }
        EntropyKind::VonNeumann => entropy_of_probs(&rho.eigenvalues(), kind),
    }
}

/// Entropy of the reduced state of a normalized pure state on `part`; zero
/// for the empty set and the full register.
pub fn entropy_of_state<S: AsRef<str>>(state: &PureState, part: &[S], kind: EntropyKind) -> Result<f64> {
    let reg = state.register();
    let pos = reg.positions(part)?;
    if pos.is_empty() || pos.len() == reg.len() {
        return Ok(0.0);
    }
    let comp = reg.complement(part)?;
    // the SVD is cheaper with the smaller side as rows
    let d_a = reg.dim_of(part)?;
    let spec = if d_a * d_a <= reg.total_dim() {
        schmidt(state, part)?
    } else {
        schmidt(state, &comp)?
    };
    entropy_spectrum(&spec, kind)
}

fn disjoint<S: AsRef<str>>(a: &[S], b: &[S]) -> bool {
    a.iter().all(|x| b.iter().all(|y| x.as_ref() != y.as_ref()))
}

fn union<S: AsRef<str>>(a: &[S], b: &[S]) -> Vec<String> {
    a.iter().chain(b).map(|s| s.as_ref().to_string()).collect()
}

/// I(A:B) = S_A + S_B − S_AB (von Neumann, nats).
pub fn mutual_information<S: AsRef<str>>(state: &PureState, a: &[S], b: &[S]) -> Result<f64> {
    if !disjoint(a, b) {
        return Err(Error::arg("mutual information needs disjoint label sets"));
    }
    let kind = EntropyKind::VonNeumann;
    let s_a = entropy_of_state(state, a, kind)?;
    let s_b = entropy_of_state(state, b, kind)?;
    let s_ab = entropy_of_state(state, &union(a, b), kind)?;
    Ok(s_a + s_b - s_ab)
}

/// I₃(B:R₁:R₂) = I(B:R₁) + I(B:R₂) − I(B:R) for a single-step process.
pub fn tripartite_mi<S: AsRef<str>>(proc: &PureProcess, r1: &[S]) -> Result<f64> {
    if proc.k() != 1 {
        return Err(Error::arg("tripartite information is defined for single-step processes"));
    }
    let r = proc.r_labels();
    if r1.iter().any(|l| !r.iter().any(|x| x == l.as_ref())) {
        return Err(Error::arg("r1 must be a subset of the final sites"));
    }
    let r2: Vec<String> = r.iter().filter(|x| !r1.iter().any(|l| l.as_ref() == x.as_str())).cloned().collect();
    let b = proc.b_labels();
    let state = proc.choi();
    let i1 = mutual_information(state, &b, &r1.iter().map(|s| s.as_ref().to_string()).collect::<Vec<_>>())?;
    let i2 = mutual_information(state, &b, &r2)?;
    let i_all = mutual_information(state, &b, &r)?;
    Ok(i1 + i2 - i_all)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cut {
    pub b1: Vec<String>,
    pub r1: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingClass {
    Area,
    Intermediate,
    Volume,
}

pub const VOLUME_SLOPE: f64 = 0.8;
pub const AREA_SLOPE: f64 = 0.2;

impl ScalingClass {
    pub fn from_slope(slope: f64) -> Self {
        if slope >= VOLUME_SLOPE {
            ScalingClass::Volume
        } else if slope <= AREA_SLOPE {
            ScalingClass::Area
        } else {
            ScalingClass::Intermediate
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingPoint {
    pub cut_id: usize,
    /// ln of the kept dimension.
    pub ln_dim: f64,
    pub entropy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingProfile {
    pub points: Vec<ScalingPoint>,
    pub fit_slope: f64,
    pub classification: ScalingClass,
    pub kind: EntropyKind,
}

impl ScalingProfile {
    pub fn csv_rows(&self) -> Vec<String> {
        self.points
            .iter()
            .map(|p| format!("{},{},{},{}", p.cut_id, p.ln_dim, p.entropy, self.kind.as_str()))
            .collect()
    }

    pub const CSV_HEADER: &'static str = "cut_id,ln_dim,entropy_nats,kind";
}

/// Least-squares slope of y on x.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Entropies of Υ_{B₁R₁} across a family of cuts, with a slope fit in
/// (ln dim, nats) coordinates. Each kept side must be smaller than the square
/// root of the total dimension, and at least three cuts with distinct
/// dimensions are needed for the fit.
pub fn scaling_profile(proc: &PureProcess, cuts: &[Cut], kind: EntropyKind) -> Result<ScalingProfile> {
    if cuts.is_empty() {
        return Err(Error::arg("empty cut family"));
    }
    if cuts.len() < 3 {
        return Err(Error::arg("slope fit needs at least three cuts"));
    }
    let reg = proc.register();
    let b = proc.b_labels();
    let r = proc.r_labels();
    let total = reg.total_dim() as u128;
    for cut in cuts {
        if cut.b1.iter().any(|l| !b.contains(l)) || cut.r1.iter().any(|l| !r.contains(l)) {
            return Err(Error::arg("cut legs must be butterfly legs (b1) and final sites (r1)"));
        }
        let keep = union(&cut.b1, &cut.r1);
        let d = reg.dim_of(&keep)? as u128;
        if d * d >= total {
            return Err(Error::arg("cut must keep less than half the total log-dimension"));
        }
    }
    let points: Vec<ScalingPoint> = cuts
        .par_iter()
        .enumerate()
        .map(|(i, cut)| {
            let keep = union(&cut.b1, &cut.r1);
            let d = reg.dim_of(&keep)?;
            Ok(ScalingPoint {
                cut_id: i,
                ln_dim: (d as f64).ln(),
                entropy: entropy_of_state(proc.choi(), &keep, kind)?,
            })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.ln_dim).collect();
    if xs.iter().all(|&x| (x - xs[0]).abs() < 1e-12) {
        return Err(Error::arg("cuts must have different dimensions"));
    }
    let ys: Vec<f64> = points.iter().map(|p| p.entropy).collect();
    let slope = ls_slope(&xs, &ys);
    Ok(ScalingProfile {
        points,
        fit_slope: slope,
        classification: ScalingClass::from_slope(slope),
        kind,
    })
}

/// Default family: all butterfly legs plus a growing block of final sites
/// taken from the far end of the chain (away from the system site), for as
/// long as the kept side stays below half the total log-dimension.
pub fn far_first_cuts(proc: &PureProcess) -> Vec<Cut> {
    let reg = proc.register();
    let b = proc.b_labels();
    let mut r = proc.r_labels();
    let s = proc.s_label().to_string();
    // order sites by distance from S, farthest first
    let s_pos = r.iter().position(|x| *x == s).unwrap_or(0);
    let mut order: Vec<(usize, String)> = r.drain(..).enumerate().map(|(i, l)| (i.abs_diff(s_pos), l)).collect();
    order.sort_by_key(|a| std::cmp::Reverse(a.0));
    let total = reg.total_dim() as u128;
    let mut cuts = Vec::new();
    for j in 0..=order.len() {
        let r1: Vec<String> = order[..j].iter().map(|(_, l)| l.clone()).collect();
        let keep = union(&b, &r1);
        let d = reg.dim_of(&keep).unwrap_or(usize::MAX) as u128;
        if d * d >= total {
            break;
        }
        cuts.push(Cut { b1: b.clone(), r1 });
    }
    cuts
}
