//! Legacy chaos signatures (echo, dynamical entropy, Pesin relation,
//! operator entanglement) and the random-butterfly experiment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::entanglement::{entropy_of_probs, entropy_of_state, EntropyKind};
use crate::error::{Error, Result};
use crate::instruments::{butterfly_basis, weak_unitary};
use crate::models::DynamicsModel;
use crate::process::{reduced_process, PureProcess};
use crate::qcore::linalg::{eigh, ginibre};
use crate::qcore::{
    apply_local, check_cap, embed_operator, inner, partial_trace, CMat, CVec, DensityOperator, Register, Role, C64,
};

#[derive(Clone, Debug, Serialize)]
pub struct EchoCurve {
    /// (k, fidelity); the k = 0 point is 1.
    pub points: Vec<(usize, f64)>,
    pub epsilon: f64,
    pub model_id: String,
}

/// Fidelity between the k-step outputs for the flutters W^{⊗k} and 𝟙^{⊗k},
/// for k = 0..=k_max, by direct evolution of the model's initial state.
pub fn loschmidt_echo_with(model: &DynamicsModel, w: &CMat, epsilon: f64, k_max: usize) -> Result<EchoCurve> {
    let s = model.s_label();
    let sites = model.site_labels();
    let mut psi_x = model.initial.clone();
    let mut psi_y = model.initial.clone();
    let mut points = vec![(0, 1.0)];
    for k in 1..=k_max {
        let u = model.step_unitary(k - 1)?;
        psi_x = apply_local(u, &sites, &apply_local(w, &[s.as_str()], &psi_x)?)?;
        psi_y = apply_local(u, &sites, &psi_y)?;
        points.push((k, inner(&psi_x, &psi_y)?.norm_sqr().min(1.0)));
    }
    Ok(EchoCurve {
        points,
        epsilon,
        model_id: model.id.clone(),
    })
}

/// Echo with a seeded weak unitary W_ε.
pub fn loschmidt_echo(model: &DynamicsModel, epsilon: f64, k_max: usize, w_seed: u64) -> Result<EchoCurve> {
    let w = weak_unitary(epsilon, model.d_s(), w_seed)?;
    loschmidt_echo_with(model, &w, epsilon, k_max)
}

/// Shift-model echo in closed form: Π_i |⟨χ_i|W|χ_i⟩|² with χ_i = Lφ_i the
/// state found on the system at intervention i.
pub fn lb_echo_closed_form(local_u: &CMat, phis: &[CVec], w: &CMat, k: usize) -> Result<f64> {
    if k > phis.len() {
        return Err(Error::arg("need one local state per step"));
    }
    Ok(phis[..k]
        .iter()
        .map(|p| {
            let chi = local_u * (p / C64::new(p.norm(), 0.0));
            chi.dotc(&(w * &chi)).norm_sqr()
        })
        .product())
}

/// Local state φ with |⟨Lφ|W|Lφ⟩| = |tr W|/d: the uniform superposition of
/// W's eigenvectors, pulled back through L.
pub fn echo_typical_state(local_u: &CMat, w: &CMat) -> CVec {
    // W is normal: a generic real combination of its Hermitian and
    // anti-Hermitian parts shares its eigenvectors
    let d = w.nrows();
    let h = (w + w.adjoint()) * C64::new(0.5, 0.0) + (w - w.adjoint()) * C64::new(0.0, -0.5 * std::f64::consts::FRAC_1_PI);
    let (_, vecs) = eigh(&h);
    let chi: CVec = (0..d).map(|j| vecs.column(j).into_owned()).fold(CVec::zeros(d), |a, b| a + b) / C64::new((d as f64).sqrt(), 0.0);
    local_u.adjoint() * chi
}

/// S(Υ_B)/k in nats.
pub fn dynamical_entropy_k(proc: &PureProcess) -> Result<f64> {
    let s = entropy_of_state(proc.choi(), &proc.b_labels(), EntropyKind::VonNeumann)?;
    Ok(s / proc.k() as f64)
}

/// True when d_B is at most the remaining dimension, the regime where the
/// dynamical entropy is meaningful.
pub fn dynamical_entropy_guidance_ok(proc: &PureProcess) -> bool {
    let total = proc.register().total_dim();
    proc.d_b() * proc.d_b() <= total
}

#[derive(Clone, Debug, Serialize)]
pub struct PesinCheck {
    /// S⁽²⁾(Υ_B).
    pub lhs: f64,
    /// −ln[(Σ_{x≠y} |⟨x|Υ_B|y⟩|² + Σ_x ⟨x|Υ_B|x⟩²)/d_B²] over the Pauli basis.
    pub rhs: f64,
    pub d_b: usize,
    pub offdiag_sum: f64,
    /// Σ_x ⟨x|Υ_B|x⟩²; equals d_B since unitary flutters have unit weight.
    pub diag_sum: f64,
}

pub fn pesin_relation_check(proc: &PureProcess) -> Result<PesinCheck> {
    let d_b = proc.d_b();
    check_cap(d_b * d_b)?;
    let ub = reduced_process(proc)?;
    let basis = butterfly_basis(proc.k(), proc.d_s())?;
    let x = CMat::from_fn(d_b, basis.len(), |r, c| basis[c].supernormalized().amplitudes()[r].conj());
    let m = x.adjoint() * ub.matrix() * &x;
    let mut off = 0.0;
    let mut diag = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i == j {
                diag += m[(i, j)].norm_sqr();
            } else {
                off += m[(i, j)].norm_sqr();
            }
        }
    }
    let db = d_b as f64;
    Ok(PesinCheck {
        lhs: -ub.purity().ln(),
        rhs: -((off + diag) / (db * db)).ln(),
        d_b,
        offdiag_sum: off,
        diag_sum: diag,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LoeCurve {
    /// (t, entropy in nats).
    pub points: Vec<(usize, f64)>,
    pub operator_id: String,
    pub part_a: Vec<String>,
    pub part_b: Vec<String>,
}

/// Entropy of the normalized operator state of `op` across the spatial cut
/// `part_a | rest` of `reg`.
pub fn operator_entanglement<S: AsRef<str>>(op: &CMat, reg: &Register, part_a: &[S], kind: EntropyKind) -> Result<f64> {
    let d = reg.total_dim();
    if op.nrows() != d || op.ncols() != d {
        return Err(Error::dims("operator does not match the register"));
    }
    let pa = reg.positions(part_a)?;
    let comp = reg.complement(part_a)?;
    let pb = reg.positions(&comp)?;
    let dims = reg.dims();
    let strides = reg.strides();
    let d_a: usize = pa.iter().map(|&p| dims[p]).product();
    let d_b = d / d_a;
    let split = |idx: usize| -> (usize, usize) {
        let (mut a, mut sa) = (0, 1);
        for &p in &pa {
            a += ((idx / strides[p]) % dims[p]) * sa;
            sa *= dims[p];
        }
        let (mut b, mut sb) = (0, 1);
        for &p in &pb {
            b += ((idx / strides[p]) % dims[p]) * sb;
            sb *= dims[p];
        }
        (a, b)
    };
    let parts: Vec<(usize, usize)> = (0..d).map(split).collect();
    let mut m = CMat::zeros(d_a * d_a, d_b * d_b);
    for c in 0..d {
        let (ac, bc) = parts[c];
        for r in 0..d {
            let (ar, br) = parts[r];
            m[(ar + d_a * ac, br + d_b * bc)] = op[(r, c)];
        }
    }
    let sv = m.singular_values();
    let total: f64 = sv.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::arg("zero operator"));
    }
    let probs: Vec<f64> = sv.iter().map(|s| s * s / total).collect();
    entropy_of_probs(&probs, kind)
}

/// Operator entanglement of X_t = U_t† X U_t, t = 0..=t_max, where X acts on
/// `site` and U_t is the product of the first t step unitaries.
pub fn local_operator_entanglement<S: AsRef<str>>(
    model: &DynamicsModel,
    x_op: &CMat,
    site: &str,
    part_a: &[S],
    t_max: usize,
) -> Result<LoeCurve> {
    let sites = model.site_labels();
    let reg = model.register.select(&sites)?;
    reg.position(site)?;
    let d = reg.total_dim();
    check_cap(d * d)?;
    let x = embed_operator(x_op, &[site], &reg)?;
    let part_b = reg.complement(part_a)?;
    let mut points = vec![(0, operator_entanglement(&x, &reg, part_a, EntropyKind::VonNeumann)?)];
    let mut prod = CMat::identity(d, d);
    for t in 1..=t_max {
        prod = model.step_unitary(t - 1)? * prod;
        let xt = prod.adjoint() * &x * &prod;
        points.push((t, operator_entanglement(&xt, &reg, part_a, EntropyKind::VonNeumann)?));
    }
    Ok(LoeCurve {
        points,
        operator_id: format!("{}@{}", model.id, site),
        part_a: part_a.iter().map(|s| s.as_ref().to_string()).collect(),
        part_b,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExceedanceRow {
    pub delta: f64,
    pub exceedance: f64,
    pub std_err: f64,
    /// (tr ρ² − 1/d)/δ.
    pub bound: f64,
    /// Exact mean/δ, the Markov bound proper.
    pub markov_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RandomButterflyReport {
    pub trials: usize,
    pub d: usize,
    pub purity: f64,
    /// d²(tr ρ² − 1/d)/(d² − 1).
    pub exact_mean: f64,
    pub empirical_mean: f64,
    pub std_err: f64,
    pub rows: Vec<ExceedanceRow>,
    /// Per trial: (q, normalized fidelity), q = d²|⟨y|ρ|x⟩|².
    #[serde(skip)]
    pub samples: Vec<(f64, f64)>,
}

/// Mean of d²|⟨y|ρ|x⟩|² over Haar-random orthonormal pairs.
pub fn weingarten_mean(d: usize, purity: f64) -> f64 {
    let df = d as f64;
    df * df * (purity - 1.0 / df) / (df * df - 1.0)
}

/// Haar-random orthonormal pair: the first two columns of a Haar unitary.
fn orthonormal_pair(d: usize, rng: &mut ChaCha8Rng) -> (CVec, CVec) {
    let g = ginibre(d, 2, rng);
    let x = g.column(0) / C64::new(g.column(0).norm(), 0.0);
    let mut y = g.column(1).into_owned();
    let proj = x.dotc(&y);
    y -= &x * proj;
    let y = &y / C64::new(y.norm(), 0.0);
    (x, y)
}

/// Random-butterfly statistics on a normalized density operator.
pub fn random_butterfly_on_state(rho: &DensityOperator, trials: usize, deltas: &[f64], seed: u64) -> Result<RandomButterflyReport> {
    if trials < 100 {
        return Err(Error::arg("need at least 100 trials"));
    }
    if deltas.iter().any(|&x| x <= 0.0) {
        return Err(Error::arg("deltas must be positive"));
    }
    let d = rho.matrix().nrows();
    if d < 2 {
        return Err(Error::arg("need dimension at least 2"));
    }
    let m = rho.matrix() / C64::new(rho.trace(), 0.0);
    let purity = m.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let df = d as f64;
    let samples: Vec<(f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let (x, y) = orthonormal_pair(d, &mut rng);
            let mx = &m * &x;
            let my = &m * &y;
            let q = df * df * y.dotc(&mx).norm_sqr();
            let px = df * x.dotc(&mx).re;
            let py = df * y.dotc(&my).re;
            let fid = if px > 0.0 && py > 0.0 { q / (px * py) } else { 0.0 };
            (q, fid)
        })
        .collect();
    let n = trials as f64;
    let mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let exact = weingarten_mean(d, purity);
    let rows = deltas
        .iter()
        .map(|&delta| {
            let f = samples.iter().filter(|s| s.0 >= delta).count() as f64 / n;
            ExceedanceRow {
                delta,
                exceedance: f,
                std_err: (f * (1.0 - f) / n).sqrt(),
                bound: (purity - 1.0 / df) / delta,
                markov_bound: exact / delta,
            }
        })
        .collect();
    Ok(RandomButterflyReport {
        trials,
        d,
        purity,
        exact_mean: exact,
        empirical_mean: mean,
        std_err: (var / n).sqrt(),
        rows,
        samples,
    })
}

/// Random orthogonal flutter pairs on B ⊗ R₁ for a process.
pub fn random_butterfly_experiment<S: AsRef<str>>(
    proc: &PureProcess,
    r1: &[S],
    trials: usize,
    deltas: &[f64],
    seed: u64,
) -> Result<RandomButterflyReport> {
    let r = proc.r_labels();
    if r1.iter().any(|l| !r.iter().any(|x| x == l.as_ref())) {
        return Err(Error::arg("r1 must be a subset of the final sites"));
    }
    let mut keep = proc.b_labels();
    keep.extend(r1.iter().map(|s| s.as_ref().to_string()));
    let d = proc.register().dim_of(&keep)?;
    check_cap(d * d)?;
    let rho = partial_trace(proc.choi(), &keep)?;
    random_butterfly_on_state(&rho, trials, deltas, seed)
}

/// Density operator of a pure state on `d` levels, for oracle checks.
pub fn pure_density(v: &CVec) -> Result<DensityOperator> {
    let reg = Register::new(vec![crate::qcore::Subsystem::new("x", v.len(), Role::E)])?;
    DensityOperator::new(reg, v * v.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{haar_dynamics, lindblad_bernoulli, swap_chain, HaarInit};
    use crate::process::{build_process, chain_register};
    use crate::qcore::linalg::random_vector;
    use crate::qcore::PureState;
    use crate::randomness::haar_unitary;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn echo_tiny_epsilon_stays_one() {
        let m = swap_chain(3, 2).unwrap();
        let c = loschmidt_echo(&m, 1e-9, 5, 1).unwrap();
        assert_eq!(c.points[0], (0, 1.0));
        assert!(c.points.iter().all(|p| (p.1 - 1.0).abs() < 1e-6));
    }

    #[test]
    fn lb_echo_matches_closed_form() {
        let mut r = rng(2);
        let l = haar_unitary(2, &mut r);
        let phis: Vec<CVec> = (0..5).map(|_| random_vector(2, &mut r)).collect();
        let m = lindblad_bernoulli(5, &l, 4, &phis).unwrap();
        let w = weak_unitary(0.1, 2, 3).unwrap();
        let c = loschmidt_echo_with(&m, &w, 0.1, 4).unwrap();
        for &(k, f) in &c.points {
            assert!((f - lb_echo_closed_form(&l, &phis, &w, k).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn typical_state_saturates_trace() {
        let mut r = rng(4);
        let l = haar_unitary(2, &mut r);
        let eps = 0.05;
        let w = weak_unitary(eps, 2, 5).unwrap();
        let phi = echo_typical_state(&l, &w);
        let f = lb_echo_closed_form(&l, &[phi], &w, 1).unwrap();
        assert!((f - (1.0 - eps) * (1.0 - eps)).abs() < 1e-10);
    }

    #[test]
    fn dynamical_entropy_limits() {
        let mut r = rng(6);
        let l = haar_unitary(2, &mut r);
        let phis: Vec<CVec> = (0..6).map(|_| random_vector(2, &mut r)).collect();
        let m = lindblad_bernoulli(6, &l, 2, &phis).unwrap();
        let p = m.process(2).unwrap();
        assert!((dynamical_entropy_k(&p).unwrap() - 2f64.ln()).abs() < 1e-8);
        let reg = chain_register(3, 2, 0).unwrap();
        let init = PureState::basis(reg, &[0, 0, 0]).unwrap();
        let id = build_process(&init, &[CMat::identity(8, 8)], "id").unwrap();
        assert!(dynamical_entropy_k(&id).unwrap() < 1e-10 + 2f64.ln());
    }

    #[test]
    fn pesin_on_noisy_identity_and_haar() {
        let mut r = rng(7);
        let m = haar_dynamics(2, 32, 1, HaarInit::HaarPure, &mut r).unwrap();
        let p = m.process(1).unwrap();
        let c = pesin_relation_check(&p).unwrap();
        assert!((c.lhs - c.rhs).abs() < 1e-8);
        assert!((c.diag_sum - c.d_b as f64).abs() < 1e-8);
        // identity dynamics: the out leg stays paired with the final system
        let reg = chain_register(2, 2, 0).unwrap();
        let init = PureState::basis(reg, &[0, 0]).unwrap();
        let id = build_process(&init, &[CMat::identity(4, 4)], "id").unwrap();
        let c = pesin_relation_check(&id).unwrap();
        assert!((c.lhs - c.rhs).abs() < 1e-10);
    }

    #[test]
    fn loe_local_operator_at_t0_and_bounds() {
        let m = swap_chain(4, 2).unwrap();
        let x = CMat::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let c = local_operator_entanglement(&m, &x, "r0", &["r0", "r1"], 6).unwrap();
        assert!(c.points[0].1.abs() < 1e-12);
        for &(_, s) in &c.points {
            assert!(s >= 0.0 && s <= 2.0 * 2f64.ln() + 1e-10);
        }
    }

    #[test]
    fn operator_entanglement_of_swap_gate() {
        let reg = Register::uniform("q", 2, 2, Role::E).unwrap();
        let mut sw = CMat::zeros(4, 4);
        for a in 0..2 {
            for b in 0..2 {
                sw[(b + 2 * a, a + 2 * b)] = C64::new(1.0, 0.0);
            }
        }
        let s = operator_entanglement(&sw, &reg, &["q0"], EntropyKind::VonNeumann).unwrap();
        assert!((s - 2.0 * 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn weingarten_oracles() {
        let reg = Register::uniform("q", 2, 2, Role::E).unwrap();
        let mm = DensityOperator::maximally_mixed(reg).unwrap();
        let rep = random_butterfly_on_state(&mm, 500, &[0.1], 1).unwrap();
        assert!(rep.exact_mean.abs() < 1e-12);
        assert!(rep.empirical_mean.abs() < 1e-10);
        let v = random_vector(4, &mut rng(9));
        let rep = random_butterfly_on_state(&pure_density(&v).unwrap(), 2000, &[0.1], 2).unwrap();
        assert!((rep.exact_mean - 0.8).abs() < 1e-12);
        assert!((rep.empirical_mean - 0.8).abs() < 3.0 * rep.std_err);
        assert!(random_butterfly_on_state(&mm, 10, &[0.1], 1).is_err());
    }
}
