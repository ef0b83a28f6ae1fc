//! Butterfly flutter fidelity: direct evaluation, optimization of a
//! restricted correction unitary, and the forward-in-time ancilla protocol.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instruments::{matrix_to_json, ButterflyFlutter};
use crate::models::DynamicsModel;
use crate::process::{condition, PureProcess};
use crate::qcore::linalg::max_abs;
use crate::qcore::{apply_local, embed_operator, inner, is_unitary, CMat, PureState, Register, C64, TOL_PIPELINE};
use crate::randomness::haar_unitary;

/// Largest correction register for the unrestricted family, in qubits.
pub const FULL_FAMILY_MAX_QUBITS: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum AnsatzFamily {
    /// V = 𝟙.
    Identity,
    /// One layer of single-site gates.
    Local,
    /// Nearest-neighbour two-site gates in alternating layers; sites left
    /// unpaired at a chain edge get a single-site gate in that layer.
    Brickwork { depth: usize },
    /// One gate on the whole correction register.
    Full,
}

impl AnsatzFamily {
    pub fn id(&self) -> String {
        match self {
            AnsatzFamily::Identity => "identity".into(),
            AnsatzFamily::Local => "local".into(),
            AnsatzFamily::Brickwork { depth } => format!("brickwork-{depth}"),
            AnsatzFamily::Full => "full".into(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            AnsatzFamily::Identity => 0,
            AnsatzFamily::Local | AnsatzFamily::Full => 1,
            AnsatzFamily::Brickwork { depth } => *depth,
        }
    }

    /// True when every V of `self` also belongs to `other`.
    pub fn included_in(&self, other: &AnsatzFamily) -> bool {
        use AnsatzFamily::*;
        match (self, other) {
            (Identity, _) | (_, Full) => true,
            (Local, Local) => true,
            (Local, Brickwork { depth }) => *depth >= 1,
            (Brickwork { depth: a }, Brickwork { depth: b }) => a <= b,
            _ => false,
        }
    }

    fn layout(&self, n: usize) -> Vec<Vec<Vec<usize>>> {
        match self {
            AnsatzFamily::Identity => Vec::new(),
            AnsatzFamily::Local => vec![(0..n).map(|j| vec![j]).collect()],
            AnsatzFamily::Full => vec![vec![(0..n).collect()]],
            AnsatzFamily::Brickwork { depth } => (0..*depth)
                .map(|l| {
                    let mut layer = Vec::new();
                    let mut j = 0;
                    if l % 2 == 1 {
                        layer.push(vec![0]);
                        j = 1;
                    }
                    while j + 1 < n {
                        layer.push(vec![j, j + 1]);
                        j += 2;
                    }
                    if j < n {
                        layer.push(vec![j]);
                    }
                    layer
                })
                .collect(),
        }
    }
}

/// Correction unitary V on the final sites, stored gate by gate.
#[derive(Clone, Debug)]
pub struct CorrectionAnsatz {
    /// Site register V acts on.
    pub register: Register,
    /// Layers of disjoint supports (site positions in `register`).
    pub layout: Vec<Vec<Vec<usize>>>,
    /// One unitary per support, same nesting as `layout`.
    pub params: Vec<Vec<CMat>>,
    pub family: AnsatzFamily,
}

#[derive(Serialize)]
struct AnsatzJson<'a> {
    family_id: String,
    depth: usize,
    sites: Vec<String>,
    layout: &'a [Vec<Vec<usize>>],
    params: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
}

impl Serialize for CorrectionAnsatz {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        AnsatzJson {
            family_id: self.family.id(),
            depth: self.family.depth(),
            sites: self.register.labels(),
            layout: &self.layout,
            params: self
                .params
                .iter()
                .map(|l| l.iter().map(matrix_to_json).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl CorrectionAnsatz {
    pub fn identity(family: AnsatzFamily, register: &Register) -> Result<Self> {
        let n = register.len();
        if n == 0 {
            return Err(Error::arg("correction register is empty"));
        }
        if family == AnsatzFamily::Full {
            let d = register.total_dim();
            if d > 1 << FULL_FAMILY_MAX_QUBITS {
                return Err(Error::arg(format!(
                    "unrestricted correction limited to dimension {}",
                    1 << FULL_FAMILY_MAX_QUBITS
                )));
            }
        }
        let dims = register.dims();
        let layout = family.layout(n);
        let params = layout
            .iter()
            .map(|l| {
                l.iter()
                    .map(|sup| {
                        let d: usize = sup.iter().map(|&p| dims[p]).product();
                        CMat::identity(d, d)
                    })
                    .collect()
            })
            .collect();
        Ok(CorrectionAnsatz {
            register: register.clone(),
            layout,
            params,
            family,
        })
    }

    pub fn random(family: AnsatzFamily, register: &Register, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut a = Self::identity(family, register)?;
        for layer in a.params.iter_mut() {
            for g in layer.iter_mut() {
                *g = haar_unitary(g.nrows(), rng);
            }
        }
        Ok(a)
    }

    /// The same V written in a larger family, layer by layer: each gate is
    /// folded into the gate of the target layer whose support contains it.
    pub fn lift(&self, family: AnsatzFamily) -> Result<Self> {
        if !self.family.included_in(&family) {
            return Err(Error::arg(format!("{} is not contained in {}", self.family.id(), family.id())));
        }
        let mut out = Self::identity(family, &self.register)?;
        if family == AnsatzFamily::Full {
            out.params[0][0] = self.to_matrix()?;
            return Ok(out);
        }
        for (l, layer) in self.layout.iter().enumerate() {
            for (sup, g) in layer.iter().zip(&self.params[l]) {
                let (ti, tsup) = out.layout[l]
                    .iter()
                    .enumerate()
                    .find(|(_, t)| sup.iter().all(|p| t.contains(p)))
                    .ok_or_else(|| Error::arg("gate support not covered by the target layer"))?;
                let sub = self.register.select(&self.labels(tsup))?;
                out.params[l][ti] = embed_operator(g, &self.labels(sup), &sub)? * &out.params[l][ti];
            }
        }
        Ok(out)
    }

    pub fn gate_count(&self) -> usize {
        self.layout.iter().map(|l| l.len()).sum()
    }

    fn labels(&self, sup: &[usize]) -> Vec<String> {
        let all = self.register.labels();
        sup.iter().map(|&p| all[p].clone()).collect()
    }

    /// Gates in application order as (labels, matrix).
    fn gates(&self) -> Vec<(Vec<String>, &CMat)> {
        self.layout
            .iter()
            .zip(&self.params)
            .flat_map(|(l, ps)| l.iter().zip(ps).map(|(sup, g)| (self.labels(sup), g)))
            .collect()
    }

    fn gates_mut(&mut self) -> Vec<&mut CMat> {
        self.params.iter_mut().flat_map(|l| l.iter_mut()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (_, g) in self.gates() {
            if !is_unitary(g, 1e-10) {
                return Err(Error::arg("correction gate is not unitary"));
            }
        }
        Ok(())
    }

    /// V|ψ⟩ for a state containing the correction sites.
    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        let mut s = state.clone();
        for (labels, g) in self.gates() {
            s = apply_local(g, &labels, &s)?;
        }
        Ok(s)
    }

    /// Dense V on the correction register.
    pub fn to_matrix(&self) -> Result<CMat> {
        let d = self.register.total_dim();
        crate::qcore::check_cap(d * d)?;
        let mut v = CMat::identity(d, d);
        for (labels, g) in self.gates() {
            v = embed_operator(g, &labels, &self.register)? * v;
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BffResult {
    pub zeta: f64,
    /// Fidelity at V = 𝟙.
    pub identity_fidelity: f64,
    pub best_params: CorrectionAnsatz,
    pub flutter_pair: (String, String),
    /// Sweeps used by the best restart.
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub family_id: String,
    pub depth: usize,
    /// |⟨x|y⟩| for the normalized flutter vectors.
    pub flutter_overlap: f64,
}

/// |⟨x|y⟩| of the normalized flutter vectors.
pub fn flutter_overlap(x: &ButterflyFlutter, y: &ButterflyFlutter) -> Result<f64> {
    let a = x.supernormalized().normalized()?;
    let b = y.supernormalized().normalized()?;
    Ok(inner(&a, &b)?.norm())
}

fn conditional_pair(
    proc: &PureProcess,
    x: &ButterflyFlutter,
    y: &ButterflyFlutter,
    allow_weak: bool,
) -> Result<(PureState, PureState, f64)> {
    let ov = flutter_overlap(x, y)?;
    if !allow_weak && ov >= TOL_PIPELINE {
        return Err(Error::NotOrthogonal(ov));
    }
    let cx = condition(proc, x)?;
    let cy = condition(proc, y)?;
    if cx.null || cy.null {
        return Err(Error::NullOutcome);
    }
    Ok((cx.state, cy.state, ov))
}

/// Site register of the process's final sites.
pub fn correction_register(proc: &PureProcess) -> Result<Register> {
    let labels = proc.register().labels();
    let reg = proc.register().select(&labels[2 * proc.k()..])?;
    reg.select(&proc.r_labels())
}

/// |⟨Υ_{R|x}|V|Υ_{R|y}⟩|² for normalized conditional states. Flutters must be
/// orthogonal to 1e-8 unless `allow_weak` is set.
pub fn bff_direct(
    proc: &PureProcess,
    x: &ButterflyFlutter,
    y: &ButterflyFlutter,
    v: &CorrectionAnsatz,
    allow_weak: bool,
) -> Result<f64> {
    let (a, b, _) = conditional_pair(proc, x, y, allow_weak)?;
    fidelity(&a, &b, v)
}

/// |⟨a|V|b⟩|².
pub fn fidelity(a: &PureState, b: &PureState, v: &CorrectionAnsatz) -> Result<f64> {
    Ok(inner(a, &v.apply(b)?)?.norm_sqr())
}

#[derive(Clone, Debug)]
pub struct OptimizeOptions {
    /// Maximum sweeps per restart.
    pub budget: usize,
    /// Restart 0 starts from V = 𝟙 (or the warm start); the rest are random.
    pub restarts: usize,
    pub seed: u64,
    pub warm_start: Option<CorrectionAnsatz>,
    pub allow_weak: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            budget: 200,
            restarts: 4,
            seed: 0,
            warm_start: None,
            allow_weak: false,
        }
    }
}

const REL_IMPROVEMENT: f64 = 1e-9;

struct Run {
    ansatz: CorrectionAnsatz,
    value: f64,
    sweeps: usize,
    converged: bool,
}

/// Alternating gate updates: with all other gates fixed, ⟨a|V|b⟩ = tr(G M)
/// for the gate environment M = β α†, maximized by G = W U† for M = U Σ W†.
fn sweep_optimize(a: &PureState, b: &PureState, mut ans: CorrectionAnsatz, budget: usize) -> Result<Run> {
    let gates: Vec<Vec<String>> = ans.gates().into_iter().map(|(l, _)| l).collect();
    let n = gates.len();
    let mut value = fidelity(a, b, &ans)?;
    if n == 0 {
        return Ok(Run {
            ansatz: ans,
            value,
            sweeps: 0,
            converged: true,
        });
    }
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < budget {
        sweeps += 1;
        let before = value;
        // alphas[g] = (gates after g)† |a⟩
        let mats: Vec<CMat> = ans.gates().into_iter().map(|(_, g)| g.clone()).collect();
        let mut alphas = vec![a.clone(); n];
        for g in (0..n - 1).rev() {
            alphas[g] = apply_local(&mats[g + 1].adjoint(), &gates[g + 1], &alphas[g + 1])?;
        }
        let mut beta = b.clone();
        for g in 0..n {
            let bm = beta.matricize(&gates[g])?;
            let am = alphas[g].matricize(&gates[g])?;
            let m = &bm * am.adjoint();
            let svd = m.svd(true, true);
            let u = svd.u.expect("requested");
            let w = svd.v_t.expect("requested").adjoint();
            let new_gate = w * u.adjoint();
            let new_value = svd.singular_values.iter().sum::<f64>().powi(2);
            assert!(
                new_value >= value - 1e-10,
                "gate update decreased the fidelity: {value} -> {new_value}"
            );
            value = new_value;
            beta = apply_local(&new_gate, &gates[g], &beta)?;
            *ans.gates_mut()[g] = new_gate;
        }
        if value - before <= REL_IMPROVEMENT * before.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    // recompute from scratch to shed accumulated rounding
    let value = fidelity(a, b, &ans)?;
    Ok(Run {
        ansatz: ans,
        value,
        sweeps,
        converged,
    })
}

/// Optimizes V within a family for fixed normalized states a, b; ζ = sup
/// |⟨a|V|b⟩|² over the restarts.
pub fn optimize_on_states(
    a: &PureState,
    b: &PureState,
    register: &Register,
    family: AnsatzFamily,
    opts: &OptimizeOptions,
) -> Result<(f64, f64, CorrectionAnsatz, usize, bool)> {
    let restarts = opts.restarts.max(1);
    let identity = CorrectionAnsatz::identity(family, register)?;
    let identity_fidelity = fidelity(a, b, &identity)?;
    let runs: Vec<Run> = (0..restarts as u64)
        .into_par_iter()
        .map(|i| {
            let start = if i == 0 {
                match &opts.warm_start {
                    Some(w) => {
                        if w.family != family || w.register != *register {
                            return Err(Error::arg("warm start does not match family/register"));
                        }
                        w.clone()
                    }
                    None => identity.clone(),
                }
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(i);
                CorrectionAnsatz::random(family, register, &mut rng)?
            };
            sweep_optimize(a, b, start, opts.budget)
        })
        .collect::<Result<_>>()?;
    let best = runs
        .into_iter()
        .max_by(|x, y| x.value.total_cmp(&y.value))
        .expect("at least one restart");
    Ok((best.value, identity_fidelity, best.ansatz, best.sweeps, best.converged))
}

pub fn optimize_correction(
    proc: &PureProcess,
    x: &ButterflyFlutter,
    y: &ButterflyFlutter,
    family: AnsatzFamily,
    opts: &OptimizeOptions,
) -> Result<BffResult> {
    let (a, b, ov) = conditional_pair(proc, x, y, opts.allow_weak)?;
    let reg = correction_register(proc)?;
    let (zeta, id_fid, ans, sweeps, converged) = optimize_on_states(&a, &b, &reg, family, opts)?;
    Ok(BffResult {
        zeta,
        identity_fidelity: id_fid,
        best_params: ans,
        flutter_pair: (x.id(), y.id()),
        iterations: sweeps,
        converged,
        seed: opts.seed,
        family_id: family.id(),
        depth: family.depth(),
        flutter_overlap: ov,
    })
}

/// Optimizes each family in turn. A family containing the previous one is
/// warm-started from the previous optimum, so ζ cannot decrease along an
/// inclusion chain.
pub fn optimize_nested(
    proc: &PureProcess,
    x: &ButterflyFlutter,
    y: &ButterflyFlutter,
    families: &[AnsatzFamily],
    opts: &OptimizeOptions,
) -> Result<Vec<BffResult>> {
    let mut out: Vec<BffResult> = Vec::with_capacity(families.len());
    for &fam in families {
        let mut o = opts.clone();
        if let Some(prev) = out.last() {
            if prev.best_params.family.included_in(&fam) {
                o.warm_start = Some(prev.best_params.lift(fam)?);
            }
        }
        out.push(optimize_correction(proc, x, y, fam, &o)?);
    }
    Ok(out)
}

fn check_steps(steps: &[CMat], d_s: usize) -> Result<()> {
    for a in steps {
        if a.nrows() != d_s || a.ncols() != d_s {
            return Err(Error::dims("flutter step does not match the system dimension"));
        }
        if !is_unitary(a, 1e-10) {
            return Err(Error::arg("ancilla protocol needs unitary flutter steps"));
        }
    }
    Ok(())
}

/// Ancilla protocol: an ancilla in |+⟩ controls which flutter acts at each
/// time, and V on the final sites in its |1⟩ branch. With the two branches
/// ψ_x, Vψ_y the ancilla coherence is ⟨0|ρ|1⟩ = ⟨Vψ_y|ψ_x⟩/2, so
/// ζ = 4|⟨0|ρ|1⟩|².
pub fn bff_ancilla(model: &DynamicsModel, x_steps: &[CMat], y_steps: &[CMat], v: &CorrectionAnsatz) -> Result<f64> {
    if x_steps.len() != y_steps.len() || x_steps.is_empty() {
        return Err(Error::arg("need equally many (>= 1) flutter steps"));
    }
    check_steps(x_steps, model.d_s())?;
    check_steps(y_steps, model.d_s())?;
    let sites = model.site_labels();
    let s = model.s_label();
    let anc = PureState::from_vec(
        Register::new(vec![crate::qcore::Subsystem::new("anc", 2, crate::qcore::Role::Ancilla)])?,
        vec![C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0); 2],
    )?;
    let mut psi = model.initial.tensor(&anc)?;
    let p0 = CMat::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
    let p1 = CMat::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
    let controlled = |a0: &CMat, a1: &CMat| -> CMat {
        // target S fast, ancilla slow
        crate::qcore::linalg::kron(&p0, a0) + crate::qcore::linalg::kron(&p1, a1)
    };
    let targets = [s.clone(), "anc".to_string()];
    for (i, (xa, ya)) in x_steps.iter().zip(y_steps).enumerate() {
        psi = apply_local(&controlled(xa, ya), &targets, &psi)?;
        psi = apply_local(model.step_unitary(i)?, &sites, &psi)?;
    }
    if v.register.labels().iter().any(|l| !sites.contains(l)) {
        return Err(Error::arg("correction acts outside the model sites"));
    }
    let vm = v.to_matrix()?;
    let mut vt = v.register.labels();
    let id = CMat::identity(vm.nrows(), vm.nrows());
    vt.push("anc".into());
    psi = apply_local(&controlled(&id, &vm), &vt, &psi)?;
    let rho = crate::qcore::partial_trace(&psi, &["anc"])?;
    Ok(4.0 * rho.matrix()[(0, 1)].norm_sqr())
}

/// Checks Σ K†K = 𝟙 to 1e-10.
pub fn is_trace_preserving(kraus: &[CMat]) -> bool {
    let Some(first) = kraus.first() else { return false };
    let d = first.ncols();
    if kraus.iter().any(|k| k.ncols() != d || k.nrows() != d) {
        return false;
    }
    let sum = kraus.iter().fold(CMat::zeros(d, d), |acc, k| acc + k.adjoint() * k);
    max_abs(&(sum - CMat::identity(d, d))) < 1e-10
}

/// Kraus set of a channel on `target` embedded into the full site register.
pub fn local_channel<S: AsRef<str>>(kraus: &[CMat], target: &[S], register: &Register) -> Result<Vec<CMat>> {
    kraus.iter().map(|k| embed_operator(k, target, register)).collect()
}

/// Single-site dephasing with probability p: {√(1−p)𝟙, √p Z}.
pub fn dephasing(p: f64) -> Vec<CMat> {
    let z = CMat::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0)]);
    vec![CMat::identity(2, 2) * C64::new((1.0 - p).sqrt(), 0.0), z * C64::new(p.sqrt(), 0.0)]
}

/// Completely depolarizing channel on dimension d: {E_ab/√d}.
pub fn full_depolarizing(d: usize) -> Vec<CMat> {
    let mut out = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            let mut m = CMat::zeros(d, d);
            m[(a, b)] = C64::new(1.0 / (d as f64).sqrt(), 0.0);
            out.push(m);
        }
    }
    out
}

/// Ancilla protocol with CPTP steps given as Kraus sets on the site
/// register. Returns ζ and the purity of the final ancilla-plus-sites state.
pub fn bff_ancilla_open(
    initial: &PureState,
    channels: &[Vec<CMat>],
    x_steps: &[CMat],
    y_steps: &[CMat],
    v: &CorrectionAnsatz,
) -> Result<(f64, f64)> {
    let k = channels.len();
    if x_steps.len() != k || y_steps.len() != k || k == 0 {
        return Err(Error::arg("need one channel and one flutter step per time"));
    }
    let reg = initial.register();
    if reg.subsystems().iter().any(|s| !matches!(s.role, crate::qcore::Role::S | crate::qcore::Role::E)) {
        return Err(Error::arg("open protocol takes an initial state on the sites only"));
    }
    let d = reg.total_dim();
    crate::qcore::check_cap(4 * d * d)?;
    let s = reg.labels_with_role(crate::qcore::Role::S);
    if s.len() != 1 {
        return Err(Error::arg("need exactly one S site"));
    }
    let d_s = reg.dim_of(&s)?;
    check_steps(x_steps, d_s)?;
    check_steps(y_steps, d_s)?;
    for ch in channels {
        if ch.iter().any(|m| m.nrows() != d) || !is_trace_preserving(ch) {
            return Err(Error::arg("channel is not trace preserving on the site register"));
        }
    }
    let block = |a0: &CMat, a1: &CMat| -> CMat {
        let mut m = CMat::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(a0);
        m.view_mut((d, d), (d, d)).copy_from(a1);
        m
    };
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let psi0 = crate::qcore::linalg::kron_vec(&crate::qcore::CVec::from_vec(vec![h, h]), initial.amplitudes());
    let mut rho = &psi0 * psi0.adjoint();
    for i in 0..k {
        let xa = embed_operator(&x_steps[i], &s, reg)?;
        let ya = embed_operator(&y_steps[i], &s, reg)?;
        let c = block(&xa, &ya);
        rho = &c * rho * c.adjoint();
        let mut next = CMat::zeros(2 * d, 2 * d);
        for kr in &channels[i] {
            let kk = block(kr, kr);
            next += &kk * &rho * kk.adjoint();
        }
        rho = next;
    }
    let vm = embed_operator(&v.to_matrix()?, &v.register.labels(), reg)?;
    let c = block(&CMat::identity(d, d), &vm);
    rho = &c * rho * c.adjoint();
    let coh: C64 = (0..d).map(|j| rho[(j, d + j)]).sum();
    let purity = rho.iter().map(|z| z.norm_sqr()).sum::<f64>();
    Ok((4.0 * coh.norm_sqr(), purity))
}
