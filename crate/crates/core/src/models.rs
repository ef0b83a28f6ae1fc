//! Dynamics zoo: step unitaries, initial states and presets.

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::process::{build_process, chain_register, PureProcess};
use crate::qcore::linalg::{kron_register_order, random_vector};
use crate::qcore::{check_cap, embed_operator, is_unitary, CMat, CVec, PureState, Register, Role, Subsystem, C64};
use crate::randomness::{design_circuit, haar_unitary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectedClass {
    Regular,
    Chaotic,
    StateChaos,
    Unknown,
}

#[derive(Clone, Debug)]
pub enum Steps {
    /// Floquet-style: the same unitary every step.
    Repeated(CMat),
    /// Independent unitaries, one per step.
    Sequence(Vec<CMat>),
}

#[derive(Clone, Debug)]
pub struct DynamicsModel {
    pub id: String,
    /// Acted-on sites in chain order, plus any reference subsystems.
    pub register: Register,
    pub initial: PureState,
    pub steps: Steps,
    pub preset: serde_json::Value,
    pub expected_class: ExpectedClass,
}

impl DynamicsModel {
    fn new(
        id: &str,
        initial: PureState,
        steps: Steps,
        preset: serde_json::Value,
        expected_class: ExpectedClass,
    ) -> Result<Self> {
        let s_count = initial.register().subsystems().iter().filter(|s| s.role == Role::S).count();
        if s_count != 1 {
            return Err(Error::arg("a model register needs exactly one S site"));
        }
        let check = |u: &CMat| -> Result<()> {
            if !is_unitary(u, 1e-10) {
                return Err(Error::arg(format!("model `{id}` produced a non-unitary step")));
            }
            Ok(())
        };
        match &steps {
            Steps::Repeated(u) => check(u)?,
            Steps::Sequence(us) => us.iter().try_for_each(check)?,
        }
        Ok(DynamicsModel {
            id: id.to_string(),
            register: initial.register().clone(),
            initial,
            steps,
            preset,
            expected_class,
        })
    }

    /// Acted-on site labels (S and E) in chain order.
    pub fn site_labels(&self) -> Vec<String> {
        self.register
            .subsystems()
            .iter()
            .filter(|s| matches!(s.role, Role::S | Role::E))
            .map(|s| s.label.clone())
            .collect()
    }

    pub fn s_label(&self) -> String {
        self.register.labels_with_role(Role::S).remove(0)
    }

    pub fn d_s(&self) -> usize {
        let s = self.s_label();
        self.register.dim_of(&[s]).expect("S site exists")
    }

    /// Step unitary `i` (0-based).
    pub fn step_unitary(&self, i: usize) -> Result<&CMat> {
        match &self.steps {
            Steps::Repeated(u) => Ok(u),
            Steps::Sequence(us) => us
                .get(i)
                .ok_or_else(|| Error::arg(format!("model `{}` only has {} steps", self.id, us.len()))),
        }
    }

    pub fn unitaries(&self, k: usize) -> Result<Vec<CMat>> {
        (0..k).map(|i| self.step_unitary(i).cloned()).collect()
    }

    pub fn process(&self, k: usize) -> Result<PureProcess> {
        build_process(&self.initial, &self.unitaries(k)?, &self.id)
    }

    pub fn with_initial(mut self, initial: PureState) -> Result<Self> {
        if initial.register() != &self.register {
            return Err(Error::dims("initial state must live on the model register"));
        }
        self.initial = initial;
        Ok(self)
    }
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Permutation unitary on `n` sites of dimension `d`: new site j takes the
/// content of old site `src[j]`.
fn site_permutation(n: usize, d: usize, src: &[usize]) -> Result<CMat> {
    let dim = d.pow(n as u32);
    check_cap(dim * dim)?;
    let mut m = CMat::zeros(dim, dim);
    let mut digits = vec![0usize; n];
    for old in 0..dim {
        let mut r = old;
        for dg in digits.iter_mut() {
            *dg = r % d;
            r /= d;
        }
        let mut new = 0;
        let mut stride = 1;
        for &s in src.iter().take(n) {
            new += digits[s] * stride;
            stride *= d;
        }
        m[(new, old)] = c(1.0);
    }
    Ok(m)
}

fn product_initial(reg: Register, factors: &[CVec]) -> Result<PureState> {
    let normed: Vec<CVec> = factors.iter().map(|f| f / c(f.norm())).collect();
    PureState::product(reg, &normed)
}

fn zero_vec(d: usize) -> CVec {
    let mut v = CVec::zeros(d);
    v[0] = c(1.0);
    v
}

/// Cyclic shift of `n` sites with a local unitary `L` on the system site:
/// φ_1⊗…⊗φ_n ↦ Lφ_2L†⊗…⊗φ_n⊗φ_1, system at site 0. The initial state is
/// Lφ_1 ⊗ φ_2 ⊗ … ⊗ φ_n, so the i-th intervention receives Lφ_iL†.
pub fn lindblad_bernoulli(n: usize, local_u: &CMat, k: usize, phis: &[CVec]) -> Result<DynamicsModel> {
    if k >= n {
        return Err(Error::arg("the shift needs k < n so that states are lost to the environment"));
    }
    let d = local_u.nrows();
    if !is_unitary(local_u, 1e-10) {
        return Err(Error::arg("local unitary L must be unitary"));
    }
    if phis.len() != n || phis.iter().any(|p| p.len() != d) {
        return Err(Error::dims("one local state of dimension d per site required"));
    }
    let reg = chain_register(n, d, 0)?;
    let src: Vec<usize> = (0..n).map(|j| (j + 1) % n).collect();
    let perm = site_permutation(n, d, &src)?;
    let l_full = embed_operator(local_u, &["r0"], &reg)?;
    let step = l_full * perm;
    let mut factors: Vec<CVec> = phis.to_vec();
    factors[0] = local_u * &phis[0];
    let initial = product_initial(reg, &factors)?;
    DynamicsModel::new(
        "lindblad_bernoulli",
        initial,
        Steps::Repeated(step),
        json!({ "n": n, "d": d, "k": k }),
        ExpectedClass::Regular,
    )
}

/// Random product states for the shift, seeded by the caller's RNG.
pub fn random_product_states<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<CVec> {
    (0..n).map(|_| random_vector(d, rng)).collect()
}

/// Brickwork of nearest-neighbour SWAPs, two layers per step; system at site 0.
pub fn swap_chain(n: usize, d: usize) -> Result<DynamicsModel> {
    if n < 2 {
        return Err(Error::arg("swap chain needs at least two sites"));
    }
    let layer = |offset: usize| -> Vec<usize> {
        let mut src: Vec<usize> = (0..n).collect();
        let mut j = offset;
        while j + 1 < n {
            src.swap(j, j + 1);
            j += 2;
        }
        src
    };
    let a = site_permutation(n, d, &layer(0))?;
    let b = site_permutation(n, d, &layer(1))?;
    let reg = chain_register(n, d, 0)?;
    let initial = product_initial(reg, &vec![zero_vec(d); n])?;
    DynamicsModel::new(
        "swap_chain",
        initial,
        Steps::Repeated(b * a),
        json!({ "n": n, "d": d }),
        ExpectedClass::Regular,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KickedIsingParams {
    pub j: f64,
    pub b: f64,
    pub h: f64,
    /// Floquet periods between interventions.
    pub periods: usize,
}

impl KickedIsingParams {
    /// Conventional non-integrable point; a documented choice, not a derived one.
    pub const CHAOTIC: KickedIsingParams = KickedIsingParams {
        j: 1.0,
        b: 0.9,
        h: 0.5,
        periods: 1,
    };

    /// No transverse kick: the Floquet operator is diagonal.
    pub const INTEGRABLE: KickedIsingParams = KickedIsingParams {
        j: 1.0,
        b: 0.0,
        h: 0.5,
        periods: 1,
    };
}

/// Floquet operator exp(−i b Σ X_j) · exp(−i Σ (J Z_j Z_{j+1} + h Z_j)) on an
/// open chain of `n` qubits.
pub fn kicked_ising_floquet(n: usize, p: &KickedIsingParams) -> Result<CMat> {
    let dim = 1usize << n;
    check_cap(dim * dim)?;
    let diag = CVec::from_fn(dim, |idx, _| {
        let z = |j: usize| if (idx >> j) & 1 == 0 { 1.0 } else { -1.0 };
        let mut e = 0.0;
        for j in 0..n {
            e += p.h * z(j);
            if j + 1 < n {
                e += p.j * z(j) * z(j + 1);
            }
        }
        C64::from_polar(1.0, -e)
    });
    let kick1 = CMat::from_row_slice(
        2,
        2,
        &[
            c(p.b.cos()),
            C64::new(0.0, -p.b.sin()),
            C64::new(0.0, -p.b.sin()),
            c(p.b.cos()),
        ],
    );
    let kick = kron_register_order(&vec![kick1; n]);
    Ok(kick * CMat::from_diagonal(&diag))
}

/// Kicked Ising chain of qubits with the system at site 0, initial |0…0⟩.
pub fn kicked_ising(n: usize, params: KickedIsingParams) -> Result<DynamicsModel> {
    if n < 2 {
        return Err(Error::arg("kicked Ising needs at least two sites"));
    }
    if params.periods == 0 {
        return Err(Error::arg("periods must be at least 1"));
    }
    let f = kicked_ising_floquet(n, &params)?;
    let mut step = CMat::identity(f.nrows(), f.nrows());
    for _ in 0..params.periods {
        step = &f * step;
    }
    let reg = chain_register(n, 2, 0)?;
    let initial = product_initial(reg, &vec![zero_vec(2); n])?;
    let class = if params.b == 0.0 {
        ExpectedClass::Regular
    } else {
        ExpectedClass::Chaotic
    };
    DynamicsModel::new(
        "kicked_ising",
        initial,
        Steps::Repeated(step),
        json!({ "n": n, "J": params.j, "b": params.b, "h": params.h, "periods": params.periods }),
        class,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaarInit {
    /// |0…0⟩.
    Product,
    /// A Haar-random pure state of S⊗E, i.e. one extra independent Haar
    /// unitary before the first intervention.
    HaarPure,
    /// S maximally entangled with the first environment site; every other
    /// environment site maximally entangled with its own reference subsystem
    /// outside S⊗E. The reduced environment is then maximally mixed, which is
    /// the channel setting of scrambling measures.
    Referenced,
}

/// Environment site dimensions: qudits of dimension `d_s` when `d_e` is a
/// power of `d_s`, otherwise a single site.
fn environment_sites(d_s: usize, d_e: usize) -> Vec<usize> {
    let mut n = 0;
    let mut p = 1;
    while p < d_e {
        p *= d_s;
        n += 1;
    }
    if p == d_e && n > 0 {
        vec![d_s; n]
    } else {
        vec![d_e]
    }
}

fn haar_register(d_s: usize, d_e: usize, referenced: bool) -> Result<Register> {
    let env = environment_sites(d_s, d_e);
    let mut subs = vec![Subsystem::new("r0", d_s, Role::S)];
    for (i, &d) in env.iter().enumerate() {
        subs.push(Subsystem::new(format!("r{}", i + 1), d, Role::E));
    }
    if referenced {
        for (i, &d) in env.iter().enumerate().skip(1) {
            subs.push(Subsystem::new(format!("q{}", i + 1), d, Role::Ancilla));
        }
    }
    Register::new(subs)
}

/// Normalized state pairing subsystem positions maximally; others in |0⟩.
fn paired_state(reg: Register, pairs: &[(usize, usize)]) -> Result<PureState> {
    let dims = reg.dims();
    let total = checked_dims(&dims)?;
    let strides = reg.strides();
    let in_pair = |p: usize| pairs.iter().any(|&(a, b)| a == p || b == p);
    let mut amps = CVec::zeros(total);
    let mut norm = 1.0;
    for &(a, b) in pairs {
        if dims[a] != dims[b] {
            return Err(Error::dims("paired subsystems need equal dimensions"));
        }
        norm *= dims[a] as f64;
    }
    'outer: for idx in 0..total {
        let digit = |p: usize| (idx / strides[p]) % dims[p];
        for p in 0..dims.len() {
            if !in_pair(p) && digit(p) != 0 {
                continue 'outer;
            }
        }
        for &(a, b) in pairs {
            if digit(a) != digit(b) {
                continue 'outer;
            }
        }
        amps[idx] = c(1.0 / norm.sqrt());
    }
    PureState::new(reg, amps)
}

fn checked_dims(dims: &[usize]) -> Result<usize> {
    crate::qcore::checked_product(dims.iter().copied())
}

/// k independent Haar step unitaries on S⊗E with the chosen initial state.
pub fn haar_dynamics<R: Rng + ?Sized>(d_s: usize, d_e: usize, k: usize, init: HaarInit, rng: &mut R) -> Result<DynamicsModel> {
    if d_s < 2 || d_e < 1 {
        return Err(Error::arg("need d_S >= 2 and d_E >= 1"));
    }
    let d = d_s * d_e;
    check_cap(d * d)?;
    let reg = haar_register(d_s, d_e, init == HaarInit::Referenced)?;
    let n_env = environment_sites(d_s, d_e).len();
    let initial = match init {
        HaarInit::Product => PureState::basis(reg.clone(), &vec![0; reg.len()])?,
        HaarInit::HaarPure => {
            let u = haar_unitary(d, rng);
            PureState::new(reg.clone(), u.column(0).into_owned())?
        }
        HaarInit::Referenced => {
            if reg.dims()[1] != d_s {
                return Err(Error::arg("referenced initial state needs d_E to be a power of d_S"));
            }
            let mut pairs = vec![(0, 1)];
            for i in 2..=n_env {
                pairs.push((i, n_env + i - 1));
            }
            paired_state(reg.clone(), &pairs)?
        }
    };
    let us = (0..k).map(|_| haar_unitary(d, rng)).collect();
    DynamicsModel::new(
        "haar",
        initial,
        Steps::Sequence(us),
        json!({ "d_s": d_s, "d_e": d_e, "k": k, "init": init }),
        ExpectedClass::Chaotic,
    )
}

/// Area-law dynamics (one fixed layer of single-site Haar gates) acting on a
/// brickwork-scrambled initial state of `n` qubits; system at site 0. With
/// `scramble_depth = 0` the initial state is the product |0…0⟩; a depth of
/// `2n` brings the half-cut entropy within 10% of the Page value.
pub fn state_chaos_construction<R: Rng + ?Sized>(n: usize, scramble_depth: usize, rng: &mut R) -> Result<DynamicsModel> {
    if n < 2 {
        return Err(Error::arg("need at least two sites"));
    }
    let reg = chain_register(n, 2, 0)?;
    let scr = design_circuit(n, scramble_depth, rng)?;
    let initial = PureState::new(reg, scr.column(0).into_owned())?;
    let locals: Vec<CMat> = (0..n).map(|_| haar_unitary(2, rng)).collect();
    let step = kron_register_order(&locals);
    let class = if scramble_depth > 0 {
        ExpectedClass::StateChaos
    } else {
        ExpectedClass::Regular
    };
    DynamicsModel::new(
        "state_chaos",
        initial,
        Steps::Repeated(step),
        json!({ "n": n, "scramble_depth": scramble_depth }),
        class,
    )
}
