//! Rank-one instruments, their Choi vectors and operator bases.
//!
//! Choi vectors use the unnormalized pair Σ_n |n⟩|n⟩, so a single-step vector
//! has squared norm tr[A†A]. The per-time register is `(tK.in, tK.out)` with
//! the input leg fastest: the amplitude at `(in = n, out = p)` is `A[p, n]`.
//! Contracting a flutter with a unit-norm process uses the supernormalized
//! vector, `d_S^{k/2}` times the raw one, so that unitary sequences have Born
//! weight one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::linalg::{eigh, kron_vec, random_hermitian};
use crate::qcore::{check_cap, CMat, CVec, PureState, Register, Role, Subsystem, C64, TOL_STRUCT};

#[derive(Clone, Debug)]
pub struct RankOneInstrument {
    pub kraus: CMat,
    pub outcome_label: String,
    pub family_id: Option<String>,
}

impl RankOneInstrument {
    /// Validates squareness and that the operator never increases norms.
    pub fn new(kraus: CMat, outcome_label: impl Into<String>) -> Result<Self> {
        if kraus.nrows() != kraus.ncols() || kraus.nrows() == 0 {
            return Err(Error::dims("instrument matrix must be square"));
        }
        let smax = kraus.singular_values().iter().cloned().fold(0.0, f64::max);
        if smax > 1.0 + TOL_STRUCT {
            return Err(Error::arg(format!("instrument increases norm (largest singular value {smax})")));
        }
        Ok(RankOneInstrument {
            kraus,
            outcome_label: outcome_label.into(),
            family_id: None,
        })
    }

    pub fn with_family(mut self, family: impl Into<String>) -> Self {
        self.family_id = Some(family.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.kraus.nrows()
    }

    pub fn identity(d: usize) -> Self {
        RankOneInstrument::new(CMat::identity(d, d), "id").expect("identity is valid")
    }

    pub fn is_unitary(&self) -> bool {
        crate::qcore::is_unitary(&self.kraus, TOL_STRUCT)
    }

    /// Measure |m⟩ and prepare `prep`.
    pub fn measure_prepare(d: usize, m: usize, prep: &CVec, label: impl Into<String>) -> Result<Self> {
        if m >= d || prep.len() != d {
            return Err(Error::dims("measure/prepare indices out of range"));
        }
        let n = prep.norm();
        let mut bra = CVec::zeros(d);
        bra[m] = C64::new(1.0, 0.0);
        RankOneInstrument::new((prep / C64::new(n, 0.0)) * bra.transpose(), label)
    }
}

/// {|n⟩⟨n|}, a complete projective family.
pub fn projective_family(d: usize) -> Vec<RankOneInstrument> {
    (0..d)
        .map(|n| {
            let mut m = CMat::zeros(d, d);
            m[(n, n)] = C64::new(1.0, 0.0);
            RankOneInstrument::new(m, format!("P{n}"))
                .expect("projector is valid")
                .with_family("computational")
        })
        .collect()
}

/// True iff Σ A†A = 𝟙 within 1e-10.
pub fn is_complete_family(family: &[RankOneInstrument]) -> bool {
    let Some(first) = family.first() else {
        return false;
    };
    let d = first.dim();
    let mut acc = CMat::zeros(d, d);
    for a in family {
        if a.dim() != d {
            return false;
        }
        acc += a.kraus.adjoint() * &a.kraus;
    }
    crate::qcore::linalg::max_abs(&(acc - CMat::identity(d, d))) < TOL_STRUCT
}

fn step_register(t: usize, d: usize) -> Vec<Subsystem> {
    vec![
        Subsystem::new(format!("t{t}.in"), d, Role::TimeIn),
        Subsystem::new(format!("t{t}.out"), d, Role::TimeOut),
    ]
}

/// Register of the butterfly space: `t1.in, t1.out, …, tk.in, tk.out`.
pub fn butterfly_register(k: usize, d_s: usize) -> Register {
    Register::new((1..=k).flat_map(|t| step_register(t, d_s)).collect()).expect("labels are unique")
}

/// Raw vector (A ⊗ 𝟙)Σ|nn⟩ on (in, out), input leg fastest.
fn raw_choi_vec(a: &CMat) -> CVec {
    let d = a.nrows();
    CVec::from_fn(d * d, |idx, _| {
        let n = idx % d;
        let p = idx / d;
        a[(p, n)]
    })
}

/// Single-time Choi vector on the register `(t1.in, t1.out)`.
pub fn choi_of_instrument(a: &RankOneInstrument) -> Result<PureState> {
    if a.kraus.nrows() != a.kraus.ncols() {
        return Err(Error::dims("non-square instrument"));
    }
    let reg = Register::new(step_register(1, a.dim()))?;
    PureState::new(reg, raw_choi_vec(&a.kraus))
}

#[derive(Clone, Debug)]
pub struct ButterflyFlutter {
    pub steps: Vec<RankOneInstrument>,
    pub choi: PureState,
}

impl ButterflyFlutter {
    pub fn k(&self) -> usize {
        self.steps.len()
    }

    pub fn d_s(&self) -> usize {
        self.steps[0].dim()
    }

    /// The vector used against unit-norm processes: raw Choi times d_S^{k/2}.
    pub fn supernormalized(&self) -> PureState {
        self.choi.scaled((self.d_s() as f64).powf(self.k() as f64 / 2.0))
    }

    pub fn is_unitary(&self) -> bool {
        self.steps.iter().all(|s| s.is_unitary())
    }

    pub fn id(&self) -> String {
        self.steps
            .iter()
            .map(|s| s.outcome_label.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Multitime Choi vector of a sequence of instruments (step 1 first).
pub fn flutter_choi(steps: Vec<RankOneInstrument>) -> Result<ButterflyFlutter> {
    let Some(first) = steps.first() else {
        return Err(Error::arg("a flutter needs at least one step"));
    };
    let d = first.dim();
    if steps.iter().any(|s| s.dim() != d) {
        return Err(Error::dims("all flutter steps must share d_S"));
    }
    let k = steps.len();
    check_cap(d.pow(2 * k as u32))?;
    let mut v = CVec::from_element(1, C64::new(1.0, 0.0));
    for s in &steps {
        v = kron_vec(&raw_choi_vec(&s.kraus), &v);
    }
    let choi = PureState::new(butterfly_register(k, d), v)?;
    Ok(ButterflyFlutter { steps, choi })
}

/// Generalized Paulis X^a Z^b, listed with index a + d·b.
pub fn generalized_paulis(d: usize) -> Result<Vec<CMat>> {
    if d < 2 {
        return Err(Error::arg("generalized Paulis need d >= 2"));
    }
    let x = CMat::from_fn(d, d, |r, c| if r == (c + 1) % d { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let w = 2.0 * std::f64::consts::PI / d as f64;
    let z = CMat::from_fn(d, d, |r, c| {
        if r == c {
            C64::from_polar(1.0, w * r as f64)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let pow = |m: &CMat, e: usize| (0..e).fold(CMat::identity(d, d), |acc, _| acc * m);
    let mut out = Vec::with_capacity(d * d);
    for b in 0..d {
        for a in 0..d {
            out.push(pow(&x, a) * pow(&z, b));
        }
    }
    Ok(out)
}

/// Basis of multitime unitary butterflies: d_S^{2k} elements, one generalized
/// Pauli per time, ordered lexicographically with time 1 most significant.
/// Raw Gram matrix is d_S^k·𝟙; supernormalized Gram is d_B·𝟙.
pub fn butterfly_basis(k: usize, d_s: usize) -> Result<Vec<ButterflyFlutter>> {
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    let n = d_s.checked_pow(2 * k as u32).ok_or(Error::CapExceeded {
        needed: usize::MAX,
        cap: crate::qcore::amplitude_cap(),
    })?;
    check_cap(n.saturating_mul(n))?;
    let paulis = generalized_paulis(d_s)?;
    let p = paulis.len();
    let mut out = Vec::with_capacity(n);
    for idx in 0..n {
        // digits with time 1 as the most significant position
        let mut digits = vec![0; k];
        let mut rem = idx;
        for t in (0..k).rev() {
            digits[t] = rem % p;
            rem /= p;
        }
        let steps = digits
            .iter()
            .map(|&i| {
                RankOneInstrument::new(paulis[i].clone(), format!("P{i}")).map(|s| s.with_family("pauli"))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(flutter_choi(steps)?);
    }
    Ok(out)
}

/// Basis of H_B ⊗ H_{R1}: supernormalized butterflies tensored with the
/// computational basis of a final leg of dimension `d_r1` (final leg slow).
pub fn butterfly_basis_with_final(k: usize, d_s: usize, d_r1: usize) -> Result<Vec<CVec>> {
    let base = butterfly_basis(k, d_s)?;
    check_cap((base.len() * d_r1).saturating_mul(base.len() * d_r1))?;
    let mut out = Vec::with_capacity(base.len() * d_r1);
    for f in &base {
        let v = f.supernormalized().into_amplitudes();
        for r in 0..d_r1 {
            let mut e = CVec::zeros(d_r1);
            e[r] = C64::new(1.0, 0.0);
            out.push(kron_vec(&e, &v));
        }
    }
    Ok(out)
}

/// Unitary W with |tr W| = (1−ε)·d_S, from a seeded random generator T and a
/// scale s solving |tr e^{−isT}| = (1−ε)d_S (smallest positive root).
pub fn weak_unitary(epsilon: f64, d_s: usize, seed: u64) -> Result<CMat> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::arg("epsilon must lie in (0, 1)"));
    }
    if d_s < 2 {
        return Err(Error::arg("d_S must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = random_hermitian(d_s, &mut rng);
    let (vals, vecs) = eigh(&t);
    let target = 1.0 - epsilon;
    let f = |s: f64| -> f64 {
        let tr: C64 = vals.iter().map(|l| C64::from_polar(1.0, -s * l)).sum();
        tr.norm() / d_s as f64 - target
    };
    let spread = vals.last().unwrap() - vals.first().unwrap();
    if spread <= 0.0 {
        return Err(Error::NoRoot("degenerate generator".into()));
    }
    let step = 0.01 / spread;
    let s_max = 200.0 / spread;
    let mut lo = 0.0;
    let mut hi = step;
    while f(hi) > 0.0 {
        lo = hi;
        hi += step;
        if hi > s_max {
            return Err(Error::NoRoot(format!("epsilon {epsilon} unreachable for this generator")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
    }
    let s = 0.5 * (lo + hi);
    let diag = CMat::from_diagonal(&CVec::from_iterator(d_s, vals.iter().map(|l| C64::from_polar(1.0, -s * l))));
    Ok(&vecs * diag * vecs.adjoint())
}

/// JSON form of an instrument: matrix as nested rows of `[re, im]` pairs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InstrumentSpec {
    pub kraus: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub outcome_label: String,
    #[serde(default)]
    pub family_id: Option<String>,
}

pub fn matrix_to_json(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &[Vec<[f64; 2]>]) -> Result<CMat> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::dims("matrix must be square and nonempty"));
    }
    Ok(CMat::from_fn(n, n, |r, c| C64::new(rows[r][c][0], rows[r][c][1])))
}

impl InstrumentSpec {
    pub fn from_instrument(a: &RankOneInstrument) -> Self {
        InstrumentSpec {
            kraus: matrix_to_json(&a.kraus),
            outcome_label: a.outcome_label.clone(),
            family_id: a.family_id.clone(),
        }
    }

    pub fn to_instrument(&self) -> Result<RankOneInstrument> {
        let mut a = RankOneInstrument::new(matrix_from_json(&self.kraus)?, self.outcome_label.clone())?;
        a.family_id = self.family_id.clone();
        Ok(a)
    }
}
