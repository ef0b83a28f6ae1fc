//! Dense register arithmetic: index maps, local operators, partial traces.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod linalg;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Structural tolerance for predicates on exact constructions.
pub const TOL_STRUCT: f64 = 1e-10;
/// Tolerance for quantities accumulated over multi-step pipelines.
pub const TOL_PIPELINE: f64 = 1e-8;
/// Eigenvalues below this are dropped before taking logarithms.
pub const EIG_FLOOR: f64 = 1e-12;

pub const DEFAULT_AMPLITUDE_CAP: usize = 1 << 24;

static AMPLITUDE_CAP: AtomicUsize = AtomicUsize::new(DEFAULT_AMPLITUDE_CAP);

/// Current hard cap on the number of amplitudes in any dense object.
pub fn amplitude_cap() -> usize {
    AMPLITUDE_CAP.load(Ordering::Relaxed)
}

/// Sets the process-wide amplitude cap. Intended to be called once at startup.
pub fn set_amplitude_cap(cap: usize) {
    AMPLITUDE_CAP.store(cap.max(1), Ordering::Relaxed);
}

pub fn check_cap(needed: usize) -> Result<()> {
    let cap = amplitude_cap();
    if needed > cap {
        Err(Error::CapExceeded { needed, cap })
    } else {
        Ok(())
    }
}

/// Product of dimensions with overflow and cap checks.
pub fn checked_product(dims: impl IntoIterator<Item = usize>) -> Result<usize> {
    let mut p: usize = 1;
    for d in dims {
        p = p.checked_mul(d).ok_or(Error::CapExceeded {
            needed: usize::MAX,
            cap: amplitude_cap(),
        })?;
    }
    check_cap(p)?;
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    S,
    E,
    TimeIn,
    TimeOut,
    Ancilla,
    R1,
    R2,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Subsystem {
    pub label: String,
    pub dim: usize,
    pub role: Role,
}

impl Subsystem {
    pub fn new(label: impl Into<String>, dim: usize, role: Role) -> Self {
        Subsystem {
            label: label.into(),
            dim,
            role,
        }
    }
}

/// Ordered list of labelled subsystems. The first one is the fastest index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Register {
    subsystems: Vec<Subsystem>,
}

impl Register {
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Self> {
        for (i, s) in subsystems.iter().enumerate() {
            if s.dim == 0 {
                return Err(Error::arg(format!("subsystem `{}` has dimension 0", s.label)));
            }
            if subsystems[..i].iter().any(|t| t.label == s.label) {
                return Err(Error::DuplicateLabel(s.label.clone()));
            }
        }
        let n_in = subsystems.iter().filter(|s| s.role == Role::TimeIn).count();
        let n_out = subsystems.iter().filter(|s| s.role == Role::TimeOut).count();
        if n_in != n_out {
            return Err(Error::arg("time_in and time_out legs must come in pairs"));
        }
        Ok(Register { subsystems })
    }

    /// `n` subsystems of dimension `d` labelled `{prefix}{i}`.
    pub fn uniform(prefix: &str, n: usize, d: usize, role: Role) -> Result<Self> {
        Register::new(
            (0..n)
                .map(|i| Subsystem::new(format!("{prefix}{i}"), d, role))
                .collect(),
        )
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.dim).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.subsystems.iter().map(|s| s.label.clone()).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.subsystems.iter().map(|s| s.dim).product()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn positions<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(labels.len());
        for l in labels {
            let p = self.position(l.as_ref())?;
            if out.contains(&p) {
                return Err(Error::DuplicateLabel(l.as_ref().to_string()));
            }
            out.push(p);
        }
        Ok(out)
    }

    pub fn dim_of<S: AsRef<str>>(&self, labels: &[S]) -> Result<usize> {
        Ok(self
            .positions(labels)?
            .into_iter()
            .map(|p| self.subsystems[p].dim)
            .product())
    }

    pub fn labels_with_role(&self, role: Role) -> Vec<String> {
        self.subsystems
            .iter()
            .filter(|s| s.role == role)
            .map(|s| s.label.clone())
            .collect()
    }

    /// Strides of the little-endian index map.
    pub fn strides(&self) -> Vec<usize> {
        let mut st = Vec::with_capacity(self.len());
        let mut acc = 1;
        for s in &self.subsystems {
            st.push(acc);
            acc *= s.dim;
        }
        st
    }

    /// Sub-register of the given labels, in the given order.
    pub fn select<S: AsRef<str>>(&self, labels: &[S]) -> Result<Register> {
        let pos = self.positions(labels)?;
        Ok(Register {
            subsystems: pos.into_iter().map(|p| self.subsystems[p].clone()).collect(),
        })
    }

    /// Labels not in `labels`, in register order.
    pub fn complement<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<String>> {
        let pos = self.positions(labels)?;
        Ok(self
            .subsystems
            .iter()
            .enumerate()
            .filter(|(i, _)| !pos.contains(i))
            .map(|(_, s)| s.label.clone())
            .collect())
    }

    pub fn concat(&self, other: &Register) -> Result<Register> {
        let mut subs = self.subsystems.clone();
        subs.extend(other.subsystems.iter().cloned());
        Register::new(subs)
    }

    pub fn with_role(&self, label: &str, role: Role) -> Result<Register> {
        let p = self.position(label)?;
        let mut subs = self.subsystems.clone();
        subs[p].role = role;
        Ok(Register { subsystems: subs })
    }

    /// Flat offsets of the multi-index over `positions`, enumerated little-endian
    /// in the order given.
    pub fn offsets(&self, positions: &[usize]) -> Vec<usize> {
        let strides = self.strides();
        let mut offs = vec![0usize];
        for &p in positions {
            let d = self.subsystems[p].dim;
            let s = strides[p];
            let mut next = Vec::with_capacity(offs.len() * d);
            for i in 0..d {
                next.extend(offs.iter().map(|o| o + i * s));
            }
            offs = next;
        }
        offs
    }

    fn complement_positions(&self, positions: &[usize]) -> Vec<usize> {
        (0..self.len()).filter(|i| !positions.contains(i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormClass {
    Unit,
    Subnormalized,
    Supernormalized,
}

impl NormClass {
    pub fn classify(norm_sqr: f64) -> NormClass {
        if (norm_sqr - 1.0).abs() < TOL_STRUCT {
            NormClass::Unit
        } else if norm_sqr < 1.0 {
            NormClass::Subnormalized
        } else {
            NormClass::Supernormalized
        }
    }
}

#[derive(Clone, Debug)]
pub struct PureState {
    register: Register,
    amps: CVec,
    norm_class: NormClass,
}

impl PureState {
    pub fn new(register: Register, amps: CVec) -> Result<Self> {
        check_cap(amps.len())?;
        if amps.len() != register.total_dim() {
            return Err(Error::dims(format!(
                "{} amplitudes for register of dimension {}",
                amps.len(),
                register.total_dim()
            )));
        }
        let norm_class = NormClass::classify(amps.norm_squared());
        Ok(PureState {
            register,
            amps,
            norm_class,
        })
    }

    pub fn from_vec(register: Register, amps: Vec<C64>) -> Result<Self> {
        Self::new(register, CVec::from_vec(amps))
    }

    /// Computational basis state with the given digit per subsystem.
    pub fn basis(register: Register, digits: &[usize]) -> Result<Self> {
        if digits.len() != register.len() {
            return Err(Error::dims("one digit per subsystem required"));
        }
        let n = checked_product(register.dims())?;
        let mut idx = 0;
        for ((d, s), st) in digits.iter().zip(register.subsystems()).zip(register.strides()) {
            if *d >= s.dim {
                return Err(Error::arg(format!("digit {d} out of range for `{}`", s.label)));
            }
            idx += d * st;
        }
        let mut amps = CVec::zeros(n);
        amps[idx] = C64::new(1.0, 0.0);
        Self::new(register, amps)
    }

    /// Tensor product of single-subsystem vectors, one per subsystem in order.
    pub fn product(register: Register, factors: &[CVec]) -> Result<Self> {
        if factors.len() != register.len() {
            return Err(Error::dims("one factor per subsystem required"));
        }
        let mut v = CVec::from_element(1, C64::new(1.0, 0.0));
        for (f, s) in factors.iter().zip(register.subsystems()) {
            if f.len() != s.dim {
                return Err(Error::dims(format!("factor for `{}` has wrong length", s.label)));
            }
            v = linalg::kron_vec(f, &v);
        }
        Self::new(register, v)
    }

    pub fn register(&self) -> &Register {
        &self.register
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    pub fn into_amplitudes(self) -> CVec {
        self.amps
    }

    pub fn norm_class(&self) -> NormClass {
        self.norm_class
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.norm_squared()
    }

    pub fn scaled(&self, factor: f64) -> PureState {
        let amps = &self.amps * C64::new(factor, 0.0);
        let norm_class = NormClass::classify(amps.norm_squared());
        PureState {
            register: self.register.clone(),
            amps,
            norm_class,
        }
    }

    /// Unit-norm copy; errors on the zero vector.
    pub fn normalized(&self) -> Result<PureState> {
        let n = self.amps.norm();
        if n == 0.0 {
            return Err(Error::NullOutcome);
        }
        Ok(self.scaled(1.0 / n))
    }

    pub fn conj(&self) -> PureState {
        PureState {
            register: self.register.clone(),
            amps: self.amps.map(|z| z.conj()),
            norm_class: self.norm_class,
        }
    }

    pub fn relabel(&self, register: Register) -> Result<PureState> {
        if register.dims() != self.register.dims() {
            return Err(Error::dims("relabel must keep dimensions"));
        }
        Ok(PureState {
            register,
            amps: self.amps.clone(),
            norm_class: self.norm_class,
        })
    }

    /// `self ⊗ other` with `self` occupying the fast (leading) subsystems.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let reg = self.register.concat(&other.register)?;
        checked_product([self.amps.len(), other.amps.len()])?;
        PureState::new(reg, linalg::kron_vec(&other.amps, &self.amps))
    }

    /// Amplitudes arranged as a matrix with rows indexed by `rows` and columns
    /// by the remaining subsystems (both little-endian).
    pub fn matricize<S: AsRef<str>>(&self, rows: &[S]) -> Result<CMat> {
        let rp = self.register.positions(rows)?;
        Ok(self.matricize_positions(&rp))
    }

    pub(crate) fn matricize_positions(&self, rp: &[usize]) -> CMat {
        let cp = self.register.complement_positions(rp);
        let ro = self.register.offsets(rp);
        let co = self.register.offsets(&cp);
        CMat::from_fn(ro.len(), co.len(), |i, j| self.amps[ro[i] + co[j]])
    }

    /// Reorders subsystems to `order` (a permutation of all labels).
    pub fn permuted<S: AsRef<str>>(&self, order: &[S]) -> Result<PureState> {
        if order.len() != self.register.len() {
            return Err(Error::arg("permutation must list every label"));
        }
        let m = self.matricize(order)?;
        let reg = self.register.select(order)?;
        PureState::new(reg, CVec::from_column_slice(m.as_slice()))
    }
}

/// Applies `op` to the subsystems named in `targets`; the first target is the
/// fastest index of `op`.
pub fn apply_local<S: AsRef<str>>(op: &CMat, targets: &[S], state: &PureState) -> Result<PureState> {
    let tp = state.register.positions(targets)?;
    let dt: usize = tp.iter().map(|&p| state.register.subsystems[p].dim).product();
    if op.nrows() != dt || op.ncols() != dt {
        return Err(Error::dims(format!(
            "operator is {}x{}, targets have dimension {}",
            op.nrows(),
            op.ncols(),
            dt
        )));
    }
    let amps = apply_on_positions(op, &state.register, &tp, &state.amps);
    PureState::new(state.register.clone(), amps)
}

pub(crate) fn apply_on_positions(op: &CMat, reg: &Register, tp: &[usize], amps: &CVec) -> CVec {
    let cp = reg.complement_positions(tp);
    let to = reg.offsets(tp);
    let co = reg.offsets(&cp);
    let dt = to.len();
    let mut out = amps.clone();
    let mut buf = vec![C64::new(0.0, 0.0); dt];
    for &base in &co {
        for (t, o) in to.iter().enumerate() {
            buf[t] = amps[base + o];
        }
        for (i, o) in to.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (j, b) in buf.iter().enumerate() {
                acc += op[(i, j)] * b;
            }
            out[base + o] = acc;
        }
    }
    out
}

/// Dense matrix of `op` acting on `targets` of `register`, identity elsewhere.
pub fn embed_operator<S: AsRef<str>>(op: &CMat, targets: &[S], register: &Register) -> Result<CMat> {
    let tp = register.positions(targets)?;
    let dt: usize = tp.iter().map(|&p| register.subsystems[p].dim).product();
    if op.nrows() != dt || op.ncols() != dt {
        return Err(Error::dims("operator does not match target dimension"));
    }
    let d = register.total_dim();
    check_cap(d.saturating_mul(d))?;
    let mut out = CMat::zeros(d, d);
    for j in 0..d {
        let mut e = CVec::zeros(d);
        e[j] = C64::new(1.0, 0.0);
        out.set_column(j, &apply_on_positions(op, register, &tp, &e));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct DensityOperator {
    register: Register,
    matrix: CMat,
}

impl DensityOperator {
    /// Validates Hermiticity (1e-10) and positivity (min eigenvalue > −1e-9).
    pub fn new(register: Register, matrix: CMat) -> Result<Self> {
        let d = register.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::dims("matrix does not match register dimension"));
        }
        check_cap(d.saturating_mul(d))?;
        let scale = matrix.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let herm_err = (&matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_err > TOL_STRUCT * scale {
            return Err(Error::InvalidDensity(format!("not Hermitian (error {herm_err:e})")));
        }
        let (ev, _) = linalg::eigh(&matrix);
        if let Some(&min) = ev.first() {
            if min < -1e-9 {
                return Err(Error::InvalidDensity(format!("negative eigenvalue {min:e}")));
            }
        }
        Ok(DensityOperator { register, matrix })
    }

    pub(crate) fn new_unchecked(register: Register, matrix: CMat) -> Self {
        DensityOperator { register, matrix }
    }

    pub fn from_pure(state: &PureState) -> DensityOperator {
        let v = &state.amps;
        DensityOperator {
            register: state.register.clone(),
            matrix: v * v.adjoint(),
        }
    }

    pub fn maximally_mixed(register: Register) -> Result<Self> {
        let d = register.total_dim();
        check_cap(d.saturating_mul(d))?;
        let m = CMat::identity(d, d) * C64::new(1.0 / d as f64, 0.0);
        Ok(DensityOperator { register, matrix: m })
    }

    pub fn register(&self) -> &Register {
        &self.register
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        // tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigh(&self.matrix).0
    }

    /// ⟨a|ρ|b⟩ for vectors on the same space.
    pub fn sandwich(&self, a: &CVec, b: &CVec) -> Result<C64> {
        if a.len() != self.matrix.nrows() || b.len() != self.matrix.nrows() {
            return Err(Error::dims("vector length does not match operator"));
        }
        Ok(a.dotc(&(&self.matrix * b)))
    }
}

/// Either kind of state accepted by [`partial_trace`].
pub enum StateRef<'a> {
    Pure(&'a PureState),
    Mixed(&'a DensityOperator),
}

impl<'a> From<&'a PureState> for StateRef<'a> {
    fn from(p: &'a PureState) -> Self {
        StateRef::Pure(p)
    }
}

impl<'a> From<&'a DensityOperator> for StateRef<'a> {
    fn from(r: &'a DensityOperator) -> Self {
        StateRef::Mixed(r)
    }
}

/// Reduced density operator on `keep` (in the given order).
pub fn partial_trace<'a, S: AsRef<str>>(state: impl Into<StateRef<'a>>, keep: &[S]) -> Result<DensityOperator> {
    if keep.is_empty() {
        return Err(Error::arg("keep set must be nonempty"));
    }
    match state.into() {
        StateRef::Pure(p) => {
            let kp = p.register.positions(keep)?;
            let reg = p.register.select(keep)?;
            check_cap(reg.total_dim().saturating_mul(reg.total_dim()))?;
            let m = p.matricize_positions(&kp);
            Ok(DensityOperator::new_unchecked(reg, &m * m.adjoint()))
        }
        StateRef::Mixed(r) => {
            let kp = r.register.positions(keep)?;
            let reg = r.register.select(keep)?;
            let cp = r.register.complement_positions(&kp);
            let ko = r.register.offsets(&kp);
            let co = r.register.offsets(&cp);
            let mut out = CMat::zeros(ko.len(), ko.len());
            for (a, oa) in ko.iter().enumerate() {
                for (b, ob) in ko.iter().enumerate() {
                    let mut acc = C64::new(0.0, 0.0);
                    for c in &co {
                        acc += r.matrix[(oa + c, ob + c)];
                    }
                    out[(a, b)] = acc;
                }
            }
            Ok(DensityOperator::new_unchecked(reg, out))
        }
    }
}

/// ⟨a|b⟩; registers must be identical.
pub fn inner(a: &PureState, b: &PureState) -> Result<C64> {
    if a.register != b.register {
        return Err(Error::dims("inner product of states on different registers"));
    }
    Ok(a.amps.dotc(&b.amps))
}

/// True iff ‖m†m − 𝟙‖_max < tol.
pub fn is_unitary(m: &CMat, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let g = m.adjoint() * m;
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            if (g[(i, j)] - C64::new(target, 0.0)).norm() >= tol {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::linalg::{kron, random_state};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn pauli_x() -> CMat {
        CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
    }

    #[test]
    fn x_flips_basis_state() {
        let reg = Register::uniform("q", 1, 2, Role::S).unwrap();
        let s = PureState::basis(reg, &[0]).unwrap();
        let out = apply_local(&pauli_x(), &["q0"], &s).unwrap();
        assert_eq!(out.amplitudes()[1], c(1.0));
        assert_eq!(out.amplitudes()[0], c(0.0));
    }

    #[test]
    fn identity_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reg = Register::uniform("q", 3, 2, Role::E).unwrap();
        let s = random_state(reg, &mut rng);
        let out = apply_local(&CMat::identity(4, 4), &["q2", "q0"], &s).unwrap();
        assert_eq!(out.amplitudes(), s.amplitudes());
    }

    #[test]
    fn local_ops_compose_to_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reg = Register::uniform("q", 2, 2, Role::E).unwrap();
        let s = random_state(reg, &mut rng);
        let a = linalg::random_matrix(2, &mut rng);
        let b = linalg::random_matrix(2, &mut rng);
        let step = apply_local(&b, &["q1"], &apply_local(&a, &["q0"], &s).unwrap()).unwrap();
        // q0 is the fast index, so the joint operator is b ⊗ a in kron order
        let joint = apply_local(&kron(&b, &a), &["q0", "q1"], &s).unwrap();
        let direct = kron(&b, &a) * s.amplitudes();
        assert!((step.amplitudes() - joint.amplitudes()).norm() < 1e-12);
        assert!((step.amplitudes() - direct).norm() < 1e-12);
    }

    #[test]
    fn target_order_matters_consistently() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reg = Register::uniform("q", 3, 2, Role::E).unwrap();
        let s = random_state(reg, &mut rng);
        let a = linalg::random_matrix(2, &mut rng);
        let b = linalg::random_matrix(2, &mut rng);
        let one = apply_local(&kron(&b, &a), &["q2", "q0"], &s).unwrap();
        let two = apply_local(&kron(&a, &b), &["q0", "q2"], &s).unwrap();
        assert!((one.amplitudes() - two.amplitudes()).norm() < 1e-12);
    }

    #[test]
    fn apply_local_errors() {
        let reg = Register::uniform("q", 2, 2, Role::E).unwrap();
        let s = PureState::basis(reg, &[0, 0]).unwrap();
        assert!(matches!(apply_local(&pauli_x(), &["zz"], &s), Err(Error::UnknownLabel(_))));
        assert!(matches!(
            apply_local(&CMat::identity(3, 3), &["q0"], &s),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn bell_reduces_to_maximally_mixed() {
        let reg = Register::uniform("q", 2, 2, Role::E).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let bell = PureState::from_vec(reg, vec![c(h), c(0.0), c(0.0), c(h)]).unwrap();
        let r = partial_trace(&bell, &["q0"]).unwrap();
        assert!((r.matrix() - CMat::identity(2, 2) * c(0.5)).norm() < 1e-14);
    }

    #[test]
    fn product_reduces_to_factor() {
        let reg = Register::uniform("q", 2, 2, Role::E).unwrap();
        let a = CVec::from_vec(vec![c(0.6), C64::new(0.0, 0.8)]);
        let b = CVec::from_vec(vec![c(1.0), c(0.0)]);
        let s = PureState::product(reg, &[a.clone(), b]).unwrap();
        let r = partial_trace(&s, &["q0"]).unwrap();
        assert!((r.matrix() - &a * a.adjoint()).norm() < 1e-14);
    }

    #[test]
    fn mixed_partial_trace_matches_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reg = Register::new(vec![
            Subsystem::new("a", 2, Role::S),
            Subsystem::new("b", 3, Role::E),
            Subsystem::new("c", 2, Role::E),
        ])
        .unwrap();
        let s = random_state(reg, &mut rng);
        let rho = DensityOperator::from_pure(&s);
        let p1 = partial_trace(&s, &["c", "a"]).unwrap();
        let p2 = partial_trace(&rho, &["c", "a"]).unwrap();
        assert!((p1.matrix() - p2.matrix()).norm() < 1e-12);
        let all = partial_trace(&rho, &["a", "b", "c"]).unwrap();
        assert!((all.matrix() - rho.matrix()).norm() < 1e-14);
    }

    #[test]
    fn reduced_purity_matches_schmidt() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let reg = Register::uniform("q", 3, 2, Role::E).unwrap();
            let s = random_state(reg, &mut rng);
            let m = s.matricize(&["q1"]).unwrap();
            let sv = m.singular_values();
            let expect: f64 = sv.iter().map(|l| l.powi(4)).sum();
            let r = partial_trace(&s, &["q1"]).unwrap();
            assert!((r.purity() - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn inner_basics() {
        let reg = Register::uniform("q", 2, 2, Role::E).unwrap();
        let a = PureState::basis(reg.clone(), &[0, 1]).unwrap();
        let b = PureState::basis(reg.clone(), &[1, 1]).unwrap();
        assert_eq!(inner(&a, &b).unwrap(), c(0.0));
        assert!((inner(&a, &a).unwrap() - c(1.0)).norm() < 1e-12);
        let other = Register::uniform("p", 2, 2, Role::E).unwrap();
        let z = PureState::basis(other, &[0, 0]).unwrap();
        assert!(inner(&a, &z).is_err());
    }

    #[test]
    fn unitary_predicate() {
        let h = 1.0 / 2f64.sqrt();
        let had = CMat::from_row_slice(2, 2, &[c(h), c(h), c(h), c(-h)]);
        assert!(is_unitary(&had, 1e-12));
        let d = CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.5)]);
        assert!(!is_unitary(&d, 1e-12));
    }

    #[test]
    fn register_invariants() {
        assert!(matches!(
            Register::new(vec![Subsystem::new("a", 2, Role::S), Subsystem::new("a", 2, Role::E)]),
            Err(Error::DuplicateLabel(_))
        ));
        assert!(Register::new(vec![Subsystem::new("i", 2, Role::TimeIn)]).is_err());
        let r = Register::new(vec![
            Subsystem::new("a", 2, Role::S),
            Subsystem::new("b", 3, Role::E),
        ])
        .unwrap();
        assert_eq!(r.total_dim(), 6);
        assert_eq!(r.strides(), vec![1, 2]);
    }

    #[test]
    fn permutation_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let reg = Register::uniform("q", 3, 2, Role::E).unwrap();
        let s = random_state(reg, &mut rng);
        let p = s.permuted(&["q2", "q0", "q1"]).unwrap();
        let back = p.permuted(&["q0", "q1", "q2"]).unwrap();
        assert!((back.amplitudes() - s.amplitudes()).norm() < 1e-15);
        let r1 = partial_trace(&s, &["q2", "q0"]).unwrap();
        let r2 = partial_trace(&p, &["q2", "q0"]).unwrap();
        assert!((r1.matrix() - r2.matrix()).norm() < 1e-14);
    }

    #[test]
    fn cap_is_enforced() {
        let reg = Register::uniform("q", 30, 2, Role::E).unwrap();
        assert!(matches!(
            PureState::basis(reg, &[0; 30]),
            Err(Error::CapExceeded { .. })
        ));
    }
}
