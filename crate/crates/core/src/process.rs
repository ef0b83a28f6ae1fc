//! Pure process Choi states, conditioning on flutters and Born weights.
//!
//! Each step swaps the current system content into a fresh `in` leg, puts the
//! system into a normalized maximally entangled pair with the `out` leg, and
//! then applies the global step unitary. The resulting register is
//! `t1.in, t1.out, …, tk.in, tk.out` followed by the final system and
//! environment sites, then any spectator (reference) subsystems of the initial
//! state, which the dynamics never touch.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instruments::{butterfly_register, ButterflyFlutter};
use crate::qcore::{
    amplitude_cap, check_cap, is_unitary, partial_trace, CMat, CVec, DensityOperator, PureState, Register, Role,
    Subsystem, C64, TOL_STRUCT,
};

#[derive(Clone, Debug)]
pub struct PureProcess {
    choi: PureState,
    k: usize,
    d_s: usize,
    d_e: usize,
    pub dynamics_id: String,
    pub time_labels: Vec<String>,
    s_label: String,
    site_labels: Vec<String>,
    spectator_labels: Vec<String>,
}

/// Serializable summary echoed into experiment outputs.
#[derive(Clone, Debug, Serialize)]
pub struct ProcessMeta {
    pub k: usize,
    pub d_s: usize,
    pub d_e: usize,
    pub dynamics_id: String,
}

impl PureProcess {
    pub fn choi(&self) -> &PureState {
        &self.choi
    }

    pub fn register(&self) -> &Register {
        self.choi.register()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d_s(&self) -> usize {
        self.d_s
    }

    pub fn d_e(&self) -> usize {
        self.d_e
    }

    pub fn d_b(&self) -> usize {
        self.d_s.pow(2 * self.k as u32)
    }

    /// Butterfly legs in register order.
    pub fn b_labels(&self) -> Vec<String> {
        self.choi.register().labels()[..2 * self.k].to_vec()
    }

    /// Final system and environment sites, in register (chain) order.
    pub fn r_labels(&self) -> Vec<String> {
        self.site_labels.clone()
    }

    pub fn s_label(&self) -> &str {
        &self.s_label
    }

    pub fn spectator_labels(&self) -> &[String] {
        &self.spectator_labels
    }

    pub fn meta(&self) -> ProcessMeta {
        ProcessMeta {
            k: self.k,
            d_s: self.d_s,
            d_e: self.d_e,
            dynamics_id: self.dynamics_id.clone(),
        }
    }
}

/// Splits the initial register into acted-on sites (S and E) and spectators.
fn site_layout(initial: &PureState) -> Result<(Vec<String>, Vec<String>, String)> {
    let reg = initial.register();
    let mut sites = Vec::new();
    let mut spect = Vec::new();
    let mut s_label = None;
    for s in reg.subsystems() {
        match s.role {
            Role::S => {
                if s_label.is_some() {
                    return Err(Error::arg("initial register must contain exactly one S site"));
                }
                s_label = Some(s.label.clone());
                sites.push(s.label.clone());
            }
            Role::E => sites.push(s.label.clone()),
            Role::Ancilla => spect.push(s.label.clone()),
            _ => return Err(Error::arg(format!("unexpected role for initial subsystem `{}`", s.label))),
        }
    }
    let s_label = s_label.ok_or_else(|| Error::arg("initial register has no S site"))?;
    Ok((sites, spect, s_label))
}

/// Builds |Υ⟩ from an initial state on S⊗E (plus optional spectators) and k
/// step unitaries on S⊗E. Step j applies the intervention slot, then U_j.
pub fn build_process(initial: &PureState, unitaries: &[CMat], dynamics_id: &str) -> Result<PureProcess> {
    if (initial.norm_sqr() - 1.0).abs() > TOL_STRUCT {
        return Err(Error::arg("initial state must have unit norm"));
    }
    let (sites, spect, s_label) = site_layout(initial)?;
    let k = unitaries.len();
    if k == 0 {
        return Err(Error::arg("at least one step unitary is required"));
    }
    let mut order = sites.clone();
    order.extend(spect.iter().cloned());
    let init = initial.permuted(&order)?;
    let site_reg = init.register().select(&sites)?;
    let d_r = site_reg.total_dim();
    let d_q = init.register().total_dim() / d_r;
    let s_pos = site_reg.position(&s_label)?;
    let d_s = site_reg.subsystems()[s_pos].dim;
    let st_s = site_reg.strides()[s_pos];
    for (i, u) in unitaries.iter().enumerate() {
        if u.nrows() != d_r || u.ncols() != d_r {
            return Err(Error::dims(format!("step unitary {} is {}x{}, expected {d_r}", i + 1, u.nrows(), u.ncols())));
        }
        if !is_unitary(u, 1e-9) {
            return Err(Error::arg(format!("step unitary {} is not unitary", i + 1)));
        }
    }
    let final_size = (d_s as u128).pow(2 * k as u32) * (d_r as u128) * (d_q as u128);
    if final_size > amplitude_cap() as u128 {
        return Err(Error::CapExceeded {
            needed: usize::try_from(final_size).unwrap_or(usize::MAX),
            cap: amplitude_cap(),
        });
    }

    let init_reg = init.register().clone();
    let mut amps = init.into_amplitudes();
    let mut d_b = 1usize;
    let inv = C64::new(1.0 / (d_s as f64).sqrt(), 0.0);
    for u in unitaries {
        let d_b2 = d_b * d_s * d_s;
        check_cap(d_b2 * d_r * d_q)?;
        let mut next = CVec::zeros(d_b2 * d_r * d_q);
        for q in 0..d_q {
            for r in 0..d_r {
                let o = (r / st_s) % d_s;
                let r_base = r - o * st_s;
                for i in 0..d_s {
                    let old_r = r_base + i * st_s;
                    let src = d_b * (old_r + d_r * q);
                    let dst = d_b2 * (r + d_r * q) + d_b * (i + d_s * o);
                    for b in 0..d_b {
                        next[dst + b] = amps[src + b] * inv;
                    }
                }
            }
        }
        // apply U on the site index: each q block is a (d_b2 x d_r) column-major matrix
        let ut = u.transpose();
        for q in 0..d_q {
            let off = d_b2 * d_r * q;
            let block = CMat::from_column_slice(d_b2, d_r, &next.as_slice()[off..off + d_b2 * d_r]);
            let res = block * &ut;
            next.as_mut_slice()[off..off + d_b2 * d_r].copy_from_slice(res.as_slice());
        }
        amps = next;
        d_b = d_b2;
    }

    let reg = butterfly_register(k, d_s).concat(&init_reg)?;
    let choi = PureState::new(reg, amps)?;
    let d_e = d_r / d_s;
    Ok(PureProcess {
        choi,
        k,
        d_s,
        d_e,
        dynamics_id: dynamics_id.to_string(),
        time_labels: (1..=k).map(|t| format!("t{t}")).collect(),
        s_label,
        site_labels: sites,
        spectator_labels: spect,
    })
}

#[derive(Clone, Debug)]
pub struct ConditionalOutcome {
    /// Unit-norm state on the sites (and spectators); zero when `null`.
    pub state: PureState,
    pub probability: f64,
    pub flutter_id: String,
    pub null: bool,
}

const NULL_PROBABILITY: f64 = 1e-28;

fn check_flutter(proc: &PureProcess, flutter: &ButterflyFlutter) -> Result<()> {
    if flutter.k() != proc.k || flutter.d_s() != proc.d_s {
        return Err(Error::dims(format!(
            "flutter (k={}, d_S={}) does not match process (k={}, d_S={})",
            flutter.k(),
            flutter.d_s(),
            proc.k,
            proc.d_s
        )));
    }
    Ok(())
}

/// Unnormalized projection Σ_b x_b Υ_{b,r} with the supernormalized flutter.
pub fn project(proc: &PureProcess, flutter: &ButterflyFlutter) -> Result<PureState> {
    check_flutter(proc, flutter)?;
    let x = flutter.supernormalized().into_amplitudes();
    let d_b = x.len();
    let amps = proc.choi.amplitudes();
    let rest = amps.len() / d_b;
    let out = CVec::from_fn(rest, |r, _| {
        let col = &amps.as_slice()[r * d_b..(r + 1) * d_b];
        col.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
    });
    let labels = proc.choi.register().labels();
    let reg = proc.choi.register().select(&labels[2 * proc.k..])?;
    PureState::new(reg, out)
}

/// Conditional output state and its probability for a flutter.
pub fn condition(proc: &PureProcess, flutter: &ButterflyFlutter) -> Result<ConditionalOutcome> {
    let raw = project(proc, flutter)?;
    let p = raw.norm_sqr();
    if p < NULL_PROBABILITY {
        return Ok(ConditionalOutcome {
            state: raw.scaled(0.0),
            probability: 0.0,
            flutter_id: flutter.id(),
            null: true,
        });
    }
    Ok(ConditionalOutcome {
        state: raw.normalized()?,
        probability: p,
        flutter_id: flutter.id(),
        null: false,
    })
}

/// Conditional state computed by direct evolution, ψ ← U_j (A_j ⊗ 𝟙) ψ,
/// without materializing the Choi state. Used where d_B is too large.
pub fn condition_direct(initial: &PureState, unitaries: &[CMat], instruments: &[CMat]) -> Result<ConditionalOutcome> {
    if unitaries.len() != instruments.len() {
        return Err(Error::dims("one instrument per step required"));
    }
    let (sites, spect, s_label) = site_layout(initial)?;
    let mut order = sites.clone();
    order.extend(spect);
    let mut psi = initial.permuted(&order)?;
    for (u, a) in unitaries.iter().zip(instruments) {
        psi = crate::qcore::apply_local(a, &[s_label.as_str()], &psi)?;
        psi = crate::qcore::apply_local(u, &sites, &psi)?;
    }
    let p = psi.norm_sqr();
    if p < NULL_PROBABILITY {
        return Ok(ConditionalOutcome {
            state: psi.scaled(0.0),
            probability: 0.0,
            flutter_id: String::new(),
            null: true,
        });
    }
    Ok(ConditionalOutcome {
        state: psi.normalized()?,
        probability: p,
        flutter_id: String::new(),
        null: false,
    })
}

/// Υ_B = tr_R |Υ⟩⟨Υ|.
pub fn reduced_process(proc: &PureProcess) -> Result<DensityOperator> {
    partial_trace(&proc.choi, &proc.b_labels())
}

/// tr[Υ_B (|x⟩⟨x|)ᵀ] with the supernormalized flutter vector.
pub fn born_weight(upsilon_b: &DensityOperator, flutter: &ButterflyFlutter) -> Result<f64> {
    let x = flutter.supernormalized().into_amplitudes();
    if x.len() != upsilon_b.matrix().nrows() {
        return Err(Error::dims("flutter does not match the butterfly space"));
    }
    let xc = x.map(|z| z.conj());
    Ok(upsilon_b.sandwich(&xc, &xc)?.re)
}

/// Register of `n` chain sites `r0..`, with `s_site` carrying role S.
pub fn chain_register(n: usize, d: usize, s_site: usize) -> Result<Register> {
    if s_site >= n {
        return Err(Error::arg("S site outside the chain"));
    }
    Register::new(
        (0..n)
            .map(|i| Subsystem::new(format!("r{i}"), d, if i == s_site { Role::S } else { Role::E }))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::{flutter_choi, projective_family, RankOneInstrument};
    use crate::qcore::linalg::{kron, max_abs, random_state};
    use crate::qcore::{apply_local, inner};
    use crate::randomness::haar_unitary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn swap() -> CMat {
        let mut m = CMat::zeros(4, 4);
        for a in 0..2 {
            for b in 0..2 {
                m[(b + 2 * a, a + 2 * b)] = c(1.0);
            }
        }
        m
    }

    fn two_sites() -> Register {
        chain_register(2, 2, 0).unwrap()
    }

    #[test]
    fn identity_process_structure() {
        let init = PureState::basis(two_sites(), &[0, 0]).unwrap();
        let p = build_process(&init, &[CMat::identity(4, 4)], "id").unwrap();
        assert!((p.choi().norm_sqr() - 1.0).abs() < 1e-12);
        assert_eq!(p.register().labels(), vec!["t1.in", "t1.out", "r0", "r1"]);
        // in leg holds |0>, out is paired with the final S site
        let h = 1.0 / 2f64.sqrt();
        let a = p.choi().amplitudes();
        // index = in + 2 out + 4 r0 + 8 r1
        assert!((a[0] - c(h)).norm() < 1e-15);
        assert!((a[2 + 4] - c(h)).norm() < 1e-15);
        assert!((a.norm_squared() - 1.0).abs() < 1e-15);
        // the last out leg is always paired with R, so Υ_B has entropy ln d_S
        let ub = reduced_process(&p).unwrap();
        assert!((ub.purity() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn swap_moves_prepared_state_to_environment() {
        let init = PureState::basis(two_sites(), &[0, 0]).unwrap();
        let p = build_process(&init, &[swap()], "swap").unwrap();
        for m in 0..2 {
            let mut prep = CVec::zeros(2);
            prep[m] = c(1.0);
            let a = RankOneInstrument::measure_prepare(2, 0, &prep, "mp").unwrap();
            let out = condition(&p, &flutter_choi(vec![a]).unwrap()).unwrap();
            assert!((out.probability - 1.0).abs() < 1e-12);
            let expect = PureState::basis(two_sites(), &[0, m]).unwrap();
            assert!((inner(&expect, &out.state).unwrap().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_flutter_returns_evolved_initial_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let init = random_state(two_sites(), &mut rng);
        let p = build_process(&init, &[CMat::identity(4, 4)], "id").unwrap();
        let f = flutter_choi(vec![RankOneInstrument::identity(2)]).unwrap();
        let out = condition(&p, &f).unwrap();
        assert!((out.probability - 1.0).abs() < 1e-12);
        assert!((inner(&init, &out.state).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditioning_matches_direct_evolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reg = Register::new(vec![
            Subsystem::new("e0", 2, Role::E),
            Subsystem::new("s", 2, Role::S),
            Subsystem::new("e1", 3, Role::E),
        ])
        .unwrap();
        let init = random_state(reg, &mut rng);
        let us: Vec<CMat> = (0..3).map(|_| haar_unitary(12, &mut rng)).collect();
        let steps: Vec<CMat> = (0..3)
            .map(|_| {
                let g = crate::qcore::linalg::random_matrix(2, &mut rng);
                g.clone() / c(g.singular_values()[0] * 1.01)
            })
            .collect();
        let p = build_process(&init, &us, "haar").unwrap();
        let f = flutter_choi(steps.iter().map(|m| RankOneInstrument::new(m.clone(), "a").unwrap()).collect()).unwrap();
        let via_choi = condition(&p, &f).unwrap();
        let direct = condition_direct(&init, &us, &steps).unwrap();
        assert!((via_choi.probability - direct.probability).abs() < 1e-12);
        assert!((inner(&via_choi.state, &direct.state).unwrap().norm() - 1.0).abs() < 1e-10);
        // hand-rolled evolution as an independent check
        let mut psi = init.clone();
        for (u, a) in us.iter().zip(&steps) {
            psi = apply_local(a, &["s"], &psi).unwrap();
            psi = apply_local(u, &["e0", "s", "e1"], &psi).unwrap();
        }
        assert!((psi.norm_sqr() - direct.probability).abs() < 1e-12);
    }

    #[test]
    fn projective_probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let init = random_state(chain_register(3, 2, 1).unwrap(), &mut rng);
        let us: Vec<CMat> = (0..2).map(|_| haar_unitary(8, &mut rng)).collect();
        let p = build_process(&init, &us, "haar").unwrap();
        let fam = projective_family(2);
        let mut total = 0.0;
        for a in &fam {
            for b in &fam {
                let f = flutter_choi(vec![a.clone(), b.clone()]).unwrap();
                total += condition(&p, &f).unwrap().probability;
            }
        }
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn born_weight_matches_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let init = random_state(two_sites(), &mut rng);
            let us: Vec<CMat> = (0..2).map(|_| haar_unitary(4, &mut rng)).collect();
            let p = build_process(&init, &us, "haar").unwrap();
            let ub = reduced_process(&p).unwrap();
            let steps: Vec<RankOneInstrument> = (0..2)
                .map(|_| {
                    let g = crate::qcore::linalg::random_matrix(2, &mut rng);
                    RankOneInstrument::new(g.clone() / c(g.singular_values()[0]), "g").unwrap()
                })
                .collect();
            let f = flutter_choi(steps).unwrap();
            let w = born_weight(&ub, &f).unwrap();
            let pr = condition(&p, &f).unwrap().probability;
            assert!((w - pr).abs() < 1e-10);
            assert!((-1e-12..=1.0 + 1e-10).contains(&w));
        }
    }

    #[test]
    fn unitary_sequence_on_noiseless_limit_has_unit_weight() {
        let d_b = 4;
        let reg = butterfly_register(1, 2);
        let ub = DensityOperator::new(reg, CMat::identity(d_b, d_b) * c(0.25)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = haar_unitary(2, &mut rng);
        let f = flutter_choi(vec![RankOneInstrument::new(u, "u").unwrap()]).unwrap();
        assert!((born_weight(&ub, &f).unwrap() - 1.0).abs() < 1e-12);
        let zero = flutter_choi(vec![RankOneInstrument::new(CMat::zeros(2, 2), "0").unwrap()]).unwrap();
        assert_eq!(born_weight(&ub, &zero).unwrap(), 0.0);
    }

    #[test]
    fn conditional_overlap_identity() {
        // ⟨Υ_{R|x}|Υ_{R|y}⟩ (unnormalized) = ⟨y*|Υ_B|x*⟩ with supernormalized vectors
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let init = random_state(chain_register(3, 2, 0).unwrap(), &mut rng);
            let us: Vec<CMat> = (0..2).map(|_| haar_unitary(8, &mut rng)).collect();
            let p = build_process(&init, &us, "haar").unwrap();
            let ub = reduced_process(&p).unwrap();
            let mk = |rng: &mut ChaCha8Rng| {
                flutter_choi(
                    (0..2)
                        .map(|_| RankOneInstrument::new(haar_unitary(2, rng), "u").unwrap())
                        .collect(),
                )
                .unwrap()
            };
            let x = mk(&mut rng);
            let y = mk(&mut rng);
            let px = project(&p, &x).unwrap();
            let py = project(&p, &y).unwrap();
            let lhs = inner(&px, &py).unwrap();
            let xc = x.supernormalized().into_amplitudes().map(|z| z.conj());
            let yc = y.supernormalized().into_amplitudes().map(|z| z.conj());
            let rhs = ub.sandwich(&yc, &xc).unwrap();
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn inserting_identity_steps_is_a_gauge() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let init = random_state(two_sites(), &mut rng);
        let u = haar_unitary(4, &mut rng);
        let one = build_process(&init, std::slice::from_ref(&u), "u").unwrap();
        let two = build_process(&init, &[u.clone(), CMat::identity(4, 4)], "u,id").unwrap();
        let id = RankOneInstrument::identity(2);
        let a = condition(&one, &flutter_choi(vec![id.clone()]).unwrap()).unwrap();
        let b = condition(&two, &flutter_choi(vec![id.clone(), id]).unwrap()).unwrap();
        assert!((inner(&a.state, &b.state).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectators_are_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reg = Register::new(vec![
            Subsystem::new("s", 2, Role::S),
            Subsystem::new("e", 2, Role::E),
            Subsystem::new("q", 2, Role::Ancilla),
        ])
        .unwrap();
        let init = random_state(reg, &mut rng);
        let u = haar_unitary(4, &mut rng);
        let p = build_process(&init, &[u], "u").unwrap();
        assert_eq!(p.spectator_labels(), &["q".to_string()]);
        let before = partial_trace(&init, &["q"]).unwrap();
        let after = partial_trace(p.choi(), &["q"]).unwrap();
        assert!(max_abs(&(before.matrix() - after.matrix())) < 1e-12);
    }

    #[test]
    fn build_errors() {
        let init = PureState::basis(two_sites(), &[0, 0]).unwrap();
        assert!(build_process(&init, &[CMat::identity(3, 3)], "bad").is_err());
        assert!(build_process(&init, &[], "none").is_err());
        let nonu = CMat::identity(4, 4) * c(0.5);
        assert!(build_process(&init, &[nonu], "bad").is_err());
        let _ = kron(&CMat::identity(1, 1), &CMat::identity(1, 1));
    }

    #[test]
    fn null_outcome_is_flagged() {
        let init = PureState::basis(two_sites(), &[0, 0]).unwrap();
        let p = build_process(&init, &[CMat::identity(4, 4)], "id").unwrap();
        let p1 = projective_family(2).remove(1);
        let out = condition(&p, &flutter_choi(vec![p1]).unwrap()).unwrap();
        assert!(out.null);
        assert_eq!(out.probability, 0.0);
    }
}
