//! Acceptance criteria 1–9. Each test prints one PASS/FAIL line with the
//! individual checks behind it, then asserts.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use multitime::bff::{bff_ancilla, bff_direct, correction_register, optimize_correction, AnsatzFamily, CorrectionAnsatz, OptimizeOptions};
use multitime::diagnostics::{
    dynamical_entropy_k, echo_typical_state, lb_echo_closed_form, local_operator_entanglement, loschmidt_echo, loschmidt_echo_with,
    pesin_relation_check, pure_density, random_butterfly_experiment, random_butterfly_on_state, weingarten_mean,
};
use multitime::entanglement::{far_first_cuts, scaling_profile, tripartite_mi, EntropyKind, ScalingClass};
use multitime::instruments::{flutter_choi, generalized_paulis, weak_unitary, ButterflyFlutter, RankOneInstrument};
use multitime::models::{
    haar_dynamics, kicked_ising, lindblad_bernoulli, random_product_states, state_chaos_construction, swap_chain, DynamicsModel,
    ExpectedClass, HaarInit, KickedIsingParams,
};
use multitime::process::{build_process, chain_register, reduced_process};
use multitime::qcore::linalg::{kron_register_order, max_abs, random_vector};
use multitime::qcore::{embed_operator, CVec};
use multitime::randomness::{closed_form_b, haar_unitary, typicality_experiment, Regime, TypicalitySetup};
use multitime::{CMat, Complex64, DensityOperator, PureState, Register, Role, Subsystem};

struct Report {
    id: u32,
    title: &'static str,
    limit: Duration,
    start: Instant,
    checks: Vec<(String, bool, String)>,
}

impl Report {
    fn new(id: u32, title: &'static str, limit_secs: u64) -> Self {
        Report {
            id,
            title,
            limit: Duration::from_secs(limit_secs),
            start: Instant::now(),
            checks: Vec::new(),
        }
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push((name.into(), pass, detail.into()));
    }

    fn finish(mut self) {
        let elapsed = self.start.elapsed();
        self.check(
            "runtime",
            elapsed <= self.limit,
            format!("{:.1}s <= {}s", elapsed.as_secs_f64(), self.limit.as_secs()),
        );
        let pass = self.checks.iter().all(|c| c.1);
        let mut text = format!(
            "\n{} criterion {} ({}) [{:.1}s]\n",
            if pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            elapsed.as_secs_f64()
        );
        for (name, ok, detail) in &self.checks {
            text.push_str(&format!("    {} {name}: {detail}\n", if *ok { "ok  " } else { "FAIL" }));
        }
        print!("{text}");
        assert!(pass, "criterion {} failed", self.id);
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn unit(v: &CVec) -> CVec {
    v / c(v.norm())
}

fn basis(d: usize, i: usize) -> CVec {
    let mut v = CVec::zeros(d);
    v[i] = c(1.0);
    v
}

fn pauli(i: usize) -> CMat {
    generalized_paulis(2).unwrap()[i].clone()
}

fn unitary_flutter(steps: &[CMat]) -> ButterflyFlutter {
    flutter_choi(
        steps
            .iter()
            .enumerate()
            .map(|(i, m)| RankOneInstrument::new(m.clone(), format!("u{i}")).unwrap())
            .collect(),
    )
    .unwrap()
}

fn x_vs_identity() -> (ButterflyFlutter, ButterflyFlutter) {
    (unitary_flutter(&[pauli(1)]), unitary_flutter(&[pauli(0)]))
}

fn local_zeta(model: &DynamicsModel, x: &ButterflyFlutter, y: &ButterflyFlutter) -> (f64, f64) {
    let p = model.process(x.k()).unwrap();
    let r = optimize_correction(&p, x, y, AnsatzFamily::Local, &OptimizeOptions::default()).unwrap();
    (r.zeta, r.identity_fidelity)
}

fn profile_of(model: &DynamicsModel, k: usize) -> (f64, ScalingClass) {
    let p = model.process(k).unwrap();
    let prof = scaling_profile(&p, &far_first_cuts(&p), EntropyKind::VonNeumann).unwrap();
    (prof.fit_slope, prof.classification)
}

fn lb_model(n: usize, k: usize, seed: u64) -> (DynamicsModel, CMat, Vec<CVec>) {
    let mut r = rng(seed);
    let l = haar_unitary(2, &mut r);
    let phis = random_product_states(n, 2, &mut r);
    (lindblad_bernoulli(n, &l, k, &phis).unwrap(), l, phis)
}

#[test]
fn criterion_1_weingarten_oracle() {
    let mut rep = Report::new(1, "Weingarten mean of random butterfly overlaps", 60);
    let reg = Register::new(vec![Subsystem::new("x", 4, Role::E)]).unwrap();
    let mixed = DensityOperator::maximally_mixed(reg).unwrap();
    let r = random_butterfly_on_state(&mixed, 2000, &[0.1], 11).unwrap();
    rep.check(
        "maximally_mixed_mean_zero",
        r.exact_mean.abs() < 1e-12 && (r.empirical_mean - r.exact_mean).abs() <= 3.0 * r.std_err + 1e-12,
        format!("empirical {:e}, exact {:e}, σ {:e}", r.empirical_mean, r.exact_mean, r.std_err),
    );
    let rho = pure_density(&unit(&random_vector(4, &mut rng(12)))).unwrap();
    let r = random_butterfly_on_state(&rho, 2000, &[0.1], 13).unwrap();
    rep.check(
        "pure_d4_exact_mean",
        (r.exact_mean - 0.8).abs() < 1e-12 && (weingarten_mean(4, 1.0) - 0.8).abs() < 1e-12,
        format!("exact {}", r.exact_mean),
    );
    rep.check(
        "pure_d4_within_3_sigma",
        (r.empirical_mean - r.exact_mean).abs() <= 3.0 * r.std_err,
        format!("|{} − {}| <= 3·{}", r.empirical_mean, r.exact_mean, r.std_err),
    );
    rep.finish();
}

#[test]
fn criterion_2_haar_average_purity() {
    let mut rep = Report::new(2, "Haar-average purity against the closed form", 600);
    let b = closed_form_b(2, 4, 1).unwrap();
    rep.check("closed_form_oracle", (b - 0.224206).abs() < 5e-7, format!("B(2, 4, 1) = {b:.7}"));
    for (i, (d_e, k)) in [(16, 1), (16, 2), (64, 1), (64, 2)].into_iter().enumerate() {
        let setup = TypicalitySetup {
            d_s: 2,
            d_e,
            k,
            r1_dim: 2,
            samples: 200,
            deltas: vec![0.1],
            regime: Regime::Haar,
            repeated: false,
            design: None,
        };
        let t = typicality_experiment(&setup, &mut rng(100 + i as u64)).unwrap();
        let b = t.closed_form_b.unwrap();
        rep.check(
            format!("d_e{d_e}_k{k}"),
            (t.empirical_mean_excess - b).abs() <= 3.0 * t.purity_std_err,
            format!("mean excess {:.6} vs B {b:.6}, σ {:.2e}", t.empirical_mean_excess, t.purity_std_err),
        );
    }
    rep.finish();
}

#[test]
fn criterion_3_pesin_relation() {
    let mut rep = Report::new(3, "Pesin-type relation over the full local-unitary basis", 60);
    let reg = chain_register(4, 2, 0).unwrap();
    let init = PureState::basis(reg, &[0; 4]).unwrap();
    let identity = build_process(&init, &[CMat::identity(16, 16)], "identity").unwrap();
    let haar = haar_dynamics(2, 32, 1, HaarInit::HaarPure, &mut rng(21)).unwrap().process(1).unwrap();
    let lb = lb_model(4, 1, 22).0.process(1).unwrap();
    for (name, p) in [("identity", identity), ("haar", haar), ("lindblad_bernoulli", lb)] {
        let pc = pesin_relation_check(&p).unwrap();
        rep.check(
            name,
            (pc.lhs - pc.rhs).abs() < 1e-8,
            format!("lhs {:.12} rhs {:.12}", pc.lhs, pc.rhs),
        );
    }
    rep.finish();
}

#[test]
fn criterion_4_lindblad_bernoulli_discriminator() {
    let mut rep = Report::new(4, "shift model passes C1-level tests but not C2/C3", 120);
    let (m, l, phis) = lb_model(6, 2, 31);
    let p = m.process(2).unwrap();
    let ub = reduced_process(&p).unwrap();
    let half = CMat::identity(2, 2) * c(0.5);
    let mut ops = Vec::new();
    for phi in &phis[..2] {
        let chi = &l * unit(phi);
        ops.push(&chi * chi.adjoint());
        ops.push(half.clone());
    }
    let err = max_abs(&(ub.matrix() - kron_register_order(&ops)));
    rep.check("upsilon_b_product_form", err < 1e-10, format!("max deviation {err:e}"));

    let s = dynamical_entropy_k(&p).unwrap();
    rep.check(
        "dynamical_entropy_ln2",
        (s - 2f64.ln()).abs() < 1e-8,
        format!("S_dy = {s:.12}"),
    );

    let (eps, k_max) = (0.05, 6);
    let w = weak_unitary(eps, 2, 32).unwrap();
    let typical = vec![echo_typical_state(&l, &w); 8];
    let echo_model = lindblad_bernoulli(8, &l, k_max, &typical).unwrap();
    let curve = loschmidt_echo_with(&echo_model, &w, eps, k_max).unwrap();
    let mut worst_bound = f64::NEG_INFINITY;
    let mut worst_closed = 0.0f64;
    for &(k, f) in &curve.points[1..] {
        worst_bound = worst_bound.max(f - (1.0 - eps).powi(2 * k as i32));
        worst_closed = worst_closed.max((f - lb_echo_closed_form(&l, &typical, &w, k).unwrap()).abs());
    }
    rep.check(
        "echo_below_power_bound",
        worst_bound <= 1e-8,
        format!("max_k F(k) − (1−ε)^(2k) = {worst_bound:e}"),
    );
    rep.check(
        "echo_matches_closed_form",
        worst_closed <= 1e-8,
        format!("max deviation {worst_closed:e}"),
    );

    // orthogonal measure-and-prepare flutters that differ in what is prepared
    let mp = |m: usize, prep: usize| RankOneInstrument::measure_prepare(2, m, &basis(2, prep), format!("{m}->{prep}")).unwrap();
    let x = flutter_choi(vec![mp(0, 0), mp(0, 0)]).unwrap();
    let y = flutter_choi(vec![mp(0, 1), mp(1, 1)]).unwrap();
    let r = optimize_correction(&p, &x, &y, AnsatzFamily::Local, &OptimizeOptions::default()).unwrap();
    rep.check(
        "local_correction_realigns",
        (r.zeta - 1.0).abs() < 1e-8,
        format!("ζ = {:.12}, identity fidelity {:.3e}", r.zeta, r.identity_fidelity),
    );

    let (m10, _, _) = lb_model(10, 2, 33);
    let (slope, class) = profile_of(&m10, 2);
    rep.check("area_profile", class == ScalingClass::Area, format!("slope {slope:.3}, {class:?}"));
    rep.finish();
}

#[test]
fn criterion_5_haar_chaos_suite() {
    let mut rep = Report::new(5, "legacy signatures on Haar dynamics", 900);
    // a product initial state would leave the first in leg pure
    let m = haar_dynamics(2, 64, 1, HaarInit::HaarPure, &mut rng(41)).unwrap();
    let s = dynamical_entropy_k(&m.process(1).unwrap()).unwrap();
    rep.check(
        "dynamical_entropy_2ln2",
        (s - 2.0 * 2f64.ln()).abs() < 0.05,
        format!("S_dy = {s:.4} vs {:.4}", 2.0 * 2f64.ln()),
    );

    // a maximally mixed environment, so that Υ on B ⊗ R is not pure
    let m = haar_dynamics(2, 64, 1, HaarInit::Referenced, &mut rng(42)).unwrap();
    let i3 = tripartite_mi(&m.process(1).unwrap(), &["r0", "r1", "r2"]).unwrap();
    let target = -2.0 * 4f64.ln();
    rep.check("tmi_near_minimum", (i3 - target).abs() < 0.15, format!("I3 = {i3:.4} vs {target:.4}"));

    let (eps, k) = (0.05, 10);
    let fids: Vec<f64> = (0..20u64)
        .map(|s| {
            let m = haar_dynamics(2, 32, k, HaarInit::Product, &mut rng(500 + s)).unwrap();
            loschmidt_echo(&m, eps, k, 600 + s).unwrap().points[k].1
        })
        .collect();
    let mean = fids.iter().sum::<f64>() / fids.len() as f64;
    let reference = (-2.0 * k as f64 * eps).exp();
    rep.check(
        "echo_exponential_decay",
        (mean - reference).abs() < 0.1,
        format!("mean F(10) = {mean:.4} vs {reference:.4} over 20 realizations"),
    );

    let setup = TypicalitySetup {
        d_s: 2,
        d_e: 64,
        k: 1,
        r1_dim: 2,
        samples: 200,
        deltas: vec![0.1],
        regime: Regime::Haar,
        repeated: false,
        design: None,
    };
    let t = typicality_experiment(&setup, &mut rng(43)).unwrap();
    let small = t.purities.iter().filter(|&&p| t.deficit(p) < 0.2).count() as f64 / t.purities.len() as f64;
    rep.check(
        "entropy_deficit_small",
        small >= 0.95,
        format!("{:.1}% of samples below 0.2 nats", 100.0 * small),
    );
    rep.finish();
}

#[test]
fn criterion_6_ancilla_equivalence() {
    let mut rep = Report::new(6, "ancilla protocol equals the direct fidelity", 120);
    let mut r = rng(61);
    let mut worst = 0.0f64;
    for i in 0..30u64 {
        let k = 1 + (i % 2) as usize;
        let model = match i % 4 {
            0 => haar_dynamics(2, 4, k, HaarInit::HaarPure, &mut r).unwrap(),
            1 => kicked_ising(3, KickedIsingParams::CHAOTIC).unwrap(),
            2 => lb_model(4, k, 1000 + i).0,
            _ => swap_chain(3, 2).unwrap(),
        };
        let p = model.process(k).unwrap();
        let xs: Vec<CMat> = (0..k).map(|_| haar_unitary(2, &mut r)).collect();
        let ys: Vec<CMat> = (0..k).map(|_| haar_unitary(2, &mut r)).collect();
        let reg = correction_register(&p).unwrap();
        let fam = if i % 3 == 0 {
            AnsatzFamily::Local
        } else {
            AnsatzFamily::Brickwork { depth: 1 }
        };
        let v = CorrectionAnsatz::random(fam, &reg, &mut r).unwrap();
        let direct = bff_direct(&p, &unitary_flutter(&xs), &unitary_flutter(&ys), &v, true).unwrap();
        let anc = bff_ancilla(&model, &xs, &ys, &v).unwrap();
        worst = worst.max((direct - anc).abs());
    }
    rep.check("random_triples", worst < 1e-10, format!("max |ζ_anc − ζ_direct| = {worst:e} over 30"));

    let m = kicked_ising(3, KickedIsingParams::CHAOTIC).unwrap();
    let reg = m.register.select(&m.site_labels()).unwrap();
    let v = CorrectionAnsatz::random(AnsatzFamily::Local, &reg, &mut r).unwrap();
    let zeta = bff_ancilla(&m, &[pauli(1)], &[pauli(0)], &v).unwrap();
    let u = m.step_unitary(0).unwrap();
    let psi = m.initial.amplitudes();
    let xs = embed_operator(&pauli(1), &["r0"], &reg).unwrap();
    let expect = (u * &xs * psi).dotc(&(v.to_matrix().unwrap() * u * psi)).norm_sqr();
    let (x, y) = x_vs_identity();
    let direct = bff_direct(&m.process(1).unwrap(), &x, &y, &v, false).unwrap();
    rep.check(
        "single_time_x_vs_identity",
        (zeta - expect).abs() < 1e-10 && (zeta - direct).abs() < 1e-10,
        format!("ancilla {zeta:.12}, closed form {expect:.12}, direct {direct:.12}"),
    );
    rep.finish();
}

#[test]
fn criterion_7_hierarchy_consistency() {
    let mut rep = Report::new(7, "hierarchy implications over the model zoo", 600);
    let (x, y) = x_vs_identity();
    let x2 = unitary_flutter(&[pauli(1), pauli(1)]);
    let y2 = unitary_flutter(&[pauli(0), pauli(0)]);
    let ki = |p: KickedIsingParams| kicked_ising(8, KickedIsingParams { periods: 8, ..p }).unwrap();
    let mut zoo: Vec<(String, DynamicsModel, usize)> = vec![
        ("swap_chain".into(), swap_chain(8, 2).unwrap(), 1),
        ("kicked_ising_chaotic".into(), ki(KickedIsingParams::CHAOTIC), 1),
        ("kicked_ising_integrable".into(), ki(KickedIsingParams::INTEGRABLE), 1),
        (
            "state_chaos".into(),
            state_chaos_construction(8, 16, &mut rng(71)).unwrap(),
            1,
        ),
    ];
    for s in 0..3u64 {
        zoo.push((format!("lindblad_bernoulli_{s}"), lb_model(8, 1, 72 + s).0, 1));
        zoo.push((
            format!("haar_k1_{s}"),
            haar_dynamics(2, 128, 1, HaarInit::Product, &mut rng(80 + s)).unwrap(),
            1,
        ));
        zoo.push((
            format!("haar_k2_{s}"),
            // every cut keeps all four legs, so three cuts need nine sites
            haar_dynamics(2, 256, 2, HaarInit::Product, &mut rng(90 + s)).unwrap(),
            2,
        ));
    }
    let mut small_cases = 0;
    for (name, model, k) in &zoo {
        let (fx, fy) = if *k == 1 { (&x, &y) } else { (&x2, &y2) };
        let (zeta, id_fid) = local_zeta(model, fx, fy);
        let (slope, class) = profile_of(model, *k);
        let detail = format!("ζ {zeta:.4}, identity fidelity {id_fid:.2e}, slope {slope:.3} {class:?}");
        if zeta < 0.1 {
            small_cases += 1;
        }
        rep.check(
            format!("{name}_small_zeta_excludes_area"),
            !(zeta < 0.1 && class == ScalingClass::Area),
            detail.clone(),
        );
        let expected = match model.expected_class {
            ExpectedClass::Regular => class == ScalingClass::Area,
            ExpectedClass::Chaotic | ExpectedClass::StateChaos => class == ScalingClass::Volume,
            ExpectedClass::Unknown => true,
        };
        rep.check(format!("{name}_expected_class"), expected, format!("{:?}", model.expected_class));
        if model.expected_class == ExpectedClass::StateChaos {
            rep.check(
                "state_chaos_correctable_yet_volume",
                (zeta - 1.0).abs() < 1e-6 && class == ScalingClass::Volume,
                detail.clone(),
            );
        }
        if name == "swap_chain" {
            rep.check(
                "swap_orthogonal_yet_area",
                id_fid < 1e-10 && class == ScalingClass::Area,
                detail.clone(),
            );
        }
    }
    rep.check(
        "implication_is_exercised",
        small_cases > 0,
        format!("{small_cases} zoo members with ζ < 0.1"),
    );
    rep.finish();
}

#[test]
fn criterion_8_random_butterfly_bound() {
    let mut rep = Report::new(8, "exceedance frequency under the purity bound", 300);
    let deltas = [0.05, 0.1, 0.2];
    let haar = haar_dynamics(2, 16, 1, HaarInit::Product, &mut rng(81)).unwrap().process(1).unwrap();
    // a larger environment and R₁ push the bound below one
    let wide = haar_dynamics(2, 256, 1, HaarInit::HaarPure, &mut rng(84)).unwrap().process(1).unwrap();
    let lb = lb_model(5, 1, 82).0.process(1).unwrap();
    for (name, p, r1) in [
        ("haar", haar, vec!["r0"]),
        ("haar_wide", wide, vec!["r0", "r1"]),
        ("lindblad_bernoulli", lb, vec!["r0"]),
    ] {
        let r = random_butterfly_experiment(&p, &r1, 2000, &deltas, 83).unwrap();
        for row in &r.rows {
            rep.check(
                format!("{name}_delta{}", row.delta),
                row.exceedance <= row.bound + 3.0 * row.std_err,
                format!("{:.4} <= {:.4} + 3·{:.4}", row.exceedance, row.bound, row.std_err),
            );
        }
    }
    rep.finish();
}

#[test]
fn criterion_9_local_operator_entanglement() {
    let mut rep = Report::new(9, "local-operator entanglement split", 600);
    let x = pauli(1);
    let swap = swap_chain(6, 2).unwrap();
    let curve = local_operator_entanglement(&swap, &x, "r2", &["r0", "r1", "r2"], 5).unwrap();
    let vals: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
    let spread = vals.iter().fold(0.0f64, |a, v| a.max((v - vals[0]).abs()));
    rep.check("swap_constant", spread < 1e-10, format!("{vals:.3?}"));

    let ki = kicked_ising(8, KickedIsingParams::CHAOTIC).unwrap();
    let curve = local_operator_entanglement(&ki, &x, "r3", &["r0", "r1", "r2", "r3"], 5).unwrap();
    let vals: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
    let increasing = vals[1..].windows(2).all(|w| w[1] > w[0] + 1e-6);
    rep.check("kicked_ising_increasing", increasing, format!("{vals:.3?}"));

    let long = kicked_ising(8, KickedIsingParams { periods: 8, ..KickedIsingParams::CHAOTIC }).unwrap();
    let (xf, yf) = x_vs_identity();
    let (zeta, _) = local_zeta(&long, &xf, &yf);
    rep.check("growing_case_has_small_zeta", zeta < 0.5, format!("single-time local ζ = {zeta:.4}"));
    rep.finish();
}
