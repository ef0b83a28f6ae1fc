//! Randomized invariants over small processes.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use multitime::bff::{bff_ancilla, bff_direct, correction_register, optimize_correction, AnsatzFamily, CorrectionAnsatz, OptimizeOptions};
use multitime::diagnostics::pesin_relation_check;
use multitime::entanglement::{entropy_of_state, tripartite_mi, EntropyKind};
use multitime::instruments::{flutter_choi, projective_family, ButterflyFlutter, RankOneInstrument};
use multitime::models::{haar_dynamics, HaarInit};
use multitime::process::{born_weight, build_process, chain_register, condition, condition_direct, reduced_process, PureProcess};
use multitime::qcore::linalg::{random_matrix, random_state};
use multitime::qcore::partial_trace;
use multitime::randomness::haar_unitary;
use multitime::CMat;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random process on `sites` qubits with the system at `s_site`.
fn random_process(seed: u64, sites: usize, s_site: usize, k: usize) -> (PureProcess, Vec<CMat>, multitime::PureState) {
    let mut r = rng(seed);
    let init = random_state(chain_register(sites, 2, s_site).unwrap(), &mut r);
    let us: Vec<CMat> = (0..k).map(|_| haar_unitary(1 << sites, &mut r)).collect();
    (build_process(&init, &us, "haar").unwrap(), us, init)
}

/// Random contraction: a Ginibre matrix scaled to operator norm below one.
fn random_step(r: &mut ChaCha8Rng) -> CMat {
    let g = random_matrix(2, r);
    let norm = g.singular_values().max();
    g / multitime::Complex64::new(1.01 * norm, 0.0)
}

fn unitary_flutter(steps: &[CMat]) -> ButterflyFlutter {
    flutter_choi(steps.iter().map(|m| RankOneInstrument::new(m.clone(), "u").unwrap()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, .. ProptestConfig::default() })]

    #[test]
    fn processes_have_unit_norm(seed in any::<u64>(), sites in 2usize..4, k in 1usize..3) {
        let (p, _, _) = random_process(seed, sites, seed as usize % sites, k);
        prop_assert!((p.choi().norm_sqr() - 1.0).abs() < 1e-10);
        let ub = reduced_process(&p).unwrap();
        prop_assert!((ub.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn born_rule_agrees_with_conditioning_and_direct_evolution(seed in any::<u64>(), k in 1usize..3) {
        let (p, us, init) = random_process(seed, 2, 0, k);
        let mut r = rng(seed ^ 0x5a5a);
        let steps: Vec<CMat> = (0..k).map(|_| random_step(&mut r)).collect();
        let f = flutter_choi(steps.iter().map(|m| RankOneInstrument::new(m.clone(), "a").unwrap()).collect()).unwrap();
        let cond = condition(&p, &f).unwrap();
        let born = born_weight(&reduced_process(&p).unwrap(), &f).unwrap();
        let direct = condition_direct(&init, &us, &steps).unwrap();
        prop_assert!((cond.probability - born).abs() < 1e-10);
        prop_assert!((cond.probability - direct.probability).abs() < 1e-10);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&cond.probability));
    }

    #[test]
    fn projective_outcomes_sum_to_one(seed in any::<u64>()) {
        let (p, _, _) = random_process(seed, 3, 1, 2);
        let fam = projective_family(2);
        let mut total = 0.0;
        for a in &fam {
            for b in &fam {
                total += condition(&p, &flutter_choi(vec![a.clone(), b.clone()]).unwrap()).unwrap().probability;
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn entropies_respect_dimension_bounds(seed in any::<u64>(), k in 1usize..3) {
        let (p, _, _) = random_process(seed, 3, 0, k);
        let b = p.b_labels();
        let s = entropy_of_state(p.choi(), &b, EntropyKind::VonNeumann).unwrap();
        let s2 = entropy_of_state(p.choi(), &b, EntropyKind::Renyi2).unwrap();
        let ln_d = (p.d_b() as f64).ln();
        prop_assert!(s >= -1e-10 && s <= ln_d + 1e-8);
        prop_assert!(s2 <= s + 1e-8);
        if k == 1 {
            let i3 = tripartite_mi(&p, &["r0"]).unwrap();
            prop_assert!(i3 >= -2.0 * ln_d - 1e-6);
        }
    }

    #[test]
    fn complementary_reductions_share_purity(seed in any::<u64>()) {
        let (p, _, _) = random_process(seed, 3, 2, 1);
        let keep = p.b_labels();
        let rest = p.register().complement(&keep).unwrap();
        let a = partial_trace(p.choi(), &keep).unwrap().purity();
        let b = partial_trace(p.choi(), &rest).unwrap().purity();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn pesin_relation_holds(seed in any::<u64>()) {
        let (p, _, _) = random_process(seed, 3, 0, 1);
        let pc = pesin_relation_check(&p).unwrap();
        prop_assert!((pc.lhs - pc.rhs).abs() < 1e-8);
    }

    #[test]
    fn ancilla_protocol_matches_direct(seed in any::<u64>(), k in 1usize..3, depth in 0usize..3) {
        let mut r = rng(seed);
        let m = haar_dynamics(2, 4, k, HaarInit::HaarPure, &mut r).unwrap();
        let p = m.process(k).unwrap();
        let xs: Vec<CMat> = (0..k).map(|_| haar_unitary(2, &mut r)).collect();
        let ys: Vec<CMat> = (0..k).map(|_| haar_unitary(2, &mut r)).collect();
        let fam = if depth == 0 { AnsatzFamily::Local } else { AnsatzFamily::Brickwork { depth } };
        let v = CorrectionAnsatz::random(fam, &correction_register(&p).unwrap(), &mut r).unwrap();
        let direct = bff_direct(&p, &unitary_flutter(&xs), &unitary_flutter(&ys), &v, true).unwrap();
        let anc = bff_ancilla(&m, &xs, &ys, &v).unwrap();
        prop_assert!((direct - anc).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, .. ProptestConfig::default() })]

    #[test]
    fn optimized_fidelity_is_bracketed(seed in any::<u64>()) {
        let (p, _, _) = random_process(seed, 3, 0, 1);
        let mut r = rng(seed ^ 1);
        let u = haar_unitary(2, &mut r);
        // X and 𝟙 conjugated by the same unitary stay orthogonal
        let paulis = multitime::instruments::generalized_paulis(2).unwrap();
        let x = unitary_flutter(&[&u * &paulis[1] * u.adjoint()]);
        let y = unitary_flutter(&[CMat::identity(2, 2)]);
        let opts = OptimizeOptions { seed, ..Default::default() };
        let res = optimize_correction(&p, &x, &y, AnsatzFamily::Brickwork { depth: 1 }, &opts).unwrap();
        prop_assert!(res.zeta >= res.identity_fidelity - 1e-12);
        prop_assert!(res.zeta <= 1.0 + 1e-10);
        let check = bff_direct(&p, &x, &y, &res.best_params, false).unwrap();
        prop_assert!((check - res.zeta).abs() < 1e-10);
    }
}
