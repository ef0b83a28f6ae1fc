//! Config-level descriptions of models and flutter steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::echo_typical_state;
use crate::error::{Error, Result};
use crate::instruments::{generalized_paulis, matrix_from_json, weak_unitary, RankOneInstrument};
use crate::models::{
    haar_dynamics, kicked_ising, lindblad_bernoulli, random_product_states, state_chaos_construction, swap_chain,
    DynamicsModel, HaarInit, KickedIsingParams,
};
use crate::qcore::{CMat, CVec, C64};

pub type MatrixJson = Vec<Vec<[f64; 2]>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LbStates {
    /// Seeded random product states.
    #[default]
    Random,
    /// |0⟩ on every site.
    Zero,
    /// States with |⟨Lφ|W|Lφ⟩| = |tr W|/d for the echo's weak unitary W.
    EchoTypical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KickedIsingPreset {
    #[default]
    Chaotic,
    Integrable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    LindbladBernoulli {
        n: usize,
        /// Local unitary L; Hadamard when absent.
        #[serde(default)]
        local_u: Option<MatrixJson>,
        #[serde(default)]
        states: LbStates,
    },
    SwapChain {
        n: usize,
        #[serde(default = "two")]
        d: usize,
    },
    KickedIsing {
        n: usize,
        #[serde(default)]
        preset: KickedIsingPreset,
        #[serde(default)]
        j: Option<f64>,
        #[serde(default)]
        b: Option<f64>,
        #[serde(default)]
        h: Option<f64>,
        #[serde(default)]
        periods: Option<usize>,
    },
    Haar {
        d_s: usize,
        d_e: usize,
        #[serde(default = "product_init")]
        init: HaarInit,
    },
    StateChaos {
        n: usize,
        /// Defaults to 2n layers.
        #[serde(default)]
        scramble_depth: Option<usize>,
    },
}

fn two() -> usize {
    2
}

fn product_init() -> HaarInit {
    HaarInit::Product
}

/// What a model build needs from the experiment.
#[derive(Clone, Debug, Default)]
pub struct BuildContext {
    /// Steps the experiment will take.
    pub steps: usize,
    /// Weak unitary of an echo run, for echo-typical shift states.
    pub echo_w: Option<CMat>,
}

fn hadamard() -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_row_slice(2, 2, &[C64::new(s, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0)])
}

impl ModelSpec {
    /// Parses a model object as it appears in experiment configs.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config {
            field: "model".into(),
            msg: e.to_string(),
        })
    }

    /// Realization 0 of the model for `steps` steps, drawn from the same
    /// random stream the experiment runners use for that seed.
    pub fn build_seeded(&self, steps: usize, seed: u64) -> Result<DynamicsModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let ctx = BuildContext { steps, echo_w: None };
        self.build(&ctx, &mut rng)
    }

    pub fn id(&self) -> &'static str {
        match self {
            ModelSpec::LindbladBernoulli { .. } => "lindblad_bernoulli",
            ModelSpec::SwapChain { .. } => "swap_chain",
            ModelSpec::KickedIsing { .. } => "kicked_ising",
            ModelSpec::Haar { .. } => "haar",
            ModelSpec::StateChaos { .. } => "state_chaos",
        }
    }

    /// True when building consumes randomness, so that repeated builds give
    /// independent realizations.
    pub fn is_random(&self) -> bool {
        match self {
            ModelSpec::LindbladBernoulli { states, .. } => *states == LbStates::Random,
            ModelSpec::SwapChain { .. } | ModelSpec::KickedIsing { .. } => false,
            ModelSpec::Haar { .. } | ModelSpec::StateChaos { .. } => true,
        }
    }

    pub fn local_u(&self) -> Result<Option<CMat>> {
        match self {
            ModelSpec::LindbladBernoulli { local_u, .. } => Ok(Some(match local_u {
                Some(m) => matrix_from_json(m)?,
                None => hadamard(),
            })),
            _ => Ok(None),
        }
    }

    pub fn build(&self, ctx: &BuildContext, rng: &mut ChaCha8Rng) -> Result<DynamicsModel> {
        match self {
            ModelSpec::LindbladBernoulli { n, states, .. } => {
                let l = self.local_u()?.expect("shift model has L");
                let d = l.nrows();
                let phis: Vec<CVec> = match states {
                    LbStates::Random => random_product_states(*n, d, rng),
                    LbStates::Zero => vec![basis(d, 0); *n],
                    LbStates::EchoTypical => {
                        let w = ctx
                            .echo_w
                            .as_ref()
                            .ok_or_else(|| Error::arg("echo_typical states only apply to echo experiments"))?;
                        vec![echo_typical_state(&l, w); *n]
                    }
                };
                lindblad_bernoulli(*n, &l, ctx.steps, &phis)
            }
            ModelSpec::SwapChain { n, d } => swap_chain(*n, *d),
            ModelSpec::KickedIsing {
                n,
                preset,
                j,
                b,
                h,
                periods,
            } => {
                let base = match preset {
                    KickedIsingPreset::Chaotic => KickedIsingParams::CHAOTIC,
                    KickedIsingPreset::Integrable => KickedIsingParams::INTEGRABLE,
                };
                let params = KickedIsingParams {
                    j: j.unwrap_or(base.j),
                    b: b.unwrap_or(base.b),
                    h: h.unwrap_or(base.h),
                    periods: periods.unwrap_or(base.periods),
                };
                kicked_ising(*n, params)
            }
            ModelSpec::Haar { d_s, d_e, init } => haar_dynamics(*d_s, *d_e, ctx.steps.max(1), *init, rng),
            ModelSpec::StateChaos { n, scramble_depth } => {
                state_chaos_construction(*n, scramble_depth.unwrap_or(2 * n), rng)
            }
        }
    }
}

fn basis(d: usize, i: usize) -> CVec {
    let mut v = CVec::zeros(d);
    v[i] = C64::new(1.0, 0.0);
    v
}

/// One flutter step (or local operator) in a config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSpec {
    Identity,
    /// Generalized Pauli X^a Z^b.
    Pauli { a: usize, b: usize },
    /// |prepare⟩⟨measure| in the computational basis.
    MeasurePrepare { measure: usize, prepare: usize },
    /// Seeded weak unitary with |tr W| = (1 − ε)d.
    Weak { epsilon: f64, seed: u64 },
    Matrix { matrix: MatrixJson },
}

impl StepSpec {
    pub fn matrix(&self, d: usize) -> Result<CMat> {
        match self {
            StepSpec::Identity => Ok(CMat::identity(d, d)),
            StepSpec::Pauli { a, b } => {
                if *a >= d || *b >= d {
                    return Err(Error::arg("Pauli exponents must be below d"));
                }
                Ok(generalized_paulis(d)?.swap_remove(a + d * b))
            }
            StepSpec::MeasurePrepare { measure, prepare } => {
                if *prepare >= d {
                    return Err(Error::arg("prepared basis state out of range"));
                }
                Ok(RankOneInstrument::measure_prepare(d, *measure, &basis(d, *prepare), "")?.kraus)
            }
            StepSpec::Weak { epsilon, seed } => weak_unitary(*epsilon, d, *seed),
            StepSpec::Matrix { matrix } => {
                let m = matrix_from_json(matrix)?;
                if m.nrows() != d {
                    return Err(Error::dims("matrix does not match the site dimension"));
                }
                Ok(m)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            StepSpec::Identity => "I".into(),
            StepSpec::Pauli { a, b } => format!("X{a}Z{b}"),
            StepSpec::MeasurePrepare { measure, prepare } => format!("M{measure}P{prepare}"),
            StepSpec::Weak { epsilon, seed } => format!("W{epsilon}s{seed}"),
            StepSpec::Matrix { .. } => "A".into(),
        }
    }

    pub fn instrument(&self, d: usize) -> Result<RankOneInstrument> {
        RankOneInstrument::new(self.matrix(d)?, self.label())
    }
}
