//! C ABI over the multitime library.
//!
//! Conventions:
//! - Every fallible call returns an `MtStatus`. On failure a message is
//!   available from `mt_last_error_message` on the same thread.
//! - Complex arrays are interleaved `(re, im)` doubles. Matrices are column
//!   major. Lengths are counted in complex entries.
//! - Handles are opaque and owned by the caller. Free each one exactly once
//!   with its `*_free` function. Freeing NULL is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use multitime::bff::{optimize_correction, AnsatzFamily, OptimizeOptions};
use multitime::diagnostics::{dynamical_entropy_k, pesin_relation_check};
use multitime::entanglement::tripartite_mi;
use multitime::experiments::spec::ModelSpec;
use multitime::experiments::execute;
use multitime::instruments::{flutter_choi, ButterflyFlutter, RankOneInstrument};
use multitime::models::DynamicsModel;
use multitime::process::{build_process, chain_register, PureProcess};
use multitime::qcore::set_amplitude_cap;
use multitime::{CMat, Complex64, Error, PureState};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    DimensionMismatch = 3,
    UnknownLabel = 4,
    CapExceeded = 5,
    InvalidArgument = 6,
    NullOutcome = 7,
    NotOrthogonal = 8,
    Config = 9,
    Io = 10,
    Panic = 11,
    /// An experiment run stopped on an error outside the other categories.
    RunFailed = 12,
}

/// Correction families for `mt_bff_optimize`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtFamily {
    Identity = 0,
    /// One layer of single-site gates.
    Local = 1,
    /// Brickwork of two-site gates; the depth argument applies.
    Brickwork = 2,
    /// Arbitrary unitary on all final sites.
    Full = 3,
}

/// Opaque dynamics model.
pub struct MtModel(DynamicsModel);

/// Opaque pure process (Choi state plus metadata).
pub struct MtProcess(PureProcess);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct MtProcessInfo {
    pub k: usize,
    pub d_s: usize,
    pub d_e: usize,
    pub d_b: usize,
    /// Complex entries of the Choi vector.
    pub total_dim: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct MtBffResult {
    pub zeta: f64,
    pub identity_fidelity: f64,
    pub iterations: usize,
    pub converged: bool,
}

enum Failure {
    Null(&'static str),
    Utf8(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MtStatus {
    match e {
        Error::DimensionMismatch(_) => MtStatus::DimensionMismatch,
        Error::UnknownLabel(_) | Error::DuplicateLabel(_) => MtStatus::UnknownLabel,
        Error::CapExceeded { .. } => MtStatus::CapExceeded,
        Error::InvalidArgument(_) | Error::InvalidDensity(_) | Error::NoRoot(_) => MtStatus::InvalidArgument,
        Error::NullOutcome => MtStatus::NullOutcome,
        Error::NotOrthogonal(_) => MtStatus::NotOrthogonal,
        Error::Config { .. } => MtStatus::Config,
        Error::Io(_) => MtStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status and last-error text.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MtStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            MtStatus::NullPointer
        }
        Ok(Err(Failure::Utf8(what))) => {
            set_last_error(format!("invalid UTF-8 in {what}"));
            MtStatus::InvalidUtf8
        }
        Ok(Err(Failure::Lib(e))) => {
            let s = status_of(&e);
            set_last_error(e.to_string());
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            MtStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

/// Reads `len` interleaved complex numbers.
unsafe fn complex_slice(p: *const f64, len: usize, what: &'static str) -> Result<Vec<Complex64>, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let raw = std::slice::from_raw_parts(p, 2 * len);
    Ok(raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

/// Reads `count` consecutive column-major `d`×`d` complex matrices.
unsafe fn matrices(p: *const f64, count: usize, d: usize, what: &'static str) -> Result<Vec<CMat>, Failure> {
    let all = complex_slice(p, count * d * d, what)?;
    Ok(all.chunks_exact(d * d).map(|c| CMat::from_column_slice(d, d, c)).collect())
}

fn unitary_flutter(steps: Vec<CMat>) -> Result<ButterflyFlutter, Error> {
    flutter_choi(
        steps
            .into_iter()
            .enumerate()
            .map(|(i, m)| RankOneInstrument::new(m, format!("u{i}")))
            .collect::<Result<_, _>>()?,
    )
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a
/// successful call. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn mt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Sets the global amplitude cap (complex entries per dense object).
#[no_mangle]
pub extern "C" fn mt_set_amplitude_cap(cap: usize) -> MtStatus {
    guard(|| {
        if cap == 0 {
            return Err(Error::InvalidArgument("cap must be positive".into()).into());
        }
        set_amplitude_cap(cap);
        Ok(())
    })
}

/// Builds a model from its JSON description, the same object accepted in
/// experiment configs (e.g. `{"id": "haar", "d_s": 2, "d_e": 8}`). `steps`
/// is the number of step unitaries to prepare; `seed` fixes random models.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mt_model_from_json(json: *const c_char, steps: usize, seed: u64, out: *mut *mut MtModel) -> MtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(json, "json")?;
        let model = ModelSpec::from_json(text)?.build_seeded(steps, seed)?;
        *out = Box::into_raw(Box::new(MtModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `mt_model_from_json` and not be freed already.
#[no_mangle]
pub unsafe extern "C" fn mt_model_free(model: *mut MtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Process tensor of the first `k` steps of a model.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mt_model_process(model: *const MtModel, k: usize, out: *mut *mut MtProcess) -> MtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = ref_arg(model, "model")?;
        *out = Box::into_raw(Box::new(MtProcess(m.0.process(k)?)));
        Ok(())
    })
}

/// Process tensor of arbitrary dynamics on a chain of `n_sites` qudits of
/// dimension `d` with the system at `s_site`. `initial` holds d^n complex
/// amplitudes; `unitaries` holds `k` consecutive d^n × d^n matrices.
///
/// # Safety
/// The arrays must hold the stated number of interleaved complex entries.
#[no_mangle]
pub unsafe extern "C" fn mt_process_from_unitaries(
    n_sites: usize,
    d: usize,
    s_site: usize,
    initial: *const f64,
    unitaries: *const f64,
    k: usize,
    out: *mut *mut MtProcess,
) -> MtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let reg = chain_register(n_sites, d, s_site)?;
        let dim = reg.total_dim();
        let init = PureState::from_vec(reg, complex_slice(initial, dim, "initial")?)?;
        let us = matrices(unitaries, k, dim, "unitaries")?;
        *out = Box::into_raw(Box::new(MtProcess(build_process(&init, &us, "ffi")?)));
        Ok(())
    })
}

/// # Safety
/// `process` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mt_process_free(process: *mut MtProcess) {
    if !process.is_null() {
        drop(Box::from_raw(process));
    }
}

/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mt_process_info(process: *const MtProcess, out: *mut MtProcessInfo) -> MtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = &ref_arg(process, "process")?.0;
        *out = MtProcessInfo {
            k: p.k(),
            d_s: p.d_s(),
            d_e: p.d_e(),
            d_b: p.d_b(),
            total_dim: p.register().total_dim(),
        };
        Ok(())
    })
}

/// Copies the Choi vector into `out`, which must hold exactly `len` complex
/// entries with `len` equal to `MtProcessInfo::total_dim`.
///
/// # Safety
/// `out` must be writable for `2 * len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mt_process_choi(process: *const MtProcess, out: *mut f64, len: usize) -> MtStatus {
    guard(|| {
        let p = &ref_arg(process, "process")?.0;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let amps = p.choi().amplitudes();
        if amps.len() != len {
            return Err(Error::DimensionMismatch(format!("buffer holds {len} entries, Choi vector has {}", amps.len())).into());
        }
        let dst = std::slice::from_raw_parts_mut(out, 2 * len);
        for (i, z) in amps.iter().enumerate() {
            dst[2 * i] = z.re;
            dst[2 * i + 1] = z.im;
        }
        Ok(())
    })
}

/// Per-step dynamical entropy S(Υ_B)/k in nats.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mt_dynamical_entropy(process: *const MtProcess, out: *mut f64) -> MtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = dynamical_entropy_k(&ref_arg(process, "process")?.0)?;
        Ok(())
    })
}

/// Both sides of the Pesin-type relation over the local unitary basis.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mt_pesin_check(process: *const MtProcess, lhs: *mut f64, rhs: *mut f64) -> MtStatus {
    guard(|| {
        let lhs = out_arg(lhs, "lhs")?;
        let rhs = out_arg(rhs, "rhs")?;
        let c = pesin_relation_check(&ref_arg(process, "process")?.0)?;
        *lhs = c.lhs;
        *rhs = c.rhs;
        Ok(())
    })
}

/// Tripartite information of a single-step process, with R₁ the first
/// `r1_sites` final sites.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mt_tripartite_mi(process: *const MtProcess, r1_sites: usize, out: *mut f64) -> MtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = &ref_arg(process, "process")?.0;
        let r = p.r_labels();
        if r1_sites == 0 || r1_sites >= r.len() {
            return Err(Error::InvalidArgument("r1_sites must leave both R1 and R2 non-empty".into()).into());
        }
        *out = tripartite_mi(p, &r[..r1_sites])?;
        Ok(())
    })
}

/// Optimized butterfly flutter fidelity for two unitary flutters given as
/// `k` consecutive d_S × d_S matrices each. `budget` and `restarts` of 0
/// select the library defaults.
///
/// # Safety
/// The flutter arrays must hold k·d_S² complex entries; `out` must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mt_bff_optimize(
    process: *const MtProcess,
    x_steps: *const f64,
    y_steps: *const f64,
    family: MtFamily,
    depth: usize,
    budget: usize,
    restarts: usize,
    seed: u64,
    out: *mut MtBffResult,
) -> MtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = &ref_arg(process, "process")?.0;
        let (k, d) = (p.k(), p.d_s());
        let x = unitary_flutter(matrices(x_steps, k, d, "x_steps")?)?;
        let y = unitary_flutter(matrices(y_steps, k, d, "y_steps")?)?;
        let fam = match family {
            MtFamily::Identity => AnsatzFamily::Identity,
            MtFamily::Local => AnsatzFamily::Local,
            MtFamily::Brickwork => AnsatzFamily::Brickwork { depth },
            MtFamily::Full => AnsatzFamily::Full,
        };
        let defaults = OptimizeOptions::default();
        let opts = OptimizeOptions {
            budget: if budget == 0 { defaults.budget } else { budget },
            restarts: if restarts == 0 { defaults.restarts } else { restarts },
            seed,
            ..defaults
        };
        let r = optimize_correction(p, &x, &y, fam, &opts)?;
        *out = MtBffResult {
            zeta: r.zeta,
            identity_fidelity: r.identity_fidelity,
            iterations: r.iterations,
            converged: r.converged,
        };
        Ok(())
    })
}

/// Runs an experiment config file and writes its outputs, as the CLI `run`
/// subcommand does. `exit_code` receives the CLI exit code (0 all assertions
/// passed, 1 an assertion failed, 2 config error, 3 cap exceeded, 4 other
/// failure). The status is `Ok` for codes 0 and 1; the failure message of
/// any nonzero code is available from `mt_last_error_message`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `exit_code` valid.
#[no_mangle]
pub unsafe extern "C" fn mt_run_config(path: *const c_char, exit_code: *mut i32) -> MtStatus {
    let mut done = None;
    let s = guard(|| {
        let code = out_arg(exit_code, "exit_code")?;
        let ex = execute(Path::new(str_arg(path, "path")?));
        *code = ex.code;
        done = Some(ex);
        Ok(())
    });
    let Some(ex) = done else { return s };
    if ex.code != 0 {
        set_last_error(ex.message);
    }
    match ex.code {
        0 | 1 => MtStatus::Ok,
        2 => MtStatus::Config,
        3 => MtStatus::CapExceeded,
        _ => MtStatus::RunFailed,
    }
}
