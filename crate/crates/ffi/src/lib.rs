//! C ABI over the csqpt toolkit.
//!
//! States and process tensors are opaque handles owned by the caller and
//! released with their `_free` function. Every fallible call returns a
//! [`CsqptStatus`]; the message of the last failure on the calling thread is
//! available from [`csqpt_last_error`]. Strings returned through `char**`
//! outputs are released with [`csqpt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use csqpt::channel::{oracle_tensor, ChannelParams, ProcessTensor};
use csqpt::fock::{coherent_state, squeezed_vacuum, state_fidelity, CoherentAmplitude, DensityMatrix, FockDim, SqueezingSpec};
use csqpt::pipeline::{self, Experiment, RunConfig};
use csqpt::process_mle::{output_phase, predict_squeezed, process_fidelity};
use csqpt::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsqptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    /// Non-PSD drift, invalid process or failed numerics.
    Numeric = 4,
    UndefinedPhase = 5,
    Io = 6,
    Panic = 7,
    Other = 8,
}

/// Density matrix truncated at some `n_max`.
pub struct CsqptState(DensityMatrix);

/// Process tensor `E_kl^mn`.
pub struct CsqptProcess(ProcessTensor);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> CsqptStatus {
    match e {
        Error::InvalidArgument(_) | Error::DimMismatch { .. } | Error::BinningMismatch(_) | Error::InvalidState(_) => {
            CsqptStatus::InvalidArgument
        }
        Error::Config(_) | Error::Json(_) => CsqptStatus::Config,
        Error::UndefinedPhase { .. } => CsqptStatus::UndefinedPhase,
        Error::Io { .. } => CsqptStatus::Io,
        e if e.is_numeric() => CsqptStatus::Numeric,
        _ => CsqptStatus::Other,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), CsqptStatus>) -> CsqptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsqptStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside csqpt".into());
            CsqptStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, CsqptStatus>;
}

impl<T> OrStatus<T> for csqpt::Result<T> {
    fn or_status(self) -> Result<T, CsqptStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn null(what: &str) -> CsqptStatus {
    set_error(format!("{what} is null"));
    CsqptStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, CsqptStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), CsqptStatus> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, CsqptStatus> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        CsqptStatus::InvalidArgument
    })
}

fn into_c_string(s: String) -> Result<*mut c_char, CsqptStatus> {
    CString::new(s).map(CString::into_raw).map_err(|_| {
        set_error("string contains a NUL byte".into());
        CsqptStatus::Other
    })
}

fn dim(n_max: usize) -> FockDim {
    FockDim::new(n_max)
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn csqpt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn csqpt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn csqpt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Coherent state `|α⟩` with `α = re + i·im`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn csqpt_state_coherent(re: f64, im: f64, n_max: usize, out: *mut *mut CsqptState) -> CsqptStatus {
    guard(|| {
        let rho = coherent_state(CoherentAmplitude::new(re, im), dim(n_max)).or_status()?;
        write_out(out, Box::into_raw(Box::new(CsqptState(rho))), "out")
    })
}

/// Pure squeezed vacuum, `±|squeezing_db|` about vacuum noise. `phase` is the
/// argument of the squeezing parameter; the squeezed quadrature sits at half of it.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn csqpt_state_squeezed_vacuum(
    squeezing_db: f64,
    phase: f64,
    n_max: usize,
    out: *mut *mut CsqptState,
) -> CsqptStatus {
    guard(|| {
        let rho = squeezed_vacuum(SqueezingSpec::pure(squeezing_db, phase), dim(n_max)).or_status()?;
        write_out(out, Box::into_raw(Box::new(CsqptState(rho))), "out")
    })
}

/// Parses the density-matrix JSON format written by the CLI.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csqpt_state_from_json(json: *const c_char, out: *mut *mut CsqptState) -> CsqptStatus {
    guard(|| {
        let rho = DensityMatrix::from_json(read_str(json, "json")?).or_status()?;
        write_out(out, Box::into_raw(Box::new(CsqptState(rho))), "out")
    })
}

/// # Safety
/// `state` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csqpt_state_to_json(state: *const CsqptState, out: *mut *mut c_char) -> CsqptStatus {
    guard(|| {
        let text = deref(state, "state")?.0.to_json().or_status()?;
        write_out(out, into_c_string(text)?, "out")
    })
}

/// # Safety
/// `state` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn csqpt_state_free(state: *mut CsqptState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Matrix size `n_max + 1`, or 0 for a null handle.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn csqpt_state_size(state: *const CsqptState) -> usize {
    state.as_ref().map_or(0, |s| s.0.dim().size())
}

/// Element `ρ_mn`.
///
/// # Safety
/// `state` must be a live handle; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csqpt_state_element(
    state: *const CsqptState,
    m: usize,
    n: usize,
    re: *mut f64,
    im: *mut f64,
) -> CsqptStatus {
    guard(|| {
        let rho = &deref(state, "state")?.0;
        let size = rho.dim().size();
        if m >= size || n >= size {
            set_error(format!("index ({m}, {n}) outside a {size}×{size} matrix"));
            return Err(CsqptStatus::InvalidArgument);
        }
        let v = rho.get(m, n);
        write_out(re, v.re, "re")?;
        write_out(im, v.im, "im")
    })
}

/// Uhlmann fidelity between two states of equal dimension.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csqpt_state_fidelity(a: *const CsqptState, b: *const CsqptState, out: *mut f64) -> CsqptStatus {
    guard(|| {
        let f = state_fidelity(&deref(a, "a")?.0, &deref(b, "b")?.0).or_status()?;
        write_out(out, f, "out")
    })
}

/// Closed-form phase-shift-and-loss process.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csqpt_process_oracle(
    phase_shift: f64,
    transmission: f64,
    n_max: usize,
    out: *mut *mut CsqptProcess,
) -> CsqptStatus {
    guard(|| {
        let params = ChannelParams::new(phase_shift, transmission);
        params.validate().or_status()?;
        let tensor = oracle_tensor(&params, dim(n_max)).or_status()?;
        write_out(out, Box::into_raw(Box::new(CsqptProcess(tensor))), "out")
    })
}

/// Parses the tensor JSON format written by the CLI.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csqpt_process_from_json(json: *const c_char, out: *mut *mut CsqptProcess) -> CsqptStatus {
    guard(|| {
        let tensor = ProcessTensor::from_json(read_str(json, "json")?).or_status()?;
        write_out(out, Box::into_raw(Box::new(CsqptProcess(tensor))), "out")
    })
}

/// # Safety
/// `process` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csqpt_process_to_json(process: *const CsqptProcess, out: *mut *mut c_char) -> CsqptStatus {
    guard(|| {
        let text = deref(process, "process")?.0.to_json().or_status()?;
        write_out(out, into_c_string(text)?, "out")
    })
}

/// # Safety
/// `process` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn csqpt_process_free(process: *mut CsqptProcess) {
    if !process.is_null() {
        drop(Box::from_raw(process));
    }
}

/// Element `E_kl^mn`.
///
/// # Safety
/// `process` must be a live handle; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csqpt_process_element(
    process: *const CsqptProcess,
    k: usize,
    l: usize,
    m: usize,
    n: usize,
    re: *mut f64,
    im: *mut f64,
) -> CsqptStatus {
    guard(|| {
        let tensor = &deref(process, "process")?.0;
        let size = tensor.dim().size();
        if [k, l, m, n].iter().any(|&i| i >= size) {
            set_error(format!("index ({k}, {l}, {m}, {n}) outside dimension {size}"));
            return Err(CsqptStatus::InvalidArgument);
        }
        let v = tensor.get(k, l, m, n);
        write_out(re, v.re, "re")?;
        write_out(im, v.im, "im")
    })
}

/// Applies a process to a state. The output is returned unnormalized;
/// its trace goes to `trace` when that pointer is non-null.
///
/// # Safety
/// `process` and `state` must be live handles; `out` must be writable;
/// `trace` may be null.
#[no_mangle]
pub unsafe extern "C" fn csqpt_process_apply(
    process: *const CsqptProcess,
    state: *const CsqptState,
    out: *mut *mut CsqptState,
    trace: *mut f64,
) -> CsqptStatus {
    guard(|| {
        let result = csqpt::channel::apply_process(&deref(process, "process")?.0, &deref(state, "state")?.0).or_status()?;
        if !trace.is_null() {
            trace.write(result.trace);
        }
        write_out(out, Box::into_raw(Box::new(CsqptState(result.state))), "out")
    })
}

/// Jamiolkowski fidelity of two processes.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csqpt_process_fidelity(a: *const CsqptProcess, b: *const CsqptProcess, out: *mut f64) -> CsqptStatus {
    guard(|| {
        let f = process_fidelity(&deref(a, "a")?.0, &deref(b, "b")?.0).or_status()?;
        write_out(out, f, "out")
    })
}

/// Phase of output element `ρ_kl` for input `state`. Returns
/// `UndefinedPhase` when the element is indistinguishable from zero.
///
/// # Safety
/// `process` and `state` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csqpt_output_phase(
    process: *const CsqptProcess,
    state: *const CsqptState,
    k: usize,
    l: usize,
    out: *mut f64,
) -> CsqptStatus {
    guard(|| {
        let phi = output_phase(&deref(process, "process")?.0, &deref(state, "state")?.0, k, l).or_status()?;
        write_out(out, phi, "out")
    })
}

/// Output squeezing and antisqueezing, in dB relative to vacuum, and the
/// rotation of the squeezed axis for a pure squeezed-vacuum input.
///
/// # Safety
/// `process` must be a live handle; the three outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn csqpt_predict_squeezed(
    process: *const CsqptProcess,
    squeezing_db: f64,
    phase: f64,
    min_db: *mut f64,
    max_db: *mut f64,
    axis_shift: *mut f64,
) -> CsqptStatus {
    guard(|| {
        let p = predict_squeezed(&deref(process, "process")?.0, &SqueezingSpec::pure(squeezing_db, phase)).or_status()?;
        write_out(min_db, p.min_db, "min_db")?;
        write_out(max_db, p.max_db, "max_db")?;
        write_out(axis_shift, p.phase_shift, "axis_shift")
    })
}

/// Runs one experiment (`state-demo`, `csqpt`, `squeezed-predict`,
/// `bootstrap` or `sweep-signal-power`) into `out_dir`, as the CLI does.
/// `config_toml` may be null for defaults; a non-negative `seed` overrides
/// the config's. The manifest summary is returned as JSON in `summary`
/// when that pointer is non-null.
///
/// # Safety
/// String arguments must be NUL-terminated; `summary` may be null.
#[no_mangle]
pub unsafe extern "C" fn csqpt_run(
    experiment: *const c_char,
    config_toml: *const c_char,
    seed: i64,
    out_dir: *const c_char,
    summary: *mut *mut c_char,
) -> CsqptStatus {
    guard(|| {
        let name = read_str(experiment, "experiment")?;
        let experiment: Experiment = serde_json::from_value(serde_json::Value::String(name.into())).map_err(|_| {
            set_error(format!("unknown experiment `{name}`"));
            CsqptStatus::Config
        })?;
        let mut config = if config_toml.is_null() {
            RunConfig::default()
        } else {
            RunConfig::from_toml(read_str(config_toml, "config_toml")?).or_status()?
        };
        if seed >= 0 {
            config.seed = Some(seed as u64);
        }
        let out = PathBuf::from(read_str(out_dir, "out_dir")?);
        let manifest = pipeline::run(experiment, &config, &out).or_status()?;
        if !summary.is_null() {
            summary.write(into_c_string(manifest.summary.to_string())?);
        }
        Ok(())
    })
}
