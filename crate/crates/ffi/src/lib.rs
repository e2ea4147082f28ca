//! C ABI for the `mdiqkd` model.
//!
//! A [`MdiqkdConfig`] handle holds a full run configuration and accepts the
//! same `key = value` settings as the CLI's config files. Every fallible
//! function returns a [`MdiqkdStatus`]; on failure the message is available
//! from [`mdiqkd_last_error`] on the same thread. Outputs are written only
//! on success. Panics are caught at the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mdiqkd::config::{ConfigFile, RunConfig};
use mdiqkd::engine::{Basis, Engine};
use mdiqkd::keyrate::{asymptotic_rate, two_decoy_rate};
use mdiqkd::optimize::optimize_intensities;
use mdiqkd::{ChannelGeometry, Error, IntensitySettings};

/// Result of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdiqkdStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad key, value, parameter or intensity ordering.
    InvalidArgument = 2,
    /// Non-finite result or empty feasible set.
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdiqkdBasis {
    Z = 0,
    X = 1,
}

/// Signal, decoy and weakest-decoy intensities of both parties.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MdiqkdIntensities {
    pub mu_a: f64,
    pub nu_a: f64,
    pub omega_a: f64,
    pub mu_b: f64,
    pub nu_b: f64,
    pub omega_b: f64,
}

impl From<IntensitySettings> for MdiqkdIntensities {
    fn from(s: IntensitySettings) -> Self {
        MdiqkdIntensities { mu_a: s.mu_a, nu_a: s.nu_a, omega_a: s.omega_a, mu_b: s.mu_b, nu_b: s.nu_b, omega_b: s.omega_b }
    }
}

impl From<MdiqkdIntensities> for IntensitySettings {
    fn from(s: MdiqkdIntensities) -> Self {
        IntensitySettings::new((s.mu_a, s.nu_a, s.omega_a), (s.mu_b, s.nu_b, s.omega_b))
    }
}

/// Opaque configuration handle.
pub struct MdiqkdConfig {
    inner: RunConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> MdiqkdStatus {
    if e.is_config_error() {
        MdiqkdStatus::InvalidArgument
    } else if matches!(e, Error::Io(_) | Error::Csv(_)) {
        MdiqkdStatus::Io
    } else {
        MdiqkdStatus::Numerical
    }
}

struct Fail(MdiqkdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MdiqkdStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MdiqkdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MdiqkdStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MdiqkdStatus::Panic
        }
    }
}

unsafe fn config_ref<'a>(cfg: *const MdiqkdConfig) -> Result<&'a RunConfig, Fail> {
    cfg.as_ref().map(|c| &c.inner).ok_or_else(|| null("config"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(MdiqkdStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn geometry(cfg: &RunConfig, l_ac_km: f64, l_bc_km: f64) -> Result<ChannelGeometry, Fail> {
    cfg.params.validate()?;
    Ok(ChannelGeometry::from_distances(l_ac_km, l_bc_km, cfg.params.alpha_db_per_km)?)
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mdiqkd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mdiqkd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New handle with the reference parameters. Free with [`mdiqkd_config_free`].
#[no_mangle]
pub extern "C" fn mdiqkd_config_new() -> *mut MdiqkdConfig {
    Box::into_raw(Box::new(MdiqkdConfig { inner: RunConfig::defaults(None) }))
}

/// Loads a `key = value` config file over the reference parameters.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mdiqkd_config_load(path: *const c_char, out: *mut *mut MdiqkdConfig) -> MdiqkdStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut cfg = RunConfig::defaults(None);
        cfg.apply(&ConfigFile::load(Path::new(path))?)?;
        out.write(Box::into_raw(Box::new(MdiqkdConfig { inner: cfg })));
        Ok(())
    })
}

/// Sets one key (for example `system.e_d`) from its text value.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be valid C strings.
#[no_mangle]
pub unsafe extern "C" fn mdiqkd_config_set(cfg: *mut MdiqkdConfig, key: *const c_char, value: *const c_char) -> MdiqkdStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        let (key, value) = (str_arg(key, "key")?, str_arg(value, "value")?);
        let mut next = cfg.inner.clone();
        next.set_override(key, value)?;
        cfg.inner = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mdiqkd_config_free(cfg: *mut MdiqkdConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Gain and QBER of one basis at signal intensities `mu_a`, `mu_b`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdiqkd_gain_qber(
    cfg: *const MdiqkdConfig,
    basis: MdiqkdBasis,
    l_ac_km: f64,
    l_bc_km: f64,
    mu_a: f64,
    mu_b: f64,
    gain: *mut f64,
    qber: *mut f64,
) -> MdiqkdStatus {
    guard(|| {
        let cfg = config_ref(cfg)?;
        if gain.is_null() || qber.is_null() {
            return Err(null("output"));
        }
        let geo = geometry(cfg, l_ac_km, l_bc_km)?;
        let basis = match basis {
            MdiqkdBasis::Z => Basis::Z,
            MdiqkdBasis::X => Basis::X,
        };
        let s = Engine::new(&cfg.params)?.gain_and_qber(basis, mu_a, mu_b, &geo);
        if !(s.gain.is_finite() && s.qber.is_finite()) {
            return Err(Fail(MdiqkdStatus::Numerical, "non-finite gain".into()));
        }
        write(gain, s.gain, "gain")?;
        write(qber, s.qber, "qber")
    })
}

/// Asymptotic key rate (floored at zero) with perfect decoy estimation.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdiqkd_asymptotic_rate(
    cfg: *const MdiqkdConfig,
    l_ac_km: f64,
    l_bc_km: f64,
    mu_a: f64,
    mu_b: f64,
    rate: *mut f64,
) -> MdiqkdStatus {
    guard(|| {
        let cfg = config_ref(cfg)?;
        let geo = geometry(cfg, l_ac_km, l_bc_km)?;
        write(rate, asymptotic_rate(mu_a, mu_b, &geo, &cfg.params)?.rate, "rate")
    })
}

/// Key rate from two-decoy bounds on simulated gains.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdiqkd_two_decoy_rate(
    cfg: *const MdiqkdConfig,
    l_ac_km: f64,
    l_bc_km: f64,
    intensities: *const MdiqkdIntensities,
    rate: *mut f64,
) -> MdiqkdStatus {
    guard(|| {
        let cfg = config_ref(cfg)?;
        let s = intensities.as_ref().ok_or_else(|| null("intensities"))?;
        let geo = geometry(cfg, l_ac_km, l_bc_km)?;
        write(rate, two_decoy_rate(&(*s).into(), &geo, &cfg.params)?.rate, "rate")
    })
}

/// Optimal intensities using the handle's `rate.mode`, `optimize.coupling`,
/// `bounds.*` and `search.*` settings. In asymptotic mode only `mu_a` and
/// `mu_b` are meaningful.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdiqkd_optimize(
    cfg: *const MdiqkdConfig,
    l_ac_km: f64,
    l_bc_km: f64,
    best: *mut MdiqkdIntensities,
    rate: *mut f64,
) -> MdiqkdStatus {
    guard(|| {
        let cfg = config_ref(cfg)?;
        if best.is_null() || rate.is_null() {
            return Err(null("output"));
        }
        let geo = geometry(cfg, l_ac_km, l_bc_km)?;
        let mut c = cfg.clone();
        c.l_ac_km = l_ac_km;
        c.l_bc_km = l_bc_km;
        let r = optimize_intensities(cfg.mode, c.coupling()?, &geo, &cfg.params, &cfg.options.bounds, &cfg.options.search)?;
        write(best, r.best_settings.into(), "best")?;
        write(rate, r.rate(), "rate")
    })
}
