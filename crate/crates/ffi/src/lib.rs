//! C ABI over `closest_balanced`.
//!
//! Objects are opaque heap handles released with the matching `*_free`.
//! Fallible calls return a [`CbgStatus`]; the message of the last failure on
//! the calling thread is available from [`cbg_last_error`].
//!
//! Game values are indexed by coalition bitmask: entry `s` of a buffer of
//! length `2^n` holds v(S) where bit `i` of `s` is player `i + 1`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use closest_balanced::mbc::{self, MbcCatalog};
use closest_balanced::projection::{self, ClobisOptions, ProjectionResult, Status, WeightProfile};
use closest_balanced::{Error, Game};

/// Outcome codes of fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGame = 3,
    Numerical = 4,
    NotCertified = 5,
    Io = 6,
    Panic = 7,
}

pub struct CbgGame(Game);
pub struct CbgCatalog(MbcCatalog);
pub struct CbgResult(ProjectionResult);

/// Solver settings; obtain defaults from [`cbg_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CbgOptions {
    pub max_iters: usize,
    pub max_restarts: usize,
    pub seed: u64,
    pub tie_tol: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> CbgStatus {
    match e {
        Error::PlayerCount(_)
        | Error::InvalidCoalition { .. }
        | Error::EmptyCoalition
        | Error::NonFinite { .. }
        | Error::BadLabel(_)
        | Error::Json(_) => CbgStatus::InvalidGame,
        Error::SvdNoConvergence(_) => CbgStatus::Numerical,
        Error::NotCertified(_) => CbgStatus::NotCertified,
        Error::Io(_) | Error::CorruptCatalog { .. } | Error::ChecksumMismatch { .. } => CbgStatus::Io,
        _ => CbgStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F>(f: F) -> CbgStatus
where
    F: FnOnce() -> Result<(), (CbgStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CbgStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CbgStatus::Panic
        }
    }
}

fn lib<T>(r: closest_balanced::Result<T>) -> Result<T, (CbgStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null() -> (CbgStatus, String) {
    (CbgStatus::NullPointer, "null pointer argument".into())
}

unsafe fn as_ref<'a, T>(p: *const T) -> Result<&'a T, (CbgStatus, String)> {
    p.as_ref().ok_or_else(null)
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (CbgStatus, String)> {
    if out.is_null() {
        return Err(null());
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, (CbgStatus, String)> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CbgStatus::InvalidArgument, "string is not UTF-8".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cbg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn cbg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn cbg_options_default() -> CbgOptions {
    let d = ClobisOptions::default();
    CbgOptions {
        max_iters: d.max_iters,
        max_restarts: d.max_restarts,
        seed: d.seed,
        tie_tol: d.tie_tol,
    }
}

/// Builds a game from `2^n` values indexed by bitmask.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbg_game_from_values(
    n: usize,
    values: *const f64,
    len: usize,
    out: *mut *mut CbgGame,
) -> CbgStatus {
    guard(|| {
        if values.is_null() {
            return Err(null());
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        let g = lib(Game::from_values(n, v))?;
        put(out, CbgGame(g))
    })
}

/// Parses a game from its JSON form.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbg_game_from_json(json: *const c_char, out: *mut *mut CbgGame) -> CbgStatus {
    guard(|| {
        let g = lib(Game::from_json(cstr(json)?))?;
        put(out, CbgGame(g))
    })
}

/// Number of players, or 0 for a null handle.
///
/// # Safety
/// `game` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbg_game_players(game: *const CbgGame) -> usize {
    game.as_ref().map_or(0, |g| g.0.players())
}

/// Copies the `2^n` values into `buf`.
///
/// # Safety
/// `game` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cbg_game_values(game: *const CbgGame, buf: *mut f64, len: usize) -> CbgStatus {
    guard(|| copy_out(as_ref(game)?.0.values(), buf, len))
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), (CbgStatus, String)> {
    if buf.is_null() {
        return Err(null());
    }
    if len < src.len() {
        return Err((
            CbgStatus::InvalidArgument,
            format!("buffer holds {len} values, need {}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// # Safety
/// `game` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cbg_game_free(game: *mut CbgGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Projects `game` with uniform weights. `weights` may be null, or point to
/// `2^n` positive values indexed by bitmask (only proper coalitions are read).
///
/// A run that ends in an unresolved cycle still yields a result; check
/// [`cbg_result_converged`].
///
/// # Safety
/// Pointers must be null or valid as described; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbg_project(
    game: *const CbgGame,
    weights: *const f64,
    options: *const CbgOptions,
    out: *mut *mut CbgResult,
) -> CbgStatus {
    guard(|| {
        let v = &as_ref(game)?.0;
        let n = v.players();
        let gamma = if weights.is_null() {
            WeightProfile::uniform(n)
        } else {
            let w = std::slice::from_raw_parts(weights, 1usize << n);
            let grand = (1u32 << n) - 1;
            let entries = (1..grand).map(|s| (closest_balanced::Coalition(s), w[s as usize]));
            lib(WeightProfile::from_map(n, entries))?
        };
        let o = options.as_ref().copied().unwrap_or_else(|| cbg_options_default());
        let opts = ClobisOptions {
            max_iters: o.max_iters,
            max_restarts: o.max_restarts,
            seed: o.seed,
            tie_tol: o.tie_tol,
            pinv_tol: None,
        };
        let r = lib(projection::clobis(v, &gamma, &opts))?;
        put(out, CbgResult(r))
    })
}

/// 1 when the solver certified optimality, 0 otherwise (or for null).
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbg_result_converged(result: *const CbgResult) -> i32 {
    result.as_ref().map_or(0, |r| (r.0.status == Status::Converged) as i32)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbg_result_iterations(result: *const CbgResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.iterations)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbg_result_restarts(result: *const CbgResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.restarts)
}

/// Weighted squared distance between the input and its projection; NaN for null.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbg_result_objective(result: *const CbgResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.objective)
}

/// Copies the core allocation x* (n values).
///
/// # Safety
/// `result` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cbg_result_allocation(result: *const CbgResult, buf: *mut f64, len: usize) -> CbgStatus {
    guard(|| copy_out(&as_ref(result)?.0.x_star, buf, len))
}

/// New game handle holding the projection v*.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cbg_result_game(result: *const CbgResult, out: *mut *mut CbgGame) -> CbgStatus {
    guard(|| {
        let g = as_ref(result)?.0.v_star.clone();
        put(out, CbgGame(g))
    })
}

/// Full result as JSON; release with [`cbg_string_free`].
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbg_result_json(result: *const CbgResult) -> *mut c_char {
    let Some(r) = result.as_ref() else {
        set_error("null pointer argument".into());
        return ptr::null_mut();
    };
    match serde_json::to_string(&r.0) {
        Ok(s) => CString::new(s).map_or(ptr::null_mut(), CString::into_raw),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cbg_result_free(result: *mut CbgResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn cbg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Enumerates the minimal balanced collections for `n ≤ 5` players, or
/// `n = 6` when `allow_long` is nonzero.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbg_catalog_enumerate(
    n: usize,
    include_trivial: i32,
    allow_long: i32,
    out: *mut *mut CbgCatalog,
) -> CbgStatus {
    guard(|| {
        let opts = mbc::EnumerateOptions {
            include_trivial: include_trivial != 0,
            allow_long: allow_long != 0,
        };
        let c = lib(mbc::enumerate_mbc_with(n, opts))?;
        put(out, CbgCatalog(c))
    })
}

/// Loads a catalog cache file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cbg_catalog_load(path: *const c_char, out: *mut *mut CbgCatalog) -> CbgStatus {
    guard(|| {
        let c = lib(MbcCatalog::load(std::path::Path::new(cstr(path)?)))?;
        put(out, CbgCatalog(c))
    })
}

/// Number of collections in the catalog.
///
/// # Safety
/// `catalog` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbg_catalog_len(catalog: *const CbgCatalog) -> usize {
    catalog.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `catalog` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cbg_catalog_free(catalog: *mut CbgCatalog) {
    if !catalog.is_null() {
        drop(Box::from_raw(catalog));
    }
}

/// Writes 1 to `balanced` when the game has a nonempty core, else 0. A
/// negative `tol` selects the default tolerance.
///
/// # Safety
/// Handles must be live and `balanced` writable.
#[no_mangle]
pub unsafe extern "C" fn cbg_is_balanced(
    game: *const CbgGame,
    catalog: *const CbgCatalog,
    tol: f64,
    balanced: *mut i32,
) -> CbgStatus {
    guard(|| {
        let g = &as_ref(game)?.0;
        let c = &as_ref(catalog)?.0;
        if balanced.is_null() {
            return Err(null());
        }
        let tol = (tol >= 0.0).then_some(tol);
        let check = lib(mbc::is_balanced(g, c, tol))?;
        *balanced = check.balanced as i32;
        Ok(())
    })
}
