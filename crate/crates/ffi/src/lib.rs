//! C ABI for the cascade-hybrid learners, click simulator and greedy oracle.
//!
//! Objects are opaque handles created by `*_new` functions and released by
//! the matching `*_free`. Every fallible function returns a [`ChbStatus`];
//! on failure [`chb_last_error`] describes the error on the calling thread.
//! Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use rand_chacha::ChaCha8Rng;

use cascade_hybrid::environment::{run_rng, run_step, UserModel};
use cascade_hybrid::model::{Catalog, ClickFeedback, RankedList};
use cascade_hybrid::oracle::{greedy_benchmark, list_reward};
use cascade_hybrid::policy::{CascadeLearner, FeatureKind, FeatureMap, PolicyState};
use cascade_hybrid::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    Parse = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Learner variants.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChbPolicy {
    /// Relevance and topic coverage.
    Hybrid = 0,
    /// Linear relevance only.
    LinUcb = 1,
    /// Linear on topic and relevance features.
    LinUcbFull = 2,
    /// Topic coverage only.
    Lsb = 3,
    /// Coverage on topic and clamped relevance features.
    LsbFull = 4,
}

/// Policy from its [`ChbPolicy`] code.
fn policy_kind(code: u32) -> Result<FeatureKind, Failure> {
    let kinds = [
        (ChbPolicy::Hybrid, FeatureKind::Hybrid),
        (ChbPolicy::LinUcb, FeatureKind::LinearZ),
        (ChbPolicy::LinUcbFull, FeatureKind::LinearXz),
        (ChbPolicy::Lsb, FeatureKind::CoverageX),
        (ChbPolicy::LsbFull, FeatureKind::CoverageXz),
    ];
    kinds
        .iter()
        .find(|(p, _)| *p as u32 == code)
        .map(|(_, k)| *k)
        .ok_or_else(|| Failure(ChbStatus::InvalidArgument, format!("unknown policy code {code}")))
}

/// Outcome of one simulated interaction.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChbStep {
    /// 1-based position of the click; `k + 1` when nothing was clicked.
    pub click_pos: usize,
    /// Expected clicks of the displayed list under the true attraction.
    pub expected_reward: f64,
    /// Attractions that had to be clamped into `[0, 1]`.
    pub clamp_count: usize,
}

pub struct ChbCatalog(Catalog);
pub struct ChbLearner(CascadeLearner);
pub struct ChbUser(UserModel);
pub struct ChbRng(ChaCha8Rng);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> ChbStatus {
    match err {
        Error::InvalidInput(_) | Error::TooLarge { .. } | Error::Config(_) | Error::Io { .. } => {
            ChbStatus::InvalidArgument
        }
        Error::DimensionMismatch { .. } => ChbStatus::DimensionMismatch,
        Error::Numerical(_) => ChbStatus::Numerical,
        Error::Parse { .. } => ChbStatus::Parse,
    }
}

struct Failure(ChbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ChbStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, recording any error or panic for [`chb_last_error`].
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ChbStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ChbStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            ChbStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// A slice from a C array; a null pointer is accepted for length zero.
unsafe fn as_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(slice::from_raw_parts(p, len))
    }
}

unsafe fn as_slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        Ok(&mut [])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(slice::from_raw_parts_mut(p, len))
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn rows(data: &[f64], n: usize, width: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| data[i * width..(i + 1) * width].to_vec()).collect()
}

/// Description of the last failure on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn chb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a catalog of `n_items` items from row-major `n_items x d` topic
/// coverage probabilities and `n_items x m` relevance features.
///
/// # Safety
/// `topic` and `rel` must point to arrays of the stated sizes; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn chb_catalog_new(
    n_items: usize,
    d: usize,
    m: usize,
    topic: *const f64,
    rel: *const f64,
    out: *mut *mut ChbCatalog,
) -> ChbStatus {
    guard(|| {
        let topic = as_slice(topic, n_items * d, "topic")?;
        let rel = as_slice(rel, n_items * m, "rel")?;
        let catalog = Catalog::from_features(rows(topic, n_items, d), rows(rel, n_items, m))?;
        put(out, ChbCatalog(catalog))
    })
}

/// Number of items in the catalog; 0 for a null handle.
///
/// # Safety
/// `catalog` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chb_catalog_len(catalog: *const ChbCatalog) -> usize {
    catalog.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `catalog` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chb_catalog_free(catalog: *mut ChbCatalog) {
    release(catalog)
}

/// Simulated user with topic preference `theta` (length d), relevance
/// preference `beta` (length m) and mixing weight `lambda` in `[0, 1]`.
///
/// # Safety
/// `theta` and `beta` must point to arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn chb_user_new(
    theta: *const f64,
    d: usize,
    beta: *const f64,
    m: usize,
    lambda: f64,
    out: *mut *mut ChbUser,
) -> ChbStatus {
    guard(|| {
        let theta = as_slice(theta, d, "theta")?.to_vec();
        let beta = as_slice(beta, m, "beta")?.to_vec();
        put(out, ChbUser(UserModel::new(theta, beta, lambda)?))
    })
}

/// # Safety
/// `user` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chb_user_free(user: *mut ChbUser) {
    release(user)
}

/// Random stream of run `(user, repeat)` under `master_seed`; the same
/// triple always yields the same stream.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chb_rng_new(master_seed: u64, user: u64, repeat: u64, out: *mut *mut ChbRng) -> ChbStatus {
    guard(|| put(out, ChbRng(run_rng(master_seed, user, repeat))))
}

/// # Safety
/// `rng` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chb_rng_free(rng: *mut ChbRng) {
    release(rng)
}

/// Fresh learner of kind `policy`, a [`ChbPolicy`] code, over `catalog`
/// with exploration `gamma`.
///
/// # Safety
/// `catalog` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn chb_learner_new(
    catalog: *const ChbCatalog,
    policy: u32,
    gamma: f64,
    out: *mut *mut ChbLearner,
) -> ChbStatus {
    guard(|| {
        let catalog = as_ref(catalog, "catalog")?;
        put(
            out,
            ChbLearner(CascadeLearner::new(policy_kind(policy)?, &catalog.0, gamma)?),
        )
    })
}

/// # Safety
/// `learner` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chb_learner_free(learner: *mut ChbLearner) {
    release(learner)
}

/// Topic and relevance dimensions the learner estimates.
///
/// # Safety
/// `learner` must be a live handle; `d` and `m` writable.
#[no_mangle]
pub unsafe extern "C" fn chb_learner_dims(learner: *const ChbLearner, d: *mut usize, m: *mut usize) -> ChbStatus {
    guard(|| {
        let state = as_ref(learner, "learner")?.0.state();
        *as_mut(d, "d")? = state.d();
        *as_mut(m, "m")? = state.m();
        Ok(())
    })
}

/// Writes the `k` item ids of the learner's next list to `out_ids`.
///
/// # Safety
/// `out_ids` must have room for `k` entries.
#[no_mangle]
pub unsafe extern "C" fn chb_learner_select(learner: *const ChbLearner, k: usize, out_ids: *mut usize) -> ChbStatus {
    guard(|| {
        let list = as_ref(learner, "learner")?.0.select(k)?;
        as_slice_mut(out_ids, k, "out_ids")?.copy_from_slice(list.ids());
        Ok(())
    })
}

/// Learns from a displayed list of `k` ids and the 1-based click position
/// (`k + 1` for no click).
///
/// # Safety
/// `ids` must point to `k` entries.
#[no_mangle]
pub unsafe extern "C" fn chb_learner_update(
    learner: *mut ChbLearner,
    ids: *const usize,
    k: usize,
    click_pos: usize,
) -> ChbStatus {
    guard(|| {
        let learner = &mut as_mut(learner, "learner")?.0;
        let list = RankedList::new(as_slice(ids, k, "ids")?.to_vec(), learner.features().len())?;
        learner.update(&list, ClickFeedback::new(click_pos, k)?)?;
        Ok(())
    })
}

/// Current estimates: `theta_hat` (length d) and `beta_hat` (length m).
///
/// # Safety
/// The output arrays must have the lengths passed; lengths must match the
/// learner's dimensions.
#[no_mangle]
pub unsafe extern "C" fn chb_learner_estimate(
    learner: *const ChbLearner,
    theta_out: *mut f64,
    d: usize,
    beta_out: *mut f64,
    m: usize,
) -> ChbStatus {
    guard(|| {
        let state = as_ref(learner, "learner")?.0.state();
        if (d, m) != (state.d(), state.m()) {
            return Err(Failure(
                ChbStatus::DimensionMismatch,
                format!("learner has d={} m={}, buffers d={d} m={m}", state.d(), state.m()),
            ));
        }
        let est = state.estimate();
        as_slice_mut(theta_out, d, "theta_out")?.copy_from_slice(&est.theta_hat);
        as_slice_mut(beta_out, m, "beta_out")?.copy_from_slice(&est.beta_hat);
        Ok(())
    })
}

/// Writes the learner state as versioned text plus a terminating NUL. The
/// size needed, NUL included, is always stored in `needed`; a buffer that
/// is too small (or null) yields `BufferTooSmall` and is left untouched.
///
/// # Safety
/// `buf` must be null or have room for `len` bytes; `needed` writable.
#[no_mangle]
pub unsafe extern "C" fn chb_learner_snapshot(
    learner: *const ChbLearner,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> ChbStatus {
    guard(|| {
        let text = as_ref(learner, "learner")?.0.state().to_snapshot_string();
        let size = text.len() + 1;
        *as_mut(needed, "needed")? = size;
        if buf.is_null() || len < size {
            return Err(Failure(
                ChbStatus::BufferTooSmall,
                format!("snapshot needs {size} bytes, got {len}"),
            ));
        }
        ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

/// Learner of kind `policy` (a [`ChbPolicy`] code) over `catalog` resumed from a snapshot.
///
/// # Safety
/// `snapshot` must be a NUL-terminated string; `catalog` a live handle.
#[no_mangle]
pub unsafe extern "C" fn chb_learner_restore(
    catalog: *const ChbCatalog,
    policy: u32,
    snapshot: *const c_char,
    out: *mut *mut ChbLearner,
) -> ChbStatus {
    guard(|| {
        let catalog = as_ref(catalog, "catalog")?;
        if snapshot.is_null() {
            return Err(null("snapshot"));
        }
        let text = CStr::from_ptr(snapshot).to_bytes();
        let state = PolicyState::read_snapshot(text)?;
        let features = FeatureMap::new(policy_kind(policy)?, &catalog.0);
        put(out, ChbLearner(CascadeLearner::with_state(features, state)?))
    })
}

/// One interaction: the learner shows `k` items to `user`, a click is drawn
/// from `rng` and the learner is updated. The displayed ids go to `out_ids`
/// when it is not null.
///
/// # Safety
/// All handles must be live; `out_ids` null or with room for `k` entries.
#[no_mangle]
pub unsafe extern "C" fn chb_env_step(
    learner: *mut ChbLearner,
    user: *const ChbUser,
    catalog: *const ChbCatalog,
    k: usize,
    rng: *mut ChbRng,
    out: *mut ChbStep,
    out_ids: *mut usize,
) -> ChbStatus {
    guard(|| {
        let learner = &mut as_mut(learner, "learner")?.0;
        let user = &as_ref(user, "user")?.0;
        let catalog = &as_ref(catalog, "catalog")?.0;
        let rng = &mut as_mut(rng, "rng")?.0;
        let out = as_mut(out, "out")?;
        let step = run_step(learner, user, catalog, k, rng)?;
        if !out_ids.is_null() {
            slice::from_raw_parts_mut(out_ids, k).copy_from_slice(step.list.ids());
        }
        *out = ChbStep {
            click_pos: step.feedback.click_pos(),
            expected_reward: step.expected_reward,
            clamp_count: step.clamp_count,
        };
        Ok(())
    })
}

/// Expected clicks of the greedy benchmark list of length `k`; its ids go to
/// `out_ids` when it is not null.
///
/// # Safety
/// Handles must be live; `reward` writable; `out_ids` null or with room for
/// `k` entries.
#[no_mangle]
pub unsafe extern "C" fn chb_greedy_reward(
    user: *const ChbUser,
    catalog: *const ChbCatalog,
    k: usize,
    reward: *mut f64,
    out_ids: *mut usize,
) -> ChbStatus {
    guard(|| {
        let user = &as_ref(user, "user")?.0;
        let catalog = &as_ref(catalog, "catalog")?.0;
        let list = greedy_benchmark(user, catalog, k)?;
        *as_mut(reward, "reward")? = list_reward(user, &list, catalog)?;
        if !out_ids.is_null() {
            slice::from_raw_parts_mut(out_ids, k).copy_from_slice(list.ids());
        }
        Ok(())
    })
}
