//! C interface to `hardball`.
//!
//! Objects are opaque handles created by `hb_*_new`/`hb_*_generate`/
//! `hb_simulate` and released with the matching `hb_*_free`. Every fallible
//! call returns an [`HbStatus`] and writes its result through an out-pointer,
//! which is left untouched on error. Panics are caught at the boundary and
//! reported as `HB_STATUS_PANIC`.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use hardball::cli::generate_state;
use hardball::estimates::{f_bound, g_threshold, lemma_3_10_bound, MassMultiset};
use hardball::flow::{simulate, Stop, TrajectorySegment};
use hardball::phase_space::{normalize_state, PhasePoint, SystemParams, ToleranceSet};
use hardball::subspaces::{contraction_certificate, expansion_certificate, CertificateOptions};
use hardball::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidParams = 3,
    Inadmissible = 4,
    ZeroEnergy = 5,
    SingularOrbit = 6,
    CollisionFlood = 7,
    SamplingFailed = 8,
    HypothesisUnmet = 9,
    BudgetExhausted = 10,
    IndexOutOfRange = 11,
    Internal = 12,
    Panic = 13,
}

impl From<&Error> for HbStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParams(_) => HbStatus::InvalidParams,
            Error::InadmissibleConfiguration { .. } => HbStatus::Inadmissible,
            Error::ZeroEnergy => HbStatus::ZeroEnergy,
            Error::SingularOrbit { .. } | Error::Grazing { .. } => HbStatus::SingularOrbit,
            Error::CollisionFlood { .. } => HbStatus::CollisionFlood,
            Error::SamplingFailed { .. } => HbStatus::SamplingFailed,
            Error::HypothesisUnmet(_) | Error::NoConvergence { .. } | Error::DegenerateSpan => HbStatus::HypothesisUnmet,
            Error::BudgetExhausted { .. } => HbStatus::BudgetExhausted,
            _ => HbStatus::Internal,
        }
    }
}

/// System parameters: masses, radius, torus dimension.
pub struct HbSystem(SystemParams);

/// A normalized phase point.
pub struct HbState(PhasePoint);

/// A simulated orbit segment.
pub struct HbSegment(TrajectorySegment);

/// One collision of a segment. Ball labels are 0-based.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HbEvent {
    pub t: f64,
    pub i: usize,
    pub j: usize,
    pub rel_speed: f64,
    pub cos_phi: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HbCertificateKind {
    Expansion = 0,
    Contraction = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HbCertificate {
    pub t: f64,
    pub ratio: f64,
    pub event_index: usize,
}

fn guard<F: FnOnce() -> Result<(), HbStatus>>(f: F) -> HbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HbStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => HbStatus::Panic,
    }
}

unsafe fn doubles<'a>(ptr: *const f64, n: usize) -> Result<&'a [f64], HbStatus> {
    if ptr.is_null() {
        return Err(HbStatus::NullPointer);
    }
    Ok(slice::from_raw_parts(ptr, n))
}

unsafe fn deref<'a, T>(ptr: *const T) -> Result<&'a T, HbStatus> {
    ptr.as_ref().ok_or(HbStatus::NullPointer)
}

fn store<T>(out: *mut *mut T, value: T) -> Result<(), HbStatus> {
    if out.is_null() {
        return Err(HbStatus::NullPointer);
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn write<T>(out: *mut T, value: T) -> Result<(), HbStatus> {
    if out.is_null() {
        return Err(HbStatus::NullPointer);
    }
    unsafe { *out = value };
    Ok(())
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn hb_status_message(status: HbStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        HbStatus::Ok => b"ok\0",
        HbStatus::NullPointer => b"null pointer argument\0",
        HbStatus::InvalidArgument => b"invalid argument\0",
        HbStatus::InvalidParams => b"invalid system parameters\0",
        HbStatus::Inadmissible => b"balls overlap\0",
        HbStatus::ZeroEnergy => b"velocities carry no energy\0",
        HbStatus::SingularOrbit => b"singular orbit\0",
        HbStatus::CollisionFlood => b"collision flood\0",
        HbStatus::SamplingFailed => b"could not place balls\0",
        HbStatus::HypothesisUnmet => b"hypothesis unmet\0",
        HbStatus::BudgetExhausted => b"collision budget exhausted\0",
        HbStatus::IndexOutOfRange => b"index out of range\0",
        HbStatus::Internal => b"internal error\0",
        HbStatus::Panic => b"panic caught at the C boundary\0",
    };
    s.as_ptr().cast()
}

/// Creates a system of `n` balls with the given masses and default tolerances.
///
/// # Safety
/// `masses` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hb_system_new(
    nu: usize,
    radius: f64,
    masses: *const f64,
    n: usize,
    out: *mut *mut HbSystem,
) -> HbStatus {
    guard(|| {
        let m = doubles(masses, n)?.to_vec();
        let p = SystemParams::new(nu, radius, m, ToleranceSet::default()).map_err(|e| HbStatus::from(&e))?;
        store(out, HbSystem(p))
    })
}

/// # Safety
/// `sys` must come from [`hb_system_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hb_system_free(sys: *mut HbSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Seeded random admissible state with `E = 1/2` and zero momentum.
///
/// # Safety
/// `sys` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hb_state_generate(sys: *const HbSystem, seed: u64, out: *mut *mut HbState) -> HbStatus {
    guard(|| {
        let p = &deref(sys)?.0;
        let x = generate_state(p, seed).map_err(|e| HbStatus::from(&e))?;
        store(out, HbState(x))
    })
}

/// State from raw positions and velocities (`N·ν` doubles each), wrapped
/// and normalized.
///
/// # Safety
/// `q` and `v` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hb_state_new(
    sys: *const HbSystem,
    q: *const f64,
    v: *const f64,
    len: usize,
    out: *mut *mut HbState,
) -> HbStatus {
    guard(|| {
        let p = &deref(sys)?.0;
        if len != p.compound_len() {
            return Err(HbStatus::InvalidArgument);
        }
        let (q, v) = (doubles(q, len)?, doubles(v, len)?);
        let x = normalize_state(q, v, p).map_err(|e| HbStatus::from(&e))?;
        store(out, HbState(x))
    })
}

/// Copies positions and velocities into `q` and `v` (`len = N·ν` each).
///
/// # Safety
/// `q` and `v` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hb_state_copy(state: *const HbState, q: *mut f64, v: *mut f64, len: usize) -> HbStatus {
    guard(|| {
        let x = &deref(state)?.0;
        if q.is_null() || v.is_null() {
            return Err(HbStatus::NullPointer);
        }
        if len != x.q.len() {
            return Err(HbStatus::InvalidArgument);
        }
        slice::from_raw_parts_mut(q, len).copy_from_slice(&x.q);
        slice::from_raw_parts_mut(v, len).copy_from_slice(&x.v);
        Ok(())
    })
}

/// # Safety
/// `state` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hb_state_free(state: *mut HbState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Simulates `collisions` collisions from `state`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hb_simulate(
    sys: *const HbSystem,
    state: *const HbState,
    collisions: usize,
    out: *mut *mut HbSegment,
) -> HbStatus {
    guard(|| {
        let p = &deref(sys)?.0;
        let x = &deref(state)?.0;
        if x.q.len() != p.compound_len() {
            return Err(HbStatus::InvalidArgument);
        }
        let seg = simulate(p, x, Stop::Collisions(collisions)).map_err(|e| HbStatus::from(&e))?;
        store(out, HbSegment(seg))
    })
}

/// Number of collisions in a segment (0 for a null handle).
///
/// # Safety
/// `seg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hb_segment_event_count(seg: *const HbSegment) -> usize {
    seg.as_ref().map_or(0, |s| s.0.events.len())
}

/// # Safety
/// `seg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hb_segment_event(seg: *const HbSegment, k: usize, out: *mut HbEvent) -> HbStatus {
    guard(|| {
        let s = &deref(seg)?.0;
        let e = s.events.get(k).ok_or(HbStatus::IndexOutOfRange)?;
        write(out, HbEvent { t: e.t, i: e.pair.i, j: e.pair.j, rel_speed: e.rel_speed, cos_phi: e.cos_phi })
    })
}

/// # Safety
/// `seg` must come from [`hb_simulate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hb_segment_free(seg: *mut HbSegment) {
    if !seg.is_null() {
        drop(Box::from_raw(seg));
    }
}

unsafe fn multiset(ptr: *const f64, n: usize) -> Result<MassMultiset, HbStatus> {
    MassMultiset::new(doubles(ptr, n)?).map_err(|_| HbStatus::InvalidArgument)
}

/// `f(a; m_1 … m_n)`.
///
/// # Safety
/// `masses` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hb_f_bound(masses: *const f64, n: usize, a: f64, out: *mut f64) -> HbStatus {
    guard(|| {
        if !(a >= 0.0) {
            return Err(HbStatus::InvalidArgument);
        }
        write(out, f_bound(a, &multiset(masses, n)?))
    })
}

/// Threshold `G` on relative speeds.
///
/// # Safety
/// As [`hb_f_bound`].
#[no_mangle]
pub unsafe extern "C" fn hb_g_threshold(masses: *const f64, n: usize, out: *mut f64) -> HbStatus {
    guard(|| {
        let ms = multiset(masses, n)?;
        if ms.len() < 2 {
            return Err(HbStatus::InvalidArgument);
        }
        write(out, g_threshold(&ms))
    })
}

/// `2a·sqrt(M/m)`.
///
/// # Safety
/// As [`hb_f_bound`].
#[no_mangle]
pub unsafe extern "C" fn hb_lemma310_bound(masses: *const f64, n: usize, a: f64, out: *mut f64) -> HbStatus {
    guard(|| {
        if !(a >= 0.0) {
            return Err(HbStatus::InvalidArgument);
        }
        write(out, lemma_3_10_bound(a, &multiset(masses, n)?))
    })
}

/// Searches an expansion or contraction certificate at `state` with target
/// `l` within `budget` collisions (default selection rule).
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hb_certificate(
    sys: *const HbSystem,
    state: *const HbState,
    kind: HbCertificateKind,
    l: f64,
    budget: usize,
    out: *mut HbCertificate,
) -> HbStatus {
    guard(|| {
        let p = &deref(sys)?.0;
        let x = &deref(state)?.0;
        if !(l > 0.0) || x.q.len() != p.compound_len() {
            return Err(HbStatus::InvalidArgument);
        }
        let opts = CertificateOptions { budget, ..Default::default() };
        let cert = match kind {
            HbCertificateKind::Expansion => expansion_certificate(p, x, l, &opts),
            HbCertificateKind::Contraction => contraction_certificate(p, x, l, &opts),
        }
        .map_err(|e| HbStatus::from(&e))?;
        write(out, HbCertificate { t: cert.t, ratio: cert.ratio, event_index: cert.event_index })
    })
}
