//! C ABI over the `vic` library.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns a
//! [`VicStatus`]; on failure the message is available from
//! [`vic_last_error_message`] on the same thread. Strings returned by value
//! are owned by the caller and released with [`vic_string_free`].

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use libc::{c_char, size_t};
use vic::assembly::{per_list_depth, round_robin, AssemblyConfig};
use vic::fusion::{rrf, RrfConfig};
use vic::reranker::parse_permutation;
use vic::runfile::{load_run_file, parse_run, render_run, Run};
use vic::sgrid::select_indices;
use vic::types::{PermutationStatus, QueryId, RankedList};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VicStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Io = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VicPermutationStatus {
    Clean = 0,
    Repaired = 1,
    IdentityFallback = 2,
}

impl From<PermutationStatus> for VicPermutationStatus {
    fn from(s: PermutationStatus) -> Self {
        match s {
            PermutationStatus::Clean => VicPermutationStatus::Clean,
            PermutationStatus::Repaired => VicPermutationStatus::Repaired,
            PermutationStatus::IdentityFallback => VicPermutationStatus::IdentityFallback,
        }
    }
}

/// A parsed run: one ranked list per query.
pub struct VicRunSet {
    run: Run,
}

/// An assembled candidate sequence.
pub struct VicCandidates {
    items: Vec<CString>,
    tags: Vec<CString>,
    ranks: Vec<usize>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: VicStatus, msg: impl Into<String>) -> VicStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> VicStatus) -> VicStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(VicStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, VicStatus> {
    if p.is_null() {
        return Err(fail(VicStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(VicStatus::InvalidUtf8, "string argument is not UTF-8"))
}

unsafe fn run_sets<'a>(runs: *const *const VicRunSet, count: size_t) -> Result<Vec<&'a VicRunSet>, VicStatus> {
    if runs.is_null() || count == 0 {
        return Err(fail(VicStatus::NullArgument, "no run sets given"));
    }
    std::slice::from_raw_parts(runs, count)
        .iter()
        .map(|&r| r.as_ref().ok_or_else(|| fail(VicStatus::NullArgument, "null run set")))
        .collect()
}

fn into_handle<T>(value: T, out: *mut *mut T) -> VicStatus {
    unsafe { *out = Box::into_raw(Box::new(value)) };
    VicStatus::Ok
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn vic_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vic_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a run file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vic_run_load(path: *const c_char, out: *mut *mut VicRunSet) -> VicStatus {
    guard(|| {
        if out.is_null() {
            return fail(VicStatus::NullArgument, "null out pointer");
        }
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_run_file(path) {
            Ok(run) => into_handle(VicRunSet { run }, out),
            Err(vic::Error::Io { .. }) => fail(VicStatus::Io, format!("cannot read {path}")),
            Err(e) => fail(VicStatus::InvalidInput, e.to_string()),
        }
    })
}

/// Parses run-file text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vic_run_parse(text: *const c_char, out: *mut *mut VicRunSet) -> VicStatus {
    guard(|| {
        if out.is_null() {
            return fail(VicStatus::NullArgument, "null out pointer");
        }
        let text = match str_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_run(text, Path::new("<memory>")) {
            Ok(run) => into_handle(VicRunSet { run }, out),
            Err(e) => fail(VicStatus::InvalidInput, e.to_string()),
        }
    })
}

/// # Safety
/// `run` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vic_run_free(run: *mut VicRunSet) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of queries in `run`; 0 for NULL.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vic_run_query_count(run: *const VicRunSet) -> size_t {
    run.as_ref().map_or(0, |r| r.run.len())
}

/// Renders `run` in run-file format into a new string.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vic_run_render(run: *const VicRunSet, out: *mut *mut c_char) -> VicStatus {
    guard(|| {
        let (Some(run), false) = (run.as_ref(), out.is_null()) else {
            return fail(VicStatus::NullArgument, "null argument");
        };
        match CString::new(render_run(run.run.values())) {
            Ok(s) => {
                *out = s.into_raw();
                VicStatus::Ok
            }
            Err(_) => fail(VicStatus::InvalidInput, "rendered run contains NUL"),
        }
    })
}

/// Reciprocal rank fusion of `count` runs, `depth` items per query.
///
/// # Safety
/// `runs` must point to `count` live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vic_rrf_fuse(
    runs: *const *const VicRunSet,
    count: size_t,
    k: f64,
    depth: size_t,
    out: *mut *mut VicRunSet,
) -> VicStatus {
    guard(|| {
        if out.is_null() {
            return fail(VicStatus::NullArgument, "null out pointer");
        }
        let sets = match run_sets(runs, count) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let cfg = match RrfConfig::new(k) {
            Ok(c) => c,
            Err(e) => return fail(VicStatus::InvalidInput, e.to_string()),
        };
        let queries: BTreeSet<&QueryId> = sets.iter().flat_map(|s| s.run.keys()).collect();
        let mut fused = Run::new();
        for q in queries {
            let lists: Vec<RankedList> = sets.iter().filter_map(|s| s.run.get(q).cloned()).collect();
            match rrf(&lists, &cfg, depth) {
                Ok(l) => {
                    fused.insert(q.clone(), l);
                }
                Err(e) => return fail(VicStatus::InvalidInput, e.to_string()),
            }
        }
        into_handle(VicRunSet { run: fused }, out)
    })
}

/// Round-robin assembly of `query`'s lists from `count` runs. A run without
/// the query contributes nothing.
///
/// # Safety
/// `runs` must point to `count` live handles, `query` must be a
/// NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vic_assemble(
    runs: *const *const VicRunSet,
    count: size_t,
    query: *const c_char,
    k: size_t,
    keep_duplicates: bool,
    out: *mut *mut VicCandidates,
) -> VicStatus {
    guard(|| {
        if out.is_null() {
            return fail(VicStatus::NullArgument, "null out pointer");
        }
        let sets = match run_sets(runs, count) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let query = match str_arg(query).map(QueryId::new) {
            Ok(Ok(q)) => q,
            Ok(Err(e)) => return fail(VicStatus::InvalidInput, e.to_string()),
            Err(s) => return s,
        };
        let mut lists = Vec::with_capacity(sets.len());
        for (n, s) in sets.iter().enumerate() {
            match s.run.get(&query) {
                Some(l) => lists.push(l.clone()),
                None => match RankedList::new(format!("run{n}"), query.clone(), Vec::new()) {
                    Ok(l) => lists.push(l),
                    Err(e) => return fail(VicStatus::InvalidInput, e.to_string()),
                },
            }
        }
        let mut cfg = AssemblyConfig::new(k);
        cfg.keep_duplicates = keep_duplicates;
        let seq = match round_robin(&lists, &cfg) {
            Ok(s) => s,
            Err(e) => return fail(VicStatus::InvalidInput, e.to_string()),
        };
        let cstr = |s: &str| CString::new(s).unwrap_or_default();
        let c = VicCandidates {
            items: seq.slots().iter().map(|s| cstr(s.item.as_str())).collect(),
            tags: seq.slots().iter().map(|s| cstr(&s.source_tag)).collect(),
            ranks: seq.slots().iter().map(|s| s.source_rank).collect(),
        };
        into_handle(c, out)
    })
}

/// # Safety
/// `c` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vic_candidates_free(c: *mut VicCandidates) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// # Safety
/// `c` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vic_candidates_len(c: *const VicCandidates) -> size_t {
    c.as_ref().map_or(0, |c| c.items.len())
}

/// Item id of slot `index` (0-based), borrowed from the handle; NULL when
/// out of range.
///
/// # Safety
/// `c` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vic_candidates_item(c: *const VicCandidates, index: size_t) -> *const c_char {
    c.as_ref()
        .and_then(|c| c.items.get(index))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Retriever tag of slot `index`, borrowed from the handle.
///
/// # Safety
/// `c` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vic_candidates_source_tag(c: *const VicCandidates, index: size_t) -> *const c_char {
    c.as_ref()
        .and_then(|c| c.tags.get(index))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// 1-based rank of slot `index` in its source list; 0 when out of range.
///
/// # Safety
/// `c` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vic_candidates_source_rank(c: *const VicCandidates, index: size_t) -> size_t {
    c.as_ref().and_then(|c| c.ranks.get(index)).copied().unwrap_or(0)
}

/// Parses a model reply into a permutation of `1..=k`, written to
/// `order[0..k]`.
///
/// # Safety
/// `reply` must be a NUL-terminated string, `order` must hold `k` values
/// and `status` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vic_parse_permutation(
    reply: *const c_char,
    k: size_t,
    order: *mut size_t,
    status: *mut VicPermutationStatus,
) -> VicStatus {
    guard(|| {
        if (order.is_null() && k > 0) || status.is_null() {
            return fail(VicStatus::NullArgument, "null out pointer");
        }
        let reply = match str_arg(reply) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let perm = parse_permutation(reply, k);
        if k > 0 {
            std::slice::from_raw_parts_mut(order, k).copy_from_slice(perm.order());
        }
        *status = perm.status().into();
        VicStatus::Ok
    })
}

/// Zero-based frame indices of an `s` x `s` grid over `frame_count`
/// frames, written to `out[0..s*s]`.
///
/// # Safety
/// `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn vic_select_indices(
    frame_count: size_t,
    s: u32,
    out: *mut size_t,
    out_len: size_t,
) -> VicStatus {
    guard(|| {
        if frame_count == 0 || s == 0 {
            return fail(VicStatus::InvalidInput, "frame_count and s must be positive");
        }
        let cells = (s as usize) * (s as usize);
        if out_len < cells {
            return fail(VicStatus::BufferTooSmall, format!("need {cells} slots, got {out_len}"));
        }
        if out.is_null() {
            return fail(VicStatus::NullArgument, "null out pointer");
        }
        std::slice::from_raw_parts_mut(out, cells).copy_from_slice(&select_indices(frame_count, s));
        VicStatus::Ok
    })
}

/// `ceil(k / m)`, or 0 when either argument is 0.
#[no_mangle]
pub extern "C" fn vic_per_list_depth(k: size_t, m: size_t) -> size_t {
    if k == 0 || m == 0 {
        return 0;
    }
    per_list_depth(k, m)
}
