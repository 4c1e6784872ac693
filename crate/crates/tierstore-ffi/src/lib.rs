//! C ABI bindings for the tierstore simulator and codec.
//!
//! The surface mirrors the two natural entry points of the core crate: the
//! regenerating codec (encode, decode, helper, regenerate) and the
//! scenario runner with its trace checkers. Handles are opaque; every
//! fallible call returns a [`TierstoreStatus`] and records a message
//! retrievable through [`tierstore_last_error`]. Strings returned through
//! out-pointers are NUL-terminated, allocated by this library, and must be
//! released with [`tierstore_string_free`].
//!
//! Symbol arrays are flat `uint64_t` buffers: an element is `alpha`
//! symbols, a value is `b` symbols, a helper is `beta` symbols, and lists
//! of elements or helpers concatenate their entries in argument order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::slice;
use tierstore::check::{run_checks, CheckKind};
use tierstore::codec::{Element, Helper, RegenCode};
use tierstore::metrics;
use tierstore::protocol::Mutation;
use tierstore::sim::scenario::Scenario;
use tierstore::sim::{run_scenario, trace, SimRun};

/// Result of every fallible call. Anything but `Ok` leaves a description
/// in [`tierstore_last_error`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TierstoreStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// Code or scenario parameters were rejected.
    InvalidParams = 3,
    /// The scenario JSON did not parse or validate.
    BadScenario = 4,
    /// A buffer length or node index disagrees with the code's geometry.
    BadInput = 5,
    /// The codec refused the operation (dependent points, wrong counts).
    CodecFailure = 6,
    /// An unknown mutation or check name was supplied.
    UnknownName = 7,
    /// Serialization failed; indicates a bug in this library.
    Internal = 8,
}

/// Opaque handle to a regenerating code.
pub struct TierstoreCode {
    inner: RegenCode,
}

/// Opaque handle to one executed scenario: its trace and parameters.
pub struct TierstoreRun {
    inner: SimRun,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: TierstoreStatus, msg: impl Into<String>) -> TierstoreStatus {
    let c = CString::new(msg.into())
        .unwrap_or_else(|_| CString::new("error message contained a NUL byte").expect("static"));
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
    status
}

/// Description of the most recent failure on the calling thread. The
/// pointer stays valid until the next failing call on the same thread;
/// never free it.
#[no_mangle]
pub extern "C" fn tierstore_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned through any `char **` out-parameter. NULL is
/// ignored.
///
/// # Safety
/// `s` must be a pointer previously written by this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn tierstore_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> TierstoreStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            TierstoreStatus::Ok
        }
        Err(_) => fail(TierstoreStatus::Internal, "output contained a NUL byte"),
    }
}

/// Builds a regenerating code over `n` nodes with reconstruction degree
/// `k`, repair degree `d`, `beta` stripes, and prime field modulus `q`,
/// and writes its handle to `out`. Requires `1 <= k <= d`, `k <= n`, and
/// `q > n`; release the handle with [`tierstore_code_free`].
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tierstore_code_new(
    n: u32,
    k: u32,
    d: u32,
    beta: u32,
    q: u64,
    out: *mut *mut TierstoreCode,
) -> TierstoreStatus {
    if out.is_null() {
        return fail(TierstoreStatus::NullArgument, "out is NULL");
    }
    match RegenCode::new(n, k, d, beta, q) {
        Ok(code) => {
            *out = Box::into_raw(Box::new(TierstoreCode { inner: code }));
            TierstoreStatus::Ok
        }
        Err(e) => fail(TierstoreStatus::InvalidParams, e.to_string()),
    }
}

/// Releases a code handle. NULL is ignored.
///
/// # Safety
/// `code` must come from [`tierstore_code_new`] and not be used afterward.
#[no_mangle]
pub unsafe extern "C" fn tierstore_code_free(code: *mut TierstoreCode) {
    if !code.is_null() {
        drop(Box::from_raw(code));
    }
}

/// Number of nodes `n`; 0 if `code` is NULL.
///
/// # Safety
/// `code` must be NULL or a live handle from [`tierstore_code_new`].
#[no_mangle]
pub unsafe extern "C" fn tierstore_code_nodes(code: *const TierstoreCode) -> u32 {
    code.as_ref().map_or(0, |c| c.inner.n())
}

/// Symbols per stored element, `alpha = d * beta`; 0 if `code` is NULL.
///
/// # Safety
/// `code` must be NULL or a live handle from [`tierstore_code_new`].
#[no_mangle]
pub unsafe extern "C" fn tierstore_code_element_len(code: *const TierstoreCode) -> u32 {
    code.as_ref().map_or(0, |c| c.inner.alpha())
}

/// Symbols per value, `b`; 0 if `code` is NULL.
///
/// # Safety
/// `code` must be NULL or a live handle from [`tierstore_code_new`].
#[no_mangle]
pub unsafe extern "C" fn tierstore_code_value_len(code: *const TierstoreCode) -> u32 {
    code.as_ref().map_or(0, |c| c.inner.b())
}

/// Symbols per repair helper, `beta`; 0 if `code` is NULL.
///
/// # Safety
/// `code` must be NULL or a live handle from [`tierstore_code_new`].
#[no_mangle]
pub unsafe extern "C" fn tierstore_code_helper_len(code: *const TierstoreCode) -> u32 {
    code.as_ref().map_or(0, |c| c.inner.beta())
}

/// Encodes a value of `value_len == b` symbols into all `n` elements,
/// written to `elements_out` as `n * alpha` symbols, node 1 first.
///
/// # Safety
/// `value` must hold `value_len` readable symbols and `elements_out` must
/// hold `elements_len` writable symbols.
#[no_mangle]
pub unsafe extern "C" fn tierstore_code_encode(
    code: *const TierstoreCode,
    value: *const u64,
    value_len: usize,
    elements_out: *mut u64,
    elements_len: usize,
) -> TierstoreStatus {
    let Some(code) = code.as_ref() else {
        return fail(TierstoreStatus::NullArgument, "code is NULL");
    };
    if value.is_null() || elements_out.is_null() {
        return fail(TierstoreStatus::NullArgument, "value or elements_out is NULL");
    }
    let (n, alpha, b) =
        (code.inner.n() as usize, code.inner.alpha() as usize, code.inner.b() as usize);
    if value_len != b {
        return fail(
            TierstoreStatus::BadInput,
            format!("value_len {value_len} differs from the value size {b}"),
        );
    }
    if elements_len != n * alpha {
        return fail(
            TierstoreStatus::BadInput,
            format!("elements_len {elements_len} differs from n * alpha = {}", n * alpha),
        );
    }
    let value = slice::from_raw_parts(value, value_len).to_vec();
    match code.inner.encode(&value) {
        Ok(elements) => {
            let out = slice::from_raw_parts_mut(elements_out, elements_len);
            for (i, element) in elements.iter().enumerate() {
                out[i * alpha..(i + 1) * alpha].copy_from_slice(element);
            }
            TierstoreStatus::Ok
        }
        Err(e) => fail(TierstoreStatus::CodecFailure, e.to_string()),
    }
}

/// Decodes a value from `count >= k` elements. `nodes` names the 1-based
/// node of each element; `elements` concatenates the elements in the same
/// order, `count * alpha` symbols in all.
///
/// # Safety
/// `nodes` must hold `count` readable indices, `elements` must hold
/// `count * alpha` readable symbols, and `value_out` must hold
/// `value_len` writable symbols.
#[no_mangle]
pub unsafe extern "C" fn tierstore_code_decode(
    code: *const TierstoreCode,
    nodes: *const u32,
    elements: *const u64,
    count: usize,
    value_out: *mut u64,
    value_len: usize,
) -> TierstoreStatus {
    let Some(code) = code.as_ref() else {
        return fail(TierstoreStatus::NullArgument, "code is NULL");
    };
    if nodes.is_null() || elements.is_null() || value_out.is_null() {
        return fail(TierstoreStatus::NullArgument, "nodes, elements, or value_out is NULL");
    }
    let (alpha, b) = (code.inner.alpha() as usize, code.inner.b() as usize);
    if value_len != b {
        return fail(
            TierstoreStatus::BadInput,
            format!("value_len {value_len} differs from the value size {b}"),
        );
    }
    let nodes = slice::from_raw_parts(nodes, count);
    let symbols = slice::from_raw_parts(elements, count * alpha);
    let shares: Vec<(u32, Element)> = nodes
        .iter()
        .zip(symbols.chunks_exact(alpha))
        .map(|(&i, chunk)| (i, chunk.to_vec()))
        .collect();
    match code.inner.decode(&shares) {
        Ok(decoded) => {
            slice::from_raw_parts_mut(value_out, value_len).copy_from_slice(&decoded);
            TierstoreStatus::Ok
        }
        Err(e) => fail(TierstoreStatus::CodecFailure, e.to_string()),
    }
}

/// Computes the repair helper a node derives from its own element for the
/// 1-based `target` node: `helper_len == beta` symbols.
///
/// # Safety
/// `element` must hold `element_len` readable symbols and `helper_out`
/// must hold `helper_len` writable symbols.
#[no_mangle]
pub unsafe extern "C" fn tierstore_code_helper(
    code: *const TierstoreCode,
    element: *const u64,
    element_len: usize,
    target: u32,
    helper_out: *mut u64,
    helper_len: usize,
) -> TierstoreStatus {
    let Some(code) = code.as_ref() else {
        return fail(TierstoreStatus::NullArgument, "code is NULL");
    };
    if element.is_null() || helper_out.is_null() {
        return fail(TierstoreStatus::NullArgument, "element or helper_out is NULL");
    }
    let (alpha, beta) = (code.inner.alpha() as usize, code.inner.beta() as usize);
    if element_len != alpha {
        return fail(
            TierstoreStatus::BadInput,
            format!("element_len {element_len} differs from alpha = {alpha}"),
        );
    }
    if helper_len != beta {
        return fail(
            TierstoreStatus::BadInput,
            format!("helper_len {helper_len} differs from beta = {beta}"),
        );
    }
    let element = slice::from_raw_parts(element, element_len).to_vec();
    match code.inner.helper(&element, target) {
        Ok(helper) => {
            slice::from_raw_parts_mut(helper_out, helper_len).copy_from_slice(&helper);
            TierstoreStatus::Ok
        }
        Err(e) => fail(TierstoreStatus::CodecFailure, e.to_string()),
    }
}

/// Rebuilds the 1-based `target` node's element from `count >= d` helpers.
/// `helper_nodes` names the 1-based sender of each helper; `helpers`
/// concatenates the helpers in the same order, `count * beta` symbols.
///
/// # Safety
/// `helper_nodes` must hold `count` readable indices, `helpers` must hold
/// `count * beta` readable symbols, and `element_out` must hold
/// `element_len` writable symbols.
#[no_mangle]
pub unsafe extern "C" fn tierstore_code_regenerate(
    code: *const TierstoreCode,
    target: u32,
    helper_nodes: *const u32,
    helpers: *const u64,
    count: usize,
    element_out: *mut u64,
    element_len: usize,
) -> TierstoreStatus {
    let Some(code) = code.as_ref() else {
        return fail(TierstoreStatus::NullArgument, "code is NULL");
    };
    if helper_nodes.is_null() || helpers.is_null() || element_out.is_null() {
        return fail(TierstoreStatus::NullArgument, "helper_nodes, helpers, or element_out is NULL");
    }
    let (alpha, beta) = (code.inner.alpha() as usize, code.inner.beta() as usize);
    if element_len != alpha {
        return fail(
            TierstoreStatus::BadInput,
            format!("element_len {element_len} differs from alpha = {alpha}"),
        );
    }
    let nodes = slice::from_raw_parts(helper_nodes, count);
    let symbols = slice::from_raw_parts(helpers, count * beta);
    let hs: Vec<(u32, Helper)> = nodes
        .iter()
        .zip(symbols.chunks_exact(beta))
        .map(|(&i, chunk)| (i, chunk.to_vec()))
        .collect();
    match code.inner.regenerate(target, &hs) {
        Ok(rebuilt) => {
            slice::from_raw_parts_mut(element_out, element_len).copy_from_slice(&rebuilt);
            TierstoreStatus::Ok
        }
        Err(e) => fail(TierstoreStatus::CodecFailure, e.to_string()),
    }
}

/// Parses a scenario from JSON, executes it, and writes the run handle to
/// `out`. `mutation` is NULL for a faithful run or one of the planted
/// defect names (`skip-broadcast-wait`, `ack-at-k`, `skip-write-back`,
/// `allow-tc-decrease`, `decode-k-minus-1`). Release the handle with
/// [`tierstore_run_free`].
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string, `mutation` NULL or
/// the same, and `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tierstore_run_scenario(
    scenario_json: *const c_char,
    mutation: *const c_char,
    out: *mut *mut TierstoreRun,
) -> TierstoreStatus {
    if scenario_json.is_null() || out.is_null() {
        return fail(TierstoreStatus::NullArgument, "scenario_json or out is NULL");
    }
    let Ok(text) = CStr::from_ptr(scenario_json).to_str() else {
        return fail(TierstoreStatus::Utf8, "scenario_json is not valid UTF-8");
    };
    let mutation = if mutation.is_null() {
        None
    } else {
        let Ok(name) = CStr::from_ptr(mutation).to_str() else {
            return fail(TierstoreStatus::Utf8, "mutation is not valid UTF-8");
        };
        match name.parse::<Mutation>() {
            Ok(m) => Some(m),
            Err(e) => return fail(TierstoreStatus::UnknownName, e),
        }
    };
    let scenario = match Scenario::from_json(text) {
        Ok(s) => s,
        Err(e) => return fail(TierstoreStatus::BadScenario, e.to_string()),
    };
    *out = Box::into_raw(Box::new(TierstoreRun { inner: run_scenario(&scenario, mutation) }));
    TierstoreStatus::Ok
}

/// Releases a run handle. NULL is ignored.
///
/// # Safety
/// `run` must come from [`tierstore_run_scenario`] and not be used
/// afterward.
#[no_mangle]
pub unsafe extern "C" fn tierstore_run_free(run: *mut TierstoreRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of trace records in the run; 0 if `run` is NULL.
///
/// # Safety
/// `run` must be NULL or a live handle from [`tierstore_run_scenario`].
#[no_mangle]
pub unsafe extern "C" fn tierstore_run_record_count(run: *const TierstoreRun) -> u64 {
    run.as_ref().map_or(0, |r| r.inner.records.len() as u64)
}

/// Messages still in flight when the run ended; 0 if `run` is NULL.
///
/// # Safety
/// `run` must be NULL or a live handle from [`tierstore_run_scenario`].
#[no_mangle]
pub unsafe extern "C" fn tierstore_run_undelivered(run: *const TierstoreRun) -> u64 {
    run.as_ref().map_or(0, |r| r.inner.undelivered)
}

/// Checks the run's trace and reports the verdict. `checks` is NULL for
/// all checks or a comma-separated subset of `atomicity`, `liveness`,
/// `invariants`, `latency`, `costs`. Writes overall pass/fail to
/// `pass_out` and, when `json_out` is non-NULL, the full verdict as JSON;
/// free it with [`tierstore_string_free`].
///
/// # Safety
/// `run` must be a live handle, `checks` NULL or a NUL-terminated string,
/// `pass_out` NULL or writable, and `json_out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn tierstore_run_verdict_json(
    run: *const TierstoreRun,
    checks: *const c_char,
    pass_out: *mut bool,
    json_out: *mut *mut c_char,
) -> TierstoreStatus {
    let Some(run) = run.as_ref() else {
        return fail(TierstoreStatus::NullArgument, "run is NULL");
    };
    let kinds: Vec<CheckKind> = if checks.is_null() {
        CheckKind::ALL.to_vec()
    } else {
        let Ok(list) = CStr::from_ptr(checks).to_str() else {
            return fail(TierstoreStatus::Utf8, "checks is not valid UTF-8");
        };
        let mut kinds = Vec::new();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name.parse::<CheckKind>() {
                Ok(k) => kinds.push(k),
                Err(e) => return fail(TierstoreStatus::UnknownName, e),
            }
        }
        kinds
    };
    let verdict = run_checks(&run.inner, &kinds);
    if !pass_out.is_null() {
        *pass_out = verdict.pass;
    }
    if !json_out.is_null() {
        let json = match serde_json::to_string_pretty(&verdict) {
            Ok(j) => j,
            Err(e) => return fail(TierstoreStatus::Internal, e.to_string()),
        };
        return write_string(json_out, json);
    }
    TierstoreStatus::Ok
}

/// Writes the run's trace as JSON Lines, one record per line; free the
/// string with [`tierstore_string_free`].
///
/// # Safety
/// `run` must be a live handle and `out` must point to writable storage
/// for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tierstore_run_trace_jsonl(
    run: *const TierstoreRun,
    out: *mut *mut c_char,
) -> TierstoreStatus {
    let Some(run) = run.as_ref() else {
        return fail(TierstoreStatus::NullArgument, "run is NULL");
    };
    if out.is_null() {
        return fail(TierstoreStatus::NullArgument, "out is NULL");
    }
    let mut bytes = Vec::new();
    if let Err(e) = trace::write_jsonl(&mut bytes, &run.inner.records) {
        return fail(TierstoreStatus::Internal, e.to_string());
    }
    match String::from_utf8(bytes) {
        Ok(s) => write_string(out, s),
        Err(e) => fail(TierstoreStatus::Internal, e.to_string()),
    }
}

/// Writes the run's per-operation cost table as CSV; free the string with
/// [`tierstore_string_free`].
///
/// # Safety
/// `run` must be a live handle and `out` must point to writable storage
/// for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tierstore_run_ops_csv(
    run: *const TierstoreRun,
    out: *mut *mut c_char,
) -> TierstoreStatus {
    let Some(run) = run.as_ref() else {
        return fail(TierstoreStatus::NullArgument, "run is NULL");
    };
    if out.is_null() {
        return fail(TierstoreStatus::NullArgument, "out is NULL");
    }
    let report = metrics::measure_costs(&run.inner.records, &run.inner.params);
    write_string(out, metrics::ops_csv(&report))
}

/// Writes the run's storage timeline as CSV; free the string with
/// [`tierstore_string_free`].
///
/// # Safety
/// `run` must be a live handle and `out` must point to writable storage
/// for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tierstore_run_storage_csv(
    run: *const TierstoreRun,
    out: *mut *mut c_char,
) -> TierstoreStatus {
    let Some(run) = run.as_ref() else {
        return fail(TierstoreStatus::NullArgument, "run is NULL");
    };
    if out.is_null() {
        return fail(TierstoreStatus::NullArgument, "out is NULL");
    }
    let report = metrics::measure_costs(&run.inner.records, &run.inner.params);
    write_string(out, metrics::storage_csv(&report.storage, &run.inner.params))
}
