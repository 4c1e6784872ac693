//! Smoke tests driving the library strictly through its C ABI: every call
//! goes through the exported `extern "C"` functions with raw pointers, as a
//! C caller would.

use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;
use tierstore_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(tierstore_last_error()) }.to_string_lossy().into_owned()
}

fn take_string(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let owned = unsafe { CStr::from_ptr(s) }.to_string_lossy().into_owned();
    unsafe { tierstore_string_free(s) };
    owned
}

#[test]
fn codec_round_trips_through_the_c_abi() {
    unsafe {
        let mut code: *mut TierstoreCode = ptr::null_mut();
        assert_eq!(tierstore_code_new(5, 2, 3, 1, 13, &mut code), TierstoreStatus::Ok);
        let (n, alpha, b, beta) = (
            tierstore_code_nodes(code) as usize,
            tierstore_code_element_len(code) as usize,
            tierstore_code_value_len(code) as usize,
            tierstore_code_helper_len(code) as usize,
        );
        assert_eq!((n, alpha, b, beta), (5, 3, 5, 1));

        let value: Vec<u64> = vec![1, 2, 3, 4, 5];
        let mut elements = vec![0u64; n * alpha];
        assert_eq!(
            tierstore_code_encode(code, value.as_ptr(), b, elements.as_mut_ptr(), n * alpha),
            TierstoreStatus::Ok
        );

        // Decode from nodes 2 and 4.
        let nodes: Vec<u32> = vec![2, 4];
        let shares: Vec<u64> = elements[alpha..2 * alpha]
            .iter()
            .chain(&elements[3 * alpha..4 * alpha])
            .copied()
            .collect();
        let mut decoded = vec![0u64; b];
        assert_eq!(
            tierstore_code_decode(
                code,
                nodes.as_ptr(),
                shares.as_ptr(),
                2,
                decoded.as_mut_ptr(),
                b
            ),
            TierstoreStatus::Ok
        );
        assert_eq!(decoded, value);

        // Repair node 1 from helpers of nodes 2, 3, 5.
        let helper_nodes: Vec<u32> = vec![2, 3, 5];
        let mut helpers = vec![0u64; 3 * beta];
        for (j, &i) in helper_nodes.iter().enumerate() {
            let element = &elements[(i as usize - 1) * alpha..i as usize * alpha];
            assert_eq!(
                tierstore_code_helper(
                    code,
                    element.as_ptr(),
                    alpha,
                    1,
                    helpers[j * beta..].as_mut_ptr(),
                    beta
                ),
                TierstoreStatus::Ok
            );
        }
        let mut rebuilt = vec![0u64; alpha];
        assert_eq!(
            tierstore_code_regenerate(
                code,
                1,
                helper_nodes.as_ptr(),
                helpers.as_ptr(),
                3,
                rebuilt.as_mut_ptr(),
                alpha
            ),
            TierstoreStatus::Ok
        );
        assert_eq!(rebuilt, elements[..alpha]);

        tierstore_code_free(code);
    }
}

#[test]
fn invalid_arguments_set_statuses_and_messages() {
    unsafe {
        let mut code: *mut TierstoreCode = ptr::null_mut();
        assert_eq!(
            tierstore_code_new(5, 2, 3, 1, 13, ptr::null_mut()),
            TierstoreStatus::NullArgument
        );
        assert_eq!(tierstore_code_new(8, 2, 3, 1, 7, &mut code), TierstoreStatus::InvalidParams);
        assert!(last_error().contains("q=7"), "got {:?}", last_error());

        assert_eq!(tierstore_code_new(5, 2, 3, 1, 13, &mut code), TierstoreStatus::Ok);
        let value = [1u64, 2, 3, 4, 5];
        let mut elements = [0u64; 15];
        assert_eq!(
            tierstore_code_encode(code, value.as_ptr(), 4, elements.as_mut_ptr(), 15),
            TierstoreStatus::BadInput
        );
        assert!(last_error().contains("value_len 4"), "got {:?}", last_error());
        assert_eq!(tierstore_code_element_len(ptr::null()), 0);
        tierstore_code_free(code);

        let bad = CString::new("{").unwrap();
        let mut run: *mut TierstoreRun = ptr::null_mut();
        assert_eq!(
            tierstore_run_scenario(bad.as_ptr(), ptr::null(), &mut run),
            TierstoreStatus::BadScenario
        );

        let good = CString::new(scenario_json()).unwrap();
        let unknown = CString::new("boom").unwrap();
        assert_eq!(
            tierstore_run_scenario(good.as_ptr(), unknown.as_ptr(), &mut run),
            TierstoreStatus::UnknownName
        );
        assert!(last_error().contains("boom"), "got {:?}", last_error());
    }
}

fn scenario_json() -> String {
    serde_json::json!({
        "version": 1,
        "code": { "n1": 4, "f1": 1, "n2": 5, "f2": 1, "beta": 1, "q": 65537 },
        "delays": {
            "client_edge": { "kind": "fixed", "value": 1 },
            "edge_edge": { "kind": "fixed", "value": 1 },
            "edge_backend": { "kind": "fixed", "value": 10 }
        },
        "workload": [
            { "client": "w1", "op": "write", "value_seed": 7, "at": 0 },
            { "client": "r1", "op": "read", "at": 40 }
        ],
        "seed": 1,
        "horizon": 500
    })
    .to_string()
}

#[test]
fn scenario_runs_and_reports_through_the_c_abi() {
    unsafe {
        let json = CString::new(scenario_json()).unwrap();
        let mut run: *mut TierstoreRun = ptr::null_mut();
        assert_eq!(
            tierstore_run_scenario(json.as_ptr(), ptr::null(), &mut run),
            TierstoreStatus::Ok
        );
        assert!(tierstore_run_record_count(run) > 0);
        assert_eq!(tierstore_run_undelivered(run), 0);

        let mut pass = false;
        let mut verdict: *mut c_char = ptr::null_mut();
        assert_eq!(
            tierstore_run_verdict_json(run, ptr::null(), &mut pass, &mut verdict),
            TierstoreStatus::Ok
        );
        assert!(pass);
        let verdict = take_string(verdict);
        assert!(verdict.contains("\"atomicity\""), "got {verdict}");

        let checks = CString::new("atomicity, liveness").unwrap();
        assert_eq!(
            tierstore_run_verdict_json(run, checks.as_ptr(), &mut pass, ptr::null_mut()),
            TierstoreStatus::Ok
        );
        assert!(pass);

        let mut trace: *mut c_char = ptr::null_mut();
        assert_eq!(tierstore_run_trace_jsonl(run, &mut trace), TierstoreStatus::Ok);
        let trace = take_string(trace);
        assert_eq!(trace.lines().count() as u64, tierstore_run_record_count(run));

        let mut ops: *mut c_char = ptr::null_mut();
        assert_eq!(tierstore_run_ops_csv(run, &mut ops), TierstoreStatus::Ok);
        let ops = take_string(ops);
        assert!(ops.starts_with("op,kind,tag,"), "got {ops}");
        assert!(ops.contains("w1:1,write"), "got {ops}");

        let mut storage: *mut c_char = ptr::null_mut();
        assert_eq!(tierstore_run_storage_csv(run, &mut storage), TierstoreStatus::Ok);
        assert!(take_string(storage).starts_with("time,"));

        // A planted defect flips the verdict.
        let mutation = CString::new("skip-broadcast-wait").unwrap();
        let mut mutated: *mut TierstoreRun = ptr::null_mut();
        assert_eq!(
            tierstore_run_scenario(json.as_ptr(), mutation.as_ptr(), &mut mutated),
            TierstoreStatus::Ok
        );
        assert!(!mutated.is_null());
        tierstore_run_free(mutated);

        tierstore_run_free(run);
    }
}

#[test]
fn generated_header_covers_the_surface() {
    let header = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/include/tierstore.h"
    ))
    .expect("the build script writes include/tierstore.h");
    for symbol in [
        "TIERSTORE_STATUS_OK",
        "typedef struct TierstoreCode TierstoreCode;",
        "typedef struct TierstoreRun TierstoreRun;",
        "tierstore_code_new",
        "tierstore_code_encode",
        "tierstore_code_decode",
        "tierstore_code_helper",
        "tierstore_code_regenerate",
        "tierstore_run_scenario",
        "tierstore_run_verdict_json",
        "tierstore_run_trace_jsonl",
        "tierstore_last_error",
        "tierstore_string_free",
    ] {
        assert!(header.contains(symbol), "header is missing {symbol}");
    }
}
