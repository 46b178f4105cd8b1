// SPDX-License-Identifier: Apache-2.0

use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use agentfacts::scenario;
use agentfacts_ffi::*;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn cstring(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { af_string_free(p) };
    s
}

fn last_error() -> String {
    let p = af_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn parse(text: &str) -> *mut AfDocument {
    let json = cstring(text);
    let mut doc = ptr::null_mut();
    assert_eq!(
        unsafe { af_document_parse(json.as_ptr(), &mut doc) },
        AfStatus::Ok
    );
    doc
}

#[test]
fn parse_digest_and_canonical_match_library() {
    let text = std::fs::read_to_string(fixture("finance-agent.af.json")).unwrap();
    let doc = parse(&text);
    let package = scenario::signed_finance_package();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(af_document_digest(doc, &mut out), AfStatus::Ok);
        assert_eq!(
            take(out),
            agentfacts::canon::document_digest(&package)
                .unwrap()
                .to_string()
        );
        assert_eq!(af_document_canonical(doc, &mut out), AfStatus::Ok);
        assert_eq!(
            take(out),
            agentfacts::canon::canonicalize_serialize(&package)
                .unwrap()
                .as_str()
        );
        assert_eq!(af_document_validate(doc, &mut out), AfStatus::Ok);
        let report: Value = serde_json::from_str(&take(out)).unwrap();
        assert!(report["findings"].as_array().unwrap().is_empty());
        af_document_free(doc);
    }
}

#[test]
fn errors_are_reported() {
    let mut doc = ptr::null_mut();
    let bad = cstring("{\"identity\": 3}");
    unsafe {
        assert_eq!(
            af_document_parse(bad.as_ptr(), &mut doc),
            AfStatus::InvalidDocument
        );
        assert!(last_error().contains("/identity"));
        assert_eq!(
            af_document_parse(ptr::null(), &mut doc),
            AfStatus::NullArgument
        );
        let mut out = ptr::null_mut();
        assert_eq!(
            af_document_digest(ptr::null(), &mut out),
            AfStatus::NullArgument
        );
        assert!(out.is_null());
        af_document_free(ptr::null_mut());
        af_string_free(ptr::null_mut());
    }
}

#[test]
fn sign_verify_and_evaluate() {
    let text = std::fs::read_to_string(fixture("finance-agent.unsigned.af.json")).unwrap();
    let doc = parse(&text);
    let at = cstring(scenario::PUBLISHED_AT);
    let name = cstring("Test Authority");
    let seed = [7u8; 32];
    let mut key = ptr::null_mut();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(
            af_key_from_seed(seed.as_ptr(), 31, name.as_ptr(), &mut key),
            AfStatus::InvalidArgument
        );
        assert_eq!(
            af_key_from_seed(seed.as_ptr(), seed.len(), name.as_ptr(), &mut key),
            AfStatus::Ok
        );
        assert_eq!(af_key_authority(key, &mut out), AfStatus::Ok);
        let record: Value = serde_json::from_str(&take(out)).unwrap();
        let id = record["authority_id"].as_str().unwrap().to_string();
        let authorities = cstring(&serde_json::json!({ id.clone(): record }).to_string());

        let sections = cstring("identity, compliance");
        assert_eq!(
            af_document_sign(doc, key, sections.as_ptr(), 0.9, at.as_ptr(), &mut out),
            AfStatus::Ok
        );
        let block: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(
            block["scope"],
            serde_json::json!(["compliance", "identity"])
        );
        let bad = cstring("identity,nonsense");
        assert_eq!(
            af_document_sign(doc, key, bad.as_ptr(), 0.9, at.as_ptr(), &mut out),
            AfStatus::InvalidArgument
        );

        assert_eq!(
            af_document_verify(
                doc,
                authorities.as_ptr(),
                ptr::null(),
                at.as_ptr(),
                &mut out
            ),
            AfStatus::Ok
        );
        let rows: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(rows[0]["status"], "valid");

        let policy = cstring(
            &serde_json::json!({
                "required_sections": ["identity", "compliance"],
                "authority_weights": { id: 1.0 },
                "min_confidence": { "identity": 0.8, "compliance": 0.8 }
            })
            .to_string(),
        );
        assert_eq!(
            af_trust_evaluate(
                doc,
                policy.as_ptr(),
                authorities.as_ptr(),
                ptr::null(),
                at.as_ptr(),
                &mut out
            ),
            AfStatus::Ok
        );
        let verdict: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(verdict["overall"], "trusted");

        assert_eq!(
            af_freshness(doc, ptr::null(), at.as_ptr(), &mut out),
            AfStatus::Ok
        );
        let report: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(report["document_status"], "fresh");

        let junk = cstring("not json");
        assert_eq!(
            af_trust_evaluate(
                doc,
                junk.as_ptr(),
                authorities.as_ptr(),
                ptr::null(),
                at.as_ptr(),
                &mut out
            ),
            AfStatus::InvalidJson
        );
        af_key_free(key);
        af_document_free(doc);
    }
}

#[test]
fn header_is_generated() {
    let header =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/agentfacts.h"))
            .unwrap();
    for symbol in [
        "af_document_parse",
        "af_trust_evaluate",
        "af_string_free",
        "af_last_error",
        "typedef struct AfDocument AfDocument",
    ] {
        assert!(header.contains(symbol), "{symbol} missing from header");
    }
}

#[test]
fn c_program_links_against_static_library() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let target_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = target_dir.join("libagentfacts_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c_smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe)
        .arg(fixture("finance-agent.af.json"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let expected = agentfacts::canon::document_digest(&scenario::signed_finance_package())
        .unwrap()
        .to_string();
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), expected);
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
        {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
