// SPDX-License-Identifier: Apache-2.0

//! C ABI over the agentfacts library.
//!
//! Documents and keys are opaque handles. Every fallible call returns an
//! [`AfStatus`]; on failure [`af_last_error`] describes the cause. Strings
//! handed out by the library are NUL-terminated UTF-8 and must be released
//! with [`af_string_free`]. Structured results are JSON.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use agentfacts::canon::{canonicalize_serialize, document_digest, normalize_scope};
use agentfacts::lifecycle::{self, StalenessPolicy};
use agentfacts::model::{parse_document, validate_document, AgentFactsDoc};
use agentfacts::signing::{
    sign_sections, verify_signature, AuthorityRegistry, PrivateKeyHandle, RevocationEntry,
};
use agentfacts::trust::{evaluate_trust, TrustPolicy};
use agentfacts::units::Timestamp;
use serde::de::DeserializeOwned;
use serde_json::json;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidDocument = 4,
    InvalidArgument = 5,
    SigningFailed = 6,
    EvaluationFailed = 7,
    Panic = 99,
}

/// An owned agent facts document.
pub struct AfDocument {
    doc: AgentFactsDoc,
}

/// An owned private signing key.
pub struct AfKey {
    key: PrivateKeyHandle,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(AfStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: AfStatus, message: impl ToString) -> FfiResult<T> {
    Err(Failure(status, message.to_string()))
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> FfiResult<()>) -> AfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => AfStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(AfStatus::NullArgument, format!("{name} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(AfStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn json_arg<T: DeserializeOwned>(p: *const c_char, name: &str) -> FfiResult<T> {
    let text = str_arg(p, name)?;
    serde_json::from_str(text).or_else(|e| fail(AfStatus::InvalidJson, format!("{name}: {e}")))
}

unsafe fn opt_json_arg<T: DeserializeOwned + Default>(
    p: *const c_char,
    name: &str,
) -> FfiResult<T> {
    if p.is_null() {
        Ok(T::default())
    } else {
        json_arg(p, name)
    }
}

unsafe fn time_arg(p: *const c_char) -> FfiResult<Timestamp> {
    match opt_str_arg(p, "at")? {
        None => Ok(Timestamp::now()),
        Some(s) => Timestamp::parse(s).or_else(|e| fail(AfStatus::InvalidArgument, e)),
    }
}

unsafe fn doc_ref<'a>(p: *const AfDocument) -> FfiResult<&'a AgentFactsDoc> {
    p.as_ref()
        .map(|d| &d.doc)
        .ok_or(Failure(AfStatus::NullArgument, "document is null".into()))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return fail(AfStatus::NullArgument, "output pointer is null");
    }
    *out = value;
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> FfiResult<()> {
    let c = CString::new(s).or_else(|_| fail(AfStatus::InvalidArgument, "result contains NUL"))?;
    if out.is_null() {
        return fail(AfStatus::NullArgument, "output pointer is null");
    }
    *out = c.into_raw();
    Ok(())
}

/// Message for the most recent failure on this thread, or null. Owned by
/// the library; valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn af_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn af_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn af_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_document_parse(
    json: *const c_char,
    out: *mut *mut AfDocument,
) -> AfStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let doc = parse_document(text).or_else(|e| fail(AfStatus::InvalidDocument, e))?;
        write_out(out, Box::into_raw(Box::new(AfDocument { doc })))
    })
}

/// Releases a document. Null is ignored.
///
/// # Safety
/// `doc` must come from [`af_document_parse`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn af_document_free(doc: *mut AfDocument) {
    if !doc.is_null() {
        drop(Box::from_raw(doc));
    }
}

/// Validation report as JSON. Returns `InvalidDocument` when it contains errors.
///
/// # Safety
/// `doc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_document_validate(
    doc: *const AfDocument,
    out: *mut *mut c_char,
) -> AfStatus {
    guard(|| {
        let report = validate_document(doc_ref(doc)?);
        write_string(
            out,
            serde_json::to_string(&report).expect("reports serialize"),
        )?;
        if report.has_errors() {
            return fail(
                AfStatus::InvalidDocument,
                format!("{} validation error(s)", report.error_count()),
            );
        }
        Ok(())
    })
}

/// Pretty JSON rendering of the document.
///
/// # Safety
/// `doc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_document_to_json(
    doc: *const AfDocument,
    out: *mut *mut c_char,
) -> AfStatus {
    guard(|| write_string(out, doc_ref(doc)?.to_json_pretty()))
}

/// Canonical bytes of the document.
///
/// # Safety
/// `doc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_document_canonical(
    doc: *const AfDocument,
    out: *mut *mut c_char,
) -> AfStatus {
    guard(|| {
        let bytes = canonicalize_serialize(doc_ref(doc)?)
            .or_else(|e| fail(AfStatus::InvalidDocument, e))?;
        write_string(out, bytes.as_str().to_string())
    })
}

/// `sha-256:<hex>` digest of the canonical bytes.
///
/// # Safety
/// `doc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_document_digest(
    doc: *const AfDocument,
    out: *mut *mut c_char,
) -> AfStatus {
    guard(|| {
        let d = document_digest(doc_ref(doc)?).or_else(|e| fail(AfStatus::InvalidDocument, e))?;
        write_string(out, d.to_string())
    })
}

/// Ed25519 key from a 32-byte seed.
///
/// # Safety
/// `seed` must point to `seed_len` readable bytes; `name` must be a
/// NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_key_from_seed(
    seed: *const u8,
    seed_len: usize,
    name: *const c_char,
    out: *mut *mut AfKey,
) -> AfStatus {
    guard(|| {
        if seed.is_null() {
            return fail(AfStatus::NullArgument, "seed is null");
        }
        let bytes: [u8; 32] = std::slice::from_raw_parts(seed, seed_len)
            .try_into()
            .or_else(|_| fail(AfStatus::InvalidArgument, "seed must be 32 bytes"))?;
        let name = str_arg(name, "name")?;
        let key = PrivateKeyHandle::ed25519_from_seed(bytes, name, vec![]);
        write_out(out, Box::into_raw(Box::new(AfKey { key })))
    })
}

/// Releases a key. Null is ignored.
///
/// # Safety
/// `key` must come from [`af_key_from_seed`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn af_key_free(key: *mut AfKey) {
    if !key.is_null() {
        drop(Box::from_raw(key));
    }
}

/// Public authority record of a key, as JSON.
///
/// # Safety
/// `key` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_key_authority(key: *const AfKey, out: *mut *mut c_char) -> AfStatus {
    guard(|| {
        let key = key
            .as_ref()
            .ok_or(Failure(AfStatus::NullArgument, "key is null".into()))?;
        write_string(
            out,
            serde_json::to_string(key.key.authority()).expect("records serialize"),
        )
    })
}

/// Signs the comma-separated `sections`, attaches the block to `doc` and
/// returns it as JSON. `signed_at` may be null for the current time.
///
/// # Safety
/// Handles must be live; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn af_document_sign(
    doc: *mut AfDocument,
    key: *const AfKey,
    sections: *const c_char,
    confidence: f64,
    signed_at: *const c_char,
    out: *mut *mut c_char,
) -> AfStatus {
    guard(|| {
        let handle = doc
            .as_mut()
            .ok_or(Failure(AfStatus::NullArgument, "document is null".into()))?;
        let key = key
            .as_ref()
            .ok_or(Failure(AfStatus::NullArgument, "key is null".into()))?;
        let names: Vec<&str> = str_arg(sections, "sections")?
            .split(',')
            .map(str::trim)
            .collect();
        let scope = normalize_scope(&names).or_else(|e| fail(AfStatus::InvalidArgument, e))?;
        let at = time_arg(signed_at)?;
        let block = sign_sections(&key.key, &handle.doc, &scope, confidence, at)
            .or_else(|e| fail(AfStatus::SigningFailed, e))?;
        handle.doc.attach_signature(block.clone());
        write_string(
            out,
            serde_json::to_string(&block).expect("blocks serialize"),
        )
    })
}

/// Status of every carried signature as a JSON array of
/// `{"index", "authority_id", "status"}`. `revocations` may be null.
///
/// # Safety
/// `doc` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn af_document_verify(
    doc: *const AfDocument,
    authorities: *const c_char,
    revocations: *const c_char,
    at: *const c_char,
    out: *mut *mut c_char,
) -> AfStatus {
    guard(|| {
        let doc = doc_ref(doc)?;
        let registry: AuthorityRegistry = json_arg(authorities, "authorities")?;
        let revs: Vec<RevocationEntry> = opt_json_arg(revocations, "revocations")?;
        let now = time_arg(at)?;
        let rows: Vec<_> = doc
            .signatures()
            .iter()
            .enumerate()
            .map(|(i, sig)| {
                json!({
                    "index": i,
                    "authority_id": sig.authority_id,
                    "status": verify_signature(doc, sig, &registry, &revs, now),
                })
            })
            .collect();
        write_string(out, serde_json::Value::from(rows).to_string())
    })
}

/// Trust verdict as JSON. `revocations` and `at` may be null.
///
/// # Safety
/// `doc` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn af_trust_evaluate(
    doc: *const AfDocument,
    policy: *const c_char,
    authorities: *const c_char,
    revocations: *const c_char,
    at: *const c_char,
    out: *mut *mut c_char,
) -> AfStatus {
    guard(|| {
        let doc = doc_ref(doc)?;
        let policy: TrustPolicy = json_arg(policy, "policy")?;
        let registry: AuthorityRegistry = json_arg(authorities, "authorities")?;
        let revs: Vec<RevocationEntry> = opt_json_arg(revocations, "revocations")?;
        let verdict = evaluate_trust(doc, &policy, &registry, &revs, time_arg(at)?)
            .or_else(|e| fail(AfStatus::EvaluationFailed, e))?;
        write_string(
            out,
            serde_json::to_string(&verdict).expect("verdicts serialize"),
        )
    })
}

/// Freshness report as JSON. `policy` and `at` may be null.
///
/// # Safety
/// `doc` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn af_freshness(
    doc: *const AfDocument,
    policy: *const c_char,
    at: *const c_char,
    out: *mut *mut c_char,
) -> AfStatus {
    guard(|| {
        let doc = doc_ref(doc)?;
        let policy: StalenessPolicy = opt_json_arg(policy, "policy")?;
        let report = lifecycle::freshness(doc, time_arg(at)?, &policy);
        write_string(
            out,
            serde_json::to_string(&report).expect("reports serialize"),
        )
    })
}
