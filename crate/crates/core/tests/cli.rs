// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use agentfacts::canon::canonicalize_serialize;
use agentfacts::permissions::Decision;
use agentfacts::scenario::{self, EVALUATED_AT};

const PASS_ENV: &str = "AGENTFACTS_KEYSTORE_PASS";

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

struct Workdir {
    dir: TempDir,
}

impl Workdir {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::copy(
            fixture("authorities.json"),
            dir.path().join("authorities.json"),
        )
        .unwrap();
        Workdir { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn copy(&self, fixture_name: &str, as_name: &str) -> PathBuf {
        let to = self.path(as_name);
        std::fs::copy(fixture(fixture_name), &to).unwrap();
        to
    }

    fn cmd(&self, pass: Option<&str>, args: &[&str]) -> Output {
        let mut c = Command::new(env!("CARGO_BIN_EXE_agentfacts"));
        c.current_dir(self.dir.path())
            .args(args)
            .env_remove(PASS_ENV);
        if let Some(p) = pass {
            c.env(PASS_ENV, p);
        }
        c.output().unwrap()
    }

    fn machine(&self, pass: Option<&str>, args: &[&str]) -> (i32, Value) {
        let mut full = vec!["--format", "machine"];
        full.extend_from_slice(args);
        let out = self.cmd(pass, &full);
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert_eq!(
            stdout.lines().count(),
            1,
            "expected one JSON line, got {stdout:?}"
        );
        (
            out.status.code().unwrap(),
            serde_json::from_str(&stdout).unwrap(),
        )
    }
}

#[test]
fn validate_fixture_succeeds() {
    let w = Workdir::new();
    let doc = w.copy("finance-agent.af.json", "doc.json");
    let (code, v) = w.machine(None, &["validate", doc.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(v["command"], "validate");
    assert_eq!(v["exit_code"], 0);
    assert!(v.get("result").is_some());
}

#[test]
fn invalid_document_exits_one() {
    let w = Workdir::new();
    let mut doc: Value =
        serde_json::from_slice(&std::fs::read(fixture("finance-agent.af.json")).unwrap()).unwrap();
    doc["identity"]["ttl"] = Value::from(0);
    let path = w.path("bad.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let (code, v) = w.machine(None, &["validate", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(v["exit_code"], 1);
    assert!(v["error"].is_string() && v["message"].is_string());
}

#[test]
fn usage_errors_exit_two() {
    let w = Workdir::new();
    assert_eq!(w.cmd(None, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        w.cmd(None, &["validate", "missing.json"]).status.code(),
        Some(2)
    );
    let (code, v) = w.machine(None, &["frobnicate"]);
    assert_eq!(code, 2);
    assert_eq!(v["error"], "usage");
    assert_eq!(v["exit_code"], 2);
}

#[test]
fn help_and_version_exit_zero() {
    let w = Workdir::new();
    assert_eq!(w.cmd(None, &["--help"]).status.code(), Some(0));
    assert_eq!(w.cmd(None, &["--version"]).status.code(), Some(0));
}

#[test]
fn passphrase_is_never_read_from_arguments() {
    let w = Workdir::new();
    let out = w.cmd(
        None,
        &["keygen", "--name", "Acme", "--passphrase", "secret"],
    );
    assert_eq!(out.status.code(), Some(2));
    let (code, v) = w.machine(None, &["keygen", "--name", "Acme"]);
    assert_eq!(code, 2);
    assert!(v["message"].as_str().unwrap().contains(PASS_ENV));
    assert!(!w.path("agentfacts.keystore.json").exists());
}

#[test]
fn keygen_sign_verify_round_trip() {
    let w = Workdir::new();
    let secret = "correct horse battery staple";
    let pass = Some(secret);
    let (code, v) = w.machine(
        pass,
        &["keygen", "--name", "Acme Assurance", "--domain", "security"],
    );
    assert_eq!(code, 0, "{v}");
    let id = v["result"]["authority_id"].as_str().unwrap().to_string();
    let keystore = std::fs::read_to_string(w.path("agentfacts.keystore.json")).unwrap();
    assert!(!keystore.contains(secret));

    let doc = w.copy("finance-agent.unsigned.af.json", "doc.json");
    let d = doc.to_str().unwrap();
    let at = "2025-02-04T00:00:00Z";
    let (code, v) = w.machine(
        pass,
        &[
            "sign",
            d,
            "--key",
            &id,
            "--sections",
            "identity,verification",
            "--confidence",
            "0.9",
            "--at",
            at,
        ],
    );
    assert_eq!(code, 0, "{v}");
    let (code, v) = w.machine(None, &["verify-sig", d, "--at", at]);
    assert_eq!(code, 0, "{v}");

    let (code, _) = w.machine(
        Some("wrong"),
        &[
            "sign",
            d,
            "--key",
            &id,
            "--sections",
            "identity",
            "--confidence",
            "0.5",
        ],
    );
    assert_eq!(code, 2);

    let mut tampered: Value = serde_json::from_slice(&std::fs::read(&doc).unwrap()).unwrap();
    tampered["identity"]["name"] = Value::String("Someone Else".into());
    std::fs::write(&doc, tampered.to_string()).unwrap();
    let (code, v) = w.machine(None, &["verify-sig", d, "--at", at]);
    assert_eq!(code, 1, "{v}");
}

#[test]
fn trust_eval_of_scenario_package() {
    let w = Workdir::new();
    let doc = w.copy("finance-agent.af.json", "doc.json");
    let policy = w.copy("enterprise-policy.json", "policy.json");
    let args = [
        "trust-eval",
        doc.to_str().unwrap(),
        "--policy",
        policy.to_str().unwrap(),
        "--at",
        EVALUATED_AT,
    ];
    let (code, v) = w.machine(None, &args);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["result"]["verdict"]["overall"], "trusted");
}

#[test]
fn canon_matches_library() {
    let w = Workdir::new();
    let doc = w.copy("finance-agent.af.json", "doc.json");
    let out = w.cmd(None, &["canon", doc.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let expected = canonicalize_serialize(&scenario::signed_finance_package()).unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains(expected.as_str()));
}

#[test]
fn permission_check_denies_by_default_and_audits() {
    let w = Workdir::new();
    let doc = w.copy("finance-agent.af.json", "doc.json");
    let d = doc.to_str().unwrap();
    let args = [
        "perms",
        "check",
        "--doc",
        d,
        "--action",
        "write",
        "--resource",
        "ledger/q1",
        "--at",
        EVALUATED_AT,
    ];
    let (code, v) = w.machine(None, &args);
    assert_eq!(code, 1);
    assert_eq!(v["command"], "perms check");
    let (code, _) = w.machine(None, &["perms", "audit-verify", "--doc", d]);
    assert_eq!(code, 0);
    let stored: Value = serde_json::from_slice(&std::fs::read(&doc).unwrap()).unwrap();
    let audit = &stored["auth_permissions"]["permission_state"]["audit"];
    assert_eq!(audit.as_array().map(Vec::len), Some(1));
}

#[test]
fn decision_serde_round_trip() {
    let state = agentfacts::permissions::PermissionState::default();
    let ctx = agentfacts::permissions::AccessContext::new(
        agentfacts::units::Timestamp::parse(EVALUATED_AT).unwrap(),
        "UTC",
        None,
        false,
    )
    .unwrap();
    let (decision, _) =
        agentfacts::permissions::check(&state, agentfacts::permissions::Action::Read, "a/b", &ctx);
    let text = serde_json::to_string(&decision).unwrap();
    assert_eq!(serde_json::from_str::<Decision>(&text).unwrap(), decision);
}

#[test]
fn frozen_clock_demo_exits_zero() {
    let w = Workdir::new();
    let (code, v) = w.machine(None, &["demo", "employee-agent", "--frozen-clock"]);
    assert_eq!(code, 0, "{v}");
    assert!(v["result"]["notes"]
        .as_array()
        .is_some_and(|n| !n.is_empty()));
}

#[test]
fn scheduled_escalation_applies_once() {
    let w = Workdir::new();
    let doc = w.copy("finance-agent.af.json", "doc.json");
    let mut v: Value = serde_json::from_slice(&std::fs::read(&doc).unwrap()).unwrap();
    let approver = scenario::enterprise_key().authority_id().to_string();
    v["auth_permissions"]["permission_state"] = serde_json::json!({
        "escalation_policy": {"approver_authorities": [approver], "max_ttl": 1_209_600}
    });
    std::fs::write(&doc, v.to_string()).unwrap();
    let request: Value =
        serde_json::from_slice(&std::fs::read(fixture("deadline-escalation.json")).unwrap())
            .unwrap();
    let schedule = w.path("schedule.json");
    let entries = serde_json::json!([
        {"id": "q1-filing", "due_at": scenario::ESCALATED_AT, "approver": approver, "request": request},
        {"id": "q2-filing", "due_at": "2025-06-24T13:00:00Z", "approver": approver, "request": request},
    ]);
    std::fs::write(&schedule, entries.to_string()).unwrap();

    let (d, s) = (doc.to_str().unwrap(), schedule.to_str().unwrap());
    let args = [
        "perms",
        "schedule",
        "--doc",
        d,
        "--schedule",
        s,
        "--at",
        "2025-03-24T14:00:00Z",
    ];
    let (code, v) = w.machine(None, &args);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["command"], "perms schedule");
    assert_eq!(v["result"][0]["id"], "q1-filing");
    assert_eq!(v["result"][0]["outcome"], "applied");
    assert_eq!(v["result"][1]["outcome"], "not_due");

    let (code, v) = w.machine(None, &args);
    assert_eq!(code, 0);
    assert_eq!(v["result"][0]["outcome"], "already_applied");
    let stored: Value = serde_json::from_slice(&std::fs::read(&doc).unwrap()).unwrap();
    let grants = &stored["auth_permissions"]["permission_state"]["grants"];
    assert_eq!(grants.as_array().map(Vec::len), Some(1));
    assert_eq!(w.machine(None, &["perms", "audit-verify", "--doc", d]).0, 0);
}
