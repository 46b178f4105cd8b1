// SPDX-License-Identifier: Apache-2.0

use serde_json::{json, Value};

use agentfacts::model::{
    apply_overlay, parse_document, select_view, validate_document, Audience, ModelError,
    RoleOverlay, Section,
};
use agentfacts::scenario;
use agentfacts::units::Timestamp;

fn fixture_value() -> Value {
    serde_json::to_value(scenario::signed_finance_package()).unwrap()
}

#[test]
fn errors_carry_json_pointers() {
    let mut v = fixture_value();
    v["classification"]["agent_type"] = json!("oracle");
    match parse_document(&v.to_string()) {
        Err(ModelError::TypeMismatch { path, .. }) => {
            assert_eq!(path, "/classification/agent_type")
        }
        other => panic!("unexpected {other:?}"),
    }

    let mut v = fixture_value();
    v["capabilities"]["telepathy"] = json!(true);
    match parse_document(&v.to_string()) {
        Err(ModelError::UnknownField { path }) => assert_eq!(path, "/capabilities/telepathy"),
        other => panic!("unexpected {other:?}"),
    }

    let mut v = fixture_value();
    v["identity"].as_object_mut().unwrap().remove("ttl");
    match parse_document(&v.to_string()) {
        Err(ModelError::MissingField { path }) => assert_eq!(path, "/identity/ttl"),
        other => panic!("unexpected {other:?}"),
    }

    assert!(matches!(
        parse_document("{\"identity\": "),
        Err(ModelError::SyntaxError { .. })
    ));
}

#[test]
fn semantic_checks() {
    let mut doc = scenario::finance_agent_doc();
    doc.identity.ttl = 0;
    doc.identity.last_updated = Timestamp::parse("2000-01-01T00:00:00Z").unwrap();
    let report = validate_document(&doc);
    assert_eq!(report.errors_at("/identity/ttl").count(), 1);
    assert_eq!(report.errors_at("/identity/last_updated").count(), 1);

    let mut doc = scenario::finance_agent_doc();
    doc.extensions
        .as_mut()
        .unwrap()
        .custom_facts
        .insert("flat".into(), json!(1));
    assert!(validate_document(&doc)
        .errors_at("/extensions/custom_facts/flat")
        .next()
        .is_some());
}

#[test]
fn audience_views() {
    let doc = scenario::signed_finance_package();
    let consumer = select_view(&doc, Audience::Consumer);
    assert_eq!(
        consumer.present_sections(),
        vec![
            Section::Identity,
            Section::BaselineModel,
            Section::Classification,
            Section::Compliance,
            Section::Performance
        ]
    );
    let compliance = consumer.compliance.as_ref().unwrap();
    assert!(compliance.safety_classification.is_some());
    assert!(compliance.eu_ai_act.is_none());

    let government = select_view(&doc, Audience::Government);
    assert_eq!(
        government.present_sections(),
        vec![
            Section::Identity,
            Section::Compliance,
            Section::Verification
        ]
    );
    assert_eq!(government.select(Audience::Government), government);
    assert_eq!(
        select_view(&doc, Audience::Enterprise).present_sections(),
        doc.present_sections()
    );
}

#[test]
fn overlay_touching_protected_data_is_refused() {
    let text = json!({"assigning_org": "harbor", "identity": {"name": "x"}}).to_string();
    match RoleOverlay::parse(&text) {
        Err(ModelError::OverlayViolation { path }) => assert_eq!(path, "/identity/name"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn overlay_layers_role_data() {
    let base = scenario::signed_finance_package();
    let overlay = scenario::enterprise_overlay();
    let at = Timestamp::parse(scenario::EVALUATED_AT).unwrap();
    let next = apply_overlay(&base, &overlay, at).unwrap();
    assert_eq!(next.identity.version_seq, base.identity.version_seq + 1);
    assert_eq!(next.identity.last_updated, at);
    assert_eq!(next.baseline_model, base.baseline_model);
    assert_eq!(next.supply_chain, base.supply_chain);
    assert!(next
        .extensions
        .as_ref()
        .unwrap()
        .custom_facts
        .contains_key(&overlay.namespace()));
    let pending = &next.permission_state().unwrap().pending;
    assert_eq!(pending.len(), overlay.permission_grants.len());
    assert!(validate_document(&next).is_clean());
}
