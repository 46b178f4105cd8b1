// SPDX-License-Identifier: Apache-2.0

//! The financial-reporting agent: a provider publishes signed facts, an
//! enterprise onboards the agent, assigns it a role and widens its
//! permissions around a reporting deadline.
//!
//! Keys are derived from fixed seeds so every run, fixture and transcript
//! is reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::model::*;
use crate::permissions::{
    self, AccessContext, Action, ConstraintSet, Decision, EscalationPolicy, GrantRequest,
    GrantStatus, PermissionState, TimeWindow,
};
use crate::registry::{PublishRequest, RegistryStore};
use crate::signing::{registry_of, sign_sections, AuthorityRegistry, PrivateKeyHandle};
use crate::trust::{explain_verdict, Overall, TrustPolicy};
use crate::units::{Ppm, Timestamp};

pub const AGENT_ID: &str = "6f1c2a9e-4b7d-4e0a-9c3f-2d8e5b1a7c40";

pub const PROVIDER_SEED: [u8; 32] = [0x11; 32];
pub const CONSULTANCY_SEED: [u8; 32] = [0x22; 32];
pub const SECURITY_SEED: [u8; 32] = [0x33; 32];
pub const ENTERPRISE_SEED: [u8; 32] = [0x44; 32];

pub fn provider_key() -> PrivateKeyHandle {
    PrivateKeyHandle::ed25519_from_seed(
        PROVIDER_SEED,
        "Meridian Agents Ltd",
        vec!["identity".into(), "baseline_model".into()],
    )
}

pub fn consultancy_key() -> PrivateKeyHandle {
    PrivateKeyHandle::ed25519_from_seed(
        CONSULTANCY_SEED,
        "Ledgerline Compliance Partners",
        vec!["compliance".into()],
    )
}

pub fn security_key() -> PrivateKeyHandle {
    PrivateKeyHandle::ed25519_from_seed(
        SECURITY_SEED,
        "Bastion Security Assessments",
        vec!["security".into()],
    )
}

pub fn enterprise_key() -> PrivateKeyHandle {
    PrivateKeyHandle::ed25519_from_seed(
        ENTERPRISE_SEED,
        "Harbor Financial Group",
        vec!["enterprise".into()],
    )
}

pub fn scenario_authorities() -> AuthorityRegistry {
    let keys = [
        provider_key(),
        consultancy_key(),
        security_key(),
        enterprise_key(),
    ];
    registry_of(keys.iter().map(PrivateKeyHandle::authority))
}

fn ts(s: &str) -> Timestamp {
    Timestamp::parse(s).expect("scenario timestamps are well-formed")
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// The provider's unsigned facts package, revision 0.
pub fn finance_agent_doc() -> AgentFactsDoc {
    let authorities = [provider_key(), consultancy_key(), security_key()];
    let ids: Vec<String> = authorities
        .iter()
        .map(|k| k.authority_id().to_string())
        .collect();
    AgentFactsDoc {
        identity: CoreIdentity {
            agent_id: AGENT_ID.into(),
            name: "Quarterly Regulatory Reporting Analyst".into(),
            version: "1.0".into(),
            created: ts("2025-01-15T09:00:00Z"),
            last_updated: ts("2025-02-03T09:00:00Z"),
            ttl: 7_776_000,
            version_seq: 0,
        },
        baseline_model: BaselineModel {
            foundation_model: "claude-3".into(),
            model_version: "claude-3-opus-finreg-ft2".into(),
            model_provider: "Meridian Agents Ltd".into(),
            training_data_sources: strings(&[
                "public financial regulations",
                "SEC filings corpus",
                "IFRS and GAAP reporting standards",
            ]),
            training_cutoff_date: Some(ts("2024-10-01T00:00:00Z")),
            fine_tuning: [
                ("method".to_string(), "supervised fine-tuning".to_string()),
                (
                    "domain".to_string(),
                    "financial regulation and reporting".to_string(),
                ),
            ]
            .into_iter()
            .collect(),
            model_capabilities: strings(&[
                "financial statement analysis",
                "regulatory report drafting",
            ]),
            known_limitations: strings(&[
                "no real-time market data",
                "not licensed for investment advice",
            ]),
            bias_assessments: vec![AssessmentRecord {
                name: "lending-language fairness review".into(),
                outcome: "no material findings".into(),
                assessed_by: Some("Ledgerline Compliance Partners".into()),
                assessed_at: Some(ts("2025-01-20T00:00:00Z")),
            }],
            safety_evaluations: vec![AssessmentRecord {
                name: "financial misstatement red team".into(),
                outcome: "passed".into(),
                assessed_by: Some("Bastion Security Assessments".into()),
                assessed_at: Some(ts("2025-01-22T00:00:00Z")),
            }],
        },
        classification: Some(Classification {
            agent_type: Some(AgentType::Assistant),
            operational_level: Some(OperationalLevel::Supervised),
            stakeholder_context: Some(StakeholderContext::Consumer),
            deployment_scope: Some(DeploymentScope::External),
            interaction_mode: Some(InteractionMode::Asynchronous),
        }),
        capabilities: Some(Capabilities {
            external_apis: strings(&["https://erp.example.com/openapi.json"]),
            tool_calling: vec![ToolCalling::Mcp, ToolCalling::FunctionCalls],
            programming_languages: strings(&["python", "sql"]),
            data_formats: vec![DataFormat::Json, DataFormat::Csv, DataFormat::Pdf],
            interface_types: vec![InterfaceType::Text, InterfaceType::Api],
            domain_expertise: strings(&["regulatory reporting", "financial analysis"]),
            language_support: strings(&["en", "de", "fr"]),
        }),
        auth_permissions: Some(AuthPermissions {
            supported_methods: vec![AuthMethod::Oauth2, AuthMethod::Mtls],
            primary_scheme: Some(AuthMethod::Oauth2),
            oauth_endpoints: strings(&["https://auth.meridian-agents.example/oauth2/token"]),
            token_requirements: [("audience".to_string(), "finance-reporting".to_string())]
                .into_iter()
                .collect(),
            auth_security_level: Some(SecurityLevel::High),
            session_management: Some(SessionManagement {
                timeout_seconds: Some(3600),
                refresh_policy: Some("rotate".into()),
            }),
            multi_factor_required: true,
            auth_compliance: strings(&["SOC 2"]),
            permission_state: None,
        }),
        compliance: Some(Compliance {
            eu_ai_act: Some(EuAiAct {
                risk_level: RiskLevel::Limited,
                transparency_obligations: strings(&["disclose AI-generated report drafts"]),
            }),
            nist_ai_rmf: Some(NistAiRmf {
                framework_alignment: Some("financial services profile".into()),
                risk_categories: strings(&["accuracy", "accountability"]),
            }),
            gdpr_compliance: Some(GdprCompliance {
                data_protection: strings(&["data minimization"]),
                privacy_controls: strings(&["no customer personal data in prompts"]),
            }),
            sector_standards: strings(&["SOX"]),
            geographic_compliance: strings(&["EU", "US", "APAC"]),
            safety_classification: Some(SafetyClassification::Medium),
            audit_certifications: strings(&["ISO 27001", "SOX"]),
        }),
        performance: Some(Performance {
            response_time_p50: Some(850),
            response_time_p95: Some(2400),
            availability_sla: Some(Ppm::from_ppm(999_000)),
            throughput_limit: Some(120),
            accuracy_metrics: [(
                "regulatory_report_accuracy".to_string(),
                Ppm::from_ppm(970_000),
            )]
            .into_iter()
            .collect(),
            error_rate: Some(Ppm::from_ppm(8_000)),
            cost_structure: Some(CostStructure::Subscription),
            reputation_score: Some(Ppm::from_ppm(920_000)),
            user_satisfaction: Some(Ppm::from_ppm(880_000)),
            historical_performance: vec![PerformanceSample {
                at: ts("2025-01-31T00:00:00Z"),
                metric: "regulatory_report_accuracy".into(),
                value: Ppm::from_ppm(965_000),
            }],
        }),
        supply_chain: Some(SupplyChain {
            component_dependencies: vec![Component {
                name: "claude-3".into(),
                version: "opus".into(),
            }],
            data_sources: strings(&["EDGAR public filings"]),
            infrastructure_providers: strings(&["eu-central cloud region"]),
            software_libraries: vec![SoftwareLibrary {
                name: "pandas".into(),
                version: "2.2.0".into(),
                license: Some("BSD-3-Clause".into()),
            }],
            security_scanning: vec![SecurityScan {
                tool: "dependency-audit".into(),
                timestamp: ts("2025-01-28T00:00:00Z"),
                findings_count: 0,
            }],
            license_compliance: strings(&["BSD-3-Clause", "Apache-2.0"]),
            supply_chain_attestation: Some(
                "https://meridian-agents.example/attestations/finreg-1.0".into(),
            ),
        }),
        verification: Some(VerificationMeta {
            signatures: Vec::new(),
            verification_authorities: ids.clone(),
            verification_policy: None,
            confidence_levels: ids
                .iter()
                .zip([1_000_000, 950_000, 900_000])
                .map(|(id, c)| (id.clone(), Ppm::from_ppm(c)))
                .collect(),
            verification_ttl: [(Section::Performance, 604_800)].into_iter().collect(),
            signature_algorithms: strings(&["ed25519"]),
            revocation_status: BTreeMap::new(),
        }),
        extensions: Some(Extensibility {
            custom_facts: [(
                "com.meridian-agents.support_tier".to_string(),
                json!({"tier": "premium", "response_hours": 4}),
            )]
            .into_iter()
            .collect(),
            integration_hooks: strings(&["https://meridian-agents.example/hooks/agentfacts"]),
            schema_extensions: Vec::new(),
            plugin_interfaces: strings(&["mcp"]),
            backward_compatibility: Some(">=1.0 <2.0".into()),
        }),
    }
}

pub const PUBLISHED_AT: &str = "2025-02-03T10:00:00Z";

/// Revision 0 carrying the provider's, consultancy's and security firm's
/// signatures.
pub fn signed_finance_package() -> AgentFactsDoc {
    let mut doc = finance_agent_doc();
    let at = ts(PUBLISHED_AT);
    let plan: [(PrivateKeyHandle, &[Section], f64); 3] = [
        (
            provider_key(),
            &[
                Section::Identity,
                Section::BaselineModel,
                Section::Capabilities,
                Section::Performance,
                Section::SupplyChain,
                Section::Verification,
            ],
            1.0,
        ),
        (
            consultancy_key(),
            &[Section::Compliance, Section::BaselineModel],
            0.9,
        ),
        (
            security_key(),
            &[
                Section::Compliance,
                Section::AuthPermissions,
                Section::SupplyChain,
            ],
            0.85,
        ),
    ];
    for (key, scope, confidence) in plan {
        let block =
            sign_sections(&key, &doc, scope, confidence, at).expect("scenario document is valid");
        doc.attach_signature(block);
    }
    doc
}

/// The enterprise's onboarding requirements.
pub fn enterprise_policy() -> TrustPolicy {
    let (p, c, s) = (provider_key(), consultancy_key(), security_key());
    let name = |s: &str| s.to_string();
    TrustPolicy {
        authority_weights: [
            (name(p.authority_id()), Ppm::ONE),
            (name(c.authority_id()), Ppm::from_ppm(950_000)),
            (name(s.authority_id()), Ppm::from_ppm(900_000)),
        ]
        .into_iter()
        .collect(),
        allowed_authorities: [(
            name("compliance"),
            [name(c.authority_id()), name(s.authority_id())]
                .into_iter()
                .collect(),
        )]
        .into_iter()
        .collect(),
        min_signatures: [(name("compliance"), 2), (name("supply_chain"), 2)]
            .into_iter()
            .collect(),
        min_confidence: [
            (name("identity"), Ppm::from_ppm(900_000)),
            (name("compliance"), Ppm::from_ppm(800_000)),
        ]
        .into_iter()
        .collect(),
        max_signature_age: BTreeMap::new(),
        required_sections: [
            "identity",
            "baseline_model",
            "compliance",
            "auth_permissions",
            "supply_chain",
            "verification",
        ]
        .into_iter()
        .map(name)
        .collect(),
        critical_sections: None,
    }
}

pub fn enterprise_overlay() -> RoleOverlay {
    let authority = enterprise_key().authority_id().to_string();
    let baseline = |action: Action, pattern: &str, justification: &str| GrantRequest {
        actions: [action].into_iter().collect(),
        resource_pattern: pattern.into(),
        ttl: 31_536_000,
        authority: authority.clone(),
        constraints: ConstraintSet::default(),
        justification: justification.into(),
        baseline: true,
    };
    RoleOverlay {
        assigning_org: "harbor-financial".into(),
        classification_updates: Some(Classification {
            stakeholder_context: Some(StakeholderContext::Enterprise),
            deployment_scope: Some(DeploymentScope::Internal),
            ..Default::default()
        }),
        permission_grants: vec![
            baseline(
                Action::Read,
                "finance/historical/**",
                "baseline analysis of historical data",
            ),
            baseline(
                Action::Write,
                "reports/drafts/**",
                "draft reporting templates",
            ),
            baseline(
                Action::Execute,
                "tools/analytics/*",
                "approved analytical tools",
            ),
        ],
        scope_of_work: Some(ScopeOfWork {
            included_tasks: strings(&["quarterly regulatory reporting"]),
            excluded_tasks: strings(&["real-time trading decisions", "customer data access"]),
        }),
        constitution: strings(&[
            "Submit nothing to regulators without human review.",
            "Never access customer personal data.",
        ]),
    }
}

/// Time-boxed write access to the official filing templates.
pub fn deadline_escalation() -> GrantRequest {
    GrantRequest {
        actions: [Action::Write].into_iter().collect(),
        resource_pattern: "reports/regulatory/q1/*".into(),
        ttl: 7 * 86_400,
        authority: enterprise_key().authority_id().to_string(),
        constraints: ConstraintSet {
            time_window: Some(TimeWindow {
                start_hour: 8,
                end_hour: 20,
                timezone: "America/New_York".into(),
            }),
            geographic: None,
            human_review_required: true,
        },
        justification: "Q1 regulatory filing deadline".into(),
        baseline: false,
    }
}

pub const EVALUATED_AT: &str = "2025-02-10T09:00:00Z";
pub const OVERLAY_AT: &str = "2025-02-10T10:00:00Z";
pub const ESCALATED_AT: &str = "2025-03-24T13:00:00Z";
pub const FILING_AT: &str = "2025-03-25T15:00:00Z";
pub const AFTER_SUBMISSION_AT: &str = "2025-04-01T09:00:00Z";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DemoOptions {
    /// Alter the compliance section after the authorities signed it.
    pub tamper_compliance: bool,
    /// Keep the clock at the filing time instead of moving past submission.
    pub frozen_clock: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoStage {
    pub name: String,
    pub ok: bool,
    pub lines: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoTranscript {
    pub stages: Vec<DemoStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    pub active_grants: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl DemoTranscript {
    pub fn ok(&self) -> bool {
        self.failed_stage.is_none()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for stage in &self.stages {
            let mark = if stage.ok { "ok" } else { "FAILED" };
            let _ = writeln!(out, "== {} [{mark}]", stage.name);
            for line in &stage.lines {
                let _ = writeln!(out, "   {line}");
            }
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        let _ = writeln!(out, "active grants: {}", self.active_grants.join(", "));
        match &self.failed_stage {
            Some(s) => {
                let _ = writeln!(out, "result: failed at stage {s}");
            }
            None => out.push_str("result: all stages passed\n"),
        }
        out
    }
}

struct Recorder {
    transcript: DemoTranscript,
}

impl Recorder {
    fn stage(&mut self, name: &str, ok: bool, lines: Vec<String>) -> bool {
        self.transcript.stages.push(DemoStage {
            name: name.into(),
            ok,
            lines,
        });
        if !ok && self.transcript.failed_stage.is_none() {
            self.transcript.failed_stage = Some(name.into());
        }
        ok
    }
}

fn describe(decision: &Decision) -> String {
    match decision {
        Decision::Allow { grant_id } => format!("allow (grant {grant_id})"),
        Decision::Deny(b) => format!(
            "deny ({})",
            serde_json::to_value(b.reason).unwrap_or_default()
        ),
    }
}

fn grant_label(g: &permissions::GrantRecord) -> String {
    let actions: Vec<String> = g
        .grant
        .actions
        .iter()
        .map(|a| {
            serde_json::to_value(a)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default()
        })
        .collect();
    let kind = if g.grant.baseline {
        "baseline"
    } else {
        "elevated"
    };
    format!(
        "#{} {} {} ({kind})",
        g.id,
        actions.join("+"),
        g.grant.resource_pattern
    )
}

/// Runs the onboarding-to-reversion walk-through.
pub fn run_employee_agent_demo(options: DemoOptions) -> DemoTranscript {
    let mut rec = Recorder {
        transcript: DemoTranscript::default(),
    };
    let enterprise = enterprise_key();
    let enterprise_id = enterprise.authority_id().to_string();

    // Provider publishes.
    let mut package = signed_finance_package();
    if options.tamper_compliance {
        if let Some(eu) = package
            .compliance
            .as_mut()
            .and_then(|c| c.eu_ai_act.as_mut())
        {
            eu.risk_level = RiskLevel::Minimal;
        }
    }
    let mut store = RegistryStore::new(scenario_authorities());
    let published = store.publish(
        PublishRequest {
            doc: package.clone(),
            signatures: Vec::new(),
            link: None,
        },
        ts(PUBLISHED_AT),
    );
    let ok = match &published {
        Ok(ack) => rec.stage(
            "publish",
            ack.head_seq == 0,
            vec![
                format!("provider published {AGENT_ID} revision {}", ack.head_seq),
                format!(
                    "signatures: {}",
                    package
                        .signatures()
                        .iter()
                        .map(|s| format!(
                            "{} over {:?}",
                            s.authority_id,
                            s.scope.iter().map(|x| x.as_str()).collect::<Vec<_>>()
                        ))
                        .collect::<Vec<_>>()
                        .join("; ")
                ),
            ],
        ),
        Err(e) => rec.stage("publish", false, vec![format!("publish rejected: {e}")]),
    };
    if !ok {
        return finish(rec, &PermissionState::default(), ts(PUBLISHED_AT));
    }

    // Enterprise fetches and evaluates trust.
    let evaluated_at = ts(EVALUATED_AT);
    let fetched = store.fetch(
        AGENT_ID,
        86_400 * 30,
        &enterprise_policy(),
        evaluated_at,
        None,
    );
    let (ok, base) = match fetched {
        Ok(result) => {
            let mut lines = vec![format!(
                "fetched revision {} ({:?}, cache age {}s)",
                result.doc.identity.version_seq, result.provenance, result.cache_age
            )];
            let overall = result.verdict.as_ref().map(|v| v.overall);
            if let Some(v) = &result.verdict {
                lines.extend(explain_verdict(v).lines);
            }
            let authorities: BTreeSet<&str> = result
                .verdict
                .iter()
                .flat_map(|v| v.per_section.values())
                .flat_map(|s| {
                    s.qualifying_signatures
                        .iter()
                        .map(|a| a.authority_id.as_str())
                })
                .collect();
            lines.push(format!(
                "distinct qualifying authorities: {}",
                authorities.len()
            ));
            let ok = overall == Some(Overall::Trusted) && authorities.len() >= 3;
            (rec.stage("trust", ok, lines), result.doc)
        }
        Err(e) => (
            rec.stage("trust", false, vec![format!("fetch failed: {e}")]),
            package.clone(),
        ),
    };
    if !ok {
        return finish(rec, &PermissionState::default(), evaluated_at);
    }

    // Role assignment through an overlay.
    let overlay_at = ts(OVERLAY_AT);
    let overlay = enterprise_overlay();
    let layered = match apply_overlay(&base, &overlay, overlay_at) {
        Ok(doc) => doc,
        Err(e) => {
            rec.stage("overlay", false, vec![format!("overlay rejected: {e}")]);
            return finish(rec, &PermissionState::default(), overlay_at);
        }
    };
    let classification = layered.classification.clone().unwrap_or_default();
    let untouched = layered.identity.agent_id == base.identity.agent_id
        && layered.baseline_model == base.baseline_model
        && layered.supply_chain == base.supply_chain
        && layered.signatures() == base.signatures();
    let pending = layered.permission_state().map_or(0, |s| s.pending.len());
    let ok = rec.stage(
        "overlay",
        untouched
            && classification.stakeholder_context == Some(StakeholderContext::Enterprise)
            && classification.deployment_scope == Some(DeploymentScope::Internal)
            && layered.identity.version_seq == base.identity.version_seq + 1
            && pending == 3,
        vec![
            format!(
                "classification: stakeholder_context={:?} deployment_scope={:?}",
                classification.stakeholder_context, classification.deployment_scope
            ),
            format!(
                "role data stored under extensions.custom_facts[{:?}]",
                overlay.namespace()
            ),
            format!(
                "version_seq {} -> {}",
                base.identity.version_seq, layered.identity.version_seq
            ),
            format!("verified sections and signatures untouched: {untouched}"),
            format!("pending grant requests: {pending}"),
        ],
    );
    if !ok {
        return finish(rec, &PermissionState::default(), overlay_at);
    }

    // Baseline grants.
    let mut state = layered.permission_state().cloned().unwrap_or_default();
    state.escalation_policy = Some(EscalationPolicy {
        approver_authorities: [enterprise_id.clone()].into_iter().collect(),
        max_ttl: 14 * 86_400,
    });
    let mut lines = Vec::new();
    let mut ok = true;
    while !state.pending.is_empty() {
        match permissions::grant_pending(&state, 0, &enterprise_id, overlay_at) {
            Ok(next) => state = next,
            Err(e) => {
                lines.push(format!("grant failed: {e}"));
                ok = false;
                break;
            }
        }
    }
    let ctx = |at: Timestamp, reviewer: bool| {
        AccessContext::new(at, "America/New_York", Some("US"), reviewer).expect("known timezone")
    };
    let (read, next) = permissions::check(
        &state,
        Action::Read,
        "finance/historical/2024/q4/ledger",
        &ctx(overlay_at, false),
    );
    state = next;
    let (write, next) = permissions::check(
        &state,
        Action::Write,
        "reports/regulatory/q1/form-10q",
        &ctx(overlay_at, true),
    );
    state = next;
    lines.extend(state.active_grants(overlay_at).map(grant_label));
    lines.push(format!(
        "read finance/historical/2024/q4/ledger: {}",
        describe(&read)
    ));
    lines.push(format!(
        "write reports/regulatory/q1/form-10q: {}",
        describe(&write)
    ));
    let ok = rec.stage(
        "baseline-grants",
        ok && read.is_allow() && !write.is_allow(),
        lines,
    );
    if !ok {
        return finish(rec, &state, overlay_at);
    }

    // Pre-deadline escalation.
    let escalated_at = ts(ESCALATED_AT);
    let filing_at = ts(FILING_AT);
    let ok =
        match permissions::escalate(&state, &deadline_escalation(), &enterprise_id, escalated_at) {
            Ok(next) => {
                state = next;
                let (unreviewed, next) = permissions::check(
                    &state,
                    Action::Write,
                    "reports/regulatory/q1/form-10q",
                    &ctx(filing_at, false),
                );
                state = next;
                let (reviewed, next) = permissions::check(
                    &state,
                    Action::Write,
                    "reports/regulatory/q1/form-10q",
                    &ctx(filing_at, true),
                );
                state = next;
                let elevated = state.grants.iter().find(|g| !g.grant.baseline);
                rec.stage(
                    "escalation",
                    reviewed.is_allow() && !unreviewed.is_allow(),
                    vec![
                        format!(
                            "elevated grant {} expires {}",
                            elevated.map(grant_label).unwrap_or_default(),
                            elevated
                                .and_then(|g| g.expires_at)
                                .map(|t| t.to_string())
                                .unwrap_or_default()
                        ),
                        format!(
                            "write without human review at {filing_at}: {}",
                            describe(&unreviewed)
                        ),
                        format!(
                            "write with human review at {filing_at}: {}",
                            describe(&reviewed)
                        ),
                    ],
                )
            }
            Err(e) => rec.stage(
                "escalation",
                false,
                vec![format!("escalation refused: {e}")],
            ),
        };
    if !ok {
        return finish(rec, &state, filing_at);
    }

    // Clock moves past submission; elevated grants revert.
    let end = if options.frozen_clock {
        filing_at
    } else {
        ts(AFTER_SUBMISSION_AT)
    };
    state = permissions::revert_expired(&state, end);
    let elevated_active = state.active_grants(end).any(|g| !g.grant.baseline);
    let baseline_only = state.active_grants(end).all(|g| g.grant.baseline);
    let mut lines = vec![format!("clock at {end}")];
    let ok = if options.frozen_clock {
        lines.push("reversion not yet due: elevated grant still active".into());
        rec.transcript.notes.push("reversion not yet due".into());
        elevated_active
    } else {
        let (write, next) = permissions::check(
            &state,
            Action::Write,
            "reports/regulatory/q1/form-10q",
            &ctx(end, true),
        );
        state = next;
        let (read, next) = permissions::check(
            &state,
            Action::Read,
            "finance/historical/2025/q1/ledger",
            &ctx(end, false),
        );
        state = next;
        lines.push(format!(
            "write reports/regulatory/q1/form-10q: {}",
            describe(&write)
        ));
        lines.push(format!(
            "read finance/historical/2025/q1/ledger: {}",
            describe(&read)
        ));
        let reverted = state
            .grants
            .iter()
            .filter(|g| g.status == GrantStatus::Expired)
            .count();
        lines.push(format!("grants reverted: {reverted}"));
        baseline_only && !elevated_active && !write.is_allow() && read.is_allow() && reverted == 1
    };
    lines.extend(state.active_grants(end).map(grant_label));
    if !rec.stage("reversion", ok, lines) {
        return finish(rec, &state, end);
    }

    let intact = permissions::verify_audit_chain(&state.audit);
    let mut lines = vec![format!(
        "{} audit entries, hash chain intact: {intact}",
        state.audit.len()
    )];
    lines.extend(state.audit.iter().map(|e| {
        format!(
            "#{} {} {} {}",
            e.seq,
            e.at,
            e.actor,
            serde_json::to_value(e.action)
                .unwrap_or_default()
                .as_str()
                .unwrap_or_default()
        )
    }));
    rec.stage("audit", intact, lines);
    finish(rec, &state, end)
}

fn finish(mut rec: Recorder, state: &PermissionState, now: Timestamp) -> DemoTranscript {
    rec.transcript.active_grants = state.active_grants(now).map(grant_label).collect();
    rec.transcript
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finance_doc_is_clean() {
        let report = validate_document(&finance_agent_doc());
        assert!(report.is_clean(), "{report:?}");
        let report = validate_document(&signed_finance_package());
        assert!(report.is_clean(), "{report:?}");
    }

    #[test]
    fn default_run_reverts_to_baseline() {
        let t = run_employee_agent_demo(DemoOptions::default());
        assert!(t.ok(), "{}", t.render());
        assert_eq!(t.active_grants.len(), 3);
        assert!(t.active_grants.iter().all(|g| g.ends_with("(baseline)")));
    }

    #[test]
    fn tampered_compliance_fails_trust() {
        let t = run_employee_agent_demo(DemoOptions {
            tamper_compliance: true,
            ..Default::default()
        });
        assert_eq!(t.failed_stage.as_deref(), Some("trust"));
    }

    #[test]
    fn frozen_clock_keeps_elevated_grant() {
        let t = run_employee_agent_demo(DemoOptions {
            frozen_clock: true,
            ..Default::default()
        });
        assert!(t.ok(), "{}", t.render());
        assert!(t.active_grants.iter().any(|g| g.ends_with("(elevated)")));
        assert!(t.render().contains("reversion not yet due"));
    }
}
