// SPDX-License-Identifier: Apache-2.0

//! The ten-section agent facts document.
//!
//! Only `identity` and `baseline_model` are mandatory; the other eight
//! sections are optional but validated whenever they appear. Enumerated
//! values are written as lowercase snake_case tokens.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::permissions::{GrantRequest, PermissionState};
use crate::signing::SignatureBlock;
use crate::units::{Ppm, Timestamp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Identity,
    BaselineModel,
    Classification,
    Capabilities,
    AuthPermissions,
    Compliance,
    Performance,
    SupplyChain,
    Verification,
    Extensions,
}

impl Section {
    pub const ALL: [Section; 10] = [
        Section::Identity,
        Section::BaselineModel,
        Section::Classification,
        Section::Capabilities,
        Section::AuthPermissions,
        Section::Compliance,
        Section::Performance,
        Section::SupplyChain,
        Section::Verification,
        Section::Extensions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Section::Identity => "identity",
            Section::BaselineModel => "baseline_model",
            Section::Classification => "classification",
            Section::Capabilities => "capabilities",
            Section::AuthPermissions => "auth_permissions",
            Section::Compliance => "compliance",
            Section::Performance => "performance",
            Section::SupplyChain => "supply_chain",
            Section::Verification => "verification",
            Section::Extensions => "extensions",
        }
    }

    /// Sections whose failure makes the whole document unusable.
    pub fn default_critical() -> BTreeSet<Section> {
        [
            Section::Identity,
            Section::Compliance,
            Section::Verification,
        ]
        .into_iter()
        .collect()
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown section {0:?}")]
pub struct UnknownSection(pub String);

impl FromStr for Section {
    type Err = UnknownSection;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Section::ALL
            .into_iter()
            .find(|sec| sec.as_str() == s)
            .ok_or_else(|| UnknownSection(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFactsDoc {
    pub identity: CoreIdentity,
    pub baseline_model: BaselineModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<Capabilities>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_permissions: Option<AuthPermissions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compliance: Option<Compliance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub performance: Option<Performance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supply_chain: Option<SupplyChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extensions: Option<Extensibility>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreIdentity {
    pub agent_id: String,
    pub name: String,
    pub version: String,
    pub created: Timestamp,
    pub last_updated: Timestamp,
    /// Global time-to-live in seconds.
    pub ttl: u64,
    /// Revision counter; 0 for the initial registration.
    #[serde(default)]
    pub version_seq: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentIdKind {
    Uuid,
    Uri,
    Did,
}

impl CoreIdentity {
    /// Syntactic classification of `agent_id`; `None` when it fits no form.
    pub fn id_kind(&self) -> Option<AgentIdKind> {
        classify_agent_id(&self.agent_id)
    }
}

pub fn classify_agent_id(id: &str) -> Option<AgentIdKind> {
    if id.len() == 36 && uuid::Uuid::try_parse(id).is_ok() {
        return Some(AgentIdKind::Uuid);
    }
    if let Some(rest) = id.strip_prefix("did:") {
        let (method, specific) = rest.split_once(':')?;
        let method_ok = !method.is_empty()
            && method
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit());
        return (method_ok && !specific.is_empty() && !specific.ends_with(':'))
            .then_some(AgentIdKind::Did);
    }
    if id.contains(':') && !id.chars().any(char::is_whitespace) && url::Url::parse(id).is_ok() {
        return Some(AgentIdKind::Uri);
    }
    None
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentRecord {
    pub name: String,
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessed_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessed_at: Option<Timestamp>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineModel {
    pub foundation_model: String,
    pub model_version: String,
    pub model_provider: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub training_data_sources: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_cutoff_date: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fine_tuning: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub model_capabilities: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub known_limitations: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bias_assessments: Vec<AssessmentRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub safety_evaluations: Vec<AssessmentRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentType {
    Assistant,
    Autonomous,
    Tool,
    Workflow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperationalLevel {
    Ambient,
    Supervised,
    Autonomous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StakeholderContext {
    Enterprise,
    Consumer,
    Government,
}

/// Audience of a stakeholder view; same vocabulary as `stakeholder_context`.
pub type Audience = StakeholderContext;

impl FromStr for StakeholderContext {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "enterprise" => Ok(Self::Enterprise),
            "consumer" => Ok(Self::Consumer),
            "government" => Ok(Self::Government),
            other => Err(format!("unknown audience {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeploymentScope {
    Internal,
    External,
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionMode {
    Synchronous,
    Asynchronous,
    Batch,
}

/// Every field is optional so the same type doubles as a partial update
/// inside a [`RoleOverlay`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Classification {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_type: Option<AgentType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operational_level: Option<OperationalLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stakeholder_context: Option<StakeholderContext>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployment_scope: Option<DeploymentScope>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction_mode: Option<InteractionMode>,
}

impl Classification {
    fn overlay(&mut self, updates: &Classification) {
        if updates.agent_type.is_some() {
            self.agent_type = updates.agent_type;
        }
        if updates.operational_level.is_some() {
            self.operational_level = updates.operational_level;
        }
        if updates.stakeholder_context.is_some() {
            self.stakeholder_context = updates.stakeholder_context;
        }
        if updates.deployment_scope.is_some() {
            self.deployment_scope = updates.deployment_scope;
        }
        if updates.interaction_mode.is_some() {
            self.interaction_mode = updates.interaction_mode;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolCalling {
    Mcp,
    FunctionCalls,
    CustomProtocols,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Json,
    Csv,
    Pdf,
    Image,
    Audio,
    Video,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceType {
    Text,
    Voice,
    Gui,
    Api,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capabilities {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub external_apis: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calling: Vec<ToolCalling>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub programming_languages: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data_formats: Vec<DataFormat>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interface_types: Vec<InterfaceType>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub domain_expertise: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub language_support: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthMethod {
    Oauth2,
    ApiKey,
    Mtls,
    Jwt,
    Saml,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecurityLevel {
    Basic,
    Standard,
    High,
    Critical,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManagement {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_seconds: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refresh_policy: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthPermissions {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub supported_methods: Vec<AuthMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_scheme: Option<AuthMethod>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub oauth_endpoints: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub token_requirements: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_security_level: Option<SecurityLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_management: Option<SessionManagement>,
    #[serde(default)]
    pub multi_factor_required: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub auth_compliance: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permission_state: Option<PermissionState>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLevel {
    Minimal,
    Limited,
    High,
    Unacceptable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyClassification {
    Low,
    Medium,
    High,
    Critical,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EuAiAct {
    pub risk_level: RiskLevel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transparency_obligations: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NistAiRmf {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub framework_alignment: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub risk_categories: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdprCompliance {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data_protection: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub privacy_controls: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Compliance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eu_ai_act: Option<EuAiAct>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nist_ai_rmf: Option<NistAiRmf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gdpr_compliance: Option<GdprCompliance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sector_standards: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub geographic_compliance: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_classification: Option<SafetyClassification>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub audit_certifications: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostStructure {
    PerRequest,
    Subscription,
    Hybrid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformanceSample {
    pub at: Timestamp,
    pub metric: String,
    pub value: Ppm,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Performance {
    /// Milliseconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_time_p50: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_time_p95: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub availability_sla: Option<Ppm>,
    /// Requests per minute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput_limit: Option<i64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub accuracy_metrics: BTreeMap<String, Ppm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_rate: Option<Ppm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_structure: Option<CostStructure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reputation_score: Option<Ppm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_satisfaction: Option<Ppm>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub historical_performance: Vec<PerformanceSample>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub name: String,
    #[serde(default)]
    pub version: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftwareLibrary {
    pub name: String,
    #[serde(default)]
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub license: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecurityScan {
    pub tool: String,
    pub timestamp: Timestamp,
    pub findings_count: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplyChain {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub component_dependencies: Vec<Component>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data_sources: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub infrastructure_providers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub software_libraries: Vec<SoftwareLibrary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub security_scanning: Vec<SecurityScan>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub license_compliance: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supply_chain_attestation: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevocationStatus {
    Valid,
    Revoked,
    Unknown,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationMeta {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub signatures: Vec<SignatureBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verification_authorities: Vec<String>,
    /// Reference to a trust policy document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification_policy: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub confidence_levels: BTreeMap<String, Ppm>,
    /// Per-section freshness override, in seconds.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub verification_ttl: BTreeMap<Section, u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub signature_algorithms: Vec<String>,
    /// Keyed by signature digest (`sha-256:<hex>`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub revocation_status: BTreeMap<String, RevocationStatus>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extensibility {
    /// Namespaced keys (`org.example.fact`) mapped to opaque values.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub custom_facts: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub integration_hooks: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schema_extensions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plugin_interfaces: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backward_compatibility: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    SyntaxError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown field at {path}")]
    UnknownField { path: String },
    #[error("missing field at {path}")]
    MissingField { path: String },
    #[error("type mismatch at {path}: {message}")]
    TypeMismatch { path: String, message: String },
    #[error("overlay may not modify protected data at {path}")]
    OverlayViolation { path: String },
    #[error("base document has {0} validation error(s)")]
    InvalidBase(usize),
}

fn pointer_from_serde_path(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for segment in path.iter() {
        match segment {
            Segment::Seq { index } => {
                out.push('/');
                out.push_str(&index.to_string());
            }
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push('/');
                out.push_str(&crate::canon::escape_pointer(key));
            }
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

fn backticked(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

/// Deserializes `input` into `T`, reporting failures with JSON-pointer paths.
pub(crate) fn parse_with_paths<T: serde::de::DeserializeOwned>(
    input: &str,
) -> Result<T, ModelError> {
    let mut de = serde_json::Deserializer::from_str(input);
    let result: Result<T, _> = serde_path_to_error::deserialize(&mut de);
    let value = match result {
        Ok(v) => v,
        Err(err) => {
            let path = pointer_from_serde_path(err.path());
            let inner = err.into_inner();
            return Err(classify_serde_error(path, inner));
        }
    };
    de.end().map_err(|e| ModelError::SyntaxError {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(value)
}

fn classify_serde_error(path: String, err: serde_json::Error) -> ModelError {
    use serde_json::error::Category;
    match err.classify() {
        Category::Syntax | Category::Eof | Category::Io => ModelError::SyntaxError {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        },
        Category::Data => {
            let message = err.to_string();
            let field = backticked(&message).map(str::to_string);
            let with_field = |path: String| match &field {
                Some(f) if !path.ends_with(&format!("/{f}")) => {
                    format!("{path}/{}", crate::canon::escape_pointer(f))
                }
                _ => path,
            };
            if message.starts_with("unknown field") {
                ModelError::UnknownField {
                    path: with_field(path),
                }
            } else if message.starts_with("missing field") {
                ModelError::MissingField {
                    path: with_field(path),
                }
            } else {
                let message = match message.find(" at line ") {
                    Some(idx) => message[..idx].to_string(),
                    None => message,
                };
                ModelError::TypeMismatch {
                    path: if path.is_empty() { "/".into() } else { path },
                    message,
                }
            }
        }
    }
}

pub fn parse_document(input: &str) -> Result<AgentFactsDoc, ModelError> {
    parse_with_paths(input)
}

impl AgentFactsDoc {
    /// A document carrying only the two required sections.
    pub fn new(identity: CoreIdentity, baseline_model: BaselineModel) -> Self {
        AgentFactsDoc {
            identity,
            baseline_model,
            classification: None,
            capabilities: None,
            auth_permissions: None,
            compliance: None,
            performance: None,
            supply_chain: None,
            verification: None,
            extensions: None,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents always serialize")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("documents always serialize")
    }

    pub fn has_section(&self, section: Section) -> bool {
        match section {
            Section::Identity | Section::BaselineModel => true,
            Section::Classification => self.classification.is_some(),
            Section::Capabilities => self.capabilities.is_some(),
            Section::AuthPermissions => self.auth_permissions.is_some(),
            Section::Compliance => self.compliance.is_some(),
            Section::Performance => self.performance.is_some(),
            Section::SupplyChain => self.supply_chain.is_some(),
            Section::Verification => self.verification.is_some(),
            Section::Extensions => self.extensions.is_some(),
        }
    }

    pub fn present_sections(&self) -> Vec<Section> {
        Section::ALL
            .into_iter()
            .filter(|s| self.has_section(*s))
            .collect()
    }

    pub fn signatures(&self) -> &[SignatureBlock] {
        self.verification
            .as_ref()
            .map(|v| v.signatures.as_slice())
            .unwrap_or(&[])
    }

    /// Appends a signature block, listing its authority among the
    /// verification authorities when it is not already there.
    pub fn attach_signature(&mut self, block: SignatureBlock) {
        let verification = self.verification.get_or_insert_with(Default::default);
        if !verification
            .verification_authorities
            .contains(&block.authority_id)
        {
            verification
                .verification_authorities
                .push(block.authority_id.clone());
        }
        verification.signatures.push(block);
    }

    pub fn permission_state(&self) -> Option<&PermissionState> {
        self.auth_permissions
            .as_ref()
            .and_then(|a| a.permission_state.as_ref())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub path: String,
    pub severity: Severity,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn error_count(&self) -> usize {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
            .count()
    }

    pub fn has_errors(&self) -> bool {
        self.error_count() > 0
    }

    pub fn errors_at<'a>(&'a self, path: &'a str) -> impl Iterator<Item = &'a Finding> + 'a {
        self.findings
            .iter()
            .filter(move |f| f.path == path && f.severity == Severity::Error)
    }
}

struct Findings(Vec<Finding>);

impl Findings {
    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Finding {
            path: path.into(),
            severity: Severity::Error,
            message: message.into(),
        });
    }

    fn warning(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Finding {
            path: path.into(),
            severity: Severity::Warning,
            message: message.into(),
        });
    }

    fn fraction(&mut self, path: impl Into<String>, value: Option<Ppm>) {
        if let Some(v) = value {
            if !v.is_unit_fraction() {
                self.error(path, format!("{v} is outside [0, 1]"));
            }
        }
    }

    fn non_empty(&mut self, path: impl Into<String>, value: &str) {
        if value.trim().is_empty() {
            self.error(path, "must not be empty");
        }
    }

    fn duplicates<T: Ord + fmt::Debug>(&mut self, path: &str, items: &[T]) {
        let mut seen = BTreeSet::new();
        for item in items {
            if !seen.insert(item) {
                self.warning(path, format!("duplicate entry {item:?}"));
            }
        }
    }

    fn url(&mut self, path: String, value: &str) {
        if url::Url::parse(value).is_err() {
            self.error(path, format!("{value:?} is not a well-formed URL"));
        }
    }
}

fn is_language_tag(tag: &str) -> bool {
    let primary = tag.split('-').next().unwrap_or("");
    (2..=3).contains(&primary.len()) && primary.bytes().all(|b| b.is_ascii_lowercase())
}

fn has_float(value: &Value) -> bool {
    match value {
        Value::Number(n) => !(n.is_i64() || n.is_u64()),
        Value::Array(items) => items.iter().any(has_float),
        Value::Object(map) => map.values().any(has_float),
        _ => false,
    }
}

/// Checks every structural invariant. Freshness is not judged here.
pub fn validate_document(doc: &AgentFactsDoc) -> ValidationReport {
    let mut f = Findings(Vec::new());

    let id = &doc.identity;
    if id.agent_id.is_empty() {
        f.error("/identity/agent_id", "must not be empty");
    } else if id.id_kind().is_none() {
        f.error(
            "/identity/agent_id",
            format!("{:?} is not a UUID, URI or DID", id.agent_id),
        );
    }
    if id.name.trim().is_empty() {
        f.warning("/identity/name", "no human-readable name");
    }
    f.non_empty("/identity/version", &id.version);
    if id.created > id.last_updated {
        f.error("/identity/last_updated", "created <= last_updated violated");
    }
    if id.ttl == 0 {
        f.error("/identity/ttl", "ttl must be greater than 0");
    }

    let bm = &doc.baseline_model;
    f.non_empty("/baseline_model/foundation_model", &bm.foundation_model);
    f.non_empty("/baseline_model/model_version", &bm.model_version);
    f.non_empty("/baseline_model/model_provider", &bm.model_provider);

    if let Some(caps) = &doc.capabilities {
        f.duplicates("/capabilities/tool_calling", &caps.tool_calling);
        f.duplicates("/capabilities/data_formats", &caps.data_formats);
        f.duplicates("/capabilities/interface_types", &caps.interface_types);
        for (i, tag) in caps.language_support.iter().enumerate() {
            if !is_language_tag(tag) {
                f.warning(
                    format!("/capabilities/language_support/{i}"),
                    format!("{tag:?} is not an ISO 639 language code"),
                );
            }
        }
    }

    if let Some(auth) = &doc.auth_permissions {
        f.duplicates(
            "/auth_permissions/supported_methods",
            &auth.supported_methods,
        );
        if let Some(primary) = auth.primary_scheme {
            if !auth.supported_methods.contains(&primary) {
                f.error(
                    "/auth_permissions/primary_scheme",
                    format!("{primary:?} is not among supported_methods"),
                );
            }
        }
        for (i, endpoint) in auth.oauth_endpoints.iter().enumerate() {
            f.url(format!("/auth_permissions/oauth_endpoints/{i}"), endpoint);
        }
        if let Some(session) = &auth.session_management {
            if session.timeout_seconds == Some(0) {
                f.error(
                    "/auth_permissions/session_management/timeout_seconds",
                    "timeout must be greater than 0",
                );
            }
        }
        if let Some(state) = &auth.permission_state {
            for (path, message) in state.structural_problems() {
                f.error(format!("/auth_permissions/permission_state{path}"), message);
            }
        }
    }

    if let Some(perf) = &doc.performance {
        if let (Some(p50), Some(p95)) = (perf.response_time_p50, perf.response_time_p95) {
            if p50 > p95 {
                f.error(
                    "/performance/response_time_p50",
                    format!("p50 <= p95 violated ({p50} > {p95})"),
                );
            }
        }
        f.fraction("/performance/availability_sla", perf.availability_sla);
        f.fraction("/performance/error_rate", perf.error_rate);
        f.fraction("/performance/reputation_score", perf.reputation_score);
        f.fraction("/performance/user_satisfaction", perf.user_satisfaction);
        for (tag, score) in &perf.accuracy_metrics {
            f.fraction(
                format!(
                    "/performance/accuracy_metrics/{}",
                    crate::canon::escape_pointer(tag)
                ),
                Some(*score),
            );
        }
        if perf.throughput_limit.is_some_and(|t| t < 0) {
            f.error("/performance/throughput_limit", "must be >= 0");
        }
    }

    if let Some(sc) = &doc.supply_chain {
        for (i, c) in sc.component_dependencies.iter().enumerate() {
            f.non_empty(
                format!("/supply_chain/component_dependencies/{i}/name"),
                &c.name,
            );
        }
        for (i, lib) in sc.software_libraries.iter().enumerate() {
            f.non_empty(
                format!("/supply_chain/software_libraries/{i}/name"),
                &lib.name,
            );
        }
    }

    if let Some(v) = &doc.verification {
        for (i, sig) in v.signatures.iter().enumerate() {
            let base = format!("/verification/signatures/{i}");
            if !v.verification_authorities.contains(&sig.authority_id) {
                f.error(
                    format!("{base}/authority_id"),
                    format!(
                        "{} is not listed in verification_authorities",
                        sig.authority_id
                    ),
                );
            }
            if sig.scope.is_empty() {
                f.error(format!("{base}/scope"), "signature scope is empty");
            }
            f.fraction(format!("{base}/confidence"), Some(sig.confidence));
            if sig.agent_id != doc.identity.agent_id {
                f.warning(
                    format!("{base}/agent_id"),
                    "signature is bound to another agent",
                );
            }
        }
        for (authority, level) in &v.confidence_levels {
            f.fraction(
                format!(
                    "/verification/confidence_levels/{}",
                    crate::canon::escape_pointer(authority)
                ),
                Some(*level),
            );
        }
        for (section, ttl) in &v.verification_ttl {
            if *ttl == 0 {
                f.error(
                    format!("/verification/verification_ttl/{section}"),
                    "ttl must be greater than 0",
                );
            }
        }
    }

    if let Some(ext) = &doc.extensions {
        for (key, value) in &ext.custom_facts {
            let path = format!(
                "/extensions/custom_facts/{}",
                crate::canon::escape_pointer(key)
            );
            let parts: Vec<&str> = key.split('.').collect();
            if parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
                f.error(&path, format!("custom fact key {key:?} is not namespaced"));
            }
            if has_float(value) {
                f.warning(
                    &path,
                    "contains non-integer numbers; extensions cannot be signed",
                );
            }
        }
        for (i, hook) in ext.integration_hooks.iter().enumerate() {
            f.url(format!("/extensions/integration_hooks/{i}"), hook);
        }
    }

    ValidationReport { findings: f.0 }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScopeOfWork {
    #[serde(default)]
    pub included_tasks: Vec<String>,
    #[serde(default)]
    pub excluded_tasks: Vec<String>,
}

/// Organization-assigned role data layered on top of verified facts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleOverlay {
    pub assigning_org: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification_updates: Option<Classification>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub permission_grants: Vec<GrantRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope_of_work: Option<ScopeOfWork>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constitution: Vec<String>,
}

const PROTECTED_OVERLAY_KEYS: [&str; 4] =
    ["identity", "baseline_model", "supply_chain", "verification"];

impl RoleOverlay {
    /// Parses an overlay file. Attempts to touch identity, baseline model,
    /// supply chain or verification data are reported as violations rather
    /// than as unknown fields.
    pub fn parse(input: &str) -> Result<Self, ModelError> {
        let raw: Value = serde_json::from_str(input).map_err(|e| ModelError::SyntaxError {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if let Value::Object(map) = &raw {
            for key in PROTECTED_OVERLAY_KEYS {
                if let Some(value) = map.get(key) {
                    let mut path = format!("/{key}");
                    if let Some(first) = value.as_object().and_then(|m| m.keys().next()) {
                        path.push('/');
                        path.push_str(&crate::canon::escape_pointer(first));
                    }
                    return Err(ModelError::OverlayViolation { path });
                }
            }
        }
        parse_with_paths(input)
    }

    /// Key under `extensions.custom_facts` where this overlay's role data lives.
    pub fn namespace(&self) -> String {
        format!("org.{}", self.assigning_org)
    }
}

/// Layers `overlay` onto `base`, producing the next revision.
pub fn apply_overlay(
    base: &AgentFactsDoc,
    overlay: &RoleOverlay,
    now: Timestamp,
) -> Result<AgentFactsDoc, ModelError> {
    let report = validate_document(base);
    if report.has_errors() {
        return Err(ModelError::InvalidBase(report.error_count()));
    }
    if overlay.assigning_org.trim().is_empty() {
        return Err(ModelError::OverlayViolation {
            path: "/assigning_org".into(),
        });
    }
    if now < base.identity.last_updated {
        return Err(ModelError::OverlayViolation {
            path: "/identity/last_updated".into(),
        });
    }

    let mut doc = base.clone();
    if let Some(updates) = &overlay.classification_updates {
        doc.classification
            .get_or_insert_with(Default::default)
            .overlay(updates);
    }
    if !overlay.permission_grants.is_empty() {
        let auth = doc.auth_permissions.get_or_insert_with(Default::default);
        let state = auth.permission_state.get_or_insert_with(Default::default);
        state
            .pending
            .extend(overlay.permission_grants.iter().cloned());
    }
    if overlay.scope_of_work.is_some() || !overlay.constitution.is_empty() {
        let mut record = serde_json::Map::new();
        if let Some(scope) = &overlay.scope_of_work {
            record.insert(
                "scope_of_work".into(),
                serde_json::to_value(scope).expect("scope serializes"),
            );
        }
        record.insert(
            "constitution".into(),
            Value::from(overlay.constitution.clone()),
        );
        doc.extensions
            .get_or_insert_with(Default::default)
            .custom_facts
            .insert(overlay.namespace(), Value::Object(record));
    }
    doc.identity.version_seq += 1;
    doc.identity.last_updated = now;
    Ok(doc)
}

/// A stakeholder projection of a document. Unlike [`AgentFactsDoc`] every
/// section but identity may be absent, since government views drop the
/// baseline model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentView {
    pub identity: CoreIdentity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_model: Option<BaselineModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<Capabilities>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_permissions: Option<AuthPermissions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compliance: Option<Compliance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub performance: Option<Performance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supply_chain: Option<SupplyChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extensions: Option<Extensibility>,
}

impl From<AgentFactsDoc> for DocumentView {
    fn from(doc: AgentFactsDoc) -> Self {
        DocumentView {
            identity: doc.identity,
            baseline_model: Some(doc.baseline_model),
            classification: doc.classification,
            capabilities: doc.capabilities,
            auth_permissions: doc.auth_permissions,
            compliance: doc.compliance,
            performance: doc.performance,
            supply_chain: doc.supply_chain,
            verification: doc.verification,
            extensions: doc.extensions,
        }
    }
}

impl DocumentView {
    /// Narrows this view further; selecting the same audience twice is a no-op.
    pub fn select(&self, audience: Audience) -> DocumentView {
        let mut view = DocumentView {
            identity: self.identity.clone(),
            baseline_model: None,
            classification: None,
            capabilities: None,
            auth_permissions: None,
            compliance: None,
            performance: None,
            supply_chain: None,
            verification: None,
            extensions: None,
        };
        match audience {
            Audience::Enterprise => return self.clone(),
            Audience::Consumer => {
                view.baseline_model = self.baseline_model.clone();
                view.classification = self.classification.clone();
                view.performance = self.performance.clone();
                view.compliance = self
                    .compliance
                    .as_ref()
                    .and_then(|c| c.safety_classification)
                    .map(|safety| Compliance {
                        safety_classification: Some(safety),
                        ..Default::default()
                    });
            }
            Audience::Government => {
                view.compliance = self.compliance.clone();
                view.verification = self.verification.clone();
            }
        }
        view
    }

    /// Names of the top-level keys present in the serialized view.
    pub fn present_sections(&self) -> Vec<Section> {
        let value = serde_json::to_value(self).expect("views always serialize");
        Section::ALL
            .into_iter()
            .filter(|s| value.get(s.as_str()).is_some())
            .collect()
    }
}

/// Projects the sections relevant to one kind of stakeholder: enterprises
/// see everything; consumers see identity, baseline model, classification,
/// safety classification and performance; governments see identity,
/// compliance and verification.
pub fn select_view(doc: &AgentFactsDoc, audience: Audience) -> DocumentView {
    DocumentView::from(doc.clone()).select(audience)
}
