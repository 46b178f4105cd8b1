// SPDX-License-Identifier: Apache-2.0

//! Time-limited, scope-specific permissions with a hash-chained audit trail.
//!
//! [`PermissionState`] is an immutable value: every operation returns a new
//! state. Grants are default-deny; elevated grants expire back to the
//! ttl-exempt baseline grants.
//!
//! Resource patterns are `/`-separated segments where `*` matches exactly
//! one segment, a trailing `**` matches zero or more segments, and any other
//! segment matches literally.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::canon::{canonicalize_serialize, Digest};
use crate::units::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Read,
    Write,
    Execute,
    Admin,
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "read" => Ok(Action::Read),
            "write" => Ok(Action::Write),
            "execute" => Ok(Action::Execute),
            "admin" => Ok(Action::Admin),
            other => Err(format!("unknown action {other:?}")),
        }
    }
}

/// Business-hours style window: `start_hour <= local hour < end_hour`,
/// evaluated in the named IANA timezone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeWindow {
    pub start_hour: u8,
    pub end_hour: u8,
    pub timezone: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_window: Option<TimeWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geographic: Option<BTreeSet<String>>,
    #[serde(default)]
    pub human_review_required: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrantRequest {
    pub actions: BTreeSet<Action>,
    pub resource_pattern: String,
    pub ttl: u64,
    pub authority: String,
    #[serde(default)]
    pub constraints: ConstraintSet,
    #[serde(default)]
    pub justification: String,
    /// Baseline grants never expire by ttl.
    #[serde(default)]
    pub baseline: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrantStatus {
    Active,
    Expired,
    Revoked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrantRecord {
    pub id: u64,
    pub grant: GrantRequest,
    pub granted_by: String,
    pub granted_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires_at: Option<Timestamp>,
    pub status: GrantStatus,
}

impl GrantRecord {
    /// Active, not past expiry and already in force at `now`.
    pub fn in_force(&self, now: Timestamp) -> bool {
        self.status == GrantStatus::Active
            && now >= self.granted_at
            && self.expires_at.is_none_or(|exp| now <= exp)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscalationPolicy {
    pub approver_authorities: BTreeSet<String>,
    pub max_ttl: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    Grant,
    Revoke,
    Escalate,
    Revert,
    CheckDenied,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEntry {
    pub seq: u64,
    pub at: Timestamp,
    pub actor: String,
    pub action: AuditAction,
    pub detail: Value,
    pub prev_hash: Digest,
    pub entry_hash: Digest,
}

#[derive(Serialize)]
struct AuditBody<'a> {
    seq: u64,
    at: Timestamp,
    actor: &'a str,
    action: AuditAction,
    detail: &'a Value,
    prev_hash: Digest,
}

impl AuditEntry {
    /// `sha256(canonical(entry without entry_hash) ++ prev_hash)`.
    pub fn compute_hash(&self) -> Option<Digest> {
        let body = AuditBody {
            seq: self.seq,
            at: self.at,
            actor: &self.actor,
            action: self.action,
            detail: &self.detail,
            prev_hash: self.prev_hash,
        };
        let mut bytes = canonicalize_serialize(&body).ok()?.into_bytes();
        bytes.extend_from_slice(self.prev_hash.as_bytes());
        Some(Digest::sha256(&bytes))
    }
}

/// True iff `seq` runs 0, 1, 2, … and every hash recomputes; the first
/// entry chains from 32 zero octets.
pub fn verify_audit_chain(audit: &[AuditEntry]) -> bool {
    let mut prev = Digest::ZERO;
    for (i, entry) in audit.iter().enumerate() {
        if entry.seq != i as u64 || entry.prev_hash != prev {
            return false;
        }
        match entry.compute_hash() {
            Some(h) if h == entry.entry_hash => prev = h,
            _ => return false,
        }
    }
    true
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermissionState {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grants: Vec<GrantRecord>,
    /// Requests layered on by a role overlay, awaiting an authority's grant.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pending: Vec<GrantRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escalation_policy: Option<EscalationPolicy>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub audit: Vec<AuditEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PermissionError {
    #[error("actor {actor} is not the requesting authority {authority}")]
    ActorMismatch { actor: String, authority: String },
    #[error("invalid grant request: {0}")]
    InvalidRequest(String),
    #[error("{0} is not an approver under the escalation policy")]
    UnauthorizedApprover(String),
    #[error("requested ttl {requested}s exceeds escalation maximum {max}s")]
    TtlExceedsPolicy { requested: u64, max: u64 },
    #[error("no grant with id {0}")]
    UnknownGrant(u64),
    #[error("no pending request at index {0}")]
    UnknownPending(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    TimeWindow,
    Geographic,
    HumanReview,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "constraint")]
pub enum DenyReason {
    NoMatchingGrant,
    Expired,
    Revoked,
    Constraint(ConstraintKind),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision")]
pub enum Decision {
    Allow { grant_id: u64 },
    Deny(DenyReasonBox),
}

/// Wrapper so the deny reason flattens next to the `decision` tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenyReasonBox {
    #[serde(flatten)]
    pub reason: DenyReason,
}

impl Decision {
    pub fn deny(reason: DenyReason) -> Self {
        Decision::Deny(DenyReasonBox { reason })
    }

    pub fn is_allow(&self) -> bool {
        matches!(self, Decision::Allow { .. })
    }

    pub fn deny_reason(&self) -> Option<DenyReason> {
        match self {
            Decision::Deny(b) => Some(b.reason),
            Decision::Allow { .. } => None,
        }
    }
}

/// Circumstances of an access attempt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessContext {
    pub now: Timestamp,
    /// Hour of `now` in the caller's own timezone (informational; time
    /// windows are evaluated in the timezone they name).
    pub local_hour: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jurisdiction: Option<String>,
    #[serde(default)]
    pub human_reviewer_present: bool,
}

impl AccessContext {
    pub fn new(
        now: Timestamp,
        timezone: &str,
        jurisdiction: Option<&str>,
        human_reviewer_present: bool,
    ) -> Result<Self, PermissionError> {
        let local_hour = hour_in(now, timezone)?;
        Ok(AccessContext {
            now,
            local_hour,
            jurisdiction: jurisdiction.map(str::to_string),
            human_reviewer_present,
        })
    }
}

pub fn hour_in(now: Timestamp, timezone: &str) -> Result<u8, PermissionError> {
    use chrono::Timelike;
    let tz = chrono_tz::Tz::from_str(timezone)
        .map_err(|_| PermissionError::InvalidRequest(format!("unknown timezone {timezone:?}")))?;
    Ok(now.to_datetime().with_timezone(&tz).hour() as u8)
}

pub fn validate_pattern(pattern: &str) -> Result<(), String> {
    if pattern.is_empty() {
        return Err("resource pattern is empty".into());
    }
    let segments: Vec<&str> = pattern.split('/').collect();
    for (i, seg) in segments.iter().enumerate() {
        if seg.is_empty() {
            return Err(format!("empty segment in pattern {pattern:?}"));
        }
        if *seg == "**" && i + 1 != segments.len() {
            return Err(format!("'**' must be the final segment in {pattern:?}"));
        }
        if seg.contains('*') && *seg != "*" && *seg != "**" {
            return Err(format!(
                "wildcards must fill a whole segment in {pattern:?}"
            ));
        }
    }
    Ok(())
}

/// Matches `resource` against a pattern (see module docs).
pub fn pattern_matches(pattern: &str, resource: &str) -> bool {
    let pat: Vec<&str> = pattern.split('/').collect();
    let res: Vec<&str> = resource.split('/').collect();
    let mut i = 0;
    for (pi, seg) in pat.iter().enumerate() {
        match *seg {
            "**" if pi + 1 == pat.len() => return true,
            "*" => {
                if i >= res.len() || res[i].is_empty() {
                    return false;
                }
            }
            literal => {
                if i >= res.len() || res[i] != literal {
                    return false;
                }
            }
        }
        i += 1;
    }
    i == res.len()
}

impl GrantRequest {
    pub fn validate(&self) -> Result<(), PermissionError> {
        let invalid = |m: String| Err(PermissionError::InvalidRequest(m));
        if self.actions.is_empty() {
            return invalid("actions must not be empty".into());
        }
        if let Err(m) = validate_pattern(&self.resource_pattern) {
            return invalid(m);
        }
        if self.ttl == 0 {
            return invalid("ttl must be greater than 0".into());
        }
        if self.authority.trim().is_empty() {
            return invalid("authority must not be empty".into());
        }
        if let Some(w) = &self.constraints.time_window {
            if !(w.start_hour < w.end_hour && w.end_hour <= 24) {
                return invalid(format!(
                    "time window {}-{} must satisfy 0 <= start < end <= 24",
                    w.start_hour, w.end_hour
                ));
            }
            hour_in(Timestamp::from_unix(0), &w.timezone)?;
        }
        Ok(())
    }

    fn unmet_constraint(&self, ctx: &AccessContext) -> Option<ConstraintKind> {
        let c = &self.constraints;
        if let Some(w) = &c.time_window {
            let hour = hour_in(ctx.now, &w.timezone).ok()?;
            if !(w.start_hour <= hour && hour < w.end_hour) {
                return Some(ConstraintKind::TimeWindow);
            }
        }
        if let Some(allowed) = &c.geographic {
            if !ctx
                .jurisdiction
                .as_ref()
                .is_some_and(|j| allowed.contains(j))
            {
                return Some(ConstraintKind::Geographic);
            }
        }
        if c.human_review_required && !ctx.human_reviewer_present {
            return Some(ConstraintKind::HumanReview);
        }
        None
    }
}

fn grant_detail(record: &GrantRecord) -> Value {
    json!({
        "grant_id": record.id,
        "actions": record.grant.actions,
        "resource_pattern": record.grant.resource_pattern,
        "expires_at": record.expires_at,
        "baseline": record.grant.baseline,
        "justification": record.grant.justification,
    })
}

impl PermissionState {
    pub fn with_escalation_policy(policy: EscalationPolicy) -> Self {
        PermissionState {
            escalation_policy: Some(policy),
            ..Default::default()
        }
    }

    pub fn active_grants(&self, now: Timestamp) -> impl Iterator<Item = &GrantRecord> {
        self.grants.iter().filter(move |g| g.in_force(now))
    }

    fn append_audit(&mut self, at: Timestamp, actor: &str, action: AuditAction, detail: Value) {
        let prev_hash = self.audit.last().map_or(Digest::ZERO, |e| e.entry_hash);
        let mut entry = AuditEntry {
            seq: self.audit.len() as u64,
            at,
            actor: actor.to_string(),
            action,
            detail,
            prev_hash,
            entry_hash: Digest::ZERO,
        };
        entry.entry_hash = entry
            .compute_hash()
            .expect("audit details are built from integers and strings");
        self.audit.push(entry);
    }

    fn add_grant(
        &self,
        req: &GrantRequest,
        actor: &str,
        now: Timestamp,
        action: AuditAction,
    ) -> PermissionState {
        let mut next = self.clone();
        let id = next.grants.iter().map(|g| g.id + 1).max().unwrap_or(0);
        let record = GrantRecord {
            id,
            grant: req.clone(),
            granted_by: actor.to_string(),
            granted_at: now,
            expires_at: (!req.baseline).then(|| now.plus_secs(req.ttl as i64)),
            status: GrantStatus::Active,
        };
        next.append_audit(now, actor, action, grant_detail(&record));
        next.grants.push(record);
        next
    }

    /// Problems with the stored state, as (relative pointer, message).
    pub fn structural_problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, g) in self.grants.iter().enumerate() {
            if !ids.insert(g.id) {
                out.push((
                    format!("/grants/{i}/id"),
                    format!("duplicate grant id {}", g.id),
                ));
            }
            if let Err(PermissionError::InvalidRequest(m)) = g.grant.validate() {
                out.push((format!("/grants/{i}/grant"), m));
            }
            let expected = (!g.grant.baseline).then(|| g.granted_at.plus_secs(g.grant.ttl as i64));
            if g.expires_at != expected {
                out.push((
                    format!("/grants/{i}/expires_at"),
                    "expires_at must equal granted_at + ttl (absent for baseline grants)".into(),
                ));
            }
        }
        for (i, req) in self.pending.iter().enumerate() {
            if let Err(PermissionError::InvalidRequest(m)) = req.validate() {
                out.push((format!("/pending/{i}"), m));
            }
        }
        if !verify_audit_chain(&self.audit) {
            out.push(("/audit".into(), "audit hash chain does not verify".into()));
        }
        out
    }
}

/// Adds a grant issued by `actor`, who must be the request's authority.
pub fn grant(
    state: &PermissionState,
    req: &GrantRequest,
    actor: &str,
    now: Timestamp,
) -> Result<PermissionState, PermissionError> {
    if actor != req.authority {
        return Err(PermissionError::ActorMismatch {
            actor: actor.to_string(),
            authority: req.authority.clone(),
        });
    }
    req.validate()?;
    Ok(state.add_grant(req, actor, now, AuditAction::Grant))
}

/// Grants the pending request at `index` (layered on by a role overlay).
pub fn grant_pending(
    state: &PermissionState,
    index: usize,
    actor: &str,
    now: Timestamp,
) -> Result<PermissionState, PermissionError> {
    let req = state
        .pending
        .get(index)
        .cloned()
        .ok_or(PermissionError::UnknownPending(index))?;
    let mut next = grant(state, &req, actor, now)?;
    next.pending.remove(index);
    Ok(next)
}

/// Decides an access attempt. Denials are appended to the audit trail;
/// grants are never touched.
pub fn check(
    state: &PermissionState,
    action: Action,
    resource: &str,
    ctx: &AccessContext,
) -> (Decision, PermissionState) {
    let mut constraint = None;
    let mut lapsed = None;
    for g in &state.grants {
        if !g.grant.actions.contains(&action)
            || !pattern_matches(&g.grant.resource_pattern, resource)
        {
            continue;
        }
        if !g.in_force(ctx.now) {
            let reason = if g.status == GrantStatus::Revoked {
                DenyReason::Revoked
            } else {
                DenyReason::Expired
            };
            lapsed.get_or_insert(reason);
            continue;
        }
        match g.grant.unmet_constraint(ctx) {
            None => return (Decision::Allow { grant_id: g.id }, state.clone()),
            Some(kind) => {
                constraint.get_or_insert(kind);
            }
        }
    }
    let reason = constraint
        .map(DenyReason::Constraint)
        .or(lapsed)
        .unwrap_or(DenyReason::NoMatchingGrant);
    let decision = Decision::deny(reason);
    let mut next = state.clone();
    next.append_audit(
        ctx.now,
        "enforcement",
        AuditAction::CheckDenied,
        json!({
            "action": action,
            "resource": resource,
            "decision": decision,
        }),
    );
    (decision, next)
}

/// Adds a time-boxed grant approved under the escalation policy.
pub fn escalate(
    state: &PermissionState,
    req: &GrantRequest,
    approver: &str,
    now: Timestamp,
) -> Result<PermissionState, PermissionError> {
    let policy = state.escalation_policy.clone().unwrap_or_default();
    if !policy.approver_authorities.contains(approver) {
        return Err(PermissionError::UnauthorizedApprover(approver.to_string()));
    }
    if req.ttl > policy.max_ttl {
        return Err(PermissionError::TtlExceedsPolicy {
            requested: req.ttl,
            max: policy.max_ttl,
        });
    }
    if req.baseline {
        return Err(PermissionError::InvalidRequest(
            "escalated grants cannot be baseline grants".into(),
        ));
    }
    req.validate()?;
    Ok(state.add_grant(req, approver, now, AuditAction::Escalate))
}

/// An escalation planned ahead of a deadline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledEscalation {
    pub id: String,
    pub due_at: Timestamp,
    pub approver: String,
    pub request: GrantRequest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum ScheduleOutcome {
    Applied { grant_id: u64 },
    AlreadyApplied { grant_id: u64 },
    NotDue,
    Refused { reason: String },
}

/// Reverts expired grants, then applies every due escalation that is not
/// already reflected in the grant list. Running it again at the same or a
/// later time applies nothing twice.
pub fn run_schedule(
    state: &PermissionState,
    schedule: &[ScheduledEscalation],
    now: Timestamp,
) -> (PermissionState, Vec<(String, ScheduleOutcome)>) {
    let mut next = revert_expired(state, now);
    let mut outcomes = Vec::with_capacity(schedule.len());
    let mut entries: Vec<&ScheduledEscalation> = schedule.iter().collect();
    entries.sort_by(|a, b| (a.due_at, &a.id).cmp(&(b.due_at, &b.id)));
    for entry in entries {
        let previous = next.grants.iter().find(|g| {
            g.grant == entry.request
                && g.granted_by == entry.approver
                && g.granted_at >= entry.due_at
        });
        let outcome = if let Some(g) = previous {
            ScheduleOutcome::AlreadyApplied { grant_id: g.id }
        } else if entry.due_at > now {
            ScheduleOutcome::NotDue
        } else {
            match escalate(&next, &entry.request, &entry.approver, now) {
                Ok(after) => {
                    next = after;
                    ScheduleOutcome::Applied {
                        grant_id: next.grants.last().expect("a grant was added").id,
                    }
                }
                Err(e) => ScheduleOutcome::Refused {
                    reason: e.to_string(),
                },
            }
        };
        outcomes.push((entry.id.clone(), outcome));
    }
    (next, outcomes)
}

/// Revokes a grant; only the issuing actor may revoke it.
pub fn revoke_grant(
    state: &PermissionState,
    grant_id: u64,
    actor: &str,
    now: Timestamp,
    reason: &str,
) -> Result<PermissionState, PermissionError> {
    let idx = state
        .grants
        .iter()
        .position(|g| g.id == grant_id)
        .ok_or(PermissionError::UnknownGrant(grant_id))?;
    let record = &state.grants[idx];
    if record.granted_by != actor {
        return Err(PermissionError::ActorMismatch {
            actor: actor.to_string(),
            authority: record.granted_by.clone(),
        });
    }
    let mut next = state.clone();
    if next.grants[idx].status != GrantStatus::Revoked {
        next.grants[idx].status = GrantStatus::Revoked;
        next.append_audit(
            now,
            actor,
            AuditAction::Revoke,
            json!({ "grant_id": grant_id, "reason": reason }),
        );
    }
    Ok(next)
}

/// Marks every elevated grant whose expiry has passed as expired, one
/// audit entry per transition, ordered by (expires_at, grant id).
pub fn revert_expired(state: &PermissionState, now: Timestamp) -> PermissionState {
    let mut due: Vec<(Timestamp, u64, usize)> = state
        .grants
        .iter()
        .enumerate()
        .filter(|(_, g)| g.status == GrantStatus::Active && !g.grant.baseline)
        .filter_map(|(i, g)| {
            g.expires_at
                .filter(|exp| *exp < now)
                .map(|exp| (exp, g.id, i))
        })
        .collect();
    due.sort_unstable();
    let mut next = state.clone();
    for (expires_at, id, idx) in due {
        next.grants[idx].status = GrantStatus::Expired;
        next.append_audit(
            now,
            "system",
            AuditAction::Revert,
            json!({ "grant_id": id, "expires_at": expires_at }),
        );
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAY: u64 = 86_400;

    fn ts(s: &str) -> Timestamp {
        Timestamp::parse(s).unwrap()
    }

    fn req(actions: &[Action], pattern: &str, ttl: u64, authority: &str) -> GrantRequest {
        GrantRequest {
            actions: actions.iter().copied().collect(),
            resource_pattern: pattern.into(),
            ttl,
            authority: authority.into(),
            constraints: ConstraintSet::default(),
            justification: String::new(),
            baseline: false,
        }
    }

    fn ctx(now: Timestamp) -> AccessContext {
        AccessContext::new(now, "UTC", Some("us"), true).unwrap()
    }

    #[test]
    fn pattern_semantics() {
        assert!(pattern_matches(
            "finance/historical/**",
            "finance/historical/2024/q3.csv"
        ));
        assert!(pattern_matches(
            "finance/historical/**",
            "finance/historical"
        ));
        assert!(!pattern_matches(
            "finance/historical/**",
            "finance/current/x"
        ));
        assert!(pattern_matches(
            "reporting/templates/*",
            "reporting/templates/10-k"
        ));
        assert!(!pattern_matches(
            "reporting/templates/*",
            "reporting/templates/a/b"
        ));
        assert!(!pattern_matches(
            "reporting/templates/*",
            "reporting/templates"
        ));
        assert!(pattern_matches("a/b", "a/b"));
        assert!(!pattern_matches("a/b", "a/b/c"));
        assert!(validate_pattern("a/**/b").is_err());
        assert!(validate_pattern("a/x*").is_err());
        assert!(validate_pattern("a//b").is_err());
        assert!(validate_pattern("").is_err());
    }

    #[test]
    fn ninety_day_read_grant() {
        let now = ts("2025-01-06T09:00:00Z");
        let r = req(
            &[Action::Read],
            "finance/historical/**",
            90 * DAY,
            "org:acme",
        );
        let state = grant(&PermissionState::default(), &r, "org:acme", now).unwrap();
        assert_eq!(state.grants.len(), 1);
        assert_eq!(state.audit.len(), 1);
        assert_eq!(state.grants[0].status, GrantStatus::Active);
        assert_eq!(
            state.grants[0].expires_at,
            Some(now.plus_secs(90 * DAY as i64))
        );

        let (d, after) = check(
            &state,
            Action::Read,
            "finance/historical/2024/q3.csv",
            &ctx(now.plus_secs(3600)),
        );
        assert!(d.is_allow());
        assert_eq!(after, state, "allowed checks leave state untouched");

        let late = now.plus_secs(90 * DAY as i64 + 1);
        let (d, after) = check(
            &state,
            Action::Read,
            "finance/historical/2024/q3.csv",
            &ctx(late),
        );
        assert_eq!(d.deny_reason(), Some(DenyReason::Expired));
        assert_eq!(after.audit.len(), 2);
        assert_eq!(after.audit[1].action, AuditAction::CheckDenied);
        assert_eq!(after.grants, state.grants);
    }

    #[test]
    fn human_review_constraint_is_carried() {
        let mut r = req(&[Action::Write], "reporting/templates/*", DAY, "org:acme");
        r.constraints.human_review_required = true;
        let state = grant(
            &PermissionState::default(),
            &r,
            "org:acme",
            ts("2025-01-06T09:00:00Z"),
        )
        .unwrap();
        assert!(state.grants[0].grant.constraints.human_review_required);
        let mut c = ctx(ts("2025-01-06T10:00:00Z"));
        c.human_reviewer_present = false;
        let (d, _) = check(&state, Action::Write, "reporting/templates/q3", &c);
        assert_eq!(
            d.deny_reason(),
            Some(DenyReason::Constraint(ConstraintKind::HumanReview))
        );
    }

    #[test]
    fn actor_must_be_authority() {
        let r = req(&[Action::Read], "a/**", DAY, "org:acme");
        let err = grant(
            &PermissionState::default(),
            &r,
            "org:mallory",
            ts("2025-01-06T09:00:00Z"),
        )
        .unwrap_err();
        assert!(matches!(err, PermissionError::ActorMismatch { .. }));
    }

    #[test]
    fn off_hours_write_denied() {
        let mut r = req(
            &[Action::Write],
            "reporting/official/**",
            30 * DAY,
            "org:acme",
        );
        r.constraints.time_window = Some(TimeWindow {
            start_hour: 8,
            end_hour: 18,
            timezone: "America/New_York".into(),
        });
        let state = grant(
            &PermissionState::default(),
            &r,
            "org:acme",
            ts("2025-01-06T00:00:00Z"),
        )
        .unwrap();
        // 07:00Z = 02:00 in New York (EST, UTC-5)
        let night =
            AccessContext::new(ts("2025-01-07T07:00:00Z"), "America/New_York", None, true).unwrap();
        assert_eq!(night.local_hour, 2);
        let (d, _) = check(&state, Action::Write, "reporting/official/10-q", &night);
        assert_eq!(
            d.deny_reason(),
            Some(DenyReason::Constraint(ConstraintKind::TimeWindow))
        );
        let day =
            AccessContext::new(ts("2025-01-07T15:00:00Z"), "America/New_York", None, true).unwrap();
        assert!(
            check(&state, Action::Write, "reporting/official/10-q", &day)
                .0
                .is_allow()
        );
    }

    #[test]
    fn geographic_constraint() {
        let mut r = req(&[Action::Read], "data/**", DAY, "o");
        r.constraints.geographic = Some(["us".to_string()].into_iter().collect());
        let s = grant(
            &PermissionState::default(),
            &r,
            "o",
            Timestamp::from_unix(0),
        )
        .unwrap();
        let mut c = ctx(Timestamp::from_unix(10));
        assert!(check(&s, Action::Read, "data/x", &c).0.is_allow());
        c.jurisdiction = Some("eu".into());
        assert_eq!(
            check(&s, Action::Read, "data/x", &c).0.deny_reason(),
            Some(DenyReason::Constraint(ConstraintKind::Geographic))
        );
        c.jurisdiction = None;
        assert!(!check(&s, Action::Read, "data/x", &c).0.is_allow());
    }

    #[test]
    fn escalation_rules() {
        let policy = EscalationPolicy {
            approver_authorities: ["org:cfo".to_string()].into_iter().collect(),
            max_ttl: 7 * DAY,
        };
        let base = PermissionState::with_escalation_policy(policy);
        let now = ts("2025-03-20T09:00:00Z");
        let mut r = req(
            &[Action::Write],
            "reporting/templates/*",
            5 * DAY,
            "org:cfo",
        );
        r.justification = "quarterly filing deadline".into();
        let s = escalate(&base, &r, "org:cfo", now).unwrap();
        assert_eq!(s.grants.len(), 1);
        assert_eq!(s.audit[0].action, AuditAction::Escalate);
        assert_eq!(
            s.audit[0].detail["justification"],
            "quarterly filing deadline"
        );
        assert_eq!(s.grants[0].granted_by, "org:cfo");

        assert!(matches!(
            escalate(&base, &r, "org:intern", now),
            Err(PermissionError::UnauthorizedApprover(_))
        ));
        r.ttl = 8 * DAY;
        assert!(matches!(
            escalate(&base, &r, "org:cfo", now),
            Err(PermissionError::TtlExceedsPolicy { .. })
        ));
    }

    #[test]
    fn schedule_applies_due_entries_once() {
        let policy = EscalationPolicy {
            approver_authorities: ["org:cfo".to_string()].into_iter().collect(),
            max_ttl: 7 * DAY,
        };
        let base = PermissionState::with_escalation_policy(policy);
        let due = ts("2025-03-24T13:00:00Z");
        let entry = |id: &str, at: Timestamp, approver: &str| ScheduledEscalation {
            id: id.into(),
            due_at: at,
            approver: approver.into(),
            request: req(&[Action::Write], "reports/q1/*", 2 * DAY, "org:cfo"),
        };
        let schedule = vec![
            entry("filing", due, "org:cfo"),
            entry("later", due.plus_secs(DAY as i64), "org:cfo"),
            entry("rogue", due, "org:intern"),
        ];

        let (s, out) = run_schedule(&base, &schedule, due.plus_secs(60));
        assert_eq!(s.grants.len(), 1);
        assert_eq!(
            out[0],
            (
                "filing".into(),
                ScheduleOutcome::Applied {
                    grant_id: s.grants[0].id
                }
            )
        );
        assert!(matches!(out[1].1, ScheduleOutcome::Refused { .. }));
        assert_eq!(out[2], ("later".into(), ScheduleOutcome::NotDue));

        let (again, out) = run_schedule(&s, &schedule, due.plus_secs(120));
        assert_eq!(again, s);
        assert_eq!(
            out[0].1,
            ScheduleOutcome::AlreadyApplied {
                grant_id: s.grants[0].id
            }
        );

        let (s3, _) = run_schedule(&s, &schedule, due.plus_secs(3 * DAY as i64));
        assert_eq!(s3.grants.len(), 2);
        assert_eq!(s3.grants[0].status, GrantStatus::Expired);
        assert_eq!(s3.grants[1].status, GrantStatus::Active);
    }

    #[test]
    fn reversion_keeps_baseline() {
        let t0 = ts("2025-03-01T00:00:00Z");
        let mut baseline = req(
            &[Action::Read],
            "finance/historical/**",
            90 * DAY,
            "org:acme",
        );
        baseline.baseline = true;
        let s = grant(&PermissionState::default(), &baseline, "org:acme", t0).unwrap();
        let elevated = req(&[Action::Write], "reporting/templates/*", DAY, "org:acme");
        let s = grant(&s, &elevated, "org:acme", t0).unwrap();
        let s = grant(&s, &elevated, "org:acme", t0).unwrap();

        let unchanged = revert_expired(&s, t0.plus_secs(DAY as i64));
        assert_eq!(unchanged, s);

        let later = t0.plus_secs(400 * DAY as i64);
        let r = revert_expired(&s, later);
        let active: Vec<u64> = r.active_grants(later).map(|g| g.id).collect();
        assert_eq!(active, vec![0]);
        let reverts: Vec<&AuditEntry> = r
            .audit
            .iter()
            .filter(|e| e.action == AuditAction::Revert)
            .collect();
        assert_eq!(reverts.len(), 2);
        assert_eq!(reverts[0].detail["grant_id"], 1);
        assert_eq!(reverts[1].detail["grant_id"], 2);
        assert!(verify_audit_chain(&r.audit));
        assert_eq!(revert_expired(&r, later), r, "idempotent");
    }

    #[test]
    fn audit_tamper_and_deletion() {
        let mut s = PermissionState::default();
        let t = Timestamp::from_unix(1_700_000_000);
        for i in 0..5 {
            s = grant(
                &s,
                &req(&[Action::Read], &format!("r/{i}"), 60, "o"),
                "o",
                t,
            )
            .unwrap();
        }
        assert!(verify_audit_chain(&s.audit));

        let mut edited = s.audit.clone();
        edited[2].actor = "mallory".into();
        assert!(!verify_audit_chain(&edited));

        let mut deleted = s.audit.clone();
        deleted.remove(2);
        assert!(!verify_audit_chain(&deleted));

        let mut relinked = s.audit.clone();
        relinked.remove(4);
        assert!(
            verify_audit_chain(&relinked),
            "truncating the tail keeps a valid prefix"
        );
    }

    #[test]
    fn revoked_grant_never_allows() {
        let s = grant(
            &PermissionState::default(),
            &req(&[Action::Read], "a/*", DAY, "o"),
            "o",
            Timestamp::from_unix(0),
        )
        .unwrap();
        let s = revoke_grant(&s, 0, "o", Timestamp::from_unix(5), "no longer needed").unwrap();
        let (d, _) = check(&s, Action::Read, "a/b", &ctx(Timestamp::from_unix(6)));
        assert_eq!(d.deny_reason(), Some(DenyReason::Revoked));
        assert!(matches!(
            revoke_grant(&s, 0, "x", Timestamp::from_unix(7), ""),
            Err(PermissionError::ActorMismatch { .. })
        ));
    }

    #[test]
    fn decision_serializes_flat() {
        let d = Decision::deny(DenyReason::Constraint(ConstraintKind::TimeWindow));
        assert_eq!(
            serde_json::to_string(&d).unwrap(),
            r#"{"decision":"deny","reason":"constraint","constraint":"time_window"}"#
        );
        assert_eq!(
            serde_json::to_string(&Decision::Allow { grant_id: 3 }).unwrap(),
            r#"{"decision":"allow","grant_id":3}"#
        );
    }
}
