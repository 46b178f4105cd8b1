// SPDX-License-Identifier: Apache-2.0

//! Trust policy evaluation.
//!
//! For each required section the qualifying signatures are those that
//! verify, cover the section, come from an allowed authority and are young
//! enough. The section score is `max(weight(authority) × confidence)` over
//! the qualifying set; the section is trusted when there are at least
//! `min_signatures` qualifying signatures and the score reaches
//! `min_confidence`.
//!
//! When a section is not trusted, the worst signal wins: `failed` if any
//! covering signature has an integrity problem (bad signature, unknown or
//! revoked authority, wrong revision), else `stale` if age alone is what
//! keeps it from being trusted, else `insufficient`.
//!
//! The overall verdict is `trusted` when every required section is trusted,
//! `degraded` when every critical section is trusted and the remaining
//! shortfalls are only stale or insufficient sections, `untrusted`
//! otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{AgentFactsDoc, Section};
use crate::signing::{
    verify_signature, AuthorityRegistry, RevocationEntry, SigStatus, SignatureBlock,
};
use crate::units::{Ppm, Timestamp, PPM_SCALE};

/// A consumer's verification requirements, keyed by section name.
///
/// Missing per-section entries default to one signature, threshold 0, any
/// authority and no age cap. Authorities without a weight weigh 0.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustPolicy {
    #[serde(default)]
    pub authority_weights: BTreeMap<String, Ppm>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub allowed_authorities: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    pub min_signatures: BTreeMap<String, u32>,
    #[serde(default)]
    pub min_confidence: BTreeMap<String, Ppm>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub max_signature_age: BTreeMap<String, u64>,
    pub required_sections: BTreeSet<String>,
    /// Defaults to `{identity, compliance, verification}` ∩ required.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical_sections: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrustError {
    #[error("policy names unknown section {0:?}")]
    UnknownSectionInPolicy(String),
    #[error("policy value out of range at {0}")]
    OutOfRange(String),
    #[error("critical section {0} is not required")]
    CriticalNotRequired(Section),
}

fn section_key(name: &str) -> Result<Section, TrustError> {
    name.parse()
        .map_err(|_| TrustError::UnknownSectionInPolicy(name.to_string()))
}

fn typed<V: Clone>(map: &BTreeMap<String, V>) -> Result<BTreeMap<Section, V>, TrustError> {
    map.iter()
        .map(|(k, v)| Ok((section_key(k)?, v.clone())))
        .collect()
}

/// Policy with section names resolved and defaults filled in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedPolicy {
    pub authority_weights: BTreeMap<String, Ppm>,
    pub allowed_authorities: BTreeMap<Section, BTreeSet<String>>,
    pub min_signatures: BTreeMap<Section, u32>,
    pub min_confidence: BTreeMap<Section, Ppm>,
    pub max_signature_age: BTreeMap<Section, u64>,
    pub required_sections: BTreeSet<Section>,
    pub critical_sections: BTreeSet<Section>,
}

impl ResolvedPolicy {
    pub fn weight(&self, authority: &str) -> Ppm {
        self.authority_weights
            .get(authority)
            .copied()
            .unwrap_or(Ppm::ZERO)
    }

    pub fn min_signatures(&self, section: Section) -> u32 {
        self.min_signatures.get(&section).copied().unwrap_or(1)
    }

    pub fn min_confidence(&self, section: Section) -> Ppm {
        self.min_confidence
            .get(&section)
            .copied()
            .unwrap_or(Ppm::ZERO)
    }

    pub fn allows(&self, section: Section, authority: &str) -> bool {
        self.allowed_authorities
            .get(&section)
            .is_none_or(|set| set.contains(authority))
    }

    pub fn age_ok(&self, section: Section, sig: &SignatureBlock, now: Timestamp) -> bool {
        self.max_signature_age
            .get(&section)
            .is_none_or(|max| now.secs_since(sig.signed_at) <= *max as i64)
    }
}

impl TrustPolicy {
    pub fn resolve(&self) -> Result<ResolvedPolicy, TrustError> {
        let required: BTreeSet<Section> = self
            .required_sections
            .iter()
            .map(|s| section_key(s))
            .collect::<Result<_, _>>()?;
        let critical: BTreeSet<Section> = match &self.critical_sections {
            Some(names) => names
                .iter()
                .map(|s| section_key(s))
                .collect::<Result<_, _>>()?,
            None => Section::default_critical()
                .intersection(&required)
                .copied()
                .collect(),
        };
        if let Some(s) = critical.difference(&required).next() {
            return Err(TrustError::CriticalNotRequired(*s));
        }
        for (authority, w) in &self.authority_weights {
            if !w.is_unit_fraction() {
                return Err(TrustError::OutOfRange(format!(
                    "/authority_weights/{authority}"
                )));
            }
        }
        for (section, c) in &self.min_confidence {
            if !c.is_unit_fraction() {
                return Err(TrustError::OutOfRange(format!("/min_confidence/{section}")));
            }
        }
        for (section, n) in &self.min_signatures {
            if *n == 0 {
                return Err(TrustError::OutOfRange(format!("/min_signatures/{section}")));
            }
        }
        let mut min_signatures: BTreeMap<Section, u32> = typed(&self.min_signatures)?;
        let mut min_confidence: BTreeMap<Section, Ppm> = typed(&self.min_confidence)?;
        for section in &required {
            min_signatures.entry(*section).or_insert(1);
            min_confidence.entry(*section).or_insert(Ppm::ZERO);
        }
        Ok(ResolvedPolicy {
            authority_weights: self.authority_weights.clone(),
            allowed_authorities: typed(&self.allowed_authorities)?,
            min_signatures,
            min_confidence,
            max_signature_age: typed(&self.max_signature_age)?,
            required_sections: required,
            critical_sections: critical,
        })
    }

    /// The policy file with every default written out.
    pub fn explicit(&self) -> Result<TrustPolicy, TrustError> {
        let r = self.resolve()?;
        let names =
            |set: &BTreeSet<Section>| set.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let mut explicit = self.clone();
        for section in &r.required_sections {
            let key = section.to_string();
            explicit.min_signatures.entry(key.clone()).or_insert(1);
            explicit.min_confidence.entry(key).or_insert(Ppm::ZERO);
        }
        explicit.critical_sections = Some(names(&r.critical_sections));
        Ok(explicit)
    }
}

/// `weight × confidence`, exact, in units of 10⁻¹².
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Score(u64);

impl Score {
    pub fn product(weight: Ppm, confidence: Ppm) -> Score {
        Score(weight.ppm().max(0) as u64 * confidence.ppm().max(0) as u64)
    }

    pub fn from_threshold(threshold: Ppm) -> Score {
        Score(threshold.ppm().max(0) as u64 * PPM_SCALE as u64)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 1e12
    }
}

/// Trimmed decimal with at least one fractional digit: `1.0`, `0.72`.
pub(crate) fn fmt_scaled(value: u64, digits: u32) -> String {
    let scale = 10u64.pow(digits);
    let frac = format!("{:0width$}", value % scale, width = digits as usize);
    let trimmed = frac.trim_end_matches('0');
    let frac = if trimmed.is_empty() { "0" } else { trimmed };
    format!("{}.{}", value / scale, frac)
}

pub(crate) fn fmt_ppm(p: Ppm) -> String {
    if p.ppm() < 0 {
        return format!("-{}", fmt_scaled(p.ppm().unsigned_abs(), 6));
    }
    fmt_scaled(p.ppm() as u64, 6)
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&fmt_scaled(self.0, 12))
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        if !(0.0..=1.0).contains(&v) {
            return Err(D::Error::custom(format!("score {v} outside [0, 1]")));
        }
        Ok(Score((v * 1e12).round() as u64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionStatus {
    Trusted,
    Insufficient,
    Stale,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    Untrusted,
    Degraded,
    Trusted,
}

impl fmt::Display for Overall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Overall::Trusted => "trusted",
            Overall::Degraded => "degraded",
            Overall::Untrusted => "untrusted",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disqualification {
    Revoked,
    UnknownAuthority,
    BadSignature,
    /// Bound to another agent or revision.
    OutOfScope,
    /// Past its section verification ttl.
    Expired,
    /// Older than the policy's maximum signature age.
    TooOld,
    NotAllowed,
}

impl Disqualification {
    fn is_time_only(self) -> bool {
        matches!(self, Disqualification::Expired | Disqualification::TooOld)
    }

    fn label(self) -> &'static str {
        match self {
            Disqualification::Revoked => "revoked",
            Disqualification::UnknownAuthority => "unknown authority",
            Disqualification::BadSignature => "bad signature",
            Disqualification::OutOfScope => "out of scope",
            Disqualification::Expired => "expired",
            Disqualification::TooOld => "too old",
            Disqualification::NotAllowed => "authority not allowed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureAssessment {
    /// Index into the document's signature list.
    pub index: usize,
    pub authority_id: String,
    pub status: SigStatus,
    pub weight: Ppm,
    pub confidence: Ppm,
    pub product: Score,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disqualification: Option<Disqualification>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionVerdict {
    pub status: SectionStatus,
    pub score: Score,
    pub required_signatures: u32,
    pub required_confidence: Ppm,
    pub qualifying_signatures: Vec<SignatureAssessment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disqualified_signatures: Vec<SignatureAssessment>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustVerdict {
    pub per_section: BTreeMap<Section, SectionVerdict>,
    pub critical_sections: BTreeSet<Section>,
    pub overall: Overall,
    pub evaluated_at: Timestamp,
}

fn disqualify(status: SigStatus) -> Option<Disqualification> {
    match status {
        SigStatus::Valid => None,
        SigStatus::BadSignature => Some(Disqualification::BadSignature),
        SigStatus::UnknownAuthority => Some(Disqualification::UnknownAuthority),
        SigStatus::Revoked => Some(Disqualification::Revoked),
        SigStatus::ScopeMismatch => Some(Disqualification::OutOfScope),
        SigStatus::Expired => Some(Disqualification::Expired),
    }
}

fn satisfied(
    assessments: &[&SignatureAssessment],
    min_signatures: u32,
    min_confidence: Ppm,
) -> bool {
    let score = assessments
        .iter()
        .map(|a| a.product)
        .max()
        .unwrap_or_default();
    assessments.len() as u64 >= u64::from(min_signatures)
        && score >= Score::from_threshold(min_confidence)
}

/// Section-level evaluation over already-computed signature statuses.
pub fn evaluate_section(
    section: Section,
    signatures: &[SignatureBlock],
    statuses: &[SigStatus],
    policy: &ResolvedPolicy,
    now: Timestamp,
) -> SectionVerdict {
    let mut qualifying = Vec::new();
    let mut disqualified = Vec::new();
    for (index, (sig, status)) in signatures.iter().zip(statuses).enumerate() {
        if !sig.covers(section) {
            continue;
        }
        let weight = policy.weight(&sig.authority_id);
        let disqualification = disqualify(*status)
            .or_else(|| {
                (!policy.allows(section, &sig.authority_id)).then_some(Disqualification::NotAllowed)
            })
            .or_else(|| (!policy.age_ok(section, sig, now)).then_some(Disqualification::TooOld));
        let assessment = SignatureAssessment {
            index,
            authority_id: sig.authority_id.clone(),
            status: *status,
            weight,
            confidence: sig.confidence,
            product: Score::product(weight, sig.confidence),
            disqualification,
        };
        if disqualification.is_none() {
            qualifying.push(assessment);
        } else {
            disqualified.push(assessment);
        }
    }

    let min_signatures = policy.min_signatures(section);
    let min_confidence = policy.min_confidence(section);
    let score = qualifying
        .iter()
        .map(|a| a.product)
        .max()
        .unwrap_or_default();
    let q: Vec<&SignatureAssessment> = qualifying.iter().collect();

    let status = if satisfied(&q, min_signatures, min_confidence) {
        SectionStatus::Trusted
    } else if disqualified.iter().any(|a| a.status.is_integrity_failure()) {
        SectionStatus::Failed
    } else {
        // Stale: counting the signatures held back only by age would pass.
        let with_aged: Vec<&SignatureAssessment> = qualifying
            .iter()
            .chain(disqualified.iter().filter(|a| {
                a.disqualification
                    .is_some_and(Disqualification::is_time_only)
                    && policy.allows(section, &a.authority_id)
            }))
            .collect();
        if with_aged.len() > q.len() && satisfied(&with_aged, min_signatures, min_confidence) {
            SectionStatus::Stale
        } else {
            SectionStatus::Insufficient
        }
    };

    SectionVerdict {
        status,
        score,
        required_signatures: min_signatures,
        required_confidence: min_confidence,
        qualifying_signatures: qualifying,
        disqualified_signatures: disqualified,
    }
}

pub fn overall_from(
    per_section: &BTreeMap<Section, SectionVerdict>,
    critical: &BTreeSet<Section>,
) -> Overall {
    let status = |s: &Section| per_section.get(s).map(|v| v.status);
    if per_section
        .values()
        .all(|v| v.status == SectionStatus::Trusted)
    {
        Overall::Trusted
    } else if critical
        .iter()
        .all(|s| status(s) == Some(SectionStatus::Trusted))
        && per_section
            .values()
            .all(|v| v.status != SectionStatus::Failed)
    {
        Overall::Degraded
    } else {
        Overall::Untrusted
    }
}

/// Evaluates `policy` against the signatures carried in `doc`.
pub fn evaluate_trust(
    doc: &AgentFactsDoc,
    policy: &TrustPolicy,
    authorities: &AuthorityRegistry,
    revocations: &[RevocationEntry],
    now: Timestamp,
) -> Result<TrustVerdict, TrustError> {
    let resolved = policy.resolve()?;
    let signatures = doc.signatures();
    let statuses: Vec<SigStatus> = signatures
        .iter()
        .map(|sig| verify_signature(doc, sig, authorities, revocations, now))
        .collect();
    let per_section: BTreeMap<Section, SectionVerdict> = resolved
        .required_sections
        .iter()
        .map(|s| {
            (
                *s,
                evaluate_section(*s, signatures, &statuses, &resolved, now),
            )
        })
        .collect();
    let overall = overall_from(&per_section, &resolved.critical_sections);
    Ok(TrustVerdict {
        per_section,
        critical_sections: resolved.critical_sections,
        overall,
        evaluated_at: now,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub lines: Vec<String>,
    pub disqualifications: usize,
}

impl fmt::Display for ExplanationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.lines {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

fn status_label(s: SectionStatus) -> &'static str {
    match s {
        SectionStatus::Trusted => "trusted",
        SectionStatus::Insufficient => "insufficient",
        SectionStatus::Stale => "stale",
        SectionStatus::Failed => "failed",
    }
}

/// Deterministic human-readable account of a verdict.
pub fn explain_verdict(verdict: &TrustVerdict) -> ExplanationReport {
    let mut lines = vec![format!(
        "overall: {} (evaluated at {})",
        verdict.overall, verdict.evaluated_at
    )];
    let mut disqualifications = 0;
    for (section, v) in &verdict.per_section {
        let critical = if verdict.critical_sections.contains(section) {
            " [critical]"
        } else {
            ""
        };
        lines.push(format!(
            "section {section}{critical}: {} (score {}; {} qualifying, need >= {} at >= {})",
            status_label(v.status),
            v.score,
            v.qualifying_signatures.len(),
            v.required_signatures,
            fmt_ppm(v.required_confidence),
        ));
        for a in &v.qualifying_signatures {
            lines.push(format!(
                "  qualifying #{} {}: {}x{}={}",
                a.index,
                a.authority_id,
                fmt_ppm(a.weight),
                fmt_ppm(a.confidence),
                a.product
            ));
        }
        for a in &v.disqualified_signatures {
            disqualifications += 1;
            let reason = a
                .disqualification
                .map_or("disqualified", Disqualification::label);
            lines.push(format!(
                "  disqualified #{} {}: {reason}",
                a.index, a.authority_id
            ));
        }
        if v.status != SectionStatus::Trusted {
            if (v.qualifying_signatures.len() as u64) < u64::from(v.required_signatures) {
                lines.push(format!(
                    "  below threshold: {} of {} required signatures",
                    v.qualifying_signatures.len(),
                    v.required_signatures
                ));
            }
            if v.score < Score::from_threshold(v.required_confidence) {
                lines.push(format!(
                    "  below threshold: score {} < {}",
                    v.score,
                    fmt_ppm(v.required_confidence)
                ));
            }
        }
    }
    ExplanationReport {
        lines,
        disqualifications,
    }
}
