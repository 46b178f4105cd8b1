// SPDX-License-Identifier: Apache-2.0

//! Freshness, version chains and refresh planning.
//!
//! Every present section expires at `identity.last_updated` plus its
//! `verification.verification_ttl` entry, or plus `identity.ttl` when the
//! section has no entry. A section is fresh up to and including its expiry,
//! stale for the policy's extra window after that, then expired.
//!
//! # Chain directory layout
//!
//! ```text
//! chain/
//!   000000.af.json   revision with version_seq 0
//!   000001.af.json   revision with version_seq 1
//!   ...
//!   links.json       array of VersionLink, links[i] joins i and i+1
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::canon::{canonicalize, document_digest, CanonError, Digest};
use crate::model::{parse_document, AgentFactsDoc, ModelError, Section};
use crate::signing::{verify_bytes, AuthorityRecord, Bytes, PrivateKeyHandle};
use crate::units::Timestamp;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StalenessPolicy {
    /// Extra seconds a section may be served stale past its expiry.
    #[serde(default)]
    pub acceptable_staleness: BTreeMap<Section, u64>,
    /// Defaults to identity, compliance and verification. Identity is
    /// always treated as critical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical_sections: Option<BTreeSet<Section>>,
}

impl StalenessPolicy {
    pub fn critical(&self) -> BTreeSet<Section> {
        let mut set = self
            .critical_sections
            .clone()
            .unwrap_or_else(Section::default_critical);
        set.insert(Section::Identity);
        set
    }

    pub fn window(&self, section: Section) -> u64 {
        self.acceptable_staleness
            .get(&section)
            .copied()
            .unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Freshness {
    Fresh,
    Stale,
    Expired,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentStatus {
    Fresh,
    Degraded,
    Expired,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreshnessReport {
    pub per_section: BTreeMap<Section, Freshness>,
    pub expiries: BTreeMap<Section, Timestamp>,
    pub document_status: DocumentStatus,
    /// Earliest expiry among the sections still fresh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_expiry: Option<Timestamp>,
    pub evaluated_at: Timestamp,
}

/// `last_updated + (verification_ttl[section] or identity.ttl)`.
pub fn section_expiry(doc: &AgentFactsDoc, section: Section) -> Timestamp {
    let ttl = doc
        .verification
        .as_ref()
        .and_then(|v| v.verification_ttl.get(&section).copied())
        .unwrap_or(doc.identity.ttl);
    doc.identity
        .last_updated
        .plus_secs(i64::try_from(ttl).unwrap_or(i64::MAX))
}

fn classify(expiry: Timestamp, window: u64, now: Timestamp) -> Freshness {
    if now <= expiry {
        Freshness::Fresh
    } else if now <= expiry.plus_secs(i64::try_from(window).unwrap_or(i64::MAX)) {
        Freshness::Stale
    } else {
        Freshness::Expired
    }
}

pub fn freshness(doc: &AgentFactsDoc, now: Timestamp, policy: &StalenessPolicy) -> FreshnessReport {
    let critical = policy.critical();
    let mut per_section = BTreeMap::new();
    let mut expiries = BTreeMap::new();
    for section in doc.present_sections() {
        let expiry = section_expiry(doc, section);
        per_section.insert(section, classify(expiry, policy.window(section), now));
        expiries.insert(section, expiry);
    }
    let document_status = if per_section
        .iter()
        .any(|(s, f)| critical.contains(s) && *f == Freshness::Expired)
    {
        DocumentStatus::Expired
    } else if per_section.values().any(|f| *f != Freshness::Fresh) {
        DocumentStatus::Degraded
    } else {
        DocumentStatus::Fresh
    };
    let next_expiry = per_section
        .iter()
        .filter(|(_, f)| **f == Freshness::Fresh)
        .map(|(s, _)| expiries[s])
        .min();
    FreshnessReport {
        per_section,
        expiries,
        document_status,
        next_expiry,
        evaluated_at: now,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefreshEntry {
    pub section: Section,
    pub refresh_at: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefreshPlan {
    /// Sections not yet expired, by ascending refresh time.
    pub entries: Vec<RefreshEntry>,
    pub expired: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expired_sections: Vec<Section>,
}

/// When to pull each section again: at its expiry.
pub fn plan_refresh(doc: &AgentFactsDoc, now: Timestamp, policy: &StalenessPolicy) -> RefreshPlan {
    let report = freshness(doc, now, policy);
    let mut entries: Vec<RefreshEntry> = report
        .per_section
        .iter()
        .filter(|(_, f)| **f != Freshness::Expired)
        .map(|(s, _)| RefreshEntry {
            section: *s,
            refresh_at: report.expiries[s],
        })
        .collect();
    entries.sort_by_key(|e| (e.refresh_at, e.section.as_str()));
    let expired_sections: Vec<Section> = report
        .per_section
        .iter()
        .filter(|(_, f)| **f == Freshness::Expired)
        .map(|(s, _)| *s)
        .collect();
    RefreshPlan {
        entries,
        expired: !expired_sections.is_empty(),
        expired_sections,
    }
}

/// Provider-signed link from one revision to the next.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VersionLink {
    pub agent_id: String,
    pub from_seq: u64,
    pub to_seq: u64,
    pub prev_digest: Digest,
    pub new_digest: Digest,
    pub created_at: Timestamp,
    pub provider_id: String,
    pub provider_signature: Bytes,
}

impl VersionLink {
    /// Canonical bytes of every field except the signature.
    pub fn signed_bytes(&self) -> Vec<u8> {
        canonicalize(&json!({
            "agent_id": self.agent_id,
            "created_at": self.created_at,
            "from_seq": self.from_seq,
            "new_digest": self.new_digest,
            "prev_digest": self.prev_digest,
            "provider_id": self.provider_id,
            "to_seq": self.to_seq,
        }))
        .expect("link fields are canonicalizable")
        .into_bytes()
    }

    pub fn verify_signature(&self, provider: &AuthorityRecord) -> bool {
        provider.authority_id == self.provider_id
            && verify_bytes(provider, &self.signed_bytes(), &self.provider_signature.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("next revision must have version_seq {expected}, found {found}")]
    SeqGap { expected: u64, found: u64 },
    #[error("agent_id changed from {prev} to {next}")]
    AgentIdMismatch { prev: String, next: String },
    #[error("last_updated moved backwards from {prev} to {next}")]
    ClockRegression { prev: Timestamp, next: Timestamp },
    #[error(transparent)]
    Canon(#[from] CanonError),
}

/// Links `next` to `prev`, signed by the provider. The link is dated at
/// `next.identity.last_updated`.
pub fn append_version(
    prev: &AgentFactsDoc,
    next: &AgentFactsDoc,
    provider_key: &PrivateKeyHandle,
) -> Result<VersionLink, ChainError> {
    if next.identity.agent_id != prev.identity.agent_id {
        return Err(ChainError::AgentIdMismatch {
            prev: prev.identity.agent_id.clone(),
            next: next.identity.agent_id.clone(),
        });
    }
    let expected = prev.identity.version_seq + 1;
    if next.identity.version_seq != expected {
        return Err(ChainError::SeqGap {
            expected,
            found: next.identity.version_seq,
        });
    }
    if next.identity.last_updated < prev.identity.last_updated {
        return Err(ChainError::ClockRegression {
            prev: prev.identity.last_updated,
            next: next.identity.last_updated,
        });
    }
    let mut link = VersionLink {
        agent_id: next.identity.agent_id.clone(),
        from_seq: prev.identity.version_seq,
        to_seq: expected,
        prev_digest: document_digest(prev)?,
        new_digest: document_digest(next)?,
        created_at: next.identity.last_updated,
        provider_id: provider_key.authority_id().to_string(),
        provider_signature: Bytes::default(),
    };
    link.provider_signature = Bytes(provider_key.sign_bytes(&link.signed_bytes()));
    Ok(link)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainFailureKind {
    /// `links` is not one shorter than `docs`.
    LengthMismatch,
    AgentIdMismatch,
    SeqDiscontinuity,
    PrevDigestMismatch,
    NewDigestMismatch,
    BadProviderSignature,
    /// A document could not be encoded canonically.
    Unhashable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainFailure {
    /// 0-based: link `i` joins documents `i` and `i + 1`.
    pub link_index: usize,
    pub kind: ChainFailureKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainReport {
    pub accepted: bool,
    pub length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<ChainFailure>,
}

impl ChainReport {
    fn from_failures(length: usize, mut failures: Vec<ChainFailure>) -> Self {
        failures.sort_by_key(|f| (f.link_index, f.kind));
        failures.dedup();
        ChainReport {
            accepted: failures.is_empty(),
            length,
            first_failure: failures.first().map(|f| f.link_index),
            failures,
        }
    }
}

struct ChainDoc<'a> {
    agent_id: &'a str,
    version_seq: u64,
    digest: Option<Digest>,
}

fn check_links(
    docs: &[ChainDoc<'_>],
    links: &[VersionLink],
    provider: &AuthorityRecord,
) -> ChainReport {
    let mut failures = Vec::new();
    if links.len() + 1 != docs.len() {
        failures.push(ChainFailure {
            link_index: links.len().min(docs.len().saturating_sub(1)),
            kind: ChainFailureKind::LengthMismatch,
        });
    }
    for (i, d) in docs.iter().enumerate() {
        if d.digest.is_none() {
            for link_index in [i.checked_sub(1), Some(i)].into_iter().flatten() {
                if link_index < links.len() {
                    failures.push(ChainFailure {
                        link_index,
                        kind: ChainFailureKind::Unhashable,
                    });
                }
            }
        }
    }
    for (i, link) in links.iter().enumerate() {
        let mut fail = |kind| {
            failures.push(ChainFailure {
                link_index: i,
                kind,
            })
        };
        if !link.verify_signature(provider) {
            fail(ChainFailureKind::BadProviderSignature);
        }
        if link.to_seq != link.from_seq.wrapping_add(1) {
            fail(ChainFailureKind::SeqDiscontinuity);
        }
        let (Some(prev), Some(next)) = (docs.get(i), docs.get(i + 1)) else {
            continue;
        };
        if link.agent_id != prev.agent_id || link.agent_id != next.agent_id {
            fail(ChainFailureKind::AgentIdMismatch);
        }
        if link.from_seq != prev.version_seq || link.to_seq != next.version_seq {
            fail(ChainFailureKind::SeqDiscontinuity);
        }
        if prev.digest.is_some_and(|d| d != link.prev_digest) {
            fail(ChainFailureKind::PrevDigestMismatch);
        }
        if next.digest.is_some_and(|d| d != link.new_digest) {
            fail(ChainFailureKind::NewDigestMismatch);
        }
    }
    ChainReport::from_failures(docs.len(), failures)
}

/// Checks every link against recomputed document digests, sequence
/// continuity and the provider's signature. Reports all failures.
pub fn verify_chain(
    docs: &[AgentFactsDoc],
    links: &[VersionLink],
    provider: &AuthorityRecord,
) -> ChainReport {
    let entries: Vec<ChainDoc<'_>> = docs
        .iter()
        .map(|d| ChainDoc {
            agent_id: &d.identity.agent_id,
            version_seq: d.identity.version_seq,
            digest: document_digest(d).ok(),
        })
        .collect();
    check_links(&entries, links, provider)
}

/// Like [`verify_chain`] but over stored canonical bytes: each document's
/// digest is the SHA-256 of exactly the bytes given, so any octet change is
/// caught even when the altered bytes still parse.
pub fn verify_chain_bytes(
    docs: &[&[u8]],
    links: &[VersionLink],
    provider: &AuthorityRecord,
) -> ChainReport {
    let parsed: Vec<Option<AgentFactsDoc>> = docs
        .iter()
        .map(|b| {
            std::str::from_utf8(b)
                .ok()
                .and_then(|s| parse_document(s).ok())
        })
        .collect();
    let entries: Vec<ChainDoc<'_>> = docs
        .iter()
        .zip(&parsed)
        .map(|(bytes, doc)| match doc {
            Some(d) => ChainDoc {
                agent_id: &d.identity.agent_id,
                version_seq: d.identity.version_seq,
                digest: Some(Digest::sha256(bytes)),
            },
            None => ChainDoc {
                agent_id: "",
                version_seq: u64::MAX,
                digest: None,
            },
        })
        .collect();
    check_links(&entries, links, provider)
}

/// Pending webhook delivery of one new link.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateNotification {
    pub link: VersionLink,
    pub webhook_url: String,
    pub delivery_state: DeliveryState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryState {
    Pending,
    Delivered,
    Failed,
}

#[derive(Debug, thiserror::Error)]
pub enum ChainDirError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Document { path: String, source: ModelError },
    #[error("{path}: {message}")]
    Links { path: String, message: String },
    #[error("{path}: expected version_seq {expected}")]
    Numbering { path: String, expected: u64 },
}

pub fn chain_file_name(seq: u64) -> String {
    format!("{seq:06}.af.json")
}

/// A chain loaded from disk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainDir {
    pub docs: Vec<AgentFactsDoc>,
    pub links: Vec<VersionLink>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ChainDirError + '_ {
    move |source| ChainDirError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads `NNNNNN.af.json` files from 0 upward until one is missing, plus
/// `links.json` (absent means no links).
pub fn read_chain_dir(dir: &Path) -> Result<ChainDir, ChainDirError> {
    let mut docs = Vec::new();
    loop {
        let path = dir.join(chain_file_name(docs.len() as u64));
        if !path.exists() {
            break;
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let doc = parse_document(&text).map_err(|source| ChainDirError::Document {
            path: path.display().to_string(),
            source,
        })?;
        docs.push(doc);
    }
    let links_path = dir.join("links.json");
    let links = if links_path.exists() {
        let text = fs::read_to_string(&links_path).map_err(io_err(&links_path))?;
        serde_json::from_str(&text).map_err(|e| ChainDirError::Links {
            path: links_path.display().to_string(),
            message: e.to_string(),
        })?
    } else {
        Vec::new()
    };
    Ok(ChainDir { docs, links })
}

/// Writes revision `doc` and the full link list. File names come from the
/// position in the chain, which for a verified chain equals version_seq.
pub fn write_chain_entry(
    dir: &Path,
    position: u64,
    doc: &AgentFactsDoc,
    links: &[VersionLink],
) -> Result<(), ChainDirError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    if doc.identity.version_seq != position {
        return Err(ChainDirError::Numbering {
            path: dir.join(chain_file_name(position)).display().to_string(),
            expected: position,
        });
    }
    let path = dir.join(chain_file_name(position));
    fs::write(&path, doc.to_json_pretty() + "\n").map_err(io_err(&path))?;
    write_links(dir, links)
}

pub fn write_links(dir: &Path, links: &[VersionLink]) -> Result<(), ChainDirError> {
    let path = dir.join("links.json");
    let text = serde_json::to_string_pretty(links).expect("links serialize") + "\n";
    fs::write(&path, text).map_err(io_err(&path))
}
