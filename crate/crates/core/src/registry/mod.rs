// SPDX-License-Identifier: Apache-2.0

//! A single registry node: verified version chains per agent, detached
//! signatures, subscriptions with an at-least-once webhook outbox, and a
//! sync primitive for pulling from a peer.
//!
//! # Store directory layout
//!
//! ```text
//! store/
//!   authorities.json
//!   revocations.json
//!   subscriptions.json
//!   outbox.json
//!   agents/<hex(agent_id)>/
//!     000000.af.json ...   revisions (chain directory layout)
//!     links.json
//!     signatures.json      detached signatures, one array per revision
//!     meta.json            {agent_id, provider_id, cached_at}
//! ```

pub mod client;
pub mod server;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::canon::document_digest;
use crate::lifecycle::{
    freshness, read_chain_dir, verify_chain, write_chain_entry, ChainReport, DeliveryState,
    FreshnessReport, StalenessPolicy, UpdateNotification, VersionLink,
};
use crate::model::{validate_document, AgentFactsDoc};
use crate::signing::{AuthorityRecord, AuthorityRegistry, RevocationEntry, SignatureBlock};
use crate::trust::{evaluate_trust, TrustError, TrustPolicy, TrustVerdict};
use crate::units::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown agent {0}")]
    UnknownAgent(String),
    #[error("chain mismatch: {0}")]
    ChainMismatch(String),
    #[error("document fails validation with {0} error(s)")]
    ValidationFailed(usize),
    #[error("malformed webhook URL {0:?}")]
    BadUrl(String),
    #[error("revocation signature does not verify")]
    BadRevocation,
    #[error(transparent)]
    Policy(#[from] TrustError),
    #[error("storage: {0}")]
    Storage(String),
}

impl From<io::Error> for RegistryError {
    fn from(e: io::Error) -> Self {
        RegistryError::Storage(e.to_string())
    }
}

/// Body of a publish call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishRequest {
    pub doc: AgentFactsDoc,
    /// Signatures held beside the document rather than inside it.
    #[serde(default)]
    pub signatures: Vec<SignatureBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<VersionLink>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub agent_id: String,
    pub head_seq: u64,
    pub notifications_enqueued: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub versions: Vec<AgentFactsDoc>,
    pub links: Vec<VersionLink>,
    /// Detached signatures, indexed like `versions`.
    pub signatures: Vec<Vec<SignatureBlock>>,
    /// Authority that signs this agent's version links; fixed by the first link.
    pub provider_id: Option<String>,
    pub cached_at: Timestamp,
}

impl AgentRecord {
    pub fn head(&self) -> &AgentFactsDoc {
        self.versions
            .last()
            .expect("records hold at least one version")
    }

    pub fn head_seq(&self) -> u64 {
        self.head().identity.version_seq
    }

    /// Revision `seq` with its detached signatures folded in.
    pub fn effective(&self, seq: u64) -> Option<AgentFactsDoc> {
        let idx = self
            .versions
            .iter()
            .position(|d| d.identity.version_seq == seq)?;
        let mut doc = self.versions[idx].clone();
        for sig in &self.signatures[idx] {
            if !doc.signatures().contains(sig) {
                doc.attach_signature(sig.clone());
            }
        }
        Some(doc)
    }

    pub fn verify(&self, authorities: &AuthorityRegistry) -> ChainReport {
        let provider = match &self.provider_id {
            Some(id) => authorities.get(id).cloned(),
            None => None,
        };
        match provider {
            Some(p) => verify_chain(&self.versions, &self.links, &p),
            None if self.links.is_empty() => {
                verify_chain(&self.versions, &[], &placeholder_authority())
            }
            None => ChainReport {
                accepted: false,
                length: self.versions.len(),
                first_failure: Some(0),
                failures: vec![crate::lifecycle::ChainFailure {
                    link_index: 0,
                    kind: crate::lifecycle::ChainFailureKind::BadProviderSignature,
                }],
            },
        }
    }
}

fn placeholder_authority() -> AuthorityRecord {
    AuthorityRecord {
        authority_id: String::new(),
        display_name: String::new(),
        public_key: Default::default(),
        algorithm: crate::signing::Algorithm::Ed25519,
        domains: Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscription {
    pub id: u64,
    pub agent_id: String,
    pub webhook_url: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutboxEntry {
    pub id: u64,
    pub subscription_id: u64,
    pub head_seq: u64,
    pub notification: UpdateNotification,
    pub attempts: u32,
}

/// What a subscriber receives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WebhookBody {
    pub link: VersionLink,
    pub head_seq: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Live,
    Cache,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FetchResult {
    pub doc: AgentFactsDoc,
    pub provenance: Provenance,
    pub cached_at: Timestamp,
    /// Seconds between `cached_at` and the fetch.
    pub cache_age: i64,
    pub freshness: FreshnessReport,
    /// Present whenever the served data is within the caller's staleness bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<TrustVerdict>,
}

/// Everything a peer holds for one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub record: AgentRecord,
    pub authorities: AuthorityRegistry,
    pub revocations: Vec<RevocationEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("upstream unreachable")]
pub struct Unreachable;

/// A peer the store can pull from.
pub trait Upstream {
    fn agent_ids(&self) -> Result<Vec<String>, Unreachable>;
    fn snapshot(&self, agent_id: &str) -> Result<Option<AgentSnapshot>, Unreachable>;
}

impl Upstream for RegistryStore {
    fn agent_ids(&self) -> Result<Vec<String>, Unreachable> {
        Ok(self.records.keys().cloned().collect())
    }

    fn snapshot(&self, agent_id: &str) -> Result<Option<AgentSnapshot>, Unreachable> {
        Ok(self.records.get(agent_id).map(|record| AgentSnapshot {
            record: record.clone(),
            authorities: self.authorities.clone(),
            revocations: self.revocations.clone(),
        }))
    }
}

/// Wraps a peer so tests can cut and heal the connection.
pub struct Partitionable<U> {
    inner: U,
    partitioned: AtomicBool,
}

impl<U> Partitionable<U> {
    pub fn new(inner: U) -> Self {
        Partitionable {
            inner,
            partitioned: AtomicBool::new(false),
        }
    }

    pub fn partition(&self) {
        self.partitioned.store(true, Ordering::SeqCst);
    }

    pub fn heal(&self) {
        self.partitioned.store(false, Ordering::SeqCst);
    }

    pub fn is_partitioned(&self) -> bool {
        self.partitioned.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &U {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut U {
        &mut self.inner
    }
}

impl<U: Upstream> Upstream for Partitionable<U> {
    fn agent_ids(&self) -> Result<Vec<String>, Unreachable> {
        if self.is_partitioned() {
            return Err(Unreachable);
        }
        self.inner.agent_ids()
    }

    fn snapshot(&self, agent_id: &str) -> Result<Option<AgentSnapshot>, Unreachable> {
        if self.is_partitioned() {
            return Err(Unreachable);
        }
        self.inner.snapshot(agent_id)
    }
}

/// Side-effecting webhook sender. Returns the HTTP status, or an error
/// message when no response arrived.
pub trait Transport {
    fn post(&self, url: &str, body: &[u8]) -> Result<u16, String>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryOutcome {
    pub notification_id: u64,
    pub webhook_url: String,
    pub state: DeliveryState,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub outcomes: Vec<DeliveryOutcome>,
}

impl DeliveryReport {
    pub fn delivered(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| o.state == DeliveryState::Delivered)
            .count()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncReport {
    /// Revisions adopted per agent.
    pub adopted: BTreeMap<String, usize>,
    /// Agents whose peer history conflicts with ours.
    pub conflicts: BTreeMap<String, String>,
    pub unreachable: bool,
}

#[derive(Debug, Default)]
pub struct RegistryStore {
    records: BTreeMap<String, AgentRecord>,
    subscriptions: Vec<Subscription>,
    authorities: AuthorityRegistry,
    revocations: Vec<RevocationEntry>,
    outbox: Vec<OutboxEntry>,
    staleness: StalenessPolicy,
    root: Option<PathBuf>,
}

impl RegistryStore {
    pub fn new(authorities: AuthorityRegistry) -> Self {
        RegistryStore {
            authorities,
            ..Default::default()
        }
    }

    pub fn authorities(&self) -> &AuthorityRegistry {
        &self.authorities
    }

    pub fn add_authority(&mut self, record: AuthorityRecord) -> Result<(), RegistryError> {
        self.authorities.insert(record.authority_id.clone(), record);
        self.persist_globals()
    }

    pub fn revocations(&self) -> &[RevocationEntry] {
        &self.revocations
    }

    pub fn record(&self, agent_id: &str) -> Option<&AgentRecord> {
        self.records.get(agent_id)
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn subscriptions(&self) -> &[Subscription] {
        &self.subscriptions
    }

    pub fn outbox(&self) -> &[OutboxEntry] {
        &self.outbox
    }

    pub fn set_staleness_policy(&mut self, policy: StalenessPolicy) {
        self.staleness = policy;
    }

    pub fn head_seq(&self, agent_id: &str) -> Option<u64> {
        self.records.get(agent_id).map(AgentRecord::head_seq)
    }

    /// Appends a revision after checking it against the stored head.
    pub fn publish(&mut self, req: PublishRequest, now: Timestamp) -> Result<Ack, RegistryError> {
        let report = validate_document(&req.doc);
        if report.has_errors() {
            return Err(RegistryError::ValidationFailed(report.error_count()));
        }
        let agent_id = req.doc.identity.agent_id.clone();
        match self.records.get(&agent_id) {
            None => {
                if req.link.is_some() || req.doc.identity.version_seq != 0 {
                    return Err(RegistryError::ChainMismatch(
                        "a new agent starts at version_seq 0 without a link".into(),
                    ));
                }
                self.records.insert(
                    agent_id.clone(),
                    AgentRecord {
                        versions: vec![req.doc],
                        links: Vec::new(),
                        signatures: vec![req.signatures],
                        provider_id: None,
                        cached_at: now,
                    },
                );
            }
            Some(record) => {
                let link = req.link.clone().ok_or_else(|| {
                    RegistryError::ChainMismatch("a link to the stored head is required".into())
                })?;
                self.check_link(record, &req.doc, &link)?;
                let record = self.records.get_mut(&agent_id).expect("checked above");
                record.provider_id.get_or_insert(link.provider_id.clone());
                record.versions.push(req.doc);
                record.links.push(link);
                record.signatures.push(req.signatures);
                record.cached_at = now;
            }
        }
        let notifications_enqueued = self.enqueue(&agent_id);
        self.persist_agent(&agent_id)?;
        self.persist_globals()?;
        Ok(Ack {
            head_seq: self.records[&agent_id].head_seq(),
            agent_id,
            notifications_enqueued,
        })
    }

    fn check_link(
        &self,
        record: &AgentRecord,
        doc: &AgentFactsDoc,
        link: &VersionLink,
    ) -> Result<(), RegistryError> {
        let mismatch = |m: String| Err(RegistryError::ChainMismatch(m));
        let head = record.head();
        if let Some(pinned) = &record.provider_id {
            if *pinned != link.provider_id {
                return mismatch(format!(
                    "link signed by {}, chain provider is {pinned}",
                    link.provider_id
                ));
            }
        }
        let Some(provider) = self.authorities.get(&link.provider_id) else {
            return mismatch(format!("unknown provider {}", link.provider_id));
        };
        let docs = [head.clone(), doc.clone()];
        let report = verify_chain(&docs, std::slice::from_ref(link), provider);
        if !report.accepted {
            let kinds: Vec<String> = report
                .failures
                .iter()
                .map(|f| {
                    serde_json::to_value(f.kind)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default()
                })
                .collect();
            return mismatch(format!(
                "link from {} does not extend head {}: {}",
                link.from_seq,
                head.identity.version_seq,
                kinds.join(", ")
            ));
        }
        Ok(())
    }

    fn enqueue(&mut self, agent_id: &str) -> usize {
        let Some(record) = self.records.get(agent_id) else {
            return 0;
        };
        let Some(link) = record
            .links
            .last()
            .filter(|l| l.to_seq == record.head_seq())
        else {
            return 0;
        };
        let head_seq = record.head_seq();
        let first_id = self.outbox.iter().map(|e| e.id + 1).max().unwrap_or(0);
        let mut count = 0;
        let subscribers = self.subscriptions.iter().filter(|s| s.agent_id == agent_id);
        for (next_id, sub) in (first_id..).zip(subscribers) {
            self.outbox.push(OutboxEntry {
                id: next_id,
                subscription_id: sub.id,
                head_seq,
                notification: UpdateNotification {
                    link: link.clone(),
                    webhook_url: sub.webhook_url.clone(),
                    delivery_state: DeliveryState::Pending,
                },
                attempts: 0,
            });
            count += 1;
        }
        count
    }

    /// Serves the head revision. Within `max_staleness` seconds of the
    /// cached copy the result carries a trust verdict computed from cached
    /// signatures and revocations. Past that bound the store tries
    /// `upstream`; when that fails the cached copy is still returned, with
    /// freshness but no verdict.
    pub fn fetch(
        &mut self,
        agent_id: &str,
        max_staleness: u64,
        policy: &TrustPolicy,
        now: Timestamp,
        upstream: Option<&dyn Upstream>,
    ) -> Result<FetchResult, RegistryError> {
        policy.resolve()?;
        let record = self
            .records
            .get(agent_id)
            .ok_or_else(|| RegistryError::UnknownAgent(agent_id.to_string()))?;
        let age = now.secs_since(record.cached_at);
        let within = age >= 0 && age as u64 <= max_staleness;
        if within {
            let provenance = if age == 0 {
                Provenance::Live
            } else {
                Provenance::Cache
            };
            return self.serve(agent_id, provenance, Some(policy), now);
        }
        if let Some(up) = upstream {
            if let Ok(Some(snapshot)) = up.snapshot(agent_id) {
                if self.adopt(agent_id, snapshot, now).is_ok() {
                    return self.serve(agent_id, Provenance::Live, Some(policy), now);
                }
            }
        }
        self.serve(agent_id, Provenance::Cache, None, now)
    }

    fn serve(
        &self,
        agent_id: &str,
        provenance: Provenance,
        policy: Option<&TrustPolicy>,
        now: Timestamp,
    ) -> Result<FetchResult, RegistryError> {
        let record = self
            .records
            .get(agent_id)
            .ok_or_else(|| RegistryError::UnknownAgent(agent_id.to_string()))?;
        let doc = record.effective(record.head_seq()).expect("head exists");
        let verdict = match policy {
            Some(p) => Some(evaluate_trust(
                &doc,
                p,
                &self.authorities,
                &self.revocations,
                now,
            )?),
            None => None,
        };
        Ok(FetchResult {
            freshness: freshness(&doc, now, &self.staleness),
            provenance,
            cached_at: record.cached_at,
            cache_age: now.secs_since(record.cached_at),
            doc,
            verdict,
        })
    }

    /// The head revision with its signatures and freshness, no verdict.
    pub fn head(&self, agent_id: &str, now: Timestamp) -> Result<FetchResult, RegistryError> {
        self.serve(agent_id, Provenance::Cache, None, now)
    }

    pub fn subscribe(&mut self, agent_id: &str, webhook_url: &str) -> Result<u64, RegistryError> {
        if !self.records.contains_key(agent_id) {
            return Err(RegistryError::UnknownAgent(agent_id.to_string()));
        }
        let ok = url::Url::parse(webhook_url)
            .is_ok_and(|u| matches!(u.scheme(), "http" | "https") && u.host().is_some());
        if !ok {
            return Err(RegistryError::BadUrl(webhook_url.to_string()));
        }
        let id = self
            .subscriptions
            .iter()
            .map(|s| s.id + 1)
            .max()
            .unwrap_or(0);
        self.subscriptions.push(Subscription {
            id,
            agent_id: agent_id.to_string(),
            webhook_url: webhook_url.to_string(),
        });
        self.persist_globals()?;
        Ok(id)
    }

    /// Accepts a revocation whose signature verifies.
    pub fn add_revocation(&mut self, entry: RevocationEntry) -> Result<usize, RegistryError> {
        if !entry.verify(&self.authorities) {
            return Err(RegistryError::BadRevocation);
        }
        if !self.revocations.contains(&entry) {
            self.revocations.push(entry);
            self.persist_globals()?;
        }
        Ok(self.revocations.len())
    }

    /// Attempts each undelivered notification once.
    pub fn deliver_pending(&mut self, transport: &dyn Transport) -> DeliveryReport {
        let mut report = DeliveryReport::default();
        for entry in self
            .outbox
            .iter_mut()
            .filter(|e| e.notification.delivery_state != DeliveryState::Delivered)
        {
            let body = serde_json::to_vec(&WebhookBody {
                link: entry.notification.link.clone(),
                head_seq: entry.head_seq,
            })
            .expect("webhook bodies serialize");
            entry.attempts += 1;
            let (state, error) = match transport.post(&entry.notification.webhook_url, &body) {
                Ok(status) if (200..300).contains(&status) => (DeliveryState::Delivered, None),
                Ok(status) => (DeliveryState::Failed, Some(format!("HTTP {status}"))),
                Err(e) => (DeliveryState::Failed, Some(e)),
            };
            entry.notification.delivery_state = state;
            report.outcomes.push(DeliveryOutcome {
                notification_id: entry.id,
                webhook_url: entry.notification.webhook_url.clone(),
                state,
                attempts: entry.attempts,
                error,
            });
        }
        let _ = self.persist_globals();
        report
    }

    /// Pulls every agent the peer knows, adopting revisions that extend
    /// local chains. Authorities and revocations are merged.
    pub fn sync_from(&mut self, peer: &dyn Upstream, now: Timestamp) -> SyncReport {
        let mut report = SyncReport::default();
        let Ok(ids) = peer.agent_ids() else {
            report.unreachable = true;
            return report;
        };
        for id in ids {
            match peer.snapshot(&id) {
                Ok(Some(snapshot)) => match self.adopt(&id, snapshot, now) {
                    Ok(n) => {
                        if n > 0 {
                            report.adopted.insert(id, n);
                        }
                    }
                    Err(e) => {
                        report.conflicts.insert(id, e.to_string());
                    }
                },
                Ok(None) => {}
                Err(Unreachable) => {
                    report.unreachable = true;
                    break;
                }
            }
        }
        report
    }

    fn adopt(
        &mut self,
        agent_id: &str,
        snapshot: AgentSnapshot,
        now: Timestamp,
    ) -> Result<usize, RegistryError> {
        for (id, record) in snapshot.authorities {
            self.authorities.entry(id).or_insert(record);
        }
        for entry in snapshot.revocations {
            if entry.verify(&self.authorities) && !self.revocations.contains(&entry) {
                self.revocations.push(entry);
            }
        }
        let theirs = snapshot.record;
        let adopted = match self.records.get(agent_id) {
            None => {
                let report = theirs.verify(&self.authorities);
                if !report.accepted || theirs.head().identity.agent_id != agent_id {
                    return Err(RegistryError::ChainMismatch(
                        "peer chain does not verify".into(),
                    ));
                }
                let n = theirs.versions.len();
                let mut record = theirs;
                record.cached_at = now;
                self.records.insert(agent_id.to_string(), record);
                n
            }
            Some(ours) => {
                let common = ours.versions.len().min(theirs.versions.len());
                for i in 0..common {
                    let same = document_digest(&ours.versions[i]).ok()
                        == document_digest(&theirs.versions[i]).ok();
                    if !same {
                        return Err(RegistryError::ChainMismatch(format!(
                            "histories diverge at revision {i}"
                        )));
                    }
                }
                let mut merged_sigs = ours.signatures.clone();
                for (mine, other) in merged_sigs.iter_mut().zip(&theirs.signatures) {
                    for sig in other {
                        if !mine.contains(sig) {
                            mine.push(sig.clone());
                        }
                    }
                }
                let extra = theirs.versions.len().saturating_sub(ours.versions.len());
                for i in ours.versions.len()..theirs.versions.len() {
                    let req = PublishRequest {
                        doc: theirs.versions[i].clone(),
                        signatures: theirs.signatures.get(i).cloned().unwrap_or_default(),
                        link: theirs.links.get(i - 1).cloned(),
                    };
                    self.publish(req, now)?;
                }
                let record = self.records.get_mut(agent_id).expect("present");
                for (i, sigs) in merged_sigs.into_iter().enumerate() {
                    record.signatures[i] = sigs;
                }
                record.cached_at = now;
                extra
            }
        };
        self.persist_agent(agent_id)?;
        self.persist_globals()?;
        Ok(adopted)
    }

    /// Re-checks every stored chain.
    pub fn audit_chains(&self) -> BTreeMap<String, ChainReport> {
        self.records
            .iter()
            .map(|(id, r)| (id.clone(), r.verify(&self.authorities)))
            .collect()
    }

    // Persistence.

    /// Opens (or creates) a store rooted at `root`, loading whatever it holds.
    pub fn open(root: &Path) -> Result<Self, RegistryError> {
        fs::create_dir_all(root.join("agents"))?;
        let mut store = RegistryStore {
            root: Some(root.to_path_buf()),
            ..Default::default()
        };
        store.authorities = read_json(&root.join("authorities.json"))?.unwrap_or_default();
        store.revocations = read_json(&root.join("revocations.json"))?.unwrap_or_default();
        store.subscriptions = read_json(&root.join("subscriptions.json"))?.unwrap_or_default();
        store.outbox = read_json(&root.join("outbox.json"))?.unwrap_or_default();
        let mut dirs: Vec<PathBuf> = fs::read_dir(root.join("agents"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let meta: AgentMeta = read_json(&dir.join("meta.json"))?.ok_or_else(|| {
                RegistryError::Storage(format!("{}: missing meta.json", dir.display()))
            })?;
            let chain = read_chain_dir(&dir).map_err(|e| RegistryError::Storage(e.to_string()))?;
            let mut signatures: Vec<Vec<SignatureBlock>> =
                read_json(&dir.join("signatures.json"))?.unwrap_or_default();
            signatures.resize(chain.docs.len(), Vec::new());
            let record = AgentRecord {
                versions: chain.docs,
                links: chain.links,
                signatures,
                provider_id: meta.provider_id,
                cached_at: meta.cached_at,
            };
            if record.versions.is_empty() {
                continue;
            }
            let report = record.verify(&store.authorities);
            if !report.accepted {
                return Err(RegistryError::ChainMismatch(format!(
                    "{}: stored chain fails verification at link {}",
                    dir.display(),
                    report.first_failure.unwrap_or(0)
                )));
            }
            store.records.insert(meta.agent_id, record);
        }
        Ok(store)
    }

    fn persist_agent(&self, agent_id: &str) -> Result<(), RegistryError> {
        let (Some(root), Some(record)) = (&self.root, self.records.get(agent_id)) else {
            return Ok(());
        };
        let dir = root.join("agents").join(hex::encode(agent_id.as_bytes()));
        for (pos, doc) in record.versions.iter().enumerate() {
            let path = dir.join(crate::lifecycle::chain_file_name(pos as u64));
            if !path.exists() {
                write_chain_entry(&dir, pos as u64, doc, &record.links)
                    .map_err(|e| RegistryError::Storage(e.to_string()))?;
            }
        }
        crate::lifecycle::write_links(&dir, &record.links)
            .map_err(|e| RegistryError::Storage(e.to_string()))?;
        write_json(&dir.join("signatures.json"), &record.signatures)?;
        write_json(
            &dir.join("meta.json"),
            &AgentMeta {
                agent_id: agent_id.to_string(),
                provider_id: record.provider_id.clone(),
                cached_at: record.cached_at,
            },
        )
    }

    fn persist_globals(&self) -> Result<(), RegistryError> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        write_json(&root.join("authorities.json"), &self.authorities)?;
        write_json(&root.join("revocations.json"), &self.revocations)?;
        write_json(&root.join("subscriptions.json"), &self.subscriptions)?;
        write_json(&root.join("outbox.json"), &self.outbox)
    }
}

#[derive(Serialize, Deserialize)]
struct AgentMeta {
    agent_id: String,
    #[serde(default)]
    provider_id: Option<String>,
    cached_at: Timestamp,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>, RegistryError> {
    match fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| RegistryError::Storage(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RegistryError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(
        &tmp,
        serde_json::to_string_pretty(value).expect("store files serialize") + "\n",
    )?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Set of webhook URLs per agent, for display.
pub fn subscribers_by_agent(store: &RegistryStore) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for s in store.subscriptions() {
        out.entry(s.agent_id.clone())
            .or_default()
            .insert(s.webhook_url.clone());
    }
    out
}
