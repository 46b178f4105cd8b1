// SPDX-License-Identifier: Apache-2.0

//! Verified agent metadata ("know your agent").
//!
//! * [`model`]: the ten-section document, validation, role overlays and
//!   stakeholder views.
//! * [`canon`]: canonical encoding and digests.
//! * [`signing`]: section-scoped multi-authority signatures and revocation.
//! * [`trust`]: trust policies and graduated verdicts.
//! * [`lifecycle`]: freshness, version chains and refresh planning.
//! * [`permissions`]: time-limited grants with a hash-chained audit trail.
//! * [`registry`]: publish/fetch/subscribe node with an HTTP front end.
//! * [`cli`]: the `agentfacts` command.

pub mod canon;
pub mod cli;
pub mod keystore;
pub mod lifecycle;
pub mod model;
pub mod permissions;
pub mod registry;
pub mod scenario;
pub mod signing;
pub mod trust;
pub mod units;

pub use canon::{canonicalize, digest, section_payload, CanonicalBytes, Digest};
pub use lifecycle::{
    append_version, freshness, plan_refresh, verify_chain, StalenessPolicy, VersionLink,
};
pub use model::{
    apply_overlay, parse_document, select_view, validate_document, AgentFactsDoc, RoleOverlay,
    Section,
};
pub use permissions::{check, escalate, grant, revert_expired, PermissionState};
pub use signing::{
    sign_sections, verify_signature, AuthorityRecord, PrivateKeyHandle, SignatureBlock,
};
pub use trust::{evaluate_trust, TrustPolicy, TrustVerdict};
pub use units::{Ppm, Timestamp};
