// SPDX-License-Identifier: Apache-2.0

//! Authority keys, section-scoped signatures and self-revocation.
//!
//! A signature covers `section_payload(doc, scope)` followed by the
//! canonical bytes of `{algorithm, authority_id, confidence, signed_at}`.
//! Verification is a pure function of the document, the block, the
//! authority registry, the revocation list and the evaluation time.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fmt;
use std::marker::PhantomData;
use std::str::FromStr;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use rand::rngs::OsRng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::json;

use crate::canon::{self, canonicalize, canonicalize_serialize, CanonError, Digest};
use crate::model::{validate_document, AgentFactsDoc, Section};
use crate::units::{Ppm, Timestamp};

/// Octet string written as unpadded base64url.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bytes(pub Vec<u8>);

impl fmt::Debug for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bytes({})", URL_SAFE_NO_PAD.encode(&self.0))
    }
}

impl Serialize for Bytes {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&URL_SAFE_NO_PAD.encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Bytes {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        URL_SAFE_NO_PAD
            .decode(s.as_bytes())
            .map(Bytes)
            .map_err(|e| serde::de::Error::custom(format!("invalid base64url: {e}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ed25519")]
    Ed25519,
    #[serde(rename = "ecdsa-p256")]
    EcdsaP256,
    #[serde(rename = "rsa-pss-2048")]
    RsaPss2048,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [
        Algorithm::Ed25519,
        Algorithm::EcdsaP256,
        Algorithm::RsaPss2048,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Ed25519 => "ed25519",
            Algorithm::EcdsaP256 => "ecdsa-p256",
            Algorithm::RsaPss2048 => "rsa-pss-2048",
        }
    }

    fn public_key_ok(self, key: &[u8]) -> bool {
        match self {
            Algorithm::Ed25519 => key.len() == 32,
            Algorithm::EcdsaP256 => p256::ecdsa::VerifyingKey::from_sec1_bytes(key).is_ok(),
            Algorithm::RsaPss2048 => {
                use rsa::pkcs1::DecodeRsaPublicKey;
                use rsa::traits::PublicKeyParts;
                rsa::RsaPublicKey::from_pkcs1_der(key).is_ok_and(|k| k.size() == 256)
            }
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = SigningError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| SigningError::UnsupportedAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SigningError {
    #[error("unsupported signature algorithm {0:?}")]
    UnsupportedAlgorithm(String),
    #[error("confidence {0} is outside [0, 1]")]
    InvalidConfidence(f64),
    #[error(transparent)]
    Canon(#[from] CanonError),
    #[error("document has {0} validation error(s)")]
    InvalidDocument(usize),
    #[error("authority {actor} may not revoke material owned by {owner}")]
    NotOwner { actor: String, owner: String },
    #[error("malformed key material: {0}")]
    BadKey(String),
    #[error(
        "{0} must be listed in verification_authorities before signing the verification section"
    )]
    UnlistedSigner(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthorityRecord {
    pub authority_id: String,
    pub display_name: String,
    pub public_key: Bytes,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub domains: Vec<String>,
}

impl AuthorityRecord {
    pub fn derive_id(public_key: &[u8]) -> String {
        format!("auth:{}", &Digest::sha256(public_key).to_hex()[..16])
    }

    /// Id matches the key, and the key has the algorithm's shape.
    pub fn is_well_formed(&self) -> bool {
        self.authority_id == Self::derive_id(&self.public_key.0)
            && self.algorithm.public_key_ok(&self.public_key.0)
    }
}

/// Authority records keyed by id.
pub type AuthorityRegistry = BTreeMap<String, AuthorityRecord>;

pub fn registry_of<'a>(
    records: impl IntoIterator<Item = &'a AuthorityRecord>,
) -> AuthorityRegistry {
    records
        .into_iter()
        .map(|r| (r.authority_id.clone(), r.clone()))
        .collect()
}

#[derive(Clone)]
enum SecretKey {
    Ed25519(ed25519_dalek::SigningKey),
    EcdsaP256(p256::ecdsa::SigningKey),
    Rsa(Box<rsa::RsaPrivateKey>),
}

/// Capability to sign as one authority.
///
/// Not `Sync`: a handle must not be used for concurrent signing. Clone it
/// explicitly to hand a copy to another thread.
#[derive(Clone)]
pub struct PrivateKeyHandle {
    authority: AuthorityRecord,
    secret: SecretKey,
    _not_sync: PhantomData<Cell<()>>,
}

impl fmt::Debug for PrivateKeyHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivateKeyHandle")
            .field("authority_id", &self.authority.authority_id)
            .field("algorithm", &self.authority.algorithm)
            .finish_non_exhaustive()
    }
}

impl PrivateKeyHandle {
    fn from_secret(secret: SecretKey, display_name: &str, domains: Vec<String>) -> Self {
        let (algorithm, public_key) = match &secret {
            SecretKey::Ed25519(k) => (Algorithm::Ed25519, k.verifying_key().to_bytes().to_vec()),
            SecretKey::EcdsaP256(k) => (
                Algorithm::EcdsaP256,
                k.verifying_key().to_encoded_point(true).as_bytes().to_vec(),
            ),
            SecretKey::Rsa(k) => {
                use rsa::pkcs1::EncodeRsaPublicKey;
                let der = k
                    .to_public_key()
                    .to_pkcs1_der()
                    .expect("RSA public keys encode");
                (Algorithm::RsaPss2048, der.as_bytes().to_vec())
            }
        };
        let authority = AuthorityRecord {
            authority_id: AuthorityRecord::derive_id(&public_key),
            display_name: display_name.to_string(),
            public_key: Bytes(public_key),
            algorithm,
            domains,
        };
        PrivateKeyHandle {
            authority,
            secret,
            _not_sync: PhantomData,
        }
    }

    /// Deterministic ed25519 key, for fixtures and reproducible runs.
    pub fn ed25519_from_seed(seed: [u8; 32], display_name: &str, domains: Vec<String>) -> Self {
        Self::from_secret(
            SecretKey::Ed25519(ed25519_dalek::SigningKey::from_bytes(&seed)),
            display_name,
            domains,
        )
    }

    pub fn authority(&self) -> &AuthorityRecord {
        &self.authority
    }

    pub fn authority_id(&self) -> &str {
        &self.authority.authority_id
    }

    pub fn algorithm(&self) -> Algorithm {
        self.authority.algorithm
    }

    /// Raw secret: ed25519 seed, P-256 scalar, or PKCS#8 DER for RSA.
    pub fn secret_bytes(&self) -> Vec<u8> {
        match &self.secret {
            SecretKey::Ed25519(k) => k.to_bytes().to_vec(),
            SecretKey::EcdsaP256(k) => k.to_bytes().to_vec(),
            SecretKey::Rsa(k) => {
                use rsa::pkcs8::EncodePrivateKey;
                k.to_pkcs8_der()
                    .expect("RSA private keys encode")
                    .as_bytes()
                    .to_vec()
            }
        }
    }

    /// Rebuilds a handle from [`secret_bytes`](Self::secret_bytes) and the
    /// matching public record.
    pub fn from_secret_bytes(
        record: &AuthorityRecord,
        secret: &[u8],
    ) -> Result<Self, SigningError> {
        let bad = |m: &str| SigningError::BadKey(m.to_string());
        let secret = match record.algorithm {
            Algorithm::Ed25519 => {
                let seed: [u8; 32] = secret
                    .try_into()
                    .map_err(|_| bad("ed25519 seed must be 32 bytes"))?;
                SecretKey::Ed25519(ed25519_dalek::SigningKey::from_bytes(&seed))
            }
            Algorithm::EcdsaP256 => SecretKey::EcdsaP256(
                p256::ecdsa::SigningKey::from_slice(secret)
                    .map_err(|_| bad("invalid P-256 scalar"))?,
            ),
            Algorithm::RsaPss2048 => {
                use rsa::pkcs8::DecodePrivateKey;
                SecretKey::Rsa(Box::new(
                    rsa::RsaPrivateKey::from_pkcs8_der(secret)
                        .map_err(|_| bad("invalid RSA key"))?,
                ))
            }
        };
        let handle = Self::from_secret(secret, &record.display_name, record.domains.clone());
        if handle.authority.public_key != record.public_key {
            return Err(bad("secret does not match the authority's public key"));
        }
        Ok(handle)
    }

    pub fn sign_bytes(&self, message: &[u8]) -> Vec<u8> {
        match &self.secret {
            SecretKey::Ed25519(k) => {
                use ed25519_dalek::Signer;
                k.sign(message).to_bytes().to_vec()
            }
            SecretKey::EcdsaP256(k) => {
                use p256::ecdsa::signature::Signer;
                let sig: p256::ecdsa::Signature = k.sign(message);
                sig.to_bytes().to_vec()
            }
            SecretKey::Rsa(k) => {
                use rsa::signature::{RandomizedSigner, SignatureEncoding};
                let signer = rsa::pss::SigningKey::<sha2::Sha256>::new((**k).clone());
                signer.sign_with_rng(&mut OsRng, message).to_vec()
            }
        }
    }
}

/// Checks `signature` over `message` under an authority's public key.
pub fn verify_bytes(authority: &AuthorityRecord, message: &[u8], signature: &[u8]) -> bool {
    let key = &authority.public_key.0;
    match authority.algorithm {
        Algorithm::Ed25519 => {
            let Ok(key) = <[u8; 32]>::try_from(key.as_slice()) else {
                return false;
            };
            let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&key) else {
                return false;
            };
            let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else {
                return false;
            };
            vk.verify_strict(message, &sig).is_ok()
        }
        Algorithm::EcdsaP256 => {
            use p256::ecdsa::signature::Verifier;
            let Ok(vk) = p256::ecdsa::VerifyingKey::from_sec1_bytes(key) else {
                return false;
            };
            let Ok(sig) = p256::ecdsa::Signature::from_slice(signature) else {
                return false;
            };
            vk.verify(message, &sig).is_ok()
        }
        Algorithm::RsaPss2048 => {
            use rsa::pkcs1::DecodeRsaPublicKey;
            use rsa::signature::Verifier;
            let Ok(pk) = rsa::RsaPublicKey::from_pkcs1_der(key) else {
                return false;
            };
            let Ok(sig) = rsa::pss::Signature::try_from(signature) else {
                return false;
            };
            rsa::pss::VerifyingKey::<sha2::Sha256>::new(pk)
                .verify(message, &sig)
                .is_ok()
        }
    }
}

/// Creates a fresh keypair for a new verification authority.
pub fn generate_authority(
    algorithm: &str,
    display_name: &str,
    domains: Vec<String>,
) -> Result<(PrivateKeyHandle, AuthorityRecord), SigningError> {
    let secret = match algorithm.parse::<Algorithm>()? {
        Algorithm::Ed25519 => SecretKey::Ed25519(ed25519_dalek::SigningKey::generate(&mut OsRng)),
        Algorithm::EcdsaP256 => SecretKey::EcdsaP256(p256::ecdsa::SigningKey::random(&mut OsRng)),
        Algorithm::RsaPss2048 => SecretKey::Rsa(Box::new(
            rsa::RsaPrivateKey::new(&mut OsRng, 2048)
                .map_err(|e| SigningError::BadKey(e.to_string()))?,
        )),
    };
    let handle = PrivateKeyHandle::from_secret(secret, display_name, domains);
    let record = handle.authority.clone();
    Ok((handle, record))
}

/// One authority's attestation over a set of sections of one revision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureBlock {
    pub authority_id: String,
    pub signed_at: Timestamp,
    /// Sorted by section name.
    pub scope: Vec<Section>,
    pub confidence: Ppm,
    pub algorithm: Algorithm,
    pub agent_id: String,
    pub version_seq: u64,
    pub signature: Bytes,
}

impl SignatureBlock {
    /// Digest identifying this block in revocations and revocation_status.
    pub fn digest(&self) -> Digest {
        canon::digest(&canonicalize_serialize(self).expect("signature blocks are canonicalizable"))
    }

    pub fn covers(&self, section: Section) -> bool {
        self.scope.contains(&section)
    }

    fn metadata_bytes(&self) -> Vec<u8> {
        canonicalize(&json!({
            "algorithm": self.algorithm.id(),
            "authority_id": self.authority_id,
            "confidence": self.confidence.ppm(),
            "signed_at": self.signed_at,
        }))
        .expect("signature metadata is canonicalizable")
        .into_bytes()
    }

    /// The exact octets the signature covers, given the section payload.
    pub fn message_for_payload(&self, payload: &[u8]) -> Vec<u8> {
        let mut message = payload.to_vec();
        message.extend_from_slice(&self.metadata_bytes());
        message
    }
}

/// Signs the given sections of `doc`.
pub fn sign_sections(
    key: &PrivateKeyHandle,
    doc: &AgentFactsDoc,
    scope: &[Section],
    confidence: f64,
    signed_at: Timestamp,
) -> Result<SignatureBlock, SigningError> {
    let confidence_ppm = Ppm::from_f64(confidence)
        .filter(|c| c.is_unit_fraction() && (0.0..=1.0).contains(&confidence))
        .ok_or(SigningError::InvalidConfidence(confidence))?;
    let report = validate_document(doc);
    if report.has_errors() {
        return Err(SigningError::InvalidDocument(report.error_count()));
    }
    let names: Vec<&str> = scope.iter().map(|s| s.as_str()).collect();
    let scope = canon::normalize_scope(&names)?;
    let listed = doc.verification.as_ref().is_some_and(|v| {
        v.verification_authorities
            .iter()
            .any(|a| a == key.authority_id())
    });
    if scope.contains(&Section::Verification) && !listed {
        return Err(SigningError::UnlistedSigner(key.authority_id().to_string()));
    }
    let payload = canon::section_payload(doc, &scope)?;
    let mut block = SignatureBlock {
        authority_id: key.authority_id().to_string(),
        signed_at,
        scope,
        confidence: confidence_ppm,
        algorithm: key.algorithm(),
        agent_id: doc.identity.agent_id.clone(),
        version_seq: doc.identity.version_seq,
        signature: Bytes::default(),
    };
    block.signature = Bytes(key.sign_bytes(&block.message_for_payload(payload.as_bytes())));
    Ok(block)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigStatus {
    Valid,
    BadSignature,
    UnknownAuthority,
    Revoked,
    /// The block is bound to a different agent_id or version_seq.
    ScopeMismatch,
    /// Older than the tightest verification_ttl among its sections.
    Expired,
}

impl SigStatus {
    /// Cryptographic, identity or revocation failure (as opposed to age).
    pub fn is_integrity_failure(self) -> bool {
        matches!(
            self,
            SigStatus::BadSignature
                | SigStatus::UnknownAuthority
                | SigStatus::Revoked
                | SigStatus::ScopeMismatch
        )
    }
}

impl fmt::Display for SigStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SigStatus::Valid => "valid",
            SigStatus::BadSignature => "bad_signature",
            SigStatus::UnknownAuthority => "unknown_authority",
            SigStatus::Revoked => "revoked",
            SigStatus::ScopeMismatch => "scope_mismatch",
            SigStatus::Expired => "expired",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevocationTargetKind {
    Signature,
    Authority,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevocationEntry {
    pub target: RevocationTargetKind,
    /// Signature digest (`sha-256:<hex>`) or authority id.
    pub target_ref: String,
    pub reason: String,
    pub revoked_at: Timestamp,
    pub issuer: String,
    pub signature: Bytes,
}

impl RevocationEntry {
    fn message(&self) -> Vec<u8> {
        canonicalize(&json!({
            "issuer": self.issuer,
            "reason": self.reason,
            "revoked_at": self.revoked_at,
            "target": self.target,
            "target_ref": self.target_ref,
        }))
        .expect("revocation bodies are canonicalizable")
        .into_bytes()
    }

    /// The entry's own signature verifies against its issuer's key.
    pub fn verify(&self, authorities: &AuthorityRegistry) -> bool {
        authorities
            .get(&self.issuer)
            .is_some_and(|a| verify_bytes(a, &self.message(), &self.signature.0))
    }

    fn applies_to(&self, sig: &SignatureBlock, now: Timestamp) -> bool {
        if self.revoked_at > now || self.issuer != sig.authority_id {
            return false;
        }
        match self.target {
            RevocationTargetKind::Authority => self.target_ref == sig.authority_id,
            RevocationTargetKind::Signature => self.target_ref == sig.digest().to_string(),
        }
    }
}

/// What a revocation withdraws.
#[derive(Clone, Copy, Debug)]
pub enum RevocationTarget<'a> {
    Signature(&'a SignatureBlock),
    Authority(&'a str),
}

/// Issues a self-revocation: an authority may withdraw its own signatures
/// or its own identity, nothing else.
pub fn revoke(
    key: &PrivateKeyHandle,
    target: RevocationTarget<'_>,
    reason: &str,
    at: Timestamp,
) -> Result<RevocationEntry, SigningError> {
    let me = key.authority_id();
    let (kind, target_ref, owner) = match target {
        RevocationTarget::Signature(block) => (
            RevocationTargetKind::Signature,
            block.digest().to_string(),
            block.authority_id.as_str(),
        ),
        RevocationTarget::Authority(id) => (RevocationTargetKind::Authority, id.to_string(), id),
    };
    if owner != me {
        return Err(SigningError::NotOwner {
            actor: me.to_string(),
            owner: owner.to_string(),
        });
    }
    let mut entry = RevocationEntry {
        target: kind,
        target_ref,
        reason: reason.to_string(),
        revoked_at: at,
        issuer: me.to_string(),
        signature: Bytes::default(),
    };
    entry.signature = Bytes(key.sign_bytes(&entry.message()));
    Ok(entry)
}

/// Whether a verified revocation withdraws `sig` as of `now`.
pub fn is_revoked(
    sig: &SignatureBlock,
    authorities: &AuthorityRegistry,
    revocations: &[RevocationEntry],
    now: Timestamp,
) -> bool {
    revocations
        .iter()
        .any(|r| r.applies_to(sig, now) && r.verify(authorities))
}

/// Checks the cryptographic signature against raw payload bytes, without
/// any registry, revocation or freshness logic.
pub fn verify_payload(authority: &AuthorityRecord, sig: &SignatureBlock, payload: &[u8]) -> bool {
    authority.algorithm == sig.algorithm
        && verify_bytes(
            authority,
            &sig.message_for_payload(payload),
            &sig.signature.0,
        )
}

pub fn verify_signature(
    doc: &AgentFactsDoc,
    sig: &SignatureBlock,
    authorities: &AuthorityRegistry,
    revocations: &[RevocationEntry],
    now: Timestamp,
) -> SigStatus {
    let Some(authority) = authorities.get(&sig.authority_id) else {
        return SigStatus::UnknownAuthority;
    };
    if !authority.is_well_formed() {
        return SigStatus::UnknownAuthority;
    }
    if is_revoked(sig, authorities, revocations, now) {
        return SigStatus::Revoked;
    }
    if sig.agent_id != doc.identity.agent_id || sig.version_seq != doc.identity.version_seq {
        return SigStatus::ScopeMismatch;
    }
    let names: Vec<&str> = sig.scope.iter().map(|s| s.as_str()).collect();
    let scope_ok = canon::normalize_scope(&names).is_ok_and(|s| s == sig.scope);
    let payload = match canon::section_payload(doc, &sig.scope) {
        Ok(p) if scope_ok => p,
        _ => return SigStatus::BadSignature,
    };
    if !verify_payload(authority, sig, payload.as_bytes()) {
        return SigStatus::BadSignature;
    }
    if let Some(ttl) = signature_ttl(doc, sig) {
        if now.secs_since(sig.signed_at) > ttl as i64 {
            return SigStatus::Expired;
        }
    }
    SigStatus::Valid
}

/// Tightest `verification_ttl` among the block's sections, if any is set.
pub fn signature_ttl(doc: &AgentFactsDoc, sig: &SignatureBlock) -> Option<u64> {
    let ttl = &doc.verification.as_ref()?.verification_ttl;
    sig.scope.iter().filter_map(|s| ttl.get(s).copied()).min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::finance_agent_doc as sample_doc;

    fn t(secs: i64) -> Timestamp {
        Timestamp::from_unix(1_740_000_000 + secs)
    }

    fn key(seed: u8) -> PrivateKeyHandle {
        PrivateKeyHandle::ed25519_from_seed([seed; 32], &format!("authority {seed}"), vec![])
    }

    #[test]
    fn generate_shapes() {
        let (handle, record) =
            generate_authority("ed25519", "Sec Co", vec!["security".into()]).unwrap();
        assert_eq!(record.public_key.0.len(), 32);
        assert!(record.authority_id.starts_with("auth:"));
        assert_eq!(record.authority_id.len(), 5 + 16);
        assert!(record.is_well_formed());
        assert_eq!(handle.authority(), &record);

        let (_, other) = generate_authority("ed25519", "Sec Co", vec![]).unwrap();
        assert_ne!(record.authority_id, other.authority_id);

        let (_, ec) = generate_authority("ecdsa-p256", "EC", vec![]).unwrap();
        assert_eq!(ec.public_key.0.len(), 33);
        assert!(ec.is_well_formed());

        assert_eq!(
            generate_authority("rot13", "x", vec![]).unwrap_err(),
            SigningError::UnsupportedAlgorithm("rot13".into())
        );
    }

    #[test]
    fn every_algorithm_round_trips() {
        let doc = sample_doc();
        for alg in Algorithm::ALL {
            let (k, rec) = generate_authority(alg.id(), "a", vec![]).unwrap();
            let reg = registry_of([&rec]);
            let sig = sign_sections(&k, &doc, &[Section::Compliance], 0.8, t(0)).unwrap();
            assert_eq!(
                verify_signature(&doc, &sig, &reg, &[], t(10)),
                SigStatus::Valid,
                "{alg}"
            );

            let restored = PrivateKeyHandle::from_secret_bytes(&rec, &k.secret_bytes()).unwrap();
            let again = sign_sections(&restored, &doc, &[Section::Identity], 0.5, t(0)).unwrap();
            assert_eq!(
                verify_signature(&doc, &again, &reg, &[], t(10)),
                SigStatus::Valid,
                "{alg}"
            );
        }
    }

    #[test]
    fn scope_is_normalized_and_tamper_detected() {
        let doc = sample_doc();
        let k = key(1);
        let reg = registry_of([k.authority()]);
        let sig = sign_sections(
            &k,
            &doc,
            &[Section::SupplyChain, Section::AuthPermissions],
            0.95,
            t(0),
        )
        .unwrap();
        assert_eq!(
            sig.scope,
            vec![Section::AuthPermissions, Section::SupplyChain]
        );
        assert_eq!(sig.confidence, Ppm::from_ppm(950_000));

        let mut tampered = doc.clone();
        tampered
            .supply_chain
            .as_mut()
            .unwrap()
            .component_dependencies[0]
            .version
            .push('x');
        assert_eq!(
            verify_signature(&tampered, &sig, &reg, &[], t(1)),
            SigStatus::BadSignature
        );

        let mut outside = doc.clone();
        outside.performance.as_mut().unwrap().response_time_p50 = Some(1);
        assert_eq!(
            verify_signature(&outside, &sig, &reg, &[], t(1)),
            SigStatus::Valid
        );

        let mut forged = sig.clone();
        forged.confidence = Ppm::ONE;
        assert_eq!(
            verify_signature(&doc, &forged, &reg, &[], t(1)),
            SigStatus::BadSignature
        );
    }

    #[test]
    fn verification_signer_must_be_listed() {
        let mut doc = sample_doc();
        let k = key(9);
        assert_eq!(
            sign_sections(&k, &doc, &[Section::Verification], 0.5, t(0)),
            Err(SigningError::UnlistedSigner(k.authority_id().to_string()))
        );
        doc.verification
            .as_mut()
            .unwrap()
            .verification_authorities
            .push(k.authority_id().into());
        let block = sign_sections(&k, &doc, &[Section::Verification], 0.5, t(0)).unwrap();
        doc.attach_signature(block.clone());
        let registry = registry_of([k.authority()]);
        assert_eq!(
            verify_signature(&doc, &block, &registry, &[], t(0)),
            SigStatus::Valid
        );
    }

    #[test]
    fn confidence_range() {
        let doc = sample_doc();
        assert_eq!(
            sign_sections(&key(1), &doc, &[Section::Compliance], 1.5, t(0)).unwrap_err(),
            SigningError::InvalidConfidence(1.5)
        );
        assert!(sign_sections(&key(1), &doc, &[Section::Compliance], -0.1, t(0)).is_err());
        assert!(sign_sections(&key(1), &doc, &[Section::Compliance], f64::NAN, t(0)).is_err());
    }

    #[test]
    fn binding_and_authority_checks() {
        let doc = sample_doc();
        let k = key(2);
        let reg = registry_of([k.authority()]);
        let sig = sign_sections(&k, &doc, &[Section::Identity], 0.9, t(0)).unwrap();

        let mut next = doc.clone();
        next.identity.version_seq += 1;
        assert_eq!(
            verify_signature(&next, &sig, &reg, &[], t(1)),
            SigStatus::ScopeMismatch
        );

        let mut other = doc.clone();
        other.identity.agent_id = "did:example:other".into();
        assert_eq!(
            verify_signature(&other, &sig, &reg, &[], t(1)),
            SigStatus::ScopeMismatch
        );

        assert_eq!(
            verify_signature(&doc, &sig, &AuthorityRegistry::new(), &[], t(1)),
            SigStatus::UnknownAuthority
        );
    }

    #[test]
    fn section_ttl_expiry() {
        let mut doc = sample_doc();
        doc.verification
            .as_mut()
            .unwrap()
            .verification_ttl
            .insert(Section::Performance, 60);
        let k = key(3);
        let reg = registry_of([k.authority()]);
        let sig = sign_sections(
            &k,
            &doc,
            &[Section::Performance, Section::Identity],
            0.9,
            t(0),
        )
        .unwrap();
        assert_eq!(
            verify_signature(&doc, &sig, &reg, &[], t(60)),
            SigStatus::Valid
        );
        assert_eq!(
            verify_signature(&doc, &sig, &reg, &[], t(61)),
            SigStatus::Expired
        );
    }

    #[test]
    fn revocation_effects() {
        let doc = sample_doc();
        let a = key(4);
        let b = key(5);
        let reg = registry_of([a.authority(), b.authority()]);
        let s1 = sign_sections(&a, &doc, &[Section::Compliance], 0.9, t(0)).unwrap();
        let s2 = sign_sections(&a, &doc, &[Section::Identity], 0.9, t(0)).unwrap();

        let r = revoke(&a, RevocationTarget::Signature(&s1), "superseded", t(100)).unwrap();
        assert!(r.verify(&reg));
        let revs = [r];
        assert_eq!(
            verify_signature(&doc, &s1, &reg, &revs, t(99)),
            SigStatus::Valid
        );
        assert_eq!(
            verify_signature(&doc, &s1, &reg, &revs, t(100)),
            SigStatus::Revoked
        );
        assert_eq!(
            verify_signature(&doc, &s2, &reg, &revs, t(100)),
            SigStatus::Valid
        );

        let all = revoke(
            &a,
            RevocationTarget::Authority(a.authority_id()),
            "key compromise",
            t(200),
        )
        .unwrap();
        assert_eq!(
            verify_signature(&doc, &s2, &reg, std::slice::from_ref(&all), t(200)),
            SigStatus::Revoked
        );

        assert!(matches!(
            revoke(&a, RevocationTarget::Authority(b.authority_id()), "", t(0)),
            Err(SigningError::NotOwner { .. })
        ));
        let s_b = sign_sections(&b, &doc, &[Section::Identity], 0.9, t(0)).unwrap();
        assert!(matches!(
            revoke(&a, RevocationTarget::Signature(&s_b), "", t(0)),
            Err(SigningError::NotOwner { .. })
        ));

        // A forged entry (bad signature) has no effect.
        let mut forged = all;
        forged.reason = "edited".into();
        assert_eq!(
            verify_signature(&doc, &s2, &reg, &[forged], t(300)),
            SigStatus::Valid
        );
    }

    #[test]
    fn block_wire_form() {
        let doc = sample_doc();
        let sig = sign_sections(&key(6), &doc, &[Section::Compliance], 0.9, t(0)).unwrap();
        let text = serde_json::to_string(&sig).unwrap();
        assert!(text.contains(r#""algorithm":"ed25519""#));
        assert!(text.contains(r#""confidence":0.9"#));
        assert!(!text.contains('='), "base64url without padding");
        let back: SignatureBlock = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sig);
    }
}
