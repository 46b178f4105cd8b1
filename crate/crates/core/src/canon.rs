// SPDX-License-Identifier: Apache-2.0

//! Canonical encoding and hashing.
//!
//! The canonical form is the byte string every signature, version link and
//! audit entry covers. It is JSON with these rules:
//!
//! * object members sorted by the Unicode code points of their keys;
//! * no whitespace outside strings;
//! * strings escape only `"`, `\` and the C0 controls (`\b \f \n \r \t`
//!   short forms, `\u00xx` lowercase hex otherwise); all other characters
//!   are emitted as raw UTF-8;
//! * numbers must be integers, written in decimal without exponent, sign
//!   only when negative, no leading zeros. Any number stored as a float,
//!   including `2.0`, is rejected;
//! * fractional document fields ([`Ppm`](crate::units::Ppm)) appear as
//!   integer parts-per-million.
//!
//! Hashes are SHA-256, tagged with the algorithm name for agility.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use sha2::{Digest as _, Sha256};

use crate::model::{AgentFactsDoc, Section};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CanonError {
    #[error("value at {path} is not canonicalizable: {reason}")]
    NonCanonicalizable { path: String, reason: String },
    #[error("unknown section {0:?}")]
    UnknownSection(String),
    #[error("section {0} is not present in the document")]
    MissingSection(Section),
    #[error("signature scope must name at least one section")]
    EmptyScope,
}

thread_local! {
    static SCALED_AS_INTEGER: Cell<bool> = const { Cell::new(false) };
}

pub(crate) fn scaled_as_integer() -> bool {
    SCALED_AS_INTEGER.with(Cell::get)
}

struct ScaledModeGuard(bool);

impl ScaledModeGuard {
    fn enter() -> Self {
        ScaledModeGuard(SCALED_AS_INTEGER.with(|c| c.replace(true)))
    }
}

impl Drop for ScaledModeGuard {
    fn drop(&mut self) {
        SCALED_AS_INTEGER.with(|c| c.set(self.0));
    }
}

/// Converts any document value into the data model used for canonical
/// encoding (fractions become integer ppm).
pub fn to_canonical_value<T: Serialize + ?Sized>(value: &T) -> Result<Value, CanonError> {
    let _guard = ScaledModeGuard::enter();
    serde_json::to_value(value).map_err(|e| CanonError::NonCanonicalizable {
        path: String::new(),
        reason: e.to_string(),
    })
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CanonicalBytes(Vec<u8>);

impl CanonicalBytes {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn as_str(&self) -> &str {
        // Only ever built from UTF-8 fragments.
        std::str::from_utf8(&self.0).expect("canonical bytes are UTF-8")
    }
}

impl fmt::Debug for CanonicalBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CanonicalBytes({})", self.as_str())
    }
}

impl AsRef<[u8]> for CanonicalBytes {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

pub fn canonicalize(value: &Value) -> Result<CanonicalBytes, CanonError> {
    let mut out = Vec::with_capacity(256);
    let mut path = String::new();
    write_value(value, &mut out, &mut path)?;
    Ok(CanonicalBytes(out))
}

/// Canonical bytes of any serializable document value.
pub fn canonicalize_serialize<T: Serialize + ?Sized>(
    value: &T,
) -> Result<CanonicalBytes, CanonError> {
    canonicalize(&to_canonical_value(value)?)
}

fn write_value(value: &Value, out: &mut Vec<u8>, path: &mut String) -> Result<(), CanonError> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.extend_from_slice(i.to_string().as_bytes());
            } else if let Some(u) = n.as_u64() {
                out.extend_from_slice(u.to_string().as_bytes());
            } else {
                return Err(CanonError::NonCanonicalizable {
                    path: if path.is_empty() {
                        "/".into()
                    } else {
                        path.clone()
                    },
                    reason: format!("non-integer number {n}"),
                });
            }
        }
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                let len = path.len();
                path.push('/');
                path.push_str(&i.to_string());
                write_value(item, out, path)?;
                path.truncate(len);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            // serde_json's map is ordered by byte order, which for UTF-8 is
            // code point order; sort explicitly so feature flags cannot change it.
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                let len = path.len();
                path.push('/');
                path.push_str(&escape_pointer(key));
                write_value(&map[key], out, path)?;
                path.truncate(len);
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    out.push(b'"');
    for ch in s.chars() {
        match ch {
            '"' => out.extend_from_slice(b"\\\""),
            '\\' => out.extend_from_slice(b"\\\\"),
            '\u{08}' => out.extend_from_slice(b"\\b"),
            '\u{0c}' => out.extend_from_slice(b"\\f"),
            '\n' => out.extend_from_slice(b"\\n"),
            '\r' => out.extend_from_slice(b"\\r"),
            '\t' => out.extend_from_slice(b"\\t"),
            c if (c as u32) < 0x20 => {
                out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes());
            }
            c => {
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
        }
    }
    out.push(b'"');
}

pub(crate) fn escape_pointer(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DigestAlgorithm {
    Sha256,
}

impl DigestAlgorithm {
    pub fn id(self) -> &'static str {
        match self {
            DigestAlgorithm::Sha256 => "sha-256",
        }
    }

    pub fn output_len(self) -> usize {
        match self {
            DigestAlgorithm::Sha256 => 32,
        }
    }
}

/// A tagged hash value, written as `sha-256:<lowercase hex>`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest {
    algorithm: DigestAlgorithm,
    value: [u8; 32],
}

impl Digest {
    pub const ZERO: Digest = Digest {
        algorithm: DigestAlgorithm::Sha256,
        value: [0u8; 32],
    };

    pub fn sha256(bytes: &[u8]) -> Self {
        Digest {
            algorithm: DigestAlgorithm::Sha256,
            value: Sha256::digest(bytes).into(),
        }
    }

    pub fn from_parts(algorithm: DigestAlgorithm, value: &[u8]) -> Option<Self> {
        let value: [u8; 32] = value.try_into().ok()?;
        (value.len() == algorithm.output_len()).then_some(Digest { algorithm, value })
    }

    pub fn algorithm(&self) -> DigestAlgorithm {
        self.algorithm
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.value
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.value)
    }
}

pub fn digest(bytes: &CanonicalBytes) -> Digest {
    Digest::sha256(bytes.as_bytes())
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.algorithm.id(), self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed digest {0:?}")]
pub struct DigestParseError(pub String);

impl FromStr for Digest {
    type Err = DigestParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || DigestParseError(s.to_string());
        let (alg, hexval) = s.split_once(':').ok_or_else(err)?;
        let algorithm = match alg {
            "sha-256" => DigestAlgorithm::Sha256,
            _ => return Err(err()),
        };
        if hexval.len() != 64 || hexval.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(err());
        }
        let bytes = hex::decode(hexval).map_err(|_| err())?;
        Digest::from_parts(algorithm, &bytes).ok_or_else(err)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Digest of a whole document's canonical bytes.
pub fn document_digest(doc: &AgentFactsDoc) -> Result<Digest, CanonError> {
    Ok(digest(&canonicalize_serialize(doc)?))
}

/// The content of one section as covered by signatures.
///
/// Two fields hold live state rather than attested facts and are left out:
/// `verification.signatures` / `verification.revocation_status` (they change
/// as a consequence of signing) and `auth_permissions.permission_state`
/// (guarded by its own audit hash chain).
pub fn signable_section(
    doc: &AgentFactsDoc,
    section: Section,
) -> Result<Option<Value>, CanonError> {
    let whole = to_canonical_value(doc)?;
    Ok(signable_from_value(&whole, section))
}

fn signable_from_value(whole: &Value, section: Section) -> Option<Value> {
    let mut value = whole.get(section.as_str())?.clone();
    if let Value::Object(map) = &mut value {
        match section {
            Section::Verification => {
                map.remove("signatures");
                map.remove("revocation_status");
            }
            Section::AuthPermissions => {
                map.remove("permission_state");
            }
            _ => {}
        }
    }
    Some(value)
}

/// Normalizes a list of section names: parsed, deduplicated and sorted by name.
pub fn normalize_scope<S: AsRef<str>>(names: &[S]) -> Result<Vec<Section>, CanonError> {
    if names.is_empty() {
        return Err(CanonError::EmptyScope);
    }
    let mut set = BTreeSet::new();
    for name in names {
        let name = name.as_ref();
        let section: Section = name
            .parse()
            .map_err(|_| CanonError::UnknownSection(name.to_string()))?;
        set.insert(section);
    }
    let mut scope: Vec<Section> = set.into_iter().collect();
    scope.sort_by_key(|s| s.as_str());
    Ok(scope)
}

/// Canonical bytes of `{agent_id, version_seq, scope, sections}` for the
/// given scope. Binding agent_id and version_seq keeps a signature from
/// being moved to another agent or replayed onto a later revision.
pub fn section_payload(
    doc: &AgentFactsDoc,
    scope: &[Section],
) -> Result<CanonicalBytes, CanonError> {
    if scope.is_empty() {
        return Err(CanonError::EmptyScope);
    }
    let mut names: Vec<&'static str> = scope.iter().map(|s| s.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    let whole = to_canonical_value(doc)?;
    let mut sections = Map::new();
    for section in scope {
        let value =
            signable_from_value(&whole, *section).ok_or(CanonError::MissingSection(*section))?;
        sections.insert(section.as_str().to_string(), value);
    }
    let record = serde_json::json!({
        "agent_id": doc.identity.agent_id,
        "version_seq": doc.identity.version_seq,
        "scope": names,
        "sections": Value::Object(sections),
    });
    canonicalize(&record)
}
