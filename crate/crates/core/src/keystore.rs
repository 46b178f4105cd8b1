// SPDX-License-Identifier: Apache-2.0

//! Passphrase-protected file of authority private keys.
//!
//! The file is JSON: public authority records in the clear, secrets sealed
//! with XChaCha20-Poly1305 under an Argon2id-derived key. The public
//! records are bound in as associated data, so swapping a public key
//! breaks decryption.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use argon2::{Algorithm as KdfAlgorithm, Argon2, Params, Version};
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::canon::canonicalize_serialize;
use crate::signing::{AuthorityRecord, Bytes, PrivateKeyHandle, SigningError};

pub const PASSPHRASE_ENV: &str = "AGENTFACTS_KEYSTORE_PASS";
const FORMAT: &str = "agentfacts-keystore-v1";

#[derive(Debug, thiserror::Error)]
pub enum KeystoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("keystore format: {0}")]
    Format(String),
    #[error("wrong passphrase or corrupted keystore")]
    WrongPassphrase,
    #[error("passphrase not set; export {PASSPHRASE_ENV}")]
    MissingPassphrase,
    #[error("no key for authority {0}")]
    UnknownAuthority(String),
    #[error(transparent)]
    Key(#[from] SigningError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfParams {
    pub algorithm: String,
    pub salt: Bytes,
    pub m_cost_kib: u32,
    pub t_cost: u32,
    pub p_cost: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeystoreFile {
    format: String,
    authorities: Vec<AuthorityRecord>,
    kdf: KdfParams,
    nonce: Bytes,
    ciphertext: Bytes,
}

/// Decrypted keystore contents.
#[derive(Default)]
pub struct Keystore {
    authorities: BTreeMap<String, AuthorityRecord>,
    secrets: BTreeMap<String, Vec<u8>>,
}

impl std::fmt::Debug for Keystore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Keystore")
            .field("authorities", &self.authorities.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

/// Reads the passphrase from [`PASSPHRASE_ENV`].
pub fn passphrase_from_env() -> Result<String, KeystoreError> {
    match std::env::var(PASSPHRASE_ENV) {
        Ok(p) if !p.is_empty() => Ok(p),
        _ => Err(KeystoreError::MissingPassphrase),
    }
}

fn derive_key(passphrase: &str, kdf: &KdfParams) -> Result<[u8; 32], KeystoreError> {
    if kdf.algorithm != "argon2id" {
        return Err(KeystoreError::Format(format!(
            "unsupported kdf {}",
            kdf.algorithm
        )));
    }
    let params = Params::new(kdf.m_cost_kib, kdf.t_cost, kdf.p_cost, Some(32))
        .map_err(|e| KeystoreError::Format(e.to_string()))?;
    let mut key = [0u8; 32];
    Argon2::new(KdfAlgorithm::Argon2id, Version::V0x13, params)
        .hash_password_into(passphrase.as_bytes(), &kdf.salt.0, &mut key)
        .map_err(|e| KeystoreError::Format(e.to_string()))?;
    Ok(key)
}

fn aad(authorities: &[AuthorityRecord]) -> Vec<u8> {
    canonicalize_serialize(authorities)
        .expect("authority records are canonicalizable")
        .into_bytes()
}

impl Keystore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: &PrivateKeyHandle) {
        let id = key.authority_id().to_string();
        self.authorities.insert(id.clone(), key.authority().clone());
        self.secrets.insert(id, key.secret_bytes());
    }

    pub fn authorities(&self) -> impl Iterator<Item = &AuthorityRecord> {
        self.authorities.values()
    }

    pub fn key(&self, authority_id: &str) -> Result<PrivateKeyHandle, KeystoreError> {
        let record = self
            .authorities
            .get(authority_id)
            .ok_or_else(|| KeystoreError::UnknownAuthority(authority_id.to_string()))?;
        let secret = &self.secrets[authority_id];
        Ok(PrivateKeyHandle::from_secret_bytes(record, secret)?)
    }

    pub fn to_file_bytes(&self, passphrase: &str) -> Result<Vec<u8>, KeystoreError> {
        let mut salt = [0u8; 16];
        let mut nonce = [0u8; 24];
        rand::rngs::OsRng.fill_bytes(&mut salt);
        rand::rngs::OsRng.fill_bytes(&mut nonce);
        let kdf = KdfParams {
            algorithm: "argon2id".into(),
            salt: Bytes(salt.to_vec()),
            m_cost_kib: 19_456,
            t_cost: 2,
            p_cost: 1,
        };
        let key = derive_key(passphrase, &kdf)?;
        let authorities: Vec<AuthorityRecord> = self.authorities.values().cloned().collect();
        let secrets: BTreeMap<&str, Bytes> = self
            .secrets
            .iter()
            .map(|(k, v)| (k.as_str(), Bytes(v.clone())))
            .collect();
        let plaintext = serde_json::to_vec(&secrets).expect("secrets serialize");
        let ciphertext = XChaCha20Poly1305::new(&key.into())
            .encrypt(
                XNonce::from_slice(&nonce),
                Payload {
                    msg: &plaintext,
                    aad: &aad(&authorities),
                },
            )
            .map_err(|_| KeystoreError::Format("encryption failed".into()))?;
        let file = KeystoreFile {
            format: FORMAT.into(),
            authorities,
            kdf,
            nonce: Bytes(nonce.to_vec()),
            ciphertext: Bytes(ciphertext),
        };
        Ok(serde_json::to_vec_pretty(&file).expect("keystore serializes"))
    }

    pub fn from_file_bytes(bytes: &[u8], passphrase: &str) -> Result<Self, KeystoreError> {
        let file: KeystoreFile =
            serde_json::from_slice(bytes).map_err(|e| KeystoreError::Format(e.to_string()))?;
        if file.format != FORMAT {
            return Err(KeystoreError::Format(format!(
                "unknown format {:?}",
                file.format
            )));
        }
        if file.nonce.0.len() != 24 {
            return Err(KeystoreError::Format("nonce must be 24 bytes".into()));
        }
        let key = derive_key(passphrase, &file.kdf)?;
        let plaintext = XChaCha20Poly1305::new(&key.into())
            .decrypt(
                XNonce::from_slice(&file.nonce.0),
                Payload {
                    msg: &file.ciphertext.0,
                    aad: &aad(&file.authorities),
                },
            )
            .map_err(|_| KeystoreError::WrongPassphrase)?;
        let secrets: BTreeMap<String, Bytes> =
            serde_json::from_slice(&plaintext).map_err(|e| KeystoreError::Format(e.to_string()))?;
        let mut store = Keystore::new();
        for record in file.authorities {
            let secret = secrets.get(&record.authority_id).ok_or_else(|| {
                KeystoreError::Format(format!("no secret for {}", record.authority_id))
            })?;
            PrivateKeyHandle::from_secret_bytes(&record, &secret.0)?;
            store
                .secrets
                .insert(record.authority_id.clone(), secret.0.clone());
            store
                .authorities
                .insert(record.authority_id.clone(), record);
        }
        Ok(store)
    }

    /// Loads `path`; a missing file is an empty keystore.
    pub fn load(path: &Path, passphrase: &str) -> Result<Self, KeystoreError> {
        match fs::read(path) {
            Ok(bytes) => Self::from_file_bytes(&bytes, passphrase),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Keystore::new()),
            Err(source) => Err(KeystoreError::Io {
                path: path.display().to_string(),
                source,
            }),
        }
    }

    pub fn save(&self, path: &Path, passphrase: &str) -> Result<(), KeystoreError> {
        let bytes = self.to_file_bytes(passphrase)?;
        let io_err = |source| KeystoreError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        fs::write(path, bytes).map_err(io_err)
    }
}
