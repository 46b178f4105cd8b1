// SPDX-License-Identifier: Apache-2.0

//! Blocking HTTP client for a registry node, and the HTTP webhook sender.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::server::{
    ChainResponse, ErrorBody, FactsResponse, RevocationAck, SubscribeRequest, SubscribeResponse,
    VersionResponse,
};
use super::{Ack, PublishRequest, Transport};
use crate::signing::{AuthorityRegistry, RevocationEntry};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Http(String),
    #[error("registry answered {status}: {error}: {message}")]
    Rejected {
        status: u16,
        error: String,
        message: String,
    },
    #[error("unexpected response body: {0}")]
    Body(String),
}

impl ClientError {
    /// Whether the registry rejected the request on chain grounds.
    pub fn is_chain_mismatch(&self) -> bool {
        matches!(self, ClientError::Rejected { status: 409, .. })
    }
}

pub struct RegistryClient {
    base: String,
    http: reqwest::blocking::Client,
}

fn encode_segment(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes())
        .collect::<String>()
        .replace('+', "%20")
}

impl RegistryClient {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| ClientError::Http(e.to_string()))?;
        Ok(RegistryClient {
            base: base_url.trim_end_matches('/').to_string(),
            http,
        })
    }

    fn agent_url(&self, agent_id: &str, rest: &str) -> String {
        format!("{}/agents/{}{rest}", self.base, encode_segment(agent_id))
    }

    fn finish<T: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<T, ClientError> {
        let status = resp.status().as_u16();
        let bytes = resp.bytes().map_err(|e| ClientError::Http(e.to_string()))?;
        if !(200..300).contains(&status) {
            let body: ErrorBody = serde_json::from_slice(&bytes).unwrap_or(ErrorBody {
                error: "unknown".into(),
                message: String::from_utf8_lossy(&bytes).into_owned(),
            });
            return Err(ClientError::Rejected {
                status,
                error: body.error,
                message: body.message,
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Body(e.to_string()))
    }

    fn get<T: DeserializeOwned>(&self, url: &str) -> Result<T, ClientError> {
        let resp = self
            .http
            .get(url)
            .send()
            .map_err(|e| ClientError::Http(e.to_string()))?;
        Self::finish(resp)
    }

    fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        url: &str,
        body: &B,
    ) -> Result<T, ClientError> {
        let resp = self
            .http
            .post(url)
            .header("content-type", "application/json")
            .body(serde_json::to_vec(body).expect("requests serialize"))
            .send()
            .map_err(|e| ClientError::Http(e.to_string()))?;
        Self::finish(resp)
    }

    pub fn facts(&self, agent_id: &str) -> Result<FactsResponse, ClientError> {
        self.get(&self.agent_url(agent_id, "/facts"))
    }

    pub fn version(&self, agent_id: &str, seq: u64) -> Result<VersionResponse, ClientError> {
        self.get(&self.agent_url(agent_id, &format!("/facts/{seq}")))
    }

    pub fn chain(&self, agent_id: &str) -> Result<ChainResponse, ClientError> {
        self.get(&self.agent_url(agent_id, "/chain"))
    }

    pub fn publish(&self, req: &PublishRequest) -> Result<Ack, ClientError> {
        self.post(&self.agent_url(&req.doc.identity.agent_id, "/facts"), req)
    }

    pub fn subscribe(
        &self,
        agent_id: &str,
        webhook_url: &str,
    ) -> Result<SubscribeResponse, ClientError> {
        self.post(
            &self.agent_url(agent_id, "/subscriptions"),
            &SubscribeRequest {
                webhook_url: webhook_url.to_string(),
            },
        )
    }

    pub fn authorities(&self) -> Result<AuthorityRegistry, ClientError> {
        self.get(&format!("{}/authorities", self.base))
    }

    pub fn revoke(&self, entry: &RevocationEntry) -> Result<RevocationAck, ClientError> {
        self.post(&format!("{}/revocations", self.base), entry)
    }
}

/// Posts webhook bodies over HTTP.
pub struct HttpTransport {
    http: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::Http(e.to_string()))?;
        Ok(HttpTransport { http })
    }
}

impl Transport for HttpTransport {
    fn post(&self, url: &str, body: &[u8]) -> Result<u16, String> {
        self.http
            .post(url)
            .header("content-type", "application/json")
            .body(body.to_vec())
            .send()
            .map(|r| r.status().as_u16())
            .map_err(|e| e.to_string())
    }
}
