//! Minimal blocking JSON-over-HTTP client shared by the remote backends.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("transport failure talking to {url}: {message}")]
    Transport { url: String, message: String },
    #[error("{url} answered with status {status}")]
    Status { url: String, status: u16 },
    #[error("could not decode response from {url}: {message}")]
    Decode { url: String, message: String },
}

impl HttpError {
    /// Transport failures and server-side errors are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            HttpError::Transport { .. } => true,
            HttpError::Status { status, .. } => *status >= 500 || *status == 429,
            HttpError::Decode { .. } => false,
        }
    }
}

#[derive(Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    url: String,
    retries: u32,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonClient").field("url", &self.url).finish()
    }
}

impl JsonClient {
    pub fn new(url: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        JsonClient {
            agent,
            url: url.into(),
            retries: 2,
        }
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, HttpError> {
        let mut attempt = 0;
        loop {
            match self.post_once(body) {
                Err(e) if e.is_retryable() && attempt < self.retries => {
                    attempt += 1;
                    log::warn!("{e}; retrying ({attempt}/{})", self.retries);
                    std::thread::sleep(Duration::from_millis(200 * u64::from(attempt)));
                }
                other => return other,
            }
        }
    }

    fn post_once<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, HttpError> {
        let mut response = self.agent.post(&self.url).send_json(body).map_err(|e| match e {
            ureq::Error::StatusCode(status) => HttpError::Status {
                url: self.url.clone(),
                status,
            },
            other => HttpError::Transport {
                url: self.url.clone(),
                message: other.to_string(),
            },
        })?;
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| HttpError::Transport {
                url: self.url.clone(),
                message: e.to_string(),
            })?;
        serde_json::from_str(&text).map_err(|e| HttpError::Decode {
            url: self.url.clone(),
            message: e.to_string(),
        })
    }
}
