//! Blocking JSON-over-HTTP with bounded retries, shared by the remote
//! embedder and the remote LLM gateway.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub struct JsonClient {
    agent: ureq::Agent,
    url: String,
    retries: usize,
    bearer: Option<String>,
}

impl JsonClient {
    pub fn new(url: String, timeout_secs: u64, retries: usize, bearer: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(timeout_secs.max(1))))
            .http_status_as_error(true)
            .build()
            .into();
        JsonClient {
            agent,
            url,
            retries,
            bearer,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// POSTs `body`, retrying transport and 5xx failures up to `retries` extra
    /// times with linear backoff.
    pub fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R> {
        let attempts = self.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 * attempt as u64));
            }
            let mut req = self.agent.post(&self.url);
            if let Some(token) = &self.bearer {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    return resp.body_mut().read_json::<R>().map_err(|e| Error::Transport {
                        attempts: attempt + 1,
                        message: format!("bad response body: {e}"),
                    });
                }
                Err(ureq::Error::StatusCode(code)) if code < 500 => {
                    return Err(Error::Transport {
                        attempts: attempt + 1,
                        message: format!("HTTP {code} from {}", self.url),
                    });
                }
                Err(e) => {
                    log::warn!("POST {} failed (attempt {}): {e}", self.url, attempt + 1);
                    last = e.to_string();
                }
            }
        }
        Err(Error::Transport {
            attempts,
            message: last,
        })
    }
}
