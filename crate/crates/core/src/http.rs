//! Shared HTTP plumbing: JSON POST with bounded exponential-backoff retries.

use std::time::Duration;

use crate::error::{Error, Result};

/// Retry budget for transient failures (timeouts, connection errors, 5xx).
///
/// Attempt n sleeps `base_delay * 2^(n-1)` before retrying; non-5xx HTTP
/// statuses fail immediately.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_millis(100) }
    }
}

const BODY_EXCERPT_LEN: usize = 200;

fn excerpt(body: &str) -> String {
    if body.len() <= BODY_EXCERPT_LEN {
        body.to_string()
    } else {
        let mut end = BODY_EXCERPT_LEN;
        while !body.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &body[..end])
    }
}

pub(crate) struct JsonClient {
    client: reqwest::blocking::Client,
    policy: RetryPolicy,
}

impl JsonClient {
    pub fn new(policy: RetryPolicy) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::Network(e.to_string()))?;
        Ok(Self { client, policy })
    }

    /// POSTs `body` as JSON, optionally with a bearer token, and returns the
    /// parsed JSON response. Retries transport errors and 5xx responses up to
    /// the policy's attempt budget.
    pub fn post_json<T: serde::Serialize>(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &T,
    ) -> Result<serde_json::Value> {
        let mut last: Option<Error> = None;
        for attempt in 1..=self.policy.max_attempts {
            if attempt > 1 {
                std::thread::sleep(self.policy.base_delay * 2u32.pow(attempt - 2));
            }
            let mut request = self.client.post(url).json(body);
            if let Some(token) = bearer {
                request = request.bearer_auth(token);
            }
            match request.send() {
                Err(e) => last = Some(Error::Network(e.to_string())),
                Ok(response) => {
                    let status = response.status();
                    if status.is_server_error() {
                        let body = response.text().unwrap_or_default();
                        last = Some(Error::Http { status: status.as_u16(), body: excerpt(&body) });
                        continue;
                    }
                    if !status.is_success() {
                        let body = response.text().unwrap_or_default();
                        return Err(Error::Http { status: status.as_u16(), body: excerpt(&body) });
                    }
                    let text = response.text().map_err(|e| Error::Network(e.to_string()))?;
                    return serde_json::from_str(&text)
                        .map_err(|e| Error::Protocol(format!("invalid JSON response: {e}")));
                }
            }
        }
        Err(last.unwrap_or_else(|| Error::Network("no attempt made".into())))
    }
}
