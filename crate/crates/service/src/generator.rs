//! Adapter for an external generation backend.
//!
//! Protocol: `POST <endpoint>` with a JSON [`GenerationRequest`]; the reply
//! is `{"candidates": [text, ...]}`. One round trip, bounded by the timeout.

use std::time::Duration;

use agentcoach_core::respond::{GenerateError, GenerationRequest, ResponseGenerator};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub candidates: Vec<String>,
}

pub struct HttpGenerator {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpGenerator {
    pub fn new(endpoint: String, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        HttpGenerator { endpoint, agent }
    }
}

impl ResponseGenerator for HttpGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<String>, GenerateError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(request)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => GenerateError::Timeout,
                other => GenerateError::Unavailable(other.to_string()),
            })?;
        let body: GenerationResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| GenerateError::Malformed(e.to_string()))?;
        if body.candidates.len() != request.n || body.candidates.iter().any(|c| c.trim().is_empty()) {
            return Err(GenerateError::Malformed(format!(
                "expected {} non-empty candidates, got {:?}",
                request.n, body.candidates
            )));
        }
        Ok(body.candidates)
    }
}
