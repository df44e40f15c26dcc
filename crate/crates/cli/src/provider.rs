//! HTTP transport for the optional language-model providers.

use std::time::Duration;

use serde_json::{json, Value};
use transcend_lab::graph_gen::LlmTransport;

use crate::config::LlmSection;

pub const KEY_VAR: &str = "TRANSCEND_LAB_LLM_KEY";

pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    key: String,
}

impl HttpTransport {
    /// `None` when no API key is configured.
    pub fn from_env(llm: &LlmSection) -> Option<Self> {
        let key = std::env::var(KEY_VAR).ok().filter(|k| !k.trim().is_empty())?;
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(llm.timeout_secs))).build().into();
        Some(HttpTransport { agent, endpoint: llm.endpoint.clone(), model: llm.model.clone(), key })
    }
}

impl LlmTransport for HttpTransport {
    fn complete(&self, prompt: &str) -> Result<String, String> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 1.0,
        });
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(&body)
            .map_err(|e| e.to_string())?;
        let value: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| format!("unexpected response shape: {value}"))
    }
}
