//! Chat-completions HTTP backend.

use std::time::Duration;

use serde_json::{json, Value};

use super::{
    BackendKind, Candidate, CompletionRequest, FinishReason, InferenceError, InferenceParams, ModelBackend,
    ModelOutput, PromptPair, TokenLogprob,
};

pub const DEFAULT_API_KEY_ENV: &str = "RI_API_KEY";

pub fn build_request_body(prompt: &PromptPair, params: &InferenceParams) -> Value {
    let mut body = json!({
        "model": params.model_name,
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": prompt.user},
        ],
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
        "top_p": params.top_p,
        "frequency_penalty": params.frequency_penalty,
        "presence_penalty": params.presence_penalty,
        "logprobs": params.logprobs_enabled,
    });
    if params.logprobs_enabled {
        body["top_logprobs"] = json!(params.top_logprobs);
    }
    body
}

fn protocol(msg: impl Into<String>) -> InferenceError {
    InferenceError::Protocol(msg.into())
}

fn parse_candidate(v: &Value) -> Result<Candidate, InferenceError> {
    Ok(Candidate {
        token: v["token"].as_str().ok_or_else(|| protocol("candidate without token"))?.to_string(),
        logprob: v["logprob"].as_f64().ok_or_else(|| protocol("candidate without logprob"))?,
    })
}

/// Parses `choices[0]` of a chat-completions response.
pub fn parse_response(body: &Value) -> Result<ModelOutput, InferenceError> {
    let choice = body["choices"]
        .get(0)
        .ok_or_else(|| protocol("response has no choices"))?;
    let text = choice["message"]["content"]
        .as_str()
        .ok_or_else(|| protocol("choice has no message content"))?
        .to_string();
    let finish_reason = match choice.get("finish_reason") {
        Some(v) if !v.is_null() => serde_json::from_value(v.clone()).unwrap_or(FinishReason::Other),
        _ => FinishReason::Other,
    };
    let mut token_logprobs = Vec::new();
    if let Some(content) = choice["logprobs"]["content"].as_array() {
        for entry in content {
            let head = parse_candidate(entry)?;
            let top_logprobs = match entry.get("top_logprobs").and_then(Value::as_array) {
                Some(list) => list.iter().map(parse_candidate).collect::<Result<_, _>>()?,
                None => Vec::new(),
            };
            token_logprobs.push(TokenLogprob {
                token: head.token,
                logprob: head.logprob,
                top_logprobs,
            });
        }
    }
    Ok(ModelOutput {
        text,
        token_logprobs,
        finish_reason,
    })
}

pub struct LiveBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl LiveBackend {
    /// Reads the API key from `api_key_env`. A missing key is allowed for
    /// local endpoints; no Authorization header is sent then.
    pub fn new(endpoint: &str, api_key_env: &str, timeout: Duration) -> Self {
        let api_key = std::env::var(api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{api_key_env} is not set; sending requests without credentials");
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            endpoint: endpoint.to_string(),
            api_key,
        }
    }
}

impl ModelBackend for LiveBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Live
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<ModelOutput, InferenceError> {
        let body = build_request_body(req.prompt, req.params);
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let transport = |e: ureq::Error| InferenceError::Transport {
            attempts: 1,
            message: e.to_string(),
        };
        let mut resp = call.send_json(&body).map_err(transport)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(transport)?;
        if !(200..300).contains(&status) {
            return Err(InferenceError::Http { status, body: text });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| protocol(format!("invalid JSON: {e}")))?;
        parse_response(&value)
    }
}
