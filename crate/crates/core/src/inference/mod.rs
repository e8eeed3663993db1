//! Model backends, prompt construction and answer readout.
//!
//! A [`ModelBackend`] turns a [`CompletionRequest`] into a [`ModelOutput`].
//! Two backends ship: a chat-completions HTTP client ([`live`]) and a
//! deterministic simulator ([`sim`]). [`InferenceClient`] wraps either with a
//! retry policy and a hard call budget.

pub mod extract;
pub mod live;
pub mod prompt;
pub mod sim;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricsError;

pub use extract::{extract_answer, extract_option_distribution, ExtractionFailure, OptionReadout};
pub use prompt::{build_first_pass_prompt, build_prompt_only_prompt, build_reask_prompt, PromptPair};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("call budget of {cap} completions exhausted")]
    BudgetExceeded { cap: usize },
    #[error("missing logprobs: {0}")]
    MissingLogprobs(String),
    #[error("cannot build prompt: {0}")]
    PromptConstruction(String),
    #[error("invalid simulator config: {0}")]
    InvalidSimConfig(String),
    #[error("simulator has no ground truth for question {0}")]
    UnknownQuestion(String),
    #[error(transparent)]
    Distribution(#[from] MetricsError),
}

impl InferenceError {
    /// Only transport-level failures are retried.
    pub fn is_transient(&self) -> bool {
        match self {
            InferenceError::Transport { .. } => true,
            InferenceError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

/// Decoding parameters sent with every completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceParams {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub logprobs_enabled: bool,
    pub top_logprobs: u32,
}

impl Default for InferenceParams {
    fn default() -> Self {
        Self {
            model_name: "deepseek-v3.2".into(),
            temperature: 0.0,
            max_tokens: 4000,
            top_p: 1.0,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
            logprobs_enabled: true,
            top_logprobs: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub token: String,
    pub logprob: f64,
}

/// One generated token with its top-logprob alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    pub top_logprobs: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    ContentFilter,
    #[serde(other)]
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub text: String,
    pub token_logprobs: Vec<TokenLogprob>,
    pub finish_reason: FinishReason,
}

impl ModelOutput {
    /// Candidate lists must not exceed the requested `top_logprobs`.
    pub fn check_candidate_limit(&self, top_logprobs: u32) -> Result<(), InferenceError> {
        match self
            .token_logprobs
            .iter()
            .position(|t| t.top_logprobs.len() > top_logprobs as usize)
        {
            Some(pos) => Err(InferenceError::Protocol(format!(
                "position {pos} has more than {top_logprobs} candidates"
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassKind {
    First,
    Reask,
    PromptOnly,
}

impl PassKind {
    pub fn tag(self) -> &'static str {
        match self {
            PassKind::First => "first",
            PassKind::Reask => "reask",
            PassKind::PromptOnly => "prompt_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    Simulated,
}

/// Everything a backend needs for one completion. `question_id` and `pass`
/// are routing metadata and never reach a live endpoint.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub question_id: &'a str,
    pub pass: PassKind,
    pub prompt: &'a PromptPair,
    pub params: &'a InferenceParams,
}

pub trait ModelBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<ModelOutput, InferenceError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first failed attempt.
    pub max_retries: usize,
    /// Delay before the first retry; doubles each time.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: usize) -> Self {
        Self {
            max_retries,
            base_delay: Duration::ZERO,
        }
    }

    pub fn delay_before_retry(&self, retry: usize) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry as u32)
    }
}

/// Hard cap on backend calls, retries included.
#[derive(Debug)]
pub struct CallBudget {
    cap: usize,
    used: AtomicUsize,
}

impl CallBudget {
    pub fn new(cap: usize) -> Self {
        Self {
            cap,
            used: AtomicUsize::new(0),
        }
    }

    /// Default cap: twice the dataset size plus 10%.
    pub fn default_for(dataset_len: usize) -> Self {
        Self::new((dataset_len * 22).div_ceil(10))
    }

    pub fn try_acquire(&self) -> bool {
        self.used
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |u| (u < self.cap).then_some(u + 1))
            .is_ok()
    }

    pub fn used(&self) -> usize {
        self.used.load(Ordering::Acquire)
    }

    pub fn cap(&self) -> usize {
        self.cap
    }
}

/// A backend plus retry policy and call budget. Shareable across workers.
#[derive(Clone)]
pub struct InferenceClient {
    backend: Arc<dyn ModelBackend>,
    retry: RetryPolicy,
    budget: Arc<CallBudget>,
}

impl InferenceClient {
    pub fn new(backend: Arc<dyn ModelBackend>, retry: RetryPolicy, budget: CallBudget) -> Self {
        Self {
            backend,
            retry,
            budget: Arc::new(budget),
        }
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn calls_made(&self) -> usize {
        self.budget.used()
    }

    pub fn budget(&self) -> &CallBudget {
        &self.budget
    }

    pub fn complete(&self, req: &CompletionRequest<'_>) -> Result<ModelOutput, InferenceError> {
        let mut attempt = 0;
        loop {
            if !self.budget.try_acquire() {
                return Err(InferenceError::BudgetExceeded { cap: self.budget.cap() });
            }
            attempt += 1;
            match self.backend.complete(req) {
                Ok(out) => {
                    if req.params.logprobs_enabled {
                        out.check_candidate_limit(req.params.top_logprobs)?;
                    }
                    return Ok(out);
                }
                Err(e) if e.is_transient() && attempt <= self.retry.max_retries => {
                    log::warn!("attempt {attempt} for {} failed: {e}; retrying", req.question_id);
                    thread::sleep(self.retry.delay_before_retry(attempt - 1));
                }
                Err(InferenceError::Transport { message, .. }) => {
                    return Err(InferenceError::Transport {
                        attempts: attempt,
                        message,
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}
