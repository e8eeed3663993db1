//! Answer-letter extraction from chain-of-thought text and option
//! distribution readout from token logprobs.

use std::sync::OnceLock;

use regex::Regex;

use super::{InferenceError, ModelOutput};
use crate::dataset::letter_index;
use crate::metrics::{normalize_option_weights, AnswerDistribution, MetricsError};

/// No answer letter could be recovered. A value, not a fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractionFailure;

fn scaffold() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i:the answer is)[ \t]*(?::[ \t]*)?\(?[ \t]*([A-Z])").unwrap())
}

fn bracketed_letter() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(([A-Z])\)").unwrap())
}

/// Byte offset and option index of the letter in the last valid
/// `The answer is (X)` match.
pub fn locate_answer_letter(text: &str, k: usize) -> Option<(usize, usize)> {
    scaffold()
        .captures_iter(text)
        .filter_map(|c| {
            let m = c.get(1)?;
            let next = text[m.end()..].chars().next();
            if next.is_some_and(|ch| ch.is_alphanumeric()) {
                return None;
            }
            let idx = letter_index(m.as_str().chars().next()?)?;
            (idx < k).then_some((m.start(), idx))
        })
        .last()
}

/// Fallback when no scaffold matched: on the last non-empty line, the last
/// bracketed letter like `(C)`, or a line that is just a letter once
/// markdown and punctuation are stripped (`C`, `**C.**`, `Answer: C`).
fn final_line_letter(text: &str, k: usize) -> Option<usize> {
    let line = text.lines().rev().find(|l| !l.trim().is_empty())?;
    let valid = |c: char| letter_index(c).filter(|&i| i < k);
    if let Some(i) = bracketed_letter()
        .captures_iter(line)
        .filter_map(|c| valid(c[1].chars().next()?))
        .last()
    {
        return Some(i);
    }
    let stripped = line.trim_matches(|c: char| c.is_whitespace() || "*_`.:()[]".contains(c));
    let stripped = stripped
        .strip_prefix("Answer")
        .or_else(|| stripped.strip_prefix("answer"))
        .map(|s| s.trim_start_matches(|c: char| c.is_whitespace() || ":*_".contains(c)))
        .unwrap_or(stripped);
    let mut chars = stripped.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => valid(c),
        _ => None,
    }
}

pub fn extract_answer(text: &str, k: usize) -> Result<usize, ExtractionFailure> {
    locate_answer_letter(text, k)
        .map(|(_, i)| i)
        .or_else(|| final_line_letter(text, k))
        .ok_or(ExtractionFailure)
}

/// Maps a candidate token to an option letter after stripping spaces,
/// parentheses, periods and colons.
pub fn token_to_letter(token: &str) -> Option<usize> {
    let t = token.trim_matches(|c| matches!(c, ' ' | '(' | ')' | '.' | ':'));
    let mut chars = t.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => letter_index(c),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionReadout {
    pub distribution: AnswerDistribution,
    /// No scaffold match, so the uniform distribution was substituted.
    pub uniform_fallback: bool,
    /// The located letter differs from the caller's parsed answer.
    pub hint_mismatch: bool,
}

/// Reads the option distribution at the token holding the final answer
/// letter.
pub fn extract_option_distribution(
    output: &ModelOutput,
    answer_hint: Option<usize>,
    k: usize,
    floor: f64,
) -> Result<OptionReadout, InferenceError> {
    if output.token_logprobs.is_empty() {
        return Err(InferenceError::MissingLogprobs("no token logprobs in output".into()));
    }
    // Offsets are taken in the concatenated token text so they line up with positions.
    let mut joined = String::new();
    let mut starts = Vec::with_capacity(output.token_logprobs.len());
    for t in &output.token_logprobs {
        starts.push(joined.len());
        joined.push_str(&t.token);
    }
    let Some((offset, letter)) = locate_answer_letter(&joined, k) else {
        return Ok(OptionReadout {
            distribution: AnswerDistribution::uniform(k).map_err(InferenceError::Distribution)?,
            uniform_fallback: true,
            hint_mismatch: false,
        });
    };
    let pos = starts.partition_point(|&s| s <= offset) - 1;
    let at = &output.token_logprobs[pos];
    if at.top_logprobs.is_empty() {
        return Err(InferenceError::MissingLogprobs(format!("no candidates at token position {pos}")));
    }
    let mut best = vec![f64::NEG_INFINITY; k];
    let sampled = std::iter::once((at.token.as_str(), at.logprob));
    let candidates = at.top_logprobs.iter().map(|c| (c.token.as_str(), c.logprob));
    for (token, lp) in sampled.chain(candidates) {
        if let Some(i) = token_to_letter(token).filter(|&i| i < k) {
            if lp > best[i] {
                best[i] = lp;
            }
        }
    }
    let weights: Vec<f64> = best.iter().map(|&lp| if lp.is_finite() { lp.exp() } else { 0.0 }).collect();
    let distribution = normalize_option_weights(&weights, k, floor).map_err(|e| match e {
        MetricsError::DegenerateDistribution => {
            InferenceError::MissingLogprobs(format!("no option letters among candidates at position {pos}"))
        }
        other => InferenceError::Distribution(other),
    })?;
    Ok(OptionReadout {
        distribution,
        uniform_fallback: false,
        hint_mismatch: answer_hint.is_some_and(|h| h != letter),
    })
}
