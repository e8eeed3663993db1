//! Deterministic simulated backend.
//!
//! Every draw comes from a ChaCha stream seeded by
//! `sha256(run_seed, question_id, pass tag)`, so a completion depends only on
//! the question, the pass and the run seed, never on scheduling.
//!
//! Re-ask behaviour is defined relative to the first pass, which the re-ask
//! generator recomputes from its own seed:
//! - first pass wrong: with probability `uplift` the answer becomes a peaked
//!   distribution on gold, otherwise the first-pass distribution repeats;
//! - first pass right: with probability `flip` it becomes peaked on a wrong
//!   option; otherwise a known item stays peaked on gold and a lucky guess
//!   firms up with probability `uplift`.
//!
//! So the expected re-ask gain over a set of re-asked items is exactly
//! `uplift * wrong - flip * right`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    BackendKind, Candidate, CompletionRequest, FinishReason, InferenceError, ModelBackend, ModelOutput, PassKind,
    TokenLogprob,
};
use crate::dataset::option_letter;
use crate::metrics::{argmax_index, MAX_OPTIONS, MIN_OPTIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Difficulty is drawn from Beta(alpha, beta) on [0, 1].
    pub difficulty_alpha: f64,
    pub difficulty_beta: f64,
    /// p_know(d) = logistic(know_intercept - know_slope * d)
    pub know_intercept: f64,
    pub know_slope: f64,
    /// MSP band for confident answers.
    pub peaked_msp_low: f64,
    pub peaked_msp_high: f64,
    /// Dirichlet concentration for the residual mass of a confident answer.
    pub residual_concentration: f64,
    /// Dirichlet concentration for an unknown item's distribution.
    pub diffuse_concentration: f64,
    pub uplift: f64,
    pub flip: f64,
    /// Chance that the prompt-only pass spoils an otherwise correct answer.
    pub prompt_only_flip: f64,
    pub options: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            difficulty_alpha: 1.0,
            difficulty_beta: 1.0,
            know_intercept: 2.0,
            know_slope: 4.0,
            peaked_msp_low: 0.75,
            peaked_msp_high: 0.99,
            residual_concentration: 0.2,
            diffuse_concentration: 1.0,
            uplift: 0.6,
            flip: 0.015,
            prompt_only_flip: 0.05,
            options: 10,
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::InvalidSimConfig(m.to_string()));
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        if !positive(self.difficulty_alpha) || !positive(self.difficulty_beta) {
            return bad("difficulty shape parameters must be positive");
        }
        if !self.know_intercept.is_finite() || !self.know_slope.is_finite() {
            return bad("knowledge curve parameters must be finite");
        }
        if !(self.peaked_msp_low > 0.5 && self.peaked_msp_low <= self.peaked_msp_high && self.peaked_msp_high < 1.0) {
            return bad("peaked MSP band must satisfy 0.5 < low <= high < 1");
        }
        if !positive(self.residual_concentration) || !positive(self.diffuse_concentration) {
            return bad("concentrations must be positive");
        }
        if !prob(self.uplift) || !prob(self.flip) || !prob(self.prompt_only_flip) {
            return bad("uplift, flip and prompt_only_flip must lie in [0, 1]");
        }
        if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&self.options) {
            return bad("option count must be between 2 and 26");
        }
        Ok(())
    }

    pub fn p_know(&self, difficulty: f64) -> f64 {
        logistic(self.know_intercept - self.know_slope * difficulty)
    }
}

/// Hidden ground truth for one synthetic question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimQuestion {
    pub id: String,
    pub k: usize,
    pub gold: usize,
    pub difficulty: f64,
}

impl SimQuestion {
    /// Draws gold and difficulty as a function of (seed, id).
    pub fn draw(id: &str, cfg: &SimConfig, seed: u64) -> Result<Self, InferenceError> {
        cfg.validate()?;
        let mut rng = seeded_stream(seed, id, "item");
        let gold = rng.random_range(0..cfg.options);
        let beta = Beta::new(cfg.difficulty_alpha, cfg.difficulty_beta)
            .map_err(|e| InferenceError::InvalidSimConfig(e.to_string()))?;
        Ok(Self {
            id: id.to_string(),
            k: cfg.options,
            gold,
            difficulty: beta.sample(&mut rng),
        })
    }
}

pub fn write_truth(path: &Path, truth: &[SimQuestion]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for q in truth {
        serde_json::to_writer(&mut w, q)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_truth(path: &Path) -> Result<Vec<SimQuestion>, InferenceError> {
    let file = File::open(path)
        .map_err(|e| InferenceError::InvalidSimConfig(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| InferenceError::InvalidSimConfig(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: SimQuestion = serde_json::from_str(&line)
            .map_err(|e| InferenceError::InvalidSimConfig(format!("truth line {}: {e}", i + 1)))?;
        out.push(q);
    }
    Ok(out)
}

/// ChaCha stream keyed by `sha256(seed, id, tag)`.
pub fn seeded_stream(seed: u64, id: &str, tag: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    h.update([0]);
    h.update(tag.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn dirichlet(rng: &mut ChaCha8Rng, n: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("validated concentration");
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|x| x / total).collect();
        }
    }
}

fn peaked(rng: &mut ChaCha8Rng, cfg: &SimConfig, k: usize, target: usize) -> Vec<f64> {
    let top = rng.random_range(cfg.peaked_msp_low..=cfg.peaked_msp_high);
    let rest = dirichlet(rng, k - 1, cfg.residual_concentration);
    let mut probs = Vec::with_capacity(k);
    let mut others = rest.into_iter();
    for i in 0..k {
        if i == target {
            probs.push(top);
        } else {
            probs.push((1.0 - top) * others.next().unwrap());
        }
    }
    probs
}

fn diffuse(rng: &mut ChaCha8Rng, cfg: &SimConfig, k: usize) -> Vec<f64> {
    dirichlet(rng, k, cfg.diffuse_concentration)
}

fn wrong_option(rng: &mut ChaCha8Rng, k: usize, gold: usize) -> usize {
    let r = rng.random_range(0..k - 1);
    if r >= gold {
        r + 1
    } else {
        r
    }
}

/// First-pass state: the answer distribution and whether the item was known.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstPassDraw {
    pub probs: Vec<f64>,
    pub known: bool,
}

impl FirstPassDraw {
    pub fn answer(&self) -> usize {
        argmax_index(&self.probs)
    }
}

pub fn first_pass_draw(q: &SimQuestion, cfg: &SimConfig, seed: u64) -> FirstPassDraw {
    let mut rng = seeded_stream(seed, &q.id, PassKind::First.tag());
    let known = rng.random::<f64>() < cfg.p_know(q.difficulty);
    let probs = if known {
        peaked(&mut rng, cfg, q.k, q.gold)
    } else {
        diffuse(&mut rng, cfg, q.k)
    };
    FirstPassDraw { probs, known }
}

/// The option distribution the simulator would emit for this pass.
pub fn sim_distribution(q: &SimQuestion, pass: PassKind, cfg: &SimConfig, seed: u64) -> Vec<f64> {
    let first = first_pass_draw(q, cfg, seed);
    match pass {
        PassKind::First => first.probs,
        PassKind::Reask => {
            let mut rng = seeded_stream(seed, &q.id, PassKind::Reask.tag());
            let (flip, improve) = (rng.random::<f64>(), rng.random::<f64>());
            if first.answer() == q.gold {
                if flip < cfg.flip {
                    let w = wrong_option(&mut rng, q.k, q.gold);
                    peaked(&mut rng, cfg, q.k, w)
                } else if first.known || improve < cfg.uplift {
                    peaked(&mut rng, cfg, q.k, q.gold)
                } else {
                    first.probs
                }
            } else if improve < cfg.uplift {
                peaked(&mut rng, cfg, q.k, q.gold)
            } else {
                first.probs
            }
        }
        PassKind::PromptOnly => {
            let mut rng = seeded_stream(seed, &q.id, PassKind::PromptOnly.tag());
            if first.answer() == q.gold && rng.random::<f64>() < cfg.prompt_only_flip {
                let w = wrong_option(&mut rng, q.k, q.gold);
                peaked(&mut rng, cfg, q.k, w)
            } else {
                first.probs
            }
        }
    }
}

/// Renders a distribution as a completion ending in "The answer is (X)"
/// with the letter position carrying up to `top_logprobs` candidates.
pub fn render_output(probs: &[f64], top_logprobs: usize) -> ModelOutput {
    let answer = argmax_index(probs);
    let letter = option_letter(answer).to_string();
    let plain = |t: &str| TokenLogprob {
        token: t.to_string(),
        logprob: 0.0,
        top_logprobs: vec![Candidate {
            token: t.to_string(),
            logprob: 0.0,
        }],
    };
    let mut cands: Vec<(usize, f64)> = probs
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(i, p)| (i, p.ln()))
        .collect();
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    cands.truncate(top_logprobs);
    let letter_pos = TokenLogprob {
        token: letter.clone(),
        logprob: probs[answer].ln(),
        top_logprobs: cands
            .into_iter()
            .map(|(i, lp)| Candidate {
                token: option_letter(i).to_string(),
                logprob: lp,
            })
            .collect(),
    };
    let tokens = vec![
        plain("Working through the options step by step."),
        plain(" The answer is"),
        plain(" ("),
        letter_pos,
        plain(")"),
    ];
    ModelOutput {
        text: tokens.iter().map(|t| t.token.as_str()).collect(),
        token_logprobs: tokens,
        finish_reason: FinishReason::Stop,
    }
}

pub fn sim_generate(
    q: &SimQuestion,
    pass: PassKind,
    cfg: &SimConfig,
    seed: u64,
    top_logprobs: usize,
) -> Result<ModelOutput, InferenceError> {
    cfg.validate()?;
    Ok(render_output(&sim_distribution(q, pass, cfg, seed), top_logprobs))
}

pub struct SimBackend {
    cfg: SimConfig,
    seed: u64,
    truth: HashMap<String, SimQuestion>,
}

impl SimBackend {
    pub fn new(cfg: SimConfig, seed: u64, truth: Vec<SimQuestion>) -> Result<Self, InferenceError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            seed,
            truth: truth.into_iter().map(|q| (q.id.clone(), q)).collect(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }
}

impl ModelBackend for SimBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Simulated
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<ModelOutput, InferenceError> {
        let q = self
            .truth
            .get(req.question_id)
            .ok_or_else(|| InferenceError::UnknownQuestion(req.question_id.to_string()))?;
        Ok(render_output(
            &sim_distribution(q, req.pass, &self.cfg, self.seed),
            req.params.top_logprobs as usize,
        ))
    }
}
