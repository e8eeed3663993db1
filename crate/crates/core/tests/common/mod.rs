#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use chrono::DateTime;
use reask_core::harness::{run, write_synth, BackendConfig, RunConfig, RunSummary};
use reask_core::inference::sim::SimConfig;
use reask_core::inference::RetryPolicy;
use reask_core::metrics::{normalize_option_weights, ScoringValues, UncertaintyMetrics, PROBABILITY_FLOOR};
use reask_core::policy::{should_reask, TriggerThresholds};
use reask_core::runlog::{resolve_final_answer, DistributionTrace, InferenceRecord, PassTrace, RunMode};
use tempfile::TempDir;

pub struct SimFixture {
    pub dir: TempDir,
    pub dataset: PathBuf,
    pub truth: PathBuf,
    pub cfg: SimConfig,
    pub seed: u64,
}

impl SimFixture {
    pub fn new(cfg: SimConfig, n: usize, seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let dataset = dir.path().join("dataset.jsonl");
        let truth = dir.path().join("truth.jsonl");
        write_synth(&cfg, n, seed, &dataset, &truth).unwrap();
        Self {
            dir,
            dataset,
            truth,
            cfg,
            seed,
        }
    }

    pub fn config(&self, mode: RunMode, name: &str) -> RunConfig {
        let out = self.dir.path().join(name);
        let backend = BackendConfig::Sim {
            truth: self.truth.clone(),
            config: self.cfg.clone(),
        };
        let mut rc = RunConfig::new(mode, self.dataset.clone(), backend, out);
        rc.seed = self.seed;
        rc.quiet = true;
        rc.retry = RetryPolicy::no_delay(0);
        rc
    }

    pub fn run(&self, mode: RunMode, thresholds: TriggerThresholds, name: &str) -> (RunSummary, PathBuf) {
        let mut rc = self.config(mode, name);
        rc.thresholds = thresholds;
        let summary = run(&rc).unwrap();
        (summary, rc.out)
    }
}

pub fn pass_trace(probs: &[f64], answer: Option<usize>, gold: usize) -> PassTrace {
    let d = normalize_option_weights(probs, probs.len(), PROBABILITY_FLOOR).unwrap();
    PassTrace {
        prompt_hash: "0".repeat(64),
        output_text: match answer {
            Some(a) => format!("The answer is ({})", (b'A' + a as u8) as char),
            None => "no idea".into(),
        },
        extracted_answer: answer,
        metrics: UncertaintyMetrics::of(&d),
        scoring: ScoringValues::of(&d, gold, PROBABILITY_FLOOR).unwrap(),
        distribution: DistributionTrace::Observed(d),
        timestamp: DateTime::from_timestamp(1_750_000_000, 0).unwrap(),
        latency_ms: 0,
    }
}

pub fn build_record(
    id: &str,
    subject: &str,
    gold: usize,
    pass1: PassTrace,
    pass2: Option<PassTrace>,
    t: TriggerThresholds,
) -> InferenceRecord {
    let final_answer = resolve_final_answer(&pass1, pass2.as_ref());
    InferenceRecord {
        question_id: id.into(),
        subject: subject.into(),
        k: pass1.distribution.k(),
        gold,
        trigger_fired: should_reask(&pass1.metrics, &t),
        thresholds: t,
        baseline_correct: pass1.extracted_answer == Some(gold),
        final_correct: final_answer == Some(gold),
        final_answer,
        pass1,
        pass2,
        flags: BTreeSet::new(),
    }
}

fn peaked(k: usize, at: usize) -> Vec<f64> {
    let mut p = vec![0.02 / (k - 1) as f64; k];
    p[at] = 0.98;
    p
}

fn diffuse(k: usize, at: usize) -> Vec<f64> {
    let mut p = vec![0.6 / (k - 1) as f64; k];
    p[at] = 0.4;
    p
}

/// A TR run with the published aggregate shape: 4,685 confident records
/// (4,175 correct) and 7,347 re-asked ones with b=2912, c=107,
/// 3,024 stayed correct and 1,304 stayed wrong.
pub fn published_shape_tr_records() -> Vec<InferenceRecord> {
    let t = TriggerThresholds::default();
    let k = 10;
    let gold = 0;
    let mut out = Vec::with_capacity(12_032);
    let mut push = |first: usize, second: Option<usize>| {
        let i = out.len();
        let p1 = match second {
            None => pass_trace(&peaked(k, first), Some(first), gold),
            Some(_) => pass_trace(&diffuse(k, first), Some(first), gold),
        };
        let p2 = second.map(|a| pass_trace(&peaked(k, a), Some(a), gold));
        out.push(build_record(&format!("q{i:05}"), "all", gold, p1, p2, t));
    };
    for _ in 0..4175 {
        push(0, None);
    }
    for _ in 0..(4685 - 4175) {
        push(1, None);
    }
    for _ in 0..2912 {
        push(1, Some(0));
    }
    for _ in 0..107 {
        push(0, Some(1));
    }
    for _ in 0..3024 {
        push(0, Some(0));
    }
    for _ in 0..1304 {
        push(1, Some(2));
    }
    out
}
