//! Run orchestration: the four run modes, offline sweeps, threshold
//! transfer, reports, synthetic datasets and log verification.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::Utc;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AnalysisError, Report};
use crate::dataset::{load_dataset, option_letter, Dataset, DatasetError, DatasetFormat, Question};
use crate::inference::live::{LiveBackend, DEFAULT_API_KEY_ENV};
use crate::inference::prompt::{template_hashes, PromptPair};
use crate::inference::sim::{read_truth, seeded_stream, write_truth, SimBackend, SimConfig, SimQuestion};
use crate::inference::{
    build_first_pass_prompt, build_prompt_only_prompt, build_reask_prompt, extract_answer,
    extract_option_distribution, CallBudget, CompletionRequest, InferenceClient, InferenceError, InferenceParams,
    ModelBackend, PassKind, RetryPolicy,
};
use crate::metrics::{ScoringValues, UncertaintyMetrics, PROBABILITY_FLOOR};
use crate::policy::{
    build_sweep_grid, evaluate_policy_offline, pareto_frontier, should_reask, transfer_entropy_threshold, PolicyError,
    SweepPoint, TriggerThresholds,
};
use crate::runlog::{
    load_runlog, resolve_final_answer, resume_plan, verify_runlog, DistributionTrace, InferenceRecord, LoadOptions,
    PassTrace, RecordFlag, RunLog, RunLogError, RunManifest, RunMode, VerifyReport, SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    RunLog(#[from] RunLogError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
}

impl HarnessError {
    /// 2 validation, 3 backend or budget, 4 integrity.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Dataset(_)
            | HarnessError::Policy(_)
            | HarnessError::Analysis(_)
            | HarnessError::Io { .. }
            | HarnessError::Config(_) => 2,
            HarnessError::Inference(InferenceError::InvalidSimConfig(_)) => 2,
            HarnessError::Inference(InferenceError::PromptConstruction(_)) => 2,
            HarnessError::Inference(_) => 3,
            HarnessError::RunLog(RunLogError::Io { .. }) => 2,
            HarnessError::RunLog(_) | HarnessError::Integrity(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BackendConfig {
    Live {
        endpoint: String,
        api_key_env: String,
        timeout_secs: u64,
    },
    Sim {
        truth: PathBuf,
        config: SimConfig,
    },
}

impl BackendConfig {
    pub fn live(endpoint: &str) -> Self {
        BackendConfig::Live {
            endpoint: endpoint.to_string(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_secs: 600,
        }
    }

    fn kind(&self) -> crate::inference::BackendKind {
        match self {
            BackendConfig::Live { .. } => crate::inference::BackendKind::Live,
            BackendConfig::Sim { .. } => crate::inference::BackendKind::Simulated,
        }
    }

    fn build(&self, seed: u64) -> Result<Arc<dyn ModelBackend>> {
        Ok(match self {
            BackendConfig::Live {
                endpoint,
                api_key_env,
                timeout_secs,
            } => Arc::new(LiveBackend::new(endpoint, api_key_env, Duration::from_secs(*timeout_secs))),
            BackendConfig::Sim { truth, config } => {
                Arc::new(SimBackend::new(config.clone(), seed, read_truth(truth)?)?)
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: RunMode,
    pub thresholds: TriggerThresholds,
    pub params: InferenceParams,
    pub dataset: PathBuf,
    pub dataset_format: DatasetFormat,
    pub backend: BackendConfig,
    pub parallel: usize,
    /// Total completions allowed; defaults to 2.2 x dataset size.
    pub budget: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
    pub probability_floor: f64,
    pub retry: RetryPolicy,
    pub quiet: bool,
}

impl RunConfig {
    pub fn new(mode: RunMode, dataset: PathBuf, backend: BackendConfig, out: PathBuf) -> Self {
        Self {
            mode,
            thresholds: TriggerThresholds::default(),
            params: InferenceParams::default(),
            dataset,
            dataset_format: DatasetFormat::CanonicalLines,
            backend,
            parallel: 4,
            budget: None,
            seed: 0,
            out,
            probability_floor: PROBABILITY_FLOOR,
            retry: RetryPolicy::default(),
            quiet: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_id: String,
    pub processed: usize,
    pub resumed_from: usize,
    pub backend_calls: usize,
    pub report: Report,
}

pub fn build_manifest(config: &RunConfig, dataset: &Dataset) -> RunManifest {
    let digest = dataset.digest();
    let backend_kind = config.backend.kind();
    RunManifest {
        schema_version: SCHEMA_VERSION,
        run_id: RunManifest::derive_run_id(config.mode, &digest, config.seed, &config.thresholds, backend_kind),
        mode: config.mode,
        params: config.params.clone(),
        thresholds: config.thresholds,
        dataset_digest: digest,
        template_hashes: template_hashes(),
        seed: config.seed,
        backend_kind,
        probability_floor: config.probability_floor,
    }
}

/// Executes one pass and turns the output into a trace.
fn run_pass(
    client: &InferenceClient,
    q: &Question,
    pass: PassKind,
    prompt: &PromptPair,
    params: &InferenceParams,
    floor: f64,
) -> std::result::Result<(PassTrace, Vec<RecordFlag>), InferenceError> {
    let started = Instant::now();
    let timestamp = Utc::now();
    let out = client.complete(&CompletionRequest {
        question_id: &q.id,
        pass,
        prompt,
        params,
    })?;
    let latency_ms = started.elapsed().as_millis() as u64;
    let k = q.k();
    let extracted = extract_answer(&out.text, k).ok();
    let readout = extract_option_distribution(&out, extracted, k, floor)?;
    let second = pass == PassKind::Reask;
    let mut flags = Vec::new();
    if extracted.is_none() {
        flags.push(if second { RecordFlag::Pass2ExtractionFailed } else { RecordFlag::Pass1ExtractionFailed });
    }
    if readout.uniform_fallback {
        flags.push(if second { RecordFlag::Pass2UniformFallback } else { RecordFlag::Pass1UniformFallback });
    }
    if readout.hint_mismatch {
        flags.push(RecordFlag::AnswerTokenMismatch);
    }
    let d = readout.distribution;
    let trace = PassTrace {
        prompt_hash: prompt.hash(),
        output_text: out.text,
        extracted_answer: extracted,
        metrics: UncertaintyMetrics::of(&d),
        scoring: ScoringValues::of(&d, q.gold, floor)?,
        distribution: if readout.uniform_fallback {
            DistributionTrace::UniformFallback { k }
        } else {
            DistributionTrace::Observed(d)
        },
        timestamp,
        latency_ms,
    };
    Ok((trace, flags))
}

/// Runs one question under `mode` and assembles its record.
pub fn answer_question(
    client: &InferenceClient,
    q: &Question,
    mode: RunMode,
    thresholds: &TriggerThresholds,
    params: &InferenceParams,
    floor: f64,
) -> std::result::Result<InferenceRecord, InferenceError> {
    let view = q.view();
    let first_prompt = match mode {
        RunMode::PromptOnly => build_prompt_only_prompt(&view),
        _ => build_first_pass_prompt(&view),
    };
    let first_kind = if mode == RunMode::PromptOnly { PassKind::PromptOnly } else { PassKind::First };
    let (pass1, mut flags) = run_pass(client, q, first_kind, &first_prompt, params, floor)?;
    let would_fire = should_reask(&pass1.metrics, thresholds);
    let (trigger_fired, reask) = match mode {
        RunMode::Baseline | RunMode::PromptOnly => (false, false),
        RunMode::Tr => (would_fire, would_fire),
        RunMode::Ur => (would_fire, true),
    };
    let pass2 = if reask {
        let prompt = build_reask_prompt(&view, &pass1.output_text)?;
        let (trace, more) = run_pass(client, q, PassKind::Reask, &prompt, params, floor)?;
        flags.extend(more);
        Some(trace)
    } else {
        None
    };
    let final_answer = resolve_final_answer(&pass1, pass2.as_ref());
    Ok(InferenceRecord {
        question_id: q.id.clone(),
        subject: q.subject.clone(),
        k: q.k(),
        gold: q.gold,
        baseline_correct: pass1.extracted_answer == Some(q.gold),
        final_correct: final_answer == Some(q.gold),
        final_answer,
        pass1,
        trigger_fired,
        thresholds: *thresholds,
        pass2,
        flags: flags.into_iter().collect(),
    })
}

#[derive(Default)]
struct Progress {
    done: AtomicUsize,
    correct: AtomicUsize,
    triggered: AtomicUsize,
}

/// Runs (or resumes) the configured mode over the dataset.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.thresholds.validate()?;
    if config.parallel == 0 {
        return Err(HarnessError::Config("parallel must be at least 1".into()));
    }
    let dataset = load_dataset(&config.dataset, &config.dataset_format)?;
    let manifest = build_manifest(config, &dataset);

    let (log, pending, resumed_from) = if config.out.exists() {
        let (log, loaded) = RunLog::open_append(&config.out, LoadOptions { verify_metrics: false })?;
        for w in &loaded.warnings {
            log::warn!("{}: {w}", config.out.display());
        }
        if loaded.manifest != manifest {
            return Err(HarnessError::Integrity(format!(
                "{} belongs to run {}, not {}",
                config.out.display(),
                loaded.manifest.run_id,
                manifest.run_id
            )));
        }
        let pending = resume_plan(&loaded.manifest, &loaded.records, &dataset)?;
        (log, pending, loaded.records.len())
    } else {
        (RunLog::create(&config.out, manifest.clone())?, dataset.questions().iter().map(|q| q.id.clone()).collect(), 0)
    };

    let budget = match config.budget {
        Some(cap) => CallBudget::new(cap),
        None => CallBudget::default_for(dataset.len()),
    };
    let client = InferenceClient::new(config.backend.build(config.seed)?, config.retry, budget);
    let appender = log.into_appender();
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let failure: Mutex<Option<HarnessError>> = Mutex::new(None);
    let progress = Progress::default();
    let total = pending.len();

    std::thread::scope(|s| {
        for _ in 0..config.parallel.min(total.max(1)) {
            let tx = appender.sender();
            let (client, pending, dataset) = (&client, &pending, &dataset);
            let (next, stop, failure, progress) = (&next, &stop, &failure, &progress);
            s.spawn(move || {
                while !stop.load(Ordering::Acquire) {
                    let i = next.fetch_add(1, Ordering::AcqRel);
                    let Some(id) = pending.get(i) else { break };
                    let q = dataset.get(id).expect("plan ids come from the dataset");
                    let outcome = answer_question(
                        client,
                        q,
                        config.mode,
                        &config.thresholds,
                        &config.params,
                        config.probability_floor,
                    );
                    let record = match outcome {
                        Ok(r) => r,
                        Err(e) => {
                            stop.store(true, Ordering::Release);
                            failure.lock().unwrap().get_or_insert(e.into());
                            break;
                        }
                    };
                    let (correct, fired) = (record.final_correct, record.trigger_fired);
                    if tx.send(record).is_err() {
                        // The writer stopped; its error surfaces from finish().
                        stop.store(true, Ordering::Release);
                        break;
                    }
                    progress.correct.fetch_add(usize::from(correct), Ordering::Relaxed);
                    progress.triggered.fetch_add(usize::from(fired), Ordering::Relaxed);
                    let done = progress.done.fetch_add(1, Ordering::AcqRel) + 1;
                    if !config.quiet && done % 100 == 0 {
                        eprintln!(
                            "[{done}/{total}] accuracy {:.2}% trigger rate {:.2}%",
                            100.0 * progress.correct.load(Ordering::Relaxed) as f64 / done as f64,
                            100.0 * progress.triggered.load(Ordering::Relaxed) as f64 / done as f64,
                        );
                    }
                }
            });
        }
    });

    let written = appender.finish();
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let log = written?;
    let loaded = load_runlog(log.path(), LoadOptions { verify_metrics: false })?;
    Ok(RunSummary {
        run_id: manifest.run_id,
        processed: log.appended(),
        resumed_from,
        backend_calls: client.calls_made(),
        report: Report::build(&in_dataset_order(loaded.records, &dataset), Some(config.mode)),
    })
}

/// Reorders records to follow the dataset; unknown ids go last.
pub fn in_dataset_order(mut records: Vec<InferenceRecord>, dataset: &Dataset) -> Vec<InferenceRecord> {
    let pos: std::collections::HashMap<&str, usize> =
        dataset.questions().iter().enumerate().map(|(i, q)| (q.id.as_str(), i)).collect();
    records.sort_by_key(|r| pos.get(r.question_id.as_str()).copied().unwrap_or(usize::MAX));
    records
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub points: Vec<SweepPoint>,
    pub frontier: Vec<SweepPoint>,
}

impl SweepOutput {
    pub fn render_text(&self) -> String {
        let mut s = format!("{:>8} {:>8} {:>10} {:>10}  frontier\n", "tau_h", "tau_msp", "reask %", "final %");
        for p in &self.points {
            s.push_str(&format!(
                "{:>8.3} {:>8.3} {:>9.2}% {:>9.2}%  {}\n",
                p.thresholds.tau_h,
                p.thresholds.tau_msp,
                100.0 * p.reask_rate,
                100.0 * p.final_accuracy,
                if self.frontier.contains(p) { "*" } else { "" }
            ));
        }
        s
    }

    /// Plot data: `tau_h,tau_msp,reask_rate,final_accuracy,on_frontier`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["tau_h", "tau_msp", "reask_rate", "final_accuracy", "on_frontier"])
            .expect("in-memory write");
        for p in &self.points {
            w.write_record([
                p.thresholds.tau_h.to_string(),
                p.thresholds.tau_msp.to_string(),
                p.reask_rate.to_string(),
                p.final_accuracy.to_string(),
                self.frontier.contains(p).to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

pub fn sweep_records(records: &[InferenceRecord], tau_h: &[f64], tau_msp: &[f64]) -> Result<SweepOutput> {
    let grid = build_sweep_grid(tau_h, tau_msp)?;
    let points = grid
        .iter()
        .map(|t| evaluate_policy_offline(records, t))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let frontier = pareto_frontier(&points)?.points;
    Ok(SweepOutput { points, frontier })
}

/// Replays a uniform re-ask log over a threshold grid.
pub fn sweep(ur_log: &Path, tau_h: &[f64], tau_msp: &[f64]) -> Result<SweepOutput> {
    let loaded = load_runlog(ur_log, LoadOptions::default())?;
    sweep_records(&loaded.records, tau_h, tau_msp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer {
    pub tau_src: f64,
    pub tau_dst: f64,
    pub normalized: f64,
}

pub fn transfer(tau_h: f64, k_src: usize, k_dst: usize) -> Result<Transfer> {
    let tau_dst = transfer_entropy_threshold(tau_h, k_src, k_dst)?;
    Ok(Transfer {
        tau_src: tau_h,
        tau_dst,
        normalized: tau_h / (k_src as f64).ln(),
    })
}

/// Loads a log (optionally checking it against its dataset) and builds the report.
pub fn analyze(log: &Path, dataset: Option<&Dataset>) -> Result<Report> {
    let loaded = load_runlog(log, LoadOptions::default())?;
    let records = match dataset {
        Some(d) => in_dataset_order(loaded.records, d),
        None => loaded.records,
    };
    Ok(Report::build(&records, Some(loaded.manifest.mode)))
}

pub fn verify(log: &Path, dataset: Option<&Dataset>) -> VerifyReport {
    verify_runlog(log, dataset)
}

pub const SIM_SUBJECTS: [&str; 14] = [
    "biology",
    "business",
    "chemistry",
    "computer science",
    "economics",
    "engineering",
    "health",
    "history",
    "law",
    "math",
    "other",
    "philosophy",
    "physics",
    "psychology",
];

pub fn sim_question_id(i: usize) -> String {
    format!("sim-{i:06}")
}

/// Builds `n` synthetic questions and their hidden ground truth.
pub fn synth_dataset(cfg: &SimConfig, n: usize, seed: u64) -> Result<(Dataset, Vec<SimQuestion>)> {
    cfg.validate()?;
    let mut questions = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let id = sim_question_id(i);
        let sq = SimQuestion::draw(&id, cfg, seed)?;
        let mut rng = seeded_stream(seed, &id, "subject");
        let subject = SIM_SUBJECTS[rng.random_range(0..SIM_SUBJECTS.len())];
        questions.push(Question {
            id: id.clone(),
            subject: subject.to_string(),
            stem: format!("Synthetic {subject} item {i}: which option is correct?"),
            options: (0..sq.k).map(|j| format!("statement {} of item {i}", option_letter(j))).collect(),
            gold: sq.gold,
        });
        truth.push(sq);
    }
    Ok((Dataset::new(questions)?, truth))
}

/// Writes the dataset in canonical form plus the ground-truth file.
pub fn write_synth(cfg: &SimConfig, n: usize, seed: u64, dataset_out: &Path, truth_out: &Path) -> Result<Dataset> {
    let (dataset, truth) = synth_dataset(cfg, n, seed)?;
    fs::write(dataset_out, dataset.to_canonical_string()).map_err(io_err(dataset_out))?;
    write_truth(truth_out, &truth).map_err(io_err(truth_out))?;
    Ok(dataset)
}
