//! Append-only run log: a manifest line followed by one inference record per
//! line, UTF-8 JSON with shortest round-trip float formatting.
//!
//! A crash mid-append leaves at most one unterminated trailing line. Loading
//! skips it with a warning; reopening for append truncates it so the next
//! record starts on a fresh line.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::inference::{BackendKind, InferenceParams};
use crate::metrics::{AnswerDistribution, ScoringValues, UncertaintyMetrics};
use crate::policy::{should_reask, TriggerThresholds};

pub const SCHEMA_VERSION: u32 = 1;
/// Tolerance for recomputed metrics against stored values.
pub const METRIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("run log {0} already exists")]
    AlreadyExists(PathBuf),
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("unsupported schema version {0} (this build reads {SCHEMA_VERSION})")]
    SchemaVersionUnsupported(u64),
    #[error("line {line}: corrupt record: {message}")]
    CorruptRecord { line: usize, message: String },
    #[error("record {question_id} does not match the run manifest: {reason}")]
    ManifestMismatch { question_id: String, reason: String },
    #[error("record {question_id}: stored metrics disagree with distribution ({detail})")]
    MetricMismatch { question_id: String, detail: String },
    #[error("dataset digest {actual} does not match manifest digest {expected}")]
    DatasetDigestMismatch { expected: String, actual: String },
    #[error("appender thread stopped unexpectedly")]
    AppenderGone,
}

pub type Result<T> = std::result::Result<T, RunLogError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunLogError + '_ {
    move |source| RunLogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// First pass only.
    Baseline,
    /// Targeted re-asking: second pass only when the trigger fires.
    Tr,
    /// Uniform re-asking: second pass for every question.
    Ur,
    /// Single pass with the re-ask wording and no prior attempt.
    PromptOnly,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Baseline => "baseline",
            RunMode::Tr => "tr",
            RunMode::Ur => "ur",
            RunMode::PromptOnly => "prompt_only",
        }
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "baseline" => Ok(RunMode::Baseline),
            "tr" => Ok(RunMode::Tr),
            "ur" => Ok(RunMode::Ur),
            "prompt_only" | "prompt-only" => Ok(RunMode::PromptOnly),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub run_id: String,
    pub mode: RunMode,
    pub params: InferenceParams,
    pub thresholds: TriggerThresholds,
    pub dataset_digest: String,
    pub template_hashes: BTreeMap<String, String>,
    pub seed: u64,
    pub backend_kind: BackendKind,
    pub probability_floor: f64,
}

impl RunManifest {
    /// Run id derived from the fields that define the run.
    pub fn derive_run_id(
        mode: RunMode,
        dataset_digest: &str,
        seed: u64,
        thresholds: &TriggerThresholds,
        backend_kind: BackendKind,
    ) -> String {
        let mut h = Sha256::new();
        h.update(mode.as_str());
        h.update([0]);
        h.update(dataset_digest);
        h.update([0]);
        h.update(seed.to_le_bytes());
        h.update(thresholds.tau_h.to_le_bytes());
        h.update(thresholds.tau_msp.to_le_bytes());
        h.update(format!("{backend_kind:?}"));
        let digest = hex::encode(h.finalize());
        format!("{}-{}", mode.as_str(), &digest[..16])
    }
}

/// Option distribution as read out for one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionTrace {
    Observed(AnswerDistribution),
    /// No readable answer position; the uniform distribution over `k` stands in.
    UniformFallback { k: usize },
}

impl DistributionTrace {
    pub fn distribution(&self) -> AnswerDistribution {
        match self {
            DistributionTrace::Observed(d) => d.clone(),
            DistributionTrace::UniformFallback { k } => {
                AnswerDistribution::uniform(*k).expect("k validated when the trace was built")
            }
        }
    }

    pub fn is_fallback(&self) -> bool {
        matches!(self, DistributionTrace::UniformFallback { .. })
    }

    pub fn k(&self) -> usize {
        match self {
            DistributionTrace::Observed(d) => d.k(),
            DistributionTrace::UniformFallback { k } => *k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassTrace {
    pub prompt_hash: String,
    pub output_text: String,
    pub extracted_answer: Option<usize>,
    pub distribution: DistributionTrace,
    pub metrics: UncertaintyMetrics,
    /// Scored against the gold label after the fact; never part of any prompt.
    pub scoring: ScoringValues,
    pub timestamp: DateTime<Utc>,
    pub latency_ms: u64,
}

impl PassTrace {
    /// Recomputes metrics and scoring from the stored distribution.
    pub fn check_metrics(&self, gold: usize, floor: f64) -> std::result::Result<(), String> {
        let d = self.distribution.distribution();
        let m = UncertaintyMetrics::of(&d);
        if !m.approx_eq(&self.metrics, METRIC_TOLERANCE) {
            return Err(format!("metrics {:?} recompute to {:?}", self.metrics, m));
        }
        let s = ScoringValues::of(&d, gold, floor).map_err(|e| e.to_string())?;
        if !s.approx_eq(&self.scoring, METRIC_TOLERANCE) {
            return Err(format!("scoring {:?} recomputes to {:?}", self.scoring, s));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFlag {
    /// No answer letter could be parsed from the first pass.
    Pass1ExtractionFailed,
    /// First-pass distribution replaced by the uniform fallback.
    Pass1UniformFallback,
    /// No answer letter in the second pass; the first answer was kept.
    Pass2ExtractionFailed,
    Pass2UniformFallback,
    /// The letter at the located logprob position disagrees with the parsed answer.
    AnswerTokenMismatch,
}

/// One question's full trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub question_id: String,
    pub subject: String,
    pub k: usize,
    /// Stored for post-hoc scoring only.
    pub gold: usize,
    pub pass1: PassTrace,
    pub trigger_fired: bool,
    pub thresholds: TriggerThresholds,
    pub pass2: Option<PassTrace>,
    pub final_answer: Option<usize>,
    pub final_correct: bool,
    pub baseline_correct: bool,
    #[serde(default)]
    pub flags: BTreeSet<RecordFlag>,
}

/// Second-pass answer when one was parsed, otherwise the first-pass answer.
pub fn resolve_final_answer(pass1: &PassTrace, pass2: Option<&PassTrace>) -> Option<usize> {
    pass2
        .and_then(|p| p.extracted_answer)
        .or(pass1.extracted_answer)
}

impl InferenceRecord {
    /// The trace that produced the final answer.
    pub fn final_pass(&self) -> &PassTrace {
        match &self.pass2 {
            Some(p2) if p2.extracted_answer.is_some() => p2,
            _ => &self.pass1,
        }
    }

    pub fn reasked(&self) -> bool {
        self.pass2.is_some()
    }
}

/// Checks a record against the mode and thresholds of its run.
pub fn validate_record(manifest: &RunManifest, r: &InferenceRecord) -> std::result::Result<(), String> {
    if r.thresholds != manifest.thresholds {
        return Err(format!(
            "thresholds {:?} differ from manifest {:?}",
            r.thresholds, manifest.thresholds
        ));
    }
    if r.gold >= r.k {
        return Err(format!("gold {} out of range for k={}", r.gold, r.k));
    }
    for (name, p) in std::iter::once(("pass1", Some(&r.pass1))).chain(std::iter::once(("pass2", r.pass2.as_ref()))) {
        let Some(p) = p else { continue };
        if p.distribution.k() != r.k {
            return Err(format!("{name} distribution has {} options, record k={}", p.distribution.k(), r.k));
        }
        if p.extracted_answer.is_some_and(|a| a >= r.k) {
            return Err(format!("{name} answer out of range"));
        }
    }
    let would_fire = should_reask(&r.pass1.metrics, &manifest.thresholds);
    match manifest.mode {
        RunMode::Baseline | RunMode::PromptOnly => {
            if r.pass2.is_some() || r.trigger_fired {
                return Err(format!("{} records carry no second pass or trigger", manifest.mode));
            }
        }
        RunMode::Tr => {
            if r.trigger_fired != would_fire {
                return Err(format!("trigger_fired={} but trigger evaluates to {would_fire}", r.trigger_fired));
            }
            if r.pass2.is_some() != r.trigger_fired {
                return Err(format!(
                    "tr record has trigger_fired={} with second pass present={}",
                    r.trigger_fired,
                    r.pass2.is_some()
                ));
            }
        }
        RunMode::Ur => {
            if r.pass2.is_none() {
                return Err("ur record lacks a second pass".into());
            }
            if r.trigger_fired != would_fire {
                return Err(format!("trigger_fired={} but trigger evaluates to {would_fire}", r.trigger_fired));
            }
        }
    }
    let expected = resolve_final_answer(&r.pass1, r.pass2.as_ref());
    if r.final_answer != expected {
        return Err(format!("final_answer {:?}, expected {expected:?}", r.final_answer));
    }
    if r.final_correct != (r.final_answer == Some(r.gold)) {
        return Err("final_correct inconsistent with final_answer".into());
    }
    if r.baseline_correct != (r.pass1.extracted_answer == Some(r.gold)) {
        return Err("baseline_correct inconsistent with first-pass answer".into());
    }
    Ok(())
}

fn mismatch(r: &InferenceRecord, reason: String) -> RunLogError {
    RunLogError::ManifestMismatch {
        question_id: r.question_id.clone(),
        reason,
    }
}

/// Writer over a run log file. Owned by a single appender.
pub struct RunLog {
    path: PathBuf,
    file: File,
    manifest: RunManifest,
    appended: usize,
}

impl std::fmt::Debug for RunLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunLog")
            .field("path", &self.path)
            .field("run_id", &self.manifest.run_id)
            .field("appended", &self.appended)
            .finish()
    }
}

fn to_line<T: Serialize>(value: &T) -> Vec<u8> {
    let mut line = serde_json::to_vec(value).expect("log types serialize infallibly");
    line.push(b'\n');
    line
}

impl RunLog {
    /// Creates a new log holding only the manifest. Refuses to overwrite.
    pub fn create(path: &Path, manifest: RunManifest) -> Result<Self> {
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|e| {
                if e.kind() == io::ErrorKind::AlreadyExists {
                    RunLogError::AlreadyExists(path.to_path_buf())
                } else {
                    io_err(path)(e)
                }
            })?;
        file.write_all(&to_line(&manifest)).map_err(io_err(path))?;
        file.sync_data().map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            manifest,
            appended: 0,
        })
    }

    /// Reopens an existing log for appending and returns what it already holds.
    pub fn open_append(path: &Path, opts: LoadOptions) -> Result<(Self, LoadedLog)> {
        let loaded = load_runlog(path, opts)?;
        let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        if let Some(keep) = loaded.torn_tail_offset {
            file.set_len(keep).map_err(io_err(path))?;
        }
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
                manifest: loaded.manifest.clone(),
                appended: 0,
            },
            loaded,
        ))
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn appended(&self) -> usize {
        self.appended
    }

    /// Validates `r` against the manifest and appends it as one write.
    pub fn append(&mut self, r: &InferenceRecord) -> Result<()> {
        validate_record(&self.manifest, r).map_err(|reason| mismatch(r, reason))?;
        self.file.write_all(&to_line(r)).map_err(io_err(&self.path))?;
        self.appended += 1;
        Ok(())
    }

    pub fn sync(&self) -> Result<()> {
        self.file.sync_data().map_err(io_err(&self.path))
    }

    /// Moves the log onto a dedicated thread fed by a channel, so many
    /// producers share one serialized writer.
    pub fn into_appender(self) -> Appender {
        let (tx, rx) = mpsc::channel::<InferenceRecord>();
        let handle = thread::spawn(move || {
            let mut log = self;
            for r in rx {
                log.append(&r)?;
            }
            log.sync()?;
            Ok(log)
        });
        Appender { tx: Some(tx), handle }
    }
}

pub struct Appender {
    tx: Option<mpsc::Sender<InferenceRecord>>,
    handle: thread::JoinHandle<Result<RunLog>>,
}

impl Appender {
    pub fn sender(&self) -> mpsc::Sender<InferenceRecord> {
        self.tx.clone().expect("sender taken only by finish")
    }

    /// Closes the channel and waits for the writer to drain it.
    pub fn finish(mut self) -> Result<RunLog> {
        drop(self.tx.take());
        self.handle.join().map_err(|_| RunLogError::AppenderGone)?
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Recompute entropy/MSP/Brier/NLL for every pass.
    pub verify_metrics: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { verify_metrics: true }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedLog {
    pub manifest: RunManifest,
    pub records: Vec<InferenceRecord>,
    pub warnings: Vec<String>,
    /// Byte length of the log without its torn trailing fragment, if any.
    pub torn_tail_offset: Option<u64>,
}

pub fn load_runlog(path: &Path, opts: LoadOptions) -> Result<LoadedLog> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_runlog(&bytes, opts)
}

pub fn parse_runlog(bytes: &[u8], opts: LoadOptions) -> Result<LoadedLog> {
    let mut warnings = Vec::new();
    let mut torn_tail_offset = None;
    let mut body = bytes;
    if !bytes.is_empty() && !bytes.ends_with(b"\n") {
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        warnings.push(format!("skipped torn trailing line ({} bytes)", bytes.len() - keep));
        torn_tail_offset = Some(keep as u64);
        body = &bytes[..keep];
    }
    let mut lines = body.split(|&b| b == b'\n');
    let first = lines
        .next()
        .filter(|l| !l.is_empty())
        .ok_or_else(|| RunLogError::CorruptManifest("missing manifest line".into()))?;
    let raw: serde_json::Value =
        serde_json::from_slice(first).map_err(|e| RunLogError::CorruptManifest(e.to_string()))?;
    let version = raw
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| RunLogError::CorruptManifest("missing schema_version".into()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(RunLogError::SchemaVersionUnsupported(version));
    }
    let manifest: RunManifest =
        serde_json::from_slice(first).map_err(|e| RunLogError::CorruptManifest(e.to_string()))?;
    manifest
        .thresholds
        .validate()
        .map_err(|e| RunLogError::CorruptManifest(e.to_string()))?;

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let r: InferenceRecord = serde_json::from_slice(line).map_err(|e| RunLogError::CorruptRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        validate_record(&manifest, &r).map_err(|reason| mismatch(&r, reason))?;
        if opts.verify_metrics {
            for p in std::iter::once(&r.pass1).chain(r.pass2.as_ref()) {
                p.check_metrics(r.gold, manifest.probability_floor)
                    .map_err(|detail| RunLogError::MetricMismatch {
                        question_id: r.question_id.clone(),
                        detail,
                    })?;
            }
        }
        records.push(r);
    }
    Ok(LoadedLog {
        manifest,
        records,
        warnings,
        torn_tail_offset,
    })
}

/// Ids still to run, in dataset order.
pub fn resume_plan(manifest: &RunManifest, records: &[InferenceRecord], dataset: &Dataset) -> Result<Vec<String>> {
    let actual = dataset.digest();
    if actual != manifest.dataset_digest {
        return Err(RunLogError::DatasetDigestMismatch {
            expected: manifest.dataset_digest.clone(),
            actual,
        });
    }
    let done: HashSet<&str> = records.iter().map(|r| r.question_id.as_str()).collect();
    Ok(dataset
        .questions()
        .iter()
        .filter(|q| !done.contains(q.id.as_str()))
        .map(|q| q.id.clone())
        .collect())
}

/// Outcome of a full integrity check.
#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub records: usize,
    pub warnings: Vec<String>,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Loads with metric recomputation and checks id uniqueness. Optionally
/// checks the dataset digest.
pub fn verify_runlog(path: &Path, dataset: Option<&Dataset>) -> VerifyReport {
    let mut report = VerifyReport::default();
    let loaded = match load_runlog(path, LoadOptions { verify_metrics: true }) {
        Ok(l) => l,
        Err(e) => {
            report.problems.push(e.to_string());
            return report;
        }
    };
    report.records = loaded.records.len();
    report.warnings = loaded.warnings;
    let mut seen = HashSet::new();
    for r in &loaded.records {
        if !seen.insert(r.question_id.as_str()) {
            report.problems.push(format!("duplicate record for {}", r.question_id));
        }
    }
    if let Some(d) = dataset {
        if d.digest() != loaded.manifest.dataset_digest {
            report.problems.push("dataset digest does not match manifest".into());
        }
        for r in &loaded.records {
            match d.get(&r.question_id) {
                None => report.problems.push(format!("record {} not in dataset", r.question_id)),
                Some(q) if q.gold != r.gold || q.k() != r.k => {
                    report.problems.push(format!("record {} disagrees with dataset", r.question_id))
                }
                _ => {}
            }
        }
    }
    report
}
