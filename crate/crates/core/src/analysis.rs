//! Post-hoc statistics over run records: transitions, McNemar, Cohen's h,
//! grouped metric summaries and per-subject tables.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runlog::{InferenceRecord, PassTrace, RunMode};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("record {0} has no second pass")]
    IncompleteLog(String),
    #[error("statistic undefined: {0}")]
    UndefinedStatistic(String),
    #[error("proportion {0} outside [0, 1]")]
    InvalidProportion(f64),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCounts {
    /// b
    pub wrong_to_correct: usize,
    /// c
    pub correct_to_wrong: usize,
    pub stayed_correct: usize,
    pub stayed_wrong: usize,
}

impl TransitionCounts {
    pub fn total(&self) -> usize {
        self.wrong_to_correct + self.correct_to_wrong + self.stayed_correct + self.stayed_wrong
    }

    fn add(&mut self, first: bool, last: bool) {
        match (first, last) {
            (false, true) => self.wrong_to_correct += 1,
            (true, false) => self.correct_to_wrong += 1,
            (true, true) => self.stayed_correct += 1,
            (false, false) => self.stayed_wrong += 1,
        }
    }
}

/// Every record must carry a second pass.
pub fn count_transitions(records: &[InferenceRecord]) -> Result<TransitionCounts> {
    let mut t = TransitionCounts::default();
    for r in records {
        if r.pass2.is_none() {
            return Err(AnalysisError::IncompleteLog(r.question_id.clone()));
        }
        t.add(r.baseline_correct, r.final_correct);
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub chi_square: f64,
    pub p_value: f64,
}

/// Continuity-corrected McNemar statistic over the discordant counts.
pub fn mcnemar(b: usize, c: usize) -> Result<McNemarResult> {
    if b + c == 0 {
        return Err(AnalysisError::UndefinedStatistic("McNemar with b + c = 0".into()));
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let chi_square = diff.max(0.0).powi(2) / (b + c) as f64;
    Ok(McNemarResult {
        chi_square,
        p_value: chi_square_1df_sf(chi_square),
    })
}

/// Upper tail of chi-square with one degree of freedom.
pub fn chi_square_1df_sf(x: f64) -> f64 {
    libm::erfc((x / 2.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub cohens_h: f64,
}

/// `2 asin sqrt(p2) - 2 asin sqrt(p1)`; positive when `p2 > p1`.
pub fn cohens_h(p1: f64, p2: f64) -> Result<EffectSize> {
    for p in [p1, p2] {
        if !(0.0..=1.0).contains(&p) {
            return Err(AnalysisError::InvalidProportion(p));
        }
    }
    Ok(EffectSize {
        cohens_h: 2.0 * p2.sqrt().asin() - 2.0 * p1.sqrt().asin(),
    })
}

/// Overall accuracy from the confident and re-asked slices.
pub fn decomposition_identity(n_confident: usize, acc_confident: f64, n_reasked: usize, acc_reasked: f64) -> f64 {
    let n = n_confident + n_reasked;
    if n == 0 {
        return 0.0;
    }
    (n_confident as f64 * acc_confident + n_reasked as f64 * acc_reasked) / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Round {
    /// First pass of every record.
    First,
    /// Trace behind the final answer of every record: second pass where one
    /// was used, first pass otherwise.
    Final,
    /// Final trace of re-asked records only.
    Reasked,
}

impl Round {
    pub fn as_str(self) -> &'static str {
        match self {
            Round::First => "first",
            Round::Final => "final",
            Round::Reasked => "reasked",
        }
    }

    fn select(self, r: &InferenceRecord) -> Option<(&PassTrace, bool)> {
        match self {
            Round::First => Some((&r.pass1, r.baseline_correct)),
            Round::Final => Some((r.final_pass(), r.final_correct)),
            Round::Reasked => r.pass2.as_ref().map(|_| (r.final_pass(), r.final_correct)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Entropy,
    Msp,
    Brier,
    Nll,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Entropy, Metric::Msp, Metric::Brier, Metric::Nll];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Entropy => "entropy",
            Metric::Msp => "msp",
            Metric::Brier => "brier",
            Metric::Nll => "nll",
        }
    }

    fn read(self, p: &PassTrace) -> f64 {
        match self {
            Metric::Entropy => p.metrics.entropy_nats,
            Metric::Msp => p.metrics.msp,
            Metric::Brier => p.scoring.brier,
            Metric::Nll => p.scoring.nll,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: Group,
    pub metric: Metric,
    /// None for an empty group.
    pub mean: Option<f64>,
    /// Sample standard deviation; 0 when n = 1.
    pub sd: Option<f64>,
    pub n: usize,
}

/// Mean and sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: Round,
    pub stats: Vec<GroupStats>,
    /// Records left out because their trace is a uniform fallback.
    pub flagged: usize,
}

impl RoundStats {
    pub fn get(&self, group: Group, metric: Metric) -> &GroupStats {
        self.stats
            .iter()
            .find(|s| s.group == group && s.metric == metric)
            .expect("every group/metric pair is present")
    }
}

pub fn grouped_metric_stats(records: &[InferenceRecord], round: Round) -> RoundStats {
    let mut values: IndexMap<(Group, Metric), Vec<f64>> = IndexMap::new();
    for g in [Group::Correct, Group::Incorrect] {
        for m in Metric::ALL {
            values.insert((g, m), Vec::new());
        }
    }
    let mut flagged = 0;
    for r in records {
        let Some((trace, correct)) = round.select(r) else { continue };
        if trace.distribution.is_fallback() {
            flagged += 1;
            continue;
        }
        let g = if correct { Group::Correct } else { Group::Incorrect };
        for m in Metric::ALL {
            values[&(g, m)].push(m.read(trace));
        }
    }
    let stats = values
        .into_iter()
        .map(|((group, metric), xs)| {
            let ms = mean_sd(&xs);
            GroupStats {
                group,
                metric,
                mean: ms.map(|v| v.0),
                sd: ms.map(|v| v.1),
                n: xs.len(),
            }
        })
        .collect();
    RoundStats { round, stats, flagged }
}

/// Mean entropy and MSP of one round over all records, regardless of correctness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMeans {
    pub round: Round,
    pub mean_entropy: Option<f64>,
    pub mean_msp: Option<f64>,
    pub n: usize,
}

pub fn round_means(records: &[InferenceRecord], round: Round) -> RoundMeans {
    let traces: Vec<&PassTrace> = records
        .iter()
        .filter_map(|r| round.select(r).map(|(t, _)| t))
        .filter(|t| !t.distribution.is_fallback())
        .collect();
    let mean = |f: fn(&PassTrace) -> f64| {
        (!traces.is_empty()).then(|| traces.iter().map(|t| f(t)).sum::<f64>() / traces.len() as f64)
    };
    RoundMeans {
        round,
        mean_entropy: mean(|t| t.metrics.entropy_nats),
        mean_msp: mean(|t| t.metrics.msp),
        n: traces.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRow {
    pub subject: String,
    pub total: usize,
    pub reasked: usize,
    pub first_correct: usize,
    pub final_correct: usize,
}

impl SubjectRow {
    pub fn reasked_pct(&self) -> f64 {
        pct(self.reasked, self.total)
    }

    pub fn first_acc_pct(&self) -> f64 {
        pct(self.first_correct, self.total)
    }

    pub fn final_acc_pct(&self) -> f64 {
        pct(self.final_correct, self.total)
    }

    pub fn change_pp(&self) -> f64 {
        self.final_acc_pct() - self.first_acc_pct()
    }
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Rows in first-appearance order of subjects among the records.
pub fn subject_rows(records: &[InferenceRecord]) -> Vec<SubjectRow> {
    let mut rows: IndexMap<&str, SubjectRow> = IndexMap::new();
    for r in records {
        let row = rows.entry(&r.subject).or_insert_with(|| SubjectRow {
            subject: r.subject.clone(),
            total: 0,
            reasked: 0,
            first_correct: 0,
            final_correct: 0,
        });
        row.total += 1;
        row.reasked += usize::from(r.reasked());
        row.first_correct += usize::from(r.baseline_correct);
        row.final_correct += usize::from(r.final_correct);
    }
    rows.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

/// Re-asked-subset statistics; absent when nothing was re-asked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaskBlock {
    pub transitions: TransitionCounts,
    pub first_accuracy: f64,
    pub final_accuracy: f64,
    pub mcnemar: Option<McNemarResult>,
    pub effect: EffectSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub mode: Option<RunMode>,
    pub total: usize,
    pub reasked: usize,
    pub baseline_correct: usize,
    pub final_correct: usize,
    pub confident_total: usize,
    pub confident_correct: usize,
    pub subjects: Vec<SubjectRow>,
    pub reask: Option<ReaskBlock>,
    pub group_stats: Vec<RoundStats>,
    pub round_means: Vec<RoundMeans>,
    pub identities: Vec<IdentityCheck>,
}

impl Report {
    pub fn build(records: &[InferenceRecord], mode: Option<RunMode>) -> Report {
        let total = records.len();
        let reasked_records: Vec<InferenceRecord> = records.iter().filter(|r| r.reasked()).cloned().collect();
        let reasked = reasked_records.len();
        let baseline_correct = records.iter().filter(|r| r.baseline_correct).count();
        let final_correct = records.iter().filter(|r| r.final_correct).count();
        let confident: Vec<&InferenceRecord> = records.iter().filter(|r| !r.reasked()).collect();
        let confident_correct = confident.iter().filter(|r| r.final_correct).count();

        let reask = if reasked == 0 {
            None
        } else {
            let t = count_transitions(&reasked_records).expect("filtered to re-asked records");
            let first = (t.stayed_correct + t.correct_to_wrong) as f64 / reasked as f64;
            let last = (t.stayed_correct + t.wrong_to_correct) as f64 / reasked as f64;
            Some(ReaskBlock {
                transitions: t,
                first_accuracy: first,
                final_accuracy: last,
                mcnemar: mcnemar(t.wrong_to_correct, t.correct_to_wrong).ok(),
                effect: cohens_h(first, last).expect("accuracies are proportions"),
            })
        };

        let mut identities = Vec::new();
        if let Some(block) = &reask {
            let t = block.transitions;
            identities.push(IdentityCheck {
                name: "transition counts sum to re-asked total".into(),
                holds: t.total() == reasked,
                detail: format!("{} vs {reasked}", t.total()),
            });
            let expected = baseline_correct as i64 - t.correct_to_wrong as i64 + t.wrong_to_correct as i64;
            identities.push(IdentityCheck {
                name: "final correct = baseline correct - c + b".into(),
                holds: expected == final_correct as i64,
                detail: format!("{expected} vs {final_correct}"),
            });
        }
        let unchanged = confident.iter().all(|r| r.final_correct == r.baseline_correct);
        identities.push(IdentityCheck {
            name: "records without a second pass keep their first answer".into(),
            holds: unchanged,
            detail: String::new(),
        });
        if total > 0 {
            let reask_final = reask.as_ref().map_or(0.0, |b| b.final_accuracy);
            let conf_acc = if confident.is_empty() { 0.0 } else { confident_correct as f64 / confident.len() as f64 };
            let combined = decomposition_identity(confident.len(), conf_acc, reasked, reask_final);
            let overall = final_correct as f64 / total as f64;
            identities.push(IdentityCheck {
                name: "decomposition of final accuracy".into(),
                holds: (combined - overall).abs() < 1e-12,
                detail: format!("{combined:.6} vs {overall:.6}"),
            });
        }

        Report {
            mode,
            total,
            reasked,
            baseline_correct,
            final_correct,
            confident_total: confident.len(),
            confident_correct,
            subjects: subject_rows(records),
            reask,
            group_stats: [Round::First, Round::Final, Round::Reasked]
                .into_iter()
                .map(|r| grouped_metric_stats(records, r))
                .collect(),
            round_means: [Round::First, Round::Final, Round::Reasked]
                .into_iter()
                .map(|r| round_means(records, r))
                .collect(),
            identities,
        }
    }

    pub fn baseline_accuracy(&self) -> f64 {
        ratio(self.baseline_correct, self.total)
    }

    pub fn final_accuracy(&self) -> f64 {
        ratio(self.final_correct, self.total)
    }

    pub fn reask_rate(&self) -> f64 {
        ratio(self.reasked, self.total)
    }

    pub fn identities_hold(&self) -> bool {
        self.identities.iter().all(|i| i.holds)
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        if let Some(mode) = self.mode {
            let _ = writeln!(s, "mode: {mode}");
        }
        let _ = writeln!(s, "questions: {}", self.total);
        let _ = writeln!(s, "first-pass accuracy: {:.2}%", 100.0 * self.baseline_accuracy());
        let _ = writeln!(s, "final accuracy: {:.2}%", 100.0 * self.final_accuracy());
        let _ = writeln!(s, "re-asked: {} ({:.2}%)", self.reasked, 100.0 * self.reask_rate());

        if let Some(b) = &self.reask {
            let t = b.transitions;
            let share = |x: usize| pct(x, t.total());
            let _ = writeln!(s, "\ntransitions over {} re-asked questions:", t.total());
            let _ = writeln!(s, "  wrong -> correct (b): {} ({:.2}%)", t.wrong_to_correct, share(t.wrong_to_correct));
            let _ = writeln!(s, "  correct -> wrong (c): {} ({:.2}%)", t.correct_to_wrong, share(t.correct_to_wrong));
            let _ = writeln!(s, "  stayed correct: {} ({:.2}%)", t.stayed_correct, share(t.stayed_correct));
            let _ = writeln!(s, "  stayed wrong: {} ({:.2}%)", t.stayed_wrong, share(t.stayed_wrong));
            let _ = writeln!(
                s,
                "re-asked accuracy: {:.2}% -> {:.2}%",
                100.0 * b.first_accuracy,
                100.0 * b.final_accuracy
            );
            match b.mcnemar {
                Some(m) => {
                    let _ = writeln!(s, "McNemar chi2 = {:.2}, p = {:.3e}", m.chi_square, m.p_value);
                }
                None => {
                    let _ = writeln!(s, "McNemar: undefined (no discordant pairs)");
                }
            }
            let _ = writeln!(s, "Cohen's h = {:.2}", b.effect.cohens_h);
        }

        let _ = writeln!(s, "\n{:<24} {:>6} {:>8} {:>9} {:>9} {:>9} {:>9}", "subject", "total", "reasked", "reasked%", "1st acc", "final acc", "change");
        for r in &self.subjects {
            let _ = writeln!(
                s,
                "{:<24} {:>6} {:>8} {:>8.2}% {:>8.2}% {:>8.2}% {:>+8.2}pp",
                r.subject,
                r.total,
                r.reasked,
                r.reasked_pct(),
                r.first_acc_pct(),
                r.final_acc_pct(),
                r.change_pp()
            );
        }

        for rs in &self.group_stats {
            if rs.stats.iter().all(|g| g.n == 0) {
                continue;
            }
            let _ = writeln!(s, "\n{} round metrics (flagged: {}):", rs.round.as_str(), rs.flagged);
            for m in Metric::ALL {
                let cell = |g: Group| {
                    let st = rs.get(g, m);
                    match (st.mean, st.sd) {
                        (Some(mean), Some(sd)) => format!("{mean:.6} ± {sd:.6} (n={})", st.n),
                        _ => "n=0".to_string(),
                    }
                };
                let _ = writeln!(s, "  {:<8} correct {}  incorrect {}", m.as_str(), cell(Group::Correct), cell(Group::Incorrect));
            }
        }

        let _ = writeln!(s, "\nidentity checks:");
        for i in &self.identities {
            let _ = writeln!(s, "  [{}] {} {}", if i.holds { "ok" } else { "FAIL" }, i.name, i.detail);
        }
        s
    }

    /// Subject table as CSV with columns
    /// `subject,total,reasked,reasked_pct,first_acc_pct,final_acc_pct,change_pp`.
    pub fn subject_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["subject", "total", "reasked", "reasked_pct", "first_acc_pct", "final_acc_pct", "change_pp"])
            .expect("in-memory write");
        for r in &self.subjects {
            w.write_record([
                r.subject.clone(),
                r.total.to_string(),
                r.reasked.to_string(),
                format!("{:.2}", r.reasked_pct()),
                format!("{:.2}", r.first_acc_pct()),
                format!("{:.2}", r.final_acc_pct()),
                format!("{:.2}", r.change_pp()),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::TriggerThresholds;
    use crate::runlog::tests::{record, trace};

    fn pass(answer: usize) -> PassTrace {
        let mut probs = vec![0.1; 4];
        probs[answer] = 0.7;
        trace(&probs, Some(answer), 0)
    }

    fn rec(id: &str, a1: usize, a2: Option<usize>) -> InferenceRecord {
        record(id, pass(a1), a2.map(pass), 0, TriggerThresholds::default())
    }

    #[test]
    fn mcnemar_examples() {
        let r = mcnemar(10, 0).unwrap();
        assert!((r.chi_square - 8.1).abs() < 1e-12);
        let r = mcnemar(5, 5).unwrap();
        assert_eq!(r.chi_square, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(mcnemar(0, 0), Err(AnalysisError::UndefinedStatistic("McNemar with b + c = 0".into())));
        assert_eq!(mcnemar(7, 3), mcnemar(3, 7));
    }

    #[test]
    fn chi_square_tail_reference_points() {
        // 3.841459 is the 95th percentile of chi-square(1).
        assert!((chi_square_1df_sf(3.841459) - 0.05).abs() < 1e-6);
        assert!((chi_square_1df_sf(6.634897) - 0.01).abs() < 1e-6);
        assert_eq!(chi_square_1df_sf(0.0), 1.0);
    }

    #[test]
    fn cohens_h_examples() {
        assert_eq!(cohens_h(0.3, 0.3).unwrap().cohens_h, 0.0);
        assert!((cohens_h(0.0, 1.0).unwrap().cohens_h - std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(cohens_h(0.2, 0.6).unwrap().cohens_h, -cohens_h(0.6, 0.2).unwrap().cohens_h);
        assert_eq!(cohens_h(-0.1, 0.5), Err(AnalysisError::InvalidProportion(-0.1)));
        assert!(cohens_h(0.5, 1.2).is_err());
    }

    #[test]
    fn mean_sd_sample_formula() {
        assert_eq!(mean_sd(&[]), None);
        assert_eq!(mean_sd(&[2.5]), Some((2.5, 0.0)));
        let (m, sd) = mean_sd(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    fn sample_records() -> Vec<InferenceRecord> {
        // (first answer, second answer) with gold 0
        let shapes: [(usize, Option<usize>); 6] =
            [(0, None), (1, Some(0)), (0, Some(1)), (0, Some(0)), (2, Some(2)), (1, None)];
        shapes
            .iter()
            .enumerate()
            .map(|(i, (a1, a2))| {
                let mut r = rec(&format!("q{i}"), *a1, *a2);
                r.subject = if i % 2 == 0 { "law".into() } else { "math".into() };
                r
            })
            .collect()
    }

    #[test]
    fn transitions_tally() {
        let records = sample_records();
        let reasked: Vec<_> = records.iter().filter(|r| r.reasked()).cloned().collect();
        let t = count_transitions(&reasked).unwrap();
        assert_eq!(
            t,
            TransitionCounts {
                wrong_to_correct: 1,
                correct_to_wrong: 1,
                stayed_correct: 1,
                stayed_wrong: 1
            }
        );
        assert_eq!(count_transitions(&records), Err(AnalysisError::IncompleteLog("q0".into())));
    }

    #[test]
    fn report_identities_and_subjects() {
        let records = sample_records();
        let report = Report::build(&records, Some(RunMode::Tr));
        assert!(report.identities_hold(), "{:?}", report.identities);
        assert_eq!(report.total, 6);
        assert_eq!(report.reasked, 4);
        assert_eq!(report.subjects.len(), 2);
        assert_eq!(report.subjects[0].subject, "law");
        let csv = report.subject_csv();
        assert!(csv.starts_with("subject,total,reasked,reasked_pct"));
        assert_eq!(csv.lines().count(), 3);
        let text = report.render_text();
        assert!(text.contains("McNemar"));
    }

    #[test]
    fn baseline_report_omits_reask_block() {
        let records: Vec<_> = (0..4).map(|i| rec(&format!("q{i}"), i % 2, None)).collect();
        let report = Report::build(&records, Some(RunMode::Baseline));
        assert!(report.reask.is_none());
        assert!(!report.render_text().contains("McNemar"));
        assert_eq!(report.final_accuracy(), report.baseline_accuracy());
        assert!(report.identities_hold());
    }

    #[test]
    fn single_record_group_has_zero_sd() {
        let records = vec![rec("q0", 0, None)];
        let rs = grouped_metric_stats(&records, Round::First);
        let g = rs.get(Group::Correct, Metric::Entropy);
        assert_eq!((g.n, g.sd), (1, Some(0.0)));
        let empty = rs.get(Group::Incorrect, Metric::Msp);
        assert_eq!((empty.n, empty.mean), (0, None));
    }

    #[test]
    fn decomposition_on_small_numbers() {
        assert!((decomposition_identity(2, 0.5, 2, 1.0) - 0.75).abs() < 1e-15);
        assert_eq!(decomposition_identity(0, 0.0, 0, 0.0), 0.0);
    }
}
