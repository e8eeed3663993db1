//! Re-ask trigger, cross-K threshold transfer, threshold sweeps and Pareto
//! extraction over (re-ask rate, final accuracy) operating points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::UncertaintyMetrics;
use crate::runlog::InferenceRecord;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("invalid thresholds (tau_h={tau_h}, tau_msp={tau_msp}): {reason}")]
    InvalidThresholds {
        tau_h: f64,
        tau_msp: f64,
        reason: &'static str,
    },
    #[error("option count {0} must be at least 2")]
    InvalidOptionCount(usize),
    #[error("threshold grid or point list is empty")]
    EmptyGrid,
    #[error("record {0} has no second pass; offline replay needs a uniform re-ask log")]
    IncompleteLog(String),
}

pub type Result<T> = std::result::Result<T, PolicyError>;

/// The `(tau_h, tau_msp)` pair governing re-asking.
///
/// The default `(0.8, 0.6)` is the main operating point. Other published
/// settings, e.g. `(1.3, 0.4)`, are passed explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerThresholds {
    pub tau_h: f64,
    pub tau_msp: f64,
}

impl TriggerThresholds {
    pub fn new(tau_h: f64, tau_msp: f64) -> Result<Self> {
        let t = Self { tau_h, tau_msp };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |reason| PolicyError::InvalidThresholds {
            tau_h: self.tau_h,
            tau_msp: self.tau_msp,
            reason,
        };
        if !self.tau_h.is_finite() || self.tau_h <= 0.0 {
            return Err(err("tau_h must be finite and positive"));
        }
        if !self.tau_msp.is_finite() || self.tau_msp <= 0.0 || self.tau_msp >= 1.0 {
            return Err(err("tau_msp must lie in (0, 1)"));
        }
        Ok(())
    }
}

impl Default for TriggerThresholds {
    fn default() -> Self {
        Self {
            tau_h: 0.8,
            tau_msp: 0.6,
        }
    }
}

/// `true` iff `H > tau_h` or `MSP < tau_msp`.
///
/// Equivalently, the first answer is accepted iff `H <= tau_h` and
/// `MSP >= tau_msp`.
pub fn should_reask(m: &UncertaintyMetrics, t: &TriggerThresholds) -> bool {
    m.entropy_nats > t.tau_h || m.msp < t.tau_msp
}

/// Maps an entropy threshold between option counts by holding the normalized
/// entropy `tau_h / ln(k_src)` fixed.
pub fn transfer_entropy_threshold(tau_h: f64, k_src: usize, k_dst: usize) -> Result<f64> {
    for k in [k_src, k_dst] {
        if k < 2 {
            return Err(PolicyError::InvalidOptionCount(k));
        }
    }
    if k_src == k_dst {
        return Ok(tau_h);
    }
    Ok(tau_h * (k_dst as f64).ln() / (k_src as f64).ln())
}

/// Cartesian product with `tau_h` as the outer loop.
pub fn build_sweep_grid(tau_h_values: &[f64], tau_msp_values: &[f64]) -> Result<Vec<TriggerThresholds>> {
    if tau_h_values.is_empty() || tau_msp_values.is_empty() {
        return Err(PolicyError::EmptyGrid);
    }
    let mut grid = Vec::with_capacity(tau_h_values.len() * tau_msp_values.len());
    for &h in tau_h_values {
        for &m in tau_msp_values {
            grid.push(TriggerThresholds::new(h, m)?);
        }
    }
    Ok(grid)
}

/// Anything that can be placed on the compute/accuracy plane.
pub trait OperatingPoint {
    fn reask_rate(&self) -> f64;
    fn accuracy(&self) -> f64;
}

impl OperatingPoint for (f64, f64) {
    fn reask_rate(&self) -> f64 {
        self.0
    }

    fn accuracy(&self) -> f64 {
        self.1
    }
}

/// `a` dominates `b`: no more compute, no less accuracy, strictly better in one.
pub fn dominates<A: OperatingPoint, B: OperatingPoint>(a: &A, b: &B) -> bool {
    let (r1, a1, r2, a2) = (a.reask_rate(), a.accuracy(), b.reask_rate(), b.accuracy());
    r1 <= r2 && a1 >= a2 && (r1 < r2 || a1 > a2)
}

/// Exact outcome counts of replaying one threshold pair over a log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayTally {
    pub total: usize,
    pub reasked: usize,
    pub correct: usize,
    /// Correct among records kept at their first answer.
    pub confident_correct: usize,
    /// Correct among re-asked records, judged on the final answer.
    pub reasked_correct: usize,
}

impl ReplayTally {
    pub fn merge(self, other: Self) -> Self {
        Self {
            total: self.total + other.total,
            reasked: self.reasked + other.reasked,
            correct: self.correct + other.correct,
            confident_correct: self.confident_correct + other.confident_correct,
            reasked_correct: self.reasked_correct + other.reasked_correct,
        }
    }
}

/// One threshold pair's (re-ask rate, final accuracy) outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub thresholds: TriggerThresholds,
    pub tally: ReplayTally,
    pub reask_rate: f64,
    pub final_accuracy: f64,
}

impl SweepPoint {
    pub fn from_tally(thresholds: TriggerThresholds, tally: ReplayTally) -> Self {
        let n = tally.total.max(1) as f64;
        Self {
            thresholds,
            tally,
            reask_rate: tally.reasked as f64 / n,
            final_accuracy: tally.correct as f64 / n,
        }
    }
}

impl OperatingPoint for SweepPoint {
    fn reask_rate(&self) -> f64 {
        self.reask_rate
    }

    fn accuracy(&self) -> f64 {
        self.final_accuracy
    }
}

/// Replays a uniform re-ask log under `t` and counts outcomes.
///
/// Each record contributes its second-pass answer when the first-pass
/// metrics trigger, otherwise its first-pass answer. Records can be split
/// across workers and the tallies merged in any order.
pub fn replay_tally(records: &[InferenceRecord], t: &TriggerThresholds) -> Result<ReplayTally> {
    let mut tally = ReplayTally::default();
    for r in records {
        let Some(pass2) = r.pass2.as_ref() else {
            return Err(PolicyError::IncompleteLog(r.question_id.clone()));
        };
        tally.total += 1;
        if should_reask(&r.pass1.metrics, t) {
            tally.reasked += 1;
            let answer = crate::runlog::resolve_final_answer(&r.pass1, Some(pass2));
            if answer == Some(r.gold) {
                tally.correct += 1;
                tally.reasked_correct += 1;
            }
        } else if r.pass1.extracted_answer == Some(r.gold) {
            tally.correct += 1;
            tally.confident_correct += 1;
        }
    }
    Ok(tally)
}

pub fn evaluate_policy_offline(records: &[InferenceRecord], t: &TriggerThresholds) -> Result<SweepPoint> {
    Ok(SweepPoint::from_tally(*t, replay_tally(records, t)?))
}

/// Non-dominated subset of a set of operating points, by increasing re-ask rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoFrontier<P> {
    pub points: Vec<P>,
}

/// Sorts by increasing re-ask rate (higher accuracy first on ties) and keeps a
/// point whenever it beats the best accuracy seen at that or lower compute.
pub fn pareto_frontier<P: OperatingPoint + Clone>(points: &[P]) -> Result<ParetoFrontier<P>> {
    if points.is_empty() {
        return Err(PolicyError::EmptyGrid);
    }
    let mut sorted: Vec<&P> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.reask_rate()
            .total_cmp(&b.reask_rate())
            .then(b.accuracy().total_cmp(&a.accuracy()))
    });
    let mut frontier = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for p in sorted {
        if p.accuracy() > best {
            best = p.accuracy();
            frontier.push(p.clone());
        }
    }
    Ok(ParetoFrontier { points: frontier })
}
