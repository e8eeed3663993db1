//! Uncertainty and scoring metrics over a multiple-choice answer distribution.
//!
//! Everything here is a pure function of an [`AnswerDistribution`]: Shannon
//! entropy in nats, entropy normalized by `ln K`, maximum softmax probability
//! (MSP), and the two proper scoring rules used as post-hoc diagnostics
//! (Brier score and negative log-likelihood of the gold option).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest supported option count.
pub const MIN_OPTIONS: usize = 2;
/// Largest supported option count (one per capital letter).
pub const MAX_OPTIONS: usize = 26;
/// Weight substituted for option letters that never appear among the returned
/// top-logprob candidates.
pub const PROBABILITY_FLOOR: f64 = 1e-10;
/// Tolerance on `sum(probs) == 1`.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("option count {0} outside supported range {MIN_OPTIONS}..={MAX_OPTIONS}")]
    InvalidOptionCount(usize),
    #[error("expected {expected} weights, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("weight {value} at index {index} is negative or not finite")]
    InvalidWeight { index: usize, value: f64 },
    #[error("all option weights are zero after flooring")]
    DegenerateDistribution,
    #[error("probability {value} at index {index} outside [0, 1]")]
    InvalidProbability { index: usize, value: f64 },
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("label {label} out of range for {k} options")]
    InvalidLabel { label: usize, k: usize },
    #[error("probability floor {0} must be finite and in [0, 1)")]
    InvalidFloor(f64),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn check_option_count(k: usize) -> Result<()> {
    if (MIN_OPTIONS..=MAX_OPTIONS).contains(&k) {
        Ok(())
    } else {
        Err(MetricsError::InvalidOptionCount(k))
    }
}

/// A normalized probability vector over the `K` options of one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AnswerDistribution {
    probs: Vec<f64>,
}

impl AnswerDistribution {
    /// Validates an already-normalized probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_option_count(probs.len())?;
        for (index, &value) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(MetricsError::InvalidProbability { index, value });
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(MetricsError::NotNormalized(total));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        check_option_count(k)?;
        Ok(Self {
            probs: vec![1.0 / k as f64; k],
        })
    }

    pub fn one_hot(k: usize, index: usize) -> Result<Self> {
        check_option_count(k)?;
        if index >= k {
            return Err(MetricsError::InvalidLabel { label: index, k });
        }
        let mut probs = vec![0.0; k];
        probs[index] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.probs.get(index).copied()
    }
}

impl TryFrom<Vec<f64>> for AnswerDistribution {
    type Error = MetricsError;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<AnswerDistribution> for Vec<f64> {
    fn from(d: AnswerDistribution) -> Self {
        d.probs
    }
}

/// Turns raw non-negative option weights into a distribution.
///
/// Zero entries (letters absent from the returned candidates) are replaced by
/// `floor` before dividing by the total, so with the default floor every
/// option keeps a small positive mass.
pub fn normalize_option_weights(raw: &[f64], k: usize, floor: f64) -> Result<AnswerDistribution> {
    check_option_count(k)?;
    if raw.len() != k {
        return Err(MetricsError::LengthMismatch {
            expected: k,
            actual: raw.len(),
        });
    }
    if !floor.is_finite() || !(0.0..1.0).contains(&floor) {
        return Err(MetricsError::InvalidFloor(floor));
    }
    let mut weights = Vec::with_capacity(k);
    for (index, &w) in raw.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(MetricsError::InvalidWeight { index, value: w });
        }
        weights.push(if w == 0.0 { floor } else { w });
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(MetricsError::DegenerateDistribution);
    }
    for w in &mut weights {
        *w /= total;
    }
    Ok(AnswerDistribution { probs: weights })
}

/// Shannon entropy in nats; zero-probability terms contribute nothing.
pub fn entropy_nats(p: &AnswerDistribution) -> f64 {
    let h: f64 = p
        .probs
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum();
    // Rounding can push a one-hot distribution to -0.0.
    h.max(0.0)
}

pub fn normalized_entropy(p: &AnswerDistribution) -> Result<f64> {
    let k = p.k();
    check_option_count(k)?;
    Ok(entropy_nats(p) / (k as f64).ln())
}

/// Maximum softmax probability.
pub fn msp(p: &AnswerDistribution) -> f64 {
    p.probs.iter().copied().fold(0.0, f64::max)
}

/// Index of the most probable option, lowest index on ties.
pub fn argmax_option(p: &AnswerDistribution) -> usize {
    argmax_index(&p.probs)
}

/// Same tie rule as [`argmax_option`] over a raw slice; 0 when empty.
pub fn argmax_index(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn brier(p: &AnswerDistribution, label: usize) -> Result<f64> {
    let k = p.k();
    if label >= k {
        return Err(MetricsError::InvalidLabel { label, k });
    }
    Ok(p.probs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let target = if i == label { 1.0 } else { 0.0 };
            (x - target).powi(2)
        })
        .sum())
}

/// `-ln P_y`, with `P_y` clamped from below at `floor`.
///
/// A zero floor with `P_y == 0` yields `+inf`.
pub fn nll(p: &AnswerDistribution, label: usize, floor: f64) -> Result<f64> {
    let k = p.k();
    if label >= k {
        return Err(MetricsError::InvalidLabel { label, k });
    }
    let py = p.probs[label].max(floor);
    Ok(if py >= 1.0 { 0.0 } else { -py.ln() })
}

/// Entropy, normalized entropy and MSP of one distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyMetrics {
    pub entropy_nats: f64,
    pub normalized_entropy: f64,
    pub msp: f64,
}

impl UncertaintyMetrics {
    pub fn of(p: &AnswerDistribution) -> Self {
        let h = entropy_nats(p);
        Self {
            entropy_nats: h,
            normalized_entropy: h / (p.k() as f64).ln(),
            msp: msp(p),
        }
    }

    /// Field-wise comparison within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self.entropy_nats - other.entropy_nats).abs() <= tol
            && (self.normalized_entropy - other.normalized_entropy).abs() <= tol
            && (self.msp - other.msp).abs() <= tol
    }
}

/// Proper scoring rules against the gold label. Computed post hoc only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringValues {
    pub brier: f64,
    #[serde(with = "crate::serde_float::extended")]
    pub nll: f64,
}

impl ScoringValues {
    pub fn of(p: &AnswerDistribution, label: usize, floor: f64) -> Result<Self> {
        Ok(Self {
            brier: brier(p, label)?,
            nll: nll(p, label, floor)?,
        })
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let nll_eq = if self.nll.is_infinite() || other.nll.is_infinite() {
            self.nll == other.nll
        } else {
            (self.nll - other.nll).abs() <= tol
        };
        (self.brier - other.brier).abs() <= tol && nll_eq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn dist(v: &[f64]) -> AnswerDistribution {
        AnswerDistribution::new(v.to_vec()).unwrap()
    }

    fn padded(head: &[f64], k: usize) -> Vec<f64> {
        let mut v = head.to_vec();
        v.resize(k, 0.0);
        v
    }

    #[test]
    fn normalize_uniform_weights() {
        let d = normalize_option_weights(&[1.0; 10], 10, PROBABILITY_FLOOR).unwrap();
        for &p in d.probs() {
            assert!((p - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_proportional_with_zero_floor() {
        let d = normalize_option_weights(&padded(&[7.0, 3.0], 10), 10, 0.0).unwrap();
        assert!((d.probs()[0] - 0.7).abs() < 1e-15);
        assert!((d.probs()[1] - 0.3).abs() < 1e-15);
        assert!(d.probs()[2..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn normalize_floors_absent_letters() {
        // Softmax weights for three present letters; the other seven are absent.
        let present = [(-0.2f64).exp(), (-1.9f64).exp(), (-3.1f64).exp()];
        let raw = padded(&present, 10);
        let d = normalize_option_weights(&raw, 10, PROBABILITY_FLOOR).unwrap();

        // Oracle: exact rational-style accumulation with compensated summation.
        let mut z = 0.0f64;
        let mut comp = 0.0f64;
        for w in present.iter().copied().chain(std::iter::repeat_n(PROBABILITY_FLOOR, 7)) {
            let y = w - comp;
            let t = z + y;
            comp = (t - z) - y;
            z = t;
        }
        for &p in &d.probs()[3..] {
            assert!((p - PROBABILITY_FLOOR / z).abs() < 1e-24);
        }
        let mut s = 0.0f64;
        let mut c = 0.0f64;
        for &p in d.probs() {
            let y = p - c;
            let t = s + y;
            c = (t - s) - y;
            s = t;
        }
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_errors() {
        assert_eq!(
            normalize_option_weights(&[0.0; 4], 4, 0.0),
            Err(MetricsError::DegenerateDistribution)
        );
        assert!(matches!(
            normalize_option_weights(&[1.0; 3], 4, 0.0),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            normalize_option_weights(&[1.0, -1.0], 2, 0.0),
            Err(MetricsError::InvalidWeight { index: 1, .. })
        ));
        assert!(matches!(
            normalize_option_weights(&[1.0], 1, 0.0),
            Err(MetricsError::InvalidOptionCount(1))
        ));
    }

    #[test]
    fn new_rejects_unnormalized() {
        assert!(matches!(
            AnswerDistribution::new(vec![0.5, 0.6]),
            Err(MetricsError::NotNormalized(_))
        ));
        assert!(matches!(
            AnswerDistribution::new(vec![1.5, -0.5]),
            Err(MetricsError::InvalidProbability { .. })
        ));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn entropy_examples() {
        let u = AnswerDistribution::uniform(10).unwrap();
        assert!((entropy_nats(&u) - 10f64.ln()).abs() < 1e-12);
        assert!((entropy_nats(&u) - 2.302585).abs() < 1e-6);
        assert_eq!(entropy_nats(&AnswerDistribution::one_hot(10, 3).unwrap()), 0.0);
        let half = dist(&padded(&[0.5, 0.5], 10));
        assert!((entropy_nats(&half) - LN_2).abs() < 1e-15);
    }

    #[test]
    fn normalized_entropy_examples() {
        for k in [2, 4, 10, 26] {
            let u = AnswerDistribution::uniform(k).unwrap();
            assert!((normalized_entropy(&u).unwrap() - 1.0).abs() < 1e-12);
            let o = AnswerDistribution::one_hot(k, 0).unwrap();
            assert_eq!(normalized_entropy(&o).unwrap(), 0.0);
        }
        assert!((1.3 / 10f64.ln() - 0.565).abs() < 1e-3);
    }

    #[test]
    fn msp_examples() {
        assert_eq!(msp(&dist(&[0.7, 0.2, 0.1])), 0.7);
        assert!((msp(&AnswerDistribution::uniform(10).unwrap()) - 0.1).abs() < 1e-15);
        assert_eq!(msp(&AnswerDistribution::uniform(4).unwrap()), 0.25);
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&AnswerDistribution::one_hot(10, 4).unwrap(), 4).unwrap(), 0.0);
        let u = AnswerDistribution::uniform(10).unwrap();
        for y in 0..10 {
            assert!((brier(&u, y).unwrap() - 0.9).abs() < 1e-12);
        }
        assert_eq!(brier(&AnswerDistribution::one_hot(10, 4).unwrap(), 5).unwrap(), 2.0);
        assert!(matches!(brier(&u, 10), Err(MetricsError::InvalidLabel { .. })));
    }

    #[test]
    fn nll_examples() {
        let o = AnswerDistribution::one_hot(10, 2).unwrap();
        assert_eq!(nll(&o, 2, PROBABILITY_FLOOR).unwrap(), 0.0);
        let u = AnswerDistribution::uniform(10).unwrap();
        assert!((nll(&u, 7, PROBABILITY_FLOOR).unwrap() - 10f64.ln()).abs() < 1e-12);
        let v = nll(&o, 0, PROBABILITY_FLOOR).unwrap();
        assert!((v - 23.025850929940457).abs() < 1e-9);
        assert!(nll(&o, 0, 0.0).unwrap().is_infinite());
        assert!(matches!(nll(&u, 11, 0.0), Err(MetricsError::InvalidLabel { .. })));
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_option(&dist(&[0.1, 0.6, 0.3])), 1);
        assert_eq!(argmax_option(&dist(&[0.5, 0.5])), 0);
        assert_eq!(argmax_option(&AnswerDistribution::uniform(10).unwrap()), 0);
    }

    #[test]
    fn serde_validates() {
        let d = dist(&[0.25, 0.75]);
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, "[0.25,0.75]");
        assert_eq!(serde_json::from_str::<AnswerDistribution>(&s).unwrap(), d);
        assert!(serde_json::from_str::<AnswerDistribution>("[0.5,0.6]").is_err());
    }

    fn weights() -> impl Strategy<Value = Vec<f64>> {
        prop_oneof![Just(2usize), Just(4usize), Just(10usize)]
            .prop_flat_map(|k| proptest::collection::vec(0.0f64..10.0, k))
            .prop_filter("positive mass", |w| w.iter().any(|&x| x > 1e-6))
    }

    proptest! {
        #[test]
        fn entropy_bounded(w in weights()) {
            let d = normalize_option_weights(&w, w.len(), PROBABILITY_FLOOR).unwrap();
            let h = entropy_nats(&d);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (d.k() as f64).ln() + 1e-9);
            prop_assert!(msp(&d) >= 1.0 / d.k() as f64 - 1e-12);
        }

        #[test]
        fn scale_invariance(w in weights(), c in 1e-3f64..1e3) {
            let k = w.len();
            let a = normalize_option_weights(&w, k, 0.0).unwrap();
            let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            let b = normalize_option_weights(&scaled, k, 0.0).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert_eq!(argmax_option(&a), argmax_option(&b));
        }
    }
}
