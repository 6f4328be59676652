//! Ground truth, terminal estimates and their comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureBasis;
use crate::linalg::matrix_to_rows;
use crate::oracle::LqrSolution;

use super::config::{ideal_weights, CostSpec, Tolerances};
use super::metrics::MetricsRecord;

/// Everything the estimators are scored against. Fields without a known
/// value (nonlinear plants, non-quadratic bases) are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub theta: Vec<Vec<f64>>,
    pub p: Option<Vec<Vec<f64>>>,
    pub lqr_gain: Option<Vec<Vec<f64>>>,
    pub riccati_residual: Option<f64>,
    pub policy_weights: Option<Vec<Vec<f64>>>,
    pub value_weights: Option<Vec<f64>>,
    pub reward_weights: Option<Vec<f64>>,
    /// `W_R⁻` relative to the scale anchor.
    pub control_weights: Option<Vec<f64>>,
}

impl GroundTruth {
    pub(crate) fn from_oracle(
        theta: Vec<Vec<f64>>,
        sol: &LqrSolution,
        basis: &FeatureBasis,
        cost: &CostSpec,
        r1: f64,
    ) -> Self {
        let (policy, reward) = ideal_weights(sol, basis, cost, r1);
        let (pv, pq) = (basis.value.len(), basis.reward.len());
        let split = reward.map(|w| {
            (
                w.rows(0, pv).iter().copied().collect::<Vec<_>>(),
                w.rows(pv, pq).iter().copied().collect::<Vec<_>>(),
                w.rows(pv + pq, w.len() - pv - pq).iter().copied().collect::<Vec<_>>(),
            )
        });
        let (value_weights, reward_weights, control_weights) = match split {
            Some((v, q, r)) => (Some(v), Some(q), Some(r)),
            None => (None, None, None),
        };
        GroundTruth {
            theta,
            p: Some(matrix_to_rows(&sol.p)),
            lqr_gain: Some(matrix_to_rows(&sol.gain)),
            riccati_residual: Some(sol.residual),
            policy_weights: policy.as_ref().map(matrix_to_rows),
            value_weights,
            reward_weights,
            control_weights,
        }
    }

    pub(crate) fn theta_only(theta: Vec<Vec<f64>>) -> Self {
        GroundTruth {
            theta,
            p: None,
            lqr_gain: None,
            riccati_residual: None,
            policy_weights: None,
            value_weights: None,
            reward_weights: None,
            control_weights: None,
        }
    }

    /// `[W_V; W_Q; W_R⁻]` when all three parts are known.
    pub fn irl_weights(&self) -> Option<Vec<f64>> {
        let mut w = self.value_weights.clone()?;
        w.extend(self.reward_weights.as_ref()?);
        w.extend(self.control_weights.as_ref()?);
        Some(w)
    }
}

/// Estimates at the end of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalEstimates {
    pub theta_hat: Vec<Vec<f64>>,
    pub policy_weights: Vec<Vec<f64>>,
    pub value_weights: Vec<f64>,
    pub reward_weights: Vec<f64>,
    pub control_weights: Vec<f64>,
    pub r1: f64,
    pub theta_generation: u64,
    pub policy_generation: u64,
    pub purge_times: Vec<f64>,
    pub gain_resets: GainResets,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GainResets {
    pub theta: u64,
    pub policy: u64,
    pub irl: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub quantity: String,
    pub error: Option<f64>,
    pub tolerance: f64,
    /// `None` when there is nothing to compare against.
    pub pass: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub entries: Vec<ReportEntry>,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn entry(&self, quantity: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.quantity == quantity)
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> Option<f64> {
    (a.len() == b.len()).then(|| {
        a.iter()
            .zip(b)
            .fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y))
            .sqrt()
    })
}

pub(crate) fn matrix_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Option<f64> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return None;
    }
    let flat = |m: &[Vec<f64>]| m.concat();
    distance(&flat(a), &flat(b))
}

fn entry(quantity: &str, tolerance: f64, error: Option<Option<f64>>) -> ReportEntry {
    let (error, pass, note) = match error {
        None => (None, None, Some("no ground truth".to_string())),
        Some(None) => (None, Some(false), Some("dimension mismatch".to_string())),
        Some(Some(e)) => (Some(e), Some(e < tolerance), None),
    };
    ReportEntry {
        quantity: quantity.to_string(),
        error,
        tolerance,
        pass,
        note,
    }
}

/// Terminal error norms against the ground truth. Quantities without a
/// reference value are reported as "no ground truth" and do not affect the
/// overall verdict.
pub fn compare_to_oracle(
    estimates: &FinalEstimates,
    truth: &GroundTruth,
    tol: &Tolerances,
) -> ComparisonReport {
    let entries = vec![
        entry(
            "theta",
            tol.theta,
            Some(matrix_distance(&estimates.theta_hat, &truth.theta)),
        ),
        entry(
            "policy_weights",
            tol.policy,
            truth
                .policy_weights
                .as_ref()
                .map(|w| matrix_distance(&estimates.policy_weights, w)),
        ),
        entry(
            "value_weights",
            tol.value,
            truth
                .value_weights
                .as_ref()
                .map(|w| distance(&estimates.value_weights, w)),
        ),
        entry(
            "reward_weights",
            tol.reward,
            truth
                .reward_weights
                .as_ref()
                .map(|w| distance(&estimates.reward_weights, w)),
        ),
        entry(
            "control_weights",
            tol.control,
            truth
                .control_weights
                .as_ref()
                .map(|w| distance(&estimates.control_weights, w)),
        ),
    ];
    let pass = entries.iter().all(|e| e.pass != Some(false));
    ComparisonReport { entries, pass }
}

/// Querying versus trajectory-only IRL on the same scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// Terminal `‖W̃‖` with querying.
    pub query_error: f64,
    /// Terminal `‖W̃‖` without querying.
    pub no_query_error: f64,
    pub ratio: f64,
    pub required_ratio: f64,
    /// Largest relative change of `‖W̃‖` over the final half of the
    /// no-query run.
    pub plateau_change: f64,
    pub plateau_tolerance: f64,
    pub ratio_pass: bool,
    pub plateau_pass: bool,
    pub pass: bool,
}

/// Largest `|‖W̃(t)‖ − ‖W̃(T/2)‖| / ‖W̃(T/2)‖` over `t ∈ [T/2, T]`.
pub fn plateau_change(records: &[MetricsRecord]) -> Result<f64> {
    let last = records
        .last()
        .ok_or_else(|| Error::InvalidInput("plateau needs a non-empty run".into()))?;
    let half = 0.5 * last.t;
    let tail: Vec<f64> = records
        .iter()
        .filter(|r| r.t >= half)
        .map(|r| r.weight_error)
        .collect();
    let reference = tail[0];
    if !reference.is_finite() || reference == 0.0 {
        return Err(Error::Unsupported("plateau needs a finite non-zero weight error".into()));
    }
    Ok(tail
        .iter()
        .map(|w| (w - reference).abs() / reference)
        .fold(0.0, f64::max))
}

pub fn ablation_report(
    query: &[MetricsRecord],
    no_query: &[MetricsRecord],
) -> Result<AblationReport> {
    let terminal = |r: &[MetricsRecord]| {
        r.last()
            .map(|m| m.weight_error)
            .filter(|w| w.is_finite())
            .ok_or_else(|| Error::Unsupported("ablation needs ground-truth reward weights".into()))
    };
    let query_error = terminal(query)?;
    let no_query_error = terminal(no_query)?;
    let ratio = no_query_error / query_error;
    let plateau = plateau_change(no_query)?;
    let (required_ratio, plateau_tolerance) = (10.0, 0.05);
    let ratio_pass = ratio >= required_ratio;
    let plateau_pass = plateau < plateau_tolerance;
    Ok(AblationReport {
        query_error,
        no_query_error,
        ratio,
        required_ratio,
        plateau_change: plateau,
        plateau_tolerance,
        ratio_pass,
        plateau_pass,
        pass: ratio_pass && plateau_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances {
            theta: 1e-2,
            policy: 1e-2,
            value: 0.05,
            reward: 0.05,
            control: 0.05,
        }
    }

    fn truth() -> GroundTruth {
        GroundTruth {
            theta: vec![vec![0.0, -0.5], vec![0.0, -0.5], vec![0.0, 1.0]],
            p: None,
            lqr_gain: None,
            riccati_residual: None,
            policy_weights: Some(vec![vec![0.0916], vec![0.2302]]),
            value_weights: Some(vec![1.82, 2.30, 1.83]),
            reward_weights: Some(vec![1.0, 1.0]),
            control_weights: Some(vec![]),
        }
    }

    fn exact(t: &GroundTruth) -> FinalEstimates {
        FinalEstimates {
            theta_hat: t.theta.clone(),
            policy_weights: t.policy_weights.clone().unwrap(),
            value_weights: t.value_weights.clone().unwrap(),
            reward_weights: t.reward_weights.clone().unwrap(),
            control_weights: vec![],
            r1: 10.0,
            theta_generation: 0,
            policy_generation: 0,
            purge_times: vec![],
            gain_resets: GainResets::default(),
        }
    }

    #[test]
    fn exact_estimates_pass_with_zero_error() {
        let t = truth();
        let r = compare_to_oracle(&exact(&t), &t, &tol());
        assert!(r.pass);
        assert!(r.entries.iter().all(|e| e.error == Some(0.0)));
    }

    #[test]
    fn small_reward_error_passes() {
        let t = truth();
        let mut e = exact(&t);
        e.reward_weights = vec![1.02, 0.99];
        let r = compare_to_oracle(&e, &t, &tol());
        let q = r.entry("reward_weights").unwrap();
        assert!((q.error.unwrap() - 0.0005f64.sqrt()).abs() < 1e-12);
        assert!((q.error.unwrap() - 0.022).abs() < 5e-4);
        assert!(r.pass);
    }

    #[test]
    fn dimension_mismatch_fails() {
        let t = truth();
        let mut e = exact(&t);
        e.control_weights = vec![3.0];
        let r = compare_to_oracle(&e, &t, &tol());
        assert_eq!(r.entry("control_weights").unwrap().pass, Some(false));
        assert!(!r.pass);
    }

    #[test]
    fn missing_truth_is_not_a_failure() {
        let t = GroundTruth::theta_only(truth().theta);
        let r = compare_to_oracle(&exact(&truth()), &t, &tol());
        assert!(r.pass);
        let v = r.entry("value_weights").unwrap();
        assert_eq!(v.pass, None);
        assert_eq!(v.note.as_deref(), Some("no ground truth"));
    }

    #[test]
    fn tolerance_breach_fails() {
        let t = truth();
        let mut e = exact(&t);
        e.theta_hat[2][1] = 1.1;
        assert!(!compare_to_oracle(&e, &t, &tol()).pass);
    }
}
