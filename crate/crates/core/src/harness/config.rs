//! Scenario configuration (JSON) and its validation into runtime objects.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{AffineDynamics, PlantModel, TrackingScenario};
use crate::error::{Error, Result};
use crate::features::{Basis, BasisFamily, FeatureBasis};
use crate::irl_engine::IrlConfig;
use crate::linalg::matrix_from_rows;
use crate::oracle::{ideal_policy_weights, ideal_reward_weights, solve_are, LqrSolution};
use crate::param_estimator::ThetaEstimatorConfig;
use crate::policy_estimator::PolicyEstimatorConfig;
use crate::rls::GainLimits;

use super::report::GroundTruth;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    /// `ẋ = A₀x + B₀u + θᵀ[x; u]`; `theta` is `(n+m)×n`.
    Linear {
        a_nominal: Vec<Vec<f64>>,
        b_nominal: Vec<Vec<f64>>,
        theta: Vec<Vec<f64>>,
    },
    /// `ẋ = (x₂, 0) + θᵀ(x₁, x₂, x₁³, u)`; `theta` is `4×2`.
    Duffing { theta: Vec<Vec<f64>> },
}

/// Linear reference generator `ẋ_d = A_d x_d` with feedforward `u_d = K_d x_d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub matrix: Vec<Vec<f64>>,
    pub feedforward_gain: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

/// Diagonal of the demonstrator's true reward `eᵀdiag(q)e + μᵀdiag(r)μ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub value: Basis,
    pub reward: Basis,
    pub policy: Basis,
}

/// Terminal error tolerances used by the oracle comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub theta: f64,
    pub policy: f64,
    pub value: f64,
    pub reward: f64,
    pub control: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub plant: PlantSpec,
    /// Absent for regulation problems (`x_d ≡ 0`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
    pub initial_state: Vec<f64>,
    pub cost: CostSpec,
    /// Externally supplied feedback `μ = −K e` for plants without an oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demonstrator_gain: Option<Vec<Vec<f64>>>,
    pub basis: BasisConfig,
    pub theta_estimator: ThetaEstimatorConfig,
    pub policy_estimator: PolicyEstimatorConfig,
    pub irl: IrlConfig,
    #[serde(default)]
    pub gain_limits: GainLimits,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    #[serde(default = "yes")]
    pub querying: bool,
    #[serde(default)]
    pub dump_stacks: bool,
    pub tolerances: Tolerances,
}

fn yes() -> bool {
    true
}

fn rows(m: &[f64]) -> Vec<Vec<f64>> {
    m.iter().map(|v| vec![*v]).collect()
}

/// Validated runtime form of a [`ScenarioConfig`].
#[derive(Clone, Debug)]
pub struct Scenario {
    pub tracking: TrackingScenario,
    pub basis: FeatureBasis,
    pub x0: DVector<f64>,
    pub xd0: DVector<f64>,
    /// Demonstrator feedback gain on the tracking error.
    pub demonstrator: DMatrix<f64>,
    pub lqr: Option<LqrSolution>,
    pub truth: GroundTruth,
}

impl ScenarioConfig {
    /// The linear tracking scenario shipped as `configs/tracking.json`.
    pub fn tracking_default() -> Self {
        let n = 2;
        ScenarioConfig {
            plant: PlantSpec::Linear {
                a_nominal: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
                b_nominal: rows(&[0.0, 0.0]),
                theta: vec![vec![0.0, -0.5], vec![0.0, -0.5], vec![0.0, 1.0]],
            },
            reference: Some(ReferenceSpec {
                matrix: vec![vec![0.0, 1.0], vec![-2.0, 0.0]],
                feedforward_gain: vec![vec![-1.5, 0.5]],
                initial: vec![1.0, 0.0],
            }),
            initial_state: vec![0.0, 0.0],
            cost: CostSpec {
                q: vec![1.0, 1.0],
                r: vec![10.0],
            },
            demonstrator_gain: None,
            basis: BasisConfig {
                value: Basis::new(BasisFamily::QuadraticMonomials, n).expect("valid basis"),
                reward: Basis::new(BasisFamily::DiagonalSquares, n).expect("valid basis"),
                policy: Basis::new(BasisFamily::Linear, n).expect("valid basis"),
            },
            theta_estimator: ThetaEstimatorConfig {
                alpha: 1.0,
                beta: 1.0,
                gamma0: 1.0,
                window: 0.25,
                capacity: 50,
                revision_threshold: 1e-3,
                lower: -2.0,
                upper: 2.0,
            },
            policy_estimator: PolicyEstimatorConfig {
                alpha: 1.0,
                beta: 2.0,
                gamma0: 1.0,
                capacity: 50,
                revision_threshold: 1e-3,
                rank_threshold: 1e-3,
            },
            irl: IrlConfig {
                alpha: 0.01 / 50.0,
                beta: 0.5,
                gamma0: 1.0,
                capacity: 50,
                r1: 10.0,
                dwell: 2.0,
                query_box: vec![[-1.0, 1.0]; n],
                query_period: 0.05,
                rank_threshold: 1e-6,
            },
            gain_limits: GainLimits {
                floor: 1e-9,
                ceiling: 1e3,
            },
            dt: 0.005,
            duration: 100.0,
            seed: 7,
            querying: true,
            dump_stacks: false,
            tolerances: Tolerances {
                theta: 1e-2,
                policy: 1e-2,
                value: 0.05,
                reward: 0.05,
                control: 0.05,
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every invariant and assembles the runtime scenario.
    pub fn build(&self) -> Result<Scenario> {
        self.check_scalars()?;
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };

        let (model, theta) = match &self.plant {
            PlantSpec::Linear {
                a_nominal,
                b_nominal,
                theta,
            } => (
                PlantModel::Linear {
                    a_nominal: matrix_from_rows("a_nominal", a_nominal).map_err(cfg_err)?,
                    b_nominal: matrix_from_rows("b_nominal", b_nominal).map_err(cfg_err)?,
                },
                theta,
            ),
            PlantSpec::Duffing { theta } => (PlantModel::Duffing, theta),
        };
        let plant = AffineDynamics::new(model, matrix_from_rows("theta", theta).map_err(cfg_err)?)
            .map_err(cfg_err)?;
        let (n, m) = (plant.state_dim(), plant.input_dim());

        let x0 = vector("initial_state", &self.initial_state, n)?;
        let (tracking, xd0) = match &self.reference {
            Some(r) => {
                if plant.linear_matrices(plant.theta_true()).is_none() {
                    return Err(Error::Config(
                        "reference tracking needs a linear plant so the error obeys the plant's form".into(),
                    ));
                }
                let sc = TrackingScenario::new(
                    plant.clone(),
                    matrix_from_rows("reference.matrix", &r.matrix).map_err(cfg_err)?,
                    matrix_from_rows("reference.feedforward_gain", &r.feedforward_gain)
                        .map_err(cfg_err)?,
                )
                .map_err(cfg_err)?;
                let defect = sc.error_dynamics_defect().unwrap_or(f64::INFINITY);
                if defect > 1e-9 {
                    return Err(Error::Config(format!(
                        "feedforward does not reproduce the reference: ‖A + B K_d − A_d‖ = {defect:e}"
                    )));
                }
                (sc, vector("reference.initial", &r.initial, n)?)
            }
            None => (
                TrackingScenario::new(plant.clone(), DMatrix::zeros(n, n), DMatrix::zeros(m, n))
                    .map_err(cfg_err)?,
                DVector::zeros(n),
            ),
        };

        let basis = FeatureBasis::new(
            self.basis.value.clone(),
            self.basis.reward.clone(),
            self.basis.policy.clone(),
            m,
        )
        .map_err(cfg_err)?;
        if basis.state_dim() != n {
            return Err(Error::Config(format!(
                "bases are built for {} states but the plant has {n}",
                basis.state_dim()
            )));
        }
        self.check_capacities(&plant, &basis)?;
        if self.irl.query_box.len() != n {
            return Err(Error::Config(format!("query_box needs {n} intervals")));
        }
        if self.cost.q.len() != n || self.cost.r.len() != m {
            return Err(Error::Config(format!("cost needs q of length {n} and r of length {m}")));
        }
        if self.cost.q.iter().chain(&self.cost.r).any(|v| !(*v > 0.0)) {
            return Err(Error::Config("cost diagonals must be positive".into()));
        }

        let theta_rows = theta.clone();
        let (demonstrator, lqr, truth) = match plant.linear_matrices(plant.theta_true()) {
            Some((a, b)) => {
                if self.demonstrator_gain.is_some() {
                    return Err(Error::Config(
                        "linear scenarios use the Riccati-optimal demonstrator; remove demonstrator_gain".into(),
                    ));
                }
                let q = DMatrix::from_diagonal(&DVector::from_column_slice(&self.cost.q));
                let r = DMatrix::from_diagonal(&DVector::from_column_slice(&self.cost.r));
                let sol = solve_are(&a, &b, &q, &r).map_err(cfg_err)?;
                let truth = GroundTruth::from_oracle(theta_rows, &sol, &basis, &self.cost, self.irl.r1);
                (sol.gain.clone(), Some(sol), truth)
            }
            None => {
                let gain = self.demonstrator_gain.as_ref().ok_or_else(|| {
                    Error::Config("nonlinear plants need an explicit demonstrator_gain".into())
                })?;
                let gain = matrix_from_rows("demonstrator_gain", gain).map_err(cfg_err)?;
                if gain.shape() != (m, n) {
                    return Err(Error::Config(format!("demonstrator_gain must be {m}×{n}")));
                }
                (gain, None, GroundTruth::theta_only(theta_rows))
            }
        };

        Ok(Scenario {
            tracking,
            basis,
            x0,
            xd0,
            demonstrator,
            lqr,
            truth,
        })
    }

    fn check_scalars(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("theta_estimator.alpha", self.theta_estimator.alpha),
            ("theta_estimator.beta", self.theta_estimator.beta),
            ("theta_estimator.gamma0", self.theta_estimator.gamma0),
            ("theta_estimator.window", self.theta_estimator.window),
            ("policy_estimator.alpha", self.policy_estimator.alpha),
            ("policy_estimator.beta", self.policy_estimator.beta),
            ("policy_estimator.gamma0", self.policy_estimator.gamma0),
            ("policy_estimator.rank_threshold", self.policy_estimator.rank_threshold),
            ("irl.alpha", self.irl.alpha),
            ("irl.beta", self.irl.beta),
            ("irl.gamma0", self.irl.gamma0),
            ("irl.r1", self.irl.r1),
            ("irl.dwell", self.irl.dwell),
            ("irl.query_period", self.irl.query_period),
            ("irl.rank_threshold", self.irl.rank_threshold),
            ("gain_limits.floor", self.gain_limits.floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.gain_limits.ceiling > self.gain_limits.floor) {
            return Err(Error::Config("gain_limits.ceiling must exceed the floor".into()));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!("duration must be non-negative, got {}", self.duration)));
        }
        // A zero-length run is allowed as a degenerate no-op.
        if self.duration > 0.0 && self.duration < self.irl.dwell {
            return Err(Error::Config(format!(
                "duration {} is shorter than the dwell time {}",
                self.duration, self.irl.dwell
            )));
        }
        if self.theta_estimator.window < self.dt {
            return Err(Error::Config("theta_estimator.window must cover at least one step".into()));
        }
        Ok(())
    }

    fn check_capacities(&self, plant: &AffineDynamics, basis: &FeatureBasis) -> Result<()> {
        let needs = [
            ("theta_estimator.capacity", self.theta_estimator.capacity, plant.feature_dim()),
            ("policy_estimator.capacity", self.policy_estimator.capacity, basis.policy.len()),
            ("irl.capacity", self.irl.capacity, basis.reward_weight_dim()),
        ];
        for (name, have, need) in needs {
            if have < need {
                return Err(Error::Config(format!(
                    "{name} = {have} is below the regressor dimension {need}"
                )));
            }
        }
        Ok(())
    }
}

fn vector(name: &str, v: &[f64], n: usize) -> Result<DVector<f64>> {
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{name} must hold {n} finite values")));
    }
    Ok(DVector::from_column_slice(v))
}

/// Ideal policy and reward weights, when the bases admit them.
pub(crate) fn ideal_weights(
    sol: &LqrSolution,
    basis: &FeatureBasis,
    cost: &CostSpec,
    r1: f64,
) -> (Option<DMatrix<f64>>, Option<DVector<f64>>) {
    let policy = ideal_policy_weights(sol, &basis.policy).ok();
    let quadratic = basis.value.family() == BasisFamily::QuadraticMonomials
        && basis.reward.family() == BasisFamily::DiagonalSquares;
    let reward = if quadratic {
        ideal_reward_weights(sol, &cost.q, &cost.r, r1).ok()
    } else {
        None
    };
    (policy, reward)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_file_matches_default() {
        let text = include_str!("../../../../configs/tracking.json");
        assert_eq!(ScenarioConfig::from_json(text).unwrap(), ScenarioConfig::tracking_default());
    }

    #[test]
    fn round_trip() {
        let cfg = ScenarioConfig::tracking_default();
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn default_builds_with_oracle_truth() {
        let sc = ScenarioConfig::tracking_default().build().unwrap();
        let sol = sc.lqr.unwrap();
        assert!((sol.gain[(0, 0)] - 0.09160797830996158).abs() < 1e-10);
        let w = sc.truth.value_weights.unwrap();
        assert!((w[2] - 1.8321595661992314).abs() < 1e-10);
        assert_eq!(sc.truth.reward_weights.unwrap(), vec![1.0, 1.0]);
        assert!(sc.truth.control_weights.unwrap().is_empty());
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        let mut v: serde_json::Value =
            serde_json::from_str(&ScenarioConfig::tracking_default().to_json()).unwrap();
        v["speed"] = serde_json::json!(3);
        assert!(matches!(ScenarioConfig::from_json(&v.to_string()), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        let base = ScenarioConfig::tracking_default();
        let mut bad = Vec::new();
        let mut c = base.clone();
        c.dt = 0.0;
        bad.push(c);
        let mut c = base.clone();
        c.irl.alpha = -1.0;
        bad.push(c);
        let mut c = base.clone();
        c.duration = 1.0;
        bad.push(c);
        let mut c = base.clone();
        c.irl.capacity = 4;
        bad.push(c);
        let mut c = base.clone();
        c.policy_estimator.capacity = 1;
        bad.push(c);
        let mut c = base.clone();
        c.initial_state = vec![0.0];
        bad.push(c);
        let mut c = base.clone();
        c.reference.as_mut().unwrap().feedforward_gain = vec![vec![-1.0, 0.5]];
        bad.push(c);
        let mut c = base.clone();
        c.cost.r = vec![0.0];
        bad.push(c);
        let mut c = base.clone();
        c.demonstrator_gain = Some(vec![vec![0.1, 0.2]]);
        bad.push(c);
        let mut c = base.clone();
        c.basis.value = Basis::new(BasisFamily::QuadraticMonomials, 3).unwrap();
        c.basis.reward = Basis::new(BasisFamily::DiagonalSquares, 3).unwrap();
        c.basis.policy = Basis::new(BasisFamily::Linear, 3).unwrap();
        bad.push(c);
        for c in bad {
            assert!(matches!(c.build(), Err(Error::Config(_))), "{c:?}");
        }
        let mut c = base;
        c.duration = 0.0;
        assert!(c.build().is_ok());
    }

    #[test]
    fn nonlinear_plant_needs_demonstrator() {
        let mut c = ScenarioConfig::tracking_default();
        c.plant = PlantSpec::Duffing {
            theta: vec![vec![0.0, -1.0], vec![0.0, -0.2], vec![0.0, -0.5], vec![0.0, 1.0]],
        };
        c.reference = None;
        c.theta_estimator.capacity = 50;
        assert!(matches!(c.build(), Err(Error::Config(_))));
        c.demonstrator_gain = Some(vec![vec![0.5, 0.8]]);
        let sc = c.build().unwrap();
        assert!(sc.lqr.is_none());
        assert!(sc.truth.value_weights.is_none());
    }
}
