//! Online inverse reinforcement learning with limited data.
//!
//! An observed agent drives a control-affine plant optimally with respect to
//! an unknown reward `r(x, u) = Q(x) + uᵀRu`. Three estimators run together on
//! a shared clock:
//!
//! * [`param_estimator`] identifies the uncertain drift parameters θ with
//!   integral concurrent learning,
//! * [`policy_estimator`] fits the agent's optimal feedback policy from the
//!   observed state/control pairs,
//! * [`irl_engine`] queries the fitted policy at arbitrary states and recovers
//!   the value and reward weights from the resulting inverse Bellman and
//!   stationarity residuals.
//!
//! [`oracle`] supplies Riccati ground truth for linear-quadratic scenarios and
//! [`harness`] wires everything into a deterministic closed-loop simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod features;
pub mod harness;
pub mod history;
pub mod irl_engine;
pub mod linalg;
pub mod oracle;
pub mod param_estimator;
pub mod policy_estimator;
pub mod rls;

pub use dynamics::{AffineDynamics, PlantModel, TrackingScenario};
pub use error::{Error, Result};
pub use features::{control_square_features, Basis, BasisFamily, FeatureBasis};
pub use harness::{
    compare_to_oracle, emit_csv, run_ablation, run_scenario, AblationReport, ComparisonReport,
    FinalEstimates, GroundTruth, MetricsRecord, RunOutput, ScenarioConfig,
};
pub use history::{HistoryStack, StackEntry};
pub use irl_engine::{EstimateTag, RewardEstimate};
pub use oracle::{solve_are, LqrSolution};
pub use rls::GainLimits;
pub use param_estimator::{StepEvents, ThetaEstimate};
pub use policy_estimator::PolicyEstimate;

pub use nalgebra::{DMatrix, DVector};
