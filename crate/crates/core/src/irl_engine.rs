//! Reward and value function recovery from queried state–action pairs.
//!
//! For a state `xᵢ` and a control `ûᵢ` (either queried from the estimated
//! policy or observed on the trajectory) the engine builds one row block of
//! the stacked system `Σ̂ W = −Σ̂_{u1}`:
//!
//! * the inverse Bellman row
//!   `[ (∇σ_V(xᵢ) Ŷ)ᵀ, σ_Q(xᵢ)ᵀ, σᵤ⁻(ûᵢ)ᵀ ]` with offset `r₁ û₁²`, where
//!   `Ŷ = f°(xᵢ, ûᵢ) + θ̂ᵀσ(xᵢ, ûᵢ)`;
//! * one stationarity row per control channel `j`, from
//!   `−2Rû = Gᵀ W_V` with `G = ∇σ_V(xᵢ) (∇ᵤf° + θ̂ᵀ∇ᵤσ)`:
//!   `[ G[:, j]ᵀ, 0, 2ûⱼ at the W_R⁻ slot of channel j ]`, and for `j = 1`
//!   the offset `2 r₁ û₁` instead of a weight slot.
//!
//! The first control weight `r₁` is fixed by convention to resolve the scale
//! ambiguity of the reward; `W = [W_V; W_Q; W_R⁻]` is estimated relative to it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::AffineDynamics;
use crate::error::{check_finite, check_len, Error, Result};
use crate::features::{control_square_features, FeatureBasis};
use crate::history::HistoryStack;
use crate::param_estimator::{StepEvents, ThetaSnapshot};
use crate::policy_estimator::PolicySnapshot;
use crate::rls::{GainLimits, LeastSquaresGain};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrlConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub gamma0: f64,
    pub capacity: usize,
    /// Known first control weight (scale anchor).
    pub r1: f64,
    /// Minimum dwell time between purges, seconds.
    pub dwell: f64,
    /// Per-dimension sampling interval `[lo, hi]` for queried states.
    pub query_box: Vec<[f64; 2]>,
    /// Simulated seconds between two queries.
    pub query_period: f64,
    /// Lower bound σ̲ on `λ_min(Σ̂ᵀΣ̂)` for the stack to count as full rank.
    pub rank_threshold: f64,
}

fn one() -> f64 {
    1.0
}

/// Generations of the estimates a row block was built from.
///
/// Rows built from observed controls do not depend on the policy estimate
/// and carry `policy_generation: None`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EstimateTag {
    pub theta_generation: u64,
    pub policy_generation: Option<u64>,
}

impl EstimateTag {
    /// Whether `newer` supersedes the estimates this tag records.
    pub fn is_stale(&self, newer: &EstimateTag) -> bool {
        newer.theta_generation > self.theta_generation
            || matches!(
                (self.policy_generation, newer.policy_generation),
                (Some(old), Some(new)) if new > old
            )
    }
}

/// `δ′ = W_Vᵀ ∇σ_V(x) Ŷ(x, u, θ̂) + W_Qᵀσ_Q(x) + W_Rᵀσᵤ(u)`.
#[allow(clippy::too_many_arguments)]
pub fn inverse_bellman_error(
    plant: &AffineDynamics,
    basis: &FeatureBasis,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w_value: &DVector<f64>,
    w_reward: &DVector<f64>,
    w_control: &DVector<f64>,
    theta_hat: &DMatrix<f64>,
) -> Result<f64> {
    check_len("value weights", basis.value.len(), w_value.len())?;
    check_len("reward weights", basis.reward.len(), w_reward.len())?;
    check_len("control weights", plant.input_dim(), w_control.len())?;
    let y = plant.eval_dynamics(x, u, theta_hat)?;
    let grad = basis.grad_value_features(x)?;
    Ok(w_value.dot(&(grad * y))
        + w_reward.dot(&basis.eval_reward_features(x)?)
        + w_control.dot(&control_square_features(u)))
}

/// One `(1 + m) × (P + L + m − 1)` row block and its offsets.
pub fn build_row_block(
    plant: &AffineDynamics,
    basis: &FeatureBasis,
    x: &DVector<f64>,
    u_hat: &DVector<f64>,
    theta_hat: &DMatrix<f64>,
    r1: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let m = plant.input_dim();
    check_len("queried control", m, u_hat.len())?;
    check_finite("queried control", u_hat.as_slice())?;
    if basis.state_dim() != plant.state_dim() || basis.input_dim != m {
        return Err(Error::Dimension(format!(
            "feature basis is {}→{} but the plant is {}→{}",
            basis.state_dim(),
            basis.input_dim,
            plant.state_dim(),
            m
        )));
    }
    let p_len = basis.value.len();
    let l_len = basis.reward.len();
    let d = basis.reward_weight_dim();

    let grad = basis.grad_value_features(x)?;
    let y = plant.eval_dynamics(x, u_hat, theta_hat)?;
    let g = &grad * plant.input_jacobian(x, theta_hat)?;
    let sigma_q = basis.eval_reward_features(x)?;
    let squares = control_square_features(u_hat);

    let mut rows = DMatrix::zeros(1 + m, d);
    let mut offsets = DVector::zeros(1 + m);

    rows.view_mut((0, 0), (1, p_len))
        .copy_from(&(&grad * y).transpose());
    rows.view_mut((0, p_len), (1, l_len))
        .copy_from(&sigma_q.transpose());
    for j in 1..m {
        rows[(0, p_len + l_len + j - 1)] = squares[j];
    }
    offsets[0] = r1 * squares[0];

    for j in 0..m {
        let r = 1 + j;
        rows.view_mut((r, 0), (1, p_len))
            .copy_from(&g.column(j).transpose());
        if j == 0 {
            offsets[r] = 2.0 * r1 * u_hat[0];
        } else {
            rows[(r, p_len + l_len + j - 1)] = 2.0 * u_hat[j];
        }
    }
    check_finite("IRL row block", rows.as_slice())?;
    Ok((rows, offsets))
}

/// Reward and value estimates assembled from the current weights.
#[derive(Clone, Debug)]
pub struct AssembledReward {
    pub basis: FeatureBasis,
    pub value_weights: DVector<f64>,
    pub reward_weights: DVector<f64>,
    /// Diagonal of R̂: `(r₁, Ŵ_R⁻)`.
    pub control_weights: DVector<f64>,
}

impl AssembledReward {
    pub fn q(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.reward_weights.dot(&self.basis.eval_reward_features(x)?))
    }

    pub fn v(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.value_weights.dot(&self.basis.eval_value_features(x)?))
    }

    pub fn r_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.control_weights)
    }
}

#[derive(Clone, Debug)]
pub struct RewardEstimate {
    w_hat: DMatrix<f64>,
    r1: f64,
    gain: LeastSquaresGain,
    stack: HistoryStack<EstimateTag>,
    basis: FeatureBasis,
    query_box: Vec<[f64; 2]>,
    rng: ChaCha8Rng,
    dwell: f64,
    last_purge: f64,
    purge_times: Vec<f64>,
    rank_threshold: f64,
}

impl RewardEstimate {
    /// Ŵ starts at zero, Γ at `γ₀ I`; `t0` counts as the first purge instant.
    pub fn new(
        basis: FeatureBasis,
        cfg: &IrlConfig,
        limits: GainLimits,
        seed: u64,
        t0: f64,
    ) -> Result<Self> {
        if !(cfg.r1 > 0.0) {
            return Err(Error::Config(format!("scale anchor r1 must be positive, got {}", cfg.r1)));
        }
        if !(cfg.dwell > 0.0) {
            return Err(Error::Config(format!("dwell time must be positive, got {}", cfg.dwell)));
        }
        if cfg.query_box.len() != basis.state_dim()
            || cfg.query_box.iter().any(|[lo, hi]| !(lo < hi))
        {
            return Err(Error::Config(format!(
                "query box needs {} intervals with lo < hi",
                basis.state_dim()
            )));
        }
        let d = basis.reward_weight_dim();
        Ok(Self {
            w_hat: DMatrix::zeros(d, 1),
            r1: cfg.r1,
            gain: LeastSquaresGain::new(d, cfg.gamma0, cfg.alpha, cfg.beta, limits),
            stack: HistoryStack::new(cfg.capacity, d, 1),
            basis,
            query_box: cfg.query_box.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            dwell: cfg.dwell,
            last_purge: t0,
            purge_times: Vec::new(),
            rank_threshold: cfg.rank_threshold,
        })
    }

    pub fn w_hat(&self) -> DVector<f64> {
        self.w_hat.column(0).into_owned()
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn value_weights(&self) -> DVector<f64> {
        self.w_hat.rows(0, self.basis.value.len()).column(0).into_owned()
    }

    pub fn reward_weights(&self) -> DVector<f64> {
        self.w_hat
            .rows(self.basis.value.len(), self.basis.reward.len())
            .column(0)
            .into_owned()
    }

    /// Ŵ_R⁻: the control weights after the anchored first one.
    pub fn control_weights(&self) -> DVector<f64> {
        let start = self.basis.value.len() + self.basis.reward.len();
        self.w_hat
            .rows(start, self.basis.input_dim - 1)
            .column(0)
            .into_owned()
    }

    pub fn gain(&self) -> &LeastSquaresGain {
        &self.gain
    }

    pub fn stack(&self) -> &HistoryStack<EstimateTag> {
        &self.stack
    }

    pub fn basis(&self) -> &FeatureBasis {
        &self.basis
    }

    pub fn purge_times(&self) -> &[f64] {
        &self.purge_times
    }

    pub fn is_full_rank(&self) -> bool {
        self.stack.is_full_rank(self.rank_threshold)
    }

    fn draw_query_state(&mut self) -> DVector<f64> {
        let rng = &mut self.rng;
        DVector::from_iterator(
            self.query_box.len(),
            self.query_box.iter().map(|&[lo, hi]| rng.gen_range(lo..hi)),
        )
    }

    /// Queries the policy estimate at a random state and offers the
    /// resulting row block to `H^IRL`.
    pub fn generate_query(
        &mut self,
        plant: &AffineDynamics,
        policy: &PolicySnapshot,
        theta: &ThetaSnapshot,
        t: f64,
    ) -> Result<bool> {
        let x = self.draw_query_state();
        let u_hat = policy.query(&x)?;
        let tag = EstimateTag {
            theta_generation: theta.generation,
            policy_generation: Some(policy.generation),
        };
        self.offer(plant, &x, &u_hat, theta, tag, t)
    }

    /// Offers a row block built from an observed state/control pair.
    pub fn observe_sample(
        &mut self,
        plant: &AffineDynamics,
        x: &DVector<f64>,
        u: &DVector<f64>,
        theta: &ThetaSnapshot,
        t: f64,
    ) -> Result<bool> {
        let tag = EstimateTag {
            theta_generation: theta.generation,
            policy_generation: None,
        };
        self.offer(plant, x, u, theta, tag, t)
    }

    fn offer(
        &mut self,
        plant: &AffineDynamics,
        x: &DVector<f64>,
        u: &DVector<f64>,
        theta: &ThetaSnapshot,
        tag: EstimateTag,
        t: f64,
    ) -> Result<bool> {
        let (rows, offsets) = build_row_block(plant, &self.basis, x, u, &theta.theta_hat, self.r1)?;
        let n = offsets.len();
        self.stack
            .try_insert(rows, DMatrix::from_column_slice(n, 1, offsets.as_slice()), t, tag)
    }

    /// Euler step of `Ẇ = αΓΣ̂ᵀ(−Σ̂Ŵ − Σ̂_{u1})`.
    pub fn update_irl_weights(&mut self, dt: f64) -> Result<()> {
        let normal = self.stack.normal_matrix().clone();
        let cross = -self.stack.cross_product();
        self.gain.step_weights(&mut self.w_hat, &normal, &cross, dt)
    }

    /// Euler step of `Γ̇ = βΓ − αΓΣ̂ᵀΣ̂Γ`.
    pub fn update_irl_gain(&mut self, dt: f64) -> StepEvents {
        let gain_reset = self.gain.step_gain(self.stack.normal_matrix(), dt);
        if self.is_full_rank() {
            self.gain.record_extremes();
        }
        StepEvents {
            gain_reset,
            revised: false,
        }
    }

    /// Purges `H^IRL` when the dwell time has elapsed and some stored row was
    /// built from estimates older than `current`.
    pub fn schedule_purge(&mut self, t: f64, current: &EstimateTag) -> bool {
        let stale = self.stack.entries().iter().any(|e| e.tag.is_stale(current));
        if stale && self.stack.purge(t, self.dwell, self.last_purge) {
            self.last_purge = t;
            self.purge_times.push(t);
            true
        } else {
            false
        }
    }

    pub fn assemble_reward(&self) -> AssembledReward {
        let mut control = vec![self.r1];
        control.extend(self.control_weights().iter());
        AssembledReward {
            basis: self.basis.clone(),
            value_weights: self.value_weights(),
            reward_weights: self.reward_weights(),
            control_weights: DVector::from_vec(control),
        }
    }

    #[cfg(test)]
    pub(crate) fn set_weights(&mut self, w: &DVector<f64>) {
        self.w_hat = DMatrix::from_column_slice(w.len(), 1, w.as_slice());
    }
}
