//! Drift-parameter estimation by integral concurrent learning.
//!
//! Integrating the plant over a sliding window `[t − Δt, t]` gives the
//! derivative-free relation
//!
//! ```text
//! x(t) − x(t − Δt) − ∫ f°(x, u) dt = θᵀ ∫ σ(x, u) dt
//! ```
//!
//! Each window yields one row `(∫σ)ᵀ` with target `bᵀ`; rows go to a history
//! stack and θ̂ follows the shared least-squares update, projected onto a box.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::AffineDynamics;
use crate::error::{check_len, Error, Result};
use crate::history::HistoryStack;
use crate::rls::{GainLimits, LeastSquaresGain, RevisionTracker};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaEstimatorConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub gamma0: f64,
    /// Integration window Δt in seconds.
    pub window: f64,
    pub capacity: usize,
    pub revision_threshold: f64,
    /// Componentwise box Θ = [lower, upper] for every entry of θ̂.
    pub lower: f64,
    pub upper: f64,
}

fn one() -> f64 {
    1.0
}

/// Window integrals over uniformly spaced samples.
///
/// `states` holds `x₀ … x_K` and `controls` the `K` zero-order-hold controls
/// applied on each step. Returns `(∫σ dt, x_K − x₀ − ∫f° dt)` by the
/// trapezoidal rule with the held control on every step.
pub fn accumulate_window(
    plant: &AffineDynamics,
    states: &[DVector<f64>],
    controls: &[DVector<f64>],
    dt: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if states.len() < 2 {
        return Err(Error::ShortWindow(states.len()));
    }
    check_len("window controls", states.len() - 1, controls.len())?;
    let mut y = DVector::zeros(plant.feature_dim());
    let mut nominal = DVector::zeros(plant.state_dim());
    for (k, u) in controls.iter().enumerate() {
        let (a, b) = (&states[k], &states[k + 1]);
        y += (plant.features(a, u)? + plant.features(b, u)?) * (0.5 * dt);
        nominal += (plant.nominal(a, u)? + plant.nominal(b, u)?) * (0.5 * dt);
    }
    let first = &states[0];
    let last = &states[states.len() - 1];
    Ok((y, last - first - nominal))
}

/// Outcome of one estimator step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepEvents {
    pub gain_reset: bool,
    pub revised: bool,
}

/// Immutable copy of θ̂ handed to the other estimators.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaSnapshot {
    pub theta_hat: DMatrix<f64>,
    pub generation: u64,
}

#[derive(Clone, Debug)]
pub struct ThetaEstimate {
    theta_hat: DMatrix<f64>,
    gain: LeastSquaresGain,
    window_steps: usize,
    dt: f64,
    icl_stack: HistoryStack<u64>,
    buffer: VecDeque<(DVector<f64>, DVector<f64>)>,
    revision: RevisionTracker,
    lower: f64,
    upper: f64,
}

impl ThetaEstimate {
    /// θ̂ starts at the center of the box Θ.
    pub fn new(
        plant: &AffineDynamics,
        cfg: &ThetaEstimatorConfig,
        limits: GainLimits,
        dt: f64,
    ) -> Result<Self> {
        if !(cfg.lower < cfg.upper) {
            return Err(Error::Config(format!(
                "parameter box needs lower < upper, got [{}, {}]",
                cfg.lower, cfg.upper
            )));
        }
        let window_steps = (cfg.window / dt).round() as usize;
        if window_steps == 0 {
            return Err(Error::Config(format!(
                "integration window {} is shorter than the step {dt}",
                cfg.window
            )));
        }
        let (p, n) = (plant.feature_dim(), plant.state_dim());
        let theta_hat = DMatrix::from_element(p, n, 0.5 * (cfg.lower + cfg.upper));
        Ok(Self {
            revision: RevisionTracker::new(&theta_hat, cfg.revision_threshold),
            theta_hat,
            gain: LeastSquaresGain::new(p, cfg.gamma0, cfg.alpha, cfg.beta, limits),
            window_steps,
            dt,
            icl_stack: HistoryStack::new(cfg.capacity, p, n),
            buffer: VecDeque::with_capacity(window_steps + 1),
            lower: cfg.lower,
            upper: cfg.upper,
        })
    }

    pub fn theta_hat(&self) -> &DMatrix<f64> {
        &self.theta_hat
    }

    pub fn gain(&self) -> &LeastSquaresGain {
        &self.gain
    }

    pub fn stack(&self) -> &HistoryStack<u64> {
        &self.icl_stack
    }

    pub fn generation(&self) -> u64 {
        self.revision.generation()
    }

    pub fn snapshot(&self) -> ThetaSnapshot {
        ThetaSnapshot {
            theta_hat: self.theta_hat.clone(),
            generation: self.generation(),
        }
    }

    /// Records the state at `t` and the control held from `t` to `t + dt`.
    /// Once a full window is buffered its integral pair is offered to the stack.
    pub fn observe(
        &mut self,
        plant: &AffineDynamics,
        x: &DVector<f64>,
        u: &DVector<f64>,
        t: f64,
    ) -> Result<bool> {
        if self.buffer.len() == self.window_steps + 1 {
            self.buffer.pop_front();
        }
        self.buffer.push_back((x.clone(), u.clone()));
        if self.buffer.len() < self.window_steps + 1 {
            return Ok(false);
        }
        let states: Vec<DVector<f64>> = self.buffer.iter().map(|(x, _)| x.clone()).collect();
        let controls: Vec<DVector<f64>> = self
            .buffer
            .iter()
            .take(self.window_steps)
            .map(|(_, u)| u.clone())
            .collect();
        let (y, b) = accumulate_window(plant, &states, &controls, self.dt)?;
        self.icl_stack.try_insert(
            DMatrix::from_row_slice(1, y.len(), y.as_slice()),
            DMatrix::from_row_slice(1, b.len(), b.as_slice()),
            t,
            self.generation(),
        )
    }

    /// One least-squares step of θ̂ and Γ_θ followed by projection onto Θ.
    pub fn update(&mut self, dt: f64) -> Result<StepEvents> {
        let normal = self.icl_stack.normal_matrix().clone();
        let cross = self.icl_stack.cross_product();
        self.gain
            .step_weights(&mut self.theta_hat, &normal, &cross, dt)?;
        let (lo, hi) = (self.lower, self.upper);
        self.theta_hat.apply(|v| *v = v.clamp(lo, hi));
        let gain_reset = self.gain.step_gain(&normal, dt);
        let revised = self.revision.observe(&self.theta_hat);
        Ok(StepEvents {
            gain_reset,
            revised,
        })
    }
}
