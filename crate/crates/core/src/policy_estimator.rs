//! Recursive least-squares estimate of the demonstrator's feedback policy.
//!
//! The optimal policy is parameterized as `u*(x) = −W_uᵀσ_π(x)`. Observed
//! pairs `(x(tᵢ), u(tᵢ))` populate the history stack `H^u` as rows
//! `(σ_π(xᵢ)ᵀ, uᵢᵀ)`, so the stacked system reads `Σ_σ W_u = −Σ_u` and the
//! update is `Ẇ_u = α_u Γ_u Σ_σᵀ(−Σ_u − Σ_σ Ŵ_u)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Result};
use crate::features::Basis;
use crate::history::HistoryStack;
use crate::param_estimator::StepEvents;
use crate::rls::{GainLimits, LeastSquaresGain, RevisionTracker};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEstimatorConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub gamma0: f64,
    pub capacity: usize,
    pub revision_threshold: f64,
    /// Lower bound k̲ on `λ_min(Σ_σᵀΣ_σ)` for the stack to count as full rank.
    pub rank_threshold: f64,
}

fn one() -> f64 {
    1.0
}

/// Immutable copy of Ŵ_u handed to the IRL engine.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySnapshot {
    pub weights: DMatrix<f64>,
    pub basis: Basis,
    pub generation: u64,
}

impl PolicySnapshot {
    /// `û = −Ŵ_uᵀσ_π(x)`.
    pub fn query(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-(self.weights.tr_mul(&self.basis.eval(x)?)))
    }
}

#[derive(Clone, Debug)]
pub struct PolicyEstimate {
    weights: DMatrix<f64>,
    gain: LeastSquaresGain,
    stack: HistoryStack<()>,
    basis: Basis,
    revision: RevisionTracker,
    rank_threshold: f64,
}

impl PolicyEstimate {
    /// Ŵ_u starts at zero, Γ_u at `γ₀ I`.
    pub fn new(
        basis: Basis,
        input_dim: usize,
        cfg: &PolicyEstimatorConfig,
        limits: GainLimits,
    ) -> Self {
        let k = basis.len();
        let weights = DMatrix::zeros(k, input_dim);
        Self {
            revision: RevisionTracker::new(&weights, cfg.revision_threshold),
            weights,
            gain: LeastSquaresGain::new(k, cfg.gamma0, cfg.alpha, cfg.beta, limits),
            stack: HistoryStack::new(cfg.capacity, k, input_dim),
            basis,
            rank_threshold: cfg.rank_threshold,
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn gain(&self) -> &LeastSquaresGain {
        &self.gain
    }

    pub fn stack(&self) -> &HistoryStack<()> {
        &self.stack
    }

    pub fn generation(&self) -> u64 {
        self.revision.generation()
    }

    pub fn is_full_rank(&self) -> bool {
        self.stack.is_full_rank(self.rank_threshold)
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            weights: self.weights.clone(),
            basis: self.basis.clone(),
            generation: self.generation(),
        }
    }

    pub fn record_policy_sample(
        &mut self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        t: f64,
    ) -> Result<bool> {
        check_len("policy sample control", self.weights.ncols(), u.len())?;
        check_finite("policy sample control", u.as_slice())?;
        let phi = self.basis.eval(x)?;
        self.stack
            .try_insert(
                DMatrix::from_row_slice(1, phi.len(), phi.as_slice()),
                DMatrix::from_row_slice(1, u.len(), u.as_slice()),
                t,
                (),
            )
    }

    /// Euler step of `Ẇ_u = α_u Γ_u Σ_σᵀ(−Σ_u − Σ_σ Ŵ_u)`.
    pub fn update_policy_weights(&mut self, dt: f64) -> Result<()> {
        let normal = self.stack.normal_matrix().clone();
        let cross = -self.stack.cross_product();
        self.gain
            .step_weights(&mut self.weights, &normal, &cross, dt)
    }

    /// Euler step of `Γ̇_u = β_uΓ_u − α_uΓ_uΣ_σᵀΣ_σΓ_u`.
    pub fn update_policy_gain(&mut self, dt: f64) -> StepEvents {
        let gain_reset = self.gain.step_gain(self.stack.normal_matrix(), dt);
        if self.is_full_rank() {
            self.gain.record_extremes();
        }
        StepEvents {
            gain_reset,
            revised: self.revision.observe(&self.weights),
        }
    }

    pub fn query_policy(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-(self.weights.tr_mul(&self.basis.eval(x)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::BasisFamily;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn cfg() -> PolicyEstimatorConfig {
        PolicyEstimatorConfig {
            alpha: 1.0,
            beta: 2.0,
            gamma0: 1.0,
            capacity: 5,
            revision_threshold: 1e-3,
            rank_threshold: 1e-6,
        }
    }

    fn estimator() -> PolicyEstimate {
        PolicyEstimate::new(
            Basis::new(BasisFamily::Linear, 2).unwrap(),
            1,
            &cfg(),
            GainLimits::default(),
        )
    }

    const K: [f64; 2] = [0.0916, 0.2302];

    fn demo(e: &DVector<f64>) -> DVector<f64> {
        v(&[-(K[0] * e[0] + K[1] * e[1])])
    }

    #[test]
    fn first_sample_accepted_zero_sample_rejected() {
        let mut est = estimator();
        assert!(est.record_policy_sample(&v(&[1.0, 0.0]), &v(&[-0.09]), 0.0).unwrap());
        est.record_policy_sample(&v(&[0.0, 1.0]), &v(&[-0.23]), 0.1).unwrap();
        assert!(est.is_full_rank());
        assert!(!est.record_policy_sample(&v(&[0.0, 0.0]), &v(&[0.0]), 0.2).unwrap());
    }

    #[test]
    fn least_squares_solution_is_fixed_point() {
        let mut est = estimator();
        for (k, e) in [v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[0.5, -0.5])].iter().enumerate() {
            est.record_policy_sample(e, &demo(e), k as f64).unwrap();
        }
        est.weights = DMatrix::from_column_slice(2, 1, &K);
        let before = est.weights.clone();
        est.update_policy_weights(0.005).unwrap();
        assert!((est.weights() - before).amax() < 1e-15);
    }

    #[test]
    fn frozen_stack_converges_to_pseudoinverse() {
        let mut est = estimator();
        let samples = [v(&[1.0, 0.2]), v(&[-0.3, 0.8]), v(&[0.6, 0.6]), v(&[0.1, -0.9])];
        for (k, e) in samples.iter().enumerate() {
            // Slightly inconsistent targets: the fixed point is the LS solution.
            let u = demo(e) + v(&[0.01 * (k as f64 - 1.5)]);
            est.record_policy_sample(e, &u, k as f64).unwrap();
        }
        let s = est.stack().regressor();
        let su = est.stack().targets();
        let batch = -(s.tr_mul(&s)).try_inverse().unwrap() * s.tr_mul(&su);
        for _ in 0..20_000 {
            est.update_policy_weights(0.005).unwrap();
            est.update_policy_gain(0.005);
        }
        assert!((est.weights() - &batch).amax() < 1e-8);
        let normal = est.stack().normal_matrix().clone();
        let gamma_inf = normal.try_inverse().unwrap() * (2.0 / 1.0);
        assert!((est.gain().gamma() - gamma_inf).amax() < 1e-6);
        let (lo, hi) = est.gain().extremes().unwrap();
        assert!(lo > 0.0 && hi.is_finite());
    }

    #[test]
    fn empty_stack_gain_grows_exponentially() {
        let mut est = estimator();
        for _ in 0..4 {
            est.update_policy_weights(0.005).unwrap();
            est.update_policy_gain(0.005);
        }
        assert!((est.gain().gamma()[(0, 0)] - 1.01f64.powi(4)).abs() < 1e-14);
        assert_eq!(est.weights(), &DMatrix::zeros(2, 1));
    }

    #[test]
    fn query_sign_and_homogeneity() {
        let mut est = estimator();
        est.weights = DMatrix::from_column_slice(2, 1, &[0.0915, 0.230]);
        assert_eq!(est.query_policy(&v(&[0.0, 0.0])).unwrap(), v(&[0.0]));
        let u = est.query_policy(&v(&[1.0, 0.0])).unwrap();
        assert!((u[0] + 0.0915).abs() < 1e-15);
        let x = v(&[0.37, -1.1]);
        let u1 = est.query_policy(&x).unwrap();
        let u2 = est.query_policy(&(&x * 2.0)).unwrap();
        assert!((u2 - u1 * 2.0).amax() < 1e-15);
        assert_eq!(est.snapshot().query(&x).unwrap(), est.query_policy(&x).unwrap());
    }
}
