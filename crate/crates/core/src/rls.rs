//! Continuous-time least-squares update with forgetting, discretized by
//! forward Euler:
//!
//! ```text
//! Ẇ = α Γ (ΣᵀT − ΣᵀΣ W)
//! Γ̇ = β Γ − α Γ ΣᵀΣ Γ
//! ```
//!
//! Shared by the parameter, policy and reward estimators. Γ is symmetrized
//! after every step; if its spectrum leaves `[floor, ceiling]` it is reset to
//! its initial value and the step reports a gain-reset event.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen_extremes, symmetrize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainLimits {
    pub floor: f64,
    pub ceiling: f64,
}

impl Default for GainLimits {
    fn default() -> Self {
        Self {
            floor: 1e-9,
            ceiling: 1e6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LeastSquaresGain {
    gamma: DMatrix<f64>,
    gamma0: DMatrix<f64>,
    alpha: f64,
    beta: f64,
    limits: GainLimits,
    resets: u64,
    /// Observed `(min, max)` eigenvalues of Γ while the stack was full rank.
    extremes: Option<(f64, f64)>,
}

impl LeastSquaresGain {
    pub fn new(dim: usize, gamma0: f64, alpha: f64, beta: f64, limits: GainLimits) -> Self {
        let g0 = DMatrix::identity(dim, dim) * gamma0;
        Self {
            gamma: g0.clone(),
            gamma0: g0,
            alpha,
            beta,
            limits,
            resets: 0,
            extremes: None,
        }
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn resets(&self) -> u64 {
        self.resets
    }

    pub fn extremes(&self) -> Option<(f64, f64)> {
        self.extremes
    }

    /// `α Γ (cross − normal · W)`.
    pub fn weight_rate(
        &self,
        normal: &DMatrix<f64>,
        cross: &DMatrix<f64>,
        weights: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        (&self.gamma * (cross - normal * weights)) * self.alpha
    }

    /// Euler step of the weights; fails on a non-finite result.
    pub fn step_weights(
        &self,
        weights: &mut DMatrix<f64>,
        normal: &DMatrix<f64>,
        cross: &DMatrix<f64>,
        dt: f64,
    ) -> Result<()> {
        let next = &*weights + self.weight_rate(normal, cross, weights) * dt;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("least-squares weight update"));
        }
        *weights = next;
        Ok(())
    }

    /// Euler step of Γ. Returns `true` when the safeguard reset Γ.
    pub fn step_gain(&mut self, normal: &DMatrix<f64>, dt: f64) -> bool {
        let g = &self.gamma;
        let rate = g * self.beta - (g * normal * g) * self.alpha;
        let mut next = g + rate * dt;
        symmetrize(&mut next);
        let finite = next.iter().all(|v| v.is_finite());
        let (lo, hi) = if finite {
            symmetric_eigen_extremes(&next)
        } else {
            (f64::NAN, f64::NAN)
        };
        if !finite || !(lo >= self.limits.floor) || !(hi <= self.limits.ceiling) {
            self.gamma = self.gamma0.clone();
            self.resets += 1;
            true
        } else {
            self.gamma = next;
            false
        }
    }

    /// Folds the current spectrum of Γ into the observed bounds.
    pub fn record_extremes(&mut self) {
        let (lo, hi) = symmetric_eigen_extremes(&self.gamma);
        self.extremes = Some(match self.extremes {
            None => (lo, hi),
            Some((a, b)) => (a.min(lo), b.max(hi)),
        });
    }

    pub fn min_eigenvalue(&self) -> f64 {
        symmetric_eigen_extremes(&self.gamma).0
    }
}

/// Counts significant revisions of an estimate: the generation increments
/// whenever the estimate has drifted more than `threshold` (Frobenius norm)
/// from where it stood at the previous increment.
#[derive(Clone, Debug)]
pub struct RevisionTracker {
    anchor: DMatrix<f64>,
    generation: u64,
    threshold: f64,
}

impl RevisionTracker {
    pub fn new(initial: &DMatrix<f64>, threshold: f64) -> Self {
        Self {
            anchor: initial.clone(),
            generation: 0,
            threshold,
        }
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn observe(&mut self, current: &DMatrix<f64>) -> bool {
        if (current - &self.anchor).norm() > self.threshold {
            self.anchor = current.clone();
            self.generation += 1;
            true
        } else {
            false
        }
    }
}
