//! Control-affine plant model, tracking-error transform and fixed-step RK4.
//!
//! The plant is `ẋ = f°(x, u) + θᵀσ(x, u)` with known nominal part `f°`,
//! known features `σ` of length `p` and an unknown `p×n` parameter matrix θ.
//! Both `f°` and `σ` are affine in `u`, so their control Jacobians depend on
//! the state only.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite, check_len, check_shape, Error, Result};
use crate::linalg::spectral_abscissa;

/// Named plant families with known nominal dynamics and uncertainty features.
#[derive(Clone, Debug, PartialEq)]
pub enum PlantModel {
    /// `f°(x, u) = A₀x + B₀u`, `σ(x, u) = [x; u]`.
    Linear {
        a_nominal: DMatrix<f64>,
        b_nominal: DMatrix<f64>,
    },
    /// Two-state oscillator with cubic stiffness:
    /// `f°(x, u) = (x₂, 0)`, `σ(x, u) = (x₁, x₂, x₁³, u)`.
    Duffing,
}

impl PlantModel {
    pub fn state_dim(&self) -> usize {
        match self {
            PlantModel::Linear { a_nominal, .. } => a_nominal.nrows(),
            PlantModel::Duffing => 2,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            PlantModel::Linear { b_nominal, .. } => b_nominal.ncols(),
            PlantModel::Duffing => 1,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            PlantModel::Linear { .. } => self.state_dim() + self.input_dim(),
            PlantModel::Duffing => 4,
        }
    }

    fn nominal(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self {
            PlantModel::Linear {
                a_nominal,
                b_nominal,
            } => a_nominal * x + b_nominal * u,
            PlantModel::Duffing => DVector::from_vec(vec![x[1], 0.0]),
        }
    }

    fn features(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self {
            PlantModel::Linear { .. } => {
                DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied())
            }
            PlantModel::Duffing => DVector::from_vec(vec![x[0], x[1], x[0].powi(3), u[0]]),
        }
    }

    fn nominal_input_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            PlantModel::Linear { b_nominal, .. } => b_nominal.clone(),
            PlantModel::Duffing => DMatrix::zeros(2, 1),
        }
    }

    fn feature_input_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let (n, m, p) = (self.state_dim(), self.input_dim(), self.feature_dim());
        match self {
            PlantModel::Linear { .. } => {
                let mut j = DMatrix::zeros(p, m);
                for k in 0..m {
                    j[(n + k, k)] = 1.0;
                }
                j
            }
            PlantModel::Duffing => DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]),
        }
    }
}

/// The agent's plant together with its true (hidden) parameters.
#[derive(Clone, Debug)]
pub struct AffineDynamics {
    model: PlantModel,
    theta_true: DMatrix<f64>,
}

impl AffineDynamics {
    pub fn new(model: PlantModel, theta_true: DMatrix<f64>) -> Result<Self> {
        if let PlantModel::Linear {
            a_nominal,
            b_nominal,
        } = &model
        {
            let n = a_nominal.nrows();
            check_shape("nominal drift matrix", (n, n), a_nominal.shape())?;
            check_shape(
                "nominal input matrix",
                (n, b_nominal.ncols()),
                b_nominal.shape(),
            )?;
            if n == 0 || b_nominal.ncols() == 0 {
                return Err(Error::Dimension("plant needs n ≥ 1 and m ≥ 1".into()));
            }
        }
        check_shape(
            "theta",
            (model.feature_dim(), model.state_dim()),
            theta_true.shape(),
        )?;
        Ok(Self { model, theta_true })
    }

    pub fn model(&self) -> &PlantModel {
        &self.model
    }

    pub fn theta_true(&self) -> &DMatrix<f64> {
        &self.theta_true
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.model.feature_dim()
    }

    fn check_state_control(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        check_len("state", self.state_dim(), x.len())?;
        check_len("control", self.input_dim(), u.len())
    }

    fn check_theta(&self, theta: &DMatrix<f64>) -> Result<()> {
        check_shape(
            "theta",
            (self.feature_dim(), self.state_dim()),
            theta.shape(),
        )
    }

    pub fn nominal(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_state_control(x, u)?;
        Ok(self.model.nominal(x, u))
    }

    pub fn features(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_state_control(x, u)?;
        Ok(self.model.features(x, u))
    }

    /// `f°(x, u) + θᵀσ(x, u)` for an arbitrary parameter matrix.
    pub fn eval_dynamics(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        theta: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        self.check_state_control(x, u)?;
        self.check_theta(theta)?;
        Ok(self.model.nominal(x, u) + theta.tr_mul(&self.model.features(x, u)))
    }

    /// `∇ᵤf°(x) + θᵀ∇ᵤσ(x)`, an `n×m` matrix independent of the control.
    pub fn input_jacobian(&self, x: &DVector<f64>, theta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len("state", self.state_dim(), x.len())?;
        self.check_theta(theta)?;
        Ok(self.model.nominal_input_jacobian(x) + theta.tr_mul(&self.model.feature_input_jacobian(x)))
    }

    /// One classical RK4 step of the true plant with the control held over the step.
    pub fn step_rk4(
        &self,
        x: &DVector<f64>,
        u_hold: &DVector<f64>,
        dt: f64,
        t: f64,
    ) -> Result<DVector<f64>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("step size must be positive, got {dt}")));
        }
        self.check_state_control(x, u_hold)?;
        let f = |s: &DVector<f64>| {
            self.model.nominal(s, u_hold) + self.theta_true.tr_mul(&self.model.features(s, u_hold))
        };
        let next = rk4(f, x, dt);
        if next.iter().all(|v| v.is_finite()) {
            Ok(next)
        } else {
            Err(Error::Divergence {
                t: t + dt,
                state: x.iter().copied().collect(),
                last_record: None,
            })
        }
    }

    /// State and input matrices `(A, B)` of a linear plant under `theta`.
    pub fn linear_matrices(&self, theta: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        match &self.model {
            PlantModel::Linear {
                a_nominal,
                b_nominal,
            } => {
                let n = self.state_dim();
                let m = self.input_dim();
                let a = a_nominal + theta.rows(0, n).transpose();
                let b = b_nominal + theta.rows(n, m).transpose();
                Some((a, b))
            }
            PlantModel::Duffing => None,
        }
    }
}

/// Classical fourth-order Runge–Kutta step for an autonomous vector field.
pub fn rk4<F>(f: F, x: &DVector<f64>, dt: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (0.5 * dt)));
    let k3 = f(&(x + &k2 * (0.5 * dt)));
    let k4 = f(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Plant plus the linear reference generator `ẋ_d = A_d x_d` and the
/// feedforward `u_d = K_d x_d` that keeps the plant on the reference.
#[derive(Clone, Debug)]
pub struct TrackingScenario {
    pub plant: AffineDynamics,
    pub reference_matrix: DMatrix<f64>,
    pub feedforward_gain: DMatrix<f64>,
}

impl TrackingScenario {
    pub fn new(
        plant: AffineDynamics,
        reference_matrix: DMatrix<f64>,
        feedforward_gain: DMatrix<f64>,
    ) -> Result<Self> {
        let n = plant.state_dim();
        let m = plant.input_dim();
        check_shape("reference matrix", (n, n), reference_matrix.shape())?;
        check_shape("feedforward gain", (m, n), feedforward_gain.shape())?;
        check_finite("reference matrix", reference_matrix.as_slice())?;
        let abscissa = spectral_abscissa(&reference_matrix);
        if abscissa > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "reference system is unstable (spectral abscissa {abscissa:e})"
            )));
        }
        Ok(Self {
            plant,
            reference_matrix,
            feedforward_gain,
        })
    }

    pub fn feedforward(&self, x_d: &DVector<f64>) -> DVector<f64> {
        &self.feedforward_gain * x_d
    }

    /// `(e, μ) = (x − x_d, u − K_d x_d)`.
    pub fn tracking_error(
        &self,
        x: &DVector<f64>,
        x_d: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        check_len("state", self.plant.state_dim(), x.len())?;
        check_len("desired state", self.plant.state_dim(), x_d.len())?;
        check_len("control", self.plant.input_dim(), u.len())?;
        Ok((x - x_d, u - self.feedforward(x_d)))
    }

    pub fn step_reference(&self, x_d: &DVector<f64>, dt: f64) -> DVector<f64> {
        rk4(|s| &self.reference_matrix * s, x_d, dt)
    }

    /// Largest deviation `‖A + B K_d − A_d‖` for a linear plant: when zero the
    /// tracking error obeys the plant's own dynamics `ė = f(e, μ)`.
    pub fn error_dynamics_defect(&self) -> Option<f64> {
        let (a, b) = self.plant.linear_matrices(self.plant.theta_true())?;
        Some((a + b * &self.feedforward_gain - &self.reference_matrix).amax())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tracking_plant() -> AffineDynamics {
        let model = PlantModel::Linear {
            a_nominal: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b_nominal: DMatrix::zeros(2, 1),
        };
        let theta = DMatrix::from_row_slice(3, 2, &[0.0, -0.5, 0.0, -0.5, 0.0, 1.0]);
        AffineDynamics::new(model, theta).unwrap()
    }

    fn scalar_decay() -> AffineDynamics {
        let model = PlantModel::Linear {
            a_nominal: DMatrix::from_element(1, 1, -1.0),
            b_nominal: DMatrix::zeros(1, 1),
        };
        AffineDynamics::new(model, DMatrix::zeros(2, 1)).unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn tracking_plant_at_unit_state() {
        let p = tracking_plant();
        let xdot = p
            .eval_dynamics(&v(&[1.0, 0.0]), &v(&[0.0]), p.theta_true())
            .unwrap();
        assert_eq!(xdot, v(&[0.0, -0.5]));
    }

    #[test]
    fn tracking_plant_with_control() {
        let p = tracking_plant();
        let xdot = p
            .eval_dynamics(&v(&[0.0, 1.0]), &v(&[2.0]), p.theta_true())
            .unwrap();
        assert!((xdot - v(&[1.0, 1.5])).amax() < 1e-15);
    }

    #[test]
    fn zero_theta_is_nominal() {
        let p = tracking_plant();
        let x = v(&[0.3, -0.7]);
        let zero = DMatrix::zeros(3, 2);
        let xdot = p.eval_dynamics(&x, &v(&[0.0]), &zero).unwrap();
        assert_eq!(xdot, p.nominal(&x, &v(&[0.0])).unwrap());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = tracking_plant();
        assert!(matches!(
            p.eval_dynamics(&v(&[1.0]), &v(&[0.0]), p.theta_true()),
            Err(Error::Dimension(_))
        ));
        assert!(p
            .eval_dynamics(&v(&[1.0, 0.0]), &v(&[0.0]), &DMatrix::zeros(2, 2))
            .is_err());
    }

    #[test]
    fn input_jacobian_of_tracking_plant() {
        let p = tracking_plant();
        let j = p.input_jacobian(&v(&[0.4, 0.1]), p.theta_true()).unwrap();
        assert_eq!(j, DMatrix::from_column_slice(2, 1, &[0.0, 1.0]));
        let b = DMatrix::from_row_slice(2, 1, &[0.5, 2.0]);
        let nominal_only = AffineDynamics::new(
            PlantModel::Linear {
                a_nominal: DMatrix::zeros(2, 2),
                b_nominal: b.clone(),
            },
            DMatrix::zeros(3, 2),
        )
        .unwrap();
        let j = nominal_only
            .input_jacobian(&v(&[1.0, 1.0]), &DMatrix::zeros(3, 2))
            .unwrap();
        assert_eq!(j, b);
    }

    #[test]
    fn rk4_scalar_decay_single_step() {
        let p = scalar_decay();
        let x = p.step_rk4(&v(&[1.0]), &v(&[0.0]), 0.1, 0.0).unwrap();
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn rk4_equilibrium_unchanged() {
        let p = tracking_plant();
        let x = p.step_rk4(&v(&[0.0, 0.0]), &v(&[0.0]), 0.005, 0.0).unwrap();
        assert_eq!(x, v(&[0.0, 0.0]));
    }

    #[test]
    fn rk4_global_error_is_fourth_order() {
        let p = scalar_decay();
        let mut x = v(&[1.0]);
        for k in 0..200 {
            x = p.step_rk4(&x, &v(&[0.0]), 0.005, k as f64 * 0.005).unwrap();
        }
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rk4_rejects_nonpositive_step() {
        let p = scalar_decay();
        assert!(p.step_rk4(&v(&[1.0]), &v(&[0.0]), 0.0, 0.0).is_err());
    }

    #[test]
    fn rk4_divergence_reports_time_and_state() {
        let model = PlantModel::Linear {
            a_nominal: DMatrix::from_element(1, 1, 1e300),
            b_nominal: DMatrix::zeros(1, 1),
        };
        let p = AffineDynamics::new(model, DMatrix::zeros(2, 1)).unwrap();
        match p.step_rk4(&v(&[1e300]), &v(&[0.0]), 1.0, 2.0) {
            Err(Error::Divergence { t, state, .. }) => {
                assert_eq!(t, 3.0);
                assert_eq!(state, vec![1e300]);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn tracking_error_on_reference() {
        let plant = tracking_plant();
        let scn = TrackingScenario::new(
            plant,
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[-1.5, 0.5]),
        )
        .unwrap();
        let xd = v(&[1.0, 0.0]);
        let (e, mu) = scn.tracking_error(&xd, &xd, &v(&[-1.5])).unwrap();
        assert_eq!(e, v(&[0.0, 0.0]));
        assert_eq!(mu, v(&[0.0]));
        let (_, mu) = scn.tracking_error(&xd, &xd, &v(&[0.0])).unwrap();
        assert_eq!(mu, v(&[1.5]));
        assert!(scn.error_dynamics_defect().unwrap() < 1e-15);
    }

    #[test]
    fn unstable_reference_rejected() {
        let r = TrackingScenario::new(
            tracking_plant(),
            DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, 0.0]),
            DMatrix::zeros(1, 2),
        );
        assert!(r.is_err());
    }

    fn vec2() -> impl Strategy<Value = DVector<f64>> {
        (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| v(&[a, b]))
    }

    proptest! {
        #[test]
        fn dynamics_affine_in_control(x in vec2(), u1 in -3.0..3.0f64, u2 in -3.0..3.0f64) {
            for p in [tracking_plant(), AffineDynamics::new(PlantModel::Duffing, DMatrix::from_row_slice(4, 2, &[0.0, -1.0, 0.0, -0.2, 0.0, -0.3, 0.0, 1.0])).unwrap()] {
                let th = p.theta_true().clone();
                let mid = p.eval_dynamics(&x, &v(&[0.5 * (u1 + u2)]), &th).unwrap();
                let avg = (p.eval_dynamics(&x, &v(&[u1]), &th).unwrap()
                    + p.eval_dynamics(&x, &v(&[u2]), &th).unwrap()) * 0.5;
                prop_assert!((mid - avg).amax() < 1e-10);
                let f0 = p.eval_dynamics(&x, &v(&[0.0]), &th).unwrap();
                let f1 = p.eval_dynamics(&x, &v(&[u1]), &th).unwrap();
                let f2 = p.eval_dynamics(&x, &v(&[2.0 * u1]), &th).unwrap();
                prop_assert!(((&f2 - &f0) - (&f1 - &f0) * 2.0).amax() < 1e-10);
            }
        }

        #[test]
        fn input_jacobian_matches_finite_differences(x in vec2(), u in -2.0..2.0f64) {
            let p = AffineDynamics::new(PlantModel::Duffing, DMatrix::from_row_slice(4, 2, &[0.0, -1.0, 0.0, -0.2, 0.0, -0.3, 0.0, 1.5])).unwrap();
            let th = p.theta_true().clone();
            let j = p.input_jacobian(&x, &th).unwrap();
            let h = 1e-6;
            let fd = (p.eval_dynamics(&x, &v(&[u + h]), &th).unwrap()
                - p.eval_dynamics(&x, &v(&[u - h]), &th).unwrap()) / (2.0 * h);
            prop_assert!((fd - j.column(0)).amax() < 1e-6);
        }

        #[test]
        fn error_plus_reference_recovers_state(x in vec2(), xd in vec2()) {
            let scn = TrackingScenario::new(tracking_plant(), DMatrix::zeros(2, 2), DMatrix::zeros(1, 2)).unwrap();
            let (e, _) = scn.tracking_error(&x, &xd, &v(&[0.0])).unwrap();
            prop_assert!((e + xd - &x).amax() <= 4.0 * f64::EPSILON);
        }
    }
}
