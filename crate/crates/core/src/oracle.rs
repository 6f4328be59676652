//! Ground truth for linear-quadratic scenarios.
//!
//! The continuous-time algebraic Riccati equation
//! `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` is solved through the stable invariant
//! subspace of the Hamiltonian `[A, −BR⁻¹Bᵀ; −Q, −Aᵀ]`, extracted with the
//! scaled Newton iteration for the matrix sign function, and then polished
//! with Kleinman (Newton) iterations on the Riccati residual.
//!
//! Value weights follow the quadratic-monomial convention of
//! [`crate::features`]: `Pᵢᵢ` for `xᵢ²` and `2Pᵢⱼ` for `xᵢxⱼ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_shape, Error, Result};
use crate::features::{Basis, BasisFamily};
use crate::linalg::{spectral_abscissa, symmetrize};

const SIGN_MAX_ITER: usize = 100;
const KLEINMAN_MAX_ITER: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct LqrSolution {
    /// Stabilizing solution of the Riccati equation.
    pub p: DMatrix<f64>,
    /// `K = R⁻¹BᵀP`; the optimal feedback is `u = −Kx`.
    pub gain: DMatrix<f64>,
    /// `P` expressed on the quadratic-monomial value basis.
    pub value_weights: DVector<f64>,
    /// Frobenius norm of the Riccati residual at `p`.
    pub residual: f64,
}

/// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖_F`.
pub fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let Some(r_inv) = r.clone().try_inverse() else {
        return f64::INFINITY;
    };
    (a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q).norm()
}

/// Solves `FᵀX + XF + C = 0` by Kronecker vectorization.
pub fn solve_lyapunov(f: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let ft = f.transpose();
    let op = eye.kronecker(&ft) + ft.kronecker(&eye);
    let rhs = -DVector::from_column_slice(c.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("Lyapunov operator is singular".into()))?;
    let mut x = DMatrix::from_column_slice(n, n, sol.as_slice());
    symmetrize(&mut x);
    Ok(x)
}

fn matrix_sign(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = h.nrows() as f64;
    let mut z = h.clone();
    for _ in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let log_det: f64 = lu.u().diagonal().iter().map(|d| d.abs().ln()).sum();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::Domain("Hamiltonian has eigenvalues on the imaginary axis".into()))?;
        let scale = if log_det.is_finite() {
            (-log_det / dim).exp()
        } else {
            1.0
        };
        let next = (&z * scale + inv / scale) * 0.5;
        let change = (&next - &z).norm();
        let size = next.norm();
        z = next;
        if !size.is_finite() {
            break;
        }
        if change <= 1e-13 * size {
            return Ok(z);
        }
    }
    Err(Error::Domain(
        "matrix sign iteration did not converge (eigenvalues near the imaginary axis)".into(),
    ))
}

/// Quadratic-monomial weights of the value function `xᵀPx`.
pub fn value_weights_from_p(p: &DMatrix<f64>) -> DVector<f64> {
    let n = p.nrows();
    let mut w: Vec<f64> = (0..n).map(|i| p[(i, i)]).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            w.push(p[(i, j)] + p[(j, i)]);
        }
    }
    DVector::from_vec(w)
}

/// Stabilizing solution of the continuous-time algebraic Riccati equation.
pub fn solve_are(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<LqrSolution> {
    let n = a.nrows();
    let m = b.ncols();
    check_shape("A", (n, n), a.shape())?;
    check_shape("B", (n, m), b.shape())?;
    check_shape("Q", (n, n), q.shape())?;
    check_shape("R", (m, m), r.shape())?;
    if r.clone().cholesky().is_none() {
        return Err(Error::Domain("R must be symmetric positive definite".into()));
    }
    // Solve the problem normalized by ‖R‖ so that (cQ, cR) and (Q, R)
    // follow the same numerical path; P scales back by the same factor.
    let scale = r.norm();
    let (q_n, r_n) = (q / scale, r / scale);
    let r_inv = r_n.clone().try_inverse().expect("R is positive definite");
    let g = b * &r_inv * b.transpose();

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&q_n));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let w = matrix_sign(&h)?;

    // The stable subspace is spanned by [I; P]: W [I; P] = −[I; P].
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(w.view((n, n), (n, n)) + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(w.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));
    let mut p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Domain(format!("invariant subspace solve failed: {e}")))?;
    symmetrize(&mut p);

    // Kleinman refinement until the residual stops improving.
    let mut residual = riccati_residual(a, b, &q_n, &r_n, &p);
    for _ in 0..KLEINMAN_MAX_ITER {
        let k = &r_inv * b.transpose() * &p;
        let closed = a - b * &k;
        if !(spectral_abscissa(&closed) < 0.0) {
            break;
        }
        let c = &q_n + k.transpose() * &r_n * &k;
        let Ok(mut candidate) = solve_lyapunov(&closed, &c) else {
            break;
        };
        symmetrize(&mut candidate);
        let cand_residual = riccati_residual(a, b, &q_n, &r_n, &candidate);
        if !(cand_residual < residual) {
            break;
        }
        p = candidate;
        residual = cand_residual;
    }

    let gain = &r_inv * b.transpose() * &p;
    p *= scale;
    let residual = riccati_residual(a, b, q, r, &p);
    let tolerance = 1e-9 * (1.0 + q.norm());
    let abscissa = spectral_abscissa(&(a - b * &gain));
    if !(abscissa < 0.0) || !residual.is_finite() {
        return Err(Error::Domain(format!(
            "no stabilizing solution (closed-loop spectral abscissa {abscissa:e}); (A, B) is not stabilizable"
        )));
    }
    if residual > tolerance {
        return Err(Error::Convergence { residual });
    }
    Ok(LqrSolution {
        value_weights: value_weights_from_p(&p),
        p,
        gain,
        residual,
    })
}

/// Ideal policy weights `W_u* = Kᵀ` for a linear policy basis.
pub fn ideal_policy_weights(sol: &LqrSolution, basis: &Basis) -> Result<DMatrix<f64>> {
    if basis.family() != BasisFamily::Linear {
        return Err(Error::Unsupported(format!(
            "ideal policy weights need the linear policy basis, got {}",
            basis.family()
        )));
    }
    Ok(sol.gain.transpose())
}

/// Ideal IRL weights `[W_V; W_Q; W_R⁻]` under the scale anchor `r₁`.
///
/// The true reward is `eᵀdiag(q)e + uᵀdiag(r)u`; fixing the first control
/// weight at `r1` rescales every weight by `r1 / r[0]`.
pub fn ideal_reward_weights(
    sol: &LqrSolution,
    q_diag: &[f64],
    r_diag: &[f64],
    r1: f64,
) -> Result<DVector<f64>> {
    let n = sol.p.nrows();
    if q_diag.len() != n || r_diag.len() != sol.gain.nrows() {
        return Err(Error::Dimension(format!(
            "reward diagonals have lengths {} and {}, expected {n} and {}",
            q_diag.len(),
            r_diag.len(),
            sol.gain.nrows()
        )));
    }
    let c = r1 / r_diag[0];
    let w: Vec<f64> = sol
        .value_weights
        .iter()
        .chain(q_diag)
        .chain(&r_diag[1..])
        .map(|v| v * c)
        .collect();
    Ok(DVector::from_vec(w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracking_system() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.5, -0.5]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
            DMatrix::from_element(1, 1, 10.0),
        )
    }

    #[test]
    fn tracking_problem_matches_printed_values() {
        let (a, b, q, r) = tracking_system();
        let sol = solve_are(&a, &b, &q, &r).unwrap();
        let printed = [1.82, 2.30, 1.83];
        for (w, p) in sol.value_weights.iter().zip(printed) {
            assert!((w - p).abs() < 5e-3, "{w} vs {p}");
        }
        assert!((sol.gain[(0, 0)] - 0.092).abs() < 5e-4);
        assert!((sol.gain[(0, 1)] - 0.230).abs() < 5e-4);
        assert!(sol.residual < 1e-9);
        assert!(spectral_abscissa(&(&a - &b * &sol.gain)) < 0.0);
    }

    #[test]
    fn tracking_problem_matches_reference_solver() {
        // Frozen from an independent Schur-based CARE solver.
        let (a, b, q, r) = tracking_system();
        let sol = solve_are(&a, &b, &q, &r).unwrap();
        let expected = [1.8200183427500984, 2.3021637657609615, 1.8321595661992314];
        for (w, e) in sol.value_weights.iter().zip(expected) {
            assert!((w - e).abs() < 1e-10);
        }
        assert!((sol.gain[(0, 0)] - 0.09160797830996158).abs() < 1e-11);
        assert!((sol.gain[(0, 1)] - 0.23021637657609617).abs() < 1e-11);
    }

    #[test]
    fn decoupled_scalar_closed_form() {
        // −2p − p² + 1 = 0 ⇒ p = √2 − 1 on each axis.
        let eye = DMatrix::<f64>::identity(2, 2);
        let sol = solve_are(&(-&eye), &eye, &eye, &eye).unwrap();
        let expected = &eye * (2f64.sqrt() - 1.0);
        assert!((&sol.p - expected).amax() < 1e-12);
    }

    #[test]
    fn gain_invariant_under_reward_scaling() {
        let (a, b, q, r) = tracking_system();
        let base = solve_are(&a, &b, &q, &r).unwrap();
        let scaled = solve_are(&a, &b, &(&q * 7.0), &(&r * 7.0)).unwrap();
        assert!((&base.gain - &scaled.gain).amax() < 1e-10);
        assert!((&base.p * 7.0 - &scaled.p).amax() < 1e-9);
    }

    #[test]
    fn unstabilizable_pair_is_a_domain_error() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let eye = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        assert!(matches!(solve_are(&a, &b, &eye, &r), Err(Error::Domain(_))));
    }

    #[test]
    fn indefinite_r_rejected() {
        let (a, b, q, _) = tracking_system();
        let r = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(solve_are(&a, &b, &q, &r), Err(Error::Domain(_))));
    }

    #[test]
    fn ideal_policy_weights_are_transposed_gain() {
        let (a, b, q, r) = tracking_system();
        let sol = solve_are(&a, &b, &q, &r).unwrap();
        let lin = Basis::new(BasisFamily::Linear, 2).unwrap();
        let w = ideal_policy_weights(&sol, &lin).unwrap();
        assert!((w[(0, 0)] - 0.0915).abs() < 5e-4);
        assert!((w[(1, 0)] - 0.230).abs() < 5e-4);
        let quad = Basis::new(BasisFamily::QuadraticMonomials, 2).unwrap();
        assert!(matches!(ideal_policy_weights(&sol, &quad), Err(Error::Unsupported(_))));

        let zero = LqrSolution {
            p: DMatrix::zeros(2, 2),
            gain: DMatrix::zeros(1, 2),
            value_weights: DVector::zeros(3),
            residual: 0.0,
        };
        assert_eq!(ideal_policy_weights(&zero, &lin).unwrap(), DMatrix::zeros(2, 1));

        let e = DVector::from_column_slice(&[0.4, -0.8]);
        let u = -(w.tr_mul(&lin.eval(&e).unwrap()));
        assert_eq!(u, -(&sol.gain * &e));
    }

    #[test]
    fn value_weights_reproduce_quadratic_form() {
        let p = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.3, 1.0, 0.2, -0.1, 0.2, 0.5]);
        let w = value_weights_from_p(&p);
        let basis = Basis::new(BasisFamily::QuadraticMonomials, 3).unwrap();
        let x = DVector::from_column_slice(&[0.7, -1.3, 0.4]);
        let v = w.dot(&basis.eval(&x).unwrap());
        assert!((v - (x.transpose() * &p * &x)[(0, 0)]).abs() < 1e-14);
    }

    #[test]
    fn anchored_weights_scale_with_r1() {
        let (a, b, q, r) = tracking_system();
        let sol = solve_are(&a, &b, &q, &r).unwrap();
        let w10 = ideal_reward_weights(&sol, &[1.0, 1.0], &[10.0], 10.0).unwrap();
        let w20 = ideal_reward_weights(&sol, &[1.0, 1.0], &[10.0], 20.0).unwrap();
        assert_eq!(w10.len(), 5);
        assert!((w20 - &w10 * 2.0).amax() < 1e-14);
        assert!(ideal_reward_weights(&sol, &[1.0], &[10.0], 10.0).is_err());
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let f = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]);
        let x = solve_lyapunov(&f, &c).unwrap();
        assert!((f.transpose() * &x + &x * &f + c).amax() < 1e-13);
    }
}
