//! Monomial feature bases with exact gradients.
//!
//! Every basis is a fixed list of monomials in the state. The registry is
//! closed: families are selected by name in the scenario configuration.
//!
//! Ordering of [`BasisFamily::QuadraticMonomials`] is squares first, then the
//! cross terms `xᵢxⱼ` (`i < j`) in lexicographic order; for two states this is
//! `(x₁², x₂², x₁x₂)`. The Riccati oracle relies on this ordering when it turns
//! a value matrix `P` into weights (`Pᵢᵢ` for squares, `2Pᵢⱼ` for cross terms).

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BasisFamily {
    /// All degree-two monomials: squares, then cross terms.
    QuadraticMonomials,
    /// `(x₁², …, xₙ²)`.
    DiagonalSquares,
    /// `(x₁, …, xₙ)`.
    Linear,
    /// Every monomial with total degree in `min_degree..=max_degree`, graded.
    Polynomial { min_degree: u32, max_degree: u32 },
}

impl fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisFamily::QuadraticMonomials => write!(f, "quadratic_monomials"),
            BasisFamily::DiagonalSquares => write!(f, "diagonal_squares"),
            BasisFamily::Linear => write!(f, "linear"),
            BasisFamily::Polynomial {
                min_degree,
                max_degree,
            } => write!(f, "polynomial[{min_degree}..={max_degree}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BasisSpec {
    #[serde(flatten)]
    family: BasisFamily,
    input_dim: usize,
}

/// A concrete basis: a family instantiated for a given state dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisSpec", into = "BasisSpec")]
pub struct Basis {
    family: BasisFamily,
    input_dim: usize,
    exponents: Vec<Vec<u32>>,
}

impl TryFrom<BasisSpec> for Basis {
    type Error = Error;

    fn try_from(spec: BasisSpec) -> Result<Self> {
        Basis::new(spec.family, spec.input_dim)
    }
}

impl From<Basis> for BasisSpec {
    fn from(b: Basis) -> Self {
        BasisSpec {
            family: b.family,
            input_dim: b.input_dim,
        }
    }
}

fn unit(n: usize, i: usize, power: u32) -> Vec<u32> {
    let mut e = vec![0; n];
    e[i] = power;
    e
}

/// All exponent vectors of length `n` with the given total degree, in
/// lexicographically descending order (x₁ powers first).
fn exponents_of_degree(n: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == n {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(n, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, degree, &mut Vec::with_capacity(n), &mut out);
    out
}

impl Basis {
    pub fn new(family: BasisFamily, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidInput("basis input dimension must be ≥ 1".into()));
        }
        let n = input_dim;
        let exponents = match family {
            BasisFamily::QuadraticMonomials => {
                let mut ex: Vec<Vec<u32>> = (0..n).map(|i| unit(n, i, 2)).collect();
                for i in 0..n {
                    for j in (i + 1)..n {
                        let mut e = vec![0; n];
                        e[i] = 1;
                        e[j] = 1;
                        ex.push(e);
                    }
                }
                ex
            }
            BasisFamily::DiagonalSquares => (0..n).map(|i| unit(n, i, 2)).collect(),
            BasisFamily::Linear => (0..n).map(|i| unit(n, i, 1)).collect(),
            BasisFamily::Polynomial {
                min_degree,
                max_degree,
            } => {
                if min_degree == 0 || min_degree > max_degree || max_degree > 8 {
                    return Err(Error::InvalidInput(format!(
                        "polynomial basis needs 1 ≤ min_degree ≤ max_degree ≤ 8, got {min_degree}..={max_degree}"
                    )));
                }
                (min_degree..=max_degree)
                    .flat_map(|d| exponents_of_degree(n, d))
                    .collect()
            }
        };
        Ok(Self {
            family,
            input_dim,
            exponents,
        })
    }

    pub fn family(&self) -> BasisFamily {
        self.family
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        check_len("basis input", self.input_dim, x.len())?;
        check_finite("basis input", x.as_slice())
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(x)?;
        Ok(DVector::from_iterator(
            self.len(),
            self.exponents.iter().map(|e| monomial(x, e)),
        ))
    }

    /// Jacobian of [`Basis::eval`], one row per feature.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let mut j = DMatrix::zeros(self.len(), self.input_dim);
        for (row, e) in self.exponents.iter().enumerate() {
            for col in 0..self.input_dim {
                if e[col] == 0 {
                    continue;
                }
                let mut d = e.clone();
                d[col] -= 1;
                j[(row, col)] = f64::from(e[col]) * monomial(x, &d);
            }
        }
        Ok(j)
    }
}

fn monomial(x: &DVector<f64>, exponents: &[u32]) -> f64 {
    x.iter()
        .zip(exponents)
        .filter(|(_, &k)| k > 0)
        .map(|(xi, &k)| xi.powi(k as i32))
        .product()
}

/// `σᵤ(u) = (u₁², …, u_m²)`.
pub fn control_square_features(u: &DVector<f64>) -> DVector<f64> {
    u.map(|v| v * v)
}

/// Gradient of [`control_square_features`]: `diag(2u)`.
pub fn control_square_jacobian(u: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&(u * 2.0))
}

/// The bases used by one scenario: value features σ_V, reward features σ_Q
/// and policy features σ_π, all over the (error) state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBasis {
    pub value: Basis,
    pub reward: Basis,
    pub policy: Basis,
    pub input_dim: usize,
}

impl FeatureBasis {
    pub fn new(value: Basis, reward: Basis, policy: Basis, input_dim: usize) -> Result<Self> {
        let n = value.input_dim();
        if reward.input_dim() != n || policy.input_dim() != n {
            return Err(Error::Dimension(format!(
                "bases disagree on the state dimension: value {n}, reward {}, policy {}",
                reward.input_dim(),
                policy.input_dim()
            )));
        }
        if input_dim == 0 {
            return Err(Error::InvalidInput("control dimension must be ≥ 1".into()));
        }
        Ok(Self {
            value,
            reward,
            policy,
            input_dim,
        })
    }

    /// The quadratic bases used for linear-quadratic problems.
    pub fn quadratic(state_dim: usize, input_dim: usize) -> Result<Self> {
        Self::new(
            Basis::new(BasisFamily::QuadraticMonomials, state_dim)?,
            Basis::new(BasisFamily::DiagonalSquares, state_dim)?,
            Basis::new(BasisFamily::Linear, state_dim)?,
            input_dim,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.value.input_dim()
    }

    pub fn eval_value_features(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.value.eval(x)
    }

    pub fn grad_value_features(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.value.jacobian(x)
    }

    pub fn eval_reward_features(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.reward.eval(x)
    }

    pub fn policy_features(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.policy.eval(x)
    }

    /// Length of the IRL weight vector `[W_V; W_Q; W_R⁻]`.
    pub fn reward_weight_dim(&self) -> usize {
        self.value.len() + self.reward.len() + self.input_dim - 1
    }
}
