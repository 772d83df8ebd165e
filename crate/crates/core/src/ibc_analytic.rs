//! Closed-form two-step information based control for the bilinear
//! linear-Gaussian model.
//!
//! At the first step the controller minimizes the open-loop expected cost
//! minus `nu0` times the predicted mutual information between `x_1` and
//! `y_1`; the second control is eliminated analytically, which leaves the
//! one-dimensional objective [`psi`]. At the second step the filtered
//! belief is available and the control follows from a scalar quadratic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{inner, quad_form, symmetrize};
use crate::lingauss::{update_cov, DiscreteModel, GaussianBelief};
use crate::optim::{grid_minimize, Minimum, SearchSpec};

/// Open-loop predicted mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl From<&GaussianBelief> for MomentPair {
    fn from(b: &GaussianBelief) -> Self {
        Self {
            mean: b.mean.clone(),
            cov: b.cov.clone(),
        }
    }
}

/// Cost weights of the two-step problem
/// `1/2 E{ q_1 x_{1,n}^2 + r_0 u_0^2 + q_2 x_{2,n}^2 + r_1 u_1^2 }`,
/// where `x_{i,n}` is the last state coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// `q_1, q_2`: weights on the state after the first and second step.
    pub state: [f64; 2],
    /// `r_0, r_1`: control weights.
    pub control: [f64; 2],
}

impl Weights {
    pub fn new(state: [f64; 2], control: [f64; 2]) -> Result<Self> {
        if state.iter().any(|q| !(*q >= 0.0)) || control.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "state weights must be >= 0 and control weights > 0, got {state:?} / {control:?}"
            )));
        }
        Ok(Self { state, control })
    }

    /// No weight on `x_1`, unit weight on `x_2`, `r_0 = r_1 = 1e-3`.
    pub fn drifting_gain_example() -> Self {
        Self {
            state: [0.0, 1.0],
            control: [1e-3, 1e-3],
        }
    }

    /// `Q_i = diag(0, ..., 0, q_i)` for `i = 1, 2`.
    pub fn state_matrix(&self, i: usize, n: usize) -> DMatrix<f64> {
        assert!(i == 1 || i == 2, "state weights exist for steps 1 and 2");
        let mut q = DMatrix::zeros(n, n);
        q[(n - 1, n - 1)] = self.state[i - 1];
        q
    }
}

/// `1/2 alpha u^2 + beta u + gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadCoeffs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl QuadCoeffs {
    pub fn eval(&self, u: f64) -> f64 {
        0.5 * self.alpha * u * u + self.beta * u + self.gamma
    }

    pub fn argmin(&self) -> f64 {
        -self.beta / self.alpha
    }

    pub fn min_value(&self) -> f64 {
        self.gamma - self.beta * self.beta / (2.0 * self.alpha)
    }
}

/// `mu' = A(u) mu + B u`, `Sigma' = A(u) Sigma A(u)^T + D(u)`.
pub fn propagate_moments(model: &DiscreteModel, start: &MomentPair, u: f64) -> MomentPair {
    let a = model.transition(u);
    MomentPair {
        mean: &a * &start.mean + &model.b * u,
        cov: symmetrize(&(&a * &start.cov * a.transpose() + model.diffusion(u))),
    }
}

/// Coefficients of `1/2 E|x'|_Q^2 + 1/2 r u^2` as a quadratic in `u`, where
/// `x' = A(u) x + B u + D(u)^{1/2} w` and `x ~ (mean, cov)`.
pub fn quad_coeffs(model: &DiscreteModel, mean: &DVector<f64>, cov: &DMatrix<f64>, q: &DMatrix<f64>, r: f64) -> QuadCoeffs {
    let (a0, a1) = (&model.a0, &model.a1);
    let lin = a1 * mean + &model.b;
    let drift = a0 * mean;
    let alpha = quad_form(&lin, q) + inner(&(a1 * cov * a1.transpose() + &model.d2), q) + r;
    let beta = (lin.transpose() * q * &drift)[(0, 0)]
        + 0.5 * inner(&(a0 * cov * a1.transpose() + a1 * cov * a0.transpose() + &model.d1), q);
    let gamma = 0.5 * quad_form(&drift, q) + 0.5 * inner(&(a0 * cov * a0.transpose() + &model.d0), q);
    QuadCoeffs { alpha, beta, gamma }
}

/// Second-step coefficients (`Q_2`, `r_1`) about the given mean and covariance.
pub fn step2_coeffs(model: &DiscreteModel, mean: &DVector<f64>, cov: &DMatrix<f64>, w: &Weights) -> QuadCoeffs {
    quad_coeffs(model, mean, cov, &w.state_matrix(2, model.dim()), w.control[1])
}

/// Open-loop expected cost of the control pair `(u0, u1)` given the
/// filtered belief at step 0.
pub fn expected_cost(model: &DiscreteModel, belief: &GaussianBelief, u0: f64, u1: f64, w: &Weights) -> f64 {
    let n = model.dim();
    let m1 = propagate_moments(model, &belief.into(), u0);
    let m2 = propagate_moments(model, &m1, u1);
    let stage = |m: &MomentPair, q: &DMatrix<f64>, r: f64, u: f64| quad_form(&m.mean, q) + r * u * u + inner(q, &m.cov);
    0.5 * (stage(&m1, &w.state_matrix(1, n), w.control[0], u0) + stage(&m2, &w.state_matrix(2, n), w.control[1], u1))
}

/// Predicted mutual information between `x_1` and `y_1`:
/// `1/2 ln(1 + C Sigma_1(u0) C^T / s_v)`.
pub fn predicted_mi(model: &DiscreteModel, belief: &GaussianBelief, u0: f64) -> f64 {
    let sigma1 = propagate_moments(model, &belief.into(), u0).cov;
    0.5 * (quad_form(&model.c, &sigma1) / model.s_v).ln_1p()
}

/// First-stage terms and the bar-coefficients of the eliminated second step.
struct StepOne {
    stage: f64,
    mi: f64,
    bar: QuadCoeffs,
}

fn step_one(model: &DiscreteModel, belief: &GaussianBelief, u0: f64, w: &Weights) -> StepOne {
    let n = model.dim();
    let m1 = propagate_moments(model, &belief.into(), u0);
    let q1 = w.state_matrix(1, n);
    let stage = 0.5 * (quad_form(&m1.mean, &q1) + w.control[0] * u0 * u0 + inner(&q1, &m1.cov));
    let mi = 0.5 * (quad_form(&model.c, &m1.cov) / model.s_v).ln_1p();
    // The second-step coefficients use the covariance after the y_1 update
    // (which does not depend on the value of y_1) about the predicted mean.
    let filtered = update_cov(&m1.cov, model).unwrap_or_else(|_| DMatrix::from_element(n, n, f64::NAN));
    let bar = step2_coeffs(model, &m1.mean, &filtered, w);
    StepOne { stage, mi, bar }
}

/// First-step IBC objective as a function of both controls.
pub fn ibc_objective(model: &DiscreteModel, belief: &GaussianBelief, u0: f64, u1: f64, nu0: f64, w: &Weights) -> f64 {
    let s = step_one(model, belief, u0, w);
    s.stage - nu0 * s.mi + s.bar.eval(u1)
}

/// The IBC objective with the second control minimized out,
/// `u1 = -beta_bar / alpha_bar`.
pub fn psi(model: &DiscreteModel, belief: &GaussianBelief, u0: f64, nu0: f64, w: &Weights) -> f64 {
    let s = step_one(model, belief, u0, w);
    s.stage - nu0 * s.mi + s.bar.min_value()
}

/// The second control that [`psi`] assumes for a given `u0`.
pub fn planned_u1(model: &DiscreteModel, belief: &GaussianBelief, u0: f64, w: &Weights) -> f64 {
    step_one(model, belief, u0, w).bar.argmin()
}

/// `min_{u1}` of the plain open-loop expected cost (no information term,
/// second step evaluated with the predicted covariance).
pub fn olfo_value(model: &DiscreteModel, belief: &GaussianBelief, u0: f64, w: &Weights) -> f64 {
    let n = model.dim();
    let m1 = propagate_moments(model, &belief.into(), u0);
    let q1 = w.state_matrix(1, n);
    let stage = 0.5 * (quad_form(&m1.mean, &q1) + w.control[0] * u0 * u0 + inner(&q1, &m1.cov));
    stage + step2_coeffs(model, &m1.mean, &m1.cov, w).min_value()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOneSolution {
    /// The positive branch when the minimizers come in a `+-` pair.
    pub control: f64,
    /// Number of global minimizers found (2 for a symmetric pair).
    pub multiplicity: usize,
    pub minimizers: Vec<Minimum>,
    pub value: f64,
    pub at_boundary: bool,
    /// `(u0, psi(u0))` on the search grid.
    pub curve: Vec<(f64, f64)>,
}

/// Global minimization of [`psi`] over the interval of `spec`.
pub fn ibc_step1(model: &DiscreteModel, belief: &GaussianBelief, nu0: f64, w: &Weights, spec: &SearchSpec) -> Result<StepOneSolution> {
    if !(nu0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("penalty weight must be >= 0, got {nu0}")));
    }
    let m = grid_minimize(|u| psi(model, belief, u, nu0, w), spec)?;
    let best = m.best();
    Ok(StepOneSolution {
        control: m.positive_branch().x,
        multiplicity: m.multiplicity(),
        value: best.value,
        at_boundary: m.at_boundary,
        minimizers: m.minimizers,
        curve: m.curve,
    })
}

/// Second-step control from the filtered belief after `y_1`.
pub fn ibc_step2(model: &DiscreteModel, posterior: &GaussianBelief, w: &Weights) -> f64 {
    step2_coeffs(model, &posterior.mean, &posterior.cov, w).argmin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lingauss::{discretize, kf_predict, ContinuousModel};
    use approx::assert_relative_eq;

    fn model() -> DiscreteModel {
        let s = 2f64.sqrt();
        discretize(&ContinuousModel::drifting_gain(1.0, 1.0, s, s, 0.01), 0.1).unwrap()
    }

    fn belief(s2: f64) -> GaussianBelief {
        GaussianBelief::new(DVector::zeros(2), DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, s2])))
    }

    #[test]
    fn moments_match_filter_prediction() {
        let m = model();
        let b = GaussianBelief::new(DVector::from_vec(vec![0.2, -0.4]), DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.4]));
        for u in [-1.5, 0.0, 2.2] {
            let p = propagate_moments(&m, &(&b).into(), u);
            let k = kf_predict(&b, &m, u);
            assert_eq!(p.mean, k.mean);
            assert_eq!(p.cov, k.cov);
        }
        let zero = propagate_moments(&m, &MomentPair::from(&belief(0.1)), 0.0);
        assert_eq!(zero.mean.norm(), 0.0);
    }

    #[test]
    fn second_variance_by_scalar_arithmetic() {
        let m = model();
        let (a2, a3, d2, d3, d4) = (m.a0[(1, 1)], m.a1[(1, 0)], m.d1[(0, 1)], m.d0[(1, 1)], m.d2[(1, 1)]);
        let s2 = 0.1 * 0.01 / 0.11;
        let u = 2.0352;
        let p = propagate_moments(&m, &MomentPair::from(&belief(s2)), u);
        let by_hand = (u * a3) * (u * a3) * 5.0 + a2 * a2 * s2 + d3 + d4 * u * u;
        assert_relative_eq!(p.cov[(1, 1)], by_hand, max_relative = 1e-12);
        assert_relative_eq!(p.cov[(0, 1)], u * a3 * 5.0 + d2 * u, max_relative = 1e-12);
    }

    #[test]
    fn information_by_scalar_arithmetic() {
        let m = model();
        let (a2, a3, d3, d4) = (m.a0[(1, 1)], m.a1[(1, 0)], m.d0[(1, 1)], m.d2[(1, 1)]);
        let s2 = 0.1 * 0.01 / 0.11;
        let c_sigma_c = 4.0 * a3 * a3 * 5.0 + a2 * a2 * s2 + d3 + 4.0 * d4;
        let expected = 0.5 * (1.0 + c_sigma_c / 0.01).ln();
        assert_relative_eq!(predicted_mi(&m, &belief(s2), 2.0), expected, max_relative = 1e-12);
    }

    #[test]
    fn no_uncertainty_no_information() {
        let mut m = model();
        m.d0.fill(0.0);
        m.d1.fill(0.0);
        m.d2.fill(0.0);
        let b = GaussianBelief::new(DVector::zeros(2), DMatrix::zeros(2, 2));
        assert_eq!(predicted_mi(&m, &b, 1.7), 0.0);
        let mut m = model();
        m.s_v = 1e300;
        assert!(predicted_mi(&m, &belief(0.1), 1.7) < 1e-290);
    }

    #[test]
    fn pure_control_penalty() {
        let m = model();
        let w = Weights::new([0.0, 0.0], [0.3, 0.7]).unwrap();
        let c = expected_cost(&m, &belief(0.1), 1.5, -2.0, &w);
        assert_relative_eq!(c, 0.5 * (0.3 * 2.25 + 0.7 * 4.0), max_relative = 1e-14);
    }

    #[test]
    fn drift_only_cost() {
        let m = model();
        let w = Weights::drifting_gain_example();
        let b = belief(0.1);
        let s1 = &m.a0 * &b.cov * m.a0.transpose() + &m.d0;
        let s2 = &m.a0 * &s1 * m.a0.transpose() + &m.d0;
        assert_relative_eq!(expected_cost(&m, &b, 0.0, 0.0, &w), 0.5 * s2[(1, 1)], max_relative = 1e-14);
    }

    #[test]
    fn trivial_coefficients() {
        let mut m = model();
        m.d0.fill(0.0);
        m.d1.fill(0.0);
        m.d2.fill(0.0);
        m.b.fill(0.0);
        let w = Weights::drifting_gain_example();
        let c = step2_coeffs(&m, &DVector::zeros(2), &DMatrix::zeros(2, 2), &w);
        assert_eq!((c.alpha, c.beta, c.gamma), (w.control[1], 0.0, 0.0));

        let m = model();
        let w = Weights::new([0.0, 0.0], [1e-3, 0.25]).unwrap();
        let c = step2_coeffs(&m, &DVector::from_vec(vec![0.3, 0.5]), &belief(0.1).cov, &w);
        assert_eq!((c.alpha, c.beta, c.gamma), (0.25, 0.0, 0.0));
    }

    #[test]
    fn rejects_invalid_weights() {
        assert!(Weights::new([0.0, 1.0], [0.0, 1.0]).is_err());
        assert!(Weights::new([-1.0, 1.0], [1.0, 1.0]).is_err());
    }

    #[test]
    fn step2_is_a_strict_minimum() {
        let m = model();
        let w = Weights::drifting_gain_example();
        let post = GaussianBelief::new(DVector::from_vec(vec![0.4, 0.2]), DMatrix::from_row_slice(2, 2, &[3.0, 0.01, 0.01, 0.009]));
        let u = ibc_step2(&m, &post, &w);
        let c = step2_coeffs(&m, &post.mean, &post.cov, &w);
        assert!(c.alpha >= w.control[1]);
        assert!(c.eval(u + 1e-4) > c.eval(u));
        assert!(c.eval(u - 1e-4) > c.eval(u));
    }
}
