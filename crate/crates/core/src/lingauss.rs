//! Linear-Gaussian state-space models whose drift and diffusion depend on
//! the (scalar) control, their exact zero-order-hold discretization, and the
//! Kalman filter.
//!
//! The continuous model is
//!
//! ```text
//! dx = ((A0c + A1c u) x + Bc u) dt + Gc dw,      y_k = C x(t_k) + v_k
//! ```
//!
//! and the discrete model obtained with a piecewise-constant control is
//!
//! ```text
//! x_{k+1} = A(u) x_k + B u + D(u)^{1/2} w_k
//! A(u) = A0 + A1 u,        D(u) = D0 + D1 u + D2 u^2
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, rel_diff};

/// Relative residual tolerated when checking that the discretized model is
/// affine (transition, input) / quadratic (diffusion) in the control.
pub const STRUCTURE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    /// `A0c`, drift at zero control.
    pub drift: DMatrix<f64>,
    /// `A1c`, so that the drift is `A0c + A1c u`.
    pub drift_coupling: DMatrix<f64>,
    /// `Bc`.
    pub input: DVector<f64>,
    /// `Gc`; the diffusion intensity is `Gc Gc^T`.
    pub diffusion: DMatrix<f64>,
    /// Observation row `C`.
    pub observation: DVector<f64>,
    /// Observation noise variance `s_v`.
    pub obs_noise_var: f64,
}

impl ContinuousModel {
    /// Integrator-with-drifting-gain model: the first state is a Wiener
    /// gain perturbation, the second obeys
    /// `d eta = (-a_c eta + (b_c + x_1) u) dt + g_2c dw_2`, and only the
    /// second state is observed.
    pub fn drifting_gain(a_c: f64, b_c: f64, g1c: f64, g2c: f64, s_v: f64) -> Self {
        Self {
            drift: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -a_c]),
            drift_coupling: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
            input: DVector::from_vec(vec![0.0, b_c]),
            diffusion: DMatrix::from_row_slice(2, 2, &[g1c, 0.0, 0.0, g2c]),
            observation: DVector::from_vec(vec![0.0, 1.0]),
            obs_noise_var: s_v,
        }
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn drift_at(&self, u: f64) -> DMatrix<f64> {
        &self.drift + &self.drift_coupling * u
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        let square = |m: &DMatrix<f64>| m.nrows() == n && m.ncols() == n;
        if n == 0 || !square(&self.drift) || !square(&self.drift_coupling) {
            return Err(Error::Dimension("drift matrices must be n x n".into()));
        }
        if self.diffusion.nrows() != n {
            return Err(Error::Dimension("diffusion must have n rows".into()));
        }
        if self.input.len() != n || self.observation.len() != n {
            return Err(Error::Dimension("input and observation must have length n".into()));
        }
        if !(self.obs_noise_var > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "observation noise variance must be positive, got {}",
                self.obs_noise_var
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub b: DVector<f64>,
    pub d0: DMatrix<f64>,
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    /// Observation row.
    pub c: DVector<f64>,
    pub s_v: f64,
    /// Sample time.
    pub t0: f64,
}

impl DiscreteModel {
    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    /// `A(u) = A0 + A1 u`.
    pub fn transition(&self, u: f64) -> DMatrix<f64> {
        &self.a0 + &self.a1 * u
    }

    /// `D(u) = D0 + D1 u + D2 u^2`.
    pub fn diffusion(&self, u: f64) -> DMatrix<f64> {
        &self.d0 + &self.d1 * u + &self.d2 * (u * u)
    }

    /// `C x`.
    pub fn observe(&self, x: &DVector<f64>) -> f64 {
        self.c.dot(x)
    }

    /// Checks `D(u)` for positive semidefiniteness on `points` evenly spaced
    /// controls over `[lo, hi]`; returns the smallest eigenvalue found.
    pub fn min_diffusion_eigenvalue(&self, lo: f64, hi: f64, points: usize) -> f64 {
        let points = points.max(2);
        (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .map(|u| linalg::min_eigenvalue(&self.diffusion(u)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Exact discretization of `A_c(u)`, `B_c` and `G_c G_c^T` at one control
/// value with Van Loan's block exponentials.
fn discretize_at(cont: &ContinuousModel, u: f64, t0: f64) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let n = cont.dim();
    let ac = cont.drift_at(u);
    let a = (&ac * t0).exp();

    // [[A, Bc], [0, 0]] T0 -> top-right block is int_0^T e^{A s} Bc ds.
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&ac);
    m.view_mut((0, n), (n, 1)).copy_from(&cont.input);
    let e = (m * t0).exp();
    let b = DVector::from_iterator(n, e.view((0, n), (n, 1)).iter().copied());

    // [[-A, G G^T], [0, A^T]] T0 = [[., F12], [0, F22]];  D = F22^T F12.
    let gg = &cont.diffusion * cont.diffusion.transpose();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(-&ac));
    m.view_mut((0, n), (n, n)).copy_from(&gg);
    m.view_mut((n, n), (n, n)).copy_from(&ac.transpose());
    let e = (m * t0).exp();
    let f12 = e.view((0, n), (n, n)).clone_owned();
    let f22 = e.view((n, n), (n, n)).clone_owned();
    let d = linalg::symmetrize(&(f22.transpose() * f12));
    (a, b, d)
}

/// Zero-order-hold discretization with sample time `t0`.
///
/// The transition and input are evaluated at `u = 0, 1` and the diffusion at
/// `u = -1, 0, 1`; the coefficients are then recovered by exact
/// interpolation. A check at `u = 2` (and `u = -1` for the affine parts)
/// rejects models whose discretization is not of the assumed form.
pub fn discretize(cont: &ContinuousModel, t0: f64) -> Result<DiscreteModel> {
    if !(t0 > 0.0) || !t0.is_finite() {
        return Err(Error::InvalidParameter(format!("sample time must be positive, got {t0}")));
    }
    cont.validate()?;

    let (a_m, b_m, d_m) = discretize_at(cont, -1.0, t0);
    let (a_z, b_z, d_z) = discretize_at(cont, 0.0, t0);
    let (a_p, b_p, d_p) = discretize_at(cont, 1.0, t0);
    let (a_c, b_c, d_c) = discretize_at(cont, 2.0, t0);

    let a1 = &a_p - &a_z;
    let d1 = (&d_p - &d_m) * 0.5;
    let d2 = (&d_p + &d_m) * 0.5 - &d_z;

    let check = |quantity, fitted: &DMatrix<f64>, exact: &DMatrix<f64>, at| {
        let residual = rel_diff(fitted, exact);
        if residual > STRUCTURE_TOL {
            Err(Error::NonAffineStructure { quantity, residual, at })
        } else {
            Ok(())
        }
    };
    check("transition", &(&a_z - &a1), &a_m, -1.0)?;
    check("transition", &(&a_z + &a1 * 2.0), &a_c, 2.0)?;
    let as_mat = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    for (b, at) in [(&b_m, -1.0), (&b_p, 1.0), (&b_c, 2.0)] {
        check("input", &as_mat(&b_z), &as_mat(b), at)?;
    }
    check("diffusion", &(&d_z + &d1 * 2.0 + &d2 * 4.0), &d_c, 2.0)?;

    Ok(DiscreteModel {
        a0: a_z,
        a1,
        b: b_z,
        d0: d_z,
        d1,
        d2,
        c: cont.observation.clone(),
        s_v: cont.obs_noise_var,
        t0,
    })
}

/// Mean and covariance of a Gaussian state distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Time update: `m- = A(u) m + B u`, `S- = A(u) S A(u)^T + D(u)`.
pub fn kf_predict(belief: &GaussianBelief, model: &DiscreteModel, u: f64) -> GaussianBelief {
    let a = model.transition(u);
    let mean = &a * &belief.mean + &model.b * u;
    let cov = linalg::symmetrize(&(&a * &belief.cov * a.transpose() + model.diffusion(u)));
    GaussianBelief { mean, cov }
}

/// Innovation variance `W = s_v + C S- C^T`.
pub fn innovation_variance(pred: &GaussianBelief, model: &DiscreteModel) -> f64 {
    model.s_v + linalg::quad_form(&model.c, &pred.cov)
}

/// Posterior covariance `S- - S- C^T W^{-1} C S-`; it does not depend on the
/// observed value.
pub fn update_cov(pred_cov: &DMatrix<f64>, model: &DiscreteModel) -> Result<DMatrix<f64>> {
    let w = model.s_v + linalg::quad_form(&model.c, pred_cov);
    if !(w > 0.0) {
        return Err(Error::DegenerateObservation(w));
    }
    let sc = pred_cov * &model.c;
    Ok(linalg::symmetrize(&(pred_cov - &sc * sc.transpose() / w)))
}

/// Measurement update with the scalar observation `y`.
pub fn kf_update(pred: &GaussianBelief, model: &DiscreteModel, y: f64) -> Result<GaussianBelief> {
    let cov = update_cov(&pred.cov, model)?;
    let innovation = y - model.observe(&pred.mean);
    let mean = &pred.mean + &cov * &model.c * (innovation / model.s_v);
    Ok(GaussianBelief { mean, cov })
}

/// Draws one transition and the observation of the new state.
pub fn simulate_step<R: Rng + ?Sized>(
    model: &DiscreteModel,
    x: &DVector<f64>,
    u: f64,
    rng: &mut R,
) -> Result<(DVector<f64>, f64)> {
    let root = linalg::psd_sqrt(&model.diffusion(u))?;
    let n = model.dim();
    let w = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let next = model.transition(u) * x + &model.b * u + root * w;
    let v: f64 = rng.sample(StandardNormal);
    let y = model.observe(&next) + model.s_v.sqrt() * v;
    Ok((next, y))
}
