//! Exact two-step dynamic programming for the bilinear model.
//!
//! The inner minimization over the second control is closed form (the
//! Bellman function is quadratic in `u1`); the expectation over the next
//! observation is a one-dimensional Gaussian integral evaluated with
//! Gauss-Hermite quadrature; the outer minimization over `u0` is a grid scan
//! with golden-section refinement.
//!
//! All functions take the filtered belief `(m0, S0)` at step 0, i.e. after
//! the first observation `y0` has been assimilated.

use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::ibc_analytic::{quad_coeffs, step2_coeffs, QuadCoeffs, Weights};
use crate::lingauss::{innovation_variance, kf_predict, kf_update, DiscreteModel, GaussianBelief};
use crate::optim::{grid_minimize, Minimum, SearchSpec};
use crate::quadrature::GaussHermite;

/// Relative change tolerated when the quadrature order is doubled.
pub const QUADRATURE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DpConfig {
    /// Starting Gauss-Hermite order; doubled until converged.
    pub quad_order: usize,
    /// Outer grid over `u0`; `tol` is the golden-section bracket tolerance.
    pub u0_grid: SearchSpec,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            quad_order: 32,
            u0_grid: SearchSpec::new(-6.0, 6.0, 0.01, 1e-8),
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quad_order < 8 {
            return Err(Error::InvalidParameter(format!(
                "quadrature order must be at least 8, got {}",
                self.quad_order
            )));
        }
        self.u0_grid.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct R1Eval {
    pub coeffs: QuadCoeffs,
    /// `u1* = -beta_1 / alpha_1`.
    pub u1: f64,
    /// `R_1` at `u1*`.
    pub value: f64,
}

/// Second-stage Bellman quantities after observing `y1`.
pub fn r1_eval(model: &DiscreteModel, belief0: &GaussianBelief, u0: f64, y1: f64, w: &Weights) -> Result<R1Eval> {
    let post = kf_update(&kf_predict(belief0, model, u0), model, y1)?;
    let coeffs = step2_coeffs(model, &post.mean, &post.cov, w);
    Ok(R1Eval {
        coeffs,
        u1: coeffs.argmin(),
        value: coeffs.min_value(),
    })
}

fn integrate_v1(model: &DiscreteModel, belief0: &GaussianBelief, u0: f64, w: &Weights, rule: &GaussHermite) -> Result<f64> {
    let pred = kf_predict(belief0, model, u0);
    let var = innovation_variance(&pred, model);
    if !(var > 0.0) {
        return Err(Error::DegenerateObservation(var));
    }
    let mean = model.observe(&pred.mean);
    let mut failure = None;
    let v = rule.expect(mean, var, |y1| match kf_update(&pred, model, y1) {
        Ok(post) => step2_coeffs(model, &post.mean, &post.cov, w).min_value(),
        Err(e) => {
            failure = Some(e);
            f64::NAN
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Gauss-Hermite rules of orders `n, 2n, 4n, ...` up to [`MAX_QUAD_ORDER`].
///
/// The integrand is rational in `y1` with poles close to the real axis when
/// `|u0|` is large, so a fixed order is not enough everywhere.
/// Rules are fetched on first use from the process-wide cache; most
/// integrals converge on the first rungs.
#[derive(Debug)]
pub struct QuadLadder {
    orders: Vec<usize>,
    rules: Vec<OnceLock<Arc<GaussHermite>>>,
}

/// Highest order tried before giving up.
pub const MAX_QUAD_ORDER: usize = 1024;

impl QuadLadder {
    pub fn new(base_order: usize) -> Result<Self> {
        if base_order == 0 {
            return Err(Error::InvalidParameter("quadrature order must be positive".into()));
        }
        let mut orders = Vec::new();
        let mut n = base_order;
        while n <= MAX_QUAD_ORDER.max(2 * base_order) {
            orders.push(n);
            n *= 2;
        }
        let rules = orders.iter().map(|_| OnceLock::new()).collect();
        Ok(Self { orders, rules })
    }

    fn rule(&self, i: usize) -> &GaussHermite {
        self.rules[i].get_or_init(|| GaussHermite::cached(self.orders[i]).expect("positive order"))
    }

    /// Integrates until two consecutive orders agree to [`QUADRATURE_TOL`].
    fn integrate(&self, mut f: impl FnMut(&GaussHermite) -> Result<f64>) -> Result<f64> {
        let mut coarse = f(self.rule(0))?;
        let mut fine = coarse;
        for i in 1..self.orders.len() {
            fine = f(self.rule(i))?;
            if (coarse - fine).abs() <= QUADRATURE_TOL * fine.abs() + f64::MIN_POSITIVE {
                return Ok(fine);
            }
            coarse = fine;
        }
        Err(Error::QuadratureNonConvergence {
            order: *self.orders.last().expect("at least two rungs"),
            coarse,
            fine,
        })
    }
}

fn v1_with(model: &DiscreteModel, belief0: &GaussianBelief, u0: f64, w: &Weights, ladder: &QuadLadder) -> Result<f64> {
    ladder.integrate(|rule| integrate_v1(model, belief0, u0, w, rule))
}

/// `V_1(u0) = E_{y1}[ min_{u1} R_1 ]` with `y1 ~ N(C m1-, W1)`.
///
/// The order starts at `quad_order` and is doubled until the value changes
/// by less than [`QUADRATURE_TOL`] (relative); the finer value is returned.
pub fn value_v1(model: &DiscreteModel, belief0: &GaussianBelief, u0: f64, w: &Weights, cfg: &DpConfig) -> Result<f64> {
    cfg.validate()?;
    v1_with(model, belief0, u0, w, &QuadLadder::new(cfg.quad_order)?)
}

/// First-stage coefficients `(alpha_0, beta_0, gamma_0)` from `(m0, S0, Q1, r0)`.
pub fn stage0_coeffs(model: &DiscreteModel, belief0: &GaussianBelief, w: &Weights) -> QuadCoeffs {
    quad_coeffs(model, &belief0.mean, &belief0.cov, &w.state_matrix(1, model.dim()), w.control[0])
}

/// `R_0(u0) = 1/2 alpha_0 u0^2 + beta_0 u0 + gamma_0 + V_1(u0)`.
pub fn r0(model: &DiscreteModel, belief0: &GaussianBelief, u0: f64, w: &Weights, cfg: &DpConfig) -> Result<f64> {
    Ok(stage0_coeffs(model, belief0, w).eval(u0) + value_v1(model, belief0, u0, w, cfg)?)
}

struct R0Evaluator<'a> {
    model: &'a DiscreteModel,
    belief0: &'a GaussianBelief,
    w: &'a Weights,
    stage0: QuadCoeffs,
    ladder: QuadLadder,
    failure: Mutex<Option<Error>>,
}

impl R0Evaluator<'_> {
    fn eval(&self, u0: f64) -> f64 {
        match v1_with(self.model, self.belief0, u0, self.w, &self.ladder) {
            Ok(v) => self.stage0.eval(u0) + v,
            Err(e) => {
                let mut slot = self.failure.lock().unwrap_or_else(|p| p.into_inner());
                slot.get_or_insert(e);
                f64::NAN
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    /// `phi_0*`; the positive branch when the minimizers are a `+-` pair.
    pub control: f64,
    pub minimizers: Vec<Minimum>,
    /// Optimal expected cost `R_0(phi_0*)`.
    pub value: f64,
    /// The minimum lies on the end of the grid; widen the interval.
    pub boundary_warning: bool,
    /// `(u0, R_0(u0))` on the grid.
    pub curve: Vec<(f64, f64)>,
}

/// `phi_0* = argmin_{u0} R_0(u0)`.
pub fn dp_solve(model: &DiscreteModel, belief0: &GaussianBelief, w: &Weights, cfg: &DpConfig) -> Result<DpSolution> {
    cfg.validate()?;
    let ev = R0Evaluator {
        model,
        belief0,
        w,
        stage0: stage0_coeffs(model, belief0, w),
        ladder: QuadLadder::new(cfg.quad_order)?,
        failure: Mutex::new(None),
    };
    let result = grid_minimize(|u| ev.eval(u), &cfg.u0_grid);
    if let Some(e) = ev.failure.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(e);
    }
    let m = result?;
    Ok(DpSolution {
        control: m.positive_branch().x,
        value: m.best().value,
        boundary_warning: m.at_boundary,
        minimizers: m.minimizers,
        curve: m.curve,
    })
}

/// Evaluates `R_0` on an arbitrary set of points (for curve emission).
pub fn r0_curve(model: &DiscreteModel, belief0: &GaussianBelief, w: &Weights, cfg: &DpConfig, u0s: &[f64]) -> Result<Vec<f64>> {
    cfg.validate()?;
    let ladder = QuadLadder::new(cfg.quad_order)?;
    let stage0 = stage0_coeffs(model, belief0, w);
    u0s.iter()
        .map(|&u| Ok(stage0.eval(u) + v1_with(model, belief0, u, w, &ladder)?))
        .collect()
}
