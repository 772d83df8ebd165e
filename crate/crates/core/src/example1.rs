//! Integrator with unknown gain sign.
//!
//! `x_{k+1} = x_k + theta u_k`, `y_k = x_k` (noiseless), `x_0 = 1`, with
//! `theta in {-1, +1}` and `P(theta = -1) = p`. The objective is
//! `E[x_2^2] - I(theta; y_1)` over two steps.
//!
//! Any nonzero `u0` reveals `theta` exactly, so the information term is the
//! binary entropy of the prior and the first-step control is not unique.
//! This module fixes `u0 = 1` when a single representative is needed.

use crate::error::{Error, Result};

pub const X0: f64 = 1.0;

/// Representative first control; every nonzero value is optimal.
pub const U0_CONVENTION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gain {
    Minus,
    Plus,
}

impl Gain {
    pub fn value(self) -> f64 {
        match self {
            Gain::Minus => -1.0,
            Gain::Plus => 1.0,
        }
    }
}

/// Prior over the gain sign: `p = P(theta = -1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPrior {
    p: f64,
}

impl ThetaPrior {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("P(theta = -1) must lie in [0, 1], got {p}")));
        }
        Ok(Self { p })
    }

    pub fn p_minus(&self) -> f64 {
        self.p
    }

    /// `E[theta] = 1 - 2p`.
    pub fn mean(&self) -> f64 {
        1.0 - 2.0 * self.p
    }
}

/// Binary entropy in nats, `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// `I(theta; y_1)` after applying `u0`.
pub fn mi_theta(u0: f64, prior: &ThetaPrior) -> f64 {
    if u0 == 0.0 {
        0.0
    } else {
        binary_entropy(prior.p)
    }
}

/// Expected terminal cost `E[x_2^2]` of the open-loop pair `(u0, u1)`.
pub fn expected_terminal_cost(u0: f64, u1: f64, prior: &ThetaPrior) -> f64 {
    let s = u0 + u1;
    s * s + 2.0 * prior.mean() * s + 1.0
}

/// Two-step objective `E[x_2^2] - I(theta; y_1)`.
pub fn ibc_cost1(u0: f64, u1: f64, prior: &ThetaPrior) -> f64 {
    expected_terminal_cost(u0, u1, prior) - mi_theta(u0, prior)
}

/// Minimum of [`ibc_cost1`]: `1 - (1 - 2p)^2 - H_b(p)`.
pub fn ibc_min_cost1(prior: &ThetaPrior) -> f64 {
    1.0 - prior.mean().powi(2) - binary_entropy(prior.p)
}

/// First step: the representative `u0` and the planned `u1 = 2p - 1 - u0`.
pub fn ibc_step1_ex1(prior: &ThetaPrior) -> (f64, f64) {
    (U0_CONVENTION, -prior.mean() - U0_CONVENTION)
}

/// Second step after observing `y1`: `u1 = u0 y1 / (1 - y1)`.
///
/// Equivalent to `-x_1 / theta` with `theta = (y1 - 1) / u0`.
pub fn ibc_step2_ex1(u0: f64, y1: f64) -> Result<f64> {
    if u0 == 0.0 || y1 == X0 {
        return Err(Error::NoInformation);
    }
    Ok(u0 * y1 / (1.0 - y1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ex1State {
    pub x: f64,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ex1Outcome {
    pub states: [Ex1State; 3],
    pub controls: [f64; 2],
    pub cost: f64,
}

/// Closed-loop run against a fixed true gain.
pub fn simulate_ex1(theta: Gain, u0: f64) -> Result<Ex1Outcome> {
    let x1 = X0 + theta.value() * u0;
    let u1 = ibc_step2_ex1(u0, x1)?;
    let x2 = x1 + theta.value() * u1;
    Ok(Ex1Outcome {
        states: [
            Ex1State { x: X0, step: 0 },
            Ex1State { x: x1, step: 1 },
            Ex1State { x: x2, step: 2 },
        ],
        controls: [u0, u1],
        cost: x2 * x2,
    })
}

/// Prior-averaged closed-loop cost of the IBC policy.
pub fn closed_loop_expected_cost(prior: &ThetaPrior, u0: f64) -> Result<f64> {
    let minus = simulate_ex1(Gain::Minus, u0)?.cost;
    let plus = simulate_ex1(Gain::Plus, u0)?.cost;
    Ok(prior.p * minus + (1.0 - prior.p) * plus)
}

/// Best open-loop (certainty-free) cost `1 - (1 - 2p)^2`.
pub fn open_loop_min_cost(prior: &ThetaPrior) -> f64 {
    1.0 - prior.mean().powi(2)
}
