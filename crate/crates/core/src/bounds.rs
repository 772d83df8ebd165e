//! Information-theoretic lower bounds on the scalar estimation problem.
//!
//! `x ~ N(0, s_x)`, `y = x + v` with `v ~ N(0, s_v)`, control `u = k y` and
//! cost `J = E[(x + u)^2]`. The open-loop cost is `J_o = s_x` and the
//! optimal gain `k* = -s_x / (s_x + s_v)`.

use std::f64::consts::{E, PI};

use crate::error::{Error, Result};

/// Slack below which an inequality still counts as satisfied.
pub const SLACK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarChannel {
    pub s_x: f64,
    pub s_v: f64,
}

impl ScalarChannel {
    pub fn new(s_x: f64, s_v: f64) -> Result<Self> {
        if !(s_x > 0.0 && s_x.is_finite()) || !(s_v > 0.0 && s_v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "variances must be positive and finite, got s_x={s_x}, s_v={s_v}"
            )));
        }
        Ok(Self { s_x, s_v })
    }

    /// `J_o = E[x^2]`.
    pub fn open_loop_cost(&self) -> f64 {
        self.s_x
    }

    /// Differential entropy of the open-loop terminal state.
    pub fn open_loop_entropy(&self) -> f64 {
        gaussian_entropy(self.s_x)
    }

    pub fn optimal_gain(&self) -> LinearGain {
        LinearGain(-self.s_x / (self.s_x + self.s_v))
    }

    /// `I(x; y) = 1/2 ln(1 + s_x / s_v)`.
    pub fn mi_observation(&self) -> f64 {
        0.5 * (self.s_x / self.s_v).ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGain(pub f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs - rhs`.
    pub slack: f64,
    /// `slack >= -SLACK_TOL`.
    pub holds: bool,
}

impl BoundReport {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        let slack = lhs - rhs;
        Self {
            lhs,
            rhs,
            slack,
            holds: slack >= -SLACK_TOL,
        }
    }
}

pub fn gaussian_entropy(var: f64) -> f64 {
    0.5 * (2.0 * PI * E * var).ln()
}

/// `J(k) = (1 + k)^2 s_x + k^2 s_v`.
pub fn closed_loop_cost(ch: &ScalarChannel, g: LinearGain) -> f64 {
    let k = g.0;
    (1.0 + k).powi(2) * ch.s_x + k * k * ch.s_v
}

/// `I(x; u)` for `u = k y`; zero when `k = 0`.
pub fn mi_linear_gain(ch: &ScalarChannel, g: LinearGain) -> f64 {
    if g.0 == 0.0 {
        0.0
    } else {
        ch.mi_observation()
    }
}

/// Entropy of the closed-loop state `x + k y`.
pub fn closed_loop_entropy(ch: &ScalarChannel, g: LinearGain) -> f64 {
    gaussian_entropy(closed_loop_cost(ch, g))
}

/// `c n / (2 pi e) exp(2 (H_o - I) / n)`: the lower bound on a cost that
/// dominates `c E|x|^2` for an `n`-dimensional state.
pub fn entropy_cost_bound(c: f64, n: usize, h_open: f64, info: f64) -> f64 {
    let n = n as f64;
    c * n / (2.0 * PI * E) * (2.0 * (h_open - info) / n).exp()
}

/// `J(k) >= J_o exp(-2 I(x; u))`, computed through the entropy bound.
pub fn check_theorem2(ch: &ScalarChannel, g: LinearGain) -> BoundReport {
    let bound = entropy_cost_bound(1.0, 1, ch.open_loop_entropy(), mi_linear_gain(ch, g));
    BoundReport::new(closed_loop_cost(ch, g), bound)
}

/// The bound at the optimal gain; `slack` is zero up to roundoff.
pub fn check_tightness(ch: &ScalarChannel) -> BoundReport {
    check_theorem2(ch, ch.optimal_gain())
}

/// `H_o - H(phi*)` against `I(x; u(phi*))`; the two are equal.
pub fn entropy_identity(ch: &ScalarChannel) -> BoundReport {
    let g = ch.optimal_gain();
    BoundReport::new(ch.open_loop_entropy() - closed_loop_entropy(ch, g), mi_linear_gain(ch, g))
}

/// `I(x; y) >= I(x; u)`.
pub fn check_data_processing(ch: &ScalarChannel, g: LinearGain) -> BoundReport {
    BoundReport::new(ch.mi_observation(), mi_linear_gain(ch, g))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSweepRow {
    pub k: f64,
    pub cost: f64,
    pub info: f64,
    pub bound: f64,
    pub slack: f64,
}

pub fn sweep_gains(ch: &ScalarChannel, gains: &[f64]) -> Vec<GainSweepRow> {
    gains
        .iter()
        .map(|&k| {
            let g = LinearGain(k);
            let r = check_theorem2(ch, g);
            GainSweepRow {
                k,
                cost: r.lhs,
                info: mi_linear_gain(ch, g),
                bound: r.rhs,
                slack: r.slack,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tight_at_optimal_gain() {
        let ch = ScalarChannel::new(1.0, 1.0).unwrap();
        let r = check_tightness(&ch);
        assert!((r.lhs - 0.5).abs() < 1e-15);
        assert!(r.slack.abs() < 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn optimal_gain_minimizes_cost() {
        let ch = ScalarChannel::new(2.0, 0.5).unwrap();
        let k = ch.optimal_gain().0;
        let j = closed_loop_cost(&ch, LinearGain(k));
        assert!((j - 2.0 * 0.5 / 2.5).abs() < 1e-14);
        for dk in [-1e-3, 1e-3] {
            assert!(closed_loop_cost(&ch, LinearGain(k + dk)) > j);
        }
    }

    #[test]
    fn zero_gain_has_no_information() {
        let ch = ScalarChannel::new(1.0, 1.0).unwrap();
        let r = check_theorem2(&ch, LinearGain(0.0));
        assert_eq!(r.slack.abs() < 1e-12, true);
        assert_eq!(mi_linear_gain(&ch, LinearGain(0.0)), 0.0);
    }

    #[test]
    fn entropy_identity_is_exact() {
        for (sx, sv) in [(1.0, 1.0), (3.0, 0.1), (0.2, 5.0)] {
            let r = entropy_identity(&ScalarChannel::new(sx, sv).unwrap());
            assert!(r.slack.abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_variances() {
        assert!(ScalarChannel::new(0.0, 1.0).is_err());
        assert!(ScalarChannel::new(1.0, -1.0).is_err());
    }
}
