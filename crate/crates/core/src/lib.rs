//! Information based stochastic control.
//!
//! Open-loop optimization augmented with a mutual-information penalty,
//! together with the machinery needed to evaluate it and to check it
//! against exact solutions:
//!
//! - [`lingauss`]: bilinear-in-control linear-Gaussian models, exact
//!   zero-order-hold discretization and the Kalman filter.
//! - [`ibc_analytic`]: closed-form two-step information based control for
//!   the bilinear model (the `Psi` surface and the second-step control).
//! - [`dp_oracle`]: the exact two-step dynamic-programming solution of the
//!   same problem, used as ground truth.
//! - [`example1`]: the integrator with unknown gain sign.
//! - [`bounds`]: information-theoretic cost bounds on the scalar
//!   estimation/control example.
//! - [`mc_ibc`]: Monte-Carlo/KDE estimators and the receding-horizon
//!   planner for general plants.
//! - [`optim`]: deterministic grid + golden-section minimization and
//!   penalty-weight tuning.

pub mod bounds;
pub mod dp_oracle;
pub mod error;
pub mod example1;
pub mod ibc_analytic;
pub mod linalg;
pub mod lingauss;
pub mod mc_ibc;
pub mod optim;
pub mod quadrature;

pub use error::{Error, Result};
