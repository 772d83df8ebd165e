#![allow(dead_code)]

use ibc_core::ibc_analytic::Weights;
use ibc_core::lingauss::{discretize, ContinuousModel, DiscreteModel, GaussianBelief};
use nalgebra::{DMatrix, DVector};

pub fn example_model() -> DiscreteModel {
    let s = 2f64.sqrt();
    discretize(&ContinuousModel::drifting_gain(1.0, 1.0, s, s, 0.01), 0.1).unwrap()
}

pub fn belief(m: [f64; 2], s: [f64; 2]) -> GaussianBelief {
    GaussianBelief::new(DVector::from_vec(m.to_vec()), DMatrix::from_diagonal(&DVector::from_vec(s.to_vec())))
}

/// `(m0, S0)` of the drifting-gain example read as the filtered belief.
pub fn example_belief() -> GaussianBelief {
    belief([0.0, 0.0], [5.0, 0.1])
}

pub fn weights() -> Weights {
    Weights::drifting_gain_example()
}
