//! Reparameterizations between constrained (natural) and unconstrained space.
//!
//! Optimizers and samplers work on unconstrained coordinates z; each
//! hyperparameter declares how its natural value maps to z. Gradients of any
//! objective in natural space are chain-ruled with `dnatural_dz`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Transform {
    /// natural = exp(z); for strictly positive scales and amplitudes.
    Log,
    /// natural = offset + exp(z); for parameters bounded below (nu > 1).
    LogShifted { offset: f64 },
    /// natural = lo + (hi - lo) * sigmoid(z); for interval-bounded parameters.
    Logit { lo: f64, hi: f64 },
    Identity,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Transform {
    pub fn to_natural(&self, z: f64) -> f64 {
        match *self {
            Transform::Log => z.exp(),
            Transform::LogShifted { offset } => offset + z.exp(),
            Transform::Logit { lo, hi } => lo + (hi - lo) * sigmoid(z),
            Transform::Identity => z,
        }
    }

    pub fn to_unconstrained(&self, natural: f64) -> f64 {
        match *self {
            Transform::Log => natural.ln(),
            Transform::LogShifted { offset } => (natural - offset).ln(),
            Transform::Logit { lo, hi } => {
                let p = (natural - lo) / (hi - lo);
                (p / (1.0 - p)).ln()
            }
            Transform::Identity => natural,
        }
    }

    /// d(natural)/dz evaluated at z; multiply a natural-space gradient by this
    /// to get the unconstrained gradient.
    pub fn dnatural_dz(&self, z: f64) -> f64 {
        match *self {
            Transform::Log => z.exp(),
            Transform::LogShifted { .. } => z.exp(),
            Transform::Logit { lo, hi } => {
                let s = sigmoid(z);
                (hi - lo) * s * (1.0 - s)
            }
            Transform::Identity => 1.0,
        }
    }
}
