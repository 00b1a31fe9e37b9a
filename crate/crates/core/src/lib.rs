//! Superpixel scene parsing.
//!
//! The model has three layers. A visual layer trains one-vs-all logistic
//! classifiers on a genetic-algorithm-selected subset of hand-crafted
//! superpixel features. A context layer learns neighbour and block
//! co-occurrence priors from training labels and turns the visual argmax of
//! each superpixel into votes for the others. An integration layer (a
//! single-hidden-layer MLP) fuses the three probability vectors into the final
//! label.
//!
//! [`pipeline`] wires the stages together; the `sceneparse` binary exposes them
//! as `synth`, `select-features`, `train`, `predict` and `eval` subcommands.

// `!(x > 0.0)` is how validation rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod config;
pub mod context;
mod error;
pub mod features;
pub mod gasel;
pub mod imagedata;
pub mod integrate;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod seeds;
pub mod superpix;
pub mod visual;

pub use error::{Error, Result};

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
