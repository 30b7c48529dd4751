//! Data-driven hearing-aid fitting.
//!
//! A degraded speech signal is amplified by a six-band linear hearing-aid
//! processor, passed through a differentiable hearing loss simulator and
//! compared with the clean signal heard through a normal-hearing simulator.
//! The insertion gains are then tuned by gradient descent on that loss.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod ha_processor;
pub mod hearing_loss;
pub mod noise_suppression;
pub mod objective;
pub mod optimizer;
mod par;
pub mod pipeline;
pub mod prescriptions;
pub mod signal;
pub mod synth;
pub mod tangent;

pub use error::{Error, Result};
