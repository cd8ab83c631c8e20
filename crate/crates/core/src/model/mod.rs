//! The residual prediction network and every comparison layout.
//!
//! Observed poses are padded by repeating the last one, lifted to `C`
//! channels by an encode unit, refined by residual blocks and mapped back by
//! a zero-initialised decode unit whose output is added to the padded input.
//! An untrained model therefore predicts zero velocity.

pub mod checkpoint;
mod config;
mod count;
mod network;
mod unit;

pub use config::{ModelConfig, Variant};
pub use count::{count_params, dynamic_layer_params, expected_params, unit_params, ParamCount};
pub use network::{build_unit, Model, NamedUnit};
pub use unit::{GcUnit, Init, Stage};

#[cfg(test)]
mod tests;
