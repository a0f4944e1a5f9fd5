//! Privacy-preserving federated load forecasting for distribution feeders.
//!
//! A small multilayer perceptron forecasts each node's consumption one step
//! (15 minutes) ahead from lagged readings. It is trained by a synchronous
//! parameter-server protocol in which federates only ever send scaled
//! gradient steps. The forecasts then drive load-swing prediction and a
//! peak-shaving curtailment service.

pub mod config;
pub mod data;
pub mod eval;
pub mod fl;
pub mod grid;
pub mod nn;
pub mod pipeline;
pub mod rng;
