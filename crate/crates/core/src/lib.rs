//! Dual mixture-of-experts discrete-time survival modelling.
//!
//! The crate covers the whole workflow: ingesting and discretizing clinical
//! survival tables, the dual-MoE hazard network and its training objective,
//! a Cox proportional-hazards baseline, censoring-aware concordance metrics,
//! the multi-seed experiment harness, and figure/table exporters.

pub mod autodiff;
pub mod cli;
pub mod container;
pub mod cox;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod report;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
