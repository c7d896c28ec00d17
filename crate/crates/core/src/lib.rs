//! Deterministic desk-scale laboratory for multi-task and multi-view
//! self-supervised training over configurable image view sets.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod net;
pub mod train;
pub mod views;

pub use error::{Error, Result};
