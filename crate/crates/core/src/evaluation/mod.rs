//! Metrics, certainty-stratified reporting, and text table rendering.

pub mod metrics;
pub mod report;
pub mod text;
