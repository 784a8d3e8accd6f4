//! Multi-user MIMO visible-light downlink with an optical reconfigurable
//! intelligent surface (ORIS): channel model, SINR metrics, element
//! alignment, constrained precoder design, and a Monte-Carlo harness.

pub mod alignment;
pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod metrics;
pub mod optimizer;
pub mod precoding;
pub mod validate;

pub use alignment::{exhaustive_alignment, greedy_alignment, AlignmentMatrix, ElementScoring};
pub use channel::{build_channels, ChannelSet, OpticalParams};
pub use error::{Error, Result};
pub use experiment::{monte_carlo, run_trial, ExperimentConfig, SinrReport};
pub use geometry::{Scene, Vec3};
pub use metrics::SinrVector;
pub use optimizer::{alternate, run_method, AlternationConfig, MethodId};
pub use precoding::{optimize_precoder, AscentConfig, PrecodingMatrix};
