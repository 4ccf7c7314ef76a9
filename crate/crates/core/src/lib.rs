//! Evolutionary feature-interaction selection for forecasting dissolved
//! oxygen in the epilimnion and hypolimnion of lakes.
//!
//! The pipeline has two learning stages. A multi-population evolutionary
//! search trains relevance-gated recurrent predictors on simulated labels and
//! selects, per lake type and task, which pairwise feature interactions (and
//! which operation for each pair) to keep. The surviving models are then
//! refined on the sparse observed labels with the relevance gates frozen.
//!
//! Module map:
//!
//! - [`diffcore`]: tape-based reverse-mode autodiff, LSTM cell, Adam and gRDA.
//! - [`features`]: lake CSV ingestion, bucketization, embeddings, windows.
//! - [`interact`]: the interaction genome, input assembly and gene maps.
//! - [`model`]: the predictor, its losses, training and refinement.
//! - [`evolve`]: populations, mutation, crossover and the generational loop.
//! - [`laketypes`]: balanced k-means typing of lakes into S/M/L/xL.
//! - [`simlake`]: two-layer oxygen simulator and synthetic benchmarks.
//! - [`harness`]: configuration, pipeline orchestration and reporting.

pub mod diffcore;
pub mod error;
pub mod evolve;
pub mod features;
pub mod harness;
pub mod interact;
pub mod laketypes;
pub mod model;
pub mod simlake;

pub use error::{Error, Result};
