//! Curation engine for a crowd-steered generative radio.
//!
//! Songs are generated from (prime, artist, genre) prompts. A ridge model
//! fitted to listener ratings steers which prompts get generated next, and a
//! distance-weighted recommender picks what each listener hears.

pub mod analytics;
pub mod catalog;
pub mod domain;
pub mod error;
pub mod generator;
pub mod queue;
pub mod recommender;
pub mod registry;
pub mod scheduler;
pub mod store;

pub use error::{Error, Result};
