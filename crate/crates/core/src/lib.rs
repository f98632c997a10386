//! Intent discovery for customer-service dialogues.
//!
//! The pipeline extracts candidate intent spans with extractive question
//! answering, filters them for action-object shape, embeds the survivors,
//! clusters them into an intent landscape and scores the result against
//! gold annotations.

pub mod artifacts;
pub mod clustering;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod evaluation;
pub mod extraction;
pub mod http;
pub mod landscape;
pub mod pipeline;
pub mod synth;
pub mod validation;
