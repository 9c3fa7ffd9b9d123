//! Synthetic domain-corpus generation with a meta-prompting agent loop.

pub mod contamination;
pub mod corpus;
pub mod docsynth;
pub mod engine;
pub mod gateway;
pub mod instruct;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod seeds;
pub mod text;
pub mod vector;
