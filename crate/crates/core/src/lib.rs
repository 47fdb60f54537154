//! Knowledge-graph grounded recipe recommendation engine.

pub mod corpus;
pub mod kg;
pub mod query;
pub mod matcher;
pub mod llm;
pub mod config;
pub mod session;
pub mod engine;
