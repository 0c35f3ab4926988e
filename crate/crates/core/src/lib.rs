//! Generate conversational test suites for tool-augmented agents and score
//! agents against them.
//!
//! The pipeline runs intent → procedure → API extraction → flowgraph →
//! conversation graph → noise → path sampling → conversation → tests.
//! Each LLM-backed stage renders a template, asks a [`llm::LlmClient`] for a
//! completion, parses it and validates the result; failures are kept as
//! discards rather than errors.

pub mod augment;
pub mod demo;
pub mod dsl;
pub mod eval;
pub mod generators;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod samples;
