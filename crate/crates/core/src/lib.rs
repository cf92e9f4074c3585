pub mod agents;
pub mod cli;
pub mod digest;
pub mod engine;
pub mod harness;
pub mod pipeline;
pub mod safeguards;
pub mod service;
