pub mod domain;
pub mod dsl;
pub mod executor;
pub mod harness;
pub mod knowledge;
pub mod orchestrator;
pub mod prompts;
pub mod providers;
pub mod sim;
