//! Divide a Fortran codebase into testable units, order them by dependency
//! and drive a test-verified translation loop.

pub mod corpus;
pub mod fortran;
pub mod graph;
pub mod harness;
pub mod llm;
pub mod oracle;
pub mod orchestrator;
pub mod prompt;
pub mod session;
pub mod transpile;
pub mod verify;
