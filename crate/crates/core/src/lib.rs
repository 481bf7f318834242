//! Self-consistency evaluation for language-model explanations.

pub mod analysis;
pub mod behavioral;
pub mod ccshap;
pub mod cli;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod seed;
pub mod shapley;
pub mod types;
pub mod verify;

pub use error::{Error, Result};
