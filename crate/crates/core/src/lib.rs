//! Action-consistency verification and enforcement for two-robot
//! decentralized belief-space planning under intermittent communication.

pub mod belief;
pub mod cli;
pub mod config;
pub mod enforce;
pub mod error;
pub mod estimators;
pub mod planning;
pub mod relaxed;
pub mod scenario;
pub mod sim;
pub mod simp;
pub mod verify;

pub use error::{Error, Result};
