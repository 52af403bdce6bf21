//! Gesture-instructed object-goal navigation.

pub mod config;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod gesture;
pub mod manifest;
pub mod policy;
pub mod ppo;
pub mod scene;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
