//! Steady-state diffusion approximations for many-server queues, with
//! Stein-method error checks.

pub mod birth_death;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod models;
pub mod mphn;
pub mod numeric;
pub mod stein;
pub mod tables;
pub mod verify;

pub use error::{Error, Result};
pub use models::{Mode, QueueParams};
