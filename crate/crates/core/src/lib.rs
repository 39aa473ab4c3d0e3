pub mod config;
pub mod error;
pub mod harness;
pub mod mixture;
pub mod ode;
pub mod schedule;
pub mod special;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
