//! Two-party secure logistic regression training with function secret
//! sharing in the trusted-dealer model.

pub mod cli;
pub mod dealer;
pub mod error;
pub mod fss;
pub mod lrgate;
pub mod ring;
pub mod sharing;
pub mod sigmoid;
pub mod trainer;
pub mod transport;

pub use error::{Error, Result};
