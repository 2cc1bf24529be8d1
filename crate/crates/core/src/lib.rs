pub mod error;
pub mod env;
pub mod episodes;
pub mod harness;
pub mod learners;
pub mod nets;
pub mod nn;
pub mod oracle;

pub use error::{Error, Result};
