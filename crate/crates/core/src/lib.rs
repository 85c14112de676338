pub mod balance;
pub mod criteria;
pub mod error;
pub mod harness;
pub mod inference;
pub mod sampler;
pub mod theory;

mod ser;

pub use error::{Error, Result};
