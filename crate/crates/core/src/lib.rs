//! Relation-aware sequential recommendation with latent relation discovery.

pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod io;
pub mod evaluation;
pub mod model;
pub mod objective;
pub mod tensor;
pub mod textembed;
pub mod trainer;

pub use error::{Error, Result};
