pub mod cli;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod report;
pub mod seed;
pub mod selection;
pub mod simulator;
pub mod synthetic;
pub mod tokenizer;

pub use error::{Error, Result};
