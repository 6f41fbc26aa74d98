pub mod assembly;
pub mod corpus;
mod digest;
pub mod error;
pub mod evaluation;
pub mod export;
pub mod llm;
pub mod pipeline;
pub mod retrieval;
pub mod synthesis;

pub use error::{Error, Result};
