//! Cross-lingual document retrieval over aligned embedding spaces.

pub mod corpus;
pub mod eval;
pub mod experiment;
pub mod linalg;
pub mod mappers;
pub mod nn;
pub mod rng;
pub mod store;
