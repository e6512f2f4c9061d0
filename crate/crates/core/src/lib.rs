pub mod checkpoint;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod predict;
pub mod training;

pub use error::{Error, Result};
