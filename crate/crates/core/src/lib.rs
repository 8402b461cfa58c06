pub mod analysis;
pub mod data;
pub mod error;
pub mod model;
pub mod numcore;
pub mod retrieval;
pub mod train;

pub use error::{Result, VgsError};
