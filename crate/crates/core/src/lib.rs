pub mod container;
pub mod decoder;
pub mod error;
pub mod lm;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod train;
pub mod transducer;
pub mod vocab;

pub use error::{Error, Result};
