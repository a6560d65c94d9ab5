//! Early classification of multichannel time series with a reject option.

pub mod cascade;
pub mod datagen;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod learners;
pub mod reject;
pub mod signal;
pub mod util;

pub use error::{Error, Result};
