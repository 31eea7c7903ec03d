pub mod analysis;
pub mod core1d;
pub mod error;
pub mod model;
pub mod oracle;
pub mod radial2d;

pub use error::{Error, Result};
