pub mod basis;
pub mod channels;
pub mod error;
pub mod ite;
pub mod linalg;
pub mod qpd;
pub mod sampler;
pub mod tpq;

pub use error::{Error, Result};
