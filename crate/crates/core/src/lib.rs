//! Pilots-to-delay CSI estimation, unrolled ISTA feedback compression and
//! differential temporal encoding for massive MIMO.

pub mod channel;
pub mod checkpoint;
pub mod codec;
pub mod cs;
pub mod diffchain;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod p2d;
pub mod pilots;
pub mod training;

pub use error::{Error, Result};
pub use numerics::ComplexMatrix;
