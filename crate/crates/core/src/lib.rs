pub mod block_decomp;
pub mod error;
pub mod geometry;
pub mod global_dm;
pub mod harmonics;
pub mod kernels;
pub mod linalg;
pub mod local_dm;
pub mod spectra;
pub mod dynamics;

pub use error::{Error, Result};
