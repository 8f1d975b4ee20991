//! Depth encodings, RGB-D detector architecture audits and detection
//! evaluation for two-stage detectors fed with estimated or sensor depth.

pub mod analysis;
pub mod architecture;
pub mod depth_encoding;
pub mod detection_eval;
pub mod error;
pub mod netpbm;

pub use error::{Error, Result};
