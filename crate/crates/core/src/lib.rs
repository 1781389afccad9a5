//! Pass-destination prediction for football tracking data.
//!
//! The crate is organised bottom-up: a small tape-based autodiff tensor
//! library (`tensor`), pitch discretization (`zones`), tracking/event
//! ingestion and synthetic data (`data`), canonical and query-sparse
//! attention (`attention`), the encoder model with dual-axis heads
//! (`model`), and training/evaluation plus counterfactual analysis
//! (`harness`).

pub mod attention;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod tensor;
pub mod zones;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
pub use zones::{GridScheme, ZoneGrid, ZoneLabel};
