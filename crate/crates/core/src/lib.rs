//! Masked-autoencoder pretraining for multichannel drilling telemetry:
//! ingestion, drilling-activity segmentation, windowing, a small recurrent
//! network library, two-stage transfer learning and a design-space search.

pub mod batches;
pub mod dse;
pub mod error;
pub mod ingest;
pub mod mae;
pub mod manifest;
pub mod nn;
pub mod rng;
pub mod segmentation;
pub mod synthetic;
pub mod transfer;
pub mod windows;
pub mod workflow;

pub use error::{Error, Result};
