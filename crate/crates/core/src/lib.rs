//! AirScript: reconstructing and recognizing digits written in the air with an
//! arm-worn inertial sensor.
//!
//! The crate is organized bottom-up:
//!
//! - [`quatmath`]: quaternion algebra used for frame rotation.
//! - [`difviz`]: converts gyroscope/orientation streams into an integer pixel
//!   trajectory and renders it as SVG or a grayscale raster.
//! - [`pipeline`]: the two preprocessing chains feeding the recurrent classifiers.
//! - [`neuralnet`]: a small tensor stack, the bidirectional GRU and CNN
//!   classifiers, Adam training and checkpoints.
//! - [`fusion`]: Borda-count fusion of ranked predictions.
//! - [`synthgen`]: synthetic recordings used for tests and benchmarks.
//! - [`datastore`]: the recording model, JSONL storage and split strategies.
//! - [`evalharness`]: person-dependent and person-independent protocols.
//! - [`cli`]: the `airscript` command-line entry point.

pub mod cli;
pub mod datastore;
pub mod difviz;
pub mod error;
pub mod evalharness;
pub mod fusion;
pub mod neuralnet;
pub mod pipeline;
pub mod quatmath;
pub mod synthgen;

pub use error::{Error, Result};

/// Number of digit classes.
pub const NUM_CLASSES: usize = 10;
