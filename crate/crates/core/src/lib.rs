//! Time-constrained model selection from a low-rank model of cross-validated
//! errors.
//!
//! The offline stage cross-validates a grid of models on a corpus of
//! datasets to fill an error matrix and a runtime matrix. A truncated SVD of
//! the error matrix gives latent features for every dataset and model. For a
//! new dataset, a budgeted experiment design picks a few informative, cheap
//! models to run; their errors pin down the dataset's latent features by
//! least squares, which in turn predict the error of every other model.

pub mod corpus;
pub mod error;
pub mod factorization;
pub mod harness;
pub mod learners;
pub mod linalg;
pub mod offline;
pub mod online;
pub mod selection;
pub mod synth;
pub mod tables;

pub use error::{Error, Result};
