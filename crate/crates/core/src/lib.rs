//! Screening of cluster-relevant features in spatial count matrices.
//!
//! The pipeline ranks every feature of a spots-by-genes count matrix by a
//! quasi-likelihood ratio statistic that borrows strength from auxiliary
//! spatial distances, selects features at a target false discovery rate
//! with a resampling knockoff filter, and clusters spots on the principal
//! components of the selected features. A synthetic data generator and
//! screening/clustering metrics support end-to-end evaluation.

pub mod cli;
pub mod error;
pub mod io;
pub mod knockoff;
pub mod mmtest;
pub mod neighborhood;
pub mod pipeline;
pub mod postcluster;
pub mod qlik;
pub mod rng;
pub mod simgen;

pub use error::{Error, Result};
