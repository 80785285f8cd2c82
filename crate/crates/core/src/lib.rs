//! Iterative charted refinement (ICR) for Gaussian processes.
//!
//! ICR applies an approximate square root of a kernel matrix in linear time by
//! modelling the process on a hierarchy of grids. A dense factor correlates the
//! coarsest grid; every refinement step then conditions a few fine pixels on a
//! small window of coarse pixels (`s_f = R s_c + sqrt(D) xi`). A coordinate
//! chart maps the regular Euclidean grids onto the modelled locations, so the
//! same machinery covers unevenly spaced points.
//!
//! The crate is `no_std` and only needs an allocator. File formats, the CLI,
//! the KISS-GP baseline and threading live in the `icr` companion crate.
//!
//! ```
//! use icr_core::{Chart, IcrModel, Kernel, RefinementSpec};
//!
//! let kernel = Kernel::matern32(1.0).unwrap();
//! let spec = RefinementSpec::new(12, 2, 3, 2).unwrap();
//! let model = IcrModel::build(kernel, Chart::Identity.into(), &spec).unwrap();
//! assert_eq!(model.size(), 36);
//! let s = model.sample(7);
//! assert_eq!(s.len(), 36);
//! ```
#![no_std]

extern crate alloc;

pub mod charts;
pub mod error;
pub mod exactgp;
pub mod generate;
pub mod kernels;
mod linalg;
pub mod refine;

pub use charts::{
    build_hierarchy, charted_kernel, log_chart_for_experiment, Chart, ChartSpec, ChartedKernel,
    GridHierarchy,
};
pub use error::{Error, Result};
pub use exactgp::{
    compare_covariances, exact_log_prob, exact_sample, implicit_covariance,
    select_refinement_params, true_covariance, CandidateReport, CovarianceComparison, ExactFactor,
    LogProb, Selection, DENSE_LIMIT,
};
pub use generate::{
    inverse_transform, predicted_cost, standard_normal_cdf, ApplyBuffers, IcrModel, LatentLayout, LatentVector,
};
pub use kernels::{Kernel, KernelFamily};
pub use refine::{
    matrices_for_level, refinement_matrices, LevelMatrices, RefinementMatrices, RefinementSpec,
    SizePolicy, PRESETS,
};

/// Dense matrix type used throughout the public API.
pub type Matrix = nalgebra::DMatrix<f64>;
