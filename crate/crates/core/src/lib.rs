//! Spike sorting by joint trace-ratio optimization of a linear projection and
//! a hard partition, with the surrounding filtering, detection, extraction,
//! cluster-count estimation and evaluation pipeline.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod io;
pub mod model;
pub mod numerics;
pub mod signal;
pub mod solver;

pub use error::{Error, Result};
pub use estimator::{auto_sort, estimate_c, EstimateOptions, EstimationReport, IndexKind};
pub use evaluation::{accuracy, fpr_fnr, DetectionScore, TrialStats};
pub use model::{Objective, Partition, Projection};
pub use numerics::{Ridge, SymMatrix};
pub use signal::{SpikeMatrix, Trace};
pub use solver::{fit, sequential_baseline, SolverOptions, SortResult};
