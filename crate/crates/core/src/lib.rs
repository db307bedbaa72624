//! Truncated mean estimators with non-asymptotic confidence intervals.
//!
//! The crate covers the one-shot smooth and clipped truncated means, the
//! iterated jitter-and-truncate schemes under a variance prior, the
//! root-defined last-step refinement, the alternating mean/variance scheme
//! under a uniform kurtosis prior, Lepski-type adaptation to an unknown
//! variance, closed-form comparison bounds, and a seeded Monte Carlo harness
//! built around the worst-case distributions of the lower bounds.
//!
//! ```
//! use truncmean::{tuned_width, truncated_mean, Sample, TruncationKind};
//!
//! let sample = Sample::new(vec![0.3, -1.2, 0.8, 2.1, -0.4]).unwrap();
//! let (alpha, half_width) = tuned_width(sample.len(), 1.0, 0.0, 0.05).unwrap();
//! let point = truncated_mean(&sample, 0.0, alpha, TruncationKind::Smooth).unwrap();
//! assert!(point.abs() < 1.0 && half_width > 0.0);
//! ```

// Guards written as `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod iterated;
pub mod jitter;
pub mod kurtosis;
pub mod last_step;
pub mod lepski;
pub mod simulation;
pub mod special;
pub mod truncated;

pub use error::{Error, Result};
pub use jitter::{JitterSource, JitterStream};
pub use special::TruncationKind;
pub use truncated::{
    clipped_width, one_shot_width, one_shot_width_with, truncated_mean, tuned_width, AlphaPolicy,
    ConfidenceEstimate, EstimateMetadata, PriorBounds, Sample,
};
