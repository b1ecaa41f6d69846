//! Spatial econometrics for municipal panel data.
//!
//! `regiostat` covers the measurement chain used to study how regional
//! digital activity, specialized knowledge and growth relate across a set of
//! contiguous municipalities:
//!
//! - [`panel`]: long-format panel ingest, descriptive statistics, z-score
//!   standardization per indicator-year cross-section, percentile classes.
//! - [`normality`]: Shapiro-Wilk (Royston) and Ryan-Joiner tests.
//! - [`weights`]: queen/rook contiguity from polygons, row standardization,
//!   connectivity summaries and the GAL neighbor file format.
//! - [`autocorr`]: global Moran's I, local (LISA) and bivariate local Moran
//!   with permutation inference, quadrants and significance classes.
//! - [`pls`]: reflective PLS path modeling with reliability, validity,
//!   collinearity, bootstrap and blindfolding diagnostics.
//! - [`growth`]: Cobb-Douglas evaluation/fitting and group-wise simple OLS.
//! - [`report`]: the batch driver behind the `regiostat` binary.
//!
//! All randomized procedures take an explicit seed and are reproducible
//! bit-for-bit regardless of the number of worker threads.
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

pub mod autocorr;
pub mod growth;
pub mod normality;
pub mod panel;
pub mod pls;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synthetic;
pub mod weights;

pub use autocorr::{LisaResult, MoranGlobal, Quadrant, Significance};
pub use growth::{CobbDouglasMode, RegressionReport};
pub use normality::NormalityResult;
pub use panel::{DescriptiveStats, PanelDataset, RegionId};
pub use pls::{PathEstimates, PathModel};
pub use weights::{ConnectivitySummary, SpatialWeights};
