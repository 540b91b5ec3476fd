//! Multiproxy hemispheric temperature reconstruction.
//!
//! The crate covers the full chain from a proxy network to verified
//! reconstructions:
//!
//! - [`timeseries`]: annual series, anomalies, decadal blocks, band splitting
//!   and loess smoothing.
//! - [`proxy`]: proxy network ingestion and quality screening.
//! - [`recon`]: principal-component regression, Lasso and regularized EM
//!   (plain and two-band hybrid).
//! - [`uncertainty`]: conjugate-posterior coefficient ensembles and
//!   warmest-decade probabilities.
//! - [`pseudoproxy`]: synthetic truth fields, red-noise pseudoproxies and the
//!   method benchmark.
//! - [`skill`]: RE/CE verification statistics and hold-out validation.

mod linalg;
pub mod matrix;
pub mod proxy;
pub mod pseudoproxy;
pub mod recon;
pub mod seed;
pub mod skill;
pub mod timeseries;
pub mod uncertainty;

pub use matrix::YearMatrix;
pub use timeseries::TimeSeries;

/// Default instrumental calibration interval.
pub const DEFAULT_CALIBRATION: (i32, i32) = (1856, 1980);
