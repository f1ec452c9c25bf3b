//! Filter verification tools: an exact grid-filter oracle, L2 error
//! surfaces over the two particle counts, convergence-rate regressions,
//! paired accuracy comparisons, and spectral utilities.

pub mod battery;
pub mod grid;
pub mod psd;
pub mod regression;
pub mod rmse;
pub mod stats;
pub mod surface;

pub use battery::{l2_error, ScalarBattery};
pub use grid::{GridFilter, GridMarginal, GridModel, GridSpec, GridStepCache, GridStepSummary};
pub use psd::{periodogram, Periodogram};
pub use regression::{rate_regression, RateFit};
pub use rmse::{rmse_comparison, RmseComparison, RmseConfig, SignalRmse};
pub use stats::{bootstrap_mean_ci, chi_square_gof, ChiSquareTest};
pub use surface::{compute_error_surface, surface_cell, ErrorSurface, SurfaceAxis, SurfaceCell, SurfaceConfig};
