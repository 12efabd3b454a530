//! Batch layer: moment caching, sweeps, fits, figure pipelines and file formats.

pub mod cache;
pub mod figures;
pub mod fit;
pub mod io;
pub mod svg;
pub mod sweep;

pub use cache::{content_hash, MomentCache, MomentSource, DM_ATOM_CAP};
pub use figures::{reproduce_figure, FigureContext, FigureOverrides, FIGURE_IDS};
pub use fit::{fit_gaussian, fit_gaussian_points, fit_power_law, moment_width, GaussianFit, PowerLawFit};
pub use sweep::{
    default_f_grid, phase_boundary, scaling, sweep_f, sweep_phase_diagram, BoundaryPoint, Method, ScalingResult,
    SweepFOptions, SweepFResult, SweepResult, SweepRow,
};
