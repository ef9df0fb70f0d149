//! Simulation laboratory for noisy discrete gradient descent on 2D
//! landscapes.
//!
//! The crate runs ensembles of descent trajectories from uniformly random
//! starts, bins their endpoints into deep wells, shallow wells and hills of
//! the landscape, and reports how additive Gaussian jitter shifts the odds
//! between deep and shallow minima.
//!
//! * [`landscape`]: the builtin field, study region and zero-line cell grid.
//! * [`exprfield`]: parsed custom fields with dual-number gradients.
//! * [`descent`]: the jittered descent step and trajectory runner.
//! * [`experiment`]: ensembles, statistics and `(τ, ε)` sweeps.
//! * [`report`]: CSV and SVG output.
//! * [`cli`]: the `basinlab` command line.

pub mod cli;
pub mod descent;
pub mod experiment;
pub mod exprfield;
pub mod landscape;
pub mod report;

pub use descent::{DescentParams, RngStream, StopReason, Trajectory};
pub use experiment::{
    run_ensemble, run_sweep, Bin, EnsembleConfig, EnsembleStats, FieldSpec, SweepConfig,
};
pub use exprfield::{parse, Expr, ExprField};
pub use landscape::{build_cell_grid, BuiltinField, CellGrid, Point2, Region, ScalarField};
