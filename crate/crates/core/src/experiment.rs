//! Monte Carlo ensembles of descent trials and `(τ, ε)` sweeps.
//!
//! Each trial `k` owns the random stream `(base_seed, k)`: it first draws its
//! uniform start from that stream and then keeps drawing jitter from it. The
//! outcome list is therefore independent of how many worker threads execute
//! the trials.
//!
//! Endpoints are binned by the cell they land in. `r` is the ratio of
//! shallow-well to deep-well endpoints and `φ` the fraction of all trials
//! that end inside the region; both are computed over all trials.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::descent::{
    run_trajectory, DescentParams, ParamError, RngStream, StopReason, Trajectory,
};
use crate::exprfield::{DomainError, ExprField};
use crate::landscape::{
    build_cell_grid, BuiltinField, CellGrid, CellIndex, CellKind, FieldSample, GridError, Point2,
    Region, ScalarField,
};

/// Two-sided 95% standard normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("field evaluation failed: {0}")]
    Domain(#[from] DomainError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Which landscape to descend.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FieldSpec {
    #[default]
    Builtin,
    Expression(ExprField),
}

impl FieldSpec {
    pub fn cell_grid(&self, region: &Region) -> Result<CellGrid, GridError> {
        match self {
            FieldSpec::Builtin => build_cell_grid(&BuiltinField, region),
            FieldSpec::Expression(e) => e.cell_grid(region),
        }
    }
}

impl ScalarField for FieldSpec {
    fn sample(&self, p: Point2) -> Result<FieldSample, DomainError> {
        match self {
            FieldSpec::Builtin => BuiltinField.sample(p),
            FieldSpec::Expression(e) => e.sample(p),
        }
    }
}

/// How trial starting points are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Initialization {
    /// Uniform over the region, drawn from the trial's own stream.
    #[default]
    Uniform,
    /// Every trial starts at the given point.
    Fixed(Point2),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub field: FieldSpec,
    pub region: Region,
    pub params: DescentParams,
    pub trials: usize,
    pub base_seed: u64,
    pub init: Initialization,
}

impl EnsembleConfig {
    /// Builtin field over the default region with uniform starts.
    pub fn new(params: DescentParams, trials: usize, base_seed: u64) -> Self {
        EnsembleConfig {
            field: FieldSpec::Builtin,
            region: Region::default(),
            params,
            trials,
            base_seed,
            init: Initialization::Uniform,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.params.validate()?;
        if self.trials == 0 {
            return Err(ExperimentError::Config("trials must be at least 1".into()));
        }
        if let Initialization::Fixed(p) = self.init {
            if !p.is_finite() {
                return Err(ExperimentError::Config(format!(
                    "start point {p} is not finite"
                )));
            }
        }
        Ok(())
    }
}

/// Noiseless small-step descent standing in for gradient flow.
pub fn flow_baseline_params() -> DescentParams {
    DescentParams::new(0.001, 0.0, 20_000).with_grad_tol(1e-6)
}

/// Jittered descent with the single-run defaults: `τ = 0.01`, 500 steps.
pub fn jitter_params(eps: f64) -> DescentParams {
    DescentParams::new(0.01, eps, 500)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bin {
    DeepWell,
    ShallowWell,
    Hill,
    NearCritical,
    OutOfRegion,
}

impl Bin {
    pub const ALL: [Bin; 5] = [
        Bin::DeepWell,
        Bin::ShallowWell,
        Bin::Hill,
        Bin::NearCritical,
        Bin::OutOfRegion,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Bin::DeepWell => "deep_well",
            Bin::ShallowWell => "shallow_well",
            Bin::Hill => "hill",
            Bin::NearCritical => "near_critical",
            Bin::OutOfRegion => "out_of_region",
        }
    }
}

impl fmt::Display for Bin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Bin {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Bin::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| format!("unknown bin `{s}`"))
    }
}

impl From<CellKind> for Bin {
    fn from(kind: CellKind) -> Self {
        match kind {
            CellKind::DeepWell => Bin::DeepWell,
            CellKind::ShallowWell => Bin::ShallowWell,
            CellKind::Hill => Bin::Hill,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub trial_index: u64,
    pub start: Point2,
    pub end: Point2,
    pub cell: Option<CellIndex>,
    pub bin: Bin,
    pub steps_taken: usize,
    pub final_grad_norm: f64,
    pub final_value: f64,
}

/// Bins a finished trajectory.
///
/// Escaped trajectories and endpoints outside the region are out of region.
/// An endpoint in a well cell whose value is within the near-critical
/// threshold of zero has stalled on a zero line or saddle plateau rather than
/// settled in the well.
pub fn classify_endpoint(grid: &CellGrid, t: &Trajectory) -> Bin {
    if t.stop_reason == StopReason::Escaped {
        return Bin::OutOfRegion;
    }
    let Some(cell) = grid.cell_of(t.end) else {
        return Bin::OutOfRegion;
    };
    let kind = grid.class(cell).kind;
    if kind.is_well() {
        let threshold = grid.near_critical_threshold();
        if t.final_value.abs() < threshold {
            return Bin::NearCritical;
        }
        // Only reachable for non-separable expression fields, where a well
        // cell may contain points above zero.
        if t.final_value.is_nan() || t.final_value >= 0.0 {
            return Bin::Hill;
        }
    }
    kind.into()
}

/// Approximate 95% interval for `r = n_shallow / n_deep`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioInterval {
    pub lo: f64,
    pub hi: f64,
}

impl RatioInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn overlaps(&self, other: &RatioInterval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("ratio undefined: no trial ended in a deep well")]
pub struct UndefinedRatio;

/// 95% interval for the shallow/deep ratio.
///
/// The counts are treated as independent binomials and the variance of
/// `ln r` is propagated to first order. Without the trial total the binomial
/// factors `(1 - p)` take their upper bound 1, which widens the interval
/// slightly. With no shallow endpoints the interval is one-sided,
/// `[0, -ln(0.05) / n_deep]`.
pub fn confidence_interval(n_shallow: u64, n_deep: u64) -> Result<RatioInterval, UndefinedRatio> {
    if n_deep == 0 {
        return Err(UndefinedRatio);
    }
    let nd = n_deep as f64;
    if n_shallow == 0 {
        return Ok(RatioInterval {
            lo: 0.0,
            hi: -(0.05f64).ln() / nd,
        });
    }
    let ns = n_shallow as f64;
    let r = ns / nd;
    let half = Z_95 * r * (1.0 / ns + 1.0 / nd).sqrt();
    Ok(RatioInterval {
        lo: (r - half).max(0.0),
        hi: r + half,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub trials: u64,
    /// In-region endpoint counts per cell, in the grid's row-major order.
    pub counts: Vec<u64>,
    pub n_deep: u64,
    pub n_shallow: u64,
    pub n_hill: u64,
    pub n_near_critical: u64,
    pub n_out: u64,
    /// `n_shallow / n_deep`; `None` when no trial reached a deep well.
    pub r: Option<f64>,
    /// Fraction of trials ending inside the region.
    pub phi: f64,
    pub r_ci: Option<RatioInterval>,
}

impl EnsembleStats {
    pub fn from_outcomes(grid: &CellGrid, outcomes: &[TrialOutcome]) -> Self {
        let mut counts = vec![0u64; grid.len()];
        let mut by_bin = [0u64; 5];
        for o in outcomes {
            if let Some(cell) = o.cell {
                counts[grid.flat_index(cell)] += 1;
            }
            by_bin[o.bin as usize] += 1;
        }
        let [n_deep, n_shallow, n_hill, n_near_critical, n_out] = by_bin;
        let trials = outcomes.len() as u64;
        EnsembleStats {
            trials,
            counts,
            n_deep,
            n_shallow,
            n_hill,
            n_near_critical,
            n_out,
            r: (n_deep > 0).then(|| n_shallow as f64 / n_deep as f64),
            phi: (trials - n_out) as f64 / trials as f64,
            r_ci: confidence_interval(n_shallow, n_deep).ok(),
        }
    }

    pub fn count(&self, bin: Bin) -> u64 {
        match bin {
            Bin::DeepWell => self.n_deep,
            Bin::ShallowWell => self.n_shallow,
            Bin::Hill => self.n_hill,
            Bin::NearCritical => self.n_near_critical,
            Bin::OutOfRegion => self.n_out,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub grid: CellGrid,
    pub outcomes: Vec<TrialOutcome>,
    pub stats: EnsembleStats,
}

/// Runs `config.trials` independent trials on the current rayon pool.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleRun, ExperimentError> {
    config.validate()?;
    let grid = config.field.cell_grid(&config.region)?;
    let outcomes = (0..config.trials as u64)
        .into_par_iter()
        .map(|k| run_trial(config, &grid, k))
        .collect::<Result<Vec<_>, _>>()?;
    let stats = EnsembleStats::from_outcomes(&grid, &outcomes);
    Ok(EnsembleRun {
        grid,
        outcomes,
        stats,
    })
}

fn run_trial(
    config: &EnsembleConfig,
    grid: &CellGrid,
    k: u64,
) -> Result<TrialOutcome, DomainError> {
    let mut rng = RngStream::new(config.base_seed, k);
    let start = match config.init {
        Initialization::Uniform => {
            let u = rng.uniform();
            let v = rng.uniform();
            config.region.lerp(u, v)
        }
        Initialization::Fixed(p) => p,
    };
    let t = run_trajectory(&config.field, start, &config.params, &mut rng)?;
    let bin = classify_endpoint(grid, &t);
    let cell = match bin {
        Bin::OutOfRegion => None,
        _ => grid.cell_of(t.end),
    };
    Ok(TrialOutcome {
        trial_index: k,
        start,
        end: t.end,
        cell,
        bin,
        steps_taken: t.steps_taken,
        final_grad_norm: t.final_grad_norm,
        final_value: t.final_value,
    })
}

/// `count` evenly spaced noise levels on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for EpsGrid {
    fn default() -> Self {
        EpsGrid {
            min: 0.0,
            max: 0.3,
            count: 31,
        }
    }
}

impl EpsGrid {
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.min],
            n => (0..n)
                .map(|k| {
                    if k == n - 1 {
                        self.max
                    } else {
                        self.min + (self.max - self.min) * k as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub field: FieldSpec,
    pub region: Region,
    pub tau_list: Vec<f64>,
    pub eps_grid: EpsGrid,
    pub trials_per_point: usize,
    pub steps_per_trial: usize,
    pub grad_tol: f64,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            field: FieldSpec::Builtin,
            region: Region::default(),
            tau_list: vec![0.001, 0.01, 0.02, 0.04, 0.06],
            eps_grid: EpsGrid::default(),
            trials_per_point: 500,
            steps_per_trial: 500,
            grad_tol: crate::descent::DEFAULT_GRAD_TOL,
            base_seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.tau_list.is_empty() {
            return Err(ExperimentError::Config("tau list is empty".into()));
        }
        let g = self.eps_grid;
        if g.count == 0 {
            return Err(ExperimentError::Config(
                "eps grid needs at least one point".into(),
            ));
        }
        if !(g.min >= 0.0 && g.max >= g.min && g.max.is_finite()) {
            return Err(ExperimentError::Config(format!(
                "eps grid [{}, {}] must satisfy 0 <= min <= max",
                g.min, g.max
            )));
        }
        if self.trials_per_point == 0 {
            return Err(ExperimentError::Config(
                "trials per point must be at least 1".into(),
            ));
        }
        for &tau in &self.tau_list {
            self.point_params(tau, g.min).validate()?;
        }
        Ok(())
    }

    fn point_params(&self, tau: f64, eps: f64) -> DescentParams {
        DescentParams::new(tau, eps, self.steps_per_trial).with_grad_tol(self.grad_tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub eps: f64,
    pub steps: usize,
    pub stats: EnsembleStats,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Base seed of the ensemble at grid point `(tau_index, eps_index)`.
pub fn sweep_point_seed(base_seed: u64, tau_index: usize, eps_index: usize) -> u64 {
    let point = ((tau_index as u64) << 32) | eps_index as u64;
    splitmix64(base_seed ^ splitmix64(point))
}

/// Runs one ensemble per `(τ, ε)` pair; rows come back τ-major.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>, ExperimentError> {
    config.validate()?;
    let eps_values = config.eps_grid.values();
    let points: Vec<(usize, usize)> = (0..config.tau_list.len())
        .flat_map(|ti| (0..eps_values.len()).map(move |ei| (ti, ei)))
        .collect();
    points
        .into_par_iter()
        .map(|(ti, ei)| {
            let tau = config.tau_list[ti];
            let eps = eps_values[ei];
            let ensemble = EnsembleConfig {
                field: config.field.clone(),
                region: config.region,
                params: config.point_params(tau, eps),
                trials: config.trials_per_point,
                base_seed: sweep_point_seed(config.base_seed, ti, ei),
                init: Initialization::Uniform,
            };
            let run = run_ensemble(&ensemble)?;
            Ok(SweepRow {
                tau,
                eps,
                steps: config.steps_per_trial,
                stats: run.stats,
            })
        })
        .collect()
}
