//! Command-line front end.
//!
//! Every setting resolves as explicit flag, then `--config` file entry, then
//! the subcommand default. The config file holds one `key = value` pair per
//! line using the long flag names (`trials = 500`, `tau-list = 0.01,0.02`);
//! blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::descent::{DescentParams, DEFAULT_GRAD_TOL};
use crate::experiment::{
    run_ensemble, run_sweep, EnsembleConfig, EpsGrid, FieldSpec, Initialization, SweepConfig,
};
use crate::exprfield::ExprField;
use crate::landscape::Region;
use crate::report::{self, SummaryRow};

#[derive(Debug, Parser)]
#[command(
    name = "basinlab",
    version,
    about = "Noisy gradient descent on 2D landscapes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Noiseless small-step descent from uniform starts.
    Flow(FlowArgs),
    /// One noisy ensemble at a fixed (tau, eps).
    Jitter(JitterArgs),
    /// Ensembles over a tau list crossed with an eps grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SharedArgs {
    /// Field expression in x and y; the builtin landscape when absent.
    #[arg(long)]
    function: Option<String>,
    #[arg(long)]
    xmin: Option<f64>,
    #[arg(long)]
    xmax: Option<f64>,
    #[arg(long)]
    ymin: Option<f64>,
    #[arg(long)]
    ymax: Option<f64>,
    /// Trials per ensemble.
    #[arg(long)]
    trials: Option<usize>,
    /// Descent steps per trial.
    #[arg(long, visible_alias = "max-steps")]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// `key = value` file supplying defaults for the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct FlowArgs {
    #[command(flatten)]
    shared: SharedArgs,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    grad_tol: Option<f64>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct JitterArgs {
    #[command(flatten)]
    shared: SharedArgs,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct SweepArgs {
    #[command(flatten)]
    shared: SharedArgs,
    /// Comma-separated step sizes.
    #[arg(long, value_delimiter = ',')]
    tau_list: Option<Vec<f64>>,
    #[arg(long)]
    eps_min: Option<f64>,
    #[arg(long)]
    eps_max: Option<f64>,
    #[arg(long)]
    eps_count: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
}

pub const FLOW_TAU: f64 = 0.001;
pub const FLOW_STEPS: usize = 20_000;
pub const JITTER_TAU: f64 = 0.01;
pub const JITTER_EPS: f64 = 0.05;
pub const JITTER_STEPS: usize = 500;
pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_OUT: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubcommandKind {
    Flow,
    Jitter,
    Sweep,
}

impl SubcommandKind {
    pub fn name(self) -> &'static str {
        match self {
            SubcommandKind::Flow => "flow",
            SubcommandKind::Jitter => "jitter",
            SubcommandKind::Sweep => "sweep",
        }
    }
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub subcommand: SubcommandKind,
    pub function: Option<String>,
    pub region: Region,
    pub trials: usize,
    pub steps: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub grad_tol: f64,
    /// Step size for flow and jitter.
    pub tau: f64,
    /// Noise scale for jitter; zero for flow.
    pub eps: f64,
    pub tau_list: Vec<f64>,
    pub eps_grid: EpsGrid,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config; exit code 2.
    Usage(String),
    /// Failure after the settings were accepted; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

const SHARED_KEYS: [&str; 9] = [
    "function", "xmin", "xmax", "ymin", "ymax", "trials", "steps", "seed", "out",
];

fn allowed_keys(kind: SubcommandKind) -> Vec<&'static str> {
    let mut keys = SHARED_KEYS.to_vec();
    keys.push("workers");
    keys.extend_from_slice(match kind {
        SubcommandKind::Flow => &["tau", "grad-tol"][..],
        SubcommandKind::Jitter => &["tau", "eps"][..],
        SubcommandKind::Sweep => &["tau-list", "eps-min", "eps-max", "eps-count", "grad-tol"][..],
    });
    keys
}

/// Parsed `key = value` config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
            let key = key.trim().trim_start_matches("--").replace('_', "-");
            if key.is_empty() {
                return Err(format!("line {}: empty key", n + 1));
            }
            let key = if key == "max-steps" {
                "steps".to_string()
            } else {
                key
            };
            if entries
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(format!("line {}: duplicate key `{key}`", n + 1));
            }
        }
        Ok(ConfigFile { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn check_keys(&self, kind: SubcommandKind) -> Result<(), String> {
        let allowed = allowed_keys(kind);
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(format!("unknown key `{k}` for `{}`", kind.name())),
            None => Ok(()),
        }
    }
}

struct Resolver<'a> {
    config: &'a ConfigFile,
}

impl Resolver<'_> {
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, String> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.config.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| format!("config key `{key}`: cannot parse `{raw}`")),
            None => Ok(default),
        }
    }

    fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, String> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.config
            .get(key)
            .map(|raw| {
                raw.parse()
                    .map_err(|_| format!("config key `{key}`: cannot parse `{raw}`"))
            })
            .transpose()
    }

    fn pick_list(
        &self,
        flag: Option<Vec<f64>>,
        key: &str,
        default: Vec<f64>,
    ) -> Result<Vec<f64>, String> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.config.get(key) {
            Some(raw) => raw
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| format!("config key `{key}`: cannot parse `{s}`"))
                })
                .collect(),
            None => Ok(default),
        }
    }
}

fn usage(kind: SubcommandKind, message: String) -> CliError {
    let mut cmd = Cli::command();
    cmd.build();
    let usage = cmd
        .find_subcommand_mut(kind.name())
        .map(|c| c.render_usage().to_string())
        .unwrap_or_default();
    CliError::Usage(format!(
        "error: {message}\n\n{usage}\n\nFor more information, try '--help'."
    ))
}

fn read_config(path: Option<&Path>) -> Result<ConfigFile, String> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            ConfigFile::parse(&text).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

fn resolve(command: Command) -> Result<CliConfig, CliError> {
    let (kind, shared) = match &command {
        Command::Flow(a) => (SubcommandKind::Flow, &a.shared),
        Command::Jitter(a) => (SubcommandKind::Jitter, &a.shared),
        Command::Sweep(a) => (SubcommandKind::Sweep, &a.shared),
    };
    let fail = |m: String| usage(kind, m);
    let config = read_config(shared.config.as_deref()).map_err(fail)?;
    config.check_keys(kind).map_err(fail)?;
    let r = Resolver { config: &config };
    let sweep = SweepConfig::default();

    let default_region = Region::default();
    let region = Region::new(
        r.pick(shared.xmin, "xmin", default_region.x_min())
            .map_err(fail)?,
        r.pick(shared.xmax, "xmax", default_region.x_max())
            .map_err(fail)?,
        r.pick(shared.ymin, "ymin", default_region.y_min())
            .map_err(fail)?,
        r.pick(shared.ymax, "ymax", default_region.y_max())
            .map_err(fail)?,
    )
    .map_err(|e| fail(e.to_string()))?;
    let default_steps = match kind {
        SubcommandKind::Flow => FLOW_STEPS,
        SubcommandKind::Jitter => JITTER_STEPS,
        SubcommandKind::Sweep => sweep.steps_per_trial,
    };
    let default_trials = match kind {
        SubcommandKind::Sweep => sweep.trials_per_point,
        _ => DEFAULT_TRIALS,
    };
    let workers = r.pick_opt(shared.workers, "workers").map_err(fail)?;
    if workers == Some(0) {
        return Err(fail("--workers must be at least 1".into()));
    }

    let mut cfg = CliConfig {
        subcommand: kind,
        function: r
            .pick_opt(shared.function.clone(), "function")
            .map_err(fail)?,
        region,
        trials: r
            .pick(shared.trials, "trials", default_trials)
            .map_err(fail)?,
        steps: r.pick(shared.steps, "steps", default_steps).map_err(fail)?,
        seed: r.pick(shared.seed, "seed", DEFAULT_SEED).map_err(fail)?,
        out: r
            .pick(shared.out.clone(), "out", PathBuf::from(DEFAULT_OUT))
            .map_err(fail)?,
        workers,
        grad_tol: DEFAULT_GRAD_TOL,
        tau: FLOW_TAU,
        eps: 0.0,
        tau_list: sweep.tau_list.clone(),
        eps_grid: sweep.eps_grid,
    };
    match command {
        Command::Flow(a) => {
            cfg.tau = r.pick(a.tau, "tau", FLOW_TAU).map_err(fail)?;
            cfg.grad_tol = r
                .pick(a.grad_tol, "grad-tol", DEFAULT_GRAD_TOL)
                .map_err(fail)?;
        }
        Command::Jitter(a) => {
            cfg.tau = r.pick(a.tau, "tau", JITTER_TAU).map_err(fail)?;
            cfg.eps = r.pick(a.eps, "eps", JITTER_EPS).map_err(fail)?;
        }
        Command::Sweep(a) => {
            cfg.tau_list = r
                .pick_list(a.tau_list, "tau-list", sweep.tau_list)
                .map_err(fail)?;
            cfg.eps_grid = EpsGrid {
                min: r
                    .pick(a.eps_min, "eps-min", sweep.eps_grid.min)
                    .map_err(fail)?,
                max: r
                    .pick(a.eps_max, "eps-max", sweep.eps_grid.max)
                    .map_err(fail)?,
                count: r
                    .pick(a.eps_count, "eps-count", sweep.eps_grid.count)
                    .map_err(fail)?,
            };
            cfg.grad_tol = r
                .pick(a.grad_tol, "grad-tol", DEFAULT_GRAD_TOL)
                .map_err(fail)?;
        }
    }
    cfg.validate().map_err(fail)?;
    Ok(cfg)
}

impl CliConfig {
    fn validate(&self) -> Result<(), String> {
        if self.trials == 0 {
            return Err("--trials must be at least 1".into());
        }
        match self.subcommand {
            SubcommandKind::Sweep => self
                .sweep_config(FieldSpec::Builtin)
                .validate()
                .map_err(|e| e.to_string()),
            _ => self.descent_params().validate().map_err(|e| e.to_string()),
        }
    }

    fn descent_params(&self) -> DescentParams {
        DescentParams::new(self.tau, self.eps, self.steps).with_grad_tol(self.grad_tol)
    }

    fn sweep_config(&self, field: FieldSpec) -> SweepConfig {
        SweepConfig {
            field,
            region: self.region,
            tau_list: self.tau_list.clone(),
            eps_grid: self.eps_grid,
            trials_per_point: self.trials,
            steps_per_trial: self.steps,
            grad_tol: self.grad_tol,
            base_seed: self.seed,
        }
    }
}

/// Parses `args` (program name first) into resolved settings.
pub fn parse_args<I, T>(args: I) -> Result<CliConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    resolve(cli.command)
}

fn runtime<E: fmt::Display>(e: E) -> CliError {
    CliError::Runtime(format!("error: {e}"))
}

/// Runs the experiment described by `cfg`, writes its outputs and returns
/// the summary text printed on standard output.
pub fn execute(cfg: &CliConfig) -> Result<String, CliError> {
    let field =
        match &cfg.function {
            None => FieldSpec::Builtin,
            Some(src) => FieldSpec::Expression(ExprField::parse(src).map_err(|e| {
                CliError::Runtime(format!("error: invalid --function `{src}`: {e}"))
            })?),
        };
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| runtime(format!("cannot create {}: {e}", cfg.out.display())))?;
    let body = || -> Result<String, CliError> {
        match cfg.subcommand {
            SubcommandKind::Sweep => {
                let rows = run_sweep(&cfg.sweep_config(field)).map_err(runtime)?;
                let summary: Vec<SummaryRow> = rows.iter().map(SummaryRow::from_sweep).collect();
                report::write_summary_csv(&cfg.out.join("summary.csv"), &summary)
                    .map_err(runtime)?;
                report::write_text(
                    &cfg.out.join("sweep.svg"),
                    &report::render_sweep_svg(&summary),
                )
                .map_err(runtime)?;
                let mut text = String::new();
                for row in &summary {
                    text.push_str(&row.summary_line());
                    text.push('\n');
                }
                Ok(text)
            }
            _ => {
                let config = EnsembleConfig {
                    field,
                    region: cfg.region,
                    params: cfg.descent_params(),
                    trials: cfg.trials,
                    base_seed: cfg.seed,
                    init: Initialization::Uniform,
                };
                let run = run_ensemble(&config).map_err(runtime)?;
                let summary = SummaryRow::from_ensemble(&config.params, &run.stats);
                let out = &cfg.out;
                report::write_trials_csv(&out.join("trials.csv"), &run.outcomes)
                    .map_err(runtime)?;
                report::write_summary_csv(&out.join("summary.csv"), std::slice::from_ref(&summary))
                    .map_err(runtime)?;
                report::write_histogram_csv(
                    &out.join("histogram.csv"),
                    &run.grid,
                    &run.stats.counts,
                )
                .map_err(runtime)?;
                report::write_text(
                    &out.join("histogram.svg"),
                    &report::render_histogram_svg(&run.grid, &run.stats.counts),
                )
                .map_err(runtime)?;
                Ok(format!("{}\n", summary.summary_line()))
            }
        }
    };
    match cfg.workers {
        None => body(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(runtime)?
            .install(body),
    }
}

/// Entry point behind `main`; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let command = match Cli::try_parse_from(args) {
        Ok(cli) => cli.command,
        Err(e) => {
            let code = e.exit_code();
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = write!(sink, "{e}");
            return code;
        }
    };
    let cfg = match resolve(command) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            return e.exit_code();
        }
    };
    match execute(&cfg) {
        Ok(text) => {
            let _ = write!(stdout, "{text}");
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}
