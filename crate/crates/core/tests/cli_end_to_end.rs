//! The `basinlab` binary and the settings resolver behind it.

use std::path::Path;
use std::process::{Command, Output};

use basinlab::cli::{self, SubcommandKind};
use basinlab::experiment::EpsGrid;

fn basinlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_basinlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn jitter_reruns_are_byte_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let common = ["jitter", "--eps", "0.05", "--trials", "400", "--seed", "42"];
    let run = |out: &Path, workers: &str| {
        let mut args = common.to_vec();
        args.extend(["--out", out.to_str().unwrap(), "--workers", workers]);
        let o = basinlab(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let first = run(&a, "1");
    let second = run(&b, "4");
    assert_eq!(first, second);
    for name in [
        "trials.csv",
        "summary.csv",
        "histogram.csv",
        "histogram.svg",
    ] {
        assert_eq!(read(&a, name), read(&b, name), "{name} differs");
    }
    let line = first.trim_end();
    assert!(
        line.starts_with("tau=0.01 eps=0.05 trials=400 r="),
        "{line}"
    );
    for key in [
        "phi=",
        "deep=",
        "shallow=",
        "hill=",
        "near_critical=",
        "out=",
    ] {
        assert!(line.contains(key), "{line}");
    }
    let trials = String::from_utf8(read(&a, "trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 401);
}

#[test]
fn different_seeds_give_different_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let o = basinlab(&[
            "jitter",
            "--trials",
            "50",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        read(&out, "trials.csv")
    };
    assert_ne!(run("1", "s1"), run("2", "s2"));
}

#[test]
fn flow_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("flow");
    let o = basinlab(&[
        "flow",
        "--trials",
        "100",
        "--max-steps",
        "3000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("tau=0.001 eps=0 trials=100 "));
    for name in [
        "trials.csv",
        "summary.csv",
        "histogram.csv",
        "histogram.svg",
    ] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let summary = basinlab::report::read_summary_csv(&out.join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0].steps, 3000);
}

#[test]
fn sweep_writes_summary_and_chart() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let o = basinlab(&[
        "sweep",
        "--tau-list",
        "0.01,0.04",
        "--eps-count",
        "4",
        "--eps-max",
        "0.3",
        "--trials",
        "40",
        "--steps",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 8);
    let rows = basinlab::report::read_summary_csv(&out.join("summary.csv")).unwrap();
    let grid: Vec<(f64, f64)> = rows.iter().map(|r| (r.tau, r.eps)).collect();
    assert_eq!(grid[0], (0.01, 0.0));
    assert_eq!(grid[3], (0.01, 0.3));
    assert_eq!(grid[4], (0.04, 0.0));
    assert!(out.join("sweep.svg").is_file());
    assert!(!out.join("trials.csv").exists());
}

#[test]
fn custom_function_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("f");
    let o = basinlab(&[
        "jitter",
        "--function",
        "sin(pi*x)*sin(pi*y)",
        "--eps",
        "0.02",
        "--trials",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let histogram = basinlab::report::read_histogram_csv(&out.join("histogram.csv")).unwrap();
    assert_eq!(histogram.len(), 2 * 4);
}

#[test]
fn negative_eps_is_a_usage_error() {
    let o = basinlab(&["jitter", "--eps", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("nonnegative"), "{err}");
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn flag_errors_exit_with_code_2() {
    for args in [
        &["jitter", "--bogus"][..],
        &["jitter", "--trials", "many"],
        &["jitter", "--trials", "0"],
        &["flow", "--tau", "0"],
        &["jitter", "--xmin", "1", "--xmax", "0"],
        &["sweep", "--eps-min", "0.2", "--eps-max", "0.1"],
        &["sweep", "--tau-list", "0.01,x"],
        &["flow", "--workers", "0"],
        &["launch"],
        &[],
    ] {
        let o = basinlab(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn runtime_errors_exit_with_code_1() {
    let o = basinlab(&["jitter", "--function", "sin(x", "--trials", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("offset 5"), "{}", stderr(&o));

    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = basinlab(&[
        "jitter",
        "--trials",
        "5",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    let o = basinlab(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for sub in ["flow", "jitter", "sweep"] {
        assert!(text.contains(sub));
    }
}

#[test]
fn defaults_reproduce_the_reference_experiments() {
    let flow = cli::parse_args(["basinlab", "flow"]).unwrap();
    assert_eq!(flow.subcommand, SubcommandKind::Flow);
    assert_eq!(
        (flow.tau, flow.eps, flow.trials, flow.steps),
        (0.001, 0.0, 10_000, 20_000)
    );
    assert_eq!(flow.grad_tol, 1e-6);
    assert_eq!(flow.region, basinlab::Region::default());

    let jitter = cli::parse_args(["basinlab", "jitter"]).unwrap();
    assert_eq!(
        (jitter.tau, jitter.trials, jitter.steps),
        (0.01, 10_000, 500)
    );

    let sweep = cli::parse_args(["basinlab", "sweep"]).unwrap();
    assert_eq!(sweep.tau_list, [0.001, 0.01, 0.02, 0.04, 0.06]);
    assert_eq!(
        sweep.eps_grid,
        EpsGrid {
            min: 0.0,
            max: 0.3,
            count: 31
        }
    );
    assert_eq!((sweep.trials, sweep.steps), (500, 500));
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.conf");
    std::fs::write(
        &path,
        "# jitter settings\ntrials = 123\neps = 0.2\ntau=0.02\n\nmax_steps = 77\nout = from-config\n",
    )
    .unwrap();
    let conf = path.to_str().unwrap();

    let cfg = cli::parse_args(["basinlab", "jitter", "--config", conf]).unwrap();
    assert_eq!(
        (cfg.trials, cfg.eps, cfg.tau, cfg.steps),
        (123, 0.2, 0.02, 77)
    );
    assert_eq!(cfg.out, Path::new("from-config"));
    assert_eq!(cfg.seed, 0);

    let cfg = cli::parse_args([
        "basinlab", "jitter", "--config", conf, "--eps", "0.07", "--trials", "9",
    ])
    .unwrap();
    assert_eq!(
        (cfg.trials, cfg.eps, cfg.tau, cfg.steps),
        (9, 0.07, 0.02, 77)
    );

    std::fs::write(&path, "tau-list = 0.02, 0.03\neps-count = 3\n").unwrap();
    let cfg = cli::parse_args(["basinlab", "sweep", "--config", conf]).unwrap();
    assert_eq!(cfg.tau_list, [0.02, 0.03]);
    assert_eq!(cfg.eps_grid.count, 3);
    let cfg =
        cli::parse_args(["basinlab", "sweep", "--config", conf, "--tau-list", "0.5"]).unwrap();
    assert_eq!(cfg.tau_list, [0.5]);
}

#[test]
fn bad_config_files_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.conf");
    for text in [
        "eps = 0.1\n",
        "trials 10\n",
        "trials = ten\n",
        "trials = 1\ntrials = 2\n",
    ] {
        std::fs::write(&path, text).unwrap();
        // `eps` is not a flow setting.
        let o = basinlab(&["flow", "--config", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text:?}: {}", stderr(&o));
    }
    let o = basinlab(&["flow", "--config", "/nonexistent.conf"]);
    assert_eq!(o.status.code(), Some(2));
}
