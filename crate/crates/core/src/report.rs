//! CSV tables and standalone SVG charts.
//!
//! Three CSV layouts are produced, always with a header row, comma
//! separators and LF line endings:
//!
//! * `trials.csv`: trial_index, x0, y0, x_end, y_end, cell_i, cell_j, bin,
//!   steps_taken, final_grad_norm, final_value
//! * `summary.csv`: tau, eps, trials, steps, n_deep, n_shallow, n_hill,
//!   n_near_critical, n_out, r, r_ci_lo, r_ci_hi, phi
//! * `histogram.csv`: cell_i, cell_j, x_lo, x_hi, y_lo, y_hi, cell_class, count
//!
//! Reals are written with 17 significant digits so that parsing them back
//! yields the identical `f64`. Missing values (no cell for an out-of-region
//! endpoint, undefined `r`) are empty fields. `r` and `phi` are taken over
//! all trials, out-of-region ones included.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::descent::DescentParams;
use crate::experiment::{Bin, EnsembleStats, RatioInterval, SweepRow, TrialOutcome};
use crate::landscape::{CellGrid, CellIndex, CellKind, Point2};

pub const TRIALS_HEADER: [&str; 11] = [
    "trial_index",
    "x0",
    "y0",
    "x_end",
    "y_end",
    "cell_i",
    "cell_j",
    "bin",
    "steps_taken",
    "final_grad_norm",
    "final_value",
];

pub const SUMMARY_HEADER: [&str; 13] = [
    "tau",
    "eps",
    "trials",
    "steps",
    "n_deep",
    "n_shallow",
    "n_hill",
    "n_near_critical",
    "n_out",
    "r",
    "r_ci_lo",
    "r_ci_hi",
    "phi",
];

pub const HISTOGRAM_HEADER: [&str; 8] = [
    "cell_i",
    "cell_j",
    "x_lo",
    "x_hi",
    "y_lo",
    "y_hi",
    "cell_class",
    "count",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{}: record {record}: {message}", path.display())]
    Parse {
        path: PathBuf,
        record: usize,
        message: String,
    },
}

/// Formats a real like C's `%.17g`: 17 significant digits, trailing zeros
/// trimmed, exponent form outside `[1e-5, 1e17)`.
pub fn format_real(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn opt_real(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub tau: f64,
    pub eps: f64,
    pub trials: u64,
    pub steps: u64,
    pub n_deep: u64,
    pub n_shallow: u64,
    pub n_hill: u64,
    pub n_near_critical: u64,
    pub n_out: u64,
    pub r: Option<f64>,
    pub r_ci: Option<RatioInterval>,
    pub phi: f64,
}

impl SummaryRow {
    pub fn new(tau: f64, eps: f64, steps: usize, stats: &EnsembleStats) -> Self {
        SummaryRow {
            tau,
            eps,
            trials: stats.trials,
            steps: steps as u64,
            n_deep: stats.n_deep,
            n_shallow: stats.n_shallow,
            n_hill: stats.n_hill,
            n_near_critical: stats.n_near_critical,
            n_out: stats.n_out,
            r: stats.r,
            r_ci: stats.r_ci,
            phi: stats.phi,
        }
    }

    pub fn from_ensemble(params: &DescentParams, stats: &EnsembleStats) -> Self {
        SummaryRow::new(params.tau, params.eps, params.max_steps, stats)
    }

    pub fn from_sweep(row: &SweepRow) -> Self {
        SummaryRow::new(row.tau, row.eps, row.steps, &row.stats)
    }

    /// The line printed by the command line tool after a run.
    pub fn summary_line(&self) -> String {
        let r = self
            .r
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "undefined".into());
        format!(
            "tau={} eps={} trials={} r={r} phi={:.4} deep={} shallow={} hill={} near_critical={} out={}",
            self.tau,
            self.eps,
            self.trials,
            self.phi,
            self.n_deep,
            self.n_shallow,
            self.n_hill,
            self.n_near_critical,
            self.n_out
        )
    }

    fn record(&self) -> Vec<String> {
        vec![
            format_real(self.tau),
            format_real(self.eps),
            self.trials.to_string(),
            self.steps.to_string(),
            self.n_deep.to_string(),
            self.n_shallow.to_string(),
            self.n_hill.to_string(),
            self.n_near_critical.to_string(),
            self.n_out.to_string(),
            opt_real(self.r),
            opt_real(self.r_ci.map(|c| c.lo)),
            opt_real(self.r_ci.map(|c| c.hi)),
            format_real(self.phi),
        ]
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn create(path: &Path) -> Result<File, ReportError> {
    File::create(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_records<I>(path: &Path, header: &[&str], rows: I) -> Result<(), ReportError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let csv_err = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(io::BufWriter::new(create(path)?));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_trials_csv(path: &Path, outcomes: &[TrialOutcome]) -> Result<(), ReportError> {
    let rows = outcomes.iter().map(|o| {
        vec![
            o.trial_index.to_string(),
            format_real(o.start.x),
            format_real(o.start.y),
            format_real(o.end.x),
            format_real(o.end.y),
            o.cell.map(|c| c.i.to_string()).unwrap_or_default(),
            o.cell.map(|c| c.j.to_string()).unwrap_or_default(),
            o.bin.as_str().to_string(),
            o.steps_taken.to_string(),
            format_real(o.final_grad_norm),
            format_real(o.final_value),
        ]
    });
    write_records(path, &TRIALS_HEADER, rows)
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), ReportError> {
    write_records(path, &SUMMARY_HEADER, rows.iter().map(SummaryRow::record))
}

/// One row per grid cell in row-major order.
pub fn write_histogram_csv(
    path: &Path,
    grid: &CellGrid,
    counts: &[u64],
) -> Result<(), ReportError> {
    assert_eq!(counts.len(), grid.len(), "one count per cell");
    let rows = grid.indices().map(|c| {
        let (x_lo, x_hi, y_lo, y_hi) = grid.bounds(c);
        vec![
            c.i.to_string(),
            c.j.to_string(),
            format_real(x_lo),
            format_real(x_hi),
            format_real(y_lo),
            format_real(y_hi),
            grid.class(c).kind.as_str().to_string(),
            counts[grid.flat_index(c)].to_string(),
        ]
    });
    write_records(path, &HISTOGRAM_HEADER, rows)
}

struct CsvTable {
    path: PathBuf,
    records: Vec<csv::StringRecord>,
}

impl CsvTable {
    fn read(path: &Path, header: &[&str]) -> Result<Self, ReportError> {
        let csv_err = |source| ReportError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(csv_err)?;
        let found = rdr.headers().map_err(csv_err)?.clone();
        if found.iter().ne(header.iter().copied()) {
            return Err(ReportError::Parse {
                path: path.to_path_buf(),
                record: 0,
                message: format!("unexpected header {:?}", found.iter().collect::<Vec<_>>()),
            });
        }
        let records = rdr
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(csv_err)?;
        Ok(CsvTable {
            path: path.to_path_buf(),
            records,
        })
    }

    fn field<T: std::str::FromStr>(&self, record: usize, col: usize) -> Result<T, ReportError> {
        let raw = &self.records[record][col];
        raw.parse()
            .map_err(|_| self.error(record, format!("cannot parse `{raw}` in column {col}")))
    }

    fn optional<T: std::str::FromStr>(
        &self,
        record: usize,
        col: usize,
    ) -> Result<Option<T>, ReportError> {
        if self.records[record][col].is_empty() {
            Ok(None)
        } else {
            self.field(record, col).map(Some)
        }
    }

    fn error(&self, record: usize, message: String) -> ReportError {
        ReportError::Parse {
            path: self.path.clone(),
            record: record + 1,
            message,
        }
    }
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, ReportError> {
    let t = CsvTable::read(path, &SUMMARY_HEADER)?;
    (0..t.records.len())
        .map(|k| {
            let lo: Option<f64> = t.optional(k, 10)?;
            let hi: Option<f64> = t.optional(k, 11)?;
            Ok(SummaryRow {
                tau: t.field(k, 0)?,
                eps: t.field(k, 1)?,
                trials: t.field(k, 2)?,
                steps: t.field(k, 3)?,
                n_deep: t.field(k, 4)?,
                n_shallow: t.field(k, 5)?,
                n_hill: t.field(k, 6)?,
                n_near_critical: t.field(k, 7)?,
                n_out: t.field(k, 8)?,
                r: t.optional(k, 9)?,
                r_ci: lo.zip(hi).map(|(lo, hi)| RatioInterval { lo, hi }),
                phi: t.field(k, 12)?,
            })
        })
        .collect()
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialOutcome>, ReportError> {
    let t = CsvTable::read(path, &TRIALS_HEADER)?;
    (0..t.records.len())
        .map(|k| {
            let i: Option<usize> = t.optional(k, 5)?;
            let j: Option<usize> = t.optional(k, 6)?;
            let bin: Bin = t.records[k][7].parse().map_err(|m| t.error(k, m))?;
            Ok(TrialOutcome {
                trial_index: t.field(k, 0)?,
                start: Point2::new(t.field(k, 1)?, t.field(k, 2)?),
                end: Point2::new(t.field(k, 3)?, t.field(k, 4)?),
                cell: i.zip(j).map(|(i, j)| CellIndex::new(i, j)),
                bin,
                steps_taken: t.field(k, 8)?,
                final_grad_norm: t.field(k, 9)?,
                final_value: t.field(k, 10)?,
            })
        })
        .collect()
}

/// `(cell, class, count)` rows of `histogram.csv`.
pub fn read_histogram_csv(path: &Path) -> Result<Vec<(CellIndex, String, u64)>, ReportError> {
    let t = CsvTable::read(path, &HISTOGRAM_HEADER)?;
    (0..t.records.len())
        .map(|k| {
            Ok((
                CellIndex::new(t.field(k, 0)?, t.field(k, 1)?),
                t.records[k][6].to_string(),
                t.field(k, 7)?,
            ))
        })
        .collect()
}

pub fn write_text(path: &Path, contents: &str) -> Result<(), ReportError> {
    std::fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Fill at full intensity in the histogram heatmap.
pub const MAX_FILL: (u8, u8, u8) = (8, 48, 107);

fn ramp(t: f64) -> (u8, u8, u8) {
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    (
        mix(255, MAX_FILL.0),
        mix(255, MAX_FILL.1),
        mix(255, MAX_FILL.2),
    )
}

fn outline(kind: CellKind) -> &'static str {
    match kind {
        CellKind::DeepWell => r##"stroke="#b2182b" stroke-width="3""##,
        CellKind::ShallowWell => r##"stroke="#e08214" stroke-width="2" stroke-dasharray="6 3""##,
        CellKind::Hill => r##"stroke="#999999" stroke-width="1" stroke-dasharray="2 2""##,
    }
}

const PX_PER_UNIT: f64 = 200.0;
const MARGIN: f64 = 50.0;

/// Heatmap of endpoint counts: one rectangle per cell at its true
/// coordinates, fill scaled linearly to the largest count, outline style
/// marking the cell class.
pub fn render_histogram_svg(grid: &CellGrid, counts: &[u64]) -> String {
    assert_eq!(counts.len(), grid.len(), "one count per cell");
    let region = grid.region();
    let plot_w = region.width() * PX_PER_UNIT;
    let plot_h = region.height() * PX_PER_UNIT;
    let width = plot_w + 2.0 * MARGIN;
    let height = plot_h + 2.0 * MARGIN + 40.0;
    let px = |x: f64| MARGIN + (x - region.x_min()) * PX_PER_UNIT;
    let py = |y: f64| MARGIN + (region.y_max() - y) * PX_PER_UNIT;
    let max = counts.iter().copied().max().unwrap_or(0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">Endpoint counts per cell (max {max})</text>"#,
        width / 2.0
    );
    for c in grid.indices() {
        let (x0, x1, y0, y1) = grid.bounds(c);
        let count = counts[grid.flat_index(c)];
        let t = if max == 0 {
            0.0
        } else {
            count as f64 / max as f64
        };
        let (r, g, b) = ramp(t);
        let kind = grid.class(c).kind;
        let _ = writeln!(
            s,
            r#"<rect class="cell {kind}" data-i="{}" data-j="{}" data-count="{count}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{g},{b})" {}/>"#,
            c.i,
            c.j,
            px(x0),
            py(y1),
            px(x1) - px(x0),
            py(y0) - py(y1),
            outline(kind)
        );
        let label_fill = if t > 0.5 { "white" } else { "black" };
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" dominant-baseline="middle" fill="{label_fill}">{count}</text>"#,
            0.5 * (px(x0) + px(x1)),
            0.5 * (py(y0) + py(y1))
        );
    }
    for &x in grid.x_lines() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(x),
            MARGIN + plot_h + 16.0,
            x
        );
    }
    for &y in grid.y_lines() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            MARGIN - 6.0,
            py(y),
            y
        );
    }
    let legend_y = MARGIN + plot_h + 36.0;
    for (k, kind) in [CellKind::DeepWell, CellKind::ShallowWell, CellKind::Hill]
        .into_iter()
        .enumerate()
    {
        let x = MARGIN + k as f64 * 130.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{:.2}" width="18" height="12" fill="white" {}/>"#,
            legend_y - 10.0,
            outline(kind)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{legend_y:.2}">{}</text>"#,
            x + 24.0,
            kind.as_str().replace('_', " ")
        );
    }
    s.push_str("</svg>\n");
    s
}

const PANEL_W: f64 = 260.0;
const PANEL_H: f64 = 220.0;
const PANEL_PAD: f64 = 45.0;

/// One `r`-vs-`ε` panel per step size, in order of first appearance.
pub fn render_sweep_svg(rows: &[SummaryRow]) -> String {
    let mut taus: Vec<f64> = Vec::new();
    for row in rows {
        if !taus.contains(&row.tau) {
            taus.push(row.tau);
        }
    }
    let eps_max = rows.iter().map(|r| r.eps).fold(0.3, f64::max);
    let r_peak = rows.iter().filter_map(|r| r.r).fold(1.0, f64::max);
    let r_max = (r_peak / 0.25).ceil() * 0.25;

    let width = taus.len().max(1) as f64 * (PANEL_W + PANEL_PAD) + PANEL_PAD;
    let height = PANEL_H + 2.0 * PANEL_PAD + 30.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#
    );
    for (k, &tau) in taus.iter().enumerate() {
        let left = PANEL_PAD + k as f64 * (PANEL_W + PANEL_PAD);
        let top = PANEL_PAD;
        let bottom = top + PANEL_H;
        let px = |e: f64| left + e / eps_max * PANEL_W;
        let py = |r: f64| bottom - r / r_max * PANEL_H;
        let series: Vec<&SummaryRow> = rows.iter().filter(|r| r.tau == tau).collect();
        let undefined = series.iter().filter(|r| r.r.is_none()).count();

        let _ = writeln!(s, r#"<g class="panel" data-tau="{tau}">"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">τ = {tau}</text>"#,
            left + PANEL_W / 2.0,
            top - 15.0
        );
        let _ = writeln!(
            s,
            r#"<rect x="{left:.2}" y="{top:.2}" width="{PANEL_W:.2}" height="{PANEL_H:.2}" fill="none" stroke="black"/>"#
        );
        for t in 0..=4 {
            let e = eps_max * t as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{e:.3}</text>"#,
                bottom + 4.0,
                bottom + 16.0,
                x = px(e)
            );
            let r = r_max * t as f64 / 4.0;
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="black"/><line x1="{left:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{y:.2}" text-anchor="end" dominant-baseline="middle">{r:.2}</text>"##,
                left - 4.0,
                left + PANEL_W,
                left - 6.0,
                y = py(r)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">noise ε</text>"#,
            left + PANEL_W / 2.0,
            bottom + 32.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">r (shallow / deep)</text>"#,
            left - 34.0,
            top + PANEL_H / 2.0,
            left - 34.0,
            top + PANEL_H / 2.0
        );
        let points: Vec<(f64, f64)> = series
            .iter()
            .filter_map(|row| row.r.map(|r| (px(row.eps), py(r))))
            .collect();
        if points.len() > 1 {
            let path: Vec<String> = points
                .iter()
                .map(|(x, y)| format!("{x:.2},{y:.2}"))
                .collect();
            let _ = writeln!(
                s,
                r##"<polyline class="series" fill="none" stroke="#2166ac" stroke-width="1.5" points="{}"/>"##,
                path.join(" ")
            );
        }
        for (x, y) in &points {
            let _ = writeln!(
                s,
                r##"<circle class="point" cx="{x:.2}" cy="{y:.2}" r="2.5" fill="#2166ac"/>"##
            );
        }
        if undefined > 0 {
            let _ = writeln!(
                s,
                r#"<text class="legend" x="{:.2}" y="{:.2}">{undefined} point(s) with undefined r omitted</text>"#,
                left + 6.0,
                top + 14.0
            );
        }
        s.push_str("</g>\n");
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        width / 2.0,
        height - 8.0,
        escape_xml(
            "Ratio r of shallow-well to deep-well endpoints vs noise ε, one panel per step size τ"
        )
    );
    s.push_str("</svg>\n");
    s
}
