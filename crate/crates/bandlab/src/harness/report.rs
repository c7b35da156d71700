use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::Result;
use crate::exec::available_threads;

pub const REPORT_HEADER: &str = "experiment,check,measured,bound,pass,seed,N,W,eta";

/// How `measured` is compared with `bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "relation", rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
    /// `|measured - bound| <= tolerance`.
    Within { tolerance: f64 },
}

impl Relation {
    pub fn holds(self, measured: f64, bound: f64) -> bool {
        match self {
            Relation::AtMost => measured <= bound,
            Relation::AtLeast => measured >= bound,
            Relation::Within { tolerance } => (measured - bound).abs() <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub check: String,
    pub measured: f64,
    pub bound: f64,
    #[serde(flatten)]
    pub relation: Relation,
    pub pass: bool,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub eta: Option<f64>,
}

/// A measured quantity without a pass/fail verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub samples: usize,
    pub threads: usize,
    pub parallel: bool,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub environment: Environment,
    pub rows: Vec<ReportRow>,
    pub observations: Vec<Observation>,
    /// Files written next to the report.
    pub artifacts: Vec<PathBuf>,
    pub config: ExperimentConfig,
}

impl Report {
    pub fn new(experiment: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            experiment: experiment.to_string(),
            environment: Environment {
                seed: cfg.seed,
                n: cfg.profile.n(),
                w: cfg.profile.w(),
                samples: cfg.samples,
                threads: if cfg.execution.is_parallel() { available_threads() } else { 1 },
                parallel: cfg.execution.is_parallel(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            rows: Vec::new(),
            observations: Vec::new(),
            artifacts: Vec::new(),
            config: cfg.clone(),
        }
    }

    /// Add a row at the report's `N`, `W`.
    pub fn check(&mut self, check: impl Into<String>, measured: f64, relation: Relation, bound: f64, eta: Option<f64>) {
        let (n, w) = (self.environment.n, self.environment.w);
        self.check_sized(check, measured, relation, bound, eta, n, w);
    }

    #[allow(clippy::too_many_arguments)]
    pub fn check_sized(
        &mut self,
        check: impl Into<String>,
        measured: f64,
        relation: Relation,
        bound: f64,
        eta: Option<f64>,
        n: usize,
        w: usize,
    ) {
        let pass = measured.is_finite() && relation.holds(measured, bound);
        self.rows.push(ReportRow { check: check.into(), measured, bound, relation, pass, n, w, eta });
    }

    pub fn observe(&mut self, name: impl Into<String>, value: f64) {
        self.observations.push(Observation { name: name.into(), value });
    }

    pub fn row(&self, check: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.check == check)
    }

    pub fn observation(&self, name: &str) -> Option<f64> {
        self.observations.iter().find(|o| o.name == name).map(|o| o.value)
    }

    /// True when there is at least one row and every row passes.
    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.pass)
    }

    pub fn merge(&mut self, other: Report) {
        self.rows.extend(other.rows);
        self.observations.extend(other.observations);
        self.artifacts.extend(other.artifacts);
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        for r in &self.rows {
            let eta = r.eta.map(|e| e.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.experiment, r.check, r.measured, r.bound, r.pass, self.environment.seed, r.n, r.w, eta
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReportFormat {
    pub svg: bool,
}

/// Write `<experiment>.csv`, `<experiment>.json` and optionally
/// `<experiment>.svg` into `dir`; returns the paths written.
pub fn emit_report(r: &Report, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv = dir.join(format!("{}.csv", r.experiment));
    let mut f = BufWriter::new(File::create(&csv)?);
    r.write_csv(&mut f)?;
    f.flush()?;
    written.push(csv);
    let json = dir.join(format!("{}.json", r.experiment));
    fs::write(&json, r.to_json()? + "\n")?;
    written.push(json);
    if format.svg {
        let svg = dir.join(format!("{}.svg", r.experiment));
        fs::write(&svg, svg_checks(r))?;
        written.push(svg);
    }
    Ok(written)
}

/// One line of a streamed batch file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub seed: u64,
    pub k: usize,
    pub kind: String,
    /// Index tuple or test-vector id.
    pub tuple: String,
    pub value: f64,
    pub psi: f64,
}

pub fn write_batch_csv(rows: &[BatchRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "seed,k,kind,tuple,value,psi")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.seed, r.k, r.kind, r.tuple, r.value, r.psi)?;
    }
    Ok(())
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const PAD: f64 = 48.0;

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{PAD}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{} H{}" stroke="black" fill="none"/>"#,
        HEIGHT - PAD,
        WIDTH - PAD
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Bars of `measured / bound` per row, green when passing.
fn svg_checks(r: &Report) -> String {
    let mut s = svg_open(&format!("{}: measured / bound", r.experiment));
    let count = r.rows.len().max(1) as f64;
    let bar = (WIDTH - 2.0 * PAD) / count;
    let ratios: Vec<f64> = r.rows.iter().map(|row| if row.bound != 0.0 { row.measured / row.bound } else { row.measured }).collect();
    let top = ratios.iter().copied().filter(|x| x.is_finite()).fold(1.0f64, f64::max);
    let scale = (HEIGHT - 2.0 * PAD) / top;
    for (i, (row, ratio)) in r.rows.iter().zip(&ratios).enumerate() {
        let h = if ratio.is_finite() { ratio.abs() * scale } else { 0.0 };
        let color = if row.pass { "#4a4" } else { "#c33" };
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"><title>{}</title></rect>"#,
            PAD + i as f64 * bar + 1.0,
            HEIGHT - PAD - h,
            (bar - 2.0).max(1.0),
            h,
            escape(&row.check)
        );
    }
    let y1 = HEIGHT - PAD - scale;
    let _ = writeln!(s, r#"<path d="M{PAD} {y1:.2} H{}" stroke="gray" stroke-dasharray="4 3"/>"#, WIDTH - PAD);
    s.push_str("</svg>\n");
    s
}

/// Line plot of named series sharing the x axis.
pub fn svg_line_plot(title: &str, x: &[f64], series: &[(&str, &[f64])]) -> String {
    let mut s = svg_open(title);
    let (x0, x1) = range(x.iter().copied());
    let (y0, y1) = range(series.iter().flat_map(|(_, ys)| ys.iter().copied()));
    let sx = |v: f64| PAD + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * PAD);
    let sy = |v: f64| HEIGHT - PAD - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * PAD);
    let colors = ["#2463b0", "#c0392b", "#27ae60", "#8e44ad", "#d35400"];
    for (i, (name, ys)) in series.iter().enumerate() {
        let color = colors[i % colors.len()];
        let pts: Vec<String> = x
            .iter()
            .zip(ys.iter())
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| format!("{:.2},{:.2}", sx(*a), sy(*b)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            WIDTH - PAD - 100.0,
            PAD + 14.0 * i as f64,
            escape(name)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="10">{x0:.3} .. {x1:.3}; y {y0:.3} .. {y1:.3}</text>"#,
        HEIGHT - PAD + 16.0
    );
    s.push_str("</svg>\n");
    s
}

/// Histogram of `values` on `bins` equal bins.
pub fn svg_histogram(title: &str, values: &[f64], bins: usize) -> String {
    let mut s = svg_open(title);
    let bins = bins.max(1);
    let (lo, hi) = range(values.iter().copied());
    let mut counts = vec![0usize; bins];
    for v in values.iter().filter(|v| v.is_finite()) {
        let i = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
        counts[i.min(bins - 1)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let bar = (WIDTH - 2.0 * PAD) / bins as f64;
    for (i, c) in counts.iter().enumerate() {
        let h = *c as f64 / top * (HEIGHT - 2.0 * PAD);
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#2463b0"/>"##,
            PAD + i as f64 * bar,
            HEIGHT - PAD - h,
            (bar - 1.0).max(0.5),
            h
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="10">{lo:.3} .. {hi:.3}, n = {}</text>"#,
        HEIGHT - PAD + 16.0,
        values.len()
    );
    s.push_str("</svg>\n");
    s
}
