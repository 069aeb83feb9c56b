//! CSV and SVG artefacts. Everything written here is a pure function of
//! the records, so equal runs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::metrics::{mean_ci, MeanCi, RunRecord};
use crate::error::{Error, Result};

pub const STEPS_HEADER: [&str; 11] = [
    "step",
    "seed",
    "qx",
    "qy",
    "qz",
    "n_hat",
    "n_found",
    "n_meas",
    "n_gated",
    "score_expl",
    "score_refine",
];
pub const FOUND_HEADER: [&str; 7] = ["seed", "found_step", "x", "y", "z", "matched_truth_index", "match_dist"];
pub const RUNS_HEADER: [&str; 10] = [
    "seed",
    "max_steps",
    "n_true",
    "n_found",
    "rmse",
    "steps_to_all_found",
    "explored_fraction",
    "min_obstacle_distance",
    "resets",
    "timeouts",
];

fn sorted(records: &[RunRecord]) -> Vec<&RunRecord> {
    let mut v: Vec<&RunRecord> = records.iter().collect();
    v.sort_by_key(|r| r.seed);
    v
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finite(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// Writes `steps.csv`, `found.csv` and `runs.csv` into `dir`.
pub fn write_records(dir: &Path, records: &[RunRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let recs = sorted(records);

    let mut w = csv::Writer::from_path(dir.join("steps.csv"))?;
    w.write_record(STEPS_HEADER)?;
    for r in &recs {
        for s in &r.steps {
            w.write_record([
                s.step.to_string(),
                r.seed.to_string(),
                s.q.x.to_string(),
                s.q.y.to_string(),
                s.q.z.to_string(),
                s.n_hat.to_string(),
                s.n_found.to_string(),
                s.n_meas.to_string(),
                s.n_gated.to_string(),
                s.score_expl.to_string(),
                s.score_refine.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("found.csv"))?;
    w.write_record(FOUND_HEADER)?;
    for r in &recs {
        for (i, f) in r.found.iter().enumerate() {
            let m = r.matches.get(i).copied().flatten();
            w.write_record([
                r.seed.to_string(),
                r.found_steps[i].to_string(),
                f.x.to_string(),
                f.y.to_string(),
                f.z.to_string(),
                opt(m.map(|x| x.0)),
                opt(m.map(|x| x.1)),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
    w.write_record(RUNS_HEADER)?;
    for r in &recs {
        w.write_record([
            r.seed.to_string(),
            r.max_steps.to_string(),
            r.truth.len().to_string(),
            r.found.len().to_string(),
            opt(r.rmse),
            opt(r.steps_to_all_found),
            r.explored_fraction.to_string(),
            finite(r.min_obstacle_distance),
            r.resets.to_string(),
            r.timeouts.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
struct StepRow {
    step: usize,
    seed: u64,
    n_found: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RunRow {
    pub seed: u64,
    pub max_steps: usize,
    pub n_true: usize,
    pub n_found: usize,
    pub rmse: Option<f64>,
    pub steps_to_all_found: Option<usize>,
    pub explored_fraction: f64,
    pub min_obstacle_distance: Option<f64>,
    pub resets: usize,
    pub timeouts: usize,
}

/// Aggregates read back from a run directory.
#[derive(Debug, Clone)]
pub struct Report {
    pub detections: Vec<MeanCi>,
    pub runs: Vec<RunRow>,
    pub rmse: MeanCi,
    pub steps_to_all_found: MeanCi,
}

fn missing(dir: &Path, name: &str) -> Error {
    Error::config(format!("{} has no {name}; run `run` first", dir.display()))
}

pub fn read_report(dir: &Path) -> Result<Report> {
    let steps_path = dir.join("steps.csv");
    let runs_path = dir.join("runs.csv");
    if !steps_path.exists() {
        return Err(missing(dir, "steps.csv"));
    }
    if !runs_path.exists() {
        return Err(missing(dir, "runs.csv"));
    }
    let mut runs: Vec<RunRow> = csv::Reader::from_path(&runs_path)?
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    runs.sort_by_key(|r| r.seed);
    let rows: Vec<StepRow> = csv::Reader::from_path(&steps_path)?
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    let len = runs.iter().map(|r| r.max_steps).max().unwrap_or(0);
    let len = len.max(rows.iter().map(|r| r.step + 1).max().unwrap_or(0));
    let curves: Vec<Vec<f64>> = runs
        .iter()
        .map(|run| {
            let mut c: Vec<f64> = rows
                .iter()
                .filter(|r| r.seed == run.seed)
                .map(|r| r.n_found as f64)
                .collect();
            let last = c.last().copied().unwrap_or(0.0);
            c.resize(len, last);
            c
        })
        .collect();
    let detections = (0..len)
        .map(|k| mean_ci(&curves.iter().map(|c| c[k]).collect::<Vec<_>>()))
        .collect();
    let rmse = mean_ci(&runs.iter().filter_map(|r| r.rmse).collect::<Vec<_>>());
    let steps = mean_ci(
        &runs
            .iter()
            .map(|r| r.steps_to_all_found.map_or(r.max_steps as f64 + 1.0, |s| s as f64))
            .collect::<Vec<_>>(),
    );
    Ok(Report {
        detections,
        runs,
        rmse,
        steps_to_all_found: steps,
    })
}

/// Writes `aggregate.csv` and `detections.svg` next to the run files.
pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("aggregate.csv"))?;
    w.write_record(["step", "mean_found", "ci_half_width", "n_runs"])?;
    for (k, c) in report.detections.iter().enumerate() {
        w.write_record([k.to_string(), c.mean.to_string(), finite(c.half_width), c.n.to_string()])?;
    }
    w.flush()?;
    let n_true = report.runs.iter().map(|r| r.n_true).max().unwrap_or(0);
    fs::write(
        dir.join("detections.svg"),
        detections_svg(&report.detections, n_true.max(1) as f64, "Found targets (mean, 95% CI)"),
    )?;
    Ok(())
}

/// Line chart of the mean curve with its interval as a shaded band.
pub fn detections_svg(curve: &[MeanCi], y_max: f64, title: &str) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let n = curve.len().max(2) as f64 - 1.0;
    let x = |k: usize| pad + (w - 2.0 * pad) * k as f64 / n;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v / y_max).clamp(0.0, 1.05);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{title}</text>"#,
        w / 2.0
    );
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {} L{pad} {} L{} {}" fill="none" stroke="black"/>"#,
        pad,
        h - pad,
        w - pad,
        h - pad
    );
    let hw = |c: &MeanCi| if c.half_width.is_finite() { c.half_width } else { 0.0 };
    if !curve.is_empty() {
        let mut band = String::new();
        for (k, c) in curve.iter().enumerate() {
            let _ = write!(band, "{:.2},{:.2} ", x(k), y(c.mean + hw(c)));
        }
        for (k, c) in curve.iter().enumerate().rev() {
            let _ = write!(band, "{:.2},{:.2} ", x(k), y((c.mean - hw(c)).max(0.0)));
        }
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="steelblue" fill-opacity="0.25" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = curve
            .iter()
            .enumerate()
            .map(|(k, c)| format!("{:.2},{:.2}", x(k), y(c.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
            line.join(" ")
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">step</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="{}" text-anchor="end" font-family="sans-serif" font-size="12">0</text>"#,
        h - pad + 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="12">{y_max}</text>"#,
        pad - 4.0,
        y(y_max) + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        w - pad,
        h - pad + 14.0,
        curve.len()
    );
    s.push_str("</svg>\n");
    s
}
