//! File formats for simulation output, solver grids, curves and reports.
//!
//! Timestamp files hold one decimal number per line. Tables are CSV with a
//! header row; summaries and verdicts are pretty-printed JSON.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::analytics::MemoryPlan;
use crate::ck::StationaryGrid;
use crate::des::{mean_sojourn, occupancy_distribution, time_average_occupancy, SimOutput};
use crate::error::{Error, StatError};
use crate::experiments::{CurvePoint, RegionReport};
use crate::stats::VerdictSummary;

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn write_rows<W: Write, R: Serialize>(out: W, rows: impl IntoIterator<Item = R>) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<(), Error> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_timestamps<W: Write>(mut out: W, trace: &[f64]) -> Result<(), Error> {
    for t in trace {
        writeln!(out, "{t}")?;
    }
    Ok(())
}

/// Reads a timestamp file. Blank lines and `#` comments are skipped; the
/// values must be non-decreasing.
pub fn read_timestamps<R: BufRead>(input: R) -> Result<Vec<f64>, Error> {
    let mut out: Vec<f64> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let value: f64 = text
            .parse()
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: not a number: {text:?}", i + 1)))?;
        if !value.is_finite() || out.last().is_some_and(|&prev| value < prev) {
            return Err(StatError::Unordered { line: i + 1 }.into());
        }
        out.push(value);
    }
    Ok(out)
}

#[derive(Serialize)]
struct OccupancyRow {
    k: usize,
    time_fraction: f64,
}

pub fn write_occupancy_csv<W: Write>(out: W, o: &SimOutput) -> Result<(), Error> {
    let pmf = occupancy_distribution(o)?;
    write_rows(
        out,
        pmf.into_iter().enumerate().map(|(k, time_fraction)| OccupancyRow { k, time_fraction }),
    )
}

/// Headline numbers of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub lambda: f64,
    pub jobs_simulated: usize,
    pub warmup_jobs: usize,
    pub jobs_completed: usize,
    pub first_from_a: usize,
    pub window_start: f64,
    pub total_time: f64,
    pub mean_sojourn: f64,
    pub rho: f64,
    pub time_average_occupancy: f64,
}

impl SimSummary {
    pub fn from_output(o: &SimOutput) -> Result<Self, Error> {
        let t_bar = mean_sojourn(o)?;
        Ok(SimSummary {
            lambda: o.lambda,
            jobs_simulated: o.jobs_simulated,
            warmup_jobs: o.warmup_jobs,
            jobs_completed: o.jobs_completed,
            first_from_a: o.first_from_a,
            window_start: o.window_start,
            total_time: o.total_time,
            mean_sojourn: t_bar,
            rho: o.lambda * t_bar,
            time_average_occupancy: time_average_occupancy(o)?,
        })
    }
}

#[derive(Serialize)]
struct MetricRow<'a> {
    metric: &'a str,
    value: f64,
}

pub fn write_summary_csv<W: Write>(out: W, s: &SimSummary) -> Result<(), Error> {
    let rows = [
        ("lambda", s.lambda),
        ("jobs_simulated", s.jobs_simulated as f64),
        ("warmup_jobs", s.warmup_jobs as f64),
        ("jobs_completed", s.jobs_completed as f64),
        ("first_from_a", s.first_from_a as f64),
        ("window_start", s.window_start),
        ("total_time", s.total_time),
        ("mean_sojourn", s.mean_sojourn),
        ("rho", s.rho),
        ("time_average_occupancy", s.time_average_occupancy),
    ];
    write_rows(out, rows.iter().map(|&(metric, value)| MetricRow { metric, value }))
}

#[derive(Serialize)]
struct GridRow {
    q_a: usize,
    q_b: usize,
    prob: f64,
}

pub fn write_grid_csv<W: Write>(out: W, g: &StationaryGrid) -> Result<(), Error> {
    let side = g.side();
    write_rows(
        out,
        (0..side).flat_map(|q_a| (0..side).map(move |q_b| (q_a, q_b))).map(|(q_a, q_b)| GridRow {
            q_a,
            q_b,
            prob: g.get(q_a, q_b),
        }),
    )
}

#[derive(Serialize)]
struct CurveRow {
    psi_a: f64,
    psi_b: f64,
    delta_p_over_p: f64,
}

pub fn write_curve_csv<W: Write>(out: W, points: &[CurvePoint]) -> Result<(), Error> {
    write_rows(
        out,
        points.iter().map(|p| CurveRow {
            psi_a: p.psi_a,
            psi_b: p.psi_b,
            delta_p_over_p: p.delta_p_over_p,
        }),
    )
}

#[derive(Serialize)]
struct RegionCsvRow {
    n_a: u32,
    n_b: u32,
    psi_a: f64,
    psi_b: f64,
    seed: u64,
    flow: String,
    chi2: Option<f64>,
    st: Option<f64>,
    verdict: &'static str,
}

pub fn write_region_csv<W: Write>(out: W, report: &RegionReport) -> Result<(), Error> {
    write_rows(
        out,
        report.rows.iter().map(|r| RegionCsvRow {
            n_a: r.cell.n_a,
            n_b: r.cell.n_b,
            psi_a: r.cell.psi_a,
            psi_b: r.cell.psi_b,
            seed: r.seed,
            flow: r.flow.to_string(),
            chi2: r.chi2,
            st: r.st,
            verdict: r.verdict(),
        }),
    )
}

pub fn write_verdict_json<W: Write>(out: W, v: &VerdictSummary) -> Result<(), Error> {
    write_json(out, v)
}

pub fn write_plan_json<W: Write>(out: W, plan: &MemoryPlan) -> Result<(), Error> {
    write_json(out, plan)
}
