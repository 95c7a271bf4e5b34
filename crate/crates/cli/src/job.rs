//! Fully resolved work items. A `Job` carries no ambient state: running the
//! same value twice writes the same bytes.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use fjsync::analytics::{min_total_memory, partition_memory, required_memory};
use fjsync::ck::{conditional_rate, conditional_regions, solve_stationary, solve_stationary_auto, SolverConfig};
use fjsync::des::{extract_intervals, run_simulation};
use fjsync::experiments::{delta_curves, run_sweep_with_threads, SweepSpec};
use fjsync::export::{
    read_timestamps, write_curve_csv, write_grid_csv, write_json, write_occupancy_csv, write_region_csv,
    write_summary_csv, write_timestamps, SimSummary,
};
use fjsync::stats::classify_almost_poisson;
use fjsync::{Error, NetworkParams, ParamSpec};

use crate::manifest::{RunManifest, MANIFEST_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateJob {
    pub params: ParamSpec,
    pub jobs: usize,
    pub seed: u64,
    pub warmup_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveCkJob {
    pub lambda: f64,
    pub mu_a: f64,
    pub mu_b: f64,
    pub solver: SolverConfig,
    pub auto_escalate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFlowJob {
    pub timestamps: PathBuf,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeMemoryJob {
    pub rho: f64,
    pub epsilon: f64,
    pub m_max: Option<u64>,
    pub params: Option<ParamSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepJob {
    pub spec: SweepSpec,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvesJob {
    pub psi_b: Vec<f64>,
    pub psi_a: Vec<f64>,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", content = "args", rename_all = "kebab-case")]
pub enum Job {
    Simulate(SimulateJob),
    SolveCk(SolveCkJob),
    TestFlow(TestFlowJob),
    SizeMemory(SizeMemoryJob),
    Sweep(SweepJob),
    Curves(CurvesJob),
}

/// Result of a job: the JSON printed on stdout and, when files were
/// written, the run directory.
#[derive(Debug)]
pub struct Outcome {
    pub report: Value,
    pub dir: Option<PathBuf>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn finish(mut w: BufWriter<File>) -> Result<(), Error> {
    w.flush()?;
    Ok(())
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Simulate(_) => "simulate",
            Job::SolveCk(_) => "solve-ck",
            Job::TestFlow(_) => "test-flow",
            Job::SizeMemory(_) => "size-memory",
            Job::Sweep(_) => "sweep",
            Job::Curves(_) => "curves",
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Job::Simulate(j) => vec![j.seed],
            Job::Sweep(j) => j.spec.seeds.clone(),
            _ => Vec::new(),
        }
    }

    pub fn output_files(&self) -> Vec<String> {
        let names: &[&str] = match self {
            Job::Simulate(_) => &[
                "in_trace.txt",
                "out_trace.txt",
                "sojourns.txt",
                "occupancy.csv",
                "summary.csv",
                "summary.json",
            ],
            Job::SolveCk(_) => &["grid.csv", "summary.json"],
            Job::TestFlow(_) => &["verdict.json"],
            Job::SizeMemory(_) => &["memory.json"],
            Job::Sweep(_) => &["regions.csv", "summary.json"],
            Job::Curves(_) => &["curves.csv"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Whether the job writes a run directory even without `--out`.
    fn always_writes(&self) -> bool {
        !matches!(self, Job::TestFlow(_) | Job::SizeMemory(_))
    }

    /// Runs the job. Files go to `out`, or for file-producing jobs to the
    /// default content-addressed directory.
    pub fn execute(&self, out: Option<&Path>) -> Result<Outcome, Error> {
        let manifest = RunManifest::new(self.clone());
        let dir = match out {
            Some(d) => Some(d.to_path_buf()),
            None if self.always_writes() => Some(manifest.default_dir()?),
            None => None,
        };
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        let report = match self {
            Job::Simulate(j) => j.run(dir.as_deref().expect("simulate writes files"))?,
            Job::SolveCk(j) => j.run(dir.as_deref().expect("solve-ck writes files"))?,
            Job::TestFlow(j) => j.run(dir.as_deref())?,
            Job::SizeMemory(j) => j.run(dir.as_deref())?,
            Job::Sweep(j) => j.run(dir.as_deref().expect("sweep writes files"))?,
            Job::Curves(j) => j.run(dir.as_deref().expect("curves writes files"))?,
        };
        if let Some(d) = &dir {
            fs::write(d.join(MANIFEST_FILE), manifest.to_json()?)?;
        }
        Ok(Outcome { report, dir })
    }
}

impl SimulateJob {
    fn run(&self, dir: &Path) -> Result<Value, Error> {
        let p = self.params.validate()?;
        let o = run_simulation(&p, self.jobs, self.seed, self.warmup_fraction)?;
        let summary = SimSummary::from_output(&o)?;

        let mut w = create(dir, "in_trace.txt")?;
        write_timestamps(&mut w, &o.in_trace)?;
        finish(w)?;
        let mut w = create(dir, "out_trace.txt")?;
        write_timestamps(&mut w, &o.out_trace)?;
        finish(w)?;
        let mut w = create(dir, "sojourns.txt")?;
        write_timestamps(&mut w, &o.sojourns)?;
        finish(w)?;
        let mut w = create(dir, "occupancy.csv")?;
        write_occupancy_csv(&mut w, &o)?;
        finish(w)?;
        let mut w = create(dir, "summary.csv")?;
        write_summary_csv(&mut w, &summary)?;
        finish(w)?;
        let mut w = create(dir, "summary.json")?;
        write_json(&mut w, &summary)?;
        finish(w)?;

        Ok(serde_json::to_value(&summary)?)
    }
}

impl SolveCkJob {
    fn run(&self, dir: &Path) -> Result<Value, Error> {
        let p = NetworkParams::new(self.lambda, 1, self.mu_a, 1, self.mu_b)?;
        let g = if self.auto_escalate {
            solve_stationary_auto(&p, &self.solver)?
        } else {
            solve_stationary(&p, &self.solver)?
        };
        let rate = conditional_rate(&g, &p)?;
        let report = json!({
            "lambda": p.lambda(),
            "mu_a": p.mu_a(),
            "mu_b": p.mu_b(),
            "psi_a": p.psi_a(),
            "psi_b": p.psi_b(),
            "q_max": g.q_max,
            "sweeps": g.sweeps,
            "residual": g.residual,
            "mass_at_boundary": g.mass_at_boundary,
            "regions": conditional_regions(&g),
            "p_cond": rate,
            "delta_p_over_p": (p.lambda() - rate) / p.lambda(),
        });
        let mut w = create(dir, "grid.csv")?;
        write_grid_csv(&mut w, &g)?;
        finish(w)?;
        let mut w = create(dir, "summary.json")?;
        write_json(&mut w, &report)?;
        finish(w)?;
        Ok(report)
    }
}

impl TestFlowJob {
    fn run(&self, dir: Option<&Path>) -> Result<Value, Error> {
        let trace = read_timestamps(BufReader::new(File::open(&self.timestamps)?))?;
        let sample = extract_intervals(&trace)?;
        let verdict = classify_almost_poisson(&sample, self.rate)?.summary(sample.len(), self.rate);
        if let Some(d) = dir {
            let mut w = create(d, "verdict.json")?;
            write_json(&mut w, &verdict)?;
            finish(w)?;
        }
        Ok(serde_json::to_value(&verdict)?)
    }
}

impl SizeMemoryJob {
    fn run(&self, dir: Option<&Path>) -> Result<Value, Error> {
        let k_max = required_memory(self.rho, self.epsilon)?;
        let mut report = json!({
            "rho": self.rho,
            "epsilon": self.epsilon,
            "k_max": k_max,
        });
        if let Some(spec) = self.params {
            let p = spec.validate()?;
            let plan = match self.m_max {
                Some(m) => partition_memory(&p, self.rho, m)?,
                None => min_total_memory(&p, self.rho, self.epsilon)?,
            };
            report["plan"] = serde_json::to_value(plan)?;
        }
        if let Some(d) = dir {
            let mut w = create(d, "memory.json")?;
            write_json(&mut w, &report)?;
            finish(w)?;
        }
        Ok(report)
    }
}

impl SweepJob {
    fn run(&self, dir: &Path) -> Result<Value, Error> {
        self.spec.validate()?;
        let report = run_sweep_with_threads(&self.spec, self.threads);
        let mut w = create(dir, "regions.csv")?;
        write_region_csv(&mut w, &report)?;
        finish(w)?;
        let mut w = create(dir, "summary.json")?;
        write_json(&mut w, &report.summary)?;
        finish(w)?;
        Ok(serde_json::to_value(&report.summary)?)
    }
}

impl CurvesJob {
    fn run(&self, dir: &Path) -> Result<Value, Error> {
        let points = delta_curves(&self.psi_b, &self.psi_a, &self.solver)?;
        let mut w = create(dir, "curves.csv")?;
        write_curve_csv(&mut w, &points)?;
        finish(w)?;
        Ok(json!({ "points": points.len() }))
    }
}
