mod job;
mod manifest;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::json;

use fjsync::ck::{SolverConfig, SweepScheme, DEFAULT_Q_MAX};
use fjsync::des::DEFAULT_WARMUP_FRACTION;
use fjsync::experiments::{block_lambda, psi_grid, published_regions, Cell, Flow, FlowSelector, SweepSpec, DEFAULT_JOBS};
use fjsync::params::ParamConfig;
use fjsync::Error;

use job::{CurvesJob, Job, SimulateJob, SizeMemoryJob, SolveCkJob, SweepJob, TestFlowJob};
use manifest::RunManifest;

/// Fork-join network with a marked-pair synchronizer.
#[derive(Parser, Debug)]
#[command(name = "fjsync", version, about)]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Re-run the job recorded in a manifest file.
    #[arg(long, value_name = "FILE")]
    from_manifest: Option<PathBuf>,

    /// Output directory for --from-manifest.
    #[arg(long, requires = "from_manifest")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the network and write traces, occupancy and a summary.
    Simulate(SimulateArgs),
    /// Solve the stationary queue-length chain of a single-channel network.
    SolveCk(SolveCkArgs),
    /// Check whether a timestamp file is an almost-Poisson stream.
    TestFlow(TestFlowArgs),
    /// Size the synchronizer memory, optionally with the branch buffers.
    SizeMemory(SizeMemoryArgs),
    /// Simulate a grid of parameter cells and classify both flows.
    Sweep(SweepArgs),
    /// Relative conditional-rate shortfall over a load grid.
    Curves(CurvesArgs),
}

#[derive(Args, Debug, Default)]
struct ParamArgs {
    /// key=value file with lambda, n_a, n_b, mu_a, mu_b and optionally seed;
    /// flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    n_a: Option<u32>,
    #[arg(long)]
    mu_a: Option<f64>,
    #[arg(long)]
    n_b: Option<u32>,
    #[arg(long)]
    mu_b: Option<f64>,
}

impl ParamArgs {
    fn given(&self) -> bool {
        self.config.is_some()
            || self.lambda.is_some()
            || self.n_a.is_some()
            || self.mu_a.is_some()
            || self.n_b.is_some()
            || self.mu_b.is_some()
    }

    fn resolve(&self, seed: Option<u64>) -> Result<ParamConfig, Failure> {
        let base = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Failure::Domain(e.into()))?;
                ParamConfig::parse(&text).map_err(|e| Failure::Domain(e.into()))?
            }
            None => ParamConfig::default(),
        };
        Ok(base.overlay(&ParamConfig {
            lambda: self.lambda,
            n_a: self.n_a,
            n_b: self.n_b,
            mu_a: self.mu_a,
            mu_b: self.mu_b,
            seed,
        }))
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Number of external arrivals.
    #[arg(long, default_value_t = DEFAULT_JOBS)]
    jobs: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Share of the first arrivals excluded from the statistics.
    #[arg(long, default_value_t = DEFAULT_WARMUP_FRACTION)]
    warmup: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveCkArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    mu_a: f64,
    #[arg(long)]
    mu_b: f64,
    #[arg(long, default_value_t = DEFAULT_Q_MAX)]
    q_max: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Fail instead of doubling q_max when too much mass sits on the boundary.
    #[arg(long)]
    fixed_q_max: bool,
    #[arg(long, value_enum, default_value_t = Scheme::GaussSeidel)]
    scheme: Scheme,
    /// Over-relaxation factor for Gauss-Seidel sweeps.
    #[arg(long, default_value_t = 1.0)]
    relaxation: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scheme {
    GaussSeidel,
    Uniformized,
}

#[derive(Args, Debug)]
struct TestFlowArgs {
    /// One timestamp per line, non-decreasing.
    #[arg(long, value_name = "FILE")]
    timestamps: PathBuf,
    /// Rate of the hypothesized exponential interval law.
    #[arg(long)]
    rate: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SizeMemoryArgs {
    /// Mean synchronizer occupancy.
    #[arg(long, conflicts_with = "sim_output", required_unless_present = "sim_output")]
    rho: Option<f64>,
    /// Directory written by `simulate`; supplies rho and the network.
    #[arg(long, value_name = "DIR")]
    sim_output: Option<PathBuf>,
    #[arg(long)]
    epsilon: f64,
    /// Split this much shared memory instead of searching for the minimum.
    #[arg(long)]
    m_max: Option<u64>,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FlowArg {
    In,
    Out,
    Both,
}

impl From<FlowArg> for FlowSelector {
    fn from(f: FlowArg) -> Self {
        match f {
            FlowArg::In => FlowSelector::In,
            FlowArg::Out => FlowSelector::Out,
            FlowArg::Both => FlowSelector::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RegionArg {
    In,
    Out,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Arrival rate for every cell; by default it depends on the channel counts.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    n_a: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    n_b: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    psi_a: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    psi_b: Vec<f64>,
    /// Use the cells of the published region map for this flow instead of
    /// the explicit grid.
    #[arg(long, value_enum, conflicts_with_all = ["n_a", "n_b", "psi_a", "psi_b"])]
    region: Option<RegionArg>,
    /// Load step for --region.
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Channel counts used for unbounded ranges in --region.
    #[arg(long, value_delimiter = ',', default_value = "6,8,12")]
    open_channels: Vec<u32>,
    #[arg(long, default_value_t = DEFAULT_JOBS)]
    jobs: usize,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, value_enum, default_value_t = FlowArg::Both)]
    flow: FlowArg,
    #[arg(long, default_value_t = DEFAULT_WARMUP_FRACTION)]
    warmup: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CurvesArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.35,0.65,0.9")]
    psi_b: Vec<f64>,
    /// Step of the psi_a grid over (0, 1).
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long, default_value_t = DEFAULT_Q_MAX)]
    q_max: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure::Usage(message.into())
}

fn missing_seed(flag: &str) -> Failure {
    usage(format!("{flag} is required: stochastic commands never pick a seed on their own"))
}

fn resolve(cmd: Command) -> Result<(Job, Option<PathBuf>), Failure> {
    match cmd {
        Command::Simulate(a) => {
            let cfg = a.params.resolve(a.seed)?;
            let params = cfg.spec().map_err(|key| usage(format!("missing network parameter {key}")))?;
            let seed = cfg.seed.ok_or_else(|| missing_seed("--seed"))?;
            let job = SimulateJob {
                params,
                jobs: a.jobs,
                seed,
                warmup_fraction: a.warmup,
            };
            Ok((Job::Simulate(job), a.out))
        }
        Command::SolveCk(a) => {
            let solver = SolverConfig {
                q_max: a.q_max,
                tol: a.tol,
                relaxation: a.relaxation,
                scheme: match a.scheme {
                    Scheme::GaussSeidel => SweepScheme::GaussSeidel,
                    Scheme::Uniformized => SweepScheme::Uniformized,
                },
                ..SolverConfig::default()
            };
            let job = SolveCkJob {
                lambda: a.lambda,
                mu_a: a.mu_a,
                mu_b: a.mu_b,
                solver,
                auto_escalate: !a.fixed_q_max,
            };
            Ok((Job::SolveCk(job), a.out))
        }
        Command::TestFlow(a) => Ok((
            Job::TestFlow(TestFlowJob {
                timestamps: a.timestamps,
                rate: a.rate,
            }),
            a.out,
        )),
        Command::SizeMemory(a) => {
            let (rho, sim_params) = match (&a.rho, &a.sim_output) {
                (Some(rho), _) => (*rho, None),
                (None, Some(dir)) => {
                    let summary: serde_json::Value =
                        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).map_err(Error::from)?)
                            .map_err(Error::from)?;
                    let rho = summary["rho"]
                        .as_f64()
                        .ok_or_else(|| usage(format!("{} has no numeric rho", dir.join("summary.json").display())))?;
                    let params = match RunManifest::read(&dir.join(manifest::MANIFEST_FILE))?.job {
                        Job::Simulate(s) => Some(s.params),
                        _ => None,
                    };
                    (rho, params)
                }
                (None, None) => return Err(usage("either --rho or --sim-output is required")),
            };
            let params = if a.params.given() {
                let cfg = a.params.resolve(None)?;
                let base = sim_params.map(|s| ParamConfig {
                    lambda: Some(s.lambda),
                    n_a: Some(s.n_a),
                    n_b: Some(s.n_b),
                    mu_a: Some(s.mu_a),
                    mu_b: Some(s.mu_b),
                    seed: None,
                });
                let merged = base.unwrap_or_default().overlay(&cfg);
                Some(merged.spec().map_err(|key| usage(format!("missing network parameter {key}")))?)
            } else {
                sim_params
            };
            if a.m_max.is_some() && params.is_none() {
                return Err(usage("--m-max needs the network parameters (flags, --config or --sim-output)"));
            }
            Ok((
                Job::SizeMemory(SizeMemoryJob {
                    rho,
                    epsilon: a.epsilon,
                    m_max: a.m_max,
                    params,
                }),
                a.out,
            ))
        }
        Command::Sweep(a) => {
            if a.seeds.is_empty() {
                return Err(missing_seed("--seeds"));
            }
            let cells = match a.region {
                Some(r) => {
                    let flow = match r {
                        RegionArg::In => Flow::In,
                        RegionArg::Out => Flow::Out,
                    };
                    region_cells(flow, a.step, a.lambda, &a.open_channels)
                }
                None => {
                    if a.n_a.is_empty() || a.n_b.is_empty() || a.psi_a.is_empty() || a.psi_b.is_empty() {
                        return Err(usage("sweep needs --n-a, --n-b, --psi-a and --psi-b, or --region"));
                    }
                    let mut cells = Vec::new();
                    for &n_a in &a.n_a {
                        for &n_b in &a.n_b {
                            for &psi_a in &a.psi_a {
                                for &psi_b in &a.psi_b {
                                    cells.push(Cell {
                                        lambda: a.lambda.unwrap_or_else(|| block_lambda(n_a, n_b)),
                                        n_a,
                                        n_b,
                                        psi_a,
                                        psi_b,
                                    });
                                }
                            }
                        }
                    }
                    cells
                }
            };
            let spec = SweepSpec {
                cells,
                jobs: a.jobs,
                seeds: a.seeds,
                flow: a.flow.into(),
                warmup_fraction: a.warmup,
            };
            Ok((
                Job::Sweep(SweepJob {
                    spec,
                    threads: a.threads,
                }),
                a.out,
            ))
        }
        Command::Curves(a) => {
            let solver = SolverConfig {
                q_max: a.q_max,
                tol: a.tol,
                ..SolverConfig::default()
            };
            Ok((
                Job::Curves(CurvesJob {
                    psi_b: a.psi_b,
                    psi_a: psi_grid(a.step),
                    solver,
                }),
                a.out,
            ))
        }
    }
}

/// Distinct cells of the published region boxes for `flow`, in box order.
fn region_cells(flow: Flow, step: f64, lambda: Option<f64>, open_channels: &[u32]) -> Vec<Cell> {
    let mut cells: Vec<Cell> = Vec::new();
    for b in published_regions(flow) {
        for mut c in b.grid(step, 0.0, open_channels) {
            c.lambda = lambda.unwrap_or_else(|| block_lambda(c.n_a, c.n_b));
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
    }
    cells
}

fn run(cli: Cli) -> Result<serde_json::Value, Failure> {
    let (job, out) = match (cli.command, cli.from_manifest) {
        (Some(cmd), None) => resolve(cmd)?,
        (None, Some(path)) => (RunManifest::read(&path)?.job, cli.out),
        (None, None) => return Err(usage("a subcommand or --from-manifest is required")),
        (Some(_), Some(_)) => return Err(usage("--from-manifest cannot be combined with a subcommand")),
    };
    let outcome = job.execute(out.as_deref())?;
    let mut report = json!({ "subcommand": job.name(), "result": outcome.report });
    if let Some(dir) = outcome.dir {
        report["out_dir"] = json!(dir.display().to_string());
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(message)) => {
            let mut cmd = Cli::command();
            cmd.error(clap::error::ErrorKind::MissingRequiredArgument, message).exit()
        }
        Err(Failure::Domain(e)) => {
            let body = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::from(1)
        }
    }
}
