//! Parameter sweeps over the network and the derived reports: flow verdict
//! maps, conditional-rate curves and the check of the Poisson occupancy law
//! against simulated occupancy.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::OccupancyModel;
use crate::ck::{delta_p_relative, solve_stationary_auto, SolverConfig};
use crate::des::{extract_intervals, mean_sojourn, occupancy_at, run_simulation, time_average_occupancy, SimOutput};
use crate::error::{Error, ParamError, SolveError};
use crate::params::NetworkParams;
use crate::rng::derive_seed;
use crate::stats::{chi_square_critical, classify_almost_poisson, pearson_statistic, ALPHA};

pub const DEFAULT_JOBS: usize = 100_000;
pub const DEFAULT_PSI_STEP: f64 = 0.05;

/// Which synchronizer flow a row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flow {
    /// First partners arriving at the synchronizer.
    In,
    /// Second partners, i.e. pair departures.
    Out,
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flow::In => "in",
            Flow::Out => "out",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowSelector {
    In,
    Out,
    Both,
}

impl FlowSelector {
    pub fn flows(self) -> &'static [Flow] {
        match self {
            FlowSelector::In => &[Flow::In],
            FlowSelector::Out => &[Flow::Out],
            FlowSelector::Both => &[Flow::In, Flow::Out],
        }
    }
}

/// One parameter point of a sweep, given by loads rather than rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lambda: f64,
    pub n_a: u32,
    pub n_b: u32,
    pub psi_a: f64,
    pub psi_b: f64,
}

impl Cell {
    pub fn params(&self) -> Result<NetworkParams, ParamError> {
        NetworkParams::from_loads(self.lambda, self.n_a, self.psi_a, self.n_b, self.psi_b)
    }

    /// Canonical text key, also used to derive the per-cell seed.
    pub fn key(&self) -> String {
        format!(
            "lambda={};n_a={};n_b={};psi_a={};psi_b={}",
            self.lambda, self.n_a, self.n_b, self.psi_a, self.psi_b
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub cells: Vec<Cell>,
    pub jobs: usize,
    pub seeds: Vec<u64>,
    pub flow: FlowSelector,
    pub warmup_fraction: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ParamError> {
        for cell in &self.cells {
            cell.params()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub cell: Cell,
    pub seed: u64,
    pub flow: Flow,
    pub chi2: Option<f64>,
    pub st: Option<f64>,
    pub almost_poisson: bool,
    /// Whether the published region map for this flow contains the cell.
    pub in_region: bool,
    pub error: Option<String>,
}

impl RegionRow {
    pub fn verdict(&self) -> &'static str {
        match (&self.error, self.almost_poisson) {
            (Some(_), _) => "error",
            (None, true) => "almost_poisson",
            (None, false) => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: usize,
    pub accepted: usize,
    pub errors: usize,
    pub fraction_accepted: f64,
    /// Share of rows whose verdict agrees with the region map.
    pub fraction_matching_regions: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub rows: Vec<RegionRow>,
    pub summary: SweepSummary,
}

impl RegionReport {
    fn from_rows(rows: Vec<RegionRow>) -> Self {
        let n = rows.len();
        let accepted = rows.iter().filter(|r| r.almost_poisson).count();
        let errors = rows.iter().filter(|r| r.error.is_some()).count();
        let matching = rows
            .iter()
            .filter(|r| r.error.is_none() && r.almost_poisson == r.in_region)
            .count();
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        RegionReport {
            summary: SweepSummary {
                rows: n,
                accepted,
                errors,
                fraction_accepted: frac(accepted),
                fraction_matching_regions: frac(matching),
            },
            rows,
        }
    }

    /// Share of error-free rows for `flow` that were accepted.
    pub fn acceptance_fraction(&self, flow: Flow) -> f64 {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.flow == flow && r.error.is_none()).collect();
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter().filter(|r| r.almost_poisson).count() as f64 / rows.len() as f64
    }
}

fn classify_trace(trace: &[f64], rate: f64) -> Result<(f64, f64, bool), Error> {
    let sample = extract_intervals(trace)?;
    let v = classify_almost_poisson(&sample, rate)?;
    Ok((v.chi.statistic, v.student.statistic, v.almost_poisson))
}

fn run_cell(cell: &Cell, seed: u64, spec: &SweepSpec) -> Vec<RegionRow> {
    let flows = spec.flow.flows();
    let outcome = cell
        .params()
        .map_err(Error::from)
        .and_then(|p| Ok(run_simulation(&p, spec.jobs, derive_seed(seed, &cell.key()), spec.warmup_fraction)?));
    flows
        .iter()
        .map(|&flow| {
            let classified = outcome.as_ref().map_err(|e| e.to_string()).and_then(|o| {
                let trace = match flow {
                    Flow::In => &o.in_trace,
                    Flow::Out => &o.out_trace,
                };
                classify_trace(trace, cell.lambda).map_err(|e| e.to_string())
            });
            let in_region = in_published_region(flow, cell);
            match classified {
                Ok((chi2, st, ok)) => RegionRow {
                    cell: *cell,
                    seed,
                    flow,
                    chi2: Some(chi2),
                    st: Some(st),
                    almost_poisson: ok,
                    in_region,
                    error: None,
                },
                Err(msg) => RegionRow {
                    cell: *cell,
                    seed,
                    flow,
                    chi2: None,
                    st: None,
                    almost_poisson: false,
                    in_region,
                    error: Some(msg),
                },
            }
        })
        .collect()
}

/// Simulates every (cell, seed) and classifies the selected flows against
/// rate `lambda`. Rows come out ordered by cell, then seed, then flow.
pub fn run_sweep(spec: &SweepSpec) -> RegionReport {
    let jobs: Vec<(&Cell, u64)> = spec
        .cells
        .iter()
        .flat_map(|c| spec.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let rows: Vec<RegionRow> = jobs.par_iter().flat_map_iter(|(c, s)| run_cell(c, *s, spec)).collect();
    RegionReport::from_rows(rows)
}

/// [`run_sweep`] on a dedicated pool of `threads` workers.
pub fn run_sweep_with_threads(spec: &SweepSpec, threads: usize) -> RegionReport {
    match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(pool) => pool.install(|| run_sweep(spec)),
        Err(_) => run_sweep(spec),
    }
}

/// Load interval with explicit end-point types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

// grid points are multiples of 0.05 computed in floating point
const EDGE_EPS: f64 = 1e-9;

impl LoadInterval {
    pub const fn new(lo: f64, lo_closed: bool, hi: f64, hi_closed: bool) -> Self {
        LoadInterval {
            lo,
            hi,
            lo_closed,
            hi_closed,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo - EDGE_EPS } else { x > self.lo + EDGE_EPS };
        let below = if self.hi_closed { x <= self.hi + EDGE_EPS } else { x < self.hi - EDGE_EPS };
        above && below
    }
}

/// Box of network parameters from a published region map: channel ranges,
/// load unions per branch, and an optional minimum load gap `|psi_a - psi_b|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBox {
    pub n_a: (u32, Option<u32>),
    pub n_b: (u32, Option<u32>),
    pub psi_a: Vec<LoadInterval>,
    pub psi_b: Vec<LoadInterval>,
    pub min_gap: Option<f64>,
}

fn in_channel_range(n: u32, range: (u32, Option<u32>)) -> bool {
    n >= range.0 && range.1.is_none_or(|hi| n <= hi)
}

impl RegionBox {
    pub fn contains(&self, n_a: u32, n_b: u32, psi_a: f64, psi_b: f64) -> bool {
        in_channel_range(n_a, self.n_a)
            && in_channel_range(n_b, self.n_b)
            && self.psi_a.iter().any(|i| i.contains(psi_a))
            && self.psi_b.iter().any(|i| i.contains(psi_b))
            && self.min_gap.is_none_or(|g| (psi_a - psi_b).abs() >= g - EDGE_EPS)
    }

    /// Cells on a `step` load grid inside the box. Unbounded channel ranges
    /// are sampled at `open_channels`.
    pub fn grid(&self, step: f64, lambda: f64, open_channels: &[u32]) -> Vec<Cell> {
        let channels = |range: (u32, Option<u32>)| -> Vec<u32> {
            match range.1 {
                Some(hi) => (range.0..=hi).collect(),
                None => open_channels.iter().copied().filter(|&n| n >= range.0).collect(),
            }
        };
        let points = psi_grid(step);
        let mut cells = Vec::new();
        for n_a in channels(self.n_a) {
            for n_b in channels(self.n_b) {
                for &psi_a in &points {
                    for &psi_b in &points {
                        if self.contains(n_a, n_b, psi_a, psi_b) {
                            cells.push(Cell {
                                lambda,
                                n_a,
                                n_b,
                                psi_a,
                                psi_b,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

/// Interior points `k * step` of (0, 1).
pub fn psi_grid(step: f64) -> Vec<f64> {
    let count = (1.0 / step).round() as usize;
    (1..count).map(|k| k as f64 / count as f64).collect()
}

const OPEN: bool = false;
const CLOSED: bool = true;

fn low_or_high() -> Vec<LoadInterval> {
    vec![
        LoadInterval::new(0.0, OPEN, 0.2, CLOSED),
        LoadInterval::new(0.75, CLOSED, 1.0, OPEN),
    ]
}

fn low() -> Vec<LoadInterval> {
    vec![LoadInterval::new(0.0, OPEN, 0.2, CLOSED)]
}

fn up_to(hi: f64) -> Vec<LoadInterval> {
    vec![LoadInterval::new(0.0, OPEN, hi, CLOSED)]
}

fn whole() -> Vec<LoadInterval> {
    vec![LoadInterval::new(0.0, OPEN, 1.0, OPEN)]
}

/// Published parameter regions where the given flow is almost Poisson.
pub fn published_regions(flow: Flow) -> Vec<RegionBox> {
    let gap = match flow {
        Flow::In => None,
        Flow::Out => Some(0.1),
    };
    let small = (1, Some(2));
    let mid = (3, Some(5));
    let large = (6, None);
    vec![
        RegionBox {
            n_a: small,
            n_b: small,
            psi_a: low_or_high(),
            psi_b: low(),
            min_gap: gap,
        },
        RegionBox {
            n_a: small,
            n_b: small,
            psi_a: low(),
            psi_b: low_or_high(),
            min_gap: gap,
        },
        RegionBox {
            n_a: mid,
            n_b: mid,
            psi_a: up_to(0.75),
            psi_b: whole(),
            min_gap: None,
        },
        RegionBox {
            n_a: mid,
            n_b: mid,
            psi_a: whole(),
            psi_b: up_to(0.75),
            min_gap: None,
        },
        RegionBox {
            n_a: large,
            n_b: large,
            psi_a: whole(),
            psi_b: whole(),
            min_gap: None,
        },
    ]
}

pub fn in_published_region(flow: Flow, cell: &Cell) -> bool {
    published_regions(flow)
        .iter()
        .any(|b| b.contains(cell.n_a, cell.n_b, cell.psi_a, cell.psi_b))
}

/// Arrival rate used for a block of channel counts.
pub fn block_lambda(n_a: u32, n_b: u32) -> f64 {
    match n_a.max(n_b) {
        0..=2 => 0.3,
        3..=5 => 1.5,
        _ => 2.0,
    }
}

/// A reference cell with its published criterion values for both flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceCell {
    pub cell: Cell,
    pub chi2_in: f64,
    pub st_in: f64,
    pub chi2_out: f64,
    pub st_out: f64,
}

impl ReferenceCell {
    pub fn accepted(&self, flow: Flow) -> bool {
        use crate::stats::{CHI2_THRESHOLD, STUDENT_THRESHOLD};
        let (chi2, st) = match flow {
            Flow::In => (self.chi2_in, self.st_in),
            Flow::Out => (self.chi2_out, self.st_out),
        };
        chi2 <= CHI2_THRESHOLD && st <= STUDENT_THRESHOLD
    }
}

const fn reference(
    lambda: f64,
    n_a: u32,
    n_b: u32,
    psi_a: f64,
    psi_b: f64,
    values: [f64; 4],
) -> ReferenceCell {
    ReferenceCell {
        cell: Cell {
            lambda,
            n_a,
            n_b,
            psi_a,
            psi_b,
        },
        chi2_in: values[0],
        st_in: values[1],
        chi2_out: values[2],
        st_out: values[3],
    }
}

/// Reference cells with published chi-square and Student values
/// (in-flow chi2, in-flow St, out-flow chi2, out-flow St).
pub const REFERENCE_CELLS: [ReferenceCell; 20] = [
    reference(0.3, 1, 1, 0.75, 0.75, [167.0, 1.86, 192.0, 0.46]),
    reference(0.3, 1, 1, 0.75, 0.5, [130.0, 0.53, 118.0, 2.32]),
    reference(0.3, 1, 1, 0.75, 0.25, [61.0, 2.02, 56.3, 2.08]),
    reference(0.3, 1, 1, 0.75, 0.2, [46.0, 1.89, 43.3, 2.12]),
    reference(0.3, 1, 1, 0.1, 0.2, [35.0, 2.09, 49.2, 1.83]),
    reference(0.3, 1, 1, 0.1, 0.1, [46.6, 1.80, 55.4, 1.98]),
    reference(0.3, 1, 1, 0.375, 0.375, [110.0, 2.36, 212.3, 1.5]),
    reference(1.5, 3, 5, 0.83, 0.3, [30.0, 0.30, 37.82, 0.56]),
    reference(1.5, 3, 5, 0.91, 0.6, [44.2, 1.57, 31.33, 2.20]),
    reference(1.5, 3, 5, 0.83, 0.75, [51.9, 3.42, 60.02, 3.26]),
    reference(1.5, 3, 5, 0.83, 0.83, [54.5, 3.04, 74.13, 3.53]),
    reference(1.5, 3, 5, 0.625, 0.6, [45.0, 1.38, 48.47, 2.17]),
    reference(1.5, 3, 5, 0.5, 0.5, [42.3, 1.07, 23.07, 2.17]),
    reference(1.5, 3, 5, 0.25, 0.25, [30.0, 1.68, 19.17, 0.45]),
    reference(2.0, 8, 8, 0.5, 0.36, [33.3, 0.28, 33.56, 0.28]),
    reference(2.0, 8, 8, 0.83, 0.625, [31.75, 2.09, 24.07, 2.07]),
    reference(2.0, 8, 8, 0.93, 0.71, [35.15, 1.95, 28.20, 1.92]),
    reference(2.0, 8, 8, 0.83, 0.83, [25.4, 1.89, 45.39, 2.05]),
    reference(2.0, 8, 8, 0.9, 0.93, [32.7, 2.20, 48.26, 0.65]),
    reference(2.0, 8, 8, 0.42, 0.83, [30.5, 0.20, 38.78, 2.17]),
];

/// One point of a conditional-rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub psi_a: f64,
    pub psi_b: f64,
    pub delta_p_over_p: f64,
    pub q_max: usize,
}

/// Relative conditional-rate shortfall on a `psi_b x psi_a` grid of
/// single-channel networks with `lambda = 1`, ordered by `psi_b` then `psi_a`.
pub fn delta_curves(psi_b_list: &[f64], psi_a_grid: &[f64], cfg: &SolverConfig) -> Result<Vec<CurvePoint>, SolveError> {
    let points: Vec<(f64, f64)> = psi_b_list
        .iter()
        .flat_map(|&b| psi_a_grid.iter().map(move |&a| (b, a)))
        .collect();
    points
        .par_iter()
        .map(|&(psi_b, psi_a)| {
            let p = NetworkParams::from_loads(1.0, 1, psi_a, 1, psi_b)?;
            let g = solve_stationary_auto(&p, cfg)?;
            Ok(CurvePoint {
                psi_a,
                psi_b,
                delta_p_over_p: delta_p_relative(&g, &p)?,
                q_max: g.q_max,
            })
        })
        .collect()
}

/// Outcome of comparing simulated occupancy with Poisson(lambda * T).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyLawRow {
    pub seed: u64,
    pub mean_sojourn: f64,
    pub rho: f64,
    pub time_average: f64,
    /// `|time_average - rho| / rho`.
    pub little_rel_err: f64,
    pub snapshot_spacing: f64,
    pub snapshots: usize,
    pub chi2: f64,
    pub dof: usize,
    pub critical: f64,
    pub accepted: bool,
    /// Standard error of the snapshot mean.
    pub mean_std_err: f64,
    /// `time_average >= rho - 3 * mean_std_err`.
    pub lower_bound_holds: bool,
    pub zero_mass: f64,
}

/// Smallest lag `d` with `E[(T - d)^+] <= share * E[T]` over the sojourn
/// sample. The occupancy of an infinite-server station decorrelates on
/// this scale, so snapshots this far apart are close to independent.
pub fn decorrelation_lag(sojourns: &[f64], share: f64) -> f64 {
    if sojourns.is_empty() {
        return 0.0;
    }
    let mut sorted = sojourns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let total: f64 = sorted.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let target = share * total;
    // excess(d) = sum over samples above d of (t - d); scan the sorted tail
    let mut tail_sum = 0.0;
    let mut tail_count = 0.0;
    for i in (0..sorted.len()).rev() {
        let t = sorted[i];
        let next_lower = if i > 0 { sorted[i - 1] } else { 0.0 };
        tail_sum += t;
        tail_count += 1.0;
        // on [next_lower, t] the excess is tail_sum - tail_count * d
        let excess_at_lower = tail_sum - tail_count * next_lower;
        if excess_at_lower > target {
            let d = (tail_sum - target) / tail_count;
            return d.max(next_lower);
        }
    }
    let _ = n;
    0.0
}

/// Bins for the Poisson fit: consecutive `k` values merged left to right
/// until each bin expects at least `min_expected` snapshots; the last bin
/// is open-ended.
fn pooled_bins(model: &OccupancyModel, n: f64, max_k: usize, min_expected: f64) -> Vec<(usize, Option<usize>)> {
    let mut bins = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for k in 0..=max_k {
        acc += n * model.pmf(k as u64);
        if acc >= min_expected {
            bins.push((start, Some(k)));
            start = k + 1;
            acc = 0.0;
        }
    }
    // open tail from `start`, merged into the previous bin if too small
    let tail_expected = n * model.tail(start as u64) + acc;
    if tail_expected >= min_expected || bins.is_empty() {
        bins.push((start, None));
    } else if let Some(last) = bins.last_mut() {
        last.1 = None;
    }
    bins
}

pub fn occupancy_law_row(o: &SimOutput, seed: u64) -> Result<OccupancyLawRow, Error> {
    let t_bar = mean_sojourn(o)?;
    let model = OccupancyModel::from_sojourn(o.lambda, t_bar)?;
    let rho = model.rho();
    let time_average = time_average_occupancy(o)?;
    let spacing = decorrelation_lag(&o.sojourns, 0.01).max(f64::MIN_POSITIVE);

    let mut snaps: Vec<usize> = Vec::new();
    let mut t = o.window_start + spacing;
    while t <= o.last_arrival {
        snaps.push(occupancy_at(o, t));
        t += spacing;
    }
    let n = snaps.len() as f64;
    let max_k = snaps.iter().copied().max().unwrap_or(0);
    let bins = pooled_bins(&model, n, max_k, 5.0);
    let mut observed = vec![0.0; bins.len()];
    for &k in &snaps {
        let idx = bins.iter().position(|&(lo, hi)| k >= lo && hi.is_none_or(|h| k <= h)).expect("bins cover every k");
        observed[idx] += 1.0;
    }
    let expected: Vec<f64> = bins
        .iter()
        .map(|&(lo, hi)| match hi {
            Some(h) => (lo..=h).map(|k| model.pmf(k as u64)).sum::<f64>() * n,
            None => {
                let below: f64 = (0..lo).map(|k| model.pmf(k as u64)).sum();
                (1.0 - below).max(0.0) * n
            }
        })
        .collect();
    // one parameter (rho) is estimated from the same run
    let dof = bins.len().saturating_sub(2);
    let (chi2, critical, accepted) = if dof == 0 || n == 0.0 {
        (0.0, f64::INFINITY, true)
    } else {
        let chi2 = pearson_statistic(&observed, &expected);
        let critical = chi_square_critical(dof, ALPHA);
        (chi2, critical, chi2 <= critical)
    };

    let mean_snap = snaps.iter().sum::<usize>() as f64 / n.max(1.0);
    let var = snaps.iter().map(|&k| (k as f64 - mean_snap).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let mean_std_err = (var / n.max(1.0)).sqrt();
    let zero_mass = o.occupancy_time.first().copied().unwrap_or(0.0) / o.total_time;
    Ok(OccupancyLawRow {
        seed,
        mean_sojourn: t_bar,
        rho,
        time_average,
        little_rel_err: if rho > 0.0 { (time_average - rho).abs() / rho } else { time_average },
        snapshot_spacing: spacing,
        snapshots: snaps.len(),
        chi2,
        dof,
        critical,
        accepted,
        mean_std_err,
        lower_bound_holds: time_average >= rho - 3.0 * mean_std_err,
        zero_mass,
    })
}

/// Simulates `p` once per seed and tests the occupancy against the Poisson
/// law with `rho = lambda * mean sojourn`.
pub fn validate_occupancy_law(
    p: &NetworkParams,
    jobs: usize,
    seeds: &[u64],
    warmup_fraction: f64,
) -> Result<Vec<OccupancyLawRow>, Error> {
    seeds
        .par_iter()
        .map(|&seed| {
            let o = run_simulation(p, jobs, seed, warmup_fraction)?;
            occupancy_law_row(&o, seed)
        })
        .collect()
}
