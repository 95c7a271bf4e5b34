//! Event-driven simulation of the fork-join network.
//!
//! Each external arrival is forked into two copies that enter branch `a` and
//! branch `b`. A branch is an `N`-channel FIFO station; a copy finishing
//! service goes to the synchronizer, which stores the first partner of a job
//! and releases the pair the instant the second partner shows up.
//!
//! Service times are drawn when a copy enters service. Statistics cover the
//! jobs after the warmup prefix; the run continues after the last arrival
//! until every pair has left the synchronizer.

mod event;
mod output;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

pub use event::{Event, EventKind};
pub use output::{
    empirical_rate, extract_intervals, mean_sojourn, occupancy_at, occupancy_distribution, time_average_occupancy,
    SimOutput,
};

use crate::error::SimError;
use crate::params::{Branch, NetworkParams};
use crate::rng::{labels, RngStream};

/// Warmup share discarded when the caller does not choose one.
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.1;

/// Source of inter-arrival and service times.
pub trait JobTimes {
    fn next_interarrival(&mut self) -> Result<f64, SimError>;
    fn service_time(&mut self, branch: Branch) -> Result<f64, SimError>;
}

/// Exponential times drawn from three labelled streams of one seed.
#[derive(Debug)]
pub struct ExponentialTimes {
    arrivals: RngStream,
    service_a: RngStream,
    service_b: RngStream,
    lambda: f64,
    mu_a: f64,
    mu_b: f64,
}

impl ExponentialTimes {
    pub fn new(p: &NetworkParams, seed: u64) -> Self {
        ExponentialTimes {
            arrivals: RngStream::new(seed, labels::ARRIVALS),
            service_a: RngStream::new(seed, labels::SERVICE_A),
            service_b: RngStream::new(seed, labels::SERVICE_B),
            lambda: p.lambda(),
            mu_a: p.mu_a(),
            mu_b: p.mu_b(),
        }
    }
}

impl JobTimes for ExponentialTimes {
    fn next_interarrival(&mut self) -> Result<f64, SimError> {
        Ok(self.arrivals.standard_exponential() / self.lambda)
    }

    fn service_time(&mut self, branch: Branch) -> Result<f64, SimError> {
        Ok(match branch {
            Branch::A => self.service_a.standard_exponential() / self.mu_a,
            Branch::B => self.service_b.standard_exponential() / self.mu_b,
        })
    }
}

/// Fixed times, consumed in order. Service times are listed per branch in
/// the order copies enter service.
#[derive(Debug, Clone, Default)]
pub struct ScriptedTimes {
    interarrivals: VecDeque<f64>,
    service_a: VecDeque<f64>,
    service_b: VecDeque<f64>,
}

impl ScriptedTimes {
    pub fn new(interarrivals: &[f64], service_a: &[f64], service_b: &[f64]) -> Self {
        ScriptedTimes {
            interarrivals: interarrivals.iter().copied().collect(),
            service_a: service_a.iter().copied().collect(),
            service_b: service_b.iter().copied().collect(),
        }
    }
}

impl JobTimes for ScriptedTimes {
    fn next_interarrival(&mut self) -> Result<f64, SimError> {
        self.interarrivals.pop_front().ok_or(SimError::ScriptExhausted("interarrival"))
    }

    fn service_time(&mut self, branch: Branch) -> Result<f64, SimError> {
        match branch {
            Branch::A => self.service_a.pop_front().ok_or(SimError::ScriptExhausted("service-a")),
            Branch::B => self.service_b.pop_front().ok_or(SimError::ScriptExhausted("service-b")),
        }
    }
}

#[derive(Debug)]
struct BranchState {
    channels: u32,
    busy: u32,
    fifo: VecDeque<u64>,
}

impl BranchState {
    fn new(channels: u32) -> Self {
        BranchState {
            channels,
            busy: 0,
            fifo: VecDeque::new(),
        }
    }
}

/// What the synchronizer did with an incoming copy.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Pairing {
    Stored,
    Released { first_time: f64 },
}

/// Ideal synchronizer memory: job id -> (branch, arrival time) of the
/// first partner. Unbounded.
#[derive(Debug, Default)]
struct Synchronizer {
    waiting: HashMap<u64, (Branch, f64)>,
}

impl Synchronizer {
    fn occupancy(&self) -> usize {
        self.waiting.len()
    }

    fn accept(&mut self, job_id: u64, branch: Branch, time: f64) -> Pairing {
        match self.waiting.remove(&job_id) {
            Some((first_branch, first_time)) => {
                assert_ne!(first_branch, branch, "job {job_id} reached the synchronizer twice from branch {branch}");
                Pairing::Released { first_time }
            }
            None => {
                self.waiting.insert(job_id, (branch, time));
                Pairing::Stored
            }
        }
    }
}

struct Engine<'t, T: JobTimes> {
    times: &'t mut T,
    events: BinaryHeap<Reverse<Event>>,
    branches: [BranchState; 2],
    sync: Synchronizer,
    jobs: u64,
    warmup: u64,
    arrived: u64,
    // occupancy bookkeeping, active once the first counted job has arrived
    observing: bool,
    last_change: f64,
    out: SimOutput,
}

fn branch_index(branch: Branch) -> usize {
    match branch {
        Branch::A => 0,
        Branch::B => 1,
    }
}

impl<'t, T: JobTimes> Engine<'t, T> {
    fn schedule(&mut self, time: f64, kind: EventKind, job_id: u64) {
        self.events.push(Reverse(Event { time, kind, job_id }));
    }

    fn start_service(&mut self, branch: Branch, job_id: u64, now: f64) -> Result<(), SimError> {
        let service = self.times.service_time(branch)?;
        self.schedule(now + service, EventKind::completion(branch), job_id);
        Ok(())
    }

    fn schedule_next_arrival(&mut self, now: f64) -> Result<(), SimError> {
        if self.arrived < self.jobs {
            let gap = self.times.next_interarrival()?;
            let id = self.arrived;
            self.arrived += 1;
            self.schedule(now + gap, EventKind::ExternalArrival, id);
        }
        Ok(())
    }

    fn record_occupancy_change(&mut self, now: f64) {
        if self.observing {
            let k = self.sync.occupancy();
            if self.out.occupancy_time.len() <= k {
                self.out.occupancy_time.resize(k + 1, 0.0);
            }
            self.out.occupancy_time[k] += now - self.last_change;
            self.last_change = now;
        }
    }

    fn on_arrival(&mut self, job_id: u64, now: f64) -> Result<(), SimError> {
        self.out.last_arrival = now;
        if job_id == self.warmup {
            self.observing = true;
            self.last_change = now;
            self.out.window_start = now;
        }
        for branch in [Branch::A, Branch::B] {
            let state = &mut self.branches[branch_index(branch)];
            if state.busy < state.channels {
                state.busy += 1;
                self.start_service(branch, job_id, now)?;
            } else {
                state.fifo.push_back(job_id);
            }
        }
        self.schedule_next_arrival(now)
    }

    fn on_completion(&mut self, branch: Branch, job_id: u64, now: f64) -> Result<(), SimError> {
        let state = &mut self.branches[branch_index(branch)];
        match state.fifo.pop_front() {
            Some(next) => self.start_service(branch, next, now)?,
            None => state.busy -= 1,
        }

        // occupancy is piecewise constant; close the interval before changing it
        self.record_occupancy_change(now);
        let counted = job_id >= self.warmup;
        match self.sync.accept(job_id, branch, now) {
            Pairing::Stored => {
                if counted {
                    self.out.in_trace.push(now);
                    if branch == Branch::A {
                        self.out.first_from_a += 1;
                    }
                }
            }
            Pairing::Released { first_time } => {
                if counted {
                    self.out.out_trace.push(now);
                    self.out.sojourns.push(now - first_time);
                    self.out.jobs_completed += 1;
                }
            }
        }
        Ok(())
    }

    fn run(mut self) -> Result<SimOutput, SimError> {
        self.schedule_next_arrival(0.0)?;
        while let Some(Reverse(event)) = self.events.pop() {
            match event.kind {
                EventKind::ExternalArrival => self.on_arrival(event.job_id, event.time)?,
                EventKind::ServiceCompletionA => self.on_completion(Branch::A, event.job_id, event.time)?,
                EventKind::ServiceCompletionB => self.on_completion(Branch::B, event.job_id, event.time)?,
            }
        }
        assert_eq!(self.sync.occupancy(), 0, "pairs left in the synchronizer after drain");
        for state in &self.branches {
            assert!(state.busy == 0 && state.fifo.is_empty(), "branch not drained");
        }
        self.out.total_time = self.last_change - self.out.window_start;
        Ok(self.out)
    }
}

/// Simulates `jobs` external arrivals with times taken from `times`.
pub fn run_with_times<T: JobTimes>(
    p: &NetworkParams,
    jobs: usize,
    warmup_fraction: f64,
    times: &mut T,
) -> Result<SimOutput, SimError> {
    if jobs == 0 {
        return Err(SimError::NoJobs);
    }
    if !(0.0..1.0).contains(&warmup_fraction) {
        return Err(SimError::BadWarmup(warmup_fraction));
    }
    let warmup = (jobs as f64 * warmup_fraction).floor() as u64;
    let engine = Engine {
        times,
        events: BinaryHeap::with_capacity(2 * (p.n_a() + p.n_b()) as usize + 4),
        branches: [BranchState::new(p.n_a()), BranchState::new(p.n_b())],
        sync: Synchronizer::default(),
        jobs: jobs as u64,
        warmup,
        arrived: 0,
        observing: false,
        last_change: 0.0,
        out: SimOutput {
            lambda: p.lambda(),
            jobs_simulated: jobs,
            warmup_jobs: warmup as usize,
            ..SimOutput::default()
        },
    };
    engine.run()
}

/// Simulates the network with exponential arrivals and services.
pub fn run_simulation(p: &NetworkParams, jobs: usize, seed: u64, warmup_fraction: f64) -> Result<SimOutput, SimError> {
    let mut times = ExponentialTimes::new(p, seed);
    run_with_times(p, jobs, warmup_fraction, &mut times)
}
