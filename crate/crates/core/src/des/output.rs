use serde::{Deserialize, Serialize};

use crate::error::{SimError, StatError};
use crate::stats::IntervalSample;

/// Record of one simulation run, restricted to the jobs after warmup.
///
/// `in_trace` holds first-partner arrival times at the synchronizer and
/// `out_trace` second-partner arrival times (pair departures). The
/// occupancy histogram is indexed by the number of stored first partners
/// and covers `[window_start, window_start + total_time]`, from the arrival
/// of the first counted job to the last departure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub lambda: f64,
    pub jobs_simulated: usize,
    pub warmup_jobs: usize,
    pub in_trace: Vec<f64>,
    pub out_trace: Vec<f64>,
    pub sojourns: Vec<f64>,
    pub occupancy_time: Vec<f64>,
    pub window_start: f64,
    pub last_arrival: f64,
    pub total_time: f64,
    pub jobs_completed: usize,
    pub first_from_a: usize,
}

impl SimOutput {
    pub fn final_occupancy(&self) -> usize {
        self.in_trace.len() - self.out_trace.len()
    }
}

/// Successive differences of a timestamp trace.
pub fn extract_intervals(trace: &[f64]) -> Result<IntervalSample, StatError> {
    if trace.len() < 2 {
        return Err(StatError::TooFewEvents {
            needed: 2,
            got: trace.len(),
        });
    }
    IntervalSample::new(trace.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Time-weighted distribution of the synchronizer occupancy.
pub fn occupancy_distribution(o: &SimOutput) -> Result<Vec<f64>, SimError> {
    let total: f64 = o.occupancy_time.iter().sum();
    if !(total > 0.0) {
        return Err(SimError::EmptyObservation);
    }
    Ok(o.occupancy_time.iter().map(|t| t / total).collect())
}

pub fn mean_sojourn(o: &SimOutput) -> Result<f64, SimError> {
    if o.sojourns.is_empty() {
        return Err(SimError::EmptyObservation);
    }
    Ok(o.sojourns.iter().sum::<f64>() / o.sojourns.len() as f64)
}

/// Time average of the occupancy over the observation window.
pub fn time_average_occupancy(o: &SimOutput) -> Result<f64, SimError> {
    let total: f64 = o.occupancy_time.iter().sum();
    if !(total > 0.0) {
        return Err(SimError::EmptyObservation);
    }
    let area: f64 = o.occupancy_time.iter().enumerate().map(|(k, t)| k as f64 * t).sum();
    Ok(area / total)
}

/// Events per unit time: `(len - 1) / (last - first)`.
pub fn empirical_rate(trace: &[f64]) -> Result<f64, SimError> {
    match (trace.first(), trace.last()) {
        (Some(first), Some(last)) if trace.len() >= 2 && last > first => Ok((trace.len() - 1) as f64 / (last - first)),
        _ => Err(SimError::EmptyObservation),
    }
}

/// Number of counted jobs stored in the synchronizer just after time `t`,
/// reconstructed from the two traces.
pub fn occupancy_at(o: &SimOutput, t: f64) -> usize {
    let entered = o.in_trace.partition_point(|&x| x <= t);
    let left = o.out_trace.partition_point(|&x| x <= t);
    entered - left
}
