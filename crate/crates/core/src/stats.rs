//! Tests that decide whether an event flow is "almost Poisson".
//!
//! A flow passes at level `alpha = 0.01` when both of the following accept:
//!
//! * Pearson's chi-square test of the inter-event intervals against an
//!   exponential law with the known rate, using 30 bins of equal
//!   probability (29 degrees of freedom, critical value 49.6);
//! * a Student test that the lag-1 correlation of neighbouring intervals is
//!   zero, `St = |r| * sqrt((n - 3) / (1 - r^2))` against 2.33.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::StatError;

pub const BINS: usize = 30;
pub const CHI2_THRESHOLD: f64 = 49.6;
pub const STUDENT_THRESHOLD: f64 = 2.33;
pub const ALPHA: f64 = 0.01;
/// Smallest sample the tests accept (keeps expected bin counts above 3).
pub const MIN_SAMPLE: usize = 100;

/// Ordered inter-event intervals of one flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSample {
    intervals: Vec<f64>,
}

impl IntervalSample {
    pub fn new(intervals: Vec<f64>) -> Result<Self, StatError> {
        if let Some((index, &value)) = intervals.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
            return Err(StatError::NegativeInterval { index, value });
        }
        Ok(IntervalSample { intervals })
    }

    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    fn require_testable(&self) -> Result<(), StatError> {
        if self.len() < MIN_SAMPLE {
            Err(StatError::TooFewEvents {
                needed: MIN_SAMPLE,
                got: self.len(),
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub bins: usize,
    pub dof: usize,
    pub threshold: f64,
    pub rejected: bool,
    pub observed: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentReport {
    pub r: f64,
    pub statistic: f64,
    pub threshold: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonVerdict {
    pub chi: ChiSquareReport,
    pub student: StudentReport,
    pub almost_poisson: bool,
    pub alpha: f64,
}

/// Compact verdict written by `test-flow`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub chi2: f64,
    pub st: f64,
    pub almost_poisson: bool,
    pub n: usize,
    pub rate: f64,
}

impl PoissonVerdict {
    pub fn summary(&self, n: usize, rate: f64) -> VerdictSummary {
        VerdictSummary {
            chi2: self.chi.statistic,
            st: self.student.statistic,
            almost_poisson: self.almost_poisson,
            n,
            rate,
        }
    }
}

fn check_rate(rate: f64) -> Result<(), StatError> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(StatError::NonPositiveRate(rate))
    }
}

/// Inner edges `-ln(1 - j/bins) / rate`, `j = 1..bins-1`. Bin `j` is
/// `[e_j, e_{j+1})` with `e_0 = 0` and `e_bins = +inf`.
pub fn equiprobable_bin_edges(rate: f64, bins: usize) -> Vec<f64> {
    assert!(rate > 0.0 && bins >= 2, "need rate > 0 and at least two bins");
    let m = bins as f64;
    (1..bins).map(|j| -(1.0 - j as f64 / m).ln() / rate).collect()
}

/// Index of the bin holding `x` for the given inner edges.
pub fn bin_index(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e <= x)
}

/// Pearson's sum `(O - E)^2 / E`.
pub fn pearson_statistic(observed: &[f64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(o, e)| {
            let d = o - e;
            d * d / e
        })
        .sum()
}

/// Upper `alpha` quantile of the chi-square law with `dof` degrees of freedom.
pub fn chi_square_critical(dof: usize, alpha: f64) -> f64 {
    let law = ChiSquared::new(dof as f64).expect("positive dof");
    law.inverse_cdf(1.0 - alpha)
}

pub fn chi_square_exponential(s: &IntervalSample, rate: f64) -> Result<ChiSquareReport, StatError> {
    check_rate(rate)?;
    s.require_testable()?;
    let edges = equiprobable_bin_edges(rate, BINS);
    let mut observed = vec![0u64; BINS];
    for &x in s.intervals() {
        observed[bin_index(&edges, x)] += 1;
    }
    let expected = s.len() as f64 / BINS as f64;
    let statistic: f64 = observed
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum();
    Ok(ChiSquareReport {
        statistic,
        bins: BINS,
        dof: BINS - 1,
        threshold: CHI2_THRESHOLD,
        rejected: statistic > CHI2_THRESHOLD,
        observed,
    })
}

/// Sample correlation of the pairs `(x_i, x_{i+1})`.
pub fn lag1_correlation(x: &[f64]) -> Result<f64, StatError> {
    if x.len() < 3 {
        return Err(StatError::TooFewEvents { needed: 3, got: x.len() });
    }
    let lead = &x[..x.len() - 1];
    let lag = &x[1..];
    let m = lead.len() as f64;
    let mean_lead = lead.iter().sum::<f64>() / m;
    let mean_lag = lag.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in lead.iter().zip(lag) {
        let (da, db) = (a - mean_lead, b - mean_lag);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(StatError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn lag1_student(s: &IntervalSample) -> Result<StudentReport, StatError> {
    s.require_testable()?;
    let r = lag1_correlation(s.intervals())?;
    let n = s.len() as f64;
    let denom = 1.0 - r * r;
    let statistic = if denom > 0.0 {
        r.abs() * ((n - 3.0) / denom).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(StudentReport {
        r,
        statistic,
        threshold: STUDENT_THRESHOLD,
        rejected: statistic > STUDENT_THRESHOLD,
    })
}

pub fn classify_almost_poisson(s: &IntervalSample, rate: f64) -> Result<PoissonVerdict, StatError> {
    let chi = chi_square_exponential(s, rate)?;
    let student = lag1_student(s)?;
    let almost_poisson = !chi.rejected && !student.rejected;
    Ok(PoissonVerdict {
        chi,
        student,
        almost_poisson,
        alpha: ALPHA,
    })
}
