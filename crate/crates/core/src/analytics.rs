//! Synchronizer occupancy law and memory sizing.
//!
//! When the first-partner flow is close to Poisson, the synchronizer behaves
//! as an infinite-server queue and the number of stored first partners is
//! Poisson with mean `rho = lambda * T`, where `T` is the mean pair sojourn.
//! From that law we size the synchronizer memory, and together with the
//! branch queue tails we split a shared memory between the two branch
//! buffers and the synchronizer.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::AnalyticsError;
use crate::params::{Branch, NetworkParams};

/// Poisson(rho) occupancy of the synchronizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyModel {
    rho: f64,
}

impl OccupancyModel {
    pub fn new(rho: f64) -> Result<Self, AnalyticsError> {
        if rho.is_finite() && rho >= 0.0 {
            Ok(OccupancyModel { rho })
        } else {
            Err(AnalyticsError::InvalidRho(rho))
        }
    }

    /// `rho = lambda * mean_sojourn`.
    pub fn from_sojourn(lambda: f64, mean_sojourn: f64) -> Result<Self, AnalyticsError> {
        Self::new(lambda * mean_sojourn)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn pmf(&self, k: u64) -> f64 {
        occupancy_pmf(self, k)
    }

    /// `P(K > k)`.
    pub fn tail(&self, k: u64) -> f64 {
        poisson_tail(self.rho, k)
    }
}

/// `rho^k / k! * exp(-rho)`, evaluated in log space.
pub fn occupancy_pmf(m: &OccupancyModel, k: u64) -> f64 {
    let rho = m.rho;
    if rho == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * rho.ln() - rho - ln_factorial(k)).exp()
}

fn poisson_tail(rho: f64, k: u64) -> f64 {
    if rho == 0.0 {
        return 0.0;
    }
    let m = OccupancyModel { rho };
    if (k as f64) < rho {
        // tail is at least ~1/2 here, no cancellation worth worrying about
        let head: f64 = (0..=k).map(|n| occupancy_pmf(&m, n)).sum();
        return (1.0 - head).max(0.0);
    }
    // sum upward; terms decrease geometrically with ratio rho/(n+1) < 1
    let mut n = k + 1;
    let mut term = occupancy_pmf(&m, n);
    let mut sum = 0.0;
    while term > 0.0 && term > sum * 1e-17 {
        sum += term;
        n += 1;
        term *= rho / n as f64;
    }
    sum
}

fn check_epsilon(epsilon: f64) -> Result<(), AnalyticsError> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(AnalyticsError::InvalidEpsilon(epsilon))
    }
}

/// Smallest `K` with `P(k > K) < epsilon` under the Poisson(rho) law.
pub fn required_memory(rho: f64, epsilon: f64) -> Result<u64, AnalyticsError> {
    let m = OccupancyModel::new(rho)?;
    check_epsilon(epsilon)?;
    let mut k = 0;
    while m.tail(k) >= epsilon {
        k += 1;
    }
    Ok(k)
}

/// Stationary M/M/N distribution truncated nowhere, as a tail function.
///
/// Unnormalized weights are `(N psi)^q / q!` for `q < N` and
/// `(N psi)^N / N! * psi^(q-N)` from `N` on; the geometric part is summed in
/// closed form.
#[derive(Debug, Clone)]
pub struct BranchQueueLaw {
    psi: f64,
    channels: u32,
    // normalized probabilities of q = 0..N-1 and of q = N
    head: Vec<f64>,
    at_n: f64,
}

impl BranchQueueLaw {
    pub fn new(channels: u32, psi: f64) -> Result<Self, AnalyticsError> {
        if channels == 0 {
            return Err(AnalyticsError::ZeroChannels);
        }
        if !(psi > 0.0 && psi < 1.0) {
            return Err(AnalyticsError::UnstableLoad(psi));
        }
        let n = channels as u64;
        let offered = f64::from(channels) * psi;
        let log_w = |q: u64| q as f64 * offered.ln() - ln_factorial(q);
        let logs: Vec<f64> = (0..=n).map(log_w).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let w_n = weights[n as usize];
        let z: f64 = weights[..n as usize].iter().sum::<f64>() + w_n / (1.0 - psi);
        Ok(BranchQueueLaw {
            psi,
            channels,
            head: weights[..n as usize].iter().map(|w| w / z).collect(),
            at_n: w_n / z,
        })
    }

    pub fn pmf(&self, q: u64) -> f64 {
        let n = u64::from(self.channels);
        if q < n {
            self.head[q as usize]
        } else {
            self.at_n * self.psi.powf((q - n) as f64)
        }
    }

    /// `P(L > q)` for the number `L` of jobs in the branch.
    pub fn tail(&self, q: u64) -> f64 {
        let n = u64::from(self.channels);
        let geometric_from = |start: u64| self.at_n * self.psi.powf((start - n) as f64) / (1.0 - self.psi);
        if q + 1 >= n {
            geometric_from(q + 1)
        } else {
            let partial: f64 = self.head[(q + 1) as usize..].iter().sum();
            partial + geometric_from(n)
        }
    }
}

/// `P(L > q_max)` for a stationary M/M/N branch with load `psi`.
pub fn branch_overflow_prob(channels: u32, psi: f64, q_max: u64) -> Result<f64, AnalyticsError> {
    Ok(BranchQueueLaw::new(channels, psi)?.tail(q_max))
}

/// One way of splitting a shared memory of `total` slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPlan {
    pub q_a_max: u64,
    pub q_b_max: u64,
    pub k_max: u64,
    pub total: u64,
    /// Sum of the three overflow probabilities, capped at 1.
    pub loss_estimate: f64,
}

struct Tails {
    a: Vec<f64>,
    b: Vec<f64>,
    sync: Vec<f64>,
}

fn tails_up_to(p: &NetworkParams, rho: f64, m_max: u64) -> Result<Tails, AnalyticsError> {
    let occ = OccupancyModel::new(rho)?;
    let law_a = BranchQueueLaw::new(p.channels(Branch::A), p.psi_a())?;
    let law_b = BranchQueueLaw::new(p.channels(Branch::B), p.psi_b())?;
    Ok(Tails {
        a: (0..=m_max).map(|q| law_a.tail(q)).collect(),
        b: (0..=m_max).map(|q| law_b.tail(q)).collect(),
        sync: (0..=m_max).map(|k| occ.tail(k)).collect(),
    })
}

fn best_split(t: &Tails, m_max: u64) -> MemoryPlan {
    let mut best: Option<(f64, u64, u64)> = None;
    // k_max descending, then q_a_max descending, so the first strict
    // improvement wins ties toward larger k_max and larger q_a_max
    for k in (0..=m_max).rev() {
        for qa in (0..=m_max - k).rev() {
            let qb = m_max - k - qa;
            let loss = t.a[qa as usize] + t.b[qb as usize] + t.sync[k as usize];
            if best.is_none_or(|(l, _, _)| loss < l) {
                best = Some((loss, qa, k));
            }
        }
    }
    let (loss, qa, k) = best.expect("at least one split");
    MemoryPlan {
        q_a_max: qa,
        q_b_max: m_max - k - qa,
        k_max: k,
        total: m_max,
        loss_estimate: loss.min(1.0),
    }
}

/// Exhaustive search over `q_a_max + q_b_max + k_max = m_max` minimizing the
/// summed overflow probabilities.
pub fn partition_memory(p: &NetworkParams, rho: f64, m_max: u64) -> Result<MemoryPlan, AnalyticsError> {
    let tails = tails_up_to(p, rho, m_max)?;
    Ok(best_split(&tails, m_max))
}

/// Smallest shared memory whose best split keeps the loss below `epsilon`.
pub fn min_total_memory(p: &NetworkParams, rho: f64, epsilon: f64) -> Result<MemoryPlan, AnalyticsError> {
    check_epsilon(epsilon)?;
    let mut cap = 64;
    loop {
        let tails = tails_up_to(p, rho, cap)?;
        for m in 0..=cap {
            let plan = best_split(&tails, m);
            if plan.loss_estimate < epsilon {
                return Ok(plan);
            }
        }
        cap *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pmf_edge_values() {
        let zero = OccupancyModel::new(0.0).unwrap();
        assert_eq!(zero.pmf(0), 1.0);
        assert_eq!(zero.pmf(3), 0.0);
        let one = OccupancyModel::new(1.0).unwrap();
        assert!((one.pmf(0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((one.pmf(0) - 0.367_879).abs() < 1e-6);
        assert!(OccupancyModel::new(-1.0).is_err());
        assert!(OccupancyModel::new(f64::NAN).is_err());
    }

    #[test]
    fn pmf_sums_by_direct_summation() {
        let m = OccupancyModel::new(5.0).unwrap();
        // direct oracle: e^-5 * sum 5^k/k! with an iterative term
        let mut term = (-5.0f64).exp();
        let mut oracle = 0.0;
        for k in 0..=50u64 {
            if k > 0 {
                term *= 5.0 / k as f64;
            }
            oracle += term;
            assert!((m.pmf(k) - term).abs() < 1e-12 * term.max(1e-300) + 1e-300);
        }
        let s: f64 = (0..=50).map(|k| m.pmf(k)).sum();
        assert!((1.0 - s).abs() < 1e-12);
        assert!((oracle - s).abs() < 1e-13);
    }

    #[test]
    fn large_rho_is_stable() {
        let m = OccupancyModel::new(500.0).unwrap();
        let s: f64 = (0..=1500).map(|k| m.pmf(k)).sum();
        assert!((s - 1.0).abs() < 1e-10);
        let mean: f64 = (0..=1500).map(|k| k as f64 * m.pmf(k)).sum();
        assert!((mean - 500.0).abs() < 1e-8);
    }

    #[test]
    fn required_memory_examples() {
        assert_eq!(required_memory(0.0, 0.5).unwrap(), 0);
        assert_eq!(required_memory(0.0, 1e-9).unwrap(), 0);
        // tails of Poisson(2): P(k>5) = 0.01656, P(k>6) = 0.00453
        assert_eq!(required_memory(2.0, 0.01).unwrap(), 6);
        assert_eq!(required_memory(2.0, 0.9).unwrap(), 0);
        let m = OccupancyModel::new(2.0).unwrap();
        assert!((m.tail(5) - 0.016_563_608_480_614_2).abs() < 1e-12);
        assert!((m.tail(6) - 0.004_533_805_526_248_2).abs() < 1e-12);
        assert!(required_memory(2.0, 0.0).is_err());
        assert!(required_memory(2.0, 1.0).is_err());
        assert!(required_memory(-2.0, 0.5).is_err());
    }

    fn birth_death_tail(n: u32, psi: f64, q_max: u64) -> f64 {
        // independent route: iterate the birth-death recursion far out and normalize
        let lambda = 1.0;
        let mu = lambda / (f64::from(n) * psi);
        let mut w = vec![1.0f64];
        for q in 1..5000u64 {
            let death = (q.min(u64::from(n))) as f64 * mu;
            let next = w[(q - 1) as usize] * lambda / death;
            w.push(next);
        }
        let z: f64 = w.iter().sum();
        w.iter().skip(q_max as usize + 1).sum::<f64>() / z
    }

    #[test]
    fn overflow_matches_birth_death() {
        for q in [0, 1, 4, 9, 17] {
            let t = branch_overflow_prob(1, 0.375, q).unwrap();
            assert!((t - 0.375f64.powi(q as i32 + 1)).abs() < 1e-15);
        }
        for (n, psi, q) in [(3, 0.5, 10), (3, 0.5, 1), (8, 0.9, 3), (5, 0.83, 40), (2, 0.1, 0)] {
            let t = branch_overflow_prob(n, psi, q).unwrap();
            let oracle = birth_death_tail(n, psi, q);
            assert!((t - oracle).abs() < 1e-12, "n={n} psi={psi} q={q}: {t} vs {oracle}");
        }
        assert!(branch_overflow_prob(1, 1.0, 3).is_err());
        assert!(branch_overflow_prob(0, 0.5, 3).is_err());
    }

    #[test]
    fn overflow_decreases_to_zero() {
        let law = BranchQueueLaw::new(3, 0.5).unwrap();
        let tails: Vec<f64> = (0..200).map(|q| law.tail(q)).collect();
        assert!(tails.windows(2).all(|w| w[1] < w[0]));
        assert!(tails[199] < 1e-50);
        let total: f64 = (0..400).map(|q| law.pmf(q)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_memory_plan() {
        let p = NetworkParams::new(0.3, 1, 0.8, 1, 0.8).unwrap();
        let plan = partition_memory(&p, 0.4, 0).unwrap();
        assert_eq!((plan.q_a_max, plan.q_b_max, plan.k_max, plan.total), (0, 0, 0, 0));
        // 0.375 + 0.375 + (1 - e^-0.4) > 1, so the reported estimate is capped
        assert_eq!(plan.loss_estimate, 1.0);
    }

    #[test]
    fn symmetric_branches_split_evenly() {
        let p = NetworkParams::new(0.3, 1, 0.8, 1, 0.8).unwrap();
        for m in [2, 10, 20, 31] {
            let plan = partition_memory(&p, 0.05, m).unwrap();
            assert_eq!(plan.q_a_max + plan.q_b_max + plan.k_max, m);
            assert!(plan.q_a_max.abs_diff(plan.q_b_max) <= 1, "{plan:?}");
            if (m - plan.k_max) % 2 == 0 {
                assert_eq!(plan.q_a_max, plan.q_b_max);
            }
        }
    }

    #[test]
    fn min_total_memory_matches_linear_scan() {
        let p = NetworkParams::new(0.3, 1, 0.8, 1, 0.8).unwrap();
        let rho = 1.1;
        for eps in [0.5, 0.1, 1e-3, 1e-6] {
            let plan = min_total_memory(&p, rho, eps).unwrap();
            let scan = (0..).find(|&m| partition_memory(&p, rho, m).unwrap().loss_estimate < eps).unwrap();
            assert_eq!(plan.total, scan);
            assert!(plan.loss_estimate < eps);
        }
        assert_eq!(min_total_memory(&p, 0.0, 0.999_999).unwrap().total, 0);
        assert!(min_total_memory(&p, rho, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn pmf_normalized_with_mean_rho(rho in 0.0f64..40.0) {
            let m = OccupancyModel::new(rho).unwrap();
            let upper = (rho + 20.0 * rho.sqrt() + 40.0) as u64;
            let s: f64 = (0..=upper).map(|k| m.pmf(k)).sum();
            let mean: f64 = (0..=upper).map(|k| k as f64 * m.pmf(k)).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!((mean - rho).abs() < 1e-10 * rho.max(1.0));
        }

        #[test]
        fn required_memory_monotone(rho in 0.0f64..30.0, d_rho in 0.0f64..5.0, e1 in 1e-9f64..0.99, e2 in 1e-9f64..0.99) {
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(required_memory(rho, hi).unwrap() <= required_memory(rho, lo).unwrap());
            prop_assert!(required_memory(rho, lo).unwrap() <= required_memory(rho + d_rho, lo).unwrap());
        }

        #[test]
        fn min_memory_monotone_in_epsilon(e1 in 1e-8f64..0.9, e2 in 1e-8f64..0.9) {
            let p = NetworkParams::new(2.0, 8, 0.5, 8, 0.45).unwrap();
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(min_total_memory(&p, 3.0, hi).unwrap().total <= min_total_memory(&p, 3.0, lo).unwrap().total);
        }
    }
}
