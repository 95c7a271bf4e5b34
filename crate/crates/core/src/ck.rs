//! Stationary distribution of the joint queue lengths `(q_a, q_b)` of a
//! fork-join network with single-channel branches.
//!
//! An arrival moves the chain from `(q_a, q_b)` to `(q_a + 1, q_b + 1)` at
//! rate `lambda`; a service completion in branch `a` (`b`) lowers `q_a`
//! (`q_b`) by one at rate `mu_a` (`mu_b`). The state space is truncated to
//! `0..=q_max` in both coordinates. Arrivals that would leave the grid are
//! dropped, so on the truncated grid the balance equations are
//!
//! ```text
//! out(q) * P(q) = lambda * P(q_a-1, q_b-1) + mu_a * P(q_a+1, q_b) + mu_b * P(q_a, q_b+1)
//! ```
//!
//! with terms outside the grid omitted and `out(q)` the total rate of the
//! transitions that remain. The solver sweeps these equations until the
//! largest per-state change drops below the tolerance, renormalizing after
//! every sweep.

use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::params::{Branch, NetworkParams};

pub const MIN_Q_MAX: usize = 10;
pub const DEFAULT_Q_MAX: usize = 200;
/// Largest grid the auto-escalating solve will try.
pub const MAX_AUTO_Q_MAX: usize = 3200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepScheme {
    /// In-place sweeps, alternating forward and backward order.
    GaussSeidel,
    /// `P <- P + P Q / (lambda + mu_a + mu_b)`, i.e. power iteration on the
    /// uniformized chain.
    Uniformized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub q_max: usize,
    /// Convergence threshold on the max-norm change per sweep.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest allowed mass on the `q = q_max` rows and columns; `None`
    /// disables the check.
    pub boundary_budget: Option<f64>,
    /// Post-hoc bound on the balance residual of interior states.
    pub residual_tol: f64,
    pub scheme: SweepScheme,
    /// Over-relaxation factor for Gauss-Seidel sweeps, in `(0, 2)`.
    pub relaxation: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            q_max: DEFAULT_Q_MAX,
            tol: 1e-12,
            max_iter: 2_000_000,
            boundary_budget: Some(1e-8),
            residual_tol: 1e-10,
            scheme: SweepScheme::GaussSeidel,
            relaxation: 1.0,
        }
    }
}

/// Truncated joint distribution `P(q_a, q_b)`, stored row-major by `q_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryGrid {
    pub q_max: usize,
    pub probs: Vec<f64>,
    pub residual: f64,
    pub mass_at_boundary: f64,
    pub sweeps: usize,
}

impl StationaryGrid {
    pub fn side(&self) -> usize {
        self.q_max + 1
    }

    pub fn get(&self, q_a: usize, q_b: usize) -> f64 {
        self.probs[q_a * self.side() + q_b]
    }

    /// Grid with the roles of the two branches exchanged.
    pub fn transposed(&self) -> StationaryGrid {
        let w = self.side();
        let mut probs = vec![0.0; w * w];
        for a in 0..w {
            for b in 0..w {
                probs[b * w + a] = self.probs[a * w + b];
            }
        }
        StationaryGrid { probs, ..self.clone() }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

struct Rates {
    lambda: f64,
    mu_a: f64,
    mu_b: f64,
}

impl Rates {
    fn of(p: &NetworkParams) -> Self {
        Rates {
            lambda: p.lambda(),
            mu_a: p.mu_a(),
            mu_b: p.mu_b(),
        }
    }

    fn outflow(&self, a: usize, b: usize, q_max: usize) -> f64 {
        let mut out = 0.0;
        if a < q_max && b < q_max {
            out += self.lambda;
        }
        if a > 0 {
            out += self.mu_a;
        }
        if b > 0 {
            out += self.mu_b;
        }
        out
    }

    fn inflow(&self, p: &[f64], a: usize, b: usize, q_max: usize) -> f64 {
        let w = q_max + 1;
        let i = a * w + b;
        let mut inflow = 0.0;
        if a > 0 && b > 0 {
            inflow += self.lambda * p[i - w - 1];
        }
        if a < q_max {
            inflow += self.mu_a * p[i + w];
        }
        if b < q_max {
            inflow += self.mu_b * p[i + 1];
        }
        inflow
    }
}

fn check_single_server(p: &NetworkParams) -> Result<(), SolveError> {
    if p.n_a() != 1 || p.n_b() != 1 {
        return Err(SolveError::NotSingleServer {
            n_a: p.n_a(),
            n_b: p.n_b(),
        });
    }
    Ok(())
}

/// Product of the two geometric marginals; exact marginals, wrong coupling.
fn product_form_start(p: &NetworkParams, q_max: usize) -> Vec<f64> {
    let w = q_max + 1;
    let geo = |psi: f64| -> Vec<f64> { (0..w).map(|q| (1.0 - psi) * psi.powi(q as i32)).collect() };
    let (ga, gb) = (geo(p.psi_a()), geo(p.psi_b()));
    let mut probs = Vec::with_capacity(w * w);
    for pa in &ga {
        probs.extend(gb.iter().map(|pb| pa * pb));
    }
    normalize(&mut probs);
    probs
}

fn normalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
}

fn gauss_seidel_sweep(rates: &Rates, p: &mut [f64], q_max: usize, forward: bool, omega: f64) -> f64 {
    let w = q_max + 1;
    let mut change: f64 = 0.0;
    let mut visit = |a: usize, b: usize| {
        let i = a * w + b;
        let target = rates.inflow(p, a, b, q_max) / rates.outflow(a, b, q_max);
        let new = p[i] + omega * (target - p[i]);
        change = change.max((new - p[i]).abs());
        p[i] = new;
    };
    if forward {
        for a in 0..w {
            for b in 0..w {
                visit(a, b);
            }
        }
    } else {
        for a in (0..w).rev() {
            for b in (0..w).rev() {
                visit(a, b);
            }
        }
    }
    change
}

fn uniformized_sweep(rates: &Rates, p: &[f64], next: &mut [f64], q_max: usize) -> f64 {
    let w = q_max + 1;
    let big = rates.lambda + rates.mu_a + rates.mu_b;
    let mut change: f64 = 0.0;
    for a in 0..w {
        for b in 0..w {
            let i = a * w + b;
            let flow = rates.inflow(p, a, b, q_max) - rates.outflow(a, b, q_max) * p[i];
            next[i] = p[i] + flow / big;
            change = change.max((next[i] - p[i]).abs());
        }
    }
    change
}

fn boundary_mass(p: &[f64], q_max: usize) -> f64 {
    let w = q_max + 1;
    let mut mass = 0.0;
    for a in 0..w {
        for b in 0..w {
            if a == q_max || b == q_max {
                mass += p[a * w + b];
            }
        }
    }
    mass
}

fn residual_of(rates: &Rates, p: &[f64], q_max: usize) -> f64 {
    let w = q_max + 1;
    let mut worst: f64 = 0.0;
    for a in 0..q_max {
        for b in 0..q_max {
            let r = rates.inflow(p, a, b, q_max) - rates.outflow(a, b, q_max) * p[a * w + b];
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Largest balance violation `|inflow - outflow|` over states with both
/// coordinates below `q_max`.
pub fn balance_residual(g: &StationaryGrid, p: &NetworkParams) -> f64 {
    assert_eq!(g.probs.len(), g.side() * g.side(), "grid shape");
    residual_of(&Rates::of(p), &g.probs, g.q_max)
}

/// Iterative stationary solve on a fixed `q_max`.
pub fn solve_stationary(p: &NetworkParams, cfg: &SolverConfig) -> Result<StationaryGrid, SolveError> {
    check_single_server(p)?;
    if cfg.q_max < MIN_Q_MAX {
        return Err(SolveError::GridTooSmall {
            min: MIN_Q_MAX,
            got: cfg.q_max,
        });
    }
    if !(cfg.tol > 0.0) {
        return Err(SolveError::BadTolerance(cfg.tol));
    }
    if !(cfg.relaxation > 0.0 && cfg.relaxation < 2.0) {
        return Err(SolveError::BadRelaxation(cfg.relaxation));
    }
    let q_max = cfg.q_max;
    let rates = Rates::of(p);
    let mut probs = product_form_start(p, q_max);
    let mut scratch = match cfg.scheme {
        SweepScheme::Uniformized => vec![0.0; probs.len()],
        SweepScheme::GaussSeidel => Vec::new(),
    };

    let mut sweeps = 0;
    loop {
        if sweeps >= cfg.max_iter {
            return Err(SolveError::NoConvergence(cfg.max_iter));
        }
        let change = match cfg.scheme {
            SweepScheme::GaussSeidel => gauss_seidel_sweep(&rates, &mut probs, q_max, sweeps % 2 == 0, cfg.relaxation),
            SweepScheme::Uniformized => {
                let c = uniformized_sweep(&rates, &probs, &mut scratch, q_max);
                std::mem::swap(&mut probs, &mut scratch);
                c
            }
        };
        normalize(&mut probs);
        sweeps += 1;
        if change < cfg.tol {
            break;
        }
    }

    let residual = residual_of(&rates, &probs, q_max);
    if residual >= cfg.residual_tol {
        return Err(SolveError::NoConvergence(sweeps));
    }
    let mass_at_boundary = boundary_mass(&probs, q_max);
    if let Some(budget) = cfg.boundary_budget {
        if mass_at_boundary > budget {
            return Err(SolveError::TruncationTooSmall {
                q_max,
                mass: mass_at_boundary,
                budget,
            });
        }
    }
    Ok(StationaryGrid {
        q_max,
        probs,
        residual,
        mass_at_boundary,
        sweeps,
    })
}

/// Like [`solve_stationary`], doubling `q_max` while the boundary budget
/// is exceeded.
pub fn solve_stationary_auto(p: &NetworkParams, cfg: &SolverConfig) -> Result<StationaryGrid, SolveError> {
    let mut cfg = *cfg;
    loop {
        match solve_stationary(p, &cfg) {
            Err(SolveError::TruncationTooSmall { .. }) if cfg.q_max * 2 <= MAX_AUTO_Q_MAX => cfg.q_max *= 2,
            other => return other,
        }
    }
}

/// Total probability of the states satisfying `region`.
pub fn region_probability(g: &StationaryGrid, region: impl Fn(usize, usize) -> bool) -> f64 {
    let w = g.side();
    let mut total = 0.0;
    for a in 0..w {
        for b in 0..w {
            if region(a, b) {
                total += g.probs[a * w + b];
            }
        }
    }
    total
}

/// Region masses entering the conditional first-partner rate. Inequalities
/// are strict as written, e.g. `b_gt_a_gt_1` is `q_b > q_a > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ConditionalRegions {
    pub b_gt_a_gt_1: f64,
    pub a_gt_b_gt_1: f64,
    pub eq_gt_1: f64,
    pub b_gt_a_gt_0: f64,
    pub a_gt_b_gt_0: f64,
    pub eq_gt_0: f64,
}

pub fn conditional_regions(g: &StationaryGrid) -> ConditionalRegions {
    let w = g.side();
    let mut r = ConditionalRegions::default();
    for a in 0..w {
        for b in 0..w {
            let p = g.probs[a * w + b];
            if b > a && a > 1 {
                r.b_gt_a_gt_1 += p;
            }
            if a > b && b > 1 {
                r.a_gt_b_gt_1 += p;
            }
            if a == b && a > 1 {
                r.eq_gt_1 += p;
            }
            if b > a && a > 0 {
                r.b_gt_a_gt_0 += p;
            }
            if a > b && b > 0 {
                r.a_gt_b_gt_0 += p;
            }
            if a == b && a > 0 {
                r.eq_gt_0 += p;
            }
        }
    }
    r
}

/// Intensity of a first-partner arrival immediately after the previous one.
///
/// ```text
///        mu_a^2 P(q_b>q_a>1) + mu_b^2 P(q_a>q_b>1) + (mu_a^2+mu_b^2) P(q_a=q_b>1)
/// rate = -------------------------------------------------------------------------
///        mu_a   P(q_b>q_a>0) + mu_b   P(q_a>q_b>0) + (mu_a  +mu_b  ) P(q_a=q_b>0)
/// ```
pub fn conditional_rate(g: &StationaryGrid, p: &NetworkParams) -> Result<f64, SolveError> {
    let r = conditional_regions(g);
    let (ma, mb) = (p.mu_a(), p.mu_b());
    let num = ma * ma * r.b_gt_a_gt_1 + mb * mb * r.a_gt_b_gt_1 + (ma * ma + mb * mb) * r.eq_gt_1;
    let den = ma * r.b_gt_a_gt_0 + mb * r.a_gt_b_gt_0 + (ma + mb) * r.eq_gt_0;
    if !(den > 0.0) {
        return Err(SolveError::DegenerateDenominator);
    }
    Ok(num / den)
}

/// Relative shortfall `(lambda - rate) / lambda` of the conditional rate.
pub fn delta_p_relative(g: &StationaryGrid, p: &NetworkParams) -> Result<f64, SolveError> {
    let rate = conditional_rate(g, p)?;
    Ok((p.lambda() - rate) / p.lambda())
}

pub fn marginal_distribution(g: &StationaryGrid, branch: Branch) -> Vec<f64> {
    let w = g.side();
    let mut m = vec![0.0; w];
    for a in 0..w {
        for b in 0..w {
            let q = match branch {
                Branch::A => a,
                Branch::B => b,
            };
            m[q] += g.probs[a * w + b];
        }
    }
    m
}
