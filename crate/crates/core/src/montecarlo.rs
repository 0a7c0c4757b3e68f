//! Seeded Monte-Carlo evaluation over Rayleigh fading.
//!
//! Trial `k` draws its channel from the sub-stream `(seed, k)`. Trials are
//! processed in fixed-size chunks whose tallies are reduced in chunk order,
//! so results are bit-identical for any number of worker threads.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{fading_stream, sample_fading, FadingDraw, LinkBudget, NonIdealParams};
use crate::error::{validation, Result};
use crate::outage::{OutageEvent, OutageSpec};
use crate::rates::{scheme_rates, Allocation, RatePair, SchemeId};
use crate::sca::{exhaustive_search_with, optimize_scheme, ScaOptions};

/// Trials per reduction chunk.
pub const CHUNK: u64 = 4096;

/// Distribution of the small-scale gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FadingModel {
    /// Unit-mean exponential power gains on all three links.
    Rayleigh,
    /// Every trial sees the same normalized gains. Used to check the
    /// estimator against direct rate evaluation.
    Deterministic { g1: f64, g2: f64, g3: f64 },
}

/// How each trial's powers are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AllocationPolicy {
    /// One allocation for all draws.
    Fixed(Allocation),
    /// Solve the max-min problem on every draw with proportional-fairness
    /// coefficient `fairness`.
    Reoptimize { fairness: f64, opts: ScaOptions },
}

/// Rate thresholds of the outage metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageTarget {
    pub r2_threshold: f64,
    pub fairness: f64,
}

impl OutageTarget {
    fn spec(&self) -> Result<OutageSpec> {
        OutageSpec::new(self.r2_threshold, self.fairness, Allocation::Fixed)
    }
}

/// What a run measures.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricSet {
    pub outage: Option<OutageTarget>,
    /// Rate points at which the empirical CDF of each user's rate is taken.
    pub cdf_grid: Option<Vec<f64>>,
    pub mean_rates: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialPlan {
    pub trials: u64,
    pub seed: u64,
    pub scheme: SchemeId,
    pub policy: AllocationPolicy,
    pub budget: LinkBudget,
    pub non_ideal: NonIdealParams,
    pub fading: FadingModel,
    pub metrics: MetricSet,
}

impl TrialPlan {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(validation("trials", "must be >= 1"));
        }
        if let Some(grid) = &self.metrics.cdf_grid {
            if grid.is_empty() {
                return Err(validation("cdf_grid", "must not be empty"));
            }
            if grid.iter().any(|r| !r.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(validation("cdf_grid", "must be finite and strictly increasing"));
            }
        }
        if let Some(t) = &self.metrics.outage {
            t.spec()?;
        }
        match &self.policy {
            AllocationPolicy::Fixed(a) => {
                scheme_rates(self.scheme, 1.0, 1.0, a, &crate::channel::RelayImpairments::ideal())?;
            }
            AllocationPolicy::Reoptimize { fairness, opts } => {
                if !(fairness.is_finite() && *fairness > 0.0) {
                    return Err(validation("fairness", format!("must be > 0, got {fairness}")));
                }
                opts.validate()?;
            }
        }
        if let FadingModel::Deterministic { g1, g2, g3 } = self.fading {
            if [g1, g2, g3].iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                return Err(validation("fading", "deterministic gains must be finite and >= 0"));
            }
        }
        Ok(())
    }

    fn draw(&self, k: u64) -> FadingDraw {
        match self.fading {
            FadingModel::Rayleigh => sample_fading(&self.budget, &mut fading_stream(self.seed, k)),
            FadingModel::Deterministic { g1, g2, g3 } => FadingDraw::from_gains(g1, g2, g3, &self.budget),
        }
    }

    /// Rates of trial `k`, or `None` if re-optimization failed on its draw.
    pub fn trial_rates(&self, k: u64) -> Option<RatePair> {
        let d = self.draw(k);
        let imp = self.non_ideal.relay_impairments(&self.budget, d.g3);
        let allocation = match &self.policy {
            AllocationPolicy::Fixed(a) => *a,
            AllocationPolicy::Reoptimize { fairness, opts } => {
                let opt = if self.non_ideal.is_ideal() {
                    optimize_scheme(self.scheme, d.gamma1, d.gamma2, *fairness, opts)
                } else {
                    exhaustive_search_with(self.scheme, d.gamma1, d.gamma2, *fairness, opts.grid_res, &imp)
                };
                opt.ok()?.allocation
            }
        };
        scheme_rates(self.scheme, d.gamma1, d.gamma2, &allocation, &imp).ok()
    }
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Binomial proportion `hits / n` with `sqrt(p(1−p)/n)`.
    pub fn proportion(hits: u64, n: u64) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            value: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
        }
    }

    fn mean(sum: f64, sum_sq: f64, n: u64) -> Self {
        let nf = n as f64;
        let m = sum / nf;
        let var = if n > 1 {
            ((sum_sq - nf * m * m) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Self {
            value: m,
            stderr: (var / nf).sqrt(),
        }
    }
}

/// Empirical `Pr(Rᵢ ≤ rate)` for both users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfPoint {
    pub rate: f64,
    pub r1: Estimate,
    pub r2: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub trials: u64,
    pub seed: u64,
    /// Trials whose allocation could not be computed. They are excluded
    /// from every estimate.
    pub failed: u64,
    /// `Pr(R₂ < R₂^{th})`.
    pub outage_user2: Option<Estimate>,
    /// `Pr(R₁ < fR₂^{th} or R₂ < R₂^{th})`.
    pub outage_joint: Option<Estimate>,
    pub cdf: Option<Vec<CdfPoint>>,
    pub mean_r1: Option<Estimate>,
    pub mean_r2: Option<Estimate>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl McResult {
    /// Trials that produced rates.
    pub fn effective(&self) -> u64 {
        self.trials - self.failed
    }

    /// `(metric, value, stderr)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(String, f64, f64)> {
        let mut rows = Vec::new();
        let mut push = |name: String, e: &Estimate| rows.push((name, e.value, e.stderr));
        if let Some(e) = &self.outage_user2 {
            push("outage_user2".into(), e);
        }
        if let Some(e) = &self.outage_joint {
            push("outage_joint".into(), e);
        }
        if let Some(e) = &self.mean_r1 {
            push("mean_r1".into(), e);
        }
        if let Some(e) = &self.mean_r2 {
            push("mean_r2".into(), e);
        }
        if let Some(cdf) = &self.cdf {
            for p in cdf {
                push(format!("cdf_r1@{}", p.rate), &p.r1);
                push(format!("cdf_r2@{}", p.rate), &p.r2);
            }
        }
        rows
    }

    /// CSV with header `metric,value,stderr,n,seed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value,stderr,n,seed\n");
        for (m, v, s) in self.rows() {
            out.push_str(&format!("{m},{v:e},{s:e},{},{}\n", self.effective(), self.seed));
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    failed: u64,
    out_user2: u64,
    out_joint: u64,
    cdf_r1: Vec<u64>,
    cdf_r2: Vec<u64>,
    sum: [f64; 2],
    sum_sq: [f64; 2],
}

impl Tally {
    fn merge(&mut self, o: &Tally) {
        self.failed += o.failed;
        self.out_user2 += o.out_user2;
        self.out_joint += o.out_joint;
        for (a, b) in self.cdf_r1.iter_mut().zip(&o.cdf_r1) {
            *a += b;
        }
        for (a, b) in self.cdf_r2.iter_mut().zip(&o.cdf_r2) {
            *a += b;
        }
        for i in 0..2 {
            self.sum[i] += o.sum[i];
            self.sum_sq[i] += o.sum_sq[i];
        }
    }
}

fn run_chunk(plan: &TrialPlan, spec: Option<&OutageSpec>, range: std::ops::Range<u64>) -> Tally {
    let n_grid = plan.metrics.cdf_grid.as_ref().map_or(0, Vec::len);
    let mut t = Tally {
        cdf_r1: vec![0; n_grid],
        cdf_r2: vec![0; n_grid],
        ..Tally::default()
    };
    for k in range {
        let Some(r) = plan.trial_rates(k) else {
            t.failed += 1;
            continue;
        };
        if let Some(s) = spec {
            t.out_user2 += s.in_outage(&r, OutageEvent::User2) as u64;
            t.out_joint += s.in_outage(&r, OutageEvent::Joint) as u64;
        }
        if let Some(grid) = &plan.metrics.cdf_grid {
            for (i, &x) in grid.iter().enumerate() {
                t.cdf_r1[i] += (r.r1 <= x) as u64;
                t.cdf_r2[i] += (r.r2 <= x) as u64;
            }
        }
        t.sum[0] += r.r1;
        t.sum[1] += r.r2;
        t.sum_sq[0] += r.r1 * r.r1;
        t.sum_sq[1] += r.r2 * r.r2;
    }
    t
}

/// Runs the plan on the current rayon pool.
pub fn run_trials(plan: &TrialPlan) -> Result<McResult> {
    plan.validate()?;
    let start = Instant::now();
    let spec = plan.metrics.outage.map(|t| t.spec()).transpose()?;
    let chunks = plan.trials.div_ceil(CHUNK);
    let tallies: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            run_chunk(plan, spec.as_ref(), lo..(lo + CHUNK).min(plan.trials))
        })
        .collect();
    let mut total = tallies[0].clone();
    for t in &tallies[1..] {
        total.merge(t);
    }
    let n = plan.trials - total.failed;
    let has = |on: bool| on && n > 0;
    let m = &plan.metrics;
    Ok(McResult {
        trials: plan.trials,
        seed: plan.seed,
        failed: total.failed,
        outage_user2: has(m.outage.is_some()).then(|| Estimate::proportion(total.out_user2, n)),
        outage_joint: has(m.outage.is_some()).then(|| Estimate::proportion(total.out_joint, n)),
        cdf: m.cdf_grid.as_ref().filter(|_| n > 0).map(|grid| {
            grid.iter()
                .enumerate()
                .map(|(i, &rate)| CdfPoint {
                    rate,
                    r1: Estimate::proportion(total.cdf_r1[i], n),
                    r2: Estimate::proportion(total.cdf_r2[i], n),
                })
                .collect()
        }),
        mean_r1: has(m.mean_rates).then(|| Estimate::mean(total.sum[0], total.sum_sq[0], n)),
        mean_r2: has(m.mean_rates).then(|| Estimate::mean(total.sum[1], total.sum_sq[1], n)),
        elapsed: start.elapsed(),
    })
}

/// Empirical CDF of both users' rates over `grid`.
pub fn rate_cdf(plan: &TrialPlan, grid: &[f64]) -> Result<Vec<CdfPoint>> {
    let mut p = plan.clone();
    p.metrics = MetricSet {
        cdf_grid: Some(grid.to_vec()),
        ..MetricSet::default()
    };
    run_trials(&p)?
        .cdf
        .ok_or_else(|| crate::Error::InsufficientData("every trial failed".into()))
}
