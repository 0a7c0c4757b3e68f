//! Experiment descriptions. A spec fully determines an experiment's CSV
//! output; it is echoed into every manifest.

use coop_uplink::channel::LinkConfig;
use coop_uplink::rates::SchemeId;
use coop_uplink::sca::ScaOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    RateRegion,
    Converge,
    RateVsPower,
    RateVsGap,
    RateVsInteruserSnr,
    RateVsKsic,
    OutageVsPower,
    RateCdf,
    Rates,
}

impl ExperimentKind {
    /// Base name of the CSV the experiment writes.
    pub fn file_stem(self) -> &'static str {
        match self {
            ExperimentKind::RateRegion => "rate_region",
            ExperimentKind::Converge => "converge",
            ExperimentKind::RateVsPower => "rate_vs_power",
            ExperimentKind::RateVsGap => "rate_vs_gap",
            ExperimentKind::RateVsInteruserSnr => "rate_vs_interuser_snr",
            ExperimentKind::RateVsKsic => "rate_vs_ksic",
            ExperimentKind::OutageVsPower => "outage_vs_power",
            ExperimentKind::RateCdf => "rate_cdf",
            ExperimentKind::Rates => "rates",
        }
    }

    pub fn is_rate_sweep(self) -> bool {
        matches!(
            self,
            ExperimentKind::RateVsPower
                | ExperimentKind::RateVsGap
                | ExperimentKind::RateVsInteruserSnr
                | ExperimentKind::RateVsKsic
        )
    }

    /// Column name of the swept quantity.
    pub fn axis_name(self) -> &'static str {
        match self {
            ExperimentKind::RateVsPower | ExperimentKind::OutageVsPower => "power_dbm",
            ExperimentKind::RateVsGap => "gap_db",
            ExperimentKind::RateVsInteruserSnr => "interuser_snr_db",
            ExperimentKind::RateVsKsic => "k_sic_db",
            ExperimentKind::RateCdf => "rate",
            _ => "",
        }
    }
}

/// Inclusive arithmetic sweep `start, start + step, …, ≤ stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Sweep {
    pub fn new(start: f64, stop: f64, step: f64) -> Self {
        Self { start, stop, step }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(
            self.start.is_finite() && self.stop.is_finite() && self.step.is_finite(),
            "sweep bounds must be finite"
        );
        anyhow::ensure!(self.step > 0.0, "sweep step must be > 0, got {}", self.step);
        anyhow::ensure!(self.stop >= self.start, "sweep is empty: stop {} < start {}", self.stop, self.start);
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub link: LinkConfig,
    /// Axis of the sweep kinds and rate grid of `rate-cdf`.
    pub sweep: Option<Sweep>,
    pub schemes: Vec<SchemeId>,
    pub fairness: Vec<f64>,
    pub seed: u64,
    pub trials: u64,
    pub sca: ScaOptions,
    /// `R₂^{th}` of the outage experiment, bps/Hz.
    pub r_threshold: f64,
    /// Axis window (inclusive) over which the diversity slope is fitted.
    pub slope_window: (f64, f64),
}

/// 41 log-spaced fairness coefficients in `[1/64, 64]`.
pub fn region_fairness() -> Vec<f64> {
    (0..=40).map(|k| 64f64.powf((k as f64 - 20.0) / 20.0)).collect()
}

impl ExperimentSpec {
    /// Defaults of each experiment kind.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut link = LinkConfig {
            gap_db: 10.0,
            ..LinkConfig::default()
        };
        let cooperative = vec![SchemeId::CNoma, SchemeId::CRsma];
        let (sweep, schemes, fairness, trials) = match kind {
            ExperimentKind::RateRegion => (None, SchemeId::ALL.to_vec(), region_fairness(), 0),
            ExperimentKind::Converge => (None, cooperative, vec![1.0, 1.0 / 3.0], 0),
            ExperimentKind::RateVsPower => (Some(Sweep::new(0.0, 40.0, 1.0)), SchemeId::ALL.to_vec(), vec![1.0], 0),
            ExperimentKind::RateVsGap => (Some(Sweep::new(0.0, 20.0, 1.0)), SchemeId::ALL.to_vec(), vec![1.0], 0),
            ExperimentKind::RateVsInteruserSnr => {
                (Some(Sweep::new(0.0, 40.0, 1.0)), cooperative, vec![1.0 / 3.0], 0)
            }
            ExperimentKind::RateVsKsic => {
                (Some(Sweep::new(-100.0, -20.0, 1.0)), cooperative, vec![1.0 / 3.0], 0)
            }
            ExperimentKind::OutageVsPower => {
                link.d2_m = 120.0;
                link.gap_db = 0.0;
                (Some(Sweep::new(0.0, 50.0, 1.0)), SchemeId::ALL.to_vec(), vec![1.0], 1_000_000)
            }
            ExperimentKind::RateCdf => (Some(Sweep::new(0.0, 6.0, 0.1)), SchemeId::ALL.to_vec(), vec![1.0], 10_000),
            ExperimentKind::Rates => (None, SchemeId::ALL.to_vec(), vec![1.0], 0),
        };
        Self {
            kind,
            link,
            sweep,
            schemes,
            fairness,
            seed: 1,
            trials,
            sca: ScaOptions::default(),
            r_threshold: 0.5,
            slope_window: (30.0, 50.0),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(!self.schemes.is_empty(), "no schemes selected");
        anyhow::ensure!(!self.fairness.is_empty(), "no fairness coefficients selected");
        for &f in &self.fairness {
            anyhow::ensure!(f.is_finite() && f > 0.0, "fairness must be > 0, got {f}");
        }
        self.sca.validate()?;
        coop_uplink::channel::build_link_budget(&self.link)?;
        self.link.non_ideal()?;
        let needs_sweep = self.kind.is_rate_sweep()
            || matches!(self.kind, ExperimentKind::OutageVsPower | ExperimentKind::RateCdf);
        match (&self.sweep, needs_sweep) {
            (Some(s), true) => s.validate()?,
            (None, true) => anyhow::bail!("{:?} needs a sweep", self.kind),
            _ => {}
        }
        if matches!(self.kind, ExperimentKind::OutageVsPower | ExperimentKind::RateCdf) {
            anyhow::ensure!(self.trials >= 1, "trials must be >= 1");
        }
        anyhow::ensure!(
            self.r_threshold.is_finite() && self.r_threshold > 0.0,
            "threshold must be > 0, got {}",
            self.r_threshold
        );
        Ok(())
    }
}

/// Parses `0.5`, `3` or `1/3`.
pub fn parse_fraction(s: &str) -> anyhow::Result<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((n, d)) => n.trim().parse::<f64>()? / d.trim().parse::<f64>()?,
        None => s.parse::<f64>()?,
    };
    anyhow::ensure!(v.is_finite(), "`{s}` is not a finite number");
    Ok(v)
}
