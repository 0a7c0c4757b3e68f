use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use coop_uplink::channel::LinkConfig;
use coop_uplink::rates::SchemeId;
use coop_uplink_cli::manifest::{execute, replay, MANIFEST_FILE};
use coop_uplink_cli::spec::{parse_fraction, ExperimentKind, ExperimentSpec, Sweep};

#[derive(Parser)]
#[command(name = "coop-uplink", version, about = "Rate, power-allocation and outage experiments for two-user cooperative uplink")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Link configuration file (`key = value` lines) applied over the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for the CSVs and the manifest.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Monte-Carlo trials per point.
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Comma-separated schemes, e.g. `C-NOMA,C-RSMA`.
    #[arg(long, global = true, value_delimiter = ',')]
    scheme: Option<Vec<String>>,
    /// Comma-separated fairness coefficients; fractions like `1/3` allowed.
    #[arg(long, global = true, value_delimiter = ',')]
    fairness: Option<Vec<String>>,
    /// Worker threads; output does not depend on this.
    #[arg(long, global = true, default_value_t = default_workers())]
    workers: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Args, Default)]
struct Axis {
    #[arg(long)]
    start: Option<f64>,
    #[arg(long)]
    stop: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepAxis {
    Power,
    Gap,
    InteruserSnr,
    Ksic,
}

#[derive(Subcommand)]
enum Command {
    /// Max-min frontier points over a log sweep of the fairness coefficient.
    RateRegion,
    /// SCA iteration traces with the grid-search optimum for reference.
    Converge,
    /// Optimized rates along one axis.
    Sweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[command(flatten)]
        range: Axis,
    },
    /// Outage probability versus transmit power (dBm).
    Outage {
        #[command(flatten)]
        range: Axis,
        /// Required rate of user 2, bps/Hz.
        #[arg(long)]
        threshold: Option<f64>,
        /// Power window `lo,hi` (dBm) of the diversity fit.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        slope_window: Option<Vec<f64>>,
    },
    /// Empirical CDF of per-draw optimized rates; the range is the rate grid.
    Cdf {
        #[command(flatten)]
        range: Axis,
    },
    /// Optimized rates at the configured operating point.
    Rates,
    /// Re-run the experiment recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Compare the regenerated CSVs with those next to the manifest.
        #[arg(long)]
        check: bool,
    },
}

fn build_spec(kind: ExperimentKind, g: &Global, range: Option<&Axis>) -> anyhow::Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::defaults(kind);
    if let Some(path) = &g.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        spec.link = LinkConfig::overlay(&spec.link, &text)?;
    }
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    if let Some(t) = g.trials {
        spec.trials = t;
    }
    if let Some(list) = &g.scheme {
        spec.schemes = list.iter().map(|s| s.parse::<SchemeId>()).collect::<Result<_, _>>()?;
    }
    if let Some(list) = &g.fairness {
        spec.fairness = list.iter().map(|s| parse_fraction(s)).collect::<Result<_, _>>()?;
    }
    if let (Some(r), Some(base)) = (range, spec.sweep) {
        spec.sweep = Some(Sweep::new(
            r.start.unwrap_or(base.start),
            r.stop.unwrap_or(base.stop),
            r.step.unwrap_or(base.step),
        ));
    }
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(true)` when every row succeeded.
fn run(cli: Cli) -> anyhow::Result<bool> {
    let g = &cli.global;
    let spec = match &cli.command {
        Command::RateRegion => build_spec(ExperimentKind::RateRegion, g, None)?,
        Command::Converge => build_spec(ExperimentKind::Converge, g, None)?,
        Command::Sweep { axis, range } => {
            let kind = match axis {
                SweepAxis::Power => ExperimentKind::RateVsPower,
                SweepAxis::Gap => ExperimentKind::RateVsGap,
                SweepAxis::InteruserSnr => ExperimentKind::RateVsInteruserSnr,
                SweepAxis::Ksic => ExperimentKind::RateVsKsic,
            };
            build_spec(kind, g, Some(range))?
        }
        Command::Outage {
            range,
            threshold,
            slope_window,
        } => {
            let mut spec = build_spec(ExperimentKind::OutageVsPower, g, Some(range))?;
            if let Some(t) = threshold {
                spec.r_threshold = *t;
            }
            if let Some(w) = slope_window {
                spec.slope_window = (w[0], w[1]);
            }
            spec
        }
        Command::Cdf { range } => build_spec(ExperimentKind::RateCdf, g, Some(range))?,
        Command::Rates => build_spec(ExperimentKind::Rates, g, None)?,
        Command::Replay { manifest, check } => {
            let report = replay(manifest, &g.out, g.workers, *check)?;
            for o in &report.manifest.outputs {
                eprintln!("wrote {} ({} rows)", g.out.join(&o.file).display(), o.rows);
            }
            if *check {
                if report.mismatched.is_empty() {
                    eprintln!("replay identical to the original outputs");
                } else {
                    for p in &report.mismatched {
                        eprintln!("differs: {}", p.display());
                    }
                    return Ok(false);
                }
            }
            return Ok(report.manifest.failed_rows() == 0);
        }
    };
    let manifest = execute(&spec, &g.out, g.workers)?;
    for o in &manifest.outputs {
        eprintln!(
            "wrote {} ({} rows, {} failed)",
            g.out.join(&o.file).display(),
            o.rows,
            o.failed
        );
    }
    eprintln!("wrote {}", g.out.join(MANIFEST_FILE).display());
    Ok(manifest.failed_rows() == 0)
}
