//! Experiment runners. Every runner turns an [`ExperimentSpec`] into CSV
//! tables; jobs run on the current rayon pool and are collected in job
//! order, so the output does not depend on the number of workers.

use coop_uplink::channel::{build_link_budget, LinkBudget, LinkConfig, RelayImpairments};
use coop_uplink::montecarlo::{
    rate_cdf, run_trials, AllocationPolicy, FadingModel, MetricSet, OutageTarget, TrialPlan,
};
use coop_uplink::outage::{
    asymptotic_outage, cnoma_outage_exact, estimate_diversity, outage_allocation, outage_by_quadrature,
    NumeratorForm, OutageEvent, OutageSpec, QuadratureOptions,
};
use coop_uplink::rates::{Allocation, SchemeId};
use coop_uplink::sca::{
    exhaustive_search, exhaustive_search_with, optimize_cnoma, optimize_coma, optimize_crsma, optimize_scheme,
    ScaTrace,
};
use coop_uplink::units::linear_to_db;
use rayon::prelude::*;

use crate::spec::{ExperimentKind, ExperimentSpec};

/// One CSV table. Every row carries a status; `ok` or an error message.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub cells: Vec<String>,
    pub status: String,
}

impl Row {
    fn ok(cells: Vec<String>) -> Self {
        Self {
            cells,
            status: "ok".into(),
        }
    }

    /// A failed row keeps its key cells and leaves the rest empty.
    fn failed(mut keys: Vec<String>, width: usize, err: impl std::fmt::Display) -> Self {
        keys.resize(width, String::new());
        Self {
            cells: keys,
            status: format!("error: {err}"),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push_str(",status\n");
        for r in &self.rows {
            let cells: Vec<String> = r.cells.iter().map(|c| quote(c)).collect();
            out.push_str(&cells.join(","));
            out.push(',');
            out.push_str(&quote(&r.status));
            out.push('\n');
        }
        out
    }

    /// Index of a column by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn quote(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\"").replace('\n', " "))
    } else {
        cell.to_string()
    }
}

/// Shortest round-trip rendering; scientific outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x == 0.0 || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

pub fn run(spec: &ExperimentSpec) -> anyhow::Result<Vec<Table>> {
    spec.validate()?;
    Ok(match spec.kind {
        ExperimentKind::RateRegion => vec![rate_region(spec)?],
        ExperimentKind::Converge => vec![convergence(spec)?],
        k if k.is_rate_sweep() => vec![rate_sweep(spec)?],
        ExperimentKind::OutageVsPower => outage_vs_power(spec)?,
        ExperimentKind::RateCdf => rate_cdf_tables(spec)?,
        ExperimentKind::Rates => vec![single_point(spec)?],
        _ => unreachable!("all kinds handled"),
    })
}

/// Runs on a dedicated pool of `workers` threads.
pub fn run_with_workers(spec: &ExperimentSpec, workers: usize) -> anyhow::Result<Vec<Table>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    pool.install(|| run(spec))
}

fn mean_snrs(link: &LinkConfig) -> anyhow::Result<(LinkBudget, f64, f64)> {
    let b = build_link_budget(link)?;
    Ok((b, b.omega1(), b.omega2()))
}

fn jobs(spec: &ExperimentSpec) -> Vec<(f64, SchemeId)> {
    spec.fairness
        .iter()
        .flat_map(|&f| spec.schemes.iter().map(move |&s| (f, s)))
        .collect()
}

fn rate_region(spec: &ExperimentSpec) -> anyhow::Result<Table> {
    let (_, g1, g2) = mean_snrs(&spec.link)?;
    let mut t = Table::new(spec.kind.file_stem(), &["f", "scheme", "r1", "r2", "objective"]);
    t.rows = jobs(spec)
        .par_iter()
        .map(|&(f, s)| {
            let keys = vec![num(f), s.to_string()];
            match optimize_scheme(s, g1, g2, f, &spec.sca) {
                Ok(o) => Row::ok(vec![num(f), s.to_string(), num(o.rates.r1), num(o.rates.r2), num(o.objective)]),
                Err(e) => Row::failed(keys, 5, e),
            }
        })
        .collect();
    Ok(t)
}

/// SCA trace of a cooperative scheme.
pub fn sca_trace(scheme: SchemeId, g1: f64, g2: f64, f: f64, opts: &coop_uplink::sca::ScaOptions) -> anyhow::Result<ScaTrace> {
    Ok(match scheme {
        SchemeId::CNoma => optimize_cnoma(g1, g2, f, opts)?.1,
        SchemeId::CRsma => optimize_crsma(g1, g2, f, opts)?.1,
        SchemeId::COma => optimize_coma(g1, g2, f, opts)?.1,
        other => anyhow::bail!("{other} is not optimized by SCA"),
    })
}

fn convergence(spec: &ExperimentSpec) -> anyhow::Result<Table> {
    let (_, g1, g2) = mean_snrs(&spec.link)?;
    let header = ["scheme", "f", "iter", "eta", "r1", "r2", "objective", "newton_iters", "exhaustive_opt"];
    let mut t = Table::new(spec.kind.file_stem(), &header);
    let blocks: Vec<Vec<Row>> = jobs(spec)
        .par_iter()
        .map(|&(f, s)| {
            let keys = vec![s.to_string(), num(f)];
            let trace = match sca_trace(s, g1, g2, f, &spec.sca) {
                Ok(tr) => tr,
                Err(e) => return vec![Row::failed(keys, header.len(), e)],
            };
            let grid = match exhaustive_search(s, g1, g2, f, spec.sca.grid_res) {
                Ok(o) => o.objective,
                Err(e) => return vec![Row::failed(keys, header.len(), e)],
            };
            let mut rows: Vec<Row> = trace
                .steps
                .iter()
                .map(|st| {
                    Row::ok(vec![
                        s.to_string(),
                        num(f),
                        st.iteration.to_string(),
                        num(st.eta),
                        num(st.r1),
                        num(st.r2),
                        num(st.objective(f)),
                        st.newton_iters.to_string(),
                        num(grid),
                    ])
                })
                .collect();
            if !trace.converged {
                if let Some(last) = rows.last_mut() {
                    last.status = format!("error: no convergence within {} iterations", spec.sca.sca_max_iter);
                }
            }
            rows
        })
        .collect();
    t.rows = blocks.into_iter().flatten().collect();
    Ok(t)
}

fn with_axis(kind: ExperimentKind, link: &LinkConfig, v: f64) -> LinkConfig {
    let mut l = link.clone();
    match kind {
        ExperimentKind::RateVsPower | ExperimentKind::OutageVsPower => {
            l.p1_dbm = v;
            l.p2_dbm = v;
        }
        ExperimentKind::RateVsGap => l.gap_db = v,
        ExperimentKind::RateVsInteruserSnr => l.inter_user_snr_db = Some(v),
        ExperimentKind::RateVsKsic => l.k_sic_db = Some(v),
        _ => {}
    }
    l
}

/// Max-min rates at one operating point: under the configured relay model
/// and under ideal relaying, both found with the same method.
///
/// Ideal points use each scheme's designated optimizer. Non-ideal points
/// use the grid search for both columns, so the comparison is free of
/// method error. The inter-user channel is taken at its mean.
pub fn operating_point(
    link: &LinkConfig,
    scheme: SchemeId,
    f: f64,
    opts: &coop_uplink::sca::ScaOptions,
) -> anyhow::Result<[f64; 6]> {
    let (b, g1, g2) = mean_snrs(link)?;
    let nip = link.non_ideal()?;
    if nip.is_ideal() {
        let o = optimize_scheme(scheme, g1, g2, f, opts)?;
        let r = [o.rates.r1, o.rates.r2, o.objective];
        return Ok([r[0], r[1], r[2], r[0], r[1], r[2]]);
    }
    let imp = nip.relay_impairments(&b, 1.0);
    let real = exhaustive_search_with(scheme, g1, g2, f, opts.grid_res, &imp)?;
    let ideal = exhaustive_search_with(scheme, g1, g2, f, opts.grid_res, &RelayImpairments::ideal())?;
    Ok([
        real.rates.r1,
        real.rates.r2,
        real.objective,
        ideal.rates.r1,
        ideal.rates.r2,
        ideal.objective,
    ])
}

fn rate_sweep(spec: &ExperimentSpec) -> anyhow::Result<Table> {
    let axis = spec.kind.axis_name();
    let header = [axis, "scheme", "f", "r1", "r2", "objective", "ideal_r1", "ideal_r2", "ideal_objective"];
    let mut t = Table::new(spec.kind.file_stem(), &header);
    let values = spec.sweep.expect("validated").values();
    let work: Vec<(f64, f64, SchemeId)> = values
        .iter()
        .flat_map(|&v| jobs(spec).into_iter().map(move |(f, s)| (v, f, s)))
        .collect();
    t.rows = work
        .par_iter()
        .map(|&(v, f, s)| {
            let keys = vec![num(v), s.to_string(), num(f)];
            match operating_point(&with_axis(spec.kind, &spec.link, v), s, f, &spec.sca) {
                Ok(r) => {
                    let mut cells = keys;
                    cells.extend(r.iter().map(|&x| num(x)));
                    Row::ok(cells)
                }
                Err(e) => Row::failed(keys, header.len(), e),
            }
        })
        .collect();
    Ok(t)
}

/// Closed-form, quadrature and Monte-Carlo outage of one scheme at one
/// operating point under a fixed allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct OutagePoint {
    pub omega1: f64,
    pub omega2: f64,
    pub mc_user2: (f64, f64),
    pub mc_joint: (f64, f64),
    pub exact: Option<f64>,
    pub asymptotic: Option<f64>,
    pub quadrature: Option<f64>,
    pub n: u64,
}

pub fn outage_point(
    link: &LinkConfig,
    scheme: SchemeId,
    allocation: Allocation,
    spec: &ExperimentSpec,
) -> anyhow::Result<OutagePoint> {
    let (b, o1, o2) = mean_snrs(link)?;
    let f = spec.fairness[0];
    let ospec = OutageSpec::new(spec.r_threshold, f, allocation)?;
    let non_ideal = link.non_ideal()?;
    let ideal = non_ideal.is_ideal();
    let plan = TrialPlan {
        trials: spec.trials,
        seed: spec.seed,
        scheme,
        policy: AllocationPolicy::Fixed(allocation),
        budget: b,
        non_ideal,
        fading: FadingModel::Rayleigh,
        metrics: MetricSet {
            outage: Some(OutageTarget {
                r2_threshold: spec.r_threshold,
                fairness: f,
            }),
            ..MetricSet::default()
        },
    };
    let mc = run_trials(&plan)?;
    let pair = |e: Option<coop_uplink::montecarlo::Estimate>| e.map_or((f64::NAN, f64::NAN), |e| (e.value, e.stderr));
    let exact = (ideal && scheme == SchemeId::CNoma)
        .then(|| cnoma_outage_exact(&ospec, o1, o2))
        .transpose()?;
    let asymptotic = (ideal && matches!(scheme, SchemeId::CNoma | SchemeId::CRsma))
        .then(|| asymptotic_outage(scheme, &ospec, o1, o2, NumeratorForm::Squared))
        .transpose()?;
    let quadrature = ideal
        .then(|| {
            outage_by_quadrature(
                scheme,
                &ospec,
                o1,
                o2,
                OutageEvent::User2,
                &RelayImpairments::ideal(),
                &QuadratureOptions::default(),
            )
        })
        .transpose()?;
    Ok(OutagePoint {
        omega1: o1,
        omega2: o2,
        mc_user2: pair(mc.outage_user2),
        mc_joint: pair(mc.outage_joint),
        exact,
        asymptotic,
        quadrature,
        n: mc.effective(),
    })
}

fn outage_vs_power(spec: &ExperimentSpec) -> anyhow::Result<Vec<Table>> {
    let header = [
        "power_dbm",
        "scheme",
        "omega1_db",
        "omega2_db",
        "mc_outage",
        "stderr",
        "mc_outage_joint",
        "stderr_joint",
        "exact",
        "asymptotic",
        "quadrature",
        "slope",
    ];
    let values = spec.sweep.expect("validated").values();
    let work: Vec<(f64, SchemeId)> = values
        .iter()
        .flat_map(|&v| spec.schemes.iter().map(move |&s| (v, s)))
        .collect();
    // Allocations are optimized once, from the mean SNRs at the configured
    // power, and held fixed along the power axis.
    let (_, o1, o2) = mean_snrs(&spec.link)?;
    let allocations: Vec<anyhow::Result<Allocation>> = spec
        .schemes
        .par_iter()
        .map(|&s| Ok(outage_allocation(s, o1, o2, spec.fairness[0], &spec.sca)?))
        .collect();
    let points: Vec<anyhow::Result<OutagePoint>> = work
        .par_iter()
        .map(|&(v, s)| {
            let idx = spec.schemes.iter().position(|x| *x == s).expect("scheme listed");
            let allocation = allocations[idx].as_ref().map_err(|e| anyhow::anyhow!("{e:#}"))?;
            outage_point(&with_axis(spec.kind, &spec.link, v), s, *allocation, spec)
        })
        .collect();

    // Diversity slope of each scheme from the quadrature column.
    let (lo, hi) = spec.slope_window;
    let slopes: Vec<Option<f64>> = spec
        .schemes
        .iter()
        .map(|&s| {
            let pts: Vec<(f64, f64)> = work
                .iter()
                .zip(&points)
                .filter(|((v, sc), _)| *sc == s && (lo..=hi).contains(v))
                .filter_map(|((v, _), p)| Some((*v, p.as_ref().ok()?.quadrature?)))
                .collect();
            estimate_diversity(&pts).ok().map(|d| d.slope)
        })
        .collect();

    let mut t = Table::new(spec.kind.file_stem(), &header);
    let mut mc = Table::new(&format!("{}_mc", spec.kind.file_stem()), &["power_dbm", "scheme", "metric", "value", "stderr", "n", "seed"]);
    for ((v, s), p) in work.iter().zip(points) {
        let keys = vec![num(*v), s.to_string()];
        let slope = slopes[spec.schemes.iter().position(|x| x == s).expect("scheme listed")];
        match p {
            Ok(p) => {
                t.rows.push(Row::ok(vec![
                    num(*v),
                    s.to_string(),
                    num(linear_to_db(p.omega1)),
                    num(linear_to_db(p.omega2)),
                    num(p.mc_user2.0),
                    num(p.mc_user2.1),
                    num(p.mc_joint.0),
                    num(p.mc_joint.1),
                    opt_num(p.exact),
                    opt_num(p.asymptotic),
                    opt_num(p.quadrature),
                    opt_num(slope),
                ]));
                for (metric, (val, se)) in [("outage_user2", p.mc_user2), ("outage_joint", p.mc_joint)] {
                    mc.rows.push(Row::ok(vec![
                        num(*v),
                        s.to_string(),
                        metric.into(),
                        num(val),
                        num(se),
                        p.n.to_string(),
                        spec.seed.to_string(),
                    ]));
                }
            }
            Err(e) => {
                t.rows.push(Row::failed(keys.clone(), header.len(), &e));
                mc.rows.push(Row::failed(keys, 7, e));
            }
        }
    }
    Ok(vec![t, mc])
}

fn rate_cdf_tables(spec: &ExperimentSpec) -> anyhow::Result<Vec<Table>> {
    let (b, _, _) = mean_snrs(&spec.link)?;
    let grid = spec.sweep.expect("validated").values();
    let f = spec.fairness[0];
    let results: Vec<anyhow::Result<Vec<coop_uplink::montecarlo::CdfPoint>>> = spec
        .schemes
        .iter()
        .map(|&s| {
            let plan = TrialPlan {
                trials: spec.trials,
                seed: spec.seed,
                scheme: s,
                policy: AllocationPolicy::Reoptimize { fairness: f, opts: spec.sca },
                budget: b,
                non_ideal: spec.link.non_ideal()?,
                fading: FadingModel::Rayleigh,
                metrics: MetricSet::default(),
            };
            Ok(rate_cdf(&plan, &grid)?)
        })
        .collect();
    let header = ["rate", "scheme", "cdf_r1", "stderr_r1", "cdf_r2", "stderr_r2", "n"];
    let mut t = Table::new(spec.kind.file_stem(), &header);
    let mut mc = Table::new(&format!("{}_mc", spec.kind.file_stem()), &["rate", "scheme", "metric", "value", "stderr", "n", "seed"]);
    for (i, &r) in grid.iter().enumerate() {
        for (s, res) in spec.schemes.iter().zip(&results) {
            let keys = vec![num(r), s.to_string()];
            match res {
                Ok(cdf) => {
                    let p = cdf[i];
                    t.rows.push(Row::ok(vec![
                        num(r),
                        s.to_string(),
                        num(p.r1.value),
                        num(p.r1.stderr),
                        num(p.r2.value),
                        num(p.r2.stderr),
                        spec.trials.to_string(),
                    ]));
                    for (metric, e) in [("cdf_r1", p.r1), ("cdf_r2", p.r2)] {
                        mc.rows.push(Row::ok(vec![
                            num(r),
                            s.to_string(),
                            metric.into(),
                            num(e.value),
                            num(e.stderr),
                            spec.trials.to_string(),
                            spec.seed.to_string(),
                        ]));
                    }
                }
                Err(e) => {
                    t.rows.push(Row::failed(keys.clone(), header.len(), e));
                    mc.rows.push(Row::failed(keys, 7, e));
                }
            }
        }
    }
    Ok(vec![t, mc])
}

fn single_point(spec: &ExperimentSpec) -> anyhow::Result<Table> {
    let (_, g1, g2) = mean_snrs(&spec.link)?;
    let header = ["scheme", "f", "omega1_db", "omega2_db", "r1", "r2", "objective", "allocation"];
    let mut t = Table::new(spec.kind.file_stem(), &header);
    t.rows = jobs(spec)
        .par_iter()
        .map(|&(f, s)| {
            let keys = vec![s.to_string(), num(f), num(linear_to_db(g1)), num(linear_to_db(g2))];
            let run = || -> anyhow::Result<Row> {
                let o = optimize_scheme(s, g1, g2, f, &spec.sca)?;
                let mut cells = keys.clone();
                cells.extend([num(o.rates.r1), num(o.rates.r2), num(o.objective), serde_json::to_string(&o.allocation)?]);
                Ok(Row::ok(cells))
            };
            run().unwrap_or_else(|e| Row::failed(keys.clone(), header.len(), e))
        })
        .collect();
    Ok(t)
}
