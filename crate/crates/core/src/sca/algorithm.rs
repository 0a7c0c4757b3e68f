//! Successive convex approximation loop.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::{cnoma_rates, SchemeId, SlotPowers, SplitPowers};

use super::barrier::{build_subproblem, solve_subproblem, ConvexSubproblem, SolverOptions, START_FLOOR};
use super::posynomial::NVARS;
use super::program::{linearize, pack_slots, LinearizationPoint, pack_split, unpack_slots, unpack_split, RateProgram};

/// Tunables of the SCA loop, its inner solver and the grid oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaOptions {
    pub sca_tol: f64,
    pub sca_max_iter: usize,
    pub newton_tol: f64,
    pub barrier_mu0: f64,
    pub grid_res: f64,
    pub damping_max: usize,
    /// Extrapolate the linearization point along the previous step.
    pub extrapolate: bool,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self {
            sca_tol: 1e-6,
            sca_max_iter: 50,
            newton_tol: 1e-10,
            barrier_mu0: 1.0,
            grid_res: 0.01,
            damping_max: 10,
            extrapolate: true,
        }
    }
}

impl ScaOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(crate::error::validation(name, format!("must be > 0, got {v}")))
            }
        };
        pos("sca_tol", self.sca_tol)?;
        pos("newton_tol", self.newton_tol)?;
        pos("barrier_mu0", self.barrier_mu0)?;
        pos("grid_res", self.grid_res)?;
        if self.sca_max_iter == 0 {
            return Err(crate::error::validation("sca_max_iter", "must be >= 1"));
        }
        Ok(())
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions {
            mu0: self.barrier_mu0,
            newton_tol: self.newton_tol,
            ..SolverOptions::default()
        }
    }
}

/// One SCA iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaStep {
    pub iteration: usize,
    pub point: [f64; NVARS],
    /// Lower-bound objective at the iterate.
    pub eta: f64,
    pub r1: f64,
    pub r2: f64,
    pub newton_iters: usize,
    pub kkt_residual: f64,
    pub damping: usize,
}

impl ScaStep {
    pub fn objective(&self, fairness: f64) -> f64 {
        self.r1.min(fairness * self.r2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaTrace {
    pub scheme: SchemeId,
    pub fairness: f64,
    pub steps: Vec<ScaStep>,
    pub converged: bool,
}

impl ScaTrace {
    /// Number of SCA iterations after the initial point.
    pub fn iterations(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn last(&self) -> &ScaStep {
        self.steps.last().expect("trace holds the initial point")
    }

    pub fn objective(&self) -> f64 {
        self.last().objective(self.fairness)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,eta,r1,r2,newton_iters\n");
        for st in &self.steps {
            let _ = writeln!(
                s,
                "{},{:.12e},{:.12e},{:.12e},{}",
                st.iteration, st.eta, st.r1, st.r2, st.newton_iters
            );
        }
        s
    }
}

fn floor_into_budgets(program: &RateProgram, p: &mut [f64; NVARS]) {
    for &v in &program.vars {
        p[v] = p[v].max(START_FLOOR);
    }
    for b in &program.budgets {
        let sum: f64 = b.vars.iter().map(|&v| p[v]).sum();
        if sum > b.cap {
            for &v in &b.vars {
                p[v] *= b.cap / sum;
            }
        }
    }
}

const MAX_EXTRAPOLATION: f64 = 8.0;

/// A linearization point together with its subproblem.
struct Anchor {
    point: [f64; NVARS],
    lp: LinearizationPoint,
    sp: ConvexSubproblem,
}

fn anchor_at(program: &RateProgram, fairness: f64, point: [f64; NVARS]) -> Result<Anchor> {
    let lp = linearize(program, &point)?;
    let sp = build_subproblem(&lp, fairness)?;
    Ok(Anchor { point, lp, sp })
}

/// `ln p_new + β·(ln p_new − ln p_old)` pulled back into the budgets.
fn extrapolate(
    program: &RateProgram,
    old: &[f64; NVARS],
    new: &[f64; NVARS],
    beta: f64,
) -> [f64; NVARS] {
    let mut p = *new;
    for &v in &program.vars {
        p[v] = (new[v].ln() + beta * (new[v].ln() - old[v].ln())).exp();
    }
    floor_into_budgets(program, &mut p);
    p
}

/// Solution of one linearized subproblem.
struct Step {
    target: [f64; NVARS],
    eta: f64,
    newton_iters: usize,
    kkt_residual: f64,
}

fn solve_at(program: &RateProgram, fairness: f64, anchor: &Anchor, opts: &SolverOptions) -> Result<Step> {
    let sol = solve_subproblem(&anchor.sp, opts)?;
    let mut target = sol.point;
    floor_into_budgets(program, &mut target);
    let eta = anchor
        .lp
        .lower_bound(0, &target)
        .min(fairness * anchor.lp.lower_bound(1, &target));
    Ok(Step {
        target,
        eta,
        newton_iters: sol.stats.newton_iters,
        kkt_residual: sol.stats.kkt_residual,
    })
}

/// Runs the SCA loop on `program` from `start`.
///
/// Each iteration records the optimum `η` of the linearized subproblem and
/// moves to its solution. With `extrapolate` set, the subproblem is first
/// linearized at a point pushed past the current iterate along the last
/// log-domain step; that result is kept only if its `η` is at least the
/// current true objective, which keeps `η` and the true objective
/// non-decreasing. Otherwise the plain step from the current iterate is
/// taken.
pub fn run_sca(
    program: &RateProgram,
    fairness: f64,
    start: [f64; NVARS],
    opts: &ScaOptions,
) -> Result<([f64; NVARS], ScaTrace)> {
    opts.validate()?;
    if !(fairness.is_finite() && fairness > 0.0) {
        return Err(crate::error::validation("fairness", format!("must be > 0, got {fairness}")));
    }
    let annotate = |iteration: usize| move |e: Error| Error::Sca {
        iteration,
        source: Box::new(e),
    };
    let solver = opts.solver();
    let obj = |p: &[f64; NVARS]| program.rate(0, p).min(fairness * program.rate(1, p));

    let mut trace = ScaTrace {
        scheme: program.scheme,
        fairness,
        steps: vec![ScaStep {
            iteration: 0,
            point: start,
            eta: obj(&start),
            r1: program.rate(0, &start),
            r2: program.rate(1, &start),
            newton_iters: 0,
            kkt_residual: 0.0,
            damping: 0,
        }],
        converged: false,
    };
    let mut current = anchor_at(program, fairness, start).map_err(annotate(0))?;
    let mut previous: Option<[f64; NVARS]> = None;
    let mut beta = 1.0;

    for iteration in 1..=opts.sca_max_iter {
        let p = current.point;
        let current_obj = obj(&p);
        let mut newton_iters = 0;

        let mut accepted = None;
        if let (true, Some(old)) = (opts.extrapolate, previous) {
            let ext = extrapolate(program, &old, &p, beta);
            if let Ok(anchor) = anchor_at(program, fairness, ext) {
                if let Ok(step) = solve_at(program, fairness, &anchor, &solver) {
                    newton_iters += step.newton_iters;
                    if step.eta >= current_obj {
                        accepted = Some(step);
                    }
                }
            }
            beta = if accepted.is_some() {
                (2.0 * beta).min(MAX_EXTRAPOLATION)
            } else {
                1.0
            };
        }
        let step = match accepted {
            Some(step) => step,
            None => {
                let step = solve_at(program, fairness, &current, &solver).map_err(annotate(iteration))?;
                newton_iters += step.newton_iters;
                step
            }
        };
        if step.eta < current_obj - 5e-10 {
            // Solver round-off has overtaken the progress; keep the current
            // iterate and stop.
            trace.converged = true;
            break;
        }

        // Move to the new point if the next subproblem can be built there;
        // otherwise back off halfway towards the current iterate.
        let mut target = step.target;
        let mut damping = 0;
        let next = loop {
            match anchor_at(program, fairness, target) {
                Ok(anchor) => break anchor,
                Err(e @ (Error::LinearizationInfeasible(_) | Error::Domain(_))) => {
                    if damping >= opts.damping_max {
                        return Err(annotate(iteration)(e));
                    }
                    damping += 1;
                    for v in 0..NVARS {
                        target[v] = 0.5 * (p[v] + target[v]);
                    }
                }
                Err(e) => return Err(annotate(iteration)(e)),
            }
        };
        if obj(&target) < current_obj - 5e-10 {
            trace.converged = true;
            break;
        }

        let prev_eta = trace.last().eta;
        previous = Some(p);
        current = next;
        trace.steps.push(ScaStep {
            iteration,
            point: target,
            eta: step.eta,
            r1: program.rate(0, &target),
            r2: program.rate(1, &target),
            newton_iters,
            kkt_residual: step.kkt_residual,
            damping,
        });
        if (step.eta - prev_eta).abs() < opts.sca_tol {
            trace.converged = true;
            break;
        }
    }
    Ok((current.point, trace))
}

/// Max-min C-NOMA allocation from the initial point `[1, 1]`.
pub fn optimize_cnoma(
    gamma1: f64,
    gamma2: f64,
    fairness: f64,
    opts: &ScaOptions,
) -> Result<(SlotPowers, ScaTrace)> {
    let prog = RateProgram::for_scheme(SchemeId::CNoma, gamma1, gamma2)?;
    let (p, trace) = run_sca(&prog, fairness, pack_slots(&SlotPowers::uniform()), opts)?;
    Ok((unpack_slots(&p), trace))
}

/// Max-min C-OMA allocation from the initial point `[1, 1]`.
pub fn optimize_coma(
    gamma1: f64,
    gamma2: f64,
    fairness: f64,
    opts: &ScaOptions,
) -> Result<(SlotPowers, ScaTrace)> {
    let prog = RateProgram::for_scheme(SchemeId::COma, gamma1, gamma2)?;
    let (p, trace) = run_sca(&prog, fairness, pack_slots(&SlotPowers::uniform()), opts)?;
    Ok((unpack_slots(&p), trace))
}

/// Split fraction used when starting C-RSMA from a C-NOMA allocation.
pub const COLLAPSE_EPS: f64 = 1e-8;

/// Number of coarse-sample starts added to the C-RSMA multi-start.
pub const SAMPLED_STARTS: usize = 4;

/// Interior allocations with tight budgets ranked by their true objective;
/// the best `k` are returned, ties kept in sampling order.
fn sampled_starts(prog: &RateProgram, fairness: f64, k: usize) -> Vec<[f64; NVARS]> {
    const SLOT: [f64; 5] = [0.1, 0.5, 1.0, 1.5, 1.9];
    const SPLIT: [f64; 4] = [0.05, 0.35, 0.65, 0.95];
    let mut scored = Vec::with_capacity(SLOT.len().pow(2) * SPLIT.len().pow(2));
    for &a in &SLOT {
        for &c in &SLOT {
            for &q1 in &SPLIT {
                for &q2 in &SPLIT {
                    let slots = SlotPowers::tight(a, c);
                    let split = SplitPowers { slots, p11: q1, p12: 1.0 - q1, p21: q2, p22: 1.0 - q2 };
                    let v = pack_split(&split);
                    scored.push((prog.objective(&v, fairness), v));
                }
            }
        }
    }
    scored.sort_by(|x, y| y.0.total_cmp(&x.0));
    scored.into_iter().take(k).map(|(_, v)| v).collect()
}

/// Max-min C-RSMA allocation.
///
/// The loop is run from `[1, 1, 0.5, 0.5]`, from the C-NOMA optimum with
/// collapsed splits and from the best points of a coarse sample of the
/// objective; the best result is returned, earlier starts winning ties. If
/// every run falls short of the C-NOMA objective, the collapsed C-NOMA
/// allocation itself is returned with a single-step trace.
pub fn optimize_crsma(
    gamma1: f64,
    gamma2: f64,
    fairness: f64,
    opts: &ScaOptions,
) -> Result<(SplitPowers, ScaTrace)> {
    let prog = RateProgram::for_scheme(SchemeId::CRsma, gamma1, gamma2)?;
    let (noma_p, _) = optimize_cnoma(gamma1, gamma2, fairness, opts)?;
    let noma_obj = cnoma_rates(gamma1, gamma2, &noma_p)?.objective(fairness);
    let mut starts = vec![
        pack_split(&SplitPowers::uniform()),
        pack_split(&SplitPowers::collapsed(noma_p, COLLAPSE_EPS)),
    ];
    starts.extend(sampled_starts(&prog, fairness, SAMPLED_STARTS));

    let mut best: Option<([f64; NVARS], ScaTrace)> = None;
    let mut first_err = None;
    for start in starts {
        match run_sca(&prog, fairness, start, opts) {
            Ok(run) => {
                if best.as_ref().is_none_or(|b| run.1.objective() > b.1.objective()) {
                    best = Some(run);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let best = match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one start"),
    };
    match best {
        Ok((p, trace)) if trace.objective() >= noma_obj => Ok((unpack_split(&p), trace)),
        _ => {
            let split = SplitPowers::collapsed(noma_p, 0.0);
            let point = pack_split(&split);
            let trace = ScaTrace {
                scheme: SchemeId::CRsma,
                fairness,
                steps: vec![ScaStep {
                    iteration: 0,
                    point,
                    eta: noma_obj,
                    r1: prog.rate(0, &point),
                    r2: prog.rate(1, &point),
                    newton_iters: 0,
                    kkt_residual: 0.0,
                    damping: 0,
                }],
                converged: true,
            };
            Ok((split, trace))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::crsma_rates;

    #[test]
    fn cnoma_converges_with_active_fairness() {
        for &(g1, g2, f) in &[(22.8, 2.28, 1.0), (22.8, 2.28, 1.0 / 3.0), (5.0, 50.0, 3.0)] {
            let (p, trace) = optimize_cnoma(g1, g2, f, &ScaOptions::default()).unwrap();
            assert!(trace.converged);
            let r = cnoma_rates(g1, g2, &p).unwrap();
            assert!((r.r1 - f * r.r2).abs() / r.r1 < 1e-3, "{r:?} f={f}");
            for w in trace.steps.windows(2) {
                assert!(w[1].eta >= w[0].eta - 1e-9);
                assert!(w[1].objective(f) >= w[0].objective(f) - 1e-9);
            }
            assert!((p.p1_1 + p.p1_2 - 2.0).abs() < 1e-6);
            assert!((p.p2_1 + p.p2_2 - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn crsma_not_worse_than_cnoma() {
        for &(g1, g2, f) in &[(22.8, 2.28, 1.0), (3.0, 30.0, 0.5), (100.0, 1.0, 2.0)] {
            let (pn, _) = optimize_cnoma(g1, g2, f, &ScaOptions::default()).unwrap();
            let (pr, trace) = optimize_crsma(g1, g2, f, &ScaOptions::default()).unwrap();
            let on = cnoma_rates(g1, g2, &pn).unwrap().objective(f);
            let or = crsma_rates(g1, g2, &pr).unwrap().objective(f);
            assert!(or >= on - 1e-6, "{or} < {on}");
            assert!((trace.objective() - or).abs() < 1e-9);
        }
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let (_, trace) = optimize_coma(4.0, 9.0, 1.0, &ScaOptions::default()).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iteration,eta,r1,r2,newton_iters"));
        assert_eq!(lines.count(), trace.steps.len());
    }

    #[test]
    fn bad_options_rejected() {
        let opts = ScaOptions {
            sca_tol: 0.0,
            ..ScaOptions::default()
        };
        assert!(optimize_cnoma(1.0, 1.0, 1.0, &opts).is_err());
        assert!(optimize_cnoma(1.0, 1.0, -1.0, &ScaOptions::default()).is_err());
        assert!(optimize_cnoma(0.0, 1.0, 1.0, &ScaOptions::default()).is_err());
    }
}
