//! Grid-search oracle and baseline optimizers.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::RelayImpairments;
use crate::error::{validation, Error, Result};
use crate::rates::{
    cnoma_rates_nonideal_unchecked, cnoma_rates_unchecked, coma_rates, coma_rates_nonideal,
    crsma_rates_nonideal_unchecked, crsma_rates_unchecked, noma_rates, oma_rates, rsma_rates,
    scheme_rates, Allocation, DecodeOrder, NomaPowers, RatePair, SchemeId, SlotPowers,
    SplitPowers,
};

use super::algorithm::{optimize_cnoma, optimize_coma, optimize_crsma, ScaOptions};

/// An optimized allocation with its rates and max-min objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Optimum {
    pub allocation: Allocation,
    pub rates: RatePair,
    pub objective: f64,
}

/// Grid `0, res, 2·res, …` clipped to `cap`; `cap` is always included.
fn axis(cap: f64, res: f64) -> Vec<f64> {
    let n = (cap / res - 1e-9).ceil() as usize;
    (0..=n).map(|i| (i as f64 * res).min(cap)).collect()
}

/// Best point of a row-partitioned grid. Rows are searched in parallel and
/// reduced in index order so ties go to the lexicographically first point.
fn grid_max<T, F>(rows: usize, row: F) -> (f64, T)
where
    T: Send + Copy,
    F: Fn(usize) -> (f64, T) + Sync,
{
    let bests: Vec<(f64, T)> = (0..rows).into_par_iter().map(&row).collect();
    let mut best = bests[0];
    for b in bests.into_iter().skip(1) {
        if b.0 > best.0 {
            best = b;
        }
    }
    best
}

fn check(gamma1: f64, gamma2: f64, fairness: f64, res: f64) -> Result<()> {
    if !(res.is_finite() && res > 0.0 && res <= 1.0) {
        return Err(validation("grid_res", format!("must lie in (0, 1], got {res}")));
    }
    if !(fairness.is_finite() && fairness > 0.0) {
        return Err(validation("fairness", format!("must be > 0, got {fairness}")));
    }
    if !(gamma1.is_finite() && gamma1 > 0.0 && gamma2.is_finite() && gamma2 > 0.0) {
        return Err(Error::Domain(format!(
            "SNRs must be finite and > 0, got ({gamma1}, {gamma2})"
        )));
    }
    Ok(())
}

fn slots_search<F>(res: f64, fairness: f64, rates: F) -> (f64, SlotPowers)
where
    F: Fn(&SlotPowers) -> RatePair + Sync,
{
    let ax = axis(2.0, res);
    grid_max(ax.len(), |i| {
        let mut best = (f64::NEG_INFINITY, SlotPowers::tight(ax[i], 0.0));
        for &b in &ax {
            let p = SlotPowers::tight(ax[i], b);
            let v = rates(&p).objective(fairness);
            if v > best.0 {
                best = (v, p);
            }
        }
        best
    })
}

fn split_from(c: [f64; 4]) -> SplitPowers {
    SplitPowers {
        slots: SlotPowers::tight(c[0], c[1]),
        p11: c[2],
        p12: 1.0 - c[2],
        p21: c[3],
        p22: 1.0 - c[3],
    }
}

fn split_search<F>(res: f64, fairness: f64, rates: F) -> (f64, SplitPowers)
where
    F: Fn(&SplitPowers) -> RatePair + Sync,
{
    let coarse = 2.0 * res;
    let a2 = axis(2.0, coarse);
    let a1 = axis(1.0, coarse);
    let (_, c) = grid_max(a2.len(), |i| {
        let mut best = (f64::NEG_INFINITY, [a2[i], 0.0, 0.0, 0.0]);
        for &b in &a2 {
            for &s1 in &a1 {
                for &s2 in &a1 {
                    let c = [a2[i], b, s1, s2];
                    let v = rates(&split_from(c)).objective(fairness);
                    if v > best.0 {
                        best = (v, c);
                    }
                }
            }
        }
        best
    });
    // Local refinement at a fifth of the resolution within one coarse step.
    let fine = res / 5.0;
    let k = (coarse / fine).round() as i64;
    let local = |x: f64, cap: f64| -> Vec<f64> {
        (-k..=k).map(|j| (x + j as f64 * fine).clamp(0.0, cap)).collect()
    };
    let (l0, l1, l2, l3) = (local(c[0], 2.0), local(c[1], 2.0), local(c[2], 1.0), local(c[3], 1.0));
    let (v, c) = grid_max(l0.len(), |i| {
        let mut best = (f64::NEG_INFINITY, c);
        for &b in &l1 {
            for &s1 in &l2 {
                for &s2 in &l3 {
                    let c = [l0[i], b, s1, s2];
                    let v = rates(&split_from(c)).objective(fairness);
                    if v > best.0 {
                        best = (v, c);
                    }
                }
            }
        }
        best
    });
    (v, split_from(c))
}

fn noma_search(gamma1: f64, gamma2: f64, fairness: f64, res: f64) -> (f64, NomaPowers) {
    let ax = axis(1.0, res);
    let orders = [DecodeOrder::User1First, DecodeOrder::User2First];
    grid_max(orders.len() * ax.len(), |r| {
        let order = orders[r / ax.len()];
        let q1 = ax[r % ax.len()];
        let mut best = (
            f64::NEG_INFINITY,
            NomaPowers {
                q1,
                q2: 0.0,
                order,
            },
        );
        for &q2 in &ax {
            let p = NomaPowers { q1, q2, order };
            let v = noma_rates(gamma1, gamma2, &p)
                .expect("SNRs checked")
                .objective(fairness);
            if v > best.0 {
                best = (v, p);
            }
        }
        best
    })
}

fn rsma_search(gamma1: f64, gamma2: f64, fairness: f64, res: f64) -> (f64, f64) {
    let ax = axis(1.0, res / 100.0);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for &q in &ax {
        let v = rsma_rates(gamma1, gamma2, q)
            .expect("SNRs checked")
            .objective(fairness);
        if v > best.0 {
            best = (v, q);
        }
    }
    best
}

/// Exhaustive max-min search with tight budgets under relay impairments.
///
/// C-NOMA and C-OMA search `(p₁¹, p₂¹)` on a `res` grid over `[0, 2]²`;
/// C-RSMA searches `(p₁¹, p₂¹, p₁₁, p₂₁)` on a `2·res` grid followed by a
/// `res/5` refinement around the best coarse point. NOMA enumerates both
/// decoding orders on a `res` grid of power scalings, RSMA scans its split
/// at `res/100`, and OMA has nothing to search.
pub fn exhaustive_search_with(
    scheme: SchemeId,
    gamma1: f64,
    gamma2: f64,
    fairness: f64,
    res: f64,
    imp: &RelayImpairments,
) -> Result<Optimum> {
    check(gamma1, gamma2, fairness, res)?;
    let (g1, g2) = (gamma1, gamma2);
    let ideal = *imp == RelayImpairments::ideal();
    let allocation = match scheme {
        SchemeId::CNoma if ideal => {
            Allocation::Slots(slots_search(res, fairness, |p| cnoma_rates_unchecked(g1, g2, p)).1)
        }
        SchemeId::CNoma => Allocation::Slots(
            slots_search(res, fairness, |p| {
                cnoma_rates_nonideal_unchecked(g1, g2, &p.clamped(), imp)
            })
            .1,
        ),
        SchemeId::CRsma if ideal => Allocation::Split(
            split_search(res, fairness, |p| crsma_rates_unchecked(g1, g2, &p.clamped())).1,
        ),
        SchemeId::CRsma => Allocation::Split(
            split_search(res, fairness, |p| {
                crsma_rates_nonideal_unchecked(g1, g2, &p.clamped(), imp)
            })
            .1,
        ),
        SchemeId::COma if ideal => Allocation::Slots(
            slots_search(res, fairness, |p| coma_rates(g1, g2, p).expect("SNRs checked")).1,
        ),
        SchemeId::COma => Allocation::Slots(
            slots_search(res, fairness, |p| {
                coma_rates_nonideal(g1, g2, p, imp).expect("SNRs checked")
            })
            .1,
        ),
        SchemeId::Noma => Allocation::Noma(noma_search(g1, g2, fairness, res).1),
        SchemeId::Rsma => Allocation::Rsma {
            q: rsma_search(g1, g2, fairness, res).1,
        },
        SchemeId::Oma => Allocation::Fixed,
    };
    let rates = scheme_rates(scheme, g1, g2, &allocation, imp)?;
    Ok(Optimum {
        allocation,
        rates,
        objective: rates.objective(fairness),
    })
}

/// Exhaustive max-min search under ideal relaying.
pub fn exhaustive_search(
    scheme: SchemeId,
    gamma1: f64,
    gamma2: f64,
    fairness: f64,
    res: f64,
) -> Result<Optimum> {
    exhaustive_search_with(scheme, gamma1, gamma2, fairness, res, &RelayImpairments::ideal())
}

/// Optimizes a scheme with its designated method: SCA for the cooperative
/// schemes, closed form for OMA and grid search for NOMA and RSMA.
pub fn optimize_scheme(
    scheme: SchemeId,
    gamma1: f64,
    gamma2: f64,
    fairness: f64,
    opts: &ScaOptions,
) -> Result<Optimum> {
    let allocation = match scheme {
        SchemeId::CNoma => Allocation::Slots(optimize_cnoma(gamma1, gamma2, fairness, opts)?.0),
        SchemeId::CRsma => Allocation::Split(optimize_crsma(gamma1, gamma2, fairness, opts)?.0),
        _ => return optimize_baseline(scheme, gamma1, gamma2, fairness, opts),
    };
    let rates = scheme_rates(scheme, gamma1, gamma2, &allocation, &RelayImpairments::ideal())?;
    Ok(Optimum {
        allocation,
        rates,
        objective: rates.objective(fairness),
    })
}

/// Baseline optimizers: OMA in closed form, C-OMA by SCA, NOMA and RSMA by
/// small grids.
pub fn optimize_baseline(
    scheme: SchemeId,
    gamma1: f64,
    gamma2: f64,
    fairness: f64,
    opts: &ScaOptions,
) -> Result<Optimum> {
    match scheme {
        SchemeId::Oma => {
            let rates = oma_rates(gamma1, gamma2)?;
            check(gamma1, gamma2, fairness, opts.grid_res)?;
            Ok(Optimum {
                allocation: Allocation::Fixed,
                rates,
                objective: rates.objective(fairness),
            })
        }
        SchemeId::COma => {
            let (p, _) = optimize_coma(gamma1, gamma2, fairness, opts)?;
            let rates = coma_rates(gamma1, gamma2, &p)?;
            Ok(Optimum {
                allocation: Allocation::Slots(p),
                rates,
                objective: rates.objective(fairness),
            })
        }
        SchemeId::Noma | SchemeId::Rsma => {
            exhaustive_search(scheme, gamma1, gamma2, fairness, opts.grid_res)
        }
        other => Err(validation("scheme", format!("{other} is not a baseline"))),
    }
}
