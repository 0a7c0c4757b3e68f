//! Outage probability: sum-of-exponentials CDF, exact C-NOMA outage,
//! high-SNR approximations, deterministic quadrature over the fading
//! distribution and diversity-order fitting.

use serde::{Deserialize, Serialize};

use crate::channel::RelayImpairments;
use crate::error::{validation, Error, Result};
use crate::rates::{scheme_rates, Allocation, RatePair, SchemeId};
use crate::sca::{optimize_scheme, ScaOptions};

/// `2^{2R} − 1`: the sum-SNR a two-mini-slot scheme needs for rate `R`.
pub fn cooperative_threshold(rate: f64) -> f64 {
    (2.0 * rate * std::f64::consts::LN_2).exp_m1()
}

/// Relative gap below which the two means are treated as equal.
const EQUAL_MEANS_REL: f64 = 1e-6;

/// `e^{−u} − 1 + u`, accurate for small `u`.
fn psi(u: f64) -> f64 {
    if u < 1.0 {
        // Alternating series Σ_{k≥2} (−u)^k / k!.
        let mut term = u * u / 2.0;
        let mut sum: f64 = 0.0;
        let mut k = 2.0;
        while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
            sum += term;
            k += 1.0;
            term *= -u / k;
        }
        sum
    } else {
        (-u).exp() - 1.0 + u
    }
}

/// `1 − e^{−u}(1 + u)`, the CDF of an Erlang(2) variable with unit mean
/// per stage.
fn erlang2_cdf(u: f64) -> f64 {
    if u < 1.0 {
        let mut term = u * u / 2.0;
        let mut sum: f64 = 0.0;
        let mut k = 2.0;
        while term > 1e-18 * sum.max(f64::MIN_POSITIVE) {
            sum += term;
            k += 1.0;
            term *= u / k;
        }
        (-u).exp() * sum
    } else {
        1.0 - (-u).exp() * (1.0 + u)
    }
}

/// CDF of `X + Y` for independent exponentials with means `λx`, `λy`.
pub fn sum_exp_cdf(z: f64, lambda_x: f64, lambda_y: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("z must be >= 0, got {z}")));
    }
    for (name, l) in [("lambda_x", lambda_x), ("lambda_y", lambda_y)] {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Domain(format!("{name} must be finite and > 0, got {l}")));
        }
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z.is_infinite() {
        return Ok(1.0);
    }
    let (hi, lo) = if lambda_x >= lambda_y {
        (lambda_x, lambda_y)
    } else {
        (lambda_y, lambda_x)
    };
    let gap = hi - lo;
    if gap < EQUAL_MEANS_REL * hi {
        return Ok(erlang2_cdf(z / (0.5 * (hi + lo))));
    }
    let p = if z < hi {
        (lo * psi(z / lo) - hi * psi(z / hi)) / gap
    } else {
        1.0 - (hi * (-z / hi).exp() - lo * (-z / lo).exp()) / gap
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Rate thresholds and the fixed allocation an outage is evaluated for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageSpec {
    /// `R₂^{th}` in bps/Hz; user 1 needs `f·R₂^{th}`.
    pub r2_threshold: f64,
    pub fairness: f64,
    pub allocation: Allocation,
}

impl OutageSpec {
    pub fn new(r2_threshold: f64, fairness: f64, allocation: Allocation) -> Result<Self> {
        if !(r2_threshold.is_finite() && r2_threshold > 0.0) {
            return Err(validation("r2_threshold", format!("must be > 0, got {r2_threshold}")));
        }
        if !(fairness.is_finite() && fairness > 0.0) {
            return Err(validation("fairness", format!("must be > 0, got {fairness}")));
        }
        Ok(Self {
            r2_threshold,
            fairness,
            allocation,
        })
    }

    pub fn r1_threshold(&self) -> f64 {
        self.fairness * self.r2_threshold
    }

    /// Whether a rate pair is in outage under `event`.
    pub fn in_outage(&self, rates: &RatePair, event: OutageEvent) -> bool {
        let user2 = rates.r2 < self.r2_threshold;
        match event {
            OutageEvent::User2 => user2,
            OutageEvent::Joint => user2 || rates.r1 < self.r1_threshold(),
        }
    }
}

/// Which outage event is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutageEvent {
    /// `R₂ < R₂^{th}`: the system event when the allocation balances
    /// `R₁ = f·R₂`.
    User2,
    /// Either user below its threshold.
    Joint,
}

/// Allocation computed from the mean SNRs, to be held fixed over fading.
pub fn outage_allocation(
    scheme: SchemeId,
    omega1: f64,
    omega2: f64,
    fairness: f64,
    opts: &ScaOptions,
) -> Result<Allocation> {
    Ok(optimize_scheme(scheme, omega1, omega2, fairness, opts)?.allocation)
}

fn slot_means(spec: &OutageSpec, omega1: f64, omega2: f64) -> Result<(f64, f64, f64)> {
    let (p12, p21, split) = match spec.allocation {
        Allocation::Slots(p) => (p.p1_2, p.p2_1, 1.0),
        Allocation::Split(p) => (p.slots.p1_2, p.slots.p2_1, p.p22),
        other => {
            return Err(validation(
                "allocation",
                format!("{other:?} has no cooperative slot powers"),
            ))
        }
    };
    if !(omega1 > 0.0 && omega2 > 0.0 && omega1.is_finite() && omega2.is_finite()) {
        return Err(Error::Domain(format!(
            "mean SNRs must be finite and > 0, got ({omega1}, {omega2})"
        )));
    }
    Ok((omega1 * p12, omega2 * p21, split))
}

/// Exact C-NOMA outage `Pr(½log₂(1 + γ₁p₁² + γ₂p₂¹) < R₂^{th})`.
pub fn cnoma_outage_exact(spec: &OutageSpec, omega1: f64, omega2: f64) -> Result<f64> {
    let Allocation::Slots(_) = spec.allocation else {
        return Err(validation("allocation", "C-NOMA outage needs slot powers"));
    };
    let (a, b, _) = slot_means(spec, omega1, omega2)?;
    if a == 0.0 || b == 0.0 {
        return Err(Error::Domain(
            "p1_2 and p2_1 must be > 0 for the closed form".into(),
        ));
    }
    sum_exp_cdf(cooperative_threshold(spec.r2_threshold), a, b)
}

/// Numerator of the high-SNR outage approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NumeratorForm {
    /// `0.5·(2^{2R} − 1)²`, the leading term of the exact CDF.
    Squared,
    /// `0.5·(2^{2R} − 1)` as printed in the source formula. It agrees with
    /// the squared form only at `R = 0.5`.
    AsPrinted,
}

/// High-SNR outage of C-NOMA (`0.5·T/(p₂¹p₁²Ω₁Ω₂)`) or C-RSMA
/// (`0.5·T/(p₂¹p₁²p₂₂²Ω₁Ω₂)`).
pub fn asymptotic_outage(
    scheme: SchemeId,
    spec: &OutageSpec,
    omega1: f64,
    omega2: f64,
    form: NumeratorForm,
) -> Result<f64> {
    let (a, b, split) = slot_means(spec, omega1, omega2)?;
    let t = cooperative_threshold(spec.r2_threshold);
    let numer = match form {
        NumeratorForm::Squared => 0.5 * t * t,
        NumeratorForm::AsPrinted => 0.5 * t,
    };
    match (scheme, spec.allocation) {
        (SchemeId::CNoma, Allocation::Slots(_)) => Ok(numer / (a * b)),
        (SchemeId::CRsma, Allocation::Split(_)) => Ok(numer / (a * b * split * split)),
        _ => Err(validation(
            "scheme",
            format!("no asymptotic outage for {scheme} with {:?}", spec.allocation),
        )),
    }
}

/// Least-squares fit of `−log₁₀ P_out` against `SNR_dB / 10`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiversityEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub window_db: (f64, f64),
    /// Root-mean-square residual of the fit, in decades.
    pub residual: f64,
    pub points: usize,
}

pub fn estimate_diversity(points: &[(f64, f64)]) -> Result<DiversityEstimate> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    if let Some((snr, p)) = points.iter().find(|(s, p)| !(s.is_finite() && *p > 0.0 && *p <= 1.0)) {
        return Err(Error::InsufficientData(format!(
            "outage {p} at {snr} dB is not a positive probability; more trials are needed"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(s, _)| s / 10.0).collect();
    let ys: Vec<f64> = points.iter().map(|(_, p)| -p.log10()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all points share one SNR".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(DiversityEstimate {
        slope,
        intercept,
        window_db: (lo, hi),
        residual,
        points: points.len(),
    })
}

/// Resolution of [`outage_by_quadrature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Nodes of the log-spaced outer grid over the user-1 gain.
    pub outer_nodes: usize,
    /// Nodes of the log-spaced scan over the user-2 gain.
    pub inner_nodes: usize,
    /// Smallest normalized gain considered; mass below it is ignored.
    pub min_gain: f64,
    pub max_gain: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            outer_nodes: 2000,
            inner_nodes: 400,
            min_gain: 1e-16,
            max_gain: 60.0,
        }
    }
}

/// `Pr(outage)` with `γᵢ = Ωᵢ·gᵢ`, `gᵢ ~ Exp(1)`, by deterministic
/// quadrature.
///
/// For each user-1 gain on a log grid, the user-2 axis is scanned on a log
/// grid, every change of the outage indicator is located by bisection, and
/// the exponential measure of the outage intervals is added exactly. The
/// outer integral uses the trapezoid rule in `ln g₁`. This reaches the
/// 1e−10 probabilities of the high-SNR regime, where sampling cannot.
pub fn outage_by_quadrature(
    scheme: SchemeId,
    spec: &OutageSpec,
    omega1: f64,
    omega2: f64,
    event: OutageEvent,
    imp: &RelayImpairments,
    q: &QuadratureOptions,
) -> Result<f64> {
    if !(omega1 > 0.0 && omega2 > 0.0 && omega1.is_finite() && omega2.is_finite()) {
        return Err(Error::Domain(format!(
            "mean SNRs must be finite and > 0, got ({omega1}, {omega2})"
        )));
    }
    if q.outer_nodes < 2 || q.inner_nodes < 2 || !(q.min_gain > 0.0 && q.max_gain > q.min_gain) {
        return Err(validation("quadrature", "need >= 2 nodes and 0 < min_gain < max_gain"));
    }
    // Validate the allocation once.
    scheme_rates(scheme, omega1, omega2, &spec.allocation, imp)?;
    let out = |g1: f64, g2: f64| -> bool {
        let r = scheme_rates(scheme, omega1 * g1, omega2 * g2, &spec.allocation, imp)
            .expect("allocation validated");
        spec.in_outage(&r, event)
    };
    let log_grid = |n: usize| -> Vec<f64> {
        let (a, b) = (q.min_gain.ln(), q.max_gain.ln());
        (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect()
    };
    let g2s = log_grid(q.inner_nodes);

    // Pr(outage | g1) over g2 ~ Exp(1).
    let conditional = |g1: f64| -> f64 {
        let mut prob = 0.0;
        let mut prev_g = 0.0;
        let mut prev_out = out(g1, g2s[0]);
        let mut start: Option<f64> = if prev_out { Some(0.0) } else { None };
        for &g in &g2s {
            let o = out(g1, g);
            if o != prev_out {
                let (mut lo, mut hi) = (prev_g, g);
                for _ in 0..60 {
                    let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
                    if out(g1, mid) == prev_out {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-13 * hi {
                        break;
                    }
                }
                let edge = 0.5 * (lo + hi);
                match start.take() {
                    Some(s) => prob += (-s).exp() - (-edge).exp(),
                    None => start = Some(edge),
                }
                prev_out = o;
            }
            prev_g = g;
        }
        if let Some(s) = start {
            prob += (-s).exp();
        }
        prob
    };

    let g1s = log_grid(q.outer_nodes);
    let du = (q.max_gain.ln() - q.min_gain.ln()) / (q.outer_nodes - 1) as f64;
    let mut total = 0.0;
    for (i, &g1) in g1s.iter().enumerate() {
        let w = if i == 0 || i + 1 == g1s.len() { 0.5 } else { 1.0 };
        total += w * du * conditional(g1) * g1 * (-g1).exp();
    }
    // Mass below the grid, with the indicator taken at the first node.
    total += q.min_gain * conditional(q.min_gain);
    Ok(total.clamp(0.0, 1.0))
}
