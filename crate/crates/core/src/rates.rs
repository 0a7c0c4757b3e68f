//! Achievable-rate models for the six transmission schemes.
//!
//! All SNRs are linear and normalized to the base-station noise power.
//! Cooperative schemes spend two mini-slots per message, hence the ½ pre-log.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::RelayImpairments;
use crate::error::{validation, Error, Result};

const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeId {
    #[serde(rename = "OMA")]
    Oma,
    #[serde(rename = "C-OMA")]
    COma,
    #[serde(rename = "NOMA")]
    Noma,
    #[serde(rename = "C-NOMA")]
    CNoma,
    #[serde(rename = "RSMA")]
    Rsma,
    #[serde(rename = "C-RSMA")]
    CRsma,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] = [
        SchemeId::Oma,
        SchemeId::COma,
        SchemeId::Noma,
        SchemeId::CNoma,
        SchemeId::Rsma,
        SchemeId::CRsma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Oma => "OMA",
            SchemeId::COma => "C-OMA",
            SchemeId::Noma => "NOMA",
            SchemeId::CNoma => "C-NOMA",
            SchemeId::Rsma => "RSMA",
            SchemeId::CRsma => "C-RSMA",
        }
    }

    pub fn is_cooperative(self) -> bool {
        matches!(self, SchemeId::COma | SchemeId::CNoma | SchemeId::CRsma)
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name() == norm)
            .ok_or_else(|| validation("scheme", format!("unknown scheme `{s}`")))
    }
}

/// Normalized per-mini-slot powers `p_i^j = P_i^j / P̄_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotPowers {
    pub p1_1: f64,
    pub p1_2: f64,
    pub p2_1: f64,
    pub p2_2: f64,
}

impl SlotPowers {
    pub fn new(p1_1: f64, p1_2: f64, p2_1: f64, p2_2: f64) -> Result<Self> {
        let p = Self {
            p1_1,
            p1_2,
            p2_1,
            p2_2,
        };
        p.validate()?;
        Ok(p)
    }

    /// Budget-tight allocation given each user's slot-1 power.
    pub fn tight(p1_1: f64, p2_1: f64) -> Self {
        Self {
            p1_1,
            p1_2: 2.0 - p1_1,
            p2_1,
            p2_2: 2.0 - p2_1,
        }
    }

    /// The initial SCA point `[1, 1]` for both users.
    pub fn uniform() -> Self {
        Self::tight(1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p1_1", self.p1_1),
            ("p1_2", self.p1_2),
            ("p2_1", self.p2_1),
            ("p2_2", self.p2_2),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(validation(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.p1_1 + self.p1_2 > 2.0 + BUDGET_TOL {
            return Err(validation("p1", "p1_1 + p1_2 exceeds 2"));
        }
        if self.p2_1 + self.p2_2 > 2.0 + BUDGET_TOL {
            return Err(validation("p2", "p2_1 + p2_2 exceeds 2"));
        }
        Ok(())
    }

    /// Same allocation with user indices exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            p1_1: self.p2_1,
            p1_2: self.p2_2,
            p2_1: self.p1_1,
            p2_2: self.p1_2,
        }
    }

    pub(crate) fn clamped(&self) -> Self {
        Self {
            p1_1: self.p1_1.max(0.0),
            p1_2: self.p1_2.max(0.0),
            p2_1: self.p2_1.max(0.0),
            p2_2: self.p2_2.max(0.0),
        }
    }
}

/// Slot powers plus per-stream split fractions for rate splitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPowers {
    pub slots: SlotPowers,
    pub p11: f64,
    pub p12: f64,
    pub p21: f64,
    pub p22: f64,
}

impl SplitPowers {
    pub fn new(slots: SlotPowers, p11: f64, p12: f64, p21: f64, p22: f64) -> Result<Self> {
        let p = Self {
            slots,
            p11,
            p12,
            p21,
            p22,
        };
        p.validate()?;
        Ok(p)
    }

    /// The initial SCA point `[1, 1, 0.5, 0.5]` for both users.
    pub fn uniform() -> Self {
        Self {
            slots: SlotPowers::uniform(),
            p11: 0.5,
            p12: 0.5,
            p21: 0.5,
            p22: 0.5,
        }
    }

    /// Splits that put (almost) everything on the first stream, which turns
    /// C-RSMA into C-NOMA.
    pub fn collapsed(slots: SlotPowers, eps: f64) -> Self {
        Self {
            slots,
            p11: 1.0 - eps,
            p12: eps,
            p21: 1.0 - eps,
            p22: eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.slots.validate()?;
        for (name, v) in [
            ("p11", self.p11),
            ("p12", self.p12),
            ("p21", self.p21),
            ("p22", self.p22),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(validation(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.p11 + self.p12 > 1.0 + BUDGET_TOL {
            return Err(validation("split1", "p11 + p12 exceeds 1"));
        }
        if self.p21 + self.p22 > 1.0 + BUDGET_TOL {
            return Err(validation("split2", "p21 + p22 exceeds 1"));
        }
        Ok(())
    }

    pub fn swapped(&self) -> Self {
        Self {
            slots: self.slots.swapped(),
            p11: self.p21,
            p12: self.p22,
            p21: self.p11,
            p22: self.p12,
        }
    }

    pub(crate) fn clamped(&self) -> Self {
        Self {
            slots: self.slots.clamped(),
            p11: self.p11.max(0.0),
            p12: self.p12.max(0.0),
            p21: self.p21.max(0.0),
            p22: self.p22.max(0.0),
        }
    }
}

/// SIC decoding order at the base station for uplink NOMA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeOrder {
    User1First,
    User2First,
}

/// Transmit-power scaling `q_i ∈ [0, 1]` and decoding order for uplink NOMA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NomaPowers {
    pub q1: f64,
    pub q2: f64,
    pub order: DecodeOrder,
}

/// Allocation for any scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Allocation {
    /// OMA has nothing to allocate.
    Fixed,
    /// C-OMA and C-NOMA.
    Slots(SlotPowers),
    /// C-RSMA.
    Split(SplitPowers),
    Noma(NomaPowers),
    /// Uplink RSMA: fraction of user 1's power on stream 1.
    Rsma { q: f64 },
}

/// Achievable rates in bps/Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub r1: f64,
    pub r2: f64,
}

impl RatePair {
    /// Max-min objective `min(R₁, f·R₂)`.
    pub fn objective(&self, fairness: f64) -> f64 {
        self.r1.min(fairness * self.r2)
    }

    fn swapped(self) -> Self {
        Self {
            r1: self.r2,
            r2: self.r1,
        }
    }
}

fn check_snr(gamma1: f64, gamma2: f64) -> Result<()> {
    if !(gamma1.is_finite() && gamma1 > 0.0) {
        return Err(Error::Domain(format!("gamma1 must be finite and > 0, got {gamma1}")));
    }
    if !(gamma2.is_finite() && gamma2 > 0.0) {
        return Err(Error::Domain(format!("gamma2 must be finite and > 0, got {gamma2}")));
    }
    Ok(())
}

#[inline]
fn half_log2(x: f64) -> f64 {
    0.5 * x.log2()
}

/// C-NOMA rates: MRC across both mini-slots, user 1 decoded first.
pub fn cnoma_rates(gamma1: f64, gamma2: f64, p: &SlotPowers) -> Result<RatePair> {
    check_snr(gamma1, gamma2)?;
    Ok(cnoma_rates_unchecked(gamma1, gamma2, &p.clamped()))
}

pub(crate) fn cnoma_rates_unchecked(g1: f64, g2: f64, p: &SlotPowers) -> RatePair {
    let r1 = half_log2(1.0 + g1 * p.p1_1 / (g2 * p.p2_1 + 1.0) + g2 * p.p2_2 / (g1 * p.p1_2 + 1.0));
    let r2 = half_log2(1.0 + g1 * p.p1_2 + g2 * p.p2_1);
    RatePair { r1, r2 }
}

/// C-RSMA rates with decoding order s₁₁, s₂₁, s₁₂, s₂₂.
pub fn crsma_rates(gamma1: f64, gamma2: f64, p: &SplitPowers) -> Result<RatePair> {
    check_snr(gamma1, gamma2)?;
    Ok(crsma_rates_unchecked(gamma1, gamma2, &p.clamped()))
}

pub(crate) fn crsma_rates_unchecked(g1: f64, g2: f64, p: &SplitPowers) -> RatePair {
    let s = &p.slots;
    let r11 = half_log2(
        1.0 + s.p1_1 * p.p11 * g1
            / (s.p1_1 * p.p12 * g1 + s.p2_1 * p.p21 * g2 + s.p2_1 * p.p22 * g2 + 1.0)
            + s.p2_2 * p.p11 * g2
                / (s.p2_2 * p.p12 * g2 + s.p1_2 * p.p21 * g1 + s.p1_2 * p.p22 * g1 + 1.0),
    );
    let r12 = half_log2(
        1.0 + s.p1_1 * p.p12 * g1 / (s.p2_1 * p.p22 * g2 + 1.0)
            + s.p2_2 * p.p12 * g2 / (s.p1_2 * p.p22 * g1 + 1.0),
    );
    let r21 = half_log2(
        1.0 + s.p2_1 * p.p21 * g2 / (s.p2_1 * p.p22 * g2 + s.p1_1 * p.p12 * g1 + 1.0)
            + s.p1_2 * p.p21 * g1 / (s.p1_2 * p.p22 * g1 + s.p2_2 * p.p12 * g2 + 1.0),
    );
    let r22 = half_log2(1.0 + s.p2_1 * p.p22 * g2 + s.p1_2 * p.p22 * g1);
    RatePair {
        r1: r11 + r12,
        r2: r21 + r22,
    }
}

/// One stream seen by the base station: received SNR in each mini-slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamPower {
    pub slot1: f64,
    pub slot2: f64,
}

/// Per-stream rates of a two-mini-slot SIC + MRC detector.
///
/// Streams are listed in decoding order; each is decoded with MRC treating
/// the not-yet-decoded streams as noise, then cancelled. `noise` holds the
/// per-slot noise level (1 in slot 1; slot 2 adds forwarded relay noise).
pub fn sic_mrc_chain(streams: &[StreamPower], noise: [f64; 2]) -> Vec<f64> {
    let mut rest1: f64 = streams.iter().map(|s| s.slot1).sum();
    let mut rest2: f64 = streams.iter().map(|s| s.slot2).sum();
    streams
        .iter()
        .map(|s| {
            rest1 -= s.slot1;
            rest2 -= s.slot2;
            // Guard against negative round-off in the running sums.
            let i1 = rest1.max(0.0);
            let i2 = rest2.max(0.0);
            half_log2(1.0 + s.slot1 / (i1 + noise[0]) + s.slot2 / (i2 + noise[1]))
        })
        .collect()
}

/// Slot-2 noise level and useful relayed fractions for both relays.
fn relay_terms(g1: f64, g2: f64, s: &SlotPowers, imp: &RelayImpairments) -> (f64, f64, f64) {
    let (c1, e1) = imp.relay_fractions(0, s.p1_1, s.p2_1);
    let (c2, e2) = imp.relay_fractions(1, s.p2_1, s.p1_1);
    let noise2 = 1.0 + g1 * s.p1_2 * e1 + g2 * s.p2_2 * e2;
    (c1, c2, noise2)
}

/// C-NOMA rates with amplified relay noise and residual self-interference.
pub fn cnoma_rates_nonideal(
    gamma1: f64,
    gamma2: f64,
    p: &SlotPowers,
    imp: &RelayImpairments,
) -> Result<RatePair> {
    check_snr(gamma1, gamma2)?;
    Ok(cnoma_rates_nonideal_unchecked(gamma1, gamma2, &p.clamped(), imp))
}

pub(crate) fn cnoma_rates_nonideal_unchecked(
    g1: f64,
    g2: f64,
    s: &SlotPowers,
    imp: &RelayImpairments,
) -> RatePair {
    let (c1, c2, noise2) = relay_terms(g1, g2, s, imp);
    // s1 is relayed by user 2, s2 by user 1.
    let streams = [
        StreamPower {
            slot1: g1 * s.p1_1,
            slot2: g2 * s.p2_2 * c2,
        },
        StreamPower {
            slot1: g2 * s.p2_1,
            slot2: g1 * s.p1_2 * c1,
        },
    ];
    let r = sic_mrc_chain(&streams, [1.0, noise2]);
    RatePair { r1: r[0], r2: r[1] }
}

/// C-RSMA rates with amplified relay noise and residual self-interference.
pub fn crsma_rates_nonideal(
    gamma1: f64,
    gamma2: f64,
    p: &SplitPowers,
    imp: &RelayImpairments,
) -> Result<RatePair> {
    check_snr(gamma1, gamma2)?;
    Ok(crsma_rates_nonideal_unchecked(gamma1, gamma2, &p.clamped(), imp))
}

pub(crate) fn crsma_rates_nonideal_unchecked(
    g1: f64,
    g2: f64,
    p: &SplitPowers,
    imp: &RelayImpairments,
) -> RatePair {
    let s = &p.slots;
    let (c1, c2, noise2) = relay_terms(g1, g2, s, imp);
    let u1 = |split: f64| StreamPower {
        slot1: g1 * s.p1_1 * split,
        slot2: g2 * s.p2_2 * split * c2,
    };
    let u2 = |split: f64| StreamPower {
        slot1: g2 * s.p2_1 * split,
        slot2: g1 * s.p1_2 * split * c1,
    };
    let streams = [u1(p.p11), u2(p.p21), u1(p.p12), u2(p.p22)];
    let r = sic_mrc_chain(&streams, [1.0, noise2]);
    RatePair {
        r1: r[0] + r[2],
        r2: r[1] + r[3],
    }
}

/// OMA: each user alone on its own frequency block for both mini-slots.
pub fn oma_rates(gamma1: f64, gamma2: f64) -> Result<RatePair> {
    check_snr(gamma1, gamma2)?;
    Ok(RatePair {
        r1: (1.0 + gamma1).log2(),
        r2: (1.0 + gamma2).log2(),
    })
}

/// C-OMA: orthogonal blocks, direct slot 1 plus AF relay by the partner in slot 2.
pub fn coma_rates(gamma1: f64, gamma2: f64, p: &SlotPowers) -> Result<RatePair> {
    check_snr(gamma1, gamma2)?;
    let p = p.clamped();
    Ok(RatePair {
        r1: half_log2(1.0 + gamma1 * p.p1_1 + gamma2 * p.p2_2),
        r2: half_log2(1.0 + gamma2 * p.p2_1 + gamma1 * p.p1_2),
    })
}

/// C-OMA with a finite inter-user link. The inter-user exchange is
/// frequency-division duplexed, so there is no self-interference term.
pub fn coma_rates_nonideal(
    gamma1: f64,
    gamma2: f64,
    p: &SlotPowers,
    imp: &RelayImpairments,
) -> Result<RatePair> {
    check_snr(gamma1, gamma2)?;
    let p = p.clamped();
    let fdd = RelayImpairments {
        inr: [0.0; 2],
        ..*imp
    };
    let (c2, e2) = fdd.relay_fractions(1, 0.0, p.p1_1);
    let (c1, e1) = fdd.relay_fractions(0, 0.0, p.p2_1);
    let relayed1 = gamma2 * p.p2_2;
    let relayed2 = gamma1 * p.p1_2;
    Ok(RatePair {
        r1: half_log2(1.0 + gamma1 * p.p1_1 + relayed1 * c2 / (1.0 + relayed1 * e2)),
        r2: half_log2(1.0 + gamma2 * p.p2_1 + relayed2 * c1 / (1.0 + relayed2 * e1)),
    })
}

/// Uplink NOMA on a shared block, SIC at the base station.
pub fn noma_rates(gamma1: f64, gamma2: f64, p: &NomaPowers) -> Result<RatePair> {
    check_snr(gamma1, gamma2)?;
    let a = gamma1 * p.q1.max(0.0);
    let b = gamma2 * p.q2.max(0.0);
    Ok(match p.order {
        DecodeOrder::User1First => RatePair {
            r1: (1.0 + a / (1.0 + b)).log2(),
            r2: (1.0 + b).log2(),
        },
        DecodeOrder::User2First => RatePair {
            r1: (1.0 + a).log2(),
            r2: (1.0 + b / (1.0 + a)).log2(),
        },
    })
}

/// Uplink RSMA: user 1 splits into two streams, decoded s₁₁, s₂, s₁₂.
pub fn rsma_rates(gamma1: f64, gamma2: f64, q: f64) -> Result<RatePair> {
    check_snr(gamma1, gamma2)?;
    if !(0.0..=1.0).contains(&q) {
        return Err(validation("q", format!("split must lie in [0, 1], got {q}")));
    }
    let s11 = gamma1 * q;
    let s12 = gamma1 * (1.0 - q);
    Ok(RatePair {
        r1: (1.0 + s11 / (1.0 + s12 + gamma2)).log2() + (1.0 + s12).log2(),
        r2: (1.0 + gamma2 / (1.0 + s12)).log2(),
    })
}

/// Rates of a non-cooperative or C-OMA baseline.
pub fn baseline_rates(
    scheme: SchemeId,
    gamma1: f64,
    gamma2: f64,
    alloc: &Allocation,
) -> Result<RatePair> {
    match (scheme, alloc) {
        (SchemeId::Oma, _) => oma_rates(gamma1, gamma2),
        (SchemeId::COma, Allocation::Slots(p)) => coma_rates(gamma1, gamma2, p),
        (SchemeId::Noma, Allocation::Noma(p)) => noma_rates(gamma1, gamma2, p),
        (SchemeId::Rsma, Allocation::Rsma { q }) => rsma_rates(gamma1, gamma2, *q),
        (s, a) => Err(validation(
            "allocation",
            format!("{a:?} is not a baseline allocation for {s}"),
        )),
    }
}

/// Rates of any scheme under an allocation and relay impairments.
pub fn scheme_rates(
    scheme: SchemeId,
    gamma1: f64,
    gamma2: f64,
    alloc: &Allocation,
    imp: &RelayImpairments,
) -> Result<RatePair> {
    match (scheme, alloc) {
        (SchemeId::CNoma, Allocation::Slots(p)) => cnoma_rates_nonideal(gamma1, gamma2, p, imp),
        (SchemeId::CRsma, Allocation::Split(p)) => crsma_rates_nonideal(gamma1, gamma2, p, imp),
        (SchemeId::COma, Allocation::Slots(p)) => coma_rates_nonideal(gamma1, gamma2, p, imp),
        (SchemeId::CNoma | SchemeId::CRsma, a) => Err(validation(
            "allocation",
            format!("{a:?} is not an allocation for {scheme}"),
        )),
        _ => baseline_rates(scheme, gamma1, gamma2, alloc),
    }
}

/// Rates with the two users' roles exchanged (user 2 treated as user 1).
pub fn swapped_rates(
    scheme: SchemeId,
    gamma1: f64,
    gamma2: f64,
    alloc: &Allocation,
) -> Result<RatePair> {
    let a = match alloc {
        Allocation::Slots(p) => Allocation::Slots(p.swapped()),
        Allocation::Split(p) => Allocation::Split(p.swapped()),
        other => *other,
    };
    scheme_rates(scheme, gamma2, gamma1, &a, &RelayImpairments::ideal()).map(RatePair::swapped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Straight transcriptions of the closed forms, written independently of
    // the implementation above.
    fn oracle_cnoma(g1: f64, g2: f64, a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
        // a = p1^1, b = p1^2, c = p2^1, d = p2^2
        let r1 = 0.5 * (1.0 + (g1 * a) / (g2 * c + 1.0) + (g2 * d) / (g1 * b + 1.0)).ln() / 2f64.ln();
        let r2 = 0.5 * (1.0 + g1 * b + g2 * c).ln() / 2f64.ln();
        (r1, r2)
    }

    #[allow(clippy::too_many_arguments)]
    fn oracle_crsma(
        g1: f64,
        g2: f64,
        q11: f64,
        q12: f64,
        q21: f64,
        q22: f64,
        s11: f64,
        s12: f64,
        s21: f64,
        s22: f64,
    ) -> (f64, f64) {
        // q_i^j slot powers, s_ik split fractions
        let lg = |x: f64| 0.5 * x.ln() / 2f64.ln();
        let r11 = lg(1.0
            + q11 * s11 * g1 / (q11 * s12 * g1 + q21 * s21 * g2 + q21 * s22 * g2 + 1.0)
            + q22 * s11 * g2 / (q22 * s12 * g2 + q12 * s21 * g1 + q12 * s22 * g1 + 1.0));
        let r12 = lg(1.0 + q11 * s12 * g1 / (q21 * s22 * g2 + 1.0) + q22 * s12 * g2 / (q12 * s22 * g1 + 1.0));
        let r21 = lg(1.0
            + q21 * s21 * g2 / (q21 * s22 * g2 + q11 * s12 * g1 + 1.0)
            + q12 * s21 * g1 / (q12 * s22 * g1 + q22 * s12 * g2 + 1.0));
        let r22 = lg(1.0 + q21 * s22 * g2 + q12 * s22 * g1);
        (r11 + r12, r21 + r22)
    }

    fn random_split(rng: &mut ChaCha8Rng) -> SplitPowers {
        let a: f64 = rng.random_range(0.01..1.99);
        let c: f64 = rng.random_range(0.01..1.99);
        let s1: f64 = rng.random_range(0.01..0.99);
        let s2: f64 = rng.random_range(0.01..0.99);
        SplitPowers::new(SlotPowers::tight(a, c), s1, 1.0 - s1, s2, 1.0 - s2).unwrap()
    }

    #[test]
    fn cnoma_unit_instance() {
        let r = cnoma_rates(1.0, 1.0, &SlotPowers::new(1.0, 1.0, 1.0, 1.0).unwrap()).unwrap();
        assert!((r.r1 - 0.5).abs() < 1e-15);
        assert!((r.r2 - 0.5 * 3f64.log2()).abs() < 1e-15);
        assert!((r.r2 - 0.79248).abs() < 1e-5);
    }

    #[test]
    fn cnoma_vanishing_partner() {
        let p = SlotPowers::new(0.7, 1.3, 0.9, 1.1).unwrap();
        let g1 = 5.0;
        let r = cnoma_rates(g1, 1e-14, &p).unwrap();
        assert!((r.r1 - 0.5 * (1.0 + g1 * 0.7).log2()).abs() < 1e-12);
        assert!((r.r2 - 0.5 * (1.0 + g1 * 1.3).log2()).abs() < 1e-12);
    }

    #[test]
    fn cnoma_matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let g1 = 10f64.powf(rng.random_range(-2.0..3.0));
            let g2 = 10f64.powf(rng.random_range(-2.0..3.0));
            let (a, b, c, d) = (
                rng.random_range(0.01..2.0),
                rng.random_range(0.01..2.0),
                rng.random_range(0.01..2.0),
                rng.random_range(0.01..2.0),
            );
            let p = SlotPowers {
                p1_1: a,
                p1_2: b,
                p2_1: c,
                p2_2: d,
            };
            let r = cnoma_rates_unchecked(g1, g2, &p);
            let (o1, o2) = oracle_cnoma(g1, g2, a, b, c, d);
            assert!((r.r1 - o1).abs() < 1e-12 && (r.r2 - o2).abs() < 1e-12);
        }
    }

    #[test]
    fn crsma_half_split_instance() {
        let p = SplitPowers::uniform();
        let r = crsma_rates(1.0, 1.0, &p).unwrap();
        let (o1, o2) = oracle_crsma(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5);
        assert!((r.r1 - o1).abs() < 1e-12 && (r.r2 - o2).abs() < 1e-12);
        // Hand evaluation: R11 = ½log2(1 + 2·0.5/2.5), R12 = ½log2(1 + 2·0.5/1.5),
        // R21 = ½log2(1 + 2·0.5/2), R22 = ½log2(2).
        let h = |x: f64| 0.5 * x.log2();
        assert!((r.r1 - (h(1.4) + h(1.0 + 2.0 / 3.0))).abs() < 1e-12);
        assert!((r.r2 - (h(1.5) + h(2.0))).abs() < 1e-12);
    }

    #[test]
    fn crsma_matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let g1 = 10f64.powf(rng.random_range(-1.0..3.0));
            let g2 = 10f64.powf(rng.random_range(-1.0..3.0));
            let p = random_split(&mut rng);
            let s = p.slots;
            let r = crsma_rates(g1, g2, &p).unwrap();
            let (o1, o2) =
                oracle_crsma(g1, g2, s.p1_1, s.p1_2, s.p2_1, s.p2_2, p.p11, p.p12, p.p21, p.p22);
            assert!((r.r1 - o1).abs() < 1e-12 && (r.r2 - o2).abs() < 1e-12);
        }
    }

    #[test]
    fn crsma_collapses_to_cnoma() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let g1 = 10f64.powf(rng.random_range(-1.0..3.0));
            let g2 = 10f64.powf(rng.random_range(-1.0..3.0));
            let slots = SlotPowers::tight(rng.random_range(0.01..1.99), rng.random_range(0.01..1.99));
            let split = SplitPowers::new(slots, 1.0, 0.0, 1.0, 0.0).unwrap();
            let a = crsma_rates(g1, g2, &split).unwrap();
            let b = cnoma_rates(g1, g2, &slots).unwrap();
            assert!((a.r1 - b.r1).abs() < 1e-9 && (a.r2 - b.r2).abs() < 1e-9);
        }
    }

    #[test]
    fn generic_chain_reproduces_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let ideal = RelayImpairments::ideal();
        for _ in 0..200 {
            let g1 = 10f64.powf(rng.random_range(-1.0..3.0));
            let g2 = 10f64.powf(rng.random_range(-1.0..3.0));
            let p = random_split(&mut rng);
            let a = crsma_rates(g1, g2, &p).unwrap();
            let b = crsma_rates_nonideal(g1, g2, &p, &ideal).unwrap();
            assert!((a.r1 - b.r1).abs() < 1e-12 && (a.r2 - b.r2).abs() < 1e-12);
            let a = cnoma_rates(g1, g2, &p.slots).unwrap();
            let b = cnoma_rates_nonideal(g1, g2, &p.slots, &ideal).unwrap();
            assert!((a.r1 - b.r1).abs() < 1e-12 && (a.r2 - b.r2).abs() < 1e-12);
            let a = coma_rates(g1, g2, &p.slots).unwrap();
            let b = coma_rates_nonideal(g1, g2, &p.slots, &ideal).unwrap();
            assert!((a.r1 - b.r1).abs() < 1e-12 && (a.r2 - b.r2).abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_unit_instances() {
        let r = baseline_rates(SchemeId::Oma, 1.0, 1.0, &Allocation::Fixed).unwrap();
        assert_eq!((r.r1, r.r2), (1.0, 1.0));
        let r = baseline_rates(SchemeId::COma, 1.0, 1.0, &Allocation::Slots(SlotPowers::uniform()))
            .unwrap();
        assert!((r.r1 - 0.5 * 3f64.log2()).abs() < 1e-15 && r.r1 == r.r2);
        assert!(baseline_rates(SchemeId::Noma, 1.0, 1.0, &Allocation::Fixed).is_err());
    }

    #[test]
    fn rsma_endpoints_are_noma_corners() {
        let (g1, g2) = (20.0, 3.0);
        let full = rsma_rates(g1, g2, 1.0).unwrap();
        let n1 = noma_rates(g1, g2, &NomaPowers { q1: 1.0, q2: 1.0, order: DecodeOrder::User1First }).unwrap();
        assert!((full.r1 - n1.r1).abs() < 1e-12 && (full.r2 - n1.r2).abs() < 1e-12);
        let none = rsma_rates(g1, g2, 0.0).unwrap();
        let n2 = noma_rates(g1, g2, &NomaPowers { q1: 1.0, q2: 1.0, order: DecodeOrder::User2First }).unwrap();
        assert!((none.r1 - n2.r1).abs() < 1e-12 && (none.r2 - n2.r2).abs() < 1e-12);
        // Every split sits on the sum-capacity face.
        for q in [0.1, 0.4, 0.8] {
            let r = rsma_rates(g1, g2, q).unwrap();
            assert!((r.r1 + r.r2 - (1.0 + g1 + g2).log2()).abs() < 1e-12);
        }
    }

    #[test]
    fn non_positive_snr_is_a_domain_error() {
        let p = SlotPowers::uniform();
        assert!(matches!(cnoma_rates(0.0, 1.0, &p), Err(Error::Domain(_))));
        assert!(matches!(crsma_rates(1.0, -1.0, &SplitPowers::uniform()), Err(Error::Domain(_))));
        assert!(matches!(oma_rates(f64::NAN, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn budget_validation() {
        assert!(SlotPowers::new(1.5, 0.6, 1.0, 1.0).is_err());
        assert!(SlotPowers::new(1.0, 1.0 + 1e-10, 1.0, 1.0).is_ok());
        assert!(SplitPowers::new(SlotPowers::uniform(), 0.6, 0.5, 0.5, 0.5).is_err());
        assert!(SlotPowers::new(-0.1, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in SchemeId::ALL {
            assert_eq!(s.name().parse::<SchemeId>().unwrap(), s);
        }
        assert_eq!("c_rsma".parse::<SchemeId>().unwrap(), SchemeId::CRsma);
        assert!("foo".parse::<SchemeId>().is_err());
    }
}
