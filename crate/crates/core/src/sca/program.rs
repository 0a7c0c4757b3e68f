//! Rate expressions in the `½·log₂(1 + 1/x + 1/y)` form and their
//! first-order lower bounds.
//!
//! Every cooperative rate in this crate is a sum of such terms, where `x`
//! and `y` are the interference-plus-noise-to-signal ratios of one stream in
//! mini-slot 1 and mini-slot 2. Both are posynomials of the power variables,
//! and `log₂(1 + 1/x + 1/y)` is jointly convex in `(x, y)`, so its tangent
//! plane is a global under-estimator.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::rates::{SchemeId, SlotPowers, SplitPowers};

use super::posynomial::{var, Monomial, Posynomial, NVARS};

/// One `½·log₂(1 + 1/x + 1/y)` term.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTerm {
    pub x: Posynomial,
    pub y: Posynomial,
}

/// A stream as seen at the base station: its received power in both slots.
#[derive(Debug, Clone, Copy)]
struct Stream {
    user: usize,
    slot1: Monomial,
    slot2: Monomial,
}

/// A power budget `Σ p_v ≤ cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub user: usize,
    pub vars: [usize; 2],
    pub cap: f64,
    pub kind: BudgetKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetKind {
    /// `p_i^1 + p_i^2 ≤ 2`
    Slots,
    /// `p_i1 + p_i2 ≤ 1`
    Split,
}

/// Rates of both users of one scheme for fixed channel SNRs.
#[derive(Debug, Clone, PartialEq)]
pub struct RateProgram {
    pub scheme: SchemeId,
    pub gamma: [f64; 2],
    /// Terms summed into each user's rate.
    pub users: [Vec<RateTerm>; 2],
    pub budgets: Vec<Budget>,
    /// Variables the program actually uses.
    pub vars: Vec<usize>,
}

fn chain_terms(streams: &[Stream]) -> [Vec<RateTerm>; 2] {
    let mut users: [Vec<RateTerm>; 2] = [Vec::new(), Vec::new()];
    for (k, s) in streams.iter().enumerate() {
        let later = &streams[k + 1..];
        let i1: Vec<Monomial> = later.iter().map(|t| t.slot1).collect();
        let i2: Vec<Monomial> = later.iter().map(|t| t.slot2).collect();
        users[s.user].push(RateTerm {
            x: Posynomial::ratio_plus_one(&i1, &s.slot1),
            y: Posynomial::ratio_plus_one(&i2, &s.slot2),
        });
    }
    users
}

fn slot_budgets() -> Vec<Budget> {
    vec![
        Budget {
            user: 0,
            vars: [var::P1_1, var::P1_2],
            cap: 2.0,
            kind: BudgetKind::Slots,
        },
        Budget {
            user: 1,
            vars: [var::P2_1, var::P2_2],
            cap: 2.0,
            kind: BudgetKind::Slots,
        },
    ]
}

impl RateProgram {
    /// C-NOMA: s₁ then s₂, each combined over both mini-slots.
    pub fn cnoma(gamma1: f64, gamma2: f64) -> Self {
        use var::*;
        let streams = [
            Stream {
                user: 0,
                slot1: Monomial::product(gamma1, &[P1_1]),
                slot2: Monomial::product(gamma2, &[P2_2]),
            },
            Stream {
                user: 1,
                slot1: Monomial::product(gamma2, &[P2_1]),
                slot2: Monomial::product(gamma1, &[P1_2]),
            },
        ];
        Self {
            scheme: SchemeId::CNoma,
            gamma: [gamma1, gamma2],
            users: chain_terms(&streams),
            budgets: slot_budgets(),
            vars: vec![P1_1, P1_2, P2_1, P2_2],
        }
    }

    /// C-RSMA: s₁₁, s₂₁, s₁₂, s₂₂.
    pub fn crsma(gamma1: f64, gamma2: f64) -> Self {
        use var::*;
        let u1 = |split| Stream {
            user: 0,
            slot1: Monomial::product(gamma1, &[P1_1, split]),
            slot2: Monomial::product(gamma2, &[P2_2, split]),
        };
        let u2 = |split| Stream {
            user: 1,
            slot1: Monomial::product(gamma2, &[P2_1, split]),
            slot2: Monomial::product(gamma1, &[P1_2, split]),
        };
        let streams = [u1(P11), u2(P21), u1(P12), u2(P22)];
        let mut budgets = slot_budgets();
        budgets.push(Budget {
            user: 0,
            vars: [P11, P12],
            cap: 1.0,
            kind: BudgetKind::Split,
        });
        budgets.push(Budget {
            user: 1,
            vars: [P21, P22],
            cap: 1.0,
            kind: BudgetKind::Split,
        });
        Self {
            scheme: SchemeId::CRsma,
            gamma: [gamma1, gamma2],
            users: chain_terms(&streams),
            budgets,
            vars: (0..NVARS).collect(),
        }
    }

    /// C-OMA: each user on its own block, no inter-user interference.
    pub fn coma(gamma1: f64, gamma2: f64) -> Self {
        use var::*;
        let s1 = Stream {
            user: 0,
            slot1: Monomial::product(gamma1, &[P1_1]),
            slot2: Monomial::product(gamma2, &[P2_2]),
        };
        let s2 = Stream {
            user: 1,
            slot1: Monomial::product(gamma2, &[P2_1]),
            slot2: Monomial::product(gamma1, &[P1_2]),
        };
        let [a, _] = chain_terms(&[s1]);
        let [_, b] = chain_terms(&[s2]);
        Self {
            scheme: SchemeId::COma,
            gamma: [gamma1, gamma2],
            users: [a, b],
            budgets: slot_budgets(),
            vars: vec![P1_1, P1_2, P2_1, P2_2],
        }
    }

    pub fn for_scheme(scheme: SchemeId, gamma1: f64, gamma2: f64) -> Result<Self> {
        if !(gamma1 > 0.0 && gamma2 > 0.0 && gamma1.is_finite() && gamma2.is_finite()) {
            return Err(Error::Domain(format!(
                "SNRs must be finite and > 0, got ({gamma1}, {gamma2})"
            )));
        }
        match scheme {
            SchemeId::CNoma => Ok(Self::cnoma(gamma1, gamma2)),
            SchemeId::CRsma => Ok(Self::crsma(gamma1, gamma2)),
            SchemeId::COma => Ok(Self::coma(gamma1, gamma2)),
            other => Err(Error::Domain(format!("{other} has no SCA rate program"))),
        }
    }

    /// True rate of `user` at `p`.
    pub fn rate(&self, user: usize, p: &[f64; NVARS]) -> f64 {
        self.users[user]
            .iter()
            .map(|t| 0.5 * log2_rate_arg(t.x.eval(p), t.y.eval(p)))
            .sum()
    }

    pub fn objective(&self, p: &[f64; NVARS], fairness: f64) -> f64 {
        self.rate(0, p).min(fairness * self.rate(1, p))
    }
}

/// `log₂(1 + 1/x + 1/y)`.
#[inline]
pub fn log2_rate_arg(x: f64, y: f64) -> f64 {
    (1.0 + 1.0 / x + 1.0 / y).log2()
}

/// Partial derivatives of `log₂(1 + 1/x + 1/y)` with respect to `x` and `y`.
#[inline]
pub fn rate_partials(x: f64, y: f64) -> (f64, f64) {
    let dx = -1.0 / (LN_2 * (x * x + x + x * x / y));
    let dy = -1.0 / (LN_2 * (y * y + y + y * y / x));
    (dx, dy)
}

/// Hessian of `ln(1 + a/x + b/y)` in `(x, y)`.
pub fn log_rate_hessian(a: f64, b: f64, x: f64, y: f64) -> [[f64; 2]; 2] {
    let u = x * y + a * y + b * x;
    let u2 = u * u;
    let hxx = (2.0 * a * y * y / x + a * a * y * y / (x * x) + 2.0 * a * b * y / x) / u2;
    let hyy = (2.0 * b * x * x / y + b * b * x * x / (y * y) + 2.0 * a * b * x / y) / u2;
    let hxy = -a * b / u2;
    [[hxx, hxy], [hxy, hyy]]
}

/// Tangent data of one term at the linearization point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermTangent {
    pub x: f64,
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
}

impl TermTangent {
    /// `½·log₂(1 + 1/x + 1/y)` at the point.
    pub fn value(&self) -> f64 {
        0.5 * log2_rate_arg(self.x, self.y)
    }

    /// Affine under-estimator evaluated at new `(x, y)`.
    pub fn lower_bound(&self, x: f64, y: f64) -> f64 {
        self.value() + 0.5 * self.dx * (x - self.x) + 0.5 * self.dy * (y - self.y)
    }
}

/// First-order expansion of a [`RateProgram`] around an allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationPoint {
    pub program: RateProgram,
    pub point: [f64; NVARS],
    pub tangents: [Vec<TermTangent>; 2],
}

/// Smallest power accepted as a linearization point.
pub const MIN_LINEARIZATION_POWER: f64 = 1e-14;

/// Linearizes every rate term of `program` at `point`.
pub fn linearize(program: &RateProgram, point: &[f64; NVARS]) -> Result<LinearizationPoint> {
    for &v in &program.vars {
        let p = point[v];
        if !(p.is_finite() && p >= MIN_LINEARIZATION_POWER) {
            return Err(Error::Domain(format!(
                "variable {v} = {p} is too small to linearize at"
            )));
        }
    }
    let tangents = [0, 1].map(|u| {
        program.users[u]
            .iter()
            .map(|t| {
                let x = t.x.eval(point);
                let y = t.y.eval(point);
                let (dx, dy) = rate_partials(x, y);
                TermTangent { x, y, dx, dy }
            })
            .collect()
    });
    Ok(LinearizationPoint {
        program: program.clone(),
        point: *point,
        tangents,
    })
}

impl LinearizationPoint {
    /// Lower-bound rate of `user` at a new allocation `p`.
    pub fn lower_bound(&self, user: usize, p: &[f64; NVARS]) -> f64 {
        self.program.users[user]
            .iter()
            .zip(&self.tangents[user])
            .map(|(term, tan)| tan.lower_bound(term.x.eval(p), term.y.eval(p)))
            .sum()
    }

    /// Constant part of the lower bound of `user`:
    /// `Σ ½·log₂(1 + 1/x + 1/y) − ½·dx·x − ½·dy·y`.
    pub fn constant(&self, user: usize) -> f64 {
        self.tangents[user]
            .iter()
            .map(|t| t.value() - 0.5 * t.dx * t.x - 0.5 * t.dy * t.y)
            .sum()
    }
}

/// Packs C-NOMA/C-OMA slot powers into the variable vector.
pub fn pack_slots(p: &SlotPowers) -> [f64; NVARS] {
    let mut v = [1.0; NVARS];
    v[var::P1_1] = p.p1_1;
    v[var::P1_2] = p.p1_2;
    v[var::P2_1] = p.p2_1;
    v[var::P2_2] = p.p2_2;
    v
}

pub fn pack_split(p: &SplitPowers) -> [f64; NVARS] {
    let mut v = pack_slots(&p.slots);
    v[var::P11] = p.p11;
    v[var::P12] = p.p12;
    v[var::P21] = p.p21;
    v[var::P22] = p.p22;
    v
}

pub fn unpack_slots(v: &[f64; NVARS]) -> SlotPowers {
    SlotPowers {
        p1_1: v[var::P1_1],
        p1_2: v[var::P1_2],
        p2_1: v[var::P2_1],
        p2_2: v[var::P2_2],
    }
}

pub fn unpack_split(v: &[f64; NVARS]) -> SplitPowers {
    SplitPowers {
        slots: unpack_slots(v),
        p11: v[var::P11],
        p12: v[var::P12],
        p21: v[var::P21],
        p22: v[var::P22],
    }
}

/// C-NOMA linearization at a slot allocation.
pub fn linearize_cnoma(p: &SlotPowers, gamma1: f64, gamma2: f64) -> Result<LinearizationPoint> {
    let prog = RateProgram::for_scheme(SchemeId::CNoma, gamma1, gamma2)?;
    linearize(&prog, &pack_slots(p))
}

/// C-RSMA linearization at a split allocation.
pub fn linearize_crsma(p: &SplitPowers, gamma1: f64, gamma2: f64) -> Result<LinearizationPoint> {
    let prog = RateProgram::for_scheme(SchemeId::CRsma, gamma1, gamma2)?;
    linearize(&prog, &pack_split(p))
}
