//! Link budget, fading draws and relay impairments.
//!
//! Everything here works in linear units. Decibel quantities only appear in
//! [`LinkConfig`], which is the boundary with configuration files and the CLI.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::units::{db_to_linear, dbm_to_watts};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Free-space channel power gain at 1 m for the given carrier frequency.
pub fn free_space_gain_at_1m(carrier_hz: f64) -> f64 {
    let r = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * carrier_hz);
    r * r
}

/// Raw link parameters as they appear in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub d1_m: f64,
    pub d2_m: f64,
    pub alpha: f64,
    pub beta0_db: f64,
    pub p1_dbm: f64,
    pub p2_dbm: f64,
    pub n0_dbm_hz: f64,
    pub bandwidth_hz: f64,
    /// Extra attenuation applied to user 2's mean SNR on top of path loss.
    pub gap_db: f64,
    /// Residual self-interference coefficient; `None` means perfect cancellation.
    pub k_sic_db: Option<f64>,
    /// Mean inter-user received SNR; `None` means the ideal (infinitely strong) link.
    pub inter_user_snr_db: Option<f64>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            d1_m: 100.0,
            d2_m: 100.0,
            alpha: 3.7,
            beta0_db: crate::units::linear_to_db(free_space_gain_at_1m(5.0e9)),
            p1_dbm: 20.0,
            p2_dbm: 20.0,
            n0_dbm_hz: -174.0,
            bandwidth_hz: 1.0e6,
            gap_db: 0.0,
            k_sic_db: None,
            inter_user_snr_db: None,
        }
    }
}

impl LinkConfig {
    /// Parses a flat `key = value` file. Unknown keys are rejected; missing
    /// keys keep their defaults. `inf`/`-inf` select the ideal inter-user
    /// link and perfect self-interference cancellation respectively.
    pub fn parse(text: &str) -> Result<Self> {
        Self::default().overlay(text)
    }

    /// Like [`LinkConfig::parse`], with missing keys taken from `self`.
    pub fn overlay(&self, text: &str) -> Result<Self> {
        let mut cfg = self.clone();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let num = || -> Result<f64> {
                value.parse::<f64>().map_err(|_| {
                    Error::Config(format!("line {}: `{key}` is not a number", lineno + 1))
                })
            };
            match key {
                "d1_m" => cfg.d1_m = num()?,
                "d2_m" => cfg.d2_m = num()?,
                "alpha" => cfg.alpha = num()?,
                "beta0_db" => cfg.beta0_db = num()?,
                "p1_dbm" => cfg.p1_dbm = num()?,
                "p2_dbm" => cfg.p2_dbm = num()?,
                "n0_dbm_hz" => cfg.n0_dbm_hz = num()?,
                "bandwidth_hz" => cfg.bandwidth_hz = num()?,
                "gap_db" => cfg.gap_db = num()?,
                "k_sic_db" => {
                    let v = num()?;
                    cfg.k_sic_db = (v != f64::NEG_INFINITY).then_some(v);
                }
                "inter_user_snr_db" => {
                    let v = num()?;
                    cfg.inter_user_snr_db = (v != f64::INFINITY).then_some(v);
                }
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(cfg)
    }

    /// Renders the config back to the flat file format.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: f64| s.push_str(&format!("{k} = {v}\n"));
        kv("d1_m", self.d1_m);
        kv("d2_m", self.d2_m);
        kv("alpha", self.alpha);
        kv("beta0_db", self.beta0_db);
        kv("p1_dbm", self.p1_dbm);
        kv("p2_dbm", self.p2_dbm);
        kv("n0_dbm_hz", self.n0_dbm_hz);
        kv("bandwidth_hz", self.bandwidth_hz);
        kv("gap_db", self.gap_db);
        kv("k_sic_db", self.k_sic_db.unwrap_or(f64::NEG_INFINITY));
        kv(
            "inter_user_snr_db",
            self.inter_user_snr_db.unwrap_or(f64::INFINITY),
        );
        s
    }

    pub fn non_ideal(&self) -> Result<NonIdealParams> {
        let k_sic = self.k_sic_db.map_or(0.0, db_to_linear);
        let inter_user = match self.inter_user_snr_db {
            None => InterUserLink::Ideal,
            Some(db) => InterUserLink::Finite { mean_snr_db: db },
        };
        NonIdealParams::new(inter_user, k_sic)
    }
}

/// Large-scale link parameters, all linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub d1: f64,
    pub d2: f64,
    pub alpha: f64,
    pub beta0: f64,
    pub p_bar1: f64,
    pub p_bar2: f64,
    pub noise_psd: f64,
    pub bandwidth: f64,
    /// Linear attenuation (≤ 1) applied to user 2 on top of path loss.
    pub user2_attenuation: f64,
}

/// Converts raw parameters into a validated [`LinkBudget`].
pub fn build_link_budget(cfg: &LinkConfig) -> Result<LinkBudget> {
    LinkBudget::new(
        cfg.d1_m,
        cfg.d2_m,
        cfg.alpha,
        db_to_linear(cfg.beta0_db),
        dbm_to_watts(cfg.p1_dbm),
        dbm_to_watts(cfg.p2_dbm),
        dbm_to_watts(cfg.n0_dbm_hz),
        cfg.bandwidth_hz,
    )
    .and_then(|b| b.with_gap_db(cfg.gap_db))
}

impl LinkBudget {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d1: f64,
        d2: f64,
        alpha: f64,
        beta0: f64,
        p_bar1: f64,
        p_bar2: f64,
        noise_psd: f64,
        bandwidth: f64,
    ) -> Result<Self> {
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(validation(field, format!("must be finite and > 0, got {v}")))
            }
        }
        positive("d1", d1)?;
        positive("d2", d2)?;
        positive("beta0", beta0)?;
        positive("p_bar1", p_bar1)?;
        positive("p_bar2", p_bar2)?;
        positive("noise_psd", noise_psd)?;
        positive("bandwidth", bandwidth)?;
        if !(alpha.is_finite() && alpha >= 2.0) {
            return Err(validation("alpha", format!("must be >= 2, got {alpha}")));
        }
        Ok(Self {
            d1,
            d2,
            alpha,
            beta0,
            p_bar1,
            p_bar2,
            noise_psd,
            bandwidth,
            user2_attenuation: 1.0,
        })
    }

    /// Applies an extra channel gap (dB) to user 2's mean SNR.
    pub fn with_gap_db(mut self, gap_db: f64) -> Result<Self> {
        if !gap_db.is_finite() {
            return Err(validation("gap_db", "must be finite"));
        }
        self.user2_attenuation = db_to_linear(-gap_db);
        Ok(self)
    }

    /// Same budget with both users' average powers set to `dbm`.
    pub fn with_power_dbm(mut self, dbm: f64) -> Self {
        self.p_bar1 = dbm_to_watts(dbm);
        self.p_bar2 = dbm_to_watts(dbm);
        self
    }

    pub fn sigma2_bs(&self) -> f64 {
        self.noise_psd * self.bandwidth
    }

    pub fn omega1(&self) -> f64 {
        self.p_bar1 * self.beta0 / (self.sigma2_bs() * self.d1.powf(self.alpha))
    }

    pub fn omega2(&self) -> f64 {
        self.p_bar2 * self.beta0 / (self.sigma2_bs() * self.d2.powf(self.alpha))
            * self.user2_attenuation
    }
}

/// Mean SNR pair `(Ω₁, Ω₂)`.
pub fn mean_snr_pair(budget: &LinkBudget) -> (f64, f64) {
    (budget.omega1(), budget.omega2())
}

/// One realization of the three multipath power gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingDraw {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl FadingDraw {
    pub fn from_gains(g1: f64, g2: f64, g3: f64, budget: &LinkBudget) -> Self {
        Self {
            g1,
            g2,
            g3,
            gamma1: g1 * budget.omega1(),
            gamma2: g2 * budget.omega2(),
        }
    }

    /// Received inter-user SNRs `(at user 1, at user 2)` at full average power,
    /// or `None` for the ideal link.
    pub fn inter_user_snr(&self, nip: &NonIdealParams, budget: &LinkBudget) -> Option<(f64, f64)> {
        nip.inter_user_mean_snr(budget)
            .map(|(a, b)| (a * self.g3, b * self.g3))
    }
}

/// Random stream for trial `index` under `master_seed`.
///
/// Each index selects an independent ChaCha stream, so draws do not depend
/// on how trials are partitioned across workers.
pub fn fading_stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Draws i.i.d. Exp(1) gains for the two direct links and the inter-user link.
pub fn sample_fading<R: Rng + ?Sized>(budget: &LinkBudget, rng: &mut R) -> FadingDraw {
    let g1: f64 = Exp1.sample(rng);
    let g2: f64 = Exp1.sample(rng);
    let g3: f64 = Exp1.sample(rng);
    FadingDraw::from_gains(g1, g2, g3, budget)
}

/// State of the link between the two users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InterUserLink {
    /// Infinitely strong link: relayed noise vanishes.
    Ideal,
    /// Mean received SNR at user 1 (from user 2 at full power), in dB.
    Finite { mean_snr_db: f64 },
}

/// Non-ideal relaying parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonIdealParams {
    pub inter_user: InterUserLink,
    /// Residual self-interference attenuation, linear in `[0, 1]`.
    pub k_sic: f64,
}

impl Default for NonIdealParams {
    fn default() -> Self {
        Self::ideal()
    }
}

impl NonIdealParams {
    pub fn new(inter_user: InterUserLink, k_sic: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&k_sic) {
            return Err(validation("k_sic", format!("must lie in [0, 1], got {k_sic}")));
        }
        if let InterUserLink::Finite { mean_snr_db } = inter_user {
            if mean_snr_db.is_nan() || mean_snr_db == f64::NEG_INFINITY {
                return Err(validation("inter_user_snr_db", "must be a number > -inf"));
            }
        }
        Ok(Self { inter_user, k_sic })
    }

    pub fn ideal() -> Self {
        Self {
            inter_user: InterUserLink::Ideal,
            k_sic: 0.0,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.k_sic == 0.0 && matches!(self.inter_user, InterUserLink::Ideal)
    }

    /// Mean inter-user SNRs at (user 1, user 2). Channel reciprocity and a
    /// common noise floor make them differ only through the sender's power.
    pub fn inter_user_mean_snr(&self, budget: &LinkBudget) -> Option<(f64, f64)> {
        match self.inter_user {
            InterUserLink::Ideal => None,
            InterUserLink::Finite { mean_snr_db } => {
                let at1 = db_to_linear(mean_snr_db);
                Some((at1, at1 * budget.p_bar1 / budget.p_bar2))
            }
        }
    }

    /// Self-interference-to-noise ratios at full average power.
    ///
    /// The self-interference channel is taken at the reference distance, so
    /// the residual power is `k_sic · β₀ · P̄ᵢ`.
    pub fn self_interference_inr(&self, budget: &LinkBudget) -> (f64, f64) {
        let s = self.k_sic * budget.beta0 / budget.sigma2_bs();
        (s * budget.p_bar1, s * budget.p_bar2)
    }

    /// Normalized relay impairments with the inter-user fading gain `g3`.
    pub fn relay_impairments(&self, budget: &LinkBudget, g3: f64) -> RelayImpairments {
        let (inr1, inr2) = self.self_interference_inr(budget);
        let snr = match self.inter_user_mean_snr(budget) {
            None => [f64::INFINITY; 2],
            Some((a, b)) => [a * g3, b * g3],
        };
        RelayImpairments {
            inter_user_snr: snr,
            inr: [inr1, inr2],
        }
    }
}

/// Per-user relay impairments in normalized (noise = 1) units.
///
/// `inter_user_snr[i]` is the SNR at user `i` of the other user's signal at
/// full average power; `inr[i]` is user `i`'s residual self-interference at
/// full average power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayImpairments {
    pub inter_user_snr: [f64; 2],
    pub inr: [f64; 2],
}

impl RelayImpairments {
    pub fn ideal() -> Self {
        Self {
            inter_user_snr: [f64::INFINITY; 2],
            inr: [0.0; 2],
        }
    }

    /// Splits the relayed power of user `relay` into the useful fraction
    /// `c` and the forwarded-noise fraction `e = 1 - c`.
    ///
    /// `own_slot1` is the relay's own slot-1 power (drives residual self
    /// interference); `other_slot1` the other user's slot-1 power.
    pub fn relay_fractions(&self, relay: usize, own_slot1: f64, other_slot1: f64) -> (f64, f64) {
        let snr = self.inter_user_snr[relay];
        let noise = self.inr[relay] * own_slot1 + 1.0;
        if snr.is_infinite() {
            return (1.0, 0.0);
        }
        let signal = snr * other_slot1;
        let total = signal + noise;
        (signal / total, noise / total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::linear_to_db;

    fn default_budget() -> LinkBudget {
        build_link_budget(&LinkConfig::default()).unwrap()
    }

    #[test]
    fn noise_power_from_psd() {
        let b = default_budget();
        let expected = 10f64.powf((-174.0 + 60.0 - 30.0) / 10.0);
        assert!((b.sigma2_bs() - expected).abs() / expected < 1e-12);
        assert!((b.sigma2_bs() - 3.981e-15).abs() < 1e-18);
    }

    #[test]
    fn omega_matches_hand_calculation() {
        let mut cfg = LinkConfig::default();
        cfg.beta0_db = linear_to_db(2.282e-5);
        let b = build_link_budget(&cfg).unwrap();
        // 0.1 W * 2.282e-5 / (3.98107e-15 W * 100^3.7)
        let sigma2 = 3.981_071_705_534_97e-15;
        let hand = 0.1 * 2.282e-5 / (sigma2 * 10f64.powf(7.4));
        assert!((b.omega1() - hand).abs() / hand < 1e-9, "{} vs {hand}", b.omega1());
        assert_eq!(b.omega1(), b.omega2());
    }

    #[test]
    fn db_round_trip_of_beta0() {
        let b = default_budget();
        let back = linear_to_db(b.beta0);
        assert!((back - LinkConfig::default().beta0_db).abs() < 1e-12 * back.abs());
        assert!((back + 46.43).abs() < 0.05);
    }

    #[test]
    fn rejects_non_positive_fields() {
        let mut cfg = LinkConfig::default();
        cfg.d1_m = 0.0;
        match build_link_budget(&cfg) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "d1"),
            other => panic!("unexpected {other:?}"),
        }
        let mut cfg = LinkConfig::default();
        cfg.bandwidth_hz = -1.0;
        assert!(matches!(
            build_link_budget(&cfg),
            Err(Error::Validation { field: "bandwidth", .. })
        ));
        let mut cfg = LinkConfig::default();
        cfg.alpha = 1.5;
        assert!(matches!(
            build_link_budget(&cfg),
            Err(Error::Validation { field: "alpha", .. })
        ));
    }

    #[test]
    fn doubling_power_doubles_omega1_only() {
        let b = default_budget();
        let mut b2 = b;
        b2.p_bar1 *= 2.0;
        assert!((b2.omega1() / b.omega1() - 2.0).abs() < 1e-12);
        assert_eq!(b2.omega2(), b.omega2());
        let (o1, _) = mean_snr_pair(&b);
        assert!((linear_to_db(o1) - 10.0 * o1.log10()).abs() < 1e-12);
    }

    #[test]
    fn gap_scales_user2() {
        let b = default_budget().with_gap_db(10.0).unwrap();
        assert!((b.omega1() / b.omega2() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn same_stream_same_draws() {
        let b = default_budget();
        let mut r1 = fading_stream(42, 7);
        let mut r2 = fading_stream(42, 7);
        for _ in 0..100 {
            let a = sample_fading(&b, &mut r1);
            let c = sample_fading(&b, &mut r2);
            assert_eq!(a.g1.to_bits(), c.g1.to_bits());
            assert_eq!(a.g3.to_bits(), c.g3.to_bits());
        }
        let mut r3 = fading_stream(42, 8);
        assert_ne!(sample_fading(&b, &mut r3).g1, sample_fading(&b, &mut fading_stream(42, 7)).g1);
    }

    #[test]
    fn exponential_moments() {
        let b = default_budget();
        let mut rng = fading_stream(1, 0);
        let n = 1_000_000;
        let (mut s, mut s2, mut below) = (0.0, 0.0, 0usize);
        for _ in 0..n {
            let d = sample_fading(&b, &mut rng);
            assert!(d.g1 >= 0.0);
            assert_eq!(d.gamma1, d.g1 * b.omega1());
            s += d.g1;
            s2 += d.g1 * d.g1;
            below += usize::from(d.g1 <= 1.0);
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((0.995..=1.005).contains(&mean), "mean {mean}");
        // Var of the sample variance of Exp(1) is (9 - 1)/n.
        assert!((var - 1.0).abs() < 3.0 * (8.0 / n as f64).sqrt(), "var {var}");
        let cdf = below as f64 / n as f64;
        assert!((cdf - (1.0 - (-1.0f64).exp())).abs() < 0.002, "cdf {cdf}");
    }

    #[test]
    fn config_file_round_trip() {
        let text = "# reference link\nd1_m = 100\nd2_m = 120\np1_dbm = 8\nk_sic_db = -65\ninter_user_snr_db = 26\n";
        let cfg = LinkConfig::parse(text).unwrap();
        assert_eq!(cfg.d2_m, 120.0);
        assert_eq!(cfg.p1_dbm, 8.0);
        assert_eq!(cfg.k_sic_db, Some(-65.0));
        let again = LinkConfig::parse(&cfg.to_config_text()).unwrap();
        assert_eq!(cfg, again);
        assert!(LinkConfig::parse("bogus = 1").is_err());
        assert!(LinkConfig::parse("d1_m 100").is_err());
        let ideal = LinkConfig::parse("k_sic_db = -inf\ninter_user_snr_db = inf").unwrap();
        assert!(ideal.non_ideal().unwrap().is_ideal());
    }

    #[test]
    fn relay_fractions_limits() {
        let imp = RelayImpairments::ideal();
        assert_eq!(imp.relay_fractions(0, 1.0, 1.0), (1.0, 0.0));
        let imp = RelayImpairments {
            inter_user_snr: [100.0, 100.0],
            inr: [0.0, 0.0],
        };
        let (c, e) = imp.relay_fractions(0, 1.0, 1.0);
        assert!((c - 100.0 / 101.0).abs() < 1e-15);
        assert!((c + e - 1.0).abs() < 1e-15);
        assert!(NonIdealParams::new(InterUserLink::Ideal, 1.5).is_err());
    }
}
