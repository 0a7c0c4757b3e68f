use coop_uplink::outage::sum_exp_cdf;
use coop_uplink::rates::{cnoma_rates, crsma_rates, SlotPowers, SplitPowers};
use coop_uplink::sca::program::pack_slots;
use coop_uplink::sca::{linearize_cnoma, log_rate_hessian};
use proptest::prelude::*;

fn slots() -> impl Strategy<Value = SlotPowers> {
    (0.0f64..=2.0, 0.0f64..=1.0, 0.0f64..=2.0, 0.0f64..=1.0).prop_map(|(a, sa, c, sc)| SlotPowers {
        p1_1: a,
        p1_2: (2.0 - a) * sa,
        p2_1: c,
        p2_2: (2.0 - c) * sc,
    })
}

fn snr() -> impl Strategy<Value = f64> {
    (-20.0f64..40.0).prop_map(|db| 10f64.powf(db / 10.0))
}

proptest! {
    #[test]
    fn degenerate_split_equals_cnoma(p in slots(), g1 in snr(), g2 in snr()) {
        let a = cnoma_rates(g1, g2, &p).unwrap();
        let b = crsma_rates(g1, g2, &SplitPowers::collapsed(p, 0.0)).unwrap();
        prop_assert!((a.r1 - b.r1).abs() < 1e-9 && (a.r2 - b.r2).abs() < 1e-9);
    }

    #[test]
    fn log_rate_hessian_positive_definite(
        a in 1e-3f64..1e3, b in 1e-3f64..1e3, x in 1e-3f64..1e3, y in 1e-3f64..1e3
    ) {
        let h = log_rate_hessian(a, b, x, y);
        prop_assert!(h[0][0] > 0.0);
        prop_assert!(h[0][0] * h[1][1] - h[0][1] * h[1][0] > 0.0);
    }

    #[test]
    fn tangent_bound_never_exceeds_rate(
        at in slots(), p in slots(), g1 in snr(), g2 in snr()
    ) {
        let floor = |s: SlotPowers| SlotPowers {
            p1_1: s.p1_1.max(1e-3), p1_2: s.p1_2.max(1e-3), p2_1: s.p2_1.max(1e-3), p2_2: s.p2_2.max(1e-3),
        };
        let (at, p) = (floor(at), floor(p));
        let lp = linearize_cnoma(&at, g1, g2).unwrap();
        let exact = cnoma_rates(g1, g2, &p).unwrap();
        let v = pack_slots(&p);
        prop_assert!(lp.lower_bound(0, &v) <= exact.r1 + 1e-10);
        prop_assert!(lp.lower_bound(1, &v) <= exact.r2 + 1e-10);
        let here = cnoma_rates(g1, g2, &at).unwrap();
        let va = pack_slots(&at);
        prop_assert!((lp.lower_bound(0, &va) - here.r1).abs() < 1e-12 * here.r1.max(1.0));
        prop_assert!((lp.lower_bound(1, &va) - here.r2).abs() < 1e-12 * here.r2.max(1.0));
    }

    #[test]
    fn sum_exp_cdf_symmetric(z in 0.0f64..50.0, a in 0.01f64..20.0, b in 0.01f64..20.0) {
        let p = sum_exp_cdf(z, a, b).unwrap();
        let q = sum_exp_cdf(z, b, a).unwrap();
        prop_assert!((p - q).abs() < 1e-12);
    }

    #[test]
    fn rates_grow_with_snr(p in slots(), g1 in snr(), g2 in snr(), k in 1.0f64..10.0) {
        let a = cnoma_rates(g1, g2, &p).unwrap();
        let b = cnoma_rates(k * g1, k * g2, &p).unwrap();
        prop_assert!(b.r1 >= a.r1 - 1e-12 && b.r2 >= a.r2 - 1e-12);
    }
}
