use proptest::prelude::*;
use tbg_control::controllers::{
    AldanaLaw, AldanaParams, BasinLaw, BasinParams, InnerLaw, LinearLaw, PiecewiseController, PostSwitchLaw,
    SignMode, ZetaSchedule,
};
use tbg_control::poly;

fn basin() -> BasinLaw {
    BasinLaw::new(
        vec![3.0, 3.0, 1.0],
        BasinParams {
            rho: 578.38 / 15.0,
            eps1: 3.0 / 22.0,
            eps2: 3.0 / 18.0,
            t_bbf: 578.38,
        },
    )
    .unwrap()
}

fn aldana(width: f64) -> AldanaLaw {
    AldanaLaw::new(
        AldanaParams {
            alpha1: 4.0,
            alpha2: 4.0,
            beta1: 0.25,
            beta2: 0.25,
            p: 0.5,
            q: 3.0,
            k: 1.5,
            tc1: 5.0,
            tc2: 5.0,
        },
        ZetaSchedule::constant(0.0),
        SignMode::BoundaryLayer { width },
    )
    .unwrap()
}

proptest! {
    #[test]
    fn basin_law_is_odd(z in prop::array::uniform3(-50.0f64..50.0)) {
        let law = basin();
        let neg = [-z[0], -z[1], -z[2]];
        prop_assert_eq!(law.evaluate(&neg), -law.evaluate(&z));
    }

    #[test]
    fn linear_roots_match_requested_poles(r in prop::array::uniform3(0.1f64..10.0)) {
        // (s + r1)(s + r2)(s + r3)
        let gains = vec![
            r[0] + r[1] + r[2],
            r[0] * r[1] + r[0] * r[2] + r[1] * r[2],
            r[0] * r[1] * r[2],
        ];
        let law = LinearLaw::new(gains).unwrap();
        let mut got: Vec<f64> = law.roots().iter().map(|c| -c.re).collect();
        got.sort_by(f64::total_cmp);
        let mut want = r.to_vec();
        want.sort_by(f64::total_cmp);
        // Close roots are ill-conditioned, so compare the symmetric functions instead.
        let sum: f64 = got.iter().sum();
        let prod: f64 = got.iter().product();
        prop_assert!((sum - want.iter().sum::<f64>()).abs() < 1e-8 * sum);
        prop_assert!((prod / want.iter().product::<f64>() - 1.0).abs() < 1e-6);
        for c in law.roots() {
            prop_assert!(c.re < 0.0);
        }
    }

    #[test]
    fn hurwitz_test_agrees_with_roots(c in prop::array::uniform3(-5.0f64..20.0)) {
        let roots = poly::roots(&c).unwrap();
        let max_re = roots.iter().map(|r| r.re).fold(f64::NEG_INFINITY, f64::max);
        prop_assume!(max_re.abs() > 1e-6);
        prop_assert_eq!(poly::is_hurwitz(&c).unwrap(), max_re < 0.0);
    }

    #[test]
    fn aldana_dominates_zeta_outside_layer(
        z in prop::array::uniform2(-100.0f64..100.0),
        zeta in 0.0f64..100.0,
    ) {
        let width = 1e-4;
        let law = aldana(width);
        prop_assume!(law.sigma(&z).abs() >= width);
        let w = law.evaluate_with_zeta(&z, zeta);
        prop_assert!(w.abs() >= zeta);
        prop_assert!(w * law.sigma(&z) < 0.0);
    }

    #[test]
    fn transient_control_is_continuous_in_time(
        x in prop::array::uniform3(-100.0f64..100.0),
        frac in 0.0f64..0.99,
    ) {
        let inner = InnerLaw::Basin(basin());
        let post = PostSwitchLaw::LinearFeedback { gains: vec![6.0, 11.0, 6.0] };
        let c = PiecewiseController::design(1.0, 65.0, 0.0, inner, post, 0.0).unwrap();
        let t = 65.0 * frac;
        let h = 1e-9;
        let u0 = c.control(t, &x).unwrap();
        let u1 = c.control(t + h, &x).unwrap();
        let k = c.gain().kappa(t).unwrap();
        // |du/dt| is of order kappa^(n+1) |x|, so bound the increment accordingly.
        let scale = (1.0 + u0.abs()) * k.max(1.0).powi(4) * 1e3;
        prop_assert!((u1 - u0).abs() <= h * scale, "u jumped from {} to {}", u0, u1);
    }
}

#[test]
fn linear_post_switch_rejects_disturbed_plants() {
    let inner = InnerLaw::Linear(LinearLaw::new(vec![21.0, 134.75, 257.25]).unwrap());
    let post = PostSwitchLaw::LinearFeedback { gains: vec![6.0, 11.0, 6.0] };
    assert!(PiecewiseController::design(1.0, 10.0, 0.0, inner, post, 1.0).is_err());
}

#[test]
fn strict_sign_is_zero_only_at_zero() {
    assert_eq!(SignMode::Strict.apply(0.0), 0.0);
    assert_eq!(SignMode::Strict.apply(1e-300), 1.0);
    assert_eq!(SignMode::Strict.apply(-1e-300), -1.0);
    let bl = SignMode::BoundaryLayer { width: 1e-3 };
    assert_eq!(bl.apply(5e-4), 0.5);
    assert_eq!(bl.apply(-1.0), -1.0);
}
