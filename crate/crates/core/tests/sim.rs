use tbg_control::config::{Experiment, Overrides};
use tbg_control::controllers::{Controller, InnerLaw, LinearLaw};
use tbg_control::plant::ChainPlant;
use tbg_control::presets::preset;
use tbg_control::sim::{simulate_t_domain, EventKind, IntegratorSettings, SettlingCriterion};

fn build(name: &str) -> Experiment {
    preset(name).unwrap().build(Overrides::default()).unwrap()
}

/// Closed loop `x'' = -2 x' - 2 x`: `x(t) = e^-t (cos t + 2 sin t)` from (1, 1).
fn rk4_error(step: f64) -> f64 {
    let plant = ChainPlant::undisturbed(2).unwrap();
    let controller = Controller::Autonomous {
        inner: InnerLaw::Linear(LinearLaw::new(vec![2.0, 2.0]).unwrap()),
        t0: 0.0,
    };
    let crit = SettlingCriterion::for_deadline(2.0);
    let traj = simulate_t_domain(&plant, &controller, &[1.0, 1.0], 0.0, 2.0, &IntegratorSettings::rk4(step), &crit)
        .unwrap();
    let t = traj.last_time();
    let exact = (-t).exp() * (t.cos() + 2.0 * t.sin());
    (traj.final_state()[0] - exact).abs()
}

#[test]
fn rk4_is_fourth_order() {
    let ratio = rk4_error(0.02) / rk4_error(0.01);
    assert!((12.0..20.0).contains(&ratio), "error ratio {ratio}");
}

#[test]
fn state_is_continuous_across_the_switch() {
    let exp = build("ex3");
    let traj = exp.dense_run(&[10.0, 10.0]).unwrap();
    let sw = traj.switch_time.unwrap();
    let e = traj.events.iter().find(|e| e.kind == EventKind::Switch).unwrap();
    assert_eq!(e.t, sw);
    let left = traj.interpolate(sw - 1e-9).unwrap();
    let right = traj.interpolate(sw + 1e-9).unwrap();
    for (a, b) in left.iter().zip(&right) {
        assert!((a - b).abs() < 1e-6, "{left:?} vs {right:?}");
    }
    assert!(e.kappa_left > 1.0);
    assert_eq!(traj.kappas()[e.index], 1.0);
}

#[test]
fn recorded_gain_is_monotone_and_bounded() {
    let exp = build("ex3");
    let Controller::Piecewise(c) = &exp.controller else { unreachable!() };
    let traj = exp.simulate(&exp.initial_conditions[3]).unwrap();
    let sw = traj.switch_time.unwrap();
    let ks: Vec<f64> = traj
        .times()
        .iter()
        .zip(traj.kappas())
        .filter(|(t, _)| **t < sw)
        .map(|(_, k)| *k)
        .collect();
    assert!(ks.windows(2).all(|w| w[1] >= w[0]));
    assert!(traj.max_kappa_observed <= c.gain().gain_bound() * (1.0 + 1e-12));
}

#[test]
fn physical_and_stretched_runs_agree() {
    for (name, x0, tol) in [("ex1", vec![50.0; 3], 1e-4), ("ex3", vec![1.0, 1.0], 1e-3)] {
        let exp = build(name);
        let dev = exp.equivalence_deviation(&x0).unwrap();
        assert!(dev <= tol, "{name}: {dev}");
    }
}

/// With `eta = 1` and a linear inner law whose slowest pole is `lambda`,
/// `x_n` decays like `(T_c - t)^(lambda / alpha - (n - 1))` near the deadline.
#[test]
fn tail_decay_rate_near_singular_deadline() {
    let exp = build("ex1");
    let traj = exp.dense_run(&[50.0, 50.0, 50.0]).unwrap();
    let t_c = 10.0;
    let norm_at = |gap: f64| {
        let x = traj.interpolate(t_c - gap).unwrap();
        x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let (g1, g2) = (1e-1, 1e-3);
    let rate = (norm_at(g1) / norm_at(g2)).ln() / (g1 / g2).ln();
    assert!((rate - 1.5).abs() < 0.05, "rate {rate}");
}
