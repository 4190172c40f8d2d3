//! Closed-loop simulation in physical time and in stretched time, and the
//! cross-check between the two.

mod ode;
mod trajectory;

pub use ode::Method;
pub use trajectory::{estimate_settling, Domain, Event, EventKind, SettlingCriterion, Trajectory};

use crate::controllers::{Controller, Phase, PiecewiseController};
use crate::error::{check_dim, Error, Result};
use crate::plant::{auxiliary_rhs_into, pi_of_tau, ChainPlant};
use crate::timebase::TimeBaseGain;
use ode::{integrate_segment, Aux, Cursor, SegmentOptions, StepStats};
use trajectory::Recorder;

/// Solver configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub method: Method,
    /// Width of the frozen-gain window before a singular deadline, as a
    /// fraction of `T_c`.
    pub guard_epsilon: f64,
    /// Place a mesh point exactly at the switch time.
    pub switch_alignment: bool,
    /// Store every k-th accepted step (segment ends are always stored).
    pub record_every: usize,
    pub max_steps: usize,
    /// Accept steps at `h_min` instead of failing. Always on for strict-sign
    /// controllers.
    pub accept_at_min_step: bool,
}

impl IntegratorSettings {
    /// `rtol = 1e-9`, `atol = 1e-12`.
    pub fn strict() -> Self {
        Self::adaptive(1e-9, 1e-12)
    }

    /// `rtol = 1e-6`, `atol = 1e-9`.
    pub fn fast() -> Self {
        Self::adaptive(1e-6, 1e-9)
    }

    pub fn adaptive(rtol: f64, atol: f64) -> Self {
        Self {
            method: Method::Rk45Adaptive {
                rtol,
                atol,
                h_min: 1e-14,
                h_max: f64::INFINITY,
            },
            guard_epsilon: 1e-6,
            switch_alignment: true,
            record_every: 1,
            max_steps: 200_000_000,
            accept_at_min_step: false,
        }
    }

    pub fn rk4(step: f64) -> Self {
        Self {
            method: Method::Rk4Fixed { step },
            ..Self::strict()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.method.validate()?;
        if !(self.guard_epsilon > 0.0 && self.guard_epsilon < 1e-2) {
            return Err(Error::InvalidParameter(format!(
                "guard epsilon must lie in (0, 1e-2), got {}",
                self.guard_epsilon
            )));
        }
        if self.record_every == 0 || self.max_steps == 0 {
            return Err(Error::InvalidParameter("record_every and max_steps must be positive".into()));
        }
        Ok(())
    }
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self::strict()
    }
}

/// Start of the frozen-gain window, when the gain is singular.
pub fn guard_start(gain: &TimeBaseGain, guard_epsilon: f64) -> Option<f64> {
    gain.is_singular()
        .then(|| gain.t0() + gain.t_c() * (1.0 - guard_epsilon))
}

struct Segment {
    end: f64,
    phase: Option<Phase>,
    /// Event at the start of this segment.
    event: Option<EventKind>,
}

fn plan_segments(controller: &Controller, t0: f64, t_end: f64, settings: &IntegratorSettings) -> Vec<Segment> {
    let Some(gain) = controller.gain() else {
        return vec![Segment {
            end: t_end,
            phase: None,
            event: None,
        }];
    };
    let sw = gain.switch_time();
    let guard = guard_start(gain, settings.guard_epsilon);
    let align = settings.switch_alignment || gain.is_singular();
    let mut segs = Vec::new();
    let mut start_event = None;
    if let Some(g) = guard.filter(|&g| g > t0 && g < t_end) {
        segs.push(Segment {
            end: g,
            phase: Some(Phase::Transient),
            event: None,
        });
        start_event = Some(EventKind::Guard { activated: false });
    }
    if align && sw > t0 && sw < t_end {
        segs.push(Segment {
            end: sw,
            phase: Some(Phase::Transient),
            event: start_event.take(),
        });
        segs.push(Segment {
            end: t_end,
            phase: Some(Phase::PostSwitch),
            event: Some(EventKind::Switch),
        });
    } else {
        let phase = if !align {
            None
        } else if t0 >= sw {
            Some(Phase::PostSwitch)
        } else {
            Some(Phase::Transient)
        };
        segs.push(Segment {
            end: t_end,
            phase,
            event: start_event.take(),
        });
    }
    segs
}

/// Integrates the closed loop `x' = chain(x, u(t, x))` from `t0` to `t_end`.
pub fn simulate_t_domain(
    plant: &ChainPlant,
    controller: &Controller,
    x0: &[f64],
    t0: f64,
    t_end: f64,
    settings: &IntegratorSettings,
    criterion: &SettlingCriterion,
) -> Result<Trajectory> {
    settings.validate()?;
    let n = plant.order();
    check_dim(n, controller.order())?;
    check_dim(n, x0.len())?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("initial state must be finite".into()));
    }
    if !(t_end > t0) {
        return Err(Error::InvalidParameter(format!("need t_end > t0, got [{t0}, {t_end}]")));
    }
    if t0 < controller.t0() {
        return Err(Error::Mismatch(format!(
            "simulation starts at {t0}, before the controller's t0 = {}",
            controller.t0()
        )));
    }
    let guard = controller.gain().and_then(|g| guard_start(g, settings.guard_epsilon));
    let segments = plan_segments(controller, t0, t_end, settings);

    let mut traj = Trajectory::new(Domain::Physical, n, t0, *criterion);
    traj.switch_time = controller.gain().map(|g| g.switch_time());
    traj.guard_start = guard;
    let mut rec = Recorder::new(traj, settings.record_every);
    let opts = SegmentOptions {
        method: settings.method,
        allow_forced: settings.accept_at_min_step || controller.uses_strict_sign(),
        max_steps: settings.max_steps,
    };
    let mut stats = StepStats::default();
    let mut cursor = Cursor {
        t: t0,
        x: x0.to_vec(),
        slope: vec![0.0; n],
        aux: (0.0, 1.0),
    };
    for (k, seg) in segments.iter().enumerate() {
        let mut f = |t: f64, x: &[f64], dx: &mut [f64]| -> Result<Aux> {
            let c = controller.evaluate_phase(seg.phase, t, x, guard)?;
            plant.rhs_into(t, x, c.u, dx);
            Ok((c.u, c.kappa))
        };
        let mut slope = vec![0.0; n];
        let aux = f(cursor.t, &cursor.x, &mut slope)?;
        if k == 0 {
            rec.start(cursor.t, &cursor.x, &slope, aux);
        } else {
            let index = rec.traj.len() - 1;
            if let Some(kind) = seg.event {
                let kind = match kind {
                    EventKind::Guard { .. } => {
                        let activated = !rec.currently_settled();
                        rec.traj.guard_activated = activated;
                        EventKind::Guard { activated }
                    }
                    other => other,
                };
                rec.traj.events.push(Event {
                    t: cursor.t,
                    index,
                    kind,
                    u_left: cursor.aux.0,
                    kappa_left: cursor.aux.1,
                    slope_left: cursor.slope.clone(),
                });
            }
            rec.traj.overwrite_last(&slope, aux.0, aux.1);
        }
        cursor.slope = slope;
        cursor.aux = aux;
        integrate_segment(&mut f, &mut rec, &mut cursor, seg.end, &opts, &mut stats)?;
    }
    rec.traj.accepted_steps = stats.accepted;
    rec.traj.rejected_steps = stats.rejected;
    rec.traj.forced_steps = stats.forced;
    Ok(rec.finish())
}

/// Integrates the stretched-time system
/// `y' = A y + B (v(tau, y) + pi(tau))` from `tau = 0` to `tau_end`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_tau_domain<U, P>(
    n: usize,
    alpha: f64,
    upsilon: U,
    y0: &[f64],
    tau_end: f64,
    pi_source: P,
    settings: &IntegratorSettings,
    criterion: &SettlingCriterion,
) -> Result<Trajectory>
where
    U: Fn(f64, &[f64]) -> Result<f64>,
    P: Fn(f64) -> f64,
{
    settings.validate()?;
    check_dim(n, y0.len())?;
    if n == 0 {
        return Err(Error::InvalidParameter("order must be at least 1".into()));
    }
    if !(tau_end > 0.0 && tau_end.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau_end must be positive and finite, got {tau_end}")));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("initial state must be finite".into()));
    }
    let mut f = |tau: f64, y: &[f64], dy: &mut [f64]| -> Result<Aux> {
        let v = upsilon(tau, y)?;
        if !v.is_finite() {
            return Err(Error::NonFinite { t: tau });
        }
        auxiliary_rhs_into(alpha, y, v, pi_source(tau), dy);
        Ok((v, 1.0))
    };
    let mut rec = Recorder::new(Trajectory::new(Domain::Stretched, n, 0.0, *criterion), settings.record_every);
    let mut cursor = Cursor {
        t: 0.0,
        x: y0.to_vec(),
        slope: vec![0.0; n],
        aux: (0.0, 1.0),
    };
    cursor.aux = f(0.0, y0, &mut cursor.slope)?;
    rec.start(0.0, y0, &cursor.slope, cursor.aux);
    let opts = SegmentOptions {
        method: settings.method,
        allow_forced: settings.accept_at_min_step,
        max_steps: settings.max_steps,
    };
    let mut stats = StepStats::default();
    integrate_segment(&mut f, &mut rec, &mut cursor, tau_end, &opts, &mut stats)?;
    rec.traj.accepted_steps = stats.accepted;
    rec.traj.rejected_steps = stats.rejected;
    rec.traj.forced_steps = stats.forced;
    Ok(rec.finish())
}

/// The stretched-time closed loop of a piecewise controller on a plant:
/// `v` from the controller's inner law and `pi` from the plant disturbance.
pub fn simulate_auxiliary(
    plant: &ChainPlant,
    controller: &PiecewiseController,
    y0: &[f64],
    tau_end: f64,
    settings: &IntegratorSettings,
    criterion: &SettlingCriterion,
) -> Result<Trajectory> {
    let n = plant.order();
    check_dim(n, controller.order())?;
    let gain = *controller.gain();
    let delta = plant.disturbance();
    let mut s = *settings;
    s.accept_at_min_step |= controller
        .inner()
        .sign_mode()
        .is_some_and(|m| m == crate::controllers::SignMode::Strict);
    simulate_tau_domain(
        n,
        gain.alpha(),
        |tau, y| controller.upsilon(y, tau),
        y0,
        tau_end,
        |tau| pi_of_tau(&gain, n, tau, delta),
        &s,
        criterion,
    )
}

/// Stretched time at which the physical record stops being comparable: the
/// guard start for singular gains, the switch time otherwise.
pub fn tau_horizon(gain: &TimeBaseGain, guard_epsilon: f64) -> Result<f64> {
    match guard_start(gain, guard_epsilon) {
        Some(g) => gain.phi(g),
        None => Ok(gain.aux_horizon()),
    }
}

/// Maps each stretched-time sample to `(phi_inv(tau), Omega y)` and returns the
/// largest infinity-norm deviation from the physical record, interpolated
/// with cubic Hermite polynomials, over the overlap before the guard or switch.
pub fn equivalence_check(
    t_traj: &Trajectory,
    tau_traj: &Trajectory,
    gain: &TimeBaseGain,
    n: usize,
) -> Result<f64> {
    if t_traj.domain() != Domain::Physical || tau_traj.domain() != Domain::Stretched {
        return Err(Error::Mismatch("expected a physical and a stretched trajectory".into()));
    }
    check_dim(n, t_traj.order())?;
    check_dim(n, tau_traj.order())?;
    if t_traj.is_empty() || tau_traj.is_empty() {
        return Err(Error::Mismatch("empty trajectory".into()));
    }
    if t_traj.t(0) != gain.t0() {
        return Err(Error::Mismatch(format!(
            "physical record starts at {}, gain at {}",
            t_traj.t(0),
            gain.t0()
        )));
    }
    let mut limit = t_traj.last_time().min(gain.switch_time());
    if let Some(g) = t_traj.guard_start {
        limit = limit.min(g);
    }
    let mut mapped = vec![0.0; n];
    let mut interp = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for i in 0..tau_traj.len() {
        let t = gain.phi_inv(tau_traj.t(i))?;
        if t > limit {
            break;
        }
        let kappa = gain.kappa_transient(t)?;
        let y = tau_traj.state(i);
        let mut scale = 1.0;
        for j in 0..n {
            mapped[j] = scale * y[j];
            scale *= kappa;
        }
        t_traj.interpolate_into(t, &mut interp)?;
        let dev = (0..n).map(|j| (mapped[j] - interp[j]).abs()).fold(0.0, f64::max);
        if i == 0 {
            let scale = t_traj.norm_inf(0).max(1.0);
            if dev > 1e-12 * scale {
                return Err(Error::Mismatch(format!(
                    "initial conditions differ by {dev:e}: x0 must equal Omega(0) y0"
                )));
            }
        }
        worst = worst.max(dev);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{InnerLaw, LinearLaw, PostSwitchLaw};

    fn example1() -> (ChainPlant, Controller) {
        let inner = InnerLaw::Linear(LinearLaw::new(vec![21.0, 134.75, 257.25]).unwrap());
        let post = PostSwitchLaw::LinearFeedback {
            gains: vec![6.0, 11.0, 6.0],
        };
        let c = PiecewiseController::design(1.0, 10.0, 0.0, inner, post, 0.0).unwrap();
        (ChainPlant::undisturbed(3).unwrap(), Controller::Piecewise(c))
    }

    #[test]
    fn zero_initial_condition_stays_zero() {
        let (p, c) = example1();
        let crit = SettlingCriterion::for_deadline(10.0);
        let traj = simulate_t_domain(&p, &c, &[0.0; 3], 0.0, 11.0, &IntegratorSettings::strict(), &crit).unwrap();
        assert_eq!(traj.settled_at, Some(0.0));
        assert!((0..traj.len()).all(|i| traj.norm_inf(i) == 0.0));
    }

    #[test]
    fn segments_hit_guard_and_switch_exactly() {
        let (p, c) = example1();
        let crit = SettlingCriterion::for_deadline(10.0);
        let traj = simulate_t_domain(&p, &c, &[1.0; 3], 0.0, 10.5, &IntegratorSettings::strict(), &crit).unwrap();
        let g = 10.0 * (1.0 - 1e-6);
        assert!(traj.times().contains(&g));
        assert!(traj.times().contains(&10.0));
        assert_eq!(traj.last_time(), 10.5);
        assert!(traj.times().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(traj.events.len(), 2);
        assert_eq!(traj.events[1].kind, EventKind::Switch);
    }

    #[test]
    fn tau_domain_zero_stays_zero() {
        let crit = SettlingCriterion::for_deadline(10.0);
        let traj = simulate_tau_domain(
            2,
            1.0,
            |_, y| Ok(-y[0] - y[1]),
            &[0.0, 0.0],
            5.0,
            |_| 0.0,
            &IntegratorSettings::strict(),
            &crit,
        )
        .unwrap();
        assert!((0..traj.len()).all(|i| traj.norm_inf(i) == 0.0));
    }

    #[test]
    fn planned_segments_without_alignment() {
        let (_, c) = example1();
        let mut s = IntegratorSettings::strict();
        s.switch_alignment = false;
        // Singular gains always align at the switch.
        assert_eq!(plan_segments(&c, 0.0, 12.0, &s).len(), 3);
        assert_eq!(plan_segments(&c, 0.0, 5.0, &s).len(), 1);
    }
}
