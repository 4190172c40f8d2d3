//! Executable checks over trajectories and designs.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::Complex;

use crate::error::Result;
use crate::sim::{Domain, Trajectory};
use crate::timebase::TimeBaseGain;

/// Relative allowance on the gain bound.
pub const GAIN_BOUND_SLACK: f64 = 1e-8;
/// Threshold for the scaled states near the deadline.
pub const SCALED_STATE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
    Inconclusive,
}

impl CheckStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Skipped => "skipped",
            CheckStatus::Inconclusive => "inconclusive",
        }
    }
}

/// One check. `margin` is positive on the passing side.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub measured: f64,
    pub bound: f64,
    pub margin: f64,
    pub note: String,
}

impl CheckResult {
    fn new(name: &str, status: CheckStatus, measured: f64, bound: f64, margin: f64) -> Self {
        Self {
            name: name.to_string(),
            status,
            measured,
            bound,
            margin,
            note: String::new(),
        }
    }

    /// Pass iff `measured <= bound`.
    pub fn at_most(name: &str, measured: f64, bound: f64) -> Self {
        let status = if measured <= bound {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Self::new(name, status, measured, bound, bound - measured)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    /// Passed or not applicable.
    pub fn acceptable(&self) -> bool {
        matches!(self.status, CheckStatus::Pass | CheckStatus::Skipped)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub guard_activated: bool,
    pub chattering_detected: bool,
}

impl VerificationReport {
    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.checks.extend(other.checks);
        self.guard_activated |= other.guard_activated;
        self.chattering_detected |= other.chattering_detected;
    }

    /// Records the guard and chattering flags of a run.
    pub fn absorb_flags(&mut self, traj: &Trajectory) {
        self.guard_activated |= traj.guard_activated;
        self.chattering_detected |= traj.forced_steps > 0;
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(CheckResult::acceptable)
    }

    pub fn render_text(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:<12}  {:>14}  {:>14}  {:>14}",
            "check", "status", "measured", "bound", "margin"
        );
        for c in &self.checks {
            let _ = write!(
                out,
                "{:<width$}  {:<12}  {:>14.6e}  {:>14.6e}  {:>14.6e}",
                c.name,
                c.status.as_str(),
                c.measured,
                c.bound,
                c.margin
            );
            if !c.note.is_empty() {
                let _ = write!(out, "  {}", c.note);
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "flags: guard_activated={} chattering_detected={}",
            self.guard_activated, self.chattering_detected
        );
        let _ = writeln!(out, "overall: {}", if self.all_passed() { "PASS" } else { "FAIL" });
        out
    }

    /// `check,pass,measured,bound,margin`; `pass` is the status word.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "check,pass,measured,bound,margin")?;
        for c in &self.checks {
            writeln!(
                w,
                "{},{},{:.16e},{:.16e},{:.16e}",
                c.name.replace(',', ";"),
                c.status.as_str(),
                c.measured,
                c.bound,
                c.margin
            )?;
        }
        Ok(())
    }
}

/// Settling no later than `t0 + T_c`. `measured` is the settling time
/// relative to `t0`.
pub fn check_ubst(traj: &Trajectory, t_c: f64) -> CheckResult {
    let name = "ubst";
    match traj.settled_at {
        Some(s) => CheckResult::at_most(name, s - traj.t0, t_c),
        None => {
            let covered = traj.last_time() >= traj.t0 + t_c + traj.criterion.hold_duration;
            if covered {
                CheckResult::new(name, CheckStatus::Fail, f64::INFINITY, t_c, f64::NEG_INFINITY)
                    .with_note("never settled")
            } else {
                CheckResult::new(name, CheckStatus::Inconclusive, f64::NAN, t_c, f64::NAN)
                    .with_note("record ends before the criterion can hold")
            }
        }
    }
}

/// Proxy for convergence exactly at the deadline of a singular gain: the state
/// is below the settling threshold at the guard boundary, and its last
/// excursion above the threshold happens within the final `window` fraction
/// of `T_c`. `measured` is the fraction of `T_c` remaining at that excursion.
pub fn check_exact_convergence(traj: &Trajectory, t_c: f64, window: f64) -> CheckResult {
    let name = "exact_convergence";
    let Some(g) = traj.guard_start else {
        return CheckResult::new(name, CheckStatus::Skipped, f64::NAN, window, f64::NAN)
            .with_note("not a singular-gain design");
    };
    if traj.is_empty() {
        return CheckResult::new(name, CheckStatus::Inconclusive, f64::NAN, window, f64::NAN);
    }
    if traj.norm_inf(0) == 0.0 {
        return CheckResult::new(name, CheckStatus::Pass, 0.0, window, window)
            .with_note("zero initial state");
    }
    if traj.guard_activated {
        return CheckResult::new(name, CheckStatus::Inconclusive, f64::NAN, window, f64::NAN)
            .with_note("guard activated before settling");
    }
    let eps = traj.criterion.epsilon_settle;
    let deadline = traj.t0 + t_c;
    let Some(gi) = traj.times().iter().position(|&t| t == g) else {
        return CheckResult::new(name, CheckStatus::Inconclusive, f64::NAN, window, f64::NAN)
            .with_note("no sample at the guard boundary");
    };
    let at_guard = traj.norm_inf(gi);
    let last_violation = (0..=gi).rev().find(|&i| traj.norm_inf(i) > eps).map(|i| traj.t(i));
    let remaining = last_violation.map_or(1.0, |t| (deadline - t) / t_c);
    let status = if at_guard <= eps && remaining <= window {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    CheckResult::new(name, status, remaining, window, window - remaining)
        .with_note(format!("norm at guard {at_guard:.3e}"))
}

/// `max kappa <= gain_bound (1 + 1e-8)`.
pub fn check_gain_bound(traj: &Trajectory, g: &TimeBaseGain) -> CheckResult {
    let bound = g.gain_bound();
    if bound.is_infinite() {
        return CheckResult::new(
            "gain_bound",
            CheckStatus::Pass,
            traj.max_kappa_observed,
            f64::INFINITY,
            f64::INFINITY,
        )
        .with_note("eta = 1: unbounded gain by design");
    }
    let mut c = CheckResult::at_most("gain_bound", traj.max_kappa_observed, bound * (1.0 + GAIN_BOUND_SLACK));
    c.bound = bound;
    c
}

/// `min |Re lambda| / alpha > n`, strictly.
pub fn check_eigenvalue_condition(lambdas: &[Complex<f64>], alpha: f64, n: usize) -> CheckResult {
    let worst = lambdas.iter().map(|l| l.re.abs() / alpha).fold(f64::INFINITY, f64::min);
    let nf = n as f64;
    let unstable = lambdas.iter().any(|l| l.re >= 0.0);
    let status = if !unstable && worst > nf {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    CheckResult::new("eigenvalue_condition", status, worst, nf, worst - nf)
}

/// Evaluates `kappa^(i-1) y_i` on the stretched-time record at
/// `t_j = t0 + T_c (1 - 10^-j)`, `j = 1..=depth`, and passes iff every
/// component is below `1e-6` at the deepest point. Points beyond the record
/// reuse its last sample only when the record has settled there.
pub fn check_scaled_states_vanish(tau_traj: &Trajectory, gain: &TimeBaseGain, n: usize, depth: u32) -> CheckResult {
    let name = "scaled_states_vanish";
    if tau_traj.domain() != Domain::Stretched || tau_traj.order() != n || tau_traj.is_empty() {
        return CheckResult::new(name, CheckStatus::Inconclusive, f64::NAN, SCALED_STATE_TOLERANCE, f64::NAN)
            .with_note("expected a stretched-time record of matching order");
    }
    let mut last = f64::NAN;
    let mut history = Vec::new();
    let mut y = vec![0.0; n];
    for j in 1..=depth {
        let t = gain.t0() + gain.t_c() * (1.0 - 10f64.powi(-(j as i32)));
        let Ok(tau) = gain.phi(t) else { break };
        if tau <= tau_traj.last_time() {
            if tau_traj.interpolate_into(tau, &mut y).is_err() {
                break;
            }
        } else if tau_traj.settled {
            y.copy_from_slice(tau_traj.final_state());
        } else {
            return CheckResult::new(name, CheckStatus::Inconclusive, last, SCALED_STATE_TOLERANCE, f64::NAN)
                .with_note(format!("record ends before depth {j}"));
        }
        let kappa = match gain.kappa_transient(t) {
            Ok(k) => k,
            Err(_) => break,
        };
        let mut scale = 1.0;
        let mut worst: f64 = 0.0;
        for yi in &y {
            worst = worst.max((scale * yi).abs());
            scale *= kappa;
        }
        history.push(worst);
        last = worst;
    }
    let status = if last < SCALED_STATE_TOLERANCE {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    let trend = history
        .iter()
        .map(|v| format!("{v:.1e}"))
        .collect::<Vec<_>>()
        .join(" ");
    CheckResult::new(name, status, last, SCALED_STATE_TOLERANCE, SCALED_STATE_TOLERANCE - last)
        .with_note(format!("max |kappa^(i-1) y_i| by decade: {trend}"))
}

/// Deviation between the two integrations.
pub fn check_equivalence(deviation: f64, tolerance: f64) -> CheckResult {
    CheckResult::at_most("tau_t_equivalence", deviation, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SettlingCriterion;

    fn zero_traj(t_end: f64) -> Trajectory {
        let samples: Vec<_> = (0..=100).map(|i| (i as f64 * t_end / 100.0, vec![0.0, 0.0])).collect();
        Trajectory::from_samples(Domain::Physical, &samples, SettlingCriterion::for_deadline(10.0)).unwrap()
    }

    #[test]
    fn ubst_on_zero_trajectory() {
        let c = check_ubst(&zero_traj(11.0), 10.0);
        assert!(c.passed());
        assert_eq!(c.measured, 0.0);
    }

    #[test]
    fn ubst_inconclusive_and_fail() {
        let crit = SettlingCriterion::for_deadline(10.0);
        let short: Vec<_> = (0..10).map(|i| (i as f64, vec![1.0])).collect();
        let t = Trajectory::from_samples(Domain::Physical, &short, crit).unwrap();
        assert_eq!(check_ubst(&t, 10.0).status, CheckStatus::Inconclusive);
        let long: Vec<_> = (0..20).map(|i| (i as f64, vec![1.0])).collect();
        let t = Trajectory::from_samples(Domain::Physical, &long, crit).unwrap();
        assert_eq!(check_ubst(&t, 10.0).status, CheckStatus::Fail);
    }

    #[test]
    fn eigenvalue_condition_examples() {
        let ex1 = crate::poly::roots(&[21.0, 134.75, 257.25]).unwrap();
        let c = check_eigenvalue_condition(&ex1, 1.0, 3);
        assert!(c.passed());
        assert!((c.measured - 3.5).abs() < 1e-9);
        let boundary = [Complex::new(-3.0, 0.0); 3];
        assert!(!check_eigenvalue_condition(&boundary, 1.0, 3).passed());
        let axis = [Complex::new(0.0, 1.0), Complex::new(-5.0, 0.0)];
        assert!(!check_eigenvalue_condition(&axis, 1.0, 2).passed());
    }

    #[test]
    fn gain_bound_infinite_passes() {
        let g = TimeBaseGain::new(1.0, 1.0, 10.0, 0.0).unwrap();
        let c = check_gain_bound(&zero_traj(11.0), &g);
        assert!(c.passed());
        assert!(c.bound.is_infinite());
    }

    #[test]
    fn exact_convergence_skipped_without_guard() {
        let c = check_exact_convergence(&zero_traj(11.0), 10.0, 1e-5);
        assert_eq!(c.status, CheckStatus::Skipped);
        assert!(c.acceptable());
    }

    #[test]
    fn report_renders_csv() {
        let mut r = VerificationReport::default();
        r.push(CheckResult::at_most("a,b", 1.0, 2.0));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("check,pass,measured,bound,margin\n"));
        assert!(text.contains("a;b,pass,"));
        assert!(r.all_passed());
        assert!(r.render_text().contains("overall: PASS"));
    }
}
