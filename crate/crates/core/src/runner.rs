//! Batch execution: simulation, verification and side-by-side comparison of
//! experiments over their initial-condition sets.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use crate::config::Experiment;
use crate::controllers::{Controller, InnerLaw, PiecewiseController};
use crate::error::{Error, Result};
use crate::sim::{self, Method, SettlingCriterion, Trajectory};
use crate::timebase::TimeBaseGain;
use crate::verify::{self, CheckResult, VerificationReport};

const STRETCHED_ATOL_FACTOR: f64 = 1e-12;

/// Runs `work(0..count)` on up to `jobs` threads. Results are handed to
/// `collect` on the calling thread, in completion order.
pub fn parallel_map<T, F, C>(count: usize, jobs: usize, work: F, mut collect: C)
where
    T: Send,
    F: Fn(usize) -> T + Sync,
    C: FnMut(usize, T),
{
    let jobs = jobs.clamp(1, count.max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    thread::scope(|s| {
        for _ in 0..jobs {
            let tx = tx.clone();
            let (next, work) = (&next, &work);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count || tx.send((i, work(i))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, v) in rx {
            collect(i, v);
        }
    });
}

#[derive(Debug)]
pub struct RunOutcome {
    pub index: usize,
    pub x0: Vec<f64>,
    pub result: Result<Trajectory>,
    pub elapsed: Duration,
}

impl Experiment {
    pub fn simulate(&self, x0: &[f64]) -> Result<Trajectory> {
        sim::simulate_t_domain(
            &self.plant,
            &self.controller,
            x0,
            self.t0,
            self.t_end,
            &self.settings,
            &self.criterion,
        )
    }

    /// Simulates every initial condition; `collect` sees outcomes as they finish.
    pub fn simulate_all(&self, jobs: usize, mut collect: impl FnMut(RunOutcome)) {
        let ics = &self.initial_conditions;
        parallel_map(
            ics.len(),
            jobs,
            |i| {
                let start = Instant::now();
                let result = self.simulate(&ics[i]);
                (result, start.elapsed())
            },
            |i, (result, elapsed)| {
                collect(RunOutcome {
                    index: i,
                    x0: ics[i].clone(),
                    result,
                    elapsed,
                })
            },
        );
    }

    /// Checks that depend only on the design.
    pub fn design_checks(&self) -> VerificationReport {
        let mut report = VerificationReport::default();
        if let Controller::Piecewise(c) = &self.controller {
            if let InnerLaw::Linear(law) = c.inner() {
                report.push(verify::check_eigenvalue_condition(
                    law.roots(),
                    c.gain().alpha(),
                    c.order(),
                ));
            }
        }
        report
    }

    pub fn equivalence_tolerance(&self, x0: &[f64]) -> f64 {
        let base = self.verify.equivalence_tolerance.unwrap_or(if self.controller.is_discontinuous() {
            1e-3
        } else {
            1e-4
        });
        base * x0.iter().fold(1.0f64, |m, v| m.max(v.abs()))
    }

    /// Physical-time run recording every accepted step.
    pub fn dense_run(&self, x0: &[f64]) -> Result<Trajectory> {
        // Interpolating a decimated record across boundary-layer kinks is too
        // coarse for the equivalence oracle.
        let mut dense = self.settings;
        dense.record_every = 1;
        sim::simulate_t_domain(&self.plant, &self.controller, x0, self.t0, self.t_end, &dense, &self.criterion)
    }

    fn piecewise(&self) -> Result<&PiecewiseController> {
        match &self.controller {
            Controller::Piecewise(c) => Ok(c),
            Controller::Autonomous { .. } => Err(Error::Mismatch(
                "stretched-time runs need a piecewise controller".into(),
            )),
        }
    }

    /// Stretched-time run from `y0 = Omega(0)^-1 x0`, long enough for the
    /// equivalence overlap and `depth` decades of the scaled-state check.
    pub fn stretched_run(&self, x0: &[f64], depth: u32) -> Result<Trajectory> {
        let c = self.piecewise()?;
        let gain = c.gain();
        let tau_end = self.stretched_horizon(gain, depth)?;
        let y0 = gain.omega(c.order(), gain.t0())?.apply_inverse(x0);
        let criterion = SettlingCriterion::new(self.criterion.epsilon_settle, 0.01 * tau_end)?;
        sim::simulate_auxiliary(&self.plant, c, &y0, tau_end, &self.stretched_settings(), &criterion)
    }

    /// Largest deviation between the physical run and the mapped
    /// stretched-time run.
    pub fn equivalence_deviation(&self, x0: &[f64]) -> Result<f64> {
        let c = self.piecewise()?;
        let traj = self.dense_run(x0)?;
        let tau_traj = self.stretched_run(x0, 0)?;
        sim::equivalence_check(&traj, &tau_traj, c.gain(), c.order())
    }

    /// Full check suite for one initial condition; the physical trajectory is
    /// returned alongside. Errors are simulation failures.
    pub fn verify_initial_condition(&self, index: usize, x0: &[f64]) -> Result<(VerificationReport, Trajectory)> {
        let traj = self.dense_run(x0)?;
        let tag = |c: CheckResult| {
            let name = format!("{}[{index}]", c.name);
            c.named(name)
        };
        let mut report = VerificationReport::default();
        report.push(tag(verify::check_ubst(&traj, self.deadline)));
        report.absorb_flags(&traj);
        let Controller::Piecewise(c) = &self.controller else {
            return Ok((report, traj));
        };
        let gain = c.gain();
        let n = c.order();
        report.push(tag(verify::check_gain_bound(&traj, gain)));
        if gain.is_singular() {
            let window = self
                .verify
                .exact_convergence_window
                .unwrap_or(10.0 * self.settings.guard_epsilon);
            report.push(tag(verify::check_exact_convergence(&traj, gain.t_c(), window)));
        }
        let depth = self.verify.scaled_state_depth.unwrap_or(8);
        let tau_traj = self.stretched_run(x0, depth)?;
        report.absorb_flags(&tau_traj);
        report.push(tag(verify::check_scaled_states_vanish(&tau_traj, gain, n, depth)));
        if self.verify.equivalence.unwrap_or(true) {
            let deviation = sim::equivalence_check(&traj, &tau_traj, gain, n)?;
            report.push(tag(verify::check_equivalence(deviation, self.equivalence_tolerance(x0))));
        }
        Ok((report, traj))
    }

    /// The map back to physical coordinates multiplies `y_i` by
    /// `kappa^(i-1)`, so absolute error on `y` must shrink accordingly.
    fn stretched_settings(&self) -> sim::IntegratorSettings {
        let mut s = self.settings;
        if let Method::Rk45Adaptive { atol, .. } = &mut s.method {
            *atol *= STRETCHED_ATOL_FACTOR;
        }
        s
    }

    fn stretched_horizon(&self, gain: &TimeBaseGain, depth: u32) -> Result<f64> {
        let guard = sim::tau_horizon(gain, self.settings.guard_epsilon)?;
        if !gain.is_singular() {
            return Ok(1.05 * guard);
        }
        if depth == 0 {
            return Ok(guard);
        }
        let deepest = gain.phi(gain.t0() + gain.t_c() * (1.0 - 10f64.powi(-(depth as i32))))?;
        Ok(guard.max(deepest))
    }

    /// Design checks plus every per-run check. Simulation failures are
    /// collected separately.
    pub fn verify_all(&self, jobs: usize) -> (VerificationReport, Vec<(usize, Error)>) {
        let mut report = self.design_checks();
        let mut per_run: Vec<Option<VerificationReport>> = vec![None; self.initial_conditions.len()];
        let mut failures = Vec::new();
        let ics = &self.initial_conditions;
        parallel_map(
            ics.len(),
            jobs,
            |i| self.verify_initial_condition(i, &ics[i]).map(|(r, _)| r),
            |i, r| match r {
                Ok(r) => per_run[i] = Some(r),
                Err(e) => failures.push((i, e)),
            },
        );
        for r in per_run.into_iter().flatten() {
            report.extend(r);
        }
        failures.sort_by_key(|(i, _)| *i);
        (report, failures)
    }
}

/// Per-run figures reported by `compare`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub settling: Option<f64>,
    pub peak_control: f64,
    pub failure: Option<String>,
}

impl RunSummary {
    pub fn from_result(result: &Result<Trajectory>) -> Self {
        match result {
            Ok(t) => Self {
                settling: t.settled_at.map(|s| s - t.t0),
                peak_control: t.peak_abs_control(),
                failure: None,
            },
            Err(e) => Self {
                settling: None,
                peak_control: f64::NAN,
                failure: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub names: [String; 2],
    /// Declared settling bounds of the two designs.
    pub bounds: [f64; 2],
    pub initial_conditions: Vec<Vec<f64>>,
    pub rows: Vec<[RunSummary; 2]>,
}

/// Runs both experiments on the first one's initial conditions.
pub fn compare(a: &Experiment, b: &Experiment, jobs: usize) -> Result<Comparison> {
    if a.plant.order() != b.plant.order() {
        return Err(Error::Mismatch(format!(
            "plant orders differ: {} vs {}",
            a.plant.order(),
            b.plant.order()
        )));
    }
    let ics = a.initial_conditions.clone();
    let m = ics.len();
    let mut slots: Vec<Option<RunSummary>> = vec![None; 2 * m];
    parallel_map(
        2 * m,
        jobs,
        |k| {
            let exp = if k < m { a } else { b };
            RunSummary::from_result(&exp.simulate(&ics[k % m]))
        },
        |k, s| slots[k] = Some(s),
    );
    let mut it = slots.into_iter().map(|s| s.expect("every run reports"));
    let first: Vec<_> = it.by_ref().take(m).collect();
    let rows = first.into_iter().zip(it).map(|(x, y)| [x, y]).collect();
    Ok(Comparison {
        names: [a.name.clone(), b.name.clone()],
        bounds: [a.deadline, b.deadline],
        initial_conditions: ics,
        rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

impl Comparison {
    /// `bound_a / bound_b`.
    pub fn tightness_ratio(&self) -> f64 {
        self.bounds[0] / self.bounds[1]
    }

    pub fn margin(&self, row: usize, side: usize) -> Option<f64> {
        self.rows[row][side].settling.map(|s| self.bounds[side] - s)
    }

    pub fn all_within_bounds(&self) -> bool {
        (0..self.rows.len()).all(|r| (0..2).all(|s| self.margin(r, s).is_some_and(|m| m >= 0.0)))
    }

    pub fn render_text(&self) -> String {
        let [na, nb] = &self.names;
        let mut out = format!(
            "{na}: bound {:.6}   {nb}: bound {:.6}   bound ratio {:.3}\n",
            self.bounds[0],
            self.bounds[1],
            self.tightness_ratio()
        );
        out.push_str("run  settle_a      settle_b      margin_a      margin_b      peak_u_a      peak_u_b\n");
        for (i, [a, b]) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "{i:<4} {:<13} {:<13} {:<13} {:<13} {:<13.6e} {:<13.6e}\n",
                fmt_opt(a.settling),
                fmt_opt(b.settling),
                fmt_opt(self.margin(i, 0)),
                fmt_opt(self.margin(i, 1)),
                a.peak_control,
                b.peak_control
            ));
            for (side, s) in [(na, a), (nb, b)] {
                if let Some(f) = &s.failure {
                    out.push_str(&format!("     {side}: {f}\n"));
                }
            }
        }
        out
    }

    /// One row per initial condition; empty fields for runs that never settled.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(
            w,
            "run,x0,bound_a,bound_b,settle_a,settle_b,settle_diff,margin_a,margin_b,peak_u_a,peak_u_b"
        )?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
        for (i, [a, b]) in self.rows.iter().enumerate() {
            let x0 = self.initial_conditions[i]
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect::<Vec<_>>()
                .join(";");
            let diff = a.settling.zip(b.settling).map(|(x, y)| y - x);
            writeln!(
                w,
                "{i},{x0},{:.16e},{:.16e},{},{},{},{},{},{:.16e},{:.16e}",
                self.bounds[0],
                self.bounds[1],
                opt(a.settling),
                opt(b.settling),
                opt(diff),
                opt(self.margin(i, 0)),
                opt(self.margin(i, 1)),
                a.peak_control,
                b.peak_control
            )?;
        }
        Ok(())
    }
}

/// Physical time `t = phi_inv(tau)` on `[0, tau_max]` for each `alpha`, with
/// `eta = 1`.
pub fn time_scaling_curves(alphas: &[f64], t_c: f64, tau_max: f64, points: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let gains = alphas
        .iter()
        .map(|&a| TimeBaseGain::new(a, 1.0, t_c, 0.0))
        .collect::<Result<Vec<_>>>()?;
    (0..points)
        .map(|i| {
            let tau = tau_max * i as f64 / (points - 1) as f64;
            let ts = gains.iter().map(|g| g.phi_inv(tau)).collect::<Result<Vec<_>>>()?;
            Ok((tau, ts))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ExperimentConfig, Overrides};

    #[test]
    fn parallel_map_visits_every_index_once() {
        let mut seen = vec![0; 37];
        parallel_map(37, 4, |i| i * i, |i, v| {
            assert_eq!(v, i * i);
            seen[i] += 1;
        });
        assert!(seen.iter().all(|&c| c == 1));
        parallel_map(0, 4, |i| i, |_, _| panic!("no work"));
    }

    fn small() -> Experiment {
        let text = r#"
name = "small"
t_end = 5.5
[plant]
n = 2
[controller]
kind = "piecewise"
t_c = 5.0
alpha = 1.0
[controller.inner]
kind = "linear"
gains = [7.0, 12.0]
[controller.post_switch]
kind = "linear_feedback"
gains = [1.0, 2.0]
[initial_conditions]
states = [[1.0, 0.0], [0.0, 0.0], [-2.0, 3.0]]
[integrator]
rtol = 1e-9
atol = 1e-12
guard_epsilon = 1e-9
[verify]
exact_convergence_window = 1e-2
"#;
        ExperimentConfig::from_toml(text).unwrap().build(Overrides::default()).unwrap()
    }

    #[test]
    fn identical_configs_compare_with_zero_difference() {
        let e = small();
        let c = compare(&e, &e, 3).unwrap();
        assert_eq!(c.rows.len(), 3);
        for [a, b] in &c.rows {
            assert_eq!(a, b);
        }
        assert_eq!(c.tightness_ratio(), 1.0);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for line in text.lines().skip(1) {
            assert_eq!(line.split(',').nth(6).unwrap(), "0.0000000000000000e0");
        }
    }

    #[test]
    fn verification_of_a_small_linear_design() {
        let e = small();
        let (report, failures) = e.verify_all(2);
        assert!(failures.is_empty());
        assert!(report.all_passed(), "{}", report.render_text());
        assert!(report.checks.iter().any(|c| c.name == "tau_t_equivalence[2]"));
    }

    #[test]
    fn time_scaling_curves_are_monotone_and_bounded() {
        let curves = time_scaling_curves(&[1.0, 0.2, 0.1], 10.0, 60.0, 121).unwrap();
        for k in 0..3 {
            let mut prev = -1.0;
            for (_, ts) in &curves {
                assert!(ts[k] >= prev && ts[k] <= 10.0);
                prev = ts[k];
            }
            assert!(prev > 9.97);
        }
        assert_eq!(curves[0].1, vec![0.0; 3]);
    }
}
