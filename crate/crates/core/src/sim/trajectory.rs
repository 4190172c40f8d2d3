//! Recorded solutions and settling detection.

use std::io::Write;

use crate::error::{Error, Result};

use super::ode::{Aux, Sink};

/// Settling threshold on the infinity norm and how long it must hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettlingCriterion {
    pub epsilon_settle: f64,
    pub hold_duration: f64,
}

impl SettlingCriterion {
    pub fn new(epsilon_settle: f64, hold_duration: f64) -> Result<Self> {
        if !(epsilon_settle > 0.0 && hold_duration > 0.0) {
            return Err(Error::InvalidParameter(
                "settling threshold and hold duration must be positive".into(),
            ));
        }
        Ok(Self {
            epsilon_settle,
            hold_duration,
        })
    }

    /// `1e-6` absolute, held for `0.01 T_c`.
    pub fn for_deadline(t_c: f64) -> Self {
        Self {
            epsilon_settle: 1e-6,
            hold_duration: 0.01 * t_c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Physical time `t`, state `x`.
    Physical,
    /// Stretched time `tau`, state `y`.
    Stretched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Start of the frozen-gain window; `activated` when the state had not
    /// settled by then.
    Guard { activated: bool },
    /// The controller switch at `t0 + T_c`.
    Switch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    /// Index of the sample at `t`.
    pub index: usize,
    pub kind: EventKind,
    /// Left limits at the event; the sample itself carries the right limits.
    pub u_left: f64,
    pub kappa_left: f64,
    pub slope_left: Vec<f64>,
}

/// A recorded solution. Samples are stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    domain: Domain,
    n: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    slopes: Vec<f64>,
    controls: Vec<f64>,
    kappas: Vec<f64>,
    pub events: Vec<Event>,
    pub t0: f64,
    pub settled_at: Option<f64>,
    pub settled: bool,
    pub switch_time: Option<f64>,
    pub guard_start: Option<f64>,
    pub guard_activated: bool,
    pub max_kappa_observed: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub forced_steps: usize,
    pub criterion: SettlingCriterion,
}

impl Trajectory {
    pub(crate) fn new(domain: Domain, n: usize, t0: f64, criterion: SettlingCriterion) -> Self {
        Self {
            domain,
            n,
            times: Vec::new(),
            states: Vec::new(),
            slopes: Vec::new(),
            controls: Vec::new(),
            kappas: Vec::new(),
            events: Vec::new(),
            t0,
            settled_at: None,
            settled: false,
            switch_time: None,
            guard_start: None,
            guard_activated: false,
            max_kappa_observed: 0.0,
            accepted_steps: 0,
            rejected_steps: 0,
            forced_steps: 0,
            criterion,
        }
    }

    /// Builds a record from explicit samples; slopes are taken by finite
    /// differences. Settling is evaluated with `criterion`.
    pub fn from_samples(
        domain: Domain,
        samples: &[(f64, Vec<f64>)],
        criterion: SettlingCriterion,
    ) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty sample list".into()))?;
        let n = first.1.len();
        let mut traj = Self::new(domain, n, first.0, criterion);
        for (i, (t, x)) in samples.iter().enumerate() {
            if x.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: x.len(),
                });
            }
            if i > 0 && !(*t > samples[i - 1].0) {
                return Err(Error::InvalidParameter("sample times must increase strictly".into()));
            }
            let j = if i + 1 < samples.len() { i + 1 } else { i.saturating_sub(1) };
            let dt = samples[j].0 - t;
            let slope: Vec<f64> = if j == i {
                vec![0.0; n]
            } else {
                (0..n).map(|k| (samples[j].1[k] - x[k]) / dt).collect()
            };
            traj.push(*t, x, &slope, 0.0, 1.0);
        }
        traj.settled_at = estimate_settling(&traj, &criterion);
        traj.settled = traj.settled_at.is_some();
        Ok(traj)
    }

    pub(crate) fn push(&mut self, t: f64, x: &[f64], slope: &[f64], u: f64, kappa: f64) {
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.slopes.extend_from_slice(slope);
        self.controls.push(u);
        self.kappas.push(kappa);
    }

    pub(crate) fn overwrite_last(&mut self, slope: &[f64], u: f64, kappa: f64) {
        let i = self.len() - 1;
        self.slopes[i * self.n..(i + 1) * self.n].copy_from_slice(slope);
        self.controls[i] = u;
        self.kappas[i] = kappa;
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn controls(&self) -> &[f64] {
        &self.controls
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }

    pub fn t(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.n..(i + 1) * self.n]
    }

    /// Right-hand side at sample `i`, valid on the interval starting there.
    pub fn slope(&self, i: usize) -> &[f64] {
        &self.slopes[i * self.n..(i + 1) * self.n]
    }

    /// Right-hand side at sample `i` as seen from the interval ending there.
    pub fn slope_left(&self, i: usize) -> &[f64] {
        match self.events.iter().find(|e| e.index == i) {
            Some(e) => &e.slope_left,
            None => self.slope(i),
        }
    }

    pub fn norm_inf(&self, i: usize) -> f64 {
        self.state(i).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn peak_abs_control(&self) -> f64 {
        self.controls.iter().fold(0.0, |m, u| m.max(u.abs()))
    }

    /// Largest infinity norm over samples with `t` in `[a, b]`.
    pub fn max_norm_between(&self, a: f64, b: f64) -> f64 {
        let lo = self.times.partition_point(|&t| t < a);
        let hi = self.times.partition_point(|&t| t <= b);
        (lo..hi).map(|i| self.norm_inf(i)).fold(0.0, f64::max)
    }

    /// Cubic Hermite interpolation of the state.
    pub fn interpolate(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.interpolate_into(t, &mut out)?;
        Ok(out)
    }

    pub fn interpolate_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let len = self.len();
        if len == 0 || !(t >= self.times[0] && t <= self.times[len - 1]) {
            return Err(Error::Domain(format!("interpolation at {t} outside the record")));
        }
        let j = self.times.partition_point(|&s| s <= t);
        if j == len {
            out.copy_from_slice(self.state(len - 1));
            return Ok(());
        }
        let k = j - 1;
        let (ta, tb) = (self.times[k], self.times[j]);
        let h = tb - ta;
        let s = (t - ta) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (xa, xb) = (self.state(k), self.state(j));
        let (da, db) = (self.slope(k), self.slope_left(j));
        for i in 0..self.n {
            out[i] = h00 * xa[i] + h10 * h * da[i] + h01 * xb[i] + h11 * h * db[i];
        }
        Ok(())
    }

    /// Writes `t,x1,...,xn,u,kappa` (or `tau,y1,...,yn,v,kappa`) with 17
    /// significant digits. Events add a row holding the left limits just
    /// before the sample at the same time.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let (tn, xn, un) = match self.domain {
            Domain::Physical => ("t", "x", "u"),
            Domain::Stretched => ("tau", "y", "v"),
        };
        let mut header = String::from(tn);
        for i in 1..=self.n {
            header.push_str(&format!(",{xn}{i}"));
        }
        header.push_str(&format!(",{un},kappa\n"));
        w.write_all(header.as_bytes())?;
        let mut line = String::new();
        let mut ev = self.events.iter().peekable();
        for i in 0..self.len() {
            while let Some(e) = ev.peek() {
                if e.index != i {
                    break;
                }
                if e.kind == EventKind::Switch {
                    write_row(&mut line, self.times[i], self.state(i), e.u_left, e.kappa_left);
                    w.write_all(line.as_bytes())?;
                }
                ev.next();
            }
            write_row(&mut line, self.times[i], self.state(i), self.controls[i], self.kappas[i]);
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

fn write_row(line: &mut String, t: f64, x: &[f64], u: f64, kappa: f64) {
    use std::fmt::Write as _;
    line.clear();
    let _ = write!(line, "{t:.16e}");
    for v in x {
        let _ = write!(line, ",{v:.16e}");
    }
    let _ = writeln!(line, ",{u:.16e},{kappa:.16e}");
}

/// First time after which `||x||_inf <= epsilon` holds through the end of the
/// record, provided the record extends at least `hold_duration` past it.
pub fn estimate_settling(traj: &Trajectory, criterion: &SettlingCriterion) -> Option<f64> {
    if traj.is_empty() {
        return None;
    }
    let mut candidate = None;
    for i in 0..traj.len() {
        if traj.norm_inf(i) > criterion.epsilon_settle {
            candidate = None;
        } else if candidate.is_none() {
            candidate = Some(traj.t(i));
        }
    }
    candidate.filter(|&c| traj.last_time() - c >= criterion.hold_duration)
}

/// Collects accepted steps into a [`Trajectory`], tracking settling on every
/// step even when only every `record_every`-th step is stored.
pub(crate) struct Recorder {
    pub traj: Trajectory,
    record_every: usize,
    counter: usize,
    candidate: Option<f64>,
    last_t: f64,
}

impl Recorder {
    pub fn new(traj: Trajectory, record_every: usize) -> Self {
        Self {
            last_t: traj.t0,
            traj,
            record_every: record_every.max(1),
            counter: 0,
            candidate: None,
        }
    }

    fn observe(&mut self, t: f64, x: &[f64], kappa: f64) {
        let norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm > self.traj.criterion.epsilon_settle {
            self.candidate = None;
        } else if self.candidate.is_none() {
            self.candidate = Some(t);
        }
        if kappa > self.traj.max_kappa_observed {
            self.traj.max_kappa_observed = kappa;
        }
        self.last_t = t;
    }

    pub fn start(&mut self, t: f64, x: &[f64], slope: &[f64], aux: Aux) {
        self.observe(t, x, aux.1);
        self.traj.push(t, x, slope, aux.0, aux.1);
    }

    pub fn finish(mut self) -> Trajectory {
        let hold = self.traj.criterion.hold_duration;
        self.traj.settled_at = self.candidate.filter(|&c| self.last_t - c >= hold);
        self.traj.settled = self.traj.settled_at.is_some();
        self.traj
    }

    pub fn currently_settled(&self) -> bool {
        self.candidate.is_some()
    }
}

impl Sink for Recorder {
    fn accept(&mut self, t: f64, x: &[f64], slope: &[f64], aux: Aux, segment_end: bool) {
        self.observe(t, x, aux.1);
        self.counter += 1;
        if segment_end || self.counter % self.record_every == 0 {
            self.traj.push(t, x, slope, aux.0, aux.1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crit() -> SettlingCriterion {
        SettlingCriterion::new(1e-6, 0.5).unwrap()
    }

    #[test]
    fn zero_trajectory_settles_at_start() {
        let samples: Vec<_> = (0..11).map(|i| (i as f64 * 0.1, vec![0.0, 0.0])).collect();
        let traj = Trajectory::from_samples(Domain::Physical, &samples, crit()).unwrap();
        assert_eq!(estimate_settling(&traj, &crit()), Some(0.0));
        assert!(traj.settled);
    }

    #[test]
    fn re_excursion_moves_settling_to_later_entry() {
        let vals = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let samples: Vec<_> = vals.iter().enumerate().map(|(i, v)| (i as f64 * 0.1, vec![*v])).collect();
        let traj = Trajectory::from_samples(Domain::Physical, &samples, crit()).unwrap();
        assert_eq!(estimate_settling(&traj, &crit()), Some(0.4));
    }

    #[test]
    fn short_tail_is_not_settled() {
        let vals = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let samples: Vec<_> = vals.iter().enumerate().map(|(i, v)| (i as f64 * 0.1, vec![*v])).collect();
        let traj = Trajectory::from_samples(Domain::Physical, &samples, crit()).unwrap();
        assert_eq!(estimate_settling(&traj, &crit()), None);
    }

    #[test]
    fn hermite_reproduces_cubics() {
        // x(t) = t^3 - t, x' = 3 t^2 - 1
        let mut traj = Trajectory::new(Domain::Physical, 1, 0.0, crit());
        for i in 0..5 {
            let t = i as f64 * 0.7;
            traj.push(t, &[t * t * t - t], &[3.0 * t * t - 1.0], 0.0, 1.0);
        }
        for t in [0.1, 0.69, 1.3, 2.0, 2.8] {
            let x = traj.interpolate(t).unwrap()[0];
            assert!((x - (t * t * t - t)).abs() < 1e-12);
        }
        assert!(traj.interpolate(3.0).is_err());
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let mut traj = Trajectory::new(Domain::Physical, 2, 0.0, crit());
        traj.push(0.0, &[0.1, 0.0], &[0.0, 0.0], -1.0 / 3.0, 1.0);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,u,kappa");
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row, vec![0.0, 0.1, 0.0, -1.0 / 3.0, 1.0]);
    }
}
