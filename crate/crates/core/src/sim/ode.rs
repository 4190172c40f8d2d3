//! Explicit Runge-Kutta steppers: classical RK4 on a uniform mesh and the
//! Dormand-Prince 5(4) pair with PI step-size control.

use crate::error::{Error, Result};

/// Auxiliary outputs of one right-hand-side evaluation: `(u, kappa)`.
pub(crate) type Aux = (f64, f64);

/// Integration scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rk4Fixed {
        step: f64,
    },
    Rk45Adaptive {
        rtol: f64,
        atol: f64,
        h_min: f64,
        h_max: f64,
    },
}

impl Method {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Method::Rk4Fixed { step } => {
                if !(step > 0.0 && step.is_finite()) {
                    return Err(Error::InvalidParameter(format!("rk4 step must be positive, got {step}")));
                }
            }
            Method::Rk45Adaptive {
                rtol,
                atol,
                h_min,
                h_max,
            } => {
                if !(rtol > 0.0 && atol > 0.0) {
                    return Err(Error::InvalidParameter("rtol and atol must be positive".into()));
                }
                if !(h_min > 0.0 && h_min <= h_max) {
                    return Err(Error::InvalidParameter(format!(
                        "need 0 < h_min <= h_max, got h_min = {h_min}, h_max = {h_max}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Receives accepted steps.
pub(crate) trait Sink {
    fn accept(&mut self, t: f64, x: &[f64], slope: &[f64], aux: Aux, segment_end: bool);
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub forced: usize,
}

/// State carried across a segment: current point, its slope and aux values.
pub(crate) struct Cursor {
    pub t: f64,
    pub x: Vec<f64>,
    pub slope: Vec<f64>,
    pub aux: Aux,
}

pub(crate) struct SegmentOptions {
    pub method: Method,
    /// Accept steps at the minimum step size instead of failing.
    pub allow_forced: bool,
    pub max_steps: usize,
}

/// Integrates from `cursor.t` to exactly `t_end`. `cursor.slope` and
/// `cursor.aux` must hold the right-hand side at the starting point.
pub(crate) fn integrate_segment<F, S>(
    f: &mut F,
    sink: &mut S,
    cursor: &mut Cursor,
    t_end: f64,
    opts: &SegmentOptions,
    stats: &mut StepStats,
) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<Aux>,
    S: Sink,
{
    if !(t_end > cursor.t) {
        return Ok(());
    }
    match opts.method {
        Method::Rk4Fixed { step } => rk4_segment(f, sink, cursor, t_end, step, stats, opts.max_steps),
        Method::Rk45Adaptive { .. } => dopri_segment(f, sink, cursor, t_end, opts, stats),
    }
}

fn rk4_segment<F, S>(
    f: &mut F,
    sink: &mut S,
    cur: &mut Cursor,
    t_end: f64,
    step: f64,
    stats: &mut StepStats,
    max_steps: usize,
) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<Aux>,
    S: Sink,
{
    let n = cur.x.len();
    let t_start = cur.t;
    let len = t_end - t_start;
    let steps = ((len / step) - 1e-9).ceil().max(1.0) as usize;
    if stats.accepted + steps > max_steps {
        return Err(Error::StepLimit {
            t: cur.t,
            steps: max_steps,
        });
    }
    let h = len / steps as f64;
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for i in 1..=steps {
        let t = cur.t;
        for j in 0..n {
            tmp[j] = cur.x[j] + 0.5 * h * cur.slope[j];
        }
        f(t + 0.5 * h, &tmp, &mut k2)?;
        for j in 0..n {
            tmp[j] = cur.x[j] + 0.5 * h * k2[j];
        }
        f(t + 0.5 * h, &tmp, &mut k3)?;
        for j in 0..n {
            tmp[j] = cur.x[j] + h * k3[j];
        }
        f(t + h, &tmp, &mut k4)?;
        for j in 0..n {
            cur.x[j] += h / 6.0 * (cur.slope[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t_new = if i == steps { t_end } else { t_start + i as f64 * h };
        if cur.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t_new });
        }
        cur.t = t_new;
        cur.aux = f(t_new, &cur.x, &mut cur.slope)?;
        stats.accepted += 1;
        sink.accept(cur.t, &cur.x, &cur.slope, cur.aux, i == steps);
    }
    Ok(())
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Stages {
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    k5: Vec<f64>,
    k6: Vec<f64>,
    k7: Vec<f64>,
    tmp: Vec<f64>,
    x_new: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        let z = || vec![0.0; n];
        Self {
            k2: z(),
            k3: z(),
            k4: z(),
            k5: z(),
            k6: z(),
            k7: z(),
            tmp: z(),
            x_new: z(),
        }
    }
}

/// Weighted RMS norm with weights `atol + rtol * max(|a|, |b|)`.
#[inline]
fn wrms(v: &[f64], a: &[f64], b: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = v.len();
    let sum: f64 = (0..n)
        .map(|i| {
            let sc = atol + rtol * a[i].abs().max(b[i].abs());
            let r = v[i] / sc;
            r * r
        })
        .sum();
    (sum / n as f64).sqrt()
}

/// One Dormand-Prince step of size `h`. Returns the error norm, or `None` if a
/// stage produced a non-finite value. On success `st.x_new` and `st.k7` hold
/// the new state and its slope, and the aux values at the new point are
/// returned alongside.
fn dopri_step<F>(
    f: &mut F,
    cur: &Cursor,
    h: f64,
    t_new: f64,
    st: &mut Stages,
    rtol: f64,
    atol: f64,
) -> Result<Option<(f64, Aux)>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<Aux>,
{
    let n = cur.x.len();
    let t = cur.t;
    let x = &cur.x;
    let k1 = &cur.slope;
    macro_rules! stage {
        ($out:expr, $tc:expr, $($k:expr, $a:expr),+) => {{
            for j in 0..n {
                st.tmp[j] = x[j] + h * (0.0 $(+ $a * $k[j])+);
            }
            match f($tc, &st.tmp, &mut $out) {
                Ok(aux) => aux,
                Err(Error::NonFinite { .. }) => return Ok(None),
                Err(e) => return Err(e),
            }
        }};
    }
    stage!(st.k2, t + C2 * h, k1, A21);
    stage!(st.k3, t + C3 * h, k1, A31, st.k2, A32);
    stage!(st.k4, t + C4 * h, k1, A41, st.k2, A42, st.k3, A43);
    stage!(st.k5, t + C5 * h, k1, A51, st.k2, A52, st.k3, A53, st.k4, A54);
    stage!(st.k6, t + h, k1, A61, st.k2, A62, st.k3, A63, st.k4, A64, st.k5, A65);
    for j in 0..n {
        st.x_new[j] = x[j]
            + h * (A71 * k1[j] + A73 * st.k3[j] + A74 * st.k4[j] + A75 * st.k5[j] + A76 * st.k6[j]);
    }
    if st.x_new.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    let aux = match f(t_new, &st.x_new, &mut st.k7) {
        Ok(aux) => aux,
        Err(Error::NonFinite { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    for j in 0..n {
        st.tmp[j] = h
            * (E1 * k1[j] + E3 * st.k3[j] + E4 * st.k4[j] + E5 * st.k5[j] + E6 * st.k6[j] + E7 * st.k7[j]);
    }
    let err = wrms(&st.tmp, x, &st.x_new, rtol, atol);
    if !err.is_finite() {
        return Ok(None);
    }
    Ok(Some((err, aux)))
}

/// Starting step estimate from the local scale of the solution and its slope.
fn initial_step<F>(f: &mut F, cur: &Cursor, rtol: f64, atol: f64, span: f64, h_max: f64) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<Aux>,
{
    let n = cur.x.len();
    let zeros = vec![0.0; n];
    let d0 = wrms(&cur.x, &cur.x, &zeros, rtol, atol);
    let d1 = wrms(&cur.slope, &cur.x, &zeros, rtol, atol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span).min(h_max);
    let x1: Vec<f64> = (0..n).map(|j| cur.x[j] + h0 * cur.slope[j]).collect();
    let mut f1 = vec![0.0; n];
    let h1 = match f(cur.t + h0, &x1, &mut f1) {
        Ok(_) => {
            let diff: Vec<f64> = (0..n).map(|j| f1[j] - cur.slope[j]).collect();
            let d2 = wrms(&diff, &cur.x, &zeros, rtol, atol) / h0;
            let m = d1.max(d2);
            if m <= 1e-15 {
                (h0 * 1e-3).max(1e-6 * span)
            } else {
                (0.01 / m).powf(0.2)
            }
        }
        Err(_) => h0 * 1e-3,
    };
    (100.0 * h0).min(h1).min(span).min(h_max)
}

fn dopri_segment<F, S>(
    f: &mut F,
    sink: &mut S,
    cur: &mut Cursor,
    t_end: f64,
    opts: &SegmentOptions,
    stats: &mut StepStats,
) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<Aux>,
    S: Sink,
{
    let Method::Rk45Adaptive {
        rtol,
        atol,
        h_min,
        h_max,
    } = opts.method
    else {
        unreachable!()
    };
    const SAFETY: f64 = 0.9;
    const BETA: f64 = 0.04;
    const EXPO: f64 = 0.2 - 0.75 * BETA;
    const FAC_MIN: f64 = 0.2;
    const FAC_MAX: f64 = 10.0;

    let n = cur.x.len();
    let mut st = Stages::new(n);
    let mut h = initial_step(f, cur, rtol, atol, t_end - cur.t, h_max);
    let mut err_old: f64 = 1e-4;
    let mut reject_streak = false;
    while cur.t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepLimit {
                t: cur.t,
                steps: opts.max_steps,
            });
        }
        // Keep h resolvable against t.
        let h_floor = h_min.max(16.0 * f64::EPSILON * cur.t.abs().max(1.0));
        let remaining = t_end - cur.t;
        let mut last = false;
        if h >= remaining * (1.0 - 1e-9) || remaining <= h_floor {
            h = remaining;
            last = true;
        }
        let t_new = if last { t_end } else { cur.t + h };
        let outcome = dopri_step(f, cur, h, t_new, &mut st, rtol, atol)?;
        let at_floor = h <= h_floor * (1.0 + 1e-12);
        match outcome {
            Some((err, aux)) if err <= 1.0 || (opts.allow_forced && at_floor) => {
                if err > 1.0 {
                    stats.forced += 1;
                }
                stats.accepted += 1;
                cur.t = t_new;
                std::mem::swap(&mut cur.x, &mut st.x_new);
                std::mem::swap(&mut cur.slope, &mut st.k7);
                cur.aux = aux;
                sink.accept(cur.t, &cur.x, &cur.slope, aux, last);
                let e = err.max(1e-10);
                let mut fac = SAFETY * e.powf(-EXPO) * err_old.powf(BETA);
                fac = fac.clamp(FAC_MIN, FAC_MAX);
                if reject_streak {
                    fac = fac.min(1.0);
                }
                err_old = e;
                reject_streak = false;
                h = (h * fac).min(h_max).max(h_floor);
            }
            other => {
                stats.rejected += 1;
                reject_streak = true;
                let fac = match other {
                    Some((err, _)) => (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0),
                    None => 0.25,
                };
                let next = h * fac;
                if next < h_floor {
                    if opts.allow_forced && !at_floor {
                        h = h_floor;
                        continue;
                    }
                    return Err(match other {
                        None => Error::NonFinite { t: cur.t },
                        Some(_) => Error::StepSizeUnderflow { t: cur.t, h: next },
                    });
                }
                h = next;
            }
        }
    }
    Ok(())
}
