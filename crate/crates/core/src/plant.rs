//! The perturbed integrator chain, its stretched-time counterpart and the
//! bounded disturbance library.

use std::f64::consts::PI;

use crate::error::{check_dim, Error, Result};
use crate::timebase::TimeBaseGain;

const BOUND_GRID_POINTS: usize = 100_000;
const BOUND_SLACK: f64 = 1e-12;

/// A bounded, measurable disturbance signal.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSignal {
    Zero,
    Constant(f64),
    /// `amplitude * sin(2 pi frequency t + phase)`.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// Piecewise-linear interpolation of `(t, value)` samples, holding the
    /// end values outside the table.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl DisturbanceSignal {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            DisturbanceSignal::Zero => 0.0,
            DisturbanceSignal::Constant(c) => *c,
            DisturbanceSignal::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * (2.0 * PI * frequency * t + phase).sin(),
            DisturbanceSignal::Table { times, values } => interpolate(times, values, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DisturbanceSignal::Zero => true,
            DisturbanceSignal::Constant(c) => *c == 0.0,
            DisturbanceSignal::Sinusoid { amplitude, .. } => *amplitude == 0.0,
            DisturbanceSignal::Table { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    /// Largest absolute value implied by the parameters.
    pub fn declared_sup(&self) -> f64 {
        match self {
            DisturbanceSignal::Zero => 0.0,
            DisturbanceSignal::Constant(c) => c.abs(),
            DisturbanceSignal::Sinusoid { amplitude, .. } => amplitude.abs(),
            DisturbanceSignal::Table { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    fn validate_shape(&self) -> Result<()> {
        match self {
            DisturbanceSignal::Zero => Ok(()),
            DisturbanceSignal::Constant(c) => finite("constant disturbance", *c),
            DisturbanceSignal::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                finite("amplitude", *amplitude)?;
                finite("frequency", *frequency)?;
                finite("phase", *phase)
            }
            DisturbanceSignal::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::InvalidParameter(
                        "disturbance table needs equally many (non-zero) times and values".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidParameter(
                        "disturbance table times must be strictly increasing".into(),
                    ));
                }
                for v in times.iter().chain(values) {
                    finite("disturbance table entry", *v)?;
                }
                Ok(())
            }
        }
    }

    /// The sample grid used for bound validation: `BOUND_GRID_POINTS` points
    /// over a window covering the signal's structure.
    fn validation_grid(&self) -> (f64, f64) {
        match self {
            DisturbanceSignal::Sinusoid { frequency, .. } if *frequency != 0.0 => {
                (0.0, 10.0 / frequency.abs())
            }
            DisturbanceSignal::Table { times, .. } => {
                let lo = times[0];
                let hi = *times.last().unwrap();
                let pad = (hi - lo).max(1.0) * 0.1;
                (lo - pad, hi + pad)
            }
            _ => (0.0, 1.0),
        }
    }
}

fn finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must be finite, got {v}")))
    }
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let last = times.len() - 1;
    if t <= times[0] {
        return values[0];
    }
    if t >= times[last] {
        return values[last];
    }
    let j = times.partition_point(|&s| s <= t);
    let (t0, t1) = (times[j - 1], times[j]);
    let w = (t - t0) / (t1 - t0);
    values[j - 1] + w * (values[j] - values[j - 1])
}

/// `x_i' = x_(i+1)`, `x_n' = u + delta(t)` with `|delta| <= L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPlant {
    n: usize,
    bound: f64,
    disturbance: DisturbanceSignal,
}

impl ChainPlant {
    /// Builds a plant, checking the disturbance against `bound` on a dense grid.
    pub fn new(n: usize, bound: f64, disturbance: DisturbanceSignal) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("plant order must be at least 1".into()));
        }
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "disturbance bound must be finite and non-negative, got {bound}"
            )));
        }
        disturbance.validate_shape()?;
        if disturbance.declared_sup() > bound + BOUND_SLACK {
            return Err(Error::InvalidParameter(format!(
                "disturbance magnitude {} exceeds the bound {bound}",
                disturbance.declared_sup()
            )));
        }
        let sampled = sampled_sup(&disturbance);
        if sampled > bound + BOUND_SLACK {
            return Err(Error::InvalidParameter(format!(
                "sampled disturbance magnitude {sampled} exceeds the bound {bound}"
            )));
        }
        Ok(Self {
            n,
            bound,
            disturbance,
        })
    }

    pub fn undisturbed(n: usize) -> Result<Self> {
        Self::new(n, 0.0, DisturbanceSignal::Zero)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn disturbance(&self) -> &DisturbanceSignal {
        &self.disturbance
    }

    #[inline]
    pub fn rhs_into(&self, t: f64, x: &[f64], u: f64, dx: &mut [f64]) {
        let n = self.n;
        dx[..n - 1].copy_from_slice(&x[1..n]);
        dx[n - 1] = u + self.disturbance.eval(t);
    }
}

/// Maximum of `|delta|` over the validation grid.
pub fn sampled_sup(d: &DisturbanceSignal) -> f64 {
    let (lo, hi) = d.validation_grid();
    let step = (hi - lo) / (BOUND_GRID_POINTS - 1) as f64;
    (0..BOUND_GRID_POINTS)
        .map(|i| d.eval(lo + i as f64 * step).abs())
        .fold(0.0, f64::max)
}

/// `chain_rhs(p, t, x, u)`.
pub fn chain_rhs(p: &ChainPlant, t: f64, x: &[f64], u: f64) -> Result<Vec<f64>> {
    check_dim(p.n, x.len())?;
    let mut dx = vec![0.0; p.n];
    p.rhs_into(t, x, u, &mut dx);
    Ok(dx)
}

#[inline]
pub(crate) fn auxiliary_rhs_into(alpha: f64, y: &[f64], v: f64, pi_val: f64, dy: &mut [f64]) {
    let n = y.len();
    for i in 0..n - 1 {
        dy[i] = y[i + 1] - alpha * i as f64 * y[i];
    }
    dy[n - 1] = v - alpha * (n - 1) as f64 * y[n - 1] + pi_val;
}

/// Right-hand side of the stretched-time system
/// `y_i' = y_(i+1) - alpha (i-1) y_i`, `y_n' = v - alpha (n-1) y_n + pi`.
pub fn auxiliary_rhs(n: usize, alpha: f64, _tau: f64, y: &[f64], v: f64, pi_val: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("order must be at least 1".into()));
    }
    check_dim(n, y.len())?;
    let mut dy = vec![0.0; n];
    auxiliary_rhs_into(alpha, y, v, pi_val, &mut dy);
    Ok(dy)
}

/// `pi(tau) = kappa^-n delta(t)` at `t = phi_inv(tau)`.
#[inline]
pub fn pi_of_tau(g: &TimeBaseGain, n: usize, tau: f64, delta: &DisturbanceSignal) -> f64 {
    if matches!(delta, DisturbanceSignal::Zero) {
        return 0.0;
    }
    let t = match g.phi_inv(tau) {
        Ok(t) => t,
        Err(_) => return 0.0,
    };
    g.inverse_kappa_at_tau(tau).powi(n as i32) * delta.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example3_delta() -> DisturbanceSignal {
        DisturbanceSignal::Sinusoid {
            amplitude: 1.0,
            frequency: 0.2,
            phase: 0.0,
        }
    }

    #[test]
    fn chain_rhs_examples() {
        let p = ChainPlant::undisturbed(2).unwrap();
        assert_eq!(chain_rhs(&p, 0.0, &[1.0, 2.0], 0.0).unwrap(), vec![2.0, 0.0]);
        let p3 = ChainPlant::new(3, 1.0, DisturbanceSignal::Constant(1.0)).unwrap();
        assert_eq!(chain_rhs(&p3, 0.0, &[0.0; 3], -5.0).unwrap(), vec![0.0, 0.0, -4.0]);
        let p2 = ChainPlant::new(2, 1.0, example3_delta()).unwrap();
        let dx = chain_rhs(&p2, 1.25, &[0.0, 0.0], 0.0).unwrap();
        assert_relative_eq!(dx[1], 1.0, max_relative = 1e-15);
        assert!(chain_rhs(&p2, 0.0, &[0.0; 3], 0.0).is_err());
    }

    #[test]
    fn chain_rhs_is_affine() {
        let p = ChainPlant::new(3, 0.5, DisturbanceSignal::Constant(0.5)).unwrap();
        let x = [1.0, -2.0, 3.0];
        let y = [0.5, 4.0, -1.0];
        let f = |x: &[f64], u: f64| chain_rhs(&p, 0.3, x, u).unwrap();
        let f0 = f(&[0.0; 3], 0.0);
        let fx = f(&x, 1.5);
        let fy = f(&y, -2.0);
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let fxy = f(&sum, -0.5);
        for i in 0..3 {
            assert_relative_eq!(fxy[i] - f0[i], (fx[i] - f0[i]) + (fy[i] - f0[i]), max_relative = 1e-15);
        }
    }

    #[test]
    fn auxiliary_rhs_examples() {
        assert_eq!(auxiliary_rhs(3, 1.0, 0.0, &[0.0; 3], 0.0, 0.0).unwrap(), vec![0.0; 3]);
        assert_eq!(
            auxiliary_rhs(3, 1.0, 0.0, &[1.0, 1.0, 1.0], 0.0, 0.0).unwrap(),
            vec![1.0, 0.0, -2.0]
        );
        assert_eq!(auxiliary_rhs(1, 1.0, 0.0, &[7.0], 2.0, 0.5).unwrap(), vec![2.5]);
        assert!(auxiliary_rhs(2, 1.0, 0.0, &[1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn pi_examples() {
        let g = TimeBaseGain::from_aux_bound(1.0, 10.0, 10.0, 0.0).unwrap();
        assert_eq!(pi_of_tau(&g, 2, 3.0, &DisturbanceSignal::Zero), 0.0);
        let d = example3_delta();
        let bound = g.pi_bound(2, 1.0);
        for i in 0..10_000 {
            let tau = i as f64 * 1e-3;
            assert!(pi_of_tau(&g, 2, tau, &d).abs() <= bound * (1.0 + 1e-12));
        }
        let c = g.alpha() * g.t_c() / g.eta();
        assert!(pi_of_tau(&g, 2, 50.0, &d).abs() <= 1e-20 * c * c);
    }

    #[test]
    fn pi_matches_direct_substitution() {
        let g = TimeBaseGain::from_aux_bound(0.5, 10.0, 7.0, 1.0).unwrap();
        let d = example3_delta();
        let tau = 1.7;
        let t = g.phi_inv(tau).unwrap();
        let kappa = g.kappa(t).unwrap();
        assert_relative_eq!(pi_of_tau(&g, 3, tau, &d), d.eval(t) / kappa.powi(3), max_relative = 1e-12);
    }

    #[test]
    fn disturbance_bounds() {
        assert!(ChainPlant::new(2, 0.5, example3_delta()).is_err());
        assert!(ChainPlant::new(2, 1.0, example3_delta()).is_ok());
        assert!(ChainPlant::new(2, -1.0, DisturbanceSignal::Zero).is_err());
        assert!(ChainPlant::new(0, 1.0, DisturbanceSignal::Zero).is_err());
        assert!(sampled_sup(&example3_delta()) <= 1.0 + 1e-12);
    }

    #[test]
    fn table_interpolation_and_hold() {
        let d = DisturbanceSignal::Table {
            times: vec![0.0, 1.0, 3.0],
            values: vec![0.0, 1.0, -1.0],
        };
        assert_eq!(d.eval(-5.0), 0.0);
        assert_eq!(d.eval(0.5), 0.5);
        assert_eq!(d.eval(2.0), 0.0);
        assert_eq!(d.eval(10.0), -1.0);
        assert!(ChainPlant::new(1, 1.0, d.clone()).is_ok());
        assert!(ChainPlant::new(1, 0.9, d).is_err());
        let bad = DisturbanceSignal::Table {
            times: vec![0.0, 0.0],
            values: vec![1.0, 1.0],
        };
        assert!(ChainPlant::new(1, 1.0, bad).is_err());
    }
}
