//! Time-scale transformation and the time-varying gain.
//!
//! A [`TimeBaseGain`] maps the physical time `t` on `[t0, t0 + T_c/eta)` onto a
//! stretched time `tau` on `[0, inf)`:
//!
//! ```text
//! tau   = -ln(1 - eta (t - t0) / T_c) / alpha
//! t     = T_c (1 - exp(-alpha tau)) / eta + t0
//! kappa = eta / (alpha (T_c - eta (t - t0)))      t in [t0, t0 + T_c)
//! kappa = 1                                         otherwise
//! ```
//!
//! `kappa` is the derivative `d tau / d t`. With `eta = 1` it diverges at the
//! deadline; with `eta < 1` it stays bounded by [`TimeBaseGain::gain_bound`].

use crate::error::{Error, Result};

/// The triple `(alpha, eta, T_c)` plus the initial time `t0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeBaseGain {
    alpha: f64,
    eta: f64,
    /// `1 - eta`, kept separately so that it is exact when `eta` was derived
    /// from an auxiliary settling bound.
    eta_complement: f64,
    t_c: f64,
    t0: f64,
}

impl TimeBaseGain {
    /// Builds a gain with an explicit `eta` in `(0, 1]`.
    pub fn new(alpha: f64, eta: f64, t_c: f64, t0: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eta must lie in (0, 1], got {eta}"
            )));
        }
        Self::validated(alpha, eta, 1.0 - eta, t_c, t0)
    }

    /// Builds a gain with `eta = 1 - exp(-alpha T_f)` from the settling bound
    /// `T_f` of the auxiliary system. An infinite bound yields `eta = 1`.
    pub fn from_aux_bound(alpha: f64, t_f: f64, t_c: f64, t0: f64) -> Result<Self> {
        if !(t_f > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "auxiliary settling bound must be positive, got {t_f}"
            )));
        }
        if t_f.is_infinite() {
            return Self::validated(alpha, 1.0, 0.0, t_c, t0);
        }
        let complement = (-alpha * t_f).exp();
        let eta = -(-alpha * t_f).exp_m1();
        if eta >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha * T_f = {} is too large: eta rounds to 1",
                alpha * t_f
            )));
        }
        Self::validated(alpha, eta, complement, t_c, t0)
    }

    fn validated(alpha: f64, eta: f64, eta_complement: f64, t_c: f64, t0: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive and finite, got {alpha}"
            )));
        }
        if !(t_c > 0.0 && t_c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "T_c must be positive and finite, got {t_c}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidParameter(format!("t0 must be finite, got {t0}")));
        }
        Ok(Self {
            alpha,
            eta,
            eta_complement,
            t_c,
            t0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn t_c(&self) -> f64 {
        self.t_c
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// `t0 + T_c`, the time at which the controller switches.
    pub fn switch_time(&self) -> f64 {
        self.t0 + self.t_c
    }

    /// True when `eta = 1`, i.e. the gain diverges at the switch time.
    pub fn is_singular(&self) -> bool {
        self.eta_complement == 0.0
    }

    /// Stretched time corresponding to `T_f` when `eta < 1`, infinity otherwise.
    pub fn aux_horizon(&self) -> f64 {
        if self.is_singular() {
            f64::INFINITY
        } else {
            -self.eta_complement.ln() / self.alpha
        }
    }

    /// The time-varying gain. Returns 1 on and after the switch time.
    pub fn kappa(&self, t: f64) -> Result<f64> {
        let s = t - self.t0;
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("kappa evaluated at t = {t} < t0 = {}", self.t0)));
        }
        if s < self.t_c {
            Ok(self.eta / (self.alpha * (self.t_c - self.eta * s)))
        } else {
            Ok(1.0)
        }
    }

    /// Time-derivative of `kappa` on the first interval, `alpha * kappa^2`.
    pub fn kappa_dot(&self, t: f64) -> Result<f64> {
        let s = t - self.t0;
        let k = self.kappa(t)?;
        if s < self.t_c {
            Ok(self.alpha * k * k)
        } else {
            Ok(0.0)
        }
    }

    /// The first-interval formula extended to `t0 + T_c` by its left limit.
    /// Errors where it is infinite, i.e. at the deadline when `eta = 1`.
    pub fn kappa_transient(&self, t: f64) -> Result<f64> {
        let s = t - self.t0;
        let den = self.alpha * (self.t_c - self.eta * s);
        if !(s >= 0.0 && s <= self.t_c && den > 0.0) {
            return Err(Error::Domain(format!(
                "transient gain evaluated at t = {t} outside its finite range"
            )));
        }
        Ok(self.eta / den)
    }

    /// Upper end (exclusive) of the domain of [`phi`](Self::phi).
    pub fn phi_domain_end(&self) -> f64 {
        self.t0 + self.t_c / self.eta
    }

    /// Maps physical time to stretched time.
    pub fn phi(&self, t: f64) -> Result<f64> {
        let s = t - self.t0;
        if !(s >= 0.0 && t < self.phi_domain_end()) {
            return Err(Error::Domain(format!(
                "phi evaluated at t = {t} outside [{}, {})",
                self.t0,
                self.phi_domain_end()
            )));
        }
        Ok(-(-self.eta * s / self.t_c).ln_1p() / self.alpha)
    }

    /// Maps stretched time back to physical time.
    pub fn phi_inv(&self, tau: f64) -> Result<f64> {
        if !(tau >= 0.0) {
            return Err(Error::Domain(format!("phi_inv evaluated at tau = {tau} < 0")));
        }
        Ok(-(-self.alpha * tau).exp_m1() * self.t_c / self.eta + self.t0)
    }

    /// `1 / kappa` evaluated at `t = phi_inv(tau)`, i.e. `alpha T_c exp(-alpha tau) / eta`.
    pub fn inverse_kappa_at_tau(&self, tau: f64) -> f64 {
        self.alpha * self.t_c * (-self.alpha * tau).exp() / self.eta
    }

    /// `Omega(t - t0) = diag(1, kappa, ..., kappa^(n-1))`.
    pub fn omega(&self, n: usize, t: f64) -> Result<ScalingMatrix> {
        if n == 0 {
            return Err(Error::InvalidParameter("order must be at least 1".into()));
        }
        Ok(ScalingMatrix::from_kappa(n, self.kappa(t)?))
    }

    /// Supremum of `kappa` on `[t0, t0 + T_c)`; infinite when `eta = 1`.
    pub fn gain_bound(&self) -> f64 {
        if self.is_singular() {
            f64::INFINITY
        } else {
            self.eta / (self.alpha * self.t_c * self.eta_complement)
        }
    }

    /// Signed slack between the settling time realised by a true supremum
    /// `t_hat` of the auxiliary settling time and the deadline `T_c`, when
    /// `eta` is built from the known bound `t_max_star`.
    ///
    /// Non-positive whenever `t_hat <= t_max_star`; tends to zero as `alpha`
    /// grows.
    pub fn slack(&self, t_max_star: f64, t_hat: f64) -> Result<f64> {
        if !(t_max_star > 0.0 && t_hat > 0.0) {
            return Err(Error::InvalidParameter(
                "settling bounds must be positive".into(),
            ));
        }
        if t_hat > t_max_star {
            return Err(Error::InvalidParameter(format!(
                "t_hat = {t_hat} exceeds the known bound {t_max_star}"
            )));
        }
        let a = self.alpha;
        // T_c * (1 - e^{-a T_hat}) / (1 - e^{-a T*}) - T_c, rearranged to avoid
        // cancelling two numbers close to T_c.
        let num = (-a * t_max_star).exp() - (-a * t_hat).exp();
        let den = -(-a * t_max_star).exp_m1();
        Ok(self.t_c * num / den)
    }

    /// Worst-case magnitude of the stretched-time disturbance,
    /// `(alpha T_c / eta)^n L`.
    pub fn pi_bound(&self, n: usize, l: f64) -> f64 {
        if l == 0.0 {
            return 0.0;
        }
        (self.alpha * self.t_c / self.eta).powi(n as i32) * l
    }
}

/// Diagonal scaling `diag(1, kappa, ..., kappa^(n-1))` and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMatrix {
    entries: Vec<f64>,
    inverse: Vec<f64>,
}

impl ScalingMatrix {
    pub fn from_kappa(n: usize, kappa: f64) -> Self {
        let mut entries = Vec::with_capacity(n);
        let mut inverse = Vec::with_capacity(n);
        let inv_kappa = 1.0 / kappa;
        let (mut p, mut q) = (1.0, 1.0);
        for _ in 0..n {
            entries.push(p);
            inverse.push(q);
            p *= kappa;
            q *= inv_kappa;
        }
        Self { entries, inverse }
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn inverse_entries(&self) -> &[f64] {
        &self.inverse
    }

    /// `Omega * y`.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.entries).map(|(v, w)| v * w).collect()
    }

    /// `Omega^-1 * x`.
    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.inverse).map(|(v, w)| v * w).collect()
    }
}
