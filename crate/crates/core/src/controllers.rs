//! Feedback laws: the stretched-time inner laws, their composition with the
//! canonical transform, the post-switch stabilizer, and the assembled
//! piecewise non-autonomous controller.

use crate::canonical::CanonicalTransform;
use crate::error::{check_dim, Error, Result};
use crate::poly;
use crate::special::gamma_fn;
use crate::timebase::TimeBaseGain;

/// Largest supported chain order. Controllers evaluate on stack buffers of
/// this size.
pub const MAX_ORDER: usize = 16;

/// `sign(x) |x|^a`, the odd extension of the power function.
#[inline]
pub fn signed_power(x: f64, a: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(a)
    }
}

/// How discontinuous `sign` terms are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignMode {
    /// `sat(s / width)`, continuous with slope `1 / width` inside the layer.
    BoundaryLayer { width: f64 },
    /// The true sign with `sign(0) = 0`.
    Strict,
}

impl Default for SignMode {
    fn default() -> Self {
        SignMode::BoundaryLayer { width: 1e-6 }
    }
}

impl SignMode {
    #[inline]
    pub fn apply(&self, s: f64) -> f64 {
        match *self {
            SignMode::BoundaryLayer { width } => (s / width).clamp(-1.0, 1.0),
            SignMode::Strict => {
                if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `sign(s) |s|^(1/2)`. In boundary-layer mode the root is replaced by
    /// its secant `s / width` on `|s| < width^2`, so that its slope stays
    /// bounded at the origin just as `sat` bounds the slope of `sign`.
    #[inline]
    pub fn signed_sqrt(&self, s: f64) -> f64 {
        match *self {
            SignMode::BoundaryLayer { width } if s.abs() < width * width => s / width,
            _ => signed_power(s, 0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SignMode::BoundaryLayer { width } if !(width > 0.0 && width.is_finite()) => Err(
                Error::InvalidParameter(format!("boundary-layer width must be positive, got {width}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Linear inner law `w(z) = -k_n z_1 - ... - k_1 z_n`.
///
/// The gain indexing is reversed on purpose: `gains[0]` is `k_1`, the
/// coefficient of `s^(n-1)` in the target polynomial, and multiplies `z_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLaw {
    gains: Vec<f64>,
    roots: Vec<nalgebra::Complex<f64>>,
}

impl LinearLaw {
    pub fn new(gains: Vec<f64>) -> Result<Self> {
        validate_order(gains.len())?;
        if !poly::is_hurwitz(&gains)? {
            return Err(Error::InvalidParameter(format!(
                "gains {gains:?} do not define a Hurwitz polynomial"
            )));
        }
        let roots = poly::roots(&gains)?;
        Ok(Self { gains, roots })
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// Closed-loop eigenvalues in companion coordinates.
    pub fn roots(&self) -> &[nalgebra::Complex<f64>] {
        &self.roots
    }

    /// `min |Re(lambda)| / alpha > n`.
    pub fn satisfies_eigenvalue_condition(&self, alpha: f64) -> bool {
        let n = self.gains.len() as f64;
        self.roots
            .iter()
            .map(|l| l.re.abs() / alpha)
            .fold(f64::INFINITY, f64::min)
            > n
    }

    #[inline]
    pub fn evaluate(&self, z: &[f64]) -> f64 {
        inner_linear_unchecked(z, &self.gains)
    }
}

#[inline]
fn inner_linear_unchecked(z: &[f64], k: &[f64]) -> f64 {
    let n = k.len();
    -(0..n).map(|i| k[n - 1 - i] * z[i]).sum::<f64>()
}

/// `-k_n z_1 - ... - k_1 z_n`.
pub fn inner_linear(z: &[f64], k: &[f64]) -> Result<f64> {
    check_dim(k.len(), z.len())?;
    Ok(inner_linear_unchecked(z, k))
}

/// Parameters of the rho-scaled homogeneous fixed-time law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasinParams {
    pub rho: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Settling bound of the unscaled (`rho = 1`) law.
    pub t_bbf: f64,
}

/// `w(z) = rho^n (-k_n g_1(z_1) - k_(n-1) g_2(z_2 / rho) - ... - k_1 g_n(z_n / rho^(n-1)))`
/// with `g_i(x) = |x|^(e1_i) + |x|^(e2_i)` (signed powers).
#[derive(Debug, Clone, PartialEq)]
pub struct BasinLaw {
    params: BasinParams,
    gains: Vec<f64>,
    exponents: Vec<(f64, f64)>,
    /// `rho^-(i-1)` for each coordinate.
    arg_scale: Vec<f64>,
    rho_n: f64,
}

impl BasinLaw {
    pub fn new(gains: Vec<f64>, params: BasinParams) -> Result<Self> {
        let n = gains.len();
        validate_order(n)?;
        let BasinParams { rho, eps1, eps2, t_bbf } = params;
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
        }
        if !(eps1 > 0.0 && eps2 > 0.0) {
            return Err(Error::InvalidParameter("eps1 and eps2 must be positive".into()));
        }
        if !(t_bbf > 0.0) {
            return Err(Error::InvalidParameter("the unscaled settling bound must be positive".into()));
        }
        let nf = n as f64;
        if !(nf - (nf - 1.0) * eps1 > 0.0) || eps1 >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "eps1 = {eps1} makes an exponent ill-defined for n = {n}"
            )));
        }
        if !poly::is_hurwitz(&gains)? {
            return Err(Error::InvalidParameter(format!(
                "gains {gains:?} do not define a Hurwitz polynomial"
            )));
        }
        let exponents = (0..n)
            .map(|i| {
                let i = i as f64;
                (
                    (nf - nf * eps1) / (nf - i * eps1),
                    (nf + nf * eps2) / (nf + i * eps2),
                )
            })
            .collect();
        let arg_scale = (0..n).map(|i| rho.powi(-(i as i32))).collect();
        Ok(Self {
            params,
            gains,
            exponents,
            arg_scale,
            rho_n: rho.powi(n as i32),
        })
    }

    pub fn params(&self) -> &BasinParams {
        &self.params
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// `(e1_i, e2_i)` for each coordinate.
    pub fn exponents(&self) -> &[(f64, f64)] {
        &self.exponents
    }

    /// Settling bound of the scaled law, `T_bbf / rho`.
    pub fn settling_bound(&self) -> f64 {
        self.params.t_bbf / self.params.rho
    }

    #[inline]
    pub fn evaluate(&self, z: &[f64]) -> f64 {
        let n = self.gains.len();
        let mut acc = 0.0;
        for i in 0..n {
            let x = z[i] * self.arg_scale[i];
            let (e1, e2) = self.exponents[i];
            let g = signed_power(x, e1) + signed_power(x, e2);
            acc -= self.gains[n - 1 - i] * g;
        }
        self.rho_n * acc
    }
}

/// Parameters of the second-order sliding law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AldanaParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub p: f64,
    pub q: f64,
    pub k: f64,
    pub tc1: f64,
    pub tc2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AldanaGains {
    pub gamma1: f64,
    pub gamma2: f64,
    pub m_p: f64,
    pub m_q: f64,
}

/// `gamma_1`, `gamma_2`, `m_p`, `m_q` of the second-order law.
pub fn aldana_gains(p: &AldanaParams) -> Result<AldanaGains> {
    let positive = [p.alpha1, p.alpha2, p.beta1, p.beta2, p.p, p.q, p.k, p.tc1, p.tc2];
    if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(
            "alpha1, alpha2, beta1, beta2, p, q, k, T_c1, T_c2 must all be positive".into(),
        ));
    }
    if !(p.k * p.p < 1.0 && p.k * p.q > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need k p < 1 < k q, got k p = {}, k q = {}",
            p.k * p.p,
            p.k * p.q
        )));
    }
    let m_p = (1.0 - p.k * p.p) / (p.q - p.p);
    let m_q = (p.k * p.q - 1.0) / (p.q - p.p);
    let gamma1 = gamma_fn(0.25)?.powi(2) / (2.0 * p.alpha1.sqrt() * gamma_fn(0.5)?)
        * (p.alpha1 / p.beta1).powf(0.25);
    let gamma2 = gamma_fn(m_p)? * gamma_fn(m_q)?
        / (p.alpha2.powf(p.k) * gamma_fn(p.k)? * (p.q - p.p))
        * (p.alpha2 / p.beta2).powf(m_p);
    Ok(AldanaGains {
        gamma1,
        gamma2,
        m_p,
        m_q,
    })
}

/// Disturbance-domination term `zeta(tau) = amplitude * exp(-decay * tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaSchedule {
    pub amplitude: f64,
    pub decay: f64,
}

impl ZetaSchedule {
    pub fn constant(value: f64) -> Self {
        Self {
            amplitude: value,
            decay: 0.0,
        }
    }

    /// `safety * (alpha T_c e^{-alpha tau} / eta)^2 L`, the smallest term that
    /// dominates the stretched-time disturbance of a second-order chain.
    pub fn vanishing(gain: &TimeBaseGain, bound: f64, safety: f64) -> Self {
        let c = gain.alpha() * gain.t_c() / gain.eta();
        Self {
            amplitude: safety * c * c * bound,
            decay: 2.0 * gain.alpha(),
        }
    }

    #[inline]
    pub fn at(&self, tau: f64) -> f64 {
        if self.decay == 0.0 {
            self.amplitude
        } else {
            self.amplitude * (-self.decay * tau).exp()
        }
    }
}

/// Second-order fixed-time sliding law.
#[derive(Debug, Clone, PartialEq)]
pub struct AldanaLaw {
    params: AldanaParams,
    gains: AldanaGains,
    zeta: ZetaSchedule,
    sign_mode: SignMode,
}

impl AldanaLaw {
    pub fn new(params: AldanaParams, zeta: ZetaSchedule, sign_mode: SignMode) -> Result<Self> {
        sign_mode.validate()?;
        if !(zeta.amplitude >= 0.0 && zeta.decay >= 0.0) {
            return Err(Error::InvalidParameter("zeta must be non-negative".into()));
        }
        Ok(Self {
            gains: aldana_gains(&params)?,
            params,
            zeta,
            sign_mode,
        })
    }

    pub fn params(&self) -> &AldanaParams {
        &self.params
    }

    pub fn gains(&self) -> &AldanaGains {
        &self.gains
    }

    pub fn zeta(&self) -> &ZetaSchedule {
        &self.zeta
    }

    pub fn sign_mode(&self) -> SignMode {
        self.sign_mode
    }

    pub fn with_sign_mode(mut self, mode: SignMode) -> Self {
        self.sign_mode = mode;
        self
    }

    pub fn settling_bound(&self) -> f64 {
        self.params.tc1 + self.params.tc2
    }

    /// The sliding variable.
    #[inline]
    pub fn sigma(&self, z: &[f64]) -> f64 {
        let p = &self.params;
        let g1 = self.gains.gamma1;
        let c = 2.0 * g1 * g1 / (p.tc1 * p.tc1);
        let inner = signed_power(z[1], 2.0) + c * (p.alpha1 * z[0] + p.beta1 * signed_power(z[0], 3.0));
        z[1] + self.sign_mode.signed_sqrt(inner)
    }

    #[inline]
    pub fn evaluate_with_zeta(&self, z: &[f64], zeta: f64) -> f64 {
        let p = &self.params;
        let g = &self.gains;
        let sigma = self.sigma(z);
        let s = sigma.abs();
        let reach = g.gamma2 / p.tc2 * (p.alpha2 * s.powf(p.p) + p.beta2 * s.powf(p.q)).powf(p.k);
        let equiv = g.gamma1 * g.gamma1 / (2.0 * p.tc1 * p.tc1) * (p.alpha1 + 3.0 * p.beta1 * z[0] * z[0]);
        -(reach + equiv + zeta) * self.sign_mode.apply(sigma)
    }

    #[inline]
    pub fn evaluate(&self, z: &[f64], tau: f64) -> f64 {
        self.evaluate_with_zeta(z, self.zeta.at(tau))
    }
}

/// `inner_aldana(z, law, zeta)`.
pub fn inner_aldana(z: &[f64], law: &AldanaLaw, zeta: f64) -> Result<f64> {
    check_dim(2, z.len())?;
    if !(zeta >= 0.0) {
        return Err(Error::InvalidParameter(format!("zeta must be non-negative, got {zeta}")));
    }
    Ok(law.evaluate_with_zeta(z, zeta))
}

/// `inner_basin(z, law)`.
pub fn inner_basin(z: &[f64], law: &BasinLaw) -> Result<f64> {
    check_dim(law.gains.len(), z.len())?;
    Ok(law.evaluate(z))
}

/// The inner (companion-coordinate, stretched-time) law.
#[derive(Debug, Clone, PartialEq)]
pub enum InnerLaw {
    Linear(LinearLaw),
    Basin(BasinLaw),
    Aldana(AldanaLaw),
}

impl InnerLaw {
    pub fn order(&self) -> usize {
        match self {
            InnerLaw::Linear(l) => l.gains.len(),
            InnerLaw::Basin(b) => b.gains.len(),
            InnerLaw::Aldana(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            InnerLaw::Linear(_) => "linear",
            InnerLaw::Basin(_) => "basin_homogeneous",
            InnerLaw::Aldana(_) => "aldana_second_order",
        }
    }

    /// Known bound on the settling time in stretched time; infinite for the
    /// linear law.
    pub fn settling_bound(&self) -> f64 {
        match self {
            InnerLaw::Linear(_) => f64::INFINITY,
            InnerLaw::Basin(b) => b.settling_bound(),
            InnerLaw::Aldana(a) => a.settling_bound(),
        }
    }

    pub fn is_discontinuous(&self) -> bool {
        matches!(self, InnerLaw::Aldana(_))
    }

    pub fn sign_mode(&self) -> Option<SignMode> {
        match self {
            InnerLaw::Aldana(a) => Some(a.sign_mode),
            _ => None,
        }
    }

    #[inline]
    pub fn evaluate(&self, z: &[f64], tau: f64) -> f64 {
        match self {
            InnerLaw::Linear(l) => l.evaluate(z),
            InnerLaw::Basin(b) => b.evaluate(z),
            InnerLaw::Aldana(a) => a.evaluate(z, tau),
        }
    }
}

/// `v(y) = [w(z) + a_n z_1 + ... + a_1 z_n]` at `z = Q^-1 y`.
pub fn compose_upsilon(
    inner: &InnerLaw,
    transform: &CanonicalTransform,
    y: &[f64],
    tau: f64,
) -> Result<f64> {
    check_dim(transform.n, y.len())?;
    check_dim(transform.n, inner.order())?;
    Ok(upsilon_unchecked(inner, transform, y, tau))
}

#[inline]
fn upsilon_unchecked(inner: &InnerLaw, transform: &CanonicalTransform, y: &[f64], tau: f64) -> f64 {
    let n = transform.n;
    let mut zbuf = [0.0; MAX_ORDER];
    let z = &mut zbuf[..n];
    transform.to_companion_into(y, z);
    inner.evaluate(z, tau) + transform.coefficient_correction(z)
}

/// Robust autonomous stabilizer used after the switch.
#[derive(Debug, Clone, PartialEq)]
pub enum PostSwitchLaw {
    /// `u = -g . x`; only valid for undisturbed plants.
    LinearFeedback { gains: Vec<f64> },
    /// `u = -g . x - (L + margin) sign(c . x)` with `c` the sliding surface.
    RobustSign {
        gains: Vec<f64>,
        surface: Vec<f64>,
        margin: f64,
        bound: f64,
        sign_mode: SignMode,
    },
}

impl PostSwitchLaw {
    pub fn order(&self) -> usize {
        match self {
            PostSwitchLaw::LinearFeedback { gains } => gains.len(),
            PostSwitchLaw::RobustSign { gains, .. } => gains.len(),
        }
    }

    pub fn validate(&self, disturbance_bound: f64) -> Result<()> {
        match self {
            PostSwitchLaw::LinearFeedback { gains } => {
                validate_order(gains.len())?;
                if disturbance_bound > 0.0 {
                    return Err(Error::Config(format!(
                        "linear_feedback post-switch law cannot reject disturbances (L = {disturbance_bound})"
                    )));
                }
                Ok(())
            }
            PostSwitchLaw::RobustSign {
                gains,
                surface,
                margin,
                bound,
                sign_mode,
            } => {
                validate_order(gains.len())?;
                check_dim(gains.len(), surface.len())?;
                sign_mode.validate()?;
                if !(*margin > 0.0) {
                    return Err(Error::Config("robust_sign margin must be positive".into()));
                }
                if *bound < disturbance_bound {
                    return Err(Error::Config(format!(
                        "robust_sign bound {bound} is below the plant's disturbance bound {disturbance_bound}"
                    )));
                }
                Ok(())
            }
        }
    }

    #[inline]
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            PostSwitchLaw::LinearFeedback { gains } => -dot(gains, x),
            PostSwitchLaw::RobustSign {
                gains,
                surface,
                margin,
                bound,
                sign_mode,
            } => -dot(gains, x) - (bound + margin) * sign_mode.apply(dot(surface, x)),
        }
    }

    pub fn with_sign_mode(self, mode: SignMode) -> Self {
        match self {
            PostSwitchLaw::RobustSign {
                gains,
                surface,
                margin,
                bound,
                ..
            } => PostSwitchLaw::RobustSign {
                gains,
                surface,
                margin,
                bound,
                sign_mode: mode,
            },
            other => other,
        }
    }
}

/// `post_switch(law, x)`.
pub fn post_switch(law: &PostSwitchLaw, x: &[f64]) -> Result<f64> {
    check_dim(law.order(), x.len())?;
    Ok(law.evaluate(x))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One evaluation of a controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSample {
    pub u: f64,
    /// Effective gain used for this evaluation (1 after the switch).
    pub kappa: f64,
    /// The gain was frozen by the singularity guard.
    pub guarded: bool,
}

/// `u = kappa^n v(Omega^-1 x)` before the switch, `w_L(x)` after.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseController {
    gain: TimeBaseGain,
    transform: CanonicalTransform,
    inner: InnerLaw,
    post_switch: PostSwitchLaw,
    n: usize,
}

impl PiecewiseController {
    /// Assembles a controller with an explicitly chosen gain.
    pub fn new(
        gain: TimeBaseGain,
        inner: InnerLaw,
        post_switch: PostSwitchLaw,
        disturbance_bound: f64,
    ) -> Result<Self> {
        let n = inner.order();
        validate_order(n)?;
        check_dim(n, post_switch.order())?;
        post_switch.validate(disturbance_bound)?;
        let transform = CanonicalTransform::build(n, gain.alpha())?;
        Ok(Self {
            gain,
            transform,
            inner,
            post_switch,
            n,
        })
    }

    /// Assembles a controller with `eta = 1 - exp(-alpha T_f)` taken from the
    /// inner law's declared settling bound.
    pub fn design(
        alpha: f64,
        t_c: f64,
        t0: f64,
        inner: InnerLaw,
        post_switch: PostSwitchLaw,
        disturbance_bound: f64,
    ) -> Result<Self> {
        let gain = TimeBaseGain::from_aux_bound(alpha, inner.settling_bound(), t_c, t0)?;
        Self::new(gain, inner, post_switch, disturbance_bound)
    }

    pub fn gain(&self) -> &TimeBaseGain {
        &self.gain
    }

    pub fn transform(&self) -> &CanonicalTransform {
        &self.transform
    }

    pub fn inner(&self) -> &InnerLaw {
        &self.inner
    }

    pub fn post_switch(&self) -> &PostSwitchLaw {
        &self.post_switch
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Whether `eta` agrees with the inner law's declared settling bound.
    pub fn eta_matches_design(&self) -> bool {
        let t_f = self.inner.settling_bound();
        let expected = if t_f.is_infinite() {
            1.0
        } else {
            -(-self.gain.alpha() * t_f).exp_m1()
        };
        (self.gain.eta() - expected).abs() <= 1e-15
    }

    /// `v(y)` in stretched time.
    pub fn upsilon(&self, y: &[f64], tau: f64) -> Result<f64> {
        compose_upsilon(&self.inner, &self.transform, y, tau)
    }

    /// The control law without a singularity guard.
    pub fn control(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(t, x, None)?.u)
    }

    /// The control law. When `guard_start` is given and `t` falls in
    /// `[guard_start, t0 + T_c)`, `kappa` and `tau` are frozen at their values
    /// at `guard_start`.
    #[inline]
    pub fn evaluate(&self, t: f64, x: &[f64], guard_start: Option<f64>) -> Result<ControlSample> {
        let phase = if t >= self.gain.switch_time() {
            Phase::PostSwitch
        } else {
            Phase::Transient
        };
        self.evaluate_in(phase, t, x, guard_start)
    }

    /// The control law of a given phase. The transient law is extended to the
    /// closed interval `[t0, t0 + T_c]` by continuity of `kappa`, which lets an
    /// integrator finish a segment exactly at the switch time.
    #[inline]
    pub fn evaluate_in(
        &self,
        phase: Phase,
        t: f64,
        x: &[f64],
        guard_start: Option<f64>,
    ) -> Result<ControlSample> {
        check_dim(self.n, x.len())?;
        if t < self.gain.t0() {
            return Err(Error::Domain(format!("control evaluated at t = {t} before t0")));
        }
        if phase == Phase::PostSwitch {
            return Ok(ControlSample {
                u: self.post_switch.evaluate(x),
                kappa: 1.0,
                guarded: false,
            });
        }
        let (t_eval, guarded) = match guard_start {
            Some(g) if t >= g => (g, true),
            _ => (t, false),
        };
        let kappa = self.gain.kappa_transient(t_eval)?;
        let tau = self.gain.phi(t_eval)?;
        let n = self.n;
        let mut ybuf = [0.0; MAX_ORDER];
        let y = &mut ybuf[..n];
        let inv = 1.0 / kappa;
        let mut scale = 1.0;
        for i in 0..n {
            y[i] = x[i] * scale;
            scale *= inv;
        }
        let v = upsilon_unchecked(&self.inner, &self.transform, y, tau);
        let u = kappa.powi(n as i32) * v;
        if !u.is_finite() {
            return Err(Error::NonFinite { t });
        }
        Ok(ControlSample { u, kappa, guarded })
    }
}

/// Which branch of the piecewise law is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Transient,
    PostSwitch,
}

/// Either the redesigned piecewise controller or an autonomous baseline
/// `u = w(x)` that applies an inner law directly to the plant state.
#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    Piecewise(PiecewiseController),
    Autonomous { inner: InnerLaw, t0: f64 },
}

impl Controller {
    pub fn order(&self) -> usize {
        match self {
            Controller::Piecewise(c) => c.order(),
            Controller::Autonomous { inner, .. } => inner.order(),
        }
    }

    pub fn gain(&self) -> Option<&TimeBaseGain> {
        match self {
            Controller::Piecewise(c) => Some(c.gain()),
            Controller::Autonomous { .. } => None,
        }
    }

    pub fn t0(&self) -> f64 {
        match self {
            Controller::Piecewise(c) => c.gain().t0(),
            Controller::Autonomous { t0, .. } => *t0,
        }
    }

    pub fn is_discontinuous(&self) -> bool {
        match self {
            Controller::Piecewise(c) => {
                c.inner().is_discontinuous()
                    || matches!(c.post_switch(), PostSwitchLaw::RobustSign { .. })
            }
            Controller::Autonomous { inner, .. } => inner.is_discontinuous(),
        }
    }

    /// Whether any sign term is evaluated without a boundary layer.
    pub fn uses_strict_sign(&self) -> bool {
        let (inner, post) = match self {
            Controller::Piecewise(c) => (c.inner(), Some(c.post_switch())),
            Controller::Autonomous { inner, .. } => (inner, None),
        };
        inner.sign_mode() == Some(SignMode::Strict)
            || matches!(
                post,
                Some(PostSwitchLaw::RobustSign {
                    sign_mode: SignMode::Strict,
                    ..
                })
            )
    }

    #[inline]
    pub fn evaluate(&self, t: f64, x: &[f64], guard_start: Option<f64>) -> Result<ControlSample> {
        self.evaluate_phase(None, t, x, guard_start)
    }

    /// Like [`evaluate`](Self::evaluate) with the phase optionally pinned.
    /// Autonomous controllers ignore the phase.
    #[inline]
    pub fn evaluate_phase(
        &self,
        phase: Option<Phase>,
        t: f64,
        x: &[f64],
        guard_start: Option<f64>,
    ) -> Result<ControlSample> {
        match self {
            Controller::Piecewise(c) => match phase {
                Some(p) => c.evaluate_in(p, t, x, guard_start),
                None => c.evaluate(t, x, guard_start),
            },
            Controller::Autonomous { inner, t0 } => {
                check_dim(inner.order(), x.len())?;
                let u = inner.evaluate(x, t - t0);
                if !u.is_finite() {
                    return Err(Error::NonFinite { t });
                }
                Ok(ControlSample {
                    u,
                    kappa: 1.0,
                    guarded: false,
                })
            }
        }
    }
}

fn validate_order(n: usize) -> Result<()> {
    if n == 0 || n > MAX_ORDER {
        Err(Error::InvalidParameter(format!(
            "order must lie in 1..={MAX_ORDER}, got {n}"
        )))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn example3_params() -> AldanaParams {
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
        }
    }

    fn example1_controller() -> PiecewiseController {
        let inner = InnerLaw::Linear(LinearLaw::new(vec![21.0, 134.75, 257.25]).unwrap());
        let post = PostSwitchLaw::LinearFeedback {
            gains: vec![6.0, 11.0, 6.0],
        };
        PiecewiseController::design(1.0, 10.0, 0.0, inner, post, 0.0).unwrap()
    }

    #[test]
    fn signed_power_examples() {
        assert_relative_eq!(signed_power(-8.0, 1.0 / 3.0), -2.0, max_relative = 1e-15);
        assert_eq!(signed_power(0.0, 0.7), 0.0);
        // 2^1.5 = 2 * sqrt(2)
        let by_roots = 2.0 * 2f64.sqrt();
        assert_relative_eq!(signed_power(2.0, 1.5), by_roots, max_relative = 1e-15);
        assert_relative_eq!(signed_power(2.0, 1.5), 2.8284271247461903, max_relative = 1e-15);
    }

    #[test]
    fn linear_law_uses_reversed_indexing() {
        let k = [21.0, 134.75, 257.25];
        assert_eq!(inner_linear(&[1.0, 0.0, 0.0], &k).unwrap(), -257.25);
        assert_eq!(inner_linear(&[0.0, 0.0, 1.0], &k).unwrap(), -21.0);
        assert_eq!(inner_linear(&[0.0; 3], &k).unwrap(), 0.0);
        assert_eq!(inner_linear(&[1.0, 1.0, 1.0], &k).unwrap(), -413.0);
        assert!(inner_linear(&[1.0, 1.0], &k).is_err());
    }

    #[test]
    fn linear_law_rejects_non_hurwitz() {
        assert!(LinearLaw::new(vec![1.0, 1.0, 1.0]).is_err());
        let ok = LinearLaw::new(vec![21.0, 134.75, 257.25]).unwrap();
        assert!(ok.satisfies_eigenvalue_condition(1.0));
        let slow = LinearLaw::new(vec![6.0, 11.0, 6.0]).unwrap();
        assert!(!slow.satisfies_eigenvalue_condition(1.0));
    }

    #[test]
    fn basin_examples() {
        let params = BasinParams {
            rho: 1.0,
            eps1: 3.0 / 22.0,
            eps2: 3.0 / 18.0,
            t_bbf: 578.38,
        };
        let law = BasinLaw::new(vec![3.0, 3.0, 1.0], params).unwrap();
        assert_eq!(inner_basin(&[0.0; 3], &law).unwrap(), 0.0);
        let (e1, e2) = law.exponents()[0];
        assert_relative_eq!(e1, 19.0 / 22.0, max_relative = 1e-15);
        assert_relative_eq!(e2, 7.0 / 6.0, max_relative = 1e-15);
        assert_eq!(inner_basin(&[1.0, 0.0, 0.0], &law).unwrap(), -2.0);
        assert!(inner_basin(&[1.0], &law).is_err());
    }

    #[test]
    fn basin_scaling_maps_unscaled_solutions() {
        // w_rho(z) = rho^n w_1(z_i / rho^(i-1)).
        let base = BasinParams {
            rho: 1.0,
            eps1: 3.0 / 22.0,
            eps2: 3.0 / 18.0,
            t_bbf: 578.38,
        };
        let unit = BasinLaw::new(vec![3.0, 3.0, 1.0], base).unwrap();
        let rho = 578.38 / 15.0;
        let scaled = BasinLaw::new(vec![3.0, 3.0, 1.0], BasinParams { rho, ..base }).unwrap();
        assert_relative_eq!(scaled.settling_bound(), 15.0, max_relative = 1e-14);
        let z = [0.3, -2.0, 40.0];
        let zs = [z[0], z[1] / rho, z[2] / (rho * rho)];
        assert_relative_eq!(
            scaled.evaluate(&z),
            rho.powi(3) * unit.evaluate(&zs),
            max_relative = 1e-12
        );
    }

    #[test]
    fn basin_validation() {
        let bad = BasinParams {
            rho: -1.0,
            eps1: 0.1,
            eps2: 0.1,
            t_bbf: 1.0,
        };
        assert!(BasinLaw::new(vec![3.0, 3.0, 1.0], bad).is_err());
        let bad_eps = BasinParams {
            rho: 1.0,
            eps1: 2.0,
            eps2: 0.1,
            t_bbf: 1.0,
        };
        assert!(BasinLaw::new(vec![3.0, 3.0, 1.0], bad_eps).is_err());
    }

    /// Beta(a, b) by composite Simpson quadrature on 10^4 panels, with the
    /// endpoint singularities removed by power substitutions on each half.
    fn beta_quadrature(a: f64, b: f64) -> f64 {
        fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
            let h = (hi - lo) / panels as f64;
            let mut acc = f(lo) + f(hi);
            for i in 1..panels {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * f(lo + i as f64 * h);
            }
            acc * h / 3.0
        }
        // int_0^{1/2} t^{a-1} (1-t)^{b-1} dt with t = u^{1/a}
        let left = simpson(
            |u: f64| (1.0 - u.powf(1.0 / a)).powf(b - 1.0) / a,
            0.0,
            0.5f64.powf(a),
            10_000,
        );
        // int_{1/2}^1 with 1 - t = v^{1/b}
        let right = simpson(
            |v: f64| (1.0 - v.powf(1.0 / b)).powf(a - 1.0) / b,
            0.0,
            0.5f64.powf(b),
            10_000,
        );
        left + right
    }

    #[test]
    fn aldana_gains_example() {
        let g = aldana_gains(&example3_params()).unwrap();
        assert_relative_eq!(g.m_p, 0.1, max_relative = 1e-14);
        assert_relative_eq!(g.m_q, 1.4, max_relative = 1e-14);
        // mpmath reference values.
        assert_relative_eq!(g.gamma1, 3.708149354602744, max_relative = 1e-12);
        assert_relative_eq!(g.gamma2, 0.6283917972138643, max_relative = 1e-12);
        // Beta(1/4, 1/4) = Gamma(1/4)^2 / Gamma(1/2)
        let gamma1_quad = beta_quadrature(0.25, 0.25) / (2.0 * 2.0) * 16f64.powf(0.25);
        assert_relative_eq!(g.gamma1, gamma1_quad, max_relative = 1e-8);
        // Gamma(m_p) Gamma(m_q) = Beta(m_p, m_q) Gamma(k) since m_p + m_q = k.
        let gamma2_quad = beta_quadrature(0.1, 1.4) / (4f64.powf(1.5) * 2.5) * 16f64.powf(0.1);
        assert_relative_eq!(g.gamma2, gamma2_quad, max_relative = 1e-8);
    }

    #[test]
    fn aldana_ratio_factor_is_one_for_equal_gains() {
        let mut p = example3_params();
        p.beta1 = p.alpha1;
        let g = aldana_gains(&p).unwrap();
        let base = gamma_fn(0.25).unwrap().powi(2) / (2.0 * p.alpha1.sqrt() * gamma_fn(0.5).unwrap());
        assert_relative_eq!(g.gamma1, base, max_relative = 1e-15);
    }

    #[test]
    fn aldana_validation() {
        let mut p = example3_params();
        p.k = 3.0; // k p = 1.5 > 1
        assert!(aldana_gains(&p).is_err());
        let mut q = example3_params();
        q.tc1 = 0.0;
        assert!(aldana_gains(&q).is_err());
    }

    #[test]
    fn aldana_sigma_and_control() {
        let law = AldanaLaw::new(example3_params(), ZetaSchedule::constant(0.0), SignMode::Strict).unwrap();
        assert_eq!(law.sigma(&[0.0, 0.0]), 0.0);
        assert_eq!(inner_aldana(&[0.0, 0.0], &law, 0.0).unwrap(), 0.0);
        assert_eq!(law.sigma(&[0.0, 1.0]), 2.0);
        let g1 = law.gains().gamma1;
        let want = signed_power(2.0 * g1 * g1 / 25.0 * (4.0 + 0.25), 0.5);
        let sigma = law.sigma(&[1.0, 0.0]);
        assert_relative_eq!(sigma, want, max_relative = 1e-15);
        assert!(sigma > 0.0);
        assert!(inner_aldana(&[1.0, 0.0], &law, 0.0).unwrap() < 0.0);
        assert!(inner_aldana(&[1.0, 0.0, 0.0], &law, 0.0).is_err());
        assert!(inner_aldana(&[1.0, 0.0], &law, -1.0).is_err());
    }

    #[test]
    fn boundary_layer_saturates() {
        let m = SignMode::BoundaryLayer { width: 1e-3 };
        assert_eq!(m.apply(1.0), 1.0);
        assert_eq!(m.apply(-1.0), -1.0);
        assert_relative_eq!(m.apply(5e-4), 0.5);
        assert_eq!(SignMode::Strict.apply(0.0), 0.0);
        assert!(SignMode::BoundaryLayer { width: 0.0 }.validate().is_err());
    }

    #[test]
    fn regularized_root_is_continuous() {
        let m = SignMode::BoundaryLayer { width: 1e-3 };
        let edge = 1e-6;
        assert_relative_eq!(m.signed_sqrt(edge * (1.0 - 1e-12)), 1e-3, max_relative = 1e-9);
        assert_relative_eq!(m.signed_sqrt(edge), 1e-3, max_relative = 1e-12);
        assert_relative_eq!(m.signed_sqrt(-4.0), -2.0);
        assert_eq!(m.signed_sqrt(0.0), 0.0);
        assert_eq!(SignMode::Strict.signed_sqrt(1e-10), 1e-5);
    }

    #[test]
    fn zeta_schedules() {
        let gain = TimeBaseGain::from_aux_bound(1.0, 10.0, 10.0, 0.0).unwrap();
        let z = ZetaSchedule::vanishing(&gain, 1.0, 1.0);
        assert_relative_eq!(z.at(0.0), gain.pi_bound(2, 1.0), max_relative = 1e-14);
        assert_relative_eq!(z.at(3.0), gain.pi_bound(2, 1.0) * (-6.0f64).exp(), max_relative = 1e-13);
        assert_eq!(ZetaSchedule::constant(1.0).at(50.0), 1.0);
    }

    #[test]
    fn upsilon_examples() {
        let c = example1_controller();
        assert_eq!(c.upsilon(&[0.0; 3], 0.0).unwrap(), 0.0);
        assert_eq!(c.upsilon(&[1.0, 0.0, 0.0], 0.0).unwrap(), -257.25);
        // y = (1, 2, 5) -> z = (1, 2, 3); linear part -257.25 - 269.5 - 63
        let v = c.upsilon(&[1.0, 2.0, 5.0], 0.0).unwrap();
        assert_relative_eq!(v, -257.25 - 134.75 * 2.0 - 21.0 * 3.0 + 13.0, max_relative = 1e-15);
        assert!(c.upsilon(&[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn control_examples() {
        let c = example1_controller();
        assert!(c.eta_matches_design());
        assert_eq!(c.gain().eta(), 1.0);
        assert_eq!(c.control(10.0, &[1.0, 1.0, 1.0]).unwrap(), -23.0);
        assert_eq!(c.control(3.0, &[0.0; 3]).unwrap(), 0.0);
        assert_relative_eq!(c.control(0.0, &[1.0, 0.0, 0.0]).unwrap(), -0.25725, max_relative = 1e-14);
        assert!(c.control(-1.0, &[0.0; 3]).is_err());
    }

    #[test]
    fn guard_freezes_gain() {
        let c = example1_controller();
        let g = 10.0 * (1.0 - 1e-6);
        let frozen = c.evaluate(9.9999999, &[1.0, 1.0, 1.0], Some(g)).unwrap();
        let at_guard = c.evaluate(g, &[1.0, 1.0, 1.0], None).unwrap();
        assert!(frozen.guarded);
        assert_eq!(frozen.kappa, at_guard.kappa);
        assert_eq!(frozen.u, at_guard.u);
    }

    #[test]
    fn post_switch_examples() {
        let lin = PostSwitchLaw::LinearFeedback {
            gains: vec![6.0, 11.0, 6.0],
        };
        assert_eq!(post_switch(&lin, &[0.0; 3]).unwrap(), 0.0);
        assert_eq!(post_switch(&lin, &[1.0, 0.0, 0.0]).unwrap(), -6.0);
        assert!(lin.validate(0.5).is_err());
        let robust = PostSwitchLaw::RobustSign {
            gains: vec![0.0; 3],
            surface: vec![0.0, 0.0, 1.0],
            margin: 0.1,
            bound: 1.0,
            sign_mode: SignMode::Strict,
        };
        assert_relative_eq!(post_switch(&robust, &[0.0, 0.0, 0.5]).unwrap(), -1.1);
        assert_relative_eq!(
            post_switch(&robust.clone().with_sign_mode(SignMode::default()), &[0.0, 0.0, 0.5]).unwrap(),
            -1.1
        );
        assert!(robust.validate(1.0).is_ok());
        assert!(robust.validate(2.0).is_err());
    }

    #[test]
    fn design_derives_eta_from_inner_bound() {
        let law = AldanaLaw::new(example3_params(), ZetaSchedule::constant(1.0), SignMode::default()).unwrap();
        let post = PostSwitchLaw::RobustSign {
            gains: vec![0.0, 2.0],
            surface: vec![2.0, 1.0],
            margin: 1.0,
            bound: 1.0,
            sign_mode: SignMode::default(),
        };
        let c = PiecewiseController::design(1.0, 10.0, 0.0, InnerLaw::Aldana(law), post, 1.0).unwrap();
        assert_relative_eq!(c.gain().eta(), 1.0 - (-10.0f64).exp(), max_relative = 1e-15);
        assert!(c.eta_matches_design());
        assert_relative_eq!(c.gain().gain_bound(), 2202.5465794806718, max_relative = 1e-12);
    }
}
