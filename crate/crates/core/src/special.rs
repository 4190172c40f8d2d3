//! Euler's Gamma function.

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for positive arguments (Lanczos, g = 7, nine terms).
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("gamma evaluated at {x}")));
    }
    Ok(lanczos(x))
}

fn lanczos(x: f64) -> f64 {
    use std::f64::consts::PI;
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        return PI / ((PI * x).sin() * lanczos(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: shift the argument up by the recurrence and apply
    /// the Stirling series there.
    fn gamma_oracle(x: f64) -> f64 {
        let shift = 30usize;
        let mut prod = 1.0;
        for i in 0..shift {
            prod *= x + i as f64;
        }
        let z = x + shift as f64;
        let series = 1.0 / (12.0 * z) - 1.0 / (360.0 * z.powi(3)) + 1.0 / (1260.0 * z.powi(5))
            - 1.0 / (1680.0 * z.powi(7));
        let ln_gamma = (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series;
        ln_gamma.exp() / prod
    }

    #[test]
    fn known_values() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!((gamma_fn(0.5).unwrap() - sqrt_pi).abs() < 1e-14);
        assert!((gamma_fn(5.0).unwrap() - 24.0).abs() < 1e-12);
        assert!((gamma_fn(1.0).unwrap() - 1.0).abs() < 1e-15);
        // mpmath: gamma(1/4) = 3.62560990822190831193...
        assert!((gamma_fn(0.25).unwrap() - 3.625_609_908_221_908).abs() < 1e-13);
    }

    #[test]
    fn reflection_identity() {
        // Gamma(1/4) Gamma(3/4) = pi sqrt(2)
        let lhs = gamma_fn(0.25).unwrap() * gamma_fn(0.75).unwrap();
        let rhs = std::f64::consts::PI * 2f64.sqrt();
        assert!((lhs - rhs).abs() < 1e-13 * rhs);
    }

    #[test]
    fn agrees_with_stirling_oracle_on_grid() {
        let mut x = 0.01;
        while x <= 30.0 {
            let got = gamma_fn(x).unwrap();
            let want = gamma_oracle(x);
            assert!(((got - want) / want).abs() < 1e-10, "x = {x}: {got} vs {want}");
            x += 0.0731;
        }
        let last = gamma_fn(30.0).unwrap();
        assert!(((last - gamma_oracle(30.0)) / last).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(gamma_fn(0.0).is_err());
        assert!(gamma_fn(-1.5).is_err());
        assert!(gamma_fn(f64::NAN).is_err());
    }
}
