//! Polynomial utilities: Hurwitz test and root finding.
//!
//! Polynomials are monic and given by their trailing coefficients, so
//! `[c_1, ..., c_n]` stands for `s^n + c_1 s^(n-1) + ... + c_n`.

use nalgebra::{Complex, DMatrix};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};

/// Routh-Hurwitz test in exact rational arithmetic.
///
/// Every finite `f64` is a dyadic rational, so the tabulation is exact and the
/// answer is the true answer for the given floating-point coefficients.
/// Returns `true` iff every root has a strictly negative real part.
pub fn is_hurwitz(coeffs: &[f64]) -> Result<bool> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("non-finite polynomial coefficient".into()));
    }
    let n = coeffs.len();
    if n == 0 {
        return Ok(true);
    }
    let mut full: Vec<BigRational> = Vec::with_capacity(n + 1);
    full.push(BigRational::from_integer(BigInt::from(1)));
    for &c in coeffs {
        full.push(BigRational::from_float(c).expect("finite coefficient"));
    }
    // A necessary condition that also rules out zero pivots in the common case.
    if full.iter().any(|c| !c.is_positive()) {
        return Ok(false);
    }
    let mut prev: Vec<BigRational> = full.iter().step_by(2).cloned().collect();
    let mut curr: Vec<BigRational> = full.iter().skip(1).step_by(2).cloned().collect();
    for _ in 0..n {
        // An exhausted row means a vanishing first-column entry.
        let pivot = curr.first().cloned().unwrap_or_else(BigRational::zero);
        if !pivot.is_positive() {
            return Ok(false);
        }
        let width = prev.len().max(curr.len());
        let get = |v: &Vec<BigRational>, i: usize| v.get(i).cloned().unwrap_or_else(BigRational::zero);
        let mut next = Vec::with_capacity(width.saturating_sub(1));
        for j in 0..width.saturating_sub(1) {
            let val = (&pivot * get(&prev, j + 1) - get(&prev, 0) * get(&curr, j + 1)) / &pivot;
            next.push(val);
        }
        while next.last().is_some_and(|v| v.is_zero()) {
            next.pop();
        }
        prev = curr;
        curr = next;
    }
    Ok(true)
}

/// Evaluates `s^n + c_1 s^(n-1) + ... + c_n` at a complex point.
pub fn eval_monic(coeffs: &[f64], s: Complex<f64>) -> Complex<f64> {
    coeffs
        .iter()
        .fold(Complex::new(1.0, 0.0), |acc, &c| acc * s + Complex::new(c, 0.0))
}

fn eval_monic_derivative(coeffs: &[f64], s: Complex<f64>) -> Complex<f64> {
    let n = coeffs.len();
    let mut acc = Complex::new(n as f64, 0.0);
    for (i, &c) in coeffs.iter().take(n.saturating_sub(1)).enumerate() {
        acc = acc * s + Complex::new(c * (n - 1 - i) as f64, 0.0);
    }
    acc
}

/// Parlett-Reinsch balancing with radix-2 scaling (in place).
fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            let g = r / radix;
            while cc < g {
                f *= radix;
                cc *= radix * radix;
            }
            let g = r * radix;
            while cc > g {
                f /= radix;
                cc /= radix * radix;
            }
            if (cc + r / f) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// Roots of a monic polynomial via the eigenvalues of its balanced companion
/// matrix, polished with a few Newton steps.
pub fn roots(coeffs: &[f64]) -> Result<Vec<Complex<f64>>> {
    let n = coeffs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -coeffs[j];
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    balance(&mut m);
    let eig = m.complex_eigenvalues();
    let mut out = Vec::with_capacity(n);
    for &z0 in eig.iter() {
        let mut z = z0;
        for _ in 0..4 {
            let d = eval_monic_derivative(coeffs, z);
            if d.norm() == 0.0 {
                break;
            }
            let step = eval_monic(coeffs, z) / d;
            if !step.re.is_finite() || !step.im.is_finite() || step.norm() > 1e-3 * (1.0 + z.norm()) {
                break;
            }
            z -= step;
        }
        // Residual relative to the magnitude of the terms being summed.
        let r = z.norm();
        let terms = coeffs
            .iter()
            .fold(1.0f64, |acc, c| acc * r + c.abs());
        let residual = eval_monic(coeffs, z).norm() / terms.max(f64::MIN_POSITIVE);
        if !(residual <= 1e-9) {
            return Err(Error::Domain(format!(
                "root refinement failed: residual {residual:e} at {z}"
            )));
        }
        out.push(z);
    }
    Ok(out)
}
