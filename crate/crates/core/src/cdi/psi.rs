use crate::error::{Error, Result};
use crate::measures::quadrature::integrate;
use crate::measures::{Density, LambdaMeasure};

use super::verdict::{classify, CdiVerdict, Method, TruncationPoint};

/// `(e^(-y) - 1 + y) / y^2`, stable for small `y`.
fn psi_kernel(y: f64) -> f64 {
    if y < 1e-3 {
        0.5 - y / 6.0 + y * y / 24.0 - y * y * y / 120.0
    } else {
        (y + (-y).exp_m1()) / (y * y)
    }
}

/// Laplace exponent `psi(q) = integral of (e^(-qx) - 1 + qx) x^(-2) Lambda(dx)`.
///
/// The atom at zero contributes `atom0 * q^2 / 2`, its limit as `x -> 0`.
/// `tol` is a relative tolerance for the density part.
pub fn psi(measure: &LambdaMeasure, q: f64, tol: f64) -> Result<f64> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::DomainError(format!("psi needs q > 0, got {q}")));
    }
    let q2 = q * q;
    let mut value = measure.atom0() * q2 * 0.5 + measure.atom1() * q2 * psi_kernel(q);
    if !matches!(measure.density(), Density::None) {
        // The kernel is at most 1/2 but can be far smaller on average for
        // large q, so the absolute tolerance is refined against the
        // previous estimate until it is relative.
        let mut abs_tol = 0.5 * tol;
        let mut part = 0.0;
        for _ in 0..4 {
            part = measure.density_integral(|x, _| psi_kernel(q * x), abs_tol)?.value;
            let wanted = tol * part.abs();
            if !(wanted > 0.0) || abs_tol <= 2.0 * wanted {
                break;
            }
            abs_tol = wanted;
        }
        value += q2 * part;
    }
    Ok(value)
}

/// Classify with the integral test: partial integrals of `1/psi` from `a`
/// to each level in `q_levels`.
///
/// The integral is taken in `u = ln q` over one octave at a time.
pub fn cdi_psi_integral(measure: &LambdaMeasure, a: f64, q_levels: &[f64], tol: f64) -> Result<CdiVerdict> {
    if measure.atom1() > 0.0 {
        return Err(Error::AtomAtOne(measure.atom1()));
    }
    if !(a > 0.0) {
        return Err(Error::DomainError(format!("lower limit must be positive, got {a}")));
    }
    if q_levels.windows(2).any(|w| w[1] <= w[0]) || q_levels.first().is_some_and(|&q| q <= a) {
        return Err(Error::out_of_range("psi levels", "levels must increase and exceed the lower limit".to_string()));
    }
    let mut failure = None;
    let integrand = |u: f64| {
        let q = u.exp();
        match psi(measure, q, tol) {
            Ok(p) if p > 0.0 => q / p,
            Ok(_) => {
                failure.get_or_insert(Error::DivisionNearZero(q));
                0.0
            }
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let integrand = std::cell::RefCell::new(integrand);
    let mut evidence = Vec::with_capacity(q_levels.len());
    let mut lower = a.ln();
    let mut total = 0.0;
    for &level in q_levels {
        let upper = level.ln();
        let mut u = lower;
        while u < upper {
            let next = (u + std::f64::consts::LN_2).min(upper);
            let part = integrate(|v| (integrand.borrow_mut())(v), u, next, tol)?;
            total += part.value;
            u = next;
        }
        lower = upper;
        evidence.push(TruncationPoint { level, value: total });
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let (verdict, decay_ratios) = classify(&evidence)?;
    Ok(CdiVerdict {
        method: Method::PsiIntegral,
        verdict,
        evidence,
        decay_ratios,
    })
}

/// Default upper limits for the integral test: `2^10, 2^15, ..., 2^50`.
pub fn default_psi_levels() -> Vec<f64> {
    (2..=10).map(|k| 2f64.powi(5 * k)).collect()
}
