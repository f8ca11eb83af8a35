//! Finite measures on `[0, 1]` and integrals against them.
//!
//! A [`LambdaMeasure`] stores its atoms at `0` and `1` apart from the
//! absolutely continuous part, so quadrature only ever sees the density.
//! Integrands are passed as `f(x, 1 - x)`; see [`quadrature::integrate_unit`].

pub mod quadrature;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};

pub use quadrature::Estimate;

/// Default absolute tolerance for all measure integrals.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Closed-form family the measure belongs to, if any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// `atom0 * delta_0`.
    Kingman,
    /// The Beta(2 - beta, beta) density, `beta` in `(0, 2)`.
    Beta(f64),
    /// Lebesgue measure on `(0, 1)` (Bolthausen-Sznitman).
    Uniform,
    Custom,
}

/// Absolutely continuous part of a measure.
#[derive(Clone)]
pub enum Density {
    None,
    /// `x^(1 - beta) (1 - x)^(beta - 1) / B(2 - beta, beta)`.
    Beta { beta: f64, ln_norm: f64 },
    Uniform,
    /// Piecewise-linear interpolation of `(x, value)` knots; zero outside
    /// the knot range.
    Table(Vec<(f64, f64)>),
    /// Arbitrary density called as `f(x, 1 - x)`.
    Function(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::None => write!(f, "None"),
            Density::Beta { beta, .. } => write!(f, "Beta({beta})"),
            Density::Uniform => write!(f, "Uniform"),
            Density::Table(t) => write!(f, "Table({} knots)", t.len()),
            Density::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl Density {
    /// Evaluate at `x` in `(0, 1)`; `xc` is `1 - x`.
    pub fn eval(&self, x: f64, xc: f64) -> f64 {
        match self {
            Density::None => 0.0,
            Density::Beta { beta, ln_norm } => {
                ((1.0 - beta) * x.ln() + (beta - 1.0) * xc.ln() - ln_norm).exp()
            }
            Density::Uniform => 1.0,
            Density::Table(knots) => table_eval(knots, x),
            Density::Function(f) => f(x, xc),
        }
    }

    fn is_none(&self) -> bool {
        matches!(self, Density::None)
    }
}

fn table_eval(knots: &[(f64, f64)], x: f64) -> f64 {
    let (first, last) = match (knots.first(), knots.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return 0.0,
    };
    if x < first.0 || x > last.0 {
        return 0.0;
    }
    let idx = knots.partition_point(|k| k.0 <= x);
    if idx == 0 {
        return first.1;
    }
    if idx >= knots.len() {
        return last.1;
    }
    let (x0, y0) = knots[idx - 1];
    let (x1, y1) = knots[idx];
    if x1 == x0 {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// A finite measure on `[0, 1]`: atoms at the endpoints plus a density.
#[derive(Debug, Clone)]
pub struct LambdaMeasure {
    atom0: f64,
    atom1: f64,
    density: Density,
    family: Family,
}

impl LambdaMeasure {
    /// `mass * delta_0`; `mass = 1` is the standard Kingman coalescent.
    pub fn kingman(mass: f64) -> Result<Self> {
        check_atom("atom0", mass)?;
        Ok(Self {
            atom0: mass,
            atom1: 0.0,
            density: Density::None,
            family: Family::Kingman,
        })
    }

    /// The Beta(2 - beta, beta) probability density.
    pub fn beta(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 2.0) {
            return Err(Error::InvalidMeasure(format!(
                "Beta family requires beta in (0, 2), got {beta}"
            )));
        }
        Ok(Self {
            atom0: 0.0,
            atom1: 0.0,
            density: Density::Beta {
                beta,
                ln_norm: ln_beta(2.0 - beta, beta),
            },
            family: Family::Beta(beta),
        })
    }

    /// Lebesgue measure on `(0, 1)`.
    pub fn uniform() -> Self {
        Self {
            atom0: 0.0,
            atom1: 0.0,
            density: Density::Uniform,
            family: Family::Uniform,
        }
    }

    /// The zero measure: no births, no coalescence.
    pub fn null() -> Self {
        Self {
            atom0: 0.0,
            atom1: 0.0,
            density: Density::None,
            family: Family::Custom,
        }
    }

    /// A user-supplied measure, taken at face value (not normalized).
    pub fn custom(atom0: f64, atom1: f64, density: Density) -> Result<Self> {
        check_atom("atom0", atom0)?;
        check_atom("atom1", atom1)?;
        if let Density::Table(knots) = &density {
            validate_table(knots)?;
        }
        if let Density::Beta { beta, .. } = density {
            if !(beta > 0.0 && beta < 2.0) {
                return Err(Error::InvalidMeasure(format!("beta {beta} outside (0, 2)")));
            }
        }
        Ok(Self {
            atom0,
            atom1,
            density,
            family: Family::Custom,
        })
    }

    pub fn atom0(&self) -> f64 {
        self.atom0
    }

    pub fn atom1(&self) -> f64 {
        self.atom1
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// True when the measure has no density part.
    pub fn is_atomic(&self) -> bool {
        self.density.is_none()
    }

    /// `atom0 + atom1 + integral of the density`.
    pub fn total_mass(&self, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::DomainError(format!("tolerance must be positive, got {tol}")));
        }
        let continuous = match self.density {
            Density::None => 0.0,
            _ => self.density_integral(|_, _| 1.0, tol)?.value,
        };
        Ok(self.atom0 + self.atom1 + continuous)
    }

    /// `f(0) atom0 + f(1) atom1 + integral of f * density` over `(0, 1)`.
    ///
    /// `f` is called as `f(x, 1 - x)`; at the atoms it is evaluated at
    /// `(0, 1)` and `(1, 0)`. An atom paired with a non-finite endpoint
    /// value is reported as [`Error::SingularEndpoint`].
    pub fn moment_integral<F: Fn(f64, f64) -> f64>(&self, f: F, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::DomainError(format!("tolerance must be positive, got {tol}")));
        }
        let mut total = 0.0;
        if self.atom0 > 0.0 {
            let v = f(0.0, 1.0);
            if !v.is_finite() {
                return Err(Error::SingularEndpoint { endpoint: 0.0 });
            }
            total += v * self.atom0;
        }
        if self.atom1 > 0.0 {
            let v = f(1.0, 0.0);
            if !v.is_finite() {
                return Err(Error::SingularEndpoint { endpoint: 1.0 });
            }
            total += v * self.atom1;
        }
        if !self.density.is_none() {
            total += self.density_integral(&f, tol)?.value;
        }
        Ok(total)
    }

    /// Integral of `f * density` alone, with its error estimate.
    pub fn density_integral<F: Fn(f64, f64) -> f64>(&self, f: F, tol: f64) -> Result<Estimate> {
        let density = &self.density;
        quadrature::integrate_unit(|x, xc| f(x, xc) * density.eval(x, xc), tol)
    }

    /// Sanity check of the density at a spread of interior points.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for i in 1..64 {
            let x = i as f64 / 64.0;
            let v = self.density.eval(x, 1.0 - x);
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidMeasure(format!(
                    "density is {v} at x = {x}; must be finite and nonnegative"
                )));
            }
        }
        let mass = self.total_mass(tol)?;
        if !mass.is_finite() {
            return Err(Error::InvalidMeasure("total mass is not finite".into()));
        }
        Ok(())
    }
}

fn check_atom(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidMeasure(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn validate_table(knots: &[(f64, f64)]) -> Result<()> {
    if knots.is_empty() {
        return Err(Error::InvalidMeasure("density table is empty".into()));
    }
    for w in knots.windows(2) {
        if !(w[1].0 >= w[0].0) {
            return Err(Error::InvalidMeasure("density table x values must be nondecreasing".into()));
        }
    }
    for &(x, v) in knots {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidMeasure(format!("table knot x = {x} outside [0, 1]")));
        }
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidMeasure(format!("table value {v} at x = {x} is negative")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::beta::beta as beta_fn;

    /// Integrand of a rate-table entry.
    fn rate_integrand(b: i32, k: i32) -> impl Fn(f64, f64) -> f64 {
        move |x, xc| x.powi(k - 2) * xc.powi(b - k)
    }

    #[test]
    fn total_mass_examples() {
        assert_eq!(LambdaMeasure::kingman(1.0).unwrap().total_mass(1e-10).unwrap(), 1.0);
        let u = LambdaMeasure::uniform().total_mass(1e-10).unwrap();
        assert!((u - 1.0).abs() < 1e-10);
        // Oracle: mpmath quadrature of the Beta(0.5, 1.5) density gives 1.
        let b = LambdaMeasure::beta(1.5).unwrap().total_mass(1e-10).unwrap();
        assert!((b - 1.0).abs() < 1e-10, "{b}");
    }

    #[test]
    fn beta_mass_across_parameter_range() {
        for &beta in &[0.1, 0.5, 1.0, 1.5, 1.9] {
            let m = LambdaMeasure::beta(beta).unwrap().total_mass(1e-10).unwrap();
            assert!((m - 1.0).abs() < 1e-10, "beta {beta}: {m}");
        }
    }

    #[test]
    fn kingman_rate_integrands() {
        let k = LambdaMeasure::kingman(1.0).unwrap();
        for b in 2..12 {
            assert_eq!(k.moment_integral(rate_integrand(b, 2), 1e-10).unwrap(), 1.0);
            for kk in 3..=b {
                assert_eq!(k.moment_integral(rate_integrand(b, kk), 1e-10).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn uniform_linear_moment() {
        // Oracle: antiderivative x - x^2/2 on [0, 1].
        let v = LambdaMeasure::uniform().moment_integral(|_, xc| xc, 1e-10).unwrap();
        assert!((v - 0.5).abs() < 1e-10);
    }

    #[test]
    fn beta_moments_match_beta_function() {
        for &beta in &[0.5, 1.5] {
            let m = LambdaMeasure::beta(beta).unwrap();
            for b in 2..=12 {
                for k in 2..=b {
                    let got = m.moment_integral(rate_integrand(b, k), 1e-10).unwrap();
                    let want = beta_fn(k as f64 - beta, (b - k) as f64 + beta) / beta_fn(2.0 - beta, beta);
                    assert!((got - want).abs() < 1e-10, "beta {beta} b {b} k {k}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn singular_endpoint_with_atom() {
        let k = LambdaMeasure::kingman(1.0).unwrap();
        let err = k.moment_integral(|x, _| 1.0 / x, 1e-10).unwrap_err();
        assert!(matches!(err, Error::SingularEndpoint { endpoint } if endpoint == 0.0));
        let a1 = LambdaMeasure::custom(0.0, 1.0, Density::None).unwrap();
        let err = a1.moment_integral(|_, xc| 1.0 / xc, 1e-10).unwrap_err();
        assert!(matches!(err, Error::SingularEndpoint { endpoint } if endpoint == 1.0));
    }

    #[test]
    fn non_integrable_custom_density() {
        let m = LambdaMeasure::custom(0.0, 0.0, Density::Function(Arc::new(|x, _| 1.0 / x))).unwrap();
        assert!(matches!(m.total_mass(1e-10), Err(Error::QuadratureDivergence(_))));
    }

    #[test]
    fn table_density() {
        let m = LambdaMeasure::custom(0.0, 0.0, Density::Table(vec![(0.0, 0.0), (1.0, 2.0)])).unwrap();
        let mass = m.total_mass(1e-10).unwrap();
        assert!((mass - 1.0).abs() < 1e-10);
        assert!(LambdaMeasure::custom(0.0, 0.0, Density::Table(vec![(0.0, -1.0)])).is_err());
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(LambdaMeasure::beta(2.0).is_err());
        assert!(LambdaMeasure::beta(0.0).is_err());
        assert!(LambdaMeasure::kingman(-1.0).is_err());
        assert!(LambdaMeasure::custom(f64::NAN, 0.0, Density::None).is_err());
    }
}
