//! Geometry of simulated supports: the modulus function, envelope constants,
//! box-counting dimension, radius and local-mass profiles, and the Brownian
//! tail estimate.

mod dimension;
mod envelope;
mod tail;

pub use dimension::{
    box_counting_dimension, dyadic_scales, local_mass_profile, range_times, range_union, DimensionEstimate,
    LocalMassReport, PointMassProfile,
};
pub use envelope::{
    dyadic_time, dyadic_times, modulus_envelope, radius_profile, support_growth_check, GrowthReport, GrowthRow,
    ModulusReport, ModulusScale, PairRatio, RadiusReport, RadiusRow,
};
pub use tail::{brownian_sup_exceedance, TailEstimate};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance of a point cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudLabel {
    pub replicate: usize,
    pub time: f64,
}

/// A nonempty multiset of finite points in `d` dimensions, stored flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    d: usize,
    coords: Vec<f64>,
    pub label: Option<CloudLabel>,
}

impl PointCloud {
    pub fn new(d: usize, coords: Vec<f64>) -> Result<Self> {
        if d == 0 || coords.is_empty() || !coords.len().is_multiple_of(d) {
            return Err(Error::out_of_range(
                "point cloud",
                format!("{} coordinates do not form a nonempty set of {d}-vectors", coords.len()),
            ));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::out_of_range("point cloud", "non-finite coordinate"));
        }
        Ok(Self { d, coords, label: None })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let d = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::out_of_range("point cloud", "points of mixed dimension"));
        }
        Self::new(d, points.concat())
    }

    pub fn with_label(mut self, replicate: usize, time: f64) -> Self {
        self.label = Some(CloudLabel { replicate, time });
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.d)
    }

    /// Append another cloud of the same dimension.
    pub fn extend(&mut self, other: &PointCloud) -> Result<()> {
        if other.d != self.d {
            return Err(Error::out_of_range("point cloud", format!("cannot join d = {} with d = {}", self.d, other.d)));
        }
        self.coords.extend_from_slice(&other.coords);
        Ok(())
    }

    /// Largest side of the axis-aligned bounding box.
    pub fn extent(&self) -> f64 {
        (0..self.d)
            .map(|axis| {
                let (lo, hi) = self
                    .points()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[axis]), hi.max(p[axis])));
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `h(t) = sqrt(t ln(1/t))` on `(0, 1)`.
pub fn modulus_h(t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::DomainError(format!("modulus function needs 0 < t < 1, got {t}")));
    }
    Ok((t * -t.ln()).sqrt())
}

/// Margin added to the infimum admissible first-stage constant.
pub const CONSTANT_MARGIN: f64 = 1e-6;

fn summed_to_tail(term: impl Fn(f64) -> f64) -> f64 {
    // Terms decay geometrically; stop once they fall under 1e-13 and the
    // remaining tail is below 1e-12.
    let mut sum = 0.0;
    let mut k = 1.0;
    loop {
        let t = term(k);
        sum += t;
        if t < 1e-13 {
            return sum;
        }
        k += 1.0;
    }
}

/// `sum_{l>=1} sqrt(2^(1-2l) l)`.
pub fn fine_scale_series() -> f64 {
    summed_to_tail(|l| (2f64.powf(1.0 - 2.0 * l) * l).sqrt())
}

/// `sum_{k>=1} sqrt(2^(1-k) k)`.
pub fn coarse_scale_series() -> f64 {
    summed_to_tail(|k| (2f64.powf(1.0 - k) * k).sqrt())
}

/// The smallest admissible first-stage constant plus [`CONSTANT_MARGIN`].
pub fn first_stage_constant(d: usize, alpha: f64) -> f64 {
    (2.0 * d as f64 * (3.0 / alpha + 1.0)).sqrt() + CONSTANT_MARGIN
}

/// Envelope constant for the modulus of continuity of the support in
/// dimension `d` when the coalescent comes down at speed exponent `alpha`.
pub fn theory_constant(d: usize, alpha: f64) -> f64 {
    2.0 * first_stage_constant(d, alpha) * (1.0 + fine_scale_series()) * (1.0 + coarse_scale_series())
}

/// Upper bound `sqrt(8 d^3 t / pi) / x * exp(-x^2 / (2 d t))` on
/// `P(sup_{s<=t} |B(s)| > x)` for `d`-dimensional Brownian motion, clamped
/// to `[0, 1]`.
pub fn brownian_tail_bound(d: usize, t: f64, x: f64) -> Result<f64> {
    if d == 0 || !(t > 0.0) || !(x > 0.0) || !t.is_finite() {
        return Err(Error::DomainError(format!("tail bound needs d >= 1, t > 0, x > 0; got d = {d}, t = {t}, x = {x}")));
    }
    let d = d as f64;
    let bound = (8.0 * d.powi(3) * t / std::f64::consts::PI).sqrt() / x * (-x * x / (2.0 * d * t)).exp();
    Ok(bound.clamp(0.0, 1.0))
}
