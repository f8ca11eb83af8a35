use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{distance, PointCloud};
use crate::error::{Error, Result};
use crate::lookdown::{empirical_support, LookdownTrajectory};
use crate::stats::linear_fit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    /// Box sizes, decreasing.
    pub scales: Vec<f64>,
    /// Occupied boxes at each size.
    pub counts: Vec<usize>,
    /// Slope of `ln N` against `ln(1/eps)`, clamped to `[0, d]`.
    pub slope: f64,
    /// 95% interval for the slope, clamped the same way.
    pub ci: (f64, f64),
}

/// `count` box sizes halving from half the cloud's extent (from 1/2 when
/// all points coincide).
pub fn dyadic_scales(cloud: &PointCloud, count: usize) -> Vec<f64> {
    let extent = cloud.extent();
    let top = if extent > 0.0 { extent / 2.0 } else { 0.5 };
    (0..count).map(|k| top / 2f64.powi(k as i32)).collect()
}

fn occupied_boxes(cloud: &PointCloud, lower: &[f64], upper: &[f64], eps: f64) -> usize {
    // The bounding box is closed: a point on its upper face joins the last
    // box instead of opening a new one.
    let last: Vec<i64> = lower.iter().zip(upper).map(|(o, u)| (((u - o) / eps).ceil() as i64 - 1).max(0)).collect();
    let cells: HashSet<Vec<i64>> = cloud
        .points()
        .map(|p| {
            p.iter()
                .zip(lower)
                .zip(&last)
                .map(|((x, o), &top)| (((x - o) / eps).floor() as i64).min(top))
                .collect()
        })
        .collect();
    cells.len()
}

/// Box-counting dimension from grid counts at the given sizes. Boxes are
/// anchored at the lower corner of the bounding box; dyadic sizes give
/// nested grids and counts that never decrease as boxes shrink.
pub fn box_counting_dimension(cloud: &PointCloud, scales: &[f64]) -> Result<DimensionEstimate> {
    if scales.len() < 4 {
        return Err(Error::InvalidScales(format!("need at least 4 scales, got {}", scales.len())));
    }
    if scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidScales("scales must be positive and finite".into()));
    }
    let mut scales = scales.to_vec();
    scales.sort_by(|a, b| b.total_cmp(a));
    scales.dedup();
    if scales.len() < 4 || scales[0] / scales[scales.len() - 1] < 4.0 {
        return Err(Error::InvalidScales("need 4 distinct scales spanning two octaves".into()));
    }
    let d = cloud.d();
    let bound = |axis: usize, pick: fn(f64, f64) -> f64, init: f64| cloud.points().map(|p| p[axis]).fold(init, pick);
    let lower: Vec<f64> = (0..d).map(|axis| bound(axis, f64::min, f64::INFINITY)).collect();
    let upper: Vec<f64> = (0..d).map(|axis| bound(axis, f64::max, f64::NEG_INFINITY)).collect();
    let counts: Vec<usize> = scales
        .par_iter()
        .map(|&eps| occupied_boxes(cloud, &lower, &upper, eps))
        .collect();
    if cloud.extent() == 0.0 {
        return Ok(DimensionEstimate {
            scales,
            counts,
            slope: 0.0,
            ci: (0.0, 0.0),
        });
    }
    let x: Vec<f64> = scales.iter().map(|s| -s.ln()).collect();
    let y: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let fit = linear_fit(&x, &y);
    let t = StudentsT::new(0.0, 1.0, (scales.len() - 2) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    let clamp = |v: f64| v.clamp(0.0, d as f64);
    Ok(DimensionEstimate {
        scales,
        counts,
        slope: clamp(fit.slope),
        ci: (clamp(fit.slope - t * fit.slope_stderr), clamp(fit.slope + t * fit.slope_stderr)),
    })
}

/// `count` equally spaced times `t0 + i (t1 - t0) / count` in `[t0, t1)`.
pub fn range_times(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| t0 + i as f64 * (t1 - t0) / count as f64).collect()
}

/// Union of the supports at [`range_times`] for one trajectory.
pub fn range_union(traj: &LookdownTrajectory, t0: f64, t1: f64, count: usize, replicate: usize) -> Result<PointCloud> {
    if !(0.0 <= t0 && t0 <= t1 && t1 <= traj.horizon) || count == 0 {
        return Err(Error::out_of_range(
            "range window",
            format!("[{t0}, {t1}) with {count} snapshots on [0, {}]", traj.horizon),
        ));
    }
    let times = range_times(t0, t1, count);
    let mut cloud = empirical_support(traj, times[0], replicate)?;
    for &t in &times[1..] {
        cloud.extend(&empirical_support(traj, t, replicate)?)?;
    }
    Ok(cloud.with_label(replicate, t0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMassProfile {
    pub index: usize,
    /// Fraction of the cloud within each radius, divided by
    /// `radius^exponent`.
    pub proxies: Vec<f64>,
    pub max_proxy: f64,
    /// The proxy at the smallest radius exceeds the one at the largest.
    pub increasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMassReport {
    pub radii: Vec<f64>,
    pub exponent: f64,
    pub points: Vec<PointMassProfile>,
    pub positive_fraction: f64,
    pub increasing_fraction: f64,
}

/// Scaled local mass of the empirical measure around up to `samples`
/// evenly spaced points of the cloud.
pub fn local_mass_profile(cloud: &PointCloud, radii: &[f64], exponent: f64, samples: usize) -> Result<LocalMassReport> {
    if cloud.len() < 2 {
        return Err(Error::DegenerateCloud("local mass needs at least two points".into()));
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidScales("radii must be positive and strictly decreasing".into()));
    }
    let total = cloud.len();
    let picks = samples.clamp(1, total);
    let points: Vec<PointMassProfile> = (0..picks)
        .into_par_iter()
        .map(|i| {
            let index = i * total / picks;
            let x = cloud.point(index);
            let dist: Vec<f64> = cloud.points().map(|y| distance(x, y)).collect();
            let proxies: Vec<f64> = radii
                .iter()
                .map(|&r| dist.iter().filter(|&&s| s <= r).count() as f64 / total as f64 / r.powf(exponent))
                .collect();
            PointMassProfile {
                index,
                max_proxy: proxies.iter().copied().fold(0.0, f64::max),
                increasing: proxies[proxies.len() - 1] > proxies[0],
                proxies,
            }
        })
        .collect();
    let share = |f: fn(&PointMassProfile) -> bool| points.iter().filter(|p| f(p)).count() as f64 / picks as f64;
    Ok(LocalMassReport {
        radii: radii.to_vec(),
        exponent,
        positive_fraction: share(|p| p.max_proxy > 0.0),
        increasing_fraction: share(|p| p.increasing),
        points,
    })
}
