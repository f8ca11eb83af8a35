use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{distance, modulus_h, theory_constant};
use crate::error::{Error, Result};
use crate::lookdown::{dislocation, LookdownTrajectory};
use crate::stats::linear_fit;

/// Log-log growth of the envelope across scales at or below this is read as
/// bounded.
const BOUNDED_TREND: f64 = 0.1;

/// `j T / 2^depth`, computed so that equal dyadic times agree bit for bit
/// across depths.
pub fn dyadic_time(horizon: f64, j: u64, depth: u32) -> f64 {
    j as f64 * horizon / 2f64.powi(depth as i32)
}

/// All dyadic times of the given depth in `[0, T]`.
pub fn dyadic_times(horizon: f64, depth: u32) -> Vec<f64> {
    (0..=1u64 << depth).map(|j| dyadic_time(horizon, j, depth)).collect()
}

fn common_shape(trajs: &[LookdownTrajectory]) -> Result<(f64, usize, usize)> {
    let first = trajs
        .first()
        .ok_or_else(|| Error::out_of_range("trajectory set", "no trajectories"))?;
    if let Some(t) = trajs.iter().find(|t| t.horizon != first.horizon || t.d != first.d) {
        return Err(Error::out_of_range(
            "trajectory set",
            format!("mixed horizons or dimensions: ({}, {}) vs ({}, {})", first.horizon, first.d, t.horizon, t.d),
        ));
    }
    Ok((first.horizon, first.d, first.n))
}

fn trend_slope(scales: &[f64], values: &[f64]) -> f64 {
    if values.iter().any(|v| !(*v > 0.0)) {
        return 0.0;
    }
    let x: Vec<f64> = scales.iter().map(|s| -s.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    linear_fit(&x, &y).slope
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRatio {
    pub replicate: usize,
    pub r: f64,
    pub s: f64,
    /// `H(r, s) / h(s - r)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusScale {
    pub depth: u32,
    pub delta: f64,
    /// Largest ratio over pairs and replicates.
    pub c_hat: f64,
    /// Largest ratio over pairs, per replicate.
    pub per_replicate: Vec<f64>,
    /// Share of replicates whose largest ratio is below the theory constant.
    pub pass_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub c_theory: f64,
    pub pairs: Vec<PairRatio>,
    pub scales: Vec<ModulusScale>,
    /// Log-log slope of `c_hat` against `1 / delta`.
    pub trend_slope: f64,
    pub bounded_trend: bool,
}

impl ModulusReport {
    /// Share of replicates whose ratio stays below the theory constant at
    /// every scale with depth in `depths`.
    pub fn all_scales_pass_fraction(&self, depths: std::ops::RangeInclusive<u32>) -> f64 {
        let rows: Vec<&ModulusScale> = self.scales.iter().filter(|s| depths.contains(&s.depth)).collect();
        let reps = rows.first().map_or(0, |r| r.per_replicate.len());
        if reps == 0 {
            return 0.0;
        }
        let ok = (0..reps)
            .filter(|&i| rows.iter().all(|r| r.per_replicate[i] < self.c_theory))
            .count();
        ok as f64 / reps as f64
    }

    /// Join reports over disjoint replicate batches, renumbering replicates
    /// in the order given.
    pub fn combine(parts: Vec<ModulusReport>) -> Result<ModulusReport> {
        let mut parts = parts.into_iter();
        let mut all = parts
            .next()
            .ok_or_else(|| Error::out_of_range("modulus reports", "nothing to combine"))?;
        for part in parts {
            let same_grid = part.scales.len() == all.scales.len()
                && part.scales.iter().zip(&all.scales).all(|(a, b)| a.depth == b.depth && a.delta == b.delta);
            if (part.n, part.d, part.alpha) != (all.n, all.d, all.alpha) || !same_grid {
                return Err(Error::out_of_range("modulus reports", "reports differ in shape or grid"));
            }
            let offset = all.scales[0].per_replicate.len();
            all.pairs.extend(part.pairs.into_iter().map(|p| PairRatio {
                replicate: p.replicate + offset,
                ..p
            }));
            for (mine, theirs) in all.scales.iter_mut().zip(part.scales) {
                mine.per_replicate.extend(theirs.per_replicate);
            }
        }
        for scale in &mut all.scales {
            scale.c_hat = scale.per_replicate.iter().copied().fold(0.0, f64::max);
            let pass = scale.per_replicate.iter().filter(|&&c| c < all.c_theory).count();
            scale.pass_fraction = pass as f64 / scale.per_replicate.len() as f64;
        }
        let deltas: Vec<f64> = all.scales.iter().map(|s| s.delta).collect();
        let c_hats: Vec<f64> = all.scales.iter().map(|s| s.c_hat).collect();
        all.trend_slope = trend_slope(&deltas, &c_hats);
        all.bounded_trend = all.trend_slope <= BOUNDED_TREND;
        Ok(all)
    }
}

/// Dislocation ratios `H(r, r + delta) / h(delta)` over consecutive dyadic
/// pairs at every depth up to `grid_depth` with `delta <= 1/e`.
///
/// Every trajectory must be sampled on the dyadic grid of depth
/// `grid_depth` (see [`dyadic_times`]).
pub fn modulus_envelope(trajs: &[LookdownTrajectory], grid_depth: u32, alpha: f64) -> Result<ModulusReport> {
    let (horizon, d, n) = common_shape(trajs)?;
    if !(alpha > 0.0) {
        return Err(Error::DomainError(format!("alpha must be positive, got {alpha}")));
    }
    let depths: Vec<u32> = (0..=grid_depth)
        .filter(|&k| dyadic_time(horizon, 1, k) <= (-1.0f64).exp())
        .collect();
    if depths.len() < 3 {
        return Err(Error::GridTooCoarse(depths.len()));
    }
    let c_theory = theory_constant(d, alpha);
    let per_traj: Vec<Vec<PairRatio>> = trajs
        .par_iter()
        .enumerate()
        .map(|(rep, traj)| {
            let mut out = Vec::new();
            for &k in &depths {
                let delta = dyadic_time(horizon, 1, k);
                let h = modulus_h(delta)?;
                for j in 0..1u64 << k {
                    let (r, s) = (dyadic_time(horizon, j, k), dyadic_time(horizon, j + 1, k));
                    let ratio = dislocation(traj, r, s).map_err(|e| e.in_replicate(rep))? / h;
                    out.push(PairRatio { replicate: rep, r, s, ratio });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut scales = Vec::with_capacity(depths.len());
    let mut offset = 0;
    for &k in &depths {
        let count = 1usize << k;
        let per_replicate: Vec<f64> = per_traj
            .iter()
            .map(|pairs| pairs[offset..offset + count].iter().map(|p| p.ratio).fold(0.0, f64::max))
            .collect();
        offset += count;
        let c_hat = per_replicate.iter().copied().fold(0.0, f64::max);
        let pass = per_replicate.iter().filter(|&&c| c < c_theory).count();
        scales.push(ModulusScale {
            depth: k,
            delta: dyadic_time(horizon, 1, k),
            c_hat,
            pass_fraction: pass as f64 / trajs.len() as f64,
            per_replicate,
        });
    }
    let deltas: Vec<f64> = scales.iter().map(|s| s.delta).collect();
    let c_hats: Vec<f64> = scales.iter().map(|s| s.c_hat).collect();
    let trend_slope = trend_slope(&deltas, &c_hats);
    Ok(ModulusReport {
        n,
        d,
        alpha,
        c_theory,
        pairs: per_traj.into_iter().flatten().collect(),
        scales,
        trend_slope,
        bounded_trend: trend_slope <= BOUNDED_TREND,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub dt: f64,
    /// Smallest `c` with every point at `t + dt` within `c h(dt)` of the
    /// cloud at `t`, per replicate. Zero when `dt = 0`.
    pub required: Vec<f64>,
    pub max_required: f64,
    pub pass_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub t: f64,
    pub alpha: f64,
    pub c_theory: f64,
    pub rows: Vec<GrowthRow>,
}

fn farthest_from(cloud: &[f64], points: &[f64], d: usize) -> f64 {
    points
        .chunks_exact(d)
        .map(|p| {
            cloud
                .chunks_exact(d)
                .map(|q| distance(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// How far the support spreads in time `dt` after `t`, in units of `h(dt)`.
pub fn support_growth_check(trajs: &[LookdownTrajectory], t: f64, dt_grid: &[f64], alpha: f64) -> Result<GrowthReport> {
    let (horizon, d, _) = common_shape(trajs)?;
    if let Some(bad) = dt_grid.iter().find(|&&dt| !(dt >= 0.0) || t + dt > horizon || t < 0.0) {
        return Err(Error::out_of_range("growth step", format!("t = {t}, dt = {bad} leaves [0, {horizon}]")));
    }
    let mut rows = Vec::with_capacity(dt_grid.len());
    let c_theory = theory_constant(d, alpha);
    for &dt in dt_grid {
        let h = if dt == 0.0 { 1.0 } else { modulus_h(dt)? };
        let required: Vec<f64> = trajs
            .par_iter()
            .enumerate()
            .map(|(rep, traj)| {
                let inner = || -> Result<f64> {
                    let (before, after) = (traj.snapshot(t)?, traj.snapshot(t + dt)?);
                    Ok(farthest_from(&before.positions, &after.positions, d) / h)
                };
                inner().map_err(|e| e.in_replicate(rep))
            })
            .collect::<Result<_>>()?;
        let max_required = required.iter().copied().fold(0.0, f64::max);
        let pass = required.iter().filter(|&&c| c < c_theory).count();
        rows.push(GrowthRow {
            dt,
            pass_fraction: pass as f64 / trajs.len() as f64,
            max_required,
            required,
        });
    }
    Ok(GrowthReport { t, alpha, c_theory, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusRow {
    pub t: f64,
    /// `sup_{u <= t} r(u) / h(t)` per replicate, with `r(u)` the largest
    /// distance from the origin at time `u` and `u` on the grid.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub alpha: f64,
    pub c_theory: f64,
    /// Rows in the order of the supplied grid (decreasing `t`).
    pub rows: Vec<RadiusRow>,
    /// Share of replicates whose ratio stays below the theory constant on
    /// the whole grid.
    pub bounded_fraction: f64,
}

impl RadiusReport {
    /// Join reports over disjoint replicate batches on the same grid.
    pub fn combine(parts: Vec<RadiusReport>) -> Result<RadiusReport> {
        let mut parts = parts.into_iter();
        let mut all = parts
            .next()
            .ok_or_else(|| Error::out_of_range("radius reports", "nothing to combine"))?;
        for part in parts {
            let same_grid = part.rows.len() == all.rows.len() && part.rows.iter().zip(&all.rows).all(|(a, b)| a.t == b.t);
            if part.alpha != all.alpha || part.c_theory != all.c_theory || !same_grid {
                return Err(Error::out_of_range("radius reports", "reports differ in shape or grid"));
            }
            for (mine, theirs) in all.rows.iter_mut().zip(part.rows) {
                mine.ratios.extend(theirs.ratios);
                mine.max_ratio = mine.max_ratio.max(theirs.max_ratio);
            }
        }
        let reps = all.rows.first().map_or(0, |r| r.ratios.len());
        let bounded = (0..reps)
            .filter(|&i| all.rows.iter().all(|r| r.ratios[i] < all.c_theory))
            .count();
        all.bounded_fraction = bounded as f64 / reps.max(1) as f64;
        Ok(all)
    }
}

/// Spread of a process started at the origin, in units of `h(t)`, as `t`
/// decreases to zero.
pub fn radius_profile(trajs: &[LookdownTrajectory], t_grid: &[f64], alpha: f64) -> Result<RadiusReport> {
    let (_, d, _) = common_shape(trajs)?;
    if trajs.iter().any(|t| !t.started_at_origin) {
        return Err(Error::WrongInitialization);
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::out_of_range("radius grid", "times must be strictly decreasing"));
    }
    let scale: Vec<f64> = t_grid.iter().map(|&t| modulus_h(t)).collect::<Result<_>>()?;
    let per_rep: Vec<Vec<f64>> = trajs
        .par_iter()
        .enumerate()
        .map(|(rep, traj)| {
            let radii: Vec<f64> = t_grid
                .iter()
                .map(|&t| {
                    let snap = traj.snapshot(t)?;
                    Ok(snap
                        .positions
                        .chunks_exact(d)
                        .map(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt())
                        .fold(0.0, f64::max))
                })
                .collect::<Result<_>>()
                .map_err(|e: Error| e.in_replicate(rep))?;
            // Running sup from the smallest time upward.
            let mut sup = 0.0f64;
            let mut ratios = vec![0.0; radii.len()];
            for i in (0..radii.len()).rev() {
                sup = sup.max(radii[i]);
                ratios[i] = sup / scale[i];
            }
            Ok(ratios)
        })
        .collect::<Result<_>>()?;
    let c_theory = theory_constant(d, alpha);
    let rows = t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let ratios: Vec<f64> = per_rep.iter().map(|r| r[i]).collect();
            RadiusRow {
                t,
                max_ratio: ratios.iter().copied().fold(0.0, f64::max),
                ratios,
            }
        })
        .collect();
    let bounded = per_rep.iter().filter(|r| r.iter().all(|&x| x < c_theory)).count();
    Ok(RadiusReport {
        alpha,
        c_theory,
        rows,
        bounded_fraction: bounded as f64 / trajs.len() as f64,
    })
}
