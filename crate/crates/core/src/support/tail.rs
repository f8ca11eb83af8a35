use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streams::{Role, Stream, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub d: usize,
    pub t: f64,
    pub x: f64,
    pub paths: usize,
    pub probability: f64,
    pub stderr: f64,
}

/// Bisection levels used to resolve a step that ends near the threshold.
const REFINE_DEPTH: u32 = 6;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Whether a Brownian bridge from `a` to `b` over `dt` leaves the ball of
/// radius `x`, resolved by recursive midpoint sampling.
fn bridge_exits(a: &[f64], b: &[f64], dt: f64, x: f64, depth: u32, rng: &mut Stream) -> bool {
    if depth == 0 {
        return false;
    }
    let sd = (dt / 4.0).sqrt();
    let mid: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(p, q)| 0.5 * (p + q) + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    norm(&mid) > x
        || bridge_exits(a, &mid, dt / 2.0, x, depth - 1, rng)
        || bridge_exits(&mid, b, dt / 2.0, x, depth - 1, rng)
}

fn path_exits(d: usize, t: f64, x: f64, step: f64, rng: &mut Stream) -> bool {
    let steps = (t / step).ceil() as usize;
    let dt = t / steps as f64;
    let sd = dt.sqrt();
    // Steps ending this close to the sphere get bridge refinement.
    let near = 4.0 * sd;
    let mut pos = vec![0.0; d];
    let mut next = vec![0.0; d];
    for _ in 0..steps {
        for (n, p) in next.iter_mut().zip(&pos) {
            *n = p + sd * rng.sample::<f64, _>(StandardNormal);
        }
        if norm(&next) > x {
            return true;
        }
        if x - norm(&next).max(norm(&pos)) < near && bridge_exits(&pos, &next, dt, x, REFINE_DEPTH, rng) {
            return true;
        }
        std::mem::swap(&mut pos, &mut next);
    }
    false
}

/// Monte Carlo estimate of `P(sup_{s<=t} |B(s)| > x)` for `d`-dimensional
/// Brownian motion on a grid of size `step`, refined by bridge sampling
/// near the threshold.
pub fn brownian_sup_exceedance(d: usize, t: f64, x: f64, paths: usize, step: f64, seed: u64) -> Result<TailEstimate> {
    if d == 0 || !(t > 0.0) || !(x > 0.0) || !(step > 0.0) || paths == 0 {
        return Err(Error::DomainError(format!(
            "exceedance estimate needs d, t, x, step, paths > 0; got d = {d}, t = {t}, x = {x}, step = {step}, paths = {paths}"
        )));
    }
    let hits = (0..paths as u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = StreamKey::new(seed, i).stream(Role::Brownian);
            path_exits(d, t, x, step, &mut rng)
        })
        .count();
    let p = hits as f64 / paths as f64;
    Ok(TailEstimate {
        d,
        t,
        x,
        paths,
        probability: p,
        stderr: (p * (1.0 - p) / paths as f64).sqrt(),
    })
}
