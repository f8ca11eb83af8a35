//! Adaptive Gauss-Kronrod quadrature with geometric endpoint refinement.
//!
//! Integrals over the open unit interval are split into dyadic panels that
//! shrink toward both endpoints. Near `x = 1` the integrand is evaluated
//! through its complement `y = 1 - x`, so panels can reach `1e-300` without
//! losing the distance to the endpoint in rounding. The tail beyond the last
//! panel is extrapolated geometrically from the ratio of successive panels,
//! which is exact for power-law endpoint behaviour like `x^(1 - beta)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Subintervals allowed per adaptive call.
const MAX_SUBDIVISIONS: usize = 2000;
/// Dyadic panels per side; `2^-1022` is the smallest normal double.
const MAX_PANELS: usize = 1020;
/// Successive panel ratios above this are treated as non-decaying.
const MAX_TAIL_RATIO: f64 = 0.98;

/// Result of a quadrature call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 21-point Kronrod evaluation on `[a, b]`, QUADPACK error scaling.
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Panel> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_abs = fc.abs() * WGK[10];
    let mut res_g = 0.0;
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    if !res_k.is_finite() {
        return Err(Error::QuadratureDivergence(format!(
            "non-finite integrand on [{a:e}, {b:e}]"
        )));
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut error = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Panel { a, b, value, error })
}

/// Adaptive integration of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The target is floored at a few ulps of the integral, so a tiny `tol` on a
/// large integral still terminates.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Estimate> {
    if !(tol > 0.0) {
        return Err(Error::DomainError(format!("tolerance must be positive, got {tol}")));
    }
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let first = gk21(&f, a, b)?;
    let mut evaluations = 21;
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    while error > tol.max(64.0 * f64::EPSILON * value.abs()) {
        if heap.len() >= MAX_SUBDIVISIONS {
            return Err(Error::QuadratureDivergence(format!(
                "error {error:.3e} above tolerance {tol:.3e} after {MAX_SUBDIVISIONS} subdivisions on [{a:e}, {b:e}]"
            )));
        }
        let worst = heap.pop().expect("heap is never empty here");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            return Err(Error::QuadratureDivergence(format!(
                "interval [{:e}, {:e}] cannot be bisected further",
                worst.a, worst.b
            )));
        }
        let left = gk21(&f, worst.a, mid)?;
        let right = gk21(&f, mid, worst.b)?;
        evaluations += 42;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift of incremental updates.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(Estimate {
        value,
        error,
        evaluations,
    })
}

/// Integrate `f` over the open unit interval.
///
/// `f` is called as `f(x, 1 - x)` with both coordinates accurate, so
/// integrands singular at `1` should be written in terms of the second
/// argument. Integrable power-law singularities at either endpoint are
/// handled; a non-decaying endpoint contribution (for example `1/x`) yields
/// [`Error::QuadratureDivergence`].
pub fn integrate_unit<F: Fn(f64, f64) -> f64>(f: F, tol: f64) -> Result<Estimate> {
    if !(tol > 0.0) {
        return Err(Error::DomainError(format!("tolerance must be positive, got {tol}")));
    }
    let left = endpoint_side(|t| f(t, 1.0 - t), tol / 2.0, "0")?;
    let right = endpoint_side(|t| f(1.0 - t, t), tol / 2.0, "1")?;
    Ok(Estimate {
        value: left.value + right.value,
        error: left.error + right.error,
        evaluations: left.evaluations + right.evaluations,
    })
}

/// Integrate `g(t)` for `t` in `(0, 1/2]` with dyadic panels toward `t = 0`.
fn endpoint_side<G: Fn(f64) -> f64>(g: G, tol: f64, endpoint: &str) -> Result<Estimate> {
    let decay = std::f64::consts::FRAC_1_SQRT_2;
    let mut value = 0.0;
    let mut error = 0.0;
    let mut evaluations = 0;
    let mut history: [f64; 2] = [f64::NAN; 2];
    let mut hi = 0.5;
    for j in 1..=MAX_PANELS {
        let lo = 0.5 * hi;
        // Panel budgets sum to tol / 2 over all j.
        let budget = 0.5 * tol * (1.0 - decay) * decay.powi(j as i32 - 1);
        let panel = integrate(&g, lo, hi, budget.max(f64::MIN_POSITIVE))?;
        value += panel.value;
        error += panel.error;
        evaluations += panel.evaluations;
        let prev = history[1];
        history = [prev, panel.value];
        hi = lo;
        if j < 4 {
            continue;
        }
        let (a, b) = (history[0].abs(), history[1].abs());
        if a == 0.0 && b == 0.0 {
            return Ok(Estimate {
                value,
                error,
                evaluations,
            });
        }
        if a == 0.0 {
            continue;
        }
        let ratio = b / a;
        if ratio < MAX_TAIL_RATIO {
            let tail = history[1] * ratio / (1.0 - ratio);
            if tail.abs() <= tol / 8.0 {
                return Ok(Estimate {
                    value: value + tail,
                    error: error + 0.25 * tail.abs(),
                    evaluations,
                });
            }
        }
    }
    Err(Error::QuadratureDivergence(format!(
        "endpoint contribution at x = {endpoint} does not decay; integrand is likely not integrable"
    )))
}
