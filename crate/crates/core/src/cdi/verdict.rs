use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    ComesDown,
    StaysInfinite,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::ComesDown => "comes_down",
            Verdict::StaysInfinite => "stays_infinite",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    GammaSeries,
    PsiIntegral,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::GammaSeries => "gamma",
            Method::PsiIntegral => "psi",
        }
    }
}

/// Partial sum or partial integral up to a truncation level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPoint {
    pub level: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdiVerdict {
    pub method: Method,
    pub verdict: Verdict,
    pub evidence: Vec<TruncationPoint>,
    /// Per-octave decay ratios of the log-weighted increments; see [`classify`].
    pub decay_ratios: Vec<f64>,
}

/// Decay ratio at or below which the tail is declared summable.
pub const CONVERGENT_RATIO: f64 = 0.9;
/// Decay ratio at or above which the tail is declared divergent.
pub const DIVERGENT_RATIO: f64 = 0.97;
/// Number of trailing ratios that must agree.
const TRAILING: usize = 3;

/// Classify the trend of partial sums `S(N_i)` at increasing levels `N_i`.
///
/// Each increment is converted to a rate per unit `ln N` and multiplied by
/// `ln N` at the geometric midpoint. This maps the borderline divergent tail
/// `sum 1/(n ln n)` to a constant sequence, so a divergent series shows a
/// ratio near (or above) one, while a summable power-law tail decays
/// geometrically. Ratios are normalized per octave of `N`.
///
/// Returns the verdict and the ratios used. At least three levels are needed.
pub fn classify(evidence: &[TruncationPoint]) -> Result<(Verdict, Vec<f64>)> {
    if evidence.len() < 3 {
        return Err(Error::out_of_range(
            "truncation levels",
            format!("{} given, need at least 3", evidence.len()),
        ));
    }
    for w in evidence.windows(2) {
        if !(w[1].level > w[0].level && w[0].level > 1.0) {
            return Err(Error::out_of_range(
                "truncation levels",
                "levels must exceed 1 and increase strictly".to_string(),
            ));
        }
    }
    let weighted: Vec<(f64, f64)> = evidence
        .windows(2)
        .map(|w| {
            let span = (w[1].level / w[0].level).ln();
            let mid = 0.5 * (w[0].level.ln() + w[1].level.ln());
            (mid, mid * (w[1].value - w[0].value) / span)
        })
        .collect();
    let ratios: Vec<f64> = weighted
        .windows(2)
        .map(|w| {
            let octaves = (w[1].0 - w[0].0) / std::f64::consts::LN_2;
            let (prev, next) = (w[0].1, w[1].1);
            if next <= 0.0 {
                0.0
            } else if prev <= 0.0 {
                f64::INFINITY
            } else {
                (next / prev).powf(1.0 / octaves)
            }
        })
        .collect();
    let tail = &ratios[ratios.len().saturating_sub(TRAILING)..];
    let verdict = if tail.iter().all(|&r| r <= CONVERGENT_RATIO) {
        Verdict::ComesDown
    } else if tail.iter().all(|&r| r >= DIVERGENT_RATIO) {
        Verdict::StaysInfinite
    } else {
        Verdict::Inconclusive
    };
    Ok((verdict, ratios))
}

/// Whether two verdicts are compatible: equal, or at least one inconclusive.
pub fn verdicts_agree(a: Verdict, b: Verdict) -> bool {
    a == b || a == Verdict::Inconclusive || b == Verdict::Inconclusive
}
