use serde::{Deserialize, Serialize};

use super::chain::absorbed_decrease_rate;
use crate::coalescent::RateTable;
use crate::error::{Error, Result};
use crate::stats::linear_fit;

/// Which rate sequence the scaled tail sums use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// Tails of `1 / lambda_b`.
    A,
    /// Tails of `1 / gamma_{b,m}`.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundedness {
    Bounded,
    Unbounded,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledTail {
    pub m: usize,
    /// `m^alpha * sum_{b=m+1}^{B} 1/rate_b`.
    pub value: f64,
    /// `m^alpha` times a power-law estimate of the sum beyond the table.
    pub truncation_tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub alpha: f64,
    pub rows: Vec<ScaledTail>,
    /// Log-log slope of `value + truncation_tail` against `m`.
    pub growth_exponent: f64,
    pub verdict: Boundedness,
}

/// Growth exponents at or below this count as a plateau.
const BOUNDED_SLOPE: f64 = 0.1;
/// Growth exponents at or above this count as growth.
const UNBOUNDED_SLOPE: f64 = 0.25;

/// Sum of `1 / rate_b` for `b > B`, fitting `rate_b ~ c b^p` on the last
/// octave of the table. Infinite when `p <= 1`.
fn tail_beyond_table(rate: impl Fn(usize) -> f64, big: usize) -> f64 {
    let half = (big / 2).max(2);
    let (r_half, r_big) = (rate(half), rate(big));
    if !(r_half > 0.0 && r_big > 0.0) || half == big {
        return f64::INFINITY;
    }
    let p = (r_big / r_half).ln() / (big as f64 / half as f64).ln();
    if p <= 1.0 {
        f64::INFINITY
    } else {
        big as f64 / ((p - 1.0) * r_big)
    }
}

/// Scaled tail sums `s(m) = m^alpha sum_{b>m} 1/rate_b` over `m_grid`,
/// classified by how they grow with `m`.
pub fn check_condition(table: &RateTable, condition: Condition, alpha: f64, m_grid: &[usize]) -> Result<ConditionReport> {
    let big = table.max_blocks();
    if !(alpha > 0.0) {
        return Err(Error::DomainError(format!("alpha must be positive, got {alpha}")));
    }
    if m_grid.len() < 2 {
        return Err(Error::out_of_range("m grid", "need at least two values".to_string()));
    }
    if let Some(&bad) = m_grid.iter().find(|&&m| m < 2 || m >= big) {
        return Err(Error::out_of_range("m grid", format!("m = {bad}, need 2 <= m < {big}")));
    }
    let mut rows = Vec::with_capacity(m_grid.len());
    for &m in m_grid {
        let rate = |b: usize| match condition {
            Condition::A => table.total_rate(b).unwrap_or(0.0),
            Condition::B => absorbed_decrease_rate(table, b, m),
        };
        let sum: f64 = (m + 1..=big).map(|b| 1.0 / rate(b)).sum();
        let scale = (m as f64).powf(alpha);
        rows.push(ScaledTail {
            m,
            value: scale * sum,
            truncation_tail: scale * tail_beyond_table(rate, big),
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| (r.m as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| (r.value + r.truncation_tail).ln()).collect();
    let growth_exponent = if y.iter().all(|v| v.is_finite()) {
        linear_fit(&x, &y).slope
    } else {
        f64::INFINITY
    };
    let verdict = if growth_exponent <= BOUNDED_SLOPE {
        Boundedness::Bounded
    } else if growth_exponent >= UNBOUNDED_SLOPE {
        Boundedness::Unbounded
    } else {
        Boundedness::Inconclusive
    };
    Ok(ConditionReport {
        condition,
        alpha,
        rows,
        growth_exponent,
        verdict,
    })
}
