use statrs::function::beta::ln_beta;
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::measures::{Family, LambdaMeasure};

/// Above this block count binomials are formed in log space.
const EXACT_BINOMIAL_LIMIT: usize = 60;

/// `C(n, k)` as a float; exact for `n <= 60`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= EXACT_BINOMIAL_LIMIT {
        let k = k.min(n - k);
        let mut c: u128 = 1;
        for i in 0..k {
            c = c * (n - i) as u128 / (i + 1) as u128;
        }
        c as f64
    } else {
        ln_binomial(n as u64, k as u64).exp()
    }
}

/// `C(b, k) * rate`, switching to log space for large `b`.
fn scaled_by_binomial(b: usize, k: usize, rate: f64) -> f64 {
    if rate == 0.0 {
        0.0
    } else if b <= EXACT_BINOMIAL_LIMIT {
        binomial(b, k) * rate
    } else {
        (ln_binomial(b as u64, k as u64) + rate.ln()).exp()
    }
}

/// Per-tuple merge rates `lambda[b][k]` for one block count `b`.
///
/// Index `k` runs over `0..=b`; entries below 2 are zero. Kingman, Beta and
/// Uniform measures use closed forms; everything else goes through
/// quadrature of `x^(k-2) (1-x)^(b-k)`.
pub fn rate_row(measure: &LambdaMeasure, b: usize, tol: f64) -> Result<Vec<f64>> {
    Ok(row_with_weights(measure, b, tol)?.0)
}

/// `ln lambda[b][k]` from a closed form, when the family has one.
fn closed_form_ln_rate(family: Family, b: usize, k: usize) -> Option<f64> {
    match family {
        Family::Beta(beta) => Some(ln_beta(k as f64 - beta, (b - k) as f64 + beta) - ln_beta(2.0 - beta, beta)),
        // (k-2)! (b-k)! / (b-1)!
        Family::Uniform => Some(ln_beta((k - 1) as f64, (b - k + 1) as f64)),
        Family::Kingman | Family::Custom => None,
    }
}

/// The rate row together with the merge weights `C(b, k) lambda[b][k]`.
///
/// Weights of closed-form families are formed in log space: for large `b`
/// a single `lambda[b][k]` underflows while the weight stays of order one.
fn row_with_weights(measure: &LambdaMeasure, b: usize, tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut row = vec![0.0; b + 1];
    let mut weights = vec![0.0; b + 1];
    if b < 2 {
        return Ok((row, weights));
    }
    let family = measure.family();
    for k in 2..=b {
        if let Some(ln_rate) = closed_form_ln_rate(family, b, k) {
            row[k] = ln_rate.exp();
            weights[k] = if b <= EXACT_BINOMIAL_LIMIT {
                binomial(b, k) * row[k]
            } else {
                (ln_binomial(b as u64, k as u64) + ln_rate).exp()
            };
            continue;
        }
        row[k] = match family {
            Family::Kingman => {
                let mut r = 0.0;
                if k == 2 {
                    r += measure.atom0();
                }
                if k == b {
                    r += measure.atom1();
                }
                r
            }
            _ => {
                let (p, q) = ((k - 2) as i32, (b - k) as i32);
                measure.moment_integral(|x, xc| x.powi(p) * xc.powi(q), tol)?
            }
        };
        weights[k] = scaled_by_binomial(b, k, row[k]);
    }
    Ok((row, weights))
}

/// One row of the rate table: everything about mergers from `b` blocks.
#[derive(Debug, Clone)]
pub struct RateRow {
    b: usize,
    /// `lambda[b][k]` for `k = 0..=b`.
    lambda: Vec<f64>,
    /// `C(b, k) lambda[b][k]`.
    weights: Vec<f64>,
    /// Cumulative weights over `k = 2..=b`.
    cdf: Vec<f64>,
    total: f64,
    decrease: f64,
}

impl RateRow {
    pub fn new(measure: &LambdaMeasure, b: usize, tol: f64) -> Result<Self> {
        let (lambda, weights) = row_with_weights(measure, b, tol)?;
        let mut cdf = Vec::with_capacity(b.saturating_sub(1));
        let (mut total, mut decrease) = (0.0, 0.0);
        for (k, &w) in weights.iter().enumerate().skip(2) {
            total += w;
            decrease += (k - 1) as f64 * w;
            cdf.push(total);
        }
        Ok(Self {
            b,
            lambda,
            weights,
            cdf,
            total,
            decrease,
        })
    }

    pub fn blocks(&self) -> usize {
        self.b
    }

    /// `lambda[b][k]`; zero outside `2 <= k <= b`.
    pub fn lambda(&self, k: usize) -> f64 {
        if k < 2 {
            0.0
        } else {
            self.lambda.get(k).copied().unwrap_or(0.0)
        }
    }

    /// `C(b, k) lambda[b][k]`: rate of a `k`-merger.
    pub fn weight(&self, k: usize) -> f64 {
        if k < 2 {
            0.0
        } else {
            self.weights.get(k).copied().unwrap_or(0.0)
        }
    }

    /// `lambda_b`, the total event rate.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// `gamma_b`, the rate at which the block count decreases.
    pub fn decrease(&self) -> f64 {
        self.decrease
    }

    /// Draw a merge size from `C(b, k) lambda[b][k] / lambda_b` using a
    /// uniform variate `u` in `[0, 1)`. Returns `None` when `lambda_b = 0`.
    pub fn sample_size(&self, u: f64) -> Option<usize> {
        if !(self.total > 0.0) {
            return None;
        }
        let i = self.cdf.partition_point(|&c| c <= u * self.total);
        // Skip zero-weight sizes that a rounding-level target could land on.
        let positive = |j: &usize| self.weights[j + 2] > 0.0;
        let i = (i..self.cdf.len())
            .find(positive)
            .or_else(|| (0..i).rev().find(positive))?;
        Some(i + 2)
    }
}

/// Merge rates `lambda[b][k]` for all `2 <= k <= b <= max_blocks`, with the
/// derived total and decrease rates.
#[derive(Debug, Clone)]
pub struct RateTable {
    max_blocks: usize,
    tol: f64,
    atom0: f64,
    atom1: f64,
    rows: Vec<RateRow>,
}

impl RateTable {
    /// Build the table and certify the consistency relation
    /// `lambda[b][k] = lambda[b+1][k] + lambda[b+1][k+1]` to `3 * tol`.
    pub fn build(measure: &LambdaMeasure, max_blocks: usize, tol: f64) -> Result<Self> {
        if max_blocks < 2 {
            return Err(Error::out_of_range("max block count", format!("B = {max_blocks}, need >= 2")));
        }
        if !(tol > 0.0) {
            return Err(Error::DomainError(format!("tolerance must be positive, got {tol}")));
        }
        let rows = (0..=max_blocks)
            .map(|b| RateRow::new(measure, b, tol))
            .collect::<Result<Vec<_>>>()?;
        let table = Self {
            max_blocks,
            tol,
            atom0: measure.atom0(),
            atom1: measure.atom1(),
            rows,
        };
        let defect = table.consistency_defect();
        if defect > 3.0 * tol {
            return Err(Error::QuadratureDivergence(format!(
                "rate table violates consistency by {defect:.3e} (> 3 * tol = {:.3e})",
                3.0 * tol
            )));
        }
        Ok(table)
    }

    pub fn max_blocks(&self) -> usize {
        self.max_blocks
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// `Lambda({0})` of the measure the table was built from.
    pub fn atom0(&self) -> f64 {
        self.atom0
    }

    /// `Lambda({1})` of the measure the table was built from.
    pub fn atom1(&self) -> f64 {
        self.atom1
    }

    /// `lambda[b][k]`; zero outside `2 <= k <= b`. Panics if `b > max_blocks`.
    pub fn lambda(&self, b: usize, k: usize) -> f64 {
        self.rows[b].lambda(k)
    }

    /// Row `b` of the table. Panics if `b > max_blocks`.
    pub fn row(&self, b: usize) -> &RateRow {
        &self.rows[b]
    }

    fn check_n(&self, n: usize) -> Result<&RateRow> {
        if n < 2 || n > self.max_blocks {
            Err(Error::out_of_range(
                "block count",
                format!("n = {n}, table covers 2..={}", self.max_blocks),
            ))
        } else {
            Ok(&self.rows[n])
        }
    }

    /// `lambda_n = sum_k C(n, k) lambda[n][k]`, the total coalescence rate.
    pub fn total_rate(&self, n: usize) -> Result<f64> {
        Ok(self.check_n(n)?.total)
    }

    /// `gamma_n = sum_k (k - 1) C(n, k) lambda[n][k]`, the rate at which the
    /// block count decreases.
    pub fn decrease_rate(&self, n: usize) -> Result<f64> {
        Ok(self.check_n(n)?.decrease)
    }

    /// `C(b, k) lambda[b][k]`: rate of a `k`-merger from `b` blocks.
    pub fn merge_rate(&self, b: usize, k: usize) -> f64 {
        self.rows.get(b).map_or(0.0, |r| r.weight(k))
    }

    /// See [`RateRow::sample_size`].
    pub fn sample_merge_size(&self, b: usize, u: f64) -> Option<usize> {
        self.rows.get(b)?.sample_size(u)
    }

    /// Largest violation of the consistency relation over the table.
    pub fn consistency_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for b in 2..self.max_blocks {
            let (row, next) = (&self.rows[b], &self.rows[b + 1]);
            for k in 2..=b {
                let d = (row.lambda(k) - next.lambda(k) - next.lambda(k + 1)).abs();
                worst = worst.max(d);
            }
        }
        worst
    }
}
