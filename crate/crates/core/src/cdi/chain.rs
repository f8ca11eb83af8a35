use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalescent::{simulate_block_count, RateTable, StopReason};
use crate::error::{Error, Result};
use crate::stats::mean_stderr;
use crate::streams::{Role, StreamKey};

/// Rates of the block-count chain absorbed at `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockChainRates {
    pub m: usize,
    /// `mu[b][k]` for `m <= k < b`; indices below `m` hold zero.
    pub mu: Vec<Vec<f64>>,
    /// Decrease rate `gamma_{b,m}` of the absorbed chain, indexed by `b`.
    pub gamma_bm: Vec<f64>,
}

fn check_m(table: &RateTable, m: usize) -> Result<()> {
    if m < 2 || m >= table.max_blocks() {
        return Err(Error::out_of_range(
            "absorption level",
            format!("m = {m}, need 2 <= m < {}", table.max_blocks()),
        ));
    }
    Ok(())
}

/// `gamma_{b,m}`: each merger counts `k - 1` blocks lost, capped at `b - m`.
pub fn absorbed_decrease_rate(table: &RateTable, b: usize, m: usize) -> f64 {
    (2..=b)
        .map(|k| (k - 1).min(b - m) as f64 * table.merge_rate(b, k))
        .sum()
}

/// Transition rates of `#Pi` stopped at `m`, with both certificates checked:
/// rows sum to `lambda_b` and `gamma_{b,m} >= lambda_b`.
pub fn block_chain_rates(table: &RateTable, m: usize) -> Result<BlockChainRates> {
    check_m(table, m)?;
    let big = table.max_blocks();
    let mut mu = vec![Vec::new(); big + 1];
    let mut gamma_bm = vec![0.0; big + 1];
    for b in m + 1..=big {
        let mut row = vec![0.0; b];
        for j in 1..b - m {
            row[b - j] = table.merge_rate(b, j + 1);
        }
        row[m] = (b - m + 1..=b).map(|k| table.merge_rate(b, k)).sum();
        let lambda_b = table.total_rate(b)?;
        let sum: f64 = row.iter().sum();
        let slack = 3.0 * table.tol() * lambda_b.max(1.0);
        if (sum - lambda_b).abs() > slack {
            return Err(Error::DomainError(format!(
                "chain rates from {b} blocks sum to {sum}, expected {lambda_b}"
            )));
        }
        gamma_bm[b] = absorbed_decrease_rate(table, b, m);
        if gamma_bm[b] < lambda_b - slack {
            return Err(Error::DomainError(format!(
                "gamma_({b},{m}) = {} below lambda_{b} = {lambda_b}",
                gamma_bm[b]
            )));
        }
        mu[b] = row;
    }
    Ok(BlockChainRates { m, mu, gamma_bm })
}

/// Monte Carlo estimate of `T_m` together with the analytic upper bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmEstimate {
    pub n: usize,
    pub m: usize,
    pub mean: f64,
    pub stderr: f64,
    pub censored_fraction: f64,
    pub replicates: usize,
    pub horizon: f64,
    /// `sum_{b=m+1}^{n} 1 / gamma_{b,m}`.
    pub gamma_bound: f64,
    /// `sum_{b=m+1}^{n} 1 / lambda_b`.
    pub lambda_bound: f64,
}

fn bounds(table: &RateTable, m: usize, n: usize) -> Result<(f64, f64)> {
    let mut gamma_bound = 0.0;
    let mut lambda_bound = 0.0;
    for b in m + 1..=n {
        gamma_bound += 1.0 / absorbed_decrease_rate(table, b, m);
        lambda_bound += 1.0 / table.total_rate(b)?;
    }
    Ok((gamma_bound, lambda_bound))
}

/// Estimate `E T_m` for the coalescent started from `n` blocks.
///
/// Replicates that have not reached `m` blocks by the horizon are censored:
/// they are left out of the mean and counted in `censored_fraction`. The
/// default horizon is ten times `sum 1/lambda_b`.
pub fn estimate_tm(
    table: &RateTable,
    m: usize,
    n: usize,
    horizon: Option<f64>,
    replicates: usize,
    seed: u64,
) -> Result<TmEstimate> {
    if m == 0 || m > n || n > table.max_blocks() {
        return Err(Error::out_of_range(
            "T_m levels",
            format!("m = {m}, n = {n}, table covers up to {}", table.max_blocks()),
        ));
    }
    if replicates < 2 {
        return Err(Error::out_of_range("replicates", format!("{replicates}, need >= 2")));
    }
    if m == n {
        return Ok(TmEstimate {
            n,
            m,
            mean: 0.0,
            stderr: 0.0,
            censored_fraction: 0.0,
            replicates,
            horizon: horizon.unwrap_or(0.0),
            gamma_bound: 0.0,
            lambda_bound: 0.0,
        });
    }
    let (gamma_bound, lambda_bound) = bounds(table, m, n)?;
    let horizon = horizon.unwrap_or(10.0 * lambda_bound);
    let times: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            simulate_block_count(table, n, m, horizon, StreamKey::new(seed, r as u64))
                .map(|p| p.hitting_time(m))
                .map_err(|e| e.in_replicate(r))
        })
        .collect::<Result<_>>()?;
    let observed: Vec<f64> = times.iter().flatten().copied().collect();
    if observed.is_empty() {
        return Err(Error::AllCensored(replicates));
    }
    let (mean, stderr) = mean_stderr(&observed);
    Ok(TmEstimate {
        n,
        m,
        mean,
        stderr,
        censored_fraction: (replicates - observed.len()) as f64 / replicates as f64,
        replicates,
        horizon,
        gamma_bound,
        lambda_bound,
    })
}

/// `T_m` estimates across starting sizes, to gauge how far finite `n` is
/// from the infinite limit.
pub fn tm_sensitivity(
    table: &RateTable,
    m: usize,
    n_grid: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<Vec<TmEstimate>> {
    n_grid.iter().map(|&n| estimate_tm(table, m, n, None, replicates, seed)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalComparison {
    pub t: f64,
    /// Empirical `P(T^n_m >= t)`.
    pub coalescent: f64,
    /// Empirical `P(sum of independent Exp(lambda_i) >= t)`.
    pub urn: f64,
    /// Standard error of the difference.
    pub stderr: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrnReport {
    pub n: usize,
    pub m: usize,
    pub replicates: usize,
    pub rows: Vec<SurvivalComparison>,
    pub holds: bool,
}

/// Compare `T^n_m` with the sum of independent exponentials of rates
/// `lambda_{m+1}, ..., lambda_n`, which dominates it stochastically.
///
/// Dominance is accepted at `t` when the coalescent survival exceeds the
/// urn survival by at most three standard errors of the difference.
pub fn urn_dominance_check(
    table: &RateTable,
    n: usize,
    m: usize,
    replicates: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<UrnReport> {
    if m == 0 || m >= n || n > table.max_blocks() {
        return Err(Error::out_of_range(
            "urn levels",
            format!("m = {m}, n = {n}, table covers up to {}", table.max_blocks()),
        ));
    }
    let rates: Vec<f64> = (m + 1..=n).map(|b| table.total_rate(b)).collect::<Result<_>>()?;
    let pairs: Vec<(f64, f64)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let key = StreamKey::new(seed, r as u64);
            let path = simulate_block_count(table, n, m, f64::INFINITY, key).map_err(|e| e.in_replicate(r))?;
            let hit = match path.stop {
                StopReason::DegenerateRates => f64::INFINITY,
                _ => path.hitting_time(m).unwrap_or(f64::INFINITY),
            };
            let mut urn = key.stream(Role::Analysis);
            let total: f64 = rates
                .iter()
                .map(|&rate| if rate > 0.0 { urn.sample::<f64, _>(Exp1) / rate } else { f64::INFINITY })
                .sum();
            Ok((hit, total))
        })
        .collect::<Result<_>>()?;
    let reps = replicates as f64;
    let rows: Vec<SurvivalComparison> = t_grid
        .iter()
        .map(|&t| {
            let p1 = pairs.iter().filter(|p| p.0 >= t).count() as f64 / reps;
            let p2 = pairs.iter().filter(|p| p.1 >= t).count() as f64 / reps;
            let stderr = ((p1 * (1.0 - p1) + p2 * (1.0 - p2)) / reps).sqrt();
            SurvivalComparison {
                t,
                coalescent: p1,
                urn: p2,
                stderr,
                holds: p1 <= p2 + 3.0 * stderr,
            }
        })
        .collect();
    let holds = rows.iter().all(|r| r.holds);
    Ok(UrnReport {
        n,
        m,
        replicates,
        rows,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::LambdaMeasure;

    fn table(m: LambdaMeasure, b: usize) -> RateTable {
        RateTable::build(&m, b, 1e-10).unwrap()
    }

    #[test]
    fn kingman_chain_rates() {
        let r = block_chain_rates(&table(LambdaMeasure::kingman(1.0).unwrap(), 6), 2).unwrap();
        assert_eq!(r.mu[4][3], 6.0);
        assert_eq!(r.mu[4][2], 0.0);
        assert_eq!(r.gamma_bm[4], 6.0);
    }

    #[test]
    fn uniform_chain_rates() {
        // lambda_{4,2} = 1/3, lambda_{4,3} = 1/6, lambda_{4,4} = 1/3.
        let t = table(LambdaMeasure::uniform(), 6);
        let r = block_chain_rates(&t, 2).unwrap();
        assert!((r.mu[4][3] - 2.0).abs() < 1e-13);
        assert!((r.mu[4][2] - 1.0).abs() < 1e-13);
        assert!((r.mu[4].iter().sum::<f64>() - t.total_rate(4).unwrap()).abs() < 1e-13);
        assert!((t.total_rate(4).unwrap() - 3.0).abs() < 1e-13);
    }

    #[test]
    fn chain_one_above_absorption() {
        for m in [LambdaMeasure::uniform(), LambdaMeasure::beta(1.3).unwrap()] {
            let t = table(m, 12);
            for lvl in 2..11 {
                let r = block_chain_rates(&t, lvl).unwrap();
                let lambda = t.total_rate(lvl + 1).unwrap();
                assert!((r.gamma_bm[lvl + 1] - lambda).abs() < 1e-12 * lambda);
            }
        }
        assert!(block_chain_rates(&table(LambdaMeasure::uniform(), 6), 6).is_err());
        assert!(block_chain_rates(&table(LambdaMeasure::uniform(), 6), 1).is_err());
    }

    #[test]
    fn tm_at_start_is_zero() {
        let t = table(LambdaMeasure::kingman(1.0).unwrap(), 20);
        let e = estimate_tm(&t, 7, 7, None, 10, 1).unwrap();
        assert_eq!((e.mean, e.stderr), (0.0, 0.0));
        assert!(estimate_tm(&t, 8, 7, None, 10, 1).is_err());
        assert!(estimate_tm(&t, 2, 21, None, 10, 1).is_err());
    }

    #[test]
    fn kingman_tm_small() {
        // E T_2 from 10 blocks: sum_{b=3}^{10} 2 / (b (b - 1)) = 2/2 - 2/10.
        let t = table(LambdaMeasure::kingman(1.0).unwrap(), 10);
        let e = estimate_tm(&t, 2, 10, None, 20_000, 5).unwrap();
        assert!((e.mean - 0.8).abs() < 3.5 * e.stderr, "{e:?}");
        assert!((e.gamma_bound - 0.8).abs() < 1e-12);
        assert!((e.lambda_bound - 0.8).abs() < 1e-12);
    }

    #[test]
    fn censoring_is_reported() {
        let t = table(LambdaMeasure::kingman(1.0).unwrap(), 10);
        let e = estimate_tm(&t, 2, 10, Some(0.3), 2000, 5).unwrap();
        assert!(e.censored_fraction > 0.3 && e.censored_fraction < 1.0);
        let null = table(LambdaMeasure::null(), 10);
        assert!(matches!(estimate_tm(&null, 2, 10, Some(1.0), 5, 0), Err(Error::AllCensored(5))));
    }

    #[test]
    fn single_step_urn_coincides() {
        let t = table(LambdaMeasure::beta(1.5).unwrap(), 12);
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.02).collect();
        let r = urn_dominance_check(&t, 12, 11, 20_000, &grid, 3).unwrap();
        for row in &r.rows {
            assert!((row.coalescent - row.urn).abs() < 4.0 * row.stderr.max(1e-3), "{row:?}");
        }
    }
}
