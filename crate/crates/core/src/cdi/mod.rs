//! Coming-down-from-infinity diagnostics.
//!
//! Two equivalent tests are offered: the series `sum 1/gamma_n` and the
//! integral of `1/psi`. Neither can be decided from finitely many terms, so
//! both return a trend classification with the partial sums attached.

mod chain;
mod conditions;
mod psi;
mod verdict;

pub use chain::{
    absorbed_decrease_rate, block_chain_rates, estimate_tm, tm_sensitivity, urn_dominance_check, BlockChainRates,
    SurvivalComparison, TmEstimate, UrnReport,
};
pub use conditions::{check_condition, Boundedness, Condition, ConditionReport, ScaledTail};
pub use psi::{cdi_psi_integral, default_psi_levels, psi};
pub use verdict::{classify, verdicts_agree, CdiVerdict, Method, TruncationPoint, Verdict, CONVERGENT_RATIO, DIVERGENT_RATIO};

use serde::{Deserialize, Serialize};

use crate::coalescent::RateTable;
use crate::error::{Error, Result};
use crate::measures::LambdaMeasure;

/// Classify with the series test: partial sums of `1/gamma_n` up to each
/// level in `levels`.
pub fn cdi_gamma_series(table: &RateTable, levels: &[usize]) -> Result<CdiVerdict> {
    if table.atom1() > 0.0 {
        return Err(Error::AtomAtOne(table.atom1()));
    }
    let mut evidence = Vec::with_capacity(levels.len());
    let (mut next, mut sum, mut previous) = (2, 0.0, 1);
    for &level in levels {
        if level <= previous || level > table.max_blocks() {
            return Err(Error::out_of_range(
                "series levels",
                format!("{level}: levels must increase within 2..={}", table.max_blocks()),
            ));
        }
        previous = level;
        while next <= level {
            sum += 1.0 / table.decrease_rate(next)?;
            next += 1;
        }
        evidence.push(TruncationPoint {
            level: level as f64,
            value: sum,
        });
    }
    let (verdict, decay_ratios) = classify(&evidence)?;
    Ok(CdiVerdict {
        method: Method::GammaSeries,
        verdict,
        evidence,
        decay_ratios,
    })
}

/// Default series levels: `2^6, 2^7, ..., 2^11`.
pub fn default_series_levels() -> Vec<usize> {
    (6..=11).map(|k| 1 << k).collect()
}

/// Both tests on one measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdiComparison {
    pub series: CdiVerdict,
    pub integral: CdiVerdict,
    pub agree: bool,
}

/// Run both tests with default levels and report whether they agree.
pub fn classify_measure(measure: &LambdaMeasure, tol: f64) -> Result<CdiComparison> {
    let levels = default_series_levels();
    let table = RateTable::build(measure, *levels.last().expect("levels are nonempty"), tol)?;
    let series = cdi_gamma_series(&table, &levels)?;
    let integral = cdi_psi_integral(measure, 1.0, &default_psi_levels(), tol)?;
    let agree = verdicts_agree(series.verdict, integral.verdict);
    Ok(CdiComparison { series, integral, agree })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Density;

    #[test]
    fn kingman_partial_sums_telescope() {
        let t = RateTable::build(&LambdaMeasure::kingman(1.0).unwrap(), 256, 1e-10).unwrap();
        let r = cdi_gamma_series(&t, &[16, 32, 64, 128, 256]).unwrap();
        for p in &r.evidence {
            assert!((p.value - (2.0 - 2.0 / p.level)).abs() < 1e-12);
        }
        assert_eq!(r.verdict, Verdict::ComesDown);
    }

    #[test]
    fn series_rejects_atom_at_one_and_bad_levels() {
        let m = LambdaMeasure::custom(1.0, 0.5, Density::None).unwrap();
        let t = RateTable::build(&m, 8, 1e-10).unwrap();
        assert!(matches!(cdi_gamma_series(&t, &[2, 4, 8]), Err(Error::AtomAtOne(_))));
        let t = RateTable::build(&LambdaMeasure::uniform(), 8, 1e-10).unwrap();
        assert!(cdi_gamma_series(&t, &[2, 4, 16]).is_err());
        assert!(cdi_gamma_series(&t, &[4, 4, 8]).is_err());
    }
}
