//! Small goodness-of-fit toolkit used by the statistical checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Result of a chi-square test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquare {
    fn new(statistic: f64, dof: usize) -> Self {
        let p_value = if dof == 0 {
            1.0
        } else {
            ChiSquared::new(dof as f64).map_or(f64::NAN, |c| c.sf(statistic))
        };
        Self { statistic, dof, p_value }
    }

    pub fn passes(&self, level: f64) -> bool {
        self.p_value >= level
    }
}

/// Pool sparse cells so every pooled cell has expected count at least
/// `min_expected`. Cells are pooled in order of increasing expectation.
fn pooled_cells(expected: &[f64], min_expected: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..expected.len()).filter(|&i| expected[i] > 0.0).collect();
    order.sort_by(|&a, &b| expected[a].total_cmp(&expected[b]));
    let mut groups = Vec::new();
    let mut current = Vec::new();
    let mut acc = 0.0;
    for i in order {
        current.push(i);
        acc += expected[i];
        if acc >= min_expected {
            groups.push(std::mem::take(&mut current));
            acc = 0.0;
        }
    }
    if !current.is_empty() {
        match groups.last_mut() {
            Some(last) => last.extend(current),
            None => groups.push(current),
        }
    }
    groups
}

/// Two-sample chi-square test of homogeneity over the same categories.
/// Categories with fewer than 5 expected counts are pooled.
pub fn chi2_homogeneity(a: &[u64], b: &[u64]) -> ChiSquare {
    assert_eq!(a.len(), b.len(), "category counts must align");
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| (x + y) as f64).collect();
    let min_share = na.min(nb) / n;
    let expected_small: Vec<f64> = pooled.iter().map(|&c| c * min_share).collect();
    let groups = pooled_cells(&expected_small, 5.0);
    let mut stat = 0.0;
    for g in &groups {
        let (ga, gb) = g.iter().fold((0.0, 0.0), |(x, y), &i| (x + a[i] as f64, y + b[i] as f64));
        let total = ga + gb;
        let (ea, eb) = (total * na / n, total * nb / n);
        stat += (ga - ea).powi(2) / ea + (gb - eb).powi(2) / eb;
    }
    ChiSquare::new(stat, groups.len().saturating_sub(1))
}

/// Chi-square goodness of fit of `observed` counts to category
/// probabilities `probs`, which must sum to one.
pub fn chi2_goodness_of_fit(observed: &[u64], probs: &[f64]) -> ChiSquare {
    assert_eq!(observed.len(), probs.len(), "category counts must align");
    let n = observed.iter().sum::<u64>() as f64;
    let expected: Vec<f64> = probs.iter().map(|p| p * n).collect();
    let groups = pooled_cells(&expected, 5.0);
    let mut stat = 0.0;
    for g in &groups {
        let (o, e) = g.iter().fold((0.0, 0.0), |(o, e), &i| (o + observed[i] as f64, e + expected[i]));
        stat += (o - e).powi(2) / e;
    }
    // Observations in zero-probability cells make the fit impossible.
    let stray: u64 = (0..observed.len()).filter(|&i| probs[i] <= 0.0).map(|i| observed[i]).sum();
    if stray > 0 {
        stat = f64::INFINITY;
    }
    ChiSquare::new(stat, groups.len().saturating_sub(1))
}

/// Result of a Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KolmogorovSmirnov {
    pub statistic: f64,
    pub p_value: f64,
}

impl KolmogorovSmirnov {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value >= level
    }
}

/// Asymptotic Kolmogorov survival function `P(K > x)`.
fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * x * x).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> KolmogorovSmirnov {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let en = n.sqrt();
    KolmogorovSmirnov {
        statistic: d,
        p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d),
    }
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KolmogorovSmirnov {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    KolmogorovSmirnov {
        statistic: d,
        p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d),
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ordinary least-squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; `NaN` with fewer than three points.
    pub slope_stderr: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let slope_stderr = if x.len() > 2 && sxx > 0.0 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    LinearFit {
        slope,
        intercept,
        slope_stderr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_are_homogeneous() {
        let r = chi2_homogeneity(&[100, 200, 300], &[100, 200, 300]);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 2);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn different_samples_are_rejected() {
        let r = chi2_homogeneity(&[500, 500], &[300, 700]);
        assert!(!r.passes(0.01));
    }

    #[test]
    fn goodness_of_fit_statistic() {
        // Oracle: (60-50)^2/50 + (40-50)^2/50 = 4, one degree of freedom.
        let r = chi2_goodness_of_fit(&[60, 40], &[0.5, 0.5]);
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert!((r.p_value - 0.04550026389635842).abs() < 1e-9);
        assert!(chi2_goodness_of_fit(&[10, 1], &[1.0, 0.0]).statistic.is_infinite());
    }

    #[test]
    fn sparse_cells_are_pooled() {
        let r = chi2_goodness_of_fit(&[50, 48, 1, 1], &[0.5, 0.48, 0.01, 0.01]);
        assert_eq!(r.dof, 1);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Oracle: scipy.special.kolmogorov.
        assert!((kolmogorov_sf(1.0) - 0.26999967167735456).abs() < 1e-12);
        assert!((kolmogorov_sf(1.36) - 0.049485876755377876).abs() < 1e-12);
    }

    #[test]
    fn ks_accepts_uniform_grid() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(r.statistic <= 0.0005 + 1e-12);
        assert!(r.passes(0.5));
        let shifted: Vec<f64> = xs.iter().map(|x| x * 0.8).collect();
        assert!(!ks_two_sample(&xs, &shifted).passes(0.01));
        assert!(ks_two_sample(&xs, &xs).passes(0.99));
    }

    #[test]
    fn mean_and_fit() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // Sample sd sqrt(5/3), divided by sqrt(4).
        assert!((se - 0.6454972243679028).abs() < 1e-12);
        let fit = linear_fit(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]);
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!(fit.slope_stderr.abs() < 1e-12);
    }
}
