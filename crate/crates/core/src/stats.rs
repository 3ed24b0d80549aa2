//! Small statistics toolkit: Wilson intervals, Pearson chi-square tests and
//! correlations.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `hits` successes out of `n`.
pub fn wilson(hits: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = hits as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if hits == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if hits == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Binomial proportion with its 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub hits: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Proportion {
    pub fn new(hits: u64, trials: u64) -> Self {
        let (ci_lo, ci_hi) = wilson(hits, trials, Z95);
        Proportion {
            hits,
            trials,
            p_hat: if trials == 0 { 0.0 } else { hits as f64 / trials as f64 },
            ci_lo,
            ci_hi,
        }
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_hi - self.ci_lo) / 2.0
    }

    /// Binomial standard error of the estimate.
    pub fn sigma(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        (self.p_hat * (1.0 - self.p_hat) / self.trials as f64).sqrt()
    }
}

/// Upper tail probability of a chi-square variable.
pub fn chi2_sf(stat: f64, df: u64) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64)
        .map(|d| d.sf(stat))
        .unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: u64,
    pub p_value: f64,
}

/// Pearson homogeneity test on an `r x c` table of counts (rows are
/// samples, columns categories). Empty rows and columns are dropped.
pub fn homogeneity(table: &[Vec<u64>]) -> ChiSquareTest {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let ncol = rows.first().map_or(0, |r| r.len());
    let col_tot: Vec<u64> = (0..ncol).map(|j| rows.iter().map(|r| r[j]).sum()).collect();
    let cols: Vec<usize> = (0..ncol).filter(|&j| col_tot[j] > 0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return ChiSquareTest {
            statistic: 0.0,
            df: 0,
            p_value: 1.0,
        };
    }
    let total: f64 = cols.iter().map(|&j| col_tot[j] as f64).sum();
    let mut stat = 0.0;
    for r in &rows {
        let rt: f64 = cols.iter().map(|&j| r[j] as f64).sum();
        for &j in &cols {
            let e = rt * col_tot[j] as f64 / total;
            let d = r[j] as f64 - e;
            stat += d * d / e;
        }
    }
    let df = ((rows.len() - 1) * (cols.len() - 1)) as u64;
    ChiSquareTest {
        statistic: stat,
        df,
        p_value: chi2_sf(stat, df),
    }
}

/// Chi-square test that two binomial proportions are equal.
pub fn two_proportions(a_hits: u64, a_n: u64, b_hits: u64, b_n: u64) -> ChiSquareTest {
    homogeneity(&[vec![a_hits, a_n - a_hits], vec![b_hits, b_n - b_hits]])
}

/// Sample Pearson correlation; `0` when either sample is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.is_empty() {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Approximate 95% interval of a correlation coefficient (Fisher z).
pub fn correlation_ci(r: f64, n: usize) -> (f64, f64) {
    if n <= 3 {
        return (-1.0, 1.0);
    }
    let z = r.clamp(-0.999_999, 0.999_999).atanh();
    let se = 1.0 / ((n - 3) as f64).sqrt();
    ((z - Z95 * se).tanh(), (z + Z95 * se).tanh())
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // 10/100: centre 0.1148..., interval [0.0552, 0.1744]
        let (lo, hi) = wilson(10, 100, Z95);
        assert!((lo - 0.05523).abs() < 1e-4, "{lo}");
        assert!((hi - 0.17437).abs() < 1e-4, "{hi}");
        let (lo, hi) = wilson(0, 50, Z95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.07135).abs() < 1e-4, "{hi}");
    }

    #[test]
    fn chi_square_two_by_two() {
        // statistic of [[10, 20], [20, 10]] is 60 * (100-400)^2 / (30^4) = 6.666...
        let t = two_proportions(10, 30, 20, 30);
        assert!((t.statistic - 20.0 / 3.0).abs() < 1e-9);
        assert_eq!(t.df, 1);
        assert!((t.p_value - 0.009823).abs() < 1e-5);
    }

    #[test]
    fn degenerate_tables_pass() {
        assert_eq!(homogeneity(&[vec![5, 0], vec![7, 0]]).p_value, 1.0);
        assert_eq!(homogeneity(&[vec![5, 5]]).df, 0);
    }

    #[test]
    fn correlation_basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[8.0, 6.0, 4.0, 2.0]) + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&x, &[1.0; 4]), 0.0);
    }
}
