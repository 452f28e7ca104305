//! Classical competitors: one-way ANOVA and the Kruskal-Wallis rank-sum test.

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::distributions::ChiSquared;
use crate::error::{Error, Result};
use crate::infer::{Method, TestResult};
use crate::model::MultiSample;

/// One-way ANOVA F test with an `F(m, n - m - 1)` reference.
pub fn anova_test(data: &MultiSample) -> Result<TestResult> {
    let groups = data.n_samples();
    let n = data.total();
    if n <= groups {
        return Err(Error::InvalidData(format!(
            "ANOVA needs within-group degrees of freedom: {n} observations in {groups} groups"
        )));
    }
    let (df1, df2) = (groups - 1, n - groups);
    let grand = data.pooled_values().iter().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for s in data.samples() {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        ssb += s.len() as f64 * (mean - grand).powi(2);
        ssw += s.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    let (statistic, p_value) = if ssb == 0.0 {
        (0.0, 1.0)
    } else if ssw == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = (ssb / df1 as f64) / (ssw / df2 as f64);
        let dist = FisherSnedecor::new(df1 as f64, df2 as f64).map_err(|e| Error::Parameter(e.to_string()))?;
        (f, dist.sf(f))
    };
    Ok(TestResult {
        statistic,
        df: df1,
        p_value,
        method: Method::Anova,
        fits: Vec::new(),
    })
}

/// Kruskal-Wallis H with mid-ranks for ties, tie correction and a
/// chi-square(m) reference.
pub fn kruskal_wallis_test(data: &MultiSample) -> Result<TestResult> {
    let df = data.m();
    let mut pooled: Vec<(f64, usize)> = data.pooled().map(|(k, v)| (v, k)).collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pooled.len();
    let nf = n as f64;

    let mut rank_sums = vec![0.0; data.n_samples()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        for &(_, k) in &pooled[i..j] {
            rank_sums[k] += mid;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let correction = 1.0 - tie_term / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return Ok(TestResult {
            statistic: 0.0,
            df,
            p_value: 1.0,
            method: Method::KruskalWallis,
            fits: Vec::new(),
        });
    }
    let sizes = data.sizes();
    let s: f64 = rank_sums.iter().zip(&sizes).map(|(r, &nk)| r * r / nk as f64).sum();
    let h = ((12.0 / (nf * (nf + 1.0)) * s - 3.0 * (nf + 1.0)) / correction).max(0.0);
    Ok(TestResult {
        statistic: h,
        df,
        p_value: ChiSquared::new(df as f64)?.sf(h),
        method: Method::KruskalWallis,
        fits: Vec::new(),
    })
}
