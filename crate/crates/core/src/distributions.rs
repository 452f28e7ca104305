//! Central and noncentral chi-square distribution functions, plus the
//! Kolmogorov–Smirnov helpers used by the calibration studies.

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let s = (std::f64::consts::PI * x).sin();
        return (std::f64::consts::PI / s).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `x^a e^{-x} / Γ(a+1)`, the recurrence step between `P(a, x)` and `P(a+1, x)`.
fn gamma_step(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (a * x.ln() - x - ln_gamma(a + 1.0)).exp()
}

fn lower_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn upper_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        lower_series(a, x).clamp(0.0, 1.0)
    } else {
        (1.0 - upper_fraction(a, x)).clamp(0.0, 1.0)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        (1.0 - lower_series(a, x)).clamp(0.0, 1.0)
    } else {
        upper_fraction(a, x).clamp(0.0, 1.0)
    }
}

fn check_df(df: f64) -> Result<()> {
    if !(df > 0.0) || !df.is_finite() {
        return Err(Error::Parameter(format!("degrees of freedom must be > 0, got {df}")));
    }
    Ok(())
}

/// Central chi-square distribution with `df` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquared {
    df: f64,
}

impl ChiSquared {
    pub fn new(df: f64) -> Result<Self> {
        check_df(df)?;
        Ok(Self { df })
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn cdf(&self, x: f64) -> f64 {
        gamma_p(0.5 * self.df, 0.5 * x.max(0.0))
    }

    /// Upper tail `1 - cdf(x)`, computed directly for accuracy at small p.
    pub fn sf(&self, x: f64) -> f64 {
        gamma_q(0.5 * self.df, 0.5 * x.max(0.0))
    }

    /// Bracketed bisection on the CDF.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!(
                "quantile probability must lie in [0, 1), got {p}"
            )));
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        let mut hi = self.df + 10.0 * (2.0 * self.df).sqrt() + 10.0;
        while self.cdf(hi) < p {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > 1e-12 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Noncentral chi-square with `df` degrees of freedom and noncentrality `ncp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoncentralChiSquared {
    df: f64,
    ncp: f64,
}

/// Poisson mass beyond the truncation point is kept below this.
const POISSON_TAIL: f64 = 1e-12;

impl NoncentralChiSquared {
    pub fn new(df: f64, ncp: f64) -> Result<Self> {
        check_df(df)?;
        if !(ncp >= 0.0) || !ncp.is_finite() {
            return Err(Error::Parameter(format!("noncentrality must be >= 0, got {ncp}")));
        }
        Ok(Self { df, ncp })
    }

    pub fn ncp(&self) -> f64 {
        self.ncp
    }

    /// Bracketed bisection on the CDF to `1e-10` absolute.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!(
                "quantile probability must lie in [0, 1), got {p}"
            )));
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        let mean = self.df + self.ncp;
        let mut hi = mean + 10.0 * (2.0 * (self.df + 2.0 * self.ncp)).sqrt() + 10.0;
        while self.cdf(hi) < p {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if self.ncp == 0.0 {
            return ChiSquared { df: self.df }.cdf(x);
        }
        self.mixture(x, false).clamp(0.0, 1.0)
    }

    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if self.ncp == 0.0 {
            return ChiSquared { df: self.df }.sf(x);
        }
        self.mixture(x, true).clamp(0.0, 1.0)
    }

    /// Sums Poisson(ncp/2)-weighted central terms outward from the Poisson mode,
    /// stepping the incomplete gamma function by recurrence.
    fn mixture(&self, x: f64, upper: bool) -> f64 {
        let lambda = 0.5 * self.ncp;
        let hx = 0.5 * x;
        let a0 = 0.5 * self.df;
        let mode = lambda.floor();
        let j0 = mode as u64;

        let log_w0 = -lambda + mode * lambda.ln() - ln_gamma(mode + 1.0);
        let w0 = log_w0.exp();
        let a_mode = a0 + mode;
        let term_at = |a: f64| {
            if upper {
                gamma_q(a, hx)
            } else {
                gamma_p(a, hx)
            }
        };
        let c0 = term_at(a_mode);
        let mut total = w0 * c0;

        // Upward: P(a+1) = P(a) - step(a), Q(a+1) = Q(a) + step(a).
        let mut w = w0;
        let mut c = c0;
        let mut step = gamma_step(a_mode, hx);
        let mut j = j0;
        loop {
            let a = a0 + j as f64;
            c = if upper { c + step } else { c - step };
            c = c.clamp(0.0, 1.0);
            step *= hx / (a + 1.0);
            j += 1;
            w *= lambda / j as f64;
            total += w * c;
            let ratio = lambda / (j as f64 + 1.0);
            if ratio < 1.0 && w * ratio / (1.0 - ratio) < POISSON_TAIL {
                break;
            }
            if w == 0.0 {
                break;
            }
        }

        // Downward: P(a-1) = P(a) + step(a-1).
        let mut w = w0;
        let mut c = c0;
        let mut j = j0;
        while j > 0 {
            let a = a0 + j as f64;
            let step_down = gamma_step(a - 1.0, hx);
            c = if upper { c - step_down } else { c + step_down };
            c = c.clamp(0.0, 1.0);
            w *= j as f64 / lambda;
            j -= 1;
            total += w * c;
            let ratio = j as f64 / lambda;
            if ratio < 1.0 && w * ratio / (1.0 - ratio) < POISSON_TAIL {
                break;
            }
        }
        total
    }
}

/// Kolmogorov distance `sup |F_N - F|` between a sample and a continuous CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov p-value for distance `d` at sample size `n`
/// (Stephens' small-sample adjustment).
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lam = (sn + 0.12 + 0.11 / sn) * d;
    if lam < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lam * lam).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test: `(distance, p_value)`.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let d = ks_distance(sample, cdf);
    (d, kolmogorov_pvalue(d, sample.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared as SChi, ContinuousCDF};
    use statrs::function::gamma::ln_gamma as s_ln_gamma;

    #[test]
    fn ln_gamma_matches_reference() {
        for &x in &[0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 55.5, 170.2, 1e4] {
            let ours = ln_gamma(x);
            let theirs = s_ln_gamma(x);
            assert!(
                (ours - theirs).abs() < 1e-12 * theirs.abs().max(1.0),
                "{x}: {ours} vs {theirs}"
            );
        }
    }

    #[test]
    fn chi2_cdf_matches_reference() {
        for &df in &[1.0, 2.0, 4.0, 7.0, 30.0] {
            let ours = ChiSquared::new(df).unwrap();
            let theirs = SChi::new(df).unwrap();
            for &x in &[0.01, 0.5, 1.0, 3.0, 5.99, 12.0, 40.0, 90.0] {
                assert!((ours.cdf(x) - theirs.cdf(x)).abs() < 1e-13, "df {df} x {x}");
                let sf = theirs.sf(x);
                assert!((ours.sf(x) - sf).abs() < 1e-13 + 1e-10 * sf, "df {df} x {x}");
            }
        }
    }

    #[test]
    fn chi2_quantile_two_df() {
        let q = ChiSquared::new(2.0).unwrap().quantile(0.95).unwrap();
        assert!((q - 5.99).abs() < 0.01);
        // closed form for df=2: -2 ln(1-p)
        assert!((q + 2.0 * 0.05f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn noncentral_reduces_to_central() {
        for &df in &[1.0, 2.0, 5.0] {
            let c = ChiSquared::new(df).unwrap();
            let nc = NoncentralChiSquared::new(df, 0.0).unwrap();
            for &x in &[0.1, 1.0, 4.0, 20.0] {
                assert!((c.cdf(x) - nc.cdf(x)).abs() < 1e-12);
            }
        }
    }

    /// Direct summation from j = 0 with fresh incomplete-gamma calls; independent
    /// of the recurrence used by the implementation.
    fn naive_ncx2_cdf(df: f64, ncp: f64, x: f64) -> f64 {
        let lam = ncp / 2.0;
        (0..400)
            .map(|j| {
                let jf = j as f64;
                let lw = -lam + jf * lam.ln() - s_ln_gamma(jf + 1.0);
                lw.exp() * SChi::new(df + 2.0 * jf).unwrap().cdf(x)
            })
            .sum()
    }

    #[test]
    fn noncentral_matches_naive_series() {
        for &(df, ncp) in &[(2.0, 10.29), (1.0, 0.3), (4.0, 1.8), (3.0, 55.0), (2.0, 150.0)] {
            let d = NoncentralChiSquared::new(df, ncp).unwrap();
            for &x in &[0.5, 2.0, 5.99, 15.0, 60.0, 180.0] {
                let expect = naive_ncx2_cdf(df, ncp, x);
                assert!((d.cdf(x) - expect).abs() < 1e-11, "df {df} ncp {ncp} x {x}");
                assert!((d.sf(x) - (1.0 - expect)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn example_one_power() {
        let crit = ChiSquared::new(2.0).unwrap().quantile(0.95).unwrap();
        let p = NoncentralChiSquared::new(2.0, 10.29).unwrap().sf(crit);
        assert!((p - 0.83).abs() < 0.005, "{p}");
    }

    #[test]
    fn noncentral_large_ncp_is_stable() {
        // mean df + ncp, sd sqrt(2 df + 4 ncp); far-tail values should be 0/1.
        let d = NoncentralChiSquared::new(2.0, 2e6).unwrap();
        assert!(d.cdf(1e6) < 1e-12);
        assert!(d.sf(3e6) < 1e-12);
        let mid = d.cdf(2e6 + 2.0);
        assert!((mid - 0.5).abs() < 0.01, "{mid}");
    }

    #[test]
    fn noncentral_quantile_inverts_cdf() {
        let d = NoncentralChiSquared::new(4.0, 1.8).unwrap();
        for &p in &[0.01, 0.3, 0.5, 0.95, 0.999] {
            let x = d.quantile(p).unwrap();
            assert!((naive_ncx2_cdf(4.0, 1.8, x) - p).abs() < 1e-9, "p {p}");
        }
        assert_eq!(d.quantile(0.0).unwrap(), 0.0);
        assert!(d.quantile(1.0).is_err());
    }

    #[test]
    fn ks_helpers() {
        let u: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let (d, p) = ks_test(&u, |x| x.clamp(0.0, 1.0));
        assert!(d <= 0.0005 + 1e-12);
        assert!(p > 0.99);
        let shifted: Vec<f64> = u.iter().map(|x| x * 0.5).collect();
        let (d, p) = ks_test(&shifted, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5).abs() < 1e-3);
        assert!(p < 1e-10);
    }
}
