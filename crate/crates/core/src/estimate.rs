//! Post-fit EL estimators: baseline point masses, fitted CDFs and
//! EL-weighted kernel density estimates.

use std::io::Write;

use crate::del::FitResult;
use crate::error::{Error, Result};
use crate::model::{BasisFn, MultiSample, Theta};

/// Fitted point masses `p_kj` of `F_0` on the pooled sample, plus the
/// tilted masses `exp(alpha_k + beta_k' q(x)) p` of every `F_k`.
#[derive(Debug, Clone)]
pub struct WeightedBaseline {
    theta_hat: Theta,
    /// Pooled points in ascending order.
    points: Vec<f64>,
    /// `masses[k][i]`: mass of `F_k` at `points[i]`; `masses[0]` is `p`.
    masses: Vec<Vec<f64>>,
    /// Running sums of `masses[k]`.
    cumulative: Vec<Vec<f64>>,
}

/// `p_kj = n^{-1} {sum_r lambda_r exp(alpha_r + beta_r' q(x_kj))}^{-1}`.
pub fn baseline_weights(fit: &FitResult, data: &MultiSample, basis: &BasisFn) -> Result<WeightedBaseline> {
    if !fit.converged {
        return Err(Error::Parameter("baseline weights need a converged fit".into()));
    }
    let theta = &fit.theta_hat;
    let (m, d) = (data.m(), basis.dim());
    theta.check_dims(m, d)?;
    let n = data.total() as f64;
    let lambda = data.proportions();
    let log_lambda: Vec<f64> = lambda.iter().map(|l| l.ln()).collect();

    let mut pooled: Vec<f64> = data.pooled_values();
    pooled.sort_by(f64::total_cmp);
    let mut q = vec![0.0; d];
    let mut log_phi = vec![0.0; m + 1];
    let mut masses = vec![Vec::with_capacity(pooled.len()); m + 1];
    for &x in &pooled {
        basis.eval_into(x, &mut q)?;
        for k in 1..=m {
            let beta = theta.beta_block(k);
            log_phi[k] = theta.alpha[k - 1] + beta.iter().zip(&q).map(|(b, v)| b * v).sum::<f64>();
        }
        let top = log_phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if top < 600.0 {
            // direct form; exact when every tilt is zero
            let s: f64 = (0..=m).map(|r| lambda[r] * log_phi[r].exp()).sum();
            let p = 1.0 / (n * s);
            for k in 0..=m {
                masses[k].push(log_phi[k].exp() * p);
            }
        } else {
            let zmax = (0..=m)
                .map(|r| log_lambda[r] + log_phi[r])
                .fold(f64::NEG_INFINITY, f64::max);
            let lse = zmax
                + (0..=m)
                    .map(|r| (log_lambda[r] + log_phi[r] - zmax).exp())
                    .sum::<f64>()
                    .ln();
            let log_p = -n.ln() - lse;
            for k in 0..=m {
                masses[k].push((log_phi[k] + log_p).exp());
            }
        }
    }
    let cumulative = masses
        .iter()
        .map(|w| {
            let mut acc = 0.0;
            w.iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect()
        })
        .collect();
    Ok(WeightedBaseline {
        theta_hat: theta.clone(),
        points: pooled,
        masses,
        cumulative,
    })
}

impl WeightedBaseline {
    pub fn theta_hat(&self) -> &Theta {
        &self.theta_hat
    }

    /// Pooled observations, ascending.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Baseline weights `p`, aligned with [`points`](Self::points).
    pub fn weights(&self) -> &[f64] {
        &self.masses[0]
    }

    pub fn m(&self) -> usize {
        self.masses.len() - 1
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k > self.m() {
            return Err(Error::IndexOutOfRange {
                index: k,
                max: self.m(),
            });
        }
        Ok(())
    }

    /// Masses `exp(alpha_k + beta_k' q(x)) p` of `F_k`.
    pub fn masses(&self, k: usize) -> Result<&[f64]> {
        self.check_k(k)?;
        Ok(&self.masses[k])
    }

    /// `sum_i exp(alpha_t + beta_t' q(x_i)) p_i - 1` for `t = 0..m`.
    pub fn lagrange_residuals(&self) -> Vec<f64> {
        self.masses.iter().map(|w| w.iter().sum::<f64>() - 1.0).collect()
    }

    /// `F_k(x)`: total mass of `F_k` on pooled points `<= x`.
    pub fn fitted_cdf(&self, k: usize, x: f64) -> Result<f64> {
        self.check_k(k)?;
        let idx = self.points.partition_point(|&v| v <= x);
        Ok(if idx == 0 {
            0.0
        } else {
            self.cumulative[k][idx - 1].min(1.0)
        })
    }

    /// Kish effective size `1 / sum w^2` of the masses of `F_k`.
    pub fn effective_size(&self, k: usize) -> Result<f64> {
        let w = self.masses(k)?;
        Ok(1.0 / w.iter().map(|v| v * v).sum::<f64>())
    }

    /// Weighted quantile of `F_k` (smallest point with `F_k >= p`).
    pub fn quantile(&self, k: usize, p: f64) -> Result<f64> {
        self.check_k(k)?;
        let total = *self.cumulative[k].last().expect("non-empty");
        let idx = self.cumulative[k].partition_point(|&c| c < p * total);
        Ok(self.points[idx.min(self.points.len() - 1)])
    }

    /// Silverman's rule on the weighted sample of `F_k`:
    /// `0.9 min(sd, IQR / 1.34) n_eff^{-1/5}`.
    pub fn silverman_bandwidth(&self, k: usize) -> Result<f64> {
        let w = self.masses(k)?;
        let total: f64 = w.iter().sum();
        let mean = w.iter().zip(&self.points).map(|(w, x)| w * x).sum::<f64>() / total;
        let var = w
            .iter()
            .zip(&self.points)
            .map(|(w, x)| w * (x - mean) * (x - mean))
            .sum::<f64>()
            / total;
        let sd = var.sqrt();
        let iqr = self.quantile(k, 0.75)? - self.quantile(k, 0.25)?;
        let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
        if !(spread > 0.0) {
            return Err(Error::InvalidData(
                "no spread in the weighted sample; pass a bandwidth".into(),
            ));
        }
        Ok(0.9 * spread * self.effective_size(k)?.powf(-0.2))
    }

    /// Gaussian-kernel density of `F_k` on `grid` with point masses of `F_k`.
    pub fn kernel_density(&self, k: usize, bandwidth: f64, grid: &[f64]) -> Result<Vec<f64>> {
        el_kernel_density(self, k, bandwidth, grid)
    }
}

pub fn fitted_cdf(wb: &WeightedBaseline, k: usize, x: f64) -> Result<f64> {
    wb.fitted_cdf(k, x)
}

pub fn el_kernel_density(wb: &WeightedBaseline, k: usize, bandwidth: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::Parameter(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let w = wb.masses(k)?;
    let norm = 1.0 / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    // only points within 40 bandwidths contribute above roundoff
    let reach = 40.0 * bandwidth;
    Ok(grid
        .iter()
        .map(|&x| {
            let lo = wb.points.partition_point(|&p| p < x - reach);
            let hi = wb.points.partition_point(|&p| p <= x + reach);
            (lo..hi)
                .map(|i| {
                    let z = (x - wb.points[i]) / bandwidth;
                    w[i] * (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect())
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Writes `x,value` rows with a header.
pub fn write_grid_csv<W: Write>(out: W, xs: &[f64], values: &[f64]) -> Result<()> {
    if xs.len() != values.len() {
        return Err(Error::DimensionMismatch {
            what: "grid values",
            expected: xs.len(),
            got: values.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "value"])?;
    for (x, v) in xs.iter().zip(values) {
        w.write_record([x.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
