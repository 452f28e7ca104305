//! Data generation and the Monte Carlo studies: null calibration, local
//! alternatives and power comparisons against ANOVA and Kruskal-Wallis.

mod competitors;
mod config;
mod study;

pub use competitors::{anova_test, kruskal_wallis_test};
pub use config::{
    builtin_config, builtin_names, DistSpec, LocalAlternativeConfig, PopulationSpec, Scenario, StudyConfig,
    StudyMethod, DEFAULT_PERM_REPS, DEFAULT_SEED,
};
pub use study::{
    run_local_alternative_study, run_null_study, run_power_study, write_power_csv, write_qq_csv, LocalAlternativeStudy,
    NullStudy, PowerRow, PowerStudy,
};

use crate::error::Result;
use crate::model::MultiSample;
use crate::seeding::stream_rng;

/// Draws one sample per population; population `k` uses the stream
/// `(seed, k)`.
pub fn sample_family(pops: &[PopulationSpec], seed: u64) -> Result<MultiSample> {
    sample_on_path(pops, seed, &[])
}

/// Draws with streams `(seed, prefix..., k)`, so any replicate can be
/// regenerated on its own.
pub(crate) fn sample_on_path(pops: &[PopulationSpec], seed: u64, prefix: &[u64]) -> Result<MultiSample> {
    let mut path = prefix.to_vec();
    path.push(0);
    let mut samples = Vec::with_capacity(pops.len());
    for (k, p) in pops.iter().enumerate() {
        p.validate()?;
        *path.last_mut().unwrap() = k as u64;
        samples.push(p.family.sample(&mut stream_rng(seed, &path), p.size));
    }
    MultiSample::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Family;

    fn pop(family: Family, size: usize) -> PopulationSpec {
        PopulationSpec { family, size }
    }

    #[test]
    fn gamma_moments() {
        let g = Family::Gamma { shape: 2.0, rate: 1.0 };
        let data = sample_family(&[pop(g, 1_000_000), pop(g, 1)], 11).unwrap();
        let x = data.sample(0);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 2.0).abs() < 0.01, "{mean}");
        assert!((var - 2.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn same_seed_same_samples() {
        let pops = [
            pop(Family::Normal { mean: 0.0, sd: 1.0 }, 50),
            pop(Family::Pareto { shape: 2.0 }, 30),
        ];
        let a = sample_family(&pops, 5).unwrap();
        let b = sample_family(&pops, 5).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert_ne!(a.samples(), sample_family(&pops, 6).unwrap().samples());
    }

    #[test]
    fn pareto_tail() {
        let p = Family::Pareto { shape: 2.0 };
        let data = sample_family(&[pop(p, 100_000), pop(p, 1)], 3).unwrap();
        let x = data.sample(0);
        assert!(x.iter().all(|&v| v > 1.0));
        let tail = x.iter().filter(|&&v| v > 2.0).count() as f64 / x.len() as f64;
        assert!((tail - 0.25).abs() < 0.01, "{tail}");
    }

    #[test]
    fn zero_size_is_rejected() {
        let n = Family::Normal { mean: 0.0, sd: 1.0 };
        assert!(sample_family(&[pop(n, 0), pop(n, 5)], 1).is_err());
    }
}
