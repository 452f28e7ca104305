//! Parallel Monte Carlo runners. Replicate `i` of setting `s` draws its data
//! from the streams `(seed, s, i, k)`, so results are identical for any thread
//! count; per-replicate outcomes are stored and folded in index order.

use std::io::Write;

use rayon::prelude::*;

use super::competitors::{anova_test, kruskal_wallis_test};
use super::config::{Scenario, StudyConfig, StudyMethod};
use super::sample_on_path;
use crate::del::{DelObjective, FitOptions};
use crate::distributions::{ks_test, ChiSquared, NoncentralChiSquared};
use crate::error::{Error, Result};
use crate::family::{BaselineSpec, Family};
use crate::infer::{delr_test_with, permutation_test, wald_test_with};
use crate::model::{build_basis, BasisFn, ConstraintSpec, MultiSample};
use crate::power::{analyze_power, LocalAlternative};
use crate::seeding::stream_seed;

use super::config::PopulationSpec;

/// Calibration of the DELR test under setting 0.
#[derive(Debug, Clone)]
pub struct NullStudy {
    pub rejection_rate: f64,
    pub se: f64,
    pub df: usize,
    /// Successful `R_n` draws in replicate order.
    pub draws: Vec<f64>,
    /// `(chi-square quantile at (i - 0.5)/N, i-th smallest R_n)`.
    pub qq: Vec<(f64, f64)>,
    pub ks_distance: f64,
    pub ks_p_value: f64,
    pub failures: usize,
    pub replicates: usize,
}

#[derive(Debug, Clone)]
pub struct LocalAlternativeStudy {
    /// Noncentrality from the population information with `rho_k = n_k / n`.
    pub delta2: f64,
    pub df: usize,
    pub asymptotic_power: f64,
    pub rejection_rate: f64,
    pub draws: Vec<f64>,
    /// Against the noncentral chi-square(df, delta2) quantiles.
    pub qq: Vec<(f64, f64)>,
    pub ks_distance: f64,
    pub ks_p_value: f64,
    pub failures: usize,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub setting: usize,
    /// Method name; `_subset` marks the test on samples `0..=r` only.
    pub method: String,
    pub rate: f64,
    pub se: f64,
    pub failures: usize,
    pub replicates: usize,
}

#[derive(Debug, Clone)]
pub struct PowerStudy {
    pub rows: Vec<PowerRow>,
}

impl PowerStudy {
    pub fn row(&self, setting: usize, method: &str) -> Option<&PowerRow> {
        self.rows.iter().find(|r| r.setting == setting && r.method == method)
    }
}

fn check_failures(what: &str, failures: usize, replicates: usize) -> Result<()> {
    if failures * 100 > replicates {
        return Err(Error::StudyAborted { failures, replicates });
    }
    if failures * 1000 > replicates {
        log::warn!("{what}: {failures} of {replicates} replicates failed and are excluded");
    }
    Ok(())
}

fn rate_and_se(rejections: usize, successes: usize) -> (f64, f64) {
    if successes == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = rejections as f64 / successes as f64;
    (p, (p * (1.0 - p) / successes as f64).sqrt())
}

fn require(cfg: &StudyConfig, scenario: Scenario) -> Result<()> {
    cfg.validate()?;
    if cfg.scenario != scenario {
        return Err(Error::Parameter(format!(
            "config scenario is {:?}, expected {scenario:?}",
            cfg.scenario
        )));
    }
    Ok(())
}

/// DELR statistics of `replicates` data sets drawn by `draw(i)`.
fn delr_draws(
    replicates: usize,
    basis: &BasisFn,
    c: &ConstraintSpec,
    draw: impl Fn(usize) -> Result<MultiSample> + Sync,
) -> (Vec<f64>, usize) {
    let opts = FitOptions::default();
    let outcomes: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let res = draw(i)
                .and_then(|data| DelObjective::new(&data, basis))
                .and_then(|obj| delr_test_with(&obj, c, &opts));
            match res {
                Ok(r) => Some(r.statistic),
                Err(e) => {
                    log::debug!("replicate {i} failed: {e}");
                    None
                }
            }
        })
        .collect();
    let failures = outcomes.iter().filter(|o| o.is_none()).count();
    (outcomes.into_iter().flatten().collect(), failures)
}

fn qq_pairs(draws: &[f64], quantile: impl Fn(f64) -> Result<f64>) -> Result<Vec<(f64, f64)>> {
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| Ok((quantile((i as f64 + 0.5) / n)?, x)))
        .collect()
}

/// Simulates setting 0 and runs the DELR test on every replicate.
pub fn run_null_study(cfg: &StudyConfig) -> Result<NullStudy> {
    require(cfg, Scenario::Null)?;
    let basis = build_basis(cfg.basis.clone());
    let c = cfg.constraint()?;
    let pops = &cfg.families[0];
    let (draws, failures) = delr_draws(cfg.replicates, &basis, &c, |i| {
        sample_on_path(pops, cfg.seed, &[0, i as u64])
    });
    check_failures("null study", failures, cfg.replicates)?;
    let chi = ChiSquared::new(c.q() as f64)?;
    let crit = chi.quantile(1.0 - cfg.level)?;
    let rejections = draws.iter().filter(|&&r| cfg.level >= 1.0 || r >= crit).count();
    let (rejection_rate, se) = rate_and_se(rejections, draws.len());
    let (ks_distance, ks_p_value) = ks_test(&draws, |x| chi.cdf(x));
    Ok(NullStudy {
        rejection_rate,
        se,
        df: c.q(),
        qq: qq_pairs(&draws, |p| chi.quantile(p))?,
        draws,
        ks_distance,
        ks_p_value,
        failures,
        replicates: cfg.replicates,
    })
}

/// Draws data under `beta_k* + c_k / sqrt(n_k)` and compares `R_n` with the
/// noncentral chi-square limit.
pub fn run_local_alternative_study(cfg: &StudyConfig) -> Result<LocalAlternativeStudy> {
    require(cfg, Scenario::LocalAlternative)?;
    let la = cfg.local_alternative.as_ref().expect("validated");
    let basis = build_basis(cfg.basis.clone());
    let c = cfg.constraint()?;
    let n: usize = la.sizes.iter().sum();
    let rho: Vec<f64> = la.sizes.iter().map(|&nk| nk as f64 / n as f64).collect();
    let alt = LocalAlternative::new(la.beta_star.concat(), la.drifts.clone(), rho)?;
    let f0 = BaselineSpec::new(la.baseline.family)?;
    let power = analyze_power(&f0, &basis, &alt, &c, cfg.level)?;

    let mut pops = vec![PopulationSpec {
        family: la.baseline.family,
        size: la.sizes[0],
    }];
    for (k, (b, ck)) in la.beta_star.iter().zip(&la.drifts).enumerate() {
        let nk = la.sizes[k + 1];
        let beta: Vec<f64> = b.iter().zip(ck).map(|(b, c)| b + c / (nk as f64).sqrt()).collect();
        let family: Family = la.baseline.family.tilt(&cfg.basis, &beta)?;
        pops.push(PopulationSpec { family, size: nk });
    }
    let (draws, failures) = delr_draws(cfg.replicates, &basis, &c, |i| {
        sample_on_path(&pops, cfg.seed, &[0, i as u64])
    });
    check_failures("local-alternative study", failures, cfg.replicates)?;

    let ncx = NoncentralChiSquared::new(c.q() as f64, power.delta2)?;
    let crit = ChiSquared::new(c.q() as f64)?.quantile(1.0 - cfg.level)?;
    let rejections = draws.iter().filter(|&&r| cfg.level >= 1.0 || r >= crit).count();
    let (ks_distance, ks_p_value) = ks_test(&draws, |x| ncx.cdf(x));
    Ok(LocalAlternativeStudy {
        delta2: power.delta2,
        df: c.q(),
        asymptotic_power: power.power,
        rejection_rate: rate_and_se(rejections, draws.len()).0,
        qq: qq_pairs(&draws, |p| ncx.quantile(p))?,
        draws,
        ks_distance,
        ks_p_value,
        failures,
        replicates: cfg.replicates,
    })
}

#[derive(Debug, Clone, Copy)]
struct Job {
    method: StudyMethod,
    subset: bool,
}

impl Job {
    fn label(&self) -> String {
        if self.subset {
            format!("{}_subset", self.method)
        } else {
            self.method.to_string()
        }
    }
}

struct Context<'a> {
    cfg: &'a StudyConfig,
    basis: BasisFn,
    c: ConstraintSpec,
    sub: Option<(Vec<usize>, ConstraintSpec)>,
    jobs: Vec<Job>,
}

impl Context<'_> {
    /// `Some(reject)` per job, `None` for a failed fit.
    fn replicate(&self, setting: usize, i: usize) -> Vec<Option<bool>> {
        let cfg = self.cfg;
        let data = match sample_on_path(&cfg.families[setting], cfg.seed, &[setting as u64, i as u64]) {
            Ok(d) => d,
            Err(e) => {
                log::debug!("setting {setting} replicate {i}: {e}");
                return vec![None; self.jobs.len()];
            }
        };
        let sub_data = self.sub.as_ref().map(|(idx, _)| data.select(idx));
        let opts = FitOptions::default();
        self.jobs
            .iter()
            .map(|job| {
                let (d, c) = if job.subset {
                    let (_, c) = self.sub.as_ref().expect("subset jobs need a subset");
                    (sub_data.as_ref().expect("subset data").as_ref().ok()?, c)
                } else {
                    (&data, &self.c)
                };
                let res = match job.method {
                    StudyMethod::Delr => {
                        DelObjective::new(d, &self.basis).and_then(|obj| delr_test_with(&obj, c, &opts))
                    }
                    StudyMethod::Wald => {
                        DelObjective::new(d, &self.basis).and_then(|obj| wald_test_with(&obj, c, &opts))
                    }
                    StudyMethod::Anova => anova_test(d),
                    StudyMethod::Kw => kruskal_wallis_test(d),
                    StudyMethod::Perm => {
                        let seed = stream_seed(cfg.seed, &[setting as u64, i as u64, u64::MAX]);
                        permutation_test(d, &self.basis, c, cfg.perm_reps, seed)
                    }
                };
                match res {
                    Ok(r) => Some(r.p_value <= cfg.level),
                    Err(e) => {
                        log::debug!("setting {setting} replicate {i} {}: {e}", job.label());
                        None
                    }
                }
            })
            .collect()
    }
}

/// Rejection rates per setting and method. With `subset = r` the DELR and
/// Wald tests are also run on samples `0..=r` alone (`delr_subset`,
/// `wald_subset`).
pub fn run_power_study(cfg: &StudyConfig) -> Result<PowerStudy> {
    require(cfg, Scenario::Power)?;
    let d = cfg.basis.dim();
    let c = cfg.constraint()?;
    let mut jobs: Vec<Job> = cfg
        .methods
        .iter()
        .map(|&method| Job { method, subset: false })
        .collect();
    let sub = match cfg.subset {
        Some(r) => {
            for &method in &cfg.methods {
                if matches!(method, StudyMethod::Delr | StudyMethod::Wald) {
                    jobs.push(Job { method, subset: true });
                }
            }
            Some(((0..=r).collect(), c.leading(r * d)?))
        }
        None => None,
    };
    let ctx = Context {
        cfg,
        basis: build_basis(cfg.basis.clone()),
        c,
        sub,
        jobs,
    };

    let mut rows = Vec::new();
    for setting in 0..cfg.families.len() {
        let outcomes: Vec<Vec<Option<bool>>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|i| ctx.replicate(setting, i))
            .collect();
        for (j, job) in ctx.jobs.iter().enumerate() {
            let failures = outcomes.iter().filter(|o| o[j].is_none()).count();
            check_failures(&format!("setting {setting} {}", job.label()), failures, cfg.replicates)?;
            let rejections = outcomes.iter().filter(|o| o[j] == Some(true)).count();
            let (rate, se) = rate_and_se(rejections, cfg.replicates - failures);
            rows.push(PowerRow {
                setting,
                method: job.label(),
                rate,
                se,
                failures,
                replicates: cfg.replicates,
            });
        }
    }
    Ok(PowerStudy { rows })
}

/// CSV with header `setting,method,rate,se,failures`.
pub fn write_power_csv<W: Write>(out: W, rows: &[PowerRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["setting", "method", "rate", "se", "failures"])?;
    for r in rows {
        w.write_record([
            r.setting.to_string(),
            r.method.clone(),
            r.rate.to_string(),
            r.se.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with header `theoretical,empirical`.
pub fn write_qq_csv<W: Write>(out: W, pairs: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theoretical", "empirical"])?;
    for (t, e) in pairs {
        w.write_record([t.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::builtin_config;

    fn small(name: &str, replicates: usize) -> StudyConfig {
        let mut cfg = builtin_config(name).unwrap();
        cfg.replicates = replicates;
        cfg
    }

    #[test]
    fn level_one_rejects_everything() {
        let mut cfg = small("null-normal", 20);
        cfg.level = 1.0;
        let s = run_null_study(&cfg).unwrap();
        assert_eq!(s.rejection_rate, 1.0);
        assert_eq!(s.qq.len(), 20);
        assert!(s.qq.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn studies_are_reproducible() {
        let cfg = small("table3-normal", 12);
        let a = run_power_study(&cfg).unwrap();
        let b = run_power_study(&cfg).unwrap();
        assert_eq!(a.rows, b.rows);
        assert!(a.row(5, "delr_subset").is_some());
        assert_eq!(a.rows.len(), 6 * 4);
    }

    #[test]
    fn local_study_reports_noncentrality() {
        let s = run_local_alternative_study(&small("local-normal", 8)).unwrap();
        assert!((s.delta2 - 2.67).abs() < 0.05, "{}", s.delta2);
        assert_eq!(s.draws.len() + s.failures, 8);
    }

    #[test]
    fn zero_drift_has_zero_noncentrality() {
        let mut cfg = small("local-normal", 4);
        cfg.local_alternative.as_mut().unwrap().drifts = vec![vec![0.0, 0.0]; 3];
        let s = run_local_alternative_study(&cfg).unwrap();
        assert_eq!(s.delta2, 0.0);
    }

    #[test]
    fn scenario_mismatch_is_an_error() {
        assert!(run_power_study(&small("null-normal", 4)).is_err());
    }

    #[test]
    fn csv_writers() {
        let mut buf = Vec::new();
        write_power_csv(
            &mut buf,
            &[PowerRow {
                setting: 1,
                method: "kw".into(),
                rate: 0.5,
                se: 0.1,
                failures: 0,
                replicates: 25,
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "setting,method,rate,se,failures\n1,kw,0.5,0.1,0\n"
        );
        let mut buf = Vec::new();
        write_qq_csv(&mut buf, &[(1.0, 2.0)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "theoretical,empirical\n1,2\n");
    }
}
