//! Study configurations: the JSON schema and the built-in paper designs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::Family;
use crate::hypothesis::parse_hypothesis;
use crate::model::{BasisSpec, ConstraintSpec};

/// Seed used when a config does not set one.
pub const DEFAULT_SEED: u64 = 20_130_917;
pub const DEFAULT_PERM_REPS: usize = 199;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawDist {
    family: String,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawPopulation {
    family: String,
    params: Vec<f64>,
    size: usize,
}

/// A distribution given as `{"family": ..., "params": [...]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDist", into = "RawDist")]
pub struct DistSpec {
    pub family: Family,
}

impl TryFrom<RawDist> for DistSpec {
    type Error = Error;
    fn try_from(r: RawDist) -> Result<Self> {
        Ok(Self {
            family: Family::from_parts(&r.family, &r.params)?,
        })
    }
}

impl From<DistSpec> for RawDist {
    fn from(d: DistSpec) -> Self {
        RawDist {
            family: d.family.name().into(),
            params: d.family.params(),
        }
    }
}

/// One population of a simulated data set: its distribution and sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPopulation", into = "RawPopulation")]
pub struct PopulationSpec {
    pub family: Family,
    pub size: usize,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::Parameter("population sizes must be at least 1".into()));
        }
        self.family.validate()
    }
}

impl TryFrom<RawPopulation> for PopulationSpec {
    type Error = Error;
    fn try_from(r: RawPopulation) -> Result<Self> {
        let p = Self {
            family: Family::from_parts(&r.family, &r.params)?,
            size: r.size,
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<PopulationSpec> for RawPopulation {
    fn from(p: PopulationSpec) -> Self {
        RawPopulation {
            family: p.family.name().into(),
            params: p.family.params(),
            size: p.size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Null,
    LocalAlternative,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyMethod {
    Delr,
    Wald,
    Anova,
    #[serde(alias = "kruskal-wallis")]
    Kw,
    #[serde(alias = "permutation")]
    Perm,
}

impl fmt::Display for StudyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyMethod::Delr => "delr",
            StudyMethod::Wald => "wald",
            StudyMethod::Anova => "anova",
            StudyMethod::Kw => "kw",
            StudyMethod::Perm => "perm",
        })
    }
}

/// Samples `k = 0..=m` drawn from `baseline` tilted by
/// `beta_star_k + c_k / sqrt(n_k)` (no tilt for `k = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalAlternativeConfig {
    pub baseline: DistSpec,
    pub sizes: Vec<usize>,
    pub beta_star: Vec<Vec<f64>>,
    pub drifts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Populations per setting; setting 0 is the null.
    #[serde(default)]
    pub families: Vec<Vec<PopulationSpec>>,
    pub basis: BasisSpec,
    pub hypothesis: String,
    #[serde(default = "default_level")]
    pub level: f64,
    pub replicates: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<StudyMethod>,
    #[serde(default = "default_perm_reps")]
    pub perm_reps: usize,
    /// Also test the hypothesis on samples `0..=subset` alone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_alternative: Option<LocalAlternativeConfig>,
}

fn default_level() -> f64 {
    0.05
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_methods() -> Vec<StudyMethod> {
    vec![StudyMethod::Delr]
}

fn default_perm_reps() -> usize {
    DEFAULT_PERM_REPS
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: StudyConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Number of samples `m + 1`.
    pub fn n_samples(&self) -> usize {
        match (&self.local_alternative, self.families.first()) {
            (Some(la), _) if self.scenario == Scenario::LocalAlternative => la.sizes.len(),
            (_, Some(first)) => first.len(),
            _ => 0,
        }
    }

    pub fn constraint(&self) -> Result<ConstraintSpec> {
        parse_hypothesis(&self.hypothesis, self.n_samples().saturating_sub(1), self.basis.dim())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level <= 1.0) {
            return Err(Error::Parameter(format!(
                "level must lie in (0, 1], got {}",
                self.level
            )));
        }
        if self.replicates == 0 {
            return Err(Error::Parameter("replicates must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Parameter("at least one method is required".into()));
        }
        match self.scenario {
            Scenario::LocalAlternative => {
                let la = self.local_alternative.as_ref().ok_or_else(|| {
                    Error::Parameter("local-alternative scenario needs a `local_alternative` block".into())
                })?;
                let m = la.sizes.len().saturating_sub(1);
                if m == 0 || la.sizes.contains(&0) {
                    return Err(Error::Parameter(
                        "local alternative needs at least two non-empty samples".into(),
                    ));
                }
                let d = self.basis.dim();
                for (what, v) in [("beta_star", &la.beta_star), ("drifts", &la.drifts)] {
                    if v.len() != m || v.iter().any(|b| b.len() != d) {
                        return Err(Error::Parameter(format!(
                            "`{what}` must hold {m} vectors of length {d}"
                        )));
                    }
                }
            }
            Scenario::Null | Scenario::Power => {
                let first = self
                    .families
                    .first()
                    .ok_or_else(|| Error::Parameter("`families` must contain setting 0".into()))?;
                if first.len() < 2 {
                    return Err(Error::Parameter("each setting needs at least two populations".into()));
                }
                if let Some(s) = self.families.iter().position(|f| f.len() != first.len()) {
                    return Err(Error::Parameter(format!(
                        "setting {s} has {} populations, setting 0 has {}",
                        self.families[s].len(),
                        first.len()
                    )));
                }
            }
        }
        let c = self.constraint()?;
        if let Some(r) = self.subset {
            let m = self.n_samples() - 1;
            if r == 0 || r >= m {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    max: m.saturating_sub(1),
                });
            }
            c.leading(r * self.basis.dim())?;
        }
        if self.methods.contains(&StudyMethod::Perm) {
            if !c.is_full_equality() {
                return Err(Error::Unsupported(
                    "the permutation test only applies to the hypothesis that all distributions are equal".into(),
                ));
            }
            if self.perm_reps < 99 {
                return Err(Error::Parameter("perm_reps must be at least 99".into()));
            }
        }
        Ok(())
    }
}

/// Names accepted by [`builtin_config`].
pub fn builtin_names() -> &'static [&'static str] {
    &[
        "null-normal",
        "null-gamma",
        "local-normal",
        "local-gamma",
        "normal-two-sample",
        "table1-gamma",
        "table1-lognormal",
        "table1-pareto",
        "table1-weibull",
        "table2-weibull",
        "table3-normal",
        "table3-gamma",
        "table3-gamma-distinct",
    ]
}

fn pops(fams: &[Family], sizes: &[usize]) -> Vec<PopulationSpec> {
    fams.iter()
        .zip(sizes)
        .map(|(&family, &size)| PopulationSpec { family, size })
        .collect()
}

fn normal(mean: f64, sd: f64) -> Family {
    Family::Normal { mean, sd }
}

fn gamma(shape: f64, rate: f64) -> Family {
    Family::Gamma { shape, rate }
}

fn lognormal(meanlog: f64, sdlog: f64) -> Family {
    Family::LogNormal { meanlog, sdlog }
}

fn pareto(shape: f64) -> Family {
    Family::Pareto { shape }
}

fn weibull(shape: f64, scale: f64) -> Family {
    Family::Weibull { shape, scale }
}

fn base(name: &str, scenario: Scenario, basis: &str, hypothesis: &str, methods: Vec<StudyMethod>) -> StudyConfig {
    StudyConfig {
        scenario,
        name: Some(name.into()),
        families: Vec::new(),
        basis: BasisSpec::parse(basis).expect("built-in basis"),
        hypothesis: hypothesis.into(),
        level: 0.05,
        replicates: 2000,
        seed: DEFAULT_SEED,
        methods,
        perm_reps: DEFAULT_PERM_REPS,
        subset: None,
        local_alternative: None,
    }
}

/// Five-sample design: setting 0 draws everything from `f0`, setting `s`
/// draws sample `k` from `alts[k - 1][s - 1]`.
fn five_sample(f0: Family, alts: [[Family; 5]; 4], sizes: &[usize]) -> Vec<Vec<PopulationSpec>> {
    let mut settings = vec![pops(&[f0; 5], sizes)];
    for s in 0..5 {
        settings.push(pops(&[f0, alts[0][s], alts[1][s], alts[2][s], alts[3][s]], sizes));
    }
    settings
}

fn each<const N: usize>(v: [(f64, f64); N], f: fn(f64, f64) -> Family) -> [Family; N] {
    v.map(|(a, b)| f(a, b))
}

/// The simulation designs of the paper by name.
pub fn builtin_config(name: &str) -> Option<StudyConfig> {
    use StudyMethod::*;
    let competitors = vec![Delr, Wald, Anova, Kw];
    let cfg = match name {
        "null-normal" => {
            let mut c = base(name, Scenario::Null, "x,x2", "equal:1,2;3,4", vec![Delr]);
            c.families = vec![pops(
                &[
                    normal(0.0, 1.0),
                    normal(2.0, 1.5),
                    normal(2.0, 1.5),
                    normal(1.0, 3.0),
                    normal(1.0, 3.0),
                    normal(3.2, 2.0),
                ],
                &[90, 60, 120, 80, 110, 30],
            )];
            c
        }
        "null-gamma" => {
            let mut c = base(name, Scenario::Null, "logx,x", "equal:1,2;3,4", vec![Delr]);
            c.families = vec![pops(
                &[
                    gamma(3.0, 0.5),
                    gamma(4.0, 0.8),
                    gamma(4.0, 0.8),
                    gamma(5.0, 1.1),
                    gamma(5.0, 1.1),
                    gamma(3.2, 1.5),
                ],
                &[90, 60, 120, 80, 110, 30],
            )];
            c
        }
        "local-normal" => {
            let mut c = base(name, Scenario::LocalAlternative, "x,x2", "lincomb:b1-b2=0", vec![Delr]);
            c.local_alternative = Some(LocalAlternativeConfig {
                baseline: DistSpec {
                    family: normal(0.0, 0.5),
                },
                sizes: vec![120, 160, 80, 60],
                beta_star: vec![vec![0.25, 1.875], vec![0.25, 1.875], vec![0.125, 1.97]],
                drifts: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]],
            });
            c
        }
        "local-gamma" => {
            let mut c = base(
                name,
                Scenario::LocalAlternative,
                "x,logx",
                "equal:1,2 & fix:3=-6,9",
                vec![Delr],
            );
            c.local_alternative = Some(LocalAlternativeConfig {
                baseline: DistSpec {
                    family: gamma(3.0, 2.0),
                },
                sizes: vec![120, 160, 80, 60],
                beta_star: vec![vec![-4.0, 5.0], vec![-4.0, 5.0], vec![-6.0, 9.0]],
                drifts: vec![vec![0.5, 0.5], vec![1.0, 1.0], vec![2.0, 2.0]],
            });
            c
        }
        "normal-two-sample" => {
            let mut c = base(name, Scenario::Power, "x,x2", "equal:all", competitors);
            let mu = [0.0, 0.05, 0.1, 0.15, 0.25, 0.36, 0.55];
            let sd = [2.0, 1.9, 1.8, 1.7, 1.62, 1.56, 1.50];
            c.families = mu
                .iter()
                .zip(&sd)
                .map(|(&m, &s)| pops(&[normal(0.0, 2.0), normal(m, s)], &[30, 40]))
                .collect();
            c
        }
        "table1-gamma" => {
            let mut c = base(name, Scenario::Power, "logx,x", "equal:all", competitors);
            c.families = five_sample(
                gamma(0.2, 0.8),
                [
                    each(
                        [(0.18, 0.7), (0.17, 0.6), (0.16, 0.5), (0.155, 0.45), (0.14, 0.4)],
                        gamma,
                    ),
                    each(
                        [(0.22, 0.85), (0.24, 0.95), (0.255, 1.05), (0.18, 0.7), (0.17, 0.6)],
                        gamma,
                    ),
                    each(
                        [(0.23, 0.95), (0.255, 1.2), (0.275, 1.25), (0.29, 1.4), (0.33, 1.6)],
                        gamma,
                    ),
                    each(
                        [(0.24, 1.05), (0.27, 1.3), (0.29, 1.4), (0.31, 1.55), (0.35, 1.85)],
                        gamma,
                    ),
                ],
                &[30, 40, 25, 45, 50],
            );
            c
        }
        "table1-lognormal" => {
            let mut c = base(name, Scenario::Power, "logx,log2x", "equal:all", competitors);
            c.families = five_sample(
                lognormal(0.0, 1.5),
                [
                    each(
                        [(0.44, 1.3), (0.7, 1.2), (0.9, 1.15), (1.0, 1.0), (1.2, 0.85)],
                        lognormal,
                    ),
                    each(
                        [(0.22, 1.32), (0.57, 1.30), (0.62, 1.25), (0.67, 1.20), (0.87, 1.0)],
                        lognormal,
                    ),
                    each(
                        [(0.18, 1.35), (0.63, 1.33), (0.73, 1.30), (0.83, 1.28), (0.85, 1.28)],
                        lognormal,
                    ),
                    each(
                        [(0.37, 1.38), (0.60, 1.35), (0.70, 1.33), (0.75, 1.32), (0.95, 1.30)],
                        lognormal,
                    ),
                ],
                &[30, 40, 25, 45, 50],
            );
            c
        }
        "table1-pareto" => {
            let mut c = base(name, Scenario::Power, "logx", "equal:all", competitors);
            c.families = five_sample(
                pareto(2.0),
                [
                    [1.9, 1.85, 1.8, 1.75, 1.7].map(pareto),
                    [2.1, 2.2, 2.3, 1.85, 1.75].map(pareto),
                    [2.35, 2.55, 2.70, 2.85, 3.25].map(pareto),
                    [2.5, 2.78, 2.98, 3.2, 3.75].map(pareto),
                ],
                &[30, 40, 25, 45, 50],
            );
            c
        }
        "table1-weibull" => {
            let mut c = base(name, Scenario::Power, "x^0.8", "equal:all", competitors);
            let w = |scale: f64| weibull(0.8, scale);
            c.families = five_sample(
                w(1.0),
                [
                    [0.76, 0.65, 0.59, 0.53, 0.42].map(w),
                    [1.2, 1.26, 1.31, 1.35, 1.42].map(w),
                    [1.08, 1.05, 1.10, 1.12, 1.14].map(w),
                    [0.90, 0.89, 0.85, 0.82, 0.78].map(w),
                ],
                &[30, 40, 25, 45, 50],
            );
            c
        }
        "table2-weibull" => {
            let mut c = base(name, Scenario::Power, "x,logx", "equal:all", competitors);
            c.families = five_sample(
                weibull(1.0, 1.0),
                [
                    each(
                        [(0.9, 0.95), (0.85, 0.94), (0.82, 0.92), (0.79, 0.91), (0.75, 0.88)],
                        weibull,
                    ),
                    each(
                        [(0.98, 0.98), (0.96, 0.96), (0.95, 0.95), (0.94, 0.94), (0.91, 0.92)],
                        weibull,
                    ),
                    each(
                        [(1.03, 1.04), (1.05, 1.06), (1.07, 1.07), (1.09, 1.08), (1.12, 1.12)],
                        weibull,
                    ),
                    each(
                        [(1.01, 0.95), (1.02, 0.92), (1.03, 0.90), (1.05, 0.89), (1.07, 0.85)],
                        weibull,
                    ),
                ],
                &[90, 120, 75, 135, 150],
            );
            c
        }
        "table3-normal" => {
            let mut c = base(name, Scenario::Power, "x,x2", "fix:1=6,-1.5", vec![Delr, Wald]);
            c.subset = Some(1);
            c.families = [
                (1.5, 0.5),
                (1.57, 0.45),
                (1.58, 0.41),
                (1.6, 0.39),
                (1.62, 0.36),
                (1.64, 0.31),
            ]
            .iter()
            .map(|&(m, s)| pops(&[normal(0.0, 1.0), normal(m, s), normal(-1.0, 2.0)], &[120, 60, 60]))
            .collect();
            c
        }
        "table3-gamma" | "table3-gamma-distinct" => {
            let mut c = base(name, Scenario::Power, "x,logx", "fix:1=-2,2", vec![Delr, Wald]);
            c.subset = Some(1);
            let extra = if name == "table3-gamma" {
                [gamma(2.5, 1.2), gamma(3.0, 1.5)]
            } else {
                [gamma(8.0, 1.0), gamma(12.0, 1.5)]
            };
            c.families = [(4.0, 3.0), (5.3, 4.3), (6.3, 5.3), (7.1, 6.1), (8.3, 7.3), (10.0, 9.0)]
                .iter()
                .map(|&(a, b)| pops(&[gamma(2.0, 1.0), gamma(a, b), extra[0], extra[1]], &[60, 30, 40, 90]))
                .collect();
            c
        }
        _ => return None,
    };
    Some(cfg)
}
