//! Parametric families used as the baseline `F_0` in power calculations and as
//! data-generating distributions in the simulation studies.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};

use crate::distributions::ln_gamma;
use crate::error::{Error, Result};
use crate::model::{BasisSpec, BasisTerm};
use crate::quadrature::{self, QuadOptions, QuadResult};

/// A parametric distribution. Gamma uses shape/rate; Pareto has support `x > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, rate: f64 },
    LogNormal { meanlog: f64, sdlog: f64 },
    Pareto { shape: f64 },
    Weibull { shape: f64, scale: f64 },
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Family::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Family::Gamma { shape, rate } => shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
            Family::LogNormal { meanlog, sdlog } => meanlog.is_finite() && sdlog > 0.0 && sdlog.is_finite(),
            Family::Pareto { shape } => shape > 0.0 && shape.is_finite(),
            Family::Weibull { shape, scale } => shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid distribution parameters: {self}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Normal { .. } => "normal",
            Family::Gamma { .. } => "gamma",
            Family::LogNormal { .. } => "lognormal",
            Family::Pareto { .. } => "pareto",
            Family::Weibull { .. } => "weibull",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Family::Normal { mean, sd } => vec![mean, sd],
            Family::Gamma { shape, rate } => vec![shape, rate],
            Family::LogNormal { meanlog, sdlog } => vec![meanlog, sdlog],
            Family::Pareto { shape } => vec![shape],
            Family::Weibull { shape, scale } => vec![shape, scale],
        }
    }

    pub fn from_parts(name: &str, params: &[f64]) -> Result<Self> {
        let need = |k: usize| -> Result<()> {
            if params.len() == k {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "family `{name}` takes {k} parameter(s), got {}",
                    params.len()
                )))
            }
        };
        let fam = match name.trim().to_ascii_lowercase().as_str() {
            "normal" | "norm" | "n" => {
                need(2)?;
                Family::Normal {
                    mean: params[0],
                    sd: params[1],
                }
            }
            "gamma" => {
                need(2)?;
                Family::Gamma {
                    shape: params[0],
                    rate: params[1],
                }
            }
            "lognormal" | "lnorm" | "ln" => {
                need(2)?;
                Family::LogNormal {
                    meanlog: params[0],
                    sdlog: params[1],
                }
            }
            "pareto" => {
                need(1)?;
                Family::Pareto { shape: params[0] }
            }
            "weibull" => {
                need(2)?;
                Family::Weibull {
                    shape: params[0],
                    scale: params[1],
                }
            }
            other => return Err(Error::Parameter(format!("unknown distribution family `{other}`"))),
        };
        fam.validate()?;
        Ok(fam)
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        match *self {
            Family::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Family::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
            Family::LogNormal { meanlog, sdlog } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let l = x.ln();
                let z = (l - meanlog) / sdlog;
                -0.5 * z * z - l - sdlog.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Family::Pareto { shape } => {
                if x <= 1.0 {
                    return f64::NEG_INFINITY;
                }
                shape.ln() - (shape + 1.0) * x.ln()
            }
            Family::Weibull { shape, scale } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = x / scale;
                shape.ln() - scale.ln() + (shape - 1.0) * z.ln() - z.powf(shape)
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Maps `t` in the quadrature interval to `(x, ln |dx/dt|)`.
    fn map(&self, t: f64) -> (f64, f64) {
        match *self {
            Family::Normal { mean, sd } => {
                let u = 1.0 - t * t;
                (mean + sd * t / u, (sd * (1.0 + t * t)).ln() - 2.0 * u.ln())
            }
            Family::Pareto { .. } => {
                let u = 1.0 - t;
                (1.0 + t / u, -2.0 * u.ln())
            }
            _ => {
                let s = self.positive_scale();
                let u = 1.0 - t;
                (s * t / u, s.ln() - 2.0 * u.ln())
            }
        }
    }

    fn positive_scale(&self) -> f64 {
        match *self {
            Family::Gamma { shape, rate } => shape.max(1.0) / rate,
            Family::LogNormal { meanlog, .. } => meanlog.exp(),
            Family::Weibull { scale, .. } => scale,
            _ => 1.0,
        }
    }

    fn t_range(&self) -> (f64, f64) {
        match self {
            Family::Normal { .. } => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    /// Integrates over the support. The closure receives `(x, ln w)` where
    /// `w = f_0(x) |dx/dt|` and must write the already-weighted integrand, so
    /// that callers can combine `ln w` with their own exponents before
    /// exponentiating.
    pub fn integrate_weighted<F>(&self, dim: usize, mut f: F, opts: QuadOptions) -> Result<QuadResult>
    where
        F: FnMut(f64, f64, &mut [f64]),
    {
        let (a, b) = self.t_range();
        quadrature::integrate(
            |t, out| {
                let (x, log_jac) = self.map(t);
                let log_w = self.log_pdf(x) + log_jac;
                if !x.is_finite() || log_w == f64::NEG_INFINITY || log_w.is_nan() {
                    out.iter_mut().for_each(|o| *o = 0.0);
                } else {
                    f(x, log_w, out);
                }
            },
            a,
            b,
            dim,
            opts,
        )
    }

    /// `E[g(X)]` for a scalar function.
    pub fn expect(&self, mut g: impl FnMut(f64) -> f64, opts: QuadOptions) -> Result<f64> {
        self.integrate_weighted(1, |x, lw, out| out[0] = g(x) * lw.exp(), opts)
            .map(|r| r.value[0])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        match *self {
            Family::Normal { mean, sd } => {
                let d = Normal::new(mean, sd).expect("validated normal");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Family::Gamma { shape, rate } => {
                let d = Gamma::new(shape, 1.0 / rate).expect("validated gamma");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Family::LogNormal { meanlog, sdlog } => {
                let d = LogNormal::new(meanlog, sdlog).expect("validated lognormal");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Family::Pareto { shape } => (0..n)
                .map(|_| {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    u.powf(-1.0 / shape)
                })
                .collect(),
            Family::Weibull { shape, scale } => (0..n)
                .map(|_| {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    scale * (-u.ln()).powf(1.0 / shape)
                })
                .collect(),
        }
    }

    /// The family member with density proportional to `exp(beta' q(x)) f(x)`,
    /// when that tilt stays inside the family in closed form.
    pub fn tilt(&self, basis: &BasisSpec, beta: &[f64]) -> Result<Family> {
        if beta.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                what: "tilt coefficients",
                expected: basis.dim(),
                got: beta.len(),
            });
        }
        let coef = |want: BasisTerm| -> f64 {
            basis
                .terms()
                .iter()
                .zip(beta)
                .filter(|(t, _)| **t == want)
                .map(|(_, b)| *b)
                .sum()
        };
        let only = |allowed: &[BasisTerm]| -> Result<()> {
            for (t, b) in basis.terms().iter().zip(beta) {
                if *b != 0.0 && !allowed.contains(t) {
                    return Err(Error::Unsupported(format!(
                        "no closed-form tilt of {} by basis term `{t}`",
                        self.name()
                    )));
                }
            }
            Ok(())
        };
        let out = match *self {
            Family::Normal { mean, sd } => {
                only(&[BasisTerm::Identity, BasisTerm::Square])?;
                let prec = 1.0 / (sd * sd) - 2.0 * coef(BasisTerm::Square);
                if !(prec > 0.0) {
                    return Err(Error::Parameter("tilted normal is not integrable".into()));
                }
                let var = 1.0 / prec;
                Family::Normal {
                    mean: var * (mean / (sd * sd) + coef(BasisTerm::Identity)),
                    sd: var.sqrt(),
                }
            }
            Family::Gamma { shape, rate } => {
                only(&[BasisTerm::Identity, BasisTerm::Log])?;
                Family::Gamma {
                    shape: shape + coef(BasisTerm::Log),
                    rate: rate - coef(BasisTerm::Identity),
                }
            }
            Family::LogNormal { meanlog, sdlog } => {
                only(&[BasisTerm::Log, BasisTerm::LogSquared])?;
                let prec = 1.0 / (sdlog * sdlog) - 2.0 * coef(BasisTerm::LogSquared);
                if !(prec > 0.0) {
                    return Err(Error::Parameter("tilted lognormal is not integrable".into()));
                }
                let var = 1.0 / prec;
                Family::LogNormal {
                    meanlog: var * (meanlog / (sdlog * sdlog) + coef(BasisTerm::Log)),
                    sdlog: var.sqrt(),
                }
            }
            Family::Pareto { shape } => {
                only(&[BasisTerm::Log])?;
                Family::Pareto {
                    shape: shape - coef(BasisTerm::Log),
                }
            }
            Family::Weibull { shape, scale } => {
                let power = if shape == 1.0 {
                    BasisTerm::Identity
                } else if shape == 2.0 {
                    BasisTerm::Square
                } else {
                    BasisTerm::Power(shape)
                };
                only(&[power])?;
                let inv = scale.powf(-shape) - coef(power);
                if !(inv > 0.0) {
                    return Err(Error::Parameter("tilted weibull is not integrable".into()));
                }
                Family::Weibull {
                    shape,
                    scale: inv.powf(-1.0 / shape),
                }
            }
        };
        out.validate()?;
        Ok(out)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p: Vec<String> = self.params().iter().map(|v| v.to_string()).collect();
        write!(f, "{}:{}", self.name(), p.join(","))
    }
}

impl FromStr for Family {
    type Err = Error;

    /// `"gamma:2,1"`, `"normal:0,1"`, `"pareto:2"`, ...
    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parameter(format!("expected `family:params`, got `{s}`")))?;
        let params = rest
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("bad parameter `{p}` in `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Family::from_parts(name, &params)
    }
}

/// A validated baseline distribution `F_0` for analytic power work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSpec {
    family: Family,
}

impl BaselineSpec {
    /// Checks parameters and that the density integrates to one within 1e-8.
    pub fn new(family: Family) -> Result<Self> {
        family.validate()?;
        let mass = family.expect(|_| 1.0, QuadOptions::default())?;
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::Quadrature(format!(
                "density of {family} integrates to {mass}, not 1"
            )));
        }
        Ok(Self { family })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }
}
