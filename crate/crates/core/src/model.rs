//! Domain types: multi-sample data, basis functions, stacked DRM parameters and
//! linear hypotheses on the tilt coefficients.
//!
//! Every population `k = 1..m` is an exponential tilt of the baseline `F_0`:
//! `dF_k(x) = exp(alpha_k + beta_k' q(x)) dF_0(x)`. The baseline parameters
//! `alpha_0`, `beta_0` are identically zero and never stored.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One coordinate of the basis function `q(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BasisTerm {
    Identity,
    Square,
    /// `x^p` for `p > 0`, defined for `x > 0`.
    Power(f64),
    Log,
    LogSquared,
}

impl BasisTerm {
    pub fn requires_positive(&self) -> bool {
        !matches!(self, BasisTerm::Identity | BasisTerm::Square)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if self.requires_positive() && !(x > 0.0) {
            return Err(Error::Domain {
                term: self.to_string(),
                value: x,
            });
        }
        let v = match *self {
            BasisTerm::Identity => x,
            BasisTerm::Square => x * x,
            BasisTerm::Power(p) => x.powf(p),
            BasisTerm::Log => x.ln(),
            BasisTerm::LogSquared => {
                let l = x.ln();
                l * l
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain {
                term: self.to_string(),
                value: x,
            })
        }
    }
}

impl fmt::Display for BasisTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisTerm::Identity => write!(f, "x"),
            BasisTerm::Square => write!(f, "x2"),
            BasisTerm::Power(p) => write!(f, "x^{p}"),
            BasisTerm::Log => write!(f, "logx"),
            BasisTerm::LogSquared => write!(f, "log2x"),
        }
    }
}

impl FromStr for BasisTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let term = match t.as_str() {
            "x" => BasisTerm::Identity,
            "x2" | "x^2" | "x**2" => BasisTerm::Square,
            "logx" | "log" | "log(x)" | "lnx" => BasisTerm::Log,
            "log2x" | "logx2" | "(logx)^2" | "log(x)^2" | "log^2x" => BasisTerm::LogSquared,
            "sqrt" | "sqrtx" | "sqrt(x)" => BasisTerm::Power(0.5),
            other => {
                let exp = other
                    .strip_prefix("x^")
                    .or_else(|| other.strip_prefix("x**"))
                    .ok_or_else(|| Error::Parameter(format!("unknown basis term `{s}`")))?;
                let p: f64 = exp
                    .parse()
                    .map_err(|_| Error::Parameter(format!("bad exponent in basis term `{s}`")))?;
                if !(p > 0.0) || !p.is_finite() {
                    return Err(Error::Parameter(format!(
                        "power basis term needs a positive exponent, got `{s}`"
                    )));
                }
                if p == 1.0 {
                    BasisTerm::Identity
                } else if p == 2.0 {
                    BasisTerm::Square
                } else {
                    BasisTerm::Power(p)
                }
            }
        };
        Ok(term)
    }
}

/// Ordered list of distinct basis terms; `d = terms.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BasisSpec {
    terms: Vec<BasisTerm>,
}

impl BasisSpec {
    pub fn new(terms: Vec<BasisTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Parameter("basis needs at least one term".into()));
        }
        for (i, a) in terms.iter().enumerate() {
            if let BasisTerm::Power(p) = a {
                if !(*p > 0.0) || !p.is_finite() {
                    return Err(Error::Parameter(format!("power exponent must be > 0, got {p}")));
                }
            }
            if terms[..i].contains(a) {
                return Err(Error::Parameter(format!("duplicate basis term `{a}`")));
            }
        }
        Ok(Self { terms })
    }

    /// Parses a comma separated list such as `"x,x2"` or `"logx,x"`.
    pub fn parse(s: &str) -> Result<Self> {
        let terms = s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(BasisTerm::from_str)
            .collect::<Result<Vec<_>>>()?;
        Self::new(terms)
    }

    pub fn terms(&self) -> &[BasisTerm] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn requires_positive(&self) -> bool {
        self.terms.iter().any(BasisTerm::requires_positive)
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl TryFrom<String> for BasisSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<BasisSpec> for String {
    fn from(b: BasisSpec) -> String {
        b.to_string()
    }
}

/// Evaluator `x -> q(x)` built from a [`BasisSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct BasisFn {
    spec: BasisSpec,
}

pub fn build_basis(spec: BasisSpec) -> BasisFn {
    BasisFn { spec }
}

impl BasisFn {
    pub fn parse(s: &str) -> Result<Self> {
        BasisSpec::parse(s).map(build_basis)
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.dim());
        for (slot, term) in out.iter_mut().zip(self.spec.terms()) {
            *slot = term.eval(x)?;
        }
        Ok(())
    }
}

/// The `m + 1` observed samples; index 0 is the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSample {
    samples: Vec<Vec<f64>>,
    total: usize,
}

impl MultiSample {
    /// Requires at least two samples, none empty, all values finite.
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self> {
        let structural: Vec<Violation> = structural_violations(&samples);
        if let Some(v) = structural.first() {
            return Err(Error::InvalidData(v.to_string()));
        }
        let total = samples.iter().map(Vec::len).sum();
        Ok(Self { samples, total })
    }

    /// Number of non-baseline samples.
    pub fn m(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.samples.iter().map(Vec::len).collect()
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.samples[k]
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// `n_k / n` for every sample.
    pub fn proportions(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.samples.iter().map(|s| s.len() as f64 / n).collect()
    }

    /// All observations with their sample label, in sample order.
    pub fn pooled(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.samples
            .iter()
            .enumerate()
            .flat_map(|(k, s)| s.iter().map(move |&x| (k, x)))
    }

    pub fn pooled_values(&self) -> Vec<f64> {
        self.samples.iter().flatten().copied().collect()
    }

    /// Keeps only the listed samples, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let picked = indices
            .iter()
            .map(|&i| {
                self.samples.get(i).cloned().ok_or(Error::IndexOutOfRange {
                    index: i,
                    max: self.m(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(picked)
    }

    pub fn into_samples(self) -> Vec<Vec<f64>> {
        self.samples
    }
}

/// A single problem found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewSamples {
        found: usize,
    },
    EmptySample {
        sample: usize,
    },
    NonFinite {
        sample: usize,
        index: usize,
    },
    Domain {
        sample: usize,
        index: usize,
        term: String,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewSamples { found } => {
                write!(f, "need m >= 1 (at least 2 samples), found {found}")
            }
            Violation::EmptySample { sample } => write!(f, "sample {sample} is empty"),
            Violation::NonFinite { sample, index } => {
                write!(f, "sample {sample} observation {index} is not finite")
            }
            Violation::Domain {
                sample,
                index,
                term,
                value,
            } => write!(
                f,
                "sample {sample} observation {index} = {value} is outside the domain of `{term}`"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn structural_violations(samples: &[Vec<f64>]) -> Vec<Violation> {
    let mut out = Vec::new();
    if samples.len() < 2 {
        out.push(Violation::TooFewSamples { found: samples.len() });
    }
    for (k, s) in samples.iter().enumerate() {
        if s.is_empty() {
            out.push(Violation::EmptySample { sample: k });
        }
        for (j, x) in s.iter().enumerate() {
            if !x.is_finite() {
                out.push(Violation::NonFinite { sample: k, index: j });
            }
        }
    }
    out
}

/// Report-style check of raw samples against a basis. Never fails.
pub fn validate_dataset(samples: &[Vec<f64>], spec: &BasisSpec) -> ValidationReport {
    let mut violations = structural_violations(samples);
    for (k, s) in samples.iter().enumerate() {
        for (j, &x) in s.iter().enumerate() {
            if !x.is_finite() {
                continue;
            }
            for term in spec.terms() {
                if term.eval(x).is_err() {
                    violations.push(Violation::Domain {
                        sample: k,
                        index: j,
                        term: term.to_string(),
                        value: x,
                    });
                }
            }
        }
    }
    ValidationReport { violations }
}

/// Stacked DRM parameters `(alpha_1..alpha_m, beta_1..beta_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub alpha: Vec<f64>,
    /// `beta_1, ..., beta_m` concatenated, each of length `d`.
    pub beta: Vec<f64>,
}

impl Theta {
    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            alpha: vec![0.0; m],
            beta: vec![0.0; m * d],
        }
    }

    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || !beta.len().is_multiple_of(alpha.len()) || beta.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "beta length must be a positive multiple of alpha length",
                expected: alpha.len().max(1),
                got: beta.len(),
            });
        }
        Ok(Self { alpha, beta })
    }

    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    pub fn d(&self) -> usize {
        if self.alpha.is_empty() {
            0
        } else {
            self.beta.len() / self.alpha.len()
        }
    }

    /// `beta_k` for `k = 1..=m`.
    pub fn beta_block(&self, k: usize) -> &[f64] {
        let d = self.d();
        &self.beta[(k - 1) * d..k * d]
    }

    pub fn check_dims(&self, m: usize, d: usize) -> Result<()> {
        if self.alpha.len() != m {
            return Err(Error::DimensionMismatch {
                what: "alpha",
                expected: m,
                got: self.alpha.len(),
            });
        }
        if self.beta.len() != m * d {
            return Err(Error::DimensionMismatch {
                what: "beta",
                expected: m * d,
                got: self.beta.len(),
            });
        }
        Ok(())
    }

    /// Flattened `(alpha, beta)` vector of length `m(d+1)`.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.alpha.len() + self.beta.len(),
            self.alpha.iter().chain(self.beta.iter()).copied(),
        )
    }

    pub fn from_vector(m: usize, v: &DVector<f64>) -> Self {
        Self {
            alpha: v.rows(0, m).iter().copied().collect(),
            beta: v.rows(m, v.len() - m).iter().copied().collect(),
        }
    }

    pub fn beta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta)
    }
}

/// Linear hypothesis `A beta = b` with `A` of full row rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

pub(crate) const RANK_TOL: f64 = 1e-10;

impl ConstraintSpec {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let q = a.nrows();
        if q == 0 {
            return Err(Error::Parameter("constraint needs at least one row".into()));
        }
        if q > a.ncols() {
            return Err(Error::RankDeficient {
                rank: a.ncols(),
                rows: q,
            });
        }
        if b.len() != q {
            return Err(Error::DimensionMismatch {
                what: "constraint right-hand side",
                expected: q,
                got: b.len(),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("constraint entries must be finite".into()));
        }
        let sv = a.clone().svd(false, false).singular_values;
        let rank = sv.iter().filter(|&&s| s > RANK_TOL).count();
        if rank < q {
            return Err(Error::RankDeficient { rank, rows: q });
        }
        Ok(Self { a, b })
    }

    /// `beta = 0`: the equal-distributions hypothesis.
    pub fn all_equal(m: usize, d: usize) -> Self {
        Self {
            a: DMatrix::identity(m * d, m * d),
            b: DVector::zeros(m * d),
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn q(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_beta(&self) -> usize {
        self.a.ncols()
    }

    pub fn residual(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.a * beta - &self.b
    }

    /// The same hypothesis on the first `cols` coordinates of `beta`; fails if
    /// any later column of `A` is nonzero.
    pub fn leading(&self, cols: usize) -> Result<Self> {
        if cols > self.n_beta() {
            return Err(Error::DimensionMismatch {
                what: "constraint columns",
                expected: self.n_beta(),
                got: cols,
            });
        }
        if self.a.columns(cols, self.n_beta() - cols).iter().any(|&v| v != 0.0) {
            return Err(Error::Parameter(format!(
                "hypothesis involves coefficients beyond the first {cols}"
            )));
        }
        Self::new(self.a.columns(0, cols).clone_owned(), self.b.clone())
    }

    /// True when the constraint is exactly `beta = 0` with `q = md`.
    pub fn is_full_equality(&self) -> bool {
        self.q() == self.n_beta() && self.b.iter().all(|&v| v == 0.0) && self.a == DMatrix::identity(self.q(), self.q())
    }
}

/// Closed-form DRM parameters of `N(mu_k, sigma_k)` relative to `N(mu_0, sigma_0)`
/// under the basis `(x, x^2)`.
pub fn normal_drm_params(mu0: f64, sigma0: f64, muk: f64, sigmak: f64) -> Result<(f64, [f64; 2])> {
    if !(sigma0 > 0.0) || !(sigmak > 0.0) {
        return Err(Error::Parameter(format!(
            "standard deviations must be positive, got {sigma0} and {sigmak}"
        )));
    }
    let v0 = sigma0 * sigma0;
    let vk = sigmak * sigmak;
    let beta = [muk / vk - mu0 / v0, 0.5 / v0 - 0.5 / vk];
    let alpha = (sigma0 / sigmak).ln() + mu0 * mu0 / (2.0 * v0) - muk * muk / (2.0 * vk);
    Ok((alpha, beta))
}

/// Closed-form DRM parameters of `Gamma(shape_k, rate_k)` relative to
/// `Gamma(shape_0, rate_0)` under the basis `(x, log x)`.
pub fn gamma_drm_params(shape0: f64, rate0: f64, shapek: f64, ratek: f64) -> Result<(f64, [f64; 2])> {
    if [shape0, rate0, shapek, ratek].iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Parameter("gamma shape and rate must be positive".into()));
    }
    let beta = [rate0 - ratek, shapek - shape0];
    let alpha = shapek * ratek.ln() - crate::distributions::ln_gamma(shapek) - shape0 * rate0.ln()
        + crate::distributions::ln_gamma(shape0);
    Ok((alpha, beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_evaluates_terms_in_order() {
        let q = BasisFn::parse("x,x2").unwrap();
        assert_eq!(q.eval(2.0).unwrap(), vec![2.0, 4.0]);
        let q = BasisFn::parse("logx,x").unwrap();
        assert_eq!(q.eval(1.0).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn log_term_rejects_zero() {
        let q = BasisFn::parse("logx,x").unwrap();
        match q.eval(0.0) {
            Err(Error::Domain { term, value }) => {
                assert_eq!(term, "logx");
                assert_eq!(value, 0.0);
            }
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(BasisFn::parse("x^0.8").unwrap().eval(-1.0).is_err());
    }

    #[test]
    fn basis_parsing_normalizes_and_rejects_duplicates() {
        let b = BasisSpec::parse("logx, sqrt, x, x^1.5, x^2").unwrap();
        assert_eq!(b.dim(), 5);
        assert_eq!(b.to_string(), "logx,x^0.5,x,x^1.5,x2");
        assert!(BasisSpec::parse("x,x^1").is_err());
        assert!(BasisSpec::parse("").is_err());
        assert!(BasisSpec::parse("x^-1").is_err());
        assert!(BasisSpec::parse("cosx").is_err());
    }

    #[test]
    fn validation_reports_each_problem() {
        let xx = BasisSpec::parse("x,x2").unwrap();
        let ok = validate_dataset(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0, 4.0]], &xx);
        assert!(ok.is_ok());

        let lx = BasisSpec::parse("logx,x").unwrap();
        let bad = validate_dataset(&[vec![1.0, -1.0], vec![2.0]], &lx);
        assert_eq!(bad.violations.len(), 1);
        assert!(matches!(
            bad.violations[0],
            Violation::Domain {
                sample: 0,
                index: 1,
                ..
            }
        ));

        let single = validate_dataset(&[vec![1.0, 2.0]], &xx);
        assert_eq!(single.violations, vec![Violation::TooFewSamples { found: 1 }]);

        let mixed = validate_dataset(&[vec![], vec![f64::NAN]], &xx);
        assert_eq!(mixed.violations.len(), 2);
    }

    #[test]
    fn multisample_proportions_sum_to_one() {
        let ms = MultiSample::new(vec![vec![1.0; 3], vec![2.0; 4], vec![0.5; 5]]).unwrap();
        assert_eq!(ms.m(), 2);
        assert_eq!(ms.total(), 12);
        let s: f64 = ms.proportions().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(MultiSample::new(vec![vec![1.0]]).is_err());
    }

    #[test]
    fn normal_embedding_values() {
        assert_eq!(normal_drm_params(0.0, 1.0, 0.0, 1.0).unwrap(), (0.0, [0.0, 0.0]));
        let (a, b) = normal_drm_params(0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(a, -0.5);
        assert_eq!(b, [1.0, 0.0]);
        let (a, b) = normal_drm_params(0.0, 1.0, 0.0, 2.0).unwrap();
        assert!((a - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(b, [0.0, 0.375]);
        assert!(normal_drm_params(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(normal_drm_params(0.0, 1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn gamma_embedding_matches_table_three_null() {
        let (_, b) = gamma_drm_params(2.0, 1.0, 4.0, 3.0).unwrap();
        assert_eq!(b, [-2.0, 2.0]);
    }

    #[test]
    fn constraint_rank_is_checked() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, -1.0, 0.0, 2.0, 0.0, -2.0, 0.0]);
        assert!(matches!(
            ConstraintSpec::new(a, DVector::zeros(2)),
            Err(Error::RankDeficient { rank: 1, rows: 2 })
        ));
        let c = ConstraintSpec::all_equal(2, 2);
        assert_eq!(c.q(), 4);
        assert!(c.is_full_equality());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn normal_embedding_identity_is_zero(mu in -50.0f64..50.0, sd in 0.01f64..20.0) {
            let (a, b) = normal_drm_params(mu, sd, mu, sd).unwrap();
            prop_assert_eq!(a, 0.0);
            prop_assert_eq!(b, [0.0, 0.0]);
        }

        #[test]
        fn basis_evaluation_is_pure(x in 1e-6f64..1e3) {
            let q = BasisFn::parse("logx,x^0.5,x,x^1.5,x2").unwrap();
            let a = q.eval(x).unwrap();
            let b = q.eval(x).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
        }

        #[test]
        fn validated_data_always_evaluates(xs in proptest::collection::vec(-5.0f64..5.0, 1..20)) {
            let spec = BasisSpec::parse("logx,x").unwrap();
            let samples = vec![xs.clone(), xs];
            let q = build_basis(spec.clone());
            if validate_dataset(&samples, &spec).is_ok() {
                for x in samples.iter().flatten() {
                    prop_assert!(q.eval(*x).is_ok());
                }
            }
        }
    }
}
