//! DELR, Wald and permutation tests and the empirical information matrix.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::del::{fit_constrained_with, fit_mele_with, supremum_value, DelObjective, FitOptions, FitResult};
use crate::distributions::ChiSquared;
use crate::error::{Error, Result};
use crate::linalg::{spd_condition, spd_inverse, sym_eigenvalues, symmetrize};
use crate::model::{BasisFn, ConstraintSpec, MultiSample, Theta};
use crate::seeding::stream_rng;

/// Largest tolerated condition number of `U_aa`.
pub const MAX_CONDITION: f64 = 1e12;
/// Negative DELR statistics down to this are roundoff and clamped to zero.
pub const NEGATIVE_SLACK: f64 = 1e-8;

/// Information matrix `U` in `(alpha, beta)` block order and its Schur
/// complement `Lambda = U_bb - U_ba U_aa^{-1} U_ab`.
#[derive(Debug, Clone)]
pub struct InfoMatrix {
    m: usize,
    d: usize,
    u: DMatrix<f64>,
    lambda: DMatrix<f64>,
}

impl InfoMatrix {
    pub fn from_u(mut u: DMatrix<f64>, m: usize, d: usize) -> Result<Self> {
        let p = m * (d + 1);
        if u.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                what: "information matrix",
                expected: p,
                got: u.nrows(),
            });
        }
        symmetrize(&mut u);
        let u_aa = u.view((0, 0), (m, m)).clone_owned();
        let cond = spd_condition(&u_aa);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::Singular(format!(
                "U_aa is numerically singular (condition {cond:.3e}); use more data or a smaller basis"
            )));
        }
        let chol = u_aa.cholesky().ok_or_else(|| Error::Singular("U_aa".into()))?;
        let u_ab = u.view((0, m), (m, m * d)).clone_owned();
        let u_bb = u.view((m, m), (m * d, m * d)).clone_owned();
        let mut lambda = u_bb - u_ab.transpose() * chol.solve(&u_ab);
        symmetrize(&mut lambda);
        Ok(Self { m, d, u, lambda })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn u_aa(&self) -> DMatrix<f64> {
        self.u.view((0, 0), (self.m, self.m)).clone_owned()
    }

    pub fn u_ab(&self) -> DMatrix<f64> {
        self.u.view((0, self.m), (self.m, self.m * self.d)).clone_owned()
    }

    pub fn u_ba(&self) -> DMatrix<f64> {
        self.u_ab().transpose()
    }

    pub fn u_bb(&self) -> DMatrix<f64> {
        let md = self.m * self.d;
        self.u.view((self.m, self.m), (md, md)).clone_owned()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        sym_eigenvalues(&self.u).min()
    }
}

/// `U_n = -n^{-1} d^2 l_n / d theta d theta'` at `theta`.
pub fn empirical_information(theta: &Theta, data: &MultiSample, basis: &BasisFn) -> Result<InfoMatrix> {
    theta.check_dims(data.m(), basis.dim())?;
    let obj = DelObjective::new(data, basis)?;
    empirical_information_with(&obj, &theta.to_vector())
}

pub fn empirical_information_with(obj: &DelObjective, theta: &DVector<f64>) -> Result<InfoMatrix> {
    let (_, _, h) = obj.evaluate(theta)?;
    InfoMatrix::from_u(-h / obj.n() as f64, obj.m(), obj.d())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Delr,
    Wald,
    Permutation,
    Anova,
    KruskalWallis,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Delr => "delr",
            Method::Wald => "wald",
            Method::Permutation => "permutation",
            Method::Anova => "anova",
            Method::KruskalWallis => "kruskal-wallis",
        })
    }
}

#[derive(Debug, Clone)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub method: Method,
    /// Unconstrained fit first, then the constrained fit when one was made.
    pub fits: Vec<FitResult>,
}

fn check_constraint(obj: &DelObjective, c: &ConstraintSpec) -> Result<()> {
    if c.n_beta() != obj.m() * obj.d() {
        return Err(Error::DimensionMismatch {
            what: "constraint columns",
            expected: obj.m() * obj.d(),
            got: c.n_beta(),
        });
    }
    Ok(())
}

fn warn_small_samples(data: &MultiSample, q: usize, d: usize) {
    let need = 10 * q * d;
    if let Some(nk) = data.sizes().into_iter().find(|&nk| nk < need) {
        log::warn!("sample of size {nk} is below the 10*q*d = {need} guideline; chi-square calibration may be poor");
    }
}

/// `R_n = 2 (l_n(theta_hat) - l_n(theta_tilde))`, clamping roundoff negatives.
pub fn delr_statistic(unconstrained: f64, constrained: f64) -> Result<f64> {
    let r = 2.0 * (unconstrained - constrained);
    if r >= 0.0 {
        Ok(r)
    } else if r >= -NEGATIVE_SLACK {
        Ok(0.0)
    } else {
        Err(Error::Consistency(format!(
            "constrained DEL exceeds unconstrained DEL (R_n = {r:.3e})"
        )))
    }
}

fn fit_both(obj: &DelObjective, c: &ConstraintSpec, opts: &FitOptions) -> Result<(FitResult, FitResult)> {
    let full = fit_mele_with(obj, opts).map_err(|e| Error::FitFailed {
        which: "unconstrained",
        source: Box::new(e),
    })?;
    let cons = fit_constrained_with(obj, c, opts).map_err(|e| Error::FitFailed {
        which: "constrained",
        source: Box::new(e),
    })?;
    Ok((full, cons))
}

/// DELR test of `A beta = b` with a chi-square(q) reference.
pub fn delr_test(data: &MultiSample, basis: &BasisFn, c: &ConstraintSpec) -> Result<TestResult> {
    let obj = DelObjective::new(data, basis)?;
    warn_small_samples(data, c.q(), basis.dim());
    delr_test_with(&obj, c, &FitOptions::default())
}

pub fn delr_test_with(obj: &DelObjective, c: &ConstraintSpec, opts: &FitOptions) -> Result<TestResult> {
    check_constraint(obj, c)?;
    let (full, cons) = fit_both(obj, c, opts)?;
    let statistic = delr_statistic(full.del_value, cons.del_value)?;
    let df = c.q();
    Ok(TestResult {
        statistic,
        df,
        p_value: ChiSquared::new(df as f64)?.sf(statistic),
        method: Method::Delr,
        fits: vec![full, cons],
    })
}

/// Wald test `n (A beta_hat - b)' (A Lambda_hat^{-1} A')^{-1} (A beta_hat - b)`.
pub fn wald_test(data: &MultiSample, basis: &BasisFn, c: &ConstraintSpec) -> Result<TestResult> {
    let obj = DelObjective::new(data, basis)?;
    warn_small_samples(data, c.q(), basis.dim());
    wald_test_with(&obj, c, &FitOptions::default())
}

pub fn wald_test_with(obj: &DelObjective, c: &ConstraintSpec, opts: &FitOptions) -> Result<TestResult> {
    check_constraint(obj, c)?;
    let full = fit_mele_with(obj, opts).map_err(|e| Error::FitFailed {
        which: "unconstrained",
        source: Box::new(e),
    })?;
    let info = empirical_information_with(obj, &full.theta_hat.to_vector())?;
    let lambda_inv = spd_inverse(info.lambda(), "Lambda_hat")?;
    let a = c.a();
    let middle = a * lambda_inv * a.transpose();
    let resid = c.residual(&full.theta_hat.beta_vector());
    let chol = middle
        .cholesky()
        .ok_or_else(|| Error::Singular("A Lambda_hat^{-1} A' in the Wald statistic".into()))?;
    let statistic = (obj.n() as f64 * resid.dot(&chol.solve(&resid))).max(0.0);
    let df = c.q();
    Ok(TestResult {
        statistic,
        df,
        p_value: ChiSquared::new(df as f64)?.sf(statistic),
        method: Method::Wald,
        fits: vec![full],
    })
}

/// Label-permutation test of `F_0 = ... = F_m` based on the DELR statistic.
///
/// Replicate `i` shuffles the pooled sample with its own RNG stream derived
/// from `(seed, i)`, so the result does not depend on the thread count.
/// Separable samples use the (finite) supremum of the DEL.
pub fn permutation_test(
    data: &MultiSample,
    basis: &BasisFn,
    c: &ConstraintSpec,
    reps: usize,
    seed: u64,
) -> Result<TestResult> {
    if !c.is_full_equality() {
        return Err(Error::Unsupported(
            "the permutation test only applies to the hypothesis that all distributions are equal".into(),
        ));
    }
    if reps < 99 {
        return Err(Error::Parameter(format!(
            "permutation test needs at least 99 replicates, got {reps}"
        )));
    }
    let obj = DelObjective::new(data, basis)?;
    check_constraint(&obj, c)?;
    let opts = FitOptions::default();
    let observed_sup = supremum_value(&obj, &opts)?;
    // under beta = 0 the constrained maximum is alpha = 0, l_n = 0
    let observed = delr_statistic(observed_sup, 0.0)?;
    let fits = fit_mele_with(&obj, &opts).map(|f| vec![f]).unwrap_or_default();

    let sizes = data.sizes();
    let pooled = data.pooled_values();
    let stats: Vec<Result<f64>> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, &[i as u64]);
            let mut values = pooled.clone();
            values.shuffle(&mut rng);
            let mut samples = Vec::with_capacity(sizes.len());
            let mut start = 0;
            for &nk in &sizes {
                samples.push(values[start..start + nk].to_vec());
                start += nk;
            }
            let perm = DelObjective::new(&MultiSample::new(samples)?, basis)?;
            delr_statistic(supremum_value(&perm, &opts)?, 0.0)
        })
        .collect();
    let mut exceed = 0usize;
    for s in stats {
        // compare with a relative slack so exact ties count as exceedances
        if s? >= observed - 1e-9 * (1.0 + observed.abs()) {
            exceed += 1;
        }
    }
    Ok(TestResult {
        statistic: observed,
        df: c.q(),
        p_value: (1 + exceed) as f64 / (reps + 1) as f64,
        method: Method::Permutation,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Family;
    use crate::seeding::stream_rng;

    fn draw(families: &[(Family, usize)], seed: u64) -> MultiSample {
        MultiSample::new(
            families
                .iter()
                .enumerate()
                .map(|(k, (f, n))| f.sample(&mut stream_rng(seed, &[k as u64]), *n))
                .collect(),
        )
        .unwrap()
    }

    fn normal(mean: f64, sd: f64) -> Family {
        Family::Normal { mean, sd }
    }

    #[test]
    fn empirical_information_is_scaled_negative_hessian() {
        let data = draw(
            &[(normal(0.0, 1.0), 40), (normal(0.5, 1.0), 30), (normal(0.0, 2.0), 20)],
            1,
        );
        let basis = BasisFn::parse("x,x2").unwrap();
        let theta = Theta::new(vec![0.1, -0.2], vec![0.3, -0.05, 0.1, 0.02]).unwrap();
        let info = empirical_information(&theta, &data, &basis).unwrap();
        let (_, h) = crate::del::del_derivatives(&theta, &data, &basis).unwrap();
        let expect = -h / 90.0;
        assert!((info.u() - expect).abs().max() < 1e-12);
        assert!(info.min_eigenvalue() > 0.0);
    }

    #[test]
    fn information_at_zero_for_two_halves() {
        let data = MultiSample::new(vec![vec![0.5, 1.0, 2.0], vec![0.7, 1.1, 3.0]]).unwrap();
        let basis = BasisFn::parse("x").unwrap();
        let info = empirical_information(&Theta::zeros(1, 1), &data, &basis).unwrap();
        assert!((info.u()[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn singular_alpha_block_is_reported() {
        let data = MultiSample::new(vec![vec![1.0; 5], vec![1.0; 5]]).unwrap();
        let basis = BasisFn::parse("x").unwrap();
        let theta = Theta::new(vec![80.0], vec![0.0]).unwrap();
        assert!(matches!(
            empirical_information(&theta, &data, &basis),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn satisfied_constraint_gives_zero_statistic() {
        let data = draw(&[(normal(0.0, 1.0), 50), (normal(1.0, 1.0), 50)], 2);
        let basis = BasisFn::parse("x,x2").unwrap();
        let fit = crate::del::fit_mele(&data, &basis, &FitOptions::default()).unwrap();
        let c = ConstraintSpec::new(DMatrix::identity(2, 2), fit.theta_hat.beta_vector()).unwrap();
        let r = delr_test(&data, &basis, &c).unwrap();
        assert!(r.statistic < 1e-9, "{}", r.statistic);
        assert!(r.p_value > 1.0 - 1e-8);
        let w = wald_test(&data, &basis, &c).unwrap();
        assert!(w.statistic < 1e-12);
        assert!(w.p_value > 1.0 - 1e-10);
    }

    #[test]
    fn delr_and_wald_agree_on_large_null_data() {
        let data = draw(
            &[
                (normal(0.0, 1.0), 2000),
                (normal(0.0, 1.0), 2000),
                (normal(0.0, 1.0), 2000),
            ],
            3,
        );
        let basis = BasisFn::parse("x,x2").unwrap();
        let c = ConstraintSpec::all_equal(2, 2);
        let r = delr_test(&data, &basis, &c).unwrap();
        let w = wald_test(&data, &basis, &c).unwrap();
        assert!(
            (r.statistic - w.statistic).abs() <= 0.1 * r.statistic.max(w.statistic) + 0.05,
            "delr {} wald {}",
            r.statistic,
            w.statistic
        );
        assert_eq!(r.df, 4);
    }

    #[test]
    fn statistic_clamping() {
        assert_eq!(delr_statistic(1.0, 1.0 + 1e-9).unwrap(), 0.0);
        assert!(matches!(delr_statistic(1.0, 1.1), Err(Error::Consistency(_))));
    }

    #[test]
    fn permutation_detects_separated_samples() {
        let data = draw(&[(normal(0.0, 1.0), 30), (normal(5.0, 1.0), 30)], 4);
        let basis = BasisFn::parse("x").unwrap();
        let c = ConstraintSpec::all_equal(1, 1);
        let r = permutation_test(&data, &basis, &c, 199, 9).unwrap();
        assert_eq!(r.p_value, 1.0 / 200.0);
        let again = permutation_test(&data, &basis, &c, 199, 9).unwrap();
        assert_eq!(r.p_value, again.p_value);
        assert_eq!(r.statistic, again.statistic);
    }

    #[test]
    fn permutation_rejects_other_hypotheses() {
        let data = draw(&[(normal(0.0, 1.0), 30), (normal(0.0, 1.0), 30)], 5);
        let basis = BasisFn::parse("x").unwrap();
        let c = ConstraintSpec::new(DMatrix::identity(1, 1), DVector::from_vec(vec![0.5])).unwrap();
        assert!(matches!(
            permutation_test(&data, &basis, &c, 199, 1),
            Err(Error::Unsupported(_))
        ));
        let c = ConstraintSpec::all_equal(1, 1);
        assert!(matches!(
            permutation_test(&data, &basis, &c, 50, 1),
            Err(Error::Parameter(_))
        ));
    }
}
