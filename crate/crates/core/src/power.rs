//! Local power analysis: theoretical information matrices by quadrature,
//! the noncentrality of the DELR statistic under local alternatives, power,
//! sample size, and the pooled-versus-subset design comparison.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};

use crate::distributions::{ChiSquared, NoncentralChiSquared};
use crate::error::{Error, Result};
use crate::family::{BaselineSpec, Family};
use crate::infer::InfoMatrix;
use crate::model::{BasisFn, ConstraintSpec};
use crate::quadrature::QuadOptions;

/// Largest sample size considered by [`sample_size`].
pub const MAX_SAMPLE_SIZE: u64 = 10_000_000;

fn check_rho(rho: &[f64]) -> Result<()> {
    if rho.len() < 2 {
        return Err(Error::Parameter("need proportions for at least two populations".into()));
    }
    if rho.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(Error::Parameter(format!("proportions must lie in (0, 1): {rho:?}")));
    }
    let total: f64 = rho.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Parameter(format!("proportions sum to {total}, not 1")));
    }
    Ok(())
}

fn check_support(family: &Family, basis: &BasisFn) -> Result<()> {
    let whole_line = matches!(family, Family::Normal { .. });
    if whole_line && basis.spec().requires_positive() {
        return Err(Error::Parameter(format!(
            "basis `{}` is undefined on part of the support of {family}",
            basis.spec()
        )));
    }
    Ok(())
}

/// Runs `f` under quadrature, surfacing the first basis-evaluation error.
fn integrate_basis<F>(f0: &Family, dim: usize, opts: QuadOptions, what: &str, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(f64, f64, &mut [f64]) -> Result<()>,
{
    let failure = RefCell::new(None);
    let res = f0.integrate_weighted(
        dim,
        |x, lw, out| {
            if let Err(e) = f(x, lw, out) {
                failure.borrow_mut().get_or_insert(e);
                out.iter_mut().for_each(|o| *o = 0.0);
            }
        },
        opts,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    match res {
        Ok(r) => Ok(r.value),
        Err(Error::Quadrature(msg)) => Err(Error::Quadrature(format!("{what}: {msg}"))),
        Err(e) => Err(e),
    }
}

/// `alpha_k* = -log E_0[exp(beta_k*' q(X))]` for every `k = 1..m`.
pub fn normalizing_alphas(f0: &BaselineSpec, beta_star: &[f64], basis: &BasisFn) -> Result<Vec<f64>> {
    let d = basis.dim();
    if d == 0 || !beta_star.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            what: "beta_star",
            expected: d,
            got: beta_star.len(),
        });
    }
    let m = beta_star.len() / d;
    let family = f0.family();
    check_support(family, basis)?;
    let mut q = vec![0.0; d];
    let mut moments = Vec::with_capacity(m);
    for k in 0..m {
        let beta = &beta_star[k * d..(k + 1) * d];
        let what = format!("moment E0[exp(beta_{}' q(X))]", k + 1);
        let v = integrate_basis(family, 1, QuadOptions::default(), &what, |x, lw, out| {
            basis.eval_into(x, &mut q)?;
            let e: f64 = beta.iter().zip(&q).map(|(b, v)| b * v).sum();
            out[0] = (e + lw).exp();
            Ok(())
        })?[0];
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Quadrature(format!("{what} is not finite (got {v})")));
        }
        moments.push(-v.ln());
    }
    Ok(moments)
}

/// Population information matrix `U` of the DEL at `theta*`, with `alpha*`
/// recomputed from `beta*` and `F_0`.
pub fn theoretical_information(
    f0: &BaselineSpec,
    beta_star: &[f64],
    rho: &[f64],
    basis: &BasisFn,
) -> Result<InfoMatrix> {
    check_rho(rho)?;
    let d = basis.dim();
    let m = rho.len() - 1;
    if beta_star.len() != m * d {
        return Err(Error::DimensionMismatch {
            what: "beta_star",
            expected: m * d,
            got: beta_star.len(),
        });
    }
    let alpha = normalizing_alphas(f0, beta_star, basis)?;
    let log_rho: Vec<f64> = rho.iter().map(|r| r.ln()).collect();
    let p = m * (d + 1);
    let dim = p * (p + 1) / 2;
    let mut q = vec![0.0; d];
    let mut big_q = vec![0.0; d + 1];
    let mut z = vec![0.0; m + 1];
    let mut pi = vec![0.0; m];
    // one more decimal than the per-entry target
    let opts = QuadOptions {
        abs_tol: 1e-10,
        rel_tol: 1e-12,
        max_intervals: 4000,
    };
    let vals = integrate_basis(f0.family(), dim, opts, "information matrix", |x, lw, out| {
        basis.eval_into(x, &mut q)?;
        z[0] = log_rho[0];
        for k in 1..=m {
            let beta = &beta_star[(k - 1) * d..k * d];
            z[k] = log_rho[k] + alpha[k - 1] + beta.iter().zip(&q).map(|(b, v)| b * v).sum::<f64>();
        }
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = zmax + z.iter().map(|v| (v - zmax).exp()).sum::<f64>().ln();
        for k in 1..=m {
            pi[k - 1] = (z[k] - lse).exp();
        }
        // s f_0 |dx/dt|, formed in log space
        let w = (lse + lw).exp();
        big_q[0] = 1.0;
        big_q[1..].copy_from_slice(&q);
        let mut idx = 0;
        for i in 0..p {
            let (r, a) = unflatten(m, d, i);
            for j in i..p {
                let (t, b) = unflatten(m, d, j);
                let h = if r == t { pi[r - 1] } else { 0.0 } - pi[r - 1] * pi[t - 1];
                out[idx] = w * h * big_q[a] * big_q[b];
                idx += 1;
            }
        }
        Ok(())
    })?;
    let mut u = DMatrix::zeros(p, p);
    let mut idx = 0;
    for i in 0..p {
        for j in i..p {
            u[(i, j)] = vals[idx];
            u[(j, i)] = vals[idx];
            idx += 1;
        }
    }
    InfoMatrix::from_u(u, m, d)
}

/// Inverse of [`crate::del::param_index`]: flattened index to `(population, Q coordinate)`.
fn unflatten(m: usize, d: usize, i: usize) -> (usize, usize) {
    if i < m {
        (i + 1, 0)
    } else {
        let j = i - m;
        (j / d + 1, j % d + 1)
    }
}

/// Local alternative `beta_k = beta_k* + n_k^{-1/2} c_k` with limiting
/// proportions `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAlternative {
    beta_star: Vec<f64>,
    drifts: Vec<Vec<f64>>,
    rho: Vec<f64>,
}

impl LocalAlternative {
    pub fn new(beta_star: Vec<f64>, drifts: Vec<Vec<f64>>, rho: Vec<f64>) -> Result<Self> {
        check_rho(&rho)?;
        let m = rho.len() - 1;
        if drifts.len() != m {
            return Err(Error::DimensionMismatch {
                what: "drift vectors",
                expected: m,
                got: drifts.len(),
            });
        }
        let d = drifts[0].len();
        if d == 0 || drifts.iter().any(|c| c.len() != d) {
            return Err(Error::Parameter("drift vectors must share one positive length".into()));
        }
        if beta_star.len() != m * d {
            return Err(Error::DimensionMismatch {
                what: "beta_star",
                expected: m * d,
                got: beta_star.len(),
            });
        }
        if beta_star.iter().chain(drifts.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite local alternative".into()));
        }
        Ok(Self { beta_star, drifts, rho })
    }

    pub fn m(&self) -> usize {
        self.drifts.len()
    }

    pub fn d(&self) -> usize {
        self.drifts[0].len()
    }

    pub fn beta_star(&self) -> &[f64] {
        &self.beta_star
    }

    pub fn drifts(&self) -> &[Vec<f64>] {
        &self.drifts
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// `eta = (rho_1^{-1/2} c_1, ..., rho_m^{-1/2} c_m)`.
    pub fn eta(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.m() * self.d(),
            self.drifts
                .iter()
                .enumerate()
                .flat_map(|(k, c)| c.iter().map(move |v| v / self.rho[k + 1].sqrt())),
        )
    }
}

/// `J` with `A J = 0`, or `Full` when `q = md` and no free direction remains.
#[derive(Debug, Clone, PartialEq)]
pub enum NullJacobian {
    Full,
    Matrix {
        /// `md x (md - q)` in the original coordinates.
        j: DMatrix<f64>,
        /// Columns of `A` forming the invertible block, in pivot order.
        pivots: Vec<usize>,
    },
}

/// Greedy column pivoting: repeatedly take the column with the largest norm
/// after projecting out those already chosen (ties go to the lowest index).
fn pivot_columns(a: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (q, p) = a.shape();
    let mut resid = a.clone();
    let mut chosen = Vec::with_capacity(q);
    let scale = a.abs().max().max(1.0);
    for _ in 0..q {
        let mut best = None;
        let mut best_norm = 0.0;
        for c in 0..p {
            if chosen.contains(&c) {
                continue;
            }
            let nrm = resid.column(c).norm();
            if nrm > best_norm * (1.0 + 1e-12) {
                best = Some(c);
                best_norm = nrm;
            }
        }
        let c = match best {
            Some(c) if best_norm > 1e-10 * scale => c,
            _ => {
                return Err(Error::RankDeficient {
                    rank: chosen.len(),
                    rows: q,
                })
            }
        };
        let u = resid.column(c) / best_norm;
        for k in 0..p {
            let proj = u.dot(&resid.column(k));
            let mut col = resid.column_mut(k);
            col.axpy(-proj, &u, 1.0);
        }
        chosen.push(c);
    }
    Ok(chosen)
}

pub fn null_jacobian(c: &ConstraintSpec) -> Result<NullJacobian> {
    let a = c.a();
    let (q, p) = a.shape();
    if q == p {
        return Ok(NullJacobian::Full);
    }
    let pivots = pivot_columns(a)?;
    let rest: Vec<usize> = (0..p).filter(|i| !pivots.contains(i)).collect();
    let nabla1 = a.select_columns(&pivots);
    let nabla2 = a.select_columns(&rest);
    let top = nabla1
        .lu()
        .solve(&nabla2)
        .ok_or(Error::RankDeficient { rank: q - 1, rows: q })?;
    let mut j = DMatrix::zeros(p, p - q);
    for (i, &row) in pivots.iter().enumerate() {
        for col in 0..(p - q) {
            j[(row, col)] = -top[(i, col)];
        }
    }
    for (col, &row) in rest.iter().enumerate() {
        j[(row, col)] = 1.0;
    }
    Ok(NullJacobian::Matrix { j, pivots })
}

/// `delta^2 = eta' {Lambda - Lambda J (J' Lambda J)^{-1} J' Lambda} eta`.
pub fn noncentrality_eta(eta: &DVector<f64>, info: &InfoMatrix, c: &ConstraintSpec) -> Result<f64> {
    let lambda = info.lambda();
    if eta.len() != lambda.nrows() || c.n_beta() != lambda.nrows() {
        return Err(Error::DimensionMismatch {
            what: "eta / constraint",
            expected: lambda.nrows(),
            got: eta.len().max(c.n_beta()),
        });
    }
    let l_eta = lambda * eta;
    let full = eta.dot(&l_eta);
    let delta2 = match null_jacobian(c)? {
        NullJacobian::Full => full,
        NullJacobian::Matrix { j, .. } => {
            let jtlj = j.transpose() * lambda * &j;
            let chol = jtlj.cholesky().ok_or_else(|| Error::Singular("J' Lambda J".into()))?;
            let v = j.transpose() * &l_eta;
            full - v.dot(&chol.solve(&v))
        }
    };
    if delta2 >= 0.0 {
        Ok(delta2)
    } else if delta2 >= -1e-10 * (1.0 + full.abs()) {
        Ok(0.0)
    } else {
        Err(Error::Consistency(format!("negative noncentrality {delta2:.3e}")))
    }
}

pub fn noncentrality(alt: &LocalAlternative, info: &InfoMatrix, c: &ConstraintSpec) -> Result<f64> {
    let res = c.residual(&DVector::from_column_slice(alt.beta_star()));
    let tol = 1e-10 * (1.0 + c.b().amax());
    if res.amax() > tol {
        return Err(Error::Parameter(format!(
            "beta_star violates the null constraint (residual {:.3e})",
            res.amax()
        )));
    }
    noncentrality_eta(&alt.eta(), info, c)
}

/// `P(chi2_q(delta2) >= chi2_{q, 1-level})`.
pub fn local_power(delta2: f64, q: usize, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(format!("level must lie in (0, 1), got {level}")));
    }
    if !(delta2 >= 0.0) || !delta2.is_finite() {
        return Err(Error::Parameter(format!(
            "noncentrality must be finite and >= 0, got {delta2}"
        )));
    }
    if q == 0 {
        return Err(Error::Parameter("degrees of freedom must be positive".into()));
    }
    if delta2 == 0.0 {
        return Ok(level);
    }
    let crit = ChiSquared::new(q as f64)?.quantile(1.0 - level)?;
    Ok(NoncentralChiSquared::new(q as f64, delta2)?.sf(crit))
}

#[derive(Debug, Clone)]
pub struct PowerResult {
    pub delta2: f64,
    pub power: f64,
    pub df: usize,
    pub alpha_star: Vec<f64>,
    pub info: InfoMatrix,
}

/// Noncentrality and local power of the DELR test for `alt` under `F_0`.
pub fn analyze_power(
    f0: &BaselineSpec,
    basis: &BasisFn,
    alt: &LocalAlternative,
    c: &ConstraintSpec,
    level: f64,
) -> Result<PowerResult> {
    if alt.d() != basis.dim() {
        return Err(Error::DimensionMismatch {
            what: "drift length vs basis dimension",
            expected: basis.dim(),
            got: alt.d(),
        });
    }
    let info = theoretical_information(f0, alt.beta_star(), alt.rho(), basis)?;
    let delta2 = noncentrality(alt, &info, c)?;
    Ok(PowerResult {
        delta2,
        power: local_power(delta2, c.q(), level)?,
        df: c.q(),
        alpha_star: normalizing_alphas(f0, alt.beta_star(), basis)?,
        info,
    })
}

#[derive(Debug, Clone)]
pub struct SampleSizeResult {
    pub n_star: u64,
    pub power_at_n_star: f64,
    /// Power at `n_star - 1` (the level when `n_star = 1`).
    pub power_below: f64,
    /// Noncentrality per unit of `n`; `delta2(n) = n * delta2_unit`.
    pub delta2_unit: f64,
}

/// Smallest total `n` whose local power reaches `target` when the
/// alternative sits at the fixed offsets `beta_k = beta_k* + shift_k`.
///
/// With `c_k(n) = shift_k sqrt(rho_k n)`, `eta = sqrt(n) shift` and hence
/// `delta2(n) = n delta2(1)`.
#[allow(clippy::too_many_arguments)]
pub fn sample_size(
    target: f64,
    level: f64,
    shifts: &[Vec<f64>],
    rho: &[f64],
    f0: &BaselineSpec,
    beta_star: &[f64],
    basis: &BasisFn,
    c: &ConstraintSpec,
) -> Result<SampleSizeResult> {
    if !(target > level && target < 1.0) {
        return Err(Error::Parameter(format!(
            "target power must lie in (level, 1) = ({level}, 1), got {target}"
        )));
    }
    let unit_drifts: Vec<Vec<f64>> = shifts
        .iter()
        .enumerate()
        .map(|(k, s)| {
            s.iter()
                .map(|v| v * rho.get(k + 1).copied().unwrap_or(1.0).sqrt())
                .collect()
        })
        .collect();
    let alt = LocalAlternative::new(beta_star.to_vec(), unit_drifts, rho.to_vec())?;
    let info = theoretical_information(f0, beta_star, rho, basis)?;
    let unit = noncentrality(&alt, &info, c)?;
    let q = c.q();
    let power = |n: u64| local_power(unit * n as f64, q, level);
    if unit == 0.0 {
        return Err(Error::Unreachable {
            target,
            achieved: level,
            max_n: MAX_SAMPLE_SIZE,
        });
    }
    let mut hi = 1u64;
    while power(hi)? < target {
        if hi >= MAX_SAMPLE_SIZE {
            return Err(Error::Unreachable {
                target,
                achieved: power(MAX_SAMPLE_SIZE)?,
                max_n: MAX_SAMPLE_SIZE,
            });
        }
        hi = (hi * 2).min(MAX_SAMPLE_SIZE);
    }
    // invariant: power(lo) < target <= power(hi), with power(0) = level
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if power(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(SampleSizeResult {
        n_star: hi,
        power_at_n_star: power(hi)?,
        power_below: if hi > 1 { power(hi - 1)? } else { level },
        delta2_unit: unit,
    })
}

/// Everything needed to compute the noncentrality of one study design.
#[derive(Debug, Clone)]
pub struct DesignSpec {
    pub f0: BaselineSpec,
    pub basis: BasisFn,
    pub alternative: LocalAlternative,
    pub constraint: ConstraintSpec,
}

impl DesignSpec {
    pub fn noncentrality(&self) -> Result<f64> {
        let info = theoretical_information(
            &self.f0,
            self.alternative.beta_star(),
            self.alternative.rho(),
            &self.basis,
        )?;
        noncentrality(&self.alternative, &info, &self.constraint)
    }

    /// The design restricted to samples `0..=r`: proportions renormalised,
    /// constraint restricted to the `beta_1..beta_r` columns (the others must
    /// be zero), and the drifts of the dropped samples discarded.
    pub fn subset(&self, r: usize) -> Result<DesignSpec> {
        let alt = &self.alternative;
        let (m, d) = (alt.m(), alt.d());
        if r == 0 || r > m {
            return Err(Error::IndexOutOfRange { index: r, max: m });
        }
        let constraint = self.constraint.leading(r * d)?;
        let total: f64 = alt.rho()[..=r].iter().sum();
        let rho = alt.rho()[..=r].iter().map(|v| v / total).collect();
        Ok(DesignSpec {
            f0: self.f0,
            basis: self.basis.clone(),
            alternative: LocalAlternative::new(alt.beta_star()[..r * d].to_vec(), alt.drifts()[..r].to_vec(), rho)?,
            constraint,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignComparison {
    pub delta2_subset: f64,
    pub delta2_pooled: f64,
    pub pooled_dominates: bool,
}

/// Noncentralities of the subset design (samples `0..=r`) and the pooled
/// design (all samples, zero drift beyond `r`) for the same hypothesis on
/// `(beta_1, ..., beta_r)`.
pub fn compare_designs(subset: &DesignSpec, pooled: &DesignSpec) -> Result<DesignComparison> {
    let r = subset.alternative.m();
    let m = pooled.alternative.m();
    let mismatch = |what: &str| Error::Parameter(format!("subset and pooled designs differ in {what}"));
    if subset.f0 != pooled.f0 {
        return Err(mismatch("the baseline"));
    }
    if subset.basis != pooled.basis {
        return Err(mismatch("the basis"));
    }
    if r > m {
        return Err(mismatch("size: the subset has more samples"));
    }
    if pooled.alternative.drifts()[r..].iter().flatten().any(|&v| v != 0.0) {
        return Err(mismatch(
            "drifts: pooled samples beyond the subset must have zero drift",
        ));
    }
    let expected = pooled.subset(r)?;
    if expected.constraint != subset.constraint {
        return Err(mismatch("the hypothesis"));
    }
    if expected.alternative.drifts() != subset.alternative.drifts()
        || expected.alternative.beta_star() != subset.alternative.beta_star()
    {
        return Err(mismatch("beta_star or drifts"));
    }
    let rho_ok = expected
        .alternative
        .rho()
        .iter()
        .zip(subset.alternative.rho())
        .all(|(a, b)| (a - b).abs() <= 1e-12);
    if !rho_ok {
        return Err(mismatch(
            "proportions (subset must be the renormalised pooled proportions)",
        ));
    }
    let delta2_subset = subset.noncentrality()?;
    let delta2_pooled = if r == m { delta2_subset } else { pooled.noncentrality()? };
    Ok(DesignComparison {
        delta2_subset,
        delta2_pooled,
        pooled_dominates: delta2_pooled >= delta2_subset - 1e-8,
    })
}

/// `Lambda^{1/2} {Lambda^{-1} - J (J' Lambda J)^{-1} J'} Lambda^{1/2}`, the
/// projector behind the chi-square(q) limit.
pub fn null_projector(lambda: &DMatrix<f64>, c: &ConstraintSpec) -> Result<DMatrix<f64>> {
    let eig = lambda.clone().symmetric_eigen();
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Singular("Lambda is not positive definite".into()));
    }
    let half =
        &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
    let inv = crate::linalg::spd_inverse(lambda, "Lambda")?;
    let inner = match null_jacobian(c)? {
        NullJacobian::Full => inv,
        NullJacobian::Matrix { j, .. } => {
            let m = crate::linalg::spd_inverse(&(j.transpose() * lambda * &j), "J' Lambda J")?;
            inv - &j * m * j.transpose()
        }
    };
    Ok(&half * inner * &half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::del::param_index;
    use crate::model::BasisSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gamma21() -> BaselineSpec {
        BaselineSpec::new(Family::Gamma { shape: 2.0, rate: 1.0 }).unwrap()
    }

    fn std_normal() -> BaselineSpec {
        BaselineSpec::new(Family::Normal { mean: 0.0, sd: 1.0 }).unwrap()
    }

    fn example1_constraint() -> ConstraintSpec {
        let mut a = DMatrix::zeros(2, 4);
        a[(0, 0)] = 2.0;
        a[(1, 1)] = 2.0;
        a[(0, 2)] = -1.0;
        a[(1, 3)] = -1.0;
        ConstraintSpec::new(a, DVector::zeros(2)).unwrap()
    }

    #[test]
    fn gaussian_information_at_zero() {
        let basis = BasisFn::parse("x,x2").unwrap();
        let info = theoretical_information(&std_normal(), &[0.0, 0.0], &[0.5, 0.5], &basis).unwrap();
        let u = info.u();
        let expect = DMatrix::from_row_slice(3, 3, &[0.25, 0.0, 0.25, 0.0, 0.25, 0.0, 0.25, 0.0, 0.75]);
        assert!((u - &expect).abs().max() < 1e-8, "{u}");
        let lam = DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.5]);
        assert!((info.lambda() - lam).abs().max() < 1e-8);
    }

    #[test]
    fn alphas_match_gamma_closed_form() {
        let basis = BasisFn::parse("x,logx").unwrap();
        let alpha = normalizing_alphas(&gamma21(), &[-1.0, 1.0, -2.0, 2.0], &basis).unwrap();
        let (a1, _) = crate::model::gamma_drm_params(2.0, 1.0, 3.0, 2.0).unwrap();
        let (a2, _) = crate::model::gamma_drm_params(2.0, 1.0, 4.0, 3.0).unwrap();
        assert!((alpha[0] - a1).abs() < 1e-10);
        assert!((alpha[1] - a2).abs() < 1e-10);
    }

    #[test]
    fn divergent_moment_is_named() {
        let basis = BasisFn::parse("x").unwrap();
        match normalizing_alphas(&gamma21(), &[1.5], &basis) {
            Err(Error::Quadrature(msg)) => assert!(msg.contains("beta_1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn jacobian_examples() {
        match null_jacobian(&example1_constraint()).unwrap() {
            NullJacobian::Matrix { j, pivots } => {
                assert_eq!(pivots, vec![0, 1]);
                let expect = DMatrix::from_row_slice(4, 2, &[0.5, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 1.0]);
                assert!((j - expect).abs().max() < 1e-15);
            }
            NullJacobian::Full => panic!("expected a matrix"),
        }
        let mut a = DMatrix::zeros(2, 4);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 1.0;
        let c = ConstraintSpec::new(a.clone(), DVector::zeros(2)).unwrap();
        match null_jacobian(&c).unwrap() {
            NullJacobian::Matrix { j, .. } => {
                let expect = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
                assert_eq!(j, expect);
                assert!((a * j).abs().max() < 1e-12);
            }
            NullJacobian::Full => panic!("expected a matrix"),
        }
        assert_eq!(
            null_jacobian(&ConstraintSpec::all_equal(2, 2)).unwrap(),
            NullJacobian::Full
        );
    }

    #[test]
    fn example1_noncentrality_and_power() {
        let basis = BasisFn::parse("x,logx").unwrap();
        let alt = LocalAlternative::new(
            vec![-1.0, 1.0, -2.0, 2.0],
            vec![vec![2.0, 3.0], vec![-1.0, 0.0]],
            vec![0.4, 0.3, 0.3],
        )
        .unwrap();
        let res = analyze_power(&gamma21(), &basis, &alt, &example1_constraint(), 0.05).unwrap();
        assert!((res.delta2 - 10.29).abs() < 0.05, "{}", res.delta2);
        assert!((res.power - 0.83).abs() < 0.01, "{}", res.power);
    }

    #[test]
    fn column_space_drift_has_zero_noncentrality() {
        let basis = BasisFn::parse("x,logx").unwrap();
        let info = theoretical_information(&gamma21(), &[-1.0, 1.0, -2.0, 2.0], &[0.4, 0.3, 0.3], &basis).unwrap();
        let c = example1_constraint();
        let NullJacobian::Matrix { j, .. } = null_jacobian(&c).unwrap() else {
            panic!()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let w = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let eta = &j * w;
            assert!(noncentrality_eta(&eta, &info, &c).unwrap() <= 1e-8);
        }
        let off = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        assert!(noncentrality_eta(&off, &info, &c).unwrap() > 1e-3);
    }

    #[test]
    fn projector_is_idempotent_with_trace_q() {
        let basis = BasisFn::parse("x,logx").unwrap();
        let info = theoretical_information(&gamma21(), &[-1.0, 1.0, -2.0, 2.0], &[0.4, 0.3, 0.3], &basis).unwrap();
        for c in [example1_constraint(), ConstraintSpec::all_equal(2, 2)] {
            let p = null_projector(info.lambda(), &c).unwrap();
            assert!((&p * &p - &p).abs().max() < 1e-8);
            assert!((p.trace() - c.q() as f64).abs() < 1e-8);
        }
    }

    #[test]
    fn local_power_edges() {
        assert_eq!(local_power(0.0, 3, 0.05).unwrap(), 0.05);
        let a = local_power(1.0, 2, 0.05).unwrap();
        let b = local_power(2.0, 2, 0.05).unwrap();
        assert!(a > 0.05 && b > a);
        assert!(local_power(5.0, 2, 0.01).unwrap() < local_power(5.0, 2, 0.05).unwrap());
        assert!((local_power(10.29, 2, 0.05).unwrap() - 0.83).abs() < 0.005);
        assert!((local_power(5.90, 2, 0.05).unwrap() - 0.577).abs() < 0.005);
        assert!((local_power(6.67, 2, 0.05).unwrap() - 0.633).abs() < 0.005);
        assert!(local_power(1.0, 2, 1.5).is_err());
    }

    fn example2(shifts: &[Vec<f64>]) -> Result<SampleSizeResult> {
        sample_size(
            0.8,
            0.05,
            shifts,
            &[0.4, 0.3, 0.3],
            &gamma21(),
            &[-1.0, 1.0, -2.0, 2.0],
            &BasisFn::parse("x,logx").unwrap(),
            &example1_constraint(),
        )
    }

    #[test]
    fn example2_sample_size() {
        let res = example2(&[vec![0.5, 1.5], vec![0.5, 0.5]]).unwrap();
        assert!(res.n_star <= 50, "{}", res.n_star);
        assert!(res.power_at_n_star >= 0.8);
        assert!(res.power_below < 0.8);
        let doubled = example2(&[vec![1.0, 3.0], vec![1.0, 1.0]]).unwrap();
        assert!(doubled.n_star <= res.n_star);
        assert!(matches!(
            example2(&[vec![0.0, 0.0], vec![0.0, 0.0]]),
            Err(Error::Unreachable { .. })
        ));
    }

    fn example3_pooled() -> DesignSpec {
        let mut a = DMatrix::zeros(2, 4);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 1.0;
        DesignSpec {
            f0: std_normal(),
            basis: BasisFn::parse("x,x2").unwrap(),
            alternative: LocalAlternative::new(
                vec![6.0, -1.5, -0.25, 0.375],
                vec![vec![2.0, 2.0], vec![0.0, 0.0]],
                vec![0.5, 0.25, 0.25],
            )
            .unwrap(),
            constraint: ConstraintSpec::new(a, DVector::from_vec(vec![6.0, -1.5])).unwrap(),
        }
    }

    #[test]
    fn example3_design_comparison() {
        let pooled = example3_pooled();
        let subset = pooled.subset(1).unwrap();
        let cmp = compare_designs(&subset, &pooled).unwrap();
        assert!((cmp.delta2_subset - 5.90).abs() < 0.05, "{}", cmp.delta2_subset);
        assert!((cmp.delta2_pooled - 6.67).abs() < 0.05, "{}", cmp.delta2_pooled);
        assert!(cmp.pooled_dominates);
        let same = compare_designs(&pooled, &pooled).unwrap();
        assert_eq!(same.delta2_subset, same.delta2_pooled);
    }

    #[test]
    fn mismatched_designs_are_rejected() {
        let pooled = example3_pooled();
        let mut subset = pooled.subset(1).unwrap();
        subset.basis = BasisFn::parse("x").unwrap();
        assert!(compare_designs(&subset, &pooled).is_err());
        let mut other = pooled.subset(1).unwrap();
        other.f0 = gamma21();
        assert!(compare_designs(&other, &pooled).is_err());
    }

    #[test]
    fn unflatten_inverts_param_index() {
        for (m, d) in [(1, 1), (2, 3), (5, 2)] {
            for r in 1..=m {
                for a in 0..=d {
                    assert_eq!(unflatten(m, d, param_index(m, d, r, a)), (r, a));
                }
            }
        }
    }

    #[test]
    fn normal_baseline_with_log_basis_is_rejected() {
        let basis = crate::model::build_basis(BasisSpec::parse("logx").unwrap());
        assert!(normalizing_alphas(&std_normal(), &[1.0], &basis).is_err());
    }
}
