//! The dual empirical likelihood (DEL) of the density ratio model and its
//! maximization.
//!
//! With `lambda_r = n_r / n` and `phi_r(x) = exp(alpha_r + beta_r' q(x))`
//! (`phi_0 = 1`), the objective is
//!
//! ```text
//! l_n(theta) = sum_{k,j} [ -log sum_r lambda_r phi_r(x_kj) + log phi_k(x_kj) ]
//! ```
//!
//! It is concave on the whole parameter space. Parameters are flattened as
//! `(alpha_1..alpha_m, beta_1..beta_m)`; see [`param_index`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, min_norm_solution, null_space, symmetrize};
use crate::model::{BasisFn, ConstraintSpec, MultiSample, Theta};

/// Position of coordinate `a` of `Q = (1, q)` for population `r` (1-based) in
/// the flattened parameter vector.
#[inline]
pub fn param_index(m: usize, d: usize, r: usize, a: usize) -> usize {
    if a == 0 {
        r - 1
    } else {
        m + (r - 1) * d + (a - 1)
    }
}

/// Pre-evaluated data for repeated DEL evaluations.
#[derive(Debug, Clone)]
pub struct DelObjective {
    m: usize,
    d: usize,
    n: usize,
    log_lambda: Vec<f64>,
    labels: Vec<usize>,
    /// `n x d`, row major.
    q: Vec<f64>,
}

impl DelObjective {
    pub fn new(data: &MultiSample, basis: &BasisFn) -> Result<Self> {
        let d = basis.dim();
        let n = data.total();
        let mut q = vec![0.0; n * d];
        let mut labels = Vec::with_capacity(n);
        for (i, (k, x)) in data.pooled().enumerate() {
            basis.eval_into(x, &mut q[i * d..(i + 1) * d])?;
            labels.push(k);
        }
        let log_lambda = data.proportions().iter().map(|l| l.ln()).collect();
        Ok(Self {
            m: data.m(),
            d,
            n,
            log_lambda,
            labels,
            q,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_params(&self) -> usize {
        self.m * (self.d + 1)
    }

    /// Least upper bound `-sum_k n_k log lambda_k` of `l_n`, attained only in
    /// the limit when the samples are perfectly separable.
    pub fn upper_bound(&self) -> f64 {
        self.labels.iter().map(|&k| -self.log_lambda[k]).sum()
    }

    fn check(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                what: "theta",
                expected: self.n_params(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    /// Fills `eta[r-1] = alpha_r + beta_r' q(x_i)` and returns the log of
    /// `sum_r lambda_r phi_r(x_i)` by max-shifted log-sum-exp.
    #[inline]
    fn tilts(&self, theta: &DVector<f64>, i: usize, eta: &mut [f64]) -> f64 {
        let (m, d) = (self.m, self.d);
        let qi = &self.q[i * d..(i + 1) * d];
        let mut zmax = self.log_lambda[0];
        for r in 1..=m {
            let mut e = theta[r - 1];
            let off = m + (r - 1) * d;
            for a in 0..d {
                e += theta[off + a] * qi[a];
            }
            eta[r - 1] = e;
            zmax = zmax.max(self.log_lambda[r] + e);
        }
        let mut s = (self.log_lambda[0] - zmax).exp();
        for r in 1..=m {
            s += (self.log_lambda[r] + eta[r - 1] - zmax).exp();
        }
        zmax + s.ln()
    }

    pub fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check(theta)?;
        Ok(self.value_unchecked(theta))
    }

    fn value_unchecked(&self, theta: &DVector<f64>) -> f64 {
        let mut eta = vec![0.0; self.m];
        let mut total = 0.0;
        for i in 0..self.n {
            let lse = self.tilts(theta, i, &mut eta);
            let k = self.labels[i];
            total += if k == 0 { -lse } else { eta[k - 1] - lse };
        }
        total
    }

    /// Posterior-like weights `pi_r(x_i) = lambda_r phi_r / s` for `r = 1..m`.
    #[inline]
    fn weights(&self, eta: &[f64], lse: f64, pi: &mut [f64]) {
        for r in 1..=self.m {
            pi[r - 1] = (self.log_lambda[r] + eta[r - 1] - lse).exp();
        }
    }

    /// Value, gradient and Hessian.
    pub fn evaluate(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        self.check(theta)?;
        let (m, d) = (self.m, self.d);
        let p = self.n_params();
        let mut eta = vec![0.0; m];
        let mut pi = vec![0.0; m];
        let mut big_q = vec![0.0; d + 1];
        let mut value = 0.0;
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..self.n {
            let lse = self.tilts(theta, i, &mut eta);
            self.weights(&eta, lse, &mut pi);
            let k = self.labels[i];
            value += if k == 0 { -lse } else { eta[k - 1] - lse };
            big_q[0] = 1.0;
            big_q[1..].copy_from_slice(&self.q[i * d..(i + 1) * d]);
            for r in 1..=m {
                let coef = if k == r { 1.0 } else { 0.0 } - pi[r - 1];
                for a in 0..=d {
                    grad[param_index(m, d, r, a)] += coef * big_q[a];
                }
            }
            // -(diag(pi) - pi pi') kron Q Q', upper triangle only
            for r in 1..=m {
                for t in r..=m {
                    let w = if r == t { pi[r - 1] } else { 0.0 } - pi[r - 1] * pi[t - 1];
                    for a in 0..=d {
                        let ia = param_index(m, d, r, a);
                        let wa = w * big_q[a];
                        for b in 0..=d {
                            let jb = param_index(m, d, t, b);
                            if jb >= ia {
                                hess[(ia, jb)] -= wa * big_q[b];
                            } else if r != t {
                                // lower block entry mirrored into the upper triangle
                                hess[(jb, ia)] -= wa * big_q[b];
                            }
                        }
                    }
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                hess[(i, j)] = hess[(j, i)];
            }
        }
        Ok((value, grad, hess))
    }
}

/// `l_n(theta)` for the given data and basis.
pub fn del_value(theta: &Theta, data: &MultiSample, basis: &BasisFn) -> Result<f64> {
    theta.check_dims(data.m(), basis.dim())?;
    DelObjective::new(data, basis)?.value(&theta.to_vector())
}

/// Exact gradient and Hessian of `l_n` at `theta`.
pub fn del_derivatives(theta: &Theta, data: &MultiSample, basis: &BasisFn) -> Result<(DVector<f64>, DMatrix<f64>)> {
    theta.check_dims(data.m(), basis.dim())?;
    let (_, g, h) = DelObjective::new(data, basis)?.evaluate(&theta.to_vector())?;
    Ok((g, h))
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Converged when `||grad||_inf <= grad_tol * n`.
    pub grad_tol: f64,
    pub step_tol: f64,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
            step_tol: 1e-12,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub del_value: f64,
    /// Infinity norm of the (reduced, for constrained fits) gradient.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub constraint: Option<ConstraintSpec>,
}

impl FitResult {
    pub fn is_constrained(&self) -> bool {
        self.constraint.is_some()
    }
}

/// `theta = offset + basis * phi`; `basis = None` means the identity.
struct AffineMap {
    offset: DVector<f64>,
    basis: Option<DMatrix<f64>>,
}

impl AffineMap {
    fn dim(&self, full: usize) -> usize {
        self.basis.as_ref().map_or(full, |b| b.ncols())
    }

    fn theta(&self, phi: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            None => &self.offset + phi,
            Some(b) => &self.offset + b * phi,
        }
    }

    fn reduce(&self, g: DVector<f64>, h: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        match &self.basis {
            None => (g, h),
            Some(b) => {
                let bt = b.transpose();
                let mut hr = &bt * h * b;
                symmetrize(&mut hr);
                (bt * g, hr)
            }
        }
    }
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let neg = -h;
    neg.cholesky()
        .map(|c| c.solve(g))
        .filter(|d| d.iter().all(|v| v.is_finite()))
}

fn maximize(obj: &DelObjective, map: &AffineMap, opts: &FitOptions) -> Result<(DVector<f64>, f64, f64, usize)> {
    let full = obj.n_params();
    let dim = map.dim(full);
    let tol = opts.grad_tol * obj.n() as f64;
    let mut phi = DVector::zeros(dim);

    let eval = |phi: &DVector<f64>| -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let (f, g, h) = obj.evaluate(&map.theta(phi))?;
        let (g, h) = map.reduce(g, h);
        Ok((f, g, h))
    };
    let value = |phi: &DVector<f64>| obj.value_unchecked(&map.theta(phi));

    let (mut f, mut g, mut h) = eval(&phi)?;
    for iter in 0..opts.max_iter {
        let gnorm = max_abs(&g);
        if dim == 0 {
            return Ok((map.theta(&phi), f, 0.0, iter));
        }
        if gnorm <= tol {
            // one polishing Newton step; kept only if it does not make things worse
            if let Some(dir) = newton_direction(&g, &h) {
                let cand = &phi + &dir;
                if let Ok((fc, gc, _)) = eval(&cand) {
                    if max_abs(&gc) <= gnorm && fc >= f - 1e-12 * (1.0 + f.abs()) {
                        return Ok((map.theta(&cand), fc, max_abs(&gc), iter + 1));
                    }
                }
            }
            return Ok((map.theta(&phi), f, gnorm, iter));
        }

        let slack = 1e-12 * (1.0 + f.abs());
        let mut accepted = None;
        let newton = newton_direction(&g, &h);
        let directions: Vec<DVector<f64>> = match newton {
            Some(d) => vec![d, gradient_direction(&g, &h)],
            None => vec![gradient_direction(&g, &h)],
        };
        for dir in directions {
            let slope = g.dot(&dir);
            if !(slope > 0.0) {
                continue;
            }
            let mut t = 1.0;
            for _ in 0..opts.max_backtracks {
                let cand = &phi + &dir * t;
                let fc = value(&cand);
                if fc.is_finite() && fc >= f + opts.armijo_c1 * t * slope - slack {
                    accepted = Some((cand, dir.clone() * t));
                    break;
                }
                t *= opts.backtrack;
            }
            if accepted.is_some() {
                break;
            }
        }

        let Some((next, step)) = accepted else {
            return Err(Error::NonConvergence {
                iterations: iter,
                gradient_norm: gnorm,
                last_iterate: map.theta(&phi).iter().copied().collect(),
            });
        };
        phi = next;
        (f, g, h) = eval(&phi)?;
        if max_abs(&step) <= opts.step_tol {
            return Ok((map.theta(&phi), f, max_abs(&g), iter + 1));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        gradient_norm: max_abs(&g),
        last_iterate: map.theta(&phi).iter().copied().collect(),
    })
}

/// A "converged" point whose value sits on the separation bound is only an
/// approximation to a maximizer at infinity.
fn check_separation(obj: &DelObjective, f: f64, gnorm: f64, iters: usize, theta: &DVector<f64>) -> Result<()> {
    let gap = obj.upper_bound() - f;
    if gap <= 1e-7 * obj.n() as f64 {
        log::debug!("samples are separable by the basis; the DEL maximizer diverges (gap {gap:.3e})");
        return Err(Error::NonConvergence {
            iterations: iters,
            gradient_norm: gnorm,
            last_iterate: theta.iter().copied().collect(),
        });
    }
    Ok(())
}

/// Steepest ascent scaled by the Hessian diagonal.
fn gradient_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> DVector<f64> {
    let scale = h.diagonal().iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    g / scale
}

/// Maximum DEL estimate `theta_hat = argmax l_n(theta)`, started at zero.
pub fn fit_mele(data: &MultiSample, basis: &BasisFn, opts: &FitOptions) -> Result<FitResult> {
    let obj = DelObjective::new(data, basis)?;
    fit_mele_with(&obj, opts)
}

pub fn fit_mele_with(obj: &DelObjective, opts: &FitOptions) -> Result<FitResult> {
    let map = AffineMap {
        offset: DVector::zeros(obj.n_params()),
        basis: None,
    };
    let (theta, f, gnorm, iters) = maximize(obj, &map, opts)?;
    check_separation(obj, f, gnorm, iters, &theta)?;
    Ok(FitResult {
        theta_hat: Theta::from_vector(obj.m(), &theta),
        del_value: f,
        gradient_norm: gnorm,
        iterations: iters,
        converged: true,
        constraint: None,
    })
}

/// `sup_theta l_n(theta)`, which stays finite for separable samples where no
/// maximizer exists.
pub fn supremum_value(obj: &DelObjective, opts: &FitOptions) -> Result<f64> {
    match fit_mele_with(obj, opts) {
        Ok(fit) => Ok(fit.del_value),
        Err(Error::NonConvergence {
            last_iterate,
            iterations,
            gradient_norm,
        }) => {
            let theta = DVector::from_vec(last_iterate);
            let f = obj.value(&theta)?;
            if obj.upper_bound() - f <= 1e-7 * obj.n() as f64 {
                Ok(obj.upper_bound())
            } else {
                Err(Error::NonConvergence {
                    iterations,
                    gradient_norm,
                    last_iterate: theta.iter().copied().collect(),
                })
            }
        }
        Err(e) => Err(e),
    }
}

/// Maximizes `l_n` over `{theta : A beta = b}` through `beta = beta_p + N gamma`,
/// with `beta_p` the minimum-norm solution and `N` an orthonormal basis of
/// `null(A)`. `alpha` stays free.
pub fn fit_constrained(
    data: &MultiSample,
    basis: &BasisFn,
    c: &ConstraintSpec,
    opts: &FitOptions,
) -> Result<FitResult> {
    let obj = DelObjective::new(data, basis)?;
    fit_constrained_with(&obj, c, opts)
}

pub fn fit_constrained_with(obj: &DelObjective, c: &ConstraintSpec, opts: &FitOptions) -> Result<FitResult> {
    let (m, d) = (obj.m(), obj.d());
    if c.n_beta() != m * d {
        return Err(Error::DimensionMismatch {
            what: "constraint columns",
            expected: m * d,
            got: c.n_beta(),
        });
    }
    let beta_p = min_norm_solution(c.a(), c.b())?;
    let null = null_space(c.a(), 1e-10);
    let r = null.ncols();
    let p = obj.n_params();
    let mut offset = DVector::zeros(p);
    offset.rows_mut(m, m * d).copy_from(&beta_p);
    let mut basis = DMatrix::zeros(p, m + r);
    basis.view_mut((0, 0), (m, m)).fill_with_identity();
    if r > 0 {
        basis.view_mut((m, m), (m * d, r)).copy_from(&null);
    }
    let map = AffineMap {
        offset,
        basis: Some(basis),
    };
    let (theta, f, gnorm, iters) = maximize(obj, &map, opts)?;
    check_separation(obj, f, gnorm, iters, &theta)?;
    let mut theta_hat = Theta::from_vector(m, &theta);
    if r == 0 {
        // fully pinned: keep beta bit-exact
        theta_hat.beta = c.b().iter().copied().collect();
        if c.a() != &DMatrix::identity(m * d, m * d) {
            theta_hat.beta = beta_p.iter().copied().collect();
        }
    }
    Ok(FitResult {
        theta_hat,
        del_value: f,
        gradient_norm: gnorm,
        iterations: iters,
        converged: true,
        constraint: Some(c.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(rng: &mut ChaCha8Rng, sizes: &[usize]) -> MultiSample {
        MultiSample::new(
            sizes
                .iter()
                .map(|&n| (0..n).map(|_| rng.random_range(0.1..3.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn value_at_zero_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = random_data(&mut rng, &[5, 7, 3]);
        let basis = BasisFn::parse("x,logx").unwrap();
        assert_eq!(del_value(&Theta::zeros(2, 2), &data, &basis).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_two_point_value() {
        let data = MultiSample::new(vec![vec![0.0], vec![0.0]]).unwrap();
        let basis = BasisFn::parse("x").unwrap();
        let theta = Theta::new(vec![1.0], vec![0.0]).unwrap();
        let v = del_value(&theta, &data, &basis).unwrap();
        let e = std::f64::consts::E;
        let expect = 1.0 - 2.0 * ((1.0 + e) / 2.0).ln();
        assert!((v - expect).abs() < 1e-14, "{v} vs {expect}");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let data = MultiSample::new(vec![vec![1.0], vec![2.0]]).unwrap();
        let basis = BasisFn::parse("x,x2").unwrap();
        let bad = Theta::new(vec![0.0], vec![0.0]).unwrap();
        assert!(matches!(
            del_value(&bad, &data, &basis),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gradient_at_zero_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = random_data(&mut rng, &[6, 4, 5]);
        let basis = BasisFn::parse("x,x2").unwrap();
        let (g, _) = del_derivatives(&Theta::zeros(2, 2), &data, &basis).unwrap();
        let lam = data.proportions();
        let pooled_sum: Vec<f64> = (0..2)
            .map(|a| data.pooled_values().iter().map(|&x| basis.eval(x).unwrap()[a]).sum())
            .collect();
        for k in 1..=2 {
            assert!(g[k - 1].abs() < 1e-12, "alpha gradient {}", g[k - 1]);
            for a in 0..2 {
                let own: f64 = data.sample(k).iter().map(|&x| basis.eval(x).unwrap()[a]).sum();
                let expect = own - lam[k] * pooled_sum[a];
                let got = g[param_index(2, 2, k, a + 1)];
                assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
            }
        }
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let data = random_data(&mut rng, &[8, 6, 7]);
            let basis = BasisFn::parse("x,logx").unwrap();
            let obj = DelObjective::new(&data, &basis).unwrap();
            let theta = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let (_, g, h) = obj.evaluate(&theta).unwrap();
            let eps = 1e-6;
            for i in 0..6 {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += eps;
                tm[i] -= eps;
                let fd = (obj.value(&tp).unwrap() - obj.value(&tm).unwrap()) / (2.0 * eps);
                assert!((fd - g[i]).abs() < 1e-5 * (1.0 + max_abs(&g)), "grad {i}");
                let (_, gp, _) = obj.evaluate(&tp).unwrap();
                let (_, gm, _) = obj.evaluate(&tm).unwrap();
                for j in 0..6 {
                    let fdh = (gp[j] - gm[j]) / (2.0 * eps);
                    assert!((fdh - h[(j, i)]).abs() < 1e-5 * (1.0 + h.abs().max()), "hess {j},{i}");
                }
            }
            assert_eq!(h, h.transpose());
        }
    }

    #[test]
    fn identical_samples_fit_to_zero() {
        let xs = vec![0.3, 1.2, 2.5, 0.7, 1.9];
        let data = MultiSample::new(vec![xs.clone(), xs]).unwrap();
        let basis = BasisFn::parse("x,x2").unwrap();
        let fit = fit_mele(&data, &basis, &FitOptions::default()).unwrap();
        assert!(fit.theta_hat.to_vector().iter().all(|v| v.abs() < 1e-12));
        assert!(fit.del_value.abs() < 1e-12);
    }

    #[test]
    fn mele_dominates_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = random_data(&mut rng, &[8, 6, 7]);
        let basis = BasisFn::parse("x").unwrap();
        let obj = DelObjective::new(&data, &basis).unwrap();
        let fit = fit_mele_with(&obj, &FitOptions::default()).unwrap();
        for _ in 0..1000 {
            let theta = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
            assert!(fit.del_value >= obj.value(&theta).unwrap());
        }
        assert!(fit.gradient_norm <= 1e-8 * 21.0);
    }

    #[test]
    fn inactive_constraint_reproduces_mele() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_data(&mut rng, &[30, 25, 20]);
        let basis = BasisFn::parse("x,logx").unwrap();
        let opts = FitOptions::default();
        let fit = fit_mele(&data, &basis, &opts).unwrap();
        let mut a = DMatrix::zeros(2, 4);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 1.0;
        let b = DVector::from_column_slice(fit.theta_hat.beta_block(1));
        let c = ConstraintSpec::new(a, b).unwrap();
        let cfit = fit_constrained(&data, &basis, &c, &opts).unwrap();
        assert!((cfit.del_value - fit.del_value).abs() < 1e-10);
        let diff = cfit.theta_hat.to_vector() - fit.theta_hat.to_vector();
        assert!(max_abs(&diff) < 1e-8);
    }

    #[test]
    fn fully_pinned_beta_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = random_data(&mut rng, &[15, 12]);
        let basis = BasisFn::parse("x,x2").unwrap();
        let b = DVector::from_vec(vec![0.3, -0.1]);
        let c = ConstraintSpec::new(DMatrix::identity(2, 2), b.clone()).unwrap();
        let fit = fit_constrained(&data, &basis, &c, &FitOptions::default()).unwrap();
        assert_eq!(fit.theta_hat.beta, vec![0.3, -0.1]);
        let all = fit_constrained(&data, &basis, &ConstraintSpec::all_equal(1, 2), &FitOptions::default()).unwrap();
        assert_eq!(all.theta_hat.beta, vec![0.0, 0.0]);
        assert!(all.theta_hat.alpha[0].abs() < 1e-12);
    }

    #[test]
    fn constrained_fit_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = random_data(&mut rng, &[20, 20, 20]);
        let basis = BasisFn::parse("x,logx").unwrap();
        let a = DMatrix::from_row_slice(2, 4, &[2.0, 0.0, -1.0, 0.0, 0.0, 2.0, 0.0, -1.0]);
        let c = ConstraintSpec::new(a, DVector::from_vec(vec![0.5, -0.25])).unwrap();
        let fit = fit_constrained(&data, &basis, &c, &FitOptions::default()).unwrap();
        let res = c.residual(&fit.theta_hat.beta_vector());
        assert!(max_abs(&res) < 1e-10);
        let free = fit_mele(&data, &basis, &FitOptions::default()).unwrap();
        assert!(free.del_value >= fit.del_value);
    }

    #[test]
    fn separated_samples_report_non_convergence() {
        let data = MultiSample::new(vec![vec![0.1, 0.2, 0.3], vec![5.0, 6.0, 7.0]]).unwrap();
        let basis = BasisFn::parse("x").unwrap();
        match fit_mele(&data, &basis, &FitOptions::default()) {
            Err(Error::NonConvergence { last_iterate, .. }) => assert_eq!(last_iterate.len(), 2),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
