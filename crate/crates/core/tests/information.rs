use drmtest::family::{BaselineSpec, Family};
use drmtest::infer::empirical_information;
use drmtest::model::{BasisFn, BasisSpec, MultiSample, Theta};
use drmtest::power::{normalizing_alphas, theoretical_information};
use drmtest::seeding::stream_rng;

fn compare(f0: Family, basis: &str, beta: &[f64], rho: &[f64], seed: u64) -> f64 {
    let spec = BasisSpec::parse(basis).unwrap();
    let q = BasisFn::parse(basis).unwrap();
    let d = q.dim();
    let n = 100_000.0;
    let samples = rho
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let fam = if k == 0 {
                f0
            } else {
                f0.tilt(&spec, &beta[(k - 1) * d..k * d]).unwrap()
            };
            fam.sample(&mut stream_rng(seed, &[k as u64]), (r * n) as usize)
        })
        .collect();
    let data = MultiSample::new(samples).unwrap();
    let base = BaselineSpec::new(f0).unwrap();
    let alpha = normalizing_alphas(&base, beta, &q).unwrap();
    let theta = Theta::new(alpha, beta.to_vec()).unwrap();
    let emp = empirical_information(&theta, &data, &q).unwrap();
    let pop = theoretical_information(&base, beta, &data.proportions(), &q).unwrap();
    (emp.u() - pop.u()).abs().max()
}

#[test]
fn quadrature_information_matches_large_samples() {
    let err = compare(
        Family::Normal { mean: 0.0, sd: 1.0 },
        "x,x2",
        &[0.5, -0.2, -0.3, 0.1],
        &[0.4, 0.3, 0.3],
        1,
    );
    assert!(err < 0.05, "normal: {err}");
    let err = compare(
        Family::Gamma { shape: 2.0, rate: 1.0 },
        "x,logx",
        &[-1.0, 1.0, -2.0, 2.0],
        &[0.4, 0.3, 0.3],
        2,
    );
    assert!(err < 0.05, "gamma: {err}");
}
