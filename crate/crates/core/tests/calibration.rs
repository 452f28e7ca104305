use drmtest::distributions::ks_test;
use drmtest::family::Family;
use drmtest::hypothesis::parse_hypothesis;
use drmtest::infer::delr_test;
use drmtest::model::{BasisFn, MultiSample};
use drmtest::seeding::stream_rng;

/// Example 1 null (Gamma(2,1), Gamma(3,2), Gamma(4,3) satisfy 2 beta_1 = beta_2)
/// at n = 1000: DELR p-values are uniform.
#[test]
fn example1_null_p_values_are_uniform() {
    let basis = BasisFn::parse("x,logx").unwrap();
    let c = parse_hypothesis("lincomb:2*b1-b2=0", 2, 2).unwrap();
    let pops = [
        (Family::Gamma { shape: 2.0, rate: 1.0 }, 400),
        (Family::Gamma { shape: 3.0, rate: 2.0 }, 300),
        (Family::Gamma { shape: 4.0, rate: 3.0 }, 300),
    ];
    let p: Vec<f64> = (0..500u64)
        .map(|i| {
            let samples = pops
                .iter()
                .enumerate()
                .map(|(k, (f, n))| f.sample(&mut stream_rng(77, &[i, k as u64]), *n))
                .collect();
            delr_test(&MultiSample::new(samples).unwrap(), &basis, &c)
                .unwrap()
                .p_value
        })
        .collect();
    let (d, pv) = ks_test(&p, |x| x.clamp(0.0, 1.0));
    assert!(pv > 0.01, "KS distance {d}, p {pv}");
}
