//! Globally adaptive 7/15-point Gauss–Kronrod quadrature for vector-valued
//! integrands on a finite interval.
//!
//! The interval with the largest error estimate is bisected until the summed
//! error of every component is below `max(abs_tol, rel_tol * |I|)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
    pub intervals: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    key: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key)
    }
}

fn rule<F>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> (Vec<f64>, Vec<f64>)
where
    F: FnMut(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];

    f(c, buf);
    for i in 0..dim {
        kron[i] = WGK[7] * buf[i];
        gauss[i] = WG[3] * buf[i];
    }
    for (j, (&x, &wk)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = h * x;
        for &t in &[c - dx, c + dx] {
            f(t, buf);
            for i in 0..dim {
                kron[i] += wk * buf[i];
                if j % 2 == 1 {
                    gauss[i] += WG[j / 2] * buf[i];
                }
            }
        }
    }
    let value: Vec<f64> = kron.iter().map(|v| v * h).collect();
    let error: Vec<f64> = kron.iter().zip(&gauss).map(|(k, g)| ((k - g) * h).abs()).collect();
    (value, error)
}

/// Integrates `f` over `[a, b]`. `f(t, out)` writes `dim` component values.
pub fn integrate<F>(mut f: F, a: f64, b: f64, dim: usize, opts: QuadOptions) -> Result<QuadResult>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut buf = vec![0.0; dim];
    let (value, error) = rule(&mut f, a, b, dim, &mut buf);
    let mut total = value.clone();
    let mut total_err = error.clone();
    let key = error.iter().cloned().fold(0.0, f64::max);
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value,
        error,
        key,
    });

    let done = |tv: &[f64], te: &[f64]| {
        tv.iter()
            .zip(te)
            .all(|(v, e)| *e <= opts.abs_tol.max(opts.rel_tol * v.abs()))
    };

    let mut intervals = 1;
    while !done(&total, &total_err) {
        if total.iter().chain(total_err.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Quadrature("non-finite integrand".into()));
        }
        if intervals >= opts.max_intervals {
            return Err(Error::Quadrature(format!(
                "no convergence after {intervals} subintervals (error {:.3e})",
                total_err.iter().cloned().fold(0.0, f64::max)
            )));
        }
        let seg = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            return Err(Error::Quadrature("interval collapsed below machine precision".into()));
        }
        let (lv, le) = rule(&mut f, seg.a, mid, dim, &mut buf);
        let (rv, re) = rule(&mut f, mid, seg.b, dim, &mut buf);
        for i in 0..dim {
            total[i] += lv[i] + rv[i] - seg.value[i];
            total_err[i] += le[i] + re[i] - seg.error[i];
        }
        for (s, v, e) in [(seg.a, lv, le), (mid, rv, re)] {
            let key = e.iter().cloned().fold(0.0, f64::max);
            let end = if s == seg.a { mid } else { seg.b };
            heap.push(Segment {
                a: s,
                b: end,
                value: v,
                error: e,
                key,
            });
        }
        intervals += 1;
    }
    if total.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature("non-finite integral".into()));
    }
    // Recompute the sums from the leaves to shed accumulated update roundoff.
    let mut value = vec![0.0; dim];
    let mut error = vec![0.0; dim];
    for seg in heap.iter() {
        for i in 0..dim {
            value[i] += seg.value[i];
            error[i] += seg.error[i];
        }
    }
    Ok(QuadResult {
        value,
        error,
        intervals,
    })
}

/// Scalar convenience wrapper.
pub fn integrate_scalar<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate(|t, out| out[0] = f(t), a, b, 1, opts).map(|r| r.value[0])
}
