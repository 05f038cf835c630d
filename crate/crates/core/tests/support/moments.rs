//! Exact-rational moment and quantile oracle.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::Pow;
use num::{Float, FromPrimitive, ToPrimitive, Zero};

pub struct Exact {
    pub mean: f64,
    pub std: f64,
    pub skew: Option<f64>,
    pub kurtosis: Option<f64>,
    pub quantiles: Vec<f64>,
}

fn r(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite")
}

fn f(x: &BigRational) -> f64 {
    x.to_f64().expect("representable")
}

/// Population central moments from raw power sums S1..S4, all exact.
pub fn exact(samples: &[f64], ps: &[f64]) -> Exact {
    let n = BigRational::from_integer(BigInt::from(samples.len()));
    // x = m * 2^e exactly; shift every mantissa to the smallest exponent so
    // the power sums are plain integer sums
    let decoded: Vec<(u64, i16, i8)> = samples.iter().map(|x| x.integer_decode()).collect();
    let base = decoded.iter().map(|d| d.1).min().unwrap_or(0);
    let mut sums = [BigInt::zero(), BigInt::zero(), BigInt::zero(), BigInt::zero()];
    for &(m, e, sign) in &decoded {
        let x = (BigInt::from(m) << (e - base) as usize) * BigInt::from(sign);
        let mut p = x.clone();
        for sum in sums.iter_mut() {
            *sum += &p;
            p *= &x;
        }
    }
    let s: Vec<BigRational> = sums
        .iter()
        .enumerate()
        .map(|(k, sum)| {
            let shift = base as i64 * (k as i64 + 1);
            let v = BigRational::from_integer(sum.clone());
            let two = BigRational::from_integer(BigInt::from(2));
            if shift >= 0 {
                v * two.pow(shift as i32)
            } else {
                v / two.pow((-shift) as i32)
            }
        })
        .collect();
    let mean = &s[0] / &n;
    let m = |k: usize| &s[k] / &n;
    let (e1, e2, e3, e4) = (mean.clone(), m(1), m(2), m(3));
    let three = BigRational::from_integer(BigInt::from(3));
    let four = BigRational::from_integer(BigInt::from(4));
    let six = BigRational::from_integer(BigInt::from(6));
    // central moments via binomial expansion of E[(x - mu)^k]
    let c2 = &e2 - &e1 * &e1;
    let c3 = &e3 - &three * &e1 * &e2 + BigRational::from_integer(BigInt::from(2)) * &e1 * &e1 * &e1;
    let c4 = &e4 - &four * &e1 * &e3 + &six * &e1 * &e1 * &e2 - &three * &e1 * &e1 * &e1 * &e1;
    let len = samples.len();
    let std = if len > 1 {
        let one = BigRational::from_integer(BigInt::from(1));
        let var = &c2 * &n / (&n - one);
        f(&var).sqrt()
    } else {
        0.0
    };
    let nonzero = !c2.is_zero();
    let skew = (len >= 3 && nonzero).then(|| f(&c3) / f(&c2).powf(1.5));
    let kurtosis = (len >= 4 && nonzero).then(|| f(&(&c4 / (&c2 * &c2))) - 3.0);

    // f64 ordering is exact, so sorting needs no rationals
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles = ps
        .iter()
        .map(|&p| {
            let pos = r(p) * BigRational::from_integer(BigInt::from(len - 1));
            let lo = pos.floor();
            let frac = &pos - &lo;
            let lo_i = lo.to_integer().to_usize().unwrap();
            let hi_i = (lo_i + 1).min(len - 1);
            let (a, b) = (r(sorted[lo_i]), r(sorted[hi_i]));
            f(&(&a + frac * (&b - &a)))
        })
        .collect();
    Exact {
        mean: f(&mean),
        std,
        skew,
        kurtosis,
        quantiles,
    }
}

/// `|a - b| <= tol * max(|b|, 1)`: relative, with an absolute floor for
/// values near zero (skew of a symmetric sample).
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
