//! Small descriptive statistics and the one-sided Student t-test.

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the n-1 denominator. Zero for fewer than two values.
pub fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sample_std(x: &[f64]) -> f64 {
    sample_variance(x).sqrt()
}

/// Pearson correlation. `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    debug_assert_eq!(x.len(), y.len());
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Which side of a one-sided hypothesis is the null.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullSide {
    /// H0: mu <= mu0, rejected for large sample means.
    AtMost,
    /// H0: mu >= mu0, rejected for small sample means.
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub statistic: f64,
    pub p_value: f64,
    pub df: f64,
}

/// One-sample one-sided t-test of `samples` against `mu0`.
pub fn one_sided_t_test(samples: &[f64], mu0: f64, side: NullSide) -> Result<TTest> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let m = mean(samples);
    let se = sample_std(samples) / (n as f64).sqrt();
    let df = (n - 1) as f64;
    let diff = m - mu0;
    let statistic = if se > 0.0 {
        diff / se
    } else if diff > 0.0 {
        f64::INFINITY
    } else if diff < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    let upper_tail = |t: f64| -> f64 {
        if t == f64::INFINITY {
            0.0
        } else if t == f64::NEG_INFINITY {
            1.0
        } else {
            let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
            dist.sf(t)
        }
    };
    let p_value = match side {
        NullSide::AtMost => upper_tail(statistic),
        NullSide::AtLeast => upper_tail(-statistic),
    };
    Ok(TTest {
        statistic,
        p_value: p_value.clamp(0.0, 1.0),
        df,
    })
}
