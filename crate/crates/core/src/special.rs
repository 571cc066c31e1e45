//! Small numerical helpers shared by the exact engine and the harness.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use statrs::function::gamma::ln_gamma;

const LN_2PI_HALF: f64 = 0.918_938_533_204_672_8;

/// Natural log of a big unsigned integer from its top 64 bits and bit length.
pub fn ln_biguint(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 64 {
        return (x.to_u64().unwrap() as f64).ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().unwrap();
    (top as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

/// Natural log of a positive big rational.
pub fn ln_bigrational(x: &BigRational) -> f64 {
    if !x.is_positive() {
        return f64::NEG_INFINITY;
    }
    ln_biguint(x.numer().magnitude()) - ln_biguint(x.denom().magnitude())
}

/// `ln m!`.
pub fn ln_factorial(m: u64) -> f64 {
    if m < 2 {
        0.0
    } else {
        ln_gamma(m as f64 + 1.0)
    }
}

/// Remainder of Stirling's formula: `ln m! - [(m + 1/2) ln m - m + ln(2 pi)/2]`.
///
/// Small arguments go through `ln_gamma`; large ones use the asymptotic series,
/// which avoids subtracting two numbers of size `m ln m`.
pub fn stirling_remainder(m: u64) -> f64 {
    assert!(m >= 1, "Stirling remainder undefined at 0");
    if m < 30 {
        let mf = m as f64;
        return ln_factorial(m) - ((mf + 0.5) * mf.ln() - mf + LN_2PI_HALF);
    }
    let inv = 1.0 / m as f64;
    let inv2 = inv * inv;
    inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// `ln((n-1)! / k!)` for `0 <= k <= n-1`, without cancellation for large arguments.
pub fn ln_falling_ratio(n: u64, k: u64) -> f64 {
    debug_assert!(k < n);
    if n - k <= 64 {
        return (k + 1..n).map(|t| (t as f64).ln()).sum();
    }
    if n < 1_000_000 {
        return ln_factorial(n - 1) - ln_factorial(k);
    }
    // (n-1)! = n!/n ; use Stirling on both with the main terms combined in log1p form.
    let nf = n as f64;
    if k == 0 {
        return ln_factorial(n - 1);
    }
    let kf = k as f64;
    let d = nf - kf;
    // (n + 1/2) ln n - (k + 1/2) ln k = (k + 1/2) ln(n/k) + d ln n
    let main = (kf + 0.5) * (d / kf).ln_1p() + d * nf.ln() - d;
    main - nf.ln() + stirling_remainder(n) - stirling_remainder(k)
}

/// Stable `ln(sum exp(x_i))`; empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = LogSumExp::default();
    for v in values {
        acc.push(v);
    }
    acc.value()
}

/// Streaming log-sum-exp accumulator with rescaling on a new maximum.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0 }
    }
}

impl LogSumExp {
    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.sum += (v - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if self.max == f64::NEG_INFINITY {
            *self = *other;
        } else if other.max <= self.max {
            self.sum += other.sum * (other.max - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - other.max).exp() + other.sum;
            self.max = other.max;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    #[test]
    fn ln_biguint_matches_direct_conversion() {
        let mut x = BigUint::from(1u32);
        for k in 1..120u32 {
            x *= BigUint::from(k * 7 + 3);
            let direct = x.to_f64().unwrap().ln();
            let ours = ln_biguint(&x);
            assert!((ours - direct).abs() <= 1e-12 * direct.abs().max(1.0), "{k}");
        }
    }

    #[test]
    fn ln_bigrational_small() {
        let q = BigRational::new(BigInt::from(3), BigInt::from(4));
        assert!((ln_bigrational(&q) - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn stirling_remainder_is_continuous_across_switch() {
        for m in [29u64, 30, 31, 100] {
            let mf = m as f64;
            let direct = ln_factorial(m) - ((mf + 0.5) * mf.ln() - mf + LN_2PI_HALF);
            assert!((stirling_remainder(m) - direct).abs() < 1e-12, "{m}");
        }
    }

    #[test]
    fn falling_ratio_branches_agree() {
        for (n, k) in [(1_000_000u64, 200_000u64), (2_000_000, 1), (3_000_000, 2_999_999)] {
            let direct = ln_factorial(n - 1) - ln_factorial(k);
            let stable = ln_falling_ratio(n, k);
            assert!((direct - stable).abs() < 1e-7 * direct.abs().max(1.0), "{n} {k}: {direct} {stable}");
        }
    }

    #[test]
    fn log_sum_exp_basics() {
        assert_eq!(log_sum_exp(std::iter::empty()), f64::NEG_INFINITY);
        let v = log_sum_exp([0.0f64.ln(), 0.25f64.ln(), 0.75f64.ln()]);
        assert!(v.abs() < 1e-15);
        let mut a = LogSumExp::default();
        let mut b = LogSumExp::default();
        a.push(-1000.0);
        b.push(-999.0);
        a.merge(&b);
        let expect = -999.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((a.value() - expect).abs() < 1e-12);
    }
}
