//! Binomial tails and the sample-majority lower bound.

use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};

/// Largest sample count [`min_samples`] will search.
pub const SAMPLE_CAP: u64 = 1_000_000_000;

/// Compensated (Neumaier) running sum.
#[derive(Default)]
struct Sum {
    sum: f64,
    comp: f64,
}

impl Sum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn ln_pmf(s: u64, p: f64, j: u64) -> f64 {
    ln_binomial(s, j) + j as f64 * p.ln() + (s - j) as f64 * (1.0 - p).ln()
}

/// Sum of pmf terms walking away from the mode, stopping once terms no
/// longer move the sum.
fn sum_from(s: u64, p: f64, start: u64, downward: bool) -> f64 {
    let q = 1.0 - p;
    let mut term = ln_pmf(s, p, start).exp();
    let mut acc = Sum::default();
    let mut j = start;
    loop {
        acc.add(term);
        if term == 0.0 || term < acc.value() * 1e-18 {
            break;
        }
        if downward {
            if j == 0 {
                break;
            }
            term *= j as f64 / (s - j + 1) as f64 * (q / p);
            j -= 1;
        } else {
            if j == s {
                break;
            }
            term *= (s - j) as f64 / (j + 1) as f64 * (p / q);
            j += 1;
        }
    }
    acc.value()
}

/// `P[Bin(s, p) <= k]`.
pub fn binomial_tail_exact(s: u64, p: f64, k: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    if k > s {
        return Err(Error::Domain(format!("k = {k} exceeds S = {s}")));
    }
    if k == s || p == 0.0 {
        return Ok(1.0);
    }
    if p == 1.0 {
        return Ok(0.0);
    }
    let tail = if (k as f64) < s as f64 * p {
        // terms shrink below k, so start at the largest one
        sum_from(s, p, k, true)
    } else {
        1.0 - sum_from(s, p, k + 1, false)
    };
    Ok(tail.clamp(0.0, 1.0))
}

/// `D(a || p)` between Bernoulli distributions, in nats.
pub fn kl_bernoulli(a: f64, p: f64) -> Result<f64> {
    for (name, v) in [("a", a), ("p", p)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain(format!("{name} = {v} outside (0, 1)")));
        }
    }
    Ok(a * (a / p).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - p)).ln())
}

/// `(1/sqrt(2S)) exp(-S D(1/2 || 1/2 + delta))`, a lower bound on the
/// probability that a majority of `S` draws is wrong.
pub fn tail_lower_bound(s: u64, delta: f64) -> Result<f64> {
    if s == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    if !(delta > 0.0 && delta <= 1.0 / 3.0) {
        return Err(Error::Domain(format!("delta = {delta} outside (0, 1/3]")));
    }
    let kl = kl_bernoulli(0.5, 0.5 + delta)?;
    Ok((-(s as f64) * kl).exp() / (2.0 * s as f64).sqrt())
}

/// Probability that a majority of `s` draws misses the majority of an
/// `n`-agent input population at margin 1. Ties count as misses.
pub fn margin_one_error(n: u64, s: u64) -> f64 {
    let p = 0.5 + 0.5 / n as f64;
    binomial_tail_exact(s, p, s / 2).expect("arguments within domain")
}

/// Smallest `S` such that every sample count from `S` on has margin-1
/// error at most `n^-c`.
///
/// The error zigzags between odd and even `S`, so the search runs on
/// `max(err(S), err(S + 1))`, which is nonincreasing.
pub fn min_samples(n: u64, c: u32) -> Result<u64> {
    if n < 2 {
        return Err(Error::Domain(format!("n = {n} must be at least 2")));
    }
    if c < 1 {
        return Err(Error::Domain("c must be at least 1".into()));
    }
    let target = (n as f64).powi(-(c as i32));
    let ok = |s: u64| margin_one_error(n, s) <= target && margin_one_error(n, s + 1) <= target;

    let mut hi = 1u64;
    while !ok(hi) {
        if hi >= SAMPLE_CAP {
            return Err(Error::SampleCapExceeded { cap: SAMPLE_CAP });
        }
        hi = (hi * 2).min(SAMPLE_CAP);
    }
    if hi == 1 {
        return Ok(1);
    }
    // ok(hi / 2) failed during doubling
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
