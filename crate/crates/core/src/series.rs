//! Coefficients `b_r` of the half-integer power series of the squared cosine
//! distance map, `zeta(z) = z - delta * sum_{r odd >= 3} b_r z^(r/2)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};

/// Largest `r` kept in the precomputed table.
pub const TABLE_MAX_R: u32 = 61;

/// Default truncation for slowly converging sums of the coefficients.
pub const DEFAULT_SUM_CAP: u32 = 100_000;

/// Walks `r = 3, 5, 7, ...` accumulating `ln(((r-2)!!)^2 / r!)`.
#[derive(Debug, Clone)]
pub struct Coefficients {
    r: u32,
    log_q: f64,
}

impl Coefficients {
    pub fn new() -> Self {
        Self { r: 3, log_q: -(6f64.ln()) }
    }
}

impl Default for Coefficients {
    fn default() -> Self {
        Self::new()
    }
}

impl Iterator for Coefficients {
    /// `(r, b_r)`
    type Item = (u32, f64);

    fn next(&mut self) -> Option<Self::Item> {
        let r = self.r;
        let rf = r as f64;
        // (r/(r-2))^2 - 1 = 4(r-1)/(r-2)^2
        let log_b = (2.0 / PI).ln() + (4.0 * (rf - 1.0)).ln() - 2.0 * (rf - 2.0).ln() + self.log_q;
        self.log_q += 2.0 * rf.ln() - (rf + 1.0).ln() - (rf + 2.0).ln();
        self.r += 2;
        Some((r, log_b.exp()))
    }
}

fn table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        Coefficients::new()
            .take_while(|&(r, _)| r <= TABLE_MAX_R)
            .map(|(_, b)| b)
            .collect()
    })
}

/// `b_r` for odd `r >= 3`.
pub fn coefficient(r: u32) -> Result<f64> {
    if r < 3 || r % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "series coefficient index must be odd and >= 3, got {r}"
        )));
    }
    if r <= TABLE_MAX_R {
        return Ok(table()[((r - 3) / 2) as usize]);
    }
    Ok(Coefficients::new()
        .find(|&(k, _)| k == r)
        .map(|(_, b)| b)
        .expect("iterator is unbounded"))
}

#[inline]
pub(crate) fn b3() -> f64 {
    table()[0]
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PartialSum {
    pub r_max: u32,
    pub sum: f64,
    /// Integral-comparison estimate of the neglected tail; `b_r ~ r^(-5/2)`.
    pub tail_estimate: f64,
}

/// `sum_{3 <= r <= r_max} b_r`, which tends to 1.
pub fn partial_sum(r_max: u32) -> PartialSum {
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut last = (3, 0.0);
    for (r, b) in Coefficients::new().take_while(|&(r, _)| r <= r_max) {
        // Kahan
        let y = b - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        last = (r, b);
    }
    PartialSum { r_max, sum, tail_estimate: last.1 * last.0 as f64 / 3.0 }
}

/// `sum_{r >= r_from} weight(r) * b_r * z^((r - shift)/2)` for `z` small
/// enough that the terms decay geometrically. Stops when a term no longer
/// changes the sum or after [`DEFAULT_SUM_CAP`].
pub(crate) fn power_sum(z: f64, r_from: u32, shift: u32, weight: impl Fn(u32) -> f64) -> f64 {
    debug_assert!(r_from >= shift);
    if z == 0.0 {
        return if r_from == shift { weight(r_from) * coefficient(r_from).unwrap_or(0.0) } else { 0.0 };
    }
    let sqrt_z = z.sqrt();
    let mut pow = sqrt_z.powi((r_from - shift) as i32);
    let mut sum = 0.0;
    let tbl = table();
    let mut tail = Coefficients::new();
    let mut r = r_from;
    while r <= DEFAULT_SUM_CAP {
        let b = if r <= TABLE_MAX_R {
            tbl[((r - 3) / 2) as usize]
        } else {
            // advance the log-domain walker to r
            loop {
                let (k, b) = tail.next().expect("unbounded");
                if k == r {
                    break b;
                }
            }
        };
        let term = weight(r) * b * pow;
        let next = sum + term;
        if next == sum && r > r_from {
            break;
        }
        sum = next;
        pow *= z;
        r += 2;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_coefficients() {
        assert!((coefficient(3).unwrap() - 8.0 / (3.0 * PI)).abs() <= 2.0 * f64::EPSILON);
        assert!((coefficient(5).unwrap() - 4.0 / (15.0 * PI)).abs() <= 1e-16);
    }

    #[test]
    fn rejects_bad_index() {
        assert!(coefficient(1).is_err());
        assert!(coefficient(4).is_err());
        assert!(coefficient(0).is_err());
    }

    #[test]
    fn direct_factorial_oracle() {
        // b_r from exact double factorials for small r
        fn dfact(n: i64) -> f64 {
            let mut p = 1.0;
            let mut k = n;
            while k > 1 {
                p *= k as f64;
                k -= 2;
            }
            p
        }
        fn fact(n: i64) -> f64 {
            (1..=n).map(|k| k as f64).product()
        }
        for r in (3..=21).step_by(2) {
            let rf = r as f64;
            let want = 2.0 / PI * ((rf / (rf - 2.0)).powi(2) - 1.0) * dfact(r - 2).powi(2) / fact(r);
            let got = coefficient(r as u32).unwrap();
            assert!((got - want).abs() <= 1e-14 * want, "r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn large_index_matches_walker() {
        let b = coefficient(1001).unwrap();
        assert!(b > 0.0 && b < 1e-6);
        let via_iter = Coefficients::new().nth(499).unwrap();
        assert_eq!(via_iter.0, 1001);
        assert_eq!(via_iter.1, b);
    }

    #[test]
    fn sum_tends_to_one() {
        let s = partial_sum(DEFAULT_SUM_CAP);
        assert!(s.sum >= 0.999 && s.sum < 1.0);
        assert!((s.sum + s.tail_estimate - 1.0).abs() < 1e-8, "{:?}", s);
    }

    #[test]
    fn coefficients_nonnegative_and_decreasing() {
        let bs: Vec<f64> = Coefficients::new().take(1000).map(|(_, b)| b).collect();
        assert!(bs.iter().all(|&b| b > 0.0));
        assert!(bs.windows(2).all(|w| w[1] < w[0]));
    }
}
