//! Closed-form scalar maps propagating cosines of the limiting activations
//! through one edge-of-chaos layer, in three coordinates:
//!
//! * cosine `rho` in `[-1, 1]` (the cosine map `varrho`),
//! * squared cosine distance `z = (1 - rho)/2` in `[0, 1]` (`zeta`),
//! * inverse cosine distance `w = z^(-1/2)` in `(1, inf)` (`omega`).
//!
//! Every map takes the nonlinearity measure `delta` of the activation.
//! `delta = 0` is the linear case where all maps are the identity.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::series::{b3, power_sum};

/// Inputs this far outside a closed domain are clamped silently.
pub const CLAMP_SLACK: f64 = 1e-12;

/// Below this `z` the closed forms lose digits to cancellation and the
/// half-integer power series is used instead.
pub const SERIES_SWITCH_Z: f64 = 1e-4;

pub(crate) fn clamp_domain(name: &'static str, x: f64, lo: f64, hi: f64, domain: &'static str) -> Result<f64> {
    if x.is_nan() || x < lo - CLAMP_SLACK || x > hi + CLAMP_SLACK {
        return Err(Error::OutOfDomain { name, value: x, domain });
    }
    Ok(x.clamp(lo, hi))
}

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::OutOfDomain { name: "delta", value: delta, domain: "[0, 1]" })
    }
}

fn require_nonlinear(delta: f64, what: &'static str) -> Result<()> {
    check_delta(delta)?;
    if delta == 0.0 {
        Err(Error::LinearActivation(what))
    } else {
        Ok(())
    }
}

/// `sum_{r >= 3} b_r z^(r/2) = (z - zeta(z)) / delta`.
pub(crate) fn series_b(z: f64) -> f64 {
    if z < SERIES_SWITCH_Z {
        power_sum(z, 3, 0, |_| 1.0)
    } else {
        let s = z.sqrt();
        (2.0 * (z * (1.0 - z)).sqrt() - 2.0 * (1.0 - 2.0 * z) * s.asin()) / PI
    }
}

/// Cosine map `rho + delta (2/pi)(sqrt(1 - rho^2) - rho arccos(rho))`.
pub fn rho_map(delta: f64, rho: f64) -> Result<f64> {
    check_delta(delta)?;
    let rho = clamp_domain("rho", rho, -1.0, 1.0, "[-1, 1]")?;
    if delta == 0.0 || rho == 1.0 {
        return Ok(rho);
    }
    let sin = ((1.0 - rho) * (1.0 + rho)).sqrt();
    let out = rho + delta * (2.0 / PI) * (sin - rho * rho.acos());
    Ok(out.clamp(-1.0, 1.0))
}

/// Derivative `1 - delta (2/pi) arccos(rho)`.
pub fn rho_prime(delta: f64, rho: f64) -> Result<f64> {
    check_delta(delta)?;
    let rho = clamp_domain("rho", rho, -1.0, 1.0, "[-1, 1]")?;
    Ok(1.0 - delta * (2.0 / PI) * rho.acos())
}

/// Squared cosine distance map `zeta(z) = (1 - varrho(1 - 2z)) / 2`.
pub fn zeta(delta: f64, z: f64) -> Result<f64> {
    check_delta(delta)?;
    let z = clamp_domain("z", z, 0.0, 1.0, "[0, 1]")?;
    Ok(zeta_unchecked(delta, z))
}

#[inline]
pub(crate) fn zeta_unchecked(delta: f64, z: f64) -> f64 {
    if delta == 0.0 || z == 0.0 {
        return z;
    }
    if z > 0.5 {
        // in terms of y = 1 - z, using arcsin(sqrt z) = pi/2 - arcsin(sqrt y);
        // avoids the cancellation of z against the series near z = 1
        let y = 1.0 - z;
        let sy = y.sqrt();
        let out = (1.0 - delta) - y * (1.0 - 2.0 * delta) - 2.0 * delta / PI * ((z * y).sqrt() - (1.0 - 2.0 * y) * sy.asin());
        return out.max(0.0);
    }
    (z - delta * series_b(z)).max(0.0)
}

/// `zeta'(z) = 1 - delta (2/pi) arccos(1 - 2z)`, with the arccos rewritten as
/// `2 arcsin(sqrt z)` so small `z` keeps full precision.
pub fn zeta_prime(delta: f64, z: f64) -> Result<f64> {
    check_delta(delta)?;
    let z = clamp_domain("z", z, 0.0, 1.0, "[0, 1]")?;
    Ok(zeta_prime_unchecked(delta, z))
}

#[inline]
pub(crate) fn zeta_prime_unchecked(delta: f64, z: f64) -> f64 {
    if z > 0.5 {
        return (1.0 - 2.0 * delta) + delta * (4.0 / PI) * (1.0 - z).sqrt().asin();
    }
    1.0 - delta * (4.0 / PI) * z.sqrt().asin()
}

/// `zeta''(z) = -delta (2/pi) (1 - z)^(-1/2) z^(-1/2)`, singular at both ends.
pub fn zeta_second(delta: f64, z: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::OutOfDomain { name: "z", value: z, domain: "(0, 1)" });
    }
    Ok(-delta * (2.0 / PI) / ((1.0 - z) * z).sqrt())
}

/// Inverse cosine distance map `omega(w) = zeta(w^-2)^(-1/2)`.
pub fn omega(delta: f64, w: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(w > 1.0) || w.is_infinite() {
        return Err(Error::OutOfDomain { name: "w", value: w, domain: "(1, inf)" });
    }
    omega_unchecked(delta, w)
}

pub(crate) fn omega_unchecked(delta: f64, w: f64) -> Result<f64> {
    if delta == 0.0 {
        return Ok(w);
    }
    let z = 1.0 / (w * w);
    if z < SERIES_SWITCH_Z {
        let g = delta * power_sum(z, 3, 2, |_| 1.0);
        return Ok(w / (1.0 - g).sqrt());
    }
    let zt = zeta_unchecked(delta, z);
    if zt <= 0.0 {
        return Err(Error::Divergence(w));
    }
    Ok(1.0 / zt.sqrt())
}

/// `omega'(w) = (omega(w)/w)^3 zeta'(w^-2)`.
pub fn omega_prime(delta: f64, w: f64) -> Result<f64> {
    let om = omega(delta, w)?;
    let ratio = om / w;
    Ok(ratio * ratio * ratio * zeta_prime_unchecked(delta, 1.0 / (w * w)))
}

/// `omega` composed `k` times.
pub fn omega_iter(delta: f64, w: f64, k: usize) -> Result<f64> {
    let mut x = w;
    if k > 0 {
        omega(delta, w)?;
    }
    for _ in 0..k {
        x = omega_unchecked(delta, x)?;
    }
    Ok(x)
}

/// Threshold beyond which `omega` is increasing with `omega' in [0, 1)`:
/// `((1 - cos(min(pi/(2 delta), pi)))/2)^(-1/2)`.
pub fn w_star(delta: f64) -> Result<f64> {
    require_nonlinear(delta, "w_star")?;
    let theta = (PI / (2.0 * delta)).min(PI);
    // (1 - cos t)/2 = sin(t/2)^2
    Ok(1.0 / (theta / 2.0).sin())
}

/// Third-order remainder `eps(w)` in
/// `omega(w) = w + delta 4/(3pi) + 3/2 (delta 4/(3pi))^2 / w + delta eps(w) / w^2`.
///
/// Evaluated as a sum of nonnegative terms so it keeps full relative
/// precision even when the remainder is `1e-12` of `omega(w)`.
pub fn epsilon_remainder(delta: f64, w: f64) -> Result<f64> {
    require_nonlinear(delta, "epsilon_remainder")?;
    if !(w > 1.0) || w.is_infinite() {
        return Err(Error::OutOfDomain { name: "w", value: w, domain: "(1, inf)" });
    }
    let z = 1.0 / (w * w);
    let b3 = b3();
    // h = sum_{r >= 5} b_r z^((r-2)/2)
    let h = if z < 0.25 {
        power_sum(z, 5, 2, |_| 1.0)
    } else {
        series_b(z) / z - b3 * z.sqrt()
    };
    let g = delta * (b3 / w + h);
    if g >= 1.0 {
        return Err(Error::Divergence(w));
    }
    let t = inverse_sqrt_tail(g);
    Ok(w * w * w * h / 2.0 + 0.375 * delta * w * w * (2.0 * b3 * h + w * h * h) + w * w * w * t / delta)
}

/// `(1-g)^(-1/2) - 1 - g/2 - 3g^2/8` without cancellation for small `g`.
fn inverse_sqrt_tail(g: f64) -> f64 {
    if g < 0.1 {
        let mut c = 5.0 / 16.0;
        let mut pow = g * g * g;
        let mut sum = 0.0;
        let mut k = 3.0;
        loop {
            let term = c * pow;
            let next = sum + term;
            if next == sum {
                return sum;
            }
            sum = next;
            c *= (2.0 * k + 1.0) / (2.0 * k + 2.0);
            pow *= g;
            k += 1.0;
        }
    }
    1.0 / (1.0 - g).sqrt() - 1.0 - g / 2.0 - 0.375 * g * g
}

/// Limit of [`epsilon_remainder`] as `w -> inf`: `b_5/2 + delta^2 (5/16) b_3^3`.
pub fn epsilon_limit(delta: f64) -> f64 {
    let b5 = crate::series::coefficient(5).expect("valid index");
    let b3 = b3();
    b5 / 2.0 + delta * delta * 5.0 / 16.0 * b3 * b3 * b3
}

/// Closed-form growth estimate of `omega^k(w)`:
/// `w + delta 4/(3pi) (k-1) + delta (2/pi) log(3pi/(4 delta) w + k - 1)`.
pub fn propagation_estimate(delta: f64, w: f64, k: usize) -> Result<f64> {
    require_nonlinear(delta, "propagation_estimate")?;
    if !(w > 1.0) {
        return Err(Error::OutOfDomain { name: "w", value: w, domain: "(1, inf)" });
    }
    if k < 1 {
        return Err(Error::InvalidArgument("propagation_estimate needs k >= 1".into()));
    }
    let km1 = (k - 1) as f64;
    Ok(w + delta * 4.0 / (3.0 * PI) * km1 + delta * 2.0 / PI * (3.0 * PI / (4.0 * delta) * w + km1).ln())
}

/// For `w` below [`w_star`], the unique `w' > w_star` with
/// `omega(w') = omega(w)`; values at or above the threshold pass through.
pub fn reflect_above_threshold(delta: f64, w: f64) -> Result<f64> {
    let ws = w_star(delta)?;
    if w >= ws {
        return Ok(w);
    }
    let target = omega(delta, w)?;
    // omega(x) >= x on (w_star, inf), so the preimage is at most target
    let (mut lo, mut hi) = (ws, target.max(ws));
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if omega_unchecked(delta, mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::coefficient;

    const DELTAS: [f64; 5] = [0.0, 0.125, 0.5, 0.875, 1.0];

    #[test]
    fn fixed_points_and_endpoints() {
        for d in DELTAS {
            assert_eq!(rho_map(d, 1.0).unwrap(), 1.0);
            assert!((rho_map(d, -1.0).unwrap() - (-1.0 + 2.0 * d)).abs() < 1e-15);
            assert_eq!(rho_prime(d, 1.0).unwrap(), 1.0);
            assert!((rho_prime(d, -1.0).unwrap() - (1.0 - 2.0 * d)).abs() < 1e-15);
            assert_eq!(zeta(d, 0.0).unwrap(), 0.0);
            assert!((zeta(d, 1.0).unwrap() - (1.0 - d)).abs() < 1e-15);
        }
        assert!((rho_prime(0.5, 0.0).unwrap() - 0.5).abs() < 1e-16);
    }

    #[test]
    fn relu_cosine_at_zero() {
        assert!((rho_map(0.5, 0.0).unwrap() - 1.0 / PI).abs() < 1e-16);
    }

    #[test]
    fn zeta_abs_at_half() {
        let want = 0.5 - 1.0 / PI;
        assert!((zeta(1.0, 0.5).unwrap() - want).abs() < 1e-16);
        let series: f64 = crate::series::Coefficients::new()
            .take_while(|&(r, _)| r <= 401)
            .map(|(r, b)| b * 0.5f64.powf(r as f64 / 2.0))
            .sum();
        assert!((0.5 - series - want).abs() < 1e-12);
    }

    #[test]
    fn clamping_policy() {
        assert_eq!(rho_map(0.5, 1.0 + 5e-13).unwrap(), 1.0);
        assert!(rho_map(0.5, 1.0 + 1e-9).is_err());
        assert!(zeta(0.5, -1e-9).is_err());
        assert_eq!(zeta(0.5, -5e-13).unwrap(), 0.0);
        assert!(zeta_second(0.5, 0.0).is_err());
        assert!(zeta_second(0.5, 1.0).is_err());
    }

    #[test]
    fn omega_examples() {
        for w in [1.5, 3.0, 1e3] {
            assert_eq!(omega(0.0, w).unwrap(), w);
        }
        let want = (0.5 - 1.0 / PI).powf(-0.5);
        assert!((omega(1.0, 2f64.sqrt()).unwrap() - want).abs() < 1e-13);
        let big = omega(1.0, 1e6).unwrap();
        assert!((big - 1e6 - 4.0 / (3.0 * PI)).abs() < 1e-5);
        assert!(omega(0.5, 1.0).is_err());
        assert!(omega(1.0, 1.0 + 1e-300).is_err());
    }

    #[test]
    fn omega_branches_agree_at_switch() {
        let w = SERIES_SWITCH_Z.powf(-0.5);
        for d in [0.25, 0.5, 1.0] {
            let z = 1.0 / (w * w);
            let closed = 1.0 / (z - d * (2.0 * (z * (1.0 - z)).sqrt() - 2.0 * (1.0 - 2.0 * z) * z.sqrt().asin()) / PI).sqrt();
            let series = omega(d, w * (1.0 + 1e-12)).unwrap();
            assert!(((closed - series) / closed).abs() < 1e-11);
        }
    }

    #[test]
    fn w_star_values() {
        assert_eq!(w_star(0.5).unwrap(), 1.0);
        assert_eq!(w_star(0.25).unwrap(), 1.0);
        assert!((w_star(1.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let want = ((1.0 - (3.0 * PI / 4.0).cos()) / 2.0).powf(-0.5);
        assert!((w_star(2.0 / 3.0).unwrap() - want).abs() < 1e-14);
        assert!((want - 1.0824).abs() < 1e-4);
        assert!(w_star(0.0).is_err());
    }

    #[test]
    fn omega_nondecreasing_right_of_threshold() {
        for d in [2.0 / 3.0, 0.75, 1.0] {
            let ws = w_star(d).unwrap();
            for i in 0..200 {
                let w = ws + 1e-9 + i as f64 * 0.05;
                let p = omega_prime(d, w).unwrap();
                assert!((-1e-7..1.0).contains(&p), "d={d} w={w} p={p}");
            }
        }
    }

    #[test]
    fn epsilon_decreasing_and_limit() {
        let e10 = epsilon_remainder(1.0, 10.0).unwrap();
        let e100 = epsilon_remainder(1.0, 100.0).unwrap();
        assert!(e10 > e100 && e100 > 0.0);
        let c0 = coefficient(5).unwrap() / 2.0 + 5.0 / 16.0 * coefficient(3).unwrap().powi(3);
        assert!((c0 - 0.2335).abs() < 1e-4);
        assert!((epsilon_remainder(1.0, 1e6).unwrap() - c0).abs() < 1e-5);
        let c_half = coefficient(5).unwrap() / 2.0 + 0.25 * 5.0 / 16.0 * coefficient(3).unwrap().powi(3);
        assert!((epsilon_remainder(0.5, 1e4).unwrap() - c_half).abs() < 1e-3);
        assert!((epsilon_limit(0.5) - c_half).abs() < 1e-15);
        assert!(epsilon_remainder(0.0, 2.0).is_err());
    }

    #[test]
    fn epsilon_matches_direct_definition_at_moderate_w() {
        // at w ~ 3..20 the direct formula still has ~10 good digits
        for d in [0.25, 0.5, 1.0] {
            for w in [3.0, 5.0, 8.0, 20.0] {
                let a = d * 4.0 / (3.0 * PI);
                let direct = (omega(d, w).unwrap() - w - a - 1.5 * a * a / w) * w * w / d;
                let got = epsilon_remainder(d, w).unwrap();
                assert!(((direct - got) / got).abs() < 1e-7, "d={d} w={w}: {direct} vs {got}");
            }
        }
    }

    #[test]
    fn zeta_near_one_full_precision() {
        // 40-digit evaluations of the closed form
        let z = 1.0 - 2f64.powi(-20);
        for (d, z, want) in [
            (1.0, z, 9.528_837_851_769_224e-7),
            (0.5, z, 0.499_999_999_604_734_4),
            (1.0, 0.75, 0.141_002_218_955_770_64),
            (0.5, 0.75, 0.445_501_109_477_885_3),
        ] {
            let got = zeta(d, z).unwrap();
            assert!((got - want).abs() <= 1e-14 * want, "{d} {z}: {got} vs {want}");
        }
        for d in [0.3, 1.0] {
            let lo = zeta(d, 0.5).unwrap();
            let hi = zeta(d, 0.5 + 1e-15).unwrap();
            assert!((hi - lo).abs() < 1e-14);
            let lo = zeta_prime(d, 0.5).unwrap();
            let hi = zeta_prime(d, 0.5 + 1e-15).unwrap();
            assert!((hi - lo).abs() < 1e-14);
        }
    }

    #[test]
    fn propagation_estimate_values() {
        let d = 0.7;
        let w = 3.0;
        let k1 = propagation_estimate(d, w, 1).unwrap();
        assert!((k1 - (w + d * 2.0 / PI * (3.0 * PI / (4.0 * d) * w).ln())).abs() < 1e-14);
        let e = propagation_estimate(1.0, 2.0, 10_000).unwrap();
        let want = 2.0 + 4.0 / (3.0 * PI) * 9999.0 + 2.0 / PI * (1.5 * PI + 9999.0).ln();
        assert!((e - want).abs() < 1e-9);
        assert!((e - 4251.571).abs() < 1e-3);
        assert!(propagation_estimate(0.0, 2.0, 3).is_err());
    }

    #[test]
    fn reflection_preserves_omega() {
        for d in [0.75, 1.0] {
            let ws = w_star(d).unwrap();
            for w in [1.01, 1.1, 0.5 * (1.0 + ws)] {
                let r = reflect_above_threshold(d, w).unwrap();
                assert!(r > ws);
                let (a, b) = (omega(d, w).unwrap(), omega(d, r).unwrap());
                assert!(((a - b) / a).abs() < 1e-10, "{a} {b}");
            }
            assert_eq!(reflect_above_threshold(d, 5.0).unwrap(), 5.0);
        }
    }
}
