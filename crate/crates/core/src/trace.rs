use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{self, clamp_domain, epsilon_remainder, series_b, zeta_prime_unchecked, zeta_unchecked};
use crate::series::{b3, power_sum};

/// Starting point of a depth trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Start {
    /// First-layer cosine `rho_1`.
    Cosine(f64),
    /// First-layer inverse cosine distance `w_1 >= 1`.
    InverseDistance(f64),
}

/// Layer-by-layer quantities for one input pair, indexed from layer 1.
#[derive(Debug, Clone, Serialize)]
pub struct MapTrace {
    pub delta: f64,
    pub rho: Vec<f64>,
    pub z: Vec<f64>,
    /// `None` once the pair has collapsed (`z == 0`).
    pub w: Vec<Option<f64>>,
    /// Partial sums whose value times `|x1| |x2|` is the limiting NTK entry.
    pub u: Vec<f64>,
    pub depth: usize,
    /// Started from an antipodal pair (`rho_1 = -1`).
    pub antipodal_start: bool,
}

impl MapTrace {
    pub fn last_u(&self) -> f64 {
        *self.u.last().expect("depth >= 1")
    }
}

pub fn iterate(delta: f64, start: Start, depth: usize) -> Result<MapTrace> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::OutOfDomain { name: "delta", value: delta, domain: "[0, 1]" });
    }
    if depth < 1 {
        return Err(Error::InvalidArgument("depth must be >= 1".into()));
    }
    let (rho1, z1) = match start {
        Start::Cosine(r) => {
            let r = clamp_domain("rho", r, -1.0, 1.0, "[-1, 1]")?;
            (r, (1.0 - r) / 2.0)
        }
        Start::InverseDistance(w) => {
            if !(w >= 1.0) || w.is_infinite() {
                return Err(Error::OutOfDomain { name: "w", value: w, domain: "[1, inf)" });
            }
            let z = 1.0 / (w * w);
            (1.0 - 2.0 * z, z)
        }
    };
    let mut trace = MapTrace {
        delta,
        rho: Vec::with_capacity(depth),
        z: Vec::with_capacity(depth),
        w: Vec::with_capacity(depth),
        u: Vec::with_capacity(depth),
        depth,
        antipodal_start: rho1 == -1.0,
    };
    let (mut rho, mut z, mut u) = (rho1, z1, rho1);
    for k in 0..depth {
        trace.rho.push(rho);
        trace.z.push(z);
        trace.w.push(if z > 0.0 { Some(1.0 / z.sqrt()) } else { None });
        trace.u.push(u);
        if k + 1 == depth {
            break;
        }
        let zn = zeta_unchecked(delta, z);
        u = zeta_prime_unchecked(delta, z) * u + 1.0 - 2.0 * zn;
        z = zn;
        rho = 1.0 - 2.0 * z;
    }
    Ok(trace)
}

/// `u_l` alone, without storing the trace.
pub fn u_at_depth(delta: f64, rho1: f64, depth: usize) -> f64 {
    let (mut z, mut u) = ((1.0 - rho1) / 2.0, rho1);
    for _ in 1..depth {
        let zn = zeta_unchecked(delta, z);
        u = zeta_prime_unchecked(delta, z) * u + 1.0 - 2.0 * zn;
        z = zn;
    }
    u
}

/// Affine approximation `(3pi/16) w / delta - 1/8` of `u_k` in terms of the
/// inverse cosine distance; it is an exact upper bound.
pub fn u_upper_bound(delta: f64, w: f64) -> f64 {
    3.0 * PI / 16.0 / delta * w - 0.125
}

/// Constant `c` such that `u_k >= u_upper_bound(w_k) - c k z_k` for all `k`,
/// given the first squared cosine distance `z1` in `(0, 1)`.
///
/// Maximum of the base-case requirement
/// `2 + (1/4)(delta b3/2)^-1 z1^(-3/2) - (9/8) z1^-1` and the induction-step
/// requirement
/// `2 + (1/2) b3^-1 eps(z1^-1/2) z1/zeta(z1) + (1/4) b3^-1 S(z1)/zeta(z1)`
/// with `S(z) = sum_{r >= 5} r b_r z^((r-3)/2)`.
pub fn lower_bound_constant(delta: f64, z1: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::LinearActivation("lower_bound_constant"));
    }
    if !(z1 > 0.0 && z1 < 1.0) {
        return Err(Error::OutOfDomain { name: "z1", value: z1, domain: "(0, 1)" });
    }
    let b3 = b3();
    let base = 2.0 + 0.25 / (0.5 * delta * b3) * z1.powf(-1.5) - 1.125 / z1;
    let zt = zeta_unchecked(delta, z1);
    if zt <= 0.0 {
        return Err(Error::Divergence(z1.powf(-0.5)));
    }
    let eps = epsilon_remainder(delta, z1.powf(-0.5))?;
    let step = 2.0 + 0.5 / b3 * eps * z1 / zt + 0.25 / b3 * weighted_tail(z1) / zt;
    Ok(base.max(step))
}

/// `sum_{r >= 5} r b_r z^((r-3)/2)`.
fn weighted_tail(z: f64) -> f64 {
    if z < 0.25 {
        power_sum(z, 5, 3, |r| r as f64)
    } else {
        // sum_{r >= 3} r b_r z^((r-2)/2) = (8/pi) arcsin(sqrt z)
        8.0 / PI * z.sqrt().asin() / z.sqrt() - 3.0 * b3()
    }
}

/// Value of `sum_{r>=3} b_r z^(r/2)` exposed for series checks.
pub fn half_power_series(z: f64) -> f64 {
    series_b(z)
}

/// `(rho_{k+1}, z_{k+1}, w_{k+1})` from the three maps independently, for
/// consistency checks against a trace.
pub fn step_all_coordinates(delta: f64, rho: f64, z: f64, w: f64) -> Result<(f64, f64, f64)> {
    Ok((maps::rho_map(delta, rho)?, maps::zeta(delta, z)?, maps::omega(delta, w)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_trace_counts_layers() {
        for d in [0.0, 0.5, 1.0] {
            let t = iterate(d, Start::Cosine(1.0), 5).unwrap();
            assert_eq!(t.u, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
            assert!(t.w.iter().all(Option::is_none));
        }
    }

    #[test]
    fn linear_activation_keeps_cosine() {
        let t = iterate(0.0, Start::Cosine(0.3), 4).unwrap();
        assert!(t.rho.iter().all(|&r| (r - 0.3).abs() < 1e-15));
        for (k, u) in t.u.iter().enumerate() {
            assert!((u - 0.3 * (k + 1) as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn relu_one_step() {
        let t = iterate(0.5, Start::Cosine(0.0), 2).unwrap();
        assert!((t.rho[1] - 1.0 / PI).abs() < 1e-15);
        assert!((t.u[1] - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn antipodal_start_flagged() {
        let t = iterate(0.0, Start::Cosine(-1.0), 3).unwrap();
        assert!(t.antipodal_start);
        assert!(t.rho.iter().all(|&r| r == -1.0));
        let t = iterate(1.0, Start::Cosine(-1.0), 3).unwrap();
        assert_eq!(t.rho[1], 1.0);
    }

    #[test]
    fn inverse_distance_start() {
        let t = iterate(1.0, Start::InverseDistance(2f64.sqrt()), 2).unwrap();
        assert!((t.rho[0]).abs() < 1e-15);
        let want = (0.5 - 1.0 / PI).powf(-0.5);
        assert!((t.w[1].unwrap() - want).abs() < 1e-12);
        assert!(iterate(1.0, Start::InverseDistance(0.5), 2).is_err());
        assert!(iterate(1.0, Start::Cosine(0.5), 0).is_err());
    }

    #[test]
    fn u_at_depth_matches_trace() {
        let t = iterate(0.75, Start::Cosine(-0.4), 50).unwrap();
        assert_eq!(t.last_u(), u_at_depth(0.75, -0.4, 50));
    }

    #[test]
    fn lower_bound_constant_includes_base_case() {
        let c = lower_bound_constant(0.125, 0.005).unwrap();
        // first-layer inequality u_1 >= upper(w_1) - c z_1 must hold
        let w1 = 0.005f64.powf(-0.5);
        assert!(0.99 >= u_upper_bound(0.125, w1) - c * 0.005);
        assert!(lower_bound_constant(0.0, 0.3).is_err());
        assert!(lower_bound_constant(0.5, 0.0).is_err());
    }

    #[test]
    fn weighted_tail_branches_agree() {
        let z = 0.25;
        let series = power_sum(z, 5, 3, |r| r as f64);
        let closed = 8.0 / PI * z.sqrt().asin() / z.sqrt() - 3.0 * b3();
        assert!((series - closed).abs() < 1e-13, "{series} {closed}");
    }
}
