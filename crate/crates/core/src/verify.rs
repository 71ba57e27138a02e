use rayon::prelude::*;
use serde::Serialize;

use crate::activation::ActivationParams;
use crate::error::{Error, Result};
use crate::maps::{omega_unchecked, propagation_estimate, zeta_prime_unchecked, zeta_unchecked};
use crate::quadrature::{dual_closed, dual_integrand, DualKind, PolarRule};
use crate::trace::{lower_bound_constant, u_upper_bound};

/// Largest tolerated gap between quadrature and closed-form duals.
pub const DUAL_TOLERANCE: f64 = 1e-8;

/// Allowed growth of the propagation deviation from the early to the late
/// window.
pub const PLATEAU_MARGIN: f64 = 0.1;

/// Rounding allowance of the lower `u_k` bound, relative to the magnitude of
/// its terms. The bound is an equality at `k = 1` when the base case sets the
/// constant.
pub const LOWER_BOUND_ROUNDING: f64 = 1e-12;

/// Cosines `-0.99, -0.98, ..., 0.99`.
pub fn rho_grid() -> Vec<f64> {
    (0..=198).map(|i| (i as f64 - 99.0) / 100.0).collect()
}

/// Activations checked by the dual suite: identity, ReLU, absolute value
/// and `(1, 2)`.
pub fn dual_check_activations() -> Vec<ActivationParams> {
    [(1.0, 0.0), (0.5, 0.5), (0.0, 1.0), (1.0, 2.0)]
        .into_iter()
        .map(|(a, b)| ActivationParams::new(a, b).expect("valid pair"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualCheckRow {
    pub function: &'static str,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub max_error: f64,
    pub rho_at_max: f64,
}

impl DualCheckRow {
    pub fn passes(&self) -> bool {
        self.max_error <= DUAL_TOLERANCE
    }
}

fn dual_row(
    rule: &PolarRule,
    kind: DualKind,
    name: &'static str,
    params: Option<ActivationParams>,
    grid: &[f64],
) -> Result<DualCheckRow> {
    let f = dual_integrand(kind, params)?;
    let mut row = DualCheckRow { function: name, a: params.map(|p| p.a), b: params.map(|p| p.b), max_error: 0.0, rho_at_max: grid[0] };
    for &rho in grid {
        let q = rule.dual(&f, rho)?.value;
        let err = (q - dual_closed(kind, params.as_ref(), rho)?).abs();
        if err > row.max_error {
            row.max_error = err;
            row.rho_at_max = rho;
        }
    }
    Ok(row)
}

/// Maximum closed-form versus quadrature gap over `grid` for `|.|`, `sgn`,
/// and `phi`, `phi'` of every activation in `activations`.
pub fn dual_check(activations: &[ActivationParams], grid: &[f64], order: usize) -> Result<Vec<DualCheckRow>> {
    let rule = PolarRule::new(order)?;
    let mut out = vec![dual_row(&rule, DualKind::Abs, "abs", None, grid)?, dual_row(&rule, DualKind::Sgn, "sgn", None, grid)?];
    for p in activations {
        out.push(dual_row(&rule, DualKind::AbPhi, "phi", Some(*p), grid)?);
        out.push(dual_row(&rule, DualKind::AbPhiPrime, "phi_prime", Some(*p), grid)?);
    }
    Ok(out)
}

/// Deviation of `omega^k(w)` from its closed-form estimate, summarized over
/// an early window `k in [10, 100]` and a late window `k in [100, k_max]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationScan {
    pub delta: f64,
    pub w: f64,
    pub k_max: usize,
    pub max_early: f64,
    pub max_late: f64,
}

impl PropagationScan {
    pub fn excess(&self) -> f64 {
        self.max_late - self.max_early
    }

    pub fn passes(&self) -> bool {
        self.excess() < PLATEAU_MARGIN
    }
}

pub fn propagation_scan(delta: f64, w: f64, k_max: usize) -> Result<PropagationScan> {
    if k_max < 100 {
        return Err(Error::InvalidArgument(format!("propagation scan needs k_max >= 100, got {k_max}")));
    }
    let mut scan = PropagationScan { delta, w, k_max, max_early: 0.0, max_late: 0.0 };
    let mut x = w;
    for k in 1..=k_max {
        x = omega_unchecked(delta, x)?;
        let dev = (x - propagation_estimate(delta, w, k)?).abs();
        if (10..=100).contains(&k) {
            scan.max_early = scan.max_early.max(dev);
        }
        if k >= 100 {
            scan.max_late = scan.max_late.max(dev);
        }
    }
    Ok(scan)
}

/// Violation counts of the two-sided bound on `u_k` over a cosine grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichScan {
    pub delta: f64,
    pub k_max: usize,
    pub points: usize,
    pub upper_violations: usize,
    pub lower_violations: usize,
    /// Smallest `upper - u_k` seen.
    pub min_upper_gap: f64,
    /// Smallest `u_k - lower` seen.
    pub min_lower_gap: f64,
}

impl SandwichScan {
    pub fn passes(&self) -> bool {
        self.upper_violations == 0 && self.lower_violations == 0
    }
}

/// Checks `upper(w_k) - c k z_k <= u_k <= upper(w_k)` for `k = 1..=k_max`
/// and every starting cosine in `grid` (each strictly inside `(-1, 1)`).
pub fn sandwich_scan(delta: f64, grid: &[f64], k_max: usize) -> Result<SandwichScan> {
    if !(delta > 0.0) {
        return Err(Error::LinearActivation("sandwich_scan"));
    }
    let per_rho: Vec<SandwichScan> = grid
        .par_iter()
        .map(|&rho1| {
            let z1 = (1.0 - rho1) / 2.0;
            let c = lower_bound_constant(delta, z1)?;
            let mut s = SandwichScan {
                delta,
                k_max,
                points: 0,
                upper_violations: 0,
                lower_violations: 0,
                min_upper_gap: f64::INFINITY,
                min_lower_gap: f64::INFINITY,
            };
            let (mut z, mut u) = (z1, rho1);
            for k in 1..=k_max {
                let upper = u_upper_bound(delta, 1.0 / z.sqrt());
                let drop = c * k as f64 * z;
                let lower = upper - drop;
                let allowance = LOWER_BOUND_ROUNDING * upper.abs().max(drop).max(1.0);
                s.points += 1;
                s.upper_violations += usize::from(u > upper);
                s.lower_violations += usize::from(u < lower - allowance);
                s.min_upper_gap = s.min_upper_gap.min(upper - u);
                s.min_lower_gap = s.min_lower_gap.min(u - lower);
                let zn = zeta_unchecked(delta, z);
                u = zeta_prime_unchecked(delta, z) * u + 1.0 - 2.0 * zn;
                z = zn;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let mut total = SandwichScan {
        delta,
        k_max,
        points: 0,
        upper_violations: 0,
        lower_violations: 0,
        min_upper_gap: f64::INFINITY,
        min_lower_gap: f64::INFINITY,
    };
    for s in per_rho {
        total.points += s.points;
        total.upper_violations += s.upper_violations;
        total.lower_violations += s.lower_violations;
        total.min_upper_gap = total.min_upper_gap.min(s.min_upper_gap);
        total.min_lower_gap = total.min_lower_gap.min(s.min_lower_gap);
    }
    Ok(total)
}
