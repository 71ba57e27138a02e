//! Independent numerical evaluation of dual functions
//! `f^(rho) = E[f(U1) f(U2)]` for standard bivariate Gaussians with
//! correlation `rho`, used to validate the closed forms.
//!
//! The default rule works in polar coordinates. Writing
//! `U1 = r cos(t)` and `U2 = r cos(t - acos(rho))`, the integrand is smooth in
//! `t` between the kink angles of `f` at the origin, so the circle is split
//! there and each arc gets a Gauss-Legendre rule; the radius uses
//! Gauss-Laguerre in `r^2/2`. For positively homogeneous `f` (every
//! `(a,b)`-ReLU, its derivative, `|.|` and `sgn`) this converges
//! exponentially. A plain tensor Gauss-Hermite grid is also provided; it
//! converges only algebraically for kinked integrands.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::activation::ActivationParams;
use crate::error::{Error, Result};
use crate::maps::clamp_domain;

const MAX_ORDER: usize = 512;
const MC_CHUNK: usize = 8192;

/// Nodes and weights of a one-dimensional Gauss rule.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn check_order(order: usize) -> Result<()> {
    if order < 2 || order > MAX_ORDER {
        return Err(Error::InvalidArgument(format!("quadrature order must be in [2, {MAX_ORDER}], got {order}")));
    }
    Ok(())
}

/// Gauss-Legendre on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Result<GaussRule> {
    check_order(n)?;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp;
        loop {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok(GaussRule { nodes, weights })
}

/// Gauss-Hermite for the standard normal density (weights sum to one).
pub fn gauss_hermite(n: usize) -> Result<GaussRule> {
    check_order(n)?;
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0;
    for i in 0..(n + 1) / 2 {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let scale = PI.sqrt();
    Ok(GaussRule {
        nodes: x.iter().rev().map(|v| v * 2f64.sqrt()).collect(),
        weights: w.iter().rev().map(|v| v / scale).collect(),
    })
}

/// Gauss-Laguerre for the weight `e^(-t)` on `[0, inf)`.
pub fn gauss_laguerre(n: usize) -> Result<GaussRule> {
    check_order(n)?;
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0;
    for i in 0..n {
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - x[i - 2])
            }
        };
        let (mut pp, mut p2) = (0.0, 0.0);
        for _ in 0..100 {
            let mut p1 = 1.0;
            p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0 - z) * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (p1 - p2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs() {
                break;
            }
        }
        x[i] = z;
        w[i] = -1.0 / (pp * nf * p2);
    }
    Ok(GaussRule { nodes: x, weights: w })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Polar Gauss rule split at the kink angles (default oracle).
    Quadrature,
    /// Plain tensor Gauss-Hermite grid.
    HermiteTensor,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DualEstimate {
    pub value: f64,
    pub method: Method,
    /// Nodes per axis, for quadrature estimates.
    pub order: Option<usize>,
    pub samples: Option<usize>,
    /// Standard error, zero for quadrature.
    pub stderr: f64,
}

/// Reusable polar product rule of a given order.
#[derive(Debug, Clone)]
pub struct PolarRule {
    order: usize,
    angular: GaussRule,
    radial: Vec<(f64, f64)>,
}

impl PolarRule {
    pub fn new(order: usize) -> Result<Self> {
        let angular = gauss_legendre(order)?;
        let lag = gauss_laguerre(order)?;
        let radial = lag.nodes.iter().zip(&lag.weights).map(|(&t, &w)| ((2.0 * t).sqrt(), w)).collect();
        Ok(Self { order, angular, radial })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dual(&self, f: impl Fn(f64) -> f64, rho: f64) -> Result<DualEstimate> {
        let rho = clamp_domain("rho", rho, -1.0, 1.0, "[-1, 1]")?;
        let alpha = rho.acos();
        let two_pi = 2.0 * PI;
        let mut cuts = vec![0.0, two_pi, 0.5 * PI, 1.5 * PI];
        for c in [alpha + 0.5 * PI, alpha + 1.5 * PI] {
            cuts.push(c.rem_euclid(two_pi));
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let mut total = 0.0;
        for arc in cuts.windows(2) {
            let (lo, hi) = (arc[0], arc[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            let mut arc_sum = 0.0;
            for (&x, &wx) in self.angular.nodes.iter().zip(&self.angular.weights) {
                let t = mid + half * x;
                let (c1, c2) = (t.cos(), (t - alpha).cos());
                let radial: f64 = self.radial.iter().map(|&(r, wr)| wr * f(r * c1) * f(r * c2)).sum();
                arc_sum += wx * radial;
            }
            total += half * arc_sum;
        }
        Ok(DualEstimate {
            value: total / two_pi,
            method: Method::Quadrature,
            order: Some(self.order),
            samples: None,
            stderr: 0.0,
        })
    }
}

/// `E[f(U1) f(U2)]` by the polar product rule with `order` nodes per axis
/// and per arc. Accuracy degrades for `f` with kinks away from the origin.
pub fn dual_quadrature(f: impl Fn(f64) -> f64, rho: f64, order: usize) -> Result<DualEstimate> {
    PolarRule::new(order)?.dual(f, rho)
}

/// `E[f(U1) f(U2)]` on a tensor Gauss-Hermite grid with
/// `(U1, U2) = (g1, rho g1 + sqrt(1 - rho^2) g2)`.
pub fn dual_hermite_tensor(f: impl Fn(f64) -> f64, rho: f64, order: usize) -> Result<DualEstimate> {
    let rho = clamp_domain("rho", rho, -1.0, 1.0, "[-1, 1]")?;
    let rule = gauss_hermite(order)?;
    let s = ((1.0 - rho) * (1.0 + rho)).sqrt();
    let mut total = 0.0;
    for (&g1, &w1) in rule.nodes.iter().zip(&rule.weights) {
        let f1 = f(g1);
        let inner: f64 = rule.nodes.iter().zip(&rule.weights).map(|(&g2, &w2)| w2 * f(rho * g1 + s * g2)).sum();
        total += w1 * f1 * inner;
    }
    Ok(DualEstimate {
        value: total,
        method: Method::HermiteTensor,
        order: Some(order),
        samples: None,
        stderr: 0.0,
    })
}

/// Monte Carlo estimate from `samples` correlated pairs. Chunk `c` of the
/// sample stream uses ChaCha stream `c` under `seed`, so the result does not
/// depend on how chunks are scheduled.
pub fn dual_montecarlo(f: impl Fn(f64) -> f64 + Sync, rho: f64, samples: usize, seed: u64) -> Result<DualEstimate> {
    let rho = clamp_domain("rho", rho, -1.0, 1.0, "[-1, 1]")?;
    if samples < 1000 {
        return Err(Error::InvalidArgument(format!("Monte Carlo needs at least 1000 samples, got {samples}")));
    }
    let s = ((1.0 - rho) * (1.0 + rho)).sqrt();
    let chunks = samples.div_ceil(MC_CHUNK);
    let parts: Vec<(f64, f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = MC_CHUNK.min(samples - c * MC_CHUNK);
            let (mut mean, mut m2) = (0.0, 0.0);
            for i in 0..len {
                let g1: f64 = StandardNormal.sample(&mut rng);
                let g2: f64 = StandardNormal.sample(&mut rng);
                let v = f(g1) * f(rho * g1 + s * g2);
                let d = v - mean;
                mean += d / (i + 1) as f64;
                m2 += d * (v - mean);
            }
            (len as f64, mean, m2)
        })
        .collect();
    // Chan et al. pairwise merge, in chunk order
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for (nb, mb, m2b) in parts {
        let tot = n + nb;
        let d = mb - mean;
        mean += d * nb / tot;
        m2 += m2b + d * d * n * nb / tot;
        n = tot;
    }
    let var = m2 / (n - 1.0);
    Ok(DualEstimate {
        value: mean,
        method: Method::MonteCarlo,
        order: None,
        samples: Some(samples),
        stderr: (var / n).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DualKind {
    Abs,
    Sgn,
    AbPhi,
    AbPhiPrime,
}

fn dual_abs(rho: f64) -> f64 {
    2.0 / PI * (rho * rho.asin() + ((1.0 - rho) * (1.0 + rho)).sqrt())
}

fn dual_sgn(rho: f64) -> f64 {
    2.0 / PI * rho.asin()
}

/// Closed-form duals of `|.|`, `sgn`, and of an `(a,b)`-ReLU and its
/// derivative via their odd/even decomposition.
pub fn dual_closed(kind: DualKind, params: Option<&ActivationParams>, rho: f64) -> Result<f64> {
    let rho = clamp_domain("rho", rho, -1.0, 1.0, "[-1, 1]")?;
    let need = || params.ok_or_else(|| Error::InvalidArgument(format!("{kind:?} dual needs activation parameters")));
    Ok(match kind {
        DualKind::Abs => dual_abs(rho),
        DualKind::Sgn => dual_sgn(rho),
        DualKind::AbPhi => {
            let p = need()?;
            p.a * p.a * rho + p.b * p.b * dual_abs(rho)
        }
        DualKind::AbPhiPrime => {
            let p = need()?;
            p.a * p.a + p.b * p.b * dual_sgn(rho)
        }
    })
}

/// The scalar function whose dual `kind` describes.
pub fn dual_integrand(kind: DualKind, params: Option<ActivationParams>) -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    Ok(match kind {
        DualKind::Abs => Box::new(|s: f64| s.abs()),
        DualKind::Sgn => Box::new(|s: f64| if s > 0.0 { 1.0 } else if s < 0.0 { -1.0 } else { 0.0 }),
        DualKind::AbPhi | DualKind::AbPhiPrime => {
            let p = params.ok_or_else(|| Error::InvalidArgument(format!("{kind:?} needs activation parameters")))?;
            if kind == DualKind::AbPhi {
                Box::new(move |s| p.phi(s))
            } else {
                Box::new(move |s| p.phi_prime(s))
            }
        }
    })
}
