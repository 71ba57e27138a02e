use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::activation::ActivationParams;
use crate::dataset::Dataset;
use crate::eigen::{condition_number, eigen_symmetric, restricted_extremes};
use crate::error::{Error, Result};
use crate::kernel::{ntk_matrix, repeat_eigenvalues, w_matrix};
use crate::maps::{omega_iter, reflect_above_threshold};
use crate::matrix::Matrix;

/// Largest `n` for which the per-generator eigensolves behind
/// [`TildeBounds`] are run.
pub const MAX_TILDE_N: usize = 64;

/// Relative tolerance of the bisection in [`solve_w`].
pub const W_TOLERANCE: f64 = 1e-10;

/// Slack granted to an exact inequality, relative to the larger side.
pub const INEQUALITY_SLACK: f64 = 1e-9;

/// First-layer inverse cosine distances with every entry below the
/// threshold `w*` replaced by its partner above it with the same image under
/// `omega`. For layers `k >= 2` the distance matrix is `omega^(k-1)` applied
/// entrywise to these generators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generators {
    pub delta: f64,
    pub entries: Matrix,
    pub lower: f64,
    pub upper: f64,
}

impl Generators {
    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    /// Off-diagonal values in ascending order without duplicates.
    pub fn distinct_values(&self) -> Vec<f64> {
        let n = self.n();
        let mut v: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| self.entries[(i, j)]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// `omega^(k-1)` of every off-diagonal entry, zero diagonal.
    pub fn layer_matrix(&self, k: usize) -> Result<Matrix> {
        if k < 1 {
            return Err(Error::InvalidArgument("layer must be >= 1".into()));
        }
        let n = self.n();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = omega_iter(self.delta, self.entries[(i, j)], k - 1)?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }
}

fn require_nonlinear(params: &ActivationParams, what: &'static str) -> Result<()> {
    if params.delta > 0.0 {
        Ok(())
    } else {
        Err(Error::LinearActivation(what))
    }
}

pub fn generators(params: &ActivationParams, d: &Dataset) -> Result<Generators> {
    require_nonlinear(params, "generators")?;
    let w1 = w_matrix(params, d, 1)?.entries;
    let n = d.n();
    let mut entries = Matrix::zeros(n, n);
    let (mut lower, mut upper) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        for j in i + 1..n {
            let v = reflect_above_threshold(params.delta, w1[(i, j)])?;
            entries[(i, j)] = v;
            entries[(j, i)] = v;
            lower = lower.min(v);
            upper = upper.max(v);
        }
    }
    Ok(Generators { delta: params.delta, entries, lower, upper })
}

/// Restricted-spectrum constants of the generator matrix: `w_tilde` is the
/// largest `-lambda_min` and `delta_tilde` the largest restricted spread over
/// the matrices with entries `max(W_ij, g)`, one per generator value `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TildeBounds {
    pub w_tilde: f64,
    pub delta_tilde: f64,
}

pub fn tilde_bounds(gen: &Generators) -> Result<TildeBounds> {
    let n = gen.n();
    if n > MAX_TILDE_N {
        return Err(Error::TooLarge { n, cap: MAX_TILDE_N, what: "tilde bounds" });
    }
    let per_value: Vec<(f64, f64)> = gen
        .distinct_values()
        .into_par_iter()
        .map(|g| {
            let m = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { gen.entries[(i, j)].max(g) });
            restricted_extremes(&m)
        })
        .collect::<Result<_>>()?;
    let mut out = TildeBounds { w_tilde: f64::NEG_INFINITY, delta_tilde: f64::NEG_INFINITY };
    for (lo, hi) in per_value {
        out.w_tilde = out.w_tilde.max(-lo);
        out.delta_tilde = out.delta_tilde.max(hi - lo);
    }
    Ok(out)
}

/// One inequality `lhs <= rhs` and whether it held within the slack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(name: &'static str, lhs: f64, rhs: f64) -> Self {
        let slack = INEQUALITY_SLACK * lhs.abs().max(rhs.abs()).max(1.0);
        Self { name, lhs, rhs, holds: lhs <= rhs + slack }
    }

    /// `rhs - lhs`; negative on violation.
    pub fn gap(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Spectral inequalities on the layer-`k` distance matrix (`k >= 2`):
/// the Perron-Frobenius bracket of its top eigenvalue, the bound on its
/// second eigenvalue, and the lower bound on its restricted minimum. The
/// last two need `tilde`.
pub fn distance_inequalities(
    params: &ActivationParams,
    d: &Dataset,
    k: usize,
    gen: &Generators,
    tilde: Option<&TildeBounds>,
) -> Result<Vec<InequalityCheck>> {
    if k < 2 {
        return Err(Error::InvalidArgument("distance inequalities hold from layer 2 on".into()));
    }
    let wk = w_matrix(params, d, k)?.entries;
    let eig = eigen_symmetric(&wk)?;
    let nm1 = (d.n() - 1) as f64;
    let delta = params.delta;
    let om_lower = omega_iter(delta, gen.lower, k - 1)?;
    let om_upper = omega_iter(delta, gen.upper, k - 1)?;
    let mut out = vec![
        InequalityCheck::new("perron_frobenius_lower", nm1 * om_lower, eig[0]),
        InequalityCheck::new("perron_frobenius_upper", eig[0], nm1 * om_upper),
    ];
    if let Some(t) = tilde {
        out.push(InequalityCheck::new("second_eigenvalue", eig[1], -om_upper + t.delta_tilde));
        let (rmin, _) = restricted_extremes(&wk)?;
        let om_tilde = omega_iter(delta, t.w_tilde, k - 1)?;
        out.push(InequalityCheck::new("restricted_minimum", -om_tilde, rmin));
    }
    Ok(out)
}

/// Effective dataset-level inverse distance at depth `l`: the `W` in
/// `[lower, upper]` of the generators with
/// `lambda_1 = (n-1) omega^(l-1)(W)` for the depth-`l` generator matrix.
pub fn solve_w(params: &ActivationParams, d: &Dataset, l: usize) -> Result<f64> {
    let gen = generators(params, d)?;
    solve_w_from(&gen, l)
}

pub fn solve_w_from(gen: &Generators, l: usize) -> Result<f64> {
    let (lo, hi) = (gen.lower, gen.upper);
    if lo == hi {
        return Ok(lo);
    }
    let m = gen.layer_matrix(l)?;
    let lambda1 = eigen_symmetric(&m)?[0];
    let target = lambda1 / (gen.n() - 1) as f64;
    let f = |w: f64| omega_iter(gen.delta, w, l - 1).map(|v| v - target);
    let (f_lo, f_hi) = (f(lo)?, f(hi)?);
    let slack = INEQUALITY_SLACK * target.abs().max(1.0);
    if f_lo > slack || f_hi < -slack {
        return Err(Error::Bracketing(format!(
            "lambda_1/(n-1) = {target} outside [{}, {}]",
            target + f_lo,
            target + f_hi
        )));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > W_TOLERANCE * b {
        let mid = 0.5 * (a + b);
        if f(mid)? < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Logarithmic depth correction
/// `(3/8)(pi/(2 delta) W + log(3pi/(4 delta) W + l - 1) - 1)`.
pub fn xi(params: &ActivationParams, w: f64, l: usize) -> Result<f64> {
    require_nonlinear(params, "xi")?;
    if !(w > 1.0) || l < 1 {
        return Err(Error::InvalidArgument(format!("xi needs W > 1 and l >= 1, got W={w}, l={l}")));
    }
    let d = params.delta;
    Ok(0.375 * (PI / (2.0 * d) * w + (3.0 * PI / (4.0 * d) * w + (l - 1) as f64).ln() - 1.0))
}

/// Rank-one mixing coefficient `((3pi/16) omega^(l-1)(W)/delta - 1/8) / l`.
pub fn mixing_coefficient(params: &ActivationParams, w: f64, l: usize) -> Result<f64> {
    require_nonlinear(params, "mixing_coefficient")?;
    let om = omega_iter(params.delta, w, l - 1)?;
    Ok((3.0 * PI / 16.0 / params.delta * om - 0.125) / l as f64)
}

/// `(l/n)((1-c) D_tau^2 + c tau tau^T)`.
pub fn reference_matrix(c: f64, tau: &[f64], l: usize) -> Matrix {
    let n = tau.len();
    let s = l as f64 / n as f64;
    Matrix::from_fn(n, n, |i, j| {
        let rank_one = c * tau[i] * tau[j];
        s * if i == j { (1.0 - c) * tau[i] * tau[i] + rank_one } else { rank_one }
    })
}

/// Eigenvalue brackets of [`reference_matrix`]; they collapse to points
/// when all norms are equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceEigs {
    pub top_lower: f64,
    pub top_upper: f64,
    pub bulk_lower: f64,
    pub bulk_upper: f64,
    /// `c` lies in `(0, 1)`.
    pub in_regime: bool,
}

pub fn reference_eigenvalues(c: f64, tau: &[f64], l: usize, n: usize) -> Result<ReferenceEigs> {
    if n < 2 || tau.len() != n {
        return Err(Error::DimensionMismatch { expected: n.max(2), got: tau.len() });
    }
    let (t_lo, t_hi) = norm_range(tau);
    let s = l as f64 / n as f64;
    let top = s * (1.0 + (n - 1) as f64 * c);
    let bulk = s * (1.0 - c);
    Ok(ReferenceEigs {
        top_lower: top * t_lo * t_lo,
        top_upper: top * t_hi * t_hi,
        bulk_lower: bulk * t_lo * t_lo,
        bulk_upper: bulk * t_hi * t_hi,
        in_regime: c > 0.0 && c < 1.0,
    })
}

fn norm_range(tau: &[f64]) -> (f64, f64) {
    tau.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)))
}

/// Depth limit `1 + n/3` of the condition number.
pub fn kappa_limit(n: usize) -> f64 {
    1.0 + n as f64 / 3.0
}

/// Leading-order eigenvalue and condition-number predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Predictions {
    /// `tau_max^2 ((1 + 3/n) l/4 + (1 - 1/n) xi)`.
    pub lambda1: f64,
    /// `tau_max^2 (3l/4 - xi)/n`.
    pub bulk_upper: f64,
    /// `tau_min^2 (3l/4 - xi)/n`.
    pub bulk_lower: f64,
    /// `1 + n/3 + (16/9) n xi / (l - 4 xi/3)`.
    pub kappa: f64,
}

pub fn predictions(xi: f64, tau: &[f64], l: usize) -> Predictions {
    let n = tau.len() as f64;
    let lf = l as f64;
    let (t_lo, t_hi) = norm_range(tau);
    let bulk = (0.75 * lf - xi) / n;
    Predictions {
        lambda1: t_hi * t_hi * ((1.0 + 3.0 / n) * lf / 4.0 + (1.0 - 1.0 / n) * xi),
        bulk_upper: t_hi * t_hi * bulk,
        bulk_lower: t_lo * t_lo * bulk,
        kappa: 1.0 + n / 3.0 + 16.0 / 9.0 * n * xi / (lf - 4.0 / 3.0 * xi),
    }
}

/// Actual minus predicted values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    pub lambda1: f64,
    pub bulk_max: f64,
    pub lambda_min: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub n: usize,
    pub depth: usize,
    pub delta: f64,
    /// Block eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub multiplicity: usize,
    pub kappa: f64,
    pub kappa_limit: f64,
    pub xi: f64,
    #[serde(rename = "W")]
    pub w: f64,
    pub c: f64,
    pub generator_range: [f64; 2],
    pub tilde: Option<TildeBounds>,
    pub reference_eigs: ReferenceEigs,
    pub predictions: Predictions,
    pub residuals: Residuals,
    /// Exact inequalities on the depth-`l` distance matrix (empty for `l = 1`).
    pub inequalities: Vec<InequalityCheck>,
    /// Distance from the rank-one reference matrix relative to `lambda_1`.
    pub reference_gap: f64,
}

impl SpectralReport {
    pub fn all_inequalities_hold(&self) -> bool {
        self.inequalities.iter().all(|c| c.holds)
    }

    /// Eigenvalues of the full kernel including output multiplicity.
    pub fn kernel_eigenvalues(&self) -> Vec<f64> {
        repeat_eigenvalues(&self.eigenvalues, self.multiplicity)
    }

    pub const CSV_HEADER: &'static str = "l,kappa,lambda1,lambda_bulk_max,lambda_min,xi,W,c";

    pub fn csv_row(&self) -> Vec<f64> {
        let e = &self.eigenvalues;
        vec![self.depth as f64, self.kappa, e[0], e[1], *e.last().expect("n >= 2"), self.xi, self.w, self.c]
    }
}

pub fn theorem_report(params: &ActivationParams, d: &Dataset, l: usize, m_l: usize) -> Result<SpectralReport> {
    require_nonlinear(params, "theorem_report")?;
    d.require_nondegenerate()?;
    let n = d.n();
    let k = ntk_matrix(params, d, l, m_l)?;
    let eig = eigen_symmetric(&k.block)?;
    let gen = generators(params, d)?;
    let w = solve_w_from(&gen, l)?;
    let xi = xi(params, w, l)?;
    let c = mixing_coefficient(params, w, l)?;
    let tau = d.norms();
    let reference_eigs = reference_eigenvalues(c, tau, l, n)?;
    let predictions = predictions(xi, tau, l);
    let kappa = condition_number(&eig);
    let lambda_min = *eig.last().expect("n >= 2");
    let residuals = Residuals {
        lambda1: eig[0] - predictions.lambda1,
        bulk_max: eig[1] - predictions.bulk_upper,
        lambda_min: lambda_min - predictions.bulk_lower,
        kappa: kappa - predictions.kappa,
    };
    let tilde = if n <= MAX_TILDE_N { Some(tilde_bounds(&gen)?) } else { None };
    let inequalities = if l >= 2 { distance_inequalities(params, d, l, &gen, tilde.as_ref())? } else { Vec::new() };
    let reference_gap = eigen_spectral_norm(&k.block.sub(&reference_matrix(c, tau, l)))? / eig[0];
    Ok(SpectralReport {
        n,
        depth: l,
        delta: params.delta,
        eigenvalues: eig,
        multiplicity: m_l,
        kappa,
        kappa_limit: kappa_limit(n),
        xi,
        w,
        c,
        generator_range: [gen.lower, gen.upper],
        tilde,
        reference_eigs,
        predictions,
        residuals,
        inequalities,
        reference_gap,
    })
}

fn eigen_spectral_norm(m: &Matrix) -> Result<f64> {
    let e = eigen_symmetric(m)?;
    Ok(e[0].abs().max(e.last().expect("nonempty").abs()))
}
