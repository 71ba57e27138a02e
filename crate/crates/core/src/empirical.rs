use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::activation::ActivationParams;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::ntk_entry;
use crate::matrix::{dot, Matrix};

/// Bias-free MLP `h_1 = W_1 x`, `h_k = (sigma / sqrt(m_{k-1})) W_k phi(h_{k-1})`
/// with standard Gaussian weights; the output is `h_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    widths: Vec<usize>,
    weights: Vec<Matrix>,
    params: ActivationParams,
    seed: u64,
}

/// Pre-activations `h_1..h_l` of one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("depth >= 1")
    }
}

/// Layer `k` weights come from ChaCha stream `k` under `seed`.
pub fn init_network(widths: &[usize], params: &ActivationParams, seed: u64) -> Result<MlpNetwork> {
    params.require_edge_of_chaos()?;
    if widths.len() < 2 {
        return Err(Error::InvalidArgument("widths need at least input and output (depth >= 1)".into()));
    }
    if widths.iter().any(|&m| m == 0) {
        return Err(Error::InvalidArgument("all widths must be >= 1".into()));
    }
    let weights = widths
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            Matrix::from_fn(w[1], w[0], |_, _| StandardNormal.sample(&mut rng))
        })
        .collect();
    Ok(MlpNetwork { widths: widths.to_vec(), weights, params: *params, seed })
}

fn par_matvec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).into_par_iter().map(|i| dot(m.row(i), v)).collect()
}

/// `m^T v` with rows of `m` combined in a fixed order.
fn par_matvec_t(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.cols())
        .into_par_iter()
        .map(|j| {
            let mut s = 0.0;
            for (i, vi) in v.iter().enumerate() {
                s += m[(i, j)] * vi;
            }
            s
        })
        .collect()
}

impl MlpNetwork {
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn params(&self) -> &ActivationParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("nonempty")
    }

    /// Multiplier of layer `k` (1-based): 1 for the first layer,
    /// `sigma / sqrt(m_{k-1})` afterwards.
    fn layer_scale(&self, k: usize) -> f64 {
        if k == 1 {
            1.0
        } else {
            self.params.sigma / (self.widths[k - 1] as f64).sqrt()
        }
    }

    /// Input to layer `k`: `x` for `k = 1`, otherwise `phi(h_{k-1})`.
    fn layer_input(&self, cache: &ForwardCache, k: usize) -> Vec<f64> {
        if k == 1 {
            cache.input.clone()
        } else {
            cache.pre[k - 2].iter().map(|&s| self.params.phi(s)).collect()
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.widths[0] {
            return Err(Error::DimensionMismatch { expected: self.widths[0], got: x.len() });
        }
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.depth());
        let mut a = x.to_vec();
        for k in 1..=self.depth() {
            let s = self.layer_scale(k);
            let mut h = par_matvec(&self.weights[k - 1], &a);
            if s != 1.0 {
                h.iter_mut().for_each(|v| *v *= s);
            }
            a = h.iter().map(|&v| self.params.phi(v)).collect();
            pre.push(h);
        }
        Ok(ForwardCache { input: x.to_vec(), pre })
    }

    /// Rows of `dh_l/dh_k` for `k = 1..l`, each `m_l x m_k`, by reverse
    /// accumulation with `phi'(0) = a`.
    fn backward(&self, cache: &ForwardCache) -> Vec<Matrix> {
        let l = self.depth();
        let ml = self.output_width();
        let mut out = vec![Matrix::zeros(0, 0); l];
        out[l - 1] = Matrix::identity(ml);
        for k in (2..=l).rev() {
            let s = self.layer_scale(k);
            let next = &out[k - 1];
            let slope: Vec<f64> = cache.pre[k - 2].iter().map(|&v| self.params.phi_prime(v)).collect();
            let rows: Vec<Vec<f64>> = (0..ml)
                .map(|r| {
                    let mut g = par_matvec_t(&self.weights[k - 1], next.row(r));
                    g.iter_mut().zip(&slope).for_each(|(gi, d)| *gi *= s * d);
                    g
                })
                .collect();
            out[k - 2] = Matrix::from_rows(&rows);
        }
        out
    }

    fn factors(&self, cache: &ForwardCache) -> JacobianFactors {
        let l = self.depth();
        JacobianFactors {
            inputs: (1..=l).map(|k| self.layer_input(cache, k)).collect(),
            backprop: self.backward(cache),
        }
    }
}

/// Per-layer pieces of the parameter Jacobian of one input: the layer input
/// and the backpropagated output sensitivity.
struct JacobianFactors {
    inputs: Vec<Vec<f64>>,
    backprop: Vec<Matrix>,
}

fn contract(net: &MlpNetwork, f1: &JacobianFactors, f2: &JacobianFactors) -> Matrix {
    let ml = net.output_width();
    let mut k_theta = Matrix::zeros(ml, ml);
    for k in 1..=net.depth() {
        let s = net.layer_scale(k);
        let coef = s * s * dot(&f1.inputs[k - 1], &f2.inputs[k - 1]);
        let (b1, b2) = (&f1.backprop[k - 1], &f2.backprop[k - 1]);
        for r in 0..ml {
            for c in 0..ml {
                k_theta[(r, c)] += coef * dot(b1.row(r), b2.row(c));
            }
        }
    }
    k_theta
}

/// `sum_p dN(x1)/dtheta_p dN(x2)/dtheta_p^T` over all weights, as an
/// `m_l x m_l` matrix, from layerwise outer-product contractions.
pub fn empirical_ntk(net: &MlpNetwork, c1: &ForwardCache, c2: &ForwardCache) -> Result<Matrix> {
    for c in [c1, c2] {
        if c.pre.len() != net.depth() || c.input.len() != net.widths[0] {
            return Err(Error::DimensionMismatch { expected: net.depth(), got: c.pre.len() });
        }
    }
    Ok(contract(net, &net.factors(c1), &net.factors(c2)))
}

/// Empirical kernel of a dataset: `blocks[i][j] = K_theta(x_i, x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalKernel {
    pub blocks: Vec<Vec<Matrix>>,
    pub width_profile: Vec<usize>,
    pub seed: u64,
}

impl EmpiricalKernel {
    /// `(n m_l) x (n m_l)` matrix of all blocks.
    pub fn stacked(&self) -> Matrix {
        let n = self.blocks.len();
        let ml = self.blocks[0][0].rows();
        Matrix::from_fn(n * ml, n * ml, |i, j| self.blocks[i / ml][j / ml][(i % ml, j % ml)])
    }
}

pub fn empirical_kernel(net: &MlpNetwork, points: &[Vec<f64>]) -> Result<EmpiricalKernel> {
    let factors: Vec<JacobianFactors> =
        points.iter().map(|x| net.forward(x).map(|c| net.factors(&c))).collect::<Result<_>>()?;
    let blocks = factors.iter().map(|f1| factors.iter().map(|f2| contract(net, f1, f2)).collect()).collect();
    Ok(EmpiricalKernel { blocks, width_profile: net.widths.clone(), seed: net.seed })
}

/// Limiting NTK entry of two raw points; at depth 1 it is the plain inner
/// product.
pub fn limiting_entry(params: &ActivationParams, x1: &[f64], x2: &[f64], l: usize) -> Result<f64> {
    if l == 1 {
        params.require_edge_of_chaos()?;
        return Ok(dot(x1, x2));
    }
    let (n1, n2) = (dot(x1, x1).sqrt(), dot(x2, x2).sqrt());
    ntk_entry(params, n1, n2, dot(x1, x2) / (n1 * n2), l)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub width: usize,
    pub mean_rel_error: f64,
    pub stderr: f64,
    /// Least-squares log-log slope over this and all previous rows; present
    /// from the third width on.
    pub slope_so_far: Option<f64>,
}

impl ConvergenceRow {
    pub const CSV_HEADER: &'static str = "width,mean_rel_error,stderr,slope_so_far";
}

/// Relative deviation of the empirical NTK from the limiting one at each
/// hidden width. Trial `t` uses seed `base_seed + t`; the output width is 1.
/// Errors are averaged over all pairs `i <= j` and then over trials.
pub fn convergence_sweep(
    params: &ActivationParams,
    d: &Dataset,
    widths: &[usize],
    depth: usize,
    trials: usize,
    base_seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    if trials < 3 {
        return Err(Error::InvalidArgument(format!("convergence sweep needs >= 3 trials, got {trials}")));
    }
    if depth < 1 {
        return Err(Error::InvalidArgument("depth must be >= 1".into()));
    }
    let n = d.n();
    let pts = d.points();
    let mut reference = Vec::new();
    for i in 0..n {
        for j in i..n {
            reference.push(limiting_entry(params, &pts[i], &pts[j], depth)?);
        }
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(widths.len());
    for &width in widths {
        let mut profile = vec![d.dim()];
        profile.extend(std::iter::repeat(width).take(depth - 1));
        profile.push(1);
        let mut per_trial = Vec::with_capacity(trials);
        for t in 0..trials {
            let net = init_network(&profile, params, base_seed + t as u64)?;
            let k = empirical_kernel(&net, pts)?;
            let mut err = 0.0;
            let mut idx = 0;
            for i in 0..n {
                for j in i..n {
                    let want = reference[idx];
                    err += (k.blocks[i][j][(0, 0)] - want).abs() / want.abs();
                    idx += 1;
                }
            }
            per_trial.push(err / idx as f64);
        }
        let mean = per_trial.iter().sum::<f64>() / trials as f64;
        let var = per_trial.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (trials - 1) as f64;
        rows.push(ConvergenceRow { width, mean_rel_error: mean, stderr: (var / trials as f64).sqrt(), slope_so_far: None });
        if rows.len() >= 3 {
            let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.width as f64).ln(), r.mean_rel_error.ln())).collect();
            rows.last_mut().expect("nonempty").slope_so_far = Some(least_squares_slope(&pts));
        }
    }
    Ok(rows)
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sample_sphere_dataset;

    fn relu() -> ActivationParams {
        ActivationParams::new(0.5, 0.5).unwrap()
    }

    #[test]
    fn depth_one_is_linear() {
        let p = ActivationParams::new(1.0, 2.0).unwrap();
        let net = init_network(&[3, 4], &p, 1).unwrap();
        let x1 = [0.3, -1.0, 2.0];
        let x2 = [1.5, 0.2, -0.7];
        let c1 = net.forward(&x1).unwrap();
        let want = net.weights()[0].matvec(&x1);
        assert_eq!(c1.output(), want.as_slice());
        let k = empirical_ntk(&net, &c1, &net.forward(&x2).unwrap()).unwrap();
        let ip = dot(&x1, &x2);
        assert_eq!(k, Matrix::identity(4).scale(ip));
    }

    #[test]
    fn seeded_weights_reproducible() {
        let p = relu();
        let a = init_network(&[3, 5, 2], &p, 9).unwrap();
        assert_eq!(a, init_network(&[3, 5, 2], &p, 9).unwrap());
        assert_ne!(a.weights(), init_network(&[3, 5, 2], &p, 10).unwrap().weights());
        assert!(init_network(&[3], &p, 1).is_err());
        assert!(init_network(&[3, 0, 1], &p, 1).is_err());
        assert!(init_network(&[3, 2], &p.with_sigma(1.0).unwrap(), 1).is_err());
    }

    #[test]
    fn forward_homogeneity() {
        let p = ActivationParams::new(1.0, 3f64.sqrt()).unwrap();
        let net = init_network(&[4, 6, 6, 2], &p, 3).unwrap();
        let x = [0.5, -0.1, 0.9, 0.3];
        let zero = net.forward(&[0.0; 4]).unwrap();
        assert!(zero.pre.iter().all(|h| h.iter().all(|&v| v == 0.0)));
        let c = net.forward(&x).unwrap();
        let t = 2.5;
        let tx: Vec<f64> = x.iter().map(|v| v * t).collect();
        let ct = net.forward(&tx).unwrap();
        for (h, ht) in c.pre.iter().zip(&ct.pre) {
            for (a, b) in h.iter().zip(ht) {
                assert!((b - t * a).abs() <= 1e-13 * (1.0 + (t * a).abs()));
            }
        }
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn diagonal_variance_preserved() {
        let p = relu();
        let x = [0.6, 0.0, 0.8];
        let seeds = 200;
        let mean: f64 = (0..seeds)
            .map(|s| {
                let c = init_network(&[3, 64, 64], &p, s).unwrap().forward(&x).unwrap();
                dot(&c.pre[1], &c.pre[1]) / 64.0
            })
            .sum::<f64>()
            / seeds as f64;
        // each sample has relative spread about sqrt(2/64) and more, so 200
        // seeds give a standard error near 0.02
        assert!((mean - 1.0).abs() < 0.1, "{mean}");
    }

    /// `dN/dtheta` by central differences, flattened over all weights.
    fn fd_jacobian(net: &MlpNetwork, x: &[f64], step: f64) -> Vec<Vec<f64>> {
        let ml = net.output_width();
        let mut rows = vec![Vec::new(); ml];
        let mut probe = net.clone();
        for k in 0..net.weights.len() {
            for idx in 0..net.weights[k].as_slice().len() {
                let (r, c) = (idx / net.weights[k].cols(), idx % net.weights[k].cols());
                let orig = net.weights[k][(r, c)];
                probe.weights[k][(r, c)] = orig + step;
                let plus = probe.forward(x).unwrap().output().to_vec();
                probe.weights[k][(r, c)] = orig - step;
                let minus = probe.forward(x).unwrap().output().to_vec();
                probe.weights[k][(r, c)] = orig;
                for o in 0..ml {
                    rows[o].push((plus[o] - minus[o]) / (2.0 * step));
                }
            }
        }
        rows
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = ActivationParams::new(1.0, 1.0).unwrap();
        let mut checked = 0;
        for seed in 0..40 {
            let net = init_network(&[3, 8, 7, 2], &p, seed).unwrap();
            let x1 = [0.4, -0.9, 0.2];
            let x2 = [-0.3, 0.5, 0.8];
            let (c1, c2) = (net.forward(&x1).unwrap(), net.forward(&x2).unwrap());
            let away = |c: &ForwardCache| c.pre[..2].iter().flatten().all(|v| v.abs() > 1e-2);
            if !(away(&c1) && away(&c2)) {
                continue;
            }
            let (j1, j2) = (fd_jacobian(&net, &x1, 1e-4), fd_jacobian(&net, &x2, 1e-4));
            let k = empirical_ntk(&net, &c1, &c2).unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    let fd = dot(&j1[r], &j2[c]);
                    assert!((fd - k[(r, c)]).abs() <= 1e-4 * fd.abs().max(1.0), "{fd} vs {}", k[(r, c)]);
                }
            }
            checked += 1;
        }
        assert!(checked >= 3, "only {checked} kink-free draws");
    }

    #[test]
    fn blockwise_symmetry_and_psd() {
        let p = relu();
        let net = init_network(&[3, 6, 5, 2], &p, 4).unwrap();
        let d = sample_sphere_dataset(4, 3, 2).unwrap();
        let k = empirical_kernel(&net, d.points()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let diff = k.blocks[i][j].sub(&k.blocks[j][i].transpose()).max_abs();
                assert!(diff <= 1e-12 * k.blocks[i][j].max_abs().max(1.0));
            }
        }
        let s = k.stacked();
        let sym = Matrix::symmetric_from_upper(8, |i, j| s[(i, j)]);
        let e = crate::eigen::eigen_symmetric(&sym).unwrap();
        assert!(*e.last().unwrap() >= -1e-9 * sym.frobenius_norm());
    }

    #[test]
    fn kernel_homogeneity() {
        let p = ActivationParams::new(0.0, 1.0).unwrap();
        let net = init_network(&[2, 9, 9, 1], &p, 5).unwrap();
        let x1 = [0.7, -0.2];
        let x2 = [0.1, 0.9];
        let t = 3.0;
        let tx1 = [t * x1[0], t * x1[1]];
        let k = |a: &[f64]| empirical_ntk(&net, &net.forward(a).unwrap(), &net.forward(&x2).unwrap()).unwrap()[(0, 0)];
        assert!((k(&tx1) - t * k(&x1)).abs() <= 1e-12 * k(&tx1).abs().max(1.0));
    }

    #[test]
    fn depth_one_sweep_is_exact() {
        let d = sample_sphere_dataset(4, 8, 1).unwrap();
        let rows = convergence_sweep(&relu(), &d, &[16, 64, 256], 1, 3, 0).unwrap();
        assert!(rows.iter().all(|r| r.mean_rel_error == 0.0));
        assert!(convergence_sweep(&relu(), &d, &[16], 1, 2, 0).is_err());
    }

    #[test]
    fn slope_of_line() {
        assert!((least_squares_slope(&[(0.0, 1.0), (1.0, 0.5), (2.0, 0.0)]) + 0.5).abs() < 1e-15);
    }
}
