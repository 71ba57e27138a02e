use rayon::prelude::*;
use serde::Serialize;

use crate::activation::ActivationParams;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::maps::{clamp_domain, zeta_prime_unchecked, zeta_unchecked};
use crate::matrix::Matrix;
use crate::trace::u_upper_bound;

/// Limiting NTK `block ⊠ I_{m_l}` stored as the `n x n` block and the output
/// multiplicity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelMatrix {
    pub block: Matrix,
    pub multiplicity: usize,
    pub depth: usize,
}

impl KernelMatrix {
    /// Eigenvalues of the full kernel, descending, each block eigenvalue
    /// repeated `multiplicity` times.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let block = crate::eigen::eigen_symmetric(&self.block)?;
        Ok(repeat_eigenvalues(&block, self.multiplicity))
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(&self.block, self.depth, self.multiplicity)
    }
}

pub fn repeat_eigenvalues(block_eigs: &[f64], multiplicity: usize) -> Vec<f64> {
    block_eigs.iter().flat_map(|&v| std::iter::repeat(v).take(multiplicity)).collect()
}

/// Inverse cosine distances of all pairs at one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceMatrix {
    pub entries: Matrix,
    pub layer: usize,
}

fn check_depth(l: usize) -> Result<()> {
    if l < 1 {
        return Err(Error::InvalidArgument("depth must be >= 1".into()));
    }
    Ok(())
}

/// Limiting NTK entry `|x1| |x2| u_l(rho1)` of an edge-of-chaos network.
pub fn ntk_entry(params: &ActivationParams, x1_norm: f64, x2_norm: f64, rho1: f64, l: usize) -> Result<f64> {
    params.require_edge_of_chaos()?;
    check_depth(l)?;
    let rho1 = clamp_domain("rho", rho1, -1.0, 1.0, "[-1, 1]")?;
    Ok(x1_norm * x2_norm * u_sequence(params.delta, rho1, l)[l - 1])
}

/// `u_1, ..., u_depth` for one pair.
fn u_sequence(delta: f64, rho1: f64, depth: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(depth);
    let (mut z, mut u) = ((1.0 - rho1) / 2.0, rho1);
    out.push(u);
    for _ in 1..depth {
        let zn = zeta_unchecked(delta, z);
        u = zeta_prime_unchecked(delta, z) * u + 1.0 - 2.0 * zn;
        z = zn;
        out.push(u);
    }
    out
}

/// Squared cosine distances `z_1, ..., z_depth` for one pair.
fn z_sequence(delta: f64, rho1: f64, depth: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(depth);
    let mut z = (1.0 - rho1) / 2.0;
    out.push(z);
    for _ in 1..depth {
        z = zeta_unchecked(delta, z);
        out.push(z);
    }
    out
}

/// Runs `f` on every strict-upper-triangle pair in parallel and returns the
/// results in row-major pair order.
fn pairwise<T: Send>(n: usize, f: impl Fn(usize, usize) -> T + Sync) -> Vec<T> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    pairs.into_par_iter().map(|(i, j)| f(i, j)).collect()
}

fn mirror(n: usize, diag: impl Fn(usize) -> f64, upper: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    let mut it = upper.iter();
    for i in 0..n {
        m[(i, i)] = diag(i);
        for j in i + 1..n {
            let v = *it.next().expect("one value per pair");
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Cosine-level matrices `U` (entries `u_l`, diagonal `l`) at each requested
/// depth, from one forward recursion per pair.
pub fn u_matrices(params: &ActivationParams, d: &Dataset, depths: &[usize]) -> Result<Vec<Matrix>> {
    params.require_edge_of_chaos()?;
    for &l in depths {
        check_depth(l)?;
    }
    let Some(&max_depth) = depths.iter().max() else {
        return Ok(Vec::new());
    };
    let n = d.n();
    let gram = d.gram_cosines()?;
    let delta = params.delta;
    let seqs = pairwise(n, |i, j| u_sequence(delta, gram[(i, j)], max_depth));
    Ok(depths
        .iter()
        .map(|&l| {
            let upper: Vec<f64> = seqs.iter().map(|s| s[l - 1]).collect();
            mirror(n, |_| l as f64, &upper)
        })
        .collect())
}

pub fn u_matrix(params: &ActivationParams, d: &Dataset, l: usize) -> Result<Matrix> {
    Ok(u_matrices(params, d, &[l])?.remove(0))
}

/// `(1/n) D_tau U D_tau`.
fn normalize(u: &Matrix, tau: &[f64]) -> Matrix {
    let n = tau.len() as f64;
    Matrix::from_fn(u.rows(), u.cols(), |i, j| tau[i] * tau[j] * u[(i, j)] / n)
}

pub fn ntk_matrices(params: &ActivationParams, d: &Dataset, depths: &[usize], m_l: usize) -> Result<Vec<KernelMatrix>> {
    if m_l < 1 {
        return Err(Error::InvalidArgument("output multiplicity m_l must be >= 1".into()));
    }
    let us = u_matrices(params, d, depths)?;
    Ok(us
        .iter()
        .zip(depths)
        .map(|(u, &l)| KernelMatrix { block: normalize(u, d.norms()), multiplicity: m_l, depth: l })
        .collect())
}

/// Limiting NTK matrix at depth `l` with output width `m_l`.
pub fn ntk_matrix(params: &ActivationParams, d: &Dataset, l: usize, m_l: usize) -> Result<KernelMatrix> {
    Ok(ntk_matrices(params, d, &[l], m_l)?.remove(0))
}

/// Inverse cosine distance matrices at each requested layer.
pub fn w_matrices(params: &ActivationParams, d: &Dataset, layers: &[usize]) -> Result<Vec<DistanceMatrix>> {
    d.require_nondegenerate()?;
    for &k in layers {
        check_depth(k)?;
    }
    let Some(&max_layer) = layers.iter().max() else {
        return Ok(Vec::new());
    };
    let n = d.n();
    let gram = d.gram_cosines()?;
    let delta = params.delta;
    let seqs = pairwise(n, |i, j| z_sequence(delta, gram[(i, j)], max_layer));
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    layers
        .iter()
        .map(|&k| {
            let mut upper = Vec::with_capacity(seqs.len());
            for (s, &(i, j)) in seqs.iter().zip(&pairs) {
                let z = s[k - 1];
                if !(z > 0.0) {
                    return Err(Error::EntryOverflow { i, j, layer: k });
                }
                upper.push(1.0 / z.sqrt());
            }
            Ok(DistanceMatrix { entries: mirror(n, |_| 0.0, &upper), layer: k })
        })
        .collect()
}

pub fn w_matrix(params: &ActivationParams, d: &Dataset, k: usize) -> Result<DistanceMatrix> {
    Ok(w_matrices(params, d, &[k])?.remove(0))
}

/// Affine approximation of `U`: off-diagonal `(3pi/16) w_l / delta - 1/8`,
/// diagonal `l`.
pub fn approx_matrix(params: &ActivationParams, d: &Dataset, l: usize) -> Result<Matrix> {
    if params.delta == 0.0 {
        return Err(Error::LinearActivation("approx_matrix"));
    }
    let w = w_matrix(params, d, l)?.entries;
    let n = d.n();
    Ok(Matrix::from_fn(n, n, |i, j| if i == j { l as f64 } else { u_upper_bound(params.delta, w[(i, j)]) }))
}

/// CSV export: one header line `# n=<n> l=<l> m_l=<m>` followed by the rows.
pub fn matrix_csv(m: &Matrix, l: usize, m_l: usize) -> String {
    let mut s = format!("# n={} l={} m_l={}\n", m.rows(), l, m_l);
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|&x| crate::io::fmt_g(x)).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sample_sphere_dataset;
    use crate::maps::{rho_map, rho_prime};
    use crate::trace::lower_bound_constant;
    use std::f64::consts::PI;

    /// Literal double sum `sum_k X_k prod_{k' >= k} X'_{k'}` over the cosine
    /// map and its derivative.
    fn double_sum_oracle(delta: f64, rho1: f64, l: usize) -> f64 {
        let mut rho = vec![rho1];
        for _ in 1..l {
            let r = *rho.last().unwrap();
            rho.push(rho_map(delta, r).unwrap());
        }
        (0..l)
            .map(|k| {
                let prod: f64 = (k..l - 1).map(|kk| rho_prime(delta, rho[kk]).unwrap()).product();
                rho[k] * prod
            })
            .sum()
    }

    fn orthonormal_pair() -> Dataset {
        Dataset::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn entry_examples() {
        let p = ActivationParams::from_delta(0.5).unwrap();
        for l in [1, 2, 7] {
            assert_eq!(ntk_entry(&p, 1.0, 1.0, 1.0, l).unwrap(), l as f64);
        }
        assert_eq!(ntk_entry(&p, 2.0, 3.0, 0.25, 1).unwrap(), 1.5);
        let v = ntk_entry(&p, 1.0, 1.0, 0.0, 2).unwrap();
        assert!((v - 1.0 / PI).abs() < 1e-15);
        assert!((double_sum_oracle(0.5, 0.0, 2) - 1.0 / PI).abs() < 1e-15);
        let off = p.with_sigma(0.5).unwrap();
        assert!(matches!(ntk_entry(&off, 1.0, 1.0, 0.0, 2), Err(Error::NotAtEdgeOfChaos { .. })));
    }

    #[test]
    fn recursion_matches_double_sum() {
        for delta in [0.0, 0.125, 0.5, 1.0] {
            for rho in [-0.95, -0.3, 0.0, 0.6, 0.99] {
                for l in [1, 2, 5, 20] {
                    let u = u_sequence(delta, rho, l)[l - 1];
                    let o = double_sum_oracle(delta, rho, l);
                    assert!((u - o).abs() <= 1e-12 * o.abs().max(1.0), "{delta} {rho} {l}: {u} vs {o}");
                }
            }
        }
    }

    #[test]
    fn orthonormal_block() {
        let p = ActivationParams::new(0.5, 0.5).unwrap();
        let k = ntk_matrix(&p, &orthonormal_pair(), 1, 1).unwrap();
        assert_eq!(k.block.to_rows(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
    }

    #[test]
    fn block_diagonal_and_symmetry() {
        let d = sample_sphere_dataset(12, 5, 3).unwrap();
        let p = ActivationParams::new(1.0, 1.0).unwrap();
        for l in [1, 4, 33] {
            let k = ntk_matrix(&p, &d, l, 2).unwrap();
            assert_eq!(k.block.max_asymmetry(), 0.0);
            for i in 0..12 {
                assert!((k.block[(i, i)] - l as f64 / 12.0).abs() < 1e-10 * l as f64);
            }
            let e = crate::eigen::eigen_symmetric(&k.block).unwrap();
            assert!(*e.last().unwrap() >= -1e-9 * k.block.frobenius_norm());
        }
    }

    #[test]
    fn multi_depth_matches_single() {
        let d = sample_sphere_dataset(6, 4, 9).unwrap();
        let p = ActivationParams::new(1.0, 3f64.sqrt()).unwrap();
        let many = ntk_matrices(&p, &d, &[3, 1, 10], 1).unwrap();
        assert_eq!(many[0], ntk_matrix(&p, &d, 3, 1).unwrap());
        assert_eq!(many[2], ntk_matrix(&p, &d, 10, 1).unwrap());
    }

    #[test]
    fn multiplicity_repeats() {
        assert_eq!(repeat_eigenvalues(&[3.0, 1.0], 2), vec![3.0, 3.0, 1.0, 1.0]);
    }

    #[test]
    fn w_matrix_examples() {
        let d = orthonormal_pair();
        let p = ActivationParams::new(0.0, 1.0).unwrap();
        let w1 = w_matrix(&p, &d, 1).unwrap();
        assert_eq!(w1.entries[(0, 0)], 0.0);
        assert!((w1.entries[(0, 1)] - 2f64.sqrt()).abs() < 1e-15);
        let w2 = w_matrix(&p, &d, 2).unwrap();
        assert!((w2.entries[(0, 1)] - crate::maps::omega(1.0, 2f64.sqrt()).unwrap()).abs() < 1e-12);
        assert!((w2.entries[(1, 0)] - 2.3460).abs() < 1e-4);

        let lin = ActivationParams::new(1.0, 0.0).unwrap();
        let s = sample_sphere_dataset(7, 3, 1).unwrap();
        assert_eq!(w_matrix(&lin, &s, 1).unwrap().entries, w_matrix(&lin, &s, 9).unwrap().entries);
    }

    #[test]
    fn approximation_sandwich_entrywise() {
        for seed in 0..5 {
            let d = sample_sphere_dataset(8, 4, seed).unwrap();
            let g = d.gram_cosines().unwrap();
            for p in crate::activation::delta_eighths() {
                for l in [1, 2, 8, 40] {
                    let u = u_matrix(&p, &d, l).unwrap();
                    let a = approx_matrix(&p, &d, l).unwrap();
                    let zs = w_matrix(&p, &d, l).unwrap().entries;
                    for i in 0..8 {
                        assert_eq!(a[(i, i)], l as f64);
                        for j in 0..8 {
                            if i == j {
                                continue;
                            }
                            let gap = a[(i, j)] - u[(i, j)];
                            let zl = zs[(i, j)].powi(-2);
                            let c = lower_bound_constant(p.delta, (1.0 - g[(i, j)]) / 2.0).unwrap();
                            assert!(gap >= -1e-12 * a[(i, j)].abs(), "upper bound: {gap}");
                            assert!(gap <= c * l as f64 * zl * (1.0 + 1e-12), "lower bound");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn approximation_error_shrinks_with_depth() {
        let d = sample_sphere_dataset(10, 6, 4).unwrap();
        let p = ActivationParams::new(0.5, 0.5).unwrap();
        let err = |l| u_matrix(&p, &d, l).unwrap().sub(&approx_matrix(&p, &d, l).unwrap()).inf_norm();
        let e: Vec<f64> = [4, 16, 64, 256].into_iter().map(err).collect();
        assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
    }

    #[test]
    fn off_diagonal_growth_rate() {
        let p = ActivationParams::new(1.0, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for l in [64, 256, 1024] {
            let r = u_sequence(p.delta, 0.3, l)[l - 1] / l as f64;
            assert!(r > 0.25 && r < 1.0);
            assert!(r - 0.25 < prev);
            prev = r - 0.25;
        }
    }

    #[test]
    fn csv_header() {
        let p = ActivationParams::new(0.5, 0.5).unwrap();
        let k = ntk_matrix(&p, &orthonormal_pair(), 1, 3).unwrap();
        assert_eq!(k.to_csv(), "# n=2 l=1 m_l=3\n0.5,0\n0,0.5\n");
    }
}
