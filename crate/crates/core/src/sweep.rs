use rayon::prelude::*;
use serde::Serialize;

use crate::activation::ActivationParams;
use crate::dataset::{sample_sphere_dataset, Dataset};
use crate::eigen::{condition_number, eigen_symmetric};
use crate::error::{Error, Result};
use crate::io::{csv_table, fmt_g};
use crate::kernel::ntk_matrices;

/// Mean condition number of the limiting NTK at each depth for one
/// activation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthCurve {
    pub params: ActivationParams,
    /// `(depth, mean kappa)` in increasing depth.
    pub points: Vec<(usize, f64)>,
}

impl DepthCurve {
    /// `Step,Value` table.
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<f64>> = self.points.iter().map(|&(l, k)| vec![l as f64, k]).collect();
        csv_table(&["Step", "Value"], &rows)
    }

    pub fn file_name(&self) -> String {
        format!("kappa_a_{}_b_{}.csv", fmt_g(self.params.a), fmt_g(self.params.b))
    }

    pub fn value_at(&self, depth: usize) -> Option<f64> {
        self.points.iter().find(|p| p.0 == depth).map(|p| p.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub n: usize,
    pub dim: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub depths: Vec<usize>,
    pub bias: Option<f64>,
}

/// Dataset `i` of a sweep: sphere sample with seed `base_seed + i`, then the
/// optional bias coordinate.
pub fn sweep_dataset(cfg: &SweepConfig, i: usize) -> Result<Dataset> {
    let d = sample_sphere_dataset(cfg.n, cfg.dim, cfg.base_seed + i as u64)?;
    match cfg.bias {
        Some(beta) => d.append_bias(beta),
        None => Ok(d),
    }
}

/// Condition numbers at each depth for one dataset.
pub fn kappa_profile(params: &ActivationParams, d: &Dataset, depths: &[usize]) -> Result<Vec<f64>> {
    ntk_matrices(params, d, depths, 1)?
        .iter()
        .map(|k| eigen_symmetric(&k.block).map(|e| condition_number(&e)))
        .collect()
}

/// Mean condition number over `cfg.seeds` datasets for every activation and
/// depth. The same datasets are shared by all activations; work units run in
/// parallel and are reduced in dataset order.
pub fn depth_sweep(activations: &[ActivationParams], cfg: &SweepConfig) -> Result<Vec<DepthCurve>> {
    if cfg.seeds < 1 {
        return Err(Error::InvalidArgument("sweep needs at least one seed".into()));
    }
    if cfg.depths.is_empty() || cfg.depths.iter().any(|&l| l < 1) {
        return Err(Error::InvalidArgument("sweep needs depths >= 1".into()));
    }
    let datasets: Vec<Dataset> = (0..cfg.seeds).map(|i| sweep_dataset(cfg, i)).collect::<Result<_>>()?;
    let units: Vec<(usize, usize)> =
        (0..activations.len()).flat_map(|a| (0..datasets.len()).map(move |s| (a, s))).collect();
    let profiles: Vec<Vec<f64>> = units
        .par_iter()
        .map(|&(a, s)| kappa_profile(&activations[a], &datasets[s], &cfg.depths))
        .collect::<Result<_>>()?;
    let mut curves = Vec::with_capacity(activations.len());
    for (a, params) in activations.iter().enumerate() {
        let mut sums = vec![0.0; cfg.depths.len()];
        for s in 0..datasets.len() {
            for (acc, v) in sums.iter_mut().zip(&profiles[a * datasets.len() + s]) {
                *acc += v;
            }
        }
        let points = cfg.depths.iter().zip(&sums).map(|(&l, &sum)| (l, sum / cfg.seeds as f64)).collect();
        curves.push(DepthCurve { params: *params, points });
    }
    Ok(curves)
}
