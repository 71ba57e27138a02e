use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::clamp_domain;
use crate::matrix::{dot, Matrix};

pub const DEFAULT_PARALLEL_TOLERANCE: f64 = 1e-9;

/// Attempts before [`sample_sphere_dataset`] gives up on drawing a
/// nondegenerate dataset.
pub const MAX_SAMPLE_ATTEMPTS: usize = 16;

/// `n` input points of common dimension with their norms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    norms: Vec<f64>,
    parallel_tolerance: f64,
}

/// Provenance of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub n: usize,
    pub dim: usize,
    pub seed: Option<u64>,
    pub bias: Option<f64>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_tolerance(points, DEFAULT_PARALLEL_TOLERANCE)
    }

    pub fn with_tolerance(points: Vec<Vec<f64>>, parallel_tolerance: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(format!("dataset needs n >= 2 points, got {}", points.len())));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidArgument("points must have dimension >= 1".into()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("non-finite coordinate".into()));
            }
        }
        let norms: Vec<f64> = points.iter().map(|p| dot(p, p).sqrt()).collect();
        if let Some(i) = norms.iter().position(|&t| t == 0.0) {
            return Err(Error::ZeroNorm(i));
        }
        Ok(Self { points, norms, parallel_tolerance })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn parallel_tolerance(&self) -> f64 {
        self.parallel_tolerance
    }

    fn raw_cosine(&self, i: usize, j: usize) -> f64 {
        dot(&self.points[i], &self.points[j]) / (self.norms[i] * self.norms[j])
    }

    /// Pairs `(i, j)`, `i < j`, with `|cos| >= 1 - parallel_tolerance`.
    pub fn parallel_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                if self.raw_cosine(i, j).abs() >= 1.0 - self.parallel_tolerance {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.parallel_pairs().is_empty()
    }

    pub fn require_nondegenerate(&self) -> Result<()> {
        let pairs = self.parallel_pairs();
        if pairs.is_empty() {
            Ok(())
        } else {
            Err(Error::ParallelPoints(pairs))
        }
    }

    /// Pairs of identical points.
    pub fn repeated_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                if self.points[i] == self.points[j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Subset of the points at the given indices.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Self::with_tolerance(idx.iter().map(|&i| self.points[i].clone()).collect(), self.parallel_tolerance)
    }

    /// Appends the coordinate `beta` to every point, which separates parallel
    /// but distinct points.
    pub fn append_bias(&self, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::OutOfDomain { name: "beta", value: beta, domain: "(0, inf)" });
        }
        let repeated = self.repeated_pairs();
        if !repeated.is_empty() {
            return Err(Error::RepeatedPoints(repeated));
        }
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.push(beta);
                q
            })
            .collect();
        Self::with_tolerance(points, self.parallel_tolerance)
    }

    /// First-layer cosines: unit diagonal, symmetric, clamped into `[-1, 1]`.
    pub fn gram_cosines(&self) -> Result<Matrix> {
        let n = self.n();
        let mut m = Matrix::identity(n);
        for i in 0..n {
            for j in i + 1..n {
                let c = clamp_domain("cosine", self.raw_cosine(i, j), -1.0, 1.0, "[-1, 1]")?;
                m[(i, j)] = c;
                m[(j, i)] = c;
            }
        }
        Ok(m)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|x| format!("{x:?}")).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// One point per line, comma separated; blank lines and `#` comments are
    /// skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1))))
                .collect::<Result<Vec<f64>>>()?;
            points.push(row);
        }
        Self::new(points)
    }
}

/// `n` points drawn uniformly from the unit sphere in `R^dim`. Attempt `k`
/// draws from ChaCha stream `k` under `seed`; degenerate draws are retried.
pub fn sample_sphere_dataset(n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    if n < 2 || dim < 2 {
        return Err(Error::InvalidArgument(format!("sphere dataset needs n >= 2 and dim >= 2, got n={n}, dim={dim}")));
    }
    for attempt in 0..MAX_SAMPLE_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| loop {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = dot(&v, &v).sqrt();
                if norm > 1e-12 {
                    break v.into_iter().map(|x| x / norm).collect();
                }
            })
            .collect();
        let d = Dataset::new(points)?;
        if d.is_nondegenerate() {
            return Ok(d);
        }
    }
    Err(Error::DegenerateSample(MAX_SAMPLE_ATTEMPTS))
}
