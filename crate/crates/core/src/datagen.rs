//! Synthetic inputs: two moons, power-law graphs, Gaussian mixtures and
//! noisy spirals, plus Euclidean relation matrices over point clouds.
//!
//! Every generator is a pure function of its parameters and seed.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1};
use rand::distr::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{GwError, Result};
use crate::types::{Distribution, RelationMatrix};

pub const DEFAULT_MOON_NOISE: f64 = 0.05;
pub const DEFAULT_BANDWIDTH: f64 = 1.0;
/// Edges added per new node in the preferential-attachment graph.
pub const ATTACHMENT: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Array2<f64>,
}

impl PointCloud {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(GwError::EmptyDistribution);
        }
        if let Some(((row, col), _)) = points.indexed_iter().find(|(_, x)| !x.is_finite()) {
            return Err(GwError::NonFiniteEntry { row, col });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphSpec {
    pub n: usize,
    /// Undirected edges with `u < v`, in insertion order.
    pub edges: Vec<(usize, usize)>,
    pub seed: u64,
}

impl GraphSpec {
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    /// 0/1 adjacency as a relation matrix.
    pub fn adjacency(&self) -> RelationMatrix {
        let mut adj = Array2::zeros((self.n, self.n));
        for &(u, v) in &self.edges {
            adj[[u, v]] = 1.0;
            adj[[v, u]] = 1.0;
        }
        RelationMatrix::new(adj).expect("adjacency is symmetric and finite")
    }
}

fn require_at_least(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        Err(GwError::InvalidConfig(format!("{what} needs n >= {min}, got {n}")))
    } else {
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two interleaving half circles with angles evenly spaced over `[0, pi]`:
/// source `(cos t, sin t)`, target `(1 - cos t, 0.5 - sin t)`, each
/// coordinate perturbed by `N(0, noise^2)`.
pub fn gen_moon(n: usize, seed: u64, noise: f64) -> Result<(PointCloud, PointCloud)> {
    require_at_least(n, 2, "moon")?;
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(GwError::InvalidConfig(format!(
            "noise must be non-negative, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = |i: usize| PI * i as f64 / (n - 1) as f64;
    let mut src = Array2::zeros((n, 2));
    let mut tgt = Array2::zeros((n, 2));
    for i in 0..n {
        let t = theta(i);
        src[[i, 0]] = t.cos() + noise * normal(&mut rng);
        src[[i, 1]] = t.sin() + noise * normal(&mut rng);
    }
    for i in 0..n {
        let t = theta(i);
        tgt[[i, 0]] = 1.0 - t.cos() + noise * normal(&mut rng);
        tgt[[i, 1]] = 0.5 - t.sin() + noise * normal(&mut rng);
    }
    Ok((PointCloud::new(src)?, PointCloud::new(tgt)?))
}

/// Barabási–Albert graph: a triangle seed, then each new node links to two
/// distinct existing nodes chosen with probability proportional to degree.
pub fn gen_powerlaw_graph(n: usize, seed: u64) -> Result<GraphSpec> {
    require_at_least(n, 3, "power-law graph")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = vec![(0, 1), (0, 2), (1, 2)];
    // every node appears once per incident edge
    let mut ends: Vec<usize> = vec![0, 1, 0, 2, 1, 2];
    for v in 3..n {
        let mut targets: Vec<usize> = Vec::with_capacity(ATTACHMENT);
        while targets.len() < ATTACHMENT {
            let u = ends[rng.random_range(0..ends.len())];
            if !targets.contains(&u) {
                targets.push(u);
            }
        }
        for u in targets {
            edges.push((u, v));
            ends.push(u);
            ends.push(v);
        }
    }
    Ok(GraphSpec { n, edges, seed })
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &Array2<f64>) -> Array2<f64> {
    let d = a.nrows();
    let mut l = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
            if i == j {
                l[[i, j]] = (a[[i, i]] - s).sqrt();
            } else {
                l[[i, j]] = (a[[i, j]] - s) / l[[j, j]];
            }
        }
    }
    l
}

/// `(Sigma)_ij = 0.6^{|i-j|}` in five dimensions.
pub fn source_covariance() -> Array2<f64> {
    Array2::from_shape_fn((5, 5), |(i, j)| 0.6f64.powi((i as i32 - j as i32).abs()))
}

pub fn source_means() -> [Array1<f64>; 3] {
    [
        Array1::zeros(5),
        Array1::ones(5),
        Array1::from(vec![0.0, 2.0, 2.0, 0.0, 0.0]),
    ]
}

pub fn target_means() -> [Array1<f64>; 2] {
    [Array1::from_elem(10, 0.5), Array1::from_elem(10, 2.0)]
}

/// Draws `count` points from one Gaussian with the given mean and Cholesky factor.
fn gaussian_draws(rng: &mut ChaCha8Rng, mean: &Array1<f64>, chol: &Array2<f64>, count: usize) -> Array2<f64> {
    let d = mean.len();
    let mut out = Array2::zeros((count, d));
    for r in 0..count {
        let z: Array1<f64> = (0..d).map(|_| normal(rng)).collect();
        out.row_mut(r).assign(&(mean + &chol.dot(&z)));
    }
    out
}

/// Samples from the first source mixture component only.
pub fn sample_source_component(component: usize, count: usize, seed: u64) -> Result<Array2<f64>> {
    let means = source_means();
    let mean = means
        .get(component)
        .ok_or_else(|| GwError::InvalidConfig(format!("source component {component} out of range")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(gaussian_draws(&mut rng, mean, &cholesky(&source_covariance()), count))
}

/// Equal-weight mixtures: three components in R^5 with AR(1) covariance, two
/// in R^10 with identity covariance.
pub fn gen_gaussian_mixture(n: usize, seed: u64) -> Result<(PointCloud, PointCloud)> {
    require_at_least(n, 2, "gaussian mixture")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chol_s = cholesky(&source_covariance());
    let chol_t = Array2::eye(10);
    let sm = source_means();
    let tm = target_means();
    let mut src = Array2::zeros((n, 5));
    for i in 0..n {
        let c = rng.random_range(0..sm.len());
        src.row_mut(i)
            .assign(&gaussian_draws(&mut rng, &sm[c], &chol_s, 1).row(0));
    }
    let mut tgt = Array2::zeros((n, 10));
    for i in 0..n {
        let c = rng.random_range(0..tm.len());
        tgt.row_mut(i)
            .assign(&gaussian_draws(&mut rng, &tm[c], &chol_t, 1).row(0));
    }
    Ok((PointCloud::new(src)?, PointCloud::new(tgt)?))
}

const SPIRAL_OFFSET: f64 = 10.0;

/// `(-3 pi sqrt(r) cos(3 pi sqrt(r)) + u, 3 pi sqrt(r) sin(3 pi sqrt(r)) + u') - (10, 10)`.
pub fn spiral_source_point(r: f64, u: f64, u2: f64) -> [f64; 2] {
    let t = 3.0 * PI * r.sqrt();
    [-t * t.cos() + u - SPIRAL_OFFSET, t * t.sin() + u2 - SPIRAL_OFFSET]
}

/// The source point rotated by `pi/4` and shifted by `(20, 20)`.
pub fn spiral_target_point(r: f64, u: f64, u2: f64) -> [f64; 2] {
    let [x, y] = spiral_source_point(r, u, u2);
    let (s, c) = (PI / 4.0).sin_cos();
    [c * x - s * y + 2.0 * SPIRAL_OFFSET, s * x + c * y + 2.0 * SPIRAL_OFFSET]
}

/// Two noisy spirals; each point uses its own `r, u, u'` drawn from `U(0, 1)`.
pub fn gen_spiral(n: usize, seed: u64) -> Result<(PointCloud, PointCloud)> {
    require_at_least(n, 2, "spiral")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |f: fn(f64, f64, f64) -> [f64; 2]| {
        let mut out = Array2::zeros((n, 2));
        for i in 0..n {
            let (r, u, u2): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            let p = f(r, u, u2);
            out[[i, 0]] = p[0];
            out[[i, 1]] = p[1];
        }
        out
    };
    let src = draw(spiral_source_point);
    let tgt = draw(spiral_target_point);
    Ok((PointCloud::new(src)?, PointCloud::new(tgt)?))
}

/// Pairwise Euclidean distances.
pub fn euclidean_relation(cloud: &PointCloud) -> RelationMatrix {
    let p = cloud.points();
    let n = p.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = p
                .row(i)
                .iter()
                .zip(p.row(j).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    RelationMatrix::new(d).expect("distances are symmetric and finite")
}

/// Isotropic Gaussian density around the cloud's centroid, normalized to a
/// probability vector.
pub fn gaussian_weights(cloud: &PointCloud, bandwidth: f64) -> Result<Distribution> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(GwError::InvalidConfig(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    let p = cloud.points();
    let center = p.mean_axis(ndarray::Axis(0)).expect("non-empty cloud");
    let log_w: Vec<f64> = p
        .rows()
        .into_iter()
        .map(|row| -(&row - &center).mapv(|x| x * x).sum() / (2.0 * bandwidth * bandwidth))
        .collect();
    let mx = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Distribution::normalized(Array1::from_iter(log_w.iter().map(|&l| (l - mx).exp())))
}
