//! Pairwise distance matrices over a collection of relation spaces, and the
//! similarity matrix `exp(-D / gamma)` built from them.

use log::warn;
use ndarray::Array2;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use spargw::{Distribution, MassMode, Problem, RelationMatrix};

use crate::config::MethodConfig;
use crate::error::{BenchError, Result};
use crate::experiment::{solve_with_retries, Instance};

/// One member of a collection: its relation, weights and optional node
/// features (one row per node).
#[derive(Clone, Debug, PartialEq)]
pub struct Item {
    pub relation: RelationMatrix,
    pub weights: Distribution,
    pub features: Option<Array2<f64>>,
}

impl Item {
    pub fn new(relation: RelationMatrix, weights: Distribution) -> Self {
        Self {
            relation,
            weights,
            features: None,
        }
    }

    pub fn uniform(relation: RelationMatrix) -> Result<Self> {
        let n = relation.size();
        Ok(Self::new(relation, Distribution::uniform(n)?))
    }

    /// Content hash; orders each pair so results do not depend on input order.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.relation.size() as u64).to_le_bytes());
        for x in self.relation.entries().iter().chain(self.weights.weights().iter()) {
            h.update(x.to_bits().to_le_bytes());
        }
        if let Some(f) = &self.features {
            h.update((f.ncols() as u64).to_le_bytes());
            for x in f.iter() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

fn feature_cost(x: &Array2<f64>, y: &Array2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != y.ncols() {
        return Err(BenchError::Validation("node features have different widths".into()));
    }
    Ok(Array2::from_shape_fn((x.nrows(), y.nrows()), |(i, j)| {
        x.row(i)
            .iter()
            .zip(y.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }))
}

/// The instance comparing `x` to `y` under the method's mass convention.
pub fn pair_instance(x: &Item, y: &Item, mc: &MethodConfig) -> Result<Instance> {
    let view = |d: &Distribution| {
        if mc.method.is_unbalanced() {
            d.to_unbalanced()
        } else if d.mode() == MassMode::Unbalanced {
            Distribution::normalized(d.weights().clone()).expect("positive mass")
        } else {
            d.clone()
        }
    };
    let problem = Problem::new(
        view(&x.weights),
        view(&y.weights),
        x.relation.clone(),
        y.relation.clone(),
    )?;
    let features = match (&x.features, &y.features) {
        (Some(fx), Some(fy)) => Some(feature_cost(fx, fy)?),
        _ => None,
    };
    Ok(Instance { problem, features })
}

/// Seed for a pair, symmetric in the two fingerprints.
pub fn pair_seed(seed: u64, fx: &[u8; 32], fy: &[u8; 32]) -> u64 {
    let (lo, hi) = if fx <= fy { (fx, fy) } else { (fy, fx) };
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(lo);
    h.update(hi);
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Distance between two items, oriented by fingerprint.
pub fn pair_distance(x: &Item, y: &Item, mc: &MethodConfig, seed: u64) -> Result<f64> {
    let (fx, fy) = (x.fingerprint(), y.fingerprint());
    let (first, second) = if fx <= fy { (x, y) } else { (y, x) };
    let instance = pair_instance(first, second, mc)?;
    let (result, _) = solve_with_retries(&instance, mc, pair_seed(seed, &fx, &fy));
    Ok(result?.distance)
}

/// Symmetric `N x N` matrix with zero diagonal. Each `i < j` entry is solved
/// once, in parallel; failed pairs are NaN.
pub fn pairwise_distances(items: &[Item], mc: &MethodConfig, seed: u64) -> Result<Array2<f64>> {
    mc.validate()?;
    if items.len() < 2 {
        return Err(BenchError::Config("pairwise distances need at least two items".into()));
    }
    let n = items.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| match pair_distance(&items[i], &items[j], mc, seed) {
            Ok(d) => d,
            Err(e) => {
                warn!("pair ({i}, {j}) failed: {e}");
                f64::NAN
            }
        })
        .collect();
    let mut d = Array2::zeros((n, n));
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        d[[i, j]] = v;
        d[[j, i]] = v;
    }
    Ok(d)
}

/// `S_ij = exp(-D_ij / gamma)`; NaN distances give similarity 0.
pub fn similarity_matrix(d: &Array2<f64>, gamma: f64) -> Result<Array2<f64>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(BenchError::InvalidGamma(gamma));
    }
    let nan = d.iter().filter(|x| x.is_nan()).count();
    if nan > 0 {
        warn!("{nan} undefined distances mapped to zero similarity");
    }
    Ok(d.mapv(|x| if x.is_nan() { 0.0 } else { (-x / gamma).exp() }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn similarity_examples() {
        let z = Array2::zeros((3, 3));
        assert!(similarity_matrix(&z, 2.0).unwrap().iter().all(|&x| x == 1.0));
        let d = array![[0.0, 0.5], [0.5, f64::NAN]];
        let s = similarity_matrix(&d, 0.5).unwrap();
        assert!((s[[0, 1]] - (-1f64).exp()).abs() < 1e-15);
        assert!((s[[0, 1]] - 0.367879).abs() < 1e-6);
        assert_eq!(s[[1, 1]], 0.0);
        let m = similarity_matrix(&array![[1.0, 2.0]], 1.0).unwrap();
        assert!(m[[0, 0]] > m[[0, 1]]);
        for g in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(similarity_matrix(&z, g), Err(BenchError::InvalidGamma(_))));
        }
    }

    #[test]
    fn pair_seed_is_symmetric() {
        let a = [1u8; 32];
        let b = [2u8; 32];
        assert_eq!(pair_seed(7, &a, &b), pair_seed(7, &b, &a));
        assert_ne!(pair_seed(7, &a, &b), pair_seed(8, &a, &b));
    }
}
