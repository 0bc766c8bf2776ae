//! Domain types shared by every solver: marginals, relation matrices, ground
//! costs, and coupling / kernel storage.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{GwError, Result};
use crate::sparse::SparseMatrix;

/// Tolerance on the total mass of a balanced distribution.
pub const BALANCED_SUM_TOL: f64 = 1e-12;
/// Absolute tolerance for relation-matrix symmetry.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassMode {
    /// Weights on the probability simplex.
    Balanced,
    /// Arbitrary positive total mass.
    Unbalanced,
}

/// Marginal weights on the atoms of one space.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    weights: Array1<f64>,
    mode: MassMode,
}

impl Distribution {
    pub fn new(weights: Array1<f64>, mode: MassMode) -> Result<Self> {
        if weights.is_empty() {
            return Err(GwError::EmptyDistribution);
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(GwError::NonFiniteEntry { row: index, col: 0 });
            }
            if w < 0.0 {
                return Err(GwError::NegativeWeight { index });
            }
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(GwError::EmptyDistribution);
        }
        if mode == MassMode::Balanced {
            let sum = weights.sum();
            if (sum - 1.0).abs() > BALANCED_SUM_TOL {
                return Err(GwError::NotNormalized { sum });
            }
        }
        Ok(Self { weights, mode })
    }

    pub fn balanced(weights: impl Into<Array1<f64>>) -> Result<Self> {
        Self::new(weights.into(), MassMode::Balanced)
    }

    pub fn unbalanced(weights: impl Into<Array1<f64>>) -> Result<Self> {
        Self::new(weights.into(), MassMode::Unbalanced)
    }

    /// Rescales non-negative weights onto the simplex.
    pub fn normalized(weights: impl Into<Array1<f64>>) -> Result<Self> {
        let w: Array1<f64> = weights.into();
        let sum = w.sum();
        if !(sum > 0.0) {
            return Err(GwError::EmptyDistribution);
        }
        Self::balanced(w / sum)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(GwError::EmptyDistribution);
        }
        Self::balanced(Array1::from_elem(n, 1.0 / n as f64))
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn as_slice(&self) -> &[f64] {
        self.weights.as_slice().expect("contiguous weights")
    }

    pub fn mode(&self) -> MassMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Total mass `m(a)`.
    pub fn mass(&self) -> f64 {
        self.weights.sum()
    }

    /// Same weights reinterpreted as an unbalanced measure.
    pub fn to_unbalanced(&self) -> Self {
        Self {
            weights: self.weights.clone(),
            mode: MassMode::Unbalanced,
        }
    }
}

/// Symmetric intra-space structure matrix (distances, adjacency, kernels).
#[derive(Clone, Debug, PartialEq)]
pub struct RelationMatrix {
    entries: Array2<f64>,
}

impl RelationMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (rows, cols) = entries.dim();
        if rows != cols {
            return Err(GwError::DimensionMismatch {
                what: "relation matrix columns",
                expected: rows,
                found: cols,
            });
        }
        for ((row, col), &x) in entries.indexed_iter() {
            if !x.is_finite() {
                return Err(GwError::NonFiniteEntry { row, col });
            }
        }
        for i in 0..rows {
            for j in (i + 1)..rows {
                if (entries[[i, j]] - entries[[j, i]]).abs() > SYMMETRY_TOL {
                    return Err(GwError::NonSymmetricRelation { row: i, col: j });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// Row `i` as a contiguous slice.
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.size();
        &self.entries.as_slice().expect("standard layout")[i * n..(i + 1) * n]
    }

    /// Entrywise image under `f`. Symmetry is preserved.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array2<f64> {
        self.entries.mapv(f)
    }

    /// Reorders atoms: entry `(i, j)` of the result is `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.size();
        if perm.len() != n {
            return Err(GwError::DimensionMismatch {
                what: "permutation",
                expected: n,
                found: perm.len(),
            });
        }
        let out = Array2::from_shape_fn((n, n), |(i, j)| self.entries[[perm[i], perm[j]]]);
        Ok(Self { entries: out })
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type BinaryFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum CostKind {
    L1,
    L2,
    /// Generalized Kullback-Leibler `a log(a/b) - a + b`.
    Kl,
    Custom(BinaryFn),
}

impl fmt::Debug for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostKind::L1 => f.write_str("L1"),
            CostKind::L2 => f.write_str("L2"),
            CostKind::Kl => f.write_str("Kl"),
            CostKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Factorization `L(a, b) = f1(a) + f2(b) - h1(a) h2(b)`.
#[derive(Clone)]
pub struct Decomposition {
    pub f1: ScalarFn,
    pub f2: ScalarFn,
    pub h1: ScalarFn,
    pub h2: ScalarFn,
}

impl Decomposition {
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        (self.f1)(a) + (self.f2)(b) - (self.h1)(a) * (self.h2)(b)
    }
}

impl fmt::Debug for Decomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Decomposition(..)")
    }
}

/// Scalar loss comparing one relation entry from each space.
#[derive(Clone, Debug)]
pub struct GroundCost {
    kind: CostKind,
    decomposition: Option<Decomposition>,
}

impl GroundCost {
    pub fn l1() -> Self {
        Self {
            kind: CostKind::L1,
            decomposition: None,
        }
    }

    pub fn l2() -> Self {
        Self {
            kind: CostKind::L2,
            decomposition: Some(Decomposition {
                f1: Arc::new(|a| a * a),
                f2: Arc::new(|b| b * b),
                h1: Arc::new(|a| a),
                h2: Arc::new(|b| 2.0 * b),
            }),
        }
    }

    pub fn kl() -> Self {
        Self {
            kind: CostKind::Kl,
            decomposition: Some(Decomposition {
                f1: Arc::new(|a| a * a.ln() - a),
                f2: Arc::new(|b| b),
                h1: Arc::new(|a| a),
                h2: Arc::new(|b| b.ln()),
            }),
        }
    }

    /// User-supplied cost without a decomposition.
    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind: CostKind::Custom(Arc::new(f)),
            decomposition: None,
        }
    }

    /// User-supplied cost with a declared decomposition. The identity is
    /// trusted, not checked.
    pub fn custom_decomposable(
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        decomposition: Decomposition,
    ) -> Self {
        Self {
            kind: CostKind::Custom(Arc::new(f)),
            decomposition: Some(decomposition),
        }
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn decomposition(&self) -> Option<&Decomposition> {
        self.decomposition.as_ref()
    }

    /// Drops the decomposition so solvers fall back to the naive contraction.
    pub fn without_decomposition(&self) -> Self {
        Self {
            kind: self.kind.clone(),
            decomposition: None,
        }
    }

    /// Evaluates the cost, rejecting arguments outside its domain.
    pub fn eval(&self, a: f64, b: f64) -> Result<f64> {
        if let CostKind::Kl = self.kind {
            if !(a > 0.0 && b > 0.0) {
                return Err(GwError::DomainError { a, b });
            }
        }
        let v = self.eval_unchecked(a, b);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(GwError::DomainError { a, b })
        }
    }

    #[inline]
    pub fn eval_unchecked(&self, a: f64, b: f64) -> f64 {
        match &self.kind {
            CostKind::L1 => (a - b).abs(),
            CostKind::L2 => (a - b) * (a - b),
            CostKind::Kl => kl_scalar(a, b),
            CostKind::Custom(f) => f(a, b),
        }
    }

    /// Confirms every entry of `rel` lies in the cost's domain when paired
    /// with the other space.
    pub fn check_domain(&self, rel: &RelationMatrix) -> Result<()> {
        if let CostKind::Kl = self.kind {
            if let Some(&x) = rel.entries().iter().find(|&&x| !(x > 0.0)) {
                return Err(GwError::DomainError { a: x, b: x });
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn kl_scalar(a: f64, b: f64) -> f64 {
    a * (a / b).ln() - a + b
}

/// `eval_cost(L, a, b)`.
pub fn eval_cost(cost: &GroundCost, a: f64, b: f64) -> Result<f64> {
    cost.eval(a, b)
}

/// Dense or sparse non-negative matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum Storage {
    Dense(Array2<f64>),
    Sparse(SparseMatrix),
}

impl Storage {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Storage::Dense(d) => d.dim(),
            Storage::Sparse(s) => s.shape(),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Storage::Dense(d) => d.clone(),
            Storage::Sparse(s) => s.to_dense(),
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        match self {
            Storage::Dense(d) => d.rows().into_iter().map(|r| r.sum()).collect(),
            Storage::Sparse(s) => s.row_sums(),
        }
    }

    pub fn col_sums(&self) -> Vec<f64> {
        match self {
            Storage::Dense(d) => d.columns().into_iter().map(|c| c.sum()).collect(),
            Storage::Sparse(s) => s.col_sums(),
        }
    }

    pub fn sum(&self) -> f64 {
        match self {
            Storage::Dense(d) => d.sum(),
            Storage::Sparse(s) => s.sum(),
        }
    }

    pub fn count_nonzero(&self) -> usize {
        match self {
            Storage::Dense(d) => d.iter().filter(|&&v| v != 0.0).count(),
            Storage::Sparse(s) => s.count_nonzero(),
        }
    }

    fn check_nonnegative(&self) -> Result<()> {
        let bad = match self {
            Storage::Dense(d) => d
                .indexed_iter()
                .find(|(_, &v)| !(v >= 0.0) || !v.is_finite())
                .map(|(ij, _)| ij),
            Storage::Sparse(s) => s
                .pattern()
                .iter()
                .find(|&(k, _, _)| !(s.values()[k] >= 0.0) || !s.values()[k].is_finite())
                .map(|(_, i, j)| (i, j)),
        };
        match bad {
            Some((row, col)) => Err(GwError::NonFiniteEntry { row, col }),
            None => Ok(()),
        }
    }
}

/// Transport plan `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingPlan(Storage);

impl CouplingPlan {
    pub fn new(storage: Storage) -> Result<Self> {
        storage.check_nonnegative()?;
        Ok(Self(storage))
    }

    pub fn dense(m: Array2<f64>) -> Result<Self> {
        Self::new(Storage::Dense(m))
    }

    pub fn sparse(m: SparseMatrix) -> Result<Self> {
        Self::new(Storage::Sparse(m))
    }

    pub(crate) fn from_storage_unchecked(storage: Storage) -> Self {
        Self(storage)
    }

    pub fn storage(&self) -> &Storage {
        &self.0
    }

    pub fn into_storage(self) -> Storage {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.0.to_dense()
    }

    /// Total mass `m(T)`.
    pub fn mass(&self) -> f64 {
        self.0.sum()
    }

    pub fn count_nonzero(&self) -> usize {
        self.0.count_nonzero()
    }

    /// `max(|T 1 - a|_inf, |T^T 1 - b|_inf)`.
    pub fn marginal_residual(&self, a: &Distribution, b: &Distribution) -> f64 {
        let rows = self.0.row_sums();
        let cols = self.0.col_sums();
        let r = rows
            .iter()
            .zip(a.weights())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let c = cols
            .iter()
            .zip(b.weights())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        r.max(c)
    }
}

/// Sinkhorn kernel `K`; same storage alternatives as [`CouplingPlan`].
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix(Storage);

impl KernelMatrix {
    pub fn new(storage: Storage) -> Result<Self> {
        storage.check_nonnegative()?;
        Ok(Self(storage))
    }

    pub fn dense(m: Array2<f64>) -> Result<Self> {
        Self::new(Storage::Dense(m))
    }

    pub fn sparse(m: SparseMatrix) -> Result<Self> {
        Self::new(Storage::Sparse(m))
    }

    pub(crate) fn from_storage_unchecked(storage: Storage) -> Self {
        Self(storage)
    }

    pub fn storage(&self) -> &Storage {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }
}

/// A validated pair of measured relation spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub a: Distribution,
    pub b: Distribution,
    pub cx: RelationMatrix,
    pub cy: RelationMatrix,
}

impl Problem {
    /// Same as [`validate_problem`].
    pub fn new(a: Distribution, b: Distribution, cx: RelationMatrix, cy: RelationMatrix) -> Result<Self> {
        validate_problem(a, b, cx, cy)
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn is_balanced(&self) -> bool {
        self.a.mode() == MassMode::Balanced
    }
}

/// Checks dimensions and mode consistency; returns the instance unchanged.
pub fn validate_problem(a: Distribution, b: Distribution, cx: RelationMatrix, cy: RelationMatrix) -> Result<Problem> {
    if a.len() != cx.size() {
        return Err(GwError::DimensionMismatch {
            what: "source weights vs relation",
            expected: cx.size(),
            found: a.len(),
        });
    }
    if b.len() != cy.size() {
        return Err(GwError::DimensionMismatch {
            what: "target weights vs relation",
            expected: cy.size(),
            found: b.len(),
        });
    }
    if a.mode() != b.mode() {
        return Err(GwError::ModeMismatch);
    }
    Ok(Problem { a, b, cx, cy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn sym3() -> RelationMatrix {
        RelationMatrix::new(array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]]).unwrap()
    }

    #[test]
    fn accepts_well_formed_problem() {
        let a = Distribution::uniform(3).unwrap();
        let p = validate_problem(a.clone(), a.clone(), sym3(), sym3()).unwrap();
        assert_eq!(p.a, a);
        assert_eq!(p.cx, sym3());
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let a = Distribution::uniform(3).unwrap();
        let cx = RelationMatrix::new(Array2::zeros((4, 4))).unwrap();
        let err = validate_problem(a.clone(), a, cx, sym3()).unwrap_err();
        assert!(matches!(err, GwError::DimensionMismatch { .. }));
    }

    #[test]
    fn rejects_asymmetric_relation() {
        let err = RelationMatrix::new(array![[0.0, 1.0], [2.0, 0.0]]).unwrap_err();
        assert_eq!(err, GwError::NonSymmetricRelation { row: 0, col: 1 });
    }

    #[test]
    fn rejects_mixed_modes() {
        let a = Distribution::uniform(3).unwrap();
        let b = Distribution::unbalanced(array![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            validate_problem(a, b, sym3(), sym3()).unwrap_err(),
            GwError::ModeMismatch
        );
    }

    #[test]
    fn distribution_errors() {
        assert_eq!(
            Distribution::balanced(array![0.5, -0.1, 0.6]).unwrap_err(),
            GwError::NegativeWeight { index: 1 }
        );
        assert_eq!(
            Distribution::unbalanced(array![0.0, 0.0]).unwrap_err(),
            GwError::EmptyDistribution
        );
        assert!(Distribution::unbalanced(array![3.0, 4.0]).is_ok());
        assert!(matches!(
            Distribution::balanced(array![0.5, 0.5 + 2e-12]).unwrap_err(),
            GwError::NotNormalized { .. }
        ));
        assert!(Distribution::balanced(array![0.5, 0.5 + 5e-13]).is_ok());
    }

    #[test]
    fn cost_values() {
        assert_eq!(eval_cost(&GroundCost::l2(), 3.0, 1.0).unwrap(), 4.0);
        assert_eq!(eval_cost(&GroundCost::l1(), 3.0, 1.0).unwrap(), 2.0);
        assert_eq!(eval_cost(&GroundCost::kl(), 1.0, 1.0).unwrap(), 0.0);
        assert!(matches!(
            eval_cost(&GroundCost::kl(), 0.0, 1.0),
            Err(GwError::DomainError { .. })
        ));
        let c = GroundCost::custom(|a, b| (a - b).powi(4));
        assert_eq!(eval_cost(&c, 2.0, 0.0).unwrap(), 16.0);
        assert!(c.decomposition().is_none());
    }

    #[test]
    fn kl_domain_check_on_relations() {
        assert!(GroundCost::kl().check_domain(&sym3()).is_err());
        let pos = RelationMatrix::new(array![[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(GroundCost::kl().check_domain(&pos).is_ok());
        assert!(GroundCost::l2().check_domain(&sym3()).is_ok());
    }

    #[test]
    fn decompositions_hold_on_random_grid() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for cost in [GroundCost::l2(), GroundCost::kl()] {
            let d = cost.decomposition().unwrap();
            for _ in 0..10_000 {
                let a: f64 = rng.random_range(1e-3..10.0);
                let b: f64 = rng.random_range(1e-3..10.0);
                let direct = cost.eval(a, b).unwrap();
                assert!((direct - d.eval(a, b)).abs() <= 1e-10 * (1.0 + direct.abs()));
            }
        }
    }

    proptest! {
        #[test]
        fn costs_symmetric_and_zero_on_diagonal(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            for cost in [GroundCost::l1(), GroundCost::l2()] {
                prop_assert_eq!(cost.eval(a, b).unwrap(), cost.eval(b, a).unwrap());
                prop_assert_eq!(cost.eval(a, a).unwrap(), 0.0);
            }
            let x = a.abs() + 1e-3;
            prop_assert_eq!(GroundCost::kl().eval(x, x).unwrap(), 0.0);
        }

        #[test]
        fn balanced_sum_tolerance(delta in -1e-9f64..1e-9) {
            let r = Distribution::balanced(array![0.25, 0.75 + delta]);
            prop_assert_eq!(r.is_ok(), delta.abs() <= BALANCED_SUM_TOL);
        }
    }
}
