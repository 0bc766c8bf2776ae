//! Tensor-matrix products `C(T)_ij = sum_{i',j'} L(Cx[i,i'], Cy[j,j']) T[i',j']`.
//!
//! Three routes produce the same matrix: the quadruple sum (`O(m^2 n^2)`),
//! the expansion of a decomposable cost (`O(mn(m+n))`), and the sampled-support
//! sum over a sparse plan (`O(|S|^2)`, entries evaluated on demand).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{GwError, Result};
use crate::sparse::SparseMatrix;
use crate::types::{kl_scalar, CostKind, GroundCost, RelationMatrix, Storage};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Naive,
    Decomposable,
    Sparse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrixResult {
    pub values: Storage,
    pub provenance: Provenance,
}

impl CostMatrixResult {
    pub fn into_dense(self) -> Array2<f64> {
        match self.values {
            Storage::Dense(d) => d,
            Storage::Sparse(s) => s.to_dense(),
        }
    }

    /// The sparse values; `None` for dense results.
    pub fn into_sparse(self) -> Option<SparseMatrix> {
        match self.values {
            Storage::Sparse(s) => Some(s),
            Storage::Dense(_) => None,
        }
    }
}

// Monomorphizes the hot loops for the built-in costs.
macro_rules! with_cost_fn {
    ($cost:expr, |$f:ident| $body:expr) => {
        match $cost.kind() {
            CostKind::L1 => {
                let $f = |a: f64, b: f64| (a - b).abs();
                $body
            }
            CostKind::L2 => {
                let $f = |a: f64, b: f64| (a - b) * (a - b);
                $body
            }
            CostKind::Kl => {
                let $f = |a: f64, b: f64| kl_scalar(a, b);
                $body
            }
            CostKind::Custom(g) => {
                let g = g.clone();
                let $f = move |a: f64, b: f64| g(a, b);
                $body
            }
        }
    };
}

fn check_dense_shapes(cx: &RelationMatrix, cy: &RelationMatrix, t: &ArrayView2<f64>) -> Result<()> {
    let (m, n) = t.dim();
    if m != cx.size() {
        return Err(GwError::DimensionMismatch {
            what: "plan rows vs source relation",
            expected: cx.size(),
            found: m,
        });
    }
    if n != cy.size() {
        return Err(GwError::DimensionMismatch {
            what: "plan columns vs target relation",
            expected: cy.size(),
            found: n,
        });
    }
    Ok(())
}

fn check_domains(cx: &RelationMatrix, cy: &RelationMatrix, cost: &GroundCost) -> Result<()> {
    cost.check_domain(cx)?;
    cost.check_domain(cy)
}

/// Quadruple-sum contraction against a dense plan.
pub fn contract_naive(
    cx: &RelationMatrix,
    cy: &RelationMatrix,
    cost: &GroundCost,
    t: ArrayView2<f64>,
) -> Result<CostMatrixResult> {
    check_dense_shapes(cx, cy, &t)?;
    check_domains(cx, cy, cost)?;
    let t = t.as_standard_layout();
    let t = t.as_slice().expect("standard layout");
    let values = with_cost_fn!(cost, |f| naive_kernel(cx, cy, t, f));
    Ok(CostMatrixResult {
        values: Storage::Dense(values),
        provenance: Provenance::Naive,
    })
}

fn naive_kernel<F>(cx: &RelationMatrix, cy: &RelationMatrix, t: &[f64], f: F) -> Array2<f64>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let m = cx.size();
    let n = cy.size();
    let mut out = vec![0.0; m * n];
    out.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, out_row)| {
        let cx_row = cx.row(i);
        for (j, slot) in out_row.iter_mut().enumerate() {
            let cy_row = cy.row(j);
            let mut acc = 0.0;
            for (ip, &x) in cx_row.iter().enumerate() {
                let t_row = &t[ip * n..(ip + 1) * n];
                let mut s = 0.0;
                for (&y, &w) in cy_row.iter().zip(t_row) {
                    s += f(x, y) * w;
                }
                acc += s;
            }
            *slot = acc;
        }
    });
    Array2::from_shape_vec((m, n), out).expect("shape")
}

/// Contraction through `L(a,b) = f1(a) + f2(b) - h1(a) h2(b)`:
/// `C = f1(Cx) p 1^T + 1 (f2(Cy) q)^T - h1(Cx) T h2(Cy)^T` with `p = T1`, `q = T^T 1`.
pub fn contract_decomposable(
    cx: &RelationMatrix,
    cy: &RelationMatrix,
    cost: &GroundCost,
    t: ArrayView2<f64>,
) -> Result<CostMatrixResult> {
    let d = cost.decomposition().ok_or(GwError::MissingDecomposition)?;
    check_dense_shapes(cx, cy, &t)?;
    check_domains(cx, cy, cost)?;
    let p = t.sum_axis(Axis(1));
    let q = t.sum_axis(Axis(0));
    let row_term = cx.map(|x| (d.f1)(x)).dot(&p);
    let col_term = cy.map(|y| (d.f2)(y)).dot(&q);
    let cross = cx.map(|x| (d.h1)(x)).dot(&t).dot(&cy.map(|y| (d.h2)(y)).t());
    let mut out = cross;
    for ((i, j), v) in out.indexed_iter_mut() {
        *v = row_term[i] + col_term[j] - *v;
    }
    Ok(CostMatrixResult {
        values: Storage::Dense(out),
        provenance: Provenance::Decomposable,
    })
}

/// Dense contraction by the fastest route the cost allows.
pub fn contract_dense(
    cx: &RelationMatrix,
    cy: &RelationMatrix,
    cost: &GroundCost,
    t: ArrayView2<f64>,
) -> Result<CostMatrixResult> {
    if cost.decomposition().is_some() {
        contract_decomposable(cx, cy, cost, t)
    } else {
        contract_naive(cx, cy, cost, t)
    }
}

/// Contraction against a rank-one plan `T = x y^T`.
///
/// Decomposable costs need only two matrix-vector products per side; other
/// costs pay the full quadruple sum.
pub fn contract_rank_one(
    cx: &RelationMatrix,
    cy: &RelationMatrix,
    cost: &GroundCost,
    x: &Array1<f64>,
    y: &Array1<f64>,
) -> Result<CostMatrixResult> {
    let Some(d) = cost.decomposition() else {
        let t = outer(x, y);
        return contract_naive(cx, cy, cost, t.view());
    };
    if x.len() != cx.size() || y.len() != cy.size() {
        return Err(GwError::DimensionMismatch {
            what: "rank-one factors",
            expected: cx.size(),
            found: x.len(),
        });
    }
    check_domains(cx, cy, cost)?;
    let (sx, sy) = (x.sum(), y.sum());
    let row_term = cx.map(|v| (d.f1)(v)).dot(x) * sy;
    let col_term = cy.map(|v| (d.f2)(v)).dot(y) * sx;
    let hx = cx.map(|v| (d.h1)(v)).dot(x);
    let hy = cy.map(|v| (d.h2)(v)).dot(y);
    let out = Array2::from_shape_fn((x.len(), y.len()), |(i, j)| row_term[i] + col_term[j] - hx[i] * hy[j]);
    Ok(CostMatrixResult {
        values: Storage::Dense(out),
        provenance: Provenance::Decomposable,
    })
}

pub(crate) fn outer(x: &Array1<f64>, y: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((x.len(), y.len()), |(i, j)| x[i] * y[j])
}

/// Contraction restricted to the plan's pattern `S`:
/// for `(i,j)` in `S`, `sum_{(i',j') in S} L(Cx[i,i'], Cy[j,j']) T[i',j']`.
pub fn contract_sparse(
    cx: &RelationMatrix,
    cy: &RelationMatrix,
    cost: &GroundCost,
    t: &SparseMatrix,
) -> Result<CostMatrixResult> {
    let (m, n) = t.shape();
    if m > cx.size() || n > cy.size() || m < cx.size() || n < cy.size() {
        return Err(GwError::IndexOutOfRange {
            row: m.saturating_sub(1),
            col: n.saturating_sub(1),
            rows: cx.size(),
            cols: cy.size(),
        });
    }
    check_domains(cx, cy, cost)?;
    let values = with_cost_fn!(cost, |f| sparse_kernel(cx, cy, t, f));
    let out = SparseMatrix::new(t.pattern().clone(), values)?;
    Ok(CostMatrixResult {
        values: Storage::Sparse(out),
        provenance: Provenance::Sparse,
    })
}

fn sparse_kernel<F>(cx: &RelationMatrix, cy: &RelationMatrix, t: &SparseMatrix, f: F) -> Vec<f64>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let p = t.pattern();
    let tv = t.values();
    let cols = p.col_idx();
    // rows of S that hold at least one cell, with their value ranges
    let occupied: Vec<(usize, std::ops::Range<usize>)> = (0..p.rows())
        .map(|i| (i, p.row_range(i)))
        .filter(|(_, r)| !r.is_empty())
        .collect();
    let rows = p.row_idx();
    (0..p.nnz())
        .into_par_iter()
        .map(|k| {
            let cx_row = cx.row(rows[k]);
            let cy_row = cy.row(cols[k]);
            let mut acc = 0.0;
            for (ip, range) in &occupied {
                let x = cx_row[*ip];
                let mut s = 0.0;
                for kk in range.clone() {
                    s += f(x, cy_row[cols[kk]]) * tv[kk];
                }
                acc += s;
            }
            acc
        })
        .collect()
}

/// Frobenius inner product `<C, T>` of two same-shaped dense matrices.
pub fn frobenius(c: &Array2<f64>, t: &Array2<f64>) -> f64 {
    c.iter().zip(t.iter()).map(|(a, b)| a * b).sum()
}
