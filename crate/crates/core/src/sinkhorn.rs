//! Balanced and unbalanced Sinkhorn scaling over dense or sparse kernels.
//!
//! The iteration count is a fixed budget. Products with a sparse kernel touch
//! only stored cells, so one round costs `O(nnz(K))`.

use ndarray::{Array1, ArrayView1};

use crate::error::{Axis, GwError, Result};
use crate::types::{CouplingPlan, Distribution, KernelMatrix, Storage};

/// Lower bound applied to `Kv` and `K^T u` before dividing.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq)]
pub struct SinkhornOptions {
    /// Number of `(u, v)` update rounds.
    pub iterations: usize,
    /// Stop early once the marginal residual (balanced) or the largest
    /// relative change of the scalings (unbalanced) drops below this value.
    pub tolerance: Option<f64>,
    /// Accept kernels with an empty row or column that carries mass. The
    /// affected line of the plan stays zero instead of raising
    /// [`GwError::InfeasibleKernel`].
    pub allow_empty_lines: bool,
}

impl SinkhornOptions {
    pub fn new(iterations: usize) -> Self {
        Self {
            iterations,
            tolerance: None,
            allow_empty_lines: false,
        }
    }
}

/// Scaling vectors after the last round.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SinkhornOutput {
    pub plan: CouplingPlan,
    pub state: ScalingState,
}

pub fn sinkhorn_balanced(
    a: &Distribution,
    b: &Distribution,
    k: &KernelMatrix,
    iterations: usize,
) -> Result<CouplingPlan> {
    sinkhorn_balanced_with(a, b, k, &SinkhornOptions::new(iterations)).map(|o| o.plan)
}

pub fn sinkhorn_balanced_with(
    a: &Distribution,
    b: &Distribution,
    k: &KernelMatrix,
    opts: &SinkhornOptions,
) -> Result<SinkhornOutput> {
    scale(a.as_slice(), b.as_slice(), k.storage(), None, opts)
}

/// Unbalanced scaling with exponent `lambda / (lambda + eps)`.
pub fn sinkhorn_unbalanced(
    a: &Distribution,
    b: &Distribution,
    k: &KernelMatrix,
    lambda: f64,
    eps: f64,
    iterations: usize,
) -> Result<CouplingPlan> {
    sinkhorn_unbalanced_with(a, b, k, lambda, eps, &SinkhornOptions::new(iterations)).map(|o| o.plan)
}

pub fn sinkhorn_unbalanced_with(
    a: &Distribution,
    b: &Distribution,
    k: &KernelMatrix,
    lambda: f64,
    eps: f64,
    opts: &SinkhornOptions,
) -> Result<SinkhornOutput> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(GwError::InvalidRegularizer(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(GwError::InvalidRegularizer(format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    let exponent = lambda / (lambda + eps);
    scale(a.as_slice(), b.as_slice(), k.storage(), Some(exponent), opts)
}

fn matvec(k: &Storage, x: &[f64]) -> Vec<f64> {
    match k {
        Storage::Dense(d) => d.dot(&ArrayView1::from(x)).to_vec(),
        Storage::Sparse(s) => s.mul_vec(x),
    }
}

fn tmatvec(k: &Storage, y: &[f64]) -> Vec<f64> {
    match k {
        Storage::Dense(d) => d.t().dot(&ArrayView1::from(y)).to_vec(),
        Storage::Sparse(s) => s.tmul_vec(y),
    }
}

fn apply_scaling(k: &Storage, u: &[f64], v: &[f64]) -> Storage {
    match k {
        Storage::Dense(d) => {
            let mut out = d.clone();
            for ((i, j), x) in out.indexed_iter_mut() {
                *x = u[i] * *x * v[j];
            }
            Storage::Dense(out)
        }
        Storage::Sparse(s) => Storage::Sparse(s.scale(u, v)),
    }
}

fn check_support(k: &Storage, a: &[f64], b: &[f64]) -> Result<()> {
    let (row_max, col_max) = match k {
        Storage::Dense(d) => (
            d.rows()
                .into_iter()
                .map(|r| r.fold(0.0f64, |m, &x| m.max(x)))
                .collect::<Vec<_>>(),
            d.columns()
                .into_iter()
                .map(|c| c.fold(0.0f64, |m, &x| m.max(x)))
                .collect::<Vec<_>>(),
        ),
        Storage::Sparse(s) => {
            let mut rm = vec![0.0f64; a.len()];
            let mut cm = vec![0.0f64; b.len()];
            for (kk, i, j) in s.pattern().iter() {
                let x = s.values()[kk];
                rm[i] = rm[i].max(x);
                cm[j] = cm[j].max(x);
            }
            (rm, cm)
        }
    };
    if let Some(index) = (0..a.len()).find(|&i| a[i] > 0.0 && !(row_max[i] > 0.0)) {
        return Err(GwError::InfeasibleKernel { axis: Axis::Row, index });
    }
    if let Some(index) = (0..b.len()).find(|&j| b[j] > 0.0 && !(col_max[j] > 0.0)) {
        return Err(GwError::InfeasibleKernel {
            axis: Axis::Column,
            index,
        });
    }
    Ok(())
}

#[inline]
fn update(target: f64, denom: f64, exponent: Option<f64>) -> f64 {
    if target == 0.0 {
        return 0.0;
    }
    let q = target / denom.max(DENOMINATOR_FLOOR);
    match exponent {
        None => q,
        Some(p) => q.powf(p),
    }
}

fn scale(a: &[f64], b: &[f64], k: &Storage, exponent: Option<f64>, opts: &SinkhornOptions) -> Result<SinkhornOutput> {
    let (m, n) = k.shape();
    if a.len() != m {
        return Err(GwError::DimensionMismatch {
            what: "kernel rows vs source weights",
            expected: a.len(),
            found: m,
        });
    }
    if b.len() != n {
        return Err(GwError::DimensionMismatch {
            what: "kernel columns vs target weights",
            expected: b.len(),
            found: n,
        });
    }
    if !opts.allow_empty_lines {
        check_support(k, a, b)?;
    }
    let mut u = vec![1.0; m];
    let mut v = vec![1.0; n];
    let mut done = 0;
    for h in 0..opts.iterations {
        let kv = matvec(k, &v);
        let u_new: Vec<f64> = a.iter().zip(&kv).map(|(&ai, &d)| update(ai, d, exponent)).collect();
        if u_new.iter().any(|x| !x.is_finite()) {
            return Err(GwError::NumericalUnderflow { iteration: h });
        }
        let ktu = tmatvec(k, &u_new);
        let v_new: Vec<f64> = b.iter().zip(&ktu).map(|(&bj, &d)| update(bj, d, exponent)).collect();
        if v_new.iter().any(|x| !x.is_finite()) {
            return Err(GwError::NumericalUnderflow { iteration: h });
        }
        let change = match (opts.tolerance, exponent) {
            (Some(_), Some(_)) => relative_change(&u, &u_new).max(relative_change(&v, &v_new)),
            _ => 0.0,
        };
        u = u_new;
        v = v_new;
        done = h + 1;
        if let Some(tol) = opts.tolerance {
            let converged = match exponent {
                // column marginals are exact after the v-update
                None => {
                    let kv = matvec(k, &v);
                    (0..m).map(|i| (u[i] * kv[i] - a[i]).abs()).fold(0.0, f64::max) < tol
                }
                Some(_) => change < tol,
            };
            if converged {
                break;
            }
        }
    }
    let plan = CouplingPlan::from_storage_unchecked(apply_scaling(k, &u, &v));
    Ok(SinkhornOutput {
        plan,
        state: ScalingState { u, v, iterations: done },
    })
}

fn relative_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(&o, &x)| (x - o).abs() / o.abs().max(x.abs()).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Residual of the unbalanced fixed point on the source side:
/// `max_i |u_i^{(lambda+eps)/lambda} (K v)_i - a_i|`.
pub fn unbalanced_stationarity_residual(
    a: &Distribution,
    k: &KernelMatrix,
    state: &ScalingState,
    lambda: f64,
    eps: f64,
) -> f64 {
    let kv = Array1::from(matvec(k.storage(), &state.v));
    let power = (lambda + eps) / lambda;
    a.weights()
        .iter()
        .zip(&state.u)
        .zip(kv.iter())
        .map(|((&ai, &ui), &d)| (ui.powf(power) * d - ai).abs())
        .fold(0.0, f64::max)
}
