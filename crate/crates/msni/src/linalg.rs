//! Dense symmetric linear algebra: Cholesky factorization and guarded solves.
//!
//! Parameter dimensions here are small (tens, occasionally a few hundred), so
//! a plain `O(p^3)` Cholesky is the right tool. Every solve goes through a
//! ridge guard: if the factorization fails or the condition proxy exceeds
//! `COND_LIMIT`, `lambda * I` with `lambda = 1e-8 * trace(H) / p` is added
//! before retrying. The perturbation is far below the statistical noise of
//! the estimators that rely on it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Condition-number proxy above which the ridge guard kicks in.
pub const COND_LIMIT: f64 = 1e12;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky(a: ArrayView2<'_, f64>) -> Option<Array2<f64>> {
    let p = a.nrows();
    debug_assert_eq!(p, a.ncols());
    let mut l = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !s.is_finite() || s <= 0.0 {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Solve `L L^T x = b` given the lower factor `L`.
pub fn cholesky_solve(l: &Array2<f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let p = l.nrows();
    let mut y = b.to_owned();
    for i in 0..p {
        let mut s = y[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in (i + 1)..p {
            s -= l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Cheap condition proxy from the Cholesky diagonal: `(max L_ii / min L_ii)^2`.
/// A lower bound on the true 2-norm condition number, good enough to trigger
/// the guard.
fn condition_proxy(l: &Array2<f64>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..l.nrows() {
        let d = l[[i, i]];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo <= 0.0 {
        return f64::INFINITY;
    }
    (hi / lo) * (hi / lo)
}

fn ridge_of(h: ArrayView2<'_, f64>) -> f64 {
    let p = h.nrows();
    let trace: f64 = (0..p).map(|i| h[[i, i]]).sum();
    1e-8 * trace / p as f64
}

fn guarded_factor(h: ArrayView2<'_, f64>, cond_limit: f64) -> Result<Array2<f64>> {
    if let Some(l) = cholesky(h) {
        if condition_proxy(&l) <= cond_limit {
            return Ok(l);
        }
    }
    let p = h.nrows();
    let lambda = ridge_of(h);
    let mut ridged = h.to_owned();
    for i in 0..p {
        ridged[[i, i]] += lambda;
    }
    cholesky(ridged.view()).ok_or_else(|| {
        Error::SingularSystem(format!(
            "{p}x{p} matrix not positive definite after ridge {lambda:.3e}"
        ))
    })
}

/// Solve `H x = b` for symmetric positive (semi)definite `H`, applying the
/// ridge guard when needed.
pub fn solve_spd_guarded(h: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    solve_spd_guarded_with(h, b, COND_LIMIT)
}

/// [`solve_spd_guarded`] with an explicit condition-proxy limit.
pub fn solve_spd_guarded_with(
    h: ArrayView2<'_, f64>,
    b: ArrayView1<'_, f64>,
    cond_limit: f64,
) -> Result<Array1<f64>> {
    if h.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            found: b.len(),
            context: "solve_spd_guarded rhs",
        });
    }
    let l = guarded_factor(h, cond_limit)?;
    Ok(cholesky_solve(&l, b))
}

/// Inverse of a symmetric positive definite matrix via column solves.
pub fn invert_spd_guarded(h: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let p = h.nrows();
    let l = guarded_factor(h, COND_LIMIT)?;
    let mut inv = Array2::<f64>::zeros((p, p));
    let mut e = Array1::<f64>::zeros(p);
    for j in 0..p {
        e.fill(0.0);
        e[j] = 1.0;
        let col = cholesky_solve(&l, e.view());
        inv.column_mut(j).assign(&col);
    }
    // the column solves agree only up to rounding; enforce exact symmetry
    for i in 0..p {
        for j in (i + 1)..p {
            let m = 0.5 * (inv[[i, j]] + inv[[j, i]]);
            inv[[i, j]] = m;
            inv[[j, i]] = m;
        }
    }
    Ok(inv)
}

/// Quadratic form `v^T A v`.
pub fn quad_form(a: ArrayView2<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..a.nrows() {
        let mut row = 0.0;
        for j in 0..a.ncols() {
            row += a[[i, j]] * v[j];
        }
        total += v[i] * row;
    }
    total
}

/// Euclidean norm.
pub fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
