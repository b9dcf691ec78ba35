//! Dense kernels that tally their own multiply/add counts.
//!
//! They are deliberately plain triple loops: the counts have to reflect the
//! textbook cost of each operation, not a blocked or vectorised variant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ops::OpCounts;

pub fn matmul(a: &DMatrix<f64>, b: &DMatrix<f64>, tally: &mut OpCounts) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.nrows());
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let mut acc = a[(i, 0)] * b[(0, j)];
            for l in 1..k {
                acc += a[(i, l)] * b[(l, j)];
            }
            out[(i, j)] = acc;
        }
    }
    tally.multiplies += (m * k * n) as u64;
    tally.adds += (m * n * k.saturating_sub(1)) as u64;
    out
}

/// `a * b^T` without materialising the transpose.
pub fn matmul_bt(a: &DMatrix<f64>, b: &DMatrix<f64>, tally: &mut OpCounts) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.ncols());
    let (m, k, n) = (a.nrows(), a.ncols(), b.nrows());
    let mut out = DMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let mut acc = a[(i, 0)] * b[(j, 0)];
            for l in 1..k {
                acc += a[(i, l)] * b[(j, l)];
            }
            out[(i, j)] = acc;
        }
    }
    tally.multiplies += (m * k * n) as u64;
    tally.adds += (m * n * k.saturating_sub(1)) as u64;
    out
}

pub fn matvec(a: &DMatrix<f64>, x: &DVector<f64>, tally: &mut OpCounts) -> DVector<f64> {
    assert_eq!(a.ncols(), x.len());
    let (m, k) = (a.nrows(), a.ncols());
    let out = DVector::from_fn(m, |i, _| (0..k).map(|l| a[(i, l)] * x[l]).sum());
    tally.multiplies += (m * k) as u64;
    tally.adds += (m * k.saturating_sub(1)) as u64;
    out
}

pub fn add_assign(a: &mut DMatrix<f64>, b: &DMatrix<f64>, tally: &mut OpCounts) {
    *a += b;
    tally.adds += (a.nrows() * a.ncols()) as u64;
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(a: &DMatrix<f64>, tally: &mut OpCounts) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut work = a.clone();
    let mut inv = DMatrix::identity(n, n);
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| work[(i, col)].abs().total_cmp(&work[(j, col)].abs()))
            .unwrap();
        if work[(pivot, col)].abs() <= 1e-14 * scale {
            return Err(Error::Singular("matrix inversion"));
        }
        work.swap_rows(col, pivot);
        inv.swap_rows(col, pivot);
        let p = 1.0 / work[(col, col)];
        for j in 0..n {
            work[(col, j)] *= p;
            inv[(col, j)] *= p;
        }
        tally.multiplies += 2 * n as u64;
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = work[(i, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                work[(i, j)] -= f * work[(col, j)];
                inv[(i, j)] -= f * inv[(col, j)];
            }
            tally.multiplies += 2 * n as u64;
            tally.adds += 2 * n as u64;
        }
    }
    Ok(inv)
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}
