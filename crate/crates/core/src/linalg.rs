//! Small dense helpers. Matrices are row-major `Vec<f64>` of size `d * d`.

use nalgebra::{DMatrix, SymmetricEigen};

/// Solves `L X = B` in place for unit lower triangular `L` (`d x d`) and
/// `B` with `m` columns (`d x m`, row-major).
pub fn solve_unit_lower_in_place(l: &[f64], d: usize, b: &mut [f64], m: usize) {
    assert_eq!(l.len(), d * d);
    assert_eq!(b.len(), d * m);
    for r in 0..d {
        for c in 0..r {
            let f = l[r * d + c];
            if f != 0.0 {
                for col in 0..m {
                    b[r * m + col] -= f * b[c * m + col];
                }
            }
        }
    }
}

pub fn transpose(a: &[f64], d: usize) -> Vec<f64> {
    let mut t = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            t[c * d + r] = a[r * d + c];
        }
    }
    t
}

/// `L^{-1} S L^{-T}` for unit lower triangular `L`, by two forward solves.
pub fn unit_lower_congruence(l: &[f64], s: &[f64], d: usize) -> Vec<f64> {
    let mut x = s.to_vec();
    solve_unit_lower_in_place(l, d, &mut x, d);
    let mut y = transpose(&x, d);
    solve_unit_lower_in_place(l, d, &mut y, d);
    transpose(&y, d)
}

pub fn max_asymmetry(a: &[f64], d: usize) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..d {
        for c in 0..r {
            worst = worst.max((a[r * d + c] - a[c * d + r]).abs());
        }
    }
    worst
}

pub fn to_dmatrix(a: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, a)
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue(a: &[f64], d: usize) -> f64 {
    let m = to_dmatrix(a, d);
    let sym = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Lower Cholesky factor (row-major), or `None` if `a` is not positive definite.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let m = to_dmatrix(a, d);
    let chol = m.cholesky()?;
    let l = chol.l();
    let mut out = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            out[r * d + c] = l[(r, c)];
        }
    }
    Some(out)
}

/// Solves `L x = b` for general lower triangular `L`.
pub fn solve_lower(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for r in 0..d {
        let mut v = x[r];
        for c in 0..r {
            v -= l[r * d + c] * x[c];
        }
        x[r] = v / l[r * d + r];
    }
    x
}
