//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub(crate) fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}

pub(crate) fn is_square(rows: &[Vec<f64>], n: usize) -> bool {
    rows.len() == n && rows.iter().all(|r| r.len() == n)
}

pub(crate) fn max_asymmetry(rows: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate().take(i) {
            worst = worst.max((v - rows[j][i]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue of the symmetric part.
pub(crate) fn min_eigenvalue(rows: &[Vec<f64>]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let m = to_matrix(rows);
    let sym = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Returns `L` (n × k, stored as k column vectors) with `P = L Lᵀ`, dropping
/// eigen-directions below a relative threshold.
pub(crate) fn psd_factor(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if rows.is_empty() {
        return Vec::new();
    }
    let m = to_matrix(rows);
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cut = 1e-12 * top.max(1.0);
    let mut cols = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cut {
            let s = lam.sqrt();
            cols.push(eig.eigenvectors.column(k).iter().map(|v| v * s).collect());
        }
    }
    cols
}

pub(crate) fn quad_form(rows: &[Vec<f64>], x: &[f64]) -> f64 {
    rows.iter().zip(x).map(|(row, xi)| xi * dot(row, x)).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerical rank via SVD with a relative tolerance.
pub(crate) fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0f64, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top.max(1.0)).count()
}

/// Least-squares solve of `m y = rhs` for a full-column-rank `m`. Returns the
/// solution together with the ∞-norm of the residual.
pub(crate) fn least_squares(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let svd = m.clone().svd(true, true);
    let y = svd.solve(rhs, 1e-12).ok()?;
    let res = (m * &y - rhs).amax();
    Some((y, res))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_reconstructs() {
        let p = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let l = psd_factor(&p);
        for i in 0..2 {
            for j in 0..2 {
                let v: f64 = l.iter().map(|c| c[i] * c[j]).sum();
                assert!((v - p[i][j]).abs() < 1e-12);
            }
        }
        assert!((min_eigenvalue(&p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert_eq!(rank(&m, 1e-10), 1);
    }
}
