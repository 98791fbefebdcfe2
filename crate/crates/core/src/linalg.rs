//! Small dense solvers used by the regressions. Everything here is tiny
//! (a few dozen unknowns at most), so plain Gaussian elimination is fine.

/// Solves `a x = b` for a square row-major `a` using partial pivoting.
/// Returns `None` when a pivot falls below `tol` times the largest |a_ij|.
pub(crate) fn solve(a: &[f64], b: &[f64], n: usize, tol: f64) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if m[piv * n + col].abs() <= tol * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            rhs.swap(col, piv);
        }
        let d = m[col * n + col];
        for row in (col + 1)..n {
            let f = m[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[row * n + k] * x[k];
        }
        x[row] = acc / m[row * n + row];
    }
    Some(x)
}

/// Inverse of a square matrix via column-by-column solves.
pub(crate) fn invert(a: &[f64], n: usize, tol: f64) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = solve(a, &e, n, tol)?;
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Some(inv)
}

/// Ordinary least squares fit of `y` on the columns of the row-major design
/// `x` (`rows` x `cols`).
pub(crate) struct OlsFit {
    pub coef: Vec<f64>,
    pub rss: f64,
    /// `(X'X)^-1`, row-major.
    pub xtx_inv: Vec<f64>,
}

pub(crate) fn ols(x: &[f64], y: &[f64], rows: usize, cols: usize) -> Option<OlsFit> {
    debug_assert_eq!(x.len(), rows * cols);
    let mut xtx = vec![0.0; cols * cols];
    let mut xty = vec![0.0; cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        for i in 0..cols {
            xty[i] += row[i] * y[r];
            for j in i..cols {
                xtx[i * cols + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..cols {
        for j in 0..i {
            xtx[i * cols + j] = xtx[j * cols + i];
        }
    }
    let xtx_inv = invert(&xtx, cols, 1e-13)?;
    let coef: Vec<f64> = (0..cols)
        .map(|i| (0..cols).map(|j| xtx_inv[i * cols + j] * xty[j]).sum())
        .collect();
    let rss = (0..rows)
        .map(|r| {
            let fit: f64 = (0..cols).map(|c| x[r * cols + c] * coef[c]).sum();
            (y[r] - fit).powi(2)
        })
        .sum();
    Some(OlsFit { coef, rss, xtx_inv })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = [2.0, 1.0, 1.0, 3.0];
        let x = solve(&a, &[3.0, 5.0], 2, 1e-12).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn singular_is_none() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(solve(&a, &[1.0, 2.0], 2, 1e-12).is_none());
    }

    #[test]
    fn ols_recovers_line() {
        let xs: Vec<f64> = (0..10).flat_map(|i| [1.0, i as f64]).collect();
        let ys: Vec<f64> = (0..10).map(|i| 2.0 + 0.5 * i as f64).collect();
        let fit = ols(&xs, &ys, 10, 2).unwrap();
        assert!((fit.coef[0] - 2.0).abs() < 1e-12);
        assert!((fit.coef[1] - 0.5).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
    }
}
