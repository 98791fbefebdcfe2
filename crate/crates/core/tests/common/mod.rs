//! Oracles shared by the integration tests. None of these reuse library code.
#![allow(dead_code)]

use ndarray::{Array1, Array2};

/// Full SVD by one-sided Jacobi rotations (Hestenes). Returns singular values
/// in decreasing order with matching left/right vectors as columns.
pub fn jacobi_svd(a: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let (m, n) = a.dim();
    let mut u = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    alpha += u[[i, p]] * u[[i, p]];
                    beta += u[[i, q]] * u[[i, q]];
                    gamma += u[[i, p]] * u[[i, q]];
                }
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (u[[i, p]], u[[i, q]]);
                    u[[i, p]] = c * x - s * y;
                    u[[i, q]] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[[i, p]], v[[i, q]]);
                    v[[i, p]] = c * x - s * y;
                    v[[i, q]] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<(f64, usize)> = (0..n)
        .map(|j| ((0..m).map(|i| u[[i, j]] * u[[i, j]]).sum::<f64>().sqrt(), j))
        .collect();
    sv.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut uu = Array2::zeros((m, n));
    let mut vv = Array2::zeros((n, n));
    let mut s = Array1::zeros(n);
    for (k, &(sigma, j)) in sv.iter().enumerate() {
        s[k] = sigma;
        for i in 0..m {
            uu[[i, k]] = if sigma > 0.0 { u[[i, j]] / sigma } else { 0.0 };
        }
        for i in 0..n {
            vv[[i, k]] = v[[i, j]];
        }
    }
    (uu, s, vv)
}

/// Best rank-1 approximation from the Jacobi oracle.
pub fn rank1_oracle(a: &Array2<f64>) -> Array2<f64> {
    let (u, s, v) = jacobi_svd(a);
    Array2::from_shape_fn(a.dim(), |(i, j)| s[0] * u[[i, 0]] * v[[j, 0]])
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Life expectancy by direct summation of `p^x` for a constant rate.
pub fn e0_constant_rate(m: f64, omega: u32) -> f64 {
    let p = 1.0 - m / (1.0 + 0.5 * m);
    (0..=omega).map(|x| p.powi(x as i32)).sum::<f64>() - 0.5
}
