//! Small dense kernels that are not worth pulling from a linear-algebra crate:
//! the symmetric tridiagonal eigenproblem used by Gauss-Hermite node
//! generation and by the Lanczos Ritz extraction.

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric tridiagonal matrix, ascending, together with
/// selected rows of the orthogonal eigenvector matrix.
#[derive(Debug, Clone)]
pub struct TridiagonalEigen {
    pub values: Vec<f64>,
    /// `rows[r][k]` is component `tracked[r]` of the eigenvector of `values[k]`.
    pub rows: Vec<Vec<f64>>,
}

/// Implicit QL with Wilkinson shifts.
///
/// `diag` has length `n`, `off` has length `n - 1` (`off[i]` couples `i` and
/// `i + 1`). Only the eigenvector rows listed in `tracked` are accumulated,
/// which keeps the cost at `O(n²)` regardless of `n`.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64], tracked: &[usize]) -> Result<TridiagonalEigen> {
    let n = diag.len();
    if n == 0 {
        return Ok(TridiagonalEigen { values: vec![], rows: vec![vec![]; tracked.len()] });
    }
    assert_eq!(off.len(), n - 1, "off-diagonal must have n - 1 entries");
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z: Vec<Vec<f64>> = tracked
        .iter()
        .map(|&r| {
            let mut row = vec![0.0; n];
            row[r] = 1.0;
            row
        })
        .collect();

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Eigen(format!("tridiagonal QL stalled at index {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let t = row[i + 1];
                    row[i + 1] = s * row[i] + c * t;
                    row[i] = c * row[i] - s * t;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&k| d[k]).collect();
    let rows = z.into_iter().map(|row| order.iter().map(|&k| row[k]).collect()).collect();
    Ok(TridiagonalEigen { values, rows })
}
