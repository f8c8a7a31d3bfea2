//! Symmetric eigendecomposition: Householder tridiagonalization followed by
//! implicit QL iterations with Wilkinson shifts.

use super::matrix::Matrix;
use super::svd::fix_sign;
use super::LinalgError;

#[derive(Debug, Clone)]
pub struct EigResult {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// `n×n`; column `j` pairs with `eigenvalues[j]`.
    pub eigenvectors: Matrix,
}

/// Eigendecomposition of a real symmetric matrix.
///
/// The input is symmetrized as `(A + Aᵀ)/2` after checking
/// `‖A − Aᵀ‖_max <= 1e-8 ‖A‖_max`. Eigenvector signs follow the same rule as
/// the SVD: largest-magnitude component positive.
pub fn eigh(a: &Matrix) -> Result<EigResult, LinalgError> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Err(LinalgError::Empty);
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let scale = a.max_abs();
    let asym = a.asymmetry();
    if asym > 1e-8 * scale {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    let n = rows;
    let mut z = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)])).into_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut z, n, &mut d, &mut e);

    // Rows of `zt` are the accumulated basis vectors.
    let mut zt = Matrix::from_vec(n, n, z).transpose().into_vec();
    ql_implicit(&mut d, &mut e, &mut zt, n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]));
    let eigenvalues = order.iter().map(|&i| d[i]).collect();
    let columns: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let mut v = zt[i * n..(i + 1) * n].to_vec();
            fix_sign(&mut v);
            v
        })
        .collect();
    Ok(EigResult {
        eigenvalues,
        eigenvectors: Matrix::from_columns(&columns),
    })
}

/// Householder reduction of the symmetric row-major `z` to tridiagonal form.
/// On return `d` holds the diagonal, `e[1..]` the subdiagonal, and `z` the
/// orthogonal transformation (columns).
fn tridiagonalize(z: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) {
    let idx = |i: usize, j: usize| i * n + j;
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| z[idx(i, k)].abs()).sum();
            if scale == 0.0 {
                e[i] = z[idx(i, l)];
            } else {
                for k in 0..=l {
                    z[idx(i, k)] /= scale;
                    h += z[idx(i, k)] * z[idx(i, k)];
                }
                let f = z[idx(i, l)];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[idx(i, l)] = f - g;
                let mut f = 0.0;
                for j in 0..=l {
                    z[idx(j, i)] = z[idx(i, j)] / h;
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += z[idx(j, k)] * z[idx(i, k)];
                    }
                    for k in (j + 1)..=l {
                        g += z[idx(k, j)] * z[idx(i, k)];
                    }
                    e[j] = g / h;
                    f += e[j] * z[idx(i, j)];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = z[idx(i, j)];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        z[idx(j, k)] -= f * e[k] + g * z[idx(i, k)];
                    }
                }
            }
        } else {
            e[i] = z[idx(i, l)];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    let mut work = vec![0.0; n];
    for i in 0..n {
        if d[i] != 0.0 {
            work[..i].fill(0.0);
            for k in 0..i {
                let zik = z[idx(i, k)];
                let row = &z[k * n..k * n + i];
                for (wj, &zkj) in work[..i].iter_mut().zip(row) {
                    *wj += zik * zkj;
                }
            }
            for k in 0..i {
                let zki = z[idx(k, i)];
                let row = &mut z[k * n..k * n + i];
                for (zkj, &wj) in row.iter_mut().zip(&work[..i]) {
                    *zkj -= wj * zki;
                }
            }
        }
        d[i] = z[idx(i, i)];
        z[idx(i, i)] = 1.0;
        for j in 0..i {
            z[idx(j, i)] = 0.0;
            z[idx(i, j)] = 0.0;
        }
    }
}

/// Implicit QL on the tridiagonal `(d, e)`; rotations are applied to the rows
/// of `zt`.
fn ql_implicit(d: &mut [f64], e: &mut [f64], zt: &mut [f64], n: usize) -> Result<(), LinalgError> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let cap = 100 * n;
    let mut total = 0usize;
    for l in 0..n {
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
            if total >= cap {
                let residual = e.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
                return Err(LinalgError::NoConvergence {
                    iterations: total,
                    residual,
                });
            }
            total += 1;
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (head, tail) = zt.split_at_mut((i + 1) * n);
                let zi = &mut head[i * n..(i + 1) * n];
                let zi1 = &mut tail[..n];
                for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                    let f = *b;
                    *b = s * *a + c * f;
                    *a = c * *a - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}
