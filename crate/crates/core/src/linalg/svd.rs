//! Golub–Kahan–Reinsch SVD: Householder bidiagonalization followed by
//! implicitly shifted QR sweeps on the bidiagonal.
//!
//! The working matrix is always oriented tall (`rows >= cols`); wide inputs
//! are transposed and the roles of the singular-vector sets swapped.

use super::matrix::{dot, Matrix};
use super::LinalgError;

/// Full decomposition `A = U S Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `m×m` orthogonal; columns are left singular vectors.
    pub u: Matrix,
    /// `min(m, n)` singular values, descending.
    pub s: Vec<f64>,
    /// `n×n` orthogonal; columns are right singular vectors.
    pub v: Matrix,
}

/// Thin decomposition with `k = min(m, n)` vector pairs.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// `m×k`.
    pub u: Matrix,
    pub s: Vec<f64>,
    /// `n×k`.
    pub v: Matrix,
}

impl SvdResult {
    /// Reassembles `U S Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let m = self.u.rows();
        let n = self.v.rows();
        let mut out = Matrix::zeros(m, n);
        for (k, &s) in self.s.iter().enumerate() {
            out.add_outer(s, &self.u.column(k), &self.v.column(k));
        }
        out
    }
}

impl ThinSvd {
    pub fn reconstruct(&self) -> Matrix {
        let mut out = Matrix::zeros(self.u.rows(), self.v.rows());
        for (k, &s) in self.s.iter().enumerate() {
            out.add_outer(s, &self.u.column(k), &self.v.column(k));
        }
        out
    }
}

/// Singular vectors stored as rows (one vector per row), as produced by the
/// QR phase.
struct RowFactors {
    s: Vec<f64>,
    /// `k` rows of length `rows` of the oriented matrix.
    left: Vec<Vec<f64>>,
    /// `k` rows of length `cols` of the oriented matrix.
    right: Vec<Vec<f64>>,
}

/// Full SVD with square orthogonal factors.
///
/// Singular vector signs are fixed so that the largest-magnitude component of
/// every right singular vector is positive (first such index on ties); the
/// paired left vector is flipped with it.
pub fn svd(a: &Matrix) -> Result<SvdResult, LinalgError> {
    let (m, n) = a.shape();
    let thin = svd_rows(a)?;
    let RowFactors { s, left, right } = thin;
    // `left` are m-vectors and `right` n-vectors in the caller's orientation.
    let mut u_rows = left;
    let mut v_rows = right;
    complete_basis(&mut u_rows, m);
    complete_basis(&mut v_rows, n);
    let k = s.len();
    for extra in u_rows.iter_mut().skip(k) {
        fix_sign(extra);
    }
    for extra in v_rows.iter_mut().skip(k) {
        fix_sign(extra);
    }
    Ok(SvdResult {
        u: Matrix::from_columns(&u_rows),
        s,
        v: Matrix::from_columns(&v_rows),
    })
}

/// Thin SVD with `min(m, n)` vector pairs; same sign convention as [`svd`].
pub fn svd_thin(a: &Matrix) -> Result<ThinSvd, LinalgError> {
    let RowFactors { s, left, right } = svd_rows(a)?;
    Ok(ThinSvd {
        u: Matrix::from_columns(&left),
        s,
        v: Matrix::from_columns(&right),
    })
}

/// Singular values only, descending. Skips all vector accumulation.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>, LinalgError> {
    check_input(a)?;
    let (work, rows, cols) = oriented(a);
    let (mut s, _) = golub_reinsch(work, rows, cols, false)?;
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

fn check_input(a: &Matrix) -> Result<(), LinalgError> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(LinalgError::Empty);
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    Ok(())
}

fn oriented(a: &Matrix) -> (Vec<f64>, usize, usize) {
    if a.rows() >= a.cols() {
        (a.as_slice().to_vec(), a.rows(), a.cols())
    } else {
        (a.transpose().into_vec(), a.cols(), a.rows())
    }
}

fn svd_rows(a: &Matrix) -> Result<RowFactors, LinalgError> {
    check_input(a)?;
    let transposed = a.rows() < a.cols();
    let (work, rows, cols) = oriented(a);
    let (s, vecs) = golub_reinsch(work, rows, cols, true)?;
    let (ut, vt) = vecs.expect("vectors requested");

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let s_sorted: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let mut tall_left: Vec<Vec<f64>> = order.iter().map(|&i| ut[i].clone()).collect();
    let mut tall_right: Vec<Vec<f64>> = order.iter().map(|&i| vt[i].clone()).collect();

    // Sign convention is stated in terms of the caller's right vectors.
    {
        let (left, right) = if transposed {
            (&mut tall_right, &mut tall_left)
        } else {
            (&mut tall_left, &mut tall_right)
        };
        for (l, r) in left.iter_mut().zip(right.iter_mut()) {
            if fix_sign(r) {
                l.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }

    let (left, right) = if transposed {
        (tall_right, tall_left)
    } else {
        (tall_left, tall_right)
    };
    Ok(RowFactors {
        s: s_sorted,
        left,
        right,
    })
}

/// Flips `v` so its largest-magnitude entry is positive. Returns whether a
/// flip happened.
pub(crate) fn fix_sign(v: &mut [f64]) -> bool {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}

/// Extends an orthonormal set of row vectors to a full basis of `dim`.
///
/// Standard basis vectors are projected out against the current set (two
/// Gram–Schmidt passes) and accepted when the residual norm exceeds
/// `0.5/sqrt(dim)`; one scan always suffices since the squared residuals of
/// the standard basis sum to the missing dimension count.
fn complete_basis(rows: &mut Vec<Vec<f64>>, dim: usize) {
    if rows.len() >= dim {
        return;
    }
    let threshold = 0.5 / (dim as f64).sqrt();
    for e in 0..dim {
        if rows.len() == dim {
            break;
        }
        let mut cand = vec![0.0; dim];
        cand[e] = 1.0;
        for _ in 0..2 {
            for r in rows.iter() {
                let c = dot(r, &cand);
                if c != 0.0 {
                    cand.iter_mut().zip(r).for_each(|(x, y)| *x -= c * y);
                }
            }
        }
        let norm = dot(&cand, &cand).sqrt();
        if norm > threshold {
            cand.iter_mut().for_each(|x| *x /= norm);
            rows.push(cand);
        }
    }
    debug_assert_eq!(rows.len(), dim);
}

type RowVectors = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Core routine on a tall row-major `m×n` buffer (`m >= n`).
///
/// Returns unsorted singular values and, when requested, the singular vectors
/// as rows: `n` left vectors of length `m` and `n` right vectors of length `n`.
fn golub_reinsch(
    mut a: Vec<f64>,
    m: usize,
    n: usize,
    want_vectors: bool,
) -> Result<(Vec<f64>, Option<RowVectors>), LinalgError> {
    debug_assert!(m >= n && n >= 1);
    let idx = |i: usize, j: usize| i * n + j;
    let mut w = vec![0.0; n];
    let mut rv1 = vec![0.0; n];
    let mut work = vec![0.0; n];
    let mut g = 0.0f64;
    let mut scale = 0.0f64;
    let mut anorm = 0.0f64;

    // Householder reduction to upper bidiagonal form.
    for i in 0..n {
        let l = i + 1;
        rv1[i] = scale * g;
        g = 0.0;
        scale = 0.0;
        let mut s = 0.0;
        for k in i..m {
            scale += a[idx(k, i)].abs();
        }
        if scale != 0.0 {
            for k in i..m {
                a[idx(k, i)] /= scale;
                s += a[idx(k, i)] * a[idx(k, i)];
            }
            let f = a[idx(i, i)];
            g = -s.sqrt().copysign(f);
            let h = f * g - s;
            a[idx(i, i)] = f - g;
            if l < n {
                work[l..n].fill(0.0);
                for k in i..m {
                    let aki = a[idx(k, i)];
                    if aki == 0.0 {
                        continue;
                    }
                    let row = &a[k * n + l..k * n + n];
                    for (wj, &akj) in work[l..n].iter_mut().zip(row) {
                        *wj += aki * akj;
                    }
                }
                for wj in &mut work[l..n] {
                    *wj /= h;
                }
                for k in i..m {
                    let aki = a[idx(k, i)];
                    if aki == 0.0 {
                        continue;
                    }
                    let row = &mut a[k * n + l..k * n + n];
                    for (akj, &wj) in row.iter_mut().zip(&work[l..n]) {
                        *akj += wj * aki;
                    }
                }
            }
            for k in i..m {
                a[idx(k, i)] *= scale;
            }
        }
        w[i] = scale * g;
        g = 0.0;
        scale = 0.0;
        let mut s = 0.0;
        if i + 1 != n {
            for k in l..n {
                scale += a[idx(i, k)].abs();
            }
            if scale != 0.0 {
                for k in l..n {
                    a[idx(i, k)] /= scale;
                    s += a[idx(i, k)] * a[idx(i, k)];
                }
                let f = a[idx(i, l)];
                g = -s.sqrt().copysign(f);
                let h = f * g - s;
                a[idx(i, l)] = f - g;
                for k in l..n {
                    rv1[k] = a[idx(i, k)] / h;
                }
                let (head, tail) = a.split_at_mut((i + 1) * n);
                let row_i = &head[i * n + l..i * n + n];
                for j in l..m {
                    let row_j = &mut tail[(j - l) * n + l..(j - l) * n + n];
                    let s = dot(row_j, row_i);
                    for (x, &r) in row_j.iter_mut().zip(&rv1[l..n]) {
                        *x += s * r;
                    }
                }
                for k in l..n {
                    a[idx(i, k)] *= scale;
                }
            }
        }
        anorm = anorm.max(w[i].abs() + rv1[i].abs());
    }

    let mut factors: Option<(Vec<f64>, Vec<f64>)> = None;
    if want_vectors {
        // Right-hand transformations, accumulated into v (n×n, row-major).
        let mut v = vec![0.0; n * n];
        let mut l = n;
        for i in (0..n).rev() {
            if i + 1 < n {
                if g != 0.0 {
                    let ail = a[idx(i, l)];
                    for j in l..n {
                        v[j * n + i] = (a[idx(i, j)] / ail) / g;
                    }
                    work[l..n].fill(0.0);
                    for k in l..n {
                        let aik = a[idx(i, k)];
                        let row = &v[k * n + l..k * n + n];
                        for (wj, &vkj) in work[l..n].iter_mut().zip(row) {
                            *wj += aik * vkj;
                        }
                    }
                    for k in l..n {
                        let vki = v[k * n + i];
                        let row = &mut v[k * n + l..k * n + n];
                        for (vkj, &wj) in row.iter_mut().zip(&work[l..n]) {
                            *vkj += wj * vki;
                        }
                    }
                }
                for j in l..n {
                    v[i * n + j] = 0.0;
                    v[j * n + i] = 0.0;
                }
            }
            v[i * n + i] = 1.0;
            g = rv1[i];
            l = i;
        }

        // Left-hand transformations, accumulated in place.
        for i in (0..n).rev() {
            let l = i + 1;
            let gi = w[i];
            for j in l..n {
                a[idx(i, j)] = 0.0;
            }
            if gi != 0.0 {
                let ginv = 1.0 / gi;
                if l < n {
                    work[l..n].fill(0.0);
                    for k in l..m {
                        let aki = a[idx(k, i)];
                        if aki == 0.0 {
                            continue;
                        }
                        let row = &a[k * n + l..k * n + n];
                        for (wj, &akj) in work[l..n].iter_mut().zip(row) {
                            *wj += aki * akj;
                        }
                    }
                    let aii = a[idx(i, i)];
                    for wj in &mut work[l..n] {
                        *wj = (*wj / aii) * ginv;
                    }
                    for k in i..m {
                        let aki = a[idx(k, i)];
                        if aki == 0.0 {
                            continue;
                        }
                        let row = &mut a[k * n + l..k * n + n];
                        for (akj, &f) in row.iter_mut().zip(&work[l..n]) {
                            *akj += f * aki;
                        }
                    }
                }
                for j in i..m {
                    a[idx(j, i)] *= ginv;
                }
            } else {
                for j in i..m {
                    a[idx(j, i)] = 0.0;
                }
            }
            a[idx(i, i)] += 1.0;
        }

        // Rows of `ut` are the left vectors, rows of `vt` the right vectors.
        let ut = Matrix::from_vec(m, n, a).transpose().into_vec();
        let vt = Matrix::from_vec(n, n, v).transpose().into_vec();
        factors = Some((ut, vt));
    }

    let eps = f64::EPSILON;
    let cap = 100 * m.max(n);
    let mut total_iterations = 0usize;

    for k in (0..n).rev() {
        loop {
            // Split test.
            let mut cancel = true;
            let mut l = k;
            loop {
                if l == 0 || rv1[l].abs() <= eps * anorm {
                    cancel = false;
                    break;
                }
                if w[l - 1].abs() <= eps * anorm {
                    break;
                }
                l -= 1;
            }
            if cancel {
                // w[l-1] is negligible: chase rv1[l] out with left rotations.
                let nm = l - 1;
                let mut c = 0.0;
                let mut s = 1.0;
                for i in l..=k {
                    let f = s * rv1[i];
                    rv1[i] *= c;
                    if f.abs() <= eps * anorm {
                        break;
                    }
                    let g = w[i];
                    let h = f.hypot(g);
                    w[i] = h;
                    c = g / h;
                    s = -f / h;
                    if let Some((ut, _)) = factors.as_mut() {
                        rotate_rows(ut, m, nm, i, c, s);
                    }
                }
            }
            let z = w[k];
            if l == k {
                if z < 0.0 {
                    w[k] = -z;
                    if let Some((_, vt)) = factors.as_mut() {
                        vt[k * n..(k + 1) * n].iter_mut().for_each(|x| *x = -*x);
                    }
                }
                break;
            }
            if total_iterations >= cap {
                let residual = rv1.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
                return Err(LinalgError::NoConvergence {
                    iterations: total_iterations,
                    residual,
                });
            }
            total_iterations += 1;

            // Wilkinson-type shift from the trailing 2×2.
            let mut x = w[l];
            let nm = k - 1;
            let mut y = w[nm];
            let mut g = rv1[nm];
            let mut h = rv1[k];
            let mut f = ((y - z) * (y + z) + (g - h) * (g + h)) / (2.0 * h * y);
            g = f.hypot(1.0);
            f = ((x - z) * (x + z) + h * ((y / (f + g.copysign(f))) - h)) / x;
            let mut c = 1.0;
            let mut s = 1.0;
            for j in l..=nm {
                let i = j + 1;
                g = rv1[i];
                y = w[i];
                h = s * g;
                g *= c;
                let mut zz = f.hypot(h);
                rv1[j] = zz;
                c = f / zz;
                s = h / zz;
                f = x * c + g * s;
                g = g * c - x * s;
                h = y * s;
                y *= c;
                if let Some((_, vt)) = factors.as_mut() {
                    rotate_rows(vt, n, j, i, c, s);
                }
                zz = f.hypot(h);
                w[j] = zz;
                if zz != 0.0 {
                    c = f / zz;
                    s = h / zz;
                }
                f = c * g + s * y;
                x = c * y - s * g;
                if let Some((ut, _)) = factors.as_mut() {
                    rotate_rows(ut, m, j, i, c, s);
                }
            }
            rv1[l] = 0.0;
            rv1[k] = f;
            w[k] = x;
        }
    }

    let vectors = factors.map(|(ut, vt)| {
        let left = ut.chunks(m).map(<[f64]>::to_vec).collect();
        let right = vt.chunks(n).map(<[f64]>::to_vec).collect();
        (left, right)
    });
    Ok((w, vectors))
}

/// Applies `(r_p, r_q) <- (c r_p + s r_q, c r_q - s r_p)` to two rows of a
/// row-major buffer with row length `len`.
#[inline]
fn rotate_rows(buf: &mut [f64], len: usize, p: usize, q: usize, c: f64, s: f64) {
    debug_assert_ne!(p, q);
    let (lo, hi, swap) = if p < q { (p, q, false) } else { (q, p, true) };
    let (head, tail) = buf.split_at_mut(hi * len);
    let row_lo = &mut head[lo * len..(lo + 1) * len];
    let row_hi = &mut tail[..len];
    let (rp, rq) = if swap {
        (row_hi, row_lo)
    } else {
        (row_lo, row_hi)
    };
    for (yp, zq) in rp.iter_mut().zip(rq.iter_mut()) {
        let y = *yp;
        let z = *zq;
        *yp = y * c + z * s;
        *zq = z * c - y * s;
    }
}
