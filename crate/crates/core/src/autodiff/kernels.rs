//! Dense matrix kernels shared by the tape and by untracked evaluation.
//!
//! All kernels are row-major and accumulate in a fixed order so results are
//! bitwise reproducible for identical inputs.

const MR: usize = 4;
const NR: usize = 8;

/// `c[m,n] = sum_p A(i,p) * b[p,n]` where `A(i,p) = a[i*rs + p*cs]` and `b`
/// is row-major `[k,n]`. Every output accumulates over `p` in ascending
/// order starting from zero, so the blocking does not change the result.
fn gemm(a: &[f64], rs: usize, cs: usize, b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    let full_rows = m - m % MR;
    let full_cols = n - n % NR;
    let mut panel = vec![0.0; k * MR];
    for i in (0..full_rows).step_by(MR) {
        // pack rows i..i+MR of A as [k][MR]
        for (p, slot) in panel.chunks_exact_mut(MR).enumerate() {
            for (r, s) in slot.iter_mut().enumerate() {
                *s = a[(i + r) * rs + p * cs];
            }
        }
        for j in (0..full_cols).step_by(NR) {
            let mut acc = [[0.0f64; NR]; MR];
            for (ap, brow) in panel.chunks_exact(MR).zip(b.chunks_exact(n)) {
                let bv: &[f64; NR] = brow[j..j + NR].try_into().expect("block");
                for (row, &av) in acc.iter_mut().zip(ap) {
                    for (cv, &x) in row.iter_mut().zip(bv) {
                        *cv += av * x;
                    }
                }
            }
            for (r, row) in acc.iter().enumerate() {
                c[(i + r) * n + j..(i + r) * n + j + NR].copy_from_slice(row);
            }
        }
        if full_cols < n {
            edge(a, rs, cs, b, &mut c, i..i + MR, full_cols..n, k, n);
        }
    }
    if full_rows < m {
        edge(a, rs, cs, b, &mut c, full_rows..m, 0..n, k, n);
    }
    c
}

#[allow(clippy::too_many_arguments)]
fn edge(
    a: &[f64],
    rs: usize,
    cs: usize,
    b: &[f64],
    c: &mut [f64],
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    k: usize,
    n: usize,
) {
    for i in rows {
        let crow = &mut c[i * n + cols.start..i * n + cols.end];
        for p in 0..k {
            let av = a[i * rs + p * cs];
            for (cv, &bv) in crow.iter_mut().zip(&b[p * n + cols.start..p * n + cols.end]) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m,n] = a[m,k] * b[k,n]`
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    gemm(a, k, 1, b, m, k, n)
}

/// `c[m,n] = a[m,k] * b[n,k]^T`
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    if m == 1 || n == 1 {
        // matrix-vector products: contiguous dot products
        let mut c = Vec::with_capacity(m * n);
        for arow in a.chunks_exact(k) {
            for brow in b.chunks_exact(k) {
                c.push(arow.iter().zip(brow).fold(0.0, |s, (x, y)| s + x * y));
            }
        }
        return c;
    }
    gemm(a, k, 1, &transpose(b, n, k), m, k, n)
}

/// `c[m,n] = a[k,m]^T * b[k,n]`
pub fn matmul_tn(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    gemm(a, 1, m, b, m, k, n)
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    const TILE: usize = 16;
    let mut out = vec![0.0; a.len()];
    for i0 in (0..rows).step_by(TILE) {
        for j0 in (0..cols).step_by(TILE) {
            for i in i0..(i0 + TILE).min(rows) {
                for j in j0..(j0 + TILE).min(cols) {
                    out[j * rows + i] = a[i * cols + j];
                }
            }
        }
    }
    out
}

/// Dot product with four interleaved accumulators (vectorizes, fixed order).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log(sigmoid(x))` without underflow.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}
