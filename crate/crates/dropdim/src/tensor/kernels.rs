//! Raw matrix kernels over `f64` slices.
//!
//! These are the hot loops behind the tape ops. Each has a sequential
//! body; the public entry points switch to a rayon row-split when the
//! work is large enough. The split is over output rows, so every element
//! is computed by exactly the same sequence of adds in either mode and
//! results are bit-identical.

use crate::parallel;

/// Below this many multiply-adds the rayon dispatch overhead dominates.
const PAR_THRESHOLD: usize = 32 * 1024;

/// C[m,n] = A[m,k] · B[k,n]. `out` is overwritten.
pub fn matmul2(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if m * k * n >= PAR_THRESHOLD {
        parallel::chunks_mut(out, n, |i, row| matmul2_row(a, b, k, n, i, row));
    } else {
        matmul2_seq(a, b, m, k, n, out);
    }
}

/// Sequential form of [`matmul2`].
pub fn matmul2_seq(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), m * n);
    parallel::chunks_mut_seq(out, n, |i, row| matmul2_row(a, b, k, n, i, row));
}

#[inline]
fn matmul2_row(a: &[f64], b: &[f64], k: usize, n: usize, i: usize, row: &mut [f64]) {
    row.fill(0.0);
    for p in 0..k {
        let aip = a[i * k + p];
        if aip == 0.0 {
            continue;
        }
        let brow = &b[p * n..(p + 1) * n];
        for (o, &bv) in row.iter_mut().zip(brow) {
            *o += aip * bv;
        }
    }
}

/// C[m,n] = A[m,k] · B[n,k]ᵀ — both operands scanned along contiguous rows.
pub fn matmul2_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    let body = |i: usize, row: &mut [f64]| {
        let arow = &a[i * k..(i + 1) * k];
        for (j, o) in row.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                s += av * bv;
            }
            *o = s;
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        parallel::chunks_mut(out, n, body);
    } else {
        parallel::chunks_mut_seq(out, n, body);
    }
}

/// C[k,n] += A[m,k]ᵀ · B[m,n]. Accumulates into `out`.
pub fn matmul2_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    let body = |p: usize, row: &mut [f64]| {
        for i in 0..m {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        parallel::chunks_mut(out, n, body);
    } else {
        parallel::chunks_mut_seq(out, n, body);
    }
}
