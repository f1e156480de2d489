//! Row-major f64 matrix multiply on top of `matrixmultiply`'s blocked kernel.
//!
//! Rows of the output are split into fixed-size chunks processed in
//! parallel. Each output element is produced by exactly one kernel call
//! with a fixed k-loop order, so results do not depend on thread count.

use rayon::prelude::*;

const ROW_CHUNK: usize = 128;

/// `c = a * b` (or `c += a * b` when `accumulate`); `a` is m x k, `b` is
/// k x n, `c` is m x n, all row-major.
pub fn gemm_into(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    c: &mut [f64],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs size");
    assert_eq!(b.len(), k * n, "gemm: rhs size");
    assert_eq!(c.len(), m * n, "gemm: out size");
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }

    let run = |rows: usize, a_chunk: &[f64], c_chunk: &mut [f64]| unsafe {
        matrixmultiply::dgemm(
            rows,
            k,
            n,
            1.0,
            a_chunk.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c_chunk.as_mut_ptr(),
            n as isize,
            1,
        );
    };

    if m <= ROW_CHUNK {
        run(m, a, c);
    } else {
        c.par_chunks_mut(ROW_CHUNK * n)
            .zip(a.par_chunks(ROW_CHUNK * k))
            .for_each(|(c_chunk, a_chunk)| run(a_chunk.len() / k, a_chunk, c_chunk));
    }
}

/// Allocating transpose of a row-major m x n matrix.
pub fn transpose(m: usize, n: usize, a: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), m * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}
