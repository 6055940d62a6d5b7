//! Data-parallel kernels with a sequential fallback.
//!
//! With the `parallel` feature (default) the hot per-voxel and matrix
//! loops run on rayon; without it the same code paths run sequentially.
//! Work is always split at fixed boundaries and collected in index
//! order, so results are bitwise identical for any thread count,
//! including one.

use ndarray::{s, Array2, ArrayView2};

/// Column-block width for parallel matrix products. Fixed so the
/// summation order never depends on the thread count.
pub const MATMUL_COL_BLOCK: usize = 64;

/// Map `f` over `0..n`, returning results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, returning results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Dense `a * b`, sequential reference path.
pub fn matmul_seq(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    a.dot(b)
}

/// Dense `a * b`; splits the columns of `b` into fixed-width blocks
/// and computes blocks in parallel. Each output column is produced by
/// exactly one block, so the result matches `matmul_seq` bitwise.
#[cfg(feature = "parallel")]
pub fn matmul(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    use rayon::prelude::*;

    let (m, _) = a.dim();
    let (_, n) = b.dim();
    if n <= MATMUL_COL_BLOCK {
        return a.dot(b);
    }
    let blocks: Vec<Array2<f64>> = (0..n.div_ceil(MATMUL_COL_BLOCK))
        .into_par_iter()
        .map(|k| {
            let c0 = k * MATMUL_COL_BLOCK;
            let c1 = (c0 + MATMUL_COL_BLOCK).min(n);
            a.dot(&b.slice(s![.., c0..c1]))
        })
        .collect();
    let mut out = Array2::zeros((m, n));
    for (k, block) in blocks.into_iter().enumerate() {
        let c0 = k * MATMUL_COL_BLOCK;
        let c1 = (c0 + block.ncols()).min(n);
        out.slice_mut(s![.., c0..c1]).assign(&block);
    }
    out
}

#[cfg(not(feature = "parallel"))]
pub fn matmul(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    matmul_seq(a, b)
}
