//! Dense matrix-product kernels. Row-major throughout; every loop runs in a
//! fixed order so results are bitwise reproducible.

use crate::scalar::Scalar;

const BLOCK: usize = 32;

/// `out[m×n] += a[m×k] · b[k×n]`
///
/// Columns are processed in register-sized blocks; each output still sums
/// over `k` in order, so the blocking does not change results.
pub(crate) fn matmul_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if n == 0 || k == 0 {
        return;
    }
    let full = n - n % BLOCK;
    for (a_row, out_row) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)).take(m) {
        for j0 in (0..full).step_by(BLOCK) {
            let mut acc = [T::zero(); BLOCK];
            acc.copy_from_slice(&out_row[j0..j0 + BLOCK]);
            for (p, &av) in a_row.iter().enumerate() {
                if av == T::zero() {
                    continue;
                }
                let b_blk: &[T; BLOCK] = b[p * n + j0..p * n + j0 + BLOCK].try_into().unwrap();
                for (o, &bv) in acc.iter_mut().zip(b_blk) {
                    *o += av * bv;
                }
            }
            out_row[j0..j0 + BLOCK].copy_from_slice(&acc);
        }
        if full < n {
            let tail = &mut out_row[full..];
            for (p, &av) in a_row.iter().enumerate() {
                if av == T::zero() {
                    continue;
                }
                for (o, &bv) in tail.iter_mut().zip(&b[p * n + full..(p + 1) * n]) {
                    *o += av * bv;
                }
            }
        }
    }
}

/// Rows of `a` and `g` handled per pass of [`matmul_at_b_acc`], sized to stay in L1.
const ROW_CHUNK: usize = 64;

/// `out[k×n] += aᵀ · g` for `a[m×k]`, `g[m×n]`. Each output sums over `m` in order.
pub(crate) fn matmul_at_b_acc<T: Scalar>(a: &[T], g: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(out.len(), k * n);
    if n == 0 || k == 0 {
        return;
    }
    let full = n - n % BLOCK;
    for i0 in (0..m).step_by(ROW_CHUNK) {
        let rows = i0..(i0 + ROW_CHUNK).min(m);
        for p in 0..k {
            let out_row = &mut out[p * n..(p + 1) * n];
            for j0 in (0..full).step_by(BLOCK) {
                let mut acc = [T::zero(); BLOCK];
                acc.copy_from_slice(&out_row[j0..j0 + BLOCK]);
                for i in rows.clone() {
                    let av = a[i * k + p];
                    if av == T::zero() {
                        continue;
                    }
                    let g_blk: &[T; BLOCK] = g[i * n + j0..i * n + j0 + BLOCK].try_into().unwrap();
                    for (o, &gv) in acc.iter_mut().zip(g_blk) {
                        *o += av * gv;
                    }
                }
                out_row[j0..j0 + BLOCK].copy_from_slice(&acc);
            }
            if full < n {
                for i in rows.clone() {
                    let av = a[i * k + p];
                    if av == T::zero() {
                        continue;
                    }
                    for (o, &gv) in out_row[full..].iter_mut().zip(&g[i * n + full..(i + 1) * n]) {
                        *o += av * gv;
                    }
                }
            }
        }
    }
}

/// `out[m×k] += g · bᵀ` for `g[m×n]`, `b[k×n]`.
pub(crate) fn matmul_a_bt_acc<T: Scalar>(g: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    let bt = transpose(b, k, n);
    matmul_acc(g, &bt, out, m, n, k);
}

pub(crate) fn transpose<T: Scalar>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = x[i * cols + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn kernels_agree_with_triple_loop() {
        let (m, k, n) = (5, 3, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let mut out = vec![0.0; m * n];
        matmul_acc(&a, &b, &mut out, m, k, n);
        let want = naive(&a, &b, m, k, n);
        for (x, y) in out.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        // aᵀ·g with a[m×k], g[m×n]
        let g: Vec<f64> = (0..m * n).map(|i| i as f64 * 0.1 - 0.5).collect();
        let mut atg = vec![0.0; k * n];
        matmul_at_b_acc(&a, &g, &mut atg, m, k, n);
        let want = naive(&transpose(&a, m, k), &g, k, m, n);
        for (x, y) in atg.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        // g·bᵀ with g[m×n], b[k×n]
        let bb: Vec<f64> = (0..k * n).map(|i| i as f64 * -0.2 + 1.0).collect();
        let mut gbt = vec![0.0; m * k];
        matmul_a_bt_acc(&g, &bb, &mut gbt, m, k, n);
        let want = naive(&g, &transpose(&bb, k, n), m, n, k);
        for (x, y) in gbt.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
