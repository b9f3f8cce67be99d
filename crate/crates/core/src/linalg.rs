//! Row-major dense kernels. Loop order keeps each output row's accumulation
//! sequential so results do not depend on SIMD width.

use crate::scalar::Scalar;

/// `out = a · b` for `a: n×k`, `b: k×m`.
pub fn matmul<S: Scalar>(a: &[S], b: &[S], n: usize, k: usize, m: usize, out: &mut [S]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    out.iter_mut().for_each(|o| *o = S::ZERO);
    let mut i = 0;
    while i + 4 <= n {
        let (o0, rest) = out[i * m..(i + 4) * m].split_at_mut(m);
        let (o1, rest) = rest.split_at_mut(m);
        let (o2, o3) = rest.split_at_mut(m);
        let a0 = &a[i * k..(i + 1) * k];
        let a1 = &a[(i + 1) * k..(i + 2) * k];
        let a2 = &a[(i + 2) * k..(i + 3) * k];
        let a3 = &a[(i + 3) * k..(i + 4) * k];
        for kk in 0..k {
            let brow = &b[kk * m..(kk + 1) * m];
            let (x0, x1, x2, x3) = (a0[kk], a1[kk], a2[kk], a3[kk]);
            for j in 0..m {
                let bv = brow[j];
                o0[j] += x0 * bv;
                o1[j] += x1 * bv;
                o2[j] += x2 * bv;
                o3[j] += x3 * bv;
            }
        }
        i += 4;
    }
    while i < n {
        let orow = &mut out[i * m..(i + 1) * m];
        let arow = &a[i * k..(i + 1) * k];
        for kk in 0..k {
            let x = arow[kk];
            let brow = &b[kk * m..(kk + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += x * bv;
            }
        }
        i += 1;
    }
}

/// `out += aᵀ · g` for `a: n×k`, `g: n×m`, `out: k×m`.
pub fn matmul_at_b_acc<S: Scalar>(a: &[S], g: &[S], n: usize, k: usize, m: usize, out: &mut [S]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(g.len(), n * m);
    debug_assert_eq!(out.len(), k * m);
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * m..(i + 1) * m];
        for kk in 0..k {
            let x = arow[kk];
            let orow = &mut out[kk * m..(kk + 1) * m];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += x * gv;
            }
        }
    }
}

/// `b: k×m` → `bᵀ: m×k`, written into `out`.
pub fn transpose<S: Scalar>(b: &[S], k: usize, m: usize, out: &mut [S]) {
    for r in 0..k {
        for c in 0..m {
            out[c * k + r] = b[r * m + c];
        }
    }
}

/// `out = g · bᵀ` for `g: n×m`, `b: k×m`, via an explicit transpose.
pub fn matmul_a_bt<S: Scalar>(g: &[S], b: &[S], n: usize, m: usize, k: usize, out: &mut [S]) {
    let mut bt = alloc::vec![S::ZERO; k * m];
    transpose(b, k, m, &mut bt);
    matmul(g, &bt, n, m, k, out);
}

pub fn add_row_bias<S: Scalar>(out: &mut [S], bias: &[S]) {
    let m = bias.len();
    for row in out.chunks_exact_mut(m) {
        for (o, &b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

pub fn col_sum_acc<S: Scalar>(g: &[S], m: usize, out: &mut [S]) {
    for row in g.chunks_exact(m) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn naive(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> alloc::vec::Vec<f64> {
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[i * m + j] = (0..k).map(|t| a[i * k + t] * b[t * m + j]).sum();
            }
        }
        out
    }

    #[test]
    fn kernels_match_naive() {
        let (n, k, m) = (7, 5, 3);
        let a: alloc::vec::Vec<f64> = (0..n * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: alloc::vec::Vec<f64> = (0..k * m).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut out = vec![0.0; n * m];
        matmul(&a, &b, n, k, m, &mut out);
        let want = naive(&a, &b, n, k, m);
        for (x, y) in out.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
        // aᵀ·g with g = out
        let mut atg = vec![0.0; k * m];
        matmul_at_b_acc(&a, &out, n, k, m, &mut atg);
        let mut at = vec![0.0; k * n];
        transpose(&a, n, k, &mut at);
        let want = naive(&at, &out, k, n, m);
        for (x, y) in atg.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
        // g·bᵀ
        let mut gbt = vec![0.0; n * k];
        matmul_a_bt(&out, &b, n, m, k, &mut gbt);
        let mut bt = vec![0.0; m * k];
        transpose(&b, k, m, &mut bt);
        let want = naive(&out, &bt, n, m, k);
        for (x, y) in gbt.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
