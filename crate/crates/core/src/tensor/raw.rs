//! Plain-slice matrix kernels shared by forward and backward passes.
//!
//! Loop orders are chosen so the innermost loop runs over contiguous
//! memory and autovectorizes.

use super::Scalar;

/// c[m,n] = a[m,k] * b[k,n]
pub fn mm<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
    c
}

/// c[m,n] = a[m,k] * b[n,k]^T
pub fn mm_a_bt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            c[i * n + j] = dot(arow, brow);
        }
    }
    c
}

/// c[k,n] = a[m,k]^T * b[m,n]
pub fn mm_at_b<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
    c
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Row-wise softmax in place, stabilized by per-row max subtraction.
pub fn softmax_rows_inplace<T: Scalar>(x: &mut [T], rows: usize, cols: usize) {
    for i in 0..rows {
        let row = &mut x[i * cols..(i + 1) * cols];
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mm_matches_triple_loop() {
        // random-ish 2x3 * 3x2 vs independent triple loop
        let a = [0.3, -1.2, 2.0, 0.7, 0.1, -0.5];
        let b = [1.1, 0.2, -0.4, 0.9, 2.2, -1.0];
        let c = mm(&a, &b, 2, 3, 2);
        let mut expect = [0.0f64; 4];
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for p in 0..3 {
                    s += a[i * 3 + p] * b[p * 2 + j];
                }
                expect[i * 2 + j] = s;
            }
        }
        for (x, y) in c.iter().zip(expect.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_variants_agree() {
        let a: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..20).map(|i| (i as f64 * 0.71).cos()).collect();
        // a: 3x4, b: 4x5
        let c = mm(&a, &b, 3, 4, 5);
        // b^T: 5x4, mm_a_bt(a, bt) should equal c
        let mut bt = vec![0.0; 20];
        for i in 0..4 {
            for j in 0..5 {
                bt[j * 4 + i] = b[i * 5 + j];
            }
        }
        let c2 = mm_a_bt(&a, &bt, 3, 4, 5);
        for (x, y) in c.iter().zip(c2.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        // a^T b with a: 3x4, b2: 3x5 -> 4x5, vs direct reference
        let b2: Vec<f64> = (0..15).map(|i| (i as f64 * 0.53).sin()).collect();
        let c3 = mm_at_b(&a, &b2, 3, 4, 5);
        let mut expect = [0.0; 20];
        for p in 0..4 {
            for j in 0..5 {
                let mut s = 0.0;
                for i in 0..3 {
                    s += a[i * 4 + p] * b2[i * 5 + j];
                }
                expect[p * 5 + j] = s;
            }
        }
        for (x, y) in c3.iter().zip(expect.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
