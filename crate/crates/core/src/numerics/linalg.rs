//! Row-major dense kernels sized for per-layer matrices (tens of channels).

/// `a (n x k) * b (k x m)`.
pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    let mut out = vec![0.0; n * m];
    for (arow, orow) in a.chunks_exact(k).zip(out.chunks_exact_mut(m)) {
        for (&av, brow) in arow.iter().zip(b.chunks_exact(m)) {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `acc (k x m) += a^T (k x n) * b (n x m)` with `a` stored `n x k`.
pub fn matmul_at_b_acc(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, acc: &mut [f64]) {
    debug_assert_eq!(acc.len(), k * m);
    for (arow, brow) in a.chunks_exact(k).zip(b.chunks_exact(m)).take(n) {
        for (&av, accrow) in arow.iter().zip(acc.chunks_exact_mut(m)) {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in accrow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `acc (n x k) += a (n x m) * b^T (m x k)` with `b` stored `k x m`.
pub fn matmul_a_bt_acc(a: &[f64], b: &[f64], n: usize, m: usize, k: usize, acc: &mut [f64]) {
    debug_assert_eq!(acc.len(), n * k);
    for (arow, orow) in a.chunks_exact(m).zip(acc.chunks_exact_mut(k)).take(n) {
        for (o, brow) in orow.iter_mut().zip(b.chunks_exact(m)) {
            *o += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_naive_loops() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, -1.0, 2.0, 0.5, 1.0]; // 3x2
        assert_eq!(matmul(&a, &b, 2, 3, 2), vec![1.0 - 2.0 + 1.5, 4.0 + 3.0, 4.0 - 5.0 + 3.0, 10.0 + 6.0]);
        // a^T * c, a is 2x3, c is 2x2 -> 3x2
        let c = [1.0, 2.0, 3.0, 4.0];
        let mut acc = vec![0.0; 6];
        matmul_at_b_acc(&a, &c, 2, 3, 2, &mut acc);
        assert_eq!(acc, vec![13.0, 18.0, 17.0, 24.0, 21.0, 30.0]);
        // c * b'^T with b' = 3x2 -> 2x3
        let mut acc = vec![0.0; 6];
        matmul_a_bt_acc(&c, &b, 2, 2, 3, &mut acc);
        assert_eq!(acc, vec![1.0, 3.0, 2.5, 3.0, 5.0, 5.5]);
    }

    #[test]
    fn silu_derivative() {
        for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let fd = (silu(x + 1e-6) - silu(x - 1e-6)) / 2e-6;
            assert!((fd - silu_grad(x)).abs() < 1e-8);
        }
    }
}
