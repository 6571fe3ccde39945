//! Thin wrapper over `matrixmultiply` for row-major `f64` products.

/// `c = alpha · op(a) · op(b) + beta · c` for row-major matrices, where
/// `op(a)` is `m × k` and `op(b)` is `k × n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // a is stored m×k (or k×m when transposed), b k×n (or n×k)
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices are at least as long as the strided views described above
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_product() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let b = [1.0, 0.0, -1.0, 2.0, 0.5, 1.0]; // 3×2
        let mut c = [0.0; 4];
        gemm(2, 3, 2, 1.0, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [1.0 - 2.0 + 1.5, 4.0 + 3.0, 4.0 - 5.0 + 3.0, 10.0 + 6.0]);

        // aᵀ is 3×2; aᵀ·a is 3×3
        let mut g = [0.0; 9];
        gemm(3, 2, 3, 1.0, &a, true, &a, false, 0.0, &mut g);
        assert_eq!(g[0], 1.0 + 16.0);
        assert_eq!(g[5], 2.0 * 3.0 + 5.0 * 6.0);

        // a·aᵀ is 2×2, accumulated onto ones
        let mut h = [1.0; 4];
        gemm(2, 3, 2, 1.0, &a, false, &a, true, 1.0, &mut h);
        assert_eq!(h, [15.0, 33.0, 33.0, 78.0]);
    }
}
