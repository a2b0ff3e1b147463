//! Small dense linear algebra on row-major buffers. The frames live in
//! dimension n <= 8, so plain LU with partial pivoting is all we need.

/// Determinant of an n x n row-major matrix. Consumes the buffer.
pub fn det(n: usize, a: &mut [f64]) -> f64 {
    debug_assert_eq!(a.len(), n * n);
    let mut sign = 1.0;
    for k in 0..n {
        let mut piv = k;
        let mut best = a[k * n + k].abs();
        for r in (k + 1)..n {
            let v = a[r * n + k].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != k {
            for c in 0..n {
                a.swap(k * n + c, piv * n + c);
            }
            sign = -sign;
        }
        let d = a[k * n + k];
        for r in (k + 1)..n {
            let f = a[r * n + k] / d;
            if f == 0.0 {
                continue;
            }
            for c in k..n {
                a[r * n + c] -= f * a[k * n + c];
            }
        }
    }
    let mut out = sign;
    for k in 0..n {
        out *= a[k * n + k];
    }
    out
}

/// Numerical rank of a rows x cols row-major matrix by Gaussian elimination
/// with full column sweep; pivots below `tol * scale` count as zero.
pub fn rank(rows: usize, cols: usize, a: &mut [f64], tol: f64) -> usize {
    debug_assert_eq!(a.len(), rows * cols);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let cut = tol * scale;
    let mut rank = 0;
    let mut row = 0;
    for col in 0..cols {
        let mut piv = row;
        let mut best = 0.0;
        for r in row..rows {
            let v = a[r * cols + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best <= cut {
            continue;
        }
        if piv != row {
            for c in 0..cols {
                a.swap(row * cols + c, piv * cols + c);
            }
        }
        let d = a[row * cols + col];
        for r in (row + 1)..rows {
            let f = a[r * cols + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..cols {
                a[r * cols + c] -= f * a[row * cols + c];
            }
        }
        rank += 1;
        row += 1;
        if row == rows {
            break;
        }
    }
    rank
}

/// Solve an n x n system in place; returns None when singular.
pub fn solve(n: usize, a: &mut [f64], b: &mut [f64]) -> Option<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for k in 0..n {
        let mut piv = k;
        let mut best = a[k * n + k].abs();
        for r in (k + 1)..n {
            let v = a[r * n + k].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return None;
        }
        if piv != k {
            for c in 0..n {
                a.swap(k * n + c, piv * n + c);
            }
            b.swap(k, piv);
        }
        let d = a[k * n + k];
        for r in (k + 1)..n {
            let f = a[r * n + k] / d;
            if f == 0.0 {
                continue;
            }
            for c in k..n {
                a[r * n + c] -= f * a[k * n + c];
            }
            b[r] -= f * b[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in (k + 1)..n {
            s -= a[k * n + c] * b[c];
        }
        b[k] = s / a[k * n + k];
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_triangular_is_exact() {
        // unit lower-triangular: determinant exactly one
        let mut a = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -0.35, 0.15, 1.0];
        assert_eq!(det(3, &mut a), 1.0);
    }

    #[test]
    fn det_singular() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        assert_eq!(det(2, &mut a), 0.0);
    }

    #[test]
    fn rank_detects_deficiency() {
        let mut a = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        assert_eq!(rank(2, 3, &mut a, 1e-12), 2);
        let mut b = vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        assert_eq!(rank(3, 2, &mut b, 1e-12), 1);
    }

    #[test]
    fn solve_small_system() {
        let mut a = vec![2.0, 1.0, 1.0, 3.0];
        let mut b = vec![5.0, 10.0];
        solve(2, &mut a, &mut b).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 3.0).abs() < 1e-12);
    }
}
