//! Small dense routines on row-major `k × k` slices.
//!
//! The Gibbs sweep evaluates thousands of tiny symmetric matrices per
//! iteration; these avoid an allocation per matrix operation.

/// Relative tolerance on the eigenvector change for power iteration.
pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERATIONS: usize = 1000;

/// Largest eigenvalue of a symmetric positive-semidefinite matrix by power
/// iteration from the normalized all-ones vector. If that start lies in the
/// null space, the basis vector of the largest diagonal entry is used next.
pub fn largest_eigenvalue(k: usize, a: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), k * k);
    if k == 0 {
        return 0.0;
    }
    if k == 1 {
        return a[0].max(0.0);
    }
    let ones = vec![1.0 / (k as f64).sqrt(); k];
    if let Some(l) = power_from(k, a, ones) {
        return l;
    }
    let jmax = (0..k).max_by(|&i, &j| a[i * k + i].total_cmp(&a[j * k + j])).unwrap_or(0);
    let mut e = vec![0.0; k];
    e[jmax] = 1.0;
    power_from(k, a, e).unwrap_or(0.0)
}

fn power_from(k: usize, a: &[f64], mut v: Vec<f64>) -> Option<f64> {
    let mut w = vec![0.0; k];
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERATIONS {
        mat_vec(k, a, &v, &mut w);
        lambda = dot(&v, &w);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        let mut change = 0.0;
        for i in 0..k {
            let next = w[i] / norm;
            change += (next - v[i]).powi(2);
            v[i] = next;
        }
        if change.sqrt() < POWER_TOLERANCE {
            mat_vec(k, a, &v, &mut w);
            return Some(dot(&v, &w));
        }
    }
    Some(lambda)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mat_vec(k: usize, a: &[f64], x: &[f64], out: &mut [f64]) {
    for i in 0..k {
        out[i] = dot(&a[i * k..(i + 1) * k], x);
    }
}

/// `xᵀ A x`.
pub fn quad_form(k: usize, a: &[f64], x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..k {
        s += x[i] * dot(&a[i * k..(i + 1) * k], x);
    }
    s
}

/// Lower Cholesky factor written into `l`; `None` if not positive definite.
pub fn cholesky_into(k: usize, a: &[f64], l: &mut [f64]) -> Option<()> {
    l.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..k {
        let mut d = a[j * k + j];
        for m in 0..j {
            d -= l[j * k + m] * l[j * k + m];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[j * k + j] = djj;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for m in 0..j {
                s -= l[i * k + m] * l[j * k + m];
            }
            l[i * k + j] = s / djj;
        }
    }
    Some(())
}

pub fn cholesky(k: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    cholesky_into(k, a, &mut l).map(|_| l)
}

/// `log det A` from its Cholesky factor.
pub fn chol_logdet(k: usize, l: &[f64]) -> f64 {
    2.0 * (0..k).map(|i| l[i * k + i].ln()).sum::<f64>()
}

/// Solves `L z = b` in place.
pub fn forward_solve(k: usize, l: &[f64], b: &mut [f64]) {
    for i in 0..k {
        let mut s = b[i];
        for m in 0..i {
            s -= l[i * k + m] * b[m];
        }
        b[i] = s / l[i * k + i];
    }
}

/// Solves `Lᵀ z = b` in place.
pub fn backward_solve(k: usize, l: &[f64], b: &mut [f64]) {
    for i in (0..k).rev() {
        let mut s = b[i];
        for m in i + 1..k {
            s -= l[m * k + i] * b[m];
        }
        b[i] = s / l[i * k + i];
    }
}

/// Solves `A x = b` given the Cholesky factor of `A`.
pub fn chol_solve(k: usize, l: &[f64], b: &mut [f64]) {
    forward_solve(k, l, b);
    backward_solve(k, l, b);
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn power_iteration_matches_symmetric_eigen() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0];
        let m = DMatrix::from_row_slice(3, 3, &a);
        let exact = m.symmetric_eigen().eigenvalues.max();
        assert!((largest_eigenvalue(3, &a) - exact).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_survives_null_start() {
        // ones is in the null space of this matrix
        let a = [1.0, -1.0, -1.0, 1.0];
        assert!((largest_eigenvalue(2, &a) - 2.0).abs() < 1e-12);
        assert_eq!(largest_eigenvalue(2, &[0.0; 4]), 0.0);
    }

    #[test]
    fn cholesky_solve_and_logdet() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let l = cholesky(2, &a).unwrap();
        assert!((chol_logdet(2, &l) - 8.0f64.ln()).abs() < 1e-14);
        let mut b = [2.0, 1.0];
        chol_solve(2, &l, &mut b);
        // A x = b  =>  x = (0.5, 0)
        assert!((b[0] - 0.5).abs() < 1e-14 && b[1].abs() < 1e-14);
        assert!(cholesky(2, &[1.0, 2.0, 2.0, 1.0]).is_none());
        assert!((quad_form(2, &a, &[1.0, 1.0]) - 11.0).abs() < 1e-14);
    }
}
