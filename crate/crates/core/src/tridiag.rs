//! Symmetric tridiagonal matrices: solves, Sturm counts for pencils
//! K − μD with D diagonal positive, and inverse iteration.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix with `diag[i]` and `off[i]` = A[i][i+1].
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::Input("tridiagonal sizes do not match".into()));
        }
        Ok(Self { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// Quadratic form xᵀAx.
    pub fn form(&self, x: &[f64]) -> f64 {
        self.mul(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// (A − shift·D) for diagonal D.
    pub fn shifted(&self, shift: f64, d: &[f64]) -> SymTridiag {
        SymTridiag {
            diag: self.diag.iter().zip(d).map(|(a, m)| a - shift * m).collect(),
            off: self.off.clone(),
        }
    }

    /// Solves A x = b by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if b.len() != n {
            return Err(Error::Input("right-hand side length mismatch".into()));
        }
        if n == 1 {
            if self.diag[0] == 0.0 {
                return Err(Error::SingularOperator("zero pivot in tridiagonal solve".into()));
            }
            return Ok(vec![b[0] / self.diag[0]]);
        }
        // rows hold (sub, diag, sup, sup2) after pivoting
        let mut a: Vec<f64> = vec![0.0; n];
        let mut d = self.diag.clone();
        let mut c: Vec<f64> = self.off.clone();
        c.push(0.0);
        let mut e = vec![0.0; n];
        let mut x = b.to_vec();
        for i in 1..n {
            a[i] = self.off[i - 1];
        }
        let scale = d.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
        for i in 0..n - 1 {
            if a[i + 1].abs() > d[i].abs() {
                // swap rows i and i+1
                std::mem::swap(&mut d[i], &mut a[i + 1]);
                std::mem::swap(&mut c[i], &mut d[i + 1]);
                std::mem::swap(&mut e[i], &mut c[i + 1]);
                x.swap(i, i + 1);
            }
            if d[i].abs() <= 1e-300 * scale {
                return Err(Error::SingularOperator("zero pivot in tridiagonal solve".into()));
            }
            let f = a[i + 1] / d[i];
            d[i + 1] -= f * c[i];
            c[i + 1] -= f * e[i];
            x[i + 1] -= f * x[i];
            a[i + 1] = 0.0;
        }
        if d[n - 1].abs() <= 1e-300 * scale || !d[n - 1].is_finite() {
            return Err(Error::SingularOperator("zero pivot in tridiagonal solve".into()));
        }
        x[n - 1] /= d[n - 1];
        x[n - 2] = (x[n - 2] - c[n - 2] * x[n - 1]) / d[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            x[i] = (x[i] - c[i] * x[i + 1] - e[i] * x[i + 2]) / d[i];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularOperator("zero pivot in tridiagonal solve".into()));
        }
        Ok(x)
    }

    /// Number of eigenvalues of the pencil (A, D) strictly below `mu`, from
    /// the inertia of the LDLᵀ factorization of A − μD.
    pub fn count_below(&self, mu: f64, d: &[f64]) -> usize {
        let n = self.len();
        let mut count = 0;
        let mut piv = 0.0;
        for i in 0..n {
            let mut t = self.diag[i] - mu * d[i];
            if i > 0 {
                t -= self.off[i - 1] * self.off[i - 1] / piv;
            }
            if t == 0.0 {
                // nudge off an exact zero pivot
                t = -f64::EPSILON * (self.diag[i].abs() + mu.abs() * d[i]).max(f64::MIN_POSITIVE);
            }
            if t < 0.0 {
                count += 1;
            }
            piv = t;
        }
        count
    }
}

/// The k-th (0-based) eigenvalue of the symmetric-definite pencil (A, D) by
/// bisection on Sturm counts, within [lo, hi].
pub fn pencil_eigenvalue(a: &SymTridiag, d: &[f64], k: usize, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    if a.count_below(lo, d) > k || a.count_below(hi, d) <= k {
        return Err(Error::IterationLimit("eigenvalue not bracketed"));
    }
    for _ in 0..200 {
        if hi - lo <= tol * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if a.count_below(mid, d) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Eigenvector of (A, D) for an accurate eigenvalue estimate `mu` by
/// inverse iteration. Returned D-normalised (xᵀDx = 1) with positive sum.
pub fn inverse_iteration(a: &SymTridiag, d: &[f64], mu: f64) -> Result<Vec<f64>> {
    let n = a.len();
    // shift slightly so the factorization is nonsingular
    let sigma = mu * (1.0 + 1e-13) + 1e-300;
    let shifted = a.shifted(sigma, d);
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7 % 13) as f64)).collect();
    let mut prev_q = f64::NAN;
    for _ in 0..8 {
        let rhs: Vec<f64> = x.iter().zip(d).map(|(v, m)| v * m).collect();
        let mut y = shifted.solve(&rhs)?;
        let norm = y.iter().zip(d).map(|(v, m)| v * v * m).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::SingularOperator("zero pivot in tridiagonal solve".into()));
        }
        y.iter_mut().for_each(|v| *v /= norm);
        x = y;
        let q = a.form(&x);
        if (q - prev_q).abs() <= 1e-14 * q.abs() {
            break;
        }
        prev_q = q;
    }
    // sign convention: largest-magnitude entry positive
    let big = x
        .iter()
        .copied()
        .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    if big < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplacian(n: usize) -> SymTridiag {
        SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap()
    }

    #[test]
    fn dirichlet_laplacian_eigenvalues() {
        let n = 50;
        let a = laplacian(n);
        let d = vec![1.0; n];
        for k in 0..5 {
            let exact = 4.0
                * ((k + 1) as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64))
                    .sin()
                    .powi(2);
            let mu = pencil_eigenvalue(&a, &d, k, 0.0, 4.0, 1e-15).unwrap();
            assert!((mu - exact).abs() < 1e-13, "{k}: {mu} vs {exact}");
            let v = inverse_iteration(&a, &d, mu).unwrap();
            let r: f64 = a
                .mul(&v)
                .iter()
                .zip(&v)
                .map(|(x, y)| (x - mu * y).abs())
                .fold(0.0, f64::max);
            assert!(r < 1e-10);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = SymTridiag::new(vec![1.0, 1.0], vec![1.0]).unwrap();
        assert!(matches!(a.solve(&[1.0, 2.0]), Err(Error::SingularOperator(_))));
    }

    #[test]
    fn zero_leading_pivot_needs_pivoting() {
        let a = SymTridiag::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0]).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = a.solve(&b).unwrap();
        let r = a.mul(&x);
        for (u, v) in r.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn solve_roundtrip(diag in prop::collection::vec(-5.0f64..5.0, 2..40), seed in 0u64..1000) {
            let n = diag.len();
            let off: Vec<f64> = (0..n - 1).map(|i| ((i as u64 * 31 + seed) % 17) as f64 / 4.0 - 2.0).collect();
            let a = SymTridiag::new(diag.iter().map(|d| d + 12.0).collect(), off).unwrap();
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let x = a.solve(&b).unwrap();
            let r = a.mul(&x);
            for (u, v) in r.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-11);
            }
        }

        #[test]
        fn sturm_count_is_monotone(m in prop::collection::vec(0.1f64..3.0, 5..30), a in -2.0f64..6.0, b in -2.0f64..6.0) {
            let n = m.len();
            let t = laplacian(n);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(t.count_below(lo, &m) <= t.count_below(hi, &m));
        }
    }
}
