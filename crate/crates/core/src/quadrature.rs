//! Gauss-Legendre rules, composite panels, and an adaptive Gauss-Kronrod
//! integrator used where the integrand has a known analytic tail.

use std::f64::consts::PI;

/// A Gauss-Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on P_n.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Tricomi initial guess, then Newton.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_and_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_and_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule over the given breakpoints.
    pub fn integrate_composite<F: FnMut(f64) -> f64>(&self, breaks: &[f64], mut f: F) -> f64 {
        breaks.windows(2).map(|ab| self.integrate(ab[0], ab[1], &mut f)).sum()
    }
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = if n == 0 {
        0.0
    } else {
        n as f64 * (x * p1 - p0) / (x * x - 1.0)
    };
    (p, d)
}

/// Barycentric weights for interpolation through `nodes`.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![1.0; n];
    for j in 0..n {
        for k in 0..n {
            if k != j {
                w[j] /= nodes[j] - nodes[k];
            }
        }
    }
    // Rescale for conditioning; interpolation is invariant under it.
    let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    w.iter_mut().for_each(|v| *v /= scale);
    w
}

/// Evaluates the interpolant through (nodes, values) at x.
pub fn barycentric_eval(nodes: &[f64], bary: &[f64], values: &[f64], x: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&xj, &wj), &fj) in nodes.iter().zip(bary).zip(values) {
        let dx = x - xj;
        if dx == 0.0 {
            return fj;
        }
        let t = wj / dx;
        num += t * fj;
        den += t;
    }
    num / den
}

/// Spectral differentiation matrix for the interpolant through `nodes`
/// (row-major, `D[i*n + j]`).
pub fn differentiation_matrix(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let bary = barycentric_weights(nodes);
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = bary[j] / bary[i] / (nodes[i] - nodes[j]);
                d[i * n + j] = v;
                diag -= v;
            }
        }
        d[i * n + i] = diag;
    }
    d
}

/// Row of interpolation/derivative coefficients at an arbitrary point `x`:
/// returns (c, c') such that f(x) ≈ Σ c_j f_j and f'(x) ≈ Σ c'_j f_j.
pub fn lagrange_row(nodes: &[f64], bary: &[f64], x: f64) -> (Vec<f64>, Vec<f64>) {
    let n = nodes.len();
    if let Some(k) = nodes.iter().position(|&xj| xj == x) {
        let mut c = vec![0.0; n];
        c[k] = 1.0;
        let dm = differentiation_matrix(nodes);
        return (c, dm[k * n..(k + 1) * n].to_vec());
    }
    let t: Vec<f64> = nodes.iter().zip(bary).map(|(&xj, &wj)| wj / (x - xj)).collect();
    let s: f64 = t.iter().sum();
    let c: Vec<f64> = t.iter().map(|v| v / s).collect();
    // derivative of the barycentric form
    let s1: f64 = nodes.iter().zip(&t).map(|(&xj, &tj)| tj / (x - xj)).sum();
    let dc: Vec<f64> = nodes
        .iter()
        .zip(&c)
        .map(|(&xj, &cj)| cj * (s1 / s - 1.0 / (x - xj)))
        .collect();
    (c, dc)
}

// Gauss-Kronrod 7/15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        rk += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            rg += WG[j / 2] * (f1 + f2);
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature on [a, b] with a global tolerance.
pub fn adaptive_gk<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> (f64, f64) {
    let (r0, e0) = gk15(&mut f, a, b);
    let mut intervals = vec![(a, b, r0, e0)];
    loop {
        let total: f64 = intervals.iter().map(|iv| iv.2).sum();
        let err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || intervals.len() >= max_intervals {
            return (total, err);
        }
        let (k, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty interval list");
        let (lo, hi, _, _) = intervals.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        let (r1, e1) = gk15(&mut f, lo, mid);
        let (r2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, r1, e1));
        intervals.push((mid, hi, r2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 12, 33, 64] {
            let gl = GaussLegendre::new(n);
            let s: f64 = gl.weights.iter().sum();
            assert_relative_eq!(s, 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let gl = GaussLegendre::new(6);
        for k in 0..12 {
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            let got = gl.integrate(-1.0, 1.0, |x| x.powi(k));
            assert!((got - exact).abs() < 1e-14, "degree {k}: {got} vs {exact}");
        }
    }

    #[test]
    fn composite_exponential() {
        let gl = GaussLegendre::new(10);
        let breaks: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let got = gl.integrate_composite(&breaks, |x| (-x).exp());
        assert_relative_eq!(got, 1.0 - (-10.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn differentiation_matrix_is_exact_on_polynomials() {
        let gl = GaussLegendre::new(8);
        let d = differentiation_matrix(&gl.nodes);
        let f: Vec<f64> = gl.nodes.iter().map(|x| x.powi(5) - 2.0 * x).collect();
        for i in 0..8 {
            let df: f64 = (0..8).map(|j| d[i * 8 + j] * f[j]).sum();
            let x = gl.nodes[i];
            assert!((df - (5.0 * x.powi(4) - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn lagrange_row_matches_derivative() {
        let gl = GaussLegendre::new(16);
        let bary = barycentric_weights(&gl.nodes);
        let f: Vec<f64> = gl.nodes.iter().map(|x| (2.0 * x).sin()).collect();
        for &x in &[-1.0, -0.3, 0.11, 0.97, 1.0] {
            let (c, dc) = lagrange_row(&gl.nodes, &bary, x);
            let v: f64 = c.iter().zip(&f).map(|(a, b)| a * b).sum();
            let dv: f64 = dc.iter().zip(&f).map(|(a, b)| a * b).sum();
            assert!((v - (2.0 * x).sin()).abs() < 1e-9);
            assert!((dv - 2.0 * (2.0 * x).cos()).abs() < 1e-7);
        }
    }

    #[test]
    fn adaptive_handles_sharp_peak() {
        let (v, _) = adaptive_gk(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-13, 1e-13, 2000);
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert_relative_eq!(v, exact, epsilon = 1e-11);
    }
}
