//! Ball-model primitives: points, distances, Möbius translations, the radial
//! Green's function and radial integration.

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::quadrature::adaptive_gk;
use std::f64::consts::PI;

/// A point strictly inside the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct BallPoint {
    coords: Vec<f64>,
}

impl BallPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Domain("ball point needs at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("ball point has non-finite coordinate".into()));
        }
        let r2 = dot(&coords, &coords);
        if r2 >= 1.0 {
            return Err(Error::Domain(format!(
                "|x| = {} is not inside the unit ball",
                r2.sqrt()
            )));
        }
        Ok(Self { coords })
    }

    pub fn origin(n: usize) -> Self {
        Self { coords: vec![0.0; n] }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.coords, &self.coords)
    }

    pub fn neg(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|c| -c).collect(),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Surface measure of the unit sphere S^m sitting in R^{m+1}.
pub fn sphere_area(m: usize) -> f64 {
    match m {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (m as f64 - 1.0) * sphere_area(m - 2),
    }
}

/// Geodesic distance in the ball model.
pub fn hyperbolic_distance(x: &BallPoint, y: &BallPoint) -> f64 {
    assert_eq!(x.dim(), y.dim(), "points of different dimension");
    let diff2: f64 = x.coords.iter().zip(&y.coords).map(|(a, b)| (a - b) * (a - b)).sum();
    let t = 2.0 * diff2 / ((1.0 - x.norm_sq()) * (1.0 - y.norm_sq()));
    // acosh(1 + t) written to stay accurate for small t
    (t + (t * (t + 2.0)).sqrt()).ln_1p()
}

/// Distance from the origin, log((1+|x|)/(1-|x|)).
pub fn distance_from_origin(x: &BallPoint) -> f64 {
    2.0 * x.norm_sq().sqrt().atanh()
}

/// The Möbius translation τ_b moving the origin to b.
pub fn hyperbolic_translate(b: &BallPoint, x: &BallPoint) -> BallPoint {
    assert_eq!(b.dim(), x.dim(), "points of different dimension");
    let b2 = b.norm_sq();
    let x2 = x.norm_sq();
    let xb = dot(&x.coords, &b.coords);
    let den = b2 * x2 + 2.0 * xb + 1.0;
    assert!(den > 0.0, "translation denominator must be positive");
    let cx = (1.0 - b2) / den;
    let cb = (x2 + 2.0 * xb + 1.0) / den;
    let coords: Vec<f64> = x
        .coords
        .iter()
        .zip(&b.coords)
        .map(|(xi, bi)| cx * xi + cb * bi)
        .collect();
    debug_assert!(dot(&coords, &coords) < 1.0);
    BallPoint { coords }
}

/// Jacobian of x ↦ τ_b(x), row-major `J[i*n + j] = ∂τ_i/∂x_j`.
pub fn translation_jacobian(b: &BallPoint, x: &BallPoint) -> Vec<f64> {
    let n = x.dim();
    let b2 = b.norm_sq();
    let x2 = x.norm_sq();
    let xb = dot(&x.coords, &b.coords);
    let d = b2 * x2 + 2.0 * xb + 1.0;
    let num: Vec<f64> = (0..n)
        .map(|i| (1.0 - b2) * x.coords[i] + (x2 + 2.0 * xb + 1.0) * b.coords[i])
        .collect();
    let mut jac = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let dn = if i == j { 1.0 - b2 } else { 0.0 } + 2.0 * (x.coords[j] + b.coords[j]) * b.coords[i];
            let dd = 2.0 * b2 * x.coords[j] + 2.0 * b.coords[j];
            jac[i * n + j] = (dn * d - num[i] * dd) / (d * d);
        }
    }
    jac
}

/// Hyperbolic law of cosines: the distance between points at radii ρ1, ρ2
/// separated by angle θ.
pub fn geodesic_cosine(rho1: f64, rho2: f64, theta: f64) -> f64 {
    // cosh d - cosh(ρ1-ρ2) = sinh ρ1 sinh ρ2 (1 - cos θ); keeps small d accurate
    let diff = (rho1 - rho2).abs();
    let extra = rho1.sinh() * rho2.sinh() * 2.0 * (0.5 * theta).sin().powi(2);
    if extra <= 0.0 {
        return diff;
    }
    // cosh d = cosh diff + extra; use 2 sinh²(d/2) = 2 sinh²(diff/2) + extra
    let s = (diff * 0.5).sinh();
    let half = (s * s + 0.5 * extra).sqrt();
    2.0 * half.asinh()
}

/// Radial Green's function ∫_r^∞ sinh^{-(n-1)}(s) ds of the hyperbolic Laplacian.
pub fn green_function(n: usize, r: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("dimension {n} too small")));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("Green's function is singular at r = {r}")));
    }
    let k = (n - 1) as i32;
    let e2r = -(-2.0 * r).exp_m1();
    // sinh r / sinh(r+t) = e^{-t} (1 - e^{-2r}) / (1 - e^{-2(r+t)})
    let g = |t: f64| {
        let q = (-t).exp() * e2r / (-(-2.0 * (r + t)).exp_m1());
        q.powi(k)
    };
    let cut = 40.0 / (n as f64 - 1.0);
    // geometric breakpoints resolve the r^{-(n-1)} scale near coincidence
    let mut breaks = vec![0.0];
    let mut b = r.min(1.0) * 0.25;
    while b < cut {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(cut);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += adaptive_gk(g, w[0], w[1], 0.0, 1e-14, 200).0;
    }
    // analytic tail: g(t) → e2r^{n-1} e^{-(n-1)t}
    total += e2r.powi(k) * (-(n as f64 - 1.0) * cut).exp() / (n as f64 - 1.0);
    let sinh_r = r.sinh();
    Ok(total / sinh_r.powi(k))
}

/// Constants of the two asymptotic regimes: G ~ c0 r^{-(n-2)} as r → 0
/// and G ~ c∞ e^{-(n-1) r} as r → ∞.
pub fn green_asymptotic_constants(n: usize) -> (f64, f64) {
    let c0 = if n > 2 { 1.0 / (n as f64 - 2.0) } else { f64::NAN };
    let cinf = 2f64.powi(n as i32 - 1) / (n as f64 - 1.0);
    (c0, cinf)
}

/// ω_{n-1} Σ w_i f_i over a radial grid. Every sector carries the same
/// radial weight, so `l` only documents the caller's intent.
pub fn integrate_radial(grid: &RadialGrid, f: &[f64], _l: usize) -> Result<f64> {
    if f.len() != grid.len() {
        return Err(Error::Input(format!(
            "expected {} node values, got {}",
            grid.len(),
            f.len()
        )));
    }
    Ok(grid.omega * dot(&grid.quad_weights, f))
}
