//! Radial grids in geodesic radius, profiles living on them, and the
//! axisymmetric (ρ, θ) tensor grid used for translated bubbles.

use crate::error::{Error, Result};
use crate::geometry::sphere_area;
use crate::quadrature::{barycentric_eval, barycentric_weights, differentiation_matrix, GaussLegendre};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// How the nodes of a [`RadialGrid`] are laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layout {
    /// Composite Gauss-Legendre panels. Nodes are `0`, the panel nodes in
    /// order, then `rho_max`; the two end nodes carry zero weight.
    Panels { edges: Vec<f64>, order: usize },
    /// Equispaced nodes with control-volume weights.
    Uniform { h: f64 },
    /// Nodes ρ(ξ_i) for equispaced ξ_i = i·h under the stretching
    /// ρ(ξ) = ξ − (1 − r0)·w·tanh(ξ/w); spacing is r0·h near 0 and h far out.
    Graded { h: f64, r0: f64, w: f64 },
}

/// Nodes in geodesic radius with sinh^{n-1}-weighted quadrature.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub n: usize,
    pub nodes: Vec<f64>,
    /// Σ w_i f(ρ_i) ≈ ∫_0^{ρ_max} f sinh^{n-1}ρ dρ.
    pub quad_weights: Vec<f64>,
    /// Σ w_i f(ρ_i) ≈ ∫_0^{ρ_max} f dρ.
    pub base_weights: Vec<f64>,
    /// |S^{n-1}|.
    pub omega: f64,
    pub rho_max: f64,
    pub tail_tol: f64,
    pub layout: Layout,
    ref_nodes: Vec<f64>,
    ref_bary: Vec<f64>,
    ref_diff: Vec<f64>,
}

pub const DEFAULT_RHO_MAX: f64 = 30.0;
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;
pub const DEFAULT_PANEL_WIDTH: f64 = 0.25;
pub const DEFAULT_PANEL_ORDER: usize = 12;

fn check_common(n: usize, rho_max: f64, tail_tol: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParams(format!("dimension {n} must be at least 2")));
    }
    if !(rho_max > 0.0) || !rho_max.is_finite() {
        return Err(Error::InvalidParams(format!("rho_max = {rho_max} must be positive")));
    }
    if (-(n as f64 - 1.0) * rho_max).exp() >= tail_tol {
        return Err(Error::InvalidParams(format!(
            "rho_max = {rho_max} too small for tail tolerance {tail_tol:e}"
        )));
    }
    Ok(())
}

impl RadialGrid {
    /// Composite Gauss-Legendre grid with panels of roughly `width`.
    pub fn panels(n: usize, rho_max: f64, width: f64, order: usize) -> Result<Self> {
        Self::panels_with_tol(n, rho_max, width, order, DEFAULT_TAIL_TOL)
    }

    pub fn panels_with_tol(n: usize, rho_max: f64, width: f64, order: usize, tail_tol: f64) -> Result<Self> {
        check_common(n, rho_max, tail_tol)?;
        if !(width > 0.0) || order < 2 {
            return Err(Error::InvalidParams("panel width and order must be positive".into()));
        }
        let count = (rho_max / width).ceil().max(1.0) as usize;
        let edges: Vec<f64> = (0..=count).map(|k| rho_max * k as f64 / count as f64).collect();
        Self::from_edges(n, edges, order, tail_tol)
    }

    /// Panel grid over explicit breakpoints.
    pub fn from_edges(n: usize, edges: Vec<f64>, order: usize, tail_tol: f64) -> Result<Self> {
        let rho_max = *edges.last().ok_or_else(|| Error::InvalidParams("no edges".into()))?;
        check_common(n, rho_max, tail_tol)?;
        if edges[0] != 0.0 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams("panel edges must start at 0 and increase".into()));
        }
        let gl = GaussLegendre::new(order);
        let mut nodes = vec![0.0];
        let mut base = vec![0.0];
        for w in edges.windows(2) {
            for (x, wt) in gl.mapped(w[0], w[1]) {
                nodes.push(x);
                base.push(wt);
            }
        }
        nodes.push(rho_max);
        base.push(0.0);
        let quad = nodes
            .iter()
            .zip(&base)
            .map(|(r, w)| w * r.sinh().powi(n as i32 - 1))
            .collect();
        let ref_bary = barycentric_weights(&gl.nodes);
        let ref_diff = differentiation_matrix(&gl.nodes);
        Ok(Self {
            n,
            nodes,
            quad_weights: quad,
            base_weights: base,
            omega: sphere_area(n - 1),
            rho_max,
            tail_tol,
            layout: Layout::Panels { edges, order },
            ref_nodes: gl.nodes,
            ref_bary,
            ref_diff,
        })
    }

    /// Default panel grid for dimension `n` on [0, rho_max].
    pub fn default_panels(n: usize, rho_max: f64) -> Result<Self> {
        Self::panels(n, rho_max, DEFAULT_PANEL_WIDTH, DEFAULT_PANEL_ORDER)
    }

    /// Equispaced grid with exact control-volume masses.
    pub fn uniform(n: usize, rho_max: f64, h: f64) -> Result<Self> {
        check_common(n, rho_max, DEFAULT_TAIL_TOL)?;
        if !(h > 0.0) || h >= rho_max {
            return Err(Error::InvalidParams(format!("bad spacing h = {h}")));
        }
        let m = (rho_max / h).round() as usize;
        let h = rho_max / m as f64;
        let nodes: Vec<f64> = (0..=m).map(|i| i as f64 * h).collect();
        Ok(Self::nodal(n, nodes, Layout::Uniform { h }))
    }

    /// Graded grid: spacing ≈ r0·h for ρ ≲ w, relaxing smoothly to h.
    pub fn graded(n: usize, rho_max: f64, h: f64, r0: f64, w: f64) -> Result<Self> {
        check_common(n, rho_max, DEFAULT_TAIL_TOL)?;
        if !(h > 0.0) || h >= rho_max || !(r0 > 0.0 && r0 <= 1.0) || !(w > 0.0) {
            return Err(Error::InvalidParams(format!(
                "bad graded grid h = {h}, r0 = {r0}, w = {w}"
            )));
        }
        let map = |x: f64| x - (1.0 - r0) * w * (x / w).tanh();
        // ρ(ξ) is increasing and convex-ish; Newton from the far-field guess
        let mut xm = rho_max + (1.0 - r0) * w;
        for _ in 0..60 {
            let t = (xm / w).tanh();
            let f = map(xm) - rho_max;
            let df = 1.0 - (1.0 - r0) * (1.0 - t * t);
            let step = f / df;
            xm -= step;
            if step.abs() < 1e-15 * xm {
                break;
            }
        }
        let m = (xm / h).round().max(4.0) as usize;
        let h = xm / m as f64;
        let mut nodes: Vec<f64> = (0..=m).map(|i| map(i as f64 * h)).collect();
        nodes[m] = rho_max;
        Ok(Self::nodal(n, nodes, Layout::Graded { h, r0, w }))
    }

    /// Node-based grid whose control volumes end at the midpoints.
    fn nodal(n: usize, nodes: Vec<f64>, layout: Layout) -> Self {
        let m = nodes.len() - 1;
        let gl = GaussLegendre::new(8);
        let k = n as i32 - 1;
        let mut quad = Vec::with_capacity(m + 1);
        let mut base = Vec::with_capacity(m + 1);
        for i in 0..=m {
            let a = if i == 0 { 0.0 } else { 0.5 * (nodes[i - 1] + nodes[i]) };
            let b = if i == m {
                nodes[m]
            } else {
                0.5 * (nodes[i] + nodes[i + 1])
            };
            quad.push(gl.integrate(a, b, |s| s.sinh().powi(k)));
            base.push(b - a);
        }
        Self {
            n,
            rho_max: nodes[m],
            nodes,
            quad_weights: quad,
            base_weights: base,
            omega: sphere_area(n - 1),
            tail_tol: DEFAULT_TAIL_TOL,
            layout,
            ref_nodes: Vec::new(),
            ref_bary: Vec::new(),
            ref_diff: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> Option<f64> {
        match self.layout {
            Layout::Uniform { h } => Some(h),
            _ => None,
        }
    }

    /// Same layout kind with half the spacing (panels: half the width).
    pub fn refined(&self) -> Result<Self> {
        match &self.layout {
            Layout::Uniform { h } => Self::uniform(self.n, self.rho_max, 0.5 * h),
            Layout::Graded { h, r0, w } => Self::graded(self.n, self.rho_max, 0.5 * h, *r0, *w),
            Layout::Panels { edges, order } => {
                let mut e = Vec::with_capacity(2 * edges.len());
                for w in edges.windows(2) {
                    e.push(w[0]);
                    e.push(0.5 * (w[0] + w[1]));
                }
                e.push(self.rho_max);
                Self::from_edges(self.n, e, *order, self.tail_tol)
            }
        }
    }

    /// Σ w_i f_i times ω_{n-1}.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        self.omega * self.quad_weights.iter().zip(f).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Node values of sinh^k ρ.
    pub fn sinh_pow(&self, k: i32) -> Vec<f64> {
        self.nodes.iter().map(|r| r.sinh().powi(k)).collect()
    }

    fn panel_edges(&self) -> Option<(&[f64], usize)> {
        match &self.layout {
            Layout::Panels { edges, order } => Some((edges, *order)),
            _ => None,
        }
    }

    /// Index of the panel containing x (clamped).
    fn panel_of(&self, edges: &[f64], x: f64) -> usize {
        let k = edges.partition_point(|&e| e <= x);
        k.saturating_sub(1).min(edges.len() - 2)
    }

    /// First derivative at every node.
    pub fn derivative(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.len());
        match self.panel_edges() {
            Some((edges, q)) => {
                let mut out = vec![0.0; f.len()];
                for (k, w) in edges.windows(2).enumerate() {
                    let scale = 2.0 / (w[1] - w[0]);
                    let vals = &f[1 + k * q..1 + (k + 1) * q];
                    for i in 0..q {
                        let row = &self.ref_diff[i * q..(i + 1) * q];
                        out[1 + k * q + i] = scale * row.iter().zip(vals).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                out[0] = self.interpolate_with_derivative(f, 0.0).1;
                let last = f.len() - 1;
                out[last] = self.interpolate_with_derivative(f, self.rho_max).1;
                out
            }
            None if self.spacing().is_none() => nonuniform_derivative(&self.nodes, f),
            None => {
                let h = self.spacing().expect("uniform grid");
                let m = f.len() - 1;
                let mut out = vec![0.0; f.len()];
                for i in 1..m {
                    out[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
                }
                out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
                out[m] = (3.0 * f[m] - 4.0 * f[m - 1] + f[m - 2]) / (2.0 * h);
                out
            }
        }
    }

    /// Second derivative at every node.
    pub fn second_derivative(&self, f: &[f64]) -> Vec<f64> {
        match self.panel_edges() {
            Some(_) => {
                let d = self.derivative(f);
                let mut dd = self.derivative(&d);
                // the end nodes sit outside the panel node sets; re-evaluate
                // from the panel interpolant of f'
                dd[0] = self.interpolate_with_derivative(&d, 0.0).1;
                dd
            }
            None if self.spacing().is_none() => nonuniform_second_derivative(&self.nodes, f),
            None => {
                let h = self.spacing().expect("uniform grid");
                let m = f.len() - 1;
                let mut out = vec![0.0; f.len()];
                for i in 1..m {
                    out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (h * h);
                }
                out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (h * h);
                out[m] = (2.0 * f[m] - 5.0 * f[m - 1] + 4.0 * f[m - 2] - f[m - 3]) / (h * h);
                out
            }
        }
    }

    /// Interpolated value at x ∈ [0, ρ_max].
    pub fn interpolate(&self, f: &[f64], x: f64) -> f64 {
        self.interpolate_with_derivative(f, x).0
    }

    /// Interpolated value and derivative at x ∈ [0, ρ_max].
    pub fn interpolate_with_derivative(&self, f: &[f64], x: f64) -> (f64, f64) {
        match self.panel_edges() {
            Some((edges, q)) => {
                let k = self.panel_of(edges, x);
                let (a, b) = (edges[k], edges[k + 1]);
                let t = (2.0 * x - a - b) / (b - a);
                let vals = &f[1 + k * q..1 + (k + 1) * q];
                let (v, dv) = bary_value_and_derivative(&self.ref_nodes, &self.ref_bary, &self.ref_diff, vals, t);
                (v, dv * 2.0 / (b - a))
            }
            None if self.spacing().is_none() => {
                let m = f.len() - 1;
                let i = self.nodes.partition_point(|&r| r <= x).saturating_sub(1);
                let i = i.clamp(1, m - 2);
                lagrange4(&self.nodes[i - 1..i + 3], &f[i - 1..i + 3], x)
            }
            None => {
                let h = self.spacing().expect("uniform grid");
                let m = f.len() - 1;
                let i = ((x / h).floor() as isize).clamp(1, m as isize - 2) as usize;
                // cubic through nodes i-1..=i+2
                let t = x / h - i as f64;
                let (y0, y1, y2, y3) = (f[i - 1], f[i], f[i + 1], f[i + 2]);
                let l0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
                let l1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
                let l2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
                let l3 = (t + 1.0) * t * (t - 1.0) / 6.0;
                let d0 = -(3.0 * t * t - 6.0 * t + 2.0) / 6.0;
                let d1 = (3.0 * t * t - 4.0 * t - 1.0) / 2.0;
                let d2 = -(3.0 * t * t - 2.0 * t - 2.0) / 2.0;
                let d3 = (3.0 * t * t - 1.0) / 6.0;
                (
                    y0 * l0 + y1 * l1 + y2 * l2 + y3 * l3,
                    (y0 * d0 + y1 * d1 + y2 * d2 + y3 * d3) / h,
                )
            }
        }
    }

    /// Interior Gauss nodes of a panel grid (drops the zero-weight ends).
    pub fn gauss_indices(&self) -> std::ops::Range<usize> {
        match self.layout {
            Layout::Panels { .. } => 1..self.len() - 1,
            Layout::Uniform { .. } | Layout::Graded { .. } => 0..self.len(),
        }
    }
}

/// Three-point first derivative on arbitrary increasing nodes.
fn nonuniform_derivative(x: &[f64], f: &[f64]) -> Vec<f64> {
    let m = f.len() - 1;
    let mut out = vec![0.0; f.len()];
    for i in 1..m {
        let (a, b) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        out[i] = (-b / (a * (a + b))) * f[i - 1] + ((b - a) / (a * b)) * f[i] + (a / (b * (a + b))) * f[i + 1];
    }
    let (a, b) = (x[1] - x[0], x[2] - x[1]);
    out[0] = -(2.0 * a + b) / (a * (a + b)) * f[0] + (a + b) / (a * b) * f[1] - a / (b * (a + b)) * f[2];
    let (a, b) = (x[m] - x[m - 1], x[m - 1] - x[m - 2]);
    out[m] = (2.0 * a + b) / (a * (a + b)) * f[m] - (a + b) / (a * b) * f[m - 1] + a / (b * (a + b)) * f[m - 2];
    out
}

fn nonuniform_second_derivative(x: &[f64], f: &[f64]) -> Vec<f64> {
    let m = f.len() - 1;
    let mut out = vec![0.0; f.len()];
    for i in 1..m {
        let (a, b) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        out[i] = 2.0 * (f[i - 1] / (a * (a + b)) - f[i] / (a * b) + f[i + 1] / (b * (a + b)));
    }
    // one-sided ends from the cubic through four nodes
    out[0] = cubic_second(&x[0..4], &f[0..4], x[0]);
    out[m] = cubic_second(&x[m - 3..=m], &f[m - 3..=m], x[m]);
    out
}

fn cubic_second(xs: &[f64], fs: &[f64], t: f64) -> f64 {
    let mut s = 0.0;
    for j in 0..4 {
        let mut den = 1.0;
        for k in 0..4 {
            if k != j {
                den *= xs[j] - xs[k];
            }
        }
        // second derivative of Π_{k≠j}(t − x_k)
        let others: Vec<f64> = (0..4).filter(|&k| k != j).map(|k| t - xs[k]).collect();
        let d2 = 2.0 * (others[0] + others[1] + others[2]);
        s += fs[j] * d2 / den;
    }
    s
}

/// Cubic Lagrange value and derivative through four nodes.
fn lagrange4(xs: &[f64], fs: &[f64], t: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut dv = 0.0;
    for j in 0..4 {
        let mut den = 1.0;
        let mut num = 1.0;
        let mut dnum = 0.0;
        for k in 0..4 {
            if k != j {
                den *= xs[j] - xs[k];
                dnum = dnum * (t - xs[k]) + num;
                num *= t - xs[k];
            }
        }
        v += fs[j] * num / den;
        dv += fs[j] * dnum / den;
    }
    (v, dv)
}

/// Value and t-derivative of the polynomial interpolant at t. The
/// derivative interpolates the differentiated nodal values, which stays
/// accurate when t is within roundoff of a node.
fn bary_value_and_derivative(nodes: &[f64], bary: &[f64], diff: &[f64], vals: &[f64], t: f64) -> (f64, f64) {
    let q = nodes.len();
    let dvals: Vec<f64> = (0..q)
        .map(|i| diff[i * q..(i + 1) * q].iter().zip(vals).map(|(a, b)| a * b).sum())
        .collect();
    (
        barycentric_eval(nodes, bary, vals, t),
        barycentric_eval(nodes, bary, &dvals, t),
    )
}

/// Exponential continuation A e^{-κ ρ} used beyond `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tail {
    pub exponent: f64,
    pub amplitude: f64,
    pub start: f64,
}

impl Tail {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (-self.exponent * x).exp()
    }
}

/// A function of ρ in one spherical-harmonic sector.
#[derive(Debug, Clone)]
pub struct Profile {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<f64>,
    pub l: usize,
    pub tail: Option<Tail>,
}

impl Profile {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>, l: usize) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Input(format!(
                "profile has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            l,
            tail: None,
        })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Arc<RadialGrid>, l: usize, f: F) -> Self {
        let values = grid.nodes.iter().map(|&r| f(r)).collect();
        Self {
            grid,
            values,
            l,
            tail: None,
        }
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// Value at any ρ ≥ 0, using the tail beyond its start or beyond ρ_max.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        if let Some(t) = &self.tail {
            if x >= t.start {
                let v = t.eval(x);
                return (v, -t.exponent * v);
            }
        }
        if x > self.grid.rho_max {
            return (0.0, 0.0);
        }
        self.grid.interpolate_with_derivative(&self.values, x)
    }

    pub fn derivative(&self) -> Vec<f64> {
        self.grid.derivative(&self.values)
    }

    pub fn scaled(&self, c: f64) -> Profile {
        Profile {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            l: self.l,
            tail: self.tail.map(|t| Tail {
                amplitude: c * t.amplitude,
                ..t
            }),
        }
    }

    /// self + eps·other on a shared grid. The result carries no tail.
    pub fn axpy(&self, eps: f64, other: &Profile) -> Result<Profile> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && self.grid.nodes != other.grid.nodes {
            return Err(Error::Input("profiles live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + eps * b)
            .collect();
        Ok(Profile {
            grid: self.grid.clone(),
            values,
            l: self.l,
            tail: None,
        })
    }

    /// Resamples onto another grid of the same dimension.
    pub fn resample(&self, grid: Arc<RadialGrid>) -> Profile {
        let values = grid.nodes.iter().map(|&r| self.eval(r)).collect();
        Profile {
            grid,
            values,
            l: self.l,
            tail: self.tail,
        }
    }

    /// ω ∫ f sinh^{n-1} over the grid for a pointwise map of the values.
    pub fn integrate_map<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let g: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        self.grid.integrate(&g)
    }

    pub fn l_p_norm_pow(&self, q: f64) -> f64 {
        self.integrate_map(|v| v.abs().powf(q))
    }

    /// Weighted inner product ∫ a b w dv.
    pub fn weighted_dot(&self, other: &Profile, weight: &[f64]) -> f64 {
        let g: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .zip(weight)
            .map(|((a, b), w)| a * b * w)
            .collect();
        self.grid.integrate(&g)
    }
}

/// Tensor grid in (ρ, θ) for functions axisymmetric about the first axis.
#[derive(Debug, Clone)]
pub struct AxisGrid {
    pub n: usize,
    pub radial: Arc<RadialGrid>,
    /// Interior ρ nodes (Gauss nodes of the radial panel grid).
    pub rho: Vec<f64>,
    /// Radial weights with sinh^{n-1} folded in.
    pub w_rho: Vec<f64>,
    pub theta: Vec<f64>,
    /// Angular weights with ω_{n-2} sin^{n-2}θ folded in.
    pub w_theta: Vec<f64>,
    theta_edges: Vec<f64>,
    theta_order: usize,
    theta_diff: Vec<f64>,
}

impl AxisGrid {
    /// `radial` must be a panel grid. θ ∈ [0, π] is split into `theta_panels`
    /// equal panels of `theta_order` Gauss nodes each.
    pub fn new(radial: Arc<RadialGrid>, theta_panels: usize, theta_order: usize) -> Result<Self> {
        if !matches!(radial.layout, Layout::Panels { .. }) {
            return Err(Error::InvalidParams(
                "axisymmetric grid needs a panel radial grid".into(),
            ));
        }
        let n = radial.n;
        if n < 2 {
            return Err(Error::InvalidParams("dimension too small".into()));
        }
        let idx = radial.gauss_indices();
        let rho = radial.nodes[idx.clone()].to_vec();
        let w_rho = radial.quad_weights[idx].to_vec();
        let gl = GaussLegendre::new(theta_order);
        let pi = std::f64::consts::PI;
        let theta_edges: Vec<f64> = (0..=theta_panels)
            .map(|k| pi * k as f64 / theta_panels as f64)
            .collect();
        let om = if n >= 3 { sphere_area(n - 2) } else { 1.0 };
        let mut theta = Vec::new();
        let mut w_theta = Vec::new();
        for w in theta_edges.windows(2) {
            for (x, wt) in gl.mapped(w[0], w[1]) {
                theta.push(x);
                w_theta.push(wt * om * x.sin().powi(n as i32 - 2));
            }
        }
        Ok(Self {
            n,
            radial,
            rho,
            w_rho,
            theta,
            w_theta,
            theta_diff: differentiation_matrix(&gl.nodes),
            theta_edges,
            theta_order,
        })
    }

    pub fn default_for(radial: Arc<RadialGrid>) -> Result<Self> {
        Self::new(radial, 8, 10)
    }

    pub fn n_rho(&self) -> usize {
        self.rho.len()
    }

    pub fn n_theta(&self) -> usize {
        self.theta.len()
    }

    pub fn len(&self) -> usize {
        self.rho.len() * self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Σ w f over the 2D grid (row-major, ρ outer).
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let nt = self.n_theta();
        self.w_rho
            .iter()
            .enumerate()
            .map(|(i, wr)| {
                let row = &f[i * nt..(i + 1) * nt];
                wr * row.iter().zip(&self.w_theta).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum()
    }

    /// Builds a field from a function of (ρ, θ).
    pub fn field<F: Fn(f64, f64) -> f64 + Sync>(self: &Arc<Self>, f: F) -> AxisField {
        use rayon::prelude::*;
        let nt = self.n_theta();
        let values: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|k| f(self.rho[k / nt], self.theta[k % nt]))
            .collect();
        AxisField {
            grid: self.clone(),
            values,
        }
    }

    /// ∂/∂ρ of a field by per-panel spectral differentiation.
    pub fn d_rho(&self, f: &[f64]) -> Vec<f64> {
        let (edges, q) = match &self.radial.layout {
            Layout::Panels { edges, order } => (edges, *order),
            _ => unreachable!("checked at construction"),
        };
        let nt = self.n_theta();
        let d = &self.radial.ref_diff;
        let mut out = vec![0.0; f.len()];
        for (k, w) in edges.windows(2).enumerate() {
            let scale = 2.0 / (w[1] - w[0]);
            for i in 0..q {
                let row = &d[i * q..(i + 1) * q];
                let oi = (k * q + i) * nt;
                for (j, c) in row.iter().enumerate() {
                    let src = (k * q + j) * nt;
                    let c = c * scale;
                    for t in 0..nt {
                        out[oi + t] += c * f[src + t];
                    }
                }
            }
        }
        out
    }

    /// ∂/∂θ of a field by per-panel spectral differentiation.
    pub fn d_theta(&self, f: &[f64]) -> Vec<f64> {
        let q = self.theta_order;
        let nt = self.n_theta();
        let mut out = vec![0.0; f.len()];
        for i in 0..self.n_rho() {
            let row_f = &f[i * nt..(i + 1) * nt];
            let row_o = &mut out[i * nt..(i + 1) * nt];
            for (k, w) in self.theta_edges.windows(2).enumerate() {
                let scale = 2.0 / (w[1] - w[0]);
                for a in 0..q {
                    let drow = &self.theta_diff[a * q..(a + 1) * q];
                    row_o[k * q + a] = scale
                        * drow
                            .iter()
                            .zip(&row_f[k * q..(k + 1) * q])
                            .map(|(c, v)| c * v)
                            .sum::<f64>();
                }
            }
        }
        out
    }
}

/// Values on an [`AxisGrid`].
#[derive(Debug, Clone)]
pub struct AxisField {
    pub grid: Arc<AxisGrid>,
    pub values: Vec<f64>,
}

impl AxisField {
    /// Radial profile viewed as a θ-independent field.
    pub fn from_radial(grid: &Arc<AxisGrid>, p: &Profile) -> AxisField {
        grid.field(|r, _| p.eval(r))
    }

    /// ∫ (|∇u|² − λu²) dv with |∇u|² = u_ρ² + u_θ²/sinh²ρ.
    pub fn lambda_norm_sq(&self, lambda: f64) -> f64 {
        let g = &self.grid;
        let ur = g.d_rho(&self.values);
        let ut = g.d_theta(&self.values);
        let nt = g.n_theta();
        let integrand: Vec<f64> = (0..self.values.len())
            .map(|k| {
                let s = g.rho[k / nt].sinh();
                ur[k] * ur[k] + ut[k] * ut[k] / (s * s) - lambda * self.values[k] * self.values[k]
            })
            .collect();
        g.integrate(&integrand)
    }

    /// ⟨u, v⟩_λ = ∫ (∇u·∇v − λuv) dv.
    pub fn lambda_inner(&self, other: &AxisField, lambda: f64) -> f64 {
        let g = &self.grid;
        let ur = g.d_rho(&self.values);
        let ut = g.d_theta(&self.values);
        let vr = g.d_rho(&other.values);
        let vt = g.d_theta(&other.values);
        let nt = g.n_theta();
        let integrand: Vec<f64> = (0..self.values.len())
            .map(|k| {
                let s = g.rho[k / nt].sinh();
                ur[k] * vr[k] + ut[k] * vt[k] / (s * s) - lambda * self.values[k] * other.values[k]
            })
            .collect();
        g.integrate(&integrand)
    }

    pub fn integrate_map<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let v: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        self.grid.integrate(&v)
    }

    /// ∫ u v dv.
    pub fn dot(&self, other: &AxisField) -> f64 {
        let v: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        self.grid.integrate(&v)
    }

    pub fn axpy(&self, c: f64, other: &AxisField) -> AxisField {
        AxisField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect(),
        }
    }
}
