//! Hardy-Sobolev-Maz'ya problem on R^k × R^h and its lifting to the
//! upper half-space model of H^n, n = h + 1.
//!
//! Functions are cylindrically symmetric: they depend on r = |y| and
//! ζ = |z − z₀|. A half-space point is (r, z) with r > 0 the vertical
//! coordinate and z ∈ R^h, and half-space functions are radial in z as
//! well. Both kinds are given as samplers returning (value, ∂_r, ∂_ζ).
//!
//! Integrals use tensor Gauss-Legendre in (s, u) = (ln r, asinh ζ). The
//! log variable resolves the 1/|y|² weight and asinh reaches the far field
//! in z, where bubbles decay only like a power of ζ.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::GroundState;
use crate::geometry::sphere_area;
use crate::params::ModelParams;
use crate::quadrature::GaussLegendre;
use crate::stability::{distance_to_manifold_axis, Projection};

/// Relative tolerance between the two deficit routes.
pub const ROUTE_TOL: f64 = 1e-4;

/// Parameter dictionary between the cylindrical problem and the
/// Poincaré-Sobolev problem on H^n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylParams {
    #[serde(rename = "N")]
    pub big_n: usize,
    pub k: usize,
    pub h: usize,
    pub mu: f64,
    pub p: f64,
    pub t: f64,
    pub n: usize,
    pub lambda: f64,
    pub omega_k: f64,
}

impl CylParams {
    pub fn new(big_n: usize, k: usize, mu: f64, p: f64) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if big_n < 5 {
            return bad(format!("N = {big_n} must be at least 5"));
        }
        if k < 3 || k >= big_n {
            return bad(format!("k = {k} must satisfy 3 <= k < N"));
        }
        let h = big_n - k;
        if h < 2 {
            return bad(format!("h = N - k = {h} must be at least 2"));
        }
        let hardy = ((k - 2) * (k - 2)) as f64 / 4.0;
        if !mu.is_finite() || mu < 0.0 || mu >= hardy {
            return bad(format!("mu = {mu} outside [0, {hardy})"));
        }
        let nf = big_n as f64;
        let pc = (nf + 2.0) / (nf - 2.0);
        if !p.is_finite() || p <= 1.0 || p > pc * (1.0 + 1e-14) {
            return bad(format!("p = {p} outside (1, {pc}]"));
        }
        let t = (nf - (nf - 2.0) * (p + 1.0) / 2.0).max(0.0);
        let n = h + 1;
        let lambda = mu + ((h * h) as f64 - ((k - 2) * (k - 2)) as f64) / 4.0;
        let bottom = (h * h) as f64 / 4.0;
        if lambda >= bottom {
            return Err(Error::InvalidParams(format!(
                "lambda = {lambda} not below (n-1)^2/4 = {bottom}"
            )));
        }
        let m = n as f64;
        if p >= (m + 2.0) / (m - 2.0) {
            return Err(Error::InvalidParams(format!(
                "p = {p} not subcritical in dimension n = {n}"
            )));
        }
        Ok(Self {
            big_n,
            k,
            h,
            mu,
            p,
            t,
            n,
            lambda,
            omega_k: sphere_area(k - 1),
        })
    }

    /// Exponent a of the lifting φ = r^a v.
    pub fn lift_exponent(&self) -> f64 {
        (self.big_n as f64 - 2.0) / 2.0
    }

    /// (h² − (k−2)²)/4, the zeroth-order term picked up by the gradient.
    pub fn shift(&self) -> f64 {
        ((self.h * self.h) as f64 - ((self.k - 2) * (self.k - 2)) as f64) / 4.0
    }

    pub fn model(&self) -> Result<ModelParams> {
        ModelParams::new(self.n, self.p, self.lambda)
    }

    /// S(N, k, p, μ) from the hyperbolic constant: ω_k^{(p−1)/(p+1)} S_{n,p,λ}.
    pub fn hsm_constant(&self, s_hyp: f64) -> f64 {
        self.omega_k.powf((self.p - 1.0) / (self.p + 1.0)) * s_hyp
    }
}

/// Sampler returning (value, ∂_r, ∂_ζ) at (r, ζ).
pub type Sampler = Arc<dyn Fn(f64, f64) -> [f64; 3] + Send + Sync>;

/// Cylindrically symmetric function v(|y|, |z − z₀|) on R^k × R^h.
#[derive(Clone)]
pub struct CylFunction {
    f: Sampler,
}

/// Function on the half-space, radial in z.
#[derive(Clone)]
pub struct HalfSpaceFunction {
    f: Sampler,
}

macro_rules! sampled_fn {
    ($t:ty) => {
        impl $t {
            pub fn from_sampler(f: Sampler) -> Self {
                Self { f }
            }

            pub fn from_fn<F: Fn(f64, f64) -> [f64; 3] + Send + Sync + 'static>(f: F) -> Self {
                Self { f: Arc::new(f) }
            }

            #[inline]
            pub fn eval(&self, r: f64, zeta: f64) -> [f64; 3] {
                (self.f)(r, zeta)
            }

            pub fn value(&self, r: f64, zeta: f64) -> f64 {
                (self.f)(r, zeta)[0]
            }

            pub fn scaled(&self, c: f64) -> Self {
                let f = self.f.clone();
                Self::from_fn(move |r, z| f(r, z).map(|x| c * x))
            }

            /// self + c·other.
            pub fn axpy(&self, c: f64, other: &Self) -> Self {
                let (f, g) = (self.f.clone(), other.f.clone());
                Self::from_fn(move |r, z| {
                    let (a, b) = (f(r, z), g(r, z));
                    [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]]
                })
            }

            /// Values and partial derivatives on a grid, row-major (s outer).
            pub fn sample(&self, grid: &CylGrid) -> Samples {
                let nu = grid.u_len();
                let out: Vec<[f64; 3]> = (0..grid.len())
                    .into_par_iter()
                    .map(|k| (self.f)(grid.r[k / nu], grid.zeta[k % nu]))
                    .collect();
                Samples { data: out }
            }
        }

        impl std::fmt::Debug for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(stringify!($t))
            }
        }
    };
}

sampled_fn!(CylFunction);
sampled_fn!(HalfSpaceFunction);

impl HalfSpaceFunction {
    /// a·exp(−(ln r − s₀)²/(2σ_s²) − ζ²/(2σ_ζ²)).
    pub fn gaussian(amp: f64, s0: f64, sigma_s: f64, sigma_z: f64) -> Self {
        Self::from_fn(move |r, z| {
            let s = r.ln() - s0;
            let v = amp * (-(s * s) / (2.0 * sigma_s * sigma_s) - z * z / (2.0 * sigma_z * sigma_z)).exp();
            [v, -v * s / (sigma_s * sigma_s * r), -v * z / (sigma_z * sigma_z)]
        })
    }

    /// Compactly supported a·exp(1 − 1/(1 − q²)),
    /// q² = ((ln r − s₀)/w_s)² + (ζ/w_ζ)².
    pub fn bump(amp: f64, s0: f64, w_s: f64, w_z: f64) -> Self {
        Self::from_fn(move |r, z| {
            let a = (r.ln() - s0) / w_s;
            let b = z / w_z;
            let q2 = a * a + b * b;
            if q2 >= 1.0 {
                return [0.0; 3];
            }
            let d = 1.0 - q2;
            let v = amp * (1.0 - 1.0 / d).exp();
            // ∂v/∂q² = −v/d²
            let g = -v / (d * d);
            [v, g * 2.0 * a / (w_s * r), g * 2.0 * b / w_z]
        })
    }
}

/// Values with partial derivatives at the nodes of a [`CylGrid`].
#[derive(Debug, Clone)]
pub struct Samples {
    pub data: Vec<[f64; 3]>,
}

/// u = r^{(N−2)/2} v.
pub fn lift(v: &CylFunction, cp: &CylParams) -> HalfSpaceFunction {
    let a = cp.lift_exponent();
    let f = v.f.clone();
    HalfSpaceFunction::from_fn(move |r, z| {
        let [v, vr, vz] = f(r, z);
        let ra = r.powf(a);
        [ra * v, ra * (vr + a * v / r), ra * vz]
    })
}

/// v = r^{−(N−2)/2} φ.
pub fn lower(phi: &HalfSpaceFunction, cp: &CylParams) -> CylFunction {
    let a = cp.lift_exponent();
    let f = phi.f.clone();
    CylFunction::from_fn(move |r, z| {
        let [u, ur, uz] = f(r, z);
        let ra = r.powf(-a);
        [ra * u, ra * (ur - a * u / r), ra * uz]
    })
}

/// Tensor Gauss-Legendre grid in (s, u) = (ln r, asinh ζ).
#[derive(Debug, Clone)]
pub struct CylGrid {
    pub r: Vec<f64>,
    pub zeta: Vec<f64>,
    /// Weights for dr along s (Jacobian r folded in).
    pub w_r: Vec<f64>,
    /// Weights for dζ along u (Jacobian cosh u folded in).
    pub w_zeta: Vec<f64>,
}

impl CylGrid {
    /// s ∈ [s_lo, s_hi] and u ∈ [0, u_max], panels of width ≤ `width`.
    pub fn new(s_lo: f64, s_hi: f64, u_max: f64, width: f64, order: usize) -> Result<Self> {
        if !(s_lo < s_hi && u_max > 0.0 && width > 0.0 && order >= 2) {
            return Err(Error::InvalidParams("bad cylindrical grid extents".into()));
        }
        let gl = GaussLegendre::new(order);
        let axis = |lo: f64, hi: f64| {
            let m = ((hi - lo) / width).ceil().max(1.0) as usize;
            let step = (hi - lo) / m as f64;
            let mut x = Vec::with_capacity(m * order);
            let mut w = Vec::with_capacity(m * order);
            for i in 0..m {
                let a = lo + step * i as f64;
                for (xi, wi) in gl.mapped(a, a + step) {
                    x.push(xi);
                    w.push(wi);
                }
            }
            (x, w)
        };
        let (s, ws) = axis(s_lo, s_hi);
        let (u, wu) = axis(0.0, u_max);
        let r: Vec<f64> = s.iter().map(|s| s.exp()).collect();
        let w_r = ws.iter().zip(&r).map(|(w, r)| w * r).collect();
        let zeta = u.iter().map(|u| u.sinh()).collect();
        let w_zeta = wu.iter().zip(&u).map(|(w, u)| w * u.cosh()).collect();
        Ok(Self { r, zeta, w_r, w_zeta })
    }

    /// Box containing the hyperbolic ball of radius `d` about (1, 0).
    pub fn hyperbolic_box(d: f64, width: f64, order: usize) -> Result<Self> {
        Self::new(-d, d, d, width, order)
    }

    pub fn len(&self) -> usize {
        self.r.len() * self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn u_len(&self) -> usize {
        self.zeta.len()
    }

    /// Σ over nodes of w_r w_ζ f(node index, r, ζ).
    fn sum<F: Fn(usize, f64, f64) -> f64 + Sync>(&self, f: F) -> f64 {
        let nu = self.u_len();
        // rows in parallel, summed in order so results are reproducible
        let rows: Vec<f64> = (0..self.r.len())
            .into_par_iter()
            .map(|i| {
                let r = self.r[i];
                let row: f64 = (0..nu).map(|j| self.w_zeta[j] * f(i * nu + j, r, self.zeta[j])).sum();
                self.w_r[i] * row
            })
            .collect();
        rows.iter().sum()
    }

    /// ∫ over R^k × R^h of g, with g given per node.
    pub fn integrate_cyl<F: Fn(usize, f64, f64) -> f64 + Sync>(&self, cp: &CylParams, g: F) -> f64 {
        let c = cp.omega_k * sphere_area(cp.h - 1);
        let (km, hm) = (cp.k as i32 - 1, cp.h as i32 - 1);
        c * self.sum(|i, r, z| r.powi(km) * z.powi(hm) * g(i, r, z))
    }

    /// ∫ over H^n of g dv.
    pub fn integrate_hyp<F: Fn(usize, f64, f64) -> f64 + Sync>(&self, cp: &CylParams, g: F) -> f64 {
        let c = sphere_area(cp.h - 1);
        let (n, hm) = (cp.n as i32, cp.h as i32 - 1);
        c * self.sum(|i, r, z| r.powi(-n) * z.powi(hm) * g(i, r, z))
    }
}

/// Cylindrical integrals of v.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylIntegrals {
    /// ∫ (|∇v|² − μ v²/|y|²).
    pub energy: f64,
    /// ∫ |v|^{p+1}/|y|^t.
    pub weighted_lp: f64,
}

/// Hyperbolic integrals of φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypIntegrals {
    /// ∫ (|∇_H φ|² − λφ²) dv.
    pub energy: f64,
    /// ∫ |φ|^{p+1} dv.
    pub lp: f64,
}

pub fn cyl_integrals(v: &CylFunction, cp: &CylParams, grid: &CylGrid) -> CylIntegrals {
    let s = v.sample(grid);
    let d = &s.data;
    let energy = grid.integrate_cyl(cp, |i, r, _| {
        let [v, vr, vz] = d[i];
        vr * vr + vz * vz - cp.mu * v * v / (r * r)
    });
    let weighted_lp = grid.integrate_cyl(cp, |i, r, _| d[i][0].abs().powf(cp.p + 1.0) * r.powf(-cp.t));
    CylIntegrals { energy, weighted_lp }
}

pub fn hyp_integrals(phi: &HalfSpaceFunction, cp: &CylParams, grid: &CylGrid) -> HypIntegrals {
    let s = phi.sample(grid);
    let d = &s.data;
    let energy = grid.integrate_hyp(cp, |i, r, _| {
        let [u, ur, uz] = d[i];
        r * r * (ur * ur + uz * uz) - cp.lambda * u * u
    });
    let lp = grid.integrate_hyp(cp, |i, _, _| d[i][0].abs().powf(cp.p + 1.0));
    HypIntegrals { energy, lp }
}

/// One identity evaluated both ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    /// (1/ω_k)·cylindrical side.
    pub lhs: f64,
    /// Hyperbolic side.
    pub rhs: f64,
    pub residual: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        let residual = if lhs == 0.0 && rhs == 0.0 {
            0.0
        } else {
            (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE)
        };
        Self { lhs, rhs, residual }
    }
}

/// The Hardy, nonlinear and gradient identities of the lifting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Identities {
    pub hardy: IdentityCheck,
    pub nonlinear: IdentityCheck,
    pub gradient: IdentityCheck,
}

impl Identities {
    pub fn max_residual(&self) -> f64 {
        self.hardy
            .residual
            .max(self.nonlinear.residual)
            .max(self.gradient.residual)
    }
}

/// Grids for the identity check: the cylindrical side and the hyperbolic
/// side use different node sets.
pub fn identity_grids() -> Result<(CylGrid, CylGrid)> {
    Ok((
        CylGrid::new(-10.0, 10.0, 8.0, 0.25, 12)?,
        CylGrid::new(-10.0, 10.0, 8.0, 0.2, 10)?,
    ))
}

/// Checks the three identities for half-space test functions φ, ψ.
pub fn verify_identities(phi: &HalfSpaceFunction, psi: &HalfSpaceFunction, cp: &CylParams) -> Result<Identities> {
    let (ga, gb) = identity_grids()?;
    Ok(verify_identities_on(phi, psi, cp, &ga, &gb))
}

pub fn verify_identities_on(
    phi: &HalfSpaceFunction,
    psi: &HalfSpaceFunction,
    cp: &CylParams,
    cyl_grid: &CylGrid,
    hyp_grid: &CylGrid,
) -> Identities {
    let p = cp.p;
    let nl = |a: f64| a.abs().powf(p - 1.0) * a;

    let (vf, vg) = (lower(phi, cp).sample(cyl_grid), lower(psi, cp).sample(cyl_grid));
    let (a, b) = (&vf.data, &vg.data);
    let ok = cp.omega_k;
    let hardy_l = cyl_grid.integrate_cyl(cp, |i, r, _| a[i][0] * b[i][0] / (r * r)) / ok;
    let nonlin_l = cyl_grid.integrate_cyl(cp, |i, r, _| nl(a[i][0]) * b[i][0] * r.powf(-cp.t)) / ok;
    let grad_l = cyl_grid.integrate_cyl(cp, |i, _, _| a[i][1] * b[i][1] + a[i][2] * b[i][2]) / ok;

    let (uf, ug) = (phi.sample(hyp_grid), psi.sample(hyp_grid));
    let (a, b) = (&uf.data, &ug.data);
    let hardy_r = hyp_grid.integrate_hyp(cp, |i, _, _| a[i][0] * b[i][0]);
    let nonlin_r = hyp_grid.integrate_hyp(cp, |i, _, _| nl(a[i][0]) * b[i][0]);
    let shift = cp.shift();
    let grad_r = hyp_grid.integrate_hyp(cp, |i, r, _| {
        r * r * (a[i][1] * b[i][1] + a[i][2] * b[i][2]) - shift * a[i][0] * b[i][0]
    });

    Identities {
        hardy: IdentityCheck::new(hardy_l, hardy_r),
        nonlinear: IdentityCheck::new(nonlin_l, nonlin_r),
        gradient: IdentityCheck::new(grad_l, grad_r),
    }
}

/// Ground state of the lifted problem with the grids used to transport
/// deficits and distances.
#[derive(Debug, Clone)]
pub struct HsmContext {
    pub cp: CylParams,
    pub gs: GroundState,
    pub grid: CylGrid,
}

impl HsmContext {
    pub fn new(cp: CylParams) -> Result<Self> {
        let model = cp.model()?;
        let gs = GroundState::solve(&model)?;
        // the energy density of the bubble decays like e^{−gap·d}
        let d = (20.0 / model.gap() + 4.0).clamp(20.0, gs.profile.grid.rho_max);
        let grid = CylGrid::hyperbolic_box(d, 0.25, 12)?;
        Ok(Self { cp, gs, grid })
    }

    /// Best constant S(N, k, p, μ).
    pub fn hsm_constant(&self) -> f64 {
        self.cp.hsm_constant(self.gs.best.s)
    }

    /// 𝒰 centred at the half-space point (c, 0).
    pub fn bubble(&self, c: f64) -> HalfSpaceFunction {
        let tab = self.gs.table.clone();
        HalfSpaceFunction::from_fn(move |r, z| {
            let y = ((r - c) * (r - c) + z * z) / (2.0 * r * c);
            let sh = (y * (y + 2.0)).sqrt();
            let d = (1.0 + y + sh).ln();
            let (u, du) = tab.eval(d);
            // dU/dy = U'(d)/sinh d, finite at d = 0
            let g = if sh > 1e-12 { du / sh } else { tab.eval(1e-6).1 / 1e-6 };
            let yr = (r * r - z * z - c * c) / (2.0 * r * r * c);
            let yz = z / (r * c);
            [u, g * yr, g * yz]
        })
    }

    /// 𝒱_{R,0}(y, z) = R^{(N−2)/2} 𝒱(Ry, Rz), the pullback of 𝒰 centred at (1/R, 0).
    pub fn extremal(&self, big_r: f64) -> CylFunction {
        lower(&self.bubble(1.0 / big_r), &self.cp)
    }
}

/// Deficit computed in cylindrical coordinates and through the lifting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsmDeficit {
    /// δ² from cylindrical integrals and S(N, k, p, μ).
    pub direct_sq: f64,
    /// ω_k δ_λ²(𝒯v).
    pub lifted_sq: f64,
    /// Lifted-route deficit sqrt(ω_k δ_λ²).
    pub deficit: f64,
    /// δ_λ(𝒯v) in hyperbolic units.
    pub hyperbolic: f64,
    pub cyl_energy: f64,
    /// |direct − lifted| / cylindrical energy.
    pub route_gap: f64,
    /// Whether δ/ω_k = δ_λ also holds (the unsquared form of the transport).
    pub linear_relation_holds: bool,
}

pub fn hsm_deficit(v: &CylFunction, ctx: &HsmContext) -> Result<HsmDeficit> {
    let cp = &ctx.cp;
    let q = 2.0 / (cp.p + 1.0);
    let ci = cyl_integrals(v, cp, &ctx.grid);
    if !(ci.energy.is_finite() && ci.energy > 0.0) {
        return Err(Error::Input("v has no finite positive weighted norm".into()));
    }
    let direct_sq = ci.energy - ctx.hsm_constant() * ci.weighted_lp.powf(q);
    let hi = hyp_integrals(&lift(v, cp), cp, &ctx.grid);
    let hyp_sq = hi.energy - ctx.gs.best.s * hi.lp.powf(q);
    let lifted_sq = cp.omega_k * hyp_sq;
    let route_gap = (direct_sq - lifted_sq).abs() / ci.energy;
    if route_gap > ROUTE_TOL {
        return Err(Error::DictionaryInconsistency(route_gap));
    }
    let deficit = lifted_sq.max(0.0).sqrt();
    let hyperbolic = hyp_sq.max(0.0).sqrt();
    let linear_relation_holds = (deficit / cp.omega_k - hyperbolic).abs() <= ROUTE_TOL * hyperbolic.max(1e-300);
    Ok(HsmDeficit {
        direct_sq,
        lifted_sq,
        deficit,
        hyperbolic,
        cyl_energy: ci.energy,
        route_gap,
        linear_relation_holds,
    })
}

/// Half-space point (r, ζ) at hyperbolic polar coordinates (ρ, θ) about
/// (1, 0), θ measured from the geodesic z = 0 towards r → ∞.
pub fn half_space_point(rho: f64, theta: f64) -> (f64, f64) {
    let s = (0.5 * theta).sin();
    let r = 1.0 / ((-rho).exp() + 2.0 * rho.sinh() * s * s);
    (r, r * rho.sinh() * theta.sin())
}

/// Distance to the extremal manifold, transported to the ball model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsmDistance {
    /// dist(v, 𝒵̃₀) in the cylindrical norm.
    pub dist: f64,
    /// Hyperbolic distance of the lift.
    pub dist_hyp: f64,
    pub c_star: f64,
    /// Scale R of the optimal 𝒱_{R,0}.
    pub r_star: f64,
    /// ‖v − c𝒱_R‖_μ² computed in cylindrical coordinates.
    pub direct_sq: f64,
    /// |direct − ω_k dist_hyp²| / ‖v‖_μ².
    pub isometry_gap: f64,
}

pub fn hsm_distance(v: &CylFunction, ctx: &HsmContext) -> Result<HsmDistance> {
    let cp = &ctx.cp;
    let phi = lift(v, cp);
    let field = ctx.gs.axis.field(|rho, th| {
        let (r, z) = half_space_point(rho, th);
        phi.value(r, z)
    });
    let Projection {
        dist, c_star, s_star, ..
    } = distance_to_manifold_axis(&field, &ctx.gs)?;
    let r_star = (-s_star).exp();
    let diff = v.axpy(-c_star, &ctx.extremal(r_star));
    let direct_sq = cyl_integrals(&diff, cp, &ctx.grid).energy;
    let norm = cyl_integrals(v, cp, &ctx.grid).energy;
    let isometry_gap = (direct_sq - cp.omega_k * dist * dist).abs() / norm;
    Ok(HsmDistance {
        dist: cp.omega_k.sqrt() * dist,
        dist_hyp: dist,
        c_star,
        r_star,
        direct_sq,
        isometry_gap,
    })
}

/// Pointwise residuals of the half-space equation −Δ_H φ − λφ = φ^p for
/// φ = 𝒰 centred at (c, 0), and of −Δv − μv/|y|² = v^p/|y|^t for its
/// pullback v, relative to the size of the nonlinear term. Second
/// derivatives of the profile come from its radial equation.
pub fn bubble_pde_residuals(ctx: &HsmContext, c: f64, points: &[(f64, f64)]) -> (f64, f64) {
    let cp = &ctx.cp;
    let pm = &ctx.gs.params;
    let prof = &ctx.gs.profile;
    let (nf, hf, kf) = (cp.n as f64, cp.h as f64, cp.k as f64);
    let a = cp.lift_exponent();
    let mut worst = (0.0f64, 0.0f64);
    for &(r, z) in points {
        let y = ((r - c) * (r - c) + z * z) / (2.0 * r * c);
        let sh = (y * (y + 2.0)).sqrt();
        let d = (1.0 + y + sh).ln();
        let (u, du) = prof.eval_with_derivative(d);
        let d2u = -(nf - 1.0) * du / d.tanh() - pm.lambda * u - u.abs().powf(pm.p);
        // U as a function of y
        let g1 = du / sh;
        let g2 = (d2u - du * (1.0 + y) / sh) / (sh * sh);
        let yr = (r * r - z * z - c * c) / (2.0 * r * r * c);
        let yrr = (z * z + c * c) / (c * r * r * r);
        let yz = z / (r * c);
        let yzz = 1.0 / (r * c);
        let (ur, uz) = (g1 * yr, g1 * yz);
        let urr = g2 * yr * yr + g1 * yrr;
        let uzz = g2 * yz * yz + g1 * yzz;
        let lap = urr + uzz + (hf - 1.0) * uz / z;
        let lap_h = r * r * lap - (nf - 2.0) * r * ur;
        let scale = u.abs().powf(pm.p);
        let res_h = (-lap_h - pm.lambda * u - scale).abs() / scale;

        let ra = r.powf(-a);
        let v = ra * u;
        let vr = ra * (ur - a * u / r);
        let vrr = ra * (urr - 2.0 * a * ur / r + a * (a + 1.0) * u / (r * r));
        let (vz, vzz) = (ra * uz, ra * uzz);
        let lap_v = vrr + (kf - 1.0) * vr / r + vzz + (hf - 1.0) * vz / z;
        let rhs = v.abs().powf(cp.p) * r.powf(-cp.t);
        let res_c = (-lap_v - cp.mu * v / (r * r) - rhs).abs() / rhs;
        worst = (worst.0.max(res_h), worst.1.max(res_c));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn base() -> CylParams {
        CylParams::new(5, 3, 0.0, 2.0).unwrap()
    }

    fn ctx() -> &'static HsmContext {
        static C: OnceLock<HsmContext> = OnceLock::new();
        C.get_or_init(|| HsmContext::new(base()).unwrap())
    }

    #[test]
    fn dictionary_values() {
        let cp = base();
        assert_eq!((cp.h, cp.n), (2, 3));
        assert!((cp.lambda - 0.75).abs() < 1e-15);
        assert!((cp.t - 0.5).abs() < 1e-15);
        assert!((cp.omega_k - 4.0 * std::f64::consts::PI).abs() < 1e-13);
        assert!(CylParams::new(4, 3, 0.0, 2.0).is_err());
        assert!(CylParams::new(5, 4, 0.0, 2.0).is_err());
        assert!(CylParams::new(5, 3, 0.25, 2.0).is_err());
        assert!(CylParams::new(5, 3, 0.0, 2.5).is_err());
        assert!(CylParams::new(5, 3, 0.0, 1.0).is_err());
    }

    #[test]
    fn t_formula_endpoints() {
        let cp = CylParams::new(7, 4, 0.5, 9.0 / 5.0).unwrap();
        assert!(cp.t.abs() < 1e-14);
        let cp = CylParams::new(7, 4, 0.5, 1.0 + 1e-9).unwrap();
        assert!((cp.t - 2.0).abs() < 1e-8);
    }

    #[test]
    fn lift_lower_roundtrip() {
        let cp = CylParams::new(6, 3, 0.1, 1.7).unwrap();
        let g = HalfSpaceFunction::gaussian(1.3, 0.2, 0.5, 0.8);
        let back = lift(&lower(&g, &cp), &cp);
        for &(r, z) in &[(0.3, 0.1), (1.0, 0.0), (2.5, 1.7), (0.05, 3.0)] {
            let (a, b) = (g.eval(r, z), back.eval(r, z));
            for i in 0..3 {
                assert!((a[i] - b[i]).abs() <= 1e-14 * (1.0 + a[i].abs()), "{a:?} {b:?}");
            }
        }
        // lift of r^{−a} g is g
        let a = cp.lift_exponent();
        let v = CylFunction::from_fn(move |r, z| {
            let [u, ur, uz] = HalfSpaceFunction::gaussian(1.0, 0.0, 0.4, 0.6).eval(r, z);
            let ra = r.powf(-a);
            [ra * u, ra * (ur - a * u / r), ra * uz]
        });
        let u = lift(&v, &cp);
        let want = HalfSpaceFunction::gaussian(1.0, 0.0, 0.4, 0.6);
        assert!((u.value(1.7, 0.4) - want.value(1.7, 0.4)).abs() < 1e-15);
    }

    #[test]
    fn analytic_partials_match_differences() {
        let f = HalfSpaceFunction::bump(0.7, 0.1, 1.2, 1.5);
        let (r, z, e) = (1.3, 0.6, 1e-6);
        let [_, fr, fz] = f.eval(r, z);
        let dr = (f.value(r + e, z) - f.value(r - e, z)) / (2.0 * e);
        let dz = (f.value(r, z + e) - f.value(r, z - e)) / (2.0 * e);
        assert!((fr - dr).abs() < 1e-8 && (fz - dz).abs() < 1e-8);
    }

    #[test]
    fn identities_for_gaussian_bumps() {
        for (nn, k, mu, p) in [(5, 3, 0.0, 2.0), (6, 3, 0.2, 1.5), (7, 4, 0.7, 1.8)] {
            let cp = CylParams::new(nn, k, mu, p).unwrap();
            let phi = HalfSpaceFunction::gaussian(1.0, 0.3, 0.6, 0.9);
            let id = verify_identities(&phi, &phi, &cp).unwrap();
            assert!(id.max_residual() < 1e-6, "{cp:?} {id:?}");
            let psi = HalfSpaceFunction::gaussian(0.5, -0.4, 0.5, 1.2);
            let id = verify_identities(&phi, &psi, &cp).unwrap();
            assert!(id.max_residual() < 1e-6, "{cp:?} {id:?}");
        }
    }

    #[test]
    fn identities_disjoint_support() {
        let cp = base();
        let phi = HalfSpaceFunction::bump(1.0, -2.0, 1.0, 1.0);
        let psi = HalfSpaceFunction::bump(1.0, 2.0, 1.0, 1.0);
        let id = verify_identities(&phi, &psi, &cp).unwrap();
        for c in [id.hardy, id.nonlinear, id.gradient] {
            assert_eq!((c.lhs, c.rhs, c.residual), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn identities_homogeneity() {
        let cp = base();
        let phi = HalfSpaceFunction::gaussian(1.0, 0.0, 0.5, 0.7);
        let psi = HalfSpaceFunction::gaussian(1.0, 0.4, 0.6, 0.5);
        let a = verify_identities(&phi, &psi, &cp).unwrap();
        let b = verify_identities(&phi.scaled(2.0), &psi, &cp).unwrap();
        let c = verify_identities(&phi.scaled(2.0), &phi.scaled(2.0), &cp).unwrap();
        let d = verify_identities(&phi, &phi, &cp).unwrap();
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
        assert!(rel(b.hardy.lhs, 2.0 * a.hardy.lhs) < 1e-13);
        assert!(rel(b.gradient.rhs, 2.0 * a.gradient.rhs) < 1e-13);
        let s = 2f64.powf(cp.p + 1.0);
        assert!(rel(c.nonlinear.lhs, s * d.nonlinear.lhs) < 1e-13);
        assert!(rel(c.nonlinear.rhs, s * d.nonlinear.rhs) < 1e-13);
    }

    #[test]
    fn lifted_extremal_solves_both_equations() {
        let c = ctx();
        let pts: Vec<(f64, f64)> = [(0.4, 0.3), (1.7, 0.2), (2.5, 1.5), (0.8, 2.0), (5.0, 4.0), (0.2, 0.05)].to_vec();
        for centre in [1.0, 0.5] {
            let (h, cyl) = bubble_pde_residuals(c, centre, &pts);
            assert!(h < 1e-6 && cyl < 1e-6, "{h:e} {cyl:e}");
        }
    }

    #[test]
    fn extremal_has_zero_deficit() {
        let c = ctx();
        for (r, scale) in [(1.0, 1.0), (1.0, 1.01), (2.0, 1.0), (0.7, 0.5)] {
            let v = c.extremal(r).scaled(scale);
            let d = hsm_deficit(&v, c).unwrap();
            assert!(d.direct_sq.abs() < 1e-6 * d.cyl_energy, "{d:?}");
            assert!(d.lifted_sq.abs() < 1e-6 * d.cyl_energy, "{d:?}");
        }
    }

    #[test]
    fn deficit_routes_agree_and_linear_form_fails() {
        let c = ctx();
        let v = c
            .extremal(1.0)
            .axpy(0.3, &lower(&HalfSpaceFunction::gaussian(1.0, 0.5, 0.4, 0.5), &c.cp));
        let d = hsm_deficit(&v, c).unwrap();
        assert!(d.lifted_sq > 0.0);
        assert!(d.route_gap < 1e-6, "{d:?}");
        assert!((d.direct_sq / d.lifted_sq - 1.0).abs() < 1e-4);
        assert!(!d.linear_relation_holds);
    }

    #[test]
    fn distance_vanishes_on_extremals() {
        let c = ctx();
        for r in [1.0, 2.0, 0.6] {
            let d = hsm_distance(&c.extremal(r), c).unwrap();
            assert!(d.dist < 1e-4 * c.gs.energy().sqrt(), "{d:?}");
            assert!((d.r_star / r - 1.0).abs() < 1e-4, "{d:?}");
        }
    }

    #[test]
    fn distance_isometry_and_ratio() {
        let c = ctx();
        let bump = lower(&HalfSpaceFunction::gaussian(1.0, 0.5, 0.4, 0.5), &c.cp);
        let mut ratios = Vec::new();
        for eps in [0.2, 0.1, 0.05] {
            let v = c.extremal(1.0).axpy(eps, &bump);
            let d = hsm_distance(&v, c).unwrap();
            assert!(d.isometry_gap < 1e-6, "{d:?}");
            let del = hsm_deficit(&v, c).unwrap();
            ratios.push(d.dist / del.deficit);
        }
        let (lo, hi) = ratios
            .iter()
            .fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(hi < 2.0 * lo && hi < 50.0, "{ratios:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn dictionary_invariants(big_n in 5usize..12, kf in 0.0f64..1.0, muf in 0.0f64..0.999, pf in 0.001f64..1.0) {
            let k = 3 + ((big_n - 5) as f64 * kf).floor() as usize;
            let hardy = ((k - 2) * (k - 2)) as f64 / 4.0;
            let pc = (big_n as f64 + 2.0) / (big_n as f64 - 2.0);
            let p = 1.0 + pf * (pc - 1.0);
            let cp = CylParams::new(big_n, k, muf * hardy, p).unwrap();
            prop_assert!(cp.lambda < (cp.h * cp.h) as f64 / 4.0);
            prop_assert!(cp.t >= 0.0 && cp.t < 2.0);
            let n = cp.n as f64;
            prop_assert!(cp.p < (n + 2.0) / (n - 2.0));
            let q = CylParams::new(big_n, k, muf * hardy, 1.0 + 0.5 * pf * (pc - 1.0)).unwrap();
            prop_assert!(q.t > cp.t);
        }

        #[test]
        fn gradient_identity_random_bumps(s0 in -1.0f64..1.0, ss in 0.3f64..0.8, sz in 0.4f64..1.2) {
            let cp = base();
            let phi = HalfSpaceFunction::gaussian(1.0, s0, ss, sz);
            let id = verify_identities(&phi, &phi, &cp).unwrap();
            prop_assert!(id.max_residual() < 1e-6);
        }
    }
}
