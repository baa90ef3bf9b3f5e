//! Deficit, distance to the manifold of extremals, H⁻¹ residual norms and
//! the two stability scans.

use crate::error::{Error, Result};
use crate::extremal::{lambda_inner, lambda_norm_sq, GroundState};
use crate::grid::{AxisField, Profile, RadialGrid};
use crate::params::ModelParams;
use crate::spectral::{fd_grid, stiffness};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Largest geodesic offset scanned for the optimal bubble centre.
pub const S_MAX: f64 = 10.0;
const COARSE_STEP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub deficit: f64,
    pub distance: f64,
    pub c_star: f64,
    pub s_star: f64,
    /// distance / deficit (infinite when the deficit vanishes and the
    /// distance does not).
    pub ratio: f64,
    pub residual_hminus1: f64,
}

fn on_ground_grid(u: &Profile, gs: &GroundState) -> Profile {
    if Arc::ptr_eq(&u.grid, &gs.profile.grid) || u.grid.nodes == gs.profile.grid.nodes {
        u.clone()
    } else {
        u.resample(gs.profile.grid.clone())
    }
}

/// ‖u‖_λ² − S‖u‖²_{p+1}, clamped at zero inside the quadrature noise.
pub fn deficit_sq(u: &Profile, gs: &GroundState) -> Result<f64> {
    let u = on_ground_grid(u, gs);
    let p = gs.params.p;
    let e = lambda_norm_sq(&u, &gs.params);
    let lp = u.l_p_norm_pow(p + 1.0).powf(2.0 / (p + 1.0));
    let val = e - gs.best.s * lp;
    let noise = gs.best.consistency.max(1e-14) * (e.abs() + gs.best.s * lp);
    if val < -10.0 * noise {
        return Err(Error::InequalityViolation {
            value: val,
            floor: -10.0 * noise,
        });
    }
    Ok(val.max(0.0))
}

/// δ(u) = (‖u‖_λ² − S‖u‖²_{p+1})^{1/2}.
pub fn deficit(u: &Profile, gs: &GroundState) -> Result<f64> {
    Ok(deficit_sq(u, gs)?.sqrt())
}

/// Per-node geometry of the distance to a centre at signed offset `s`:
/// (d, ∂d/∂ρ, ∂d/∂s) at every 2D node, row-major.
fn offsets(gs: &GroundState, s: f64) -> Vec<(f64, f64, f64)> {
    let g = &gs.axis;
    let nt = g.n_theta();
    let (ss, cs) = (s.sinh(), s.cosh());
    let sa = s.abs();
    // sin²(θ'/2) with θ' the angle seen from the centre's side, and cos θ
    let half: Vec<(f64, f64)> = g
        .theta
        .iter()
        .map(|t| {
            let h = if s >= 0.0 { (0.5 * t).sin() } else { (0.5 * t).cos() };
            (h * h, t.cos())
        })
        .collect();
    let rows: Vec<Vec<(f64, f64, f64)>> = (0..g.n_rho())
        .into_par_iter()
        .map(|i| {
            let r = g.rho[i];
            let (sr, cr) = (r.sinh(), r.cosh());
            let a = (0.5 * (r - sa)).sinh().powi(2);
            let b = sr * sa.sinh();
            half.iter()
                .map(|&(h2, ct)| {
                    // sinh²(d/2) = sinh²((ρ−|s|)/2) + sinh ρ sinh|s| sin²(θ'/2)
                    let q = (a + b * h2).sqrt();
                    let d = 2.0 * q.asinh();
                    let sd = 2.0 * q * (1.0 + q * q).sqrt();
                    if sd > 0.0 {
                        (d, (sr * cs - cr * ss * ct) / sd, (cr * ss - sr * cs * ct) / sd)
                    } else {
                        (d, 0.0, 0.0)
                    }
                })
                .collect()
        })
        .collect();
    debug_assert_eq!(rows.len() * nt, g.len());
    rows.into_iter().flatten().collect()
}

/// Translated bubble and its derivative in the offset, on the 2D grid.
/// The centre sits at signed geodesic offset `s` on the axis θ = 0.
pub fn bubble_with_derivative(gs: &GroundState, s: f64) -> (AxisField, AxisField) {
    let g = &gs.axis;
    let tab = &gs.table;
    let (v, dv): (Vec<f64>, Vec<f64>) = offsets(gs, s)
        .into_par_iter()
        .map(|(d, _, ds)| {
            let (v, dv) = tab.eval(d);
            (v, dv * ds)
        })
        .unzip();
    (
        AxisField {
            grid: g.clone(),
            values: v,
        },
        AxisField {
            grid: g.clone(),
            values: dv,
        },
    )
}

/// Radial profile values at the 2D grid's ρ nodes, broadcast in θ.
fn radial_field(u: &Profile, gs: &GroundState) -> AxisField {
    let g = &gs.axis;
    let nt = g.n_theta();
    let idx = g.radial.gauss_indices();
    let vals = &u.values[idx];
    let mut out = Vec::with_capacity(g.len());
    for v in vals {
        out.extend(std::iter::repeat(*v).take(nt));
    }
    AxisField {
        grid: g.clone(),
        values: out,
    }
}

/// ⟨u, 𝒰_b⟩_λ for radial u via the equation of 𝒰: ∫ u 𝒰_b^p dv.
pub fn cross_term(u: &Profile, gs: &GroundState, s: f64) -> Result<f64> {
    if u.l != 0 {
        return Err(Error::Input("cross term needs a radial u".into()));
    }
    let u = on_ground_grid(u, gs);
    let p = gs.params.p;
    if s == 0.0 {
        let w: Vec<f64> = gs.profile.values.iter().map(|v| v.abs().powf(p - 1.0) * v).collect();
        let ones = vec![1.0; w.len()];
        let tmp = Profile::new(u.grid.clone(), w, 0)?;
        return Ok(u.weighted_dot(&tmp, &ones));
    }
    let (b, _) = bubble_with_derivative(gs, s);
    let uf = radial_field(&u, gs);
    let integrand: Vec<f64> = uf
        .values
        .iter()
        .zip(&b.values)
        .map(|(a, v)| a * v.abs().powf(p - 1.0) * v)
        .collect();
    Ok(gs.axis.integrate(&integrand))
}

/// ⟨u, 𝒰_b⟩_λ for radial u by direct quadrature of ∇u·∇𝒰_b − λu𝒰_b.
pub fn cross_term_direct(u: &Profile, gs: &GroundState, s: f64) -> Result<f64> {
    if u.l != 0 {
        return Err(Error::Input("cross term needs a radial u".into()));
    }
    let u = on_ground_grid(u, gs);
    let g = &gs.axis;
    let nt = g.n_theta();
    let du = u.derivative();
    let idx = g.radial.gauss_indices();
    let (uv, duv) = (&u.values[idx.clone()], &du[idx]);
    let lambda = gs.params.lambda;
    let tab = &gs.table;
    let integrand: Vec<f64> = offsets(gs, s)
        .into_par_iter()
        .enumerate()
        .map(|(k, (d, dr, _))| {
            let i = k / nt;
            let (v, dv) = tab.eval(d);
            duv[i] * dv * dr - lambda * uv[i] * v
        })
        .collect();
    Ok(g.integrate(&integrand))
}

/// Optimal manifold point for u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub dist: f64,
    pub c_star: f64,
    /// Signed geodesic offset of the optimal centre along the axis.
    pub s_star: f64,
    /// Set when the optimum sits on the boundary s = 0 of a one-sided scan
    /// without an interior maximum.
    pub boundary: bool,
}

/// Maximizes `f` over [lo, hi]: a coarse pass locates the best sample,
/// then a safeguarded secant on the derivative `df` pins the stationary
/// point. Returns (s, at_lower_boundary).
fn maximize<F, D>(f: F, df: D, lo: f64, hi: f64) -> (f64, bool)
where
    F: Fn(f64) -> f64 + Sync,
    D: Fn(f64) -> f64,
{
    let count = ((hi - lo) / COARSE_STEP).round().max(1.0) as usize;
    let at = |k: usize| lo + (hi - lo) * k as f64 / count as f64;
    let samples: Vec<f64> = (0..=count).into_par_iter().map(|k| f(at(k))).collect();
    let (kbest, fbest) = samples.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
    );
    // bracket a sign change of df around the best sample
    let (mut a, mut b) = (at(kbest.saturating_sub(1)), at((kbest + 1).min(count)));
    let mut da = df(a);
    let mut db = df(b);
    if kbest == 0 && lo == 0.0 {
        // symmetric scans: s = 0 is stationary; look just inside
        a = 0.0;
        da = df(1e-4 * COARSE_STEP);
        if da <= 0.0 {
            return (0.0, true);
        }
    }
    if !(da > 0.0 && db < 0.0) {
        let s = at(kbest);
        return (s, kbest == 0 && fbest >= f(at(1)));
    }
    let mut side = 0i32;
    let mut s = 0.5 * (a + b);
    for _ in 0..100 {
        // Illinois false position
        s = (a * db - b * da) / (db - da);
        if !(s > a && s < b) {
            s = 0.5 * (a + b);
        }
        let ds = df(s);
        if ds == 0.0 || (b - a) < 1e-14 * (1.0 + s.abs()) {
            break;
        }
        if ds > 0.0 {
            a = s;
            da = ds;
            if side == 1 {
                db *= 0.5;
            }
            side = 1;
        } else {
            b = s;
            db = ds;
            if side == -1 {
                da *= 0.5;
            }
            side = -1;
        }
    }
    if f(s) < fbest {
        // the stationary point is not the best seen; keep the sample
        let sb = at(kbest);
        return (sb, kbest == 0);
    }
    (s, false)
}

/// Which manifold the distance refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    /// {c·𝒰∘τ}: c free.
    Scaled,
    /// {𝒰∘τ}: c = 1.
    Unit,
}

fn project_radial(u: &Profile, gs: &GroundState, target: Target) -> Result<Projection> {
    if u.l != 0 {
        return Err(Error::Input("distance scan needs a radial u".into()));
    }
    let u = on_ground_grid(u, gs);
    let p = gs.params.p;
    let norm_b = gs.energy();
    let prof = &gs.profile;
    // G(s) and G'(s) through ∫ u 𝒰_s^p
    let uf = radial_field(&u, gs);
    let g_and_dg = |s: f64| -> (f64, f64) {
        if s == 0.0 {
            return (lambda_inner(&u, prof, &gs.params), 0.0);
        }
        let (b, db) = bubble_with_derivative(gs, s);
        let gi: Vec<f64> = uf
            .values
            .iter()
            .zip(&b.values)
            .map(|(a, v)| a * v.abs().powf(p - 1.0) * v)
            .collect();
        let di: Vec<f64> = uf
            .values
            .iter()
            .zip(b.values.iter().zip(&db.values))
            .map(|(a, (v, dv))| p * a * v.abs().powf(p - 1.0) * dv)
            .collect();
        (gs.axis.integrate(&gi), gs.axis.integrate(&di))
    };
    let obj = |s: f64| {
        let g = g_and_dg(s).0;
        match target {
            Target::Scaled => g * g,
            Target::Unit => g,
        }
    };
    let dobj = |s: f64| {
        let (g, dg) = g_and_dg(s);
        match target {
            Target::Scaled => 2.0 * g * dg,
            Target::Unit => dg,
        }
    };
    let (s_star, boundary) = maximize(obj, dobj, 0.0, S_MAX);
    if boundary || s_star == 0.0 {
        let c = match target {
            Target::Scaled => lambda_inner(&u, prof, &gs.params) / norm_b,
            Target::Unit => 1.0,
        };
        let diff = u.axpy(-c, prof)?;
        let d2 = lambda_norm_sq(&diff, &gs.params);
        return Ok(Projection {
            dist: d2.max(0.0).sqrt(),
            c_star: c,
            s_star: 0.0,
            boundary,
        });
    }
    let (b, _) = bubble_with_derivative(gs, s_star);
    let c = match target {
        Target::Scaled => uf.lambda_inner(&b, gs.params.lambda) / b.lambda_norm_sq(gs.params.lambda),
        Target::Unit => 1.0,
    };
    let d2 = uf.axpy(-c, &b).lambda_norm_sq(gs.params.lambda);
    Ok(Projection {
        dist: d2.max(0.0).sqrt(),
        c_star: c,
        s_star,
        boundary,
    })
}

fn project_axis(u: &AxisField, gs: &GroundState, target: Target) -> Result<Projection> {
    if !Arc::ptr_eq(&u.grid, &gs.axis) {
        return Err(Error::Input("field must live on the ground state's 2D grid".into()));
    }
    let lam = gs.params.lambda;
    let parts = |s: f64| -> (f64, f64, f64, f64) {
        let (b, db) = bubble_with_derivative(gs, s);
        let g = u.lambda_inner(&b, lam);
        let nb = b.lambda_norm_sq(lam);
        let dg = u.lambda_inner(&db, lam);
        let dn = 2.0 * b.lambda_inner(&db, lam);
        (g, nb, dg, dn)
    };
    let value = |s: f64| -> (f64, f64) {
        let (b, _) = bubble_with_derivative(gs, s);
        (u.lambda_inner(&b, lam), b.lambda_norm_sq(lam))
    };
    let obj = |s: f64| {
        let (g, nb) = value(s);
        match target {
            Target::Scaled => g * g / nb,
            Target::Unit => 2.0 * g - nb,
        }
    };
    let dobj = |s: f64| {
        let (g, nb, dg, dn) = parts(s);
        match target {
            Target::Scaled => 2.0 * g * dg / nb - g * g * dn / (nb * nb),
            Target::Unit => 2.0 * dg - dn,
        }
    };
    let (s_star, _) = maximize(obj, dobj, -S_MAX, S_MAX);
    let (b, _) = bubble_with_derivative(gs, s_star);
    let c = match target {
        Target::Scaled => u.lambda_inner(&b, lam) / b.lambda_norm_sq(lam),
        Target::Unit => 1.0,
    };
    let d2 = u.axpy(-c, &b).lambda_norm_sq(lam);
    Ok(Projection {
        dist: d2.max(0.0).sqrt(),
        c_star: c,
        s_star,
        boundary: false,
    })
}

/// dist(u, 𝒵₀) = inf over c and centres of ‖u − c𝒰∘τ‖_λ, radial u.
pub fn distance_to_manifold(u: &Profile, gs: &GroundState) -> Result<Projection> {
    project_radial(u, gs, Target::Scaled)
}

/// dist(u, 𝒵) = inf over centres of ‖u − 𝒰∘τ‖_λ, radial u.
pub fn distance_to_solutions(u: &Profile, gs: &GroundState) -> Result<Projection> {
    project_radial(u, gs, Target::Unit)
}

/// dist(u, 𝒵₀) for a field axisymmetric about the first axis.
pub fn distance_to_manifold_axis(u: &AxisField, gs: &GroundState) -> Result<Projection> {
    project_axis(u, gs, Target::Scaled)
}

/// dist(u, 𝒵) for a field axisymmetric about the first axis.
pub fn distance_to_solutions_axis(u: &AxisField, gs: &GroundState) -> Result<Projection> {
    project_axis(u, gs, Target::Unit)
}

/// One row of a Bianchi-Egnell scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub eps: f64,
    pub deficit: f64,
    pub distance: f64,
    /// dist²/δ²; `None` when δ = 0.
    pub ratio: Option<f64>,
}

/// Removes the 𝒰 component of a radial perturbation in the 𝒰^{p−1}
/// product (the translation modes live in sector 1 and are orthogonal
/// already).
pub fn project_out_ground_state(perturbation: &Profile, gs: &GroundState) -> Result<Profile> {
    if perturbation.l != 0 {
        return Err(Error::Input("perturbation must be radial".into()));
    }
    let psi = on_ground_grid(perturbation, gs);
    let u = &gs.profile;
    let w: Vec<f64> = u.values.iter().map(|v| v.abs().powf(gs.params.p - 1.0)).collect();
    let c = psi.weighted_dot(u, &w) / u.weighted_dot(u, &w);
    psi.axpy(-c, u)
}

/// (ε, δ, dist, dist²/δ²) for u = 𝒰 + ε ψ with ψ the projected perturbation.
pub fn stability_ratio_scan(perturbation: &Profile, epsilons: &[f64], gs: &GroundState) -> Result<Vec<ScanRow>> {
    let psi = project_out_ground_state(perturbation, gs)?;
    epsilons
        .par_iter()
        .map(|&eps| {
            if eps == 0.0 {
                return Ok(ScanRow {
                    eps,
                    deficit: 0.0,
                    distance: 0.0,
                    ratio: None,
                });
            }
            let u = gs.profile.axpy(eps, &psi)?;
            let d2 = deficit_sq(&u, gs)?;
            let pr = distance_to_manifold(&u, gs)?;
            Ok(ScanRow {
                eps,
                deficit: d2.sqrt(),
                distance: pr.dist,
                ratio: (d2 > 0.0).then(|| pr.dist * pr.dist / d2),
            })
        })
        .collect()
}

/// Pointwise −Δu − λu − |u|^{p−1}u of a radial profile on its grid; the
/// ρ_max node is set to zero.
pub fn euler_lagrange_residual(u: &Profile, params: &ModelParams) -> Result<Profile> {
    if u.l != 0 {
        return Err(Error::Input("residual needs a radial u".into()));
    }
    let g = &u.grid;
    let d1 = g.derivative(&u.values);
    let d2 = g.second_derivative(&u.values);
    let n = params.n as f64;
    let last = g.len() - 1;
    let vals = (0..g.len())
        .map(|i| {
            if i == last {
                return 0.0;
            }
            let r = g.nodes[i];
            let v = u.values[i];
            let lap = if r == 0.0 {
                n * d2[i]
            } else {
                d2[i] + (n - 1.0) * d1[i] / r.tanh()
            };
            -lap - params.lambda * v - v.abs().powf(params.p - 1.0) * v
        })
        .collect();
    Profile::new(g.clone(), vals, 0)
}

/// Finite-difference solver for −Δφ − λφ = f in one sector, on a graded
/// grid and its refinement.
#[derive(Debug, Clone)]
pub struct HMinus1 {
    pub params: ModelParams,
    pub coarse: Arc<RadialGrid>,
    pub fine: Arc<RadialGrid>,
}

/// Dual norm with its self-consistency check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualNorm {
    /// ‖φ‖_λ, Richardson-extrapolated over the two grids.
    pub norm: f64,
    /// |⟨f, φ⟩ − ‖φ‖_λ²| / ‖φ‖_λ² on the finer grid.
    pub duality_residual: f64,
}

impl HMinus1 {
    pub fn new(gs: &GroundState) -> Result<Self> {
        Self::with_spacing(gs, 0.01)
    }

    pub fn with_spacing(gs: &GroundState, h: f64) -> Result<Self> {
        let coarse = Arc::new(fd_grid(&gs.profile, &gs.params, h)?);
        let fine = Arc::new(coarse.refined()?);
        Ok(Self {
            params: gs.params,
            coarse,
            fine,
        })
    }

    /// (‖φ‖², ⟨f,φ⟩) on one grid.
    fn solve_on(&self, grid: &RadialGrid, f: &Profile) -> Result<(f64, f64)> {
        let (k, first) = stiffness(grid, &self.params, f.l)?;
        let m = grid.len() - 1;
        let rhs: Vec<f64> = (first..m)
            .map(|i| grid.quad_weights[i] * f.eval(grid.nodes[i]))
            .collect();
        let phi = k.solve(&rhs)?;
        let energy = grid.omega * k.form(&phi);
        let pairing = grid.omega * phi.iter().zip(&rhs).map(|(a, b)| a * b).sum::<f64>();
        Ok((energy, pairing))
    }

    /// ‖f‖_{H⁻¹} = ‖φ‖_λ for −Δφ − λφ = f.
    pub fn norm(&self, f: &Profile) -> Result<DualNorm> {
        if f.grid.n != self.params.n {
            return Err(Error::Input("dimension mismatch".into()));
        }
        let (ec, _) = self.solve_on(&self.coarse, f)?;
        let (ef, pf) = self.solve_on(&self.fine, f)?;
        let e = (ef + (ef - ec) / 3.0).max(0.0);
        let dual = if ef > 0.0 { (pf - ef).abs() / ef } else { 0.0 };
        Ok(DualNorm {
            norm: e.sqrt(),
            duality_residual: dual,
        })
    }
}

/// ‖f‖_{H⁻¹} with a freshly built solver.
pub fn h_minus1_norm(f: &Profile, gs: &GroundState) -> Result<DualNorm> {
    HMinus1::new(gs)?.norm(f)
}

/// Full report for a radial u.
pub fn stability_report(u: &Profile, gs: &GroundState, hm: &HMinus1) -> Result<StabilityReport> {
    let d = deficit(u, gs)?;
    let pr = distance_to_manifold(u, gs)?;
    let res = euler_lagrange_residual(&on_ground_grid(u, gs), &gs.params)?;
    let r = hm.norm(&res)?.norm;
    let ratio = if d > 0.0 {
        pr.dist / d
    } else if pr.dist > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(StabilityReport {
        deficit: d,
        distance: pr.dist,
        c_star: pr.c_star,
        s_star: pr.s_star,
        ratio,
        residual_hminus1: r,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElRow {
    /// ‖u‖_λ² / ‖𝒰‖_λ².
    pub energy_ratio: f64,
    /// dist(u, 𝒵).
    pub distance: f64,
    /// ‖I'_λ(u)‖_{H⁻¹}.
    pub residual: f64,
    pub ratio: Option<f64>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElScan {
    pub rows: Vec<ElRow>,
    /// Largest finite ratio: the empirical constant.
    pub max_ratio: Option<f64>,
}

/// Residual floor below which a ratio is not formed, relative to ‖𝒰‖_λ.
pub const EL_RESIDUAL_FLOOR: f64 = 1e-9;

/// dist(u, 𝒵)/‖I'_λ(u)‖_{H⁻¹} over a family of nonnegative radial profiles
/// whose energy lies in [(1−ε₀), (1+ε₀)]·‖𝒰‖_λ².
pub fn euler_lagrange_scan(family: &[Profile], gs: &GroundState, hm: &HMinus1, eps0: f64) -> Result<ElScan> {
    let rows: Vec<ElRow> = family
        .par_iter()
        .map(|u| -> Result<ElRow> {
            let u = on_ground_grid(u, gs);
            let e = lambda_norm_sq(&u, &gs.params) / gs.energy();
            if !(e >= 1.0 - eps0 && e <= 1.0 + eps0) {
                return Ok(ElRow {
                    energy_ratio: e,
                    distance: f64::NAN,
                    residual: f64::NAN,
                    ratio: None,
                    flag: Some("energy outside window".into()),
                });
            }
            if u.values.iter().any(|&v| v < 0.0) {
                return Ok(ElRow {
                    energy_ratio: e,
                    distance: f64::NAN,
                    residual: f64::NAN,
                    ratio: None,
                    flag: Some("sign change".into()),
                });
            }
            let pr = distance_to_solutions(&u, gs)?;
            let res = hm.norm(&euler_lagrange_residual(&u, &gs.params)?)?.norm;
            let floor = EL_RESIDUAL_FLOOR * gs.energy().sqrt();
            let ratio = (res > floor).then(|| pr.dist / res);
            Ok(ElRow {
                energy_ratio: e,
                distance: pr.dist,
                residual: res,
                ratio,
                flag: (res <= floor).then(|| "residual below floor".to_string()),
            })
        })
        .collect::<Result<_>>()?;
    let max_ratio = rows
        .iter()
        .filter_map(|r| r.ratio)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    Ok(ElScan { rows, max_ratio })
}
