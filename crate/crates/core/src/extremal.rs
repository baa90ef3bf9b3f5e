//! The positive radial ground state by shooting on the initial height, the
//! best constant and the λ-energy.

use crate::error::{Error, Result};
use crate::geometry::geodesic_cosine;
use crate::grid::{AxisField, AxisGrid, Profile, RadialGrid, Tail};
use crate::ode::DormandPrince;
use crate::params::ModelParams;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Knobs for the shooting solver.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShootingConfig {
    /// Start of the Taylor/ODE hand-off.
    pub rho0: f64,
    /// Largest initial height tried while bracketing.
    pub a_max: f64,
    /// Smallest initial height tried while bracketing.
    pub a_min: f64,
    /// Relative bisection tolerance on the initial height.
    pub bisect_tol: f64,
    pub max_iter: usize,
    pub rtol: f64,
    /// Relative lo/hi disagreement that ends the trusted range.
    pub reliability: f64,
    /// Length of the window used to fit the exponential tail.
    pub fit_window: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            rho0: 1e-3,
            a_max: 1e12,
            a_min: 1e-10,
            bisect_tol: 1e-13,
            max_iter: 200,
            rtol: 1e-12,
            reliability: 1e-8,
            fit_window: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fate {
    /// u reached zero: initial height too large.
    Crossed,
    /// u turned upward or never decayed: too small.
    Undershot,
}

/// Result of the bisection on the initial height.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Shooting {
    pub params: ModelParams,
    pub config: ShootingConfig,
    /// Undershooting initial height.
    pub a_lo: f64,
    /// Overshooting initial height.
    pub a_hi: f64,
    pub iterations: usize,
    pub rho_end: f64,
}

/// Taylor/ODE hand-off radius: the configured ρ0, shrunk for tall
/// solutions so that it stays well inside the core.
fn hand_off(params: &ModelParams, a: f64, rho0: f64) -> f64 {
    let core = 1.0
        / (params.lambda + params.p * a.abs().powf(params.p - 1.0))
            .max(1.0)
            .sqrt();
    rho0.min(0.02 * core)
}

fn taylor(params: &ModelParams, a: f64, r: f64) -> [f64; 2] {
    let n = params.n as f64;
    let p = params.p;
    let f = params.lambda * a + a.powf(p);
    let fp = params.lambda + p * a.powf(p - 1.0);
    let c2 = -f / (2.0 * n);
    let c4 = -c2 * (fp + 2.0 * (n - 1.0) / 3.0) / (4.0 * (n + 2.0));
    let r2 = r * r;
    [a + c2 * r2 + c4 * r2 * r2, 2.0 * c2 * r + 4.0 * c4 * r2 * r]
}

fn rhs(params: &ModelParams) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + '_ {
    let nm1 = params.n as f64 - 1.0;
    move |r, y| {
        let u = y[0];
        let nl = u.abs().powf(params.p - 1.0) * u;
        [y[1], -nm1 * y[1] / r.tanh() - params.lambda * u - nl]
    }
}

impl Shooting {
    fn integrator(&self) -> DormandPrince {
        DormandPrince {
            rtol: self.config.rtol,
            ..DormandPrince::default()
        }
    }

    fn fate(params: &ModelParams, cfg: &ShootingConfig, rho_end: f64, a: f64) -> Fate {
        let dp = DormandPrince {
            rtol: cfg.rtol,
            ..DormandPrince::default()
        };
        let mut fate = Fate::Undershot;
        let r0 = hand_off(params, a, cfg.rho0);
        dp.integrate(rhs(params), r0, taylor(params, a, r0), rho_end, &[], |_, y| {
            if y[0] <= 0.0 {
                fate = Fate::Crossed;
                true
            } else {
                y[1] >= 0.0
            }
        });
        fate
    }

    /// Brackets and bisects the initial height of the ground state.
    pub fn solve(params: &ModelParams, cfg: ShootingConfig) -> Result<Self> {
        let rho_end = (40.0 / params.gap()).clamp(20.0, 200.0);
        let fate = |a: f64| Self::fate(params, &cfg, rho_end, a);
        let (mut lo, mut hi);
        if fate(1.0) == Fate::Crossed {
            hi = 1.0;
            lo = 0.5;
            while fate(lo) == Fate::Crossed {
                hi = lo;
                lo *= 0.5;
                if lo < cfg.a_min {
                    return Err(Error::NoGroundStateBracket {
                        lo: cfg.a_min,
                        hi: cfg.a_max,
                    });
                }
            }
        } else {
            lo = 1.0;
            hi = 2.0;
            while fate(hi) == Fate::Undershot {
                lo = hi;
                hi *= 2.0;
                if hi > cfg.a_max {
                    return Err(Error::NoGroundStateBracket {
                        lo: cfg.a_min,
                        hi: cfg.a_max,
                    });
                }
            }
        }
        let mut iterations = 0;
        while hi - lo > cfg.bisect_tol * hi {
            if iterations >= cfg.max_iter {
                return Err(Error::IterationLimit("ground-state bisection"));
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match fate(mid) {
                Fate::Crossed => hi = mid,
                Fate::Undershot => lo = mid,
            }
            iterations += 1;
        }
        Ok(Self {
            params: *params,
            config: cfg,
            a_lo: lo,
            a_hi: hi,
            iterations,
            rho_end,
        })
    }

    pub fn height(&self) -> f64 {
        0.5 * (self.a_lo + self.a_hi)
    }

    fn trajectory(&self, a: f64, nodes: &[f64]) -> Vec<Option<[f64; 2]>> {
        let cfg = &self.config;
        let mut out = vec![None; nodes.len()];
        let r0 = hand_off(&self.params, a, cfg.rho0);
        let first = nodes.partition_point(|&r| r <= r0);
        for (i, &r) in nodes.iter().enumerate().take(first) {
            out[i] = Some(taylor(&self.params, a, r));
        }
        let end = nodes.last().copied().unwrap_or(0.0).min(self.rho_end);
        if end > r0 {
            let tr = self.integrator().integrate(
                rhs(&self.params),
                r0,
                taylor(&self.params, a, r0),
                end,
                &nodes[first..],
                |_, y| y[0] <= 0.0 || y[1] >= 0.0,
            );
            for (o, v) in out[first..].iter_mut().zip(tr.outputs) {
                *o = v;
            }
        }
        out
    }

    /// Fills `values[from..]` with the decaying branch, obtained by
    /// integrating the log-derivative z = u'/u inward from far out, where the
    /// decaying solution is the stable direction, and matching the height at
    /// the last trusted node.
    fn continue_backward(&self, nodes: &[f64], values: &mut [f64], from: usize) {
        let params = &self.params;
        let anchor = from - 1;
        let rho_a = nodes[anchor];
        let rho_max = *nodes.last().expect("non-empty grid");
        let rho_far = rho_max + 20.0 / params.gap();
        let (kappa, _) = params.decay_rates();
        let nm1 = params.n as f64 - 1.0;
        // outputs in t = -ρ, ascending
        let outs: Vec<f64> = nodes[anchor..].iter().rev().map(|r| -r).collect();
        let dp = DormandPrince {
            rtol: self.config.rtol,
            atol: 1e-14,
            h_init: 1e-3,
            h_max: 0.05,
            ..DormandPrince::default()
        };
        let mut shift: Option<f64> = None;
        let mut logs = vec![0.0; outs.len()];
        for _ in 0..4 {
            let c = shift;
            let tr = dp.integrate(
                |t: f64, y: &[f64; 2]| {
                    let r = -t;
                    let z = y[0];
                    let nl = match c {
                        Some(c) => ((params.p - 1.0) * (y[1] + c)).exp(),
                        None => 0.0,
                    };
                    [z * z + nm1 * z / r.tanh() + params.lambda + nl, -z]
                },
                -rho_far,
                [-kappa, 0.0],
                -rho_a,
                &outs,
                |_, _| false,
            );
            for (l, o) in logs.iter_mut().zip(&tr.outputs) {
                *l = o.expect("backward pass covers every node")[1];
            }
            // logs are ordered from ρ_max down to the anchor
            let new_shift = values[anchor].ln() - logs[logs.len() - 1];
            let done = shift.map_or(false, |s| (s - new_shift).abs() < 1e-13);
            shift = Some(new_shift);
            if done {
                break;
            }
        }
        let c = shift.expect("at least one pass");
        let m = logs.len();
        for (k, i) in (from..nodes.len()).enumerate() {
            // node i sits at position m-2-k in the reversed output list
            values[i] = (logs[m - 2 - k] + c).exp();
        }
    }

    /// Samples the ground state on `grid`, replacing the untrusted far field
    /// by a fitted exponential.
    pub fn profile_on(&self, grid: Arc<RadialGrid>) -> Result<Profile> {
        let nodes = &grid.nodes;
        let lo = self.trajectory(self.a_lo, nodes);
        let hi = self.trajectory(self.a_hi, nodes);
        let mut values = vec![0.0; nodes.len()];
        let mut rel_end = nodes.len();
        for i in 0..nodes.len() {
            match (lo[i], hi[i]) {
                (Some(a), Some(b)) if a[0] > 0.0 && b[0] > 0.0 => {
                    let mid = 0.5 * (a[0] + b[0]);
                    if (a[0] - b[0]).abs() > self.config.reliability * mid {
                        rel_end = i;
                        break;
                    }
                    values[i] = mid;
                }
                _ => {
                    rel_end = i;
                    break;
                }
            }
        }
        if rel_end < 2 {
            return Err(Error::CorruptProfile(
                "shooting trajectories disagree from the start".into(),
            ));
        }
        if rel_end < nodes.len() {
            self.continue_backward(nodes, &mut values, rel_end);
        }
        let window_start = grid.rho_max - self.config.fit_window;
        let fit: Vec<(f64, f64)> = (0..nodes.len())
            .filter(|&i| nodes[i] >= window_start && values[i] > 0.0)
            .map(|i| (nodes[i], values[i].ln()))
            .collect();
        if fit.len() < 3 {
            return Err(Error::CorruptProfile("too few nodes for a tail fit".into()));
        }
        let (slope, intercept) = crate::fit::linear_fit(&fit);
        let tail = Tail {
            exponent: -slope,
            amplitude: intercept.exp(),
            start: grid.rho_max,
        };
        Ok(Profile {
            grid,
            values,
            l: 0,
            tail: Some(tail),
        })
    }
}

/// Panel grid refined near the origin to the core width of a solution with
/// initial height `a`.
pub fn adapted_grid(params: &ModelParams, a: f64, rho_max: f64) -> Result<RadialGrid> {
    let curv = params.lambda + params.p * a.powf(params.p - 1.0);
    let core = 1.0 / curv.max(1.0).sqrt();
    let coarse = crate::grid::DEFAULT_PANEL_WIDTH;
    let fine = coarse.min(0.5 * core);
    let mut edges = vec![0.0];
    let mut x = 0.0;
    let mut w = fine;
    while x < rho_max {
        if x >= 6.0 * core {
            w = (w * 1.5).min(coarse);
        }
        x = (x + w).min(rho_max);
        if rho_max - x < 0.25 * w {
            x = rho_max;
        }
        edges.push(x);
    }
    RadialGrid::from_edges(
        params.n,
        edges,
        crate::grid::DEFAULT_PANEL_ORDER,
        crate::grid::DEFAULT_TAIL_TOL,
    )
}

/// Ground state on its adapted default grid, with the shooting record.
pub fn ground_state(params: &ModelParams) -> Result<(Profile, Shooting)> {
    let shot = Shooting::solve(params, ShootingConfig::default())?;
    let grid = Arc::new(adapted_grid(params, shot.height(), params.default_rho_max())?);
    let prof = shot.profile_on(grid)?;
    let res = ode_residual(&prof, params);
    if !(res <= GROUND_STATE_TOL * shot.height().powf(params.p).max(1.0)) {
        return Err(Error::CorruptProfile(format!(
            "ground-state ODE residual {res:e} too large"
        )));
    }
    Ok((prof, shot))
}

/// Default relative ODE-residual tolerance for ground states.
pub const GROUND_STATE_TOL: f64 = 1e-6;

/// Solves for the ground state and samples it on `grid`; fails when the
/// interior ODE residual exceeds `tol`.
pub fn solve_ground_state(params: &ModelParams, grid: Arc<RadialGrid>, tol: f64) -> Result<Profile> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance {tol} must be positive")));
    }
    if grid.n != params.n {
        return Err(Error::Input("grid dimension differs from n".into()));
    }
    let shot = Shooting::solve(params, ShootingConfig::default())?;
    let prof = shot.profile_on(grid)?;
    let res = ode_residual(&prof, params);
    if !(res <= tol) {
        return Err(Error::CorruptProfile(format!(
            "ground-state ODE residual {res:e} exceeds {tol:e}"
        )));
    }
    Ok(prof)
}

/// Max |u'' + (n-1)coth ρ u' + λu + u^p| over the nodes below ρ_max, by the
/// grid's own differentiation.
pub fn ode_residual(profile: &Profile, params: &ModelParams) -> f64 {
    let g = &profile.grid;
    let u = &profile.values;
    let d1 = g.derivative(u);
    let d2 = g.second_derivative(u);
    let n = params.n as f64;
    let mut worst = 0.0f64;
    for (i, &r) in g.nodes.iter().enumerate().take(g.len() - 1) {
        let nl = u[i].abs().powf(params.p - 1.0) * u[i];
        let lap = if r == 0.0 {
            n * d2[i]
        } else {
            d2[i] + (n - 1.0) * d1[i] / r.tanh()
        };
        worst = worst.max((lap + params.lambda * u[i] + nl).abs());
    }
    worst
}

/// ‖u‖_λ² = ∫ (u'² + l(l+n-2) u²/sinh²ρ − λu²) dv for a sector-l profile.
pub fn lambda_norm_sq(u: &Profile, params: &ModelParams) -> f64 {
    let g = &u.grid;
    let d = u.derivative();
    let n = params.n as f64;
    let ang = (u.l as f64) * (u.l as f64 + n - 2.0);
    let integrand: Vec<f64> = g
        .nodes
        .iter()
        .zip(&u.values)
        .zip(&d)
        .zip(&g.quad_weights)
        .map(|(((&r, &v), &dv), &w)| {
            if w == 0.0 {
                return 0.0;
            }
            let mut e = dv * dv - params.lambda * v * v;
            if ang > 0.0 && r > 0.0 {
                let s = r.sinh();
                e += ang * v * v / (s * s);
            }
            e
        })
        .collect();
    g.integrate(&integrand)
}

/// ⟨u, v⟩_λ for two profiles of the same sector on one grid.
pub fn lambda_inner(u: &Profile, v: &Profile, params: &ModelParams) -> f64 {
    let g = &u.grid;
    let du = u.derivative();
    let dv = v.derivative();
    let n = params.n as f64;
    let ang = (u.l as f64) * (u.l as f64 + n - 2.0);
    let integrand: Vec<f64> = (0..g.len())
        .map(|i| {
            if g.quad_weights[i] == 0.0 {
                return 0.0;
            }
            let r = g.nodes[i];
            let mut e = du[i] * dv[i] - params.lambda * u.values[i] * v.values[i];
            if ang > 0.0 && r > 0.0 {
                let s = r.sinh();
                e += ang * u.values[i] * v.values[i] / (s * s);
            }
            e
        })
        .collect();
    g.integrate(&integrand)
}

/// Best constant together with the energy identity check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BestConstant {
    /// Rayleigh quotient ‖𝒰‖_λ² / ‖𝒰‖_{p+1}².
    pub s: f64,
    /// (∫𝒰^{p+1})^{(p-1)/(p+1)}; equals `s` for an exact solution.
    pub s_from_lp: f64,
    pub lambda_norm_sq: f64,
    pub lp_integral: f64,
    /// |‖𝒰‖_λ² − ∫𝒰^{p+1}| / ‖𝒰‖_λ².
    pub consistency: f64,
}

impl BestConstant {
    /// S^{(p+1)/(p-1)}, the λ-energy of the normalised extremal.
    pub fn energy_level(&self, params: &ModelParams) -> f64 {
        self.s.powf((params.p + 1.0) / (params.p - 1.0))
    }

    /// A-posteriori size of quadrature noise on energies of order ‖𝒰‖_λ².
    pub fn noise(&self) -> f64 {
        (self.consistency.max(1e-14)) * self.lambda_norm_sq
    }
}

pub const CONSISTENCY_TOL: f64 = 1e-6;

pub fn best_constant(profile: &Profile, params: &ModelParams) -> Result<BestConstant> {
    best_constant_with_tol(profile, params, CONSISTENCY_TOL)
}

pub fn best_constant_with_tol(profile: &Profile, params: &ModelParams, tol: f64) -> Result<BestConstant> {
    let norm = lambda_norm_sq(profile, params);
    let lp = profile.l_p_norm_pow(params.p + 1.0);
    if !(norm > 0.0) || !(lp > 0.0) {
        return Err(Error::CorruptProfile("non-positive energy".into()));
    }
    let consistency = (norm - lp).abs() / norm;
    if consistency > tol {
        return Err(Error::NormalizationInconsistency(consistency));
    }
    let q = params.p + 1.0;
    Ok(BestConstant {
        s: norm / lp.powf(2.0 / q),
        s_from_lp: lp.powf((params.p - 1.0) / q),
        lambda_norm_sq: norm,
        lp_integral: lp,
        consistency,
    })
}

/// A solved ground state with its best constant and a 2D grid for
/// translated bubbles.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub params: ModelParams,
    pub profile: Profile,
    pub best: BestConstant,
    pub axis: Arc<AxisGrid>,
    pub shooting: Option<Shooting>,
    pub table: Arc<BubbleTable>,
}

/// Cubic Hermite table of a radial profile and its derivative on a fine
/// uniform mesh, for fast evaluation at many scattered distances.
#[derive(Debug, Clone)]
pub struct BubbleTable {
    h: f64,
    vals: Vec<f64>,
    ders: Vec<f64>,
    profile: Profile,
}

impl BubbleTable {
    /// Mesh spacing min(1e-3, core/50) where core is the width of the peak.
    pub fn new(profile: &Profile, params: &ModelParams) -> Self {
        let a = profile.eval(0.0).abs();
        let core = 1.0 / (params.lambda + params.p * a.powf(params.p - 1.0)).max(1.0).sqrt();
        let rho_max = profile.grid.rho_max;
        let m = (rho_max / (1e-3f64).min(core / 50.0)).ceil() as usize;
        let h = rho_max / m as f64;
        let (vals, ders) = (0..=m).map(|i| profile.eval_with_derivative(i as f64 * h)).unzip();
        Self {
            h,
            vals,
            ders,
            profile: profile.clone(),
        }
    }

    /// (value, derivative) at distance d ≥ 0.
    #[inline]
    pub fn eval(&self, d: f64) -> (f64, f64) {
        let x = d / self.h;
        let i = x.floor() as usize;
        if i + 1 >= self.vals.len() {
            return self.profile.eval_with_derivative(d);
        }
        let t = x - i as f64;
        let (y0, y1) = (self.vals[i], self.vals[i + 1]);
        let (m0, m1) = (self.ders[i] * self.h, self.ders[i + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        let v =
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1;
        let dv = (6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1;
        (v, dv / self.h)
    }
}

impl GroundState {
    pub fn solve(params: &ModelParams) -> Result<Self> {
        let (profile, shot) = ground_state(params)?;
        let mut gs = Self::from_profile(params, profile)?;
        gs.shooting = Some(shot);
        Ok(gs)
    }

    /// Wraps an existing radial profile on a panel grid.
    pub fn from_profile(params: &ModelParams, profile: Profile) -> Result<Self> {
        if profile.l != 0 || profile.grid.n != params.n {
            return Err(Error::Input(
                "ground state must be a radial profile in dimension n".into(),
            ));
        }
        let best = best_constant(&profile, params)?;
        let axis = Arc::new(AxisGrid::default_for(profile.grid.clone())?);
        let table = Arc::new(BubbleTable::new(&profile, params));
        Ok(Self {
            params: *params,
            profile,
            best,
            axis,
            shooting: None,
            table,
        })
    }

    /// ‖𝒰‖_λ² on the grid.
    pub fn energy(&self) -> f64 {
        self.best.lambda_norm_sq
    }
}

/// Value and d-derivative of the radial profile at the distance from
/// (ρ, θ) to the point at signed offset `s` on the axis.
pub fn translated_bubble_point(profile: &Profile, s: f64, rho: f64, theta: f64) -> (f64, f64) {
    let th = if s >= 0.0 { theta } else { std::f64::consts::PI - theta };
    let d = geodesic_cosine(rho, s.abs(), th);
    let (v, dv) = profile.eval_with_derivative(d);
    (v, dv)
}

/// 𝒰∘τ_b on the axisymmetric grid, b at geodesic offset `s` along the axis
/// (negative `s` places it on the opposite side).
pub fn translated_bubble_values(profile: &Profile, s: f64, grid2d: &Arc<AxisGrid>) -> Result<AxisField> {
    if profile.l != 0 {
        return Err(Error::Input("translated bubbles need a radial profile".into()));
    }
    if s == 0.0 {
        return Ok(AxisField::from_radial(grid2d, profile));
    }
    Ok(grid2d.field(|r, th| translated_bubble_point(profile, s, r, th).0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup(n: usize, p: f64, l: f64) -> (ModelParams, Profile) {
        let params = ModelParams::new(n, p, l).unwrap();
        let (prof, _) = ground_state(&params).unwrap();
        (params, prof)
    }

    #[test]
    fn taylor_start_satisfies_the_ode() {
        let params = ModelParams::new(3, 2.0, 0.5).unwrap();
        let r = 1e-2;
        let h = 1e-4;
        let a = 3.7;
        let y = taylor(&params, a, r);
        let yp = taylor(&params, a, r + h);
        let ym = taylor(&params, a, r - h);
        let upp = (yp[0] - 2.0 * y[0] + ym[0]) / (h * h);
        let res = upp + 2.0 * y[1] / r.tanh() + 0.5 * y[0] + y[0] * y[0];
        assert!(res.abs() < 1e-5, "{res}");
    }

    #[test]
    fn ground_state_n3_known_height() {
        let (params, prof) = setup(3, 2.0, 0.5);
        // independent reference from a separate shooting implementation
        assert_relative_eq!(prof.values[0], 3.6827613450583874, max_relative = 1e-9);
        assert!(prof.values.windows(2).all(|w| w[1] < w[0]));
        assert!(prof.values.iter().all(|&v| v > 0.0));
        assert!(ode_residual(&prof, &params) < 1e-6);
        let bc = best_constant(&prof, &params).unwrap();
        assert!(bc.consistency < 1e-6, "{}", bc.consistency);
        assert_relative_eq!(bc.s, bc.s_from_lp, max_relative = 1e-6);
    }

    #[test]
    fn closed_form_solution_n3_p2_lambda0() {
        // 6 sech²ρ solves u'' + 2 coth ρ u' + u² = 0
        let (params, prof) = setup(3, 2.0, 0.0);
        for (&r, &v) in prof.grid.nodes.iter().zip(&prof.values) {
            let exact = 6.0 / r.cosh().powi(2);
            assert!((v - exact).abs() <= 1e-8 * exact + 1e-300, "rho {r}: {v} vs {exact}");
        }
        let t = prof.tail.unwrap();
        assert_relative_eq!(t.exponent, 2.0, max_relative = 1e-8);
        assert_relative_eq!(t.amplitude, 24.0, max_relative = 1e-6);
        let bc = best_constant(&prof, &params).unwrap();
        // ∫ u³ dv = 4π·216 ∫ tanh²ρ sech⁴ρ dρ = 4π·216·2/15
        assert_relative_eq!(
            bc.lp_integral,
            4.0 * std::f64::consts::PI * 6f64.powi(3) * (2.0 / 15.0),
            max_relative = 1e-9
        );
    }

    #[test]
    fn lambda_zero_tail_exponent() {
        let (_, prof) = setup(3, 2.0, 0.0);
        let t = prof.tail.unwrap();
        assert!((t.exponent - 2.0).abs() < 0.04, "{}", t.exponent);
    }

    #[test]
    fn scaled_profile_is_inconsistent() {
        let (params, prof) = setup(3, 2.0, 0.5);
        let scaled = prof.scaled(1.5);
        assert!(matches!(
            best_constant(&scaled, &params),
            Err(Error::NormalizationInconsistency(_))
        ));
    }

    #[test]
    fn lambda_norm_of_zero_is_zero() {
        let params = ModelParams::new(3, 2.0, 0.5).unwrap();
        let grid = Arc::new(RadialGrid::default_panels(3, 30.0).unwrap());
        let z = Profile::from_fn(grid, 0, |_| 0.0);
        assert_eq!(lambda_norm_sq(&z, &params), 0.0);
    }

    #[test]
    fn residual_by_independent_finite_differences() {
        let (params, prof) = setup(4, 2.5, 0.0);
        let h = 2e-4;
        let scale = prof.values[0].powf(2.5);
        for &r in &[0.3, 1.0, 2.5, 4.0] {
            let (u, _) = prof.eval_with_derivative(r);
            let up = prof.eval(r + h);
            let um = prof.eval(r - h);
            let d1 = (up - um) / (2.0 * h);
            let d2 = (up - 2.0 * u + um) / (h * h);
            let res = d2 + 3.0 * d1 / r.tanh() + u.powf(2.5);
            assert!(res.abs() < 1e-6 * scale, "r = {r}: {res}");
        }
        let _ = params;
    }

    #[test]
    fn translated_bubble_at_zero_is_radial() {
        let (params, prof) = setup(3, 2.0, 0.5);
        let ax = Arc::new(AxisGrid::default_for(prof.grid.clone()).unwrap());
        let f = translated_bubble_values(&prof, 0.0, &ax).unwrap();
        let nt = ax.n_theta();
        for i in (0..ax.n_rho()).step_by(37) {
            let row = &f.values[i * nt..(i + 1) * nt];
            assert!(row.iter().all(|&v| v == row[0]));
        }
        let _ = params;
    }

    #[test]
    fn concentrated_critical_ground_states() {
        // n = 4, p = 3: the peak grows without bound as λ → 2⁺
        let mut last = 0.0;
        let mut s_prev = 0.0;
        for lam in [2.2, 2.1, 2.05] {
            let params = ModelParams::new(4, 3.0, lam).unwrap();
            let (prof, shot) = ground_state(&params).unwrap();
            let a = shot.height();
            assert!(a > 2.0 * last, "λ = {lam}: height {a}");
            last = a;
            let b = best_constant(&prof, &params).unwrap();
            assert!(b.consistency < 1e-6, "λ = {lam}: {b:?}");
            // S increases as λ decreases towards n(n−2)/4
            assert!(b.s > s_prev, "λ = {lam}: {} after {s_prev}", b.s);
            s_prev = b.s;
        }
    }
}
