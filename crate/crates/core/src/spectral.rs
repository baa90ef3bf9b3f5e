//! Sector-wise generalized eigenproblem of (−Δ − λ)ψ = μ 𝒰^{p−1} ψ by
//! symmetric finite differences, Sturm bisection and inverse iteration.

use crate::error::{Error, Result};
use crate::extremal::{lambda_norm_sq, translated_bubble_point};
use crate::grid::{Layout, Profile, RadialGrid};
use crate::params::ModelParams;
use crate::quadrature::GaussLegendre;
use crate::tridiag::{inverse_iteration, pencil_eigenvalue, SymTridiag};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Discretization knobs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectralConfig {
    /// Spacing in the stretched coordinate (far-field spacing in ρ).
    pub h: f64,
    /// Eigenvalues above cutoff_factor·p are flagged untrusted.
    pub cutoff_factor: f64,
    /// Combine h and h/2 by Richardson extrapolation.
    pub richardson: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            h: 0.01,
            cutoff_factor: 4.0,
            richardson: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub l: usize,
    /// Ascending; Richardson-extrapolated when enabled.
    pub eigenvalues: Vec<f64>,
    /// Values on the finer grid before extrapolation.
    pub raw_eigenvalues: Vec<f64>,
    /// Values on the coarse grid (empty without extrapolation).
    pub coarse_eigenvalues: Vec<f64>,
    /// Unit 𝒰^{p−1}-weighted norm, largest entry positive.
    pub eigenfunctions: Vec<Profile>,
    pub weighted_norms: Vec<f64>,
    pub cutoff: f64,
}

impl SpectralResult {
    /// Number of leading eigenvalues below the trust cutoff.
    pub fn trusted(&self) -> usize {
        self.eigenvalues.iter().take_while(|&&m| m < self.cutoff).count()
    }
}

/// Graded FD grid fitted to the core of `profile`.
pub fn fd_grid(profile: &Profile, params: &ModelParams, h: f64) -> Result<RadialGrid> {
    let a = profile.eval(0.0);
    let curv = params.lambda + params.p * a.abs().powf(params.p - 1.0);
    let core = 1.0 / curv.max(1.0).sqrt();
    let r0 = (2.0 * core).min(1.0);
    RadialGrid::graded(params.n, profile.grid.rho_max, h, r0, (8.0 * core).max(1.0))
}

/// Stiffness K, weight D and the index of the first unknown for sector l.
struct Pencil {
    k: SymTridiag,
    d: Vec<f64>,
    first: usize,
}

/// Finite-difference λ-form of sector l on a nodal grid: the matrix K with
/// ω·ψᵀKψ ≈ ‖ψ‖_λ², Dirichlet at ρ_max (and at 0 for l ≥ 1), together with
/// the index of the first unknown.
pub(crate) fn stiffness(grid: &RadialGrid, params: &ModelParams, l: usize) -> Result<(SymTridiag, usize)> {
    let x = &grid.nodes;
    let m = x.len() - 1;
    let n = params.n as i32;
    let gl = GaussLegendre::new(8);
    let ang = l as f64 * (l as f64 + params.n as f64 - 2.0);
    let first = if l == 0 { 0 } else { 1 };
    let mut diag = Vec::with_capacity(m);
    let mut off = Vec::with_capacity(m);
    // flux coefficient over [x_i, x_{i+1}]: mean of sinh^{n-1} / length
    let flux: Vec<f64> = (0..m)
        .map(|i| {
            let len = x[i + 1] - x[i];
            gl.integrate(x[i], x[i + 1], |s| s.sinh().powi(n - 1)) / (len * len)
        })
        .collect();
    for i in first..m {
        let a = if i == 0 { 0.0 } else { 0.5 * (x[i - 1] + x[i]) };
        let b = 0.5 * (x[i] + x[i + 1]);
        let mut kd = flux[i] - params.lambda * grid.quad_weights[i];
        if i > 0 {
            kd += flux[i - 1];
        }
        if ang > 0.0 {
            kd += ang * gl.integrate(a, b, |s| s.sinh().powi(n - 3));
        }
        diag.push(kd);
        if i + 1 < m {
            off.push(-flux[i]);
        }
    }
    Ok((SymTridiag::new(diag, off)?, first))
}

fn assemble(grid: &RadialGrid, u: &[f64], params: &ModelParams, l: usize) -> Result<Pencil> {
    let (k, first) = stiffness(grid, params, l)?;
    let m = grid.len() - 1;
    let mut d = Vec::with_capacity(m);
    for i in first..m {
        let w = u[i].abs().powf(params.p - 1.0);
        if !(u[i] > 0.0) || !w.is_finite() {
            return Err(Error::CorruptProfile(format!(
                "weight U^(p-1) not positive at rho = {}",
                grid.nodes[i]
            )));
        }
        d.push(grid.quad_weights[i] * w);
    }
    Ok(Pencil { k, d, first })
}

/// k lowest eigenpairs on one grid.
fn solve_on(
    grid: Arc<RadialGrid>,
    profile: &Profile,
    params: &ModelParams,
    l: usize,
    k: usize,
) -> Result<(Vec<f64>, Vec<Profile>, Vec<f64>)> {
    let u: Vec<f64> = grid.nodes.iter().map(|&r| profile.eval(r)).collect();
    let pen = assemble(&grid, &u, params, l)?;
    let mut lo = 0.0;
    while pen.k.count_below(lo, &pen.d) > 0 {
        lo = 2.0 * lo - 1.0;
        if lo < -1e12 {
            return Err(Error::SingularOperator("pencil unbounded below".into()));
        }
    }
    let mut hi = 4.0 * params.p;
    while pen.k.count_below(hi, &pen.d) < k {
        hi *= 2.0;
        if hi > 1e14 {
            return Err(Error::IterationLimit("eigenvalue upper bracket"));
        }
    }
    let mut vals = Vec::with_capacity(k);
    let mut funcs = Vec::with_capacity(k);
    let mut norms = Vec::with_capacity(k);
    for j in 0..k {
        let mu = pencil_eigenvalue(&pen.k, &pen.d, j, lo, hi, 4.0 * f64::EPSILON)?;
        let v = inverse_iteration(&pen.k, &pen.d, mu)?;
        let mut full = vec![0.0; grid.len()];
        full[pen.first..pen.first + v.len()].copy_from_slice(&v);
        // xᵀDx = 1 discretely; the continuum weighted norm carries ω
        let scale = 1.0 / grid.omega.sqrt();
        full.iter_mut().for_each(|x| *x *= scale);
        let prof = Profile::new(grid.clone(), full, l)?;
        norms.push(weighted_norm(&prof, &u, params));
        vals.push(mu);
        funcs.push(prof);
    }
    Ok((vals, funcs, norms))
}

fn weighted_norm(f: &Profile, u: &[f64], params: &ModelParams) -> f64 {
    let w: Vec<f64> = u.iter().map(|v| v.abs().powf(params.p - 1.0)).collect();
    f.weighted_dot(f, &w).sqrt()
}

/// The k lowest eigenvalues of sector l with default settings.
pub fn sector_spectrum(profile: &Profile, params: &ModelParams, l: usize, k: usize) -> Result<SpectralResult> {
    sector_spectrum_with(profile, params, l, k, SpectralConfig::default())
}

pub fn sector_spectrum_with(
    profile: &Profile,
    params: &ModelParams,
    l: usize,
    k: usize,
    cfg: SpectralConfig,
) -> Result<SpectralResult> {
    if k == 0 {
        return Err(Error::Input("eigenvalue count must be at least 1".into()));
    }
    if profile.l != 0 {
        return Err(Error::Input("weight profile must be radial".into()));
    }
    let coarse = Arc::new(fd_grid(profile, params, cfg.h)?);
    let (c_vals, c_funcs, c_norms) = solve_on(coarse.clone(), profile, params, l, k)?;
    if !cfg.richardson {
        return Ok(SpectralResult {
            l,
            raw_eigenvalues: c_vals.clone(),
            eigenvalues: c_vals,
            coarse_eigenvalues: Vec::new(),
            eigenfunctions: c_funcs,
            weighted_norms: c_norms,
            cutoff: cfg.cutoff_factor * params.p,
        });
    }
    let fine = Arc::new(coarse.refined()?);
    let (f_vals, f_funcs, _) = solve_on(fine, profile, params, l, k)?;
    let extrap = f_vals.iter().zip(&c_vals).map(|(f, c)| f + (f - c) / 3.0).collect();
    // eigenfunctions extrapolated on the coarse nodes (every other fine node)
    let u: Vec<f64> = coarse.nodes.iter().map(|&r| profile.eval(r)).collect();
    let w: Vec<f64> = u.iter().map(|v| v.abs().powf(params.p - 1.0)).collect();
    let mut funcs = Vec::with_capacity(k);
    let mut norms = Vec::with_capacity(k);
    for (pc, pf) in c_funcs.iter().zip(&f_funcs) {
        let sub: Vec<f64> = pf.values.iter().step_by(2).copied().collect();
        if sub.len() != pc.values.len() {
            funcs.push(pc.clone());
            norms.push(c_norms[funcs.len() - 1]);
            continue;
        }
        let sub = Profile::new(coarse.clone(), sub, l)?;
        let c = sub.weighted_dot(pc, &w) / pc.weighted_dot(pc, &w);
        let vals: Vec<f64> = sub
            .values
            .iter()
            .zip(&pc.values)
            .map(|(f, g)| (4.0 * f - c * g) / 3.0)
            .collect();
        let mut e = Profile::new(coarse.clone(), vals, l)?;
        let nrm = weighted_norm(&e, &u, params);
        e.values.iter_mut().for_each(|v| *v /= nrm);
        norms.push(weighted_norm(&e, &u, params));
        funcs.push(e);
    }
    Ok(SpectralResult {
        l,
        eigenvalues: extrap,
        raw_eigenvalues: f_vals,
        coarse_eigenvalues: c_vals,
        eigenfunctions: funcs,
        weighted_norms: norms,
        cutoff: cfg.cutoff_factor * params.p,
    })
}

/// ∫ a b 𝒰^{p−1} dv, evaluated on the (high-order) grid of `profile`.
pub fn weighted_inner(a: &Profile, b: &Profile, profile: &Profile, params: &ModelParams) -> f64 {
    let g = &profile.grid;
    let w: Vec<f64> = profile.values.iter().map(|v| v.abs().powf(params.p - 1.0)).collect();
    let on = |f: &Profile| {
        if Arc::ptr_eq(&f.grid, g) {
            f.clone()
        } else {
            f.resample(g.clone())
        }
    };
    on(a).weighted_dot(&on(b), &w)
}

/// Cosine of the 𝒰^{p−1}-weighted angle between the first eigenfunction
/// and 𝒰.
pub fn first_eigenfunction_check(result: &SpectralResult, profile: &Profile, params: &ModelParams) -> Result<f64> {
    if result.l != 0 || result.eigenfunctions.is_empty() {
        return Err(Error::Input("alignment needs a sector-0 result".into()));
    }
    Ok(weighted_cosine(&result.eigenfunctions[0], profile, profile, params))
}

/// |⟨a, b⟩_w| / (‖a‖_w ‖b‖_w).
pub fn weighted_cosine(a: &Profile, b: &Profile, profile: &Profile, params: &ModelParams) -> f64 {
    let ab = weighted_inner(a, b, profile, params);
    let aa = weighted_inner(a, a, profile, params);
    let bb = weighted_inner(b, b, profile, params);
    (ab.abs() / (aa * bb).sqrt()).min(1.0)
}

/// Sector-1 coefficient of the translation derivative of 𝒰.
#[derive(Debug, Clone)]
pub struct TranslationMode {
    pub phi: Profile,
    /// ‖φ‖_λ² / ∫ φ² 𝒰^{p−1} dv in sector 1.
    pub rayleigh: f64,
    /// Set when the quotient misses p by more than 10%.
    pub warning: Option<String>,
}

/// Central difference in the offset of 𝒰∘τ, projected on cos θ.
pub fn phi_from_translation(profile: &Profile, params: &ModelParams, h: f64) -> Result<TranslationMode> {
    if !(h > 0.0) || h >= 1.0 {
        return Err(Error::InvalidParams(format!(
            "translation step h = {h} must lie in (0, 1)"
        )));
    }
    let n = params.n as i32;
    let gl = GaussLegendre::new(48);
    let pi = std::f64::consts::PI;
    // ∫_0^π cos²θ sin^{n-2}θ dθ
    let norm: f64 = gl.integrate(0.0, pi, |t| t.cos().powi(2) * t.sin().powi(n - 2));
    let grid = profile.grid.clone();
    let values: Vec<f64> = grid
        .nodes
        .iter()
        .map(|&r| {
            if r == 0.0 {
                return 0.0;
            }
            let c = gl.integrate(0.0, pi, |t| {
                let up = translated_bubble_point(profile, h, r, t).0;
                let dn = translated_bubble_point(profile, -h, r, t).0;
                (up - dn) / (2.0 * h) * t.cos() * t.sin().powi(n - 2)
            });
            c / norm
        })
        .collect();
    let phi = Profile::new(grid.clone(), values, 1)?;
    let u: Vec<f64> = profile.values.clone();
    let num = lambda_norm_sq(&phi, params);
    let den = weighted_norm(&phi, &u, params).powi(2);
    let rayleigh = num / den;
    let warning = if ((rayleigh - params.p) / params.p).abs() > 0.1 {
        Some(format!(
            "step h = {h} too large: quotient {rayleigh} vs p = {}",
            params.p
        ))
    } else {
        None
    };
    Ok(TranslationMode { phi, rayleigh, warning })
}

/// Whether a grid is one of the finite-difference layouts.
pub fn is_fd_grid(grid: &RadialGrid) -> bool {
    !matches!(grid.layout, Layout::Panels { .. })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremal::ground_state;

    fn setup(n: usize, p: f64, l: f64) -> (ModelParams, Profile) {
        let params = ModelParams::new(n, p, l).unwrap();
        let (prof, _) = ground_state(&params).unwrap();
        (params, prof)
    }

    #[test]
    fn first_two_levels() {
        let (params, prof) = setup(3, 2.0, 0.5);
        let s0 = sector_spectrum(&prof, &params, 0, 2).unwrap();
        let s1 = sector_spectrum(&prof, &params, 1, 1).unwrap();
        assert!((s0.eigenvalues[0] - 1.0).abs() < 1e-3, "{:?}", s0.eigenvalues);
        assert!((s1.eigenvalues[0] - 2.0).abs() < 2e-3, "{:?}", s1.eigenvalues);
        assert!(s0.eigenvalues[1] > 2.0);
        assert!(s0.eigenvalues.iter().all(|&m| m > 0.0));
        assert!(s0.weighted_norms.iter().all(|w| (w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn ground_state_is_the_first_mode() {
        let (params, prof) = setup(3, 2.0, 0.5);
        let s0 = sector_spectrum(&prof, &params, 0, 2).unwrap();
        let c = first_eigenfunction_check(&s0, &prof, &params).unwrap();
        assert!(c > 0.9999, "{c}");
        let scaled = SpectralResult {
            eigenfunctions: vec![s0.eigenfunctions[0].scaled(-3.5)],
            ..s0.clone()
        };
        let c2 = first_eigenfunction_check(&scaled, &prof, &params).unwrap();
        assert!((c - c2).abs() < 1e-14);
        let c3 = weighted_cosine(&s0.eigenfunctions[1], &prof, &prof, &params);
        assert!(c3 < 1e-6, "{c3}");
    }

    #[test]
    fn eigenfunctions_are_weighted_orthogonal() {
        let (params, prof) = setup(3, 2.0, 0.5);
        let s0 = sector_spectrum_with(
            &prof,
            &params,
            0,
            3,
            SpectralConfig {
                richardson: false,
                ..Default::default()
            },
        )
        .unwrap();
        let g = &s0.eigenfunctions[0].grid;
        let w: Vec<f64> = g.nodes.iter().map(|&r| prof.eval(r)).collect();
        for i in 0..3 {
            for j in 0..i {
                let a = &s0.eigenfunctions[i];
                let b = &s0.eigenfunctions[j];
                assert!(a.weighted_dot(b, &w).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn translation_mode_rayleigh_quotient() {
        let (params, prof) = setup(3, 2.0, 0.5);
        let m = phi_from_translation(&prof, &params, 1e-3).unwrap();
        assert!((m.rayleigh - 2.0).abs() < 1e-2, "{}", m.rayleigh);
        assert!(m.warning.is_none());
        // the derivative of 𝒰 along the axis is −𝒰'(ρ) cos θ
        let d = prof.derivative();
        for i in (5..prof.values.len() - 1).step_by(97) {
            assert!((m.phi.values[i] + d[i]).abs() < 1e-4 * (1.0 + d[i].abs()));
        }
    }

    #[test]
    fn corrupt_weight_is_rejected() {
        let (params, prof) = setup(3, 2.0, 0.5);
        let bad = prof.scaled(-1.0);
        assert!(matches!(
            sector_spectrum(&bad, &params, 0, 1),
            Err(Error::CorruptProfile(_))
        ));
    }
}
