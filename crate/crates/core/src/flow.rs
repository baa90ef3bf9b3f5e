//! Radial fast-diffusion flow ∂_t u = Δu^m on the hyperbolic ball, in
//! original time and in the rescaled variables where it becomes
//! ∂_τ w^p = Δw + w^p with p = 1/m, together with the Lyapunov, entropy and
//! relative-error diagnostics.
//!
//! Time variable: u = ((1−m)(T−t))^{1/(1−m)} w^{1/m} and
//! τ = ln(T/(T−t))/(1−m).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{best_constant, ground_state, lambda_norm_sq, BestConstant};
use crate::fit::{fit_decay_rate, linear_fit, RateFit};
use crate::grid::{Profile, RadialGrid, Tail};
use crate::params::ModelParams;
use crate::quadrature::GaussLegendre;
use crate::spectral::{fd_grid, stiffness};
use crate::tridiag::SymTridiag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Reaction term w^p taken at the old time level.
    SemiImplicit,
    /// Fully backward Euler; needs dt < 1.
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub n: usize,
    pub m: f64,
    pub p: f64,
    pub dt: f64,
    /// Base spacing of the graded finite-difference grid.
    pub h: f64,
    /// Lower bound for w/𝒰 on accepted steps.
    pub floor: f64,
    pub t_hint: Option<f64>,
    pub scheme: Scheme,
    pub newton_tol: f64,
}

impl FlowParams {
    pub fn new(n: usize, m: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParams(format!("n = {n} must be at least 3")));
        }
        let ms = (n as f64 - 2.0) / (n as f64 + 2.0);
        if !(m > ms && m < 1.0) {
            return Err(Error::InvalidParams(format!("m = {m} outside ({ms}, 1)")));
        }
        Ok(Self {
            n,
            m,
            p: 1.0 / m,
            dt: 0.02,
            h: 0.01,
            floor: 1e-14,
            t_hint: None,
            scheme: Scheme::SemiImplicit,
            newton_tol: 1e-11,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fresh = Self::new(self.n, self.m)?;
        if (self.p - fresh.p).abs() > 1e-12 * fresh.p {
            return Err(Error::InvalidParams("p must equal 1/m".into()));
        }
        if !(self.dt > 0.0) || !(self.h > 0.0) || !(self.floor > 0.0) || !(self.newton_tol > 0.0) {
            return Err(Error::InvalidParams(
                "dt, h, floor and newton_tol must be positive".into(),
            ));
        }
        if self.scheme == Scheme::Implicit && self.dt >= 1.0 {
            return Err(Error::InvalidParams("fully implicit stepping needs dt < 1".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelParams> {
        ModelParams::new(self.n, self.p, 0.0)
    }

    /// Whether the relative-error rate statements apply: 3 ≤ n ≤ 5, p > 2.
    pub fn rate_claims_apply(&self) -> bool {
        (3..=5).contains(&self.n) && self.m < 0.5
    }

    /// Rescaled time from which the Benilan-Crandall bound holds.
    pub fn bc_start(&self) -> f64 {
        std::f64::consts::LN_2 / (1.0 - self.m)
    }
}

/// I₀(w) = ½∫|∇w|² − ∫w^{p+1}/(p+1) by quadrature on the profile's grid.
pub fn energy(w: &Profile, p: f64) -> Result<f64> {
    let model = ModelParams::new(w.n(), p, 0.0)?;
    Ok(0.5 * lambda_norm_sq(w, &model) - w.l_p_norm_pow(p + 1.0) / (p + 1.0))
}

/// E[w] = ∫ (w − 𝒰)² 𝒰^{p−1} dv, with w sampled on 𝒰's grid.
pub fn entropy(w: &Profile, profile: &Profile, p: f64) -> f64 {
    let g: Vec<f64> = profile
        .grid
        .nodes
        .iter()
        .zip(&profile.values)
        .map(|(&r, &u)| {
            let d = w.eval(r) - u;
            d * d * u.abs().powf(p - 1.0)
        })
        .collect();
    profile.grid.integrate(&g)
}

/// max |w/𝒰 − 1| over the nodes of 𝒰's grid and, beyond, the ratio of the
/// two tails.
pub fn relative_error_sup(w: &Profile, profile: &Profile) -> f64 {
    let mut worst = 0.0f64;
    for (&r, &u) in profile.grid.nodes.iter().zip(&profile.values) {
        if u > 0.0 {
            worst = worst.max((w.eval(r) / u - 1.0).abs());
        }
    }
    if let (Some(a), Some(b)) = (&w.tail, &profile.tail) {
        if (a.exponent - b.exponent).abs() < 1e-9 * b.exponent.abs().max(1.0) {
            worst = worst.max((a.amplitude / b.amplitude - 1.0).abs());
        }
    }
    worst
}

/// Both sides of the dissipation identity over one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dissipation {
    /// (I₀(w⁺) − I₀(w))/dt.
    pub discrete: f64,
    /// −(1/p)∫(Δw̄ + w̄^p)²/w̄^{p−1} at the midpoint w̄.
    pub analytic: f64,
    /// |discrete − analytic| / |analytic|.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub tau: f64,
    pub energy: f64,
    pub entropy: f64,
    pub rel_err_sup: f64,
    /// ‖Δw + w^p‖_{H⁻¹}.
    pub residual_hm1: f64,
    /// ∫w^{p+1}.
    pub mass: f64,
    /// ‖w − 𝒰‖_{p+1}^{p+1}.
    pub lp_dist: f64,
    /// Component of w − 𝒰 along 𝒰 in the 𝒰^{p−1}-weighted product,
    /// relative to 𝒰.
    pub mode: f64,
    /// max over nodes of ∂_τv − 2m(v+1) from the last step (NaN on row 0).
    pub bc: f64,
}

#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub rows: Vec<FlowRow>,
    pub final_state: Profile,
    /// Set when the run stopped early; the rows up to that point are kept.
    pub aborted: Option<Error>,
    pub steps: usize,
}

impl FlowTrace {
    pub fn column<F: Fn(&FlowRow) -> f64>(&self, f: F) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Largest increase of I₀ between consecutive rows (≤ 0 when monotone).
    pub fn max_energy_increase(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].energy - w[0].energy)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Fitted exponential rates over the tail of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRates {
    pub entropy: Option<RateFit>,
    pub lp: Option<RateFit>,
    pub sup: Option<RateFit>,
    /// entropy rate / L^{p+1} rate; 2/(p+1) is expected.
    pub ratio: Option<f64>,
    pub expected_ratio: f64,
}

impl FlowRates {
    pub fn from_trace(trace: &FlowTrace, p: f64, fraction: f64) -> Self {
        let tau = trace.column(|r| r.tau);
        let entropy = fit_decay_rate(&tau, &trace.column(|r| r.entropy), fraction);
        let lp = fit_decay_rate(&tau, &trace.column(|r| r.lp_dist), fraction);
        let sup = fit_decay_rate(&tau, &trace.column(|r| r.rel_err_sup), fraction);
        let ratio = match (entropy, lp) {
            (Some(e), Some(l)) if l.rate != 0.0 => Some(e.rate / l.rate),
            _ => None,
        };
        Self {
            entropy,
            lp,
            sup,
            ratio,
            expected_ratio: 2.0 / (p + 1.0),
        }
    }
}

/// Largest Benilan-Crandall violation over rows with τ ≥ ln2/(1−m).
pub fn benilan_crandall_check(trace: &FlowTrace, fp: &FlowParams) -> f64 {
    let start = fp.bc_start();
    trace
        .rows
        .iter()
        .filter(|r| r.tau >= start && r.bc.is_finite())
        .map(|r| r.bc)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    /// Set when sup|v| never leaves round-off: no rate can be fitted.
    pub stationary: bool,
    pub uniform_rate: Option<RateFit>,
    pub entropy_rate: Option<RateFit>,
    /// κ̄ with sup|v| ≈ C·E^{κ̄}.
    pub kappa_bar: Option<f64>,
    /// C, the smallest envelope over the first half of the fit window.
    pub envelope: Option<f64>,
    /// Rows of the second half of the window above the envelope.
    pub envelope_violations: usize,
}

pub fn smoothing_diagnostic(trace: &FlowTrace) -> SmoothingReport {
    let peak = trace.rows.iter().map(|r| r.rel_err_sup).fold(0.0, f64::max);
    if peak < 1e-10 {
        return SmoothingReport {
            stationary: true,
            uniform_rate: None,
            entropy_rate: None,
            kappa_bar: None,
            envelope: None,
            envelope_violations: 0,
        };
    }
    let tau = trace.column(|r| r.tau);
    let uniform_rate = fit_decay_rate(&tau, &trace.column(|r| r.rel_err_sup), 0.5);
    let entropy_rate = fit_decay_rate(&tau, &trace.column(|r| r.entropy), 0.5);
    let kappa_bar = match (uniform_rate, entropy_rate) {
        (Some(u), Some(e)) if e.rate > 0.0 => Some(u.rate / e.rate),
        _ => None,
    };
    let (mut envelope, mut violations) = (None, 0);
    if let Some(k) = kappa_bar {
        let start = trace.rows.len() / 2;
        let window = &trace.rows[start..];
        let half = window.len() / 2;
        let ratio = |r: &FlowRow| r.rel_err_sup / r.entropy.powf(k);
        let c = window[..half].iter().map(ratio).fold(0.0, f64::max);
        violations = window[half..].iter().filter(|r| ratio(r) > c * (1.0 + 1e-9)).count();
        envelope = Some(c);
    }
    SmoothingReport {
        stationary: false,
        uniform_rate,
        entropy_rate,
        kappa_bar,
        envelope,
        envelope_violations: violations,
    }
}

/// A calibrated rescaled run: w0 = c·shape with c chosen so that the
/// unstable direction 𝒰 is not excited.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub c: f64,
    pub trace: FlowTrace,
    /// Flow runs spent on the search.
    pub runs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginalRow {
    pub t: f64,
    pub sup_u: f64,
    /// ∫u dv.
    pub l1: f64,
}

#[derive(Debug, Clone)]
pub struct OriginalRun {
    pub t_extinction: f64,
    pub rows: Vec<OriginalRow>,
    /// u at the requested times.
    pub snapshots: Vec<(f64, Profile)>,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginalOptions {
    /// Each step advances by this fraction of the estimated remaining time.
    pub dt_fraction: f64,
    /// Stop when sup u drops below this fraction of its initial value.
    pub threshold: f64,
    pub max_steps: usize,
    /// Share of the last samples used in the extinction-time fit.
    pub fit_fraction: f64,
}

impl Default for OriginalOptions {
    fn default() -> Self {
        Self {
            dt_fraction: 0.004,
            threshold: 1e-4,
            max_steps: 20_000,
            fit_fraction: 0.5,
        }
    }
}

/// Maps u at original time t to (τ, w) for extinction time T.
pub fn to_rescaled(u: &Profile, t: f64, t_ext: f64, m: f64) -> Result<(f64, Profile)> {
    if !(t < t_ext) {
        return Err(Error::Domain(format!("t = {t} not before extinction {t_ext}")));
    }
    let a = ((1.0 - m) * (t_ext - t)).powf(1.0 / (1.0 - m));
    let tau = (t_ext / (t_ext - t)).ln() / (1.0 - m);
    let values = u.values.iter().map(|&v| (v.max(0.0) / a).powf(m)).collect();
    Ok((tau, Profile::new(u.grid.clone(), values, 0)?))
}

/// w(0) = u0^m / ((1−m)T)^{m/(1−m)}.
pub fn rescaled_initial(u0: &Profile, t_ext: f64, m: f64) -> Result<Profile> {
    Ok(to_rescaled(u0, 0.0, t_ext, m)?.1)
}

/// Discretized flow on the graded finite-difference grid: stiffness with the
/// tail-pinned last node folded in, lumped masses and the discrete ground
/// state.
#[derive(Debug, Clone)]
pub struct FlowSystem {
    pub fp: FlowParams,
    pub model: ModelParams,
    pub grid: Arc<RadialGrid>,
    k: SymTridiag,
    mass: Vec<f64>,
    /// Ratio w_M / w_{M−1} imposed at ρ_max.
    tail_ratio: f64,
    /// Discrete ground state on the unknown nodes.
    ground: Vec<f64>,
    /// Continuum ground state from shooting.
    pub continuum: Profile,
    pub best: BestConstant,
}

impl FlowSystem {
    pub fn new(fp: FlowParams) -> Result<Self> {
        fp.validate()?;
        let model = fp.model()?;
        let (continuum, _) = ground_state(&model)?;
        let best = best_constant(&continuum, &model)?;
        let grid = Arc::new(fd_grid(&continuum, &model, fp.h)?);
        let (mut k, _) = stiffness(&grid, &model, 0)?;
        let x = &grid.nodes;
        let m = x.len() - 1;
        let len = x[m] - x[m - 1];
        let n = model.n as i32;
        let flux = GaussLegendre::new(8).integrate(x[m - 1], x[m], |s| s.sinh().powi(n - 1)) / (len * len);
        let tail_ratio = (-(model.n as f64 - 1.0) * len).exp();
        k.diag[m - 1] -= flux * tail_ratio;
        let mass = grid.quad_weights[..m].to_vec();
        let mut sys = Self {
            fp,
            model,
            grid,
            k,
            mass,
            tail_ratio,
            ground: Vec::new(),
            continuum,
            best,
        };
        sys.ground = sys.discrete_ground_state()?;
        Ok(sys)
    }

    fn unknowns(&self) -> usize {
        self.mass.len()
    }

    fn omega(&self) -> f64 {
        self.grid.omega
    }

    /// Newton on K u = M u^p from the shooting profile.
    fn discrete_ground_state(&self) -> Result<Vec<f64>> {
        let p = self.fp.p;
        let mut u: Vec<f64> = self.grid.nodes[..self.unknowns()]
            .iter()
            .map(|&r| self.continuum.eval(r))
            .collect();
        for _ in 0..40 {
            let ku = self.k.mul(&u);
            let g: Vec<f64> = (0..u.len()).map(|i| ku[i] - self.mass[i] * u[i].powf(p)).collect();
            let jac = SymTridiag {
                diag: (0..u.len())
                    .map(|i| self.k.diag[i] - p * self.mass[i] * u[i].powf(p - 1.0))
                    .collect(),
                off: self.k.off.clone(),
            };
            let d = jac.solve(&g)?;
            let mut worst = 0.0f64;
            for i in 0..u.len() {
                worst = worst.max((d[i] / u[i]).abs());
                u[i] -= d[i];
            }
            if u.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::CorruptProfile("discrete ground state lost positivity".into()));
            }
            if worst < 1e-11 {
                return Ok(u);
            }
        }
        Err(Error::IterationLimit("discrete ground state"))
    }

    fn to_profile(&self, x: &[f64]) -> Profile {
        let mut values = x.to_vec();
        let last = *x.last().unwrap() * self.tail_ratio;
        values.push(last);
        let exponent = self.model.n as f64 - 1.0;
        let rho = self.grid.rho_max;
        Profile {
            grid: self.grid.clone(),
            values,
            l: 0,
            tail: Some(Tail {
                exponent,
                amplitude: last * (exponent * rho).exp(),
                start: rho,
            }),
        }
    }

    fn from_profile(&self, w: &Profile) -> Vec<f64> {
        let same = Arc::ptr_eq(&w.grid, &self.grid) || w.grid.nodes == self.grid.nodes;
        if same {
            w.values[..self.unknowns()].to_vec()
        } else {
            self.grid.nodes[..self.unknowns()].iter().map(|&r| w.eval(r)).collect()
        }
    }

    /// The discrete ground state, a fixed point of the rescaled step.
    pub fn ground_state(&self) -> Profile {
        self.to_profile(&self.ground)
    }

    /// The exact I₀ level ((p−1)/(2(p+1)))·S^{(p+1)/(p−1)}.
    pub fn energy_level(&self) -> f64 {
        let p = self.fp.p;
        (p - 1.0) / (2.0 * (p + 1.0)) * self.best.energy_level(&self.model)
    }

    fn energy_of(&self, x: &[f64]) -> f64 {
        let p = self.fp.p;
        let pot: f64 = x.iter().zip(&self.mass).map(|(v, m)| m * v.abs().powf(p + 1.0)).sum();
        self.omega() * (0.5 * self.k.form(x) - pot / (p + 1.0))
    }

    /// I₀ in the discrete form the scheme dissipates.
    pub fn energy(&self, w: &Profile) -> f64 {
        self.energy_of(&self.from_profile(w))
    }

    fn entropy_of(&self, x: &[f64]) -> f64 {
        let p = self.fp.p;
        let s: f64 = (0..x.len())
            .map(|i| {
                let d = x[i] - self.ground[i];
                self.mass[i] * d * d * self.ground[i].powf(p - 1.0)
            })
            .sum();
        self.omega() * s
    }

    /// E[w] against the discrete ground state.
    pub fn entropy(&self, w: &Profile) -> f64 {
        self.entropy_of(&self.from_profile(w))
    }

    fn sup_of(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.ground)
            .map(|(v, u)| (v / u - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// sup|w/𝒰 − 1|; beyond ρ_max the ratio is frozen at its last value.
    pub fn relative_error_sup(&self, w: &Profile) -> f64 {
        self.sup_of(&self.from_profile(w))
    }

    /// Weak residual vector K w − M w^p, formed as K(w − 𝒰) − M(w^p − 𝒰^p)
    /// since 𝒰 is the discrete fixed point; far out the direct form is all
    /// cancellation.
    fn residual_vec(&self, x: &[f64]) -> Vec<f64> {
        let p = self.fp.p;
        let d: Vec<f64> = x.iter().zip(&self.ground).map(|(a, b)| a - b).collect();
        let kd = self.k.mul(&d);
        (0..x.len())
            .map(|i| kd[i] - self.mass[i] * (x[i].abs().powf(p) - self.ground[i].powf(p)))
            .collect()
    }

    fn hm1_of(&self, x: &[f64]) -> Result<f64> {
        let r = self.residual_vec(x);
        let phi = self.k.solve(&r)?;
        let s: f64 = phi.iter().zip(&r).map(|(a, b)| a * b).sum();
        Ok((self.omega() * s.max(0.0)).sqrt())
    }

    /// ‖Δw + w^p‖_{H⁻¹} through a Poisson solve with the same stiffness.
    pub fn h_minus1_residual(&self, w: &Profile) -> Result<f64> {
        self.hm1_of(&self.from_profile(w))
    }

    fn row(&self, tau: f64, x: &[f64], bc: f64) -> Result<FlowRow> {
        let p = self.fp.p;
        let om = self.omega();
        let mut mass = 0.0;
        let mut lp = 0.0;
        let mut proj = 0.0;
        let mut norm = 0.0;
        for i in 0..x.len() {
            let u = self.ground[i];
            let m = self.mass[i];
            mass += m * x[i].abs().powf(p + 1.0);
            lp += m * (x[i] - u).abs().powf(p + 1.0);
            let up = u.powf(p);
            proj += m * (x[i] - u) * up;
            norm += m * up * u;
        }
        Ok(FlowRow {
            tau,
            energy: self.energy_of(x),
            entropy: self.entropy_of(x),
            rel_err_sup: self.sup_of(x),
            residual_hm1: self.hm1_of(x)?,
            mass: om * mass,
            lp_dist: om * lp,
            mode: proj / norm,
            bc,
        })
    }

    /// One backward-Euler step of ∂_τ w^p = Δw + w^p on the unknowns.
    fn step_vec(&self, x: &[f64], dt: f64, tau: f64) -> Result<Vec<f64>> {
        let p = self.fp.p;
        let (c1, rhs_factor) = match self.fp.scheme {
            Scheme::SemiImplicit => (1.0 / dt, 1.0 / dt + 1.0),
            Scheme::Implicit => {
                if dt >= 1.0 {
                    return Err(Error::InvalidParams("fully implicit stepping needs dt < 1".into()));
                }
                (1.0 / dt - 1.0, 1.0 / dt)
            }
        };
        let b: Vec<f64> = x
            .iter()
            .zip(&self.mass)
            .map(|(v, m)| m * v.powf(p) * rhs_factor)
            .collect();
        let mut y = x.to_vec();
        // one extra iteration after the tolerance is met clears the
        // Newton error, which the far field amplifies in ∫r²/w^{p−1}
        let mut settled = false;
        for _ in 0..50 {
            let ky = self.k.mul(&y);
            let g: Vec<f64> = (0..y.len())
                .map(|i| c1 * self.mass[i] * y[i].powf(p) + ky[i] - b[i])
                .collect();
            let jac = SymTridiag {
                diag: (0..y.len())
                    .map(|i| self.k.diag[i] + c1 * p * self.mass[i] * y[i].powf(p - 1.0))
                    .collect(),
                off: self.k.off.clone(),
            };
            let d = jac.solve(&g)?;
            // damp to stay positive
            let mut alpha = 1.0;
            while (0..y.len()).any(|i| y[i] - alpha * d[i] <= 0.0) {
                alpha *= 0.5;
                if alpha < 1e-10 {
                    return Err(Error::StepFailure {
                        tau,
                        reason: "Newton damping stalled".into(),
                    });
                }
            }
            let mut worst = 0.0f64;
            for i in 0..y.len() {
                let s = alpha * d[i];
                y[i] -= s;
                worst = worst.max((s / y[i]).abs());
            }
            if !worst.is_finite() {
                break;
            }
            if worst < self.fp.newton_tol && !settled {
                settled = true;
            } else if worst < self.fp.newton_tol {
                let low = y
                    .iter()
                    .zip(&self.ground)
                    .map(|(v, u)| v / u)
                    .fold(f64::INFINITY, f64::min);
                if low < self.fp.floor {
                    return Err(Error::PositivityLoss(tau + dt));
                }
                return Ok(y);
            }
        }
        Err(Error::StepFailure {
            tau,
            reason: "Newton did not converge in 50 iterations".into(),
        })
    }

    /// One step with the configured dt, or an explicit one.
    pub fn rescaled_step(&self, w: &Profile, dt: Option<f64>) -> Result<Profile> {
        let x = self.from_profile(w);
        if x.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Domain("w must be positive on the grid".into()));
        }
        Ok(self.to_profile(&self.step_vec(&x, dt.unwrap_or(self.fp.dt), 0.0)?))
    }

    /// Step with halving on Newton failure (down to dt/64).
    fn robust_step(&self, x: &[f64], dt: f64, tau: f64, depth: usize) -> Result<Vec<f64>> {
        match self.step_vec(x, dt, tau) {
            Err(Error::StepFailure { .. }) | Err(Error::SingularOperator(_)) if depth < 6 => {
                let mid = self.robust_step(x, 0.5 * dt, tau, depth + 1)?;
                self.robust_step(&mid, 0.5 * dt, tau + 0.5 * dt, depth + 1)
            }
            other => other,
        }
    }

    pub fn dissipation_check(&self, w: &Profile, w_next: &Profile, dt: f64) -> Dissipation {
        let p = self.fp.p;
        let a = self.from_profile(w);
        let b = self.from_profile(w_next);
        let discrete = (self.energy_of(&b) - self.energy_of(&a)) / dt;
        let mid: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect();
        let r = self.residual_vec(&mid);
        // pointwise Δw̄ + w̄^p = −r/M
        let s: f64 = (0..mid.len())
            .map(|i| r[i] * r[i] / (self.mass[i] * mid[i].powf(p - 1.0)))
            .sum();
        let analytic = -self.omega() * s / p;
        let residual = if analytic != 0.0 {
            ((discrete - analytic) / analytic).abs()
        } else {
            discrete.abs()
        };
        Dissipation {
            discrete,
            analytic,
            residual,
        }
    }

    /// Runs the rescaled flow from w0 to τ_end. Failures end the run with a
    /// partial trace. `stop_mode` ends it early once |mode| exceeds the value.
    fn run_inner(&self, w0: &Profile, tau_end: f64, stop_mode: Option<f64>) -> Result<FlowTrace> {
        let mut x = self.from_profile(w0);
        if x.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Domain("w0 must be positive on the grid".into()));
        }
        let dt0 = self.fp.dt;
        let steps = (tau_end / dt0).round().max(1.0) as usize;
        let dt = tau_end / steps as f64;
        let two_m = 2.0 * self.fp.m;
        let mut rows = vec![self.row(0.0, &x, f64::NAN)?];
        let mut aborted = None;
        let mut done = 0;
        for k in 0..steps {
            let tau = k as f64 * dt;
            let next = match self.robust_step(&x, dt, tau, 0) {
                Ok(y) => y,
                Err(e) => {
                    aborted = Some(e);
                    break;
                }
            };
            let bc = (0..x.len())
                .map(|i| {
                    let v0 = x[i] / self.ground[i] - 1.0;
                    let v1 = next[i] / self.ground[i] - 1.0;
                    (v1 - v0) / dt - two_m * (v1 + 1.0)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            x = next;
            done = k + 1;
            let row = self.row(done as f64 * dt, &x, bc)?;
            let mode = row.mode;
            rows.push(row);
            if let Some(limit) = stop_mode {
                if mode.abs() > limit {
                    break;
                }
            }
        }
        Ok(FlowTrace {
            rows,
            final_state: self.to_profile(&x),
            aborted,
            steps: done,
        })
    }

    pub fn run_rescaled(&self, w0: &Profile, tau_end: f64) -> Result<FlowTrace> {
        self.run_inner(w0, tau_end, None)
    }

    /// Chooses c in w0 = c·shape by bisection so that the 𝒰-component at
    /// τ_end vanishes, then returns the run from that c. The component grows
    /// like e^{(1−m)τ}, so a wrong c shows up as blow-up or decay to zero.
    pub fn calibrate(&self, shape: &Profile, tau_end: f64) -> Result<Calibration> {
        // mode at τ_end; runs that leave the linear regime stop early and
        // their mode is extrapolated with the growth rate 1 − m
        let growth = 1.0 - self.fp.m;
        let eval = |c: f64| -> Result<(f64, Option<FlowTrace>)> {
            let t = self.run_inner(&shape.scaled(c), tau_end, Some(0.5))?;
            let last = *t.rows.last().expect("trace has a first row");
            let ahead = (growth * (tau_end - last.tau)).exp();
            Ok(match &t.aborted {
                Some(Error::PositivityLoss(_)) => (-ahead, None),
                Some(e) => return Err(e.clone()),
                None if t.steps < (tau_end / self.fp.dt).round() as usize => (last.mode * ahead, None),
                None => (last.mode, Some(t)),
            })
        };
        // initial bracket from the 𝒰-component of the shape itself
        let x = self.from_profile(shape);
        let p = self.fp.p;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..x.len() {
            let up = self.ground[i].powf(p);
            num += self.mass[i] * x[i] * up;
            den += self.mass[i] * self.ground[i] * up;
        }
        let guess = den / num;
        let (mut lo, mut hi) = (0.9 * guess, 1.1 * guess);
        let (mut flo, _) = eval(lo)?;
        let (mut fhi, _) = eval(hi)?;
        let mut evals = 2;
        while flo > 0.0 {
            lo *= 0.8;
            flo = eval(lo)?.0;
            evals += 1;
            if evals > 40 {
                return Err(Error::IterationLimit("calibration bracket"));
            }
        }
        while fhi < 0.0 {
            hi *= 1.25;
            fhi = eval(hi)?.0;
            evals += 1;
            if evals > 80 {
                return Err(Error::IterationLimit("calibration bracket"));
            }
        }
        // Illinois false position on the mode value
        let mut best: Option<(f64, f64, FlowTrace)> = None;
        let mut side = 0;
        for _ in 0..60 {
            let c = hi - fhi * (hi - lo) / (fhi - flo);
            let (f, trace) = eval(c)?;
            evals += 1;
            if let Some(t) = trace {
                if best.as_ref().map_or(true, |b| f.abs() < b.1.abs()) {
                    best = Some((c, f, t));
                }
            }
            if f.abs() < 1e-9 || hi - lo < 1e-12 * hi {
                break;
            }
            if f < 0.0 {
                lo = c;
                flo = f;
                if side == -1 {
                    fhi *= 0.5;
                }
                side = -1;
            } else {
                hi = c;
                fhi = f;
                if side == 1 {
                    flo *= 0.5;
                }
                side = 1;
            }
        }
        let (c, _, trace) = match best {
            Some(b) => b,
            None => return Err(Error::IterationLimit("calibration")),
        };
        Ok(Calibration { c, trace, runs: evals })
    }

    /// Estimated time to extinction (1−m)^{-1}·Σ M z^{p+1} / zᵀKz for z = u^m;
    /// exact on separable data.
    fn remaining_time(&self, z: &[f64]) -> f64 {
        let p = self.fp.p;
        let pot: f64 = z.iter().zip(&self.mass).map(|(v, m)| m * v.powf(p + 1.0)).sum();
        pot / ((1.0 - self.fp.m) * self.k.form(z))
    }

    /// Implicit stepping of ∂_t u = Δu^m in the variable z = u^m, until
    /// sup u falls below `threshold`·sup u0. T comes from a straight-line
    /// fit of (sup u)^{1−m} against t over the last samples.
    pub fn run_original(&self, u0: &Profile, opts: OriginalOptions, snapshot_times: &[f64]) -> Result<OriginalRun> {
        let m = self.fp.m;
        let p = self.fp.p;
        let u = self.from_profile(u0);
        if u.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Domain("u0 must be positive on the grid".into()));
        }
        let mut z: Vec<f64> = u.iter().map(|v| v.powf(m)).collect();
        let sup0 = u.iter().copied().fold(0.0, f64::max);
        let l1 = |z: &[f64]| self.omega() * z.iter().zip(&self.mass).map(|(v, w)| w * v.powf(p)).sum::<f64>();
        let mut t = 0.0;
        let mut rows = vec![OriginalRow {
            t,
            sup_u: sup0,
            l1: l1(&z),
        }];
        let mut snaps = Vec::new();
        let mut pending: Vec<f64> = snapshot_times.to_vec();
        pending.sort_by(f64::total_cmp);
        pending.reverse();
        let mut steps = 0;
        loop {
            if steps >= opts.max_steps {
                return Err(Error::StepBudget(opts.max_steps));
            }
            let rem = match (steps, self.fp.t_hint) {
                (0, Some(t_hint)) => t_hint,
                _ => self.remaining_time(&z),
            };
            let mut dt = opts.dt_fraction * rem;
            let mut snap = false;
            if let Some(&ts) = pending.last() {
                if ts <= t + dt {
                    dt = ts - t;
                    snap = true;
                }
            }
            if dt > 0.0 {
                z = self.original_step(&z, dt, t)?;
                t += dt;
                steps += 1;
            }
            let sup = z.iter().map(|v| v.powf(p)).fold(0.0, f64::max);
            rows.push(OriginalRow {
                t,
                sup_u: sup,
                l1: l1(&z),
            });
            if snap {
                pending.pop();
                let vals: Vec<f64> = z.iter().map(|v| v.powf(p)).collect();
                snaps.push((t, self.to_profile(&vals)));
            }
            if sup < opts.threshold * sup0 && pending.is_empty() {
                break;
            }
        }
        let start = ((1.0 - opts.fit_fraction) * rows.len() as f64) as usize;
        let pts: Vec<(f64, f64)> = rows[start..].iter().map(|r| (r.t, r.sup_u.powf(1.0 - m))).collect();
        let (slope, icpt) = linear_fit(&pts);
        if !(slope < 0.0) {
            return Err(Error::Domain("sup u^(1-m) is not decreasing".into()));
        }
        Ok(OriginalRun {
            t_extinction: -icpt / slope,
            rows,
            snapshots: snaps,
            steps,
        })
    }

    /// Backward Euler for z^p: M((z⁺)^p − z^p)/dt = −K z⁺.
    fn original_step(&self, z: &[f64], dt: f64, t: f64) -> Result<Vec<f64>> {
        let p = self.fp.p;
        let b: Vec<f64> = z.iter().zip(&self.mass).map(|(v, m)| m * v.powf(p) / dt).collect();
        let mut y = z.to_vec();
        for _ in 0..50 {
            let ky = self.k.mul(&y);
            let g: Vec<f64> = (0..y.len())
                .map(|i| self.mass[i] * y[i].powf(p) / dt + ky[i] - b[i])
                .collect();
            let jac = SymTridiag {
                diag: (0..y.len())
                    .map(|i| self.k.diag[i] + p * self.mass[i] * y[i].powf(p - 1.0) / dt)
                    .collect(),
                off: self.k.off.clone(),
            };
            let d = jac.solve(&g)?;
            let mut alpha = 1.0;
            while (0..y.len()).any(|i| y[i] - alpha * d[i] <= 0.0) {
                alpha *= 0.5;
                if alpha < 1e-10 {
                    return Err(Error::PositivityLoss(t + dt));
                }
            }
            let mut worst = 0.0f64;
            for i in 0..y.len() {
                let s = alpha * d[i];
                y[i] -= s;
                worst = worst.max((s / y[i]).abs());
            }
            if worst < self.fp.newton_tol {
                return Ok(y);
            }
        }
        Err(Error::StepFailure {
            tau: t,
            reason: "Newton did not converge in 50 iterations".into(),
        })
    }

    /// Separable data ((1−m)T)^{1/(1−m)}𝒰^{1/m} with extinction time T.
    pub fn separable_data(&self, t_ext: f64) -> Profile {
        let m = self.fp.m;
        let a = ((1.0 - m) * t_ext).powf(1.0 / (1.0 - m));
        let vals: Vec<f64> = self.ground.iter().map(|u| a * u.powf(self.fp.p)).collect();
        self.to_profile(&vals)
    }
}
