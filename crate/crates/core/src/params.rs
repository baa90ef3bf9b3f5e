//! Model parameters (n, p, λ) and their admissibility checks.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which admissible regime a parameter triple falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// 1 < p < (n+2)/(n-2) and λ below the bottom of the spectrum.
    Subcritical,
    /// p = (n+2)/(n-2), n ≥ 4 and n(n-2)/4 < λ < (n-1)²/4.
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub p: f64,
    pub lambda: f64,
    pub branch: Branch,
}

const CRIT_TOL: f64 = 1e-12;

impl ModelParams {
    pub fn new(n: usize, p: f64, lambda: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParams(format!("n = {n} must be at least 3")));
        }
        if !p.is_finite() || !lambda.is_finite() {
            return Err(Error::InvalidParams("p and lambda must be finite".into()));
        }
        let nf = n as f64;
        let crit = (nf + 2.0) / (nf - 2.0);
        let bottom = (nf - 1.0).powi(2) / 4.0;
        if p <= 1.0 || p > crit + CRIT_TOL {
            return Err(Error::InvalidParams(format!("p = {p} outside (1, {crit}] for n = {n}")));
        }
        if lambda >= bottom {
            return Err(Error::InvalidParams(format!(
                "lambda = {lambda} must be below (n-1)^2/4 = {bottom}"
            )));
        }
        let branch = if (p - crit).abs() <= CRIT_TOL {
            let lower = nf * (nf - 2.0) / 4.0;
            if n < 4 || lambda <= lower {
                return Err(Error::InvalidParams(format!(
                    "critical p needs n >= 4 and lambda in ({lower}, {bottom})"
                )));
            }
            Branch::Critical
        } else {
            Branch::Subcritical
        };
        Ok(Self { n, p, lambda, branch })
    }

    pub fn critical_exponent(&self) -> f64 {
        let nf = self.n as f64;
        (nf + 2.0) / (nf - 2.0)
    }

    /// (n-1)²/4.
    pub fn spectral_bottom(&self) -> f64 {
        (self.n as f64 - 1.0).powi(2) / 4.0
    }

    /// κ+ − κ− = 2 sqrt((n-1)²/4 − λ).
    pub fn gap(&self) -> f64 {
        2.0 * (self.spectral_bottom() - self.lambda).sqrt()
    }

    /// Decay rates (fast, slow) of the linearisation at infinity.
    pub fn decay_rates(&self) -> (f64, f64) {
        let half = 0.5 * (self.n as f64 - 1.0);
        let s = 0.5 * self.gap();
        (half + s, half - s)
    }

    /// Radial cut-off that keeps the λ-energy tail below ~e^{-36}.
    pub fn default_rho_max(&self) -> f64 {
        (36.0 / self.gap()).ceil().max(crate::grid::DEFAULT_RHO_MAX)
    }
}
