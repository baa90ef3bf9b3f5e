//! Aubin-Talenti bubbles, the Euclidean Sobolev constant and the
//! cut-off-bubble test quotient on the unit ball, which compares the
//! critical Poincaré-Sobolev constant of the hyperbolic ball with S(ℝⁿ).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::sphere_area;
use crate::quadrature::GaussLegendre;

/// U[z,μ](x) = (n(n−2))^{(n−2)/4} μ^{(n−2)/2} (1 + μ²|x−z|²)^{−(n−2)/2}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AubinTalentiBubble {
    pub z: Vec<f64>,
    pub mu: f64,
    pub n: usize,
}

impl AubinTalentiBubble {
    pub fn new(z: Vec<f64>, mu: f64) -> Result<Self> {
        let n = z.len();
        if n < 3 {
            return Err(Error::InvalidParams(format!("dimension {n} must be at least 3")));
        }
        if !(mu > 0.0) || !mu.is_finite() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("bubble needs finite z and mu > 0".into()));
        }
        Ok(Self { z, mu, n })
    }

    pub fn standard(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n], 1.0)
    }

    fn k(&self) -> f64 {
        0.5 * (self.n as f64 - 2.0)
    }

    /// The prefactor (n(n−2))^{(n−2)/4} μ^{(n−2)/2}.
    fn amplitude(&self) -> f64 {
        let nf = self.n as f64;
        (nf * (nf - 2.0)).powf(0.5 * self.k()) * self.mu.powf(self.k())
    }

    fn offset_sq(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.z).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.radial(self.offset_sq(x).sqrt())
    }

    /// Value at distance r from the centre.
    pub fn radial(&self, r: f64) -> f64 {
        self.amplitude() * (1.0 + self.mu * self.mu * r * r).powf(-self.k())
    }

    /// d/dr of the radial profile.
    pub fn radial_derivative(&self, r: f64) -> f64 {
        let m2 = self.mu * self.mu;
        let k = self.k();
        -2.0 * k * self.amplitude() * m2 * r * (1.0 + m2 * r * r).powf(-k - 1.0)
    }

    /// Σ_i ∂²U/∂x_i² from the Cartesian second partials.
    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let m2 = self.mu * self.mu;
        let k = self.k();
        let a = self.amplitude();
        let q = 1.0 + m2 * self.offset_sq(x);
        x.iter()
            .zip(&self.z)
            .map(|(xi, zi)| {
                let d = xi - zi;
                -2.0 * k * a * m2 * q.powf(-k - 1.0) + 4.0 * k * (k + 1.0) * a * m2 * m2 * d * d * q.powf(-k - 2.0)
            })
            .sum()
    }

    pub fn critical_exponent(&self) -> f64 {
        let nf = self.n as f64;
        2.0 * nf / (nf - 2.0)
    }
}

/// max over the samples of |ΔU + U^{2*−1}|.
pub fn bubble_pde_residual(b: &AubinTalentiBubble, samples: &[Vec<f64>]) -> Result<f64> {
    let q = b.critical_exponent() - 1.0;
    let mut worst = 0.0f64;
    for x in samples {
        if x.len() != b.n {
            return Err(Error::Input("sample point has the wrong dimension".into()));
        }
        worst = worst.max((b.laplacian(x) + b.eval(x).powf(q)).abs());
    }
    Ok(worst)
}

const PANEL_ORDER: usize = 24;

/// ω_{n−1}∫_0^∞ f(r) r^{n−1} dr on dyadic panels [0,s], [s,2s], ... out to
/// 2^60·s, for integrands concentrated at scale s with algebraic decay.
fn radial_integral<F: Fn(f64) -> f64>(n: usize, scale: f64, f: F) -> f64 {
    let gl = GaussLegendre::new(PANEL_ORDER);
    let k = n as i32 - 1;
    let g = |r: f64| f(r) * r.powi(k);
    let mut total = gl.integrate(0.0, scale, g);
    let mut a = scale;
    for _ in 0..60 {
        total += gl.integrate(a, 2.0 * a, g);
        a *= 2.0;
    }
    sphere_area(n - 1) * total
}

/// Gradient and L^{2*} integrals of a bubble with radial quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevIntegrals {
    pub gradient: f64,
    pub critical: f64,
    pub constant: f64,
}

pub fn bubble_integrals(b: &AubinTalentiBubble) -> SobolevIntegrals {
    let q = b.critical_exponent();
    let scale = 1.0 / b.mu;
    let gradient = radial_integral(b.n, scale, |r| b.radial_derivative(r).powi(2));
    let critical = radial_integral(b.n, scale, |r| b.radial(r).powf(q));
    SobolevIntegrals {
        gradient,
        critical,
        constant: gradient / critical.powf(2.0 / q),
    }
}

/// S(ℝⁿ) = ‖∇U‖²/‖U‖²_{2*} for the standard bubble.
pub fn sobolev_constant(n: usize) -> Result<f64> {
    Ok(bubble_integrals(&AubinTalentiBubble::standard(n)?).constant)
}

/// C² cut-off: 1 on [0, 1/4], 0 beyond 1/2, quintic smoothstep between.
pub fn cutoff(r: f64) -> (f64, f64) {
    if r <= 0.25 {
        return (1.0, 0.0);
    }
    if r >= 0.5 {
        return (0.0, 0.0);
    }
    let t = (r - 0.25) * 4.0;
    let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t) * 4.0;
    (1.0 - s, -ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeucsPoint {
    pub n: usize,
    pub lambda: f64,
    pub eps: f64,
    pub quotient: f64,
    pub sobolev: f64,
    /// S(ℝⁿ) − quotient.
    pub gap: f64,
    /// gap/ε² for n ≥ 5, gap/(ε² log(1/ε)) for n = 4.
    pub normalized: f64,
    /// Share of ∫|∇u_ε|² coming from the cut-off annulus 1/4 < |x| < 1/2.
    pub cutoff_share: f64,
    /// Set when the annulus share exceeds 5%: ε is too large for the
    /// expansion to describe the quotient.
    pub warning: bool,
}

/// The quotient (∫|∇u_ε|² − h̃_λ u_ε²)/(∫u_ε^{2*})^{2/2*} for u_ε = η·U_ε
/// on the unit ball, h̃_λ = (4λ − n(n−2))/(1−|x|²)².
pub fn peucs_quotient(n: usize, lambda: f64, eps: f64) -> Result<PeucsPoint> {
    if n < 4 {
        return Err(Error::InvalidParams(format!("n = {n}: the comparison needs n >= 4")));
    }
    if !(eps > 0.0 && eps <= 0.1) {
        return Err(Error::InvalidParams(format!("eps = {eps} outside (0, 0.1]")));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidParams("lambda must be finite".into()));
    }
    let nf = n as f64;
    let b = AubinTalentiBubble::new(vec![0.0; n], 1.0 / eps)?;
    let q = b.critical_exponent();
    let coeff = 4.0 * lambda - nf * (nf - 2.0);
    let gl = GaussLegendre::new(PANEL_ORDER);
    let k = n as i32 - 1;
    let mut breaks = vec![0.0, eps];
    while breaks.last().copied().unwrap_or(0.0) * 2.0 < 0.25 {
        let last = *breaks.last().unwrap();
        breaks.push(2.0 * last);
    }
    breaks.push(0.25);
    breaks.extend([0.3125, 0.375, 0.4375, 0.5]);
    let (mut grad, mut pot, mut crit, mut annulus) = (0.0, 0.0, 0.0, 0.0);
    for ab in breaks.windows(2) {
        for (r, w) in gl.mapped(ab[0], ab[1]) {
            let (eta, deta) = cutoff(r);
            let u = b.radial(r);
            let du = eta * b.radial_derivative(r) + deta * u;
            let v = eta * u;
            let jac = w * r.powi(k);
            let g = du * du * jac;
            grad += g;
            if ab[0] >= 0.25 {
                annulus += g;
            }
            pot += coeff / (1.0 - r * r).powi(2) * v * v * jac;
            crit += v.powf(q) * jac;
        }
    }
    let omega = sphere_area(n - 1);
    let (grad, pot, crit) = (omega * grad, omega * pot, omega * crit);
    let quotient = (grad - pot) / crit.powf(2.0 / q);
    let sobolev = sobolev_constant(n)?;
    let gap = sobolev - quotient;
    let scale = if n == 4 {
        eps * eps * (1.0 / eps).ln()
    } else {
        eps * eps
    };
    let cutoff_share = omega * annulus / grad;
    Ok(PeucsPoint {
        n,
        lambda,
        eps,
        quotient,
        sobolev,
        gap,
        normalized: gap / scale,
        cutoff_share,
        warning: cutoff_share > 0.05,
    })
}

/// Leading coefficient of the normalized gap as ε → 0:
/// (4λ − n(n−2))∫U²/‖U‖²_{2*} for n ≥ 5 and (4λ − 8)·8ω₃/‖U‖²_4 for n = 4,
/// where 8 = n(n−2) is the square of the bubble's prefactor.
pub fn peucs_limit_slope(n: usize, lambda: f64) -> Result<f64> {
    if n < 4 {
        return Err(Error::InvalidParams(format!("n = {n}: the comparison needs n >= 4")));
    }
    let nf = n as f64;
    let b = AubinTalentiBubble::standard(n)?;
    let q = b.critical_exponent();
    let crit = radial_integral(n, 1.0, |r| b.radial(r).powf(q));
    let coeff = 4.0 * lambda - nf * (nf - 2.0);
    let mass = if n == 4 {
        8.0 * sphere_area(3)
    } else {
        radial_integral(n, 1.0, |r| b.radial(r).powi(2))
    };
    Ok(coeff * mass / crit.powf(2.0 / q))
}

/// The ε-sweep used to read off the gap expansion.
pub fn peucs_sweep(n: usize, lambda: f64, eps: &[f64]) -> Result<Vec<PeucsPoint>> {
    eps.iter().map(|&e| peucs_quotient(n, lambda, e)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_gk;
    use proptest::prelude::*;

    fn closed_form_sobolev(n: usize) -> f64 {
        // π n (n−2) (Γ(n/2)/Γ(n))^{2/n}
        let nf = n as f64;
        std::f64::consts::PI * nf * (nf - 2.0) * (libm::tgamma(nf / 2.0) / libm::tgamma(nf)).powf(2.0 / nf)
    }

    #[test]
    fn bubble_solves_the_critical_equation() {
        for n in 3..=6 {
            let b = AubinTalentiBubble::standard(n).unwrap();
            let centre = bubble_pde_residual(&b, &[vec![0.0; n]]).unwrap();
            assert!(centre < 1e-10, "{n}: {centre}");
            let mut far = vec![0.0; n];
            far[0] = 40.0;
            far[n - 1] = -25.0;
            assert!(bubble_pde_residual(&b, &[far]).unwrap() < 1e-10);
        }
        let b = AubinTalentiBubble::new(vec![0.3, -1.0, 2.0, 0.5], 2.5).unwrap();
        let pts: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin(), t.cos() * 2.0, 0.1 * t, 1.0 - 0.05 * t]
            })
            .collect();
        assert!(bubble_pde_residual(&b, &pts).unwrap() < 1e-8);
        assert!(bubble_pde_residual(&b, &[vec![0.0; 3]]).is_err());
    }

    #[test]
    fn evaluation_matches_the_formula() {
        let b = AubinTalentiBubble::new(vec![1.0, 0.0, -1.0], 0.5).unwrap();
        let x = [2.0, 1.0, 0.0];
        // |x − z|² = 3, n = 3: 3^{1/4}·0.5^{1/2}·(1 + 0.75)^{−1/2}
        let expect = 3f64.powf(0.25) * 0.5f64.sqrt() / 1.75f64.sqrt();
        assert!((b.eval(&x) - expect).abs() < 1e-15);
        assert!(AubinTalentiBubble::new(vec![0.0; 3], 0.0).is_err());
        assert!(AubinTalentiBubble::new(vec![0.0; 2], 1.0).is_err());
    }

    #[test]
    fn sobolev_constant_matches_closed_form_and_energy_identity() {
        for n in 3..=7 {
            let s = sobolev_constant(n).unwrap();
            let exact = closed_form_sobolev(n);
            assert!((s - exact).abs() < 1e-10 * exact, "{n}: {s} vs {exact}");
            // ∫|∇U|² = ∫U^{2*} = S^{n/2}, so ½∫|∇U|² − ∫U^{2*}/2* = S^{n/2}/n
            let ints = bubble_integrals(&AubinTalentiBubble::standard(n).unwrap());
            let nf = n as f64;
            let energy = 0.5 * ints.gradient - ints.critical / (2.0 * nf / (nf - 2.0));
            assert!((energy - s.powf(nf / 2.0) / nf).abs() < 1e-9 * energy);
        }
        assert!(sobolev_constant(3).unwrap() > 0.0 && sobolev_constant(4).unwrap() > sobolev_constant(3).unwrap());
    }

    #[test]
    fn sobolev_constant_is_scale_invariant() {
        let s = sobolev_constant(4).unwrap();
        for mu in [0.5, 1.0, 2.0] {
            let b = AubinTalentiBubble::new(vec![0.2, -0.4, 1.0, 3.0], mu).unwrap();
            assert!((bubble_integrals(&b).constant - s).abs() < 1e-6 * s);
        }
    }

    #[test]
    fn panel_quadrature_agrees_with_adaptive_refinement() {
        let b = AubinTalentiBubble::standard(4).unwrap();
        let ints = bubble_integrals(&b);
        // r = t/(1−t) maps [0, 1) onto [0, ∞)
        let (grad, _) = adaptive_gk(
            |t: f64| {
                if t >= 1.0 {
                    return 0.0;
                }
                let r = t / (1.0 - t);
                b.radial_derivative(r).powi(2) * r.powi(3) / ((1.0 - t) * (1.0 - t))
            },
            0.0,
            1.0,
            1e-14,
            1e-13,
            4000,
        );
        let grad = grad * sphere_area(3);
        assert!(
            (grad - ints.gradient).abs() < 1e-8 * grad,
            "{grad} vs {}",
            ints.gradient
        );
    }

    #[test]
    fn cutoff_is_c2() {
        let h = 1e-6;
        for &r in &[0.25, 0.5] {
            let (a, da) = cutoff(r - h);
            let (b, db) = cutoff(r + h);
            assert!((a - b).abs() < 1e-9 && (da - db).abs() < 1e-4);
        }
        let (_, d) = cutoff(0.3);
        let fd = (cutoff(0.3 + 1e-7).0 - cutoff(0.3 - 1e-7).0) / 2e-7;
        assert!((d - fd).abs() < 1e-6);
    }

    #[test]
    fn quotient_drops_below_sobolev_for_large_lambda() {
        // the cut-off costs O(ε^{n−2}) with a large constant, so the gain
        // (4λ − n(n−2))ε² only wins for small ε
        for eps in [0.01, 0.005] {
            let pt = peucs_quotient(5, 4.0, eps).unwrap();
            assert!(pt.quotient < pt.sobolev && pt.gap > 0.0 && !pt.warning, "{pt:?}");
        }
        assert!(peucs_quotient(5, 4.0, 0.08).unwrap().warning);
        // below the threshold n(n−2)/4 the gap has the other sign
        assert!(peucs_quotient(5, 3.0, 0.005).unwrap().gap < 0.0);
        assert!(peucs_quotient(3, 1.0, 0.01).is_err());
        assert!(peucs_quotient(5, 4.0, 0.2).is_err());
    }

    #[test]
    fn normalized_gap_extrapolates_to_the_leading_coefficient() {
        // n = 5: N(ε) = C + O(ε), one Richardson step
        let limit = peucs_limit_slope(5, 4.0).unwrap();
        let pts = peucs_sweep(5, 4.0, &[0.0025, 0.00125]).unwrap();
        let c = 2.0 * pts[1].normalized - pts[0].normalized;
        assert!((c - limit).abs() < 0.01 * limit, "{c} vs {limit}");
        // n = 4: N(ε) = C + D/log(1/ε) + ...
        let limit = peucs_limit_slope(4, 2.2).unwrap();
        let pts = peucs_sweep(4, 2.2, &[0.0025, 0.00125]).unwrap();
        let l: Vec<f64> = pts.iter().map(|p| (1.0 / p.eps).ln()).collect();
        let c = (pts[1].normalized * l[1] - pts[0].normalized * l[0]) / (l[1] - l[0]);
        assert!((c - limit).abs() < 0.05 * limit, "{c} vs {limit}");
    }

    proptest! {
        #[test]
        fn slope_sign_follows_the_threshold(delta in -1.0f64..0.25, n in 4usize..8) {
            let nf = n as f64;
            let threshold = nf * (nf - 2.0) / 4.0;
            prop_assume!(delta.abs() > 1e-3);
            let lambda = threshold + delta;
            let slope = peucs_limit_slope(n, lambda).unwrap();
            prop_assert_eq!(slope > 0.0, lambda > threshold);
        }

        #[test]
        fn residual_is_invariant_under_translation_and_scaling(mu in 0.3f64..3.0, shift in -2.0f64..2.0) {
            let b = AubinTalentiBubble::new(vec![shift, 0.5 * shift, 0.0], mu).unwrap();
            let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![shift + 0.3 * i as f64, 0.5 * shift, 0.2]).collect();
            prop_assert!(bubble_pde_residual(&b, &pts).unwrap() < 1e-9);
        }
    }
}
