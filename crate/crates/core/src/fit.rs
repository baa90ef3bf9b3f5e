//! Least-squares line fits and exponential-rate estimates with jackknife
//! error bars.

use serde::{Deserialize, Serialize};

/// Ordinary least squares y = slope·x + intercept.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fitted decay rate κ in f ≈ C e^{-κτ}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    /// Jackknife standard error of `rate`.
    pub std_err: f64,
    pub samples: usize,
}

impl RateFit {
    /// Whether the two-sigma band excludes zero from below.
    pub fn is_positive(&self) -> bool {
        self.rate.is_finite() && self.rate - 2.0 * self.std_err > 0.0
    }
}

/// Fits log f against τ on the last `fraction` of the samples. Non-positive
/// or non-finite values are skipped. Returns `None` with fewer than 4 usable
/// points.
pub fn fit_decay_rate(tau: &[f64], f: &[f64], fraction: f64) -> Option<RateFit> {
    let start = ((1.0 - fraction) * tau.len() as f64).floor() as usize;
    let pts: Vec<(f64, f64)> = tau[start..]
        .iter()
        .zip(&f[start..])
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 4 {
        return None;
    }
    let (slope, _) = linear_fit(&pts);
    let m = pts.len();
    // delete-one jackknife over blocks keeps the cost linear-ish
    let blocks = m.min(20);
    let mut leave: Vec<f64> = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let lo = b * m / blocks;
        let hi = (b + 1) * m / blocks;
        let sub: Vec<(f64, f64)> = pts[..lo].iter().chain(&pts[hi..]).copied().collect();
        leave.push(linear_fit(&sub).0);
    }
    let mean = leave.iter().sum::<f64>() / blocks as f64;
    let var = leave.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() * (blocks as f64 - 1.0) / blocks as f64;
    Some(RateFit {
        rate: -slope,
        std_err: var.sqrt(),
        samples: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        let (s, c) = linear_fit(&pts);
        assert!((s + 0.5).abs() < 1e-14 && (c - 3.0).abs() < 1e-13);
    }

    #[test]
    fn noisy_exponential_rate() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let tau: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let f: Vec<f64> = tau
            .iter()
            .map(|t| 2.0 * (-0.8 * t).exp() * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)))
            .collect();
        let r = fit_decay_rate(&tau, &f, 0.5).unwrap();
        assert!((r.rate - 0.8).abs() < 0.01);
        assert!(r.is_positive());
        assert!(r.std_err > 0.0 && r.std_err < 0.01);
    }

    #[test]
    fn flat_signal_is_not_positive() {
        let tau: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let f: Vec<f64> = tau.iter().map(|t| 1.0 + 1e-3 * (t * 1.7).sin()).collect();
        let r = fit_decay_rate(&tau, &f, 0.5).unwrap();
        assert!(!r.is_positive());
    }
}
