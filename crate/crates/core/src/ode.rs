//! Dormand-Prince 5(4) integrator with relative error control, exact hits
//! on requested output points and a user stop predicate.

/// Outcome of an integration.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    /// State at each requested output point; `None` past the stopping point.
    pub outputs: Vec<Option<[f64; N]>>,
    pub t_final: f64,
    pub y_final: [f64; N],
    /// True when the stop predicate fired before `t_end`.
    pub stopped: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct DormandPrince {
    pub rtol: f64,
    /// Floor added to the error scale, tiny so control stays relative.
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for DormandPrince {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-300,
            h_init: 1e-4,
            h_max: 0.1,
            max_steps: 2_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn comb<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

impl DormandPrince {
    /// Integrates y' = f(t, y) from t0 to t_end. `outputs` must be sorted;
    /// points outside (t0, t_end] are ignored except that points ≤ t0 are
    /// filled with y0. `stop(t, y)` is checked after every accepted step.
    pub fn integrate<const N: usize, F, S>(
        &self,
        f: F,
        t0: f64,
        y0: [f64; N],
        t_end: f64,
        outputs: &[f64],
        mut stop: S,
    ) -> Trajectory<N>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
        S: FnMut(f64, &[f64; N]) -> bool,
    {
        let mut out = vec![None; outputs.len()];
        let mut next_out = 0;
        while next_out < outputs.len() && outputs[next_out] <= t0 {
            out[next_out] = Some(y0);
            next_out += 1;
        }
        let mut t = t0;
        let mut y = y0;
        let mut h = self.h_init.min(t_end - t0);
        let mut k1 = f(t, &y);
        let mut steps = 0;
        let mut stopped = false;
        while t < t_end && steps < self.max_steps {
            // land exactly on the next output point or the end
            let mut target = t_end;
            if next_out < outputs.len() && outputs[next_out] < target {
                target = outputs[next_out];
            }
            let mut hit = false;
            if t + h >= target {
                h = target - t;
                hit = true;
            }
            let k2 = f(t + C2 * h, &comb(&y, h, &[(A21, &k1)]));
            let k3 = f(t + C3 * h, &comb(&y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(t + C4 * h, &comb(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(
                t + C5 * h,
                &comb(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = f(
                t + h,
                &comb(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y_new = comb(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = f(t + h, &y_new);
            let mut err = 0.0f64;
            for i in 0..N {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                h *= 0.1;
                continue;
            }
            if err <= 1.0 {
                t = if hit { target } else { t + h };
                y = y_new;
                k1 = k7;
                steps += 1;
                while next_out < outputs.len() && outputs[next_out] <= t {
                    out[next_out] = Some(y);
                    next_out += 1;
                }
                if stop(t, &y) {
                    stopped = true;
                    break;
                }
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h * fac).min(self.h_max);
        }
        Trajectory {
            outputs: out,
            t_final: t,
            y_final: y,
            stopped,
            steps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let dp = DormandPrince::default();
        let outs = [0.5, 1.0, 3.0];
        let tr = dp.integrate(|_, y| [y[1], -y[0]], 0.0, [1.0, 0.0], 3.0, &outs, |_, _| false);
        for (t, v) in outs.iter().zip(&tr.outputs) {
            let v = v.unwrap();
            assert!((v[0] - t.cos()).abs() < 1e-10);
            assert!((v[1] + t.sin()).abs() < 1e-10);
        }
        assert!(!tr.stopped);
    }

    #[test]
    fn exponential_decay_keeps_relative_accuracy() {
        let dp = DormandPrince::default();
        let tr = dp.integrate(|_, y| [-3.0 * y[0]], 0.0, [1.0], 40.0, &[40.0], |_, _| false);
        let v = tr.outputs[0].unwrap()[0];
        assert!((v / (-120.0f64).exp() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stop_predicate_halts() {
        let dp = DormandPrince::default();
        let tr = dp.integrate(
            |_, y| [y[1], -y[0]],
            0.0,
            [1.0, 0.0],
            10.0,
            &[1.0, 5.0],
            |_, y| y[0] < 0.0,
        );
        assert!(tr.stopped);
        assert!(tr.t_final > std::f64::consts::FRAC_PI_2 && tr.t_final < 2.0);
        assert!(tr.outputs[0].is_some() && tr.outputs[1].is_none());
    }
}
