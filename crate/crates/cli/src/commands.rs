//! One runner per subcommand. Each returns its CSV files and a JSON
//! results object; writing them is left to the caller.

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use hyperstab::euclidean::{peucs_limit_slope, peucs_sweep, sobolev_constant};
use hyperstab::extremal::{adapted_grid, ode_residual, GroundState, Shooting, ShootingConfig, GROUND_STATE_TOL};
use hyperstab::flow::{
    benilan_crandall_check, smoothing_diagnostic, FlowParams, FlowRates, FlowSystem, OriginalOptions, Scheme,
};
use hyperstab::hsm::{hsm_deficit, hsm_distance, lower, verify_identities, CylParams, HalfSpaceFunction, HsmContext};
use hyperstab::io::{fmt_f64, profile_csv, Table};
use hyperstab::spectral::{sector_spectrum_with, SpectralConfig};
use hyperstab::stability::{
    bubble_with_derivative, distance_to_solutions_axis, euler_lagrange_scan, project_out_ground_state,
    stability_ratio_scan, HMinus1,
};
use hyperstab::{Error, ModelParams, Profile};
use std::sync::Arc;

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing configuration: exit 2.
    Usage(String),
    /// Failure inside a computation: exit 3.
    Numeric(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParams(m) => CliError::Usage(format!("invalid parameters: {m}")),
            other => CliError::Numeric(other),
        }
    }
}

pub type Run = Result<Output, CliError>;

pub struct Output {
    /// (file name, contents).
    pub files: Vec<(String, String)>,
    pub results: Value,
    pub seed: Option<u64>,
}

pub trait Command: Serialize + serde::de::DeserializeOwned {
    const NAME: &'static str;
    fn run(self) -> Run;
}

fn req<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}

fn positive_list(v: &[f64], flag: &str) -> Result<(), CliError> {
    if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(CliError::Usage(format!("--{flag} needs positive finite values")));
    }
    Ok(())
}

fn csv(t: &Table) -> Result<String, CliError> {
    Ok(t.to_csv_string()?)
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn model(n: Option<usize>, p: Option<f64>, lambda: Option<f64>) -> Result<ModelParams, CliError> {
    Ok(ModelParams::new(req(n, "n")?, req(p, "p")?, req(lambda, "lambda")?)?)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtremalArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Outer radius of the grid (default depends on the spectral gap).
    #[arg(long)]
    pub rho_max: Option<f64>,
}

impl Command for ExtremalArgs {
    const NAME: &'static str = "extremal";

    fn run(self) -> Run {
        let pm = model(self.n, self.p, self.lambda)?;
        let rho_max = self.rho_max.unwrap_or_else(|| pm.default_rho_max());
        if !(rho_max.is_finite() && rho_max > 0.0) {
            return Err(CliError::Usage("--rho-max must be positive".into()));
        }
        let shot = Shooting::solve(&pm, ShootingConfig::default())?;
        let prof = shot.profile_on(Arc::new(adapted_grid(&pm, shot.height(), rho_max)?))?;
        let res = ode_residual(&prof, &pm);
        if !(res <= GROUND_STATE_TOL * shot.height().powf(pm.p).max(1.0)) {
            return Err(Error::CorruptProfile(format!("ground-state ODE residual {res:e} too large")).into());
        }
        let gs = GroundState::from_profile(&pm, prof)?;
        let b = gs.best;
        let results = json!({
            "s": b.s,
            "s_error": (b.s - b.s_from_lp).abs(),
            "s_from_lp": b.s_from_lp,
            "lambda_norm_sq": b.lambda_norm_sq,
            "lp_integral": b.lp_integral,
            "consistency": b.consistency,
            "energy_level": b.energy_level(&pm),
            "height": shot.height(),
            "height_error": shot.a_hi - shot.a_lo,
            "tail_exponent": gs.profile.tail.map(|t| t.exponent),
            "ode_residual": res,
            "rho_max": rho_max,
        });
        Ok(Output {
            files: vec![("profile.csv".into(), profile_csv(&gs.profile, &pm)?)],
            results,
            seed: None,
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Angular sectors l, comma separated [default: 0,1,2].
    #[arg(long, value_delimiter = ',')]
    pub sectors: Option<Vec<usize>>,
    /// Eigenvalues per sector [default: 3].
    #[arg(long)]
    pub count: Option<usize>,
    /// Far-field grid spacing [default: 0.01].
    #[arg(long)]
    pub h: Option<f64>,
    /// Richardson extrapolation over h and h/2 [default: true].
    #[arg(long)]
    pub richardson: Option<bool>,
}

impl Command for SpectrumArgs {
    const NAME: &'static str = "spectrum";

    fn run(self) -> Run {
        let pm = model(self.n, self.p, self.lambda)?;
        let sectors = self.sectors.unwrap_or_else(|| vec![0, 1, 2]);
        let count = self.count.unwrap_or(3);
        let mut cfg = SpectralConfig::default();
        cfg.h = self.h.unwrap_or(cfg.h);
        cfg.richardson = self.richardson.unwrap_or(cfg.richardson);
        if sectors.is_empty() || count == 0 || !(cfg.h > 0.0 && cfg.h < 1.0) {
            return Err(CliError::Usage(
                "need at least one sector, --count >= 1 and 0 < --h < 1".into(),
            ));
        }
        let gs = GroundState::solve(&pm)?;
        let spectra = sectors
            .par_iter()
            .map(|&l| sector_spectrum_with(&gs.profile, &pm, l, count, cfg))
            .collect::<Result<Vec<_>, Error>>()?;

        let mut table = Table::new(&["sector", "index", "eigenvalue", "fine", "coarse", "error", "trusted"]);
        let mut files = Vec::new();
        let mut per = Vec::new();
        for s in &spectra {
            let mut errs = Vec::new();
            for (i, &mu) in s.eigenvalues.iter().enumerate() {
                let fine = s.raw_eigenvalues[i];
                let coarse = s.coarse_eigenvalues.get(i).copied();
                let err = (mu - fine).abs();
                errs.push(err);
                table.push(vec![
                    s.l.to_string(),
                    i.to_string(),
                    fmt_f64(mu),
                    fmt_f64(fine),
                    opt(coarse),
                    fmt_f64(err),
                    (i < s.trusted()).to_string(),
                ])?;
            }
            let g = &s.eigenfunctions[0].grid;
            let mut head = vec!["rho".to_string()];
            head.extend((0..s.eigenfunctions.len()).map(|i| format!("psi_{i}")));
            let mut ef = Table {
                header: head,
                rows: Vec::new(),
            };
            for (j, &x) in g.nodes.iter().enumerate() {
                let mut row = vec![x];
                row.extend(s.eigenfunctions.iter().map(|f| f.values[j]));
                ef.push_f64(&row)?;
            }
            files.push((format!("eigenfunctions_l{}.csv", s.l), csv(&ef)?));
            per.push(json!({
                "sector": s.l,
                "eigenvalues": s.eigenvalues,
                "errors": errs,
                "trusted": s.trusted(),
                "cutoff": s.cutoff,
            }));
        }
        files.insert(0, ("eigenvalues.csv".into(), csv(&table)?));
        let find = |l: usize| spectra.iter().find(|s| s.l == l);
        let mut checks = serde_json::Map::new();
        if let Some(s) = find(0) {
            checks.insert("sector0_lowest".into(), json!(s.eigenvalues[0]));
            checks.insert("sector0_lowest_expected".into(), json!(1.0));
            if let Some(&mu3) = s.eigenvalues.get(1) {
                checks.insert("sector0_second".into(), json!(mu3));
                checks.insert("margin_over_p".into(), json!(mu3 - pm.p));
            }
        }
        if let Some(s) = find(1) {
            checks.insert("sector1_lowest".into(), json!(s.eigenvalues[0]));
            checks.insert("sector1_lowest_expected".into(), json!(pm.p));
        }
        Ok(Output {
            files,
            results: json!({"sectors": per, "checks": checks}),
            seed: None,
        })
    }
}

/// Ground state and the second radial eigenfunction of the linearised
/// operator.
fn ground_and_psi(pm: &ModelParams) -> Result<(GroundState, f64, Profile), CliError> {
    let gs = GroundState::solve(pm)?;
    let s0 = sector_spectrum_with(&gs.profile, pm, 0, 2, SpectralConfig::default())?;
    let psi = s0.eigenfunctions[1].clone();
    Ok((gs, s0.eigenvalues[1], psi))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Perturbation sizes [default: 0.1,0.01,0.001,0.0001].
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
}

impl Command for StabilityArgs {
    const NAME: &'static str = "stability";

    fn run(self) -> Run {
        let pm = model(self.n, self.p, self.lambda)?;
        let eps = self.eps.unwrap_or_else(|| vec![1e-1, 1e-2, 1e-3, 1e-4]);
        positive_list(&eps, "eps")?;
        let (gs, mu3, psi) = ground_and_psi(&pm)?;
        let rows = stability_ratio_scan(&psi, &eps, &gs)?;
        let mut t = Table::new(&["eps", "deficit", "distance", "ratio"]);
        for r in &rows {
            t.push(vec![
                fmt_f64(r.eps),
                fmt_f64(r.deficit),
                fmt_f64(r.distance),
                opt(r.ratio),
            ])?;
        }
        let target = 1.0 / (1.0 - pm.p / mu3);
        let last = rows.last().and_then(|r| r.ratio);
        Ok(Output {
            files: vec![("scan.csv".into(), csv(&t)?)],
            results: json!({
                "mu3": mu3,
                "target_ratio": target,
                "last_ratio": last,
                "last_rel_error": last.map(|x| (x - target).abs() / target),
                "best_constant": gs.best.s,
            }),
            seed: None,
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElScanArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Perturbation sizes [default: 0.0001,0.001,0.01,0.1].
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Energy window half-width relative to the ground state [default: 0.5].
    #[arg(long)]
    pub window: Option<f64>,
    /// Translation distances for the bubble check [default: 0.5,1.5,3].
    #[arg(long, value_delimiter = ',')]
    pub shifts: Option<Vec<f64>>,
}

impl Command for ElScanArgs {
    const NAME: &'static str = "el-scan";

    fn run(self) -> Run {
        let pm = model(self.n, self.p, self.lambda)?;
        let eps = self.eps.unwrap_or_else(|| vec![1e-4, 1e-3, 1e-2, 1e-1]);
        positive_list(&eps, "eps")?;
        let window = self.window.unwrap_or(0.5);
        if !(window > 0.0 && window < 1.0) {
            return Err(CliError::Usage("--window must lie in (0, 1)".into()));
        }
        let shifts = self.shifts.unwrap_or_else(|| vec![0.5, 1.5, 3.0]);
        if shifts
            .iter()
            .any(|s| !(s.is_finite() && s.abs() <= hyperstab::stability::S_MAX))
        {
            return Err(CliError::Usage("--shifts must lie in [-10, 10]".into()));
        }
        let (gs, _, psi) = ground_and_psi(&pm)?;
        let psi = project_out_ground_state(&psi, &gs)?;
        let mut fam = Vec::new();
        let mut labels = Vec::new();
        for &e in &eps {
            fam.push(gs.profile.axpy(e, &psi)?);
            labels.push(("mode", e));
            fam.push(gs.profile.scaled(1.0 + e));
            labels.push(("scale", e));
        }
        let hm = HMinus1::new(&gs)?;
        let scan = euler_lagrange_scan(&fam, &gs, &hm, window)?;
        let mut t = Table::new(&["family", "eps", "energy_ratio", "distance", "residual", "ratio", "flag"]);
        for ((name, e), r) in labels.iter().zip(&scan.rows) {
            t.push(vec![
                name.to_string(),
                fmt_f64(*e),
                fmt_f64(r.energy_ratio),
                fmt_f64(r.distance),
                fmt_f64(r.residual),
                opt(r.ratio),
                r.flag.clone().unwrap_or_default(),
            ])?;
        }
        let bubbles = shifts
            .par_iter()
            .map(|&s| distance_to_solutions_axis(&bubble_with_derivative(&gs, s).0, &gs).map(|p| p.dist))
            .collect::<Result<Vec<_>, Error>>()?;
        Ok(Output {
            files: vec![("el_scan.csv".into(), csv(&t)?)],
            results: json!({
                "constant": scan.max_ratio,
                "translated_bubble_distances": bubbles,
                "max_translated_bubble_distance": bubbles.iter().copied().fold(0.0, f64::max),
            }),
            seed: None,
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<f64>,
    /// Time step in τ [default: 0.02].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Far-field grid spacing [default: 0.01].
    #[arg(long)]
    pub h: Option<f64>,
    /// semi-implicit or implicit [default: semi-implicit].
    #[arg(long)]
    pub scheme: Option<String>,
    /// Final rescaled time [default: 16].
    #[arg(long)]
    pub tau_end: Option<f64>,
    /// Size of the perturbation 𝒰(1 + a·e^{−ρ}) [default: 0.3].
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Tune the amplitude so the run converges to 𝒰 [default: true].
    #[arg(long)]
    pub calibrate: Option<bool>,
}

fn flow_params(
    n: Option<usize>,
    m: Option<f64>,
    dt: Option<f64>,
    h: Option<f64>,
    scheme: Option<&str>,
) -> Result<FlowParams, CliError> {
    let mut fp = FlowParams::new(req(n, "n")?, req(m, "m")?)?;
    fp.dt = dt.unwrap_or(fp.dt);
    fp.h = h.unwrap_or(fp.h);
    fp.scheme = match scheme {
        None | Some("semi-implicit") => Scheme::SemiImplicit,
        Some("implicit") => Scheme::Implicit,
        Some(s) => return Err(CliError::Usage(format!("unknown scheme {s:?}"))),
    };
    fp.validate()?;
    Ok(fp)
}

impl Command for FlowArgs {
    const NAME: &'static str = "flow";

    fn run(self) -> Run {
        let fp = flow_params(self.n, self.m, self.dt, self.h, self.scheme.as_deref())?;
        let tau_end = self.tau_end.unwrap_or(16.0);
        let amp = self.amplitude.unwrap_or(0.3);
        if !(tau_end > 0.0 && tau_end.is_finite()) || !(amp > -1.0 && amp.is_finite()) {
            return Err(CliError::Usage(
                "--tau-end must be positive and --amplitude > -1".into(),
            ));
        }
        let sys = FlowSystem::new(fp)?;
        let g = sys.ground_state();
        let vals = g
            .grid
            .nodes
            .iter()
            .zip(&g.values)
            .map(|(&r, &u)| u * (1.0 + amp * (-r).exp()))
            .collect();
        let shape = Profile::new(g.grid.clone(), vals, 0)?;
        let (trace, c, runs) = if self.calibrate.unwrap_or(true) {
            let cal = sys.calibrate(&shape, tau_end)?;
            (cal.trace, cal.c, cal.runs)
        } else {
            (sys.run_rescaled(&shape, tau_end)?, 1.0, 1)
        };
        let mut t = Table::new(&[
            "tau",
            "energy",
            "entropy",
            "rel_err_sup",
            "residual_hm1",
            "mass",
            "lp_dist",
            "mode",
            "bc",
        ]);
        for r in &trace.rows {
            t.push_f64(&[
                r.tau,
                r.energy,
                r.entropy,
                r.rel_err_sup,
                r.residual_hm1,
                r.mass,
                r.lp_dist,
                r.mode,
                r.bc,
            ])?;
        }
        let level = sys.energy_level();
        let last = trace.rows.last().map(|r| r.energy).unwrap_or(f64::NAN);
        let rates = FlowRates::from_trace(&trace, fp.p, 0.5);
        Ok(Output {
            files: vec![("trace.csv".into(), csv(&t)?)],
            results: json!({
                "p": fp.p,
                "scale": c,
                "runs": runs,
                "steps": trace.steps,
                "aborted": trace.aborted.as_ref().map(|e| e.to_string()),
                "energy_level": level,
                "final_energy": last,
                "final_energy_rel_error": (last - level).abs() / level,
                "max_energy_increase": trace.max_energy_increase(),
                "benilan_crandall_max": benilan_crandall_check(&trace, &fp),
                "rates": rates,
                "smoothing": smoothing_diagnostic(&trace),
            }),
            seed: None,
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowOriginalArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<f64>,
    /// Extinction time of the separable initial data [default: 1].
    #[arg(long)]
    pub t_ext: Option<f64>,
    /// Far-field grid spacing [default: 0.01].
    #[arg(long)]
    pub h: Option<f64>,
    /// Step as a fraction of the estimated remaining time [default: 0.004].
    #[arg(long)]
    pub dt_fraction: Option<f64>,
    /// Stop once sup u falls below this fraction of its start [default: 1e-4].
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

impl Command for FlowOriginalArgs {
    const NAME: &'static str = "flow-original";

    fn run(self) -> Run {
        let fp = flow_params(self.n, self.m, None, self.h, None)?;
        let t_ext = self.t_ext.unwrap_or(1.0);
        let mut opts = OriginalOptions::default();
        opts.dt_fraction = self.dt_fraction.unwrap_or(opts.dt_fraction);
        opts.threshold = self.threshold.unwrap_or(opts.threshold);
        opts.max_steps = self.max_steps.unwrap_or(opts.max_steps);
        if !(t_ext > 0.0 && t_ext.is_finite())
            || !(opts.dt_fraction > 0.0 && opts.dt_fraction < 1.0)
            || !(opts.threshold > 0.0 && opts.threshold < 1.0)
        {
            return Err(CliError::Usage(
                "--t-ext must be positive, --dt-fraction and --threshold in (0, 1)".into(),
            ));
        }
        let sys = FlowSystem::new(fp)?;
        let run = sys.run_original(&sys.separable_data(t_ext), opts, &[])?;
        let mut t = Table::new(&["t", "sup_u", "l1"]);
        for r in &run.rows {
            t.push_f64(&[r.t, r.sup_u, r.l1])?;
        }
        Ok(Output {
            files: vec![("original.csv".into(), csv(&t)?)],
            results: json!({
                "t_ext": t_ext,
                "t_extinction": run.t_extinction,
                "rel_error": (run.t_extinction - t_ext).abs() / t_ext,
                "steps": run.steps,
            }),
            seed: None,
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeucsArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Concentration scales [default: 0.08,0.04,0.02,0.01].
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
}

impl Command for PeucsArgs {
    const NAME: &'static str = "peucs";

    fn run(self) -> Run {
        let n = req(self.n, "n")?;
        let lambda = req(self.lambda, "lambda")?;
        let eps = self.eps.unwrap_or_else(|| vec![0.08, 0.04, 0.02, 0.01]);
        positive_list(&eps, "eps")?;
        let sob = sobolev_constant(n)?;
        let pts = peucs_sweep(n, lambda, &eps)?;
        let slope = peucs_limit_slope(n, lambda)?;
        let mut t = Table::new(&[
            "eps",
            "quotient",
            "sobolev",
            "gap",
            "normalized",
            "cutoff_share",
            "warning",
        ]);
        for q in &pts {
            let mut row: Vec<String> = [q.eps, q.quotient, q.sobolev, q.gap, q.normalized, q.cutoff_share]
                .iter()
                .map(|&x| fmt_f64(x))
                .collect();
            row.push(q.warning.to_string());
            t.push(row)?;
        }
        let tail = match pts.as_slice() {
            [.., a, b] => Some((a.normalized - b.normalized).abs() / b.normalized.abs()),
            _ => None,
        };
        Ok(Output {
            files: vec![("peucs.csv".into(), csv(&t)?)],
            results: json!({
                "sobolev_constant": sob,
                "limit_slope": slope,
                "all_below_sobolev": pts.iter().all(|q| q.quotient < sob),
                "last_normalized": pts.last().map(|q| q.normalized),
                "last_two_rel_change": tail,
                "warnings": pts.iter().filter(|q| q.warning).count(),
            }),
            seed: None,
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsmArgs {
    /// Total dimension N = k + h.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub big_n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Random bump pairs for the identity check [default: 10].
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Seed of the bump generator [default: 9].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Size of the bump added to the extremal for the deficit check [default: 0.3].
    #[arg(long)]
    pub amplitude: Option<f64>,
}

impl Command for HsmArgs {
    const NAME: &'static str = "hsm-check";

    fn run(self) -> Run {
        let cp = CylParams::new(
            req(self.big_n, "N")?,
            req(self.k, "k")?,
            req(self.mu, "mu")?,
            req(self.p, "p")?,
        )?;
        let pairs = self.pairs.unwrap_or(10);
        let seed = self.seed.unwrap_or(9);
        let amp = self.amplitude.unwrap_or(0.3);
        if pairs == 0 || !amp.is_finite() {
            return Err(CliError::Usage(
                "--pairs must be positive and --amplitude finite".into(),
            ));
        }
        // draw everything up front so the sample does not depend on scheduling
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bump = || {
            HalfSpaceFunction::gaussian(
                rng.gen_range(0.5..2.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.3..0.8),
                rng.gen_range(0.4..1.2),
            )
        };
        let draws: Vec<_> = (0..pairs).map(|_| (bump(), bump())).collect();
        let ids = draws
            .par_iter()
            .map(|(a, b)| verify_identities(a, b, &cp))
            .collect::<Result<Vec<_>, Error>>()?;
        let mut t = Table::new(&["pair", "hardy", "nonlinear", "gradient"]);
        for (i, x) in ids.iter().enumerate() {
            t.push(vec![
                i.to_string(),
                fmt_f64(x.hardy.residual),
                fmt_f64(x.nonlinear.residual),
                fmt_f64(x.gradient.residual),
            ])?;
        }
        let worst = ids.iter().map(|x| x.max_residual()).fold(0.0, f64::max);
        let ctx = HsmContext::new(cp)?;
        let v = ctx
            .extremal(1.0)
            .axpy(amp, &lower(&HalfSpaceFunction::gaussian(1.0, 0.5, 0.4, 0.5), &cp));
        let deficit = hsm_deficit(&v, &ctx)?;
        let distance = hsm_distance(&v, &ctx)?;
        Ok(Output {
            files: vec![("identities.csv".into(), csv(&t)?)],
            results: json!({
                "dictionary": {
                    "h": cp.h,
                    "n": cp.n,
                    "lambda": cp.lambda,
                    "t": cp.t,
                    "omega_k": cp.omega_k,
                },
                "hyperbolic_constant": ctx.gs.best.s,
                "hsm_constant": ctx.hsm_constant(),
                "max_identity_residual": worst,
                "deficit": deficit,
                "distance": distance,
            }),
            seed: Some(seed),
        })
    }
}
