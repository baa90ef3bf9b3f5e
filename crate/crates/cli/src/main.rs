//! Batch front end: each subcommand validates its configuration, runs one
//! computation and writes CSV tables, `manifest.json` and `summary.txt`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure (the error record is written to the manifest).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use commands::{
    CliError, Command, ElScanArgs, ExtremalArgs, FlowArgs, FlowOriginalArgs, HsmArgs, Output, PeucsArgs, SpectrumArgs,
    StabilityArgs,
};
use hyperstab::io::{output_path, summary_lines, ErrorRecord, Manifest};

const DEFAULT_OUT: &str = "hyperstab-out";

#[derive(Parser)]
#[command(
    name = "hyperstab",
    version,
    about = "Poincaré-Sobolev extremals, spectra, stability and flows on hyperbolic space"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Run<A: Args> {
    /// JSON config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: hyperstab-out].
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    args: A,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ground state and best constant S_{n,p,λ}.
    Extremal(Run<ExtremalArgs>),
    /// Eigenvalues of the linearised operator by angular sector.
    Spectrum(Run<SpectrumArgs>),
    /// dist²/δ² along the second radial eigenfunction.
    Stability(Run<StabilityArgs>),
    /// dist(u, 𝒵)/‖I'(u)‖ over perturbed and rescaled ground states.
    ElScan(Run<ElScanArgs>),
    /// Rescaled fast-diffusion flow towards the ground state.
    Flow(Run<FlowArgs>),
    /// Original fast-diffusion flow from separable data, recovering T.
    FlowOriginal(Run<FlowOriginalArgs>),
    /// Euclidean concentration quotients against S(ℝⁿ).
    Peucs(Run<PeucsArgs>),
    /// Cylindrical lifting identities and transported deficit.
    HsmCheck(Run<HsmArgs>),
}

fn set_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("HYPERSTAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("HYPERSTAB_THREADS = {v:?} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("error: {msg}\n\nFor more information, try '--help'.");
    ExitCode::from(2)
}

fn execute<A: Args + Command>(run: Run<A>) -> ExitCode {
    let start = Instant::now();
    let mut file = match &run.config {
        Some(p) => match config::load(p, A::NAME) {
            Ok(m) => m,
            Err(e) => return usage(&e),
        },
        None => Default::default(),
    };
    let out = match (run.out, file.remove("out")) {
        (Some(p), _) => p,
        (None, Some(Value::String(s))) => PathBuf::from(s),
        (None, Some(other)) => return usage(&format!("config: out must be a string, got {other}")),
        (None, None) => PathBuf::from(DEFAULT_OUT),
    };
    let (args, mut echo) = match config::resolve(&run.args, file) {
        Ok(x) => x,
        Err(e) => return usage(&e),
    };
    if let Value::Object(m) = &mut echo {
        m.insert("out".into(), Value::String(out.display().to_string()));
    }
    let mut manifest = Manifest {
        tool: "hyperstab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: A::NAME.into(),
        config: echo,
        seed: None,
        threads: rayon::current_num_threads(),
        wall_time_s: 0.0,
        outputs: Vec::new(),
        results: Value::Null,
        error: None,
    };
    let result = args.run();
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    match result {
        Ok(Output { files, results, seed }) => {
            manifest.seed = seed;
            let lines = summary_lines(&results);
            let mut write = || -> hyperstab::Result<()> {
                for (name, body) in &files {
                    fs::write(output_path(&out, name)?, body).map_err(|e| hyperstab::Error::Io(e.to_string()))?;
                    manifest.outputs.push(name.clone());
                }
                let summary = format!("{} {}\n{}\n", A::NAME, manifest.config, lines.join("\n"));
                fs::write(output_path(&out, "summary.txt")?, summary)
                    .map_err(|e| hyperstab::Error::Io(e.to_string()))?;
                manifest.outputs.push("summary.txt".into());
                manifest.results = results.clone();
                manifest.write(&output_path(&out, "manifest.json")?)
            };
            if let Err(e) = write() {
                eprintln!("error: {e}");
                return ExitCode::from(3);
            }
            for l in &lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(m)) => usage(&m),
        Err(CliError::Numeric(e)) => {
            eprintln!("error [{}]: {e}", e.code());
            manifest.error = Some(ErrorRecord::from(&e));
            if let Err(w) = output_path(&out, "manifest.json").and_then(|p| manifest.write(&p)) {
                eprintln!("error: could not write manifest: {w}");
            }
            ExitCode::from(3)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = set_threads() {
        return usage(&e);
    }
    match cli.command {
        Cmd::Extremal(r) => execute(r),
        Cmd::Spectrum(r) => execute(r),
        Cmd::Stability(r) => execute(r),
        Cmd::ElScan(r) => execute(r),
        Cmd::Flow(r) => execute(r),
        Cmd::FlowOriginal(r) => execute(r),
        Cmd::Peucs(r) => execute(r),
        Cmd::HsmCheck(r) => execute(r),
    }
}
