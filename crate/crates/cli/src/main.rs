use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use asvar_core::experiments::{
    compare_run, default_grid, resolve_sign, toy_sweep, verify_suite, ToyCase, ToyProposal,
};
use asvar_core::latent::{preset, LatentModel, NoisyModel, TableModel, TestFn};
use asvar_core::samplers::{path_rows, run, Algorithm, PathRow};
use asvar_core::variance::{batch_means_asvar, default_batch_count, initial_sequence_asvar};

#[derive(Parser)]
#[command(
    name = "asvar-lab",
    version,
    about = "Asymptotic-variance experiments for IS, DA and PM chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact sweep over the three-state toy family.
    Toy(ToyArgs),
    /// Randomized ordering checks on small reversible chains.
    Verify(VerifyArgs),
    /// Simulate one chain and write its path as CSV.
    Simulate(SimulateArgs),
    /// Run several algorithms over replicate seeds and compare.
    Compare(CompareArgs),
    /// Estimate the asymptotic variance from a path CSV.
    Asvar(AsvarArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Built-in model name.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON model file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Multiply every weight by a mean-one lognormal factor with this sigma.
    #[arg(long)]
    noise: Option<f64>,
    /// Add this constant to every η.
    #[arg(long)]
    inflate: Option<f64>,
}

impl ModelArgs {
    fn load(&self) -> Result<Box<dyn LatentModel>> {
        let mut table: TableModel = match (&self.preset, &self.config) {
            (_, Some(p)) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                TableModel::from_json(&text)?
            }
            (Some(name), None) => preset(name)?,
            (None, None) => preset("two-coin")?,
        };
        if let Some(eps) = self.inflate {
            table = table.inflated(eps)?;
        }
        Ok(match self.noise {
            Some(s) => Box::new(NoisyModel::new(table, s)?),
            None => Box::new(table),
        })
    }
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, default_value = "da-better")]
    case: ToyCase,
    #[arg(long, default_value = "rw")]
    proposal: ToyProposal,
    /// `LO:HI:STEP`, inclusive of `HI` when it lies on the grid.
    #[arg(long)]
    a_grid: Option<String>,
    /// Tolerance for matching the closed forms.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    instances: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    algo: Algorithm,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "theta")]
    f: TestFn,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated algorithm names.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "pm-parent,da,is0,isj-single,isj-avg"
    )]
    algos: Vec<Algorithm>,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Number of replicate seeds.
    #[arg(long, default_value_t = 20)]
    replicates: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "theta")]
    f: TestFn,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Pm,
    Is,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    BatchMeans,
    InitialSequence,
}

#[derive(Args)]
struct AsvarArgs {
    /// Path CSV written by `simulate`.
    #[arg(long)]
    path: PathBuf,
    #[arg(long, value_enum)]
    estimator: EstimatorArg,
    #[arg(long, value_enum, default_value = "batch-means")]
    method: MethodArg,
    #[arg(long)]
    batches: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct AsvarOutput {
    value: f64,
    se: Option<f64>,
    method: String,
    components: serde_json::Value,
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut w = writer(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad grid `{spec}`"))?;
    let [lo, hi, step] = parts[..] else {
        bail!("grid must be LO:HI:STEP, got `{spec}`");
    };
    if !(step > 0.0) || hi < lo {
        bail!("grid needs STEP > 0 and HI >= LO");
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| lo + i as f64 * step).collect())
}

fn cmd_toy(a: &ToyArgs) -> Result<bool> {
    let grid = match &a.a_grid {
        Some(s) => parse_grid(s)?,
        None => default_grid(),
    };
    let rows = toy_sweep(a.case, a.proposal, &grid)?;
    let mut w = csv::Writer::from_writer(writer(a.out.as_deref())?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let bounds_ok = rows.iter().all(|r| r.ub_holds && r.ordering_holds);
    let max_dev = rows.iter().map(|r| r.max_abs_dev).fold(0.0, f64::max);
    eprintln!(
        "{} / {}: {} cells, bounds {}, closed forms {} (max dev {:.3e})",
        a.case,
        a.proposal,
        rows.len(),
        if bounds_ok { "hold" } else { "VIOLATED" },
        if max_dev <= a.tol { "match" } else { "differ" },
        max_dev,
    );
    let sign = resolve_sign(&rows, a.tol);
    if sign.flipped_matches && !sign.reference_matches {
        eprintln!(
            "var(L, f) follows the flipped-sign form (max dev {:.3e})",
            sign.max_dev_flipped
        );
    }
    Ok(bounds_ok)
}

fn cmd_verify(a: &VerifyArgs) -> Result<bool> {
    let report = verify_suite(a.seed, a.instances)?;
    write_json(&report, a.out.as_deref())?;
    for c in &report.checks {
        if c.violations > 0 {
            eprintln!("{}: {} of {} violated", c.check, c.violations, c.evaluated);
        }
    }
    Ok(report.passed)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<bool> {
    let model = a.model.load()?;
    let path = run(model.as_ref(), model.proposal(), a.algo, a.n, a.seed)?;
    let mut w = csv::Writer::from_writer(writer(a.out.as_deref())?);
    for r in path_rows(&path, model.as_ref(), a.f) {
        w.serialize(r)?;
    }
    w.flush()?;
    eprintln!(
        "{} on {}: {} entries, acceptance {:.3}, {} V draws, {} eta evaluations",
        a.algo,
        model.id(),
        path.len(),
        path.acceptance_rate(),
        path.meta.v_draws,
        path.meta.eta_evals
    );
    Ok(true)
}

fn cmd_compare(a: &CompareArgs) -> Result<bool> {
    let model = a.model.load()?;
    let seeds: Vec<u64> = (a.seed..a.seed + a.replicates).collect();
    let report = compare_run(model.as_ref(), model.proposal(), &a.algos, a.n, &seeds, a.f)?;
    write_json(&report, a.out.as_deref())?;
    for s in &report.algorithms {
        eprintln!(
            "{:<10} est {:.5} ± {:.5}  asvar {:.4}{}",
            s.algorithm.name(),
            s.mean_estimate,
            s.se,
            s.mean_asvar,
            s.exact_asvar
                .map(|v| format!(" (exact {v:.4})"))
                .unwrap_or_default()
        );
    }
    if report.trivial_weights == Some(true) {
        eprintln!("w is identically one: IS and PM coincide");
    }
    Ok(report.passed)
}

fn read_rows(p: &Path) -> Result<Vec<PathRow>> {
    let mut r = csv::Reader::from_path(p).with_context(|| format!("reading {}", p.display()))?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<PathRow>, _>>()?;
    if rows.is_empty() {
        bail!("{} has no rows", p.display());
    }
    Ok(rows)
}

fn cmd_asvar(a: &AsvarArgs) -> Result<bool> {
    let rows = read_rows(&a.path)?;
    let run_method = |y: &[f64]| match a.method {
        MethodArg::BatchMeans => {
            batch_means_asvar(y, a.batches.unwrap_or_else(|| default_batch_count(y.len())))
        }
        MethodArg::InitialSequence => initial_sequence_asvar(y),
    };
    let out = match a.estimator {
        EstimatorArg::Pm => {
            let y: Vec<f64> = rows
                .iter()
                .map(|r| {
                    r.zetahat_f
                        .context("PM estimator needs the zetahat_f column")
                })
                .collect::<Result<_>>()?;
            let e = run_method(&y)?;
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            AsvarOutput {
                value: e.value,
                se: e.standard_error,
                method: format!("{:?}", e.method),
                components: serde_json::json!({ "estimate": mean, "steps": y.len() }),
            }
        }
        EstimatorArg::Is => {
            let mut terms = Vec::with_capacity(rows.len());
            for r in &rows {
                let (x1, xf) = r
                    .xi1
                    .zip(r.xif)
                    .context("IS estimator needs the xi1 and xif columns")?;
                terms.push((r.n as f64 * x1, r.n as f64 * xf));
            }
            let d: f64 = terms.iter().map(|t| t.0).sum();
            if d <= 0.0 {
                bail!("total weight is zero");
            }
            let est = terms.iter().map(|t| t.1).sum::<f64>() / d;
            let y: Vec<f64> = terms.iter().map(|(a1, af)| af - est * a1).collect();
            let e = run_method(&y)?;
            let jumps = rows.len() as f64;
            let base: f64 = rows.iter().map(|r| r.n as f64).sum();
            let scale = (jumps / d).powi(2) * base / jumps;
            AsvarOutput {
                value: e.value * scale,
                se: e.standard_error.map(|s| s * scale),
                method: format!("is-linearized/{:?}", e.method),
                components: serde_json::json!({
                    "estimate": est,
                    "jump_steps": rows.len(),
                    "base_steps": base,
                    "mean_weight": d / jumps,
                    "centered_asvar": e.value,
                }),
            }
        }
    };
    write_json(&out, a.out.as_deref())?;
    Ok(out.value.is_finite())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Toy(a) => cmd_toy(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Asvar(a) => cmd_asvar(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
