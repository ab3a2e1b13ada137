//! The `dpa` command-line tool.

pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use dpa_core::covariance::{final_covariance, BOptions, BVariant, TailMode};
use dpa_core::exact::enumerate_exact;
use dpa_core::limits::p_grid;
use dpa_core::martingale::{xi_matrix, xi_table};
use dpa_core::sim::{grow_stream, GrowOptions};
use dpa_core::verify::{qq_table, run_ensemble, Adjudication, EnsembleConfig, VerifyOptions};
use dpa_core::{IndexWindow, ModelParams};

pub use error::{CliError, CliResult};
use io::{ExactRecord, PRow, QqCsvRow, SimRow, XiMatrixRow, XiRow};
use manifest::{unix_now, FileDigest, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "dpa",
    version,
    about = "Directed preferential attachment: limits, covariance, simulation"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Limiting joint degree distribution on a rectangle.
    Limits(LimitsArgs),
    /// Limit coefficients xi for one target pair.
    Xi(XiArgs),
    /// The window matrix of limit coefficients.
    XiMatrix(XiMatrixArgs),
    /// Predicted CLT covariance for a window.
    Covariance(CovarianceArgs),
    /// Grow graphs and record degree counts.
    Simulate(SimulateArgs),
    /// Exact law of the count grid for small n.
    Enumerate(EnumerateArgs),
    /// Monte Carlo check of the predicted Gaussian limit.
    Verify(VerifyArgs),
}

/// Model parameters. Omitting all four selects (0.5, 0.5, 1, 1); otherwise
/// `--alpha`, `--lambda` and `--mu` are required and `--gamma` defaults to
/// `1 - alpha`.
#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
}

impl ParamArgs {
    pub fn resolve(&self) -> CliResult<ModelParams> {
        if self.alpha.is_none()
            && self.gamma.is_none()
            && self.lambda.is_none()
            && self.mu.is_none()
        {
            return Ok(ModelParams::reference());
        }
        let missing = |name: &str| CliError::Usage(format!("missing required flag --{name}"));
        let alpha = self.alpha.ok_or_else(|| missing("alpha"))?;
        let lambda = self.lambda.ok_or_else(|| missing("lambda"))?;
        let mu = self.mu.ok_or_else(|| missing("mu"))?;
        let gamma = self.gamma.unwrap_or(1.0 - alpha);
        Ok(ModelParams::new(alpha, gamma, lambda, mu)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Manifest path; defaults to one derived from the main output.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected I,O but got '{s}'"))?;
    let a = a.trim().parse().map_err(|e| format!("'{a}': {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("'{b}': {e}"))?;
    Ok((a, b))
}

#[derive(Debug, Clone, Args)]
pub struct LimitsArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub imax: u32,
    #[arg(long)]
    pub jmax: u32,
    #[arg(long, default_value = "p.csv")]
    pub out: PathBuf,
    /// Mass and moment diagnostics; defaults to the output with a `.json` extension.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct XiArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub i: u32,
    #[arg(long)]
    pub j: u32,
    #[arg(long, default_value = "xi.csv")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct XiMatrixArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, value_parser = parse_pair, value_name = "I,O")]
    pub window: (u32, u32),
    #[arg(long, default_value = "xi_matrix.csv")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct CovarianceArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, value_parser = parse_pair, value_name = "I,O")]
    pub window: (u32, u32),
    /// Sum the jump terms directly over this box instead of closing the tail analytically.
    #[arg(long = "box", value_parser = parse_pair, value_name = "R,Q")]
    pub sum_box: Option<(u32, u32)>,
    #[arg(long, default_value = "corrected")]
    pub variant: BVariant,
    /// Largest tolerated tail remainder with `--box`.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[arg(long, default_value = "cov.json")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub runs: u64,
    /// Sizes at which window counts are recorded (requires `--window`).
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Vec<u64>,
    #[arg(long, value_parser = parse_pair, value_name = "I,O")]
    pub window: Option<(u32, u32)>,
    #[arg(long, default_value = "sim")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct EnumerateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value = "exact.json")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub runs: usize,
    #[arg(long, value_parser = parse_pair, value_name = "I,O", default_value = "2,2")]
    pub window: (u32, u32),
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "corrected")]
    pub variant: BVariant,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Extra sizes to record; defaults to `n/2`.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<u64>>,
    /// Envelope constant for the concentration check.
    #[arg(long = "concentration-c", default_value_t = 5.0)]
    pub concentration_c: f64,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value = "report.json")]
    pub report: PathBuf,
    #[arg(long)]
    pub qq: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    match parse_and_dispatch(argv) {
        Ok(()) => 0,
        Err(Outcome::Clap(e)) => {
            let _ = e.print();
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            }
        }
        Err(Outcome::Cli(e)) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            e.exit_code()
        }
    }
}

enum Outcome {
    Clap(clap::Error),
    Cli(CliError),
}

impl From<CliError> for Outcome {
    fn from(e: CliError) -> Self {
        Outcome::Cli(e)
    }
}

fn parse_and_dispatch(argv: Vec<OsString>) -> Result<(), Outcome> {
    let (argv, config_path) = config::extract_config(argv)?;
    let argv = config::merge(argv, config_path.as_deref())?;
    let cli = Cli::try_parse_from(&argv).map_err(Outcome::Clap)?;
    let mut ctx = Context {
        argv: argv
            .iter()
            .skip(1)
            .map(|a| a.to_string_lossy().into_owned())
            .collect(),
        inputs: Vec::new(),
        started: unix_now(),
    };
    if let Some(p) = &config_path {
        ctx.inputs.push(FileDigest::of(p)?);
    }
    dispatch(cli.command, &ctx)?;
    Ok(())
}

struct Context {
    argv: Vec<String>,
    inputs: Vec<FileDigest>,
    started: u64,
}

impl Context {
    fn write_manifest(
        &self,
        command: &str,
        params: ModelParams,
        seeds: Vec<u64>,
        outputs: &[PathBuf],
        path: &Path,
    ) -> CliResult<()> {
        let manifest = RunManifest {
            tool: "dpa".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv: self.argv.clone(),
            params,
            seeds,
            started_unix: self.started,
            finished_unix: unix_now(),
            inputs: self.inputs.clone(),
            outputs: outputs
                .iter()
                .map(|p| FileDigest::of(p))
                .collect::<CliResult<_>>()?,
        };
        io::write_json(path, &manifest)
    }
}

/// `out.csv` -> `out.manifest.json`.
fn manifest_beside(out: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| out.with_extension("manifest.json"))
}

fn dispatch(command: Command, ctx: &Context) -> CliResult<()> {
    match command {
        Command::Limits(a) => limits(a, ctx),
        Command::Xi(a) => xi(a, ctx),
        Command::XiMatrix(a) => xi_matrix_cmd(a, ctx),
        Command::Covariance(a) => covariance(a, ctx),
        Command::Simulate(a) => simulate(a, ctx),
        Command::Enumerate(a) => enumerate(a, ctx),
        Command::Verify(a) => verify(a, ctx),
    }
}

#[derive(serde::Serialize)]
struct LimitsDiagnostics {
    imax: u32,
    jmax: u32,
    mass: f64,
    mean_in: f64,
    mean_out: f64,
}

fn limits(a: LimitsArgs, ctx: &Context) -> CliResult<()> {
    let params = a.params.resolve()?;
    let grid = p_grid(&params, a.imax, a.jmax);
    let rows: Vec<PRow> = grid.cells().map(|(i, j, p)| PRow { i, j, p }).collect();
    io::write_csv(&a.out, &rows)?;
    let diag_path = a
        .diagnostics
        .clone()
        .unwrap_or_else(|| a.out.with_extension("json"));
    io::write_json(
        &diag_path,
        &LimitsDiagnostics {
            imax: a.imax,
            jmax: a.jmax,
            mass: grid.mass(),
            mean_in: grid.mean_in(),
            mean_out: grid.mean_out(),
        },
    )?;
    println!(
        "mass {} mean_in {} mean_out {}",
        grid.mass(),
        grid.mean_in(),
        grid.mean_out()
    );
    ctx.write_manifest(
        "limits",
        params,
        vec![],
        &[a.out.clone(), diag_path],
        &manifest_beside(&a.out, &a.common.manifest),
    )
}

fn xi(a: XiArgs, ctx: &Context) -> CliResult<()> {
    let params = a.params.resolve()?;
    if (a.i, a.j) == (0, 0) {
        return Err(CliError::Usage("target (0,0) has no coefficients".into()));
    }
    let table = xi_table(&params, a.i, a.j);
    let rows: Vec<XiRow> = table.cells().map(|(k, l, xi)| XiRow { k, l, xi }).collect();
    io::write_csv(&a.out, &rows)?;
    ctx.write_manifest(
        "xi",
        params,
        vec![],
        std::slice::from_ref(&a.out),
        &manifest_beside(&a.out, &a.common.manifest),
    )
}

fn nonempty_window((i, o): (u32, u32)) -> CliResult<IndexWindow> {
    let w = IndexWindow::new(i, o);
    if w.is_empty() {
        return Err(CliError::Usage("window 0,0 has no coordinates".into()));
    }
    Ok(w)
}

fn xi_matrix_cmd(a: XiMatrixArgs, ctx: &Context) -> CliResult<()> {
    let params = a.params.resolve()?;
    let window = nonempty_window(a.window)?;
    let m = xi_matrix(&params, &window);
    let coords = window.coords();
    let rows: Vec<XiMatrixRow> = coords
        .iter()
        .enumerate()
        .flat_map(|(r, &(i, j))| {
            coords
                .iter()
                .enumerate()
                .map(move |(c, &(k, l))| (r, c, i, j, k, l))
        })
        .map(|(r, c, i, j, k, l)| XiMatrixRow {
            i,
            j,
            k,
            l,
            xi: m.get(r, c),
        })
        .collect();
    io::write_csv(&a.out, &rows)?;
    ctx.write_manifest(
        "xi-matrix",
        params,
        vec![],
        std::slice::from_ref(&a.out),
        &manifest_beside(&a.out, &a.common.manifest),
    )
}

fn covariance(a: CovarianceArgs, ctx: &Context) -> CliResult<()> {
    let params = a.params.resolve()?;
    let window = nonempty_window(a.window)?;
    let (tail, (rmax, qmax)) = match a.sum_box {
        Some((rmax, qmax)) => (TailMode::Direct { rmax, qmax }, (rmax, qmax)),
        None => (TailMode::Analytic, (window.imax(), window.jmax())),
    };
    let grid = p_grid(&params, rmax.max(1), qmax.max(1));
    let opts = BOptions {
        variant: a.variant,
        tail,
        tolerance: a.tolerance,
    };
    let model = final_covariance(&params, &window, &grid, &opts)?;
    io::write_json(&a.out, &model)?;
    println!(
        "variant {} min eigenvalue {} max remainder {}",
        a.variant, model.diagnostics.min_eigenvalue, model.diagnostics.max_b_remainder
    );
    ctx.write_manifest(
        "covariance",
        params,
        vec![],
        std::slice::from_ref(&a.out),
        &manifest_beside(&a.out, &a.common.manifest),
    )
}

fn simulate(a: SimulateArgs, ctx: &Context) -> CliResult<()> {
    let params = a.params.resolve()?;
    if !a.checkpoints.is_empty() && a.window.is_none() {
        return Err(CliError::Usage("--checkpoints requires --window".into()));
    }
    if a.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let window = a.window.map(|(i, o)| IndexWindow::new(i, o));
    let mut checkpoints = a.checkpoints.clone();
    checkpoints.push(a.n);
    let opts = GrowOptions {
        checkpoints,
        window: window.clone(),
        ..GrowOptions::default()
    };
    let mut outputs = Vec::new();
    for run in 0..a.runs {
        let out = grow_stream(&params, a.n, a.seed, run, &opts)?;
        let rows: Vec<SimRow> = match &window {
            Some(w) => out
                .checkpoints
                .iter()
                .flat_map(|cp| {
                    w.coords()
                        .iter()
                        .zip(&cp.counts)
                        .map(move |(&(i, j), &count)| SimRow {
                            checkpoint_n: cp.n,
                            i,
                            j,
                            count,
                        })
                })
                .collect(),
            None => out
                .counts
                .nonzero()
                .into_iter()
                .map(|(i, j, count)| SimRow {
                    checkpoint_n: a.n,
                    i,
                    j,
                    count,
                })
                .collect(),
        };
        let path = a.out.join(format!("run_{run:04}.csv"));
        io::write_csv(&path, &rows)?;
        outputs.push(path);
    }
    let manifest = a
        .common
        .manifest
        .clone()
        .unwrap_or_else(|| a.out.join("manifest.json"));
    println!("wrote {} run(s) to {}", a.runs, a.out.display());
    ctx.write_manifest("simulate", params, vec![a.seed], &outputs, &manifest)
}

fn enumerate(a: EnumerateArgs, ctx: &Context) -> CliResult<()> {
    let params = a.params.resolve()?;
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let laws = enumerate_exact(&params, a.n)?;
    let law = laws.last().expect("n >= 1");
    let records: Vec<ExactRecord> = law
        .states
        .iter()
        .map(|(state, &prob)| ExactRecord {
            state: state.clone(),
            prob,
        })
        .collect();
    io::write_json(&a.out, &records)?;
    println!("{} states at n = {}", records.len(), law.n);
    ctx.write_manifest(
        "enumerate",
        params,
        vec![],
        std::slice::from_ref(&a.out),
        &manifest_beside(&a.out, &a.common.manifest),
    )
}

fn verify(a: VerifyArgs, ctx: &Context) -> CliResult<()> {
    let params = a.params.resolve()?;
    let window = nonempty_window(a.window)?;
    let mut cfg = EnsembleConfig::new(a.n, a.runs, a.seed, window.clone()).with_workers(a.workers);
    if let Some(cp) = &a.checkpoints {
        cfg.checkpoints = cp.clone();
    }
    let opts = VerifyOptions {
        primary: a.variant,
        concentration_c: a.concentration_c,
        bootstrap_reps: a.bootstrap,
    };
    let run = run_ensemble(&params, &cfg, &opts)?;
    let r = &run.report;
    io::write_text(&a.report, &(r.to_json() + "\n"))?;
    let mut outputs = vec![a.report.clone()];
    if let Some(qq) = &a.qq {
        if r.insufficient_replications {
            return Err(CliError::Usage("--qq needs at least two runs".into()));
        }
        let variances = r
            .prediction(a.variant)
            .expect("variant evaluated")
            .final_cov
            .clone();
        let d = window.len();
        let diag: Vec<f64> = (0..d).map(|c| variances[c * d + c]).collect();
        let rows: Vec<QqCsvRow> = qq_table(&run.z, &window, &diag)
            .into_iter()
            .map(|q| QqCsvRow {
                i: q.i,
                j: q.j,
                rank: q.rank,
                standardized: q.standardized,
                normal_quantile: q.normal_quantile,
            })
            .collect();
        io::write_csv(qq, &rows)?;
        outputs.push(qq.clone());
    }
    print_summary(r);
    ctx.write_manifest(
        "verify",
        params,
        vec![a.seed],
        &outputs,
        &manifest_beside(&a.report, &a.common.manifest),
    )
}

fn print_summary(r: &dpa_core::verify::EnsembleReport) {
    println!(
        "n = {}, runs = {}, window coordinates = {}",
        r.n,
        r.runs,
        r.window.len()
    );
    if r.insufficient_replications {
        println!("insufficient replications: covariance checks skipped");
        return;
    }
    for v in &r.predictions {
        if let Some(m) = v.max_mismatch_se {
            println!("{:<11} max covariance mismatch {m:.3} SE", v.variant.name());
        }
    }
    match &r.adjudication {
        Adjudication::Match { variant } => println!("matching variant: {variant}"),
        Adjudication::Inconclusive { variants } => {
            let names: Vec<&str> = variants.iter().map(|v| v.name()).collect();
            println!("adjudication inconclusive: {}", names.join(", "))
        }
        Adjudication::NoMatch => println!("no variant matches"),
        Adjudication::Unavailable => println!("adjudication unavailable"),
    }
    if let Some(ks) = &r.ks {
        let worst = ks.iter().map(|k| k.statistic).fold(0.0, f64::max);
        println!(
            "max KS statistic {worst:.4} (1% critical {:.4})",
            r.ks_critical_1pct
        );
    }
    if let Some(m) = &r.mahalanobis {
        for q in m {
            println!(
                "Mahalanobis q{}: {:.4} vs {:.4} ({:.2} SE)",
                q.level,
                q.empirical,
                q.reference,
                q.deviation_se()
            );
        }
    }
    for c in &r.concentration {
        println!("concentration n = {}: violation rate {}", c.n, c.rate);
    }
}
