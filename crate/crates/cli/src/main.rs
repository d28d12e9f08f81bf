//! `bmf`: fit models, run experiment protocols, generate synthetic data and
//! run the installation self-test.
//!
//! Exit codes: 0 success, 1 I/O error, 2 configuration error, 3 data error,
//! 4 numerical failure. Messages go to stderr; stdout only carries progress
//! under `--verbose`.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bmf::data::{generate_synthetic, load_matrix, render_matrix, Family, LoadOptions, ObservedMatrix, SynthSpec};
use bmf::experiments::{self, render_curves, render_records, render_summary, summarise, Protocol};
use bmf::inference::{fit_full, render_trace};
use bmf::models::{ModelKind, ModelSpec};
use bmf::selftest::run_selftest;
use bmf::{Error, ErrorClass, Result};
use clap::{Args, Parser, Subcommand};

use config::{io_error, RunConfig};

#[derive(Parser)]
#[command(name = "bmf", version, about = "Bayesian matrix factorisation by Gibbs sampling")]
struct Cli {
    /// Worker threads for folds, repeats and rows (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print progress on stdout.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and write its trace and predictions.
    Fit(FitArgs),
    /// Run an experiment protocol.
    Experiment(ExperimentArgs),
    /// Generate a synthetic matrix and its manifest.
    Synth(SynthArgs),
    /// Run the quick installation checks.
    Selftest,
}

#[derive(Args, Clone, Default)]
struct SamplerArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thinning: Option<usize>,
    /// Opening sweeps that keep the noise precision at its prior mean.
    #[arg(long)]
    noise_warmup: Option<usize>,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Matrix file (comma or tab delimited, NA for missing).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Drop rows/columns with fewer observed entries.
    #[arg(long)]
    min_observed: Option<usize>,
    /// Round values half-up to integers (for the Poisson models).
    #[arg(long)]
    round_counts: bool,
    /// Write wall-clock times instead of NA.
    #[arg(long)]
    timings: bool,
    /// Volume-prior weight for GVG/GVnG.
    #[arg(long)]
    gamma: Option<f64>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model name, e.g. GGG, GGGA, GVnG, PGGG, NMF.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// File of `row,col` lines to predict (default: every cell).
    #[arg(long)]
    predict: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// convergence, cross_validation, nested_cv, noise, sparsity or model_selection.
    #[arg(long)]
    protocol: Option<String>,
    /// Comma-separated model names.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    noise_levels: Option<Vec<f64>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    inner_folds: Option<usize>,
    #[arg(long)]
    holdout: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Regenerate from a manifest instead of flags.
    #[arg(long, conflicts_with_all = ["rows", "cols", "k", "family", "seed", "tau", "fraction"])]
    from_manifest: Option<PathBuf>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// gaussian, nonnegative, semi-nonnegative or poisson.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Noise precision (`inf` for noiseless).
    #[arg(long)]
    tau: Option<f64>,
    /// Fraction of entries observed.
    #[arg(long)]
    fraction: Option<f64>,
    /// Matrix file to write.
    #[arg(long)]
    out: PathBuf,
    /// Manifest path (default: `<out>.manifest.toml`).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Io => 1,
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn parse_kind(name: &str) -> Result<ModelKind> {
    name.parse().map_err(|_| Error::Config(format!("unknown model {name:?}")))
}

/// Merge the config file with command-line flags (flags win).
fn merged(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.data {
        cfg.data = Some(d.clone());
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    if let Some(m) = common.min_observed {
        cfg.min_observed = m;
    }
    cfg.round_counts |= common.round_counts;
    Ok(cfg)
}

fn apply_sampler(s: &SamplerArgs, cfg: &mut bmf::inference::SamplerConfig) {
    if let Some(x) = s.seed {
        cfg.seed = x;
    }
    if let Some(x) = s.iterations {
        cfg.n_iterations = x;
    }
    if let Some(x) = s.burn_in {
        cfg.burn_in = x;
    }
    if let Some(x) = s.noise_warmup {
        cfg.noise_warmup = x;
    }
    if let Some(x) = s.thinning {
        cfg.thinning = x;
    }
}

fn load_data(cfg: &RunConfig) -> Result<ObservedMatrix> {
    let path = cfg.data.as_ref().ok_or_else(|| Error::Config("no data file (use --data)".into()))?;
    let (m, _) = load_matrix(path, LoadOptions { min_observed: cfg.min_observed })?;
    if cfg.round_counts {
        m.round_to_counts()
    } else {
        Ok(m)
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

/// Requested cells in file coordinates, mapped to positions in the loaded
/// (possibly filtered) matrix.
fn requested_cells(path: Option<&Path>, data: &ObservedMatrix) -> Result<Vec<(usize, usize, usize, usize)>> {
    let Some(path) = path else {
        return Ok((0..data.rows())
            .flat_map(|i| (0..data.cols()).map(move |j| (i, j)))
            .map(|(i, j)| (data.row_ids()[i], data.col_ids()[j], i, j))
            .collect());
    };
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut cells = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |s: Option<&str>| -> Result<usize> {
            s.and_then(|x| x.trim().parse().ok()).ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected `row,col`, got {line:?}"),
            })
        };
        let mut parts = line.split([',', '\t']);
        let (r, c) = (parse(parts.next())?, parse(parts.next())?);
        let i = data.row_ids().iter().position(|&x| x == r);
        let j = data.col_ids().iter().position(|&x| x == c);
        match (i, j) {
            (Some(i), Some(j)) => cells.push((r, c, i, j)),
            _ => {
                return Err(Error::OutOfRange { row: r, col: c, rows: data.rows(), cols: data.cols() });
            }
        }
    }
    Ok(cells)
}

fn cmd_fit(args: &FitArgs, verbose: bool) -> Result<()> {
    let mut cfg = merged(&args.common)?;
    let mut spec = cfg.model.clone().unwrap_or_else(|| ModelSpec::new(ModelKind::Ggg, 5));
    if let Some(m) = &args.model {
        spec.kind = parse_kind(m)?;
    }
    if let Some(k) = args.k {
        spec.k = k;
    }
    if let Some(g) = args.common.gamma {
        spec.hyper.gamma = Some(g);
    }
    if cfg.model.is_none() && args.model.is_none() {
        return Err(Error::Config("no model given (use --model or a [model] section)".into()));
    }
    if let Some(p) = &args.predict {
        cfg.predict = Some(p.clone());
    }
    apply_sampler(&args.common.sampler, &mut cfg.sampler);
    cfg.model = Some(spec.clone());
    spec.validate()?;
    cfg.sampler.validate()?;

    let data = load_data(&cfg)?;
    let cells = requested_cells(cfg.predict.as_deref(), &data)?;
    let dir = out_dir(&cfg)?;
    let every = (cfg.sampler.n_iterations / 10).max(1);
    let mut progress = |t: usize, mse: f64| {
        if verbose && ((t + 1) % every == 0 || t == 0) {
            println!("iteration {} training_mse {mse}", t + 1);
        }
    };
    let fit = fit_full(&spec, &data, &cfg.sampler, Some(&mut progress))?;
    let mean = fit.predictor.matrix();
    let mut preds = String::from("row,col,prediction\n");
    for &(r, c, i, j) in &cells {
        preds.push_str(&format!("{r},{c},{}\n", mean[(i, j)]));
    }
    write(&dir.join("trace.csv"), &render_trace(&fit.trace, args.common.timings))?;
    write(&dir.join("predictions.csv"), &preds)?;
    write(&dir.join("config.resolved.toml"), &cfg.render()?)?;
    if fit.trace.diagnostics.volume_fallbacks > 0 {
        eprintln!("note: {} volume-prior fallback draws", fit.trace.diagnostics.volume_fallbacks);
    }
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs, verbose: bool) -> Result<()> {
    let mut cfg = merged(&args.common)?;
    let mut plan = cfg.plan.clone().unwrap_or_default();
    if let Some(p) = &args.protocol {
        plan.protocol = p.parse()?;
    } else if cfg.plan.is_none() {
        return Err(Error::Config("no protocol given (use --protocol or a [plan] section)".into()));
    }
    let default_k = if plan.protocol == Protocol::Convergence { 20 } else { 5 };
    if let Some(names) = &args.models {
        plan.models = names
            .iter()
            .map(|n| Ok(ModelSpec::new(parse_kind(n)?, args.k.unwrap_or(default_k))))
            .collect::<Result<_>>()?;
    } else if let Some(k) = args.k {
        plan.models.iter_mut().for_each(|m| m.k = k);
    }
    if let Some(g) = args.common.gamma {
        plan.models.iter_mut().for_each(|m| m.hyper.gamma = Some(g));
    }
    if let Some(g) = &args.k_grid {
        plan.k_grid = Some(g.clone());
    }
    if let Some(f) = &args.fractions {
        plan.fractions = f.clone();
    }
    if let Some(n) = &args.noise_levels {
        plan.noise_levels = n.clone();
    }
    plan.n_repeats = args.repeats.or(plan.n_repeats);
    plan.n_folds = args.folds.or(plan.n_folds);
    if let Some(x) = args.inner_folds {
        plan.inner_folds = x;
    }
    if let Some(x) = args.holdout {
        plan.holdout_fraction = x;
    }
    if let Some(s) = args.common.sampler.seed {
        plan.seed = s;
    }
    apply_sampler(&SamplerArgs { seed: None, ..args.common.sampler.clone() }, &mut plan.sampler);
    plan.validate()?;
    cfg.plan = Some(plan.clone());

    let data = load_data(&cfg)?;
    let dir = out_dir(&cfg)?;
    if verbose {
        println!("running {} on {}x{} ({} observed)", plan.protocol.name(), data.rows(), data.cols(), data.n_observed());
    }
    let result = experiments::run(&plan, &data)?;
    if verbose {
        for r in &result.records {
            println!("{} {} repeat {} fold {} test_mse {:?}", r.model, r.setting_label(), r.repeat, r.fold, r.test_mse);
        }
    }
    write(&dir.join("records.csv"), &render_records(&result, args.common.timings))?;
    write(&dir.join("summary.csv"), &render_summary(&summarise(&result.records)))?;
    if !result.curves.is_empty() {
        write(&dir.join("curves.csv"), &render_curves(&result.curves))?;
    }
    let meta = format!("# noise convention: {}\n", bmf::data::NOISE_CONVENTION);
    let resolved = if plan.protocol == Protocol::Noise { meta + &cfg.render()? } else { cfg.render()? };
    write(&dir.join("config.resolved.toml"), &resolved)?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs, verbose: bool) -> Result<()> {
    let spec = match &args.from_manifest {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_error(p, e))?;
            toml::from_str::<SynthSpec>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => {
            let need = |x: Option<usize>, name: &str| x.ok_or_else(|| Error::Config(format!("synth needs --{name}")));
            SynthSpec {
                rows: need(args.rows, "rows")?,
                cols: need(args.cols, "cols")?,
                rank: need(args.k, "k")?,
                family: args.family.as_deref().unwrap_or("gaussian").parse::<Family>()?,
                noise_precision: args.tau.unwrap_or(1.0),
                fraction_observed: args.fraction.unwrap_or(1.0),
                seed: args.seed.unwrap_or(0),
            }
        }
    };
    let synth = generate_synthetic(&spec).map_err(|e| match e {
        Error::InvalidShape(m) => Error::Config(m),
        other => other,
    })?;
    let manifest = args.manifest.clone().unwrap_or_else(|| {
        let mut name = args.out.as_os_str().to_owned();
        name.push(".manifest.toml");
        PathBuf::from(name)
    });
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    write(&args.out, &render_matrix(&synth.matrix))?;
    if args.from_manifest.is_none() {
        let text = toml::to_string(&spec).map_err(|e| Error::Config(format!("cannot serialise manifest: {e}")))?;
        write(&manifest, &text)?;
    }
    let m = &synth.matrix;
    if verbose {
        println!("{} observed of {}x{} (fraction {:.6})", m.n_observed(), m.rows(), m.cols(), m.fraction_observed());
    }
    Ok(())
}

fn cmd_selftest(verbose: bool) -> Result<()> {
    let checks = run_selftest();
    let mut failed = 0;
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        if verbose {
            println!("{status} {} ({})", c.name, c.detail);
        } else {
            eprintln!("{status} {} ({})", c.name, c.detail);
        }
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        return Err(Error::Decomposition(format!("{failed} of {} self-test checks failed", checks.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Fit(a) => cmd_fit(a, cli.verbose),
        Command::Experiment(a) => cmd_experiment(a, cli.verbose),
        Command::Synth(a) => cmd_synth(a, cli.verbose),
        Command::Selftest => cmd_selftest(cli.verbose),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
