use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sizedist::fitting::{FamilyKind, FitError, FitResult};
use sizedist::gof::{FamilyRefit, GofError, StatKind};
use sizedist::pipeline::{
    describe, load_csv, run_report, sample_digest, write_atomic, ColumnSelector, InputInfo,
    IoError, LoadedSample, ReportConfig,
};
use sizedist::sde::{stationary_check, Drift, SdeError, SdeSpec, SimConfig};
use sizedist::selection::{vuong, SelectionError, SelectionReport};
use sizedist::tail::{select_xmin, TailError};
use sizedist::{sub_seed, Sample};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(
    name = "sizedist",
    version,
    about = "Fit and compare heavy-tailed size distributions"
)]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// CSV file with one size per row in the selected column.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Column name or 0-based index. A name implies a header row.
    #[arg(long, global = true, default_value = "0")]
    column: ColumnSelector,
    /// The first row is a header.
    #[arg(long, global = true)]
    header: bool,
    /// Directory for output files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Stexp,
    Ln,
    #[value(name = "2ln")]
    Ln2,
    #[value(name = "3ln")]
    Ln3,
    Pareto,
    Lnt,
}

impl ModelArg {
    fn is_tail(self) -> bool {
        matches!(self, ModelArg::Pareto | ModelArg::Lnt)
    }

    fn kind(self, x_min: f64) -> FamilyKind {
        match self {
            ModelArg::Stexp => FamilyKind::Stexp,
            ModelArg::Ln => FamilyKind::Lognormal,
            ModelArg::Ln2 => FamilyKind::Mixture { m: 2 },
            ModelArg::Ln3 => FamilyKind::Mixture { m: 3 },
            ModelArg::Pareto => FamilyKind::Pareto { x_min },
            ModelArg::Lnt => FamilyKind::TruncLognormal { x_min },
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Descriptive statistics of the sizes and their logs.
    Describe,
    /// Maximum-likelihood fit of one model.
    Fit {
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Tail cutoff for pareto and lnt; scanned when omitted.
        #[arg(long)]
        xmin: Option<f64>,
    },
    /// KS scan for the power-law cutoff.
    Tail,
    /// Parametric-bootstrap goodness of fit.
    Gof {
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Statistic (ks, cm or ad); repeat for several. All three by default.
        #[arg(long = "test")]
        tests: Vec<StatKind>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        xmin: Option<f64>,
    },
    /// Information criteria for all models and the Vuong test on the tail.
    Compare {
        #[arg(long)]
        xmin: Option<f64>,
        /// Apply the Schwarz correction to the Vuong statistic.
        #[arg(long)]
        schwarz: bool,
    },
    /// Simulate a drift catalog entry and check its stationary law.
    Sde {
        /// For example `normal:mu=0,sigma=1` or `mix2n:mu1=..,sigma1=..,mu2=..,sigma2=..,p1=..`.
        #[arg(long)]
        drift: Drift,
        /// Constant diffusion coefficient.
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        /// KS threshold for the pass flag.
        #[arg(long, default_value_t = 0.02)]
        threshold: f64,
    },
    /// The full analysis: fits, tests, comparisons and plots.
    Report,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Fit(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Fit(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Write { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        CliError::Fit(e.to_string())
    }
}

impl From<TailError> for CliError {
    fn from(e: TailError) -> Self {
        CliError::Fit(e.to_string())
    }
}

impl From<GofError> for CliError {
    fn from(e: GofError) -> Self {
        CliError::Fit(e.to_string())
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        CliError::Fit(e.to_string())
    }
}

impl From<SdeError> for CliError {
    fn from(e: SdeError) -> Self {
        match e {
            SdeError::StepTooLarge { .. } => CliError::Fit(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

struct Context {
    cli: Cli,
    config: ReportConfig,
}

impl Context {
    fn load(&self) -> Result<(LoadedSample, InputInfo), CliError> {
        let path = self
            .cli
            .input
            .as_deref()
            .ok_or_else(|| CliError::Input("--input is required for this command".into()))?;
        let loaded = load_csv(path, &self.cli.column, self.cli.header)?;
        for r in &loaded.rejects {
            eprintln!("line {}: skipped {:?} ({})", r.line, r.raw, r.reason);
        }
        let info = InputInfo {
            label: path.display().to_string(),
            rows_read: loaded.rows_read,
            rows_rejected: loaded.rejects.len(),
            values_sha256: sample_digest(&loaded.sample),
        };
        Ok((loaded, info))
    }

    /// The cutoff from the flag, the config, or the KS scan, and the tail
    /// sample above it.
    fn tail(&self, sample: &Sample, xmin: Option<f64>) -> Result<(f64, Sample), CliError> {
        let x_min = match xmin.or(self.config.x_min) {
            Some(v) => v,
            None => select_xmin(sample, &self.config.tail_config())?.chosen_xmin,
        };
        let tail = sample.tail(x_min).ok_or_else(|| {
            CliError::Input(format!("no observations at or above x_min = {x_min}"))
        })?;
        Ok((x_min, tail))
    }

    fn fit(
        &self,
        model: ModelArg,
        sample: &Sample,
        xmin: Option<f64>,
    ) -> Result<(FitResult, Sample), CliError> {
        let (kind, data) = if model.is_tail() {
            let (x_min, tail) = self.tail(sample, xmin)?;
            (model.kind(x_min), tail)
        } else {
            (model.kind(0.0), sample.clone())
        };
        let seed = sub_seed(self.config.seed, 100);
        let fit = match kind.fit(&data, &self.config.fit_config(), seed) {
            Err(FitError::NoInteriorOptimum { best }) => {
                let mut best = *best;
                best.diagnostics
                    .warnings
                    .push("no interior optimum; the best boundary point is reported".into());
                best
            }
            other => other?,
        };
        Ok((fit, data))
    }

    fn emit(&self, name: &str, value: &Value) -> Result<(), CliError> {
        let text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        if let Some(dir) = &self.cli.out {
            write_atomic(&dir.join(format!("{name}.json")), text.as_bytes())?;
        }
        println!("{text}");
        Ok(())
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Internal(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => ReportConfig::from_file(path)?,
        None => ReportConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let ctx = Context { cli, config };

    match &ctx.cli.command {
        Command::Describe => {
            let (loaded, info) = ctx.load()?;
            let stats = describe(&loaded.sample).map_err(|e| CliError::Input(e.to_string()))?;
            ctx.emit(
                "describe",
                &json!({ "input": to_value(&info)?, "stats": to_value(&stats)? }),
            )
        }
        Command::Fit { model, xmin } => {
            let (loaded, _) = ctx.load()?;
            let (fit, _) = ctx.fit(*model, &loaded.sample, *xmin)?;
            ctx.emit("fit", &to_value(&fit)?)
        }
        Command::Tail => {
            let (loaded, _) = ctx.load()?;
            let scan = select_xmin(&loaded.sample, &ctx.config.tail_config())?;
            ctx.emit("tail", &to_value(&scan)?)
        }
        Command::Gof {
            model,
            tests,
            replicates,
            xmin,
        } => {
            let (loaded, _) = ctx.load()?;
            let (fit, data) = ctx.fit(*model, &loaded.sample, *xmin)?;
            let tests = if tests.is_empty() {
                ctx.config.tests.clone()
            } else {
                tests.clone()
            };
            let mut refit = FamilyRefit::new(FamilyKind::of(&fit.model));
            refit.observed = ctx.config.fit_config();
            refit.observed.std_errors = false;
            let reports = refit.pvalues(
                &data,
                &fit.model,
                &tests,
                replicates.unwrap_or(ctx.config.replicates),
                sub_seed(ctx.config.seed, 1000),
            )?;
            for r in &reports {
                if let Some(w) = &r.warning {
                    eprintln!("warning: {w}");
                }
            }
            ctx.emit("gof", &to_value(&reports)?)
        }
        Command::Compare { xmin, schwarz } => {
            let (loaded, _) = ctx.load()?;
            let sample = &loaded.sample;
            let mut full = Vec::new();
            for m in [ModelArg::Stexp, ModelArg::Ln, ModelArg::Ln2, ModelArg::Ln3] {
                full.push(ctx.fit(m, sample, None)?.0);
            }
            let (x_min, tail) = ctx.tail(sample, *xmin)?;
            let pareto = ctx.fit(ModelArg::Pareto, sample, Some(x_min))?.0;
            let lnt = ctx.fit(ModelArg::Lnt, sample, Some(x_min))?.0;
            let v = vuong(
                &pareto.model,
                &lnt.model,
                &tail,
                *schwarz || ctx.config.schwarz,
            )?;
            ctx.emit(
                "compare",
                &json!({
                    "full": to_value(&SelectionReport::from_fits(sample.len(), &full)?)?,
                    "x_min": x_min,
                    "tail": to_value(&SelectionReport::from_fits(tail.len(), &[pareto, lnt])?)?,
                    "vuong": to_value(&v)?,
                }),
            )
        }
        Command::Sde {
            drift,
            a,
            dt,
            steps,
            burnin,
            thin,
            threshold,
        } => {
            let spec = SdeSpec::new(drift.clone(), *a)?;
            let defaults = SimConfig::default();
            let sim = SimConfig {
                dt: dt.unwrap_or(defaults.dt),
                n_steps: steps.unwrap_or(defaults.n_steps),
                burn_in: burnin.unwrap_or(defaults.burn_in),
                thin: thin.unwrap_or(defaults.thin),
            };
            let target = spec.target_log_model();
            let check = stationary_check(
                &spec,
                &target,
                &sim,
                *threshold,
                sub_seed(ctx.config.seed, 3000),
            )?;
            ctx.emit(
                "sde",
                &json!({
                    "drift": to_value(spec.drift_kind())?,
                    "diffusion_sq": a,
                    "sim": to_value(&sim)?,
                    "check": to_value(&check)?,
                }),
            )
        }
        Command::Report => {
            let (loaded, info) = ctx.load()?;
            let out = run_report(&loaded.sample, info, &ctx.config);
            let dir = ctx.cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            out.write_to(&dir)?;
            println!("{}", Path::new(&dir).join("report.json").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
