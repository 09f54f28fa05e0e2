//! Command-line front end.
//!
//! Every run writes `manifest.json` into the output directory before any
//! result file; `cdfilter rerun --manifest DIR/manifest.json` reproduces the
//! result files from it byte for byte.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bench::{
    convergence_study, run_grid_with, transport_study, BenchConfig, BenchReport, ConvMethod,
    ConvergenceProblem, ConvergenceRow, FilterId, ReportRow, TransportStudyConfig,
    TransportSummary,
};
use crate::error::{Error, Result};
use crate::lskf::LskfVariant;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SEED_ENV: &str = "CDFILTER_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "cdfilter",
    version,
    about = "Continuous-discrete filtering experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Error against the exact solution versus step count on a linear problem.
    Convergence(ConvergenceArgs),
    /// Monte-Carlo radar tracking benchmark.
    Radar(RadarArgs),
    /// Factor non-uniqueness study on the shear transport problem.
    Transport(TransportArgs),
    /// Re-run an experiment from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    /// linear-fp or oscillator
    pub problem: ConvergenceProblem,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "lskf-rk1,lskf-rk2,lskf-rk4,cdckf,cdckf-proper"
    )]
    pub methods: Vec<ConvMethod>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1,2,4,8,16,32,64,128,256,512,1024"
    )]
    pub steps: Vec<usize>,
    #[arg(long, default_value = "averaged")]
    pub variant: LskfVariant,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RadarArgs {
    /// TOML file with a `[radar]` table; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub omega_deg: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub interval_s: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub filters: Option<Vec<FilterId>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<LskfVariant>,
    #[arg(long)]
    pub tol_abs: Option<f64>,
    #[arg(long)]
    pub tol_rel: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Write measured wall time instead of 0.
    #[arg(long)]
    pub record_timing: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransportArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub factorizations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Defaults to the manifest's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fully resolved experiment; everything needed to reproduce its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Experiment {
    Convergence {
        problem: ConvergenceProblem,
        methods: Vec<ConvMethod>,
        steps: Vec<usize>,
        variant: LskfVariant,
    },
    Radar(BenchConfig),
    Transport {
        config: TransportStudyConfig,
        variants: Vec<LskfVariant>,
    },
}

impl Experiment {
    pub fn result_files(&self) -> Vec<String> {
        match self {
            Experiment::Convergence { .. } => vec!["convergence.csv".into()],
            Experiment::Radar(_) => vec!["radar.csv".into()],
            Experiment::Transport { .. } => {
                vec!["transport.csv".into(), "transport_errors.csv".into()]
            }
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Experiment::Convergence { .. } => None,
            Experiment::Radar(c) => Some(c.seed),
            Experiment::Transport { config, .. } => Some(config.seed),
        }
    }
}

/// Conventions the results depend on, spelled out for readers of the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub angle_wrapping: String,
    pub divergence_rule: String,
    pub rmse_exclusion: String,
    pub tolerances: String,
    pub seeding: String,
    pub timing: String,
}

impl Conventions {
    fn for_experiment(e: &Experiment) -> Self {
        let (tolerances, divergence, timing) = match e {
            Experiment::Radar(c) => (
                format!("lskf-adaptive abs {:e} rel {:e}", c.tol_abs, c.tol_rel),
                format!(
                    "position-error norm > {} m at any measurement, or a non-finite value",
                    c.divergence_threshold
                ),
                if c.record_timing {
                    "wall_ms_per_trial measured".to_string()
                } else {
                    "wall_ms_per_trial written as 0".to_string()
                },
            ),
            Experiment::Transport { config, .. } => (
                format!("adaptive abs {:e} rel {:e}", config.tol, config.tol),
                "n/a".into(),
                "n/a".into(),
            ),
            Experiment::Convergence { .. } => (
                "lskf-adaptive abs 1e-8 rel 1e-8; reference solution 1e-13".into(),
                "n/a".into(),
                "n/a".into(),
            ),
        };
        Self {
            angle_wrapping: "bearing and elevation residuals wrapped to (-pi, pi]".into(),
            divergence_rule: divergence,
            rmse_exclusion: "divergent trials excluded from RMSE, counted in `divergent`".into(),
            tolerances,
            seeding: "trial i uses seed + i; truth on ChaCha8 stream 0, initial guess on stream 1, substep refinement bridge on stream 2".into(),
            timing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub files: Vec<String>,
    pub conventions: Conventions,
    pub run: Experiment,
}

impl RunManifest {
    pub fn new(run: Experiment) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: run.seed(),
            files: run.result_files(),
            conventions: Conventions::for_experiment(&run),
            run,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    radar: Option<BenchConfig>,
    transport: Option<TransportStudyConfig>,
}

fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| {
            Error::Config(format!("{SEED_ENV} must be an unsigned integer, got '{s}'"))
        }),
        Err(_) => Ok(None),
    }
}

/// Resolves file values, flag overrides and the seed environment variable.
pub fn resolve_radar(args: &RadarArgs) -> Result<BenchConfig> {
    let mut c = match &args.config {
        Some(p) => load_config(p)?.radar.unwrap_or_default(),
        None => BenchConfig::default(),
    };
    if let Some(v) = &args.omega_deg {
        c.omega_deg = v.clone();
    }
    if let Some(v) = &args.interval_s {
        c.interval_s = v.clone();
    }
    if let Some(v) = &args.m {
        c.m = v.clone();
    }
    if let Some(v) = &args.filters {
        c.filters = v.clone();
    }
    if let Some(v) = args.trials {
        c.trials = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.variant {
        c.variant = v;
    }
    if let Some(v) = args.tol_abs {
        c.tol_abs = v;
    }
    if let Some(v) = args.tol_rel {
        c.tol_rel = v;
    }
    if let Some(v) = args.jobs {
        c.jobs = v;
    }
    if args.record_timing {
        c.record_timing = true;
    }
    if let Some(s) = seed_from_env()? {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

pub fn resolve_transport(args: &TransportArgs) -> Result<TransportStudyConfig> {
    let mut c = match &args.config {
        Some(p) => load_config(p)?.transport.unwrap_or_default(),
        None => TransportStudyConfig::default(),
    };
    if let Some(v) = args.factorizations {
        c.factorizations = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(s) = seed_from_env()? {
        c.seed = s;
    }
    if c.factorizations == 0 {
        return Err(Error::Config("factorizations must be >= 1".into()));
    }
    Ok(c)
}

/// Float format used in every output file; parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "# manifest: {MANIFEST_FILE}")?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?)
}

pub fn write_radar_csv(path: &Path, report: &BenchReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "filter",
        "variant",
        "omega_deg",
        "interval_s",
        "m",
        "trials",
        "divergent",
        "rmse_pos_m",
        "rmse_vel_mps",
        "rmse_turn_radps",
        "wall_ms_per_trial",
        "rhs_evals_mean",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.filter.to_string(),
            r.variant.clone(),
            fmt_f64(r.omega_deg),
            fmt_f64(r.interval_s),
            r.m.to_string(),
            r.trials.to_string(),
            r.divergent.to_string(),
            fmt_f64(r.rmse_pos_m),
            fmt_f64(r.rmse_vel_mps),
            fmt_f64(r.rmse_turn_radps),
            fmt_f64(r.wall_ms_per_trial),
            fmt_f64(r.rhs_evals_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_radar_csv(path: &Path) -> Result<BenchReport> {
    let rows = csv_reader(path)?
        .deserialize::<ReportRow>()
        .collect::<std::result::Result<_, _>>()?;
    Ok(BenchReport { rows })
}

pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["method", "steps", "dt", "err_mean_l2", "err_cov_fro"])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.steps.to_string(),
            fmt_f64(r.dt),
            fmt_f64(r.err_mean_l2),
            fmt_f64(r.err_cov_fro),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_convergence_csv(path: &Path) -> Result<Vec<ConvergenceRow>> {
    Ok(csv_reader(path)?
        .deserialize::<ConvergenceRow>()
        .collect::<std::result::Result<_, _>>()?)
}

fn write_transport(dir: &Path, summaries: &[TransportSummary]) -> Result<()> {
    let mut w = csv_writer(&dir.join("transport.csv"))?;
    w.write_record([
        "variant",
        "drift_evals_per_rhs",
        "factorizations",
        "mean_l2_error",
        "cov_std_mean",
    ])?;
    for s in summaries {
        w.write_record([
            s.variant.to_string(),
            s.drift_evals_per_rhs.to_string(),
            s.l2_errors.len().to_string(),
            fmt_f64(s.mean_l2_error),
            fmt_f64(s.cov_std_mean),
        ])?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join("transport_errors.csv"))?;
    w.write_record(["variant", "factorization", "l2_error"])?;
    for s in summaries {
        for (i, e) in s.l2_errors.iter().enumerate() {
            w.write_record([s.variant.to_string(), i.to_string(), fmt_f64(*e)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the manifest, then runs the experiment and writes its results.
pub fn execute(run: &Experiment, out: &Path) -> Result<RunManifest> {
    fs::create_dir_all(out)?;
    let manifest = RunManifest::new(run.clone());
    fs::write(
        out.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;

    match run {
        Experiment::Convergence {
            problem,
            methods,
            steps,
            variant,
        } => {
            let rows = convergence_study(*problem, methods, steps, *variant)?;
            write_convergence_csv(&out.join("convergence.csv"), &rows)?;
        }
        Experiment::Radar(config) => {
            let report = run_grid_with(config, |cell, trials| {
                let divergent = trials.iter().filter(|t| t.divergent).count();
                eprintln!(
                    "{} omega={} T={} m={}: {}/{} divergent",
                    cell.filter,
                    cell.omega_deg,
                    cell.interval_s,
                    cell.m,
                    divergent,
                    trials.len()
                );
            })?;
            write_radar_csv(&out.join("radar.csv"), &report)?;
        }
        Experiment::Transport { config, variants } => {
            let summaries = transport_study(config, variants)?;
            write_transport(out, &summaries)?;
        }
    }
    Ok(manifest)
}

fn dispatch(cli: Cli) -> Result<()> {
    let (run, out) = match cli.command {
        Command::Convergence(a) => {
            if a.steps.contains(&0) {
                return Err(Error::Config("step counts must be >= 1".into()));
            }
            (
                Experiment::Convergence {
                    problem: a.problem,
                    methods: a.methods,
                    steps: a.steps,
                    variant: a.variant,
                },
                a.out,
            )
        }
        Command::Radar(a) => (Experiment::Radar(resolve_radar(&a)?), a.out),
        Command::Transport(a) => (
            Experiment::Transport {
                config: resolve_transport(&a)?,
                variants: LskfVariant::ALL.to_vec(),
            },
            a.out,
        ),
        Command::Rerun(a) => {
            let m = RunManifest::load(&a.manifest)?;
            let out = a
                .out
                .or_else(|| a.manifest.parent().map(Path::to_path_buf))
                .unwrap_or_else(|| PathBuf::from("."));
            (m.run, out)
        }
    };
    execute(&run, &out)?;
    eprintln!("results written to {}", out.display());
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}

pub fn main() -> i32 {
    run_from(std::env::args_os())
}
