//! The `ambc` command line: `ber`, `coverage`, `bri` and `selftest`.
//!
//! Each data command loads a [`RunConfig`] (flags over file over defaults),
//! validates it completely, computes its table, and only then writes a CSV,
//! an optional SVG and a JSON manifest under `--out`. Exit codes: 0 on
//! success, 1 when `selftest` finds a failure, 2 for usage, configuration
//! and I/O errors.

pub mod config;
pub mod output;
pub mod plot;
pub mod selftest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::montecarlo::{bri_table, coverage_sweep, Simulator};
use crate::reader::DetectorMode;

pub use config::{Overrides, RunConfig};
pub use output::{RunManifest, RunOutputs};

use output::{fmt_f64, fmt_opt, Artifact, ArtifactBody, Csv};
use plot::{LinePlot, Series};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const BER_HEADER: &str = "snr_db,trials,bits,errors,ber,ci_low,ci_high,ber_closed,ber_approx,ber_baseline";
pub const COVERAGE_HEADER: &str = "q_b,c0,ratio";
pub const BRI_HEADER: &str = "k,eta_im,lambda_im,eta_ook,lambda_ook";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("simulation error: {0}")]
    Sim(#[from] crate::Error),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(name = "ambc", version, about = "Ambient backscatter link simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: GlobalOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Monte Carlo BER sweep against the closed-form curves.
    Ber,
    /// Coverage ratio over the reflector and target-gain grids.
    Coverage,
    /// Index-modulation bit count and BRI per number of active subcarriers.
    Bri,
    /// Fast invariant checks.
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Threshold,
    Ml,
}

impl From<ModeArg> for DetectorMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Threshold => DetectorMode::Threshold,
            ModeArg::Ml => DetectorMode::ExactMl,
        }
    }
}

/// A parsed list of numbers, kept as one flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    config::parse_snr_range(s).map(Grid)
}

fn parse_list(s: &str) -> Result<Grid, String> {
    config::parse_f64_list(s).map(Grid)
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// SNR grid in dB, `A:STEP:B` inclusive or a single value.
    #[arg(long = "snr-db", global = true, value_name = "A:STEP:B", value_parser = parse_grid)]
    pub snr_db: Option<Grid>,
    /// Maximum trials (OFDM symbols) per SNR point.
    #[arg(long, global = true, value_name = "N")]
    pub trials: Option<u64>,
    /// Reflectors on the source-to-tag link.
    #[arg(long, global = true, value_name = "N")]
    pub qf: Option<usize>,
    /// Reflectors on the tag-to-reader link; pins the coverage grid.
    #[arg(long, global = true, value_name = "N")]
    pub qb: Option<usize>,
    /// Reflectors on the direct link.
    #[arg(long, global = true, value_name = "N")]
    pub qd: Option<usize>,
    /// Active subcarriers; switches `ber` to index modulation and pins the BRI grid.
    #[arg(long, global = true, value_name = "N")]
    pub k: Option<usize>,
    /// Detector for OOK.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Write SVG plots.
    #[arg(long, global = true, overrides_with = "no_svg")]
    pub svg: bool,
    /// Skip SVG plots.
    #[arg(long = "no-svg", global = true)]
    pub no_svg: bool,
    /// Target gains for the coverage grid, comma separated.
    #[arg(long, global = true, value_name = "LIST", value_parser = parse_list)]
    pub c0: Option<Grid>,
    /// Subcarrier count for the BRI table.
    #[arg(long, global = true, value_name = "N")]
    pub ns: Option<usize>,
    /// Worker threads for Monte Carlo trials (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

impl GlobalOpts {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            snr_db: self.snr_db.clone().map(|g| g.0),
            trials: self.trials,
            qf: self.qf,
            qb: self.qb,
            qd: self.qd,
            k: self.k,
            mode: self.mode.map(Into::into),
            svg: if self.no_svg {
                Some(false)
            } else if self.svg {
                Some(true)
            } else {
                None
            },
            c0: self.c0.clone().map(|g| g.0),
            n_s: self.ns,
        }
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn load(config_path: Option<&Path>, ov: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(config_path)?;
    cfg.apply(ov);
    Ok(cfg)
}

fn manifest<'a>(
    command: &'a str,
    cfg: &'a RunConfig,
    started_at: String,
) -> impl FnOnce(Vec<String>) -> RunManifest<&'a RunConfig> + 'a {
    move |outputs| RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        master_seed: cfg.experiment.master_seed,
        started_at,
        finished_at: now(),
        config: cfg,
        outputs,
    }
}

fn finish(
    dir: &Path,
    stem: &str,
    cfg: &RunConfig,
    started: String,
    csv: String,
    plot: LinePlot,
) -> Result<RunOutputs, CliError> {
    let mut artifacts = vec![Artifact { ext: "csv", body: ArtifactBody::Text(csv) }];
    if cfg.svg {
        artifacts.push(Artifact { ext: "svg", body: ArtifactBody::Plot(plot) });
    }
    Ok(output::write_run(dir, stem, artifacts, manifest(stem, cfg, started))?)
}

/// Renders the BER table for a validated configuration.
pub fn ber_csv(cfg: &RunConfig) -> Result<(String, LinePlot), CliError> {
    let res = Simulator::new(cfg.experiment.clone())?.sweep()?;
    let mut csv = Csv::new(BER_HEADER);
    for p in &res.points {
        csv.row([
            fmt_f64(p.snr_db),
            p.counts.trials.to_string(),
            p.ber.total.to_string(),
            p.ber.errors.to_string(),
            fmt_f64(p.ber.rate),
            fmt_f64(p.ber.ci_low),
            fmt_f64(p.ber.ci_high),
            fmt_f64(p.closed_form.p_e),
            fmt_f64(p.closed_form.p_e_approx),
            fmt_opt(p.baseline_ber),
        ]);
    }
    let mut plot = LinePlot::new(
        format!("BER, |A| = {}, |alpha| = {}", fmt_f64(res.a_nominal), fmt_f64(res.alpha_nominal)),
        "SNR (dB)",
        "BER",
        true,
    );
    let col = |f: &dyn Fn(&crate::montecarlo::SweepPoint) -> Option<f64>| -> Vec<(f64, f64)> {
        res.points.iter().filter_map(|p| f(p).map(|v| (p.snr_db, v))).collect()
    };
    plot.push(Series::line("Monte Carlo", col(&|p| Some(p.ber.rate))).markers());
    plot.push(Series::line("closed form", col(&|p| Some(p.closed_form.p_e))));
    plot.push(Series::line("high-SNR approx.", col(&|p| Some(p.closed_form.p_e_approx))).dashed());
    plot.push(Series::line("CP baseline", col(&|p| p.baseline_ber)).dashed());
    Ok((csv.into_string(), plot))
}

pub fn coverage_csv(cfg: &RunConfig) -> Result<(String, LinePlot), CliError> {
    let c = &cfg.coverage;
    let rows = coverage_sweep(&c.q_b, &c.c0, c.mu_c_sq, c.sigma_c_sq)?;
    let mut csv = Csv::new(COVERAGE_HEADER);
    for r in &rows {
        csv.row([r.q_b.to_string(), fmt_f64(r.c0), fmt_f64(r.ratio)]);
    }
    let mut plot = LinePlot::new("Coverage ratio", "Q_b", "ratio", false);
    for &c0 in &c.c0 {
        let pts = rows.iter().filter(|r| r.c0 == c0).map(|r| (r.q_b as f64, r.ratio)).collect();
        plot.push(Series::line(format!("c0 = {}", fmt_f64(c0)), pts).markers());
    }
    Ok((csv.into_string(), plot))
}

pub fn bri_csv(cfg: &RunConfig) -> Result<(String, LinePlot), CliError> {
    let rows = bri_table(cfg.bri.n_s, &cfg.bri.k_grid())?;
    let mut csv = Csv::new(BRI_HEADER);
    for r in &rows {
        csv.row([
            r.k.to_string(),
            r.eta_im.to_string(),
            fmt_f64(r.lambda_im),
            r.eta_ook.to_string(),
            fmt_f64(r.lambda_ook),
        ]);
    }
    let mut plot = LinePlot::new(format!("BRI, N_s = {}", cfg.bri.n_s), "k", "bits per unit energy", false);
    plot.push(Series::line("index modulation", rows.iter().map(|r| (r.k as f64, r.lambda_im)).collect()).markers());
    plot.push(Series::line("OOK", rows.iter().map(|r| (r.k as f64, r.lambda_ook)).collect()).dashed());
    Ok((csv.into_string(), plot))
}

pub fn cmd_ber(config_path: Option<&Path>, ov: &Overrides, out: &Path) -> Result<RunOutputs, CliError> {
    let started = now();
    let cfg = load(config_path, ov)?;
    cfg.validate_experiment()?;
    let (csv, plot) = ber_csv(&cfg)?;
    finish(out, "ber", &cfg, started, csv, plot)
}

pub fn cmd_coverage(config_path: Option<&Path>, ov: &Overrides, out: &Path) -> Result<RunOutputs, CliError> {
    let started = now();
    let cfg = load(config_path, ov)?;
    cfg.validate_coverage()?;
    let (csv, plot) = coverage_csv(&cfg)?;
    finish(out, "coverage", &cfg, started, csv, plot)
}

pub fn cmd_bri(config_path: Option<&Path>, ov: &Overrides, out: &Path) -> Result<RunOutputs, CliError> {
    let started = now();
    let cfg = load(config_path, ov)?;
    cfg.validate_bri()?;
    let (csv, plot) = bri_csv(&cfg)?;
    finish(out, "bri", &cfg, started, csv, plot)
}

/// Runs the invariant suite, printing its report; returns the exit code.
pub fn cmd_selftest() -> i32 {
    selftest_exit_code(&selftest::run())
}

pub fn selftest_exit_code(report: &selftest::SelftestReport) -> i32 {
    if report.passed() {
        print!("{}", report.render());
        EXIT_OK
    } else {
        eprint!("{}", report.render());
        EXIT_SELFTEST_FAILED
    }
}

#[derive(Serialize)]
struct Written<'a> {
    manifest: &'a Path,
    files: &'a [PathBuf],
}

fn dispatch(cli: &Cli) -> Result<RunOutputs, CliError> {
    let ov = cli.opts.overrides();
    let cfg = cli.opts.config.as_deref();
    let out = cli.opts.out.as_path();
    match cli.command {
        Command::Ber => cmd_ber(cfg, &ov, out),
        Command::Coverage => cmd_coverage(cfg, &ov, out),
        Command::Bri => cmd_bri(cfg, &ov, out),
        Command::Selftest => unreachable!("handled by run"),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if cli.command == Command::Selftest {
        return cmd_selftest();
    }
    let result = match cli.opts.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(CliError::Config(e.to_string())),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(w) => {
            let json = serde_json::to_string(&Written { manifest: &w.manifest, files: &w.files }).unwrap_or_default();
            println!("{json}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("ambc: {e}");
            EXIT_USAGE
        }
    }
}
