//! `ajcdma`: run anti-jamming DS-CDMA Monte Carlo sweeps.
//!
//!   ajcdma run sweep.toml
//!   ajcdma sweep --sjr -20,-10,0 --rank 1,20,200 --trials 50 --out ber.csv
//!   ajcdma selftest
//!
//! Exit status: 0 on success, 1 when a trial aborted or a self-test check
//! failed, 2 on configuration or I/O errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ajcdma_core::harness::{self, ExperimentConfig, ExperimentReport};
use ajcdma_core::receiver::ReceiverKind;
use anyhow::Context;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ajcdma", version, about = "Anti-jamming DS-CDMA simulator (ICA vs robust PCA + ICA receivers)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        /// Overrides `output_path`; without either the CSV goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run a sweep described by flags, optionally on top of a config file.
    Sweep(SweepArgs),
    /// Run the built-in sanity checks.
    Selftest,
}

#[derive(Args)]
struct SweepArgs {
    /// Base config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// SNR list in dB (`inf` = noiseless).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    /// SJR list in dB (`inf` = no jammer).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    sjr: Option<Vec<f64>>,
    /// Jamming ranks.
    #[arg(long, value_delimiter = ',')]
    rank: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Channel profile name or profile file.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Users.
    #[arg(long)]
    k: Option<usize>,
    /// Code length (power of two).
    #[arg(long)]
    m: Option<usize>,
    /// Bits per user.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    receivers: Option<Vec<ReceiverKind>>,
    #[arg(long)]
    tone_prob: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Write zero runtimes so repeated runs give identical files.
    #[arg(long)]
    no_runtime: bool,
}

impl SweepArgs {
    fn into_config(self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::single_point(3, 64, 200, 10.0, -20.0, 1, 10),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        set!(snr => snr_db_list, sjr => sjr_db_list, rank => rank_list, trials => trials,
             seed => master_seed, profile => channel_profile, k => k_users, m => m_code_len,
             n => n_bits, receivers => receivers, tone_prob => tone_prob);
        if self.out.is_some() {
            cfg.output_path = self.out;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.no_runtime {
            cfg.measure_runtime = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_rows(report: &ExperimentReport, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            harness::emit_csv(&report.rows, path)?;
            log::info!("wrote {} rows to {}", report.rows.len(), path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            harness::write_csv(&report.rows, &mut lock, Path::new("<stdout>"))?;
            lock.flush().context("flushing stdout")?;
        }
    }
    Ok(())
}

fn execute(cfg: &ExperimentConfig) -> anyhow::Result<ExitCode> {
    let report = harness::run_experiment_detailed(cfg)?;
    write_rows(&report, cfg.output_path.as_deref())?;
    if report.channel_resamples > 0 {
        eprintln!("note: {} singular channel draw(s) were resampled", report.channel_resamples);
    }
    if report.is_complete() {
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!("{} trial(s) aborted:", report.failures.len());
    for f in &report.failures {
        eprintln!("  {f}");
    }
    Ok(ExitCode::from(1))
}

fn selftest() -> ExitCode {
    let checks = ajcdma_core::selftest::run();
    for c in &checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, threads } => ExperimentConfig::from_file(&config)
            .map_err(anyhow::Error::from)
            .and_then(|mut cfg| {
                if out.is_some() {
                    cfg.output_path = out;
                }
                if threads.is_some() {
                    cfg.threads = threads;
                    cfg.validate()?;
                }
                execute(&cfg)
            }),
        Command::Sweep(args) => args.into_config().and_then(|cfg| execute(&cfg)),
        Command::Selftest => Ok(selftest()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
