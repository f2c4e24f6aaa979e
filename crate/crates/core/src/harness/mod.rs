//! Monte Carlo driver: sweeps (SNR, SJR, rank), runs every receiver on the
//! same random frames, and reduces per-trial scores to CSV rows.
//!
//! Trial `t` draws its bits, codes, channel, noise and ICA start from seeds
//! derived only from the master seed and `t`; the jammer seed additionally
//! depends on the rank. Every sweep point therefore sees the same frames
//! (paired comparisons across SNR, SJR and rank), any trial can be replayed
//! alone, and extending a sweep leaves existing trials untouched.

pub mod config;
pub mod output;

use std::time::Instant;

use rayon::prelude::*;

use crate::channel::{received, sample_channel, ChannelProfile, ChannelRealization};
use crate::error::{Error, Result};
use crate::jamming::{gen_jamming, scale_to_sjr, JammingSpec};
use crate::receiver::{evaluate, ReceiverKind, TrialOutcome};
use crate::seed::{derive, Seed};
use crate::waveform::{gen_bits, gen_code_schedule, spread, walsh, BitMatrix, CodeSchedule, SignalMatrix, WalshMatrix};

pub use config::{ExperimentConfig, IcaSettings};
pub use output::{emit_csv, parse_csv, read_csv, write_csv, ResultRow, CSV_HEADER};

/// Environment variable consulted for the worker count when the config does
/// not set one.
pub const THREADS_ENV: &str = "AJCDMA_THREADS";

/// Channel draws attempted per trial before giving up on a singular channel.
pub const MAX_CHANNEL_DRAWS: u64 = 100;

mod stream {
    pub const BITS: u64 = 1;
    pub const CODES: u64 = 2;
    pub const JAMMING: u64 = 3;
    pub const CHANNEL: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const ICA: u64 = 6;
}

/// Wall-clock seconds spent in `f`, on a monotone clock.
pub fn measure_runtime<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub sjr_db: f64,
    pub rank: usize,
}

impl SweepPoint {
    pub fn jammed(&self) -> bool {
        self.sjr_db.is_finite()
    }
}

/// Cartesian product in output order: SNR outermost, then SJR, then rank.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &snr_db in &cfg.snr_db_list {
        for &sjr_db in &cfg.sjr_db_list {
            for &rank in &cfg.rank_list {
                out.push(SweepPoint { snr_db, sjr_db, rank });
            }
        }
    }
    out
}

/// Root seed of one trial; all of its streams branch from here.
pub fn trial_seed(master: Seed, trial: usize) -> Seed {
    derive(master, &[trial as u64])
}

/// One simulated frame, shared by all receivers of a trial.
#[derive(Debug, Clone)]
pub struct TrialFrame {
    pub bits: BitMatrix,
    pub codes: CodeSchedule,
    pub channel: ChannelRealization,
    pub received: SignalMatrix,
    /// Singular channel draws discarded before `channel`.
    pub channel_resamples: usize,
    pub ica_seed: Seed,
}

pub fn generate_frame(
    cfg: &ExperimentConfig,
    w: &WalshMatrix,
    profile: &ChannelProfile,
    point: &SweepPoint,
    trial: usize,
) -> Result<TrialFrame> {
    let root = trial_seed(cfg.master_seed, trial);
    let (k, m, n) = (cfg.k_users, cfg.m_code_len, cfg.n_bits);
    let bits = gen_bits(k, n, derive(root, &[stream::BITS]))?;
    let codes = gen_code_schedule(w, k, n, derive(root, &[stream::CODES]))?;
    let s = spread(&bits, &codes)?;
    let jamming = if point.jammed() {
        let spec = JammingSpec {
            m,
            n_bits: n,
            rank_r: point.rank,
            tone_prob: cfg.tone_prob,
            sjr_db: point.sjr_db,
            seed: derive(root, &[stream::JAMMING, point.rank as u64]),
        };
        Some(scale_to_sjr(&s, &gen_jamming(&spec)?, point.sjr_db)?)
    } else {
        None
    };
    let mut channel_resamples = 0;
    let channel = loop {
        let ch = sample_channel(profile, m, derive(root, &[stream::CHANNEL, channel_resamples as u64]))?;
        if ch.is_invertible() {
            break ch;
        }
        channel_resamples += 1;
        if channel_resamples as u64 >= MAX_CHANNEL_DRAWS {
            let (min, max) = ch.response_range();
            return Err(Error::SingularChannel { min, max });
        }
    };
    if channel_resamples > 0 {
        log::warn!(
            "snr {} sjr {} rank {} trial {trial}: resampled a singular channel {channel_resamples} time(s)",
            point.snr_db,
            point.sjr_db,
            point.rank
        );
    }
    let received = received(&s, jamming.as_ref(), &channel, point.snr_db, derive(root, &[stream::NOISE]))?;
    Ok(TrialFrame {
        bits,
        codes,
        channel,
        received,
        channel_resamples,
        ica_seed: derive(root, &[stream::ICA]),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub point: SweepPoint,
    pub trial: usize,
    pub receiver: ReceiverKind,
    pub outcome: TrialOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub point: SweepPoint,
    pub trial: usize,
    /// `None` when generating the frame itself failed.
    pub receiver: Option<ReceiverKind>,
    pub message: String,
}

impl std::fmt::Display for TrialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let who = self.receiver.map_or_else(|| "frame generation".to_string(), |r| r.to_string());
        write!(
            f,
            "snr {} sjr {} rank {} trial {} ({who}): {}",
            self.point.snr_db, self.point.sjr_db, self.point.rank, self.trial, self.message
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    /// Completed (trial, receiver) pairs in sweep order.
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub channel_resamples: usize,
}

impl ExperimentReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

struct TrialResult {
    records: Vec<TrialRecord>,
    failures: Vec<TrialFailure>,
    channel_resamples: usize,
}

fn run_trial(cfg: &ExperimentConfig, w: &WalshMatrix, profile: &ChannelProfile, point: SweepPoint, trial: usize) -> TrialResult {
    let fail = |receiver, e: Error| TrialFailure {
        point,
        trial,
        receiver,
        message: e.to_string(),
    };
    let frame = match generate_frame(cfg, w, profile, &point, trial) {
        Ok(f) => f,
        Err(e) => {
            return TrialResult {
                records: Vec::new(),
                failures: vec![fail(None, e)],
                channel_resamples: 0,
            }
        }
    };
    let mut out = TrialResult {
        records: Vec::new(),
        failures: Vec::new(),
        channel_resamples: frame.channel_resamples,
    };
    for &kind in &cfg.receivers {
        let rc = cfg.receiver_config(kind, frame.ica_seed);
        match evaluate(&frame.received, &frame.channel, &frame.codes, w, &rc, &frame.bits) {
            Ok(mut outcome) => {
                if !cfg.measure_runtime {
                    outcome.runtime_seconds = 0.0;
                }
                out.records.push(TrialRecord {
                    point,
                    trial,
                    receiver: kind,
                    outcome,
                });
            }
            Err(e) => out.failures.push(fail(Some(kind), e)),
        }
    }
    out
}

fn worker_count(cfg: &ExperimentConfig) -> Result<Option<usize>> {
    if cfg.threads.is_some() {
        return Ok(cfg.threads);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV}={v} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

/// Reduces completed trials of one sweep point and receiver.
pub fn aggregate(cfg: &ExperimentConfig, point: &SweepPoint, receiver: ReceiverKind, outcomes: &[&TrialOutcome]) -> ResultRow {
    let count = outcomes.len();
    let nf = count as f64;
    let bits_per_trial = (cfg.k_users * cfg.n_bits) as f64;
    let (ber_mean, ber_stderr, runtime_mean_s, rpca_iter_mean) = if count == 0 {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let errors: usize = outcomes.iter().map(|o| o.bit_errors).sum();
        let mean = errors as f64 / (bits_per_trial * nf);
        let se = if count > 1 {
            let ss: f64 = outcomes.iter().map(|o| (o.ber - mean).powi(2)).sum();
            (ss / (nf - 1.0)).sqrt() / nf.sqrt()
        } else {
            0.0
        };
        let rt = outcomes.iter().map(|o| o.runtime_seconds).sum::<f64>() / nf;
        let it = outcomes.iter().map(|o| o.rpca_iterations as f64).sum::<f64>() / nf;
        (mean, se, rt, it)
    };
    ResultRow {
        snr_db: point.snr_db,
        sjr_db: point.sjr_db,
        rank: point.rank,
        receiver,
        k: cfg.k_users,
        m: cfg.m_code_len,
        n: cfg.n_bits,
        trials: count,
        ber_mean,
        ber_stderr,
        runtime_mean_s,
        rpca_iter_mean,
    }
}

/// Runs the whole sweep and keeps per-trial detail. Aborted trials are
/// collected in `failures` rather than stopping the sweep. Does not write
/// any file.
pub fn run_experiment_detailed(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let profile = cfg.profile()?;
    let w = walsh(cfg.m_code_len)?;
    let points = sweep_points(cfg);
    let jobs: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|p| (0..cfg.trials).map(move |t| (p, t))).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg)?.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<TrialResult> =
        pool.install(|| jobs.par_iter().map(|&(p, t)| run_trial(cfg, &w, &profile, points[p], t)).collect());

    let mut report = ExperimentReport::default();
    for (point, chunk) in points.iter().zip(results.chunks(cfg.trials)) {
        for &kind in &cfg.receivers {
            let outcomes: Vec<&TrialOutcome> = chunk
                .iter()
                .flat_map(|r| &r.records)
                .filter(|r| r.receiver == kind)
                .map(|r| &r.outcome)
                .collect();
            report.rows.push(aggregate(cfg, point, kind, &outcomes));
        }
    }
    for r in results {
        report.records.extend(r.records);
        report.failures.extend(r.failures);
        report.channel_resamples += r.channel_resamples;
    }
    if report.channel_resamples > 0 {
        log::info!("{} singular channel draw(s) resampled", report.channel_resamples);
    }
    Ok(report)
}

/// Runs the sweep, writes `output_path` when set, and returns the rows.
/// Any aborted trial turns into an error after the file has been written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let report = run_experiment_detailed(cfg)?;
    if let Some(path) = &cfg.output_path {
        emit_csv(&report.rows, path)?;
    }
    match report.failures.first() {
        None => Ok(report.rows),
        Some(first) => Err(Error::Aborted {
            failed: report.failures.len(),
            first: first.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(k: usize, m: usize, n: usize, trials: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::single_point(k, m, n, f64::INFINITY, f64::INFINITY, 1, trials);
        c.measure_runtime = false;
        c
    }

    #[test]
    fn clean_single_point() {
        let rows = run_experiment(&quiet(3, 64, 100, 1)).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.ber_mean, 0.0);
            assert_eq!(r.trials, 1);
            assert_eq!(r.ber_stderr, 0.0);
            assert_eq!(r.runtime_mean_s, 0.0);
        }
        assert_eq!(rows[0].rpca_iter_mean, 0.0);
        assert!(rows[1].rpca_iter_mean > 0.0);
    }

    #[test]
    fn runtime_is_nonnegative() {
        let (v, t) = measure_runtime(|| 2 + 2);
        assert_eq!(v, 4);
        assert!(t >= 0.0);
        let mut c = quiet(2, 16, 50, 2);
        c.measure_runtime = true;
        for r in run_experiment(&c).unwrap() {
            assert!(r.runtime_mean_s > 0.0);
        }
    }

    #[test]
    fn rows_follow_sweep_order() {
        let mut c = quiet(2, 16, 40, 2);
        c.snr_db_list = vec![20.0, 10.0];
        c.sjr_db_list = vec![-5.0, f64::INFINITY];
        c.rank_list = vec![1, 4];
        c.receivers = vec![ReceiverKind::Type2, ReceiverKind::Type1];
        let report = run_experiment_detailed(&c).unwrap();
        assert_eq!(report.rows.len(), 16);
        assert_eq!(report.records.len(), 32);
        let keys: Vec<_> = report.rows.iter().map(|r| (r.snr_db, r.sjr_db, r.rank, r.receiver)).collect();
        assert_eq!(keys[0], (20.0, -5.0, 1, ReceiverKind::Type2));
        assert_eq!(keys[1], (20.0, -5.0, 1, ReceiverKind::Type1));
        assert_eq!(keys[2], (20.0, -5.0, 4, ReceiverKind::Type2));
        assert_eq!(keys[4], (20.0, f64::INFINITY, 1, ReceiverKind::Type2));
        assert_eq!(keys[15], (10.0, f64::INFINITY, 4, ReceiverKind::Type1));
    }

    #[test]
    fn aggregation_matches_trial_records() {
        let mut c = quiet(3, 32, 100, 6);
        c.snr_db_list = vec![5.0];
        c.sjr_db_list = vec![-15.0, -5.0];
        c.rank_list = vec![2, 50];
        let report = run_experiment_detailed(&c).unwrap();
        assert!(report.is_complete());
        for row in &report.rows {
            let bers: Vec<f64> = report
                .records
                .iter()
                .filter(|r| r.receiver == row.receiver && r.point.sjr_db == row.sjr_db && r.point.rank == row.rank)
                .map(|r| r.outcome.ber)
                .collect();
            assert_eq!(bers.len(), row.trials);
            let n = bers.len() as f64;
            let mean = bers.iter().sum::<f64>() / n;
            let var = bers.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((mean - row.ber_mean).abs() <= 1e-12);
            assert!(((var / n).sqrt() - row.ber_stderr).abs() <= 1e-12);
            assert!((0.0..=1.0).contains(&row.ber_mean));
        }
    }

    #[test]
    fn trials_replay_in_isolation() {
        let mut c = quiet(3, 32, 80, 4);
        c.sjr_db_list = vec![-10.0];
        c.rank_list = vec![3];
        c.snr_db_list = vec![10.0];
        let report = run_experiment_detailed(&c).unwrap();
        let w = walsh(32).unwrap();
        let profile = c.profile().unwrap();
        let point = sweep_points(&c)[0];
        let frame = generate_frame(&c, &w, &profile, &point, 2).unwrap();
        for kind in [ReceiverKind::Type1, ReceiverKind::Type2] {
            let rc = c.receiver_config(kind, frame.ica_seed);
            let mut alone = evaluate(&frame.received, &frame.channel, &frame.codes, &w, &rc, &frame.bits).unwrap();
            alone.runtime_seconds = 0.0;
            let rec = report.records.iter().find(|r| r.trial == 2 && r.receiver == kind).unwrap();
            assert_eq!(rec.outcome, alone);
        }
    }

    #[test]
    fn extending_the_sweep_keeps_existing_trials() {
        let mut c = quiet(2, 16, 60, 3);
        c.snr_db_list = vec![10.0];
        c.sjr_db_list = vec![-10.0];
        c.rank_list = vec![2];
        let small = run_experiment_detailed(&c).unwrap();
        c.sjr_db_list = vec![-20.0, -10.0];
        c.rank_list = vec![1, 2];
        let big = run_experiment_detailed(&c).unwrap();
        for rec in &small.records {
            assert!(big.records.contains(rec));
        }
    }

    #[test]
    fn sweep_points_share_frames() {
        let mut c = quiet(2, 16, 40, 2);
        c.snr_db_list = vec![0.0, 20.0];
        c.sjr_db_list = vec![-10.0, f64::INFINITY];
        c.rank_list = vec![1, 8];
        let w = walsh(16).unwrap();
        let profile = c.profile().unwrap();
        let points = sweep_points(&c);
        let frames: Vec<_> = points.iter().map(|p| generate_frame(&c, &w, &profile, p, 1).unwrap()).collect();
        for f in &frames[1..] {
            assert_eq!(f.bits, frames[0].bits);
            assert_eq!(f.codes, frames[0].codes);
            assert_eq!(f.ica_seed, frames[0].ica_seed);
        }
        // same bits, codes and noise realization; only the jammer and SNR differ
        let clean = generate_frame(&c, &w, &profile, &SweepPoint { snr_db: f64::INFINITY, sjr_db: f64::INFINITY, rank: 1 }, 1).unwrap();
        let other_rank = generate_frame(&c, &w, &profile, &SweepPoint { snr_db: f64::INFINITY, sjr_db: f64::INFINITY, rank: 8 }, 1).unwrap();
        assert_eq!(clean.received, other_rank.received);
    }

    #[test]
    fn seed_changes_results() {
        let mut a = quiet(3, 32, 100, 3);
        a.snr_db_list = vec![0.0];
        let mut b = a.clone();
        b.master_seed = 1;
        let ra = run_experiment_detailed(&a).unwrap();
        let rb = run_experiment_detailed(&b).unwrap();
        assert_ne!(ra.records, rb.records);
    }

    #[test]
    fn bad_thread_override_is_reported() {
        let mut c = quiet(2, 16, 20, 1);
        c.threads = Some(0);
        assert!(run_experiment_detailed(&c).is_err());
    }

    #[test]
    fn failures_are_collected_not_fatal() {
        let mut c = quiet(2, 16, 40, 2);
        c.rpca.max_iter = 1;
        c.ica.max_iter = 1;
        c.ica.max_restarts = 0;
        let report = run_experiment_detailed(&c).unwrap();
        // non-convergence is not an abort: every trial still reports
        assert!(report.is_complete());
        assert_eq!(report.records.len(), 4);
    }
}
