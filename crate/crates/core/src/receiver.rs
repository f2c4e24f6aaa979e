//! The two receiver chains and their scoring.
//!
//! * Type 1: equalize, despread, FastICA.
//! * Type 2: equalize, robust PCA on `W^T D`, map the sparse part back with
//!   `(1/M) W`, despread, FastICA.
//!
//! ICA leaves each recovered row with an unknown sign and order; scoring
//! aligns them to the true bits before counting errors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{equalize, ChannelRealization};
use crate::error::{Error, Result};
use crate::ica::{fast_ica, take_real, IcaParams, SeparationResult};
use crate::numerics::{self, RMatrix};
use crate::rpca::{rpca_ialm, DecompositionResult, RpcaParams};
use crate::waveform::{despread, BitMatrix, CodeSchedule, SignalMatrix, WalshMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiverKind {
    /// ICA only.
    Type1,
    /// Robust PCA followed by ICA.
    Type2,
}

impl fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReceiverKind::Type1 => "type1",
            ReceiverKind::Type2 => "type2",
        })
    }
}

impl FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "type1" | "1" | "ica" => Ok(ReceiverKind::Type1),
            "type2" | "2" | "rpca" | "rpca+ica" => Ok(ReceiverKind::Type2),
            other => Err(Error::Config(format!("unknown receiver '{other}' (expected type1 or type2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverConfig {
    pub kind: ReceiverKind,
    /// Present exactly when `kind` is `Type2`.
    pub rpca: Option<RpcaParams>,
    pub ica: IcaParams,
}

impl ReceiverConfig {
    pub fn type1(ica: IcaParams) -> Self {
        Self {
            kind: ReceiverKind::Type1,
            rpca: None,
            ica,
        }
    }

    pub fn type2(rpca: RpcaParams, ica: IcaParams) -> Self {
        Self {
            kind: ReceiverKind::Type2,
            rpca: Some(rpca),
            ica,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.rpca) {
            (ReceiverKind::Type1, Some(_)) => {
                Err(Error::Parameter("type1 receiver must not carry RPCA parameters".into()))
            }
            (ReceiverKind::Type2, None) => Err(Error::Parameter("type2 receiver needs RPCA parameters".into())),
            (_, rpca) => {
                if let Some(p) = rpca {
                    p.validate()?;
                }
                self.ica.validate()
            }
        }
    }
}

/// Everything a receiver chain produced for one frame.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Soft bit estimates, `K x N`, before sign/permutation alignment.
    pub estimate: RMatrix,
    pub decomposition: Option<DecompositionResult>,
    pub separation: SeparationResult,
}

fn check_inputs(
    y: &SignalMatrix,
    ch: &ChannelRealization,
    codes: &CodeSchedule,
    w: &WalshMatrix,
    cfg: &ReceiverConfig,
    kind: ReceiverKind,
) -> Result<()> {
    if cfg.kind != kind {
        return Err(Error::Parameter(format!("{} pipeline called with a {} configuration", kind, cfg.kind)));
    }
    cfg.validate()?;
    let m = w.order();
    if y.nrows() != m || ch.code_len() != m || codes.code_len() != m || y.ncols() != codes.n_bits() {
        return Err(Error::dims(
            "receiver",
            format!("{}x{} received frame", m, codes.n_bits()),
            format!("{}x{} (channel M={}, codes M={})", y.nrows(), y.ncols(), ch.code_len(), codes.code_len()),
        ));
    }
    if cfg.ica.n_components != codes.k_users() {
        return Err(Error::Parameter(format!(
            "ICA configured for {} components but {} users are active",
            cfg.ica.n_components,
            codes.k_users()
        )));
    }
    Ok(())
}

/// Equalize, despread, separate.
pub fn run_type1(
    y: &SignalMatrix,
    ch: &ChannelRealization,
    codes: &CodeSchedule,
    w: &WalshMatrix,
    cfg: &ReceiverConfig,
) -> Result<PipelineOutput> {
    check_inputs(y, ch, codes, w, cfg, ReceiverKind::Type1)?;
    let d = equalize(y, ch)?;
    let mixed = take_real(&despread(&d, codes)?);
    let separation = fast_ica(&mixed, &cfg.ica)?;
    Ok(PipelineOutput {
        estimate: separation.sources.clone(),
        decomposition: None,
        separation,
    })
}

/// Equalize, split `W^T D` into low-rank jamming and sparse signal, map the
/// sparse part back, despread, separate.
///
/// A decomposition that hit its iteration cap is used as-is; check
/// `decomposition.converged`.
pub fn run_type2(
    y: &SignalMatrix,
    ch: &ChannelRealization,
    codes: &CodeSchedule,
    w: &WalshMatrix,
    cfg: &ReceiverConfig,
) -> Result<PipelineOutput> {
    check_inputs(y, ch, codes, w, cfg, ReceiverKind::Type2)?;
    let rpca = cfg.rpca.as_ref().expect("validated");
    let d = equalize(y, ch)?;
    let q = w.apply_transpose(&d)?;
    let dec = rpca_ialm(&q, rpca)?;
    if !dec.converged {
        log::debug!("RPCA stopped after {} iterations without converging", dec.iterations);
    }
    let s_hat = numerics::scale(&w.apply(&dec.sparse)?, 1.0 / w.order() as f64);
    let mixed = take_real(&despread(&s_hat, codes)?);
    let separation = fast_ica(&mixed, &cfg.ica)?;
    Ok(PipelineOutput {
        estimate: separation.sources.clone(),
        decomposition: Some(dec),
        separation,
    })
}

/// Dispatches on `cfg.kind`.
pub fn run_receiver(
    y: &SignalMatrix,
    ch: &ChannelRealization,
    codes: &CodeSchedule,
    w: &WalshMatrix,
    cfg: &ReceiverConfig,
) -> Result<PipelineOutput> {
    match cfg.kind {
        ReceiverKind::Type1 => run_type1(y, ch, codes, w, cfg),
        ReceiverKind::Type2 => run_type2(y, ch, codes, w, cfg),
    }
}

/// Normalized inner products between estimated rows `i` and true rows `j`.
pub fn correlation_matrix(x_hat: &RMatrix, x_true: &BitMatrix) -> Result<Vec<Vec<f64>>> {
    let (k, n) = (x_true.k_users(), x_true.n_bits());
    if x_hat.nrows() != k || x_hat.ncols() != n {
        return Err(Error::dims(
            "resolve_ambiguity",
            format!("{k}x{n}"),
            format!("{}x{}", x_hat.nrows(), x_hat.ncols()),
        ));
    }
    let true_norm = (n as f64).sqrt();
    Ok((0..k)
        .map(|i| {
            let est_norm = (0..n).map(|t| x_hat[(i, t)].powi(2)).sum::<f64>().sqrt();
            (0..k)
                .map(|j| {
                    if est_norm == 0.0 {
                        return 0.0;
                    }
                    let dot: f64 = (0..n).map(|t| x_hat[(i, t)] * f64::from(x_true.get(j, t))).sum();
                    dot / (est_norm * true_norm)
                })
                .collect()
        })
        .collect())
}

/// Greedy assignment on `|corr|`: repeatedly take the largest remaining entry,
/// ties broken toward lower estimated then lower true row index. Returns the
/// estimated row assigned to each true row.
pub fn greedy_assignment(corr: &[Vec<f64>]) -> Vec<usize> {
    let k = corr.len();
    let mut est_used = vec![false; k];
    let mut owner = vec![usize::MAX; k];
    for _ in 0..k {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in corr.iter().enumerate() {
            if est_used[i] {
                continue;
            }
            for (j, &c) in row.iter().enumerate() {
                if owner[j] != usize::MAX {
                    continue;
                }
                if best.is_none_or(|(_, _, b)| c.abs() > b) {
                    best = Some((i, j, c.abs()));
                }
            }
        }
        let (i, j, _) = best.expect("an unassigned pair remains");
        est_used[i] = true;
        owner[j] = i;
    }
    owner
}

/// Aligns ICA output to the true bits and takes hard decisions.
///
/// Each true row is paired with one estimated row (see [`greedy_assignment`]),
/// the estimate is multiplied by the sign of their correlation and sliced.
pub fn resolve_ambiguity(x_hat: &RMatrix, x_true: &BitMatrix) -> Result<BitMatrix> {
    let corr = correlation_matrix(x_hat, x_true)?;
    let owner = greedy_assignment(&corr);
    let n = x_true.n_bits();
    let aligned = RMatrix::from_fn(x_true.k_users(), n, |j, t| {
        let i = owner[j];
        let sign = if corr[i][j] < 0.0 { -1.0 } else { 1.0 };
        sign * x_hat[(i, t)]
    });
    Ok(BitMatrix::from_signs(&aligned))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitErrorCount {
    pub bit_errors: usize,
    pub total_bits: usize,
    pub ber: f64,
}

/// Fraction of positions where `resolved` and `x_true` disagree.
pub fn ber(resolved: &BitMatrix, x_true: &BitMatrix) -> Result<BitErrorCount> {
    let bit_errors = resolved.count_differences(x_true)?;
    let total_bits = x_true.k_users() * x_true.n_bits();
    Ok(BitErrorCount {
        bit_errors,
        total_bits,
        ber: bit_errors as f64 / total_bits as f64,
    })
}

/// Per-trial score of one receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub ber: f64,
    pub bit_errors: usize,
    /// Zero for Type 1.
    pub rpca_iterations: usize,
    pub runtime_seconds: f64,
    /// `None` for Type 1.
    pub rpca_converged: Option<bool>,
    pub ica_converged: bool,
}

/// Runs the configured receiver on one frame and scores it against the truth.
/// Only the receiver chain itself is timed.
pub fn evaluate(
    y: &SignalMatrix,
    ch: &ChannelRealization,
    codes: &CodeSchedule,
    w: &WalshMatrix,
    cfg: &ReceiverConfig,
    x_true: &BitMatrix,
) -> Result<TrialOutcome> {
    let (out, runtime_seconds) = crate::harness::measure_runtime(|| run_receiver(y, ch, codes, w, cfg));
    let out = out?;
    let resolved = resolve_ambiguity(&out.estimate, x_true)?;
    let count = ber(&resolved, x_true)?;
    Ok(TrialOutcome {
        ber: count.ber,
        bit_errors: count.bit_errors,
        rpca_iterations: out.decomposition.as_ref().map_or(0, |d| d.iterations),
        runtime_seconds,
        rpca_converged: out.decomposition.as_ref().map(|d| d.converged),
        ica_converged: out.separation.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{received, sample_channel, ChannelProfile};
    use crate::jamming::{gen_jamming, scale_to_sjr, JammingSpec};
    use crate::numerics::{frobenius_norm, sub, CMatrix};
    use crate::waveform::{gen_bits, gen_code_schedule, spread, walsh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Frame {
        w: WalshMatrix,
        x: BitMatrix,
        codes: CodeSchedule,
        y: CMatrix,
        ch: ChannelRealization,
    }

    fn frame(k: usize, m: usize, n: usize, rank: Option<usize>, sjr: f64, snr: f64, seed: u64) -> Frame {
        let w = walsh(m).unwrap();
        let x = gen_bits(k, n, seed).unwrap();
        let codes = gen_code_schedule(&w, k, n, seed + 1).unwrap();
        let s = spread(&x, &codes).unwrap();
        let j = rank.map(|r| {
            let j = gen_jamming(&JammingSpec { m, n_bits: n, rank_r: r, tone_prob: 0.1, sjr_db: sjr, seed: seed + 2 }).unwrap();
            scale_to_sjr(&s, &j, sjr).unwrap()
        });
        let ch = ChannelRealization::identity(m);
        let y = received(&s, j.as_ref(), &ch, snr, seed + 3).unwrap();
        Frame { w, x, codes, y, ch }
    }

    fn type1(k: usize, seed: u64) -> ReceiverConfig {
        ReceiverConfig::type1(IcaParams::new(k, seed))
    }

    fn type2(k: usize, seed: u64) -> ReceiverConfig {
        ReceiverConfig::type2(RpcaParams::default(), IcaParams::new(k, seed))
    }

    #[test]
    fn clean_link_is_recovered_by_both_receivers() {
        let f = frame(3, 64, 200, None, 0.0, f64::INFINITY, 1);
        for cfg in [type1(3, 9), type2(3, 9)] {
            let out = evaluate(&f.y, &f.ch, &f.codes, &f.w, &cfg, &f.x).unwrap();
            assert_eq!(out.bit_errors, 0, "{}", cfg.kind);
            assert!(out.runtime_seconds >= 0.0);
        }
    }

    #[test]
    fn clean_link_has_unit_correlation() {
        let f = frame(3, 64, 200, None, 0.0, f64::INFINITY, 2);
        let out = run_type2(&f.y, &f.ch, &f.codes, &f.w, &type2(3, 4)).unwrap();
        let corr = correlation_matrix(&out.estimate, &f.x).unwrap();
        for row in &corr {
            let best = row.iter().map(|c| c.abs()).fold(0.0, f64::max);
            assert!(best > 0.95, "{row:?}");
        }
    }

    #[test]
    fn rank_one_knockout_mostly_error_free() {
        let mut clean = 0;
        for t in 0..50u64 {
            let f = frame(3, 64, 200, Some(1), -20.0, 10.0, 1000 + 10 * t);
            let out = evaluate(&f.y, &f.ch, &f.codes, &f.w, &type2(3, t), &f.x).unwrap();
            if out.bit_errors == 0 {
                clean += 1;
            }
        }
        assert!(clean >= 45, "{clean}/50 error-free trials");
    }

    #[test]
    fn decomposition_is_feasible_on_converged_trials() {
        let f = frame(3, 64, 200, Some(1), -20.0, 10.0, 77);
        let out = run_type2(&f.y, &f.ch, &f.codes, &f.w, &type2(3, 1)).unwrap();
        let dec = out.decomposition.unwrap();
        assert!(dec.converged);
        let q = f.w.apply_transpose(&equalize(&f.y, &f.ch).unwrap()).unwrap();
        let sum = numerics::add(&dec.low_rank, &dec.sparse);
        assert!(frobenius_norm(&sub(&sum, &q)) / frobenius_norm(&q) < 1e-6);
    }

    #[test]
    fn walsh_roundtrip_reduces_type2_to_type1() {
        let f = frame(3, 32, 100, Some(4), -10.0, 10.0, 5);
        let cfg = type1(3, 8);
        let d = equalize(&f.y, &f.ch).unwrap();
        let q = f.w.apply_transpose(&d).unwrap();
        let back = numerics::scale(&f.w.apply(&q).unwrap(), 1.0 / 32.0);
        assert!(frobenius_norm(&sub(&back, &d)) <= 1e-13 * frobenius_norm(&d));

        let direct = run_type1(&f.y, &f.ch, &f.codes, &f.w, &cfg).unwrap();
        let mixed = take_real(&despread(&back, &f.codes).unwrap());
        let via = fast_ica(&mixed, &cfg.ica).unwrap();
        let a = resolve_ambiguity(&direct.estimate, &f.x).unwrap();
        let b = resolve_ambiguity(&via.sources, &f.x).unwrap();
        assert_eq!(a, b);

        // integer-valued frames survive the round trip bit-exactly
        let s = spread(&f.x, &f.codes).unwrap();
        let back = numerics::scale(&f.w.apply(&f.w.apply_transpose(&s).unwrap()).unwrap(), 1.0 / 32.0);
        assert_eq!(back, s);
    }

    #[test]
    fn type1_struggles_where_type2_succeeds() {
        let mut t1 = 0.0;
        let mut t2 = 0.0;
        for t in 0..10u64 {
            let f = frame(3, 64, 200, Some(1), -20.0, 10.0, 500 + 7 * t);
            t1 += evaluate(&f.y, &f.ch, &f.codes, &f.w, &type1(3, t), &f.x).unwrap().ber;
            t2 += evaluate(&f.y, &f.ch, &f.codes, &f.w, &type2(3, t), &f.x).unwrap().ber;
        }
        assert!(t1 > t2 + 0.5, "type1 {t1} vs type2 {t2}");
    }

    #[test]
    fn config_and_dimension_errors() {
        let f = frame(2, 16, 40, None, 0.0, f64::INFINITY, 3);
        assert!(run_type1(&f.y, &f.ch, &f.codes, &f.w, &type2(2, 0)).is_err());
        assert!(run_type2(&f.y, &f.ch, &f.codes, &f.w, &type1(2, 0)).is_err());
        assert!(run_type1(&f.y, &f.ch, &f.codes, &f.w, &type1(3, 0)).is_err());
        let bad = ReceiverConfig { kind: ReceiverKind::Type1, rpca: Some(RpcaParams::default()), ica: IcaParams::new(2, 0) };
        assert!(bad.validate().is_err());
        let other_w = walsh(32).unwrap();
        assert!(run_type1(&f.y, &f.ch, &f.codes, &other_w, &type1(2, 0)).is_err());
        assert_eq!("Type2".parse::<ReceiverKind>().unwrap(), ReceiverKind::Type2);
        assert!("type3".parse::<ReceiverKind>().is_err());
    }

    #[test]
    fn frequency_selective_channel_is_equalized() {
        let m = 32;
        let w = walsh(m).unwrap();
        let x = gen_bits(3, 150, 4).unwrap();
        let codes = gen_code_schedule(&w, 3, 150, 5).unwrap();
        let s = spread(&x, &codes).unwrap();
        let ch = sample_channel(&ChannelProfile::urban_los(), m, 6).unwrap();
        let y = received(&s, None, &ch, f64::INFINITY, 0).unwrap();
        let out = evaluate(&y, &ch, &codes, &w, &type1(3, 1), &x).unwrap();
        assert_eq!(out.bit_errors, 0);
    }

    #[test]
    fn resolution_undoes_sign_and_permutation() {
        let x = gen_bits(4, 50, 11).unwrap();
        let real = x.to_real();
        let perm = [2usize, 0, 3, 1];
        let signs = [-1.0, 1.0, -1.0, 1.0];
        let scrambled = RMatrix::from_fn(4, 50, |i, t| signs[i] * 0.3 * real[(perm[i], t)]);
        let resolved = resolve_ambiguity(&scrambled, &x).unwrap();
        assert_eq!(resolved, x);
        assert_eq!(ber(&resolved, &x).unwrap().bit_errors, 0);

        let corr = correlation_matrix(&real, &x).unwrap();
        assert_eq!(greedy_assignment(&corr), vec![0, 1, 2, 3]);
    }

    fn brute_force(corr: &[Vec<f64>]) -> Vec<usize> {
        fn permutations(k: usize) -> Vec<Vec<usize>> {
            if k == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in permutations(k - 1) {
                for pos in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(pos, k - 1);
                    out.push(q);
                }
            }
            out
        }
        // perm[j] = estimated row for true row j
        permutations(corr.len())
            .into_iter()
            .max_by(|a, b| {
                let sa: f64 = a.iter().enumerate().map(|(j, &i)| corr[i][j].abs()).sum();
                let sb: f64 = b.iter().enumerate().map(|(j, &i)| corr[i][j].abs()).sum();
                sa.total_cmp(&sb)
            })
            .unwrap()
    }

    #[test]
    fn greedy_matches_exhaustive_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut agree = 0;
        for trial in 0..100u64 {
            let k = 2 + (trial as usize % 4);
            let x = gen_bits(k, 200, trial).unwrap();
            let real = x.to_real();
            let mut perm: Vec<usize> = (0..k).collect();
            for i in (1..k).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let noisy = RMatrix::from_fn(k, 200, |i, t| {
                let mix = 0.3 * real[((perm[i] + 1) % k, t)];
                real[(perm[i], t)] + mix + rng.random_range(-1.5..1.5)
            });
            let corr = correlation_matrix(&noisy, &x).unwrap();
            if greedy_assignment(&corr) == brute_force(&corr) {
                agree += 1;
            }
        }
        assert!(agree >= 99, "greedy agreed in {agree}/100 trials");
    }

    #[test]
    fn ber_counting() {
        let x = gen_bits(30, 1000, 3).unwrap();
        assert_eq!(ber(&x, &x).unwrap().ber, 0.0);
        let neg = BitMatrix::from_signs(&RMatrix::from_fn(30, 1000, |i, j| -f64::from(x.get(i, j))));
        assert_eq!(ber(&neg, &x).unwrap().ber, 1.0);
        let one = BitMatrix::try_from_fn(30, 1000, |i, j| if (i, j) == (7, 400) { -x.get(i, j) } else { x.get(i, j) }).unwrap();
        let count = ber(&one, &x).unwrap();
        assert_eq!(count.bit_errors, 1);
        assert!((count.ber - 1.0 / 30_000.0).abs() < 1e-18);
    }

    #[test]
    fn resolved_ber_never_exceeds_half_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut total = 0.0;
        for t in 0..50 {
            let x = gen_bits(3, 100, t).unwrap();
            let junk = RMatrix::from_fn(3, 100, |_, _| rng.random_range(-1.0..1.0));
            total += ber(&resolve_ambiguity(&junk, &x).unwrap(), &x).unwrap().ber;
        }
        assert!(total / 50.0 <= 0.5);
    }
}
