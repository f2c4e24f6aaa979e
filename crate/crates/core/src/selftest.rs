//! Fast end-to-end sanity checks, runnable from a release binary.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{equalize, sample_channel, ChannelProfile};
use crate::harness::{parse_csv, run_experiment, write_csv, ExperimentConfig};
use crate::ica::{fast_ica, IcaParams};
use crate::numerics::{c64, circulant, dft, frobenius_norm, idft, CMatrix, RMatrix};
use crate::rpca::{rpca_ialm, RpcaParams};
use crate::seed;
use crate::waveform::{despread, gen_bits, gen_code_schedule, spread, walsh};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type CheckFn = fn() -> Result<(bool, String)>;

fn rel_err(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)]);
    frobenius_norm(&diff) / frobenius_norm(b).max(f64::MIN_POSITIVE)
}

fn bound(value: f64, limit: f64) -> (bool, String) {
    (value < limit, format!("{value:.3e} (limit {limit:.0e})"))
}

fn walsh_orthogonality() -> Result<(bool, String)> {
    for p in 1..=10 {
        let m = 1usize << p;
        let gram = walsh(m)?.gram();
        let ok = (0..m).all(|i| (0..m).all(|j| gram[i * m + j] == if i == j { m as i64 } else { 0 }));
        if !ok {
            return Ok((false, format!("W^T W != M I at M = {m}")));
        }
    }
    Ok((true, "exact for M = 2..1024".into()))
}

fn spread_roundtrip() -> Result<(bool, String)> {
    let w = walsh(64)?;
    let x = gen_bits(5, 300, 1)?;
    let codes = gen_code_schedule(&w, 5, 300, 2)?;
    let back = despread(&spread(&x, &codes)?, &codes)?;
    let worst = (0..5)
        .flat_map(|i| (0..300).map(move |j| (i, j)))
        .map(|(i, j)| (back[(i, j)] - c64::new(f64::from(x.get(i, j)), 0.0)).norm())
        .fold(0.0, f64::max);
    Ok(bound(worst, 1e-12))
}

fn dft_roundtrip() -> Result<(bool, String)> {
    let mut rng = seed::rng(3);
    let x: Vec<c64> = (0..256).map(|_| c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let back = idft(&dft(&x));
    let worst = x.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(bound(worst, 1e-12))
}

fn circulant_diagonalization() -> Result<(bool, String)> {
    let m = 32;
    let mut rng = seed::rng(4);
    let h: Vec<c64> = (0..5).map(|_| c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let c = circulant(&h, m)?;
    let mut padded = h.clone();
    padded.resize(m, c64::default());
    let lambda = dft(&padded);
    // every Fourier vector is an eigenvector, with eigenvalue from the DFT of h
    let mut worst: f64 = 0.0;
    for k in 0..m {
        let v: Vec<c64> = (0..m)
            .map(|n| c64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k * n) as f64 / m as f64))
            .collect();
        for i in 0..m {
            let cv: c64 = (0..m).map(|j| c[(i, j)] * v[j]).sum();
            let expect = lambda[k] * v[i];
            worst = worst.max((cv - expect).norm());
        }
    }
    Ok(bound(worst, 1e-10))
}

fn equalizer_inverts_channel() -> Result<(bool, String)> {
    let w = walsh(64)?;
    let x = gen_bits(4, 100, 5)?;
    let codes = gen_code_schedule(&w, 4, 100, 6)?;
    let s = spread(&x, &codes)?;
    let ch = sample_channel(&ChannelProfile::urban_nlos(), 64, 7)?;
    let d = equalize(&ch.apply(&s)?, &ch)?;
    Ok(bound(rel_err(&d, &s), 1e-8))
}

fn rpca_recovery() -> Result<(bool, String)> {
    let (m, n) = (100, 100);
    let mut rng = seed::rng(8);
    let unit = |rng: &mut seed::SimRng, len: usize| {
        let v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect::<Vec<_>>()
    };
    let a = unit(&mut rng, m);
    let b = unit(&mut rng, n);
    let low = CMatrix::from_fn(m, n, |i, j| c64::new(5.0 * a[i] * b[j], 0.0));
    let sparse = CMatrix::from_fn(m, n, |_, _| {
        if rng.random_bool(0.05) {
            c64::new(if rng.random::<bool>() { 10.0 } else { -10.0 }, 0.0)
        } else {
            c64::default()
        }
    });
    let q = CMatrix::from_fn(m, n, |i, j| low[(i, j)] + sparse[(i, j)]);
    let res = rpca_ialm(&q, &RpcaParams::default())?;
    let err = rel_err(&res.low_rank, &low).max(rel_err(&res.sparse, &sparse));
    let (ok, detail) = bound(err, 1e-4);
    Ok((ok && res.converged, format!("{detail}, {} iterations", res.iterations)))
}

fn ica_separation() -> Result<(bool, String)> {
    let n = 2000;
    let mut rng = seed::rng(9);
    let sources = RMatrix::from_fn(3, n, |_, _| rng.random_range(-1.0..1.0));
    let mixing = RMatrix::from_fn(3, 3, |_, _| rng.sample(StandardNormal));
    let x = &mixing * &sources;
    let res = fast_ica(&x, &IcaParams::new(3, 10))?;
    let corr = |a: usize, b: usize| {
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        let (ma, mb) = (
            (0..n).map(|t| res.sources[(a, t)]).sum::<f64>() / n as f64,
            (0..n).map(|t| sources[(b, t)]).sum::<f64>() / n as f64,
        );
        for t in 0..n {
            let (u, v) = (res.sources[(a, t)] - ma, sources[(b, t)] - mb);
            ab += u * v;
            aa += u * u;
            bb += v * v;
        }
        (ab / (aa * bb).sqrt()).abs()
    };
    let worst = (0..3)
        .map(|b| (0..3).map(|a| corr(a, b)).fold(0.0, f64::max))
        .fold(1.0, f64::min);
    Ok((worst >= 0.99, format!("worst best-match |corr| {worst:.5}")))
}

fn clean_link() -> Result<(bool, String)> {
    let mut cfg = ExperimentConfig::single_point(3, 64, 200, f64::INFINITY, f64::INFINITY, 1, 2);
    cfg.measure_runtime = false;
    let rows = run_experiment(&cfg)?;
    let ok = rows.iter().all(|r| r.ber_mean == 0.0);
    let bers: Vec<String> = rows.iter().map(|r| format!("{} {:e}", r.receiver, r.ber_mean)).collect();
    Ok((ok, bers.join(", ")))
}

fn csv_roundtrip() -> Result<(bool, String)> {
    let mut cfg = ExperimentConfig::single_point(2, 16, 50, 5.0, -10.0, 2, 3);
    cfg.measure_runtime = true;
    let rows = run_experiment(&cfg)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf, Path::new("<memory>"))?;
    let back = parse_csv(buf.as_slice(), Path::new("<memory>"))?;
    Ok((back == rows, format!("{} rows", rows.len())))
}

/// Runs every check; a check that errors counts as failed.
pub fn run() -> Vec<Check> {
    let checks: [(&'static str, CheckFn); 9] = [
        ("walsh orthogonality", walsh_orthogonality),
        ("spread/despread roundtrip", spread_roundtrip),
        ("dft/idft roundtrip", dft_roundtrip),
        ("circulant diagonalization", circulant_diagonalization),
        ("equalizer inverts channel", equalizer_inverts_channel),
        ("rpca exact recovery", rpca_recovery),
        ("ica separation", ica_separation),
        ("clean link, both receivers", clean_link),
        ("csv roundtrip", csv_roundtrip),
    ];
    checks
        .iter()
        .map(|&(name, f)| match f() {
            Ok((passed, detail)) => Check { name, passed, detail },
            Err(e) => Check {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        })
        .collect()
}
