//! Multi-tone frequency-hopping jamming.
//!
//! The jammer draws `r` spectral vectors. Each tone is occupied with
//! probability `p` and, when occupied, carries `Z * sqrt(P_J / (M p))` with
//! `Z ~ N(0, 1)`. The bit axis is split into `r` contiguous hop segments and
//! every column of a segment is the inverse DFT of that segment's spectrum, so
//! the jamming matrix has rank at most `r`. Power is set afterwards through the
//! signal-to-jamming ratio.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{c64, frobenius_norm, idft, CMatrix};
use crate::seed::{self, Seed};
use crate::waveform::SignalMatrix;

const MAX_SPECTRUM_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct JammingSpec {
    /// Tones per bit, equal to the code length `M`.
    pub m: usize,
    pub n_bits: usize,
    /// Number of hop segments; the rank bound of the jamming matrix.
    pub rank_r: usize,
    /// Probability `p` that a tone is occupied.
    pub tone_prob: f64,
    pub sjr_db: f64,
    pub seed: Seed,
}

impl JammingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n_bits == 0 {
            return Err(Error::Parameter(format!(
                "jamming needs m >= 1 and n_bits >= 1, got m={} n={}",
                self.m, self.n_bits
            )));
        }
        if self.rank_r == 0 || self.rank_r > self.n_bits {
            return Err(Error::Parameter(format!(
                "jamming rank must be in 1..={}, got {}",
                self.n_bits, self.rank_r
            )));
        }
        if !(self.tone_prob > 0.0 && self.tone_prob <= 1.0) {
            return Err(Error::Parameter(format!("tone probability must be in (0, 1], got {}", self.tone_prob)));
        }
        Ok(())
    }
}

/// Realized jamming `J` (`M x N`) together with its hop spectra.
#[derive(Debug, Clone)]
pub struct JammingMatrix {
    pub values: CMatrix,
    /// One spectrum per hop segment, in segment order.
    pub freq_vectors: Vec<Vec<c64>>,
    /// Segment index of every bit column.
    pub segment_of_bit: Vec<usize>,
}

impl JammingMatrix {
    pub fn rank_bound(&self) -> usize {
        self.freq_vectors.len()
    }
}

/// Assigns each of `n` bits to one of `r` contiguous hop segments.
///
/// Segments have length `ceil(n / r)` with a shorter final segment. When that
/// rule would leave fewer than `r` non-empty segments (for example `n = 10`,
/// `r = 6`), the bits are split into `r` near-equal blocks instead so the
/// segment count is always exactly `r`.
pub fn hop_segments(n: usize, r: usize) -> Vec<usize> {
    let len = n.div_ceil(r);
    if (r - 1) * len < n {
        (0..n).map(|b| b / len).collect()
    } else {
        (0..n).map(|b| (b * r) / n).collect()
    }
}

fn draw_spectrum(rng: &mut impl Rng, m: usize, p: f64) -> Result<Vec<c64>> {
    let amp = (1.0 / (m as f64 * p)).sqrt();
    for _ in 0..MAX_SPECTRUM_DRAWS {
        let mut occupied = 0usize;
        let spectrum: Vec<c64> = (0..m)
            .map(|_| {
                if rng.random_bool(p) {
                    occupied += 1;
                    let z: f64 = rng.sample(StandardNormal);
                    c64::new(z * amp, 0.0)
                } else {
                    c64::default()
                }
            })
            .collect();
        if occupied > 0 {
            return Ok(spectrum);
        }
    }
    Err(Error::DegenerateInput(format!(
        "no occupied jamming tone after {MAX_SPECTRUM_DRAWS} draws (M={m}, p={p})"
    )))
}

/// Draws a rank-`r` jamming matrix with unit jammer power. Use
/// [`scale_to_sjr`] to set the power.
pub fn gen_jamming(spec: &JammingSpec) -> Result<JammingMatrix> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let freq_vectors = (0..spec.rank_r)
        .map(|_| draw_spectrum(&mut rng, spec.m, spec.tone_prob))
        .collect::<Result<Vec<_>>>()?;
    let time_vectors: Vec<Vec<c64>> = freq_vectors.iter().map(|f| idft(f)).collect();
    let segment_of_bit = hop_segments(spec.n_bits, spec.rank_r);
    let values = CMatrix::from_fn(spec.m, spec.n_bits, |i, j| time_vectors[segment_of_bit[j]][i]);
    Ok(JammingMatrix {
        values,
        freq_vectors,
        segment_of_bit,
    })
}

/// Returns `alpha * J` with `20 log10(||S||_F / ||alpha J||_F) = sjr_db`.
pub fn scale_to_sjr(s: &SignalMatrix, j: &JammingMatrix, sjr_db: f64) -> Result<JammingMatrix> {
    if s.shape() != j.values.shape() {
        return Err(Error::dims(
            "scale_to_sjr",
            format!("{}x{}", s.nrows(), s.ncols()),
            format!("{}x{}", j.values.nrows(), j.values.ncols()),
        ));
    }
    if !sjr_db.is_finite() {
        return Err(Error::Parameter(format!("SJR must be finite, got {sjr_db}")));
    }
    let j_norm = frobenius_norm(&j.values);
    if j_norm == 0.0 {
        return Err(Error::DegenerateInput("cannot scale an all-zero jamming matrix".into()));
    }
    let alpha = frobenius_norm(s) / j_norm * 10f64.powf(-sjr_db / 20.0);
    Ok(JammingMatrix {
        values: crate::numerics::scale(&j.values, alpha),
        freq_vectors: j
            .freq_vectors
            .iter()
            .map(|f| f.iter().map(|&z| z * alpha).collect())
            .collect(),
        segment_of_bit: j.segment_of_bit.clone(),
    })
}

/// Measured `20 log10(||S||_F / ||J||_F)`.
pub fn measured_sjr_db(s: &SignalMatrix, j: &CMatrix) -> f64 {
    20.0 * (frobenius_norm(s) / frobenius_norm(j)).log10()
}
