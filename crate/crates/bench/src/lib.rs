//! Shared fixtures for the criterion benches.

use ajcdma_core::channel::{received, sample_channel, ChannelProfile, ChannelRealization};
use ajcdma_core::jamming::{gen_jamming, scale_to_sjr, JammingSpec};
use ajcdma_core::waveform::{gen_bits, gen_code_schedule, spread, walsh, BitMatrix, CodeSchedule, WalshMatrix};
use ajcdma_core::{CMatrix, Result};

pub struct Frame {
    pub w: WalshMatrix,
    pub bits: BitMatrix,
    pub codes: CodeSchedule,
    pub channel: ChannelRealization,
    pub received: CMatrix,
}

/// A jammed frame through a rural NLOS channel at SNR 5 dB, SJR -10 dB.
pub fn frame(k: usize, m: usize, n: usize, rank: usize, seed: u64) -> Result<Frame> {
    let w = walsh(m)?;
    let bits = gen_bits(k, n, seed)?;
    let codes = gen_code_schedule(&w, k, n, seed ^ 1)?;
    let s = spread(&bits, &codes)?;
    let spec = JammingSpec {
        m,
        n_bits: n,
        rank_r: rank,
        tone_prob: 0.1,
        sjr_db: -10.0,
        seed: seed ^ 2,
    };
    let j = scale_to_sjr(&s, &gen_jamming(&spec)?, -10.0)?;
    let channel = sample_channel(&ChannelProfile::rural_nlos(), m, seed ^ 3)?;
    let received = received(&s, Some(&j), &channel, 5.0, seed ^ 4)?;
    Ok(Frame {
        w,
        bits,
        codes,
        channel,
        received,
    })
}
