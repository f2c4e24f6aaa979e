//! Uplink relay, frequency-selective downlink and AWGN.
//!
//! The downlink is a circular convolution with `L` taps placed at integer chip
//! delays, i.e. a circulant `M x M` matrix. It is applied and inverted in the
//! DFT domain, where the circulant is diagonal. The amplify-and-forward relay
//! is assumed to cancel the uplink channel exactly; that assumption lives in
//! [`IdealUplink`] so it can be swapped out.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jamming::JammingMatrix;
use crate::numerics::{self, c64, circulant, dft, dft_columns, frobenius_norm, idft_columns, CMatrix};
use crate::seed::{self, Seed};
use crate::waveform::SignalMatrix;

/// Rice factor of the line-of-sight tap.
pub const RICE_FACTOR: f64 = 10.0;

/// Relative magnitude below which a DFT-domain channel coefficient counts as a null.
pub const SINGULAR_CHANNEL_TOL: f64 = 1e-12;

/// Tap layout and mean powers of a multipath downlink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub name: String,
    /// Chip delay of each path; strictly increasing, first is zero.
    pub delays: Vec<usize>,
    /// Mean power of each path in dB.
    pub gains_db: Vec<f64>,
    /// First tap is Rician instead of Rayleigh.
    #[serde(default)]
    pub has_los: bool,
}

impl ChannelProfile {
    pub fn num_paths(&self) -> usize {
        self.delays.len()
    }

    /// Single unit tap: no multipath.
    pub fn flat() -> Self {
        Self {
            name: "flat".into(),
            delays: vec![0],
            gains_db: vec![0.0],
            has_los: false,
        }
    }

    fn urban(has_los: bool) -> Self {
        Self {
            name: if has_los { "urban-los" } else { "urban-nlos" }.into(),
            delays: vec![0, 2, 4, 9, 13],
            gains_db: vec![0.0, -6.0, -9.0, -12.0, -15.0],
            has_los,
        }
    }

    fn rural(has_los: bool) -> Self {
        Self {
            name: if has_los { "rural-los" } else { "rural-nlos" }.into(),
            delays: vec![0, 3, 8],
            gains_db: vec![0.0, -8.0, -14.0],
            has_los,
        }
    }

    pub fn urban_los() -> Self {
        Self::urban(true)
    }

    pub fn urban_nlos() -> Self {
        Self::urban(false)
    }

    pub fn rural_los() -> Self {
        Self::rural(true)
    }

    pub fn rural_nlos() -> Self {
        Self::rural(false)
    }

    /// Built-in profile by name: `flat`, `urban-los`, `urban-nlos`,
    /// `rural-los`, `rural-nlos`.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "flat" => Some(Self::flat()),
            "urban-los" => Some(Self::urban_los()),
            "urban-nlos" => Some(Self::urban_nlos()),
            "rural-los" => Some(Self::rural_los()),
            "rural-nlos" => Some(Self::rural_nlos()),
            _ => None,
        }
    }

    /// Reads a profile from a TOML file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let profile: Self = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        profile.validate(None)?;
        Ok(profile)
    }

    /// Built-in name, or otherwise a path to a profile file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::builtin(name_or_path) {
            Some(p) => Ok(p),
            None => Self::from_file(Path::new(name_or_path)),
        }
    }

    /// Checks the structural invariants; with `m` also checks that every delay
    /// fits in a bit interval.
    pub fn validate(&self, m: Option<usize>) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("channel profile '{}': {msg}", self.name)));
        if self.delays.is_empty() {
            return bad("needs at least one path".into());
        }
        if self.delays.len() != self.gains_db.len() {
            return bad(format!("{} delays but {} gains", self.delays.len(), self.gains_db.len()));
        }
        if self.delays[0] != 0 {
            return bad("first delay must be 0".into());
        }
        if self.delays.windows(2).any(|w| w[1] <= w[0]) {
            return bad("delays must be strictly increasing".into());
        }
        if self.gains_db.iter().any(|g| !g.is_finite()) {
            return bad("gains must be finite".into());
        }
        if let Some(m) = m {
            if self.delays.iter().any(|&d| d >= m) {
                return bad(format!("delays must be below the code length {m}"));
            }
        }
        Ok(())
    }
}

/// One draw of the downlink.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Path gains, normalized so that their powers sum to one.
    pub taps: Vec<c64>,
    pub delays: Vec<usize>,
    /// Impulse response zero-padded to length `M`.
    impulse: Vec<c64>,
    /// DFT of the padded impulse response: the circulant's eigenvalues.
    response: Vec<c64>,
}

impl ChannelRealization {
    /// Builds a realization from explicit taps at explicit delays.
    pub fn from_taps(taps: Vec<c64>, delays: Vec<usize>, m: usize) -> Result<Self> {
        if taps.is_empty() || taps.len() != delays.len() {
            return Err(Error::dims("channel taps", format!("{} taps", delays.len()), taps.len()));
        }
        if delays.iter().any(|&d| d >= m) {
            return Err(Error::Parameter(format!("tap delays {delays:?} exceed code length {m}")));
        }
        let mut impulse = vec![c64::default(); m];
        for (&d, &t) in delays.iter().zip(&taps) {
            impulse[d] += t;
        }
        let response = dft(&impulse);
        Ok(Self {
            taps,
            delays,
            impulse,
            response,
        })
    }

    /// Identity channel of order `m`.
    pub fn identity(m: usize) -> Self {
        Self::from_taps(vec![c64::new(1.0, 0.0)], vec![0], m).expect("m >= 1")
    }

    pub fn code_len(&self) -> usize {
        self.impulse.len()
    }

    pub fn impulse_response(&self) -> &[c64] {
        &self.impulse
    }

    /// Eigenvalues of the circulant, in DFT bin order.
    pub fn frequency_response(&self) -> &[c64] {
        &self.response
    }

    /// Dense circulant `H_down`.
    /// Smallest and largest DFT-domain coefficient magnitude.
    pub fn response_range(&self) -> (f64, f64) {
        self.response.iter().map(|h| h.norm()).fold((f64::INFINITY, 0.0), |(lo, hi), a| (lo.min(a), hi.max(a)))
    }

    /// False when some frequency bin is (numerically) nulled out.
    pub fn is_invertible(&self) -> bool {
        let (min, max) = self.response_range();
        max > 0.0 && min >= SINGULAR_CHANNEL_TOL * max
    }

    pub fn matrix(&self) -> CMatrix {
        circulant(&self.impulse, self.impulse.len()).expect("impulse length equals M")
    }

    /// `H_down x` computed column-wise in the DFT domain.
    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        self.check_rows(x, "channel apply")?;
        let mut f = dft_columns(x);
        for j in 0..f.ncols() {
            for (z, h) in f.col_as_slice_mut(j).iter_mut().zip(&self.response) {
                *z *= h;
            }
        }
        Ok(idft_columns(&f))
    }

    fn check_rows(&self, x: &CMatrix, context: &'static str) -> Result<()> {
        if x.nrows() != self.code_len() {
            return Err(Error::dims(context, format!("{} rows", self.code_len()), x.nrows()));
        }
        Ok(())
    }
}

fn complex_gaussian(rng: &mut impl Rng) -> c64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws path gains for `profile` and builds the `M`-point circulant channel.
pub fn sample_channel(profile: &ChannelProfile, m: usize, seed: Seed) -> Result<ChannelRealization> {
    profile.validate(Some(m))?;
    let mut rng = seed::rng(seed);
    let mut taps: Vec<c64> = profile
        .gains_db
        .iter()
        .enumerate()
        .map(|(l, &g_db)| {
            let amp = 10f64.powf(g_db / 10.0).sqrt();
            let g = complex_gaussian(&mut rng);
            if l == 0 && profile.has_los {
                let k = RICE_FACTOR;
                amp * (c64::new((k / (k + 1.0)).sqrt(), 0.0) + g * (1.0 / (k + 1.0)).sqrt())
            } else {
                amp * g
            }
        })
        .collect();
    let power: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
    if power == 0.0 {
        return Err(Error::DegenerateInput("all channel taps are zero".into()));
    }
    let norm = power.sqrt();
    taps.iter_mut().for_each(|t| *t /= norm);
    ChannelRealization::from_taps(taps, profile.delays.clone(), m)
}

/// Uplink channel followed by the relay's gain.
pub trait UplinkCompensation {
    fn apply(&self, x: &SignalMatrix) -> SignalMatrix;
}

/// Relay gain exactly cancels the uplink channel: `G_AnF H_up = I`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealUplink;

impl UplinkCompensation for IdealUplink {
    fn apply(&self, x: &SignalMatrix) -> SignalMatrix {
        x.clone()
    }
}

/// The ideal uplink stage: the identity.
pub fn apply_uplink(s_plus_j: &SignalMatrix) -> SignalMatrix {
    IdealUplink.apply(s_plus_j)
}

/// `Y = H_down (S + J) + V` with the ideal uplink.
///
/// `V` is circular complex Gaussian rescaled so `20 log10(||S||_F/||V||_F)`
/// equals `snr_db`; `snr_db = +inf` disables noise. `None` disables jamming.
pub fn received(
    s: &SignalMatrix,
    j: Option<&JammingMatrix>,
    ch: &ChannelRealization,
    snr_db: f64,
    seed: Seed,
) -> Result<SignalMatrix> {
    received_with_uplink(s, j, &IdealUplink, ch, snr_db, seed)
}

/// [`received`] with an explicit uplink stage.
pub fn received_with_uplink(
    s: &SignalMatrix,
    j: Option<&JammingMatrix>,
    uplink: &dyn UplinkCompensation,
    ch: &ChannelRealization,
    snr_db: f64,
    seed: Seed,
) -> Result<SignalMatrix> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::Parameter(format!("SNR must be finite or +inf, got {snr_db}")));
    }
    let tx = match j {
        Some(j) => {
            numerics::same_shape(s, &j.values, "received")?;
            numerics::add(s, &j.values)
        }
        None => s.clone(),
    };
    let relayed = uplink.apply(&tx);
    let mut y = ch.apply(&relayed)?;
    if snr_db.is_finite() {
        let v = awgn(s.nrows(), s.ncols(), frobenius_norm(s) * 10f64.powf(-snr_db / 20.0), seed);
        for col in 0..y.ncols() {
            for (a, b) in y.col_as_slice_mut(col).iter_mut().zip(v.col_as_slice(col)) {
                *a += b;
            }
        }
    }
    Ok(y)
}

/// Circular complex Gaussian matrix rescaled to Frobenius norm `target`.
pub fn awgn(m: usize, n: usize, target: f64, seed: Seed) -> CMatrix {
    let mut rng = seed::rng(seed);
    let v = CMatrix::from_fn(m, n, |_, _| complex_gaussian(&mut rng));
    let norm = frobenius_norm(&v);
    if norm == 0.0 {
        return v;
    }
    numerics::scale(&v, target / norm)
}

/// Perfect-CSI zero-forcing: `D = H_down^{-1} Y`, one DFT-domain division per
/// column.
pub fn equalize(y: &SignalMatrix, ch: &ChannelRealization) -> Result<SignalMatrix> {
    ch.check_rows(y, "equalize")?;
    let (min, max) = ch.response_range();
    if !ch.is_invertible() {
        return Err(Error::SingularChannel { min, max });
    }
    let mut f = dft_columns(y);
    for j in 0..f.ncols() {
        for (z, h) in f.col_as_slice_mut(j).iter_mut().zip(&ch.response) {
            *z /= h;
        }
    }
    Ok(idft_columns(&f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sub;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_signal(m: usize, n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(m, n, |_, _| complex_gaussian(&mut rng))
    }

    fn rel(a: &CMatrix, b: &CMatrix) -> f64 {
        frobenius_norm(&sub(a, b)) / frobenius_norm(b)
    }

    #[test]
    fn single_tap_is_flat() {
        let p = ChannelProfile {
            name: "one".into(),
            delays: vec![0],
            gains_db: vec![0.0],
            has_los: false,
        };
        let ch = sample_channel(&p, 8, 4).unwrap();
        assert!((ch.taps[0].norm() - 1.0).abs() < 1e-14);
        let h = ch.matrix();
        for i in 0..8 {
            for j in 0..8 {
                let expect = if i == j { ch.taps[0] } else { c64::default() };
                assert!((h[(i, j)] - expect).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn builtin_profiles_have_expected_paths() {
        for name in ["urban-los", "urban-nlos"] {
            assert_eq!(ChannelProfile::builtin(name).unwrap().num_paths(), 5);
        }
        for name in ["rural-los", "rural-nlos"] {
            assert_eq!(ChannelProfile::builtin(name).unwrap().num_paths(), 3);
        }
        assert!(ChannelProfile::urban_los().has_los && !ChannelProfile::rural_nlos().has_los);
        assert!(ChannelProfile::builtin("suburban").is_none());
    }

    #[test]
    fn tap_power_is_normalized() {
        let p = ChannelProfile::urban_los();
        for seed in 0..1000 {
            let ch = sample_channel(&p, 64, seed).unwrap();
            let power: f64 = ch.taps.iter().map(|t| t.norm_sqr()).sum();
            assert!((power - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_validation() {
        let mut p = ChannelProfile::rural_nlos();
        assert!(p.validate(Some(16)).is_ok());
        assert!(p.validate(Some(8)).is_err());
        p.delays = vec![1, 3, 8];
        assert!(p.validate(None).is_err());
        p.delays = vec![0, 3, 3];
        assert!(p.validate(None).is_err());
        p.delays = vec![0, 3];
        assert!(p.validate(None).is_err());
    }

    #[test]
    fn profile_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("custom.toml");
        std::fs::write(
            &path,
            "name = \"custom\"\ndelays = [0, 1, 5]\ngains_db = [0.0, -3.0, -10.0]\nhas_los = true\n",
        )
        .unwrap();
        let p = ChannelProfile::resolve(path.to_str().unwrap()).unwrap();
        assert_eq!(p.delays, vec![0, 1, 5]);
        assert!(p.has_los);
        assert!(matches!(
            ChannelProfile::resolve("/nonexistent/profile.toml"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn uplink_is_identity_and_hookable() {
        let x = random_signal(8, 5, 1);
        assert_eq!(apply_uplink(&x), x);

        let ch = sample_channel(&ChannelProfile::rural_nlos(), 16, 2).unwrap();
        let s = random_signal(16, 6, 3);
        let a = received(&s, None, &ch, f64::INFINITY, 0).unwrap();
        let b = ch.apply(&apply_uplink(&s)).unwrap();
        assert_eq!(a, b);

        struct Halve;
        impl UplinkCompensation for Halve {
            fn apply(&self, x: &SignalMatrix) -> SignalMatrix {
                numerics::scale(x, 0.5)
            }
        }
        let c = received_with_uplink(&s, None, &Halve, &ch, f64::INFINITY, 0).unwrap();
        assert!(rel(&c, &a) > 0.1);
    }

    #[test]
    fn noiseless_flat_unjammed_is_transparent() {
        let s = random_signal(16, 10, 4);
        let y = received(&s, None, &ChannelRealization::identity(16), f64::INFINITY, 0).unwrap();
        assert!(rel(&y, &s) < 1e-15);
    }

    #[test]
    fn noise_hits_target_snr() {
        let s = random_signal(32, 20, 5);
        let ch = ChannelRealization::identity(32);
        for snr in [0.0, 5.0, 10.0, -3.5] {
            let y = received(&s, None, &ch, snr, 77).unwrap();
            let v = sub(&y, &s);
            let measured = 20.0 * (frobenius_norm(&s) / frobenius_norm(&v)).log10();
            assert!((measured - snr).abs() < 1e-12, "snr {snr}: {measured}");
        }
    }

    #[test]
    fn noise_variance_bookkeeping() {
        let (m, n, snr) = (64usize, 400usize, 7.0);
        let s = random_signal(m, n, 6);
        let y = received(&s, None, &ChannelRealization::identity(m), snr, 8).unwrap();
        let v = sub(&y, &s);
        let mean_power = frobenius_norm(&v).powi(2) / (m * n) as f64;
        let expect = frobenius_norm(&s).powi(2) * 10f64.powf(-snr / 10.0) / (m * n) as f64;
        assert!((mean_power / expect - 1.0).abs() < 0.01);
        // noise is circular: real and imaginary parts share the power
        let re: f64 = (0..n).flat_map(|j| v.col_as_slice(j).iter().map(|z| z.re * z.re).collect::<Vec<_>>()).sum();
        let frac = re / frobenius_norm(&v).powi(2);
        assert!((frac - 0.5).abs() < 0.02);
    }

    #[test]
    fn jamming_enters_linearly() {
        use crate::jamming::{gen_jamming, JammingSpec};
        let (m, n) = (32, 12);
        let s = random_signal(m, n, 9);
        let j = gen_jamming(&JammingSpec {
            m,
            n_bits: n,
            rank_r: 3,
            tone_prob: 0.2,
            sjr_db: 0.0,
            seed: 3,
        })
        .unwrap();
        let ch = sample_channel(&ChannelProfile::urban_nlos(), m, 10).unwrap();
        let with = received(&s, Some(&j), &ch, 10.0, 55).unwrap();
        let without = received(&s, None, &ch, 10.0, 55).unwrap();
        let hj = &ch.matrix() * &j.values;
        assert!(rel(&sub(&with, &without), &hj) < 1e-12);
    }

    #[test]
    fn equalize_inverts_channel() {
        let ch = sample_channel(&ChannelProfile::urban_los(), 32, 12).unwrap();
        let s = random_signal(32, 9, 13);
        let hs = &ch.matrix() * &s;
        assert!(rel(&ch.apply(&s).unwrap(), &hs) < 1e-12);
        assert!(rel(&equalize(&hs, &ch).unwrap(), &s) < 1e-8);

        let flat = ChannelRealization::identity(32);
        assert!(rel(&equalize(&s, &flat).unwrap(), &s) < 1e-15);
    }

    #[test]
    fn dft_division_matches_dense_inverse() {
        // dense oracle: solve H D = Y with an LU solve from an independent crate
        for (m, seed) in [(16usize, 1u64), (9, 2), (32, 3), (16, 4)] {
            let ch = sample_channel(&ChannelProfile::rural_los(), m, seed).unwrap();
            let y = random_signal(m, 5, seed + 50);
            let h = ch.matrix();
            let hn = nalgebra::DMatrix::from_fn(m, m, |i, j| h[(i, j)]);
            let yn = nalgebra::DMatrix::from_fn(m, 5, |i, j| y[(i, j)]);
            let dn = hn.lu().solve(&yn).unwrap();
            let d = equalize(&y, &ch).unwrap();
            let err = (0..m)
                .flat_map(|i| (0..5).map(move |j| (i, j)))
                .map(|(i, j)| (d[(i, j)] - dn[(i, j)]).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-10, "m={m}: {err}");
        }
    }

    #[test]
    fn singular_channel_is_rejected() {
        // h = [1, 1] at M = 2 has a null at the Nyquist bin
        let ch = ChannelRealization::from_taps(vec![c64::new(1.0, 0.0), c64::new(1.0, 0.0)], vec![0, 1], 2).unwrap();
        let y = random_signal(2, 3, 0);
        assert!(matches!(equalize(&y, &ch), Err(Error::SingularChannel { .. })));
    }
}
