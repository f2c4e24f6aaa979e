//! Simulation library for a DS-CDMA satellite link under low-rank multi-tone
//! frequency-hopping jamming, with two receivers: FastICA alone, and robust PCA
//! (inexact augmented Lagrangian) in the Walsh domain followed by FastICA.

pub mod channel;
pub mod error;
pub mod harness;
pub mod ica;
pub mod jamming;
pub mod numerics;
pub mod receiver;
pub mod rpca;
pub mod seed;
pub mod selftest;
pub mod waveform;

pub use error::{Error, Result};
pub use numerics::{c64, CMatrix, RMatrix};
