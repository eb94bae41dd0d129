//! Spectral losses and linear-prediction tooling for speech waveforms.
//!
//! The crate covers the full path from PCM samples to scalar training
//! losses: STFT analysis ([`dsp`]), linear-prediction models and line
//! spectral frequencies ([`lp`]), perceptual weight matrices derived from
//! LP envelopes ([`mask`]), multi-resolution STFT losses with analytic
//! waveform gradients ([`loss`]), LP analysis and synthesis filtering
//! ([`noise_shaping`]), log-spectral distance ([`metrics`]), a
//! gradient-descent demonstration loop ([`optim`]), and PCM16 WAV I/O
//! ([`wav`]).

pub mod dsp;
mod error;
pub mod loss;
pub mod lp;
pub mod mask;
pub mod metrics;
pub mod noise_shaping;
pub mod optim;
pub mod wav;

pub use error::{Error, Result};
