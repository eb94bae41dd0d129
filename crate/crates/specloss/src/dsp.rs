//! Windowed framing and discrete Fourier analysis.
//!
//! Frames are left-aligned: frame `t` starts at sample `t * hop_size`, the
//! tail shorter than one window is dropped, and no reflection padding is
//! applied. Each frame is multiplied by a periodic Hann window, zero-padded
//! to the FFT size, and transformed; only the one-sided spectrum
//! (`fft_size / 2 + 1` bins) is kept.

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// A mono sequence of finite samples with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    /// Builds a waveform, rejecting non-finite samples and a zero sample
    /// rate. An empty sample vector is allowed; analysis operations reject
    /// it at their own boundaries.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(pos) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!(
                "sample {pos} is not finite ({})",
                samples[pos]
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// One STFT analysis resolution: FFT size, window size, and hop, all in
/// samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct StftConfig {
    fft_size: usize,
    window_size: usize,
    hop_size: usize,
}

impl StftConfig {
    /// Validates `window_size <= fft_size`, `hop_size >= 1`, and that
    /// `fft_size` is a power of two.
    pub fn new(fft_size: usize, window_size: usize, hop_size: usize) -> Result<Self> {
        if fft_size == 0 || !fft_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "fft size {fft_size} must be a power of two"
            )));
        }
        if window_size == 0 || window_size > fft_size {
            return Err(Error::invalid(format!(
                "window size {window_size} must be in 1..={fft_size}"
            )));
        }
        if hop_size == 0 {
            return Err(Error::invalid("hop size must be at least 1"));
        }
        Ok(Self {
            fft_size,
            window_size,
            hop_size,
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn hop_size(&self) -> usize {
        self.hop_size
    }

    /// Number of one-sided frequency bins, `fft_size / 2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of frames for a signal of `len` samples:
    /// `floor((len - window_size) / hop_size) + 1`.
    pub fn num_frames(&self, len: usize) -> Result<usize> {
        if len < self.window_size {
            return Err(Error::invalid(format!(
                "signal of {len} samples is shorter than one window ({})",
                self.window_size
            )));
        }
        Ok((len - self.window_size) / self.hop_size + 1)
    }
}

/// Periodic (DFT-even) Hann window `w[k] = 0.5 * (1 - cos(2 pi k / n))`.
pub fn hann_window(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("window length must be at least 1"));
    }
    let step = 2.0 * std::f64::consts::PI / n as f64;
    Ok((0..n)
        .map(|k| 0.5 * (1.0 - (step * k as f64).cos()))
        .collect())
}

/// T x N matrix of non-negative linear magnitudes, stored row-major.
///
/// When produced by [`stft_magnitude`] the column count is tied to the
/// attached config (`num_bins = fft_size / 2 + 1`); matrices built directly
/// from values carry no config.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    values: Vec<f64>,
    num_frames: usize,
    num_bins: usize,
    config: Option<StftConfig>,
}

impl MagnitudeSpectrogram {
    /// Wraps a raw row-major matrix. Entries must be finite and
    /// non-negative.
    pub fn from_values(values: Vec<f64>, num_frames: usize, num_bins: usize) -> Result<Self> {
        if num_frames == 0 || num_bins == 0 {
            return Err(Error::invalid("spectrogram shape must be non-empty"));
        }
        if values.len() != num_frames * num_bins {
            return Err(Error::invalid(format!(
                "expected {} values for a {num_frames}x{num_bins} matrix, got {}",
                num_frames * num_bins,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "magnitude entries must be finite and non-negative",
            ));
        }
        Ok(Self {
            values,
            num_frames,
            num_bins,
            config: None,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, frame: usize, bin: usize) -> f64 {
        self.values[frame * self.num_bins + bin]
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn config(&self) -> Option<&StftConfig> {
        self.config.as_ref()
    }
}

/// Complex one-sided spectrum, T x N row-major, as produced by
/// [`stft_forward_full`].
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    values: Vec<Complex<f64>>,
    num_frames: usize,
    num_bins: usize,
    config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn values(&self) -> &[Complex<f64>] {
        &self.values
    }

    pub fn value(&self, frame: usize, bin: usize) -> Complex<f64> {
        self.values[frame * self.num_bins + bin]
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    /// Element-wise modulus.
    pub fn magnitude(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            values: self.values.iter().map(|c| c.norm()).collect(),
            num_frames: self.num_frames,
            num_bins: self.num_bins,
            config: Some(self.config),
        }
    }
}

fn check_analysis_input(x: &Waveform, cfg: &StftConfig) -> Result<()> {
    if x.len() < cfg.window_size() {
        return Err(Error::invalid(format!(
            "signal of {} samples is shorter than one window ({})",
            x.len(),
            cfg.window_size()
        )));
    }
    Ok(())
}

/// Complex one-sided STFT. Frames may be transformed in parallel; the result
/// is independent of the degree of parallelism because every frame owns its
/// output row.
pub fn stft_forward_full(x: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    check_analysis_input(x, cfg)?;
    let num_frames = cfg.num_frames(x.len())?;
    let num_bins = cfg.num_bins();
    let window = hann_window(cfg.window_size())?;
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size());
    let samples = x.samples();

    let rows: Vec<Vec<Complex<f64>>> = (0..num_frames)
        .into_par_iter()
        .map(|frame| {
            let start = frame * cfg.hop_size();
            let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size()];
            for (j, w) in window.iter().enumerate() {
                buf[j] = Complex::new(samples[start + j] * w, 0.0);
            }
            fft.process(&mut buf);
            buf.truncate(num_bins);
            buf
        })
        .collect();

    let mut values = Vec::with_capacity(num_frames * num_bins);
    for row in rows {
        values.extend_from_slice(&row);
    }
    Ok(ComplexSpectrogram {
        values,
        num_frames,
        num_bins,
        config: *cfg,
    })
}

/// Magnitude spectrogram: the element-wise modulus of the one-sided STFT.
pub fn stft_magnitude(x: &Waveform, cfg: &StftConfig) -> Result<MagnitudeSpectrogram> {
    Ok(stft_forward_full(x, cfg)?.magnitude())
}
