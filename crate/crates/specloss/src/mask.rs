//! Perceptual spectral mask: the magnitude response of the LP analysis
//! filter `W(z) = 1 - sum_k alpha_k z^{-k}`, sampled on the one-sided FFT
//! bin grid and affinely rescaled into a weight range (0.5 to 1.0 by
//! default).
//!
//! The response is small near formants (poles of `1/A(z)`) and large in
//! spectral valleys, so the normalized weights penalize valley errors more
//! than formant errors.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::lp::{self, LpModel, LsfVector};

/// Relative spread below which the raw response is treated as constant and
/// the mask degenerates to all-`hi`.
const DEGENERATE_SPREAD: f64 = 1e-12;

/// One normalized weight row for a specific STFT resolution.
#[derive(Debug, Clone)]
pub struct SpectralMask {
    weights: Vec<f64>,
    config: StftConfig,
    lp: LpModel,
    norm_range: (f64, f64),
    degenerate: bool,
}

impl SpectralMask {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn lp(&self) -> &LpModel {
        &self.lp
    }

    pub fn norm_range(&self) -> (f64, f64) {
        self.norm_range
    }

    /// True when the raw response was constant and the affine rescale was
    /// skipped in favor of an all-`hi` row.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// T x N weight matrix, every row identical to a mask row.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    values: Vec<f64>,
    num_frames: usize,
    num_bins: usize,
}

impl WeightMatrix {
    /// Wraps a raw row-major matrix of positive finite weights.
    pub fn from_values(values: Vec<f64>, num_frames: usize, num_bins: usize) -> Result<Self> {
        if num_frames == 0 || num_bins == 0 {
            return Err(Error::invalid("weight matrix shape must be non-empty"));
        }
        if values.len() != num_frames * num_bins {
            return Err(Error::invalid(format!(
                "expected {} values for a {num_frames}x{num_bins} matrix, got {}",
                num_frames * num_bins,
                values.len()
            )));
        }
        if values.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::invalid("weights must be finite and positive"));
        }
        Ok(Self {
            values,
            num_frames,
            num_bins,
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
}

/// Evaluates `|W(e^{j w_f})|` at `w_f = 2 pi f / fft_size` for the
/// one-sided bins, then rescales so the minimum lands exactly on `lo` and
/// the maximum exactly on `hi`. A constant raw response yields an all-`hi`
/// mask flagged as degenerate.
pub fn mask_response(
    lp: &LpModel,
    cfg: &StftConfig,
    norm_range: (f64, f64),
) -> Result<SpectralMask> {
    let (lo, hi) = norm_range;
    if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo >= hi {
        return Err(Error::invalid(format!(
            "norm range ({lo}, {hi}) must satisfy 0 < lo < hi"
        )));
    }
    let raw: Vec<f64> = (0..cfg.num_bins())
        .map(|f| {
            let w = 2.0 * std::f64::consts::PI * f as f64 / cfg.fft_size() as f64;
            let mut acc = Complex::new(1.0, 0.0);
            for (k, &a) in lp.coefficients().iter().enumerate() {
                let angle = -((k + 1) as f64) * w;
                acc -= a * Complex::new(angle.cos(), angle.sin());
            }
            acc.norm()
        })
        .collect();
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = max - min;
    if spread <= DEGENERATE_SPREAD * max {
        return Ok(SpectralMask {
            weights: vec![hi; raw.len()],
            config: *cfg,
            lp: lp.clone(),
            norm_range,
            degenerate: true,
        });
    }
    let weights = raw
        .iter()
        .map(|&v| {
            // The extremes are mapped by equality so they hit lo and hi
            // exactly regardless of rounding in the affine form.
            if v == min {
                lo
            } else if v == max {
                hi
            } else {
                ((lo * (max - v) + hi * (v - min)) / spread).clamp(lo, hi)
            }
        })
        .collect();
    Ok(SpectralMask {
        weights,
        config: *cfg,
        lp: lp.clone(),
        norm_range,
        degenerate: false,
    })
}

/// Repeats the time-invariant mask row for `num_frames` frames.
pub fn build_weight_matrix(mask: &SpectralMask, num_frames: usize) -> Result<WeightMatrix> {
    if num_frames == 0 {
        return Err(Error::invalid("weight matrix needs at least one frame"));
    }
    let n = mask.weights().len();
    let mut values = Vec::with_capacity(num_frames * n);
    for _ in 0..num_frames {
        values.extend_from_slice(mask.weights());
    }
    WeightMatrix::from_values(values, num_frames, n)
}

/// On-disk mask description. Weight rows are recomputed from the LP
/// coefficients at load time, so one file serves every fft size.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MaskFileRepr {
    order: usize,
    lp_coefficients: Vec<f64>,
    norm_range: [f64; 2],
    sample_rate: u32,
    source: String,
}

/// Validated mask file contents: the LP model, normalization range, and the
/// sample rate the model was designed at.
#[derive(Debug, Clone)]
pub struct MaskFile {
    lp: LpModel,
    norm_range: (f64, f64),
    sample_rate: u32,
}

impl MaskFile {
    pub fn new(lp: LpModel, norm_range: (f64, f64), sample_rate: u32) -> Result<Self> {
        let (lo, hi) = norm_range;
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo >= hi {
            return Err(Error::invalid(format!(
                "norm range ({lo}, {hi}) must satisfy 0 < lo < hi"
            )));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        Ok(Self {
            lp,
            norm_range,
            sample_rate,
        })
    }

    pub fn lp(&self) -> &LpModel {
        &self.lp
    }

    pub fn norm_range(&self) -> (f64, f64) {
        self.norm_range
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// The mask row for one STFT resolution.
    pub fn mask_for(&self, cfg: &StftConfig) -> Result<SpectralMask> {
        mask_response(&self.lp, cfg, self.norm_range)
    }

    pub fn to_json(&self) -> String {
        let repr = MaskFileRepr {
            order: self.lp.order(),
            lp_coefficients: self.lp.coefficients().to_vec(),
            norm_range: [self.norm_range.0, self.norm_range.1],
            sample_rate: self.sample_rate,
            source: self.lp.source().to_string(),
        };
        let mut out = serde_json::to_string_pretty(&repr).expect("mask serialization");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: MaskFileRepr = serde_json::from_str(text)
            .map_err(|e| Error::MalformedMask(e.to_string()))?;
        if repr.order == 0 || repr.order != repr.lp_coefficients.len() {
            return Err(Error::MalformedMask(format!(
                "order {} does not match {} lp_coefficients",
                repr.order,
                repr.lp_coefficients.len()
            )));
        }
        if repr.lp_coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::MalformedMask(
                "lp_coefficients must be finite".into(),
            ));
        }
        let [lo, hi] = repr.norm_range;
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo >= hi {
            return Err(Error::MalformedMask(format!(
                "norm_range [{lo}, {hi}] must satisfy 0 < lo < hi"
            )));
        }
        if repr.sample_rate == 0 {
            return Err(Error::MalformedMask("sample_rate must be positive".into()));
        }
        let lp = LpModel::new(repr.lp_coefficients, repr.source)
            .map_err(|e| Error::MalformedMask(e.to_string()))?;
        Ok(Self {
            lp,
            norm_range: (lo, hi),
            sample_rate: repr.sample_rate,
        })
    }
}

/// Per-corpus LP design outcome: the averaged model plus bookkeeping about
/// utterances that failed LP extraction and were skipped.
#[derive(Debug, Clone)]
pub struct CorpusDesign {
    pub model: LpModel,
    pub used: usize,
    pub skipped: Vec<usize>,
}

/// Averages per-utterance LP spectra in the LSF domain: each utterance is
/// mean-removed, autocorrelated over its whole length, fit with
/// Levinson-Durbin at `order`, and converted to LSFs; the element-wise LSF
/// mean converts back to the final model. Utterances whose fit fails are
/// skipped and reported.
pub fn design_lp_from_corpus(utterances: &[Waveform], order: usize) -> Result<CorpusDesign> {
    if utterances.is_empty() {
        return Err(Error::invalid("corpus must contain at least one utterance"));
    }
    if order == 0 {
        return Err(Error::invalid("LP order must be at least 1"));
    }
    let fits: Vec<Result<LsfVector>> = utterances
        .par_iter()
        .map(|u| utterance_lsf(u, order))
        .collect();
    let mut vectors = Vec::with_capacity(fits.len());
    let mut skipped = Vec::new();
    for (i, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(v) => vectors.push(v),
            Err(_) => skipped.push(i),
        }
    }
    if vectors.is_empty() {
        return Err(Error::invalid(
            "no utterance in the corpus admitted a stable LP fit",
        ));
    }
    let mean = lp::average_lsf(&vectors)?;
    Ok(CorpusDesign {
        model: lp::lsf_to_lp(&mean)?,
        used: vectors.len(),
        skipped,
    })
}

fn utterance_lsf(u: &Waveform, order: usize) -> Result<LsfVector> {
    if u.is_empty() {
        return Err(Error::invalid("empty utterance"));
    }
    let mean = u.samples().iter().sum::<f64>() / u.len() as f64;
    let centered = Waveform::new(
        u.samples().iter().map(|s| s - mean).collect(),
        u.sample_rate(),
    )?;
    let r = lp::autocorrelate(&centered, order)?;
    let (model, _) = lp::levinson_durbin(&r, order)?;
    lp::lp_to_lsf(&model)
}
