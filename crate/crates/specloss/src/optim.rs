//! Desk-scale gradient descent on raw waveform samples.
//!
//! The loop exists to demonstrate two things end to end: the analytic
//! waveform gradients actually drive the multi-resolution loss downhill,
//! and perceptual weighting changes where the leftover error lands on the
//! frequency axis. The parameter vector is the waveform itself; no model
//! sits in between.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::dsp::{stft_magnitude, StftConfig, Waveform};
use crate::loss::{mr_stft_loss, MultiResolutionConfig, MAGNITUDE_FLOOR};
use crate::lp::LpModel;
use crate::mask::{mask_response, MaskFile};
use crate::{Error, Result};

/// Exponential decay applied to the running gradient mean.
const MOMENT_DECAY: f64 = 0.9;

/// Standard deviation of the Gaussian noise the estimate starts from.
const INIT_STD: f64 = 0.1;

/// A completed optimization run: the fixed target, the final estimate, and
/// the loss trajectory including the initial point.
#[derive(Debug, Clone)]
pub struct OptimizeRun {
    target: Waveform,
    estimate: Waveform,
    steps: usize,
    step_size: f64,
    loss_history: Vec<f64>,
    mask: Option<MaskFile>,
}

impl OptimizeRun {
    /// The waveform the run tried to match.
    pub fn target(&self) -> &Waveform {
        &self.target
    }

    /// The estimate after the final update.
    pub fn estimate(&self) -> &Waveform {
        &self.estimate
    }

    /// Number of gradient updates performed.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// The fixed step size used for every update.
    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    /// Loss at the initial estimate followed by the loss after each update;
    /// always `steps + 1` entries.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    /// The perceptual mask the loss was weighted with, when one was used.
    pub fn mask(&self) -> Option<&MaskFile> {
        self.mask.as_ref()
    }

    /// Loss at the initial random estimate.
    pub fn initial_loss(&self) -> f64 {
        self.loss_history[0]
    }

    /// Loss after the final update.
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("non-empty history")
    }
}

/// Runs `steps` updates of moment-averaged gradient descent on a noise
/// initialization, minimizing the multi-resolution loss against `target`.
///
/// The estimate starts as seeded Gaussian noise with standard deviation
/// 0.1. Each update folds the current gradient into a running mean with
/// decay 0.9 and moves the estimate by `step_size` times that mean. The
/// returned history holds the initial loss plus one entry per update.
///
/// Returns [`Error::AbortedRun`] with the finite prefix of the history if
/// the estimate or the loss stops being finite mid-run.
pub fn optimize_waveform(
    target: &Waveform,
    mrc: &MultiResolutionConfig,
    mask: Option<&MaskFile>,
    steps: usize,
    step_size: f64,
    seed: u64,
) -> Result<OptimizeRun> {
    if steps == 0 {
        return Err(Error::invalid("steps must be at least 1"));
    }
    if !step_size.is_finite() || step_size <= 0.0 {
        return Err(Error::invalid(format!(
            "step size {step_size} must be finite and positive"
        )));
    }
    if target.len() < mrc.max_window_size() {
        return Err(Error::invalid(format!(
            "target length {} is shorter than the largest analysis window {}",
            target.len(),
            mrc.max_window_size()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal distribution");
    let mut estimate: Vec<f64> = (0..target.len()).map(|_| normal.sample(&mut rng)).collect();
    let mut moment = vec![0.0; target.len()];
    let mut loss_history = Vec::with_capacity(steps + 1);

    for step in 0..=steps {
        if estimate.iter().any(|v| !v.is_finite()) {
            return Err(Error::AbortedRun { step, loss_history });
        }
        let wave = Waveform::new(estimate.clone(), target.sample_rate())?;
        let want_gradient = step < steps;
        let report = mr_stft_loss(target, &wave, mrc, mask, want_gradient)?;
        if !report.total().is_finite() {
            return Err(Error::AbortedRun { step, loss_history });
        }
        loss_history.push(report.total());
        if !want_gradient {
            break;
        }
        let gradient = report.gradient().expect("gradient was requested");
        for ((m, e), &g) in moment.iter_mut().zip(estimate.iter_mut()).zip(gradient) {
            *m = MOMENT_DECAY * *m + (1.0 - MOMENT_DECAY) * g;
            *e -= step_size * *m;
        }
    }

    Ok(OptimizeRun {
        target: target.clone(),
        estimate: Waveform::new(estimate, target.sample_rate())?,
        steps,
        step_size,
        loss_history,
        mask: mask.cloned(),
    })
}

/// Splits the one-sided bins of `cfg` into the quartile with the highest
/// mask weights (spectral valleys) and the quartile with the lowest
/// (formant peaks), and returns the mean squared natural-log magnitude
/// error of `estimate` against `target` within each set, as
/// `(valley_err, formant_err)`.
///
/// The split depends only on the ordering of the mask response, so the
/// normalization range does not affect it. A degenerate (flat) response
/// carries no formant structure and is rejected.
pub fn valley_error_profile(
    target: &Waveform,
    estimate: &Waveform,
    lp: &LpModel,
    cfg: &StftConfig,
) -> Result<(f64, f64)> {
    if target.len() != estimate.len() {
        return Err(Error::invalid(format!(
            "signal lengths differ: {} vs {}",
            target.len(),
            estimate.len()
        )));
    }
    let mask = mask_response(lp, cfg, (0.5, 1.0))?;
    if mask.is_degenerate() {
        return Err(Error::invalid(
            "mask response is flat; valley and formant sets are undefined",
        ));
    }
    let mut order: Vec<usize> = (0..cfg.num_bins()).collect();
    order.sort_by(|&a, &b| {
        mask.weights()[a]
            .partial_cmp(&mask.weights()[b])
            .expect("mask weights are finite")
            .then(a.cmp(&b))
    });
    let quartile = (cfg.num_bins() / 4).max(1);
    let formant_bins = &order[..quartile];
    let valley_bins = &order[cfg.num_bins() - quartile..];

    let mx = stft_magnitude(target, cfg)?;
    let mxhat = stft_magnitude(estimate, cfg)?;
    let mean_sq = |bins: &[usize]| {
        let mut acc = 0.0;
        for t in 0..mx.num_frames() {
            for &f in bins {
                let d = mx.value(t, f).max(MAGNITUDE_FLOOR).ln()
                    - mxhat.value(t, f).max(MAGNITUDE_FLOOR).ln();
                acc += d * d;
            }
        }
        acc / (mx.num_frames() * bins.len()) as f64
    };
    Ok((mean_sq(valley_bins), mean_sq(formant_bins)))
}
