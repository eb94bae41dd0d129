//! Time-invariant noise-shaping filter pair built on a shared LP model.
//!
//! The analysis side removes the modeled spectral envelope from a signal,
//! leaving a residual; the synthesis side is its exact inverse. Both run
//! from zero initial history, so analysis followed by synthesis (or the
//! reverse) reconstructs the input sample for sample.

use crate::dsp::Waveform;
use crate::lp::LpModel;
use crate::{Error, Result};

/// Streaming state for one direction of the noise-shaping filter pair.
///
/// Holds the `lp.order()` most recent inputs (analysis) or outputs
/// (synthesis), newest first, so long signals can be filtered in chunks.
/// A given state tracks a single direction; interleaving
/// [`analyze_sample`](Self::analyze_sample) and
/// [`synthesize_sample`](Self::synthesize_sample) calls on one instance
/// mixes the two history conventions and produces meaningless output.
#[derive(Debug, Clone)]
pub struct FilterState {
    lp: LpModel,
    history: Vec<f64>,
}

impl FilterState {
    /// Creates a state with zero history for `lp`.
    pub fn new(lp: LpModel) -> Self {
        let history = vec![0.0; lp.order()];
        Self { lp, history }
    }

    /// The model driving this filter.
    pub fn lp(&self) -> &LpModel {
        &self.lp
    }

    /// The retained samples, newest first; `history()[k]` sits at delay
    /// `k + 1`.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    fn shift_in(&mut self, value: f64) {
        if !self.history.is_empty() {
            self.history.rotate_right(1);
            self.history[0] = value;
        }
    }

    /// Advances the FIR analysis recursion by one input sample and returns
    /// the residual sample `e[n] = x[n] - sum_k alpha_k * x[n - k]`.
    pub fn analyze_sample(&mut self, x: f64) -> f64 {
        let mut acc = x;
        for (k, &a) in self.lp.coefficients().iter().enumerate() {
            acc -= a * self.history[k];
        }
        self.shift_in(x);
        acc
    }

    /// Advances the all-pole synthesis recursion by one residual sample and
    /// returns the output sample `y[n] = e[n] + sum_k alpha_k * y[n - k]`.
    ///
    /// Stability is the caller's concern at this level; the whole-signal
    /// [`synthesis_filter`] checks the model up front.
    pub fn synthesize_sample(&mut self, e: f64) -> f64 {
        let mut acc = e;
        for (k, &a) in self.lp.coefficients().iter().enumerate() {
            acc += a * self.history[k];
        }
        self.shift_in(acc);
        acc
    }
}

/// Runs the FIR analysis filter over `x` from zero history and returns the
/// residual signal.
pub fn analysis_filter(x: &Waveform, lp: &LpModel) -> Result<Waveform> {
    let mut state = FilterState::new(lp.clone());
    let residual: Vec<f64> = x.samples().iter().map(|&s| state.analyze_sample(s)).collect();
    Waveform::new(residual, x.sample_rate())
}

/// Runs the all-pole synthesis filter over `e` from zero history.
///
/// Returns [`Error::NonMinimumPhase`] when the model's recursion is
/// unstable, since the output would grow without bound.
pub fn synthesis_filter(e: &Waveform, lp: &LpModel) -> Result<Waveform> {
    if !lp.is_minimum_phase() {
        return Err(Error::NonMinimumPhase {
            order: lp.order(),
            detail: "synthesis recursion is unstable for this model".to_string(),
        });
    }
    let mut state = FilterState::new(lp.clone());
    let output: Vec<f64> = e.samples().iter().map(|&s| state.synthesize_sample(s)).collect();
    Waveform::new(output, e.sample_rate())
}
