//! Log-spectral distance between a reference signal and a reconstruction.

use serde::Serialize;

use crate::dsp::{stft_magnitude, StftConfig, Waveform};
use crate::loss::MAGNITUDE_FLOOR;
use crate::{Error, Result};

/// The analysis resolution used when no explicit one is given: the middle
/// resolution of the default loss bank. Reported distances depend on the
/// resolution, so comparisons should hold it fixed.
pub fn default_lsd_config() -> StftConfig {
    StftConfig::new(1024, 600, 120).expect("default LSD resolution is valid")
}

/// Per-frame and mean log-spectral distance, in dB.
#[derive(Debug, Clone, Serialize)]
pub struct LsdReport {
    per_frame: Vec<f64>,
    mean: f64,
    config: StftConfig,
}

impl LsdReport {
    /// One distance per analysis frame, in dB.
    pub fn per_frame(&self) -> &[f64] {
        &self.per_frame
    }

    /// Arithmetic mean of the per-frame distances, in dB.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// The resolution the report was computed at.
    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("LSD report serialization");
        out.push('\n');
        out
    }
}

/// Computes the per-frame RMS of dB log-magnitude differences between `x`
/// and `xhat` at resolution `cfg`, with magnitudes floored at
/// [`MAGNITUDE_FLOOR`].
///
/// Frame `t` contributes `sqrt((1/N) * sum_f (20*log10(|X_tf]| /
/// |Xhat_tf|))^2)`; the report's mean averages the frames.
pub fn log_spectral_distance(x: &Waveform, xhat: &Waveform, cfg: &StftConfig) -> Result<LsdReport> {
    if x.len() != xhat.len() {
        return Err(Error::invalid(format!(
            "signal lengths differ: {} vs {}",
            x.len(),
            xhat.len()
        )));
    }
    let mx = stft_magnitude(x, cfg)?;
    let mxhat = stft_magnitude(xhat, cfg)?;
    let bins = cfg.num_bins() as f64;
    let per_frame: Vec<f64> = (0..mx.num_frames())
        .map(|t| {
            let mut sum_sq = 0.0;
            for f in 0..cfg.num_bins() {
                let a = mx.value(t, f).max(MAGNITUDE_FLOOR);
                let b = mxhat.value(t, f).max(MAGNITUDE_FLOOR);
                let d = 20.0 * (a.log10() - b.log10());
                sum_sq += d * d;
            }
            (sum_sq / bins).sqrt()
        })
        .collect();
    let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
    Ok(LsdReport {
        per_frame,
        mean,
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.random_range(-0.5..0.5)).collect(), 24000).unwrap()
    }

    fn scaled(x: &Waveform, c: f64) -> Waveform {
        Waveform::new(x.samples().iter().map(|&s| c * s).collect(), x.sample_rate()).unwrap()
    }

    #[test]
    fn identical_signals_have_zero_distance() {
        let x = random_wave(4000, 1);
        let report = log_spectral_distance(&x, &x, &default_lsd_config()).unwrap();
        assert!(report.per_frame().iter().all(|&d| d == 0.0));
        assert_eq!(report.mean(), 0.0);
    }

    #[test]
    fn halved_signal_is_six_db_away() {
        let x = random_wave(4000, 2);
        let expected = 20.0 * 2.0f64.log10();
        let report = log_spectral_distance(&x, &scaled(&x, 0.5), &default_lsd_config()).unwrap();
        for (t, &d) in report.per_frame().iter().enumerate() {
            assert!((d - expected).abs() < 1e-9, "frame {t}: {d} vs {expected}");
        }
        assert!((report.mean() - expected).abs() < 1e-9);
    }

    #[test]
    fn matches_direct_per_bin_oracle() {
        let cfg = StftConfig::new(256, 200, 64).unwrap();
        let x = random_wave(2000, 3);
        let xhat = random_wave(2000, 4);
        let report = log_spectral_distance(&x, &xhat, &cfg).unwrap();
        let mx = stft_magnitude(&x, &cfg).unwrap();
        let mxhat = stft_magnitude(&xhat, &cfg).unwrap();
        for t in 0..mx.num_frames() {
            let mut acc = 0.0;
            for f in 0..cfg.num_bins() {
                let ratio = mx.value(t, f).max(1e-7) / mxhat.value(t, f).max(1e-7);
                acc += (20.0 * ratio.log10()).powi(2);
            }
            let expected = (acc / cfg.num_bins() as f64).sqrt();
            let got = report.per_frame()[t];
            assert!((got - expected).abs() < 1e-10, "frame {t}: {got} vs {expected}");
        }
        let expected_mean =
            report.per_frame().iter().sum::<f64>() / report.per_frame().len() as f64;
        assert_eq!(report.mean(), expected_mean);
    }

    #[test]
    fn distance_is_symmetric() {
        let x = random_wave(3000, 5);
        let xhat = random_wave(3000, 6);
        let cfg = default_lsd_config();
        let forward = log_spectral_distance(&x, &xhat, &cfg).unwrap();
        let backward = log_spectral_distance(&xhat, &x, &cfg).unwrap();
        assert_eq!(forward.per_frame(), backward.per_frame());
        assert_eq!(forward.mean(), backward.mean());
    }

    #[test]
    fn scaling_follows_the_log_law() {
        let x = random_wave(3000, 7);
        let cfg = default_lsd_config();
        for c in [0.25, 0.5, 2.0, 3.7] {
            let expected = (20.0 * f64::log10(c)).abs();
            let report = log_spectral_distance(&x, &scaled(&x, c), &cfg).unwrap();
            for (t, &d) in report.per_frame().iter().enumerate() {
                assert!((d - expected).abs() < 1e-9, "c={c} frame {t}: {d} vs {expected}");
            }
        }
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let err = log_spectral_distance(
            &random_wave(2000, 8),
            &random_wave(2001, 9),
            &default_lsd_config(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn too_short_signals_are_rejected() {
        let err = log_spectral_distance(
            &random_wave(100, 10),
            &random_wave(100, 11),
            &default_lsd_config(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn report_round_trips_through_json() {
        let x = random_wave(3000, 12);
        let report = log_spectral_distance(&x, &random_wave(3000, 13), &default_lsd_config()).unwrap();
        let json = report.to_json();
        assert!(json.ends_with('\n'));
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(
            value["per_frame"].as_array().unwrap().len(),
            report.per_frame().len()
        );
        assert!((value["mean"].as_f64().unwrap() - report.mean()).abs() < 1e-12);
        assert_eq!(value["config"]["fft_size"].as_u64(), Some(1024));
        assert_eq!(value["config"]["window_size"].as_u64(), Some(600));
        assert_eq!(value["config"]["hop_size"].as_u64(), Some(120));
    }
}
