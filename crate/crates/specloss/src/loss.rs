//! Spectral losses: spectral convergence and log STFT magnitude, their
//! perceptually weighted forms, the multi-resolution combination, and the
//! least-squares GAN terms.
//!
//! `mr_stft_loss` can also return the analytic gradient of the total loss
//! with respect to the estimated waveform, back-propagated through the
//! magnitude, the DFT, the analysis window, and the overlap of frames.

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::dsp::{
    hann_window, stft_forward_full, stft_magnitude, ComplexSpectrogram, MagnitudeSpectrogram,
    StftConfig, Waveform,
};
use crate::error::{Error, Result};
use crate::mask::{build_weight_matrix, MaskFile, WeightMatrix};

/// Floor applied to linear magnitudes before any logarithm.
pub const MAGNITUDE_FLOOR: f64 = 1e-7;

/// Guard on the spectral-convergence denominator; a reference spectrogram
/// with Frobenius norm at or below this is rejected.
pub const DENOMINATOR_GUARD: f64 = 1e-12;

/// Default balance between the multi-resolution and adversarial terms.
pub const DEFAULT_LAMBDA_ADV: f64 = 4.0;

/// The set of STFT resolutions averaged by the multi-resolution loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiResolutionConfig {
    resolutions: Vec<StftConfig>,
}

impl MultiResolutionConfig {
    pub fn new(resolutions: Vec<StftConfig>) -> Result<Self> {
        if resolutions.is_empty() {
            return Err(Error::invalid("need at least one STFT resolution"));
        }
        Ok(Self { resolutions })
    }

    pub fn resolutions(&self) -> &[StftConfig] {
        &self.resolutions
    }

    /// Largest window among the resolutions, the minimum usable signal
    /// length.
    pub fn max_window_size(&self) -> usize {
        self.resolutions
            .iter()
            .map(|c| c.window_size())
            .max()
            .unwrap_or(0)
    }
}

impl Default for MultiResolutionConfig {
    /// Three resolutions: (fft, window, hop) = (512, 240, 50),
    /// (1024, 600, 120), (2048, 1200, 240).
    fn default() -> Self {
        Self {
            resolutions: vec![
                StftConfig::new(512, 240, 50).expect("default resolution"),
                StftConfig::new(1024, 600, 120).expect("default resolution"),
                StftConfig::new(2048, 1200, 240).expect("default resolution"),
            ],
        }
    }
}

/// Loss values at one resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolutionLoss {
    pub fft: usize,
    pub sc: f64,
    pub mag: f64,
}

/// Multi-resolution loss breakdown, with the optional waveform gradient.
/// The gradient is never part of the JSON form.
#[derive(Debug, Clone, Serialize)]
pub struct LossReport {
    #[serde(rename = "resolutions")]
    per_resolution: Vec<ResolutionLoss>,
    total: f64,
    weighted: bool,
    #[serde(skip)]
    gradient: Option<Vec<f64>>,
}

impl LossReport {
    pub fn per_resolution(&self) -> &[ResolutionLoss] {
        &self.per_resolution
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn weighted(&self) -> bool {
        self.weighted
    }

    pub fn gradient(&self) -> Option<&[f64]> {
        self.gradient.as_deref()
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("loss report serialization");
        out.push('\n');
        out
    }
}

fn check_pair(x: &MagnitudeSpectrogram, xhat: &MagnitudeSpectrogram) -> Result<()> {
    if x.num_frames() != xhat.num_frames() || x.num_bins() != xhat.num_bins() {
        return Err(Error::invalid(format!(
            "spectrogram shapes differ: {}x{} vs {}x{}",
            x.num_frames(),
            x.num_bins(),
            xhat.num_frames(),
            xhat.num_bins()
        )));
    }
    if let (Some(a), Some(b)) = (x.config(), xhat.config()) {
        if a != b {
            return Err(Error::invalid("spectrogram configs differ"));
        }
    }
    Ok(())
}

fn check_weights(x: &MagnitudeSpectrogram, w: &WeightMatrix) -> Result<()> {
    if w.num_frames() != x.num_frames() || w.num_bins() != x.num_bins() {
        return Err(Error::invalid(format!(
            "weight matrix shape {}x{} does not match spectrograms {}x{}",
            w.num_frames(),
            w.num_bins(),
            x.num_frames(),
            x.num_bins()
        )));
    }
    if w.values().iter().any(|&v| v > 1.0) {
        return Err(Error::invalid("weights must lie in (0, 1]"));
    }
    Ok(())
}

fn sc_core(
    x: &MagnitudeSpectrogram,
    xhat: &MagnitudeSpectrogram,
    w: Option<&WeightMatrix>,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (&m, &mh)) in x.values().iter().zip(xhat.values()).enumerate() {
        let weight = w.map_or(1.0, |w| w.values()[i]);
        let d = weight * (m - mh);
        num += d * d;
        den += m * m;
    }
    let den = den.sqrt();
    if den <= DENOMINATOR_GUARD {
        return Err(Error::DivisionGuard(den));
    }
    Ok(num.sqrt() / den)
}

fn mag_core(
    x: &MagnitudeSpectrogram,
    xhat: &MagnitudeSpectrogram,
    w: Option<&WeightMatrix>,
) -> Result<f64> {
    let cells = x.values().len() as f64;
    let mut acc = 0.0;
    for (i, (&m, &mh)) in x.values().iter().zip(xhat.values()).enumerate() {
        let weight = w.map_or(1.0, |w| w.values()[i]);
        let d = m.max(MAGNITUDE_FLOOR).ln() - mh.max(MAGNITUDE_FLOOR).ln();
        acc += (weight * d).abs();
    }
    Ok(acc / cells)
}

/// Spectral convergence: Frobenius norm of the magnitude difference over
/// the Frobenius norm of the reference.
pub fn spectral_convergence(x: &MagnitudeSpectrogram, xhat: &MagnitudeSpectrogram) -> Result<f64> {
    check_pair(x, xhat)?;
    sc_core(x, xhat, None)
}

/// Log STFT magnitude: mean absolute natural-log magnitude difference over
/// all cells, with magnitudes floored at [`MAGNITUDE_FLOOR`].
pub fn log_stft_magnitude(x: &MagnitudeSpectrogram, xhat: &MagnitudeSpectrogram) -> Result<f64> {
    check_pair(x, xhat)?;
    mag_core(x, xhat, None)
}

/// Weighted spectral convergence: the numerator difference is scaled
/// element-wise by `w`; the denominator stays unweighted.
pub fn weighted_spectral_convergence(
    x: &MagnitudeSpectrogram,
    xhat: &MagnitudeSpectrogram,
    w: &WeightMatrix,
) -> Result<f64> {
    check_pair(x, xhat)?;
    check_weights(x, w)?;
    sc_core(x, xhat, Some(w))
}

/// Weighted log STFT magnitude: mean of `|w * (ln|X| - ln|X_hat|)|` with
/// the same floor as the unweighted form.
pub fn weighted_log_stft_magnitude(
    x: &MagnitudeSpectrogram,
    xhat: &MagnitudeSpectrogram,
    w: &WeightMatrix,
) -> Result<f64> {
    check_pair(x, xhat)?;
    check_weights(x, w)?;
    mag_core(x, xhat, Some(w))
}

/// Gradient of `sc + mag` at one resolution with respect to the estimated
/// magnitudes, flat T x N.
fn magnitude_gradient(
    x: &MagnitudeSpectrogram,
    xhat: &MagnitudeSpectrogram,
    w: Option<&WeightMatrix>,
) -> Vec<f64> {
    let cells = x.values().len() as f64;
    let mut sc_num_sq = 0.0;
    let mut den_sq = 0.0;
    for (i, (&m, &mh)) in x.values().iter().zip(xhat.values()).enumerate() {
        let weight = w.map_or(1.0, |w| w.values()[i]);
        let d = weight * (m - mh);
        sc_num_sq += d * d;
        den_sq += m * m;
    }
    let sc_num = sc_num_sq.sqrt();
    let den = den_sq.sqrt();

    x.values()
        .iter()
        .zip(xhat.values())
        .enumerate()
        .map(|(i, (&m, &mh))| {
            let weight = w.map_or(1.0, |w| w.values()[i]);
            // d(sc)/dM_hat; zero at the non-differentiable point sc = 0.
            let sc_grad = if sc_num > 0.0 {
                weight * weight * (mh - m) / (sc_num * den)
            } else {
                0.0
            };
            // d(mag)/dM_hat; zero where the floor absorbs the magnitude
            // and at the kink of the absolute value.
            let mag_grad = if mh > MAGNITUDE_FLOOR {
                let d = m.max(MAGNITUDE_FLOOR).ln() - mh.max(MAGNITUDE_FLOOR).ln();
                if d == 0.0 {
                    0.0
                } else {
                    -weight * d.signum() / (cells * mh)
                }
            } else {
                0.0
            };
            sc_grad + mag_grad
        })
        .collect()
}

/// Back-propagates a per-cell magnitude gradient to the time domain and
/// overlap-adds it into `out`, scaled by `scale`.
///
/// Per frame, the chain is: magnitude to complex bin
/// (`g_f = dL/dM_hat * X_hat_f / |X_hat_f|`), one-sided bins to samples
/// (unnormalized inverse DFT of the zero-padded gradient row, real part),
/// then the analysis window. The overlap-add runs frame by frame so the
/// result does not depend on thread scheduling.
fn accumulate_waveform_gradient(
    dldm: &[f64],
    spec: &ComplexSpectrogram,
    out: &mut [f64],
    scale: f64,
) -> Result<()> {
    let cfg = spec.config();
    let n = cfg.fft_size();
    let num_bins = spec.num_bins();
    let window = hann_window(cfg.window_size())?;
    let ifft = FftPlanner::new().plan_fft_inverse(n);

    let frames: Vec<Vec<Complex<f64>>> = (0..spec.num_frames())
        .into_par_iter()
        .map(|t| {
            let mut buf = vec![Complex::new(0.0, 0.0); n];
            for f in 0..num_bins {
                let xh = spec.value(t, f);
                let norm = xh.norm();
                if norm > 0.0 {
                    buf[f] = xh * (dldm[t * num_bins + f] / norm);
                }
            }
            ifft.process(&mut buf);
            buf
        })
        .collect();

    for (t, frame) in frames.iter().enumerate() {
        let start = t * cfg.hop_size();
        for (j, &wj) in window.iter().enumerate() {
            out[start + j] += scale * wj * frame[j].re;
        }
    }
    Ok(())
}

/// Multi-resolution STFT loss `(1/M) * sum_m (sc_m + mag_m)`, weighted per
/// resolution by the mask recomputed at that resolution's fft size when a
/// mask is given. With `want_gradient`, also returns the analytic
/// d(total)/d(xhat).
pub fn mr_stft_loss(
    x: &Waveform,
    xhat: &Waveform,
    mrc: &MultiResolutionConfig,
    mask: Option<&MaskFile>,
    want_gradient: bool,
) -> Result<LossReport> {
    if x.len() != xhat.len() {
        return Err(Error::invalid(format!(
            "waveform lengths differ: {} vs {}",
            x.len(),
            xhat.len()
        )));
    }
    let m_count = mrc.resolutions().len() as f64;
    let mut per_resolution = Vec::with_capacity(mrc.resolutions().len());
    let mut total = 0.0;
    let mut gradient = want_gradient.then(|| vec![0.0; xhat.len()]);

    for cfg in mrc.resolutions() {
        let ref_mag = stft_magnitude(x, cfg)?;
        let est_spec = stft_forward_full(xhat, cfg)?;
        let est_mag = est_spec.magnitude();
        let weights = match mask {
            Some(file) => {
                let row = file.mask_for(cfg)?;
                Some(build_weight_matrix(&row, ref_mag.num_frames())?)
            }
            None => None,
        };
        let w = weights.as_ref();
        if let Some(w) = w {
            check_weights(&ref_mag, w)?;
        }
        let sc = sc_core(&ref_mag, &est_mag, w)?;
        let mag = mag_core(&ref_mag, &est_mag, w)?;
        per_resolution.push(ResolutionLoss {
            fft: cfg.fft_size(),
            sc,
            mag,
        });
        total += (sc + mag) / m_count;
        if let Some(grad) = gradient.as_mut() {
            let dldm = magnitude_gradient(&ref_mag, &est_mag, w);
            accumulate_waveform_gradient(&dldm, &est_spec, grad, 1.0 / m_count)?;
        }
    }
    if let Some(grad) = gradient.as_ref() {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericalDegeneracy(
                "non-finite waveform gradient".into(),
            ));
        }
    }
    Ok(LossReport {
        per_resolution,
        total,
        weighted: mask.is_some(),
        gradient,
    })
}

/// Inputs for the GAN loss terms: per-time-step discriminator scores and
/// the balance weight.
#[derive(Debug, Clone)]
pub struct GanLossInputs {
    disc_outputs_fake: Vec<f64>,
    disc_outputs_real: Option<Vec<f64>>,
    lambda_adv: f64,
}

impl GanLossInputs {
    pub fn new(disc_outputs_fake: Vec<f64>) -> Result<Self> {
        if disc_outputs_fake.is_empty() {
            return Err(Error::invalid("discriminator outputs must be non-empty"));
        }
        Ok(Self {
            disc_outputs_fake,
            disc_outputs_real: None,
            lambda_adv: DEFAULT_LAMBDA_ADV,
        })
    }

    pub fn with_real(mut self, disc_outputs_real: Vec<f64>) -> Result<Self> {
        if disc_outputs_real.is_empty() {
            return Err(Error::invalid("discriminator outputs must be non-empty"));
        }
        self.disc_outputs_real = Some(disc_outputs_real);
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda_adv: f64) -> Result<Self> {
        if !lambda_adv.is_finite() || lambda_adv < 0.0 {
            return Err(Error::invalid("lambda_adv must be non-negative"));
        }
        self.lambda_adv = lambda_adv;
        Ok(self)
    }

    pub fn lambda_adv(&self) -> f64 {
        self.lambda_adv
    }

    pub fn adversarial_loss(&self) -> f64 {
        adversarial_generator_loss(&self.disc_outputs_fake).expect("validated non-empty")
    }

    pub fn discriminator_loss(&self) -> Result<f64> {
        let real = self
            .disc_outputs_real
            .as_ref()
            .ok_or_else(|| Error::invalid("discriminator loss needs real-sample outputs"))?;
        discriminator_loss(real, &self.disc_outputs_fake)
    }
}

/// Least-squares adversarial generator loss: mean of `(1 - D_t)^2`.
pub fn adversarial_generator_loss(disc_outputs_fake: &[f64]) -> Result<f64> {
    if disc_outputs_fake.is_empty() {
        return Err(Error::invalid("discriminator outputs must be non-empty"));
    }
    let n = disc_outputs_fake.len() as f64;
    Ok(disc_outputs_fake.iter().map(|d| (1.0 - d) * (1.0 - d)).sum::<f64>() / n)
}

/// Least-squares discriminator loss: mean of `(1 - D_real)^2` plus mean of
/// `D_fake^2`.
pub fn discriminator_loss(disc_outputs_real: &[f64], disc_outputs_fake: &[f64]) -> Result<f64> {
    if disc_outputs_real.is_empty() || disc_outputs_fake.is_empty() {
        return Err(Error::invalid("discriminator outputs must be non-empty"));
    }
    let real = disc_outputs_real
        .iter()
        .map(|d| (1.0 - d) * (1.0 - d))
        .sum::<f64>()
        / disc_outputs_real.len() as f64;
    let fake =
        disc_outputs_fake.iter().map(|d| d * d).sum::<f64>() / disc_outputs_fake.len() as f64;
    Ok(real + fake)
}

/// Total generator loss: `mr + lambda_adv * adv`.
pub fn combined_generator_loss(mr_total: f64, adv: f64, lambda_adv: f64) -> Result<f64> {
    if !lambda_adv.is_finite() || lambda_adv < 0.0 {
        return Err(Error::invalid("lambda_adv must be non-negative"));
    }
    Ok(mr_total + lambda_adv * adv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::LpModel;
    use crate::mask::mask_response;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn mat(values: &[f64], t: usize, n: usize) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram::from_values(values.to_vec(), t, n).unwrap()
    }

    fn random_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.random_range(-0.5..0.5)).collect(), 24000).unwrap()
    }

    fn single_res(fft: usize, window: usize, hop: usize) -> MultiResolutionConfig {
        MultiResolutionConfig::new(vec![StftConfig::new(fft, window, hop).unwrap()]).unwrap()
    }

    /// A mask file whose response row is identically 1.0 (identity
    /// predictor, degenerate all-hi).
    fn unit_mask() -> MaskFile {
        let lp = LpModel::new(vec![0.0, 0.0], "direct").unwrap();
        MaskFile::new(lp, (0.5, 1.0), 24000).unwrap()
    }

    fn resonant_mask(order_seed: u64) -> MaskFile {
        let mut rng = ChaCha8Rng::seed_from_u64(order_seed);
        let ks: Vec<f64> = (0..10)
            .map(|i| rng.random_range(-0.9..0.9) * 0.8f64.powi(i))
            .collect();
        let lp = LpModel::from_reflection_coefficients(&ks, "direct").unwrap();
        MaskFile::new(lp, (0.5, 1.0), 24000).unwrap()
    }

    #[test]
    fn sc_identical_is_zero() {
        let x = mat(&[1.0, 2.0, 3.0, 4.0], 2, 2);
        assert_eq!(spectral_convergence(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn sc_zero_estimate_is_one() {
        let x = mat(&[3.0, 4.0], 1, 2);
        let z = mat(&[0.0, 0.0], 1, 2);
        assert_eq!(spectral_convergence(&x, &z).unwrap(), 1.0);
    }

    #[test]
    fn sc_hand_values() {
        let x = mat(&[3.0, 4.0], 1, 2);
        let partial = mat(&[3.0, 0.0], 1, 2);
        assert!((spectral_convergence(&x, &partial).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sc_rejects_zero_reference_and_shape_mismatch() {
        let z = mat(&[0.0, 0.0], 1, 2);
        let x = mat(&[3.0, 4.0], 1, 2);
        assert!(matches!(
            spectral_convergence(&z, &x),
            Err(Error::DivisionGuard(_))
        ));
        let wide = mat(&[1.0, 1.0, 1.0], 1, 3);
        assert!(matches!(
            spectral_convergence(&x, &wide),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn mag_identical_is_zero() {
        let x = mat(&[0.5, 1.5], 1, 2);
        assert_eq!(log_stft_magnitude(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn mag_hand_value() {
        let x = mat(&[std::f64::consts::E], 1, 1);
        let one = mat(&[1.0], 1, 1);
        assert!((log_stft_magnitude(&x, &one).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mag_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..20).map(|_| rng.random_range(0.01..2.0)).collect();
        let b: Vec<f64> = (0..20).map(|_| rng.random_range(0.01..2.0)).collect();
        let got = log_stft_magnitude(&mat(&a, 4, 5), &mat(&b, 4, 5)).unwrap();
        let want = a
            .iter()
            .zip(&b)
            .map(|(&m, &mh)| {
                (m.max(MAGNITUDE_FLOOR).ln() - mh.max(MAGNITUDE_FLOOR).ln()).abs()
            })
            .sum::<f64>()
            / 20.0;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn mag_floor_applies_below_epsilon() {
        let x = mat(&[0.0], 1, 1);
        let tiny = mat(&[1e-9], 1, 1);
        // Both magnitudes floor to 1e-7, so the difference vanishes.
        assert_eq!(log_stft_magnitude(&x, &tiny).unwrap(), 0.0);
    }

    #[test]
    fn weighted_sc_unit_mask_reduces() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..24).map(|_| rng.random_range(0.0..2.0)).collect();
        let b: Vec<f64> = (0..24).map(|_| rng.random_range(0.0..2.0)).collect();
        let x = mat(&a, 4, 6);
        let xh = mat(&b, 4, 6);
        let unit = WeightMatrix::from_values(vec![1.0; 24], 4, 6).unwrap();
        let got = weighted_spectral_convergence(&x, &xh, &unit).unwrap();
        let want = spectral_convergence(&x, &xh).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn weighted_sc_half_mask_halves() {
        let x = mat(&[1.0, 2.0, 0.5, 3.0], 2, 2);
        let xh = mat(&[0.5, 2.5, 1.0, 2.0], 2, 2);
        let half = WeightMatrix::from_values(vec![0.5; 4], 2, 2).unwrap();
        let got = weighted_spectral_convergence(&x, &xh, &half).unwrap();
        let want = 0.5 * spectral_convergence(&x, &xh).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn weighted_sc_hand_value() {
        let x = mat(&[3.0, 4.0], 1, 2);
        let z = mat(&[0.0, 0.0], 1, 2);
        let w = WeightMatrix::from_values(vec![1.0, 0.5], 1, 2).unwrap();
        let got = weighted_spectral_convergence(&x, &z, &w).unwrap();
        assert!((got - 13.0f64.sqrt() / 5.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_ops_reject_out_of_range_weights() {
        let x = mat(&[1.0, 1.0], 1, 2);
        let w = WeightMatrix::from_values(vec![1.0, 1.5], 1, 2).unwrap();
        assert!(weighted_spectral_convergence(&x, &x, &w).is_err());
        assert!(weighted_log_stft_magnitude(&x, &x, &w).is_err());
    }

    #[test]
    fn weighted_mag_unit_mask_reduces() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a: Vec<f64> = (0..15).map(|_| rng.random_range(0.01..2.0)).collect();
        let b: Vec<f64> = (0..15).map(|_| rng.random_range(0.01..2.0)).collect();
        let x = mat(&a, 3, 5);
        let xh = mat(&b, 3, 5);
        let unit = WeightMatrix::from_values(vec![1.0; 15], 3, 5).unwrap();
        let got = weighted_log_stft_magnitude(&x, &xh, &unit).unwrap();
        let want = log_stft_magnitude(&x, &xh).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn weighted_mag_hand_value() {
        let x = mat(&[std::f64::consts::E], 1, 1);
        let one = mat(&[1.0], 1, 1);
        let w = WeightMatrix::from_values(vec![0.5], 1, 1).unwrap();
        assert!((weighted_log_stft_magnitude(&x, &one, &w).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mr_loss_zero_at_identity_with_zero_gradient() {
        let x = random_wave(2048, 1);
        let report = mr_stft_loss(&x, &x, &MultiResolutionConfig::default(), None, true).unwrap();
        assert_eq!(report.total(), 0.0);
        assert_eq!(report.per_resolution().len(), 3);
        assert!(!report.weighted());
        assert!(report.gradient().unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mr_loss_unit_mask_matches_unmasked() {
        let x = random_wave(2048, 2);
        let xh = random_wave(2048, 3);
        let mrc = MultiResolutionConfig::default();
        let plain = mr_stft_loss(&x, &xh, &mrc, None, false).unwrap();
        let masked = mr_stft_loss(&x, &xh, &mrc, Some(&unit_mask()), false).unwrap();
        assert!((plain.total() - masked.total()).abs() < 1e-12);
        for (a, b) in plain.per_resolution().iter().zip(masked.per_resolution()) {
            assert!((a.sc - b.sc).abs() < 1e-12);
            assert!((a.mag - b.mag).abs() < 1e-12);
        }
        assert!(masked.weighted());
    }

    #[test]
    fn mr_loss_rejects_length_mismatch_and_short_signals() {
        let mrc = MultiResolutionConfig::default();
        let x = random_wave(2048, 4);
        let short = random_wave(1024, 5);
        assert!(mr_stft_loss(&x, &short, &mrc, None, false).is_err());
        assert!(mr_stft_loss(&short, &short, &mrc, None, false).is_err());
    }

    fn finite_difference(
        x: &Waveform,
        xhat: &Waveform,
        mrc: &MultiResolutionConfig,
        mask: Option<&MaskFile>,
        coord: usize,
        step: f64,
    ) -> f64 {
        let mut plus = xhat.samples().to_vec();
        plus[coord] += step;
        let mut minus = xhat.samples().to_vec();
        minus[coord] -= step;
        let lp = mr_stft_loss(
            x,
            &Waveform::new(plus, xhat.sample_rate()).unwrap(),
            mrc,
            mask,
            false,
        )
        .unwrap()
        .total();
        let lm = mr_stft_loss(
            x,
            &Waveform::new(minus, xhat.sample_rate()).unwrap(),
            mrc,
            mask,
            false,
        )
        .unwrap()
        .total();
        (lp - lm) / (2.0 * step)
    }

    fn assert_gradient_matches(
        mrc: &MultiResolutionConfig,
        mask: Option<&MaskFile>,
        seed: u64,
        coords: usize,
    ) {
        let x = random_wave(2048, seed);
        let xhat = random_wave(2048, seed + 1000);
        let report = mr_stft_loss(&x, &xhat, mrc, mask, true).unwrap();
        let grad = report.gradient().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 5000);
        for _ in 0..coords {
            let i = rng.random_range(0..xhat.len());
            let fd = finite_difference(&x, &xhat, mrc, mask, i, 1e-5);
            let diff = (grad[i] - fd).abs();
            assert!(
                diff <= 1e-10 + 1e-5 * grad[i].abs().max(fd.abs()),
                "coord {i}: analytic {} vs fd {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences_single_resolution() {
        assert_gradient_matches(&single_res(512, 240, 50), None, 11, 32);
    }

    #[test]
    fn gradient_matches_finite_differences_other_resolutions() {
        assert_gradient_matches(&single_res(1024, 600, 120), None, 12, 8);
        assert_gradient_matches(&single_res(2048, 1200, 240), None, 13, 8);
    }

    #[test]
    fn gradient_matches_finite_differences_masked_and_multi() {
        let mask = resonant_mask(99);
        assert_gradient_matches(&single_res(512, 240, 50), Some(&mask), 14, 12);
        assert_gradient_matches(&MultiResolutionConfig::default(), None, 17, 8);
        assert_gradient_matches(&MultiResolutionConfig::default(), Some(&mask), 20, 8);
    }

    #[test]
    fn noise_amplitude_increases_loss_monotonically() {
        let mrc = MultiResolutionConfig::default();
        for seed in 0..10 {
            let x = random_wave(2048, 100 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let noise: Vec<f64> = (0..2048).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut prev = 0.0;
            for (step, amp) in [1e-4, 1e-3, 1e-2, 1e-1, 0.5].iter().enumerate() {
                let noisy = Waveform::new(
                    x.samples()
                        .iter()
                        .zip(&noise)
                        .map(|(s, n)| s + amp * n)
                        .collect(),
                    24000,
                )
                .unwrap();
                let total = mr_stft_loss(&x, &noisy, &mrc, None, false).unwrap().total();
                assert!(
                    total > prev,
                    "seed {seed} amplitude step {step}: {total} not above {prev}"
                );
                prev = total;
            }
        }
    }

    #[test]
    fn weighted_sc_penalizes_high_weight_bins_more() {
        let lp = LpModel::new(vec![1.2, -0.81], "direct").unwrap();
        let cfg = StftConfig::new(512, 240, 50).unwrap();
        let mask = mask_response(&lp, &cfg, (0.5, 1.0)).unwrap();
        let n = mask.weights().len();
        let hi_bin = (0..n).max_by(|&a, &b| mask.weights()[a].total_cmp(&mask.weights()[b])).unwrap();
        let lo_bin = (0..n).min_by(|&a, &b| mask.weights()[a].total_cmp(&mask.weights()[b])).unwrap();
        let base = vec![1.0; n];
        let x = mat(&base, 1, n);
        let mut in_valley = base.clone();
        in_valley[hi_bin] += 0.5;
        let mut in_formant = base.clone();
        in_formant[lo_bin] += 0.5;
        let w = build_weight_matrix(&mask, 1).unwrap();
        let valley_loss = weighted_spectral_convergence(&x, &mat(&in_valley, 1, n), &w).unwrap();
        let formant_loss = weighted_spectral_convergence(&x, &mat(&in_formant, 1, n), &w).unwrap();
        assert!(
            valley_loss > formant_loss,
            "valley {valley_loss} vs formant {formant_loss}"
        );
    }

    #[test]
    fn adversarial_loss_hand_values() {
        assert_eq!(adversarial_generator_loss(&[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(adversarial_generator_loss(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(adversarial_generator_loss(&[0.0, 1.0]).unwrap(), 0.5);
        assert!(adversarial_generator_loss(&[]).is_err());
    }

    #[test]
    fn discriminator_loss_hand_values() {
        assert_eq!(discriminator_loss(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(discriminator_loss(&[0.0], &[1.0]).unwrap(), 2.0);
        assert_eq!(discriminator_loss(&[1.0], &[0.5]).unwrap(), 0.25);
        assert!(discriminator_loss(&[], &[0.5]).is_err());
        assert!(discriminator_loss(&[0.5], &[]).is_err());
    }

    #[test]
    fn combined_loss_hand_values() {
        assert_eq!(combined_generator_loss(1.0, 0.25, 4.0).unwrap(), 2.0);
        assert_eq!(combined_generator_loss(0.7, 9.0, 0.0).unwrap(), 0.7);
        assert_eq!(combined_generator_loss(0.0, 0.0, 4.0).unwrap(), 0.0);
        assert!(combined_generator_loss(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn gan_inputs_defaults_and_validation() {
        let inputs = GanLossInputs::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(inputs.lambda_adv(), DEFAULT_LAMBDA_ADV);
        assert_eq!(inputs.adversarial_loss(), 0.5);
        assert!(inputs.discriminator_loss().is_err());
        let full = GanLossInputs::new(vec![0.5])
            .unwrap()
            .with_real(vec![1.0])
            .unwrap();
        assert_eq!(full.discriminator_loss().unwrap(), 0.25);
        assert!(GanLossInputs::new(vec![]).is_err());
        assert!(GanLossInputs::new(vec![0.5]).unwrap().with_lambda(-1.0).is_err());
    }

    #[test]
    fn loss_report_json_schema() {
        let x = random_wave(2048, 40);
        let xh = random_wave(2048, 41);
        let report =
            mr_stft_loss(&x, &xh, &MultiResolutionConfig::default(), None, true).unwrap();
        let json = report.to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        let resolutions = value["resolutions"].as_array().unwrap();
        assert_eq!(resolutions.len(), 3);
        assert_eq!(resolutions[0]["fft"], 512);
        assert_eq!(resolutions[1]["fft"], 1024);
        assert_eq!(resolutions[2]["fft"], 2048);
        assert!(resolutions[0]["sc"].is_f64());
        assert!(resolutions[0]["mag"].is_f64());
        assert!(value["total"].is_f64());
        assert_eq!(value["weighted"], false);
        assert!(value.get("gradient").is_none());

        let again = mr_stft_loss(&x, &xh, &MultiResolutionConfig::default(), None, true)
            .unwrap()
            .to_json();
        assert_eq!(json, again);
    }
}

