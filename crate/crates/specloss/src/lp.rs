//! Linear prediction: autocorrelation, the Levinson-Durbin recursion, and
//! conversion between LP coefficients and line spectral frequencies.
//!
//! The sign convention throughout is `A(z) = 1 - sum_k alpha_k z^{-k}`,
//! where `alpha_1..alpha_p` are the prediction coefficients stored in
//! [`LpModel`]. A model is minimum-phase when every root of `A(z)` lies
//! strictly inside the unit circle.

use std::f64::consts::PI;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Relative white-noise floor added to `r[0]` before the Levinson-Durbin
/// recursion to keep reflection coefficients away from the unit circle on
/// pathological inputs.
const AUTOCORRELATION_FLOOR: f64 = 1e-9;

/// Bisection width guaranteed for every line-spectral root. The search
/// actually continues to floating-point resolution, which high orders need
/// for the conversion round trip to stay below 1e-8 per coefficient.
const ROOT_TOLERANCE: f64 = 1e-12;

/// Number of grid intervals over `(0, pi)` used to bracket line-spectral
/// roots before bisection.
const ROOT_GRID: usize = 4096;

/// Prediction coefficients `alpha_1..alpha_p` of `A(z) = 1 - sum alpha_k
/// z^{-k}`, with a free-form source tag ("direct" or a corpus id).
#[derive(Debug, Clone)]
pub struct LpModel {
    coefficients: Vec<f64>,
    source: String,
}

impl LpModel {
    /// Wraps raw prediction coefficients. Minimum-phase is not enforced
    /// here; operations that require it check at their own boundaries.
    pub fn new(coefficients: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::invalid("LP order must be at least 1"));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("LP coefficients must be finite"));
        }
        Ok(Self {
            coefficients,
            source: source.into(),
        })
    }

    /// Builds a guaranteed minimum-phase model of order `ks.len()` by the
    /// step-up recursion. Every reflection coefficient must have magnitude
    /// strictly below 1.
    pub fn from_reflection_coefficients(ks: &[f64], source: impl Into<String>) -> Result<Self> {
        if ks.is_empty() {
            return Err(Error::invalid("LP order must be at least 1"));
        }
        if ks.iter().any(|k| !k.is_finite() || k.abs() >= 1.0) {
            return Err(Error::invalid(
                "reflection coefficients must have magnitude below 1",
            ));
        }
        let mut a = vec![1.0];
        for (m, &k) in ks.iter().enumerate() {
            let mut next = Vec::with_capacity(m + 2);
            next.push(1.0);
            for j in 1..=m {
                next.push(a[j] + k * a[m + 1 - j]);
            }
            next.push(k);
            a = next;
        }
        Self::new(a[1..].iter().map(|c| -c).collect(), source)
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    /// Coefficients of `A(z)` in ascending powers of `z^{-1}`:
    /// `[1, -alpha_1, ..., -alpha_p]`.
    pub fn prediction_polynomial(&self) -> Vec<f64> {
        let mut a = Vec::with_capacity(self.order() + 1);
        a.push(1.0);
        a.extend(self.coefficients.iter().map(|c| -c));
        a
    }

    /// Schur-Cohn test: steps the order down one at a time and checks that
    /// every recovered reflection coefficient has magnitude below 1.
    pub fn is_minimum_phase(&self) -> bool {
        let mut a = self.prediction_polynomial();
        for m in (1..=self.order()).rev() {
            let k = a[m];
            if !k.is_finite() || k.abs() >= 1.0 {
                return false;
            }
            let denom = 1.0 - k * k;
            let mut next = Vec::with_capacity(m);
            next.push(1.0);
            for j in 1..m {
                next.push((a[j] - k * a[m - j]) / denom);
            }
            a = next;
        }
        true
    }

    /// Recovers the reflection coefficients by the step-down recursion.
    /// Fails with a degeneracy error when any magnitude reaches 1.
    pub fn reflection_coefficients(&self) -> Result<Vec<f64>> {
        let mut a = self.prediction_polynomial();
        let mut ks = vec![0.0; self.order()];
        for m in (1..=self.order()).rev() {
            let k = a[m];
            if !k.is_finite() || k.abs() >= 1.0 {
                return Err(Error::NumericalDegeneracy(format!(
                    "reflection coefficient {k} at order {m} has magnitude >= 1"
                )));
            }
            ks[m - 1] = k;
            let denom = 1.0 - k * k;
            let mut next = Vec::with_capacity(m);
            next.push(1.0);
            for j in 1..m {
                next.push((a[j] - k * a[m - j]) / denom);
            }
            a = next;
        }
        Ok(ks)
    }
}

/// Line spectral frequencies in radians, strictly increasing inside
/// `(0, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsfVector {
    frequencies: Vec<f64>,
}

impl LsfVector {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::invalid("LSF order must be at least 1"));
        }
        for (i, &w) in frequencies.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 || w >= PI {
                return Err(Error::invalid(format!(
                    "LSF {i} = {w} is outside the open interval (0, pi)"
                )));
            }
            if i > 0 && w <= frequencies[i - 1] {
                return Err(Error::invalid(format!(
                    "LSFs must be strictly increasing, got {} then {w}",
                    frequencies[i - 1]
                )));
            }
        }
        Ok(Self { frequencies })
    }

    pub fn order(&self) -> usize {
        self.frequencies.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }
}

/// Biased, unnormalized autocorrelation `r[k] = sum_n x[n] x[n+k]` for
/// `k = 0..=max_lag`.
pub fn autocorrelate(x: &Waveform, max_lag: usize) -> Result<Vec<f64>> {
    if max_lag == 0 {
        return Err(Error::invalid("max lag must be at least 1"));
    }
    if max_lag >= x.len() {
        return Err(Error::invalid(format!(
            "max lag {max_lag} must be below the signal length {}",
            x.len()
        )));
    }
    let s = x.samples();
    Ok((0..=max_lag)
        .map(|k| (0..s.len() - k).map(|n| s[n] * s[n + k]).sum())
        .collect())
}

/// Levinson-Durbin recursion solving the Toeplitz normal equations for the
/// order-`p` forward predictor. Returns the model and the final prediction
/// error energy.
///
/// A relative noise floor of `1e-9 * r[0]` is added to `r[0]` first, so the
/// solved system is very slightly regularized.
pub fn levinson_durbin(r: &[f64], p: usize) -> Result<(LpModel, f64)> {
    if p == 0 {
        return Err(Error::invalid("LP order must be at least 1"));
    }
    if r.len() < p + 1 {
        return Err(Error::invalid(format!(
            "need {} autocorrelation lags for order {p}, got {}",
            p + 1,
            r.len()
        )));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("autocorrelation values must be finite"));
    }
    if r[0] <= 0.0 {
        return Err(Error::invalid(format!(
            "zero-lag autocorrelation must be positive, got {}",
            r[0]
        )));
    }

    let r0 = r[0] * (1.0 + AUTOCORRELATION_FLOOR);
    let mut alpha = vec![0.0; p];
    let mut energy = r0;
    for m in 1..=p {
        if energy <= 0.0 {
            return Err(Error::NumericalDegeneracy(format!(
                "prediction error energy {energy} is not positive at order {m}"
            )));
        }
        let mut acc = r[m];
        for j in 1..m {
            acc -= alpha[j - 1] * r[m - j];
        }
        let k = acc / energy;
        if !k.is_finite() || k.abs() >= 1.0 {
            return Err(Error::NumericalDegeneracy(format!(
                "reflection coefficient {k} at order {m} has magnitude >= 1"
            )));
        }
        for j in 1..=(m - 1) / 2 {
            let lo = alpha[j - 1];
            let hi = alpha[m - 1 - j];
            alpha[j - 1] = lo - k * hi;
            alpha[m - 1 - j] = hi - k * lo;
        }
        if m >= 2 && m % 2 == 0 {
            let mid = alpha[m / 2 - 1];
            alpha[m / 2 - 1] = mid - k * mid;
        }
        alpha[m - 1] = k;
        energy *= 1.0 - k * k;
    }
    Ok((LpModel::new(alpha, "direct")?, energy))
}

/// Divides a polynomial (ascending coefficients) by `1 + x`, assuming exact
/// divisibility up to rounding.
fn deflate_one_plus_x(c: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; c.len() - 1];
    d[0] = c[0];
    for i in 1..d.len() {
        d[i] = c[i] - d[i - 1];
    }
    d
}

/// Divides a polynomial by `1 - x`, assuming exact divisibility up to
/// rounding.
fn deflate_one_minus_x(c: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; c.len() - 1];
    d[0] = c[0];
    for i in 1..d.len() {
        d[i] = c[i] + d[i - 1];
    }
    d
}

/// Averages mirror-image coefficients. The deflated quotients are
/// palindromic in exact arithmetic; this removes the rounding drift so the
/// cosine-series form below is consistent.
fn symmetrize(mut c: Vec<f64>) -> Vec<f64> {
    let n = c.len();
    for i in 0..n / 2 {
        let avg = 0.5 * (c[i] + c[n - 1 - i]);
        c[i] = avg;
        c[n - 1 - i] = avg;
    }
    c
}

/// Roots in `(0, pi)` of a palindromic polynomial of even degree `2m`,
/// found through its cosine-series form
/// `G(w) = c_m + 2 sum_{i=1..m} c_{m-i} cos(i w)`: grid bracketing over
/// `ROOT_GRID` intervals, then bisection to `ROOT_TOLERANCE` width.
fn palindromic_roots(c: &[f64]) -> Result<Vec<f64>> {
    let m = (c.len() - 1) / 2;
    if m == 0 {
        return Ok(Vec::new());
    }
    // Compensated evaluation: two-sum accumulation plus a first-order
    // correction for the rounding of the cosine arguments. Root accuracy
    // here directly bounds the conversion round-trip error, which the
    // monomial-coefficient representation amplifies by several orders of
    // magnitude at p = 40.
    let g = |w: f64| {
        let mut sum = c[m];
        let mut comp = 0.0;
        for i in 1..=m {
            let arg = i as f64 * w;
            let arg_err = (i as f64).mul_add(w, -arg);
            let cosine = arg.cos() - arg_err * arg.sin();
            let term = 2.0 * c[m - i] * cosine;
            let t = sum + term;
            comp += if sum.abs() >= term.abs() {
                (sum - t) + term
            } else {
                (term - t) + sum
            };
            sum = t;
        }
        sum + comp
    };
    let step = PI / ROOT_GRID as f64;
    let mut roots = Vec::with_capacity(m);
    let mut prev = g(0.0);
    for i in 1..=ROOT_GRID {
        let w = i as f64 * step;
        let cur = g(w);
        if prev == 0.0 {
            // Exact zero on an interior grid point is itself a root; the
            // endpoints 0 and pi are excluded by construction.
            if i > 1 {
                roots.push((i - 1) as f64 * step);
            }
            prev = cur;
            continue;
        }
        if cur != 0.0 && prev.signum() != cur.signum() {
            let mut lo = (i - 1) as f64 * step;
            let mut hi = w;
            let mut g_lo = prev;
            loop {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let g_mid = g(mid);
                if g_mid == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                } else if g_lo.signum() != g_mid.signum() {
                    hi = mid;
                } else {
                    lo = mid;
                    g_lo = g_mid;
                }
            }
            debug_assert!(hi - lo <= ROOT_TOLERANCE);
            roots.push(0.5 * (lo + hi));
        }
        prev = cur;
    }
    if roots.len() != m {
        return Err(Error::NumericalDegeneracy(format!(
            "bracketed {} line-spectral roots where {m} were expected",
            roots.len()
        )));
    }
    Ok(roots)
}

/// Converts a minimum-phase LP model to line spectral frequencies: the
/// ascending root angles of `P(z) = A(z) + z^{-(p+1)} A(z^{-1})` and
/// `Q(z) = A(z) - z^{-(p+1)} A(z^{-1})` with the trivial roots at
/// `z = +/-1` removed. Odd-indexed frequencies (1-based) come from `P`,
/// even-indexed ones from `Q`.
pub fn lp_to_lsf(lp: &LpModel) -> Result<LsfVector> {
    if !lp.is_minimum_phase() {
        return Err(Error::invalid(
            "LP model must be minimum-phase for LSF conversion",
        ));
    }
    let p = lp.order();
    let a = lp.prediction_polynomial();
    let coeff = |i: usize| if i <= p { a[i] } else { 0.0 };
    let mut sum_poly = Vec::with_capacity(p + 2);
    let mut diff_poly = Vec::with_capacity(p + 2);
    for j in 0..=p + 1 {
        sum_poly.push(coeff(j) + coeff(p + 1 - j));
        diff_poly.push(coeff(j) - coeff(p + 1 - j));
    }

    // P carries a trivial root at z = -1 only for even p; Q always has one
    // at z = +1, plus z = -1 when p is odd.
    let sum_reduced = if p.is_multiple_of(2) {
        symmetrize(deflate_one_plus_x(&sum_poly))
    } else {
        symmetrize(sum_poly)
    };
    let diff_reduced = if p.is_multiple_of(2) {
        symmetrize(deflate_one_minus_x(&diff_poly))
    } else {
        symmetrize(deflate_one_plus_x(&deflate_one_minus_x(&diff_poly)))
    };

    let sum_roots = palindromic_roots(&sum_reduced)?;
    let diff_roots = palindromic_roots(&diff_reduced)?;
    let mut merged = Vec::with_capacity(p);
    for i in 0..p {
        merged.push(if i % 2 == 0 {
            sum_roots[i / 2]
        } else {
            diff_roots[i / 2]
        });
    }
    if merged.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::NumericalDegeneracy(
            "line-spectral roots failed to interlace".into(),
        ));
    }
    LsfVector::new(merged)
}

/// Double-length sum of two compensated values.
fn dd_add(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let s = a.0 + b.0;
    let t = s - a.0;
    let err = (a.0 - (s - t)) + (b.0 - t) + a.1 + b.1;
    let hi = s + err;
    (hi, err - (hi - s))
}

/// Double-length product of a compensated value and a plain one.
fn dd_mul(a: (f64, f64), b: f64) -> (f64, f64) {
    let p = a.0 * b;
    let err = a.0.mul_add(b, -p) + a.1 * b;
    let hi = p + err;
    (hi, err - (hi - p))
}

/// Polynomial product in ascending coefficients, carried in compensated
/// arithmetic. The sequential product of root factors overshoots the final
/// coefficients by several orders of magnitude at order 40, and plain f64
/// accumulation would leave reconstruction errors around 1e-7.
fn convolve(a: &[(f64, f64)], b: &[f64]) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] = dd_add(out[i + j], dd_mul(ai, bj));
        }
    }
    out
}

/// Rebuilds the LP model from line spectral frequencies:
/// `A(z) = (P(z) + Q(z)) / 2` with `P` and `Q` reassembled from their root
/// angles and trivial factors. The result is minimum-phase whenever the
/// input is strictly increasing, by the interlacing property.
pub fn lsf_to_lp(lsf: &LsfVector) -> Result<LpModel> {
    let p = lsf.order();
    let mut sum_poly = if p.is_multiple_of(2) {
        vec![(1.0, 0.0), (1.0, 0.0)]
    } else {
        vec![(1.0, 0.0)]
    };
    let mut diff_poly = if p.is_multiple_of(2) {
        vec![(1.0, 0.0), (-1.0, 0.0)]
    } else {
        vec![(1.0, 0.0), (0.0, 0.0), (-1.0, 0.0)]
    };
    for (i, &w) in lsf.frequencies().iter().enumerate() {
        let quad = [1.0, -2.0 * w.cos(), 1.0];
        if i % 2 == 0 {
            sum_poly = convolve(&sum_poly, &quad);
        } else {
            diff_poly = convolve(&diff_poly, &quad);
        }
    }
    // Both polynomials are monic of degree p+1 with constant term 1, and Q
    // has leading coefficient -1, so a_0 = 1 and the degree-(p+1) terms
    // cancel exactly.
    let alpha = (1..=p)
        .map(|j| {
            let s = dd_add(sum_poly[j], diff_poly[j]);
            -0.5 * (s.0 + s.1)
        })
        .collect();
    LpModel::new(alpha, "direct")
}

/// Element-wise arithmetic mean of same-order LSF vectors, accumulated in
/// corpus order so the result is bit-reproducible.
pub fn average_lsf(corpus: &[LsfVector]) -> Result<LsfVector> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::invalid("LSF corpus must be non-empty"))?;
    let p = first.order();
    if corpus.iter().any(|v| v.order() != p) {
        return Err(Error::invalid("LSF corpus mixes different orders"));
    }
    let mut acc = vec![0.0; p];
    for v in corpus {
        for (a, &w) in acc.iter_mut().zip(v.frequencies()) {
            *a += w;
        }
    }
    let n = corpus.len() as f64;
    LsfVector::new(acc.into_iter().map(|a| a / n).collect())
}
