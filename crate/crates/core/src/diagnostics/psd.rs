//! Periodogram estimation of a power spectral density.
//!
//! The periodogram is `|FFT(x - mean(x))|^2 / len` at the Fourier
//! frequencies `k / len` (cycles per step), with no windowing or padding.
//! With this normalization the total power equals the total squared
//! deviation of the signal from its mean (Parseval's identity), which makes
//! the output directly comparable across signal lengths.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Minimum signal length for a meaningful spectrum.
const MIN_LEN: usize = 16;

/// A periodogram over the full set of Fourier frequencies.
#[derive(Clone, Debug)]
pub struct Periodogram {
    /// Fourier frequencies `k / len` in cycles per step, for `k` from zero
    /// to `len - 1`.
    pub frequencies: Vec<f64>,
    /// Power at each frequency.
    pub power: Vec<f64>,
}

impl Periodogram {
    /// Total power across all frequencies; equals the total squared
    /// deviation of the signal from its mean.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Index of the strongest frequency strictly between zero and the
    /// Nyquist frequency.
    pub fn dominant_bin(&self) -> usize {
        let half = self.power.len() / 2;
        (1..=half)
            .max_by(|&a, &b| self.power[a].partial_cmp(&self.power[b]).expect("power values are finite"))
            .unwrap_or(0)
    }
}

/// Compute the periodogram of a signal after removing its mean.
pub fn periodogram(signal: &[f64]) -> Result<Periodogram> {
    if signal.len() < MIN_LEN {
        return Err(Error::InvalidArgument(format!(
            "periodogram needs at least {MIN_LEN} samples, got {}",
            signal.len()
        )));
    }
    if signal.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context: "periodogram input signal".into() });
    }
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buffer: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buffer);
    let power = buffer.iter().map(|c| c.norm_sqr() / n as f64).collect();
    let frequencies = (0..n).map(|k| k as f64 / n as f64).collect();
    Ok(Periodogram { frequencies, power })
}
