//! Time series to classifier input: magnitude spectrum, frequency cut and
//! z-score normalization.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::types::{Spectrum, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    None,
    Hann,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConfig {
    pub f_max_hz: f64,
    pub window: Window,
    pub detrend_mean: bool,
    /// Normalize the full spectrum first and cut afterwards.
    pub normalize_first: bool,
}

impl SpectralConfig {
    pub fn new(f_max_hz: f64) -> Self {
        Self {
            f_max_hz,
            window: Window::None,
            detrend_mean: false,
            normalize_first: false,
        }
    }

    /// Number of bins `preprocess` produces for a signal of `n` samples at `fs`.
    pub fn output_len(&self, n: usize, fs: f64) -> usize {
        let df = fs / n as f64;
        let bins = n / 2 + 1;
        (((self.f_max_hz / df) + 1e-9).floor() as usize + 1).min(bins)
    }
}

/// Single-sided amplitude spectrum: `2|X_k|/N` for interior bins, `|X_k|/N`
/// at DC and, for even `N`, at Nyquist.
pub fn fft_magnitude(x: &TimeSeries) -> Result<Spectrum> {
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid("spectrum needs at least two samples"));
    }
    let spectrum = complex_spectrum(x.samples());
    let nf = n as f64;
    let magnitudes = spectrum
        .iter()
        .enumerate()
        .map(|(k, c)| c.norm() * bin_scale(k, n) / nf)
        .collect();
    Spectrum::new(magnitudes, x.sample_rate_hz() / nf, 0.0, false)
}

fn bin_scale(k: usize, n: usize) -> f64 {
    if k == 0 || (n % 2 == 0 && k == n / 2) {
        1.0
    } else {
        2.0
    }
}

/// Raw DFT bins `0..=N/2` (unscaled).
pub(crate) fn complex_spectrum(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    fft.process(&mut buf);
    buf.truncate(n / 2 + 1);
    buf
}

/// One DFT bin in single-sided amplitude units, i.e. the complex value whose
/// modulus `fft_magnitude` reports at bin `k`.
pub(crate) fn amplitude_bin(samples: &[f64], k: usize) -> Complex64 {
    let n = samples.len();
    let step = -2.0 * PI / n as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (i, &v) in samples.iter().enumerate() {
        // reduce the phase index mod n to keep the angle small
        let ang = step * ((i * k) % n) as f64;
        re += v * ang.cos();
        im += v * ang.sin();
    }
    Complex64::new(re, im) * (bin_scale(k, n) / n as f64)
}

/// Per-bin `(m - mean) / std` with the population standard deviation.
pub fn zscore(spec: &Spectrum) -> Result<Spectrum> {
    let m = spec.magnitudes();
    if m.len() < 2 {
        return Err(Error::invalid("z-score needs at least two bins"));
    }
    let n = m.len() as f64;
    let mean = m.iter().sum::<f64>() / n;
    let var = m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return Err(Error::invalid("spectrum has zero variance, cannot z-score"));
    }
    let out = m.iter().map(|v| (v - mean) / std).collect();
    Spectrum::new(out, spec.df_hz(), spec.f_start_hz(), true)
}

/// Keeps the bins at or below `f_max_hz`.
pub fn frequency_cut(spec: &Spectrum, f_max_hz: f64) -> Result<Spectrum> {
    if !(f_max_hz > spec.f_start_hz() + spec.df_hz()) {
        return Err(Error::invalid(format!(
            "cut at {f_max_hz} Hz leaves fewer than two bins (df = {} Hz)",
            spec.df_hz()
        )));
    }
    let last = ((f_max_hz - spec.f_start_hz()) / spec.df_hz() + 1e-9).floor() as usize;
    let keep = (last + 1).min(spec.len());
    Spectrum::new(
        spec.magnitudes()[..keep].to_vec(),
        spec.df_hz(),
        spec.f_start_hz(),
        spec.is_normalized(),
    )
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Detrend, window, transform, cut and normalize.
pub fn preprocess(x: &TimeSeries, cfg: &SpectralConfig) -> Result<Spectrum> {
    if !(cfg.f_max_hz.is_finite() && cfg.f_max_hz > 0.0) {
        return Err(Error::invalid("f_max_hz must be positive"));
    }
    if cfg.f_max_hz > x.nyquist_hz() * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "cut frequency {} Hz exceeds Nyquist {} Hz",
            cfg.f_max_hz,
            x.nyquist_hz()
        )));
    }
    let mut samples = x.samples().to_vec();
    if cfg.detrend_mean {
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        samples.iter_mut().for_each(|v| *v -= mean);
    }
    if cfg.window == Window::Hann {
        for (v, w) in samples.iter_mut().zip(hann(x.len())) {
            *v *= w;
        }
    }
    let spec = fft_magnitude(&x.with_samples(samples)?)?;
    if cfg.normalize_first {
        frequency_cut(&zscore(&spec)?, cfg.f_max_hz)
    } else {
        zscore(&frequency_cut(&spec, cfg.f_max_hz)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft_magnitude(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (k * i % n) as f64 / n as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                (re * re + im * im).sqrt() * bin_scale(k, n) / n as f64
            })
            .collect()
    }

    fn tone(a: f64, f: f64, fs: f64, n: usize) -> TimeSeries {
        let s = (0..n)
            .map(|i| a * (2.0 * PI * f * i as f64 / fs).sin())
            .collect();
        TimeSeries::new(s, fs).unwrap()
    }

    #[test]
    fn zero_signal_zero_spectrum() {
        let s = fft_magnitude(&TimeSeries::zeros(64, 100.0).unwrap()).unwrap();
        assert!(s.magnitudes().iter().all(|&m| m == 0.0));
        assert!(!s.is_normalized());
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let s = fft_magnitude(&TimeSeries::new(vec![-3.0; 100], 10.0).unwrap()).unwrap();
        assert!((s.magnitudes()[0] - 3.0).abs() < 1e-12);
        assert!(s.magnitudes()[1..].iter().all(|&m| m < 1e-12));
    }

    #[test]
    fn tone_peak_matches_naive_dft() {
        let x = tone(2.0, 50.0, 1000.0, 1000);
        let s = fft_magnitude(&x).unwrap();
        let oracle = naive_dft_magnitude(x.samples());
        assert_eq!(s.len(), 501);
        assert!((oracle[50] - 2.0).abs() < 1e-9);
        assert!((s.magnitudes()[50] - 2.0).abs() < 1e-9);
        for (k, &m) in s.magnitudes().iter().enumerate() {
            if k != 50 {
                assert!(m < 1e-9, "bin {k} = {m}");
            }
        }
        assert_eq!(s.df_hz(), 1.0);
    }

    #[test]
    fn amplitude_bin_agrees_with_fft() {
        let x = tone(1.3, 37.7, 500.0, 333);
        let s = fft_magnitude(&x).unwrap();
        for k in [0, 1, 25, 100, 166] {
            let c = amplitude_bin(x.samples(), k);
            assert!((c.norm() - s.magnitudes()[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn zscore_examples() {
        let s = Spectrum::new(vec![1.0, 2.0, 3.0], 1.0, 0.0, false).unwrap();
        let z = zscore(&s).unwrap();
        let expect = [-1.224_744_871, 0.0, 1.224_744_871];
        for (a, b) in z.magnitudes().iter().zip(expect) {
            assert!((a - b).abs() < 1e-4);
        }
        assert!(z.is_normalized());
        let c = Spectrum::new(vec![4.0; 8], 1.0, 0.0, false).unwrap();
        assert!(zscore(&c).is_err());
    }

    #[test]
    fn zscore_reapplied_is_stable() {
        let s = Spectrum::new(vec![0.3, 9.0, 1.1, 4.0, 2.2], 1.0, 0.0, false).unwrap();
        let z1 = zscore(&s).unwrap();
        let z2 = zscore(&z1).unwrap();
        for (a, b) in z1.magnitudes().iter().zip(z2.magnitudes()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn cut_counts_and_identity() {
        let s = Spectrum::new(vec![1.0; 1001], 1.0, 0.0, false).unwrap();
        assert_eq!(frequency_cut(&s, 500.0).unwrap().len(), 501);
        assert_eq!(frequency_cut(&s, 5000.0).unwrap(), s);
        assert!(frequency_cut(&s, 0.5).is_err());
        assert!(frequency_cut(&s, 1.0).is_err());
    }

    #[test]
    fn cut_removes_tone_above_limit() {
        let x = tone(1.0, 210.0, 1000.0, 1000);
        let cut = frequency_cut(&fft_magnitude(&x).unwrap(), 200.0).unwrap();
        assert_eq!(cut.len(), 201);
        assert!(cut.magnitudes().iter().all(|&m| m < 1e-9));
    }

    #[test]
    fn preprocess_counts_bins_and_is_pure() {
        let x = tone(1.0, 20.0, 1000.0, 2000);
        let cfg = SpectralConfig::new(100.0);
        let a = preprocess(&x, &cfg).unwrap();
        let b = preprocess(&x, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), (100.0 / 0.5) as usize + 1);
        assert_eq!(a.len(), cfg.output_len(2000, 1000.0));
        assert_eq!(a.argmax(), 40);
        let mean = a.magnitudes().iter().sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn preprocess_rejects_cut_above_nyquist() {
        let x = tone(1.0, 20.0, 100.0, 100);
        assert!(preprocess(&x, &SpectralConfig::new(60.0)).is_err());
    }

    #[test]
    fn normalize_first_uses_whole_spectrum() {
        let x = tone(1.0, 20.0, 1000.0, 1000);
        let mut cfg = SpectralConfig::new(100.0);
        cfg.normalize_first = true;
        let s = preprocess(&x, &cfg).unwrap();
        assert_eq!(s.len(), 101);
        // stats come from the uncut 501 bins, so the cut part is not zero-mean
        let mean = s.magnitudes().iter().sum::<f64>() / s.len() as f64;
        assert!(mean.abs() > 1e-3);
    }

    #[test]
    fn parseval_holds_on_uncut_spectrum() {
        let x: Vec<f64> = (0..512).map(|i| ((i * 7919) % 113) as f64 / 50.0 - 1.0).collect();
        for n in [512usize, 511] {
            let ts = TimeSeries::new(x[..n].to_vec(), 100.0).unwrap();
            let s = fft_magnitude(&ts).unwrap();
            let time_power = ts.samples().iter().map(|v| v * v).sum::<f64>() / n as f64;
            let m = s.magnitudes();
            let mut spec_power = m[0] * m[0];
            for (k, v) in m.iter().enumerate().skip(1) {
                spec_power += if bin_scale(k, n) == 1.0 { v * v } else { v * v / 2.0 };
            }
            assert!((spec_power - time_power).abs() / time_power < 1e-6);
        }
    }

    #[test]
    fn magnitude_is_linear_in_positive_scale() {
        let x = tone(0.7, 13.0, 128.0, 256);
        let y = x.with_samples(x.samples().iter().map(|v| 3.5 * v).collect()).unwrap();
        let a = fft_magnitude(&x).unwrap();
        let b = fft_magnitude(&y).unwrap();
        for (u, v) in a.magnitudes().iter().zip(b.magnitudes()) {
            assert!((3.5 * u - v).abs() < 1e-12);
        }
    }
}
