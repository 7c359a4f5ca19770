use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Power spectral density on a frequency grid (Hz, units²/Hz).
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub psd: Vec<f64>,
}

impl Spectrum {
    pub fn resolution(&self) -> f64 {
        if self.frequencies.len() < 2 {
            return 0.0;
        }
        self.frequencies[1] - self.frequencies[0]
    }

    /// `Σ psd·df`, the variance captured by the estimate.
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.resolution()
    }

    pub fn peak_index(&self) -> usize {
        self.psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
        .collect()
}

/// Welch-averaged periodograms of a complex series (Hann window, 50%
/// overlap, segment mean removed). Returns the two-sided density in FFT bin
/// order.
fn welch_complex(z: &[Complex64], dt: f64, segment: usize) -> Result<Vec<f64>> {
    if segment < 4 {
        return Err(Error::InvalidParameter {
            name: "segment",
            reason: format!("segment length {segment} is too short"),
        });
    }
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be > 0, got {dt}"),
        });
    }
    if z.len() < segment {
        return Err(Error::InsufficientData(format!(
            "series of {} samples is shorter than one segment ({segment})",
            z.len()
        )));
    }
    let window = hann(segment);
    let u: f64 = window.iter().map(|w| w * w).sum();
    let fs = 1.0 / dt;
    let fft = FftPlanner::new().plan_fft_forward(segment);
    let step = segment / 2;
    let mut acc = vec![0.0; segment];
    let mut buf = vec![Complex64::new(0.0, 0.0); segment];
    let mut count = 0usize;
    let mut start = 0;
    while start + segment <= z.len() {
        let seg = &z[start..start + segment];
        let mean = seg.iter().sum::<Complex64>() / segment as f64;
        for ((b, s), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = (s - mean) * w;
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += step;
    }
    let scale = 1.0 / (fs * u * count as f64);
    Ok(acc.into_iter().map(|a| a * scale).collect())
}

/// One-sided Welch PSD of a real series.
///
/// Hann window, 50% overlap, per-segment mean removed; normalized so that
/// `Σ psd·df` equals the series variance.
pub fn power_spectrum(x: &[f64], dt: f64, segment: usize) -> Result<Spectrum> {
    let z: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let two_sided = welch_complex(&z, dt, segment)?;
    let df = 1.0 / (dt * segment as f64);
    let half = segment / 2;
    let mut psd = Vec::with_capacity(half + 1);
    for (k, &s) in two_sided.iter().enumerate().take(half + 1) {
        let fold = k != 0 && !(segment.is_multiple_of(2) && k == half);
        psd.push(if fold { 2.0 * s } else { s });
    }
    Ok(Spectrum {
        frequencies: (0..=half).map(|k| k as f64 * df).collect(),
        psd,
    })
}

/// Two-sided Welch PSD of a complex series, frequencies ascending from
/// `-fs/2`.
pub fn power_spectrum_complex(z: &[Complex64], dt: f64, segment: usize) -> Result<Spectrum> {
    let two_sided = welch_complex(z, dt, segment)?;
    let df = 1.0 / (dt * segment as f64);
    let half = segment / 2;
    let mut frequencies = Vec::with_capacity(segment);
    let mut psd = Vec::with_capacity(segment);
    for j in 0..segment {
        let k = (j + segment - half) % segment;
        let f = if k >= segment - half { k as f64 - segment as f64 } else { k as f64 };
        frequencies.push(f * df);
        psd.push(two_sided[k]);
    }
    Ok(Spectrum { frequencies, psd })
}

/// Indices of spectral peaks.
///
/// Candidates are local maxima at least `min_rel_height` times the global
/// maximum. Neighbouring candidates count as separate peaks only when the
/// spectrum between them dips to at most `max_dip` times the lower of the
/// two; otherwise the lower candidate is dropped.
pub fn find_peaks(spec: &Spectrum, min_rel_height: f64, max_dip: f64) -> Vec<usize> {
    let p = &spec.psd;
    if p.len() < 3 {
        return Vec::new();
    }
    let top = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut peaks: Vec<usize> = (1..p.len() - 1)
        .filter(|&i| p[i] >= p[i - 1] && p[i] > p[i + 1] && p[i] >= min_rel_height * top)
        .collect();
    loop {
        let mut merged = false;
        for j in 0..peaks.len().saturating_sub(1) {
            let (a, b) = (peaks[j], peaks[j + 1]);
            let dip = p[a..=b].iter().cloned().fold(f64::INFINITY, f64::min);
            if dip > max_dip * p[a].min(p[b]) {
                let drop = if p[a] < p[b] { j } else { j + 1 };
                peaks.remove(drop);
                merged = true;
                break;
            }
        }
        if !merged {
            break;
        }
    }
    peaks
}

/// Full width at half maximum of the peak at `index`, with linear
/// interpolation of the half-power crossings.
pub fn peak_fwhm(spec: &Spectrum, index: usize) -> Result<f64> {
    let p = &spec.psd;
    let f = &spec.frequencies;
    let half = 0.5 * p[index];
    let mut lo = index;
    while lo > 0 && p[lo] > half {
        lo -= 1;
    }
    let mut hi = index;
    while hi + 1 < p.len() && p[hi] > half {
        hi += 1;
    }
    if p[lo] > half || p[hi] > half {
        return Err(Error::InsufficientData(
            "peak does not fall to half maximum inside the band".into(),
        ));
    }
    let cross = |i: usize, j: usize| f[i] + (half - p[i]) / (p[j] - p[i]) * (f[j] - f[i]);
    Ok(cross(hi - 1, hi) - cross(lo + 1, lo))
}

/// Full width at half maximum from a Lorentzian fit around the peak at
/// `index`.
///
/// Uses the contiguous bins above `min_rel` times the peak value. `1/S` is
/// quadratic in frequency for a Lorentzian, so the fit is a weighted linear
/// least squares with weights `S²` (constant relative noise per bin). Less
/// sensitive to bin noise than reading the half-power crossings directly.
pub fn lorentzian_fwhm(spec: &Spectrum, index: usize, min_rel: f64) -> Result<f64> {
    let p = &spec.psd;
    let f = &spec.frequencies;
    let floor = min_rel * p[index];
    let mut lo = index;
    while lo > 0 && p[lo - 1] > floor {
        lo -= 1;
    }
    let mut hi = index;
    while hi + 1 < p.len() && p[hi + 1] > floor {
        hi += 1;
    }
    if hi - lo + 1 < 5 {
        return Err(Error::InsufficientData(format!(
            "only {} bins above the fit floor",
            hi - lo + 1
        )));
    }
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for k in lo..=hi {
        let u = f[k] - f[index];
        let row = Vector3::new(1.0, u, u * u);
        let w = p[k] * p[k];
        ata += row * row.transpose() * w;
        aty += row * (w / p[k]);
    }
    let coef = ata
        .lu()
        .solve(&aty)
        .ok_or_else(|| Error::InsufficientData("degenerate Lorentzian fit".into()))?;
    let (a, b, c) = (coef[0], coef[1], coef[2]);
    let min = a - b * b / (4.0 * c);
    if !(c > 0.0 && min > 0.0) {
        return Err(Error::InsufficientData("peak is not Lorentzian-shaped".into()));
    }
    Ok(2.0 * (min / c).sqrt())
}
