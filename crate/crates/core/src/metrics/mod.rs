//! Observables computed from trajectories: synchronization degree, tick
//! statistics, spectra and ensemble transients.

mod spectrum;
mod ticks;
mod transient;

pub use spectrum::{find_peaks, lorentzian_fwhm, peak_fwhm, power_spectrum, power_spectrum_complex, Spectrum};
pub use ticks::{clock_stats, clock_stats_with, extract_ticks, extract_ticks_with, ClockStats, TickOptions, TickSeries};
pub use transient::{
    moving_median, transient_correlation, transient_entropy_flux, transient_time,
    transient_time_with, EnsembleMoments, FluxSeries, TransientOptions, TransientResult,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncMetrics {
    pub c: f64,
    pub d: f64,
    pub n1: f64,
    pub n2: f64,
}

/// Pearson correlation of two equally long series, means removed.
pub fn pearson_sync_degree(x1: &[f64], x2: &[f64]) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::Dimension(format!(
            "series lengths differ: {} vs {}",
            x1.len(),
            x2.len()
        )));
    }
    if x1.len() < 2 {
        return Err(Error::InsufficientData("need at least two samples".into()));
    }
    let n = x1.len() as f64;
    let m1 = x1.iter().sum::<f64>() / n;
    let m2 = x2.iter().sum::<f64>() / n;
    let (mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0);
    for (a, b) in x1.iter().zip(x2) {
        let (da, db) = (a - m1, b - m2);
        s11 += da * da;
        s22 += db * db;
        s12 += da * db;
    }
    if s11 == 0.0 || s22 == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input series".into()));
    }
    Ok(s12 / (s11 * s22).sqrt())
}

/// Pearson correlation with a batch-means standard error: the series is cut
/// into `n_batches` contiguous blocks and the spread of the per-block
/// coefficients gives the error of the full-window value.
pub fn pearson_with_error(x1: &[f64], x2: &[f64], n_batches: usize) -> Result<(f64, f64)> {
    let c = pearson_sync_degree(x1, x2)?;
    let (_, err) = batch_means(x1.len(), n_batches, |r| {
        pearson_sync_degree(&x1[r.clone()], &x2[r])
    })?;
    Ok((c, err))
}

/// Mean and standard error of `f` evaluated on `n_batches` contiguous index
/// blocks of `0..len`.
pub fn batch_means<F>(len: usize, n_batches: usize, mut f: F) -> Result<(f64, f64)>
where
    F: FnMut(std::ops::Range<usize>) -> Result<f64>,
{
    if n_batches < 2 || len < 2 * n_batches {
        return Err(Error::InsufficientData(format!(
            "{len} samples cannot form {n_batches} batches"
        )));
    }
    let size = len / n_batches;
    let vals = (0..n_batches)
        .map(|b| f(b * size..(b + 1) * size))
        .collect::<Result<Vec<_>>>()?;
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok((mean, (var / k).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identical_and_opposite() {
        let x: Vec<f64> = (0..100).map(|k| (k as f64 * 0.3).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_sync_degree(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_sync_degree(&x, &y).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_is_undefined() {
        let x = vec![1.0; 10];
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(matches!(
            pearson_sync_degree(&x, &y),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(pearson_sync_degree(&y, &y[..9]).is_err());
    }

    #[test]
    fn independent_noise_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 2000;
        let mut inside = 0;
        for _ in 0..200 {
            let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            if pearson_sync_degree(&a, &b).unwrap().abs() < 3.0 / (n as f64).sqrt() {
                inside += 1;
            }
        }
        assert!(inside >= 198, "{inside}/200");
    }

    #[test]
    fn batch_error_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a: Vec<f64> = (0..40_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..40_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (c, err) = pearson_with_error(&a, &b, 40).unwrap();
        assert!((err - 1.0 / 200.0).abs() < 0.002, "{err}");
        assert!(c.abs() < 4.0 * err);
    }
}
