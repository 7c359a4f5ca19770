use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Debug, PartialEq)]
pub struct TickSeries {
    pub tick_times: Vec<f64>,
    /// Ticks next to a sample whose envelope is below the amplitude floor.
    /// The phase is poorly defined there, so periods touching them are left
    /// out of the statistics.
    pub flagged: Vec<bool>,
}

impl TickSeries {
    pub fn periods(&self) -> Vec<f64> {
        self.tick_times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `valid[k]` is true when period `k` has two unflagged ends.
    pub fn valid_periods(&self) -> Vec<bool> {
        self.flagged.windows(2).map(|w| !(w[0] || w[1])).collect()
    }

    pub fn len(&self) -> usize {
        self.tick_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tick_times.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickOptions {
    /// Envelope floor as a fraction of the RMS envelope magnitude.
    pub amplitude_floor: f64,
}

impl Default for TickOptions {
    fn default() -> Self {
        Self {
            amplitude_floor: 0.3,
        }
    }
}

pub fn extract_ticks(traj: &Trajectory, clock: usize) -> Result<TickSeries> {
    extract_ticks_with(traj, clock, &TickOptions::default())
}

/// Ticks are the first passages of the phase `φ(t) = ω_ref t - arg b(t)`
/// (unwrapped) through successive multiples of 2π, linearly interpolated
/// between samples. For a slowly varying envelope these are the upward
/// zero crossings of `x(t) = √2 Re[b e^{-iω_ref t}]` shifted by a quarter
/// period.
pub fn extract_ticks_with(traj: &Trajectory, clock: usize, opts: &TickOptions) -> Result<TickSeries> {
    let b = traj.envelope(clock);
    let t = &traj.times;
    if b.len() < 2 {
        return Err(Error::InsufficientData("trajectory has fewer than 2 samples".into()));
    }
    let w = traj.reference_frequency;
    let rms = (b.iter().map(|z| z.norm_sqr()).sum::<f64>() / b.len() as f64).sqrt();
    let floor = opts.amplitude_floor * rms;
    let low: Vec<bool> = b.iter().map(|z| z.norm() < floor).collect();

    let mut ticks = Vec::new();
    let mut flagged = Vec::new();
    let mut arg_prev = b[0].arg();
    let mut unwrapped = arg_prev;
    let mut phi_prev = w * t[0] - unwrapped;
    let mut next_level = (phi_prev / TWO_PI).ceil();
    if next_level * TWO_PI == phi_prev {
        ticks.push(t[0]);
        flagged.push(low[0]);
        next_level += 1.0;
    }
    for k in 1..b.len() {
        let arg = b[k].arg();
        let mut d = arg - arg_prev;
        d -= TWO_PI * (d / TWO_PI).round();
        unwrapped += d;
        arg_prev = arg;
        let phi = w * t[k] - unwrapped;
        while phi >= next_level * TWO_PI {
            let target = next_level * TWO_PI;
            // φ rose through the level within this interval
            let frac = if phi > phi_prev {
                ((target - phi_prev) / (phi - phi_prev)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let tick = t[k - 1] + frac * (t[k] - t[k - 1]);
            let tick = match ticks.last() {
                Some(&last) if tick <= last => {
                    // several levels inside one interval collapse; keep order
                    f64::from_bits(last.to_bits() + 1)
                }
                _ => tick,
            };
            ticks.push(tick);
            flagged.push(low[k - 1] || low[k]);
            next_level += 1.0;
        }
        phi_prev = phi;
    }
    if ticks.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} ticks found",
            ticks.len()
        )));
    }
    Ok(TickSeries {
        tick_times: ticks,
        flagged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClockStats {
    pub d: f64,
    pub n1: f64,
    pub n2: f64,
    /// Number of period pairs (or block pairs) entering `d`.
    pub pairs: usize,
}

/// `D` and `N` from per-period statistics (block length 1).
pub fn clock_stats(ticks1: &TickSeries, ticks2: &TickSeries) -> Result<ClockStats> {
    clock_stats_with(ticks1, ticks2, 1)
}

/// Accuracy and synchronization deviation.
///
/// `N_i = ⟨t_i⟩² / Var(t_i)` over the valid periods of each clock; zero
/// variance gives `+∞`.
///
/// `D = Var(τ) / ⟨(t1 + t2)/2⟩²` with `τ = t2 - t1`. Periods are paired by
/// index from the first tick of each series and averaged over consecutive
/// blocks of `block` periods; a block pair counts only if every period in
/// both blocks is valid. `block = 1` is the plain per-period definition.
pub fn clock_stats_with(ticks1: &TickSeries, ticks2: &TickSeries, block: usize) -> Result<ClockStats> {
    let block = block.max(1);
    let (p1, p2) = (ticks1.periods(), ticks2.periods());
    let (v1, v2) = (ticks1.valid_periods(), ticks2.valid_periods());
    let n1 = accuracy(&p1, &v1)?;
    let n2 = accuracy(&p2, &v2)?;

    let n_blocks = p1.len().min(p2.len()) / block;
    let mut tau = Vec::with_capacity(n_blocks);
    let mut mean_period = Vec::with_capacity(n_blocks);
    for j in 0..n_blocks {
        let r = j * block..(j + 1) * block;
        if v1[r.clone()].iter().all(|&v| v) && v2[r.clone()].iter().all(|&v| v) {
            let b1 = p1[r.clone()].iter().sum::<f64>() / block as f64;
            let b2 = p2[r].iter().sum::<f64>() / block as f64;
            tau.push(b2 - b1);
            mean_period.push(0.5 * (b1 + b2));
        }
    }
    if tau.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} valid period pairs; need at least 10",
            tau.len()
        )));
    }
    let (_, var_tau) = mean_var(&tau);
    let (t_mean, _) = mean_var(&mean_period);
    Ok(ClockStats {
        d: var_tau / (t_mean * t_mean),
        n1,
        n2,
        pairs: tau.len(),
    })
}

fn accuracy(periods: &[f64], valid: &[bool]) -> Result<f64> {
    let kept: Vec<f64> = periods
        .iter()
        .zip(valid)
        .filter(|(_, &v)| v)
        .map(|(&p, _)| p)
        .collect();
    if kept.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} valid periods; need at least 10",
            kept.len()
        )));
    }
    let (m, v) = mean_var(&kept);
    Ok(if v > 0.0 { m * m / v } else { f64::INFINITY })
}

/// Mean and population variance.
fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n;
    (m, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Frame;
    use num_complex::Complex64;

    fn traj(b1: Vec<Complex64>, b2: Vec<Complex64>, dt: f64, w: f64) -> Trajectory {
        Trajectory {
            dt,
            times: (0..b1.len()).map(|k| k as f64 * dt).collect(),
            b1,
            b2,
            frame: Frame::ReducedRotating,
            reference_frequency: w,
            seed: 0,
        }
    }

    #[test]
    fn constant_envelope_ticks_at_carrier_period() {
        let w = 2.0 * PI * 1000.0;
        let b = vec![Complex64::new(1.0, 0.0); 20_000];
        let tr = traj(b.clone(), b, 1.3e-5, w);
        let ticks = extract_ticks(&tr, 0).unwrap();
        for (k, t) in ticks.tick_times.iter().enumerate() {
            assert!((t - k as f64 * 1e-3).abs() < 1e-12, "{k}: {t}");
        }
        let stats = clock_stats(&ticks, &ticks).unwrap();
        assert_eq!(stats.d, 0.0);
        // round-off in the tick times leaves a tiny period variance
        assert!(stats.n1 > 1e12);
    }

    #[test]
    fn frequency_offset_envelope() {
        let w = 2.0 * PI * 1000.0;
        let dw = 2.0 * PI * 37.0;
        let dt = 7e-6;
        let b: Vec<Complex64> = (0..40_000)
            .map(|k| Complex64::from_polar(1.0, -dw * k as f64 * dt))
            .collect();
        let tr = traj(b.clone(), b, dt, w);
        let ticks = extract_ticks(&tr, 1).unwrap();
        let expect = 2.0 * PI / (w + dw);
        for p in ticks.periods() {
            assert!((p - expect).abs() < 1e-9 * expect);
        }
    }

    #[test]
    fn low_amplitude_ticks_are_flagged() {
        let w = 2.0 * PI * 1000.0;
        let dt = 1e-5;
        let b: Vec<Complex64> = (0..20_000)
            .map(|k| {
                let a = if (5000..5500).contains(&k) { 1e-3 } else { 1.0 };
                Complex64::new(a, 0.0)
            })
            .collect();
        let tr = traj(b.clone(), b, dt, w);
        let ticks = extract_ticks(&tr, 0).unwrap();
        let n_flag = ticks.flagged.iter().filter(|&&f| f).count();
        assert!((4..=7).contains(&n_flag), "{n_flag}");
        assert_eq!(ticks.valid_periods().iter().filter(|&&v| !v).count(), n_flag + 1);
    }

    #[test]
    fn block_statistics() {
        let periods1 = [1.0, 1.2, 0.8, 1.0].repeat(10);
        let periods2 = [1.0; 40];
        let to_ticks = |p: &[f64]| {
            let mut t = vec![0.0];
            for v in p {
                t.push(t.last().unwrap() + v);
            }
            TickSeries {
                flagged: vec![false; t.len()],
                tick_times: t,
            }
        };
        let (a, b) = (to_ticks(&periods1), to_ticks(&periods2));
        let per_period = clock_stats(&a, &b).unwrap();
        assert!((per_period.d - 0.02).abs() < 1e-12);
        assert!((per_period.n1 - 50.0).abs() < 1e-9);
        assert_eq!(per_period.n2, f64::INFINITY);
        let blocked = clock_stats_with(&a, &b, 4).unwrap();
        assert_eq!(blocked.pairs, 10);
        assert!(blocked.d < 1e-20);
        let mut short = a.clone();
        short.tick_times.truncate(8);
        short.flagged.truncate(8);
        assert!(clock_stats(&short, &b).is_err());
    }
}
