use crate::error::{Error, Result};
use crate::model::{sideband_weight, PhysicalParams};
use crate::steadystate::entropy_rates_from;
use crate::trajectory::Trajectory;

/// Across-ensemble sums on a common time grid, accumulated one trajectory
/// at a time so large ensembles never have to be held in memory.
///
/// Trajectories are added in index order; the sums are plain sequential
/// accumulations, so results are reproducible for a fixed order.
#[derive(Clone, Debug)]
pub struct EnsembleMoments {
    pub times: Vec<f64>,
    pub reference_frequency: f64,
    pub count: usize,
    first: Vec<[f64; 4]>,
    // upper triangle of u uᵀ, row major
    second: Vec<[f64; 10]>,
    // upper triangle of s sᵀ with s = (|b1|², |b2|², Re b1* b2)
    quad: Vec<[f64; 6]>,
}

fn tri(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // offsets of rows 0..3 in a 4x4 upper triangle
    [0, 4, 7, 9][i] + (j - i)
}

fn tri3(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    [0, 3, 5][i] + (j - i)
}

impl EnsembleMoments {
    pub fn new(times: Vec<f64>, reference_frequency: f64) -> Self {
        let n = times.len();
        Self {
            times,
            reference_frequency,
            count: 0,
            first: vec![[0.0; 4]; n],
            second: vec![[0.0; 10]; n],
            quad: vec![[0.0; 6]; n],
        }
    }

    pub fn from_ensemble(ensemble: &[Trajectory]) -> Result<Self> {
        let first = ensemble
            .first()
            .ok_or_else(|| Error::InsufficientData("empty ensemble".into()))?;
        let mut m = Self::new(first.times.clone(), first.reference_frequency);
        for tr in ensemble {
            m.add(tr)?;
        }
        Ok(m)
    }

    pub fn add(&mut self, traj: &Trajectory) -> Result<()> {
        if traj.times != self.times {
            return Err(Error::Dimension(
                "ensemble members must share one time grid".into(),
            ));
        }
        for k in 0..self.times.len() {
            let u = traj.state(k);
            let f = &mut self.first[k];
            let s = &mut self.second[k];
            for i in 0..4 {
                f[i] += u[i];
                for j in i..4 {
                    s[tri(i, j)] += u[i] * u[j];
                }
            }
            let q = [
                0.5 * (u[0] * u[0] + u[1] * u[1]),
                0.5 * (u[2] * u[2] + u[3] * u[3]),
                0.5 * (u[0] * u[2] + u[1] * u[3]),
            ];
            let qq = &mut self.quad[k];
            for i in 0..3 {
                for j in i..3 {
                    qq[tri3(i, j)] += q[i] * q[j];
                }
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Sample covariance (denominator `n - 1`) of the state at sample `k`.
    pub fn covariance(&self, k: usize) -> [[f64; 4]; 4] {
        let n = self.count as f64;
        let f = &self.first[k];
        let s = &self.second[k];
        let mut c = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                c[i][j] = (s[tri(i, j)] - f[i] * f[j] / n) / (n - 1.0);
            }
        }
        c
    }

    /// Ensemble correlation of the two lab-frame displacements at each
    /// sample. Points with zero variance in either clock are `NaN`.
    pub fn correlation(&self) -> Result<Vec<f64>> {
        if self.count < 2 {
            return Err(Error::InsufficientData("need at least 2 trajectories".into()));
        }
        Ok((0..self.times.len())
            .map(|k| {
                let c = self.covariance(k);
                let (sn, cs) = (self.reference_frequency * self.times[k]).sin_cos();
                // x_i = x̃_i cos ωt + p̃_i sin ωt
                let w = [[cs, sn], [cs, sn]];
                let cov = |a: usize, b: usize| {
                    let mut acc = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            acc += w[a][i] * w[b][j] * c[2 * a + i][2 * b + j];
                        }
                    }
                    acc
                };
                let (v1, v2) = (cov(0, 0), cov(1, 1));
                if v1 <= 0.0 || v2 <= 0.0 {
                    f64::NAN
                } else {
                    cov(0, 1) / (v1 * v2).sqrt()
                }
            })
            .collect())
    }

    /// Instantaneous entropy fluxes from the ensemble occupations, with
    /// standard errors.
    pub fn entropy_flux(&self, params: &PhysicalParams, omega_bar: f64) -> Result<FluxSeries> {
        if self.count < 50 {
            return Err(Error::InsufficientData(format!(
                "{} trajectories; flux estimates need at least 50",
                self.count
            )));
        }
        let n = self.count as f64;
        let weight = sideband_weight(params, omega_bar);
        let a = [
            params.g1 * params.g1,
            params.g2 * params.g2,
            2.0 * params.g1 * params.g2,
        ];
        let len = self.times.len();
        let mut out = FluxSeries::with_capacity(len);
        for k in 0..len {
            let c = self.covariance(k);
            let n1 = 0.5 * (c[0][0] + c[1][1]) - 0.5;
            let n2 = 0.5 * (c[2][2] + c[3][3]) - 0.5;
            let cross = 0.5 * (c[0][2] + c[1][3]);
            let na = weight * (a[0] * (n1 + 0.5) + a[1] * (n2 + 0.5) + a[2] * cross);
            let r = entropy_rates_from(n1, n2, na, params);

            // spread of the per-trajectory quadratic observables
            let s = &self.second[k];
            let raw_q = [
                0.5 * (s[tri(0, 0)] + s[tri(1, 1)]) / n,
                0.5 * (s[tri(2, 2)] + s[tri(3, 3)]) / n,
                0.5 * (s[tri(0, 2)] + s[tri(1, 3)]) / n,
            ];
            let qq = &self.quad[k];
            let cov_q = |i: usize, j: usize| qq[tri3(i, j)] / n - raw_q[i] * raw_q[j];
            let var_a: f64 = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| a[i] * a[j] * cov_q(i, j))
                .sum();
            out.mu_b1.push(r.mu_b1);
            out.mu_b2.push(r.mu_b2);
            out.mu_a.push(r.mu_a);
            out.err_b1
                .push(params.gamma1 / (params.nth1 + 0.5) * (cov_q(0, 0).max(0.0) / n).sqrt());
            out.err_b2
                .push(params.gamma2 / (params.nth2 + 0.5) * (cov_q(1, 1).max(0.0) / n).sqrt());
            out.err_a
                .push(2.0 * params.kappa * weight * (var_a.max(0.0) / n).sqrt());
        }
        Ok(out)
    }
}

/// Entropy-flux time series with their standard errors (1/s).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FluxSeries {
    pub mu_b1: Vec<f64>,
    pub mu_b2: Vec<f64>,
    pub mu_a: Vec<f64>,
    pub err_b1: Vec<f64>,
    pub err_b2: Vec<f64>,
    pub err_a: Vec<f64>,
}

impl FluxSeries {
    fn with_capacity(n: usize) -> Self {
        Self {
            mu_b1: Vec::with_capacity(n),
            mu_b2: Vec::with_capacity(n),
            mu_a: Vec::with_capacity(n),
            err_b1: Vec::with_capacity(n),
            err_b2: Vec::with_capacity(n),
            err_a: Vec::with_capacity(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransientResult {
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub flux: FluxSeries,
    pub transient_time: f64,
}

/// Ensemble transient correlation `R(t)` of the lab displacements with the
/// across-ensemble means removed. Undefined points are `NaN`.
pub fn transient_correlation(ensemble: &[Trajectory]) -> Result<Vec<f64>> {
    if ensemble.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 trajectories".into()));
    }
    EnsembleMoments::from_ensemble(ensemble)?.correlation()
}

/// Per-time entropy fluxes of the ensemble, evaluated with `params`.
pub fn transient_entropy_flux(
    ensemble: &[Trajectory],
    params: &PhysicalParams,
    omega_bar: f64,
) -> Result<FluxSeries> {
    if ensemble.len() < 50 {
        return Err(Error::InsufficientData(format!(
            "{} trajectories; flux estimates need at least 50",
            ensemble.len()
        )));
    }
    EnsembleMoments::from_ensemble(ensemble)?.entropy_flux(params, omega_bar)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransientOptions {
    /// Moving-median window as a fraction of the record length.
    pub smoothing_fraction: f64,
    /// Fraction of the maximum that marks the transient time.
    pub level: f64,
    /// Trailing fraction of the record tested for a plateau.
    pub plateau_fraction: f64,
    /// Allowed linear drift across the plateau window, relative to max |R|.
    pub plateau_tolerance: f64,
}

impl Default for TransientOptions {
    fn default() -> Self {
        Self {
            smoothing_fraction: 0.05,
            level: 0.95,
            plateau_fraction: 0.2,
            plateau_tolerance: 0.05,
        }
    }
}

/// Moving median with a window of `2·half_width + 1` samples. Near the ends
/// the window shrinks symmetrically, so monotone edges are preserved.
pub fn moving_median(x: &[f64], half_width: usize) -> Vec<f64> {
    let n = x.len();
    let mut buf = Vec::with_capacity(2 * half_width + 1);
    (0..n)
        .map(|i| {
            let h = half_width.min(i).min(n - 1 - i);
            buf.clear();
            buf.extend_from_slice(&x[i - h..=i + h]);
            buf.sort_by(f64::total_cmp);
            buf[h]
        })
        .collect()
}

pub fn transient_time(times: &[f64], r: &[f64]) -> Result<f64> {
    transient_time_with(times, r, &TransientOptions::default())
}

/// Time at which the smoothed `R` first reaches `level` times its maximum,
/// measured from `times[0]`.
///
/// The record must end on a plateau: a straight-line fit over the trailing
/// window may drift by at most `max(3σ_res, plateau_tolerance·max|R|)`.
pub fn transient_time_with(times: &[f64], r: &[f64], opts: &TransientOptions) -> Result<f64> {
    if times.len() != r.len() {
        return Err(Error::Dimension("times and R differ in length".into()));
    }
    if r.len() < 10 {
        return Err(Error::InsufficientData("R needs at least 10 samples".into()));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData("R contains undefined points".into()));
    }
    let n = r.len();
    let smooth = moving_median(r, ((opts.smoothing_fraction * n as f64) / 2.0).round() as usize);
    let peak = smooth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let start = n - ((opts.plateau_fraction * n as f64).round() as usize).clamp(3, n);
    let (t_tail, r_tail) = (&times[start..], &r[start..]);
    let (slope, intercept) = linear_fit(t_tail, r_tail);
    let span = t_tail[t_tail.len() - 1] - t_tail[0];
    let resid = (r_tail
        .iter()
        .zip(t_tail)
        .map(|(v, t)| (v - intercept - slope * t).powi(2))
        .sum::<f64>()
        / r_tail.len() as f64)
        .sqrt();
    if (slope * span).abs() > (3.0 * resid).max(opts.plateau_tolerance * scale) {
        return Err(Error::NoPlateau);
    }

    let target = opts.level * peak;
    let k = smooth
        .iter()
        .position(|&v| v >= target)
        .expect("maximum is attained");
    Ok(times[k] - times[0])
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}
