//! Coupling sweeps, landmark detection, quench ensembles and clock spectra.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    self, clock_stats_with, extract_ticks_with, power_spectrum_complex, EnsembleMoments,
    Spectrum, TickOptions, TransientOptions, TransientResult,
};
use crate::model::{normal_modes_numeric, reduced_dynamics, LinearDynamics, NormalModes, PhysicalParams};
use crate::steadystate::{ness, CovarianceState, EntropyRates};
use crate::trajectory::{
    derive_seed, run_ensemble_range, simulate_with, InitialState, Integrator, SimulationOptions,
    Trajectory,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Normal modes and Lyapunov quantities only; trajectory columns are NaN.
    Analytic,
    /// Trajectory metrics; the analytic columns are always filled as well.
    MonteCarlo,
    Both,
}

impl Protocol {
    fn runs_trajectories(self) -> bool {
        !matches!(self, Protocol::Analytic)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    pub protocol: Protocol,
    pub master_seed: u64,
    /// Recorded trajectory length per point (s).
    pub duration: f64,
    pub dt: f64,
    /// Burn-in in units of the slowest mode lifetime `1/γ₊`.
    pub burn_in_lifetimes: f64,
    /// Averaging window for the period comparison behind `D` (s).
    pub readout_window: f64,
    /// Envelope floor for tick extraction, relative to the RMS envelope.
    pub amplitude_floor: f64,
    /// Batches for the standard error of `C`.
    pub batches: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            protocol: Protocol::Both,
            master_seed: 0,
            duration: 10.0,
            dt: 2.5e-6,
            burn_in_lifetimes: 5.0,
            readout_window: 3e-3,
            amplitude_floor: 0.3,
            batches: 20,
        }
    }
}

/// One sweep point. Rates are in rad/s (1/s for entropy rates).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub g_over_kappa: f64,
    pub c: f64,
    /// Batch-means standard error of `c`.
    pub c_err: f64,
    pub d: f64,
    pub n1: f64,
    pub n2: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub ratio: f64,
    pub mu_b1: f64,
    pub mu_b2: f64,
    pub mu_a: f64,
    pub pi_s: f64,
    pub analytic_c: f64,
}

/// `n` evenly spaced points on `[0, max]`.
pub fn linear_grid(max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| max * k as f64 / (n - 1) as f64).collect(),
    }
}

/// 26 points on `[0, 0.05]`.
pub fn default_grid() -> Vec<f64> {
    linear_grid(0.05, 26)
}

/// Normal modes, covariance and entropy rates of the reduced model.
#[derive(Clone, Debug)]
pub struct AnalyticPoint {
    pub params: PhysicalParams,
    pub dynamics: LinearDynamics,
    pub modes: NormalModes,
    pub covariance: CovarianceState,
    pub rates: EntropyRates,
}

pub fn analytic_point(params: &PhysicalParams) -> Result<AnalyticPoint> {
    let dynamics = reduced_dynamics(params)?;
    let modes = normal_modes_numeric(&dynamics)?;
    let (covariance, rates) = ness(&dynamics)?;
    Ok(AnalyticPoint {
        params: *params,
        dynamics,
        modes,
        covariance,
        rates,
    })
}

/// Trajectory-derived synchronization and timekeeping metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloMetrics {
    pub c: f64,
    pub c_err: f64,
    pub d: f64,
    pub n1: f64,
    pub n2: f64,
}

/// Stationary run used by the sweep: exact propagator, burn-in from the
/// uncoupled thermal state.
pub fn stationary_run(point: &AnalyticPoint, opts: &SweepOptions, seed: u64) -> Result<Trajectory> {
    let mut sim = SimulationOptions::new(opts.duration, opts.dt, Integrator::Exact);
    sim.burn_in = opts.burn_in_lifetimes / point.modes.gamma_plus();
    sim.initial = InitialState::UncoupledThermal;
    simulate_with(&point.dynamics, &sim, seed)
}

pub fn monte_carlo_metrics(traj: &Trajectory, opts: &SweepOptions) -> Result<MonteCarloMetrics> {
    let x1 = traj.displacement(0);
    let x2 = traj.displacement(1);
    let (c, c_err) = metrics::pearson_with_error(&x1, &x2, opts.batches)?;
    let tick_opts = TickOptions {
        amplitude_floor: opts.amplitude_floor,
    };
    let t1 = extract_ticks_with(traj, 0, &tick_opts)?;
    let t2 = extract_ticks_with(traj, 1, &tick_opts)?;
    let carrier_period = 2.0 * std::f64::consts::PI / traj.reference_frequency;
    let block = (opts.readout_window / carrier_period).round().max(1.0) as usize;
    let stats = clock_stats_with(&t1, &t2, block)?;
    Ok(MonteCarloMetrics {
        c,
        c_err,
        d: stats.d,
        n1: stats.n1,
        n2: stats.n2,
    })
}

fn sweep_point(params: &PhysicalParams, g: f64, index: usize, opts: &SweepOptions) -> Result<SweepRow> {
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: format!("coupling ratios must be >= 0, got {g}"),
        });
    }
    let p = params.with_coupling(g);
    let point = analytic_point(&p)?;
    let mc = if opts.protocol.runs_trajectories() {
        let traj = stationary_run(&point, opts, derive_seed(opts.master_seed, index as u64))?;
        monte_carlo_metrics(&traj, opts)?
    } else {
        MonteCarloMetrics {
            c: f64::NAN,
            c_err: f64::NAN,
            d: f64::NAN,
            n1: f64::NAN,
            n2: f64::NAN,
        }
    };
    let m = &point.modes;
    Ok(SweepRow {
        g_over_kappa: g,
        c: mc.c,
        c_err: mc.c_err,
        d: mc.d,
        n1: mc.n1,
        n2: mc.n2,
        gamma_plus: m.gamma_plus(),
        gamma_minus: m.gamma_minus(),
        ratio: m.linewidth_ratio(),
        mu_b1: point.rates.mu_b1,
        mu_b2: point.rates.mu_b2,
        mu_a: point.rates.mu_a,
        pi_s: point.rates.pi_s,
        analytic_c: point.covariance.displacement_correlation(),
    })
}

/// Sweeps `|G|/κ` over `grid`, keeping the sign pattern of `params`.
/// Points run in parallel; rows come back in grid order and point `k` uses
/// the seed `derive_seed(master_seed, k)`.
pub fn sweep_coupling(params: &PhysicalParams, grid: &[f64], opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    params.validate()?;
    if grid.is_empty() {
        return Err(Error::InsufficientData("empty coupling grid".into()));
    }
    grid.par_iter()
        .enumerate()
        .map(|(k, &g)| sweep_point(params, g, k, opts))
        .collect()
}

/// Level used for the synchronization threshold.
pub const THRESHOLD_LEVEL: f64 = 0.5;

/// First crossing of the analytic `C` through 0.5, linearly interpolated.
pub fn find_threshold(rows: &[SweepRow]) -> Result<f64> {
    let c = |r: &SweepRow| r.analytic_c;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if c(a) < THRESHOLD_LEVEL && c(b) >= THRESHOLD_LEVEL {
            let f = (THRESHOLD_LEVEL - c(a)) / (c(b) - c(a));
            return Ok(a.g_over_kappa + f * (b.g_over_kappa - a.g_over_kappa));
        }
    }
    if let Some(first) = rows.first() {
        if c(first) >= THRESHOLD_LEVEL {
            return Ok(first.g_over_kappa);
        }
    }
    Err(Error::NoCrossing {
        level: THRESHOLD_LEVEL,
    })
}

/// Coupling of maximal `Π_s`, refined by a parabola through the discrete
/// maximum and its two neighbours.
pub fn find_turning_point(rows: &[SweepRow]) -> Result<f64> {
    if rows.len() < 3 {
        return Err(Error::InsufficientData("need at least 3 sweep rows".into()));
    }
    let k = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.pi_s.total_cmp(&b.1.pi_s))
        .map(|(i, _)| i)
        .expect("non-empty");
    if k == 0 || k == rows.len() - 1 {
        return Err(Error::BoundaryMaximum { index: k });
    }
    let (x0, x1, x2) = (rows[k - 1].g_over_kappa, rows[k].g_over_kappa, rows[k + 1].g_over_kappa);
    let (y0, y1, y2) = (rows[k - 1].pi_s, rows[k].pi_s, rows[k + 1].pi_s);
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if den == 0.0 {
        return Ok(x1);
    }
    Ok(x1 - 0.5 * num / den)
}

/// A pair `(i, j)` with `Π_s(i) < Π_s(j)` but `C(i) > C(j)` (analytic `C`):
/// synchronization is not monotone in the entropy production.
pub fn non_monotonic_witness(rows: &[SweepRow]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..rows.len() {
        for j in 0..rows.len() {
            let (a, b) = (&rows[i], &rows[j]);
            if a.pi_s < b.pi_s && a.analytic_c > b.analytic_c {
                let gap = a.analytic_c - b.analytic_c;
                if best.is_none_or(|(_, _, g)| gap > g) {
                    best = Some((i, j, gap));
                }
            }
        }
    }
    best.map(|(i, j, _)| (i, j))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransientSetup {
    pub n_traj: usize,
    /// Record length after the quench (s).
    pub duration: f64,
    pub dt: f64,
    pub record_every: usize,
    /// Trajectories simulated per batch before folding into the moments.
    pub chunk: usize,
    pub smoothing_fraction: f64,
    pub plateau_fraction: f64,
    pub plateau_tolerance: f64,
}

impl Default for TransientSetup {
    fn default() -> Self {
        Self {
            n_traj: 600,
            duration: 0.04,
            dt: 2.5e-6,
            record_every: 1,
            chunk: 50,
            smoothing_fraction: 0.05,
            plateau_fraction: 0.2,
            plateau_tolerance: 0.05,
        }
    }
}

impl TransientSetup {
    fn metric_options(&self) -> TransientOptions {
        TransientOptions {
            smoothing_fraction: self.smoothing_fraction,
            plateau_fraction: self.plateau_fraction,
            plateau_tolerance: self.plateau_tolerance,
            ..TransientOptions::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransientExperiment {
    pub g_over_kappa: f64,
    pub result: TransientResult,
    /// Mean of `R` over the trailing plateau window.
    pub plateau: f64,
    /// Maximum of the smoothed `R`.
    pub max_r: f64,
    /// Stationary rates of the coupled system.
    pub ness: EntropyRates,
    /// `∫ |μ_a| dt` from the quench to the transient time.
    pub integrated_mu_a: f64,
}

impl TransientExperiment {
    /// Relative excess of the peak over the plateau.
    pub fn overshoot(&self) -> f64 {
        self.max_r / self.plateau - 1.0
    }

    /// Mean cavity flux over the transient, `∫|μ_a| dt / t_tr`.
    pub fn mean_mu_a(&self) -> f64 {
        self.integrated_mu_a / self.result.transient_time
    }

    /// Time averages of the three fluxes over the trailing plateau window
    /// and the largest single-time standard error in that window. Averaging
    /// correlated points cannot increase the error, so the latter is a
    /// conservative bound on the error of the former.
    pub fn tail_fluxes(&self, fraction: f64) -> [(f64, f64); 3] {
        let f = &self.result.flux;
        let n = f.mu_a.len();
        let start = n - ((fraction * n as f64).round() as usize).clamp(1, n);
        let stat = |v: &[f64], e: &[f64]| {
            let m = v[start..].iter().sum::<f64>() / (n - start) as f64;
            let s = e[start..].iter().cloned().fold(0.0, f64::max);
            (m, s)
        };
        [
            stat(&f.mu_b1, &f.err_b1),
            stat(&f.mu_b2, &f.err_b2),
            stat(&f.mu_a, &f.err_a),
        ]
    }
}

/// A stationary second moment estimated from a trajectory next to its
/// Lyapunov value.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentCheck {
    pub name: &'static str,
    pub estimate: f64,
    pub stderr: f64,
    pub expected: f64,
}

impl MomentCheck {
    /// Deviation in standard errors.
    pub fn z(&self) -> f64 {
        (self.estimate - self.expected).abs() / self.stderr
    }
}

/// Time averages of `|b1|²`, `|b2|²`, `Re⟨b1* b2⟩`, `Im⟨b1* b2⟩` and the
/// displacement correlation against the covariance of `point`. Errors are
/// batch means over `n_batches` contiguous blocks.
pub fn lyapunov_moment_checks(point: &AnalyticPoint, traj: &Trajectory, n_batches: usize) -> Result<Vec<MomentCheck>> {
    let v = &point.covariance.v;
    if v.nrows() != 4 {
        return Err(Error::Dimension(format!("expected a 4x4 covariance, got {}", v.nrows())));
    }
    let (b1, b2) = (&traj.b1, &traj.b2);
    let avg = |f: &dyn Fn(usize) -> f64| {
        metrics::batch_means(traj.len(), n_batches, |r: std::ops::Range<usize>| {
            let n = r.len() as f64;
            Ok(r.map(f).sum::<f64>() / n)
        })
    };
    let mut out = Vec::new();
    let mut push = |name, (estimate, stderr): (f64, f64), expected| {
        out.push(MomentCheck {
            name,
            estimate,
            stderr,
            expected,
        })
    };
    push("n1+1/2", avg(&|k| b1[k].norm_sqr())?, 0.5 * (v[(0, 0)] + v[(1, 1)]));
    push("n2+1/2", avg(&|k| b2[k].norm_sqr())?, 0.5 * (v[(2, 2)] + v[(3, 3)]));
    push("re_b1b2", avg(&|k| (b1[k].conj() * b2[k]).re)?, 0.5 * (v[(0, 2)] + v[(1, 3)]));
    push("im_b1b2", avg(&|k| (b1[k].conj() * b2[k]).im)?, 0.5 * (v[(0, 3)] - v[(1, 2)]));
    let (c, c_err) = metrics::pearson_with_error(&traj.displacement(0), &traj.displacement(1), n_batches)?;
    push("C", (c, c_err), point.covariance.displacement_correlation());
    Ok(out)
}

/// Quench protocol: every trajectory starts from the uncoupled thermal state
/// and evolves under the coupled dynamics from `t = 0`. Trajectories are run
/// in chunks and folded into ensemble moments in index order.
pub fn transient_experiment(
    params: &PhysicalParams,
    g_over_kappa: f64,
    setup: &TransientSetup,
    master_seed: u64,
) -> Result<TransientExperiment> {
    if setup.n_traj < 2 {
        return Err(Error::InvalidParameter {
            name: "n_traj",
            reason: "a transient ensemble needs at least 2 trajectories".into(),
        });
    }
    let p = params.with_coupling(g_over_kappa);
    let point = analytic_point(&p)?;
    let mut sim = SimulationOptions::new(setup.duration, setup.dt, Integrator::Exact);
    sim.initial = InitialState::UncoupledThermal;
    sim.record_every = setup.record_every;

    let chunk = setup.chunk.max(1);
    let mut moments: Option<EnsembleMoments> = None;
    let mut start = 0;
    while start < setup.n_traj {
        let end = (start + chunk).min(setup.n_traj);
        let batch = run_ensemble_range(&point.dynamics, start..end, &sim, master_seed)?;
        let m = moments.get_or_insert_with(|| {
            EnsembleMoments::new(batch[0].times.clone(), batch[0].reference_frequency)
        });
        for tr in &batch {
            m.add(tr)?;
        }
        start = end;
    }
    let moments = moments.expect("at least one chunk");

    let r = moments.correlation()?;
    let flux = moments.entropy_flux(&p, point.dynamics.omega_bar)?;
    let times = moments.times.clone();
    let opts = setup.metric_options();
    let transient_time = metrics::transient_time_with(&times, &r, &opts)?;

    let n = r.len();
    let start = n - ((opts.plateau_fraction * n as f64).round() as usize).clamp(1, n);
    let plateau = r[start..].iter().sum::<f64>() / (n - start) as f64;
    let smooth = metrics::moving_median(&r, ((opts.smoothing_fraction * n as f64) / 2.0).round() as usize);
    let max_r = smooth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let t0 = times[0];
    let mut integrated_mu_a = 0.0;
    for k in 1..n {
        if times[k] - t0 > transient_time {
            break;
        }
        integrated_mu_a += 0.5 * (flux.mu_a[k].abs() + flux.mu_a[k - 1].abs()) * (times[k] - times[k - 1]);
    }

    Ok(TransientExperiment {
        g_over_kappa,
        result: TransientResult {
            times,
            r,
            flux,
            transient_time,
        },
        plateau,
        max_r,
        ness: point.rates,
        integrated_mu_a,
    })
}

/// Lab-frame spectrum of one clock from its envelope: the two-sided
/// envelope spectrum is mirrored onto `f_ref - f`, so the result is the
/// one-sided displacement spectrum near the carrier.
pub fn clock_spectrum(traj: &Trajectory, clock: usize, segment: usize) -> Result<Spectrum> {
    let s = power_spectrum_complex(traj.envelope(clock), traj.dt, segment)?;
    let f_ref = traj.reference_frequency / (2.0 * std::f64::consts::PI);
    let mut pairs: Vec<(f64, f64)> = s
        .frequencies
        .iter()
        .zip(&s.psd)
        .map(|(f, p)| (f_ref - f, *p))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Spectrum {
        frequencies: pairs.iter().map(|p| p.0).collect(),
        psd: pairs.iter().map(|p| p.1).collect(),
    })
}

#[derive(Clone, Debug)]
pub struct SpectrumReport {
    pub clock1: Spectrum,
    pub clock2: Spectrum,
    /// Peak frequencies (Hz) of the sum of the two max-normalized spectra.
    pub peaks: Vec<f64>,
}

impl SpectrumReport {
    pub fn from_trajectory(traj: &Trajectory, segment: usize) -> Result<Self> {
        let clock1 = clock_spectrum(traj, 0, segment)?;
        let clock2 = clock_spectrum(traj, 1, segment)?;
        let max1 = clock1.psd.iter().cloned().fold(0.0, f64::max);
        let max2 = clock2.psd.iter().cloned().fold(0.0, f64::max);
        let combined = Spectrum {
            frequencies: clock1.frequencies.clone(),
            psd: clock1
                .psd
                .iter()
                .zip(&clock2.psd)
                .map(|(a, b)| a / max1 + b / max2)
                .collect(),
        };
        let peaks = metrics::find_peaks(&combined, 0.1, 0.5)
            .into_iter()
            .map(|i| combined.frequencies[i])
            .collect();
        Ok(Self {
            clock1,
            clock2,
            peaks,
        })
    }
}

/// Stationary trajectory at one coupling, for traces and spectra.
pub fn stationary_trajectory(
    params: &PhysicalParams,
    g_over_kappa: f64,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<(AnalyticPoint, Trajectory)> {
    let point = analytic_point(&params.with_coupling(g_over_kappa))?;
    let opts = SweepOptions {
        duration,
        dt,
        ..SweepOptions::default()
    };
    let traj = stationary_run(&point, &opts, seed)?;
    Ok((point, traj))
}

/// Coefficient of determination of an ordinary least-squares line.
pub fn linear_r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}

/// Spearman rank correlation (no tie correction).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}
