//! Stochastic time stepping of the reduced envelope model.
//!
//! Both integrators advance the real state `u = (x̃1, p̃1, x̃2, p̃2)` by
//! `u ← Φ u + L z` with `z` standard normal:
//!
//! * Euler-Maruyama: `Φ = I + A dt`, `L Lᵀ = D dt`;
//! * exact Ornstein-Uhlenbeck update: `Φ = e^{A dt}`,
//!   `L Lᵀ = ∫₀^dt e^{As} D e^{Aᵀs} ds`, evaluated with Van Loan's block
//!   exponential.
//!
//! Seeding: trajectory `k` of an ensemble uses `derive_seed(master, k)`, a
//! splitmix64 hash of the pair, to seed a ChaCha8 stream.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Frame, LinearDynamics, SQRT2};
use crate::steadystate::steady_covariance;

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Spacing of the recorded samples.
    pub dt: f64,
    pub times: Vec<f64>,
    pub b1: Vec<Complex64>,
    pub b2: Vec<Complex64>,
    pub frame: Frame,
    pub reference_frequency: f64,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn envelope(&self, clock: usize) -> &[Complex64] {
        match clock {
            0 => &self.b1,
            1 => &self.b2,
            _ => panic!("clock index must be 0 or 1, got {clock}"),
        }
    }

    /// Lab-frame displacement `x(t) = √2 Re[b(t) e^{-iω_ref t}]`.
    pub fn displacement(&self, clock: usize) -> Vec<f64> {
        let w = self.reference_frequency;
        self.envelope(clock)
            .iter()
            .zip(&self.times)
            .map(|(b, &t)| SQRT2 * (b * Complex64::from_polar(1.0, -w * t)).re)
            .collect()
    }

    /// State vector `(x̃1, p̃1, x̃2, p̃2)` at sample `k`.
    pub fn state(&self, k: usize) -> [f64; 4] {
        let (a, b) = (self.b1[k], self.b2[k]);
        [SQRT2 * a.re, SQRT2 * a.im, SQRT2 * b.re, SQRT2 * b.im]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    EulerMaruyama,
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    /// Independent thermal modes at the bath occupations (coupling off).
    UncoupledThermal,
    /// Draw from the stationary covariance of the dynamics itself.
    Stationary,
    /// Fixed real state `(x̃1, p̃1, x̃2, p̃2)`.
    Fixed([f64; 4]),
}

#[derive(Clone, Debug)]
pub struct SimulationOptions {
    /// Recorded duration after burn-in.
    pub duration: f64,
    pub dt: f64,
    /// Simulated but not recorded.
    pub burn_in: f64,
    /// Keep every `record_every`-th step.
    pub record_every: usize,
    pub initial: InitialState,
    pub integrator: Integrator,
}

impl SimulationOptions {
    pub fn new(duration: f64, dt: f64, integrator: Integrator) -> Self {
        Self {
            duration,
            dt,
            burn_in: 0.0,
            record_every: 1,
            initial: InitialState::UncoupledThermal,
            integrator,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be > 0, got {}", self.dt),
            });
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "duration",
                reason: format!("must be >= 0, got {}", self.duration),
            });
        }
        if !(self.burn_in.is_finite() && self.burn_in >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "burn_in",
                reason: format!("must be >= 0, got {}", self.burn_in),
            });
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter {
                name: "record_every",
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Counter-based seed derivation (splitmix64 finalizer on a mixed pair).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        ^ index.rotate_left(32);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Square root `L` with `L Lᵀ = S` for symmetric PSD `S`; tiny negative
/// eigenvalues from round-off are clamped to zero.
pub fn psd_sqrt(s: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Largest stable Euler-Maruyama step for `dynamics`.
pub fn max_euler_step(dynamics: &LinearDynamics) -> f64 {
    let rate = dynamics
        .drift_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if rate > 0.0 {
        0.05 / rate
    } else {
        f64::INFINITY
    }
}

/// Discrete one-step map `u ← Φ u + L z`.
#[derive(Clone, Debug)]
pub struct Stepper {
    pub phi: DMatrix<f64>,
    pub noise: DMatrix<f64>,
    pub dt: f64,
}

impl Stepper {
    pub fn new(dynamics: &LinearDynamics, dt: f64, integrator: Integrator) -> Result<Self> {
        dynamics.ensure_stable()?;
        let n = dynamics.dim();
        match integrator {
            Integrator::EulerMaruyama => {
                let suggested = max_euler_step(dynamics);
                if dt > suggested {
                    return Err(Error::StepTooLarge { dt, suggested });
                }
                let phi = DMatrix::identity(n, n) + &dynamics.drift * dt;
                let noise = psd_sqrt(&(&dynamics.diffusion * dt));
                Ok(Self { phi, noise, dt })
            }
            Integrator::Exact => {
                let decay = dynamics
                    .drift_eigenvalues()
                    .iter()
                    .map(|z| z.re.abs())
                    .fold(0.0, f64::max);
                // the block exponential overflows once e^{|Re λ| dt} is huge;
                // for long steps use Q = V - Φ V Φᵀ instead
                let (phi, q) = if decay * dt <= 1.0 {
                    van_loan(&dynamics.drift, &dynamics.diffusion, dt)
                } else {
                    let phi = (&dynamics.drift * dt).exp();
                    let v = steady_covariance(dynamics)?;
                    let q = &v - &phi * &v * phi.transpose();
                    (phi, q)
                };
                Ok(Self {
                    phi,
                    noise: psd_sqrt(&q),
                    dt,
                })
            }
        }
    }
}

/// `(e^{A dt}, ∫₀^dt e^{As} D e^{Aᵀs} ds)`.
pub fn van_loan(a: &DMatrix<f64>, d: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(-a * dt));
    m.view_mut((0, n), (n, n)).copy_from(&(d * dt));
    m.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * dt));
    let e = m.exp();
    let phi = e.view((n, n), (n, n)).transpose();
    let q = &phi * e.view((0, n), (n, n));
    let q = (&q + q.transpose()) * 0.5;
    (phi, q)
}

fn require_reduced(dynamics: &LinearDynamics) -> Result<()> {
    if dynamics.frame != Frame::ReducedRotating {
        return Err(Error::FrameMismatch {
            expected: Frame::ReducedRotating,
            found: dynamics.frame,
        });
    }
    Ok(())
}

fn initial_state(
    dynamics: &LinearDynamics,
    initial: &InitialState,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    let p = &dynamics.params;
    let cov_sqrt = match initial {
        InitialState::Fixed(u) => return Ok(DVector::from_row_slice(u)),
        InitialState::UncoupledThermal => {
            let s1 = (p.nth1 + 0.5).sqrt();
            let s2 = (p.nth2 + 0.5).sqrt();
            DMatrix::from_diagonal(&DVector::from_row_slice(&[s1, s1, s2, s2]))
        }
        InitialState::Stationary => psd_sqrt(&steady_covariance(dynamics)?),
    };
    let z = DVector::from_fn(4, |_, _| StandardNormal.sample(rng));
    Ok(cov_sqrt * z)
}

/// Runs one trajectory with a prepared stepper.
pub fn simulate_with_stepper(
    dynamics: &LinearDynamics,
    stepper: &Stepper,
    opts: &SimulationOptions,
    seed: u64,
) -> Result<Trajectory> {
    require_reduced(dynamics)?;
    opts.validate()?;
    let dt = stepper.dt;
    let burn_steps = (opts.burn_in / dt).round() as usize;
    let rec_steps = (opts.duration / dt).round() as usize;
    let n_rec = rec_steps / opts.record_every + 1;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u0 = initial_state(dynamics, &opts.initial, &mut rng)?;
    let mut u = [u0[0], u0[1], u0[2], u0[3]];

    // fixed-size copies keep the inner loop allocation free
    let mut phi = [[0.0; 4]; 4];
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            phi[i][j] = stepper.phi[(i, j)];
            l[i][j] = stepper.noise[(i, j)];
        }
    }
    let step = |u: &mut [f64; 4], rng: &mut ChaCha8Rng| {
        let z: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut *rng));
        let mut next = [0.0; 4];
        for i in 0..4 {
            let mut acc = 0.0;
            for j in 0..4 {
                acc += phi[i][j] * u[j] + l[i][j] * z[j];
            }
            next[i] = acc;
        }
        *u = next;
    };

    for k in 0..burn_steps {
        step(&mut u, &mut rng);
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { step: k + 1 });
        }
    }

    let t0 = burn_steps as f64 * dt;
    let mut times = Vec::with_capacity(n_rec);
    let mut b1 = Vec::with_capacity(n_rec);
    let mut b2 = Vec::with_capacity(n_rec);
    let push = |u: &[f64; 4], k: usize, times: &mut Vec<f64>, b1: &mut Vec<Complex64>, b2: &mut Vec<Complex64>| {
        times.push(t0 + k as f64 * dt);
        b1.push(Complex64::new(u[0], u[1]) / SQRT2);
        b2.push(Complex64::new(u[2], u[3]) / SQRT2);
    };
    push(&u, 0, &mut times, &mut b1, &mut b2);
    for k in 1..=rec_steps {
        step(&mut u, &mut rng);
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                step: burn_steps + k,
            });
        }
        if k % opts.record_every == 0 {
            push(&u, k, &mut times, &mut b1, &mut b2);
        }
    }

    Ok(Trajectory {
        dt: dt * opts.record_every as f64,
        times,
        b1,
        b2,
        frame: dynamics.frame,
        reference_frequency: dynamics.reference_frequency,
        seed,
    })
}

pub fn simulate_with(
    dynamics: &LinearDynamics,
    opts: &SimulationOptions,
    seed: u64,
) -> Result<Trajectory> {
    require_reduced(dynamics)?;
    opts.validate()?;
    let stepper = Stepper::new(dynamics, opts.dt, opts.integrator)?;
    simulate_with_stepper(dynamics, &stepper, opts, seed)
}

/// Euler-Maruyama run from the uncoupled thermal state.
pub fn simulate(dynamics: &LinearDynamics, duration: f64, dt: f64, seed: u64) -> Result<Trajectory> {
    simulate_with(
        dynamics,
        &SimulationOptions::new(duration, dt, Integrator::EulerMaruyama),
        seed,
    )
}

/// Exact OU update from the uncoupled thermal state; valid for any `dt`.
pub fn propagate_exact(
    dynamics: &LinearDynamics,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    simulate_with(
        dynamics,
        &SimulationOptions::new(duration, dt, Integrator::Exact),
        seed,
    )
}

/// Independent trajectories `0..n_traj`, returned in index order.
pub fn run_ensemble_with(
    dynamics: &LinearDynamics,
    n_traj: usize,
    opts: &SimulationOptions,
    master_seed: u64,
) -> Result<Vec<Trajectory>> {
    run_ensemble_range(dynamics, 0..n_traj, opts, master_seed)
}

/// Trajectories with indices in `range`; lets callers process large
/// ensembles in chunks while keeping per-index seeds.
pub fn run_ensemble_range(
    dynamics: &LinearDynamics,
    range: std::ops::Range<usize>,
    opts: &SimulationOptions,
    master_seed: u64,
) -> Result<Vec<Trajectory>> {
    if range.is_empty() {
        return Err(Error::InvalidParameter {
            name: "n_traj",
            reason: "must be >= 1".into(),
        });
    }
    require_reduced(dynamics)?;
    opts.validate()?;
    let stepper = Stepper::new(dynamics, opts.dt, opts.integrator)?;
    range
        .into_par_iter()
        .map(|k| simulate_with_stepper(dynamics, &stepper, opts, derive_seed(master_seed, k as u64)))
        .collect()
}

/// Ensemble of Euler-Maruyama runs. With `quench`, every trajectory starts
/// in the uncoupled thermal state at `t = 0` and evolves under `dynamics`;
/// without it, trajectories start from the stationary state.
pub fn run_ensemble(
    dynamics: &LinearDynamics,
    n_traj: usize,
    duration: f64,
    dt: f64,
    master_seed: u64,
    quench: bool,
) -> Result<Vec<Trajectory>> {
    let mut opts = SimulationOptions::new(duration, dt, Integrator::EulerMaruyama);
    opts.initial = if quench {
        InitialState::UncoupledThermal
    } else {
        InitialState::Stationary
    };
    run_ensemble_with(dynamics, n_traj, &opts, master_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reduced_dynamics, PhysicalParams};

    fn small_params() -> PhysicalParams {
        let mut p = PhysicalParams::paper();
        p.nth1 = 100.0;
        p.nth2 = 100.0;
        p
    }

    #[test]
    fn deterministic_decay_without_noise() {
        let mut p = small_params().uncoupled();
        p.nth1 = 0.0;
        p.nth2 = 0.0;
        let mut dynamics = reduced_dynamics(&p).unwrap();
        dynamics.diffusion.fill(0.0);
        for integrator in [Integrator::EulerMaruyama, Integrator::Exact] {
            let mut opts = SimulationOptions::new(0.05, 1e-7, integrator);
            opts.initial = InitialState::Fixed([SQRT2, 0.0, 0.0, 0.0]);
            let tr = simulate_with(&dynamics, &opts, 1).unwrap();
            // Euler-Maruyama inflates the amplitude by about Δω² dt t / 2
            let tol = if integrator == Integrator::Exact { 1e-9 } else { 5e-3 };
            for (b, t) in tr.b1.iter().zip(&tr.times).step_by(9973) {
                let expect = (-p.gamma1 * t / 2.0).exp();
                assert!((b.norm() - expect).abs() < tol, "{integrator:?} t={t}");
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let dynamics = reduced_dynamics(&small_params()).unwrap();
        let a = simulate(&dynamics, 0.01, 1e-5, 9).unwrap();
        let b = simulate(&dynamics, 0.01, 1e-5, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate(&dynamics, 0.01, 1e-5, 10).unwrap();
        assert_ne!(a.b1, c.b1);
    }

    #[test]
    fn step_too_large_is_reported() {
        let dynamics = reduced_dynamics(&small_params().with_coupling(0.05)).unwrap();
        match simulate(&dynamics, 0.01, 1e-3, 1) {
            Err(Error::StepTooLarge { suggested, .. }) => assert!(suggested < 1e-3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn full_frame_rejected() {
        let dynamics = crate::model::full_drift_and_diffusion(&small_params());
        assert!(matches!(
            propagate_exact(&dynamics, 1e-3, 1e-6, 0),
            Err(Error::FrameMismatch { .. })
        ));
    }

    #[test]
    fn large_step_exact_is_stationary() {
        let dynamics = reduced_dynamics(&small_params().with_coupling(0.02)).unwrap();
        let stepper = Stepper::new(&dynamics, 10.0, Integrator::Exact).unwrap();
        let v = steady_covariance(&dynamics).unwrap();
        assert!(stepper.phi.norm() < 1e-12);
        let q = &stepper.noise * stepper.noise.transpose();
        assert!((q - &v).norm() < 1e-9 * v.norm());
    }

    #[test]
    fn van_loan_matches_stationary_identity() {
        let dynamics = reduced_dynamics(&small_params().with_coupling(0.01)).unwrap();
        let v = steady_covariance(&dynamics).unwrap();
        let (phi, q) = van_loan(&dynamics.drift, &dynamics.diffusion, 3e-4);
        let alt = &v - &phi * &v * phi.transpose();
        assert!((q - alt).norm() < 1e-8 * v.norm());
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for k in 0..10_000 {
            assert!(seen.insert(derive_seed(42, k)));
        }
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }

    #[test]
    fn ensemble_of_one_matches_simulate() {
        let dynamics = reduced_dynamics(&small_params()).unwrap();
        let ens = run_ensemble(&dynamics, 1, 0.005, 1e-5, 77, true).unwrap();
        let single = simulate(&dynamics, 0.005, 1e-5, derive_seed(77, 0)).unwrap();
        assert_eq!(ens[0], single);
    }

    #[test]
    fn record_every_decimates() {
        let dynamics = reduced_dynamics(&small_params()).unwrap();
        let mut opts = SimulationOptions::new(1e-3, 1e-5, Integrator::Exact);
        let full = simulate_with(&dynamics, &opts, 3).unwrap();
        opts.record_every = 4;
        let dec = simulate_with(&dynamics, &opts, 3).unwrap();
        assert_eq!(dec.len(), 26);
        assert_eq!(dec.b1[5], full.b1[20]);
        assert!((dec.dt - 4e-5).abs() < 1e-18);
    }

    #[test]
    fn displacement_uses_carrier() {
        let tr = Trajectory {
            dt: 0.25,
            times: vec![0.0, 0.25, 0.5],
            b1: vec![Complex64::new(1.0, 0.0); 3],
            b2: vec![Complex64::new(0.0, 0.0); 3],
            frame: Frame::ReducedRotating,
            reference_frequency: 2.0 * std::f64::consts::PI,
            seed: 0,
        };
        let x = tr.displacement(0);
        assert!((x[0] - SQRT2).abs() < 1e-12);
        assert!(x[1].abs() < 1e-12);
        assert!((x[2] + SQRT2).abs() < 1e-12);
    }
}
