//! System parameters, the cavity-mediated phonon-phonon coupling, and the
//! linear drift/diffusion description of both the full three-mode model and
//! the reduced two-mode envelope model.
//!
//! Conventions used throughout the crate:
//!
//! * quadratures `x = (b + b†)/√2`, `p = -i(b - b†)/√2`, so a mode with
//!   symmetric second moments `V` has occupation `n + ½ = (Vxx + Vpp)/2`;
//! * `kappa` is the cavity *amplitude* decay rate (half-width);
//! * the reduced model is written for envelopes `b_i(t)` in a frame rotating
//!   at `omega2`, with `ḃ = -i M b + noise` and the mode matrix `M`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// All rates are angular (rad/s); occupations are dimensionless.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub omega1: f64,
    pub omega2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub kappa: f64,
    /// Laser-cavity detuning; negative is red detuned.
    pub detuning: f64,
    pub g1: f64,
    pub g2: f64,
    pub nth1: f64,
    pub nth2: f64,
    #[serde(default)]
    pub na_in: f64,
}

/// Relative sign of the two optomechanical couplings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingPattern {
    /// `G1 = -G2`: in-phase synchronization.
    Opposite,
    /// `G1 = G2`: out-of-phase synchronization.
    Same,
}

impl PhysicalParams {
    /// Bath occupation of the "paper" preset. The membranes are driven by
    /// injected noise, so this is a calibration: it puts the photonic entropy
    /// flux near 1e12 1/s at its maximum over the coupling sweep.
    pub const PAPER_NTH: f64 = 1.5e9;

    /// Two membranes near 400 kHz split by 200 Hz, linewidths 7 and 14 Hz,
    /// a 2 MHz cavity, and couplings of equal size and opposite sign
    /// (default `|G|/κ = 0.01`).
    ///
    /// The detuning `-κ/√3` maximizes the dissipative coupling per `G²` for
    /// this unresolved-sideband cavity.
    pub fn paper() -> Self {
        let kappa = TWO_PI * 2.0e6;
        let g = 0.01 * kappa;
        Self {
            omega1: TWO_PI * (400.0e3 + 100.0),
            omega2: TWO_PI * (400.0e3 - 100.0),
            gamma1: TWO_PI * 7.0,
            gamma2: TWO_PI * 14.0,
            kappa,
            detuning: -kappa / 3f64.sqrt(),
            g1: g,
            g2: -g,
            nth1: Self::PAPER_NTH,
            nth2: Self::PAPER_NTH,
            na_in: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("kappa", self.kappa),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        let non_negative = [("nth1", self.nth1), ("nth2", self.nth2), ("na_in", self.na_in)];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        let finite = [
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("detuning", self.detuning),
            ("g1", self.g1),
            ("g2", self.g2),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite, got {v}"),
                });
            }
        }
        if self.omega1 <= 0.0 || self.omega2 <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "omega",
                reason: "mechanical frequencies must be > 0".into(),
            });
        }
        Ok(())
    }

    pub fn delta_omega(&self) -> f64 {
        self.omega1 - self.omega2
    }

    /// Mean mechanical frequency, the default evaluation point of `chi_c`.
    pub fn omega_bar(&self) -> f64 {
        0.5 * (self.omega1 + self.omega2)
    }

    pub fn coupling_pattern(&self) -> CouplingPattern {
        if self.g1 * self.g2 > 0.0 {
            CouplingPattern::Same
        } else {
            CouplingPattern::Opposite
        }
    }

    /// Largest coupling magnitude in units of `kappa`.
    pub fn g_over_kappa(&self) -> f64 {
        self.g1.abs().max(self.g2.abs()) / self.kappa
    }

    /// Sets `|G1| = |G2| = g_over_kappa·κ`, keeping the current sign pattern
    /// (`G1 ≥ 0`).
    pub fn with_coupling(&self, g_over_kappa: f64) -> Self {
        self.with_coupling_pattern(g_over_kappa, self.coupling_pattern())
    }

    pub fn with_coupling_pattern(&self, g_over_kappa: f64, pattern: CouplingPattern) -> Self {
        let g = g_over_kappa * self.kappa;
        let g2 = match pattern {
            CouplingPattern::Opposite => -g,
            CouplingPattern::Same => g,
        };
        Self { g1: g, g2, ..*self }
    }

    pub fn uncoupled(&self) -> Self {
        Self {
            g1: 0.0,
            g2: 0.0,
            ..*self
        }
    }
}

/// Cavity response `χ_a(ω) = 1/(κ - i(Δ + ω))`.
pub fn cavity_susceptibility(omega: f64, params: &PhysicalParams) -> Complex64 {
    Complex64::new(params.kappa, -(params.detuning + omega)).inv()
}

/// Cavity-mediated coupling between the two mechanical modes after adiabatic
/// elimination of the optical field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCoupling {
    pub chi_c: Complex64,
    pub lambda: Complex64,
    /// Coherent part, `Re Λ`.
    pub delta: f64,
    /// Dissipative part, `Im Λ`.
    pub gamma: f64,
    /// Frequency at which the susceptibility was evaluated.
    pub omega_bar: f64,
}

/// `χ_c = -i[χ_a(ω̄) - χ_a*(-ω̄)]` and `Λ = G1·G2·χ_c`.
///
/// Both cavity sidebands enter: the anti-Stokes term `χ_a(ω̄)` and the
/// Stokes term `χ_a(-ω̄)`, which matters when `κ` is not small against `ω̄`.
pub fn effective_coupling(params: &PhysicalParams, omega_bar: f64) -> Result<EffectiveCoupling> {
    if !(omega_bar.is_finite() && omega_bar > 0.0) {
        return Err(Error::InvalidParameter {
            name: "omega_bar",
            reason: format!("must be > 0, got {omega_bar}"),
        });
    }
    let anti_stokes = cavity_susceptibility(omega_bar, params);
    let stokes = cavity_susceptibility(-omega_bar, params).conj();
    let chi_c = -Complex64::i() * (anti_stokes - stokes);
    let lambda = chi_c * (params.g1 * params.g2);
    Ok(EffectiveCoupling {
        chi_c,
        lambda,
        delta: lambda.re,
        gamma: lambda.im,
        omega_bar,
    })
}

/// Coupling evaluated at the mean mechanical frequency.
pub fn default_coupling(params: &PhysicalParams) -> Result<EffectiveCoupling> {
    effective_coupling(params, params.omega_bar())
}

/// Sum of the two sideband weights `|χ_a(ω̄)|² + |χ_a(-ω̄)|²` that transduce
/// mechanical motion into intracavity photons.
pub fn sideband_weight(params: &PhysicalParams, omega_bar: f64) -> f64 {
    cavity_susceptibility(omega_bar, params).norm_sqr()
        + cavity_susceptibility(-omega_bar, params).norm_sqr()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// Real quadratures `(x1, p1, x2, p2, X, Y)` in the laboratory frame.
    FullLab,
    /// Real envelope quadratures `(√2 Re b1, √2 Im b1, √2 Re b2, √2 Im b2)`
    /// in the frame rotating at `reference_frequency`.
    ReducedRotating,
}

/// Linear SDE `du = A u dt + dW` with `E[dW dWᵀ] = D dt`.
#[derive(Clone, Debug)]
pub struct LinearDynamics {
    pub frame: Frame,
    pub drift: DMatrix<f64>,
    pub diffusion: DMatrix<f64>,
    /// Rotation frequency of the reduced frame (zero for the lab frame).
    pub reference_frequency: f64,
    pub params: PhysicalParams,
    /// Evaluation frequency of the cavity susceptibility (reduced frame only).
    pub omega_bar: f64,
}

impl LinearDynamics {
    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    /// Complex mode matrix `M` of the reduced model (`ḃ = -i M b`).
    pub fn mode_matrix(&self) -> Option<Matrix2<Complex64>> {
        if self.frame != Frame::ReducedRotating {
            return None;
        }
        let a = &self.drift;
        // drift block (j, k): [[Re K, -Im K], [Im K, Re K]] with K = -iM
        let k = |j: usize, l: usize| Complex64::new(a[(2 * j, 2 * l)], a[(2 * j + 1, 2 * l)]);
        let i = Complex64::i();
        Some(Matrix2::new(
            i * k(0, 0),
            i * k(0, 1),
            i * k(1, 0),
            i * k(1, 1),
        ))
    }

    /// Eigenvalues of the drift matrix.
    pub fn drift_eigenvalues(&self) -> Vec<Complex64> {
        self.drift.complex_eigenvalues().iter().copied().collect()
    }

    /// Largest real part among the drift eigenvalues.
    pub fn spectral_abscissa(&self) -> f64 {
        self.drift_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn ensure_stable(&self) -> Result<()> {
        let max_real = self.spectral_abscissa();
        if max_real >= 0.0 || !max_real.is_finite() {
            return Err(Error::Unstable { max_real });
        }
        Ok(())
    }
}

/// Two-mode envelope model in the frame rotating at `omega2`.
///
/// Mode matrix: `M_ii = ω_i - ω2 + G_i² χ_c - iγ_i/2`, `M_12 = M_21 = Λ`.
/// For `G1 = -G2` the diagonal self-energy is `-δ - iΓ`, i.e. an optical
/// spring shift `-δ` common to both modes and added damping `Γ`.
///
/// The diffusion holds the thermal baths `γ_i(n_i + ½)` plus the cavity
/// input noise transduced through both sidebands.
pub fn reduced_drift_matrix(
    params: &PhysicalParams,
    coupling: &EffectiveCoupling,
) -> LinearDynamics {
    let i = Complex64::i();
    let g = [params.g1, params.g2];
    let gammas = [params.gamma1, params.gamma2];
    let detunings = [params.delta_omega(), 0.0];
    let mut m = Matrix2::<Complex64>::zeros();
    for j in 0..2 {
        for l in 0..2 {
            m[(j, l)] = coupling.chi_c * (g[j] * g[l]);
        }
        m[(j, j)] += Complex64::from(detunings[j]) - i * (0.5 * gammas[j]);
    }
    let k = m.map(|z| -i * z);

    let mut drift = DMatrix::zeros(4, 4);
    for j in 0..2 {
        for l in 0..2 {
            let z = k[(j, l)];
            drift[(2 * j, 2 * l)] = z.re;
            drift[(2 * j, 2 * l + 1)] = -z.im;
            drift[(2 * j + 1, 2 * l)] = z.im;
            drift[(2 * j + 1, 2 * l + 1)] = z.re;
        }
    }

    let nth = [params.nth1, params.nth2];
    let cavity_noise =
        2.0 * params.kappa * (params.na_in + 0.5) * sideband_weight(params, coupling.omega_bar);
    let mut diffusion = DMatrix::zeros(4, 4);
    for j in 0..2 {
        for l in 0..2 {
            let mut d = g[j] * g[l] * cavity_noise;
            if j == l {
                d += gammas[j] * (nth[j] + 0.5);
            }
            diffusion[(2 * j, 2 * l)] = d;
            diffusion[(2 * j + 1, 2 * l + 1)] = d;
        }
    }

    LinearDynamics {
        frame: Frame::ReducedRotating,
        drift,
        diffusion,
        reference_frequency: params.omega2,
        params: *params,
        omega_bar: coupling.omega_bar,
    }
}

/// Convenience: reduced model with the coupling evaluated at `ω̄`.
pub fn reduced_dynamics(params: &PhysicalParams) -> Result<LinearDynamics> {
    params.validate()?;
    let coupling = default_coupling(params)?;
    Ok(reduced_drift_matrix(params, &coupling))
}

/// Full linearized three-mode model on `(x1, p1, x2, p2, X, Y)`.
///
/// Hamiltonian `ω_i(x_i² + p_i²)/2 - Δ(X² + Y²)/2 - 2 Σ G_i x_i X`; the
/// mechanical quadratures damp at `γ_i/2` and the cavity at `κ`.
pub fn full_drift_and_diffusion(params: &PhysicalParams) -> LinearDynamics {
    let mut a = DMatrix::zeros(6, 6);
    let omegas = [params.omega1, params.omega2];
    let gammas = [params.gamma1, params.gamma2];
    let g = [params.g1, params.g2];
    for j in 0..2 {
        let (x, p) = (2 * j, 2 * j + 1);
        a[(x, x)] = -0.5 * gammas[j];
        a[(p, p)] = -0.5 * gammas[j];
        a[(x, p)] = omegas[j];
        a[(p, x)] = -omegas[j];
        a[(p, 4)] = 2.0 * g[j];
        a[(5, x)] = 2.0 * g[j];
    }
    a[(4, 4)] = -params.kappa;
    a[(5, 5)] = -params.kappa;
    a[(4, 5)] = -params.detuning;
    a[(5, 4)] = params.detuning;

    let diag = [
        params.gamma1 * (params.nth1 + 0.5),
        params.gamma1 * (params.nth1 + 0.5),
        params.gamma2 * (params.nth2 + 0.5),
        params.gamma2 * (params.nth2 + 0.5),
        2.0 * params.kappa * (params.na_in + 0.5),
        2.0 * params.kappa * (params.na_in + 0.5),
    ];
    let diffusion = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&diag));

    LinearDynamics {
        frame: Frame::FullLab,
        drift: a,
        diffusion,
        reference_frequency: 0.0,
        params: *params,
        omega_bar: params.omega_bar(),
    }
}

/// Normal modes of the coupled mechanical pair. `Re λ` is a frequency and
/// `-2 Im λ` a linewidth; `lambda_plus` is the longer-lived mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalModes {
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
}

impl NormalModes {
    /// Orders two eigenvalues so that `gamma_plus <= gamma_minus`; ties go to
    /// the larger real part.
    pub fn from_pair(a: Complex64, b: Complex64) -> Self {
        let (ga, gb) = (-2.0 * a.im, -2.0 * b.im);
        let a_first = ga < gb || (ga == gb && a.re >= b.re);
        if a_first {
            Self {
                lambda_plus: a,
                lambda_minus: b,
            }
        } else {
            Self {
                lambda_plus: b,
                lambda_minus: a,
            }
        }
    }

    pub fn omega_plus(&self) -> f64 {
        self.lambda_plus.re
    }
    pub fn omega_minus(&self) -> f64 {
        self.lambda_minus.re
    }
    pub fn gamma_plus(&self) -> f64 {
        -2.0 * self.lambda_plus.im
    }
    pub fn gamma_minus(&self) -> f64 {
        -2.0 * self.lambda_minus.im
    }
    pub fn linewidth_ratio(&self) -> f64 {
        self.gamma_plus() / self.gamma_minus()
    }

    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            lambda_plus: self.lambda_plus + offset,
            lambda_minus: self.lambda_minus + offset,
        }
    }
}

/// `λ± = Δω/2 - i(γ1 + γ2 + 4Γ)/4 ± sqrt((Δω - i(γ1 - γ2)/2)²/4 + (δ + iΓ)²)`
/// in the frame rotating at `ω2`.
///
/// This form assumes `G1 = -G2`, where the self-energy damping equals `Γ`
/// and the optical-spring shift is a common offset omitted here.
pub fn normal_modes_closed_form(
    delta_omega: f64,
    gamma1: f64,
    gamma2: f64,
    coupling: &EffectiveCoupling,
) -> NormalModes {
    let i = Complex64::i();
    let center = Complex64::new(0.5 * delta_omega, -(gamma1 + gamma2 + 4.0 * coupling.gamma) / 4.0);
    let mismatch = Complex64::new(delta_omega, -0.5 * (gamma1 - gamma2));
    let lambda = Complex64::new(coupling.delta, 0.0) + i * coupling.gamma;
    let root = (mismatch * mismatch / 4.0 + lambda * lambda).sqrt();
    NormalModes::from_pair(center + root, center - root)
}

/// Normal modes from a numerical eigensolve.
///
/// Reduced dynamics: eigenvalues of the 2×2 mode matrix (frequencies are
/// offsets from `reference_frequency`). Full dynamics: the two slowest
/// positive-frequency eigenvalue pairs of the 6×6 drift (lab frequencies).
pub fn normal_modes_numeric(dynamics: &LinearDynamics) -> Result<NormalModes> {
    match dynamics.frame {
        Frame::ReducedRotating => {
            let m = dynamics.mode_matrix().expect("reduced frame has a mode matrix");
            let ev = m
                .eigenvalues()
                .ok_or_else(|| Error::Dimension("2x2 eigensolve failed".into()))?;
            Ok(NormalModes::from_pair(ev[0], ev[1]))
        }
        Frame::FullLab => {
            // drift eigenvalue μ ↔ mode eigenvalue λ = iμ
            let mut modes: Vec<Complex64> = dynamics
                .drift_eigenvalues()
                .into_iter()
                .map(|mu| Complex64::i() * mu)
                .filter(|l| l.re > 0.0)
                .collect();
            if modes.len() != 3 {
                return Err(Error::Dimension(format!(
                    "expected 3 positive-frequency modes, found {}",
                    modes.len()
                )));
            }
            modes.sort_by(|a, b| b.im.total_cmp(&a.im));
            let mechanical = -2.0 * modes[1].im;
            let optical = -2.0 * modes[2].im;
            if optical < 1.1 * mechanical {
                return Err(Error::AmbiguousBranches {
                    mechanical,
                    optical,
                });
            }
            Ok(NormalModes::from_pair(modes[0], modes[1]))
        }
    }
}

/// Quadrature indices of mechanical mode `clock` (0 or 1) in any frame.
pub(crate) fn mode_indices(clock: usize) -> (usize, usize) {
    (2 * clock, 2 * clock + 1)
}

pub(crate) const SQRT2: f64 = SQRT_2;
