//! Steady-state second moments and the entropy-rate decomposition.

use nalgebra::{DMatrix, DVector, FullPivLU, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Frame, LinearDynamics, PhysicalParams};

/// Options for [`solve_lyapunov_with`].
#[derive(Clone, Copy, Debug)]
pub struct LyapunovOptions {
    /// Relative residual bound `‖AV + VAᵀ + D‖ ≤ tol·‖D‖`.
    pub tolerance: f64,
    /// Reject systems whose Kronecker matrix has a larger condition number.
    pub max_condition: f64,
    pub refinement_steps: usize,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_condition: 1e15,
            refinement_steps: 2,
        }
    }
}

/// Solves `A V + V Aᵀ + D = 0` for symmetric `V`.
pub fn solve_lyapunov(a: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve_lyapunov_with(a, d, &LyapunovOptions::default())
}

pub fn solve_lyapunov_with(
    a: &DMatrix<f64>,
    d: &DMatrix<f64>,
    opts: &LyapunovOptions,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || d.nrows() != n || d.ncols() != n {
        return Err(Error::Dimension(format!(
            "drift {}x{} and diffusion {}x{} must be square and equal",
            a.nrows(),
            a.ncols(),
            d.nrows(),
            d.ncols()
        )));
    }
    if a.iter().chain(d.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "drift/diffusion",
            reason: "non-finite entry".into(),
        });
    }
    let max_real = a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_real >= 0.0 {
        return Err(Error::Unstable { max_real });
    }

    // column-major vec: vec(AV + VAᵀ) = (I ⊗ A + A ⊗ I) vec V
    let eye = DMatrix::<f64>::identity(n, n);
    let k = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = -DVector::from_column_slice(d.as_slice());

    let sv = SVD::new(k.clone(), false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition.is_nan() || condition > opts.max_condition {
        return Err(Error::Singular { condition });
    }

    let lu = FullPivLU::new(k.clone());
    let mut x = lu.solve(&rhs).ok_or(Error::Singular { condition })?;
    for _ in 0..opts.refinement_steps {
        let r = &rhs - &k * &x;
        match lu.solve(&r) {
            Some(dx) => x += dx,
            None => break,
        }
    }

    let v = DMatrix::from_column_slice(n, n, x.as_slice());
    let v = (&v + v.transpose()) * 0.5;

    let residual = lyapunov_residual(a, &v, d);
    let tolerance = opts.tolerance * d.norm().max(f64::MIN_POSITIVE);
    if residual > tolerance {
        return Err(Error::Residual {
            residual,
            tolerance,
        });
    }
    Ok(v)
}

/// Frobenius norm of `A V + V Aᵀ + D`.
pub fn lyapunov_residual(a: &DMatrix<f64>, v: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    (a * v + v * a.transpose() + d).norm()
}

/// Stationary covariance of a stable linear model.
pub fn steady_covariance(dynamics: &LinearDynamics) -> Result<DMatrix<f64>> {
    solve_lyapunov(&dynamics.drift, &dynamics.diffusion)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceState {
    pub frame: Frame,
    pub v: DMatrix<f64>,
    pub n_b1_eff: f64,
    pub n_b2_eff: f64,
    pub n_a_eff: f64,
    /// `⟨(b1 + b1†)(b2 + b2†)⟩/2`; in the rotating frame `Re⟨b1† b2⟩`.
    pub n_cross_eff: f64,
}

impl CovarianceState {
    /// Pearson correlation of the two lab-frame displacements.
    ///
    /// Reduced frame: the carrier average of `x1 x2` is `Re⟨b1* b2⟩` and of
    /// `x_i²` is `n_i + ½`.
    pub fn displacement_correlation(&self) -> f64 {
        match self.frame {
            Frame::FullLab => self.v[(0, 2)] / (self.v[(0, 0)] * self.v[(2, 2)]).sqrt(),
            Frame::ReducedRotating => {
                self.n_cross_eff / ((self.n_b1_eff + 0.5) * (self.n_b2_eff + 0.5)).sqrt()
            }
        }
    }
}

/// Effective occupations from a covariance matrix of `dynamics`.
///
/// Reduced frame: the cavity is reconstructed from the mechanical moments,
/// `n_a = W·(G1²(n1 + ½) + G2²(n2 + ½) + 2 G1 G2 n_cross)` where `W` is the
/// two-sideband weight `|χ_a(ω̄)|² + |χ_a(-ω̄)|²`. The cavity vacuum term is
/// dropped since `n_a` counts excitations above the input bath.
pub fn occupations(v: &DMatrix<f64>, dynamics: &LinearDynamics) -> Result<CovarianceState> {
    let expected = match dynamics.frame {
        Frame::FullLab => 6,
        Frame::ReducedRotating => 4,
    };
    if v.nrows() != expected || v.ncols() != expected {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, frame {:?} needs {expected}x{expected}",
            v.nrows(),
            v.ncols(),
            dynamics.frame
        )));
    }
    let n_mode = |j: usize| {
        let (x, p) = model::mode_indices(j);
        0.5 * (v[(x, x)] + v[(p, p)]) - 0.5
    };
    let n_b1_eff = n_mode(0);
    let n_b2_eff = n_mode(1);
    let (n_cross_eff, n_a_eff) = match dynamics.frame {
        Frame::FullLab => (v[(0, 2)], n_mode(2)),
        Frame::ReducedRotating => {
            let cross = 0.5 * (v[(0, 2)] + v[(1, 3)]);
            let p = &dynamics.params;
            let w = model::sideband_weight(p, dynamics.omega_bar);
            let na = w
                * (p.g1 * p.g1 * (n_b1_eff + 0.5)
                    + p.g2 * p.g2 * (n_b2_eff + 0.5)
                    + 2.0 * p.g1 * p.g2 * cross);
            (cross, na)
        }
    };
    Ok(CovarianceState {
        frame: dynamics.frame,
        v: v.clone(),
        n_b1_eff,
        n_b2_eff,
        n_a_eff,
        n_cross_eff,
    })
}

/// Checks that a covariance was built for the expected frame.
pub fn require_frame(state: &CovarianceState, frame: Frame) -> Result<()> {
    if state.frame != frame {
        return Err(Error::FrameMismatch {
            expected: frame,
            found: state.frame,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyRates {
    pub mu_b1: f64,
    pub mu_b2: f64,
    pub mu_a: f64,
    pub pi_s: f64,
}

/// Per-bath entropy fluxes and their sum.
///
/// `μ_bi = γ_i((n_bi + ½)/(n_th,i + ½) - 1)`, `μ_a = 2κ n_a`.
pub fn entropy_rates_from(n_b1: f64, n_b2: f64, n_a: f64, params: &PhysicalParams) -> EntropyRates {
    let mu_b1 = params.gamma1 * ((n_b1 + 0.5) / (params.nth1 + 0.5) - 1.0);
    let mu_b2 = params.gamma2 * ((n_b2 + 0.5) / (params.nth2 + 0.5) - 1.0);
    let mu_a = 2.0 * params.kappa * n_a;
    EntropyRates {
        mu_b1,
        mu_b2,
        mu_a,
        pi_s: mu_b1 + mu_b2 + mu_a,
    }
}

pub fn entropy_rates(cov: &CovarianceState, params: &PhysicalParams) -> EntropyRates {
    entropy_rates_from(cov.n_b1_eff, cov.n_b2_eff, cov.n_a_eff, params)
}

/// Lyapunov solve, occupations and entropy rates in one call.
pub fn ness(dynamics: &LinearDynamics) -> Result<(CovarianceState, EntropyRates)> {
    let v = steady_covariance(dynamics)?;
    let cov = occupations(&v, dynamics)?;
    let rates = entropy_rates(&cov, &dynamics.params);
    Ok((cov, rates))
}
