//! Two noise-driven mechanical oscillators coupled through a common optical
//! cavity: normal modes, Gaussian steady states and their entropy
//! production, stochastic trajectories, and the synchronization and
//! timekeeping observables built on them.
//!
//! ```
//! use clocksync::{analytic_point, PhysicalParams};
//!
//! let params = PhysicalParams::paper().with_coupling(0.02);
//! let point = analytic_point(&params).unwrap();
//! assert!(point.rates.pi_s > 0.0);
//! assert!(point.modes.gamma_plus() <= point.modes.gamma_minus());
//! ```

pub mod error;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod steadystate;
pub mod trajectory;

pub use error::{Error, Result};
pub use experiments::{
    analytic_point, find_threshold, find_turning_point, sweep_coupling, transient_experiment,
    AnalyticPoint, Protocol, SweepOptions, SweepRow, TransientExperiment, TransientSetup,
};
pub use metrics::{SyncMetrics, TransientResult};
pub use model::{
    cavity_susceptibility, effective_coupling, full_drift_and_diffusion, normal_modes_closed_form,
    normal_modes_numeric, reduced_drift_matrix, reduced_dynamics, CouplingPattern,
    EffectiveCoupling, Frame, LinearDynamics, NormalModes, PhysicalParams,
};
pub use steadystate::{entropy_rates, occupations, solve_lyapunov, CovarianceState, EntropyRates};
pub use trajectory::{propagate_exact, run_ensemble, simulate, Trajectory};
