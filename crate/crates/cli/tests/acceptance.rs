//! End-to-end acceptance suite (runs without the libtest harness so the
//! report is always printed). One PASS/FAIL line per criterion; exits
//! non-zero if any criterion fails.

use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use clocksync::experiments::{
    analytic_point, default_grid, find_threshold, find_turning_point, linear_r_squared,
    lyapunov_moment_checks, non_monotonic_witness, stationary_trajectory, Protocol,
    SpectrumReport, SweepOptions, TransientSetup,
};
use clocksync::model::default_coupling;
use clocksync::steadystate::lyapunov_residual;
use clocksync::trajectory::{simulate_with, Integrator, SimulationOptions};
use clocksync::{
    full_drift_and_diffusion, normal_modes_closed_form, normal_modes_numeric, reduced_dynamics,
    solve_lyapunov, sweep_coupling, transient_experiment, PhysicalParams, SweepRow,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn closed_form_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut p = PhysicalParams::paper();
        let f_bar = rng.random_range(1e5..1e6);
        let split = rng.random_range(-500.0..500.0);
        p.omega1 = TAU * (f_bar + split / 2.0);
        p.omega2 = TAU * (f_bar - split / 2.0);
        p.gamma1 = TAU * rng.random_range(1.0..50.0);
        p.gamma2 = TAU * rng.random_range(1.0..50.0);
        p.kappa = TAU * rng.random_range(0.5e6..5e6);
        p.detuning = -rng.random_range(0.1..2.0) * p.kappa;
        let p = p.with_coupling(rng.random_range(0.0..0.05));
        let c = default_coupling(&p).map_err(|e| e.to_string())?;
        let num = normal_modes_numeric(&reduced_dynamics(&p).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let cf = normal_modes_closed_form(p.delta_omega(), p.gamma1, p.gamma2, &c);
        let offset = 0.5 * (num.lambda_plus.re + num.lambda_minus.re - cf.lambda_plus.re - cf.lambda_minus.re);
        let cf = cf.shifted(offset);
        let scale = [num.lambda_plus.norm(), num.lambda_minus.norm(), p.delta_omega().abs()]
            .into_iter()
            .fold(0.0, f64::max);
        let err = (num.lambda_plus - cf.lambda_plus)
            .norm()
            .max((num.lambda_minus - cf.lambda_minus).norm());
        worst = worst.max(err / scale);
    }
    check(worst <= 1e-9, format!("worst relative error {worst:.2e} over 1000 draws"))
}

fn adiabatic_elimination() -> Outcome {
    let mut worst = 0.0f64;
    for g in [0.005, 0.01, 0.02, 0.04] {
        let p = PhysicalParams::paper().with_coupling(g);
        let r = normal_modes_numeric(&reduced_dynamics(&p).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let f = normal_modes_numeric(&full_drift_and_diffusion(&p)).map_err(|e| e.to_string())?;
        worst = worst
            .max((r.gamma_plus() / f.gamma_plus() - 1.0).abs())
            .max((r.gamma_minus() / f.gamma_minus() - 1.0).abs());
    }
    check(worst < 0.05, format!("worst linewidth mismatch {:.3}%", 100.0 * worst))
}

fn lyapunov_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_residual = 0.0f64;
    let mut worst_eig = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=6);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-5.0..5.0));
        let shift = b.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let a = b - DMatrix::identity(n, n) * (shift + rng.random_range(0.01..2.0));
        let c = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        let d = &c * c.transpose() + DMatrix::identity(n, n) * 1e-3;
        let v = solve_lyapunov(&a, &d).map_err(|e| e.to_string())?;
        worst_residual = worst_residual.max(lyapunov_residual(&a, &v, &d) / d.norm());
        worst_eig = worst_eig.max(-v.clone().symmetric_eigen().eigenvalues.min() / v.norm());
    }
    let (g, n) = (3.7, 12.25);
    let a = DMatrix::from_row_slice(2, 2, &[-g / 2.0, 5.0, -5.0, -g / 2.0]);
    let v = solve_lyapunov(&a, &(DMatrix::identity(2, 2) * (g * (n + 0.5)))).map_err(|e| e.to_string())?;
    let thermal = (v - DMatrix::identity(2, 2) * (n + 0.5)).amax() / (n + 0.5);
    check(
        worst_residual <= 1e-8 && worst_eig <= 1e-10 && thermal <= 1e-12,
        format!("residual/‖D‖ {worst_residual:.1e}, min eig/‖V‖ {:.1e}, thermal {thermal:.1e}", -worst_eig),
    )
}

fn monte_carlo_matches_lyapunov() -> Outcome {
    let grid = [0.0, 0.01, 0.02, 0.03, 0.04];
    let checks: Vec<_> = grid
        .par_iter()
        .enumerate()
        .map(|(k, &g)| {
            let point = analytic_point(&PhysicalParams::paper().with_coupling(g)).map_err(|e| e.to_string())?;
            let mut opts = SimulationOptions::new(10.0, 1e-5, Integrator::Exact);
            opts.burn_in = 5.0 / point.modes.gamma_plus();
            let traj = simulate_with(&point.dynamics, &opts, 100 + k as u64).map_err(|e| e.to_string())?;
            lyapunov_moment_checks(&point, &traj, 20)
                .map(|c| c.into_iter().map(move |c| (g, c)).collect::<Vec<_>>())
                .map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, String>>()?
        .into_iter()
        .flatten()
        .collect();
    let (g, worst) = checks
        .iter()
        .max_by(|a, b| a.1.z().total_cmp(&b.1.z()))
        .map(|(g, c)| (*g, c))
        .unwrap();
    check(
        checks.iter().all(|(_, c)| c.z() < 3.0),
        format!("{} checks, largest z = {:.2} ({} at g={g})", checks.len(), worst.z(), worst.name),
    )
}

fn analytic_rows() -> Result<Vec<SweepRow>, String> {
    let opts = SweepOptions {
        protocol: Protocol::Analytic,
        ..SweepOptions::default()
    };
    sweep_coupling(&PhysicalParams::paper(), &default_grid(), &opts).map_err(|e| e.to_string())
}

fn second_law(rows: &[SweepRow]) -> Outcome {
    let min_pi = rows.iter().map(|r| r.pi_s).fold(f64::INFINITY, f64::min);
    let max_mu = rows.iter().map(|r| r.mu_b1.max(r.mu_b2)).fold(f64::NEG_INFINITY, f64::max);
    check(min_pi >= 0.0 && max_mu <= 0.0, format!("min Π_s {min_pi:.3e}, max μ_b {max_mu:.3e}"))
}

fn threshold(rows: &[SweepRow]) -> Outcome {
    let g = find_threshold(rows).map_err(|e| e.to_string())?;
    check((0.0025..=0.01).contains(&g), format!("|G_c|/κ = {g:.5}"))
}

fn turning_point(rows: &[SweepRow]) -> Outcome {
    let g = find_turning_point(rows).map_err(|e| e.to_string())?;
    let witness = non_monotonic_witness(rows);
    let detail = match witness {
        Some((i, j)) => format!(
            "turning point {g:.5}, witness g={} vs g={}",
            rows[i].g_over_kappa, rows[j].g_over_kappa
        ),
        None => format!("turning point {g:.5}, no witness"),
    };
    check((0.0065..=0.026).contains(&g) && witness.is_some(), detail)
}

fn timekeeping(threshold: f64) -> Outcome {
    let opts = SweepOptions {
        master_seed: 42,
        ..SweepOptions::default()
    };
    let rows = sweep_coupling(&PhysicalParams::paper(), &default_grid(), &opts).map_err(|e| e.to_string())?;
    let below: Vec<f64> = rows.iter().filter(|r| r.g_over_kappa < threshold).map(|r| r.d).collect();
    let plateau = below.iter().sum::<f64>() / below.len() as f64;
    let above = rows
        .iter()
        .filter(|r| r.g_over_kappa > 0.03)
        .map(|r| r.d)
        .fold(0.0, f64::max);
    let col = |f: fn(&SweepRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let r1 = linear_r_squared(&col(|r| r.mu_b1.abs()), &col(|r| r.n1));
    let r2 = linear_r_squared(&col(|r| r.mu_b2.abs()), &col(|r| r.n2));
    let drop = plateau / above;
    check(
        drop >= 10.0 && r1 >= 0.9 && r2 >= 0.9,
        format!("D drop {drop:.1}x, R² N1 {r1:.3}, N2 {r2:.3}"),
    )
}

fn spectra() -> Outcome {
    let peaks = |g: f64, seed: u64| -> Result<Vec<f64>, String> {
        let (_, traj) = stationary_trajectory(&PhysicalParams::paper(), g, 2.0, 1e-5, seed).map_err(|e| e.to_string())?;
        Ok(SpectrumReport::from_trajectory(&traj, 8192).map_err(|e| e.to_string())?.peaks)
    };
    let below = peaks(0.002, 5)?;
    let above = peaks(0.04, 6)?;
    let split = if below.len() == 2 { (below[1] - below[0]).abs() } else { f64::NAN };
    check(
        (160.0..=240.0).contains(&split) && above.len() == 1,
        format!("below: {} peaks split {split:.1} Hz, above: {} peak(s)", below.len(), above.len()),
    )
}

fn transients() -> Outcome {
    let grid = [0.01, 0.02, 0.03, 0.04, 0.05];
    let setup = TransientSetup::default();
    let runs = grid
        .iter()
        .map(|&g| transient_experiment(&PhysicalParams::paper(), g, &setup, 2024).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let times: Vec<f64> = runs.iter().map(|e| e.result.transient_time).collect();
    let decreasing = times.windows(2).all(|w| w[1] < w[0]);
    let plateau = runs[3].plateau;
    let overshoot = runs[0].overshoot();
    let converged = runs.iter().all(|e| {
        let ness = [e.ness.mu_b1, e.ness.mu_b2, e.ness.mu_a];
        e.tail_fluxes(0.2)
            .iter()
            .zip(ness)
            .all(|((m, err), target)| (m - target).abs() < 3.0 * err)
    });
    let ms: Vec<String> = times.iter().map(|t| format!("{:.3}", t * 1e3)).collect();
    check(
        setup.n_traj == 600 && decreasing && plateau >= 0.9 && overshoot >= 0.05 && converged,
        format!(
            "t_tr [{}] ms, plateau(0.04) {plateau:.3}, overshoot(0.01) {:.1}%, fluxes converge: {converged}",
            ms.join(", "),
            100.0 * overshoot
        ),
    )
}

fn determinism() -> Outcome {
    let base = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let runs: [(&[&str], &[&str]); 5] = [
        (&["ness", "--g-over-kappa", "0.02"], &["ness.csv"]),
        (&["modes"], &["modes.csv"]),
        (
            &["sweep", "--grid-points", "6", "--duration", "0.5"],
            &["sweep.csv"],
        ),
        (
            &["trajectory", "--g-over-kappa", "0.01", "--duration", "0.2"],
            &["trajectory.csv", "spectrum.csv"],
        ),
        (
            &["transient", "--g-over-kappa", "0.03", "--n-traj", "100", "--duration", "0.005"],
            &["transient.csv"],
        ),
    ];
    let mut compared = 0;
    for (k, (args, files)) in runs.iter().enumerate() {
        let dirs = [base.path().join(format!("{k}a")), base.path().join(format!("{k}b"))];
        for d in &dirs {
            let status = Command::new(env!("CARGO_BIN_EXE_clocksync"))
                .args(args.iter())
                .args(["--seed", "11", "--out", d.to_str().unwrap()])
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{args:?}: {}", String::from_utf8_lossy(&status.stderr)));
            }
        }
        for f in files.iter() {
            let read = |d: &Path| std::fs::read(d.join(f)).map_err(|e| format!("{f}: {e}"));
            if read(&dirs[0])? != read(&dirs[1])? {
                return Err(format!("{f} differs between runs"));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} CSV files byte-identical across repeated runs"))
}

fn main() {
    let rows = analytic_rows().expect("analytic sweep");
    let g_c = find_threshold(&rows).unwrap_or(0.0);
    let criteria: Vec<Criterion> = vec![
        ("closed-form normal modes", Box::new(closed_form_equivalence)),
        ("adiabatic elimination", Box::new(adiabatic_elimination)),
        ("Lyapunov solver", Box::new(lyapunov_correctness)),
        ("Monte Carlo vs analytic NESS", Box::new(monte_carlo_matches_lyapunov)),
        ("second law and cooling", Box::new(|| second_law(&rows))),
        ("synchronization threshold", Box::new(|| threshold(&rows))),
        ("turning point and non-monotonicity", Box::new(|| turning_point(&rows))),
        ("timekeeping", Box::new(move || timekeeping(g_c))),
        ("spectra", Box::new(spectra)),
        ("transients", Box::new(transients)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match &outcome {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d} [{secs:.1} s]", k + 1),
            Err(d) => {
                println!("criterion {:>2} FAIL  {name}: {d} [{secs:.1} s]", k + 1);
                failed.push(k + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
