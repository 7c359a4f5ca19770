use std::f64::consts::PI;
use std::path::PathBuf;

use clocksync::experiments::{
    self, analytic_point, linear_grid, stationary_run, SpectrumReport, SweepOptions,
};
use clocksync::model::{default_coupling, full_drift_and_diffusion, CouplingPattern};
use clocksync::{normal_modes_closed_form, normal_modes_numeric, PhysicalParams};
use serde_json::json;

use crate::config::{self, ConfigFile, ResolvedConfig, ResolvedParams, ResolvedTrajectory};
use crate::output::{line_plot, write_csv, write_json, write_text, Table};
use crate::{CliError, Command, Common};

pub const SWEEP_HEADER: [&str; 13] = [
    "g_over_kappa",
    "C",
    "D",
    "N1",
    "N2",
    "gamma_plus",
    "gamma_minus",
    "ratio",
    "mu_b1",
    "mu_b2",
    "mu_a",
    "pi_s",
    "analytic_C",
];

pub const TRANSIENT_HEADER: [&str; 5] = ["t", "R", "mu_b1", "mu_b2", "mu_a"];

pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "re_b1", "im_b1", "re_b2", "im_b2"];

struct Context {
    cfg: ConfigFile,
    preset: String,
    params: PhysicalParams,
    seed: u64,
    out: PathBuf,
    svg: bool,
}

impl Context {
    fn new(common: &Common) -> Result<Self, CliError> {
        let cfg = match &common.config {
            Some(src) => config::load(src)?,
            None => ConfigFile::default(),
        };
        let preset = common
            .preset
            .clone()
            .or_else(|| cfg.preset.clone())
            .unwrap_or_else(|| "paper".to_string());
        let params = config::resolve_params(config::preset(&preset)?, &cfg.params)?;
        let seed = common.seed.or(cfg.seed).unwrap_or(0);
        let out = PathBuf::from(
            common
                .out
                .clone()
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| "out".to_string()),
        );
        Ok(Self {
            cfg,
            preset,
            params,
            seed,
            out,
            svg: common.svg,
        })
    }

    fn resolved(&self, command: &str) -> ResolvedConfig {
        ResolvedConfig {
            command: command.to_string(),
            preset: self.preset.clone(),
            seed: self.seed,
            out: self.out.display().to_string(),
            params: ResolvedParams::from(&self.params),
            g_over_kappa: None,
            grid: None,
            sweep: None,
            transient: None,
            trajectory: None,
        }
    }

    /// Parameters at coupling `g` when one was requested, else as configured.
    fn at(&self, g: Option<f64>) -> Result<PhysicalParams, CliError> {
        match g {
            Some(g) if !(g.is_finite() && g >= 0.0) => {
                Err(CliError::Config(format!("g_over_kappa must be >= 0, got {g}")))
            }
            Some(g) => Ok(self.params.with_coupling(g)),
            None => Ok(self.params),
        }
    }

    fn prepare(&self, resolved: &ResolvedConfig) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Io(format!("{}: {e}", self.out.display())))?;
        write_json(&self.path("config.resolved.json"), resolved)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn grid(
    cli_max: Option<f64>,
    cli_points: Option<usize>,
    explicit: Option<&Vec<f64>>,
    cfg_max: Option<f64>,
    cfg_points: Option<usize>,
) -> Result<Vec<f64>, CliError> {
    let g = if cli_max.is_some() || cli_points.is_some() || explicit.is_none() {
        linear_grid(
            cli_max.or(cfg_max).unwrap_or(0.05),
            cli_points.or(cfg_points).unwrap_or(26),
        )
    } else {
        explicit.cloned().unwrap_or_default()
    };
    if g.is_empty() {
        return Err(CliError::Config("the coupling grid is empty".into()));
    }
    if let Some(bad) = g.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(CliError::Config(format!("grid values must be >= 0, got {bad}")));
    }
    Ok(g)
}

fn maybe_svg(ctx: &Context, name: &str, svg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ctx.svg {
        write_text(&ctx.path(name), &svg())?;
    }
    Ok(())
}

/// Runs one subcommand and returns a one-line summary for stdout.
pub fn execute(command: Command) -> Result<String, CliError> {
    match command {
        Command::Ness { g_over_kappa, common } => {
            let ctx = Context::new(&common)?;
            let g = g_over_kappa.or(ctx.cfg.ness.as_ref().and_then(|n| n.g_over_kappa));
            ness(&ctx, g)
        }
        Command::Sweep {
            grid_max,
            grid_points,
            protocol,
            duration,
            dt,
            common,
        } => {
            let ctx = Context::new(&common)?;
            let sc = ctx.cfg.sweep.clone().unwrap_or_default();
            let grid = grid(grid_max, grid_points, sc.grid.as_ref(), sc.grid_max, sc.grid_points)?;
            let mut opts = config::sweep_options(Some(&sc), ctx.seed);
            if let Some(p) = protocol {
                opts.protocol = p;
            }
            if let Some(v) = duration {
                opts.duration = v;
            }
            if let Some(v) = dt {
                opts.dt = v;
            }
            sweep(&ctx, &grid, &opts)
        }
        Command::Trajectory {
            g_over_kappa,
            duration,
            dt,
            segment,
            dump_every,
            common,
        } => {
            let ctx = Context::new(&common)?;
            let tc = ctx.cfg.trajectory.clone().unwrap_or_default();
            let g = g_over_kappa.or(tc.g_over_kappa);
            let setup = ResolvedTrajectory {
                duration: duration.or(tc.duration).unwrap_or(1.0),
                dt: dt.or(tc.dt).unwrap_or(1e-5),
                segment: segment.or(tc.segment).unwrap_or(8192),
                dump_every: dump_every.or(tc.dump_every).unwrap_or(10),
            };
            if setup.dump_every == 0 {
                return Err(CliError::Config("dump_every must be >= 1".into()));
            }
            trajectory(&ctx, g, &setup)
        }
        Command::Transient {
            g_over_kappa,
            n_traj,
            duration,
            dt,
            common,
        } => {
            let ctx = Context::new(&common)?;
            let tc = ctx.cfg.transient.clone();
            let mut setup = config::transient_setup(tc.as_ref());
            if let Some(v) = n_traj {
                setup.n_traj = v;
            }
            if let Some(v) = duration {
                setup.duration = v;
            }
            if let Some(v) = dt {
                setup.dt = v;
            }
            let g = g_over_kappa
                .or(tc.and_then(|t| t.g_over_kappa))
                .unwrap_or(ctx.params.g_over_kappa());
            transient(&ctx, g, &setup)
        }
        Command::Modes {
            grid_max,
            grid_points,
            common,
        } => {
            let ctx = Context::new(&common)?;
            let mc = ctx.cfg.modes.clone().unwrap_or_default();
            let grid = grid(grid_max, grid_points, mc.grid.as_ref(), mc.grid_max, mc.grid_points)?;
            modes(&ctx, &grid)
        }
    }
}

fn ness(ctx: &Context, g: Option<f64>) -> Result<String, CliError> {
    let p = ctx.at(g)?;
    let point = analytic_point(&p)?;
    let coupling = default_coupling(&p)?;
    let mut resolved = ctx.resolved("ness");
    resolved.params = ResolvedParams::from(&p);
    resolved.g_over_kappa = Some(p.g_over_kappa());
    ctx.prepare(&resolved)?;

    let cov = &point.covariance;
    let r = &point.rates;
    let m = &point.modes;
    let mut t = Table::new(&[
        "g_over_kappa",
        "n_b1",
        "n_b2",
        "n_a",
        "n_cross",
        "mu_b1",
        "mu_b2",
        "mu_a",
        "pi_s",
        "analytic_C",
        "omega_plus",
        "omega_minus",
        "gamma_plus",
        "gamma_minus",
        "ratio",
        "delta",
        "Gamma",
    ]);
    t.push(vec![
        p.g_over_kappa(),
        cov.n_b1_eff,
        cov.n_b2_eff,
        cov.n_a_eff,
        cov.n_cross_eff,
        r.mu_b1,
        r.mu_b2,
        r.mu_a,
        r.pi_s,
        cov.displacement_correlation(),
        m.omega_plus(),
        m.omega_minus(),
        m.gamma_plus(),
        m.gamma_minus(),
        m.linewidth_ratio(),
        coupling.delta,
        coupling.gamma,
    ]);
    write_csv(&ctx.path("ness.csv"), &t)?;
    Ok(format!(
        "ness g/kappa={} C={} pi_s={} -> {}",
        p.g_over_kappa(),
        cov.displacement_correlation(),
        r.pi_s,
        ctx.path("ness.csv").display()
    ))
}

fn sweep(ctx: &Context, grid: &[f64], opts: &SweepOptions) -> Result<String, CliError> {
    let mut resolved = ctx.resolved("sweep");
    resolved.grid = Some(grid.to_vec());
    resolved.sweep = Some(opts.clone());
    let rows = clocksync::sweep_coupling(&ctx.params, grid, opts)?;
    ctx.prepare(&resolved)?;

    let mut t = Table::new(&SWEEP_HEADER);
    for r in &rows {
        t.push(vec![
            r.g_over_kappa,
            r.c,
            r.d,
            r.n1,
            r.n2,
            r.gamma_plus,
            r.gamma_minus,
            r.ratio,
            r.mu_b1,
            r.mu_b2,
            r.mu_a,
            r.pi_s,
            r.analytic_c,
        ]);
    }
    write_csv(&ctx.path("sweep.csv"), &t)?;

    let threshold = clocksync::find_threshold(&rows);
    let turning = clocksync::find_turning_point(&rows);
    let witness = experiments::non_monotonic_witness(&rows);
    let landmark = |r: &clocksync::Result<f64>| match r {
        Ok(v) => json!({ "value": v }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    write_json(
        &ctx.path("sweep_summary.json"),
        &json!({
            "threshold": landmark(&threshold),
            "turning_point": landmark(&turning),
            "non_monotonic_witness": witness.map(|(i, j)| json!({
                "lower_pi_s": rows[i].g_over_kappa,
                "higher_pi_s": rows[j].g_over_kappa,
            })),
        }),
    )?;
    maybe_svg(ctx, "sweep.svg", || {
        let x = t.column("g_over_kappa").unwrap_or_default();
        let cols = ["C", "analytic_C", "ratio"];
        let series: Vec<_> = cols.iter().map(|c| (*c, t.column(c).unwrap_or_default())).collect();
        line_plot("synchronization vs coupling", "|G|/kappa", &x, &series)
    })?;
    maybe_svg(ctx, "rates.svg", || {
        let x = t.column("g_over_kappa").unwrap_or_default();
        let cols = ["pi_s", "mu_a"];
        let series: Vec<_> = cols.iter().map(|c| (*c, t.column(c).unwrap_or_default())).collect();
        line_plot("entropy production (1/s)", "|G|/kappa", &x, &series)
    })?;
    let fmt = |r: &clocksync::Result<f64>| match r {
        Ok(v) => v.to_string(),
        Err(_) => "none".to_string(),
    };
    Ok(format!(
        "sweep {} points threshold={} turning_point={} -> {}",
        rows.len(),
        fmt(&threshold),
        fmt(&turning),
        ctx.path("sweep.csv").display()
    ))
}

fn trajectory(ctx: &Context, g: Option<f64>, setup: &ResolvedTrajectory) -> Result<String, CliError> {
    let p = ctx.at(g)?;
    let mut resolved = ctx.resolved("trajectory");
    resolved.params = ResolvedParams::from(&p);
    resolved.g_over_kappa = Some(p.g_over_kappa());
    resolved.trajectory = Some(setup.clone());
    let point = analytic_point(&p)?;
    let opts = SweepOptions {
        duration: setup.duration,
        dt: setup.dt,
        ..SweepOptions::default()
    };
    let traj = stationary_run(&point, &opts, ctx.seed)?;
    let report = SpectrumReport::from_trajectory(&traj, setup.segment)?;
    ctx.prepare(&resolved)?;

    let mut dump = Table::new(&TRAJECTORY_HEADER);
    for k in (0..traj.len()).step_by(setup.dump_every) {
        let (a, b) = (traj.b1[k], traj.b2[k]);
        dump.push(vec![traj.times[k], a.re, a.im, b.re, b.im]);
    }
    write_csv(&ctx.path("trajectory.csv"), &dump)?;

    let mut spec = Table::new(&["f_hz", "psd1", "psd2"]);
    for ((f, a), b) in report
        .clock1
        .frequencies
        .iter()
        .zip(&report.clock1.psd)
        .zip(&report.clock2.psd)
    {
        spec.push(vec![*f, *a, *b]);
    }
    write_csv(&ctx.path("spectrum.csv"), &spec)?;

    let f_ref = traj.reference_frequency / (2.0 * PI);
    write_json(
        &ctx.path("trajectory_summary.json"),
        &json!({
            "samples": traj.len(),
            "reference_frequency_hz": f_ref,
            "peaks_hz": report.peaks,
            "peak_offsets_hz": report.peaks.iter().map(|f| f - f_ref).collect::<Vec<_>>(),
            "gamma_plus_hz": point.modes.gamma_plus() / (2.0 * PI),
            "gamma_minus_hz": point.modes.gamma_minus() / (2.0 * PI),
        }),
    )?;
    maybe_svg(ctx, "spectrum.svg", || {
        let band: Vec<usize> = (0..spec.rows.len())
            .filter(|&i| (spec.rows[i][0] - f_ref).abs() <= 1000.0)
            .collect();
        let pick = |j: usize| band.iter().map(|&i| spec.rows[i][j]).collect::<Vec<_>>();
        line_plot("clock spectra", "f (Hz)", &pick(0), &[("psd1", pick(1)), ("psd2", pick(2))])
    })?;
    Ok(format!(
        "trajectory {} samples, {} spectral peak(s) -> {}",
        traj.len(),
        report.peaks.len(),
        ctx.out.display()
    ))
}

fn transient(ctx: &Context, g: f64, setup: &clocksync::TransientSetup) -> Result<String, CliError> {
    let p = ctx.at(Some(g))?;
    let mut resolved = ctx.resolved("transient");
    resolved.params = ResolvedParams::from(&p);
    resolved.g_over_kappa = Some(g);
    resolved.transient = Some(setup.clone());
    let exp = clocksync::transient_experiment(&ctx.params, g, setup, ctx.seed)?;
    ctx.prepare(&resolved)?;

    let res = &exp.result;
    let mut t = Table::new(&TRANSIENT_HEADER);
    for k in 0..res.times.len() {
        t.push(vec![
            res.times[k],
            res.r[k],
            res.flux.mu_b1[k],
            res.flux.mu_b2[k],
            res.flux.mu_a[k],
        ]);
    }
    write_csv(&ctx.path("transient.csv"), &t)?;
    write_json(
        &ctx.path("transient_summary.json"),
        &json!({
            "g_over_kappa": g,
            "transient_time": res.transient_time,
            "plateau": exp.plateau,
            "max_R": exp.max_r,
            "overshoot": exp.overshoot(),
            "integrated_mu_a": exp.integrated_mu_a,
            "mean_mu_a": exp.mean_mu_a(),
            "ness": exp.ness,
        }),
    )?;
    maybe_svg(ctx, "transient.svg", || {
        line_plot("transient correlation", "t (s)", &res.times, &[("R", res.r.clone())])
    })?;
    Ok(format!(
        "transient g/kappa={g} transient_time={} plateau={} -> {}",
        res.transient_time,
        exp.plateau,
        ctx.path("transient.csv").display()
    ))
}

fn modes(ctx: &Context, grid: &[f64]) -> Result<String, CliError> {
    let mut resolved = ctx.resolved("modes");
    resolved.grid = Some(grid.to_vec());
    let mut t = Table::new(&[
        "g_over_kappa",
        "omega_plus",
        "omega_minus",
        "gamma_plus",
        "gamma_minus",
        "ratio",
        "delta",
        "Gamma",
        "closed_gamma_plus",
        "closed_gamma_minus",
        "full_gamma_plus",
        "full_gamma_minus",
    ]);
    for &g in grid {
        let p = ctx.params.with_coupling(g);
        let point = analytic_point(&p)?;
        let c = default_coupling(&p)?;
        let m = &point.modes;
        let closed = match p.coupling_pattern() {
            CouplingPattern::Opposite => {
                let cf = normal_modes_closed_form(p.delta_omega(), p.gamma1, p.gamma2, &c);
                [cf.gamma_plus(), cf.gamma_minus()]
            }
            CouplingPattern::Same => [f64::NAN; 2],
        };
        let full = normal_modes_numeric(&full_drift_and_diffusion(&p))?;
        t.push(vec![
            g,
            m.omega_plus(),
            m.omega_minus(),
            m.gamma_plus(),
            m.gamma_minus(),
            m.linewidth_ratio(),
            c.delta,
            c.gamma,
            closed[0],
            closed[1],
            full.gamma_plus(),
            full.gamma_minus(),
        ]);
    }
    ctx.prepare(&resolved)?;
    write_csv(&ctx.path("modes.csv"), &t)?;
    maybe_svg(ctx, "modes.svg", || {
        let x = t.column("g_over_kappa").unwrap_or_default();
        let series: Vec<_> = ["gamma_plus", "gamma_minus"]
            .iter()
            .map(|c| (*c, t.column(c).unwrap_or_default()))
            .collect();
        line_plot("normal-mode linewidths (rad/s)", "|G|/kappa", &x, &series)
    })?;
    Ok(format!("modes {} points -> {}", grid.len(), ctx.path("modes.csv").display()))
}

