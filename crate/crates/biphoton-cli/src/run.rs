//! Subcommand dispatch: each run writes CSV tables plus a JSON metadata
//! sidecar and reports the artifacts it produced.

use std::path::{Path, PathBuf};

use biphoton::analytic::{
    cascade_probability, closed_form_stats, low_pump_applicable, low_pump_stats,
};
use biphoton::model::{build_collapse_ops, build_h_two_level, build_liouvillian, Frame};
use biphoton::spectra::{emission_spectrum, two_time_correlation, Mode, TauGrid};
use biphoton::steady::{
    convergence_ladder, steady_report, sweep, SpecStrategy, SteadyReport,
};
use biphoton::three_level::{fidelity_series, mapd_sweep};
use biphoton::trajectories::{
    jump_statistics, max_total_jump_rate, run_ensemble, write_event_log, TrajectoryConfig,
    DT_RATE_BUDGET,
};
use biphoton::{solve_steady_state, SpaceSpec};
use serde_json::json;

use crate::config::{Materialized, Subcommand};
use crate::output::{write_json, write_table, Cell};

pub enum CliError {
    Config(String),
    Lib(biphoton::Error),
    Io(std::io::Error),
}

impl CliError {
    /// Exit code and machine-readable class.
    pub fn classify(&self) -> (i32, &'static str) {
        match self {
            CliError::Config(_) => (2, "config"),
            CliError::Io(_) => (2, "config"),
            CliError::Lib(biphoton::Error::ConvergenceFailure { .. }) => (4, "convergence"),
            CliError::Lib(_) => (3, "numerical"),
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) => m.clone(),
            CliError::Lib(e) => e.to_string(),
            CliError::Io(e) => format!("i/o failure: {e}"),
        }
    }
}

impl From<biphoton::Error> for CliError {
    fn from(e: biphoton::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn report_cells(r: &SteadyReport, g1_hz: Option<f64>) -> Vec<Cell> {
    let mut row: Vec<Cell> = vec![
        r.eta.into(),
        r.tpe_rate.into(),
        r.ope_rate.into(),
        r.loss_rate.into(),
        r.n_a.into(),
        r.n_b.into(),
        r.pop_g.into(),
        r.pop_e.into(),
        r.g2zero.into(),
        r.mandel_q.into(),
        r.balance_residual.into(),
        (r.truncation.na_max() as u64).into(),
        (r.truncation.nb_max() as u64).into(),
    ];
    if let Some(hz) = g1_hz {
        row.push((r.tpe_rate * hz).into());
        row.push((r.ope_rate * hz).into());
        row.push((r.loss_rate * hz).into());
    }
    row
}

fn report_columns(axis: Option<&str>, g1_hz: bool) -> Vec<&str> {
    let mut cols = Vec::new();
    if let Some(a) = axis {
        cols.push(a);
    }
    cols.extend([
        "eta",
        "tpe_rate",
        "ope_rate",
        "loss_rate",
        "n_a",
        "n_b",
        "pop_g",
        "pop_e",
        "g2zero",
        "mandel_q",
        "balance_residual",
        "na_max",
        "nb_max",
    ]);
    if g1_hz {
        cols.extend(["tpe_per_second", "ope_per_second", "loss_per_second"]);
    }
    cols
}

fn strategy(m: &Materialized) -> SpecStrategy {
    if m.auto_converge {
        SpecStrategy::Converge {
            start: SpaceSpec::two_level(1, 2).unwrap(),
            tol: m.convergence_tol,
            max_dim: m.convergence_max_dim,
        }
    } else {
        SpecStrategy::Fixed(m.space)
    }
}

pub struct RunOutcome {
    pub outputs: Vec<PathBuf>,
    pub details: serde_json::Value,
}

pub fn run(m: &Materialized, out_dir: &Path) -> Result<RunOutcome, CliError> {
    std::fs::create_dir_all(out_dir)?;
    match m.config.subcommand {
        Subcommand::Steady => run_steady(m, out_dir),
        Subcommand::Sweep => run_sweep(m, out_dir),
        Subcommand::Analytic => run_analytic(m, out_dir),
        Subcommand::Traj => run_traj(m, out_dir),
        Subcommand::Spectrum => run_spectrum(m, out_dir),
        Subcommand::Validate3 => run_validate3(m, out_dir),
        Subcommand::Convergence => run_convergence(m, out_dir),
    }
}

fn prefix(m: &Materialized) -> String {
    m.config.out_prefix.clone().unwrap_or_default()
}

fn run_steady(m: &Materialized, out_dir: &Path) -> Result<RunOutcome, CliError> {
    let spec = match strategy(m) {
        SpecStrategy::Fixed(s) => s,
        SpecStrategy::Converge { start, tol, max_dim } => {
            convergence_ladder(&m.two_level, start, tol, max_dim)?.0
        }
    };
    let report = steady_report(&m.two_level, &spec)?;
    let path = out_dir.join(format!("{}.csv", prefix(m)));
    write_table(
        &report_columns(None, m.config.g1_hz.is_some()),
        &[report_cells(&report, m.config.g1_hz)],
        &path,
    )?;
    Ok(RunOutcome {
        outputs: vec![path],
        details: json!({
            "truncation_used": {"na_max": spec.na_max(), "nb_max": spec.nb_max()},
            "residuals": {"balance_residual": report.balance_residual},
        }),
    })
}

fn run_sweep(m: &Materialized, out_dir: &Path) -> Result<RunOutcome, CliError> {
    let axis = m.sweep_axis.expect("validated");
    let grid = m.sweep_grid.as_ref().expect("validated");
    let reports = sweep(&m.two_level, axis, grid, &strategy(m))?;
    let rows: Vec<Vec<Cell>> = grid
        .iter()
        .zip(&reports)
        .map(|(&x, r)| {
            let mut row = vec![Cell::from(x)];
            row.extend(report_cells(r, m.config.g1_hz));
            row
        })
        .collect();
    let path = out_dir.join(format!("{}.csv", prefix(m)));
    write_table(
        &report_columns(Some(axis.name()), m.config.g1_hz.is_some()),
        &rows,
        &path,
    )?;
    let worst_balance = reports
        .iter()
        .map(|r| r.balance_residual)
        .fold(0.0, f64::max);
    let truncations: Vec<(usize, usize)> = reports
        .iter()
        .map(|r| (r.truncation.na_max(), r.truncation.nb_max()))
        .collect();
    Ok(RunOutcome {
        outputs: vec![path],
        details: json!({
            "points": grid.len(),
            "residuals": {"worst_balance_residual": worst_balance},
            "truncation_used": truncations,
        }),
    })
}

fn run_analytic(m: &Materialized, out_dir: &Path) -> Result<RunOutcome, CliError> {
    let mut warnings = Vec::new();
    let points: Vec<biphoton::TwoLevelParams> = match (&m.sweep_axis, &m.sweep_grid) {
        (Some(axis), Some(grid)) => grid.iter().map(|&v| axis.apply(&m.two_level, v)).collect(),
        _ => vec![m.two_level],
    };
    if points.iter().any(|p| !low_pump_applicable(p)) {
        warnings.push(
            "pump is not far below the dissipative rates at every point; the low-pump columns \
             are diagnostics only"
                .to_string(),
        );
    }
    let mut rows = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let cf = closed_form_stats(p)?;
        let lp = low_pump_stats(p)?;
        let mut row: Vec<Cell> = Vec::new();
        if let (Some(_), Some(grid)) = (&m.sweep_axis, &m.sweep_grid) {
            row.push(grid[i].into());
        }
        row.extend([
            Cell::from(cf.xi),
            cf.nu.into(),
            cf.phi.into(),
            cf.eta.into(),
            cf.tpe_rate.into(),
            cf.ope_rate.into(),
            cf.loss_rate.into(),
            lp.eta.into(),
            lp.tpe_rate.into(),
            lp.ope_rate.into(),
            lp.loss_rate.into(),
            cascade_probability(p).into(),
        ]);
        rows.push(row);
    }
    let mut cols: Vec<&str> = Vec::new();
    if let Some(axis) = &m.sweep_axis {
        cols.push(axis.name());
    }
    cols.extend([
        "xi",
        "nu",
        "phi",
        "eta",
        "tpe_rate",
        "ope_rate",
        "loss_rate",
        "eta_low_pump",
        "tpe_low_pump",
        "ope_low_pump",
        "loss_low_pump",
        "cascade_probability",
    ]);
    let path = out_dir.join(format!("{}.csv", prefix(m)));
    write_table(&cols, &rows, &path)?;
    Ok(RunOutcome {
        outputs: vec![path],
        details: json!({"points": rows.len(), "extra_warnings": warnings}),
    })
}

fn run_traj(m: &Materialized, out_dir: &Path) -> Result<RunOutcome, CliError> {
    let t = m
        .config
        .trajectories
        .as_ref()
        .ok_or_else(|| CliError::Config("traj runs need a 'trajectories' section".into()))?;
    if t.n == 0 {
        return Err(CliError::Config("trajectories.n must be >= 1".into()));
    }
    let mut defaults = Vec::new();
    let max_rate = max_total_jump_rate(&m.two_level, &m.space);
    let dt = t.dt.unwrap_or_else(|| {
        let v = 0.9 * DT_RATE_BUDGET / max_rate;
        defaults.push(format!("trajectories.dt = {v:.3e}"));
        v
    });
    let steps = (t.t_max / dt).ceil() as usize;
    let sample_stride = t.sample_stride.unwrap_or_else(|| {
        let v = (steps / 2000).max(1);
        defaults.push(format!("trajectories.sample_stride = {v}"));
        v
    });
    let config = TrajectoryConfig {
        params: m.two_level,
        spec: m.space,
        t_max: t.t_max,
        dt,
        seed: m.seed,
        sample_stride,
    };
    config.validate()?;
    let records = run_ensemble(&config, t.n)?;
    let stats = jump_statistics(&records);

    let events_path = out_dir.join(format!("{}_events.csv", prefix(m)));
    let mut buf = Vec::new();
    write_event_log(&records, &mut buf)?;
    crate::output::atomic_write(&events_path, &buf)?;

    let series = biphoton::trajectories::ensemble_average(&config, t.n)?;
    let pop_path = out_dir.join(format!("{}_populations.csv", prefix(m)));
    let rows: Vec<Vec<Cell>> = (0..series.times.len())
        .map(|i| {
            vec![
                Cell::from(series.times[i]),
                series.pop_e[i].into(),
                series.n_a[i].into(),
                series.n_b[i].into(),
                series.stderr_pop_e[i].into(),
                series.stderr_n_a[i].into(),
                series.stderr_n_b[i].into(),
            ]
        })
        .collect();
    write_table(
        &[
            "time",
            "pop_e",
            "n_a",
            "n_b",
            "stderr_pop_e",
            "stderr_n_a",
            "stderr_n_b",
        ],
        &rows,
        &pop_path,
    )?;
    let stats_json = match &stats {
        Ok(s) => serde_json::to_value(s).unwrap(),
        Err(e) => json!({"unavailable": e.to_string()}),
    };
    Ok(RunOutcome {
        outputs: vec![events_path, pop_path],
        details: json!({
            "trajectories": t.n,
            "dt": dt,
            "sample_stride": sample_stride,
            "max_total_jump_rate": max_rate,
            "jump_statistics": stats_json,
            "extra_defaults": defaults,
        }),
    })
}

fn run_spectrum(m: &Materialized, out_dir: &Path) -> Result<RunOutcome, CliError> {
    let s = m.config.spectrum.clone().unwrap_or(crate::config::SpectrumConfig {
        modes: None,
        tau_samples: None,
        dtau: None,
        omega_max: None,
    });
    let mut defaults = Vec::new();
    let modes: Vec<Mode> = match &s.modes {
        Some(list) => list
            .iter()
            .map(|name| match name.as_str() {
                "a" => Ok(Mode::A),
                "b" => Ok(Mode::B),
                other => Err(CliError::Config(format!(
                    "spectrum.modes: unknown mode '{other}' (expected 'a' or 'b')"
                ))),
            })
            .collect::<Result<_, _>>()?,
        None => {
            defaults.push("spectrum.modes = [b, a]".to_string());
            vec![Mode::B, Mode::A]
        }
    };
    let n = s.tau_samples.unwrap_or_else(|| {
        defaults.push("spectrum.tau_samples = 2401".into());
        2401
    });
    let dtau = s.dtau.unwrap_or_else(|| {
        defaults.push("spectrum.dtau = 0.16".into());
        0.16
    });
    let omega_max = s.omega_max.unwrap_or_else(|| {
        let v = 3.0 * m.two_level.g1;
        defaults.push(format!("spectrum.omega_max = {v}"));
        v
    });
    let tau = TauGrid { n, dtau };

    let h = build_h_two_level(&m.two_level, &m.space, Frame::Rotating)?;
    let cs = build_collapse_ops(&m.two_level, &m.space)?;
    let liou = build_liouvillian(&h, &cs)?;
    let rho = solve_steady_state(&liou)?;

    let linewidth_hint = Some(
        (m.two_level.kappa1 + m.two_level.gamma).min(m.two_level.kappa2),
    );
    let mut outputs = Vec::new();
    let mut mode_meta = Vec::new();
    for mode in modes {
        let corr = two_time_correlation(&liou, &m.space, &rho, mode, &tau)?;
        let result = emission_spectrum(mode, &corr, &tau, omega_max, linewidth_hint)?;
        let path = out_dir.join(format!("{}_{}.csv", prefix(m), mode.label()));
        let with_absolute = m.two_level.omega0.is_some();
        let mut cols = vec!["detuning_over_g1", "value"];
        if with_absolute {
            cols.push("absolute_frequency_over_g1");
        }
        let rows: Vec<Vec<Cell>> = result
            .detunings
            .iter()
            .zip(&result.values)
            .map(|(&d, &v)| {
                let mut row = vec![Cell::from(d), Cell::from(v)];
                if let Some(w0) = m.two_level.omega0 {
                    let center = match mode {
                        Mode::A => w0,
                        Mode::B => w0 / 2.0,
                    };
                    row.push((center + d).into());
                }
                row
            })
            .collect();
        write_table(&cols, &rows, &path)?;
        mode_meta.push(json!({
            "mode": mode.label(),
            "resolution": result.resolution,
            "tau_samples": n,
            "dtau": dtau,
            "warnings": result.warnings,
            "file": path.file_name().unwrap().to_str(),
        }));
        outputs.push(path);
    }
    Ok(RunOutcome {
        outputs,
        details: json!({
            "modes": mode_meta,
            "extra_defaults": defaults,
            "truncation_used": {"na_max": m.space.na_max(), "nb_max": m.space.nb_max()},
        }),
    })
}

fn run_validate3(m: &Materialized, out_dir: &Path) -> Result<RunOutcome, CliError> {
    let p3 = m.three_level.expect("validated");
    let v = m.config.validate3.clone().unwrap_or(crate::config::Validate3Config {
        kappa2_grid: None,
        fidelity_t_max: None,
        fidelity_dt: None,
    });
    let mut defaults: Vec<String> = Vec::new();
    let t_max = v.fidelity_t_max.unwrap_or_else(|| {
        defaults.push("validate3.fidelity_t_max = 50".into());
        50.0
    });
    let dt = v.fidelity_dt.unwrap_or_else(|| {
        defaults.push("validate3.fidelity_dt = 0.1".into());
        0.1
    });
    let grid = match &v.kappa2_grid {
        Some(g) => g
            .materialize("validate3.kappa2_grid")
            .map_err(CliError::Config)?,
        None => {
            defaults.push("validate3.kappa2_grid = 7 log points in [0.2, 5]".into());
            let n = 7;
            (0..n)
                .map(|k| 0.2 * (5.0f64 / 0.2).powf(k as f64 / (n - 1) as f64))
                .collect()
        }
    };

    let fid_spec = SpaceSpec::three_level(1, 2).expect("static");
    defaults.push("validate3 fidelity space = (na_max = 1, nb_max = 2), exact for the closed manifold".into());
    let fid = fidelity_series(&p3, &fid_spec, t_max, dt)?;
    let fid_path = out_dir.join(format!("{}_fidelity.csv", prefix(m)));
    let rows: Vec<Vec<Cell>> = fid
        .times
        .iter()
        .zip(&fid.fidelities)
        .map(|(&t, &f)| vec![Cell::from(t), Cell::from(f)])
        .collect();
    write_table(&["t_gprime", "fidelity"], &rows, &fid_path)?;

    let mapd = mapd_sweep(&p3, &grid)?;
    let mapd_path = out_dir.join(format!("{}_mapd.csv", prefix(m)));
    let rows: Vec<Vec<Cell>> = (0..grid.len())
        .map(|i| {
            vec![
                Cell::from(mapd.kappa2_over_g1[i]),
                mapd.d_eta[i].into(),
                mapd.d_tpe[i].into(),
                mapd.d_ope[i].into(),
                mapd.d_loss[i].into(),
            ]
        })
        .collect();
    write_table(
        &["kappa2_over_g1", "d_eta", "d_tpe", "d_ope", "d_loss"],
        &rows,
        &mapd_path,
    )?;
    Ok(RunOutcome {
        outputs: vec![fid_path, mapd_path],
        details: json!({
            "min_fidelity": fid.min_fidelity(),
            "max_abs_deviation_percent": mapd.max_abs_deviation(),
            "extra_defaults": defaults,
        }),
    })
}

fn run_convergence(m: &Materialized, out_dir: &Path) -> Result<RunOutcome, CliError> {
    let start = if m.space_explicit {
        m.space
    } else {
        SpaceSpec::two_level(1, 2).expect("static")
    };
    let (converged, rungs) = convergence_ladder(
        &m.two_level,
        start,
        m.convergence_tol,
        m.convergence_max_dim,
    )?;
    let rows: Vec<Vec<Cell>> = rungs
        .iter()
        .map(|r| {
            vec![
                Cell::Int(r.spec.na_max() as u64),
                Cell::Int(r.spec.nb_max() as u64),
                Cell::Int(r.spec.dim() as u64),
                r.report.eta.into(),
                r.report.tpe_rate.into(),
                r.report.ope_rate.into(),
                r.report.loss_rate.into(),
                r.drift.into(),
            ]
        })
        .collect();
    let path = out_dir.join(format!("{}.csv", prefix(m)));
    write_table(
        &[
            "na_max", "nb_max", "dim", "eta", "tpe_rate", "ope_rate", "loss_rate", "drift",
        ],
        &rows,
        &path,
    )?;
    Ok(RunOutcome {
        outputs: vec![path],
        details: json!({
            "converged": {"na_max": converged.na_max(), "nb_max": converged.nb_max()},
            "tolerance": m.convergence_tol,
            "rungs": rungs.len(),
        }),
    })
}

/// Full metadata sidecar for a finished run.
pub fn write_metadata(
    m: &Materialized,
    outcome: &RunOutcome,
    out_dir: &Path,
    threads: usize,
    elapsed_s: f64,
) -> Result<PathBuf, CliError> {
    let path = out_dir.join(format!("{}.meta.json", prefix(m)));
    let meta = json!({
        "command": m.config.subcommand.name(),
        "package": {"name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION")},
        "config": serde_json::to_value(&m.config).unwrap(),
        "defaults_applied": m.defaults_applied,
        "warnings": m.warnings,
        "seed": m.seed,
        "threads": threads,
        "elapsed_seconds": elapsed_s,
        "outputs": outcome.outputs.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect::<Vec<_>>(),
        "details": outcome.details,
    });
    write_json(&path, &meta)?;
    Ok(path)
}
