//! Command implementations: each consumes a validated [`RunConfig`],
//! writes its CSV/JSON outputs plus a summary sidecar, and distinguishes
//! configuration errors (exit 2) from numerical failures (exit 3).

use std::path::Path;

use qbm2::analysis::{
    closed_form_fcm_frel, disentanglement_time, duan_check, fringe_visibility,
    uncertainty_product, Disentanglement,
};
use qbm2::coefficients::{coefficient_trajectory, CoefficientTrajectory};
use qbm2::dynamics::{evolve, CmDrive, Ordering, StateTrajectory};
use qbm2::elementary::build_elementary;
use qbm2::kernels::{tabulate_kernels, KernelTable};
use qbm2::oracle::{compare_master_vs_oracle, discretize_ohmic, evolve_exact, FiniteBath};
use qbm2::propagator::{build_propagator, EvolvedSuperposition};

use crate::config::RunConfig;
use crate::output::{write_summary, write_table, Format};

/// Error class carrying the exit-code contract.
#[derive(Debug)]
pub enum CmdError {
    /// Invalid or incomplete configuration: exit 2.
    Config(String),
    /// Numerical or model failure at run time: exit 3.
    Run(String),
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Config(m) => write!(f, "configuration error: {m}"),
            CmdError::Run(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

type CmdResult = Result<(), CmdError>;

fn cfg_err<E: std::fmt::Display>(e: E) -> CmdError {
    CmdError::Config(e.to_string())
}

fn run_err<E: std::fmt::Display>(e: E) -> CmdError {
    CmdError::Run(e.to_string())
}

fn io_err<E: std::fmt::Display>(e: E) -> CmdError {
    CmdError::Run(format!("io: {e}"))
}

pub struct CommonArgs<'a> {
    pub out_dir: &'a Path,
    pub stride: Option<usize>,
    pub threshold: Option<f64>,
    pub format: Format,
}

fn kernel_table(cfg: &RunConfig) -> Result<KernelTable, CmdError> {
    let bath = cfg.bath_required().map_err(cfg_err)?;
    let sd = bath.spectral_density().map_err(cfg_err)?;
    let grid = cfg.grid_required().map_err(cfg_err)?;
    tabulate_kernels(&sd, bath.temperature, grid.t_max, grid.dt, cfg.consts()).map_err(run_err)
}

fn coefficients(cfg: &RunConfig, stride: usize) -> Result<CoefficientTrajectory, CmdError> {
    let kt = kernel_table(cfg)?;
    let grid = cfg.grid_required().map_err(cfg_err)?;
    coefficient_trajectory(&kt, cfg.system.mass, cfg.system.omega, grid.t_max, stride)
        .map_err(run_err)
}

pub fn cmd_coeffs(cfg: &RunConfig, args: &CommonArgs) -> CmdResult {
    let grid = cfg.grid_required().map_err(cfg_err)?;
    let stride = args.stride.unwrap_or(grid.output_stride);
    let traj = coefficients(cfg, stride)?;
    write_table(args.out_dir, "coeffs", &traj.to_csv(), args.format).map_err(io_err)?;
    let last = traj.points.iter().rev().find_map(|p| *p);
    let summary = serde_json::json!({
        "convention": traj.convention,
        "gaps": traj.gaps(),
        "points": traj.points.len(),
        "final": last.map(|p| serde_json::json!({
            "t": traj.grid.t_max(),
            "dOmega2": p.d_omega2,
            "Gamma": p.gamma,
            "Delta": p.delta,
            "Sigma": p.sigma,
        })),
    });
    write_summary(args.out_dir, "coeffs", &summary).map_err(io_err)
}

/// Shared trajectory machinery for evolve / entangle / uncertainty: Markov
/// constants when a [markov] section is present, the computed coefficient
/// trajectory otherwise.
fn evolve_trajectory(cfg: &RunConfig, stride: usize) -> Result<StateTrajectory, CmdError> {
    let grid = cfg.grid_required().map_err(cfg_err)?;
    let system = cfg.system_config().map_err(cfg_err)?;
    let state = cfg.initial_state().map_err(cfg_err)?;
    if let Some(mk) = &cfg.markov {
        let drive = CmDrive::Markov {
            omega_prime: mk.omega_prime,
            gamma: mk.gamma,
            delta: mk.delta,
            sigma: mk.sigma,
        };
        evolve(&state, &system, &drive, grid.t_max, grid.dt, stride).map_err(run_err)
    } else {
        let traj = coefficients(cfg, 1)?;
        evolve(&state, &system, &CmDrive::Trajectory(&traj), grid.t_max, grid.dt, stride)
            .map_err(run_err)
    }
}

pub fn cmd_evolve(cfg: &RunConfig, args: &CommonArgs) -> CmdResult {
    let grid = cfg.grid_required().map_err(cfg_err)?;
    let stride = args.stride.unwrap_or(grid.output_stride);
    let traj = evolve_trajectory(cfg, stride)?;
    let ordering = match cfg.evolve.as_ref().map(|e| e.output_ordering.as_str()) {
        None | Some("cm_rel") => Ordering::CmRel,
        Some("lab") => Ordering::Lab,
        Some(other) => return Err(CmdError::Config(format!("unknown output ordering '{other}'"))),
    };
    let out = traj.map_ordering(ordering);
    write_table(args.out_dir, "evolve", &out.to_csv(), args.format).map_err(io_err)?;
    let last = out.states.last().unwrap();
    let summary = serde_json::json!({
        "ordering": if ordering == Ordering::CmRel { "cm_rel" } else { "lab" },
        "t_final": out.times.last(),
        "mean_final": [last.mean[0], last.mean[1], last.mean[2], last.mean[3]],
        "rs_min_eig_final": last.robertson_schrodinger_min_eig(),
    });
    write_summary(args.out_dir, "evolve", &summary).map_err(io_err)
}

pub fn cmd_entangle(cfg: &RunConfig, args: &CommonArgs) -> CmdResult {
    let grid = cfg.grid_required().map_err(cfg_err)?;
    let stride = args.stride.unwrap_or(grid.output_stride);
    let system = cfg.system_config().map_err(cfg_err)?;
    // diffusion for the EPR scalings: explicit, or 2 M1 gamma k_B T from the bath
    let diffusion = match cfg.entangle.as_ref().and_then(|e| e.diffusion) {
        Some(d) => d,
        None => {
            let bath = cfg.bath_required().map_err(cfg_err)?;
            let gamma = bath
                .damping
                .ok_or_else(|| CmdError::Config("entangle needs bath damping or explicit diffusion".into()))?;
            2.0 * system.m1() * gamma * cfg.consts().k_b * bath.temperature
        }
    };
    let traj = evolve_trajectory(cfg, stride)?;
    let mut csv = String::from("t,var_u,var_v,lhs,separable\n");
    let mut first_crossing: Option<f64> = None;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let r = duan_check(s, system.mass, diffusion).map_err(run_err)?;
        csv.push_str(&format!(
            "{t},{},{},{},{}\n",
            r.variance_u,
            r.variance_v,
            r.lhs,
            if r.separable { 1 } else { 0 }
        ));
        if first_crossing.is_none() && r.separable {
            first_crossing = Some(*t);
        }
    }
    write_table(args.out_dir, "entangle", &csv, args.format).map_err(io_err)?;

    // closed-form disentanglement time when the state is width-parametrised
    // and the bath supplies (gamma, T)
    let closed_form = match (
        cfg.initial_state.as_ref().and_then(|i| i.widths),
        cfg.bath.as_ref().and_then(|b| b.damping.map(|g| (g, b.temperature))),
    ) {
        (Some([a, b, c, d]), Some((gamma, temp))) => Some(
            disentanglement_time(a, b, c, d, system.mass, gamma, temp, &cfg.consts())
                .map_err(run_err)?,
        ),
        _ => None,
    };
    let summary = serde_json::json!({
        "diffusion": diffusion,
        "first_crossing": first_crossing,
        "t_dent_closed_form": closed_form.map(|c| match c {
            Disentanglement::Already => 0.0,
            Disentanglement::At(t) => t,
        }),
    });
    write_summary(args.out_dir, "entangle", &summary).map_err(io_err)
}

pub fn cmd_uncertainty(cfg: &RunConfig, args: &CommonArgs) -> CmdResult {
    let grid = cfg.grid_required().map_err(cfg_err)?;
    let stride = args.stride.unwrap_or(grid.output_stride);
    let delta_w = cfg
        .uncertainty
        .as_ref()
        .map(|u| u.delta_w)
        .ok_or_else(|| CmdError::Config("uncertainty needs [uncertainty].delta_w".into()))?;
    let bath = cfg.bath_required().map_err(cfg_err)?;
    let gamma = bath
        .damping
        .ok_or_else(|| CmdError::Config("uncertainty closed forms need bath damping".into()))?;
    let temp = bath.temperature;
    let traj = evolve_trajectory(cfg, stride)?;
    let points = uncertainty_product(&traj);
    let mut csv = String::from("t,U,U_lab,bound_ok,f_cm,f_rel,f_cm_f_rel\n");
    for p in &points {
        let (f_cm, f_rel) =
            closed_form_fcm_frel(cfg.system.omega, gamma, temp, delta_w, p.t, &cfg.consts())
                .map_err(run_err)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.t,
            p.u,
            p.u_lab,
            if p.bound_ok { 1 } else { 0 },
            f_cm,
            f_rel,
            f_cm * f_rel
        ));
    }
    write_table(args.out_dir, "uncertainty", &csv, args.format).map_err(io_err)?;
    let hbar = cfg.system.hbar;
    let summary = serde_json::json!({
        "u_initial": points.first().map(|p| p.u),
        "u_vacuum": hbar.powi(4) / 16.0,
        "bound_violations": points.iter().filter(|p| !p.bound_ok).count(),
    });
    write_summary(args.out_dir, "uncertainty", &summary).map_err(io_err)
}

pub fn cmd_decohere(cfg: &RunConfig, args: &CommonArgs) -> CmdResult {
    if (cfg.system.mass - 1.0).abs() > 1e-12 || (cfg.system.hbar - 1.0).abs() > 1e-12 {
        return Err(CmdError::Config(
            "decohere works in reduced units: set system mass = 1 and hbar = 1".into(),
        ));
    }
    if cfg.system.kappa != 0.0 {
        return Err(CmdError::Config(
            "decohere propagates uncoupled oscillators (kappa = 0)".into(),
        ));
    }
    let dec = cfg
        .decohere
        .as_ref()
        .ok_or_else(|| CmdError::Config("this command requires a [decohere] section".into()))?;
    if dec.horizons.is_empty() || dec.n_points < 2 {
        return Err(CmdError::Config("decohere needs horizons and n_points >= 2".into()));
    }
    let spec = cfg.superposition().map_err(cfg_err)?;
    let kt = kernel_table(cfg)?;
    let window = dec.window.map(|w| (w[0], w[1])).unwrap_or((-spec.l0 / 2.0, spec.l0 / 2.0));

    let xs: Vec<f64> = (0..dec.n_points)
        .map(|i| dec.x_min + (dec.x_max - dec.x_min) * i as f64 / (dec.n_points - 1) as f64)
        .collect();
    let mut csv = String::from("horizon,x,density\n");
    let mut horizon_summaries = Vec::new();
    let mut last_ev: Option<EvolvedSuperposition> = None;
    for &h in &dec.horizons {
        let ef = build_elementary(&kt, cfg.system.mass, cfg.system.omega, h).map_err(run_err)?;
        let pd = build_propagator(&ef, &kt).map_err(run_err)?;
        let ev = EvolvedSuperposition::new(&pd, &spec).map_err(run_err)?;
        let dens = ev.diagonal_density(&xs);
        for (x, d) in xs.iter().zip(&dens) {
            csv.push_str(&format!("{h},{x},{d}\n"));
        }
        let (vis, flat) = fringe_visibility(&xs, &dens, window);
        let trace = ev.trace().map_err(run_err)?;
        let purity = ev.purity().map_err(run_err)?;
        horizon_summaries.push(serde_json::json!({
            "horizon": h,
            "visibility": vis,
            "flat": flat,
            "trace_re": trace.re,
            "trace_im": trace.im,
            "purity": purity,
        }));
        last_ev = Some(ev);
    }
    write_table(args.out_dir, "decohere", &csv, args.format).map_err(io_err)?;

    if dec.lattice {
        let ev = last_ev.as_ref().unwrap();
        let n = dec.lattice_points;
        let axis: Vec<f64> = (0..n)
            .map(|i| dec.x_min + (dec.x_max - dec.x_min) * i as f64 / (n - 1) as f64)
            .collect();
        let mut lat = String::from("x1,x2,y1,y2,re,im\n");
        for &x1 in &axis {
            for &x2 in &axis {
                for &y1 in &axis {
                    for &y2 in &axis {
                        let v = ev.rho(&[x1, x2, y1, y2]);
                        lat.push_str(&format!("{x1},{x2},{y1},{y2},{},{}\n", v.re, v.im));
                    }
                }
            }
        }
        write_table(args.out_dir, "decohere_lattice", &lat, args.format).map_err(io_err)?;
    }

    let summary = serde_json::json!({
        "window": [window.0, window.1],
        "horizons": horizon_summaries,
    });
    write_summary(args.out_dir, "decohere", &summary).map_err(io_err)
}

fn finite_bath(cfg: &RunConfig) -> Result<FiniteBath, CmdError> {
    let bath = cfg.bath_required().map_err(cfg_err)?;
    let sd = bath.spectral_density().map_err(cfg_err)?;
    match bath.kind.as_str() {
        "ohmic" => {
            let osec = cfg
                .oracle
                .as_ref()
                .ok_or_else(|| CmdError::Config("oracle command needs an [oracle] section".into()))?;
            let n_modes = osec
                .n_modes
                .ok_or_else(|| CmdError::Config("[oracle] needs n_modes for an ohmic bath".into()))?;
            let omega_max = osec.omega_max.unwrap_or_else(|| 4.0 * bath.cutoff.unwrap_or(1.0));
            discretize_ohmic(&sd, n_modes, omega_max).map_err(run_err)
        }
        "discrete" => {
            let modes = bath
                .modes
                .as_ref()
                .ok_or_else(|| CmdError::Config("discrete bath needs modes".into()))?
                .iter()
                .map(|m| qbm2::kernels::BathMode {
                    mass: m.mass,
                    frequency: m.frequency,
                    coupling: m.coupling,
                })
                .collect();
            FiniteBath::new(modes, qbm2::oracle::BathProvenance::Explicit).map_err(run_err)
        }
        other => Err(CmdError::Config(format!("unknown bath kind '{other}'"))),
    }
}

pub fn cmd_oracle(cfg: &RunConfig, args: &CommonArgs) -> CmdResult {
    let grid = cfg.grid_required().map_err(cfg_err)?;
    let osec = cfg
        .oracle
        .as_ref()
        .ok_or_else(|| CmdError::Config("this command requires an [oracle] section".into()))?;
    let system = cfg.system_config().map_err(cfg_err)?;
    let state = cfg.initial_state().map_err(cfg_err)?;
    let bath_sec = cfg.bath_required().map_err(cfg_err)?;
    let bath = finite_bath(cfg)?;
    let out = evolve_exact(&bath, &system, &state, bath_sec.temperature, grid.t_max, osec.n_out)
        .map_err(run_err)?;
    write_table(args.out_dir, "oracle", &out.trajectory.to_csv(), args.format).map_err(io_err)?;

    let mut summary = serde_json::json!({
        "recurrence_time": out.recurrence_time,
        "recurrence_warning": out.recurrence_warning,
        "n_modes": bath.modes.len(),
    });

    if osec.compare {
        // master route on the same discrete bath
        let dsd = bath.spectral_density();
        let kt = tabulate_kernels(&dsd, bath_sec.temperature, grid.t_max, grid.dt, cfg.consts())
            .map_err(run_err)?;
        let traj = coefficient_trajectory(&kt, system.mass, system.omega, grid.t_max, 1)
            .map_err(run_err)?;
        let steps_per_out = grid.t_max / osec.n_out as f64 / grid.dt;
        if (steps_per_out - steps_per_out.round()).abs() > 1e-9 {
            return Err(CmdError::Config(
                "oracle compare needs t_max / n_out to be a multiple of dt".into(),
            ));
        }
        let master = evolve(
            &state,
            &system,
            &CmDrive::Trajectory(&traj),
            grid.t_max,
            grid.dt,
            steps_per_out.round() as usize,
        )
        .map_err(run_err)?;
        let report = compare_master_vs_oracle(&master, &out.trajectory).map_err(run_err)?;
        write_table(args.out_dir, "oracle_compare", &report.to_csv(), args.format)
            .map_err(io_err)?;
        let threshold = args.threshold.unwrap_or(osec.threshold);
        let pass = report.max_rel_error <= threshold;
        summary["compare"] = serde_json::json!({
            "max_rel_error": report.max_rel_error,
            "threshold": threshold,
            "pass": pass,
            "diagnosis": report.diagnosis,
        });
        write_summary(args.out_dir, "oracle", &summary).map_err(io_err)?;
        if !pass {
            return Err(CmdError::Run(format!(
                "master vs oracle max relative error {} exceeds threshold {threshold}",
                report.max_rel_error
            )));
        }
        return Ok(());
    }
    write_summary(args.out_dir, "oracle", &summary).map_err(io_err)
}
