//! Time-dependent master-equation coefficients for the centre-of-mass mode.
//!
//! Stored coefficients are defined by their appearance in the canonical
//! centre-of-mass Wigner flow
//!
//!   dW/dt = -(P/M1) dX W + M1 (Omega^2 + dOmega2) X dP W
//!           + 2 Gamma dP (P W) + Sigma dP^2 W + Delta dX dP W,
//!
//! equivalently the moment equations
//!
//!   d<X>/dt = <P>/M1,   d<P>/dt = -M1 (Omega^2 + dOmega2) <X> - 2 Gamma <P>,
//!   dS/dt = A S + S A^T + [[0, Delta], [Delta, 2 Sigma]].
//!
//! In the high-temperature ohmic limit with spectral density
//! `I(w) = M gamma w exp(-w^2/Lambda^2)` (per-oscillator mass M) these
//! plateau at Gamma -> gamma, Sigma -> 2 M1 gamma k_B T, Delta -> 0.
//!
//! Extraction goes through the two initial-value solutions chi1, chi2 of the
//! dissipative equation. Drift coefficients are Wronskian ratios (no
//! quadrature); diffusion coefficients come from the exact noise covariance
//! built on the cm-coupled noise kernel, with all double integrals updated
//! incrementally so the whole trajectory costs O(N^2).

use crate::elementary::{build_elementary, solve_homogeneous_ivp};
use crate::error::{Error, Result};
use crate::grid::{gregory_product, UniformGrid};
use crate::kernels::{KernelTable, PhysConsts, CM_COUPLING_FACTOR};

/// Identifier for the coefficient normalisation described in the module docs.
pub const CONVENTION: &str = "cm-wigner-canonical/v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientPoint {
    pub d_omega2: f64,
    pub gamma: f64,
    pub delta: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct CoefficientTrajectory {
    /// Horizon grid; step = stride * kernel step.
    pub grid: UniformGrid,
    /// One entry per horizon; `None` marks a singular horizon (gap).
    pub points: Vec<Option<CoefficientPoint>>,
    pub convention: &'static str,
    pub mass: f64,
    pub omega: f64,
}

impl CoefficientTrajectory {
    /// Coefficients at time t by linear interpolation; gaps are errors.
    pub fn at(&self, t: f64) -> Result<CoefficientPoint> {
        if t < -1e-12 || t > self.grid.t_max() + 1e-9 * self.grid.dt {
            return Err(Error::OutOfRange { t, t_max: self.grid.t_max() });
        }
        let x = (t / self.grid.dt).clamp(0.0, (self.grid.n - 1) as f64);
        let i = (x.floor() as usize).min(self.grid.n - 2.min(self.grid.n - 1));
        let j = (i + 1).min(self.grid.n - 1);
        let w = x - i as f64;
        match (&self.points[i], &self.points[j]) {
            (Some(a), Some(b)) => Ok(CoefficientPoint {
                d_omega2: a.d_omega2 * (1.0 - w) + b.d_omega2 * w,
                gamma: a.gamma * (1.0 - w) + b.gamma * w,
                delta: a.delta * (1.0 - w) + b.delta * w,
                sigma: a.sigma * (1.0 - w) + b.sigma * w,
            }),
            (None, _) => Err(Error::TrajectoryGap { t: self.grid.time(i) }),
            (_, None) => Err(Error::TrajectoryGap { t: self.grid.time(j) }),
        }
    }

    /// CSV serialisation, header `t,dOmega2,Gamma,Delta,Sigma`; gap rows are
    /// omitted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,dOmega2,Gamma,Delta,Sigma\n");
        for (i, p) in self.points.iter().enumerate() {
            if let Some(p) = p {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    self.grid.time(i),
                    p.d_omega2,
                    p.gamma,
                    p.delta,
                    p.sigma
                ));
            }
        }
        out
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_none())
            .map(|(i, _)| self.grid.time(i))
            .collect()
    }
}

/// Markovian (Fokker-Planck limit) constants (Gamma, Delta, Sigma) =
/// (gamma, 0, 2 M1 gamma k_B T). The frequency shift is cutoff-divergent in
/// this limit and must be supplied by the caller as a renormalised frequency.
pub fn markov_limit_constants(
    m1: f64,
    gamma: f64,
    temperature: f64,
    consts: &PhysConsts,
) -> (f64, f64, f64) {
    (gamma, 0.0, 2.0 * m1 * gamma * consts.k_b * temperature)
}

/// Full coefficient trajectory on [0, t_max], emitted every `stride` kernel
/// steps. `mass` is the per-oscillator mass M (the cm mode has M1 = 2M).
pub fn coefficient_trajectory(
    kt: &KernelTable,
    mass: f64,
    omega: f64,
    t_max: f64,
    stride: usize,
) -> Result<CoefficientTrajectory> {
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be >= 1".into()));
    }
    let chi1 = solve_homogeneous_ivp(kt, mass, omega, 1.0, 0.0, t_max)?;
    let chi2 = solve_homogeneous_ivp(kt, mass, omega, 0.0, 1.0, t_max)?;
    let n = chi1.grid.n;
    let dt = chi1.grid.dt;
    let m1 = 2.0 * mass;
    let hbar = kt.consts.hbar;

    // cm-coupled noise kernel
    let nu: Vec<f64> = kt.nu[..n].iter().map(|v| v * CM_COUPLING_FACTOR).collect();

    // response function G = chi2 and its derivatives (ddf from the equation
    // of motion, not differencing)
    let g = &chi2.f;
    let dg = &chi2.df;
    let ddg = &chi2.ddf;

    // drift coefficients from Wronskian ratios
    let mut gamma_c = vec![0.0f64; n];
    let mut om_r2 = vec![0.0f64; n];
    let mut singular = vec![false; n];
    for k in 0..n {
        let w = chi1.f[k] * chi2.df[k] - chi1.df[k] * chi2.f[k];
        if w.abs() < 1e-8 {
            singular[k] = true;
            continue;
        }
        let wdot = chi1.f[k] * chi2.ddf[k] - chi1.ddf[k] * chi2.f[k];
        gamma_c[k] = -0.5 * wdot / w;
        om_r2[k] = (chi2.ddf[k] * chi1.df[k] - chi1.ddf[k] * chi2.df[k]) / w;
    }

    // incremental trapezoid double integrals over the growing square:
    //   u_b[i](k) = sum_j c_j(k) nu(|i-j|) b_j,  I_ab(k) = dt^2 sum_i c_i a_i u_b[i]
    let mut u_g = vec![0.0f64; n];
    let mut u_dg = vec![0.0f64; n];
    let mut u_ddg = vec![0.0f64; n];
    let nu_abs = |i: usize, j: usize| nu[i.abs_diff(j)];

    // 1D boundary integrals S_X = int G nu, S_P = int dG nu (trapezoid prefix)
    let mut s_x = 0.0f64;
    let mut s_p = 0.0f64;

    let mut points: Vec<Option<CoefficientPoint>> = Vec::with_capacity((n - 1) / stride + 1);
    let point_at = |k: usize,
                    u_g: &[f64],
                    u_dg: &[f64],
                    u_ddg: &[f64],
                    s_x: f64,
                    s_p: f64,
                    gamma_c: &[f64],
                    om_r2: &[f64]|
     -> CoefficientPoint {
        let dot = |a: &[f64], u: &[f64]| -> f64 {
            let mut acc = 0.5 * a[0] * u[0] + 0.5 * a[k] * u[k];
            for i in 1..k {
                acc += a[i] * u[i];
            }
            acc * dt * dt
        };
        let (i_gdd, i_dgdd) = (dot(g, u_ddg), dot(dg, u_ddg));
        let (i_gg, i_gdg, i_dgdg) = (dot(g, u_g), dot(g, u_dg), dot(dg, u_dg));
        let delta = hbar / m1 * (i_gdd + om_r2[k] * i_gg + 2.0 * gamma_c[k] * i_gdg + s_x);
        let sigma = hbar * (i_dgdd + om_r2[k] * i_gdg + 2.0 * gamma_c[k] * i_dgdg + s_p);
        CoefficientPoint { d_omega2: om_r2[k] - omega * omega, gamma: gamma_c[k], delta, sigma }
    };

    points.push(if singular[0] {
        None
    } else {
        Some(CoefficientPoint { d_omega2: 0.0, gamma: 0.0, delta: 0.0, sigma: 0.0 })
    });

    for k in 1..n {
        // grow the u vectors from square [0,k-1]^2 to [0,k]^2
        if k == 1 {
            for i in 0..=1 {
                u_g[i] = 0.5 * (nu_abs(i, 0) * g[0] + nu_abs(i, 1) * g[1]);
                u_dg[i] = 0.5 * (nu_abs(i, 0) * dg[0] + nu_abs(i, 1) * dg[1]);
                u_ddg[i] = 0.5 * (nu_abs(i, 0) * ddg[0] + nu_abs(i, 1) * ddg[1]);
            }
        } else {
            for i in 0..k {
                u_g[i] += 0.5 * (nu_abs(i, k - 1) * g[k - 1] + nu_abs(i, k) * g[k]);
                u_dg[i] += 0.5 * (nu_abs(i, k - 1) * dg[k - 1] + nu_abs(i, k) * dg[k]);
                u_ddg[i] += 0.5 * (nu_abs(i, k - 1) * ddg[k - 1] + nu_abs(i, k) * ddg[k]);
            }
            let mut ag = 0.0;
            let mut adg = 0.0;
            let mut addg = 0.0;
            for j in 0..=k {
                let c = if j == 0 || j == k { 0.5 } else { 1.0 };
                let w = c * nu_abs(k, j);
                ag += w * g[j];
                adg += w * dg[j];
                addg += w * ddg[j];
            }
            u_g[k] = ag;
            u_dg[k] = adg;
            u_ddg[k] = addg;
        }
        s_x += 0.5 * dt * (g[k - 1] * nu[k - 1] + g[k] * nu[k]);
        s_p += 0.5 * dt * (dg[k - 1] * nu[k - 1] + dg[k] * nu[k]);

        if k % stride == 0 {
            points.push(if singular[k] {
                None
            } else {
                Some(point_at(k, &u_g, &u_dg, &u_ddg, s_x, s_p, &gamma_c, &om_r2))
            });
        }
    }

    let out_grid = UniformGrid::new(dt * stride as f64, points.len())?;
    Ok(CoefficientTrajectory {
        grid: out_grid,
        points,
        convention: CONVENTION,
        mass,
        omega,
    })
}

/// Coefficients at a single horizon t.
pub fn coefficients_at_horizon(
    kt: &KernelTable,
    mass: f64,
    omega: f64,
    t: f64,
) -> Result<CoefficientPoint> {
    let traj = coefficient_trajectory(kt, mass, omega, t, 1)?;
    traj.points
        .last()
        .and_then(|p| *p)
        .ok_or(Error::SingularCoefficient { t })
}

/// Cross-check route: drift coefficients through the boundary-value
/// functions, Gamma = (2/M) int_0^t eta(t-s) u1(s) ds / u1'(t) and
/// dOmega2 = (4/M) int_0^t eta(t-s) [u2 - u1 u2'(t)/u1'(t)] ds.
///
/// Equivalent to the Wronskian route away from focal points; kept as an
/// independently coded path for tests.
pub fn drift_via_boundary_functions(
    kt: &KernelTable,
    mass: f64,
    omega: f64,
    t: f64,
) -> Result<(f64, f64)> {
    let ef = build_elementary(kt, mass, omega, t)?;
    let n = ef.grid.n;
    let dt = ef.grid.dt;
    let eta_rev: Vec<f64> = (0..n).map(|i| kt.eta[n - 1 - i]).collect();
    let du1_t = ef.du1[n - 1];
    if du1_t.abs() < 1e-12 {
        return Err(Error::SingularCoefficient { t });
    }
    let du2_t = ef.du2[n - 1];
    let conv_u1 = gregory_product(&eta_rev, &ef.u1, dt);
    let mixed: Vec<f64> =
        (0..n).map(|i| ef.u2[i] - ef.u1[i] * du2_t / du1_t).collect();
    let conv_mix = gregory_product(&eta_rev, &mixed, dt);
    let gamma = 2.0 / mass * conv_u1 / du1_t;
    let d_omega2 = 4.0 / mass * conv_mix;
    let _ = omega;
    Ok((d_omega2, gamma))
}
