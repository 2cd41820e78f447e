//! Entanglement and uncertainty diagnostics on Gaussian states.

use crate::dynamics::{GaussianState, StateTrajectory};
use crate::error::{Error, Result};
use crate::kernels::PhysConsts;

/// Result of the EPR-variance separability test with u = x~1 - x~2,
/// v = P~1 + P~2; the state is separable iff Var(u) + Var(v) >= 2.
#[derive(Debug, Clone, Copy)]
pub struct DuanReport {
    pub variance_u: f64,
    pub variance_v: f64,
    pub lhs: f64,
    pub separable: bool,
    /// (s_x, s_p) used for the dimensionless coordinates.
    pub scaling: (f64, f64),
}

/// Separability check with the paper's diffusion-based scalings
/// x~ = (M D / hbar^3)^{1/4} x, P~ = (hbar M D)^{-1/4} P; D must be positive
/// (use [`duan_check_with_scaling`] otherwise).
pub fn duan_check(state: &GaussianState, mass: f64, diffusion: f64) -> Result<DuanReport> {
    if !(diffusion > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "diffusion D = {diffusion}; the standard scaling needs D > 0 \
             (supply explicit scalings instead)"
        )));
    }
    let hbar = state.hbar;
    let s_x = (mass * diffusion / hbar.powi(3)).powf(0.25);
    let s_p = 1.0 / (hbar * mass * diffusion).powf(0.25);
    Ok(duan_check_with_scaling(state, s_x, s_p))
}

pub fn duan_check_with_scaling(state: &GaussianState, s_x: f64, s_p: f64) -> DuanReport {
    let lab = state.to_lab();
    let c = &lab.cov;
    // Var(x1 - x2), Var(P1 + P2) in lab ordering (x1, P1, x2, P2)
    let var_x = c[(0, 0)] + c[(2, 2)] - 2.0 * c[(0, 2)];
    let var_p = c[(1, 1)] + c[(3, 3)] + 2.0 * c[(1, 3)];
    let variance_u = s_x * s_x * var_x;
    let variance_v = s_p * s_p * var_p;
    let lhs = variance_u + variance_v;
    DuanReport { variance_u, variance_v, lhs, separable: lhs >= 2.0, scaling: (s_x, s_p) }
}

/// Outcome of the closed-form disentanglement time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Disentanglement {
    /// Already separable at t = 0.
    Already,
    /// Separable from this time on.
    At(f64),
}

impl Disentanglement {
    pub fn time(&self) -> f64 {
        match self {
            Disentanglement::Already => 0.0,
            Disentanglement::At(t) => *t,
        }
    }
}

/// Closed-form disentanglement time of the free-particle Markov evolution
/// for the initial Wigner widths (a, b, c, d) in (X, P, x, p):
/// solves A t^2 + B t + C = 2 with
///   A = (4 d^2 / M^2) sqrt(M D / hbar^3), B = 2 sqrt(D / (hbar M)),
///   C = b^2 / sqrt(hbar M D) + c^2 sqrt(M D / hbar^3), D = 2 M1 gamma k_B T.
pub fn disentanglement_time(
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    mass: f64,
    gamma: f64,
    temperature: f64,
    consts: &PhysConsts,
) -> Result<Disentanglement> {
    let hbar = consts.hbar;
    let quarter = hbar * hbar / 4.0;
    if a * a * b * b < quarter * (1.0 - 1e-12) || c * c * d * d < quarter * (1.0 - 1e-12) {
        return Err(Error::InvalidState(format!(
            "widths violate the uncertainty relations: (ab)^2 = {}, (cd)^2 = {}, hbar^2/4 = {quarter}",
            (a * b).powi(2),
            (c * d).powi(2)
        )));
    }
    let m1 = 2.0 * mass;
    let diffusion = 2.0 * m1 * gamma * consts.k_b * temperature;
    if !(diffusion > 0.0) {
        return Err(Error::InvalidParameter(format!("D = {diffusion} must be positive")));
    }
    let sx2 = (mass * diffusion / hbar.powi(3)).sqrt();
    let big_a = 4.0 * d * d / (mass * mass) * sx2;
    let big_b = 2.0 * (diffusion / (hbar * mass)).sqrt();
    let big_c = b * b / (hbar * mass * diffusion).sqrt() + c * c * sx2;
    if big_c >= 2.0 {
        return Ok(Disentanglement::Already);
    }
    let disc = big_b * big_b - 4.0 * big_a * big_c + 8.0 * big_a;
    Ok(Disentanglement::At((-big_b + disc.sqrt()) / (2.0 * big_a)))
}

/// One row of the uncertainty diagnostics along a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct UncertaintyPoint {
    pub t: f64,
    /// U(t) = Var(X) Var(P) Var(x) Var(p) in cm/rel coordinates.
    pub u: f64,
    /// Lab-frame product Var(x1) Var(P1) Var(x2) Var(P2).
    pub u_lab: f64,
    /// Reported check U_lab >= U / 8.
    pub bound_ok: bool,
}

/// Uncertainty product series along an evolved trajectory.
pub fn uncertainty_product(traj: &StateTrajectory) -> Vec<UncertaintyPoint> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| {
            let cm = s.to_cm_rel();
            let u = cm.cov[(0, 0)] * cm.cov[(1, 1)] * cm.cov[(2, 2)] * cm.cov[(3, 3)];
            let lab = s.to_lab();
            let u_lab = lab.cov[(0, 0)] * lab.cov[(1, 1)] * lab.cov[(2, 2)] * lab.cov[(3, 3)];
            UncertaintyPoint { t, u, u_lab, bound_ok: u_lab >= u / 8.0 - 1e-12 * u.abs() }
        })
        .collect()
}

fn coth(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 / x + x / 3.0
    } else {
        1.0 / x.tanh()
    }
}

/// Weak-damping closed forms (f_cm, f_rel) for an initial minimal-uncertainty
/// pair with dimensionless width ratio `delta_w` = sigma^2 / sigma_vacuum^2.
/// Refused for gamma >= 2 Omega (overdamped); the trajectory route remains
/// available there.
pub fn closed_form_fcm_frel(
    omega: f64,
    gamma: f64,
    temperature: f64,
    delta_w: f64,
    t: f64,
    consts: &PhysConsts,
) -> Result<(f64, f64)> {
    if gamma >= 2.0 * omega {
        return Err(Error::UnsupportedModel(format!(
            "closed form needs weak damping gamma < 2 Omega (gamma = {gamma}, Omega = {omega})"
        )));
    }
    let hbar = consts.hbar;
    let h2 = hbar * hbar;
    let wp = (omega * omega - gamma * gamma / 4.0).sqrt();
    let cth = if temperature > 0.0 {
        coth(hbar * wp / (2.0 * consts.k_b * temperature))
    } else {
        1.0
    };
    let d = delta_w;
    let e1 = (-gamma * t).exp();
    let s2 = (2.0 * wp * t).sin();
    let s1 = (wp * t).sin();

    let group1 = h2 / 4.0 * (e1 + cth * (1.0 - e1)).powi(2);
    let group2 = h2
        * cth
        * (((1.0 - d).powi(2) / (4.0 * d)) * (1.0 - e1)
            - (1.0 - d * d) * gamma / (8.0 * wp * d) * s2)
        * e1;
    let group3 = h2
        * (((1.0 - d * d) / (4.0 * d)) * s2
            + gamma / (2.0 * wp) * (cth - (1.0 + d * d) / (2.0 * d)) * s1 * s1)
            .powi(2)
        * e1
        * e1;
    let f_cm = group1 + group2 + group3;

    let sr = (2.0 * omega * t).sin();
    let f_rel = h2 / 4.0 * (1.0 + (1.0 - d * d).powi(2) / (4.0 * d * d) * sr * sr);
    Ok((f_cm, f_rel))
}

/// Short-time expansion of f_cm (t << 1/gamma, 1/Omega).
pub fn short_time_fcm(
    omega: f64,
    gamma: f64,
    temperature: f64,
    delta_w: f64,
    t: f64,
    consts: &PhysConsts,
) -> f64 {
    let hbar = consts.hbar;
    let wp = (omega * omega - gamma * gamma / 4.0).sqrt();
    let cth = if temperature > 0.0 {
        coth(hbar * wp / (2.0 * consts.k_b * temperature))
    } else {
        1.0
    };
    hbar * hbar / 4.0 * (1.0 + 2.0 * (delta_w * cth - 1.0) * gamma * t)
}

/// Interferometric fringe visibility (max - min)/(max + min) over a window of
/// a sampled density slice. Returns (visibility, flat_flag); a slice without
/// oscillatory structure reports (0, true).
pub fn fringe_visibility(xs: &[f64], density: &[f64], window: (f64, f64)) -> (f64, bool) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&x, &p) in xs.iter().zip(density) {
        if x >= window.0 && x <= window.1 {
            lo = lo.min(p);
            hi = hi.max(p);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, true);
    }
    if hi - lo <= 1e-12 * hi.abs().max(1e-300) {
        return (0.0, true);
    }
    ((hi - lo) / (hi + lo), false)
}
