//! Gaussian-state evolution of the two-oscillator system.
//!
//! States are means and covariances of (X, P, x, p) or (x1, P1, x2, P2);
//! the quadratic model makes the moment flow exact, so the Fokker-Planck
//! equation is never discretised. The centre-of-mass block is driven by a
//! coefficient trajectory (or Markov constants) through
//!
//!   A = [[0, 1/M1], [-M1 (Omega^2 + dOmega2), -2 Gamma]],
//!   D = [[0, Delta], [Delta, 2 Sigma]],
//!
//! the relative block rotates unitarily, and cm-rel cross covariances ride
//! the combined linear flow.

use nalgebra::{Matrix2, Matrix4, SMatrix, Vector2, Vector4};

use crate::coefficients::CoefficientTrajectory;
use crate::error::{Error, Result};
use crate::kernels::PhysConsts;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    /// (X, P, x, p)
    CmRel,
    /// (x1, P1, x2, P2)
    Lab,
}

/// Symplectic form for either ordering (position/momentum pairs).
pub fn symplectic_form() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, -1.0, 0.0,
    )
}

/// CmRel <- Lab transformation matrix: X = (x1+x2)/2, P = P1+P2,
/// x = x1-x2, p = (P1-P2)/2.
pub fn cm_rel_from_lab() -> Matrix4<f64> {
    Matrix4::new(
        0.5, 0.0, 0.5, 0.0, //
        0.0, 1.0, 0.0, 1.0, //
        1.0, 0.0, -1.0, 0.0, //
        0.0, 0.5, 0.0, -0.5,
    )
}

/// Lab <- CmRel: x1 = X + x/2, P1 = P/2 + p, x2 = X - x/2, P2 = P/2 - p.
pub fn lab_from_cm_rel() -> Matrix4<f64> {
    Matrix4::new(
        1.0, 0.0, 0.5, 0.0, //
        0.0, 0.5, 0.0, 1.0, //
        1.0, 0.0, -0.5, 0.0, //
        0.0, 0.5, 0.0, -1.0,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub ordering: Ordering,
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
    pub hbar: f64,
}

impl GaussianState {
    /// Validated constructor: covariance must be symmetric and satisfy the
    /// Robertson-Schrodinger condition cov + (i hbar/2) J >= 0.
    pub fn new(ordering: Ordering, mean: Vector4<f64>, cov: Matrix4<f64>, hbar: f64) -> Result<Self> {
        let asym = (cov - cov.transpose()).abs().max();
        let scale = cov.abs().max().max(1e-300);
        if asym > 1e-9 * scale {
            return Err(Error::InvalidState(format!(
                "covariance not symmetric (max asymmetry {asym:e})"
            )));
        }
        let state = Self { ordering, mean, cov, hbar };
        let min_eig = state.robertson_schrodinger_min_eig();
        if min_eig < -1e-9 * scale.max(hbar) {
            return Err(Error::InvalidState(format!(
                "covariance violates the uncertainty condition (min eig {min_eig:e})"
            )));
        }
        Ok(state)
    }

    /// Constructor for internally produced states (evolution output).
    pub fn new_unchecked(
        ordering: Ordering,
        mean: Vector4<f64>,
        cov: Matrix4<f64>,
        hbar: f64,
    ) -> Self {
        Self { ordering, mean, cov, hbar }
    }

    /// Diagonal CmRel state from phase-space widths (a, b, c, d):
    /// cov = diag(a^2, b^2, c^2, d^2).
    pub fn from_widths(a: f64, b: f64, c: f64, d: f64, hbar: f64) -> Result<Self> {
        Self::new(
            Ordering::CmRel,
            Vector4::zeros(),
            Matrix4::from_diagonal(&Vector4::new(a * a, b * b, c * c, d * d)),
            hbar,
        )
    }

    /// Minimum eigenvalue of cov + (i hbar / 2) J, computed through the real
    /// 8x8 embedding [[A, -B], [B, A]] of the Hermitian matrix A + iB.
    pub fn robertson_schrodinger_min_eig(&self) -> f64 {
        let a = self.cov;
        let b = symplectic_form() * (self.hbar / 2.0);
        let mut m = SMatrix::<f64, 8, 8>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = a[(i, j)];
                m[(i + 4, j + 4)] = a[(i, j)];
                m[(i, j + 4)] = -b[(i, j)];
                m[(i + 4, j)] = b[(i, j)];
            }
        }
        let eig = m.symmetric_eigenvalues();
        eig.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn to_cm_rel(&self) -> GaussianState {
        match self.ordering {
            Ordering::CmRel => self.clone(),
            Ordering::Lab => {
                let t = cm_rel_from_lab();
                GaussianState::new_unchecked(
                    Ordering::CmRel,
                    t * self.mean,
                    t * self.cov * t.transpose(),
                    self.hbar,
                )
            }
        }
    }

    pub fn to_lab(&self) -> GaussianState {
        match self.ordering {
            Ordering::Lab => self.clone(),
            Ordering::CmRel => {
                let t = lab_from_cm_rel();
                GaussianState::new_unchecked(
                    Ordering::Lab,
                    t * self.mean,
                    t * self.cov * t.transpose(),
                    self.hbar,
                )
            }
        }
    }
}

/// System parameters: two oscillators of mass M and frequency Omega with a
/// relative-coordinate coupling kappa (x1 - x2)^k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    pub mass: f64,
    pub omega: f64,
    pub kappa: f64,
    pub exponent: i32,
    pub consts: PhysConsts,
}

impl SystemConfig {
    pub fn new(mass: f64, omega: f64, kappa: f64, exponent: i32, consts: PhysConsts) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::InvalidParameter(format!("mass = {mass}")));
        }
        if !(omega >= 0.0) {
            return Err(Error::InvalidParameter(format!("omega = {omega}")));
        }
        Ok(Self { mass, omega, kappa, exponent, consts })
    }

    /// Centre-of-mass mass M1 = 2M.
    pub fn m1(&self) -> f64 {
        2.0 * self.mass
    }

    /// Relative mass M2 = M/2.
    pub fn m2(&self) -> f64 {
        0.5 * self.mass
    }

    /// Effective relative frequency; only quadratic (or absent) coupling
    /// keeps the relative dynamics Gaussian.
    pub fn omega_rel(&self) -> Result<f64> {
        if self.kappa == 0.0 || self.exponent == 0 {
            return Ok(self.omega);
        }
        if self.exponent != 2 {
            return Err(Error::UnsupportedModel(format!(
                "relative coupling kappa x^{} is not quadratic; Gaussian evolution undefined",
                self.exponent
            )));
        }
        let w2 = self.omega * self.omega + 2.0 * self.kappa / self.m2();
        if w2 < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "inverted relative oscillator: Omega_rel^2 = {w2}"
            )));
        }
        Ok(w2.sqrt())
    }
}

/// Source of the cm drive coefficients.
#[derive(Debug, Clone)]
pub enum CmDrive<'a> {
    /// Non-Markovian trajectory (carries the bare frequency it was built for).
    Trajectory(&'a CoefficientTrajectory),
    /// Constant coefficients with a user-supplied renormalised frequency.
    Markov { omega_prime: f64, gamma: f64, delta: f64, sigma: f64 },
}

impl CmDrive<'_> {
    /// (effective Omega^2, Gamma, Delta, Sigma) at time t.
    fn at(&self, t: f64) -> Result<(f64, f64, f64, f64)> {
        match self {
            CmDrive::Trajectory(traj) => {
                let p = traj.at(t)?;
                let om2 = traj.omega * traj.omega + p.d_omega2;
                Ok((om2, p.gamma, p.delta, p.sigma))
            }
            CmDrive::Markov { omega_prime, gamma, delta, sigma } => {
                Ok((omega_prime * omega_prime, *gamma, *delta, *sigma))
            }
        }
    }
}

/// Sampled trajectory of 2x2 cm moments.
#[derive(Debug, Clone)]
pub struct CmTrajectory {
    pub times: Vec<f64>,
    pub means: Vec<Vector2<f64>>,
    pub covs: Vec<Matrix2<f64>>,
}

fn cm_rhs(
    m1: f64,
    om2: f64,
    gamma: f64,
    delta: f64,
    sigma: f64,
    mean: &Vector2<f64>,
    cov: &Matrix2<f64>,
) -> (Vector2<f64>, Matrix2<f64>) {
    let a = Matrix2::new(0.0, 1.0 / m1, -m1 * om2, -2.0 * gamma);
    let d = Matrix2::new(0.0, delta, delta, 2.0 * sigma);
    (a * mean, a * cov + cov * a.transpose() + d)
}

/// Evolve the cm block from (mean0, cov0) to t_end with RK4 step `dt`,
/// sampling every `out_stride` steps.
pub fn cm_moment_flow(
    mean0: Vector2<f64>,
    cov0: Matrix2<f64>,
    drive: &CmDrive,
    m1: f64,
    t_end: f64,
    dt: f64,
    out_stride: usize,
) -> Result<CmTrajectory> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!("t_end = {t_end}, dt = {dt}")));
    }
    let n_steps = (t_end / dt).round() as usize;
    let stride = out_stride.max(1);
    let mut mean = mean0;
    let mut cov = cov0;
    let mut out = CmTrajectory {
        times: vec![0.0],
        means: vec![mean],
        covs: vec![cov],
    };
    for k in 0..n_steps {
        let t = k as f64 * dt;
        let c0 = drive.at(t)?;
        let ch = drive.at(t + 0.5 * dt)?;
        let c1 = drive.at(t + dt)?;
        let f = |c: (f64, f64, f64, f64), m: &Vector2<f64>, s: &Matrix2<f64>| {
            cm_rhs(m1, c.0, c.1, c.2, c.3, m, s)
        };
        let (k1m, k1c) = f(c0, &mean, &cov);
        let (k2m, k2c) = f(ch, &(mean + 0.5 * dt * k1m), &(cov + 0.5 * dt * k1c));
        let (k3m, k3c) = f(ch, &(mean + 0.5 * dt * k2m), &(cov + 0.5 * dt * k2c));
        let (k4m, k4c) = f(c1, &(mean + dt * k3m), &(cov + dt * k3c));
        mean += dt / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
        cov += dt / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c);
        if (k + 1) % stride == 0 || k + 1 == n_steps {
            out.times.push((k + 1) as f64 * dt);
            out.means.push(mean);
            out.covs.push(cov);
        }
    }
    Ok(out)
}

/// Closed-form unitary evolution of the relative block over time t.
pub fn rel_moment_flow(
    mean0: Vector2<f64>,
    cov0: Matrix2<f64>,
    cfg: &SystemConfig,
    t: f64,
) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    let r = rel_propagator(cfg, t)?;
    Ok((r * mean0, r * cov0 * r.transpose()))
}

/// Symplectic propagator of the free relative oscillator.
pub fn rel_propagator(cfg: &SystemConfig, t: f64) -> Result<Matrix2<f64>> {
    let w = cfg.omega_rel()?;
    let m2 = cfg.m2();
    Ok(if w.abs() < 1e-14 {
        Matrix2::new(1.0, t / m2, 0.0, 1.0)
    } else {
        Matrix2::new(
            (w * t).cos(),
            (w * t).sin() / (m2 * w),
            -m2 * w * (w * t).sin(),
            (w * t).cos(),
        )
    })
}

/// Sampled trajectory of full 4-dimensional Gaussian states.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<GaussianState>,
}

impl StateTrajectory {
    /// CSV with header `t,mean1..mean4,cov11,cov12,...,cov44` (upper triangle).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "t,mean1,mean2,mean3,mean4,cov11,cov12,cov13,cov14,cov22,cov23,cov24,cov33,cov34,cov44\n",
        );
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t}"));
            for i in 0..4 {
                out.push_str(&format!(",{}", s.mean[i]));
            }
            for i in 0..4 {
                for j in i..4 {
                    out.push_str(&format!(",{}", s.cov[(i, j)]));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn map_ordering(&self, ordering: Ordering) -> StateTrajectory {
        StateTrajectory {
            times: self.times.clone(),
            states: self
                .states
                .iter()
                .map(|s| match ordering {
                    Ordering::CmRel => s.to_cm_rel(),
                    Ordering::Lab => s.to_lab(),
                })
                .collect(),
        }
    }
}

/// Evolve a full Gaussian state: dissipative cm block, unitary relative
/// block, cross covariances under the combined linear flow. Output states
/// are CmRel-ordered and sampled every `out_stride` RK4 steps of size `dt`.
pub fn evolve(
    state: &GaussianState,
    cfg: &SystemConfig,
    drive: &CmDrive,
    t_end: f64,
    dt: f64,
    out_stride: usize,
) -> Result<StateTrajectory> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!("t_end = {t_end}, dt = {dt}")));
    }
    let s0 = state.to_cm_rel();
    let m1 = cfg.m1();
    let m2 = cfg.m2();
    let w_rel = cfg.omega_rel()?;
    let a_rel = Matrix2::new(0.0, 1.0 / m2, -m2 * w_rel * w_rel, 0.0);

    let n_steps = (t_end / dt).round() as usize;
    let stride = out_stride.max(1);

    let mut mean = s0.mean;
    let mut cov = s0.cov;
    let mut out = StateTrajectory { times: vec![0.0], states: vec![s0.clone()] };

    let full_rhs = |c: (f64, f64, f64, f64), mean: &Vector4<f64>, cov: &Matrix4<f64>| {
        let (om2, gamma, delta, sigma) = c;
        let mut a = Matrix4::zeros();
        a.fixed_view_mut::<2, 2>(0, 0)
            .copy_from(&Matrix2::new(0.0, 1.0 / m1, -m1 * om2, -2.0 * gamma));
        a.fixed_view_mut::<2, 2>(2, 2).copy_from(&a_rel);
        let mut d = Matrix4::zeros();
        d[(0, 1)] = delta;
        d[(1, 0)] = delta;
        d[(1, 1)] = 2.0 * sigma;
        (a * mean, a * cov + cov * a.transpose() + d)
    };

    for k in 0..n_steps {
        let t = k as f64 * dt;
        let c0 = drive.at(t)?;
        let ch = drive.at(t + 0.5 * dt)?;
        let c1 = drive.at(t + dt)?;
        let (k1m, k1c) = full_rhs(c0, &mean, &cov);
        let (k2m, k2c) = full_rhs(ch, &(mean + 0.5 * dt * k1m), &(cov + 0.5 * dt * k1c));
        let (k3m, k3c) = full_rhs(ch, &(mean + 0.5 * dt * k2m), &(cov + 0.5 * dt * k2c));
        let (k4m, k4c) = full_rhs(c1, &(mean + dt * k3m), &(cov + dt * k3c));
        mean += dt / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
        cov += dt / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c);
        if (k + 1) % stride == 0 || k + 1 == n_steps {
            out.times.push((k + 1) as f64 * dt);
            out.states.push(GaussianState::new_unchecked(
                Ordering::CmRel,
                mean,
                0.5 * (cov + cov.transpose()),
                s0.hbar,
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn consts() -> PhysConsts {
        PhysConsts::default()
    }

    #[test]
    fn transform_is_symplectic_and_involutive() {
        let t = cm_rel_from_lab();
        let j = symplectic_form();
        assert_abs_diff_eq!(t * j * t.transpose(), j, epsilon = 1e-14);
        assert_abs_diff_eq!(lab_from_cm_rel() * t, Matrix4::identity(), epsilon = 1e-14);
    }

    #[test]
    fn mean_transform_example() {
        let lab = GaussianState::new_unchecked(
            Ordering::Lab,
            Vector4::new(1.0, 0.0, 1.0, 0.0),
            Matrix4::identity(),
            1.0,
        );
        let cm = lab.to_cm_rel();
        assert_abs_diff_eq!(cm.mean, Vector4::new(1.0, 0.0, 0.0, 0.0), epsilon = 1e-14);
        let round = cm.to_lab();
        assert_abs_diff_eq!(round.mean, lab.mean, epsilon = 1e-14);
        assert_abs_diff_eq!(round.cov, lab.cov, epsilon = 1e-14);
    }

    #[test]
    fn product_condition_c_2a_b_2d() {
        // widths with c = 2a, b = 2d give zero x1-x2 and P1-P2 correlations
        let (a, d) = (0.7, 0.9);
        let s = GaussianState::from_widths(a, 2.0 * d, 2.0 * a, d, 1.0).unwrap();
        let lab = s.to_lab();
        assert_abs_diff_eq!(lab.cov[(0, 2)], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(lab.cov[(1, 3)], 0.0, epsilon = 1e-14);
        // and a violating pair correlates the positions
        let s2 = GaussianState::from_widths(a, 2.0 * d, 3.0 * a, d, 1.0).unwrap();
        assert!(s2.to_lab().cov[(0, 2)].abs() > 1e-3);
    }

    #[test]
    fn state_validation() {
        // minimal uncertainty passes, sub-Heisenberg fails
        assert!(GaussianState::from_widths(0.5, 1.0, 0.5, 1.0, 1.0).is_ok());
        let err = GaussianState::from_widths(0.1, 1.0, 0.5, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidState(_)));
    }

    #[test]
    fn markov_free_particle_variance_polynomials() {
        // Omega' = 0, Gamma = 0, Sigma = D: sPP = 2Dt + b^2 and the t^3 law
        let (m, gam, temp) = (1.0, 0.1, 10.0);
        let m1 = 2.0 * m;
        let d = 2.0 * m1 * gam * temp;
        let (a2, b2) = (0.3, 1.0);
        let mean0 = Vector2::new(0.4, -0.3);
        let cov0 = Matrix2::new(a2, 0.0, 0.0, b2);
        let drive = CmDrive::Markov { omega_prime: 0.0, gamma: 0.0, delta: 0.0, sigma: d };
        let traj = cm_moment_flow(mean0, cov0, &drive, m1, 2.0, 1e-3, 100).unwrap();
        for (i, &t) in traj.times.iter().enumerate() {
            let c = &traj.covs[i];
            assert_abs_diff_eq!(c[(1, 1)], 2.0 * d * t + b2, epsilon = 1e-8);
            let xx = 2.0 * d * t.powi(3) / (3.0 * m1 * m1) + b2 * t * t / (m1 * m1) + a2;
            assert_abs_diff_eq!(c[(0, 0)], xx, epsilon = 1e-8);
            // free means drift ballistically
            assert_abs_diff_eq!(traj.means[i][0], 0.4 - 0.3 * t / m1, epsilon = 1e-9);
        }
    }

    #[test]
    fn rel_free_particle_variances() {
        let cfg = SystemConfig::new(1.0, 0.0, 0.0, 2, consts()).unwrap();
        let (c2, d2) = (0.5, 0.6);
        let cov0 = Matrix2::new(c2, 0.0, 0.0, d2);
        for &t in &[0.3, 1.0, 2.7] {
            let (_, cov) = rel_moment_flow(Vector2::zeros(), cov0, &cfg, t).unwrap();
            // (dx^2)(t) = c^2 + 4 d^2 t^2 / M^2, (dp^2)(t) = d^2
            assert_relative_eq!(
                cov[(0, 0)],
                c2 + 4.0 * d2 * t * t / (cfg.mass * cfg.mass),
                max_relative = 1e-12
            );
            assert_relative_eq!(cov[(1, 1)], d2, max_relative = 1e-12);
        }
    }

    #[test]
    fn rel_quarter_period_exchange() {
        let cfg = SystemConfig::new(1.0, 2.0, 0.0, 2, consts()).unwrap();
        let m2 = cfg.m2();
        let w = cfg.omega;
        let cov0 = Matrix2::new(0.8, 0.0, 0.0, 0.9);
        let t = std::f64::consts::FRAC_PI_2 / w;
        let (_, cov) = rel_moment_flow(Vector2::zeros(), cov0, &cfg, t).unwrap();
        assert_relative_eq!(cov[(0, 0)], 0.9 / (m2 * w).powi(2), max_relative = 1e-12);
        assert_relative_eq!(cov[(1, 1)], 0.8 * (m2 * w).powi(2), max_relative = 1e-12);
        // purity of the relative block is conserved
        assert_relative_eq!(cov.determinant(), cov0.determinant(), max_relative = 1e-12);
    }

    #[test]
    fn rel_coupling_requires_quadratic_exponent() {
        let cfg = SystemConfig::new(1.0, 1.0, 0.5, 3, consts()).unwrap();
        assert!(matches!(cfg.omega_rel(), Err(Error::UnsupportedModel(_))));
        let ok = SystemConfig::new(1.0, 1.0, 0.5, 2, consts()).unwrap();
        assert_relative_eq!(ok.omega_rel().unwrap(), (1.0f64 + 2.0 * 0.5 / 0.5).sqrt());
    }

    #[test]
    fn damped_oscillator_energy_decreases() {
        let m1 = 2.0;
        let omega = 1.0;
        let drive = CmDrive::Markov { omega_prime: omega, gamma: 0.2, delta: 0.0, sigma: 0.0 };
        let cov0 = Matrix2::new(0.7, 0.0, 0.0, 0.9);
        let traj =
            cm_moment_flow(Vector2::new(1.0, 0.0), cov0, &drive, m1, 6.0, 1e-3, 200).unwrap();
        let energy = |i: usize| {
            let c = &traj.covs[i];
            let m = &traj.means[i];
            (c[(1, 1)] + m[1] * m[1]) / (2.0 * m1)
                + 0.5 * m1 * omega * omega * (c[(0, 0)] + m[0] * m[0])
        };
        let mut prev = energy(0);
        for i in 1..traj.times.len() {
            let e = energy(i);
            assert!(e <= prev + 1e-12, "energy grew at step {i}");
            prev = e;
        }
    }

    #[test]
    fn symplectic_flow_preserves_determinant_and_eigenvalues() {
        // Gamma = Sigma = Delta = 0: the 4x4 flow is symplectic
        let cfg = SystemConfig::new(1.0, 1.0, 0.3, 2, consts()).unwrap();
        let drive = CmDrive::Markov { omega_prime: 1.0, gamma: 0.0, delta: 0.0, sigma: 0.0 };
        let state = GaussianState::new(
            Ordering::CmRel,
            Vector4::new(0.3, -0.2, 0.5, 0.1),
            Matrix4::new(
                0.8, 0.1, 0.05, 0.0, //
                0.1, 0.9, 0.0, 0.02, //
                0.05, 0.0, 1.1, -0.1, //
                0.0, 0.02, -0.1, 0.7,
            ),
            1.0,
        )
        .unwrap();
        let traj = evolve(&state, &cfg, &drive, 5.0, 5e-4, 2000).unwrap();
        let symp_eigs = |cov: &Matrix4<f64>| {
            let j = symplectic_form();
            let m = j * cov;
            let mut eigs: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.im.abs()).collect();
            eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
            eigs
        };
        let d0 = state.cov.determinant();
        let e0 = symp_eigs(&state.cov);
        for s in &traj.states {
            assert_relative_eq!(s.cov.determinant(), d0, max_relative = 1e-8);
            for (a, b) in symp_eigs(&s.cov).iter().zip(&e0) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn product_state_stays_product() {
        let cfg = SystemConfig::new(1.0, 1.0, 0.0, 2, consts()).unwrap();
        let drive = CmDrive::Markov { omega_prime: 1.0, gamma: 0.1, delta: 0.02, sigma: 0.4 };
        let state = GaussianState::from_widths(0.8, 1.0, 1.2, 0.7, 1.0).unwrap();
        let traj = evolve(&state, &cfg, &drive, 3.0, 1e-3, 500).unwrap();
        for s in &traj.states {
            assert_abs_diff_eq!(s.cov.fixed_view::<2, 2>(0, 2).abs().max(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn flow_is_linear_in_moments() {
        let m1 = 2.0;
        let drive = CmDrive::Markov { omega_prime: 1.2, gamma: 0.15, delta: 0.01, sigma: 0.3 };
        let cov0 = Matrix2::new(0.6, 0.05, 0.05, 0.8);
        let m0 = Vector2::new(0.5, -0.1);
        let t1 = cm_moment_flow(m0, cov0, &drive, m1, 2.0, 1e-3, 2000).unwrap();
        let t2 = cm_moment_flow(2.0 * m0, cov0, &drive, m1, 2.0, 1e-3, 2000).unwrap();
        let end = t1.times.len() - 1;
        // means scale independently of covariances
        assert_relative_eq!(2.0 * t1.means[end][0], t2.means[end][0], max_relative = 1e-10);
        assert_relative_eq!(2.0 * t1.means[end][1], t2.means[end][1], max_relative = 1e-10);
        assert_relative_eq!(t1.covs[end][(0, 0)], t2.covs[end][(0, 0)], max_relative = 1e-12);
    }

    #[test]
    fn rk4_refinement_order() {
        let m1 = 2.0;
        let drive = CmDrive::Markov { omega_prime: 1.3, gamma: 0.2, delta: 0.05, sigma: 0.4 };
        let cov0 = Matrix2::new(0.6, 0.05, 0.05, 0.8);
        let m0 = Vector2::new(0.5, -0.1);
        let run = |dt: f64| {
            let t = cm_moment_flow(m0, cov0, &drive, m1, 2.0, dt, usize::MAX).unwrap();
            (t.means.last().unwrap().clone(), t.covs.last().unwrap().clone())
        };
        let (m_a, c_a) = run(0.02);
        let (m_b, c_b) = run(0.01);
        let (m_r, c_r) = run(0.0025);
        let e1 = (m_a - m_r).abs().max().max((c_a - c_r).abs().max());
        let e2 = (m_b - m_r).abs().max().max((c_b - c_r).abs().max());
        assert!(e1 / e2 >= 8.0, "RK4 refinement ratio {} below 8", e1 / e2);
    }

    #[test]
    fn csv_layout() {
        let state = GaussianState::from_widths(0.8, 1.0, 1.2, 0.7, 1.0).unwrap();
        let cfg = SystemConfig::new(1.0, 1.0, 0.0, 2, consts()).unwrap();
        let drive = CmDrive::Markov { omega_prime: 1.0, gamma: 0.0, delta: 0.0, sigma: 0.0 };
        let traj = evolve(&state, &cfg, &drive, 0.1, 0.05, 1).unwrap();
        let csv = traj.to_csv();
        let header = csv.lines().next().unwrap();
        assert_eq!(
            header,
            "t,mean1,mean2,mean3,mean4,cov11,cov12,cov13,cov14,cov22,cov23,cov24,cov33,cov34,cov44"
        );
        assert_eq!(csv.lines().count(), 1 + traj.times.len());
    }
}
