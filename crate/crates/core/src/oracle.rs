//! Exact finite-bath reference dynamics.
//!
//! The total Hamiltonian (system + N bath modes) is quadratic, so first and
//! second moments close on themselves and evolve through the normal modes of
//! the mass-weighted potential matrix: exact at machine precision, no
//! Hilbert-space truncation. Reduced system moments are read off by
//! projecting the rotated eigenmode covariance, O(n^2) per output time after
//! one O(n^3) diagonalisation.
//!
//! The bath couples through the centre of mass only, H_int = (x1 + x2) sum C_n q_n,
//! so the relative block of the reduced dynamics stays exactly unitary.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::dynamics::{GaussianState, Ordering, StateTrajectory};
use crate::error::{Error, Result};
use crate::kernels::{BathMode, SpectralDensity, SpectralKind};
use crate::dynamics::SystemConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum BathProvenance {
    Explicit,
    OhmicSampled { n_modes: usize, omega_max: f64 },
}

#[derive(Debug, Clone)]
pub struct FiniteBath {
    pub modes: Vec<BathMode>,
    pub provenance: BathProvenance,
    /// Poincare recurrence estimate 2 pi / min-spacing of the frequencies.
    pub recurrence_time: f64,
}

impl FiniteBath {
    pub fn new(modes: Vec<BathMode>, provenance: BathProvenance) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidParameter("bath needs at least one mode".into()));
        }
        for m in &modes {
            if !(m.frequency > 0.0) || !(m.mass > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "bath mode needs positive mass and frequency: m = {}, w = {}",
                    m.mass, m.frequency
                )));
            }
        }
        let mut freqs: Vec<f64> = modes.iter().map(|m| m.frequency).collect();
        freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let min_gap = if freqs.len() == 1 {
            freqs[0]
        } else {
            freqs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
        };
        let recurrence_time = 2.0 * std::f64::consts::PI / min_gap;
        Ok(Self { modes, provenance, recurrence_time })
    }

    /// Spectral density carried by the modes, for kernel construction.
    pub fn spectral_density(&self) -> SpectralDensity {
        SpectralDensity { kind: SpectralKind::Discrete(self.modes.clone()), prefactor: 1.0 }
    }
}

/// Sample an ohmic density on a uniform midpoint grid:
/// omega_n = (n - 1/2) domega, m_n = 1, C_n^2 = (2/pi) omega_n I(omega_n) domega.
pub fn discretize_ohmic(sd: &SpectralDensity, n_modes: usize, omega_max: f64) -> Result<FiniteBath> {
    if n_modes < 1 {
        return Err(Error::InvalidParameter("need at least one bath mode".into()));
    }
    if !(omega_max > 0.0) {
        return Err(Error::InvalidParameter(format!("omega_max = {omega_max}")));
    }
    let domega = omega_max / n_modes as f64;
    let mut modes = Vec::with_capacity(n_modes);
    for k in 0..n_modes {
        let w = (k as f64 + 0.5) * domega;
        let c2 = 2.0 / std::f64::consts::PI * w * sd.eval(w)? * domega;
        modes.push(BathMode { mass: 1.0, frequency: w, coupling: c2.sqrt() });
    }
    FiniteBath::new(modes, BathProvenance::OhmicSampled { n_modes, omega_max })
}

/// Reduced trajectory plus a recurrence flag.
#[derive(Debug, Clone)]
pub struct OracleOutput {
    pub trajectory: StateTrajectory,
    pub recurrence_warning: bool,
    pub recurrence_time: f64,
}

struct NormalModes {
    /// eigenfrequencies
    wbar: DVector<f64>,
    /// W1 = K^{1/2} U (positions from modes), W2 = K^{-1/2} U (momenta)
    w1: DMatrix<f64>,
    w2: DMatrix<f64>,
}

fn normal_modes(bath: &FiniteBath, cfg: &SystemConfig) -> Result<NormalModes> {
    let nb = bath.modes.len();
    let n = 2 + nb;
    let m1 = cfg.m1();
    let m2 = cfg.m2();
    let w_rel = cfg.omega_rel()?;

    let mut v = DMatrix::<f64>::zeros(n, n);
    v[(0, 0)] = m1 * cfg.omega * cfg.omega;
    v[(1, 1)] = m2 * w_rel * w_rel;
    for (k, m) in bath.modes.iter().enumerate() {
        // H_int = X sum 2 C_n q_n in cm coordinates
        let c_tilde = 2.0 * m.coupling;
        v[(0, 2 + k)] = c_tilde;
        v[(2 + k, 0)] = c_tilde;
        v[(2 + k, 2 + k)] = m.mass * m.frequency * m.frequency;
    }
    let mut k_sqrt = DVector::<f64>::zeros(n);
    k_sqrt[0] = (1.0 / m1).sqrt();
    k_sqrt[1] = (1.0 / m2).sqrt();
    for (k, m) in bath.modes.iter().enumerate() {
        k_sqrt[2 + k] = (1.0 / m.mass).sqrt();
    }
    let mut a = v.clone();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= k_sqrt[i] * k_sqrt[j];
        }
    }
    let eig = a.symmetric_eigen();
    let min_l = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_l < 0.0 {
        return Err(Error::UnsupportedModel(format!(
            "total Hamiltonian unbounded below (normal mode lambda = {min_l:e}); \
             reduce the coupling or raise the system frequency"
        )));
    }
    let wbar = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let u = eig.eigenvectors;
    // K = diag(1/mass), so K^{1/2} = diag(k_sqrt): W1 = K^{1/2} U maps modes
    // to positions, W2 = K^{-1/2} U maps modes to momenta
    let mut w1 = DMatrix::<f64>::zeros(n, n);
    let mut w2 = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            w1[(i, j)] = k_sqrt[i] * u[(i, j)];
            w2[(i, j)] = u[(i, j)] / k_sqrt[i];
        }
    }
    Ok(NormalModes { wbar, w1, w2 })
}

/// Exactly evolve `initial (x) thermal bath` and return the reduced system
/// trajectory sampled at `n_out + 1` uniform times on [0, t_end].
pub fn evolve_exact(
    bath: &FiniteBath,
    cfg: &SystemConfig,
    initial: &GaussianState,
    temperature: f64,
    t_end: f64,
    n_out: usize,
) -> Result<OracleOutput> {
    if temperature < 0.0 {
        return Err(Error::InvalidParameter(format!("temperature = {temperature}")));
    }
    if !(t_end > 0.0) || n_out == 0 {
        return Err(Error::InvalidParameter(format!("t_end = {t_end}, n_out = {n_out}")));
    }
    let nm = normal_modes(bath, cfg)?;
    let nb = bath.modes.len();
    let n = 2 + nb;
    let hbar = cfg.consts.hbar;

    // full initial covariance in (q; p) layout
    let s0 = initial.to_cm_rel();
    let mut sigma = DMatrix::<f64>::zeros(2 * n, 2 * n);
    // CmRel index -> (block, index): X -> q0, P -> p0, x -> q1, p -> p1
    let slot = |i: usize| -> usize {
        match i {
            0 => 0,     // X
            1 => n,     // P
            2 => 1,     // x
            _ => n + 1, // p
        }
    };
    for i in 0..4 {
        for j in 0..4 {
            sigma[(slot(i), slot(j))] = s0.cov[(i, j)];
        }
    }
    for (k, m) in bath.modes.iter().enumerate() {
        let cth = if temperature > 0.0 {
            let x = hbar * m.frequency / (2.0 * cfg.consts.k_b * temperature);
            1.0 / x.tanh()
        } else {
            1.0
        };
        sigma[(2 + k, 2 + k)] = hbar / (2.0 * m.mass * m.frequency) * cth;
        sigma[(n + 2 + k, n + 2 + k)] = hbar * m.mass * m.frequency / 2.0 * cth;
    }
    let mut mean = DVector::<f64>::zeros(2 * n);
    for i in 0..4 {
        mean[slot(i)] = s0.mean[i];
    }

    // eigenmode coordinates: a = U^T K^{-1/2} q = W1^T q (since W1 = K^{1/2} U,
    // W1^T = U^T K^{1/2}; careful: we need U^T K^{-1/2} = W2^T K ... ) use
    // explicit inverse relations: q = W1 a, p = W2 b  =>  a = W1^{-1} q.
    // Orthogonality gives W1^{-1} = U^T K^{-1/2} = W2^T with our storage.
    let t_a = nm.w2.transpose(); // maps q -> a
    let t_b = nm.w1.transpose(); // maps p -> b

    // sigma_ab blocks
    let s_qq = sigma.view((0, 0), (n, n));
    let s_qp = sigma.view((0, n), (n, n));
    let s_pq = sigma.view((n, 0), (n, n));
    let s_pp = sigma.view((n, n), (n, n));
    let saa = &t_a * s_qq * t_a.transpose();
    let sab = &t_a * s_qp * t_b.transpose();
    let sba = &t_b * s_pq * t_a.transpose();
    let sbb = &t_b * s_pp * t_b.transpose();
    let mean_a = &t_a * mean.rows(0, n);
    let mean_b = &t_b * mean.rows(n, n);

    // projection rows of the system coordinates out of (a; b)
    // X = (W1 a)[0], x = (W1 a)[1], P = (W2 b)[0], p = (W2 b)[1]
    let x_row: Vec<f64> = (0..n).map(|k| nm.w1[(0, k)]).collect();
    let xr_row: Vec<f64> = (0..n).map(|k| nm.w1[(1, k)]).collect();
    let p_row: Vec<f64> = (0..n).map(|k| nm.w2[(0, k)]).collect();
    let pr_row: Vec<f64> = (0..n).map(|k| nm.w2[(1, k)]).collect();

    let mut times = Vec::with_capacity(n_out + 1);
    let mut states = Vec::with_capacity(n_out + 1);
    let dt_out = t_end / n_out as f64;

    for step in 0..=n_out {
        let t = step as f64 * dt_out;
        // per-mode rotation: a(t) = c a + s/w b, b(t) = -w s a + c b
        let mut ca = vec![0.0f64; n];
        let mut sa = vec![0.0f64; n];
        for k in 0..n {
            let w = nm.wbar[k];
            let (s, c) = (w * t).sin_cos();
            ca[k] = c;
            sa[k] = if w > 1e-12 { s / w } else { t };
        }
        // rows of M(t): system coordinate = ra . a0 + rb . b0
        let row_of = |pos_row: &[f64], mom_row: &[f64], is_pos: bool| -> (Vec<f64>, Vec<f64>) {
            let mut ra = vec![0.0f64; n];
            let mut rb = vec![0.0f64; n];
            for k in 0..n {
                let w = nm.wbar[k];
                if is_pos {
                    ra[k] = pos_row[k] * ca[k];
                    rb[k] = pos_row[k] * sa[k];
                } else {
                    ra[k] = -mom_row[k] * w * (w * t).sin();
                    rb[k] = mom_row[k] * ca[k];
                }
            }
            (ra, rb)
        };
        let rows = [
            row_of(&x_row, &p_row, true),
            row_of(&x_row, &p_row, false),
            row_of(&xr_row, &pr_row, true),
            row_of(&xr_row, &pr_row, false),
        ];

        let mut cov = Matrix4::<f64>::zeros();
        let mut mu = Vector4::<f64>::zeros();
        // intermediate u_i = sigma_ab * m_i^T for each of the four rows
        for (i, (rai, rbi)) in rows.iter().enumerate() {
            let mut ua = vec![0.0f64; n];
            let mut ub = vec![0.0f64; n];
            for r in 0..n {
                let mut acc_a = 0.0;
                let mut acc_b = 0.0;
                for k in 0..n {
                    acc_a += saa[(r, k)] * rai[k] + sab[(r, k)] * rbi[k];
                    acc_b += sba[(r, k)] * rai[k] + sbb[(r, k)] * rbi[k];
                }
                ua[r] = acc_a;
                ub[r] = acc_b;
            }
            for (j, (raj, rbj)) in rows.iter().enumerate() {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += raj[r] * ua[r] + rbj[r] * ub[r];
                }
                cov[(j, i)] = acc;
            }
            let mut m_acc = 0.0;
            for k in 0..n {
                m_acc += rai[k] * mean_a[k] + rbi[k] * mean_b[k];
            }
            mu[i] = m_acc;
        }
        let cov = 0.5 * (cov + cov.transpose());
        times.push(t);
        states.push(GaussianState::new_unchecked(Ordering::CmRel, mu, cov, hbar));
    }

    Ok(OracleOutput {
        trajectory: StateTrajectory { times, states },
        recurrence_warning: t_end > 0.8 * bath.recurrence_time,
        recurrence_time: bath.recurrence_time,
    })
}

/// Full symplectic propagator (for structural tests on small baths).
pub fn full_propagator(bath: &FiniteBath, cfg: &SystemConfig, t: f64) -> Result<DMatrix<f64>> {
    let nm = normal_modes(bath, cfg)?;
    let n = 2 + bath.modes.len();
    let mut c = DMatrix::<f64>::zeros(n, n);
    let mut s_over = DMatrix::<f64>::zeros(n, n);
    let mut ws = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let w = nm.wbar[k];
        let (s, cv) = (w * t).sin_cos();
        c[(k, k)] = cv;
        s_over[(k, k)] = if w > 1e-12 { s / w } else { t };
        ws[(k, k)] = w * s;
    }
    let qq = &nm.w1 * &c * nm.w2.transpose();
    let qp = &nm.w1 * &s_over * nm.w1.transpose();
    let pq = -&nm.w2 * &ws * nm.w2.transpose();
    let pp = &nm.w2 * &c * nm.w1.transpose();
    let mut phi = DMatrix::<f64>::zeros(2 * n, 2 * n);
    phi.view_mut((0, 0), (n, n)).copy_from(&qq);
    phi.view_mut((0, n), (n, n)).copy_from(&qp);
    phi.view_mut((n, 0), (n, n)).copy_from(&pq);
    phi.view_mut((n, n), (n, n)).copy_from(&pp);
    Ok(phi)
}

/// Comparison report between a master-equation trajectory and the oracle.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub per_time: Vec<(f64, f64)>,
    pub max_rel_error: f64,
    pub diagnosis: Option<String>,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,max_rel_err\n");
        for (t, e) in &self.per_time {
            out.push_str(&format!("{t},{e}\n"));
        }
        out
    }
}

/// Elementwise covariance comparison on a shared time grid, normalised per
/// element by the oracle's diagonal scale sqrt(o_ii o_jj). Targets the two
/// known convention failure modes with heuristic diagnoses.
pub fn compare_master_vs_oracle(
    master: &StateTrajectory,
    oracle: &StateTrajectory,
) -> Result<ComparisonReport> {
    if master.times.len() != oracle.times.len() {
        return Err(Error::GridMismatch(format!(
            "trajectory lengths differ: {} vs {}",
            master.times.len(),
            oracle.times.len()
        )));
    }
    for (a, b) in master.times.iter().zip(&oracle.times) {
        if (a - b).abs() > 1e-9 * (1.0 + b.abs()) {
            return Err(Error::GridMismatch(format!("time grids differ at t = {a} vs {b}")));
        }
    }
    let mut per_time = Vec::with_capacity(master.times.len());
    let mut max_rel: f64 = 0.0;
    for ((t, m), o) in master.times.iter().zip(&master.states).zip(&oracle.states) {
        let mc = m.to_cm_rel().cov;
        let oc = o.to_cm_rel().cov;
        let floor = 1e-12 * oc.diagonal().amax();
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in i..4 {
                let scale = (oc[(i, i)] * oc[(j, j)]).abs().sqrt().max(floor);
                let rel = (mc[(i, j)] - oc[(i, j)]).abs() / scale;
                worst = worst.max(rel);
            }
        }
        per_time.push((*t, worst));
        max_rel = max_rel.max(worst);
    }

    // convention diagnoses through the fitted empirical coefficients
    let mut diagnosis = None;
    if max_rel > 1e-3 {
        if let (Some(fm), Some(fo)) =
            (fit_effective_constants(master), fit_effective_constants(oracle))
        {
            let delta_scale = fo.delta.abs().max(1e-6 * fo.sigma.abs());
            let ratio = if fo.gamma.abs() > 1e-12 { fm.gamma / fo.gamma } else { f64::NAN };
            if fm.delta * fo.delta < 0.0
                && fm.delta.abs() > 0.33 * delta_scale
                && fm.delta.abs() < 3.0 * delta_scale
                && (0.8..=1.25).contains(&ratio)
            {
                diagnosis = Some(format!(
                    "Delta-sign: fitted anomalous diffusion {:.3e} vs oracle {:.3e}",
                    fm.delta, fo.delta
                ));
            } else if (1.6..=2.6).contains(&ratio) {
                diagnosis = Some(format!(
                    "Gamma-prefactor: master cm block relaxes ~{ratio:.2}x faster than the oracle"
                ));
            } else if (1.0 / 2.6..=1.0 / 1.6).contains(&ratio) {
                diagnosis = Some(format!(
                    "Gamma-prefactor: master cm block relaxes ~{:.2}x slower than the oracle",
                    1.0 / ratio
                ));
            }
        }
    }
    Ok(ComparisonReport { per_time, max_rel_error: max_rel, diagnosis })
}

/// Effective constant master-equation coefficients fitted to a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct FittedConstants {
    pub m1: f64,
    /// M1 (Omega^2 + dOmega2), the full stiffness
    pub stiffness: f64,
    pub gamma: f64,
    pub delta: f64,
    pub sigma: f64,
}

/// Least-squares fit of constant (stiffness, Gamma, Delta, Sigma) to the cm
/// covariance flow of a trajectory: the empirical master-equation
/// coefficients. Means are not used, so it works for centred states.
pub fn fit_effective_constants(traj: &StateTrajectory) -> Option<FittedConstants> {
    let n = traj.times.len();
    if n < 5 {
        return None;
    }
    let cov: Vec<Matrix4<f64>> = traj.states.iter().map(|s| s.to_cm_rel().cov).collect();
    // M1 from sXX-dot = 2 sXP / M1
    let mut num = 0.0;
    let mut den = 0.0;
    let mut rows: Vec<([f64; 4], f64)> = Vec::new();
    for i in 1..n - 1 {
        let h = traj.times[i + 1] - traj.times[i - 1];
        let d = |a: usize, b: usize| (cov[i + 1][(a, b)] - cov[i - 1][(a, b)]) / h;
        let (sxx, sxp, spp) = (cov[i][(0, 0)], cov[i][(0, 1)], cov[i][(1, 1)]);
        num += d(0, 0) * 2.0 * sxp;
        den += 4.0 * sxp * sxp;
        rows.push(([sxx, sxp, spp, d(0, 1)], d(1, 1)));
    }
    if den < 1e-14 {
        return None;
    }
    let inv_m1 = num / den;
    if inv_m1 <= 0.0 {
        return None;
    }
    let m1 = 1.0 / inv_m1;
    // linear least squares for theta = (stiffness, Gamma, Delta, Sigma):
    //   sXP-dot - sPP/M1 = -k sXX - 2 Gamma sXP + Delta
    //   sPP-dot          = -2 k sXP - 4 Gamma sPP + 2 Sigma
    let mut ata = Matrix4::<f64>::zeros();
    let mut atb = Vector4::<f64>::zeros();
    let mut accumulate = |row: [f64; 4], y: f64| {
        for a in 0..4 {
            for b in 0..4 {
                ata[(a, b)] += row[a] * row[b];
            }
            atb[a] += row[a] * y;
        }
    };
    for ([sxx, sxp, spp, dxp], dpp) in rows {
        accumulate([-sxx, -2.0 * sxp, 1.0, 0.0], dxp - spp / m1);
        accumulate([-2.0 * sxp, -4.0 * spp, 0.0, 2.0], dpp);
    }
    let theta = ata.lu().solve(&atb)?;
    Some(FittedConstants {
        m1,
        stiffness: theta[0],
        gamma: theta[1],
        delta: theta[2],
        sigma: theta[3],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, rel_propagator, CmDrive};
    use crate::kernels::PhysConsts;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::Matrix2;

    fn consts() -> PhysConsts {
        PhysConsts::default()
    }

    fn test_state() -> GaussianState {
        GaussianState::new(
            Ordering::CmRel,
            Vector4::new(0.4, -0.2, 0.6, 0.1),
            Matrix4::new(
                0.7, 0.10, 0.05, 0.00, //
                0.10, 0.9, 0.00, 0.02, //
                0.05, 0.00, 0.8, -0.05, //
                0.00, 0.02, -0.05, 0.35,
            ),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn discretize_single_mode_and_weight_sum() {
        let sd = SpectralDensity::ohmic(1.0, 0.08, 8.0).unwrap();
        let one = discretize_ohmic(&sd, 1, 32.0).unwrap();
        assert_eq!(one.modes.len(), 1);
        assert_relative_eq!(one.modes[0].frequency, 16.0);

        let bath = discretize_ohmic(&sd, 400, 32.0).unwrap();
        let total: f64 = bath
            .modes
            .iter()
            .map(|m| m.coupling * m.coupling / (2.0 * m.mass * m.frequency))
            .sum();
        // int I / pi domega = m gamma Lambda^2 / (2 pi)
        let expected = 1.0 * 0.08 * 64.0 / (2.0 * std::f64::consts::PI);
        assert_relative_eq!(total, expected, max_relative = 1e-2);
        // recurrence estimate
        assert_relative_eq!(bath.recurrence_time, 2.0 * std::f64::consts::PI / 0.08, max_relative = 1e-9);
    }

    #[test]
    fn discretized_kernels_converge_to_continuum() {
        let sd = SpectralDensity::ohmic(1.0, 0.08, 4.0).unwrap();
        let c = consts();
        // eta has an exact continuum closed form, so the comparison has no
        // quadrature floor; nu is checked once at the largest mode count
        let err_for = |nb: usize| {
            let bath = discretize_ohmic(&sd, nb, 24.0).unwrap();
            let dsd = bath.spectral_density();
            let mut emax = 0.0f64;
            for i in 0..60 {
                let s = 0.1 * i as f64;
                emax = emax.max((dsd.dissipation_kernel(s) - sd.dissipation_kernel(s)).abs());
            }
            emax
        };
        // s reaches ~0.9 t_rec of the smallest bath, where aliasing is visible
        let e1 = err_for(25);
        let e2 = err_for(50);
        let e3 = err_for(100);
        let bath = discretize_ohmic(&sd, 400, 16.0).unwrap();
        let dsd = bath.spectral_density();
        for i in 0..20 {
            let s = 0.2 * i as f64;
            let a = dsd.noise_kernel(2.0, s, &c).unwrap();
            let b = sd.noise_kernel(2.0, s, &c).unwrap();
            assert!((a - b).abs() < 1e-6, "nu mismatch {} at s = {s}", a - b);
        }
        let floor = 1e-12;
        assert!(e2 <= (0.6 * e1).max(floor), "kernel error not halving: {e1} -> {e2}");
        assert!(e3 <= (0.6 * e2).max(floor), "kernel error not halving: {e2} -> {e3}");
    }

    #[test]
    fn zero_coupling_reduces_to_closed_rotation() {
        let modes = vec![BathMode { mass: 1.0, frequency: 1.7, coupling: 0.0 }];
        let bath = FiniteBath::new(modes, BathProvenance::Explicit).unwrap();
        let cfg = SystemConfig::new(1.0, 1.3, 0.2, 2, consts()).unwrap();
        let state = test_state();
        let out = evolve_exact(&bath, &cfg, &state, 2.0, 2.0, 40).unwrap();
        let m1 = cfg.m1();
        let w = cfg.omega;
        for (i, &t) in out.trajectory.times.iter().enumerate() {
            // cm block rotates with (M1, Omega); rel with (M2, Omega_rel)
            let rc = Matrix2::new(
                (w * t).cos(),
                (w * t).sin() / (m1 * w),
                -m1 * w * (w * t).sin(),
                (w * t).cos(),
            );
            let rr = rel_propagator(&cfg, t).unwrap();
            let cm0 = state.cov.fixed_view::<2, 2>(0, 0).into_owned();
            let rel0 = state.cov.fixed_view::<2, 2>(2, 2).into_owned();
            let got = out.trajectory.states[i].cov;
            let cm_t = rc * cm0 * rc.transpose();
            let rel_t = rr * rel0 * rr.transpose();
            assert_abs_diff_eq!(got.fixed_view::<2, 2>(0, 0).into_owned(), cm_t, epsilon = 1e-10);
            assert_abs_diff_eq!(got.fixed_view::<2, 2>(2, 2).into_owned(), rel_t, epsilon = 1e-10);
        }
    }

    /// Independent route: RK4 on the full small linear system.
    fn rk4_reference(
        bath: &FiniteBath,
        cfg: &SystemConfig,
        initial: &GaussianState,
        temperature: f64,
        t_end: f64,
        n_out: usize,
    ) -> Vec<Matrix4<f64>> {
        let nb = bath.modes.len();
        let n = 2 + nb;
        let m1 = cfg.m1();
        let m2 = cfg.m2();
        let w_rel = cfg.omega_rel().unwrap();
        // drift S: dq = K p, dp = -V q in layout (q; p)
        let mut s_mat = DMatrix::<f64>::zeros(2 * n, 2 * n);
        s_mat[(0, n)] = 1.0 / m1;
        s_mat[(1, n + 1)] = 1.0 / m2;
        s_mat[(n, 0)] = -m1 * cfg.omega * cfg.omega;
        s_mat[(n + 1, 1)] = -m2 * w_rel * w_rel;
        for (k, m) in bath.modes.iter().enumerate() {
            s_mat[(2 + k, n + 2 + k)] = 1.0 / m.mass;
            s_mat[(n + 2 + k, 2 + k)] = -m.mass * m.frequency * m.frequency;
            s_mat[(n, 2 + k)] = -2.0 * m.coupling;
            s_mat[(n + 2 + k, 0)] = -2.0 * m.coupling;
        }
        let s0 = initial.to_cm_rel();
        let mut sigma = DMatrix::<f64>::zeros(2 * n, 2 * n);
        let slot = |i: usize| match i {
            0 => 0,
            1 => n,
            2 => 1,
            _ => n + 1,
        };
        for i in 0..4 {
            for j in 0..4 {
                sigma[(slot(i), slot(j))] = s0.cov[(i, j)];
            }
        }
        for (k, m) in bath.modes.iter().enumerate() {
            let x = m.frequency / (2.0 * temperature);
            let cth = 1.0 / x.tanh();
            sigma[(2 + k, 2 + k)] = cth / (2.0 * m.mass * m.frequency);
            sigma[(n + 2 + k, n + 2 + k)] = m.mass * m.frequency * cth / 2.0;
        }
        let dt = 2e-4;
        let steps_per_out = ((t_end / n_out as f64) / dt).round() as usize;
        let mut out = Vec::with_capacity(n_out + 1);
        let extract = |s: &DMatrix<f64>| {
            let mut c = Matrix4::zeros();
            for i in 0..4 {
                for j in 0..4 {
                    c[(i, j)] = s[(slot(i), slot(j))];
                }
            }
            c
        };
        out.push(extract(&sigma));
        let rhs = |s: &DMatrix<f64>| &s_mat * s + s * s_mat.transpose();
        for _ in 0..n_out {
            for _ in 0..steps_per_out {
                let k1 = rhs(&sigma);
                let k2 = rhs(&(&sigma + 0.5 * dt * &k1));
                let k3 = rhs(&(&sigma + 0.5 * dt * &k2));
                let k4 = rhs(&(&sigma + dt * &k3));
                sigma += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            out.push(extract(&sigma));
        }
        out
    }

    #[test]
    fn single_resonant_mode_matches_ode_reference() {
        let bath = FiniteBath::new(
            vec![BathMode { mass: 1.0, frequency: 1.0, coupling: 0.3 }],
            BathProvenance::Explicit,
        )
        .unwrap();
        let cfg = SystemConfig::new(1.0, 1.0, 0.0, 2, consts()).unwrap();
        let state = test_state();
        let out = evolve_exact(&bath, &cfg, &state, 2.0, 3.0, 6).unwrap();
        let reference = rk4_reference(&bath, &cfg, &state, 2.0, 3.0, 6);
        for (got, want) in out.trajectory.states.iter().zip(&reference) {
            assert_abs_diff_eq!(got.cov, *want, epsilon = 1e-6);
        }
    }

    #[test]
    fn propagator_is_symplectic() {
        let bath = FiniteBath::new(
            vec![
                BathMode { mass: 1.0, frequency: 0.9, coupling: 0.2 },
                BathMode { mass: 2.0, frequency: 1.8, coupling: 0.3 },
                BathMode { mass: 1.0, frequency: 2.7, coupling: 0.25 },
            ],
            BathProvenance::Explicit,
        )
        .unwrap();
        let cfg = SystemConfig::new(1.0, 1.0, 0.1, 2, consts()).unwrap();
        let n = 2 + 3;
        let mut j = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for k in 0..n {
            j[(k, n + k)] = 1.0;
            j[(n + k, k)] = -1.0;
        }
        for &t in &[0.5, 2.0, 7.0] {
            let phi = full_propagator(&bath, &cfg, t).unwrap();
            let defect = (phi.transpose() * &j * &phi - &j).abs().max();
            assert!(defect < 1e-9, "symplectic defect {defect:e} at t = {t}");
        }
    }

    #[test]
    fn total_symplectic_eigenvalues_constant() {
        let bath = FiniteBath::new(
            vec![
                BathMode { mass: 1.0, frequency: 1.2, coupling: 0.25 },
                BathMode { mass: 1.0, frequency: 2.1, coupling: 0.2 },
            ],
            BathProvenance::Explicit,
        )
        .unwrap();
        let cfg = SystemConfig::new(1.0, 1.0, 0.0, 2, consts()).unwrap();
        let n = 4;
        // build the full covariance at t = 0 and t > 0 via the propagator
        let state = test_state();
        let mut sigma0 = DMatrix::<f64>::zeros(2 * n, 2 * n);
        let slot = |i: usize| match i {
            0 => 0,
            1 => n,
            2 => 1,
            _ => n + 1,
        };
        for i in 0..4 {
            for j in 0..4 {
                sigma0[(slot(i), slot(j))] = state.cov[(i, j)];
            }
        }
        for (k, m) in bath.modes.iter().enumerate() {
            let cth = 1.0 / (m.frequency / 4.0).tanh();
            sigma0[(2 + k, 2 + k)] = cth / (2.0 * m.frequency);
            sigma0[(n + 2 + k, n + 2 + k)] = m.frequency * cth / 2.0;
        }
        let mut j = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for k in 0..n {
            j[(k, n + k)] = 1.0;
            j[(n + k, k)] = -1.0;
        }
        let symp_eigs = |s: &DMatrix<f64>| {
            let m = &j * s;
            let mut eigs: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.im.abs()).collect();
            eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            eigs
        };
        let e0 = symp_eigs(&sigma0);
        for &t in &[1.0, 4.0] {
            let phi = full_propagator(&bath, &cfg, t).unwrap();
            let st = &phi * &sigma0 * phi.transpose();
            for (a, b) in symp_eigs(&st).iter().zip(&e0) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn reduced_dynamics_depends_on_modes_only_through_weights() {
        // reparametrise m_n keeping C_n^2 / (m_n w_n) fixed
        let base = FiniteBath::new(
            vec![BathMode { mass: 1.0, frequency: 1.5, coupling: 0.4 }],
            BathProvenance::Explicit,
        )
        .unwrap();
        let scaled = FiniteBath::new(
            vec![BathMode { mass: 2.0, frequency: 1.5, coupling: 0.4 * 2.0f64.sqrt() }],
            BathProvenance::Explicit,
        )
        .unwrap();
        let cfg = SystemConfig::new(1.0, 1.0, 0.0, 2, consts()).unwrap();
        let state = test_state();
        let a = evolve_exact(&base, &cfg, &state, 1.3, 2.0, 10).unwrap();
        let b = evolve_exact(&scaled, &cfg, &state, 1.3, 2.0, 10).unwrap();
        for (x, y) in a.trajectory.states.iter().zip(&b.trajectory.states) {
            assert_abs_diff_eq!(x.cov, y.cov, epsilon = 1e-10);
        }
    }

    #[test]
    fn relative_block_stays_unitary() {
        let sd = SpectralDensity::ohmic(1.0, 0.08, 4.0).unwrap();
        let bath = discretize_ohmic(&sd, 120, 16.0).unwrap();
        let cfg = SystemConfig::new(1.0, 1.0, 0.3, 2, consts()).unwrap();
        let state = test_state();
        let out = evolve_exact(&bath, &cfg, &state, 2.0, 12.0, 60).unwrap();
        let det0 = state.cov.fixed_view::<2, 2>(2, 2).determinant();
        for s in &out.trajectory.states {
            let det = s.cov.fixed_view::<2, 2>(2, 2).determinant();
            assert_relative_eq!(det, det0, max_relative = 1e-8);
        }
    }

    #[test]
    fn recurrence_warning_is_attached() {
        let sd = SpectralDensity::ohmic(1.0, 0.05, 4.0).unwrap();
        let bath = discretize_ohmic(&sd, 40, 16.0).unwrap();
        let cfg = SystemConfig::new(1.0, 1.0, 0.0, 2, consts()).unwrap();
        let state = test_state();
        // t_rec = 2 pi / 0.4 ~ 15.7; evolve past 0.8 t_rec
        let out = evolve_exact(&bath, &cfg, &state, 1.0, 14.0, 10).unwrap();
        assert!(out.recurrence_warning);
        let ok = evolve_exact(&bath, &cfg, &state, 1.0, 5.0, 10).unwrap();
        assert!(!ok.recurrence_warning);
    }

    #[test]
    fn high_temperature_equipartition() {
        // dense bath, weak coupling, high T: cm energy -> ~ k_B T
        // (coupling weak enough that the frequency renormalisation stays
        // inside the 10% window)
        let sd = SpectralDensity::ohmic(1.0, 0.02, 4.0).unwrap();
        let bath = discretize_ohmic(&sd, 300, 16.0).unwrap();
        let cfg = SystemConfig::new(1.0, 1.0, 0.0, 2, consts()).unwrap();
        let temp = 20.0;
        let state = test_state();
        let out = evolve_exact(&bath, &cfg, &state, temp, 90.0, 90).unwrap();
        assert!(!out.recurrence_warning);
        let m1 = cfg.m1();
        let last = out.trajectory.states.last().unwrap();
        let energy = last.cov[(1, 1)] / (2.0 * m1)
            + 0.5 * m1 * cfg.omega * cfg.omega * last.cov[(0, 0)];
        assert!(
            (energy - temp).abs() < 0.1 * temp,
            "cm energy {energy} not within 10% of k_B T = {temp}"
        );
    }

    #[test]
    fn instability_is_reported() {
        // enormous coupling pushes a normal mode negative
        let bath = FiniteBath::new(
            vec![BathMode { mass: 1.0, frequency: 0.5, coupling: 2.0 }],
            BathProvenance::Explicit,
        )
        .unwrap();
        let cfg = SystemConfig::new(1.0, 1.0, 0.0, 2, consts()).unwrap();
        let state = test_state();
        assert!(matches!(
            evolve_exact(&bath, &cfg, &state, 1.0, 1.0, 4),
            Err(Error::UnsupportedModel(_))
        ));
    }

    #[test]
    fn comparison_report_and_fault_injection() {
        // identical trajectories: zero error
        let cfg = SystemConfig::new(1.0, 1.0, 0.0, 2, consts()).unwrap();
        let state = GaussianState::from_widths(0.8, 1.0, 1.2, 0.7, 1.0).unwrap();
        let drive = CmDrive::Markov { omega_prime: 1.0, gamma: 0.15, delta: 0.05, sigma: 0.5 };
        let base = evolve(&state, &cfg, &drive, 8.0, 1e-3, 400).unwrap();
        let report = compare_master_vs_oracle(&base, &base).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
        assert!(report.diagnosis.is_none());

        // flipped Delta: X-P row mismatch diagnosis
        let flipped = CmDrive::Markov { omega_prime: 1.0, gamma: 0.15, delta: -0.05, sigma: 0.5 };
        let bad = evolve(&state, &cfg, &flipped, 8.0, 1e-3, 400).unwrap();
        let report = compare_master_vs_oracle(&bad, &base).unwrap();
        assert!(report.max_rel_error > 1e-3);
        assert!(
            report.diagnosis.as_deref().unwrap_or("").starts_with("Delta-sign"),
            "unexpected diagnosis {:?}",
            report.diagnosis
        );

        // doubled Gamma: relaxation-rate diagnosis
        let double = CmDrive::Markov { omega_prime: 1.0, gamma: 0.30, delta: 0.05, sigma: 0.5 };
        let bad = evolve(&state, &cfg, &double, 8.0, 1e-3, 400).unwrap();
        let report = compare_master_vs_oracle(&bad, &base).unwrap();
        assert!(report.max_rel_error > 1e-2);
        assert!(
            report.diagnosis.as_deref().unwrap_or("").starts_with("Gamma-prefactor"),
            "unexpected diagnosis {:?}",
            report.diagnosis
        );
        // grid mismatch is an error
        let short = evolve(&state, &cfg, &drive, 4.0, 1e-3, 400).unwrap();
        assert!(compare_master_vs_oracle(&short, &base).is_err());
    }
}
