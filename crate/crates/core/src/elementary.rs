//! Elementary functions of the dissipative dynamics.
//!
//! Everything downstream is built from solutions of the homogeneous
//! integro-differential equation
//!
//!   f''(s) + Omega^2 f(s) + (4/M) int_0^s eta(s - l) f(l) dl = 0,
//!
//! where `eta` is the per-oscillator dissipation kernel and M the
//! per-oscillator mass (the factor 4 carries the doubled centre-of-mass
//! coupling). The boundary-value functions u1, u2 are obtained from the two
//! initial-value solutions by a linear combination, which is exact for a
//! linear equation; no iterative shooting is involved.
//!
//! The marcher is a 4th-order Adams-Bashforth-Moulton predictor-corrector
//! whose memory integral is evaluated with Gregory-corrected weights on the
//! same grid. All kernel arguments land on grid nodes, so no kernel
//! interpolation enters; startup covers the first three steps with finely
//! substepped RK4 against the exact kernel.

use crate::error::{Error, Result};
use crate::grid::{gregory, UniformGrid};
use crate::kernels::KernelTable;

/// A sampled solution of the homogeneous equation with its derivatives.
#[derive(Debug, Clone)]
pub struct IvpSolution {
    pub grid: UniformGrid,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    /// Second derivative from the equation of motion (not differenced).
    pub ddf: Vec<f64>,
}

impl IvpSolution {
    pub fn value(&self, s: f64) -> Result<f64> {
        self.grid.interp(&self.f, s)
    }

    pub fn deriv(&self, s: f64) -> Result<f64> {
        self.grid.interp(&self.df, s)
    }
}

struct Rhs<'a> {
    kt: &'a KernelTable,
    omega2: f64,
    /// 4 / M
    memory_scale: f64,
}

impl Rhs<'_> {
    /// Memory integral at grid node k from grid history (the integrand
    /// vanishes at the upper limit because eta(0) = 0).
    fn memory_at_node(&self, k: usize, f: &[f64]) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let dt = self.kt.grid.dt;
        let mut g = Vec::with_capacity(k + 1);
        for i in 0..=k {
            g.push(self.kt.eta[k - i] * f[i]);
        }
        gregory(&g, dt)
    }

    fn acceleration(&self, f: f64, memory: f64) -> f64 {
        -self.omega2 * f - self.memory_scale * memory
    }
}

/// Finely substepped RK4 over [0, t_end] with trapezoid memory against the
/// exact kernel; used for startup and very short horizons.
fn fine_march(
    rhs: &Rhs,
    f0: f64,
    df0: f64,
    t_end: f64,
    substeps_per_dt: usize,
) -> (Vec<f64>, Vec<f64>, f64) {
    let h = rhs.kt.grid.dt / substeps_per_dt as f64;
    let n_sub = (t_end / h).round() as usize;
    let mut fs = Vec::with_capacity(n_sub + 1);
    let mut dfs = Vec::with_capacity(n_sub + 1);
    fs.push(f0);
    dfs.push(df0);

    // trapezoid memory over the fine history; sigma may exceed the last
    // node by a partial segment whose upper endpoint has zero weight
    let memory = |sigma: f64, fs: &[f64]| -> f64 {
        let k_full = ((sigma + 1e-12) / h).floor() as usize;
        let k_full = k_full.min(fs.len() - 1);
        let mut acc = 0.0;
        for i in 0..=k_full {
            let w = if i == 0 || i == k_full { 0.5 } else { 1.0 };
            acc += w * rhs.kt.eta_exact(sigma - i as f64 * h) * fs[i] * h;
        }
        let rem = sigma - k_full as f64 * h;
        if rem > 1e-14 {
            acc += 0.5 * rem * rhs.kt.eta_exact(rem) * fs[k_full];
        }
        acc
    };

    for j in 0..n_sub {
        let t = j as f64 * h;
        let (f, g) = (fs[j], dfs[j]);
        let a1 = rhs.acceleration(f, memory(t, &fs));
        let mem_half = memory(t + 0.5 * h, &fs);
        let (f2, g2) = (f + 0.5 * h * g, g + 0.5 * h * a1);
        let a2 = rhs.acceleration(f2, mem_half);
        let (f3, g3) = (f + 0.5 * h * g2, g + 0.5 * h * a2);
        let a3 = rhs.acceleration(f3, mem_half);
        let mem_full = memory(t + h, &fs);
        let (f4, g4) = (f + h * g3, g + h * a3);
        let a4 = rhs.acceleration(f4, mem_full);
        fs.push(f + h / 6.0 * (g + 2.0 * g2 + 2.0 * g3 + g4));
        dfs.push(g + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4));
    }
    (fs, dfs, h)
}

/// Solve the homogeneous equation from initial data (f0, df0) on the kernel
/// grid up to `horizon`.
pub fn solve_homogeneous_ivp(
    kt: &KernelTable,
    mass: f64,
    omega: f64,
    f0: f64,
    df0: f64,
    horizon: f64,
) -> Result<IvpSolution> {
    if !(mass > 0.0) {
        return Err(Error::InvalidParameter(format!("mass = {mass}")));
    }
    if horizon > kt.grid.t_max() + 1e-9 * kt.grid.dt || horizon <= 0.0 {
        return Err(Error::OutOfRange { t: horizon, t_max: kt.grid.t_max() });
    }
    // horizons snap to the nearest kernel-grid node
    let n = ((horizon / kt.grid.dt).round() as usize).clamp(1, kt.grid.n - 1) + 1;
    let grid = UniformGrid::new(kt.grid.dt, n)?;
    let rhs = Rhs { kt, omega2: omega * omega, memory_scale: 4.0 / mass };
    let dt = grid.dt;

    const SUBSTEPS: usize = 16;
    let startup_nodes = 4.min(n);
    let (fine_f, fine_df, h) =
        fine_march(&rhs, f0, df0, (startup_nodes - 1) as f64 * dt, SUBSTEPS);

    let mut f = Vec::with_capacity(n);
    let mut df = Vec::with_capacity(n);
    for k in 0..startup_nodes {
        let idx = ((k as f64 * dt) / h).round() as usize;
        f.push(fine_f[idx]);
        df.push(fine_df[idx]);
    }
    let mut ddf: Vec<f64> = (0..startup_nodes)
        .map(|k| rhs.acceleration(f[k], rhs.memory_at_node(k, &f)))
        .collect();

    // Adams-Bashforth-Moulton PECE, order 4
    for k in 3..n - 1 {
        let fp = f[k]
            + dt / 24.0 * (55.0 * df[k] - 59.0 * df[k - 1] + 37.0 * df[k - 2] - 9.0 * df[k - 3]);
        let gp = df[k]
            + dt / 24.0
                * (55.0 * ddf[k] - 59.0 * ddf[k - 1] + 37.0 * ddf[k - 2] - 9.0 * ddf[k - 3]);

        // memory at node k+1 depends only on history (eta(0) = 0)
        f.push(fp);
        let mem_next = rhs.memory_at_node(k + 1, &f);
        let ap = rhs.acceleration(fp, mem_next);

        let fc = f[k] + dt / 24.0 * (9.0 * gp + 19.0 * df[k] - 5.0 * df[k - 1] + df[k - 2]);
        let gc = df[k] + dt / 24.0 * (9.0 * ap + 19.0 * ddf[k] - 5.0 * ddf[k - 1] + ddf[k - 2]);
        f[k + 1] = fc;
        df.push(gc);
        ddf.push(rhs.acceleration(fc, mem_next));
    }

    Ok(IvpSolution { grid, f, df, ddf })
}

/// Elementary boundary-value functions and the retarded Green function on a
/// fixed horizon.
#[derive(Debug, Clone)]
pub struct ElementaryFunctions {
    pub grid: UniformGrid,
    pub horizon: f64,
    pub mass: f64,
    pub omega: f64,
    /// Frequency used for the free relative functions w1, w2.
    pub w_frequency: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub du1: Vec<f64>,
    pub du2: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub dw1: Vec<f64>,
    pub dw2: Vec<f64>,
    /// Retarded building block g0 (g0(0) = 0, g0'(0) = 1); G(s, tau) = g0(s - tau).
    pub g0: Vec<f64>,
    pub dg0: Vec<f64>,
}

/// Build all elementary functions at horizon `t`; the free functions w_i use
/// the bare system frequency.
pub fn build_elementary(
    kt: &KernelTable,
    mass: f64,
    omega: f64,
    t: f64,
) -> Result<ElementaryFunctions> {
    build_elementary_with_w_frequency(kt, mass, omega, omega, t)
}

/// Same, with an explicit frequency for the free relative functions (an
/// effective Omega_rel = sqrt(Omega^2 + 2 kappa / M_2) when the oscillators
/// are harmonically coupled).
pub fn build_elementary_with_w_frequency(
    kt: &KernelTable,
    mass: f64,
    omega: f64,
    w_frequency: f64,
    t: f64,
) -> Result<ElementaryFunctions> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon t = {t}")));
    }
    let fa = solve_homogeneous_ivp(kt, mass, omega, 1.0, 0.0, t)?;
    let fb = solve_homogeneous_ivp(kt, mass, omega, 0.0, 1.0, t)?;
    let grid = fa.grid.clone();
    let n = grid.n;

    let fb_t = fb.f[n - 1];
    let scale = fb.f.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if fb_t.abs() <= 1e-8 * scale.max(1e-300) {
        return Err(Error::DegenerateHorizon {
            t,
            what: "focal point of the dissipative equation (f_b(t) = 0)".into(),
        });
    }
    let ratio = fa.f[n - 1] / fb_t;

    let u1: Vec<f64> = (0..n).map(|i| fa.f[i] - ratio * fb.f[i]).collect();
    let du1: Vec<f64> = (0..n).map(|i| fa.df[i] - ratio * fb.df[i]).collect();
    let u2: Vec<f64> = fb.f.iter().map(|v| v / fb_t).collect();
    let du2: Vec<f64> = fb.df.iter().map(|v| v / fb_t).collect();

    let (mut w1, mut w2, mut dw1, mut dw2) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    if w_frequency.abs() < 1e-12 {
        for i in 0..n {
            let s = grid.time(i);
            w1.push((t - s) / t);
            w2.push(s / t);
            dw1.push(-1.0 / t);
            dw2.push(1.0 / t);
        }
    } else {
        let sin_t = (w_frequency * t).sin();
        if sin_t.abs() < 1e-8 {
            return Err(Error::DegenerateHorizon {
                t,
                what: format!("sin(Omega t) = 0 for the free functions (Omega = {w_frequency})"),
            });
        }
        for i in 0..n {
            let s = grid.time(i);
            w1.push((w_frequency * (t - s)).sin() / sin_t);
            w2.push((w_frequency * s).sin() / sin_t);
            dw1.push(-w_frequency * (w_frequency * (t - s)).cos() / sin_t);
            dw2.push(w_frequency * (w_frequency * s).cos() / sin_t);
        }
    }

    Ok(ElementaryFunctions {
        grid,
        horizon: t,
        mass,
        omega,
        w_frequency,
        u1,
        u2,
        du1,
        du2,
        w1,
        w2,
        dw1,
        dw2,
        g0: fb.f,
        dg0: fb.df,
    })
}

impl ElementaryFunctions {
    /// Retarded Green function G(s, tau) = theta(s - tau) g0(s - tau).
    pub fn green_retarded(&self, s: f64, tau: f64) -> Result<f64> {
        let t = self.horizon;
        if s < -1e-12 || s > t + 1e-9 || tau < -1e-12 || tau > t + 1e-9 {
            return Err(Error::OutOfRange { t: s.max(tau), t_max: t });
        }
        if s <= tau {
            return Ok(0.0);
        }
        self.grid.interp(&self.g0, s - tau)
    }

    /// CSV serialisation, header `s,u1,u2,du1,du2,w1,w2,g0`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,u1,u2,du1,du2,w1,w2,g0\n");
        for i in 0..self.grid.n {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                self.grid.time(i),
                self.u1[i],
                self.u2[i],
                self.du1[i],
                self.du2[i],
                self.w1[i],
                self.w2[i],
                self.g0[i]
            ));
        }
        out
    }
}
