//! Bath spectral densities and the dissipation/noise kernels built from them.
//!
//! A spectral density stores the per-oscillator coupling weight `I(omega)`.
//! Consumers that need the centre-of-mass coupled weight (both oscillators
//! attached to the same mode with doubled coupling) request the factor-4
//! variant explicitly through [`SpectralDensity::cm_coupled`]; that factor
//! lives in exactly one place, [`CM_COUPLING_FACTOR`].
//!
//! Kernel conventions, written with the 1/pi-normalised frequency measure so
//! that a discrete comb `I = pi * sum_n C_n^2/(2 m_n w_n) delta(w - w_n)`
//! reproduces the plain trigonometric sums:
//!
//!   eta(s) = -(1/pi) * int_0^inf dw I(w) sin(w s)
//!   nu(s)  =  (1/pi) * int_0^inf dw I(w) coth(hbar w / 2 kT) cos(w s)
//!
//! With this normalisation the high-temperature ohmic limits come out as
//! delta-function kernels with half-line integrals `int_0^inf nu = m_s gamma kT / hbar`,
//! and the discretised bath kernels converge pointwise to the continuum ones.

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::quad;

/// Coupling enhancement seen by the centre of mass: both oscillators couple
/// to every bath mode, doubling the effective coupling constant.
pub const CM_COUPLING_FACTOR: f64 = 4.0;

/// Hard cap on tabulation sizes.
pub const GRID_CAP: usize = 1 << 20;

/// Physical constants kept symbolic throughout; default to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysConsts {
    pub hbar: f64,
    pub k_b: f64,
}

impl Default for PhysConsts {
    fn default() -> Self {
        Self { hbar: 1.0, k_b: 1.0 }
    }
}

/// One bath mode (mass, frequency, coupling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathMode {
    pub mass: f64,
    pub frequency: f64,
    pub coupling: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralKind {
    /// I(w) = mass_scale * damping * w * exp(-w^2 / cutoff^2)
    OhmicGaussianCutoff {
        mass_scale: f64,
        damping: f64,
        cutoff: f64,
    },
    /// I(w) = pi * sum_n C_n^2 / (2 m_n w_n) * delta(w - w_n)
    Discrete(Vec<BathMode>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub kind: SpectralKind,
    /// 1 for the per-oscillator weight, [`CM_COUPLING_FACTOR`] for the
    /// cm-coupled variant.
    pub prefactor: f64,
}

fn coth(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 / x + x / 3.0
    } else {
        1.0 / x.tanh()
    }
}

impl SpectralDensity {
    pub fn ohmic(mass_scale: f64, damping: f64, cutoff: f64) -> Result<Self> {
        if !(mass_scale > 0.0) {
            return Err(Error::InvalidParameter(format!("mass_scale = {mass_scale}")));
        }
        if !(damping >= 0.0) {
            return Err(Error::InvalidParameter(format!("damping = {damping}")));
        }
        if !(cutoff > 0.0) {
            return Err(Error::InvalidParameter(format!("cutoff = {cutoff}")));
        }
        Ok(Self {
            kind: SpectralKind::OhmicGaussianCutoff { mass_scale, damping, cutoff },
            prefactor: 1.0,
        })
    }

    pub fn discrete(modes: Vec<BathMode>) -> Result<Self> {
        for m in &modes {
            if !(m.mass > 0.0) || !(m.frequency > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "bath mode needs positive mass and frequency, got m = {}, w = {}",
                    m.mass, m.frequency
                )));
            }
        }
        Ok(Self { kind: SpectralKind::Discrete(modes), prefactor: 1.0 })
    }

    /// The factor-4 variant seen by the centre-of-mass coordinate.
    pub fn cm_coupled(&self) -> Self {
        Self { kind: self.kind.clone(), prefactor: self.prefactor * CM_COUPLING_FACTOR }
    }

    /// Point evaluation of I(w). Rejected for discrete combs.
    pub fn eval(&self, omega: f64) -> Result<f64> {
        if omega < 0.0 {
            return Err(Error::InvalidParameter(format!("omega = {omega} < 0")));
        }
        match &self.kind {
            SpectralKind::OhmicGaussianCutoff { mass_scale, damping, cutoff } => {
                Ok(self.prefactor * mass_scale * damping * omega * (-(omega / cutoff).powi(2)).exp())
            }
            SpectralKind::Discrete(_) => Err(Error::Unsupported(
                "point evaluation of a discrete delta comb; use the kernels or a discretize-aware consumer"
                    .into(),
            )),
        }
    }

    /// Modes weights C_n^2 / (2 m_n w_n) including the prefactor.
    fn discrete_weights(&self) -> Option<impl Iterator<Item = (f64, f64)> + '_> {
        match &self.kind {
            SpectralKind::Discrete(modes) => Some(modes.iter().map(move |m| {
                (
                    self.prefactor * m.coupling * m.coupling / (2.0 * m.mass * m.frequency),
                    m.frequency,
                )
            })),
            _ => None,
        }
    }

    /// Dissipation kernel eta(s); odd in s, closed form for the ohmic family.
    pub fn dissipation_kernel(&self, s: f64) -> f64 {
        match &self.kind {
            SpectralKind::OhmicGaussianCutoff { mass_scale, damping, cutoff } => {
                // -(1/pi) int_0^inf m γ w e^{-w²/Λ²} sin(ws) dw
                //   = -m γ Λ³ s / (4 sqrt(pi)) * e^{-Λ² s² / 4}
                let l = *cutoff;
                -self.prefactor * mass_scale * damping * l.powi(3) * s
                    / (4.0 * std::f64::consts::PI.sqrt())
                    * (-l * l * s * s / 4.0).exp()
            }
            SpectralKind::Discrete(_) => {
                let mut acc = 0.0;
                for (w, freq) in self.discrete_weights().unwrap() {
                    acc -= w * (freq * s).sin();
                }
                acc
            }
        }
    }

    /// Noise kernel nu(s); even in s. Quadrature for the ohmic family
    /// (relative tolerance 1e-9), exact finite sum for discrete combs.
    pub fn noise_kernel(&self, temperature: f64, s: f64, consts: &PhysConsts) -> Result<f64> {
        if temperature < 0.0 {
            return Err(Error::InvalidParameter(format!("temperature = {temperature} < 0")));
        }
        let thermal = |freq: f64| -> f64 {
            if temperature == 0.0 {
                1.0
            } else {
                coth(consts.hbar * freq / (2.0 * consts.k_b * temperature))
            }
        };
        match &self.kind {
            SpectralKind::OhmicGaussianCutoff { mass_scale, damping, cutoff } => {
                let omega_up = 6.5 * cutoff;
                // roughly one panel per oscillation of cos(w s)
                let min_panels = 8 + (s.abs() * omega_up / std::f64::consts::PI) as usize;
                // convergence floor from the non-oscillatory integrand scale,
                // using coth(x) <= 1 + 1/x
                let thermal_boost = 2.0 * consts.k_b * temperature / consts.hbar;
                let scale_bound = self.prefactor
                    * mass_scale
                    * damping
                    * (0.5 * cutoff * cutoff
                        + thermal_boost * 0.5 * std::f64::consts::PI.sqrt() * cutoff)
                    / std::f64::consts::PI;
                let val = quad::integrate(
                    |w| {
                        // I(w) vanishes linearly at w = 0, cancelling the coth pole
                        self.eval(w).unwrap_or(0.0) * thermal(w.max(1e-300)) * (w * s).cos()
                    },
                    0.0,
                    omega_up,
                    1e-9,
                    1e-12 * scale_bound,
                    min_panels,
                    "noise kernel",
                )?;
                Ok(val / std::f64::consts::PI)
            }
            SpectralKind::Discrete(_) => {
                let mut acc = 0.0;
                for (w, freq) in self.discrete_weights().unwrap() {
                    acc += w * thermal(freq) * (freq * s).cos();
                }
                Ok(acc)
            }
        }
    }
}

/// Tabulated kernels on a uniform grid, immutable after construction.
///
/// `eta` is cheap (closed form / finite sum), so the source density is kept
/// for exact off-grid evaluation; `nu` caches one quadrature per grid point.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub grid: UniformGrid,
    pub eta: Vec<f64>,
    pub nu: Vec<f64>,
    pub temperature: f64,
    pub consts: PhysConsts,
    source: SpectralDensity,
}

/// Tabulate both kernels for `sd` on [0, t_max] with step dt.
pub fn tabulate_kernels(
    sd: &SpectralDensity,
    temperature: f64,
    t_max: f64,
    dt: f64,
    consts: PhysConsts,
) -> Result<KernelTable> {
    let grid = UniformGrid::covering(t_max, dt, GRID_CAP)?;
    let mut eta = Vec::with_capacity(grid.n);
    let mut nu = Vec::with_capacity(grid.n);
    for i in 0..grid.n {
        let s = grid.time(i);
        eta.push(sd.dissipation_kernel(s));
        nu.push(sd.noise_kernel(temperature, s, &consts)?);
    }
    Ok(KernelTable { grid, eta, nu, temperature, consts, source: sd.clone() })
}

impl KernelTable {
    /// Exact eta at arbitrary s >= 0 (odd reflection for s < 0).
    pub fn eta_exact(&self, s: f64) -> f64 {
        self.source.dissipation_kernel(s)
    }

    /// Tabulated eta with linear interpolation; odd reflection for s < 0.
    pub fn eta_at(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Ok(-self.eta_at(-s)?);
        }
        self.grid.interp(&self.eta, s)
    }

    /// Tabulated nu with linear interpolation; even reflection for s < 0.
    pub fn nu_at(&self, s: f64) -> Result<f64> {
        self.grid.interp(&self.nu, s.abs())
    }

    /// Tabulated nu by index, |i - j| addressing for the even reflection.
    pub fn nu_idx(&self, i: usize, j: usize) -> f64 {
        self.nu[i.abs_diff(j)]
    }

    pub fn source(&self) -> &SpectralDensity {
        &self.source
    }

    /// A table with both kernels scaled by a constant factor (same grid).
    pub fn scaled(&self, factor: f64) -> KernelTable {
        KernelTable {
            grid: self.grid.clone(),
            eta: self.eta.iter().map(|v| v * factor).collect(),
            nu: self.nu.iter().map(|v| v * factor).collect(),
            temperature: self.temperature,
            consts: self.consts,
            source: SpectralDensity {
                kind: self.source.kind.clone(),
                prefactor: self.source.prefactor * factor,
            },
        }
    }

    /// CSV serialisation, header `s,eta,nu`, full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,eta,nu\n");
        for i in 0..self.grid.n {
            out.push_str(&format!("{},{},{}\n", self.grid.time(i), self.eta[i], self.nu[i]));
        }
        out
    }
}
