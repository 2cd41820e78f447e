//! Run configuration: one TOML file per run, versioned schema, unknown keys
//! rejected, physical invariants checked at load.

use anyhow::{anyhow, bail, Context};
use qbm2::nalgebra::{Matrix4, Vector4};
use serde::Deserialize;

use qbm2::dynamics::{GaussianState, Ordering, SystemConfig};
use qbm2::gauss::C64;
use qbm2::kernels::{BathMode, PhysConsts, SpectralDensity};
use qbm2::propagator::SuperpositionSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub system: SystemSection,
    pub bath: Option<BathSection>,
    pub grid: Option<GridSection>,
    pub initial_state: Option<InitialStateSection>,
    pub markov: Option<MarkovSection>,
    pub superposition: Option<SuperpositionSection>,
    pub decohere: Option<DecohereSection>,
    pub entangle: Option<EntangleSection>,
    pub uncertainty: Option<UncertaintySection>,
    pub oracle: Option<OracleSection>,
    pub evolve: Option<EvolveSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub mass: f64,
    pub omega: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_exponent")]
    pub exponent: i32,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub k_b: f64,
}

fn default_exponent() -> i32 {
    2
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub kind: String,
    pub temperature: f64,
    pub mass_scale: Option<f64>,
    pub damping: Option<f64>,
    pub cutoff: Option<f64>,
    pub modes: Option<Vec<ModeRow>>,
    /// 1 for the per-oscillator weight, 4 for the cm-coupled variant.
    #[serde(default = "one")]
    pub prefactor: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeRow {
    pub mass: f64,
    pub frequency: f64,
    pub coupling: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t_max: f64,
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateSection {
    #[serde(default = "default_ordering")]
    pub ordering: String,
    pub mean: Option<[f64; 4]>,
    pub cov: Option<[[f64; 4]; 4]>,
    /// Shorthand for a diagonal CmRel state diag(a^2, b^2, c^2, d^2).
    pub widths: Option<[f64; 4]>,
}

fn default_ordering() -> String {
    "cm_rel".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSection {
    pub omega_prime: f64,
    pub gamma: f64,
    #[serde(default)]
    pub delta: f64,
    pub sigma: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperpositionSection {
    pub l0: f64,
    pub p0: f64,
    pub delta: f64,
    /// Four complex amplitudes as (re, im) pairs.
    pub amplitudes: [[f64; 2]; 4],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecohereSection {
    pub horizons: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    /// Fringe window; defaults to [-l0/2, l0/2].
    pub window: Option<[f64; 2]>,
    /// Emit the 4D lattice CSV at the last horizon.
    #[serde(default)]
    pub lattice: bool,
    #[serde(default = "default_lattice_points")]
    pub lattice_points: usize,
}

fn default_lattice_points() -> usize {
    9
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntangleSection {
    /// Diffusion constant for the EPR scalings; defaults to 2 M1 gamma k_B T
    /// from the bath section.
    pub diffusion: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySection {
    /// Width ratio sigma^2 / sigma_vac^2 for the closed-form columns.
    pub delta_w: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub n_modes: Option<usize>,
    pub omega_max: Option<f64>,
    pub n_out: usize,
    #[serde(default)]
    pub compare: bool,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.02
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSection {
    #[serde(default = "default_ordering")]
    pub output_ordering: String,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).context("parsing config")?;
        if cfg.schema != SCHEMA_VERSION {
            bail!("unsupported schema version {} (expected {SCHEMA_VERSION})", cfg.schema);
        }
        cfg.system_config().context("validating [system]")?;
        if let Some(bath) = &cfg.bath {
            bath.spectral_density().context("validating [bath]")?;
            if bath.temperature < 0.0 {
                bail!("[bath] temperature must be >= 0, got {}", bath.temperature);
            }
        }
        if let Some(grid) = &cfg.grid {
            if !(grid.dt > 0.0) || !(grid.t_max >= grid.dt) {
                bail!("[grid] needs dt > 0 and t_max >= dt");
            }
            if grid.output_stride == 0 {
                bail!("[grid] output_stride must be >= 1");
            }
        }
        if let Some(init) = &cfg.initial_state {
            cfg.initial_state_checked(init).context("validating [initial_state]")?;
        }
        Ok(cfg)
    }

    pub fn consts(&self) -> PhysConsts {
        PhysConsts { hbar: self.system.hbar, k_b: self.system.k_b }
    }

    pub fn system_config(&self) -> anyhow::Result<SystemConfig> {
        SystemConfig::new(
            self.system.mass,
            self.system.omega,
            self.system.kappa,
            self.system.exponent,
            self.consts(),
        )
        .map_err(|e| anyhow!(e))
    }

    pub fn bath_required(&self) -> anyhow::Result<&BathSection> {
        self.bath.as_ref().ok_or_else(|| anyhow!("this command requires a [bath] section"))
    }

    pub fn grid_required(&self) -> anyhow::Result<&GridSection> {
        self.grid.as_ref().ok_or_else(|| anyhow!("this command requires a [grid] section"))
    }

    fn initial_state_checked(&self, init: &InitialStateSection) -> anyhow::Result<GaussianState> {
        let ordering = match init.ordering.as_str() {
            "cm_rel" => Ordering::CmRel,
            "lab" => Ordering::Lab,
            other => bail!("unknown ordering '{other}' (expected cm_rel or lab)"),
        };
        let mean = Vector4::from_iterator(init.mean.unwrap_or([0.0; 4]));
        let cov = match (&init.cov, &init.widths) {
            (Some(rows), None) => {
                Matrix4::from_fn(|i, j| rows[i][j])
            }
            (None, Some(w)) => {
                if ordering != Ordering::CmRel {
                    bail!("width shorthand describes a CmRel-diagonal state");
                }
                Matrix4::from_diagonal(&Vector4::new(
                    w[0] * w[0],
                    w[1] * w[1],
                    w[2] * w[2],
                    w[3] * w[3],
                ))
            }
            (Some(_), Some(_)) => bail!("give either cov or widths, not both"),
            (None, None) => bail!("initial state needs cov or widths"),
        };
        GaussianState::new(ordering, mean, cov, self.system.hbar).map_err(|e| anyhow!(e))
    }

    pub fn initial_state(&self) -> anyhow::Result<GaussianState> {
        let init = self
            .initial_state
            .as_ref()
            .ok_or_else(|| anyhow!("this command requires an [initial_state] section"))?;
        self.initial_state_checked(init)
    }

    pub fn superposition(&self) -> anyhow::Result<SuperpositionSpec> {
        let s = self
            .superposition
            .as_ref()
            .ok_or_else(|| anyhow!("this command requires a [superposition] section"))?;
        let amps = [
            C64::new(s.amplitudes[0][0], s.amplitudes[0][1]),
            C64::new(s.amplitudes[1][0], s.amplitudes[1][1]),
            C64::new(s.amplitudes[2][0], s.amplitudes[2][1]),
            C64::new(s.amplitudes[3][0], s.amplitudes[3][1]),
        ];
        let spec = SuperpositionSpec::new(s.l0, s.p0, s.delta, amps).map_err(|e| anyhow!(e))?;
        spec.normalized().map_err(|e| anyhow!(e))
    }
}

impl BathSection {
    pub fn spectral_density(&self) -> anyhow::Result<SpectralDensity> {
        let base = match self.kind.as_str() {
            "ohmic" => {
                let ms = self.mass_scale.ok_or_else(|| anyhow!("ohmic bath needs mass_scale"))?;
                let g = self.damping.ok_or_else(|| anyhow!("ohmic bath needs damping"))?;
                let c = self.cutoff.ok_or_else(|| anyhow!("ohmic bath needs cutoff"))?;
                SpectralDensity::ohmic(ms, g, c).map_err(|e| anyhow!(e))?
            }
            "discrete" => {
                let modes = self
                    .modes
                    .as_ref()
                    .ok_or_else(|| anyhow!("discrete bath needs modes"))?
                    .iter()
                    .map(|m| BathMode { mass: m.mass, frequency: m.frequency, coupling: m.coupling })
                    .collect();
                SpectralDensity::discrete(modes).map_err(|e| anyhow!(e))?
            }
            other => bail!("unknown bath kind '{other}' (expected ohmic or discrete)"),
        };
        if self.prefactor == 1.0 {
            Ok(base)
        } else if self.prefactor == 4.0 {
            Ok(base.cm_coupled())
        } else {
            bail!("bath prefactor must be 1 or 4, got {}", self.prefactor)
        }
    }
}
