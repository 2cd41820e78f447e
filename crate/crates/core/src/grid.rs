//! Uniform time grids and quadrature weights on them.

use crate::error::{Error, Result};

/// A uniform grid t_i = i * dt, i = 0..n-1.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    pub dt: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(dt: f64, n: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("grid step dt = {dt}")));
        }
        if n < 1 {
            return Err(Error::InvalidParameter("grid needs at least one point".into()));
        }
        Ok(Self { dt, n })
    }

    /// Grid covering [0, t_max] with N = round(t_max/dt) + 1 points.
    pub fn covering(t_max: f64, dt: f64, cap: usize) -> Result<Self> {
        if !(dt > 0.0) || !(t_max >= dt) {
            return Err(Error::InvalidParameter(format!(
                "need dt > 0 and t_max >= dt, got dt = {dt}, t_max = {t_max}"
            )));
        }
        let n = (t_max / dt).round() as usize + 1;
        if n > cap {
            return Err(Error::GridTooLarge { requested: n, cap });
        }
        Self::new(dt, n)
    }

    pub fn t_max(&self) -> f64 {
        self.dt * (self.n - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.dt * i as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.time(i))
    }

    /// Index of a time that must sit on the grid (within a small tolerance).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.dt;
        let i = x.round();
        if (x - i).abs() > 1e-6 || i < 0.0 || (i as usize) >= self.n {
            return Err(Error::OutOfRange { t, t_max: self.t_max() });
        }
        Ok(i as usize)
    }

    /// Linear interpolation of tabulated values at time t in [0, t_max].
    pub fn interp(&self, values: &[f64], t: f64) -> Result<f64> {
        if t < -1e-12 || t > self.t_max() + 1e-9 * self.dt {
            return Err(Error::OutOfRange { t, t_max: self.t_max() });
        }
        let x = (t / self.dt).clamp(0.0, (self.n - 1) as f64);
        let i = (x.floor() as usize).min(self.n - 2);
        let w = x - i as f64;
        Ok(values[i] * (1.0 - w) + values[i + 1] * w)
    }
}

/// Gregory-corrected uniform quadrature of tabulated values over [0, (n-1) dt].
///
/// Trapezoid plus the first two Gregory end corrections, O(dt^4) for smooth
/// integrands once at least five nodes are available; exact short-range rules
/// below that.
pub fn gregory(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * dt * (values[0] + values[1]),
        3 => dt / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        4 => 0.375 * dt * (values[0] + 3.0 * values[1] + 3.0 * values[2] + values[3]),
        _ => {
            let mut s = 0.5 * (values[0] + values[n - 1]);
            for v in &values[1..n - 1] {
                s += v;
            }
            let fwd1 = values[1] - values[0];
            let fwd2 = values[2] - 2.0 * values[1] + values[0];
            let bwd1 = values[n - 1] - values[n - 2];
            let bwd2 = values[n - 1] - 2.0 * values[n - 2] + values[n - 3];
            dt * s - dt / 12.0 * (bwd1 - fwd1) - dt / 24.0 * (bwd2 + fwd2)
        }
    }
}

/// Same rule expressed through a product of two tabulations.
pub fn gregory_product(a: &[f64], b: &[f64], dt: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    gregory(&prod, dt)
}

/// Pairwise (cascade) summation for reproducible, well-conditioned reductions.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}
