//! Adaptive composite Gauss-Legendre quadrature on finite intervals.
//!
//! Panels are doubled until two successive composite estimates agree to the
//! requested relative tolerance; the panel count is deterministic for given
//! inputs, so results are bitwise reproducible.

use crate::error::{Error, Result};

/// 16-point Gauss-Legendre nodes (positive half) and weights on [-1, 1].
const GL16_X: [f64; 8] = [
    0.09501250983763744,
    0.2816035507792589,
    0.45801677765722737,
    0.6178762444026438,
    0.755404408355003,
    0.8656312023878318,
    0.9445750230732326,
    0.9894009349916499,
];
const GL16_W: [f64; 8] = [
    0.1894506104550685,
    0.18260341504492358,
    0.16915651939500254,
    0.14959598881657674,
    0.12462897125553388,
    0.09515851168249279,
    0.06225352393864789,
    0.027152459411754096,
];

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for k in 0..8 {
        s += GL16_W[k] * (f(c + h * GL16_X[k]) + f(c - h * GL16_X[k]));
    }
    s * h
}

fn composite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for i in 0..panels {
        s += panel(f, a + i as f64 * h, a + (i + 1) as f64 * h);
    }
    s
}

/// Integrate f over [a, b] to relative tolerance `rel_tol`, with an absolute
/// convergence floor `abs_floor` for strongly cancelling integrals whose
/// value is far below the integrand scale. `min_panels` seeds the panel
/// count; pass roughly one panel per oscillation for wavy integrands.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_floor: f64,
    min_panels: usize,
    context: &str,
) -> Result<f64> {
    const MAX_PANELS: usize = 1 << 16;
    let mut panels = min_panels.max(1);
    let mut prev = composite(&f, a, b, panels);
    loop {
        panels *= 2;
        let cur = composite(&f, a, b, panels);
        let change = (cur - prev).abs();
        let scale = cur.abs().max(1e-300);
        if change <= rel_tol * scale + abs_floor + 1e-15 * (b - a).abs() {
            return Ok(cur);
        }
        if panels >= MAX_PANELS {
            return Err(Error::QuadratureFailure {
                context: context.to_string(),
                estimate: cur,
                change,
                panels,
            });
        }
        prev = cur;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_and_oscillatory() {
        let i = integrate(|x| x * x, 0.0, 3.0, 1e-12, 0.0, 1, "x^2").unwrap();
        assert_relative_eq!(i, 9.0, max_relative = 1e-13);

        // int_0^10 sin(20 x) dx
        let i = integrate(|x| (20.0 * x).sin(), 0.0, 10.0, 1e-11, 0.0, 32, "sin").unwrap();
        let exact = (1.0 - (200.0f64).cos()) / 20.0;
        assert_relative_eq!(i, exact, max_relative = 1e-9);
    }

    #[test]
    fn gaussian_tail() {
        let i = integrate(|x| (-x * x).exp(), 0.0, 8.0, 1e-12, 0.0, 4, "gauss").unwrap();
        assert_relative_eq!(i, std::f64::consts::PI.sqrt() / 2.0, max_relative = 1e-12);
    }
}
