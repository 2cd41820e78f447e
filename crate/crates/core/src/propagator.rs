//! Influence-functional propagator for displaced-Gaussian superpositions.
//!
//! The propagator exponent is quadratic, so evolving a superposition of
//! displaced Gaussians reduces to closed-form 4-variable Gaussian integrals
//! over the initial coordinates. This module works in reduced units
//! M = hbar = 1 (the printed quadratic forms carry no masses); callers
//! rescale physical inputs at the boundary.
//!
//! The endpoint coefficients are
//!   b1 = u2'(t)/2, b2 = u1'(t)/2, b3 = u2'(0)/2, b4 = u1'(0)/2,
//!   b5 = w2'(t)/2, b6 = w1'(t)/2, b7 = w2'(0)/2, b8 = w1'(0)/2,
//! and the noise quadratic form is
//!   a_ij = (1/2) int int u_i(s) nu(s - s') u_j(s') ds ds'
//! with the per-oscillator noise kernel (centre-of-mass factors live in the
//! x+ = x1 + x2 combinations of the exponent).
//!
//! The 16 superposition components rho_ij are generated from one template
//! over the displacement/momentum signs of the ket and bra slots; the four
//! printed component rules serve as tests.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};

use crate::elementary::ElementaryFunctions;
use crate::error::{Error, Result};
use crate::gauss::{gaussian_integrate_2, gaussian_integrate_4, sqrt_det_4, GaussianExponent4, C64};
use crate::kernels::KernelTable;

#[derive(Debug, Clone, Copy)]
pub struct PropagatorData {
    pub horizon: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub b5: f64,
    pub b6: f64,
    pub b7: f64,
    pub b8: f64,
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

/// Endpoint derivatives and noise quadratic form at the horizon of `ef`.
pub fn build_propagator(ef: &ElementaryFunctions, kt: &KernelTable) -> Result<PropagatorData> {
    if (ef.mass - 1.0).abs() > 1e-9 || (kt.consts.hbar - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(
            "propagator path works in reduced units (M = hbar = 1); rescale inputs".into(),
        ));
    }
    let n = ef.grid.n;
    if (ef.grid.dt - kt.grid.dt).abs() > 1e-12 * kt.grid.dt || n > kt.grid.n {
        return Err(Error::GridMismatch(
            "elementary functions and kernel table must share grid".into(),
        ));
    }
    let dt = ef.grid.dt;
    // a_ij by double trapezoid over the per-oscillator noise kernel
    let mut a = [0.0f64; 3]; // (11, 12, 22)
    for i in 0..n {
        let wi = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let mut row1 = 0.0;
        let mut row2 = 0.0;
        for j in 0..n {
            let wj = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            let nu = kt.nu[i.abs_diff(j)] * wj;
            row1 += nu * ef.u1[j];
            row2 += nu * ef.u2[j];
        }
        a[0] += wi * ef.u1[i] * row1;
        a[1] += wi * ef.u1[i] * row2;
        a[2] += wi * ef.u2[i] * row2;
    }
    let scale = 0.5 * dt * dt;
    Ok(PropagatorData {
        horizon: ef.horizon,
        b1: 0.5 * ef.du2[n - 1],
        b2: 0.5 * ef.du1[n - 1],
        b3: 0.5 * ef.du2[0],
        b4: 0.5 * ef.du1[0],
        b5: 0.5 * ef.dw2[n - 1],
        b6: 0.5 * ef.dw1[n - 1],
        b7: 0.5 * ef.dw2[0],
        b8: 0.5 * ef.dw1[0],
        a11: scale * a[0],
        a12: 2.0 * scale * a[1], // cross term counts both (1,2) and (2,1)
        a22: scale * a[2],
    })
}

/// Initial superposition of displaced Gaussians: each slot holds
/// Psi_1 (centre +L0, phase +P0) or Psi_2 (centre -L0, phase -P0) of width
/// delta; the four amplitudes weight (11, 12, 21, 22).
#[derive(Debug, Clone)]
pub struct SuperpositionSpec {
    pub l0: f64,
    pub p0: f64,
    pub delta: f64,
    pub s: [C64; 4],
}

const SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

impl SuperpositionSpec {
    pub fn new(l0: f64, p0: f64, delta: f64, s: [C64; 4]) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta = {delta}")));
        }
        Ok(Self { l0, p0, delta, s })
    }

    /// Single-slot overlap <Psi_a | Psi_b>.
    fn slot_overlap(&self, a: f64, b: f64) -> f64 {
        if a == b {
            1.0
        } else {
            (-self.l0 * self.l0 / (self.delta * self.delta)
                - self.delta * self.delta * self.p0 * self.p0)
                .exp()
        }
    }

    /// Tr rho_ij(0) = <pair j | pair i>; real for these states.
    pub fn pair_overlap(&self, i: usize, j: usize) -> f64 {
        let (sa, sb) = SIGNS[i];
        let (sc, sd) = SIGNS[j];
        self.slot_overlap(sc, sa) * self.slot_overlap(sd, sb)
    }

    /// Norm of the two-particle state including cross overlaps.
    pub fn norm_squared(&self) -> f64 {
        let mut n = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                n += (self.s[i] * self.s[j].conj() * self.pair_overlap(i, j)).re;
            }
        }
        n
    }

    /// Rescaled copy with unit trace.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_squared();
        if !(n > 0.0) {
            return Err(Error::InvalidState("superposition has zero norm".into()));
        }
        let scale = C64::new(1.0 / n.sqrt(), 0.0);
        let mut s = self.s;
        for v in &mut s {
            *v *= scale;
        }
        Ok(Self { s, ..self.clone() })
    }
}

fn outer(a: [f64; 4], b: [f64; 4]) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| a[i] * b[j])
}

fn cmplx(m: Matrix4<f64>, scale: C64) -> Matrix4<C64> {
    m.map(|x| scale * x)
}

const I: C64 = C64::new(0.0, 1.0);
fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

// sign patterns over the initial coordinates (x10, x20, y10, y20)
const VP: [f64; 4] = [1.0, 1.0, -1.0, -1.0]; // x0+ - y0+
const UP: [f64; 4] = [1.0, 1.0, 0.0, 0.0]; // x0+
const WP: [f64; 4] = [0.0, 0.0, 1.0, 1.0]; // y0+
const RM: [f64; 4] = [1.0, -1.0, 0.0, 0.0]; // x0-
const QM: [f64; 4] = [0.0, 0.0, 1.0, -1.0]; // y0-
const ONES: [f64; 4] = [1.0, 1.0, 1.0, 1.0]; // x0+ + y0+
const MM: [f64; 4] = [1.0, -1.0, 1.0, -1.0]; // x0- + y0-
const NM: [f64; 4] = [1.0, -1.0, -1.0, 1.0]; // x0- - y0-

/// The shared initial-coordinate matrix G (identical for all components).
pub fn exponent_matrix(pd: &PropagatorData, spec: &SuperpositionSpec) -> Matrix4<C64> {
    let d2 = spec.delta * spec.delta;
    cmplx(outer(VP, VP), re(pd.a22))
        + cmplx(outer(UP, UP) - outer(WP, WP), 0.5 * I * pd.b4)
        + cmplx(outer(RM, RM) - outer(QM, QM), 0.5 * I * pd.b8)
        + cmplx(Matrix4::identity(), re(1.0 / (2.0 * d2)))
}

/// Linear coefficients F for component (i, j) at final coordinates
/// (x1, x2, y1, y2). Generated from the sign template; the printed
/// component rules are recovered exactly.
pub fn exponent_linear(
    pd: &PropagatorData,
    spec: &SuperpositionSpec,
    i: usize,
    j: usize,
    finals: &[f64; 4],
) -> Vector4<C64> {
    let [x1, x2, y1, y2] = *finals;
    let (xp, yp) = (x1 + x2, y1 + y2);
    let (xm, ym) = (x1 - x2, y1 - y2);
    let mut f = Vector4::zeros();
    let add = |f: &mut Vector4<C64>, pattern: [f64; 4], coeff: C64| {
        for k in 0..4 {
            f[k] += coeff * pattern[k];
        }
    };
    add(&mut f, ONES, 0.5 * I * pd.b2 * (xp - yp));
    add(&mut f, VP, -0.5 * I * pd.b3 * (xp + yp));
    add(&mut f, MM, 0.5 * I * pd.b6 * (xm - ym));
    add(&mut f, NM, -0.5 * I * pd.b7 * (xm + ym));
    add(&mut f, VP, re(-pd.a12 * (xp - yp)));

    let d2 = spec.delta * spec.delta;
    let (sa, sb) = SIGNS[i];
    let (sc, sd) = SIGNS[j];
    f[0] += I * spec.p0 * sa + re(spec.l0 * sa / d2);
    f[1] += I * spec.p0 * sb + re(spec.l0 * sb / d2);
    f[2] += -I * spec.p0 * sc + re(spec.l0 * sc / d2);
    f[3] += -I * spec.p0 * sd + re(spec.l0 * sd / d2);
    f
}

/// Constant (final-coordinate) part of the exponent; identical across
/// components.
pub fn exponent_constant(pd: &PropagatorData, spec: &SuperpositionSpec, finals: &[f64; 4]) -> C64 {
    let [x1, x2, y1, y2] = *finals;
    let (xp, yp) = (x1 + x2, y1 + y2);
    let (xm, ym) = (x1 - x2, y1 - y2);
    let d2 = spec.delta * spec.delta;
    0.5 * I * pd.b1 * (xp * xp - yp * yp) + 0.5 * I * pd.b5 * (xm * xm - ym * ym)
        - re(pd.a11 * (xp - yp) * (xp - yp))
        - re(2.0 * spec.l0 * spec.l0 / d2)
}

/// Full Gaussian exponent over the initial coordinates for component (i, j).
pub fn build_component_exponent(
    pd: &PropagatorData,
    spec: &SuperpositionSpec,
    i: usize,
    j: usize,
    finals: &[f64; 4],
) -> GaussianExponent4 {
    GaussianExponent4 {
        g: exponent_matrix(pd, spec),
        f: exponent_linear(pd, spec, i, j, finals),
        c: exponent_constant(pd, spec, finals),
    }
}

/// rho_ij evaluated by integrating the component exponent, including the
/// propagator normalisation b3 b7 / pi^2 and the state normalisation
/// N^4 = 1/(pi delta^2).
pub fn rho_component(
    pd: &PropagatorData,
    spec: &SuperpositionSpec,
    i: usize,
    j: usize,
    finals: &[f64; 4],
) -> Result<C64> {
    let e = build_component_exponent(pd, spec, i, j, finals);
    let integral = gaussian_integrate_4(&e)?;
    let n4 = 1.0 / (std::f64::consts::PI * spec.delta * spec.delta);
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    Ok(re(pd.b3 * pd.b7 * n4 / pi2) * integral)
}

/// rho_ij reduced to an explicit quadratic form over the final coordinates:
/// rho_ij(f) = prefactor * exp(f^T Q f + L^T f + k).
#[derive(Debug, Clone)]
pub struct ComponentForm {
    pub q: Matrix4<C64>,
    pub l: Vector4<C64>,
    pub k: C64,
    pub prefactor: C64,
}

impl ComponentForm {
    pub fn eval(&self, finals: &[f64; 4]) -> C64 {
        let f = Vector4::new(re(finals[0]), re(finals[1]), re(finals[2]), re(finals[3]));
        let quad = (f.transpose() * self.q * f)[(0, 0)];
        let lin: C64 = (0..4).map(|k| self.l[k] * f[k]).sum();
        self.prefactor * (quad + lin + self.k).exp()
    }
}

// final-coordinate sign patterns over (x1, x2, y1, y2)
const XF: [f64; 4] = [1.0, 1.0, 0.0, 0.0]; // x+
const YF: [f64; 4] = [0.0, 0.0, 1.0, 1.0]; // y+
const RF: [f64; 4] = [1.0, -1.0, 0.0, 0.0]; // x-
const QF: [f64; 4] = [0.0, 0.0, 1.0, -1.0]; // y-
const VF: [f64; 4] = [1.0, 1.0, -1.0, -1.0]; // x+ - y+
const PF: [f64; 4] = [1.0, 1.0, 1.0, 1.0]; // x+ + y+
const MF: [f64; 4] = [1.0, -1.0, -1.0, 1.0]; // x- - y-
const NF: [f64; 4] = [1.0, -1.0, 1.0, -1.0]; // x- + y-

pub fn component_final_form(
    pd: &PropagatorData,
    spec: &SuperpositionSpec,
    i: usize,
    j: usize,
) -> Result<ComponentForm> {
    let g = exponent_matrix(pd, spec);
    // F(f) = f0 + m_f * f  (slot x final)
    let mut m_f = Matrix4::<C64>::zeros();
    let mut add_outer = |slot: [f64; 4], fin: [f64; 4], coeff: C64| {
        for a in 0..4 {
            for b in 0..4 {
                m_f[(a, b)] += coeff * slot[a] * fin[b];
            }
        }
    };
    add_outer(ONES, VF, 0.5 * I * pd.b2);
    add_outer(VP, PF, -0.5 * I * pd.b3);
    add_outer(MM, MF, 0.5 * I * pd.b6);
    add_outer(NM, NF, -0.5 * I * pd.b7);
    add_outer(VP, VF, re(-pd.a12));

    let f0 = exponent_linear(pd, spec, i, j, &[0.0; 4]);

    // c(f) = f^T Cq f + c0
    let c_q = cmplx(outer(XF, XF) - outer(YF, YF), 0.5 * I * pd.b1)
        + cmplx(outer(RF, RF) - outer(QF, QF), 0.5 * I * pd.b5)
        + cmplx(outer(VF, VF), re(-pd.a11));
    let d2 = spec.delta * spec.delta;
    let c0 = re(-2.0 * spec.l0 * spec.l0 / d2);

    // complete the square over the initial coordinates
    let ginv = g
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::NonIntegrable("singular exponent matrix".into()))?;
    let q = c_q + m_f.transpose() * ginv * m_f * re(0.25);
    let l = m_f.transpose() * ginv * f0 * re(0.5);
    let k = c0 + 0.25 * (f0.transpose() * ginv * f0)[(0, 0)];

    let root = sqrt_det_4(&g)?;
    let n4 = 1.0 / (std::f64::consts::PI * d2);
    let prefactor = re(pd.b3 * pd.b7 * n4) / root;
    Ok(ComponentForm { q, l, k, prefactor })
}

/// Evolved superposition with all 16 component forms cached.
pub struct EvolvedSuperposition {
    pub spec: SuperpositionSpec,
    forms: Vec<ComponentForm>,
}

impl EvolvedSuperposition {
    pub fn new(pd: &PropagatorData, spec: &SuperpositionSpec) -> Result<Self> {
        let mut forms = Vec::with_capacity(16);
        for i in 0..4 {
            for j in 0..4 {
                forms.push(component_final_form(pd, spec, i, j)?);
            }
        }
        Ok(Self { spec: spec.clone(), forms })
    }

    pub fn form(&self, i: usize, j: usize) -> &ComponentForm {
        &self.forms[4 * i + j]
    }

    /// rho_r(x1, x2; y1, y2) = sum_ij s_i s_j^* rho_ij.
    pub fn rho(&self, finals: &[f64; 4]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                acc += self.spec.s[i] * self.spec.s[j].conj() * self.form(i, j).eval(finals);
            }
        }
        acc
    }

    /// Joint position density rho_r(x1, x2; x1, x2).
    pub fn position_density(&self, x1: f64, x2: f64) -> f64 {
        self.rho(&[x1, x2, x1, x2]).re
    }

    /// Density along the diagonal line x1 = x2 = x.
    pub fn diagonal_density(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.position_density(x, x)).collect()
    }

    /// Tr rho_r by closed-form 2D Gaussian integration over the diagonal.
    pub fn trace(&self) -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                let form = self.form(i, j);
                let (g2, l2) = restrict_to_diagonal(form);
                let v = gaussian_integrate_2(&g2, &l2, form.k)?;
                acc += self.spec.s[i] * self.spec.s[j].conj() * form.prefactor * v;
            }
        }
        Ok(acc)
    }

    /// Tr rho_r^2 by closed-form 4D Gaussian integration.
    pub fn purity(&self) -> Result<f64> {
        // swap of ket and bra pairs: (x1,x2,y1,y2) -> (y1,y2,x1,x2)
        let perm = Matrix4::<f64>::new(
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0,
        )
        .map(re);
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        let w = self.spec.s[i]
                            * self.spec.s[j].conj()
                            * self.spec.s[k]
                            * self.spec.s[l].conj();
                        if w.norm() < 1e-300 {
                            continue;
                        }
                        let f1 = self.form(i, j);
                        let f2 = self.form(k, l);
                        let q2 = perm.transpose() * f2.q * perm;
                        let l2v = perm.transpose() * f2.l;
                        let e = GaussianExponent4 {
                            g: -(f1.q + q2),
                            f: f1.l + l2v,
                            c: f1.k + f2.k,
                        };
                        acc += w * f1.prefactor * f2.prefactor * gaussian_integrate_4(&e)?;
                    }
                }
            }
        }
        Ok(acc.re)
    }

    /// Wigner function of component (i, j) at (X1, X2, P1, P2).
    pub fn wigner_component(&self, i: usize, j: usize, phase: &[f64; 4]) -> Result<C64> {
        let form = self.form(i, j);
        let [xx1, xx2, p1, p2] = *phase;
        // finals = a + t_z z, a = (X1, X2, X1, X2)
        let a = Vector4::new(re(xx1), re(xx2), re(xx1), re(xx2));
        let t_z = nalgebra::SMatrix::<C64, 4, 2>::from_row_slice(&[
            re(-0.5),
            re(0.0),
            re(0.0),
            re(-0.5),
            re(0.5),
            re(0.0),
            re(0.0),
            re(0.5),
        ]);
        let a2 = t_z.transpose() * form.q * t_z;
        let mut b = t_z.transpose() * (form.q * a * re(2.0) + form.l);
        b[0] += I * p1;
        b[1] += I * p2;
        let quad_a = (a.transpose() * form.q * a)[(0, 0)];
        let lin_a: C64 = (0..4).map(|k| form.l[k] * a[k]).sum();
        let c = quad_a + lin_a + form.k;
        let g2 = Matrix2::from_fn(|r, s| -a2[(r, s)]);
        let l2 = Vector2::new(b[0], b[1]);
        let integral = gaussian_integrate_2(&g2, &l2, c)?;
        let norm = 1.0 / (2.0 * std::f64::consts::PI).powi(2);
        Ok(form.prefactor * re(norm) * integral)
    }

    /// Full Wigner function sum_ij s_i s_j^* W_ij.
    pub fn wigner(&self, phase: &[f64; 4]) -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                acc += self.spec.s[i] * self.spec.s[j].conj() * self.wigner_component(i, j, phase)?;
            }
        }
        Ok(acc)
    }
}

fn restrict_to_diagonal(form: &ComponentForm) -> (Matrix2<C64>, Vector2<C64>) {
    // finals = S (x1, x2) with S stacking the identity twice
    let s = nalgebra::SMatrix::<C64, 4, 2>::from_row_slice(&[
        re(1.0),
        re(0.0),
        re(0.0),
        re(1.0),
        re(1.0),
        re(0.0),
        re(0.0),
        re(1.0),
    ]);
    let g2 = -(s.transpose() * form.q * s);
    let l2 = s.transpose() * form.l;
    (Matrix2::from_fn(|i, j| g2[(i, j)]), Vector2::new(l2[0], l2[1]))
}
