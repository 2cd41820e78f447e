//! Closed-form integrals of complex Gaussian exponents.
//!
//! The square root of a complex determinant is taken on the branch reached
//! by continuous deformation from the real positive-definite case: with
//! G = A + iB, Re G = A > 0, write G = A^{1/2}(1 + iC)A^{1/2} with
//! C = A^{-1/2} B A^{-1/2} real symmetric; then
//! sqrt(det G) = sqrt(det A) * prod_j sqrt(1 + i c_j) with principal square
//! roots per factor. Each factor stays in the right half plane, so the
//! product never crosses the cut however large B grows.

use nalgebra::{Complex, DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// exp(-x^T G x + F^T x + c) over R^4 with complex symmetric G, Re G > 0.
#[derive(Debug, Clone)]
pub struct GaussianExponent4 {
    pub g: Matrix4<C64>,
    pub f: Vector4<C64>,
    pub c: C64,
}

fn branch_sqrt_det(g: &DMatrix<C64>) -> Result<C64> {
    let n = g.nrows();
    let a = DMatrix::from_fn(n, n, |i, j| g[(i, j)].re);
    let b = DMatrix::from_fn(n, n, |i, j| g[(i, j)].im);
    let sym_defect = (&a - a.transpose()).abs().max() + (&b - b.transpose()).abs().max();
    if sym_defect > 1e-9 * (a.abs().max() + b.abs().max()).max(1e-300) {
        return Err(Error::NonIntegrable("exponent matrix is not symmetric".into()));
    }
    let eig_a = a.symmetric_eigen();
    if eig_a.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NonIntegrable(format!(
            "Re(G) not positive definite (min eigenvalue {:e})",
            eig_a.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
        )));
    }
    // A^{-1/2} and det A from the same decomposition
    let mut det_a = 1.0;
    let mut a_isqrt = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        det_a *= eig_a.eigenvalues[k];
        let col = eig_a.eigenvectors.column(k);
        let w = 1.0 / eig_a.eigenvalues[k].sqrt();
        for i in 0..n {
            for j in 0..n {
                a_isqrt[(i, j)] += w * col[i] * col[j];
            }
        }
    }
    let c_mat = &a_isqrt * b * &a_isqrt;
    let eig_c = c_mat.symmetric_eigenvalues();
    let mut root = C64::new(det_a.sqrt(), 0.0);
    for &cj in eig_c.iter() {
        root *= C64::new(1.0, cj).sqrt();
    }
    Ok(root)
}

fn solve_complex(g: &DMatrix<C64>, rhs: &DVector<C64>) -> Result<DVector<C64>> {
    g.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::NonIntegrable("exponent matrix is singular".into()))
}

/// Plain (unconjugated) bilinear form a . b.
fn bilinear(a: &DVector<C64>, b: &DVector<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// (pi^2 / sqrt(det G)) exp(c + F^T G^{-1} F / 4).
pub fn gaussian_integrate_4(e: &GaussianExponent4) -> Result<C64> {
    let g = DMatrix::from_fn(4, 4, |i, j| e.g[(i, j)]);
    let f = DVector::from_fn(4, |i, _| e.f[i]);
    let root = branch_sqrt_det(&g)?;
    let ginv_f = solve_complex(&g, &f)?;
    let quarter = 0.25 * bilinear(&f, &ginv_f);
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    Ok(C64::new(pi2, 0.0) / root * (e.c + quarter).exp())
}

/// Two-dimensional version: integral of exp(-z^T G z + L^T z + c) over R^2.
pub fn gaussian_integrate_2(gm: &Matrix2<C64>, lv: &Vector2<C64>, c: C64) -> Result<C64> {
    let g = DMatrix::from_fn(2, 2, |i, j| gm[(i, j)]);
    let l = DVector::from_fn(2, |i, _| lv[i]);
    let root = branch_sqrt_det(&g)?;
    let ginv_l = solve_complex(&g, &l)?;
    let quarter = 0.25 * bilinear(&l, &ginv_l);
    Ok(C64::new(std::f64::consts::PI, 0.0) / root * (c + quarter).exp())
}

/// Branch-tracked sqrt(det G) (exposed for the propagator normalisation).
pub fn sqrt_det_4(g: &Matrix4<C64>) -> Result<C64> {
    branch_sqrt_det(&DMatrix::from_fn(4, 4, |i, j| g[(i, j)]))
}
