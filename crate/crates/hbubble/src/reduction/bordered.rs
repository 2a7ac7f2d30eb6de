//! The bordered linearized operator: the (singular) unperturbed second
//! variation augmented with six Dirichlet-pairing and three mean-value
//! constraint rows/columns, which restores invertibility.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::functionals::{assemble_e0_hessian, Workspace};
use crate::sphere::SpectralField;

use super::frame::TangentFrame;

pub struct BorderedOperator {
    /// Size of the spectral block (3 (L+1)^2).
    pub n_spec: usize,
    lu: LU<f64, Dyn, Dyn>,
    /// Dirichlet-pairing border columns `B[r, i] = int grad phi_r . grad tau_i`.
    pub b_cols: DMatrix<f64>,
    /// Mean-value border columns `C[r, k] = int phi_r . e_k`.
    pub c_cols: DMatrix<f64>,
    pub matrix_norm: f64,
    pub condition_estimate: f64,
}

/// Border columns from the frame: `B` via the spectral Dirichlet pairing, `C`
/// hitting only the mean coefficients.
pub fn border_columns(ws: &Workspace, frame: &TangentFrame) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = ws.basis_dim();
    let nd = ws.scalar_dim();
    let mult = ws.dirichlet_multipliers();
    let mut b = DMatrix::zeros(n, 6);
    for (i, t) in frame.tau_flat.iter().enumerate() {
        for r in 0..n {
            b[(r, i)] = mult[r] * t[r];
        }
    }
    let mut c = DMatrix::zeros(n, 3);
    let sqrt4pi = (4.0 * std::f64::consts::PI).sqrt();
    for k in 0..3 {
        c[(k * nd + SpectralField::index(0, 0), k)] = sqrt4pi;
    }
    (b, c)
}

/// Assemble the full bordered matrix from a spectral block and the borders.
pub fn bordered_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = n + 9;
    let mut full = DMatrix::zeros(m, m);
    full.view_mut((0, 0), (n, n)).copy_from(a);
    for i in 0..6 {
        for r in 0..n {
            full[(r, n + i)] = -b[(r, i)];
            full[(n + i, r)] = b[(r, i)];
        }
    }
    for k in 0..3 {
        for r in 0..n {
            full[(r, n + 6 + k)] = -c[(r, k)];
            full[(n + 6 + k, r)] = c[(r, k)];
        }
    }
    full
}

/// Factorize a bordered matrix, with a cheap condition estimate (1-norm of the
/// matrix times a sampled lower bound on the inverse norm).
pub fn factorize(full: DMatrix<f64>, n_spec: usize, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<BorderedOperator> {
    let m = full.nrows();
    let mut norm1 = 0.0_f64;
    for j in 0..m {
        norm1 = norm1.max(full.column(j).iter().map(|v| v.abs()).sum());
    }
    let lu = full.lu();
    // Sampled inverse-norm estimate via a handful of deterministic +-1 probes.
    let mut inv_est = 0.0_f64;
    let mut state = 0x9e3779b97f4a7c15_u64;
    for _ in 0..6 {
        let mut rhs = DVector::zeros(m);
        for v in rhs.iter_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = if (state >> 62) & 1 == 0 { 1.0 } else { -1.0 };
        }
        let rhs_norm = rhs.norm();
        match lu.solve(&rhs) {
            Some(x) => inv_est = inv_est.max(x.norm() / rhs_norm),
            None => return Err(Error::FactorizationFailure),
        }
    }
    Ok(BorderedOperator {
        n_spec,
        lu,
        b_cols: b,
        c_cols: c,
        matrix_norm: norm1,
        condition_estimate: norm1 * inv_est,
    })
}

/// Assemble and factorize the operator at the base bubble. The operator does
/// not depend on the translation parameter, so one factorization serves every
/// `(eps, p)` solve on the grid.
pub fn assemble_bordered(ws: &Workspace, frame: &TangentFrame) -> Result<BorderedOperator> {
    let a = assemble_e0_hessian(ws)?;
    let (b, c) = border_columns(ws, frame);
    let full = bordered_matrix(&a, &b, &c);
    factorize(full, ws.basis_dim(), b, c)
}

impl BorderedOperator {
    pub fn size(&self) -> usize {
        self.n_spec + 9
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu.solve(rhs).ok_or(Error::FactorizationFailure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::frame::{analytic_kernel_fields, tangent_frame};

    #[test]
    fn unbordered_block_is_singular_bordered_is_not() {
        let ws = Workspace::new(8).unwrap();
        let frame = tangent_frame(&ws).unwrap();
        let a = assemble_e0_hessian(&ws).unwrap();
        let sym = 0.5 * (&a + a.transpose());
        let eigs = sym.symmetric_eigen().eigenvalues;
        let max_abs = eigs.iter().map(|e| e.abs()).fold(0.0_f64, f64::max);
        let near_zero = eigs
            .iter()
            .filter(|e| e.abs() < 1e-8 * max_abs)
            .count();
        assert_eq!(near_zero, 9, "kernel dimension");

        let op = assemble_bordered(&ws, &frame).unwrap();
        assert!(op.condition_estimate.is_finite());
        assert!(op.condition_estimate < 1e8, "{}", op.condition_estimate);
    }

    #[test]
    fn kernel_supported_rhs_reproduces_multipliers() {
        // For rhs = (B mu + C beta; 0; 0) the solution must be
        // (v, -mu, -beta) with v in the kernel satisfying the constraints,
        // i.e. v = 0.
        let ws = Workspace::new(8).unwrap();
        let frame = tangent_frame(&ws).unwrap();
        let op = assemble_bordered(&ws, &frame).unwrap();
        let n = ws.basis_dim();
        let mut rhs = DVector::zeros(n + 9);
        let mu = [0.3, -1.0, 0.5, 0.0, 2.0, -0.25];
        let beta = [1.5, 0.0, -0.75];
        for r in 0..n {
            let mut s = 0.0;
            for i in 0..6 {
                s += op.b_cols[(r, i)] * mu[i];
            }
            for k in 0..3 {
                s += op.c_cols[(r, k)] * beta[k];
            }
            rhs[r] = s;
        }
        let x = op.solve(&rhs).unwrap();
        for r in 0..n {
            assert!(x[r].abs() < 1e-9, "eta component {r} = {}", x[r]);
        }
        for i in 0..6 {
            assert!((x[n + i] + mu[i]).abs() < 1e-9);
        }
        for k in 0..3 {
            assert!((x[n + 6 + k] + beta[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn condition_stable_across_degrees() {
        let mut conds = Vec::new();
        for l in [8usize, 16, 24] {
            let ws = Workspace::new(l).unwrap();
            let frame = tangent_frame(&ws).unwrap();
            let op = assemble_bordered(&ws, &frame).unwrap();
            assert!(op.condition_estimate < 1e8, "L={l}: {}", op.condition_estimate);
            conds.push(op.condition_estimate);
        }
        // Stays within two orders of magnitude across the sweep.
        let lo = conds.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = conds.iter().cloned().fold(0.0_f64, f64::max);
        assert!(hi / lo < 100.0, "{conds:?}");
    }

    #[test]
    fn numerical_kernel_matches_analytic_fields() {
        let ws = Workspace::new(8).unwrap();
        let a = assemble_e0_hessian(&ws).unwrap();
        let sym = 0.5 * (&a + a.transpose());
        let eig = sym.symmetric_eigen();
        let n = ws.basis_dim();
        // Numerical kernel basis: eigenvectors of the 9 smallest |eigenvalue|.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|i, j| {
            eig.eigenvalues[*i]
                .abs()
                .partial_cmp(&eig.eigenvalues[*j].abs())
                .unwrap()
        });
        let mut kernel = DMatrix::zeros(n, 9);
        for (col, idx) in order.iter().take(9).enumerate() {
            kernel.set_column(col, &eig.eigenvectors.column(*idx));
        }
        // Analytic kernel, orthonormalized by QR.
        let fields = analytic_kernel_fields(&ws).unwrap();
        let mut analytic = DMatrix::zeros(n, 9);
        for (col, f) in fields.iter().enumerate() {
            analytic.set_column(col, &ws.flatten(f.spectral()));
        }
        let qr = analytic.qr();
        let q = qr.q();
        // Principal angles via singular values of Q1^T Q2.
        let overlap = q.transpose() * kernel;
        let svals = overlap.svd(false, false).singular_values;
        for s in svals.iter() {
            let angle = s.min(1.0).acos();
            assert!(angle < 1e-6, "principal angle {angle}");
        }
    }
}
