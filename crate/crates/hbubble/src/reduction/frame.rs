//! Orthonormal tangent frame of the critical manifold at the base bubble.
//!
//! The unperturbed problem has a nine-dimensional manifold of solutions around
//! `u0`: three target translations, three rotations, and three conformal
//! reparametrization directions. The frame holds the six non-translation
//! directions, orthonormalized in the Dirichlet inner product and with zero
//! mean; together with the constants they span the kernel of the unperturbed
//! second variation.

use nalgebra::{DVector, Vector3};

use crate::error::{Error, Result};
use crate::functionals::Workspace;
use crate::sphere::MapS2R3;

#[derive(Debug, Clone)]
pub struct TangentFrame {
    pub tau: Vec<MapS2R3>,
    pub tau_flat: Vec<DVector<f64>>,
    /// Max deviation of the Dirichlet Gram matrix from the identity.
    pub gram_residual: f64,
    /// Max `|int tau_i|` component over the frame.
    pub mean_residual: f64,
}

/// The six raw non-translation tangent fields: rotations `sigma -> e_k x sigma`
/// and mean-free conformal gradients `sigma -> c/3 - (c . sigma) sigma`.
pub fn raw_tangent_fields(ws: &Workspace) -> Result<Vec<MapS2R3>> {
    let mut fields = Vec::with_capacity(6);
    for k in 0..3 {
        let mut e = Vector3::zeros();
        e[k] = 1.0;
        fields.push(MapS2R3::from_fn(ws.grid.clone(), move |s| e.cross(&s))?);
    }
    for k in 0..3 {
        let mut c = Vector3::zeros();
        c[k] = 1.0;
        fields.push(MapS2R3::from_fn(ws.grid.clone(), move |s| {
            c / 3.0 - c.dot(&s) * s
        })?);
    }
    Ok(fields)
}

/// The full nine-dimensional analytic kernel: constants plus the raw frame.
pub fn analytic_kernel_fields(ws: &Workspace) -> Result<Vec<MapS2R3>> {
    let mut fields = Vec::with_capacity(9);
    for k in 0..3 {
        let mut e = Vector3::zeros();
        e[k] = 1.0;
        fields.push(MapS2R3::constant(ws.grid.clone(), e)?);
    }
    fields.extend(raw_tangent_fields(ws)?);
    Ok(fields)
}

/// Gram-Schmidt in the Dirichlet inner product over the raw tangent fields.
pub fn tangent_frame(ws: &Workspace) -> Result<TangentFrame> {
    let mult = ws.dirichlet_multipliers();
    let dir_inner = |a: &DVector<f64>, b: &DVector<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += mult[i] * a[i] * b[i];
        }
        s
    };

    let raw = raw_tangent_fields(ws)?;
    let mut tau_flat: Vec<DVector<f64>> = Vec::with_capacity(6);
    for field in &raw {
        let mut v = ws.flatten(field.spectral());
        let norm0 = dir_inner(&v, &v).sqrt();
        for t in &tau_flat {
            let proj = dir_inner(&v, t);
            v -= proj * t.clone();
        }
        let norm = dir_inner(&v, &v).sqrt();
        if !(norm > 1e-6 * norm0.max(1.0)) {
            return Err(Error::InvalidParameter(
                "tangent frame Gram-Schmidt breakdown: raw fields are numerically dependent"
                    .into(),
            ));
        }
        v /= norm;
        tau_flat.push(v);
    }

    let mut gram_residual = 0.0_f64;
    for (i, a) in tau_flat.iter().enumerate() {
        for (j, b) in tau_flat.iter().enumerate() {
            let expect = if i == j { 1.0 } else { 0.0 };
            gram_residual = gram_residual.max((dir_inner(a, b) - expect).abs());
        }
    }

    let nd = ws.scalar_dim();
    let sqrt4pi = (4.0 * std::f64::consts::PI).sqrt();
    let mut mean_residual = 0.0_f64;
    let mut tau = Vec::with_capacity(6);
    for v in &tau_flat {
        for k in 0..3 {
            mean_residual = mean_residual.max((sqrt4pi * v[k * nd]).abs());
        }
        tau.push(ws.map_from_flat(v)?);
    }

    Ok(TangentFrame {
        tau,
        tau_flat,
        gram_residual,
        mean_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{assemble_e0_hessian, Workspace};

    #[test]
    fn frame_invariants_hold() {
        let ws = Workspace::new(16).unwrap();
        let frame = tangent_frame(&ws).unwrap();
        assert_eq!(frame.tau.len(), 6);
        assert!(frame.gram_residual < 1e-10, "{}", frame.gram_residual);
        assert!(frame.mean_residual < 1e-10, "{}", frame.mean_residual);
    }

    #[test]
    fn rotation_fields_act_nontrivially() {
        let ws = Workspace::new(8).unwrap();
        let raw = raw_tangent_fields(&ws).unwrap();
        for (k, field) in raw.iter().take(3).enumerate() {
            let norm = ws.flatten(field.spectral()).norm();
            assert!(norm > 1.0, "rotation field {k} collapsed: {norm}");
        }
    }

    #[test]
    fn frame_spans_hessian_kernel() {
        let ws = Workspace::new(8).unwrap();
        let frame = tangent_frame(&ws).unwrap();
        let a = assemble_e0_hessian(&ws).unwrap();
        for (i, t) in frame.tau_flat.iter().enumerate() {
            let r = (&a * t).amax();
            assert!(r < 1e-8, "E0'' tau_{i} = {r}");
        }
    }
}
