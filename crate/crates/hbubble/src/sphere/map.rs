//! Maps `u: S^2 -> R^3` in synchronized spectral/grid representation.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector3;

use super::field::{FrameDerivatives, GridField, SpectralField};
use super::grid::QuadratureGrid;
use crate::error::{Error, Result};

/// Conformal chart of the unit sphere: `(x, y) -> (mu x, mu y, 1 - mu)` with
/// `mu = 2 / (1 + x^2 + y^2)`. Returns the image point and the conformal factor.
pub fn omega_chart(x: f64, y: f64) -> (Vector3<f64>, f64) {
    let mu = 2.0 / (1.0 + x * x + y * y);
    (Vector3::new(mu * x, mu * y, 1.0 - mu), mu)
}

/// A map `S^2 -> R^3` held as three spectral components together with cached
/// node values and frame derivatives on its grid.
#[derive(Debug, Clone)]
pub struct MapS2R3 {
    grid: Arc<QuadratureGrid>,
    spec: [SpectralField; 3],
    vals: [GridField; 3],
    deriv: [FrameDerivatives; 3],
}

impl MapS2R3 {
    /// Build the synchronized representation from spectral coefficients.
    pub fn from_spectral(grid: Arc<QuadratureGrid>, spec: [SpectralField; 3]) -> Result<Self> {
        for c in &spec {
            if c.degree != grid.degree() {
                return Err(Error::DegreeMismatch {
                    expected: grid.degree(),
                    got: c.degree,
                });
            }
        }
        let vals = [
            grid.synthesize(&spec[0])?,
            grid.synthesize(&spec[1])?,
            grid.synthesize(&spec[2])?,
        ];
        let deriv = [
            grid.synthesize_derivatives(&spec[0])?,
            grid.synthesize_derivatives(&spec[1])?,
            grid.synthesize_derivatives(&spec[2])?,
        ];
        Ok(MapS2R3 {
            grid,
            spec,
            vals,
            deriv,
        })
    }

    /// Project node samples onto the grid's band and build the synchronized map.
    pub fn from_node_values(grid: Arc<QuadratureGrid>, vals: [GridField; 3]) -> Result<Self> {
        let l = grid.degree();
        let spec = [
            grid.analyze(&vals[0], l)?,
            grid.analyze(&vals[1], l)?,
            grid.analyze(&vals[2], l)?,
        ];
        Self::from_spectral(grid, spec)
    }

    /// Sample a pointwise function of the unit node into a map.
    pub fn from_fn(
        grid: Arc<QuadratureGrid>,
        f: impl Fn(Vector3<f64>) -> Vector3<f64>,
    ) -> Result<Self> {
        let n = grid.n_nodes();
        let mut vals = [
            GridField::zeros(grid.degree()),
            GridField::zeros(grid.degree()),
            GridField::zeros(grid.degree()),
        ];
        for k in 0..n {
            let p = grid.unit_points()[k];
            let v = f(Vector3::new(p[0], p[1], p[2]));
            vals[0].values[k] = v.x;
            vals[1].values[k] = v.y;
            vals[2].values[k] = v.z;
        }
        Self::from_node_values(grid, vals)
    }

    /// The constant map `sigma -> v`.
    pub fn constant(grid: Arc<QuadratureGrid>, v: Vector3<f64>) -> Result<Self> {
        let l = grid.degree();
        let shift = (4.0 * PI).sqrt();
        let mut spec = [
            SpectralField::zeros(l),
            SpectralField::zeros(l),
            SpectralField::zeros(l),
        ];
        for k in 0..3 {
            spec[k].set(0, 0, v[k] * shift);
        }
        Self::from_spectral(grid, spec)
    }

    /// The unperturbed bubble `u0(sigma) = -sigma`: the intrinsic unit-sphere
    /// solution of `Lap u = 2 u_{e1} ^ u_{e2}` whose area-form vector is the
    /// node direction itself, `J(u0) = sigma`.
    pub fn base_bubble(grid: Arc<QuadratureGrid>) -> Result<Self> {
        let l = grid.degree();
        let band = (4.0 * PI / 3.0).sqrt();
        let mut cx = SpectralField::zeros(l);
        let mut cy = SpectralField::zeros(l);
        let mut cz = SpectralField::zeros(l);
        // x = sqrt(4pi/3) Y_{1,1}, y = sqrt(4pi/3) Y_{1,-1}, z = sqrt(4pi/3) Y_{1,0}.
        cx.set(1, 1, -band);
        cy.set(1, -1, -band);
        cz.set(1, 0, -band);
        Self::from_spectral(grid, [cx, cy, cz])
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.grid.degree()
    }

    pub fn spectral(&self) -> &[SpectralField; 3] {
        &self.spec
    }

    pub fn values(&self) -> &[GridField; 3] {
        &self.vals
    }

    pub fn derivatives(&self) -> &[FrameDerivatives; 3] {
        &self.deriv
    }

    /// Value at flat node index.
    #[inline]
    pub fn value_at(&self, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.vals[0].values[k],
            self.vals[1].values[k],
            self.vals[2].values[k],
        )
    }

    /// `u_{e1}` at flat node index.
    #[inline]
    pub fn d1_at(&self, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.deriv[0].d1.values[k],
            self.deriv[1].d1.values[k],
            self.deriv[2].d1.values[k],
        )
    }

    /// `u_{e2}` at flat node index.
    #[inline]
    pub fn d2_at(&self, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.deriv[0].d2.values[k],
            self.deriv[1].d2.values[k],
            self.deriv[2].d2.values[k],
        )
    }

    /// Translate by a constant vector (shifts only the `l = 0` coefficients).
    pub fn translated(&self, p: Vector3<f64>) -> Result<MapS2R3> {
        let shift = (4.0 * PI).sqrt();
        let mut spec = self.spec.clone();
        for (k, c) in spec.iter_mut().enumerate() {
            let v = c.get(0, 0) + p[k] * shift;
            c.set(0, 0, v);
        }
        Self::from_spectral(self.grid.clone(), spec)
    }

    /// Coefficient-wise `self + s * other`.
    pub fn add_scaled(&self, other: &MapS2R3, s: f64) -> Result<MapS2R3> {
        let spec = [
            self.spec[0].add_scaled(&other.spec[0], s)?,
            self.spec[1].add_scaled(&other.spec[1], s)?,
            self.spec[2].add_scaled(&other.spec[2], s)?,
        ];
        Self::from_spectral(self.grid.clone(), spec)
    }

    /// Sum of the spectral Dirichlet quadratic forms of the three components:
    /// `sum_{l,m,k} l(l+1) c_{l,m,k}^2`.
    pub fn spectral_dirichlet(&self) -> f64 {
        let mut total = 0.0;
        for c in &self.spec {
            for l in 0..=c.degree {
                let ev = (l * (l + 1)) as f64;
                for m in -(l as isize)..=(l as isize) {
                    let v = c.get(l, m);
                    total += ev * v * v;
                }
            }
        }
        total
    }

    /// Largest node-wise mismatch between the cached grid values and a fresh
    /// synthesis of the spectral coefficients.
    pub fn sync_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for k in 0..3 {
            if let Ok(fresh) = self.grid.synthesize(&self.spec[k]) {
                for (a, b) in fresh.values.iter().zip(&self.vals[k].values) {
                    err = err.max((a - b).abs());
                }
            }
        }
        err
    }
}
