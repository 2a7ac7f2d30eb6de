//! Scalar fields on the sphere in spectral and grid representation.

use crate::error::{Error, Result};

/// Real spherical-harmonic coefficients of a scalar field, all `(l, m)` with
/// `0 <= l <= degree`, `-l <= m <= l`, in the flat order `l^2 + l + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub degree: usize,
    pub coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(degree: usize) -> Self {
        SpectralField {
            degree,
            coeffs: vec![0.0; (degree + 1) * (degree + 1)],
        }
    }

    /// Flat index of the `(l, m)` coefficient.
    #[inline]
    pub fn index(l: usize, m: isize) -> usize {
        debug_assert!(m.unsigned_abs() <= l);
        ((l * l + l) as isize + m) as usize
    }

    #[inline]
    pub fn get(&self, l: usize, m: isize) -> f64 {
        self.coeffs[Self::index(l, m)]
    }

    #[inline]
    pub fn set(&mut self, l: usize, m: isize, v: f64) {
        self.coeffs[Self::index(l, m)] = v;
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient-wise `self + s * other` (degrees must match).
    pub fn add_scaled(&self, other: &SpectralField, s: f64) -> Result<SpectralField> {
        if other.degree != self.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                got: other.degree,
            });
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + s * b)
            .collect();
        Ok(SpectralField {
            degree: self.degree,
            coeffs,
        })
    }

    /// Multiply each `(l, m)` coefficient by `f(l)`.
    pub fn scale_by_l(&self, f: impl Fn(usize) -> f64) -> SpectralField {
        let mut out = self.clone();
        for l in 0..=self.degree {
            let s = f(l);
            for m in -(l as isize)..=(l as isize) {
                let i = Self::index(l, m);
                out.coeffs[i] *= s;
            }
        }
        out
    }

    /// Apply the Laplace-Beltrami multiplier `-l(l+1)` band by band.
    pub fn laplace_beltrami(&self) -> SpectralField {
        self.scale_by_l(|l| -((l * (l + 1)) as f64))
    }

    /// Copy into a (possibly larger) coefficient vector of `target` degree.
    pub fn padded_to(&self, target: usize) -> SpectralField {
        assert!(target >= self.degree);
        let mut out = SpectralField::zeros(target);
        for l in 0..=self.degree {
            for m in -(l as isize)..=(l as isize) {
                out.set(l, m, self.get(l, m));
            }
        }
        out
    }

    /// Drop coefficients above `target` degree.
    pub fn truncated_to(&self, target: usize) -> SpectralField {
        assert!(target <= self.degree);
        let mut out = SpectralField::zeros(target);
        for l in 0..=target {
            for m in -(l as isize)..=(l as isize) {
                out.set(l, m, self.get(l, m));
            }
        }
        out
    }
}

/// Samples of a scalar field at all grid nodes, row-major over
/// `(theta_i, phi_j)`: `values[i * n_phi + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub degree: usize,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(degree: usize) -> Self {
        GridField {
            degree,
            values: vec![0.0; (degree + 1) * (2 * degree + 2)],
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            degree: self.degree,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> GridField {
        debug_assert_eq!(self.degree, other.degree);
        GridField {
            degree: self.degree,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }
}

/// First derivatives of a scalar field in the orthonormal frame
/// `e1 = d/dtheta`, `e2 = (1/sin theta) d/dphi`, sampled at the grid nodes.
#[derive(Debug, Clone)]
pub struct FrameDerivatives {
    pub d1: GridField,
    pub d2: GridField,
}
