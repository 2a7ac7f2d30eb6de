//! Quadrature grid on the sphere and the scalar spherical-harmonic transforms.
//!
//! Colatitudes are the Gauss-Legendre nodes in `x = cos(theta)` (so no node sits
//! on a pole, where the orthonormal frame degenerates), longitudes are uniform.
//! The product rule integrates band-limited integrands of polynomial degree up
//! to `2L + 1` exactly.

use std::f64::consts::PI;

use super::field::{FrameDerivatives, GridField, SpectralField};
use super::legendre::{gauss_legendre, LegendreTables};
use crate::error::{Error, Result};

pub const MIN_DEGREE: usize = 4;
pub const MAX_DEGREE: usize = 256;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

#[derive(Debug)]
pub struct QuadratureGrid {
    degree: usize,
    n_theta: usize,
    n_phi: usize,
    theta: Vec<f64>,
    cos_theta: Vec<f64>,
    sin_theta: Vec<f64>,
    glw: Vec<f64>,
    phi: Vec<f64>,
    dphi: f64,
    tables: LegendreTables,
    cos_mphi: Vec<Vec<f64>>,
    sin_mphi: Vec<Vec<f64>>,
    unit: Vec<[f64; 3]>,
}

impl QuadratureGrid {
    /// Build the grid for spectral truncation `L`: `L + 1` colatitude rings and
    /// `2L + 2` longitudes.
    pub fn new(degree: usize) -> Result<Self> {
        if !(MIN_DEGREE..=MAX_DEGREE).contains(&degree) {
            return Err(Error::DegreeOutOfRange(degree, MIN_DEGREE, MAX_DEGREE));
        }
        let n_theta = degree + 1;
        let n_phi = 2 * degree + 2;
        let (x_asc, w_asc) = gauss_legendre(n_theta);
        // theta ascending => x = cos(theta) descending.
        let cos_theta: Vec<f64> = x_asc.iter().rev().copied().collect();
        let glw: Vec<f64> = w_asc.iter().rev().copied().collect();
        let theta: Vec<f64> = cos_theta.iter().map(|x| x.acos()).collect();
        let sin_theta: Vec<f64> = cos_theta.iter().map(|x| (1.0 - x * x).sqrt()).collect();
        let dphi = 2.0 * PI / n_phi as f64;
        let phi: Vec<f64> = (0..n_phi).map(|j| j as f64 * dphi).collect();

        let tables = LegendreTables::new(degree, &cos_theta, &sin_theta);

        let mut cos_mphi = Vec::with_capacity(degree + 1);
        let mut sin_mphi = Vec::with_capacity(degree + 1);
        for m in 0..=degree {
            let mut c = Vec::with_capacity(n_phi);
            let mut s = Vec::with_capacity(n_phi);
            for j in 0..n_phi {
                let a = m as f64 * phi[j];
                c.push(a.cos());
                s.push(a.sin());
            }
            cos_mphi.push(c);
            sin_mphi.push(s);
        }

        let mut unit = Vec::with_capacity(n_theta * n_phi);
        for i in 0..n_theta {
            for j in 0..n_phi {
                unit.push([
                    sin_theta[i] * phi[j].cos(),
                    sin_theta[i] * phi[j].sin(),
                    cos_theta[i],
                ]);
            }
        }

        Ok(QuadratureGrid {
            degree,
            n_theta,
            n_phi,
            theta,
            cos_theta,
            sin_theta,
            glw,
            phi,
            dphi,
            tables,
            cos_mphi,
            sin_mphi,
            unit,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn n_nodes(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn sin_theta(&self) -> &[f64] {
        &self.sin_theta
    }

    pub fn cos_theta(&self) -> &[f64] {
        &self.cos_theta
    }

    /// Unit vector `sigma(theta_i, phi_j)` at flat node index `i * n_phi + j`.
    pub fn unit_points(&self) -> &[[f64; 3]] {
        &self.unit
    }

    /// Combined quadrature weight of node `(i, j)` (independent of `j`).
    #[inline]
    pub fn node_weight(&self, i: usize) -> f64 {
        self.glw[i] * self.dphi
    }

    /// Degree of the enlarged grid used to de-alias product nonlinearities
    /// (`factor` defaults to 3/2; +2 keeps cubic band-limited integrands exact).
    pub fn dealias_degree(&self, factor: f64) -> usize {
        ((factor * self.degree as f64).ceil() as usize + 2).min(MAX_DEGREE)
    }

    fn check_grid_degree(&self, f: &GridField) -> Result<()> {
        if f.degree != self.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                got: f.degree,
            });
        }
        Ok(())
    }

    /// Quadrature of a grid field over the sphere.
    pub fn integrate(&self, f: &GridField) -> f64 {
        debug_assert_eq!(f.degree, self.degree);
        let np = self.n_phi;
        let mut total = 0.0;
        for i in 0..self.n_theta {
            let row: f64 = f.values[i * np..(i + 1) * np].iter().sum();
            total += self.glw[i] * row;
        }
        total * self.dphi
    }

    /// Pointwise product integrated over the sphere.
    pub fn inner(&self, f: &GridField, g: &GridField) -> f64 {
        debug_assert_eq!(f.degree, self.degree);
        debug_assert_eq!(g.degree, self.degree);
        let np = self.n_phi;
        let mut total = 0.0;
        for i in 0..self.n_theta {
            let mut row = 0.0;
            for j in 0..np {
                let k = i * np + j;
                row += f.values[k] * g.values[k];
            }
            total += self.glw[i] * row;
        }
        total * self.dphi
    }

    /// Evaluate spectral coefficients on this grid. The input degree may be
    /// lower than the grid degree (zero padding).
    pub fn synthesize(&self, c: &SpectralField) -> Result<GridField> {
        if c.degree > self.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                got: c.degree,
            });
        }
        let (am, bm) = self.azimuthal_components(c, false);
        Ok(self.assemble_from_azimuthal(&am, &bm, c.degree))
    }

    /// Frame derivatives `(d/dtheta, (1/sin theta) d/dphi)` of a spectral field,
    /// evaluated at the grid nodes.
    pub fn synthesize_derivatives(&self, c: &SpectralField) -> Result<FrameDerivatives> {
        if c.degree > self.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                got: c.degree,
            });
        }
        let (am, bm) = self.azimuthal_components(c, false);
        let (amd, bmd) = self.azimuthal_components(c, true);
        let d1 = self.assemble_from_azimuthal(&amd, &bmd, c.degree);
        let d2 = self.assemble_azimuthal_derivative(&am, &bm, c.degree);
        Ok(FrameDerivatives { d1, d2 })
    }

    /// Project a grid field onto harmonics of degree `<= target`.
    ///
    /// Exact when the field is band-limited so that products with the test
    /// harmonics stay within the quadrature exactness of this grid.
    pub fn analyze(&self, f: &GridField, target: usize) -> Result<SpectralField> {
        self.check_grid_degree(f)?;
        if target > self.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                got: target,
            });
        }
        let nt = self.n_theta;
        let np = self.n_phi;
        let mut out = SpectralField::zeros(target);
        // Azimuthal stage: cosine/sine moments per ring, weight dphi.
        let mut gc = vec![0.0; (target + 1) * nt];
        let mut gs = vec![0.0; (target + 1) * nt];
        for m in 0..=target {
            let cm = &self.cos_mphi[m];
            let sm = &self.sin_mphi[m];
            for i in 0..nt {
                let mut sc = 0.0;
                let mut ss = 0.0;
                let row = &f.values[i * np..(i + 1) * np];
                for j in 0..np {
                    sc += row[j] * cm[j];
                    ss += row[j] * sm[j];
                }
                gc[m * nt + i] = sc * self.dphi;
                gs[m * nt + i] = ss * self.dphi;
            }
        }
        // Colatitude stage: Gauss-Legendre against the normalized Legendre table.
        for m in 0..=target {
            let norm = if m == 0 { INV_SQRT_2PI } else { INV_SQRT_PI };
            let tab = &self.tables.plm[m];
            for l in m..=target {
                let block = &tab[(l - m) * nt..(l - m + 1) * nt];
                let mut sc = 0.0;
                let mut ss = 0.0;
                for i in 0..nt {
                    sc += self.glw[i] * gc[m * nt + i] * block[i];
                    if m > 0 {
                        ss += self.glw[i] * gs[m * nt + i] * block[i];
                    }
                }
                out.set(l, m as isize, sc * norm);
                if m > 0 {
                    out.set(l, -(m as isize), ss * norm);
                }
            }
        }
        Ok(out)
    }

    /// Solve `(-Laplace + 1) w = f` for a band-limited right-hand side given on
    /// this grid: spectral division by `l(l+1) + 1`. The returned coefficients
    /// reproduce `<w, phi> = int f . phi` in the `W^{1,2}` duality.
    pub fn riesz_represent(&self, f: &GridField, target: usize) -> Result<SpectralField> {
        let c = self.analyze(f, target)?;
        Ok(c.scale_by_l(|l| 1.0 / ((l * (l + 1)) as f64 + 1.0)))
    }

    /// Values, `d/dtheta` and `(1/sin theta) d/dphi` of the single real harmonic
    /// `Y_{l,m}` at all nodes. Direct table lookup, `O(n_nodes)`.
    pub fn harmonic_with_derivatives(&self, l: usize, m: isize) -> (GridField, GridField, GridField) {
        assert!(l <= self.degree && m.unsigned_abs() <= l);
        let nt = self.n_theta;
        let np = self.n_phi;
        let ma = m.unsigned_abs();
        let norm = if ma == 0 { INV_SQRT_2PI } else { INV_SQRT_PI };
        let ptab = &self.tables.plm[ma][(l - ma) * nt..(l - ma + 1) * nt];
        let dtab = &self.tables.dplm[ma][(l - ma) * nt..(l - ma + 1) * nt];
        let trig = if m >= 0 {
            &self.cos_mphi[ma]
        } else {
            &self.sin_mphi[ma]
        };
        // d/dphi of the azimuthal factor, divided by m (sign included below).
        let trig_d = if m >= 0 {
            &self.sin_mphi[ma]
        } else {
            &self.cos_mphi[ma]
        };
        let dsign = if m >= 0 { -1.0 } else { 1.0 };
        let mut vals = GridField::zeros(self.degree);
        let mut d1 = GridField::zeros(self.degree);
        let mut d2 = GridField::zeros(self.degree);
        for i in 0..nt {
            let inv_s = 1.0 / self.sin_theta[i];
            for j in 0..np {
                let k = i * np + j;
                vals.values[k] = norm * ptab[i] * trig[j];
                d1.values[k] = norm * dtab[i] * trig[j];
                d2.values[k] = norm * ptab[i] * dsign * ma as f64 * trig_d[j] * inv_s;
            }
        }
        (vals, d1, d2)
    }

    /// Cosine/sine ring profiles `a_m(i)`, `b_m(i)` of a coefficient vector,
    /// against either the value table or the theta-derivative table.
    fn azimuthal_components(&self, c: &SpectralField, derivative: bool) -> (Vec<f64>, Vec<f64>) {
        let nt = self.n_theta;
        let lf = c.degree;
        let mut am = vec![0.0; (lf + 1) * nt];
        let mut bm = vec![0.0; (lf + 1) * nt];
        for m in 0..=lf {
            let tab = if derivative {
                &self.tables.dplm[m]
            } else {
                &self.tables.plm[m]
            };
            for l in m..=lf {
                let cc = c.get(l, m as isize);
                let cs = if m > 0 { c.get(l, -(m as isize)) } else { 0.0 };
                if cc == 0.0 && cs == 0.0 {
                    continue;
                }
                let block = &tab[(l - m) * nt..(l - m + 1) * nt];
                for i in 0..nt {
                    am[m * nt + i] += cc * block[i];
                    if m > 0 {
                        bm[m * nt + i] += cs * block[i];
                    }
                }
            }
        }
        (am, bm)
    }

    fn assemble_from_azimuthal(&self, am: &[f64], bm: &[f64], lf: usize) -> GridField {
        let nt = self.n_theta;
        let np = self.n_phi;
        let mut out = GridField {
            degree: self.degree,
            values: vec![0.0; nt * np],
        };
        for i in 0..nt {
            let base = i * np;
            let a0 = am[i] * INV_SQRT_2PI;
            for v in &mut out.values[base..base + np] {
                *v = a0;
            }
        }
        for m in 1..=lf {
            let cm = &self.cos_mphi[m];
            let sm = &self.sin_mphi[m];
            for i in 0..nt {
                let a = am[m * nt + i] * INV_SQRT_PI;
                let b = bm[m * nt + i] * INV_SQRT_PI;
                if a == 0.0 && b == 0.0 {
                    continue;
                }
                let base = i * np;
                for j in 0..np {
                    out.values[base + j] += a * cm[j] + b * sm[j];
                }
            }
        }
        out
    }

    fn assemble_azimuthal_derivative(&self, am: &[f64], bm: &[f64], lf: usize) -> GridField {
        let nt = self.n_theta;
        let np = self.n_phi;
        let mut out = GridField {
            degree: self.degree,
            values: vec![0.0; nt * np],
        };
        for m in 1..=lf {
            let cm = &self.cos_mphi[m];
            let sm = &self.sin_mphi[m];
            let mf = m as f64;
            for i in 0..nt {
                let inv_s = 1.0 / self.sin_theta[i];
                let a = am[m * nt + i] * INV_SQRT_PI * mf * inv_s;
                let b = bm[m * nt + i] * INV_SQRT_PI * mf * inv_s;
                if a == 0.0 && b == 0.0 {
                    continue;
                }
                let base = i * np;
                for j in 0..np {
                    out.values[base + j] += -a * sm[j] + b * cm[j];
                }
            }
        }
        out
    }
}

/// Frame derivatives of a grid field: round-trip through spectral space.
pub fn surface_gradient(grid: &QuadratureGrid, f: &GridField) -> Result<FrameDerivatives> {
    let c = grid.analyze(f, grid.degree())?;
    grid.synthesize_derivatives(&c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(l: usize) -> QuadratureGrid {
        QuadratureGrid::new(l).unwrap()
    }

    #[test]
    fn node_counts_match_degree() {
        let g = grid(4);
        assert_eq!(g.n_theta(), 5);
        assert_eq!(g.n_phi(), 10);
        let g = grid(16);
        assert_eq!(g.n_theta(), 17);
        assert_eq!(g.n_phi(), 34);
    }

    #[test]
    fn degree_bounds_enforced() {
        assert!(QuadratureGrid::new(3).is_err());
        assert!(QuadratureGrid::new(257).is_err());
        assert!(QuadratureGrid::new(4).is_ok());
    }

    #[test]
    fn weights_sum_to_sphere_area() {
        for l in [4usize, 16, 48] {
            let g = grid(l);
            let total: f64 = (0..g.n_theta())
                .map(|i| g.node_weight(i) * g.n_phi() as f64)
                .sum();
            assert!(((total - 4.0 * PI) / (4.0 * PI)).abs() < 1e-12, "L={l}");
        }
    }

    #[test]
    fn nodes_avoid_poles_and_stay_unit() {
        let g = grid(16);
        for s in g.sin_theta() {
            assert!(*s > 1e-3);
        }
        for p in g.unit_points() {
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn integrate_constant_and_moments() {
        let g = grid(8);
        let one = GridField {
            degree: 8,
            values: vec![1.0; g.n_nodes()],
        };
        assert!((g.integrate(&one) - 4.0 * PI).abs() < 1e-12);

        let z2 = GridField {
            degree: 8,
            values: g.unit_points().iter().map(|p| p[2] * p[2]).collect(),
        };
        assert!((g.integrate(&z2) - 4.0 * PI / 3.0).abs() < 1e-12);

        let z = GridField {
            degree: 8,
            values: g.unit_points().iter().map(|p| p[2]).collect(),
        };
        assert!(g.integrate(&z).abs() < 1e-13);
    }

    #[test]
    fn analyze_constant_hits_only_l0() {
        let g = grid(8);
        let one = GridField {
            degree: 8,
            values: vec![1.0; g.n_nodes()],
        };
        let c = g.analyze(&one, 8).unwrap();
        assert!((c.get(0, 0) - (4.0 * PI).sqrt()).abs() < 1e-12);
        for l in 1..=8usize {
            for m in -(l as isize)..=(l as isize) {
                assert!(c.get(l, m).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn analyze_z_hits_only_l1_band() {
        let g = grid(8);
        let z = GridField {
            degree: 8,
            values: g.unit_points().iter().map(|p| p[2]).collect(),
        };
        let c = g.analyze(&z, 8).unwrap();
        assert!((c.get(1, 0) - (4.0 * PI / 3.0).sqrt()).abs() < 1e-12);
        for l in 0..=8usize {
            for m in -(l as isize)..=(l as isize) {
                if (l, m) != (1, 0) {
                    assert!(c.get(l, m).abs() < 1e-13, "l={l} m={m}");
                }
            }
        }
    }

    #[test]
    fn round_trip_identity_on_band_limited_data() {
        let g = grid(12);
        let mut c = SpectralField::zeros(12);
        // Deterministic pseudo-random coefficients.
        let mut s = 0.4321_f64;
        for v in &mut c.coeffs {
            s = (s * 997.0 + 0.1234).fract();
            *v = 2.0 * s - 1.0;
        }
        let f = g.synthesize(&c).unwrap();
        let c2 = g.analyze(&f, 12).unwrap();
        let err = c
            .coeffs
            .iter()
            .zip(&c2.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "round trip error {err}");
    }

    #[test]
    fn orthonormality_under_quadrature() {
        let g = grid(8);
        let fields: Vec<(usize, isize, GridField)> = {
            let mut v = Vec::new();
            for l in 0..=8usize {
                for m in -(l as isize)..=(l as isize) {
                    let (y, _, _) = g.harmonic_with_derivatives(l, m);
                    v.push((l, m, y));
                }
            }
            v
        };
        for (l1, m1, f1) in &fields {
            for (l2, m2, f2) in &fields {
                let s = g.inner(f1, f2);
                let expect = if l1 == l2 && m1 == m2 { 1.0 } else { 0.0 };
                assert!(
                    (s - expect).abs() < 1e-11,
                    "Y({l1},{m1}) . Y({l2},{m2}) = {s}"
                );
            }
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = grid(8);
        let mut c = SpectralField::zeros(8);
        c.set(0, 0, 3.0);
        let d = g.synthesize_derivatives(&c).unwrap();
        for v in d.d1.values.iter().chain(&d.d2.values) {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_energy_of_z_is_8pi_over_3() {
        let g = grid(8);
        let mut c = SpectralField::zeros(8);
        c.set(1, 0, (4.0 * PI / 3.0).sqrt());
        let d = g.synthesize_derivatives(&c).unwrap();
        let sq = d.d1.zip_with(&d.d2, |a, b| a * a + b * b);
        let e = g.integrate(&sq);
        assert!((e - 8.0 * PI / 3.0).abs() < 1e-12, "got {e}");
    }

    #[test]
    fn integration_by_parts_against_spectral_laplacian() {
        // int |grad f|^2 = - int f Lap f, checked on the de-aliased grid where
        // the quadratic gradient integrand is integrated exactly.
        let l = 10usize;
        let g = grid(l);
        let pad = grid(g.dealias_degree(1.5));
        let mut c = SpectralField::zeros(l);
        let mut s = 0.77_f64;
        for v in &mut c.coeffs {
            s = (s * 613.0 + 0.317).fract();
            *v = 2.0 * s - 1.0;
        }
        let d = pad.synthesize_derivatives(&c.padded_to(pad.degree())).unwrap();
        let sq = d.d1.zip_with(&d.d2, |a, b| a * a + b * b);
        let lhs = pad.integrate(&sq);
        let rhs: f64 = -c
            .coeffs
            .iter()
            .zip(c.laplace_beltrami().coeffs.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>();
        assert!(
            ((lhs - rhs) / rhs.abs()).abs() < 1e-9,
            "ibp lhs {lhs} rhs {rhs}"
        );
    }

    #[test]
    fn laplace_beltrami_eigenvalues() {
        let mut c = SpectralField::zeros(6);
        c.set(0, 0, 1.0);
        c.set(1, -1, 2.0);
        c.set(3, 2, -1.5);
        let lap = c.laplace_beltrami();
        assert_eq!(lap.get(0, 0), 0.0);
        assert_eq!(lap.get(1, -1), -4.0);
        assert_eq!(lap.get(3, 2), 18.0);
    }

    #[test]
    fn riesz_representation_properties() {
        let g = grid(8);
        // Constant: multiplier at l=0 is 1.
        let one = GridField {
            degree: 8,
            values: vec![2.5; g.n_nodes()],
        };
        let w = g.riesz_represent(&one, 8).unwrap();
        assert!((w.get(0, 0) - 2.5 * (4.0 * PI).sqrt()).abs() < 1e-12);
        // l=1 data is divided by 3.
        let z = GridField {
            degree: 8,
            values: g.unit_points().iter().map(|p| p[2]).collect(),
        };
        let w = g.riesz_represent(&z, 8).unwrap();
        assert!((w.get(1, 0) - (4.0 * PI / 3.0).sqrt() / 3.0).abs() < 1e-12);
        // Residual of (-Lap + 1) w = f for random band-limited f.
        let mut c = SpectralField::zeros(8);
        let mut s = 0.2_f64;
        for v in &mut c.coeffs {
            s = (s * 401.0 + 0.7).fract();
            *v = 2.0 * s - 1.0;
        }
        let f = g.synthesize(&c).unwrap();
        let w = g.riesz_represent(&f, 8).unwrap();
        let back = w.scale_by_l(|l| (l * (l + 1)) as f64 + 1.0);
        let err = back
            .coeffs
            .iter()
            .zip(&c.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn frame_derivatives_match_analytic_harmonics() {
        let g = grid(8);
        // Y_{1,0} = sqrt(3/4pi) cos(theta): d1 = -sqrt(3/4pi) sin(theta), d2 = 0.
        let n10 = (3.0 / (4.0 * PI)).sqrt();
        let (_, d1, d2) = g.harmonic_with_derivatives(1, 0);
        for i in 0..g.n_theta() {
            for j in 0..g.n_phi() {
                let k = i * g.n_phi() + j;
                assert!((d1.values[k] + n10 * g.sin_theta()[i]).abs() < 1e-13);
                assert!(d2.values[k].abs() < 1e-13);
            }
        }
        // Y_{1,1} = sqrt(3/4pi) sin(theta) cos(phi).
        let (_, d1, d2) = g.harmonic_with_derivatives(1, 1);
        for i in 0..g.n_theta() {
            for j in 0..g.n_phi() {
                let k = i * g.n_phi() + j;
                let expect_d1 = n10 * g.cos_theta()[i] * g.phi()[j].cos();
                let expect_d2 = -n10 * g.phi()[j].sin();
                assert!((d1.values[k] - expect_d1).abs() < 1e-10);
                assert!((d2.values[k] - expect_d2).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn surface_gradient_consistency_with_synthesize_derivatives() {
        let g = grid(8);
        let mut c = SpectralField::zeros(8);
        c.set(2, 1, 1.0);
        c.set(4, -3, 0.5);
        let f = g.synthesize(&c).unwrap();
        let via_grid = surface_gradient(&g, &f).unwrap();
        let direct = g.synthesize_derivatives(&c).unwrap();
        let e1 = via_grid
            .d1
            .values
            .iter()
            .zip(&direct.d1.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let e2 = via_grid
            .d2
            .values
            .iter()
            .zip(&direct.d2.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(e1 < 1e-10 && e2 < 1e-10);
    }
}
