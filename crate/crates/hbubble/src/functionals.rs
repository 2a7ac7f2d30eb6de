//! The variational core: Dirichlet energy, enclosed volumes, the full energy
//! `E_eps(u) = 1/2 int |grad u|^2 + 2 V1(u) + 2 eps V_H(u)`, the H-system
//! residual, and first/second variations paired against the spherical-harmonic
//! basis.
//!
//! Everything is evaluated intrinsically on the sphere with the orthonormal
//! frame `(e1, e2)` and the area-form vector `J(u) = u_{e1} ^ u_{e2}`; product
//! nonlinearities are sampled on an enlarged (de-aliased) grid before being
//! projected back onto the working band.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::CurvatureField;
use crate::melnikov::{BallOrders, BallRule};
use crate::sphere::{GridField, MapS2R3, QuadratureGrid, SpectralField};

/// Largest degree for which the dense second-variation matrix may be assembled.
pub const MAX_DENSE_DEGREE: usize = 48;

/// Shared discretization context: the working grid and the enlarged grid used
/// for product nonlinearities.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub grid: Arc<QuadratureGrid>,
    pub pad: Arc<QuadratureGrid>,
}

impl Workspace {
    pub fn new(degree: usize) -> Result<Self> {
        Self::with_pad_factor(degree, 1.5)
    }

    pub fn with_pad_factor(degree: usize, pad_factor: f64) -> Result<Self> {
        if !(pad_factor >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "padding factor must be >= 1, got {pad_factor}"
            )));
        }
        let grid = Arc::new(QuadratureGrid::new(degree)?);
        let pad = Arc::new(QuadratureGrid::new(grid.dealias_degree(pad_factor))?);
        Ok(Workspace { grid, pad })
    }

    pub fn degree(&self) -> usize {
        self.grid.degree()
    }

    /// Number of scalar basis functions per component.
    pub fn scalar_dim(&self) -> usize {
        let l = self.grid.degree();
        (l + 1) * (l + 1)
    }

    /// Total basis size over the three components.
    pub fn basis_dim(&self) -> usize {
        3 * self.scalar_dim()
    }

    pub fn base_bubble(&self) -> Result<MapS2R3> {
        MapS2R3::base_bubble(self.grid.clone())
    }

    /// Values and frame derivatives of a map on the de-aliased grid.
    pub fn pad_map(&self, u: &MapS2R3) -> Result<PadMap> {
        let lp = self.pad.degree();
        let mut vals = Vec::with_capacity(3);
        let mut d1 = Vec::with_capacity(3);
        let mut d2 = Vec::with_capacity(3);
        for c in u.spectral() {
            let cp = c.padded_to(lp);
            vals.push(self.pad.synthesize(&cp)?);
            let fd = self.pad.synthesize_derivatives(&cp)?;
            d1.push(fd.d1);
            d2.push(fd.d2);
        }
        Ok(PadMap {
            vals: vals.try_into().unwrap(),
            d1: d1.try_into().unwrap(),
            d2: d2.try_into().unwrap(),
        })
    }

    /// Project a vector field sampled on the de-aliased grid onto the working
    /// band, returning the pairings `int W . Y_{l,m} e_k` as a flat vector.
    pub fn pad_pairings(&self, w: &[GridField; 3]) -> Result<DVector<f64>> {
        let l = self.grid.degree();
        let nd = self.scalar_dim();
        let mut out = DVector::zeros(3 * nd);
        for k in 0..3 {
            let c = self.pad.analyze(&w[k], l)?;
            for (i, v) in c.coeffs.iter().enumerate() {
                out[k * nd + i] = *v;
            }
        }
        Ok(out)
    }

    /// Flatten three spectral components into one coefficient vector.
    pub fn flatten(&self, spec: &[SpectralField; 3]) -> DVector<f64> {
        let nd = self.scalar_dim();
        let mut out = DVector::zeros(3 * nd);
        for k in 0..3 {
            for (i, v) in spec[k].coeffs.iter().enumerate() {
                out[k * nd + i] = *v;
            }
        }
        out
    }

    /// Rebuild three spectral components from a flat coefficient vector.
    pub fn unflatten(&self, v: &DVector<f64>) -> [SpectralField; 3] {
        let l = self.grid.degree();
        let nd = self.scalar_dim();
        let mut out = [
            SpectralField::zeros(l),
            SpectralField::zeros(l),
            SpectralField::zeros(l),
        ];
        for k in 0..3 {
            for i in 0..nd {
                out[k].coeffs[i] = v[k * nd + i];
            }
        }
        out
    }

    /// Map a flat coefficient vector to a synchronized `MapS2R3`.
    pub fn map_from_flat(&self, v: &DVector<f64>) -> Result<MapS2R3> {
        MapS2R3::from_spectral(self.grid.clone(), self.unflatten(v))
    }

    /// `l(l+1)` multiplier per flat basis index.
    pub fn dirichlet_multipliers(&self) -> DVector<f64> {
        let l = self.grid.degree();
        let nd = self.scalar_dim();
        let mut out = DVector::zeros(3 * nd);
        for k in 0..3 {
            for ll in 0..=l {
                let ev = (ll * (ll + 1)) as f64;
                for m in -(ll as isize)..=(ll as isize) {
                    out[k * nd + SpectralField::index(ll, m)] = ev;
                }
            }
        }
        out
    }
}

/// Map data on the de-aliased grid.
pub struct PadMap {
    pub vals: [GridField; 3],
    pub d1: [GridField; 3],
    pub d2: [GridField; 3],
}

impl PadMap {
    #[inline]
    pub fn value_at(&self, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.vals[0].values[k],
            self.vals[1].values[k],
            self.vals[2].values[k],
        )
    }

    #[inline]
    pub fn d1_at(&self, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.d1[0].values[k],
            self.d1[1].values[k],
            self.d1[2].values[k],
        )
    }

    #[inline]
    pub fn d2_at(&self, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.d2[0].values[k],
            self.d2[1].values[k],
            self.d2[2].values[k],
        )
    }

    #[inline]
    pub fn area_form_at(&self, k: usize) -> Vector3<f64> {
        self.d1_at(k).cross(&self.d2_at(k))
    }
}

/// Gauge axis for the anti-derivative vector field `Q` with `div Q = H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeAxis {
    X,
    Y,
    Z,
}

/// The area-form vector `J(u) = u_{e1} ^ u_{e2}` at the nodes of `u`'s grid.
pub fn area_form(u: &MapS2R3) -> [GridField; 3] {
    let n = u.grid().n_nodes();
    let l = u.degree();
    let mut out = [
        GridField::zeros(l),
        GridField::zeros(l),
        GridField::zeros(l),
    ];
    for k in 0..n {
        let j = u.d1_at(k).cross(&u.d2_at(k));
        out[0].values[k] = j.x;
        out[1].values[k] = j.y;
        out[2].values[k] = j.z;
    }
    out
}

/// Dirichlet energy `int (|u_{e1}|^2 + |u_{e2}|^2)`, integrated exactly on the
/// de-aliased grid.
pub fn dirichlet(ws: &Workspace, u: &MapS2R3) -> Result<f64> {
    let pm = ws.pad_map(u)?;
    let n = ws.pad.n_nodes();
    let mut f = GridField::zeros(ws.pad.degree());
    for k in 0..n {
        f.values[k] = pm.d1_at(k).norm_squared() + pm.d2_at(k).norm_squared();
    }
    Ok(ws.pad.integrate(&f))
}

/// Unweighted enclosed volume `V1(u) = (1/3) int u . J(u)`.
pub fn volume_v1(ws: &Workspace, u: &MapS2R3) -> Result<f64> {
    let pm = ws.pad_map(u)?;
    let n = ws.pad.n_nodes();
    let mut f = GridField::zeros(ws.pad.degree());
    for k in 0..n {
        f.values[k] = pm.value_at(k).dot(&pm.area_form_at(k));
    }
    Ok(ws.pad.integrate(&f) / 3.0)
}

/// Adaptive Gauss-Legendre integration of a smooth function on `[a, b]`.
fn adaptive_line_integral(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    fn gl8(f: &dyn Fn(f64) -> f64, a: f64, b: f64, nodes: &[f64], weights: &[f64]) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        nodes
            .iter()
            .zip(weights)
            .map(|(x, w)| half * w * f(mid + half * x))
            .sum()
    }
    // Fixed 8-point rule, refined by bisection.
    const NODES: [f64; 8] = [
        -0.9602898564975363,
        -0.7966664774136267,
        -0.525532409916329,
        -0.18343464249564978,
        0.18343464249564978,
        0.525532409916329,
        0.7966664774136267,
        0.9602898564975363,
    ];
    const WEIGHTS: [f64; 8] = [
        0.10122853629037669,
        0.22238103445337434,
        0.31370664587788705,
        0.362683783378362,
        0.362683783378362,
        0.31370664587788705,
        0.22238103445337434,
        0.10122853629037669,
    ];
    let whole = gl8(f, a, b, &NODES, &WEIGHTS);
    let mid = 0.5 * (a + b);
    let split = gl8(f, a, mid, &NODES, &WEIGHTS) + gl8(f, mid, b, &NODES, &WEIGHTS);
    if (whole - split).abs() <= tol * split.abs().max(1.0) {
        return Ok(split);
    }
    if depth == 0 {
        return Err(Error::QuadratureNonConvergence(24));
    }
    Ok(
        adaptive_line_integral(f, a, mid, tol / 2.0, depth - 1)?
            + adaptive_line_integral(f, mid, b, tol / 2.0, depth - 1)?,
    )
}

/// Weighted volume `V_H(u) = int Q(u) . J(u)` with the anti-derivative gauge
/// `Q = q e_axis`, `q` integrating `H` along the gauge axis from 0.
pub fn weighted_volume_gauge(
    ws: &Workspace,
    u: &MapS2R3,
    field: &CurvatureField,
    axis: GaugeAxis,
) -> Result<f64> {
    let pm = ws.pad_map(u)?;
    let n = ws.pad.n_nodes();
    let ax = match axis {
        GaugeAxis::X => 0,
        GaugeAxis::Y => 1,
        GaugeAxis::Z => 2,
    };
    let mut f = GridField::zeros(ws.pad.degree());
    for k in 0..n {
        let p = pm.value_at(k);
        let target = p[ax];
        let q = if target == 0.0 {
            0.0
        } else {
            adaptive_line_integral(
                &|t| {
                    let mut x = p;
                    x[ax] = t;
                    field.value(x)
                },
                0.0,
                target,
                1e-12,
                24,
            )?
        };
        f.values[k] = q * pm.area_form_at(k)[ax];
    }
    Ok(ws.pad.integrate(&f))
}

/// Weighted volume with the default gauge along the third axis.
pub fn weighted_volume(ws: &Workspace, u: &MapS2R3, field: &CurvatureField) -> Result<f64> {
    weighted_volume_gauge(ws, u, field, GaugeAxis::Z)
}

/// Divergence-theorem value of the weighted volume of the translated unit
/// bubble: `V_H(u0 + p) = -int_{B_1(p)} H`. Serves as the independent cross
/// check pinning the `V_H` normalization (the constant field gives `-4 pi / 3`).
pub fn gauss_green_oracle(p: Vector3<f64>, field: &CurvatureField) -> Result<f64> {
    let base = BallOrders {
        n_r: 32,
        n_mu: 32,
        n_phi: 64,
    };
    let rule = BallRule::new(1.0, base)?;
    let fine = BallRule::new(1.0, base.doubled())?;
    let coarse = rule.integrate(p, |q| field.value(q));
    let refined = fine.integrate(p, |q| field.value(q));
    if (coarse - refined).abs() > 1e-9 * refined.abs().max(1.0) {
        return Err(Error::BallRefinementStalled {
            gap: (coarse - refined).abs(),
            tol: 1e-9,
        });
    }
    Ok(-refined)
}

/// Energy pieces of `E_eps(u)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBreakdown {
    pub dirichlet_half: f64,
    pub v1: f64,
    pub vh: f64,
    pub eps: f64,
    pub total: f64,
}

/// Assemble `E_eps(u) = 1/2 int |grad u|^2 + 2 V1(u) + 2 eps V_H(u)`.
pub fn energy(
    ws: &Workspace,
    u: &MapS2R3,
    eps: f64,
    field: &CurvatureField,
) -> Result<EnergyBreakdown> {
    let dirichlet_half = 0.5 * dirichlet(ws, u)?;
    let v1 = volume_v1(ws, u)?;
    let vh = if eps == 0.0 {
        0.0
    } else {
        weighted_volume(ws, u, field)?
    };
    Ok(EnergyBreakdown {
        dirichlet_half,
        v1,
        vh,
        eps,
        total: dirichlet_half + 2.0 * v1 + 2.0 * eps * vh,
    })
}

/// Strong-form residual `Lap u - 2 (1 + eps H(u)) J(u)` sampled on the
/// de-aliased grid, plus its `L^2` norm.
pub struct ResidualField {
    pub components: [GridField; 3],
    pub l2: f64,
}

pub fn residual(
    ws: &Workspace,
    u: &MapS2R3,
    eps: f64,
    field: &CurvatureField,
) -> Result<ResidualField> {
    let lp = ws.pad.degree();
    let pm = ws.pad_map(u)?;
    let n = ws.pad.n_nodes();
    let mut comps = Vec::with_capacity(3);
    for c in u.spectral() {
        let lap = c.laplace_beltrami().padded_to(lp);
        comps.push(ws.pad.synthesize(&lap)?);
    }
    let mut components: [GridField; 3] = comps.try_into().unwrap();
    let mut sq = GridField::zeros(lp);
    for k in 0..n {
        let h = 1.0 + eps * field.value(pm.value_at(k));
        let j = pm.area_form_at(k);
        let mut s = 0.0;
        for c in 0..3 {
            components[c].values[k] -= 2.0 * h * j[c];
            s += components[c].values[k] * components[c].values[k];
        }
        sq.values[k] = s;
    }
    let l2 = ws.pad.integrate(&sq).max(0.0).sqrt();
    Ok(ResidualField { components, l2 })
}

/// First variation paired against every basis function, together with its
/// `W^{1,2}` Riesz representative:
/// `<E'_eps(u), phi> = int grad u . grad phi + 2 int (1 + eps H(u)) phi . J(u)`.
pub struct GradientResult {
    pub pairings: DVector<f64>,
    pub riesz: MapS2R3,
}

pub fn gradient(
    ws: &Workspace,
    u: &MapS2R3,
    eps: f64,
    field: &CurvatureField,
) -> Result<GradientResult> {
    let pairings = gradient_pairings(ws, u, eps, field)?;
    let mult = ws.dirichlet_multipliers();
    let mut riesz_flat = pairings.clone();
    for i in 0..riesz_flat.len() {
        riesz_flat[i] /= mult[i] + 1.0;
    }
    let riesz = ws.map_from_flat(&riesz_flat)?;
    Ok(GradientResult { pairings, riesz })
}

/// Pairings only (the hot path of the reduction solver).
pub fn gradient_pairings(
    ws: &Workspace,
    u: &MapS2R3,
    eps: f64,
    field: &CurvatureField,
) -> Result<DVector<f64>> {
    let pm = ws.pad_map(u)?;
    let n = ws.pad.n_nodes();
    let lp = ws.pad.degree();
    let mut w = [
        GridField::zeros(lp),
        GridField::zeros(lp),
        GridField::zeros(lp),
    ];
    for k in 0..n {
        let h = 1.0 + eps * field.value(pm.value_at(k));
        let j = pm.area_form_at(k);
        for c in 0..3 {
            w[c].values[k] = 2.0 * h * j[c];
        }
    }
    let mut pair = ws.pad_pairings(&w)?;
    let mult = ws.dirichlet_multipliers();
    let flat = ws.flatten(u.spectral());
    for i in 0..pair.len() {
        pair[i] += mult[i] * flat[i];
    }
    Ok(pair)
}

/// Second variation applied to a direction `v`, paired against every basis
/// function:
/// `<E''_eps(u) v, phi> = int grad v . grad phi
///   + 2 int (1 + eps H(u)) phi . (v_{e1} ^ u_{e2} + u_{e1} ^ v_{e2})
///   + 2 eps int (grad H(u) . v) phi . J(u)`.
pub fn second_variation_apply(
    ws: &Workspace,
    u: &MapS2R3,
    v: &MapS2R3,
    eps: f64,
    field: &CurvatureField,
) -> Result<DVector<f64>> {
    let pu = ws.pad_map(u)?;
    let pv = ws.pad_map(v)?;
    let n = ws.pad.n_nodes();
    let lp = ws.pad.degree();
    let mut w = [
        GridField::zeros(lp),
        GridField::zeros(lp),
        GridField::zeros(lp),
    ];
    for k in 0..n {
        let jprime = pv.d1_at(k).cross(&pu.d2_at(k)) + pu.d1_at(k).cross(&pv.d2_at(k));
        let mut vec = 2.0 * jprime;
        if eps != 0.0 {
            let up = pu.value_at(k);
            let h = field.value(up);
            let gh = field.gradient(up);
            vec = 2.0 * (1.0 + eps * h) * jprime
                + 2.0 * eps * gh.dot(&pv.value_at(k)) * pu.area_form_at(k);
        }
        for c in 0..3 {
            w[c].values[k] = vec[c];
        }
    }
    let mut pair = ws.pad_pairings(&w)?;
    let mult = ws.dirichlet_multipliers();
    let flat = ws.flatten(v.spectral());
    for i in 0..pair.len() {
        pair[i] += mult[i] * flat[i];
    }
    Ok(pair)
}

/// Dense matrix of the unperturbed second variation at the base bubble in the
/// real product basis `Y_{l,m} e_k`. Symmetric with a nine-dimensional kernel.
pub fn assemble_e0_hessian(ws: &Workspace) -> Result<DMatrix<f64>> {
    assemble_hessian(ws, None, 0.0)
}

/// Dense second-variation matrix at an arbitrary state (used by the
/// Newton-mode reduction solver). `state = None` means the base bubble with
/// `eps = 0`.
pub fn assemble_hessian(
    ws: &Workspace,
    state: Option<(&MapS2R3, &CurvatureField)>,
    eps: f64,
) -> Result<DMatrix<f64>> {
    let l = ws.grid.degree();
    if l > MAX_DENSE_DEGREE {
        return Err(Error::InvalidParameter(format!(
            "dense assembly limited to degree <= {MAX_DENSE_DEGREE}, got {l}"
        )));
    }
    let nd = ws.scalar_dim();
    let n = 3 * nd;
    let npad = ws.pad.n_nodes();

    let base;
    let (u, field): (&MapS2R3, Option<&CurvatureField>) = match state {
        Some((u, f)) => (u, Some(f)),
        None => {
            base = ws.base_bubble()?;
            (&base, None)
        }
    };
    let pu = ws.pad_map(u)?;

    // Pointwise data reused for every column.
    let mut hvals = vec![1.0; npad];
    let mut ghv = vec![Vector3::zeros(); npad];
    let mut jv = vec![Vector3::zeros(); npad];
    for k in 0..npad {
        jv[k] = pu.area_form_at(k);
        if let Some(f) = field {
            if eps != 0.0 {
                let up = pu.value_at(k);
                hvals[k] = 1.0 + eps * f.value(up);
                ghv[k] = f.gradient(up);
            }
        }
    }

    let mut a = DMatrix::zeros(n, n);
    let mult = ws.dirichlet_multipliers();
    let lp = ws.pad.degree();

    for ll in 0..=l {
        for m in -(ll as isize)..=(ll as isize) {
            let (y, dy1, dy2) = ws.pad.harmonic_with_derivatives(ll, m);
            let scalar_idx = SpectralField::index(ll, m);
            for comp in 0..3 {
                let col = comp * nd + scalar_idx;
                let mut w = [
                    GridField::zeros(lp),
                    GridField::zeros(lp),
                    GridField::zeros(lp),
                ];
                let mut e = Vector3::zeros();
                e[comp] = 1.0;
                for k in 0..npad {
                    // v = Y e_comp: v_{e1} = dy1 e_comp, v_{e2} = dy2 e_comp.
                    let jprime = (dy1.values[k] * e).cross(&pu.d2_at(k))
                        + pu.d1_at(k).cross(&(dy2.values[k] * e));
                    let mut vec = 2.0 * hvals[k] * jprime;
                    if eps != 0.0 {
                        vec += 2.0 * eps * (ghv[k][comp] * y.values[k]) * jv[k];
                    }
                    w[0].values[k] = vec.x;
                    w[1].values[k] = vec.y;
                    w[2].values[k] = vec.z;
                }
                let pair = ws.pad_pairings(&w)?;
                for r in 0..n {
                    a[(r, col)] = pair[r];
                }
                a[(col, col)] += mult[col];
            }
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{gaussian_bump, linear_combination};
    use nalgebra::Matrix3;
    use std::f64::consts::PI;

    fn ws(l: usize) -> Workspace {
        Workspace::new(l).unwrap()
    }

    fn random_map(ws: &Workspace, seed: f64, amp: f64) -> MapS2R3 {
        // Smooth deterministic map: decaying coefficients.
        let l = ws.degree();
        let mut spec = [
            SpectralField::zeros(l),
            SpectralField::zeros(l),
            SpectralField::zeros(l),
        ];
        let mut s = seed;
        for comp in spec.iter_mut() {
            for ll in 0..=l {
                let decay = 1.0 / ((1 + ll * ll) as f64);
                for m in -(ll as isize)..=(ll as isize) {
                    s = (s * 887.0 + 0.2347).fract();
                    comp.set(ll, m, amp * decay * (2.0 * s - 1.0));
                }
            }
        }
        MapS2R3::from_spectral(ws.grid.clone(), spec).unwrap()
    }

    #[test]
    fn area_form_of_base_bubble_is_outward_node() {
        let ws = ws(8);
        let u0 = ws.base_bubble().unwrap();
        let j = area_form(&u0);
        for (k, p) in ws.grid.unit_points().iter().enumerate() {
            let jk = Vector3::new(j[0].values[k], j[1].values[k], j[2].values[k]);
            assert!((jk - Vector3::new(p[0], p[1], p[2])).norm() < 1e-12);
            assert!((jk + u0.value_at(k)).norm() < 1e-12);
        }
        // Constant maps have vanishing area form; translations leave J alone.
        let c = MapS2R3::from_fn(ws.grid.clone(), |_| Vector3::new(1.0, 2.0, 3.0)).unwrap();
        for f in area_form(&c) {
            for v in f.values {
                assert!(v.abs() < 1e-12);
            }
        }
        let up = u0.translated(Vector3::new(4.0, -1.0, 2.0)).unwrap();
        let jp = area_form(&up);
        for c in 0..3 {
            for (a, b) in jp[c].values.iter().zip(&j[c].values) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dirichlet_values() {
        let ws = ws(8);
        let u0 = ws.base_bubble().unwrap();
        let d = dirichlet(&ws, &u0).unwrap();
        assert!((d - 8.0 * PI).abs() < 1e-10);
        // Quadratic scaling and agreement with the spectral formula.
        let u2 = u0.add_scaled(&u0, 1.0).unwrap();
        assert!((dirichlet(&ws, &u2).unwrap() - 32.0 * PI).abs() < 1e-9);
        let c = MapS2R3::from_fn(ws.grid.clone(), |_| Vector3::new(0.3, 0.0, -2.0)).unwrap();
        assert!(dirichlet(&ws, &c).unwrap().abs() < 1e-12);
        let r = random_map(&ws, 0.123, 0.7);
        let dq = dirichlet(&ws, &r).unwrap();
        let ds = r.spectral_dirichlet();
        assert!((dq - ds).abs() <= 1e-10 * ds.max(1.0));
    }

    #[test]
    fn volume_of_base_bubble_and_translation_invariance() {
        let ws = ws(8);
        let u0 = ws.base_bubble().unwrap();
        let v = volume_v1(&ws, &u0).unwrap();
        assert!((v + 4.0 * PI / 3.0).abs() < 1e-11);
        for p in [
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(-2.0, 5.0, 0.5),
            Vector3::new(0.0, 0.0, 30.0),
        ] {
            let up = u0.translated(p).unwrap();
            assert!((volume_v1(&ws, &up).unwrap() - v).abs() < 1e-10);
        }
        let c = MapS2R3::from_fn(ws.grid.clone(), |_| Vector3::new(1.0, 1.0, 1.0)).unwrap();
        assert!(volume_v1(&ws, &c).unwrap().abs() < 1e-12);
        // Also for a non-symmetric map.
        let r = random_map(&ws, 0.5, 0.4);
        let base = volume_v1(&ws, &r).unwrap();
        let rp = r.translated(Vector3::new(0.7, -0.3, 1.1)).unwrap();
        assert!((volume_v1(&ws, &rp).unwrap() - base).abs() < 1e-10);
    }

    #[test]
    fn functionals_invariant_under_domain_rotation() {
        let ws = ws(12);
        let u0 = ws.base_bubble().unwrap();
        // u0 composed with a rotation of the sphere equals R u0 for the round
        // bubble; use a generic rotation.
        let angle: f64 = 0.83;
        let (s, c) = angle.sin_cos();
        let rot =
            Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0) * Matrix3::new(
                1.0, 0.0, 0.0,
                0.0, 0.6, -0.8,
                0.0, 0.8, 0.6,
            );
        let ur = MapS2R3::from_fn(ws.grid.clone(), |sigma| -(rot * sigma)).unwrap();
        assert!((dirichlet(&ws, &ur).unwrap() - 8.0 * PI).abs() < 1e-10);
        assert!((volume_v1(&ws, &ur).unwrap() + 4.0 * PI / 3.0).abs() < 1e-10);
        let bump = gaussian_bump(1.0, Vector3::new(0.2, 0.1, -0.3), 1.5).unwrap();
        let w0 = weighted_volume(&ws, &u0, &bump).unwrap();
        let wr = weighted_volume(&ws, &ur, &bump).unwrap();
        assert!((w0 - wr).abs() < 1e-10);
    }

    #[test]
    fn weighted_volume_pinned_by_constant_field() {
        // div Q = 1 forces V_{H=1} = V_1 = -4 pi/3 on the unit bubble, matching
        // the divergence-theorem oracle.
        let ws = ws(8);
        let u0 = ws.base_bubble().unwrap();
        let one = CurvatureField::Constant(1.0);
        let v = weighted_volume(&ws, &u0, &one).unwrap();
        assert!((v + 4.0 * PI / 3.0).abs() < 1e-10, "got {v}");
        let oracle = gauss_green_oracle(Vector3::zeros(), &one).unwrap();
        assert!((v - oracle).abs() < 1e-10);
    }

    #[test]
    fn weighted_volume_gauge_independence() {
        let ws = ws(12);
        let u0 = ws.base_bubble().unwrap();
        let bump = gaussian_bump(1.0, Vector3::new(0.3, -0.4, 0.2), 1.0).unwrap();
        let u = u0.translated(Vector3::new(0.5, 0.2, -0.1)).unwrap();
        let vz = weighted_volume_gauge(&ws, &u, &bump, GaugeAxis::Z).unwrap();
        let vx = weighted_volume_gauge(&ws, &u, &bump, GaugeAxis::X).unwrap();
        let vy = weighted_volume_gauge(&ws, &u, &bump, GaugeAxis::Y).unwrap();
        assert!((vz - vx).abs() < 1e-8, "z {vz} vs x {vx}");
        assert!((vz - vy).abs() < 1e-8, "z {vz} vs y {vy}");
    }

    #[test]
    fn weighted_volume_decays_for_far_translations() {
        let ws = ws(8);
        let u0 = ws.base_bubble().unwrap();
        let bump = gaussian_bump(1.0, Vector3::zeros(), 1.0).unwrap();
        let far = u0.translated(Vector3::new(30.0, 0.0, 0.0)).unwrap();
        assert!(weighted_volume(&ws, &far, &bump).unwrap().abs() < 1e-12);
        let oracle = gauss_green_oracle(Vector3::new(30.0, 0.0, 0.0), &bump).unwrap();
        assert!(oracle.abs() < 1e-12);
    }

    #[test]
    fn gauss_green_matches_weighted_volume() {
        let ws = ws(12);
        let u0 = ws.base_bubble().unwrap();
        let fields = vec![
            gaussian_bump(1.0, Vector3::zeros(), 1.0).unwrap(),
            crate::fields::radial_well_default(),
            linear_combination(vec![
                (1.0, gaussian_bump(1.0, Vector3::new(3.0, 0.0, 0.0), 1.0).unwrap()),
                (-1.0, gaussian_bump(1.0, Vector3::new(-3.0, 0.0, 0.0), 1.0).unwrap()),
            ])
            .unwrap(),
        ];
        let translations = [
            Vector3::zeros(),
            Vector3::new(2.0, 0.0, 0.0),
            Vector3::new(0.0, -3.0, 1.0),
        ];
        for f in &fields {
            for p in &translations {
                let lhs = weighted_volume(&ws, &u0.translated(*p).unwrap(), f).unwrap();
                let rhs = gauss_green_oracle(*p, f).unwrap();
                assert!(
                    (lhs - rhs).abs() < 1e-6,
                    "field {f:?} p {p:?}: {lhs} vs {rhs}"
                );
            }
        }
        // Direct radial oracle for the centered bump.
        let bump = gaussian_bump(1.0, Vector3::zeros(), 1.0).unwrap();
        let (xr, wr) = crate::sphere::gauss_legendre(64);
        let radial: f64 = xr
            .iter()
            .zip(&wr)
            .map(|(x, w)| {
                let r = 0.5 * (x + 1.0);
                0.5 * w * 4.0 * PI * r * r * (-r * r).exp()
            })
            .sum();
        let gg = gauss_green_oracle(Vector3::zeros(), &bump).unwrap();
        assert!((gg + radial).abs() < 1e-10);
    }

    #[test]
    fn energy_anchors() {
        let ws = ws(8);
        let u0 = ws.base_bubble().unwrap();
        let bump = gaussian_bump(1.0, Vector3::zeros(), 1.0).unwrap();
        let e0 = energy(&ws, &u0, 0.0, &bump).unwrap();
        assert!((e0.total - 4.0 * PI / 3.0).abs() < 1e-10);
        let c = MapS2R3::from_fn(ws.grid.clone(), |_| Vector3::new(0.2, 0.4, -0.6)).unwrap();
        assert!(energy(&ws, &c, 0.3, &bump).unwrap().total.abs() < 1e-10);
        // eps-linearity of the total at fixed u.
        let e1 = energy(&ws, &u0, 0.02, &bump).unwrap();
        let e2 = energy(&ws, &u0, 0.04, &bump).unwrap();
        assert!((e2.total - 2.0 * e1.total + e0.total).abs() < 1e-12);
        assert!(
            (e1.total - (e1.dirichlet_half + 2.0 * e1.v1 + 2.0 * e1.eps * e1.vh)).abs() == 0.0
        );
    }

    #[test]
    fn residual_anchors() {
        let ws = ws(8);
        let u0 = ws.base_bubble().unwrap();
        let bump = gaussian_bump(1.0, Vector3::zeros(), 1.0).unwrap();
        let r = residual(&ws, &u0, 0.0, &bump).unwrap();
        assert!(r.l2 < 1e-11, "unperturbed residual {}", r.l2);
        // Wrong-radius spheres: |residual| = 2 r |1 - r| sqrt(4 pi).
        for radius in [0.5_f64, 2.0] {
            let u = MapS2R3::from_fn(ws.grid.clone(), |s| -radius * s).unwrap();
            let r = residual(&ws, &u, 0.0, &bump).unwrap();
            let expect = 2.0 * radius * (1.0 - radius).abs() * (4.0 * PI).sqrt();
            assert!((r.l2 - expect).abs() < 1e-9, "radius {radius}");
        }
    }

    #[test]
    fn gradient_vanishes_at_unperturbed_bubble() {
        let ws = ws(8);
        let u0 = ws.base_bubble().unwrap();
        let bump = gaussian_bump(1.0, Vector3::zeros(), 1.0).unwrap();
        let g = gradient(&ws, &u0, 0.0, &bump).unwrap();
        assert!(g.pairings.amax() < 1e-12);
        // Translation invariance: pairings against constants vanish for eps=0
        // even away from the critical point.
        let r = random_map(&ws, 0.9, 0.3);
        let g = gradient(&ws, &r, 0.0, &bump).unwrap();
        let nd = ws.scalar_dim();
        for comp in 0..3 {
            assert!(g.pairings[comp * nd].abs() < 1e-11);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_of_energy() {
        let ws = ws(8);
        let bump = gaussian_bump(0.8, Vector3::new(0.2, 0.0, 0.4), 1.3).unwrap();
        let u0 = ws.base_bubble().unwrap();
        let u = u0
            .add_scaled(&random_map(&ws, 0.31, 0.15), 1.0)
            .unwrap()
            .translated(Vector3::new(0.3, -0.2, 0.1))
            .unwrap();
        let eps = 0.05;
        let g = gradient(&ws, &u, eps, &bump).unwrap();
        let h = 1e-4;
        for seed in 0..10 {
            let phi = random_map(&ws, 0.11 + seed as f64 * 0.07, 1.0);
            let up = u.add_scaled(&phi, h).unwrap();
            let um = u.add_scaled(&phi, -h).unwrap();
            let fd = (energy(&ws, &up, eps, &bump).unwrap().total
                - energy(&ws, &um, eps, &bump).unwrap().total)
                / (2.0 * h);
            let pairing = g.pairings.dot(&ws.flatten(phi.spectral()));
            let scale = pairing.abs().max(1e-6);
            assert!(
                ((pairing - fd) / scale).abs() < 1e-6,
                "seed {seed}: pairing {pairing} fd {fd}"
            );
        }
    }

    #[test]
    fn second_variation_matches_fd_of_gradient_and_is_symmetric() {
        let ws = ws(8);
        let bump = gaussian_bump(0.8, Vector3::new(0.0, 0.3, 0.0), 1.2).unwrap();
        let u0 = ws.base_bubble().unwrap();
        let u = u0.translated(Vector3::new(0.2, 0.2, -0.4)).unwrap();
        let eps = 0.05;
        let h = 1e-4;
        for seed in 0..5 {
            let v = random_map(&ws, 0.41 + seed as f64 * 0.13, 1.0);
            let sv = second_variation_apply(&ws, &u, &v, eps, &bump).unwrap();
            let gp = gradient_pairings(&ws, &u.add_scaled(&v, h).unwrap(), eps, &bump).unwrap();
            let gm = gradient_pairings(&ws, &u.add_scaled(&v, -h).unwrap(), eps, &bump).unwrap();
            let fd = (gp - gm) / (2.0 * h);
            let scale = sv.amax().max(1e-8);
            assert!(
                (sv.clone() - fd).amax() / scale < 1e-6,
                "fd mismatch seed {seed}"
            );
            // Symmetry of the bilinear form on random pairs.
            let w = random_map(&ws, 0.77 + seed as f64 * 0.05, 1.0);
            let svw = second_variation_apply(&ws, &u, &w, eps, &bump).unwrap();
            let a = sv.dot(&ws.flatten(w.spectral()));
            let b = svw.dot(&ws.flatten(v.spectral()));
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "asym {a} vs {b}");
        }
        // Constants are kernel directions of E0'' at the bubble.
        let e1 = MapS2R3::from_fn(ws.grid.clone(), |_| Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let sv = second_variation_apply(&ws, &u0, &e1, 0.0, &bump).unwrap();
        assert!(sv.amax() < 1e-11);
    }

    #[test]
    fn dense_hessian_budget_enforced() {
        assert!(Workspace::new(64).is_ok());
        let ws = Workspace::new(64).unwrap();
        assert!(matches!(
            assemble_e0_hessian(&ws),
            Err(Error::InvalidParameter(_))
        ));
    }
}
