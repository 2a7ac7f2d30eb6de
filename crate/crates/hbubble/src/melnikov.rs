//! The landscape function `Gamma(p)`: the integral of the perturbation `H1`
//! over the ball of radius `1/|H0|` centered at `p`, its derivatives obtained by
//! differentiating under the integral, and its critical points.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::CurvatureField;

/// Product quadrature orders `(radial, polar cosine, azimuthal)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BallOrders {
    pub n_r: usize,
    pub n_mu: usize,
    pub n_phi: usize,
}

impl BallOrders {
    pub fn doubled(self) -> BallOrders {
        BallOrders {
            n_r: 2 * self.n_r,
            n_mu: 2 * self.n_mu,
            n_phi: 2 * self.n_phi,
        }
    }
}

impl Default for BallOrders {
    fn default() -> Self {
        BallOrders {
            n_r: 24,
            n_mu: 24,
            n_phi: 48,
        }
    }
}

/// Gamma evaluation options: base orders plus the refinement handshake (two
/// consecutive order levels must agree to `tol`).
#[derive(Debug, Clone, Copy)]
pub struct GammaOpts {
    pub orders: BallOrders,
    pub tol: f64,
    pub max_doublings: usize,
}

impl Default for GammaOpts {
    fn default() -> Self {
        GammaOpts {
            orders: BallOrders::default(),
            tol: 1e-9,
            max_doublings: 2,
        }
    }
}

/// Center-relative product rule on the unit-direction ball of a given radius:
/// Gauss-Legendre in radius (with the `r^2` volume weight folded in),
/// Gauss-Legendre in the polar cosine, trapezoid in azimuth.
#[derive(Debug, Clone)]
pub struct BallRule {
    pub radius: f64,
    pub orders: BallOrders,
    offsets: Vec<Vector3<f64>>,
    weights: Vec<f64>,
}

impl BallRule {
    pub fn new(radius: f64, orders: BallOrders) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        if orders.n_r < 2 || orders.n_mu < 2 || orders.n_phi < 2 {
            return Err(Error::InvalidParameter(format!(
                "ball quadrature orders must be >= 2, got {orders:?}"
            )));
        }
        let (xr, wr) = crate::sphere::gauss_legendre(orders.n_r);
        let (xmu, wmu) = crate::sphere::gauss_legendre(orders.n_mu);
        let dphi = 2.0 * std::f64::consts::PI / orders.n_phi as f64;
        let mut offsets = Vec::with_capacity(orders.n_r * orders.n_mu * orders.n_phi);
        let mut weights = Vec::with_capacity(offsets.capacity());
        for (ri, rw) in xr.iter().zip(&wr) {
            let r = radius * 0.5 * (ri + 1.0);
            let jac_r = radius * 0.5 * rw * r * r;
            for (mi, mw) in xmu.iter().zip(&wmu) {
                let s = (1.0 - mi * mi).sqrt();
                for j in 0..orders.n_phi {
                    let phi = j as f64 * dphi;
                    offsets.push(Vector3::new(r * s * phi.cos(), r * s * phi.sin(), r * mi));
                    weights.push(jac_r * mw * dphi);
                }
            }
        }
        Ok(BallRule {
            radius,
            orders,
            offsets,
            weights,
        })
    }

    pub fn integrate(&self, center: Vector3<f64>, f: impl Fn(Vector3<f64>) -> f64) -> f64 {
        self.offsets
            .iter()
            .zip(&self.weights)
            .map(|(o, w)| w * f(center + o))
            .sum()
    }

    pub fn integrate_vec(
        &self,
        center: Vector3<f64>,
        f: impl Fn(Vector3<f64>) -> Vector3<f64>,
    ) -> Vector3<f64> {
        self.offsets
            .iter()
            .zip(&self.weights)
            .fold(Vector3::zeros(), |acc, (o, w)| acc + *w * f(center + o))
    }

    pub fn integrate_mat(
        &self,
        center: Vector3<f64>,
        f: impl Fn(Vector3<f64>) -> Matrix3<f64>,
    ) -> Matrix3<f64> {
        self.offsets
            .iter()
            .zip(&self.weights)
            .fold(Matrix3::zeros(), |acc, (o, w)| acc + *w * f(center + o))
    }
}

/// Materialized absolute-node quadrature over `B(center, radius)`.
#[derive(Debug, Clone)]
pub struct BallQuadrature {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub nodes: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

/// Build the product quadrature over `B(p, radius)`.
pub fn ball_quadrature(
    p: Vector3<f64>,
    radius: f64,
    n_r: usize,
    n_mu: usize,
    n_phi: usize,
) -> Result<BallQuadrature> {
    let rule = BallRule::new(radius, BallOrders { n_r, n_mu, n_phi })?;
    Ok(BallQuadrature {
        center: p,
        radius,
        nodes: rule.offsets.iter().map(|o| p + o).collect(),
        weights: rule.weights,
    })
}

impl BallQuadrature {
    pub fn integrate(&self, f: impl Fn(Vector3<f64>) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(q, w)| w * f(*q))
            .sum()
    }
}

fn refine<T: Clone>(
    opts: &GammaOpts,
    radius: f64,
    eval: impl Fn(&BallRule) -> T,
    norm: impl Fn(&T, &T) -> f64,
    scale: impl Fn(&T) -> f64,
) -> Result<T> {
    let mut orders = opts.orders;
    let mut rule = BallRule::new(radius, orders)?;
    let mut prev = eval(&rule);
    for _ in 0..=opts.max_doublings {
        orders = orders.doubled();
        rule = BallRule::new(radius, orders)?;
        let cur = eval(&rule);
        let gap = norm(&prev, &cur);
        if gap <= opts.tol * scale(&cur).max(1.0) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::BallRefinementStalled {
        gap: norm(&prev, &eval(&rule)),
        tol: opts.tol,
    })
}

/// `Gamma(p) = int_{|q - p| < 1/|H0|} H1(q) dq`, with automatic order doubling
/// until two consecutive levels agree.
pub fn gamma(p: Vector3<f64>, field: &CurvatureField, h0: f64, opts: &GammaOpts) -> Result<f64> {
    if h0 == 0.0 {
        return Err(Error::InvalidParameter("h0 must be nonzero".into()));
    }
    refine::<f64>(
        opts,
        1.0 / h0.abs(),
        |rule| rule.integrate(p, |q| field.value(q)),
        |a, b| (a - b).abs(),
        |v| v.abs(),
    )
}

/// Gradient of `Gamma` by quadrature of `grad H1` over the ball.
pub fn gamma_gradient(
    p: Vector3<f64>,
    field: &CurvatureField,
    h0: f64,
    opts: &GammaOpts,
) -> Result<Vector3<f64>> {
    if h0 == 0.0 {
        return Err(Error::InvalidParameter("h0 must be nonzero".into()));
    }
    refine::<Vector3<f64>>(
        opts,
        1.0 / h0.abs(),
        |rule| rule.integrate_vec(p, |q| field.gradient(q)),
        |a, b| (a - b).norm(),
        |v| v.norm(),
    )
}

/// Hessian of `Gamma` by quadrature of `Hess H1` over the ball.
pub fn gamma_hessian(
    p: Vector3<f64>,
    field: &CurvatureField,
    h0: f64,
    opts: &GammaOpts,
) -> Result<Matrix3<f64>> {
    if h0 == 0.0 {
        return Err(Error::InvalidParameter("h0 must be nonzero".into()));
    }
    refine::<Matrix3<f64>>(
        opts,
        1.0 / h0.abs(),
        |rule| rule.integrate_mat(p, |q| field.hessian(q)),
        |a, b| (a - b).norm(),
        |m| m.norm(),
    )
}

/// The two-sign hypothesis at a pair of centers: passes when
/// `Gamma(p1) > 0` and `Gamma(p2) < 0`.
pub fn check_h5(
    field: &CurvatureField,
    h0: f64,
    p1: Vector3<f64>,
    p2: Vector3<f64>,
    opts: &GammaOpts,
) -> Result<(f64, f64, bool)> {
    let g1 = gamma(p1, field, h0, opts)?;
    let g2 = gamma(p2, field, h0, opts)?;
    Ok((g1, g2, g1 > 0.0 && g2 < 0.0))
}

// ---------------------------------------------------------------------------
// Critical point search
// ---------------------------------------------------------------------------

/// Axis-aligned scan region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl ScanBox {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        if !(lo[0] < hi[0] && lo[1] < hi[1] && lo[2] < hi[2]) {
            return Err(Error::InvalidParameter(format!(
                "scan box must satisfy lo < hi per axis, got {lo:?}..{hi:?}"
            )));
        }
        Ok(ScanBox { lo, hi })
    }

    pub fn cube(half: f64) -> Self {
        ScanBox {
            lo: [-half; 3],
            hi: [half; 3],
        }
    }

    pub fn diameter(&self) -> f64 {
        let d = Vector3::new(
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        );
        d.norm()
    }

    pub fn contains_with_margin(&self, p: Vector3<f64>, margin: f64) -> bool {
        (0..3).all(|k| p[k] >= self.lo[k] - margin && p[k] <= self.hi[k] + margin)
    }

    pub fn grid_point(&self, n: usize, idx: [usize; 3]) -> Vector3<f64> {
        let t = |k: usize| {
            if n == 1 {
                0.5 * (self.lo[k] + self.hi[k])
            } else {
                self.lo[k] + (self.hi[k] - self.lo[k]) * idx[k] as f64 / (n - 1) as f64
            }
        };
        Vector3::new(t(0), t(1), t(2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    Min,
    Max,
    Saddle,
    Degenerate,
}

/// One classified critical point of `Gamma`.
#[derive(Debug, Clone, Serialize)]
pub struct GammaCritical {
    pub location: [f64; 3],
    pub value: f64,
    pub grad_norm: f64,
    pub hessian_eigs: [f64; 3],
    pub kind: CriticalKind,
}

/// One scan node (also the CSV landscape row).
#[derive(Debug, Clone, Serialize)]
pub struct ScanNode {
    pub p: [f64; 3],
    pub gamma: f64,
    pub grad: [f64; 3],
}

/// Scan values, refined critical points, and bookkeeping for one landscape run.
#[derive(Debug, Clone, Serialize)]
pub struct MelnikovReport {
    pub scan_box: ScanBox,
    pub resolution: usize,
    pub orders: BallOrders,
    pub flat_landscape: bool,
    pub skipped_seeds: usize,
    pub nodes: Vec<ScanNode>,
    pub critical_points: Vec<GammaCritical>,
}

#[derive(Debug, Clone, Copy)]
pub struct GammaSearchOpts {
    pub gamma: GammaOpts,
    pub resolution: usize,
    pub grad_tol: f64,
    pub max_newton: usize,
    pub dedupe_distance: f64,
    /// Eigenvalues below this fraction of the Hessian trace magnitude mark the
    /// point as degenerate.
    pub degenerate_rel: f64,
    /// Landscape treated as flat when both the values and the gradients stay
    /// below this level over the whole scan.
    pub flat_tol: f64,
}

impl Default for GammaSearchOpts {
    fn default() -> Self {
        GammaSearchOpts {
            gamma: GammaOpts::default(),
            resolution: 17,
            grad_tol: 1e-10,
            max_newton: 60,
            dedupe_distance: 1e-4,
            degenerate_rel: 1e-6,
            flat_tol: 1e-12,
        }
    }
}

/// Classify a symmetric Hessian by eigenvalue signs.
pub fn classify_hessian(eigs: [f64; 3], degenerate_rel: f64) -> CriticalKind {
    let trace_mag = (eigs[0] + eigs[1] + eigs[2]).abs().max(1e-300);
    if eigs.iter().any(|e| e.abs() < degenerate_rel * trace_mag) {
        return CriticalKind::Degenerate;
    }
    let pos = eigs.iter().filter(|e| **e > 0.0).count();
    match pos {
        3 => CriticalKind::Min,
        0 => CriticalKind::Max,
        _ => CriticalKind::Saddle,
    }
}

/// Coarse scan plus Newton refinement of `grad Gamma` from extremal and
/// small-gradient cells. Failed seeds are skipped and counted, never fatal.
pub fn find_gamma_critical(
    field: &CurvatureField,
    h0: f64,
    scan_box: ScanBox,
    opts: &GammaSearchOpts,
) -> Result<MelnikovReport> {
    if h0 == 0.0 {
        return Err(Error::InvalidParameter("h0 must be nonzero".into()));
    }
    let n = opts.resolution.max(2);
    let total = n * n * n;
    let nodes: Vec<ScanNode> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let idx = [flat / (n * n), (flat / n) % n, flat % n];
            let p = scan_box.grid_point(n, idx);
            let g = gamma(p, field, h0, &opts.gamma)
                .expect("scan gamma evaluation failed to refine");
            let dg = gamma_gradient(p, field, h0, &opts.gamma)
                .expect("scan gradient evaluation failed to refine");
            ScanNode {
                p: [p.x, p.y, p.z],
                gamma: g,
                grad: [dg.x, dg.y, dg.z],
            }
        })
        .collect();

    let max_val = nodes.iter().map(|s| s.gamma.abs()).fold(0.0_f64, f64::max);
    let max_grad = nodes
        .iter()
        .map(|s| Vector3::from(s.grad).norm())
        .fold(0.0_f64, f64::max);
    if max_val < opts.flat_tol && max_grad < opts.flat_tol {
        return Ok(MelnikovReport {
            scan_box,
            resolution: n,
            orders: opts.gamma.orders,
            flat_landscape: true,
            skipped_seeds: 0,
            nodes,
            critical_points: Vec::new(),
        });
    }

    // Seeds: 6-neighborhood extrema of the value and local minima of |grad|.
    // Nodes where both the value and the gradient have decayed to a negligible
    // fraction of the landscape scale cannot seed a genuine critical point.
    let diam = scan_box.diameter();
    let landscape_floor = 1e-9 * max_val;
    let at = |i: usize, j: usize, k: usize| &nodes[(i * n + j) * n + k];
    let mut seeds: Vec<Vector3<f64>> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let c = at(i, j, k);
                let gv = c.gamma;
                let gn = Vector3::from(c.grad).norm();
                if gv.abs().max(diam * gn) <= landscape_floor {
                    continue;
                }
                let mut is_max = true;
                let mut is_min = true;
                let mut is_flat = true;
                let mut visit = |ni: usize, nj: usize, nk: usize| {
                    let o = at(ni, nj, nk);
                    if o.gamma >= gv {
                        is_max = false;
                    }
                    if o.gamma <= gv {
                        is_min = false;
                    }
                    if Vector3::from(o.grad).norm() < gn {
                        is_flat = false;
                    }
                };
                if i > 0 {
                    visit(i - 1, j, k);
                }
                if i + 1 < n {
                    visit(i + 1, j, k);
                }
                if j > 0 {
                    visit(i, j - 1, k);
                }
                if j + 1 < n {
                    visit(i, j + 1, k);
                }
                if k > 0 {
                    visit(i, j, k - 1);
                }
                if k + 1 < n {
                    visit(i, j, k + 1);
                }
                if is_max || is_min || is_flat {
                    seeds.push(Vector3::from(c.p));
                }
            }
        }
    }

    let max_step = 0.25 * scan_box.diameter();
    let refined: Vec<Option<GammaCritical>> = seeds
        .par_iter()
        .map(|seed| {
            refine_gamma_seed(field, h0, *seed, &scan_box, max_step, landscape_floor, opts)
        })
        .collect();
    let skipped = refined.iter().filter(|r| r.is_none()).count();
    let mut found: Vec<GammaCritical> = refined.into_iter().flatten().collect();

    // Deterministic order, then dedupe nearby hits.
    found.sort_by(|a, b| {
        a.location
            .partial_cmp(&b.location)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut critical_points: Vec<GammaCritical> = Vec::new();
    for c in found {
        let dup = critical_points.iter().any(|o| {
            (Vector3::from(o.location) - Vector3::from(c.location)).norm()
                < opts.dedupe_distance
        });
        if !dup {
            critical_points.push(c);
        }
    }

    Ok(MelnikovReport {
        scan_box,
        resolution: n,
        orders: opts.gamma.orders,
        flat_landscape: false,
        skipped_seeds: skipped,
        nodes,
        critical_points,
    })
}

fn refine_gamma_seed(
    field: &CurvatureField,
    h0: f64,
    seed: Vector3<f64>,
    scan_box: &ScanBox,
    max_step: f64,
    landscape_floor: f64,
    opts: &GammaSearchOpts,
) -> Option<GammaCritical> {
    let mut p = seed;
    for _ in 0..opts.max_newton {
        let g = gamma_gradient(p, field, h0, &opts.gamma).ok()?;
        if g.norm() <= opts.grad_tol {
            let h = gamma_hessian(p, field, h0, &opts.gamma).ok()?;
            let eigs_v = h.symmetric_eigenvalues();
            let mut eigs = [eigs_v[0], eigs_v[1], eigs_v[2]];
            eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if !scan_box.contains_with_margin(p, 0.05 * scan_box.diameter()) {
                return None;
            }
            let value = gamma(p, field, h0, &opts.gamma).ok()?;
            // Reject flat-tail artifacts: both the value and the curvature
            // must clear a tiny fraction of the landscape scale (so genuine
            // level-zero saddles with finite curvature survive).
            let diam = scan_box.diameter();
            let curvature = eigs.iter().map(|e| e.abs()).fold(0.0_f64, f64::max);
            if value.abs() <= landscape_floor
                && curvature * diam * diam <= landscape_floor
            {
                return None;
            }
            return Some(GammaCritical {
                location: [p.x, p.y, p.z],
                value,
                grad_norm: g.norm(),
                hessian_eigs: eigs,
                kind: classify_hessian(eigs, opts.degenerate_rel),
            });
        }
        let h = gamma_hessian(p, field, h0, &opts.gamma).ok()?;
        let step = h.lu().solve(&g)?;
        let mut step = -step;
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        if step.norm() > max_step {
            step *= max_step / step.norm();
        }
        p += step;
        if !scan_box.contains_with_margin(p, scan_box.diameter()) {
            return None;
        }
    }
    None
}

/// CSV landscape rows: `px,py,pz,gamma,gx,gy,gz`, header first.
pub fn landscape_csv(report: &MelnikovReport) -> String {
    let mut out = String::from("px,py,pz,gamma,gx,gy,gz\n");
    for s in &report.nodes {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.p[0], s.p[1], s.p[2], s.gamma, s.grad[0], s.grad[1], s.grad[2]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{gaussian_bump, linear_combination, radial_well_default, CurvatureField};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn two_sign_field() -> CurvatureField {
        linear_combination(vec![
            (1.0, gaussian_bump(1.0, Vector3::new(3.0, 0.0, 0.0), 1.0).unwrap()),
            (-1.0, gaussian_bump(1.0, Vector3::new(-3.0, 0.0, 0.0), 1.0).unwrap()),
        ])
        .unwrap()
    }

    #[test]
    fn ball_quadrature_moments() {
        let p = Vector3::new(0.7, -1.0, 2.0);
        let q = ball_quadrature(p, 1.0, 8, 8, 16).unwrap();
        let vol = 4.0 * PI / 3.0;
        let w: f64 = q.weights.iter().sum();
        assert!(((w - vol) / vol).abs() < 1e-12);
        for (node, _) in q.nodes.iter().zip(&q.weights) {
            assert!((node - p).norm() <= 1.0 + 1e-12);
        }
        // Centroid identity and radial second moment.
        let m1 = q.integrate(|x| x[0]);
        assert!((m1 - vol * p[0]).abs() < 1e-12);
        let m2 = q.integrate(|x| (x - p).norm_squared());
        assert!((m2 - vol * 3.0 / 5.0).abs() < 1e-12);
        assert!(ball_quadrature(p, 1.0, 1, 8, 16).is_err());
    }

    #[test]
    fn gamma_constant_field_gives_ball_volume() {
        let f = CurvatureField::Constant(2.5);
        let opts = GammaOpts::default();
        for h0 in [1.0_f64, 2.0, -0.5] {
            let v = gamma(Vector3::new(1.0, 2.0, 3.0), &f, h0, &opts).unwrap();
            let expect = 2.5 * 4.0 * PI / (3.0 * h0.abs().powi(3));
            assert!(((v - expect) / expect).abs() < 1e-12, "h0={h0}");
        }
    }

    #[test]
    fn gamma_wide_bump_approaches_ball_volume_and_matches_radial_oracle() {
        // Radial 1d oracle: Gamma(0) = 4 pi int_0^1 r^2 H(r) dr.
        let s = 10.0;
        let f = gaussian_bump(1.0, Vector3::zeros(), s).unwrap();
        let v = gamma(Vector3::zeros(), &f, 1.0, &GammaOpts::default()).unwrap();
        let (xr, wr) = crate::sphere::gauss_legendre(64);
        let oracle: f64 = xr
            .iter()
            .zip(&wr)
            .map(|(x, w)| {
                let r = 0.5 * (x + 1.0);
                0.5 * w * 4.0 * PI * r * r * (-r * r / (s * s)).exp()
            })
            .sum();
        assert!((v - oracle).abs() < 1e-10);
        let vol = 4.0 * PI / 3.0;
        assert!(v < vol && v > vol * (1.0 - 3.0 / (s * s)));
    }

    #[test]
    fn gamma_odd_field_vanishes_at_origin() {
        let f = CurvatureField::Custom {
            eval: Arc::new(|q: Vector3<f64>| q.x * (-q.norm_squared()).exp()),
            grad: None,
            hess: None,
            decay: crate::fields::DecayHint::Decaying,
            label: "odd".into(),
        };
        let v = gamma(Vector3::zeros(), &f, 1.0, &GammaOpts::default()).unwrap();
        assert!(v.abs() < 1e-13);
    }

    #[test]
    fn gamma_gradient_matches_finite_differences() {
        let f = gaussian_bump(1.0, Vector3::new(0.5, -0.5, 1.0), 1.0).unwrap();
        let opts = GammaOpts::default();
        let h = 1e-4;
        for k in 0..10u64 {
            let hp = [
                (k as f64 * 0.37).sin(),
                (k as f64 * 0.71 + 1.0).cos(),
                (k as f64 * 0.13).sin(),
            ];
            let p = Vector3::new(2.0 * hp[0], 2.0 * hp[1], 2.0 * hp[2]);
            let g = gamma_gradient(p, &f, 1.0, &opts).unwrap();
            let mut fd = Vector3::zeros();
            for a in 0..3 {
                let mut hi = p;
                let mut lo = p;
                hi[a] += h;
                lo[a] -= h;
                fd[a] = (gamma(hi, &f, 1.0, &opts).unwrap() - gamma(lo, &f, 1.0, &opts).unwrap())
                    / (2.0 * h);
            }
            let scale = g.norm().max(1e-6);
            assert!((g - fd).norm() / scale < 1e-6, "p={p:?}");
        }
    }

    #[test]
    fn gamma_hessian_positive_definite_for_well() {
        let f = radial_well_default();
        let h = gamma_hessian(Vector3::zeros(), &f, 1.0, &GammaOpts::default()).unwrap();
        let eigs = h.symmetric_eigenvalues();
        assert!(eigs.min() > 0.0, "eigs {eigs:?}");
        let g = gamma_gradient(Vector3::zeros(), &CurvatureField::Constant(3.0), 1.0, &GammaOpts::default())
            .unwrap();
        assert!(g.norm() < 1e-13);
    }

    #[test]
    fn gamma_is_radial_for_radial_fields() {
        let f = radial_well_default();
        let opts = GammaOpts::default();
        let r = 1.7;
        let base = gamma(Vector3::new(r, 0.0, 0.0), &f, 1.0, &opts).unwrap();
        for k in 0..10 {
            let a = 0.37 * k as f64 + 0.1;
            let b = 0.71 * k as f64;
            let dir = Vector3::new(a.cos() * b.sin(), a.sin() * b.sin(), b.cos());
            let v = gamma(r * dir, &f, 1.0, &opts).unwrap();
            assert!((v - base).abs() < 1e-10, "rotation {k}: {v} vs {base}");
        }
    }

    #[test]
    fn order_doubling_stays_within_tolerance_on_shipped_fields() {
        let fields = vec![
            gaussian_bump(1.0, Vector3::zeros(), 1.0).unwrap(),
            radial_well_default(),
            two_sign_field(),
        ];
        let base = BallOrders::default();
        for f in &fields {
            for p in [Vector3::zeros(), Vector3::new(2.0, -1.0, 0.5)] {
                let r1 = BallRule::new(1.0, base).unwrap();
                let r2 = BallRule::new(1.0, base.doubled()).unwrap();
                let v1 = r1.integrate(p, |q| f.value(q));
                let v2 = r2.integrate(p, |q| f.value(q));
                assert!((v1 - v2).abs() <= 1e-9 * v2.abs().max(1.0), "{f:?} at {p:?}");
            }
        }
    }

    #[test]
    fn single_bump_landscape_has_one_maximum() {
        let f = gaussian_bump(1.0, Vector3::new(0.3, -0.2, 0.5), 1.0).unwrap();
        let opts = GammaSearchOpts {
            resolution: 9,
            ..Default::default()
        };
        let report =
            find_gamma_critical(&f, 1.0, ScanBox::cube(3.0), &opts).unwrap();
        assert!(!report.flat_landscape);
        let maxima: Vec<_> = report
            .critical_points
            .iter()
            .filter(|c| c.kind == CriticalKind::Max)
            .collect();
        assert_eq!(maxima.len(), 1, "{:#?}", report.critical_points);
        let loc = Vector3::from(maxima[0].location);
        assert!((loc - Vector3::new(0.3, -0.2, 0.5)).norm() < 1e-6);
        assert!(maxima[0].grad_norm <= 1e-8);
    }

    #[test]
    fn two_sign_field_has_opposite_extrema_and_h5_passes() {
        let f = two_sign_field();
        let opts = GammaSearchOpts {
            resolution: 9,
            ..Default::default()
        };
        let report = find_gamma_critical(&f, 1.0, ScanBox::cube(5.0), &opts).unwrap();
        let max = report
            .critical_points
            .iter()
            .find(|c| c.kind == CriticalKind::Max)
            .expect("max");
        let min = report
            .critical_points
            .iter()
            .find(|c| c.kind == CriticalKind::Min)
            .expect("min");
        assert!(max.value > 0.0 && min.value < 0.0);

        let (g1, g2, pass) = check_h5(
            &f,
            1.0,
            Vector3::new(3.0, 0.0, 0.0),
            Vector3::new(-3.0, 0.0, 0.0),
            &GammaOpts::default(),
        )
        .unwrap();
        assert!(pass && g1 > 0.0 && g2 < 0.0);

        // Same-sign centers and the zero field fail.
        let bump = gaussian_bump(1.0, Vector3::zeros(), 1.0).unwrap();
        let (_, _, pass) = check_h5(
            &bump,
            1.0,
            Vector3::new(0.5, 0.0, 0.0),
            Vector3::new(-0.5, 0.0, 0.0),
            &GammaOpts::default(),
        )
        .unwrap();
        assert!(!pass);
        let zero = linear_combination(vec![(1.0, bump.clone()), (-1.0, bump)]).unwrap();
        let (_, _, pass) = check_h5(
            &zero,
            1.0,
            Vector3::new(3.0, 0.0, 0.0),
            Vector3::new(-3.0, 0.0, 0.0),
            &GammaOpts::default(),
        )
        .unwrap();
        assert!(!pass);
    }

    #[test]
    fn zero_field_reports_flat_landscape() {
        let bump = gaussian_bump(1.0, Vector3::zeros(), 1.0).unwrap();
        let zero = linear_combination(vec![(1.0, bump.clone()), (-1.0, bump)]).unwrap();
        let opts = GammaSearchOpts {
            resolution: 5,
            ..Default::default()
        };
        let report = find_gamma_critical(&zero, 1.0, ScanBox::cube(2.0), &opts).unwrap();
        assert!(report.flat_landscape);
        assert!(report.critical_points.is_empty());
    }

    #[test]
    fn critical_points_commute_with_normalization() {
        // Report for (H1, h0) and for (normalized, 1) are related by p -> h0 p.
        let h0 = 2.0;
        let f = gaussian_bump(1.0, Vector3::new(0.4, 0.1, -0.3), 1.0).unwrap();
        let fnorm = crate::fields::normalize_h0(h0, f.clone()).unwrap();
        let opts = GammaSearchOpts {
            resolution: 7,
            ..Default::default()
        };
        let a = find_gamma_critical(&f, h0, ScanBox::cube(2.0), &opts).unwrap();
        let b = find_gamma_critical(
            &fnorm,
            1.0,
            ScanBox::new([-4.0; 3], [4.0; 3]).unwrap(),
            &opts,
        )
        .unwrap();
        assert!(!a.critical_points.is_empty());
        assert_eq!(a.critical_points.len(), b.critical_points.len());
        for (ca, cb) in a.critical_points.iter().zip(&b.critical_points) {
            let pa = Vector3::from(ca.location);
            let pb = Vector3::from(cb.location);
            assert!((h0 * pa - pb).norm() < 1e-6, "{pa:?} {pb:?}");
        }
    }

    #[test]
    fn landscape_csv_shape() {
        let f = gaussian_bump(1.0, Vector3::zeros(), 1.0).unwrap();
        let opts = GammaSearchOpts {
            resolution: 3,
            ..Default::default()
        };
        let report = find_gamma_critical(&f, 1.0, ScanBox::cube(1.0), &opts).unwrap();
        let csv = landscape_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "px,py,pz,gamma,gx,gy,gz");
        assert_eq!(lines.len(), 1 + 27);
    }
}
