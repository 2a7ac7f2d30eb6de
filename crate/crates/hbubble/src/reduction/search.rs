//! Critical points of the reduced functional `Phi_eps` over the translation
//! parameter: finite-difference gradient with Richardson verification, the
//! exact multiplier identity `grad Phi = 4 pi alpha`, and a scan + Newton
//! search with mountain-pass style saddle seeding.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::CurvatureField;
use crate::melnikov::{classify_hessian, CriticalKind, ScanBox};

use super::solver::{ReductionState, Reductor, SolveOpts};

/// Central-difference gradient of `Phi_eps` with a half-step Richardson check.
#[derive(Debug, Clone, Copy)]
pub struct PhiGradient {
    /// Richardson-extrapolated value `(4 g_{h/2} - g_h) / 3`.
    pub value: Vector3<f64>,
    pub coarse: Vector3<f64>,
    pub fine: Vector3<f64>,
    /// `|g_h - g_{h/2}|` relative to the gradient scale.
    pub rel_gap: f64,
    pub h: f64,
}

impl Reductor {
    /// Exact gradient of the reduced functional through the mean-value
    /// multiplier: differentiating the constraints in `p` kills every term of
    /// `dPhi/dp` except the pairing of the first variation with the constant
    /// directions, which equals `4 pi alpha`.
    pub fn phi_gradient_multiplier(state: &ReductionState) -> Vector3<f64> {
        4.0 * std::f64::consts::PI * state.alpha
    }

    /// Finite-difference gradient of `Phi_eps` at steps `h` and `h/2`.
    pub fn phi_gradient(
        &self,
        eps: f64,
        p: Vector3<f64>,
        field: &CurvatureField,
        h: f64,
        opts: &SolveOpts,
    ) -> Result<PhiGradient> {
        let (_, center) = self.phi_warm(eps, p, field, opts, None)?;
        let stencil = |step: f64| -> Result<Vector3<f64>> {
            let mut g = Vector3::zeros();
            for a in 0..3 {
                let mut hi = p;
                let mut lo = p;
                hi[a] += step;
                lo[a] -= step;
                let (fp, _) = self.phi_warm(eps, hi, field, opts, Some(&center))?;
                let (fm, _) = self.phi_warm(eps, lo, field, opts, Some(&center))?;
                g[a] = (fp - fm) / (2.0 * step);
            }
            Ok(g)
        };
        let coarse = stencil(h)?;
        let fine = stencil(0.5 * h)?;
        let value = (4.0 * fine - coarse) / 3.0;
        let rel_gap = (coarse - fine).norm() / value.norm().max(1e-10);
        Ok(PhiGradient {
            value,
            coarse,
            fine,
            rel_gap,
            h,
        })
    }

    /// Hessian of `Phi_eps` by central differences of the exact gradient
    /// `4 pi alpha(eps, p)`, symmetrized.
    pub fn phi_hessian(
        &self,
        eps: f64,
        p: Vector3<f64>,
        field: &CurvatureField,
        h: f64,
        opts: &SolveOpts,
        warm: Option<&ReductionState>,
    ) -> Result<Matrix3<f64>> {
        let mut m = Matrix3::zeros();
        for a in 0..3 {
            let mut hi = p;
            let mut lo = p;
            hi[a] += h;
            lo[a] -= h;
            let sp = self.solve_eta_warm(eps, hi, field, opts, warm)?;
            let sm = self.solve_eta_warm(eps, lo, field, opts, warm)?;
            let col = (Self::phi_gradient_multiplier(&sp)
                - Self::phi_gradient_multiplier(&sm))
                / (2.0 * h);
            m.set_column(a, &col);
        }
        Ok(0.5 * (m + m.transpose()))
    }
}

/// One classified critical point of the reduced functional.
#[derive(Debug, Clone)]
pub struct PhiCritical {
    pub p: Vector3<f64>,
    pub phi: f64,
    pub gamma: f64,
    pub eta_w13: f64,
    pub iterations: usize,
    pub kind: CriticalKind,
    pub hessian_eigs: [f64; 3],
    pub residual_l2: f64,
    pub full_gradient_norm: f64,
    pub state: ReductionState,
}

#[derive(Debug, Clone, Copy)]
pub struct PhiSearchOpts {
    pub solve: SolveOpts,
    pub scan_n: usize,
    /// Convergence threshold on `|grad Phi| = 4 pi |alpha|`.
    pub grad_tol: f64,
    pub max_newton: usize,
    pub hess_h: f64,
    pub dedupe_distance: f64,
    pub degenerate_rel: f64,
    /// Points with `|Phi - 4 pi / 3|` below this floor sit in the flat far
    /// region where the perturbation has decayed; the gradient is below
    /// tolerance there for the wrong reason, so such seeds and hits are
    /// discarded.
    pub phi_flat_tol: f64,
}

impl Default for PhiSearchOpts {
    fn default() -> Self {
        PhiSearchOpts {
            solve: SolveOpts::default(),
            scan_n: 9,
            grad_tol: 1e-9,
            max_newton: 50,
            hess_h: 1e-3,
            dedupe_distance: 1e-3,
            degenerate_rel: 1e-6,
            phi_flat_tol: 1e-8,
        }
    }
}

/// Search outcome: classified critical points plus seed bookkeeping.
#[derive(Debug)]
pub struct PhiSearchResult {
    pub critical_points: Vec<PhiCritical>,
    pub scan_failures: usize,
    pub skipped_seeds: usize,
}

impl Reductor {
    /// Coarse scan of `Phi_eps` over the box, Newton refinement from value
    /// extrema, then saddle seeds on segment midpoints between distinct
    /// refined points (a mountain-pass surrogate for the three-variable
    /// reduced functional).
    pub fn find_phi_critical(
        &self,
        eps: f64,
        field: &CurvatureField,
        scan_box: ScanBox,
        opts: &PhiSearchOpts,
    ) -> Result<PhiSearchResult> {
        let n = opts.scan_n.max(2);
        // Parallel over (i, j) lines, sequential and warm-started along k.
        let values: Vec<Option<f64>> = (0..n * n)
            .into_par_iter()
            .flat_map_iter(|line| {
                let (i, j) = (line / n, line % n);
                let mut warm: Option<ReductionState> = None;
                (0..n)
                    .map(move |k| {
                        let p = scan_box.grid_point(n, [i, j, k]);
                        match self.phi_warm(eps, p, field, &opts.solve, warm.as_ref()) {
                            Ok((v, state)) => {
                                warm = Some(state);
                                Some(v)
                            }
                            Err(_) => {
                                warm = None;
                                None
                            }
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let scan_failures = values.iter().filter(|v| v.is_none()).count();
        let e0 = 4.0 * std::f64::consts::PI / 3.0;

        // Local extrema over the 6-neighborhood (missing values excluded).
        let mut seeds: Vec<Vector3<f64>> = Vec::new();
        let val = |i: usize, j: usize, k: usize| values[(i * n + j) * n + k];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let Some(v) = val(i, j, k) else { continue };
                    // Flat far region: the perturbation has decayed, so noise
                    // extrema there never seed a genuine critical point.
                    if (v - e0).abs() <= opts.phi_flat_tol {
                        continue;
                    }
                    let mut is_max = true;
                    let mut is_min = true;
                    let mut visit = |vv: Option<f64>| {
                        if let Some(o) = vv {
                            if o >= v {
                                is_max = false;
                            }
                            if o <= v {
                                is_min = false;
                            }
                        }
                    };
                    if i > 0 {
                        visit(val(i - 1, j, k));
                    }
                    if i + 1 < n {
                        visit(val(i + 1, j, k));
                    }
                    if j > 0 {
                        visit(val(i, j - 1, k));
                    }
                    if j + 1 < n {
                        visit(val(i, j + 1, k));
                    }
                    if k > 0 {
                        visit(val(i, j, k - 1));
                    }
                    if k + 1 < n {
                        visit(val(i, j, k + 1));
                    }
                    if is_max || is_min {
                        seeds.push(scan_box.grid_point(n, [i, j, k]));
                    }
                }
            }
        }
        if seeds.is_empty() {
            return Err(Error::SearchFailed(
                "no extremal seeds found in the scan".into(),
            ));
        }

        let refine = |seed: Vector3<f64>| -> Option<PhiCritical> {
            self.refine_phi_seed(eps, field, seed, &scan_box, opts)
        };
        let first: Vec<Option<PhiCritical>> = seeds.par_iter().map(|s| refine(*s)).collect();
        let mut skipped = first.iter().filter(|r| r.is_none()).count();
        let mut points: Vec<PhiCritical> = first.into_iter().flatten().collect();
        points = dedupe_points(points, opts.dedupe_distance);

        // Saddle seeds between each pair of distinct refined points.
        let mut saddle_seeds = Vec::new();
        for a in 0..points.len() {
            for b in (a + 1)..points.len() {
                saddle_seeds.push(0.5 * (points[a].p + points[b].p));
            }
        }
        if !saddle_seeds.is_empty() {
            let second: Vec<Option<PhiCritical>> =
                saddle_seeds.par_iter().map(|s| refine(*s)).collect();
            skipped += second.iter().filter(|r| r.is_none()).count();
            points.extend(second.into_iter().flatten());
            points = dedupe_points(points, opts.dedupe_distance);
        }

        if points.is_empty() {
            return Err(Error::SearchFailed(format!(
                "every seed failed ({} seeds, {} scan failures)",
                seeds.len(),
                scan_failures
            )));
        }
        Ok(PhiSearchResult {
            critical_points: points,
            scan_failures,
            skipped_seeds: skipped,
        })
    }

    fn refine_phi_seed(
        &self,
        eps: f64,
        field: &CurvatureField,
        seed: Vector3<f64>,
        scan_box: &ScanBox,
        opts: &PhiSearchOpts,
    ) -> Option<PhiCritical> {
        let max_step = 0.25 * scan_box.diameter();
        let mut p = seed;
        let mut state = self.solve_eta(eps, p, field, &opts.solve).ok()?;
        for _ in 0..opts.max_newton {
            let g = Self::phi_gradient_multiplier(&state);
            if g.norm() <= opts.grad_tol {
                // Accept only inside the declared search region and outside
                // the flat far field.
                if !scan_box.contains_with_margin(p, 0.05 * scan_box.diameter()) {
                    return None;
                }
                let e0 = 4.0 * std::f64::consts::PI / 3.0;
                let phi = self.energy_of_state(&state, field).ok()?.total;
                if (phi - e0).abs() <= opts.phi_flat_tol {
                    return None;
                }
                return self.package_critical(eps, field, state, opts).ok();
            }
            let h = self
                .phi_hessian(eps, p, field, opts.hess_h, &opts.solve, Some(&state))
                .ok()?;
            let mut step = -(h.lu().solve(&g)?);
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
            state = self
                .solve_eta_warm(eps, p, field, &opts.solve, Some(&state))
                .ok()?;
        }
        None
    }

    fn package_critical(
        &self,
        eps: f64,
        field: &CurvatureField,
        state: ReductionState,
        opts: &PhiSearchOpts,
    ) -> Result<PhiCritical> {
        let p = state.p;
        let hess = self.phi_hessian(eps, p, field, opts.hess_h, &opts.solve, Some(&state))?;
        let ev = hess.symmetric_eigenvalues();
        let mut eigs = [ev[0], ev[1], ev[2]];
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let kind = classify_hessian(eigs, opts.degenerate_rel);
        let u = self.corrected_map(p, &state.eta_flat)?;
        let res = crate::functionals::residual(&self.ws, &u, eps, field)?;
        let full_grad = self.full_gradient_norm(&state, field)?;
        let (phi, _) = (
            crate::functionals::energy(&self.ws, &u, eps, field)?.total,
            (),
        );
        let gamma = crate::melnikov::gamma(p, field, 1.0, &crate::melnikov::GammaOpts::default())?;
        Ok(PhiCritical {
            p,
            phi,
            gamma,
            eta_w13: state.eta_w13,
            iterations: state.iterations,
            kind,
            hessian_eigs: eigs,
            residual_l2: res.l2,
            full_gradient_norm: full_grad,
            state,
        })
    }
}

fn dedupe_points(mut points: Vec<PhiCritical>, distance: f64) -> Vec<PhiCritical> {
    points.sort_by(|a, b| {
        (a.p.x, a.p.y, a.p.z)
            .partial_cmp(&(b.p.x, b.p.y, b.p.z))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<PhiCritical> = Vec::new();
    for c in points {
        if !out.iter().any(|o| (o.p - c.p).norm() < distance) {
            out.push(c);
        }
    }
    out
}
