//! The constrained correction `eta(eps, p)`: fixed point of
//! `T(x) = x - L^{-1} F(eps, p, x)` with the bordered operator frozen at the
//! base bubble (picard mode) or refreshed at the current iterate (newton mode).

use nalgebra::{DVector, SVector, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::CurvatureField;
use crate::functionals::{
    assemble_hessian, energy, gradient_pairings, EnergyBreakdown, Workspace,
};
use crate::sphere::{MapS2R3, SpectralField};

use super::bordered::{assemble_bordered, bordered_matrix, factorize, BorderedOperator};
use super::frame::{tangent_frame, TangentFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    Picard,
    Newton,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOpts {
    pub tol: f64,
    pub max_iter: usize,
    pub mode: SolveMode,
    /// Above this `|eps|` the result is labeled `outside_validation`.
    pub eps_ceiling: f64,
}

impl Default for SolveOpts {
    fn default() -> Self {
        SolveOpts {
            tol: 1e-10,
            max_iter: 60,
            mode: SolveMode::Picard,
            eps_ceiling: 0.2,
        }
    }
}

/// Converged solver state: the correction and its multipliers.
#[derive(Debug, Clone)]
pub struct ReductionState {
    pub eps: f64,
    pub p: Vector3<f64>,
    pub eta: MapS2R3,
    pub eta_flat: DVector<f64>,
    pub lambda: SVector<f64, 6>,
    pub alpha: Vector3<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub update_norms: Vec<f64>,
    pub eta_w13: f64,
    pub outside_validation: bool,
    pub mode: SolveMode,
}

impl ReductionState {
    /// Full unknown vector (correction + multipliers), e.g. for warm starts.
    pub fn full_x(&self) -> DVector<f64> {
        let n = self.eta_flat.len();
        let mut x = DVector::zeros(n + 9);
        x.rows_mut(0, n).copy_from(&self.eta_flat);
        for i in 0..6 {
            x[n + i] = self.lambda[i];
        }
        for k in 0..3 {
            x[n + 6 + k] = self.alpha[k];
        }
        x
    }

    /// Largest constraint violation: Dirichlet pairings with the frame and the
    /// mean value of the correction.
    pub fn constraint_residual(&self, reductor: &Reductor) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..6 {
            worst = worst.max(
                reductor
                    .bordered
                    .b_cols
                    .column(i)
                    .dot(&self.eta_flat)
                    .abs(),
            );
        }
        for k in 0..3 {
            worst = worst.max(
                reductor
                    .bordered
                    .c_cols
                    .column(k)
                    .dot(&self.eta_flat)
                    .abs(),
            );
        }
        worst
    }
}

/// Solver context bound to one grid: the base bubble, the tangent frame, and
/// the factorized bordered operator (independent of `eps` and `p`).
pub struct Reductor {
    pub ws: Workspace,
    pub base: MapS2R3,
    base_flat: DVector<f64>,
    pub frame: TangentFrame,
    pub bordered: BorderedOperator,
}

impl Reductor {
    pub fn new(ws: Workspace) -> Result<Self> {
        let base = ws.base_bubble()?;
        let base_flat = ws.flatten(base.spectral());
        let frame = tangent_frame(&ws)?;
        let bordered = assemble_bordered(&ws, &frame)?;
        Ok(Reductor {
            ws,
            base,
            base_flat,
            frame,
            bordered,
        })
    }

    pub fn degree(&self) -> usize {
        self.ws.degree()
    }

    /// The perturbed map `u0 + p + eta` for a flat correction vector.
    pub fn corrected_map(&self, p: Vector3<f64>, eta_flat: &DVector<f64>) -> Result<MapS2R3> {
        let n = self.ws.basis_dim();
        let nd = self.ws.scalar_dim();
        let mut u = DVector::zeros(n);
        u.copy_from(&self.base_flat);
        u += eta_flat;
        let shift = (4.0 * std::f64::consts::PI).sqrt();
        for k in 0..3 {
            u[k * nd + SpectralField::index(0, 0)] += p[k] * shift;
        }
        self.ws.map_from_flat(&u)
    }

    /// `F(eps, p, eta, lambda, alpha)`: the constrained first-variation residual
    /// paired against every basis function, followed by the nine constraints.
    fn eval_f(
        &self,
        eps: f64,
        p: Vector3<f64>,
        x: &DVector<f64>,
        field: &CurvatureField,
    ) -> Result<DVector<f64>> {
        let n = self.ws.basis_dim();
        let eta = DVector::from(x.rows(0, n));
        let u = self.corrected_map(p, &eta)?;
        let g = gradient_pairings(&self.ws, &u, eps, field)?;
        let mut f = DVector::zeros(n + 9);
        {
            let mut f1 = f.rows_mut(0, n);
            f1.copy_from(&g);
            for i in 0..6 {
                let lam = x[n + i];
                if lam != 0.0 {
                    f1.axpy(-lam, &self.bordered.b_cols.column(i), 1.0);
                }
            }
            for k in 0..3 {
                let al = x[n + 6 + k];
                if al != 0.0 {
                    f1.axpy(-al, &self.bordered.c_cols.column(k), 1.0);
                }
            }
        }
        for i in 0..6 {
            f[n + i] = self.bordered.b_cols.column(i).dot(&eta);
        }
        for k in 0..3 {
            f[n + 6 + k] = self.bordered.c_cols.column(k).dot(&eta);
        }
        Ok(f)
    }

    pub fn solve_eta(
        &self,
        eps: f64,
        p: Vector3<f64>,
        field: &CurvatureField,
        opts: &SolveOpts,
    ) -> Result<ReductionState> {
        self.solve_eta_warm(eps, p, field, opts, None)
    }

    /// Solve with an optional warm start taken from a nearby solution.
    pub fn solve_eta_warm(
        &self,
        eps: f64,
        p: Vector3<f64>,
        field: &CurvatureField,
        opts: &SolveOpts,
        warm: Option<&ReductionState>,
    ) -> Result<ReductionState> {
        let n = self.ws.basis_dim();
        if eps == 0.0 {
            // The base bubble is an exact critical point for every translation.
            let eta_flat = DVector::zeros(n);
            let eta = self.ws.map_from_flat(&eta_flat)?;
            return Ok(ReductionState {
                eps,
                p,
                eta,
                eta_flat,
                lambda: SVector::zeros(),
                alpha: Vector3::zeros(),
                iterations: 1,
                converged: true,
                update_norms: vec![0.0],
                eta_w13: 0.0,
                outside_validation: false,
                mode: opts.mode,
            });
        }

        let mut x = match warm {
            Some(state) => state.full_x(),
            None => DVector::zeros(n + 9),
        };
        let mut update_norms: Vec<f64> = Vec::new();
        let mut converged = false;
        let mut iterations = 0;

        for it in 1..=opts.max_iter {
            iterations = it;
            let f = self.eval_f(eps, p, &x, field)?;
            let delta = match opts.mode {
                SolveMode::Picard => self.bordered.solve(&f)?,
                SolveMode::Newton => {
                    let eta = DVector::from(x.rows(0, n));
                    let u = self.corrected_map(p, &eta)?;
                    let a = assemble_hessian(&self.ws, Some((&u, field)), eps)?;
                    let full =
                        bordered_matrix(&a, &self.bordered.b_cols, &self.bordered.c_cols);
                    let op = factorize(
                        full,
                        n,
                        self.bordered.b_cols.clone(),
                        self.bordered.c_cols.clone(),
                    )?;
                    op.solve(&f)?
                }
            };
            x -= &delta;
            let un = delta.norm();
            update_norms.push(un);
            if !un.is_finite() {
                return Err(Error::ContractionFailure {
                    iterations: it,
                    growth_steps: 1,
                    history: update_norms,
                });
            }
            if un <= opts.tol {
                converged = true;
                break;
            }
            // Divergence: update norms strictly growing over 5 consecutive steps.
            let k = update_norms.len();
            if k >= 6 {
                let tail = &update_norms[k - 6..];
                if tail.windows(2).all(|w| w[1] > w[0]) {
                    return Err(Error::ContractionFailure {
                        iterations: it,
                        growth_steps: 5,
                        history: update_norms,
                    });
                }
            }
        }

        if !converged {
            let last = update_norms.last().copied().unwrap_or(f64::NAN);
            return Err(Error::NonConvergence {
                iterations,
                last,
                history: update_norms,
            });
        }

        let eta_flat = DVector::from(x.rows(0, n));
        let eta = self.ws.map_from_flat(&eta_flat)?;
        let eta_w13 = crate::diagnostics::w1s_norm(&self.ws, &eta, 3.0)?;
        let mut lambda = SVector::<f64, 6>::zeros();
        for i in 0..6 {
            lambda[i] = x[n + i];
        }
        let alpha = Vector3::new(x[n + 6], x[n + 7], x[n + 8]);
        Ok(ReductionState {
            eps,
            p,
            eta,
            eta_flat,
            lambda,
            alpha,
            iterations,
            converged,
            update_norms,
            eta_w13,
            outside_validation: eps.abs() > opts.eps_ceiling,
            mode: opts.mode,
        })
    }

    /// Strong-form check of the correction equation satisfied by `eta`:
    /// `Lap eta = 2 J(u0 + eta) - 2 J(u0) + 2 eps H(u) J(u0 + eta)
    ///            + sum_i lambda_i Lap tau_i - alpha`,
    /// returning the `L^2` norm of the defect on the de-aliased grid.
    pub fn eta_equation_residual(
        &self,
        state: &ReductionState,
        field: &CurvatureField,
    ) -> Result<f64> {
        let ws = &self.ws;
        let lp = ws.pad.degree();
        let npad = ws.pad.n_nodes();

        let base_plus_eta = self.base.add_scaled(&state.eta, 1.0)?;
        let pm = ws.pad_map(&base_plus_eta)?;
        let pm0 = ws.pad_map(&self.base)?;

        // Lap eta and Lap tau_i synthesized on the de-aliased grid.
        let mut lap_eta = Vec::with_capacity(3);
        for c in state.eta.spectral() {
            lap_eta.push(ws.pad.synthesize(&c.laplace_beltrami().padded_to(lp))?);
        }
        let mut lap_tau = Vec::with_capacity(6);
        for t in &self.frame.tau {
            let mut comps = Vec::with_capacity(3);
            for c in t.spectral() {
                comps.push(ws.pad.synthesize(&c.laplace_beltrami().padded_to(lp))?);
            }
            lap_tau.push(comps);
        }

        let mut sq = crate::sphere::GridField::zeros(lp);
        for k in 0..npad {
            let j_pert = pm.area_form_at(k);
            let j_base = pm0.area_form_at(k);
            let h = field.value(pm.value_at(k) + state.p);
            let mut rhs = 2.0 * j_pert - 2.0 * j_base + 2.0 * state.eps * h * j_pert
                - state.alpha;
            for (i, lt) in lap_tau.iter().enumerate() {
                rhs += state.lambda[i]
                    * Vector3::new(lt[0].values[k], lt[1].values[k], lt[2].values[k]);
            }
            let lap = Vector3::new(
                lap_eta[0].values[k],
                lap_eta[1].values[k],
                lap_eta[2].values[k],
            );
            sq.values[k] = (lap - rhs).norm_squared();
        }
        Ok(ws.pad.integrate(&sq).max(0.0).sqrt())
    }

    /// The reduced functional `Phi_eps(p) = E_eps(u0 + p + eta(eps, p))`.
    pub fn phi(
        &self,
        eps: f64,
        p: Vector3<f64>,
        field: &CurvatureField,
        opts: &SolveOpts,
    ) -> Result<(f64, ReductionState)> {
        self.phi_warm(eps, p, field, opts, None)
    }

    pub fn phi_warm(
        &self,
        eps: f64,
        p: Vector3<f64>,
        field: &CurvatureField,
        opts: &SolveOpts,
        warm: Option<&ReductionState>,
    ) -> Result<(f64, ReductionState)> {
        let state = self.solve_eta_warm(eps, p, field, opts, warm)?;
        let e = self.energy_of_state(&state, field)?;
        Ok((e.total, state))
    }

    pub fn energy_of_state(
        &self,
        state: &ReductionState,
        field: &CurvatureField,
    ) -> Result<EnergyBreakdown> {
        let u = self.corrected_map(state.p, &state.eta_flat)?;
        energy(&self.ws, &u, state.eps, field)
    }

    /// Full unprojected first-variation pairings at the corrected map.
    pub fn full_gradient_norm(
        &self,
        state: &ReductionState,
        field: &CurvatureField,
    ) -> Result<f64> {
        let u = self.corrected_map(state.p, &state.eta_flat)?;
        Ok(gradient_pairings(&self.ws, &u, state.eps, field)?.norm())
    }
}

/// One row of the second-order expansion table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpansionRow {
    pub eps: f64,
    pub phi: f64,
    pub gamma: f64,
    pub remainder: f64,
    pub remainder_over_eps2: f64,
}

impl Reductor {
    /// Table of `remainder(eps) = Phi_eps(p) - 4 pi / 3 + 2 eps Gamma(p)` over
    /// an `eps` list; bounded `remainder / eps^2` witnesses the second-order
    /// expansion of the reduced functional.
    pub fn expansion_check(
        &self,
        p: Vector3<f64>,
        field: &CurvatureField,
        eps_list: &[f64],
        opts: &SolveOpts,
    ) -> Result<Vec<ExpansionRow>> {
        let e0 = 4.0 * std::f64::consts::PI / 3.0;
        let gamma = crate::melnikov::gamma(p, field, 1.0, &crate::melnikov::GammaOpts::default())?;
        let mut rows = Vec::with_capacity(eps_list.len());
        for &eps in eps_list {
            let (phi, _) = self.phi(eps, p, field, opts)?;
            let remainder = phi - e0 + 2.0 * eps * gamma;
            let ratio = if eps == 0.0 {
                0.0
            } else {
                remainder / (eps * eps)
            };
            rows.push(ExpansionRow {
                eps,
                phi,
                gamma,
                remainder,
                remainder_over_eps2: ratio,
            });
        }
        Ok(rows)
    }
}
