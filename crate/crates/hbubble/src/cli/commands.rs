//! Experiment drivers: each command consumes a [`RunConfig`], writes
//! machine-readable artifacts into the output directory, and returns a report
//! whose `passed()` decides the process exit status.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::Serialize;

use crate::diagnostics::{self, BubbleReport, MeshFormat};
use crate::error::{Error, Result};
use crate::fields::{check_hypotheses, normalize_h0, CurvatureField, HypothesisReport};
use crate::functionals::{
    assemble_e0_hessian, dirichlet, energy, gauss_green_oracle, residual,
    volume_v1, weighted_volume, Workspace,
};
use crate::io_util::atomic_write;
use crate::melnikov::{
    self, find_gamma_critical, gamma, CriticalKind, GammaOpts, GammaSearchOpts, MelnikovReport,
    ScanBox,
};
use crate::reduction::{PhiCritical, PhiSearchOpts, Reductor, SolveOpts};
use crate::sphere::{MapS2R3, SpectralField};

use super::config::RunConfig;
use super::scenarios::Scenario;

const E0_LEVEL: f64 = 4.0 * PI / 3.0;

/// Run a closure inside a rayon pool bounded by the configured thread count.
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool");
    pool.install(f)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    package: &'a str,
    version: &'a str,
    threads: usize,
}

fn write_manifest(cfg: &RunConfig, command: &str) -> Result<()> {
    let manifest = Manifest {
        command,
        config_hash: cfg.hash(),
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        threads: cfg.threads,
    };
    let path = cfg.out.join("manifest.json");
    atomic_write(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    // Archive the canonical config next to the outputs.
    atomic_write(&cfg.out.join("run.cfg"), cfg.serialize().as_bytes())
}

fn solve_opts(cfg: &RunConfig) -> SolveOpts {
    SolveOpts {
        tol: cfg.solver_tol,
        max_iter: 60,
        mode: cfg.mode,
        eps_ceiling: cfg.eps_ceiling,
    }
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct ValidateReport {
    pub degree: usize,
    pub items: Vec<CheckItem>,
    pub passed: bool,
}

impl ValidateReport {
    pub fn passed(&self) -> bool {
        self.passed
    }
}

fn push_item(
    items: &mut Vec<CheckItem>,
    verbose: bool,
    name: &str,
    value: f64,
    tolerance: f64,
    detail: String,
) {
    let pass = value <= tolerance;
    println!(
        "{} {:<28} value {:>12.3e}  tol {:>8.1e}  {}",
        if pass { "PASS" } else { "FAIL" },
        name,
        value,
        tolerance,
        if verbose { detail.as_str() } else { "" }
    );
    items.push(CheckItem {
        name: name.into(),
        pass,
        value,
        tolerance,
        detail,
    });
}

/// The unperturbed verification suite: quadrature and transform exactness,
/// energy/volume/residual anchors of the base bubble, the kernel dimension of
/// the second variation, tangent-frame invariants, the divergence-theorem
/// cross-check of the weighted volume, and the constant-curvature extraction
/// oracle.
pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidateReport> {
    with_pool(cfg.threads, || cmd_validate_inner(cfg))
}

fn cmd_validate_inner(cfg: &RunConfig) -> Result<ValidateReport> {
    let ws = Workspace::with_pad_factor(cfg.degree, cfg.pad_factor)?;
    let u0 = ws.base_bubble()?;
    let mut items = Vec::new();
    let v = cfg.verbose;

    // Quadrature weights and node normalization.
    let total: f64 = (0..ws.grid.n_theta())
        .map(|i| ws.grid.node_weight(i) * ws.grid.n_phi() as f64)
        .sum();
    push_item(
        &mut items,
        v,
        "quadrature_weights",
        ((total - 4.0 * PI) / (4.0 * PI)).abs(),
        1e-12,
        format!("sum of node weights = {total}"),
    );
    let node_err = ws
        .grid
        .unit_points()
        .iter()
        .map(|p| ((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 1.0).abs())
        .fold(0.0_f64, f64::max);
    push_item(
        &mut items,
        v,
        "unit_nodes",
        node_err,
        1e-14,
        "max | |sigma| - 1 | over nodes".into(),
    );

    // Transform round trip on seeded band-limited data.
    let mut c = SpectralField::zeros(cfg.degree);
    let mut s = 0.173 + cfg.seed as f64 * 1e-3;
    for vv in &mut c.coeffs {
        s = (s * 997.0 + 0.1234).fract();
        *vv = 2.0 * s - 1.0;
    }
    let f = ws.grid.synthesize(&c)?;
    let c2 = ws.grid.analyze(&f, cfg.degree)?;
    let rt = c
        .coeffs
        .iter()
        .zip(&c2.coeffs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    push_item(
        &mut items,
        v,
        "transform_round_trip",
        rt,
        1e-12,
        "max coefficient defect of analyze(synthesize(c))".into(),
    );

    // Orthonormality sample.
    let mut ortho = 0.0_f64;
    let probes = [(0usize, 0isize), (1, 0), (2, 1), (3, -2), (4, 4)];
    for (l1, m1) in probes {
        for (l2, m2) in probes {
            if l1 > cfg.degree || l2 > cfg.degree {
                continue;
            }
            let (y1, _, _) = ws.grid.harmonic_with_derivatives(l1, m1);
            let (y2, _, _) = ws.grid.harmonic_with_derivatives(l2, m2);
            let ip = ws.grid.inner(&y1, &y2);
            let expect = if (l1, m1) == (l2, m2) { 1.0 } else { 0.0 };
            ortho = ortho.max((ip - expect).abs());
        }
    }
    push_item(
        &mut items,
        v,
        "orthonormality",
        ortho,
        1e-11,
        "harmonic inner products vs identity".into(),
    );

    // Integration by parts against the spectral laplacian.
    let d = ws.pad.synthesize_derivatives(&c.padded_to(ws.pad.degree()))?;
    let sq = d.d1.zip_with(&d.d2, |a, b| a * a + b * b);
    let lhs = ws.pad.integrate(&sq);
    let rhs: f64 = -c
        .coeffs
        .iter()
        .zip(c.laplace_beltrami().coeffs.iter())
        .map(|(a, b)| a * b)
        .sum::<f64>();
    push_item(
        &mut items,
        v,
        "integration_by_parts",
        ((lhs - rhs) / rhs.abs().max(1e-300)).abs(),
        1e-9,
        format!("grad energy {lhs} vs spectral {rhs}"),
    );

    // Base bubble anchors.
    push_item(
        &mut items,
        v,
        "dirichlet_u0",
        (dirichlet(&ws, &u0)? - 8.0 * PI).abs(),
        1e-10,
        "int |grad u0|^2 = 8 pi".into(),
    );
    push_item(
        &mut items,
        v,
        "volume_v1_u0",
        (volume_v1(&ws, &u0)? + E0_LEVEL).abs(),
        1e-10,
        "V1(u0) = -4 pi / 3".into(),
    );
    let e0 = energy(&ws, &u0, 0.0, &cfg.field)?;
    push_item(
        &mut items,
        v,
        "energy_u0",
        ((e0.total - E0_LEVEL) / E0_LEVEL).abs(),
        1e-9,
        "E0(u0) = 4 pi / 3".into(),
    );
    push_item(
        &mut items,
        v,
        "residual_u0",
        residual(&ws, &u0, 0.0, &cfg.field)?.l2,
        1e-11,
        "L2 norm of Lap u0 - 2 J(u0)".into(),
    );

    // Kernel dimension of the unperturbed second variation.
    let a = assemble_e0_hessian(&ws)?;
    let sym = 0.5 * (&a + a.transpose());
    let eigs = sym.symmetric_eigen().eigenvalues;
    let max_abs = eigs.iter().map(|e| e.abs()).fold(0.0_f64, f64::max);
    let kernel_dim = eigs.iter().filter(|e| e.abs() < 1e-8 * max_abs).count();
    push_item(
        &mut items,
        v,
        "hessian_kernel_dim",
        (kernel_dim as f64 - 9.0).abs(),
        0.0,
        format!("{kernel_dim} singular directions below 1e-8 x max"),
    );

    // Tangent frame invariants and kernel membership.
    let frame = crate::reduction::tangent_frame(&ws)?;
    push_item(
        &mut items,
        v,
        "frame_gram",
        frame.gram_residual,
        1e-10,
        "Dirichlet Gram matrix vs identity".into(),
    );
    push_item(
        &mut items,
        v,
        "frame_mean",
        frame.mean_residual,
        1e-10,
        "max |int tau_i|".into(),
    );
    let mut in_kernel = 0.0_f64;
    for t in &frame.tau_flat {
        in_kernel = in_kernel.max((&a * t).amax());
    }
    push_item(
        &mut items,
        v,
        "frame_in_kernel",
        in_kernel,
        1e-8,
        "max |E0'' tau_i|".into(),
    );

    // Gauss-Green identity for the configured field (degree-aware tolerance:
    // the weighted volume inherits the spectral truncation of H(u)).
    let gg_tol = if cfg.degree >= 12 { 1e-6 } else { 5e-3 };
    let mut gg_err = 0.0_f64;
    for p in [
        Vector3::zeros(),
        Vector3::new(2.0, 0.0, 0.0),
        Vector3::new(0.0, -3.0, 1.0),
    ] {
        let wv = weighted_volume(&ws, &u0.translated(p)?, &cfg.field)?;
        let oracle = gauss_green_oracle(p, &cfg.field)?;
        gg_err = gg_err.max((wv - oracle).abs());
    }
    push_item(
        &mut items,
        v,
        "gauss_green",
        gg_err,
        gg_tol,
        "weighted volume vs ball-integral oracle".into(),
    );

    // Constant-curvature spheres extract 1/r.
    let mut sphere_err = 0.0_f64;
    for r in [0.5, 1.0, 2.0] {
        let u = MapS2R3::from_fn(ws.grid.clone(), move |s| {
            -r * s + Vector3::new(0.2, -0.4, 0.7)
        })?;
        let ex = diagnostics::mean_curvature_extract(&u)?;
        for hv in &ex.values.values {
            sphere_err = sphere_err.max((hv - 1.0 / r).abs());
        }
    }
    push_item(
        &mut items,
        v,
        "curvature_extraction",
        sphere_err,
        1e-10,
        "spheres of radius r extract 1/r".into(),
    );

    let passed = items.iter().all(|i| i.pass);
    let report = ValidateReport {
        degree: cfg.degree,
        items,
        passed,
    };
    atomic_write(
        &cfg.out.join("validate_report.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    write_manifest(cfg, "validate")?;
    println!(
        "validate: {} ({} items)",
        if passed { "PASS" } else { "FAIL" },
        report.items.len()
    );
    Ok(report)
}

// ---------------------------------------------------------------------------
// gamma-scan
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct GammaScanOutput {
    pub report: MelnikovReport,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

impl GammaScanOutput {
    pub fn passed(&self) -> bool {
        true
    }
}

/// Landscape scan of `Gamma` over the configured box: CSV of the node values
/// and gradients plus the classified critical points as JSON.
pub fn cmd_gamma_scan(cfg: &RunConfig) -> Result<GammaScanOutput> {
    with_pool(cfg.threads, || cmd_gamma_scan_inner(cfg))
}

fn cmd_gamma_scan_inner(cfg: &RunConfig) -> Result<GammaScanOutput> {
    let opts = GammaSearchOpts {
        gamma: GammaOpts {
            tol: cfg.quad_tol,
            ..Default::default()
        },
        resolution: cfg.gamma_scan_n,
        ..Default::default()
    };
    let report = find_gamma_critical(&cfg.field, cfg.h0, cfg.scan_box, &opts)?;
    if report.flat_landscape {
        println!("gamma-scan: WARNING flat landscape (no critical points reported)");
    } else {
        println!(
            "gamma-scan: {} critical points ({} scan nodes)",
            report.critical_points.len(),
            report.nodes.len()
        );
        for c in &report.critical_points {
            println!(
                "  {:?} at ({:.6}, {:.6}, {:.6})  gamma = {:.6e}",
                c.kind, c.location[0], c.location[1], c.location[2], c.value
            );
        }
    }
    let csv_path = cfg.out.join("gamma_landscape.csv");
    atomic_write(&csv_path, melnikov::landscape_csv(&report).as_bytes())?;
    let json_path = cfg.out.join("melnikov_report.json");
    atomic_write(&json_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    write_manifest(cfg, "gamma-scan")?;
    Ok(GammaScanOutput {
        report,
        csv_path,
        json_path,
    })
}

// ---------------------------------------------------------------------------
// reduce
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct ReduceReport {
    pub eps: f64,
    pub p: [f64; 3],
    pub h0: f64,
    pub converged: bool,
    pub iterations: usize,
    pub eta_w13: f64,
    pub eta_c1: f64,
    pub lambda: Vec<f64>,
    pub alpha: [f64; 3],
    pub phi: f64,
    pub gamma: f64,
    pub eta_equation_residual: f64,
    pub update_norms: Vec<f64>,
    pub outside_validation: bool,
    pub expansion: Vec<crate::reduction::ExpansionRow>,
}

impl ReduceReport {
    pub fn passed(&self) -> bool {
        self.converged
    }
}

/// Solve the correction at the configured `(eps, p)` and tabulate the
/// second-order expansion over the configured `eps` list.
pub fn cmd_reduce(cfg: &RunConfig) -> Result<ReduceReport> {
    with_pool(cfg.threads, || cmd_reduce_inner(cfg))
}

fn cmd_reduce_inner(cfg: &RunConfig) -> Result<ReduceReport> {
    let ws = Workspace::with_pad_factor(cfg.degree, cfg.pad_factor)?;
    let red = Reductor::new(ws)?;
    let field_n = normalize_h0(cfg.h0, cfg.field.clone())?;
    let p_n = cfg.h0 * cfg.p;
    let opts = solve_opts(cfg);

    let state = red.solve_eta(cfg.eps, p_n, &field_n, &opts)?;
    let e = red.energy_of_state(&state, &field_n)?;
    let g = gamma(p_n, &field_n, 1.0, &GammaOpts {
        tol: cfg.quad_tol,
        ..Default::default()
    })?;
    let eta_res = red.eta_equation_residual(&state, &field_n)?;
    let expansion = red.expansion_check(p_n, &field_n, &cfg.eps_list, &opts)?;

    println!(
        "reduce: eps = {:.3e}, p = ({}, {}, {})",
        cfg.eps, cfg.p.x, cfg.p.y, cfg.p.z
    );
    println!(
        "  converged in {} iterations; |eta|_W13 = {:.6e}, |eta|_C1 = {:.6e}",
        state.iterations,
        state.eta_w13,
        diagnostics::c1_magnitude(&state.eta)
    );
    println!(
        "  Phi = {:.12}  (E0 level {:.12}),  Gamma = {:.6e}",
        e.total, E0_LEVEL, g
    );
    println!("  eps        phi              remainder/eps^2");
    for row in &expansion {
        println!(
            "  {:<9.3e} {:<16.12} {:+.6e}",
            row.eps, row.phi, row.remainder_over_eps2
        );
    }

    let report = ReduceReport {
        eps: cfg.eps,
        p: [cfg.p.x, cfg.p.y, cfg.p.z],
        h0: cfg.h0,
        converged: state.converged,
        iterations: state.iterations,
        eta_w13: state.eta_w13,
        eta_c1: diagnostics::c1_magnitude(&state.eta),
        lambda: state.lambda.iter().copied().collect(),
        alpha: [state.alpha.x, state.alpha.y, state.alpha.z],
        phi: e.total,
        gamma: g,
        eta_equation_residual: eta_res,
        update_norms: state.update_norms.clone(),
        outside_validation: state.outside_validation,
        expansion,
    };
    atomic_write(
        &cfg.out.join("reduce_report.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    let mut csv = String::from("eps,phi,gamma,remainder,remainder_over_eps2\n");
    for row in &report.expansion {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.eps, row.phi, row.gamma, row.remainder, row.remainder_over_eps2
        ));
    }
    atomic_write(&cfg.out.join("expansion.csv"), csv.as_bytes())?;
    write_manifest(cfg, "reduce")?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

/// One critical point in the pinned JSON-lines schema.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalPointRecord {
    pub eps: f64,
    pub p: [f64; 3],
    pub phi: f64,
    pub gamma: f64,
    pub eta_w13: f64,
    pub iterations: usize,
    #[serde(rename = "type")]
    pub kind: CriticalKind,
    pub hessian_eigs: [f64; 3],
    pub residual_l2: f64,
}

#[derive(Debug, Serialize)]
pub struct SolveBubble {
    pub record: CriticalPointRecord,
    pub report: BubbleReport,
    pub full_gradient_norm: f64,
    pub natural_constraint_pass: bool,
    pub obj_path: PathBuf,
    pub csv_path: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct SolveOutput {
    pub eps: f64,
    pub h0: f64,
    pub bubbles: Vec<SolveBubble>,
    pub skipped_seeds: usize,
    pub scan_failures: usize,
    pub jsonl_path: PathBuf,
}

impl SolveOutput {
    pub fn passed(&self) -> bool {
        !self.bubbles.is_empty() && self.bubbles.iter().all(|b| b.natural_constraint_pass)
    }

    pub fn count_kind(&self, kind: CriticalKind) -> usize {
        self.bubbles
            .iter()
            .filter(|b| b.record.kind == kind)
            .count()
    }
}

/// Full pipeline: search critical points of the reduced functional over the
/// box, then export a mesh, a node table, and a quality report per bubble.
pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveOutput> {
    with_pool(cfg.threads, || {
        solve_with(
            cfg,
            &cfg.field,
            cfg.eps,
            cfg.h0,
            cfg.scan_box,
            &cfg.out.clone(),
        )
    })
}

/// Shared solve path (assumes a rayon pool is installed). The problem is
/// normalized to unit constant part: fields, translations and boxes are mapped
/// through `p~ = h0 p`, solved at `h0 = 1`, and mapped back for export.
pub fn solve_with(
    cfg: &RunConfig,
    field: &CurvatureField,
    eps: f64,
    h0: f64,
    scan_box: ScanBox,
    out: &Path,
) -> Result<SolveOutput> {
    let ws = Workspace::with_pad_factor(cfg.degree, cfg.pad_factor)?;
    let red = Reductor::new(ws)?;
    let field_n = normalize_h0(h0, field.clone())?;
    let box_n = scale_box(&scan_box, h0)?;
    let opts = PhiSearchOpts {
        solve: SolveOpts {
            tol: cfg.solver_tol,
            max_iter: 60,
            mode: cfg.mode,
            eps_ceiling: cfg.eps_ceiling,
        },
        scan_n: cfg.phi_scan_n,
        grad_tol: (10.0 * cfg.solver_tol).max(1e-10),
        ..Default::default()
    };
    let search = red.find_phi_critical(eps, &field_n, box_n, &opts)?;

    let natural_tol = 10.0 * cfg.solver_tol;
    let mut bubbles = Vec::new();
    let mut jsonl = String::new();
    for (i, c) in search.critical_points.iter().enumerate() {
        let bubble = package_bubble(cfg, &red, &field_n, c, h0, out, i, natural_tol)?;
        jsonl.push_str(&serde_json::to_string(&bubble.record)?);
        jsonl.push('\n');
        println!(
            "solve: {:?} at p = ({:.6}, {:.6}, {:.6})  phi = {:.10}  |grad E| = {:.2e}",
            bubble.record.kind,
            bubble.record.p[0],
            bubble.record.p[1],
            bubble.record.p[2],
            bubble.record.phi,
            bubble.full_gradient_norm
        );
        bubbles.push(bubble);
    }
    let jsonl_path = out.join("critical_points.jsonl");
    atomic_write(&jsonl_path, jsonl.as_bytes())?;
    let output = SolveOutput {
        eps,
        h0,
        bubbles,
        skipped_seeds: search.skipped_seeds,
        scan_failures: search.scan_failures,
        jsonl_path,
    };
    atomic_write(
        &out.join("solve_summary.json"),
        serde_json::to_string_pretty(&output)?.as_bytes(),
    )?;
    write_manifest(cfg, "solve")?;
    Ok(output)
}

fn scale_box(b: &ScanBox, h0: f64) -> Result<ScanBox> {
    if h0 == 1.0 {
        return Ok(*b);
    }
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for k in 0..3 {
        let a = b.lo[k] * h0;
        let c = b.hi[k] * h0;
        lo[k] = a.min(c);
        hi[k] = a.max(c);
    }
    ScanBox::new(lo, hi)
}

#[allow(clippy::too_many_arguments)]
fn package_bubble(
    cfg: &RunConfig,
    red: &Reductor,
    field_n: &CurvatureField,
    c: &PhiCritical,
    h0: f64,
    out: &Path,
    index: usize,
    natural_tol: f64,
) -> Result<SolveBubble> {
    // Normalized-frame surface and diagnostics.
    let u_n = red.corrected_map(c.p, &c.state.eta_flat)?;
    let report = diagnostics::bubble_report(&red.ws, &u_n, Some(&c.state.eta), c.state.eps, field_n)?;
    let full_grad = c.full_gradient_norm;

    // User-frame surface (radius 1/|h0| spheres) for export.
    let u_user = if h0 == 1.0 {
        u_n
    } else {
        let zero = MapS2R3::constant(red.ws.grid.clone(), Vector3::zeros())?;
        zero.add_scaled(&u_n, 1.0 / h0)?
    };
    let obj_path = out.join(format!("bubble_{index}.obj"));
    diagnostics::export_mesh(&u_user, &obj_path, MeshFormat::Obj)?;
    let csv_path = out.join(format!("bubble_{index}.csv"));
    diagnostics::export_mesh(&u_user, &csv_path, MeshFormat::Csv)?;

    let record = CriticalPointRecord {
        eps: c.state.eps,
        p: [c.p.x / h0, c.p.y / h0, c.p.z / h0],
        phi: c.phi,
        gamma: c.gamma,
        eta_w13: c.eta_w13,
        iterations: c.iterations,
        kind: c.kind,
        hessian_eigs: c.hessian_eigs,
        residual_l2: c.residual_l2,
    };
    let bubble = SolveBubble {
        record,
        report,
        full_gradient_norm: full_grad,
        natural_constraint_pass: full_grad <= natural_tol,
        obj_path,
        csv_path,
    };
    atomic_write(
        &out.join(format!("bubble_report_{index}.json")),
        serde_json::to_string_pretty(&bubble.report)?.as_bytes(),
    )?;
    let _ = cfg;
    Ok(bubble)
}

// ---------------------------------------------------------------------------
// multiplicity
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct MultiplicityRun {
    pub h0: f64,
    pub hypotheses: HypothesisReport,
    pub hypotheses_pass: bool,
    pub h5: Option<(f64, f64, bool)>,
    pub found: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub n_saddle: usize,
    pub opposite_deviations: bool,
    pub run_pass: bool,
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct MultiplicityVerdict {
    pub scenario: Scenario,
    pub expected_count: usize,
    pub runs: Vec<MultiplicityRun>,
    pub smallest_passing_h0: Option<f64>,
    pub passed: bool,
}

impl MultiplicityVerdict {
    pub fn passed(&self) -> bool {
        self.passed
    }
}

/// Run a shipped scenario end to end: hypothesis gating, the critical-point
/// search, and the bubble count per Hessian type. The remark scenarios sweep
/// `h0` and report the smallest value at which the expected count appears.
pub fn cmd_multiplicity(cfg: &RunConfig, scenario: Scenario) -> Result<MultiplicityVerdict> {
    with_pool(cfg.threads, || cmd_multiplicity_inner(cfg, scenario))
}

fn cmd_multiplicity_inner(cfg: &RunConfig, scenario: Scenario) -> Result<MultiplicityVerdict> {
    let field = scenario.field();
    let eps = if cfg.scenario == Some(scenario) || cfg.scenario.is_none() {
        // Scenario defaults unless the config explicitly targets this scenario
        // with its own eps.
        scenario.default_eps()
    } else {
        cfg.eps
    };
    let scan_box = scenario.default_box();
    let h0_values: Vec<f64> = if scenario.sweeps_h0() {
        cfg.h0_list.clone()
    } else {
        vec![cfg.h0]
    };

    let mut runs = Vec::new();
    let mut smallest: Option<f64> = None;
    for h0 in h0_values {
        let hyp = check_hypotheses(&field, h0, cfg.seed)?;
        let hypotheses_pass = match scenario {
            Scenario::Thm1 | Scenario::Thm3 | Scenario::Remark3 => hyp.all_of(&['1', '2']),
            Scenario::Thm2 => hyp.all_of(&['1', '2', '3', '4']),
            Scenario::Remark2 => {
                // Pointwise versions at the origin.
                let v0 = field.value(Vector3::zeros());
                let eigs = field.hessian(Vector3::zeros()).symmetric_eigenvalues();
                hyp.all_of(&['1', '2']) && v0 > 0.0 && eigs.min() > 0.0
            }
        };
        let h5 = match scenario.h5_points() {
            Some((p1, p2)) => Some(melnikov::check_h5(
                &field,
                h0,
                p1,
                p2,
                &GammaOpts::default(),
            )?),
            None => None,
        };
        let h5_pass = h5.map(|(_, _, ok)| ok).unwrap_or(true);
        let out_dir = if scenario.sweeps_h0() {
            cfg.out.join(format!("{}_h0_{h0}", scenario.name()))
        } else {
            cfg.out.join(scenario.name())
        };
        if !(hypotheses_pass && h5_pass) {
            atomic_write(
                &out_dir.join("hypothesis_report.json"),
                serde_json::to_string_pretty(&hyp)?.as_bytes(),
            )?;
            return Err(Error::SearchFailed(format!(
                "scenario {} hypothesis check failed at h0 = {h0} (see {})",
                scenario.name(),
                out_dir.join("hypothesis_report.json").display()
            )));
        }

        let solve = solve_with(cfg, &field, eps, h0, scan_box, &out_dir)?;
        let n_min = solve.count_kind(CriticalKind::Min);
        let n_max = solve.count_kind(CriticalKind::Max);
        let n_saddle = solve.count_kind(CriticalKind::Saddle);
        let found = solve.bubbles.len();
        let mut has_below = false;
        let mut has_above = false;
        for b in &solve.bubbles {
            if b.record.phi < E0_LEVEL - 1e-12 {
                has_below = true;
            }
            if b.record.phi > E0_LEVEL + 1e-12 {
                has_above = true;
            }
        }
        let opposite = has_below && has_above;
        let counting_pass = match scenario {
            Scenario::Thm1 => found >= 1,
            Scenario::Thm2 | Scenario::Remark2 => n_min >= 1 && n_max >= 1 && n_saddle >= 1,
            Scenario::Thm3 | Scenario::Remark3 => found >= 2 && opposite,
        };
        let run_pass = counting_pass && solve.passed();
        if run_pass && smallest.is_none() {
            smallest = Some(h0);
        }
        atomic_write(
            &out_dir.join("hypothesis_report.json"),
            serde_json::to_string_pretty(&hyp)?.as_bytes(),
        )?;
        println!(
            "multiplicity[{}] h0 = {h0}: found {found} (min {n_min} / max {n_max} / saddle {n_saddle}) -> {}",
            scenario.name(),
            if run_pass { "PASS" } else { "FAIL" }
        );
        runs.push(MultiplicityRun {
            h0,
            hypotheses: hyp,
            hypotheses_pass,
            h5,
            found,
            n_min,
            n_max,
            n_saddle,
            opposite_deviations: opposite,
            run_pass,
            out_dir,
        });
    }

    let passed = if scenario.sweeps_h0() {
        smallest.is_some()
    } else {
        runs.iter().all(|r| r.run_pass)
    };
    let verdict = MultiplicityVerdict {
        scenario,
        expected_count: scenario.expected_count(),
        runs,
        smallest_passing_h0: smallest,
        passed,
    };
    atomic_write(
        &cfg.out.join(format!("verdict_{}.json", scenario.name())),
        serde_json::to_string_pretty(&verdict)?.as_bytes(),
    )?;
    write_manifest(cfg, "multiplicity")?;
    Ok(verdict)
}
