//! Verification instruments for candidate surfaces: Sobolev norms, branch
//! point detection, conformality defect, pointwise curvature extraction, and
//! mesh export.

use std::path::Path;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::CurvatureField;
use crate::functionals::Workspace;
use crate::io_util::atomic_write;
use crate::sphere::{GridField, MapS2R3};

/// Intrinsic `W^{1,s}` norm of a map:
/// `(int |grad u|^s)^{1/s} + (int |u|^s)^{1/s}` with the frame gradient.
pub fn w1s_norm(ws: &Workspace, u: &MapS2R3, s: f64) -> Result<f64> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "W^(1,s) norm needs s in (1, inf), got {s}"
        )));
    }
    let pm = ws.pad_map(u)?;
    let n = ws.pad.n_nodes();
    let mut grad_pow = GridField::zeros(ws.pad.degree());
    let mut val_pow = GridField::zeros(ws.pad.degree());
    for k in 0..n {
        let gsq = pm.d1_at(k).norm_squared() + pm.d2_at(k).norm_squared();
        grad_pow.values[k] = gsq.powf(s / 2.0);
        val_pow.values[k] = pm.value_at(k).norm_squared().powf(s / 2.0);
    }
    Ok(ws.pad.integrate(&grad_pow).powf(1.0 / s) + ws.pad.integrate(&val_pow).powf(1.0 / s))
}

/// Grid `C^1` magnitude: max over nodes of `|u| + |u_{e1}| + |u_{e2}|`.
pub fn c1_magnitude(u: &MapS2R3) -> f64 {
    let n = u.grid().n_nodes();
    let mut m = 0.0_f64;
    for k in 0..n {
        m = m.max(u.value_at(k).norm() + u.d1_at(k).norm() + u.d2_at(k).norm());
    }
    m
}

/// Node-wise minimum of `|u_{e1}|^2 + |u_{e2}|^2` and its location; a strictly
/// positive minimum certifies the absence of branch points at grid resolution.
pub fn branch_point_scan(u: &MapS2R3) -> (f64, usize) {
    let n = u.grid().n_nodes();
    let mut min = f64::INFINITY;
    let mut arg = 0;
    for k in 0..n {
        let g = u.d1_at(k).norm_squared() + u.d2_at(k).norm_squared();
        if g < min {
            min = g;
            arg = k;
        }
    }
    (min, arg)
}

/// Deviation from conformality built from the first fundamental form
/// `e = |u_{e1}|^2`, `g = |u_{e2}|^2`, `f = u_{e1} . u_{e2}`:
/// max over nodes of `max(|e - g|, 2|f|) / (e + g)`.
pub fn conformality_defect(u: &MapS2R3) -> Result<f64> {
    let (min_gradsq, _) = branch_point_scan(u);
    if min_gradsq <= 1e-14 {
        return Err(Error::InvalidParameter(
            "conformality defect undefined at a branch point (|grad u| ~ 0)".into(),
        ));
    }
    let n = u.grid().n_nodes();
    let mut worst = 0.0_f64;
    for k in 0..n {
        let d1 = u.d1_at(k);
        let d2 = u.d2_at(k);
        let e = d1.norm_squared();
        let g = d2.norm_squared();
        let f = d1.dot(&d2);
        worst = worst.max((e - g).abs().max(2.0 * f.abs()) / (e + g));
    }
    Ok(worst)
}

/// Pointwise prescribed-curvature extraction `(Lap u . J) / (2 |J|^2)` at the
/// nodes of `u`'s grid. Nodes where `|J|` nearly vanishes are flagged.
pub struct CurvatureExtraction {
    pub values: GridField,
    pub flagged: Vec<usize>,
}

pub fn mean_curvature_extract(u: &MapS2R3) -> Result<CurvatureExtraction> {
    let grid = u.grid();
    let n = grid.n_nodes();
    let lap = [
        grid.synthesize(&u.spectral()[0].laplace_beltrami())?,
        grid.synthesize(&u.spectral()[1].laplace_beltrami())?,
        grid.synthesize(&u.spectral()[2].laplace_beltrami())?,
    ];
    let mut values = GridField::zeros(grid.degree());
    let mut jnorms = vec![0.0; n];
    let mut mean_j = 0.0;
    for k in 0..n {
        let j = u.d1_at(k).cross(&u.d2_at(k));
        jnorms[k] = j.norm();
        mean_j += jnorms[k];
    }
    mean_j /= n as f64;
    let floor = 1e-8 * mean_j.max(1e-300);
    let mut flagged = Vec::new();
    for k in 0..n {
        let j = u.d1_at(k).cross(&u.d2_at(k));
        let l = Vector3::new(lap[0].values[k], lap[1].values[k], lap[2].values[k]);
        if jnorms[k] <= floor {
            flagged.push(k);
            values.values[k] = f64::NAN;
        } else {
            values.values[k] = l.dot(&j) / (2.0 * j.norm_squared());
        }
    }
    Ok(CurvatureExtraction { values, flagged })
}

/// Quality summary for a candidate surface `u = u0 + p + eta`.
#[derive(Debug, Clone, Serialize)]
pub struct BubbleReport {
    pub residual_l2: f64,
    pub eta_w13: f64,
    pub min_gradsq: f64,
    pub conformal_defect: f64,
    pub curvature_error: f64,
    pub eta_c1: f64,
}

/// Assemble the report; `eta` contributes its own norms when provided.
pub fn bubble_report(
    ws: &Workspace,
    u: &MapS2R3,
    eta: Option<&MapS2R3>,
    eps: f64,
    field: &CurvatureField,
) -> Result<BubbleReport> {
    let res = crate::functionals::residual(ws, u, eps, field)?;
    let (min_gradsq, _) = branch_point_scan(u);
    let defect = conformality_defect(u)?;
    let extraction = mean_curvature_extract(u)?;
    let mut curvature_error = 0.0_f64;
    for (k, hv) in extraction.values.values.iter().enumerate() {
        if hv.is_nan() {
            continue;
        }
        let target = 1.0 + eps * field.value(u.value_at(k));
        curvature_error = curvature_error.max((hv - target).abs());
    }
    let (eta_w13, eta_c1) = match eta {
        Some(e) => (w1s_norm(ws, e, 3.0)?, c1_magnitude(e)),
        None => (0.0, 0.0),
    };
    Ok(BubbleReport {
        residual_l2: res.l2,
        eta_w13,
        min_gradsq,
        conformal_defect: defect,
        curvature_error,
        eta_c1,
    })
}

// ---------------------------------------------------------------------------
// Mesh export
// ---------------------------------------------------------------------------

/// Triangulated closed mesh of a map: one vertex per grid node plus two pole
/// caps obtained by averaging the nearest rings.
pub struct MeshData {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

/// Build the closed triangulation. Faces wind counterclockwise as seen along
/// the area-form vector `J(u)`.
pub fn triangulate(u: &MapS2R3) -> MeshData {
    let grid = u.grid();
    let nt = grid.n_theta();
    let np = grid.n_phi();
    let mut vertices = Vec::with_capacity(nt * np + 2);
    for k in 0..nt * np {
        let v = u.value_at(k);
        vertices.push([v.x, v.y, v.z]);
    }
    // Pole caps: longitude-averaged limit rows (theta ascending; row 0 is the
    // north parameter pole).
    let mut north = Vector3::zeros();
    let mut south = Vector3::zeros();
    for j in 0..np {
        north += u.value_at(j);
        south += u.value_at((nt - 1) * np + j);
    }
    north /= np as f64;
    south /= np as f64;
    let north_idx = vertices.len();
    vertices.push([north.x, north.y, north.z]);
    let south_idx = vertices.len();
    vertices.push([south.x, south.y, south.z]);

    let mut faces = Vec::with_capacity(2 * nt * np);
    let at = |i: usize, j: usize| i * np + (j % np);
    // Quad strips: triangles (v(i,j), v(i+1,j), v(i+1,j+1)) and
    // (v(i,j), v(i+1,j+1), v(i,j+1)) have normals along J.
    for i in 0..nt - 1 {
        for j in 0..np {
            faces.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            faces.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    for j in 0..np {
        // North fan: edge from the pole toward row 0 runs along +theta.
        faces.push([north_idx, at(0, j), at(0, j + 1)]);
        // South fan: edge from row nt-1 to the pole runs along +theta.
        faces.push([at(nt - 1, j), south_idx, at(nt - 1, j + 1)]);
    }
    MeshData { vertices, faces }
}

impl MeshData {
    /// Divergence-theorem volume with the faces' own orientation.
    pub fn signed_volume(&self) -> f64 {
        let mut six_v = 0.0;
        for f in &self.faces {
            let a = Vector3::from(self.vertices[f[0]]);
            let b = Vector3::from(self.vertices[f[1]]);
            let c = Vector3::from(self.vertices[f[2]]);
            six_v += a.dot(&b.cross(&c));
        }
        six_v / 6.0
    }

    /// Volume enclosed by the surface. With the `J`-consistent winding the
    /// signed volume reproduces `V1(u)`, so the enclosed volume is its negative
    /// (the unit bubble encloses `4 pi / 3`).
    pub fn enclosed_volume(&self) -> f64 {
        -self.signed_volume()
    }

    pub fn euler_characteristic(&self) -> isize {
        use std::collections::HashSet;
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as isize - edges.len() as isize + self.faces.len() as isize
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::with_capacity(self.vertices.len() * 40);
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
        }
        for f in &self.faces {
            out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        out
    }
}

/// Parse `v`/`f` lines back into mesh data (test oracle for exported files).
pub fn mesh_from_obj(text: &str) -> Result<MeshData> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut v = [0.0; 3];
                for x in v.iter_mut() {
                    *x = it
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::InvalidParameter("bad OBJ vertex".into()))?;
                }
                vertices.push(v);
            }
            Some("f") => {
                let mut f = [0usize; 3];
                for x in f.iter_mut() {
                    let idx: usize = it
                        .next()
                        .and_then(|t| t.split('/').next())
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::InvalidParameter("bad OBJ face".into()))?;
                    *x = idx - 1;
                }
                faces.push(f);
            }
            _ => {}
        }
    }
    Ok(MeshData { vertices, faces })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Csv,
}

/// Export a map as a closed OBJ mesh or as a CSV node table
/// (`theta,phi,x,y,z,h_extracted`). Writes are atomic (write + rename).
pub fn export_mesh(u: &MapS2R3, path: &Path, format: MeshFormat) -> Result<()> {
    match format {
        MeshFormat::Obj => {
            let mesh = triangulate(u);
            atomic_write(path, mesh.to_obj().as_bytes())
        }
        MeshFormat::Csv => {
            let grid = u.grid();
            let extraction = mean_curvature_extract(u)?;
            let mut out = String::from("theta,phi,x,y,z,h_extracted\n");
            for i in 0..grid.n_theta() {
                for j in 0..grid.n_phi() {
                    let k = i * grid.n_phi() + j;
                    let v = u.value_at(k);
                    out.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        grid.theta()[i],
                        grid.phi()[j],
                        v.x,
                        v.y,
                        v.z,
                        extraction.values.values[k]
                    ));
                }
            }
            atomic_write(path, out.as_bytes())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::gaussian_bump;
    use crate::sphere::SpectralField;
    use std::f64::consts::PI;

    fn ws(l: usize) -> Workspace {
        Workspace::new(l).unwrap()
    }

    #[test]
    fn w1s_norm_reference_values() {
        let ws = ws(8);
        let c = MapS2R3::from_fn(ws.grid.clone(), |_| Vector3::new(0.0, 3.0, -4.0)).unwrap();
        // Constant magnitude 5: |c| (4 pi)^{1/s}.
        for s in [2.0, 3.0, 5.0] {
            let n = w1s_norm(&ws, &c, s).unwrap();
            assert!((n - 5.0 * (4.0 * PI).powf(1.0 / s)).abs() < 1e-10, "s={s}");
        }
        let u0 = ws.base_bubble().unwrap();
        let n2 = w1s_norm(&ws, &u0, 2.0).unwrap();
        assert!((n2 - ((8.0 * PI).sqrt() + (4.0 * PI).sqrt())).abs() < 1e-10);
        let n3 = w1s_norm(&ws, &u0, 3.0).unwrap();
        let expect = (2.0_f64.powf(1.5) * 4.0 * PI).powf(1.0 / 3.0) + (4.0 * PI).powf(1.0 / 3.0);
        assert!((n3 - expect).abs() < 1e-10);
        assert!(w1s_norm(&ws, &u0, 1.0).is_err());
        assert!(w1s_norm(&ws, &u0, f64::INFINITY).is_err());
    }

    #[test]
    fn branch_point_scan_detects_engineered_zero() {
        let ws = ws(12);
        let u0 = ws.base_bubble().unwrap();
        let (min0, _) = branch_point_scan(&u0);
        assert!((min0 - 2.0).abs() < 1e-12);

        // Small perturbation keeps the gradient bounded away from zero.
        let mut pert = SpectralField::zeros(12);
        pert.set(2, 1, 0.05);
        let zero = SpectralField::zeros(12);
        let eta = MapS2R3::from_spectral(
            ws.grid.clone(),
            [pert, zero.clone(), zero.clone()],
        )
        .unwrap();
        let u = u0.add_scaled(&eta, 1.0).unwrap();
        let (min1, _) = branch_point_scan(&u);
        assert!(min1 >= 1.5, "{min1}");

        // u = (z^2, 0, 0): gradient vanishes on the equator.
        let deg = MapS2R3::from_fn(ws.grid.clone(), |s| Vector3::new(s.z * s.z, 0.0, 0.0))
            .unwrap();
        let (mind, arg) = branch_point_scan(&deg);
        assert!(mind < 0.05, "{mind}");
        let node = ws.grid.unit_points()[arg];
        assert!(node[2].abs() < 0.2, "argmin should sit near the equator");
    }

    #[test]
    fn conformality_defect_zero_for_bubble_and_positive_for_stretch() {
        let ws = ws(12);
        let u0 = ws.base_bubble().unwrap();
        assert!(conformality_defect(&u0).unwrap() < 1e-12);

        // Compose with a non-conformal stretch of the parameter sphere.
        let a = 0.2;
        let stretched = MapS2R3::from_fn(ws.grid.clone(), |s| {
            let t = Vector3::new((1.0 + a) * s.x, s.y, s.z).normalize();
            -t
        })
        .unwrap();
        let d = conformality_defect(&stretched).unwrap();
        assert!(d > 0.05 && d < 1.0, "defect {d}");

        let degenerate =
            MapS2R3::from_fn(ws.grid.clone(), |_| Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(conformality_defect(&degenerate).is_err());
    }

    #[test]
    fn curvature_extraction_on_spheres() {
        let ws = ws(10);
        let u0 = ws.base_bubble().unwrap();
        let ex = mean_curvature_extract(&u0).unwrap();
        assert!(ex.flagged.is_empty());
        for v in &ex.values.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
        // Scaled and translated spheres extract 1/r.
        for r in [0.5_f64, 1.0, 2.0] {
            let u = MapS2R3::from_fn(ws.grid.clone(), |s| {
                -r * s + Vector3::new(0.3, -1.0, 2.0)
            })
            .unwrap();
            let ex = mean_curvature_extract(&u).unwrap();
            for v in &ex.values.values {
                assert!((v - 1.0 / r).abs() < 1e-10, "r={r} got {v}");
            }
        }
    }

    #[test]
    fn bubble_report_of_unperturbed_bubble() {
        let ws = ws(10);
        let u0 = ws.base_bubble().unwrap();
        let bump = gaussian_bump(1.0, Vector3::zeros(), 1.0).unwrap();
        let r = bubble_report(&ws, &u0, None, 0.0, &bump).unwrap();
        assert!(r.residual_l2 < 1e-11);
        assert!(r.conformal_defect < 1e-12);
        assert!((r.min_gradsq - 2.0).abs() < 1e-12);
        assert!(r.curvature_error < 1e-11);
        assert!(r.eta_w13 == 0.0 && r.eta_c1 == 0.0);
    }

    #[test]
    fn mesh_counts_volume_and_closure() {
        let ws = ws(16);
        let u0 = ws.base_bubble().unwrap();
        let mesh = triangulate(&u0);
        assert_eq!(mesh.vertices.len(), 17 * 34 + 2);
        assert_eq!(mesh.euler_characteristic(), 2);
        let vol = mesh.enclosed_volume();
        let exact = 4.0 * PI / 3.0;
        assert!(((vol - exact) / exact).abs() < 0.02, "volume {vol}");
        // Faces follow J: outward normals for this inward-oriented bubble give
        // a negative signed volume.
        assert!(mesh.signed_volume() < 0.0);
    }

    #[test]
    fn obj_and_csv_export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ws = ws(8);
        let u0 = ws.base_bubble().unwrap();

        let obj_path = dir.path().join("bubble.obj");
        export_mesh(&u0, &obj_path, MeshFormat::Obj).unwrap();
        let text = std::fs::read_to_string(&obj_path).unwrap();
        let mesh = mesh_from_obj(&text).unwrap();
        assert_eq!(mesh.vertices.len(), 9 * 18 + 2);
        let exact = 4.0 * PI / 3.0;
        assert!(((mesh.enclosed_volume() - exact) / exact).abs() < 0.05);

        let csv_path = dir.path().join("bubble.csv");
        export_mesh(&u0, &csv_path, MeshFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "theta,phi,x,y,z,h_extracted");
        assert_eq!(lines.len(), 1 + 9 * 18);
    }
}
