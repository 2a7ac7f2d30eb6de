//! Prescribed-curvature perturbations `H1: R^3 -> R` with analytic first and
//! second derivatives, a line-based construction DSL, and samplers for the
//! standing hypotheses used by the multiplicity experiments.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};

/// How fast the field falls off at infinity. Combinations inherit the weakest
/// decay among their members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum DecayHint {
    NonDecaying,
    Decaying,
    CompactLike,
}

type ScalarFn = Arc<dyn Fn(Vector3<f64>) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(Vector3<f64>) -> Vector3<f64> + Send + Sync>;
type HessFn = Arc<dyn Fn(Vector3<f64>) -> Matrix3<f64> + Send + Sync>;

/// A curvature perturbation with pointwise value, gradient and Hessian.
///
/// All shipped constructors carry analytic derivatives; `Custom` fields may
/// omit them and fall back to central finite differences (flagged in
/// [`HypothesisReport::grad_warning`]).
#[derive(Clone)]
pub enum CurvatureField {
    Constant(f64),
    Gaussian {
        amp: f64,
        center: Vector3<f64>,
        width: f64,
    },
    RadialWell {
        amp: f64,
        quad: f64,
        width: f64,
    },
    Combination(Vec<(f64, CurvatureField)>),
    Normalized {
        h0: f64,
        inner: Box<CurvatureField>,
    },
    Custom {
        eval: ScalarFn,
        grad: Option<GradFn>,
        hess: Option<HessFn>,
        decay: DecayHint,
        label: String,
    },
}

impl fmt::Debug for CurvatureField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurvatureField::Constant(c) => write!(f, "Constant({c})"),
            CurvatureField::Gaussian { amp, center, width } => write!(
                f,
                "Gaussian(a={amp}, c=({},{},{}), s={width})",
                center.x, center.y, center.z
            ),
            CurvatureField::RadialWell { amp, quad, width } => {
                write!(f, "RadialWell(a={amp}, b={quad}, s={width})")
            }
            CurvatureField::Combination(terms) => {
                write!(f, "Combination({} terms)", terms.len())
            }
            CurvatureField::Normalized { h0, .. } => write!(f, "Normalized(h0={h0})"),
            CurvatureField::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

/// `a * exp(-|p - c|^2 / s^2)`.
pub fn gaussian_bump(amp: f64, center: Vector3<f64>, width: f64) -> Result<CurvatureField> {
    if !(width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gaussian width must be positive, got {width}"
        )));
    }
    Ok(CurvatureField::Gaussian { amp, center, width })
}

/// `a * exp(-|p|^2 / s^2) * (1 + b |p|^2)`, convex inside the unit ball for the
/// shipped defaults `(a, b, s) = (1, 4, 3)`.
pub fn radial_well(amp: f64, quad: f64, width: f64) -> Result<CurvatureField> {
    if !(amp > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radial well amplitude must be positive, got {amp}"
        )));
    }
    if !(width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radial well width must be positive, got {width}"
        )));
    }
    if !(quad > 1.0 / (width * width)) {
        return Err(Error::InvalidParameter(format!(
            "radial well needs b > 1/s^2 (got b={quad}, 1/s^2={})",
            1.0 / (width * width)
        )));
    }
    Ok(CurvatureField::RadialWell { amp, quad, width })
}

/// The shipped radial well defaults `(a, b, s) = (1, 4, 3)`.
pub fn radial_well_default() -> CurvatureField {
    radial_well(1.0, 4.0, 3.0).expect("defaults satisfy the constraints")
}

/// Pointwise weighted sum of fields.
pub fn linear_combination(terms: Vec<(f64, CurvatureField)>) -> Result<CurvatureField> {
    if terms.is_empty() {
        return Err(Error::InvalidParameter(
            "linear combination needs at least one term".into(),
        ));
    }
    Ok(CurvatureField::Combination(terms))
}

/// Reduce a problem with constant part `H0` to the unit-constant one:
/// `H1~(v) = H1(v / H0) / H0`.
pub fn normalize_h0(h0: f64, field: CurvatureField) -> Result<CurvatureField> {
    if h0 == 0.0 {
        return Err(Error::InvalidParameter("h0 must be nonzero".into()));
    }
    if h0 == 1.0 {
        return Ok(field);
    }
    Ok(CurvatureField::Normalized {
        h0,
        inner: Box::new(field),
    })
}

impl CurvatureField {
    pub fn value(&self, p: Vector3<f64>) -> f64 {
        match self {
            CurvatureField::Constant(c) => *c,
            CurvatureField::Gaussian { amp, center, width } => {
                let d = p - center;
                amp * (-d.norm_squared() / (width * width)).exp()
            }
            CurvatureField::RadialWell { amp, quad, width } => {
                let rho = p.norm_squared();
                amp * (-rho / (width * width)).exp() * (1.0 + quad * rho)
            }
            CurvatureField::Combination(terms) => {
                terms.iter().map(|(w, f)| w * f.value(p)).sum()
            }
            CurvatureField::Normalized { h0, inner } => inner.value(p / *h0) / h0,
            CurvatureField::Custom { eval, .. } => eval(p),
        }
    }

    pub fn gradient(&self, p: Vector3<f64>) -> Vector3<f64> {
        match self {
            CurvatureField::Constant(_) => Vector3::zeros(),
            CurvatureField::Gaussian { amp, center, width } => {
                let d = p - center;
                let s2 = width * width;
                let v = amp * (-d.norm_squared() / s2).exp();
                -(2.0 / s2) * v * d
            }
            CurvatureField::RadialWell { amp, quad, width } => {
                let rho = p.norm_squared();
                let s2 = width * width;
                let hp = amp * (-rho / s2).exp() * (quad - (1.0 + quad * rho) / s2);
                2.0 * hp * p
            }
            CurvatureField::Combination(terms) => terms
                .iter()
                .map(|(w, f)| *w * f.gradient(p))
                .fold(Vector3::zeros(), |a, b| a + b),
            CurvatureField::Normalized { h0, inner } => inner.gradient(p / *h0) / (h0 * h0),
            CurvatureField::Custom { grad, eval, .. } => match grad {
                Some(g) => g(p),
                None => fd_gradient(&|q| eval(q), p, 1e-5),
            },
        }
    }

    pub fn hessian(&self, p: Vector3<f64>) -> Matrix3<f64> {
        match self {
            CurvatureField::Constant(_) => Matrix3::zeros(),
            CurvatureField::Gaussian { amp, center, width } => {
                let d = p - center;
                let s2 = width * width;
                let v = amp * (-d.norm_squared() / s2).exp();
                let outer = d * d.transpose();
                v * ((4.0 / (s2 * s2)) * outer - (2.0 / s2) * Matrix3::identity())
            }
            CurvatureField::RadialWell { amp, quad, width } => {
                let rho = p.norm_squared();
                let s2 = width * width;
                let e = amp * (-rho / s2).exp();
                let hp = e * (quad - (1.0 + quad * rho) / s2);
                let hpp = e * ((1.0 + quad * rho) / (s2 * s2) - 2.0 * quad / s2);
                2.0 * hp * Matrix3::identity() + 4.0 * hpp * (p * p.transpose())
            }
            CurvatureField::Combination(terms) => terms
                .iter()
                .map(|(w, f)| *w * f.hessian(p))
                .fold(Matrix3::zeros(), |a, b| a + b),
            CurvatureField::Normalized { h0, inner } => {
                inner.hessian(p / *h0) / (h0 * h0 * h0)
            }
            CurvatureField::Custom { hess, grad, eval, .. } => match hess {
                Some(h) => h(p),
                None => {
                    let g: Box<dyn Fn(Vector3<f64>) -> Vector3<f64>> = match grad {
                        Some(g) => {
                            let g = g.clone();
                            Box::new(move |q| g(q))
                        }
                        None => {
                            let eval = eval.clone();
                            Box::new(move |q| fd_gradient(&|r| eval(r), q, 1e-5))
                        }
                    };
                    fd_hessian_of_gradient(&g, p, 1e-4)
                }
            },
        }
    }

    pub fn decay_hint(&self) -> DecayHint {
        match self {
            CurvatureField::Constant(c) => {
                if *c == 0.0 {
                    DecayHint::CompactLike
                } else {
                    DecayHint::NonDecaying
                }
            }
            CurvatureField::Gaussian { .. } | CurvatureField::RadialWell { .. } => {
                DecayHint::Decaying
            }
            CurvatureField::Combination(terms) => terms
                .iter()
                .map(|(_, f)| f.decay_hint())
                .min()
                .unwrap_or(DecayHint::CompactLike),
            CurvatureField::Normalized { inner, .. } => inner.decay_hint(),
            CurvatureField::Custom { decay, .. } => *decay,
        }
    }

    /// Whether the gradient bound required by the standing hypotheses holds by
    /// construction (true for every shipped analytic family).
    pub fn analytic_grad_bound(&self) -> bool {
        match self {
            CurvatureField::Constant(_)
            | CurvatureField::Gaussian { .. }
            | CurvatureField::RadialWell { .. } => true,
            CurvatureField::Combination(terms) => {
                terms.iter().all(|(_, f)| f.analytic_grad_bound())
            }
            CurvatureField::Normalized { inner, .. } => inner.analytic_grad_bound(),
            CurvatureField::Custom { .. } => false,
        }
    }

    /// Whether derivative evaluations fall back to finite differences anywhere.
    pub fn uses_fd_fallback(&self) -> bool {
        match self {
            CurvatureField::Custom { grad, hess, .. } => grad.is_none() || hess.is_none(),
            CurvatureField::Combination(terms) => terms.iter().any(|(_, f)| f.uses_fd_fallback()),
            CurvatureField::Normalized { inner, .. } => inner.uses_fd_fallback(),
            _ => false,
        }
    }
}

/// Central finite-difference gradient (step `h`).
pub fn fd_gradient(f: &dyn Fn(Vector3<f64>) -> f64, p: Vector3<f64>, h: f64) -> Vector3<f64> {
    let mut g = Vector3::zeros();
    for k in 0..3 {
        let mut hi = p;
        let mut lo = p;
        hi[k] += h;
        lo[k] -= h;
        g[k] = (f(hi) - f(lo)) / (2.0 * h);
    }
    g
}

fn fd_hessian_of_gradient(
    g: &dyn Fn(Vector3<f64>) -> Vector3<f64>,
    p: Vector3<f64>,
    h: f64,
) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for k in 0..3 {
        let mut hi = p;
        let mut lo = p;
        hi[k] += h;
        lo[k] -= h;
        let col = (g(hi) - g(lo)) / (2.0 * h);
        m.set_column(k, &col);
    }
    // Symmetrize.
    0.5 * (m + m.transpose())
}

// ---------------------------------------------------------------------------
// Hypothesis sampling
// ---------------------------------------------------------------------------

/// Sampled evidence for the standing hypotheses on `H1` at a given `H0`:
/// decay at infinity (h1), bounded gradient (h2), convexity on the unit-scale
/// ball (h3), positivity on the unit-scale ball (h4).
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub h0: f64,
    pub seed: u64,
    pub n_ball_samples: usize,
    /// `(radius, max |H1| on that sphere)` for radii `{5, 10, 20} / |H0|`.
    pub h1_decay: Vec<(f64, f64)>,
    /// Max `|H1|` over the sampled ball `B_{1/|H0|}(0)`.
    pub h1_near_max: f64,
    /// Max `|grad H1|` over the sample box.
    pub h2_grad_bound: f64,
    /// Gradient bound certified by the analytic family, not just by sampling.
    pub h2_analytic: bool,
    /// Min eigenvalue of `Hess H1` over the sampled ball.
    pub h3_min_eig: f64,
    /// Min `H1` over the sampled ball.
    pub h4_min_value: f64,
    pub h1_pass: bool,
    pub h2_pass: bool,
    pub h3_pass: bool,
    pub h4_pass: bool,
    /// Set when derivative evaluations fall back to finite differences.
    pub grad_warning: bool,
}

impl HypothesisReport {
    pub fn all_of(&self, which: &[char]) -> bool {
        which.iter().all(|c| match c {
            '1' => self.h1_pass,
            '2' => self.h2_pass,
            '3' => self.h3_pass,
            '4' => self.h4_pass,
            _ => false,
        })
    }
}

/// Radical-inverse (Halton) sequence in the given base.
fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut x = 0.0;
    let mut f = inv;
    while n > 0 {
        x += (n % base) as f64 * f;
        n /= base;
        f *= inv;
    }
    x
}

fn halton3(n: u64) -> [f64; 3] {
    [
        radical_inverse(n, 2),
        radical_inverse(n, 3),
        radical_inverse(n, 5),
    ]
}

/// Quasi-random points in the closed ball of radius `r` (rejection from the
/// bounding cube; deterministic for a fixed seed).
fn halton_ball(r: f64, count: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut pts = Vec::with_capacity(count);
    let mut n = seed + 1;
    while pts.len() < count {
        let h = halton3(n);
        n += 1;
        let p = Vector3::new(
            (2.0 * h[0] - 1.0) * r,
            (2.0 * h[1] - 1.0) * r,
            (2.0 * h[2] - 1.0) * r,
        );
        if p.norm() <= r {
            pts.push(p);
        }
    }
    pts
}

/// Quasi-random directions on the unit sphere (area-preserving map of the
/// Halton square).
fn halton_sphere(count: usize, seed: u64) -> Vec<Vector3<f64>> {
    (0..count)
        .map(|k| {
            let h = halton3(seed + 1 + k as u64);
            let z = 2.0 * h[0] - 1.0;
            let phi = 2.0 * std::f64::consts::PI * h[1];
            let s = (1.0 - z * z).max(0.0).sqrt();
            Vector3::new(s * phi.cos(), s * phi.sin(), z)
        })
        .collect()
}

/// Sample the standing hypotheses for `H1` at constant part `h0`.
///
/// Thresholds: h1 passes when the max at radius `20/|h0|` is below `1e-3` times
/// the near-field max (with an absolute floor so the zero field passes); h3 and
/// h4 require strict positivity of the sampled minima.
pub fn check_hypotheses(field: &CurvatureField, h0: f64, seed: u64) -> Result<HypothesisReport> {
    if h0 == 0.0 {
        return Err(Error::InvalidParameter("h0 must be nonzero".into()));
    }
    let scale = 1.0 / h0.abs();
    let n_ball = 600;
    let ball = halton_ball(scale, n_ball, seed);
    let dirs = halton_sphere(400, seed.wrapping_add(97));

    let mut h1_near_max = 0.0_f64;
    let mut h3_min_eig = f64::INFINITY;
    let mut h4_min_value = f64::INFINITY;
    for p in &ball {
        let v = field.value(*p);
        h1_near_max = h1_near_max.max(v.abs());
        h4_min_value = h4_min_value.min(v);
        let eigs = field.hessian(*p).symmetric_eigenvalues();
        h3_min_eig = h3_min_eig.min(eigs.min());
    }

    let mut h1_decay = Vec::new();
    for r in [5.0, 10.0, 20.0] {
        let radius = r * scale;
        let m = dirs
            .iter()
            .map(|d| field.value(radius * d).abs())
            .fold(0.0_f64, f64::max);
        h1_decay.push((radius, m));
    }
    let far = h1_decay.last().map(|(_, m)| *m).unwrap_or(f64::INFINITY);
    let h1_pass = far <= 1e-3 * h1_near_max + 1e-15;

    let box_r = 20.0 * scale;
    let mut h2_grad_bound = 0.0_f64;
    for k in 0..1000u64 {
        let h = halton3(seed.wrapping_add(311) + k);
        let p = Vector3::new(
            (2.0 * h[0] - 1.0) * box_r,
            (2.0 * h[1] - 1.0) * box_r,
            (2.0 * h[2] - 1.0) * box_r,
        );
        h2_grad_bound = h2_grad_bound.max(field.gradient(p).norm());
    }
    let h2_analytic = field.analytic_grad_bound();
    let h2_pass = h2_analytic || h2_grad_bound.is_finite();

    Ok(HypothesisReport {
        h0,
        seed,
        n_ball_samples: n_ball,
        h1_decay,
        h1_near_max,
        h2_grad_bound,
        h2_analytic,
        h3_min_eig,
        h4_min_value,
        h1_pass,
        h2_pass,
        // Positive definiteness up to a roundoff floor, so the identically
        // vanishing Hessian does not trip the strict inequality.
        h3_pass: h3_min_eig > -1e-12,
        h4_pass: h4_min_value > 0.0,
        grad_warning: field.uses_fd_fallback(),
    })
}

// ---------------------------------------------------------------------------
// Field DSL
// ---------------------------------------------------------------------------

/// Parse the line-based field DSL. One term per line:
///
/// ```text
/// <sign|weight> gaussian a=<r> c=<x,y,z> s=<r>
/// <weight> radialwell a=<r> b=<r> s=<r>
/// ```
///
/// Keywords and keys are case-insensitive; blank lines and `#` comments are
/// skipped. `line_offset` shifts reported line numbers (for embedding in a
/// larger config file).
pub fn parse_field_dsl(text: &str, line_offset: usize) -> Result<CurvatureField> {
    let mut terms = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = line_offset + i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 2 {
            return Err(Error::ConfigParse {
                line: line_no,
                msg: format!("field term needs a weight and a kind: `{line}`"),
            });
        }
        let weight = match tokens[0] {
            "+" => 1.0,
            "-" => -1.0,
            t => t.parse::<f64>().map_err(|_| Error::ConfigParse {
                line: line_no,
                msg: format!("bad weight `{t}`"),
            })?,
        };
        let kind = tokens[1].to_ascii_lowercase();
        let mut a = None;
        let mut b = None;
        let mut s = None;
        let mut c = None;
        for tok in &tokens[2..] {
            let (key, val) = tok.split_once('=').ok_or_else(|| Error::ConfigParse {
                line: line_no,
                msg: format!("expected key=value, got `{tok}`"),
            })?;
            let key = key.to_ascii_lowercase();
            match key.as_str() {
                "a" | "b" | "s" => {
                    let v: f64 = val.parse().map_err(|_| Error::ConfigParse {
                        line: line_no,
                        msg: format!("bad number `{val}` for `{key}`"),
                    })?;
                    match key.as_str() {
                        "a" => a = Some(v),
                        "b" => b = Some(v),
                        _ => s = Some(v),
                    }
                }
                "c" => {
                    let parts: Vec<&str> = val.split(',').collect();
                    if parts.len() != 3 {
                        return Err(Error::ConfigParse {
                            line: line_no,
                            msg: format!("center needs three comma-separated numbers, got `{val}`"),
                        });
                    }
                    let mut v = Vector3::zeros();
                    for (k, part) in parts.iter().enumerate() {
                        v[k] = part.trim().parse().map_err(|_| Error::ConfigParse {
                            line: line_no,
                            msg: format!("bad center component `{part}`"),
                        })?;
                    }
                    c = Some(v);
                }
                other => {
                    return Err(Error::ConfigParse {
                        line: line_no,
                        msg: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        let term = match kind.as_str() {
            "gaussian" => {
                let amp = a.ok_or_else(|| missing(line_no, "a"))?;
                let center = c.ok_or_else(|| missing(line_no, "c"))?;
                let width = s.ok_or_else(|| missing(line_no, "s"))?;
                gaussian_bump(amp, center, width).map_err(|e| Error::ConfigParse {
                    line: line_no,
                    msg: e.to_string(),
                })?
            }
            "radialwell" => {
                let amp = a.ok_or_else(|| missing(line_no, "a"))?;
                let quad = b.ok_or_else(|| missing(line_no, "b"))?;
                let width = s.ok_or_else(|| missing(line_no, "s"))?;
                radial_well(amp, quad, width).map_err(|e| Error::ConfigParse {
                    line: line_no,
                    msg: e.to_string(),
                })?
            }
            other => {
                return Err(Error::ConfigParse {
                    line: line_no,
                    msg: format!("unknown field kind `{other}`"),
                })
            }
        };
        terms.push((weight, term));
    }
    linear_combination(terms).map_err(|_| Error::ConfigParse {
        line: line_offset + 1,
        msg: "field block contains no terms".into(),
    })
}

fn missing(line: usize, key: &str) -> Error {
    Error::ConfigParse {
        line,
        msg: format!("missing `{key}=`"),
    }
}

/// Canonical DSL text for fields built from shipped primitives, if expressible.
pub fn serialize_field_dsl(field: &CurvatureField) -> Option<String> {
    let terms = match field {
        CurvatureField::Combination(terms) => terms.clone(),
        f @ (CurvatureField::Gaussian { .. } | CurvatureField::RadialWell { .. }) => {
            vec![(1.0, f.clone())]
        }
        _ => return None,
    };
    let mut out = String::new();
    for (w, t) in &terms {
        match t {
            CurvatureField::Gaussian { amp, center, width } => {
                out.push_str(&format!(
                    "{w} gaussian a={amp} c={},{},{} s={width}\n",
                    center.x, center.y, center.z
                ));
            }
            CurvatureField::RadialWell { amp, quad, width } => {
                out.push_str(&format!("{w} radialwell a={amp} b={quad} s={width}\n"));
            }
            _ => return None,
        }
    }
    Some(out)
}
