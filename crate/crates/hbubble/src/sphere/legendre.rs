//! Gauss-Legendre nodes/weights and fully normalized associated Legendre
//! functions.
//!
//! `qbar(l, m, x)` below denotes the associated Legendre function normalized so
//! that `int_{-1}^{1} qbar(l,m,x)^2 dx = 1` for every fixed `m`. Real spherical
//! harmonics are assembled from these with azimuthal factors `cos(m phi)/sqrt(pi)`,
//! `sin(m phi)/sqrt(pi)` (and `1/sqrt(2 pi)` for `m = 0`).

/// Gauss-Legendre rule with `n` nodes on `[-1, 1]`: exact for polynomials of
/// degree `2n - 1`. Nodes are returned in ascending order, weights sum to 2.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_pn(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        // One extra polish.
        let (p, d) = legendre_pn(n, x);
        x -= p / d;
        let dp = legendre_pn(n, x).1;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre_pn(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tables of `qbar(l, m, x_i)` and of `d/d theta qbar(l, m, cos theta_i)` at the
/// quadrature nodes, for all `0 <= m <= l <= lmax`.
///
/// Layout: `plm[m][(l - m) * n_nodes + i]`. The theta-derivative uses
/// `d_theta qbar_l^m = (l x qbar_l^m - e_lm qbar_{l-1}^m) / sin theta` with
/// `e_lm = sqrt((l^2 - m^2)(2l + 1)/(2l - 1))`, well defined away from the poles.
#[derive(Debug)]
pub struct LegendreTables {
    pub plm: Vec<Vec<f64>>,
    pub dplm: Vec<Vec<f64>>,
}

impl LegendreTables {
    pub fn new(lmax: usize, x: &[f64], sin_theta: &[f64]) -> Self {
        let n = x.len();
        let mut plm: Vec<Vec<f64>> = (0..=lmax)
            .map(|m| vec![0.0; (lmax + 1 - m) * n])
            .collect();

        for i in 0..n {
            let xi = x[i];
            let si = sin_theta[i];
            // Diagonal q_m^m, then upward recursion in l for each m.
            let mut qmm = (0.5f64).sqrt();
            for m in 0..=lmax {
                if m > 0 {
                    let mf = m as f64;
                    qmm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * si;
                }
                plm[m][i] = qmm;
                if m < lmax {
                    let mut qprev = qmm;
                    let mut qcur = (2.0 * m as f64 + 3.0).sqrt() * xi * qmm;
                    plm[m][n + i] = qcur;
                    for l in (m + 2)..=lmax {
                        let lf = l as f64;
                        let mf = m as f64;
                        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                        let b = (((lf - 1.0) * (lf - 1.0) - mf * mf)
                            / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
                            .sqrt();
                        let qnext = a * (xi * qcur - b * qprev);
                        plm[m][(l - m) * n + i] = qnext;
                        qprev = qcur;
                        qcur = qnext;
                    }
                }
            }
        }

        let mut dplm: Vec<Vec<f64>> = (0..=lmax)
            .map(|m| vec![0.0; (lmax + 1 - m) * n])
            .collect();
        for m in 0..=lmax {
            let mf = m as f64;
            for l in m..=lmax {
                let lf = l as f64;
                let e = if l == 0 {
                    0.0
                } else {
                    ((lf * lf - mf * mf) * (2.0 * lf + 1.0) / (2.0 * lf - 1.0)).sqrt()
                };
                for i in 0..n {
                    let q = plm[m][(l - m) * n + i];
                    let qlow = if l > m { plm[m][(l - 1 - m) * n + i] } else { 0.0 };
                    dplm[m][(l - m) * n + i] = (lf * x[i] * q - e * qlow) / sin_theta[i];
                }
            }
        }

        LegendreTables { plm, dplm }
    }
}
