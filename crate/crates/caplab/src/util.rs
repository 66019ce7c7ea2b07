//! Small numeric helpers shared across modules.

use num_complex::Complex64;

/// Pairwise (cascade) summation. Deterministic and accurate to a few ulps
/// independent of length; used everywhere a norm or integral is reduced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

pub fn pairwise_sum_complex(xs: &[Complex64]) -> Complex64 {
    match xs.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum_complex(&xs[..mid]) + pairwise_sum_complex(&xs[mid..])
        }
    }
}

/// Gauss-Legendre nodes and weights on [a, b].
///
/// Newton iteration on the Legendre polynomial; standard construction,
/// accurate to machine precision for n up to a few thousand.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th root of P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            dp = (n as f64) * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    // Affine map [-1,1] -> [a,b].
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for i in 0..n {
        nodes[i] = mid + half * nodes[i];
        weights[i] *= half;
    }
    (nodes, weights)
}

/// Composite Simpson weights for n+1 equally spaced nodes on [a, b]
/// (n is rounded up to the nearest even panel count).
pub fn simpson(n_panels: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let n = if n_panels % 2 == 0 { n_panels } else { n_panels + 1 };
    let h = (b - a) / n as f64;
    let nodes: Vec<f64> = (0..=n).map(|i| a + h * i as f64).collect();
    let mut weights = vec![0.0; n + 1];
    for (i, w) in weights.iter_mut().enumerate() {
        *w = if i == 0 || i == n {
            h / 3.0
        } else if i % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        };
    }
    (nodes, weights)
}

/// Adaptive Simpson quadrature for smooth 1-d integrands.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson_rule(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson_rule(a, m, fa, flm, fm);
        let right = simpson_rule(m, b, fm, frm, fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson_rule(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Eigen-decomposition of a symmetric 3×3 matrix by cyclic Jacobi rotations.
/// Returns (eigenvectors as rows, eigenvalues). Deterministic.
pub fn jacobi_eigen3(mat: &[[f64; 3]; 3]) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut a = *mat;
    let mut v = [[0.0; 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..32 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off < 1e-30 {
            break;
        }
        for p in 0..2 {
            for q in p + 1..3 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..3 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    // columns of v are eigenvectors; return them as rows
    let vecs = [
        [v[0][0], v[1][0], v[2][0]],
        [v[0][1], v[1][1], v[2][1]],
        [v[0][2], v[1][2], v[2][2]],
    ];
    (vecs, [a[0][0], a[1][1], a[2][2]])
}

/// One-sided dispersive tail `∫_{s_edge}^∞ B ds` from a rational profile
/// `B(s) ≈ C/(b + s²)` fit to `(|s|, B)` samples.
///
/// `1/B` is linear in `s²` for the exact profile, so the fit solves the line
/// through the means of an inner and an outer sample group; exact for
/// Gaussian data at the Strichartz exponent and asymptotically correct for
/// smooth compactly supported data. Returns `None` when the band does not
/// decay.
pub fn rational_tail(points: &[(f64, f64)], s_edge: f64) -> Option<f64> {
    if points.len() < 4 {
        return None;
    }
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mid = sorted.len() / 2;
    let group = |part: &[(f64, f64)]| -> Option<(f64, f64)> {
        let m = part.len() as f64;
        let u = part.iter().map(|(s, _)| s * s).sum::<f64>() / m;
        let mut v = 0.0;
        for &(_, b) in part {
            if b <= 0.0 {
                return None;
            }
            v += 1.0 / b;
        }
        Some((u, v / m))
    };
    let (u1, v1) = group(&sorted[..mid])?;
    let (u2, v2) = group(&sorted[mid..])?;
    if v2 <= v1 || u2 <= u1 {
        return None;
    }
    let inv_c = (v2 - v1) / (u2 - u1);
    if inv_c <= 0.0 {
        return None;
    }
    let c = 1.0 / inv_c;
    let b = (c * v1 - u1).max(0.0);
    let tail = if b > 1e-12 {
        let rb = b.sqrt();
        c / rb * (std::f64::consts::FRAC_PI_2 - (s_edge / rb).atan())
    } else {
        c / s_edge
    };
    Some(tail.max(0.0))
}

/// Euclidean norm of the first `d+1` components.
pub fn norm3(p: &[f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

pub fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    (d0 * d0 + d1 * d1 + d2 * d2).sqrt()
}

pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
