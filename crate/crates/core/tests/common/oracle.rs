//! Brute-force reference implementations used as test oracles. Nothing here
//! calls the LP backend.

use neuralparc::linalg::Matrix;
use neuralparc::HPolytope;
use rand::Rng;

/// Gaussian elimination with partial pivoting; `None` when (near) singular.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &bi)| r.iter().copied().chain([bi]).collect()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

pub fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            go(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, m, k, &mut Vec::new(), &mut out);
    out
}

/// Largest normalized row violation.
pub fn violation(a: &[Vec<f64>], b: &[f64], x: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(r, &bi)| {
            let nrm = r.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            (r.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() - bi) / nrm
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Vertices of a bounded `{x | a x <= b}` by trying every `n`-subset of rows.
pub fn vertices(a: &[Vec<f64>], b: &[f64]) -> Vec<Vec<f64>> {
    let n = a[0].len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for idx in combinations(a.len(), n) {
        let sub: Vec<Vec<f64>> = idx.iter().map(|&i| a[i].clone()).collect();
        let rhs: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
        if let Some(x) = solve_dense(&sub, &rhs) {
            if violation(a, b, &x) <= 1e-9 && !out.iter().any(|v| v.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-9)) {
                out.push(x);
            }
        }
    }
    out
}

pub fn rows_of(p: &HPolytope) -> (Vec<Vec<f64>>, Vec<f64>) {
    (p.a().to_rows(), p.b().to_vec())
}

pub fn hpoly(a: &[Vec<f64>], b: &[f64]) -> HPolytope {
    HPolytope::new(Matrix::from_rows(a, a[0].len()).unwrap(), b.to_vec()).unwrap()
}

fn unit_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 0.1 && nrm <= 1.0 {
            return v.into_iter().map(|x| x / nrm).collect();
        }
    }
}

/// Random bounded polytope in `[-3, 3]^n` around a random interior center:
/// `extra` unit-normal rows plus the box rows.
pub fn random_polytope(rng: &mut impl Rng, n: usize, extra: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for _ in 0..extra {
        let r = unit_vector(rng, n);
        b.push(r.iter().zip(&c).map(|(p, q)| p * q).sum::<f64>() + rng.gen_range(0.3..1.5));
        a.push(r);
    }
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        a.push(e.clone());
        b.push(3.0);
        e[i] = -1.0;
        a.push(e);
        b.push(3.0);
    }
    (a, b)
}

/// A random convex combination of the given points (vertices get extra weight).
pub fn convex_combination(rng: &mut impl Rng, pts: &[Vec<f64>]) -> Vec<f64> {
    if rng.gen_bool(0.1) {
        return pts[rng.gen_range(0..pts.len())].clone();
    }
    let w: Vec<f64> = pts.iter().map(|_| -rng.gen_range(1e-12_f64..1.0).ln()).collect();
    let s: f64 = w.iter().sum();
    let mut x = vec![0.0; pts[0].len()];
    for (p, wi) in pts.iter().zip(&w) {
        for (xi, pi) in x.iter_mut().zip(p) {
            *xi += pi * wi / s;
        }
    }
    x
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub fn hull2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    if p.len() < 3 {
        return p;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 1e-14 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 1e-14 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) };
    ((p[0] - a[0] - t * d[0]).powi(2) + (p[1] - a[1] - t * d[1]).powi(2)).sqrt()
}

/// Signed distance-like classifier for a CCW hull: negative strictly inside,
/// positive outside. Degenerate hulls (point, segment) are never "inside".
pub fn hull_violation(hull: &[[f64; 2]], p: [f64; 2]) -> f64 {
    match hull.len() {
        0 => f64::INFINITY,
        1 => segment_distance(hull[0], hull[0], p),
        2 => segment_distance(hull[0], hull[1], p),
        n => (0..n)
            .map(|i| {
                let (a, b) = (hull[i], hull[(i + 1) % n]);
                let e = [b[0] - a[0], b[1] - a[1]];
                let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
                (e[1] * (p[0] - a[0]) - e[0] * (p[1] - a[1])) / len
            })
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// `C v + d` for every vertex, as 2-D points.
pub fn image_points(verts: &[Vec<f64>], c: &[Vec<f64>], d: &[f64]) -> Vec<[f64; 2]> {
    verts
        .iter()
        .map(|v| {
            let y: Vec<f64> = c.iter().zip(d).map(|(r, di)| r.iter().zip(v).map(|(p, q)| p * q).sum::<f64>() + di).collect();
            [y[0], y[1]]
        })
        .collect()
}
