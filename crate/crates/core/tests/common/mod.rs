#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn random_psd<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &g * g.transpose() + DMatrix::identity(d, d) * 0.05
}

pub fn random_invertible<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    loop {
        let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = a.clone().svd(false, false).singular_values;
        if s.min() > 0.2 {
            return a;
        }
    }
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = m.clone().symmetric_eigen();
    &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(|x| x.max(0.0).sqrt())) * e.eigenvectors.transpose()
}

fn top_eig(m: &DMatrix<f64>) -> (f64, nalgebra::DVector<f64>) {
    let e = m.clone().symmetric_eigen();
    let i = e.eigenvalues.imax();
    (e.eigenvalues[i], e.eigenvectors.column(i).into_owned())
}

/// Min-det cover of `{J_i + eps·1}` by the central-cut ellipsoid method on
/// `B = j⁻¹`: maximize `log det B` subject to `C_i B C_i ⪯ 1`.
/// Returns `det j`.
pub fn ellipsoid_min_det(js: &[DMatrix<f64>], eps: f64, iterations: usize) -> f64 {
    let d = js[0].nrows();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|k| (k..d).map(move |l| (k, l))).collect();
    let n = pairs.len();
    let roots: Vec<DMatrix<f64>> = js.iter().map(|j| sym_sqrt(&(j + DMatrix::identity(d, d) * eps))).collect();
    let to_mat = |x: &[f64]| {
        let mut b = DMatrix::zeros(d, d);
        for (v, &(k, l)) in x.iter().zip(&pairs) {
            b[(k, l)] = *v;
            b[(l, k)] = *v;
        }
        b
    };
    // entries of a feasible B are bounded by the smallest tr (J_i + eps)⁻¹
    let radius = js
        .iter()
        .map(|j| (j + DMatrix::identity(d, d) * eps).try_inverse().unwrap().trace())
        .fold(f64::INFINITY, f64::min);
    let mut x = vec![0.0; n];
    for (i, &(k, l)) in pairs.iter().enumerate() {
        if k == l {
            x[i] = radius / (2.0 * d as f64);
        }
    }
    let mut p = DMatrix::identity(n, n) * (radius * radius);
    let mut best = f64::NEG_INFINITY;
    let nf = n as f64;
    // ∂/∂x of tr(G B) for the entry coordinates
    let grad_of = |g: &DMatrix<f64>| -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(n, pairs.iter().map(|&(k, l)| if k == l { g[(k, l)] } else { 2.0 * g[(k, l)] }))
    };
    for _ in 0..iterations {
        let b = to_mat(&x);
        let e = b.clone().symmetric_eigen();
        let imin = e.eigenvalues.imin();
        // subgradient of a convex function to be pushed down
        let g = if e.eigenvalues[imin] <= 0.0 {
            let u = e.eigenvectors.column(imin).into_owned();
            grad_of(&(-(&u * u.transpose())))
        } else if let Some(c) = roots.iter().find(|c| top_eig(&(*c * &b * *c)).0 > 1.0) {
            let (_, v) = top_eig(&(c * &b * c));
            let w = c * v;
            grad_of(&(&w * w.transpose()))
        } else {
            let ld = e.eigenvalues.iter().map(|v| v.ln()).sum::<f64>();
            best = best.max(ld);
            grad_of(&(-b.try_inverse().unwrap()))
        };
        let pg = &p * &g;
        let norm = g.dot(&pg).sqrt();
        if !(norm > 0.0) {
            break;
        }
        let gt = pg / norm;
        for i in 0..n {
            x[i] -= gt[i] / (nf + 1.0);
        }
        p = (&p - &gt * gt.transpose() * (2.0 / (nf + 1.0))) * (nf * nf / (nf * nf - 1.0));
        p = (&p + p.transpose()) * 0.5;
    }
    (-best).exp()
}

/// Dense grid over `j = [[a, c], [c, b]]`: for each `(a, c)` the smallest
/// feasible `b` is explicit, and the grid is refined around the best cell.
pub fn grid_min_det_2x2(js: &[DMatrix<f64>], eps: f64) -> f64 {
    let js: Vec<DMatrix<f64>> = js.iter().map(|j| j + DMatrix::identity(2, 2) * eps).collect();
    let a_min = js.iter().map(|j| j[(0, 0)]).fold(f64::NEG_INFINITY, f64::max);
    let scale = js.iter().map(|j| j.trace()).fold(0.0, f64::max);
    let det_at = |a: f64, c: f64| -> f64 {
        let b = js
            .iter()
            .map(|j| j[(1, 1)] + (c - j[(0, 1)]).powi(2) / (a - j[(0, 0)]))
            .fold(f64::NEG_INFINITY, f64::max);
        a * b - c * c
    };
    let (mut a_lo, mut a_hi) = (a_min, a_min + 4.0 * scale);
    let (mut c_lo, mut c_hi) = (-2.0 * scale, 2.0 * scale);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let steps = 200;
    for _ in 0..12 {
        for i in 1..=steps {
            let a = a_lo + (a_hi - a_lo) * i as f64 / steps as f64;
            for k in 0..=steps {
                let c = c_lo + (c_hi - c_lo) * k as f64 / steps as f64;
                let v = det_at(a, c);
                if v < best.0 {
                    best = (v, a, c);
                }
            }
        }
        let (wa, wc) = ((a_hi - a_lo) / 10.0, (c_hi - c_lo) / 10.0);
        a_lo = (best.1 - wa).max(a_min);
        a_hi = best.1 + wa;
        c_lo = best.2 - wc;
        c_hi = best.2 + wc;
    }
    best.0
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
