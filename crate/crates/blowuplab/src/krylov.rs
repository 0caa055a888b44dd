//! Krylov and subspace eigen-solvers for symmetric operators on `ℝ^m`.
//! Reductions use fixed chunking so results do not depend on thread count.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const CHUNK: usize = 8192;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    partial.iter().sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += s·x`
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, xi)| *yi += s * xi);
}

pub fn scale(s: f64, x: &mut [f64]) {
    x.par_iter_mut().for_each(|v| *v *= s);
}

#[derive(Debug, Clone)]
pub struct MinresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    /// Smallest |Ritz value| of the Lanczos tridiagonal built along the way.
    pub min_ritz: f64,
}

/// MINRES (Paige–Saunders) for symmetric `op`. The residual estimate is the
/// recurrence value; `x0` is an optional starting guess.
pub fn minres<F>(op: F, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> MinresOutcome
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = b.len();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; m]);
    let mut r1 = b.to_vec();
    if x0.is_some() {
        let ax = op(&x);
        axpy(-1.0, &ax, &mut r1);
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return MinresOutcome { x: vec![0.0; m], iterations: 0, relative_residual: 0.0, converged: true, min_ritz: f64::INFINITY };
    }
    let beta1 = norm(&r1);
    if beta1 <= tol * bnorm {
        return MinresOutcome { x, iterations: 0, relative_residual: beta1 / bnorm, converged: true, min_ritz: f64::INFINITY };
    }
    let mut v_old = vec![0.0; m];
    let mut v = r1.clone();
    scale(1.0 / beta1, &mut v);
    let mut w_old = vec![0.0; m];
    let mut w = vec![0.0; m];
    let (mut c_old, mut s_old, mut c, mut s) = (1.0, 0.0, 1.0, 0.0);
    let mut eta = beta1;
    let mut beta = beta1;
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut iterations = 0;
    let mut resid = beta1;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut av = op(&v);
        let alpha = dot(&v, &av);
        axpy(-alpha, &v, &mut av);
        axpy(-beta, &v_old, &mut av);
        let beta_next = norm(&av);
        alphas.push(alpha);
        betas.push(beta_next);
        // QR update with the last two rotations
        let delta = c * alpha - c_old * s * beta;
        let rho2 = s * alpha + c_old * c * beta;
        let rho3 = s_old * beta;
        let rho1 = (delta * delta + beta_next * beta_next).sqrt();
        let (c_new, s_new) = if rho1 == 0.0 { (1.0, 0.0) } else { (delta / rho1, beta_next / rho1) };
        let mut w_new = v.clone();
        axpy(-rho3, &w_old, &mut w_new);
        axpy(-rho2, &w, &mut w_new);
        if rho1 != 0.0 {
            scale(1.0 / rho1, &mut w_new);
        }
        axpy(c_new * eta, &w_new, &mut x);
        eta *= -s_new;
        resid = eta.abs();
        w_old = std::mem::replace(&mut w, w_new);
        c_old = c;
        s_old = s;
        c = c_new;
        s = s_new;
        if resid <= tol * bnorm || beta_next <= 1e-300 {
            converged = resid <= tol * bnorm || beta_next <= 1e-300;
            break;
        }
        scale(1.0 / beta_next, &mut av);
        v_old = std::mem::replace(&mut v, av);
        beta = beta_next;
    }
    let min_ritz = tridiagonal_min_abs(&alphas, &betas);
    MinresOutcome { x, iterations, relative_residual: resid / bnorm, converged, min_ritz }
}

fn tridiagonal_min_abs(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    if k == 0 {
        return f64::INFINITY;
    }
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    SymmetricEigen::new(t).eigenvalues.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
}

/// Orthonormalizes `vectors` in place (two passes of modified Gram–Schmidt
/// against `basis` and each other); drops numerically dependent vectors.
pub fn orthonormalize(basis: &[Vec<f64>], vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors {
        let start = norm(&v);
        if start == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in basis.iter().chain(out.iter()) {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
            }
        }
        let nv = norm(&v);
        if nv > 1e-10 * start {
            scale(1.0 / nv, &mut v);
            out.push(v);
        }
    }
    out
}

pub fn random_vectors(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

#[derive(Debug, Clone)]
pub struct RitzPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Rayleigh–Ritz of `op` on the span of orthonormal `basis`, where
/// `images[i] = op(basis[i])`. Pairs are sorted by decreasing |value|.
pub fn rayleigh_ritz(basis: &[Vec<f64>], images: &[Vec<f64>]) -> RitzPairs {
    let k = basis.len();
    let mut h = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
    let dim = basis.first().map_or(0, |b| b.len());
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    for &c in &order {
        values.push(eig.eigenvalues[c]);
        let mut v = vec![0.0; dim];
        for (i, b) in basis.iter().enumerate() {
            axpy(eig.eigenvectors[(i, c)], b, &mut v);
        }
        vectors.push(v);
    }
    RitzPairs { values, vectors }
}

/// Randomized subspace iteration for the dominant eigenpairs of symmetric `op`.
/// `start` vectors are orthonormalized first (and may be empty of content).
pub fn subspace_iteration<F>(op: F, start: Vec<Vec<f64>>, iterations: usize) -> RitzPairs
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut q = orthonormalize(&[], start);
    for _ in 0..iterations {
        let y: Vec<Vec<f64>> = q.iter().map(|v| op(v)).collect();
        let next = orthonormalize(&[], y);
        if next.is_empty() {
            return RitzPairs { values: vec![0.0; q.len()], vectors: q };
        }
        q = next;
    }
    let images: Vec<Vec<f64>> = q.iter().map(|v| op(v)).collect();
    rayleigh_ritz(&q, &images)
}

/// Rayleigh–Ritz on the block Krylov space `span{Q, AQ, …, A^{blocks-1}Q}`
/// with full reorthogonalization.
pub fn block_krylov<F>(op: F, start: Vec<Vec<f64>>, blocks: usize) -> RitzPairs
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut basis = orthonormalize(&[], start);
    let mut images: Vec<Vec<f64>> = basis.iter().map(|v| op(v)).collect();
    let mut last = 0;
    for _ in 1..blocks {
        let candidates: Vec<Vec<f64>> = images[last..].to_vec();
        let new = orthonormalize(&basis, candidates);
        if new.is_empty() {
            break;
        }
        last = basis.len();
        let new_images: Vec<Vec<f64>> = new.iter().map(|v| op(v)).collect();
        basis.extend(new);
        images.extend(new_images);
    }
    rayleigh_ritz(&basis, &images)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_op(d: &[f64]) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        move |x: &[f64]| x.iter().zip(d).map(|(a, b)| a * b).collect()
    }

    #[test]
    fn minres_indefinite_diagonal() {
        let d: Vec<f64> = (0..200).map(|i| if i % 3 == 0 { -1.0 - i as f64 / 50.0 } else { 0.5 + i as f64 / 100.0 }).collect();
        let b: Vec<f64> = (0..200).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let out = minres(diag_op(&d), &b, None, 1e-12, 500);
        assert!(out.converged);
        for i in 0..200 {
            assert!((out.x[i] - b[i] / d[i]).abs() < 1e-9);
        }
        assert!(out.min_ritz > 0.4);
    }

    #[test]
    fn minres_warm_start_and_zero_rhs() {
        let d: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let b = vec![1.0; 50];
        let x0 = vec![0.3; 50];
        let out = minres(diag_op(&d), &b, Some(&x0), 1e-12, 200);
        for i in 0..50 {
            assert!((out.x[i] - 1.0 / d[i]).abs() < 1e-10);
        }
        let zero = minres(diag_op(&d), &[0.0; 50], None, 1e-12, 10);
        assert!(zero.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn subspace_finds_dominant_values() {
        let d: Vec<f64> = (0..300).map(|i| if i < 3 { 10.0 - i as f64 } else { 1.0 / (1.0 + i as f64) }).collect();
        let pairs = subspace_iteration(diag_op(&d), random_vectors(300, 6, 1), 40);
        assert!((pairs.values[0] - 10.0).abs() < 1e-10);
        assert!((pairs.values[2] - 8.0).abs() < 1e-10);
    }

    #[test]
    fn block_krylov_finds_isolated_zero() {
        // eigenvalue 0 isolated inside the spectrum
        let d: Vec<f64> = (0..400).map(|i| if i == 7 { 0.0 } else if i < 5 { -2.0 + i as f64 * 0.1 } else { 1.0 + 1.0 / (i as f64) }).collect();
        let pairs = block_krylov(diag_op(&d), random_vectors(400, 10, 3), 8);
        let zero = pairs.values.iter().cloned().map(f64::abs).fold(f64::INFINITY, f64::min);
        assert!(zero < 1e-8, "{zero}");
    }

    #[test]
    fn dot_is_thread_count_independent() {
        let a: Vec<f64> = (0..100_000).map(|i| (i as f64 * 0.37).sin()).collect();
        let first = dot(&a, &a);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let second = pool.install(|| dot(&a, &a));
        assert_eq!(first.to_bits(), second.to_bits());
    }
}
