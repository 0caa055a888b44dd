//! Nonlinear reduction: Picard iteration of `T_α` in the weighted norm
//! `‖φ‖_* = ‖φ/(νΣ_{i≥0}B_i + ΣΘ_iB_i)‖_∞`, producing `u_α = 𝒲_α + φ_α`.

use rayon::prelude::*;
use serde::Serialize;

use crate::ansatz::{f, f_prime, residual, residual_constant, residual_majorant, Ansatz, Background};
use crate::bubble_tree::TreeAnalysis;
use crate::linear_solver::{certify_rhs, sigma_proxy, solve_projected, verify_estopt, LinearSolution, SolverOptions};
use crate::manifold::{DiscreteManifold, Field};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointConfig {
    /// Mean-value splitting exponent in `(0, 2*-2]`; `None` means `2*-2`.
    pub tau: Option<f64>,
    /// Overrides the computed `ν_α`.
    pub nu: Option<f64>,
    /// Overrides the measured `2C₀C₁`.
    pub s_budget: Option<f64>,
    pub max_picard: usize,
    pub star_tolerance: f64,
    /// Observed increment ratio above which the iteration is abandoned.
    pub contraction_limit: f64,
    pub solver: SolverOptions,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tau: None,
            nu: None,
            s_budget: None,
            max_picard: 50,
            star_tolerance: 1e-9,
            contraction_limit: 0.9,
            solver: SolverOptions { tolerance: 1e-12, ..SolverOptions::default() },
        }
    }
}

impl FixedPointConfig {
    pub fn tau(&self, n: usize) -> Result<f64> {
        let top = 4.0 / (n as f64 - 2.0);
        let t = self.tau.unwrap_or(top);
        if !(t > 0.0 && t <= top) {
            return Err(Error::Precondition(format!("tau = {t} must lie in (0, {top}]")));
        }
        Ok(t)
    }
}

/// `f(𝒲 + φ) - f(𝒲) - f'(𝒲)φ`.
pub fn nonlinear_remainder(ansatz: &Ansatz, phi: &Field) -> Result<Field> {
    if phi.len() != ansatz.total.len() {
        return Err(Error::ShapeMismatch { expected: ansatz.total.len(), found: phi.len() });
    }
    let n = ansatz.n;
    Ok(ansatz.total.zip_map(phi, |w, p| f(w + p, n) - f(w, n) - f_prime(w, n) * p))
}

/// `T(φ)`: the `K_α^⊥` solution of `(Δ + h_α - f'(𝒲))T = R̃ + N(φ) + Σλ(Δ+1)Z`.
pub fn contraction_step(
    m: &DiscreteManifold,
    ansatz: &Ansatz,
    h_alpha: &Field,
    r_tilde: &Field,
    phi: &Field,
    options: &SolverOptions,
) -> Result<LinearSolution> {
    if !phi.is_finite() {
        return Err(Error::Domain("iterate must be finite".into()));
    }
    let rhs = r_tilde.add(&nonlinear_remainder(ansatz, phi)?);
    solve_projected(m, ansatz, h_alpha, &rhs, options)
}

/// `νΣ_{i≥0}B_i + ΣΘ_iB_i`.
pub fn star_denominator(ansatz: &Ansatz, nu: f64) -> Field {
    let b0 = if ansatz.b0_indicator { 1.0 } else { 0.0 };
    let values: Vec<f64> = (0..ansatz.total.len())
        .into_par_iter()
        .map(|idx| {
            let mut s = nu * b0;
            for (b, w) in ansatz.b_fields.iter().zip(&ansatz.weights) {
                let bi = b.values()[idx];
                s += nu * bi + w.big_theta.values()[idx] * bi;
            }
            s
        })
        .collect();
    ansatz.total.with_values(values)
}

/// `‖φ/denominator‖_∞` with the grid index of the maximum.
pub fn star_norm(phi: &Field, denominator: &Field) -> (f64, usize) {
    phi.values()
        .par_iter()
        .zip(denominator.values().par_iter())
        .enumerate()
        .map(|(i, (p, d))| (p.abs() / d, i))
        .reduce(|| (0.0, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
}

/// `‖T(a) - T(b)‖_*/‖a - b‖_*`.
pub fn contraction_ratio(
    m: &DiscreteManifold,
    ansatz: &Ansatz,
    h_alpha: &Field,
    r_tilde: &Field,
    a: &Field,
    b: &Field,
    denominator: &Field,
    options: &SolverOptions,
) -> Result<f64> {
    let ta = contraction_step(m, ansatz, h_alpha, r_tilde, a, options)?;
    let tb = contraction_step(m, ansatz, h_alpha, r_tilde, b, options)?;
    let num = star_norm(&ta.phi.sub(&tb.phi), denominator).0;
    let den = star_norm(&a.sub(b), denominator).0;
    Ok(num / den)
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointResult {
    pub alpha: f64,
    #[serde(skip)]
    pub phi: Field,
    pub multipliers: Vec<Vec<f64>>,
    pub picard_iterations: usize,
    /// `‖φ_{k+1} - φ_k‖_*` per step.
    pub star_history: Vec<f64>,
    /// Ratios of consecutive increments.
    pub contraction_factors: Vec<f64>,
    pub star_norm: f64,
    pub in_s_alpha: bool,
    /// `max |φ|/(S_budget·denominator)`; membership iff `≤ 1`.
    pub s_ratio: f64,
    pub h1_norm: f64,
    pub nu: f64,
    pub tau: f64,
    pub sigma_proxy: f64,
    pub epsilon: f64,
    pub c0: f64,
    pub c1: f64,
    pub s_budget: f64,
    /// `max |u_α - u_0 - ΣV_i|/(B_0 + ΣB_i)` and its grid point.
    pub e_alpha: f64,
    pub e_argmax: Vec<f64>,
}

/// Picard iteration from `φ₀ = 0`.
pub fn run_reduction(
    m: &DiscreteManifold,
    ansatz: &Ansatz,
    background: &Background,
    h_alpha: &Field,
    tree: &TreeAnalysis,
    config: &FixedPointConfig,
) -> Result<FixedPointResult> {
    run_reduction_from(m, ansatz, background, h_alpha, tree, config, None)
}

/// As [`run_reduction`] with an optional starting iterate.
pub fn run_reduction_from(
    m: &DiscreteManifold,
    ansatz: &Ansatz,
    background: &Background,
    h_alpha: &Field,
    tree: &TreeAnalysis,
    config: &FixedPointConfig,
    start: Option<Field>,
) -> Result<FixedPointResult> {
    let n = m.dimension();
    let tau = config.tau(n)?;
    let h_gap = h_alpha.sub(&background.h).max_abs();
    let r_tilde = residual(m, &ansatz.total, h_alpha)?.scaled(-1.0);
    let c1 = residual_constant(&r_tilde, &residual_majorant(ansatz, h_gap));
    let sigma = sigma_proxy(tree, h_gap);
    let eps = ansatz.budget;
    let nu = config.nu.unwrap_or_else(|| (2.0 * sigma + h_gap + eps).sqrt().min(1.0));
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::Precondition(format!("nu = {nu} must lie in (0, 1]")));
    }
    let denom = star_denominator(ansatz, nu);

    let mut phi = start.unwrap_or_else(|| m.zeros());
    let mut history = Vec::new();
    let mut factors = Vec::new();
    let mut multipliers = Vec::new();
    let mut c0 = None;
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..config.max_picard {
        let sol = contraction_step(m, ansatz, h_alpha, &r_tilde, &phi, &config.solver)?;
        iterations = k + 1;
        if c0.is_none() {
            let cert = certify_rhs(ansatz, &r_tilde, c1 * (eps + h_gap), c1 * eps, c1);
            c0 = Some(verify_estopt(&sol, ansatz, &cert, sigma).ratio_max);
        }
        let inc = star_norm(&sol.phi.sub(&phi), &denom).0;
        if let Some(&prev) = history.last() {
            let factor: f64 = if prev > 0.0 { inc / prev } else { 0.0 };
            factors.push(factor);
            if prev > 100.0 * config.star_tolerance && factor > config.contraction_limit {
                return Err(Error::NoContraction { factor, iteration: iterations });
            }
        }
        history.push(inc);
        phi = sol.phi;
        multipliers = sol.multipliers;
        if inc < config.star_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence { iterations, residual: *history.last().unwrap_or(&f64::NAN) });
    }
    let c0 = c0.unwrap_or(0.0);
    let s_budget = config.s_budget.unwrap_or(2.0 * c0 * c1);
    let (star, worst) = star_norm(&phi, &denom);
    let s_ratio = if s_budget > 0.0 { star / s_budget } else if star == 0.0 { 0.0 } else { f64::INFINITY };
    let in_s_alpha = s_ratio <= 1.0;
    if !in_s_alpha {
        return Err(Error::EstimateViolation { ratio: s_ratio, index: worst });
    }
    let h1_norm = m.h1_inner(&phi, &phi)?.max(0.0).sqrt();
    let (e_alpha, e_idx) = c0_error(ansatz, &background.u0, &phi);
    Ok(FixedPointResult {
        alpha: ansatz.alpha,
        phi,
        multipliers,
        picard_iterations: iterations,
        star_history: history,
        contraction_factors: factors,
        star_norm: star,
        in_s_alpha,
        s_ratio,
        h1_norm,
        nu,
        tau,
        sigma_proxy: sigma,
        epsilon: eps,
        c0,
        c1,
        s_budget,
        e_alpha,
        e_argmax: m.grid_point(e_idx),
    })
}

/// `max |𝒲 + φ - u_0 - ΣV_i|/(B_0 + ΣB_i)`.
pub fn c0_error(ansatz: &Ansatz, u0: &Field, phi: &Field) -> (f64, usize) {
    let b0 = if ansatz.b0_indicator { 1.0 } else { 0.0 };
    (0..phi.len())
        .into_par_iter()
        .map(|idx| {
            let mut diff = ansatz.total.values()[idx] + phi.values()[idx] - u0.values()[idx];
            let mut den = b0;
            for (v, b) in ansatz.bubbles.iter().zip(&ansatz.b_fields) {
                diff -= v.values()[idx];
                den += b.values()[idx];
            }
            (diff.abs() / den, idx)
        })
        .reduce(|| (0.0, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C0Report {
    pub alphas: Vec<f64>,
    pub e_values: Vec<f64>,
    pub strictly_decreasing: bool,
    pub halved: bool,
    pub pass: bool,
}

pub fn verify_c0(results: &[FixedPointResult]) -> C0Report {
    let alphas: Vec<f64> = results.iter().map(|r| r.alpha).collect();
    let e_values: Vec<f64> = results.iter().map(|r| r.e_alpha).collect();
    let strictly_decreasing = e_values.windows(2).all(|w| w[1] < w[0]);
    let halved = match (e_values.first(), e_values.last()) {
        (Some(a), Some(b)) => *b <= 0.5 * a,
        _ => false,
    };
    C0Report { alphas, e_values, strictly_decreasing, halved, pass: strictly_decreasing && halved && !results.is_empty() }
}
