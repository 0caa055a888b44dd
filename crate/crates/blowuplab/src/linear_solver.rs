//! Projected linearized problem around `𝒲_α`: solve with multipliers,
//! certify coercivity, and check the pointwise bound on the solution.
//!
//! With `M = (Δ+1)^{-1/2}` and `ψ = M^{-1}φ` the operator
//! `A = Δ + h_α - f'(𝒲_α)` becomes `MAM = I - MgM`, `g = f'(𝒲_α) + 1 - h_α`.
//! H¹-orthogonality to `Z` is L²-orthogonality of `ψ` to `Ẑ = M^{-1}Z`, so the
//! constrained problem is a symmetric system on the range of a projector.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::ansatz::{f_prime, Ansatz};
use crate::bubble_tree::TreeAnalysis;
use crate::krylov;
use crate::manifold::{DiscreteManifold, Field};
use crate::{Error, Result};

pub const DEFAULT_MIN_RESOLVED_SPACINGS: f64 = 6.0;
const COERCIVITY_FLOOR: f64 = 1e-6;
const GRAM_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Random initial guess (projected) when set; zero otherwise.
    pub seed: Option<u64>,
    pub min_resolved_spacings: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 2000, seed: None, min_resolved_spacings: DEFAULT_MIN_RESOLVED_SPACINGS }
    }
}

/// Fails when some scale is below `min_spacings` grid spacings.
pub fn check_resolution(m: &DiscreteManifold, scales: &[f64], min_spacings: f64) -> Result<()> {
    let h = m.spacing();
    for &mu in scales {
        if mu < min_spacings * h {
            return Err(Error::Resolution { scale: mu, spacing: h, required: min_spacings });
        }
    }
    Ok(())
}

/// Witness of `|R| ≤ τB_0 + ηΣB_i^{2*-1} + γ(ΣB_i + Σ_{i≠j}B_i^{2*-2}B_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhsCertificate {
    pub tau: f64,
    pub eta: f64,
    pub gamma: f64,
    /// `max |R|/majorant` over the grid; the bound holds iff `≤ 1`.
    pub max_ratio: f64,
}

impl RhsCertificate {
    pub fn holds(&self) -> bool {
        self.max_ratio <= 1.0 + 1e-12
    }
}

pub fn certify_rhs(ansatz: &Ansatz, rhs: &Field, tau: f64, eta: f64, gamma: f64) -> RhsCertificate {
    let n = ansatz.n;
    let p = 4.0 / (n as f64 - 2.0);
    let b0 = if ansatz.b0_indicator { 1.0 } else { 0.0 };
    let k = ansatz.b_fields.len();
    let max_ratio = (0..rhs.len())
        .into_par_iter()
        .map(|idx| {
            let b: Vec<f64> = ansatz.b_fields.iter().map(|f| f.values()[idx]).collect();
            let mut maj = tau * b0;
            for i in 0..k {
                maj += eta * b[i].powf(p + 1.0) + gamma * b[i];
            }
            let mut all = vec![b0];
            all.extend(&b);
            for i in 0..=k {
                for j in 0..=k {
                    if i != j && all[i] > 0.0 {
                        maj += gamma * all[i].powf(p) * all[j];
                    }
                }
            }
            let r = rhs.values()[idx].abs();
            if maj > 0.0 {
                r / maj
            } else if r == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .reduce(|| 0.0, f64::max);
    RhsCertificate { tau, eta, gamma, max_ratio }
}

/// `MAM` restricted to the L²-complement of `Ẑ` (or unrestricted).
pub struct ProjectedOperator<'a> {
    m: &'a DiscreteManifold,
    g: Vec<f64>,
    basis: Vec<Vec<f64>>,
    family: Vec<Field>,
    gram: DMatrix<f64>,
}

impl<'a> ProjectedOperator<'a> {
    /// `project = false` drops the kernel constraint.
    pub fn new(m: &'a DiscreteManifold, ansatz: &Ansatz, h_alpha: &Field, project: bool) -> Result<Self> {
        m.check(h_alpha)?;
        m.check(&ansatz.total)?;
        let n = m.dimension();
        let g: Vec<f64> = ansatz
            .total
            .values()
            .par_iter()
            .zip(h_alpha.values().par_iter())
            .map(|(&w, &h)| f_prime(w, n) + 1.0 - h)
            .collect();
        let family: Vec<Field> = if project { ansatz.kernel_family().into_iter().cloned().collect() } else { Vec::new() };
        let d = family.len();
        let gram = DMatrix::from_fn(d, d, |a, b| ansatz.gram[a][b]);
        if d > 0 {
            let low = SymmetricEigen::new(gram.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if low <= GRAM_FLOOR {
                return Err(Error::Precondition(format!("kernel Gram matrix has eigenvalue {low:.3e} ≤ {GRAM_FLOOR}")));
            }
        }
        let hats: Vec<Vec<f64>> =
            family.par_iter().map(|z| m.radial_multiplier(z, |k2| (k2 + 1.0).sqrt()).into_values()).collect();
        let basis = krylov::orthonormalize(&[], hats);
        Ok(Self { m, g, basis, family, gram })
    }

    pub fn dimension(&self) -> usize {
        self.g.len()
    }

    fn field(&self, v: Vec<f64>) -> Field {
        Field::from_vec_unchecked(self.m.dimension(), self.m.grid_points(), v)
    }

    /// `Mv`
    pub fn precondition(&self, v: &[f64]) -> Vec<f64> {
        self.m.radial_multiplier(&self.field(v.to_vec()), |k2| 1.0 / (k2 + 1.0).sqrt()).into_values()
    }

    pub fn project(&self, v: &mut [f64]) {
        for q in &self.basis {
            let c = krylov::dot(q, v);
            krylov::axpy(-c, q, v);
        }
    }

    /// `PMgMP v`
    pub fn compact_part(&self, v: &[f64]) -> Vec<f64> {
        let mut x = v.to_vec();
        self.project(&mut x);
        let mut y = self.precondition(&x);
        y.par_iter_mut().zip(self.g.par_iter()).for_each(|(a, g)| *a *= g);
        let mut out = self.precondition(&y);
        self.project(&mut out);
        out
    }

    /// `P(I - MgM)P v + (I - P)v`: identity on `span Ẑ`, so roundoff left
    /// there by the projector never looks like a null direction.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let k = self.compact_part(v);
        let mut x = v.to_vec();
        x.par_iter_mut().zip(k.par_iter()).for_each(|(a, b)| *a -= b);
        x
    }
}

#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub phi: Field,
    /// Blocks aligned with `Ansatz::kernel_lifts`.
    pub multipliers: Vec<Vec<f64>>,
    /// `‖M(Aφ - R - Σλ(Δ+1)Z)‖/‖MR‖` (absolute when `R = 0`).
    pub residual: f64,
    pub iterations: usize,
    pub min_ritz: f64,
}

impl LinearSolution {
    pub fn multiplier_sum(&self) -> f64 {
        self.multipliers.iter().flatten().map(|l| l.abs()).sum()
    }
}

/// `Aφ = Δφ + h_αφ - f'(𝒲_α)φ`.
pub fn apply_linearized(m: &DiscreteManifold, ansatz: &Ansatz, h_alpha: &Field, phi: &Field) -> Result<Field> {
    let n = m.dimension();
    let lap = m.laplacian(phi)?;
    let pot = h_alpha.zip_map(&ansatz.total, |h, w| h - f_prime(w, n));
    Ok(lap.add(&pot.mul(phi)))
}

/// Solves `Aφ = R + Σλ(Δ+1)Z` with `⟨φ, Z⟩_{H¹} = 0` for every lift.
pub fn solve_projected(
    m: &DiscreteManifold,
    ansatz: &Ansatz,
    h_alpha: &Field,
    rhs: &Field,
    options: &SolverOptions,
) -> Result<LinearSolution> {
    m.check(rhs)?;
    check_resolution(m, &ansatz.scales, options.min_resolved_spacings)?;
    let op = ProjectedOperator::new(m, ansatz, h_alpha, true)?;
    let mut b = op.precondition(rhs.values());
    op.project(&mut b);
    let x0 = options.seed.map(|s| {
        let mut v = krylov::random_vectors(op.dimension(), 1, s).remove(0);
        let scale = krylov::norm(&b) / krylov::norm(&v).max(f64::MIN_POSITIVE);
        krylov::scale(scale, &mut v);
        op.project(&mut v);
        v
    });
    let out = krylov::minres(|v| op.apply(v), &b, x0.as_deref(), options.tolerance, options.max_iterations);
    if out.min_ritz < COERCIVITY_FLOOR && krylov::norm(&b) > 0.0 {
        return Err(Error::Coercivity(out.min_ritz));
    }
    if !out.converged {
        return Err(Error::Convergence { iterations: out.iterations, residual: out.relative_residual });
    }
    let mut psi = out.x;
    op.project(&mut psi);
    let phi = op.field(op.precondition(&psi));
    let (multipliers, residual) = extract_multipliers(m, ansatz, h_alpha, rhs, &phi, &op)?;
    Ok(LinearSolution { phi, multipliers, residual, iterations: out.iterations, min_ritz: out.min_ritz })
}

/// `λ = Gram^{-1}[⟨Aφ - R, Z_k⟩]` and the relative residual of the full equation.
fn extract_multipliers(
    m: &DiscreteManifold,
    ansatz: &Ansatz,
    h_alpha: &Field,
    rhs: &Field,
    phi: &Field,
    op: &ProjectedOperator,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let a_phi = apply_linearized(m, ansatz, h_alpha, phi)?;
    let defect = a_phi.sub(rhs);
    let d = op.family.len();
    let lambda = if d == 0 {
        DVector::zeros(0)
    } else {
        let proj = DVector::from_iterator(d, op.family.iter().map(|z| m.l2_inner(&defect, z)));
        op.gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Precondition("kernel Gram matrix is not positive definite".into()))?
            .solve(&proj)
    };
    let mut res = defect;
    for (l, z) in lambda.iter().zip(&op.family) {
        res.axpy(-l, &m.helmholtz(z, 1.0)?);
    }
    let rn = krylov::norm(&op.precondition(res.values()));
    let bn = krylov::norm(&op.precondition(rhs.values()));
    let residual = if bn > 0.0 { rn / bn } else { rn };
    let mut blocks = Vec::with_capacity(ansatz.kernel_lifts.len());
    let mut it = lambda.iter();
    for block in &ansatz.kernel_lifts {
        blocks.push(block.iter().map(|_| *it.next().unwrap()).collect());
    }
    Ok((blocks, residual))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityReport {
    /// Lower bound for the smallest singular value of `P(I - MgM)P`.
    pub sigma_min: f64,
    /// Singular values `|1 - κ|` for the captured dominant `κ` of `PMgMP`, ascending.
    pub singular_values: Vec<f64>,
    /// `1 - |κ|` for the smallest captured `|κ|`: floor for the uncaptured part.
    pub tail_floor: f64,
    pub projected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoercivityOptions {
    pub vectors: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for CoercivityOptions {
    fn default() -> Self {
        Self { vectors: 20, iterations: 50, seed: 11 }
    }
}

/// Subspace iteration on the compact part `K = PMgMP`. Uncaptured
/// eigenvalues satisfy `|κ| ≤ |κ_last|`, hence `|1-κ| ≥ 1-|κ_last|`.
pub fn coercivity_certificate(
    m: &DiscreteManifold,
    ansatz: &Ansatz,
    h_alpha: &Field,
    project: bool,
    options: &CoercivityOptions,
) -> Result<CoercivityReport> {
    let op = ProjectedOperator::new(m, ansatz, h_alpha, project)?;
    let smooth = |k2: f64| 1.0 / (k2 + 1.0);
    let start: Vec<Vec<f64>> = krylov::random_vectors(op.dimension(), options.vectors, options.seed)
        .into_iter()
        .map(|v| {
            let mut s = m.radial_multiplier(&op.field(v), smooth).into_values();
            op.project(&mut s);
            s
        })
        .collect();
    let pairs = krylov::subspace_iteration(|v| op.compact_part(v), start, options.iterations);
    let mut singular: Vec<f64> = pairs.values.iter().map(|k| (1.0 - k).abs()).collect();
    singular.sort_by(f64::total_cmp);
    let last = pairs.values.last().map_or(0.0, |k| k.abs());
    let tail_floor = 1.0 - last;
    let captured = singular.first().copied().unwrap_or(f64::INFINITY);
    Ok(CoercivityReport { sigma_min: captured.min(tail_floor), singular_values: singular, tail_floor, projected: project })
}

/// `σ̂ = ‖h_α - h‖_∞ + max_i(μ_i/r_i)^{n-2} + max(μ_j/μ_i)^{(n-2)/2} + max_i μ_i`,
/// the middle maximum over pairs with `p_j > p_i`.
pub fn sigma_proxy(tree: &TreeAnalysis, h_gap: f64) -> f64 {
    let q = tree.n as f64 - 2.0;
    let b = &tree.bubbles;
    let ratio = b.iter().map(|x| (x.mu / x.influence_radius).powf(q)).fold(0.0, f64::max);
    let mut sep: f64 = 0.0;
    for i in b {
        for j in b {
            if j.rate > i.rate + 1e-12 {
                sep = sep.max((j.mu / i.mu).powf(q / 2.0));
            }
        }
    }
    let top = b.iter().map(|x| x.mu).fold(0.0, f64::max);
    h_gap + ratio + sep + top
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstoptReport {
    pub alpha: f64,
    /// `max |φ|/[(τ+η+σγ)Σ_{i≥0}B_i + γΣ_{i≥1}Θ_iB_i]`
    pub ratio_max: f64,
    pub multiplier_sum: f64,
    /// `Σ|λ|/(τ+η+σγ)`
    pub multiplier_ratio: f64,
    pub sigma_proxy: f64,
    pub iterations: usize,
}

pub fn verify_estopt(solution: &LinearSolution, ansatz: &Ansatz, cert: &RhsCertificate, sigma: f64) -> EstoptReport {
    let scale = cert.tau + cert.eta + sigma * cert.gamma;
    let k = ansatz.b_fields.len();
    let b0 = if ansatz.b0_indicator { 1.0 } else { 0.0 };
    let ratio_max = (0..solution.phi.len())
        .into_par_iter()
        .map(|idx| {
            let mut sb = b0;
            let mut tb = 0.0;
            for i in 0..k {
                let b = ansatz.b_fields[i].values()[idx];
                sb += b;
                tb += ansatz.weights[i].big_theta.values()[idx] * b;
            }
            let den = scale * sb + cert.gamma * tb;
            let p = solution.phi.values()[idx].abs();
            if den > 0.0 {
                p / den
            } else if p == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .reduce(|| 0.0, f64::max);
    let multiplier_sum = solution.multiplier_sum();
    let multiplier_ratio = if scale > 0.0 { multiplier_sum / scale } else if multiplier_sum == 0.0 { 0.0 } else { f64::INFINITY };
    EstoptReport { alpha: ansatz.alpha, ratio_max, multiplier_sum, multiplier_ratio, sigma_proxy: sigma, iterations: solution.iterations }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ANorm {
    /// `‖φ/ΣB_i‖_∞`
    pub value_term: f64,
    /// `‖|∇φ|/(B_0 + Σθ_i^{-1}B_i)‖_∞`
    pub gradient_term: f64,
}

impl ANorm {
    pub fn total(&self) -> f64 {
        self.value_term + self.gradient_term
    }
}

/// `‖φ/ΣB_i‖_∞ + ‖|∇φ|/(B_0 + Σθ_i^{-1}B_i)‖_∞`.
pub fn diagnostic_a_norm(m: &DiscreteManifold, phi: &Field, ansatz: &Ansatz) -> Result<f64> {
    Ok(a_norm_terms(m, phi, ansatz)?.total())
}

pub fn a_norm_terms(m: &DiscreteManifold, phi: &Field, ansatz: &Ansatz) -> Result<ANorm> {
    let grad = m.gradient_norm(phi)?;
    let b0 = if ansatz.b0_indicator { 1.0 } else { 0.0 };
    let k = ansatz.b_fields.len();
    let (a, b) = (0..phi.len())
        .into_par_iter()
        .map(|idx| {
            let mut sb = 0.0;
            let mut wb = b0;
            for i in 0..k {
                let bi = ansatz.b_fields[i].values()[idx];
                sb += bi;
                wb += bi / ansatz.weights[i].theta.values()[idx];
            }
            let p = phi.values()[idx].abs();
            let g = grad.values()[idx];
            (safe_ratio(p, sb), safe_ratio(g, wb))
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)));
    Ok(ANorm { value_term: a, gradient_term: b })
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{assemble_ansatz, positive_bubble_field, zero_coefficients, Background};
    use crate::bubble_tree::{classify, BubbleSpec, CenterPath, ConfigurationSequence};
    use crate::euclidean_bubble::Profile;
    use crate::manifold::{GreenOptions, Torus};
    use std::sync::Arc;

    struct Setup {
        m: DiscreteManifold,
        ansatz: Ansatz,
        h: Field,
    }

    fn setup(points: usize, period: f64, c: f64, alpha: f64) -> Setup {
        let m = DiscreteManifold::new(3, points, period).unwrap();
        let t = Torus::new(3, period).unwrap();
        let b = BubbleSpec {
            center: CenterPath::Fixed(vec![period / 2.0; 3]),
            scale_constant: c,
            rate: 0.5,
            profile: Arc::new(Profile::standard_bubble(3).unwrap()),
        };
        let config = ConfigurationSequence::new(t, vec![b], false, false, vec![alpha], 0.0).unwrap();
        let h = m.constant(1.0);
        let bg = Background::new(&m, None, h.clone(), GreenOptions::default()).unwrap();
        let tree = classify(&config, alpha).unwrap();
        let ansatz = assemble_ansatz(&m, &config, &tree, &bg, &zero_coefficients(&config, &bg), None).unwrap();
        Setup { m, ansatz, h }
    }

    fn opts() -> SolverOptions {
        SolverOptions { min_resolved_spacings: 1.0, ..SolverOptions::default() }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let s = setup(32, 2.0, 0.2, 1.0);
        let sol = solve_projected(&s.m, &s.ansatz, &s.h, &s.m.zeros(), &opts()).unwrap();
        assert_eq!(sol.phi.max_abs(), 0.0);
        assert_eq!(sol.multiplier_sum(), 0.0);
    }

    #[test]
    fn kernel_rhs_is_absorbed_by_multiplier() {
        let s = setup(32, 2.0, 0.2, 1.0);
        let z = &s.ansatz.kernel_lifts[1][1];
        let rhs = s.m.helmholtz(z, 1.0).unwrap();
        let sol = solve_projected(&s.m, &s.ansatz, &s.h, &rhs, &opts()).unwrap();
        assert!(sol.phi.max_abs() < 1e-6 * z.max_abs(), "{}", sol.phi.max_abs());
        for (b, block) in sol.multipliers.iter().enumerate() {
            for (j, l) in block.iter().enumerate() {
                let expect = if (b, j) == (1, 1) { -1.0 } else { 0.0 };
                assert!((l - expect).abs() < 1e-6, "{b} {j} {l}");
            }
        }
    }

    #[test]
    fn solution_properties() {
        let s = setup(32, 2.0, 0.2, 1.0);
        let b = &s.ansatz.b_fields[0];
        let r1 = b.map(|v| v.powi(5) * 1e-2);
        let r2 = b.map(|v| v * 0.3);
        let sol1 = solve_projected(&s.m, &s.ansatz, &s.h, &r1, &opts()).unwrap();
        let sol2 = solve_projected(&s.m, &s.ansatz, &s.h, &r2, &opts()).unwrap();
        let sum = solve_projected(&s.m, &s.ansatz, &s.h, &r1.add(&r2), &opts()).unwrap();
        assert!(sol1.residual < 1e-7, "{}", sol1.residual);
        // orthogonality to the kernel family
        for z in s.ansatz.kernel_family() {
            let ip = s.m.h1_inner(&sol1.phi, z).unwrap();
            assert!(ip.abs() < 1e-8 * s.m.h1_inner(&sol1.phi, &sol1.phi).unwrap().sqrt().max(1.0), "{ip}");
        }
        // linearity
        let diff = sum.phi.sub(&sol1.phi.add(&sol2.phi)).max_abs();
        assert!(diff < 1e-6 * sum.phi.max_abs(), "{diff}");
        for (a, (b, c)) in sum.multipliers.iter().flatten().zip(sol1.multipliers.iter().flatten().zip(sol2.multipliers.iter().flatten())) {
            assert!((a - b - c).abs() < 1e-6 * (1.0 + a.abs()));
        }
        // seed independence
        let seeded = solve_projected(&s.m, &s.ansatz, &s.h, &r1, &SolverOptions { seed: Some(5), ..opts() }).unwrap();
        let gap = seeded.phi.sub(&sol1.phi).max_abs() / sol1.phi.max_abs();
        assert!(gap <= 10.0 * 1e-8, "{gap}");
    }

    #[test]
    fn resolution_guard() {
        let s = setup(32, 2.0, 0.2, 1.0);
        let strict = SolverOptions::default();
        assert!(matches!(
            solve_projected(&s.m, &s.ansatz, &s.h, &s.m.zeros(), &strict),
            Err(Error::Resolution { .. })
        ));
    }

    #[test]
    fn free_operator_is_identity() {
        let m = DiscreteManifold::new(3, 16, 2.0 * std::f64::consts::PI).unwrap();
        let s = setup(16, 2.0 * std::f64::consts::PI, 0.2, 1.0);
        let mut empty = s.ansatz.clone();
        empty.total = m.zeros();
        empty.kernel_lifts = vec![Vec::new()];
        empty.gram = Vec::new();
        let rep = coercivity_certificate(&m, &empty, &m.constant(1.0), true, &CoercivityOptions::default()).unwrap();
        assert!((rep.sigma_min - 1.0).abs() < 1e-12, "{rep:?}");
    }

    #[test]
    fn projection_removes_small_singular_values() {
        let s = setup(32, 2.0, 0.2, 1.0);
        let opt = CoercivityOptions::default();
        let free = coercivity_certificate(&s.m, &s.ansatz, &s.h, false, &opt).unwrap();
        let proj = coercivity_certificate(&s.m, &s.ansatz, &s.h, true, &opt).unwrap();
        assert!(free.sigma_min < 0.1, "{free:?}");
        assert!(proj.sigma_min > 3.0 * free.sigma_min, "{proj:?} {free:?}");
    }

    #[test]
    fn a_norm_diagnostic() {
        let s = setup(32, 2.0, 0.2, 1.0);
        assert_eq!(diagnostic_a_norm(&s.m, &s.m.zeros(), &s.ansatz).unwrap(), 0.0);
        let b = positive_bubble_field(&s.m, &s.ansatz.centers[0], s.ansatz.scales[0]);
        let t = a_norm_terms(&s.m, &b, &s.ansatz).unwrap();
        assert!((t.value_term - 1.0).abs() < 1e-14);
        assert!(t.gradient_term.is_finite() && t.gradient_term > 0.0);
        let v = t.total();
        let v2 = diagnostic_a_norm(&s.m, &b.scaled(2.0), &s.ansatz).unwrap();
        assert!((v2 - 2.0 * v).abs() < 1e-12 * v);
    }

    #[test]
    fn rhs_certificate() {
        let s = setup(32, 2.0, 0.2, 1.0);
        let r = s.ansatz.b_fields[0].map(|v| v.powi(5) * 0.25);
        assert!(certify_rhs(&s.ansatz, &r, 0.0, 0.25, 0.0).holds());
        assert!(!certify_rhs(&s.ansatz, &r, 0.0, 0.2, 0.0).holds());
    }
}
