//! Bubble-tree combinatorics: lower and higher bubbles, radii of interaction,
//! influence and neck radii, `R_0`, heights and influence regions.
//!
//! Asymptotic relations between scales are decided by the declared rate
//! exponents `μ_i = c_i α^{-p_i}`, never by numeric thresholds.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::euclidean_bubble::{positive_bubble, Profile};
use crate::manifold::{DiscreteManifold, Torus};
use crate::{Error, Result};

const RATE_EPS: f64 = 1e-12;
const R0_START: f64 = 4.0;
const R0_CEILING: f64 = 65536.0;

#[derive(Debug, Clone, PartialEq)]
pub enum CenterPath {
    Fixed(Vec<f64>),
    /// `x_α = origin + velocity/α`.
    Drift { origin: Vec<f64>, velocity: Vec<f64> },
}

impl CenterPath {
    pub fn at(&self, torus: &Torus, alpha: f64) -> Vec<f64> {
        match self {
            CenterPath::Fixed(x) => torus.wrap(x),
            CenterPath::Drift { origin, velocity } => {
                let x: Vec<f64> = origin.iter().zip(velocity).map(|(o, v)| o + v / alpha).collect();
                torus.wrap(&x)
            }
        }
    }

    fn dimension(&self) -> usize {
        match self {
            CenterPath::Fixed(x) => x.len(),
            CenterPath::Drift { origin, velocity } => {
                if origin.len() == velocity.len() {
                    origin.len()
                } else {
                    usize::MAX
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BubbleSpec {
    pub center: CenterPath,
    pub scale_constant: f64,
    pub rate: f64,
    pub profile: Arc<Profile>,
}

impl BubbleSpec {
    pub fn mu(&self, alpha: f64) -> f64 {
        self.scale_constant * alpha.powf(-self.rate)
    }
}

/// `α`-indexed family of bubble centers and scales over a torus.
#[derive(Debug, Clone)]
pub struct ConfigurationSequence {
    pub n: usize,
    pub torus: Torus,
    pub bubbles: Vec<BubbleSpec>,
    /// `u_0 ≢ 0`.
    pub background_nonzero: bool,
    /// `Δ + h` has a nontrivial kernel.
    pub kernel_flag: bool,
    pub alphas: Vec<f64>,
    pub k_cluster: f64,
}

/// Structure quantity `μ_i/μ_j + μ_j/μ_i + d²/(μ_iμ_j)` per pair and α.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub pairs: Vec<(usize, usize)>,
    pub values: Vec<Vec<f64>>,
}

impl ConfigurationSequence {
    /// Validates shapes, `μ < i_g/4` at every α, and the structure condition:
    /// increasing along `alphas` and above `floor` at the last α.
    pub fn new(
        torus: Torus,
        bubbles: Vec<BubbleSpec>,
        background_nonzero: bool,
        kernel_flag: bool,
        alphas: Vec<f64>,
        structure_floor: f64,
    ) -> Result<Self> {
        let n = torus.n;
        if n < 3 {
            return Err(Error::InvalidDimension(n));
        }
        if alphas.is_empty() || alphas.iter().any(|a| !(a.is_finite() && *a >= 1.0)) {
            return Err(Error::Precondition("alphas must be finite values ≥ 1".into()));
        }
        if alphas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition("alphas must be strictly increasing".into()));
        }
        for b in &bubbles {
            if b.center.dimension() != n {
                return Err(Error::ShapeMismatch { expected: n, found: b.center.dimension() });
            }
            if b.profile.dimension() != n {
                return Err(Error::ShapeMismatch { expected: n, found: b.profile.dimension() });
            }
            if !(b.scale_constant > 0.0 && b.rate > 0.0) {
                return Err(Error::Precondition("scale constants and rates must be positive".into()));
            }
        }
        let config = Self { n, torus, bubbles, background_nonzero, kernel_flag, alphas, k_cluster: 10.0 };
        let quarter = torus.injectivity_radius() / 4.0;
        for &a in &config.alphas {
            for (i, b) in config.bubbles.iter().enumerate() {
                if b.mu(a) >= quarter {
                    return Err(Error::Precondition(format!(
                        "bubble {} has scale {} ≥ i_g/4 = {} at α = {}",
                        i + 1,
                        b.mu(a),
                        quarter,
                        a
                    )));
                }
            }
        }
        let rep = config.structure_report();
        for (p, vals) in rep.pairs.iter().zip(&rep.values) {
            let increasing = vals.windows(2).all(|w| w[1] > w[0]);
            let last = *vals.last().unwrap();
            if !increasing || last <= structure_floor {
                return Err(Error::Precondition(format!(
                    "structure condition fails for bubbles {} and {}: values {:?}, floor {}",
                    p.0 + 1,
                    p.1 + 1,
                    vals,
                    structure_floor
                )));
            }
        }
        Ok(config)
    }

    pub fn with_k_cluster(mut self, k: f64) -> Self {
        self.k_cluster = k;
        self
    }

    pub fn len(&self) -> usize {
        self.bubbles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bubbles.is_empty()
    }

    pub fn centers(&self, alpha: f64) -> Vec<Vec<f64>> {
        self.bubbles.iter().map(|b| b.center.at(&self.torus, alpha)).collect()
    }

    pub fn scales(&self, alpha: f64) -> Vec<f64> {
        self.bubbles.iter().map(|b| b.mu(alpha)).collect()
    }

    /// `B_{0,α} ≡ 1` iff `u_0 ≢ 0` or `Δ + h` has kernel.
    pub fn b0_indicator(&self) -> bool {
        self.background_nonzero || self.kernel_flag
    }

    pub fn structure_report(&self) -> StructureReport {
        let k = self.bubbles.len();
        let mut pairs = Vec::new();
        let mut values = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                pairs.push((i, j));
                values.push(
                    self.alphas
                        .iter()
                        .map(|&a| {
                            let (mi, mj) = (self.bubbles[i].mu(a), self.bubbles[j].mu(a));
                            let d = self.torus.distance(&self.bubbles[i].center.at(&self.torus, a), &self.bubbles[j].center.at(&self.torus, a));
                            mi / mj + mj / mi + d * d / (mi * mj)
                        })
                        .collect(),
                );
            }
        }
        StructureReport { pairs, values }
    }

    fn same_rate(&self, i: usize, j: usize) -> bool {
        (self.bubbles[i].rate - self.bubbles[j].rate).abs() <= RATE_EPS
    }

    /// `j ∈ 𝒜_i`: `μ_i = O(μ_j)`, i.e. `p_j ≤ p_i`.
    pub fn is_lower(&self, i: usize, j: usize) -> bool {
        i != j && self.bubbles[j].rate <= self.bubbles[i].rate + RATE_EPS
    }

    /// `μ_j = o(μ_i)`, i.e. `p_j > p_i`.
    pub fn is_faster(&self, j: usize, i: usize) -> bool {
        self.bubbles[j].rate > self.bubbles[i].rate + RATE_EPS
    }
}

/// `s_{i,j} = ((μ_i/μ_j) d²/(n(n-2)) + μ_iμ_j)^{1/2}`.
pub fn interaction_radius(mu_i: f64, mu_j: f64, d: f64, n: usize) -> f64 {
    let nf = n as f64;
    ((mu_i / mu_j) * d * d / (nf * (nf - 2.0)) + mu_i * mu_j).sqrt()
}

/// `ρ_{j,i} = 2(μ_j/μ_i)^{(n-2)/(2(n-1))}(d + μ_i)`, defined when bubble `j`
/// concentrates strictly faster than bubble `i` (`rate_j > rate_i`).
pub fn neck_radius(n: usize, (mu_j, rate_j): (f64, f64), (mu_i, rate_i): (f64, f64), d: f64) -> Result<f64> {
    if rate_j <= rate_i + RATE_EPS {
        return Err(Error::Classification(format!(
            "neck radius needs a strictly faster bubble: rate {rate_j} vs {rate_i}"
        )));
    }
    let nf = n as f64;
    Ok(2.0 * (mu_j / mu_i).powf((nf - 2.0) / (2.0 * (nf - 1.0))) * (d + mu_i))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BubbleRecord {
    pub mu: f64,
    pub rate: f64,
    pub center: Vec<f64>,
    /// `𝒜_i`
    pub lower: Vec<usize>,
    /// `s_{i,j}` for `j ∈ 𝒜_i`, aligned with `lower`.
    pub interaction_radii: Vec<f64>,
    pub influence_radius: f64,
    /// `ℬ_i`
    pub higher: Vec<usize>,
    /// `ρ_{j,i}` for `j ∈ ℬ_i`, aligned with `higher`.
    pub neck_radii: Vec<f64>,
    /// `𝒞_i ⊂ ℬ_i`
    pub cluster: Vec<usize>,
    /// Height `q` with `i ∈ E_q` (1-based).
    pub height: usize,
}

/// `Ω_i = B(x_i, r_i/R_0) ∖ ∪_{j∈ℬ_i} B(x_j, ρ_{j,i})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceRegion {
    pub center: Vec<f64>,
    pub radius: f64,
    pub excluded: Vec<(Vec<f64>, f64)>,
}

impl InfluenceRegion {
    pub fn contains(&self, torus: &Torus, x: &[f64]) -> bool {
        torus.distance(&self.center, x) < self.radius
            && self.excluded.iter().all(|(c, r)| torus.distance(c, x) >= *r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeAnalysis {
    pub alpha: f64,
    pub n: usize,
    pub r0: f64,
    /// `E_1, …, E_p` (0-based bubble indices), slowest bubbles first.
    pub heights: Vec<Vec<usize>>,
    pub b0_indicator: bool,
    /// Largest scale ratio within a height class over the realized α.
    pub lambda: f64,
    pub bubbles: Vec<BubbleRecord>,
    #[serde(skip)]
    torus: Torus,
}

impl TreeAnalysis {
    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn influence_region(&self, i: usize) -> InfluenceRegion {
        let b = &self.bubbles[i];
        InfluenceRegion {
            center: b.center.clone(),
            radius: b.influence_radius / self.r0,
            excluded: b.higher.iter().zip(&b.neck_radii).map(|(&j, &rho)| (self.bubbles[j].center.clone(), rho)).collect(),
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.torus.distance(&self.bubbles[i].center, &self.bubbles[j].center)
    }

    /// `B_i(y)` for the positive bubble of scale `μ_i` at `x_i`.
    pub fn bubble_at(&self, i: usize, y: &[f64]) -> f64 {
        let b = &self.bubbles[i];
        positive_bubble(self.n, b.mu, self.torus.distance(&b.center, y))
    }

    /// `θ_i(y) = μ_i + d(x_i, y)`.
    pub fn theta_at(&self, i: usize, y: &[f64]) -> f64 {
        self.bubbles[i].mu + self.torus.distance(&self.bubbles[i].center, y)
    }
}

fn influence_radii(config: &ConfigurationSequence, alpha: f64) -> (Vec<Vec<usize>>, Vec<Vec<f64>>, Vec<f64>) {
    let k = config.len();
    let centers = config.centers(alpha);
    let mus = config.scales(alpha);
    let cap_b0 = config.b0_indicator();
    let mut lower = vec![Vec::new(); k];
    let mut s = vec![Vec::new(); k];
    let mut r = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            if config.is_lower(i, j) {
                let d = config.torus.distance(&centers[i], &centers[j]);
                lower[i].push(j);
                s[i].push(interaction_radius(mus[i], mus[j], d, config.n));
            }
        }
        let cap = if cap_b0 { mus[i].sqrt() } else { config.torus.injectivity_radius() / 2.0 };
        r[i] = s[i].iter().cloned().fold(cap, f64::min);
    }
    (lower, s, r)
}

/// Smallest `R_0 ∈ {4, 8, …, 2¹⁶}` with `2r_i/R_0 ≤ d_{ij}/4` for all
/// equal-rate pairs at every α in `alphas`.
pub fn find_r0(config: &ConfigurationSequence, alphas: &[f64]) -> Result<f64> {
    let k = config.len();
    let mut needed: f64 = 0.0;
    for &a in alphas {
        let (_, _, r) = influence_radii(config, a);
        let centers = config.centers(a);
        for i in 0..k {
            for j in 0..k {
                if i != j && config.same_rate(i, j) {
                    let d = config.torus.distance(&centers[i], &centers[j]);
                    if d == 0.0 {
                        return Err(Error::Degenerate(format!(
                            "equal-rate bubbles {} and {} share a center at α = {a}",
                            i + 1,
                            j + 1
                        )));
                    }
                    needed = needed.max(8.0 * r[i] / d);
                }
            }
        }
    }
    let mut r0 = R0_START;
    while r0 < needed {
        r0 *= 2.0;
        if r0 > R0_CEILING {
            return Err(Error::Degenerate(format!(
                "no R_0 ≤ {R0_CEILING} separates equal-rate influence balls (need {needed:.3e})"
            )));
        }
    }
    Ok(r0)
}

/// Classifies the configuration at `alpha`; `R_0` and `Λ` are taken over
/// all realized alphas (plus `alpha` itself).
pub fn classify(config: &ConfigurationSequence, alpha: f64) -> Result<TreeAnalysis> {
    let mut alphas = config.alphas.clone();
    if !alphas.contains(&alpha) {
        alphas.push(alpha);
    }
    let r0 = find_r0(config, &alphas)?;
    classify_with_r0(config, alpha, r0, &alphas)
}

/// Classifies every realized α in parallel with a common `R_0`.
pub fn classify_all(config: &ConfigurationSequence) -> Result<Vec<TreeAnalysis>> {
    let r0 = find_r0(config, &config.alphas)?;
    config.alphas.par_iter().map(|&a| classify_with_r0(config, a, r0, &config.alphas)).collect()
}

fn classify_with_r0(config: &ConfigurationSequence, alpha: f64, r0: f64, alphas: &[f64]) -> Result<TreeAnalysis> {
    let k = config.len();
    let n = config.n;
    let centers = config.centers(alpha);
    let mus = config.scales(alpha);
    let (lower, s, r) = influence_radii(config, alpha);

    // heights: distinct rates ascending (slowest first)
    let mut rates: Vec<f64> = config.bubbles.iter().map(|b| b.rate).collect();
    rates.sort_by(f64::total_cmp);
    rates.dedup_by(|a, b| (*a - *b).abs() <= RATE_EPS);
    let heights: Vec<Vec<usize>> = rates
        .iter()
        .map(|&p| (0..k).filter(|&i| (config.bubbles[i].rate - p).abs() <= RATE_EPS).collect())
        .collect();

    let mut lambda: f64 = 1.0;
    for class in &heights {
        for &a in alphas {
            let m = config.scales(a);
            for &i in class {
                for &j in class {
                    lambda = lambda.max(m[i] / m[j]);
                }
            }
        }
    }

    let mut bubbles = Vec::with_capacity(k);
    for i in 0..k {
        let mut higher = Vec::new();
        let mut necks = Vec::new();
        let mut cluster = Vec::new();
        for j in 0..k {
            if j == i || !config.is_faster(j, i) {
                continue;
            }
            let d = config.torus.distance(&centers[i], &centers[j]);
            if d <= 2.0 * r[i] / r0 {
                higher.push(j);
                necks.push(neck_radius(n, (mus[j], config.bubbles[j].rate), (mus[i], config.bubbles[i].rate), d)?);
                if d <= config.k_cluster * mus[i] {
                    cluster.push(j);
                }
            }
        }
        let height = heights.iter().position(|c| c.contains(&i)).unwrap() + 1;
        bubbles.push(BubbleRecord {
            mu: mus[i],
            rate: config.bubbles[i].rate,
            center: centers[i].clone(),
            lower: lower[i].clone(),
            interaction_radii: s[i].clone(),
            influence_radius: r[i],
            higher,
            neck_radii: necks,
            cluster,
            height,
        });
    }
    Ok(TreeAnalysis { alpha, n, r0, heights, b0_indicator: config.b0_indicator(), lambda, bubbles, torus: config.torus })
}

/// True when `B(x_i, 2r_i/R_0)` are pairwise disjoint over equal-rate pairs.
pub fn influence_balls_disjoint(t: &TreeAnalysis) -> bool {
    let k = t.bubbles.len();
    (0..k).all(|i| {
        (0..k).all(|j| {
            i == j
                || (t.bubbles[i].rate - t.bubbles[j].rate).abs() > RATE_EPS
                || 2.0 * (t.bubbles[i].influence_radius + t.bubbles[j].influence_radius) / t.r0 <= t.distance(i, j)
        })
    })
}

/// Number of grid points lying in two or more regions `Ω_i`.
pub fn omega_overlap_count(t: &TreeAnalysis, m: &DiscreteManifold) -> usize {
    let regions: Vec<InfluenceRegion> = (0..t.bubbles.len()).map(|i| t.influence_region(i)).collect();
    (0..m.total_points())
        .into_par_iter()
        .filter(|&idx| {
            let x = m.grid_point(idx);
            regions.iter().filter(|r| r.contains(&t.torus, &x)).count() > 1
        })
        .count()
}

/// Empirical constants of the comparison inequality for `j ∈ 𝒜_i` over grid points
/// in `B(x_i, 2r_i/R_0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompBullesReport {
    pub i: usize,
    pub j: usize,
    /// `max B_j s_{i,j}^{n-2}/μ_i^{(n-2)/2}`
    pub scale_constant: f64,
    /// `max B_j / B_i`
    pub ratio_constant: f64,
    pub points: usize,
}

pub fn compbulles(t: &TreeAnalysis, m: &DiscreteManifold) -> Vec<CompBullesReport> {
    let nf = t.n as f64;
    let mut out = Vec::new();
    for (i, b) in t.bubbles.iter().enumerate() {
        let radius = 2.0 * b.influence_radius / t.r0;
        for (&j, &s) in b.lower.iter().zip(&b.interaction_radii) {
            let bound = b.mu.powf((nf - 2.0) / 2.0) / s.powf(nf - 2.0);
            let (c1, c2, count) = (0..m.total_points())
                .into_par_iter()
                .filter_map(|idx| {
                    let y = m.grid_point(idx);
                    (t.torus.distance(&b.center, &y) < radius).then(|| {
                        let bj = t.bubble_at(j, &y);
                        (bj / bound, bj / t.bubble_at(i, &y), 1usize)
                    })
                })
                .reduce(|| (0.0, 0.0, 0), |a, c| (a.0.max(c.0), a.1.max(c.1), a.2 + c.2));
            out.push(CompBullesReport { i, j, scale_constant: c1, ratio_constant: c2, points: count });
        }
    }
    out
}

/// Empirical constants in the dominance statements for `j ∈ ℬ_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub i: usize,
    pub j: usize,
    pub s_ji: f64,
    pub rho_ji: f64,
    /// `max B_i/B_j` over samples with `d(x_j, y) ≤ s_{j,i}`.
    pub inside_constant: f64,
    /// `max d(x_j, y)/s_{j,i}` over samples with `B_j ≥ B_i/C`.
    pub outside_constant: f64,
    /// Same two constants for `θ^{-1}B` against `ρ_{j,i}`.
    pub weighted_inside_constant: f64,
    pub weighted_outside_constant: f64,
    /// Largest of the four constants (and at least 1).
    pub constant: f64,
}

pub fn dominance_check(t: &TreeAnalysis, i: usize, j: usize, samples: &[Vec<f64>]) -> Result<DominanceReport> {
    let k = t.bubbles.len();
    if i >= k || j >= k {
        return Err(Error::IndexOutOfRange { index: i.max(j), len: k });
    }
    let pos = t.bubbles[i]
        .higher
        .iter()
        .position(|&h| h == j)
        .ok_or_else(|| Error::Classification(format!("bubble {} is not a higher bubble of {}", j + 1, i + 1)))?;
    let rho = t.bubbles[i].neck_radii[pos];
    let s = interaction_radius(t.bubbles[j].mu, t.bubbles[i].mu, t.distance(i, j), t.n);
    let xj = &t.bubbles[j].center;
    let mut inside: f64 = 1.0;
    let mut w_inside: f64 = 1.0;
    for y in samples {
        let d = t.torus.distance(xj, y);
        let (bi, bj) = (t.bubble_at(i, y), t.bubble_at(j, y));
        if d <= s {
            inside = inside.max(bi / bj);
        }
        if d <= rho {
            w_inside = w_inside.max((bi / t.theta_at(i, y)) / (bj / t.theta_at(j, y)));
        }
    }
    let mut outside: f64 = 1.0;
    let mut w_outside: f64 = 1.0;
    for y in samples {
        let d = t.torus.distance(xj, y);
        let (bi, bj) = (t.bubble_at(i, y), t.bubble_at(j, y));
        if bj >= bi / inside {
            outside = outside.max(d / s);
        }
        if bj / t.theta_at(j, y) >= bi / t.theta_at(i, y) / w_inside {
            w_outside = w_outside.max(d / rho);
        }
    }
    Ok(DominanceReport {
        i,
        j,
        s_ji: s,
        rho_ji: rho,
        inside_constant: inside,
        outside_constant: outside,
        weighted_inside_constant: w_inside,
        weighted_outside_constant: w_outside,
        constant: inside.max(outside).max(w_inside).max(w_outside),
    })
}

/// Points around `x_j` on log-spaced spheres from `μ_j/10` to `r_i`, along
/// the coordinate axes and diagonals.
pub fn dominance_samples(t: &TreeAnalysis, i: usize, j: usize, shells: usize) -> Vec<Vec<f64>> {
    let n = t.n;
    let xj = &t.bubbles[j].center;
    let lo = t.bubbles[j].mu / 10.0;
    let hi = t.bubbles[i].influence_radius.max(lo * 10.0);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for a in 0..n {
        for sgn in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[a] = sgn;
            dirs.push(d);
        }
    }
    dirs.push(vec![1.0 / (n as f64).sqrt(); n]);
    dirs.push(vec![-1.0 / (n as f64).sqrt(); n]);
    let mut out = vec![xj.clone()];
    for s in 0..shells {
        let r = lo * (hi / lo).powf(s as f64 / (shells.max(2) - 1) as f64);
        for d in &dirs {
            let v: Vec<f64> = d.iter().map(|c| c * r).collect();
            out.push(t.torus.exp_chart(xj, &v));
        }
    }
    out
}

/// Per-α trends used by the asymptotic checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepDiagnostics {
    pub alphas: Vec<f64>,
    /// `max (2r_i/R_0)/d_{ij}` over equal-rate pairs (0 if none).
    pub decoupling: Vec<f64>,
    /// `r_i/μ_i` per α (outer) and bubble (inner).
    pub r_over_mu: Vec<Vec<f64>>,
    /// `max s_{j,i}/ρ_{j,i}` over `j ∈ ℬ_i`.
    pub s_over_rho: Vec<f64>,
    /// `max ρ_{j,i}/r_i` over `j ∈ ℬ_i`.
    pub rho_over_r: Vec<f64>,
}

pub fn sweep_diagnostics(analyses: &[TreeAnalysis]) -> SweepDiagnostics {
    let mut d = SweepDiagnostics {
        alphas: Vec::new(),
        decoupling: Vec::new(),
        r_over_mu: Vec::new(),
        s_over_rho: Vec::new(),
        rho_over_r: Vec::new(),
    };
    for t in analyses {
        let k = t.bubbles.len();
        let mut dec: f64 = 0.0;
        let mut sr: f64 = 0.0;
        let mut rr: f64 = 0.0;
        for i in 0..k {
            let bi = &t.bubbles[i];
            for j in 0..k {
                if i != j && (bi.rate - t.bubbles[j].rate).abs() <= RATE_EPS {
                    dec = dec.max(2.0 * bi.influence_radius / t.r0 / t.distance(i, j));
                }
            }
            for (&j, &rho) in bi.higher.iter().zip(&bi.neck_radii) {
                let s = interaction_radius(t.bubbles[j].mu, bi.mu, t.distance(i, j), t.n);
                sr = sr.max(s / rho);
                rr = rr.max(rho / bi.influence_radius);
            }
        }
        d.alphas.push(t.alpha);
        d.decoupling.push(dec);
        d.r_over_mu.push(t.bubbles.iter().map(|b| b.influence_radius / b.mu).collect());
        d.s_over_rho.push(sr);
        d.rho_over_r.push(rr);
    }
    d
}
