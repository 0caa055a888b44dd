//! Grid-quadrature oracles for the integral and pointwise bubble estimates.
//!
//! Singular kernels `d^{-p}` are capped at `d_c = core_cells · spacing` and
//! applied to whole fields by FFT convolution; reports sample the result.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ansatz::{positive_bubble_field, residual, weight_fields, Ansatz, WeightFields};
use crate::bubble_tree::{compbulles, TreeAnalysis};
use crate::linear_solver::sigma_proxy;
use crate::manifold::{DiscreteManifold, Field};
use crate::{Error, Result};

/// Ceiling on the across-sweep growth of an empirical constant.
pub const STABILITY_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EstimateId {
    #[serde(rename = "greenB")]
    GreenB,
    #[serde(rename = "greenBder")]
    GreenBder,
    #[serde(rename = "greenBij")]
    GreenBij,
    #[serde(rename = "greenBijder")]
    GreenBijder,
    #[serde(rename = "gradij")]
    Gradij,
    #[serde(rename = "decbulle")]
    Decbulle,
    #[serde(rename = "lemtec")]
    Lemtec,
    #[serde(rename = "contVa")]
    ContVa,
    #[serde(rename = "errVxa")]
    ErrVxa,
    #[serde(rename = "compbulles")]
    Compbulles,
}

impl EstimateId {
    pub const ALL: [EstimateId; 10] = [
        EstimateId::GreenB,
        EstimateId::GreenBder,
        EstimateId::GreenBij,
        EstimateId::GreenBijder,
        EstimateId::Gradij,
        EstimateId::Decbulle,
        EstimateId::Lemtec,
        EstimateId::ContVa,
        EstimateId::ErrVxa,
        EstimateId::Compbulles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimateId::GreenB => "greenB",
            EstimateId::GreenBder => "greenBder",
            EstimateId::GreenBij => "greenBij",
            EstimateId::GreenBijder => "greenBijder",
            EstimateId::Gradij => "gradij",
            EstimateId::Decbulle => "decbulle",
            EstimateId::Lemtec => "lemtec",
            EstimateId::ContVa => "contVa",
            EstimateId::ErrVxa => "errVxa",
            EstimateId::Compbulles => "compbulles",
        }
    }

    /// Bounds carrying a vanishing sequence `σ_α`.
    pub fn is_sigma_type(self) -> bool {
        matches!(self, EstimateId::GreenBij | EstimateId::GreenBijder | EstimateId::Gradij)
    }

    /// Needs `V_i` rather than only `B_i`.
    pub fn needs_ansatz(self) -> bool {
        matches!(self, EstimateId::ContVa | EstimateId::ErrVxa)
    }
}

impl fmt::Display for EstimateId {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.write_str(self.name())
    }
}

impl FromStr for EstimateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimateId::ALL
            .iter()
            .copied()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::Precondition(format!("unknown estimate id `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifierOptions {
    /// Mollification radius of singular kernels in grid cells.
    pub core_cells: f64,
    pub random_samples: usize,
    pub seed: u64,
    /// `pass` iff the worst ratio stays below this.
    pub ceiling: f64,
    /// Exponent for the mean-value inequality; `None` means `2* - 2`.
    pub tau: Option<f64>,
    /// Excision radius for the tail bound; `None` means `r_i`.
    pub decbulle_delta: Option<f64>,
}

impl Default for VerifierOptions {
    fn default() -> Self {
        Self { core_cells: 3.0, random_samples: 8, seed: 7, ceiling: 1e3, tau: None, decbulle_delta: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSample {
    pub label: String,
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs/rhs`, zero when `lhs = 0`.
    pub ratio: f64,
    /// `lhs/rhs` with the `σ̂` factor removed (vanishing-type bounds only).
    pub normalized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimate_id: EstimateId,
    pub alpha: f64,
    pub samples: Vec<EstimateSample>,
    pub worst_ratio: f64,
    /// Largest `normalized` over the samples.
    pub vanishing: Option<f64>,
    pub ceiling: f64,
    pub pass: bool,
}

impl EstimateReport {
    fn from_samples(id: EstimateId, alpha: f64, samples: Vec<EstimateSample>, ceiling: f64) -> Self {
        let worst_ratio = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
        let vanishing =
            if id.is_sigma_type() { Some(samples.iter().filter_map(|s| s.normalized).fold(0.0, f64::max)) } else { None };
        let pass = worst_ratio.is_finite() && worst_ratio <= ceiling;
        Self { estimate_id: id, alpha, samples, worst_ratio, vanishing, ceiling, pass }
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs.abs() / rhs
    }
}

/// Positive bubbles and weights at one α; independent of the profiles.
#[derive(Debug, Clone)]
pub struct BubbleData {
    pub alpha: f64,
    pub n: usize,
    pub centers: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
    pub influence_radii: Vec<f64>,
    pub b0: bool,
    pub b_fields: Vec<Field>,
    pub weights: Vec<WeightFields>,
}

impl BubbleData {
    pub fn from_tree(m: &DiscreteManifold, tree: &TreeAnalysis) -> Self {
        let centers: Vec<Vec<f64>> = tree.bubbles.iter().map(|b| b.center.clone()).collect();
        let scales: Vec<f64> = tree.bubbles.iter().map(|b| b.mu).collect();
        let b_fields = centers.iter().zip(&scales).map(|(x, &mu)| positive_bubble_field(m, x, mu)).collect();
        let weights = centers.iter().zip(&scales).map(|(x, &mu)| weight_fields(m, x, mu)).collect();
        Self {
            alpha: tree.alpha,
            n: tree.n,
            influence_radii: tree.bubbles.iter().map(|b| b.influence_radius).collect(),
            centers,
            scales,
            b0: tree.b0_indicator,
            b_fields,
            weights,
        }
    }

    pub fn from_ansatz(ansatz: &Ansatz, tree: &TreeAnalysis) -> Self {
        Self {
            alpha: ansatz.alpha,
            n: ansatz.n,
            centers: ansatz.centers.clone(),
            scales: ansatz.scales.clone(),
            influence_radii: tree.bubbles.iter().map(|b| b.influence_radius).collect(),
            b0: ansatz.b0_indicator,
            b_fields: ansatz.b_fields.clone(),
            weights: ansatz.weights.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }
}

/// `x ↦ ∫ max(d(x,y), d_c)^{-power} g(y) dy` on the whole grid.
pub fn singular_integral(m: &DiscreteManifold, integrand: &Field, power: f64, core_cells: f64) -> Result<Field> {
    if !(core_cells > 0.0) {
        return Err(Error::Domain(format!("core_cells = {core_cells} must be positive")));
    }
    let dc = core_cells * m.spacing();
    let origin = vec![0.0; m.dimension()];
    let torus = *m.torus();
    let kernel = m.field_from_fn(|y| torus.distance(&origin, y).max(dc).powf(-power));
    m.convolve(&kernel, integrand)
}

/// Bubble centers, points at distances `μ, √μ, r_i, i_g/2` along the first
/// axis, and seeded uniform points; deduplicated by grid index.
pub fn sample_points(m: &DiscreteManifold, data: &BubbleData, opts: &VerifierOptions) -> Vec<(String, usize)> {
    let torus = *m.torus();
    let ig = m.injectivity_radius();
    let n = m.dimension();
    let mut out: Vec<(String, usize)> = Vec::new();
    let mut push = |label: String, idx: usize| {
        if !out.iter().any(|(_, j)| *j == idx) {
            out.push((label, idx));
        }
    };
    for (i, (x, &mu)) in data.centers.iter().zip(&data.scales).enumerate() {
        push(format!("center:{i}"), m.nearest_index(x));
        let offsets = [("mu", mu), ("sqrt_mu", mu.sqrt()), ("r", data.influence_radii[i]), ("half_ig", ig / 2.0)];
        for (name, t) in offsets {
            let mut v = vec![0.0; n];
            v[0] = t.min(ig);
            push(format!("{name}:{i}"), m.nearest_index(&torus.exp_chart(x, &v)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let period = m.period();
    for k in 0..opts.random_samples {
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..period)).collect();
        push(format!("random:{k}"), m.nearest_index(&y));
    }
    out
}

fn sampled(
    m: &DiscreteManifold,
    points: &[(String, usize)],
    lhs: &Field,
    rhs: &Field,
    sigma: Option<f64>,
) -> Vec<EstimateSample> {
    points
        .iter()
        .map(|(label, idx)| {
            let l = lhs.values()[*idx];
            let base = rhs.values()[*idx];
            let r = sigma.map_or(base, |s| s * base);
            EstimateSample {
                label: label.clone(),
                point: m.grid_point(*idx),
                lhs: l,
                rhs: r,
                ratio: ratio(l, r),
                normalized: sigma.map(|_| ratio(l, base)),
            }
        })
        .collect()
}

/// `Ξ` in the bound for `d^{1-n}`: `θ(1 + |ln θ|)` in n = 3, `θ` otherwise.
fn xi_weight(n: usize, theta: f64) -> f64 {
    if n == 3 {
        theta * (1.0 + theta.ln().abs())
    } else {
        theta
    }
}

/// `∫ d^{2-n}B_i ≲ Θ_iB_i(x)`, all `i`.
pub fn check_green_b(m: &DiscreteManifold, data: &BubbleData, opts: &VerifierOptions) -> Result<EstimateReport> {
    let q = data.n as f64 - 2.0;
    let points = sample_points(m, data, opts);
    let mut samples = Vec::new();
    for (b, w) in data.b_fields.iter().zip(&data.weights) {
        let lhs = singular_integral(m, b, q, opts.core_cells)?;
        samples.extend(sampled(m, &points, &lhs, &w.big_theta.mul(b), None));
    }
    Ok(EstimateReport::from_samples(EstimateId::GreenB, data.alpha, samples, opts.ceiling))
}

/// `∫ d^{1-n}B_i ≲ Ξ_iB_i(x)`, all `i`.
pub fn check_green_b_der(m: &DiscreteManifold, data: &BubbleData, opts: &VerifierOptions) -> Result<EstimateReport> {
    let n = data.n;
    let points = sample_points(m, data, opts);
    let mut samples = Vec::new();
    for (b, w) in data.b_fields.iter().zip(&data.weights) {
        let lhs = singular_integral(m, b, n as f64 - 1.0, opts.core_cells)?;
        let rhs = w.theta.zip_map(b, |t, bv| xi_weight(n, t) * bv);
        samples.extend(sampled(m, &points, &lhs, &rhs, None));
    }
    Ok(EstimateReport::from_samples(EstimateId::GreenBder, data.alpha, samples, opts.ceiling))
}

fn pairs(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
}

/// `∫ d^{2-n}B_i^{2*-2}B_j ≲ σ(B_i + B_j)(x)`, ordered pairs `i ≠ j`.
pub fn check_green_bij(m: &DiscreteManifold, data: &BubbleData, sigma: f64, opts: &VerifierOptions) -> Result<EstimateReport> {
    let q = data.n as f64 - 2.0;
    let p = 4.0 / q;
    let points = sample_points(m, data, opts);
    let mut samples = Vec::new();
    for (i, j) in pairs(data.len()) {
        let (bi, bj) = (&data.b_fields[i], &data.b_fields[j]);
        let lhs = singular_integral(m, &bi.zip_map(bj, |a, b| a.powf(p) * b), q, opts.core_cells)?;
        let mut s = sampled(m, &points, &lhs, &bi.add(bj), Some(sigma));
        s.iter_mut().for_each(|x| x.label = format!("{}|{i},{j}", x.label));
        samples.extend(s);
    }
    Ok(EstimateReport::from_samples(EstimateId::GreenBij, data.alpha, samples, opts.ceiling))
}

/// `∫ d^{1-n}B_i^{2*-2}B_j ≲ σ(μ_i^{(n-2)/2}θ_i^{1-n} + μ_j^{(n-2)/2}θ_j^{1-n})(x)`.
pub fn check_green_bij_der(
    m: &DiscreteManifold,
    data: &BubbleData,
    sigma: f64,
    opts: &VerifierOptions,
) -> Result<EstimateReport> {
    let nf = data.n as f64;
    let q = nf - 2.0;
    let p = 4.0 / q;
    let points = sample_points(m, data, opts);
    let mut samples = Vec::new();
    for (i, j) in pairs(data.len()) {
        let (bi, bj) = (&data.b_fields[i], &data.b_fields[j]);
        let lhs = singular_integral(m, &bi.zip_map(bj, |a, b| a.powf(p) * b), nf - 1.0, opts.core_cells)?;
        let (ci, cj) = (data.scales[i].powf(q / 2.0), data.scales[j].powf(q / 2.0));
        let rhs = data.weights[i].theta.zip_map(&data.weights[j].theta, |ti, tj| ci * ti.powf(1.0 - nf) + cj * tj.powf(1.0 - nf));
        let mut s = sampled(m, &points, &lhs, &rhs, Some(sigma));
        s.iter_mut().for_each(|x| x.label = format!("{}|{i},{j}", x.label));
        samples.extend(s);
    }
    Ok(EstimateReport::from_samples(EstimateId::GreenBijder, data.alpha, samples, opts.ceiling))
}

/// `∫ μ_i^{(n-2)/2}θ_i^{1-n}μ_j^{(n-2)/2}θ_j^{1-n} ≲ σ`, unordered pairs.
pub fn check_gradij(m: &DiscreteManifold, data: &BubbleData, sigma: f64, opts: &VerifierOptions) -> Result<EstimateReport> {
    let nf = data.n as f64;
    let q = nf - 2.0;
    let mut samples = Vec::new();
    for (i, j) in pairs(data.len()).filter(|(i, j)| i < j) {
        let c = data.scales[i].powf(q / 2.0) * data.scales[j].powf(q / 2.0);
        let integrand = data.weights[i].theta.zip_map(&data.weights[j].theta, |a, b| c * (a * b).powf(1.0 - nf));
        let lhs = m.integral(&integrand);
        samples.push(EstimateSample {
            label: format!("pair|{i},{j}"),
            point: Vec::new(),
            lhs,
            rhs: sigma,
            ratio: ratio(lhs, sigma),
            normalized: Some(lhs),
        });
    }
    Ok(EstimateReport::from_samples(EstimateId::Gradij, data.alpha, samples, opts.ceiling))
}

/// `∫_{M∖B(x_i,δ)} d^{2-n}B_i^{2*-1} ≲ (μ_i/δ)²B_i(x)`, δ = `r_i` unless set.
pub fn check_decbulle(m: &DiscreteManifold, data: &BubbleData, opts: &VerifierOptions) -> Result<EstimateReport> {
    let q = data.n as f64 - 2.0;
    let p = (data.n as f64 + 2.0) / q;
    let torus = *m.torus();
    let points = sample_points(m, data, opts);
    let mut samples = Vec::new();
    for i in 0..data.len() {
        let mu = data.scales[i];
        let delta = opts.decbulle_delta.unwrap_or(data.influence_radii[i]);
        if delta < mu {
            return Err(Error::Precondition(format!("excision radius {delta} below the scale {mu}")));
        }
        let x = &data.centers[i];
        let b = &data.b_fields[i];
        let cut = m.field_from_fn(|y| if torus.distance(x, y) >= delta { 1.0 } else { 0.0 });
        let lhs = singular_integral(m, &b.map(|v| v.powf(p)).mul(&cut), q, opts.core_cells)?;
        let rhs = b.scaled((mu / delta).powi(2));
        samples.extend(sampled(m, &points, &lhs, &rhs, None));
    }
    Ok(EstimateReport::from_samples(EstimateId::Decbulle, data.alpha, samples, opts.ceiling))
}

/// Pointwise sides of the mean-value inequality:
/// `(ΣB_i)^{2*-1-τ}(ΣΘ_iB_i)^τ` and `μ_1^{min(τ,2*-2)/2}(ΣB_{i≥0} + ΣB_i^{2*-1})`.
/// `μ_1` is the largest scale.
pub fn lemtec_sides(
    n: usize,
    b_fields: &[Field],
    big_theta: &[Field],
    b0: bool,
    mu_1: f64,
    tau: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = n as f64 - 2.0;
    let top = (n as f64 + 2.0) / q;
    if !(tau > 0.0 && tau <= top) {
        return Err(Error::Precondition(format!("tau = {tau} must lie in (0, {top}]")));
    }
    if b_fields.len() != big_theta.len() {
        return Err(Error::ShapeMismatch { expected: b_fields.len(), found: big_theta.len() });
    }
    let len = b_fields.first().map_or(0, |b| b.len());
    let sigma = mu_1.powf(tau.min(top - 1.0) / 2.0);
    let b0v = if b0 { 1.0 } else { 0.0 };
    let sides: Vec<(f64, f64)> = (0..len)
        .into_par_iter()
        .map(|idx| {
            let sb: f64 = b_fields.iter().map(|b| b.values()[idx]).sum();
            let stb: f64 = b_fields.iter().zip(big_theta).map(|(b, t)| b.values()[idx] * t.values()[idx]).sum();
            let spow: f64 = b_fields.iter().map(|b| b.values()[idx].powf(top)).sum();
            (sb.powf(top - tau) * stb.powf(tau), sigma * (b0v + sb + spow))
        })
        .collect();
    Ok(sides.into_iter().unzip())
}

/// Smallest working constant of the mean-value inequality over the grid.
pub fn check_lemtec(m: &DiscreteManifold, data: &BubbleData, opts: &VerifierOptions) -> Result<EstimateReport> {
    let tau = opts.tau.unwrap_or(4.0 / (data.n as f64 - 2.0));
    let thetas: Vec<Field> = data.weights.iter().map(|w| w.big_theta.clone()).collect();
    let mu_1 = data.scales.iter().copied().fold(0.0, f64::max);
    let (lhs, rhs) = lemtec_sides(data.n, &data.b_fields, &thetas, data.b0, mu_1, tau)?;
    let (lhs, rhs) = (m.field(lhs)?, m.field(rhs)?);
    let worst = (0..lhs.len())
        .map(|i| (ratio(lhs.values()[i], rhs.values()[i]), i))
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
    let mut points = vec![("grid_max".to_string(), worst.1)];
    for p in sample_points(m, data, opts) {
        if p.1 != worst.1 {
            points.push(p);
        }
    }
    let samples = sampled(m, &points, &lhs, &rhs, None);
    Ok(EstimateReport::from_samples(EstimateId::Lemtec, data.alpha, samples, opts.ceiling))
}

/// `|V_i| + (μ_i + d)|∇V_i| ≲ B_i`, grid maximum per bubble plus samples.
pub fn check_cont_va(m: &DiscreteManifold, ansatz: &Ansatz, tree: &TreeAnalysis, opts: &VerifierOptions) -> Result<EstimateReport> {
    let data = BubbleData::from_ansatz(ansatz, tree);
    let points = sample_points(m, &data, opts);
    let mut samples = Vec::new();
    for i in 0..ansatz.bubbles.len() {
        let v = &ansatz.bubbles[i];
        let grad = m.gradient_norm(v)?;
        let theta = &ansatz.weights[i].theta;
        let lhs = m.field(
            (0..v.len()).into_par_iter().map(|k| v.values()[k].abs() + theta.values()[k] * grad.values()[k]).collect(),
        )?;
        samples.extend(pointwise_samples(m, &points, &lhs, &ansatz.b_fields[i], i));
    }
    Ok(EstimateReport::from_samples(EstimateId::ContVa, ansatz.alpha, samples, opts.ceiling))
}

/// `|ΔV_i + h_αV_i - f(V_i)| ≲ B_i`.
pub fn check_err_vxa(
    m: &DiscreteManifold,
    ansatz: &Ansatz,
    tree: &TreeAnalysis,
    h_alpha: &Field,
    opts: &VerifierOptions,
) -> Result<EstimateReport> {
    let data = BubbleData::from_ansatz(ansatz, tree);
    let points = sample_points(m, &data, opts);
    let mut samples = Vec::new();
    for (i, v) in ansatz.bubbles.iter().enumerate() {
        let lhs = residual(m, v, h_alpha)?.map(f64::abs);
        samples.extend(pointwise_samples(m, &points, &lhs, &ansatz.b_fields[i], i));
    }
    Ok(EstimateReport::from_samples(EstimateId::ErrVxa, ansatz.alpha, samples, opts.ceiling))
}

fn pointwise_samples(m: &DiscreteManifold, points: &[(String, usize)], lhs: &Field, rhs: &Field, i: usize) -> Vec<EstimateSample> {
    let worst = (0..lhs.len())
        .map(|k| (ratio(lhs.values()[k], rhs.values()[k]), k))
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
    let mut pts = vec![(format!("grid_max:{i}"), worst.1)];
    pts.extend(points.iter().filter(|p| p.1 != worst.1).cloned());
    let mut s = sampled(m, &pts, lhs, rhs, None);
    s.iter_mut().for_each(|x| x.label = format!("{}|{i}", x.label));
    s
}

/// Comparison of lower bubbles inside areas of influence.
pub fn check_compbulles(m: &DiscreteManifold, tree: &TreeAnalysis, opts: &VerifierOptions) -> EstimateReport {
    let samples = compbulles(tree, m)
        .into_iter()
        .map(|r| {
            let c = r.scale_constant.max(r.ratio_constant);
            EstimateSample {
                label: format!("pair|{},{}", r.i, r.j),
                point: Vec::new(),
                lhs: c,
                rhs: 1.0,
                ratio: c,
                normalized: None,
            }
        })
        .collect();
    EstimateReport::from_samples(EstimateId::Compbulles, tree.alpha, samples, opts.ceiling)
}

/// Runs one estimate. `ansatz` and `h_alpha` are required for the
/// `V_i`-based bounds.
pub fn check_estimate(
    m: &DiscreteManifold,
    tree: &TreeAnalysis,
    ansatz: Option<&Ansatz>,
    h_alpha: Option<&Field>,
    id: EstimateId,
    opts: &VerifierOptions,
) -> Result<EstimateReport> {
    let data = match ansatz {
        Some(a) => BubbleData::from_ansatz(a, tree),
        None => BubbleData::from_tree(m, tree),
    };
    let sigma = sigma_proxy(tree, 0.0);
    let need = |what: &str| Error::Precondition(format!("estimate {id} requires {what}"));
    match id {
        EstimateId::GreenB => check_green_b(m, &data, opts),
        EstimateId::GreenBder => check_green_b_der(m, &data, opts),
        EstimateId::GreenBij => check_green_bij(m, &data, sigma, opts),
        EstimateId::GreenBijder => check_green_bij_der(m, &data, sigma, opts),
        EstimateId::Gradij => check_gradij(m, &data, sigma, opts),
        EstimateId::Decbulle => check_decbulle(m, &data, opts),
        EstimateId::Lemtec => check_lemtec(m, &data, opts),
        EstimateId::ContVa => check_cont_va(m, ansatz.ok_or_else(|| need("an ansatz"))?, tree, opts),
        EstimateId::ErrVxa => check_err_vxa(
            m,
            ansatz.ok_or_else(|| need("an ansatz"))?,
            tree,
            h_alpha.ok_or_else(|| need("h_alpha"))?,
            opts,
        ),
        EstimateId::Compbulles => Ok(check_compbulles(m, tree, opts)),
    }
}

/// Constant stability and vanishing along an α sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub estimate_id: EstimateId,
    pub alphas: Vec<f64>,
    pub worst_ratios: Vec<f64>,
    /// `max_α worst/worst(α_first)`.
    pub stability: f64,
    pub stable: bool,
    pub vanishing: Option<Vec<f64>>,
    pub vanishing_decreasing: Option<bool>,
}

pub fn summarize_sweep(reports: &[EstimateReport]) -> Result<SweepSummary> {
    let first = reports.first().ok_or_else(|| Error::Precondition("empty sweep".into()))?;
    let id = first.estimate_id;
    if reports.iter().any(|r| r.estimate_id != id) {
        return Err(Error::Precondition("sweep mixes estimates".into()));
    }
    let worst_ratios: Vec<f64> = reports.iter().map(|r| r.worst_ratio).collect();
    let top = worst_ratios.iter().copied().fold(0.0, f64::max);
    let stability = if top == 0.0 {
        1.0
    } else if worst_ratios[0] > 0.0 {
        top / worst_ratios[0]
    } else {
        f64::INFINITY
    };
    let vanishing: Option<Vec<f64>> = reports.iter().map(|r| r.vanishing).collect();
    let vanishing_decreasing = vanishing.as_ref().map(|v| v.windows(2).all(|w| w[1] < w[0]));
    Ok(SweepSummary {
        estimate_id: id,
        alphas: reports.iter().map(|r| r.alpha).collect(),
        worst_ratios,
        stability,
        stable: stability <= STABILITY_LIMIT,
        vanishing,
        vanishing_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{assemble_ansatz, zero_coefficients, Background};
    use crate::bubble_tree::{classify, BubbleSpec, CenterPath, ConfigurationSequence};
    use crate::euclidean_bubble::{positive_bubble, Profile};
    use crate::manifold::{GreenOptions, Torus};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn spec(center: Vec<f64>, c: f64, rate: f64) -> BubbleSpec {
        BubbleSpec {
            center: CenterPath::Fixed(center),
            scale_constant: c,
            rate,
            profile: Arc::new(Profile::standard_bubble(3).unwrap()),
        }
    }

    fn single(points: usize, period: f64, c: f64) -> (DiscreteManifold, TreeAnalysis) {
        let m = DiscreteManifold::new(3, points, period).unwrap();
        let t = Torus::new(3, period).unwrap();
        let config = ConfigurationSequence::new(t, vec![spec(vec![period / 2.0; 3], c, 0.5)], false, false, vec![1.0], 0.0).unwrap();
        let tree = classify(&config, 1.0).unwrap();
        (m, tree)
    }

    fn tower(points: usize, alphas: &[f64]) -> (DiscreteManifold, Vec<TreeAnalysis>) {
        let m = DiscreteManifold::new(3, points, 2.0).unwrap();
        let t = Torus::new(3, 2.0).unwrap();
        let b = vec![spec(vec![1.0; 3], 0.2, 1.0), spec(vec![1.0; 3], 0.1, 2.0)];
        let config = ConfigurationSequence::new(t, b, false, false, alphas.to_vec(), 0.0).unwrap();
        let trees = alphas.iter().map(|&a| classify(&config, a).unwrap()).collect();
        (m, trees)
    }

    fn separated(points: usize, alphas: &[f64]) -> (DiscreteManifold, Vec<TreeAnalysis>) {
        let m = DiscreteManifold::new(3, points, 2.0).unwrap();
        let t = Torus::new(3, 2.0).unwrap();
        let b = vec![spec(vec![0.5, 1.0, 1.0], 0.15, 0.5), spec(vec![1.5, 1.0, 1.0], 0.15, 0.5)];
        let config = ConfigurationSequence::new(t, b, false, false, alphas.to_vec(), 0.0).unwrap();
        let trees = alphas.iter().map(|&a| classify(&config, a).unwrap()).collect();
        (m, trees)
    }

    /// Direct grid sum of `max(d, d_c)^{-p}g` at one point.
    fn direct(m: &DiscreteManifold, g: &Field, x: &[f64], p: f64, cells: f64) -> f64 {
        let dc = cells * m.spacing();
        let t = *m.torus();
        (0..m.total_points()).map(|k| t.distance(x, &m.grid_point(k)).max(dc).powf(-p) * g.values()[k]).sum::<f64>()
            * m.volume_element()
    }

    #[test]
    fn ids_round_trip() {
        for id in EstimateId::ALL {
            assert_eq!(id.name().parse::<EstimateId>().unwrap(), id);
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{}\"", id.name()));
        }
        assert!("nope".parse::<EstimateId>().is_err());
    }

    #[test]
    fn singular_integral_matches_direct_sum() {
        let (m, tree) = single(16, 2.0, 0.2);
        let b = positive_bubble_field(&m, &tree.bubbles[0].center, 0.2);
        let conv = singular_integral(&m, &b, 1.0, 3.0).unwrap();
        for idx in [0, 100, 2000, m.nearest_index(&[1.0, 1.0, 1.0])] {
            let x = m.grid_point(idx);
            let d = direct(&m, &b, &x, 1.0, 3.0);
            assert!((conv.values()[idx] - d).abs() <= 1e-10 * d, "{idx}");
        }
        assert_eq!(singular_integral(&m, &m.zeros(), 1.0, 3.0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn green_b_uniform_in_scale() {
        let opts = VerifierOptions::default();
        let mut centers = Vec::new();
        for c in [0.1, 0.05] {
            let (m, tree) = single(64, 2.0, c);
            let data = BubbleData::from_tree(&m, &tree);
            let rep = check_green_b(&m, &data, &opts).unwrap();
            let s = &rep.samples[0];
            assert_eq!(s.label, "center:0");
            let oracle = direct(&m, &data.b_fields[0], &s.point, 1.0, 3.0);
            assert!((s.lhs - oracle).abs() <= 1e-9 * oracle);
            assert!(s.ratio.is_finite() && s.ratio > 0.0);
            centers.push(s.ratio);
            assert!(rep.pass);
        }
        let q = centers[0] / centers[1];
        assert!((1.0 / 3.0..3.0).contains(&q), "{centers:?}");
    }

    #[test]
    fn decbulle_tail_vanishes_relative_to_bubble() {
        let alphas = [1.0, 1.5, 2.0, 3.0];
        let (m, trees) = tower(48, &alphas);
        let opts = VerifierOptions::default();
        let reps: Vec<EstimateReport> =
            trees.iter().map(|t| check_decbulle(&m, &BubbleData::from_tree(&m, t), &opts).unwrap()).collect();
        let sum = summarize_sweep(&reps).unwrap();
        assert!(sum.stable, "{sum:?}");
        // lhs/B_i at the slow bubble's r-sample decreases with α
        let at = |r: &EstimateReport| {
            let s = r.samples.iter().find(|s| s.label == "center:0").unwrap();
            s.ratio * s.rhs
        };
        let b_c: Vec<f64> = trees.iter().map(|t| positive_bubble(3, t.bubbles[0].mu, 0.0)).collect();
        let rel: Vec<f64> = reps.iter().zip(&b_c).map(|(r, b)| at(r) / b).collect();
        assert!(rel.windows(2).all(|w| w[1] < w[0]), "{rel:?}");
    }

    #[test]
    fn gradij_vanishes_for_separated_pair() {
        let alphas = [1.0, 2.0, 4.0, 8.0];
        let (m, trees) = separated(32, &alphas);
        let opts = VerifierOptions::default();
        let reps: Vec<EstimateReport> = trees
            .iter()
            .map(|t| check_gradij(&m, &BubbleData::from_tree(&m, t), sigma_proxy(t, 0.0), &opts).unwrap())
            .collect();
        let lhs: Vec<f64> = reps.iter().map(|r| r.samples[0].lhs).collect();
        assert!(lhs.windows(2).all(|w| w[1] < w[0]), "{lhs:?}");
        assert!(summarize_sweep(&reps).unwrap().stable);
    }

    #[test]
    fn green_bij_on_tower() {
        let alphas = [1.0, 1.5, 2.0, 3.0];
        let (m, trees) = tower(48, &alphas);
        let opts = VerifierOptions::default();
        let reps: Vec<EstimateReport> = trees
            .iter()
            .map(|t| check_green_bij(&m, &BubbleData::from_tree(&m, t), sigma_proxy(t, 0.0), &opts).unwrap())
            .collect();
        for r in &reps {
            assert!(r.samples.iter().all(|s| s.ratio.is_finite() && s.ratio >= 0.0));
            assert!(r.vanishing.is_some());
        }
        assert!(summarize_sweep(&reps).unwrap().stable);
    }

    #[test]
    fn lemtec_constants() {
        let (m, tree) = single(32, 2.0, 0.1);
        let data = BubbleData::from_tree(&m, &tree);
        for tau in [4.0, 5.0, 1.0] {
            let rep = check_lemtec(&m, &data, &VerifierOptions { tau: Some(tau), ..VerifierOptions::default() }).unwrap();
            assert_eq!(rep.samples[0].label, "grid_max");
            assert!(rep.worst_ratio.is_finite() && rep.worst_ratio > 0.0, "{tau} {}", rep.worst_ratio);
        }
        assert!(check_lemtec(&m, &data, &VerifierOptions { tau: Some(5.5), ..VerifierOptions::default() }).is_err());
        // no bubbles: both sides vanish
        let (l, r) = lemtec_sides(3, &[], &[], false, 0.1, 4.0).unwrap();
        assert!(l.is_empty() && r.is_empty());
        let z = m.zeros();
        let (l, r) = lemtec_sides(3, &[z.clone()], &[z], false, 0.1, 4.0).unwrap();
        assert!(l.iter().chain(&r).all(|&v| v == 0.0));
    }

    #[test]
    fn pointwise_bounds_on_assembled_bubble() {
        let (m, tree) = single(32, 2.0, 0.2);
        let t = Torus::new(3, 2.0).unwrap();
        let config = ConfigurationSequence::new(t, vec![spec(vec![1.0; 3], 0.2, 0.5)], false, false, vec![1.0], 0.0).unwrap();
        let bg = Background::new(&m, None, m.constant(1.0), GreenOptions::default()).unwrap();
        let an = assemble_ansatz(&m, &config, &tree, &bg, &zero_coefficients(&config, &bg), None).unwrap();
        let opts = VerifierOptions::default();
        let cont = check_estimate(&m, &tree, Some(&an), None, EstimateId::ContVa, &opts).unwrap();
        assert!(cont.pass && cont.worst_ratio > 0.5, "{}", cont.worst_ratio);
        let err = check_estimate(&m, &tree, Some(&an), Some(&m.constant(1.0)), EstimateId::ErrVxa, &opts).unwrap();
        assert!(err.pass, "{}", err.worst_ratio);
        assert!(check_estimate(&m, &tree, None, None, EstimateId::ContVa, &opts).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn mollification_insensitive(c in 0.08f64..0.2) {
            let (m, tree) = single(32, 2.0, c);
            let data = BubbleData::from_tree(&m, &tree);
            let a = check_green_b(&m, &data, &VerifierOptions::default()).unwrap();
            let b = check_green_b(&m, &data, &VerifierOptions { core_cells: 6.0, ..VerifierOptions::default() }).unwrap();
            for (s, t) in a.samples.iter().zip(&b.samples) {
                prop_assert!((s.ratio / t.ratio - 1.0).abs() < 0.25, "{} {} {}", s.label, s.ratio, t.ratio);
            }
        }

        #[test]
        fn ratios_are_nonnegative_and_finite(c in 0.08f64..0.2, seed in 0u64..1000) {
            let (m, tree) = single(16, 2.0, c);
            let data = BubbleData::from_tree(&m, &tree);
            let opts = VerifierOptions { seed, ..VerifierOptions::default() };
            for rep in [check_green_b(&m, &data, &opts).unwrap(), check_green_b_der(&m, &data, &opts).unwrap()] {
                prop_assert!(rep.samples.iter().all(|s| s.ratio.is_finite() && s.ratio > 0.0));
            }
        }
    }
}
