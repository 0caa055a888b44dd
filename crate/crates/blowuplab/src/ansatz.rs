//! Riemannian bubbles, kernel lifts and the approximate solution `𝒲_α`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::bubble_tree::{ConfigurationSequence, TreeAnalysis};
use crate::euclidean_bubble::{critical_power, positive_bubble, sphere_area, Profile};
use crate::manifold::{build_green_operator, quintic_step, DiscreteManifold, Field, GreenOperator, GreenOptions, Torus};
use crate::{Error, Result};

/// Floor for `|ln θ|` in the `n = 4` and `n = 3` weights.
pub const LOG_CLAMP: f64 = 1e-6;

/// `f(s) = |s|^{2*-2}s`.
pub fn f(s: f64, n: usize) -> f64 {
    critical_power(s, n)
}

/// `2* - 2`.
fn nonlinear_exponent(n: usize) -> f64 {
    4.0 / (n as f64 - 2.0)
}

/// `f'(s) = (2*-1)|s|^{2*-2}`.
pub fn f_prime(s: f64, n: usize) -> f64 {
    let p = nonlinear_exponent(n);
    (p + 1.0) * s.abs().powf(p)
}

/// C² quintic cutoff, `1` on `[0, inner]` and `0` beyond `outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cutoff {
    pub inner: f64,
    pub outer: f64,
}

impl Cutoff {
    /// `inner = i_g/2`, `outer = i_g`.
    pub fn for_torus(torus: &Torus) -> Self {
        let ig = torus.injectivity_radius();
        Self { inner: ig / 2.0, outer: ig }
    }

    pub fn eval(&self, d: f64) -> f64 {
        quintic_step(d, self.inner, self.outer).0
    }

    /// `(χ, χ', χ'')`.
    pub fn eval_with_derivatives(&self, d: f64) -> (f64, f64, f64) {
        quintic_step(d, self.inner, self.outer)
    }
}

/// `B_{μ,x}` on the grid.
pub fn positive_bubble_field(m: &DiscreteManifold, x: &[f64], mu: f64) -> Field {
    let n = m.dimension();
    let torus = *m.torus();
    m.field_from_fn(|y| positive_bubble(n, mu, torus.distance(x, y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    GreenTail,
    CutoffOnly,
}

#[derive(Debug, Clone)]
pub struct RiemannianBubble {
    pub center: Vec<f64>,
    pub mu: f64,
    pub profile: Arc<Profile>,
    pub tail_mode: TailMode,
    pub cutoff: Cutoff,
    pub field: Field,
}

fn check_scale(m: &DiscreteManifold, mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu < m.injectivity_radius() / 4.0) {
        return Err(Error::Precondition(format!(
            "scale {mu} must lie in (0, i_g/4 = {})",
            m.injectivity_radius() / 4.0
        )));
    }
    Ok(())
}

fn cutoff_core<F: Fn(&[f64]) -> f64 + Sync>(m: &DiscreteManifold, x: &[f64], mu: f64, shape: F) -> Field {
    let n = m.dimension();
    let torus = *m.torus();
    let cutoff = Cutoff::for_torus(&torus);
    let amp = mu.powf(-(n as f64 - 2.0) / 2.0);
    m.field_from_fn(|y| {
        let d = torus.distance(x, y);
        let chi = cutoff.eval(d);
        if chi == 0.0 {
            return 0.0;
        }
        let z: Vec<f64> = torus.displacement(x, y).iter().map(|v| v / mu).collect();
        chi * amp * shape(&z)
    })
}

/// `χ(d)μ^{-(n-2)/2}V(exp_x^{-1}/μ)`, plus the Green tail
/// `(1-χ)(n-2)ω_{n-1}λμ^{(n-2)/2}G_h(x,·)` when `Δ + h` has trivial kernel.
pub fn riemannian_bubble(
    m: &DiscreteManifold,
    profile: Arc<Profile>,
    x: &[f64],
    mu: f64,
    green: &GreenOperator,
) -> Result<RiemannianBubble> {
    let n = m.dimension();
    if profile.dimension() != n {
        return Err(Error::ShapeMismatch { expected: n, found: profile.dimension() });
    }
    if x.len() != n {
        return Err(Error::ShapeMismatch { expected: n, found: x.len() });
    }
    check_scale(m, mu)?;
    let torus = *m.torus();
    let cutoff = Cutoff::for_torus(&torus);
    let mut field = cutoff_core(m, x, mu, |z| profile.eval(z));
    let tail_mode = if green.has_kernel() { TailMode::CutoffOnly } else { TailMode::GreenTail };
    if tail_mode == TailMode::GreenTail && profile.lambda_inf() != 0.0 {
        let nf = n as f64;
        let g = green.point_source(x)?;
        let amp = (nf - 2.0) * sphere_area(n - 1) * profile.lambda_inf() * mu.powf((nf - 2.0) / 2.0);
        let outer = m.field_from_fn(|y| 1.0 - cutoff.eval(torus.distance(x, y)));
        field = field.add(&outer.mul(&g).scaled(amp));
    }
    Ok(RiemannianBubble { center: torus.wrap(x), mu, profile, tail_mode, cutoff, field })
}

/// `χ(d)μ^{-(n-2)/2}Z_j(exp_x^{-1}/μ)` for the 0-based kernel index `j`.
pub fn kernel_lift(m: &DiscreteManifold, profile: &Profile, x: &[f64], mu: f64, j: usize) -> Result<Field> {
    let nv = profile.kernel_dimension();
    if j >= nv {
        return Err(Error::IndexOutOfRange { index: j, len: nv });
    }
    check_scale(m, mu)?;
    let el = &profile.kernel()[j];
    Ok(cutoff_core(m, x, mu, |z| el.eval(z)))
}

#[derive(Debug, Clone)]
pub struct WeightFields {
    /// `θ = μ + d(x_i, ·)`
    pub theta: Field,
    /// `Θ`: `θ`, `θ²|ln θ|`, `θ²` for `n = 3`, `4`, `≥ 5`.
    pub big_theta: Field,
    /// `Ξ`: `θ|ln θ|` for `n = 3`, `θ` otherwise.
    pub xi: Field,
}

fn clamped_log(t: f64) -> f64 {
    t.ln().abs().max(LOG_CLAMP)
}

pub fn weight_fields(m: &DiscreteManifold, x: &[f64], mu: f64) -> WeightFields {
    let n = m.dimension();
    let torus = *m.torus();
    let theta = m.field_from_fn(|y| mu + torus.distance(x, y));
    let big_theta = theta.map(|t| match n {
        3 => t,
        4 => t * t * clamped_log(t),
        _ => t * t,
    });
    let xi = theta.map(|t| if n == 3 { t * clamped_log(t) } else { t });
    WeightFields { theta, big_theta, xi }
}

/// Limit data `u_0`, `h`, the Green operator of `Δ + h` and an
/// H¹-orthonormal basis of `K_0 = ker(Δ + h - f'(u_0))`.
#[derive(Debug, Clone)]
pub struct Background {
    pub u0: Field,
    pub h: Field,
    pub green: GreenOperator,
    pub k0: Vec<Field>,
}

impl Background {
    pub fn new(m: &DiscreteManifold, u0: Option<Field>, h: Field, options: GreenOptions) -> Result<Self> {
        m.check(&h)?;
        let n = m.dimension();
        let u0 = match u0 {
            Some(u) => {
                m.check(&u)?;
                u
            }
            None => m.zeros(),
        };
        let green = build_green_operator(m, &h, options)?;
        let raw = if u0.max_abs() == 0.0 {
            green.kernel_basis().to_vec()
        } else {
            let lin = h.zip_map(&u0, |hv, u| hv - f_prime(u, n));
            build_green_operator(m, &lin, options)?.kernel_basis().to_vec()
        };
        let k0 = h1_orthonormalize(m, raw)?;
        Ok(Self { u0, h, green, k0 })
    }

    pub fn is_trivial(&self) -> bool {
        self.u0.max_abs() == 0.0 && !self.green.has_kernel()
    }
}

fn h1_orthonormalize(m: &DiscreteManifold, fields: Vec<Field>) -> Result<Vec<Field>> {
    let mut out: Vec<Field> = Vec::new();
    for mut f in fields {
        for _ in 0..2 {
            for q in &out {
                let c = m.h1_inner(q, &f)?;
                f.axpy(-c, q);
            }
        }
        let norm = m.h1_inner(&f, &f)?.sqrt();
        if norm > 1e-10 {
            out.push(f.scaled(1.0 / norm));
        }
    }
    Ok(out)
}

/// Approximate solution `𝒲_α = u_{0,α} + Σ W_{i,α}` with its kernel family.
#[derive(Debug, Clone)]
pub struct Ansatz {
    pub alpha: f64,
    pub n: usize,
    pub centers: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
    pub profiles: Vec<Arc<Profile>>,
    /// `u_{0,α}`
    pub u0: Field,
    /// `V_{i,α}`
    pub bubbles: Vec<Field>,
    /// `W_{i,α}`
    pub components: Vec<Field>,
    /// Block 0 is `K_0`, block `i ≥ 1` is bubble `i`.
    pub coefficients: Vec<Vec<f64>>,
    pub kernel_lifts: Vec<Vec<Field>>,
    /// H¹ Gram matrix of the flattened kernel family.
    pub gram: Vec<Vec<f64>>,
    pub b0_indicator: bool,
    /// `B_{i,α}`
    pub b_fields: Vec<Field>,
    pub weights: Vec<WeightFields>,
    pub budget: f64,
    pub total: Field,
}

impl Ansatz {
    pub fn kernel_family(&self) -> Vec<&Field> {
        self.kernel_lifts.iter().flatten().collect()
    }

    pub fn kernel_dimension(&self) -> usize {
        self.kernel_lifts.iter().map(Vec::len).sum()
    }

    /// `max |gram - I|`.
    pub fn gram_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for (a, row) in self.gram.iter().enumerate() {
            for (b, &g) in row.iter().enumerate() {
                dev = dev.max((g - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        dev
    }

    /// `max_{|y| ≤ radius} |μ^{(n-2)/2}𝒲_α(exp_{x_i}(μy)) - V_i(y)|` over
    /// axis and diagonal samples, by trigonometric interpolation.
    pub fn rescaled_error(&self, m: &DiscreteManifold, i: usize, radius: f64, shells: usize) -> Result<f64> {
        if i >= self.centers.len() {
            return Err(Error::IndexOutOfRange { index: i, len: self.centers.len() });
        }
        let n = self.n;
        let mu = self.scales[i];
        let x = &self.centers[i];
        let mut ys: Vec<Vec<f64>> = vec![vec![0.0; n]];
        for s in 1..=shells {
            let r = radius * s as f64 / shells as f64;
            for a in 0..n {
                let mut y = vec![0.0; n];
                y[a] = r;
                ys.push(y.clone());
                y[a] = -r;
                ys.push(y);
            }
            ys.push(vec![r / (n as f64).sqrt(); n]);
        }
        let amp = mu.powf((n as f64 - 2.0) / 2.0);
        let torus = *m.torus();
        let errs: Result<Vec<f64>> = ys
            .par_iter()
            .map(|y| {
                let v: Vec<f64> = y.iter().map(|c| c * mu).collect();
                let p = torus.exp_chart(x, &v);
                Ok((amp * m.interpolate(&self.total, &p)? - self.profiles[i].eval(y)).abs())
            })
            .collect();
        Ok(errs?.into_iter().fold(0.0, f64::max))
    }
}

/// Coefficient blocks of zeros shaped for `config` and `background`.
pub fn zero_coefficients(config: &ConfigurationSequence, background: &Background) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; background.k0.len()]];
    c.extend(config.bubbles.iter().map(|b| vec![0.0; b.profile.kernel_dimension()]));
    c
}

/// Default budget `ε_α = α^{-1/2}`.
pub fn default_budget(alpha: f64) -> f64 {
    alpha.powf(-0.5).min(1.0)
}

pub fn assemble_ansatz(
    m: &DiscreteManifold,
    config: &ConfigurationSequence,
    tree: &TreeAnalysis,
    background: &Background,
    coefficients: &[Vec<f64>],
    budget: Option<f64>,
) -> Result<Ansatz> {
    let n = m.dimension();
    if config.n != n || tree.n != n {
        return Err(Error::ShapeMismatch { expected: n, found: config.n });
    }
    if config.torus != *m.torus() {
        return Err(Error::Precondition("configuration torus differs from the grid torus".into()));
    }
    let k = config.len();
    if coefficients.len() != k + 1 {
        return Err(Error::ShapeMismatch { expected: k + 1, found: coefficients.len() });
    }
    if coefficients[0].len() != background.k0.len() {
        return Err(Error::ShapeMismatch { expected: background.k0.len(), found: coefficients[0].len() });
    }
    for (b, c) in config.bubbles.iter().zip(&coefficients[1..]) {
        if c.len() != b.profile.kernel_dimension() {
            return Err(Error::ShapeMismatch { expected: b.profile.kernel_dimension(), found: c.len() });
        }
    }
    if config.kernel_flag != background.green.has_kernel() {
        return Err(Error::Precondition(format!(
            "kernel flag {} disagrees with the computed kernel dimension {}",
            config.kernel_flag,
            background.green.kernel_dimension()
        )));
    }
    if config.background_nonzero != (background.u0.max_abs() > 0.0) {
        return Err(Error::Precondition("background flag disagrees with u_0".into()));
    }
    let budget = budget.unwrap_or_else(|| default_budget(tree.alpha));
    let total_c: f64 = coefficients.iter().flatten().map(|c| c.abs()).sum();
    if total_c > budget {
        return Err(Error::Budget { total: total_c, budget });
    }

    let centers: Vec<Vec<f64>> = tree.bubbles.iter().map(|b| b.center.clone()).collect();
    let scales: Vec<f64> = tree.bubbles.iter().map(|b| b.mu).collect();
    let profiles: Vec<Arc<Profile>> = config.bubbles.iter().map(|b| b.profile.clone()).collect();

    let mut u0 = background.u0.clone();
    for (c, z) in coefficients[0].iter().zip(&background.k0) {
        u0.axpy(*c, z);
    }
    let mut kernel_lifts = vec![background.k0.clone()];
    let mut bubbles = Vec::with_capacity(k);
    let mut components = Vec::with_capacity(k);
    for i in 0..k {
        let v = riemannian_bubble(m, profiles[i].clone(), &centers[i], scales[i], &background.green)?.field;
        let lifts: Vec<Field> = (0..profiles[i].kernel_dimension())
            .into_par_iter()
            .map(|j| kernel_lift(m, &profiles[i], &centers[i], scales[i], j))
            .collect::<Result<_>>()?;
        let mut w = v.clone();
        for (c, z) in coefficients[i + 1].iter().zip(&lifts) {
            w.axpy(*c, z);
        }
        bubbles.push(v);
        components.push(w);
        kernel_lifts.push(lifts);
    }
    let mut total = u0.clone();
    for w in &components {
        total = total.add(w);
    }

    let family: Vec<&Field> = kernel_lifts.iter().flatten().collect();
    let gram = gram_matrix(m, &family)?;
    let b_fields = (0..k).map(|i| positive_bubble_field(m, &centers[i], scales[i])).collect();
    let weights = (0..k).map(|i| weight_fields(m, &centers[i], scales[i])).collect();
    Ok(Ansatz {
        alpha: tree.alpha,
        n,
        centers,
        scales,
        profiles,
        u0,
        bubbles,
        components,
        coefficients: coefficients.to_vec(),
        kernel_lifts,
        gram,
        b0_indicator: config.b0_indicator(),
        b_fields,
        weights,
        budget,
        total,
    })
}

/// Symmetric matrix of `⟨a, b⟩_{H¹}`.
pub fn gram_matrix(m: &DiscreteManifold, family: &[&Field]) -> Result<Vec<Vec<f64>>> {
    let images: Vec<Field> = family.par_iter().map(|z| m.helmholtz(z, 1.0)).collect::<Result<_>>()?;
    let d = family.len();
    let mut g = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in a..d {
            let v = m.l2_inner(family[a], &images[b]);
            g[a][b] = v;
            g[b][a] = v;
        }
    }
    Ok(g)
}

/// `Δ𝒲 + h_α𝒲 - f(𝒲)`.
pub fn residual(m: &DiscreteManifold, w: &Field, h_alpha: &Field) -> Result<Field> {
    let n = m.dimension();
    m.check(h_alpha)?;
    let lap = m.laplacian(w)?;
    let hw = h_alpha.mul(w);
    Ok(lap.add(&hw).sub(&w.map(|s| f(s, n))))
}

/// Pointwise majorant `(ε + ‖h_α - h‖_∞)B_0 + ΣB_i + Σ_{i≠j}B_i^{2*-2}B_j + εΣB_i^{2*-1}`,
/// indices `i, j` ranging over `0..k` with `B_0` the indicator.
pub fn residual_majorant(ansatz: &Ansatz, h_gap: f64) -> Field {
    let n = ansatz.n;
    let p = nonlinear_exponent(n);
    let eps = ansatz.budget;
    let b0 = if ansatz.b0_indicator { 1.0 } else { 0.0 };
    let k = ansatz.b_fields.len();
    let len = ansatz.total.len();
    let values: Vec<f64> = (0..len)
        .into_par_iter()
        .map(|idx| {
            let mut b = Vec::with_capacity(k + 1);
            b.push(b0);
            b.extend(ansatz.b_fields.iter().map(|f| f.values()[idx]));
            let mut s = (eps + h_gap) * b0;
            for i in 1..=k {
                s += b[i] + eps * b[i].powf(p + 1.0);
            }
            for i in 0..=k {
                for j in 0..=k {
                    if i != j && b[i] > 0.0 {
                        s += b[i].powf(p) * b[j];
                    }
                }
            }
            s
        })
        .collect();
    ansatz.total.with_values(values)
}

/// `max |residual|/majorant` over the grid.
pub fn residual_constant(residual: &Field, majorant: &Field) -> f64 {
    residual
        .values()
        .par_iter()
        .zip(majorant.values().par_iter())
        .map(|(r, b)| if *b > 0.0 { r.abs() / b } else if *r == 0.0 { 0.0 } else { f64::INFINITY })
        .reduce(|| 0.0, f64::max)
}
