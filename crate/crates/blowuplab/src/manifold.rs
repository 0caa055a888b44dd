//! Flat periodic torus `(ℝ/Lℤ)ⁿ` with an `Nⁿ` grid, spectral Laplacian
//! `Δ = -Σ∂²`, the H¹ scalar product and Green operators for `Δ + h`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::euclidean_bubble::sphere_area;
use crate::krylov;
use crate::{Error, Result};

/// Quintic step: 1 on `[0, a]`, 0 on `[b, ∞)`, C² with vanishing first and
/// second derivatives at both ends. Returns `(χ, χ', χ'')`.
pub(crate) fn quintic_step(d: f64, a: f64, b: f64) -> (f64, f64, f64) {
    if d <= a {
        return (1.0, 0.0, 0.0);
    }
    if d >= b {
        return (0.0, 0.0, 0.0);
    }
    let w = b - a;
    let t = (d - a) / w;
    let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    let d2s = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
    (1.0 - s, -ds / w, -d2s / (w * w))
}

/// C^∞ step: 1 on `[0, a]`, 0 on `[b, ∞)`, built from `e^{-1/t}`.
/// Returns `(χ, χ', χ'')`.
pub(crate) fn smooth_step(d: f64, a: f64, b: f64) -> (f64, f64, f64) {
    if d <= a {
        return (1.0, 0.0, 0.0);
    }
    if d >= b {
        return (0.0, 0.0, 0.0);
    }
    let w = b - a;
    let t = (d - a) / w;
    let f = |t: f64| (-1.0 / t).exp();
    let df = |t: f64| f(t) / (t * t);
    let d2f = |t: f64| f(t) * (1.0 - 2.0 * t) / t.powi(4);
    // g = f(1-t) / (f(1-t) + f(t)) decreases from 1 to 0
    let (p, q) = (f(1.0 - t), f(t));
    let (dp, dq) = (-df(1.0 - t), df(t));
    let (d2p, d2q) = (d2f(1.0 - t), d2f(t));
    let s = p + q;
    let num1 = dp * q - p * dq;
    let g = p / s;
    let g1 = num1 / (s * s);
    let g2 = ((d2p * q - p * d2q) * s - 2.0 * num1 * (dp + dq)) / (s * s * s);
    (g, g1 / w, g2 / (w * w))
}

/// Geometry of the flat torus of period `L` in each of `n` axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Torus {
    pub n: usize,
    pub period: f64,
}

impl Torus {
    pub fn new(n: usize, period: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidDimension(n));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidGrid(format!("period must be positive, got {period}")));
        }
        Ok(Self { n, period })
    }

    /// `i_g = L/2`.
    pub fn injectivity_radius(&self) -> f64 {
        self.period / 2.0
    }

    pub fn wrap(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v.rem_euclid(self.period)).collect()
    }

    /// Minimal-image displacement from `x` to `y`, each component in `[-L/2, L/2)`.
    pub fn displacement(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        x.iter().zip(y).map(|(a, b)| wrap_component(b - a, self.period)).collect()
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(a, b)| wrap_component(b - a, self.period).powi(2)).sum::<f64>().sqrt()
    }

    pub fn exp_chart(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        x.iter().zip(v).map(|(a, b)| (a + b).rem_euclid(self.period)).collect()
    }

    /// Inverse of `exp_chart` on the ball of radius `i_g`.
    pub fn log_chart(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let v = self.displacement(x, y);
        let d = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if d >= self.injectivity_radius() {
            return Err(Error::CutLocus { distance: d, radius: self.injectivity_radius() });
        }
        Ok(v)
    }
}

fn wrap_component(delta: f64, period: f64) -> f64 {
    let mut v = delta.rem_euclid(period);
    if v >= period / 2.0 {
        v -= period;
    }
    v
}

/// Real samples on the `Nⁿ` grid, row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    n: usize,
    points: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn new(n: usize, points: usize, values: Vec<f64>) -> Result<Self> {
        let expected = points.pow(n as u32);
        if values.len() != expected {
            return Err(Error::ShapeMismatch { expected, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("field values must be finite".into()));
        }
        Ok(Self { n, points, values })
    }

    pub(crate) fn from_vec_unchecked(n: usize, points: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), points.pow(n as u32));
        Self { n, points, values }
    }

    /// Same grid shape with new samples.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Field {
        Field::from_vec_unchecked(self.n, self.points, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.par_iter().map(|v| v.abs()).reduce(|| 0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.par_iter().all(|v| v.is_finite())
    }

    pub fn map<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Field {
        Self { values: self.values.par_iter().map(|&v| f(v)).collect(), ..*self }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64 + Sync>(&self, other: &Field, f: F) -> Field {
        debug_assert_eq!(self.values.len(), other.values.len());
        Self { values: self.values.par_iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(), ..*self }
    }

    /// `self += s·other`
    pub fn axpy(&mut self, s: f64, other: &Field) {
        krylov::axpy(s, &other.values, &mut self.values);
    }

    pub fn scaled(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

}

/// Structured record `{n, N, L, values}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub n: usize,
    #[serde(rename = "N")]
    pub grid_points: usize,
    #[serde(rename = "L")]
    pub period: f64,
    pub values: Vec<f64>,
}

struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `|k|²` per flat index.
    k2: Vec<f64>,
    /// Wavenumber per 1-D index, Nyquist set to zero (for odd derivatives).
    k_axis_odd: Vec<f64>,
}

const LINES_PER_TASK: usize = 64;
/// Ritz values below this are refined by shifted inverse iteration before
/// the kernel threshold is applied.
const KERNEL_CANDIDATE: f64 = 1e-2;
const INVERSE_SHIFT: f64 = 1e-5;
const INVERSE_ROUNDS: usize = 3;

/// Periodic grid on the flat torus.
#[derive(Clone)]
pub struct DiscreteManifold {
    torus: Torus,
    points: usize,
    spectral: Arc<OnceLock<Spectral>>,
}

impl std::fmt::Debug for DiscreteManifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteManifold").field("torus", &self.torus).field("points", &self.points).finish()
    }
}

impl DiscreteManifold {
    pub fn new(n: usize, points: usize, period: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidDimension(n));
        }
        if points < 16 || !points.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("grid size must be even and at least 16, got {points}")));
        }
        let torus = Torus::new(n, period)?;
        Ok(Self { torus, points, spectral: Arc::new(OnceLock::new()) })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn dimension(&self) -> usize {
        self.torus.n
    }

    pub fn period(&self) -> f64 {
        self.torus.period
    }

    pub fn grid_points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.torus.period / self.points as f64
    }

    pub fn injectivity_radius(&self) -> f64 {
        self.torus.injectivity_radius()
    }

    pub fn volume_element(&self) -> f64 {
        self.spacing().powi(self.torus.n as i32)
    }

    pub fn volume(&self) -> f64 {
        self.torus.period.powi(self.torus.n as i32)
    }

    pub fn total_points(&self) -> usize {
        self.points.pow(self.torus.n as u32)
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.torus.distance(x, y)
    }

    /// Grid coordinates of a flat index.
    pub fn grid_point(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.torus.n];
        self.fill_point(idx, &mut x);
        x
    }

    fn fill_point(&self, mut idx: usize, x: &mut [f64]) {
        let h = self.spacing();
        for a in (0..self.torus.n).rev() {
            x[a] = (idx % self.points) as f64 * h;
            idx /= self.points;
        }
    }

    /// Flat index of the grid point nearest to `x`.
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let h = self.spacing();
        x.iter().fold(0, |acc, &c| {
            let j = ((c.rem_euclid(self.torus.period) / h).round() as usize) % self.points;
            acc * self.points + j
        })
    }

    pub fn field_from_fn<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> Field {
        let n = self.torus.n;
        let values = (0..self.total_points())
            .into_par_iter()
            .map_init(|| vec![0.0; n], |x, idx| {
                self.fill_point(idx, x);
                f(x)
            })
            .collect();
        Field::from_vec_unchecked(n, self.points, values)
    }

    pub fn zeros(&self) -> Field {
        Field::from_vec_unchecked(self.torus.n, self.points, vec![0.0; self.total_points()])
    }

    pub fn constant(&self, c: f64) -> Field {
        Field::from_vec_unchecked(self.torus.n, self.points, vec![c; self.total_points()])
    }

    pub fn field(&self, values: Vec<f64>) -> Result<Field> {
        Field::new(self.torus.n, self.points, values)
    }

    pub fn check(&self, u: &Field) -> Result<()> {
        if u.n != self.torus.n || u.points != self.points {
            return Err(Error::ShapeMismatch { expected: self.total_points(), found: u.len() });
        }
        Ok(())
    }

    pub fn record(&self, u: &Field) -> FieldRecord {
        FieldRecord { n: u.n, grid_points: u.points, period: self.torus.period, values: u.values.clone() }
    }

    pub fn from_record(&self, r: FieldRecord) -> Result<Field> {
        if r.n != self.torus.n || r.grid_points != self.points || (r.period - self.torus.period).abs() > 1e-12 * self.torus.period {
            return Err(Error::ShapeMismatch { expected: self.total_points(), found: r.values.len() });
        }
        Field::new(r.n, r.grid_points, r.values)
    }

    pub fn integral(&self, u: &Field) -> f64 {
        self.volume_element() * krylov::dot(&u.values, &vec![1.0; u.len()])
    }

    pub fn l2_inner(&self, u: &Field, v: &Field) -> f64 {
        self.volume_element() * krylov::dot(&u.values, &v.values)
    }

    pub fn l2_norm(&self, u: &Field) -> f64 {
        self.l2_inner(u, u).sqrt()
    }

    fn spectral(&self) -> &Spectral {
        self.spectral.get_or_init(|| {
            let nn = self.points;
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(nn);
            let inverse = planner.plan_fft_inverse(nn);
            let base = 2.0 * PI / self.torus.period;
            let k_axis: Vec<f64> =
                (0..nn).map(|j| base * if j < nn / 2 { j as f64 } else { j as f64 - nn as f64 }).collect();
            let mut k_axis_odd = k_axis.clone();
            k_axis_odd[nn / 2] = 0.0;
            let n = self.torus.n;
            let k2 = (0..self.total_points())
                .into_par_iter()
                .map(|mut idx| {
                    let mut s = 0.0;
                    for _ in 0..n {
                        s += k_axis[idx % nn].powi(2);
                        idx /= nn;
                    }
                    s
                })
                .collect();
            Spectral { forward, inverse, k2, k_axis_odd }
        })
    }

    fn transform(&self, data: &mut [Complex<f64>], inverse: bool) {
        let sp = self.spectral();
        let fft = if inverse { &sp.inverse } else { &sp.forward };
        let nn = self.points;
        let total = data.len();
        let n = self.torus.n;
        let mut buffer = vec![Complex::new(0.0, 0.0); total];
        for axis in 0..n {
            let stride = nn.pow((n - 1 - axis) as u32);
            if stride == 1 {
                data.par_chunks_mut(nn * LINES_PER_TASK).for_each(|c| fft.process(c));
                continue;
            }
            {
                let src: &[Complex<f64>] = data;
                buffer.par_chunks_mut(nn).enumerate().for_each(|(line, out)| {
                    let base = (line / stride) * nn * stride + line % stride;
                    for (j, o) in out.iter_mut().enumerate() {
                        *o = src[base + j * stride];
                    }
                });
            }
            buffer.par_chunks_mut(nn * LINES_PER_TASK).for_each(|c| fft.process(c));
            let buf: &[Complex<f64>] = &buffer;
            data.par_iter_mut().enumerate().for_each(|(idx, v)| {
                let line = (idx / (stride * nn)) * stride + idx % stride;
                *v = buf[line * nn + (idx / stride) % nn];
            });
        }
        if inverse {
            let s = 1.0 / total as f64;
            data.par_iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Applies a real multiplier `m(|k|²)` to `u`.
    pub fn radial_multiplier<F: Fn(f64) -> f64 + Sync>(&self, u: &Field, m: F) -> Field {
        let k2 = &self.spectral().k2;
        let mut data: Vec<Complex<f64>> = u.values.par_iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data.par_iter_mut().zip(k2.par_iter()).for_each(|(z, &k)| *z *= m(k));
        self.transform(&mut data, true);
        Field::from_vec_unchecked(u.n, u.points, data.par_iter().map(|z| z.re).collect())
    }

    /// Applies a real even multiplier to two fields with one complex transform pair.
    pub fn radial_multiplier_pair<F: Fn(f64) -> f64 + Sync>(&self, u: &Field, v: &Field, m: F) -> (Field, Field) {
        let k2 = &self.spectral().k2;
        let mut data: Vec<Complex<f64>> =
            u.values.par_iter().zip(&v.values).map(|(&a, &b)| Complex::new(a, b)).collect();
        self.transform(&mut data, false);
        data.par_iter_mut().zip(k2.par_iter()).for_each(|(z, &k)| *z *= m(k));
        self.transform(&mut data, true);
        let re = data.par_iter().map(|z| z.re).collect();
        let im = data.par_iter().map(|z| z.im).collect();
        (Field::from_vec_unchecked(u.n, u.points, re), Field::from_vec_unchecked(u.n, u.points, im))
    }

    /// `∫ K(x - y)u(y) dy` as a periodic grid sum; `kernel` holds `K` sampled
    /// at the displacements `grid_point(idx)` from the origin.
    pub fn convolve(&self, kernel: &Field, u: &Field) -> Result<Field> {
        self.check(kernel)?;
        self.check(u)?;
        let mut a: Vec<Complex<f64>> = kernel.values.par_iter().map(|&v| Complex::new(v, 0.0)).collect();
        let mut b: Vec<Complex<f64>> = u.values.par_iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut a, false);
        self.transform(&mut b, false);
        let dv = self.volume_element();
        b.par_iter_mut().zip(a.par_iter()).for_each(|(z, k)| *z *= k * dv);
        self.transform(&mut b, true);
        Ok(Field::from_vec_unchecked(u.n, u.points, b.par_iter().map(|z| z.re).collect()))
    }

    /// `Δu` with `Δ = -Σ∂²` (multiplier `|k|²`).
    pub fn laplacian(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        Ok(self.radial_multiplier(u, |k2| k2))
    }

    /// `(Δ + c)u`.
    pub fn helmholtz(&self, u: &Field, c: f64) -> Result<Field> {
        self.check(u)?;
        Ok(self.radial_multiplier(u, |k2| k2 + c))
    }

    /// Spectral gradient; the Nyquist mode is dropped.
    pub fn gradient(&self, u: &Field) -> Result<Vec<Field>> {
        self.check(u)?;
        let sp = self.spectral();
        let nn = self.points;
        let n = self.torus.n;
        let mut hat: Vec<Complex<f64>> = u.values.par_iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut hat, false);
        let mut out = Vec::with_capacity(n);
        for axis in 0..n {
            let stride = nn.pow((n - 1 - axis) as u32);
            let mut data: Vec<Complex<f64>> = hat
                .par_iter()
                .enumerate()
                .map(|(idx, z)| z * Complex::new(0.0, sp.k_axis_odd[(idx / stride) % nn]))
                .collect();
            self.transform(&mut data, true);
            out.push(Field::from_vec_unchecked(n, nn, data.par_iter().map(|z| z.re).collect()));
        }
        Ok(out)
    }

    /// Pointwise `|∇u|`.
    pub fn gradient_norm(&self, u: &Field) -> Result<Field> {
        let g = self.gradient(u)?;
        let mut acc = self.zeros();
        for gi in &g {
            acc.values.par_iter_mut().zip(&gi.values).for_each(|(a, b)| *a += b * b);
        }
        Ok(acc.map(f64::sqrt))
    }

    /// `∫(∇u·∇v + uv)`, computed as `∫u (Δ+1)v`.
    pub fn h1_inner(&self, u: &Field, v: &Field) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        let w = self.radial_multiplier(v, |k2| k2 + 1.0);
        Ok(self.l2_inner(u, &w))
    }

    /// `(Δ + c)^{-1} f` for `c > 0`.
    pub fn helmholtz_inverse(&self, f: &Field, c: f64) -> Result<Field> {
        self.check(f)?;
        if c <= 0.0 {
            return Err(Error::Domain(format!("Helmholtz shift must be positive, got {c}")));
        }
        Ok(self.radial_multiplier(f, |k2| 1.0 / (k2 + c)))
    }

    /// Trigonometric interpolation of `u` at an arbitrary point (Nyquist modes
    /// dropped, so exact for fields band-limited below `N/2`).
    pub fn interpolate(&self, u: &Field, x: &[f64]) -> Result<f64> {
        self.check(u)?;
        let sp = self.spectral();
        let nn = self.points;
        let n = self.torus.n;
        let mut hat: Vec<Complex<f64>> = u.values.par_iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut hat, false);
        let total = hat.len() as f64;
        let s: Complex<f64> = hat
            .par_iter()
            .enumerate()
            .map(|(mut idx, z)| {
                let mut phase = 0.0;
                for a in (0..n).rev() {
                    phase += sp.k_axis_odd[idx % nn] * x[a];
                    idx /= nn;
                }
                z * Complex::new(phase.cos(), phase.sin())
            })
            .reduce(|| Complex::new(0.0, 0.0), |a, b| a + b);
        Ok(s.re / total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenOptions {
    pub eigen_threshold: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Start vectors and blocks of the Krylov kernel search (variable `h`).
    pub ritz_vectors: usize,
    pub ritz_blocks: usize,
    pub seed: u64,
}

impl Default for GreenOptions {
    fn default() -> Self {
        Self { eigen_threshold: 1e-8, tolerance: 1e-10, max_iterations: 2000, ritz_vectors: 20, ritz_blocks: 4, seed: 7 }
    }
}

#[derive(Debug, Clone)]
enum GreenKind {
    Constant(f64),
    /// `Δ + h = (Δ+c)^{1/2} S (Δ+c)^{1/2}` with `S = I - M(c-h)M`.
    Variable { shift: f64, kernel_psi: Vec<Vec<f64>> },
}

/// Solution operator of `Δ + h`, orthogonal to the discrete kernel.
#[derive(Debug, Clone)]
pub struct GreenOperator {
    manifold: DiscreteManifold,
    potential: Field,
    options: GreenOptions,
    kernel_basis: Vec<Field>,
    kind: GreenKind,
    ritz_values: Vec<f64>,
}

pub fn build_green_operator(m: &DiscreteManifold, h: &Field, options: GreenOptions) -> Result<GreenOperator> {
    m.check(h)?;
    if !h.is_finite() {
        return Err(Error::Domain("potential must be finite".into()));
    }
    let (lo, hi) = h.values.par_iter().fold(|| (f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))).reduce(
        || (f64::INFINITY, f64::NEG_INFINITY),
        |(a, b), (c, d)| (a.min(c), b.max(d)),
    );
    if hi - lo <= 1e-14 * hi.abs().max(1.0) {
        let c = h.values[0];
        let kernel_basis = constant_kernel(m, c, options.eigen_threshold);
        return Ok(GreenOperator {
            manifold: m.clone(),
            potential: h.clone(),
            options,
            kernel_basis,
            kind: GreenKind::Constant(c),
            ritz_values: Vec::new(),
        });
    }
    let shift = hi.max(0.0) + 1.0;
    let mut op = GreenOperator {
        manifold: m.clone(),
        potential: h.clone(),
        options,
        kernel_basis: Vec::new(),
        kind: GreenKind::Variable { shift, kernel_psi: Vec::new() },
        ritz_values: Vec::new(),
    };
    // smoothed random starts reach the low modes of S in few blocks
    let smooth = |k2: f64| 1.0 / (k2 + shift);
    let start: Vec<Vec<f64>> = krylov::random_vectors(m.total_points(), options.ritz_vectors, options.seed)
        .into_iter()
        .map(|v| m.radial_multiplier(&Field::from_vec_unchecked(m.dimension(), m.grid_points(), v), smooth).values)
        .collect();
    let pairs = krylov::block_krylov(|psi| op.apply_s(psi, shift), start, options.ritz_blocks);
    op.ritz_values = pairs.values.clone();
    let candidates: Vec<Vec<f64>> = pairs
        .values
        .iter()
        .zip(pairs.vectors)
        .filter(|(v, _)| v.abs() < KERNEL_CANDIDATE)
        .map(|(_, vec)| vec)
        .collect();
    let refined = op.refine_kernel(candidates, shift);
    let kernel_psi: Vec<Vec<f64>> = refined
        .values
        .iter()
        .zip(refined.vectors)
        .filter(|(v, _)| v.abs() < options.eigen_threshold)
        .map(|(_, vec)| vec)
        .collect();
    let raw: Vec<Field> = kernel_psi
        .iter()
        .map(|psi| m.radial_multiplier(&Field::from_vec_unchecked(m.dimension(), m.grid_points(), psi.clone()), |k2| {
            1.0 / (k2 + shift).sqrt()
        }))
        .collect();
    op.kernel_basis = l2_orthonormalize(m, raw);
    op.kind = GreenKind::Variable { shift, kernel_psi };
    Ok(op)
}

fn l2_orthonormalize(m: &DiscreteManifold, fields: Vec<Field>) -> Vec<Field> {
    let w = m.volume_element().sqrt();
    let vecs = fields.into_iter().map(|f| f.values.iter().map(|v| v * w).collect()).collect();
    krylov::orthonormalize(&[], vecs)
        .into_iter()
        .map(|v: Vec<f64>| Field::from_vec_unchecked(m.dimension(), m.grid_points(), v.iter().map(|x| x / w).collect()))
        .collect()
}

fn constant_kernel(m: &DiscreteManifold, h: f64, threshold: f64) -> Vec<Field> {
    let nn = m.grid_points() as i64;
    let n = m.dimension();
    let base = 2.0 * PI / m.period();
    // representatives of ±k pairs: first nonzero component in (0, N/2]
    let mut modes: Vec<Vec<i64>> = Vec::new();
    let mut idx = vec![-(nn / 2) + 1; n];
    loop {
        let k2: f64 = idx.iter().map(|&j| (base * j as f64).powi(2)).sum();
        if (k2 + h).abs() < threshold {
            let first = idx.iter().find(|&&j| j != 0);
            let keep = match first {
                None => true,
                Some(&j) => j > 0,
            };
            if keep {
                modes.push(idx.clone());
            }
        }
        let mut a = n;
        loop {
            if a == 0 {
                let fields = kernel_fields(m, &modes, base);
                return l2_orthonormalize(m, fields);
            }
            a -= 1;
            if idx[a] < nn / 2 {
                idx[a] += 1;
                break;
            }
            idx[a] = -(nn / 2) + 1;
        }
    }
}

fn kernel_fields(m: &DiscreteManifold, modes: &[Vec<i64>], base: f64) -> Vec<Field> {
    let nn = m.grid_points() as i64;
    let mut out = Vec::new();
    for k in modes {
        let phase = |x: &[f64]| k.iter().zip(x).map(|(&j, &xi)| base * j as f64 * xi).sum::<f64>();
        out.push(m.field_from_fn(|x| phase(x).cos()));
        // self-conjugate modes (all components 0 or N/2) have no sine partner
        if k.iter().any(|&j| j != 0 && j != nn / 2) {
            out.push(m.field_from_fn(|x| phase(x).sin()));
        }
    }
    out
}

impl GreenOperator {
    pub fn manifold(&self) -> &DiscreteManifold {
        &self.manifold
    }

    pub fn potential(&self) -> &Field {
        &self.potential
    }

    pub fn kernel_basis(&self) -> &[Field] {
        &self.kernel_basis
    }

    /// Ritz values of the preconditioned operator from the kernel search
    /// (empty for constant potentials).
    pub fn ritz_values(&self) -> &[f64] {
        &self.ritz_values
    }

    pub fn kernel_dimension(&self) -> usize {
        self.kernel_basis.len()
    }

    pub fn has_kernel(&self) -> bool {
        !self.kernel_basis.is_empty()
    }

    pub fn options(&self) -> &GreenOptions {
        &self.options
    }

    /// `(Δ + h)u`.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        let lap = self.manifold.laplacian(u)?;
        Ok(lap.zip_map(&u.mul(&self.potential), |a, b| a + b))
    }

    fn apply_s(&self, psi: &[f64], shift: f64) -> Vec<f64> {
        let m = &self.manifold;
        let f = Field::from_vec_unchecked(m.dimension(), m.grid_points(), psi.to_vec());
        let half = |k2: f64| 1.0 / (k2 + shift).sqrt();
        let a = m.radial_multiplier(&f, half);
        let weighted = a.zip_map(&self.potential, |v, h| (shift - h) * v);
        let b = m.radial_multiplier(&weighted, half);
        psi.par_iter().zip(b.values.par_iter()).map(|(p, q)| p - q).collect()
    }

    /// Block inverse iteration on `S + εI` followed by Rayleigh–Ritz.
    fn refine_kernel(&self, mut block: Vec<Vec<f64>>, shift: f64) -> krylov::RitzPairs {
        let mut pairs = krylov::RitzPairs { values: Vec::new(), vectors: Vec::new() };
        for _ in 0..INVERSE_ROUNDS {
            if block.is_empty() {
                break;
            }
            let solved: Vec<Vec<f64>> = block
                .iter()
                .map(|v| {
                    krylov::minres(
                        |x| {
                            let mut y = self.apply_s(x, shift);
                            krylov::axpy(INVERSE_SHIFT, x, &mut y);
                            y
                        },
                        v,
                        None,
                        1e-10,
                        self.options.max_iterations,
                    )
                    .x
                })
                .collect();
            let q = krylov::orthonormalize(&[], solved);
            let images: Vec<Vec<f64>> = q.iter().map(|v| self.apply_s(v, shift)).collect();
            pairs = krylov::rayleigh_ritz(&q, &images);
            block = pairs.vectors.clone();
        }
        pairs
    }

    /// L²-projection onto the orthogonal complement of the kernel.
    pub fn project(&self, f: &Field) -> Field {
        let mut out = f.clone();
        for z in &self.kernel_basis {
            let c = self.manifold.l2_inner(f, z);
            out.axpy(-c, z);
        }
        out
    }

    /// The solution of `(Δ+h)u = Π f` orthogonal to the kernel.
    pub fn solve(&self, f: &Field) -> Result<Field> {
        let m = &self.manifold;
        m.check(f)?;
        let pf = self.project(f);
        match &self.kind {
            GreenKind::Constant(c) => {
                let thr = self.options.eigen_threshold;
                let c = *c;
                Ok(m.radial_multiplier(&pf, |k2| if (k2 + c).abs() < thr { 0.0 } else { 1.0 / (k2 + c) }))
            }
            GreenKind::Variable { shift, kernel_psi } => {
                let shift = *shift;
                let half = |k2: f64| 1.0 / (k2 + shift).sqrt();
                let project = |v: &mut Vec<f64>| {
                    for q in kernel_psi {
                        let c = krylov::dot(q, v);
                        krylov::axpy(-c, q, v);
                    }
                };
                let mut b = m.radial_multiplier(&pf, half).values;
                project(&mut b);
                let out = krylov::minres(
                    |psi| {
                        let mut y = self.apply_s(psi, shift);
                        project(&mut y);
                        y
                    },
                    &b,
                    None,
                    self.options.tolerance,
                    self.options.max_iterations,
                );
                if !out.converged {
                    return Err(Error::Convergence { iterations: out.iterations, residual: out.relative_residual });
                }
                let u = m.radial_multiplier(&Field::from_vec_unchecked(m.dimension(), m.grid_points(), out.x), half);
                Ok(self.project(&u))
            }
        }
    }

    /// Response to a unit-mass single-cell source at grid index `idx`.
    pub fn column(&self, idx: usize) -> Result<Field> {
        let m = &self.manifold;
        if idx >= m.total_points() {
            return Err(Error::IndexOutOfRange { index: idx, len: m.total_points() });
        }
        let mut delta = m.zeros();
        delta.values[idx] = 1.0 / m.volume_element();
        self.solve(&delta)
    }

    /// `G_h(y, ·)` for an arbitrary source point, accurate away from `y`:
    /// an explicit singular part `ψ(d)Y(d)` plus a spectrally solved remainder.
    /// `Y = e^{-√c d}/(4πd)` in dimension 3, `d^{2-n}/((n-2)ω_{n-1})` otherwise.
    /// Within half a grid cell of `y` the singular part is capped.
    pub fn point_source(&self, y: &[f64]) -> Result<Field> {
        let m = &self.manifold;
        let n = m.dimension();
        if n < 3 {
            return Err(Error::InvalidDimension(n));
        }
        if y.len() != n {
            return Err(Error::ShapeMismatch { expected: n, found: y.len() });
        }
        let mean_h = m.integral(&self.potential) / m.volume();
        let c = if n == 3 { mean_h.max(0.0) } else { 0.0 };
        let sc = c.sqrt();
        let omega = sphere_area(n - 1);
        let nf = n as f64;
        let (a, b) = (m.injectivity_radius() * 0.4, m.injectivity_radius() * 0.9);
        let cap = 0.5 * m.spacing();
        let y_of = |d: f64| -> (f64, f64) {
            if n == 3 {
                let e = (-sc * d).exp();
                (e / (4.0 * PI * d), -e * (1.0 + sc * d) / (4.0 * PI * d * d))
            } else {
                let k = 1.0 / ((nf - 2.0) * omega);
                (k * d.powf(2.0 - nf), -(nf - 2.0) * k * d.powf(1.0 - nf))
            }
        };
        let torus = *m.torus();
        let singular = m.field_from_fn(|x| {
            let d = torus.distance(y, x);
            let (psi, _, _) = smooth_step(d, a, b);
            psi * y_of(d.max(cap)).0
        });
        // (Δ+h)(ψY) = δ + (h - c)ψY + YΔψ - 2ψ'Y'
        let idx_h = &self.potential;
        let remainder_src = m.field_from_fn(|x| {
            let d = torus.distance(y, x);
            let (_, dpsi, d2psi) = smooth_step(d, a, b);
            let (yy, dy) = y_of(d.max(cap));
            let lap_psi = if d > 0.0 { -(d2psi + (nf - 1.0) * dpsi / d) } else { 0.0 };
            yy * lap_psi - 2.0 * dpsi * dy
        });
        let potential_part = singular.zip_map(idx_h, |s, h| (h - c) * s);
        let mut rhs = remainder_src.add(&potential_part).scaled(-1.0);
        for z in &self.kernel_basis {
            let zy = m.interpolate(z, y)?;
            rhs.axpy(-zy, z);
        }
        let w = self.solve(&rhs)?;
        Ok(self.project(&singular.add(&w)))
    }

    /// Empirical constants `max |G|d^{n-2}` and `max |∇G|d^{n-1}` of a grid
    /// column over points at least `core_cells` spacings from the source.
    pub fn green_bound(&self, idx: usize, core_cells: f64) -> Result<GreenBoundReport> {
        let m = &self.manifold;
        let col = self.column(idx)?;
        let grad = m.gradient_norm(&col)?;
        let y = m.grid_point(idx);
        let nf = m.dimension() as f64;
        let floor = core_cells * m.spacing();
        let torus = *m.torus();
        let dist = m.field_from_fn(|x| torus.distance(&y, x));
        let (c0, c1) = dist
            .values
            .par_iter()
            .zip(col.values.par_iter().zip(grad.values.par_iter()))
            .filter(|(d, _)| **d >= floor)
            .map(|(&d, (&g, &dg))| (g.abs() * d.powf(nf - 2.0), dg * d.powf(nf - 1.0)))
            .reduce(|| (0.0, 0.0), |(a, b), (c, e)| (a.max(c), b.max(e)));
        Ok(GreenBoundReport { value_constant: c0, gradient_constant: c1, core_radius: floor })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenBoundReport {
    pub value_constant: f64,
    pub gradient_constant: f64,
    pub core_radius: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, pts: usize) -> DiscreteManifold {
        DiscreteManifold::new(n, pts, 2.0 * PI).unwrap()
    }

    #[test]
    fn construction_rules() {
        assert!(DiscreteManifold::new(3, 15, 1.0).is_err());
        assert!(DiscreteManifold::new(3, 8, 1.0).is_err());
        let m = grid(3, 16);
        assert_eq!(m.injectivity_radius(), PI);
        assert_relative_eq!(m.volume_element(), (2.0 * PI / 16.0).powi(3), epsilon = 1e-15);
    }

    #[test]
    fn charts() {
        let t = Torus::new(3, 2.0 * PI).unwrap();
        let d = t.distance(&[0.0, 0.0, 0.0], &[2.0 * PI - 0.1, 0.0, 0.0]);
        assert_relative_eq!(d, 0.1, epsilon = 1e-12);
        let x = [1.0, 2.0, 6.0];
        assert_eq!(t.exp_chart(&x, &[0.0; 3]), x.to_vec());
        let v = [0.6, -0.0, 0.8];
        let back = t.log_chart(&x, &t.exp_chart(&x, &v)).unwrap();
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(t.log_chart(&x, &t.exp_chart(&x, &[2.0, 2.0, 2.0])), Err(Error::CutLocus { .. })));
    }

    #[test]
    fn laplacian_eigenfunctions() {
        let m = grid(3, 16);
        let u = m.field_from_fn(|x| x[0].cos());
        let lu = m.laplacian(&u).unwrap();
        for (a, b) in lu.values().iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let one = m.constant(1.0);
        assert!(m.laplacian(&one).unwrap().max_abs() < 1e-12);
        let w = m.field_from_fn(|x| (2.0 * x[0]).cos() * x[1].cos());
        let lw = m.laplacian(&w).unwrap();
        for (a, b) in lw.values().iter().zip(w.values()) {
            assert!((a - 5.0 * b).abs() < 1e-11);
        }
        assert!(m.laplacian(&grid(3, 18).zeros()).is_err());
    }

    #[test]
    fn laplacian_anisotropic_axis_order() {
        let m = grid(3, 16);
        let u = m.field_from_fn(|x| (x[0] + 2.0 * x[1] + 3.0 * x[2]).sin());
        let lu = m.laplacian(&u).unwrap();
        for (a, b) in lu.values().iter().zip(u.values()) {
            assert!((a - 14.0 * b).abs() < 1e-10);
        }
        let g = m.gradient(&u).unwrap();
        let c = m.field_from_fn(|x| (x[0] + 2.0 * x[1] + 3.0 * x[2]).cos());
        for (axis, k) in [1.0, 2.0, 3.0].iter().enumerate() {
            for (a, b) in g[axis].values().iter().zip(c.values()) {
                assert!((a - k * b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn h1_products() {
        let m = grid(3, 16);
        let vol = (2.0 * PI).powi(3);
        let u = m.field_from_fn(|x| x[0].cos());
        assert_relative_eq!(m.h1_inner(&u, &u).unwrap(), vol, max_relative = 1e-12);
        let v = m.field_from_fn(|x| (2.0 * x[1]).sin());
        assert!(m.h1_inner(&u, &v).unwrap().abs() < 1e-10);
        assert_relative_eq!(m.h1_inner(&m.constant(1.0), &m.constant(1.0)).unwrap(), vol, max_relative = 1e-12);
    }

    #[test]
    fn constant_green_operator() {
        let m = grid(3, 16);
        let g = build_green_operator(&m, &m.constant(1.0), GreenOptions::default()).unwrap();
        assert_eq!(g.kernel_dimension(), 0);
        let u = m.field_from_fn(|x| x[0].cos());
        let s = g.solve(&u).unwrap();
        for (a, b) in s.values().iter().zip(u.values()) {
            assert!((a - b / 2.0).abs() < 1e-12);
        }
        let col = g.column(5).unwrap();
        assert_relative_eq!(m.integral(&col), 1.0, epsilon = 1e-6);
        let neg = build_green_operator(&m, &m.constant(-1.0), GreenOptions::default()).unwrap();
        assert_eq!(neg.kernel_dimension(), 6);
        for z in neg.kernel_basis() {
            assert!(neg.apply(z).unwrap().max_abs() < 1e-10);
            assert_relative_eq!(m.l2_norm(z), 1.0, epsilon = 1e-12);
        }
        let zero = build_green_operator(&m, &m.zeros(), GreenOptions::default()).unwrap();
        assert_eq!(zero.kernel_dimension(), 1);
    }

    #[test]
    fn variable_green_operator() {
        let m = grid(3, 16);
        let h = m.field_from_fn(|x| 1.0 + 0.5 * x[0].cos() * x[2].sin());
        let g = build_green_operator(&m, &h, GreenOptions::default()).unwrap();
        assert_eq!(g.kernel_dimension(), 0);
        let f = m.field_from_fn(|x| (x[1]).sin() + 0.3 * (2.0 * x[0]).cos());
        let u = g.solve(&f).unwrap();
        let back = g.apply(&u).unwrap();
        assert!(back.sub(&f).max_abs() < 1e-8 * f.max_abs());
    }

    #[test]
    fn variable_green_operator_with_kernel() {
        // Z = 2 + cos x₁ solves (Δ + h)Z = 0 for h = -cos x₁/(2 + cos x₁)
        let m = grid(3, 16);
        let h = m.field_from_fn(|x| -x[0].cos() / (2.0 + x[0].cos()));
        let g = build_green_operator(&m, &h, GreenOptions::default()).unwrap();
        assert_eq!(g.kernel_dimension(), 1, "{:?}", &g.ritz_values()[g.ritz_values().len() - 5..]);
        let z = m.field_from_fn(|x| 2.0 + x[0].cos());
        let zn = m.l2_norm(&z);
        let overlap = m.l2_inner(&z, &g.kernel_basis()[0]).abs() / zn;
        assert!((overlap - 1.0).abs() < 1e-8, "overlap {overlap}");
        let f = m.field_from_fn(|x| x[1].cos() * x[0].sin());
        let u = g.solve(&f).unwrap();
        let back = g.apply(&u).unwrap();
        assert!(back.sub(&g.project(&f)).max_abs() < 1e-7);
        assert!(m.l2_inner(&u, &g.kernel_basis()[0]).abs() < 1e-10);
    }

    #[test]
    fn green_symmetry_and_bound() {
        let m = grid(3, 16);
        let g = build_green_operator(&m, &m.constant(2.0), GreenOptions::default()).unwrap();
        let a = g.column(17).unwrap();
        let b = g.column(1234).unwrap();
        assert_relative_eq!(a.values()[1234], b.values()[17], max_relative = 1e-10);
        let rep = g.green_bound(0, 3.0).unwrap();
        assert!(rep.value_constant > 0.0 && rep.value_constant.is_finite());
    }

    #[test]
    fn point_source_matches_image_sum() {
        // for h ≡ c > 0 in dimension 3, G = Σ_images e^{-√c r}/(4πr)
        let m = DiscreteManifold::new(3, 64, 4.0).unwrap();
        let g = build_green_operator(&m, &m.constant(1.0), GreenOptions::default()).unwrap();
        let y = [0.3, 0.7, 1.1];
        let col = g.point_source(&y).unwrap();
        let exact = |x: &[f64]| {
            let mut s = 0.0;
            for i in -3i32..=3 {
                for j in -3i32..=3 {
                    for k in -3i32..=3 {
                        let d = ((x[0] - y[0] + 4.0 * i as f64).powi(2)
                            + (x[1] - y[1] + 4.0 * j as f64).powi(2)
                            + (x[2] - y[2] + 4.0 * k as f64).powi(2))
                        .sqrt();
                        s += (-d).exp() / (4.0 * PI * d);
                    }
                }
            }
            s
        };
        for idx in [0usize, 400, 9000, 20000, 32767, 100_000, 200_000] {
            let x = m.grid_point(idx);
            if m.distance(&x, &y) > 0.5 {
                assert!((col.values()[idx] - exact(&x)).abs() < 1e-5, "idx {idx}: {} vs {}", col.values()[idx], exact(&x));
            }
        }
    }

    #[test]
    fn record_round_trip() {
        let m = grid(3, 16);
        let u = m.field_from_fn(|x| x[0].sin() * x[2]);
        let r = m.record(&u);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"N\":16"));
        let back = m.from_record(serde_json::from_str(&json).unwrap()).unwrap();
        assert!(back.sub(&u).max_abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_exact_on_band_limited_fields() {
        let m = grid(3, 16);
        let u = m.field_from_fn(|x| (x[0] + 2.0 * x[1]).cos() + x[2].sin());
        let x: [f64; 3] = [0.37, 1.9, 4.2];
        let exact = (x[0] + 2.0 * x[1]).cos() + x[2].sin();
        assert!((m.interpolate(&u, &x).unwrap() - exact).abs() < 1e-12);
    }
}
