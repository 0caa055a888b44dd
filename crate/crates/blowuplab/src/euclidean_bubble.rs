//! Euclidean solutions of `Δ_ξ V = |V|^{2*-2} V` (with `Δ = -Σ ∂²`): radial
//! tabulation, Kelvin transform, the asymptotic constant `λ`, the linearized
//! kernel and the stereographic lift to the sphere.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::quadrature::{self, Estimate};
use crate::{Error, Result};

const TABLE_MIN_RADIUS: f64 = 1e-3;
const TABLE_MAX_RADIUS: f64 = 1e4;
const NODES_PER_DECADE: usize = 300;
const QUAD_TOL: f64 = 1e-12;

/// Area of the unit sphere `S^k ⊂ ℝ^{k+1}`.
pub fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionConstants {
    pub n: usize,
    pub two_star: f64,
    /// `ω_{n-1}`, the area of the unit sphere of `ℝⁿ`.
    pub sphere_area: f64,
    /// `K_n^{-n} = ∫|∇B_0|²`.
    pub sobolev_energy: f64,
    /// Sign-changing solutions have energy strictly above this value.
    pub node_energy_floor: f64,
}

impl DimensionConstants {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidDimension(n));
        }
        let nf = n as f64;
        // K_n^{-n} = (n(n-2)/4)^{n/2} ω_n
        let sobolev_energy = (nf * (nf - 2.0) / 4.0).powf(nf / 2.0) * sphere_area(n);
        Ok(Self {
            n,
            two_star: 2.0 * nf / (nf - 2.0),
            sphere_area: sphere_area(n - 1),
            sobolev_energy,
            node_energy_floor: 2.0 * sobolev_energy,
        })
    }
}

/// Positive standard bubble `μ^{(n-2)/2} / (μ² + d²/(n(n-2)))^{(n-2)/2}` at
/// distance `d` from its center.
pub fn positive_bubble(n: usize, mu: f64, d: f64) -> f64 {
    let nf = n as f64;
    let q = (nf - 2.0) / 2.0;
    mu.powf(q) / (mu * mu + d * d / (nf * (nf - 2.0))).powf(q)
}

/// `|s|^{2*-2} s` for exponent `p = 2*-1`.
pub(crate) fn critical_power(s: f64, n: usize) -> f64 {
    let p = (n as f64 + 2.0) / (n as f64 - 2.0);
    s.abs().powf(p - 1.0) * s
}

/// Power-law model `coefficient · r^{-exponent}` used beyond the table.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FarField {
    coefficient: f64,
    exponent: f64,
}

/// Radial function sampled at `radii[0] = 0` and log-spaced radii beyond.
/// Interior: natural cubic spline in `t = ln r`. Below `radii[1]`: even
/// quadratic. Beyond the last radius: power-law far field.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialTable {
    radii: Vec<f64>,
    values: Vec<f64>,
    t: Vec<f64>,
    second: Vec<f64>,
    far: FarField,
}

impl RadialTable {
    fn new(radii: Vec<f64>, values: Vec<f64>, far: Option<FarField>) -> Result<Self> {
        if radii.len() != values.len() {
            return Err(Error::ShapeMismatch { expected: radii.len(), found: values.len() });
        }
        if radii.len() < 4 || radii[0] != 0.0 {
            return Err(Error::Domain("radial table needs radius 0 followed by at least 3 radii".into()));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("radii must increase and values be finite".into()));
        }
        let t: Vec<f64> = radii[1..].iter().map(|r| r.ln()).collect();
        let second = natural_spline(&t, &values[1..]);
        let far = far.unwrap_or_else(|| fit_far(&radii, &values));
        Ok(Self { radii, values, t, second, far })
    }

    fn from_fn<F: Fn(f64) -> f64>(radii: &[f64], f: F, far: Option<FarField>) -> Self {
        let values = radii.iter().map(|&r| f(r)).collect();
        Self::new(radii.to_vec(), values, far).expect("generated table is well formed")
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn r_max(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    fn segment(&self, t: f64) -> usize {
        let k = self.t.partition_point(|&x| x <= t);
        k.clamp(1, self.t.len() - 1) - 1
    }

    /// Returns `(f, f_t, f_tt)` of the spline at `t = ln r`.
    fn spline(&self, t: f64) -> (f64, f64, f64) {
        let k = self.segment(t);
        let y = &self.values[1..];
        let h = self.t[k + 1] - self.t[k];
        let a = (self.t[k + 1] - t) / h;
        let b = 1.0 - a;
        let (m0, m1) = (self.second[k], self.second[k + 1]);
        let f = a * y[k] + b * y[k + 1] + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let ft = (y[k + 1] - y[k]) / h + (-(3.0 * a * a - 1.0) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        let ftt = a * m0 + b * m1;
        (f, ft, ftt)
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r1 = self.radii[1];
        if r <= 0.0 {
            self.values[0]
        } else if r < r1 {
            self.values[0] + (self.values[1] - self.values[0]) * (r / r1).powi(2)
        } else if r > self.r_max() {
            self.far.coefficient * r.powf(-self.far.exponent)
        } else {
            self.spline(r.ln()).0
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let r1 = self.radii[1];
        if r <= 0.0 {
            0.0
        } else if r < r1 {
            2.0 * (self.values[1] - self.values[0]) * r / (r1 * r1)
        } else if r > self.r_max() {
            -self.far.exponent * self.far.coefficient * r.powf(-self.far.exponent - 1.0)
        } else {
            self.spline(r.ln()).1 / r
        }
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        let r1 = self.radii[1];
        if r < r1 {
            2.0 * (self.values[1] - self.values[0]) / (r1 * r1)
        } else if r > self.r_max() {
            let q = self.far.exponent;
            q * (q + 1.0) * self.far.coefficient * r.powf(-q - 2.0)
        } else {
            let (_, ft, ftt) = self.spline(r.ln());
            (ftt - ft) / (r * r)
        }
    }

    /// Relative mismatch between the last tabulated value and the far model.
    fn far_mismatch(&self) -> f64 {
        let r = self.r_max();
        let v = *self.values.last().unwrap();
        if v == 0.0 {
            return 0.0;
        }
        ((self.far.coefficient * r.powf(-self.far.exponent) - v) / v).abs()
    }
}

fn natural_spline(t: &[f64], y: &[f64]) -> Vec<f64> {
    let m = t.len();
    let mut second = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    let mut upper = vec![0.0; m];
    for i in 1..m - 1 {
        let h0 = t[i] - t[i - 1];
        let h1 = t[i + 1] - t[i];
        let lower = h0 / 6.0;
        diag[i] = (h0 + h1) / 3.0;
        upper[i] = h1 / 6.0;
        rhs[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        if i > 1 {
            let w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
    }
    for i in (1..m - 1).rev() {
        let next = if i + 1 < m - 1 { upper[i] * second[i + 1] } else { 0.0 };
        second[i] = (rhs[i] - next) / diag[i];
    }
    second
}

fn fit_far(radii: &[f64], values: &[f64]) -> FarField {
    let m = radii.len();
    let (r0, r1) = (radii[m - 2], radii[m - 1]);
    let (v0, v1) = (values[m - 2], values[m - 1]);
    if v1 == 0.0 || v0 == 0.0 || v0.signum() != v1.signum() {
        return FarField { coefficient: 0.0, exponent: 1.0 };
    }
    let exponent = -(v1 / v0).ln() / (r1 / r0).ln();
    FarField { coefficient: v1 * r1.powf(exponent), exponent }
}

fn default_radii() -> Vec<f64> {
    let decades = (TABLE_MAX_RADIUS / TABLE_MIN_RADIUS).log10().round() as usize;
    let count = decades * NODES_PER_DECADE;
    let t0 = TABLE_MIN_RADIUS.ln();
    let dt = (TABLE_MAX_RADIUS.ln() - t0) / count as f64;
    std::iter::once(0.0).chain((0..=count).map(|k| (t0 + dt * k as f64).exp())).collect()
}

/// Angular structure of a kernel element: `Z(x) = g(|x|)` or `g(|x|)·x_a/|x|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    Radial,
    Axial(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelElement {
    pub shape: KernelShape,
    pub radial: RadialTable,
    pub decay_constant: f64,
}

impl KernelElement {
    fn new(n: usize, shape: KernelShape, radial: RadialTable) -> Self {
        let decay_constant = table_decay_constant(n, &radial);
        Self { shape, radial, decay_constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        match self.shape {
            KernelShape::Radial => self.radial.eval(r),
            KernelShape::Axial(a) => {
                if r == 0.0 {
                    0.0
                } else {
                    self.radial.eval(r) * x[a] / r
                }
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = norm(x);
        if r == 0.0 {
            let mut g = vec![0.0; x.len()];
            if let KernelShape::Axial(a) = self.shape {
                // g(r)/r → g'(0) for odd profiles vanishing at the origin
                g[a] = self.radial.derivative(self.radial.radii[1]);
            }
            return g;
        }
        let g = self.radial.eval(r);
        let dg = self.radial.derivative(r);
        match self.shape {
            KernelShape::Radial => x.iter().map(|xi| dg * xi / r).collect(),
            KernelShape::Axial(a) => x
                .iter()
                .enumerate()
                .map(|(i, xi)| {
                    let delta = if i == a { 1.0 } else { 0.0 };
                    dg * (x[a] / r) * (xi / r) + g * (delta / r - x[a] * xi / (r * r * r))
                })
                .collect(),
        }
    }

    fn angular_momentum(&self) -> f64 {
        match self.shape {
            KernelShape::Radial => 0.0,
            KernelShape::Axial(_) => 1.0,
        }
    }
}

/// A radial solution (or test shape) of the Euclidean critical equation.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    n: usize,
    table: RadialTable,
    lambda_inf: f64,
    kernel: Vec<KernelElement>,
    decay_constant: f64,
    is_exact_solution: bool,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn table_decay_constant(n: usize, table: &RadialTable) -> f64 {
    let q = n as f64 - 2.0;
    let node_max = table
        .radii
        .iter()
        .map(|&r| (table.eval(r).abs() + (1.0 + r) * table.derivative(r).abs()) * (1.0 + r).powf(q))
        .fold(0.0, f64::max);
    // far-field supremum of (|c| r^{-e} + (1+r) e |c| r^{-e-1}) (1+r)^{n-2}
    let far = if table.far.coefficient == 0.0 || table.far.exponent > q + 1e-9 {
        0.0
    } else {
        table.far.coefficient.abs() * (1.0 + table.far.exponent)
    };
    node_max.max(far) * (1.0 + 1e-9)
}

impl Profile {
    /// The positive standard bubble `B_0(x) = (1 + |x|²/(n(n-2)))^{-(n-2)/2}`
    /// with its `n+1` kernel generators, D^{1,2}-normalized.
    pub fn standard_bubble(n: usize) -> Result<Self> {
        DimensionConstants::new(n)?;
        let nf = n as f64;
        let m = nf * (nf - 2.0);
        let q = nf - 2.0;
        let lambda = m.powf(q / 2.0);
        let b0 = move |r: f64| (1.0 + r * r / m).powf(-q / 2.0);
        let db0 = move |r: f64| -(q / m) * r * (1.0 + r * r / m).powf(-nf / 2.0);
        let d2b0 = move |r: f64| {
            let s = 1.0 + r * r / m;
            -(q / m) * (s.powf(-nf / 2.0) - (nf / m) * r * r * s.powf(-nf / 2.0 - 1.0))
        };
        let scaling = move |r: f64| q / 2.0 * b0(r) + r * db0(r);
        let d_scaling = move |r: f64| nf / 2.0 * db0(r) + r * d2b0(r);
        let omega = sphere_area(n - 1);
        let radial_norm = quadrature::integrate_radial(
            |r| d_scaling(r).powi(2) * r.powf(nf - 1.0),
            1.0,
            f64::INFINITY.min(1e12),
            QUAD_TOL,
        )
        .value
            * omega;
        let axial_norm = quadrature::integrate_radial(
            |r| {
                let r_pow = r.powf(nf - 1.0);
                let tangential = if r > 0.0 { (nf - 1.0) * (db0(r) / r).powi(2) } else { 0.0 };
                (d2b0(r).powi(2) + tangential) * r_pow / nf
            },
            1.0,
            1e12,
            QUAD_TOL,
        )
        .value
            * omega;
        let radii = default_radii();
        let table = RadialTable::from_fn(&radii, b0, Some(FarField { coefficient: lambda, exponent: q }));
        let cr = radial_norm.sqrt();
        let ca = axial_norm.sqrt();
        let mut kernel = vec![KernelElement::new(
            n,
            KernelShape::Radial,
            RadialTable::from_fn(&radii, |r| scaling(r) / cr, None),
        )];
        for a in 0..n {
            kernel.push(KernelElement::new(
                n,
                KernelShape::Axial(a),
                RadialTable::from_fn(&radii, |r| db0(r) / ca, None),
            ));
        }
        Ok(Self::assemble(n, table, lambda, kernel, true))
    }

    /// The zero profile (a trivial solution).
    pub fn zero(n: usize) -> Result<Self> {
        DimensionConstants::new(n)?;
        let radii = default_radii();
        let table = RadialTable::from_fn(&radii, |_| 0.0, Some(FarField { coefficient: 0.0, exponent: n as f64 - 2.0 }));
        Ok(Self::assemble(n, table, 0.0, Vec::new(), true))
    }

    /// Builds a profile from radial samples (radius 0 first). `lambda_inf`
    /// fixes the far field `λ r^{2-n}` beyond the last radius.
    pub fn from_samples(
        n: usize,
        radii: Vec<f64>,
        values: Vec<f64>,
        lambda_inf: f64,
        kernel: Vec<(KernelShape, Vec<f64>)>,
        is_exact_solution: bool,
    ) -> Result<Self> {
        DimensionConstants::new(n)?;
        let far = FarField { coefficient: lambda_inf, exponent: n as f64 - 2.0 };
        let table = RadialTable::new(radii.clone(), values, Some(far))?;
        let mut elements = Vec::with_capacity(kernel.len());
        for (shape, vals) in kernel {
            if let KernelShape::Axial(a) = shape {
                if a >= n {
                    return Err(Error::IndexOutOfRange { index: a, len: n });
                }
            }
            elements.push(KernelElement::new(n, shape, RadialTable::new(radii.clone(), vals, None)?));
        }
        Ok(Self::assemble(n, table, lambda_inf, elements, is_exact_solution))
    }

    fn assemble(n: usize, table: RadialTable, lambda_inf: f64, kernel: Vec<KernelElement>, exact: bool) -> Self {
        let decay_constant = table_decay_constant(n, &table);
        Self { n, table, lambda_inf, kernel, decay_constant, is_exact_solution: exact }
    }

    /// `-V`, again a solution since the nonlinearity is odd.
    pub fn negated(&self) -> Self {
        let values = self.table.values.iter().map(|v| -v).collect();
        let far = FarField { coefficient: -self.table.far.coefficient, exponent: self.table.far.exponent };
        let table = RadialTable::new(self.table.radii.clone(), values, Some(far)).expect("negation keeps shape");
        Self { table, lambda_inf: -self.lambda_inf, ..self.clone() }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn lambda_inf(&self) -> f64 {
        self.lambda_inf
    }

    pub fn kernel(&self) -> &[KernelElement] {
        &self.kernel
    }

    pub fn kernel_dimension(&self) -> usize {
        self.kernel.len()
    }

    pub fn decay_constant(&self) -> f64 {
        self.decay_constant
    }

    pub fn with_decay_constant(mut self, c: f64) -> Self {
        self.decay_constant = c;
        self
    }

    pub fn is_exact_solution(&self) -> bool {
        self.is_exact_solution
    }

    pub fn table(&self) -> &RadialTable {
        &self.table
    }

    pub fn eval_radial(&self, r: f64) -> f64 {
        self.table.eval(r)
    }

    pub fn radial_derivative(&self, r: f64) -> f64 {
        self.table.derivative(r)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.table.eval(norm(x))
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = norm(x);
        if r == 0.0 {
            return vec![0.0; x.len()];
        }
        let d = self.table.derivative(r);
        x.iter().map(|xi| d * xi / r).collect()
    }

    /// `∫|∇V|²` by radial quadrature plus the exact far-field tail; the error
    /// includes the far-model mismatch at the table end.
    pub fn dirichlet_energy(&self) -> Estimate {
        let nf = self.n as f64;
        let omega = sphere_area(self.n - 1);
        let r_max = self.table.r_max();
        let body = quadrature::integrate_radial(
            |r| self.table.derivative(r).powi(2) * r.powf(nf - 1.0),
            1.0,
            r_max,
            QUAD_TOL,
        );
        let (c, q) = (self.table.far.coefficient, self.table.far.exponent);
        let tail = if c == 0.0 { 0.0 } else { q * q * c * c * r_max.powf(nf - 2.0 - 2.0 * q) / (2.0 * q + 2.0 - nf) };
        Estimate {
            value: omega * (body.value + tail),
            error: omega * (body.error + 2.0 * tail * self.table.far_mismatch()),
        }
    }

    /// D^{1,2} inner products of the kernel elements.
    pub fn kernel_gram(&self) -> Vec<Vec<f64>> {
        let k = self.kernel.len();
        let mut g = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in i..k {
                let v = self.kernel_inner(&self.kernel[i], &self.kernel[j]);
                g[i][j] = v;
                g[j][i] = v;
            }
        }
        g
    }

    fn kernel_inner(&self, a: &KernelElement, b: &KernelElement) -> f64 {
        if a.shape != b.shape {
            return 0.0;
        }
        let nf = self.n as f64;
        let omega = sphere_area(self.n - 1);
        let ell = a.angular_momentum();
        let tangential = ell * (ell + nf - 2.0);
        // angular average of (x_a/r)² is 1/n
        let weight = if ell == 0.0 { 1.0 } else { 1.0 / nf };
        let r_max = a.radial.r_max();
        let body = quadrature::integrate_radial(
            |r| {
                let mut v = a.radial.derivative(r) * b.radial.derivative(r);
                if r > 0.0 {
                    v += tangential * a.radial.eval(r) * b.radial.eval(r) / (r * r);
                }
                v * r.powf(nf - 1.0)
            },
            1.0,
            r_max,
            QUAD_TOL,
        );
        let (fa, fb) = (a.radial.far, b.radial.far);
        let p = fa.exponent + fb.exponent + 2.0 - (nf - 1.0);
        let tail = if fa.coefficient == 0.0 || fb.coefficient == 0.0 || p <= 1.0 {
            0.0
        } else {
            (fa.exponent * fb.exponent + tangential) * fa.coefficient * fb.coefficient * r_max.powf(1.0 - p) / (p - 1.0)
        };
        omega * weight * (body.value + tail)
    }

    /// D^{1,2} inner products `⟨V, Z_j⟩`; they vanish since `V ⟂ K_V`.
    pub fn profile_kernel_inner(&self) -> Vec<f64> {
        let nf = self.n as f64;
        let omega = sphere_area(self.n - 1);
        let r_max = self.table.r_max();
        self.kernel
            .iter()
            .map(|z| match z.shape {
                KernelShape::Axial(_) => 0.0,
                KernelShape::Radial => {
                    let body = quadrature::integrate_radial(
                        |r| self.table.derivative(r) * z.radial.derivative(r) * r.powf(nf - 1.0),
                        1.0,
                        r_max,
                        QUAD_TOL,
                    );
                    let (fa, fb) = (self.table.far, z.radial.far);
                    let p = fa.exponent + fb.exponent + 2.0 - (nf - 1.0);
                    let tail = if fa.coefficient == 0.0 || fb.coefficient == 0.0 || p <= 1.0 {
                        0.0
                    } else {
                        fa.exponent * fb.exponent * fa.coefficient * fb.coefficient * r_max.powf(1.0 - p) / (p - 1.0)
                    };
                    omega * (body.value + tail)
                }
            })
            .collect()
    }

    /// Max over `radii` of the linearized-equation residual of kernel element
    /// `j`, relative to the size of its potential term.
    pub fn kernel_residual(&self, j: usize, radii: &[f64]) -> Result<f64> {
        let z = self.kernel.get(j).ok_or(Error::IndexOutOfRange { index: j, len: self.kernel.len() })?;
        let nf = self.n as f64;
        let p = (nf + 2.0) / (nf - 2.0);
        let ell = z.angular_momentum();
        let mut worst: f64 = 0.0;
        for &r in radii.iter().filter(|&&r| r > 0.0) {
            let g = z.radial.eval(r);
            let lap = -z.radial.second_derivative(r) - (nf - 1.0) / r * z.radial.derivative(r)
                + ell * (ell + nf - 2.0) * g / (r * r);
            let potential = p * self.table.eval(r).abs().powf(p - 1.0) * g;
            let scale = potential
                .abs()
                .max(z.radial.second_derivative(r).abs())
                .max((nf - 1.0) / r * z.radial.derivative(r).abs())
                .max(1e-300);
            worst = worst.max((lap - potential).abs() / scale);
        }
        Ok(worst)
    }
}

/// Kelvin transform `V*(x) = |x|^{2-n} V(x/|x|²)`, tabulated on the same radii;
/// `V*(0) = λ(V)`. Kernel elements are transformed alike.
pub fn kelvin_transform(v: &Profile) -> Result<Profile> {
    let n = v.n;
    let q = n as f64 - 2.0;
    let radii = v.table.radii.clone();
    let transform = |t: &RadialTable, at_zero: f64| -> Vec<f64> {
        radii
            .iter()
            .map(|&r| if r == 0.0 { at_zero } else { r.powf(-q) * t.eval(1.0 / r) })
            .collect()
    };
    let values = transform(&v.table, v.lambda_inf);
    let far = FarField { coefficient: v.table.values[0], exponent: q };
    let table = RadialTable::new(radii.clone(), values, Some(far))?;
    let mut kernel = Vec::with_capacity(v.kernel.len());
    for z in &v.kernel {
        let zero = match z.shape {
            KernelShape::Radial if z.radial.far.exponent <= q + 1e-6 => z.radial.far.coefficient,
            _ => 0.0,
        };
        let vals = transform(&z.radial, zero);
        let far = FarField { coefficient: z.radial.values[0], exponent: q };
        let far = if z.shape == KernelShape::Radial { Some(far) } else { None };
        kernel.push(KernelElement::new(n, z.shape, RadialTable::new(radii.clone(), vals, far)?));
    }
    let lambda = v.table.values[0];
    Ok(Profile::assemble(n, table, lambda, kernel, v.is_exact_solution))
}

/// Evaluates `|x|^{2-n} V(x/|x|²)` directly; undefined at the origin.
pub fn kelvin_value(v: &Profile, x: &[f64]) -> Result<f64> {
    let r = norm(x);
    if r == 0.0 {
        return Err(Error::Domain("Kelvin transform is not defined at the origin before extension".into()));
    }
    Ok(r.powf(2.0 - v.n as f64) * v.table.eval(1.0 / r))
}

/// `(1/((n-2)ω_{n-1})) ∫ |V|^{2*-2} V` with a decay-based tail bound beyond
/// `quad_radius`; fails if the combined error exceeds `tolerance`.
pub fn lambda_from_integral(v: &Profile, quad_radius: f64, tolerance: f64) -> Result<Estimate> {
    let n = v.n;
    let nf = n as f64;
    let body = quadrature::integrate_radial(
        |r| critical_power(v.table.eval(r), n) * r.powf(nf - 1.0),
        1.0,
        quad_radius,
        QUAD_TOL,
    );
    // ∫_{r>R} C^{2*-1} r^{(2-n)(2*-1)} r^{n-1} dr = C^{2*-1} / (2R²)
    let p = (nf + 2.0) / (nf - 2.0);
    let tail = v.decay_constant.powf(p) / (2.0 * quad_radius * quad_radius);
    let est = Estimate { value: body.value / (nf - 2.0), error: (body.error + tail) / (nf - 2.0) };
    if est.error > tolerance {
        return Err(Error::Accuracy { achieved: est.error, requested: tolerance });
    }
    Ok(est)
}

/// Dirichlet energy of `Σ w_k B(·-c_k)` by the tensor midpoint rule on
/// `[-half_width, half_width]ⁿ`, with gradients taken from `profile`.
pub fn superposition_energy(
    profile: &Profile,
    parts: &[(f64, Vec<f64>)],
    half_width: f64,
    cells: usize,
) -> Result<f64> {
    let n = profile.n;
    if parts.iter().any(|(_, c)| c.len() != n) {
        return Err(Error::ShapeMismatch { expected: n, found: parts.iter().map(|p| p.1.len()).find(|&l| l != n).unwrap() });
    }
    let h = 2.0 * half_width / cells as f64;
    let total = cells.pow(n as u32);
    let mut sum = 0.0;
    let mut x = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for idx in 0..total {
        let mut rem = idx;
        for xi in x.iter_mut() {
            *xi = -half_width + h * ((rem % cells) as f64 + 0.5);
            rem /= cells;
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (w, c) in parts {
            let y: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
            for (g, d) in grad.iter_mut().zip(profile.gradient(&y)) {
                *g += w * d;
            }
        }
        sum += grad.iter().map(|g| g * g).sum::<f64>();
    }
    Ok(sum * h.powi(n as i32))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub decay_constant: f64,
    /// Radii at which the ratio exceeds the decay constant.
    pub violations: Vec<f64>,
}

impl DecayReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Ratios `(|V| + (1+r)|∇V|)(1+r)^{n-2}` at the given radii.
pub fn check_decay(v: &Profile, radii: &[f64]) -> DecayReport {
    let q = v.n as f64 - 2.0;
    let ratios: Vec<f64> = radii
        .iter()
        .map(|&r| (v.table.eval(r).abs() + (1.0 + r) * v.table.derivative(r).abs()) * (1.0 + r).powf(q))
        .collect();
    let violations = radii
        .iter()
        .zip(&ratios)
        .filter(|(_, &q)| q > v.decay_constant)
        .map(|(&r, _)| r)
        .collect();
    DecayReport {
        radii: radii.to_vec(),
        max_ratio: ratios.iter().cloned().fold(0.0, f64::max),
        ratios,
        decay_constant: v.decay_constant,
        violations,
    }
}

/// A Euclidean function that can be lifted to `Sⁿ` by stereographic projection.
pub trait Liftable {
    fn dimension(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Limit of `φ/U` at infinity (the north pole), if it exists.
    fn north_limit(&self) -> Option<f64>;
}

fn power_north_limit(n: usize, far: FarField, shape: KernelShape) -> Option<f64> {
    let q = n as f64 - 2.0;
    if far.coefficient == 0.0 {
        return Some(0.0);
    }
    let decay = match shape {
        KernelShape::Radial => far.exponent,
        KernelShape::Axial(_) => far.exponent,
    };
    if decay > q + 1e-6 {
        Some(0.0)
    } else if (decay - q).abs() <= 1e-6 {
        match shape {
            KernelShape::Radial => Some(far.coefficient / 2f64.powf(q / 2.0)),
            KernelShape::Axial(_) => None,
        }
    } else {
        None
    }
}

impl Liftable for Profile {
    fn dimension(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn north_limit(&self) -> Option<f64> {
        power_north_limit(self.n, self.table.far, KernelShape::Radial)
    }
}

/// A kernel element viewed as a function on `ℝⁿ`.
pub struct KernelFunction<'a> {
    pub n: usize,
    pub element: &'a KernelElement,
}

impl Liftable for KernelFunction<'_> {
    fn dimension(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.element.eval(x)
    }
    fn north_limit(&self) -> Option<f64> {
        power_north_limit(self.n, self.element.radial.far, self.element.shape)
    }
}

/// `φ̃(y) = (φ/U)(π(y))` for `y ∈ Sⁿ ⊂ ℝ^{n+1}`, with
/// `U(x) = (2/(1+|x|²))^{(n-2)/2}` and `π` the projection from the north pole.
pub fn sphere_lift<F: Liftable + ?Sized>(phi: &F, y: &[f64]) -> Result<f64> {
    let n = phi.dimension();
    if y.len() != n + 1 {
        return Err(Error::ShapeMismatch { expected: n + 1, found: y.len() });
    }
    let pole = y[n];
    if (1.0 - pole).abs() < 1e-12 {
        return phi
            .north_limit()
            .ok_or_else(|| Error::Domain("input does not decay like |x|^{2-n}; lift undefined at the north pole".into()));
    }
    let x: Vec<f64> = y[..n].iter().map(|v| v / (1.0 - pole)).collect();
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let u = (2.0 / (1.0 + r2)).powf((n as f64 - 2.0) / 2.0);
    Ok(phi.value(&x) / u)
}

/// Structured record for profiles: values share the profile's radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub dimension: usize,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub lambda_inf: f64,
    pub kernel: Vec<KernelRecord>,
    #[serde(default)]
    pub exact_solution: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRecord {
    pub shape: KernelShape,
    pub values: Vec<f64>,
}

impl From<&Profile> for ProfileRecord {
    fn from(p: &Profile) -> Self {
        Self {
            dimension: p.n,
            radii: p.table.radii.clone(),
            values: p.table.values.clone(),
            lambda_inf: p.lambda_inf,
            kernel: p
                .kernel
                .iter()
                .map(|z| KernelRecord { shape: z.shape, values: z.radial.values.clone() })
                .collect(),
            exact_solution: p.is_exact_solution,
        }
    }
}

impl TryFrom<ProfileRecord> for Profile {
    type Error = Error;
    fn try_from(r: ProfileRecord) -> Result<Self> {
        Profile::from_samples(
            r.dimension,
            r.radii,
            r.values,
            r.lambda_inf,
            r.kernel.into_iter().map(|k| (k.shape, k.values)).collect(),
            r.exact_solution,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dimension_constants() {
        let c = DimensionConstants::new(3).unwrap();
        assert_eq!(c.two_star, 6.0);
        assert_relative_eq!(c.sphere_area, 4.0 * PI, epsilon = 1e-14);
        // 3π²√3/8·... closed form: (3/4)^{3/2}·2π²
        assert_relative_eq!(c.sobolev_energy, 0.75f64.powf(1.5) * 2.0 * PI * PI, epsilon = 1e-12);
        assert_eq!(c.node_energy_floor, 2.0 * c.sobolev_energy);
        assert!(matches!(DimensionConstants::new(2), Err(Error::InvalidDimension(2))));
        assert_relative_eq!(sphere_area(3), 2.0 * PI * PI, epsilon = 1e-13);
    }

    #[test]
    fn bubble_values() {
        let b = Profile::standard_bubble(3).unwrap();
        assert_relative_eq!(b.eval(&[0.0, 0.0, 0.0]), 1.0, epsilon = 1e-15);
        assert_relative_eq!(b.eval(&[0.0, 3f64.sqrt(), 0.0]), 0.5f64.sqrt(), epsilon = 1e-9);
        assert_relative_eq!(b.lambda_inf(), 3f64.sqrt(), epsilon = 1e-15);
        assert_eq!(b.kernel_dimension(), 4);
        assert!(b.is_exact_solution());
        // beyond the table the asymptote λ/r takes over
        assert_relative_eq!(b.eval_radial(1e6), 3f64.sqrt() / 1e6, max_relative = 1e-12);
        assert!(matches!(Profile::standard_bubble(2), Err(Error::InvalidDimension(2))));
    }

    #[test]
    fn spline_matches_closed_form() {
        let b = Profile::standard_bubble(4).unwrap();
        for &r in &[0.0005, 0.01, 0.7, 3.3, 41.0, 900.0] {
            let exact = (1.0 + r * r / 8.0f64).powf(-1.0);
            assert_relative_eq!(b.eval_radial(r), exact, max_relative = 1e-8);
            let dexact = -(2.0 / 8.0) * r * (1.0 + r * r / 8.0f64).powf(-2.0);
            assert_relative_eq!(b.radial_derivative(r), dexact, max_relative = 1e-6);
        }
    }

    #[test]
    fn kernel_is_orthonormal_and_solves_linearization() {
        for n in 3..=5 {
            let b = Profile::standard_bubble(n).unwrap();
            let g = b.kernel_gram();
            for (i, row) in g.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((v - target).abs() < 1e-6, "n={n} gram[{i}][{j}]={v}");
                }
            }
            for v in b.profile_kernel_inner() {
                assert!(v.abs() < 1e-6);
            }
            let radii = [0.05, 0.3, 1.0, 2.5, 10.0, 80.0];
            for j in 0..b.kernel_dimension() {
                let res = b.kernel_residual(j, &radii).unwrap();
                assert!(res < 1e-4, "n={n} j={j} res={res}");
            }
        }
    }

    #[test]
    fn energy_matches_sobolev_constant() {
        for n in 3..=5 {
            let b = Profile::standard_bubble(n).unwrap();
            let e = b.dirichlet_energy();
            let c = DimensionConstants::new(n).unwrap();
            assert!((e.value - c.sobolev_energy).abs() < 1e-6 * c.sobolev_energy, "n={n}");
            assert!(e.error < 1e-6 * c.sobolev_energy);
        }
    }

    #[test]
    fn lambda_integral() {
        let b = Profile::standard_bubble(3).unwrap();
        let est = lambda_from_integral(&b, 1e4, 1e-3).unwrap();
        assert!((est.value - 3f64.sqrt()).abs() < 1e-3 * 3f64.sqrt());
        let neg = lambda_from_integral(&b.negated(), 1e4, 1e-3).unwrap();
        assert_relative_eq!(neg.value, -est.value, epsilon = 1e-14);
        let zero = lambda_from_integral(&Profile::zero(3).unwrap(), 1e4, 1e-3).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(matches!(lambda_from_integral(&b, 10.0, 1e-6), Err(Error::Accuracy { .. })));
    }

    #[test]
    fn kelvin_is_an_involution() {
        let b = Profile::standard_bubble(3).unwrap();
        let k = kelvin_transform(&b).unwrap();
        assert_relative_eq!(k.eval_radial(0.0), 3f64.sqrt(), epsilon = 1e-15);
        let kk = kelvin_transform(&k).unwrap();
        for i in 0..=100 {
            let r = 0.1 * 100f64.powf(i as f64 / 100.0);
            assert!((kk.eval_radial(r) - b.eval_radial(r)).abs() < 1e-10);
        }
        assert!(kelvin_value(&b, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn kelvin_of_bubble_is_rescaled_bubble() {
        // |x|^{-1}(1 + 1/(3|x|²))^{-1/2} = √3 (1 + 3|x|²)^{-1/2}
        let b = Profile::standard_bubble(3).unwrap();
        let k = kelvin_transform(&b).unwrap();
        let mu: f64 = 1.0 / 3.0;
        for &r in &[0.01, 0.2, 1.0, 4.0, 50.0] {
            let rescaled = mu.powf(-0.5) * b.eval_radial(r / mu);
            assert_relative_eq!(k.eval_radial(r), rescaled, max_relative = 1e-9);
        }
    }

    #[test]
    fn decay_report() {
        let b = Profile::standard_bubble(3).unwrap();
        let rep = check_decay(&b, &[1.0, 10.0, 100.0]);
        assert!(rep.pass());
        // limit 2λ = 2√3 as r → ∞
        assert!((rep.ratios[2] - 2.0 * 3f64.sqrt()).abs() < 0.1);
        let z = check_decay(&Profile::zero(3).unwrap(), &[1.0, 10.0]);
        assert!(z.ratios.iter().all(|&r| r == 0.0));
        let forced = check_decay(&b.clone().with_decay_constant(0.1), &[1.0]);
        assert_eq!(forced.violations, vec![1.0]);
    }

    #[test]
    fn sphere_lift_of_bubble() {
        let b = Profile::standard_bubble(3).unwrap();
        // B_0/U = (1+r²)^{1/2}/(√2 (1+r²/3)^{1/2}) increases to √3/√2 at the pole
        let north = sphere_lift(&b, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_relative_eq!(north, 3f64.sqrt() / 2f64.sqrt(), epsilon = 1e-12);
        let south = sphere_lift(&b, &[0.0, 0.0, 0.0, -1.0]).unwrap();
        assert_relative_eq!(south, 0.5f64.sqrt(), epsilon = 1e-12);
        let zero = Profile::zero(3).unwrap();
        assert_eq!(sphere_lift(&zero, &[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(sphere_lift(&b, &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn record_round_trip() {
        let b = Profile::standard_bubble(3).unwrap();
        let rec = ProfileRecord::from(&b);
        let json = serde_json::to_string(&rec).unwrap();
        let back = Profile::try_from(serde_json::from_str::<ProfileRecord>(&json).unwrap()).unwrap();
        for &r in &[0.0, 0.002, 0.5, 7.0, 3e3, 2e4] {
            assert!((back.eval_radial(r) - b.eval_radial(r)).abs() < 1e-12);
            for (za, zb) in back.kernel().iter().zip(b.kernel()) {
                assert!((za.radial.eval(r) - zb.radial.eval(r)).abs() < 1e-12);
            }
        }
        assert_eq!(back.lambda_inf(), b.lambda_inf());
    }
}
