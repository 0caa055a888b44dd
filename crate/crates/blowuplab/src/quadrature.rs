//! Adaptive Gauss–Kronrod (7/15) quadrature on bounded intervals.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SEGMENTS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Estimate { value: k * h, error: ((k - g) * h).abs() }
}

/// Integrates `f` over `[a, b]` by bisecting the worst segment until the summed
/// error estimate drops below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Estimate {
    if a == b {
        return Estimate { value: 0.0, error: 0.0 };
    }
    let mut segments = vec![(a, b, kronrod(&f, a, b))];
    loop {
        let value: f64 = segments.iter().map(|s| s.2.value).sum();
        let error: f64 = segments.iter().map(|s| s.2.error).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) || segments.len() >= MAX_SEGMENTS {
            return Estimate { value, error };
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, s)| if s.2.error > acc.1 { (i, s.2.error) } else { acc });
        let (lo, hi, _) = segments.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        segments.push((lo, mid, kronrod(&f, lo, mid)));
        segments.push((mid, hi, kronrod(&f, mid, hi)));
    }
}

/// Integrates a radial density `g(r)` over `[0, r_max]`, splitting at `r_split`
/// and using `t = ln r` beyond it so that many decades are sampled evenly.
pub fn integrate_radial<F: Fn(f64) -> f64>(g: F, r_split: f64, r_max: f64, tol: f64) -> Estimate {
    let inner = integrate(&g, 0.0, r_split.min(r_max), tol, tol);
    if r_max <= r_split {
        return inner;
    }
    let outer = integrate(
        |t: f64| {
            let r = t.exp();
            g(r) * r
        },
        r_split.ln(),
        r_max.ln(),
        tol,
        tol,
    );
    Estimate { value: inner.value + outer.value, error: inner.error + outer.error }
}
