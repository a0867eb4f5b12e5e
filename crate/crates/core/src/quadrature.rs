//! Numerical integration: adaptive Gauss–Kronrod on finite intervals and
//! Gauss–Hermite rules for Gaussian expectations.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, SymmetricEigen};

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
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
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Estimate {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Globally adaptive G7/K15 integration of `f` over `[a, b]`.
///
/// Subdivides the interval with the largest error estimate until the summed
/// error falls below `max(abs_tol, rel_tol * |I|)` or `max_intervals` is hit.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Estimate {
    if a == b {
        return Estimate { value: 0.0, error: 0.0 };
    }
    let first = kronrod15(&f, a, b);
    let mut parts: Vec<(f64, f64, Estimate)> = vec![(a, b, first)];
    loop {
        let (value, error) = parts
            .iter()
            .fold((0.0, 0.0), |(v, e), p| (v + p.2.value, e + p.2.error));
        if error <= abs_tol.max(rel_tol * value.abs()) || parts.len() >= max_intervals {
            return Estimate { value, error };
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.error.total_cmp(&y.1 .2.error))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval cannot be split further in floating point
            return Estimate { value, error };
        }
        parts.push((lo, mid, kronrod15(&f, lo, mid)));
        parts.push((mid, hi, kronrod15(&f, mid, hi)));
    }
}

/// Integrate over `[a, b]`, splitting at every breakpoint inside the interval so
/// no panel straddles a discontinuity of the integrand.
pub fn integrate_piecewise<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    abs_tol: f64,
) -> Estimate {
    let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts = vec![lo];
    cuts.extend(breakpoints.iter().copied().filter(|&c| c > lo && c < hi));
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    let n = (cuts.len() - 1).max(1) as f64;
    let mut total = Estimate { value: 0.0, error: 0.0 };
    for w in cuts.windows(2) {
        let e = integrate(&f, w[0], w[1], abs_tol / n, 0.0, 200);
        total.value += e.value;
        total.error += e.error;
    }
    total.value *= sign;
    total
}

/// Gauss–Hermite rule for `E[h(ζ)]`, `ζ ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    /// Standard-normal abscissae (already scaled by √2).
    pub nodes: Vec<f64>,
    /// Probability weights; they sum to one.
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds the `n`-point rule: eigenvalues of the Jacobi matrix give the
    /// starting abscissae, then Newton on the orthonormal Hermite recurrence
    /// polishes each root and yields its weight.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite order must be positive");
        const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut guesses: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        guesses.sort_by(|a, b| b.total_cmp(a));
        let nf = n as f64;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = if 2 * i + 1 == n { 0.0 } else { guesses[i] };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let norm = PI.sqrt();
        GaussHermite {
            nodes: x.iter().map(|v| v * SQRT_2).collect(),
            weights: w.iter().map(|v| v / norm).collect(),
        }
    }

    pub fn expectation<F: Fn(f64) -> f64>(&self, h: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * h(z))
            .sum()
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}
