//! Least-squares projection of next-step values on basis functions of the
//! next-step state, followed by exact Gaussian conditioning.
//!
//! Given `Y_{k+1} ≈ p(X_{k+1})` and the Euler transition
//! `X_{k+1} = m + s ζ`, `ζ ~ N(0,1)`, both `E[p(X_{k+1}) | X_k]` and
//! `E[p(X_{k+1}) ΔW_k | X_k] / Δ` are computed in closed form per path. When
//! the target is itself a basis function of the state (a martingale in the
//! span) the step is exact.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{normal_cdf, normal_pdf, GaussHermite};

/// Condition number above which the normal equations are rejected.
pub const MAX_CONDITION: f64 = 1e12;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisConfig {
    /// Hermite polynomials of the standardized state up to `degree`.
    Polynomial { degree: usize },
    /// Continuous piecewise-linear functions with `knots` interior knots at
    /// empirical quantiles of the state.
    LinearSpline { knots: usize },
    /// Indicators of `bins` equal-count cells of the state. The projection
    /// is a positive operator, so ordered targets give ordered estimates.
    Bins { bins: usize },
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig::Polynomial { degree: 5 }
    }
}

impl BasisConfig {
    pub fn size(&self) -> usize {
        match *self {
            BasisConfig::Polynomial { degree } => degree + 1,
            BasisConfig::LinearSpline { knots } => knots + 2,
            BasisConfig::Bins { bins } => bins,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            BasisConfig::Polynomial { degree } => format!("polynomial(degree={degree})"),
            BasisConfig::LinearSpline { knots } => format!("linear_spline(knots={knots})"),
            BasisConfig::Bins { bins } => format!("bins({bins})"),
        }
    }
}

/// A fitted function of the state.
#[derive(Debug, Clone)]
pub struct Fit {
    mu: f64,
    sd: f64,
    shape: Shape,
    /// Root-mean-square residual of the fit.
    pub residual_rms: f64,
    /// Condition number of the column-scaled Gram matrix.
    pub condition: f64,
}

#[derive(Debug, Clone)]
enum Shape {
    Constant(f64),
    /// Coefficients on normalized Hermite polynomials `He_j / √j!`.
    Hermite { coef: Vec<f64>, rule: GaussHermite },
    /// `c0 + c1 ξ + Σ d_i (ξ - κ_i)⁺` in the standardized variable.
    Hinge { c0: f64, c1: f64, knots: Vec<f64>, slopes: Vec<f64> },
    /// Value `means[j]` on `(edges[j-1], edges[j]]`, outer cells unbounded.
    Cells { edges: Vec<f64>, means: Vec<f64> },
}

#[inline]
fn hermite_features(xi: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = xi;
    }
    for j in 1..out.len().saturating_sub(1) {
        let jf = j as f64;
        out[j + 1] = (xi * out[j] - jf.sqrt() * out[j - 1]) / (jf + 1.0).sqrt();
    }
}

#[inline]
fn hinge_features(xi: f64, knots: &[f64], out: &mut [f64]) {
    out[0] = 1.0;
    out[1] = xi;
    for (o, k) in out[2..].iter_mut().zip(knots) {
        *o = (xi - k).max(0.0);
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mu = chunked_sum(x, |v| v) / n;
    let var = chunked_sum(x, |v| (v - mu) * (v - mu)) / n;
    (mu, var.max(0.0).sqrt())
}

/// Sum in fixed-size chunks so the rounding does not depend on scheduling.
fn chunked_sum(x: &[f64], f: impl Fn(f64) -> f64 + Sync) -> f64 {
    x.par_chunks(CHUNK)
        .map(|c| c.iter().map(|&v| f(v)).sum::<f64>())
        .collect::<Vec<f64>>()
        .into_iter()
        .sum()
}

fn quantile_knots(xi: &[f64], count: usize) -> Vec<f64> {
    let mut sorted = xi.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut knots: Vec<f64> = (1..=count)
        .map(|q| sorted[((q as f64 / (count + 1) as f64) * (n - 1) as f64).round() as usize])
        .collect();
    knots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    // a knot at the extremes carries no data on one side
    knots.retain(|&k| k > sorted[0] && k < sorted[n - 1]);
    knots
}

/// Least-squares fit of `y` on the basis evaluated at `x`.
pub fn fit(basis: &BasisConfig, x: &[f64], y: &[f64], step: usize) -> Result<Fit> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let (ylo, yhi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if ylo == yhi {
        return Ok(Fit { mu: 0.0, sd: 1.0, shape: Shape::Constant(ylo), residual_rms: 0.0, condition: 1.0 });
    }
    let (mu, sd) = mean_sd(x);
    if n < 2 || !(sd > 1e-12 * (1.0 + mu.abs())) {
        let c = chunked_sum(y, |v| v) / n as f64;
        let rms = (chunked_sum(y, |v| (v - c) * (v - c)) / n as f64).sqrt();
        return Ok(Fit { mu, sd: 1.0, shape: Shape::Constant(c), residual_rms: rms, condition: 1.0 });
    }
    let xi: Vec<f64> = x.iter().map(|v| (v - mu) / sd).collect();
    if let BasisConfig::Bins { bins } = *basis {
        return fit_cells(&xi, y, bins, mu, sd, step);
    }
    let knots = match *basis {
        BasisConfig::LinearSpline { knots } => quantile_knots(&xi, knots),
        _ => Vec::new(),
    };
    let p = match *basis {
        BasisConfig::Polynomial { degree } => degree + 1,
        _ => knots.len() + 2,
    };
    let features = |v: f64, out: &mut [f64]| match *basis {
        BasisConfig::Polynomial { .. } => hermite_features(v, out),
        _ => hinge_features(v, &knots, out),
    };

    // Gram matrix and right-hand side, reduced chunk by chunk in order.
    let partials: Vec<(Vec<f64>, Vec<f64>)> = xi
        .par_chunks(CHUNK)
        .zip(y.par_chunks(CHUNK))
        .map(|(xc, yc)| {
            let mut g = vec![0.0; p * p];
            let mut r = vec![0.0; p];
            let mut phi = vec![0.0; p];
            for (&v, &t) in xc.iter().zip(yc) {
                features(v, &mut phi);
                for a in 0..p {
                    r[a] += phi[a] * t;
                    for b in a..p {
                        g[a * p + b] += phi[a] * phi[b];
                    }
                }
            }
            (g, r)
        })
        .collect();
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for (g, r) in &partials {
        for a in 0..p {
            rhs[a] += r[a];
            for b in a..p {
                gram[(a, b)] += g[a * p + b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    // Jacobi scaling so the condition number reflects collinearity rather
    // than column magnitudes.
    let scale: Vec<f64> = (0..p).map(|a| gram[(a, a)].sqrt()).collect();
    if scale.iter().any(|&c| !(c > 1e-150 && c.is_finite())) {
        return Err(Error::IllConditionedBasis { step, condition: f64::INFINITY });
    }
    let mut scaled = gram.clone();
    for a in 0..p {
        for b in 0..p {
            scaled[(a, b)] /= scale[a] * scale[b];
        }
    }
    let eig = SymmetricEigen::new(scaled);
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditionedBasis { step, condition });
    }
    let srhs = DVector::from_iterator(p, (0..p).map(|a| rhs[a] / scale[a]));
    let qt_r = eig.eigenvectors.transpose() * srhs;
    let sol = &eig.eigenvectors * DVector::from_iterator(p, (0..p).map(|a| qt_r[a] / eig.eigenvalues[a]));
    let coef: Vec<f64> = (0..p).map(|a| sol[a] / scale[a]).collect();

    let shape = match *basis {
        BasisConfig::Polynomial { degree } => Shape::Hermite {
            coef,
            rule: GaussHermite::new(degree / 2 + 2),
        },
        _ => Shape::Hinge {
            c0: coef[0],
            c1: coef[1],
            slopes: coef[2..].to_vec(),
            knots,
        },
    };
    let mut out = Fit { mu, sd, shape, residual_rms: 0.0, condition };
    let sse = x
        .par_chunks(CHUNK)
        .zip(y.par_chunks(CHUNK))
        .map(|(xc, yc)| xc.iter().zip(yc).map(|(&v, &t)| (out.eval(v) - t).powi(2)).sum::<f64>())
        .collect::<Vec<f64>>()
        .into_iter()
        .sum::<f64>();
    out.residual_rms = (sse / n as f64).sqrt();
    Ok(out)
}

/// Cell index of `v`: cell `j` is `(edges[j-1], edges[j]]`.
#[inline]
fn cell_of(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|e| *e < v)
}

/// Least squares on cell indicators: the cell means.
fn fit_cells(xi: &[f64], y: &[f64], bins: usize, mu: f64, sd: f64, step: usize) -> Result<Fit> {
    if bins == 0 {
        return Err(Error::IllConditionedBasis { step, condition: f64::INFINITY });
    }
    let edges = quantile_knots(xi, bins - 1);
    let m = edges.len() + 1;
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (&v, &t) in xi.iter().zip(y) {
        let j = cell_of(&edges, v);
        sums[j] += t;
        counts[j] += 1;
    }
    let (cmin, cmax) = (counts.iter().min().copied().unwrap_or(0), counts.iter().max().copied().unwrap_or(0));
    // the Gram matrix is diag(counts)
    let condition = if cmin == 0 { f64::INFINITY } else { cmax as f64 / cmin as f64 };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditionedBasis { step, condition });
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let sse: f64 = xi.iter().zip(y).map(|(&v, &t)| (means[cell_of(&edges, v)] - t).powi(2)).sum();
    Ok(Fit {
        mu,
        sd,
        shape: Shape::Cells { edges, means },
        residual_rms: (sse / xi.len() as f64).sqrt(),
        condition,
    })
}

impl Fit {
    pub fn eval(&self, x: f64) -> f64 {
        let xi = (x - self.mu) / self.sd;
        match &self.shape {
            Shape::Constant(c) => *c,
            Shape::Hermite { coef, .. } => {
                let mut phi = vec![0.0; coef.len()];
                hermite_features(xi, &mut phi);
                phi.iter().zip(coef).map(|(a, b)| a * b).sum()
            }
            Shape::Hinge { c0, c1, knots, slopes } => {
                c0 + c1 * xi + knots.iter().zip(slopes).map(|(k, d)| d * (xi - k).max(0.0)).sum::<f64>()
            }
            Shape::Cells { edges, means } => means[cell_of(edges, xi)],
        }
    }

    /// `(E[p(m + sζ)], E[p(m + sζ) ζ])` for `ζ ~ N(0, 1)`.
    pub fn gaussian_moments(&self, m: f64, s: f64) -> (f64, f64) {
        let sign = if s < 0.0 { -1.0 } else { 1.0 };
        let s = s.abs();
        let a = (m - self.mu) / self.sd;
        let b = s / self.sd;
        let (e, ez) = match &self.shape {
            Shape::Constant(c) => (*c, 0.0),
            Shape::Hermite { coef, rule } => {
                let mut phi = vec![0.0; coef.len()];
                let (mut e, mut ez) = (0.0, 0.0);
                for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
                    hermite_features(a + b * z, &mut phi);
                    let v: f64 = phi.iter().zip(coef).map(|(p, c)| p * c).sum();
                    e += w * v;
                    ez += w * v * z;
                }
                (e, ez)
            }
            Shape::Hinge { c0, c1, knots, slopes } => {
                let mut e = c0 + c1 * a;
                let mut ez = c1 * b;
                for (k, d) in knots.iter().zip(slopes) {
                    if b > 0.0 {
                        let delta = (a - k) / b;
                        let cdf = normal_cdf(delta);
                        e += d * ((a - k) * cdf + b * normal_pdf(delta));
                        ez += d * b * cdf;
                    } else {
                        e += d * (a - k).max(0.0);
                    }
                }
                (e, ez)
            }
            Shape::Cells { edges, means } => {
                if b == 0.0 {
                    (means[cell_of(edges, a)], 0.0)
                } else {
                    // ∫ 1{lo < a + bζ ≤ hi} (1, ζ) φ(ζ) dζ per cell
                    let (mut e, mut ez) = (0.0, 0.0);
                    let (mut cdf_lo, mut pdf_lo) = (0.0, 0.0);
                    for (j, &c) in means.iter().enumerate() {
                        let (cdf_hi, pdf_hi) = match edges.get(j) {
                            Some(&h) => {
                                let d = (h - a) / b;
                                (normal_cdf(d), normal_pdf(d))
                            }
                            None => (1.0, 0.0),
                        };
                        e += c * (cdf_hi - cdf_lo);
                        ez += c * (pdf_lo - pdf_hi);
                        cdf_lo = cdf_hi;
                        pdf_lo = pdf_hi;
                    }
                    (e, ez)
                }
            }
        };
        (e, sign * ez)
    }

    /// State values where the fitted function jumps.
    pub fn discontinuities(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Cells { edges, .. } => edges.iter().map(|e| self.mu + self.sd * e).collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.shape, Shape::Constant(_))
    }
}

/// Conditional expectations of one backward step.
#[derive(Debug, Clone)]
pub struct StepProjection {
    /// `E[Y_{k+1} | F_k]` per path.
    pub cond: Vec<f64>,
    /// `E[Y_{k+1} ΔW_k | F_k] / Δ_k` per path.
    pub z: Vec<f64>,
    pub residual_rms: f64,
    pub condition: f64,
}

/// Projects `target = Y_{k+1}` given states `x_next = X_{k+1}` and the
/// per-path transition `X_{k+1} = mean + vol · ΔW`, `ΔW ~ N(0, dt)`.
pub fn project_step(
    basis: &BasisConfig,
    x_next: &[f64],
    target: &[f64],
    mean: &[f64],
    vol: &[f64],
    dt: f64,
    step: usize,
) -> Result<StepProjection> {
    let f = fit(basis, x_next, target, step)?;
    let sq = dt.sqrt();
    let (cond, z): (Vec<f64>, Vec<f64>) = mean
        .par_iter()
        .zip(vol.par_iter())
        .map(|(&m, &v)| {
            let (e, ez) = f.gaussian_moments(m, v * sq);
            // E[p ΔW]/Δ = E[p ζ] √Δ / Δ
            (e, if f.is_constant() { 0.0 } else { ez / sq })
        })
        .unzip();
    Ok(StepProjection { cond, z, residual_rms: f.residual_rms, condition: f.condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, integrate_piecewise};
    use crate::rng::Stream;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut s = Stream::new(seed, 0);
        (0..n).map(|_| s.normal()).collect()
    }

    #[test]
    fn polynomial_fit_reproduces_polynomials() {
        let x = normals(2000, 1);
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 2.0 * v + 0.5 * v.powi(3)).collect();
        let f = fit(&BasisConfig::Polynomial { degree: 3 }, &x, &y, 0).unwrap();
        assert!(f.residual_rms < 1e-10);
        assert!((f.eval(0.7) - (1.0 - 1.4 + 0.5 * 0.343)).abs() < 1e-10);
    }

    #[test]
    fn gaussian_moments_of_cubic() {
        let x = normals(500, 2);
        let y: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
        let f = fit(&BasisConfig::Polynomial { degree: 4 }, &x, &y, 0).unwrap();
        // E[(m+sζ)³] = m³ + 3ms², E[(m+sζ)³ζ] = 3m²s + 3s³
        let (m, s) = (0.4, 0.3);
        let (e, ez) = f.gaussian_moments(m, s);
        assert!((e - (m * m * m + 3.0 * m * s * s)).abs() < 1e-10);
        assert!((ez - (3.0 * m * m * s + 3.0 * s.powi(3))).abs() < 1e-10);
        let (_, ez_neg) = f.gaussian_moments(m, -s);
        assert!((ez_neg + ez).abs() < 1e-12);
    }

    #[test]
    fn hinge_moments_match_quadrature() {
        let x = normals(4000, 3);
        let y: Vec<f64> = x.iter().map(|v| v.abs() + 0.3 * v).collect();
        let f = fit(&BasisConfig::LinearSpline { knots: 7 }, &x, &y, 0).unwrap();
        let gauss = |h: &dyn Fn(f64) -> f64| {
            integrate(|z| h(z) * normal_pdf(z), -12.0, 12.0, 1e-13, 0.0, 2000).value
        };
        for (m, s) in [(0.0, 0.5), (1.2, 0.1), (-0.4, 2.0)] {
            let (e, ez) = f.gaussian_moments(m, s);
            let e_ref = gauss(&|z| f.eval(m + s * z));
            let ez_ref = gauss(&|z| f.eval(m + s * z) * z);
            assert!((e - e_ref).abs() < 1e-10, "{e} {e_ref}");
            assert!((ez - ez_ref).abs() < 1e-10, "{ez} {ez_ref}");
        }
    }

    #[test]
    fn cell_moments_match_quadrature() {
        let x = normals(3000, 9);
        let y: Vec<f64> = x.iter().map(|v| v.sin() + 0.1 * v * v).collect();
        let f = fit(&BasisConfig::Bins { bins: 9 }, &x, &y, 0).unwrap();
        for (m, s) in [(0.0, 0.5), (1.2, 0.1), (-0.4, 2.0)] {
            let jumps: Vec<f64> = f.discontinuities().iter().map(|d| (d - m) / s).collect();
            let gauss = |h: &dyn Fn(f64) -> f64| {
                integrate_piecewise(|z| h(z) * normal_pdf(z), -12.0, 12.0, &jumps, 1e-13).value
            };
            let (e, ez) = f.gaussian_moments(m, s);
            assert!((e - gauss(&|z| f.eval(m + s * z))).abs() < 1e-10);
            assert!((ez - gauss(&|z| f.eval(m + s * z) * z)).abs() < 1e-10);
        }
    }

    #[test]
    fn cell_projection_preserves_order() {
        let x = normals(2000, 10);
        let lo: Vec<f64> = x.iter().map(|v| v.cos()).collect();
        let hi: Vec<f64> = lo.iter().zip(&x).map(|(a, v)| a + (3.0 * v).sin().abs()).collect();
        let m: Vec<f64> = x.iter().map(|v| 0.9 * v).collect();
        let vol = vec![1.0; 2000];
        let b = BasisConfig::Bins { bins: 20 };
        let pl = project_step(&b, &x, &lo, &m, &vol, 0.05, 0).unwrap();
        let ph = project_step(&b, &x, &hi, &m, &vol, 0.05, 0).unwrap();
        assert!(pl.cond.iter().zip(&ph.cond).all(|(a, b)| b >= a));
    }

    #[test]
    fn constant_target_gives_zero_control() {
        let x = normals(100, 4);
        let y = vec![2.5; 100];
        let m = vec![0.0; 100];
        let v = vec![1.0; 100];
        let p = project_step(&BasisConfig::default(), &x, &y, &m, &v, 0.01, 3).unwrap();
        assert!(p.cond.iter().all(|&c| c == 2.5));
        assert!(p.z.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn linear_target_is_exact() {
        let x = normals(1000, 5);
        let m: Vec<f64> = x.iter().map(|v| 0.9 * v).collect();
        let p = project_step(&BasisConfig::default(), &x, &x, &m, &vec![1.0; 1000], 0.04, 0).unwrap();
        for ((c, t), z) in p.cond.iter().zip(&m).zip(&p.z) {
            assert!((c - t).abs() < 1e-10);
            assert!((z - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_basis_is_rejected() {
        // two distinct state values cannot support a cubic
        let x: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let y: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let err = fit(&BasisConfig::Polynomial { degree: 3 }, &x, &y, 7).unwrap_err();
        assert!(matches!(err, Error::IllConditionedBasis { step: 7, .. }));
    }

    #[test]
    fn degenerate_state_falls_back_to_mean() {
        let x = vec![1.0; 10];
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let f = fit(&BasisConfig::default(), &x, &y, 0).unwrap();
        assert!(f.is_constant());
        assert!((f.eval(3.0) - 4.5).abs() < 1e-12);
    }
}
