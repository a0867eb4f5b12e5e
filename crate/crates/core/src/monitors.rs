//! Empirical checks of occupation, Itô and moment identities along a
//! simulated solution.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apriori::{check, AprioriReport};
use crate::error::{precondition, Result};
use crate::generator::GeneratorSpec;
use crate::grid::PathBundle;
use crate::pure::{mean, sd, BsdeSolution};
use crate::quadrature::integrate_piecewise;

/// Built-in test functions `ψ` for the occupation estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiConfig {
    Zero,
    Constant { value: f64 },
    /// `1_{[a, b]}`
    Indicator { a: f64, b: f64 },
    /// `height · exp(−(y − center)² / (2 width²))`
    Gaussian { center: f64, width: f64, #[serde(default = "one")] height: f64 },
    /// `|f(y)|` for the quadratic coefficient of the driver.
    AbsCoefficient,
}

fn one() -> f64 {
    1.0
}

/// A nonnegative test function with its kinks.
#[derive(Clone)]
pub struct Psi {
    pub label: String,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    breakpoints: Vec<f64>,
}

impl std::fmt::Debug for Psi {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Psi").field("label", &self.label).finish()
    }
}

impl Psi {
    pub fn new(label: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static, breakpoints: Vec<f64>) -> Self {
        Psi { label: label.into(), eval: Arc::new(eval), breakpoints }
    }

    pub fn eval(&self, y: f64) -> f64 {
        (self.eval)(y)
    }

    /// `‖ψ‖_{L¹[−m, m]}`
    pub fn l1(&self, m: f64) -> f64 {
        let f = &self.eval;
        integrate_piecewise(|y| f(y).abs(), -m, m, &self.breakpoints, 1e-12).value
    }
}

impl PsiConfig {
    pub fn build(&self, spec: &GeneratorSpec) -> Result<Psi> {
        Ok(match *self {
            PsiConfig::Zero => Psi::new("zero", |_| 0.0, vec![]),
            PsiConfig::Constant { value } => Psi::new(format!("const({value})"), move |_| value.abs(), vec![]),
            PsiConfig::Indicator { a, b } => {
                if !(a < b) {
                    return Err(precondition("indicator needs a < b"));
                }
                Psi::new(format!("1[{a},{b}]"), move |y| if (a..=b).contains(&y) { 1.0 } else { 0.0 }, vec![a, b])
            }
            PsiConfig::Gaussian { center, width, height } => {
                if !(width > 0.0) {
                    return Err(precondition("gaussian width must be positive"));
                }
                Psi::new(
                    format!("gauss({center},{width})"),
                    move |y| height.abs() * (-(y - center).powi(2) / (2.0 * width * width)).exp(),
                    vec![center],
                )
            }
            PsiConfig::AbsCoefficient => {
                let f = spec.f.clone();
                let bp = f.breakpoints().to_vec();
                Psi::new(format!("|{}|", f.label()), move |y| f.eval(y).abs(), bp)
            }
        })
    }

    /// Indicators, Gaussians and `|f|`.
    pub fn builtin_family() -> Vec<PsiConfig> {
        vec![
            PsiConfig::Indicator { a: -0.1, b: 0.1 },
            PsiConfig::Indicator { a: -1.0, b: 1.0 },
            PsiConfig::Gaussian { center: 0.0, width: 0.25, height: 1.0 },
            PsiConfig::Gaussian { center: 0.5, width: 1.0, height: 1.0 },
            PsiConfig::AbsCoefficient,
        ]
    }
}

/// `E[∫₀^{τ_m} ψ(Y)|Z|² ds]` against `6m‖ψ‖_{L¹[−m, m]}`.
#[derive(Debug, Clone, Serialize)]
pub struct OccupationReport {
    pub psi: String,
    pub m: f64,
    pub lhs: f64,
    pub se: f64,
    pub rhs: f64,
    /// Share of paths with `τ_m < T`.
    pub tau_m_hits: f64,
    /// `rhs / lhs`
    pub tightness: f64,
    pub pass: bool,
}

fn driver_value(sol: &BsdeSolution, spec: &GeneratorSpec, k: usize, i: usize) -> f64 {
    match &sol.driver {
        Some(d) => d.get(k, i),
        None => spec.eval(sol.grid.times()[k], sol.x.get(k, i), sol.y.get(k, i), sol.z.get(k, i)),
    }
}

/// Occupation estimate stopped at `τ_m = inf{t : |Y_t| + ∫₀ᵗ|F| ds ≥ m}`.
pub fn krylov_check(sol: &BsdeSolution, spec: &GeneratorSpec, psi: &Psi, m: f64) -> Result<OccupationReport> {
    if !(m > 0.0) {
        return Err(precondition("localization level must be positive"));
    }
    let rhs = 6.0 * m * psi.l1(m);
    if !rhs.is_finite() {
        return Err(precondition(format!("‖{}‖ on [−{m}, {m}] is not finite", psi.label)));
    }
    let grid = &sol.grid;
    let n = grid.n_steps();
    let per_path: Vec<(f64, bool)> = (0..sol.n_paths())
        .into_par_iter()
        .map(|i| {
            let (mut acc, mut fint) = (0.0, 0.0);
            for k in 0..n {
                let y = sol.y.get(k, i);
                if y.abs() + fint >= m {
                    return (acc, true);
                }
                let dt = grid.dt(k);
                acc += psi.eval(y) * sol.z.get(k, i).powi(2) * dt;
                fint += driver_value(sol, spec, k, i).abs() * dt;
            }
            (acc, sol.y.get(n, i).abs() + fint >= m)
        })
        .collect();
    let vals: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let lhs = mean(&vals);
    let se = sd(&vals) / (vals.len() as f64).sqrt();
    let se = if se.is_finite() { se } else { 0.0 };
    Ok(OccupationReport {
        psi: psi.label.clone(),
        m,
        lhs,
        se,
        rhs,
        tau_m_hits: per_path.iter().filter(|p| p.1).count() as f64 / per_path.len() as f64,
        tightness: if lhs > 0.0 { rhs / lhs } else { f64::INFINITY },
        pass: lhs >= 0.0 && lhs <= rhs + 3.0 * se,
    })
}

/// `(1/2ε) Σ 1_{|Y_k − a| < ε} |Z_k|² Δ_k` per path.
pub fn estimate_local_time(sol: &BsdeSolution, level: f64, epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) {
        return Err(precondition("epsilon must be positive"));
    }
    let grid = &sol.grid;
    let n = grid.n_steps();
    Ok((0..sol.n_paths())
        .into_par_iter()
        .map(|i| {
            let s: f64 = (0..n)
                .filter(|&k| (sol.y.get(k, i) - level).abs() < epsilon)
                .map(|k| sol.z.get(k, i).powi(2) * grid.dt(k))
                .sum();
            s / (2.0 * epsilon)
        })
        .collect())
}

/// `|Y|` at or below this counts as `Y = 0` in the Itô sums.
pub const ZERO_LEVEL: f64 = 1e-12;

/// Distribution of the per-path gap in the `|y|^p` Itô formula on `[0, T]`.
#[derive(Debug, Clone, Serialize)]
pub struct ItoResidual {
    pub p: f64,
    pub dt: f64,
    pub median_abs_gap: f64,
    pub mean_abs_gap: f64,
    pub max_abs_gap: f64,
}

/// Gap `|Y₀|^p + c_p Σ |Y|^{p−2}|Z|²Δ − |ξ|^p + p Σ sgn(Y)|Y|^{p−1}ΔY (+ L⁰ for p = 1)`.
/// The local time at `p = 1` uses `epsilon`.
pub fn ito_p_residual(sol: &BsdeSolution, p: f64, epsilon: f64) -> Result<ItoResidual> {
    if !(p >= 1.0) {
        return Err(precondition("the |y|^p formula needs p ≥ 1"));
    }
    let grid = &sol.grid;
    let n = grid.n_steps();
    let local = if p == 1.0 { Some(estimate_local_time(sol, 0.0, epsilon)?) } else { None };
    let c = p * (p - 1.0) / 2.0;
    let mut gaps: Vec<f64> = (0..sol.n_paths())
        .into_par_iter()
        .map(|i| {
            let (mut quad, mut mart) = (0.0, 0.0);
            for k in 0..n {
                let y = sol.y.get(k, i);
                if y.abs() > ZERO_LEVEL {
                    quad += y.abs().powf(p - 2.0) * sol.z.get(k, i).powi(2) * grid.dt(k);
                    mart += y.signum() * y.abs().powf(p - 1.0) * (sol.y.get(k + 1, i) - y);
                }
            }
            let lhs = sol.y.get(0, i).abs().powf(p) + c * quad;
            let l0 = local.as_ref().map_or(0.0, |l| l[i]);
            let rhs = sol.y.get(n, i).abs().powf(p) - p * mart - l0;
            (lhs - rhs).abs()
        })
        .collect();
    let mean_abs_gap = mean(&gaps);
    let max_abs_gap = gaps.iter().copied().fold(0.0, f64::max);
    gaps.sort_by(f64::total_cmp);
    let mid = gaps.len() / 2;
    let median_abs_gap = if gaps.len() % 2 == 1 { gaps[mid] } else { 0.5 * (gaps[mid - 1] + gaps[mid]) };
    Ok(ItoResidual { p, dt: grid.max_step(), median_abs_gap, mean_abs_gap, max_abs_gap })
}

/// Itô gap under repeated halving of the time step on nested noise.
#[derive(Debug, Clone, Serialize)]
pub struct ItoRefinement {
    pub p: f64,
    /// Coarsest first.
    pub levels: Vec<ItoResidual>,
    /// `median(Δ) / median(Δ/2)` for consecutive levels.
    pub ratios: Vec<f64>,
    pub min_ratio: f64,
    pub pass: bool,
}

/// Minimum median ratio per halving.
pub const ITO_HALVING_RATIO: f64 = 1.3;

/// Solves on `fine` coarsened by `2^j`, `j = levels−1, …, 0`, and tracks the gap.
pub fn ito_refinement(
    fine: &PathBundle,
    levels: usize,
    p: f64,
    epsilon: f64,
    solve: impl Fn(&PathBundle) -> Result<BsdeSolution>,
) -> Result<ItoRefinement> {
    if levels < 2 {
        return Err(precondition("refinement needs at least two levels"));
    }
    let mut out = Vec::with_capacity(levels);
    for j in (0..levels).rev() {
        let bundle = if j == 0 { fine.clone() } else { fine.coarsen(1 << j)? };
        out.push(ito_p_residual(&solve(&bundle)?, p, epsilon)?);
    }
    let ratios: Vec<f64> = out.windows(2).map(|w| w[0].median_abs_gap / w[1].median_abs_gap).collect();
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ItoRefinement { p, levels: out, pass: min_ratio >= ITO_HALVING_RATIO, ratios, min_ratio })
}

/// Both a priori inequalities with the derived constants.
pub fn lp_moment_report(sol: &BsdeSolution, spec: &GeneratorSpec, p: f64) -> Result<AprioriReport> {
    check(sol, spec, p)
}

/// `E[∫ 1_{Y ∈ A} |Z|² ds]` for a finite set `A`.
#[derive(Debug, Clone, Serialize)]
pub struct NullSetReport {
    pub points: Vec<f64>,
    pub occupation: f64,
    pub se: f64,
    pub pass: bool,
}

pub fn null_set_occupation(sol: &BsdeSolution, points: &[f64]) -> NullSetReport {
    let grid = &sol.grid;
    let n = grid.n_steps();
    let vals: Vec<f64> = (0..sol.n_paths())
        .map(|i| {
            (0..n)
                .filter(|&k| points.contains(&sol.y.get(k, i)))
                .map(|k| sol.z.get(k, i).powi(2) * grid.dt(k))
                .sum()
        })
        .collect();
    let occupation = mean(&vals);
    let se = sd(&vals) / (vals.len() as f64).sqrt();
    let se = if se.is_finite() { se } else { 0.0 };
    NullSetReport { points: points.to_vec(), occupation, se, pass: occupation <= 3.0 * se }
}
