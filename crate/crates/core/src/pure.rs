//! Terminal conditions, solution containers and the purely quadratic
//! equation `dY = -f(Y)|Z|² dt + Z dW`, solved through `Ỹ = u^f(Y)`.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backward::{backward, BackwardOptions, Diagnostics, StepScheme};
use crate::coeff::{u_table, IntegrableCoefficient, TransformTable};
use crate::error::{precondition, Error, Result};
use crate::grid::{euler_maruyama, Field, LinearSdeConfig, PathBundle, SdeModel, TimeGrid};
use crate::quadrature::GaussHermite;
use crate::regression::BasisConfig;
use crate::rng::Stream;

pub type TerminalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Number of contiguous path batches behind every standard error.
pub const SE_BATCHES: usize = 30;

/// Built-in terminal functions `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalConfig {
    Constant { value: f64 },
    /// `a + b x`
    Linear {
        #[serde(default)]
        a: f64,
        #[serde(default = "one")]
        b: f64,
    },
    /// `slope · (x - strike)⁺`
    Hinge {
        strike: f64,
        #[serde(default = "one")]
        slope: f64,
    },
    /// `c · sgn(x)|x|^power`
    Power { c: f64, power: f64 },
    /// `amplitude · tanh(x / scale)`
    Tanh {
        scale: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Sum { terms: Vec<TerminalConfig> },
}

fn one() -> f64 {
    1.0
}

impl TerminalConfig {
    /// `g` with a growth pair `(β, q)`, `|g(x)| ≤ β(1 + |x|^q)`.
    fn build(&self) -> Result<(TerminalFn, f64, f64)> {
        Ok(match *self {
            TerminalConfig::Constant { value } => (Arc::new(move |_| value), value.abs(), 0.0),
            TerminalConfig::Linear { a, b } => (Arc::new(move |x| a + b * x), a.abs().max(b.abs()), 1.0),
            TerminalConfig::Hinge { strike, slope } => (
                Arc::new(move |x| slope * (x - strike).max(0.0)),
                slope.abs() * strike.abs().max(1.0),
                1.0,
            ),
            TerminalConfig::Power { c, power } => {
                if !(power > 0.0) {
                    return Err(precondition("terminal power must be positive"));
                }
                (Arc::new(move |x: f64| c * x.signum() * x.abs().powf(power)), c.abs(), power)
            }
            TerminalConfig::Tanh { scale, amplitude } => {
                if !(scale > 0.0) {
                    return Err(precondition("tanh scale must be positive"));
                }
                (Arc::new(move |x: f64| amplitude * (x / scale).tanh()), amplitude.abs(), 0.0)
            }
            TerminalConfig::Sum { ref terms } => {
                let parts: Vec<_> = terms.iter().map(|t| t.build()).collect::<Result<_>>()?;
                let q = parts.iter().map(|p| p.2).fold(0.0, f64::max);
                // |x|^{q_i} ≤ 1 + |x|^q
                let beta = 2.0 * parts.iter().map(|p| p.1).sum::<f64>();
                let fs: Vec<TerminalFn> = parts.into_iter().map(|p| p.0).collect();
                (Arc::new(move |x| fs.iter().map(|g| g(x)).sum()), beta, q)
            }
        })
    }
}

/// Serializable terminal condition `ξ = g(X_T)`; without `state` the
/// state is the Brownian motion itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalSpec {
    pub g: TerminalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<LinearSdeConfig>,
    #[serde(default = "two")]
    pub p_integrability: f64,
}

fn two() -> f64 {
    2.0
}

#[derive(Clone)]
pub enum TerminalKind {
    Constant(f64),
    OfBrownian,
    OfState(SdeModel),
}

/// `ξ = g(X_T)` with its declared integrability class and growth.
#[derive(Clone)]
pub struct TerminalCondition {
    pub kind: TerminalKind,
    pub g: TerminalFn,
    pub label: String,
    pub p_integrability: f64,
    /// `(β, q)` with `|g(x)| ≤ β(1 + |x|^q)`.
    pub growth: (f64, f64),
}

impl std::fmt::Debug for TerminalCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            TerminalKind::Constant(k) => format!("constant({k})"),
            TerminalKind::OfBrownian => "g(W_T)".into(),
            TerminalKind::OfState(m) => format!("g(X_T), {m:?}"),
        };
        f.debug_struct("TerminalCondition")
            .field("label", &self.label)
            .field("kind", &kind)
            .field("growth", &self.growth)
            .finish()
    }
}

/// Sampled growth/finiteness check of `g`.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthCheck {
    pub worst_ratio: f64,
    pub all_finite: bool,
    pub pass: bool,
}

impl TerminalCondition {
    pub fn constant(k: f64) -> Self {
        TerminalCondition {
            kind: TerminalKind::Constant(k),
            g: Arc::new(move |_| k),
            label: format!("{k}"),
            p_integrability: 2.0,
            growth: (k.abs(), 0.0),
        }
    }

    pub fn of_brownian(label: impl Into<String>, g: TerminalFn, growth: (f64, f64)) -> Self {
        TerminalCondition { kind: TerminalKind::OfBrownian, g, label: label.into(), p_integrability: 2.0, growth }
    }

    /// `ξ = W_T`.
    pub fn brownian() -> Self {
        Self::of_brownian("W_T", Arc::new(|w| w), (1.0, 1.0))
    }

    pub fn of_state(model: SdeModel, label: impl Into<String>, g: TerminalFn, growth: (f64, f64)) -> Self {
        TerminalCondition { kind: TerminalKind::OfState(model), g, label: label.into(), p_integrability: 2.0, growth }
    }

    pub fn from_spec(spec: &TerminalSpec, t0: f64) -> Result<Self> {
        if !(spec.p_integrability >= 1.0) {
            return Err(precondition("p_integrability must be at least 1"));
        }
        let (g, beta, q) = spec.g.build()?;
        let label = format!("{:?}", spec.g);
        let mut out = match (&spec.g, spec.state) {
            (TerminalConfig::Constant { value }, _) => Self::constant(*value),
            (_, None) => Self::of_brownian(label, g, (beta, q)),
            (_, Some(s)) => Self::of_state(s.build(t0), label, g, (beta, q)),
        };
        out.p_integrability = spec.p_integrability;
        Ok(out)
    }

    /// State process the terminal value is read from.
    pub fn model(&self, t0: f64) -> SdeModel {
        match &self.kind {
            TerminalKind::OfState(m) => m.clone(),
            _ => SdeModel::brownian(t0, 0.0),
        }
    }

    /// Whether `ξ` only depends on `W_T`.
    pub fn is_brownian(&self) -> bool {
        !matches!(self.kind, TerminalKind::OfState(_))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    /// `ξ` on every path of the final row of `x`.
    pub fn values(&self, x: &Field) -> Vec<f64> {
        x.row(x.n_times - 1).iter().map(|&v| self.eval(v)).collect()
    }

    /// `ξ + delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        let g = self.g.clone();
        let kind = match self.kind {
            TerminalKind::Constant(k) => TerminalKind::Constant(k + delta),
            ref other => other.clone(),
        };
        TerminalCondition {
            kind,
            g: Arc::new(move |x| g(x) + delta),
            label: format!("{} + {delta}", self.label),
            growth: (self.growth.0 + delta.abs(), self.growth.1),
            ..self.clone()
        }
    }

    /// `ξ⁺ ∧ n − ξ⁻ ∧ k`.
    pub fn truncated(&self, n: f64, k: f64) -> Self {
        let g = self.g.clone();
        TerminalCondition {
            g: Arc::new(move |x| {
                let v = g(x);
                v.max(0.0).min(n) - (-v).max(0.0).min(k)
            }),
            label: format!("trunc({}, {n}, {k})", self.label),
            ..self.clone()
        }
    }

    /// Samples `x ∈ [-radius, radius]` and checks finiteness and the
    /// declared growth bound.
    pub fn check_growth(&self, radius: f64, samples: usize, seed: u64) -> GrowthCheck {
        let mut s = Stream::new(seed, 0x6707);
        let (beta, q) = self.growth;
        let mut worst = 0.0_f64;
        let mut finite = true;
        for _ in 0..samples {
            let x = s.range(-radius, radius);
            let v = self.eval(x);
            finite &= v.is_finite();
            let bound = beta * (1.0 + x.abs().powf(q));
            let ratio = if bound > 0.0 { v.abs() / bound } else if v == 0.0 { 0.0 } else { f64::INFINITY };
            worst = worst.max(ratio);
        }
        GrowthCheck { worst_ratio: worst, all_finite: finite, pass: finite && worst <= 1.0 + 1e-12 }
    }
}

/// How a solution was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeTag {
    ExactQuadrature,
    TransformMc,
    Regression { scheme: StepScheme, preconditioned: bool },
}

/// Pathwise solution on a grid.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub grid: TimeGrid,
    pub x: Field,
    pub y: Field,
    pub z: Field,
    /// `F(t_k, X, Y, Z)` in original variables, when a driver was used.
    pub driver: Option<Field>,
    pub scheme: SchemeTag,
    pub basis: BasisConfig,
    pub y0: f64,
    /// Batch standard error of `y0`; `NaN` when too few paths.
    pub y0_se: f64,
    /// `y0` of each contiguous batch behind `y0_se`.
    pub y0_batches: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// JSON summary of a [`BsdeSolution`].
#[derive(Debug, Clone, Serialize)]
pub struct SolutionSummary {
    pub scheme: SchemeTag,
    pub basis: String,
    pub y0: f64,
    pub y0_se: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub horizon: f64,
    pub max_residual_rms: f64,
    pub max_condition: f64,
    pub max_picard_iters: usize,
    pub clipped: usize,
}

impl BsdeSolution {
    pub fn n_paths(&self) -> usize {
        self.y.n_paths
    }

    pub fn summary(&self) -> SolutionSummary {
        let d = &self.diagnostics;
        SolutionSummary {
            scheme: self.scheme,
            basis: self.basis.label(),
            y0: self.y0,
            y0_se: self.y0_se,
            n_paths: self.n_paths(),
            n_steps: self.grid.n_steps(),
            horizon: self.grid.horizon(),
            max_residual_rms: d.residual_rms.iter().copied().fold(0.0, f64::max),
            max_condition: d.condition.iter().copied().fold(0.0, f64::max),
            max_picard_iters: d.picard_iters.iter().copied().max().unwrap_or(0),
            clipped: d.clipped,
        }
    }

    /// CSV `t,path,x,y,z[,driver]` for the first `max_paths` paths.
    pub fn write_csv<W: Write>(&self, out: W, max_paths: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t", "path", "x", "y", "z"];
        if self.driver.is_some() {
            header.push("driver");
        }
        w.write_record(&header)?;
        let np = self.n_paths().min(max_paths);
        for i in 0..np {
            for (k, t) in self.grid.times().iter().enumerate() {
                let mut rec = vec![
                    t.to_string(),
                    i.to_string(),
                    self.x.get(k, i).to_string(),
                    self.y.get(k, i).to_string(),
                    self.z.get(k, i).to_string(),
                ];
                if let Some(d) = &self.driver {
                    rec.push(d.get(k, i).to_string());
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.summary())?;
        Ok(())
    }
}

/// `sd(values)/√count` over [`SE_BATCHES`] contiguous batches, each run
/// through `solve`. `NaN` when a batch would hold fewer than 20 paths.
pub fn batched_se(paths: &PathBundle, solve: impl Fn(&PathBundle) -> Result<f64>) -> Result<(f64, Vec<f64>)> {
    if paths.n_paths < SE_BATCHES * 20 {
        return Ok((f64::NAN, Vec::new()));
    }
    let vals: Vec<f64> = paths.batches(SE_BATCHES).iter().map(&solve).collect::<Result<_>>()?;
    Ok((sd(&vals) / (vals.len() as f64).sqrt(), vals))
}

/// Batch SE of `b − a` from matching batch vectors; `NaN` if unavailable.
pub fn paired_se(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() || a.len() < 2 {
        return f64::NAN;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    sd(&d) / (d.len() as f64).sqrt()
}

/// Sample standard deviation.
pub(crate) fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Exact solution `Y(t, w)` on `times × xs`, stored time-major.
#[derive(Debug, Clone, Serialize)]
pub struct PureSurface {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub y: Vec<f64>,
    /// Quadrature order of the reported values.
    pub order: usize,
    /// Largest relative change between the two highest orders.
    pub rel_change: f64,
}

impl PureSurface {
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.y[k * self.xs.len() + j]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "w", "y"])?;
        for (k, t) in self.times.iter().enumerate() {
            for (j, x) in self.xs.iter().enumerate() {
                w.write_record(&[t.to_string(), x.to_string(), self.get(k, j).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Gauss–Hermite orders of the exact oracle; the last one is reported.
pub const EXACT_ORDERS: [usize; 3] = [32, 64, 128];
/// Largest accepted relative change between the two highest orders.
pub const EXACT_TOL: f64 = 1e-4;

/// `Y(t, w) = u⁻¹(E[u(g(w + √(T-t) ζ))])`.
pub fn solve_pure_exact(
    f: &IntegrableCoefficient,
    terminal: &TerminalCondition,
    grid: &TimeGrid,
    xs: &[f64],
) -> Result<PureSurface> {
    solve_pure_exact_with(f, terminal, grid, xs, EXACT_TOL)
}

pub fn solve_pure_exact_with(
    f: &IntegrableCoefficient,
    terminal: &TerminalCondition,
    grid: &TimeGrid,
    xs: &[f64],
    tol: f64,
) -> Result<PureSurface> {
    if !terminal.is_brownian() {
        return Err(precondition("the exact oracle needs a terminal value of W_T"));
    }
    let table = u_table(f)?;
    let horizon = grid.horizon();
    let ut = |v: f64| -> Result<f64> {
        let r = table.value(terminal.eval(v));
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::TerminalOverflow { path: 0 })
        }
    };
    let surface = |rule: &GaussHermite| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(grid.times().len() * xs.len());
        for &t in grid.times() {
            let s = (horizon - t).max(0.0).sqrt();
            for &w in xs {
                let v = if s == 0.0 {
                    terminal.eval(w)
                } else {
                    let mut acc = 0.0;
                    for (&z, &wt) in rule.nodes.iter().zip(&rule.weights) {
                        acc += wt * ut(w + s * z)?;
                    }
                    table.invert(acc)
                };
                out.push(v);
            }
        }
        Ok(out)
    };
    let results: Vec<Vec<f64>> =
        EXACT_ORDERS.iter().map(|&n| surface(&GaussHermite::new(n))).collect::<Result<_>>()?;
    let (hi, lo) = (&results[2], &results[1]);
    let rel_change = hi
        .iter()
        .zip(lo)
        .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max);
    if !(rel_change <= tol) {
        return Err(Error::OracleFailure { rel_change, tol, order: EXACT_ORDERS[2] });
    }
    Ok(PureSurface {
        times: grid.times().to_vec(),
        xs: xs.to_vec(),
        y: hi.clone(),
        order: EXACT_ORDERS[2],
        rel_change,
    })
}

/// `Y(0, 0)` of the purely quadratic equation on `[0, horizon]`.
pub fn exact_y0(f: &IntegrableCoefficient, terminal: &TerminalCondition, horizon: f64) -> Result<f64> {
    let grid = TimeGrid::uniform(0.0, horizon, 1)?;
    Ok(solve_pure_exact(f, terminal, &grid, &[0.0])?.get(0, 0))
}

/// Solves `dỸ = Z̃ dW`, `Ỹ_T = u(ξ)` by regression without standard error.
fn pure_mc_core(
    table: &TransformTable,
    terminal: &TerminalCondition,
    paths: &PathBundle,
    basis: BasisConfig,
) -> Result<BsdeSolution> {
    let t0 = paths.grid.t0();
    let model = terminal.model(t0);
    let x = euler_maruyama(&model, paths)?;
    let xi = terminal.values(&x);
    let ut: Vec<f64> = xi.iter().map(|&v| table.value(v)).collect();
    if let Some(i) = ut.iter().position(|v| !v.is_finite()) {
        return Err(Error::TerminalOverflow { path: i });
    }
    let opts = BackwardOptions { basis, ..Default::default() };
    let out = backward(&model, paths, &x, &ut, None, &opts)?;
    let n = paths.grid.n_steps();
    let mut y = out.y;
    let mut z = out.z;
    for (yv, zv) in y.data.iter_mut().zip(z.data.iter_mut()) {
        let inv = table.invert(*yv);
        *zv /= table.deriv(inv);
        *yv = inv;
    }
    y.row_mut(n).copy_from_slice(&xi);
    let y0 = mean(y.row(0));
    Ok(BsdeSolution {
        grid: paths.grid.clone(),
        x,
        y,
        z,
        driver: None,
        scheme: SchemeTag::TransformMc,
        basis,
        y0,
        y0_se: f64::NAN,
        y0_batches: Vec::new(),
        diagnostics: out.diagnostics,
    })
}

/// Monte Carlo solution through the `u`-transform, with batch SE.
pub fn solve_pure_mc(
    f: &IntegrableCoefficient,
    terminal: &TerminalCondition,
    paths: &PathBundle,
    basis: BasisConfig,
) -> Result<BsdeSolution> {
    let table = u_table(f)?;
    let mut sol = pure_mc_core(&table, terminal, paths, basis)?;
    (sol.y0_se, sol.y0_batches) = batched_se(paths, |b| Ok(pure_mc_core(&table, terminal, b, basis)?.y0))?;
    Ok(sol)
}

/// Outcome of a pathwise comparison `Y_B ≥ Y_A`.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    /// `min (Y_B − Y_A)` over grid × paths.
    pub min_diff: f64,
    /// `(step, path)` of the minimum.
    pub at: (usize, usize),
    /// Batch SE of `Y_B(0) − Y_A(0)`.
    pub se: f64,
    /// `|D − D_coarse|`, the discretization allowance.
    pub allowance: f64,
    pub tolerance: f64,
    pub y0_diff: f64,
    pub pass: bool,
}

pub(crate) fn min_difference(a: &Field, b: &Field) -> (f64, (usize, usize)) {
    let mut best = (f64::INFINITY, (0, 0));
    for k in 0..a.n_times {
        for (i, (ya, yb)) in a.row(k).iter().zip(b.row(k)).enumerate() {
            if yb - ya < best.0 {
                best = (yb - ya, (k, i));
            }
        }
    }
    best
}

/// Builds a [`ComparisonReport`] from a solver of `(Y_A, Y_B)` on a bundle.
pub(crate) fn comparison_report(
    paths: &PathBundle,
    solve: impl Fn(&PathBundle) -> Result<(BsdeSolution, BsdeSolution)>,
) -> Result<ComparisonReport> {
    let (a, b) = solve(paths)?;
    let (min_diff, at) = min_difference(&a.y, &b.y);
    let se = batched_se(paths, |p| {
        let (a, b) = solve(p)?;
        Ok(b.y0 - a.y0)
    })?
    .0;
    let se = if se.is_nan() { 0.0 } else { se };
    let allowance = match paths.coarsen(2) {
        Ok(c) => {
            let (ca, cb) = solve(&c)?;
            (min_diff - min_difference(&ca.y, &cb.y).0).abs()
        }
        Err(_) => 0.0,
    };
    let tolerance = 3.0 * se + allowance;
    Ok(ComparisonReport {
        min_diff,
        at,
        se,
        allowance,
        tolerance,
        y0_diff: b.y0 - a.y0,
        pass: min_diff >= -tolerance,
    })
}

/// Checks `f ≤ g` on a grid covering both supports plus every breakpoint.
pub(crate) fn check_coefficient_order(f: &IntegrableCoefficient, g: &IntegrableCoefficient) -> Result<()> {
    let r = f.effective_radius().max(g.effective_radius()) + 1.0;
    let mut pts: Vec<f64> = (0..=4000).map(|i| -r + 2.0 * r * i as f64 / 4000.0).collect();
    for b in f.breakpoints().iter().chain(g.breakpoints()) {
        pts.extend([b - 1e-9, *b, b + 1e-9]);
    }
    for x in pts {
        if f.eval(x) > g.eval(x) + 1e-12 {
            return Err(Error::InvalidComparison(format!(
                "f({x}) = {} exceeds g({x}) = {}",
                f.eval(x),
                g.eval(x)
            )));
        }
    }
    Ok(())
}

/// Checks `ξ_A ≤ ξ_B` on every path; both must read the same state.
pub(crate) fn check_terminal_order(a: &TerminalCondition, b: &TerminalCondition, paths: &PathBundle) -> Result<()> {
    if a.is_brownian() != b.is_brownian() {
        return Err(Error::InvalidComparison("terminal values read different state processes".into()));
    }
    let x = euler_maruyama(&a.model(paths.grid.t0()), paths)?;
    for (i, &v) in x.row(x.n_times - 1).iter().enumerate() {
        let (ya, yb) = (a.eval(v), b.eval(v));
        if ya > yb + 1e-12 {
            return Err(Error::InvalidComparison(format!("xi_A = {ya} exceeds xi_B = {yb} on path {i}")));
        }
    }
    Ok(())
}

/// Solves both purely quadratic equations on the same noise and checks
/// `Y' ≥ Y` on grid × paths.
pub fn compare_pure(
    f: &IntegrableCoefficient,
    g: &IntegrableCoefficient,
    xi: &TerminalCondition,
    xi_prime: &TerminalCondition,
    paths: &PathBundle,
    basis: BasisConfig,
) -> Result<ComparisonReport> {
    check_coefficient_order(f, g)?;
    check_terminal_order(xi, xi_prime, paths)?;
    let (tf, tg) = (u_table(f)?, u_table(g)?);
    comparison_report(paths, |p| {
        Ok((pure_mc_core(&tf, xi, p, basis)?, pure_mc_core(&tg, xi_prime, p, basis)?))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample_brownian;
    use crate::quadrature::{integrate, normal_pdf};

    fn half_indicator() -> IntegrableCoefficient {
        IntegrableCoefficient::indicator(0.5, 1.0).unwrap()
    }

    #[test]
    fn constant_terminal_is_constant() {
        let grid = TimeGrid::uniform(0.0, 1.0, 4).unwrap();
        let s = solve_pure_exact(&half_indicator(), &TerminalCondition::constant(0.7), &grid, &[-1.0, 0.0, 2.0]).unwrap();
        assert!(s.y.iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn zero_coefficient_gives_brownian() {
        let grid = TimeGrid::uniform(0.0, 1.0, 4).unwrap();
        let xs = [-1.5, 0.0, 0.3];
        let s = solve_pure_exact(&IntegrableCoefficient::zero(), &TerminalCondition::brownian(), &grid, &xs).unwrap();
        for k in 0..5 {
            for (j, x) in xs.iter().enumerate() {
                assert!((s.get(k, j) - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_matches_adaptive_integral() {
        let f = half_indicator();
        let table = u_table(&f).unwrap();
        let inner = integrate(|z| table.value(z) * normal_pdf(z), -12.0, 12.0, 1e-13, 1e-13, 400).value;
        let oracle = table.invert(inner);
        let y0 = exact_y0(&f, &TerminalCondition::brownian(), 1.0).unwrap();
        // u'' jumps at ±1, so the Gauss–Hermite error decays only algebraically
        assert!((y0 - oracle).abs() < 1e-4, "{y0} vs {oracle}");
        // Jensen: u convex on (-1,1) pushes Y0 above 0
        assert!(y0 > 0.0);
    }

    #[test]
    fn mc_constant_terminal_is_exact() {
        let grid = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let b = sample_brownian(&grid, 300, 1, 3).unwrap();
        let s = solve_pure_mc(&half_indicator(), &TerminalCondition::constant(0.4), &b, BasisConfig::default()).unwrap();
        assert!(s.y.data.iter().all(|v| (v - 0.4).abs() < 1e-12));
        assert!(s.z.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mc_zero_coefficient_is_the_brownian_path() {
        let grid = TimeGrid::uniform(0.0, 1.0, 20).unwrap();
        let b = sample_brownian(&grid, 1000, 1, 4).unwrap();
        let s = solve_pure_mc(&IntegrableCoefficient::zero(), &TerminalCondition::brownian(), &b, BasisConfig::default()).unwrap();
        let err = s.y.data.iter().zip(&s.x.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn transform_commutes_with_the_scheme() {
        let f = half_indicator();
        let table = Arc::new(u_table(&f).unwrap());
        let grid = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let b = sample_brownian(&grid, 2000, 1, 5).unwrap();
        let direct = solve_pure_mc(&f, &TerminalCondition::brownian(), &b, BasisConfig::default()).unwrap();
        let tb = table.clone();
        let pre = TerminalCondition::of_brownian("u(W_T)", Arc::new(move |w| tb.value(w)), (3.0, 1.0));
        let ident = solve_pure_mc(&IntegrableCoefficient::zero(), &pre, &b, BasisConfig::default()).unwrap();
        for k in 0..10 {
            for i in (0..2000).step_by(37) {
                assert!((table.value(direct.y.get(k, i)) - ident.y.get(k, i)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn z_denominator_is_bounded_below() {
        let f = half_indicator();
        let table = u_table(&f).unwrap();
        let m = table.mass_constant();
        for i in -400..=400 {
            assert!(table.deriv(i as f64 * 0.01) >= 1.0 / m - 1e-12);
        }
    }

    #[test]
    fn pure_comparison_orders() {
        let grid = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let b = sample_brownian(&grid, 1200, 1, 6).unwrap();
        let xi = TerminalCondition::brownian();
        let cells = BasisConfig::Bins { bins: 20 };
        let r = compare_pure(&IntegrableCoefficient::zero(), &half_indicator(), &xi, &xi, &b, cells).unwrap();
        assert!(r.pass, "{r:?}");
        let r = compare_pure(&half_indicator(), &half_indicator(), &xi, &xi.shifted(1.0), &b, cells).unwrap();
        assert!(r.pass && r.min_diff > 0.0, "{r:?}");
        let bad = compare_pure(&half_indicator(), &IntegrableCoefficient::zero(), &xi, &xi, &b, BasisConfig::default());
        assert!(matches!(bad, Err(Error::InvalidComparison(_))));
    }

    #[test]
    fn growth_check_flags_violations() {
        let t = TerminalCondition::from_spec(
            &TerminalSpec { g: TerminalConfig::Power { c: 1.0, power: 2.0 }, state: None, p_integrability: 2.0 },
            0.0,
        )
        .unwrap();
        assert!(t.check_growth(10.0, 1000, 1).pass);
        let liar = TerminalCondition::of_brownian("x^2", Arc::new(|x| x * x), (1.0, 1.0));
        assert!(!liar.check_growth(10.0, 1000, 1).pass);
    }

    #[test]
    fn truncation_clamps_both_sides() {
        let t = TerminalCondition::brownian().truncated(2.0, 1.0);
        assert_eq!(t.eval(5.0), 2.0);
        assert_eq!(t.eval(-5.0), -1.0);
        assert_eq!(t.eval(0.5), 0.5);
    }
}
