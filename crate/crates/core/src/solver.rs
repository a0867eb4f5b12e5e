//! Regression Monte Carlo for `(F, ξ)`, with optional `u`-transform
//! preconditioning, and the comparison, stability and double-approximation
//! experiments built on it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::apriori::{estimate_ii, AprioriInputs};
use crate::backward::{backward, BackwardOptions, StepScheme};
use crate::coeff::{u_table, CoefficientConfig, TransformTable};
use crate::error::{precondition, Error, Result};
use crate::generator::{
    double_approximation_driver, sigma_level, transform_generator, truncate_rho, validate_structure,
    ApproxIndex, DriverFn, GeneratorSpec, LatticeSpec, SampleBox,
};
use crate::grid::{euler_maruyama, Field, PathBundle};
use crate::pure::{
    batched_se, check_terminal_order, comparison_report, mean, paired_se, BsdeSolution, ComparisonReport,
    SchemeTag, TerminalCondition,
};
use crate::regression::BasisConfig;
use crate::rng::Stream;

/// Change of unknown applied before the backward induction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Precondition {
    #[default]
    None,
    /// Solve for `Ỹ = u^c(Y)`, which removes `c(y)|z|²` from the driver.
    UTransform { coefficient: CoefficientConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub scheme: StepScheme,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub precondition: Precondition,
    /// `ρ` applied to `Y` inside driver evaluations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_m: Option<f64>,
    #[serde(default = "default_clip")]
    pub z_clip_quantile: Option<f64>,
    /// Skip the sampled structure check.
    #[serde(default)]
    pub override_structure: bool,
    #[serde(default = "default_samples")]
    pub structure_samples: usize,
}

fn default_clip() -> Option<f64> {
    Some(0.999)
}

fn default_samples() -> usize {
    4000
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            scheme: StepScheme::default(),
            basis: BasisConfig::default(),
            precondition: Precondition::None,
            truncation_m: None,
            z_clip_quantile: default_clip(),
            override_structure: false,
            structure_samples: default_samples(),
        }
    }
}

impl SolverConfig {
    pub fn with_basis(mut self, basis: BasisConfig) -> Self {
        self.basis = basis;
        self
    }

    fn options(&self) -> BackwardOptions {
        BackwardOptions { basis: self.basis, scheme: self.scheme, z_clip_quantile: self.z_clip_quantile, truncation_m: None }
    }
}

/// A driver ready for the backward induction.
struct Engine {
    /// Driver in the variables the induction runs in.
    driver: DriverFn,
    /// Original driver, for the recorded driver field.
    original: DriverFn,
    table: Option<Arc<TransformTable>>,
    opts: BackwardOptions,
    tag: SchemeTag,
}

fn prepare(original: DriverFn, cfg: &SolverConfig) -> Result<Engine> {
    if let StepScheme::ImplicitPicard { iters: 0, .. } = cfg.scheme {
        return Err(precondition("picard_iters must be at least 1"));
    }
    let mut driver = original.clone();
    if let Some(m) = cfg.truncation_m {
        if !(m > 0.0) {
            return Err(precondition("truncation_m must be positive"));
        }
        let inner = driver.clone();
        driver = Arc::new(move |t, x, y, z| inner(t, x, truncate_rho(y, m), z));
    }
    let (driver, table) = match &cfg.precondition {
        Precondition::None => (driver, None),
        Precondition::UTransform { coefficient } => {
            let c = coefficient.build()?;
            let table = Arc::new(u_table(&c)?);
            let inner = driver;
            let g: DriverFn = Arc::new(move |t, x, y, z| inner(t, x, y, z) - c.eval(y) * z * z);
            (transform_generator(g, table.clone()), Some(table))
        }
    };
    Ok(Engine {
        driver,
        original,
        table: table.clone(),
        opts: cfg.options(),
        tag: SchemeTag::Regression { scheme: cfg.scheme, preconditioned: table.is_some() },
    })
}

fn run(engine: &Engine, terminal: &TerminalCondition, paths: &PathBundle) -> Result<BsdeSolution> {
    let grid = &paths.grid;
    let model = terminal.model(grid.t0());
    let x = euler_maruyama(&model, paths)?;
    let xi = terminal.values(&x);
    let target: Vec<f64> = match &engine.table {
        Some(t) => xi.iter().map(|&v| t.value(v)).collect(),
        None => xi.clone(),
    };
    let out = backward(&model, paths, &x, &target, Some(&engine.driver), &engine.opts)?;
    let (mut y, mut z) = (out.y, out.z);
    if let Some(t) = &engine.table {
        for (yv, zv) in y.data.iter_mut().zip(z.data.iter_mut()) {
            let inv = t.invert(*yv);
            *zv /= t.deriv(inv);
            *yv = inv;
        }
    }
    let n = grid.n_steps();
    y.row_mut(n).copy_from_slice(&xi);
    let mut driver = Field::zeros(n + 1, paths.n_paths);
    for k in 0..=n {
        let t = grid.times()[k];
        let row: Vec<f64> =
            (0..paths.n_paths).map(|i| (engine.original)(t, x.get(k, i), y.get(k, i), z.get(k, i))).collect();
        driver.row_mut(k).copy_from_slice(&row);
    }
    let y0 = mean(y.row(0));
    Ok(BsdeSolution {
        grid: grid.clone(),
        x,
        y,
        z,
        driver: Some(driver),
        scheme: engine.tag,
        basis: engine.opts.basis,
        y0,
        y0_se: f64::NAN,
        y0_batches: Vec::new(),
        diagnostics: out.diagnostics,
    })
}

fn run_with_se(engine: &Engine, terminal: &TerminalCondition, paths: &PathBundle) -> Result<BsdeSolution> {
    let mut sol = run(engine, terminal, paths)?;
    (sol.y0_se, sol.y0_batches) = batched_se(paths, |b| Ok(run(engine, terminal, b)?.y0))?;
    Ok(sol)
}

fn sample_box(paths: &PathBundle) -> SampleBox {
    SampleBox { horizon: paths.grid.horizon(), ..SampleBox::default() }
}

fn require_structure(spec: &GeneratorSpec, cfg: &SolverConfig, paths: &PathBundle) -> Result<()> {
    if cfg.override_structure {
        return Ok(());
    }
    let report = validate_structure(spec, cfg.structure_samples, 0, sample_box(paths));
    if let Some(bad) = report.conditions.iter().find(|c| !c.pass) {
        return Err(precondition(format!(
            "driver `{}` fails {} (worst margin {:.3e} at {:?})",
            spec.label, bad.name, bad.worst_margin, bad.at
        )));
    }
    Ok(())
}

/// Backward regression solution of `(F, ξ)` with batch SE.
pub fn solve_bsde(
    spec: &GeneratorSpec,
    terminal: &TerminalCondition,
    paths: &PathBundle,
    cfg: &SolverConfig,
) -> Result<BsdeSolution> {
    require_structure(spec, cfg, paths)?;
    let engine = prepare(spec.driver(), cfg)?;
    run_with_se(&engine, terminal, paths)
}

/// Samples `F_A ≤ F_B` on the structure box.
fn check_driver_order(a: &GeneratorSpec, b: &GeneratorSpec, bx: SampleBox, samples: usize) -> Result<()> {
    let mut s = Stream::new(17, 0xC0DE);
    for _ in 0..samples {
        let t = s.range(0.0, bx.horizon);
        let x = s.range(-bx.x_radius, bx.x_radius);
        let y = s.range(-bx.y_radius, bx.y_radius);
        let z = s.range(-bx.z_radius, bx.z_radius);
        let (fa, fb) = (a.eval(t, x, y, z), b.eval(t, x, y, z));
        if fa > fb + 1e-12 * (1.0 + fa.abs()) {
            return Err(Error::InvalidComparison(format!("F_A = {fa} exceeds F_B = {fb} at (t,x,y,z) = ({t}, {x}, {y}, {z})")));
        }
    }
    Ok(())
}

/// Solves `(F_A, ξ_A)` and `(F_B, ξ_B)` on the same noise and checks
/// `Y_B ≥ Y_A` on grid × paths.
pub fn comparison_run(
    spec_a: &GeneratorSpec,
    spec_b: &GeneratorSpec,
    xi_a: &TerminalCondition,
    xi_b: &TerminalCondition,
    paths: &PathBundle,
    cfg: &SolverConfig,
) -> Result<ComparisonReport> {
    if !cfg.override_structure {
        let r = validate_structure(spec_a, cfg.structure_samples, 0, sample_box(paths));
        if !r.a2_pass {
            return Err(Error::InvalidComparison(format!("driver `{}` does not satisfy the convex split", spec_a.label)));
        }
    }
    check_driver_order(spec_a, spec_b, sample_box(paths), cfg.structure_samples)?;
    check_terminal_order(xi_a, xi_b, paths)?;
    let (ea, eb) = (prepare(spec_a.driver(), cfg)?, prepare(spec_b.driver(), cfg)?);
    comparison_report(paths, |p| Ok((run(&ea, xi_a, p)?, run(&eb, xi_b, p)?)))
}

/// One perturbed problem `(F^n, ξ^n)` with its nominal size (e.g. `1/n`).
#[derive(Clone)]
pub struct Perturbation {
    pub label: String,
    pub spec: GeneratorSpec,
    pub terminal: TerminalCondition,
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityEntry {
    pub label: String,
    pub scale: f64,
    /// `(E[sup_t |Y⁰ − Yⁿ|^p])^{1/p}`
    pub s_err: f64,
    /// `(E[(∫|Z⁰ − Zⁿ|²)^{p/2}])^{1/p}`
    pub m_err: f64,
    /// `(E|ξⁿ − ξ⁰|^p)^{1/p}`
    pub xi_size: f64,
    /// `(E|∫|Fⁿ − F⁰|(s, Y⁰, Z⁰) ds|^p)^{1/p}`
    pub driver_size: f64,
    /// `s_err / (xi_size + driver_size)`
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub p: f64,
    pub entries: Vec<StabilityEntry>,
    /// Least-squares slope of `ln s_err` against `ln scale`.
    pub fitted_order: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

/// Least-squares slope of `ln y` on `ln x` over positive pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> =
        x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Solves the base problem and every perturbation on the same noise and
/// measures the `S^p × M^p` distance against the perturbation sizes.
pub fn stability_run(
    spec0: &GeneratorSpec,
    terminal0: &TerminalCondition,
    perturbations: &[Perturbation],
    paths: &PathBundle,
    cfg: &SolverConfig,
    p: f64,
) -> Result<StabilityReport> {
    if !(p >= 1.0) {
        return Err(precondition("stability exponent must be at least 1"));
    }
    require_structure(spec0, cfg, paths)?;
    let base = run(&prepare(spec0.driver(), cfg)?, terminal0, paths)?;
    let grid = &paths.grid;
    let n = grid.n_steps();
    let np = paths.n_paths as f64;
    let mut entries = Vec::with_capacity(perturbations.len());
    for pert in perturbations {
        require_structure(&pert.spec, cfg, paths)?;
        let sol = run(&prepare(pert.spec.driver(), cfg)?, &pert.terminal, paths)?;
        let (mut s, mut m, mut xs, mut ds) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..paths.n_paths {
            let mut sup = 0.0_f64;
            let (mut zq, mut fint) = (0.0, 0.0);
            for k in 0..=n {
                sup = sup.max((base.y.get(k, i) - sol.y.get(k, i)).abs());
                if k < n {
                    let dt = grid.dt(k);
                    let t = grid.times()[k];
                    let (x, y, z) = (base.x.get(k, i), base.y.get(k, i), base.z.get(k, i));
                    zq += (z - sol.z.get(k, i)).powi(2) * dt;
                    fint += (pert.spec.eval(t, x, y, z) - spec0.eval(t, x, y, z)).abs() * dt;
                }
            }
            s += sup.powf(p);
            m += zq.powf(p / 2.0);
            xs += (sol.y.get(n, i) - base.y.get(n, i)).abs().powf(p);
            ds += fint.powf(p);
        }
        let root = |v: f64| (v / np).powf(1.0 / p);
        let (s_err, m_err, xi_size, driver_size) = (root(s), root(m), root(xs), root(ds));
        let size = xi_size + driver_size;
        entries.push(StabilityEntry {
            label: pert.label.clone(),
            scale: pert.scale,
            s_err,
            m_err,
            xi_size,
            driver_size,
            ratio: if size > 0.0 { s_err / size } else { f64::NAN },
        });
    }
    let scales: Vec<f64> = entries.iter().map(|e| e.scale).collect();
    let errs: Vec<f64> = entries.iter().map(|e| e.s_err).collect();
    let ratios: Vec<f64> = entries.iter().map(|e| e.ratio).filter(|r| r.is_finite()).collect();
    Ok(StabilityReport {
        p,
        fitted_order: loglog_slope(&scales, &errs),
        ratio_min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        ratio_max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        entries,
    })
}

/// Settings of the double approximation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxConfig {
    /// `(n, k)` indices, solved in order.
    pub schedule: Vec<(u32, u32)>,
    #[serde(default)]
    pub lattice: LatticeSpec,
    /// Exponent of the envelope.
    #[serde(default = "two")]
    pub p: f64,
}

fn two() -> f64 {
    2.0
}

impl ApproxConfig {
    /// Full grid `levels × levels` followed by nothing else.
    pub fn grid(levels: &[u32]) -> Self {
        let schedule = levels.iter().flat_map(|&n| levels.iter().map(move |&k| (n, k))).collect();
        ApproxConfig { schedule, lattice: LatticeSpec::default(), p: 2.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproxEntry {
    pub index: ApproxIndex,
    pub y0: f64,
    pub y0_se: f64,
    #[serde(skip)]
    pub batches: Vec<f64>,
    /// Share of grid × paths with `|Y| ≤ X`, `X` built with the derived constant.
    pub coverage: f64,
    /// Same with the constant set to one.
    pub coverage_unit: f64,
    pub error: Option<String>,
}

/// `Y(to) − Y(from)` with its paired SE.
#[derive(Debug, Clone, Serialize)]
pub struct PairCheck {
    pub from: ApproxIndex,
    pub to: ApproxIndex,
    pub diff: f64,
    pub se: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproxReport {
    pub entries: Vec<ApproxEntry>,
    /// Successive `n` at fixed `k`: `Y` must not decrease.
    pub monotone_n: Vec<PairCheck>,
    /// Successive `k` at fixed `n`: `Y` must not increase.
    pub monotone_k: Vec<PairCheck>,
    /// `|Y(m_{j+1}, m_{j+1}) − Y(m_j, m_j)|` along the diagonal.
    pub cauchy_diffs: Vec<f64>,
    pub monotone_pass: bool,
    pub cauchy_pass: bool,
    pub min_coverage: f64,
    pub min_coverage_unit: f64,
    /// `ln c` of the envelope.
    pub ln_c: f64,
}

/// `ln E[|ξ|^p + |α|_T^p | F_t]` on grid × paths, by zero-driver regression.
fn envelope_log_moment(
    spec: &GeneratorSpec,
    terminal: &TerminalCondition,
    paths: &PathBundle,
    basis: BasisConfig,
    p: f64,
) -> Result<Field> {
    let grid = &paths.grid;
    let model = terminal.model(grid.t0());
    let x = euler_maruyama(&model, paths)?;
    let n = grid.n_steps();
    let target: Vec<f64> = (0..paths.n_paths)
        .map(|i| {
            let alpha: f64 = (0..n).map(|k| (spec.alpha)(grid.times()[k], x.get(k, i)).abs() * grid.dt(k)).sum();
            terminal.eval(x.get(n, i)).abs().powf(p) + alpha.powf(p)
        })
        .collect();
    let opts = BackwardOptions { basis, ..Default::default() };
    let out = backward(&model, paths, &x, &target, None, &opts)?;
    // a regression can dip below zero in the tails; the moment cannot
    Ok(out.y.map(|v| v.max(f64::MIN_POSITIVE).ln()))
}

fn coverage(y: &Field, ln_moment: &Field, ln_c: f64, p: f64) -> f64 {
    let hits = y
        .data
        .iter()
        .zip(&ln_moment.data)
        .filter(|(yv, lm)| yv.abs().ln() * p <= ln_c + **lm)
        .count();
    hits as f64 / y.data.len() as f64
}

/// Solves `(F^{n,k}, ξ^{n,k})` along the schedule and checks monotonicity in
/// `n` and `k`, Cauchy behaviour along the diagonal and the a priori envelope.
pub fn double_approximation_run(
    spec: &GeneratorSpec,
    terminal: &TerminalCondition,
    paths: &PathBundle,
    cfg: &SolverConfig,
    approx: &ApproxConfig,
) -> Result<ApproxReport> {
    if !spec.autonomous {
        return Err(precondition("the double approximation needs a driver independent of (t, x)"));
    }
    if !cfg.override_structure {
        let r = validate_structure(spec, cfg.structure_samples, 0, sample_box(paths));
        if !r.a1_pass {
            return Err(precondition(format!("driver `{}` fails the growth conditions", spec.label)));
        }
    }
    let grid = &paths.grid;
    let horizon = grid.horizon() - grid.t0();
    let ln_c = estimate_ii(&AprioriInputs::from_spec(spec, horizon, approx.p))?.ln_c;
    let ln_moment = envelope_log_moment(spec, terminal, paths, cfg.basis, approx.p)?;
    let alpha0 = |t: f64| (spec.alpha)(t, 0.0).abs();
    let sub_cfg = SolverConfig { override_structure: true, ..cfg.clone() };
    let mut entries = Vec::with_capacity(approx.schedule.len());
    for &(n, k) in &approx.schedule {
        let index = ApproxIndex { n, k };
        let times = grid.times();
        let sigma_n = times[sigma_level(&alpha0, times, n as f64)];
        let sigma_k = times[sigma_level(&alpha0, times, k as f64)];
        let attempt = || -> Result<ApproxEntry> {
            let driver = double_approximation_driver(spec, index, sigma_n, sigma_k, &approx.lattice)?;
            let xi = terminal.truncated(n as f64, k as f64);
            let engine = prepare(driver, &sub_cfg)?;
            let sol = run_with_se(&engine, &xi, paths)?;
            Ok(ApproxEntry {
                index,
                y0: sol.y0,
                y0_se: sol.y0_se,
                coverage: coverage(&sol.y, &ln_moment, ln_c, approx.p),
                coverage_unit: coverage(&sol.y, &ln_moment, 0.0, approx.p),
                batches: sol.y0_batches,
                error: None,
            })
        };
        entries.push(attempt().unwrap_or_else(|e| ApproxEntry {
            index,
            y0: f64::NAN,
            y0_se: f64::NAN,
            batches: Vec::new(),
            coverage: f64::NAN,
            coverage_unit: f64::NAN,
            error: Some(e.to_string()),
        }));
    }
    let ok: Vec<&ApproxEntry> = entries.iter().filter(|e| e.error.is_none()).collect();
    let pair = |a: &ApproxEntry, b: &ApproxEntry, increasing: bool| {
        let diff = b.y0 - a.y0;
        let se = paired_se(&a.batches, &b.batches);
        let tol = 3.0 * if se.is_nan() { 0.0 } else { se };
        let ok = if increasing { diff >= -tol } else { diff <= tol };
        PairCheck { from: a.index, to: b.index, diff, se, ok }
    };
    let mut monotone_n = Vec::new();
    let mut monotone_k = Vec::new();
    for a in &ok {
        let next_n = ok.iter().filter(|b| b.index.k == a.index.k && b.index.n > a.index.n).min_by_key(|b| b.index.n);
        if let Some(b) = next_n {
            monotone_n.push(pair(a, b, true));
        }
        let next_k = ok.iter().filter(|b| b.index.n == a.index.n && b.index.k > a.index.k).min_by_key(|b| b.index.k);
        if let Some(b) = next_k {
            monotone_k.push(pair(a, b, false));
        }
    }
    let mut diag: Vec<&&ApproxEntry> = ok.iter().filter(|e| e.index.n == e.index.k).collect();
    diag.sort_by_key(|e| e.index.n);
    let mut cauchy_diffs = Vec::new();
    let mut cauchy_pass = true;
    for w in diag.windows(2) {
        cauchy_diffs.push((w[1].y0 - w[0].y0).abs());
    }
    for (j, w) in diag.windows(3).enumerate() {
        let se = paired_se(&w[1].batches, &w[2].batches);
        let tol = 3.0 * if se.is_nan() { 0.0 } else { se };
        if cauchy_diffs[j + 1] > cauchy_diffs[j] + tol {
            cauchy_pass = false;
        }
    }
    let finite_min = |f: fn(&ApproxEntry) -> f64| ok.iter().map(|e| f(e)).fold(f64::INFINITY, f64::min);
    Ok(ApproxReport {
        monotone_pass: monotone_n.iter().chain(&monotone_k).all(|c| c.ok) && ok.len() == entries.len(),
        min_coverage: finite_min(|e| e.coverage),
        min_coverage_unit: finite_min(|e| e.coverage_unit),
        entries,
        monotone_n,
        monotone_k,
        cauchy_diffs,
        cauchy_pass,
        ln_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::IntegrableCoefficient;
    use crate::generator::{GeneratorConfig, TermConfig};
    use crate::grid::{sample_brownian, TimeGrid};
    use crate::pure::exact_y0;

    fn bundle(paths: usize, steps: usize, seed: u64) -> PathBundle {
        sample_brownian(&TimeGrid::uniform(0.0, 1.0, steps).unwrap(), paths, 1, seed).unwrap()
    }

    fn linear(a: f64, b: f64) -> GeneratorSpec {
        GeneratorConfig { f1: vec![TermConfig::Linear { a, b, c: 0.0, d: 0.0 }], ..Default::default() }
            .build()
            .unwrap()
    }

    #[test]
    fn zero_driver_gives_brownian() {
        let b = bundle(1000, 20, 1);
        let s = solve_bsde(&GeneratorSpec::zero(), &TerminalCondition::brownian(), &b, &SolverConfig::default()).unwrap();
        let err = s.y.data.iter().zip(&s.x.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9);
        assert!(s.z.data.iter().all(|z| (z - 1.0).abs() < 1e-9));
    }

    #[test]
    fn linear_decay_is_first_order() {
        let r = 0.8;
        let spec = linear(0.0, -r);
        let err = |steps| {
            let b = bundle(200, steps, 2);
            let s = solve_bsde(&spec, &TerminalCondition::constant(1.0), &b, &SolverConfig::default()).unwrap();
            (s.y0 - (-r).exp()).abs()
        };
        let (e1, e2) = (err(20), err(40));
        assert!(e1 < 0.02 && e2 < e1 / 1.8, "{e1} {e2}");
    }

    #[test]
    fn quadratic_driver_matches_the_exact_oracle() {
        let f = IntegrableCoefficient::indicator(0.5, 1.0).unwrap();
        let spec = GeneratorSpec::pure_quadratic(&f);
        let xi = TerminalCondition::brownian();
        let exact = exact_y0(&f, &xi, 1.0).unwrap();
        let b = bundle(6000, 50, 3);
        let s = solve_bsde(&spec, &xi, &b, &SolverConfig::default()).unwrap();
        assert!((s.y0 - exact).abs() < 3.0 * s.y0_se + 0.02, "{} vs {exact}, se {}", s.y0, s.y0_se);
        let pre = SolverConfig {
            precondition: Precondition::UTransform { coefficient: CoefficientConfig::Indicator { c: 0.5, a: 1.0 } },
            ..Default::default()
        };
        let sp = solve_bsde(&spec, &xi, &b, &pre).unwrap();
        assert!((sp.y0 - exact).abs() < 3.0 * sp.y0_se + 0.005, "{} vs {exact}", sp.y0);
    }

    #[test]
    fn structure_failure_blocks_the_solve() {
        let spec = GeneratorSpec { f1: Arc::new(|_, _, y, _| y * y), ..GeneratorSpec::zero() };
        let b = bundle(50, 4, 4);
        let e = solve_bsde(&spec, &TerminalCondition::constant(0.0), &b, &SolverConfig::default());
        assert!(matches!(e, Err(Error::Precondition(_))));
        let cfg = SolverConfig { override_structure: true, ..Default::default() };
        assert!(solve_bsde(&spec, &TerminalCondition::constant(0.0), &b, &cfg).is_ok());
    }

    #[test]
    fn terminal_shift_comparison() {
        let spec = linear(0.0, -1.0);
        let b = bundle(1500, 10, 5);
        let xi = TerminalCondition::brownian();
        let cfg = SolverConfig::default().with_basis(BasisConfig::Bins { bins: 20 });
        let r = comparison_run(&spec, &spec, &xi, &xi.shifted(1.0), &b, &cfg).unwrap();
        assert!(r.pass);
        // implicit steps shrink a unit shift by (1 + Δ)^{-k}, up to five Picard sweeps
        assert!((r.min_diff - 1.1f64.powi(-10)).abs() < 1e-4, "{r:?}");
        let r = comparison_run(&spec, &linear(1.0, -1.0), &xi, &xi, &b, &cfg).unwrap();
        assert!(r.pass && r.min_diff >= 0.0);
        let bad = comparison_run(&linear(1.0, -1.0), &spec, &xi, &xi, &b, &cfg);
        assert!(matches!(bad, Err(Error::InvalidComparison(_))));
    }

    #[test]
    fn terminal_perturbations_are_first_order() {
        let spec = linear(0.0, -0.5);
        let xi = TerminalCondition::brownian();
        let b = bundle(400, 10, 6);
        let perts: Vec<Perturbation> = [1u32, 2, 4, 8, 16]
            .iter()
            .map(|&n| Perturbation {
                label: format!("xi+1/{n}"),
                spec: spec.clone(),
                terminal: xi.shifted(1.0 / n as f64),
                scale: 1.0 / n as f64,
            })
            .collect();
        let r = stability_run(&spec, &xi, &perts, &b, &SolverConfig::default(), 2.0).unwrap();
        assert!((r.fitted_order - 1.0).abs() < 1e-9, "{r:?}");
        assert!((r.entries[0].s_err - 1.0).abs() < 1e-9);
        let zero = Perturbation { label: "0".into(), spec: spec.clone(), terminal: xi.clone(), scale: 1.0 };
        let r = stability_run(&spec, &xi, &[zero], &b, &SolverConfig::default(), 2.0).unwrap();
        assert_eq!(r.entries[0].s_err, 0.0);
        assert_eq!(r.entries[0].m_err, 0.0);
    }

    #[test]
    fn lipschitz_driver_is_left_unchanged_by_the_approximation() {
        let spec = linear(0.0, -0.5);
        let xi = TerminalCondition::of_brownian("tanh", Arc::new(|w: f64| w.tanh()), (1.0, 0.0));
        let b = bundle(900, 10, 7);
        let approx = ApproxConfig {
            schedule: vec![(1, 1), (2, 2), (4, 4)],
            lattice: LatticeSpec { ny: 81, nz: 81, y_min: -4.0, y_max: 4.0, z_min: -4.0, z_max: 4.0 },
            p: 2.0,
        };
        let r = double_approximation_run(&spec, &xi, &b, &SolverConfig::default(), &approx).unwrap();
        let y: Vec<f64> = r.entries.iter().map(|e| e.y0).collect();
        // off-lattice queries carry an error of order n·h
        assert!((y[0] - y[1]).abs() < 1e-3 && (y[1] - y[2]).abs() < 1e-3, "{y:?}");
        assert!(r.monotone_pass && r.cauchy_pass);
        assert_eq!(r.min_coverage, 1.0);
    }

    #[test]
    fn loglog_slope_recovers_powers() {
        let x = [1.0, 0.5, 0.25, 0.125];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&x, &y) - 1.5).abs() < 1e-12);
    }
}
