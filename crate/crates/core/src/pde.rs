//! Finite differences for `∂_t u + b u_x + ½σ²u_xx + F(t, x, u, σu_x) = 0`,
//! `u(T, ·) = g`, and the comparison against the Markovian BSDE.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::generator::GeneratorSpec;
use crate::grid::{sample_brownian, PathBundle, SdeModel, TimeGrid};
use crate::pure::{TerminalCondition, TerminalFn};
use crate::solver::{solve_bsde, SolverConfig};

/// Values at the two outermost nodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// `u = g` at the padded edges.
    #[default]
    Dirichlet,
    /// Linear extrapolation from the two inner neighbours.
    OneSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeGrid {
    pub x_min: f64,
    pub x_max: f64,
    /// Nodes on `[x_min, x_max]`, padding excluded.
    pub nx: usize,
    pub nt: usize,
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default)]
    pub boundary: Boundary,
    /// Padding in units of `σ√(T − t₀)`.
    #[serde(default = "six")]
    pub padding: f64,
}

fn one() -> f64 {
    1.0
}

fn six() -> f64 {
    6.0
}

impl Default for PdeGrid {
    fn default() -> Self {
        PdeGrid { x_min: -2.0, x_max: 2.0, nx: 81, nt: 100, t0: 0.0, horizon: 1.0, boundary: Boundary::Dirichlet, padding: 6.0 }
    }
}

impl PdeGrid {
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        (self.horizon - self.t0) / self.nt as f64
    }

    /// Both step sizes halved.
    pub fn refined(&self) -> PdeGrid {
        PdeGrid { nx: 2 * self.nx - 1, nt: 2 * self.nt, ..*self }
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.nt < 1 {
            return Err(precondition("the PDE grid needs nx ≥ 3 and nt ≥ 1"));
        }
        if !(self.x_min < self.x_max) || !(self.t0 < self.horizon) || !(self.padding >= 0.0) {
            return Err(precondition("the PDE grid needs x_min < x_max, t0 < horizon and padding ≥ 0"));
        }
        Ok(())
    }
}

/// `u` on `times × xs`, time-major.
#[derive(Debug, Clone, Serialize)]
pub struct PdeSolution {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub u: Vec<f64>,
    /// Node range of `[x_min, x_max]` inside the padded axis.
    pub inner: (usize, usize),
    /// Largest `Δt · (|∂_p H(p⁻)| + |∂_p H(p⁺)|) / Δx` met.
    pub max_cfl: f64,
}

impl PdeSolution {
    pub fn get(&self, n: usize, i: usize) -> f64 {
        self.u[n * self.xs.len() + i]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.u[n * self.xs.len()..(n + 1) * self.xs.len()]
    }

    fn interp_row(&self, n: usize, x: f64) -> f64 {
        let xs = &self.xs;
        let h = xs[1] - xs[0];
        let s = ((x - xs[0]) / h).clamp(0.0, (xs.len() - 1) as f64);
        let i = (s.floor() as usize).min(xs.len() - 2);
        let w = s - i as f64;
        (1.0 - w) * self.get(n, i) + w * self.get(n, i + 1)
    }

    /// Bilinear interpolation, clamped to the grid.
    pub fn value(&self, t: f64, x: f64) -> f64 {
        let ts = &self.times;
        let dt = ts[1] - ts[0];
        let s = ((t - ts[0]) / dt).clamp(0.0, (ts.len() - 1) as f64);
        let n = (s.floor() as usize).min(ts.len() - 2);
        let w = s - n as f64;
        if w < 1e-9 {
            return self.interp_row(n, x);
        }
        (1.0 - w) * self.interp_row(n, x) + w * self.interp_row(n + 1, x)
    }

    /// CSV `t,x,u` on the unpadded range.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "u"])?;
        for (n, t) in self.times.iter().enumerate() {
            for i in self.inner.0..=self.inner.1 {
                w.write_record([format!("{t:.17e}"), format!("{:.17e}", self.xs[i]), format!("{:.17e}", self.get(n, i))])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Gnuplot `nonuniform matrix`: header row of `x`, then `t` followed by `u(t, ·)`.
    pub fn write_gnuplot<W: Write>(&self, mut out: W) -> Result<()> {
        let (lo, hi) = self.inner;
        write!(out, "{}", hi - lo + 1)?;
        for x in &self.xs[lo..=hi] {
            write!(out, " {x:.17e}")?;
        }
        writeln!(out)?;
        for (n, t) in self.times.iter().enumerate() {
            write!(out, "{t:.17e}")?;
            for v in &self.row(n)[lo..=hi] {
                write!(out, " {v:.17e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Solves `a_i u_{i−1} + d_i u_i + c_i u_{i+1} = r_i` in place.
fn thomas(a: &[f64], d: &mut [f64], c: &[f64], r: &mut [f64]) {
    let n = d.len();
    for i in 1..n {
        let w = a[i] / d[i - 1];
        d[i] -= w * c[i - 1];
        r[i] -= w * r[i - 1];
    }
    r[n - 1] /= d[n - 1];
    for i in (0..n - 1).rev() {
        r[i] = (r[i] - c[i] * r[i + 1]) / d[i];
    }
}

const GOLDEN_ITERS: usize = 40;

/// Minimum of `phi` on `[lo, hi]` over the endpoints, zero and a golden-section search.
fn interval_min(phi: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let mut best = phi(lo).min(phi(hi));
    if lo < 0.0 && hi > 0.0 {
        best = best.min(phi(0.0));
    }
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (phi(x1), phi(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = phi(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = phi(x2);
        }
    }
    best.min(f1).min(f2)
}

fn slope(phi: &dyn Fn(f64) -> f64, p: f64) -> f64 {
    let d = 1e-6 * (1.0 + p.abs());
    (phi(p + d) - phi(p - d)) / (2.0 * d)
}

/// Backward Euler in the linear part with upwinded drift and an explicit
/// Godunov flux for the driver in `p = u_x`.
pub fn solve_pde(model: &SdeModel, spec: &GeneratorSpec, g: &TerminalFn, grid: &PdeGrid) -> Result<PdeSolution> {
    grid.validate()?;
    let h = grid.dx();
    let dt = grid.dt();
    let span = grid.horizon - grid.t0;
    let sig = [grid.x_min, grid.x_max, 0.0]
        .iter()
        .flat_map(|&x| [grid.t0, grid.horizon].map(|t| model.sigma(t, x).abs()))
        .fold(0.0, f64::max);
    let pad = (grid.padding * sig * span.sqrt() / h).ceil() as usize;
    let nxs = grid.nx + 2 * pad;
    let xs: Vec<f64> = (0..nxs).map(|i| grid.x_min + (i as f64 - pad as f64) * h).collect();
    let times: Vec<f64> = (0..=grid.nt).map(|n| grid.t0 + n as f64 * dt).collect();
    let mut u = vec![0.0; (grid.nt + 1) * nxs];
    let last = grid.nt * nxs;
    for (i, x) in xs.iter().enumerate() {
        u[last + i] = g(*x);
    }
    if let Some(i) = u[last..].iter().position(|v| !v.is_finite()) {
        return Err(Error::PdeBlowup { t: grid.horizon, x: xs[i] });
    }
    let mut max_cfl = 0.0_f64;
    for n in (0..grid.nt).rev() {
        let t = times[n];
        let next = u[(n + 1) * nxs..(n + 2) * nxs].to_vec();
        let inner: Vec<(f64, f64)> = (1..nxs - 1)
            .into_par_iter()
            .map(|i| {
                let x = xs[i];
                let s = model.sigma(t, x);
                let y = next[i];
                let phi = |p: f64| spec.eval(t, x, y, s * p);
                let pm = (next[i] - next[i - 1]) / h;
                let pp = (next[i + 1] - next[i]) / h;
                let flux = if pm <= pp { phi(pm).max(phi(pp)) } else { interval_min(&phi, pp, pm) };
                let cfl = dt * (slope(&phi, pm).abs() + slope(&phi, pp).abs()) / h;
                (y + dt * flux, cfl)
            })
            .collect();
        let step_cfl = inner.iter().map(|v| v.1).fold(0.0, f64::max);
        if step_cfl > 1.0 + 1e-9 {
            let i = inner.iter().position(|v| v.1 == step_cfl).unwrap_or(0) + 1;
            return Err(Error::Cfl(format!(
                "Δt·|∂H/∂p|/Δx = {step_cfl:.3} > 1 at t = {t}, x = {}; increase nt",
                xs[i]
            )));
        }
        max_cfl = max_cfl.max(step_cfl);
        let mut a = vec![0.0; nxs];
        let mut d = vec![1.0; nxs];
        let mut c = vec![0.0; nxs];
        let mut r = vec![0.0; nxs];
        for i in 1..nxs - 1 {
            let x = xs[i];
            let diff = 0.5 * model.sigma(t, x).powi(2) / (h * h);
            let b = model.b(t, x);
            a[i] = -dt * (diff + (-b).max(0.0) / h);
            c[i] = -dt * (diff + b.max(0.0) / h);
            d[i] = 1.0 - a[i] - c[i];
            r[i] = inner[i - 1].0;
        }
        match grid.boundary {
            Boundary::Dirichlet => {
                r[0] = g(xs[0]);
                r[nxs - 1] = g(xs[nxs - 1]);
                thomas(&a, &mut d, &c, &mut r);
            }
            Boundary::OneSided => solve_one_sided(&mut a, &mut d, &mut c, &mut r),
        }
        if let Some(i) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::PdeBlowup { t, x: xs[i] });
        }
        u[n * nxs..(n + 1) * nxs].copy_from_slice(&r);
    }
    Ok(PdeSolution { times, xs, u, inner: (pad, pad + grid.nx - 1), max_cfl })
}

/// Substitutes `u_0 = 2u_1 − u_2` and `u_{N−1} = 2u_{N−2} − u_{N−3}` into
/// the neighbouring rows and solves the interior system.
fn solve_one_sided(a: &mut [f64], d: &mut [f64], c: &mut [f64], r: &mut [f64]) {
    let n = d.len();
    d[1] += 2.0 * a[1];
    c[1] -= a[1];
    a[1] = 0.0;
    d[n - 2] += 2.0 * c[n - 2];
    a[n - 2] -= c[n - 2];
    c[n - 2] = 0.0;
    let (ai, di, ci, ri) = (&a[1..n - 1], &mut d[1..n - 1], &c[1..n - 1], &mut r[1..n - 1]);
    thomas(ai, di, ci, ri);
    r[0] = 2.0 * r[1] - r[2];
    r[n - 1] = 2.0 * r[n - 2] - r[n - 3];
}

/// `|u(t, x)| ≤ c · max(1, |x|)^q` with the smallest `c` on the unpadded grid.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub q: f64,
    pub c: f64,
    pub at: (f64, f64),
    pub pass: bool,
}

pub fn growth_check(sol: &PdeSolution, q: f64) -> GrowthReport {
    let (mut c, mut at) = (0.0_f64, (sol.times[0], sol.xs[sol.inner.0]));
    for (n, t) in sol.times.iter().enumerate() {
        for i in sol.inner.0..=sol.inner.1 {
            let x = sol.xs[i];
            let r = sol.get(n, i).abs() / x.abs().max(1.0).powf(q);
            if r > c || r.is_nan() {
                c = r;
                at = (*t, x);
            }
        }
    }
    GrowthReport { q, c, at, pass: c.is_finite() }
}

/// Monte Carlo side of the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkConfig {
    pub t0s: Vec<f64>,
    pub x0s: Vec<f64>,
    pub paths: usize,
    /// Steps over the full horizon; shorter spans use proportionally fewer.
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl Default for FkConfig {
    fn default() -> Self {
        FkConfig {
            t0s: vec![0.0, 0.5],
            x0s: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            paths: 10_000,
            steps: 50,
            seed: 7,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FkPoint {
    pub t0: f64,
    pub x0: f64,
    pub u_pde: f64,
    pub y_mc: f64,
    pub se: f64,
    pub diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FkReport {
    pub points: Vec<FkPoint>,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub median_abs: f64,
    pub max_se: f64,
    pub max_cfl: f64,
}

impl FkReport {
    fn new(points: Vec<FkPoint>, max_cfl: f64) -> Self {
        let mut abs: Vec<f64> = points.iter().map(|p| p.diff.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let m = abs.len();
        let median_abs = if m == 0 {
            0.0
        } else if m % 2 == 1 {
            abs[m / 2]
        } else {
            0.5 * (abs[m / 2 - 1] + abs[m / 2])
        };
        FkReport {
            max_abs: abs.last().copied().unwrap_or(0.0),
            mean_abs: abs.iter().sum::<f64>() / m.max(1) as f64,
            median_abs,
            max_se: points.iter().map(|p| p.se).filter(|s| s.is_finite()).fold(0.0, f64::max),
            max_cfl,
            points,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t0", "x0", "u_pde", "y_mc", "se", "diff"])?;
        for p in &self.points {
            w.write_record([p.t0, p.x0, p.u_pde, p.y_mc, p.se, p.diff].map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mc_steps(fk: &FkConfig, grid: &PdeGrid, t0: f64) -> usize {
    ((fk.steps as f64) * (grid.horizon - t0) / (grid.horizon - grid.t0)).round().max(1.0) as usize
}

fn compare_on(
    model: &SdeModel,
    spec: &GeneratorSpec,
    g: &TerminalFn,
    growth: (f64, f64),
    pde: &PdeSolution,
    fk: &FkConfig,
    bundles: &[PathBundle],
) -> Result<FkReport> {
    let mut points = Vec::with_capacity(fk.t0s.len() * fk.x0s.len());
    for (b, &t0) in bundles.iter().zip(&fk.t0s) {
        for &x0 in &fk.x0s {
            let start = SdeModel { x0, t0, ..model.clone() };
            let xi = TerminalCondition::of_state(start, "g(X_T)", g.clone(), growth);
            let sol = solve_bsde(spec, &xi, b, &fk.solver)?;
            let u_pde = pde.value(t0, x0);
            points.push(FkPoint { t0, x0, u_pde, y_mc: sol.y0, se: sol.y0_se, diff: u_pde - sol.y0 });
        }
    }
    Ok(FkReport::new(points, pde.max_cfl))
}

fn check_lattice(grid: &PdeGrid, fk: &FkConfig) -> Result<()> {
    if fk.t0s.iter().any(|t| !(*t >= grid.t0 && *t < grid.horizon)) {
        return Err(precondition("every t0 must lie in [t0, horizon) of the PDE grid"));
    }
    if fk.x0s.iter().any(|x| !(*x >= grid.x_min && *x <= grid.x_max)) {
        return Err(precondition("every x0 must lie in [x_min, x_max]"));
    }
    Ok(())
}

/// `u(t₀, x₀)` from the PDE against `Y_{t₀}^{t₀, x₀}` from the BSDE on a lattice.
pub fn feynman_kac_compare(
    model: &SdeModel,
    spec: &GeneratorSpec,
    g: &TerminalFn,
    growth: (f64, f64),
    grid: &PdeGrid,
    fk: &FkConfig,
) -> Result<FkReport> {
    check_lattice(grid, fk)?;
    let pde = solve_pde(model, spec, g, grid)?;
    let bundles = fk
        .t0s
        .iter()
        .map(|&t0| sample_brownian(&TimeGrid::uniform(t0, grid.horizon, mc_steps(fk, grid, t0))?, fk.paths, 1, fk.seed))
        .collect::<Result<Vec<_>>>()?;
    compare_on(model, spec, g, growth, &pde, fk, &bundles)
}

/// Base and refined comparisons on nested noise.
#[derive(Debug, Clone, Serialize)]
pub struct FkRefinement {
    pub coarse: FkReport,
    pub fine: FkReport,
    /// `median_coarse / median_fine`
    pub ratio: f64,
    /// `max |diff_coarse − diff_fine|` over the lattice.
    pub allowance: f64,
    /// `fine.max_abs ≤ 3·SE + allowance`
    pub within_tolerance: bool,
    pub pass: bool,
}

/// Minimum median shrink factor per refinement.
pub const FK_REFINEMENT_RATIO: f64 = 1.2;

/// Runs the comparison at `grid`/`fk.steps` and at both resolutions halved.
pub fn feynman_kac_refinement(
    model: &SdeModel,
    spec: &GeneratorSpec,
    g: &TerminalFn,
    growth: (f64, f64),
    grid: &PdeGrid,
    fk: &FkConfig,
) -> Result<FkRefinement> {
    check_lattice(grid, fk)?;
    let fine_fk = FkConfig { steps: 2 * fk.steps, ..fk.clone() };
    let fine_bundles = fk
        .t0s
        .iter()
        .map(|&t0| {
            sample_brownian(&TimeGrid::uniform(t0, grid.horizon, mc_steps(&fine_fk, grid, t0))?, fk.paths, 1, fk.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let coarse_bundles = fine_bundles
        .iter()
        .map(|b| if b.grid.n_steps() % 2 == 0 { b.coarsen(2) } else { Ok(b.clone()) })
        .collect::<Result<Vec<_>>>()?;
    let coarse_pde = solve_pde(model, spec, g, grid)?;
    let fine_pde = solve_pde(model, spec, g, &grid.refined())?;
    let coarse = compare_on(model, spec, g, growth, &coarse_pde, fk, &coarse_bundles)?;
    let fine = compare_on(model, spec, g, growth, &fine_pde, &fine_fk, &fine_bundles)?;
    let allowance =
        coarse.points.iter().zip(&fine.points).map(|(a, b)| (a.diff - b.diff).abs()).fold(0.0, f64::max);
    let ratio = if fine.median_abs > 0.0 { coarse.median_abs / fine.median_abs } else { f64::INFINITY };
    let within_tolerance = fine.max_abs <= 3.0 * fine.max_se + allowance;
    Ok(FkRefinement { pass: within_tolerance && ratio >= FK_REFINEMENT_RATIO, coarse, fine, ratio, allowance, within_tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::IntegrableCoefficient;
    use crate::generator::{GeneratorConfig, TermConfig};
    use crate::pure::solve_pure_exact_with;
    use std::sync::Arc;

    fn identity() -> TerminalFn {
        Arc::new(|x| x)
    }

    fn decay(r: f64) -> GeneratorSpec {
        GeneratorConfig { f1: vec![TermConfig::Linear { a: 0.0, b: -r, c: 0.0, d: 0.0 }], ..Default::default() }
            .build()
            .unwrap()
    }

    #[test]
    fn thomas_solves_a_known_system() {
        let (a, c) = ([0.0, 1.0, 1.0], [1.0, 1.0, 0.0]);
        let mut d = [4.0, 4.0, 4.0];
        let mut r = [5.0, 6.0, 5.0];
        thomas(&a, &mut d, &c, &mut r);
        for v in r {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_is_preserved_without_driver() {
        for boundary in [Boundary::Dirichlet, Boundary::OneSided] {
            let grid = PdeGrid { boundary, ..PdeGrid::default() };
            let s = solve_pde(&SdeModel::brownian(0.0, 0.0), &GeneratorSpec::zero(), &identity(), &grid).unwrap();
            let err = s.u.iter().zip(s.xs.iter().cycle()).map(|(u, x)| (u - x).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{boundary:?} {err}");
        }
    }

    #[test]
    fn linear_decay_matches_closed_form() {
        let r = 0.5;
        let s = solve_pde(&SdeModel::brownian(0.0, 0.0), &decay(r), &identity(), &PdeGrid::default()).unwrap();
        let mut worst = 0.0_f64;
        for (n, t) in s.times.iter().enumerate() {
            for i in s.inner.0..=s.inner.1 {
                worst = worst.max((s.get(n, i) - (-r * (1.0 - t)).exp() * s.xs[i]).abs());
            }
        }
        assert!(worst < 5e-3, "{worst}");
        let gr = growth_check(&s, 1.0);
        assert!((gr.c - 1.0).abs() < 1e-12);
        let k = solve_pde(&SdeModel::brownian(0.0, 0.0), &GeneratorSpec::zero(), &(Arc::new(|_| -3.0) as TerminalFn), &PdeGrid::default()).unwrap();
        assert!((growth_check(&k, 0.0).c - 3.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_driver_matches_heat_transform() {
        let f = IntegrableCoefficient::indicator(0.5, 1.0).unwrap();
        let spec = GeneratorSpec::pure_quadratic(&f);
        let grid = PdeGrid::default();
        let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let tg = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
        let exact = solve_pure_exact_with(&f, &TerminalCondition::brownian(), &tg, &xs, 1e-3).unwrap();
        let mut errs = Vec::new();
        for g in [grid, grid.refined()] {
            let s = solve_pde(&SdeModel::brownian(0.0, 0.0), &spec, &identity(), &g).unwrap();
            let e = (0..2)
                .flat_map(|k| xs.iter().enumerate().map(move |(j, x)| (k, j, *x)))
                .map(|(k, j, x)| (s.value(tg.times()[k], x) - exact.get(k, j)).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[0] < 2e-2 && errs[1] < errs[0] / 1.2, "{errs:?}");
    }

    #[test]
    fn transform_commutes_with_the_scheme() {
        let f = IntegrableCoefficient::indicator(0.5, 1.0).unwrap();
        let table = crate::coeff::u_table(&f).unwrap();
        let grid = PdeGrid::default().refined();
        let m = SdeModel::brownian(0.0, 0.0);
        let direct = solve_pde(&m, &GeneratorSpec::pure_quadratic(&f), &identity(), &grid).unwrap();
        let tg: TerminalFn = {
            let t = table.clone();
            Arc::new(move |x| t.value(x))
        };
        let heat = solve_pde(&m, &GeneratorSpec::zero(), &tg, &grid).unwrap();
        let worst = (direct.inner.0..=direct.inner.1)
            .map(|i| (direct.get(0, i) - table.invert(heat.get(0, i))).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-2, "{worst}");
    }

    #[test]
    fn ordered_data_give_ordered_solutions() {
        let m = SdeModel::brownian(0.0, 0.0);
        let f = IntegrableCoefficient::indicator(0.5, 1.0).unwrap();
        let lo = solve_pde(&m, &decay(0.5), &identity(), &PdeGrid::default()).unwrap();
        let hi_spec = decay(0.5).plus_f2("quad", Arc::new(move |_, _, y, z| f.eval(y) * z * z));
        let g2: TerminalFn = Arc::new(|x| x + 0.1);
        let hi = solve_pde(&m, &hi_spec, &g2, &PdeGrid::default()).unwrap();
        assert!(lo.u.iter().zip(&hi.u).all(|(a, b)| a <= &(b + 1e-12)));
    }

    #[test]
    fn cfl_violation_is_reported() {
        let f = IntegrableCoefficient::indicator(0.5, 1.0).unwrap();
        let grid = PdeGrid { nt: 5, nx: 401, ..PdeGrid::default() };
        let e = solve_pde(&SdeModel::brownian(0.0, 0.0), &GeneratorSpec::pure_quadratic(&f), &identity(), &grid);
        assert!(matches!(e, Err(Error::Cfl(_))));
    }

    #[test]
    fn linear_case_agrees_with_monte_carlo() {
        let r = 0.5;
        let fk = FkConfig { paths: 2000, steps: 50, ..FkConfig::default() };
        let rep = feynman_kac_compare(&SdeModel::brownian(0.0, 0.0), &decay(r), &identity(), (1.0, 1.0), &PdeGrid::default(), &fk)
            .unwrap();
        assert!(rep.max_abs < 1e-2, "{rep:?}");
        for p in &rep.points {
            assert!((p.y_mc - (-r * (1.0 - p.t0)).exp() * p.x0).abs() < 1e-2);
        }
    }
}
