//! Integrable quadratic coefficients and the exponential change of variables
//! that removes an `f(y)|z|^2` term from a BSDE driver.
//!
//! For a coefficient `f` (integrable, bounded on compacts) we tabulate
//!
//! ```text
//! u(x) = ∫_0^x exp(2 ∫_0^y f(s) ds) dy,        M = exp(2 ∫ |f|)
//! v(x) = ∫_0^|x| u^{-f}(y) exp(2 ∫_0^y f(s) ds) dy
//! ```
//!
//! `u` is a C¹ increasing bijection with `u'' = 2 f u'` a.e. and
//! `|x|/M ≤ |u(x)| ≤ M|x|`, `1/M ≤ u' ≤ M`. `v` is even, nonnegative and
//! solves `v'' − 2 f(|x|) |v'| = 1` a.e.
//!
//! Tables are built by nested adaptive Gauss–Kronrod quadrature on a grid that
//! contains 0 and every discontinuity of `f`, and are evaluated by cubic
//! Hermite interpolation using the exact nodal derivatives.

use std::cell::Cell;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::quadrature::{integrate, integrate_piecewise};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Absolute tolerance of every inner quadrature.
pub const INNER_TOL: f64 = 1e-12;
/// Node count used when a caller does not care.
pub const DEFAULT_RESOLUTION: usize = 4001;

/// Serializable description of the built-in coefficient families.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientConfig {
    #[default]
    Zero,
    /// `c · 1_{[-a, a]}`
    Indicator { c: f64, a: f64 },
    /// Piecewise constant: `c_i` on `[lo_i, hi_i)`, zero elsewhere.
    Steps { pieces: Vec<StepPiece> },
    /// `c · exp(-x² / (2 s²))`
    Gaussian { c: f64, s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepPiece {
    pub lo: f64,
    pub hi: f64,
    pub c: f64,
}

impl CoefficientConfig {
    pub fn build(&self) -> Result<IntegrableCoefficient> {
        match self {
            CoefficientConfig::Zero => Ok(IntegrableCoefficient::zero()),
            CoefficientConfig::Indicator { c, a } => IntegrableCoefficient::indicator(*c, *a),
            CoefficientConfig::Steps { pieces } => IntegrableCoefficient::steps(
                &pieces.iter().map(|p| (p.lo, p.hi, p.c)).collect::<Vec<_>>(),
            ),
            CoefficientConfig::Gaussian { c, s } => IntegrableCoefficient::gaussian(*c, *s),
        }
    }
}

/// A coefficient of class 𝓘: integrable on ℝ and bounded on every compact.
#[derive(Clone)]
pub struct IntegrableCoefficient {
    label: String,
    eval: ScalarFn,
    support_radius: f64,
    effective_radius: f64,
    total_abs_mass: f64,
    breakpoints: Vec<f64>,
    compact_bound: ScalarFn,
}

impl fmt::Debug for IntegrableCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntegrableCoefficient")
            .field("label", &self.label)
            .field("support_radius", &self.support_radius)
            .field("total_abs_mass", &self.total_abs_mass)
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl IntegrableCoefficient {
    /// Fully custom coefficient. `support_radius` may be infinite, in which
    /// case `effective_radius` must bound the region carrying all but a
    /// negligible part of the mass.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        label: impl Into<String>,
        eval: ScalarFn,
        support_radius: f64,
        effective_radius: f64,
        total_abs_mass: f64,
        breakpoints: Vec<f64>,
        compact_bound: ScalarFn,
    ) -> Result<Self> {
        if !(support_radius >= 0.0) {
            return Err(precondition("support radius must be nonnegative"));
        }
        if !(effective_radius.is_finite() && effective_radius >= 0.0) {
            return Err(precondition("effective radius must be finite and nonnegative"));
        }
        if !(total_abs_mass.is_finite() && total_abs_mass >= 0.0) {
            return Err(precondition("total absolute mass must be finite"));
        }
        let mut breakpoints = breakpoints;
        breakpoints.retain(|b| b.is_finite());
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        Ok(IntegrableCoefficient {
            label: label.into(),
            eval,
            support_radius,
            effective_radius,
            total_abs_mass,
            breakpoints,
            compact_bound,
        })
    }

    pub fn zero() -> Self {
        IntegrableCoefficient {
            label: "zero".into(),
            eval: Arc::new(|_| 0.0),
            support_radius: 0.0,
            effective_radius: 0.0,
            total_abs_mass: 0.0,
            breakpoints: Vec::new(),
            compact_bound: Arc::new(|_| 0.0),
        }
    }

    /// `c · 1_{[-a, a]}`, closed interval.
    pub fn indicator(c: f64, a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite() && c.is_finite()) {
            return Err(precondition("indicator needs finite c and a > 0"));
        }
        Self::custom(
            format!("{c}*1[-{a},{a}]"),
            Arc::new(move |x: f64| if x.abs() <= a { c } else { 0.0 }),
            a,
            a,
            2.0 * a * c.abs(),
            vec![-a, a],
            Arc::new(move |_| c.abs()),
        )
    }

    /// Piecewise constant coefficient from `(lo, hi, c)` triples on `[lo, hi)`.
    pub fn steps(pieces: &[(f64, f64, f64)]) -> Result<Self> {
        if pieces.is_empty() {
            return Ok(Self::zero());
        }
        for &(lo, hi, c) in pieces {
            if !(lo < hi && lo.is_finite() && hi.is_finite() && c.is_finite()) {
                return Err(precondition(format!("bad step piece [{lo}, {hi}) -> {c}")));
            }
        }
        let mut sorted = pieces.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if sorted.windows(2).any(|w| w[0].1 > w[1].0) {
            return Err(precondition("step pieces overlap"));
        }
        let radius = sorted
            .iter()
            .map(|p| p.0.abs().max(p.1.abs()))
            .fold(0.0, f64::max);
        let mass = sorted.iter().map(|p| (p.1 - p.0) * p.2.abs()).sum();
        let breaks = sorted.iter().flat_map(|p| [p.0, p.1]).collect();
        let label = sorted
            .iter()
            .map(|p| format!("{}@[{},{})", p.2, p.0, p.1))
            .collect::<Vec<_>>()
            .join("+");
        let for_eval = sorted.clone();
        let for_bound = sorted;
        Self::custom(
            label,
            Arc::new(move |x| {
                for_eval
                    .iter()
                    .find(|p| x >= p.0 && x < p.1)
                    .map_or(0.0, |p| p.2)
            }),
            radius,
            radius,
            mass,
            breaks,
            Arc::new(move |r| {
                for_bound
                    .iter()
                    .filter(|p| p.1 > -r && p.0 <= r)
                    .map(|p| p.2.abs())
                    .fold(0.0, f64::max)
            }),
        )
    }

    /// `c · exp(-x²/(2s²))`; unbounded support, tail mass beyond `12 s` is
    /// below double precision.
    pub fn gaussian(c: f64, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite() && c.is_finite()) {
            return Err(precondition("gaussian coefficient needs s > 0"));
        }
        Self::custom(
            format!("{c}*gauss({s})"),
            Arc::new(move |x: f64| c * (-0.5 * (x / s).powi(2)).exp()),
            f64::INFINITY,
            12.0 * s,
            c.abs() * s * (2.0 * std::f64::consts::PI).sqrt(),
            Vec::new(),
            Arc::new(move |_| c.abs()),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Radius outside of which the coefficient is (numerically) zero.
    pub fn effective_radius(&self) -> f64 {
        self.effective_radius
    }

    pub fn total_abs_mass(&self) -> f64 {
        self.total_abs_mass
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `sup_{|x| ≤ r} |f(x)|`.
    pub fn compact_bound(&self, r: f64) -> f64 {
        (self.compact_bound)(r)
    }

    /// `M^f = exp(2 ∫ |f|)`.
    pub fn mass_constant(&self) -> f64 {
        (2.0 * self.total_abs_mass).exp()
    }

    pub fn is_zero(&self) -> bool {
        self.total_abs_mass == 0.0
    }

    /// `k · f`.
    pub fn scaled(&self, k: f64) -> Self {
        let inner = self.eval.clone();
        let bound = self.compact_bound.clone();
        IntegrableCoefficient {
            label: format!("{k}*({})", self.label),
            eval: Arc::new(move |x| k * inner(x)),
            support_radius: self.support_radius,
            effective_radius: self.effective_radius,
            total_abs_mass: k.abs() * self.total_abs_mass,
            breakpoints: self.breakpoints.clone(),
            compact_bound: Arc::new(move |r| k.abs() * bound(r)),
        }
    }

    /// `x ↦ f(|x|)`. The mass is recomputed by quadrature on the half line.
    pub fn even_part(&self) -> Self {
        let inner = self.eval.clone();
        let bound = self.compact_bound.clone();
        let mut breaks: Vec<f64> = self
            .breakpoints
            .iter()
            .filter(|b| **b > 0.0)
            .flat_map(|&b| [-b, b])
            .collect();
        breaks.sort_by(f64::total_cmp);
        let half_mass = integrate_piecewise(
            |x| self.eval(x).abs(),
            0.0,
            self.effective_radius,
            &self.breakpoints,
            INNER_TOL,
        )
        .value;
        IntegrableCoefficient {
            label: format!("({})(|x|)", self.label),
            eval: Arc::new(move |x: f64| inner(x.abs())),
            support_radius: self.support_radius,
            effective_radius: self.effective_radius,
            total_abs_mass: 2.0 * half_mass,
            breakpoints: breaks,
            compact_bound: Arc::new(move |r| bound(r)),
        }
    }

    /// `x ↦ max(|f(|x|)|, |f(-|x|)|)`: the smallest even nonnegative
    /// function dominating `|f|`.
    pub fn even_envelope(&self) -> Self {
        let inner = self.eval.clone();
        let bound = self.compact_bound.clone();
        let mut breaks: Vec<f64> = self.breakpoints.iter().flat_map(|&b| [-b.abs(), b.abs()]).collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let eval: ScalarFn = Arc::new(move |x: f64| inner(x.abs()).abs().max(inner(-x.abs()).abs()));
        let r = self.effective_radius;
        let half_breaks: Vec<f64> = breaks.iter().copied().filter(|b| *b > 0.0).collect();
        let half_mass = integrate_piecewise(|x| eval(x), 0.0, r, &half_breaks, INNER_TOL).value;
        IntegrableCoefficient {
            label: format!("env({})", self.label),
            eval,
            support_radius: self.support_radius,
            effective_radius: r,
            total_abs_mass: 2.0 * half_mass,
            breakpoints: breaks,
            compact_bound: Arc::new(move |r| bound(r)),
        }
    }

    /// Pointwise sum; the mass is recomputed by quadrature.
    pub fn sum(parts: &[IntegrableCoefficient]) -> Self {
        match parts.len() {
            0 => return Self::zero(),
            1 => return parts[0].clone(),
            _ => {}
        }
        let evals: Vec<ScalarFn> = parts.iter().map(|p| p.eval.clone()).collect();
        let bounds: Vec<ScalarFn> = parts.iter().map(|p| p.compact_bound.clone()).collect();
        let mut breaks: Vec<f64> = parts.iter().flat_map(|p| p.breakpoints.iter().copied()).collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut out = IntegrableCoefficient {
            label: parts.iter().map(|p| p.label.as_str()).collect::<Vec<_>>().join(" + "),
            eval: Arc::new(move |x| evals.iter().map(|e| e(x)).sum()),
            support_radius: parts.iter().map(|p| p.support_radius).fold(0.0, f64::max),
            effective_radius: parts.iter().map(|p| p.effective_radius).fold(0.0, f64::max),
            total_abs_mass: 0.0,
            breakpoints: breaks,
            compact_bound: Arc::new(move |r| bounds.iter().map(|b| b(r)).sum()),
        };
        out.total_abs_mass = out.integrate_abs();
        out
    }

    /// Numerically integrates `|f|` over the effective support.
    pub fn integrate_abs(&self) -> f64 {
        let r = self.effective_radius;
        integrate_piecewise(|x| self.eval(x).abs(), -r, r, &self.breakpoints, INNER_TOL).value
    }

    /// Checks the declared mass against quadrature; returns the discrepancy.
    pub fn mass_discrepancy(&self) -> f64 {
        (self.integrate_abs() - self.total_abs_mass).abs()
    }
}

/// Which of the two transforms a table holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    U,
    V,
}

/// A tabulated `u^f` or `v^f`.
#[derive(Clone)]
pub struct TransformTable {
    kind: TransformKind,
    source: IntegrableCoefficient,
    nodes: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
    mass_constant: f64,
}

impl fmt::Debug for TransformTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransformTable")
            .field("kind", &self.kind)
            .field("source", &self.source.label)
            .field("nodes", &self.nodes.len())
            .field("domain", &(self.nodes[0], self.nodes[self.nodes.len() - 1]))
            .field("mass_constant", &self.mass_constant)
            .finish()
    }
}

/// Watches integrand evaluations for the first non-finite value.
struct Guard<'a> {
    f: &'a IntegrableCoefficient,
    bad: Cell<Option<f64>>,
}

impl<'a> Guard<'a> {
    fn new(f: &'a IntegrableCoefficient) -> Self {
        Guard { f, bad: Cell::new(None) }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let v = self.f.eval(x);
        if v.is_finite() {
            v
        } else {
            if self.bad.get().is_none() {
                self.bad.set(Some(x));
            }
            0.0
        }
    }

    fn check(&self) -> Result<()> {
        match self.bad.get() {
            Some(x) => Err(Error::CoefficientEvaluation { label: self.f.label.clone(), x }),
            None => Ok(()),
        }
    }

    /// `∫_a^b f`, signed.
    fn integral(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        integrate(|s| self.eval(s), a, b, INNER_TOL, 0.0, 60).value
    }
}

/// Uniform nodes over `[lo, hi]` with 0 and the breakpoints snapped in.
fn table_nodes(lo: f64, hi: f64, resolution: usize, breakpoints: &[f64]) -> Vec<f64> {
    let h = (hi - lo) / (resolution - 1) as f64;
    let mut special: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi)
        .collect();
    special.push(0.0);
    let mut nodes: Vec<f64> = (0..resolution)
        .map(|i| if i + 1 == resolution { hi } else { lo + h * i as f64 })
        .filter(|x| {
            *x == lo || *x == hi || special.iter().all(|s| (s - x).abs() > 0.25 * h)
        })
        .collect();
    nodes.extend(special.iter().copied().filter(|&s| s >= lo && s <= hi));
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    nodes
}

fn validate_domain(domain: (f64, f64), resolution: usize) -> Result<()> {
    let (lo, hi) = domain;
    if resolution < 2 {
        return Err(precondition("table resolution must be at least 2"));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(precondition(format!("bad table domain [{lo}, {hi}]")));
    }
    if !(lo <= 0.0 && hi >= 0.0) {
        return Err(precondition(format!("table domain [{lo}, {hi}] must contain 0")));
    }
    Ok(())
}

/// Tabulates `u^f` on `domain`.
pub fn build_u(f: &IntegrableCoefficient, domain: (f64, f64), resolution: usize) -> Result<TransformTable> {
    validate_domain(domain, resolution)?;
    let nodes = table_nodes(domain.0, domain.1, resolution, &f.breakpoints);
    let n = nodes.len();
    let zero = nodes.iter().position(|&x| x == 0.0).expect("0 is always a node");
    let guard = Guard::new(f);

    // primitive F(x) = ∫_0^x f and u(x) = ∫_0^x exp(2F)
    let mut prim = vec![0.0; n];
    let mut values = vec![0.0; n];
    let cell = |anchor: f64, anchor_prim: f64, a: f64, b: f64| -> f64 {
        integrate(
            |y| (2.0 * (anchor_prim + guard.integral(anchor, y))).exp(),
            a,
            b,
            INNER_TOL,
            1e-15,
            60,
        )
        .value
    };
    for k in zero..n - 1 {
        let (a, b) = (nodes[k], nodes[k + 1]);
        prim[k + 1] = prim[k] + guard.integral(a, b);
        values[k + 1] = values[k] + cell(a, prim[k], a, b);
    }
    for k in (1..=zero).rev() {
        let (a, b) = (nodes[k - 1], nodes[k]);
        prim[k - 1] = prim[k] - guard.integral(a, b);
        values[k - 1] = values[k] - cell(b, prim[k], a, b);
    }
    guard.check()?;
    let derivs = prim.iter().map(|p| (2.0 * p).exp()).collect();
    Ok(TransformTable {
        kind: TransformKind::U,
        source: f.clone(),
        nodes,
        values,
        derivs,
        mass_constant: f.mass_constant(),
    })
}

/// Tabulates `v^f` where `f_abs` is the coefficient that appears as `f(|y|)`
/// in the driver. Only the values of `f_abs` on `[0, ∞)` are used.
pub fn build_v(f_abs: &IntegrableCoefficient, domain: (f64, f64), resolution: usize) -> Result<TransformTable> {
    validate_domain(domain, resolution)?;
    let radius = domain.0.abs().max(domain.1.abs());
    let half_res = resolution.div_ceil(2).max(2);
    let breaks: Vec<f64> = f_abs.breakpoints.iter().map(|b| b.abs()).collect();
    let half = table_nodes(0.0, radius, half_res, &breaks);
    let m = half.len();
    let guard = Guard::new(f_abs);

    // G = ∫_0^y f,  U(y) = ∫_0^y exp(-2G) = u^{-f}(y),  v = ∫_0^y U exp(2G)
    let mut prim = vec![0.0; m];
    let mut u_minus = vec![0.0; m];
    let mut vals = vec![0.0; m];
    for k in 0..m - 1 {
        let (a, b) = (half[k], half[k + 1]);
        let (g0, u0) = (prim[k], u_minus[k]);
        let g_at = |y: f64| g0 + guard.integral(a, y);
        let u_at = |y: f64| {
            u0
                + integrate(|s| (-2.0 * g_at(s)).exp(), a, y, INNER_TOL, 1e-15, 30).value
        };
        prim[k + 1] = g_at(b);
        u_minus[k + 1] = u_at(b);
        vals[k + 1] = vals[k]
            + integrate(|y| u_at(y) * (2.0 * g_at(y)).exp(), a, b, INNER_TOL, 1e-15, 30).value;
    }
    guard.check()?;
    let half_derivs: Vec<f64> = (0..m).map(|k| u_minus[k] * (2.0 * prim[k]).exp()).collect();

    let mut nodes = Vec::with_capacity(2 * m - 1);
    let mut values = Vec::with_capacity(2 * m - 1);
    let mut derivs = Vec::with_capacity(2 * m - 1);
    for k in (1..m).rev() {
        nodes.push(-half[k]);
        values.push(vals[k]);
        derivs.push(-half_derivs[k]);
    }
    for k in 0..m {
        nodes.push(half[k]);
        values.push(vals[k]);
        derivs.push(half_derivs[k]);
    }
    Ok(TransformTable {
        kind: TransformKind::V,
        source: f_abs.clone(),
        nodes,
        values,
        derivs,
        mass_constant: f_abs.mass_constant(),
    })
}

/// Symmetric table domain covering the coefficient's support plus `margin`.
pub fn default_domain(f: &IntegrableCoefficient, margin: f64) -> (f64, f64) {
    let r = f.effective_radius() + margin.max(1.0);
    (-r, r)
}

impl TransformTable {
    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn source(&self) -> &IntegrableCoefficient {
        &self.source
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivs(&self) -> &[f64] {
        &self.derivs
    }

    pub fn mass_constant(&self) -> f64 {
        self.mass_constant
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    /// Value and derivative at `x`. Beyond the table `u` continues linearly
    /// and `v` quadratically with unit curvature, both exact once the table
    /// covers the support of the coefficient.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let n = self.nodes.len();
        let (lo, hi) = self.domain();
        if x < lo || x > hi {
            let (k, dx) = if x < lo { (0, x - lo) } else { (n - 1, x - hi) };
            return match self.kind {
                TransformKind::U => (self.values[k] + self.derivs[k] * dx, self.derivs[k]),
                TransformKind::V => (
                    self.values[k] + self.derivs[k] * dx + 0.5 * dx * dx,
                    self.derivs[k] + dx,
                ),
            };
        }
        let k = match self.nodes.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(k) => return (self.values[k], self.derivs[k]),
            Err(k) => k - 1,
        };
        hermite(
            self.nodes[k],
            self.nodes[k + 1],
            self.values[k],
            self.values[k + 1],
            self.derivs[k],
            self.derivs[k + 1],
            x,
        )
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        self.eval(x).1
    }

    /// `u^{-1}(y)`. Only meaningful for `u` tables.
    pub fn invert(&self, y: f64) -> f64 {
        debug_assert_eq!(self.kind, TransformKind::U, "only u tables are invertible");
        let n = self.nodes.len();
        if y <= self.values[0] {
            return self.nodes[0] + (y - self.values[0]) / self.derivs[0];
        }
        if y >= self.values[n - 1] {
            return self.nodes[n - 1] + (y - self.values[n - 1]) / self.derivs[n - 1];
        }
        let k = match self.values.binary_search_by(|p| p.total_cmp(&y)) {
            Ok(k) => return self.nodes[k],
            Err(k) => k - 1,
        };
        let (mut a, mut b) = (self.nodes[k], self.nodes[k + 1]);
        let tol = 1e-15 * y.abs().max(1.0);
        // Newton from the secant guess, falling back to bisection.
        let mut x = a + (y - self.values[k]) * (b - a) / (self.values[k + 1] - self.values[k]);
        for _ in 0..100 {
            let (p, dp) = self.eval(x);
            let r = p - y;
            if r.abs() <= tol {
                return x;
            }
            if r > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let newton = x - r / dp;
            x = if dp > 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if b - a <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
                return x;
            }
        }
        x
    }

    /// CSV with columns `x,value,deriv`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "value", "deriv"])?;
        for k in 0..self.nodes.len() {
            w.write_record(&[
                self.nodes[k].to_string(),
                self.values[k].to_string(),
                self.derivs[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cubic Hermite interpolation on `[x0, x1]`.
#[inline]
fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1;
    let deriv = ((6.0 * t2 - 6.0 * t) * (y0 - y1)) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * d0
        + (3.0 * t2 - 2.0 * t) * d1;
    (value, deriv)
}

/// Worst violations of the `u^f` bounds at sampled points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantReport {
    pub points: usize,
    pub mass_constant: f64,
    /// `max(|x|/M − |u|, |u| − M|x|, 0)`
    pub value_violation: f64,
    /// `max(1/M − u', u' − M, 0)`
    pub deriv_violation: f64,
    /// `max |u⁻¹(u(x)) − x|`
    pub round_trip: f64,
}

impl InvariantReport {
    pub fn holds(&self, bound_tol: f64, round_trip_tol: f64) -> bool {
        self.value_violation <= bound_tol && self.deriv_violation <= bound_tol && self.round_trip <= round_trip_tol
    }
}

impl TransformTable {
    /// Samples `points` uniform points of the domain. Only meaningful for `u`.
    pub fn check_invariants(&self, points: usize, seed: u64) -> InvariantReport {
        let m = self.mass_constant;
        let (lo, hi) = self.domain();
        let mut s = crate::rng::Stream::new(seed, 0x7AB1);
        let mut r = InvariantReport { points, mass_constant: m, value_violation: 0.0, deriv_violation: 0.0, round_trip: 0.0 };
        for _ in 0..points {
            let x = s.range(lo, hi);
            let (u, d) = self.eval(x);
            r.value_violation = r.value_violation.max(x.abs() / m - u.abs()).max(u.abs() - m * x.abs());
            r.deriv_violation = r.deriv_violation.max(1.0 / m - d).max(d - m);
            r.round_trip = r.round_trip.max((self.invert(u) - x).abs());
        }
        r
    }
}

/// Convenience: `u^f` on the default domain at the default resolution.
pub fn u_table(f: &IntegrableCoefficient) -> Result<TransformTable> {
    build_u(f, default_domain(f, 1.0), DEFAULT_RESOLUTION)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn half_indicator() -> IntegrableCoefficient {
        IntegrableCoefficient::indicator(0.5, 1.0).unwrap()
    }

    #[test]
    fn sampled_invariants_hold() {
        for f in [IntegrableCoefficient::zero(), half_indicator(), IntegrableCoefficient::indicator(2.0, 1.0).unwrap()] {
            let r = u_table(&f).unwrap().check_invariants(10_000, 1);
            assert!(r.holds(1e-12, 1e-8), "{r:?}");
        }
    }

    #[test]
    fn zero_coefficient_gives_identity() {
        let t = build_u(&IntegrableCoefficient::zero(), (-5.0, 5.0), 101).unwrap();
        assert_eq!(t.mass_constant(), 1.0);
        let (v, d) = t.eval(1.7);
        assert!((v - 1.7).abs() < 1e-14 && (d - 1.0).abs() < 1e-14);
        let (v, d) = t.eval(-2.3);
        assert!((v + 2.3).abs() < 1e-14 && (d - 1.0).abs() < 1e-14);
        assert!((t.invert(4.2) - 4.2).abs() < 1e-14);
    }

    #[test]
    fn indicator_closed_forms() {
        let f = half_indicator();
        let t = build_u(&f, (-4.0, 4.0), 801).unwrap();
        assert!((t.mass_constant() - E * E).abs() < 1e-12);
        assert!((t.value(1.0) - (E - 1.0)).abs() < 1e-12);
        assert!((t.deriv(1.0) - E).abs() < 1e-12);
        assert!((t.value(2.0) - (2.0 * E - 1.0)).abs() < 1e-12);
        // past the table: linear with slope e
        assert!((t.value(5.0) - (E - 1.0 + 4.0 * E)).abs() < 1e-11);
        assert!((t.invert(E - 1.0) - 1.0).abs() < 1e-12);
        assert_eq!(t.invert(0.0), 0.0);
        // inside the support u(x) = e^x - 1; Hermite error is O(h⁴)
        assert!((t.value(0.3337) - (0.3337_f64.exp() - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn nodes_are_reproduced_exactly() {
        let t = build_u(&half_indicator(), (-3.0, 3.0), 61).unwrap();
        for k in [0, 5, 17, t.nodes().len() - 1] {
            assert_eq!(t.eval(t.nodes()[k]), (t.values()[k], t.derivs()[k]));
        }
    }

    #[test]
    fn breakpoints_and_zero_are_nodes() {
        let f = IntegrableCoefficient::steps(&[(-0.37, 0.11, 1.0), (0.11, 1.93, -0.4)]).unwrap();
        let t = build_u(&f, (-3.0, 3.0), 50).unwrap();
        for b in [-0.37, 0.0, 0.11, 1.93] {
            assert!(t.nodes().contains(&b), "{b} missing");
        }
        assert!(t.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn domain_without_zero_is_rejected() {
        let err = build_u(&half_indicator(), (0.5, 2.0), 10).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        assert!(build_u(&half_indicator(), (-1.0, 1.0), 1).is_err());
    }

    #[test]
    fn non_finite_coefficient_is_reported() {
        let f = IntegrableCoefficient::custom(
            "bad",
            Arc::new(|x: f64| if (x - 0.5).abs() < 0.01 { f64::NAN } else { 0.0 }),
            1.0,
            1.0,
            0.0,
            vec![],
            Arc::new(|_| 0.0),
        )
        .unwrap();
        let err = build_u(&f, (-1.0, 1.0), 21).unwrap_err();
        assert!(matches!(err, Error::CoefficientEvaluation { .. }), "{err}");
    }

    #[test]
    fn v_of_zero_is_half_square() {
        let t = build_v(&IntegrableCoefficient::zero(), (-5.0, 5.0), 101).unwrap();
        let (v, d) = t.eval(3.0);
        assert!((v - 4.5).abs() < 1e-13 && (d - 3.0).abs() < 1e-13);
        let (v, d) = t.eval(-3.0);
        assert!((v - 4.5).abs() < 1e-13 && (d + 3.0).abs() < 1e-13);
        // quadratic continuation outside
        let (v, d) = t.eval(7.0);
        assert!((v - 24.5).abs() < 1e-12 && (d - 7.0).abs() < 1e-12);
        assert_eq!(t.eval(0.0), (0.0, 0.0));
    }

    #[test]
    fn v_solves_its_ode_inside_indicator_support() {
        // v'' - 2f(|x|)|v'| = 1 by central differences of the interpolated
        // derivative, which carries an O(h²) error
        let f = half_indicator();
        let t = build_v(&f, (-3.0, 3.0), 601).unwrap();
        for &x in &[0.2, 0.55, 0.8, -0.4, 1.5, 2.2] {
            let h = 1e-4;
            let second = (t.deriv(x + h) - t.deriv(x - h)) / (2.0 * h);
            let resid = second - 2.0 * f.eval(x.abs()) * t.deriv(x).abs() - 1.0;
            assert!(resid.abs() < 1e-4, "x = {x}: residual {resid}");
        }
    }

    #[test]
    fn mass_checks() {
        for f in [
            half_indicator(),
            IntegrableCoefficient::gaussian(0.7, 0.4).unwrap(),
            IntegrableCoefficient::steps(&[(-1.0, 0.0, 0.3), (0.5, 2.0, -0.8)]).unwrap(),
        ] {
            assert!(f.mass_discrepancy() < 1e-10, "{}", f.label());
        }
        let g = IntegrableCoefficient::steps(&[(-1.0, 0.0, 0.3), (0.5, 2.0, -0.8)]).unwrap();
        // f(|x|) only sees the right half: 0.8 on 0.5 ≤ |x| < 2
        let even = g.even_part();
        assert!((even.total_abs_mass() - 2.0 * 1.5 * 0.8).abs() < 1e-10);
        assert_eq!(even.eval(-1.0), -0.8);
    }

    #[test]
    fn envelope_and_sum() {
        let f = IntegrableCoefficient::steps(&[(-2.0, -1.0, 0.5), (0.0, 1.5, -0.25)]).unwrap();
        let env = f.even_envelope();
        assert_eq!(env.eval(1.2), 0.5);
        assert_eq!(env.eval(-0.5), 0.25);
        // per side: 0.25 on [0, 1), 0.5 on [1, 2)
        assert!((env.total_abs_mass() - 1.5).abs() < 1e-10);
        let s = IntegrableCoefficient::sum(&[half_indicator(), half_indicator()]);
        assert_eq!(s.eval(0.3), 1.0);
        assert!((s.total_abs_mass() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn compact_bound_is_monotone() {
        let f = IntegrableCoefficient::steps(&[(0.5, 1.0, 0.2), (2.0, 3.0, -1.5)]).unwrap();
        assert_eq!(f.compact_bound(0.1), 0.0);
        assert_eq!(f.compact_bound(0.7), 0.2);
        assert_eq!(f.compact_bound(2.5), 1.5);
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let t = build_u(&IntegrableCoefficient::zero(), (-1.0, 1.0), 5).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,value,deriv");
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[1], "-1,-1,1");
    }

    #[test]
    fn config_round_trip() {
        let cfg = CoefficientConfig::Steps {
            pieces: vec![StepPiece { lo: -1.0, hi: 0.0, c: 0.25 }],
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: CoefficientConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
