//! Drivers `F = F₁ + F₂` together with their structure constants, sampled
//! verification of the growth/monotonicity conditions, Lipschitz
//! regularization by inf-convolution, and the change of variables that
//! removes an `f(y)|z|²` term.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientConfig, IntegrableCoefficient, TransformTable};
use crate::error::{precondition, Result};
use crate::rng::Stream;

/// `(t, x, y, z) ↦ F`.
pub type DriverFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
/// `(t, x) ↦ α_t`.
pub type AlphaFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type GrowthFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Slack allowed on every sampled structure inequality.
pub const STRUCTURE_TOL: f64 = 1e-9;

/// A driver with the constants `(α, β₁, β₂, γ₁, γ₂, φ, f)` that bound it.
///
/// `f` is evaluated at `|y|`. `F₁` should be monotone in `y` and Lipschitz in
/// `z`; `F₂` carries the quadratic part.
#[derive(Clone)]
pub struct GeneratorSpec {
    pub label: String,
    pub f1: DriverFn,
    pub f2: DriverFn,
    pub alpha: AlphaFn,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub phi: GrowthFn,
    pub f: IntegrableCoefficient,
    pub convex_f2: bool,
    /// Set when `F` does not depend on `(t, x)`.
    pub autonomous: bool,
}

impl std::fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("label", &self.label)
            .field("beta1", &self.beta1)
            .field("beta2", &self.beta2)
            .field("gamma1", &self.gamma1)
            .field("gamma2", &self.gamma2)
            .field("f", &self.f)
            .field("convex_f2", &self.convex_f2)
            .finish()
    }
}

fn zero_driver() -> DriverFn {
    Arc::new(|_, _, _, _| 0.0)
}

impl GeneratorSpec {
    /// `F ≡ 0`.
    pub fn zero() -> Self {
        GeneratorSpec {
            label: "zero".into(),
            f1: zero_driver(),
            f2: zero_driver(),
            alpha: Arc::new(|_, _| 0.0),
            beta1: 0.0,
            beta2: 0.0,
            gamma1: 0.0,
            gamma2: 0.0,
            phi: Arc::new(|_| 0.0),
            f: IntegrableCoefficient::zero(),
            convex_f2: true,
            autonomous: true,
        }
    }

    /// Purely quadratic driver `c(y)|z|²`.
    pub fn pure_quadratic(coeff: &IntegrableCoefficient) -> Self {
        let c = coeff.clone();
        GeneratorSpec {
            label: format!("({})|z|^2", coeff.label()),
            f2: Arc::new(move |_, _, y, z| c.eval(y) * z * z),
            f: coeff.even_envelope(),
            convex_f2: false,
            ..Self::zero()
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64, y: f64, z: f64) -> f64 {
        (self.f1)(t, x, y, z) + (self.f2)(t, x, y, z)
    }

    pub fn driver(&self) -> DriverFn {
        let (a, b) = (self.f1.clone(), self.f2.clone());
        Arc::new(move |t, x, y, z| a(t, x, y, z) + b(t, x, y, z))
    }

    pub fn beta(&self) -> f64 {
        self.beta1 + self.beta2
    }

    pub fn gamma(&self) -> f64 {
        self.gamma1 + self.gamma2
    }

    /// `M^{f(|·|)}`.
    pub fn mass_constant(&self) -> f64 {
        self.f.even_part().mass_constant()
    }

    /// Adds `extra` to `F₂` without touching the declared constants.
    pub fn plus_f2(&self, label: &str, extra: DriverFn) -> Self {
        let base = self.f2.clone();
        GeneratorSpec {
            label: format!("{} + {label}", self.label),
            f2: Arc::new(move |t, x, y, z| base(t, x, y, z) + extra(t, x, y, z)),
            ..self.clone()
        }
    }
}

/// Built-in driver terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TermConfig {
    /// `a + b y + c z + d x`
    Linear {
        #[serde(default)]
        a: f64,
        #[serde(default)]
        b: f64,
        #[serde(default)]
        c: f64,
        #[serde(default)]
        d: f64,
    },
    /// `-c sgn(y) |y|^power`, `c ≥ 0`
    MonotonePoly { c: f64, power: f64 },
    /// `γ |z|`
    ZLipschitz { gamma: f64 },
    /// `coeff(|y|) z²` when `abs_arg`, else `coeff(y) z²`
    Quadratic {
        coeff: CoefficientConfig,
        #[serde(default)]
        abs_arg: bool,
    },
    /// `κ (e^{-λ|z|} - 1 + λ|z|) / λ²`, convex in `z`, `κ ≥ 0`, `λ > 0`
    ExpConvexZ { kappa: f64, lambda: f64 },
}

/// Structure contributed by one term.
struct TermParts {
    eval: DriverFn,
    alpha_const: f64,
    alpha_x: f64,
    beta: f64,
    gamma: f64,
    phi: Vec<(f64, f64)>,
    quad: Option<IntegrableCoefficient>,
    convex: bool,
    autonomous: bool,
}

impl TermConfig {
    fn parts(&self) -> Result<TermParts> {
        let plain = |eval: DriverFn| TermParts {
            eval,
            alpha_const: 0.0,
            alpha_x: 0.0,
            beta: 0.0,
            gamma: 0.0,
            phi: Vec::new(),
            quad: None,
            convex: true,
            autonomous: true,
        };
        Ok(match *self {
            TermConfig::Linear { a, b, c, d } => TermParts {
                alpha_const: a.abs(),
                alpha_x: d.abs(),
                beta: b,
                gamma: c.abs(),
                phi: vec![(b.abs(), 1.0)],
                autonomous: d == 0.0,
                ..plain(Arc::new(move |_, x, y, z| a + b * y + c * z + d * x))
            },
            TermConfig::MonotonePoly { c, power } => {
                if !(c >= 0.0 && power > 0.0) {
                    return Err(precondition("monotone_poly needs c >= 0 and power > 0"));
                }
                TermParts {
                    phi: vec![(c, power)],
                    convex: power == 1.0,
                    ..plain(Arc::new(move |_, _, y, _| -c * y.signum() * y.abs().powf(power)))
                }
            }
            TermConfig::ZLipschitz { gamma } => TermParts {
                gamma: gamma.abs(),
                convex: gamma >= 0.0,
                ..plain(Arc::new(move |_, _, _, z| gamma * z.abs()))
            },
            TermConfig::Quadratic { ref coeff, abs_arg } => {
                let c = coeff.build()?;
                let env = c.even_envelope();
                let eval: DriverFn = if abs_arg {
                    Arc::new(move |_, _, y, z| c.eval(y.abs()) * z * z)
                } else {
                    Arc::new(move |_, _, y, z| c.eval(y) * z * z)
                };
                TermParts { quad: Some(env), convex: false, ..plain(eval) }
            }
            TermConfig::ExpConvexZ { kappa, lambda } => {
                if !(kappa >= 0.0 && lambda > 0.0) {
                    return Err(precondition("exp_convex_z needs kappa >= 0 and lambda > 0"));
                }
                TermParts {
                    gamma: kappa / lambda,
                    ..plain(Arc::new(move |_, _, _, z| {
                        let u = lambda * z.abs();
                        kappa * ((-u).exp_m1() + u) / (lambda * lambda)
                    }))
                }
            }
        })
    }
}

/// Serializable generator: term lists for `F₁`, `F₂` and optional
/// overrides of the derived structure constants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    #[serde(default)]
    pub f1: Vec<TermConfig>,
    #[serde(default)]
    pub f2: Vec<TermConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
}

impl GeneratorConfig {
    /// Builds the driver and derives `(α, β, γ, φ, f)` from the terms.
    pub fn build(&self) -> Result<GeneratorSpec> {
        let f1: Vec<TermParts> = self.f1.iter().map(|t| t.parts()).collect::<Result<_>>()?;
        let f2: Vec<TermParts> = self.f2.iter().map(|t| t.parts()).collect::<Result<_>>()?;
        let all = || f1.iter().chain(f2.iter());
        let alpha_const = all().map(|p| p.alpha_const).sum::<f64>();
        let alpha_x = all().map(|p| p.alpha_x).sum::<f64>();
        let phi_terms: Vec<(f64, f64)> = all().flat_map(|p| p.phi.iter().copied()).collect();
        let quads: Vec<IntegrableCoefficient> = all().filter_map(|p| p.quad.clone()).collect();
        let f = IntegrableCoefficient::sum(&quads);
        let sum_driver = |parts: &[TermParts]| -> DriverFn {
            let evals: Vec<DriverFn> = parts.iter().map(|p| p.eval.clone()).collect();
            Arc::new(move |t, x, y, z| evals.iter().map(|e| e(t, x, y, z)).sum())
        };
        let label = |terms: &[TermConfig]| {
            terms.iter().map(|t| format!("{t:?}")).collect::<Vec<_>>().join(" + ")
        };
        let alpha: AlphaFn = match self.alpha {
            Some(a) => Arc::new(move |_, _| a),
            None => Arc::new(move |_, x| alpha_const + alpha_x * x.abs()),
        };
        Ok(GeneratorSpec {
            label: format!("F1=[{}] F2=[{}]", label(&self.f1), label(&self.f2)),
            f1: sum_driver(&f1),
            f2: sum_driver(&f2),
            alpha,
            beta1: self.beta1.unwrap_or(f1.iter().map(|p| p.beta).sum()),
            beta2: self.beta2.unwrap_or(f2.iter().map(|p| p.beta).sum()),
            gamma1: self.gamma1.unwrap_or(f1.iter().map(|p| p.gamma).sum()),
            gamma2: self.gamma2.unwrap_or(f2.iter().map(|p| p.gamma).sum()),
            phi: Arc::new(move |r| phi_terms.iter().map(|(c, q)| c * r.powf(*q)).sum()),
            f,
            convex_f2: f2.iter().all(|p| p.convex),
            autonomous: all().all(|p| p.autonomous),
        })
    }
}

/// Worst sampled margin of one structure inequality (negative = violated).
#[derive(Debug, Clone, Serialize)]
pub struct ConditionMargin {
    pub name: String,
    pub worst_margin: f64,
    /// Sample `(t, x, y, z)` attaining the worst margin.
    pub at: [f64; 4],
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub conditions: Vec<ConditionMargin>,
    /// Growth and monotonicity at zero (needed for existence).
    pub a1_pass: bool,
    /// Monotone/Lipschitz/convex split (needed for comparison).
    pub a2_pass: bool,
    pub pass: bool,
}

impl StructureReport {
    pub fn margin(&self, name: &str) -> Option<&ConditionMargin> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

/// Sampling box for [`validate_structure`].
#[derive(Debug, Clone, Copy)]
pub struct SampleBox {
    pub horizon: f64,
    pub x_radius: f64,
    pub y_radius: f64,
    pub z_radius: f64,
}

impl Default for SampleBox {
    fn default() -> Self {
        SampleBox { horizon: 1.0, x_radius: 5.0, y_radius: 10.0, z_radius: 10.0 }
    }
}

struct Tracker {
    name: &'static str,
    worst: f64,
    at: [f64; 4],
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Tracker { name, worst: f64::INFINITY, at: [0.0; 4] }
    }

    fn see(&mut self, margin: f64, at: [f64; 4]) {
        let m = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if m < self.worst {
            self.worst = m;
            self.at = at;
        }
    }

    fn finish(self) -> ConditionMargin {
        ConditionMargin {
            name: self.name.into(),
            worst_margin: self.worst,
            at: self.at,
            pass: self.worst >= -STRUCTURE_TOL,
        }
    }
}

/// Samples every structure inequality and reports the worst margin of each.
pub fn validate_structure(spec: &GeneratorSpec, sample_size: usize, seed: u64, bx: SampleBox) -> StructureReport {
    let mut s = Stream::new(seed, 0x0A11);
    let beta = spec.beta();
    let gamma = spec.gamma();
    let fq = |y: f64| spec.f.eval(y.abs());
    let mut a1_ii = Tracker::new("A1.monotone_at_zero");
    let mut a1_iii = Tracker::new("A1.growth");
    let mut a2_mono = Tracker::new("A2.f1_monotone_y");
    let mut a2_lip = Tracker::new("A2.f1_lipschitz_z");
    let mut a2_f2 = Tracker::new("A2.f2_monotone_at_zero");
    let mut a2_cvx = Tracker::new("A2.f2_convex");
    let mut a2_growth = Tracker::new("A2.growth");
    for i in 0..sample_size {
        let t = s.range(0.0, bx.horizon);
        let x = s.range(-bx.x_radius, bx.x_radius);
        // a share of the samples sits on the axes y = 0, z = 0
        let y = if i % 17 == 0 { 0.0 } else { s.range(-bx.y_radius, bx.y_radius) };
        let z = if i % 13 == 0 { 0.0 } else { s.range(-bx.z_radius, bx.z_radius) };
        let y2 = s.range(-bx.y_radius, bx.y_radius);
        let z2 = s.range(-bx.z_radius, bx.z_radius);
        let at = [t, x, y, z];
        let a = (spec.alpha)(t, x);
        let quad = fq(y) * z * z;
        let f = spec.eval(t, x, y, z);
        a1_ii.see(a + beta * y.abs() + gamma * z.abs() + quad - y.signum() * f, at);
        let growth = a + (spec.phi)(y.abs()) + gamma * z.abs() + quad - f.abs();
        a1_iii.see(growth, at);
        a2_growth.see(growth, at);

        let f1 = |yy: f64, zz: f64| (spec.f1)(t, x, yy, zz);
        let dy = (y - y2).abs();
        a2_mono.see(spec.beta1 * dy - (y - y2).signum() * (f1(y, z) - f1(y2, z)), at);
        a2_lip.see(spec.gamma1 * (z - z2).abs() - (f1(y, z) - f1(y, z2)).abs(), at);
        let f2 = |yy: f64, zz: f64| (spec.f2)(t, x, yy, zz);
        a2_f2.see(spec.beta2 * y.abs() + spec.gamma2 * z.abs() + quad - y.signum() * f2(y, z), at);
        if spec.convex_f2 {
            let mid = f2(0.5 * (y + y2), 0.5 * (z + z2));
            let scale = 1.0 + f2(y, z).abs().max(f2(y2, z2).abs());
            a2_cvx.see((0.5 * (f2(y, z) + f2(y2, z2)) - mid) / scale, at);
        }
    }
    let mut conditions = vec![a1_ii.finish(), a1_iii.finish()];
    let a1_pass = conditions.iter().all(|c| c.pass);
    conditions.extend([a2_mono.finish(), a2_lip.finish(), a2_f2.finish(), a2_growth.finish()]);
    if spec.convex_f2 {
        conditions.push(a2_cvx.finish());
    }
    let a2_pass = spec.convex_f2 && spec.gamma1 >= 0.0 && spec.gamma2 >= 0.0
        && conditions[2..].iter().all(|c| c.pass);
    StructureReport { a1_pass, a2_pass, pass: conditions.iter().all(|c| c.pass), conditions }
}

/// Clamp to `[-m, m]`.
#[inline]
pub fn truncate_rho(y: f64, m: f64) -> f64 {
    debug_assert!(m > 0.0);
    if y > m {
        m
    } else if y < -m {
        -m
    } else {
        y
    }
}

/// Rectangular `(y, z)` lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub nz: usize,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec { y_min: -10.0, y_max: 10.0, ny: 401, z_min: -10.0, z_max: 10.0, nz: 401 }
    }
}

impl LatticeSpec {
    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        let h = (hi - lo) / (n - 1) as f64;
        (0..n).map(|i| if i + 1 == n { hi } else { lo + h * i as f64 }).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        Self::axis(self.y_min, self.y_max, self.ny)
    }

    pub fn zs(&self) -> Vec<f64> {
        Self::axis(self.z_min, self.z_max, self.nz)
    }
}

/// Discrete inf-convolution
/// `F_n(y, z) = min_{(y', z') ∈ lattice} F(y', z') + n|y - y'| + n|z - z'|`.
///
/// Four quadrant tables hold the minimum restricted to candidates
/// below/above each lattice point in each axis, so any query, on or off the
/// lattice, is answered exactly in O(log N).
#[derive(Debug, Clone)]
pub struct InfConvolution {
    ys: Vec<f64>,
    zs: Vec<f64>,
    n: f64,
    /// `[ll, lh, hl, hh]`: `l` = candidates `≤`, `h` = candidates `≥`,
    /// first letter for `y`, second for `z`.
    quadrants: [Vec<f64>; 4],
}

/// Builds the inf-convolution of `f(y, z)` with penalty `n`.
pub fn inf_convolution(f: &dyn Fn(f64, f64) -> f64, n: f64, lattice: &LatticeSpec) -> Result<InfConvolution> {
    if lattice.ny == 0 || lattice.nz == 0 {
        return Err(precondition("inf-convolution lattice is empty"));
    }
    if !(n > 0.0) {
        return Err(precondition("inf-convolution penalty must be positive"));
    }
    if !(lattice.y_min <= lattice.y_max && lattice.z_min <= lattice.z_max) {
        return Err(precondition("inverted lattice bounds"));
    }
    let ys = lattice.ys();
    let zs = lattice.zs();
    let (ny, nz) = (ys.len(), zs.len());
    let mut base = vec![0.0; ny * nz];
    for i in 0..ny {
        for j in 0..nz {
            let v = f(ys[i], zs[j]);
            if !v.is_finite() {
                return Err(precondition(format!("driver not finite at lattice point ({}, {})", ys[i], zs[j])));
            }
            base[i * nz + j] = v;
        }
    }
    let sweep = |up_y: bool, up_z: bool| -> Vec<f64> {
        let mut t = base.clone();
        // along z
        for i in 0..ny {
            let row = &mut t[i * nz..(i + 1) * nz];
            if up_z {
                for j in (0..nz.saturating_sub(1)).rev() {
                    row[j] = row[j].min(row[j + 1] + n * (zs[j + 1] - zs[j]));
                }
            } else {
                for j in 1..nz {
                    row[j] = row[j].min(row[j - 1] + n * (zs[j] - zs[j - 1]));
                }
            }
        }
        // along y
        if up_y {
            for i in (0..ny.saturating_sub(1)).rev() {
                for j in 0..nz {
                    t[i * nz + j] = t[i * nz + j].min(t[(i + 1) * nz + j] + n * (ys[i + 1] - ys[i]));
                }
            }
        } else {
            for i in 1..ny {
                for j in 0..nz {
                    t[i * nz + j] = t[i * nz + j].min(t[(i - 1) * nz + j] + n * (ys[i] - ys[i - 1]));
                }
            }
        }
        t
    };
    let quadrants = [sweep(false, false), sweep(false, true), sweep(true, false), sweep(true, true)];
    Ok(InfConvolution { ys, zs, n, quadrants })
}

/// Indices of the nearest axis points `≤ v` and `≥ v`.
fn bracket(axis: &[f64], v: f64) -> (Option<usize>, Option<usize>) {
    match axis.binary_search_by(|p| p.total_cmp(&v)) {
        Ok(k) => (Some(k), Some(k)),
        Err(0) => (None, Some(0)),
        Err(k) if k == axis.len() => (Some(k - 1), None),
        Err(k) => (Some(k - 1), Some(k)),
    }
}

impl InfConvolution {
    pub fn penalty(&self) -> f64 {
        self.n
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn zs(&self) -> &[f64] {
        &self.zs
    }

    /// Value at lattice point `(i, j)`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.quadrants[0][i * self.zs.len() + j]
    }

    pub fn eval(&self, y: f64, z: f64) -> f64 {
        let nz = self.zs.len();
        let (ylo, yhi) = bracket(&self.ys, y);
        let (zlo, zhi) = bracket(&self.zs, z);
        let mut best = f64::INFINITY;
        let corners = [(ylo, zlo, 0), (ylo, zhi, 1), (yhi, zlo, 2), (yhi, zhi, 3)];
        for (i, j, q) in corners {
            if let (Some(i), Some(j)) = (i, j) {
                let v = self.quadrants[q][i * nz + j]
                    + self.n * ((y - self.ys[i]).abs() + (z - self.zs[j]).abs());
                best = best.min(v);
            }
        }
        best
    }
}

/// Approximation index `(n, k)` of the double approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproxIndex {
    pub n: u32,
    pub k: u32,
}

/// First grid index at which `Σ α(t_j) Δ_j` reaches `level`, or the last
/// index when it never does.
pub fn sigma_level(alpha: &dyn Fn(f64) -> f64, times: &[f64], level: f64) -> usize {
    let mut acc = 0.0;
    for k in 0..times.len() - 1 {
        if acc >= level {
            return k;
        }
        acc += alpha(times[k]) * (times[k + 1] - times[k]);
    }
    times.len() - 1
}

/// `F^{n,k} = 1_{t ≤ σ_n} (F⁺)_n − 1_{t ≤ σ_k} (F⁻)_k` for an autonomous
/// driver, built on `lattice`. `sigma_n`, `sigma_k` are times.
pub fn double_approximation_driver(
    spec: &GeneratorSpec,
    idx: ApproxIndex,
    sigma_n: f64,
    sigma_k: f64,
    lattice: &LatticeSpec,
) -> Result<DriverFn> {
    if !spec.autonomous {
        return Err(precondition("the double approximation needs a driver independent of (t, x)"));
    }
    if idx.n == 0 || idx.k == 0 {
        return Err(precondition("approximation indices start at 1"));
    }
    let fp = |y: f64, z: f64| spec.eval(0.0, 0.0, y, z).max(0.0);
    let fm = |y: f64, z: f64| (-spec.eval(0.0, 0.0, y, z)).max(0.0);
    let plus = inf_convolution(&fp, idx.n as f64, lattice)?;
    let minus = inf_convolution(&fm, idx.k as f64, lattice)?;
    Ok(Arc::new(move |t, _, y, z| {
        let mut v = 0.0;
        if t <= sigma_n {
            v += plus.eval(y, z);
        }
        if t <= sigma_k {
            v -= minus.eval(y, z);
        }
        v
    }))
}

/// `F̃(t, x, y, z) = u'(u⁻¹y) G(t, x, u⁻¹y, z / u'(u⁻¹y))`.
pub fn transform_generator(g: DriverFn, table: Arc<TransformTable>) -> DriverFn {
    if table.source().is_zero() {
        return g;
    }
    Arc::new(move |t, x, y, z| {
        let yy = table.invert(y);
        let d = table.deriv(yy);
        d * g(t, x, yy, z / d)
    })
}

/// Inverse of [`transform_generator`]: `G(t, x, y, z) = F̃(t, x, u(y), u'(y) z) / u'(y)`.
pub fn untransform_generator(ft: DriverFn, table: Arc<TransformTable>) -> DriverFn {
    if table.source().is_zero() {
        return ft;
    }
    Arc::new(move |t, x, y, z| {
        let (uy, d) = table.eval(y);
        ft(t, x, uy, d * z) / d
    })
}
