//! Scenario files: one problem, one task, one seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientConfig;
use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::monitors::PsiConfig;
use crate::pde::PdeGrid;
use crate::pure::TerminalSpec;
use crate::regression::BasisConfig;
use crate::solver::{ApproxConfig, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

fn default_paths() -> usize {
    4000
}

fn default_steps() -> usize {
    50
}

fn default_horizon() -> f64 {
    1.0
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { paths: default_paths(), steps: default_steps(), horizon: default_horizon() }
    }
}

/// Occupation and moment checks attached to every solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "PsiConfig::builtin_family")]
    pub psi: Vec<PsiConfig>,
    /// Localization level of the occupation estimate.
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "default_apriori_p")]
    pub apriori_p: Vec<f64>,
    /// Requires `min rhs/lhs` over `psi` to stay below this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tightness_max: Option<f64>,
}

fn yes() -> bool {
    true
}

fn default_m() -> f64 {
    1.0
}

fn default_apriori_p() -> Vec<f64> {
    vec![1.5, 2.0, 4.0]
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            enabled: true,
            psi: PsiConfig::builtin_family(),
            m: default_m(),
            apriori_p: default_apriori_p(),
            tightness_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalTimeCheck {
    #[serde(default)]
    pub level: f64,
    pub epsilon: f64,
    /// Relative tolerance against `E|W_T − level|`-type closed forms.
    pub tolerance: f64,
}

/// What a scenario does with its problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    /// Transform method for `f(y)|z|²`, checked against the quadrature oracle.
    SolvePure {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        golden: Option<f64>,
        #[serde(default = "pure_tol")]
        tolerance: f64,
    },
    SolveBsde {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<f64>,
        #[serde(default = "bsde_tol")]
        tolerance: f64,
    },
    /// Randomized ordered pairs drawn from the scenario seed.
    Compare {
        #[serde(default = "default_pairs")]
        pairs: usize,
        #[serde(default = "compare_basis")]
        basis: BasisConfig,
    },
    /// Terminal shifts `ξ + 1/n`.
    Stability {
        #[serde(default = "default_shifts")]
        shifts: Vec<u32>,
        #[serde(default = "default_p")]
        p: f64,
        #[serde(default = "default_order")]
        min_order: f64,
    },
    Approx {
        approx: ApproxConfig,
        #[serde(default = "default_coverage")]
        coverage_min: f64,
    },
    Monitors {
        #[serde(default)]
        ito_p: Vec<f64>,
        #[serde(default = "default_levels")]
        ito_levels: usize,
        /// Degenerate problem: the Itô gap must vanish at every level.
        #[serde(default)]
        exact_zero: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        local_time: Option<LocalTimeCheck>,
        #[serde(default)]
        null_points: Vec<f64>,
    },
    FeynmanKac {
        #[serde(default)]
        pde: PdeGrid,
        #[serde(default = "default_t0s")]
        t0s: Vec<f64>,
        #[serde(default = "default_x0s")]
        x0s: Vec<f64>,
        /// `F = −r y`, `g(x) = x`: compare with `e^{−r(T−t)} x`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        closed_form_rate: Option<f64>,
        #[serde(default = "fk_tol")]
        tolerance: f64,
        #[serde(default)]
        refine: bool,
    },
    Transforms {
        #[serde(default)]
        coefficients: Vec<CoefficientConfig>,
        #[serde(default = "default_points")]
        points: usize,
        #[serde(default = "bound_tol")]
        bound_tol: f64,
        #[serde(default = "round_trip_tol")]
        round_trip_tol: f64,
    },
}

fn pure_tol() -> f64 {
    5e-3
}

fn bsde_tol() -> f64 {
    1e-2
}

fn default_pairs() -> usize {
    200
}

fn compare_basis() -> BasisConfig {
    BasisConfig::Bins { bins: 20 }
}

fn default_shifts() -> Vec<u32> {
    vec![1, 2, 4, 8, 16]
}

fn default_p() -> f64 {
    2.0
}

fn default_order() -> f64 {
    0.9
}

fn default_coverage() -> f64 {
    0.99
}

fn default_levels() -> usize {
    3
}

fn default_t0s() -> Vec<f64> {
    vec![0.0, 0.5]
}

fn default_x0s() -> Vec<f64> {
    vec![-1.0, -0.5, 0.0, 0.5, 1.0]
}

fn fk_tol() -> f64 {
    1e-2
}

fn default_points() -> usize {
    10_000
}

fn bound_tol() -> f64 {
    1e-12
}

fn round_trip_tol() -> f64 {
    1e-8
}

impl Task {
    /// Subcommand that runs this task.
    pub fn subcommand(&self) -> &'static str {
        match self {
            Task::SolvePure { .. } => "solve-pure",
            Task::SolveBsde { .. } => "solve-bsde",
            Task::Compare { .. } => "compare",
            Task::Stability { .. } => "stability",
            Task::Approx { .. } => "approx",
            Task::Monitors { .. } => "monitors",
            Task::FeynmanKac { .. } => "feynman-kac",
            Task::Transforms { .. } => "transforms",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Mandatory; nothing is seeded from the clock.
    pub seed: u64,
    #[serde(default)]
    pub run: RunConfig,
    /// General driver; absent means the purely quadratic driver of `coefficient`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<CoefficientConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<TerminalSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub monitors: MonitorConfig,
    pub task: Task,
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

/// Parses TOML, reporting the key path of the first offending value.
pub fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| config_error("<root>", e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_error(path, e.into_inner().message().to_string())
    })
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = parse_toml(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config { path: key, message } => config_error(format!("{}: {key}", path.display()), message),
            other => other,
        })
    }

    /// Canonical form with every default written out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_error("<root>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(config_error("name", "must be a non-empty file name"));
        }
        if self.run.paths == 0 {
            return Err(config_error("run.paths", "must be positive"));
        }
        if self.run.steps == 0 {
            return Err(config_error("run.steps", "must be positive"));
        }
        if !(self.run.horizon > 0.0) {
            return Err(config_error("run.horizon", "must be positive"));
        }
        if self.generator.is_some() && self.coefficient.is_some() {
            return Err(config_error("coefficient", "give either a generator or a pure coefficient"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Scenario files, relative to the manifest.
    #[serde(default)]
    pub scenarios: Vec<PathBuf>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)?;
        let m: Manifest = parse_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, base))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "pure"
seed = 3

[coefficient]
kind = "indicator"
c = 0.5
a = 1.0

[terminal.g]
kind = "linear"
a = 0.0

[task]
kind = "solve_pure"
"#;

    #[test]
    fn canonical_form_round_trips() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.run, RunConfig::default());
        let canon = s.to_toml().unwrap();
        let again = Scenario::parse(&canon).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.to_toml().unwrap(), canon);
    }

    #[test]
    fn bad_key_reports_its_path() {
        let bad = MINIMAL.replace("c = 0.5", "c = \"half\"");
        match Scenario::parse(&bad) {
            Err(Error::Config { path, .. }) => assert!(path.starts_with("coefficient"), "{path}"),
            other => panic!("{other:?}"),
        }
        let unknown = MINIMAL.replace("kind = \"solve_pure\"", "kind = \"solve_pure\"\nspeed = 2");
        assert!(matches!(Scenario::parse(&unknown), Err(Error::Config { .. })));
    }

    #[test]
    fn seed_is_mandatory() {
        let no_seed = MINIMAL.replace("seed = 3", "");
        match Scenario::parse(&no_seed) {
            Err(Error::Config { message, .. }) => assert!(message.contains("seed"), "{message}"),
            other => panic!("{other:?}"),
        }
    }
}
