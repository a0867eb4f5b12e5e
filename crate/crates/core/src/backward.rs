//! Backward induction shared by every Monte Carlo solver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::generator::{truncate_rho, DriverFn};
use crate::grid::{Field, PathBundle, SdeModel};
use crate::regression::{project_step, BasisConfig};

/// How `Y_k` is obtained from the conditional expectation `E_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepScheme {
    /// `Y_k = E_k + F(t_k, X_k, E_k, Z_k) Δ`
    Explicit,
    /// Fixed point of `y = E_k + F(t_k, X_k, y, Z_k) Δ`.
    ImplicitPicard {
        #[serde(default = "default_iters")]
        iters: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
}

fn default_iters() -> usize {
    5
}

fn default_tol() -> f64 {
    1e-10
}

impl Default for StepScheme {
    fn default() -> Self {
        StepScheme::ImplicitPicard { iters: default_iters(), tol: default_tol() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardOptions {
    pub basis: BasisConfig,
    pub scheme: StepScheme,
    /// `|Z|` is clipped at this empirical quantile before driver evaluation.
    pub z_clip_quantile: Option<f64>,
    /// `Y` is clamped to `[-m, m]` inside driver evaluations.
    pub truncation_m: Option<f64>,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        BackwardOptions {
            basis: BasisConfig::default(),
            scheme: StepScheme::default(),
            z_clip_quantile: Some(0.999),
            truncation_m: None,
        }
    }
}

/// Per-step record, index `k` for the step `t_k → t_{k+1}`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub residual_rms: Vec<f64>,
    pub condition: Vec<f64>,
    pub picard_iters: Vec<usize>,
    pub z_clip_level: Vec<f64>,
    pub clipped: usize,
}

pub struct BackwardOutput {
    pub y: Field,
    pub z: Field,
    pub diagnostics: Diagnostics,
}

/// `q`-quantile of `|v|` (nearest rank).
fn abs_quantile(v: &[f64], q: f64) -> f64 {
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let idx = (((a.len() as f64) * q).ceil() as usize).clamp(1, a.len()) - 1;
    let (_, nth, _) = a.select_nth_unstable_by(idx, |p, q| p.total_cmp(q));
    *nth
}

/// Solves backward from `terminal` on the states `x` generated by `model`
/// from `paths`. Without a driver this is the pure martingale projection.
pub fn backward(
    model: &SdeModel,
    paths: &PathBundle,
    x: &Field,
    terminal: &[f64],
    driver: Option<&DriverFn>,
    opts: &BackwardOptions,
) -> Result<BackwardOutput> {
    let grid = &paths.grid;
    let n = grid.n_steps();
    let np = paths.n_paths;
    if terminal.len() != np || x.n_times != n + 1 || x.n_paths != np {
        return Err(precondition("terminal values and states must match the path bundle"));
    }
    if let StepScheme::ImplicitPicard { iters, .. } = opts.scheme {
        if iters == 0 {
            return Err(precondition("picard_iters must be at least 1"));
        }
    }
    if let Some(i) = terminal.iter().position(|v| !v.is_finite()) {
        return Err(Error::TerminalOverflow { path: i });
    }
    let mut y = Field::zeros(n + 1, np);
    let mut z = Field::zeros(n + 1, np);
    y.row_mut(n).copy_from_slice(terminal);
    let mut diag = Diagnostics {
        residual_rms: vec![0.0; n],
        condition: vec![0.0; n],
        picard_iters: vec![0; n],
        z_clip_level: vec![f64::INFINITY; n],
        clipped: 0,
    };
    let rho = |v: f64| match opts.truncation_m {
        Some(m) => truncate_rho(v, m),
        None => v,
    };
    for k in (0..n).rev() {
        let t = grid.times()[k];
        let dt = grid.dt(k);
        let xk = x.row(k);
        let mean: Vec<f64> = xk.iter().map(|&v| v + model.b(t, v) * dt).collect();
        let vol: Vec<f64> = xk.iter().map(|&v| model.sigma(t, v)).collect();
        let proj = project_step(&opts.basis, x.row(k + 1), y.row(k + 1), &mean, &vol, dt, k)?;
        diag.residual_rms[k] = proj.residual_rms;
        diag.condition[k] = proj.condition;
        let e = proj.cond;
        let zk = proj.z;
        let yk: Vec<f64> = match driver {
            None => e,
            Some(f) => {
                let level = match opts.z_clip_quantile {
                    Some(q) if q < 1.0 => abs_quantile(&zk, q),
                    _ => f64::INFINITY,
                };
                diag.z_clip_level[k] = level;
                diag.clipped += zk.iter().filter(|v| v.abs() > level).count();
                let zc: Vec<f64> = zk.iter().map(|v| v.clamp(-level, level)).collect();
                match opts.scheme {
                    StepScheme::Explicit => {
                        diag.picard_iters[k] = 1;
                        (0..np)
                            .into_par_iter()
                            .map(|i| e[i] + f(t, xk[i], rho(e[i]), zc[i]) * dt)
                            .collect()
                    }
                    StepScheme::ImplicitPicard { iters, tol } => {
                        let mut cur = e.clone();
                        let mut last = f64::INFINITY;
                        let mut growth = 0;
                        let mut used = 0;
                        for _ in 0..iters {
                            let next: Vec<f64> = (0..np)
                                .into_par_iter()
                                .map(|i| e[i] + f(t, xk[i], rho(cur[i]), zc[i]) * dt)
                                .collect();
                            let res = next
                                .iter()
                                .zip(&cur)
                                .map(|(a, b)| (a - b).abs())
                                .fold(0.0_f64, |m, d| if d.is_nan() { f64::INFINITY } else { m.max(d) });
                            cur = next;
                            used += 1;
                            if res <= tol {
                                break;
                            }
                            if res > last {
                                growth += 1;
                                if growth >= 3 {
                                    return Err(Error::StepDivergence { step: k, residual: res });
                                }
                            } else {
                                growth = 0;
                            }
                            last = res;
                        }
                        diag.picard_iters[k] = used;
                        cur
                    }
                }
            }
        };
        if let Some(i) = yk.iter().position(|v| !v.is_finite()) {
            return Err(Error::Blowup { step: k, path: i });
        }
        y.row_mut(k).copy_from_slice(&yk);
        z.row_mut(k).copy_from_slice(&zk);
    }
    if n > 0 {
        let last = z.row(n - 1).to_vec();
        z.row_mut(n).copy_from_slice(&last);
    }
    Ok(BackwardOutput { y, z, diagnostics: diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{euler_maruyama, sample_brownian, TimeGrid};
    use std::sync::Arc;

    fn setup(paths: usize, steps: usize) -> (SdeModel, PathBundle, Field) {
        let grid = TimeGrid::uniform(0.0, 1.0, steps).unwrap();
        let b = sample_brownian(&grid, paths, 1, 11).unwrap();
        let m = SdeModel::brownian(0.0, 0.0);
        let x = euler_maruyama(&m, &b).unwrap();
        (m, b, x)
    }

    #[test]
    fn brownian_terminal_is_reproduced() {
        let (m, b, x) = setup(2000, 20);
        let out = backward(&m, &b, &x, x.row(20), None, &BackwardOptions::default()).unwrap();
        for k in 0..=20 {
            for i in (0..2000).step_by(97) {
                assert!((out.y.get(k, i) - x.get(k, i)).abs() < 1e-10);
                assert!((out.z.get(k, i) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn linear_decay_driver() {
        let (m, b, x) = setup(500, 100);
        let r = 0.7;
        let f: DriverFn = Arc::new(move |_, _, y, _| -r * y);
        let term = vec![1.0; 500];
        for scheme in [StepScheme::Explicit, StepScheme::default()] {
            let opts = BackwardOptions { scheme, ..Default::default() };
            let out = backward(&m, &b, &x, &term, Some(&f), &opts).unwrap();
            let err = (out.y.get(0, 0) - (-r).exp()).abs();
            assert!(err < 0.7 * 0.7 * 0.01, "{scheme:?} err {err}");
            assert!(out.z.row(0).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn divergent_picard_is_reported() {
        let (m, b, x) = setup(50, 4);
        let f: DriverFn = Arc::new(|_, _, y, _| 50.0 * y);
        let opts = BackwardOptions { scheme: StepScheme::ImplicitPicard { iters: 10, tol: 1e-12 }, ..Default::default() };
        let err = backward(&m, &b, &x, &[1.0; 50], Some(&f), &opts).err().unwrap();
        assert!(matches!(err, Error::StepDivergence { step: 3, .. }), "{err}");
    }

    #[test]
    fn non_finite_terminal_is_rejected() {
        let (m, b, x) = setup(10, 2);
        let mut t = vec![0.0; 10];
        t[4] = f64::INFINITY;
        let err = backward(&m, &b, &x, &t, None, &BackwardOptions::default()).err().unwrap();
        assert!(matches!(err, Error::TerminalOverflow { path: 4 }));
    }

    #[test]
    fn quantile_is_nearest_rank() {
        let v: Vec<f64> = (1..=1000).map(|i| -(i as f64)).collect();
        assert_eq!(abs_quantile(&v, 0.999), 999.0);
        assert_eq!(abs_quantile(&v, 1.0), 1000.0);
    }
}
