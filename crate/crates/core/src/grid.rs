//! Time grids, seeded Brownian increments and Euler–Maruyama for the forward
//! state.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::rng::{normal_pair, seed_key, Stream};

/// Strictly increasing time points `t0 = times[0] < … < times[N] = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(t0: f64, horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(precondition("a time grid needs at least one step"));
        }
        if !(t0 >= 0.0 && horizon > t0 && horizon.is_finite()) {
            return Err(precondition(format!("need 0 <= t0 < T, got t0 = {t0}, T = {horizon}")));
        }
        let h = (horizon - t0) / steps as f64;
        let times = (0..=steps)
            .map(|k| if k == steps { horizon } else { t0 + h * k as f64 })
            .collect();
        Ok(TimeGrid { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(precondition("a time grid needs at least two points"));
        }
        if times[0] < 0.0 || !times.iter().all(|t| t.is_finite()) {
            return Err(precondition("grid times must be finite with t0 >= 0"));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(precondition("grid times must be strictly increasing"));
        }
        Ok(TimeGrid { times })
    }

    /// Grid whose steps shrink geometrically towards `T` by `ratio` per step.
    pub fn refined_towards_end(t0: f64, horizon: f64, steps: usize, ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(precondition("refinement ratio must lie in (0, 1]"));
        }
        let weights: Vec<f64> = (0..steps).map(|k| ratio.powi(k as i32)).collect();
        let total: f64 = weights.iter().sum();
        let mut times = Vec::with_capacity(steps + 1);
        let mut t = t0;
        times.push(t);
        for w in &weights[..steps.saturating_sub(1)] {
            t += (horizon - t0) * w / total;
            times.push(t);
        }
        times.push(horizon);
        Self::from_times(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    #[inline]
    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn max_step(&self) -> f64 {
        (0..self.n_steps()).map(|k| self.dt(k)).fold(0.0, f64::max)
    }

    /// Grid with every step split in two.
    pub fn halved(&self) -> TimeGrid {
        let mut times = Vec::with_capacity(2 * self.times.len() - 1);
        for w in self.times.windows(2) {
            times.push(w[0]);
            times.push(0.5 * (w[0] + w[1]));
        }
        times.push(self.horizon());
        TimeGrid { times }
    }
}

/// Values on grid × paths, stored step-major: `row(k)[i]` is path `i` at
/// time index `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub n_times: usize,
    pub n_paths: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(n_times: usize, n_paths: usize) -> Self {
        Field { n_times, n_paths, data: vec![0.0; n_times * n_paths] }
    }

    pub fn filled(n_times: usize, n_paths: usize, value: f64) -> Self {
        Field { n_times, n_paths, data: vec![value; n_times * n_paths] }
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_paths..(k + 1) * self.n_paths]
    }

    #[inline]
    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.n_paths..(k + 1) * self.n_paths]
    }

    #[inline]
    pub fn get(&self, k: usize, path: usize) -> f64 {
        self.data[k * self.n_paths + path]
    }

    /// Values of one path across all times.
    pub fn path(&self, path: usize) -> Vec<f64> {
        (0..self.n_times).map(|k| self.get(k, path)).collect()
    }

    /// Paths `range` only.
    pub fn subset(&self, range: std::ops::Range<usize>) -> Field {
        let mut data = Vec::with_capacity(self.n_times * range.len());
        for k in 0..self.n_times {
            data.extend_from_slice(&self.row(k)[range.clone()]);
        }
        Field { n_times: self.n_times, n_paths: range.len(), data }
    }

    /// Keeps every `factor`-th time row.
    pub fn every(&self, factor: usize) -> Field {
        let rows: Vec<usize> = (0..self.n_times).step_by(factor).collect();
        let mut data = Vec::with_capacity(rows.len() * self.n_paths);
        for &k in &rows {
            data.extend_from_slice(self.row(k));
        }
        Field { n_times: rows.len(), n_paths: self.n_paths, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Field {
        Field {
            n_times: self.n_times,
            n_paths: self.n_paths,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// First non-finite entry as `(step, path)`.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| (i / self.n_paths, i % self.n_paths))
    }
}

/// Brownian increments on a shared grid, scaled by `√Δ`.
///
/// Layout: `increments[(k * n_paths + i) * dim + j]` is component `j` of the
/// increment of path `i` over step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub dim: usize,
    pub seed: u64,
    pub stream_id: u32,
    pub increments: Vec<f64>,
}

/// Per-step moment gate for a bundle.
#[derive(Debug, Clone, Serialize)]
pub struct SanityReport {
    /// Largest `|mean| / (√Δ/√n)` over steps and components.
    pub worst_mean_score: f64,
    /// Largest `|var - Δ| / SE(var)` over steps and components.
    pub worst_var_score: f64,
    pub pass: bool,
}

/// Bundle of `n_paths` Brownian paths on `grid`, stream 0.
pub fn sample_brownian(grid: &TimeGrid, n_paths: usize, dim: usize, seed: u64) -> Result<PathBundle> {
    sample_brownian_stream(grid, n_paths, dim, seed, 0)
}

/// Counter layout `(step, component pair, path, stream)` keyed by `seed`, so
/// path `i` does not depend on how many other paths are drawn.
pub fn sample_brownian_stream(
    grid: &TimeGrid,
    n_paths: usize,
    dim: usize,
    seed: u64,
    stream_id: u32,
) -> Result<PathBundle> {
    if n_paths == 0 || dim == 0 {
        return Err(precondition("need at least one path and one dimension"));
    }
    if n_paths > u32::MAX as usize {
        return Err(precondition("at most 2^32 paths per stream"));
    }
    let key = seed_key(seed);
    let n = grid.n_steps();
    let mut increments = vec![0.0; n * n_paths * dim];
    increments
        .par_chunks_mut(n_paths * dim)
        .enumerate()
        .for_each(|(k, row)| {
            let scale = grid.dt(k).sqrt();
            for (i, out) in row.chunks_mut(dim).enumerate() {
                for block in 0..dim.div_ceil(2) {
                    let (a, b) = normal_pair([k as u32, block as u32, i as u32, stream_id], key);
                    out[2 * block] = a * scale;
                    if 2 * block + 1 < dim {
                        out[2 * block + 1] = b * scale;
                    }
                }
            }
        });
    Ok(PathBundle { grid: grid.clone(), n_paths, dim, seed, stream_id, increments })
}

const MAGIC: &[u8; 4] = b"QBPB";
const FORMAT_VERSION: u32 = 1;

impl PathBundle {
    #[inline]
    pub fn increment(&self, step: usize, path: usize, component: usize) -> f64 {
        self.increments[(step * self.n_paths + path) * self.dim + component]
    }

    /// Increments of `component` for every path over `step`.
    pub fn step_increments(&self, step: usize, component: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.increment(step, i, component)).collect()
    }

    /// Cumulative Brownian path `W` of one component, `W_{t0} = 0`.
    pub fn brownian(&self, component: usize) -> Field {
        let n = self.grid.n_steps();
        let mut w = Field::zeros(n + 1, self.n_paths);
        for k in 0..n {
            for i in 0..self.n_paths {
                let v = w.get(k, i) + self.increment(k, i, component);
                w.data[(k + 1) * self.n_paths + i] = v;
            }
        }
        w
    }

    /// Paths `range` only, keeping the provenance.
    pub fn subset(&self, range: std::ops::Range<usize>) -> PathBundle {
        let d = self.dim;
        let mut increments = Vec::with_capacity(self.grid.n_steps() * range.len() * d);
        for k in 0..self.grid.n_steps() {
            let base = k * self.n_paths * d;
            increments.extend_from_slice(&self.increments[base + range.start * d..base + range.end * d]);
        }
        PathBundle {
            grid: self.grid.clone(),
            n_paths: range.len(),
            dim: d,
            seed: self.seed,
            stream_id: self.stream_id,
            increments,
        }
    }

    /// Contiguous, equally sized path batches (the remainder is dropped).
    pub fn batches(&self, count: usize) -> Vec<PathBundle> {
        let size = self.n_paths / count.max(1);
        (0..count).map(|b| self.subset(b * size..(b + 1) * size)).collect()
    }

    /// Sums groups of `factor` consecutive increments: the same Brownian
    /// paths observed on the coarser grid.
    pub fn coarsen(&self, factor: usize) -> Result<PathBundle> {
        let n = self.grid.n_steps();
        if factor == 0 || !n.is_multiple_of(factor) {
            return Err(precondition(format!("cannot coarsen {n} steps by {factor}")));
        }
        let times: Vec<f64> = self.grid.times().iter().copied().step_by(factor).collect();
        let row = self.n_paths * self.dim;
        let mut increments = vec![0.0; (n / factor) * row];
        for (kc, out) in increments.chunks_mut(row).enumerate() {
            for j in 0..factor {
                let src = &self.increments[(kc * factor + j) * row..(kc * factor + j + 1) * row];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += s;
                }
            }
        }
        Ok(PathBundle {
            grid: TimeGrid::from_times(times)?,
            n_paths: self.n_paths,
            dim: self.dim,
            seed: self.seed,
            stream_id: self.stream_id,
            increments,
        })
    }

    pub fn sanity(&self) -> SanityReport {
        let n = self.n_paths as f64;
        let (mut worst_mean, mut worst_var) = (0.0_f64, 0.0_f64);
        for k in 0..self.grid.n_steps() {
            let dt = self.grid.dt(k);
            for j in 0..self.dim {
                let (mut s1, mut s2) = (0.0, 0.0);
                for i in 0..self.n_paths {
                    let x = self.increment(k, i, j);
                    s1 += x;
                    s2 += x * x;
                }
                let mean = s1 / n;
                worst_mean = worst_mean.max(mean.abs() / (dt.sqrt() / n.sqrt()));
                if self.n_paths > 1 {
                    let var = (s2 - n * mean * mean) / (n - 1.0);
                    let se = dt * (2.0 / (n - 1.0)).sqrt();
                    worst_var = worst_var.max((var - dt).abs() / se);
                }
            }
        }
        SanityReport {
            worst_mean_score: worst_mean,
            worst_var_score: worst_var,
            pass: worst_mean <= 5.0 && worst_var <= 5.0,
        }
    }

    /// Flat little-endian layout: magic, version, seed, stream id, path
    /// count, dimension, time count, times, then the increments.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&self.stream_id.to_le_bytes())?;
        out.write_all(&(self.n_paths as u64).to_le_bytes())?;
        out.write_all(&(self.dim as u64).to_le_bytes())?;
        out.write_all(&(self.grid.times.len() as u64).to_le_bytes())?;
        for t in &self.grid.times {
            out.write_all(&t.to_le_bytes())?;
        }
        for v in &self.increments {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<PathBundle> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = read_u32(&mut input)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let seed = read_u64(&mut input)?;
        let stream_id = read_u32(&mut input)?;
        let n_paths = read_u64(&mut input)? as usize;
        let dim = read_u64(&mut input)? as usize;
        let n_times = read_u64(&mut input)? as usize;
        if n_paths == 0 || dim == 0 || n_times < 2 {
            return Err(Error::Format("empty bundle header".into()));
        }
        let times = (0..n_times).map(|_| read_f64(&mut input)).collect::<Result<Vec<_>>>()?;
        let grid = TimeGrid::from_times(times).map_err(|e| Error::Format(e.to_string()))?;
        let count = grid.n_steps() * n_paths * dim;
        let mut bytes = vec![0u8; count * 8];
        input.read_exact(&mut bytes).map_err(|_| Error::Format("truncated increments".into()))?;
        let increments = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(PathBundle { grid, n_paths, dim, seed, stream_id, increments })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated header".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated header".into()))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub type CoefFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Coefficients of the one-dimensional state equation
/// `dX = b(t, X) dt + σ(t, X) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSdeConfig {
    /// `b(t, x) = drift_const + drift_lin · x`
    #[serde(default)]
    pub drift_const: f64,
    #[serde(default)]
    pub drift_lin: f64,
    /// `σ(t, x) = vol_const + vol_lin · x`
    #[serde(default = "one")]
    pub vol_const: f64,
    #[serde(default)]
    pub vol_lin: f64,
    #[serde(default)]
    pub x0: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for LinearSdeConfig {
    fn default() -> Self {
        LinearSdeConfig { drift_const: 0.0, drift_lin: 0.0, vol_const: 1.0, vol_lin: 0.0, x0: 0.0 }
    }
}

impl LinearSdeConfig {
    pub fn build(&self, t0: f64) -> SdeModel {
        let c = *self;
        SdeModel {
            drift: Arc::new(move |_, x| c.drift_const + c.drift_lin * x),
            diffusion: Arc::new(move |_, x| c.vol_const + c.vol_lin * x),
            lipschitz_beta: c.drift_lin.abs().max(c.vol_lin.abs()).max(c.drift_const.abs() + c.vol_const.abs()),
            x0: c.x0,
            t0,
            config: Some(c),
        }
    }
}

/// Forward state model. The state is scalar; `lipschitz_beta` bounds both
/// the Lipschitz constants of `b`, `σ` and `|b(t,0)| + |σ(t,0)|`.
#[derive(Clone)]
pub struct SdeModel {
    pub drift: CoefFn,
    pub diffusion: CoefFn,
    pub lipschitz_beta: f64,
    pub x0: f64,
    pub t0: f64,
    /// Set when the model came from a linear config; enables closed forms.
    pub config: Option<LinearSdeConfig>,
}

impl std::fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeModel")
            .field("lipschitz_beta", &self.lipschitz_beta)
            .field("x0", &self.x0)
            .field("t0", &self.t0)
            .field("config", &self.config)
            .finish()
    }
}

/// Worst sampled ratios against the declared `lipschitz_beta`.
#[derive(Debug, Clone, Serialize)]
pub struct SdeValidation {
    pub worst_lipschitz_ratio: f64,
    pub worst_origin_bound: f64,
    pub pass: bool,
}

impl SdeModel {
    /// Standard Brownian motion started at `x0`.
    pub fn brownian(t0: f64, x0: f64) -> Self {
        LinearSdeConfig { x0, ..Default::default() }.build(t0)
    }

    #[inline]
    pub fn b(&self, t: f64, x: f64) -> f64 {
        (self.drift)(t, x)
    }

    #[inline]
    pub fn sigma(&self, t: f64, x: f64) -> f64 {
        (self.diffusion)(t, x)
    }

    /// Samples random pairs in `[-radius, radius]` and times in `[t0, T]`.
    pub fn validate(&self, horizon: f64, radius: f64, samples: usize, seed: u64) -> SdeValidation {
        let mut s = Stream::new(seed, 0x5DE0);
        let beta = self.lipschitz_beta;
        let (mut ratio, mut origin) = (0.0_f64, 0.0_f64);
        for _ in 0..samples {
            let t = s.range(self.t0, horizon);
            let x = s.range(-radius, radius);
            let y = s.range(-radius, radius);
            if x != y {
                let lb = (self.b(t, x) - self.b(t, y)).abs() / (x - y).abs();
                let ls = (self.sigma(t, x) - self.sigma(t, y)).abs() / (x - y).abs();
                ratio = ratio.max(lb.max(ls));
            }
            origin = origin.max(self.b(t, 0.0).abs() + self.sigma(t, 0.0).abs());
        }
        let slack = 1.0 + 1e-9;
        SdeValidation {
            worst_lipschitz_ratio: ratio,
            worst_origin_bound: origin,
            pass: ratio <= beta * slack + 1e-12 && origin <= beta * slack + 1e-12,
        }
    }
}

/// `X[k+1] = X[k] + b Δ + σ ΔW` on the first noise component.
pub fn euler_maruyama(model: &SdeModel, paths: &PathBundle) -> Result<Field> {
    let grid = &paths.grid;
    if (model.t0 - grid.t0()).abs() > 1e-12 {
        return Err(precondition(format!(
            "model starts at {} but the grid starts at {}",
            model.t0,
            grid.t0()
        )));
    }
    let n = grid.n_steps();
    let np = paths.n_paths;
    let mut x = Field::filled(n + 1, np, model.x0);
    for k in 0..n {
        let t = grid.times()[k];
        let dt = grid.dt(k);
        let (prev, next) = x.data.split_at_mut((k + 1) * np);
        let prev = &prev[k * np..];
        let next = &mut next[..np];
        next.par_iter_mut().enumerate().for_each(|(i, out)| {
            let xi = prev[i];
            *out = xi + model.b(t, xi) * dt + model.sigma(t, xi) * paths.increment(k, i, 0);
        });
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::SimulationBlowup { path: i, step: k + 1 });
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_endpoints() {
        let g = TimeGrid::uniform(0.0, 1.0, 3).unwrap();
        assert_eq!(g.times()[0], 0.0);
        assert_eq!(g.horizon(), 1.0);
        assert!((g.max_step() - 1.0 / 3.0).abs() < 1e-15);
        assert!(TimeGrid::uniform(1.0, 1.0, 3).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        let h = g.halved();
        assert_eq!(h.n_steps(), 6);
        assert_eq!(h.times()[2], g.times()[1]);
    }

    #[test]
    fn refined_grid_shrinks_towards_end() {
        let g = TimeGrid::refined_towards_end(0.0, 1.0, 10, 0.8).unwrap();
        assert_eq!(g.n_steps(), 10);
        assert!(g.dt(9) < g.dt(0));
        assert_eq!(g.horizon(), 1.0);
    }

    #[test]
    fn same_seed_same_bits() {
        let g = TimeGrid::uniform(0.0, 1.0, 20).unwrap();
        let a = sample_brownian(&g, 100, 2, 42).unwrap();
        let b = sample_brownian(&g, 100, 2, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_brownian(&g, 100, 2, 43).unwrap();
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn path_independent_of_bundle_size() {
        let g = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let small = sample_brownian(&g, 5, 3, 9).unwrap();
        let big = sample_brownian(&g, 50, 3, 9).unwrap();
        for k in 0..10 {
            for j in 0..3 {
                assert_eq!(small.increment(k, 4, j), big.increment(k, 4, j));
            }
        }
    }

    #[test]
    fn coarsen_sums_increments() {
        let g = TimeGrid::uniform(0.0, 1.0, 8).unwrap();
        let b = sample_brownian(&g, 7, 1, 1).unwrap();
        let c = b.coarsen(2).unwrap();
        assert_eq!(c.grid, TimeGrid::uniform(0.0, 1.0, 4).unwrap());
        let wf = b.brownian(0);
        let wc = c.brownian(0);
        for i in 0..7 {
            assert!((wf.get(8, i) - wc.get(4, i)).abs() < 1e-14);
        }
        assert!(b.coarsen(3).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let g = TimeGrid::uniform(0.0, 0.5, 4).unwrap();
        let b = sample_brownian_stream(&g, 3, 2, 77, 5).unwrap();
        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        let back = PathBundle::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, b);
        assert!(PathBundle::read_from(&buf[..buf.len() - 3]).is_err());
        buf[0] = b'X';
        assert!(PathBundle::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn deterministic_drift_only() {
        let g = TimeGrid::uniform(0.0, 2.0, 16).unwrap();
        let b = sample_brownian(&g, 4, 1, 0).unwrap();
        let m = LinearSdeConfig { drift_const: 0.3, vol_const: 0.0, x0: 1.0, ..Default::default() }.build(0.0);
        let x = euler_maruyama(&m, &b).unwrap();
        for i in 0..4 {
            assert!((x.get(16, i) - 1.6).abs() < 1e-14);
        }
    }

    #[test]
    fn brownian_model_reproduces_cumulative_path() {
        let g = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let b = sample_brownian(&g, 6, 1, 3).unwrap();
        let x = euler_maruyama(&SdeModel::brownian(0.0, 0.0), &b).unwrap();
        assert_eq!(x, b.brownian(0));
    }

    #[test]
    fn blowup_is_reported() {
        let g = TimeGrid::uniform(0.0, 1.0, 50).unwrap();
        let b = sample_brownian(&g, 2, 1, 3).unwrap();
        let m = LinearSdeConfig { drift_lin: 1e300, x0: 1.0, ..Default::default() }.build(0.0);
        let err = euler_maruyama(&m, &b).unwrap_err();
        assert!(matches!(err, Error::SimulationBlowup { .. }));
    }

    #[test]
    fn validation_flags_understated_beta() {
        let mut m = LinearSdeConfig { drift_lin: -2.0, ..Default::default() }.build(0.0);
        assert!(m.validate(1.0, 5.0, 500, 1).pass);
        m.lipschitz_beta = 1.0;
        assert!(!m.validate(1.0, 5.0, 500, 1).pass);
    }
}
