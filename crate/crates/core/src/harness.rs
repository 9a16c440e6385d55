//! Synthetic distribution-matching benchmark.
//!
//! Each benchmark pair draws two random distributions from three families
//! (normal, uniform, two-component normal mixture), samples a point cloud
//! from each and lets every method under test move the first cloud onto the
//! second with [`match_particles`]. Progress is measured with the exact
//! per-axis W1 distance averaged over axes, which is independent of any
//! slicing.
//!
//! Random parameter ranges (per axis unless noted):
//!
//! | parameter | range |
//! |---|---|
//! | mean | uniform in `[-5, 5]` |
//! | scale (standard deviation) | uniform in `[0.5, 2]` |
//! | mixture separation (scalar, along a random unit axis) | uniform in `[2, 8]` |
//! | mixture weight of the first mode | uniform in `[0.3, 0.7]` |
//!
//! The uniform family is centred on `mean` with half-width `sqrt(3) * scale`,
//! so `scale` is its standard deviation as for the other families.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::estimator::ReswdConfig;
use crate::numeric::{random_direction, RngState, SampleSet};
use crate::optimize::{match_particles, Mode, OptimizerKind};
use crate::wasserstein1d::sort_floats;

pub const MEAN_RANGE: (f64, f64) = (-5.0, 5.0);
pub const SCALE_RANGE: (f64, f64) = (0.5, 2.0);
pub const SEPARATION_RANGE: (f64, f64) = (2.0, 8.0);
pub const MODE_WEIGHT_RANGE: (f64, f64) = (0.3, 0.7);

/// Runs needed before a per-step correlation is reported.
pub const MIN_CORRELATION_RUNS: usize = 30;
/// Steps excluded from the timing statistic.
pub const TIMING_WARMUP_STEPS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Normal,
    Uniform,
    BimodalNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionSpec {
    pub family: Family,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Half the displacement between the two mixture modes (mixture only).
    pub mode_offset: Vec<f64>,
    /// Probability of the `mean + mode_offset` component (mixture only).
    pub mode_weight: f64,
}

impl DistributionSpec {
    pub fn normal(mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        let dim = mean.len();
        Self { family: Family::Normal, mean, scale, mode_offset: vec![0.0; dim], mode_weight: 1.0 }.validated()
    }

    pub fn uniform(mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        let dim = mean.len();
        Self { family: Family::Uniform, mean, scale, mode_offset: vec![0.0; dim], mode_weight: 1.0 }.validated()
    }

    pub fn bimodal(mean: Vec<f64>, scale: Vec<f64>, mode_offset: Vec<f64>, mode_weight: f64) -> Result<Self> {
        Self { family: Family::BimodalNormal, mean, scale, mode_offset, mode_weight }.validated()
    }

    fn validated(self) -> Result<Self> {
        let d = self.mean.len();
        if d == 0 || self.scale.len() != d || self.mode_offset.len() != d {
            return Err(invalid("distribution parameters must share a non-zero dimension"));
        }
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid("distribution scales must be positive"));
        }
        if self.family == Family::BimodalNormal && !(self.mode_weight > 0.0 && self.mode_weight < 1.0) {
            return Err(invalid("mixture weight must lie in (0, 1)"));
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draws a family uniformly and its parameters from the documented ranges.
    pub fn random(rng: &mut RngState, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        let family = [Family::Normal, Family::Uniform, Family::BimodalNormal][rng.below(3)];
        let mean: Vec<f64> = (0..dim).map(|_| rng.uniform_range(MEAN_RANGE.0, MEAN_RANGE.1)).collect();
        let scale: Vec<f64> = (0..dim).map(|_| rng.uniform_range(SCALE_RANGE.0, SCALE_RANGE.1)).collect();
        match family {
            Family::Normal => Self::normal(mean, scale),
            Family::Uniform => Self::uniform(mean, scale),
            Family::BimodalNormal => {
                let separation = rng.uniform_range(SEPARATION_RANGE.0, SEPARATION_RANGE.1);
                let axis = random_direction(rng, dim);
                let offset = axis.as_slice().iter().map(|a| 0.5 * separation * a).collect();
                let weight = rng.uniform_range(MODE_WEIGHT_RANGE.0, MODE_WEIGHT_RANGE.1);
                Self::bimodal(mean, scale, offset, weight)
            }
        }
    }

    pub fn sample(&self, n: usize, rng: &mut RngState) -> Result<SampleSet> {
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let sign = match self.family {
                Family::BimodalNormal if rng.uniform() < self.mode_weight => 1.0,
                Family::BimodalNormal => -1.0,
                _ => 0.0,
            };
            for k in 0..d {
                let noise = match self.family {
                    Family::Uniform => 3f64.sqrt() * (2.0 * rng.uniform() - 1.0),
                    _ => rng.standard_normal(),
                };
                data.push(self.mean[k] + sign * self.mode_offset[k] + self.scale[k] * noise);
            }
        }
        SampleSet::new(data, n, d)
    }
}

/// Two random distributions and `n` samples from each.
pub fn generate_pair(
    rng: &mut RngState,
    dim: usize,
    n: usize,
) -> Result<(SampleSet, SampleSet, DistributionSpec, DistributionSpec)> {
    let a = DistributionSpec::random(rng, dim)?;
    let b = DistributionSpec::random(rng, dim)?;
    let x = a.sample(n, rng)?;
    let y = b.sample(n, rng)?;
    Ok((x, y, a, b))
}

/// Exact W1 between two empirical measures on the line, `int |F - G|`.
/// Works for unequal sample counts without resampling.
pub fn w1_exact_1d(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sort_floats(&mut sa);
    sort_floats(&mut sb);
    if sa.len() == sb.len() {
        return sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / sa.len() as f64;
    }
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut prev = sa[0].min(sb[0]);
    while i < sa.len() || j < sb.len() {
        let next = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < sa.len() && sa[i] == next {
            i += 1;
        }
        while j < sb.len() && sb[j] == next {
            j += 1;
        }
        prev = next;
    }
    total
}

/// Per-axis exact W1 averaged over the axes.
pub fn true_marginal_w1(x: &SampleSet, y: &SampleSet) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(invalid(format!("dimension mismatch: {} vs {}", x.dim(), y.dim())));
    }
    let d = x.dim();
    Ok((0..d).map(|k| w1_exact_1d(&x.column(k), &y.column(k))).sum::<f64>() / d as f64)
}

/// One estimator configuration under test.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub name: String,
    pub mode: Mode,
    pub cfg: ReswdConfig,
}

impl MethodSpec {
    pub fn swd(cfg: &ReswdConfig) -> Self {
        Self { name: "swd".into(), mode: Mode::Swd, cfg: cfg.clone() }
    }

    pub fn reswd(cfg: &ReswdConfig) -> Self {
        Self { name: "reswd".into(), mode: Mode::Reswd, cfg: cfg.clone() }
    }

    /// Reservoir method with a different fresh count at the same budget.
    pub fn reswd_fresh(cfg: &ReswdConfig, fresh: usize) -> Self {
        Self {
            name: format!("reswd_m{fresh}"),
            mode: Mode::Reswd,
            cfg: ReswdConfig { fresh_count: fresh, ..cfg.clone() },
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub n_pairs: usize,
    pub n_samples: usize,
    pub dim: usize,
    pub steps: usize,
    /// Independent estimator seeds per pair.
    pub seeds_per_pair: usize,
    pub seed: u64,
    pub methods: Vec<MethodSpec>,
    pub optimizer: OptimizerKind,
}

/// Default particle step size for the benchmark.
pub const DEFAULT_LR: f64 = 1e-2;

impl Default for BenchConfig {
    fn default() -> Self {
        let est = ReswdConfig::default();
        Self {
            n_pairs: 1000,
            n_samples: 1024,
            dim: 3,
            steps: 300,
            seeds_per_pair: 1,
            seed: 0,
            methods: vec![MethodSpec::swd(&est), MethodSpec::reswd(&est)],
            optimizer: OptimizerKind::adam(DEFAULT_LR),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 || self.n_samples == 0 || self.dim == 0 || self.steps == 0 || self.seeds_per_pair == 0 {
            return Err(Error::Config("pairs, samples, dim, steps and seeds must all be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods to benchmark".into()));
        }
        for m in &self.methods {
            m.cfg.validate()?;
        }
        Ok(())
    }
}

/// Trajectory of one (pair, seed, method) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub pair: usize,
    pub rep: usize,
    pub losses: Vec<f64>,
    pub mean_w1: Vec<f64>,
    pub wall_ms: Vec<f64>,
    pub final_mean_w1: f64,
    pub flushes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailedRun {
    pub pair: usize,
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub step: usize,
    pub mean_w1: f64,
    pub pearson_corr: Option<f64>,
    pub wall_ms_mean: f64,
}

#[derive(Debug, Clone)]
pub struct MethodReport {
    pub name: String,
    pub mode: Mode,
    pub cfg: ReswdConfig,
    /// Mean over runs of the marginal W1 after the last update.
    pub final_mean_w1: f64,
    /// Standard error of `final_mean_w1`.
    pub final_stderr: f64,
    /// Mean over runs of each run's median step time (steps after warm-up).
    pub ms_per_step: f64,
    pub series: Vec<SeriesRow>,
    pub runs: Vec<RunRecord>,
    pub failed: Vec<FailedRun>,
}

impl MethodReport {
    /// CSV with columns `step,mean_w1,pearson_corr,wall_ms_mean`. The
    /// correlation field is empty when fewer than
    /// [`MIN_CORRELATION_RUNS`] runs exist; timing is only written when
    /// requested since it is not reproducible.
    pub fn series_csv(&self, include_timing: bool) -> String {
        let mut out = String::from("step,mean_w1,pearson_corr,wall_ms_mean\n");
        for r in &self.series {
            let corr = r.pearson_corr.map(|c| c.to_string()).unwrap_or_default();
            let wall = if include_timing { r.wall_ms_mean.to_string() } else { String::new() };
            out.push_str(&format!("{},{},{},{}\n", r.step, r.mean_w1, corr, wall));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub methods: Vec<MethodReport>,
}

#[derive(Serialize)]
struct SummaryEntry {
    final_mean_w1: f64,
    ms_per_step: f64,
    runs: usize,
    failed: usize,
}

impl BenchReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// `{ method: { final_mean_w1, ms_per_step, runs, failed } }`
    pub fn summary_json(&self) -> String {
        let map: BTreeMap<&str, SummaryEntry> = self
            .methods
            .iter()
            .map(|m| {
                (
                    m.name.as_str(),
                    SummaryEntry {
                        final_mean_w1: m.final_mean_w1,
                        ms_per_step: m.ms_per_step,
                        runs: m.runs.len(),
                        failed: m.failed.len(),
                    },
                )
            })
            .collect();
        serde_json::to_string_pretty(&map).expect("summary serialises")
    }
}

/// Pearson correlation, `None` for fewer than two points or zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Reduces per-run records to a method report. Pure in its inputs.
pub fn aggregate(method: &MethodSpec, steps: usize, runs: Vec<RunRecord>, failed: Vec<FailedRun>) -> MethodReport {
    let n = runs.len() as f64;
    let finals: Vec<f64> = runs.iter().map(|r| r.final_mean_w1).collect();
    let final_mean_w1 = if runs.is_empty() { f64::NAN } else { finals.iter().sum::<f64>() / n };
    let final_stderr = if runs.len() > 1 {
        let var = finals.iter().map(|f| (f - final_mean_w1).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        f64::NAN
    };
    let ms_per_step = if runs.is_empty() {
        f64::NAN
    } else {
        runs.iter()
            .map(|r| median(&r.wall_ms[TIMING_WARMUP_STEPS.min(r.wall_ms.len().saturating_sub(1))..]))
            .sum::<f64>()
            / n
    };
    let series = (0..steps)
        .map(|s| {
            let losses: Vec<f64> = runs.iter().map(|r| r.losses[s]).collect();
            let w1: Vec<f64> = runs.iter().map(|r| r.mean_w1[s]).collect();
            SeriesRow {
                step: s + 1,
                mean_w1: w1.iter().sum::<f64>() / n,
                pearson_corr: if runs.len() >= MIN_CORRELATION_RUNS { pearson(&losses, &w1) } else { None },
                wall_ms_mean: runs.iter().map(|r| r.wall_ms[s]).sum::<f64>() / n,
            }
        })
        .collect();
    MethodReport {
        name: method.name.clone(),
        mode: method.mode,
        cfg: method.cfg.clone(),
        final_mean_w1,
        final_stderr,
        ms_per_step,
        series,
        runs,
        failed,
    }
}

/// Seed of the estimator for run `(pair, rep)`; shared by all methods.
pub fn run_seed(root: u64, pair: usize, rep: usize) -> u64 {
    RngState::new(root).fork(((pair as u64) << 20) | rep as u64 | (1 << 63)).seed()
}

/// Sample clouds of benchmark pair `pair`.
pub fn pair_data(root: u64, pair: usize, dim: usize, n: usize) -> Result<(SampleSet, SampleSet)> {
    let mut rng = RngState::new(root).fork(pair as u64);
    let (x, y, _, _) = generate_pair(&mut rng, dim, n)?;
    Ok((x, y))
}

/// Runs every method on every pair and seed. Runs execute in parallel on
/// the current rayon pool; results do not depend on scheduling.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize, usize)> = (0..cfg.n_pairs)
        .flat_map(|pair| {
            (0..cfg.seeds_per_pair).flat_map(move |rep| (0..cfg.methods.len()).map(move |m| (pair, rep, m)))
        })
        .collect();

    let outcomes: Vec<(usize, std::result::Result<RunRecord, FailedRun>)> = tasks
        .par_iter()
        .map(|&(pair, rep, m)| {
            let method = &cfg.methods[m];
            let run = || -> Result<RunRecord> {
                let (x, y) = pair_data(cfg.seed, pair, cfg.dim, cfg.n_samples)?;
                let est_cfg = ReswdConfig { seed: run_seed(cfg.seed, pair, rep), ..method.cfg.clone() };
                let rep_ = match_particles(&x, &y, &est_cfg, cfg.steps, &cfg.optimizer, method.mode)?;
                Ok(RunRecord {
                    pair,
                    rep,
                    losses: rep_.records.iter().map(|r| r.loss).collect(),
                    mean_w1: rep_.records.iter().map(|r| r.mean_w1).collect(),
                    wall_ms: rep_.records.iter().map(|r| r.wall_ms).collect(),
                    final_mean_w1: rep_.final_mean_w1,
                    flushes: rep_.flushes,
                })
            };
            (m, run().map_err(|e| FailedRun { pair, rep, message: e.to_string() }))
        })
        .collect();

    let mut per_method: Vec<(Vec<RunRecord>, Vec<FailedRun>)> = vec![(Vec::new(), Vec::new()); cfg.methods.len()];
    for (m, outcome) in outcomes {
        match outcome {
            Ok(r) => per_method[m].0.push(r),
            Err(f) => per_method[m].1.push(f),
        }
    }
    let methods = cfg
        .methods
        .iter()
        .zip(per_method)
        .map(|(spec, (runs, failed))| aggregate(spec, cfg.steps, runs, failed))
        .collect();
    Ok(BenchReport { methods })
}
