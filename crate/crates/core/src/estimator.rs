//! Plain and reservoir sliced Wasserstein estimators.
//!
//! Both estimators return the loss together with its gradient with respect
//! to the first sample set. Per direction the gradient of the 1-D cost is
//! pulled back through the linear projection: entry `i` of the 1-D gradient
//! contributes `g_i * theta` to row `i` of the sample-set gradient.
//!
//! The reservoir estimator treats its importance weights as constants when
//! differentiating, so its gradient is `sum_i w_i * grad D(theta_i)` over the
//! reservoir survivors only. Fresh candidates that do not survive selection
//! are evaluated for keying but never enter the loss.

use crate::error::{invalid, Error, Result};
use crate::numeric::{project_into, sample_directions, Direction, RngState, SampleSet};
use crate::reservoir::{decay_factor, ess_check, select, Candidate, Reservoir, ReservoirEntry};
use crate::wasserstein1d::{sorted_cost, CostScratch};

/// Reservoir estimator hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ReswdConfig {
    /// Projection budget `L = K + M`.
    pub total_projections: usize,
    /// Fresh directions drawn per step, `M`.
    pub fresh_count: usize,
    /// Wasserstein order of the per-direction cost.
    pub p: f64,
    /// Flush when `ESS < alpha * survivors`.
    pub alpha: f64,
    /// Age constant; `0` disables ageing.
    pub tau: f64,
    pub seed: u64,
}

impl Default for ReswdConfig {
    fn default() -> Self {
        Self { total_projections: 64, fresh_count: 8, p: 2.0, alpha: 0.5, tau: 0.0, seed: 0 }
    }
}

impl ReswdConfig {
    /// `K = L - M`.
    pub fn reservoir_capacity(&self) -> usize {
        self.total_projections.saturating_sub(self.fresh_count)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fresh_count == 0 {
            return Err(Error::Config("fresh must be >= 1".into()));
        }
        if self.fresh_count >= self.total_projections {
            return Err(Error::Config("fresh must leave reservoir capacity ≥ 1".into()));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::Config(format!("p must be >= 1, got {}", self.p)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be >= 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Loss value, its gradient and per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub value: f64,
    /// Row-major `N x d` gradient of `value` with respect to the first sample set.
    pub grad: Vec<f64>,
    pub ess: f64,
    /// The reservoir was emptied after this step.
    pub flushed: bool,
    /// All probed directions had zero cost.
    pub degenerate: bool,
    /// Directions that entered the loss.
    pub directions: Vec<Direction>,
    /// Cost `D(theta)` of each loss direction.
    pub per_direction_costs: Vec<f64>,
    /// Weight of each loss direction (sums to one).
    pub weights: Vec<f64>,
    /// Number of 1-D cost evaluations performed this step.
    pub cost_evaluations: usize,
}

struct SliceEval {
    cost: f64,
    grad: Vec<f64>,
}

fn check_pair(x: &SampleSet, y: &SampleSet) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(invalid(format!(
            "sample sets have different dimensions: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(())
}

fn evaluate<'a>(
    x: &SampleSet,
    y: &SampleSet,
    directions: impl Iterator<Item = &'a Direction>,
    p: f64,
    rng: &mut RngState,
) -> Vec<SliceEval> {
    let mut scratch = CostScratch::default();
    let mut px = Vec::with_capacity(x.n_points());
    let mut py = Vec::with_capacity(y.n_points());
    directions
        .map(|theta| {
            project_into(x, theta.as_slice(), &mut px);
            project_into(y, theta.as_slice(), &mut py);
            let mut grad = vec![0.0; px.len()];
            let cost = sorted_cost(&px, &py, p, rng, &mut scratch, Some(&mut grad));
            SliceEval { cost, grad }
        })
        .collect()
}

fn pull_back(out: &mut [f64], grad_1d: &[f64], theta: &[f64], weight: f64) {
    for (row, &g) in out.chunks_exact_mut(theta.len()).zip(grad_1d) {
        let s = weight * g;
        for (o, t) in row.iter_mut().zip(theta) {
            *o += s * t;
        }
    }
}

/// Plain Monte Carlo sliced estimate over `projections` fresh directions
/// with uniform weights `1/L`.
pub fn swd_estimate(
    x: &SampleSet,
    y: &SampleSet,
    projections: usize,
    p: f64,
    rng: &mut RngState,
) -> Result<EstimateResult> {
    check_pair(x, y)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("p must be >= 1, got {p}")));
    }
    let directions = sample_directions(rng, projections, x.dim())?;
    let evals = evaluate(x, y, directions.iter(), p, rng);
    let w = 1.0 / projections as f64;
    let mut grad = vec![0.0; x.as_slice().len()];
    let mut value = 0.0;
    for (theta, e) in directions.iter().zip(&evals) {
        value += w * e.cost;
        pull_back(&mut grad, &e.grad, theta.as_slice(), w);
    }
    Ok(EstimateResult {
        value,
        grad,
        ess: projections as f64,
        flushed: false,
        degenerate: evals.iter().all(|e| e.cost == 0.0),
        directions,
        per_direction_costs: evals.iter().map(|e| e.cost).collect(),
        weights: vec![w; projections],
        cost_evaluations: projections,
    })
}

/// One reservoir step at time `t`: age the stored entries, draw `M` fresh
/// directions, evaluate the cost of every pool member, select `K`
/// survivors by weighted reservoir sampling and return their
/// self-normalised estimate together with the next reservoir (empty when
/// the effective sample size collapsed).
pub fn reswd_step(
    x: &SampleSet,
    y: &SampleSet,
    mut reservoir: Reservoir,
    cfg: &ReswdConfig,
    t: u64,
    rng: &mut RngState,
) -> Result<(EstimateResult, Reservoir)> {
    cfg.validate()?;
    check_pair(x, y)?;
    let capacity = cfg.reservoir_capacity();
    if reservoir.capacity() != capacity {
        return Err(Error::Config(format!(
            "reservoir capacity {} does not match L - M = {capacity}",
            reservoir.capacity()
        )));
    }
    if let Some(d) = reservoir.dim() {
        if d != x.dim() {
            return Err(invalid(format!(
                "reservoir directions have dimension {d}, samples have {}",
                x.dim()
            )));
        }
    }
    if t < reservoir.current_step() {
        return Err(invalid(format!(
            "step {t} precedes the reservoir's step {}",
            reservoir.current_step()
        )));
    }

    reservoir.decay(t, cfg.tau)?;
    let stored = reservoir.into_entries();
    let fresh = sample_directions(rng, cfg.fresh_count, x.dim())?;

    let pool_dirs = stored.iter().map(|e| &e.direction).chain(fresh.iter());
    let evals = evaluate(x, y, pool_dirs, cfg.p, rng);

    let stored_len = stored.len();
    let mut pool: Vec<Candidate> = Vec::with_capacity(evals.len());
    for (e, eval) in stored.into_iter().zip(&evals) {
        let age = decay_factor(t, e.inserted_at, cfg.tau);
        pool.push(Candidate {
            direction: e.direction,
            cost: eval.cost,
            weight: eval.cost * age,
            inserted_at: e.inserted_at,
        });
    }
    for (theta, eval) in fresh.into_iter().zip(&evals[stored_len..]) {
        pool.push(Candidate::new(theta, eval.cost, t));
    }

    let cost_evaluations = pool.len();
    let selection = select(pool, capacity, rng)?;

    let mut grad = vec![0.0; x.as_slice().len()];
    let mut value = 0.0;
    for ((entry, &i), &w) in selection.survivors.iter().zip(&selection.pool_indices).zip(&selection.norm_weights) {
        value += w * evals[i].cost;
        pull_back(&mut grad, &evals[i].grad, entry.direction.as_slice(), w);
    }

    // Compare against the survivor count the pool allows, so a refilling
    // reservoir is not flushed for being small.
    let expected = capacity.min(cost_evaluations);
    let flushed = selection.degenerate || ess_check(&selection, cfg.alpha, expected);
    let survivors: Vec<ReservoirEntry> = selection.survivors;
    let directions = survivors.iter().map(|e| e.direction.clone()).collect();
    let next = if flushed {
        Reservoir::from_entries(Vec::new(), capacity, t)?
    } else {
        Reservoir::from_entries(survivors, capacity, t)?
    };

    Ok((
        EstimateResult {
            value,
            grad,
            ess: selection.ess,
            flushed,
            degenerate: selection.degenerate,
            directions,
            per_direction_costs: selection.costs,
            weights: selection.norm_weights,
            cost_evaluations,
        },
        next,
    ))
}

/// A stateful loss estimator driven once per optimisation step.
pub trait Estimator {
    fn estimate(&mut self, x: &SampleSet, y: &SampleSet) -> Result<EstimateResult>;
}

/// Plain sliced estimator with its own random stream.
#[derive(Debug, Clone)]
pub struct Swd {
    pub projections: usize,
    pub p: f64,
    rng: RngState,
}

impl Swd {
    pub fn new(projections: usize, p: f64, seed: u64) -> Self {
        Self { projections, p, rng: RngState::new(seed) }
    }
}

impl Estimator for Swd {
    fn estimate(&mut self, x: &SampleSet, y: &SampleSet) -> Result<EstimateResult> {
        swd_estimate(x, y, self.projections, self.p, &mut self.rng)
    }
}

/// Reservoir estimator owning its reservoir, step counter and random stream.
#[derive(Debug, Clone)]
pub struct Reswd {
    cfg: ReswdConfig,
    reservoir: Reservoir,
    rng: RngState,
    step: u64,
}

impl Reswd {
    pub fn new(cfg: ReswdConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            reservoir: Reservoir::new(cfg.reservoir_capacity()),
            rng: RngState::new(cfg.seed),
            step: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &ReswdConfig {
        &self.cfg
    }

    pub fn reservoir(&self) -> &Reservoir {
        &self.reservoir
    }

    /// Number of completed steps.
    pub fn step(&self) -> u64 {
        self.step
    }
}

impl Estimator for Reswd {
    fn estimate(&mut self, x: &SampleSet, y: &SampleSet) -> Result<EstimateResult> {
        let t = self.step + 1;
        let reservoir = std::mem::replace(&mut self.reservoir, Reservoir::new(0));
        match reswd_step(x, y, reservoir.clone(), &self.cfg, t, &mut self.rng) {
            Ok((result, next)) => {
                self.reservoir = next;
                self.step = t;
                Ok(result)
            }
            Err(e) => {
                self.reservoir = reservoir;
                Err(e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wasserstein1d::w1d_cost;

    fn gaussian(rng: &mut RngState, n: usize, d: usize, shift: f64, scale: f64) -> SampleSet {
        let data = (0..n * d).map(|_| shift + scale * rng.standard_normal()).collect();
        SampleSet::new(data, n, d).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ReswdConfig::default().validate().is_ok());
        assert_eq!(ReswdConfig::default().reservoir_capacity(), 56);
        let err = ReswdConfig { fresh_count: 64, ..Default::default() }.validate().unwrap_err();
        assert!(err.to_string().contains("fresh must leave reservoir capacity ≥ 1"));
        assert!(ReswdConfig { fresh_count: 0, ..Default::default() }.validate().is_err());
        assert!(ReswdConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(ReswdConfig { p: 0.5, ..Default::default() }.validate().is_err());
        assert!(ReswdConfig { tau: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn swd_zero_at_identity() {
        let x = gaussian(&mut RngState::new(1), 32, 3, 0.0, 1.0);
        let r = swd_estimate(&x, &x, 16, 2.0, &mut RngState::new(2)).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.grad.iter().all(|&g| g == 0.0));
        assert_eq!(r.ess, 16.0);
    }

    #[test]
    fn swd_unit_shift_on_circle() {
        // D(theta) = theta_x^2, whose mean over the circle is 1/2
        let x = SampleSet::from_rows(&[[0.0, 0.0]]).unwrap();
        let y = SampleSet::from_rows(&[[1.0, 0.0]]).unwrap();
        let l = 20_000;
        let r = swd_estimate(&x, &y, l, 2.0, &mut RngState::new(3)).unwrap();
        let var = r.per_direction_costs.iter().map(|c| (c - r.value).powi(2)).sum::<f64>() / (l - 1) as f64;
        let se = (var / l as f64).sqrt();
        assert!((r.value - 0.5).abs() < 3.0 * se, "{} +- {se}", r.value);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let x = gaussian(&mut RngState::new(1), 4, 3, 0.0, 1.0);
        let y = gaussian(&mut RngState::new(1), 4, 2, 0.0, 1.0);
        assert!(swd_estimate(&x, &y, 4, 2.0, &mut RngState::new(1)).is_err());
        let cfg = ReswdConfig::default();
        let res = Reservoir::new(cfg.reservoir_capacity());
        assert!(reswd_step(&x, &y, res, &cfg, 1, &mut RngState::new(1)).is_err());
    }

    #[test]
    fn first_step_is_selection_over_fresh() {
        let mut rng = RngState::new(4);
        let x = gaussian(&mut rng, 64, 3, 0.0, 1.0);
        let y = gaussian(&mut rng, 64, 3, 1.0, 2.0);
        let cfg = ReswdConfig { total_projections: 8, fresh_count: 6, ..Default::default() };
        let (r, next) = reswd_step(&x, &y, Reservoir::new(2), &cfg, 1, &mut RngState::new(5)).unwrap();
        assert_eq!(r.cost_evaluations, 6);
        assert_eq!(r.directions.len(), 2);
        let expected: f64 = r.weights.iter().zip(&r.per_direction_costs).map(|(w, c)| w * c).sum();
        assert!((r.value - expected).abs() < 1e-12);
        assert!(next.len() <= 2);
        assert_eq!(next.current_step(), 1);
    }

    #[test]
    fn matched_sets_degenerate() {
        let x = gaussian(&mut RngState::new(6), 16, 2, 0.0, 1.0);
        let mut est = Reswd::new(ReswdConfig { total_projections: 8, fresh_count: 2, ..Default::default() }).unwrap();
        for _ in 0..3 {
            let r = est.estimate(&x, &x).unwrap();
            assert_eq!(r.value, 0.0);
            assert!(r.grad.iter().all(|&g| g == 0.0));
            assert!(r.degenerate && r.flushed);
            assert!(est.reservoir().is_empty());
        }
    }

    #[test]
    fn budget_is_k_plus_m_once_warm() {
        let mut rng = RngState::new(7);
        let x = gaussian(&mut rng, 128, 3, 0.0, 1.0);
        let y = gaussian(&mut rng, 128, 3, 2.0, 1.0);
        let cfg = ReswdConfig { total_projections: 16, fresh_count: 4, seed: 11, ..Default::default() };
        let mut est = Reswd::new(cfg).unwrap();
        for _ in 0..30 {
            let before = est.reservoir().len();
            let r = est.estimate(&x, &y).unwrap();
            assert_eq!(r.cost_evaluations, before + 4);
            assert!(est.reservoir().len() <= 12);
        }
    }

    #[test]
    fn weights_are_detached() {
        let mut rng = RngState::new(8);
        let x = gaussian(&mut rng, 40, 3, 0.0, 1.0);
        let y = gaussian(&mut rng, 40, 3, 0.5, 1.5);
        let mut est = Reswd::new(ReswdConfig { total_projections: 12, fresh_count: 3, seed: 2, ..Default::default() })
            .unwrap();
        for _ in 0..5 {
            let r = est.estimate(&x, &y).unwrap();
            let mut expected = vec![0.0; r.grad.len()];
            for ((theta, &w), &c) in r.directions.iter().zip(&r.weights).zip(&r.per_direction_costs) {
                let px = crate::numeric::project(&x, theta).unwrap();
                let py = crate::numeric::project(&y, theta).unwrap();
                let sc = w1d_cost(&px, &py, 2.0, &mut RngState::new(0)).unwrap();
                assert!((sc.value - c).abs() < 1e-12);
                pull_back(&mut expected, &sc.grad, theta.as_slice(), w);
            }
            for (a, b) in expected.iter().zip(&r.grad) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reproducible_bitwise() {
        let mut rng = RngState::new(9);
        let x = gaussian(&mut rng, 50, 3, 0.0, 1.0);
        let y = gaussian(&mut rng, 70, 3, 1.0, 1.0);
        let run = || {
            let mut est = Reswd::new(ReswdConfig { total_projections: 10, fresh_count: 2, seed: 5, ..Default::default() })
                .unwrap();
            (0..8).map(|_| est.estimate(&x, &y).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn unsaturated_first_step_is_harmonic_weighted_swd() {
        let mut rng = RngState::new(10);
        let x = gaussian(&mut rng, 60, 3, 0.0, 1.0);
        let y = gaussian(&mut rng, 60, 3, 1.0, 0.5);
        let cfg = ReswdConfig { total_projections: 16, fresh_count: 8, ..Default::default() };
        let (r, _) = reswd_step(&x, &y, Reservoir::new(8), &cfg, 1, &mut RngState::new(77)).unwrap();
        let swd = swd_estimate(&x, &y, 8, 2.0, &mut RngState::new(77)).unwrap();
        assert_eq!(r.directions.len(), 8);
        for d in &r.directions {
            assert!(swd.directions.contains(d));
        }
        let harmonic = 8.0 / swd.per_direction_costs.iter().map(|c| 1.0 / c).sum::<f64>();
        assert!((r.value - harmonic).abs() < 1e-12);
    }

    #[test]
    fn equal_costs_give_plain_average() {
        // in one dimension both directions (+1, -1) carry the same cost
        let x = SampleSet::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
        let y = SampleSet::from_rows(&[[0.5], [2.0], [2.5]]).unwrap();
        let cfg = ReswdConfig { total_projections: 8, fresh_count: 4, ..Default::default() };
        let (r, _) = reswd_step(&x, &y, Reservoir::new(4), &cfg, 1, &mut RngState::new(1)).unwrap();
        let swd = swd_estimate(&x, &y, 4, 2.0, &mut RngState::new(1)).unwrap();
        assert!(r.weights.iter().all(|&w| (w - 0.25).abs() < 1e-15));
        assert!((r.value - swd.value).abs() < 1e-12);
        assert!((r.ess - 4.0).abs() < 1e-12 && !r.flushed);
    }
}
