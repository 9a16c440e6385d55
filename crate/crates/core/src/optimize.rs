//! Gradient-based distribution matching.
//!
//! [`match_particles`] moves the points of a sample set directly along the
//! estimator gradient. [`fit_transform`] optimises the parameters of a
//! differentiable map applied to a fixed source set, contracting the
//! estimator gradient with the map's Jacobian.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::estimator::{Estimator, Reswd, ReswdConfig, Swd};
use crate::harness::true_marginal_w1;
use crate::numeric::SampleSet;

/// Optimiser choice and hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    /// Adam with `beta = (0.9, 0.999)` and `eps = 1e-8`.
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn sgd(lr: f64) -> Self {
        OptimizerKind::Sgd { lr }
    }

    fn build(&self, n_params: usize) -> Optimizer {
        match *self {
            OptimizerKind::Sgd { lr } => Optimizer::Sgd { lr },
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                Optimizer::Adam(AdamState::new(n_params, lr, beta1, beta2, eps))
            }
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::adam(1e-2)
    }
}

/// Bias-corrected Adam moments for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grad.len(), self.m.len(), "gradient length mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

enum Optimizer {
    Sgd { lr: f64 },
    Adam(AdamState),
}

impl Optimizer {
    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
            Optimizer::Adam(state) => state.step(params, grad),
        }
    }
}

/// Which estimator drives the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Plain sliced estimator with `L = total_projections` fresh directions per step.
    Swd,
    /// Reservoir estimator with the full configuration.
    Reswd,
}

impl Mode {
    pub fn estimator(&self, cfg: &ReswdConfig) -> Result<Box<dyn Estimator + Send>> {
        Ok(match self {
            Mode::Swd => {
                cfg.validate()?;
                Box::new(Swd::new(cfg.total_projections, cfg.p, cfg.seed))
            }
            Mode::Reswd => Box::new(Reswd::new(cfg.clone())?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Swd => "swd",
            Mode::Reswd => "reswd",
        }
    }
}

/// Metrics recorded at one optimisation step, evaluated at the iterate the
/// loss was computed on (before that step's update).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub mean_w1: f64,
    /// Time spent in the estimator and parameter update.
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct MatchReport {
    pub records: Vec<StepRecord>,
    /// Marginal W1 after the last update.
    pub final_mean_w1: f64,
    pub final_samples: Option<SampleSet>,
    pub final_params: Option<Vec<f64>>,
    pub flushes: usize,
    pub warnings: Vec<String>,
}

impl MatchReport {
    /// CSV with columns `step,loss,mean_w1,wall_ms`. Timing is
    /// nondeterministic, so the column is left empty unless requested.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::from("step,loss,mean_w1,wall_ms\n");
        for r in &self.records {
            if include_timing {
                out.push_str(&format!("{},{},{},{}\n", r.step, r.loss, r.mean_w1, r.wall_ms));
            } else {
                out.push_str(&format!("{},{},{},\n", r.step, r.loss, r.mean_w1));
            }
        }
        out
    }
}

fn check_finite(step: usize, what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step, what: what.to_string() })
    }
}

/// Moves the points of `x0` towards `y` for `steps` iterations.
pub fn match_particles(
    x0: &SampleSet,
    y: &SampleSet,
    cfg: &ReswdConfig,
    steps: usize,
    opt: &OptimizerKind,
    mode: Mode,
) -> Result<MatchReport> {
    let mut estimator = mode.estimator(cfg)?;
    match_particles_with(x0, y, estimator.as_mut(), steps, opt)
}

/// [`match_particles`] with a caller-supplied estimator.
pub fn match_particles_with(
    x0: &SampleSet,
    y: &SampleSet,
    estimator: &mut dyn Estimator,
    steps: usize,
    opt: &OptimizerKind,
) -> Result<MatchReport> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if x0.dim() != y.dim() {
        return Err(Error::InvalidArgument(format!(
            "source dimension {} does not match target dimension {}",
            x0.dim(),
            y.dim()
        )));
    }
    let mut x = x0.clone();
    let mut optimizer = opt.build(x.as_slice().len());
    let mut records = Vec::with_capacity(steps);
    let mut flushes = 0;
    for step in 1..=steps {
        let mean_w1 = true_marginal_w1(&x, y)?;
        let start = Instant::now();
        let est = estimator.estimate(&x, y)?;
        check_finite(step, "loss", &[est.value])?;
        check_finite(step, "gradient", &est.grad)?;
        optimizer.step(x.as_mut_slice(), &est.grad);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        check_finite(step, "sample coordinates", x.as_slice())?;
        flushes += est.flushed as usize;
        records.push(StepRecord { step, loss: est.value, mean_w1, wall_ms });
    }
    Ok(MatchReport {
        records,
        final_mean_w1: true_marginal_w1(&x, y)?,
        final_samples: Some(x),
        final_params: None,
        flushes,
        warnings: Vec::new(),
    })
}

/// A differentiable map from a parameter vector to a sample set.
pub trait ParametricTransform {
    fn n_params(&self) -> usize;

    fn apply(&self, params: &[f64]) -> Result<SampleSet>;

    /// Contracts `grad_out` (row-major, shaped like the output) with the
    /// Jacobian of [`ParametricTransform::apply`], giving the gradient with
    /// respect to `params`.
    fn vjp(&self, params: &[f64], grad_out: &[f64]) -> Result<Vec<f64>>;
}

/// Fits the transform's parameters so that its output matches `y`.
pub fn fit_transform(
    params0: &[f64],
    transform: &dyn ParametricTransform,
    y: &SampleSet,
    cfg: &ReswdConfig,
    steps: usize,
    opt: &OptimizerKind,
    mode: Mode,
) -> Result<(Vec<f64>, MatchReport)> {
    if params0.len() != transform.n_params() {
        return Err(Error::InvalidArgument(format!(
            "transform takes {} parameters, got {}",
            transform.n_params(),
            params0.len()
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    let mut estimator = mode.estimator(cfg)?;
    let mut params = params0.to_vec();
    let mut optimizer = opt.build(params.len());
    let mut records = Vec::with_capacity(steps);
    let mut flushes = 0;

    let evaluate = |params: &[f64], step: usize| -> Result<SampleSet> {
        transform.apply(params).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::NonFinite {
                step,
                what: format!("transform output ({msg}) at parameters {params:?}"),
            },
            other => other,
        })
    };

    for step in 1..=steps {
        let z = evaluate(&params, step)?;
        let mean_w1 = true_marginal_w1(&z, y)?;
        let start = Instant::now();
        let est = estimator.estimate(&z, y)?;
        check_finite(step, "loss", &[est.value])?;
        let grad = transform.vjp(&params, &est.grad)?;
        check_finite(step, "parameter gradient", &grad)?;
        optimizer.step(&mut params, &grad);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        flushes += est.flushed as usize;
        records.push(StepRecord { step, loss: est.value, mean_w1, wall_ms });
    }
    let z = evaluate(&params, steps)?;
    let report = MatchReport {
        records,
        final_mean_w1: true_marginal_w1(&z, y)?,
        final_samples: None,
        final_params: Some(params.clone()),
        flushes,
        warnings: Vec::new(),
    };
    Ok((params, report))
}
