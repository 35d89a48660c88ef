//! Auto-decoder training stage.
//!
//! Pretraining jointly optimizes the shared network weights and one latent
//! code per training sample against the sampled initial conditions, with an
//! `(1/sigma) ||z||^2` penalty keeping codes near the origin. A new
//! instance is then handled by freezing the weights and optimizing a single
//! latent code, warm-started from the nearest training sample.

pub mod optim;

use crate::net::{init_params, EmbeddingSpec, FlatParams, LatentCode, NetError, NetEval, NetworkArch};
use optim::Objective;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("optimization diverged (non-finite loss) at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Initial conditions evaluated on a collocation grid shared by every
/// sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingEnsemble {
    points: Vec<Vec<f64>>,
    samples: Vec<Vec<f64>>,
}

impl TrainingEnsemble {
    pub fn new(points: Vec<Vec<f64>>, samples: Vec<Vec<f64>>) -> Result<Self, TrainError> {
        if points.is_empty() {
            return Err(TrainError::Contract("collocation grid is empty".into()));
        }
        if samples.is_empty() {
            return Err(TrainError::Contract("ensemble has no samples".into()));
        }
        if let Some(bad) = samples.iter().position(|s| s.len() != points.len()) {
            return Err(TrainError::Contract(format!(
                "sample {bad} has {} values for {} collocation points",
                samples[bad].len(),
                points.len()
            )));
        }
        Ok(TrainingEnsemble { points, samples })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Pretrained state: shared weights, one code per training sample, and the
/// regularization scale they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    pub arch: NetworkArch,
    pub embedding: EmbeddingSpec,
    pub theta: FlatParams,
    pub codes: Vec<LatentCode>,
    pub sigma: f64,
}

impl Manifold {
    pub fn latent_dim(&self) -> usize {
        self.codes.first().map_or(0, LatentCode::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    Lbfgs { history: usize },
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        match self {
            OptimizerKind::Adam { lr, .. } => {
                if !(*lr > 0.0) {
                    return Err(TrainError::Config(format!("learning rate must be > 0, got {lr}")));
                }
            }
            OptimizerKind::Lbfgs { history } => {
                if *history == 0 {
                    return Err(TrainError::Config("L-BFGS history must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub iterations: usize,
    pub seed: u64,
}

/// Mean squared mismatch between the target values and the network field on
/// the collocation points: `(1/N) sum |u0(x_j) - U(theta, z, x_j)|^2`.
pub fn data_loss(
    arch: &NetworkArch,
    params: &FlatParams,
    emb: &EmbeddingSpec,
    z: &LatentCode,
    u0_values: &[f64],
    points: &[Vec<f64>],
) -> Result<f64, TrainError> {
    if points.is_empty() {
        return Err(TrainError::Contract("data_loss needs at least one point".into()));
    }
    if u0_values.len() != points.len() {
        return Err(TrainError::Contract(format!(
            "{} target values for {} points",
            u0_values.len(),
            points.len()
        )));
    }
    let mut eval = NetEval::new(arch, emb, z.len())?;
    let mut acc = 0.0;
    for (u0, x) in u0_values.iter().zip(points) {
        let r = eval.value(params, z, x) - u0;
        acc += r * r;
    }
    Ok(acc / points.len() as f64)
}

/// Pretraining objective: `sum_i (data_loss_i + (1/sigma) ||z_i||^2)`.
pub fn pretrain_loss(
    arch: &NetworkArch,
    emb: &EmbeddingSpec,
    params: &FlatParams,
    codes: &[LatentCode],
    ensemble: &TrainingEnsemble,
    sigma: f64,
) -> Result<f64, TrainError> {
    if !(sigma > 0.0) {
        return Err(TrainError::Config(format!("sigma must be > 0, got {sigma}")));
    }
    if codes.len() != ensemble.len() {
        return Err(TrainError::Contract(format!(
            "{} codes for {} samples",
            codes.len(),
            ensemble.len()
        )));
    }
    let mut total = 0.0;
    for (z, values) in codes.iter().zip(ensemble.samples()) {
        total += data_loss(arch, params, emb, z, values, ensemble.points())?;
        total += z.norm_sq() / sigma;
    }
    Ok(total)
}

/// Joint variable layout for pretraining: `[theta (p) | z_1 (n) | ... |
/// z_N (n)]`.
struct PretrainObjective<'a> {
    arch: &'a NetworkArch,
    emb: &'a EmbeddingSpec,
    ensemble: &'a TrainingEnsemble,
    sigma: f64,
    latent_dim: usize,
    p: usize,
}

impl PretrainObjective<'_> {
    /// Per-sample loss and gradient contribution, accumulated in one pass
    /// over the collocation points.
    fn sample_terms(&self, theta: &FlatParams, z: &LatentCode, values: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let mut eval =
            NetEval::new(self.arch, self.emb, self.latent_dim).expect("dims checked at build");
        let n_pts = self.ensemble.points().len() as f64;
        let mut loss = 0.0;
        let mut g_theta = vec![0.0; self.p];
        let mut g_z = vec![0.0; self.latent_dim];
        let mut point_grad = vec![0.0; self.p];
        let mut point_zgrad = vec![0.0; self.latent_dim];
        for (u0, x) in values.iter().zip(self.ensemble.points()) {
            let u = eval.value_with_grads(theta, z, x, &mut point_grad, Some(&mut point_zgrad));
            let r = u - u0;
            loss += r * r;
            let w = 2.0 * r / n_pts;
            for (g, pg) in g_theta.iter_mut().zip(&point_grad) {
                *g += w * pg;
            }
            for (g, pg) in g_z.iter_mut().zip(&point_zgrad) {
                *g += w * pg;
            }
        }
        loss /= n_pts;
        // latent regularization
        loss += z.norm_sq() / self.sigma;
        for (g, zi) in g_z.iter_mut().zip(z.values()) {
            *g += 2.0 * zi / self.sigma;
        }
        (loss, g_theta, g_z)
    }
}

impl Objective for PretrainObjective<'_> {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let theta = FlatParams::new(x[..self.p].to_vec());
        let codes: Vec<LatentCode> = (0..self.ensemble.len())
            .map(|i| {
                let start = self.p + i * self.latent_dim;
                LatentCode::new(x[start..start + self.latent_dim].to_vec())
            })
            .collect();

        // samples are independent; reduce in fixed sample order so the sum
        // is identical for any thread count
        let per_sample: Vec<(f64, Vec<f64>, Vec<f64>)> = codes
            .par_iter()
            .zip(self.ensemble.samples().par_iter())
            .map(|(z, values)| self.sample_terms(&theta, z, values))
            .collect();

        grad.fill(0.0);
        let mut total = 0.0;
        for (i, (loss, g_theta, g_z)) in per_sample.iter().enumerate() {
            total += loss;
            for (g, v) in grad[..self.p].iter_mut().zip(g_theta) {
                *g += v;
            }
            let start = self.p + i * self.latent_dim;
            grad[start..start + self.latent_dim].copy_from_slice(g_z);
        }
        total
    }
}

fn run_optimizer(
    obj: &mut dyn Objective,
    x: &mut [f64],
    opt: &OptimizerConfig,
) -> Result<Vec<f64>, TrainError> {
    opt.kind.validate()?;
    match opt.kind {
        OptimizerKind::Lbfgs { history } => optim::lbfgs(obj, x, history, opt.iterations),
        OptimizerKind::Adam { lr, beta1, beta2, eps } => {
            optim::adam(obj, x, lr, beta1, beta2, eps, opt.iterations)
        }
    }
}

/// Outcome of a pretraining run: the manifold plus the loss at every
/// accepted optimizer step.
#[derive(Debug, Clone)]
pub struct PretrainResult {
    pub manifold: Manifold,
    pub loss_history: Vec<f64>,
}

/// Jointly optimize shared weights and per-sample codes. Weights start from
/// the seeded Glorot draw, codes from zero (the regularizer's minimum).
/// Deterministic given `opt.seed`.
pub fn pretrain(
    ensemble: &TrainingEnsemble,
    arch: &NetworkArch,
    emb: &EmbeddingSpec,
    latent_dim: usize,
    sigma: f64,
    opt: &OptimizerConfig,
) -> Result<PretrainResult, TrainError> {
    if !(sigma > 0.0) {
        return Err(TrainError::Config(format!("sigma must be > 0, got {sigma}")));
    }
    NetEval::new(arch, emb, latent_dim)?;
    let p = arch.param_count();
    let mut x = init_params(arch, opt.seed).into_vec();
    x.resize(p + ensemble.len() * latent_dim, 0.0);

    let mut objective = PretrainObjective {
        arch,
        emb,
        ensemble,
        sigma,
        latent_dim,
        p,
    };
    let loss_history = run_optimizer(&mut objective, &mut x, opt)?;

    let theta = FlatParams::new(x[..p].to_vec());
    let codes = (0..ensemble.len())
        .map(|i| {
            let start = p + i * latent_dim;
            LatentCode::new(x[start..start + latent_dim].to_vec())
        })
        .collect();
    Ok(PretrainResult {
        manifold: Manifold {
            arch: arch.clone(),
            embedding: emb.clone(),
            theta,
            codes,
            sigma,
        },
        loss_history,
    })
}

/// Index of the training sample closest to `u_new` in the discrete L2 norm
/// on the shared grid; ties break toward the smallest index.
pub fn nearest_sample_index(ensemble: &TrainingEnsemble, u_new_values: &[f64]) -> usize {
    assert_eq!(
        u_new_values.len(),
        ensemble.points().len(),
        "grids are not aligned"
    );
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, sample) in ensemble.samples().iter().enumerate() {
        let d: f64 = sample
            .iter()
            .zip(u_new_values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best_dist {
            best_dist = d;
            best = i;
        }
    }
    best
}

struct FinetuneObjective<'a> {
    arch: &'a NetworkArch,
    emb: &'a EmbeddingSpec,
    theta: &'a FlatParams,
    u_values: &'a [f64],
    points: &'a [Vec<f64>],
    sigma: f64,
    param_scratch: Vec<f64>,
}

impl Objective for FinetuneObjective<'_> {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let z = LatentCode::new(x.to_vec());
        let mut eval =
            NetEval::new(self.arch, self.emb, z.len()).expect("dims checked at build");
        let n_pts = self.points.len() as f64;
        grad.fill(0.0);
        let mut loss = 0.0;
        let mut zgrad = vec![0.0; z.len()];
        for (u0, x_pt) in self.u_values.iter().zip(self.points) {
            let u = eval.value_with_grads(
                self.theta,
                &z,
                x_pt,
                &mut self.param_scratch,
                Some(&mut zgrad),
            );
            let r = u - u0;
            loss += r * r;
            let w = 2.0 * r / n_pts;
            for (g, pg) in grad.iter_mut().zip(&zgrad) {
                *g += w * pg;
            }
        }
        loss /= n_pts;
        loss += z.norm_sq() / self.sigma;
        for (g, zi) in grad.iter_mut().zip(z.values()) {
            *g += 2.0 * zi / self.sigma;
        }
        loss
    }
}

/// Outcome of fine-tuning: the adapted code, the warm-start index it grew
/// from, and the loss at every accepted step (entry 0 is the warm-start
/// loss).
#[derive(Debug, Clone)]
pub struct FinetuneResult {
    pub code: LatentCode,
    pub warm_start_index: usize,
    pub loss_history: Vec<f64>,
}

/// Adapt to a new instance: weights stay frozen at the pretrained values,
/// only the latent code moves, starting from the nearest sample's code.
pub fn finetune(
    manifold: &Manifold,
    ensemble: &TrainingEnsemble,
    u_new_values: &[f64],
    opt: &OptimizerConfig,
) -> Result<FinetuneResult, TrainError> {
    if u_new_values.len() != ensemble.points().len() {
        return Err(TrainError::Contract(format!(
            "{} target values for {} collocation points",
            u_new_values.len(),
            ensemble.points().len()
        )));
    }
    if manifold.codes.len() != ensemble.len() {
        return Err(TrainError::Contract(format!(
            "manifold carries {} codes for {} ensemble samples",
            manifold.codes.len(),
            ensemble.len()
        )));
    }
    let warm = nearest_sample_index(ensemble, u_new_values);
    let mut x = manifold.codes[warm].values().to_vec();
    let mut objective = FinetuneObjective {
        arch: &manifold.arch,
        emb: &manifold.embedding,
        theta: &manifold.theta,
        u_values: u_new_values,
        points: ensemble.points(),
        sigma: manifold.sigma,
        param_scratch: vec![0.0; manifold.arch.param_count()],
    };
    let loss_history = run_optimizer(&mut objective, &mut x, opt)?;
    Ok(FinetuneResult {
        code: LatentCode::new(x),
        warm_start_index: warm,
        loss_history,
    })
}
