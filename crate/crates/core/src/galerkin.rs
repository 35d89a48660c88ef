//! Time evolution of the network parameters.
//!
//! Each step assembles the parameter Jacobian `J` and the right-hand-side
//! vector `f` at the current parameters, solves the least-squares problem
//! `min || J theta_dot - f ||` (over all parameters, or over a randomly
//! selected sparse column subset), and advances with an explicit stepper.
//! The normal-equation matrices are never formed; the rectangular problem
//! on `J` is solved directly by truncated SVD.

use crate::models::{ModelError, PdeProblem};
use crate::net::{EmbeddingSpec, FlatParams, LatentCode, NetError, NetEval, NetworkArch};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GalerkinError {
    #[error("non-finite value while assembling the system at point index {point}")]
    NumericalBlowup { point: usize },
    #[error("parameter velocity blew up at step {step} (max |theta_dot| = {magnitude:e})")]
    VelocityBlowup { step: usize, magnitude: f64 },
    #[error("degenerate least-squares system: largest singular value below 1e-14")]
    DegenerateSystem,
    #[error("singular value decomposition did not converge")]
    SvdFailure,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Assembled per-step least-squares data: `jacobian` is `n_pts x p`,
/// `rhs[j] = f(t, x_j, jet)` at the same parameters and points.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    pub jacobian: Array2<f64>,
    pub rhs: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl GalerkinSystem {
    pub fn n_points(&self) -> usize {
        self.jacobian.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.jacobian.ncols()
    }

    /// `|| J theta_dot - f ||_2`.
    pub fn residual_norm(&self, theta_dot: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (j, row) in self.jacobian.rows().into_iter().enumerate() {
            let mut r = -self.rhs[j];
            for (a, b) in row.iter().zip(theta_dot) {
                r += a * b;
            }
            acc += r * r;
        }
        acc.sqrt()
    }
}

/// Indices of the parameter columns a sparse step updates. Sampled i.i.d.
/// uniform with replacement, so duplicates are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseSelector {
    indices: Vec<usize>,
}

impl SparseSelector {
    pub fn from_indices(indices: Vec<usize>, p: usize) -> Result<Self, GalerkinError> {
        if indices.is_empty() || indices.len() > p {
            return Err(GalerkinError::Config(format!(
                "selector width {} outside 1..={p}",
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= p) {
            return Err(GalerkinError::Config(format!(
                "selector index {bad} out of range for p = {p}"
            )));
        }
        Ok(SparseSelector { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn width(&self) -> usize {
        self.indices.len()
    }
}

/// Draw `s` i.i.d. uniform column indices. Each call advances the stream,
/// so successive steps get fresh selectors.
pub fn draw_selector<R: Rng>(p: usize, s: usize, rng: &mut R) -> Result<SparseSelector, GalerkinError> {
    if s == 0 || s > p {
        return Err(GalerkinError::Config(format!("sparse width {s} outside 1..={p}")));
    }
    let indices = (0..s).map(|_| rng.gen_range(0..p)).collect();
    Ok(SparseSelector { indices })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stepper {
    ForwardEuler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    Full,
    Sparse { width: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Quadrature {
    /// Uniform grid over the domain (`n_pts` per axis), fixed for the whole
    /// run; matches the fine-tuning collocation layout.
    FixedUniformGrid { n_pts: usize },
    /// Fresh uniform random points each step.
    ResampledUniform { n_pts: usize, seed: u64 },
}

/// How the per-step least-squares problem is regularized. Truncated SVD is
/// the default; ridge is the fallback alternative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeastSquaresMethod {
    TruncatedSvd { tau: f64 },
    Ridge { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub stepper: Stepper,
    pub dt: f64,
    pub n_steps: usize,
    pub update_mode: UpdateMode,
    pub quadrature: Quadrature,
    pub least_squares: LeastSquaresMethod,
    /// Seed stream for the per-step sparse selectors.
    pub selector_seed: u64,
}

impl EvolutionConfig {
    pub fn validate(&self, p: usize) -> Result<(), GalerkinError> {
        if !(self.dt > 0.0) {
            return Err(GalerkinError::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        match self.least_squares {
            LeastSquaresMethod::TruncatedSvd { tau } => {
                if !(tau > 0.0 && tau < 1.0) {
                    return Err(GalerkinError::Config(format!(
                        "SVD truncation must lie in (0, 1), got {tau}"
                    )));
                }
            }
            LeastSquaresMethod::Ridge { lambda } => {
                if !(lambda > 0.0) {
                    return Err(GalerkinError::Config(format!(
                        "ridge parameter must be > 0, got {lambda}"
                    )));
                }
            }
        }
        if let UpdateMode::Sparse { width } = self.update_mode {
            if width == 0 || width > p {
                return Err(GalerkinError::Config(format!(
                    "sparse width {width} outside 1..={p}"
                )));
            }
        }
        match self.quadrature {
            Quadrature::FixedUniformGrid { n_pts } | Quadrature::ResampledUniform { n_pts, .. } => {
                if n_pts < 2 {
                    return Err(GalerkinError::Config("quadrature needs at least 2 points".into()));
                }
            }
        }
        Ok(())
    }
}

/// Parameter snapshots along one run. The latent code never changes during
/// evolution; it is carried so downstream evaluation has the full state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub thetas: Vec<FlatParams>,
    pub times: Vec<f64>,
    pub z: LatentCode,
}

/// Evolution failure carrying whatever prefix of the trajectory was
/// completed before the failing step.
#[derive(Debug, Error)]
#[error("evolution aborted at step {step}: {source}")]
pub struct EvolveAbort {
    pub step: usize,
    pub partial: Trajectory,
    pub source: GalerkinError,
}

/// Per-step progress sample for reporting.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub step: usize,
    pub time: f64,
    pub residual: f64,
}

/// Build the least-squares system at fixed parameters: row `j` of the
/// Jacobian is the parameter gradient of `U` at `x_j`, `rhs[j]` the PDE
/// right-hand side evaluated through the spatial jet at the same point.
pub fn assemble(
    problem: &PdeProblem,
    arch: &NetworkArch,
    params: &FlatParams,
    emb: &EmbeddingSpec,
    z: &LatentCode,
    t: f64,
    points: &[Vec<f64>],
) -> Result<GalerkinSystem, GalerkinError> {
    assert!(!points.is_empty(), "assemble needs at least one point");
    NetEval::new(arch, emb, z.len())?;
    let p = arch.param_count();
    let order = problem.max_derivative_order();
    let mut data = vec![0.0; points.len() * p];
    let mut rhs = vec![0.0; points.len()];

    let results: Vec<Result<(), GalerkinError>> = data
        .par_chunks_mut(p)
        .zip(rhs.par_iter_mut())
        .zip(points.par_iter())
        .enumerate()
        .map_init(
            || NetEval::new(arch, emb, z.len()).expect("dims already checked"),
            |eval, (j, ((row, rhs_j), x))| {
                eval.value_with_grads(params, z, x, row, None);
                let jet = eval.spatial_jet(params, z, x, order)?;
                if !jet.is_finite() {
                    return Err(GalerkinError::NumericalBlowup { point: j });
                }
                let f = problem.rhs(t, x, &jet)?;
                if !f.is_finite() {
                    return Err(GalerkinError::NumericalBlowup { point: j });
                }
                *rhs_j = f;
                Ok(())
            },
        )
        .collect();
    for r in results {
        r?;
    }

    Ok(GalerkinSystem {
        jacobian: Array2::from_shape_vec((points.len(), p), data).expect("shape matches"),
        rhs,
        points: points.to_vec(),
    })
}

/// Minimum-norm least-squares solution of `J x = b` by thin SVD, treating
/// singular values below `rel_trunc * sigma_max` as zero.
fn min_norm_lstsq(
    jac: &Array2<f64>,
    cols: Option<&[usize]>,
    b: &[f64],
    method: LeastSquaresMethod,
) -> Result<Vec<f64>, GalerkinError> {
    let m = jac.nrows();
    let n = cols.map_or(jac.ncols(), <[usize]>::len);
    let a = match cols {
        None => faer::Mat::from_fn(m, n, |i, j| jac[[i, j]]),
        Some(idx) => faer::Mat::from_fn(m, n, |i, j| jac[[i, idx[j]]]),
    };
    let svd = a.thin_svd().map_err(|_| GalerkinError::SvdFailure)?;
    let s = svd.S();
    let u = svd.U();
    let v = svd.V();
    let r = m.min(n);
    let sigma_max = if r > 0 { s[0] } else { 0.0 };
    if sigma_max < 1e-14 {
        return Err(GalerkinError::DegenerateSystem);
    }
    let mut x = vec![0.0; n];
    for i in 0..r {
        let si = s[i];
        let gain = match method {
            LeastSquaresMethod::TruncatedSvd { tau } => {
                if si < tau * sigma_max {
                    continue;
                }
                1.0 / si
            }
            LeastSquaresMethod::Ridge { lambda } => si / (si * si + lambda),
        };
        let mut ub = 0.0;
        for row in 0..m {
            ub += u[(row, i)] * b[row];
        }
        let c = gain * ub;
        for j in 0..n {
            x[j] += c * v[(j, i)];
        }
    }
    Ok(x)
}

/// Full update: minimum-norm solution of `min || J theta_dot - f ||` with
/// relative SVD truncation `tau`.
pub fn solve_full(system: &GalerkinSystem, tau: f64) -> Result<Vec<f64>, GalerkinError> {
    solve_full_with(system, LeastSquaresMethod::TruncatedSvd { tau })
}

pub fn solve_full_with(
    system: &GalerkinSystem,
    method: LeastSquaresMethod,
) -> Result<Vec<f64>, GalerkinError> {
    min_norm_lstsq(&system.jacobian, None, &system.rhs, method)
}

/// Sparse update: gather the selected columns (duplicates give duplicate
/// columns), solve the reduced least-squares problem, and scatter the
/// solution back. Duplicated indices accumulate additively; unselected
/// entries stay exactly zero.
pub fn solve_sparse(
    system: &GalerkinSystem,
    selector: &SparseSelector,
    tau: f64,
) -> Result<Vec<f64>, GalerkinError> {
    solve_sparse_with(system, selector, LeastSquaresMethod::TruncatedSvd { tau })
}

pub fn solve_sparse_with(
    system: &GalerkinSystem,
    selector: &SparseSelector,
    method: LeastSquaresMethod,
) -> Result<Vec<f64>, GalerkinError> {
    let p = system.n_params();
    if selector.width() > p || selector.indices().iter().any(|&i| i >= p) {
        return Err(GalerkinError::Config("selector does not fit the system".into()));
    }
    let xs = min_norm_lstsq(&system.jacobian, Some(selector.indices()), &system.rhs, method)?;
    let mut x = vec![0.0; p];
    for (&idx, &v) in selector.indices().iter().zip(&xs) {
        x[idx] += v;
    }
    Ok(x)
}

/// `theta + dt * theta_dot`, componentwise.
pub fn step_euler(theta: &FlatParams, theta_dot: &[f64], dt: f64) -> FlatParams {
    assert_eq!(theta.len(), theta_dot.len(), "shape mismatch");
    let values = theta
        .values()
        .iter()
        .zip(theta_dot)
        .map(|(a, b)| a + dt * b)
        .collect();
    FlatParams::new(values)
}

/// Classical RK4 over an arbitrary velocity field. Stage weights
/// (1, 2, 2, 1)/6.
pub fn rk4_step<E>(
    theta: &[f64],
    t: f64,
    dt: f64,
    mut velocity: impl FnMut(&[f64], f64) -> Result<Vec<f64>, E>,
) -> Result<Vec<f64>, E> {
    let n = theta.len();
    let k1 = velocity(theta, t)?;
    let mut stage = vec![0.0; n];
    for i in 0..n {
        stage[i] = theta[i] + 0.5 * dt * k1[i];
    }
    let k2 = velocity(&stage, t + 0.5 * dt)?;
    for i in 0..n {
        stage[i] = theta[i] + 0.5 * dt * k2[i];
    }
    let k3 = velocity(&stage, t + 0.5 * dt)?;
    for i in 0..n {
        stage[i] = theta[i] + dt * k3[i];
    }
    let k4 = velocity(&stage, t + dt)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(theta[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    Ok(out)
}

struct StageSolver<'a> {
    problem: &'a PdeProblem,
    arch: &'a NetworkArch,
    emb: &'a EmbeddingSpec,
    z: &'a LatentCode,
    method: LeastSquaresMethod,
    selector: Option<&'a SparseSelector>,
    points: &'a [Vec<f64>],
    /// residual norm of the first stage solve, for progress reporting
    first_residual: Option<f64>,
}

impl StageSolver<'_> {
    fn velocity(&mut self, theta: &[f64], t: f64) -> Result<Vec<f64>, GalerkinError> {
        let params = FlatParams::new(theta.to_vec());
        let system = assemble(self.problem, self.arch, &params, self.emb, self.z, t, self.points)?;
        let theta_dot = match self.selector {
            None => solve_full_with(&system, self.method)?,
            Some(sel) => solve_sparse_with(&system, sel, self.method)?,
        };
        if self.first_residual.is_none() {
            self.first_residual = Some(system.residual_norm(&theta_dot));
        }
        let max = theta_dot.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !max.is_finite() || max > 1e8 {
            return Err(GalerkinError::VelocityBlowup { step: 0, magnitude: max });
        }
        Ok(theta_dot)
    }
}

/// One RK4 step of the parameter ODE. All four stages re-assemble the
/// system at the stage parameters and stage time; in sparse mode one
/// selector (drawn by the caller) is shared by the four stages, so the
/// whole step stays inside a single fixed subspace.
#[allow(clippy::too_many_arguments)]
pub fn step_rk4(
    problem: &PdeProblem,
    arch: &NetworkArch,
    emb: &EmbeddingSpec,
    z: &LatentCode,
    theta: &FlatParams,
    t: f64,
    dt: f64,
    update_mode: UpdateMode,
    quadrature_points: &[Vec<f64>],
    method: LeastSquaresMethod,
    rng: &mut ChaCha8Rng,
) -> Result<FlatParams, GalerkinError> {
    let selector = match update_mode {
        UpdateMode::Full => None,
        UpdateMode::Sparse { width } => Some(draw_selector(arch.param_count(), width, rng)?),
    };
    let mut solver = StageSolver {
        problem,
        arch,
        emb,
        z,
        method,
        selector: selector.as_ref(),
        points: quadrature_points,
        first_residual: None,
    };
    let next = rk4_step(theta.values(), t, dt, |th, tt| solver.velocity(th, tt))?;
    Ok(FlatParams::new(next))
}

/// Run the evolution loop: `n_steps` updates from `theta0`, recording every
/// parameter snapshot. The latent code is never mutated. Deterministic
/// given the seeds in `config`.
pub fn evolve(
    problem: &PdeProblem,
    arch: &NetworkArch,
    emb: &EmbeddingSpec,
    theta0: FlatParams,
    z: &LatentCode,
    config: &EvolutionConfig,
) -> Result<Trajectory, EvolveAbort> {
    evolve_with_progress(problem, arch, emb, theta0, z, config, |_| {})
}

pub fn evolve_with_progress(
    problem: &PdeProblem,
    arch: &NetworkArch,
    emb: &EmbeddingSpec,
    theta0: FlatParams,
    z: &LatentCode,
    config: &EvolutionConfig,
    mut on_step: impl FnMut(&StepInfo),
) -> Result<Trajectory, EvolveAbort> {
    let p = arch.param_count();
    let fail = |step: usize, partial: Trajectory, source: GalerkinError| EvolveAbort {
        step,
        partial,
        source,
    };
    if let Err(e) = config.validate(p) {
        return Err(fail(
            0,
            Trajectory {
                thetas: vec![theta0.clone()],
                times: vec![0.0],
                z: z.clone(),
            },
            e,
        ));
    }

    let mut selector_rng = ChaCha8Rng::seed_from_u64(config.selector_seed);
    let mut quad_rng = match &config.quadrature {
        Quadrature::ResampledUniform { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        Quadrature::FixedUniformGrid { .. } => None,
    };
    let fixed_points = match &config.quadrature {
        Quadrature::FixedUniformGrid { n_pts } => Some(uniform_grid(&problem.domain, *n_pts)),
        Quadrature::ResampledUniform { .. } => None,
    };

    let mut thetas = Vec::with_capacity(config.n_steps + 1);
    let mut times = Vec::with_capacity(config.n_steps + 1);
    thetas.push(theta0);
    times.push(0.0);

    for step in 1..=config.n_steps {
        let t = (step - 1) as f64 * config.dt;
        let points = match (&fixed_points, &mut quad_rng) {
            (Some(pts), _) => pts.clone(),
            (None, Some(rng)) => {
                let n = match config.quadrature {
                    Quadrature::ResampledUniform { n_pts, .. } => n_pts,
                    _ => unreachable!(),
                };
                random_points(&problem.domain, n, rng)
            }
            _ => unreachable!(),
        };
        let theta = thetas.last().expect("nonempty").clone();

        // One selector per time step; RK4 stages share it so the update
        // stays in a single fixed subspace.
        let selector = match config.update_mode {
            UpdateMode::Full => None,
            UpdateMode::Sparse { width } => match draw_selector(p, width, &mut selector_rng) {
                Ok(s) => Some(s),
                Err(e) => return Err(fail(step, Trajectory { thetas, times, z: z.clone() }, e)),
            },
        };
        let mut solver = StageSolver {
            problem,
            arch,
            emb,
            z,
            method: config.least_squares,
            selector: selector.as_ref(),
            points: &points,
            first_residual: None,
        };
        let stepped = match config.stepper {
            Stepper::ForwardEuler => solver
                .velocity(theta.values(), t)
                .map(|theta_dot| step_euler(&theta, &theta_dot, config.dt)),
            Stepper::Rk4 => {
                rk4_step(theta.values(), t, config.dt, |th, tt| solver.velocity(th, tt))
                    .map(FlatParams::new)
            }
        };

        match stepped {
            Ok(next) => {
                on_step(&StepInfo {
                    step,
                    time: step as f64 * config.dt,
                    residual: solver.first_residual.unwrap_or(f64::NAN),
                });
                thetas.push(next);
                times.push(step as f64 * config.dt);
            }
            Err(source) => {
                let source = match source {
                    GalerkinError::VelocityBlowup { magnitude, .. } => {
                        GalerkinError::VelocityBlowup { step, magnitude }
                    }
                    other => other,
                };
                return Err(fail(step, Trajectory { thetas, times, z: z.clone() }, source));
            }
        }
    }

    Ok(Trajectory {
        thetas,
        times,
        z: z.clone(),
    })
}

/// Uniform grid with `n` points per axis, endpoints included.
pub fn uniform_grid(domain: &crate::models::DomainSpec, n: usize) -> Vec<Vec<f64>> {
    assert!(n >= 2, "uniform grid needs at least 2 points per axis");
    let axis_points = |axis: usize| -> Vec<f64> {
        let [a, b] = domain.interval(axis);
        (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()
    };
    match domain.dim() {
        1 => axis_points(0).into_iter().map(|x| vec![x]).collect(),
        2 => {
            let xs = axis_points(0);
            let ys = axis_points(1);
            let mut out = Vec::with_capacity(n * n);
            for &x in &xs {
                for &y in &ys {
                    out.push(vec![x, y]);
                }
            }
            out
        }
        d => unreachable!("unsupported dimension {d}"),
    }
}

fn random_points(domain: &crate::models::DomainSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..domain.dim())
                .map(|axis| {
                    let [a, b] = domain.interval(axis);
                    rng.gen_range(a..b)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests;
