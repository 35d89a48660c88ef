//! The pipeline commands and their artifact layout.
//!
//! Under the output directory:
//!
//! ```text
//! ics/manifest.txt         sample names and seeds
//! ics/train_XXXX.csv       initial conditions on the collocation grid
//! ics/test_XXXX.csv        held-out initial conditions
//! manifold.ckpt            pretrained weights + per-sample codes
//! pretrain_history.txt     loss per accepted optimizer step
//! finetuned.ckpt           weights + the adapted latent code
//! finetune_history.txt
//! trajectory.bin           parameter snapshots over time
//! evolve_residuals.txt     per-step least-squares residual norm
//! pred.csv / ref.csv       fields on the reference grid at compare times
//! report.txt               MSE table
//! run.log                  timestamped sidecar (the only file with wall
//!                          clock content)
//! ```

use crate::config::Resolved;
use crate::CliError;
use ngm_core::galerkin::{evolve_with_progress, Trajectory};
use ngm_core::io::{
    self, Checkpoint, ExperimentReport, ReportRow, TrajectoryFile,
};
use ngm_core::models::{sample_initial_condition, InitialField};
use ngm_core::net::{LatentCode, NetEval};
use ngm_core::spectral::{mse, solve_reference, GridSolution, SpectralGrid};
use ngm_core::train::{data_loss, finetune, pretrain, Manifold, TrainingEnsemble};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub struct Paths {
    out: PathBuf,
}

impl Paths {
    pub fn new(out: &Path) -> Self {
        Paths { out: out.to_path_buf() }
    }

    pub fn ics_dir(&self) -> PathBuf {
        self.out.join("ics")
    }

    pub fn manifest(&self) -> PathBuf {
        self.ics_dir().join("manifest.txt")
    }

    pub fn ic_file(&self, name: &str) -> PathBuf {
        self.ics_dir().join(format!("{name}.csv"))
    }

    pub fn manifold(&self) -> PathBuf {
        self.out.join("manifold.ckpt")
    }

    pub fn pretrain_history(&self) -> PathBuf {
        self.out.join("pretrain_history.txt")
    }

    pub fn finetuned(&self) -> PathBuf {
        self.out.join("finetuned.ckpt")
    }

    pub fn finetune_history(&self) -> PathBuf {
        self.out.join("finetune_history.txt")
    }

    pub fn trajectory(&self) -> PathBuf {
        self.out.join("trajectory.bin")
    }

    pub fn residuals(&self) -> PathBuf {
        self.out.join("evolve_residuals.txt")
    }

    pub fn pred(&self) -> PathBuf {
        self.out.join("pred.csv")
    }

    pub fn reference(&self) -> PathBuf {
        self.out.join("ref.csv")
    }

    pub fn report(&self) -> PathBuf {
        self.out.join("report.txt")
    }

    pub fn run_log(&self) -> PathBuf {
        self.out.join("run.log")
    }
}

fn log_line(paths: &Paths, command: &str, wall: Instant) {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let line = format!(
        "ts_ms={stamp} command={command} wall_ms={}\n",
        wall.elapsed().as_millis()
    );
    if let Ok(mut f) = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(paths.run_log())
    {
        use std::io::Write as _;
        let _ = f.write_all(line.as_bytes());
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    std::fs::write(&tmp, text).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn require(path: &Path, hint: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            path: path.display().to_string(),
            hint: hint.to_string(),
        })
    }
}

/// Collocation grid: uniform per axis, endpoints included.
pub fn collocation_points(cfg: &Resolved) -> Vec<Vec<f64>> {
    ngm_core::galerkin::uniform_grid(&cfg.problem.domain, cfg.colloc_n)
}

fn write_field_file(path: &Path, points: &[Vec<f64>], values: &[f64]) -> Result<(), CliError> {
    let dim = points.first().map_or(1, Vec::len);
    let mut out = String::from(if dim == 2 { "x,y,value\n" } else { "x,value\n" });
    for (x, v) in points.iter().zip(values) {
        for c in x {
            let _ = write!(out, "{c},");
        }
        let _ = writeln!(out, "{v}");
    }
    write_text(path, &out)
}

fn read_field_file(path: &Path, expected_points: usize) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            continue; // header
        }
        let last = line.rsplit(',').next().ok_or_else(|| {
            CliError::Io(format!("{}:{}: malformed row", path.display(), lineno + 1))
        })?;
        let v: f64 = last.parse().map_err(|_| {
            CliError::Io(format!("{}:{}: bad value `{last}`", path.display(), lineno + 1))
        })?;
        values.push(v);
    }
    if values.len() != expected_points {
        return Err(CliError::Io(format!(
            "{}: {} values, expected {expected_points} (collocation grid changed?)",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}

fn sample_names(cfg: &Resolved) -> Vec<(String, u64)> {
    let mut names = Vec::with_capacity(cfg.ensemble_size + cfg.test_count);
    for i in 0..cfg.ensemble_size {
        names.push((format!("train_{i:04}"), cfg.train_seed(i)));
    }
    for j in 0..cfg.test_count {
        names.push((format!("test_{j:04}"), cfg.test_seed(j)));
    }
    names
}

fn manifest_seed(cfg: &Resolved, paths: &Paths, sample: &str) -> Result<u64, CliError> {
    require(&paths.manifest(), "run `sample-ics` first")?;
    let text = std::fs::read_to_string(paths.manifest())
        .map_err(|e| CliError::Io(format!("manifest: {e}")))?;
    for line in text.lines().skip(2) {
        let mut parts = line.split_whitespace();
        if parts.next() == Some(sample) {
            return parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| CliError::Io(format!("manifest: bad seed line `{line}`")));
        }
    }
    Err(CliError::MissingArtifact {
        path: paths.ic_file(sample).display().to_string(),
        hint: format!(
            "sample `{sample}` is not in the manifest; check ensemble.size/test.count ({})",
            cfg.config_hash
        ),
    })
}

/// Draw every configured initial condition on the collocation grid and
/// persist the fields plus a manifest.
pub fn cmd_sample_ics(cfg: &Resolved) -> Result<(), CliError> {
    let wall = Instant::now();
    let paths = Paths::new(&cfg.out_dir);
    std::fs::create_dir_all(paths.ics_dir())
        .map_err(|e| CliError::Io(format!("{}: {e}", paths.ics_dir().display())))?;
    let points = collocation_points(cfg);
    let mut manifest = format!("ngm-ics 1\nconfig_hash {}\n", cfg.config_hash);
    for (name, seed) in sample_names(cfg) {
        let field = sample_initial_condition(&cfg.family, &cfg.problem.domain, seed);
        let values = field.eval_on(&points);
        write_field_file(&paths.ic_file(&name), &points, &values)?;
        let _ = writeln!(manifest, "{name} {seed}");
    }
    write_text(&paths.manifest(), &manifest)?;
    log_line(&paths, "sample-ics", wall);
    Ok(())
}

fn load_ensemble(cfg: &Resolved, paths: &Paths) -> Result<TrainingEnsemble, CliError> {
    require(&paths.manifest(), "run `sample-ics` first")?;
    let points = collocation_points(cfg);
    let mut samples = Vec::with_capacity(cfg.ensemble_size);
    for i in 0..cfg.ensemble_size {
        let file = paths.ic_file(&format!("train_{i:04}"));
        require(&file, "run `sample-ics` first")?;
        samples.push(read_field_file(&file, points.len())?);
    }
    TrainingEnsemble::new(points, samples).map_err(|e| CliError::Config(e.to_string()))
}

/// Jointly optimize shared weights and per-sample codes; write the manifold
/// checkpoint and the loss history.
pub fn cmd_pretrain(cfg: &Resolved) -> Result<(), CliError> {
    let wall = Instant::now();
    let paths = Paths::new(&cfg.out_dir);
    let ensemble = load_ensemble(cfg, &paths)?;
    let result = pretrain(
        &ensemble,
        &cfg.arch,
        &cfg.problem.embedding,
        cfg.latent_dim,
        cfg.sigma,
        &cfg.pretrain,
    )
    .map_err(|e| match e {
        ngm_core::train::TrainError::Diverged { .. } => CliError::Blowup(e.to_string()),
        other => CliError::Config(other.to_string()),
    })?;
    let ckpt = Checkpoint {
        manifold: result.manifold,
        seeds: vec![cfg.seed],
        config_hash: cfg.config_hash.clone(),
    };
    io::save_checkpoint(&ckpt, &paths.manifold())?;
    let mut history = String::from("iteration,loss\n");
    for (i, loss) in result.loss_history.iter().enumerate() {
        let _ = writeln!(history, "{i},{loss}");
    }
    write_text(&paths.pretrain_history(), &history)?;
    log_line(&paths, "pretrain", wall);
    Ok(())
}

/// What fine-tuning achieved, for reporting.
#[derive(Debug, Clone, Copy)]
pub struct FinetuneSummary {
    pub warm_start_index: usize,
    pub warm_data_loss: f64,
    pub tuned_data_loss: f64,
}

/// Adapt the latent code to one sample (weights frozen); write a
/// single-code checkpoint.
pub fn cmd_finetune(cfg: &Resolved, sample: &str) -> Result<FinetuneSummary, CliError> {
    let wall = Instant::now();
    let paths = Paths::new(&cfg.out_dir);
    require(&paths.manifold(), "run `pretrain` first")?;
    let ckpt = io::load_checkpoint(&paths.manifold())?;
    let manifold = ckpt.manifold;
    let ensemble = load_ensemble(cfg, &paths)?;
    let sample_file = paths.ic_file(sample);
    require(&sample_file, "run `sample-ics` first")?;
    let sample_seed = manifest_seed(cfg, &paths, sample)?;
    let target = read_field_file(&sample_file, ensemble.points().len())?;

    let result = finetune(&manifold, &ensemble, &target, &cfg.finetune).map_err(|e| match e {
        ngm_core::train::TrainError::Diverged { .. } => CliError::Blowup(e.to_string()),
        other => CliError::Config(other.to_string()),
    })?;
    let warm_data_loss = data_loss(
        &manifold.arch,
        &manifold.theta,
        &manifold.embedding,
        &manifold.codes[result.warm_start_index],
        &target,
        ensemble.points(),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let tuned_data_loss = data_loss(
        &manifold.arch,
        &manifold.theta,
        &manifold.embedding,
        &result.code,
        &target,
        ensemble.points(),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;

    let tuned = Checkpoint {
        manifold: Manifold {
            arch: manifold.arch.clone(),
            embedding: manifold.embedding.clone(),
            theta: manifold.theta.clone(),
            codes: vec![result.code.clone()],
            sigma: manifold.sigma,
        },
        seeds: vec![cfg.seed, sample_seed],
        config_hash: cfg.config_hash.clone(),
    };
    io::save_checkpoint(&tuned, &paths.finetuned())?;
    let mut history = String::from("iteration,loss\n");
    for (i, loss) in result.loss_history.iter().enumerate() {
        let _ = writeln!(history, "{i},{loss}");
    }
    write_text(&paths.finetune_history(), &history)?;
    log_line(&paths, "finetune", wall);
    Ok(FinetuneSummary {
        warm_start_index: result.warm_start_index,
        warm_data_loss,
        tuned_data_loss,
    })
}

fn reference_grid(cfg: &Resolved) -> Result<SpectralGrid, CliError> {
    SpectralGrid::new(cfg.problem.domain.clone(), cfg.reference_modes)
        .map_err(|e| CliError::Config(e.to_string()))
}

/// Evaluate a parameter snapshot on the reference grid.
fn field_on_grid(
    arch: &ngm_core::net::NetworkArch,
    emb: &ngm_core::net::EmbeddingSpec,
    theta: &ngm_core::net::FlatParams,
    z: &LatentCode,
    grid: &SpectralGrid,
) -> Vec<f64> {
    let mut eval = NetEval::new(arch, emb, z.len()).expect("checkpoint dims consistent");
    grid.points()
        .iter()
        .map(|x| eval.value(theta, z, x))
        .collect()
}

/// Advance the parameters from the fine-tuned state and export both the
/// trajectory and the predicted fields at the compare times.
pub fn cmd_evolve(cfg: &Resolved, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let wall = Instant::now();
    let paths = Paths::new(&cfg.out_dir);
    let ckpt_path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| paths.finetuned());
    require(&ckpt_path, "run `finetune` first")?;
    let ckpt = io::load_checkpoint(&ckpt_path)?;
    let manifold = ckpt.manifold;
    if manifold.codes.len() != 1 {
        return Err(CliError::Config(format!(
            "{} carries {} codes; evolution needs the single fine-tuned code",
            ckpt_path.display(),
            manifold.codes.len()
        )));
    }
    if manifold.arch != cfg.arch {
        return Err(CliError::Config(
            "checkpoint architecture differs from the configured architecture".into(),
        ));
    }
    let z = manifold.codes[0].clone();

    let mut residual_log = String::from("step,time,residual\n");
    let outcome = evolve_with_progress(
        &cfg.problem,
        &manifold.arch,
        &manifold.embedding,
        manifold.theta.clone(),
        &z,
        &cfg.evolution,
        |info| {
            let _ = writeln!(residual_log, "{},{},{}", info.step, info.time, info.residual);
        },
    );
    let trajectory = match outcome {
        Ok(traj) => traj,
        Err(abort) => {
            // persist the completed prefix so the failure can be inspected
            let file = TrajectoryFile {
                arch: manifold.arch.clone(),
                embedding: manifold.embedding.clone(),
                trajectory: abort.partial,
                config_hash: cfg.config_hash.clone(),
            };
            io::save_trajectory(&file, &paths.trajectory())?;
            write_text(&paths.residuals(), &residual_log)?;
            log_line(&paths, "evolve", wall);
            return Err(CliError::Blowup(format!(
                "step {}: {} (partial trajectory saved)",
                abort.step, abort.source
            )));
        }
    };

    let file = TrajectoryFile {
        arch: manifold.arch.clone(),
        embedding: manifold.embedding.clone(),
        trajectory,
        config_hash: cfg.config_hash.clone(),
    };
    io::save_trajectory(&file, &paths.trajectory())?;
    write_text(&paths.residuals(), &residual_log)?;

    // predicted fields on the reference grid at the compare times
    let grid = reference_grid(cfg)?;
    let traj: &Trajectory = &file.trajectory;
    let mut fields = Vec::with_capacity(cfg.compare_times.len());
    for &t in &cfg.compare_times {
        let k = (t / cfg.evolution.dt).round() as usize;
        if k >= traj.thetas.len() || (k as f64 * cfg.evolution.dt - t).abs() > 1e-9 * t.max(1.0) {
            return Err(CliError::Config(format!(
                "compare time {t} does not land on an evolved step"
            )));
        }
        fields.push(field_on_grid(
            &manifold.arch,
            &manifold.embedding,
            &traj.thetas[k],
            &traj.z,
            &grid,
        ));
    }
    let predicted = GridSolution {
        times: cfg.compare_times.clone(),
        fields,
        domain: cfg.problem.domain.clone(),
        shape: match grid.dim() {
            1 => vec![grid.n_modes()],
            _ => vec![grid.n_modes(), grid.n_modes()],
        },
    };
    io::export_grid_solution(&predicted, &paths.pred())?;
    log_line(&paths, "evolve", wall);
    Ok(())
}

/// Solve the pseudospectral reference for one sample and export the fields
/// at the compare times.
pub fn cmd_reference(cfg: &Resolved, sample: &str) -> Result<(), CliError> {
    let wall = Instant::now();
    let paths = Paths::new(&cfg.out_dir);
    let seed = manifest_seed(cfg, &paths, sample)?;
    let field: InitialField = sample_initial_condition(&cfg.family, &cfg.problem.domain, seed);
    let grid = reference_grid(cfg)?;
    let u0: Vec<f64> = grid.points().iter().map(|x| field.eval(x)).collect();
    let solution = solve_reference(&cfg.problem, &u0, &grid, cfg.reference_dt, &cfg.compare_times)
        .map_err(|e| match e {
            ngm_core::spectral::SpectralError::Instability { .. } => CliError::Blowup(e.to_string()),
            other => CliError::Config(other.to_string()),
        })?;
    io::export_grid_solution(&solution, &paths.reference())?;
    log_line(&paths, "reference", wall);
    Ok(())
}

/// Compare the exported prediction against the exported reference and
/// write the report.
pub fn cmd_compare(cfg: &Resolved, sample: &str) -> Result<Vec<ReportRow>, CliError> {
    let wall = Instant::now();
    let paths = Paths::new(&cfg.out_dir);
    require(&paths.pred(), "run `evolve` first")?;
    require(&paths.reference(), "run `reference` first")?;
    let predicted = io::import_grid_solution(&paths.pred())?;
    let reference = io::import_grid_solution(&paths.reference())?;

    let mode = match cfg.evolution.update_mode {
        ngm_core::galerkin::UpdateMode::Full => "full".to_string(),
        ngm_core::galerkin::UpdateMode::Sparse { width } => format!("sparse{width}"),
    };
    let mut rows = Vec::with_capacity(cfg.compare_times.len());
    for (i, &t) in cfg.compare_times.iter().enumerate() {
        let value = mse(&[&predicted], &[&reference], i)
            .map_err(|e| CliError::Config(e.to_string()))?;
        rows.push(ReportRow {
            sample: sample.to_string(),
            mode: mode.clone(),
            time: t,
            mse: value,
        });
    }
    let report = ExperimentReport {
        config: cfg.echo.clone(),
        seeds: vec![cfg.seed],
        rows: rows.clone(),
        wall_ms: vec![("compare".into(), wall.elapsed().as_millis())],
    };
    io::export_report(&report, &paths.report())?;
    log_line(&paths, "compare", wall);
    Ok(rows)
}
