//! Persistence: checkpoints, trajectories, grid solutions, and experiment
//! reports.
//!
//! Checkpoints and trajectories are single self-describing binary files: an
//! ASCII header (magic, version, architecture, dimensions, provenance)
//! terminated by a `BIN` line, followed by the raw little-endian 64-bit
//! payload. Numeric round trips are bit-exact. Text exports use the
//! shortest decimal rendering that parses back to the identical 64-bit
//! value. All writes go through a temp file plus rename, so readers never
//! observe partial files.

use crate::galerkin::Trajectory;
use crate::models::DomainSpec;
use crate::net::{EmbeddingSpec, FlatParams, LatentCode, NetworkArch};
use crate::spectral::GridSolution;
use crate::train::Manifold;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("trailing data after payload: {extra} extra bytes")]
    TrailingData { extra: usize },
    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("malformed table in {path}: {detail}")]
    MalformedTable { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &str = "NGCKPT";
const TRAJECTORY_MAGIC: &str = "NGTRAJ";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write atomically: temp file in the same directory, then rename.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn format_f64(v: f64) -> String {
    // `{}` prints the shortest decimal that round-trips the exact bits
    format!("{v}")
}

fn embedding_line(emb: &EmbeddingSpec) -> String {
    match emb {
        EmbeddingSpec::Periodic1D { half_width } => format!("periodic1d {}", format_f64(*half_width)),
        EmbeddingSpec::ShiftedPeriodic1D { shift } => format!("shifted1d {}", format_f64(*shift)),
        EmbeddingSpec::Periodic2D => "periodic2d".to_string(),
        EmbeddingSpec::Identity { dim } => format!("identity {dim}"),
    }
}

fn parse_embedding(line: &str) -> Result<EmbeddingSpec, IoError> {
    let bad = |d: &str| IoError::CorruptHeader(format!("embedding: {d}"));
    let mut parts = line.split_whitespace();
    match parts.next() {
        Some("periodic1d") => {
            let l: f64 = parts
                .next()
                .ok_or_else(|| bad("missing half width"))?
                .parse()
                .map_err(|_| bad("unparsable half width"))?;
            Ok(EmbeddingSpec::Periodic1D { half_width: l })
        }
        Some("shifted1d") => {
            let d: f64 = parts
                .next()
                .ok_or_else(|| bad("missing shift"))?
                .parse()
                .map_err(|_| bad("unparsable shift"))?;
            Ok(EmbeddingSpec::ShiftedPeriodic1D { shift: d })
        }
        Some("periodic2d") => Ok(EmbeddingSpec::Periodic2D),
        Some("identity") => {
            let d: usize = parts
                .next()
                .ok_or_else(|| bad("missing dim"))?
                .parse()
                .map_err(|_| bad("unparsable dim"))?;
            Ok(EmbeddingSpec::Identity { dim: d })
        }
        other => Err(bad(&format!("unknown variant {other:?}"))),
    }
}

fn arch_lines(arch: &NetworkArch, out: &mut String) {
    let hidden = if arch.hidden_widths().is_empty() {
        "-".to_string()
    } else {
        arch.hidden_widths()
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",")
    };
    let _ = writeln!(out, "arch {} {} {}", arch.input_dim(), hidden, arch.output_dim());
    let _ = writeln!(out, "activation tanh");
}

struct HeaderReader<'a> {
    lines: std::str::Lines<'a>,
}

impl<'a> HeaderReader<'a> {
    fn field(&mut self, key: &str) -> Result<&'a str, IoError> {
        let line = self
            .lines
            .next()
            .ok_or_else(|| IoError::CorruptHeader(format!("missing `{key}` line")))?;
        line.strip_prefix(key)
            .map(str::trim)
            .ok_or_else(|| IoError::CorruptHeader(format!("expected `{key}`, found `{line}`")))
    }

    fn arch(&mut self) -> Result<NetworkArch, IoError> {
        let spec = self.field("arch")?;
        let mut parts = spec.split_whitespace();
        let bad = |d: String| IoError::CorruptHeader(d);
        let input: usize = parts
            .next()
            .ok_or_else(|| bad("arch: missing input dim".into()))?
            .parse()
            .map_err(|_| bad("arch: unparsable input dim".into()))?;
        let hidden_spec = parts.next().ok_or_else(|| bad("arch: missing hidden".into()))?;
        let hidden: Vec<usize> = if hidden_spec == "-" {
            Vec::new()
        } else {
            hidden_spec
                .split(',')
                .map(|w| w.parse().map_err(|_| bad(format!("arch: bad width `{w}`"))))
                .collect::<Result<_, _>>()?
        };
        let output: usize = parts
            .next()
            .ok_or_else(|| bad("arch: missing output dim".into()))?
            .parse()
            .map_err(|_| bad("arch: unparsable output dim".into()))?;
        let arch = NetworkArch::new(input, hidden, output)
            .map_err(|e| bad(format!("arch: {e}")))?;
        let act = self.field("activation")?;
        if act != "tanh" {
            return Err(bad(format!("unsupported activation `{act}`")));
        }
        Ok(arch)
    }
}

/// Split a header (up to the `BIN` line) from the binary payload.
fn split_container<'a>(
    bytes: &'a [u8],
    magic: &str,
) -> Result<(HeaderReader<'a>, &'a [u8]), IoError> {
    let marker = b"\nBIN\n";
    let pos = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| IoError::CorruptHeader("missing BIN marker".into()))?;
    let header = std::str::from_utf8(&bytes[..pos])
        .map_err(|_| IoError::CorruptHeader("header is not UTF-8".into()))?;
    let payload = &bytes[pos + marker.len()..];
    let mut lines = header.lines();
    let first = lines
        .next()
        .ok_or_else(|| IoError::CorruptHeader("empty header".into()))?;
    let mut parts = first.split_whitespace();
    match parts.next() {
        Some(m) if m == magic => {}
        other => {
            return Err(IoError::CorruptHeader(format!(
                "bad magic {other:?}, expected {magic}"
            )))
        }
    }
    let version: u32 = parts
        .next()
        .ok_or_else(|| IoError::CorruptHeader("missing version".into()))?
        .parse()
        .map_err(|_| IoError::CorruptHeader("unparsable version".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(IoError::VersionMismatch {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    Ok((HeaderReader { lines }, payload))
}

fn payload_to_f64(payload: &[u8], expected_count: usize) -> Result<Vec<f64>, IoError> {
    let expected = expected_count * 8;
    if payload.len() < expected {
        return Err(IoError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(IoError::TrailingData {
            extra: payload.len() - expected,
        });
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk is 8 bytes")))
        .collect())
}

fn extend_f64(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// A pretrained manifold plus run provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifold: Manifold,
    pub seeds: Vec<u64>,
    pub config_hash: String,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), IoError> {
    let m = &ckpt.manifold;
    let n = m.latent_dim();
    let payload_count = 1 + m.theta.len() + m.codes.len() * n;
    let mut header = String::new();
    let _ = writeln!(header, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
    arch_lines(&m.arch, &mut header);
    let _ = writeln!(header, "embedding {}", embedding_line(&m.embedding));
    let _ = writeln!(header, "latent {n}");
    let _ = writeln!(header, "samples {}", m.codes.len());
    let seeds = if ckpt.seeds.is_empty() {
        "-".to_string()
    } else {
        ckpt.seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(header, "seeds {seeds}");
    let hash = if ckpt.config_hash.is_empty() { "-" } else { &ckpt.config_hash };
    let _ = writeln!(header, "config_hash {hash}");
    let _ = writeln!(header, "payload {payload_count}");
    let _ = writeln!(header, "BIN");

    let mut bytes = header.into_bytes();
    extend_f64(&mut bytes, &[m.sigma]);
    extend_f64(&mut bytes, m.theta.values());
    for code in &m.codes {
        extend_f64(&mut bytes, code.values());
    }
    atomic_write(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, IoError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let (mut header, payload) = split_container(&bytes, CHECKPOINT_MAGIC)?;
    let arch = header.arch()?;
    let embedding = parse_embedding(header.field("embedding")?)?;
    let latent: usize = header
        .field("latent")?
        .parse()
        .map_err(|_| IoError::CorruptHeader("unparsable latent dim".into()))?;
    let samples: usize = header
        .field("samples")?
        .parse()
        .map_err(|_| IoError::CorruptHeader("unparsable sample count".into()))?;
    let seeds_field = header.field("seeds")?;
    let seeds: Vec<u64> = if seeds_field == "-" {
        Vec::new()
    } else {
        seeds_field
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| IoError::CorruptHeader(format!("bad seed `{s}`")))
            })
            .collect::<Result<_, _>>()?
    };
    let hash_field = header.field("config_hash")?;
    let config_hash = if hash_field == "-" { String::new() } else { hash_field.to_string() };
    let declared: usize = header
        .field("payload")?
        .parse()
        .map_err(|_| IoError::CorruptHeader("unparsable payload count".into()))?;
    let p = arch.param_count();
    let expected = 1 + p + samples * latent;
    if declared != expected {
        return Err(IoError::CorruptHeader(format!(
            "payload count {declared} does not match arch ({expected})"
        )));
    }
    let values = payload_to_f64(payload, expected)?;
    let sigma = values[0];
    let theta = FlatParams::for_arch(values[1..1 + p].to_vec(), &arch)
        .map_err(|e| IoError::CorruptHeader(format!("theta: {e}")))?;
    let codes = (0..samples)
        .map(|i| {
            let start = 1 + p + i * latent;
            LatentCode::new(values[start..start + latent].to_vec())
        })
        .collect();
    Ok(Checkpoint {
        manifold: Manifold {
            arch,
            embedding,
            theta,
            codes,
            sigma,
        },
        seeds,
        config_hash,
    })
}

/// A recorded evolution run: the trajectory plus the network description
/// needed to evaluate it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub arch: NetworkArch,
    pub embedding: EmbeddingSpec,
    pub trajectory: Trajectory,
    pub config_hash: String,
}

pub fn save_trajectory(file: &TrajectoryFile, path: &Path) -> Result<(), IoError> {
    let traj = &file.trajectory;
    let n = traj.z.len();
    let p = file.arch.param_count();
    let steps = traj.thetas.len();
    assert_eq!(traj.times.len(), steps, "trajectory times/thetas mismatch");
    let payload_count = steps + n + steps * p;
    let mut header = String::new();
    let _ = writeln!(header, "{TRAJECTORY_MAGIC} {CHECKPOINT_VERSION}");
    arch_lines(&file.arch, &mut header);
    let _ = writeln!(header, "embedding {}", embedding_line(&file.embedding));
    let _ = writeln!(header, "latent {n}");
    let _ = writeln!(header, "steps {steps}");
    let hash = if file.config_hash.is_empty() { "-" } else { &file.config_hash };
    let _ = writeln!(header, "config_hash {hash}");
    let _ = writeln!(header, "payload {payload_count}");
    let _ = writeln!(header, "BIN");

    let mut bytes = header.into_bytes();
    extend_f64(&mut bytes, &traj.times);
    extend_f64(&mut bytes, traj.z.values());
    for theta in &traj.thetas {
        extend_f64(&mut bytes, theta.values());
    }
    atomic_write(path, &bytes)
}

pub fn load_trajectory(path: &Path) -> Result<TrajectoryFile, IoError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let (mut header, payload) = split_container(&bytes, TRAJECTORY_MAGIC)?;
    let arch = header.arch()?;
    let embedding = parse_embedding(header.field("embedding")?)?;
    let latent: usize = header
        .field("latent")?
        .parse()
        .map_err(|_| IoError::CorruptHeader("unparsable latent dim".into()))?;
    let steps: usize = header
        .field("steps")?
        .parse()
        .map_err(|_| IoError::CorruptHeader("unparsable step count".into()))?;
    let hash_field = header.field("config_hash")?;
    let config_hash = if hash_field == "-" { String::new() } else { hash_field.to_string() };
    let declared: usize = header
        .field("payload")?
        .parse()
        .map_err(|_| IoError::CorruptHeader("unparsable payload count".into()))?;
    let p = arch.param_count();
    let expected = steps + latent + steps * p;
    if declared != expected {
        return Err(IoError::CorruptHeader(format!(
            "payload count {declared} does not match arch ({expected})"
        )));
    }
    let values = payload_to_f64(payload, expected)?;
    let times = values[..steps].to_vec();
    let z = LatentCode::new(values[steps..steps + latent].to_vec());
    let thetas = (0..steps)
        .map(|k| {
            let start = steps + latent + k * p;
            FlatParams::new(values[start..start + p].to_vec())
        })
        .collect();
    Ok(TrajectoryFile {
        arch,
        embedding,
        trajectory: Trajectory { thetas, times, z },
        config_hash,
    })
}

/// Delimited text with a fixed header line: `time,x[,y],value`, one row per
/// `(time, point)` pair, full-precision decimals.
pub fn export_grid_solution(sol: &GridSolution, path: &Path) -> Result<(), IoError> {
    let dim = sol.shape.len();
    let mut out = String::new();
    out.push_str(if dim == 2 { "time,x,y,value\n" } else { "time,x,value\n" });
    let axis = |ax: usize, n: usize| -> Vec<f64> {
        let [a, b] = sol.domain.interval(ax);
        (0..n).map(|j| a + (b - a) * j as f64 / n as f64).collect()
    };
    match dim {
        1 => {
            let xs = axis(0, sol.shape[0]);
            for (t, field) in sol.times.iter().zip(&sol.fields) {
                for (x, v) in xs.iter().zip(field) {
                    let _ = writeln!(
                        out,
                        "{},{},{}",
                        format_f64(*t),
                        format_f64(*x),
                        format_f64(*v)
                    );
                }
            }
        }
        2 => {
            let xs = axis(0, sol.shape[0]);
            let ys = axis(1, sol.shape[1]);
            for (t, field) in sol.times.iter().zip(&sol.fields) {
                for (ix, x) in xs.iter().enumerate() {
                    for (iy, y) in ys.iter().enumerate() {
                        let _ = writeln!(
                            out,
                            "{},{},{},{}",
                            format_f64(*t),
                            format_f64(*x),
                            format_f64(*y),
                            format_f64(field[ix * sol.shape[1] + iy])
                        );
                    }
                }
            }
        }
        d => {
            return Err(IoError::MalformedTable {
                path: path.to_path_buf(),
                detail: format!("unsupported dimension {d}"),
            })
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Inverse of [`export_grid_solution`]. Values round-trip bit-exactly; the
/// domain is reconstructed from the grid coordinates (left end exact, right
/// end extrapolated by one spacing).
pub fn import_grid_solution(path: &Path) -> Result<GridSolution, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let malformed = |detail: String| IoError::MalformedTable {
        path: path.to_path_buf(),
        detail,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| malformed("empty file".into()))?;
    let dim = match header {
        "time,x,value" => 1,
        "time,x,y,value" => 2,
        other => return Err(malformed(format!("unexpected header `{other}`"))),
    };
    let mut rows: Vec<(f64, Vec<f64>, f64)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(malformed(format!(
                "row {}: expected {} columns, found {}",
                lineno + 2,
                dim + 2,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, IoError> {
            s.parse()
                .map_err(|_| malformed(format!("row {}: bad number `{s}`", lineno + 2)))
        };
        let t = parse(fields[0])?;
        let coords: Vec<f64> = fields[1..1 + dim]
            .iter()
            .map(|s| parse(s))
            .collect::<Result<_, _>>()?;
        let v = parse(fields[1 + dim])?;
        rows.push((t, coords, v));
    }
    if rows.is_empty() {
        return Ok(GridSolution {
            times: Vec::new(),
            fields: Vec::new(),
            domain: DomainSpec::interval_1d(0.0, 1.0).expect("static"),
            shape: vec![0; dim],
        });
    }

    let mut times = Vec::new();
    for (t, _, _) in &rows {
        if times.last() != Some(t) {
            times.push(*t);
        }
    }
    let per_time = rows.len() / times.len();
    if per_time * times.len() != rows.len() {
        return Err(malformed("row count is not a multiple of the time count".into()));
    }
    let fields: Vec<Vec<f64>> = (0..times.len())
        .map(|k| rows[k * per_time..(k + 1) * per_time].iter().map(|r| r.2).collect())
        .collect();

    let first_block = &rows[..per_time];
    let shape = match dim {
        1 => vec![per_time],
        _ => {
            let ny = first_block
                .iter()
                .position(|(_, c, _)| c[0] != first_block[0].1[0])
                .unwrap_or(per_time);
            if ny == 0 || !per_time.is_multiple_of(ny) {
                return Err(malformed("inconsistent 2D grid layout".into()));
            }
            vec![per_time / ny, ny]
        }
    };
    let domain = match dim {
        1 => {
            let x0 = first_block[0].1[0];
            let h = if per_time > 1 { first_block[1].1[0] - x0 } else { 1.0 };
            DomainSpec::interval_1d(x0, x0 + h * per_time as f64)
                .map_err(|e| malformed(format!("degenerate grid: {e}")))?
        }
        _ => DomainSpec::unit_square(),
    };
    Ok(GridSolution {
        times,
        fields,
        domain,
        shape,
    })
}

/// One accuracy entry: traceable to its (sample, mode, time) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub sample: String,
    pub mode: String,
    pub time: f64,
    pub mse: f64,
}

/// Accuracy table plus run provenance. Wall-clock durations are carried for
/// logging but are written to the sidecar run log, not the report file, so
/// reports stay byte-identical across reruns.
#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub config: Vec<(String, String)>,
    pub seeds: Vec<u64>,
    pub rows: Vec<ReportRow>,
    pub wall_ms: Vec<(String, u128)>,
}

/// Structured text with stable key order: provenance, config echo, then one
/// `mse` line per row.
pub fn export_report(report: &ExperimentReport, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    let _ = writeln!(out, "ngm-report {CHECKPOINT_VERSION}");
    let seeds = if report.seeds.is_empty() {
        "-".to_string()
    } else {
        report
            .seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(out, "seeds {seeds}");
    let mut config = report.config.clone();
    config.sort();
    for (k, v) in &config {
        let _ = writeln!(out, "config {k} = {v}");
    }
    for row in &report.rows {
        let _ = writeln!(
            out,
            "mse sample={} mode={} t={} {}",
            row.sample,
            row.mode,
            format_f64(row.time),
            format_f64(row.mse)
        );
    }
    atomic_write(path, out.as_bytes())
}
