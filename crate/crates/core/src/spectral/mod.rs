//! Fourier pseudospectral reference solvers and the MSE metric.
//!
//! Spatial derivatives are exact in the trigonometric basis (multiply the
//! transform by `(ik)^m`), time stepping is integrating-factor RK4: the
//! stiff linear symbol (dispersion for the third-order problem, diffusion
//! elsewhere) is exponentiated exactly and RK4 only sees the nonlinear
//! term. Products are dealiased with the 2/3 rule.

use crate::models::{ac_coefficient, AcVariant, BenchmarkName, DomainSpec, ModelError, PdeProblem};
use crate::models::{AC_DIFFUSION, BURGERS_VISCOSITY, KDV_DISPERSION};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("grid mismatch: {0}")]
    ShapeMismatch(String),
    #[error("reference solve went unstable at step {step} (max |u| = {magnitude:e})")]
    Instability { step: usize, magnitude: f64 },
    #[error("record time {time} is not a multiple of dt = {dt}")]
    TimeNotOnGrid { time: f64, dt: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Uniform periodic grid; the duplicated right endpoint is excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    n_modes: usize,
    domain: DomainSpec,
}

impl SpectralGrid {
    pub fn new(domain: DomainSpec, n_modes: usize) -> Result<Self, SpectralError> {
        if n_modes < 4 || !n_modes.is_power_of_two() {
            return Err(SpectralError::InvalidGrid(format!(
                "n_modes must be a power of two >= 4, got {n_modes}"
            )));
        }
        Ok(SpectralGrid { n_modes, domain })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Total number of grid values per field.
    pub fn n_values(&self) -> usize {
        self.n_modes.pow(self.domain.dim() as u32)
    }

    pub fn axis_points(&self, axis: usize) -> Vec<f64> {
        let [a, b] = self.domain.interval(axis);
        let n = self.n_modes;
        (0..n).map(|j| a + (b - a) * j as f64 / n as f64).collect()
    }

    /// Grid points in field-storage order (2D: x-major, y fastest).
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self.domain.dim() {
            1 => self.axis_points(0).into_iter().map(|x| vec![x]).collect(),
            2 => {
                let xs = self.axis_points(0);
                let ys = self.axis_points(1);
                let mut out = Vec::with_capacity(xs.len() * ys.len());
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

    /// Signed wavenumbers `2 pi m / L` in FFT storage order.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.n_modes as isize;
        let scale = 2.0 * std::f64::consts::PI / self.domain.length(axis);
        (0..n)
            .map(|m| {
                let m_signed = if m <= n / 2 { m } else { m - n };
                scale * m_signed as f64
            })
            .collect()
    }
}

/// Reference or predicted field values on a fixed grid at chosen times.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub times: Vec<f64>,
    /// One flat value array per time, in [`SpectralGrid::points`] order.
    pub fields: Vec<Vec<f64>>,
    pub domain: DomainSpec,
    /// Grid extent per axis.
    pub shape: Vec<usize>,
}

impl GridSolution {
    pub fn n_points(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn field_at(&self, t_index: usize) -> &[f64] {
        &self.fields[t_index]
    }
}

/// Test hooks for the reference solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceOptions {
    /// Drop the advective term, leaving only the exactly-integrated linear
    /// part (isolates the diffusion for decay checks).
    pub disable_advection: bool,
}

struct Fft1d {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    n: usize,
}

impl Fft1d {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft1d {
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            n,
        }
    }

    fn forward(&self, data: &mut [Complex<f64>]) {
        self.fwd.process(data);
    }

    fn inverse(&self, data: &mut [Complex<f64>]) {
        self.inv.process(data);
        let scale = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// 2/3-rule mask in FFT storage order: `true` keeps the mode.
fn dealias_mask_1d(n: usize) -> Vec<bool> {
    let cutoff = n / 3;
    (0..n)
        .map(|m| {
            let m_signed = if m <= n / 2 { m as isize } else { m as isize - n as isize };
            m_signed.unsigned_abs() <= cutoff
        })
        .collect()
}

enum Problem1d {
    /// `u_t = -(1/2)(u^2)_x + linear`, for the quadratic benchmarks.
    Quadratic { advection: bool },
    /// `u_t = -a(t,x)(u^3 - u) + linear`.
    Reaction { variant: AcVariant, shift: f64 },
}

struct Solver1d {
    fft: Fft1d,
    n: usize,
    /// exp(lin * dt) and exp(lin * dt / 2)
    e_full: Vec<Complex<f64>>,
    e_half: Vec<Complex<f64>>,
    ik: Vec<Complex<f64>>,
    mask: Vec<bool>,
    xs: Vec<f64>,
    kind: Problem1d,
    // scratch
    phys: Vec<Complex<f64>>,
    work: Vec<Complex<f64>>,
}

impl Solver1d {
    fn new(problem: &PdeProblem, grid: &SpectralGrid, dt: f64, opts: ReferenceOptions) -> Self {
        let n = grid.n_modes();
        let ks = grid.wavenumbers(0);
        let lin: Vec<Complex<f64>> = ks
            .iter()
            .map(|&k| match problem.name {
                // -(1/400) u_xxx has symbol -(1/400)(ik)^3 = i k^3 / 400
                BenchmarkName::KdV => Complex::new(0.0, KDV_DISPERSION * k * k * k),
                BenchmarkName::Burgers => Complex::new(-BURGERS_VISCOSITY * k * k, 0.0),
                _ => Complex::new(-AC_DIFFUSION * k * k, 0.0),
            })
            .collect();
        let kind = match problem.name {
            BenchmarkName::KdV | BenchmarkName::Burgers => Problem1d::Quadratic {
                advection: !opts.disable_advection,
            },
            BenchmarkName::Ac1dConst => Problem1d::Reaction {
                variant: AcVariant::Const,
                shift: problem.domain.shift(),
            },
            BenchmarkName::Ac1dTx => Problem1d::Reaction {
                variant: AcVariant::Tx,
                shift: problem.domain.shift(),
            },
            BenchmarkName::Ac2d => unreachable!("2D problem routed to Solver2d"),
        };
        Solver1d {
            fft: Fft1d::new(n),
            n,
            e_full: lin.iter().map(|l| (l * dt).exp()).collect(),
            e_half: lin.iter().map(|l| (l * dt / 2.0).exp()).collect(),
            ik: ks.iter().map(|&k| Complex::new(0.0, k)).collect(),
            mask: dealias_mask_1d(n),
            xs: grid.axis_points(0),
            kind,
            phys: vec![Complex::default(); n],
            work: vec![Complex::default(); n],
        }
    }

    /// Nonlinear term in spectral space; returns max |u| for the blow-up
    /// guard.
    fn nonlinear(&mut self, t: f64, u_hat: &[Complex<f64>], out: &mut [Complex<f64>]) -> f64 {
        self.phys.copy_from_slice(u_hat);
        self.fft.inverse(&mut self.phys);
        let mut max_u = 0.0f64;
        match &self.kind {
            Problem1d::Quadratic { advection } => {
                if !advection {
                    for v in &self.phys {
                        max_u = max_u.max(v.re.abs());
                    }
                    out.fill(Complex::default());
                    return max_u;
                }
                for (w, v) in self.work.iter_mut().zip(&self.phys) {
                    let u = v.re;
                    max_u = max_u.max(u.abs());
                    *w = Complex::new(0.5 * u * u, 0.0);
                }
                self.fft.forward(&mut self.work);
                for (m, o) in out.iter_mut().enumerate().take(self.n) {
                    *o = if self.mask[m] {
                        -self.ik[m] * self.work[m]
                    } else {
                        Complex::default()
                    };
                }
            }
            Problem1d::Reaction { variant, shift } => {
                let variant = *variant;
                let shift = *shift;
                for ((w, v), &x) in self.work.iter_mut().zip(&self.phys).zip(&self.xs) {
                    let u = v.re;
                    max_u = max_u.max(u.abs());
                    let a = ac_coefficient(t, x, shift, variant);
                    *w = Complex::new(-a * (u * u * u - u), 0.0);
                }
                self.fft.forward(&mut self.work);
                for (m, o) in out.iter_mut().enumerate().take(self.n) {
                    *o = if self.mask[m] { self.work[m] } else { Complex::default() };
                }
            }
        }
        max_u
    }
}

struct Solver2d {
    fft: Fft1d,
    n: usize,
    e_full: Vec<Complex<f64>>,
    e_half: Vec<Complex<f64>>,
    mask: Vec<bool>,
    phys: Vec<Complex<f64>>,
    work: Vec<Complex<f64>>,
    col: Vec<Complex<f64>>,
}

impl Solver2d {
    fn new(problem: &PdeProblem, grid: &SpectralGrid, dt: f64) -> Self {
        assert!(matches!(problem.name, BenchmarkName::Ac2d));
        let n = grid.n_modes();
        let kx = grid.wavenumbers(0);
        let ky = grid.wavenumbers(1);
        let mut lin = Vec::with_capacity(n * n);
        for &kxi in &kx {
            for &kyi in &ky {
                lin.push(Complex::new(-AC_DIFFUSION * (kxi * kxi + kyi * kyi), 0.0));
            }
        }
        let mask1 = dealias_mask_1d(n);
        let mut mask = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                mask.push(mask1[i] && mask1[j]);
            }
        }
        Solver2d {
            fft: Fft1d::new(n),
            n,
            e_full: lin.iter().map(|l| (l * dt).exp()).collect(),
            e_half: lin.iter().map(|l| (l * dt / 2.0).exp()).collect(),
            mask,
            phys: vec![Complex::default(); n * n],
            work: vec![Complex::default(); n * n],
            col: vec![Complex::default(); n],
        }
    }

    fn fft2(&mut self, data: &mut [Complex<f64>], inverse: bool) {
        let n = self.n;
        for row in data.chunks_mut(n) {
            if inverse {
                self.fft.inverse(row);
            } else {
                self.fft.forward(row);
            }
        }
        for j in 0..n {
            for i in 0..n {
                self.col[i] = data[i * n + j];
            }
            if inverse {
                self.fft.inverse(&mut self.col);
            } else {
                self.fft.forward(&mut self.col);
            }
            for i in 0..n {
                data[i * n + j] = self.col[i];
            }
        }
    }

    fn nonlinear(&mut self, _t: f64, u_hat: &[Complex<f64>], out: &mut [Complex<f64>]) -> f64 {
        let mut phys = std::mem::take(&mut self.phys);
        phys.copy_from_slice(u_hat);
        self.fft2(&mut phys, true);
        let mut max_u = 0.0f64;
        let mut work = std::mem::take(&mut self.work);
        for (w, v) in work.iter_mut().zip(&phys) {
            let u = v.re;
            max_u = max_u.max(u.abs());
            *w = Complex::new(-2.0 * (u * u * u - u), 0.0);
        }
        self.fft2(&mut work, false);
        for (m, o) in out.iter_mut().enumerate() {
            *o = if self.mask[m] { work[m] } else { Complex::default() };
        }
        self.phys = phys;
        self.work = work;
        max_u
    }
}

enum Solver {
    D1(Solver1d),
    D2(Solver2d),
}

impl Solver {
    fn nonlinear(&mut self, t: f64, u_hat: &[Complex<f64>], out: &mut [Complex<f64>]) -> f64 {
        match self {
            Solver::D1(s) => s.nonlinear(t, u_hat, out),
            Solver::D2(s) => s.nonlinear(t, u_hat, out),
        }
    }

    fn exponentials(&self) -> (&[Complex<f64>], &[Complex<f64>]) {
        match self {
            Solver::D1(s) => (&s.e_full, &s.e_half),
            Solver::D2(s) => (&s.e_full, &s.e_half),
        }
    }

    fn mask(&self) -> &[bool] {
        match self {
            Solver::D1(s) => &s.mask,
            Solver::D2(s) => &s.mask,
        }
    }

    fn spectral(&mut self, u: &[f64]) -> Vec<Complex<f64>> {
        let mut hat: Vec<Complex<f64>> = u.iter().map(|&v| Complex::new(v, 0.0)).collect();
        match self {
            Solver::D1(s) => s.fft.forward(&mut hat),
            Solver::D2(s) => s.fft2(&mut hat, false),
        }
        // keep the state inside the dealiased band from the start; the
        // linear term is diagonal, so no energy re-enters the masked modes
        for (v, keep) in hat.iter_mut().zip(self.mask()) {
            if !keep {
                *v = Complex::default();
            }
        }
        hat
    }

    fn physical(&mut self, u_hat: &[Complex<f64>]) -> Vec<f64> {
        let mut buf = u_hat.to_vec();
        match self {
            Solver::D1(s) => s.fft.inverse(&mut buf),
            Solver::D2(s) => s.fft2(&mut buf, true),
        }
        buf.iter().map(|v| v.re).collect()
    }
}

/// Integrate the benchmark PDE from `u0` (values on `grid`) and record the
/// field at `record_times`, each of which must sit on the `dt` time grid.
pub fn solve_reference(
    problem: &PdeProblem,
    u0: &[f64],
    grid: &SpectralGrid,
    dt_ref: f64,
    record_times: &[f64],
) -> Result<GridSolution, SpectralError> {
    solve_reference_with(problem, u0, grid, dt_ref, record_times, ReferenceOptions::default())
}

pub fn solve_reference_with(
    problem: &PdeProblem,
    u0: &[f64],
    grid: &SpectralGrid,
    dt_ref: f64,
    record_times: &[f64],
    opts: ReferenceOptions,
) -> Result<GridSolution, SpectralError> {
    if grid.domain() != &problem.domain {
        return Err(SpectralError::ShapeMismatch(
            "grid domain differs from problem domain".into(),
        ));
    }
    if u0.len() != grid.n_values() {
        return Err(SpectralError::ShapeMismatch(format!(
            "u0 has {} values, grid has {}",
            u0.len(),
            grid.n_values()
        )));
    }
    if !(dt_ref > 0.0) {
        return Err(SpectralError::InvalidGrid(format!("dt must be > 0, got {dt_ref}")));
    }
    let mut record_steps = Vec::with_capacity(record_times.len());
    for &t in record_times {
        let k = (t / dt_ref).round();
        if (k * dt_ref - t).abs() > 1e-9 * t.abs().max(1.0) || k < 0.0 {
            return Err(SpectralError::TimeNotOnGrid { time: t, dt: dt_ref });
        }
        record_steps.push(k as usize);
    }
    let n_steps = record_steps.iter().copied().max().unwrap_or(0);

    let mut solver = match problem.name {
        BenchmarkName::Ac2d => Solver::D2(Solver2d::new(problem, grid, dt_ref)),
        _ => Solver::D1(Solver1d::new(problem, grid, dt_ref, opts)),
    };

    let mut u_hat = solver.spectral(u0);
    let len = u_hat.len();
    let mut n1 = vec![Complex::default(); len];
    let mut n2 = vec![Complex::default(); len];
    let mut n3 = vec![Complex::default(); len];
    let mut n4 = vec![Complex::default(); len];
    let mut stage = vec![Complex::default(); len];

    let mut fields = vec![Vec::new(); record_times.len()];
    let record_at =
        |step: usize, solver: &mut Solver, u_hat: &[Complex<f64>], fields: &mut Vec<Vec<f64>>| {
            for (slot, &rs) in record_steps.iter().enumerate() {
                if rs == step {
                    fields[slot] = solver.physical(u_hat);
                }
            }
        };
    record_at(0, &mut solver, &u_hat, &mut fields);

    let h = dt_ref;
    for step in 1..=n_steps {
        let t = (step - 1) as f64 * h;
        let max_u = solver.nonlinear(t, &u_hat, &mut n1);
        if !max_u.is_finite() || max_u > 1e6 {
            return Err(SpectralError::Instability { step, magnitude: max_u });
        }
        {
            let (_, e_half) = solver.exponentials();
            for i in 0..len {
                stage[i] = e_half[i] * (u_hat[i] + 0.5 * h * n1[i]);
            }
        }
        solver.nonlinear(t + 0.5 * h, &stage, &mut n2);
        {
            let (_, e_half) = solver.exponentials();
            for i in 0..len {
                stage[i] = e_half[i] * u_hat[i] + 0.5 * h * n2[i];
            }
        }
        solver.nonlinear(t + 0.5 * h, &stage, &mut n3);
        {
            let (e_full, e_half) = solver.exponentials();
            for i in 0..len {
                stage[i] = e_full[i] * u_hat[i] + h * e_half[i] * n3[i];
            }
        }
        solver.nonlinear(t + h, &stage, &mut n4);
        {
            let (e_full, e_half) = solver.exponentials();
            for i in 0..len {
                u_hat[i] = e_full[i] * u_hat[i]
                    + h / 6.0 * (e_full[i] * n1[i] + 2.0 * e_half[i] * (n2[i] + n3[i]) + n4[i]);
            }
        }
        record_at(step, &mut solver, &u_hat, &mut fields);
    }

    let shape = match grid.dim() {
        1 => vec![grid.n_modes()],
        _ => vec![grid.n_modes(), grid.n_modes()],
    };
    Ok(GridSolution {
        times: record_times.to_vec(),
        fields,
        domain: problem.domain.clone(),
        shape,
    })
}

/// Spectral derivative of grid values: inverse transform of `(ik)^m` times
/// the transform. Odd orders zero the Nyquist mode.
pub fn spectral_derivative(
    grid: &SpectralGrid,
    u: &[f64],
    order: usize,
) -> Result<Vec<f64>, SpectralError> {
    if grid.dim() != 1 {
        return Err(SpectralError::InvalidGrid("derivative helper is 1D".into()));
    }
    if u.len() != grid.n_modes() {
        return Err(SpectralError::ShapeMismatch(format!(
            "{} values on a {}-point grid",
            u.len(),
            grid.n_modes()
        )));
    }
    let n = grid.n_modes();
    let fft = Fft1d::new(n);
    let mut hat: Vec<Complex<f64>> = u.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.forward(&mut hat);
    let ks = grid.wavenumbers(0);
    for (m, v) in hat.iter_mut().enumerate() {
        let nyquist = m == n / 2;
        if order % 2 == 1 && nyquist {
            *v = Complex::default();
        } else {
            *v *= Complex::new(0.0, ks[m]).powi(order as i32);
        }
    }
    fft.inverse(&mut hat);
    Ok(hat.iter().map(|v| v.re).collect())
}

/// Mean squared error over a test set at one recorded time:
/// `(1/N_test)(1/N) sum_samples sum_points (u - u*)^2`.
pub fn mse(
    preds: &[&GridSolution],
    refs: &[&GridSolution],
    t_index: usize,
) -> Result<f64, SpectralError> {
    if preds.is_empty() || preds.len() != refs.len() {
        return Err(SpectralError::ShapeMismatch(format!(
            "{} predictions vs {} references",
            preds.len(),
            refs.len()
        )));
    }
    let mut total = 0.0;
    for (p, r) in preds.iter().zip(refs) {
        if p.shape != r.shape {
            return Err(SpectralError::ShapeMismatch("grid shapes differ".into()));
        }
        if t_index >= p.times.len() || t_index >= r.times.len() {
            return Err(SpectralError::ShapeMismatch(format!(
                "time index {t_index} out of range"
            )));
        }
        if p.times[t_index] != r.times[t_index] {
            return Err(SpectralError::ShapeMismatch(format!(
                "recorded times differ at index {t_index}: {} vs {}",
                p.times[t_index], r.times[t_index]
            )));
        }
        let pf = p.field_at(t_index);
        let rf = r.field_at(t_index);
        if pf.len() != rf.len() {
            return Err(SpectralError::ShapeMismatch("field lengths differ".into()));
        }
        let n = pf.len() as f64;
        let sum: f64 = pf.iter().zip(rf).map(|(a, b)| (a - b) * (a - b)).sum();
        total += sum / n;
    }
    Ok(total / preds.len() as f64)
}
