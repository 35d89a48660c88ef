//! Benchmark PDE catalog: right-hand sides, domains, and random
//! initial-condition families.
//!
//! All problems are first-order in time, `du/dt = f(t, x, u, spatial
//! derivatives)`, with periodic boundary behaviour supplied by the input
//! embedding on the network side and by the Fourier basis on the reference
//! side.

use crate::net::{EmbeddingSpec, SpatialJet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("right-hand side needs spatial derivative order {needed}, jet only carries order {available}")]
    MissingDerivative { needed: usize, available: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("unknown benchmark name: {0}")]
    UnknownBenchmark(String),
}

/// Spatial domain: one or two axes, each a closed interval. `shift` is the
/// random-domain offset of the 1D Allen-Cahn family (zero elsewhere).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    dim: usize,
    intervals: [[f64; 2]; 2],
    shift: f64,
}

impl DomainSpec {
    pub fn interval_1d(a: f64, b: f64) -> Result<Self, ModelError> {
        if !(a < b) {
            return Err(ModelError::InvalidDomain(format!("need a < b, got [{a}, {b}]")));
        }
        Ok(DomainSpec {
            dim: 1,
            intervals: [[a, b], [0.0, 0.0]],
            shift: 0.0,
        })
    }

    /// `[-shift, 1 + shift]` with `shift` in `[-0.2, 0.2]`.
    pub fn shifted_unit(shift: f64) -> Result<Self, ModelError> {
        if !(-0.2..=0.2).contains(&shift) {
            return Err(ModelError::InvalidDomain(format!(
                "domain shift {shift} outside [-0.2, 0.2]"
            )));
        }
        Ok(DomainSpec {
            dim: 1,
            intervals: [[-shift, 1.0 + shift], [0.0, 0.0]],
            shift,
        })
    }

    pub fn unit_square() -> Self {
        DomainSpec {
            dim: 2,
            intervals: [[0.0, 1.0], [0.0, 1.0]],
            shift: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interval(&self, axis: usize) -> [f64; 2] {
        assert!(axis < self.dim);
        self.intervals[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        let [a, b] = self.interval(axis);
        b - a
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Affine map of `x` on this axis onto the unit period `[0, 1]`.
    pub fn to_unit(&self, axis: usize, x: f64) -> f64 {
        let [a, b] = self.interval(axis);
        (x - a) / (b - a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkName {
    KdV,
    Burgers,
    Ac1dConst,
    Ac1dTx,
    Ac2d,
}

impl BenchmarkName {
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s {
            "kdv" => Ok(BenchmarkName::KdV),
            "burgers" => Ok(BenchmarkName::Burgers),
            "ac1d_const" => Ok(BenchmarkName::Ac1dConst),
            "ac1d_tx" => Ok(BenchmarkName::Ac1dTx),
            "ac2d" => Ok(BenchmarkName::Ac2d),
            other => Err(ModelError::UnknownBenchmark(other.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BenchmarkName::KdV => "kdv",
            BenchmarkName::Burgers => "burgers",
            BenchmarkName::Ac1dConst => "ac1d_const",
            BenchmarkName::Ac1dTx => "ac1d_tx",
            BenchmarkName::Ac2d => "ac2d",
        }
    }
}

/// One benchmark problem: domain, right-hand side, boundary embedding, and
/// the horizon the experiments integrate to.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem {
    pub name: BenchmarkName,
    pub domain: DomainSpec,
    pub embedding: EmbeddingSpec,
    pub final_time: f64,
}

impl PdeProblem {
    /// `u_t + u u_x + (1/400) u_xxx = 0` on `[-1, 1]`.
    pub fn kdv() -> Self {
        PdeProblem {
            name: BenchmarkName::KdV,
            domain: DomainSpec::interval_1d(-1.0, 1.0).unwrap(),
            embedding: EmbeddingSpec::Periodic1D { half_width: 1.0 },
            final_time: 1.0,
        }
    }

    /// `u_t + u u_x = (1/(100 pi)) u_xx` on `[0, 1]`.
    pub fn burgers() -> Self {
        PdeProblem {
            name: BenchmarkName::Burgers,
            domain: DomainSpec::interval_1d(0.0, 1.0).unwrap(),
            embedding: EmbeddingSpec::ShiftedPeriodic1D { shift: 0.0 },
            final_time: 1.0,
        }
    }

    /// `u_t - 0.001 u_xx + a(t,x)(u^3 - u) = 0` on `[-shift, 1+shift]`.
    pub fn allen_cahn_1d(time_dependent: bool, shift: f64) -> Result<Self, ModelError> {
        Ok(PdeProblem {
            name: if time_dependent {
                BenchmarkName::Ac1dTx
            } else {
                BenchmarkName::Ac1dConst
            },
            domain: DomainSpec::shifted_unit(shift)?,
            embedding: EmbeddingSpec::ShiftedPeriodic1D { shift },
            final_time: 2.0,
        })
    }

    /// `u_t - 0.001 (u_xx + u_yy) + 2 (u^3 - u) = 0` on the unit square.
    pub fn allen_cahn_2d() -> Self {
        PdeProblem {
            name: BenchmarkName::Ac2d,
            domain: DomainSpec::unit_square(),
            embedding: EmbeddingSpec::Periodic2D,
            final_time: 2.0,
        }
    }

    pub fn from_name(name: BenchmarkName, shift: f64) -> Result<Self, ModelError> {
        Ok(match name {
            BenchmarkName::KdV => PdeProblem::kdv(),
            BenchmarkName::Burgers => PdeProblem::burgers(),
            BenchmarkName::Ac1dConst => PdeProblem::allen_cahn_1d(false, shift)?,
            BenchmarkName::Ac1dTx => PdeProblem::allen_cahn_1d(true, shift)?,
            BenchmarkName::Ac2d => PdeProblem::allen_cahn_2d(),
        })
    }

    /// Highest spatial derivative order the right-hand side consumes.
    pub fn max_derivative_order(&self) -> usize {
        match self.name {
            BenchmarkName::KdV => 3,
            _ => 2,
        }
    }

    /// `f(t, x, u, derivatives)` so that `u_t = f`.
    pub fn rhs(&self, t: f64, x: &[f64], jet: &SpatialJet) -> Result<f64, ModelError> {
        match self.name {
            BenchmarkName::KdV => rhs_kdv(jet),
            BenchmarkName::Burgers => rhs_burgers(jet),
            BenchmarkName::Ac1dConst => {
                rhs_ac(jet, ac_coefficient(t, x[0], self.domain.shift(), AcVariant::Const))
            }
            BenchmarkName::Ac1dTx => {
                rhs_ac(jet, ac_coefficient(t, x[0], self.domain.shift(), AcVariant::Tx))
            }
            BenchmarkName::Ac2d => rhs_ac(jet, 2.0),
        }
    }
}

pub const KDV_DISPERSION: f64 = 1.0 / 400.0;
pub const BURGERS_VISCOSITY: f64 = 1.0 / (100.0 * PI);
pub const AC_DIFFUSION: f64 = 0.001;

/// `f = -u u_x - (1/400) u_xxx`.
pub fn rhs_kdv(jet: &SpatialJet) -> Result<f64, ModelError> {
    let d3 = jet.d3().ok_or(ModelError::MissingDerivative {
        needed: 3,
        available: if jet.d2(0).is_some() { 2 } else { 1 },
    })?;
    Ok(-jet.u * jet.d1(0) - KDV_DISPERSION * d3)
}

/// `f = -u u_x + (1/(100 pi)) u_xx`.
pub fn rhs_burgers(jet: &SpatialJet) -> Result<f64, ModelError> {
    let d2 = jet.d2(0).ok_or(ModelError::MissingDerivative {
        needed: 2,
        available: 1,
    })?;
    Ok(-jet.u * jet.d1(0) + BURGERS_VISCOSITY * d2)
}

/// `f = 0.001 Lap(u) - a (u^3 - u)`, with the Laplacian collapsing to
/// `u_xx` in 1D.
pub fn rhs_ac(jet: &SpatialJet, a_value: f64) -> Result<f64, ModelError> {
    let lap = jet.laplacian().ok_or(ModelError::MissingDerivative {
        needed: 2,
        available: 1,
    })?;
    let u = jet.u;
    Ok(AC_DIFFUSION * lap - a_value * (u * u * u - u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcVariant {
    Const,
    Tx,
}

/// Reaction coefficient of the 1D Allen-Cahn family: `2` for the constant
/// variant, `2 (1 + t sin(2 pi (x+d)/(1+2d)))` for the time-dependent one.
pub fn ac_coefficient(t: f64, x: f64, shift: f64, variant: AcVariant) -> f64 {
    match variant {
        AcVariant::Const => 2.0,
        AcVariant::Tx => {
            let arg = 2.0 * PI * (x + shift) / (1.0 + 2.0 * shift);
            2.0 * (1.0 + t * arg.sin())
        }
    }
}

/// Random initial-condition families of the four benchmarks.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialConditionFamily {
    /// `a1 sin(pi x) + a2 cos(pi x)`, coefficients uniform on `[-1/2, 1/2]`.
    KdvTrig,
    /// Periodic Gaussian random field `N(0, 7^2 (-Lap + 7^2 I)^-3)`,
    /// realized as a truncated Fourier series on the domain's unit period.
    PeriodicGrf { modes: usize },
    /// `0.001 sum_{i,j in {-1,0,1}} [a_ij sin(...) + b_ij cos(...)]` with
    /// coefficients uniform on `[0, 1]`.
    Ac2dTrig {
        /// Keep the sine argument `2 pi i x + 2 pi i y` exactly as the
        /// benchmark states it; `false` switches to the `(i, j)` indexing
        /// the cosine term uses.
        sin_index_as_written: bool,
    },
}

/// A sampled initial condition, evaluable anywhere on its domain.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialField {
    Trig1d {
        a1: f64,
        a2: f64,
    },
    /// `c0 + sum_k cos_coef[k-1] cos(2 pi k y) + sin_coef[k-1] sin(2 pi k y)`
    /// with `y` the unit-period rescale of `x`.
    Fourier1d {
        domain: DomainSpec,
        constant: f64,
        cos_coef: Vec<f64>,
        sin_coef: Vec<f64>,
    },
    Trig2d {
        alpha: [[f64; 3]; 3],
        beta: [[f64; 3]; 3],
        sin_index_as_written: bool,
    },
}

impl InitialField {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            InitialField::Trig1d { a1, a2 } => {
                a1 * (PI * x[0]).sin() + a2 * (PI * x[0]).cos()
            }
            InitialField::Fourier1d {
                domain,
                constant,
                cos_coef,
                sin_coef,
            } => {
                let y = domain.to_unit(0, x[0]);
                let mut u = *constant;
                for (k, (a, b)) in cos_coef.iter().zip(sin_coef).enumerate() {
                    let arg = 2.0 * PI * (k + 1) as f64 * y;
                    u += a * arg.cos() + b * arg.sin();
                }
                u
            }
            InitialField::Trig2d {
                alpha,
                beta,
                sin_index_as_written,
            } => {
                let (xx, yy) = (x[0], x[1]);
                let mut u = 0.0;
                for (ii, row_a) in alpha.iter().enumerate() {
                    let i = ii as f64 - 1.0;
                    for (jj, a) in row_a.iter().enumerate() {
                        let j = jj as f64 - 1.0;
                        let sin_arg = if *sin_index_as_written {
                            2.0 * PI * i * xx + 2.0 * PI * i * yy
                        } else {
                            2.0 * PI * i * xx + 2.0 * PI * j * yy
                        };
                        let cos_arg = 2.0 * PI * i * xx + 2.0 * PI * j * yy;
                        u += a * sin_arg.sin() + beta[ii][jj] * cos_arg.cos();
                    }
                }
                0.001 * u
            }
        }
    }

    pub fn eval_on(&self, points: &[Vec<f64>]) -> Vec<f64> {
        points.iter().map(|x| self.eval(x)).collect()
    }
}

/// Fourier-mode variance of the periodic GRF law: `49 / ((2 pi k)^2 + 49)^3`.
/// `k = 0` gives the constant-mode variance `1/2401`.
pub fn grf_mode_variance(k: usize) -> f64 {
    let lam = (2.0 * PI * k as f64).powi(2) + 49.0;
    49.0 / lam.powi(3)
}

/// Draw one initial condition. Deterministic given `seed`; independent
/// seeds give independent fields.
pub fn sample_initial_condition(
    family: &InitialConditionFamily,
    domain: &DomainSpec,
    seed: u64,
) -> InitialField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match family {
        InitialConditionFamily::KdvTrig => {
            let a1 = rng.gen_range(-0.5..=0.5);
            let a2 = rng.gen_range(-0.5..=0.5);
            InitialField::Trig1d { a1, a2 }
        }
        InitialConditionFamily::PeriodicGrf { modes } => {
            let normal = StandardNormal;
            let constant = grf_mode_variance(0).sqrt() * rng.sample::<f64, _>(normal);
            let mut cos_coef = Vec::with_capacity(*modes);
            let mut sin_coef = Vec::with_capacity(*modes);
            for k in 1..=*modes {
                // split the mode variance across the cos/sin pair so the
                // paired total matches the complex-mode variance
                let sd = (grf_mode_variance(k) / 2.0).sqrt();
                cos_coef.push(sd * rng.sample::<f64, _>(normal));
                sin_coef.push(sd * rng.sample::<f64, _>(normal));
            }
            InitialField::Fourier1d {
                domain: domain.clone(),
                constant,
                cos_coef,
                sin_coef,
            }
        }
        InitialConditionFamily::Ac2dTrig { sin_index_as_written } => {
            let mut alpha = [[0.0; 3]; 3];
            let mut beta = [[0.0; 3]; 3];
            for row in alpha.iter_mut() {
                for slot in row.iter_mut() {
                    *slot = rng.gen_range(0.0..=1.0);
                }
            }
            for row in beta.iter_mut() {
                for slot in row.iter_mut() {
                    *slot = rng.gen_range(0.0..=1.0);
                }
            }
            InitialField::Trig2d {
                alpha,
                beta,
                sin_index_as_written: *sin_index_as_written,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::SpatialJet;
    use approx::assert_relative_eq;

    fn jet1(u: f64, d1: f64, d2: f64, d3: f64) -> SpatialJet {
        SpatialJet::new_1d(u, d1, Some(d2), Some(d3))
    }

    #[test]
    fn kdv_rhs_arithmetic() {
        // constant field
        assert_eq!(rhs_kdv(&jet1(3.0, 0.0, 0.0, 0.0)).unwrap(), 0.0);
        // u=2, d1=3, d3=400 -> -6 - 1 = -7
        assert_eq!(rhs_kdv(&jet1(2.0, 3.0, 0.0, 400.0)).unwrap(), -7.0);
        // zero network
        assert_eq!(rhs_kdv(&jet1(0.0, 0.0, 0.0, 0.0)).unwrap(), 0.0);
        // missing third derivative
        let j = SpatialJet::new_1d(1.0, 1.0, Some(1.0), None);
        assert!(matches!(
            rhs_kdv(&j),
            Err(ModelError::MissingDerivative { needed: 3, .. })
        ));
    }

    #[test]
    fn burgers_rhs_arithmetic() {
        assert_eq!(rhs_burgers(&jet1(5.0, 0.0, 0.0, 0.0)).unwrap(), 0.0);
        // u=1, d1=1, d2=100 pi -> -1 + 1 = 0
        let r = rhs_burgers(&jet1(1.0, 1.0, 100.0 * PI, 0.0)).unwrap();
        assert!(r.abs() < 1e-15);
        // parity: negating u and d1 leaves the advective part unchanged,
        // negating d2 negates the diffusive part
        let base = rhs_burgers(&jet1(2.0, 3.0, 7.0, 0.0)).unwrap();
        let flipped = rhs_burgers(&jet1(-2.0, -3.0, 7.0, 0.0)).unwrap();
        assert_relative_eq!(base, flipped, epsilon = 1e-15);
        let dneg = rhs_burgers(&jet1(2.0, 3.0, -7.0, 0.0)).unwrap();
        assert_relative_eq!(
            dneg + 2.0 * 3.0,
            -(base + 2.0 * 3.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn ac_rhs_equilibria_and_arithmetic() {
        for u in [-1.0, 0.0, 1.0] {
            assert_eq!(rhs_ac(&jet1(u, 0.0, 0.0, 0.0), 2.0).unwrap(), 0.0);
        }
        // u=2, d2=0, a=2 -> -2 (8 - 2) = -12
        assert_eq!(rhs_ac(&jet1(2.0, 0.0, 0.0, 0.0), 2.0).unwrap(), -12.0);
        // a = 0 reduces to pure diffusion
        assert_eq!(rhs_ac(&jet1(2.0, 1.0, 5.0, 0.0), 0.0).unwrap(), 0.001 * 5.0);
        // 2D: Laplacian = d2x + d2y
        let j2 = SpatialJet::new_2d(0.0, [0.0, 0.0], Some([3.0, 4.0]));
        assert_eq!(rhs_ac(&j2, 2.0).unwrap(), 0.001 * 7.0);
    }

    #[test]
    fn ac_coefficient_values() {
        assert_eq!(ac_coefficient(0.0, 0.3, 0.1, AcVariant::Const), 2.0);
        assert_eq!(ac_coefficient(0.0, 0.3, 0.1, AcVariant::Tx), 2.0);
        // delta=0, t=1, x=0.25 -> 2 (1 + sin(pi/2)) = 4
        assert_relative_eq!(
            ac_coefficient(1.0, 0.25, 0.0, AcVariant::Tx),
            4.0,
            epsilon = 1e-12
        );
        // delta=0, t=1, x=0.5 -> 2 (1 + sin(pi)) = 2
        assert_relative_eq!(
            ac_coefficient(1.0, 0.5, 0.0, AcVariant::Tx),
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn kdv_trig_forced_coefficients() {
        let f = InitialField::Trig1d { a1: 0.5, a2: 0.0 };
        assert_relative_eq!(f.eval(&[0.5]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn sampled_fields_are_periodic_on_their_domain() {
        let dom = DomainSpec::interval_1d(-1.0, 1.0).unwrap();
        for seed in 0..20 {
            let f = sample_initial_condition(&InitialConditionFamily::KdvTrig, &dom, seed);
            assert!((f.eval(&[-1.0]) - f.eval(&[1.0])).abs() <= 1e-12);
        }
        let dom = DomainSpec::shifted_unit(0.13).unwrap();
        let fam = InitialConditionFamily::PeriodicGrf { modes: 64 };
        for seed in 0..20 {
            let f = sample_initial_condition(&fam, &dom, seed);
            let [a, b] = dom.interval(0);
            assert!((f.eval(&[a]) - f.eval(&[b])).abs() <= 1e-12);
        }
        let fam = InitialConditionFamily::Ac2dTrig {
            sin_index_as_written: true,
        };
        for seed in 0..10 {
            let f = sample_initial_condition(&fam, &DomainSpec::unit_square(), seed);
            for y in [0.0, 0.37, 0.8] {
                assert!((f.eval(&[0.0, y]) - f.eval(&[1.0, y])).abs() <= 1e-12);
                assert!((f.eval(&[y, 0.0]) - f.eval(&[y, 1.0])).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn grf_constant_mode_variance_monte_carlo() {
        // Monte-Carlo oracle for the stated spectral law: the constant mode
        // has variance 49/49^3 = 1/2401.
        let dom = DomainSpec::interval_1d(0.0, 1.0).unwrap();
        let fam = InitialConditionFamily::PeriodicGrf { modes: 16 };
        let n = 10_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for seed in 0..n {
            let f = sample_initial_condition(&fam, &dom, 1_000_000 + seed);
            let c0 = match &f {
                InitialField::Fourier1d { constant, .. } => *constant,
                _ => unreachable!(),
            };
            sum += c0;
            sum_sq += c0 * c0;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let expected = 1.0 / 2401.0;
        assert!(
            (var - expected).abs() <= 0.1 * expected,
            "constant-mode variance {var} vs {expected}"
        );
    }

    #[test]
    fn grf_mode_variance_formula() {
        assert_relative_eq!(grf_mode_variance(0), 1.0 / 2401.0, epsilon = 1e-18);
        let v1 = 49.0 / ((2.0 * PI).powi(2) + 49.0).powi(3);
        assert_relative_eq!(grf_mode_variance(1), v1, epsilon = 1e-18);
        assert!(grf_mode_variance(64) / grf_mode_variance(0) < 1e-9);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let dom = DomainSpec::interval_1d(0.0, 1.0).unwrap();
        let fam = InitialConditionFamily::PeriodicGrf { modes: 64 };
        let a = sample_initial_condition(&fam, &dom, 7);
        let b = sample_initial_condition(&fam, &dom, 7);
        assert_eq!(a, b);
        let c = sample_initial_condition(&fam, &dom, 8);
        assert_ne!(a, c);
    }
}
