//! Positional input embeddings that bake boundary behaviour into the ansatz.

use super::jet::Jet;
use std::f64::consts::PI;

/// Map from a spatial point to the network's positional input features.
///
/// The periodic variants reduce the coordinate into one fundamental period
/// before taking sines and cosines, so translating a point by an exact
/// multiple of the period reproduces bit-identical features.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingSpec {
    /// `[sin(pi x / L), cos(pi x / L)]` on `[-L, L]`; period `2L`.
    Periodic1D { half_width: f64 },
    /// `[sin(pi (x+d)/(1+2d)), cos(pi (x+d)/(1+2d))]` on `[-d, 1+d]`;
    /// the trigonometric period is `2(1+2d)`.
    ShiftedPeriodic1D { shift: f64 },
    /// `[sin(2 pi x), cos(2 pi x), sin(2 pi y), cos(2 pi y)]` on the unit
    /// square; period 1 per axis.
    Periodic2D,
    /// Raw coordinates, no boundary structure.
    Identity { dim: usize },
}

impl EmbeddingSpec {
    pub fn spatial_dim(&self) -> usize {
        match self {
            EmbeddingSpec::Periodic1D { .. } | EmbeddingSpec::ShiftedPeriodic1D { .. } => 1,
            EmbeddingSpec::Periodic2D => 2,
            EmbeddingSpec::Identity { dim } => *dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            EmbeddingSpec::Periodic1D { .. } | EmbeddingSpec::ShiftedPeriodic1D { .. } => 2,
            EmbeddingSpec::Periodic2D => 4,
            EmbeddingSpec::Identity { dim } => *dim,
        }
    }

    /// Declared period along `axis`, when the embedding is periodic.
    pub fn period(&self, axis: usize) -> Option<f64> {
        match self {
            EmbeddingSpec::Periodic1D { half_width } if axis == 0 => Some(2.0 * half_width),
            EmbeddingSpec::ShiftedPeriodic1D { shift } if axis == 0 => {
                Some(2.0 * (1.0 + 2.0 * shift))
            }
            EmbeddingSpec::Periodic2D if axis < 2 => Some(1.0),
            _ => None,
        }
    }

    /// Angular frequency and phase so the feature pair is
    /// `[sin(a x + b), cos(a x + b)]` along the given axis.
    fn angle(&self, axis: usize) -> (f64, f64) {
        match self {
            EmbeddingSpec::Periodic1D { half_width } => (PI / half_width, 0.0),
            EmbeddingSpec::ShiftedPeriodic1D { shift } => {
                let len = 1.0 + 2.0 * shift;
                (PI / len, PI * shift / len)
            }
            EmbeddingSpec::Periodic2D => {
                debug_assert!(axis < 2);
                (2.0 * PI, 0.0)
            }
            EmbeddingSpec::Identity { .. } => unreachable!("identity has no angle"),
        }
    }

    /// Left end of the fundamental period used for argument reduction.
    fn origin(&self, _axis: usize) -> f64 {
        match self {
            EmbeddingSpec::Periodic1D { half_width } => -half_width,
            EmbeddingSpec::ShiftedPeriodic1D { shift } => -shift,
            EmbeddingSpec::Periodic2D => 0.0,
            EmbeddingSpec::Identity { .. } => 0.0,
        }
    }

    fn reduce(&self, axis: usize, x: f64) -> f64 {
        match self.period(axis) {
            Some(period) => {
                let k = ((x - self.origin(axis)) / period).floor();
                if k == 0.0 {
                    x
                } else {
                    x - k * period
                }
            }
            None => x,
        }
    }

    /// Write the feature vector for `x` into `out` (`out.len() == output_dim`).
    pub fn embed(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.spatial_dim());
        debug_assert_eq!(out.len(), self.output_dim());
        match self {
            EmbeddingSpec::Identity { .. } => out.copy_from_slice(x),
            EmbeddingSpec::Periodic1D { .. } | EmbeddingSpec::ShiftedPeriodic1D { .. } => {
                let (a, b) = self.angle(0);
                let (s, c) = (a * self.reduce(0, x[0]) + b).sin_cos();
                out[0] = s;
                out[1] = c;
            }
            EmbeddingSpec::Periodic2D => {
                for axis in 0..2 {
                    let (a, b) = self.angle(axis);
                    let (s, c) = (a * self.reduce(axis, x[axis]) + b).sin_cos();
                    out[2 * axis] = s;
                    out[2 * axis + 1] = c;
                }
            }
        }
    }

    /// Taylor jets of every feature with respect to motion along `axis`.
    pub(crate) fn embed_jets(&self, x: &[f64], axis: usize, order: usize, out: &mut [Jet]) {
        debug_assert_eq!(x.len(), self.spatial_dim());
        debug_assert_eq!(out.len(), self.output_dim());
        debug_assert!(axis < self.spatial_dim());
        match self {
            EmbeddingSpec::Identity { dim } => {
                for (i, slot) in out.iter_mut().enumerate().take(*dim) {
                    *slot = Jet::constant(x[i], order);
                    if i == axis && order >= 1 {
                        slot.c[1] = 1.0;
                    }
                }
            }
            EmbeddingSpec::Periodic1D { .. } | EmbeddingSpec::ShiftedPeriodic1D { .. } => {
                let (a, b) = self.angle(0);
                let xr = self.reduce(0, x[0]);
                out[0] = Jet::sin_affine(a, xr, b, order);
                out[1] = Jet::cos_affine(a, xr, b, order);
            }
            EmbeddingSpec::Periodic2D => {
                for ax in 0..2 {
                    let (a, b) = self.angle(ax);
                    let xr = self.reduce(ax, x[ax]);
                    if ax == axis {
                        out[2 * ax] = Jet::sin_affine(a, xr, b, order);
                        out[2 * ax + 1] = Jet::cos_affine(a, xr, b, order);
                    } else {
                        let u = a * xr + b;
                        let (s, c) = u.sin_cos();
                        out[2 * ax] = Jet::constant(s, order);
                        out[2 * ax + 1] = Jet::constant(c, order);
                    }
                }
            }
        }
    }
}
