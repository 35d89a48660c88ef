//! Latent-conditioned multilayer perceptron ansatz.
//!
//! The network maps `concat(embed(x), z)` through tanh hidden layers to a
//! scalar field value `U(theta, z, x)`. Besides plain evaluation it provides
//! the two derivative views the Galerkin evolution needs: exact gradients
//! with respect to every weight and bias (reverse accumulation) and spatial
//! derivatives of the composite map up to third order (truncated Taylor
//! jets pushed through the embedding and every layer).

mod embedding;
mod eval;
mod jet;

pub use embedding::EmbeddingSpec;
pub use eval::NetEval;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::ops::Range;
use thiserror::Error;


#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("input dimension mismatch: network expects {expected} inputs, embedding + latent give {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("parameter vector has {actual} entries, architecture needs {expected}")]
    ParamCountMismatch { expected: usize, actual: usize },
    #[error("spatial derivative order {order} is unsupported in {dim}D")]
    UnsupportedOrder { order: usize, dim: usize },
    #[error("point has {actual} coordinates, embedding expects {expected}")]
    PointDimMismatch { expected: usize, actual: usize },
}

/// The only activation the benchmarks use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

/// Layer shape description. The scalar output layer is linear; all hidden
/// layers share the activation.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkArch {
    input_dim: usize,
    hidden_widths: Vec<usize>,
    output_dim: usize,
    activation: Activation,
}

/// Flat parameter vector slices for one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBlock {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `(out_dim, in_dim)` weight slice within the flat vector.
    pub weights: Range<usize>,
    pub biases: Range<usize>,
}

impl NetworkArch {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        output_dim: usize,
    ) -> Result<Self, NetError> {
        if input_dim == 0 {
            return Err(NetError::InvalidArch("input_dim must be >= 1".into()));
        }
        if hidden_widths.contains(&0) {
            return Err(NetError::InvalidArch("hidden widths must be >= 1".into()));
        }
        if output_dim != 1 {
            return Err(NetError::InvalidArch(
                "only scalar-valued fields are supported (output_dim = 1)".into(),
            ));
        }
        Ok(Self {
            input_dim,
            hidden_widths,
            output_dim,
            activation: Activation::Tanh,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden_widths
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// `(in_dim, out_dim)` for each dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut prev = self.input_dim;
        for &w in &self.hidden_widths {
            dims.push((prev, w));
            prev = w;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    /// Total parameter count `p = sum (in+1)*out` over layers.
    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|&(i, o)| (i + 1) * o).sum()
    }

    /// Deterministic layout: per layer, the row-major weight block followed
    /// by the bias block.
    pub fn layer_blocks(&self) -> Vec<LayerBlock> {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (in_dim, out_dim) in self.layer_dims() {
            let w_len = in_dim * out_dim;
            blocks.push(LayerBlock {
                in_dim,
                out_dim,
                weights: offset..offset + w_len,
                biases: offset + w_len..offset + w_len + out_dim,
            });
            offset += w_len + out_dim;
        }
        blocks
    }

    pub fn max_width(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(i, o)| i.max(o))
            .max()
            .unwrap_or(0)
    }
}

/// Row-major weight block and bias block of one layer.
pub type LayerParams = (Vec<f64>, Vec<f64>);

/// Single flat vector holding every weight and bias, in the layout of
/// [`NetworkArch::layer_blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlatParams(Vec<f64>);

impl FlatParams {
    pub fn new(values: Vec<f64>) -> Self {
        FlatParams(values)
    }

    /// A parameter vector matching `arch`, all zeros.
    pub fn zeros(arch: &NetworkArch) -> Self {
        FlatParams(vec![0.0; arch.param_count()])
    }

    pub fn for_arch(values: Vec<f64>, arch: &NetworkArch) -> Result<Self, NetError> {
        if values.len() != arch.param_count() {
            return Err(NetError::ParamCountMismatch {
                expected: arch.param_count(),
                actual: values.len(),
            });
        }
        Ok(FlatParams(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Split into per-layer `(weights, biases)` owned blocks.
    pub fn unflatten(&self, arch: &NetworkArch) -> Result<Vec<LayerParams>, NetError> {
        if self.len() != arch.param_count() {
            return Err(NetError::ParamCountMismatch {
                expected: arch.param_count(),
                actual: self.len(),
            });
        }
        Ok(arch
            .layer_blocks()
            .iter()
            .map(|b| {
                (
                    self.0[b.weights.clone()].to_vec(),
                    self.0[b.biases.clone()].to_vec(),
                )
            })
            .collect())
    }

    /// Inverse of [`unflatten`](Self::unflatten).
    pub fn flatten(arch: &NetworkArch, layers: &[LayerParams]) -> Result<Self, NetError> {
        let blocks = arch.layer_blocks();
        if layers.len() != blocks.len() {
            return Err(NetError::InvalidArch(format!(
                "expected {} layers, got {}",
                blocks.len(),
                layers.len()
            )));
        }
        let mut values = vec![0.0; arch.param_count()];
        for (b, (w, bias)) in blocks.iter().zip(layers) {
            if w.len() != b.weights.len() || bias.len() != b.biases.len() {
                return Err(NetError::InvalidArch("layer block size mismatch".into()));
            }
            values[b.weights.clone()].copy_from_slice(w);
            values[b.biases.clone()].copy_from_slice(bias);
        }
        Ok(FlatParams(values))
    }
}

/// Latent vector identifying one PDE instance on the trial manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode(Vec<f64>);

impl LatentCode {
    pub fn new(values: Vec<f64>) -> Self {
        LatentCode(values)
    }

    pub fn zeros(dim: usize) -> Self {
        LatentCode(vec![0.0; dim])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

/// Field value and spatial derivatives of the ansatz at one point.
///
/// `d2` holds the pure second derivative per axis; the 2D right-hand sides
/// only ever need their sum (the Laplacian), so mixed derivatives are not
/// computed. `d3` exists in 1D only.
#[derive(Debug, Clone, Copy)]
pub struct SpatialJet {
    dim: usize,
    pub u: f64,
    d1: [f64; 2],
    d2: Option<[f64; 2]>,
    d3: Option<f64>,
}

impl SpatialJet {
    pub fn new_1d(u: f64, d1: f64, d2: Option<f64>, d3: Option<f64>) -> Self {
        SpatialJet {
            dim: 1,
            u,
            d1: [d1, 0.0],
            d2: d2.map(|v| [v, 0.0]),
            d3,
        }
    }

    pub fn new_2d(u: f64, d1: [f64; 2], d2: Option<[f64; 2]>) -> Self {
        SpatialJet {
            dim: 2,
            u,
            d1,
            d2,
            d3: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// First derivative along `axis`.
    pub fn d1(&self, axis: usize) -> f64 {
        assert!(axis < self.dim, "axis {axis} out of range for {}D jet", self.dim);
        self.d1[axis]
    }

    /// Pure second derivative along `axis`, if order >= 2 was requested.
    pub fn d2(&self, axis: usize) -> Option<f64> {
        assert!(axis < self.dim, "axis {axis} out of range for {}D jet", self.dim);
        self.d2.map(|d| d[axis])
    }

    /// Third derivative (1D only), if order 3 was requested.
    pub fn d3(&self) -> Option<f64> {
        self.d3
    }

    /// Sum of pure second derivatives over the axes.
    pub fn laplacian(&self) -> Option<f64> {
        self.d2.map(|d| d[..self.dim].iter().sum())
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite()
            && self.d1[..self.dim].iter().all(|v| v.is_finite())
            && self
                .d2
                .is_none_or(|d| d[..self.dim].iter().all(|v| v.is_finite()))
            && self.d3.is_none_or(f64::is_finite)
    }
}

/// Glorot-uniform weights, zero biases. Deterministic given `seed`.
pub fn init_params(arch: &NetworkArch, seed: u64) -> FlatParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; arch.param_count()];
    for block in arch.layer_blocks() {
        let bound = (6.0 / (block.in_dim + block.out_dim) as f64).sqrt();
        for v in &mut values[block.weights] {
            *v = bound * (2.0 * rng.gen::<f64>() - 1.0);
        }
        // biases stay zero
    }
    FlatParams(values)
}

/// Evaluate `U(theta, z, x)` with the network input `concat(embed(x), z)`.
pub fn forward(
    arch: &NetworkArch,
    params: &FlatParams,
    emb: &EmbeddingSpec,
    z: &LatentCode,
    x: &[f64],
) -> Result<f64, NetError> {
    let mut eval = NetEval::new(arch, emb, z.len())?;
    check_point(emb, x)?;
    check_params(arch, params)?;
    Ok(eval.value(params, z, x))
}

/// Row `j` is the gradient of `U` with respect to every parameter at `xs[j]`.
///
/// Rows are independent, so they are computed in parallel; the row order is
/// fixed by `xs`, which keeps the result identical for any thread count.
pub fn param_jacobian(
    arch: &NetworkArch,
    params: &FlatParams,
    emb: &EmbeddingSpec,
    z: &LatentCode,
    xs: &[Vec<f64>],
) -> Result<Array2<f64>, NetError> {
    assert!(!xs.is_empty(), "param_jacobian needs at least one point");
    NetEval::new(arch, emb, z.len())?;
    check_params(arch, params)?;
    for x in xs {
        check_point(emb, x)?;
    }
    let p = arch.param_count();
    let mut data = vec![0.0; xs.len() * p];
    use rayon::prelude::*;
    data.par_chunks_mut(p)
        .zip(xs.par_iter())
        .for_each_init(
            || NetEval::new(arch, emb, z.len()).expect("dims already checked"),
            |eval, (row, x)| {
                eval.value_with_grads(params, z, x, row, None);
            },
        );
    Ok(Array2::from_shape_vec((xs.len(), p), data).expect("shape matches construction"))
}

/// Spatial derivatives of `x -> U(theta, z, x)` up to `max_order`.
///
/// Exact up to roundoff: truncated Taylor jets are propagated through the
/// embedding and every layer, one pass per spatial axis.
pub fn spatial_jet(
    arch: &NetworkArch,
    params: &FlatParams,
    emb: &EmbeddingSpec,
    z: &LatentCode,
    x: &[f64],
    max_order: usize,
) -> Result<SpatialJet, NetError> {
    let mut eval = NetEval::new(arch, emb, z.len())?;
    check_point(emb, x)?;
    check_params(arch, params)?;
    eval.spatial_jet(params, z, x, max_order)
}

fn check_point(emb: &EmbeddingSpec, x: &[f64]) -> Result<(), NetError> {
    if x.len() != emb.spatial_dim() {
        return Err(NetError::PointDimMismatch {
            expected: emb.spatial_dim(),
            actual: x.len(),
        });
    }
    Ok(())
}

fn check_params(arch: &NetworkArch, params: &FlatParams) -> Result<(), NetError> {
    if params.len() != arch.param_count() {
        return Err(NetError::ParamCountMismatch {
            expected: arch.param_count(),
            actual: params.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests;
