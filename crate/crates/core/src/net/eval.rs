//! Reusable evaluation workspace: forward pass, reverse-mode parameter and
//! latent gradients, and Taylor-jet spatial derivative passes.
//!
//! All methods are pure functions of their arguments; the struct only
//! caches buffers so hot loops do not allocate per point.

use super::embedding::EmbeddingSpec;
use super::jet::Jet;
use super::{FlatParams, LatentCode, LayerBlock, NetError, NetworkArch, SpatialJet};

pub struct NetEval {
    blocks: Vec<LayerBlock>,
    emb: EmbeddingSpec,
    emb_dim: usize,
    latent_dim: usize,
    input: Vec<f64>,
    /// Activations per layer: `acts[0]` is the network input, `acts[l]` the
    /// output of layer `l-1`.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
    jet_acts: Vec<Vec<Jet>>,
}

impl NetEval {
    pub fn new(arch: &NetworkArch, emb: &EmbeddingSpec, latent_dim: usize) -> Result<Self, NetError> {
        let actual = emb.output_dim() + latent_dim;
        if actual != arch.input_dim() {
            return Err(NetError::DimensionMismatch {
                expected: arch.input_dim(),
                actual,
            });
        }
        let blocks = arch.layer_blocks();
        let mut acts = Vec::with_capacity(blocks.len() + 1);
        acts.push(vec![0.0; arch.input_dim()]);
        for b in &blocks {
            acts.push(vec![0.0; b.out_dim]);
        }
        let jet_acts = acts
            .iter()
            .map(|a| vec![Jet::zero(0); a.len()])
            .collect();
        let width = arch.max_width();
        Ok(NetEval {
            blocks,
            emb: emb.clone(),
            emb_dim: emb.output_dim(),
            latent_dim,
            input: vec![0.0; arch.input_dim()],
            acts,
            delta: vec![0.0; width],
            delta_next: vec![0.0; width],
            jet_acts,
        })
    }

    fn load_input(&mut self, z: &LatentCode, x: &[f64]) {
        assert_eq!(z.len(), self.latent_dim, "latent code dimension mismatch");
        self.emb.embed(x, &mut self.input[..self.emb_dim]);
        self.input[self.emb_dim..].copy_from_slice(z.values());
    }

    fn run_forward(&mut self, params: &FlatParams) {
        let theta = params.values();
        let n_layers = self.blocks.len();
        self.acts[0].copy_from_slice(&self.input);
        for (l, block) in self.blocks.iter().enumerate() {
            let (head, tail) = self.acts.split_at_mut(l + 1);
            let inp = &head[l];
            let out = &mut tail[0];
            let w = &theta[block.weights.clone()];
            let b = &theta[block.biases.clone()];
            let last = l + 1 == n_layers;
            for i in 0..block.out_dim {
                let row = &w[i * block.in_dim..(i + 1) * block.in_dim];
                let mut s = b[i];
                for (wj, aj) in row.iter().zip(inp.iter()) {
                    s += wj * aj;
                }
                out[i] = if last { s } else { s.tanh() };
            }
        }
    }

    /// `U(theta, z, x)`.
    pub fn value(&mut self, params: &FlatParams, z: &LatentCode, x: &[f64]) -> f64 {
        self.load_input(z, x);
        self.run_forward(params);
        self.acts[self.blocks.len()][0]
    }

    /// Value plus the gradient with respect to every parameter
    /// (`param_grad.len() == p`) and optionally the latent inputs.
    pub fn value_with_grads(
        &mut self,
        params: &FlatParams,
        z: &LatentCode,
        x: &[f64],
        param_grad: &mut [f64],
        latent_grad: Option<&mut [f64]>,
    ) -> f64 {
        assert_eq!(param_grad.len(), params.len(), "param_grad length mismatch");
        let value = self.value(params, z, x);
        let theta = params.values();
        let n_layers = self.blocks.len();

        // Output layer is linear with a single output: seed delta = 1.
        self.delta[0] = 1.0;
        let mut width = 1usize;
        for l in (0..n_layers).rev() {
            let block = &self.blocks[l];
            let w = &theta[block.weights.clone()];
            let inp = &self.acts[l];
            let gw = &mut param_grad[block.weights.clone()];
            for i in 0..block.out_dim {
                let di = self.delta[i];
                let row = &mut gw[i * block.in_dim..(i + 1) * block.in_dim];
                for (g, aj) in row.iter_mut().zip(inp.iter()) {
                    *g = di * aj;
                }
            }
            param_grad[block.biases.clone()].copy_from_slice(&self.delta[..block.out_dim]);

            // delta for the layer below: W^T delta, times tanh' of that
            // layer's activation (the input layer has no activation).
            for j in 0..block.in_dim {
                let mut acc = 0.0;
                for i in 0..block.out_dim {
                    acc += w[i * block.in_dim + j] * self.delta[i];
                }
                self.delta_next[j] = acc;
            }
            width = block.in_dim;
            std::mem::swap(&mut self.delta, &mut self.delta_next);
            if l > 0 {
                let a = &self.acts[l];
                for (d, ai) in self.delta[..width].iter_mut().zip(a.iter()) {
                    *d *= 1.0 - ai * ai;
                }
            }
        }
        if let Some(zg) = latent_grad {
            assert_eq!(zg.len(), self.latent_dim, "latent_grad length mismatch");
            zg.copy_from_slice(&self.delta[self.emb_dim..self.emb_dim + self.latent_dim]);
        }
        let _ = width;
        value
    }

    /// Push a degree-`order` jet along `axis` through embedding and layers;
    /// returns the output jet.
    fn jet_pass(&mut self, params: &FlatParams, z: &LatentCode, x: &[f64], axis: usize, order: usize) -> Jet {
        let theta = params.values();
        let n_layers = self.blocks.len();
        {
            let input_jets = &mut self.jet_acts[0];
            self.emb.embed_jets(x, axis, order, &mut input_jets[..self.emb_dim]);
            for (slot, zv) in input_jets[self.emb_dim..].iter_mut().zip(z.values()) {
                *slot = Jet::constant(*zv, order);
            }
        }
        for (l, block) in self.blocks.iter().enumerate() {
            let (head, tail) = self.jet_acts.split_at_mut(l + 1);
            let inp = &head[l];
            let out = &mut tail[0];
            let w = &theta[block.weights.clone()];
            let b = &theta[block.biases.clone()];
            let last = l + 1 == n_layers;
            for i in 0..block.out_dim {
                let row = &w[i * block.in_dim..(i + 1) * block.in_dim];
                let mut s = Jet::constant(b[i], order);
                for (wj, aj) in row.iter().zip(inp.iter()) {
                    s.axpy(*wj, aj);
                }
                out[i] = if last { s } else { s.tanh() };
            }
        }
        self.jet_acts[n_layers][0]
    }

    /// Spatial derivatives of the composite map up to `max_order`
    /// (1..=3 in 1D; 1..=2 per axis in 2D).
    pub fn spatial_jet(
        &mut self,
        params: &FlatParams,
        z: &LatentCode,
        x: &[f64],
        max_order: usize,
    ) -> Result<SpatialJet, NetError> {
        let dim = self.emb.spatial_dim();
        if max_order == 0 || max_order > 3 || (max_order == 3 && dim == 2) {
            return Err(NetError::UnsupportedOrder {
                order: max_order,
                dim,
            });
        }
        match dim {
            1 => {
                let jet = self.jet_pass(params, z, x, 0, max_order);
                Ok(SpatialJet::new_1d(
                    jet.derivative(0),
                    jet.derivative(1),
                    (max_order >= 2).then(|| jet.derivative(2)),
                    (max_order >= 3).then(|| jet.derivative(3)),
                ))
            }
            2 => {
                let jx = self.jet_pass(params, z, x, 0, max_order);
                let jy = self.jet_pass(params, z, x, 1, max_order);
                Ok(SpatialJet::new_2d(
                    jx.derivative(0),
                    [jx.derivative(1), jy.derivative(1)],
                    (max_order >= 2).then(|| [jx.derivative(2), jy.derivative(2)]),
                ))
            }
            d => Err(NetError::UnsupportedOrder {
                order: max_order,
                dim: d,
            }),
        }
    }
}
