use rand::Rng;

use super::ArchConfig;
use crate::encoding::{CELLS, COLS, ROWS};
use crate::nn::{upsample2x, upsample2x_backward, Activation, Conv2d, Dense, Tensor};

/// Height and width of the grid the latent vector is projected onto; four
/// doublings take it to 64×32.
pub const SEED_GRID: (usize, usize) = (ROWS / 16, COLS / 16);

/// Dense projection to a 4×2 grid, then four blocks of
/// (2× nearest upsample, 3×3 stride-1 conv, activation). Hidden blocks use
/// ReLU, the last one tanh, so outputs lie in (−1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub input_dim: usize,
    pub project: Dense,
    pub blocks: Vec<Conv2d>,
}

/// Intermediates kept by the forward pass for backpropagation.
pub struct GeneratorCache {
    input: Vec<f64>,
    projected: Tensor,
    upsampled: Vec<Tensor>,
    pre_activations: Vec<Tensor>,
}

impl Generator {
    pub fn new<R: Rng>(rng: &mut R, input_dim: usize, arch: &ArchConfig) -> Self {
        let w = arch.generator_widths;
        let project = Dense::new(rng, input_dim, w[0] * SEED_GRID.0 * SEED_GRID.1);
        let widths = [w[0], w[1], w[2], w[3], 1];
        let blocks = (0..4)
            .map(|i| Conv2d::new(rng, widths[i], widths[i + 1], arch.generator_kernel, 1))
            .collect();
        Generator { input_dim, project, blocks }
    }

    fn activation(&self, block: usize) -> Activation {
        if block + 1 == self.blocks.len() {
            Activation::Tanh
        } else {
            Activation::Relu
        }
    }

    /// Maps `[N, input_dim]` rows to `[N, 2048]` rows of matrix cells.
    pub fn forward(&self, input: &[f64], batch: usize) -> (Vec<f64>, GeneratorCache) {
        let flat = self.project.forward(input, batch, true);
        let projected = Tensor::from_rows(&flat, self.blocks[0].in_channels, batch, SEED_GRID.0, SEED_GRID.1);
        let mut act = Tensor {
            data: Activation::Relu.forward(&projected.data),
            ..projected.clone()
        };
        let mut upsampled = Vec::with_capacity(4);
        let mut pre_activations = Vec::with_capacity(4);
        for (i, conv) in self.blocks.iter().enumerate() {
            let up = upsample2x(&act);
            let pre = conv.forward(&up, true);
            act = Tensor {
                data: self.activation(i).forward(&pre.data),
                ..pre.clone()
            };
            upsampled.push(up);
            pre_activations.push(pre);
        }
        debug_assert_eq!(act.len(), batch * CELLS);
        // one output channel: channel-major storage is already row-major per sample
        let out = act.data;
        (
            out,
            GeneratorCache {
                input: input.to_vec(),
                projected,
                upsampled,
                pre_activations,
            },
        )
    }

    pub fn generate(&self, input: &[f64], batch: usize) -> Vec<f64> {
        self.forward(input, batch).0
    }

    /// Parameter gradients for upstream gradient `grad_out` (`[N, 2048]`),
    /// in [`Generator::params`] order.
    pub fn backward(&self, cache: &GeneratorCache, grad_out: &[f64]) -> Vec<Vec<f64>> {
        let mut grads = self.zero_grads();
        let batch = cache.projected.batch;
        let mut grad = Tensor::from_data(1, batch, ROWS, COLS, grad_out.to_vec());
        for i in (0..self.blocks.len()).rev() {
            let pre = &cache.pre_activations[i];
            let dpre = Tensor {
                data: self.activation(i).backward(&pre.data, &grad.data),
                ..Tensor::zeros_like(pre)
            };
            let (wg, rest) = grads[2 + 2 * i..].split_at_mut(1);
            let dup = self.blocks[i]
                .backward(&cache.upsampled[i], &dpre, Some(&mut wg[0]), Some(&mut rest[0]), true)
                .expect("dx requested");
            grad = upsample2x_backward(&dup);
        }
        let dprojected = Activation::Relu.backward(&cache.projected.data, &grad.data);
        let rows = Tensor { data: dprojected, ..Tensor::zeros_like(&cache.projected) }.to_rows();
        let (wg, bg) = grads.split_at_mut(1);
        self.project
            .backward(&cache.input, &rows, batch, Some(&mut wg[0]), Some(&mut bg[0]), false);
        grads
    }

    pub fn params(&self) -> Vec<&Vec<f64>> {
        let mut p = vec![&self.project.weight, &self.project.bias];
        for conv in &self.blocks {
            p.push(&conv.weight);
            p.push(&conv.bias);
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut p = vec![&mut self.project.weight, &mut self.project.bias];
        for conv in &mut self.blocks {
            p.push(&mut conv.weight);
            p.push(&mut conv.bias);
        }
        p
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
