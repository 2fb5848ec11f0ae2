use rand::Rng;

use super::ArchConfig;
use crate::encoding::{CELLS, COLS, ROWS};
use crate::nn::{Activation, Conv2d, Dense, Tensor};

/// Critic: one stride-1 conv, four stride-2 convs, leaky ReLU after each,
/// then a dense layer to a single unbounded score. Condition entries enter
/// as extra constant input channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub condition_channels: usize,
    pub convs: Vec<Conv2d>,
    pub head: Dense,
    pub activation: Activation,
}

/// Critic input: one data channel plus per-sample condition values, each
/// of which stands for a constant input channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticInput {
    pub data: Tensor,
    /// `[N, C]`
    pub conditions: Vec<f64>,
}

impl CriticInput {
    /// The `[1 + C, N, 64, 32]` tensor this input stands for.
    pub fn dense(&self) -> Tensor {
        let batch = self.data.batch;
        let nc = self.conditions.len().checked_div(batch).unwrap_or(0);
        let mut x = Tensor::zeros(1 + nc, batch, ROWS, COLS);
        x.data[..batch * CELLS].copy_from_slice(&self.data.data);
        for c in 0..nc {
            for n in 0..batch {
                let start = ((1 + c) * batch + n) * CELLS;
                x.data[start..start + CELLS].fill(self.conditions[n * nc + c]);
            }
        }
        x
    }
}

/// Layer inputs and pre-activations from a forward pass.
pub struct DiscriminatorCache {
    conditions: Vec<f64>,
    inputs: Vec<Tensor>,
    pre_activations: Vec<Tensor>,
    features: Tensor,
}

impl DiscriminatorCache {
    pub fn batch(&self) -> usize {
        self.inputs[0].batch
    }

    /// Which pre-activations are positive, layer by layer. Two parameter
    /// settings with equal patterns sit on the same linear piece.
    pub fn sign_pattern(&self) -> Vec<bool> {
        self.pre_activations.iter().flat_map(|t| t.data.iter().map(|&v| v > 0.0)).collect()
    }
}

impl Discriminator {
    pub fn new<R: Rng>(rng: &mut R, condition_channels: usize, arch: &ArchConfig) -> Self {
        let w = arch.discriminator_widths;
        let k = arch.discriminator_kernel;
        let mut convs = vec![Conv2d::new(rng, 1 + condition_channels, w[0], k, 1)];
        for i in 0..4 {
            convs.push(Conv2d::new(rng, w[i], w[i + 1], k, 2));
        }
        let (h, wd) = (ROWS >> 4, COLS >> 4);
        let head = Dense::new(rng, w[4] * h * wd, 1);
        Discriminator {
            condition_channels,
            convs,
            head,
            activation: Activation::LeakyRelu(arch.leaky_slope),
        }
    }

    /// Pairs `[N, 2048]` data rows with `[N, C]` condition rows.
    pub fn assemble_input(&self, data: &[f64], conditions: &[f64], batch: usize) -> CriticInput {
        assert_eq!(data.len(), batch * CELLS, "critic data length");
        assert_eq!(conditions.len(), batch * self.condition_channels, "critic condition length");
        CriticInput {
            data: Tensor::from_data(1, batch, ROWS, COLS, data.to_vec()),
            conditions: conditions.to_vec(),
        }
    }

    pub fn forward(&self, x: &CriticInput) -> (Vec<f64>, DiscriminatorCache) {
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut pre_activations = Vec::with_capacity(self.convs.len());
        let mut act = x.data.clone();
        for (i, conv) in self.convs.iter().enumerate() {
            let pre = if i == 0 {
                conv.forward_split(&act, &x.conditions, true)
            } else {
                conv.forward(&act, true)
            };
            let next = Tensor {
                data: self.activation.forward(&pre.data),
                ..pre.clone()
            };
            inputs.push(act);
            pre_activations.push(pre);
            act = next;
        }
        let scores = self.head.forward(&act.to_rows(), act.batch, true);
        (
            scores,
            DiscriminatorCache {
                conditions: x.conditions.clone(),
                inputs,
                pre_activations,
                features: act,
            },
        )
    }

    pub fn score(&self, data: &[f64], conditions: &[f64], batch: usize) -> Vec<f64> {
        self.forward(&self.assemble_input(data, conditions, batch)).0
    }

    /// Backpropagates score gradients `dscores`. Parameter gradients are
    /// accumulated into `grads` (in [`Discriminator::params`] order) when
    /// given; the input gradient is returned when `want_dx`.
    pub fn backward(
        &self,
        cache: &DiscriminatorCache,
        dscores: &[f64],
        mut grads: Option<&mut [Vec<f64>]>,
        want_dx: bool,
    ) -> Option<Tensor> {
        let batch = cache.batch();
        let features = &cache.features;
        let (head_w, head_b) = match grads.as_deref_mut() {
            Some(g) => {
                let (w, b) = g[2 * self.convs.len()..].split_at_mut(1);
                (Some(&mut w[0][..]), Some(&mut b[0][..]))
            }
            None => (None, None),
        };
        let drows = self
            .head
            .backward(&features.to_rows(), dscores, batch, head_w, head_b, true)
            .expect("dx requested");
        let mut grad = Tensor::from_rows(&drows, features.channels, batch, features.height, features.width);
        for i in (0..self.convs.len()).rev() {
            let pre = &cache.pre_activations[i];
            let dpre = Tensor {
                data: self.activation.backward(&pre.data, &grad.data),
                ..Tensor::zeros_like(pre)
            };
            let need_dx = i > 0 || want_dx;
            let (wg, bg) = match grads.as_deref_mut() {
                Some(g) => {
                    let (w, b) = g[2 * i..].split_at_mut(1);
                    (Some(&mut w[0][..]), Some(&mut b[0][..]))
                }
                None => (None, None),
            };
            let conds: &[f64] = if i == 0 { &cache.conditions } else { &[] };
            grad = self.convs[i].backward_split(&cache.inputs[i], conds, &dpre, wg, bg, need_dx)?;
        }
        Some(grad)
    }

    /// Gradient of each sample's score with respect to its data cells, as
    /// `[N, 2048]` rows.
    pub fn data_gradient(&self, cache: &DiscriminatorCache) -> Vec<f64> {
        let batch = cache.batch();
        let dx = self
            .backward(cache, &vec![1.0; batch], None, true)
            .expect("dx requested");
        dx.data[..batch * CELLS].to_vec()
    }

    /// Accumulates into `grads` the parameter gradient of
    /// `Σ_n ⟨∇ₓ D(x_n), v_n⟩`, the directional derivative of the scores
    /// along data-cell tangents `v` (`[N, 2048]` rows), holding `v` fixed.
    ///
    /// Tangents are pushed forward through the network alongside the cached
    /// primal values, then both are differentiated in reverse. This yields
    /// the exact parameter gradient of the gradient penalty.
    pub fn directional_backward(&self, cache: &DiscriminatorCache, tangent: &[f64], grads: &mut [Vec<f64>]) {
        let batch = cache.batch();
        assert_eq!(tangent.len(), batch * CELLS, "tangent length");

        // tangent forward: t_in[i] feeds conv i, t_pre[i] is its output
        let mut t_in = Vec::with_capacity(self.convs.len());
        let mut t_pre = Vec::with_capacity(self.convs.len());
        let mut t = Tensor::zeros_like(&cache.inputs[0]);
        t.data[..batch * CELLS].copy_from_slice(tangent);
        // conditions are held fixed, so their tangent is zero
        let zero_conditions = vec![0.0; cache.conditions.len()];
        for (i, conv) in self.convs.iter().enumerate() {
            let tz = if i == 0 {
                conv.forward_split(&t, &zero_conditions, false)
            } else {
                conv.forward(&t, false)
            };
            let pre = &cache.pre_activations[i];
            let next = Tensor {
                data: pre
                    .data
                    .iter()
                    .zip(&tz.data)
                    .map(|(&z, &dz)| self.activation.derivative(z) * dz)
                    .collect(),
                ..Tensor::zeros_like(pre)
            };
            t_in.push(t);
            t_pre.push(tz);
            t = next;
        }

        // reverse pass; the objective is linear in the final tangent, so the
        // primal adjoint starts at zero and the tangent adjoint at the head weights
        let n_convs = self.convs.len();
        let head_in = {
            let (w, _) = grads[2 * n_convs..].split_at_mut(1);
            self.head
                .backward(&t.to_rows(), &vec![1.0; batch], batch, Some(&mut w[0][..]), None, true)
                .expect("dx requested")
        };
        let mut t_adj = Tensor::from_rows(&head_in, t.channels, batch, t.height, t.width);
        let mut p_adj: Option<Tensor> = None;

        for i in (0..n_convs).rev() {
            let pre = &cache.pre_activations[i];
            let tz_adj = Tensor {
                data: pre
                    .data
                    .iter()
                    .zip(&t_adj.data)
                    .map(|(&z, &g)| self.activation.derivative(z) * g)
                    .collect(),
                ..Tensor::zeros_like(pre)
            };
            let mut pz_adj = p_adj.as_ref().map(|pa| Tensor {
                data: pre
                    .data
                    .iter()
                    .zip(&pa.data)
                    .map(|(&z, &g)| self.activation.derivative(z) * g)
                    .collect(),
                ..Tensor::zeros_like(pre)
            });
            if !self.activation.is_piecewise_linear() {
                let curvature: Vec<f64> = pre
                    .data
                    .iter()
                    .zip(&t_pre[i].data)
                    .zip(&t_adj.data)
                    .map(|((&z, &tz), &g)| self.activation.second_derivative(z) * tz * g)
                    .collect();
                let pz = pz_adj.get_or_insert_with(|| Tensor::zeros_like(pre));
                for (a, c) in pz.data.iter_mut().zip(curvature) {
                    *a += c;
                }
            }

            let need_dx = i > 0;
            let (w, b) = grads[2 * i..].split_at_mut(1);
            let conv = &self.convs[i];
            let (t_conds, p_conds): (&[f64], &[f64]) = if i == 0 {
                (&zero_conditions, &cache.conditions)
            } else {
                (&[], &[])
            };
            let next_t = conv.backward_split(&t_in[i], t_conds, &tz_adj, Some(&mut w[0][..]), None, need_dx);
            let next_p = pz_adj.as_ref().and_then(|pz| {
                conv.backward_split(&cache.inputs[i], p_conds, pz, Some(&mut w[0][..]), Some(&mut b[0][..]), need_dx)
            });
            if let Some(nt) = next_t {
                t_adj = nt;
            }
            p_adj = next_p;
        }
    }

    pub fn params(&self) -> Vec<&Vec<f64>> {
        let mut p = Vec::new();
        for conv in &self.convs {
            p.push(&conv.weight);
            p.push(&conv.bias);
        }
        p.push(&self.head.weight);
        p.push(&self.head.bias);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut p = Vec::new();
        for conv in &mut self.convs {
            p.push(&mut conv.weight);
            p.push(&mut conv.bias);
        }
        p.push(&mut self.head.weight);
        p.push(&mut self.head.bias);
        p
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tiny_arch() -> ArchConfig {
        ArchConfig {
            discriminator_widths: [2, 2, 2, 2, 2],
            ..ArchConfig::compact()
        }
    }

    #[test]
    fn spatial_extent_before_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Discriminator::new(&mut rng, 0, &ArchConfig::compact());
        let x = d.assemble_input(&vec![0.5; 3 * CELLS], &[], 3);
        let (scores, cache) = d.forward(&x);
        assert_eq!(scores.len(), 3);
        assert_eq!((cache.features.height, cache.features.width), (4, 2));
    }

    #[test]
    fn condition_channels_hold_flag_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Discriminator::new(&mut rng, 9, &tiny_arch());
        assert_eq!(d.convs[0].in_channels, 10);
        let mut cond = vec![0.0; 2 * 9];
        cond[3] = 1.0;
        cond[9 + 8] = 1.0;
        let x = d.assemble_input(&vec![0.0; 2 * CELLS], &cond, 2).dense();
        // channel 4 (flag 3) of sample 0 is all ones, sample 1 all zeros
        let plane = |c: usize, n: usize| &x.data[(c * 2 + n) * CELLS..(c * 2 + n + 1) * CELLS];
        assert!(plane(4, 0).iter().all(|&v| v == 1.0));
        assert!(plane(4, 1).iter().all(|&v| v == 0.0));
        assert!(plane(9, 1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn tiny_critic_is_under_a_thousand_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Discriminator::new(&mut rng, 0, &tiny_arch()).num_params() <= 1000);
    }

    #[test]
    fn data_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = Discriminator::new(&mut rng, 2, &tiny_arch());
        let data: Vec<f64> = (0..2 * CELLS).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cond = vec![1.0, 0.0, 0.0, 1.0];
        let (_, cache) = d.forward(&d.assemble_input(&data, &cond, 2));
        let g = d.data_gradient(&cache);
        let h = 1e-6;
        for idx in [0, 77, 1500, CELLS + 3, 2 * CELLS - 1] {
            let mut plus = data.clone();
            plus[idx] += h;
            let mut minus = data.clone();
            minus[idx] -= h;
            let n = idx / CELLS;
            let fd = (d.score(&plus, &cond, 2)[n] - d.score(&minus, &cond, 2)[n]) / (2.0 * h);
            assert!((fd - g[idx]).abs() < 1e-7, "cell {idx}: {fd} vs {}", g[idx]);
        }
    }

    #[test]
    fn directional_gradient_matches_finite_differences() {
        // d/dθ Σ_n <∇ₓD(x_n), v_n> against central differences of the
        // directional derivative, itself computed with data_gradient
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = Discriminator::new(&mut rng, 1, &tiny_arch());
        let batch = 2;
        let data: Vec<f64> = (0..batch * CELLS).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cond = vec![1.0, 0.0];
        let v: Vec<f64> = (0..batch * CELLS).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |d: &Discriminator| -> f64 {
            let (_, cache) = d.forward(&d.assemble_input(&data, &cond, batch));
            d.data_gradient(&cache).iter().zip(&v).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = d.forward(&d.assemble_input(&data, &cond, batch));
        let mut grads = d.zero_grads();
        d.directional_backward(&cache, &v, &mut grads);
        let h = 1e-6;
        for a in 0..grads.len() {
            let len = grads[a].len();
            for i in (0..len).step_by((len / 5).max(1)) {
                let mut plus = d.clone();
                plus.params_mut()[a][i] += h;
                let mut minus = d.clone();
                minus.params_mut()[a][i] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let an = grads[a][i];
                let scale = fd.abs().max(an.abs()).max(1e-6);
                assert!((fd - an).abs() / scale < 1e-4, "array {a} index {i}: fd {fd} analytic {an}");
            }
        }
    }
}
