use rand::Rng;

use super::{gemm, init_uniform, Tensor};

/// Upper bound on im2col buffer size (in values) per chunk of samples.
const COLS_BUDGET: usize = 1 << 16;

/// 2-d convolution with square kernel, symmetric zero padding and stride.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out_channels, in_channels · kernel · kernel]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    /// "Same"-padded convolution (`padding = kernel / 2`).
    pub fn new<R: Rng>(rng: &mut R, in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: kernel / 2,
            weight: init_uniform(rng, out_channels * fan_in, fan_in),
            bias: init_uniform(rng, out_channels, fan_in),
        }
    }

    pub fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        (
            (height + 2 * self.padding - self.kernel) / self.stride + 1,
            (width + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn chunk(&self, patch: usize, plane: usize) -> usize {
        (COLS_BUDGET / (patch * plane).max(1)).max(1)
    }

    /// Output positions `[lo, hi)` along one axis whose tap at offset `k_off`
    /// lands inside an input of length `len`.
    fn valid_range(&self, k_off: usize, len: usize, out_len: usize) -> (usize, usize) {
        let (s, pad) = (self.stride, self.padding);
        let lo = if k_off >= pad { 0 } else { (pad - k_off).div_ceil(s) };
        let hi = if len + pad > k_off {
            ((len + pad - k_off - 1) / s + 1).min(out_len)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    /// Unfolds samples `n0..n1` of every channel of `x` into a
    /// `[channels · k · k, (n1 − n0) · ho · wo]` matrix.
    fn im2col(&self, x: &Tensor, n0: usize, n1: usize, cols: &mut [f64]) {
        let (ho, wo) = self.output_size(x.height, x.width);
        let ncols = (n1 - n0) * ho * wo;
        let (k, s) = (self.kernel, self.stride);
        let plane = x.plane();
        for ic in 0..x.channels {
            for ky in 0..k {
                let (oy0, oy1) = self.valid_range(ky, x.height, ho);
                for kx in 0..k {
                    let (ox0, ox1) = self.valid_range(kx, x.width, wo);
                    let row = (ic * k + ky) * k + kx;
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for (j, n) in (n0..n1).enumerate() {
                        let src = &x.data[(ic * x.batch + n) * plane..][..plane];
                        for oy in 0..ho {
                            let seg = &mut dst[(j * ho + oy) * wo..][..wo];
                            if oy < oy0 || oy >= oy1 || ox0 == ox1 {
                                seg.fill(0.0);
                                continue;
                            }
                            seg[..ox0].fill(0.0);
                            seg[ox1..].fill(0.0);
                            let base = (oy * s + ky - self.padding) * x.width + ox0 * s + kx - self.padding;
                            if s == 1 {
                                seg[ox0..ox1].copy_from_slice(&src[base..base + ox1 - ox0]);
                            } else {
                                for (t, v) in seg[ox0..ox1].iter_mut().enumerate() {
                                    *v = src[base + t * s];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Conv2d::im2col`], accumulated into `dx`.
    fn col2im(&self, cols: &[f64], n0: usize, n1: usize, dx: &mut Tensor) {
        let (ho, wo) = self.output_size(dx.height, dx.width);
        let ncols = (n1 - n0) * ho * wo;
        let (k, s) = (self.kernel, self.stride);
        let (batch, plane, width) = (dx.batch, dx.plane(), dx.width);
        for ic in 0..dx.channels {
            for ky in 0..k {
                let (oy0, oy1) = self.valid_range(ky, dx.height, ho);
                for kx in 0..k {
                    let (ox0, ox1) = self.valid_range(kx, width, wo);
                    if ox0 == ox1 {
                        continue;
                    }
                    let row = (ic * k + ky) * k + kx;
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for (j, n) in (n0..n1).enumerate() {
                        let dst = &mut dx.data[(ic * batch + n) * plane..][..plane];
                        for oy in oy0..oy1 {
                            let seg = &src[(j * ho + oy) * wo..][ox0..ox1];
                            let base = (oy * s + ky - self.padding) * width + ox0 * s + kx - self.padding;
                            if s == 1 {
                                for (d, v) in dst[base..base + seg.len()].iter_mut().zip(seg) {
                                    *d += v;
                                }
                            } else {
                                for (t, v) in seg.iter().enumerate() {
                                    dst[base + t * s] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// `[k · k, ho · wo]` indicator of which taps fall inside an
    /// `height × width` input at each output position.
    fn tap_mask(&self, height: usize, width: usize) -> Vec<f64> {
        let ones = Tensor::from_data(1, 1, height, width, vec![1.0; height * width]);
        let (ho, wo) = self.output_size(height, width);
        let mut mask = vec![0.0; self.kernel * self.kernel * ho * wo];
        self.im2col(&ones, 0, 1, &mut mask);
        mask
    }

    /// Number of trailing constant channels implied by `x` and `constants`.
    fn constant_channels(&self, x: &Tensor, constants: &[f64]) -> usize {
        assert!(x.channels <= self.in_channels, "conv input channels");
        let nc = self.in_channels - x.channels;
        assert_eq!(constants.len(), x.batch * nc, "one constant per sample and channel");
        nc
    }

    /// Convolves `x`. Without bias this is the linear part only, which is
    /// also how tangents propagate.
    pub fn forward(&self, x: &Tensor, with_bias: bool) -> Tensor {
        assert_eq!(x.channels, self.in_channels, "conv input channels");
        self.forward_split(x, &[], with_bias)
    }

    /// Convolves an input whose first `x.channels` channels are given by `x`
    /// and whose remaining channels are constant over each sample's plane,
    /// with values `constants` (`[N, in_channels − x.channels]`). Equivalent
    /// to [`Conv2d::forward`] on the filled-in input, without materializing
    /// the constant planes.
    pub fn forward_split(&self, x: &Tensor, constants: &[f64], with_bias: bool) -> Tensor {
        let nc = self.constant_channels(x, constants);
        let (ho, wo) = self.output_size(x.height, x.width);
        let p = ho * wo;
        let batch = x.batch;
        let mut out = Tensor::zeros(self.out_channels, batch, ho, wo);
        let kk = self.patch_len();
        let kk1 = self.kernel * self.kernel;
        let kv = x.channels * kk1;
        if kv > 0 {
            let chunk = self.chunk(kv, p);
            let mut cols = vec![0.0; kv * chunk.min(batch) * p];
            let mut n0 = 0;
            while n0 < batch {
                let n1 = (n0 + chunk).min(batch);
                let ncols = (n1 - n0) * p;
                self.im2col(x, n0, n1, &mut cols);
                gemm(
                    self.out_channels,
                    kv,
                    ncols,
                    &self.weight,
                    (kk, 1),
                    &cols,
                    (ncols, 1),
                    0.0,
                    &mut out.data[n0 * p..],
                    (batch * p, 1),
                );
                n0 = n1;
            }
        }
        if nc > 0 {
            // a constant plane convolves to its value times the sum of the
            // taps that land inside the input
            let mask = self.tap_mask(x.height, x.width);
            let mut sums = vec![0.0; nc * p];
            for o in 0..self.out_channels {
                gemm(
                    nc,
                    kk1,
                    p,
                    &self.weight[o * kk + kv..],
                    (kk1, 1),
                    &mask,
                    (p, 1),
                    0.0,
                    &mut sums,
                    (p, 1),
                );
                gemm(
                    batch,
                    nc,
                    p,
                    constants,
                    (nc, 1),
                    &sums,
                    (p, 1),
                    1.0,
                    &mut out.data[o * batch * p..],
                    (p, 1),
                );
            }
        }
        if with_bias {
            for (oc, b) in self.bias.iter().enumerate() {
                for v in &mut out.data[oc * batch * p..(oc + 1) * batch * p] {
                    *v += b;
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients for upstream gradient `dy` at input
    /// `x`, and returns the input gradient when asked.
    pub fn backward(
        &self,
        x: &Tensor,
        dy: &Tensor,
        weight_grad: Option<&mut [f64]>,
        bias_grad: Option<&mut [f64]>,
        want_dx: bool,
    ) -> Option<Tensor> {
        assert_eq!(x.channels, self.in_channels, "conv input channels");
        self.backward_split(x, &[], dy, weight_grad, bias_grad, want_dx)
    }

    /// Backward pass of [`Conv2d::forward_split`]. The returned input
    /// gradient covers the channels of `x` only.
    pub fn backward_split(
        &self,
        x: &Tensor,
        constants: &[f64],
        dy: &Tensor,
        weight_grad: Option<&mut [f64]>,
        bias_grad: Option<&mut [f64]>,
        want_dx: bool,
    ) -> Option<Tensor> {
        let nc = self.constant_channels(x, constants);
        let (ho, wo) = self.output_size(x.height, x.width);
        let p = ho * wo;
        let batch = x.batch;
        assert_eq!((dy.channels, dy.batch, dy.plane()), (self.out_channels, batch, p), "conv dy shape");
        if let Some(bg) = bias_grad {
            for (oc, g) in bg.iter_mut().enumerate() {
                *g += dy.data[oc * batch * p..(oc + 1) * batch * p].iter().sum::<f64>();
            }
        }
        let kk = self.patch_len();
        let kk1 = self.kernel * self.kernel;
        let kv = x.channels * kk1;
        let mut dx = want_dx.then(|| Tensor::zeros_like(x));
        let mut weight_grad = weight_grad;
        if let (Some(wg), true) = (weight_grad.as_deref_mut(), nc > 0) {
            let mask = self.tap_mask(x.height, x.width);
            let mut reduced = vec![0.0; nc * p];
            for o in 0..self.out_channels {
                gemm(
                    nc,
                    batch,
                    p,
                    constants,
                    (1, nc),
                    &dy.data[o * batch * p..],
                    (p, 1),
                    0.0,
                    &mut reduced,
                    (p, 1),
                );
                gemm(
                    nc,
                    p,
                    kk1,
                    &reduced,
                    (p, 1),
                    &mask,
                    (1, p),
                    1.0,
                    &mut wg[o * kk + kv..],
                    (kk1, 1),
                );
            }
        }
        if kv == 0 || (weight_grad.is_none() && dx.is_none()) {
            return dx;
        }
        let chunk = self.chunk(kv, p);
        let mut cols = vec![0.0; kv * chunk.min(batch) * p];
        let mut n0 = 0;
        while n0 < batch {
            let n1 = (n0 + chunk).min(batch);
            let ncols = (n1 - n0) * p;
            let dy_chunk = &dy.data[n0 * p..];
            if let Some(wg) = weight_grad.as_deref_mut() {
                self.im2col(x, n0, n1, &mut cols);
                gemm(
                    self.out_channels,
                    ncols,
                    kv,
                    dy_chunk,
                    (batch * p, 1),
                    &cols,
                    (1, ncols),
                    1.0,
                    wg,
                    (kk, 1),
                );
            }
            if let Some(dx) = dx.as_mut() {
                gemm(
                    kv,
                    self.out_channels,
                    ncols,
                    &self.weight,
                    (1, kk),
                    dy_chunk,
                    (batch * p, 1),
                    0.0,
                    &mut cols,
                    (ncols, 1),
                );
                self.col2im(&cols[..kv * ncols], n0, n1, dx);
            }
            n0 = n1;
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution.
    fn naive(conv: &Conv2d, x: &Tensor) -> Tensor {
        let (ho, wo) = conv.output_size(x.height, x.width);
        let mut out = Tensor::zeros(conv.out_channels, x.batch, ho, wo);
        let k = conv.kernel;
        for oc in 0..conv.out_channels {
            for n in 0..x.batch {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = conv.bias[oc];
                        for ic in 0..conv.in_channels {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * conv.stride + ky) as isize - conv.padding as isize;
                                    let ix = (ox * conv.stride + kx) as isize - conv.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= x.height as isize || ix >= x.width as isize {
                                        continue;
                                    }
                                    let xv = x.data[((ic * x.batch + n) * x.height + iy as usize) * x.width + ix as usize];
                                    acc += conv.weight[oc * conv.in_channels * k * k + (ic * k + ky) * k + kx] * xv;
                                }
                            }
                        }
                        out.data[((oc * x.batch + n) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, n: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_data(c, n, h, w, (0..c * n * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn matches_naive_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, s, h, w) in [(3, 1, 8, 4), (5, 2, 16, 8), (5, 1, 6, 6), (3, 2, 7, 5), (5, 2, 3, 2)] {
            let conv = Conv2d::new(&mut rng, 3, 4, k, s);
            let x = random_tensor(&mut rng, 3, 5, h, w);
            let fast = conv.forward(&x, true);
            let slow = naive(&conv, &x);
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stride_two_halves_spatial_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conv = Conv2d::new(&mut rng, 1, 2, 5, 2);
        assert_eq!(conv.output_size(64, 32), (32, 16));
        assert_eq!(conv.output_size(8, 4), (4, 2));
    }

    #[test]
    fn backward_is_adjoint_and_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let conv = Conv2d::new(&mut rng, 2, 3, 5, 2);
        let x = random_tensor(&mut rng, 2, 3, 8, 6);
        let dy = random_tensor(&mut rng, 3, 3, 4, 3);
        let mut wg = vec![0.0; conv.weight.len()];
        let mut bg = vec![0.0; conv.bias.len()];
        let dx = conv.backward(&x, &dy, Some(&mut wg), Some(&mut bg), true).unwrap();

        // <A x, dy> == <x, A^T dy> for the linear part
        let lin = conv.forward(&x, false);
        let lhs: f64 = lin.data.iter().zip(&dy.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);

        let loss = |c: &Conv2d| -> f64 {
            c.forward(&x, true).data.iter().zip(&dy.data).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for i in (0..conv.weight.len()).step_by(7) {
            let mut plus = conv.clone();
            plus.weight[i] += h;
            let mut minus = conv.clone();
            minus.weight[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - wg[i]).abs() < 1e-6, "weight {i}: {fd} vs {}", wg[i]);
        }
        for i in 0..conv.bias.len() {
            let mut plus = conv.clone();
            plus.bias[i] += h;
            let mut minus = conv.clone();
            minus.bias[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - bg[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn chunking_does_not_change_results() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // a wide first layer forces several chunks over a 64×32 batch
        let conv = Conv2d::new(&mut rng, 21, 4, 5, 1);
        let x = random_tensor(&mut rng, 21, 3, 64, 32);
        assert!(conv.chunk(conv.patch_len(), 64 * 32) < 3);
        let fast = conv.forward(&x, true);
        let slow = naive(&conv, &x);
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!((a - b).abs() < 1e-11);
        }
        let dy = random_tensor(&mut rng, 4, 3, 64, 32);
        let dx = conv.backward(&x, &dy, None, None, true).unwrap();
        let lhs: f64 = conv.forward(&x, false).data.iter().zip(&dy.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-8);
    }

    #[test]
    fn constant_channels_match_materialized_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let conv = Conv2d::new(&mut rng, 4, 3, 5, 1);
        let (n, h, w) = (3, 9, 6);
        let x = random_tensor(&mut rng, 1, n, h, w);
        let constants: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut full = Tensor::zeros(4, n, h, w);
        full.data[..n * h * w].copy_from_slice(&x.data);
        for c in 0..3 {
            for s in 0..n {
                let start = ((1 + c) * n + s) * h * w;
                full.data[start..start + h * w].fill(constants[s * 3 + c]);
            }
        }
        let split = conv.forward_split(&x, &constants, true);
        let dense = conv.forward(&full, true);
        for (a, b) in split.data.iter().zip(&dense.data) {
            assert!((a - b).abs() < 1e-12);
        }

        let dy = random_tensor(&mut rng, 3, n, h, w);
        let (mut wg_split, mut wg_dense) = (vec![0.0; conv.weight.len()], vec![0.0; conv.weight.len()]);
        let dx_split = conv
            .backward_split(&x, &constants, &dy, Some(&mut wg_split), None, true)
            .unwrap();
        let dx_dense = conv.backward(&full, &dy, Some(&mut wg_dense), None, true).unwrap();
        for (a, b) in wg_split.iter().zip(&wg_dense) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(dx_split.channels, 1);
        for (a, b) in dx_split.data.iter().zip(&dx_dense.data[..n * h * w]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
