use super::Tensor;

/// Nearest-neighbour 2× upsampling in both spatial dimensions.
pub fn upsample2x(x: &Tensor) -> Tensor {
    let (h, w) = (x.height, x.width);
    let mut out = Tensor::zeros(x.channels, x.batch, 2 * h, 2 * w);
    let planes = x.channels * x.batch;
    for plane in 0..planes {
        let src = &x.data[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out.data[plane * 4 * h * w..(plane + 1) * 4 * h * w];
        for y in 0..2 * h {
            for xx in 0..2 * w {
                dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
            }
        }
    }
    out
}

/// Adjoint of [`upsample2x`]: sums each 2×2 block.
pub fn upsample2x_backward(grad: &Tensor) -> Tensor {
    let (h, w) = (grad.height / 2, grad.width / 2);
    let mut out = Tensor::zeros(grad.channels, grad.batch, h, w);
    let planes = grad.channels * grad.batch;
    for plane in 0..planes {
        let src = &grad.data[plane * 4 * h * w..(plane + 1) * 4 * h * w];
        let dst = &mut out.data[plane * h * w..(plane + 1) * h * w];
        for y in 0..2 * h {
            for xx in 0..2 * w {
                dst[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
            }
        }
    }
    out
}
