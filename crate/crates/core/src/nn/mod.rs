//! Small CPU neural-network kit: convolutions, dense layers, nearest
//! upsampling, pointwise activations and Adam.
//!
//! Activations are stored channel-major (`[C, N, H, W]`) so that a whole
//! batch of convolutions is a single matrix product per chunk. Layers expose
//! explicit forward and backward passes, plus the tangent (directional
//! derivative) forward pass that the gradient penalty needs.

mod activation;
mod adam;
mod conv;
mod dense;
mod tensor;
mod upsample;

pub use activation::Activation;
pub use adam::Adam;
pub use conv::Conv2d;
pub use dense::Dense;
pub use tensor::Tensor;
pub use upsample::{upsample2x, upsample2x_backward};

use rand::Rng;

/// Uniform initialization in ±1/√fan_in.
pub(crate) fn init_uniform<R: Rng>(rng: &mut R, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

/// `c[m×n] (+)= a[m×k] · b[k×n]` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        debug_assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
        debug_assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    }
    debug_assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the debug assertions above spell out the extents every caller
    // guarantees; matrixmultiply reads/writes only inside them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
