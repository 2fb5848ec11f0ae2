use rand::Rng;

use super::{gemm, init_uniform};

/// Fully connected layer over row-major `[N, inputs]` batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `[outputs, inputs]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new<R: Rng>(rng: &mut R, inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: init_uniform(rng, inputs * outputs, inputs),
            bias: init_uniform(rng, outputs, inputs),
        }
    }

    pub fn forward(&self, x: &[f64], batch: usize, with_bias: bool) -> Vec<f64> {
        assert_eq!(x.len(), batch * self.inputs, "dense input length");
        let mut out = vec![0.0; batch * self.outputs];
        gemm(
            batch,
            self.inputs,
            self.outputs,
            x,
            (self.inputs, 1),
            &self.weight,
            (1, self.inputs),
            0.0,
            &mut out,
            (self.outputs, 1),
        );
        if with_bias {
            for row in out.chunks_exact_mut(self.outputs) {
                for (v, b) in row.iter_mut().zip(&self.bias) {
                    *v += b;
                }
            }
        }
        out
    }

    pub fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        batch: usize,
        weight_grad: Option<&mut [f64]>,
        bias_grad: Option<&mut [f64]>,
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        assert_eq!(dy.len(), batch * self.outputs, "dense dy length");
        if let Some(wg) = weight_grad {
            gemm(
                self.outputs,
                batch,
                self.inputs,
                dy,
                (1, self.outputs),
                x,
                (self.inputs, 1),
                1.0,
                wg,
                (self.inputs, 1),
            );
        }
        if let Some(bg) = bias_grad {
            for row in dy.chunks_exact(self.outputs) {
                for (g, d) in bg.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        want_dx.then(|| {
            let mut dx = vec![0.0; batch * self.inputs];
            gemm(
                batch,
                self.outputs,
                self.inputs,
                dy,
                (self.outputs, 1),
                &self.weight,
                (self.inputs, 1),
                0.0,
                &mut dx,
                (self.inputs, 1),
            );
            dx
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn forward_and_backward_by_hand() {
        let d = Dense {
            inputs: 2,
            outputs: 3,
            weight: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            bias: vec![0.5, 0.0, -0.5],
        };
        let x = [1.0, -1.0, 2.0, 0.5];
        assert_eq!(d.forward(&x, 2, true), vec![-0.5, -1.0, -1.5, 3.5, 8.0, 12.5]);

        let dy = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let mut wg = vec![0.0; 6];
        let mut bg = vec![0.0; 3];
        let dx = d.backward(&x, &dy, 2, Some(&mut wg), Some(&mut bg), true).unwrap();
        assert_eq!(wg, vec![1.0, -1.0, 0.0, 0.0, 2.0, 0.5]);
        assert_eq!(bg, vec![1.0, 0.0, 1.0]);
        assert_eq!(dx, vec![1.0, 2.0, 5.0, 6.0]);
    }

    #[test]
    fn initialized_within_bound() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let d = Dense::new(&mut rng, 16, 4);
        assert!(d.weight.iter().all(|w| w.abs() <= 0.25));
    }
}
