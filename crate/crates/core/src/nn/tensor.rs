/// Dense 4-d array in channel-major `[C, N, H, W]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, batch: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            batch,
            height,
            width,
            data: vec![0.0; channels * batch * height * width],
        }
    }

    pub fn from_data(channels: usize, batch: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * batch * height * width, "tensor data length");
        Tensor {
            channels,
            batch,
            height,
            width,
            data,
        }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Tensor::zeros(other.channels, other.batch, other.height, other.width)
    }

    /// Spatial positions per sample.
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Features of one sample, flattened `[C, H, W]`.
    pub fn sample_features(&self, n: usize) -> Vec<f64> {
        let p = self.plane();
        let mut out = Vec::with_capacity(self.channels * p);
        for c in 0..self.channels {
            let start = (c * self.batch + n) * p;
            out.extend_from_slice(&self.data[start..start + p]);
        }
        out
    }

    /// Row-major `[N, C·H·W]` view of the whole batch.
    pub fn to_rows(&self) -> Vec<f64> {
        (0..self.batch).flat_map(|n| self.sample_features(n)).collect()
    }

    /// Inverse of [`Tensor::to_rows`].
    pub fn from_rows(rows: &[f64], channels: usize, batch: usize, height: usize, width: usize) -> Self {
        let p = height * width;
        let features = channels * p;
        assert_eq!(rows.len(), batch * features, "row data length");
        let mut t = Tensor::zeros(channels, batch, height, width);
        for n in 0..batch {
            for c in 0..channels {
                let src = n * features + c * p;
                let dst = (c * batch + n) * p;
                t.data[dst..dst + p].copy_from_slice(&rows[src..src + p]);
            }
        }
        t
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let rows: Vec<f64> = (0..2 * 3 * 4 * 5).map(f64::from).collect();
        let t = Tensor::from_rows(&rows, 3, 2, 4, 5);
        assert_eq!(t.to_rows(), rows);
        // channel 1 of sample 0 comes after both samples of channel 0, and
        // holds row-major offset 20
        assert_eq!(t.data[2 * 20], 20.0);
    }
}
