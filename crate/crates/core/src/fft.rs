use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Multidimensional complex FFT over a row-major periodic grid.
pub(crate) struct FftNd {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    scratch: Vec<Complex64>,
    line: Vec<Complex64>,
}

impl FftNd {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward: Vec<_> = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse: Vec<_> = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let scratch_len = forward
            .iter()
            .chain(&inverse)
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        FftNd {
            shape: shape.to_vec(),
            forward,
            inverse,
            scratch: vec![Complex64::default(); scratch_len],
            line: vec![Complex64::default(); shape.iter().copied().max().unwrap_or(0)],
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.process(data, true);
    }

    /// Unnormalized inverse transform.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.process(data, false);
    }

    fn process(&mut self, data: &mut [Complex64], forward: bool) {
        debug_assert_eq!(data.len(), self.len());
        let total = data.len();
        for axis in 0..self.shape.len() {
            let n = self.shape[axis];
            if n == 1 {
                continue;
            }
            let plan = if forward {
                &self.forward[axis]
            } else {
                &self.inverse[axis]
            };
            let stride: usize = self.shape[axis + 1..].iter().product();
            if stride == 1 {
                plan.process_with_scratch(data, &mut self.scratch);
                continue;
            }
            let line = &mut self.line[..n];
            for outer in 0..total / (n * stride) {
                let base = outer * n * stride;
                for inner in 0..stride {
                    for (k, v) in line.iter_mut().enumerate() {
                        *v = data[base + k * stride + inner];
                    }
                    plan.process_with_scratch(line, &mut self.scratch);
                    for (k, v) in line.iter().enumerate() {
                        data[base + k * stride + inner] = *v;
                    }
                }
            }
        }
    }
}

/// Per-axis wave numbers `k` in `0..n` for each linear index.
pub(crate) fn frequency_indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = shape.iter().product();
    let mut out = vec![vec![0; total]; shape.len()];
    let mut idx = vec![0usize; shape.len()];
    for lin in 0..total {
        for (a, v) in idx.iter().enumerate() {
            out[a][lin] = *v;
        }
        for a in (0..idx.len()).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}
