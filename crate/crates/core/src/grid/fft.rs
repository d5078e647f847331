use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Complex 3-D FFT on an `n^3` periodic grid (`i`-fastest layout).
#[derive(Clone)]
pub struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    /// Inverse transform including the `1/n^3` normalisation.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
        let s = 1.0 / data.len() as f64;
        for z in data.iter_mut() {
            *z *= s;
        }
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        let mut buf = vec![Complex64::default(); data.len()];
        // y lines
        for k in 0..n {
            for i in 0..n {
                let line = &mut buf[(i + n * k) * n..(i + n * k + 1) * n];
                for (j, z) in line.iter_mut().enumerate() {
                    *z = data[i + n * (j + n * k)];
                }
            }
        }
        plan.process_with_scratch(&mut buf, &mut scratch);
        for k in 0..n {
            for i in 0..n {
                let line = &buf[(i + n * k) * n..(i + n * k + 1) * n];
                for (j, z) in line.iter().enumerate() {
                    data[i + n * (j + n * k)] = *z;
                }
            }
        }
        // z lines
        for j in 0..n {
            for i in 0..n {
                let line = &mut buf[(i + n * j) * n..(i + n * j + 1) * n];
                for (k, z) in line.iter_mut().enumerate() {
                    *z = data[i + n * (j + n * k)];
                }
            }
        }
        plan.process_with_scratch(&mut buf, &mut scratch);
        for j in 0..n {
            for i in 0..n {
                let line = &buf[(i + n * j) * n..(i + n * j + 1) * n];
                for (k, z) in line.iter().enumerate() {
                    data[i + n * (j + n * k)] = *z;
                }
            }
        }
    }
}
