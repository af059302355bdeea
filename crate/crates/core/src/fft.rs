//! FFT-backed 2D linear correlation with a fixed kernel.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;
use crate::scalar::Real;

/// Smallest 2^a 3^b 5^c 7^d not below `n`.
pub(crate) fn good_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

struct Plans<T: Real> {
    fwd_x: Arc<dyn Fft<T>>,
    inv_x: Arc<dyn Fft<T>>,
    fwd_y: Arc<dyn Fft<T>>,
    inv_y: Arc<dyn Fft<T>>,
}

fn fft_2d<T: Real>(buf: &mut [Complex<T>], nx: usize, ny: usize, row: &dyn Fft<T>, col: &dyn Fft<T>) {
    for r in buf.chunks_exact_mut(nx) {
        row.process(r);
    }
    let mut column = vec![Complex::new(T::zero(), T::zero()); ny];
    for ix in 0..nx {
        for iy in 0..ny {
            column[iy] = buf[iy * nx + ix];
        }
        col.process(&mut column);
        for iy in 0..ny {
            buf[iy * nx + ix] = column[iy];
        }
    }
}

/// Computes `out[p] = sum_d kernel[d] * input[p + d]` for every output pixel
/// `p` of a `(in_nx - k_nx + 1) x (in_ny - k_ny + 1)` valid region, where
/// `d` runs over the kernel with its center at offset zero.
///
/// The kernel transform is computed once and reused across calls with inputs
/// of the same shape.
pub struct Correlator<T: Real> {
    in_nx: usize,
    in_ny: usize,
    k_nx: usize,
    k_ny: usize,
    fx: usize,
    fy: usize,
    kernel_hat: Vec<Complex<T>>,
    plans: Plans<T>,
}

impl<T: Real> Correlator<T> {
    pub fn new(kernel: &Grid<Complex<T>>, in_nx: usize, in_ny: usize) -> Self {
        let (k_nx, k_ny) = kernel.dims();
        let fx = good_size(in_nx);
        let fy = good_size(in_ny);
        let mut planner = FftPlanner::new();
        let plans = Plans {
            fwd_x: planner.plan_fft_forward(fx),
            inv_x: planner.plan_fft_inverse(fx),
            fwd_y: planner.plan_fft_forward(fy),
            inv_y: planner.plan_fft_inverse(fy),
        };
        // Correlation = convolution with the flipped kernel. Place the flipped
        // kernel so that output index (ox, oy) reads input (ox + dx, oy + dy).
        let zero = Complex::new(T::zero(), T::zero());
        let mut kernel_hat = vec![zero; fx * fy];
        for ky in 0..k_ny {
            for kx in 0..k_nx {
                let px = (fx + k_nx - 1 - kx) % fx;
                let py = (fy + k_ny - 1 - ky) % fy;
                kernel_hat[py * fx + px] = kernel.get(kx, ky);
            }
        }
        fft_2d(&mut kernel_hat, fx, fy, plans.fwd_x.as_ref(), plans.fwd_y.as_ref());
        Self { in_nx, in_ny, k_nx, k_ny, fx, fy, kernel_hat, plans }
    }

    pub fn from_real(kernel: &Grid<T>, in_nx: usize, in_ny: usize) -> Self {
        Self::new(&kernel.map(|v| Complex::new(v, T::zero())), in_nx, in_ny)
    }

    pub fn output_dims(&self) -> (usize, usize) {
        (self.in_nx + 1 - self.k_nx, self.in_ny + 1 - self.k_ny)
    }

    pub fn correlate(&self, input: &Grid<Complex<T>>) -> Grid<Complex<T>> {
        assert_eq!(input.dims(), (self.in_nx, self.in_ny), "correlator input shape");
        let zero = Complex::new(T::zero(), T::zero());
        let mut buf = vec![zero; self.fx * self.fy];
        for iy in 0..self.in_ny {
            buf[iy * self.fx..iy * self.fx + self.in_nx].copy_from_slice(input.row(iy));
        }
        fft_2d(&mut buf, self.fx, self.fy, self.plans.fwd_x.as_ref(), self.plans.fwd_y.as_ref());
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b = *b * *k;
        }
        fft_2d(&mut buf, self.fx, self.fy, self.plans.inv_x.as_ref(), self.plans.inv_y.as_ref());
        let norm = T::one() / T::count(self.fx * self.fy);
        let (ox, oy) = self.output_dims();
        // Output (ox, oy) lands at circular index (ox + k_nx - 1, oy + k_ny - 1).
        Grid::from_fn(ox, oy, |x, y| buf[(y + self.k_ny - 1) * self.fx + x + self.k_nx - 1] * norm)
    }

    pub fn correlate_real(&self, input: &Grid<T>) -> Grid<T> {
        self.correlate(&input.map(|v| Complex::new(v, T::zero()))).map(|c| c.re)
    }
}

/// Direct-sum reference correlation; used for small problems and tests.
pub fn correlate_direct<T: Real>(kernel: &Grid<T>, input: &Grid<T>) -> Grid<T> {
    let (k_nx, k_ny) = kernel.dims();
    let (ox, oy) = (input.nx() + 1 - k_nx, input.ny() + 1 - k_ny);
    Grid::from_fn(ox, oy, |x, y| {
        let mut acc = T::zero();
        for ky in 0..k_ny {
            for kx in 0..k_nx {
                acc = acc + kernel.get(kx, ky) * input.get(x + kx, y + ky);
            }
        }
        acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn good_size_is_smooth() {
        assert_eq!(good_size(1000), 1000);
        assert_eq!(good_size(1031), 1050);
        assert_eq!(good_size(11), 12);
    }

    #[test]
    fn fft_correlation_matches_direct_sum() {
        let kernel = Grid::from_fn(5, 3, |x, y| 1.0 + x as f64 * 0.3 - y as f64 * 0.7);
        let input = Grid::from_fn(23, 17, |x, y| ((x * 7 + y * 13) % 11) as f64 - 4.0);
        let c = Correlator::from_real(&kernel, 23, 17);
        let fast = c.correlate_real(&input);
        let slow = correlate_direct(&kernel, &input);
        assert_eq!(fast.dims(), slow.dims());
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
