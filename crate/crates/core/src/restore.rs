//! Richardson-Lucy deconvolution and image-quality metrics.

use crate::error::{Error, Result};
use crate::fft::Correlator;
use crate::grid::{Grid, Region};
use crate::scalar::Real;

/// Guard added to the blurred estimate before dividing.
pub const RL_EPSILON: f64 = 1e-12;

/// Index into `[0, n)` with the edge sample repeated (symmetric reflection).
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

fn pad_reflect<T: Real>(img: &Grid<T>, px: usize, py: usize) -> Grid<T> {
    let (nx, ny) = img.dims();
    Grid::from_fn(nx + 2 * px, ny + 2 * py, |x, y| {
        img.get(reflect(x as i64 - px as i64, nx), reflect(y as i64 - py as i64, ny))
    })
}

/// Richardson-Lucy deconvolution with a kernel in correlation form
/// (`blur[p] = sum_d k[d] u[p + d]`, kernel centered). Starts from the image
/// itself and pads reflectively at the borders.
pub fn richardson_lucy<T: Real>(img: &Grid<T>, kernel: &Grid<T>, iterations: usize) -> Result<Grid<T>> {
    let (kx, ky) = kernel.dims();
    let (nx, ny) = img.dims();
    if kx > nx || ky > ny || kx % 2 == 0 || ky % 2 == 0 {
        return Err(Error::KernelMismatch { kernel_nx: kx, kernel_ny: ky, image_nx: nx, image_ny: ny });
    }
    if img.as_slice().iter().any(|&v| !(v >= T::zero())) {
        return Err(Error::Range("Richardson-Lucy needs a non-negative image".into()));
    }
    if iterations == 0 {
        return Ok(img.clone());
    }
    let (hx, hy) = (kx / 2, ky / 2);
    let flipped = Grid::from_fn(kx, ky, |x, y| kernel.get(kx - 1 - x, ky - 1 - y));
    let forward = Correlator::from_real(kernel, nx + 2 * hx, ny + 2 * hy);
    let adjoint = Correlator::from_real(&flipped, nx + 2 * hx, ny + 2 * hy);
    let eps = T::lit(RL_EPSILON);
    let mut u = img.clone();
    for _ in 0..iterations {
        let blurred = forward.correlate_real(&pad_reflect(&u, hx, hy));
        let ratio = img.zip_map(&blurred, |d, b| d / (b + eps))?;
        let correction = adjoint.correlate_real(&pad_reflect(&ratio, hx, hy));
        u = u.zip_map(&correction, |a, c| (a * c).max(T::zero()))?;
    }
    Ok(u)
}

/// Root mean square difference over a region.
pub fn rmse<T: Real>(a: &Grid<T>, b: &Grid<T>, region: Region) -> Result<T> {
    a.check_same_dims(b)?;
    region.check_within(a.nx(), a.ny())?;
    let mut acc = T::zero();
    for iy in region.y0..region.y0 + region.height {
        for ix in region.x0..region.x0 + region.width {
            let d = a.get(ix, iy) - b.get(ix, iy);
            acc = acc + d * d;
        }
    }
    Ok((acc / T::count(region.len())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::correlate_direct;
    use proptest::prelude::*;

    fn gaussian(n: usize, sigma: f64) -> Grid<f64> {
        let h = (n / 2) as f64;
        let mut g = Grid::from_fn(n, n, |x, y| {
            let (dx, dy) = (x as f64 - h, y as f64 - h);
            (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
        });
        let s = g.sum();
        g.scale(1.0 / s);
        g
    }

    fn blocks(nx: usize, ny: usize) -> Grid<f64> {
        Grid::from_fn(nx, ny, |x, y| if (x / 8 + y / 10) % 2 == 0 { 1.0 } else { 0.1 })
    }

    #[test]
    fn reflect_indices() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
    }

    #[test]
    fn zero_iterations_and_delta_kernel_are_identities() {
        let img = blocks(20, 16);
        let k = gaussian(5, 1.0);
        assert_eq!(richardson_lucy(&img, &k, 0).unwrap(), img);
        let mut delta = Grid::filled(3, 3, 0.0);
        delta.set(1, 1, 1.0);
        let out = richardson_lucy(&img, &delta, 7).unwrap();
        for (a, b) in out.as_slice().iter().zip(img.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_larger_than_image_is_rejected() {
        let err = richardson_lucy(&blocks(4, 4), &gaussian(5, 1.0), 1).unwrap_err();
        assert!(matches!(err, Error::KernelMismatch { .. }));
    }

    #[test]
    fn restores_a_blurred_object() {
        let truth = Grid::from_fn(64, 64, |x, y| {
            let bar = (20..26).contains(&x) || (40..44).contains(&y);
            if bar {
                0.0
            } else {
                1.0
            }
        });
        let k = gaussian(13, 2.0);
        let padded = pad_reflect(&truth, 6, 6);
        let blurred = correlate_direct(&k, &padded);
        let out = richardson_lucy(&blurred, &k, 50).unwrap();
        let r = Region::new(8, 8, 48, 48);
        let before = rmse(&blurred, &truth, r).unwrap();
        let after = rmse(&out, &truth, r).unwrap();
        assert!(after < before, "{after} vs {before}");
        // Flux is preserved on interior-supported content.
        let flux = |g: &Grid<f64>| g.crop(r).unwrap().sum();
        assert!((flux(&out) - flux(&blurred)).abs() < 0.01 * flux(&blurred));
    }

    #[test]
    fn rmse_examples() {
        let a = blocks(10, 10);
        let b = a.map(|v| v + 0.1);
        let r = Region::full(10, 10);
        assert_eq!(rmse(&a, &a, r).unwrap(), 0.0);
        assert!((rmse(&a, &b, r).unwrap() - 0.1).abs() < 1e-12);
        assert!(rmse(&a, &blocks(9, 10), r).is_err());
    }

    proptest! {
        #[test]
        fn output_stays_non_negative(seed in 0u64..1000, iters in 1usize..8) {
            let img = Grid::from_fn(24, 18, |x, y| (((x * 31 + y * 17) as u64 * (seed + 3)) % 97) as f64 / 97.0);
            let out = richardson_lucy(&img, &gaussian(7, 1.5), iters).unwrap();
            prop_assert!(out.as_slice().iter().all(|&v| v >= 0.0 && v.is_finite()));
        }
    }
}
