use qiup::config::preset;
use qiup::restore::{richardson_lucy, rmse};
use qiup::scene::bar_target;
use qiup::{Grid, Region};

/// Brute-force correlation of the object samples with the pixel kernel,
/// reflecting at the borders.
fn blur(obj: &Grid<f64>, k: &Grid<f64>) -> Grid<f64> {
    let (nx, ny) = obj.dims();
    let h = (k.nx() / 2) as i64;
    let refl = |i: i64, n: usize| -> usize {
        let n = n as i64;
        let j = i.rem_euclid(2 * n);
        (if j >= n { 2 * n - 1 - j } else { j }) as usize
    };
    Grid::from_fn(nx, ny, |x, y| {
        let mut acc = 0.0;
        for ky in 0..k.ny() {
            for kx in 0..k.nx() {
                let sx = refl(x as i64 + kx as i64 - h, nx);
                let sy = refl(y as i64 + ky as i64 - h, ny);
                acc += k.get(kx, ky) * obj.get(sx, sy);
            }
        }
        acc
    })
}

#[test]
fn deconvolution_reduces_error_on_a_blurred_bar_target() {
    let cfg = preset("setup1").unwrap();
    let fast = cfg.fast_path::<f64>().unwrap();
    let g = &fast.geometry;
    // Bar target sampled on the detector's object grid, 300 x 300 central pixels.
    let n = 300;
    let off = (g.nx / 2 - n / 2) as f64;
    let xs: Vec<f64> = (0..n).map(|i| g.object_per_detector * g.pitch * (i as f64 + off - (g.nx / 2) as f64)).collect();
    let h = (g.object_spacing() / 2.0).abs();
    let truth = bar_target::<f64>().pixel_averages(&xs, &xs, [h, h]).map(|z| z.re);
    let img = blur(&truth, &fast.kernel.weights);
    let out = richardson_lucy(&img, &fast.kernel.weights, 50).unwrap();
    let r = Region::new(20, 20, n - 40, n - 40);
    let before = rmse(&img, &truth, r).unwrap();
    let after = rmse(&out, &truth, r).unwrap();
    assert!(after < before, "{after} vs {before}");
}
