#![allow(dead_code)]

use qiup::detection::{Integrator, Port};
use qiup::optics::{OpticalSetup, SourceId};
use qiup::scene::{MaskContent, ObjectMask};

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Splits `[a, b]` at `cuts` and into pieces no longer than `max_len`.
fn segments(a: f64, b: f64, cuts: &[f64], max_len: f64) -> Vec<(f64, f64)> {
    let mut pts: Vec<f64> = cuts.iter().copied().filter(|&c| c > a && c < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let pieces = ((w[1] - w[0]) / max_len).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / pieces as f64;
        for k in 0..pieces {
            out.push((w[0] + k as f64 * h, w[0] + (k + 1) as f64 * h));
        }
    }
    out
}

/// Object-plane edge coordinates of a shapes mask along one axis.
fn edges(mask: &ObjectMask<f64>, axis: usize) -> Vec<f64> {
    let mut e = match axis {
        0 => vec![-mask.width / 2.0, mask.width / 2.0],
        _ => vec![-mask.height / 2.0, mask.height / 2.0],
    };
    if let MaskContent::Shapes { rects, .. } = &mask.content {
        for r in rects {
            if axis == 0 {
                e.extend([r.x0, r.x1]);
            } else {
                e.extend([r.y0, r.y1]);
            }
        }
    }
    e
}

/// Port integral at one pixel by tensor Gauss-Legendre quadrature over the
/// idler-momentum box `center ± half_width`, with panels split at the object
/// edges so that every panel integrates a smooth function.
pub fn dense_port(
    setup: &OpticalSetup<f64>,
    mask: &ObjectMask<f64>,
    ix: usize,
    iy: usize,
    half_width: f64,
    port: Port,
) -> f64 {
    let integ = Integrator::new(setup, mask).unwrap();
    let optics = integ.optics();
    let k_s1 = integ.signal_at(setup.detector.pixel_center(ix, iy));
    let b = optics.detector_per_slope[0];
    let s = k_s1.slopes();
    let k_s2 = optics.signal_at_detector([b * s[0], b * s[1]], SourceId::Second);
    let c = setup.source1.idler_center(&k_s1);
    let k = optics.idler_omega / qiup::scalar::SPEED_OF_LIGHT;
    let per = optics.object_per_slope;
    // Object coordinate x maps to slope x / per; slope t maps to q = k t / sqrt(1 + t²)
    // up to a second-order coupling between the axes.
    let to_q = |x: f64| {
        let t = x / per;
        k * t / (1.0 + t * t).sqrt()
    };
    let cuts_x: Vec<f64> = edges(mask, 0).into_iter().map(to_q).collect();
    let cuts_y: Vec<f64> = edges(mask, 1).into_iter().map(to_q).collect();
    let sigma = setup.source1.correlation_width();
    let gl = gauss_legendre(12);
    let sx = segments(c[0] - half_width, c[0] + half_width, &cuts_x, sigma / 2.0);
    let sy = segments(c[1] - half_width, c[1] + half_width, &cuts_y, sigma / 2.0);
    let mut total = 0.0;
    for &(y0, y1) in &sy {
        for &(yn, yw) in &gl {
            let qy = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * yn;
            let wy = 0.5 * (y1 - y0) * yw;
            for &(x0, x1) in &sx {
                for &(xn, xw) in &gl {
                    let qx = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * xn;
                    let wx = 0.5 * (x1 - x0) * xw;
                    total += wx * wy * integ.integrand(&k_s1, &k_s2, [qx, qy]).unwrap().port(port);
                }
            }
        }
    }
    total
}
