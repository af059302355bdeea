//! Resolution limits from three-slit visibility ratios, pump-waist sweeps and
//! measurements on rendered images.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fastpath::FastPath;
use crate::grid::Grid;
use crate::grid::Region;
use crate::optics::OpticalSetup;
use crate::restore::richardson_lucy;
use crate::scalar::Real;
use crate::scene::{three_slit, BAR_SEPARATION, VERTICAL_BAR_BAND};

/// Half-width of the centroid window around each bar image (m).
const BAR_WINDOW: f64 = 300e-6;

/// Slit ratio at which three slits count as just resolved.
pub const RESOLUTION_THRESHOLD: f64 = 0.81;

/// Richardson-Lucy iterations used for deconvolved resolution limits.
pub const DECONVOLUTION_ITERATIONS: usize = 50;

/// Visibility ratio of a three-slit image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlitRatio<T> {
    /// Mean of the two minima over the central maximum.
    pub ratio: T,
    pub minima: [T; 2],
    pub maximum: T,
}

fn argmax<T: Real>(row: &[T], lo: usize, hi: usize) -> usize {
    (lo..=hi).fold(lo, |best, i| if row[i] > row[best] { i } else { best })
}

fn argmin<T: Real>(row: &[T], lo: usize, hi: usize) -> usize {
    (lo..=hi).fold(lo, |best, i| if row[i] < row[best] { i } else { best })
}

/// Locates the central maximum and the minima between the slits of a row
/// whose slit centers sit at fractional pixels `centers`.
pub fn slit_features<T: Real>(row: &[T], centers: [f64; 3], slit_px: f64) -> Result<SlitRatio<T>> {
    let n = row.len();
    let window = |c: f64| -> Result<(usize, usize)> {
        let lo = (c - slit_px / 2.0).round();
        let hi = (c + slit_px / 2.0).round();
        if lo < 0.0 || hi >= n as f64 {
            return Err(Error::FeatureNotFound("slits extend beyond the field of view".into()));
        }
        Ok((lo as usize, hi.max(lo) as usize))
    };
    let (c_lo, c_hi) = window(centers[1])?;
    let center = argmax(row, c_lo, c_hi);
    let maximum = row[center];
    let mut minima = [T::zero(); 2];
    for (k, outer_c) in [centers[0], centers[2]].into_iter().enumerate() {
        let (o_lo, o_hi) = window(outer_c)?;
        let outer = argmax(row, o_lo, o_hi);
        let (a, b) = if outer < center { (outer, center) } else { (center, outer) };
        if b < a + 2 {
            return Err(Error::FeatureNotFound("slit images overlap".into()));
        }
        let m = argmin(row, a + 1, b - 1);
        let floor = row[m];
        let distinct = |peak: T| floor < peak - T::lit(1e-9) * peak.abs().max(T::lit(1e-300));
        if !distinct(row[a]) || !distinct(row[b]) {
            return Err(Error::FeatureNotFound("no minimum between the slit images".into()));
        }
        minima[k] = floor;
    }
    if !(maximum > T::zero()) {
        return Err(Error::FeatureNotFound("central slit is dark".into()));
    }
    Ok(SlitRatio { ratio: (minima[0] + minima[1]) / (T::lit(2.0) * maximum), minima, maximum })
}

/// Three-slit ratio along the central detector row, optionally after
/// Richardson-Lucy deconvolution with `iterations` steps.
pub fn slit_ratio<T: Real>(fast: &FastPath<T>, d: T, iterations: Option<usize>) -> Result<SlitRatio<T>> {
    let g = &fast.geometry;
    let mask = three_slit(d)?;
    let iy = g.ny / 2;
    let mut row = fast.convolve_y_invariant(&mask, iy)?;
    if let Some(it) = iterations {
        let k = fast.kernel.marginal();
        let kernel = Grid::from_vec(k.len(), 1, k)?;
        let img = Grid::from_vec(row.len(), 1, row)?;
        row = richardson_lucy(&img, &kernel, it)?.into_vec();
    }
    // Detector position of an object point is x / c; pixel index is x / pitch + nx/2.
    let c = g.object_per_detector.as_f64();
    let pitch = g.pitch.as_f64();
    let d64 = d.as_f64();
    let to_px = |x_obj: f64| x_obj / c / pitch + (g.nx / 2) as f64;
    let centers = [to_px(-2.0 * d64), to_px(0.0), to_px(2.0 * d64)];
    let mut centers_sorted = centers;
    centers_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    slit_features(&row, centers_sorted, d64 / (c.abs() * pitch))
}

/// One evaluation of the slit ratio during a resolution search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSample<T> {
    pub d: T,
    /// `None` when the slits were not resolved at all.
    pub ratio: Option<SlitRatio<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionResult<T> {
    pub d_limit: T,
    pub ratio_at_limit: T,
    pub trace: Vec<RatioSample<T>>,
    pub waist: T,
    pub deconvolved: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionOptions {
    pub threshold: f64,
    /// Search interval as multiples of the kernel's object-plane width.
    pub bracket_widths: (f64, f64),
    pub bracket_points: usize,
    pub ratio_tolerance: f64,
    /// Smallest bracket (m) before bisection stops.
    pub min_bracket: f64,
    pub deconvolution: Option<usize>,
}

impl Default for ResolutionOptions {
    fn default() -> Self {
        Self {
            threshold: RESOLUTION_THRESHOLD,
            bracket_widths: (0.5, 5.0),
            bracket_points: 19,
            ratio_tolerance: 1e-3,
            min_bracket: 0.1e-6,
            deconvolution: None,
        }
    }
}

/// RMS width of the kernel in the object plane along x (m).
pub fn kernel_object_width<T: Real>(fast: &FastPath<T>) -> T {
    let k = fast.kernel.marginal();
    let h = fast.kernel.half as f64;
    let var: f64 = k.iter().enumerate().map(|(i, w)| w.as_f64() * (i as f64 - h).powi(2)).sum();
    T::lit(var.sqrt() * fast.geometry.object_spacing().as_f64().abs())
}

/// Smallest slit width `d` with `R(d) <= threshold`, by bracketing on a
/// geometric grid and refining the bracket.
pub fn resolution_limit<T: Real>(
    fast: &FastPath<T>,
    waist: T,
    options: &ResolutionOptions,
) -> Result<ResolutionResult<T>> {
    let thr = T::lit(options.threshold);
    let sigma = kernel_object_width(fast).as_f64();
    let (d_min, d_max) = (options.bracket_widths.0 * sigma, options.bracket_widths.1 * sigma);
    let mut trace = Vec::new();
    let eval = |d: f64, trace: &mut Vec<RatioSample<T>>| -> Result<RatioSample<T>> {
        let d = T::lit(d);
        let ratio = match slit_ratio(fast, d, options.deconvolution) {
            Ok(r) => Some(r),
            Err(Error::FeatureNotFound(_)) => None,
            Err(e) => return Err(e),
        };
        let s = RatioSample { d, ratio };
        trace.push(s);
        Ok(s)
    };
    // Unresolved counts as above the threshold.
    let above = |s: &RatioSample<T>| s.ratio.is_none_or(|r| r.ratio > thr);
    let n = options.bracket_points.max(2);
    let mut bracket = None;
    let mut prev = eval(d_min, &mut trace)?;
    for i in 1..n {
        let d = d_min * (d_max / d_min).powf(i as f64 / (n - 1) as f64);
        let s = eval(d, &mut trace)?;
        if above(&prev) && !above(&s) {
            bracket = Some((prev.d.as_f64(), d, s));
            break;
        }
        prev = s;
    }
    let Some((mut lo, mut hi, end)) = bracket else {
        return Err(Error::NoBracket { threshold: options.threshold, d_min_um: d_min * 1e6, d_max_um: d_max * 1e6 });
    };
    let mut best = (hi, end);
    // Bracket ends as (d, R - threshold); an unresolved end has no value.
    let excess = |s: &RatioSample<T>| s.ratio.map(|r| (r.ratio - thr).as_f64());
    let mut f_lo = excess(&prev);
    let mut f_hi = excess(&end);
    let mut last_side = 0i8;
    loop {
        if let Some(r) = best.1.ratio {
            if (r.ratio - thr).abs().as_f64() < options.ratio_tolerance {
                break;
            }
        }
        if hi - lo < options.min_bracket {
            break;
        }
        // Illinois false position; midpoint when an end is unresolved.
        let mid = match (f_lo, f_hi) {
            (Some(a), Some(b)) if a > b => {
                let x = hi - b * (hi - lo) / (b - a);
                if x > lo && x < hi {
                    x
                } else {
                    0.5 * (lo + hi)
                }
            }
            _ => 0.5 * (lo + hi),
        };
        let s = eval(mid, &mut trace)?;
        let f = excess(&s);
        if above(&s) {
            lo = mid;
            f_lo = f;
            if last_side == 1 {
                f_hi = f_hi.map(|v| 0.5 * v);
            }
            last_side = 1;
        } else {
            hi = mid;
            f_hi = f;
            if last_side == -1 {
                f_lo = f_lo.map(|v| 0.5 * v);
            }
            last_side = -1;
        }
        if let Some(r) = s.ratio {
            let closer = best.1.ratio.is_none_or(|b| (r.ratio - thr).abs() < (b.ratio - thr).abs());
            if closer {
                best = (mid, s);
            }
        }
    }
    Ok(ResolutionResult {
        d_limit: T::lit(best.0),
        ratio_at_limit: best.1.ratio.map_or(T::nan(), |r| r.ratio),
        trace,
        waist,
        deconvolved: options.deconvolution.is_some(),
        iterations: options.deconvolution.unwrap_or(0),
    })
}

/// Resolution limit for each waist; `build` returns the fast path of the
/// setup at that waist. Points are independent and returned in input order.
pub fn waist_sweep<T, F>(waists: &[T], options: &ResolutionOptions, build: F) -> Vec<Result<ResolutionResult<T>>>
where
    T: Real,
    F: Fn(T) -> Result<FastPath<T>> + Sync,
{
    waists.par_iter().map(|&w| resolution_limit(&build(w)?, w, options)).collect()
}

/// Trace of one resolution search as CSV: `d_um,R,min_left,min_right,max`.
pub fn trace_csv<T: Real>(result: &ResolutionResult<T>) -> String {
    let mut s = String::from("d_um,R,min_left,min_right,max\n");
    for p in &result.trace {
        let d = p.d.as_f64() * 1e6;
        match p.ratio {
            Some(r) => {
                let _ = writeln!(
                    s,
                    "{d},{},{},{},{}",
                    r.ratio.as_f64(),
                    r.minima[0].as_f64(),
                    r.minima[1].as_f64(),
                    r.maximum.as_f64()
                );
            }
            None => {
                let _ = writeln!(s, "{d},,,,");
            }
        }
    }
    s
}

/// Sweep summary as CSV with columns `waist_um,d_limit_um,deconvolved,R_trace_file`.
/// Failed points have an empty `d_limit_um`.
/// Name of the trace file written for one waist of a sweep.
pub fn sweep_trace_name(stem: &str, waist: f64, deconvolved: bool) -> String {
    format!("{stem}_trace_w{}um{}.csv", rounded_um(waist), if deconvolved { "_rl" } else { "" })
}

fn rounded_um(m: f64) -> f64 {
    (m * 1e12).round() / 1e6
}

/// Sweep curve as CSV: `waist_um,d_limit_um,deconvolved,R_trace_file`.
/// Failed waists keep their row with empty limit and trace fields.
pub fn sweep_csv<T: Real>(stem: &str, results: &[(T, Result<ResolutionResult<T>>)], deconvolved: bool) -> String {
    let mut s = String::from("waist_um,d_limit_um,deconvolved,R_trace_file\n");
    for (w, r) in results {
        let w_um = rounded_um(w.as_f64());
        match r {
            Ok(res) => {
                let file = sweep_trace_name(stem, w.as_f64(), deconvolved);
                let _ = writeln!(s, "{w_um},{},{deconvolved},{file}", res.d_limit.as_f64() * 1e6);
            }
            Err(_) => {
                let _ = writeln!(s, "{w_um},,{deconvolved},");
            }
        }
    }
    s
}

/// Writes `<stem>.csv` and one trace file per successful waist into `dir`.
pub fn write_sweep_csv<T: Real>(
    dir: &Path,
    stem: &str,
    results: &[(T, Result<ResolutionResult<T>>)],
    deconvolved: bool,
) -> Result<String> {
    for (w, r) in results {
        if let Ok(res) = r {
            std::fs::write(dir.join(sweep_trace_name(stem, w.as_f64(), deconvolved)), trace_csv(res))?;
        }
    }
    let s = sweep_csv(stem, results, deconvolved);
    std::fs::write(dir.join(format!("{stem}.csv")), &s)?;
    Ok(s)
}

/// Period of the dominant sinusoid in a sampled profile, in samples.
///
/// Fits `a cos(2π x / p) + b sin(2π x / p) + c` by least squares for each
/// trial period and keeps the best, refined by golden-section search.
pub fn stripe_period<T: Real>(profile: &[T], min_period: f64, max_period: f64) -> Result<f64> {
    let y: Vec<f64> = profile.iter().map(|v| v.as_f64()).collect();
    let n = y.len();
    if n < 4 || !(min_period > 0.0 && max_period > min_period) {
        return Err(Error::Range("stripe fit needs at least 4 samples and a valid period range".into()));
    }
    let residual = |period: f64| -> f64 {
        let w = 2.0 * std::f64::consts::PI / period;
        // Normal equations of the 3-parameter linear fit.
        let mut m = [[0.0f64; 3]; 3];
        let mut r = [0.0f64; 3];
        for (i, &v) in y.iter().enumerate() {
            let b = [(w * i as f64).cos(), (w * i as f64).sin(), 1.0];
            for a in 0..3 {
                r[a] += b[a] * v;
                for c in 0..3 {
                    m[a][c] += b[a] * b[c];
                }
            }
        }
        let coef = solve3(m, r);
        y.iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = coef[0] * (w * i as f64).cos() + coef[1] * (w * i as f64).sin() + coef[2];
                (v - f).powi(2)
            })
            .sum()
    };
    let steps = 2000;
    let ratio = max_period / min_period;
    let trial = |k: usize| min_period * ratio.powf(k as f64 / steps as f64);
    let best = (0..=steps)
        .map(|k| (k, residual(trial(k))))
        .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite residual"))
        .map(|(k, _)| k)
        .expect("non-empty scan");
    let (mut a, mut b) = (trial(best.saturating_sub(1)), trial((best + 1).min(steps)));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if residual(x1) < residual(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    Ok(0.5 * (a + b))
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv =
            (col..3).max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).expect("finite")).expect("rows");
        m.swap(col, piv);
        r.swap(col, piv);
        if m[col][col] == 0.0 {
            continue;
        }
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for c in col..3 {
                m[row][c] -= f * m[col][c];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|c| m[row][c] * x[c]).sum();
        x[row] = if m[row][row] == 0.0 { 0.0 } else { (r[row] - s) / m[row][row] };
    }
    x
}

/// Detector rows imaging the band of the bar target that only the vertical
/// bars cross, over the full detector width.
pub fn magnification_band<T: Real>(setup: &OpticalSetup<T>) -> Region {
    let m = setup.magnification().as_f64();
    let det = &setup.detector;
    let pitch = det.pitch.as_f64();
    let row = |y: f64| ((det.ny / 2) as f64 + y * m / pitch).round().clamp(0.0, det.ny as f64) as usize;
    let (y0, y1) = (row(VERTICAL_BAR_BAND.0), row(VERTICAL_BAR_BAND.1));
    Region::new(0, y0, det.nx, y1.saturating_sub(y0).max(1))
}

/// Magnification measured from a visibility map of the bar target covering
/// `region`: separation of the two vertical-bar images over their object
/// distance. The bar images are located by dark-feature centroids of the
/// column means of `1 - V`.
pub fn measure_magnification<T: Real>(vis: &Grid<T>, region: Region, pitch: T, center_col: usize) -> Result<f64> {
    let (nx, ny) = vis.dims();
    let darkness: Vec<f64> =
        (0..nx).map(|x| (0..ny).map(|y| 1.0 - vis.get(x, y).as_f64()).sum::<f64>() / ny as f64).collect();
    let split = center_col
        .checked_sub(region.x0)
        .filter(|&s| s < nx)
        .ok_or_else(|| Error::FeatureNotFound("detector center outside the region".into()))?;
    let half_window = ((BAR_WINDOW / pitch.as_f64()).round() as usize).max(1);
    let sep = dip_separation(&darkness, split, half_window)?;
    Ok(sep * pitch.as_f64() / BAR_SEPARATION)
}

/// Pixels of the beam spot: `Γ⁺ + Γ⁻` at least `fraction` of its maximum.
pub fn spot_mask<T: Real>(plus: &Grid<T>, minus: &Grid<T>, fraction: f64) -> Result<Grid<bool>> {
    let sum = plus.zip_map(minus, |a, b| a + b)?;
    let peak = sum.as_slice().iter().fold(T::zero(), |a, &b| a.max(b));
    Ok(sum.map(|v| peak > T::zero() && v >= peak * T::lit(fraction)))
}

/// Centroid (in samples) of `weights` clipped at zero over `[lo, hi]`.
pub fn centroid<T: Real>(weights: &[T], lo: usize, hi: usize) -> Option<f64> {
    let (mut m0, mut m1) = (0.0, 0.0);
    for (i, w) in weights.iter().enumerate().take(hi + 1).skip(lo) {
        let w = w.as_f64().max(0.0);
        m0 += w;
        m1 += w * i as f64;
    }
    (m0 > 0.0).then(|| m1 / m0)
}

/// Distance in samples between the two dark features of a profile of
/// `1 - V`: the strongest dip on either side of `split`, each located by a
/// centroid over `±half_window` samples around its deepest point.
pub fn dip_separation<T: Real>(darkness: &[T], split: usize, half_window: usize) -> Result<f64> {
    let n = darkness.len();
    if split == 0 || split >= n - 1 {
        return Err(Error::FeatureNotFound("split outside the profile".into()));
    }
    let left = argmax(darkness, 0, split - 1);
    let right = argmax(darkness, split, n - 1);
    let locate = |peak: usize| -> Result<f64> {
        if peak < half_window || peak + half_window >= n {
            return Err(Error::FeatureNotFound("dark feature too close to the profile edge".into()));
        }
        centroid(darkness, peak - half_window, peak + half_window)
            .ok_or_else(|| Error::FeatureNotFound("no dark feature".into()))
    };
    Ok(locate(right)? - locate(left)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stripe_period_of_a_sampled_cosine() {
        let p = 81.3;
        let y: Vec<f64> = (0..500)
            .map(|i| {
                0.3 + 0.4
                    * (2.0 * std::f64::consts::PI * i as f64 / p + 0.7).cos()
                    * (-(i as f64 - 250.0).powi(2) / 1e5).exp()
            })
            .collect();
        let fit = stripe_period(&y, 20.0, 300.0).unwrap();
        assert!((fit - p).abs() < 0.5, "{fit}");
    }

    #[test]
    fn features_of_a_synthetic_profile() {
        let row: Vec<f64> = (0..101).map(|i| (i as f64 * 2.0 * std::f64::consts::PI / 20.0).cos() + 1.0).collect();
        let r = slit_features(&row, [20.0, 40.0, 60.0], 10.0).unwrap();
        // Maxima 2 at multiples of 20, minima 0 between.
        assert!((r.maximum - 2.0).abs() < 1e-12);
        assert!(r.ratio.abs() < 1e-12);
        let flat = vec![1.0; 101];
        assert!(matches!(slit_features(&flat, [30.0, 50.0, 70.0], 10.0), Err(Error::FeatureNotFound(_))));
        assert!(matches!(slit_features(&row, [-5.0, 50.0, 105.0], 10.0), Err(Error::FeatureNotFound(_))));
    }

    #[test]
    fn centroid_of_symmetric_dips() {
        let mut d = vec![0.0; 100];
        for (i, v) in d.iter_mut().enumerate() {
            *v = (-((i as f64 - 20.25).powi(2)) / 8.0).exp() + (-((i as f64 - 77.5).powi(2)) / 8.0).exp();
        }
        let s = dip_separation(&d, 50, 15).unwrap();
        assert!((s - 57.25).abs() < 1e-3, "{s}");
    }
}
