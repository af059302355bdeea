//! Convolution approximation of the pointwise visibility and its shift-variant
//! extension for misaligned setups.
//!
//! Detector pixel `p` sees object point `c ρ_p`, where `c` is the inverse
//! lateral magnification including its sign. The object is therefore sampled
//! on the detector grid scaled by `c`, each sample averaged over its pixel's
//! footprint, and the kernel is resampled onto the same grid. The coordinate
//! flip, if any, lives in `c` and never in the kernel.

use num_complex::Complex;
use rayon::prelude::*;

use crate::detection::VisibilityMap;
use crate::error::{Error, Result};
use crate::fft::Correlator;
use crate::grid::{Grid, Region};
use crate::optics::{LinearOptics, OpticalSetup, SourceId};
use crate::scalar::Real;
use crate::scene::ObjectMask;
use crate::source::{KernelGrid, PhotonMomentum};

/// Relative tolerance for recognizing ± identity momentum maps.
const MAP_TOLERANCE: f64 = 1e-9;

/// Geometry shared by all fast-path evaluations of a setup.
#[derive(Debug, Clone, PartialEq)]
pub struct FastGeometry<T> {
    pub optics: LinearOptics<T>,
    pub pitch: T,
    pub nx: usize,
    pub ny: usize,
    /// Object position per detector position.
    pub object_per_detector: T,
    /// Visibility of a fully transmitting object in the aligned setup:
    /// idler transmittance times the signal balance factor.
    pub contrast: T,
}

impl<T: Real> FastGeometry<T> {
    pub fn new(setup: &OpticalSetup<T>) -> Result<Self> {
        let optics = setup.linearize()?;
        let [b1, b2] = optics.detector_per_slope;
        let signal_ratio = b1 / b2;
        let idler_ratio = optics.idler_slope_at_source2;
        let near = |a: T, b: T| (a - b).abs() <= T::lit(MAP_TOLERANCE) * (a.abs() + b.abs());
        if !near(signal_ratio.abs(), T::one()) {
            return Err(Error::UnsupportedMisalignment(format!(
                "signal arms map momenta with ratio {signal_ratio}; the two images differ in magnification"
            )));
        }
        if !near(idler_ratio, signal_ratio) {
            return Err(Error::UnsupportedMisalignment(format!(
                "idler relay maps momenta with ratio {idler_ratio}, signal arms with {signal_ratio}"
            )));
        }
        let ks_over_ki = optics.signal_omega / optics.idler_omega;
        let object_per_detector = -optics.object_per_slope * ks_over_ki / b1;
        let [t1, t2] = [setup.arms.signal1.transmittance, setup.arms.signal2.transmittance];
        let balance = T::lit(2.0) * t1 * t2 / (t1 * t1 + t2 * t2);
        Ok(Self {
            optics,
            pitch: setup.detector.pitch,
            nx: setup.detector.nx,
            ny: setup.detector.ny,
            object_per_detector,
            contrast: setup.idler_transmittance() * balance,
        })
    }

    /// Detector-plane coordinate of pixel index `i` (possibly outside the
    /// detector) along an axis with `n` pixels.
    fn detector_coord(&self, i: i64, n: usize) -> T {
        T::lit((i - (n / 2) as i64) as f64) * self.pitch
    }

    /// Spacing of the object grid seen by adjacent pixels (signed).
    pub fn object_spacing(&self) -> T {
        self.object_per_detector * self.pitch
    }

    /// Transverse idler momentum that images onto object position `x`.
    fn idler_momentum(&self, x: T) -> T {
        x * self.optics.idler_omega / (T::lit(crate::scalar::SPEED_OF_LIGHT) * self.optics.object_per_slope)
    }
}

/// Kernel resampled onto the object grid of the detector pixels and
/// normalized to unit sum. Entry `(m + half, n + half)` weights the object
/// sample `m` columns and `n` rows away from the pixel's own.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelKernel<T> {
    pub weights: Grid<T>,
    pub half: usize,
}

impl<T: Real> PixelKernel<T> {
    /// Sum over rows: the kernel acting on objects that do not vary along y.
    pub fn marginal(&self) -> Vec<T> {
        let (nx, ny) = self.weights.dims();
        (0..nx).map(|ix| (0..ny).map(|iy| self.weights.get(ix, iy)).sum()).collect()
    }

    pub fn size(&self) -> usize {
        2 * self.half + 1
    }
}

pub fn pixel_kernel<T: Real>(kernel: &KernelGrid<T>, geometry: &FastGeometry<T>) -> Result<PixelKernel<T>> {
    // Object-grid step expressed as a step of the kernel momentum.
    let dq = (geometry.idler_momentum(geometry.object_spacing())).abs();
    let half = (kernel.extent / dq).floor().to_usize().unwrap_or(0);
    if half == 0 {
        return Err(Error::Range("kernel is narrower than one detector pixel".into()));
    }
    let n = 2 * half + 1;
    let mut weights = Grid::from_fn(n, n, |ix, iy| {
        let m = T::lit(ix as f64 - half as f64);
        let l = T::lit(iy as f64 - half as f64);
        kernel.value_at([m * dq, l * dq])
    });
    let total = weights.sum();
    if !(total > T::zero()) {
        return Err(Error::Range("resampled kernel is empty".into()));
    }
    weights.scale(T::one() / total);
    Ok(PixelKernel { weights, half })
}

/// Fast-path engine for one setup and kernel.
#[derive(Debug, Clone)]
pub struct FastPath<T: Real> {
    pub geometry: FastGeometry<T>,
    pub kernel: PixelKernel<T>,
}

/// Object samples averaged over the footprints of detector pixels, for the
/// region grown by `margin` pixels on every side.
fn object_samples<T: Real>(
    geo: &FastGeometry<T>,
    mask: &ObjectMask<T>,
    region: Region,
    margin: usize,
) -> Grid<Complex<T>> {
    let c = geo.object_per_detector;
    let axis = |start: usize, len: usize, n: usize| -> Vec<T> {
        (0..len + 2 * margin).map(|j| c * geo.detector_coord(start as i64 + j as i64 - margin as i64, n)).collect()
    };
    let xs = axis(region.x0, region.width, geo.nx);
    let ys = axis(region.y0, region.height, geo.ny);
    let h = (geo.object_spacing() / T::lit(2.0)).abs();
    mask.pixel_averages(&xs, &ys, [h, h])
}

impl<T: Real> FastPath<T> {
    pub fn new(setup: &OpticalSetup<T>, kernel: &KernelGrid<T>) -> Result<Self> {
        let geometry = FastGeometry::new(setup)?;
        let kernel = pixel_kernel(kernel, &geometry)?;
        Ok(Self { geometry, kernel })
    }

    fn region(&self, region: Option<Region>) -> Result<Region> {
        let r = region.unwrap_or(Region::full(self.geometry.nx, self.geometry.ny));
        r.check_within(self.geometry.nx, self.geometry.ny)?;
        Ok(r)
    }

    /// Object transmittance averaged over each pixel's footprint: the ideal
    /// visibility map of a perfect imager.
    pub fn object_image(&self, mask: &ObjectMask<T>, region: Option<Region>) -> Result<Grid<T>> {
        let r = self.region(region)?;
        Ok(object_samples(&self.geometry, mask, r, 0).map(|z| z.norm()))
    }

    /// Visibility of a phase-free object in the aligned setup.
    pub fn convolve(&self, mask: &ObjectMask<T>, region: Option<Region>) -> Result<VisibilityMap<T>> {
        if mask.has_phase() {
            return Err(Error::PhaseObject);
        }
        if !self.geometry.optics.is_aligned() {
            return Err(Error::UnsupportedMisalignment(
                "lens shifts make the kernel shift-variant; use the shift-variant convolution".into(),
            ));
        }
        let r = self.region(region)?;
        let m = self.kernel.half;
        let obj = object_samples(&self.geometry, mask, r, m).map(|z| z.re);
        let corr = Correlator::from_real(&self.kernel.weights, obj.nx(), obj.ny());
        let scale = self.geometry.contrast * self.geometry.optics.phase_offset.cos();
        let mut v = corr.correlate_real(&obj);
        v.scale(scale);
        Ok(VisibilityMap::from_values(v))
    }

    /// Visibility along detector row `iy` of an object that does not vary
    /// with y over the kernel support, using the marginal kernel.
    pub fn convolve_y_invariant(&self, mask: &ObjectMask<T>, iy: usize) -> Result<Vec<T>> {
        if mask.has_phase() {
            return Err(Error::PhaseObject);
        }
        if !self.geometry.optics.is_aligned() {
            return Err(Error::UnsupportedMisalignment(
                "lens shifts make the kernel shift-variant; use the shift-variant convolution".into(),
            ));
        }
        let r = self.region(Some(Region::new(0, iy, self.geometry.nx, 1)))?;
        let m = self.kernel.half;
        let obj = object_samples(&self.geometry, mask, Region::new(r.x0, r.y0, r.width, 1), m);
        let row: Vec<T> = obj.row(m).iter().map(|z| z.re).collect();
        let k = self.kernel.marginal();
        let scale = self.geometry.contrast * self.geometry.optics.phase_offset.cos();
        Ok(correlate_1d(&k, &row).into_iter().map(|v| v * scale).collect())
    }

    /// System phase of the pair (detector position, object position).
    fn system_phase(&self, det: [T; 2], obj: [T; 2]) -> T {
        let o = &self.geometry.optics;
        let k_s1 = o.signal_at_detector(det, SourceId::First);
        let k_s2 = o.signal_at_detector(det, SourceId::Second);
        let s = [obj[0] / o.object_per_slope, obj[1] / o.object_per_slope];
        let k_i1 = PhotonMomentum::from_slopes(s[0], s[1], o.idler_omega);
        o.phase(&k_s1, &k_s2, &k_i1)
    }

    /// Kernel of detector pixel `(ix, iy)`: base weights times the cosine of
    /// the system phase of every contributing object sample.
    pub fn kernel_at(&self, ix: usize, iy: usize) -> Grid<T> {
        let g = &self.geometry;
        let det = [g.detector_coord(ix as i64, g.nx), g.detector_coord(iy as i64, g.ny)];
        let h = self.kernel.half as i64;
        Grid::from_fn(self.kernel.size(), self.kernel.size(), |kx, ky| {
            let ox = g.object_per_detector * g.detector_coord(ix as i64 + kx as i64 - h, g.nx);
            let oy = g.object_per_detector * g.detector_coord(iy as i64 + ky as i64 - h, g.ny);
            self.kernel.weights.get(kx, ky) * self.system_phase(det, [ox, oy]).cos()
        })
    }

    /// Shift-variant visibility by direct summation of every pixel's kernel.
    /// Works for any phase screen and any object phase.
    pub fn shift_variant_direct(&self, mask: &ObjectMask<T>, region: Option<Region>) -> Result<VisibilityMap<T>> {
        let r = self.region(region)?;
        let g = &self.geometry;
        let m = self.kernel.half;
        let obj = object_samples(g, mask, r, m);
        let n = self.kernel.size();
        let values: Vec<T> = (0..r.len())
            .into_par_iter()
            .map(|i| {
                let (px, py) = (i % r.width, i / r.width);
                let (ix, iy) = (r.x0 + px, r.y0 + py);
                let det = [g.detector_coord(ix as i64, g.nx), g.detector_coord(iy as i64, g.ny)];
                let mut acc = T::zero();
                for ky in 0..n {
                    let oy = g.object_per_detector * g.detector_coord(iy as i64 + ky as i64 - m as i64, g.ny);
                    for kx in 0..n {
                        let w = self.kernel.weights.get(kx, ky);
                        let u = obj.get(px + kx, py + ky);
                        if w == T::zero() || u == Complex::new(T::zero(), T::zero()) {
                            continue;
                        }
                        let ox = g.object_per_detector * g.detector_coord(ix as i64 + kx as i64 - m as i64, g.nx);
                        let phase = self.system_phase(det, [ox, oy]);
                        acc = acc + w * (u * Complex::from_polar(T::one(), phase)).re;
                    }
                }
                acc * g.contrast
            })
            .collect();
        Ok(VisibilityMap::from_values(Grid::from_vec(r.width, r.height, values)?))
    }

    /// Shift-variant visibility with the phase split into a signal part, an
    /// idler part linear in the object position and a constant, evaluated as
    /// one complex correlation.
    pub fn shift_variant(&self, mask: &ObjectMask<T>, region: Option<Region>) -> Result<VisibilityMap<T>> {
        let r = self.region(region)?;
        let g = &self.geometry;
        let o = &g.optics;
        let m = self.kernel.half;
        let c = T::lit(crate::scalar::SPEED_OF_LIGHT);
        // Idler screens: excess path (2 b θ·s - |s|²) / (2f) with θ = x / B.
        let mut gradient = [T::zero(); 2];
        let mut constant = o.phase_offset;
        let k_i = o.idler_omega / c;
        for sc in &o.idler_screens {
            for a in 0..2 {
                gradient[a] =
                    gradient[a] + k_i * sc.position_per_slope * sc.shift[a] / (sc.focal_length * o.object_per_slope);
            }
            let s2 = sc.shift[0] * sc.shift[0] + sc.shift[1] * sc.shift[1];
            constant = constant - k_i * s2 / (T::lit(2.0) * sc.focal_length);
        }
        let c_obj = g.object_per_detector;
        let mut obj = object_samples(g, mask, r, m);
        let (onx, ony) = obj.dims();
        for jy in 0..ony {
            let y = c_obj * g.detector_coord(r.y0 as i64 + jy as i64 - m as i64, g.ny);
            for jx in 0..onx {
                let x = c_obj * g.detector_coord(r.x0 as i64 + jx as i64 - m as i64, g.nx);
                let ramp = Complex::from_polar(T::one(), gradient[0] * x + gradient[1] * y);
                obj.set(jx, jy, obj.get(jx, jy) * ramp);
            }
        }
        let kernel = self.kernel.weights.map(|w| Complex::new(w, T::zero()));
        let corr = Correlator::new(&kernel, onx, ony).correlate(&obj);
        let signal = |ix: usize, iy: usize| {
            let det = [g.detector_coord(ix as i64, g.nx), g.detector_coord(iy as i64, g.ny)];
            let k_s1 = o.signal_at_detector(det, SourceId::First);
            let k_s2 = o.signal_at_detector(det, SourceId::Second);
            let sum = |screens: &[crate::optics::LensScreen<T>], k: &PhotonMomentum<T>| {
                let s = k.slopes();
                screens.iter().map(|sc| sc.excess_path(s)).fold(T::zero(), |a, b| a + b)
            };
            o.signal_omega / c * (sum(&o.signal_screens[0], &k_s1) - sum(&o.signal_screens[1], &k_s2))
        };
        let values = Grid::from_fn(r.width, r.height, |px, py| {
            let phase = constant + signal(r.x0 + px, r.y0 + py);
            (corr.get(px, py) * Complex::from_polar(T::one(), phase)).re * g.contrast
        });
        Ok(VisibilityMap::from_values(values))
    }
}

/// `out[p] = sum_d k[d] x[p + d]` over the valid range.
pub fn correlate_1d<T: Real>(k: &[T], x: &[T]) -> Vec<T> {
    if k.len() > x.len() {
        return Vec::new();
    }
    (0..=x.len() - k.len()).map(|p| k.iter().zip(&x[p..]).map(|(&a, &b)| a * b).sum()).collect()
}

/// Visibility of a phase-free object via the shift-invariant convolution.
pub fn convolve_object<T: Real>(
    setup: &OpticalSetup<T>,
    kernel: &KernelGrid<T>,
    mask: &ObjectMask<T>,
    region: Option<Region>,
) -> Result<VisibilityMap<T>> {
    FastPath::new(setup, kernel)?.convolve(mask, region)
}

/// Shift-variant kernel family of a misaligned setup.
pub type ShiftVariantKernelFamily<T> = FastPath<T>;

pub fn build_shift_variant_family<T: Real>(
    setup: &OpticalSetup<T>,
    kernel: &KernelGrid<T>,
) -> Result<ShiftVariantKernelFamily<T>> {
    FastPath::new(setup, kernel)
}

pub fn shift_variant_convolve<T: Real>(
    family: &ShiftVariantKernelFamily<T>,
    mask: &ObjectMask<T>,
    region: Option<Region>,
) -> Result<VisibilityMap<T>> {
    family.shift_variant(mask, region)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlate_1d_valid_range() {
        let out = correlate_1d(&[1.0, 2.0, 3.0], &[1.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(out, vec![1.0, 3.0, 2.0]);
        assert!(correlate_1d(&[1.0; 4], &[1.0; 3]).is_empty());
    }
}
