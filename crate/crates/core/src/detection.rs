//! Quasi-Monte Carlo evaluation of the output-port count rates, detector
//! binning, noise injection and pointwise visibility.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, Region};
use crate::optics::{LinearOptics, OpticalSetup, SourceId, PARAXIAL_LIMIT};
use crate::scalar::Real;
use crate::scene::ObjectMask;
use crate::source::{KernelGrid, PhotonMomentum};

/// Minimum fraction of the kernel mass the integration box must cover.
pub const MIN_DOMAIN_COVERAGE: f64 = 1.0 - 1e-4;

/// Default integration box half-width in correlation widths.
pub const DEFAULT_BOX_WIDTHS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SequenceKind {
    Sobol,
    Halton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Port {
    Plus,
    Minus,
}

impl Port {
    pub fn tag(self) -> &'static str {
        match self {
            Port::Plus => "plus",
            Port::Minus => "minus",
        }
    }
}

/// Direction numbers of the second Sobol dimension (primitive polynomial
/// `x + 1`), left-aligned in 32 bits.
fn sobol_directions() -> [[u32; 32]; 2] {
    let mut v = [[0u32; 32]; 2];
    let mut m = 1u64;
    for k in 0..32 {
        v[0][k] = 1u32 << (31 - k);
        if k > 0 {
            m = (m << 1) ^ m;
        }
        v[1][k] = ((m << (31 - k)) & 0xffff_ffff) as u32;
    }
    v
}

/// Hash-based nested uniform (Owen) scrambling of a 32-bit binary fraction.
fn owen_scramble(x: u32, seed: u32) -> u32 {
    let mut v = x.reverse_bits();
    v = v.wrapping_add(seed);
    v ^= v.wrapping_mul(0x6c50_b47c);
    v ^= v.wrapping_mul(0xb82f_1e52);
    v ^= v.wrapping_mul(0xc7af_e638);
    v ^= v.wrapping_mul(0x8d22_f6e6);
    v.reverse_bits()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut r) = (inv, 0.0);
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Two-dimensional low-discrepancy point set on the unit square.
///
/// Sobol points are Owen-scrambled, Halton points rotated modulo one; the
/// scrambling keys are drawn from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct QmcSampler<T> {
    pub kind: SequenceKind,
    pub seed: u64,
    /// Half-width of the integration box in transverse idler momentum (rad/m).
    pub half_width: T,
    points: Vec<[T; 2]>,
}

impl<T: Real> QmcSampler<T> {
    pub fn new(kind: SequenceKind, samples: usize, seed: u64, half_width: T) -> Result<Self> {
        if samples == 0 {
            return Err(Error::Range("sample count must be positive".into()));
        }
        if !(half_width > T::zero()) {
            return Err(Error::Range("integration half-width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = match kind {
            SequenceKind::Sobol => {
                let dirs = sobol_directions();
                let keys: [u32; 2] = [rand::Rng::random(&mut rng), rand::Rng::random(&mut rng)];
                let scale = 1.0 / 4_294_967_296.0;
                (0..samples as u64)
                    .map(|i| {
                        let mut x = [0u32; 2];
                        for (bit, d0) in dirs[0].iter().enumerate() {
                            if (i >> bit) & 1 == 1 {
                                x[0] ^= d0;
                                x[1] ^= dirs[1][bit];
                            }
                        }
                        let u = [owen_scramble(x[0], keys[0]), owen_scramble(x[1], keys[1])];
                        [T::lit((u[0] as f64 + 0.5) * scale), T::lit((u[1] as f64 + 0.5) * scale)]
                    })
                    .collect()
            }
            SequenceKind::Halton => {
                let shift: [f64; 2] = [rand::Rng::random(&mut rng), rand::Rng::random(&mut rng)];
                (0..samples as u64)
                    .map(|i| {
                        let a = (radical_inverse(i + 1, 2) + shift[0]).fract();
                        let b = (radical_inverse(i + 1, 3) + shift[1]).fract();
                        [T::lit(a), T::lit(b)]
                    })
                    .collect()
            }
        };
        Ok(Self { kind, seed, half_width, points })
    }

    /// Sampler whose box spans `widths` correlation widths of the kernel.
    pub fn for_kernel_width(kind: SequenceKind, samples: usize, seed: u64, width: T, widths: f64) -> Result<Self> {
        Self::new(kind, samples, seed, width * T::lit(widths))
    }

    pub fn samples(&self) -> usize {
        self.points.len()
    }

    pub fn unit_points(&self) -> &[[T; 2]] {
        &self.points
    }

    /// Integration weight of one sample: box area over sample count.
    pub fn weight(&self) -> T {
        let side = T::lit(2.0) * self.half_width;
        side * side / T::count(self.points.len())
    }

    /// Offsets from the box center, `(2u - 1) * half_width`.
    pub fn offsets(&self) -> impl Iterator<Item = [T; 2]> + '_ {
        let two = T::lit(2.0);
        self.points
            .iter()
            .map(move |u| [(two * u[0] - T::one()) * self.half_width, (two * u[1] - T::one()) * self.half_width])
    }

    /// Fraction of the kernel mass inside the integration box.
    pub fn coverage(&self, kernel: &KernelGrid<T>) -> T {
        let mut inside = T::zero();
        let mut total = T::zero();
        for iy in 0..kernel.ny {
            for ix in 0..kernel.nx {
                let v = kernel.get(ix, iy);
                let q = kernel.offset_of(ix, iy);
                total = total + v;
                if q[0].abs() <= self.half_width && q[1].abs() <= self.half_width {
                    inside = inside + v;
                }
            }
        }
        inside / total
    }

    pub fn check_coverage(&self, kernel: &KernelGrid<T>) -> Result<T> {
        let c = self.coverage(kernel);
        if c.as_f64() < MIN_DOMAIN_COVERAGE {
            return Err(Error::Domain { coverage: c.as_f64() });
        }
        Ok(c)
    }
}

/// Unscaled integrals of one detector point: the direct term
/// `∫ g1² t_s1² + g2² t_s2²` and the interference term
/// `∫ 2 t_s1 t_s2 t_i t_o Re(g1 g2* e^{iΔφ})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortSums<T> {
    pub direct: T,
    pub interference: T,
}

impl<T: Real> PortSums<T> {
    pub fn port(&self, port: Port) -> T {
        match port {
            Port::Plus => self.direct + self.interference,
            Port::Minus => self.direct - self.interference,
        }
    }
}

/// Count-rate integrand of a setup and object, with the linearized optics
/// precomputed.
pub struct Integrator<'a, T: Real> {
    setup: &'a OpticalSetup<T>,
    object: &'a ObjectMask<T>,
    optics: LinearOptics<T>,
    signal_t: [T; 2],
    idler_t: T,
}

impl<'a, T: Real> Integrator<'a, T> {
    pub fn new(setup: &'a OpticalSetup<T>, object: &'a ObjectMask<T>) -> Result<Self> {
        Ok(Self {
            setup,
            object,
            optics: setup.linearize()?,
            signal_t: [setup.arms.signal1.transmittance, setup.arms.signal2.transmittance],
            idler_t: setup.idler_transmittance(),
        })
    }

    pub fn optics(&self) -> &LinearOptics<T> {
        &self.optics
    }

    /// Source-1 signal momentum focused onto detector position `pos`.
    pub fn signal_at(&self, pos: [T; 2]) -> PhotonMomentum<T> {
        self.optics.signal_at_detector(pos, SourceId::First)
    }

    fn check_paraxial(&self, k: &PhotonMomentum<T>) -> Result<()> {
        let s = k.slopes();
        let slope = (s[0] * s[0] + s[1] * s[1]).sqrt();
        if !(slope < T::lit(PARAXIAL_LIMIT)) {
            return Err(Error::Paraxial { slope: slope.as_f64(), limit: PARAXIAL_LIMIT });
        }
        Ok(())
    }

    /// Integrand of [`PortSums`] at one idler momentum.
    pub fn integrand(&self, k_s1: &PhotonMomentum<T>, k_s2: &PhotonMomentum<T>, q_i: [T; 2]) -> Result<PortSums<T>> {
        let k_i1 = PhotonMomentum::from_transverse(q_i[0], q_i[1], self.optics.idler_omega, T::one())?;
        let k_i2 = self.optics.idler_at_source2(&k_i1);
        let g1 = self.setup.source1.amplitude(k_s1, &k_i1);
        let g2 = self.setup.source2.amplitude(k_s2, &k_i2);
        let [t1, t2] = self.signal_t;
        let direct = g1.norm_sqr() * t1 * t1 + g2.norm_sqr() * t2 * t2;
        let obj = self.object.sample(self.optics.object_point(&k_i1));
        if obj.amplitude == T::zero() {
            return Ok(PortSums { direct, interference: T::zero() });
        }
        let phase = obj.phase + self.optics.phase(k_s1, k_s2, &k_i1);
        let cross = (g1 * g2.conj() * Complex::from_polar(T::one(), phase)).re;
        let interference = T::lit(2.0) * t1 * t2 * self.idler_t * obj.amplitude * cross;
        Ok(PortSums { direct, interference })
    }

    /// QMC estimate of both integrals for the source-1 signal momentum `k_s1`.
    pub fn port_sums(&self, k_s1: &PhotonMomentum<T>, sampler: &QmcSampler<T>) -> Result<PortSums<T>> {
        self.check_paraxial(k_s1)?;
        let pos = self.optics.detector_per_slope[0];
        let s = k_s1.slopes();
        let k_s2 = self.optics.signal_at_detector([pos * s[0], pos * s[1]], SourceId::Second);
        self.check_paraxial(&k_s2)?;
        let center = self.setup.source1.idler_center(k_s1);
        let h = sampler.half_width;
        for corner in [[h, h], [-h, -h], [h, -h], [-h, h]] {
            let q = [center[0] + corner[0], center[1] + corner[1]];
            let k = PhotonMomentum::from_transverse(q[0], q[1], self.optics.idler_omega, T::one())?;
            self.check_paraxial(&k)?;
        }
        let mut direct = T::zero();
        let mut interference = T::zero();
        for off in sampler.offsets() {
            let t = self.integrand(k_s1, &k_s2, [center[0] + off[0], center[1] + off[1]])?;
            direct = direct + t.direct;
            interference = interference + t.interference;
        }
        let w = sampler.weight();
        Ok(PortSums { direct: direct * w, interference: interference * w })
    }

    /// Port sums at the center of detector pixel `(ix, iy)`.
    pub fn pixel_sums(&self, ix: usize, iy: usize, sampler: &QmcSampler<T>) -> Result<PortSums<T>> {
        let k_s1 = self.signal_at(self.setup.detector.pixel_center(ix, iy));
        self.port_sums(&k_s1, sampler)
    }
}

/// Count-rate density of one output port for the signal momentum `k_s1`.
pub fn count_rate_density<T: Real>(
    setup: &OpticalSetup<T>,
    object: &ObjectMask<T>,
    k_s1: &PhotonMomentum<T>,
    port: Port,
    sampler: &QmcSampler<T>,
) -> Result<T> {
    Ok(Integrator::new(setup, object)?.port_sums(k_s1, sampler)?.port(port))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageMetadata {
    pub seed: u64,
    pub samples: usize,
    pub setup_hash: String,
}

/// Expected counts of one output port.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorImage<T> {
    pub counts: Grid<T>,
    pub pitch: T,
    pub port: Port,
    /// Detector pixels covered by this image.
    pub region: Region,
    pub metadata: ImageMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions<T> {
    /// Detector efficiency times exposure and any calibration factor.
    pub exposure: T,
    /// Detector pixels to render; `None` renders the whole detector.
    pub region: Option<Region>,
    pub setup_hash: String,
}

impl<T: Real> Default for RenderOptions<T> {
    fn default() -> Self {
        Self { exposure: T::one(), region: None, setup_hash: String::new() }
    }
}

/// Renders both output-port images. One sample set serves every pixel and
/// both ports; each pixel is computed independently, so results do not depend
/// on the thread count.
pub fn render_detector_images<T: Real>(
    setup: &OpticalSetup<T>,
    object: &ObjectMask<T>,
    sampler: &QmcSampler<T>,
    options: &RenderOptions<T>,
) -> Result<(DetectorImage<T>, DetectorImage<T>)> {
    let det = setup.detector;
    let region = options.region.unwrap_or(Region::full(det.nx, det.ny));
    region.check_within(det.nx, det.ny)?;
    let integrator = Integrator::new(setup, object)?;
    let scale = det.pixel_area() * det.efficiency;
    let sums: Vec<PortSums<T>> = (0..region.len())
        .into_par_iter()
        .map(|i| integrator.pixel_sums(region.x0 + i % region.width, region.y0 + i / region.width, sampler))
        .collect::<Result<_>>()?;
    let image = |port: Port| -> Result<DetectorImage<T>> {
        let values = sums.iter().map(|s| (s.port(port) * scale).max(T::zero()) * options.exposure).collect();
        Ok(DetectorImage {
            counts: Grid::from_vec(region.width, region.height, values)?,
            pitch: det.pitch,
            port,
            region,
            metadata: ImageMetadata {
                seed: sampler.seed,
                samples: sampler.samples(),
                setup_hash: options.setup_hash.clone(),
            },
        })
    };
    Ok((image(Port::Plus)?, image(Port::Minus)?))
}

/// Pixels that receive noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseRegion {
    None,
    All,
    LeftHalf,
    RightHalf,
    Pixels(Region),
}

impl NoiseRegion {
    pub fn resolve(self, nx: usize, ny: usize) -> Option<Region> {
        match self {
            NoiseRegion::None => None,
            NoiseRegion::All => Some(Region::full(nx, ny)),
            NoiseRegion::LeftHalf => Some(Region::new(0, 0, nx / 2, ny)),
            NoiseRegion::RightHalf => Some(Region::new(nx / 2, 0, nx - nx / 2, ny)),
            NoiseRegion::Pixels(r) => Some(r),
        }
    }
}

/// Adds Gaussian noise of standard deviation `sigma` to the pixels of
/// `region`, in row-major order from a generator seeded with `seed`.
pub fn add_grid_noise<T: Real>(grid: &Grid<T>, sigma: T, region: NoiseRegion, seed: u64) -> Result<Grid<T>> {
    if !(sigma >= T::zero()) {
        return Err(Error::Range(format!("noise sigma must be non-negative, got {sigma}")));
    }
    let mut out = grid.clone();
    let (nx, ny) = grid.dims();
    let Some(r) = region.resolve(nx, ny) else { return Ok(out) };
    if sigma == T::zero() || r.is_empty() {
        return Ok(out);
    }
    r.check_within(nx, ny)?;
    let normal = Normal::new(0.0, sigma.as_f64()).map_err(|e| Error::Range(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for iy in r.y0..r.y0 + r.height {
        for ix in r.x0..r.x0 + r.width {
            out.set(ix, iy, out.get(ix, iy) + T::lit(normal.sample(&mut rng)));
        }
    }
    Ok(out)
}

/// Detector noise: [`add_grid_noise`] on the counts, floored at zero.
pub fn add_noise<T: Real>(
    img: &DetectorImage<T>,
    sigma: T,
    region: NoiseRegion,
    seed: u64,
) -> Result<DetectorImage<T>> {
    let noisy = add_grid_noise(&img.counts, sigma, region, seed)?;
    Ok(DetectorImage { counts: noisy.map(|v| v.max(T::zero())), ..img.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMap<T> {
    pub values: Grid<T>,
    /// Pixels whose value was clipped or had a zero denominator.
    pub flags: Grid<bool>,
}

impl<T: Real> VisibilityMap<T> {
    pub fn from_values(values: Grid<T>) -> Self {
        let (nx, ny) = values.dims();
        Self { values, flags: Grid::filled(nx, ny, false) }
    }
}

/// Pointwise visibility `(Γ⁺ - Γ⁻) / (Γ⁺ + Γ⁻)`.
pub fn visibility_map<T: Real>(
    plus: &DetectorImage<T>,
    minus: &DetectorImage<T>,
    clip: bool,
) -> Result<VisibilityMap<T>> {
    visibility_from_counts(&plus.counts, &minus.counts, clip)
}

pub fn visibility_from_counts<T: Real>(plus: &Grid<T>, minus: &Grid<T>, clip: bool) -> Result<VisibilityMap<T>> {
    plus.check_same_dims(minus)?;
    let (nx, ny) = plus.dims();
    let mut values = Grid::filled(nx, ny, T::zero());
    let mut flags = Grid::filled(nx, ny, false);
    for iy in 0..ny {
        for ix in 0..nx {
            let (p, m) = (plus.get(ix, iy), minus.get(ix, iy));
            let total = p + m;
            if total == T::zero() {
                flags.set(ix, iy, true);
                continue;
            }
            let mut v = (p - m) / total;
            if clip && (v < T::zero() || v > T::one()) {
                v = v.max(T::zero()).min(T::one());
                flags.set(ix, iy, true);
            }
            values.set(ix, iy, v);
        }
    }
    Ok(VisibilityMap { values, flags })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sobol_first_points() {
        // Unscrambled Sobol sequence in two dimensions.
        let v = sobol_directions();
        let point = |i: u32| {
            let mut x = [0u32; 2];
            for bit in 0..32 {
                if (i >> bit) & 1 == 1 {
                    x[0] ^= v[0][bit];
                    x[1] ^= v[1][bit];
                }
            }
            [x[0] as f64 / 4294967296.0, x[1] as f64 / 4294967296.0]
        };
        assert_eq!(point(1), [0.5, 0.5]);
        assert_eq!(point(2), [0.25, 0.75]);
        assert_eq!(point(3), [0.75, 0.25]);
        assert_eq!(point(4), [0.125, 0.625]);
    }

    #[test]
    fn sobol_net_stratifies_the_square() {
        // Any 2^m points starting at 0 form a (0, m, 2) net: one point per
        // elementary box of area 2^-m, also after a digital shift.
        let s = QmcSampler::<f64>::new(SequenceKind::Sobol, 256, 7, 1.0).unwrap();
        for (kx, ky) in [(16, 16), (256, 1), (1, 256), (32, 8)] {
            let mut seen = vec![0u32; kx * ky];
            for p in s.unit_points() {
                let bx = (p[0] * kx as f64) as usize;
                let by = (p[1] * ky as f64) as usize;
                seen[by * kx + bx] += 1;
            }
            assert!(seen.iter().all(|&c| c == 1), "{kx}x{ky}");
        }
    }

    #[test]
    fn samplers_are_deterministic_and_keyed() {
        for kind in [SequenceKind::Sobol, SequenceKind::Halton] {
            let a = QmcSampler::<f64>::new(kind, 64, 3, 1.0).unwrap();
            let b = QmcSampler::<f64>::new(kind, 64, 3, 1.0).unwrap();
            let c = QmcSampler::<f64>::new(kind, 64, 4, 1.0).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.unit_points(), c.unit_points());
            assert!(a.unit_points().iter().all(|p| p.iter().all(|&u| (0.0..1.0).contains(&u))));
        }
    }

    #[test]
    fn qmc_integrates_a_smooth_function() {
        for kind in [SequenceKind::Sobol, SequenceKind::Halton] {
            let s = QmcSampler::<f64>::new(kind, 4096, 11, 1.0).unwrap();
            let est: f64 = s.offsets().map(|q| (q[0] * q[1]).cos() + q[0] * q[0]).sum::<f64>() * s.weight();
            // ∫∫ cos(xy) over [-1,1]² = 4 Si-type series; x² integrates to 4/3.
            let exact = 4.0 * (1.0 - 1.0 / 18.0 + 1.0 / 600.0 - 1.0 / 35280.0 + 1.0 / 3265920.0) + 4.0 / 3.0;
            assert!((est - exact).abs() < 2e-3, "{kind:?}: {est} vs {exact}");
        }
    }

    fn image(values: Vec<f64>, nx: usize, ny: usize, port: Port) -> DetectorImage<f64> {
        DetectorImage {
            counts: Grid::from_vec(nx, ny, values).unwrap(),
            pitch: 5e-6,
            port,
            region: Region::full(nx, ny),
            metadata: ImageMetadata::default(),
        }
    }

    #[test]
    fn visibility_special_cases() {
        let p = image(vec![3.0, 1.0, 0.0, 2.0], 2, 2, Port::Plus);
        let same = visibility_map(&p, &image(p.counts.as_slice().to_vec(), 2, 2, Port::Minus), true).unwrap();
        assert!(same.values.as_slice().iter().all(|&v| v == 0.0));
        assert!(same.flags.get(0, 1));
        let dark = visibility_map(&p, &image(vec![0.0; 4], 2, 2, Port::Minus), true).unwrap();
        assert_eq!(dark.values.as_slice(), &[1.0, 1.0, 0.0, 1.0]);
        let neg = visibility_map(&p, &image(vec![5.0, 1.0, 0.0, 0.0], 2, 2, Port::Minus), true).unwrap();
        assert_eq!(neg.values.get(0, 0), 0.0);
        assert!(neg.flags.get(0, 0));
        let raw = visibility_map(&p, &image(vec![5.0, 1.0, 0.0, 0.0], 2, 2, Port::Minus), false).unwrap();
        assert!(raw.values.get(0, 0) < 0.0);
        let wrong = image(vec![0.0; 6], 3, 2, Port::Minus);
        assert!(matches!(visibility_map(&p, &wrong, true), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn noise_statistics_and_regions() {
        let clean = image(vec![1000.0; 200 * 100], 200, 100, Port::Plus);
        assert_eq!(add_noise(&clean, 0.0, NoiseRegion::All, 1).unwrap(), clean);
        let noisy = add_noise(&clean, 50.0, NoiseRegion::All, 1).unwrap();
        let d: Vec<f64> = noisy.counts.as_slice().iter().map(|v| v - 1000.0).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        // Standard error of the SD estimator is σ/√(2n) = 0.25.
        assert!((sd - 50.0).abs() < 1.0, "sd {sd}");
        let left = add_noise(&clean, 50.0, NoiseRegion::LeftHalf, 1).unwrap();
        for iy in 0..100 {
            for ix in 100..200 {
                assert_eq!(left.counts.get(ix, iy).to_bits(), 1000.0f64.to_bits());
            }
        }
        assert_eq!(add_noise(&clean, 50.0, NoiseRegion::All, 1).unwrap(), noisy);
        let dim = image(vec![1.0; 100], 10, 10, Port::Minus);
        let floored = add_noise(&dim, 50.0, NoiseRegion::All, 2).unwrap();
        assert!(floored.counts.as_slice().iter().all(|&v| v >= 0.0));
    }
}
