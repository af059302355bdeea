//! Biphoton sources: transition amplitudes `g(k_s, k_i)` and the normalized
//! kernel used by the convolution fast path.
//!
//! Momenta are expressed outside the crystal (vacuum). Transverse momentum is
//! conserved across the flat crystal faces, so the model only needs the
//! transverse components and the frequency of each photon; the longitudinal
//! components inside the crystal follow from the refractive indices.

use std::fmt::Debug;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{sinc, Real, SPEED_OF_LIGHT};

/// Wavevector (rad/m) and angular frequency (rad/s) of one photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonMomentum<T> {
    pub kx: T,
    pub ky: T,
    pub kz: T,
    pub omega: T,
}

impl<T: Real> PhotonMomentum<T> {
    /// Forward-propagating momentum with transverse part `(qx, qy)` in a medium
    /// of index `n`.
    pub fn from_transverse(qx: T, qy: T, omega: T, n: T) -> Result<Self> {
        let k = n * omega / T::lit(SPEED_OF_LIGHT);
        let q2 = qx * qx + qy * qy;
        if q2 >= k * k {
            return Err(Error::Evanescent { q: q2.sqrt().as_f64(), k: k.as_f64() });
        }
        Ok(Self { kx: qx, ky: qy, kz: (k * k - q2).sqrt(), omega })
    }

    /// Vacuum momentum with the given transverse slopes `(kx/kz, ky/kz)`.
    pub fn from_slopes(tx: T, ty: T, omega: T) -> Self {
        let k = omega / T::lit(SPEED_OF_LIGHT);
        let kz = k / (T::one() + tx * tx + ty * ty).sqrt();
        Self { kx: tx * kz, ky: ty * kz, kz, omega }
    }

    pub fn collinear(omega: T) -> Self {
        Self { kx: T::zero(), ky: T::zero(), kz: omega / T::lit(SPEED_OF_LIGHT), omega }
    }

    #[inline]
    pub fn transverse(&self) -> [T; 2] {
        [self.kx, self.ky]
    }

    #[inline]
    pub fn norm(&self) -> T {
        (self.kx * self.kx + self.ky * self.ky + self.kz * self.kz).sqrt()
    }

    /// Ray slopes `(kx/kz, ky/kz)`.
    #[inline]
    pub fn slopes(&self) -> [T; 2] {
        [self.kx / self.kz, self.ky / self.kz]
    }

    pub fn vacuum_wavelength(&self) -> T {
        T::lit(2.0 * SPEED_OF_LIGHT) * T::PI() / self.omega
    }

    /// Same photon with the transverse momentum negated.
    pub fn mirrored(&self) -> Self {
        Self { kx: -self.kx, ky: -self.ky, ..*self }
    }
}

pub fn omega_from_wavelength<T: Real>(wavelength: T) -> T {
    T::lit(2.0 * SPEED_OF_LIGHT) * T::PI() / wavelength
}

/// Which photon of the down-conversion process an index is looked up for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Pump,
    Signal,
    Idler,
}

/// Extraordinary refractive index of the crystal.
#[derive(Debug, Clone, PartialEq)]
pub enum IndexModel<T> {
    /// One index per photon role, evaluated at the run's central wavelengths.
    Constant { pump: T, signal: T, idler: T },
    /// `n^2 = a + sum_j b_j λ^2 / (λ^2 - c_j)` with λ in micrometres;
    /// coefficients are `[a, b_1, c_1, b_2, c_2, ...]`.
    Sellmeier { coefficients: Vec<T> },
}

impl<T: Real> IndexModel<T> {
    pub fn index(&self, role: Role, vacuum_wavelength: T) -> T {
        match self {
            IndexModel::Constant { pump, signal, idler } => match role {
                Role::Pump => *pump,
                Role::Signal => *signal,
                Role::Idler => *idler,
            },
            IndexModel::Sellmeier { coefficients } => {
                let l2 = (vacuum_wavelength * T::lit(1e6)).powi(2);
                let mut n2 = coefficients.first().copied().unwrap_or_else(T::one);
                for pair in coefficients[1.min(coefficients.len())..].chunks_exact(2) {
                    n2 = n2 + pair[0] * l2 / (l2 - pair[1]);
                }
                n2.sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrystalSpec<T> {
    /// Length along the pump axis (m).
    pub length_z: T,
    /// Quasi-phase-matching period (m).
    pub poling_period: T,
    /// Operating temperature (°C). Recorded for provenance; the index model
    /// is expected to already describe the crystal at this temperature.
    pub temperature: T,
    pub index_model: IndexModel<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PumpSpec<T> {
    pub wavelength: T,
    /// 1/e² intensity radius (m).
    pub waist: T,
    pub power: T,
}

/// Evaluator of the biphoton transition amplitude.
///
/// Implementations must be pure: equal inputs give bit-identical outputs.
pub trait SourceModel<T: Real>: Debug + Send + Sync {
    fn amplitude(&self, k_s: &PhotonMomentum<T>, k_i: &PhotonMomentum<T>) -> Complex<T>;

    /// Transverse idler momentum at which `|g(k_s, .)|²` peaks.
    fn idler_center(&self, k_s: &PhotonMomentum<T>) -> [T; 2];

    /// RMS width (rad/m, per axis) of `|g|²` in transverse idler momentum.
    fn correlation_width(&self) -> T;

    /// Refractive index of the medium the idler momentum is expressed in when
    /// building kernels.
    fn idler_index(&self) -> T {
        T::one()
    }
}

/// Gaussian pump envelope times quasi-phase-matching sinc:
/// `A exp(-|q_s + q_i|² w_p² / 4) sinc(Δk_z L / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSincModel<T> {
    pub crystal: CrystalSpec<T>,
    pub pump: PumpSpec<T>,
    pub amplitude_scale: T,
    /// When false the sinc factor is replaced by 1 (Gaussian-only kernel).
    pub phase_matching: bool,
}

impl<T: Real> GaussianSincModel<T> {
    /// Longitudinal mismatch `k_p,z - k_s,z - k_i,z - 2π/Λ` inside the crystal.
    ///
    /// The pump frequency is `ω_s + ω_i`; its transverse momentum is
    /// `q_s + q_i`.
    pub fn phase_mismatch(&self, k_s: &PhotonMomentum<T>, k_i: &PhotonMomentum<T>) -> T {
        let c = T::lit(SPEED_OF_LIGHT);
        let omega_p = k_s.omega + k_i.omega;
        let idx = &self.crystal.index_model;
        let n_p = idx.index(Role::Pump, omega_from_wavelength(omega_p));
        let n_s = idx.index(Role::Signal, omega_from_wavelength(k_s.omega));
        let n_i = idx.index(Role::Idler, omega_from_wavelength(k_i.omega));
        let kz = |n: T, omega: T, qx: T, qy: T| {
            let k = n * omega / c;
            (k * k - qx * qx - qy * qy).max(T::zero()).sqrt()
        };
        let (qpx, qpy) = (k_s.kx + k_i.kx, k_s.ky + k_i.ky);
        let grating = T::lit(2.0) * T::PI() / self.crystal.poling_period;
        kz(n_p, omega_p, qpx, qpy) - kz(n_s, k_s.omega, k_s.kx, k_s.ky) - kz(n_i, k_i.omega, k_i.kx, k_i.ky) - grating
    }

    fn envelope(&self, k_s: &PhotonMomentum<T>, k_i: &PhotonMomentum<T>) -> T {
        let (qx, qy) = (k_s.kx + k_i.kx, k_s.ky + k_i.ky);
        let w = self.pump.waist;
        (-(qx * qx + qy * qy) * w * w / T::lit(4.0)).exp()
    }
}

impl<T: Real> SourceModel<T> for GaussianSincModel<T> {
    fn amplitude(&self, k_s: &PhotonMomentum<T>, k_i: &PhotonMomentum<T>) -> Complex<T> {
        let mut a = self.amplitude_scale * self.envelope(k_s, k_i);
        if self.phase_matching {
            a = a * sinc(self.phase_mismatch(k_s, k_i) * self.crystal.length_z / T::lit(2.0));
        }
        Complex::new(a, T::zero())
    }

    fn idler_center(&self, k_s: &PhotonMomentum<T>) -> [T; 2] {
        [-k_s.kx, -k_s.ky]
    }

    fn correlation_width(&self) -> T {
        // |g|² ∝ exp(-|Q|² w² / 2): standard deviation 1/w per axis.
        T::one() / self.pump.waist
    }
}

/// Sampled normalized transition probability `ĝ`.
///
/// Samples are indexed by the offset `Q = q_i - q_i,center` of the transverse
/// idler momentum from the kernel center. For the collinear signal the center
/// is `q_i = 0` and the offset equals `q_s + q_i`: the idler transverse
/// momentum enters mirrored, matching the image inversion of the idler relay.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid<T> {
    /// Half-width of the grid per axis (rad/m); samples sit at `±extent`.
    pub extent: T,
    pub nx: usize,
    pub ny: usize,
    /// Row-major samples, `values[iy * nx + ix]`.
    pub values: Vec<T>,
    pub center_ks: PhotonMomentum<T>,
    pub idler_center: [T; 2],
}

/// Grid geometry for [`normalized_kernel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    pub extent: T,
    /// Samples per axis; must be odd.
    pub n: usize,
}

impl<T: Real> KernelSpec<T> {
    /// Extent of 5.5 correlation widths sampled at 16 points per width.
    pub fn auto(model: &dyn SourceModel<T>) -> Self {
        let sigma = model.correlation_width();
        let extent = T::lit(5.5) * sigma;
        Self { extent, n: 2 * 88 + 1 }
    }
}

/// Maximum boundary-to-peak ratio accepted by [`normalized_kernel`].
pub const KERNEL_TRUNCATION_LIMIT: f64 = 1e-4;

/// Samples `|g(center_ks, k_i)|²` over transverse idler momenta and normalizes
/// the result to unit integral.
pub fn normalized_kernel<T: Real>(
    model: &dyn SourceModel<T>,
    center_ks: PhotonMomentum<T>,
    idler_omega: T,
    spec: KernelSpec<T>,
) -> Result<KernelGrid<T>> {
    if spec.n.is_multiple_of(2) || spec.n < 3 {
        return Err(Error::Range(format!("kernel samples per axis must be odd and >= 3, got {}", spec.n)));
    }
    if !(spec.extent > T::zero()) {
        return Err(Error::Range("kernel extent must be positive".into()));
    }
    let n = spec.n;
    let h = spec.extent * T::lit(2.0) / T::count(n - 1);
    let center = model.idler_center(&center_ks);
    let n_i = model.idler_index();
    let mut values = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let qx = center[0] - spec.extent + T::count(ix) * h;
            let qy = center[1] - spec.extent + T::count(iy) * h;
            let k_i = PhotonMomentum::from_transverse(qx, qy, idler_omega, n_i)?;
            values.push(model.amplitude(&center_ks, &k_i).norm_sqr());
        }
    }
    let peak = values.iter().copied().fold(T::zero(), T::max);
    if !(peak > T::zero()) {
        return Err(Error::Range("kernel is identically zero".into()));
    }
    let boundary = (0..n)
        .flat_map(|i| [values[i], values[(n - 1) * n + i], values[i * n], values[i * n + n - 1]])
        .fold(T::zero(), T::max);
    let ratio = (boundary / peak).as_f64();
    if ratio >= KERNEL_TRUNCATION_LIMIT {
        return Err(Error::Truncation { ratio, limit: KERNEL_TRUNCATION_LIMIT });
    }
    let norm = values.iter().copied().sum::<T>() * h * h;
    values.iter_mut().for_each(|v| *v = *v / norm);
    Ok(KernelGrid { extent: spec.extent, nx: n, ny: n, values, center_ks, idler_center: center })
}

impl<T: Real> KernelGrid<T> {
    /// Sample spacing (rad/m).
    pub fn spacing(&self) -> T {
        self.extent * T::lit(2.0) / T::count(self.nx - 1)
    }

    pub fn cell_area(&self) -> T {
        self.spacing() * self.spacing()
    }

    pub fn integral(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.cell_area()
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> T {
        self.values[iy * self.nx + ix]
    }

    /// Offset momentum of sample `(ix, iy)`.
    pub fn offset_of(&self, ix: usize, iy: usize) -> [T; 2] {
        let h = self.spacing();
        [T::count(ix) * h - self.extent, T::count(iy) * h - self.extent]
    }

    /// Bilinear interpolation at an offset; zero outside the grid.
    pub fn value_at(&self, offset: [T; 2]) -> T {
        let h = self.spacing();
        let fx = (offset[0] + self.extent) / h;
        let fy = (offset[1] + self.extent) / h;
        let last = T::count(self.nx - 1);
        if !(fx >= T::zero() && fy >= T::zero() && fx <= last && fy <= last) {
            return T::zero();
        }
        let ix = fx.floor().to_usize().unwrap_or(0).min(self.nx - 2);
        let iy = fy.floor().to_usize().unwrap_or(0).min(self.ny - 2);
        let tx = fx - T::count(ix);
        let ty = fy - T::count(iy);
        let v00 = self.get(ix, iy);
        let v10 = self.get(ix + 1, iy);
        let v01 = self.get(ix, iy + 1);
        let v11 = self.get(ix + 1, iy + 1);
        (v00 * (T::one() - tx) + v10 * tx) * (T::one() - ty) + (v01 * (T::one() - tx) + v11 * tx) * ty
    }

    /// Radius of the half-maximum contour along +x, located by bisection on
    /// the interpolated kernel.
    pub fn half_max_radius_x(&self) -> T {
        let c = (self.nx - 1) / 2;
        let peak = self.get(c, c);
        let half = peak / T::lit(2.0);
        let (mut lo, mut hi) = (T::zero(), self.extent);
        for _ in 0..200 {
            let mid = (lo + hi) / T::lit(2.0);
            if self.value_at([mid, T::zero()]) > half {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) / T::lit(2.0)
    }
}
