use std::sync::Arc;

use super::{ArmPath, AxisMap, LensScreen};
use crate::error::{Error, Result};
use crate::scalar::{Real, SPEED_OF_LIGHT};
use crate::source::{omega_from_wavelength, PhotonMomentum, SourceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceId {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detector<T> {
    /// Pixel pitch (m).
    pub pitch: T,
    pub nx: usize,
    pub ny: usize,
    pub efficiency: T,
}

impl<T: Real> Detector<T> {
    /// Detector-plane position of the center of pixel `(ix, iy)`; pixel
    /// `(nx / 2, ny / 2)` sits on the optical axis.
    pub fn pixel_center(&self, ix: usize, iy: usize) -> [T; 2] {
        [(T::count(ix) - T::count(self.nx / 2)) * self.pitch, (T::count(iy) - T::count(self.ny / 2)) * self.pitch]
    }

    pub fn pixel_area(&self) -> T {
        self.pitch * self.pitch
    }

    /// Fractional pixel coordinates of a detector-plane position.
    pub fn to_pixel(&self, pos: [T; 2]) -> [T; 2] {
        [pos[0] / self.pitch + T::count(self.nx / 2), pos[1] / self.pitch + T::count(self.ny / 2)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arms<T> {
    /// Source 1 to the object plane.
    pub idler_to_object: ArmPath<T>,
    /// Object plane to the source-2 plane.
    pub object_to_source2: ArmPath<T>,
    pub signal1: ArmPath<T>,
    pub signal2: ArmPath<T>,
}

/// One experiment configuration: both sources, all arms and the detector.
#[derive(Debug, Clone)]
pub struct OpticalSetup<T: Real> {
    pub source1: Arc<dyn SourceModel<T>>,
    pub source2: Arc<dyn SourceModel<T>>,
    pub signal_wavelength: T,
    pub idler_wavelength: T,
    pub arms: Arms<T>,
    pub detector: Detector<T>,
    /// Pump phases `φ_p1`, `φ_p2` (rad).
    pub pump_phase: [T; 2],
}

/// Momenta of one term of the interference integral: the source-1 pair and
/// the source-2 pair it is indistinguishable from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMomenta<T> {
    pub signal1: PhotonMomentum<T>,
    pub idler1: PhotonMomentum<T>,
    pub signal2: PhotonMomentum<T>,
    pub idler2: PhotonMomentum<T>,
}

fn invert_axis<T: Real>(map: &AxisMap<T>, target: T, what: &str) -> Result<T> {
    if map.b == T::zero() || !map.b.is_finite() {
        return Err(Error::NoSolution(format!("{what}: arm maps every direction to one point")));
    }
    Ok((target - map.e) / map.b)
}

impl<T: Real> OpticalSetup<T> {
    pub fn signal_omega(&self) -> T {
        omega_from_wavelength(self.signal_wavelength)
    }

    pub fn idler_omega(&self) -> T {
        omega_from_wavelength(self.idler_wavelength)
    }

    pub fn signal_arm(&self, which: SourceId) -> &ArmPath<T> {
        match which {
            SourceId::First => &self.arms.signal1,
            SourceId::Second => &self.arms.signal2,
        }
    }

    /// Idler path from source 1 through the object to the source-2 plane.
    pub fn idler_path(&self) -> ArmPath<T> {
        self.arms.idler_to_object.concat(&self.arms.object_to_source2)
    }

    /// Amplitude transmittance of the idler between the sources, excluding the object.
    pub fn idler_transmittance(&self) -> T {
        self.arms.idler_to_object.transmittance * self.arms.object_to_source2.transmittance
    }

    /// Same setup with every lens shift removed.
    pub fn nominal(&self) -> Self {
        let mut out = self.clone();
        out.arms = Arms {
            idler_to_object: self.arms.idler_to_object.nominal(),
            object_to_source2: self.arms.object_to_source2.nominal(),
            signal1: self.arms.signal1.nominal(),
            signal2: self.arms.signal2.nominal(),
        };
        out
    }

    pub fn is_aligned(&self) -> bool {
        self.arms.idler_to_object.is_aligned()
            && self.arms.object_to_source2.is_aligned()
            && self.arms.signal1.is_aligned()
            && self.arms.signal2.is_aligned()
    }

    /// Landing point of a signal ray. Positions and momentum matching always
    /// use the nominal geometry; lens shifts act only through their phase.
    pub fn detector_point(&self, k_s: &PhotonMomentum<T>, which: SourceId) -> Result<[T; 2]> {
        Ok(self.signal_arm(which).nominal().trace(k_s)?.pos)
    }

    pub fn object_point(&self, k_i: &PhotonMomentum<T>) -> Result<[T; 2]> {
        Ok(self.arms.idler_to_object.nominal().trace(k_i)?.pos)
    }

    /// Source-1 signal momentum whose ray lands on detector position `pos`.
    pub fn signal_for_detector_point(&self, pos: [T; 2], which: SourceId) -> Result<PhotonMomentum<T>> {
        let arm = self.signal_arm(which).nominal();
        let tx = invert_axis(&arm.axis_map(0), pos[0], "signal arm")?;
        let ty = invert_axis(&arm.axis_map(1), pos[1], "signal arm")?;
        let k = PhotonMomentum::from_slopes(tx, ty, self.signal_omega());
        arm.trace(&k)?;
        Ok(k)
    }

    /// Source-2 signal momentum `k_s2^ρ` that reaches the detector point of `k_s1`.
    pub fn match_signal_momentum(&self, k_s1: &PhotonMomentum<T>) -> Result<PhotonMomentum<T>> {
        let pos = self.detector_point(k_s1, SourceId::First)?;
        let arm = self.arms.signal2.nominal();
        let tx = invert_axis(&arm.axis_map(0), pos[0], "signal arm 2")?;
        let ty = invert_axis(&arm.axis_map(1), pos[1], "signal arm 2")?;
        Ok(PhotonMomentum::from_slopes(tx, ty, k_s1.omega))
    }

    /// Idler momentum `k_i2^ρ` with which the source-1 idler `k_i1` passes
    /// through source 2.
    pub fn match_idler_momentum(&self, k_i1: &PhotonMomentum<T>) -> Result<PhotonMomentum<T>> {
        let ray = self.idler_path().nominal().trace(k_i1)?;
        Ok(PhotonMomentum::from_slopes(ray.slope[0], ray.slope[1], k_i1.omega))
    }

    /// Lateral magnification from the object plane to the detector.
    pub fn magnification(&self) -> T {
        let det = self.arms.signal1.nominal().axis_map(0).b;
        let obj = self.arms.idler_to_object.nominal().axis_map(0).b;
        (det * self.signal_wavelength / (obj * self.idler_wavelength)).abs()
    }

    /// Phase difference between the two source-pair amplitudes.
    ///
    /// The aligned configuration is the reference: its own path-length phases
    /// are subtracted, so an aligned setup gives exactly `object_phase`. Lens
    /// shifts contribute their excess lens phase along the nominal rays.
    pub fn total_phase_difference(&self, pair: &PairMomenta<T>, object_phase: T) -> Result<T> {
        let c = T::lit(SPEED_OF_LIGHT);
        let e_s1 = self.arms.signal1.screen_path(&pair.signal1)?;
        let e_s2 = self.arms.signal2.screen_path(&pair.signal2)?;
        let e_i = self.idler_path().screen_path(&pair.idler1)?;
        Ok(object_phase + self.pump_phase[0] - self.pump_phase[1]
            + pair.signal1.omega / c * (e_s1 - e_s2)
            + pair.idler1.omega / c * e_i)
    }

    pub fn pair_for(&self, k_s1: PhotonMomentum<T>, k_i1: PhotonMomentum<T>) -> Result<PairMomenta<T>> {
        Ok(PairMomenta {
            signal1: k_s1,
            idler1: k_i1,
            signal2: self.match_signal_momentum(&k_s1)?,
            idler2: self.match_idler_momentum(&k_i1)?,
        })
    }

    /// Linearized geometry used by the integration and convolution engines.
    pub fn linearize(&self) -> Result<LinearOptics<T>> {
        let nominal = self.nominal();
        let idler = self.idler_path();
        let per_axis = |arm: &ArmPath<T>| -> Result<T> {
            let (mx, my) = (arm.axis_map(0), arm.axis_map(1));
            if mx.b != my.b {
                return Err(Error::UnsupportedMisalignment("arm is not rotationally symmetric".into()));
            }
            if mx.b == T::zero() {
                return Err(Error::NoSolution("arm maps every direction to one point".into()));
            }
            Ok(mx.b)
        };
        let idler_nominal = idler.nominal();
        let idler_map = idler_nominal.axis_map(0);
        Ok(LinearOptics {
            signal_omega: self.signal_omega(),
            idler_omega: self.idler_omega(),
            detector_per_slope: [per_axis(&nominal.arms.signal1)?, per_axis(&nominal.arms.signal2)?],
            object_per_slope: per_axis(&nominal.arms.idler_to_object)?,
            idler_slope_at_source2: idler_map.d,
            signal_screens: [self.arms.signal1.screens(), self.arms.signal2.screens()],
            idler_screens: idler.screens(),
            phase_offset: self.pump_phase[0] - self.pump_phase[1],
        })
    }
}

/// Nominal linear maps plus lens-shift phase screens of a setup.
///
/// Positions are `per_slope * slope` in both transverse axes.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOptics<T> {
    pub signal_omega: T,
    pub idler_omega: T,
    pub detector_per_slope: [T; 2],
    pub object_per_slope: T,
    /// Idler slope at the source-2 plane per source-1 idler slope.
    pub idler_slope_at_source2: T,
    pub signal_screens: [Vec<LensScreen<T>>; 2],
    pub idler_screens: Vec<LensScreen<T>>,
    pub phase_offset: T,
}

impl<T: Real> LinearOptics<T> {
    pub fn signal_at_detector(&self, pos: [T; 2], which: SourceId) -> PhotonMomentum<T> {
        let b = self.detector_per_slope[which as usize];
        PhotonMomentum::from_slopes(pos[0] / b, pos[1] / b, self.signal_omega)
    }

    pub fn object_point(&self, k_i: &PhotonMomentum<T>) -> [T; 2] {
        let s = k_i.slopes();
        [self.object_per_slope * s[0], self.object_per_slope * s[1]]
    }

    pub fn idler_at_source2(&self, k_i1: &PhotonMomentum<T>) -> PhotonMomentum<T> {
        let s = k_i1.slopes();
        let d = self.idler_slope_at_source2;
        PhotonMomentum::from_slopes(d * s[0], d * s[1], k_i1.omega)
    }

    pub fn is_aligned(&self) -> bool {
        self.signal_screens.iter().all(Vec::is_empty) && self.idler_screens.is_empty()
    }

    /// System phase of a pair, without the object phase.
    pub fn phase(&self, k_s1: &PhotonMomentum<T>, k_s2: &PhotonMomentum<T>, k_i1: &PhotonMomentum<T>) -> T {
        let mut phase = self.phase_offset;
        if self.is_aligned() {
            return phase;
        }
        let c = T::lit(SPEED_OF_LIGHT);
        let sum = |screens: &[LensScreen<T>], k: &PhotonMomentum<T>| {
            let s = k.slopes();
            screens.iter().map(|sc| sc.excess_path(s)).fold(T::zero(), |a, b| a + b)
        };
        let e_s = sum(&self.signal_screens[0], k_s1) - sum(&self.signal_screens[1], k_s2);
        phase = phase + k_s1.omega / c * e_s;
        phase + k_i1.omega / c * sum(&self.idler_screens, k_i1)
    }
}
