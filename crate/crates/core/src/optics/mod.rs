//! Paraxial ray model of the interferometer arms.
//!
//! Rays start on axis at the source plane (point-source assumption) with the
//! slopes of the photon momentum and are carried through free-space gaps and
//! ideal thin lenses. Optical path length is accumulated along the way; the
//! thin lens contributes the equivalent path `-|x - shift|² / (2 f)` of its
//! parabolic phase.
//!
//! The interference engine uses the *nominal* geometry of a setup (every lens
//! shift removed) for all positions and momentum matching. Transverse lens
//! shifts enter only as phase screens: the extra lens phase of the shifted
//! lens evaluated along the nominal ray, relative to the aligned lens.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::source::PhotonMomentum;

mod setup;

pub use setup::{Arms, Detector, LinearOptics, OpticalSetup, PairMomenta, SourceId};

/// Largest ray slope (rad) accepted by the thin-lens model.
pub const PARAXIAL_LIMIT: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct LensElement<T> {
    pub name: String,
    pub focal_length: T,
    /// Transverse displacement `(dx, dy)` of the lens axis (m).
    pub shift: [T; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element<T> {
    Gap(T),
    Lens(LensElement<T>),
}

/// Elements from a source plane to a terminal plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmPath<T> {
    pub elements: Vec<Element<T>>,
    /// Amplitude transmittance of the arm.
    pub transmittance: T,
}

/// Ray at a plane: transverse position (m), slopes (rad) and optical path (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayState<T> {
    pub pos: [T; 2],
    pub slope: [T; 2],
    pub path: T,
}

impl<T: Real> RayState<T> {
    pub fn on_axis(slope: [T; 2]) -> Self {
        Self { pos: [T::zero(); 2], slope, path: T::zero() }
    }

    pub fn slope_norm(&self) -> T {
        (self.slope[0] * self.slope[0] + self.slope[1] * self.slope[1]).sqrt()
    }

    pub fn propagate(&mut self, d: T) {
        let t2 = self.slope[0] * self.slope[0] + self.slope[1] * self.slope[1];
        self.pos[0] = self.pos[0] + d * self.slope[0];
        self.pos[1] = self.pos[1] + d * self.slope[1];
        self.path = self.path + d * (T::one() + t2 / T::lit(2.0));
    }

    pub fn refract(&mut self, lens: &LensElement<T>) {
        let rx = self.pos[0] - lens.shift[0];
        let ry = self.pos[1] - lens.shift[1];
        self.slope[0] = self.slope[0] - rx / lens.focal_length;
        self.slope[1] = self.slope[1] - ry / lens.focal_length;
        self.path = self.path - (rx * rx + ry * ry) / (T::lit(2.0) * lens.focal_length);
    }
}

fn check_paraxial<T: Real>(slope: T) -> Result<()> {
    if slope.abs() >= T::lit(PARAXIAL_LIMIT) || !slope.is_finite() {
        return Err(Error::Paraxial { slope: slope.as_f64(), limit: PARAXIAL_LIMIT });
    }
    Ok(())
}

/// Per-axis ray-transfer matrix `[[a, b], [c, d]]` plus the affine offset
/// produced by shifted lenses: `x' = a x + b θ + e`, `θ' = c x + d θ + g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisMap<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
    pub e: T,
    pub g: T,
}

impl<T: Real> AxisMap<T> {
    pub fn identity() -> Self {
        Self { a: T::one(), b: T::zero(), c: T::zero(), d: T::one(), e: T::zero(), g: T::zero() }
    }

    fn then_gap(self, len: T) -> Self {
        Self {
            a: self.a + len * self.c,
            b: self.b + len * self.d,
            c: self.c,
            d: self.d,
            e: self.e + len * self.g,
            g: self.g,
        }
    }

    fn then_lens(self, f: T, shift: T) -> Self {
        Self {
            a: self.a,
            b: self.b,
            c: self.c - self.a / f,
            d: self.d - self.b / f,
            e: self.e,
            g: self.g - (self.e - shift) / f,
        }
    }
}

impl<T: Real> ArmPath<T> {
    pub fn new(elements: Vec<Element<T>>) -> Self {
        Self { elements, transmittance: T::one() }
    }

    pub fn lenses(&self) -> impl Iterator<Item = &LensElement<T>> {
        self.elements.iter().filter_map(|e| match e {
            Element::Lens(l) => Some(l),
            Element::Gap(_) => None,
        })
    }

    pub fn lens_mut(&mut self, name: &str) -> Option<&mut LensElement<T>> {
        self.elements.iter_mut().find_map(|e| match e {
            Element::Lens(l) if l.name == name => Some(l),
            _ => None,
        })
    }

    /// Axial position of each lens measured from the arm's source plane.
    pub fn lens_positions(&self) -> Vec<(String, T)> {
        let mut z = T::zero();
        let mut out = Vec::new();
        for e in &self.elements {
            match e {
                Element::Gap(d) => z = z + *d,
                Element::Lens(l) => out.push((l.name.clone(), z)),
            }
        }
        out
    }

    pub fn total_length(&self) -> T {
        self.elements.iter().fold(T::zero(), |z, e| match e {
            Element::Gap(d) => z + *d,
            Element::Lens(_) => z,
        })
    }

    /// Same arm with every lens shift removed.
    pub fn nominal(&self) -> Self {
        let mut out = self.clone();
        for e in &mut out.elements {
            if let Element::Lens(l) = e {
                l.shift = [T::zero(); 2];
            }
        }
        out
    }

    pub fn is_aligned(&self) -> bool {
        self.lenses().all(|l| l.shift[0] == T::zero() && l.shift[1] == T::zero())
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut elements = self.elements.clone();
        elements.extend(other.elements.iter().cloned());
        Self { elements, transmittance: self.transmittance * other.transmittance }
    }

    /// Carries `ray` through the arm.
    pub fn trace_from(&self, mut ray: RayState<T>) -> Result<RayState<T>> {
        check_paraxial(ray.slope_norm())?;
        for e in &self.elements {
            match e {
                Element::Gap(d) => ray.propagate(*d),
                Element::Lens(l) => {
                    ray.refract(l);
                    check_paraxial(ray.slope_norm())?;
                }
            }
        }
        Ok(ray)
    }

    /// Traces the ray of momentum `k` emitted on axis at the source plane.
    pub fn trace(&self, k: &PhotonMomentum<T>) -> Result<RayState<T>> {
        self.trace_from(RayState::on_axis(k.slopes()))
    }

    /// Excess optical path of the lens shifts, evaluated along the ray of the
    /// nominal (shift-free) arm that starts in state `ray`.
    pub fn screen_path_from(&self, mut ray: RayState<T>) -> Result<T> {
        check_paraxial(ray.slope_norm())?;
        let two = T::lit(2.0);
        let mut excess = T::zero();
        for e in &self.elements {
            match e {
                Element::Gap(d) => ray.propagate(*d),
                Element::Lens(l) => {
                    let (x, y) = (ray.pos[0], ray.pos[1]);
                    if l.shift != [T::zero(); 2] {
                        let (rx, ry) = (x - l.shift[0], y - l.shift[1]);
                        excess = excess + ((x * x + y * y) - (rx * rx + ry * ry)) / (two * l.focal_length);
                    }
                    // The ray continues along the aligned lens.
                    ray.slope[0] = ray.slope[0] - x / l.focal_length;
                    ray.slope[1] = ray.slope[1] - y / l.focal_length;
                    check_paraxial(ray.slope_norm())?;
                }
            }
        }
        Ok(excess)
    }

    pub fn screen_path(&self, k: &PhotonMomentum<T>) -> Result<T> {
        self.screen_path_from(RayState::on_axis(k.slopes()))
    }

    /// Affine ray-transfer map of one transverse axis (0 = x, 1 = y).
    pub fn axis_map(&self, axis: usize) -> AxisMap<T> {
        self.elements.iter().fold(AxisMap::identity(), |m, e| match e {
            Element::Gap(d) => m.then_gap(*d),
            Element::Lens(l) => m.then_lens(l.focal_length, l.shift[axis]),
        })
    }

    /// Linear screens of the shifted lenses: for each, the map from source
    /// slope to nominal lens-plane position, the shift and the focal length.
    pub fn screens(&self) -> Vec<LensScreen<T>> {
        let mut map = AxisMap::identity();
        let mut out = Vec::new();
        for e in &self.elements {
            match e {
                Element::Gap(d) => map = map.then_gap(*d),
                Element::Lens(l) => {
                    if l.shift != [T::zero(); 2] {
                        out.push(LensScreen {
                            position_per_slope: map.b,
                            shift: l.shift,
                            focal_length: l.focal_length,
                        });
                    }
                    map = map.then_lens(l.focal_length, T::zero());
                }
            }
        }
        out
    }
}

/// Phase screen of one shifted lens in the linearized geometry: a ray leaving
/// the source with slope `θ` crosses the lens at `position_per_slope * θ` and
/// picks up the excess path `(2 x·s - |s|²) / (2 f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensScreen<T> {
    pub position_per_slope: T,
    pub shift: [T; 2],
    pub focal_length: T,
}

impl<T: Real> LensScreen<T> {
    pub fn excess_path(&self, slope: [T; 2]) -> T {
        let x = self.position_per_slope * slope[0];
        let y = self.position_per_slope * slope[1];
        let s = self.shift;
        (T::lit(2.0) * (x * s[0] + y * s[1]) - (s[0] * s[0] + s[1] * s[1])) / (T::lit(2.0) * self.focal_length)
    }
}

/// Gap, lens, gap: maps source angles onto positions in the back focal plane.
pub fn far_field_stage<T: Real>(name: &str, f: T) -> Vec<Element<T>> {
    vec![
        Element::Gap(f),
        Element::Lens(LensElement { name: name.to_string(), focal_length: f, shift: [T::zero(); 2] }),
        Element::Gap(f),
    ]
}

/// Single-lens unit-magnification imaging relay (2f-2f); inverts the image.
pub fn relay_2f<T: Real>(name: &str, f: T) -> Vec<Element<T>> {
    let two_f = T::lit(2.0) * f;
    vec![
        Element::Gap(two_f),
        Element::Lens(LensElement { name: name.to_string(), focal_length: f, shift: [T::zero(); 2] }),
        Element::Gap(two_f),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::omega_from_wavelength;
    use proptest::prelude::*;

    fn arm(f: f64) -> ArmPath<f64> {
        ArmPath::new(far_field_stage("L", f))
    }

    #[test]
    fn focal_plane_maps_angle_to_position() {
        let omega = omega_from_wavelength(1550e-9);
        let k = PhotonMomentum::from_slopes(1e-3, 0.0, omega);
        let r = arm(75e-3).trace(&k).unwrap();
        assert!((r.pos[0] - 75e-6).abs() < 1e-15);
        assert!(r.slope[0].abs() < 1e-15);
    }

    #[test]
    fn axial_ray_stays_on_axis_with_geometric_length() {
        let omega: f64 = omega_from_wavelength(810e-9);
        let mut a = ArmPath::new(relay_2f("Ls", 75e-3));
        a.elements.extend(far_field_stage("LD", 150e-3));
        let r = a.trace(&PhotonMomentum::collinear(omega)).unwrap();
        assert_eq!(r.pos, [0.0, 0.0]);
        assert!((r.path - a.total_length()).abs() < 1e-15);
    }

    #[test]
    fn steep_rays_are_rejected() {
        let omega: f64 = omega_from_wavelength(810e-9);
        let k = PhotonMomentum::from_slopes(0.25, 0.0, omega);
        assert!(matches!(arm(0.1).trace(&k), Err(Error::Paraxial { .. })));
    }

    #[test]
    fn shifted_lens_phase_on_axis() {
        // Arm ending at the lens plane: the only difference is the lens phase.
        let (f, s, lambda) = (75e-3, 0.3e-3, 1550e-9);
        let lens = |shift: f64| LensElement { name: "L".into(), focal_length: f, shift: [shift, 0.0] };
        let shifted = ArmPath::new(vec![Element::Gap(f), Element::Lens(lens(s))]);
        let aligned = ArmPath::new(vec![Element::Gap(f), Element::Lens(lens(0.0))]);
        let k = PhotonMomentum::collinear(omega_from_wavelength(lambda));
        let dl = shifted.trace(&k).unwrap().path - aligned.trace(&k).unwrap().path;
        let dphi = 2.0 * std::f64::consts::PI * dl / lambda;
        // π s²/(f λ) = 2.432 rad in magnitude; the converging lens retards
        // off-center rays less, so the sign is negative.
        assert!((dphi.abs() - 2.432).abs() < 1e-3, "{dphi}");
        assert!(dphi < 0.0);
    }

    #[test]
    fn screen_matches_traced_lens_phase_across_the_aperture() {
        let (f, s, lambda) = (75e-3, 0.3e-3, 1550e-9);
        let omega = omega_from_wavelength(lambda);
        let lens = |shift: f64| LensElement { name: "L".into(), focal_length: f, shift: [shift, 0.0] };
        let shifted = ArmPath::new(vec![Element::Gap(f), Element::Lens(lens(s))]);
        let aligned = shifted.nominal();
        for i in -20..=20 {
            let slope = i as f64 * 1e-3;
            let k = PhotonMomentum::from_slopes(slope, 0.0, omega);
            let traced = shifted.trace(&k).unwrap().path - aligned.trace(&k).unwrap().path;
            let screen = shifted.screen_path(&k).unwrap();
            let x_l = aligned.trace(&k).unwrap().pos[0];
            // Lens phase difference π(2 x s - s²)/(f λ) written as a path.
            let analytic = (2.0 * x_l * s - s * s) / (2.0 * f);
            let to_phase = 2.0 * std::f64::consts::PI / lambda;
            assert!(((traced - analytic) * to_phase).abs() < 1e-6);
            assert!(((screen - analytic) * to_phase).abs() < 1e-6);
        }
    }

    #[test]
    fn axis_map_agrees_with_trace() {
        let mut a = ArmPath::new(relay_2f("Ls", 75e-3));
        a.elements.extend(far_field_stage("LD", 150e-3));
        a.lens_mut("LD").unwrap().shift = [1e-4, -2e-4];
        let m = a.axis_map(0);
        let omega: f64 = omega_from_wavelength(810e-9);
        let k = PhotonMomentum::from_slopes(3e-3, 0.0, omega);
        let r = a.trace(&k).unwrap();
        let t = k.slopes()[0];
        assert!((r.pos[0] - (m.b * t + m.e)).abs() < 1e-15);
        assert!((r.slope[0] - (m.d * t + m.g)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn aligned_trace_is_linear(t1 in -0.05..0.05f64, t2 in -0.05..0.05f64, u1 in -0.05..0.05f64, u2 in -0.05..0.05f64) {
            let mut a = ArmPath::new(relay_2f("Ls", 75e-3));
            a.elements.extend(far_field_stage("LD", 150e-3));
            let go = |tx: f64, ty: f64| a.trace_from(RayState::on_axis([tx, ty])).unwrap().pos;
            let p = go(t1, t2);
            let q = go(u1, u2);
            let s = go(t1 + u1, t2 + u2);
            for i in 0..2 {
                let scale = s[i].abs().max(1e-9);
                prop_assert!((s[i] - p[i] - q[i]).abs() <= 1e-9 * scale + 1e-18);
            }
        }

        #[test]
        fn free_space_never_shortens_the_path(d in 0.0..1.0f64, tx in -0.19..0.19f64) {
            let mut r = RayState::on_axis([tx, 0.0]);
            let before = r.path;
            r.propagate(d);
            prop_assert!(r.path >= before);
        }
    }
}
