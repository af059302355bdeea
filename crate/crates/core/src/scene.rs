//! Objects in the idler focal plane: amplitude transmittance and phase.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::{read_pgm, write_pgm};
use crate::scalar::Real;

/// Transmission of one object point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission<T> {
    pub amplitude: T,
    pub phase: T,
}

impl<T: Real> Transmission<T> {
    pub fn open() -> Self {
        Self { amplitude: T::one(), phase: T::zero() }
    }

    pub fn opaque() -> Self {
        Self { amplitude: T::zero(), phase: T::zero() }
    }

    pub fn field(&self) -> Complex<T> {
        Complex::from_polar(self.amplitude, self.phase)
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]` (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub x0: T,
    pub x1: T,
    pub y0: T,
    pub y1: T,
    pub value: Transmission<T>,
}

impl<T: Real> Rect<T> {
    pub fn centered(cx: T, cy: T, width: T, height: T, value: Transmission<T>) -> Self {
        let (hw, hh) = (width / T::lit(2.0), height / T::lit(2.0));
        Self { x0: cx - hw, x1: cx + hw, y0: cy - hh, y1: cy + hh, value }
    }

    pub fn area(&self) -> T {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn contains(&self, p: [T; 2], closed: bool) -> bool {
        if closed {
            p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
        } else {
            p[0] > self.x0 && p[0] < self.x1 && p[1] > self.y0 && p[1] < self.y1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskContent<T> {
    /// Background value with rectangles painted over it; later rectangles win.
    /// A boundary point belongs to whichever side is less transmissive.
    Shapes { background: Transmission<T>, rects: Vec<Rect<T>> },
    /// Row-major samples at pixel centers; pixel `(0, 0)` is the corner at
    /// `(-width/2, -height/2)`.
    Raster { amplitude: Grid<T>, phase: Option<Grid<T>>, pixel: T },
}

/// Complex transmission of the imaged object over a centered rectangular
/// extent. Outside the extent the object is absent (`t = 1`, `φ = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMask<T> {
    pub width: T,
    pub height: T,
    pub content: MaskContent<T>,
}

fn um<T: Real>(x: f64) -> T {
    T::lit(x * 1e-6)
}

/// Center-to-center distance of the vertical bars of [`bar_target`] (m).
pub const BAR_SEPARATION: f64 = 1200e-6;

/// Object-plane rows of [`bar_target`] crossed only by the vertical bars (m).
pub const VERTICAL_BAR_BAND: (f64, f64) = (700e-6, 950e-6);

/// Standard bar target: three horizontal opaque bars 200 µm wide with 200 µm
/// gaps and two vertical bars 200 µm wide whose centers are 1200 µm apart, on
/// a 4 x 4 mm² transparent field.
pub fn bar_target<T: Real>() -> ObjectMask<T> {
    let opaque = Transmission::opaque();
    let mut rects = Vec::new();
    for cy in [-400.0, 0.0, 400.0] {
        rects.push(Rect::centered(T::zero(), um(cy), um(2000.0), um(200.0), opaque));
    }
    for cx in [-BAR_SEPARATION * 5e5, BAR_SEPARATION * 5e5] {
        rects.push(Rect::centered(um(cx), T::zero(), um(200.0), um(2000.0), opaque));
    }
    ObjectMask {
        width: um(4000.0),
        height: um(4000.0),
        content: MaskContent::Shapes { background: Transmission::open(), rects },
    }
}

/// Opaque field with three transparent vertical slits of width `d` separated
/// by gaps of `d`, centered at `x = -2d, 0, 2d`.
///
/// The field extends 3 mm beyond the outer slit edges and is 4 mm tall.
pub fn three_slit<T: Real>(d: T) -> Result<ObjectMask<T>> {
    if !(d > T::zero()) || !d.is_finite() {
        return Err(Error::Range(format!("slit width must be positive, got {d}")));
    }
    let height = um::<T>(4000.0);
    let rects = [-2.0, 0.0, 2.0]
        .iter()
        .map(|&c| Rect::centered(T::lit(c) * d, T::zero(), d, height, Transmission::open()))
        .collect();
    Ok(ObjectMask {
        width: T::lit(5.0) * d + um(6000.0),
        height,
        content: MaskContent::Shapes { background: Transmission::opaque(), rects },
    })
}

impl<T: Real> ObjectMask<T> {
    pub fn uniform(width: T, height: T, value: Transmission<T>) -> Self {
        Self { width, height, content: MaskContent::Shapes { background: value, rects: Vec::new() } }
    }

    pub fn from_raster(amplitude: Grid<T>, phase: Option<Grid<T>>, pixel: T) -> Result<Self> {
        if let Some(p) = &phase {
            amplitude.check_same_dims(p)?;
        }
        if !(pixel > T::zero()) {
            return Err(Error::Range("mask pixel size must be positive".into()));
        }
        if amplitude.as_slice().iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::Range("mask transmittance outside [0, 1]".into()));
        }
        Ok(Self {
            width: pixel * T::count(amplitude.nx()),
            height: pixel * T::count(amplitude.ny()),
            content: MaskContent::Raster { amplitude, phase, pixel },
        })
    }

    pub fn contains(&self, p: [T; 2]) -> bool {
        let (hw, hh) = (self.width / T::lit(2.0), self.height / T::lit(2.0));
        p[0] >= -hw && p[0] <= hw && p[1] >= -hh && p[1] <= hh
    }

    /// True when some point carries a nonzero phase.
    pub fn has_phase(&self) -> bool {
        match &self.content {
            MaskContent::Shapes { background, rects } => {
                background.phase != T::zero() || rects.iter().any(|r| r.value.phase != T::zero())
            }
            MaskContent::Raster { phase, .. } => {
                phase.as_ref().is_some_and(|p| p.as_slice().iter().any(|&v| v != T::zero()))
            }
        }
    }

    /// Transmission at an object-plane point. Rasters interpolate the
    /// amplitude bilinearly and take the phase from the nearest pixel.
    pub fn sample(&self, p: [T; 2]) -> Transmission<T> {
        if !self.contains(p) {
            return Transmission::open();
        }
        let v = match &self.content {
            MaskContent::Shapes { background, rects } => {
                let mut value = *background;
                for r in rects {
                    let closed = r.value.amplitude <= background.amplitude;
                    if r.contains(p, closed) {
                        value = r.value;
                    }
                }
                value
            }
            MaskContent::Raster { amplitude, phase, pixel } => {
                let fx = (p[0] + self.width / T::lit(2.0)) / *pixel - T::lit(0.5);
                let fy = (p[1] + self.height / T::lit(2.0)) / *pixel - T::lit(0.5);
                let amp = bilinear(amplitude, fx, fy);
                let phase = phase.as_ref().map_or(T::zero(), |g| {
                    let ix = clamp_index(fx.round(), g.nx());
                    let iy = clamp_index(fy.round(), g.ny());
                    g.get(ix, iy)
                });
                Transmission { amplitude: amp, phase }
            }
        };
        Transmission { amplitude: v.amplitude.max(T::zero()).min(T::one()), phase: v.phase }
    }

    /// Mean complex transmission `t e^{iφ}` over the rectangle of half sizes
    /// `half` around `center`. Exact for shape masks; rasters are averaged on
    /// an 8 x 8 point lattice.
    pub fn area_average(&self, center: [T; 2], half: [T; 2]) -> Complex<T> {
        let (x0, x1) = (center[0] - half[0], center[0] + half[0]);
        let (y0, y1) = (center[1] - half[1], center[1] + half[1]);
        let area = (x1 - x0) * (y1 - y0);
        match &self.content {
            MaskContent::Shapes { rects, .. } => {
                let (hw, hh) = (self.width / T::lit(2.0), self.height / T::lit(2.0));
                let mut xs = vec![x0, x1, -hw, hw];
                let mut ys = vec![y0, y1, -hh, hh];
                for r in rects {
                    xs.extend([r.x0, r.x1]);
                    ys.extend([r.y0, r.y1]);
                }
                let clip = |v: &mut Vec<T>, lo: T, hi: T| {
                    v.retain(|&x| x >= lo && x <= hi);
                    v.sort_by(|a, b| a.partial_cmp(b).expect("finite edges"));
                    v.dedup();
                };
                clip(&mut xs, x0, x1);
                clip(&mut ys, y0, y1);
                let mut acc = Complex::new(T::zero(), T::zero());
                for wy in ys.windows(2) {
                    for wx in xs.windows(2) {
                        let cell = (wx[1] - wx[0]) * (wy[1] - wy[0]);
                        let mid = [(wx[0] + wx[1]) / T::lit(2.0), (wy[0] + wy[1]) / T::lit(2.0)];
                        acc = acc + self.sample(mid).field() * cell;
                    }
                }
                acc / area
            }
            MaskContent::Raster { .. } => {
                let n = 8;
                let mut acc = Complex::new(T::zero(), T::zero());
                for j in 0..n {
                    for i in 0..n {
                        let fx = (T::count(i) + T::lit(0.5)) / T::count(n);
                        let fy = (T::count(j) + T::lit(0.5)) / T::count(n);
                        acc = acc + self.sample([x0 + fx * (x1 - x0), y0 + fy * (y1 - y0)]).field();
                    }
                }
                acc / T::count(n * n)
            }
        }
    }

    /// Area averages over the pixels of a separable grid: pixel `(ix, iy)` is
    /// centered at `(xs[ix], ys[iy])` with half sizes `half`. Pixels crossed by
    /// no shape edge are uniform and read at their center.
    pub fn pixel_averages(&self, xs: &[T], ys: &[T], half: [T; 2]) -> Grid<Complex<T>> {
        let MaskContent::Shapes { rects, .. } = &self.content else {
            return Grid::from_fn(xs.len(), ys.len(), |ix, iy| self.area_average([xs[ix], ys[iy]], half));
        };
        let (hw, hh) = (self.width / T::lit(2.0), self.height / T::lit(2.0));
        let mut x_edges = vec![-hw, hw];
        let mut y_edges = vec![-hh, hh];
        for r in rects {
            x_edges.extend([r.x0, r.x1]);
            y_edges.extend([r.y0, r.y1]);
        }
        let crossed = |edges: &[T], c: T, h: T| edges.iter().any(|&e| e > c - h && e < c + h);
        let col_edge: Vec<bool> = xs.iter().map(|&x| crossed(&x_edges, x, half[0])).collect();
        let row_edge: Vec<bool> = ys.iter().map(|&y| crossed(&y_edges, y, half[1])).collect();
        Grid::from_fn(xs.len(), ys.len(), |ix, iy| {
            let c = [xs[ix], ys[iy]];
            if col_edge[ix] || row_edge[iy] {
                self.area_average(c, half)
            } else {
                self.sample(c).field()
            }
        })
    }

    /// Samples the mask at the centers of an `nx x ny` raster of the given
    /// pixel size centered on the origin.
    pub fn rasterize(&self, pixel: T, nx: usize, ny: usize) -> (Grid<T>, Grid<T>) {
        let x0 = -pixel * T::count(nx) / T::lit(2.0);
        let y0 = -pixel * T::count(ny) / T::lit(2.0);
        let at = |ix: usize, iy: usize| {
            self.sample([x0 + (T::count(ix) + T::lit(0.5)) * pixel, y0 + (T::count(iy) + T::lit(0.5)) * pixel])
        };
        (Grid::from_fn(nx, ny, |x, y| at(x, y).amplitude), Grid::from_fn(nx, ny, |x, y| at(x, y).phase))
    }
}

fn clamp_index<T: Real>(f: T, n: usize) -> usize {
    if f <= T::zero() {
        0
    } else {
        f.to_usize().unwrap_or(n - 1).min(n - 1)
    }
}

fn bilinear<T: Real>(g: &Grid<T>, fx: T, fy: T) -> T {
    let (nx, ny) = g.dims();
    let cx = fx.max(T::zero()).min(T::count(nx - 1));
    let cy = fy.max(T::zero()).min(T::count(ny - 1));
    let ix = clamp_index(cx.floor(), nx.saturating_sub(1).max(1)).min(nx.saturating_sub(2));
    let iy = clamp_index(cy.floor(), ny.saturating_sub(1).max(1)).min(ny.saturating_sub(2));
    let (ix1, iy1) = ((ix + 1).min(nx - 1), (iy + 1).min(ny - 1));
    let tx = cx - T::count(ix);
    let ty = cy - T::count(iy);
    let one = T::one();
    (g.get(ix, iy) * (one - tx) + g.get(ix1, iy) * tx) * (one - ty)
        + (g.get(ix, iy1) * (one - tx) + g.get(ix1, iy1) * tx) * ty
}

/// Encodes a phase in `(-π, π]` as a 16-bit level.
pub fn phase_to_level(phase: f64) -> u16 {
    let tau = 2.0 * std::f64::consts::PI;
    let wrapped = phase - tau * ((phase + std::f64::consts::PI) / tau).ceil() + tau;
    let v = ((wrapped + std::f64::consts::PI) * 65536.0 / tau).round() - 1.0;
    v.clamp(0.0, 65535.0) as u16
}

pub fn level_to_phase(level: u16) -> f64 {
    (level as f64 + 1.0) * 2.0 * std::f64::consts::PI / 65536.0 - std::f64::consts::PI
}

/// Reads a mask from a 16-bit PGM of transmittance levels and an optional
/// companion PGM of phase levels.
pub fn load_mask<T: Real>(path: &Path, phase_path: Option<&Path>, pixel: T) -> Result<ObjectMask<T>> {
    let (levels, maxval) = read_pgm(path)?;
    let amplitude = levels.map(|v| T::lit(v as f64 / maxval as f64));
    let phase = match phase_path {
        Some(p) => {
            let (levels, maxval) = read_pgm(p)?;
            if maxval != 65535 {
                return Err(Error::Range(format!("phase maps must use maxval 65535, got {maxval}")));
            }
            Some(levels.map(|v| T::lit(level_to_phase(v))))
        }
        None => None,
    };
    ObjectMask::from_raster(amplitude, phase, pixel)
}

/// Writes the transmittance (and, if the mask has one, the phase) of a mask
/// rasterized at the given pixel size. The phase file is written only when
/// `phase_path` is given.
pub fn save_mask<T: Real>(mask: &ObjectMask<T>, path: &Path, phase_path: Option<&Path>, pixel: T) -> Result<()> {
    let nx = (mask.width / pixel).round().to_usize().unwrap_or(0).max(1);
    let ny = (mask.height / pixel).round().to_usize().unwrap_or(0).max(1);
    let (amp, phase) = mask.rasterize(pixel, nx, ny);
    write_pgm(path, &amp.map(|v| (v.as_f64().clamp(0.0, 1.0) * 65535.0).round() as u16))?;
    if let Some(p) = phase_path {
        write_pgm(p, &phase.map(|v| phase_to_level(v.as_f64())))?;
    }
    Ok(())
}

/// Object selected by a descriptor string: `bars`, `open`, `slits:<d_um>`
/// or `file:<path>[,pixel_um=<p>][,phase=<path>]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectSpec {
    Bars,
    Open,
    Slits { d_um: f64 },
    File { path: PathBuf, pixel_um: f64, phase: Option<PathBuf> },
}

/// Mask pixel size assumed for files without an explicit one (µm).
pub const DEFAULT_MASK_PIXEL_UM: f64 = 5.0;

impl FromStr for ObjectSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("object `{s}`: {m}"));
        match s.split_once(':') {
            None if s == "bars" => Ok(Self::Bars),
            None if s == "open" => Ok(Self::Open),
            Some(("slits", d)) => {
                let d_um: f64 = d.trim_end_matches("um").parse().map_err(|_| bad("slit width is not a number"))?;
                if !(d_um > 0.0 && d_um.is_finite()) {
                    return Err(bad("slit width must be positive"));
                }
                Ok(Self::Slits { d_um })
            }
            Some(("file", rest)) => {
                let mut parts = rest.split(',');
                let path = PathBuf::from(parts.next().filter(|p| !p.is_empty()).ok_or_else(|| bad("missing path"))?);
                let mut pixel_um = DEFAULT_MASK_PIXEL_UM;
                let mut phase = None;
                for opt in parts {
                    match opt.split_once('=') {
                        Some(("pixel_um", v)) => pixel_um = v.parse().map_err(|_| bad("bad pixel_um"))?,
                        Some(("phase", v)) => phase = Some(PathBuf::from(v)),
                        _ => return Err(bad(&format!("unknown option `{opt}`"))),
                    }
                }
                Ok(Self::File { path, pixel_um, phase })
            }
            _ => Err(bad("expected bars, open, slits:<d_um> or file:<path>")),
        }
    }
}

impl fmt::Display for ObjectSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bars => write!(f, "bars"),
            Self::Open => write!(f, "open"),
            Self::Slits { d_um } => write!(f, "slits:{d_um}"),
            Self::File { path, pixel_um, phase } => {
                write!(f, "file:{},pixel_um={pixel_um}", path.display())?;
                if let Some(p) = phase {
                    write!(f, ",phase={}", p.display())?;
                }
                Ok(())
            }
        }
    }
}

impl ObjectSpec {
    pub fn build<T: Real>(&self) -> Result<ObjectMask<T>> {
        match self {
            Self::Bars => Ok(bar_target()),
            Self::Open => Ok(ObjectMask::uniform(T::lit(1.0), T::lit(1.0), Transmission::open())),
            Self::Slits { d_um } => three_slit(T::lit(d_um * 1e-6)),
            Self::File { path, pixel_um, phase } => load_mask(path, phase.as_deref(), T::lit(pixel_um * 1e-6)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn object_descriptors() {
        assert_eq!("bars".parse::<ObjectSpec>().unwrap(), ObjectSpec::Bars);
        assert_eq!("slits:128".parse::<ObjectSpec>().unwrap(), ObjectSpec::Slits { d_um: 128.0 });
        let f: ObjectSpec = "file:a.pgm,pixel_um=2,phase=b.pgm".parse().unwrap();
        assert_eq!(f.to_string().parse::<ObjectSpec>().unwrap(), f);
        for bad in ["slits:-1", "slits:x", "dots", "file:", "file:a.pgm,size=3"] {
            assert!(bad.parse::<ObjectSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn bar_target_features() {
        let m = bar_target::<f64>();
        assert_eq!(m.sample([0.0, 200e-6]), Transmission::open());
        assert_eq!(m.sample([0.0, 0.0]).amplitude, 0.0);
        assert_eq!(m.sample([600e-6, 800e-6]).amplitude, 0.0);
        assert_eq!(m.sample([-600e-6, -800e-6]).amplitude, 0.0);
        assert_eq!(m.sample([0.0, 800e-6]).amplitude, 1.0);
        // Edges belong to the bar.
        let MaskContent::Shapes { rects, .. } = &m.content else { panic!() };
        for r in rects {
            assert_eq!(m.sample([r.x0, r.y1]).amplitude, 0.0);
            assert_eq!(m.sample([r.x1, r.y0]).amplitude, 0.0);
        }
        assert_eq!(m.sample([3e-3, 0.0]), Transmission::open());
    }

    #[test]
    fn bar_target_opaque_area() {
        let m = bar_target::<f64>();
        // Union of the bars: 3 x 2000 x 200 + 2 x 2000 x 200 - 6 x 200 x 200 µm².
        let expected = 1.76e-6;
        let avg = m.area_average([0.0, 0.0], [2e-3, 2e-3]);
        let opaque = (1.0 - avg.re) * 16e-6;
        assert!((opaque - expected).abs() < 1e-18);
        // Point count on a fine lattice.
        let n = 2000;
        let h = 4e-3 / n as f64;
        let mut count = 0usize;
        for iy in 0..n {
            for ix in 0..n {
                let p = [-2e-3 + (ix as f64 + 0.5) * h, -2e-3 + (iy as f64 + 0.5) * h];
                if m.sample(p).amplitude == 0.0 {
                    count += 1;
                }
            }
        }
        assert!((count as f64 * h * h - expected).abs() < 1e-3 * expected);
    }

    #[test]
    fn three_slit_geometry() {
        let d: f64 = 128e-6;
        let m = three_slit(d).unwrap();
        for c in [-256e-6, 0.0, 256e-6] {
            assert_eq!(m.sample([c, 0.0]).amplitude, 1.0);
        }
        assert_eq!(m.sample([128e-6, 0.0]).amplitude, 0.0);
        assert_eq!(m.sample([64e-6, 0.0]).amplitude, 0.0);
        let avg = m.area_average([0.0, 0.0], [m.width / 2.0, m.height / 2.0]);
        let open = avg.re * m.width * m.height;
        assert!((open - 3.0 * d * m.height).abs() < 1e-15);
        assert!(three_slit(0.0_f64).is_err());
    }

    #[test]
    fn raster_sampling() {
        let m = ObjectMask::from_raster(Grid::filled(10, 10, 0.5_f64), None, 1e-5).unwrap();
        assert_eq!(m.sample([1.234e-5, -3.3e-5]).amplitude, 0.5);
        assert_eq!(m.sample([1.0, 0.0]), Transmission::open());
        let ramp = Grid::from_fn(4, 1, |x, _| x as f64 / 3.0);
        let m = ObjectMask::from_raster(ramp, None, 1.0).unwrap();
        // Centers at -1.5, -0.5, 0.5, 1.5.
        assert!((m.sample([0.0, 0.0]).amplitude - 0.5).abs() < 1e-12);
        assert!((m.sample([-1.0, 0.0]).amplitude - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn phase_levels_round_trip() {
        for level in [0u16, 1, 32767, 65534, 65535] {
            assert_eq!(phase_to_level(level_to_phase(level)), level);
        }
        assert!((level_to_phase(65535) - std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(phase_to_level(-std::f64::consts::PI), 65535);
    }

    proptest! {
        #[test]
        fn samples_stay_in_unit_interval(x in -3e-3..3e-3f64, y in -3e-3..3e-3f64, d in 20e-6..400e-6f64) {
            for m in [bar_target::<f64>(), three_slit(d).unwrap()] {
                let t = m.sample([x, y]).amplitude;
                prop_assert!((0.0..=1.0).contains(&t));
            }
        }

        #[test]
        fn bar_target_is_mirror_symmetric(x in -2.5e-3..2.5e-3f64, y in -2.5e-3..2.5e-3f64) {
            let m = bar_target::<f64>();
            let t = m.sample([x, y]).amplitude;
            prop_assert_eq!(t, m.sample([-x, y]).amplitude);
            prop_assert_eq!(t, m.sample([x, -y]).amplitude);
        }
    }
}
