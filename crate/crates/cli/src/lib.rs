//! Command-line front end: `simulate`, `kernel`, `convolve`, `deconvolve`,
//! `resolve` and `sweep`.
//!
//! Every command writes its artifacts to `--out` and returns a one-line
//! summary. [`run`] is the whole program minus argument parsing and printing.

mod units;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use qiup::analysis::{
    kernel_object_width, magnification_band, measure_magnification, resolution_limit, stripe_period, trace_csv,
    waist_sweep, write_sweep_csv, ResolutionOptions, ResolutionResult, DECONVOLUTION_ITERATIONS,
};
use qiup::config::{merge_patch, parse_setup_value, setup_document, SetupConfig};
use qiup::detection::{add_grid_noise, add_noise, render_detector_images, visibility_map, NoiseRegion, RenderOptions};
use qiup::fastpath::FastPath;
use qiup::io::{read_csv, write_csv, write_json, write_pgm, write_scaled_pgm, LevelScale, RunMetadata};
use qiup::restore::{richardson_lucy, rmse};
use qiup::scene::ObjectSpec;
use qiup::{Grid, Region};

pub use units::{parse_length, parse_length_list};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qiup::Error),
    #[error("usage: {0}")]
    Usage(String),
    #[error("thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Threads(_) => "threads",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(qiup::Error::Schema { .. } | qiup::Error::UnknownPreset(_)) => 3,
            CliError::Core(qiup::Error::Physics { .. }) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "qiup", version, about = "Quantum imaging with undetected photons: simulation and analysis")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render both output-port images by quasi-Monte Carlo integration.
    Simulate(SimulateArgs),
    /// Write the normalized kernel of a setup.
    Kernel(KernelArgs),
    /// Visibility map by the fast convolution path.
    Convolve(ConvolveArgs),
    /// Richardson-Lucy deconvolution of a visibility map.
    Deconvolve(DeconvolveArgs),
    /// Resolution limit from the three-slit ratio.
    Resolve(ResolveArgs),
    /// Resolution limit over a list of pump waists.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SetupArgs {
    /// Preset name (`setup1`, `setup2`) or path to a configuration file.
    #[arg(long, default_value = "setup1")]
    pub setup: String,

    /// Pump waist, e.g. `200um`; bare numbers are micrometres.
    #[arg(long, value_parser = units::parse_length, allow_hyphen_values = true)]
    pub waist: Option<f64>,

    /// Transverse shift of lens L_i1, `<x>` or `<x>,<y>`, e.g. `0.3mm`.
    #[arg(long = "lens-shift-i1", value_parser = units::parse_shift, allow_hyphen_values = true)]
    pub lens_shift_i1: Option<[f64; 2]>,

    /// JSON merge patch applied to the configuration; repeatable.
    #[arg(long = "set", value_parser = parse_patch)]
    pub patches: Vec<Value>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseRegionArg {
    Left,
    Right,
    All,
    None,
}

impl From<NoiseRegionArg> for NoiseRegion {
    fn from(r: NoiseRegionArg) -> Self {
        match r {
            NoiseRegionArg::Left => NoiseRegion::LeftHalf,
            NoiseRegionArg::Right => NoiseRegion::RightHalf,
            NoiseRegionArg::All => NoiseRegion::All,
            NoiseRegionArg::None => NoiseRegion::None,
        }
    }
}

/// Detector pixels to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionArg {
    Full,
    /// Rows imaging the part of the bar target crossed only by the vertical bars.
    Band,
    Center(usize),
    Pixels(Region),
}

impl std::str::FromStr for RegionArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => return Ok(Self::Full),
            "band" => return Ok(Self::Band),
            _ => {}
        }
        if let Some(n) = s.strip_prefix("center:") {
            return n.parse().map(Self::Center).map_err(|_| format!("bad crop size `{n}`"));
        }
        let v: Vec<usize> = s
            .split(',')
            .map(|p| {
                p.trim().parse().map_err(|_| format!("bad region `{s}`: expected full, band, center:<n> or x0,y0,w,h"))
            })
            .collect::<std::result::Result<_, _>>()?;
        match v[..] {
            [x0, y0, w, h] => Ok(Self::Pixels(Region::new(x0, y0, w, h))),
            _ => Err(format!("bad region `{s}`: expected x0,y0,w,h")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RegionArgs {
    /// `full`, `band`, `center:<n>` or `x0,y0,w,h`.
    #[arg(long, default_value = "full")]
    pub region: RegionArg,

    /// Centered square crop of this many pixels; overrides `--region`.
    #[arg(long)]
    pub crop: Option<usize>,
}

impl RegionArg {
    /// Pixel region on the detector of `setup`.
    pub fn resolve(self, setup: &qiup::Setup) -> qiup::Result<Region> {
        let (nx, ny) = (setup.detector.nx, setup.detector.ny);
        let r = match self {
            RegionArg::Full => Region::full(nx, ny),
            RegionArg::Band => magnification_band(setup),
            RegionArg::Center(n) => Region::centered(nx, ny, n.min(nx), n.min(ny)),
            RegionArg::Pixels(r) => r,
        };
        r.check_within(nx, ny)?;
        Ok(r)
    }
}

impl RegionArgs {
    fn resolve(&self, setup: &qiup::Setup) -> Result<Region> {
        Ok(self.crop.map(RegionArg::Center).unwrap_or(self.region).resolve(setup)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    #[command(flatten)]
    pub region: RegionArgs,
    /// `bars`, `open`, `slits:<d_um>` or `file:<path>[,pixel_um=<p>][,phase=<path>]`.
    #[arg(long, default_value = "bars")]
    pub object: ObjectSpec,
    /// Quasi-Monte Carlo samples per pixel (default: from the configuration).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of additive detector noise, in counts.
    #[arg(long = "noise-sigma", default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long = "noise-region", value_enum, default_value = "all")]
    pub noise_region: NoiseRegionArg,
    /// Keep visibility values outside [0, 1].
    #[arg(long = "no-clip")]
    pub no_clip: bool,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ConvolveArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    #[command(flatten)]
    pub region: RegionArgs,
    #[arg(long, default_value = "bars")]
    pub object: ObjectSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of additive noise on the visibility.
    #[arg(long = "noise-sigma", default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long = "noise-region", value_enum, default_value = "all")]
    pub noise_region: NoiseRegionArg,
    #[arg(long = "no-clip")]
    pub no_clip: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DeconvolveArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Visibility map (CSV) to restore.
    #[arg(long)]
    pub input: PathBuf,
    /// Detector pixels covered by the input map.
    #[command(flatten)]
    pub region: RegionArgs,
    #[arg(long, default_value_t = DECONVOLUTION_ITERATIONS)]
    pub iterations: usize,
    /// Object to compare against.
    #[arg(long)]
    pub truth: Option<ObjectSpec>,
    /// Box of the input map for the error metric, `x0,y0,w,h`.
    #[arg(long = "rmse-region")]
    pub rmse_region: Option<RegionArg>,
}

#[derive(Debug, Clone, Args)]
pub struct ResolveArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Restore each slit profile with Richardson-Lucy before measuring.
    #[arg(long)]
    pub deconvolve: bool,
    #[arg(long, default_value_t = DECONVOLUTION_ITERATIONS)]
    pub iterations: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Pump waists, e.g. `100,200,300` (micrometres) or `0.1mm,0.2mm`.
    #[arg(long, value_delimiter = ',', required = true, value_parser = units::parse_length)]
    pub waists: Vec<f64>,
    #[arg(long)]
    pub deconvolve: bool,
    #[arg(long, default_value_t = DECONVOLUTION_ITERATIONS)]
    pub iterations: usize,
}

/// Result of one command: the printed summary line and the metadata
/// written next to the artifacts.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: String,
    pub metadata: RunMetadata,
    pub out: PathBuf,
}

impl Outcome {
    pub fn value(&self, key: &str) -> Option<f64> {
        self.metadata.summary.get(key).and_then(Value::as_f64)
    }
}

/// Metres to micrometres, rounded to 1e-9 um so `200um` stays 200.
pub fn micrometres(m: f64) -> f64 {
    (m * 1e15).round() / 1e9
}

fn parse_patch(s: &str) -> std::result::Result<Value, String> {
    serde_json::from_str(s).map_err(|e| format!("invalid JSON patch: {e}"))
}

impl SetupArgs {
    /// Configuration after applying patches, waist and lens shift.
    pub fn load(&self) -> Result<SetupConfig> {
        let mut doc = setup_document(&self.setup)?;
        for p in &self.patches {
            merge_patch(&mut doc, p);
        }
        let mut cfg = parse_setup_value(doc)?;
        if let Some(w) = self.waist {
            cfg = cfg.with_waist_um(micrometres(w))?;
        }
        if let Some([x, y]) = self.lens_shift_i1 {
            cfg = cfg.with_lens_shift_um("L_i1", [micrometres(x), micrometres(y)])?;
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).map_err(qiup::Error::from)?;
        Ok(&self.out)
    }
}

fn metadata(command: &str, cfg: &SetupConfig, region: Region) -> RunMetadata {
    RunMetadata {
        command: command.into(),
        setup_name: cfg.name.clone(),
        setup_hash: cfg.hash(),
        seed: 0,
        samples: 0,
        nx: region.width,
        ny: region.height,
        pixel_pitch_um: cfg.detector.pitch_um,
        pgm_scales: Default::default(),
        summary: Map::new(),
    }
}

pub fn region_json(r: Region) -> Value {
    json!({"x0": r.x0, "y0": r.y0, "width": r.width, "height": r.height})
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Writes a visibility map as CSV and as PGM on the fixed scale [0, 1] when
/// it lies in range.
fn write_visibility(dir: &Path, stem: &str, v: &Grid<f64>, meta: &mut RunMetadata) -> Result<()> {
    write_csv(&dir.join(format!("{stem}.csv")), v)?;
    let (lo, hi) = v.min_max();
    let pgm = dir.join(format!("{stem}.pgm"));
    let scale = if lo >= 0.0 && hi <= 1.0 {
        let s = LevelScale::spanning(0.0, 1.0);
        write_pgm(&pgm, &s.encode(v))?;
        s
    } else {
        write_scaled_pgm(&pgm, v)?
    };
    meta.pgm_scales.insert(format!("{stem}.pgm"), scale);
    Ok(())
}

/// Magnification from the vertical-bar band of a bar-target map, when the
/// region covers it.
fn band_magnification(setup: &qiup::Setup, v: &Grid<f64>, region: Region) -> Option<f64> {
    let band = magnification_band(setup);
    let y0 = band.y0.max(region.y0);
    let y1 = (band.y0 + band.height).min(region.y0 + region.height);
    if y1 <= y0 {
        return None;
    }
    let rows = Region::new(0, y0 - region.y0, region.width, y1 - y0);
    let sub = v.crop(rows).ok()?;
    let at = Region::new(region.x0, y0, region.width, y1 - y0);
    measure_magnification(&sub, at, setup.detector.pitch, setup.detector.nx / 2).ok()
}

/// Stripe period (m) along the region row nearest the detector center.
fn center_row_period(setup: &qiup::Setup, v: &Grid<f64>, region: Region) -> Option<f64> {
    let cy = (setup.detector.ny / 2).clamp(region.y0, region.y0 + region.height - 1) - region.y0;
    let row = v.row(cy);
    let n = row.len();
    let centre = &row[n / 4..n - n / 4];
    let p = stripe_period(centre, 20.0, (centre.len() as f64 / 2.0).max(40.0)).ok()?;
    Some(p * setup.detector.pitch)
}

/// Range of a visibility map plus the magnification (bar target) or stripe
/// period (open object, shifted lens) when they can be measured.
pub fn visibility_summary(setup: &qiup::Setup, spec: &ObjectSpec, v: &Grid<f64>, region: Region) -> Map<String, Value> {
    let mut s = Map::new();
    let (lo, hi) = v.min_max();
    s.insert("v_min".into(), json!(lo));
    s.insert("v_max".into(), json!(hi));
    s.insert("region".into(), region_json(region));
    if *spec == ObjectSpec::Bars {
        if let Some(m) = band_magnification(setup, v, region) {
            s.insert("magnification".into(), json!(m));
        }
    }
    if !setup.is_aligned() && *spec == ObjectSpec::Open {
        if let Some(p) = center_row_period(setup, v, region) {
            s.insert("stripe_period_um".into(), json!(p * 1e6));
        }
    }
    s
}

fn summarize_visibility(setup: &qiup::Setup, spec: &ObjectSpec, v: &Grid<f64>, region: Region, meta: &mut RunMetadata) {
    meta.summary.extend(visibility_summary(setup, spec, v, region));
}

fn visibility_line(command: &str, meta: &RunMetadata) -> String {
    let mut s = format!(
        "{command} {} {}x{}: V min {:.6} max {:.6}",
        meta.setup_name,
        meta.nx,
        meta.ny,
        meta.summary["v_min"].as_f64().unwrap_or(f64::NAN),
        meta.summary["v_max"].as_f64().unwrap_or(f64::NAN)
    );
    if let Some(m) = meta.summary.get("magnification").and_then(Value::as_f64) {
        s += &format!(", magnification {m:.4}");
    }
    if let Some(p) = meta.summary.get("stripe_period_um").and_then(Value::as_f64) {
        s += &format!(", stripe period {p:.1} um");
    }
    s
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome> {
    let start = Instant::now();
    let cfg = args.setup.load()?;
    let setup = cfg.build::<f64>()?;
    let mask = args.object.build::<f64>()?;
    let region = args.region.resolve(&setup)?;
    let samples = args.samples.unwrap_or(cfg.integration.samples);
    let sampler = cfg.sampler(&setup, Some(samples), args.seed)?;
    sampler.check_coverage(&cfg.kernel(&setup)?)?;
    let opts = RenderOptions { exposure: cfg.detector.exposure, region: Some(region), setup_hash: cfg.hash() };
    let (mut plus, mut minus) = render_detector_images(&setup, &mask, &sampler, &opts)?;
    if args.noise_sigma > 0.0 {
        let nr = NoiseRegion::from(args.noise_region);
        plus = add_noise(&plus, args.noise_sigma, nr, args.seed.wrapping_add(1))?;
        minus = add_noise(&minus, args.noise_sigma, nr, args.seed.wrapping_add(2))?;
    }
    let v = visibility_map(&plus, &minus, !args.no_clip)?;
    let dir = args.setup.out_dir()?;
    let mut meta = metadata("simulate", &cfg, region);
    meta.seed = args.seed;
    meta.samples = samples;
    for (name, img) in [("plus", &plus.counts), ("minus", &minus.counts)] {
        write_csv(&dir.join(format!("{name}.csv")), img)?;
        let scale = write_scaled_pgm(&dir.join(format!("{name}.pgm")), img)?;
        meta.pgm_scales.insert(format!("{name}.pgm"), scale);
    }
    write_visibility(dir, "visibility", &v.values, &mut meta)?;
    summarize_visibility(&setup, &args.object, &v.values, region, &mut meta);
    let flagged = v.flags.as_slice().iter().filter(|&&f| f).count();
    meta.summary.insert("flagged_pixels".into(), json!(flagged));
    meta.summary.insert("object".into(), json!(args.object.to_string()));
    meta.summary.insert("runtime_s".into(), json!(start.elapsed().as_secs_f64()));
    write_json(&dir.join("metadata.json"), &meta)?;
    let summary = format!("{} (N = {samples}, seed {})", visibility_line("simulate", &meta), args.seed);
    Ok(Outcome { summary, metadata: meta, out: dir.to_path_buf() })
}

pub fn kernel(args: &KernelArgs) -> Result<Outcome> {
    let cfg = args.setup.load()?;
    let setup = cfg.build::<f64>()?;
    let k = cfg.kernel(&setup)?;
    let fast = FastPath::new(&setup, &k)?;
    let dir = args.setup.out_dir()?;
    let grid = Grid::from_vec(k.nx, k.ny, k.values.clone())?;
    let mut meta = metadata("kernel", &cfg, Region::full(k.nx, k.ny));
    write_csv(&dir.join("kernel.csv"), &grid)?;
    meta.pgm_scales.insert("kernel.pgm".into(), write_scaled_pgm(&dir.join("kernel.pgm"), &grid)?);
    write_csv(&dir.join("pixel_kernel.csv"), &fast.kernel.weights)?;
    let sigma_obj = kernel_object_width(&fast);
    let s = &mut meta.summary;
    s.insert("momentum_spacing_per_m".into(), json!(k.spacing()));
    s.insert("momentum_extent_per_m".into(), json!(k.extent));
    s.insert("integral".into(), json!(k.integral()));
    s.insert("half_max_radius_per_m".into(), json!(k.half_max_radius_x()));
    s.insert("correlation_width_per_m".into(), json!(setup.source1.correlation_width()));
    s.insert("object_width_um".into(), json!(sigma_obj * 1e6));
    s.insert("pixel_kernel_size".into(), json!(fast.kernel.size()));
    s.insert("magnification".into(), json!(setup.magnification()));
    write_json(&dir.join("metadata.json"), &meta)?;
    let summary = format!(
        "kernel {}: {}x{} samples, integral {:.9}, object-plane width {:.2} um, magnification {:.4}",
        cfg.name,
        k.nx,
        k.ny,
        k.integral(),
        sigma_obj * 1e6,
        setup.magnification()
    );
    Ok(Outcome { summary, metadata: meta, out: dir.to_path_buf() })
}

/// Fast-path visibility: the shift-invariant convolution when the setup is
/// aligned and the object has no phase, the shift-variant one otherwise.
pub fn fast_visibility(fast: &FastPath<f64>, mask: &qiup::Mask, region: Region) -> qiup::Result<Grid<f64>> {
    let v = if fast.geometry.optics.is_aligned() && !mask.has_phase() {
        fast.convolve(mask, Some(region))?
    } else {
        fast.shift_variant(mask, Some(region))?
    };
    Ok(v.values)
}

pub fn convolve(args: &ConvolveArgs) -> Result<Outcome> {
    let start = Instant::now();
    let cfg = args.setup.load()?;
    let setup = cfg.build::<f64>()?;
    let fast = FastPath::new(&setup, &cfg.kernel(&setup)?)?;
    let mask = args.object.build::<f64>()?;
    let region = args.region.resolve(&setup)?;
    let mut v = fast_visibility(&fast, &mask, region)?;
    let elapsed = start.elapsed().as_secs_f64();
    if args.noise_sigma > 0.0 {
        v = add_grid_noise(&v, args.noise_sigma, args.noise_region.into(), args.seed)?;
    }
    if !args.no_clip {
        v = v.map(|x| x.clamp(0.0, 1.0));
    }
    let dir = args.setup.out_dir()?;
    let mut meta = metadata("convolve", &cfg, region);
    meta.seed = args.seed;
    write_visibility(dir, "visibility", &v, &mut meta)?;
    summarize_visibility(&setup, &args.object, &v, region, &mut meta);
    meta.summary.insert("object".into(), json!(args.object.to_string()));
    meta.summary.insert("runtime_s".into(), json!(elapsed));
    write_json(&dir.join("metadata.json"), &meta)?;
    let summary = visibility_line("convolve", &meta);
    Ok(Outcome { summary, metadata: meta, out: dir.to_path_buf() })
}

/// Error box on a full-size detector, or the whole
/// map otherwise.
fn default_rmse_region(nx: usize, ny: usize) -> Region {
    let r = Region::from_bounds(100, 900, 300, 700);
    if r.check_within(nx, ny).is_ok() && nx == 1000 && ny == 1000 {
        r
    } else {
        Region::full(nx, ny)
    }
}

pub fn deconvolve(args: &DeconvolveArgs) -> Result<Outcome> {
    let cfg = args.setup.load()?;
    let setup = cfg.build::<f64>()?;
    let fast = FastPath::new(&setup, &cfg.kernel(&setup)?)?;
    let input = read_csv(&args.input)?;
    let region = args.region.resolve(&setup)?;
    if (region.width, region.height) != input.dims() {
        return Err(CliError::Usage(format!(
            "input is {}x{} but the region is {}x{}",
            input.nx(),
            input.ny(),
            region.width,
            region.height
        )));
    }
    let clipped = input.map(|x| x.clamp(0.0, 1.0));
    let out = richardson_lucy(&clipped, &fast.kernel.weights, args.iterations)?;
    let dir = args.setup.out_dir()?;
    let mut meta = metadata("deconvolve", &cfg, region);
    write_visibility(dir, "deconvolved", &out, &mut meta)?;
    meta.summary.insert("iterations".into(), json!(args.iterations));
    meta.summary.insert("region".into(), region_json(region));
    let mut summary =
        format!("deconvolve {} {}x{}: {} iterations", cfg.name, region.width, region.height, args.iterations);
    if let Some(spec) = &args.truth {
        let truth = fast.object_image(&spec.build()?, Some(region))?;
        let box_ = match args.rmse_region {
            Some(RegionArg::Pixels(r)) => r,
            Some(_) => return Err(CliError::Usage("--rmse-region takes x0,y0,w,h".into())),
            None => default_rmse_region(region.width, region.height),
        };
        let before = rmse(&clipped, &truth, box_)?;
        let after = rmse(&out, &truth, box_)?;
        let reduction = 1.0 - after / before;
        meta.summary.insert("rmse_before".into(), json!(before));
        meta.summary.insert("rmse_after".into(), json!(after));
        meta.summary.insert("rmse_reduction".into(), finite_or_null(reduction));
        meta.summary.insert("rmse_region".into(), region_json(box_));
        summary += &format!(", RMSE {before:.5} -> {after:.5} ({:.1}% lower)", 100.0 * reduction);
    }
    write_json(&dir.join("metadata.json"), &meta)?;
    Ok(Outcome { summary, metadata: meta, out: dir.to_path_buf() })
}

pub fn resolution_options(deconvolve: bool, iterations: usize) -> ResolutionOptions {
    ResolutionOptions { deconvolution: deconvolve.then_some(iterations), ..Default::default() }
}

pub fn result_json(r: &ResolutionResult<f64>) -> Value {
    json!({
        "waist_um": micrometres(r.waist),
        "d_limit_um": r.d_limit * 1e6,
        "ratio_at_limit": r.ratio_at_limit,
        "deconvolved": r.deconvolved,
        "iterations": r.iterations,
        "evaluations": r.trace.len(),
    })
}

pub fn resolve(args: &ResolveArgs) -> Result<Outcome> {
    let cfg = args.setup.load()?;
    let fast = cfg.fast_path::<f64>()?;
    let waist = cfg.pump.waist_um * 1e-6;
    let r = resolution_limit(&fast, waist, &resolution_options(args.deconvolve, args.iterations))?;
    let dir = args.setup.out_dir()?;
    let mut meta = metadata("resolve", &cfg, Region::full(cfg.detector.nx, cfg.detector.ny));
    let trace_name = format!("trace_w{}um{}.csv", cfg.pump.waist_um, if r.deconvolved { "_rl" } else { "" });
    std::fs::write(dir.join(&trace_name), trace_csv(&r)).map_err(qiup::Error::from)?;
    if let Value::Object(m) = result_json(&r) {
        meta.summary.extend(m);
    }
    meta.summary.insert("R_trace_file".into(), json!(trace_name));
    write_json(&dir.join("metadata.json"), &meta)?;
    let summary = format!(
        "resolve {} waist {} um{}: d_limit {:.3} um (R = {:.5}, {} evaluations)",
        cfg.name,
        cfg.pump.waist_um,
        if r.deconvolved { " deconvolved" } else { "" },
        r.d_limit * 1e6,
        r.ratio_at_limit,
        r.trace.len()
    );
    Ok(Outcome { summary, metadata: meta, out: dir.to_path_buf() })
}

/// Resolution limit at each waist (m), paired with the waist.
pub fn sweep_points(
    cfg: &SetupConfig,
    waists: &[f64],
    opts: &ResolutionOptions,
) -> Vec<(f64, qiup::Result<ResolutionResult<f64>>)> {
    let results = waist_sweep(waists, opts, |w| cfg.with_waist_um(micrometres(w))?.fast_path());
    waists.iter().copied().zip(results).collect()
}

pub fn sweep(args: &SweepArgs) -> Result<Outcome> {
    if args.waists.is_empty() {
        return Err(CliError::Usage("--waists needs at least one value".into()));
    }
    let cfg = args.setup.load()?;
    let opts = resolution_options(args.deconvolve, args.iterations);
    let paired = sweep_points(&cfg, &args.waists, &opts);
    let dir = args.setup.out_dir()?;
    let stem = if args.deconvolve { "sweep_rl" } else { "sweep" };
    write_sweep_csv(dir, stem, &paired, args.deconvolve)?;
    let mut meta = metadata("sweep", &cfg, Region::full(cfg.detector.nx, cfg.detector.ny));
    let points: Vec<Value> = paired
        .iter()
        .map(|(w, r)| match r {
            Ok(r) => result_json(r),
            Err(e) => json!({"waist_um": micrometres(*w), "error": e.to_string(), "kind": e.kind()}),
        })
        .collect();
    let failed = paired.iter().filter(|(_, r)| r.is_err()).count();
    meta.summary.insert("points".into(), Value::Array(points));
    meta.summary.insert("failed".into(), json!(failed));
    meta.summary.insert("csv".into(), json!(format!("{stem}.csv")));
    write_json(&dir.join("metadata.json"), &meta)?;
    let limits: Vec<String> =
        paired.iter().map(|(_, r)| r.as_ref().map_or("-".into(), |r| format!("{:.2}", r.d_limit * 1e6))).collect();
    let summary = format!(
        "sweep {}{}: d_limit um [{}] over {} waists ({} failed)",
        cfg.name,
        if args.deconvolve { " deconvolved" } else { "" },
        limits.join(", "),
        paired.len(),
        failed
    );
    Ok(Outcome { summary, metadata: meta, out: dir.to_path_buf() })
}

fn dispatch(command: &Command) -> Result<Outcome> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Kernel(a) => kernel(a),
        Command::Convolve(a) => convolve(a),
        Command::Deconvolve(a) => deconvolve(a),
        Command::Resolve(a) => resolve(a),
        Command::Sweep(a) => sweep(a),
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(|| dispatch(&cli.command)),
        None => dispatch(&cli.command),
    }
}

/// Parses `args` (without the program name) and runs the command.
pub fn run_args<I, S>(args: I) -> Result<Outcome>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("qiup")).chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    run(&cli)
}
