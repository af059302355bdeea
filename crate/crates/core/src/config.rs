//! Setup configuration documents, the built-in presets and conversion into
//! an [`OpticalSetup`].
//!
//! Documents are JSON with the unit in every dimensional key name. Unknown
//! keys are rejected. Overrides are applied as a JSON merge patch onto a
//! preset or file before validation.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detection::{QmcSampler, SequenceKind};
use crate::error::{Error, Result};
use crate::fastpath::FastPath;
use crate::optics::{ArmPath, Arms, Detector, Element, LensElement, OpticalSetup};
use crate::scalar::Real;
use crate::source::{
    normalized_kernel, CrystalSpec, GaussianSincModel, IndexModel, KernelGrid, KernelSpec, PhotonMomentum, PumpSpec,
    SourceModel,
};

pub const PRESET_NAMES: [&str; 2] = ["setup1", "setup2"];

const SETUP1: &str = include_str!("presets/setup1.json");
const SETUP2: &str = include_str!("presets/setup2.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    pub wavelength_nm: f64,
    pub waist_um: f64,
    pub power_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IndexConfig {
    /// Extraordinary index per photon role.
    Constant { pump: f64, signal: f64, idler: f64 },
    /// `n² = a + Σ b_j λ² / (λ² - c_j)`, λ in µm; `[a, b_1, c_1, ...]`.
    Sellmeier { coefficients: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalConfig {
    pub length_mm: f64,
    pub poling_period_um: f64,
    pub temperature_c: f64,
    pub index_model: IndexConfig,
}

/// Sign with which the idler transverse momentum enters the kernel offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelOffset {
    /// `Q = q_s + q_i`: the relay mirrors the idler momentum.
    MirroredIdler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub amplitude_scale: f64,
    /// Include the phase-matching sinc; false gives a Gaussian-only kernel.
    pub phase_matching: bool,
    pub kernel_offset: KernelOffset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LensConfig {
    pub name: String,
    pub focal_length_mm: f64,
    #[serde(default)]
    pub shift_um: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum ElementConfig {
    #[serde(rename = "gap_mm")]
    Gap(f64),
    #[serde(rename = "lens")]
    Lens(LensConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub transmittance: f64,
    pub elements: Vec<ElementConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmsConfig {
    pub idler_to_object: ArmConfig,
    pub object_to_source2: ArmConfig,
    pub signal1: ArmConfig,
    pub signal2: ArmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub pitch_um: f64,
    pub nx: usize,
    pub ny: usize,
    pub efficiency: f64,
    /// Exposure and calibration factor turning count-rate densities into counts.
    pub exposure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceConfig {
    Sobol,
    Halton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub sequence: SequenceConfig,
    pub samples: usize,
    /// Half-width of the integration box in kernel correlation widths.
    pub box_widths: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Half-width of the kernel grid in correlation widths.
    pub extent_widths: f64,
    /// Samples per axis (odd).
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupConfig {
    pub name: String,
    pub signal_wavelength_nm: f64,
    pub idler_wavelength_nm: f64,
    pub pump: PumpConfig,
    pub crystal: CrystalConfig,
    pub source: SourceConfig,
    pub arms: ArmsConfig,
    pub detector: DetectorConfig,
    pub pump_phase_rad: [f64; 2],
    pub integration: IntegrationConfig,
    pub kernel: KernelConfig,
}

fn schema_error(err: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = err.path().to_string();
    Error::Schema { path, message: err.into_inner().to_string() }
}

/// Parses a configuration document and validates it.
pub fn parse_setup_str(text: &str) -> Result<SetupConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: SetupConfig = serde_path_to_error::deserialize(&mut de).map_err(schema_error)?;
    de.end().map_err(|e| Error::Schema { path: ".".into(), message: e.to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_setup_value(value: serde_json::Value) -> Result<SetupConfig> {
    let cfg: SetupConfig = serde_path_to_error::deserialize(value).map_err(schema_error)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn preset_text(name: &str) -> Result<&'static str> {
    match name {
        "setup1" => Ok(SETUP1),
        "setup2" => Ok(SETUP2),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

pub fn preset(name: &str) -> Result<SetupConfig> {
    parse_setup_str(preset_text(name)?)
}

/// Document of a preset name or a path to a configuration file.
pub fn setup_document(spec: &str) -> Result<serde_json::Value> {
    let text = match preset_text(spec) {
        Ok(t) => t.to_string(),
        Err(_) if Path::new(spec).exists() => std::fs::read_to_string(spec)?,
        Err(e) => return Err(e),
    };
    serde_json::from_str(&text).map_err(|e| Error::Schema { path: ".".into(), message: e.to_string() })
}

/// Loads a preset by name or a configuration file by path.
pub fn parse_setup(spec: &str) -> Result<SetupConfig> {
    parse_setup_value(setup_document(spec)?)
}

/// RFC 7396 JSON merge patch.
pub fn merge_patch(target: &mut serde_json::Value, patch: &serde_json::Value) {
    match patch {
        serde_json::Value::Object(p) => {
            if !target.is_object() {
                *target = serde_json::Value::Object(Default::default());
            }
            let t = target.as_object_mut().expect("object");
            for (k, v) in p {
                if v.is_null() {
                    t.remove(k);
                } else {
                    merge_patch(t.entry(k.clone()).or_insert(serde_json::Value::Null), v);
                }
            }
        }
        other => *target = other.clone(),
    }
}

/// Applies a merge patch to a document and parses the result.
pub fn with_overrides(base: serde_json::Value, overrides: &serde_json::Value) -> Result<SetupConfig> {
    let mut doc = base;
    merge_patch(&mut doc, overrides);
    parse_setup_value(doc)
}

fn check(ok: bool, path: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::physics(path, message))
    }
}

fn positive(v: f64, path: &str) -> Result<()> {
    check(v.is_finite() && v > 0.0, path, &format!("must be positive, got {v}"))
}

fn unit_interval(v: f64, path: &str) -> Result<()> {
    check((0.0..=1.0).contains(&v), path, &format!("must lie in [0, 1], got {v}"))
}

impl SetupConfig {
    pub fn validate(&self) -> Result<()> {
        positive(self.signal_wavelength_nm, "signal_wavelength_nm")?;
        positive(self.idler_wavelength_nm, "idler_wavelength_nm")?;
        positive(self.pump.wavelength_nm, "pump.wavelength_nm")?;
        positive(self.pump.waist_um, "pump.waist_um")?;
        check(self.pump.power_mw >= 0.0, "pump.power_mw", "must be non-negative")?;
        let derived = 1.0 / (1.0 / self.signal_wavelength_nm + 1.0 / self.idler_wavelength_nm);
        check(
            ((derived - self.pump.wavelength_nm) / derived).abs() < 1e-3,
            "pump.wavelength_nm",
            &format!("violates energy conservation: signal and idler imply {derived:.3} nm"),
        )?;
        positive(self.crystal.length_mm, "crystal.length_mm")?;
        positive(self.crystal.poling_period_um, "crystal.poling_period_um")?;
        match &self.crystal.index_model {
            IndexConfig::Constant { pump, signal, idler } => {
                positive(*pump, "crystal.index_model.pump")?;
                positive(*signal, "crystal.index_model.signal")?;
                positive(*idler, "crystal.index_model.idler")?;
            }
            IndexConfig::Sellmeier { coefficients } => check(
                coefficients.len() % 2 == 1,
                "crystal.index_model.coefficients",
                "needs a constant term followed by (b, c) pairs",
            )?,
        }
        positive(self.source.amplitude_scale, "source.amplitude_scale")?;
        for (name, arm) in self.arm_list() {
            unit_interval(arm.transmittance, &format!("arms.{name}.transmittance"))?;
            for (i, e) in arm.elements.iter().enumerate() {
                match e {
                    ElementConfig::Gap(d) => check(
                        d.is_finite() && *d >= 0.0,
                        &format!("arms.{name}.elements[{i}].gap_mm"),
                        "must be non-negative",
                    )?,
                    ElementConfig::Lens(l) => {
                        let path = format!("arms.{name}.elements[{i}].lens");
                        check(
                            l.focal_length_mm.is_finite() && l.focal_length_mm != 0.0,
                            &format!("{path}.focal_length_mm"),
                            "must be finite and nonzero",
                        )?;
                        check(l.shift_um.iter().all(|s| s.is_finite()), &format!("{path}.shift_um"), "must be finite")?;
                    }
                }
            }
        }
        positive(self.detector.pitch_um, "detector.pitch_um")?;
        check(self.detector.nx > 0, "detector.nx", "must be positive")?;
        check(self.detector.ny > 0, "detector.ny", "must be positive")?;
        unit_interval(self.detector.efficiency, "detector.efficiency")?;
        positive(self.detector.exposure, "detector.exposure")?;
        check(self.integration.samples > 0, "integration.samples", "must be positive")?;
        positive(self.integration.box_widths, "integration.box_widths")?;
        positive(self.kernel.extent_widths, "kernel.extent_widths")?;
        check(
            self.kernel.samples >= 3 && self.kernel.samples % 2 == 1,
            "kernel.samples",
            "must be odd and at least 3",
        )?;
        Ok(())
    }

    fn arm_list(&self) -> [(&'static str, &ArmConfig); 4] {
        [
            ("idler_to_object", &self.arms.idler_to_object),
            ("object_to_source2", &self.arms.object_to_source2),
            ("signal1", &self.arms.signal1),
            ("signal2", &self.arms.signal2),
        ]
    }

    /// Canonical serialization: struct field order, no whitespace.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serializes")
    }

    pub fn with_waist_um(&self, waist_um: f64) -> Result<Self> {
        let mut out = self.clone();
        out.pump.waist_um = waist_um;
        out.validate()?;
        Ok(out)
    }

    /// Sets the transverse shift of every lens with the given name.
    pub fn with_lens_shift_um(&self, lens: &str, shift_um: [f64; 2]) -> Result<Self> {
        let mut out = self.clone();
        let mut found = false;
        for arm in [
            &mut out.arms.idler_to_object,
            &mut out.arms.object_to_source2,
            &mut out.arms.signal1,
            &mut out.arms.signal2,
        ] {
            for e in &mut arm.elements {
                if let ElementConfig::Lens(l) = e {
                    if l.name == lens {
                        l.shift_um = shift_um;
                        found = true;
                    }
                }
            }
        }
        if !found {
            return Err(Error::Schema { path: "arms".into(), message: format!("no lens named `{lens}`") });
        }
        out.validate()?;
        Ok(out)
    }

    pub fn source_model<T: Real>(&self) -> GaussianSincModel<T> {
        let index_model = match &self.crystal.index_model {
            IndexConfig::Constant { pump, signal, idler } => {
                IndexModel::Constant { pump: T::lit(*pump), signal: T::lit(*signal), idler: T::lit(*idler) }
            }
            IndexConfig::Sellmeier { coefficients } => {
                IndexModel::Sellmeier { coefficients: coefficients.iter().map(|&c| T::lit(c)).collect() }
            }
        };
        GaussianSincModel {
            crystal: CrystalSpec {
                length_z: T::lit(self.crystal.length_mm * 1e-3),
                poling_period: T::lit(self.crystal.poling_period_um * 1e-6),
                temperature: T::lit(self.crystal.temperature_c),
                index_model,
            },
            pump: PumpSpec {
                wavelength: T::lit(self.pump.wavelength_nm * 1e-9),
                waist: T::lit(self.pump.waist_um * 1e-6),
                power: T::lit(self.pump.power_mw * 1e-3),
            },
            amplitude_scale: T::lit(self.source.amplitude_scale),
            phase_matching: self.source.phase_matching,
        }
    }

    /// Normalized kernel of the first source around the collinear signal.
    pub fn kernel<T: Real>(&self, setup: &OpticalSetup<T>) -> Result<KernelGrid<T>> {
        let model = setup.source1.as_ref();
        let spec = KernelSpec {
            extent: model.correlation_width() * T::lit(self.kernel.extent_widths),
            n: self.kernel.samples,
        };
        normalized_kernel(model, PhotonMomentum::collinear(setup.signal_omega()), setup.idler_omega(), spec)
    }

    pub fn sequence(&self) -> SequenceKind {
        match self.integration.sequence {
            SequenceConfig::Sobol => SequenceKind::Sobol,
            SequenceConfig::Halton => SequenceKind::Halton,
        }
    }

    /// Sampler over the configured integration box; `samples` overrides the
    /// configured count.
    pub fn sampler<T: Real>(
        &self,
        setup: &OpticalSetup<T>,
        samples: Option<usize>,
        seed: u64,
    ) -> Result<QmcSampler<T>> {
        QmcSampler::for_kernel_width(
            self.sequence(),
            samples.unwrap_or(self.integration.samples),
            seed,
            setup.source1.correlation_width(),
            self.integration.box_widths,
        )
    }

    /// Builds the setup and its fast path.
    pub fn fast_path<T: Real>(&self) -> Result<FastPath<T>> {
        let setup = self.build::<T>()?;
        FastPath::new(&setup, &self.kernel(&setup)?)
    }

    /// Builds the setup. Both sources share one model.
    pub fn build<T: Real>(&self) -> Result<OpticalSetup<T>> {
        self.validate()?;
        let model: Arc<dyn SourceModel<T>> = Arc::new(self.source_model::<T>());
        let arm = |a: &ArmConfig| ArmPath {
            elements: a
                .elements
                .iter()
                .map(|e| match e {
                    ElementConfig::Gap(d) => Element::Gap(T::lit(d * 1e-3)),
                    ElementConfig::Lens(l) => Element::Lens(LensElement {
                        name: l.name.clone(),
                        focal_length: T::lit(l.focal_length_mm * 1e-3),
                        shift: [T::lit(l.shift_um[0] * 1e-6), T::lit(l.shift_um[1] * 1e-6)],
                    }),
                })
                .collect(),
            transmittance: T::lit(a.transmittance),
        };
        Ok(OpticalSetup {
            source1: model.clone(),
            source2: model,
            signal_wavelength: T::lit(self.signal_wavelength_nm * 1e-9),
            idler_wavelength: T::lit(self.idler_wavelength_nm * 1e-9),
            arms: Arms {
                idler_to_object: arm(&self.arms.idler_to_object),
                object_to_source2: arm(&self.arms.object_to_source2),
                signal1: arm(&self.arms.signal1),
                signal2: arm(&self.arms.signal2),
            },
            detector: Detector {
                pitch: T::lit(self.detector.pitch_um * 1e-6),
                nx: self.detector.nx,
                ny: self.detector.ny,
                efficiency: T::lit(self.detector.efficiency),
            },
            pump_phase: [T::lit(self.pump_phase_rad[0]), T::lit(self.pump_phase_rad[1])],
        })
    }

    /// Focal length (mm) of the first lens with the given name.
    pub fn focal_length_mm(&self, lens: &str) -> Option<f64> {
        self.arm_list().iter().flat_map(|(_, a)| a.elements.iter()).find_map(|e| match e {
            ElementConfig::Lens(l) if l.name == lens => Some(l.focal_length_mm),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_round_trip() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            let back = parse_setup_str(&cfg.canonical_json()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
        assert_ne!(preset("setup1").unwrap().hash(), preset("setup2").unwrap().hash());
    }

    #[test]
    fn unknown_preset_and_keys() {
        assert!(matches!(preset("setup3"), Err(Error::UnknownPreset(_))));
        let mut doc = setup_document("setup1").unwrap();
        doc["detector"]["pitch_mm"] = serde_json::json!(0.005);
        match parse_setup_value(doc) {
            Err(Error::Schema { path, message }) => {
                assert!(path.starts_with("detector"), "{path}");
                assert!(message.contains("pitch_mm"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn merge_patch_semantics() {
        let mut doc = serde_json::json!({"a": {"b": 1, "c": 2}, "d": [1, 2]});
        merge_patch(&mut doc, &serde_json::json!({"a": {"b": null, "c": 5}, "d": [3]}));
        assert_eq!(doc, serde_json::json!({"a": {"c": 5}, "d": [3]}));
    }
}
