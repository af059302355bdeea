use qiup::config::{parse_setup_str, parse_setup_value, preset, setup_document, with_overrides, ElementConfig};
use qiup::Error;
use serde_json::json;

#[test]
fn setup1_matches_the_published_parameters() {
    let c = preset("setup1").unwrap();
    assert_eq!(c.signal_wavelength_nm, 810.0);
    assert_eq!(c.idler_wavelength_nm, 1550.0);
    assert_eq!(c.crystal.poling_period_um, 9.675);
    assert_eq!(c.crystal.temperature_c, 85.0);
    assert_eq!(c.focal_length_mm("L_i1"), Some(75.0));
    assert_eq!(c.focal_length_mm("L_i2"), Some(75.0));
    assert_eq!(c.focal_length_mm("L_D1"), Some(150.0));
    assert_eq!(c.focal_length_mm("L_D2"), Some(150.0));
}

#[test]
fn setup2_matches_the_published_parameters() {
    let c = preset("setup2").unwrap();
    assert_eq!(c.signal_wavelength_nm, 842.0);
    assert_eq!(c.idler_wavelength_nm, 780.0);
    assert_eq!(c.crystal.poling_period_um, 5.33);
    assert_eq!(c.crystal.temperature_c, 75.0);
}

#[test]
fn missing_focal_length_names_the_key() {
    let mut doc = setup_document("setup1").unwrap();
    doc["arms"]["idler_to_object"]["elements"][1]["lens"].as_object_mut().unwrap().remove("focal_length_mm");
    match parse_setup_value(doc) {
        Err(Error::Schema { path, message }) => {
            assert!(path.starts_with("arms.idler_to_object.elements"), "{path}");
            assert!(message.contains("focal_length_mm"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_unit_key_is_a_schema_error() {
    let base = setup_document("setup1").unwrap();
    let err = with_overrides(base, &json!({"pump": {"waist_mm": 0.3}})).unwrap_err();
    match err {
        Error::Schema { path, message } => assert!(path.starts_with("pump") && message.contains("waist_mm")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn physical_bounds_report_paths() {
    let base = setup_document("setup1").unwrap();
    let cases = [
        (json!({"pump": {"waist_um": 0.0}}), "pump.waist_um"),
        (json!({"pump": {"waist_um": -5.0}}), "pump.waist_um"),
        (json!({"arms": {"signal2": {"transmittance": 1.5}}}), "arms.signal2.transmittance"),
        (json!({"detector": {"pitch_um": 0.0}}), "detector.pitch_um"),
        (json!({"pump": {"wavelength_nm": 600.0}}), "pump.wavelength_nm"),
        (json!({"kernel": {"samples": 100}}), "kernel.samples"),
    ];
    for (patch, want) in cases {
        match with_overrides(base.clone(), &patch) {
            Err(Error::Physics { path, .. }) => assert_eq!(path, want),
            other => panic!("{patch}: {other:?}"),
        }
    }
    let mut doc = base.clone();
    doc["arms"]["signal2"]["elements"][1]["lens"]["focal_length_mm"] = json!(0.0);
    assert!(matches!(parse_setup_value(doc), Err(Error::Physics { .. })));
}

#[test]
fn overrides_and_helpers_agree() {
    let base = setup_document("setup1").unwrap();
    let a = with_overrides(base, &json!({"pump": {"waist_um": 200.0}})).unwrap();
    let b = preset("setup1").unwrap().with_waist_um(200.0).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), preset("setup1").unwrap().hash());
    let shifted = preset("setup1").unwrap().with_lens_shift_um("L_i1", [300.0, 0.0]).unwrap();
    let lens = shifted.arms.idler_to_object.elements.iter().find_map(|e| match e {
        ElementConfig::Lens(l) => Some(l.clone()),
        _ => None,
    });
    assert_eq!(lens.unwrap().shift_um, [300.0, 0.0]);
    assert!(preset("setup1").unwrap().with_lens_shift_um("L_x", [1.0, 0.0]).is_err());
}

#[test]
fn serialization_round_trips_through_text() {
    for name in ["setup1", "setup2"] {
        let c = preset(name).unwrap().with_lens_shift_um("L_s1", [12.5, -3.0]).unwrap();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(parse_setup_str(&text).unwrap(), c);
    }
}

#[test]
fn file_setups_load_by_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("custom.json");
    let c = preset("setup2").unwrap().with_waist_um(150.0).unwrap();
    std::fs::write(&path, c.canonical_json()).unwrap();
    assert_eq!(qiup::config::parse_setup(path.to_str().unwrap()).unwrap(), c);
    assert!(matches!(qiup::config::parse_setup("setup9"), Err(Error::UnknownPreset(_))));
}
