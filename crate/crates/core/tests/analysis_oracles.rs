mod common;

use qiup::analysis::{
    kernel_object_width, magnification_band, measure_magnification, resolution_limit, slit_features, slit_ratio,
    stripe_period, waist_sweep, write_sweep_csv, ResolutionOptions, RESOLUTION_THRESHOLD,
};
use qiup::config::{preset, with_overrides, SetupConfig};
use qiup::fastpath::FastPath;
use qiup::scene::{bar_target, ObjectMask, Transmission};
use qiup::Error;
use serde_json::json;
use std::f64::consts::PI;

fn gaussian_only(waist_um: f64) -> SetupConfig {
    let base = serde_json::to_value(preset("setup1").unwrap()).unwrap();
    with_overrides(base, &json!({"source": {"phase_matching": false}, "pump": {"waist_um": waist_um}})).unwrap()
}

/// Visibility of three slits seen through a Gaussian of width `sigma`,
/// integrated slit by slit.
fn quadrature_visibility(x: f64, d: f64, sigma: f64) -> f64 {
    let gl = common::gauss_legendre(20);
    let mut v = 0.0;
    for c in [-2.0 * d, 0.0, 2.0 * d] {
        let (a, b) = (c - d / 2.0, c + d / 2.0);
        let panels = 16;
        let h = (b - a) / panels as f64;
        for k in 0..panels {
            let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            for &(t, w) in &gl {
                let xp = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
                v += 0.5 * (hi - lo) * w * (-(xp - x).powi(2) / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    v / (sigma * (2.0 * PI).sqrt())
}

#[test]
fn slit_ratio_matches_one_dimensional_quadrature() {
    let cfg = gaussian_only(200.0);
    let fast: FastPath<f64> = cfg.fast_path().unwrap();
    let k_i = 2.0 * PI / 1550e-9;
    let sigma = 75e-3 / (k_i * 200e-6);
    assert!((kernel_object_width(&fast) - sigma).abs() < 0.01 * sigma);
    let g = &fast.geometry;
    let c = g.object_per_detector;
    let to_px = |x: f64| x / c / g.pitch + (g.nx / 2) as f64;
    for d in [90e-6, 128e-6, 160e-6, 250e-6] {
        let row: Vec<f64> =
            (0..g.nx).map(|p| quadrature_visibility(c * g.pitch * (p as f64 - (g.nx / 2) as f64), d, sigma)).collect();
        let mut centers = [to_px(-2.0 * d), to_px(0.0), to_px(2.0 * d)];
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let oracle = slit_features(&row, centers, d / (c.abs() * g.pitch));
        let got = slit_ratio(&fast, d, None);
        match (got, oracle) {
            (Ok(a), Ok(b)) => assert!((a.ratio - b.ratio).abs() < 1e-3, "d = {d}: {} vs {}", a.ratio, b.ratio),
            (Err(Error::FeatureNotFound(_)), Err(Error::FeatureNotFound(_))) => assert!(d < 100e-6),
            (a, b) => panic!("d = {d}: {a:?} vs {b:?}"),
        }
    }
}

#[test]
fn ratio_limits_for_wide_and_narrow_slits() {
    let fast: FastPath<f64> = preset("setup1").unwrap().fast_path().unwrap();
    let sigma = kernel_object_width(&fast);
    assert!(slit_ratio(&fast, 5.0 * sigma, None).unwrap().ratio < 0.1);
    match slit_ratio(&fast, 0.2 * sigma, None) {
        Err(Error::FeatureNotFound(_)) => {}
        Ok(r) => assert!(r.ratio > 0.98, "{}", r.ratio),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn resolution_limit_converges_on_the_threshold() {
    let cfg = preset("setup1").unwrap().with_waist_um(200.0).unwrap();
    let fast: FastPath<f64> = cfg.fast_path().unwrap();
    for deconvolution in [None, Some(50)] {
        let opts = ResolutionOptions { deconvolution, ..Default::default() };
        let r = resolution_limit(&fast, 200e-6, &opts).unwrap();
        assert!((r.ratio_at_limit - RESOLUTION_THRESHOLD).abs() < 1e-3);
        assert_eq!(r.deconvolved, deconvolution.is_some());
        let at = slit_ratio(&fast, r.d_limit, deconvolution).unwrap().ratio;
        assert_eq!(at, r.ratio_at_limit);
        assert!(r.trace.iter().all(|s| s.ratio.is_none_or(|x| (0.0..=1.0).contains(&x.ratio))));
    }
    let again = resolution_limit(&fast, 200e-6, &ResolutionOptions::default()).unwrap();
    assert_eq!(again, resolution_limit(&fast, 200e-6, &ResolutionOptions::default()).unwrap());
}

#[test]
fn missing_crossing_is_reported() {
    let fast: FastPath<f64> = preset("setup1").unwrap().fast_path().unwrap();
    let opts = ResolutionOptions { bracket_widths: (4.0, 6.0), ..Default::default() };
    assert!(matches!(resolution_limit(&fast, 300e-6, &opts), Err(Error::NoBracket { .. })));
}

#[test]
fn waist_curves_are_ordered() {
    let waists = [100e-6, 150e-6, 250e-6, 400e-6];
    let sweep = |name: &str, deconvolution| {
        let base = preset(name).unwrap();
        let opts = ResolutionOptions { deconvolution, ..Default::default() };
        waist_sweep(&waists, &opts, |w| base.with_waist_um(w * 1e6)?.fast_path())
            .into_iter()
            .map(|r| r.unwrap().d_limit)
            .collect::<Vec<f64>>()
    };
    let s1 = sweep("setup1", None);
    let s1d = sweep("setup1", Some(50));
    let s2 = sweep("setup2", None);
    assert!(s1.windows(2).all(|w| w[0] > w[1]), "{s1:?}");
    assert!(s2.windows(2).all(|w| w[0] > w[1]), "{s2:?}");
    for i in 0..waists.len() {
        assert!(s2[i] < s1[i]);
        assert!(s1d[i] < s1[i]);
    }
}

#[test]
fn sweep_csv_lists_every_point() {
    let base = preset("setup2").unwrap();
    let waists = [200e-6, -1.0];
    let results = waist_sweep(&waists, &ResolutionOptions::default(), |w| base.with_waist_um(w * 1e6)?.fast_path());
    assert!(results[0].is_ok() && results[1].is_err());
    let paired: Vec<(f64, _)> = waists.iter().copied().zip(results).collect();
    let dir = tempfile::tempdir().unwrap();
    let csv = write_sweep_csv(dir.path(), "sweep", &paired, false).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "waist_um,d_limit_um,deconvolved,R_trace_file");
    assert_eq!(lines.len(), 3);
    let trace = lines[1].split(',').nth(3).unwrap();
    assert!(dir.path().join(trace).exists());
    assert_eq!(lines[2].split(',').nth(1), Some(""));
}

#[test]
fn fast_magnification_measurement() {
    for (name, want) in [("setup1", 1.045), ("setup2", 2.159)] {
        let cfg = preset(name).unwrap();
        let setup = cfg.build::<f64>().unwrap();
        let fast = FastPath::new(&setup, &cfg.kernel(&setup).unwrap()).unwrap();
        let band = magnification_band(&setup);
        let v = fast.convolve(&bar_target(), Some(band)).unwrap();
        let m = measure_magnification(&v.values, band, setup.detector.pitch, setup.detector.nx / 2).unwrap();
        assert!((m - want).abs() < 0.005, "{name}: {m}");
    }
}

#[test]
fn stripe_period_of_a_shifted_idler_lens() {
    let cfg = preset("setup1").unwrap().with_lens_shift_um("L_i1", [300.0, 0.0]).unwrap();
    let setup = cfg.build::<f64>().unwrap();
    let fast = FastPath::new(&setup, &cfg.kernel(&setup).unwrap()).unwrap();
    let open = ObjectMask::uniform(1.0, 1.0, Transmission::open());
    let v = fast.shift_variant(&open, Some(qiup::Region::new(0, 500, 1000, 1))).unwrap();
    let period = stripe_period(v.values.row(0), 20.0, 400.0).unwrap() * 5e-6;
    let want = setup.magnification() * 75e-3 * 1550e-9 / 300e-6;
    assert!((period - want).abs() < 0.02 * want, "{period} vs {want}");
    let vmax = v.values.as_slice().iter().fold(0.0f64, |a, &b| a.max(b));
    assert!(vmax < 1.0 && vmax > 0.5);
}
