use qiup::io::{parse_pgm, read_csv, read_pgm, write_csv, write_pgm, write_scaled_pgm};
use qiup::scene::{bar_target, load_mask, save_mask, ObjectMask};
use qiup::{Error, Grid};

#[test]
fn pgm_files_are_binary_16_bit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.pgm");
    let g = Grid::from_fn(3, 2, |x, y| (x * 1000 + y * 30000) as u16);
    write_pgm(&path, &g).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert!(bytes.starts_with(b"P5\n3 2\n65535\n"));
    assert_eq!(bytes.len(), b"P5\n3 2\n65535\n".len() + 12);
    // Big-endian samples.
    let body = &bytes[bytes.len() - 12..];
    assert_eq!(u16::from_be_bytes([body[2], body[3]]), 1000);
    let (back, maxval) = read_pgm(&path).unwrap();
    assert_eq!((back, maxval), (g, 65535));
    assert!(matches!(parse_pgm(b"P5\n1 1\n255\n\x01\x00"), Ok(_) | Err(_)));
    assert!(matches!(parse_pgm(b"P2\n1 1\n255\n1"), Err(Error::Parse(_))));
}

#[test]
fn scaled_pgm_records_its_scale() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.pgm");
    let g = Grid::from_fn(4, 4, |x, y| 100.0 + 10.0 * (x + y) as f64);
    let scale = write_scaled_pgm(&path, &g).unwrap();
    let (levels, _) = read_pgm(&path).unwrap();
    for (l, v) in levels.as_slice().iter().zip(g.as_slice()) {
        assert!((scale.decode(*l) - v).abs() <= 60.0 / 65535.0 + 1e-9);
    }
}

#[test]
fn csv_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.csv");
    let g = Grid::from_fn(5, 3, |x, y| (x as f64 + 0.1).sqrt() / (y as f64 + 3.0));
    write_csv(&path, &g).unwrap();
    assert_eq!(read_csv(&path).unwrap(), g);
}

#[test]
fn masks_round_trip_through_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let amp = dir.path().join("m.pgm");
    let phase = dir.path().join("p.pgm");
    let pixel = 20e-6;
    save_mask(&bar_target::<f64>(), &amp, Some(&phase), pixel).unwrap();
    let m: ObjectMask<f64> = load_mask(&amp, Some(&phase), pixel).unwrap();
    assert!((m.width - 4e-3).abs() < 1e-12);
    for p in [[0.0, 0.0], [0.0, 2e-4], [6e-4, 8e-4], [-1.5e-3, 1.5e-3]] {
        assert_eq!(m.sample(p).amplitude, bar_target::<f64>().sample(p).amplitude, "{p:?}");
        assert!(m.sample(p).phase.abs() < 1e-4);
    }
}
