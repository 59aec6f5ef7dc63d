use holeburn_core::dynamics::fit_lifetime;
use holeburn_core::holeburn::{extract_features, fit_saturation, hole_width, SaturationPoint};
use holeburn_core::io;
use holeburn_core::lineshape::LineProfile;
use holeburn_core::rate::{build_three_level, DriveField, HoleBurning, InhomogeneousModel};
use holeburn_core::spectrum::linspace;
use holeburn_core::synth::poisson_decay;

#[test]
fn simulated_scan_survives_csv_and_shows_anti_holes() {
    let scheme = build_three_level((1, 4, 3), 3.848, 0.69, 0.94).unwrap();
    let inhom = InhomogeneousModel::new(LineProfile::pseudo_voigt(33.0, 0.5).unwrap(), 0.0);
    let hb = HoleBurning::new(&scheme, inhom);
    let x = linspace(-8.0, 8.0, 161);
    let with = hb.spectrum(&DriveField::pump(0.0, 0.5).unwrap(), 0.1, &x).unwrap();
    let without = hb.spectrum(&DriveField::pump(0.0, 0.0).unwrap(), 0.1, &x).unwrap();
    let scan = with.subtract(&without).unwrap();

    let back = io::parse_scan(&io::format_scan(&scan)).unwrap();
    assert_eq!(back.signal, scan.signal);
    assert_eq!(io::format_scan(&back), io::format_scan(&scan));

    let f = extract_features(&back).unwrap();
    let f = f.found().expect("hole");
    assert!(f.hole_centre.abs() < 0.2);
    assert!(f.anti_hole_positions.iter().any(|p| (p - 3.848).abs() < 0.3), "{f:?}");
}

#[test]
fn saturation_series_through_csv() {
    let points: Vec<SaturationPoint> = [0.1, 0.5, 1.0, 4.0, 16.0]
        .iter()
        .map(|&p| SaturationPoint::new(p, hole_width(0.69, p, 0.8).unwrap(), 0.01).unwrap())
        .collect();
    let back = io::parse_saturation(&io::format_saturation(&points)).unwrap();
    assert_eq!(back, points);
    let fit = fit_saturation(&back).unwrap();
    assert!((fit.homogeneous_fwhm - 0.69).abs() < 1e-8);
    assert!((fit.p_sat - 0.8).abs() < 1e-7);
}

#[test]
fn transient_through_csv_fits_identically() {
    let t = poisson_decay(&linspace(0.0, 8.0, 200), 0.81, 2000.0, 20.0, 4).unwrap();
    let back = io::parse_transient(&io::format_transient(&t)).unwrap();
    let (a, b) = (fit_lifetime(&t, None).unwrap(), fit_lifetime(&back, None).unwrap());
    assert_eq!(a, b);
    assert!((a.tau_us - 0.81).abs() < 0.02);
}
