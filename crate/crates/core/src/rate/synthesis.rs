//! Hole-burning spectra: steady excited population integrated over the
//! inhomogeneous distribution of sub-ensemble shifts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lineshape::LineProfile;
use crate::rate::scheme::LevelScheme;
use crate::rate::solve::{steady_excited, DriveField, DriveRole};
use crate::spectrum::{check_strictly_increasing, Metadata, SpectrumScan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InhomogeneousModel {
    pub profile: LineProfile,
    pub centre_mhz: f64,
}

impl InhomogeneousModel {
    pub fn new(profile: LineProfile, centre_mhz: f64) -> Self {
        Self { profile, centre_mhz }
    }

    pub fn fwhm(&self) -> f64 {
        self.profile.fwhm()
    }
}

/// Trapezoidal rule on a uniform grid of `centre +- half_width_fwhm * fwhm`,
/// doubled until successive estimates agree to `rel_tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub half_width_fwhm: f64,
    pub base_points: usize,
    pub rel_tol: f64,
    pub max_doublings: u32,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { half_width_fwhm: 5.0, base_points: 2001, rel_tol: 1e-4, max_doublings: 6 }
    }
}

impl Quadrature {
    pub fn points_at(&self, level: u32) -> usize {
        (self.base_points - 1) * (1usize << level) + 1
    }

    fn validate(&self) -> Result<()> {
        if self.base_points < 3 || self.base_points.is_multiple_of(2) {
            return Err(Error::param("base_points", "must be odd and at least 3"));
        }
        if !(self.half_width_fwhm > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::param("quadrature", "half width and tolerance must be positive"));
        }
        Ok(())
    }
}

/// Sample positions and profile-weighted trapezoid weights for one refinement
/// level. Level `l + 1` adds only the midpoints of level `l`.
struct Level {
    x: Vec<f64>,
    w: Vec<f64>,
}

struct Grid {
    start: f64,
    span: f64,
    base_intervals: usize,
    levels: Vec<Level>,
}

impl Grid {
    fn new(inhom: &InhomogeneousModel, q: &Quadrature, precompute: u32) -> Self {
        let half = q.half_width_fwhm * inhom.fwhm();
        let mut grid = Self {
            start: inhom.centre_mhz - half,
            span: 2.0 * half,
            base_intervals: q.base_points - 1,
            levels: Vec::new(),
        };
        for l in 0..=precompute {
            let level = grid.build_level(inhom, l);
            grid.levels.push(level);
        }
        grid
    }

    fn build_level(&self, inhom: &InhomogeneousModel, level: u32) -> Level {
        let intervals = self.base_intervals << level;
        let h = self.span / intervals as f64;
        let (x, w): (Vec<f64>, Vec<f64>) = if level == 0 {
            (0..=intervals)
                .map(|k| {
                    let x = self.start + k as f64 * h;
                    let end = if k == 0 || k == intervals { 0.5 } else { 1.0 };
                    (x, end * h * inhom.profile.value(x - inhom.centre_mhz))
                })
                .unzip()
        } else {
            (0..intervals / 2)
                .map(|k| {
                    let x = self.start + (2 * k + 1) as f64 * h;
                    (x, h * inhom.profile.value(x - inhom.centre_mhz))
                })
                .unzip()
        };
        Level { x, w }
    }
}

fn level_sum(level: &Level, f: &impl Fn(f64) -> f64) -> f64 {
    level.x.iter().zip(&level.w).map(|(&x, &w)| w * f(x)).sum()
}

/// Integrates `f` against the inhomogeneous profile on nested grids.
/// Each refinement halves the previous estimate's weights and adds midpoints.
fn integrate_adaptive(
    grid: &Grid,
    inhom: &InhomogeneousModel,
    q: &Quadrature,
    f: impl Fn(f64) -> f64,
) -> Result<(f64, u32)> {
    let mut estimate = level_sum(&grid.levels[0], &f);
    let mut change = f64::INFINITY;
    for l in 1..=q.max_doublings {
        let extra = match grid.levels.get(l as usize) {
            Some(level) => level_sum(level, &f),
            None => level_sum(&grid.build_level(inhom, l), &f),
        };
        let refined = 0.5 * estimate + extra;
        change = if refined != 0.0 { ((refined - estimate) / refined).abs() } else { (refined - estimate).abs() };
        estimate = refined;
        if change < q.rel_tol {
            return Ok((estimate, l));
        }
    }
    Err(Error::Integration { achieved: change, points: q.points_at(q.max_doublings) })
}

fn integrate_fixed(grid: &Grid, inhom: &InhomogeneousModel, level: u32, f: impl Fn(f64) -> f64) -> f64 {
    let mut estimate = level_sum(&grid.levels[0], &f);
    for l in 1..=level {
        let extra = match grid.levels.get(l as usize) {
            Some(lv) => level_sum(lv, &f),
            None => level_sum(&grid.build_level(inhom, l), &f),
        };
        estimate = 0.5 * estimate + extra;
    }
    estimate
}

/// Hole-burning spectrum synthesizer for one scheme and inhomogeneous line.
#[derive(Debug, Clone)]
pub struct HoleBurning<'a> {
    pub scheme: &'a LevelScheme,
    pub inhom: InhomogeneousModel,
    pub quadrature: Quadrature,
}

impl<'a> HoleBurning<'a> {
    pub fn new(scheme: &'a LevelScheme, inhom: InhomogeneousModel) -> Self {
        Self { scheme, inhom, quadrature: Quadrature::default() }
    }

    fn drives(pump: &DriveField, probe_power: f64, f_probe: f64) -> [DriveField; 2] {
        [*pump, DriveField { detuning_mhz: f_probe, power: probe_power, role: DriveRole::Probe }]
    }

    fn check(&self, pump: &DriveField, probe_power: f64, grid: &[f64]) -> Result<()> {
        self.quadrature.validate()?;
        check_strictly_increasing(grid)?;
        if grid.is_empty() {
            return Err(Error::Data("probe grid is empty".into()));
        }
        DriveField::pump(pump.detuning_mhz, pump.power)?;
        DriveField::probe(0.0, probe_power)?;
        Ok(())
    }

    /// Adaptive synthesis. Returns the scan and the deepest refinement level used.
    pub fn spectrum_with_level(
        &self,
        pump: &DriveField,
        probe_power: f64,
        probe_detunings: &[f64],
    ) -> Result<(SpectrumScan, u32)> {
        self.check(pump, probe_power, probe_detunings)?;
        let grid = Grid::new(&self.inhom, &self.quadrature, 1);
        let results: Vec<Result<(f64, u32)>> = map_points(probe_detunings, |fp| {
            let drives = Self::drives(pump, probe_power, fp);
            integrate_adaptive(&grid, &self.inhom, &self.quadrature, |x| steady_excited(self.scheme, &drives, x))
        });
        let mut signal = Vec::with_capacity(results.len());
        let mut deepest = 0;
        for r in results {
            let (v, l) = r?;
            signal.push(v);
            deepest = deepest.max(l);
        }
        Ok((self.wrap(pump, probe_power, probe_detunings, signal), deepest))
    }

    pub fn spectrum(&self, pump: &DriveField, probe_power: f64, probe_detunings: &[f64]) -> Result<SpectrumScan> {
        self.spectrum_with_level(pump, probe_power, probe_detunings).map(|(s, _)| s)
    }

    /// Synthesis on a fixed refinement level. The result is a smooth function
    /// of every model parameter, which is what finite-difference fitting needs.
    pub fn spectrum_fixed(
        &self,
        pump: &DriveField,
        probe_power: f64,
        probe_detunings: &[f64],
        level: u32,
    ) -> Result<SpectrumScan> {
        self.check(pump, probe_power, probe_detunings)?;
        let grid = Grid::new(&self.inhom, &self.quadrature, level.min(1));
        let signal = map_points(probe_detunings, |fp| {
            let drives = Self::drives(pump, probe_power, fp);
            integrate_fixed(&grid, &self.inhom, level, |x| steady_excited(self.scheme, &drives, x))
        });
        Ok(self.wrap(pump, probe_power, probe_detunings, signal))
    }

    fn wrap(&self, pump: &DriveField, probe_power: f64, grid: &[f64], signal: Vec<f64>) -> SpectrumScan {
        let mut metadata = Metadata::default();
        metadata.set(Metadata::PUMP_POWER, pump.power);
        metadata.set(Metadata::PROBE_POWER, probe_power);
        metadata.set(Metadata::PUMP_DETUNING_MHZ, pump.detuning_mhz);
        SpectrumScan { detuning_mhz: grid.to_vec(), signal, sigma: None, metadata }
    }
}

#[cfg(feature = "parallel")]
fn map_points<T: Send>(grid: &[f64], f: impl Fn(f64) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    grid.par_iter().map(|&x| f(x)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_points<T>(grid: &[f64], f: impl Fn(f64) -> T) -> Vec<T> {
    grid.iter().map(|&x| f(x)).collect()
}

/// Probe spectrum with the pump present: total excited population integrated
/// over the inhomogeneous line at each probe detuning.
pub fn hole_spectrum(
    scheme: &LevelScheme,
    pump: &DriveField,
    probe_power: f64,
    probe_detunings: &[f64],
    inhom: &InhomogeneousModel,
) -> Result<SpectrumScan> {
    HoleBurning::new(scheme, *inhom).spectrum(pump, probe_power, probe_detunings)
}

/// Weighted mean of scans sampled on identical grids.
pub fn average_scans(scans: &[(SpectrumScan, f64)]) -> Result<SpectrumScan> {
    let (first, _) = scans.first().ok_or_else(|| Error::Data("nothing to average".into()))?;
    if scans.iter().any(|(_, w)| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::param("weight", "weights must be positive"));
    }
    let total: f64 = scans.iter().map(|(_, w)| w).sum();
    let mut signal = vec![0.0; first.len()];
    for (scan, w) in scans {
        if scan.detuning_mhz != first.detuning_mhz {
            return Err(Error::GridMismatch("orientation spectra use different probe grids".into()));
        }
        for (acc, v) in signal.iter_mut().zip(&scan.signal) {
            *acc += w * v;
        }
    }
    for v in &mut signal {
        *v /= total;
    }
    Ok(SpectrumScan { detuning_mhz: first.detuning_mhz.clone(), signal, sigma: None, metadata: first.metadata.clone() })
}

/// Weighted average of hole spectra over orientation subsets.
pub fn orientation_average(
    schemes: &[(LevelScheme, f64)],
    pump: &DriveField,
    probe_power: f64,
    probe_detunings: &[f64],
    inhom: &InhomogeneousModel,
) -> Result<SpectrumScan> {
    let scans = schemes
        .iter()
        .map(|(s, w)| Ok((hole_spectrum(s, pump, probe_power, probe_detunings, inhom)?, *w)))
        .collect::<Result<Vec<_>>>()?;
    average_scans(&scans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::ZeemanConfig;
    use crate::rate::scheme::{build_four_level, build_three_level};
    use crate::spectrum::linspace;

    fn inhom(fwhm: f64, mix: f64) -> InhomogeneousModel {
        InhomogeneousModel::new(LineProfile::pseudo_voigt(fwhm, mix).unwrap(), 0.0)
    }

    fn argmin(v: &[f64]) -> usize {
        (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
    }

    /// Pump-induced change and the level it settles to far from the pump.
    fn pump_induced(s: &LevelScheme, pump: f64, probe: f64, grid: &[f64], i: &InhomogeneousModel) -> Vec<f64> {
        let with = hole_spectrum(s, &DriveField::pump(0.0, pump).unwrap(), probe, grid, i).unwrap();
        let without = hole_spectrum(s, &DriveField::pump(0.0, 0.0).unwrap(), probe, grid, i).unwrap();
        with.subtract(&without).unwrap().signal
    }

    #[test]
    fn degenerate_scheme_gives_symmetric_single_hole() {
        let s = build_three_level((1, 2, 1), 0.0, 1.0, 0.94).unwrap();
        let grid = linspace(-10.0, 10.0, 41);
        let scan = hole_spectrum(&s, &DriveField::pump(0.0, 1.0).unwrap(), 0.2, &grid, &inhom(30.0, 0.5)).unwrap();
        assert_eq!(argmin(&scan.signal), 20);
        for k in 0..20 {
            let (a, b) = (scan.signal[k], scan.signal[40 - k]);
            assert!((a - b).abs() <= 1e-6 * a.abs(), "{k}: {a} {b}");
        }
        // no anti-holes: the pump never adds signal beyond its far-detuned level
        let diff = pump_induced(&s, 1.0, 0.2, &grid, &inhom(30.0, 0.5));
        let far = diff[0].max(diff[40]);
        assert!(diff.iter().all(|v| *v <= far + 1e-12));
        assert_eq!(argmin(&diff), 20);
    }

    #[test]
    fn si28_scheme_shows_anti_holes_at_splitting() {
        let s = build_three_level((1, 4, 3), 3.848, 0.69, 0.94).unwrap();
        let grid = linspace(-8.0, 8.0, 161);
        let pump = DriveField::pump(0.0, 0.5).unwrap();
        let scan = hole_spectrum(&s, &pump, 0.1, &grid, &inhom(33.0, 0.5)).unwrap();
        let probe_only =
            hole_spectrum(&s, &DriveField::pump(0.0, 0.0).unwrap(), 0.1, &grid, &inhom(33.0, 0.5)).unwrap();
        let diff = scan.subtract(&probe_only).unwrap();
        let peak_left = (0..80).max_by(|&a, &b| diff.signal[a].total_cmp(&diff.signal[b])).unwrap();
        let peak_right = (81..161).max_by(|&a, &b| diff.signal[a].total_cmp(&diff.signal[b])).unwrap();
        assert!((grid[peak_left] + 3.848).abs() <= 0.1, "{}", grid[peak_left]);
        assert!((grid[peak_right] - 3.848).abs() <= 0.1, "{}", grid[peak_right]);
        assert!(diff.signal[peak_left] > 0.0 && diff.signal[peak_right] > 0.0);
    }

    #[test]
    fn single_orientation_average_is_identity() {
        let s = build_three_level((1, 4, 3), 3.848, 0.69, 0.94).unwrap();
        let grid = linspace(-6.0, 6.0, 13);
        let pump = DriveField::pump(0.0, 1.0).unwrap();
        let i = inhom(33.0, 0.3);
        let direct = hole_spectrum(&s, &pump, 0.1, &grid, &i).unwrap();
        let one = orientation_average(&[(s.clone(), 1.0)], &pump, 0.1, &grid, &i).unwrap();
        assert_eq!(direct.signal, one.signal);
        let two = orientation_average(&[(s.clone(), 4.0), (s, 8.0)], &pump, 0.1, &grid, &i).unwrap();
        for (a, b) in direct.signal.iter().zip(&two.signal) {
            assert!((a - b).abs() <= 1e-14 * a.abs());
        }
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = SpectrumScan::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        let b = SpectrumScan::new(vec![0.0, 2.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(average_scans(&[(a, 1.0), (b, 1.0)]), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn zero_field_four_level_reduces_to_one_hole() {
        let z = ZeemanConfig::new(2.005, 0.91, 0.0).unwrap();
        let s = build_four_level(&z, 600.0, 0.94).unwrap();
        let grid = linspace(-8000.0, 8000.0, 81);
        let diff = pump_induced(&s, 10.0, 0.3, &grid, &inhom(39.6e3, 1.0));
        assert_eq!(argmin(&diff), 40);
        let far = diff[0].max(diff[80]);
        assert!(diff.iter().all(|v| *v <= far + 1e-12));
    }

    #[test]
    fn fixed_level_matches_adaptive() {
        let s = build_three_level((1, 4, 3), 3.848, 0.69, 0.94).unwrap();
        let grid = linspace(-5.0, 5.0, 11);
        let pump = DriveField::pump(0.0, 1.0).unwrap();
        let hb = HoleBurning::new(&s, inhom(33.0, 0.5));
        let (adaptive, level) = hb.spectrum_with_level(&pump, 0.1, &grid).unwrap();
        let fixed = hb.spectrum_fixed(&pump, 0.1, &grid, level).unwrap();
        for (a, b) in adaptive.signal.iter().zip(&fixed.signal) {
            assert!((a - b).abs() <= 2e-4 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn unconverged_integral_reports_tolerance() {
        let s = build_three_level((1, 4, 3), 3.848, 0.69, 0.94).unwrap();
        let mut hb = HoleBurning::new(&s, inhom(33.0, 0.5));
        hb.quadrature = Quadrature { half_width_fwhm: 5.0, base_points: 3, rel_tol: 1e-12, max_doublings: 2 };
        let err = hb.spectrum(&DriveField::pump(0.0, 1.0).unwrap(), 0.1, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Integration { .. }));
    }
}
