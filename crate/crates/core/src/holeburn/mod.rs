//! Power-broadened hole widths, saturation fits and feature extraction.

mod family;

pub use family::{SpectrumFamily, SPECTRUM_PARAMS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{least_squares, FitOptions, Parameter};
use crate::spectrum::SpectrumScan;

/// Full width of a burnt hole:
/// `hom * (1 + sqrt(1 + p_total / p_sat))`.
pub fn hole_width(homogeneous_fwhm: f64, p_total: f64, p_sat: f64) -> Result<f64> {
    if !(homogeneous_fwhm > 0.0) || !homogeneous_fwhm.is_finite() {
        return Err(Error::param("homogeneous_fwhm", format!("must be positive, got {homogeneous_fwhm}")));
    }
    if !(p_sat > 0.0) || !p_sat.is_finite() {
        return Err(Error::param("p_sat", format!("must be positive, got {p_sat}")));
    }
    if !(p_total >= 0.0) || !p_total.is_finite() {
        return Err(Error::param("p_total", format!("must be non-negative, got {p_total}")));
    }
    Ok(width_unchecked(homogeneous_fwhm, p_total, p_sat))
}

fn width_unchecked(hom: f64, p: f64, p_sat: f64) -> f64 {
    hom * (1.0 + (1.0 + p / p_sat).sqrt())
}

/// Homogeneous linewidth implied by one measured hole width.
pub fn invert_hole_width(hole_fwhm: f64, p_total: f64, p_sat: f64) -> Result<f64> {
    Ok(hole_fwhm / hole_width(1.0, p_total, p_sat)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationPoint {
    /// Pump plus probe power, in any unit shared by all points.
    pub total_power: f64,
    pub hole_fwhm: f64,
    pub sigma: f64,
}

impl SaturationPoint {
    pub fn new(total_power: f64, hole_fwhm: f64, sigma: f64) -> Result<Self> {
        let p = Self { total_power, hole_fwhm, sigma };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.total_power >= 0.0) || !self.total_power.is_finite() {
            return Err(Error::Data(format!("power must be non-negative, got {}", self.total_power)));
        }
        if !(self.hole_fwhm > 0.0) || !self.hole_fwhm.is_finite() {
            return Err(Error::Data(format!("hole width must be positive, got {}", self.hole_fwhm)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Data(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointLinewidth {
    pub total_power: f64,
    /// Half the measured hole width.
    pub half_hole_width: f64,
    /// The measured width inverted through the fitted saturation power.
    pub homogeneous_fwhm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub homogeneous_fwhm: f64,
    pub homogeneous_sigma: f64,
    pub p_sat: f64,
    pub p_sat_sigma: f64,
    /// 2x2 covariance of (homogeneous_fwhm, p_sat).
    pub covariance: [[f64; 2]; 2],
    pub chi_square: f64,
    pub iterations: usize,
    pub points: Vec<PointLinewidth>,
    pub warnings: Vec<String>,
}

/// Weighted fit of [`hole_width`] to a power series. The starting point
/// scans `p_sat` on a logarithmic grid with the width scale solved in closed
/// form at each trial.
pub fn fit_saturation(points: &[SaturationPoint]) -> Result<SaturationFit> {
    fit_saturation_with(points, &FitOptions::default())
}

pub fn fit_saturation_with(points: &[SaturationPoint], opts: &FitOptions) -> Result<SaturationFit> {
    if points.len() < 2 {
        return Err(Error::Data(format!("need at least 2 points, got {}", points.len())));
    }
    for p in points {
        p.validate()?;
    }
    let mut warnings = Vec::new();
    if points.len() < 3 {
        warnings.push(format!("only {} points; at least 3 recommended", points.len()));
    }
    let positive: Vec<f64> = points.iter().map(|p| p.total_power).filter(|p| *p > 0.0).collect();
    let (p_min, p_max) = positive.iter().fold((f64::INFINITY, 0f64), |(a, b), &p| (a.min(p), b.max(p)));
    if p_max == 0.0 || points.iter().all(|p| p.total_power == points[0].total_power) {
        return Err(Error::RankDeficient {
            combination: "homogeneous_fwhm and p_sat (all points share one power)".into(),
        });
    }
    if p_max / p_min < 10.0 && positive.len() == points.len() {
        warnings.push(format!("powers span only {:.2} decades", (p_max / p_min).log10()));
    }

    let (hom0, psat0) = initial_guess(points, p_min, p_max);
    let x: Vec<f64> = (0..points.len()).map(|i| i as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.hole_fwhm).collect();
    let data = SpectrumScan::new(x, y)?.with_sigma(points.iter().map(|p| p.sigma).collect())?;
    let powers: Vec<f64> = points.iter().map(|p| p.total_power).collect();
    let model = |q: &[f64], x: &[f64]| -> Result<Vec<f64>> {
        Ok(x.iter().map(|&i| width_unchecked(q[0], powers[i as usize], q[1])).collect())
    };
    let params = [
        Parameter::new("homogeneous_fwhm", hom0).bounded(0.0, f64::INFINITY),
        Parameter::new("p_sat", psat0).bounded(p_min * 1e-12, f64::INFINITY),
    ];
    let r = least_squares(&model, &data, &params, opts)?.require_converged()?;
    let (hom, p_sat) = (r.value("homogeneous_fwhm"), r.value("p_sat"));
    let per_point = points
        .iter()
        .map(|p| PointLinewidth {
            total_power: p.total_power,
            half_hole_width: 0.5 * p.hole_fwhm,
            homogeneous_fwhm: p.hole_fwhm / width_unchecked(1.0, p.total_power, p_sat),
        })
        .collect();
    Ok(SaturationFit {
        homogeneous_fwhm: hom,
        homogeneous_sigma: r.sigma("homogeneous_fwhm"),
        p_sat,
        p_sat_sigma: r.sigma("p_sat"),
        covariance: [[r.covariance[0][0], r.covariance[0][1]], [r.covariance[1][0], r.covariance[1][1]]],
        chi_square: r.chi_square,
        iterations: r.iterations,
        points: per_point,
        warnings,
    })
}

fn initial_guess(points: &[SaturationPoint], p_min: f64, p_max: f64) -> (f64, f64) {
    let (lo, hi) = ((p_min * 1e-2).ln(), (p_max * 1e2).ln());
    let mut best = (f64::INFINITY, 1.0, p_max);
    for k in 0..=120 {
        let p_sat = (lo + (hi - lo) * k as f64 / 120.0).exp();
        let (mut num, mut den) = (0.0, 0.0);
        for p in points {
            let g = width_unchecked(1.0, p.total_power, p_sat);
            let w = p.sigma.powi(-2);
            num += w * g * p.hole_fwhm;
            den += w * g * g;
        }
        let hom = num / den;
        let chi2: f64 = points
            .iter()
            .map(|p| ((p.hole_fwhm - hom * width_unchecked(1.0, p.total_power, p_sat)) / p.sigma).powi(2))
            .sum();
        if chi2 < best.0 {
            best = (chi2, hom, p_sat);
        }
    }
    (best.1, best.2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleFeatures {
    pub hole_centre: f64,
    pub hole_fwhm: f64,
    pub hole_depth: f64,
    pub anti_hole_positions: Vec<f64>,
    pub anti_hole_amplitudes: Vec<f64>,
    /// Level the depth and amplitudes are measured from.
    pub baseline: f64,
    /// Robust noise estimate (scaled median absolute deviation).
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FeatureResult {
    Found(HoleFeatures),
    NoFeature { reason: String },
}

impl FeatureResult {
    pub fn found(&self) -> Option<&HoleFeatures> {
        match self {
            FeatureResult::Found(f) => Some(f),
            FeatureResult::NoFeature { .. } => None,
        }
    }
}

pub const MIN_FEATURE_POINTS: usize = 15;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Vertex abscissa of the parabola through three points around `i`.
fn refine_extremum(x: &[f64], y: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= x.len() {
        return x[i];
    }
    let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
    let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if curv == 0.0 {
        return x1;
    }
    let v = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
    v.clamp(x0, x2)
}

/// Height of the plateau `y[i..=j]` above the higher of the lowest points
/// separating it from taller data (or the scan edge) on either side.
fn prominence(y: &[f64], i: usize, j: usize) -> f64 {
    let top = y[i];
    let mut left_min = top;
    for k in (0..i).rev() {
        if y[k] > top {
            break;
        }
        left_min = left_min.min(y[k]);
    }
    let mut right_min = top;
    for &v in &y[j + 1..] {
        if v > top {
            break;
        }
        right_min = right_min.min(v);
    }
    top - left_min.max(right_min)
}

fn crossing(x: &[f64], y: &[f64], i: usize, j: usize, level: f64) -> f64 {
    let t = (level - y[i]) / (y[j] - y[i]);
    x[i] + t * (x[j] - x[i])
}

/// Locates the deepest dip and the bumps that stand out of the noise.
///
/// The baseline is the median of the outer tenth of the scan on each side.
/// Noise is `1.4826 * MAD` of the second differences divided by `sqrt(6)`,
/// which ignores features that are smooth on the grid scale. Anti-holes are
/// local maxima above `baseline + t` whose prominence also exceeds `t`, with
/// `t = max(3 noise, 2% of the peak-to-peak range)`.
pub fn extract_features(scan: &SpectrumScan) -> Result<FeatureResult> {
    scan.validate()?;
    let n = scan.len();
    if n < MIN_FEATURE_POINTS {
        return Err(Error::Data(format!("need at least {MIN_FEATURE_POINTS} points, got {n}")));
    }
    let (x, y) = (&scan.detuning_mhz, &scan.signal);
    let edge = (n / 10).max(3);
    let mut outer: Vec<f64> = y[..edge].iter().chain(&y[n - edge..]).copied().collect();
    let baseline = median(&mut outer);
    let mut d2: Vec<f64> = y.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect();
    let m = median(&mut d2.clone());
    for v in d2.iter_mut() {
        *v = (*v - m).abs();
    }
    let noise = 1.4826 * median(&mut d2) / 6f64.sqrt();
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let threshold = (3.0 * noise).max(0.02 * (hi - lo));

    let no = |reason: &str| Ok(FeatureResult::NoFeature { reason: reason.into() });
    if hi == lo {
        return no("flat scan");
    }
    let monotone = y.windows(2).all(|w| w[1] >= w[0]) || y.windows(2).all(|w| w[1] <= w[0]);
    if monotone {
        return no("monotone scan");
    }
    let imin = (0..n).min_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
    let depth = baseline - y[imin];
    if imin == 0 || imin == n - 1 {
        return no("minimum lies on the scan edge");
    }
    if depth <= threshold {
        return no("no dip below the noise threshold");
    }
    let half = baseline - 0.5 * depth;
    let left = (0..imin).rev().find(|&i| y[i] >= half).map(|i| crossing(x, y, i, i + 1, half));
    let right = (imin + 1..n).find(|&i| y[i] >= half).map(|i| crossing(x, y, i - 1, i, half));
    let centre = refine_extremum(x, y, imin);
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (centre - l),
        (None, Some(r)) => 2.0 * (r - centre),
        (None, None) => return no("hole wider than the scan"),
    };

    let level = baseline + threshold;
    let mut positions = Vec::new();
    let mut amplitudes = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        // collapse plateaus so that mirrored scans see the same maxima
        let mut j = i;
        while j + 1 < n && y[j + 1] == y[i] {
            j += 1;
        }
        let is_max = y[i - 1] < y[i] && j + 1 < n && y[j + 1] < y[i];
        if is_max && y[i] > level && prominence(y, i, j) > threshold {
            let at = if i == j { refine_extremum(x, y, i) } else { 0.5 * (x[i] + x[j]) };
            positions.push(at);
            amplitudes.push(y[i] - baseline);
        }
        i = j + 1;
    }
    Ok(FeatureResult::Found(HoleFeatures {
        hole_centre: centre,
        hole_fwhm: fwhm,
        hole_depth: depth,
        anti_hole_positions: positions,
        anti_hole_amplitudes: amplitudes,
        baseline,
        noise,
    }))
}
