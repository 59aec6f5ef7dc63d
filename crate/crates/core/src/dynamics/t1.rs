use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::Transient;
use crate::error::{Error, Result};
use crate::fit::{least_squares, FitOptions, Parameter};
use crate::rate::{interval_propagator, rate_matrix, DriveField, LevelScheme};
use crate::spectrum::SpectrumScan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Laser {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub laser: Laser,
    pub start_us: f64,
    pub duration_us: f64,
    /// Power while the pulse is on, in saturation units.
    pub on_power: f64,
    /// Fraction of `on_power` leaking while the laser is nominally off.
    pub extinction: f64,
    /// Record the excited population during this pulse.
    #[serde(default)]
    pub record: bool,
}

impl Pulse {
    fn end(&self) -> f64 {
        self.start_us + self.duration_us
    }
}

/// Time-ordered pulses of two lasers. Between pulses each laser keeps
/// emitting `on_power * extinction` of its own pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub pulses: Vec<Pulse>,
    /// Detuning of each laser (MHz) relative to the sub-ensemble centre.
    pub l1_mhz: f64,
    pub l2_mhz: f64,
}

impl PulseSequence {
    pub fn validate(&self) -> Result<()> {
        if self.pulses.is_empty() {
            return Err(Error::param("pulses", "sequence has no pulses"));
        }
        for (i, p) in self.pulses.iter().enumerate() {
            if !(p.start_us >= 0.0) || !(p.duration_us > 0.0) || !p.end().is_finite() {
                return Err(Error::param("pulses", format!("pulse {i} needs start >= 0 and duration > 0")));
            }
            if !(p.on_power >= 0.0) || !p.on_power.is_finite() {
                return Err(Error::param("on_power", format!("pulse {i} power must be non-negative")));
            }
            if !(0.0..1.0).contains(&p.extinction) {
                return Err(Error::param("extinction", format!("pulse {i} extinction must lie in [0, 1)")));
            }
            if i > 0 && p.start_us < self.pulses[i - 1].start_us {
                return Err(Error::param("pulses", "pulses must be ordered by start time"));
            }
            for q in &self.pulses[..i] {
                if q.laser == p.laser && p.start_us < q.end() {
                    return Err(Error::param(
                        "pulses",
                        format!("pulse {i} overlaps an earlier pulse of the same laser"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn end_us(&self) -> f64 {
        self.pulses.iter().map(|p| p.end()).fold(0.0, f64::max)
    }

    fn leak(&self, laser: Laser) -> f64 {
        self.pulses.iter().find(|p| p.laser == laser).map_or(0.0, |p| p.on_power * p.extinction)
    }

    fn power_at(&self, laser: Laser, t: f64) -> f64 {
        self.pulses
            .iter()
            .find(|p| p.laser == laser && p.start_us <= t && t < p.end())
            .map_or_else(|| self.leak(laser), |p| p.on_power)
    }

    fn drives_at(&self, t: f64) -> Result<[DriveField; 2]> {
        Ok([
            DriveField::pump(self.l1_mhz, self.power_at(Laser::L1, t))?,
            DriveField::pump(self.l2_mhz, self.power_at(Laser::L2, t))?,
        ])
    }
}

/// Initialize with laser 1, wait, read out with laser 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T1Protocol {
    pub init_us: f64,
    pub readout_us: f64,
    pub on_power: f64,
    pub extinction: f64,
    /// Width of the recorded time bins.
    pub bin_us: f64,
    /// Counts per bin per unit excited population.
    pub brightness: f64,
}

impl Default for T1Protocol {
    fn default() -> Self {
        Self { init_us: 600.0, readout_us: 400.0, on_power: 0.1, extinction: 1e-5, bin_us: 2.0, brightness: 1e4 }
    }
}

impl T1Protocol {
    /// One cycle; `dark_us = 0` gives the reference cycle.
    pub fn sequence(&self, l1_mhz: f64, l2_mhz: f64, dark_us: f64) -> PulseSequence {
        let pulse = |laser, start_us, duration_us, record| Pulse {
            laser,
            start_us,
            duration_us,
            on_power: self.on_power,
            extinction: self.extinction,
            record,
        };
        PulseSequence {
            pulses: vec![
                pulse(Laser::L1, 0.0, self.init_us, false),
                pulse(Laser::L2, self.init_us + dark_us, self.readout_us, true),
            ],
            l1_mhz,
            l2_mhz,
        }
    }
}

/// Laser frequencies (MHz) used by [`simulate_t1_sequence`]: resonant with
/// the first transition out of the first and the second ground level.
pub fn t1_lasers(scheme: &LevelScheme) -> Result<(f64, f64)> {
    let grounds: Vec<usize> = scheme.ground_indices().collect();
    if grounds.len() < 2 {
        return Err(Error::param("scheme", "T1 sequence needs at least two ground levels"));
    }
    let find = |g: usize| {
        scheme
            .transitions()
            .iter()
            .find(|t| t.ground == g)
            .map(|t| scheme.transition_frequency(t, 0.0))
            .ok_or_else(|| Error::param("scheme", format!("ground level {g} has no optical transition")))
    };
    Ok((find(grounds[0])?, find(grounds[1])?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Transients {
    pub data: Transient,
    pub reference: Transient,
    /// Largest deviation of the total population from 1 during either cycle.
    pub max_population_error: f64,
}

/// Runs `seq` on a single spectral class, with ground-level exchange at
/// `1/T1`. Records the excited population every `bin_us` during pulses
/// flagged `record`. Starts from the degeneracy-weighted ground state.
pub fn run_sequence(
    scheme: &LevelScheme,
    seq: &PulseSequence,
    t1_ms: f64,
    bin_us: f64,
    brightness: f64,
) -> Result<(Transient, f64)> {
    seq.validate()?;
    if !(t1_ms > 0.0) || !t1_ms.is_finite() {
        return Err(Error::param("t1", format!("must be positive, got {t1_ms}")));
    }
    if !(bin_us > 0.0) {
        return Err(Error::param("bin", "bin width must be positive"));
    }
    if scheme.ground_indices().count() < 2 {
        return Err(Error::param("scheme", "T1 sequence needs at least two ground levels"));
    }
    let relax = 1.0 / (t1_ms * 1e3);
    let mut edges: Vec<f64> = seq.pulses.iter().flat_map(|p| [p.start_us, p.end()]).collect();
    edges.push(0.0);
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let excited: Vec<usize> = (0..scheme.n_levels()).filter(|&i| scheme.is_excited(i)).collect();
    let mut state = DVector::from_vec(scheme.degeneracy_equilibrium());
    let mut max_err = 0f64;
    let (mut times, mut counts) = (Vec::new(), Vec::new());
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let m = rate_matrix(scheme, &seq.drives_at(mid)?, 0.0, relax);
        let recording = seq.pulses.iter().any(|p| p.record && p.start_us <= mid && mid < p.end());
        if recording {
            let n_bins = ((b - a) / bin_us).round().max(1.0) as usize;
            let width = (b - a) / n_bins as f64;
            let step = interval_propagator(&m, scheme.decay_rate(), width)?;
            // bin value: population at the bin centre
            let half = interval_propagator(&m, scheme.decay_rate(), 0.5 * width)?;
            for k in 0..n_bins {
                let t = a + (k as f64 + 0.5) * width;
                let centre = half.apply(&state);
                times.push(t - a);
                counts.push(brightness * excited.iter().map(|&i| centre[i]).sum::<f64>().max(0.0));
                state = step.apply(&state);
                max_err = max_err.max((state.sum() - 1.0).abs());
            }
        } else {
            state = interval_propagator(&m, scheme.decay_rate(), b - a)?.apply(&state);
            max_err = max_err.max((state.sum() - 1.0).abs());
        }
    }
    if times.is_empty() {
        return Err(Error::param("pulses", "no pulse is flagged for recording"));
    }
    Ok((Transient::new(times, counts)?, max_err))
}

/// Data cycle with `dark_time_ms` between initialization and readout, and the
/// reference cycle with none.
pub fn simulate_t1_sequence(
    scheme: &LevelScheme,
    protocol: &T1Protocol,
    t1_ms: f64,
    dark_time_ms: f64,
) -> Result<T1Transients> {
    if !(dark_time_ms >= 0.0) || !dark_time_ms.is_finite() {
        return Err(Error::param("dark_time", format!("must be non-negative, got {dark_time_ms}")));
    }
    let (l1, l2) = t1_lasers(scheme)?;
    let run = |dark_us| {
        run_sequence(scheme, &protocol.sequence(l1, l2, dark_us), t1_ms, protocol.bin_us, protocol.brightness)
    };
    let (data, e1) = run(dark_time_ms * 1e3)?;
    let (reference, e2) = run(0.0)?;
    Ok(T1Transients { data, reference, max_population_error: e1.max(e2) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationRatio {
    /// Ratio clipped to [0, 1.5].
    pub ratio: f64,
    pub raw: f64,
    pub clipped: bool,
}

/// Area above the steady level (mean of the last 20% of bins) times bin width.
pub fn readout_area(t: &Transient) -> Result<f64> {
    t.validate()?;
    if t.len() < 5 {
        return Err(Error::Data(format!("readout needs at least 5 bins, got {}", t.len())));
    }
    let tail = (t.len() / 5).max(1);
    let steady = t.counts[t.len() - tail..].iter().sum::<f64>() / tail as f64;
    Ok(t.counts.iter().map(|c| c - steady).sum::<f64>() * t.bin_width())
}

/// Ratio of the data and reference readout areas.
pub fn polarization_ratio(data: &Transient, reference: &Transient) -> Result<PolarizationRatio> {
    if data.len() != reference.len() {
        return Err(Error::GridMismatch(format!("readout windows differ: {} vs {} bins", data.len(), reference.len())));
    }
    let (a, r) = (readout_area(data)?, readout_area(reference)?);
    if r == 0.0 || !r.is_finite() {
        return Err(Error::Data("reference transient has zero area".into()));
    }
    let raw = a / r;
    let ratio = raw.clamp(0.0, 1.5);
    Ok(PolarizationRatio { ratio, raw, clipped: ratio != raw })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Fit {
    pub t1_ms: f64,
    pub sigma_ms: f64,
    pub chi_square: f64,
    pub iterations: usize,
}

/// Fits `0.5 + 0.5 exp(-t/T1)` to `(dark_time_ms, ratio)` points.
/// `sigma` gives per-point uncertainties; unit weights when absent.
pub fn fit_t1(points: &[(f64, f64)], sigma: Option<&[f64]>) -> Result<T1Fit> {
    if points.len() < 4 {
        return Err(Error::Data(format!("need at least 4 points, got {}", points.len())));
    }
    if let Some(i) = points.iter().position(|(t, r)| !(*t >= 0.0) || !t.is_finite() || !r.is_finite()) {
        return Err(Error::Data(format!("invalid point {i}")));
    }
    let t_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if t_max == 0.0 {
        return Err(Error::RankDeficient { combination: "T1 (all dark times are zero)".into() });
    }
    let times: Vec<f64> = points.iter().map(|p| p.0).collect();
    let x: Vec<f64> = (0..points.len()).map(|i| i as f64).collect();
    let mut data = SpectrumScan::new(x, points.iter().map(|p| p.1).collect())?;
    if let Some(s) = sigma {
        data = data.with_sigma(s.to_vec())?;
    }
    let model = |p: &[f64], x: &[f64]| -> Result<Vec<f64>> {
        Ok(x.iter().map(|&i| 0.5 + 0.5 * (-times[i as usize] / p[0]).exp()).collect())
    };
    // coarse log scan for the start
    let t_min = points.iter().map(|p| p.0).filter(|t| *t > 0.0).fold(f64::INFINITY, f64::min);
    let (lo, hi) = ((t_min * 0.1).ln(), (t_max * 100.0).ln());
    let mut best = (f64::INFINITY, t_max);
    for k in 0..=200 {
        let t1 = (lo + (hi - lo) * k as f64 / 200.0).exp();
        let m = model(&[t1], &data.detuning_mhz)?;
        let c: f64 = m.iter().enumerate().map(|(i, v)| ((data.signal[i] - v) / data.sigma_at(i)).powi(2)).sum();
        if c < best.0 {
            best = (c, t1);
        }
    }
    let params = [Parameter::new("t1", best.1).bounded(t_min * 1e-6, t_max * 1e6)];
    let r = least_squares(&model, &data, &params, &FitOptions::default())?.require_converged()?;
    Ok(T1Fit { t1_ms: r.value("t1"), sigma_ms: r.sigma("t1"), chi_square: r.chi_square, iterations: r.iterations })
}

/// Simulates a dark-time sweep and returns `(dark_time_ms, ratio)` points.
pub fn t1_sweep(
    scheme: &LevelScheme,
    protocol: &T1Protocol,
    t1_ms: f64,
    dark_times_ms: &[f64],
) -> Result<Vec<(f64, PolarizationRatio)>> {
    dark_times_ms
        .iter()
        .map(|&d| {
            let tr = simulate_t1_sequence(scheme, protocol, t1_ms, d)?;
            Ok((d, polarization_ratio(&tr.data, &tr.reference)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::ZeemanConfig;
    use crate::rate::{build_four_level, build_three_level};
    use crate::synth::normal_samples;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn at_field() -> LevelScheme {
        build_four_level(&ZeemanConfig::new(2.005, 0.91, 213.8).unwrap(), 600.0, 0.94).unwrap()
    }

    const DARK: [f64; 8] = [1.0, 5.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0];

    fn fitted_t1(extinction: f64) -> f64 {
        let protocol = T1Protocol { extinction, ..Default::default() };
        let sweep = t1_sweep(&at_field(), &protocol, 80.0, &DARK).unwrap();
        let pts: Vec<(f64, f64)> = sweep.iter().map(|(d, r)| (*d, r.ratio)).collect();
        fit_t1(&pts, None).unwrap().t1_ms
    }

    #[test]
    fn short_dark_time_keeps_polarization() {
        let p = T1Protocol { extinction: 0.0, ..Default::default() };
        let tr = simulate_t1_sequence(&at_field(), &p, 80.0, 1e-3).unwrap();
        let r = polarization_ratio(&tr.data, &tr.reference).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-3, "{r:?}");
        assert!(tr.max_population_error < 1e-8);
    }

    #[test]
    fn long_dark_time_depolarizes() {
        let p = T1Protocol { extinction: 0.0, ..Default::default() };
        let tr = simulate_t1_sequence(&at_field(), &p, 80.0, 2000.0).unwrap();
        let r = polarization_ratio(&tr.data, &tr.reference).unwrap();
        assert!((r.ratio - 0.5).abs() < 0.02, "{r:?}");
    }

    #[test]
    fn recovers_t1_and_leak_lowers_it() {
        let clean = fitted_t1(1e-5);
        assert!((clean - 80.0).abs() <= 0.2 * 80.0, "{clean}");
        let leaky = fitted_t1(1e-3);
        assert!(leaky < clean, "{leaky} vs {clean}");
    }

    #[test]
    fn three_level_scheme_also_runs() {
        let s = build_three_level((1, 2, 1), 3.848, 0.69, 0.94).unwrap();
        let p = T1Protocol { on_power: 0.5, ..Default::default() };
        let tr = simulate_t1_sequence(&s, &p, 10.0, 5.0).unwrap();
        assert!(tr.max_population_error < 1e-8);
        assert_eq!(tr.data.len(), tr.reference.len());
    }

    #[test]
    fn single_ground_level_rejected() {
        let s = LevelScheme::new(
            vec![
                crate::rate::Level { kind: crate::rate::LevelKind::Ground, degeneracy: 1, offset_mhz: 0.0 },
                crate::rate::Level { kind: crate::rate::LevelKind::Excited, degeneracy: 1, offset_mhz: 0.0 },
            ],
            vec![crate::rate::Transition { ground: 0, excited: 1, decay_rate: 1.0 }],
            1.0,
            1.0,
        )
        .unwrap();
        assert!(simulate_t1_sequence(&s, &T1Protocol::default(), 1.0, 1.0).is_err());
    }

    #[test]
    fn sequence_validation() {
        let mut s = T1Protocol::default().sequence(0.0, 0.0, 10.0);
        assert!(s.validate().is_ok());
        s.pulses[1].extinction = 1.0;
        assert!(s.validate().is_err());
        let mut s = T1Protocol::default().sequence(0.0, 0.0, 10.0);
        s.pulses[1].laser = Laser::L1;
        s.pulses[1].start_us = 100.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn ratio_basics() {
        let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let decay = |a: f64| -> Vec<f64> { t.iter().map(|x| 10.0 + a * (-x / 5.0).exp()).collect() };
        let r = Transient::new(t.clone(), decay(100.0)).unwrap();
        assert_relative_eq!(polarization_ratio(&r, &r).unwrap().ratio, 1.0);
        let half = Transient::new(t.clone(), decay(50.0)).unwrap();
        assert_relative_eq!(polarization_ratio(&half, &r).unwrap().ratio, 0.5, max_relative = 1e-12);
        let big = Transient::new(t.clone(), decay(500.0)).unwrap();
        let c = polarization_ratio(&big, &r).unwrap();
        assert!(c.clipped && c.ratio == 1.5);
        let flat = Transient::new(t.clone(), vec![3.0; 50]).unwrap();
        assert!(polarization_ratio(&r, &flat).is_err());
    }

    #[test]
    fn exact_t1_points() {
        let pts: Vec<(f64, f64)> = DARK.iter().map(|&d| (d, 0.5 + 0.5 * (-d / 80.0f64).exp())).collect();
        assert_relative_eq!(fit_t1(&pts, None).unwrap().t1_ms, 80.0, max_relative = 1e-7);
        assert!(fit_t1(&pts[..3], None).is_err());
    }

    #[test]
    fn noisy_t1_within_three_sigma() {
        let mut hits = 0;
        for seed in 0..20 {
            let noise = normal_samples(DARK.len(), 0.05, seed);
            let pts: Vec<(f64, f64)> =
                DARK.iter().zip(&noise).map(|(&d, n)| (d, 0.5 + 0.5 * (-d / 80.0f64).exp() + n)).collect();
            let f = fit_t1(&pts, Some(&[0.05; 8])).unwrap();
            if (f.t1_ms - 80.0).abs() <= 3.0 * f.sigma_ms {
                hits += 1;
            }
        }
        assert!(hits >= 18, "{hits}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn ratio_scale_invariant(c in 1e-3f64..1e3, a in 10.0f64..100.0) {
            let t: Vec<f64> = (0..40).map(|i| i as f64).collect();
            let d: Vec<f64> = t.iter().map(|x| 5.0 + a * (-x / 4.0).exp()).collect();
            let r: Vec<f64> = t.iter().map(|x| 5.0 + 100.0 * (-x / 4.0).exp()).collect();
            let base = polarization_ratio(&Transient::new(t.clone(), d.clone()).unwrap(), &Transient::new(t.clone(), r.clone()).unwrap()).unwrap();
            let ds = Transient::new(t.clone(), d.iter().map(|v| v * c).collect()).unwrap();
            let rs = Transient::new(t.clone(), r.iter().map(|v| v * c).collect()).unwrap();
            let scaled = polarization_ratio(&ds, &rs).unwrap();
            prop_assert!((base.raw - scaled.raw).abs() <= 1e-12 * base.raw.abs().max(1.0));
        }

        #[test]
        fn conserves_population(dark in 0.0f64..50.0, ext in 0.0f64..1e-2, t1 in 1.0f64..200.0) {
            let p = T1Protocol { extinction: ext, ..Default::default() };
            let tr = simulate_t1_sequence(&at_field(), &p, t1, dark).unwrap();
            prop_assert!(tr.max_population_error < 1e-8);
        }

        #[test]
        fn leak_never_raises_ratio(dark in 5.0f64..100.0, e1 in 0.0f64..1e-3, de in 1e-4f64..1e-2) {
            let s = at_field();
            let ratio = |ext: f64| {
                let p = T1Protocol { extinction: ext, ..Default::default() };
                let tr = simulate_t1_sequence(&s, &p, 80.0, dark).unwrap();
                polarization_ratio(&tr.data, &tr.reference).unwrap().raw
            };
            prop_assert!(ratio(e1 + de) <= ratio(e1) + 1e-9);
        }
    }
}
