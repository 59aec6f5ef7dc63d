use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{least_squares, FitOptions, Parameter};
use crate::spectrum::{check_strictly_increasing, SpectrumScan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Excitation {
    #[default]
    Resonant,
    AboveGap,
}

/// Photon counts per time bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transient {
    pub time_us: Vec<f64>,
    pub counts: Vec<f64>,
    /// Known constant background, if any; informational only.
    #[serde(default)]
    pub background: f64,
    #[serde(default)]
    pub excitation: Excitation,
}

impl Transient {
    pub fn new(time_us: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        let t = Self { time_us, counts, background: 0.0, excitation: Excitation::default() };
        t.validate()?;
        Ok(t)
    }

    pub fn with_excitation(mut self, excitation: Excitation) -> Self {
        self.excitation = excitation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_us.len() != self.counts.len() {
            return Err(Error::Data(format!("{} times but {} counts", self.time_us.len(), self.counts.len())));
        }
        if let Some(i) = self.counts.iter().position(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::Data(format!("counts must be finite and non-negative (index {i})")));
        }
        check_strictly_increasing(&self.time_us)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Mean bin width.
    pub fn bin_width(&self) -> f64 {
        match self.time_us.len() {
            0 | 1 => 1.0,
            n => (self.time_us[n - 1] - self.time_us[0]) / (n - 1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub tau_us: f64,
    pub sigma_us: f64,
    pub amplitude: f64,
    pub amplitude_sigma: f64,
    pub background: f64,
    pub chi_square: f64,
    pub iterations: usize,
    pub reference_subtracted: bool,
}

/// Fits `A exp(-(t - t0)/tau) + B` to a post-pulse decay, `t0` being the
/// first bin. With a reference the two curves are subtracted bin by bin
/// first.
///
/// Bin variances are `A exp(-t/tau) + v`, with `v` the scatter of the last
/// tenth of the bins, taken first from the starting guess and then from a
/// first fit. Neither term changes when a constant is added to the counts,
/// so `B` absorbs such an offset without moving `tau`.
pub fn fit_lifetime(t: &Transient, reference: Option<&Transient>) -> Result<LifetimeFit> {
    t.validate()?;
    if t.len() < 4 {
        return Err(Error::Data(format!("need at least 4 bins, got {}", t.len())));
    }
    let y: Vec<f64> = match reference {
        Some(r) => {
            r.validate()?;
            if r.time_us != t.time_us {
                return Err(Error::GridMismatch("reference transient uses a different time grid".into()));
            }
            t.counts.iter().zip(&r.counts).map(|(a, b)| a - b).collect()
        }
        None => t.counts.clone(),
    };
    let t0 = t.time_us[0];
    let x: Vec<f64> = t.time_us.iter().map(|v| v - t0).collect();
    let n = y.len();
    let tail = (n / 10).max(2);
    let b0 = y[n - tail..].iter().sum::<f64>() / tail as f64;
    let head = (n / 20).max(1);
    let a0 = y[..head].iter().sum::<f64>() / head as f64 - b0;
    if !(a0 > 0.0) {
        return Err(Error::NoDecay);
    }
    let tau0 = initial_tau(&x, &y, a0, b0);

    let tail_var = y[n - tail..].iter().map(|v| (v - b0).powi(2)).sum::<f64>() / (tail - 1) as f64;
    let floor = tail_var.max(1e-3 * a0);
    // Poisson-like variance of the decaying part above the background, plus
    // the scatter of the tail; both are unchanged by a constant offset.
    let sigmas =
        |a: f64, tau: f64| -> Vec<f64> { x.iter().map(|&v| (a.max(0.0) * (-v / tau).exp() + floor).sqrt()).collect() };
    let model =
        |p: &[f64], x: &[f64]| -> Result<Vec<f64>> { Ok(x.iter().map(|&v| p[0] * (-v / p[1]).exp() + p[2]).collect()) };
    let span = x[n - 1];
    let mut start = [a0, tau0, b0];
    let mut result = None;
    for _ in 0..2 {
        let data = SpectrumScan::new(x.clone(), y.clone())?.with_sigma(sigmas(start[0], start[1]))?;
        let params = [
            Parameter::new("amplitude", start[0]),
            Parameter::new("tau", start[1]).bounded(1e-6 * span, 1e3 * span),
            Parameter::new("background", start[2]).with_scale(a0),
        ];
        let r = match least_squares(&model, &data, &params, &FitOptions::default()) {
            Ok(r) => r.require_converged()?,
            Err(Error::RankDeficient { .. }) => return Err(Error::NoDecay),
            Err(e) => return Err(e),
        };
        start = [r.value("amplitude"), r.value("tau"), r.value("background")];
        if !(start[0] > 0.0) {
            return Err(Error::NoDecay);
        }
        result = Some(r);
    }
    let r = result.expect("two passes ran");
    let (a, sa) = (r.value("amplitude"), r.sigma("amplitude"));
    if !(a > 0.0) || a < 2.0 * sa {
        return Err(Error::NoDecay);
    }
    Ok(LifetimeFit {
        tau_us: r.value("tau"),
        sigma_us: r.sigma("tau"),
        amplitude: a,
        amplitude_sigma: sa,
        background: r.value("background"),
        chi_square: r.chi_square,
        iterations: r.iterations,
        reference_subtracted: reference.is_some(),
    })
}

/// Log-linear regression over the bins clearly above background.
fn initial_tau(x: &[f64], y: &[f64], a0: f64, b0: f64) -> f64 {
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let v = yi - b0;
        if v > 0.1 * a0 {
            let l = v.ln();
            n += 1.0;
            sx += xi;
            sy += l;
            sxx += xi * xi;
            sxy += xi * l;
        }
    }
    let span = x[x.len() - 1].max(f64::MIN_POSITIVE);
    let slope = if n >= 2.0 { (n * sxy - sx * sy) / (n * sxx - sx * sx) } else { f64::NAN };
    if slope.is_finite() && slope < 0.0 {
        (-1.0 / slope).clamp(1e-3 * span, span)
    } else {
        0.2 * span
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::linspace;
    use crate::synth::poisson_decay;
    use proptest::prelude::*;

    #[test]
    fn recovers_lifetime_within_three_sigma() {
        let times = linspace(0.0, 8.0, 200);
        for seed in 0..5 {
            let t = poisson_decay(&times, 0.96, 2000.0, 20.0, seed).unwrap();
            let f = fit_lifetime(&t, None).unwrap();
            assert!((f.tau_us - 0.96).abs() <= 3.0 * f.sigma_us, "{} +/- {}", f.tau_us, f.sigma_us);
        }
    }

    #[test]
    fn reference_subtraction_removes_scatter() {
        let times = linspace(0.0, 8.0, 200);
        // fast laser tail plus flat dark counts, identical in both curves
        let scatter = |t: f64| 50.0 + 800.0 * (-t / 0.15).exp();
        let clean: Vec<f64> = times.iter().map(|&t| scatter(t) + 3000.0 * (-t / 0.81).exp()).collect();
        let reference: Vec<f64> = times.iter().map(|&t| scatter(t)).collect();
        let data = Transient::new(times.clone(), clean).unwrap();
        let refr = Transient::new(times.clone(), reference).unwrap();
        let f = fit_lifetime(&data, Some(&refr)).unwrap();
        assert!((f.tau_us - 0.81).abs() < 1e-6, "{}", f.tau_us);
        assert!(f.reference_subtracted);
        let raw = fit_lifetime(&data, None).unwrap();
        assert!((raw.tau_us - 0.81).abs() > 0.01);
    }

    #[test]
    fn constant_signal_has_no_decay() {
        let times = linspace(0.0, 5.0, 50);
        let t = Transient::new(times, vec![100.0; 50]).unwrap();
        assert!(matches!(fit_lifetime(&t, None), Err(Error::NoDecay)));
    }

    #[test]
    fn rejects_bad_transients() {
        assert!(Transient::new(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(Transient::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        let a = Transient::new(linspace(0.0, 1.0, 20), vec![1.0; 20]).unwrap();
        let b = Transient::new(linspace(0.0, 2.0, 20), vec![1.0; 20]).unwrap();
        assert!(matches!(fit_lifetime(&a, Some(&b)), Err(Error::GridMismatch(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn background_is_absorbed(offset in 0.0f64..5000.0, tau in 0.3f64..2.0, seed in 0u64..100) {
            let times = linspace(0.0, 10.0, 120);
            let t = poisson_decay(&times, tau, 1500.0, 10.0, seed).unwrap();
            let shifted = Transient::new(times.clone(), t.counts.iter().map(|c| c + offset).collect()).unwrap();
            let a = fit_lifetime(&t, None).unwrap();
            let b = fit_lifetime(&shifted, None).unwrap();
            prop_assert!((a.tau_us - b.tau_us).abs() <= 1e-6 * a.tau_us, "{} {}", a.tau_us, b.tau_us);
            prop_assert!((b.background - a.background - offset).abs() <= 1e-5 * (offset + a.background.abs() + 1.0));
        }
    }
}
